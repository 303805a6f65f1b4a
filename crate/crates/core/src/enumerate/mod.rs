//! Enumeration of the halting programs of length at most `L` that halt
//! within `Tmax` steps, together with the undecided frontier.
//!
//! Every bit string of length `<= L` ends up in exactly one of five classes:
//! a halting record, an extension of a shorter decided string (excluded), not
//! a program (excluded), a complete program still running at the step cap,
//! or an extension of a live prefix of length exactly `L`. Because the
//! records, running strings and live prefixes are pairwise prefix-incomparable
//! their cylinders are disjoint, so their Kraft masses sum to at most one.

mod corpus_file;

pub use corpus_file::{load_corpus, read_corpus, save_corpus, write_corpus, CorpusError, LoadOptions};

use rayon::prelude::*;
use thiserror::Error;

use crate::bits::{BitString, MAX_BITS};
use crate::vm::{Execution, Machine, Program, RunOutcome, Token};

/// One halting program and its observables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HaltingRecord {
    pub bits: BitString,
    /// Runtime `t >= 1`, counting every executed token including HALT.
    pub steps: u64,
    pub output: u64,
}

impl HaltingRecord {
    /// Program length `V` in bits.
    #[inline]
    pub fn length(&self) -> u32 {
        self.bits.len()
    }

    /// Log runtime `E = log2 t`, in bits.
    #[inline]
    pub fn log_runtime(&self) -> f64 {
        (self.steps as f64).log2()
    }
}

/// A complete program that had not halted after `steps_so_far` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunningString {
    pub bits: BitString,
    pub steps_so_far: u64,
}

/// Decided and undecided state of the enumeration at caps `(L, Tmax)`.
///
/// All three collections are kept in length-lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSnapshot {
    machine_id: String,
    max_len: u32,
    max_steps: u64,
    records: Vec<HaltingRecord>,
    running: Vec<RunningString>,
    live_prefixes: Vec<BitString>,
}

/// Exact Kraft sum `numerator / 2^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicSum {
    pub numerator: u128,
    pub exponent: u32,
}

impl DyadicSum {
    pub fn is_at_most_one(&self) -> bool {
        self.numerator <= 1u128 << self.exponent
    }

    pub fn to_f64(&self) -> f64 {
        self.numerator as f64 / 2f64.powi(self.exponent as i32)
    }
}

impl CorpusSnapshot {
    /// Assembles a snapshot, sorting each collection into canonical order.
    pub fn new(
        machine_id: impl Into<String>,
        max_len: u32,
        max_steps: u64,
        mut records: Vec<HaltingRecord>,
        mut running: Vec<RunningString>,
        mut live_prefixes: Vec<BitString>,
    ) -> Self {
        records.sort_unstable_by_key(|r| r.bits);
        running.sort_unstable_by_key(|r| r.bits);
        live_prefixes.sort_unstable();
        CorpusSnapshot {
            machine_id: machine_id.into(),
            max_len,
            max_steps,
            records,
            running,
            live_prefixes,
        }
    }

    pub fn machine_id(&self) -> &str {
        &self.machine_id
    }

    /// The length cap `L`.
    pub fn max_len(&self) -> u32 {
        self.max_len
    }

    /// The step cap `Tmax`.
    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn records(&self) -> &[HaltingRecord] {
        &self.records
    }

    pub fn running(&self) -> &[RunningString] {
        &self.running
    }

    pub fn live_prefixes(&self) -> &[BitString] {
        &self.live_prefixes
    }

    pub fn record(&self, bits: &BitString) -> Option<&HaltingRecord> {
        self.records
            .binary_search_by_key(bits, |r| r.bits)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn records_with_output(&self, n: u64) -> impl Iterator<Item = &HaltingRecord> {
        self.records.iter().filter(move |r| r.output == n)
    }

    /// `sum 2^-|x|` over records, running strings and live prefixes.
    pub fn kraft_sum(&self) -> f64 {
        crate::summation::sum(self.all_strings().map(|b| 2f64.powi(-(b.len() as i32))))
    }

    /// The same Kraft sum in exact dyadic arithmetic.
    pub fn kraft_sum_exact(&self) -> DyadicSum {
        let exponent = self.all_strings().map(|b| b.len()).max().unwrap_or(0);
        let mut numerator = 0u128;
        for b in self.all_strings() {
            numerator = numerator
                .checked_add(1u128 << (exponent - b.len()))
                .expect("dyadic Kraft sum overflowed u128");
        }
        DyadicSum { numerator, exponent }
    }

    /// Checks that records, running strings and live prefixes are pairwise
    /// prefix-incomparable. Returns an offending pair otherwise.
    pub fn check_prefix_free(&self) -> Result<(), (BitString, BitString)> {
        let mut all: Vec<BitString> = self.all_strings().collect();
        // Lexicographic order with prefixes first: any prefix relation
        // appears between neighbours.
        all.sort_unstable_by_key(|b| (lex_key(b), b.len()));
        for w in all.windows(2) {
            if w[0].is_prefix_of(&w[1]) {
                return Err((w[0], w[1]));
            }
        }
        Ok(())
    }

    fn all_strings(&self) -> impl Iterator<Item = BitString> + '_ {
        self.records
            .iter()
            .map(|r| r.bits)
            .chain(self.running.iter().map(|r| r.bits))
            .chain(self.live_prefixes.iter().copied())
    }
}

fn lex_key(b: &BitString) -> u64 {
    if b.is_empty() {
        0
    } else {
        b.value() << (MAX_BITS - b.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerateError {
    #[error("{what} = {value} exceeds the configured limit of {limit}")]
    CapExceeded {
        what: &'static str,
        value: u64,
        limit: u64,
    },
    #[error("{what} must be at least {min}, got {value}")]
    BelowMinimum {
        what: &'static str,
        value: u64,
        min: u64,
    },
    #[error("failed to start worker pool: {0}")]
    ThreadPool(String),
}

/// Hard caps refusing runaway enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_len: u32,
    pub max_steps: u64,
    /// Largest `L` for the exhaustive oracle.
    pub brute_force_max_len: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_len: 30,
            max_steps: 1 << 32,
            brute_force_max_len: 24,
        }
    }
}

/// Default length cap for command-line enumeration.
pub const DEFAULT_MAX_LEN: u32 = 22;
/// Default step cap for command-line enumeration.
pub const DEFAULT_MAX_STEPS: u64 = 1 << 20;

/// Enumeration driver. `threads == 0` uses every available core.
#[derive(Debug, Clone, Default)]
pub struct Enumerator {
    machine: Machine,
    limits: Limits,
    threads: usize,
}

impl Enumerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn machine(mut self, machine: Machine) -> Self {
        self.machine = machine;
        self
    }

    pub fn limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    /// Prefix-tree enumeration, parallel over disjoint subtrees.
    pub fn dovetail(&self, max_len: u32, max_steps: u64) -> Result<CorpusSnapshot, EnumerateError> {
        check_min("L", max_len as u64, 1)?;
        check_min("Tmax", max_steps, 1)?;
        check_cap("L", max_len as u64, self.limits.max_len.min(MAX_BITS - 1) as u64)?;
        check_cap("Tmax", max_steps, self.limits.max_steps)?;

        let mut walker = Walker {
            machine: self.machine,
            max_len,
            max_steps,
            split_len: Some(max_len.saturating_sub(1).min(SPLIT_LEN)),
            tokens: Vec::new(),
        };
        let mut top = Frontier::default();
        let mut units = Vec::new();
        walker.walk(
            Node { prefix: BitString::EMPTY, depth: 0, broken: false },
            &mut top,
            &mut units,
        );

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| EnumerateError::ThreadPool(e.to_string()))?;
        let parts: Vec<Frontier> = pool.install(|| {
            units
                .into_par_iter()
                .map(|unit| {
                    let mut w = Walker {
                        machine: self.machine,
                        max_len,
                        max_steps,
                        split_len: None,
                        tokens: unit.tokens,
                    };
                    let mut out = Frontier::default();
                    w.walk(unit.node, &mut out, &mut Vec::new());
                    out
                })
                .collect()
        });
        for part in parts {
            top.records.extend(part.records);
            top.running.extend(part.running);
            top.live.extend(part.live);
        }
        Ok(CorpusSnapshot::new(
            self.machine.id(),
            max_len,
            max_steps,
            top.records,
            top.running,
            top.live,
        ))
    }

    /// Runs every bit string of length `<= L` independently. Test oracle.
    pub fn brute_force(&self, max_len: u32, max_steps: u64) -> Result<CorpusSnapshot, EnumerateError> {
        check_min("Tmax", max_steps, 1)?;
        check_cap("L", max_len as u64, self.limits.brute_force_max_len as u64)?;
        check_cap("Tmax", max_steps, self.limits.max_steps)?;

        let mut records = Vec::new();
        let mut running = Vec::new();
        let mut live = Vec::new();
        for len in 0..=max_len {
            for bits in BitString::all_of_len(len) {
                match self.machine.run(&bits, max_steps) {
                    RunOutcome::Halted { output, steps, .. } => {
                        records.push(HaltingRecord { bits, steps, output })
                    }
                    RunOutcome::StillRunning { steps_so_far } => {
                        running.push(RunningString { bits, steps_so_far })
                    }
                    RunOutcome::NeedsMoreBits { .. } if len == max_len => live.push(bits),
                    RunOutcome::NeedsMoreBits { .. } | RunOutcome::NotAProgram => {}
                }
            }
        }
        Ok(CorpusSnapshot::new(
            self.machine.id(),
            max_len,
            max_steps,
            records,
            running,
            live,
        ))
    }
}

/// Prefix-tree enumeration on the default machine.
pub fn dovetail_enumerate(
    max_len: u32,
    max_steps: u64,
    threads: usize,
) -> Result<CorpusSnapshot, EnumerateError> {
    Enumerator::new().threads(threads).dovetail(max_len, max_steps)
}

/// Exhaustive per-string oracle on the default machine.
pub fn brute_force_oracle(max_len: u32, max_steps: u64) -> Result<CorpusSnapshot, EnumerateError> {
    Enumerator::new().brute_force(max_len, max_steps)
}

fn check_cap(what: &'static str, value: u64, limit: u64) -> Result<(), EnumerateError> {
    if value > limit {
        Err(EnumerateError::CapExceeded { what, value, limit })
    } else {
        Ok(())
    }
}

fn check_min(what: &'static str, value: u64, min: u64) -> Result<(), EnumerateError> {
    if value < min {
        Err(EnumerateError::BelowMinimum { what, value, min })
    } else {
        Ok(())
    }
}

/// Subtrees rooted at this depth become parallel work units.
const SPLIT_LEN: u32 = 12;

/// Suffixes of length `r` (1..=3) that are proper prefixes of a codeword.
const PARTIAL_CODEWORDS: [&[u64]; 4] = [&[], &[0b0, 0b1], &[0b10, 0b11], &[0b111]];

#[derive(Default)]
struct Frontier {
    records: Vec<HaltingRecord>,
    running: Vec<RunningString>,
    live: Vec<BitString>,
}

/// A token-boundary node of the prefix tree with no HALT decoded yet.
#[derive(Clone, Copy)]
struct Node {
    prefix: BitString,
    /// Open WHILE count.
    depth: i64,
    /// A WEND appeared with no open WHILE.
    broken: bool,
}

struct WorkUnit {
    node: Node,
    tokens: Vec<Token>,
}

struct Walker {
    machine: Machine,
    max_len: u32,
    max_steps: u64,
    split_len: Option<u32>,
    /// Tokens decoded along the path to the current node.
    tokens: Vec<Token>,
}

impl Walker {
    fn walk(&mut self, node: Node, out: &mut Frontier, units: &mut Vec<WorkUnit>) {
        let pos = node.prefix.len();
        if let Some(split) = self.split_len {
            if pos >= split && pos > 0 {
                units.push(WorkUnit { node, tokens: self.tokens.clone() });
                return;
            }
        }
        let remaining = self.max_len - pos;
        if remaining <= 3 {
            for &suffix in PARTIAL_CODEWORDS[remaining as usize] {
                out.live.push(node.prefix.append(suffix, remaining));
            }
        }
        for token in Token::ALL {
            let (code, len) = token.codeword();
            if len > remaining {
                continue;
            }
            let child = node.prefix.append(code, len);
            if token == Token::Halt {
                if !node.broken && node.depth == 0 {
                    self.tokens.push(Token::Halt);
                    self.decide(child, out);
                    self.tokens.pop();
                }
                continue;
            }
            let (depth, broken) = match token {
                Token::While => (node.depth + 1, node.broken),
                Token::Wend => (node.depth - 1, node.broken || node.depth == 0),
                _ => (node.depth, node.broken),
            };
            if len == remaining {
                out.live.push(child);
            } else {
                self.tokens.push(token);
                self.walk(Node { prefix: child, depth, broken }, out, units);
                self.tokens.pop();
            }
        }
    }

    fn decide(&self, bits: BitString, out: &mut Frontier) {
        let program = Program::from_tokens(&self.tokens).expect("balanced by construction");
        match program.execute(self.max_steps, self.machine.register_cap) {
            Execution::Halted { output, steps } => {
                out.records.push(HaltingRecord { bits, steps, output })
            }
            Execution::Running { steps } => out.running.push(RunningString {
                bits,
                steps_so_far: steps,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    fn record_bits(c: &CorpusSnapshot) -> Vec<String> {
        c.records().iter().map(|r| r.bits.to_string()).collect()
    }

    #[test]
    fn small_corpora() {
        let c = dovetail_enumerate(4, 10, 1).unwrap();
        assert_eq!(
            c.records(),
            &[HaltingRecord { bits: bs("1111"), steps: 1, output: 0 }]
        );

        let c = dovetail_enumerate(6, 10, 1).unwrap();
        assert_eq!(record_bits(&c), ["1111", "001111", "011111"]);
        assert_eq!(c.record(&bs("001111")).unwrap().output, 1);
        assert_eq!(c.record(&bs("001111")).unwrap().steps, 2);
        assert_eq!(c.record(&bs("011111")).unwrap().output, 0);

        let c = dovetail_enumerate(1, 10, 1).unwrap();
        assert!(c.records().is_empty());
        assert_eq!(c.live_prefixes(), &[bs("0"), bs("1")]);
    }

    #[test]
    fn oracle_edge_cases() {
        let c = brute_force_oracle(0, 1).unwrap();
        assert!(c.records().is_empty());
        assert_eq!(c.live_prefixes(), &[BitString::EMPTY]);

        let c = brute_force_oracle(6, 1).unwrap();
        assert!(c.record(&bs("001111")).is_none());
        assert!(c.running().iter().any(|r| r.bits == bs("001111") && r.steps_so_far == 1));
    }

    #[test]
    fn dovetail_matches_oracle_small() {
        for len in 1..=10 {
            for steps in [1, 16, 256] {
                assert_eq!(
                    dovetail_enumerate(len, steps, 2).unwrap(),
                    brute_force_oracle(len, steps).unwrap(),
                    "L={len} Tmax={steps}"
                );
            }
        }
    }

    #[test]
    fn kraft_and_prefix_freeness() {
        for len in 0..=12 {
            let c = brute_force_oracle(len, 64).unwrap();
            assert!(c.kraft_sum() <= 1.0 + 1e-12);
            assert!(c.kraft_sum_exact().is_at_most_one());
            assert!(c.check_prefix_free().is_ok());
        }
        let c = brute_force_oracle(0, 1).unwrap();
        assert_eq!(c.kraft_sum_exact(), DyadicSum { numerator: 1, exponent: 0 });
    }

    #[test]
    fn prefix_check_detects_violation() {
        let c = CorpusSnapshot::new(
            "bitvm1",
            8,
            10,
            vec![HaltingRecord { bits: bs("1111"), steps: 1, output: 0 }],
            vec![],
            vec![bs("11110000")],
        );
        assert_eq!(c.check_prefix_free(), Err((bs("1111"), bs("11110000"))));
    }

    #[test]
    fn caps_are_enforced() {
        assert!(matches!(
            dovetail_enumerate(0, 10, 1),
            Err(EnumerateError::BelowMinimum { what: "L", .. })
        ));
        assert!(matches!(
            dovetail_enumerate(4, 0, 1),
            Err(EnumerateError::BelowMinimum { what: "Tmax", .. })
        ));
        assert!(matches!(
            dovetail_enumerate(31, 10, 1),
            Err(EnumerateError::CapExceeded { what: "L", .. })
        ));
        assert!(matches!(
            brute_force_oracle(25, 10),
            Err(EnumerateError::CapExceeded { what: "L", .. })
        ));
        let e = Enumerator::new().limits(Limits { max_steps: 100, ..Limits::default() });
        assert!(matches!(
            e.dovetail(8, 101),
            Err(EnumerateError::CapExceeded { what: "Tmax", .. })
        ));
    }

    #[test]
    fn records_rerun_identically() {
        let c = dovetail_enumerate(14, 256, 0).unwrap();
        for r in c.records() {
            assert_eq!(
                crate::vm::run(&r.bits, c.max_steps()),
                RunOutcome::Halted { output: r.output, steps: r.steps, consumed: r.length() }
            );
        }
    }
}

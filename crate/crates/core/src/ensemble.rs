//! Gibbs ensembles over a corpus of halting programs.
//!
//! Each record `x` has weight `exp(-β E(x) - γ V(x) - δ N(x))` where
//! `E = log2 t`, `V = |x|` and `N` is the output. On the certified region
//! `γ >= ln 2, β >= 0, δ >= 0` the full partition function is enclosed by
//! adding two tail bounds to the sum over records:
//!
//! * a running string `x` can only halt later, at `t > steps_so_far`, with
//!   length `|x|` and output `N >= 0`, so it contributes at most
//!   `exp(-β log2 steps_so_far - γ|x|)`;
//! * halting extensions of a live prefix `p` form a prefix-free set of
//!   strings of length `>= |p| + 1` with Kraft mass `<= 2^-|p|`, and
//!   `exp(-γ|x|) = 2^-|x| (2e^-γ)^|x|` with `2e^-γ <= 1`, so together they
//!   contribute at most `2^-|p| (2e^-γ)^(|p|+1)`.
//!
//! The endpoints are plain binary64 sums (compensated, canonical order); no
//! directed rounding is applied.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fmt;

use thiserror::Error;

use crate::enumerate::{CorpusSnapshot, HaltingRecord};
use crate::summation::{sum, CompensatedSum};

/// Relative tolerance of the internal `S = ln Z + βE + γV + δN` check.
pub const ENTROPY_IDENTITY_TOL: f64 = 1e-9;

/// Conjugate variables `(β, γ, δ)` of log runtime, length and output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl EnsembleParams {
    pub const fn new(beta: f64, gamma: f64, delta: f64) -> Self {
        EnsembleParams { beta, gamma, delta }
    }

    /// `(0, ln 2, 0)`, where the partition function is Chaitin's Ω.
    pub const fn omega() -> Self {
        EnsembleParams::new(0.0, LN_2, 0.0)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.beta, self.gamma, self.delta]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        EnsembleParams::new(a[0], a[1], a[2])
    }

    /// True where the partition function provably converges and enclosures
    /// are issued: `γ >= ln 2`, `β >= 0`, `δ >= 0`.
    pub fn is_certified(&self) -> bool {
        self.gamma >= LN_2
            && self.beta >= 0.0
            && self.delta >= 0.0
            && self.as_array().iter().all(|v| v.is_finite())
    }
}

impl fmt::Display for EnsembleParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(β={}, γ={}, δ={})", self.beta, self.gamma, self.delta)
    }
}

/// Algorithmic temperature, pressure and potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateReadout {
    pub temperature: f64,
    pub pressure: f64,
    pub potential: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionEnclosure {
    pub z_lo: f64,
    pub z_hi: f64,
    /// Bound on halting extensions of live prefixes.
    pub tail_unexplored: f64,
    /// Bound on running strings that may still halt.
    pub tail_running: f64,
}

impl PartitionEnclosure {
    pub fn width(&self) -> f64 {
        self.z_hi - self.z_lo
    }

    pub fn contains(&self, other: &PartitionEnclosure) -> bool {
        self.z_lo <= other.z_lo && other.z_hi <= self.z_hi
    }

    pub fn tails(&self) -> f64 {
        self.tail_unexplored + self.tail_running
    }
}

/// Lower bound on `Z` outside the certified region. Carries no upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertifiedBound {
    pub z_lo: f64,
    pub certified: bool,
}

/// Moments of the Gibbs measure restricted to the records of a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    pub mean_e: f64,
    pub mean_v: f64,
    pub mean_n: f64,
    pub var_e: f64,
    pub var_v: f64,
    pub var_n: f64,
    pub cov_ev: f64,
    pub cov_en: f64,
    pub cov_vn: f64,
    /// `-Σ p ln p` over the records, in nats.
    pub entropy_s: f64,
    /// Truncated partition sum `Σ_records weight`. May underflow; see `ln_z_trunc`.
    pub z_trunc: f64,
    pub ln_z_trunc: f64,
}

impl EnsembleStats {
    pub fn entropy_bits(&self) -> f64 {
        self.entropy_s / LN_2
    }

    pub fn means(&self) -> [f64; 3] {
        [self.mean_e, self.mean_v, self.mean_n]
    }

    /// Covariance matrix of `(E, V, N)`.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        [
            [self.var_e, self.cov_ev, self.cov_en],
            [self.cov_ev, self.var_v, self.cov_vn],
            [self.cov_en, self.cov_vn, self.var_n],
        ]
    }
}

/// Closed interval of reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error(
        "parameters {params} lie outside the certified region (γ >= ln 2, β >= 0, δ >= 0); \
         the partition function may diverge there. Uncertified lower bound: Z >= {lower_bound}"
    )]
    Uncertified { params: EnsembleParams, lower_bound: f64 },
    #[error("corpus has no halting records")]
    EmptyRecords,
    #[error("no halting records yet, so the partition function lower bound is 0")]
    NoInformation,
    #[error("measure masses sum to {total}, not 1")]
    NotProbability { total: f64 },
    #[error("measure has a negative or non-finite mass")]
    InvalidMass,
    #[error("p has mass on an outcome where q has none")]
    SupportViolation,
    #[error("entropy identity residual {residual:e} exceeds {ENTROPY_IDENTITY_TOL:e}")]
    EntropyIdentity { residual: f64 },
}

/// Log runtime, length and output as reals.
#[inline]
fn observables(r: &HaltingRecord) -> (f64, f64, f64) {
    (r.log_runtime(), r.length() as f64, r.output as f64)
}

/// `exp(-β log2 t - γ V - δ N)`.
///
/// The length factor is evaluated as `2^(-V γ/ln 2)`, which is exact
/// (a dyadic) at `γ = ln 2`.
pub fn weight(record: &HaltingRecord, params: &EnsembleParams) -> f64 {
    let (e, v, n) = observables(record);
    exp_runtime_output(params, e, n) * length_factor(params.gamma, v)
}

/// `-β log2 t - γ V - δ N`.
pub fn log_weight(record: &HaltingRecord, params: &EnsembleParams) -> f64 {
    let (e, v, n) = observables(record);
    -(params.beta * e + params.gamma * v + params.delta * n)
}

#[inline]
fn exp_runtime_output(params: &EnsembleParams, e: f64, n: f64) -> f64 {
    let x = params.beta * e + params.delta * n;
    if x == 0.0 {
        1.0
    } else {
        (-x).exp()
    }
}

#[inline]
fn length_factor(gamma: f64, len: f64) -> f64 {
    (-(gamma / LN_2) * len).exp2()
}

/// Tail bounds from the undecided part of the corpus.
fn tails(corpus: &CorpusSnapshot, params: &EnsembleParams) -> (f64, f64) {
    let g = params.gamma / LN_2;
    let unexplored = sum(corpus.live_prefixes().iter().map(|p| {
        let len = p.len() as f64;
        // 2^-|p| * (2e^-γ)^(|p|+1), capped by the Kraft mass 2^-|p|.
        (-len).exp2() * ((len + 1.0) * (1.0 - g)).exp2().min(1.0)
    }));
    let running = sum(corpus.running().iter().map(|r| {
        let e = (r.steps_so_far.max(1) as f64).log2();
        exp_runtime_output(params, e, 0.0) * length_factor(params.gamma, r.bits.len() as f64)
    }));
    (unexplored, running)
}

fn record_sum(corpus: &CorpusSnapshot, params: &EnsembleParams, filter: impl Fn(&HaltingRecord) -> bool) -> f64 {
    sum(corpus.records().iter().filter(|r| filter(r)).map(|r| weight(r, params)))
}

/// Certified enclosure of `Z(β, γ, δ)` at the corpus caps.
pub fn partition_enclosure(
    corpus: &CorpusSnapshot,
    params: &EnsembleParams,
) -> Result<PartitionEnclosure, EnsembleError> {
    if !params.is_certified() {
        return Err(EnsembleError::Uncertified {
            params: *params,
            lower_bound: partition_lower_bound(corpus, params).z_lo,
        });
    }
    let z_lo = record_sum(corpus, params, |_| true);
    let (tail_unexplored, tail_running) = tails(corpus, params);
    Ok(PartitionEnclosure {
        z_lo,
        z_hi: z_lo + tail_unexplored + tail_running,
        tail_unexplored,
        tail_running,
    })
}

/// The record sum, valid as a lower bound for any parameters. `certified`
/// reports whether an enclosure would have been issued.
pub fn partition_lower_bound(corpus: &CorpusSnapshot, params: &EnsembleParams) -> UncertifiedBound {
    UncertifiedBound {
        z_lo: record_sum(corpus, params, |_| true),
        certified: params.is_certified(),
    }
}

/// Observables of the records of a corpus, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct TruncatedEnsemble {
    log_runtime: Vec<f64>,
    length: Vec<f64>,
    output: Vec<f64>,
}

impl TruncatedEnsemble {
    pub fn from_corpus(corpus: &CorpusSnapshot) -> Result<Self, EnsembleError> {
        Self::from_records(corpus.records())
    }

    pub fn from_records(records: &[HaltingRecord]) -> Result<Self, EnsembleError> {
        if records.is_empty() {
            return Err(EnsembleError::EmptyRecords);
        }
        let mut e = Vec::with_capacity(records.len());
        let mut v = Vec::with_capacity(records.len());
        let mut n = Vec::with_capacity(records.len());
        for r in records {
            let (re, rv, rn) = observables(r);
            e.push(re);
            v.push(rv);
            n.push(rn);
        }
        Ok(TruncatedEnsemble { log_runtime: e, length: v, output: n })
    }

    pub fn len(&self) -> usize {
        self.length.len()
    }

    pub fn is_empty(&self) -> bool {
        self.length.is_empty()
    }

    fn log_weights(&self, p: &EnsembleParams) -> impl Iterator<Item = f64> + '_ {
        let (b, g, d) = (p.beta, p.gamma, p.delta);
        (0..self.len()).map(move |i| -(b * self.log_runtime[i] + g * self.length[i] + d * self.output[i]))
    }

    /// `ln Σ exp(log weight)`, shifted by the largest log weight.
    pub fn ln_z(&self, params: &EnsembleParams) -> f64 {
        let shift = self.log_weights(params).fold(f64::NEG_INFINITY, f64::max);
        shift + sum(self.log_weights(params).map(|lw| (lw - shift).exp())).ln()
    }

    /// Gibbs probabilities of the records, in corpus order.
    pub fn probabilities(&self, params: &EnsembleParams) -> Vec<f64> {
        let shift = self.log_weights(params).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights(params).map(|lw| (lw - shift).exp()).collect();
        let z = sum(w.iter().copied());
        w.into_iter().map(|x| x / z).collect()
    }

    pub fn observable_columns(&self) -> [&[f64]; 3] {
        [&self.log_runtime, &self.length, &self.output]
    }

    /// Means, (co)variances and entropy of the truncated Gibbs measure.
    pub fn stats(&self, params: &EnsembleParams) -> Result<EnsembleStats, EnsembleError> {
        let p = self.probabilities(params);
        let ln_z = self.ln_z(params);

        let mean = |xs: &[f64]| sum(p.iter().zip(xs).map(|(pi, x)| pi * x));
        let (me, mv, mn) = (mean(&self.log_runtime), mean(&self.length), mean(&self.output));
        let cov = |xs: &[f64], mx: f64, ys: &[f64], my: f64| {
            sum(p.iter().zip(xs.iter().zip(ys)).map(|(pi, (x, y))| pi * (x - mx) * (y - my)))
        };
        let (e, v, n) = (&self.log_runtime[..], &self.length[..], &self.output[..]);

        let mut entropy = CompensatedSum::new();
        for &pi in &p {
            if pi > 0.0 {
                entropy.add(-pi * pi.ln());
            }
        }
        let entropy_s = entropy.value().max(0.0);

        let stats = EnsembleStats {
            mean_e: me,
            mean_v: mv,
            mean_n: mn,
            var_e: cov(e, me, e, me).max(0.0),
            var_v: cov(v, mv, v, mv).max(0.0),
            var_n: cov(n, mn, n, mn).max(0.0),
            cov_ev: cov(e, me, v, mv),
            cov_en: cov(e, me, n, mn),
            cov_vn: cov(v, mv, n, mn),
            entropy_s,
            z_trunc: ln_z.exp(),
            ln_z_trunc: ln_z,
        };
        let residual = entropy_identity_residual(&stats, params);
        if residual > ENTROPY_IDENTITY_TOL {
            return Err(EnsembleError::EntropyIdentity { residual });
        }
        Ok(stats)
    }
}

/// Relative residual of `S = ln Z + βE + γV + δN`, scaled by the largest
/// term of the identity.
pub fn entropy_identity_residual(stats: &EnsembleStats, params: &EnsembleParams) -> f64 {
    let terms = [
        stats.ln_z_trunc,
        params.beta * stats.mean_e,
        params.gamma * stats.mean_v,
        params.delta * stats.mean_n,
    ];
    let rhs = sum(terms);
    let scale = terms
        .iter()
        .map(|t| t.abs())
        .fold(stats.entropy_s.abs(), f64::max);
    if scale == 0.0 {
        0.0
    } else {
        (stats.entropy_s - rhs).abs() / scale
    }
}

/// Truncated Gibbs statistics over the records of `corpus`.
pub fn gibbs_stats(corpus: &CorpusSnapshot, params: &EnsembleParams) -> Result<EnsembleStats, EnsembleError> {
    TruncatedEnsemble::from_corpus(corpus)?.stats(params)
}

/// Enclosure of the probability `q(n)` that the Gibbs ensemble outputs `n`.
pub fn pushforward_measure(
    corpus: &CorpusSnapshot,
    params: &EnsembleParams,
    n: u64,
) -> Result<Interval, EnsembleError> {
    let enclosure = partition_enclosure(corpus, params)?;
    if enclosure.z_lo <= 0.0 {
        return Err(EnsembleError::NoInformation);
    }
    let numerator = record_sum(corpus, params, |r| r.output == n);
    Ok(Interval {
        lo: numerator / enclosure.z_hi,
        hi: ((numerator + enclosure.tails()) / enclosure.z_lo).min(1.0),
    })
}

/// Truncated output distribution: witnessed masses per output, renormalized.
pub fn output_measure(corpus: &CorpusSnapshot, params: &EnsembleParams) -> Result<FiniteMeasure<u64>, EnsembleError> {
    if corpus.records().is_empty() {
        return Err(EnsembleError::EmptyRecords);
    }
    let mut masses: BTreeMap<u64, CompensatedSum> = BTreeMap::new();
    for r in corpus.records() {
        masses.entry(r.output).or_default().add(weight(r, params));
    }
    FiniteMeasure::new(masses.into_iter().map(|(k, s)| (k, s.value())))?.normalized()
}

/// Enclosure of `-ln Σ_{N(x)=n} exp(-γ|x|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmicEntropy {
    pub gamma: f64,
    pub output: u64,
    /// `Σ exp(-γ|x|)` over records that output `n`.
    pub witnessed: f64,
    /// Bound on the same sum over undecided strings.
    pub tails: f64,
}

impl AlgorithmicEntropy {
    pub fn has_witness(&self) -> bool {
        self.witnessed > 0.0
    }

    pub fn lower_nats(&self) -> f64 {
        -(self.witnessed + self.tails).ln()
    }

    /// `None` without a witness.
    pub fn upper_nats(&self) -> Option<f64> {
        self.has_witness().then(|| -self.witnessed.ln())
    }

    pub fn lower_bits(&self) -> f64 {
        -(self.witnessed + self.tails).log2()
    }

    pub fn upper_bits(&self) -> Option<f64> {
        self.has_witness().then(|| -self.witnessed.log2())
    }
}

pub fn algorithmic_entropy(corpus: &CorpusSnapshot, gamma: f64, n: u64) -> Result<AlgorithmicEntropy, EnsembleError> {
    let params = EnsembleParams::new(0.0, gamma, 0.0);
    if !params.is_certified() {
        return Err(EnsembleError::Uncertified {
            params,
            lower_bound: partition_lower_bound(corpus, &params).z_lo,
        });
    }
    let witnessed = record_sum(corpus, &params, |r| r.output == n);
    let (unexplored, running) = tails(corpus, &params);
    Ok(AlgorithmicEntropy {
        gamma,
        output: n,
        witnessed,
        tails: unexplored + running,
    })
}

/// Upper bounds on Kolmogorov and Levin complexity at this truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityProxies {
    /// Shortest witnessed program length.
    pub k_proxy: u32,
    /// Smallest `V + log2 t` over witnesses.
    pub levin_proxy: f64,
}

pub fn complexity_proxies(corpus: &CorpusSnapshot, n: u64) -> Option<ComplexityProxies> {
    let mut witnesses = corpus.records_with_output(n).peekable();
    witnesses.peek()?;
    let (k, levin) = witnesses.fold((u32::MAX, f64::INFINITY), |(k, l), r| {
        (k.min(r.length()), l.min(r.length() as f64 + r.log_runtime()))
    });
    Some(ComplexityProxies { k_proxy: k, levin_proxy: levin })
}

/// A finitely supported nonnegative measure.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMeasure<K: Ord> {
    mass: BTreeMap<K, f64>,
}

impl<K: Ord + Clone> FiniteMeasure<K> {
    pub fn new(masses: impl IntoIterator<Item = (K, f64)>) -> Result<Self, EnsembleError> {
        let mut mass = BTreeMap::new();
        for (k, m) in masses {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(EnsembleError::InvalidMass);
            }
            *mass.entry(k).or_insert(0.0) += m;
        }
        Ok(FiniteMeasure { mass })
    }

    /// A measure whose masses must sum to 1 within `1e-12`.
    pub fn probability(masses: impl IntoIterator<Item = (K, f64)>) -> Result<Self, EnsembleError> {
        let m = Self::new(masses)?;
        m.check_probability()?;
        Ok(m)
    }

    pub fn point(k: K) -> Self {
        FiniteMeasure { mass: BTreeMap::from([(k, 1.0)]) }
    }

    pub fn uniform(support: impl IntoIterator<Item = K>) -> Result<Self, EnsembleError> {
        let keys: Vec<K> = support.into_iter().collect();
        let m = 1.0 / keys.len() as f64;
        Self::probability(keys.into_iter().map(|k| (k, m)))
    }

    pub fn total(&self) -> f64 {
        sum(self.mass.values().copied())
    }

    pub fn mass(&self, k: &K) -> f64 {
        self.mass.get(k).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = &K> {
        self.mass.iter().filter(|(_, m)| **m > 0.0).map(|(k, _)| k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, f64)> {
        self.mass.iter().map(|(k, m)| (k, *m))
    }

    pub fn normalized(&self) -> Result<Self, EnsembleError> {
        let total = self.total();
        if total <= 0.0 {
            return Err(EnsembleError::NotProbability { total });
        }
        Ok(FiniteMeasure {
            mass: self.mass.iter().map(|(k, m)| (k.clone(), m / total)).collect(),
        })
    }

    fn check_probability(&self) -> Result<(), EnsembleError> {
        let total = self.total();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EnsembleError::NotProbability { total });
        }
        Ok(())
    }

    /// Shannon entropy `-Σ p ln p` in nats.
    pub fn entropy(&self) -> f64 {
        -sum(self.mass.values().filter(|m| **m > 0.0).map(|m| m * m.ln()))
    }
}

/// `S(p, q) = -Σ p(x) ln(p(x)/q(x))` in nats: minus the Kullback-Leibler
/// divergence, so never positive.
pub fn relative_entropy<K: Ord + Clone>(p: &FiniteMeasure<K>, q: &FiniteMeasure<K>) -> Result<f64, EnsembleError> {
    p.check_probability()?;
    q.check_probability()?;
    let mut s = CompensatedSum::new();
    for (k, pk) in p.iter() {
        if pk == 0.0 {
            continue;
        }
        let qk = q.mass(k);
        if qk <= 0.0 {
            return Err(EnsembleError::SupportViolation);
        }
        s.add(-pk * (pk / qk).ln());
    }
    Ok(s.value().min(0.0))
}

//! Line-oriented corpus files.
//!
//! ```text
//! #ALGTHERMO v1 machine=bitvm1 L=<int> Tmax=<int>
//! R <bits> <t> <N>
//! X <bits> <steps_so_far>
//! P <bits>
//! ```
//!
//! Sections appear in the order R, X, P, each sorted length-lexicographically.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use super::{CorpusSnapshot, HaltingRecord, RunningString};
use crate::bits::BitString;
use crate::vm::{Machine, RunOutcome};

const MAGIC: &str = "#ALGTHERMO";
const VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported corpus version {found:?} (expected {VERSION})")]
    Version { found: String },
    #[error("corpus was built for machine {found:?}, this build runs {expected:?}")]
    MachineMismatch { found: String, expected: String },
    #[error("line {line}: record {bits} re-runs to {actual:?}, file says t={steps} N={output}")]
    Integrity {
        line: usize,
        bits: BitString,
        steps: u64,
        output: u64,
        actual: RunOutcome,
    },
}

fn parse_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Re-run every record and reject the file on any mismatch.
    pub verify: bool,
    pub machine: Machine,
}

pub fn write_corpus<W: Write>(snapshot: &CorpusSnapshot, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "{MAGIC} {VERSION} machine={} L={} Tmax={}",
        snapshot.machine_id(),
        snapshot.max_len(),
        snapshot.max_steps()
    )?;
    for r in snapshot.records() {
        writeln!(w, "R {} {} {}", r.bits, r.steps, r.output)?;
    }
    for r in snapshot.running() {
        writeln!(w, "X {} {}", r.bits, r.steps_so_far)?;
    }
    for p in snapshot.live_prefixes() {
        writeln!(w, "P {p}")?;
    }
    w.flush()
}

pub fn save_corpus(snapshot: &CorpusSnapshot, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    write_corpus(snapshot, BufWriter::new(file))?;
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>, options: LoadOptions) -> Result<CorpusSnapshot, CorpusError> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file), options)
}

pub fn read_corpus<R: BufRead>(reader: R, options: LoadOptions) -> Result<CorpusSnapshot, CorpusError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(parse_err(1, "empty file")),
    };
    let (machine_id, max_len, max_steps) = parse_header(&header)?;
    let expected = options.machine.id();
    if machine_id != expected {
        return Err(CorpusError::MachineMismatch { found: machine_id, expected });
    }

    let mut records = Vec::new();
    let mut record_lines = Vec::new();
    let mut running = Vec::new();
    let mut live = Vec::new();
    let mut section = 0u8;
    let mut last: Option<BitString> = None;

    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let mut fields = line.split(' ');
        let tag = fields.next().unwrap_or_default();
        let tag_section = match tag {
            "R" => 0,
            "X" => 1,
            "P" => 2,
            _ => return Err(parse_err(line_no, format!("unknown line tag {tag:?}"))),
        };
        if tag_section < section {
            return Err(parse_err(line_no, format!("{tag} line after a later section")));
        }
        if tag_section > section {
            section = tag_section;
            last = None;
        }
        let bits: BitString = fields
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad bit string: {e}")))?;
        if bits.len() > max_len {
            return Err(parse_err(line_no, format!("bit string longer than L={max_len}")));
        }
        if let Some(prev) = last {
            if bits <= prev {
                return Err(parse_err(line_no, "lines not in length-lexicographic order"));
            }
        }
        last = Some(bits);
        let mut number = |name: &str| -> Result<u64, CorpusError> {
            fields
                .next()
                .ok_or_else(|| parse_err(line_no, format!("missing {name}")))?
                .parse::<u64>()
                .map_err(|e| parse_err(line_no, format!("bad {name}: {e}")))
        };
        match tag_section {
            0 => {
                let steps = number("t")?;
                let output = number("N")?;
                if steps == 0 || steps > max_steps {
                    return Err(parse_err(line_no, format!("t={steps} outside 1..=Tmax")));
                }
                records.push(HaltingRecord { bits, steps, output });
                record_lines.push(line_no);
            }
            1 => {
                let steps_so_far = number("steps_so_far")?;
                if steps_so_far > max_steps {
                    return Err(parse_err(line_no, "steps_so_far exceeds Tmax"));
                }
                running.push(RunningString { bits, steps_so_far });
            }
            _ => live.push(bits),
        }
        if fields.next().is_some() {
            return Err(parse_err(line_no, "trailing fields"));
        }
    }

    if options.verify {
        let bad = records
            .par_iter()
            .zip(record_lines.par_iter())
            .find_first(|(r, _)| !matches!(
                options.machine.run(&r.bits, max_steps),
                RunOutcome::Halted { output, steps, .. } if output == r.output && steps == r.steps
            ));
        if let Some((r, &line)) = bad {
            return Err(CorpusError::Integrity {
                line,
                bits: r.bits,
                steps: r.steps,
                output: r.output,
                actual: options.machine.run(&r.bits, max_steps),
            });
        }
    }

    Ok(CorpusSnapshot::new(machine_id, max_len, max_steps, records, running, live))
}

fn parse_header(header: &str) -> Result<(String, u32, u64), CorpusError> {
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(parse_err(1, format!("missing {MAGIC} header")));
    }
    match fields.next() {
        Some(VERSION) => {}
        Some(other) => return Err(CorpusError::Version { found: other.to_string() }),
        None => return Err(parse_err(1, "missing version")),
    }
    let (mut machine, mut max_len, mut max_steps) = (None, None, None);
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field {field:?}")))?;
        match key {
            "machine" => machine = Some(value.to_string()),
            "L" => {
                max_len = Some(value.parse::<u32>().map_err(|e| parse_err(1, format!("bad L: {e}")))?)
            }
            "Tmax" => {
                max_steps =
                    Some(value.parse::<u64>().map_err(|e| parse_err(1, format!("bad Tmax: {e}")))?)
            }
            _ => return Err(parse_err(1, format!("unknown header field {key:?}"))),
        }
    }
    Ok((
        machine.ok_or_else(|| parse_err(1, "header lacks machine="))?,
        max_len.ok_or_else(|| parse_err(1, "header lacks L="))?,
        max_steps.ok_or_else(|| parse_err(1, "header lacks Tmax="))?,
    ))
}

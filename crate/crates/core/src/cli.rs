//! The `algthermo` command line.
//!
//! Exit codes: 0 success, 1 invalid input (bad flags, files, parameters
//! outside the certified region), 2 numerical trouble (ill-conditioned
//! Jacobians, Newton failures, identity checks that do not hold).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::ensemble::{
    algorithmic_entropy, complexity_proxies, partition_enclosure, partition_lower_bound, EnsembleError,
    EnsembleParams, TruncatedEnsemble,
};
use crate::enumerate::{load_corpus, save_corpus, CorpusError, CorpusSnapshot, EnumerateError, Enumerator, LoadOptions};
use crate::thermo::{
    build_loop, check_relations, conjugates, cycle_integrals, LoopSpec, ThermoError, ThermoSystem, DEFAULT_FD_STEP,
    RELATION_KEYS,
};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Parser)]
#[command(
    name = "algthermo",
    version,
    about = "Gibbs ensembles over the halting programs of the bitvm1 machine",
    after_help = "Exit codes: 0 success, 1 invalid input, 2 numerical-condition error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate halting programs up to a length and step cap.
    Enumerate(EnumerateArgs),
    /// Partition-function enclosure and ensemble statistics at one point.
    Stats(StatsArgs),
    /// Enclosure of the halting probability Z(0, ln 2, 0).
    Omega(CorpusArg),
    /// Algorithmic entropy of one output value, with complexity proxies.
    Entropy(EntropyArgs),
    /// Check the thermodynamic identities at one point and print residuals.
    Relations(RelationsArgs),
    /// Integrate T dS, P dV and mu dN around a closed loop.
    Cycle(CycleArgs),
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    /// Maximum program length L in bits.
    #[arg(long)]
    max_len: u32,
    /// Step budget Tmax per program.
    #[arg(long)]
    max_steps: u64,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Corpus file to write.
    #[arg(long)]
    out: PathBuf,
    /// Re-read the written file and re-run every record against it.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Args)]
struct CorpusArg {
    /// Corpus file written by `enumerate`.
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Debug, Args)]
struct PointArgs {
    /// Conjugate of log runtime E = log2 t.
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    /// Conjugate of length V.
    #[arg(long, allow_negative_numbers = true)]
    gamma: f64,
    /// Conjugate of output N.
    #[arg(long, allow_negative_numbers = true)]
    delta: f64,
}

impl PointArgs {
    fn params(&self) -> Result<EnsembleParams, CliError> {
        let p = EnsembleParams::new(self.beta, self.gamma, self.delta);
        if !p.as_array().iter().all(|v| v.is_finite()) {
            return Err(CliError::Invalid(format!("parameters must be finite, got {p}")));
        }
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    corpus: CorpusArg,
    #[command(flatten)]
    point: PointArgs,
    /// Report the record-sum lower bound and truncated statistics even
    /// outside the certified region (gamma >= ln 2, beta >= 0, delta >= 0).
    #[arg(long)]
    uncertified: bool,
    /// Write one CSV row with columns: beta,gamma,delta,certified,z_lo,z_hi,
    /// tail_unexplored,tail_running,ln_z_trunc,mean_e,mean_v,mean_n,var_e,
    /// var_v,var_n,cov_ev,cov_en,cov_vn,entropy_nats,entropy_bits.
    /// z_hi and the tails are empty when uncertified.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    #[command(flatten)]
    corpus: CorpusArg,
    /// Length conjugate, at least ln 2.
    #[arg(long, allow_negative_numbers = true)]
    gamma: f64,
    /// The output value n.
    #[arg(long)]
    output_value: u64,
}

#[derive(Debug, Args)]
struct RelationsArgs {
    #[command(flatten)]
    corpus: CorpusArg,
    #[command(flatten)]
    point: PointArgs,
    /// Relative finite-difference step; each coordinate c uses h * max(1, |c|).
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    h: f64,
    /// Write one CSV row with columns beta,gamma,delta followed by the
    /// relative residual of each check: grad_beta,grad_gamma,grad_delta,
    /// hess_ee,hess_ev,hess_en,hess_vv,hess_vn,hess_nn,entropy_identity,
    /// ds_de,ds_dv,ds_dn,de_ds,de_dv,de_dn,maxwell,fundamental_beta,
    /// fundamental_gamma,fundamental_delta.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CycleArgs {
    #[command(flatten)]
    corpus: CorpusArg,
    /// Loop spec: `START b g d`, then one leg per line: `ISO_V <beta|close>`,
    /// `ISO_S <gamma|close>` or `LINE b g d`. `#` starts a comment.
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    /// Midpoint-rule segments per leg.
    #[arg(long, default_value_t = 256)]
    refinement: usize,
    /// Write one CSV row per leg segment with columns: leg,segment,kind,
    /// beta,gamma,delta (segment midpoint),T,P,mu,dS,dV,dN.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Invalid(format!("cannot load corpus: {e}"))
    }
}

impl From<EnumerateError> for CliError {
    fn from(e: EnumerateError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::EntropyIdentity { .. } => CliError::Numerical(e.to_string()),
            EnsembleError::Uncertified { .. } => {
                CliError::Invalid(format!("{e}. Pass --uncertified to see truncated values anyway."))
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ThermoError> for CliError {
    fn from(e: ThermoError) -> Self {
        match e {
            ThermoError::IllConditioned { .. } | ThermoError::NewtonDiverged { .. } => {
                CliError::Numerical(e.to_string())
            }
            ThermoError::Ensemble(inner) => inner.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    let csv = match command {
        Command::Enumerate(a) => {
            enumerate(&a, &mut text)?;
            None
        }
        Command::Stats(a) => stats(&a, &mut text)?.map(|c| (a.csv, c)),
        Command::Omega(a) => {
            omega(&a, &mut text)?;
            None
        }
        Command::Entropy(a) => {
            entropy(&a, &mut text)?;
            None
        }
        Command::Relations(a) => {
            let c = relations(&a, &mut text)?;
            Some((a.csv, c))
        }
        Command::Cycle(a) => {
            let c = cycle(&a, &mut text)?;
            Some((a.csv, c))
        }
    };
    // Only touch the CSV target once everything has succeeded.
    if let Some((Some(path), body)) = csv {
        fs::write(&path, body).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    }
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Invalid(format!("cannot write output: {e}")))
}

fn load(path: &Path) -> Result<CorpusSnapshot, CliError> {
    load_corpus(path, LoadOptions::default()).map_err(|e| match e {
        CorpusError::Io(io) => CliError::Invalid(format!("cannot read corpus {}: {io}", path.display())),
        other => CliError::Invalid(format!("{}: {other}", path.display())),
    })
}

fn enumerate(a: &EnumerateArgs, text: &mut String) -> Result<(), CliError> {
    let corpus = Enumerator::new().threads(a.threads).dovetail(a.max_len, a.max_steps)?;
    save_corpus(&corpus, &a.out)
        .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", a.out.display())))?;
    if a.verify {
        let back = load_corpus(&a.out, LoadOptions { verify: true, ..Default::default() })?;
        if back != corpus {
            return Err(CliError::Invalid(format!("{} does not read back identically", a.out.display())));
        }
    }
    let _ = writeln!(text, "machine {}  L={}  Tmax={}", corpus.machine_id(), corpus.max_len(), corpus.max_steps());
    let _ = writeln!(text, "halting records    {}", corpus.records().len());
    let _ = writeln!(text, "still running      {}", corpus.running().len());
    let _ = writeln!(text, "live prefixes      {}", corpus.live_prefixes().len());
    let _ = writeln!(text, "Kraft sum          {}", corpus.kraft_sum());
    let _ = writeln!(text, "wrote {}{}", a.out.display(), if a.verify { " (verified)" } else { "" });
    Ok(())
}

fn stats(a: &StatsArgs, text: &mut String) -> Result<Option<String>, CliError> {
    let params = a.point.params()?;
    let corpus = load(&a.corpus.corpus)?;
    if params.as_array() == [0.0; 3] && !a.uncertified {
        return Err(CliError::Invalid(
            "Z(0, 0, 0) diverges: every program has weight 1 and there are infinitely many. \
             Use gamma >= ln 2 (0.6931471805599453)."
                .into(),
        ));
    }
    let enclosure = if a.uncertified && !params.is_certified() {
        None
    } else {
        Some(partition_enclosure(&corpus, &params)?)
    };
    let stats = TruncatedEnsemble::from_corpus(&corpus)?.stats(&params)?;
    let z_lo = partition_lower_bound(&corpus, &params).z_lo;

    let _ = writeln!(text, "parameters {params}");
    match &enclosure {
        Some(e) => {
            let _ = writeln!(text, "Z in [{}, {}]", e.z_lo, e.z_hi);
            let _ = writeln!(text, "  ln Z in [{}, {}] nats", e.z_lo.ln(), e.z_hi.ln());
            let _ = writeln!(text, "  log2 Z in [{}, {}] bits", e.z_lo.log2(), e.z_hi.log2());
            let _ = writeln!(text, "  tails: unexplored {}, still running {}", e.tail_unexplored, e.tail_running);
        }
        None => {
            let _ = writeln!(text, "UNCERTIFIED: Z may diverge here; only the lower bound holds");
            let _ = writeln!(text, "Z >= {}  (ln Z >= {} nats, log2 Z >= {} bits)", z_lo, z_lo.ln(), z_lo.log2());
        }
    }
    let _ = writeln!(text, "truncated ensemble over {} records:", corpus.records().len());
    let _ = writeln!(text, "  mean E = {} bits (log2 runtime)", stats.mean_e);
    let _ = writeln!(text, "  mean V = {} bits (length)", stats.mean_v);
    let _ = writeln!(text, "  mean N = {}", stats.mean_n);
    let _ = writeln!(text, "  var E = {}, var V = {}, var N = {}", stats.var_e, stats.var_v, stats.var_n);
    let _ = writeln!(text, "  cov EV = {}, cov EN = {}, cov VN = {}", stats.cov_ev, stats.cov_en, stats.cov_vn);
    let _ = writeln!(text, "  S = {} nats = {} bits", stats.entropy_s, stats.entropy_bits());
    if let Ok(c) = conjugates(&params) {
        let _ = writeln!(text, "  T = {}, P = {}, mu = {}", c.temperature, c.pressure, c.potential);
    }

    let Some(_) = &a.csv else { return Ok(None) };
    let mut csv = String::from(
        "beta,gamma,delta,certified,z_lo,z_hi,tail_unexplored,tail_running,ln_z_trunc,mean_e,mean_v,mean_n,\
         var_e,var_v,var_n,cov_ev,cov_en,cov_vn,entropy_nats,entropy_bits\n",
    );
    let (z_hi, tu, tr) = match &enclosure {
        Some(e) => (e.z_hi.to_string(), e.tail_unexplored.to_string(), e.tail_running.to_string()),
        None => Default::default(),
    };
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        params.beta,
        params.gamma,
        params.delta,
        enclosure.is_some(),
        z_lo,
        z_hi,
        tu,
        tr,
        stats.ln_z_trunc,
        stats.mean_e,
        stats.mean_v,
        stats.mean_n,
        stats.var_e,
        stats.var_v,
        stats.var_n,
        stats.cov_ev,
        stats.cov_en,
        stats.cov_vn,
        stats.entropy_s,
        stats.entropy_bits()
    );
    Ok(Some(csv))
}

fn omega(a: &CorpusArg, text: &mut String) -> Result<(), CliError> {
    let corpus = load(&a.corpus)?;
    let e = partition_enclosure(&corpus, &EnsembleParams::omega())?;
    let _ = writeln!(text, "Omega = Z(0, ln 2, 0) at L={} Tmax={}", corpus.max_len(), corpus.max_steps());
    let _ = writeln!(text, "z_lo = {}", e.z_lo);
    let _ = writeln!(text, "z_hi = {}", e.z_hi);
    let _ = writeln!(text, "  tails: unexplored {}, still running {}", e.tail_unexplored, e.tail_running);
    let _ = writeln!(text, "  ln Omega in [{}, {}] nats", e.z_lo.ln(), e.z_hi.ln());
    let _ = writeln!(text, "  log2 Omega in [{}, {}] bits", e.z_lo.log2(), e.z_hi.log2());
    Ok(())
}

fn entropy(a: &EntropyArgs, text: &mut String) -> Result<(), CliError> {
    if !a.gamma.is_finite() {
        return Err(CliError::Invalid(format!("gamma must be finite, got {}", a.gamma)));
    }
    let corpus = load(&a.corpus.corpus)?;
    let h = algorithmic_entropy(&corpus, a.gamma, a.output_value)?;
    let _ = writeln!(text, "algorithmic entropy of n={} at gamma={}", a.output_value, a.gamma);
    let upper = |v: Option<f64>| v.map_or_else(|| "inf (no witness yet)".to_string(), |x| x.to_string());
    let _ = writeln!(text, "  in [{}, {}] nats", h.lower_nats(), upper(h.upper_nats()));
    let _ = writeln!(text, "  in [{}, {}] bits", h.lower_bits(), upper(h.upper_bits()));
    match complexity_proxies(&corpus, a.output_value) {
        Some(p) => {
            let _ = writeln!(text, "  shortest witness (Kolmogorov proxy): {} bits", p.k_proxy);
            let _ = writeln!(text, "  min length + log2 t (Levin proxy): {} bits", p.levin_proxy);
        }
        None => {
            let _ = writeln!(text, "  no program in the corpus outputs {}", a.output_value);
        }
    }
    Ok(())
}

fn relations(a: &RelationsArgs, text: &mut String) -> Result<String, CliError> {
    let params = a.point.params()?;
    if !(a.h > 0.0 && a.h.is_finite()) {
        return Err(CliError::Invalid(format!("--h must be positive, got {}", a.h)));
    }
    if !params.is_certified() || !(params.beta > 0.0) {
        return Err(CliError::Invalid(format!(
            "relations need beta > 0, gamma >= ln 2 ({LN_2}) and delta >= 0; got {params}"
        )));
    }
    let system = ThermoSystem::new(&load(&a.corpus.corpus)?)?;
    let checks = check_relations(&system, &params, a.h)?;
    let _ = writeln!(text, "relations at {params}, h = {}", a.h);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let _ = writeln!(
            text,
            "  {:width$}  computed {:<24} expected {:<24} residual {:e}",
            c.name,
            short(c.computed),
            short(c.expected),
            c.residual
        );
    }
    let worst = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
    let _ = writeln!(text, "largest relative residual {worst:e}");

    let mut csv = format!("beta,gamma,delta,{}\n", RELATION_KEYS.join(","));
    let _ = write!(csv, "{},{},{}", params.beta, params.gamma, params.delta);
    for c in &checks {
        let _ = write!(csv, ",{:e}", c.residual);
    }
    csv.push('\n');
    Ok(csv)
}

/// Plain notation, or scientific for tiny nonzero values.
fn short(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn cycle(a: &CycleArgs, text: &mut String) -> Result<String, CliError> {
    if a.refinement == 0 {
        return Err(CliError::Invalid("--refinement must be at least 1".into()));
    }
    let spec_text = fs::read_to_string(&a.spec)
        .map_err(|e| CliError::Invalid(format!("cannot read loop spec {}: {e}", a.spec.display())))?;
    let spec: LoopSpec = spec_text.parse()?;
    let system = ThermoSystem::new(&load(&a.corpus.corpus)?)?;
    let path = build_loop(&system, &spec)?;
    let report = cycle_integrals(&system, &path, a.refinement)?;

    let _ = writeln!(text, "loop with {} legs, refinement {}", path.legs().len(), a.refinement);
    for (v, leg) in path.vertices().iter().zip(path.legs()) {
        let _ = writeln!(text, "  {v} --{}-->", leg.name());
    }
    let _ = writeln!(text, "heat  dQ = integral T dS  = {}", short(report.delta_q));
    let _ = writeln!(text, "work  W  = integral P dV  = {}", short(report.work_term));
    let _ = writeln!(text, "      M  = integral mu dN = {}", short(report.mu_term));
    let _ = writeln!(text, "closure |dQ - (W - M)| = {:e}", report.closure_residual);
    if report.delta_q != 0.0 {
        let _ = writeln!(text, "relative to |dQ|        = {:e}", report.closure_residual / report.delta_q.abs());
    }

    let mut csv = String::from("leg,segment,kind,beta,gamma,delta,T,P,mu,dS,dV,dN\n");
    for s in &report.segments {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.leg,
            s.segment,
            s.kind,
            s.midpoint.beta,
            s.midpoint.gamma,
            s.midpoint.delta,
            s.temperature,
            s.pressure,
            s.potential,
            s.ds,
            s.dv,
            s.dn
        );
    }
    Ok(csv)
}

//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always show up in `cargo test` output.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::LN_2;
use std::process::{Command, ExitCode};
use std::time::Instant;

use algthermo::ensemble::{
    algorithmic_entropy, complexity_proxies, entropy_identity_residual, partition_enclosure, EnsembleParams,
    FiniteMeasure, PartitionEnclosure, TruncatedEnsemble,
};
use algthermo::enumerate::{brute_force_oracle, CorpusSnapshot, Enumerator};
use algthermo::thermo::{build_loop, cycle_integrals, LoopSpec, Quantity, ThermoSystem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step cap for every snapshot below; large enough that every program of
/// up to 22 bits that halts at all halts well within it.
const TMAX: u64 = 4096;
const FD_STEP: f64 = 1e-4;

/// Interior points with δ > 0 for the derivative criteria.
const INTERIOR: [(f64, f64, f64); 5] =
    [(0.7, 1.2, 0.2), (0.5, 0.8, 0.2), (1.0, 0.75, 0.1), (0.3, 0.9, 0.4), (1.5, 0.8, 0.3)];

const REFERENCE_LOOP: &str = "\
START 0.5 0.8 0.2
ISO_V 0.7
ISO_S 0.765
ISO_V close
ISO_S close
";

#[derive(Default)]
struct Corpora {
    cache: HashMap<(u32, u64), CorpusSnapshot>,
}

impl Corpora {
    fn get(&mut self, len: u32, steps: u64) -> &CorpusSnapshot {
        self.cache
            .entry((len, steps))
            .or_insert_with(|| Enumerator::new().dovetail(len, steps).expect("enumeration"))
    }
}

type Outcome = Result<String, String>;

fn point(p: (f64, f64, f64)) -> EnsembleParams {
    EnsembleParams::new(p.0, p.1, p.2)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

fn oracle_equivalence(_: &mut Corpora) -> Outcome {
    let mut n = 0;
    for len in 4..=12 {
        for steps in [16, 256, 4096] {
            let fast = Enumerator::new().dovetail(len, steps).map_err(|e| e.to_string())?;
            let slow = brute_force_oracle(len, steps).map_err(|e| e.to_string())?;
            ensure(fast == slow, || format!("snapshots differ at L={len} Tmax={steps}"))?;
            n += 1;
        }
    }
    Ok(format!("{n} (L, Tmax) pairs identical"))
}

fn kraft_soundness(corpora: &mut Corpora) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut caps: Vec<(u32, u64)> = (1..=22).map(|l| (l, TMAX)).collect();
    caps.extend((1..=16).flat_map(|l| [(l, 1), (l, 16), (l, 256)]));
    for (len, steps) in caps {
        let c = corpora.get(len, steps);
        let exact = c.kraft_sum_exact();
        ensure(exact.is_at_most_one(), || format!("exact Kraft sum exceeds 1 at L={len} Tmax={steps}"))?;
        let float = c.kraft_sum();
        ensure(float <= 1.0 + 1e-12, || format!("float Kraft sum {float} at L={len} Tmax={steps}"))?;
        ensure((float - exact.to_f64()).abs() <= 1e-12, || format!("float and exact sums disagree at L={len}"))?;
        worst = worst.max(float);
        checked += 1;
    }
    Ok(format!("{checked} snapshots, largest Kraft sum {worst}"))
}

fn enclosure_nesting(corpora: &mut Corpora) -> Outcome {
    let mut lines = Vec::new();
    for params in [EnsembleParams::omega(), EnsembleParams::new(1.0, 1.0, 0.5)] {
        let enclose = |c: &CorpusSnapshot| partition_enclosure(c, &params).map_err(|e| e.to_string());
        let reference = enclose(corpora.get(22, TMAX))?;
        let mut prev: Option<PartitionEnclosure> = None;
        for len in [8, 12, 16, 20] {
            let e = enclose(corpora.get(len, TMAX))?;
            if let Some(p) = prev {
                ensure(e.z_lo >= p.z_lo, || format!("z_lo decreased at L={len}, {params}"))?;
                ensure(e.z_hi <= p.z_hi, || format!("z_hi increased at L={len}, {params}"))?;
            }
            ensure(e.contains(&reference), || {
                format!("L={len} enclosure [{}, {}] misses the L=22 one at {params}", e.z_lo, e.z_hi)
            })?;
            prev = Some(e);
        }
        lines.push(format!("{params}: L=22 gives [{}, {}]", reference.z_lo, reference.z_hi));
    }
    Ok(lines.join("; "))
}

fn derivative_identities(corpora: &mut Corpora) -> Outcome {
    let system = ThermoSystem::new(corpora.get(14, TMAX)).map_err(|e| e.to_string())?;
    let (mut worst_grad, mut worst_hess): (f64, f64) = (0.0, 0.0);
    for p in INTERIOR.map(point) {
        let d = system.ln_z_derivatives(&p, FD_STEP).map_err(|e| e.to_string())?;
        let s = system.stats(&p).map_err(|e| e.to_string())?;
        let means = s.means();
        let cov = s.covariance();
        for i in 0..3 {
            let r = (d.grad[i] + means[i]).abs() / means[i].abs();
            worst_grad = worst_grad.max(r);
            ensure(r <= 1e-6, || format!("gradient {i} off by {r:e} at {p}"))?;
            for j in 0..3 {
                let r = (d.hess[i][j] - cov[i][j]).abs() / (cov[i][i] * cov[j][j]).sqrt();
                worst_hess = worst_hess.max(r);
                ensure(r <= 1e-4, || format!("Hessian ({i},{j}) off by {r:e} at {p}"))?;
            }
        }
    }
    Ok(format!("worst gradient residual {worst_grad:e}, worst Hessian residual {worst_hess:e}"))
}

fn entropy_identity(corpora: &mut Corpora) -> Outcome {
    let ensemble = TruncatedEnsemble::from_corpus(corpora.get(14, TMAX)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let p = EnsembleParams::new(rng.random_range(0.0..3.0), rng.random_range(LN_2..3.0), rng.random_range(0.0..3.0));
        let s = ensemble.stats(&p).map_err(|e| e.to_string())?;
        let r = entropy_identity_residual(&s, &p);
        worst = worst.max(r);
        ensure(r <= 1e-9, || format!("residual {r:e} at {p}"))?;
    }
    Ok(format!("worst relative residual {worst:e} over 10 points"))
}

fn constrained_partials(corpora: &mut Corpora) -> Outcome {
    use Quantity::*;
    let system = ThermoSystem::new(corpora.get(14, TMAX)).map_err(|e| e.to_string())?;
    let (mut worst, mut worst_cond): (f64, f64) = (0.0, 0.0);
    for p in INTERIOR.map(point) {
        let c = algthermo::thermo::conjugates(&p).map_err(|e| e.to_string())?;
        for (target, wrt, held, expected) in [
            (S, E, [V, N], p.beta),
            (E, V, [S, N], -c.pressure),
            (E, N, [S, V], c.potential),
        ] {
            let d = system.constrained_partial(target, wrt, held, &p, FD_STEP).map_err(|e| e.to_string())?;
            let r = (d.value - expected).abs() / expected.abs();
            worst = worst.max(r);
            worst_cond = worst_cond.max(d.condition);
            ensure(r <= 1e-3, || format!("d{target}/d{wrt} = {} vs {expected} at {p}", d.value))?;
        }
    }
    Ok(format!("worst relative residual {worst:e}, largest condition number {worst_cond:.1}"))
}

fn maxwell(corpora: &mut Corpora) -> Outcome {
    use Quantity::*;
    let system = ThermoSystem::new(corpora.get(14, TMAX)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for p in INTERIOR.map(point) {
        let dt_dv = system.constrained_partial(T, V, [S, N], &p, FD_STEP).map_err(|e| e.to_string())?.value;
        let dp_ds = system.constrained_partial(P, S, [V, N], &p, FD_STEP).map_err(|e| e.to_string())?.value;
        let r = (dt_dv + dp_ds).abs() / dt_dv.abs().max(dp_ds.abs());
        worst = worst.max(r);
        ensure(r <= 1e-3, || format!("dT/dV = {dt_dv}, dP/dS = {dp_ds} at {p}"))?;
    }
    Ok(format!("worst relative residual {worst:e}"))
}

fn cycle_theorem(corpora: &mut Corpora) -> Outcome {
    let system = ThermoSystem::new(corpora.get(14, TMAX)).map_err(|e| e.to_string())?;
    let spec: LoopSpec = REFERENCE_LOOP.parse().map_err(|e: algthermo::thermo::ThermoError| e.to_string())?;
    let path = build_loop(&system, &spec).map_err(|e| e.to_string())?;
    let r256 = cycle_integrals(&system, &path, 256).map_err(|e| e.to_string())?;
    let r512 = cycle_integrals(&system, &path, 512).map_err(|e| e.to_string())?;
    let rel = r256.closure_residual / r256.delta_q.abs();
    let ratio = r256.closure_residual / r512.closure_residual;
    ensure(rel <= 1e-3, || format!("closure residual {rel:e} of |dQ| at refinement 256"))?;
    ensure(ratio >= 4.0, || format!("residual only fell by {ratio} from 256 to 512"))?;
    Ok(format!(
        "dQ = {:e}, residual/|dQ| = {rel:e} at 256, decrease 256->512 = {ratio:.7}x",
        r256.delta_q
    ))
}

/// Perturbs the Gibbs measure along directions that keep total mass and
/// the three means fixed, and checks that entropy drops.
fn gibbs_maximality(corpora: &mut Corpora) -> Outcome {
    let corpus = corpora.get(14, TMAX);
    let ensemble = TruncatedEnsemble::from_corpus(corpus).map_err(|e| e.to_string())?;
    let records = corpus.records();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut smallest_gap = f64::INFINITY;
    for p in [(0.5, 0.8, 0.2), (1.0, 1.0, 0.5), (0.2, LN_2, 0.05)].map(point) {
        let probs = ensemble.probabilities(&p);
        let entropy = |q: &[f64]| -> Result<f64, String> {
            FiniteMeasure::probability(q.iter().copied().enumerate())
                .map(|m| m.entropy())
                .map_err(|e| e.to_string())
        };
        let s_p = entropy(&probs)?;
        ensure(s_p == entropy(&probs.clone())?, || "entropy not reproducible".into())?;
        let s_lib = ensemble.stats(&p).map_err(|e| e.to_string())?.entropy_s;
        ensure((s_p - s_lib).abs() <= 1e-12 * s_p, || format!("entropy {s_p} vs {s_lib}"))?;

        // Perturb the 40 most probable records.
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
        let support = &order[..40.min(order.len())];
        let k = support.len();
        let rows = DMatrix::from_fn(4, k, |r, j| {
            let rec = &records[support[j]];
            match r {
                0 => 1.0,
                1 => rec.log_runtime(),
                2 => rec.length() as f64,
                _ => rec.output as f64,
            }
        });
        let gram = (&rows * rows.transpose()).lu();
        let project = |u: DVector<f64>| -> Result<DVector<f64>, String> {
            let coef = gram.solve(&(&rows * &u)).ok_or("singular constraint system")?;
            Ok(u - rows.transpose() * coef)
        };
        for _ in 0..100 {
            let raw = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let u = project(project(raw)?)?;
            // Largest step keeping q nonnegative, then a random fraction of it.
            let limit = (0..k)
                .filter(|&j| u[j] < 0.0)
                .map(|j| probs[support[j]] / -u[j])
                .fold(f64::INFINITY, f64::min);
            let eps = limit * rng.random_range(0.05..0.95);
            let mut q = probs.clone();
            for j in 0..k {
                q[support[j]] += eps * u[j];
            }
            ensure(q.iter().all(|&x| x >= 0.0), || "perturbation left the simplex".into())?;
            let drift = (rows.clone() * DVector::from_fn(k, |j, _| q[support[j]] - probs[support[j]])).amax();
            ensure(drift <= 1e-12, || format!("perturbation moved a constraint by {drift:e}"))?;
            let s_q = entropy(&q)?;
            ensure(s_q < s_p, || format!("entropy rose from {s_p} to {s_q} at {p}"))?;
            smallest_gap = smallest_gap.min(s_p - s_q);
        }
    }
    Ok(format!("300 perturbations, smallest entropy drop {smallest_gap:e} nats"))
}

fn coding_bound(corpora: &mut Corpora) -> Outcome {
    let corpus = corpora.get(20, TMAX);
    let outputs: BTreeSet<u64> = corpus.records().iter().map(|r| r.output).collect();
    for &n in &outputs {
        let h = algorithmic_entropy(corpus, LN_2, n).map_err(|e| e.to_string())?;
        let proxies = complexity_proxies(corpus, n).ok_or(format!("no proxies for witnessed n={n}"))?;
        let upper = h.upper_bits().ok_or(format!("no witness for n={n}"))?;
        ensure(upper <= proxies.k_proxy as f64, || {
            format!("n={n}: entropy {upper} bits exceeds k_proxy {}", proxies.k_proxy)
        })?;
        ensure(proxies.k_proxy as f64 <= proxies.levin_proxy, || {
            format!("n={n}: k_proxy {} exceeds levin_proxy {}", proxies.k_proxy, proxies.levin_proxy)
        })?;
    }
    Ok(format!("{} witnessed outputs", outputs.len()))
}

fn divergence_guards(corpora: &mut Corpora) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("c.corpus");
    algthermo::enumerate::save_corpus(corpora.get(8, TMAX), &path).map_err(|e| e.to_string())?;
    for (beta, gamma, delta) in [("0", "0", "0"), ("1", "0.6", "0.5"), ("0", "0.69", "0")] {
        let out = Command::new(env!("CARGO_BIN_EXE_algthermo"))
            .args(["stats", "--corpus", path.to_str().unwrap()])
            .args(["--beta", beta, "--gamma", gamma, "--delta", delta])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.code() == Some(1), || {
            format!("({beta}, {gamma}, {delta}) exited with {:?}", out.status.code())
        })?;
    }
    Ok("(0,0,0), gamma=0.6 and gamma=0.69 refused with exit code 1".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(&mut Corpora) -> Outcome); 11] = [
        ("oracle equivalence", oracle_equivalence),
        ("Kraft soundness", kraft_soundness),
        ("enclosure nesting", enclosure_nesting),
        ("derivative identities", derivative_identities),
        ("entropy identity", entropy_identity),
        ("constrained partials", constrained_partials),
        ("Maxwell relation", maxwell),
        ("cycle theorem", cycle_theorem),
        ("Gibbs maximality", gibbs_maximality),
        ("coding bound", coding_bound),
        ("divergence guards", divergence_guards),
    ];
    let mut corpora = Corpora::default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check(&mut corpora);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:2} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:2} {name}: FAIL ({why}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

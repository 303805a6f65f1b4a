//! Property tests for enumeration and ensembles against direct recomputation.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::sync::OnceLock;

use algthermo::ensemble::{
    algorithmic_entropy, complexity_proxies, gibbs_stats, output_measure, partition_enclosure,
    relative_entropy, EnsembleParams, FiniteMeasure, TruncatedEnsemble,
};
use algthermo::enumerate::{dovetail_enumerate, CorpusSnapshot, Enumerator};
use algthermo::vm::{run, RunOutcome};
use algthermo::BitString;
use proptest::prelude::*;

fn corpus(len: u32) -> &'static CorpusSnapshot {
    static CACHE: OnceLock<Vec<CorpusSnapshot>> = OnceLock::new();
    let all = CACHE.get_or_init(|| (0..=16).map(|l| dovetail_enumerate(l.max(1), 4096, 1).unwrap()).collect());
    &all[len as usize]
}

/// Weights straight from the definition, no shifting or compensation.
fn naive_probabilities(c: &CorpusSnapshot, p: &EnsembleParams) -> Vec<f64> {
    let w: Vec<f64> = c
        .records()
        .iter()
        .map(|r| {
            let e = (r.steps as f64).log2();
            (-p.beta * e - p.gamma * r.bits.len() as f64 - p.delta * r.output as f64).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn certified_params() -> impl Strategy<Value = EnsembleParams> {
    (0.0..3.0f64, LN_2..3.0f64, 0.0..3.0f64).prop_map(|(b, g, d)| EnsembleParams::new(b, g, d))
}

#[test]
fn records_grow_with_both_caps() {
    let caps = [(6, 16), (8, 16), (8, 256), (12, 4), (12, 256), (14, 4096)];
    for (i, &(l1, t1)) in caps.iter().enumerate() {
        let small = dovetail_enumerate(l1, t1, 1).unwrap();
        for &(l2, t2) in &caps[i..] {
            if l2 < l1 || t2 < t1 {
                continue;
            }
            let big = dovetail_enumerate(l2, t2, 1).unwrap();
            for r in small.records() {
                assert_eq!(big.record(&r.bits), Some(r), "({l1},{t1}) -> ({l2},{t2})");
            }
        }
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let one = Enumerator::new().threads(1).dovetail(16, 1024).unwrap();
    for threads in [2, 3, 5] {
        assert_eq!(Enumerator::new().threads(threads).dovetail(16, 1024).unwrap(), one);
    }
}

#[test]
fn decided_strings_are_mutually_prefix_free() {
    for len in [8, 12, 16] {
        let c = corpus(len);
        let mut all: Vec<BitString> = c.records().iter().map(|r| r.bits).collect();
        all.extend(c.running().iter().map(|r| r.bits));
        all.extend(c.live_prefixes().iter().copied());
        // Quadratic check on a sample of pairs, independent of the library's
        // sort-based one.
        let step = (all.len() / 400).max(1);
        for x in all.iter().step_by(step) {
            for y in &all {
                assert!(x == y || !x.is_prefix_of(y), "{x} is a prefix of {y}");
            }
        }
        assert!(c.check_prefix_free().is_ok());
    }
}

#[test]
fn zero_output_family_is_witnessed() {
    // DEC^k HALT halts after k+1 steps with output 0 at length 2k + 4.
    for len in [6, 10, 16] {
        let c = corpus(len);
        let max_k = (len - 4) / 2;
        for k in 0..=max_k {
            let bits: BitString = format!("{}1111", "01".repeat(k as usize)).parse().unwrap();
            let r = c.record(&bits).unwrap_or_else(|| panic!("missing {bits}"));
            assert_eq!((r.steps, r.output), (k as u64 + 1, 0));
        }
        assert!(c.records_with_output(0).count() as u32 > max_k);
    }
}

#[test]
fn records_rerun_and_have_nonnegative_energy() {
    let c = corpus(14);
    for r in c.records() {
        assert!(r.log_runtime() >= 0.0);
        match run(&r.bits, c.max_steps()) {
            RunOutcome::Halted { output, steps, consumed } => {
                assert_eq!((output, steps, consumed), (r.output, r.steps, r.bits.len()));
            }
            other => panic!("{}: {other:?}", r.bits),
        }
    }
}

#[test]
fn coding_bound_and_proxy_order() {
    let c = corpus(16);
    let outputs: std::collections::BTreeSet<u64> = c.records().iter().map(|r| r.output).collect();
    for n in outputs {
        let h = algorithmic_entropy(c, LN_2, n).unwrap();
        let p = complexity_proxies(c, n).unwrap();
        let shortest = c.records_with_output(n).map(|r| r.bits.len()).min().unwrap();
        assert_eq!(p.k_proxy, shortest);
        assert!(h.upper_bits().unwrap() <= p.k_proxy as f64);
        assert!(h.lower_bits() <= h.upper_bits().unwrap());
        assert!(p.k_proxy as f64 <= p.levin_proxy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stats_match_naive_sums(params in certified_params()) {
        let c = corpus(12);
        let s = gibbs_stats(c, &params).unwrap();
        let p = naive_probabilities(c, &params);
        let mean = |f: &dyn Fn(usize) -> f64| p.iter().enumerate().map(|(i, pi)| pi * f(i)).sum::<f64>();
        let rec = c.records();
        let me = mean(&|i| (rec[i].steps as f64).log2());
        let mv = mean(&|i| rec[i].bits.len() as f64);
        let mn = mean(&|i| rec[i].output as f64);
        let entropy = -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>();
        for (got, want) in [(s.mean_e, me), (s.mean_v, mv), (s.mean_n, mn), (s.entropy_s, entropy)] {
            prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-3), "{got} vs {want}");
        }
        let var_v = mean(&|i| (rec[i].bits.len() as f64 - mv).powi(2));
        prop_assert!((s.var_v - var_v).abs() <= 1e-9 * var_v.max(1e-6));
    }

    #[test]
    fn moment_bounds(params in certified_params()) {
        let s = gibbs_stats(corpus(12), &params).unwrap();
        prop_assert!(s.var_e >= 0.0 && s.var_v >= 0.0 && s.var_n >= 0.0);
        prop_assert!(s.entropy_s >= 0.0);
        let slack = 1.0 + 1e-12;
        prop_assert!(s.cov_ev.abs() <= (s.var_e * s.var_v).sqrt() * slack);
        prop_assert!(s.cov_en.abs() <= (s.var_e * s.var_n).sqrt() * slack);
        prop_assert!(s.cov_vn.abs() <= (s.var_v * s.var_n).sqrt() * slack);
        prop_assert!((s.entropy_bits() - s.entropy_s / LN_2).abs() <= 1e-12 * s.entropy_bits().max(1.0));
    }

    #[test]
    fn enclosure_shape(params in certified_params()) {
        let e = partition_enclosure(corpus(12), &params).unwrap();
        prop_assert!(0.0 <= e.z_lo && e.z_lo <= e.z_hi);
        prop_assert!(e.tail_unexplored >= 0.0 && e.tail_running >= 0.0);
        prop_assert!((e.z_hi - (e.z_lo + e.tail_unexplored + e.tail_running)).abs() <= 1e-15 * e.z_hi);
        let ens = TruncatedEnsemble::from_corpus(corpus(12)).unwrap();
        let total: f64 = ens.probabilities(&params).iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn enclosures_nest_in_length(params in certified_params(), l1 in 4u32..=14, extra in 0u32..=2) {
        let l2 = (l1 + extra).min(16);
        let a = partition_enclosure(corpus(l1), &params).unwrap();
        let b = partition_enclosure(corpus(l2), &params).unwrap();
        prop_assert!(b.z_lo >= a.z_lo, "{} < {}", b.z_lo, a.z_lo);
        prop_assert!(b.z_hi <= a.z_hi, "{} > {}", b.z_hi, a.z_hi);
    }

    #[test]
    fn relative_entropy_is_nonpositive(masses in prop::collection::vec((0.01..1.0f64, 0.01..1.0f64), 1..8)) {
        let p = FiniteMeasure::new(masses.iter().enumerate().map(|(i, m)| (i, m.0))).unwrap().normalized().unwrap();
        let q = FiniteMeasure::new(masses.iter().enumerate().map(|(i, m)| (i, m.1))).unwrap().normalized().unwrap();
        let d = relative_entropy(&p, &q).unwrap();
        prop_assert!(d <= 1e-15);
        prop_assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        // Independent evaluation of -Σ p ln(p/q).
        let direct: f64 = p.iter().map(|(k, pk)| -pk * (pk / q.mass(k)).ln()).sum();
        prop_assert!((d - direct).abs() <= 1e-12);
    }

    #[test]
    fn output_measure_is_pushforward(params in certified_params()) {
        let c = corpus(10);
        let m = output_measure(c, &params).unwrap();
        let p = naive_probabilities(c, &params);
        let mut direct: BTreeMap<u64, f64> = BTreeMap::new();
        for (r, pi) in c.records().iter().zip(&p) {
            *direct.entry(r.output).or_default() += pi;
        }
        for (n, want) in direct {
            prop_assert!((m.mass(&n) - want).abs() <= 1e-12);
        }
    }
}

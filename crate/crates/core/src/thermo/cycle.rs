//! Closed loops in parameter space and their cycle integrals.
//!
//! A loop is a list of vertices plus one leg per vertex; leg `i` runs from
//! vertex `i` to vertex `i + 1` (wrapping). Legs are straight lines in
//! `(β, γ, δ)`, iso-`V` curves driven by `β`, or iso-`S` curves driven by
//! `γ`, the latter two with mean `N` held as well.
//!
//! Loop spec files:
//!
//! ```text
//! # comment
//! START <beta> <gamma> <delta>
//! ISO_V <beta_target | close>
//! ISO_S <gamma_target | close>
//! LINE <beta> <gamma> <delta>
//! ```
//!
//! `ISO_V close` moves along the iso-`V` curve to where `S` equals its value
//! at the start vertex; `ISO_S close` moves along the iso-`S` curve to where
//! `V` equals its start value. The last leg must end on the start vertex.

use std::cmp::Ordering;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use super::isoline::{trace_steps, trace_with, Corrector, CORRECTOR_TOL};
use super::{require_interior, Coordinate, Quantity, ThermoError, ThermoSystem};
use crate::ensemble::EnsembleParams;
use crate::summation::CompensatedSum;

/// Step used when tracing legs while building a loop from a spec.
const BUILD_STEP: f64 = 0.02;
/// Relative tolerance for vertices that should coincide.
const VERTEX_TOL: f64 = 1e-6;
const CLOSE_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LegKind {
    Parametric,
    /// Mean length `v` and mean output `n` held; driven by `β`.
    IsoV { v: f64, n: f64 },
    /// Entropy `s` and mean output `n` held; driven by `γ`.
    IsoS { s: f64, n: f64 },
}

impl LegKind {
    pub fn name(&self) -> &'static str {
        match self {
            LegKind::Parametric => "line",
            LegKind::IsoV { .. } => "iso_v",
            LegKind::IsoS { .. } => "iso_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopPath {
    vertices: Vec<EnsembleParams>,
    legs: Vec<LegKind>,
}

impl LoopPath {
    /// `vertices` lists each corner once (the first is not repeated).
    pub fn new(vertices: Vec<EnsembleParams>, legs: Vec<LegKind>) -> Result<Self, ThermoError> {
        if vertices.len() < 3 {
            return Err(ThermoError::InvalidArgument("a loop needs at least 3 vertices".into()));
        }
        if legs.len() != vertices.len() {
            return Err(ThermoError::InvalidArgument(format!(
                "{} vertices need {} legs, got {}",
                vertices.len(),
                vertices.len(),
                legs.len()
            )));
        }
        for v in &vertices {
            require_interior(v)?;
        }
        Ok(LoopPath { vertices, legs })
    }

    /// Straight-line polygon.
    pub fn polygon(vertices: Vec<EnsembleParams>) -> Result<Self, ThermoError> {
        let legs = vec![LegKind::Parametric; vertices.len()];
        Self::new(vertices, legs)
    }

    pub fn vertices(&self) -> &[EnsembleParams] {
        &self.vertices
    }

    pub fn legs(&self) -> &[LegKind] {
        &self.legs
    }

    /// The same loop traversed the other way round.
    pub fn reversed(&self) -> LoopPath {
        let n = self.vertices.len();
        LoopPath {
            vertices: (0..n).map(|k| self.vertices[(n - k) % n]).collect(),
            legs: (0..n).map(|k| self.legs[n - 1 - k]).collect(),
        }
    }

    fn leg_ends(&self, i: usize) -> (EnsembleParams, EnsembleParams) {
        (self.vertices[i], self.vertices[(i + 1) % self.vertices.len()])
    }
}

/// Per-segment contributions, for CSV output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRow {
    pub leg: usize,
    pub segment: usize,
    pub kind: &'static str,
    pub midpoint: EnsembleParams,
    pub temperature: f64,
    pub pressure: f64,
    pub potential: f64,
    pub ds: f64,
    pub dv: f64,
    pub dn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    /// `∮ T dS`.
    pub delta_q: f64,
    /// `∮ P dV`.
    pub work_term: f64,
    /// `∮ μ dN`.
    pub mu_term: f64,
    /// `|ΔQ - (W - M)|`.
    pub closure_residual: f64,
    pub segments: Vec<SegmentRow>,
}

/// Integrates `T dS`, `P dV` and `μ dN` around `path` with the midpoint
/// rule on `refinement` segments per leg (`2 * refinement + 1` samples).
///
/// Each leg is sampled starting from its lower end, so reversing a loop
/// negates every integral up to summation order.
pub fn cycle_integrals(
    system: &ThermoSystem,
    path: &LoopPath,
    refinement: usize,
) -> Result<CycleReport, ThermoError> {
    if refinement == 0 {
        return Err(ThermoError::InvalidArgument("refinement must be at least 1".into()));
    }
    let (mut q, mut w, mut m) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    let mut segments = Vec::with_capacity(path.legs.len() * refinement);
    for (leg, kind) in path.legs.iter().enumerate() {
        let (a, b) = path.leg_ends(leg);
        let samples = sample_leg(system, kind, a, b, 2 * refinement)?;
        let states = samples.iter().map(|p| system.state(p)).collect::<Result<Vec<_>, _>>()?;
        for j in 0..refinement {
            let (lo, mid, hi) = (&states[2 * j], &states[2 * j + 1], &states[2 * j + 2]);
            let d = |quantity| hi.get(quantity) - lo.get(quantity);
            let c = mid.conjugates;
            let (ds, dv, dn) = (d(Quantity::S), d(Quantity::V), d(Quantity::N));
            q.add(c.temperature * ds);
            w.add(c.pressure * dv);
            m.add(c.potential * dn);
            segments.push(SegmentRow {
                leg,
                segment: j,
                kind: kind.name(),
                midpoint: mid.params,
                temperature: c.temperature,
                pressure: c.pressure,
                potential: c.potential,
                ds,
                dv,
                dn,
            });
        }
    }
    let (delta_q, work_term, mu_term) = (q.value(), w.value(), m.value());
    Ok(CycleReport {
        delta_q,
        work_term,
        mu_term,
        closure_residual: (delta_q - (work_term - mu_term)).abs(),
        segments,
    })
}

/// `n + 1` points from `a` to `b` along the leg.
fn sample_leg(
    system: &ThermoSystem,
    kind: &LegKind,
    a: EnsembleParams,
    b: EnsembleParams,
    n: usize,
) -> Result<Vec<EnsembleParams>, ThermoError> {
    let (hold, targets, drive) = match *kind {
        LegKind::Parametric => {
            let flip = lex_cmp(&a, &b) == Ordering::Greater;
            let (lo, hi) = if flip { (b, a) } else { (a, b) };
            let (x, y) = (lo.as_array(), hi.as_array());
            let mut pts: Vec<_> = (0..=n)
                .map(|k| {
                    if k == n {
                        hi
                    } else {
                        let t = k as f64 / n as f64;
                        EnsembleParams::from_array(std::array::from_fn(|i| x[i] + t * (y[i] - x[i])))
                    }
                })
                .collect();
            if flip {
                pts.reverse();
            }
            return Ok(pts);
        }
        LegKind::IsoV { v, n: held_n } => (Quantity::V, [v, held_n], Coordinate::Beta),
        LegKind::IsoS { s, n: held_n } => (Quantity::S, [s, held_n], Coordinate::Gamma),
    };
    let corrector = Corrector { system, hold, targets, drive };
    for end in [a, b] {
        let state = system.state(&end)?;
        for (value, target) in [state.get(hold), state.get(Quantity::N)].into_iter().zip(targets) {
            if (value - target).abs() > VERTEX_TOL * target.abs().max(1.0) {
                return Err(ThermoError::OpenLoop(format!(
                    "vertex {end} is off the {} leg ({value} vs {target})",
                    kind.name()
                )));
            }
        }
    }
    let i = drive.index();
    let flip = a.as_array()[i] > b.as_array()[i];
    let (lo, hi) = if flip { (b, a) } else { (a, b) };
    let mut pts = trace_steps(&corrector, lo, hi.as_array()[i], n)?;
    let reached = *pts.last().expect("trace includes its start");
    if !close_enough(&reached, &hi) {
        return Err(ThermoError::OpenLoop(format!(
            "{} leg from {lo} reaches {reached}, not the vertex {hi}",
            kind.name()
        )));
    }
    *pts.last_mut().expect("nonempty") = hi;
    if flip {
        pts.reverse();
    }
    Ok(pts)
}

fn lex_cmp(a: &EnsembleParams, b: &EnsembleParams) -> Ordering {
    let (x, y) = (a.as_array(), b.as_array());
    x.iter().zip(&y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn close_enough(a: &EnsembleParams, b: &EnsembleParams) -> bool {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .all(|(x, y)| (x - y).abs() <= VERTEX_TOL * y.abs().max(1.0))
}

/// One line of a loop spec after `START`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LegSpec {
    /// `ISO_V`: `None` means `close`.
    IsoV(Option<f64>),
    /// `ISO_S`: `None` means `close`.
    IsoS(Option<f64>),
    Line(EnsembleParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    pub start: EnsembleParams,
    pub legs: Vec<LegSpec>,
}

impl FromStr for LoopSpec {
    type Err = ThermoError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let bad = |line: usize, msg: String| ThermoError::InvalidArgument(format!("loop spec line {line}: {msg}"));
        let mut start = None;
        let mut legs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let keyword = fields.next().unwrap_or_default();
            let args: Vec<&str> = fields.collect();
            let number = |s: &str| s.parse::<f64>().map_err(|e| bad(line_no, format!("bad number {s:?}: {e}")));
            let point = |args: &[&str]| -> Result<EnsembleParams, ThermoError> {
                if args.len() != 3 {
                    return Err(bad(line_no, format!("{keyword} takes beta gamma delta")));
                }
                Ok(EnsembleParams::new(number(args[0])?, number(args[1])?, number(args[2])?))
            };
            let target = |args: &[&str]| -> Result<Option<f64>, ThermoError> {
                match args {
                    ["close"] => Ok(None),
                    [x] => number(x).map(Some),
                    _ => Err(bad(line_no, format!("{keyword} takes one target or `close`"))),
                }
            };
            match keyword {
                "START" if start.is_none() && legs.is_empty() => start = Some(point(&args)?),
                "START" => return Err(bad(line_no, "START must appear once, first".into())),
                _ if start.is_none() => return Err(bad(line_no, "expected START first".into())),
                "ISO_V" => legs.push(LegSpec::IsoV(target(&args)?)),
                "ISO_S" => legs.push(LegSpec::IsoS(target(&args)?)),
                "LINE" => legs.push(LegSpec::Line(point(&args)?)),
                other => return Err(bad(line_no, format!("unknown keyword {other:?}"))),
            }
        }
        let start = start.ok_or_else(|| ThermoError::InvalidArgument("loop spec has no START".into()))?;
        Ok(LoopSpec { start, legs })
    }
}

/// Resolves a spec into a loop by tracing each leg from the previous vertex.
pub fn build_loop(system: &ThermoSystem, spec: &LoopSpec) -> Result<LoopPath, ThermoError> {
    let start_state = system.state(&spec.start)?;
    let mut vertices = vec![spec.start];
    let mut kinds = Vec::new();
    for leg in &spec.legs {
        let cur = *vertices.last().expect("starts nonempty");
        let state = system.state(&cur)?;
        let (v, s, n) = (state.get(Quantity::V), state.get(Quantity::S), state.get(Quantity::N));
        let (kind, end) = match *leg {
            LegSpec::Line(p) => (LegKind::Parametric, p),
            LegSpec::IsoV(target) => {
                let end = match target {
                    Some(beta) => trace_leg(system, Quantity::V, [v, n], Coordinate::Beta, cur, beta)?,
                    None => solve_vertex(system, [start_state.get(Quantity::S), v, n], &vertices)?,
                };
                (LegKind::IsoV { v, n }, end)
            }
            LegSpec::IsoS(target) => {
                let end = match target {
                    Some(gamma) => trace_leg(system, Quantity::S, [s, n], Coordinate::Gamma, cur, gamma)?,
                    None => solve_vertex(system, [s, start_state.get(Quantity::V), n], &vertices)?,
                };
                (LegKind::IsoS { s, n }, end)
            }
        };
        vertices.push(end);
        kinds.push(kind);
    }
    let last = vertices.pop().expect("nonempty");
    if kinds.is_empty() || !close_enough(&last, &spec.start) {
        return Err(ThermoError::OpenLoop(format!(
            "last vertex {last} is not the start {}",
            spec.start
        )));
    }
    LoopPath::new(vertices, kinds)
}

fn trace_leg(
    system: &ThermoSystem,
    hold: Quantity,
    targets: [f64; 2],
    drive: Coordinate,
    from: EnsembleParams,
    to: f64,
) -> Result<EnsembleParams, ThermoError> {
    let corrector = Corrector { system, hold, targets, drive };
    Ok(*trace_with(&corrector, from, to, BUILD_STEP)?.last().expect("nonempty"))
}

/// Damped Newton for the point with `(S, V, N) = target`, started from the
/// best of a few guesses built from the vertices so far.
fn solve_vertex(
    system: &ThermoSystem,
    target: [f64; 3],
    vertices: &[EnsembleParams],
) -> Result<EnsembleParams, ThermoError> {
    let scaled_norm = |p: &EnsembleParams| -> Option<f64> {
        let s = system.state(p).ok()?;
        let r = [s.get(Quantity::S), s.get(Quantity::V), s.get(Quantity::N)];
        Some(
            r.iter()
                .zip(target)
                .map(|(x, t)| ((x - t) / t.abs().max(1.0)).powi(2))
                .sum::<f64>()
                .sqrt(),
        )
    };
    let first = vertices[0];
    let cur = *vertices.last().expect("nonempty");
    let mut guesses = vec![cur, first];
    if vertices.len() >= 2 {
        let prev = vertices[vertices.len() - 2].as_array();
        let (f, c) = (first.as_array(), cur.as_array());
        guesses.insert(0, EnsembleParams::from_array(std::array::from_fn(|i| f[i] + c[i] - prev[i])));
    }
    let (mut x, mut norm) = guesses
        .into_iter()
        .filter_map(|g| scaled_norm(&g).map(|n| (g, n)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(ThermoError::OpenLoop("no guess for the closing vertex is in the region".into()))?;

    for _ in 0..CLOSE_ITERATIONS {
        if norm <= CORRECTOR_TOL {
            return Ok(x);
        }
        let grads = system.gradients(&x, 1e-5)?;
        let state = system.state(&x)?;
        let rows = [Quantity::S, Quantity::V, Quantity::N];
        let jac = Matrix3::from_fn(|r, c| grads[rows[r] as usize][c]);
        let rhs = Vector3::from_fn(|r, _| state.get(rows[r]) - target[r]);
        let dx = jac
            .lu()
            .solve(&rhs)
            .ok_or(ThermoError::IllConditioned { condition: f64::INFINITY })?;
        let mut lambda = 1.0;
        loop {
            let a = x.as_array();
            let trial = EnsembleParams::from_array(std::array::from_fn(|i| a[i] - lambda * dx[i]));
            if let Some(n) = scaled_norm(&trial).filter(|n| *n < norm) {
                x = trial;
                norm = n;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(ThermoError::NewtonDiverged { iterations: CLOSE_ITERATIONS, last: x });
            }
        }
    }
    if norm <= CORRECTOR_TOL {
        return Ok(x);
    }
    Err(ThermoError::NewtonDiverged { iterations: CLOSE_ITERATIONS, last: x })
}

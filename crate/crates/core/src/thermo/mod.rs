//! Thermodynamic calculus on truncated Gibbs ensembles.
//!
//! Everything here treats the record sum as an exact partition function, so
//! the identities checked (means as log-derivatives, `dE = T dS - P dV + μ dN`,
//! Maxwell relations, cycle theorems) hold exactly up to finite-difference and
//! quadrature error.
//!
//! Finite differences are central, with step `h * max(1, |coordinate|)`.

mod cycle;
mod isoline;

pub use cycle::{
    build_loop, cycle_integrals, CycleReport, LegKind, LegSpec, LoopPath, LoopSpec, SegmentRow,
};
pub use isoline::trace_isoline;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::enumerate::CorpusSnapshot;
use crate::ensemble::{ConjugateReadout, EnsembleError, EnsembleParams, EnsembleStats, TruncatedEnsemble};

/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Jacobians with a larger 2-norm condition number are refused.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermoError {
    #[error("temperature undefined at β = 0 (infinite-temperature limit)")]
    UndefinedTemperature,
    #[error("{params} is outside the certified region with β > 0")]
    OutsideRegion { params: EnsembleParams },
    #[error("Jacobian is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("Newton corrector did not converge in {iterations} iterations (last iterate {last})")]
    NewtonDiverged { iterations: usize, last: EnsembleParams },
    #[error("loop does not close: {0}")]
    OpenLoop(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// A coordinate of parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coordinate {
    Beta,
    Gamma,
    Delta,
}

impl Coordinate {
    pub const ALL: [Coordinate; 3] = [Coordinate::Beta, Coordinate::Gamma, Coordinate::Delta];

    pub fn index(self) -> usize {
        match self {
            Coordinate::Beta => 0,
            Coordinate::Gamma => 1,
            Coordinate::Delta => 2,
        }
    }

    /// The two other coordinates, in order.
    pub fn others(self) -> [Coordinate; 2] {
        match self {
            Coordinate::Beta => [Coordinate::Gamma, Coordinate::Delta],
            Coordinate::Gamma => [Coordinate::Beta, Coordinate::Delta],
            Coordinate::Delta => [Coordinate::Beta, Coordinate::Gamma],
        }
    }
}

/// A state function of the ensemble. `E`, `V`, `N` are means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    S,
    E,
    V,
    N,
    T,
    P,
    Mu,
}

impl Quantity {
    pub const ALL: [Quantity; 7] = [
        Quantity::S,
        Quantity::E,
        Quantity::V,
        Quantity::N,
        Quantity::T,
        Quantity::P,
        Quantity::Mu,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::S => "S",
            Quantity::E => "E",
            Quantity::V => "V",
            Quantity::N => "N",
            Quantity::T => "T",
            Quantity::P => "P",
            Quantity::Mu => "mu",
        })
    }
}

impl FromStr for Quantity {
    type Err = ThermoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "S" => Quantity::S,
            "E" => Quantity::E,
            "V" => Quantity::V,
            "N" => Quantity::N,
            "T" => Quantity::T,
            "P" => Quantity::P,
            "mu" | "Mu" | "μ" => Quantity::Mu,
            other => return Err(ThermoError::InvalidArgument(format!("unknown quantity {other:?}"))),
        })
    }
}

/// `T = 1/β`, `P = γ/β`, `μ = -δ/β`.
pub fn conjugates(params: &EnsembleParams) -> Result<ConjugateReadout, ThermoError> {
    if !(params.beta > 0.0) {
        return Err(ThermoError::UndefinedTemperature);
    }
    Ok(ConjugateReadout {
        temperature: 1.0 / params.beta,
        pressure: params.gamma / params.beta,
        // `+ 0.0` turns -0 into 0 at δ = 0.
        potential: -(params.delta / params.beta) + 0.0,
    })
}

/// All seven state quantities at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub params: EnsembleParams,
    pub stats: EnsembleStats,
    pub conjugates: ConjugateReadout,
}

impl State {
    pub fn get(&self, q: Quantity) -> f64 {
        match q {
            Quantity::S => self.stats.entropy_s,
            Quantity::E => self.stats.mean_e,
            Quantity::V => self.stats.mean_v,
            Quantity::N => self.stats.mean_n,
            Quantity::T => self.conjugates.temperature,
            Quantity::P => self.conjugates.pressure,
            Quantity::Mu => self.conjugates.potential,
        }
    }

    fn values(&self) -> [f64; 7] {
        Quantity::ALL.map(|q| self.get(q))
    }
}

/// Gradient and Hessian of `ln z_trunc` in `(β, γ, δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnZDerivatives {
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

/// A constrained partial derivative and the condition number of the
/// Jacobian it was solved through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedPartial {
    pub value: f64,
    pub condition: f64,
}

/// A truncated ensemble plus the finite-difference machinery on top of it.
#[derive(Debug, Clone)]
pub struct ThermoSystem {
    ensemble: TruncatedEnsemble,
}

impl ThermoSystem {
    pub fn new(corpus: &CorpusSnapshot) -> Result<Self, ThermoError> {
        Ok(ThermoSystem { ensemble: TruncatedEnsemble::from_corpus(corpus)? })
    }

    pub fn from_ensemble(ensemble: TruncatedEnsemble) -> Self {
        ThermoSystem { ensemble }
    }

    pub fn ensemble(&self) -> &TruncatedEnsemble {
        &self.ensemble
    }

    pub fn stats(&self, params: &EnsembleParams) -> Result<EnsembleStats, ThermoError> {
        Ok(self.ensemble.stats(params)?)
    }

    /// Full state at a point of the certified region with `β > 0`.
    pub fn state(&self, params: &EnsembleParams) -> Result<State, ThermoError> {
        require_interior(params)?;
        Ok(State {
            params: *params,
            stats: self.ensemble.stats(params)?,
            conjugates: conjugates(params)?,
        })
    }

    pub fn quantity(&self, q: Quantity, params: &EnsembleParams) -> Result<f64, ThermoError> {
        Ok(self.state(params)?.get(q))
    }

    /// Central-difference gradient and Hessian of `ln z_trunc`. Every
    /// stencil point must be certified.
    pub fn ln_z_derivatives(&self, params: &EnsembleParams, h: f64) -> Result<LnZDerivatives, ThermoError> {
        let steps = fd_steps(params, h)?;
        let x = params.as_array();
        let at = |offsets: [f64; 3]| -> Result<f64, ThermoError> {
            let p = EnsembleParams::from_array([x[0] + offsets[0], x[1] + offsets[1], x[2] + offsets[2]]);
            if !p.is_certified() {
                return Err(ThermoError::OutsideRegion { params: p });
            }
            Ok(self.ensemble.ln_z(&p))
        };
        let unit = |i: usize, s: f64| {
            let mut o = [0.0; 3];
            o[i] = s;
            o
        };
        let f0 = at([0.0; 3])?;
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for i in 0..3 {
            let hi = steps[i];
            let fp = at(unit(i, hi))?;
            let fm = at(unit(i, -hi))?;
            grad[i] = (fp - fm) / (2.0 * hi);
            hess[i][i] = (fp - 2.0 * f0 + fm) / (hi * hi);
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let (hi, hj) = (steps[i], steps[j]);
                let mut o = [0.0; 3];
                let mut corner = |si: f64, sj: f64| {
                    o = [0.0; 3];
                    o[i] = si * hi;
                    o[j] = sj * hj;
                    at(o)
                };
                let mixed = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                    / (4.0 * hi * hj);
                hess[i][j] = mixed;
                hess[j][i] = mixed;
            }
        }
        Ok(LnZDerivatives { grad, hess })
    }

    /// Central-difference gradients of all quantities, indexed like
    /// [`Quantity::ALL`].
    pub fn gradients(&self, params: &EnsembleParams, h: f64) -> Result<[[f64; 3]; 7], ThermoError> {
        let steps = fd_steps(params, h)?;
        let mut grads = [[0.0; 3]; 7];
        for i in 0..3 {
            let mut plus = params.as_array();
            let mut minus = params.as_array();
            plus[i] += steps[i];
            minus[i] -= steps[i];
            let vp = self.state(&EnsembleParams::from_array(plus))?.values();
            let vm = self.state(&EnsembleParams::from_array(minus))?.values();
            for q in 0..7 {
                grads[q][i] = (vp[q] - vm[q]) / (2.0 * steps[i]);
            }
        }
        Ok(grads)
    }

    /// `∂target/∂wrt` holding `held` fixed.
    ///
    /// Solves `J u = e_1` where the rows of `J` are the gradients of `wrt`
    /// and the two held quantities, then returns `∇target · u`.
    pub fn constrained_partial(
        &self,
        target: Quantity,
        wrt: Quantity,
        held: [Quantity; 2],
        params: &EnsembleParams,
        h: f64,
    ) -> Result<ConstrainedPartial, ThermoError> {
        if held.contains(&wrt) || held[0] == held[1] {
            return Err(ThermoError::InvalidArgument(format!(
                "∂{target}/∂{wrt} with {} and {} held is not a valid constraint set",
                held[0], held[1]
            )));
        }
        if !(params.beta > 0.0) {
            return Err(ThermoError::UndefinedTemperature);
        }
        let grads = self.gradients(params, h)?;
        let row = |q: Quantity| grads[q.index()];
        let (w, h0, h1) = (row(wrt), row(held[0]), row(held[1]));
        let jacobian = Matrix3::new(w[0], w[1], w[2], h0[0], h0[1], h0[2], h1[0], h1[1], h1[2]);
        let u = solve_checked(&jacobian, &Vector3::new(1.0, 0.0, 0.0))?;
        let t = row(target);
        Ok(ConstrainedPartial {
            value: t[0] * u.0[0] + t[1] * u.0[1] + t[2] * u.0[2],
            condition: u.1,
        })
    }

    /// Relative residual of `dE = T dS - P dV + μ dN` along `direction`.
    pub fn fundamental_residual(
        &self,
        params: &EnsembleParams,
        direction: [f64; 3],
        h: f64,
    ) -> Result<f64, ThermoError> {
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(ThermoError::InvalidArgument("direction must be nonzero".into()));
        }
        check_step(h)?;
        let x = params.as_array();
        let step = h * x.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let shifted = |s: f64| EnsembleParams::from_array(std::array::from_fn(|i| x[i] + s * step * direction[i] / norm));
        let (plus, minus) = (shifted(1.0), shifted(-1.0));
        for p in [&plus, &minus] {
            if !p.is_certified() || !(p.beta > 0.0) {
                return Err(ThermoError::OutsideRegion { params: *p });
            }
        }
        let here = self.state(params)?;
        let (sp, sm) = (self.state(&plus)?, self.state(&minus)?);
        let d = |q: Quantity| (sp.get(q) - sm.get(q)) / (2.0 * step);
        let c = here.conjugates;
        let de = d(Quantity::E);
        let rhs = c.temperature * d(Quantity::S) - c.pressure * d(Quantity::V) + c.potential * d(Quantity::N);
        Ok((de - rhs).abs() / de.abs().max(1e-12))
    }
}

/// FD steps per coordinate, `h * max(1, |c|)`.
fn fd_steps(params: &EnsembleParams, h: f64) -> Result<[f64; 3], ThermoError> {
    check_step(h)?;
    Ok(params.as_array().map(|c| h * c.abs().max(1.0)))
}

fn check_step(h: f64) -> Result<(), ThermoError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ThermoError::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    Ok(())
}

fn require_interior(params: &EnsembleParams) -> Result<(), ThermoError> {
    if !params.is_certified() || !(params.beta > 0.0) {
        return Err(ThermoError::OutsideRegion { params: *params });
    }
    Ok(())
}

/// Solves `J u = b` and returns `(u, cond_2(J))`.
fn solve_checked(jacobian: &Matrix3<f64>, b: &Vector3<f64>) -> Result<(Vector3<f64>, f64), ThermoError> {
    let sv = jacobian.singular_values();
    let (max, min) = (sv.max(), sv.min());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(ThermoError::IllConditioned { condition });
    }
    let u = jacobian
        .lu()
        .solve(b)
        .ok_or(ThermoError::IllConditioned { condition: f64::INFINITY })?;
    Ok((u, condition))
}

pub fn ln_z_derivatives(corpus: &CorpusSnapshot, params: &EnsembleParams, h: f64) -> Result<LnZDerivatives, ThermoError> {
    ThermoSystem::new(corpus)?.ln_z_derivatives(params, h)
}

pub fn constrained_partial(
    target: Quantity,
    wrt: Quantity,
    held: [Quantity; 2],
    corpus: &CorpusSnapshot,
    params: &EnsembleParams,
    h: f64,
) -> Result<ConstrainedPartial, ThermoError> {
    ThermoSystem::new(corpus)?.constrained_partial(target, wrt, held, params, h)
}

pub fn fundamental_residual(
    corpus: &CorpusSnapshot,
    params: &EnsembleParams,
    direction: [f64; 3],
    h: f64,
) -> Result<f64, ThermoError> {
    ThermoSystem::new(corpus)?.fundamental_residual(params, direction, h)
}

/// One checked relation: a computed value against its predicted value.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationCheck {
    /// Short identifier, used as a CSV column name.
    pub key: &'static str,
    pub name: &'static str,
    pub computed: f64,
    pub expected: f64,
    /// `|computed - expected| / scale`.
    pub residual: f64,
}

impl RelationCheck {
    fn relative(key: &'static str, name: &'static str, computed: f64, expected: f64, scale: f64) -> Self {
        RelationCheck {
            key,
            name,
            computed,
            expected,
            residual: (computed - expected).abs() / scale.max(f64::MIN_POSITIVE),
        }
    }
}

/// Keys of [`check_relations`] rows, in order.
pub const RELATION_KEYS: [&str; 20] = [
    "grad_beta",
    "grad_gamma",
    "grad_delta",
    "hess_ee",
    "hess_ev",
    "hess_en",
    "hess_vv",
    "hess_vn",
    "hess_nn",
    "entropy_identity",
    "ds_de",
    "ds_dv",
    "ds_dn",
    "de_ds",
    "de_dv",
    "de_dn",
    "maxwell",
    "fundamental_beta",
    "fundamental_gamma",
    "fundamental_delta",
];

/// Runs every identity at one parameter point. Residuals are relative:
///
/// * gradient of `ln Z` against minus the means;
/// * Hessian of `ln Z` against the covariance, scaled by `sqrt(var_a var_b)`;
/// * the entropy identity;
/// * `∂S/∂E|V,N = β`, `∂S/∂V|E,N = γ`, `∂S/∂N|E,V = δ`;
/// * `∂E/∂S|V,N = T`, `∂E/∂V|S,N = -P`, `∂E/∂N|S,V = μ`;
/// * the Maxwell relation `∂T/∂V|S,N = -∂P/∂S|V,N`, scaled by the larger side;
/// * `dE = T dS - P dV + μ dN` along each coordinate axis.
pub fn check_relations(
    system: &ThermoSystem,
    params: &EnsembleParams,
    h: f64,
) -> Result<Vec<RelationCheck>, ThermoError> {
    use Quantity::*;
    let state = system.state(params)?;
    let stats = state.stats;
    let c = state.conjugates;
    let mut out = Vec::with_capacity(RELATION_KEYS.len());

    let d = system.ln_z_derivatives(params, h)?;
    let means = stats.means();
    let grad_names = ["dlnZ/dbeta = -mean_E", "dlnZ/dgamma = -mean_V", "dlnZ/ddelta = -mean_N"];
    for i in 0..3 {
        out.push(RelationCheck::relative(RELATION_KEYS[i], grad_names[i], d.grad[i], -means[i], means[i].abs()));
    }
    let cov = stats.covariance();
    let hess_names = [
        "d2lnZ/dbeta2 = var_E",
        "d2lnZ/dbeta dgamma = cov_EV",
        "d2lnZ/dbeta ddelta = cov_EN",
        "d2lnZ/dgamma2 = var_V",
        "d2lnZ/dgamma ddelta = cov_VN",
        "d2lnZ/ddelta2 = var_N",
    ];
    let mut k = 0;
    for i in 0..3 {
        for j in i..3 {
            let scale = (cov[i][i] * cov[j][j]).sqrt();
            out.push(RelationCheck::relative(RELATION_KEYS[3 + k], hess_names[k], d.hess[i][j], cov[i][j], scale));
            k += 1;
        }
    }

    let rhs = stats.ln_z_trunc + params.beta * stats.mean_e + params.gamma * stats.mean_v + params.delta * stats.mean_n;
    out.push(RelationCheck {
        key: RELATION_KEYS[9],
        name: "S = lnZ + beta E + gamma V + delta N",
        computed: stats.entropy_s,
        expected: rhs,
        residual: crate::ensemble::entropy_identity_residual(&stats, params),
    });

    let partials = [
        ("dS/dE|V,N = 1/T", S, E, [V, N], params.beta),
        ("dS/dV|E,N = P/T", S, V, [E, N], params.gamma),
        ("dS/dN|E,V = -mu/T", S, N, [E, V], params.delta),
        ("dE/dS|V,N = T", E, S, [V, N], c.temperature),
        ("dE/dV|S,N = -P", E, V, [S, N], -c.pressure),
        ("dE/dN|S,V = mu", E, N, [S, V], c.potential),
    ];
    for (k, (name, target, wrt, held, expected)) in partials.into_iter().enumerate() {
        let v = system.constrained_partial(target, wrt, held, params, h)?.value;
        out.push(RelationCheck::relative(RELATION_KEYS[10 + k], name, v, expected, expected.abs()));
    }

    let dt_dv = system.constrained_partial(T, V, [S, N], params, h)?.value;
    let dp_ds = system.constrained_partial(P, S, [V, N], params, h)?.value;
    out.push(RelationCheck::relative(
        RELATION_KEYS[16],
        "dT/dV|S,N = -dP/dS|V,N",
        dt_dv,
        -dp_ds,
        dt_dv.abs().max(dp_ds.abs()),
    ));

    let axis_names = [
        "dE = T dS - P dV + mu dN along beta",
        "dE = T dS - P dV + mu dN along gamma",
        "dE = T dS - P dV + mu dN along delta",
    ];
    for i in 0..3 {
        let mut dir = [0.0; 3];
        dir[i] = 1.0;
        let r = system.fundamental_residual(params, dir, h)?;
        out.push(RelationCheck {
            key: RELATION_KEYS[17 + i],
            name: axis_names[i],
            computed: r,
            expected: 0.0,
            residual: r,
        });
    }
    Ok(out)
}

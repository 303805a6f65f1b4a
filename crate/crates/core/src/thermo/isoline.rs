//! Isolines of `S` or `V` (with `N` held too) by predictor-corrector
//! continuation in one driving coordinate.

use nalgebra::{Matrix2, Vector2};

use super::{require_interior, Coordinate, Quantity, ThermoError, ThermoSystem};
use crate::ensemble::EnsembleParams;

/// Newton iterations allowed per corrector call.
pub(crate) const MAX_NEWTON_ITERATIONS: usize = 20;
/// Relative residual the corrector drives the held quantities to.
pub(crate) const CORRECTOR_TOL: f64 = 1e-11;
/// FD step used for corrector Jacobians.
const JACOBIAN_STEP: f64 = 1e-5;

/// Moves the two free coordinates so that `hold` and `N` take given values
/// while `drive` stays put.
pub(crate) struct Corrector<'a> {
    pub system: &'a ThermoSystem,
    pub hold: Quantity,
    pub targets: [f64; 2],
    pub drive: Coordinate,
}

impl Corrector<'_> {
    fn residual(&self, p: &EnsembleParams) -> Result<[f64; 2], ThermoError> {
        let state = self.system.state(p)?;
        Ok([
            state.get(self.hold) - self.targets[0],
            state.get(Quantity::N) - self.targets[1],
        ])
    }

    fn converged(&self, r: &[f64; 2]) -> bool {
        r.iter()
            .zip(self.targets)
            .all(|(r, t)| r.abs() <= CORRECTOR_TOL * t.abs().max(1.0))
    }

    /// `∂(hold, N)/∂c` for every coordinate `c`, as columns.
    pub fn jacobian(&self, p: &EnsembleParams) -> Result<[[f64; 2]; 3], ThermoError> {
        let x = p.as_array();
        let mut cols = [[0.0; 2]; 3];
        for c in Coordinate::ALL {
            let i = c.index();
            let step = JACOBIAN_STEP * x[i].abs().max(1.0);
            let mut plus = x;
            let mut minus = x;
            plus[i] += step;
            minus[i] -= step;
            let sp = self.system.ensemble().stats(&EnsembleParams::from_array(plus))?;
            let sm = self.system.ensemble().stats(&EnsembleParams::from_array(minus))?;
            let held = |s: &crate::ensemble::EnsembleStats| match self.hold {
                Quantity::S => s.entropy_s,
                _ => s.mean_v,
            };
            cols[i] = [
                (held(&sp) - held(&sm)) / (2.0 * step),
                (sp.mean_n - sm.mean_n) / (2.0 * step),
            ];
        }
        Ok(cols)
    }

    fn free_block(&self, cols: &[[f64; 2]; 3]) -> Matrix2<f64> {
        let [a, b] = self.drive.others().map(|c| cols[c.index()]);
        Matrix2::new(a[0], b[0], a[1], b[1])
    }

    pub fn correct(&self, guess: EnsembleParams) -> Result<EnsembleParams, ThermoError> {
        let free = self.drive.others();
        let mut x = guess;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            require_interior(&x)?;
            let r = self.residual(&x)?;
            if self.converged(&r) {
                return Ok(x);
            }
            let jac = self.free_block(&self.jacobian(&x)?);
            let du = jac
                .lu()
                .solve(&Vector2::new(r[0], r[1]))
                .ok_or(ThermoError::IllConditioned { condition: f64::INFINITY })?;
            let mut a = x.as_array();
            a[free[0].index()] -= du[0];
            a[free[1].index()] -= du[1];
            x = EnsembleParams::from_array(a);
        }
        require_interior(&x)?;
        if self.converged(&self.residual(&x)?) {
            return Ok(x);
        }
        Err(ThermoError::NewtonDiverged { iterations: MAX_NEWTON_ITERATIONS, last: x })
    }

    /// First-order predictor along the isoline: `dfree = -J_free⁻¹ J_drive dd`.
    fn tangent(&self, p: &EnsembleParams, d_drive: f64) -> Result<EnsembleParams, ThermoError> {
        let cols = self.jacobian(p)?;
        let jd = cols[self.drive.index()];
        let du = self
            .free_block(&cols)
            .lu()
            .solve(&Vector2::new(-jd[0] * d_drive, -jd[1] * d_drive))
            .ok_or(ThermoError::IllConditioned { condition: f64::INFINITY })?;
        let mut a = p.as_array();
        a[self.drive.index()] += d_drive;
        let free = self.drive.others();
        a[free[0].index()] += du[0];
        a[free[1].index()] += du[1];
        Ok(EnsembleParams::from_array(a))
    }
}

/// Traces the curve through `start` along which `hold` (`S` or `V`) and
/// `N` are constant, moving `drive` to `target` in steps of at most `step`.
///
/// Returns the polyline including `start`; a zero-length trace returns
/// just `[start]`. The corrector holds both quantities to a relative
/// residual well below `1e-8` at every returned point.
pub fn trace_isoline(
    system: &ThermoSystem,
    hold: Quantity,
    start: EnsembleParams,
    drive: Coordinate,
    target: f64,
    step: f64,
) -> Result<Vec<EnsembleParams>, ThermoError> {
    if !matches!(hold, Quantity::S | Quantity::V) {
        return Err(ThermoError::InvalidArgument(format!("isolines hold S or V, not {hold}")));
    }
    if !(step > 0.0 && step.is_finite()) || !target.is_finite() {
        return Err(ThermoError::InvalidArgument("step must be positive and target finite".into()));
    }
    let state = system.state(&start)?;
    let corrector = Corrector {
        system,
        hold,
        targets: [state.get(hold), state.get(Quantity::N)],
        drive,
    };
    trace_with(&corrector, start, target, step)
}

pub(crate) fn trace_with(
    corrector: &Corrector<'_>,
    start: EnsembleParams,
    target: f64,
    step: f64,
) -> Result<Vec<EnsembleParams>, ThermoError> {
    let span = target - start.as_array()[corrector.drive.index()];
    // Shave off rounding so that e.g. a 0.05 span in 0.01 steps takes 5.
    let n = (span.abs() / step * (1.0 - 1e-12)).ceil() as usize;
    trace_steps(corrector, start, target, n)
}

/// Like [`trace_with`] with exactly `n` equal steps.
pub(crate) fn trace_steps(
    corrector: &Corrector<'_>,
    start: EnsembleParams,
    target: f64,
    n: usize,
) -> Result<Vec<EnsembleParams>, ThermoError> {
    let i = corrector.drive.index();
    let from = start.as_array()[i];
    let span = target - from;
    let mut path = Vec::with_capacity(n + 1);
    path.push(start);
    for k in 1..=n {
        let drive_k = if k == n { target } else { from + span * k as f64 / n as f64 };
        let last = path[k - 1];
        let guess = if k >= 2 {
            // Secant extrapolation through the last two points.
            let prev = path[k - 2].as_array();
            let cur = last.as_array();
            let frac = (drive_k - cur[i]) / (cur[i] - prev[i]);
            EnsembleParams::from_array(std::array::from_fn(|j| {
                if j == i { drive_k } else { cur[j] + frac * (cur[j] - prev[j]) }
            }))
        } else {
            corrector.tangent(&last, drive_k - last.as_array()[i])?
        };
        path.push(corrector.correct(guess)?);
    }
    Ok(path)
}

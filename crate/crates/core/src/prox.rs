//! Proximal (resolvent) steps: `v = argmin ½‖v - f‖² + λ Φ_ε(v)`, i.e. the
//! solution of `v + λ A_ε v = f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::{dot, norm, StencilMatrix};
use crate::operator::PLaplacian;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolver {
    /// Damped Newton with backtracking on the proximal objective.
    #[default]
    Newton,
    /// Lagged-mobility iteration with damping 0.5.
    FixedPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxConfig {
    /// Relative residual `‖v + λAv - f‖ / ‖f‖` at which a step is accepted.
    pub tol: f64,
    pub max_iter: usize,
    pub solver: InnerSolver,
}

impl Default for ProxConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            solver: InnerSolver::Newton,
        }
    }
}

impl ProxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tolerances.prox_tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("tolerances.max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ProxOutcome {
    pub field: ScalarField,
    /// Final relative residual.
    pub residual: f64,
    pub iterations: usize,
    /// Proximal objective after each iterate, starting from `J(f) = λΦ(f)`.
    pub merit: Vec<f64>,
}

const FIXED_POINT_DAMPING: f64 = 0.5;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;
const LINEAR_TOL: f64 = 1e-13;
/// Upper bound on the inexact-Newton forcing term.
const MAX_FORCING: f64 = 0.1;

/// `‖v + λ A v - f‖₂ / ‖f‖₂`, evaluated directly from the operator.
pub fn prox_residual(v: &ScalarField, f: &ScalarField, lambda: f64, op: &PLaplacian) -> f64 {
    let fnorm = norm(f.values());
    let r = residual_vector(v, f, lambda, op);
    if fnorm == 0.0 {
        norm(&r)
    } else {
        norm(&r) / fnorm
    }
}

/// Proximal objective `½‖v - f‖² + λ Φ_ε(v)`.
pub fn prox_objective(v: &ScalarField, f: &ScalarField, lambda: f64, op: &PLaplacian) -> f64 {
    let diff: Vec<f64> = v.values().iter().zip(f.values()).map(|(a, b)| a - b).collect();
    0.5 * dot(&diff, &diff) * v.grid().cell_volume() + lambda * op.energy(v)
}

fn residual_vector(v: &ScalarField, f: &ScalarField, lambda: f64, op: &PLaplacian) -> Vec<f64> {
    let av = op.apply(v);
    v.values()
        .iter()
        .zip(av.values())
        .zip(f.values())
        .map(|((v, a), f)| v + lambda * a - f)
        .collect()
}

/// Change of the objective along `s`, computed without cancellation.
fn objective_change(
    v: &ScalarField,
    s: &ScalarField,
    f: &ScalarField,
    alpha: f64,
    lambda: f64,
    op: &PLaplacian,
) -> f64 {
    let hd = v.grid().cell_volume();
    let mut quad = 0.0;
    for ((vi, si), fi) in v.values().iter().zip(s.values()).zip(f.values()) {
        quad += alpha * (vi - fi) * si + 0.5 * alpha * alpha * si * si;
    }
    quad * hd + lambda * op.energy_change(v, s, alpha)
}

fn axpy(v: &ScalarField, alpha: f64, s: &[f64]) -> ScalarField {
    ScalarField::from_vec(
        *v.grid(),
        v.values().iter().zip(s).map(|(a, b)| a + alpha * b).collect(),
    )
}

/// `I + λ K`.
fn shifted_system(k: StencilMatrix, lambda: f64) -> StencilMatrix {
    let mut m = StencilMatrix::identity(*k.grid());
    m.add_scaled(lambda, &k);
    m
}

/// Resolvent `(I + λA_ε)^{-1} f`.
pub fn prox_step(
    f: &ScalarField,
    lambda: f64,
    op: &PLaplacian,
    cfg: &ProxConfig,
) -> Result<ProxOutcome> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "proximal parameter must be positive"));
    }
    let fnorm = norm(f.values());
    let mut merit = vec![lambda * op.energy(f)];
    if fnorm == 0.0 {
        return Ok(ProxOutcome {
            field: f.clone(),
            residual: 0.0,
            iterations: 0,
            merit,
        });
    }
    let hd = f.grid().cell_volume();
    let mut v = f.clone();
    let mut solver = cfg.solver;
    for it in 0..cfg.max_iter {
        let r = residual_vector(&v, f, lambda, op);
        let residual = norm(&r) / fnorm;
        if residual <= cfg.tol {
            return Ok(ProxOutcome {
                field: v,
                residual,
                iterations: it,
                merit,
            });
        }
        let last = *merit.last().unwrap();
        match solver {
            InnerSolver::Newton => {
                let m = shifted_system(op.jacobian(&v), lambda);
                let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
                // Forcing term shrinks with the residual, keeping the
                // superlinear rate while early linear solves stay cheap.
                let forcing = residual.sqrt().clamp(LINEAR_TOL, MAX_FORCING);
                let s = m.solve(&rhs, forcing)?;
                let slope = dot(&r, &s) * hd;
                let step = ScalarField::from_vec(*v.grid(), s);
                let mut alpha = 1.0;
                let accepted = loop {
                    if slope >= 0.0 || alpha < MIN_STEP {
                        break None;
                    }
                    let dj = objective_change(&v, &step, f, alpha, lambda, op);
                    if dj <= ARMIJO * alpha * slope {
                        break Some(dj);
                    }
                    alpha *= 0.5;
                };
                match accepted {
                    Some(dj) => {
                        v = axpy(&v, alpha, step.values());
                        merit.push(last + dj);
                    }
                    None => {
                        log::debug!("newton backtracking stalled at residual {residual:.3e}; switching to fixed point");
                        solver = InnerSolver::FixedPoint;
                    }
                }
            }
            InnerSolver::FixedPoint => {
                let m = shifted_system(op.lagged(&v), lambda);
                let w = m.solve(f.values(), LINEAR_TOL)?;
                let s: Vec<f64> = w.iter().zip(v.values()).map(|(a, b)| a - b).collect();
                let step = ScalarField::from_vec(*v.grid(), s);
                let dj = objective_change(&v, &step, f, FIXED_POINT_DAMPING, lambda, op);
                v = axpy(&v, FIXED_POINT_DAMPING, step.values());
                merit.push(last + dj);
            }
        }
    }
    let r = residual_vector(&v, f, lambda, op);
    let residual = norm(&r) / fnorm;
    if residual <= cfg.tol {
        return Ok(ProxOutcome {
            field: v,
            residual,
            iterations: cfg.max_iter,
            merit,
        });
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual,
    })
}

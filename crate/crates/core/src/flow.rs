//! Backward-Euler evolution as repeated resolvent steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::operator::PLaplacian;
use crate::problem::Problem;
use crate::prox::{prox_step, ProxConfig, ProxOutcome};

/// Relative threshold used for numerical support detection.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    pub sup: f64,
    pub min: f64,
    pub phi: f64,
    pub support_radius: f64,
    pub residual: f64,
    pub iters: usize,
}

impl StepDiagnostics {
    fn measure(t: f64, u: &ScalarField, p: f64, threshold: f64, outcome: Option<&ProxOutcome>) -> Self {
        Self {
            t,
            mass: u.mass(),
            l1: u.l1_norm(),
            l2: u.l2_norm(),
            sup: u.max(),
            min: u.min(),
            phi: u.lp_gradient_energy(p),
            support_radius: u.support_radius(threshold),
            residual: outcome.map_or(0.0, |o| o.residual),
            iters: outcome.map_or(0, |o| o.iterations),
        }
    }
}

/// Time-indexed fields `u_k ≈ u(t_k)` with per-step diagnostics.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    problem: Problem,
    support_threshold: f64,
    times: Vec<f64>,
    fields: Vec<ScalarField>,
    diagnostics: Vec<StepDiagnostics>,
}

impl FlowTrajectory {
    /// Wraps externally produced fields (e.g. from another scheme) so the
    /// estimate checks can be run on them.
    pub fn from_fields(problem: Problem, times: Vec<f64>, fields: Vec<ScalarField>) -> Result<Self> {
        if times.len() != fields.len() || times.is_empty() {
            return Err(Error::invalid("fields", "need one field per time, at least one"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("times", "must start at 0 and increase strictly"));
        }
        let threshold = SUPPORT_THRESHOLD * fields[0].sup_norm();
        let diagnostics = times
            .iter()
            .zip(&fields)
            .map(|(&t, u)| StepDiagnostics::measure(t, u, problem.p, threshold, None))
            .collect();
        Ok(Self {
            problem,
            support_threshold: threshold,
            times,
            fields,
            diagnostics,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn support_threshold(&self) -> f64 {
        self.support_threshold
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn initial(&self) -> &ScalarField {
        &self.fields[0]
    }

    pub fn terminal(&self) -> &ScalarField {
        self.fields.last().unwrap()
    }

    /// Number of completed steps (one less than the number of fields).
    pub fn steps(&self) -> usize {
        self.fields.len() - 1
    }

    /// Step sizes `t_{k+1} - t_k`.
    pub fn step_sizes(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }
}

/// Applies `steps` resolvents with parameter `lambda`, reporting each result.
fn iterate_resolvent(
    u0: &ScalarField,
    lambda: f64,
    steps: usize,
    op: &PLaplacian,
    cfg: &ProxConfig,
    mut observe: impl FnMut(usize, &ProxOutcome),
) -> Result<ScalarField> {
    let mut u = u0.clone();
    for k in 0..steps {
        let out = prox_step(&u, lambda, op, cfg).map_err(|e| Error::Step {
            step: k + 1,
            source: Box::new(e),
        })?;
        observe(k + 1, &out);
        u = out.field;
    }
    Ok(u)
}

/// Evolves `u0` over `⌈T/dt⌉` backward-Euler steps `u_{k+1} = (I + dt A_ε)^{-1} u_k`.
pub fn evolve(u0: &ScalarField, problem: &Problem, cfg: &ProxConfig) -> Result<FlowTrajectory> {
    problem.validate()?;
    cfg.validate()?;
    if *u0.grid() != problem.grid()? {
        return Err(Error::GridMismatch);
    }
    if u0.min() < 0.0 {
        log::warn!("initial datum has negative values (min {:.3e})", u0.min());
    }
    let mass = u0.mass();
    if (mass - 1.0).abs() > 1e-3 && mass != 0.0 {
        log::warn!("initial datum has mass {mass}, not 1");
    }
    let threshold = SUPPORT_THRESHOLD * u0.sup_norm();
    let r0 = u0.support_radius(threshold);
    if r0 > problem.initial_radius + u0.grid().spacing() {
        log::warn!(
            "initial support radius {r0:.4} exceeds R = {}",
            problem.initial_radius
        );
    }
    let op = PLaplacian::new(problem.p, problem.epsilon, problem.delta);
    let steps = problem.step_count();
    let mut times = vec![0.0];
    let mut fields = vec![u0.clone()];
    let mut diagnostics = vec![StepDiagnostics::measure(0.0, u0, problem.p, threshold, None)];
    iterate_resolvent(u0, problem.dt, steps, &op, cfg, |k, out| {
        let t = k as f64 * problem.dt;
        diagnostics.push(StepDiagnostics::measure(t, &out.field, problem.p, threshold, Some(out)));
        times.push(t);
        fields.push(out.field.clone());
    })?;
    Ok(FlowTrajectory {
        problem: *problem,
        support_threshold: threshold,
        times,
        fields,
        diagnostics,
    })
}

/// Exponential formula `(I + (t/n) A_ε)^{-n} u0`.
pub fn crandall_liggett(
    u0: &ScalarField,
    t: f64,
    n_steps: usize,
    op: &PLaplacian,
    cfg: &ProxConfig,
) -> Result<ScalarField> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be positive"));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be at least 1"));
    }
    iterate_resolvent(u0, t / n_steps as f64, n_steps, op, cfg, |_, _| {})
}

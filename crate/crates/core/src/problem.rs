use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Time exponent of the free-boundary growth, `1 / (d(p-2) + p)`.
pub fn support_exponent(p: f64, dim: usize) -> f64 {
    1.0 / (dim as f64 * (p - 2.0) + p)
}

/// Physical and numerical parameters of one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub p: f64,
    pub dim: usize,
    /// Box half-width `L`; the domain is `[-L, L]^d`.
    pub half_width: f64,
    /// Cells per axis.
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Viscosity of the regularised flow `εΔu + div(|∇u|^{p-2}∇u)`.
    pub epsilon: f64,
    /// Gradient regularisation in the flux coefficient.
    pub delta: f64,
    /// Radius `R` of a ball containing the initial support.
    pub initial_radius: f64,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 2.0) {
            return Err(Error::invalid("p", format!("need p > 2, got {}", self.p)));
        }
        if self.n % 2 != 0 {
            return Err(Error::invalid("n", format!("cells per axis must be even, got {}", self.n)));
        }
        Grid::new(self.dim, self.n, self.half_width)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "time step must be positive"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("T", "horizon must be positive"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", "must be finite and non-negative"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta", "must be finite and non-negative"));
        }
        if !(self.initial_radius > 0.0 && self.initial_radius.is_finite()) {
            return Err(Error::invalid("R", "initial support radius must be positive"));
        }
        Ok(())
    }

    /// Checks that the predicted support `2R + R(T)` stays inside the box,
    /// so the no-flux walls never see mass.
    pub fn validate_box(&self, c_support: f64, mass: f64) -> Result<()> {
        let reach = self.support_bound(self.horizon, c_support, mass);
        if reach >= self.half_width {
            return Err(Error::invalid(
                "L",
                format!(
                    "predicted support radius {reach:.4} at T = {} reaches the box half-width {}",
                    self.horizon, self.half_width
                ),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.half_width)
    }

    pub fn beta(&self) -> f64 {
        support_exponent(self.p, self.dim)
    }

    /// True when `p ≥ 4`, where the second-order estimates and the particle
    /// representation are known to hold.
    pub fn theory_regime(&self) -> bool {
        self.p >= 4.0
    }

    pub fn step_count(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// `R(t) = C t^β |u0|_1^{(p-2)β}`.
    pub fn propagation_radius(&self, t: f64, c_support: f64, mass: f64) -> f64 {
        let beta = self.beta();
        c_support * t.max(0.0).powf(beta) * mass.abs().powf((self.p - 2.0) * beta)
    }

    /// `2R + R(t)`.
    pub fn support_bound(&self, t: f64, c_support: f64, mass: f64) -> f64 {
        2.0 * self.initial_radius + self.propagation_radius(t, c_support, mass)
    }
}

//! Experiment configuration: one JSON file describes one run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::SUPPORT_THRESHOLD;
use crate::grid::{Grid, ScalarField};
use crate::oracles::{cosine_bump, normalised, BarenblattProfile};
use crate::problem::Problem;
use crate::prox::{InnerSolver, ProxConfig};

/// Initial datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitSpec {
    /// Source solution sampled at time `t0`.
    Barenblatt {
        #[serde(default = "default_t0")]
        t0: f64,
        #[serde(default = "default_mass")]
        mass: f64,
    },
    /// Unit-mass `cos²` bump of the given radius centred at the origin.
    Bump { radius: f64 },
    /// Field CSV (`x[,y],value`) on the configured grid. Relative paths are
    /// resolved against the config file.
    File { path: PathBuf },
}

fn default_t0() -> f64 {
    1.0
}

fn default_mass() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    1
}

impl Default for ParticleSpec {
    fn default() -> Self {
        Self {
            n: 100_000,
            seed: 42,
            substeps: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub prox_tol: f64,
    pub max_iter: usize,
    pub solver: InnerSolver,
    /// Allowance on the gradient sup bound.
    pub gradient: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let prox = ProxConfig::default();
        Self {
            prox_tol: prox.tol,
            max_iter: prox.max_iter,
            solver: prox.solver,
            gradient: crate::verify::GRADIENT_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub p: f64,
    pub d: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub epsilon: f64,
    /// Flux regularisation; defaults to `1e-8 |∇u0|_∞`.
    #[serde(default)]
    pub delta: Option<f64>,
    pub init: InitSpec,
    #[serde(default)]
    pub particles: ParticleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    50
}

/// Relative factor behind the default `delta`.
pub const DEFAULT_DELTA_FACTOR: f64 = 1e-8;

impl RunConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::invalid(if path == "." { "config".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::invalid("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let InitSpec::File { path: p } = &mut cfg.init {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Schema rules that do not need the initial datum.
    pub fn validate(&self) -> Result<()> {
        if !(self.d == 1 || self.d == 2) {
            return Err(Error::invalid("d", format!("dimension must be 1 or 2, got {}", self.d)));
        }
        self.problem_with(1e-8, 1.0).validate()?;
        if let Some(delta) = self.delta {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::invalid("delta", "must be finite and non-negative"));
            }
        }
        match &self.init {
            InitSpec::Barenblatt { t0, mass } => {
                if !(*t0 > 0.0 && t0.is_finite()) {
                    return Err(Error::invalid("init.params.t0", "source time must be positive"));
                }
                if !(*mass > 0.0 && mass.is_finite()) {
                    return Err(Error::invalid("init.params.mass", "must be positive"));
                }
            }
            InitSpec::Bump { radius } => {
                if !(*radius > 0.0 && *radius < self.half_width) {
                    return Err(Error::invalid("init.params.radius", "must lie in (0, L)"));
                }
            }
            InitSpec::File { .. } => {}
        }
        let t = &self.tolerances;
        self.prox_config().validate()?;
        if !(t.gradient >= 0.0 && t.gradient.is_finite()) {
            return Err(Error::invalid("tolerances.gradient", "must be non-negative"));
        }
        if self.particles.substeps == 0 {
            return Err(Error::invalid("particles.substeps", "must be at least 1"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot_every", "must be at least 1"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.n, self.half_width)
    }

    pub fn prox_config(&self) -> ProxConfig {
        ProxConfig {
            tol: self.tolerances.prox_tol,
            max_iter: self.tolerances.max_iter,
            solver: self.tolerances.solver,
        }
    }

    fn problem_with(&self, delta: f64, radius: f64) -> Problem {
        Problem {
            p: self.p,
            dim: self.d,
            half_width: self.half_width,
            n: self.n,
            dt: self.dt,
            horizon: self.horizon,
            epsilon: self.epsilon,
            delta,
            initial_radius: radius,
        }
    }

    /// Source time of a Barenblatt initial datum.
    pub fn source_time(&self) -> Option<f64> {
        match self.init {
            InitSpec::Barenblatt { t0, .. } => Some(t0),
            _ => None,
        }
    }

    /// Samples or loads the initial datum on the configured grid.
    pub fn initial_field(&self) -> Result<ScalarField> {
        let grid = self.grid()?;
        match &self.init {
            InitSpec::Barenblatt { t0, mass } => Ok(BarenblattProfile::with_mass(self.p, self.d, *mass)?.sample(grid, *t0)),
            InitSpec::Bump { radius } => cosine_bump(grid, *radius),
            InitSpec::File { path } => {
                let f = std::fs::File::open(path)
                    .map_err(|e| Error::invalid("init.params.path", format!("{}: {e}", path.display())))?;
                let u = ScalarField::read_csv(grid, f).map_err(|e| match e {
                    Error::Invalid { reason, .. } => Error::invalid("init.params.path", reason),
                    other => other,
                })?;
                if u.min() < 0.0 {
                    return Err(Error::invalid("init.params.path", "initial datum must be non-negative"));
                }
                normalised(u).map_err(|_| Error::invalid("init.params.path", "initial datum has no mass"))
            }
        }
    }

    /// Problem for a given initial datum: `R` is its numerical support radius
    /// plus one cell diagonal, `delta` falls back to `1e-8 |∇u0|_∞`.
    pub fn problem(&self, u0: &ScalarField) -> Result<Problem> {
        let g = u0.grid();
        let grad_sup = (0..g.dim()).map(|a| u0.gradient_sup(a)).fold(0.0, f64::max);
        let delta = self.delta.unwrap_or(DEFAULT_DELTA_FACTOR * grad_sup);
        let radius = u0.support_radius(SUPPORT_THRESHOLD * u0.sup_norm()) + g.spacing() * (g.dim() as f64).sqrt();
        let pb = self.problem_with(delta, radius);
        pb.validate()?;
        Ok(pb)
    }
}

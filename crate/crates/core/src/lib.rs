//! Numerical laboratory for the parabolic p-Laplace equation
//! `∂u/∂t = div(|∇u|^{p-2}∇u)`.
//!
//! The equation is solved as a gradient flow of the p-Dirichlet energy by
//! backward-Euler (proximal) steps. From each computed field the
//! Fokker–Planck drift `∇(|∇u|^{p-2})` and diffusion `|∇u|^{(p-2)/2}` are
//! extracted and used to push a particle ensemble through the associated
//! McKean–Vlasov SDE, whose time marginals are then compared with `u`.

// `!(x > 0.0)` is kept on purpose: it also rejects NaN.
// Index loops mirror the stencil formulas; is_multiple_of postdates the MSRV.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::manual_is_multiple_of
)]

pub mod coefficients;
pub mod config;
pub mod error;
pub mod flow;
pub mod grid;
pub mod linalg;
pub mod marginals;
pub mod operator;
pub mod oracles;
pub mod particles;
pub mod problem;
pub mod prox;
pub mod run;
pub mod verify;

pub use error::{Error, Result};
pub use flow::{crandall_liggett, evolve, FlowTrajectory, StepDiagnostics};
pub use grid::{divergence, gradient, FaceField, GradientField, Grid, ScalarField};
pub use operator::PLaplacian;
pub use problem::{support_exponent, Problem};
pub use prox::{prox_step, InnerSolver, ProxConfig, ProxOutcome};
pub use coefficients::CoefficientField;
pub use config::{InitSpec, ParticleSpec, RunConfig, Tolerances};
pub use marginals::{compare_snapshot, w1_distance_1d, SnapshotComparison};
pub use oracles::{BarenblattProfile, OracleConstants};
pub use particles::{sample_initial, simulate, ParticleEnsemble, Simulation, SimulationConfig, Snapshot};
pub use run::{solve, sweep, RunDir, SweepAxis, SweepTable};
pub use verify::{verify, Check, EstimateReport, Relation, VerifyOptions};

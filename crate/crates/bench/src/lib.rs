//! Shared fixtures for the criterion benches under `benches/`.

use plaplace_core::{evolve, BarenblattProfile, FlowTrajectory, Problem, ProxConfig, ScalarField};

/// Source-solution problem at the nominal desk-scale resolution.
pub fn problem(dim: usize, n: usize, steps: usize) -> Problem {
    let dt = if dim == 1 { 1e-3 } else { 1e-2 };
    Problem {
        p: 4.0,
        dim,
        half_width: if dim == 1 { 6.0 } else { 2.5 },
        n,
        dt,
        horizon: dt * steps as f64,
        epsilon: 0.0,
        delta: 1e-8,
        initial_radius: 2.0,
    }
}

/// Barenblatt profile at `t = 1` on the problem grid.
pub fn initial(pb: &Problem) -> ScalarField {
    BarenblattProfile::new(pb.p, pb.dim).unwrap().sample(pb.grid().unwrap(), 1.0)
}

pub fn trajectory(pb: &Problem) -> FlowTrajectory {
    evolve(&initial(pb), pb, &ProxConfig::default()).unwrap()
}

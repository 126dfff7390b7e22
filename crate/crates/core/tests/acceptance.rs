//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are pinned below.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use plaplace_core::marginals::w1_distance_1d;
use plaplace_core::oracles::{cosine_bump, BarenblattProfile, OracleConstants};
use plaplace_core::prox::prox_residual;
use plaplace_core::run::{diagnostics_csv, sweep, terminal_particle_distance, SweepAxis};
use plaplace_core::verify::{
    check_conservation_and_bounds, check_energy_identity, check_gradient_sup_bound, check_second_order,
    check_superposition, check_support_containment, energy_identity_residual, gradient_overshoot,
    support_diameter, support_exponent_fit,
};
use plaplace_core::{
    divergence, evolve, gradient, simulate, FaceField, FlowTrajectory, Grid, PLaplacian, ParticleSpec, Problem,
    ProxConfig, RunConfig, ScalarField, SimulationConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SBP_TOL: f64 = 1e-12;
const RICHARDSON: (f64, f64) = (3.5, 4.5);
const PROX_RESIDUAL: f64 = 1e-10;
const JACOBIAN_TOL: f64 = 1e-5;
const BOUND_SLACK: f64 = 1e-8;
const ENERGY_RATIO: (f64, f64) = (1.5, 2.5);
const ORACLE_L1: f64 = 0.02;
const RESIDUAL_RATIO: f64 = 3.0;
const EXPONENT_TOL: f64 = 0.10;
const GRADIENT_TOL: f64 = 0.05;
const W1_FRACTION: f64 = 0.05;
const SLOPE: (f64, f64) = (-0.65, -0.35);
const MEDIAN_SEEDS: u64 = 5;
const SLOPE_SEEDS: usize = 16;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn nominal_config(n: usize, dt: f64) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{"p": 4, "d": 1, "L": 6, "n": {n}, "dt": {dt:e}, "T": 0.5,
            "init": {{"type": "barenblatt", "params": {{"t0": 1.0}}}},
            "particles": {{"N": 100000, "seed": 2024, "substeps": 1}}}}"#
    ))
    .unwrap()
}

fn run(cfg: &RunConfig) -> FlowTrajectory {
    let u0 = cfg.initial_field().unwrap();
    let pb = cfg.problem(&u0).unwrap();
    evolve(&u0, &pb, &cfg.prox_config()).unwrap()
}

/// Barenblatt run from `t0` with the given grid.
fn source_run(dim: usize, n: usize, half_width: f64, dt: f64, horizon: f64, t0: f64) -> FlowTrajectory {
    let prof = BarenblattProfile::new(4.0, dim).unwrap();
    let pb = Problem {
        p: 4.0,
        dim,
        half_width,
        n,
        dt,
        horizon,
        epsilon: 0.0,
        delta: 1e-8,
        initial_radius: prof.radius(t0),
    };
    evolve(&prof.sample(pb.grid().unwrap(), t0), &pb, &ProxConfig::default()).unwrap()
}

struct Shared {
    nominal: FlowTrajectory,
    c_support: f64,
}

fn c1_discrete_calculus(_: &Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let d = 1 + trial % 2;
        let g = Grid::new(d, 16 + 2 * (trial % 7), 1.0 + trial as f64 * 0.01).unwrap();
        let cells = g.cell_count();
        let draws: Vec<f64> = (0..(d + 1) * cells).map(|_| rng.random::<f64>() - 0.5).collect();
        let u = ScalarField::new(g, draws[..cells].to_vec()).unwrap();
        let f = FaceField::from_fn(g, |a, c| draws[(a + 1) * cells + c]);
        let lhs = gradient(&u).faces.dot(&f);
        let rhs = u.dot(&divergence(&f));
        worst = worst.max((lhs + rhs).abs() / (lhs.abs() + rhs.abs()).max(1e-300));
    }
    let err = |n: usize| {
        let g = Grid::new(1, n, std::f64::consts::PI).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0].sin());
        let grad = gradient(&u);
        let flux = FaceField::from_fn(g, |_, c| (g.coord(c) + 0.5 * g.spacing()).sin());
        let div = divergence(&flux);
        let (mut eg, mut ed): (f64, f64) = (0.0, 0.0);
        for c in g.cells().filter(|&c| g.coord(c).abs() < 0.5 * g.half_width()) {
            eg = eg.max((grad.at(c)[0] - g.coord(c).cos()).abs());
            ed = ed.max((div.values()[c] - g.coord(c).cos()).abs());
        }
        (eg, ed)
    };
    let (g1, d1) = err(128);
    let (g2, d2) = err(256);
    let (rg, rd) = (g1 / g2, d1 / d2);
    let ok = |r: f64| r >= RICHARDSON.0 && r <= RICHARDSON.1;
    outcome(
        worst <= SBP_TOL && ok(rg) && ok(rd),
        format!("SBP rel defect {worst:.1e}; Richardson gradient {rg:.3}, divergence {rd:.3}"),
    )
}

fn c2_prox(sh: &Shared) -> Outcome {
    let pb = sh.nominal.problem();
    let op = PLaplacian::new(pb.p, pb.epsilon, pb.delta);
    let fields = sh.nominal.fields();
    let worst = (0..sh.nominal.steps())
        .map(|k| prox_residual(&fields[k + 1], &fields[k], pb.dt, &op))
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut jac_err: f64 = 0.0;
    for p in [3.0, 4.0, 6.0] {
        let op = PLaplacian::new(p, 0.0, 1e-3);
        for _ in 0..100 {
            let g = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0];
            let j = op.flux_jacobian(&g);
            let eps = 1e-6;
            for b in 0..2 {
                let mut gp = g;
                let mut gm = g;
                gp[b] += eps;
                gm[b] -= eps;
                let (fp, fm) = (op.flux(&gp), op.flux(&gm));
                let scale = j.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                for a in 0..2 {
                    let fd = (fp[a] - fm[a]) / (2.0 * eps);
                    jac_err = jac_err.max((fd - j[a][b]).abs() / scale);
                }
            }
        }
    }
    outcome(
        worst <= PROX_RESIDUAL && jac_err <= JACOBIAN_TOL,
        format!("max step residual {worst:.2e}; flux Jacobian rel error {jac_err:.2e}"),
    )
}

/// Explicit non-divergence-form scheme used as a negative control.
fn leaky_run() -> FlowTrajectory {
    let pb = Problem {
        p: 4.0,
        dim: 1,
        half_width: 4.0,
        n: 128,
        dt: 1e-4,
        horizon: 1e-2,
        epsilon: 0.0,
        delta: 0.0,
        initial_radius: 1.0,
    };
    let g = pb.grid().unwrap();
    let h = g.spacing();
    let mut u = cosine_bump(g, 1.0).unwrap();
    let (mut fields, mut times) = (vec![u.clone()], vec![0.0]);
    for k in 1..=100 {
        let v = u.values().to_vec();
        let at = |j: isize| if j < 0 || j >= g.n() as isize { 0.0 } else { v[j as usize] };
        let next = (0..g.n() as isize)
            .map(|i| {
                let a = ((at(i + 1) - at(i - 1)) / (2.0 * h)).powi(2);
                at(i) + pb.dt * a * (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h)
            })
            .collect();
        u = ScalarField::new(g, next).unwrap();
        fields.push(u.clone());
        times.push(k as f64 * pb.dt);
    }
    FlowTrajectory::from_fields(pb, times, fields).unwrap()
}

fn c3_mass(sh: &Shared) -> Outcome {
    let nominal = &check_conservation_and_bounds(&sh.nominal)[0];
    let leaky = &check_conservation_and_bounds(&leaky_run())[0];
    let rel = nominal.lhs / sh.nominal.initial().mass();
    outcome(
        nominal.pass && rel <= BOUND_SLACK && !leaky.pass,
        format!("relative drift {rel:.2e}; leaky control drift {:.2e} (fails: {})", leaky.lhs, !leaky.pass),
    )
}

fn c4_bounds(sh: &Shared) -> Outcome {
    let checks = check_conservation_and_bounds(&sh.nominal);
    let detail = checks[1..]
        .iter()
        .map(|c| format!("{} {:.4e}/{:.4e}", c.name, c.lhs, c.rhs))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(checks[1..].iter().all(|c| c.pass && c.tolerance <= BOUND_SLACK * c.rhs.max(1.0)), detail)
}

fn c5_energy(sh: &Shared) -> Outcome {
    let checks = check_energy_identity(&sh.nominal);
    let r1 = energy_identity_residual(&sh.nominal);
    let r2 = energy_identity_residual(&run(&nominal_config(256, 5e-4)));
    let ratio = r1 / r2;
    outcome(
        checks.iter().all(|c| c.pass) && ratio >= ENERGY_RATIO.0 && ratio <= ENERGY_RATIO.1,
        format!(
            "residual {r1:.3e} -> {r2:.3e} (ratio {ratio:.3}); per-step max {:.6e} <= {:.6e}",
            checks[1].lhs, checks[1].rhs
        ),
    )
}

fn c6_oracle(sh: &Shared) -> Outcome {
    let prof = BarenblattProfile::new(4.0, 1).unwrap();
    let l1 = |traj: &FlowTrajectory| {
        let u = traj.terminal();
        u.l1_distance(&prof.sample(*u.grid(), 1.5)).unwrap()
    };
    let e256 = l1(&sh.nominal);
    let e512 = l1(&run(&nominal_config(512, 1e-3)));
    let res = |q: f64, n: usize| {
        let g = Grid::new(1, n, 3.0).unwrap();
        prof.with_q_scaled(q).pde_residual(1.0, g)
    };
    let good = res(1.0, 256) / res(1.0, 512);
    let bad = res(1.1, 256) / res(1.1, 512);
    outcome(
        e256 <= ORACLE_L1 && e512 < e256 && good >= RESIDUAL_RATIO && bad < RESIDUAL_RATIO,
        format!("L1 {e256:.2e} (n=256) -> {e512:.2e} (n=512); residual ratio {good:.2}, q x1.1 ratio {bad:.2}"),
    )
}

fn c7_support(sh: &Shared) -> Outcome {
    let t0 = 0.01;
    let one = source_run(1, 512, 3.0, 1e-3, 1.0, t0);
    let two = source_run(2, 128, 2.5, 1e-2, 1.0, t0);
    let k1 = support_exponent_fit(&one, t0).unwrap();
    let k2 = support_exponent_fit(&two, t0).unwrap();
    let c2 = OracleConstants::calibrate(4.0, 2).unwrap().c_support;
    let contained = [
        check_support_containment(&sh.nominal, sh.c_support),
        check_support_containment(&one, sh.c_support),
        check_support_containment(&two, c2),
    ];
    let within = |k: f64, beta: f64| (k - beta).abs() <= EXPONENT_TOL * beta;
    outcome(
        within(k1, 1.0 / 6.0) && within(k2, 0.125) && contained.iter().all(|c| c.pass),
        format!("exponent d=1 {k1:.4} (1/6), d=2 {k2:.4} (1/8); containment {}", contained.iter().all(|c| c.pass)),
    )
}

fn c8_gradient(sh: &Shared) -> Outcome {
    let bump = |n: usize| {
        let cfg = RunConfig::from_json(&format!(
            r#"{{"p": 4, "d": 1, "L": 4, "n": {n}, "dt": 1e-3, "T": 0.5,
                "init": {{"type": "bump", "params": {{"radius": 1.0}}}}}}"#
        ))
        .unwrap();
        run(&cfg)
    };
    let (b256, b512) = (bump(256), bump(512));
    let checks: Vec<_> = [&sh.nominal, &b256]
        .iter()
        .flat_map(|t| check_gradient_sup_bound(t, GRADIENT_TOL))
        .collect();
    let o_coarse = gradient_overshoot(&bump(128)).max(gradient_overshoot(&b256));
    let o_fine = gradient_overshoot(&b512);
    outcome(
        checks.iter().all(|c| c.pass) && o_fine <= o_coarse,
        format!(
            "max ratio {:.4}; bump overshoot {:.2e} -> {:.2e} under refinement",
            checks.iter().map(|c| c.lhs / c.rhs).fold(0.0, f64::max),
            o_coarse,
            o_fine
        ),
    )
}

fn c9_second_order(sh: &Shared) -> Outcome {
    let mut cfg = nominal_config(256, 1e-3);
    cfg.horizon = 1.0;
    let long = run(&cfg);
    let mut all = check_second_order(&sh.nominal, Some(sh.c_support)).unwrap();
    all.extend(check_second_order(&long, Some(sh.c_support)).unwrap());
    let detail = all[3..]
        .iter()
        .map(|c| format!("{} {:.3e} <= {:.3e}", c.name, c.lhs, c.rhs))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(all.iter().all(|c| c.pass && c.tolerance == 0.0), format!("T=1: {detail}"))
}

fn c10_superposition(sh: &Shared) -> Outcome {
    let sim = simulate(
        &sh.nominal,
        &SimulationConfig {
            particles: 100_000,
            seed: 2024,
            substeps: 1,
            snapshot_every: 100,
        },
    )
    .unwrap();
    let (check, _) = check_superposition(&sh.nominal, &sim.snapshots).unwrap();
    let diam = support_diameter(sh.nominal.terminal(), sh.nominal.support_threshold());

    let levels = [(1_000, 4e-3), (10_000, 2e-3), (100_000, 1e-3)];
    let mut medians = Vec::new();
    for (n, dt) in levels {
        let traj = run(&nominal_config(256, dt));
        let mut w: Vec<f64> = (0..MEDIAN_SEEDS)
            .map(|s| terminal_particle_distance(&traj, &ParticleSpec { n, seed: 100 + s, substeps: 1 }).unwrap())
            .collect();
        w.sort_by(f64::total_cmp);
        medians.push(w[w.len() / 2]);
    }
    let monotone = medians.windows(2).all(|w| w[1] < w[0]);

    let mut cfg = nominal_config(256, 1e-3);
    cfg.particles.n = 1_000;
    let table = sweep(&cfg, SweepAxis::Particles, 3, SLOPE_SEEDS).unwrap();
    let slope = table.slope.unwrap();
    let w_init = w1_distance_1d(&sim.snapshots[0].ensemble, sh.nominal.initial()).unwrap();
    outcome(
        check.pass && check.lhs <= W1_FRACTION * diam && monotone && slope >= SLOPE.0 && slope <= SLOPE.1,
        format!(
            "terminal W1 {:.3e} <= {:.3e} (t=0 {w_init:.2e}); medians {:.2e} > {:.2e} > {:.2e}; slope {slope:.3}",
            check.lhs,
            W1_FRACTION * diam,
            medians[0],
            medians[1],
            medians[2]
        ),
    )
}

fn c11_regularisation(_: &Shared) -> Outcome {
    let cfg = nominal_config(256, 1e-3);
    let eps = sweep(&cfg, SweepAxis::Epsilon, 3, 1).unwrap();
    let delta = sweep(&cfg, SweepAxis::Delta, 3, 1).unwrap();
    let fmt = |t: &plaplace_core::SweepTable| {
        t.medians().iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" > ")
    };
    outcome(
        eps.strictly_decreasing() && delta.strictly_decreasing(),
        format!("epsilon {}; delta {}", fmt(&eps), fmt(&delta)),
    )
}

fn c12_reproducibility(sh: &Shared) -> Outcome {
    let again = run(&nominal_config(256, 1e-3));
    let same_diag = diagnostics_csv(sh.nominal.diagnostics()).unwrap() == diagnostics_csv(again.diagnostics()).unwrap();
    let cfg = SimulationConfig {
        particles: 20_000,
        seed: 77,
        substeps: 2,
        snapshot_every: 50,
    };
    let with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate(&sh.nominal, &cfg).unwrap())
    };
    let (a, b) = (with(1), with(4));
    let bits = |s: &plaplace_core::Simulation| -> Vec<u64> {
        s.snapshots
            .iter()
            .flat_map(|x| x.ensemble.positions().iter().map(|v| v.to_bits()))
            .collect()
    };
    let same_particles = bits(&a) == bits(&b);
    outcome(
        same_diag && same_particles,
        format!("diagnostics identical: {same_diag}; snapshots identical across 1/4 workers: {same_particles}"),
    )
}

fn main() {
    let started = Instant::now();
    let shared = Shared {
        nominal: run(&nominal_config(256, 1e-3)),
        c_support: OracleConstants::calibrate(4.0, 1).unwrap().c_support,
    };
    type Criterion = (&'static str, fn(&Shared) -> Outcome);
    let criteria: [Criterion; 12] = [
        ("discrete calculus", c1_discrete_calculus),
        ("prox residual and flux Jacobian", c2_prox),
        ("mass conservation", c3_mass),
        ("max principle, nonnegativity, L1 contraction", c4_bounds),
        ("energy identity", c5_energy),
        ("source-solution oracle", c6_oracle),
        ("support growth", c7_support),
        ("gradient sup bound", c8_gradient),
        ("second-order estimates", c9_second_order),
        ("particle law vs density", c10_superposition),
        ("epsilon and delta convergence", c11_regularisation),
        ("reproducibility", c12_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(|| f(&shared))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !out.pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} ({:.1}s)",
            if out.pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of 12 criteria pass ({:.0}s)",
        12 - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Run directories: solve, simulate, verify, compare and sweep.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json            config echo, derived problem, version, wall time
//! diagnostics.csv          one row per stored time
//! oracle_constants.json    calibrated constants for (p, d)
//! init.csv                 copy of a file-based initial datum
//! fields/u_00000.csv ...   checkpoints every `snapshot_every` steps and at T
//! particles/<name>/        one directory per simulation
//! report.json              written by `verify`
//! comparison.json          written by `compare`
//! ```
//!
//! Files are never overwritten: writing identical bytes again is a no-op and
//! anything else fails with [`Error::AlreadyExists`]. The trajectory itself is
//! regenerated from the manifest when needed and checked bit for bit against
//! `diagnostics.csv`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{InitSpec, ParticleSpec, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{evolve, FlowTrajectory, StepDiagnostics};
use crate::grid::ScalarField;
use crate::marginals::{compare_snapshot, SnapshotComparison};
use crate::oracles::{power_law_fit, BarenblattProfile, OracleConstants};
use crate::particles::{simulate, ParticleEnsemble, SimulationConfig, Snapshot};
use crate::problem::Problem;
use crate::verify::{check_superposition, coarse_histogram_l1, verify, EstimateReport, VerifyOptions};

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const CONSTANTS: &str = "oracle_constants.json";
pub const REPORT: &str = "report.json";
pub const COMPARISON: &str = "comparison.json";
const INIT_COPY: &str = "init.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub problem: Problem,
    pub version: String,
    pub steps: usize,
    pub checkpoints: Vec<usize>,
    pub wall_time_s: f64,
}

/// Record written next to a particle simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub substeps: usize,
    pub dt: f64,
    pub snapshot_steps: Vec<usize>,
    pub times: Vec<f64>,
    pub path_integral: f64,
    pub wall_time_s: f64,
}

/// Writes `bytes` unless the file already holds different content.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.exists() {
        if fs::read(path)? == bytes {
            log::info!("{} already up to date", path.display());
            return Ok(());
        }
        return Err(Error::AlreadyExists(path.display().to_string()));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

fn field_bytes(u: &ScalarField) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    u.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn diagnostics_csv(rows: &[StepDiagnostics]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn checkpoint_steps(steps: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(every).collect();
    if *out.last().unwrap() != steps {
        out.push(steps);
    }
    out
}

fn field_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("fields").join(format!("u_{step:05}.csv"))
}

/// Solves the configured flow and writes a new run directory.
pub fn solve(cfg: &RunConfig, out: &Path) -> Result<RunDir> {
    if out.join(MANIFEST).exists() {
        return Err(Error::AlreadyExists(out.display().to_string()));
    }
    cfg.validate()?;
    let started = Instant::now();
    let u0 = cfg.initial_field()?;
    let problem = cfg.problem(&u0)?;
    let constants = OracleConstants::calibrate(cfg.p, cfg.d)?;
    problem.validate_box(constants.c_support, u0.l1_norm())?;
    let traj = evolve(&u0, &problem, &cfg.prox_config())?;
    let wall = started.elapsed().as_secs_f64();
    log::info!("solved {} steps in {wall:.2}s", traj.steps());

    fs::create_dir_all(out)?;
    let mut stored = cfg.clone();
    if let InitSpec::File { .. } = cfg.init {
        write_new(&out.join(INIT_COPY), &field_bytes(&u0)?)?;
        stored.init = InitSpec::File {
            path: PathBuf::from(INIT_COPY),
        };
    }
    write_new(&out.join(DIAGNOSTICS), &diagnostics_csv(traj.diagnostics())?)?;
    write_new(&out.join(CONSTANTS), &json(&constants))?;
    let checkpoints = checkpoint_steps(traj.steps(), cfg.snapshot_every);
    for &k in &checkpoints {
        write_new(&field_path(out, k), &field_bytes(&traj.fields()[k])?)?;
    }
    let manifest = Manifest {
        config: stored,
        problem,
        version: env!("CARGO_PKG_VERSION").to_string(),
        steps: traj.steps(),
        checkpoints,
        wall_time_s: wall,
    };
    // The manifest goes last: its presence marks a complete run.
    write_new(&out.join(MANIFEST), &json(&manifest))?;
    Ok(RunDir {
        path: out.to_path_buf(),
        manifest,
    })
}

/// A completed run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    path: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn open(path: &Path) -> Result<Self> {
        let file = path.join(MANIFEST);
        if !file.is_file() {
            return Err(Error::MissingRun(path.display().to_string()));
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(&file)?)?;
        Ok(Self {
            path: path.to_path_buf(),
            manifest,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Config with file paths resolved against the run directory.
    pub fn config(&self) -> RunConfig {
        let mut cfg = self.manifest.config.clone();
        if let InitSpec::File { path } = &mut cfg.init {
            if path.is_relative() {
                *path = self.path.join(&*path);
            }
        }
        cfg
    }

    pub fn constants(&self) -> Result<OracleConstants> {
        let file = self.path.join(CONSTANTS);
        if !file.is_file() {
            return Err(Error::MissingCalibration);
        }
        Ok(serde_json::from_slice(&fs::read(file)?)?)
    }

    /// Re-solves from the manifest and checks the result against the stored
    /// diagnostics.
    pub fn trajectory(&self) -> Result<FlowTrajectory> {
        let cfg = self.config();
        let u0 = cfg.initial_field()?;
        let traj = evolve(&u0, &self.manifest.problem, &cfg.prox_config())?;
        let stored = fs::read(self.path.join(DIAGNOSTICS))?;
        if diagnostics_csv(traj.diagnostics())? != stored {
            return Err(Error::invalid(
                DIAGNOSTICS,
                "regenerated trajectory does not reproduce the stored diagnostics",
            ));
        }
        Ok(traj)
    }

    fn particles_dir(&self) -> PathBuf {
        self.path.join("particles")
    }

    pub fn simulation_name(spec: &ParticleSpec) -> String {
        format!("N{}_seed{}_sub{}", spec.n, spec.seed, spec.substeps)
    }

    /// Runs a particle simulation and writes its snapshots. An existing
    /// complete simulation with the same parameters is reused.
    pub fn simulate(&self, spec: &ParticleSpec) -> Result<PathBuf> {
        let dir = self.particles_dir().join(Self::simulation_name(spec));
        if dir.join(MANIFEST).is_file() {
            log::info!("{} already simulated", dir.display());
            return Ok(dir);
        }
        if dir.exists() {
            return Err(Error::AlreadyExists(dir.display().to_string()));
        }
        let traj = self.trajectory()?;
        self.simulate_on(&traj, spec, &dir)?;
        Ok(dir)
    }

    fn simulate_on(&self, traj: &FlowTrajectory, spec: &ParticleSpec, dir: &Path) -> Result<()> {
        let started = Instant::now();
        let sim = simulate(
            traj,
            &SimulationConfig {
                particles: spec.n,
                seed: spec.seed,
                substeps: spec.substeps,
                snapshot_every: self.manifest.config.snapshot_every,
            },
        )?;
        let wall = started.elapsed().as_secs_f64();
        log::info!("simulated {} particles in {wall:.2}s", spec.n);
        for s in &sim.snapshots {
            let mut buf = Vec::new();
            s.ensemble.write_csv(&mut buf)?;
            write_new(&dir.join(format!("step_{:05}.csv", s.step)), &buf)?;
        }
        let manifest = SimulationManifest {
            n: spec.n,
            seed: spec.seed,
            substeps: spec.substeps,
            dt: self.manifest.problem.dt,
            snapshot_steps: sim.snapshots.iter().map(|s| s.step).collect(),
            times: sim.snapshots.iter().map(|s| s.t).collect(),
            path_integral: sim.path_integral,
            wall_time_s: wall,
        };
        write_new(&dir.join(MANIFEST), &json(&manifest))
    }

    /// Completed simulations, sorted by name.
    pub fn simulations(&self) -> Result<Vec<(String, SimulationManifest)>> {
        let dir = self.particles_dir();
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let m = entry.path().join(MANIFEST);
            if m.is_file() {
                let manifest: SimulationManifest = serde_json::from_slice(&fs::read(m)?)?;
                out.push((entry.file_name().to_string_lossy().into_owned(), manifest));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    pub fn load_snapshots(&self, name: &str) -> Result<Vec<Snapshot>> {
        let dir = self.particles_dir().join(name);
        let m: SimulationManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
        let d = self.manifest.problem.dim;
        m.snapshot_steps
            .iter()
            .zip(&m.times)
            .map(|(&step, &t)| {
                let ensemble = read_ensemble(&dir.join(format!("step_{step:05}.csv")), d, m.seed)?;
                Ok(Snapshot { step, t, ensemble })
            })
            .collect()
    }

    pub fn verify_options(&self) -> Result<VerifyOptions> {
        Ok(VerifyOptions {
            c_support: Some(self.constants()?.c_support),
            source_time: self.manifest.config.source_time(),
            gradient_tol: self.manifest.config.tolerances.gradient,
        })
    }

    /// Runs all estimate checks plus one superposition check per simulation
    /// and writes `report.json`.
    pub fn verify(&self) -> Result<EstimateReport> {
        let traj = self.trajectory()?;
        let mut report = verify(&traj, &self.verify_options()?, None)?;
        for (name, _) in self.simulations()? {
            let (mut check, _) = check_superposition(&traj, &self.load_snapshots(&name)?)?;
            check.name = format!("{} [{name}]", check.name);
            report.checks.push(check);
        }
        write_new(&self.path.join(REPORT), &json(&report))?;
        Ok(report)
    }

    /// Per-snapshot distances for every simulation, written to
    /// `comparison.json`.
    pub fn compare(&self) -> Result<Vec<SimulationComparison>> {
        let sims = self.simulations()?;
        if sims.is_empty() {
            return Err(Error::MissingRun(self.particles_dir().display().to_string()));
        }
        let traj = self.trajectory()?;
        let mut out = Vec::new();
        for (name, m) in sims {
            let snapshots = self
                .load_snapshots(&name)?
                .iter()
                .map(|s| compare_snapshot(s.t, &s.ensemble, &normalised_field(&traj.fields()[s.step])))
                .collect::<Result<Vec<_>>>()?;
            out.push(SimulationComparison {
                simulation: name,
                n: m.n,
                seed: m.seed,
                snapshots,
            });
        }
        write_new(&self.path.join(COMPARISON), &json(&out))?;
        Ok(out)
    }
}

fn normalised_field(u: &ScalarField) -> ScalarField {
    let m = u.mass();
    if m > 0.0 {
        u.scaled(1.0 / m)
    } else {
        u.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationComparison {
    pub simulation: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub snapshots: Vec<SnapshotComparison>,
}

fn read_ensemble(path: &Path, dim: usize, seed: u64) -> Result<ParticleEnsemble> {
    let mut r = csv::Reader::from_path(path)?;
    let mut positions = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::invalid(path.display().to_string(), "unexpected column count"));
        }
        for v in rec.iter().skip(1) {
            positions.push(
                v.parse::<f64>()
                    .map_err(|e| Error::invalid(path.display().to_string(), e.to_string()))?,
            );
        }
    }
    ParticleEnsemble::from_positions(dim, positions, seed)
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    N,
    Dt,
    #[serde(rename = "N")]
    Particles,
    Delta,
    Epsilon,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Self::N),
            "dt" => Ok(Self::Dt),
            "N" => Ok(Self::Particles),
            "delta" => Ok(Self::Delta),
            "epsilon" => Ok(Self::Epsilon),
            other => Err(Error::invalid("axis", format!("unknown axis `{other}` (n, dt, N, delta, epsilon)"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::N => "n",
            Self::Dt => "dt",
            Self::Particles => "N",
            Self::Delta => "delta",
            Self::Epsilon => "epsilon",
        })
    }
}

/// One row of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub level: usize,
    pub value: f64,
    pub metric: String,
    /// Median over seeds (a single value for deterministic axes).
    pub median: f64,
    pub mean: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Log-log slope of the per-level mean against the swept value.
    pub slope: Option<f64>,
}

impl SweepTable {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn medians(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.median).collect()
    }

    /// True when every level improves on the previous one.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median < w[0].median)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn terminal(cfg: &RunConfig) -> Result<(FlowTrajectory, Problem)> {
    cfg.validate()?;
    let u0 = cfg.initial_field()?;
    let pb = cfg.problem(&u0)?;
    Ok((evolve(&u0, &pb, &cfg.prox_config())?, pb))
}

/// Terminal distance between particles and field: W1 in 1D, coarse
/// histogram L1 in 2D.
pub fn terminal_particle_distance(traj: &FlowTrajectory, spec: &ParticleSpec) -> Result<f64> {
    let sim = simulate(
        traj,
        &SimulationConfig {
            particles: spec.n,
            seed: spec.seed,
            substeps: spec.substeps,
            snapshot_every: traj.steps().max(1),
        },
    )?;
    let last = sim.snapshots.last().unwrap();
    let field = normalised_field(traj.terminal());
    if traj.problem().dim == 1 {
        crate::marginals::w1_distance_1d(&last.ensemble, &field)
    } else {
        coarse_histogram_l1(&last.ensemble, &field)
    }
}

/// Refines one parameter over `levels` levels and records a convergence
/// metric for each:
///
/// * `n` doubles, `dt` halves: L1 error against the source solution for
///   Barenblatt data, otherwise L2 distance to the finest level.
/// * `epsilon`, `delta` drop tenfold from the configured value (0.1 when
///   unset): L2 distance at `T` to the run with the parameter set to zero.
/// * `N` grows tenfold: terminal particle distance, over `seeds` seeds.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, levels: usize, seeds: usize) -> Result<SweepTable> {
    if levels == 0 {
        return Err(Error::invalid("levels", "need at least one level"));
    }
    if seeds == 0 {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    let mut rows = Vec::with_capacity(levels);
    let mut push = |level: usize, value: f64, metric: &str, mut samples: Vec<f64>| {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        rows.push(SweepRow {
            axis: axis.to_string(),
            level,
            value,
            metric: metric.to_string(),
            median: median(&mut samples),
            mean,
            samples: samples.len(),
        });
    };
    match axis {
        SweepAxis::N | SweepAxis::Dt => {
            let variants: Vec<RunConfig> = (0..levels)
                .map(|i| {
                    let mut c = cfg.clone();
                    if axis == SweepAxis::N {
                        c.n = cfg.n << i;
                    } else {
                        c.dt = cfg.dt / (1u64 << i) as f64;
                    }
                    c
                })
                .collect();
            let fields = variants
                .iter()
                .map(|c| terminal(c).map(|(t, _)| t.terminal().clone()))
                .collect::<Result<Vec<_>>>()?;
            for (i, (c, u)) in variants.iter().zip(&fields).enumerate() {
                let value = if axis == SweepAxis::N { c.n as f64 } else { c.dt };
                if let InitSpec::Barenblatt { t0, mass } = c.init {
                    let prof = BarenblattProfile::with_mass(c.p, c.d, mass)?;
                    let exact = prof.sample(*u.grid(), t0 + c.horizon);
                    push(i, value, "l1_vs_source", vec![u.l1_distance(&exact)?]);
                } else {
                    let finest = fields.last().unwrap();
                    let reference = if axis == SweepAxis::N {
                        finest.restrict(finest.grid().n() / u.grid().n())?
                    } else {
                        finest.clone()
                    };
                    push(i, value, "l2_vs_finest", vec![u.l2_distance(&reference)?]);
                }
            }
        }
        SweepAxis::Epsilon | SweepAxis::Delta => {
            let mut base = cfg.clone();
            let start = if axis == SweepAxis::Epsilon {
                base.epsilon = 0.0;
                if cfg.epsilon > 0.0 { cfg.epsilon } else { 0.1 }
            } else {
                base.delta = Some(0.0);
                cfg.delta.filter(|d| *d > 0.0).unwrap_or(0.1)
            };
            let (reference, _) = terminal(&base)?;
            for i in 0..levels {
                let value = start / 10f64.powi(i as i32);
                let mut c = base.clone();
                if axis == SweepAxis::Epsilon {
                    c.epsilon = value;
                } else {
                    c.delta = Some(value);
                }
                let (traj, _) = terminal(&c)?;
                push(i, value, "l2_vs_unregularised", vec![traj.terminal().l2_distance(reference.terminal())?]);
            }
        }
        SweepAxis::Particles => {
            let (traj, _) = terminal(cfg)?;
            let metric = if cfg.d == 1 { "terminal_w1" } else { "terminal_l1_coarse" };
            for i in 0..levels {
                let n = cfg.particles.n * 10usize.pow(i as u32);
                let samples = (0..seeds as u64)
                    .map(|s| {
                        terminal_particle_distance(
                            &traj,
                            &ParticleSpec {
                                n,
                                seed: cfg.particles.seed + s,
                                substeps: cfg.particles.substeps,
                            },
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                push(i, n as f64, metric, samples);
            }
        }
    }
    let slope = if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.value).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        power_law_fit(&x, &y).ok().map(|(k, _)| k)
    } else {
        None
    };
    Ok(SweepTable { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig::from_json(
            r#"{"p": 4, "d": 1, "L": 6, "n": 128, "dt": 5e-3, "T": 0.05,
                "init": {"type": "barenblatt", "params": {"t0": 1.0}},
                "particles": {"N": 2000, "seed": 7}, "snapshot_every": 4}"#,
        )
        .unwrap()
    }

    #[test]
    fn solve_writes_artifacts_and_refuses_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let run = solve(&small(), &out).unwrap();
        assert_eq!(run.manifest().steps, 10);
        assert_eq!(run.manifest().checkpoints, vec![0, 4, 8, 10]);
        let diag = fs::read_to_string(out.join(DIAGNOSTICS)).unwrap();
        assert_eq!(diag.lines().count(), 12);
        assert!(diag.starts_with("t,mass,l1,l2,sup,min,phi,support_radius,residual,iters"));
        assert!(field_path(&out, 10).is_file());
        assert!(matches!(solve(&small(), &out), Err(Error::AlreadyExists(_))));

        let again = dir.path().join("again");
        solve(&small(), &again).unwrap();
        assert_eq!(fs::read(out.join(DIAGNOSTICS)).unwrap(), fs::read(again.join(DIAGNOSTICS)).unwrap());
    }

    #[test]
    fn simulate_verify_compare_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let run = solve(&small(), dir.path()).unwrap();
        let spec = small().particles;
        let sim = run.simulate(&spec).unwrap();
        assert!(sim.join("step_00010.csv").is_file());
        let first = fs::read(sim.join("step_00010.csv")).unwrap();
        run.simulate(&spec).unwrap();
        assert_eq!(fs::read(sim.join("step_00010.csv")).unwrap(), first);

        let snaps = run.load_snapshots(&RunDir::simulation_name(&spec)).unwrap();
        assert_eq!(snaps.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 4, 8, 10]);

        let report = run.verify().unwrap();
        assert!(report.checks.iter().any(|c| c.name.starts_with("superposition")));
        let cmp = run.compare().unwrap();
        assert_eq!(cmp[0].snapshots.len(), 4);
        assert!(cmp[0].snapshots.iter().all(|s| s.w1.is_some()));
        // Deterministic outputs can be written again.
        run.verify().unwrap();
        run.compare().unwrap();
    }

    #[test]
    fn open_reports_missing_run() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(RunDir::open(dir.path()), Err(Error::MissingRun(_))));
    }

    #[test]
    fn tampered_diagnostics_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let run = solve(&small(), dir.path()).unwrap();
        let path = dir.path().join(DIAGNOSTICS);
        let text = fs::read_to_string(&path).unwrap().replacen("0,", "1e-300,", 1);
        fs::write(&path, text).unwrap();
        assert!(run.trajectory().is_err());
    }

    #[test]
    fn write_new_is_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        write_new(&f, b"x").unwrap();
        write_new(&f, b"x").unwrap();
        assert!(matches!(write_new(&f, b"y"), Err(Error::AlreadyExists(_))));
    }

    #[test]
    fn axis_names_parse() {
        for a in ["n", "dt", "N", "delta", "epsilon"] {
            assert_eq!(a.parse::<SweepAxis>().unwrap().to_string(), a);
        }
        assert!("h".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn dt_sweep_improves_against_source() {
        let table = sweep(&small(), SweepAxis::Dt, 2, 1).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].metric, "l1_vs_source");
        assert!(table.slope.is_some());
    }
}

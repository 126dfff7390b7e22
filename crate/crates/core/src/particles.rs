//! Particle realisation of the SDE `dX = b(t,X) dt + √2 s(t,X) dW`, with the
//! coefficients taken from the computed field.
//!
//! Particle `i` owns ChaCha8 stream `i` of the master seed. The first words
//! of the stream place the particle initially; the Gaussian increments are
//! then read from a fixed later offset in order, one step at a time. A path
//! therefore depends only on the seed, the id and the step index, never on
//! how the ensemble is split across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::grid::{Grid, ScalarField, MAX_DIM};

/// Word offset in each particle stream where the increments start; the words
/// before it are reserved for initial placement.
const NOISE_OFFSET: u128 = 1 << 16;

fn particle_rng(seed: u64, particle: usize, word: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    rng.set_word_pos(word);
    rng
}

/// Per-particle increment streams, advanced in step with the ensemble.
#[derive(Clone, Debug)]
pub struct NoiseStreams {
    streams: Vec<ChaCha8Rng>,
}

impl NoiseStreams {
    pub fn new(seed: u64, particles: usize) -> Self {
        Self {
            streams: (0..particles).map(|i| particle_rng(seed, i, NOISE_OFFSET)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    seed: u64,
    counter: u64,
}

impl ParticleEnsemble {
    /// Builds an ensemble from explicit positions (`d` per particle).
    pub fn from_positions(dim: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || positions.len() % dim != 0 {
            return Err(Error::invalid("positions", format!("expected a multiple of {dim} values")));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("positions", "must be finite"));
        }
        Ok(Self {
            dim,
            positions,
            seed,
            counter: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of Euler–Maruyama steps taken since sampling.
    pub fn steps_taken(&self) -> u64 {
        self.counter
    }

    /// All positions, `d` per particle.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Coordinates along one axis.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        self.positions.iter().skip(axis).step_by(self.dim).copied().collect()
    }

    pub fn mean(&self) -> [f64; MAX_DIM] {
        let mut m = [0.0; MAX_DIM];
        if self.is_empty() {
            return m;
        }
        for x in self.positions.chunks(self.dim) {
            for (a, v) in x.iter().enumerate() {
                m[a] += v;
            }
        }
        m.map(|v| v / self.len() as f64)
    }

    /// Writes `id,x[,y]` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id"];
        header.extend(&["x", "y"][..self.dim]);
        w.write_record(&header)?;
        for (i, x) in self.positions.chunks(self.dim).enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `n` particles from the piecewise-constant density `u0`: a cell by
/// inverse CDF over the flattened cells, then a uniform point inside it.
/// Negative values carry no weight.
pub fn sample_initial(u0: &ScalarField, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    let grid = *u0.grid();
    let d = grid.dim();
    let mut cdf = Vec::with_capacity(grid.cell_count());
    let mut acc = 0.0;
    for &v in u0.values() {
        acc += v.max(0.0);
        cdf.push(acc);
    }
    let mass = acc * grid.cell_volume();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass(mass));
    }
    let h = grid.spacing();
    let mut positions = vec![0.0; n * d];
    positions.par_chunks_mut(d).enumerate().for_each(|(i, x)| {
        let mut rng = particle_rng(seed, i, 0);
        let target = rng.random::<f64>() * acc;
        let cell = cdf.partition_point(|&c| c <= target).min(grid.cell_count() - 1);
        let centre = grid.position(cell);
        for (a, xa) in x.iter_mut().enumerate() {
            *xa = centre[a] + h * (rng.random::<f64>() - 0.5);
        }
    });
    Ok(ParticleEnsemble {
        dim: d,
        positions,
        seed,
        counter: 0,
    })
}

fn escaped(grid: &Grid, x: &[f64]) -> bool {
    x.iter().any(|v| !(v.abs() <= grid.half_width()))
}

/// One Euler–Maruyama step `X += b dt + √(2dt) s ξ` with caller-supplied
/// standard normal increments `ξ` (`d` per particle).
pub fn em_step_with_noise(
    ens: &ParticleEnsemble,
    coeff: &CoefficientField,
    dt: f64,
    noise: &[f64],
) -> Result<ParticleEnsemble> {
    if noise.len() != ens.positions.len() {
        return Err(Error::invalid("noise", "need one increment per coordinate"));
    }
    advance(ens, coeff, dt, |i, xi| xi.copy_from_slice(&noise[i * ens.dim..(i + 1) * ens.dim]))
        .map(|(e, _)| e)
}

/// One Euler–Maruyama step drawing increments from `streams`.
pub fn em_step(
    ens: &ParticleEnsemble,
    coeff: &CoefficientField,
    dt: f64,
    streams: &mut NoiseStreams,
) -> Result<ParticleEnsemble> {
    if streams.len() != ens.len() {
        return Err(Error::invalid("streams", "need one stream per particle"));
    }
    let d = ens.dim;
    let mut noise = vec![0.0; ens.positions.len()];
    noise
        .par_chunks_mut(d)
        .zip(streams.streams.par_iter_mut())
        .for_each(|(xi, rng)| {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        });
    advance(ens, coeff, dt, |i, xi| xi.copy_from_slice(&noise[i * d..(i + 1) * d])).map(|(e, _)| e)
}

/// Shared stepping kernel; also returns per-particle `(|b| + s²) dt`.
fn advance(
    ens: &ParticleEnsemble,
    coeff: &CoefficientField,
    dt: f64,
    noise: impl Fn(usize, &mut [f64]) + Sync,
) -> Result<(ParticleEnsemble, Vec<f64>)> {
    let d = ens.dim;
    if coeff.grid().dim() != d {
        return Err(Error::GridMismatch);
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let grid = *coeff.grid();
    let scale = (2.0 * dt).sqrt();
    let mut positions = ens.positions.clone();
    let mut cost = vec![0.0; ens.len()];
    positions
        .par_chunks_mut(d)
        .zip(cost.par_iter_mut())
        .enumerate()
        .for_each(|(i, (x, c))| {
            let mut xi = [0.0; MAX_DIM];
            noise(i, &mut xi[..d]);
            let (b, s) = coeff.interpolate(x);
            let mut bnorm = 0.0;
            for a in 0..d {
                x[a] += b[a] * dt + scale * s * xi[a];
                bnorm += b[a] * b[a];
            }
            *c = (bnorm.sqrt() + s * s) * dt;
        });
    let first_out = positions
        .par_chunks(d)
        .position_first(|x| escaped(&grid, x));
    if let Some(id) = first_out {
        return Err(Error::EscapedDomain {
            id,
            step: (ens.counter + 1) as usize,
            position: positions[id * d..(id + 1) * d].to_vec(),
        });
    }
    Ok((
        ParticleEnsemble {
            dim: d,
            positions,
            seed: ens.seed,
            counter: ens.counter + 1,
        },
        cost,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationConfig {
    pub particles: usize,
    pub seed: u64,
    /// Euler–Maruyama steps per PDE step.
    pub substeps: usize,
    /// Keep a snapshot every this many PDE steps (the initial and final
    /// ensembles are always kept).
    pub snapshot_every: usize,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::invalid("particles.substeps", "must be at least 1"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    /// PDE step index.
    pub step: usize,
    pub t: f64,
    pub ensemble: ParticleEnsemble,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub snapshots: Vec<Snapshot>,
    /// Empirical `E ∫ (|b(X)| + s(X)²) dt` over the whole horizon.
    pub path_integral: f64,
}

/// Pushes `N` particles through the trajectory. On `[t_k, t_{k+1})` the
/// coefficients come from `u_{k+1}`, the field the implicit step solves for.
pub fn simulate(traj: &FlowTrajectory, cfg: &SimulationConfig) -> Result<Simulation> {
    cfg.validate()?;
    let pb = traj.problem();
    let mut ens = if cfg.particles == 0 {
        ParticleEnsemble::from_positions(pb.dim, Vec::new(), cfg.seed)?
    } else {
        sample_initial(traj.initial(), cfg.particles, cfg.seed)?
    };
    let mut snapshots = vec![Snapshot {
        step: 0,
        t: 0.0,
        ensemble: ens.clone(),
    }];
    let mut path_integral = 0.0;
    let d = pb.dim;
    let mut streams = NoiseStreams::new(cfg.seed, ens.len());
    let mut noise = vec![0.0; ens.len() * d];
    let steps = traj.steps();
    for k in 0..steps {
        let t_next = traj.times()[k + 1];
        let dt = (t_next - traj.times()[k]) / cfg.substeps as f64;
        let coeff = CoefficientField::from_field(&traj.fields()[k + 1], pb.p, pb.delta, t_next);
        for _ in 0..cfg.substeps {
            noise
                .par_chunks_mut(d)
                .zip(streams.streams.par_iter_mut())
                .for_each(|(xi, rng)| {
                    for v in xi.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                });
            let (next, cost) = advance(&ens, &coeff, dt, |i, xi| xi.copy_from_slice(&noise[i * d..(i + 1) * d]))?;
            if !cost.is_empty() {
                path_integral += cost.iter().sum::<f64>() / cost.len() as f64;
            }
            ens = next;
        }
        if (k + 1) % cfg.snapshot_every == 0 || k + 1 == steps {
            snapshots.push(Snapshot {
                step: k + 1,
                t: t_next,
                ensemble: ens.clone(),
            });
        }
    }
    Ok(Simulation {
        snapshots,
        path_integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_unit(grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x| if (0.0..1.0).contains(&x[0]) { 1.0 } else { 0.0 })
    }

    #[test]
    fn uniform_sample_mean_is_within_clt_band() {
        let g = Grid::new(1, 64, 2.0).unwrap();
        let n = 100_000;
        let ens = sample_initial(&uniform_unit(g), n, 7).unwrap();
        let band = 3.0 / (12.0 * n as f64).sqrt();
        assert!((ens.mean()[0] - 0.5).abs() < band);
        assert!(ens.positions().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn single_cell_indicator_keeps_particles_in_the_cell() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let mut v = vec![0.0; 64];
        v[27] = 3.0;
        let ens = sample_initial(&ScalarField::new(g, v).unwrap(), 1000, 1).unwrap();
        for i in 0..ens.len() {
            assert_eq!(g.locate(ens.position(i)), Some(27));
        }
        let z = ScalarField::zeros(g);
        assert!(matches!(sample_initial(&z, 10, 1), Err(Error::ZeroMass(_))));
    }

    #[test]
    fn two_bumps_split_evenly() {
        let g = Grid::new(1, 128, 4.0).unwrap();
        let u = ScalarField::from_fn(g, |x| {
            let r = (x[0].abs() - 2.0).abs();
            (1.0 - r).max(0.0)
        });
        let n = 50_000;
        let ens = sample_initial(&u, n, 3).unwrap();
        let right = ens.axis(0).iter().filter(|&&x| x > 0.0).count() as f64 / n as f64;
        assert!((right - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn zero_coefficients_leave_positions_unchanged() {
        let g = Grid::new(2, 16, 2.0).unwrap();
        let ens = sample_initial(&ScalarField::constant(g, 1.0), 500, 9).unwrap();
        let mut streams = NoiseStreams::new(9, ens.len());
        let next = em_step(&ens, &CoefficientField::zeros(g, 0.0), 0.1, &mut streams).unwrap();
        assert_eq!(next.positions(), ens.positions());
        assert_eq!(next.steps_taken(), 1);
    }

    #[test]
    fn constant_drift_translates_every_particle() {
        let g = Grid::new(1, 32, 4.0).unwrap();
        let ens = sample_initial(&uniform_unit(g), 1000, 2).unwrap();
        let cf = CoefficientField::uniform(g, 0.0, &[0.7], 0.0).unwrap();
        let next = em_step(&ens, &cf, 0.01, &mut NoiseStreams::new(2, 1000)).unwrap();
        for (a, b) in ens.positions().iter().zip(next.positions()) {
            assert!((b - a - 0.007).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_diffusion_gives_variance_two_g_squared_dt() {
        let g = Grid::new(2, 16, 4.0).unwrap();
        let n = 500_000;
        let start = ParticleEnsemble::from_positions(2, vec![0.0; 2 * n], 11).unwrap();
        assert!(std::mem::size_of::<ChaCha8Rng>() < 400);
        let (gs, dt) = (0.8, 0.01);
        let cf = CoefficientField::uniform(g, 0.0, &[0.0, 0.0], gs).unwrap();
        let next = em_step(&start, &cf, dt, &mut NoiseStreams::new(11, n)).unwrap();
        let expect = 2.0 * gs * gs * dt;
        for a in 0..2 {
            let xs = next.axis(a);
            let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
            assert!((var / expect - 1.0).abs() < 0.01, "axis {a}: {var} vs {expect}");
        }
    }

    #[test]
    fn escape_reports_the_lowest_particle_id() {
        let g = Grid::new(1, 8, 1.0).unwrap();
        let ens = ParticleEnsemble::from_positions(1, vec![0.0, 0.5, 0.85, 0.9], 0).unwrap();
        let cf = CoefficientField::uniform(g, 0.0, &[10.0], 0.0).unwrap();
        match em_step(&ens, &cf, 0.02, &mut NoiseStreams::new(0, 4)) {
            Err(Error::EscapedDomain { id, step, .. }) => {
                assert_eq!((id, step), (2, 1));
            }
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn worker_count_does_not_change_positions() {
        let g = Grid::new(2, 16, 2.0).unwrap();
        let u = ScalarField::from_fn(g, |x| (-4.0 * (x[0] * x[0] + x[1] * x[1])).exp());
        let cf = CoefficientField::from_field(&u, 4.0, 1e-6, 0.0);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut e = sample_initial(&u, 20_000, 42).unwrap();
                let mut streams = NoiseStreams::new(42, e.len());
                for _ in 0..5 {
                    e = em_step(&e, &cf, 1e-3, &mut streams).unwrap();
                }
                e
            })
        };
        let one = run(1);
        let many = run(4);
        assert!(one.positions().iter().zip(many.positions()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn streams_differ_by_particle_and_offset() {
        let a: f64 = particle_rng(1, 0, NOISE_OFFSET).sample(StandardNormal);
        let b: f64 = particle_rng(1, 1, NOISE_OFFSET).sample(StandardNormal);
        let c: f64 = particle_rng(1, 0, 0).sample(StandardNormal);
        let a2: f64 = particle_rng(1, 0, NOISE_OFFSET).sample(StandardNormal);
        assert_eq!(a, a2);
        assert!(a != b && a != c);
    }
}

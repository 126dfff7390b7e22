//! Densities estimated from particle ensembles and distances between them and
//! grid fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, MAX_DIM};
use crate::particles::ParticleEnsemble;

/// Cell counts divided by `N h^d`. Particles outside the box are dropped, so
/// the mass falls short of one exactly by the escaped fraction.
pub fn histogram_density(ens: &ParticleEnsemble, grid: Grid) -> Result<ScalarField> {
    if ens.is_empty() {
        return Err(Error::invalid("N", "histogram needs at least one particle"));
    }
    if ens.dim() != grid.dim() {
        return Err(Error::GridMismatch);
    }
    let mut counts = vec![0u64; grid.cell_count()];
    for i in 0..ens.len() {
        if let Some(c) = grid.locate(ens.position(i)) {
            counts[c] += 1;
        }
    }
    let w = 1.0 / (ens.len() as f64 * grid.cell_volume());
    ScalarField::new(grid, counts.into_iter().map(|c| c as f64 * w).collect())
}

/// Number of particles inside the box.
pub fn effective_count(ens: &ParticleEnsemble, grid: &Grid) -> usize {
    (0..ens.len()).filter(|&i| grid.locate(ens.position(i)).is_some()).count()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// `1.06 σ̂ N^{-1/5}` per axis.
    Silverman,
    Fixed(f64),
}

/// Rule-of-thumb bandwidth per axis.
pub fn silverman_bandwidth(ens: &ParticleEnsemble) -> Result<[f64; MAX_DIM]> {
    let n = ens.len();
    if n < 2 {
        return Err(Error::DegenerateSample);
    }
    let mut bw = [0.0; MAX_DIM];
    for (a, b) in bw.iter_mut().enumerate().take(ens.dim()) {
        let xs = ens.axis(a);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) {
            return Err(Error::DegenerateSample);
        }
        *b = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    }
    Ok(bw)
}

const KDE_CUTOFF: f64 = 6.0;
const KDE_CHUNK: usize = 4096;

/// Kernel mass of a 1D Gaussian centred at `x` falling in each cell along one
/// axis, as `(first cell, masses)`.
fn axis_masses(grid: &Grid, x: f64, bw: f64) -> (usize, Vec<f64>) {
    let (l, h, n) = (grid.half_width(), grid.spacing(), grid.n());
    let lo = (((x - KDE_CUTOFF * bw + l) / h).floor().max(0.0) as usize).min(n);
    let hi = (((x + KDE_CUTOFF * bw + l) / h).ceil().max(0.0) as usize).min(n);
    let cdf = |e: f64| 0.5 * libm::erfc(-(e - x) / (bw * std::f64::consts::SQRT_2));
    let masses = (lo..hi)
        .map(|i| {
            let left = -l + i as f64 * h;
            cdf(left + h) - cdf(left)
        })
        .collect();
    (lo, masses)
}

/// Gaussian product-kernel density, integrated over each cell and
/// renormalised to unit mass on the grid.
///
/// Integrating over cells rather than sampling at centres makes the
/// small-bandwidth limit the histogram.
pub fn kde_density(ens: &ParticleEnsemble, grid: Grid, bandwidth: Bandwidth) -> Result<ScalarField> {
    if ens.is_empty() {
        return Err(Error::invalid("N", "density estimate needs at least one particle"));
    }
    if ens.dim() != grid.dim() {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let bw = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(ens)?,
        Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => [b; MAX_DIM],
        Bandwidth::Fixed(_) => return Err(Error::invalid("bandwidth", "must be positive")),
    };
    // Fixed chunks summed in order keep the result independent of threading.
    let partials: Vec<Vec<f64>> = ens
        .positions()
        .par_chunks(KDE_CHUNK * d)
        .map(|chunk| {
            let mut acc = vec![0.0; grid.cell_count()];
            for x in chunk.chunks(d) {
                let (i0, mx) = axis_masses(&grid, x[0], bw[0]);
                if d == 1 {
                    for (k, m) in mx.iter().enumerate() {
                        acc[i0 + k] += m;
                    }
                } else {
                    let (j0, my) = axis_masses(&grid, x[1], bw[1]);
                    for (k, a) in mx.iter().enumerate() {
                        let row = (i0 + k) * grid.n();
                        for (l, b) in my.iter().enumerate() {
                            acc[row + j0 + l] += a * b;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; grid.cell_count()];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let mass: f64 = total.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass(0.0));
    }
    let w = 1.0 / (mass * grid.cell_volume());
    ScalarField::new(grid, total.into_iter().map(|v| v * w).collect())
}

/// `∫|a - b|` over `[x0, x1]` for `a` constant and `b` linear from `b0` to `b1`.
fn abs_linear_gap(x0: f64, x1: f64, a: f64, b0: f64, b1: f64) -> f64 {
    let (g0, g1) = (b0 - a, b1 - a);
    let w = x1 - x0;
    if g0 * g1 >= 0.0 {
        0.5 * w * (g0.abs() + g1.abs())
    } else {
        // Sign change inside: two triangles.
        0.5 * w * (g0 * g0 + g1 * g1) / (g0.abs() + g1.abs())
    }
}

/// Exact `W1 = ∫|F_emp - F_u|` on the line, with `F_u` the piecewise-linear
/// CDF of the renormalised piecewise-constant field.
pub fn w1_distance_1d(ens: &ParticleEnsemble, field: &ScalarField) -> Result<f64> {
    let grid = *field.grid();
    if grid.dim() != 1 || ens.dim() != 1 {
        return Err(Error::NotOneDimensional);
    }
    if ens.is_empty() {
        return Err(Error::invalid("N", "W1 needs at least one particle"));
    }
    let mass = field.values().iter().map(|v| v.max(0.0)).sum::<f64>();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass(mass));
    }
    let mut xs = ens.axis(0);
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let (l, h) = (grid.half_width(), grid.spacing());
    // Field CDF at cell edges.
    let mut edges_cdf = Vec::with_capacity(grid.n() + 1);
    edges_cdf.push(0.0);
    let mut acc = 0.0;
    for v in field.values() {
        acc += v.max(0.0) / mass;
        edges_cdf.push(acc.min(1.0));
    }
    let field_cdf = |x: f64| -> f64 {
        if x <= -l {
            return 0.0;
        }
        if x >= l {
            return 1.0;
        }
        let r = (x + l) / h;
        let i = (r.floor() as usize).min(grid.n() - 1);
        let f = r - i as f64;
        edges_cdf[i] + f * (edges_cdf[i + 1] - edges_cdf[i])
    };
    // Breakpoints: cell edges and sample positions, merged.
    let mut points: Vec<f64> = (0..=grid.n()).map(|i| -l + i as f64 * h).collect();
    points.extend_from_slice(&xs);
    points.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut below = 0usize;
    for w in points.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        while below < xs.len() && xs[below] <= x0 {
            below += 1;
        }
        if x1 > x0 {
            total += abs_linear_gap(x0, x1, below as f64 / n, field_cdf(x0), field_cdf(x1));
        }
    }
    Ok(total)
}

/// `W1` between two empirical measures on the line via their CDFs.
pub fn w1_between_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("N", "W1 needs non-empty samples"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    let mut prev = xa[0].min(xb[0]);
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        total += (next - prev) * (i as f64 / na - j as f64 / nb).abs();
        while i < xa.len() && xa[i] <= next {
            i += 1;
        }
        while j < xb.len() && xb[j] <= next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// `Σ |a - b| h^d`.
pub fn l1_distance(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.l1_distance(b)
}

/// Distance between a snapshot and the field at the same time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotComparison {
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w1: Option<f64>,
    pub l1: f64,
    #[serde(rename = "N_effective")]
    pub n_effective: usize,
}

/// W1 (1D only) and histogram L1 between `ens` and `field`.
pub fn compare_snapshot(t: f64, ens: &ParticleEnsemble, field: &ScalarField) -> Result<SnapshotComparison> {
    let grid = *field.grid();
    let hist = histogram_density(ens, grid)?;
    let w1 = if grid.dim() == 1 {
        Some(w1_distance_1d(ens, field)?)
    } else {
        None
    };
    Ok(SnapshotComparison {
        t,
        w1,
        l1: hist.l1_distance(field)?,
        n_effective: effective_count(ens, &grid),
    })
}

//! Fokker–Planck coefficients of a computed field: the mobility
//! `a = |∇u|^{p-2}`, the drift `b = ∇a` and the diffusion scale
//! `s = |∇u|^{(p-2)/2}` (the SDE noise is `√2·s dW`).

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{gradient, laplacian, Grid, ScalarField, MAX_DIM};
use crate::operator::PLaplacian;

/// `s = (|∇u|² + δ²)^{(p-2)/4}` at cell centres.
pub fn diffusion_coeff(u: &ScalarField, p: f64, delta: f64) -> ScalarField {
    let e = (p - 2.0) / 4.0;
    let values = gradient(u)
        .squared_norms()
        .into_iter()
        .map(|g2| (g2 + delta * delta).powf(e))
        .collect();
    ScalarField::from_vec(*u.grid(), values)
}

/// `(|∇u|² + δ²)^{(p-2)/2}` at cell centres.
pub fn mobility(u: &ScalarField, p: f64, delta: f64) -> ScalarField {
    let s = diffusion_coeff(u, p, delta);
    let values = s.values().iter().map(|v| v * v).collect();
    ScalarField::from_vec(*u.grid(), values)
}

/// Central-difference gradient of the mobility, `d` components per cell.
pub fn drift_coeff(u: &ScalarField, p: f64, delta: f64) -> Vec<f64> {
    gradient(&mobility(u, p, delta)).cell_components().to_vec()
}

/// Central divergence of a cell-centred vector field (`d` components per
/// cell), reading values beyond the walls as zero.
fn cell_divergence(grid: &Grid, v: &[f64]) -> ScalarField {
    let d = grid.dim();
    let h = grid.spacing();
    let mut out = vec![0.0; grid.cell_count()];
    for c in grid.cells() {
        for a in 0..d {
            let up = grid.neighbor(c, a, true).map_or(0.0, |nb| v[nb * d + a]);
            let down = grid.neighbor(c, a, false).map_or(0.0, |nb| v[nb * d + a]);
            out[c] += (up - down) / (2.0 * h);
        }
    }
    ScalarField::from_vec(*grid, out)
}

/// Cellwise `div(a∇u) - [Δ(a u) - div(u ∇a)]`: the divergence form used by the
/// solver against the Fokker–Planck form the particles realise. The two agree
/// only in the limit `h → 0`.
pub fn fp_mismatch(u: &ScalarField, p: f64, delta: f64) -> ScalarField {
    let g = *u.grid();
    let op = PLaplacian::new(p, 0.0, delta);
    let lhs = op.apply(u);
    let a = mobility(u, p, delta);
    let au: Vec<f64> = a.values().iter().zip(u.values()).map(|(a, u)| a * u).collect();
    let diffusion = laplacian(&ScalarField::from_vec(g, au));
    let b = drift_coeff(u, p, delta);
    let d = g.dim();
    let ub: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(i, bi)| bi * u.values()[i / d])
        .collect();
    let transport = cell_divergence(&g, &ub);
    // `lhs` carries the sign of A = -div(a∇u).
    let values = lhs
        .values()
        .iter()
        .zip(diffusion.values())
        .zip(transport.values())
        .map(|((l, df), tr)| -l - (df - tr))
        .collect();
    ScalarField::from_vec(g, values)
}

/// Discrete L² norm of [`fp_mismatch`].
pub fn fp_consistency_residual(u: &ScalarField, p: f64, delta: f64) -> f64 {
    fp_mismatch(u, p, delta).l2_norm()
}

/// Drift and diffusion scale frozen at one time level.
///
/// Between cell centres the particle coefficients are taken from the
/// multilinear interpolant `I a` of the mobility: `s = √(I a)` and
/// `b = ∇(I a)`. Interpolating the nodal drift instead breaks `b = ∇a`
/// where `a` has a cusp (at the maximum of a source solution), and the
/// particles then pile up there. Any nodal drift that differs from the
/// central difference of `a` (constant test drifts, say) is interpolated
/// and added on top.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    grid: Grid,
    time: f64,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    mobility: Vec<f64>,
    excess: Option<Vec<f64>>,
}

impl CoefficientField {
    pub fn from_field(u: &ScalarField, p: f64, delta: f64, time: f64) -> Self {
        let a = mobility(u, p, delta);
        Self {
            grid: *u.grid(),
            time,
            drift: gradient(&a).cell_components().to_vec(),
            sigma: diffusion_coeff(u, p, delta).into_values(),
            mobility: a.into_values(),
            excess: None,
        }
    }

    /// Builds coefficients from nodal values, `d` drift components per cell.
    pub fn from_nodal(grid: Grid, time: f64, drift: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = grid.dim();
        if drift.len() != d * grid.cell_count() || sigma.len() != grid.cell_count() {
            return Err(Error::GridMismatch);
        }
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || drift.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("sigma", "coefficients must be finite, sigma >= 0"));
        }
        let mobility: Vec<f64> = sigma.iter().map(|s| s * s).collect();
        let central = gradient(&ScalarField::from_vec(grid, mobility.clone()));
        let excess: Vec<f64> = drift
            .iter()
            .zip(central.cell_components())
            .map(|(b, c)| b - c)
            .collect();
        let excess = excess.iter().any(|&e| e != 0.0).then_some(excess);
        Ok(Self {
            grid,
            time,
            drift,
            sigma,
            mobility,
            excess,
        })
    }

    /// Spatially constant coefficients, mainly for tests and controls.
    pub fn uniform(grid: Grid, time: f64, drift: &[f64], sigma: f64) -> Result<Self> {
        let d = grid.dim();
        if drift.len() != d {
            return Err(Error::invalid("drift", format!("expected {d} components")));
        }
        let nodal = drift.iter().copied().cycle().take(d * grid.cell_count()).collect();
        Self::from_nodal(grid, time, nodal, vec![sigma; grid.cell_count()])
    }

    pub fn zeros(grid: Grid, time: f64) -> Self {
        Self {
            grid,
            time,
            drift: vec![0.0; grid.dim() * grid.cell_count()],
            sigma: vec![0.0; grid.cell_count()],
            mobility: vec![0.0; grid.cell_count()],
            excess: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Nodal drift (central differences of the mobility), `d` per cell.
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn mobility(&self) -> &[f64] {
        &self.mobility
    }

    /// Particle coefficients `(b, s)` at `x`; zero outside the hull of the
    /// cell centres.
    pub fn interpolate(&self, x: &[f64]) -> ([f64; MAX_DIM], f64) {
        let g = &self.grid;
        let d = g.dim();
        let h = g.spacing();
        let mut base = 0usize;
        let mut frac = [0.0; MAX_DIM];
        for a in 0..d {
            let r = (x[a] + g.half_width()) / h - 0.5;
            if !(r >= 0.0 && r <= (g.n() - 1) as f64) {
                return ([0.0; MAX_DIM], 0.0);
            }
            let i = (r.floor() as usize).min(g.n() - 2);
            frac[a] = r - i as f64;
            base += i * g.stride(a);
        }
        let mut b = [0.0; MAX_DIM];
        let mut a_interp = 0.0;
        for corner in 0..(1usize << d) {
            let mut cell = base;
            let mut w = [0.0; MAX_DIM];
            for (a, fa) in frac.iter().enumerate().take(d) {
                if corner >> a & 1 == 1 {
                    w[a] = *fa;
                    cell += g.stride(a);
                } else {
                    w[a] = 1.0 - fa;
                }
            }
            let weight: f64 = w[..d].iter().product();
            let m = self.mobility[cell];
            a_interp += weight * m;
            for axis in 0..d {
                // ∂/∂x_axis of the multilinear weight of this corner.
                let sign = if corner >> axis & 1 == 1 { 1.0 } else { -1.0 };
                let others: f64 = (0..d).filter(|&o| o != axis).map(|o| w[o]).product();
                b[axis] += sign * others * m / h;
                if let Some(ex) = &self.excess {
                    b[axis] += weight * ex[cell * d + axis];
                }
            }
        }
        (b, a_interp.max(0.0).sqrt())
    }

    /// Writes `x[,y],b1[,b2],sigma` rows, one per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.grid.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = ["x", "y"][..d].to_vec();
        header.extend(&["b1", "b2"][..d]);
        header.push("sigma");
        w.write_record(&header)?;
        for c in self.grid.cells() {
            let x = self.grid.position(c);
            let mut row: Vec<String> = x[..d].iter().map(|v| v.to_string()).collect();
            row.extend(self.drift[c * d..(c + 1) * d].iter().map(|v| v.to_string()));
            row.push(self.sigma[c].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

//! Compact-stencil symmetric matrices on a grid and the two solvers the
//! Newton iteration needs: Thomas elimination in 1D, Jacobi-preconditioned CG
//! in 2D.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Matrix whose row `i` couples cell `i` only to cells whose axis indices
/// differ by at most one (3 entries per row in 1D, 9 in 2D).
#[derive(Clone, Debug)]
pub struct StencilMatrix {
    grid: Grid,
    slots: usize,
    coeffs: Vec<f64>,
}

impl StencilMatrix {
    pub fn zeros(grid: Grid) -> Self {
        let slots = 3usize.pow(grid.dim() as u32);
        Self {
            grid,
            slots,
            coeffs: vec![0.0; grid.cell_count() * slots],
        }
    }

    pub fn identity(grid: Grid) -> Self {
        let mut m = Self::zeros(grid);
        for c in grid.cells() {
            m.add(c, c, 1.0);
        }
        m
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        let n = self.grid.n();
        let off = col as isize - row as isize;
        if self.grid.dim() == 1 {
            debug_assert!(off.abs() <= 1, "entry outside the compact stencil");
            return (off + 1) as usize;
        }
        if n >= 4 {
            // Row offsets are ±n plus a column offset of at most one.
            let di = if off > 1 {
                1
            } else if off < -1 {
                -1
            } else {
                0
            };
            let dj = off - di * n as isize;
            debug_assert!(dj.abs() <= 1, "entry outside the compact stencil");
            return (3 * (di + 1) + dj + 1) as usize;
        }
        let g = &self.grid;
        let mut s = 0;
        for a in 0..g.dim() {
            let o = g.axis_index(col, a) as isize - g.axis_index(row, a) as isize;
            debug_assert!(o.abs() <= 1, "entry outside the compact stencil");
            s = 3 * s + (o + 1) as usize;
        }
        s
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let s = self.slot(row, col);
        self.coeffs[row * self.slots + s] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.coeffs[row * self.slots + self.slot(row, col)]
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &StencilMatrix) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
    }

    fn centre_slot(&self) -> usize {
        (self.slots - 1) / 2
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            for (row, yi) in y.iter_mut().enumerate() {
                let c = &self.coeffs[row * 3..row * 3 + 3];
                let mut acc = c[1] * x[row];
                if row > 0 {
                    acc += c[0] * x[row - 1];
                }
                if row + 1 < n {
                    acc += c[2] * x[row + 1];
                }
                *yi = acc;
            }
            return;
        }
        // Row-major 2D: slot `3 * (di + 1) + (dj + 1)` couples `(i, j)` to `(i + di, j + dj)`.
        for i in 0..n {
            let edge_row = i == 0 || i + 1 == n;
            for j in 0..n {
                let row = i * n + j;
                let c = &self.coeffs[row * 9..row * 9 + 9];
                if !edge_row && j > 0 && j + 1 < n {
                    let up = &x[row - n - 1..row - n + 2];
                    let mid = &x[row - 1..row + 2];
                    let down = &x[row + n - 1..row + n + 2];
                    y[row] = c[0] * up[0] + c[1] * up[1] + c[2] * up[2]
                        + c[3] * mid[0] + c[4] * mid[1] + c[5] * mid[2]
                        + c[6] * down[0] + c[7] * down[1] + c[8] * down[2];
                    continue;
                }
                let mut acc = 0.0;
                for di in 0..3 {
                    let ii = i + di;
                    if ii == 0 || ii > n {
                        continue;
                    }
                    for dj in 0..3 {
                        let jj = j + dj;
                        if jj == 0 || jj > n {
                            continue;
                        }
                        acc += c[3 * di + dj] * x[(ii - 1) * n + jj - 1];
                    }
                }
                y[row] = acc;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let cs = self.centre_slot();
        (0..self.grid.cell_count())
            .map(|r| self.coeffs[r * self.slots + cs])
            .collect()
    }

    /// Solves `self · x = b` for a symmetric positive definite matrix.
    pub fn solve(&self, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
        if self.grid.dim() == 1 {
            self.solve_tridiagonal(b)
        } else {
            self.solve_cg(b, rel_tol, 10 * self.grid.cell_count())
        }
    }

    fn solve_tridiagonal(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let lower = |i: usize| self.coeffs[i * 3];
        let diag = |i: usize| self.coeffs[i * 3 + 1];
        let upper = |i: usize| self.coeffs[i * 3 + 2];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = diag(0);
        if denom == 0.0 {
            return Err(Error::invalid("matrix", "zero pivot"));
        }
        c[0] = upper(0) / denom;
        d[0] = b[0] / denom;
        for i in 1..n {
            denom = diag(i) - lower(i) * c[i - 1];
            if denom == 0.0 {
                return Err(Error::invalid("matrix", "zero pivot"));
            }
            c[i] = upper(i) / denom;
            d[i] = (b[i] - lower(i) * d[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }

    fn solve_cg(&self, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = b.len();
        let inv_diag: Vec<f64> = self.diagonal().iter().map(|d| 1.0 / d).collect();
        let bnorm = norm(b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for _ in 0..max_iter {
            self.mul_vec(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if norm(&r) <= rel_tol * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual: norm(&r) / bnorm,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

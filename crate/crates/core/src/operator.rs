//! The discrete p-Dirichlet energy and its gradient, the p-Laplacian.
//!
//! The energy is a quadrature over "corner stencils": at every cell and for
//! every choice of one face per axis (upper or lower), the gradient is the
//! vector of the chosen face differences. In 2D these are the right-angled
//! triangles of the two diagonal triangulations of the mesh, each weighted
//! `h^2 / 4`; in 1D they collapse to the faces themselves. Because the
//! operator is defined as the exact gradient of this convex energy, a
//! backward-Euler step is exactly the minimiser of the proximal objective, and
//! because every corner term depends on face differences only, the operator
//! is in flux form and conserves mass.

use crate::grid::{divergence, gradient, FaceField, GradientField, Grid, ScalarField, MAX_DIM};
use crate::linalg::StencilMatrix;

/// `A_ε u = -div((|∇u|² + δ²)^{(p-2)/2} ∇u) - ε Δu` with its potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PLaplacian {
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// One corner stencil: the gradient built from one face per axis, and for
/// each axis the index of the cell below the face (`None` on a wall).
struct Corner {
    g: [f64; MAX_DIM],
    faces: [Option<usize>; MAX_DIM],
}

fn for_each_corner(grad: &GradientField, mut f: impl FnMut(usize, &Corner)) {
    let grid = *grad.grid();
    let d = grid.dim();
    for c in grid.cells() {
        for signs in 0..(1usize << d) {
            let mut corner = Corner {
                g: [0.0; MAX_DIM],
                faces: [None; MAX_DIM],
            };
            for a in 0..d {
                let upper = (signs >> a) & 1 == 0;
                let face = if upper {
                    grid.neighbor(c, a, true).map(|_| c)
                } else {
                    grid.neighbor(c, a, false)
                };
                if let Some(fc) = face {
                    corner.g[a] = grad.faces.axis(a)[fc];
                }
                corner.faces[a] = face;
            }
            f(c, &corner);
        }
    }
}

impl PLaplacian {
    pub fn new(p: f64, epsilon: f64, delta: f64) -> Self {
        Self { p, epsilon, delta }
    }

    fn regularised(&self, g2: f64) -> f64 {
        g2 + self.delta * self.delta
    }

    /// Flux coefficient `(|g|² + δ²)^{(p-2)/2}`.
    pub fn mobility(&self, g2: f64) -> f64 {
        let r = self.regularised(g2);
        if r == 0.0 {
            0.0
        } else {
            r.powf(0.5 * (self.p - 2.0))
        }
    }

    /// Energy density `((|g|² + δ²)^{p/2} - δ^p) / p`; vanishes at `g = 0`.
    pub fn density(&self, g2: f64) -> f64 {
        (self.regularised(g2).powf(0.5 * self.p) - self.regularised(0.0).powf(0.5 * self.p)) / self.p
    }

    /// `F(g) = (|g|² + δ²)^{(p-2)/2} g`.
    pub fn flux(&self, g: &[f64]) -> [f64; MAX_DIM] {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let m = self.mobility(g2);
        let mut out = [0.0; MAX_DIM];
        for (o, gi) in out.iter_mut().zip(g) {
            *o = m * gi;
        }
        out
    }

    /// `∂F_i/∂g_j = (p-2)(|g|²+δ²)^{(p-4)/2} g_i g_j + δ_ij (|g|²+δ²)^{(p-2)/2}`.
    pub fn flux_jacobian(&self, g: &[f64]) -> [[f64; MAX_DIM]; MAX_DIM] {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let r = self.regularised(g2);
        let mut out = [[0.0; MAX_DIM]; MAX_DIM];
        if r == 0.0 {
            return out;
        }
        let m = r.powf(0.5 * (self.p - 2.0));
        let k = (self.p - 2.0) * m / r;
        for i in 0..g.len() {
            for j in 0..g.len() {
                out[i][j] = k * g[i] * g[j] + if i == j { m } else { 0.0 };
            }
        }
        out
    }

    fn corner_weight(grid: &Grid) -> f64 {
        1.0 / (1usize << grid.dim()) as f64
    }

    /// Discrete potential `Φ_ε(u) = ∫ (1/p)((|∇u|²+δ²)^{p/2} - δ^p) + (ε/2)|∇u|²`.
    pub fn energy(&self, u: &ScalarField) -> f64 {
        let grid = *u.grid();
        let grad = gradient(u);
        let d = grid.dim();
        let mut s = 0.0;
        for_each_corner(&grad, |_, corner| {
            s += self.density(corner.g[..d].iter().map(|v| v * v).sum());
        });
        let mut e = s * Self::corner_weight(&grid) * grid.cell_volume();
        if self.epsilon > 0.0 {
            e += 0.5 * self.epsilon * grad.faces.dot(&grad.faces);
        }
        e
    }

    /// Face fluxes of the p-part: each face averages `F(g)` over the corner
    /// stencils that use it.
    pub fn face_flux(&self, u: &ScalarField) -> FaceField {
        let grid = *u.grid();
        let d = grid.dim();
        let w = Self::corner_weight(&grid);
        let grad = gradient(u);
        let mut flux = FaceField::zeros(grid);
        for_each_corner(&grad, |_, corner| {
            let f = self.flux(&corner.g[..d]);
            for a in 0..d {
                if let Some(fc) = corner.faces[a] {
                    flux.axis_mut(a)[fc] += w * f[a];
                }
            }
        });
        flux
    }

    /// `A_ε u`.
    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let mut flux = self.face_flux(u);
        if self.epsilon > 0.0 {
            let grad = gradient(u);
            for a in 0..u.grid().dim() {
                for (f, g) in flux.axis_mut(a).iter_mut().zip(grad.faces.axis(a)) {
                    *f += self.epsilon * g;
                }
            }
        }
        divergence(&flux).scaled(-1.0)
    }

    /// Assembles `Σ_corners w Bᵀ K(g) B` where `K` is either the flux
    /// Jacobian (Newton) or the frozen mobility times identity (Picard), plus
    /// the viscous Laplacian.
    fn assemble(&self, u: &ScalarField, lagged: bool) -> StencilMatrix {
        let grid = *u.grid();
        let d = grid.dim();
        let h2 = grid.spacing().powi(2);
        let w = Self::corner_weight(&grid);
        let grad = gradient(u);
        let mut m = StencilMatrix::zeros(grid);
        for_each_corner(&grad, |c, corner| {
            let k = if lagged {
                let mob = self.mobility(corner.g[..d].iter().map(|v| v * v).sum());
                let mut k = [[0.0; MAX_DIM]; MAX_DIM];
                for (a, row) in k.iter_mut().enumerate().take(d) {
                    row[a] = mob;
                }
                k
            } else {
                self.flux_jacobian(&corner.g[..d])
            };
            // B_a = (e_hi - e_lo)/h for the face chosen along axis a.
            let mut ends = [None; MAX_DIM];
            for (a, e) in ends.iter_mut().enumerate().take(d) {
                *e = corner.faces[a].map(|fc| (fc + grid.stride(a), fc));
            }
            debug_assert!(ends[..d].iter().flatten().all(|&(hi, lo)| hi == c || lo == c));
            for a in 0..d {
                let Some((ha, la)) = ends[a] else { continue };
                for b in 0..d {
                    let Some((hb, lb)) = ends[b] else { continue };
                    let v = w * k[a][b] / h2;
                    if v == 0.0 {
                        continue;
                    }
                    m.add(ha, hb, v);
                    m.add(ha, lb, -v);
                    m.add(la, hb, -v);
                    m.add(la, lb, v);
                }
            }
        });
        if self.epsilon > 0.0 {
            let v = self.epsilon / h2;
            for c in grid.cells() {
                for a in 0..d {
                    if let Some(nb) = grid.neighbor(c, a, true) {
                        m.add(c, c, v);
                        m.add(nb, nb, v);
                        m.add(c, nb, -v);
                        m.add(nb, c, -v);
                    }
                }
            }
        }
        m
    }

    /// Jacobian `∂(A_ε u)/∂u`.
    pub fn jacobian(&self, u: &ScalarField) -> StencilMatrix {
        self.assemble(u, false)
    }

    /// Linear operator with the mobility frozen at `u` (Kačanov/Picard).
    pub fn lagged(&self, u: &ScalarField) -> StencilMatrix {
        self.assemble(u, true)
    }

    /// `Φ_ε(u + α s) - Φ_ε(u)` evaluated term by term so that tiny changes
    /// near convergence are not lost to cancellation.
    pub fn energy_change(&self, u: &ScalarField, s: &ScalarField, alpha: f64) -> f64 {
        let grid = *u.grid();
        let d = grid.dim();
        let gu = gradient(u);
        let gs = gradient(s);
        let half_p = 0.5 * self.p;
        let mut total = 0.0;
        let mut corners_u = Vec::with_capacity(grid.cell_count() << d);
        for_each_corner(&gu, |_, c| corners_u.push(c.g));
        let mut i = 0;
        for_each_corner(&gs, |_, c| {
            let g = corners_u[i];
            i += 1;
            let mut dot = 0.0;
            let mut ss = 0.0;
            let mut g2 = 0.0;
            for a in 0..d {
                dot += g[a] * c.g[a];
                ss += c.g[a] * c.g[a];
                g2 += g[a] * g[a];
            }
            let x = self.regularised(g2);
            let dx = alpha * (2.0 * dot + alpha * ss);
            total += if x > 0.0 {
                x.powf(half_p) * (half_p * (dx / x).ln_1p()).exp_m1()
            } else {
                dx.max(0.0).powf(half_p)
            } / self.p;
        });
        let mut change = total * Self::corner_weight(&grid) * grid.cell_volume();
        if self.epsilon > 0.0 {
            let cross = gu.faces.dot(&gs.faces);
            let sq = gs.faces.dot(&gs.faces);
            change += self.epsilon * alpha * (cross + 0.5 * alpha * sq);
        }
        change
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian;

    #[test]
    fn constants_are_annihilated() {
        for d in 1..=2 {
            let g = Grid::new(d, 8, 1.0).unwrap();
            let u = ScalarField::constant(g, 2.0);
            let op = PLaplacian::new(4.0, 0.3, 1e-3);
            assert!(op.apply(&u).values().iter().all(|&v| v == 0.0));
            assert_eq!(op.energy(&u), 0.0);
        }
    }

    fn cubic_error(n: usize) -> f64 {
        let g = Grid::new(1, n, 2.0).unwrap();
        let u = ScalarField::from_fn(g, |x| x[0].powi(3) / 3.0);
        let au = PLaplacian::new(4.0, 0.0, 0.0).apply(&u);
        g.cells()
            .filter(|&c| g.coord(c).abs() < 1.0)
            .map(|c| (au.values()[c] + 6.0 * g.coord(c).powi(5)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn p4_flux_of_cubic_is_second_order() {
        let ratio = cubic_error(200) / cubic_error(400);
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn viscous_part_is_minus_epsilon_laplacian() {
        let g = Grid::new(2, 10, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x| (2.0 * x[0]).sin() * (x[1] + 0.3).powi(2));
        let eps = 0.37;
        let a1 = PLaplacian::new(3.0, eps, 1e-4).apply(&u);
        let a0 = PLaplacian::new(3.0, 0.0, 1e-4).apply(&u);
        let lap = laplacian(&u);
        for c in g.cells() {
            let diff = a1.values()[c] - a0.values()[c];
            assert!((diff + eps * lap.values()[c]).abs() < 1e-11);
        }
    }

    #[test]
    fn operator_is_the_gradient_of_the_energy() {
        // Directional derivative of Φ against (A u, s)_h via central differences.
        for d in 1..=2 {
            let g = Grid::new(d, 8, 1.0).unwrap();
            let u = ScalarField::from_fn(g, |x| (-(x[0] * x[0]) * 3.0).exp() + 0.2 * x[0]);
            let s = ScalarField::from_fn(g, |x| (3.0 * x[0]).cos() + x[d - 1]);
            let op = PLaplacian::new(4.0, 0.1, 1e-3);
            let eps = 1e-6;
            let shifted = |t: f64| {
                ScalarField::new(
                    g,
                    u.values().iter().zip(s.values()).map(|(a, b)| a + t * b).collect(),
                )
                .unwrap()
            };
            let fd = (op.energy(&shifted(eps)) - op.energy(&shifted(-eps))) / (2.0 * eps);
            let exact = op.apply(&u).dot(&s);
            assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1.0), "{fd} vs {exact}");
        }
    }

    #[test]
    fn energy_change_matches_direct_difference() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1]) * 2.0).exp());
        let s = ScalarField::from_fn(g, |x| x[0] * x[1]);
        let op = PLaplacian::new(3.0, 0.05, 0.0);
        let alpha = 0.3;
        let moved = ScalarField::new(
            g,
            u.values().iter().zip(s.values()).map(|(a, b)| a + alpha * b).collect(),
        )
        .unwrap();
        let direct = op.energy(&moved) - op.energy(&u);
        let stable = op.energy_change(&u, &s, alpha);
        assert!((direct - stable).abs() < 1e-12, "{direct} vs {stable}");
    }

    #[test]
    fn jacobian_matches_operator_directional_derivative() {
        for d in 1..=2 {
            let g = Grid::new(d, 6, 1.0).unwrap();
            let u = ScalarField::from_fn(g, |x| (x[0] + 0.1).powi(2) - 0.5 * x[d - 1]);
            let s = ScalarField::from_fn(g, |x| (2.0 * x[0]).sin() + 0.3);
            let op = PLaplacian::new(4.0, 0.2, 1e-2);
            let j = op.jacobian(&u);
            let mut js = vec![0.0; g.cell_count()];
            j.mul_vec(s.values(), &mut js);
            let eps = 1e-6;
            let shifted = |t: f64| {
                ScalarField::new(
                    g,
                    u.values().iter().zip(s.values()).map(|(a, b)| a + t * b).collect(),
                )
                .unwrap()
            };
            let plus = op.apply(&shifted(eps));
            let minus = op.apply(&shifted(-eps));
            for c in g.cells() {
                let fd = (plus.values()[c] - minus.values()[c]) / (2.0 * eps);
                assert!((fd - js[c]).abs() < 1e-5 * (1.0 + fd.abs()), "cell {c}: {fd} vs {}", js[c]);
            }
        }
    }
}

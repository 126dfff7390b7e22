//! Reference solutions: the Barenblatt source solution, manufactured bumps,
//! and the calibration of the support-growth constant.
//!
//! The Barenblatt solution is `B(t,x) = t^{-dβ} G(|x| t^{-β})` with
//! `G(ξ) = (C - q ξ^γ)_+^m`, `β = 1/(d(p-2)+p)`, `γ = p/(p-1)` and
//! `m = (p-1)/(p-2)`. Substituting the ansatz into the radial equation and
//! integrating once gives `|G'|^{p-2} G' = -β ξ G`, which fixes
//! `q = β^{1/(p-1)} (p-2)/p`. `C` is then set by the mass through a 1D
//! quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::SUPPORT_THRESHOLD;
use crate::grid::{Grid, ScalarField};
use crate::operator::PLaplacian;
use crate::problem::support_exponent;

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

/// Surface measure of the unit sphere in `ℝ^d`.
fn sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI,
    }
}

/// Volume of the ball of radius `r` in `ℝ^d`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    sphere_measure(dim) * r.powi(dim as i32) / dim as f64
}

fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarenblattProfile {
    p: f64,
    dim: usize,
    mass: f64,
    q: f64,
    c: f64,
}

impl BarenblattProfile {
    /// Unit-mass profile.
    pub fn new(p: f64, dim: usize) -> Result<Self> {
        Self::with_mass(p, dim, 1.0)
    }

    pub fn with_mass(p: f64, dim: usize, mass: f64) -> Result<Self> {
        if !(p > 2.0) || !p.is_finite() {
            return Err(Error::invalid("p", "must be greater than 2"));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid("d", "must be 1 or 2"));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::invalid("mass", "must be positive"));
        }
        let beta = support_exponent(p, dim);
        let q = beta.powf(1.0 / (p - 1.0)) * (p - 2.0) / p;
        let mut prof = Self {
            p,
            dim,
            mass,
            q,
            c: 1.0,
        };
        prof.c = prof.constant_for_mass(mass);
        Ok(prof)
    }

    /// Same mass normalisation with `q` multiplied by `factor`; used as a
    /// negative control for the residual oracle.
    pub fn with_q_scaled(&self, factor: f64) -> Self {
        let mut prof = Self {
            q: self.q * factor,
            ..*self
        };
        prof.c = prof.constant_for_mass(self.mass);
        prof
    }

    fn gamma(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    fn exponent_m(&self) -> f64 {
        (self.p - 1.0) / (self.p - 2.0)
    }

    /// `∫₀¹ s^{d-1} (1 - s^γ)^m ds`, via `s = 1 - τ²` to smooth the endpoint.
    fn shape_integral(&self) -> f64 {
        let (g, m, d) = (self.gamma(), self.exponent_m(), self.dim as i32);
        let f = |tau: f64| {
            let s: f64 = 1.0 - tau * tau;
            2.0 * tau * s.powi(d - 1) * (1.0 - s.powf(g)).max(0.0).powf(m)
        };
        integrate(&f, 0.0, 1.0, 1e-15)
    }

    /// Mass of `G` is `ω_d I C^{m + d/γ} q^{-d/γ}`; invert for `C`.
    fn constant_for_mass(&self, mass: f64) -> f64 {
        let d = self.dim as f64;
        let g = self.gamma();
        let k = sphere_measure(self.dim) * self.shape_integral() * self.q.powf(-d / g);
        (mass / k).powf(1.0 / (self.exponent_m() + d / g))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Profile constant `C` in `G(ξ) = (C - q ξ^γ)_+^m`.
    pub fn profile_constant(&self) -> f64 {
        self.c
    }

    pub fn beta(&self) -> f64 {
        support_exponent(self.p, self.dim)
    }

    /// Free-boundary coefficient: `r(t) = c_fb t^β`.
    pub fn free_boundary_coefficient(&self) -> f64 {
        (self.c / self.q).powf(1.0 / self.gamma())
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.free_boundary_coefficient() * t.powf(self.beta())
    }

    /// Self-similar profile in the similarity variable.
    pub fn shape(&self, xi: f64) -> f64 {
        (self.c - self.q * xi.powf(self.gamma())).max(0.0).powf(self.exponent_m())
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        let b = self.beta();
        let xi = euclid(&x[..self.dim]) * t.powf(-b);
        t.powf(-(self.dim as f64) * b) * self.shape(xi)
    }

    /// Point samples of `B(t, ·)` at cell centres.
    pub fn sample(&self, grid: Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.value(t, x))
    }

    /// Residual of the equation for this profile; see [`pde_residual`].
    pub fn pde_residual(&self, t: f64, grid: Grid) -> f64 {
        pde_residual(|s, x| self.value(s, x), self.radius(t), self.p, t, grid)
    }
}

/// Supremum of `|∂_t u + A u|` over cells in the annulus
/// `r/4 ≤ |x| ≤ 3r/4` that are at least `5h` inside the radius `r`, with
/// `A` the discrete operator (`δ = ε = 0`) and `∂_t` a central difference.
/// The origin is excluded because the gradient of the source solution is not
/// Lipschitz there.
pub fn pde_residual(
    u: impl Fn(f64, &[f64]) -> f64,
    radius: f64,
    p: f64,
    t: f64,
    grid: Grid,
) -> f64 {
    let tau = 1e-4 * t;
    let h = grid.spacing();
    let now = ScalarField::from_fn(grid, |x| u(t, x));
    let after = ScalarField::from_fn(grid, |x| u(t + tau, x));
    let before = ScalarField::from_fn(grid, |x| u(t - tau, x));
    let au = PLaplacian::new(p, 0.0, 0.0).apply(&now);
    let mut worst: f64 = 0.0;
    for c in grid.cells() {
        let r = euclid(&grid.position(c)[..grid.dim()]);
        if r < 0.25 * radius || r > 0.75 * radius || r > radius - 5.0 * h {
            continue;
        }
        let ut = (after.values()[c] - before.values()[c]) / (2.0 * tau);
        worst = worst.max((ut + au.values()[c]).abs());
    }
    worst
}

/// Unit-mass indicator of the ball of radius `c t^β`: self-similar like the
/// source solution but not a solution.
pub fn box_control(p: f64, dim: usize, c: f64) -> impl Fn(f64, &[f64]) -> f64 {
    let beta = support_exponent(p, dim);
    move |t, x| {
        let r = c * t.powf(beta);
        if euclid(&x[..dim]) <= r {
            1.0 / ball_volume(dim, r)
        } else {
            0.0
        }
    }
}

/// Unit-mass `cos²(π|x|/2r)` bump supported in the ball of radius `r`.
pub fn cosine_bump(grid: Grid, radius: f64) -> Result<ScalarField> {
    normalised(ScalarField::from_fn(grid, |x| {
        let r = euclid(x);
        if r < radius {
            (std::f64::consts::FRAC_PI_2 * r / radius).cos().powi(2)
        } else {
            0.0
        }
    }))
}

/// Unit-mass Gaussian with standard deviation `width` around `centre`.
pub fn gaussian_bump(grid: Grid, centre: &[f64], width: f64) -> Result<ScalarField> {
    normalised(ScalarField::from_fn(grid, |x| {
        let r2: f64 = x.iter().zip(centre).map(|(a, b)| (a - b) * (a - b)).sum();
        (-0.5 * r2 / (width * width)).exp()
    }))
}

/// Rescales to unit discrete mass.
pub fn normalised(u: ScalarField) -> Result<ScalarField> {
    let m = u.mass();
    if !(m > 0.0) {
        return Err(Error::ZeroMass(m));
    }
    Ok(u.scaled(1.0 / m))
}

/// Least-squares fit `y = a x^k`; returns `(k, a)`.
pub fn power_law_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("fit", "need at least two paired points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("fit", "log-log fit needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit", "abscissae are all equal"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let k = sxy / sxx;
    Ok((k, (my - k * mx).exp()))
}

/// Support radii measured over a sequence of times for one initial mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportRun {
    pub p: f64,
    pub dim: usize,
    pub mass: f64,
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
}

impl SupportRun {
    /// Samples `B(t, ·)` on `grid` at each time and records its numerical
    /// support radius.
    pub fn from_profile(prof: &BarenblattProfile, grid: Grid, times: &[f64]) -> Self {
        let radii = times
            .iter()
            .map(|&t| {
                let u = prof.sample(grid, t);
                u.support_radius(SUPPORT_THRESHOLD * u.sup_norm())
            })
            .collect();
        Self {
            p: prof.p(),
            dim: prof.dim(),
            mass: prof.mass(),
            times: times.to_vec(),
            radii,
        }
    }

    /// `radius / (t^β M^{(p-2)β})` at each time.
    pub fn normalised_radii(&self) -> Vec<f64> {
        let beta = support_exponent(self.p, self.dim);
        let mass_factor = self.mass.powf((self.p - 2.0) * beta);
        self.times
            .iter()
            .zip(&self.radii)
            .map(|(t, r)| r / (t.powf(beta) * mass_factor))
            .collect()
    }
}

/// Headroom applied on top of the largest observed normalised radius.
pub const CALIBRATION_HEADROOM: f64 = 1.2;

/// Support-growth constant: the largest normalised radius over all runs,
/// inflated by 20%.
pub fn calibrate_support_constant(runs: &[SupportRun]) -> Result<f64> {
    if runs.len() < 2 {
        return Err(Error::invalid("runs", "calibration needs at least two runs"));
    }
    let worst = runs
        .iter()
        .flat_map(|r| r.normalised_radii())
        .fold(0.0f64, f64::max);
    if !(worst > 0.0) {
        return Err(Error::invalid("runs", "no positive support radius observed"));
    }
    Ok(CALIBRATION_HEADROOM * worst)
}

/// Oracle constants persisted alongside a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    pub p: f64,
    pub d: usize,
    pub q: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    pub c_fb: f64,
    #[serde(rename = "C_support")]
    pub c_support: f64,
}

impl OracleConstants {
    /// Calibrates from two source-solution families (mass 1 and mass 2)
    /// sampled on fine grids at log-spaced times in `[0.1, 10]`.
    pub fn calibrate(p: f64, dim: usize) -> Result<Self> {
        let unit = BarenblattProfile::new(p, dim)?;
        let double = BarenblattProfile::with_mass(p, dim, 2.0)?;
        let times: Vec<f64> = (0..=12).map(|i| 10f64.powf(-1.0 + i as f64 / 6.0)).collect();
        let reach = double.radius(10.0);
        let n = if dim == 1 { 4096 } else { 512 };
        let grid = Grid::new(dim, n, 1.25 * reach)?;
        let runs = [
            SupportRun::from_profile(&unit, grid, &times),
            SupportRun::from_profile(&double, grid, &times),
        ];
        Ok(Self {
            p,
            d: dim,
            q: unit.q(),
            c1: unit.profile_constant(),
            c_fb: unit.free_boundary_coefficient(),
            c_support: calibrate_support_constant(&runs)?,
        })
    }
}

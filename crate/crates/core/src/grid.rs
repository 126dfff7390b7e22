//! Uniform cell-centred grids on `[-L, L]^d`, scalar and face fields, and the
//! discrete gradient/divergence pair.
//!
//! Cells are indexed row-major with the first axis slowest. Face values are
//! stored per axis at the *upper* face of each cell; the upper face of the
//! last cell along an axis lies on the wall and always carries zero. Walls are
//! no-flux, which makes `divergence` the exact negative adjoint of `gradient`
//! and keeps mass conservation exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum supported dimension.
pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid("d", format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 2 {
            return Err(Error::invalid("n", format!("need at least 2 cells per axis, got {n}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid("L", format!("half-width must be positive, got {half_width}")));
        }
        Ok(Self { dim, n, half_width })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of the `i`-th cell centre along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Position of `cell` along `axis`.
    pub fn axis_index(&self, cell: usize, axis: usize) -> usize {
        (cell / self.stride(axis)) % self.n
    }

    /// Cell centre; unused trailing components are zero.
    pub fn position(&self, cell: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.coord(self.axis_index(cell, a));
        }
        x
    }

    pub fn neighbor(&self, cell: usize, axis: usize, forward: bool) -> Option<usize> {
        let i = self.axis_index(cell, axis);
        let s = self.stride(axis);
        if forward {
            (i + 1 < self.n).then(|| cell + s)
        } else {
            (i > 0).then(|| cell - s)
        }
    }

    /// Index of the cell containing `x`, or `None` outside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let h = self.spacing();
        let mut cell = 0;
        for a in 0..self.dim {
            let r = (x[a] + self.half_width) / h;
            if !(r >= 0.0 && r < self.n as f64) {
                return None;
            }
            cell += (r as usize).min(self.n - 1) * self.stride(a);
        }
        Some(cell)
    }

    pub fn cells(&self) -> std::ops::Range<usize> {
        0..self.cell_count()
    }
}

/// Grid sample of a scalar function, one value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::invalid(
                "values",
                format!("expected {} values, got {}", grid.cell_count(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite value at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values produced by our own stencils.
    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_vec(grid, vec![0.0; grid.cell_count()])
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_vec(grid, vec![c; grid.cell_count()])
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid
            .cells()
            .map(|c| f(&grid.position(c)[..grid.dim()]))
            .collect();
        Self::from_vec(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_vec(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Grid-weighted inner product `h^d Σ a_i b_i`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// `(1/p) ∫ |∇u|^p` with the same quadrature the solver minimises.
    pub fn lp_gradient_energy(&self, p: f64) -> f64 {
        crate::operator::PLaplacian::new(p, 0.0, 0.0).energy(self)
    }

    /// Largest Euclidean distance from the origin among cells whose magnitude
    /// exceeds `threshold`; zero when no cell does.
    pub fn support_radius(&self, threshold: f64) -> f64 {
        let d = self.grid.dim();
        self.grid
            .cells()
            .filter(|&c| self.values[c].abs() > threshold)
            .map(|c| {
                let x = self.grid.position(c);
                x[..d].iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Maximum of `|D_axis u|` over all faces.
    pub fn gradient_sup(&self, axis: usize) -> f64 {
        gradient(self).faces.axis(axis).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_distance(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume())
    }

    pub fn l2_distance(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok((self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * self.grid.cell_volume())
        .sqrt())
    }

    /// Averages blocks of `factor^d` cells onto a grid `factor` times coarser.
    pub fn restrict(&self, factor: usize) -> Result<ScalarField> {
        let g = self.grid;
        if factor == 0 || g.n() % factor != 0 {
            return Err(Error::invalid("factor", format!("{factor} does not divide n = {}", g.n())));
        }
        let coarse = Grid::new(g.dim(), g.n() / factor, g.half_width())?;
        let mut values = vec![0.0; coarse.cell_count()];
        for c in g.cells() {
            let mut cc = 0;
            for a in 0..g.dim() {
                cc += (g.axis_index(c, a) / factor) * coarse.stride(a);
            }
            values[cc] += self.values[c];
        }
        let w = (factor as f64).powi(g.dim() as i32);
        values.iter_mut().for_each(|v| *v /= w);
        Ok(ScalarField::from_vec(coarse, values))
    }

    /// CSV with header `x[,y],value`, one row per cell in storage order.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let d = self.grid.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = ["x", "y"][..d].to_vec();
        header.push("value");
        w.write_record(&header)?;
        for c in self.grid.cells() {
            let x = self.grid.position(c);
            let mut row: Vec<String> = x[..d].iter().map(|v| v.to_string()).collect();
            row.push(self.values[c].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`ScalarField::write_csv`]. Rows must follow
    /// storage order and their coordinates must match the cell centres.
    pub fn read_csv<R: std::io::Read>(grid: Grid, input: R) -> Result<Self> {
        let d = grid.dim();
        let mut r = csv::Reader::from_reader(input);
        let tol = 1e-9 * grid.spacing();
        let mut values = Vec::with_capacity(grid.cell_count());
        for (c, rec) in r.records().enumerate() {
            let rec = rec?;
            if c >= grid.cell_count() || rec.len() != d + 1 {
                return Err(Error::invalid("values", format!("unexpected row {}", c + 1)));
            }
            let nums = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::invalid("values", format!("row {}: {e}", c + 1)))?;
            let x = grid.position(c);
            if (0..d).any(|a| (nums[a] - x[a]).abs() > tol) {
                return Err(Error::invalid("values", format!("row {} is not at cell centre {:?}", c + 1, &x[..d])));
            }
            values.push(nums[d]);
        }
        ScalarField::new(grid, values)
    }
}

/// Values on cell faces, grouped by the axis normal to the face.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    grid: Grid,
    axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            axes: vec![vec![0.0; grid.cell_count()]; grid.dim()],
        }
    }

    /// Builds a face field from `f(axis, cell)`, evaluated at the upper face
    /// of each cell. Wall faces are forced to zero.
    pub fn from_fn(grid: Grid, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for a in 0..grid.dim() {
            for c in grid.cells() {
                if grid.neighbor(c, a, true).is_some() {
                    out.axes[a][c] = f(a, c);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Face values normal to `axis`, indexed by the cell below the face.
    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn axis_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.axes[axis]
    }

    /// Centre of the upper face of `cell` normal to `axis`.
    pub fn face_position(&self, axis: usize, cell: usize) -> [f64; MAX_DIM] {
        let mut x = self.grid.position(cell);
        x[axis] += 0.5 * self.grid.spacing();
        x
    }

    /// `h^d Σ_faces F G` over interior faces.
    pub fn dot(&self, other: &FaceField) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for a in 0..g.dim() {
            for c in g.cells() {
                if g.neighbor(c, a, true).is_some() {
                    s += self.axes[a][c] * other.axes[a][c];
                }
            }
        }
        s * g.cell_volume()
    }
}

/// Discrete gradient: face differences plus their cell-centred averages.
#[derive(Clone, Debug)]
pub struct GradientField {
    pub faces: FaceField,
    cells: Vec<f64>,
}

impl GradientField {
    pub fn grid(&self) -> &Grid {
        self.faces.grid()
    }

    /// Cell-centred gradient vector (length `d`).
    pub fn at(&self, cell: usize) -> &[f64] {
        let d = self.grid().dim();
        &self.cells[cell * d..(cell + 1) * d]
    }

    /// Cell-centred components, `d` per cell.
    pub fn cell_components(&self) -> &[f64] {
        &self.cells
    }

    /// `|∇u|²` at each cell centre.
    pub fn squared_norms(&self) -> Vec<f64> {
        self.cells
            .chunks(self.grid().dim())
            .map(|g| g.iter().map(|v| v * v).sum())
            .collect()
    }
}

/// Forward differences on interior faces; cell vectors average the two faces
/// adjacent along each axis (wall faces count as zero).
pub fn gradient(field: &ScalarField) -> GradientField {
    let g = *field.grid();
    let h = g.spacing();
    let u = field.values();
    let faces = FaceField::from_fn(g, |a, c| (u[c + g.stride(a)] - u[c]) / h);
    let d = g.dim();
    let mut cells = vec![0.0; g.cell_count() * d];
    for c in g.cells() {
        for a in 0..d {
            let up = faces.axes[a][c];
            let down = g.neighbor(c, a, false).map_or(0.0, |b| faces.axes[a][b]);
            cells[c * d + a] = 0.5 * (up + down);
        }
    }
    GradientField { faces, cells }
}

/// `(F_{i+1/2} - F_{i-1/2}) / h` summed over axes; wall faces are read as zero
/// whatever they hold.
pub fn divergence(flux: &FaceField) -> ScalarField {
    let g = *flux.grid();
    let h = g.spacing();
    let mut out = vec![0.0; g.cell_count()];
    for a in 0..g.dim() {
        let f = &flux.axes[a];
        for c in g.cells() {
            let up = if g.neighbor(c, a, true).is_some() { f[c] } else { 0.0 };
            let down = g.neighbor(c, a, false).map_or(0.0, |b| f[b]);
            out[c] += (up - down) / h;
        }
    }
    ScalarField::from_vec(g, out)
}

/// Five-point (three-point in 1D) Laplacian with no-flux walls.
pub fn laplacian(field: &ScalarField) -> ScalarField {
    divergence(&gradient(field).faces)
}

#[cfg(test)]
mod tests {
    #[test]
    fn csv_round_trip_is_exact() {
        for d in 1..=2 {
            let g = Grid::new(d, 8, 1.3).unwrap();
            let u = ScalarField::from_fn(g, |x| x.iter().map(|v| (3.0 * v).sin() / 7.0).sum());
            let mut buf = Vec::new();
            u.write_csv(&mut buf).unwrap();
            let back = ScalarField::read_csv(g, buf.as_slice()).unwrap();
            assert_eq!(back, u);
            let wrong = Grid::new(d, 8, 1.4).unwrap();
            assert!(ScalarField::read_csv(wrong, buf.as_slice()).is_err());
        }
    }

    use super::*;
    use proptest::prelude::*;

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new(1, n, l).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Grid::new(3, 8, 1.0).is_err());
        assert!(Grid::new(1, 1, 1.0).is_err());
        assert!(Grid::new(2, 8, 0.0).is_err());
    }

    #[test]
    fn centres_and_strides() {
        let g = Grid::new(2, 4, 2.0).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.coord(0), -1.5);
        assert_eq!(g.stride(0), 4);
        assert_eq!(g.stride(1), 1);
        assert_eq!(g.position(6), [-0.5, 0.5]);
        assert_eq!(g.locate(&[-0.5, 0.5]), Some(6));
        assert_eq!(g.locate(&[2.5, 0.0]), None);
    }

    #[test]
    fn constant_has_zero_gradient_everywhere() {
        for d in 1..=2 {
            let g = Grid::new(d, 10, 1.0).unwrap();
            let grad = gradient(&ScalarField::constant(g, 3.7));
            assert!(grad.cell_components().iter().all(|&v| v == 0.0));
            for a in 0..d {
                assert!(grad.faces.axis(a).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn affine_face_gradient_is_exact() {
        let g = grid1(16, 2.0);
        let u = ScalarField::from_fn(g, |x| x[0]);
        let grad = gradient(&u);
        for c in 0..15 {
            assert!((grad.faces.axis(0)[c] - 1.0).abs() < 1e-14);
        }
        assert_eq!(grad.faces.axis(0)[15], 0.0);
    }

    fn sin_gradient_error(n: usize) -> f64 {
        let l = std::f64::consts::PI;
        let g = grid1(n, l);
        let grad = gradient(&ScalarField::from_fn(g, |x| x[0].sin()));
        g.cells()
            .filter(|&c| g.coord(c).abs() < l / 2.0)
            .map(|c| (grad.at(c)[0] - g.coord(c).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_is_second_order_in_the_interior() {
        let ratio = sin_gradient_error(256) / sin_gradient_error(512);
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn zero_flux_has_zero_divergence() {
        let g = Grid::new(2, 6, 1.0).unwrap();
        assert!(divergence(&FaceField::zeros(g)).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indicator_mass_counts_cells() {
        let g = grid1(10, 1.0);
        let mut v = vec![0.0; 10];
        v[2] = 1.0;
        v[3] = 1.0;
        v[7] = 1.0;
        let f = ScalarField::new(g, v).unwrap();
        assert!((f.mass() - 3.0 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn support_radius_cases() {
        let g = grid1(20, 2.0);
        assert_eq!(ScalarField::zeros(g).support_radius(1e-8), 0.0);
        let mut v = vec![0.0; 20];
        // centre of cell 15 is -2 + 15.5 * 0.2 = 1.1
        v[15] = 1.0;
        let f = ScalarField::new(g, v).unwrap();
        assert!((f.support_radius(0.5) - 1.1).abs() < 1e-12);
        assert_eq!(f.support_radius(2.0), 0.0);
    }

    #[test]
    fn new_rejects_non_finite() {
        let g = grid1(4, 1.0);
        assert!(ScalarField::new(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(ScalarField::new(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn restrict_preserves_mass() {
        let g = Grid::new(2, 8, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] * 3.0).sin() + x[1] * x[1]);
        let c = u.restrict(2).unwrap();
        assert_eq!(c.grid().n(), 4);
        assert!((c.mass() - u.mass()).abs() < 1e-14);
    }

    fn arb_field_and_flux(d: usize) -> impl Strategy<Value = (ScalarField, FaceField)> {
        let g = Grid::new(d, 6, 1.5).unwrap();
        let nc = g.cell_count();
        (
            proptest::collection::vec(-10.0f64..10.0, nc),
            proptest::collection::vec(-10.0f64..10.0, nc * d),
        )
            .prop_map(move |(u, f)| {
                let flux = FaceField::from_fn(g, |a, c| f[a * nc + c]);
                (ScalarField::new(g, u).unwrap(), flux)
            })
    }

    proptest! {
        #[test]
        fn summation_by_parts_1d((u, f) in arb_field_and_flux(1)) {
            let lhs = gradient(&u).faces.dot(&f);
            let rhs = -u.dot(&divergence(&f));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn summation_by_parts_2d((u, f) in arb_field_and_flux(2)) {
            let lhs = gradient(&u).faces.dot(&f);
            let rhs = -u.dot(&divergence(&f));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn divergence_integrates_to_zero((_u, f) in arb_field_and_flux(2)) {
            prop_assert!(divergence(&f).mass().abs() < 1e-11);
        }

        #[test]
        fn gradient_is_linear((u, f) in arb_field_and_flux(2), a in -3.0f64..3.0) {
            let g = *u.grid();
            let w = ScalarField::new(g, f.axis(0).to_vec()).unwrap();
            let combo = ScalarField::new(
                g,
                u.values().iter().zip(w.values()).map(|(x, y)| x + a * y).collect(),
            ).unwrap();
            let gc = gradient(&combo);
            let (gu, gw) = (gradient(&u), gradient(&w));
            for ax in 0..2 {
                for c in g.cells() {
                    let expect = gu.faces.axis(ax)[c] + a * gw.faces.axis(ax)[c];
                    prop_assert!((gc.faces.axis(ax)[c] - expect).abs() < 1e-9);
                }
            }
        }
    }
}

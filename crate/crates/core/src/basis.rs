//! Clamped B-spline bases on dose and time grids, their tensor product,
//! and the first-order random-walk penalty matrices used as the prior
//! precision of leaf spline coefficients.
//!
//! Two-dimensional coefficient vectors and design rows are stacked
//! dose-major: index `a * n_time + b` addresses dose basis `a`, time basis
//! `b`. Every other module relies on this ordering.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default properisation constant added to the corners of the penalty.
pub const DEFAULT_ETA: f64 = 1e-6;

/// A strictly increasing grid of at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    values: Vec<f64>,
}

impl Grid1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "a grid needs at least 2 points, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid values must be strictly increasing"));
        }
        Ok(Self { values })
    }

    /// Grid `0, 1, ..., n - 1`.
    pub fn index(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Fractional grid position of `x`, interpolating linearly between
    /// neighbouring grid points. `None` outside `[min, max]`.
    pub fn position(&self, x: f64) -> Option<f64> {
        if !(x >= self.min() && x <= self.max()) {
            return None;
        }
        let upper = self.values.partition_point(|&v| v < x);
        if upper == 0 {
            return Some(0.0);
        }
        let (lo, hi) = (self.values[upper - 1], self.values[upper]);
        Some((upper - 1) as f64 + (x - lo) / (hi - lo))
    }
}

/// Coordinates on which a basis is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateScale {
    /// Grid positions `0..n`; uniform regardless of the raw spacing.
    Index,
    /// The raw grid values.
    Raw,
}

/// Where interior knots go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnotPlacement {
    /// One knot at every interior grid point.
    EveryGridPoint,
    /// `m` equispaced interior knots.
    Uniform(usize),
}

/// Full clamped knot vector: `order` copies of each boundary plus the
/// interior knots.
fn clamped_knots(lo: f64, hi: f64, interior: &[f64], order: usize) -> Vec<f64> {
    let mut knots = Vec::with_capacity(interior.len() + 2 * order);
    knots.extend(std::iter::repeat_n(lo, order));
    knots.extend_from_slice(interior);
    knots.extend(std::iter::repeat_n(hi, order));
    knots
}

/// Values of all `knots.len() - order` B-splines of the given order at `x`
/// (Cox-de Boor triangle). The right boundary belongs to the last span.
pub fn bspline_values(x: f64, knots: &[f64], order: usize) -> Vec<f64> {
    let n_basis = knots.len() - order;
    let degree = order - 1;
    let mut out = vec![0.0; n_basis];

    let span = if x >= knots[n_basis] {
        n_basis - 1
    } else {
        // last s with knots[s] <= x, clamped into the valid range
        let s = knots.partition_point(|&k| k <= x).saturating_sub(1);
        s.clamp(degree, n_basis - 1)
    };

    let mut funs = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    funs[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { funs[r] / denom };
            funs[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        funs[j] = saved;
    }
    for (r, f) in funs.into_iter().enumerate() {
        out[span - degree + r] = f;
    }
    out
}

/// Clamped B-spline basis of the given order evaluated on `grid`, one row
/// per grid point and `interior_knots.len() + order` columns.
pub fn build_basis(grid: &Grid1D, interior_knots: &[f64], order: usize) -> Result<DMatrix<f64>> {
    if order == 0 {
        return Err(Error::invalid("spline order must be at least 1"));
    }
    let (lo, hi) = (grid.min(), grid.max());
    if let Some(k) = interior_knots.iter().find(|&&k| !(k > lo && k < hi)) {
        return Err(Error::invalid(format!(
            "interior knot {k} is outside the open domain ({lo}, {hi})"
        )));
    }
    if interior_knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("interior knots must be strictly increasing"));
    }
    let knots = clamped_knots(lo, hi, interior_knots, order);
    let n_basis = interior_knots.len() + order;
    let mut basis = DMatrix::zeros(grid.len(), n_basis);
    for (i, &x) in grid.values().iter().enumerate() {
        for (j, v) in bspline_values(x, &knots, order).into_iter().enumerate() {
            basis[(i, j)] = v;
        }
    }
    Ok(basis)
}

/// First-order random-walk penalty with `1 + eta` in both corners.
pub fn penalty_1d(size: usize, eta: f64) -> Result<DMatrix<f64>> {
    if size < 2 {
        return Err(Error::invalid(format!("penalty size must be >= 2, got {size}")));
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid("eta must be nonnegative"));
    }
    let mut k = DMatrix::zeros(size, size);
    for i in 0..size {
        k[(i, i)] = if i == 0 || i == size - 1 { 1.0 + eta } else { 2.0 };
        if i + 1 < size {
            k[(i, i + 1)] = -1.0;
            k[(i + 1, i)] = -1.0;
        }
    }
    Ok(k)
}

/// Four-nearest-neighbour random-walk penalty on a `size_d x size_t`
/// coefficient lattice (dose-major), with `eta` added at the four corners.
pub fn penalty_2d(size_d: usize, size_t: usize, eta: f64) -> Result<DMatrix<f64>> {
    if size_d < 2 || size_t < 2 {
        return Err(Error::invalid(format!(
            "lattice must be at least 2x2, got {size_d}x{size_t}"
        )));
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid("eta must be nonnegative"));
    }
    let side = size_d * size_t;
    let idx = |a: usize, b: usize| a * size_t + b;
    let mut k = DMatrix::zeros(side, side);
    for a in 0..size_d {
        for b in 0..size_t {
            let u = idx(a, b);
            let mut neighbours = Vec::with_capacity(4);
            if a > 0 {
                neighbours.push(idx(a - 1, b));
            }
            if a + 1 < size_d {
                neighbours.push(idx(a + 1, b));
            }
            if b > 0 {
                neighbours.push(idx(a, b - 1));
            }
            if b + 1 < size_t {
                neighbours.push(idx(a, b + 1));
            }
            k[(u, u)] = neighbours.len() as f64;
            for v in neighbours {
                k[(u, v)] = -1.0;
            }
        }
    }
    for (a, b) in [(0, 0), (0, size_t - 1), (size_d - 1, 0), (size_d - 1, size_t - 1)] {
        k[(idx(a, b), idx(a, b))] += eta;
    }
    Ok(k)
}

/// A basis along one axis together with the grid it was built on.
#[derive(Debug, Clone)]
pub struct AxisBasis {
    grid: Grid1D,
    scale: CoordinateScale,
    order: usize,
    interior_knots: Vec<f64>,
    knots: Vec<f64>,
    basis: DMatrix<f64>,
}

impl AxisBasis {
    pub fn new(
        grid: Grid1D,
        scale: CoordinateScale,
        placement: KnotPlacement,
        order: usize,
    ) -> Result<Self> {
        let coords = match scale {
            CoordinateScale::Index => Grid1D::index(grid.len())?,
            CoordinateScale::Raw => grid.clone(),
        };
        let interior_knots: Vec<f64> = match placement {
            KnotPlacement::EveryGridPoint => coords.values()[1..coords.len() - 1].to_vec(),
            KnotPlacement::Uniform(m) => {
                let (lo, hi) = (coords.min(), coords.max());
                (1..=m)
                    .map(|i| lo + (hi - lo) * i as f64 / (m + 1) as f64)
                    .collect()
            }
        };
        let basis = build_basis(&coords, &interior_knots, order)?;
        let knots = clamped_knots(coords.min(), coords.max(), &interior_knots, order);
        Ok(Self {
            grid,
            scale,
            order,
            interior_knots,
            knots,
            basis,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn scale(&self) -> CoordinateScale {
        self.scale
    }

    /// Interior knots in basis coordinates.
    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    /// Basis evaluated on the grid (`n_grid x n_basis`).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn n_basis(&self) -> usize {
        self.basis.ncols()
    }

    /// Basis coordinate of a raw axis value, or an error outside the grid.
    pub fn coordinate(&self, x: f64) -> Result<f64> {
        let out_of_range = || {
            Error::invalid(format!(
                "value {x} is outside the grid range [{}, {}]",
                self.grid.min(),
                self.grid.max()
            ))
        };
        match self.scale {
            CoordinateScale::Index => self.grid.position(x).ok_or_else(out_of_range),
            CoordinateScale::Raw => {
                if x >= self.grid.min() && x <= self.grid.max() {
                    Ok(x)
                } else {
                    Err(out_of_range())
                }
            }
        }
    }

    /// Basis row at an arbitrary raw axis value inside the grid range.
    pub fn row_at(&self, x: f64) -> Result<Vec<f64>> {
        let c = self.coordinate(x)?;
        Ok(bspline_values(c, &self.knots, self.order))
    }
}

/// Spline settings for one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisSettings {
    pub order: usize,
    pub knots: KnotPlacement,
}

impl Default for AxisSettings {
    fn default() -> Self {
        Self {
            order: 4,
            knots: KnotPlacement::EveryGridPoint,
        }
    }
}

/// Everything needed to build a [`SplineSystem`] from grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSettings {
    pub dose: AxisSettings,
    pub time: AxisSettings,
    pub scale: CoordinateScale,
    pub eta: f64,
}

impl Default for SplineSettings {
    fn default() -> Self {
        Self {
            dose: AxisSettings::default(),
            time: AxisSettings::default(),
            scale: CoordinateScale::Index,
            eta: DEFAULT_ETA,
        }
    }
}

/// Basis matrices and coefficient penalty of the leaf response model,
/// either a dose curve or a dose x time surface.
#[derive(Debug, Clone)]
pub struct SplineSystem {
    dose: AxisBasis,
    time: Option<AxisBasis>,
    penalty: DMatrix<f64>,
    eta: f64,
}

impl SplineSystem {
    pub fn new(settings: &SplineSettings, dose: Grid1D, time: Option<Grid1D>) -> Result<Self> {
        if !(settings.eta > 0.0) {
            return Err(Error::invalid("eta must be positive"));
        }
        let dose = AxisBasis::new(dose, settings.scale, settings.dose.knots, settings.dose.order)?;
        let time = time
            .map(|g| AxisBasis::new(g, settings.scale, settings.time.knots, settings.time.order))
            .transpose()?;
        let penalty = match &time {
            None => penalty_1d(dose.n_basis(), settings.eta)?,
            Some(t) => penalty_2d(dose.n_basis(), t.n_basis(), settings.eta)?,
        };
        Ok(Self {
            dose,
            time,
            penalty,
            eta: settings.eta,
        })
    }

    pub fn dose(&self) -> &AxisBasis {
        &self.dose
    }

    pub fn time(&self) -> Option<&AxisBasis> {
        self.time.as_ref()
    }

    pub fn is_2d(&self) -> bool {
        self.time.is_some()
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Number of spline coefficients per leaf.
    pub fn n_coeffs(&self) -> usize {
        self.dose.n_basis() * self.time.as_ref().map_or(1, |t| t.n_basis())
    }

    pub fn n_dose(&self) -> usize {
        self.dose.grid().len()
    }

    /// Number of time points; 1 for dose-only systems.
    pub fn n_time(&self) -> usize {
        self.time.as_ref().map_or(1, |t| t.grid().len())
    }

    /// Number of (dose, time) cells of one response profile.
    pub fn n_cells(&self) -> usize {
        self.n_dose() * self.n_time()
    }

    /// Design row at an arbitrary (dose, time) inside the grids. `time`
    /// is ignored for dose-only systems.
    pub fn design_row(&self, dose: f64, time: Option<f64>) -> Result<Vec<f64>> {
        let rd = self.dose.row_at(dose)?;
        match &self.time {
            None => Ok(rd),
            Some(t) => {
                let time = time.ok_or_else(|| Error::invalid("a time value is required"))?;
                let rt = t.row_at(time)?;
                Ok(row_kron(&rd, &rt))
            }
        }
    }
}

fn row_kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x * y))
        .collect()
}

/// Observation design matrix of one response profile: the dose basis in
/// 1D, the row-wise Kronecker product of dose and time bases (rows and
/// columns dose-major) in 2D.
pub fn design_matrix(system: &SplineSystem) -> DMatrix<f64> {
    let bd = system.dose.matrix();
    let Some(time) = &system.time else {
        return bd.clone();
    };
    let bt = time.matrix();
    let (nd, nt) = (bd.nrows(), bt.nrows());
    let (md, mt) = (bd.ncols(), bt.ncols());
    let mut out = DMatrix::zeros(nd * nt, md * mt);
    for a in 0..nd {
        for b in 0..nt {
            let row = a * nt + b;
            for l in 0..md {
                let v = bd[(a, l)];
                if v == 0.0 {
                    continue;
                }
                for m in 0..mt {
                    out[(row, l * mt + m)] = v * bt[(b, m)];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dose_grid() -> Grid1D {
        Grid1D::new(vec![
            0.0, 0.39, 0.78, 1.56, 3.125, 6.25, 12.5, 25.0, 50.0, 100.0, 200.0,
        ])
        .unwrap()
    }

    #[test]
    fn cubic_basis_on_eleven_doses_has_thirteen_functions() {
        let g = dose_grid();
        let knots = g.values()[1..10].to_vec();
        let b = build_basis(&g, &knots, 4).unwrap();
        assert_eq!(b.shape(), (11, 13));
        let sys = SplineSystem::new(&SplineSettings::default(), g, None).unwrap();
        assert_eq!(sys.n_coeffs(), 13);
    }

    #[test]
    fn order_one_is_interval_indicator() {
        let g = Grid1D::new(vec![0.0, 1.0, 2.5, 4.0, 7.0]).unwrap();
        let b = build_basis(&g, &[1.0, 2.5, 4.0], 1).unwrap();
        assert_eq!(b.shape(), (5, 4));
        let expect = [0, 1, 2, 3, 3];
        for (i, &col) in expect.iter().enumerate() {
            for j in 0..4 {
                assert_eq!(b[(i, j)], if j == col { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn knots_outside_domain_rejected() {
        let g = Grid1D::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(build_basis(&g, &[2.0], 4).is_err());
        assert!(build_basis(&g, &[-1.0], 2).is_err());
        assert!(Grid1D::new(vec![1.0]).is_err());
        assert!(Grid1D::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn cubic_basis_matches_cox_de_boor_recursion() {
        // textbook recursion evaluated independently
        fn naive(i: usize, k: usize, x: f64, t: &[f64], last: bool) -> f64 {
            if k == 1 {
                let inside = t[i] <= x && x < t[i + 1];
                let right_end = last && x == t[i + 1] && t[i] < t[i + 1] && t[i + 1] == t[t.len() - 1];
                return if inside || right_end { 1.0 } else { 0.0 };
            }
            let mut v = 0.0;
            let d1 = t[i + k - 1] - t[i];
            if d1 > 0.0 {
                v += (x - t[i]) / d1 * naive(i, k - 1, x, t, last);
            }
            let d2 = t[i + k] - t[i + 1];
            if d2 > 0.0 {
                v += (t[i + k] - x) / d2 * naive(i + 1, k - 1, x, t, last);
            }
            v
        }
        let interior = [0.7, 1.9, 2.2, 3.5];
        let knots = clamped_knots(0.0, 4.0, &interior, 4);
        for &x in &[0.0, 0.3, 0.7, 1.0, 2.0, 2.2, 3.9, 4.0] {
            let fast = bspline_values(x, &knots, 4);
            for (i, f) in fast.iter().enumerate() {
                let slow = naive(i, 4, x, &knots, x == 4.0);
                assert!((f - slow).abs() < 1e-13, "x={x} i={i}: {f} vs {slow}");
            }
        }
    }

    #[test]
    fn penalty_1d_small_cases() {
        let k = penalty_1d(3, 0.0).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(k, expect);

        let k = penalty_1d(3, 1e-6).unwrap();
        assert_eq!(k[(0, 0)], 1.0 + 1e-6);
        assert_eq!(k[(2, 2)], 1.0 + 1e-6);
        let eig = k.symmetric_eigen().eigenvalues;
        assert!(eig.min() > 0.0);

        let k = penalty_1d(5, 0.0).unwrap();
        for i in 0..5 {
            assert_eq!(k.row(i).sum(), 0.0);
        }
        assert!(penalty_1d(1, 0.1).is_err());
    }

    #[test]
    fn penalty_2d_small_cases() {
        // 2x2 lattice: every node is a corner with two neighbours
        let k = penalty_2d(2, 2, 0.0).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                2., -1., -1., 0., //
                -1., 2., 0., -1., //
                -1., 0., 2., -1., //
                0., -1., -1., 2.,
            ],
        );
        assert_eq!(k, expect);

        let k = penalty_2d(3, 3, 0.0).unwrap();
        assert_eq!(k[(4, 4)], 4.0);
        assert_eq!(k[(1, 1)], 3.0);
        assert_eq!(k[(0, 0)], 2.0);
        for i in 0..9 {
            assert_eq!(k.row(i).sum(), 0.0);
        }
        assert!(penalty_2d(1, 3, 0.0).is_err());
    }

    #[test]
    fn penalties_have_one_null_direction_without_eta() {
        for k in [penalty_1d(6, 0.0).unwrap(), penalty_2d(3, 4, 0.0).unwrap()] {
            let eig = k.clone().symmetric_eigen().eigenvalues;
            let zeros = eig.iter().filter(|v| v.abs() < 1e-10).count();
            assert_eq!(zeros, 1);
        }
        for k in [penalty_1d(6, 1e-3).unwrap(), penalty_2d(3, 4, 1e-3).unwrap()] {
            assert!(k.symmetric_eigen().eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn tensor_design_with_indicator_bases() {
        let settings = SplineSettings {
            dose: AxisSettings { order: 1, knots: KnotPlacement::EveryGridPoint },
            time: AxisSettings { order: 1, knots: KnotPlacement::EveryGridPoint },
            ..SplineSettings::default()
        };
        // two grid points per axis and no interior knots: one indicator column each
        let sys = SplineSystem::new(
            &settings,
            Grid1D::new(vec![0.0, 1.0]).unwrap(),
            Some(Grid1D::new(vec![1.0, 2.0]).unwrap()),
        );
        // a single basis function per axis cannot carry a 2x2 penalty
        assert!(sys.is_err());

        let settings = SplineSettings {
            dose: AxisSettings { order: 1, knots: KnotPlacement::Uniform(1) },
            time: AxisSettings { order: 1, knots: KnotPlacement::Uniform(1) },
            ..SplineSettings::default()
        };
        let sys = SplineSystem::new(
            &settings,
            Grid1D::new(vec![0.0, 1.0]).unwrap(),
            Some(Grid1D::new(vec![1.0, 2.0]).unwrap()),
        )
        .unwrap();
        let d = design_matrix(&sys);
        // each row is the indicator of (dose cell, time cell), dose-major
        assert_eq!(d, DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn one_dimensional_design_is_the_dose_basis() {
        let sys = SplineSystem::new(&SplineSettings::default(), dose_grid(), None).unwrap();
        assert_eq!(&design_matrix(&sys), sys.dose().matrix());
    }

    #[test]
    fn design_row_matches_design_matrix_on_grid() {
        let sys = SplineSystem::new(
            &SplineSettings::default(),
            dose_grid(),
            Some(Grid1D::new((1..=6).map(f64::from).collect()).unwrap()),
        )
        .unwrap();
        let d = design_matrix(&sys);
        assert_eq!(d.shape(), (66, 104));
        for (a, &dose) in dose_grid().values().iter().enumerate() {
            for b in 0..6 {
                let row = sys.design_row(dose, Some((b + 1) as f64)).unwrap();
                for (j, v) in row.iter().enumerate() {
                    assert!((v - d[(a * 6 + b, j)]).abs() < 1e-14);
                }
            }
        }
        assert!(sys.design_row(250.0, Some(1.0)).is_err());
        assert!(sys.design_row(1.0, Some(0.5)).is_err());
    }

    proptest! {
        #[test]
        fn cubic_rows_are_partitions_of_unity(mut pts in proptest::collection::vec(0.0f64..100.0, 8)) {
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            pts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            prop_assume!(pts.len() >= 3);
            let g = Grid1D::new(pts.clone()).unwrap();
            let knots = pts[1..pts.len() - 1].to_vec();
            let b = build_basis(&g, &knots, 4).unwrap();
            for i in 0..b.nrows() {
                prop_assert!((b.row(i).sum() - 1.0).abs() < 1e-12);
                prop_assert!(b.row(i).iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn tensor_rows_are_partitions_of_unity(nd in 3usize..8, nt in 3usize..6, raw in proptest::bool::ANY) {
            let settings = SplineSettings {
                scale: if raw { CoordinateScale::Raw } else { CoordinateScale::Index },
                ..SplineSettings::default()
            };
            let dg = Grid1D::new((0..nd).map(|i| (i as f64).powf(1.7)).collect()).unwrap();
            let tg = Grid1D::new((0..nt).map(|i| 1.0 + i as f64).collect()).unwrap();
            let sys = SplineSystem::new(&settings, dg, Some(tg)).unwrap();
            let d = design_matrix(&sys);
            for i in 0..d.nrows() {
                prop_assert!((d.row(i).sum() - 1.0).abs() < 1e-12);
            }
            // constant coefficients give a constant surface
            let beta = nalgebra::DVector::from_element(d.ncols(), 2.5);
            let fitted = &d * beta;
            prop_assert!(fitted.iter().all(|v| (v - 2.5).abs() < 1e-12));
        }

        #[test]
        fn penalty_quadratic_form_is_sum_of_squared_differences(beta in proptest::collection::vec(-5.0f64..5.0, 2..12)) {
            let k = penalty_1d(beta.len(), 0.0).unwrap();
            let b = nalgebra::DVector::from_vec(beta.clone());
            let quad = (b.transpose() * &k * &b)[(0, 0)];
            let direct: f64 = beta.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            prop_assert!((quad - direct).abs() < 1e-9 * (1.0 + direct));
        }
    }
}

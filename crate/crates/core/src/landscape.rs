//! The builtin landscape `f(x, y) = sin(πx)·sin(2πx)·cos(πy)·cos(2πy)`, the
//! rectangular study region, and the partition of that region into cells
//! bounded by the zero set of the field.
//!
//! The builtin field is separable, `f = g(x)·h(y)`, so its zero set is a
//! union of axis-parallel lines and every cell of the resulting grid has a
//! constant sign. Cells with negative sign are wells; they come in exactly
//! two depths, `4/(3√3)` and `(4/(3√3))·(2/(3√6))`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use thiserror::Error;

use crate::exprfield::DomainError;

/// Depth of the deep wells, `max |g| · max |h| = 4/(3√3)`.
pub const DEEP_WELL_DEPTH: f64 = 0.769_800_358_919_501;

/// Depth of the shallow wells, `4/(3√3) · 2/(3√6)`.
pub const SHALLOW_WELL_DEPTH: f64 = 0.209_513_120_351_569_64;

/// Zero lines closer than this to a region edge (but not on it) would create
/// a sliver cell.
pub const DEGENERATE_LINE_TOL: f64 = 1e-12;

/// A position in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, rhs: Point2) -> Point2 {
        Point2::new(self * rhs.x, self * rhs.y)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("region bounds must be finite")]
    NonFinite,
    #[error("empty x range: x_min = {0} must be below x_max = {1}")]
    EmptyX(f64, f64),
    #[error("empty y range: y_min = {0} must be below y_max = {1}")]
    EmptyY(f64, f64),
}

/// Axis-aligned rectangle `[x_min, x_max) × [y_min, y_max)`.
///
/// Membership is half-open so that the cells of a [`CellGrid`] tile the
/// region without overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.25,
            y_max: 1.25,
        }
    }
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, RegionError> {
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(RegionError::NonFinite);
        }
        if x_min >= x_max {
            return Err(RegionError::EmptyX(x_min, x_max));
        }
        if y_min >= y_max {
            return Err(RegionError::EmptyY(y_min, y_max));
        }
        Ok(Region {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x < self.x_max && p.y >= self.y_min && p.y < self.y_max
    }

    /// Maps a pair of unit-interval variates onto the region.
    pub fn lerp(&self, u: f64, v: f64) -> Point2 {
        Point2::new(
            self.x_min + u * self.width(),
            self.y_min + v * self.height(),
        )
    }

    pub fn center(&self) -> Point2 {
        self.lerp(0.5, 0.5)
    }
}

/// Value and gradient of a field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub grad: Point2,
}

/// A 2D landscape with an exact gradient.
pub trait ScalarField: Sync {
    fn sample(&self, p: Point2) -> Result<FieldSample, DomainError>;

    fn value(&self, p: Point2) -> Result<f64, DomainError> {
        self.sample(p).map(|s| s.value)
    }
}

/// `f(x, y) = sin(πx)·sin(2πx)·cos(πy)·cos(2πy)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuiltinField;

impl BuiltinField {
    /// The `x` factor `g(x) = sin(πx)·sin(2πx)`.
    pub fn x_factor(x: f64) -> f64 {
        (PI * x).sin() * (2.0 * PI * x).sin()
    }

    pub fn x_factor_deriv(x: f64) -> f64 {
        let (s1, c1) = (PI * x).sin_cos();
        let (s2, c2) = (2.0 * PI * x).sin_cos();
        PI * c1 * s2 + 2.0 * PI * s1 * c2
    }

    /// The `y` factor `h(y) = cos(πy)·cos(2πy)`.
    pub fn y_factor(y: f64) -> f64 {
        (PI * y).cos() * (2.0 * PI * y).cos()
    }

    pub fn y_factor_deriv(y: f64) -> f64 {
        let (s1, c1) = (PI * y).sin_cos();
        let (s2, c2) = (2.0 * PI * y).sin_cos();
        -PI * s1 * c2 - 2.0 * PI * c1 * s2
    }

    pub fn eval(&self, p: Point2) -> f64 {
        Self::x_factor(p.x) * Self::y_factor(p.y)
    }

    pub fn grad(&self, p: Point2) -> Point2 {
        let g = Self::x_factor(p.x);
        let h = Self::y_factor(p.y);
        Point2::new(Self::x_factor_deriv(p.x) * h, g * Self::y_factor_deriv(p.y))
    }

    /// Zero lines of `g` in `[lo, hi]`: every multiple of 1/2.
    pub fn x_zero_lines(lo: f64, hi: f64) -> Vec<f64> {
        let mut lines = lattice_points(0.0, 0.5, lo, hi);
        sort_dedup(&mut lines);
        lines
    }

    /// Zero lines of `h` in `[lo, hi]`: `1/2 + k` (from `cos πy`) and
    /// `1/4 + k/2` (from `cos 2πy`).
    pub fn y_zero_lines(lo: f64, hi: f64) -> Vec<f64> {
        let mut lines = lattice_points(0.5, 1.0, lo, hi);
        lines.extend(lattice_points(0.25, 0.5, lo, hi));
        sort_dedup(&mut lines);
        lines
    }

    /// Exact `(min, max)` of `g` over `[lo, hi]`.
    pub fn x_factor_range(lo: f64, hi: f64) -> (f64, f64) {
        // g = 2 sin²(πx) cos(πx); g' = 0 where sin(πx) = 0 or cos²(πx) = 1/3.
        let a = (1.0 / 3f64.sqrt()).acos() / PI;
        let offsets = [0.0, 1.0, a, -a, 1.0 - a, a - 1.0];
        factor_range(Self::x_factor, Self::is_x_zero, &offsets, lo, hi)
    }

    fn is_x_zero(x: f64) -> bool {
        (2.0 * x).fract() == 0.0
    }

    fn is_y_zero(y: f64) -> bool {
        (y - 0.5).fract() == 0.0 || (2.0 * (y - 0.25)).fract() == 0.0
    }

    /// Exact `(min, max)` of `h` over `[lo, hi]`.
    pub fn y_factor_range(lo: f64, hi: f64) -> (f64, f64) {
        // h = cos(πy)(2cos²(πy) - 1); h' = 0 where sin(πy) = 0 or cos²(πy) = 1/6.
        let b = (1.0 / 6f64.sqrt()).acos() / PI;
        let offsets = [0.0, 1.0, b, -b, 1.0 - b, b - 1.0];
        factor_range(Self::y_factor, Self::is_y_zero, &offsets, lo, hi)
    }

    /// Minimum of `f` over the closed rectangle `[x0, x1] × [y0, y1]`.
    pub fn min_over(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let (gmin, gmax) = Self::x_factor_range(x0, x1);
        let (hmin, hmax) = Self::y_factor_range(y0, y1);
        [gmin * hmin, gmin * hmax, gmax * hmin, gmax * hmax]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
            + 0.0
    }
}

impl ScalarField for BuiltinField {
    fn sample(&self, p: Point2) -> Result<FieldSample, DomainError> {
        Ok(FieldSample {
            value: self.eval(p),
            grad: self.grad(p),
        })
    }
}

/// Points `offset + k·period` lying in `[lo, hi]`.
fn lattice_points(offset: f64, period: f64, lo: f64, hi: f64) -> Vec<f64> {
    let k_lo = ((lo - offset) / period).ceil() as i64;
    let k_hi = ((hi - offset) / period).floor() as i64;
    (k_lo..=k_hi)
        .map(|k| offset + k as f64 * period)
        .filter(|v| *v >= lo && *v <= hi)
        .collect()
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}

/// Range of a period-2 univariate function whose critical points are
/// `offsets + 2k`. Endpoints on known zeros evaluate to exactly 0.
fn factor_range(
    f: fn(f64) -> f64,
    is_zero: fn(f64) -> bool,
    offsets: &[f64],
    lo: f64,
    hi: f64,
) -> (f64, f64) {
    let at = |t: f64| if is_zero(t) { 0.0 } else { f(t) };
    let mut min = at(lo).min(at(hi));
    let mut max = at(lo).max(at(hi));
    for &o in offsets {
        for c in lattice_points(o, 2.0, lo, hi) {
            let v = at(c);
            min = min.min(v);
            max = max.max(v);
        }
    }
    (min, max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKind {
    DeepWell,
    ShallowWell,
    Hill,
}

impl CellKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::DeepWell => "deep_well",
            CellKind::ShallowWell => "shallow_well",
            CellKind::Hill => "hill",
        }
    }

    pub fn is_well(&self) -> bool {
        !matches!(self, CellKind::Hill)
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label of one cell together with the minimum of the field over it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellClass {
    pub kind: CellKind,
    pub min_value: f64,
}

/// `(i, j)` indexes the `i`-th x-interval and the `j`-th y-interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub const fn new(i: usize, j: usize) -> Self {
        CellIndex { i, j }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error(
        "zero line {axis} = {line} is within {DEGENERATE_LINE_TOL:e} of the region edge {edge}; \
         nudge the region so the edge either sits on the line or clear of it"
    )]
    DegenerateCell { axis: Axis, line: f64, edge: f64 },
}

/// Partition of a region by the zero lines of a separable field.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    region: Region,
    x_lines: Vec<f64>,
    y_lines: Vec<f64>,
    /// Row-major in `i`: `cells[i * ny + j]`.
    cells: Vec<CellClass>,
    deep_depth: f64,
    shallow_depth: f64,
}

/// Builds the cell grid of the builtin field using closed-form cell minima.
pub fn build_cell_grid(_field: &BuiltinField, region: &Region) -> Result<CellGrid, GridError> {
    let x_lines = with_edges(
        Axis::X,
        BuiltinField::x_zero_lines(
            region.x_min - DEGENERATE_LINE_TOL,
            region.x_max + DEGENERATE_LINE_TOL,
        ),
        region.x_min,
        region.x_max,
    )?;
    let y_lines = with_edges(
        Axis::Y,
        BuiltinField::y_zero_lines(
            region.y_min - DEGENERATE_LINE_TOL,
            region.y_max + DEGENERATE_LINE_TOL,
        ),
        region.y_min,
        region.y_max,
    )?;
    let mut cells = Vec::with_capacity((x_lines.len() - 1) * (y_lines.len() - 1));
    for xs in x_lines.windows(2) {
        for ys in y_lines.windows(2) {
            let min_value = BuiltinField::min_over(xs[0], xs[1], ys[0], ys[1]);
            let center = Point2::new(0.5 * (xs[0] + xs[1]), 0.5 * (ys[0] + ys[1]));
            let kind = if BuiltinField.eval(center) < 0.0 {
                nearest_depth(min_value, DEEP_WELL_DEPTH, SHALLOW_WELL_DEPTH)
            } else {
                CellKind::Hill
            };
            cells.push(CellClass { kind, min_value });
        }
    }
    Ok(CellGrid {
        region: *region,
        x_lines,
        y_lines,
        cells,
        deep_depth: DEEP_WELL_DEPTH,
        shallow_depth: SHALLOW_WELL_DEPTH,
    })
}

fn nearest_depth(min_value: f64, deep: f64, shallow: f64) -> CellKind {
    if (min_value + deep).abs() <= (min_value + shallow).abs() {
        CellKind::DeepWell
    } else {
        CellKind::ShallowWell
    }
}

/// Adds the region edges to a sorted list of interior zero lines, rejecting
/// lines that sit a hair inside or outside an edge.
fn with_edges(axis: Axis, zeros: Vec<f64>, lo: f64, hi: f64) -> Result<Vec<f64>, GridError> {
    let mut lines = vec![lo];
    for z in zeros {
        for edge in [lo, hi] {
            let gap = (z - edge).abs();
            if gap > 0.0 && gap <= DEGENERATE_LINE_TOL {
                return Err(GridError::DegenerateCell {
                    axis,
                    line: z,
                    edge,
                });
            }
        }
        if z > lo && z < hi {
            lines.push(z);
        }
    }
    lines.push(hi);
    sort_dedup(&mut lines);
    Ok(lines)
}

/// Resolution of the per-cell lattice used to estimate minima of
/// non-builtin fields.
const SCAN_RESOLUTION: usize = 64;

impl CellGrid {
    /// Builds a grid for an arbitrary field from its known zero lines.
    ///
    /// Cell minima are estimated on a lattice; deep and shallow depths are
    /// taken as the deepest and the shallowest well minimum found.
    pub fn from_zero_lines<F: ScalarField + ?Sized>(
        field: &F,
        region: &Region,
        x_zeros: Vec<f64>,
        y_zeros: Vec<f64>,
    ) -> Result<CellGrid, GridError> {
        let x_lines = with_edges(Axis::X, x_zeros, region.x_min, region.x_max)?;
        let y_lines = with_edges(Axis::Y, y_zeros, region.y_min, region.y_max)?;
        let mut raw = Vec::new();
        for xs in x_lines.windows(2) {
            for ys in y_lines.windows(2) {
                let center = Point2::new(0.5 * (xs[0] + xs[1]), 0.5 * (ys[0] + ys[1]));
                let is_well = matches!(field.value(center), Ok(v) if v < 0.0);
                let mut min_value = f64::INFINITY;
                for a in 0..=SCAN_RESOLUTION {
                    for b in 0..=SCAN_RESOLUTION {
                        let t = a as f64 / SCAN_RESOLUTION as f64;
                        let s = b as f64 / SCAN_RESOLUTION as f64;
                        let p =
                            Point2::new(xs[0] + t * (xs[1] - xs[0]), ys[0] + s * (ys[1] - ys[0]));
                        if let Ok(v) = field.value(p) {
                            if v.is_finite() {
                                min_value = min_value.min(v);
                            }
                        }
                    }
                }
                raw.push((is_well, min_value));
            }
        }
        let well_mins = raw.iter().filter(|(w, _)| *w).map(|(_, m)| *m);
        let deep_depth = -well_mins.clone().fold(f64::INFINITY, f64::min);
        let shallow_depth = -well_mins.fold(f64::NEG_INFINITY, f64::max);
        let (deep_depth, shallow_depth) = if deep_depth.is_finite() {
            (deep_depth, shallow_depth)
        } else {
            (0.0, 0.0)
        };
        let cells = raw
            .into_iter()
            .map(|(is_well, min_value)| CellClass {
                kind: if is_well {
                    nearest_depth(min_value, deep_depth, shallow_depth)
                } else {
                    CellKind::Hill
                },
                min_value,
            })
            .collect();
        Ok(CellGrid {
            region: *region,
            x_lines,
            y_lines,
            cells,
            deep_depth,
            shallow_depth,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Cell boundaries along x, including both region edges.
    pub fn x_lines(&self) -> &[f64] {
        &self.x_lines
    }

    pub fn y_lines(&self) -> &[f64] {
        &self.y_lines
    }

    pub fn nx(&self) -> usize {
        self.x_lines.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_lines.len() - 1
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn deep_depth(&self) -> f64 {
        self.deep_depth
    }

    pub fn shallow_depth(&self) -> f64 {
        self.shallow_depth
    }

    /// Endpoints of well cells with `|f| < 5%` of the shallow depth are
    /// treated as stalled near a critical point.
    pub fn near_critical_threshold(&self) -> f64 {
        0.05 * self.shallow_depth
    }

    pub fn class(&self, idx: CellIndex) -> &CellClass {
        &self.cells[idx.i * self.ny() + idx.j]
    }

    /// `(x_lo, x_hi, y_lo, y_hi)` of a cell.
    pub fn bounds(&self, idx: CellIndex) -> (f64, f64, f64, f64) {
        (
            self.x_lines[idx.i],
            self.x_lines[idx.i + 1],
            self.y_lines[idx.j],
            self.y_lines[idx.j + 1],
        )
    }

    /// All cells in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let ny = self.ny();
        (0..self.nx()).flat_map(move |i| (0..ny).map(move |j| CellIndex::new(i, j)))
    }

    pub fn flat_index(&self, idx: CellIndex) -> usize {
        idx.i * self.ny() + idx.j
    }

    /// Cell containing `p`, using half-open intervals `[line_k, line_{k+1})`.
    pub fn cell_of(&self, p: Point2) -> Option<CellIndex> {
        if !self.region.contains(p) {
            return None;
        }
        let i = self.x_lines.partition_point(|&l| l <= p.x) - 1;
        let j = self.y_lines.partition_point(|&l| l <= p.y) - 1;
        Some(CellIndex::new(i, j))
    }
}

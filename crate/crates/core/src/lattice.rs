//! Finite dyadic product grids.
//!
//! The ambient space is `[0,1)^m` with `m ∈ {1,2,3}` one-dimensional
//! parameters. Axis `t` is cut into `2^N_t` finest cells, every function is
//! constant on cells, and all integrals are exact cell sums. Cells are stored
//! in row-major order with axis 0 varying slowest.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use ndarray::{ArrayD, IxDyn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyramid::{self, AxisKernel};
use crate::rng::rng_from_seed;

/// Largest supported per-axis depth.
pub const MAX_DEPTH: u32 = 12;
/// Largest supported cell count.
pub const MAX_CELLS: usize = 1 << 22;

/// Parameter count and per-axis depths of a product grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRepr", into = "GridSpecRepr")]
pub struct GridSpec {
    depths: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct GridSpecRepr {
    m: usize,
    depths: Vec<u32>,
}

impl TryFrom<GridSpecRepr> for GridSpec {
    type Error = Error;

    fn try_from(r: GridSpecRepr) -> Result<Self> {
        if r.m != r.depths.len() {
            return Err(Error::InvalidGrid(format!(
                "m = {} but {} depths given",
                r.m,
                r.depths.len()
            )));
        }
        GridSpec::new(&r.depths)
    }
}

impl From<GridSpec> for GridSpecRepr {
    fn from(s: GridSpec) -> Self {
        GridSpecRepr { m: s.depths.len(), depths: s.depths }
    }
}

impl GridSpec {
    pub fn new(depths: &[u32]) -> Result<Self> {
        if depths.is_empty() || depths.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "parameter count must be 1, 2 or 3, got {}",
                depths.len()
            )));
        }
        if let Some(d) = depths.iter().find(|&&d| d == 0 || d > MAX_DEPTH) {
            return Err(Error::InvalidGrid(format!("depth {d} outside 1..={MAX_DEPTH}")));
        }
        let cells: usize = depths.iter().map(|&d| 1usize << d).product();
        if cells > MAX_CELLS {
            return Err(Error::InvalidGrid(format!("{cells} cells exceeds {MAX_CELLS}")));
        }
        Ok(Self { depths: depths.to_vec() })
    }

    pub fn param_count(&self) -> usize {
        self.depths.len()
    }

    pub fn depths(&self) -> &[u32] {
        &self.depths
    }

    pub fn depth(&self, axis: usize) -> u32 {
        self.depths[axis]
    }

    /// Cells per axis.
    pub fn shape(&self) -> Vec<usize> {
        self.depths.iter().map(|&d| 1usize << d).collect()
    }

    /// Intervals per axis.
    pub fn rect_shape(&self) -> Vec<usize> {
        self.depths.iter().map(|&d| pyramid::interval_count(d)).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn rect_count(&self) -> usize {
        self.rect_shape().iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        pyramid::dyadic_len(self.depths.iter().sum())
    }

    /// The grid spanned by a subset of axes, in the given order.
    pub fn sub_spec(&self, axes: &[usize]) -> Result<GridSpec> {
        GridSpec::new(&axes.iter().map(|&a| self.depths[a]).collect::<Vec<_>>())
    }

    pub fn interval(&self, axis: usize, scale: u32, pos: u32) -> Result<DyadicInterval> {
        if axis >= self.param_count() {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        if scale > self.depths[axis] || u64::from(pos) >= 1u64 << scale {
            return Err(Error::InvalidArgument(format!(
                "interval {axis}:{scale}:{pos} outside grid depth {}",
                self.depths[axis]
            )));
        }
        Ok(DyadicInterval { axis, scale, pos })
    }

    pub fn unit_rectangle(&self) -> DyadicRectangle {
        DyadicRectangle {
            intervals: (0..self.param_count()).map(DyadicInterval::unit).collect(),
        }
    }

    pub fn flat_cell(&self, cell: &[usize]) -> usize {
        let mut idx = 0;
        for (c, &d) in cell.iter().zip(&self.depths) {
            idx = (idx << d) | c;
        }
        idx
    }

    pub fn cell_coords(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.param_count()];
        for (o, &d) in out.iter_mut().zip(&self.depths).rev() {
            *o = flat & ((1 << d) - 1);
            flat >>= d;
        }
        out
    }

    /// Row-major index of a rectangle in a tensor of interval-indexed axes.
    pub fn rect_index(&self, rect: &DyadicRectangle) -> usize {
        let mut idx = 0;
        for (iv, &d) in rect.intervals.iter().zip(&self.depths) {
            idx = idx * pyramid::interval_count(d) + iv.heap_index();
        }
        idx
    }

    pub fn rect_from_index(&self, mut flat: usize) -> DyadicRectangle {
        let mut ids = vec![0; self.param_count()];
        for (o, &d) in ids.iter_mut().zip(&self.depths).rev() {
            let n = pyramid::interval_count(d);
            *o = flat % n;
            flat /= n;
        }
        DyadicRectangle {
            intervals: ids
                .into_iter()
                .enumerate()
                .map(|(axis, h)| DyadicInterval::from_heap_index(axis, h))
                .collect(),
        }
    }

    /// Fails unless the rectangle lives on this grid.
    pub fn check_rect(&self, rect: &DyadicRectangle) -> Result<()> {
        if rect.param_count() != self.param_count() {
            return Err(Error::InvalidArgument(format!(
                "rectangle {rect} has {} axes, grid has {}",
                rect.param_count(),
                self.param_count()
            )));
        }
        for iv in &rect.intervals {
            if iv.scale > self.depths[iv.axis] {
                return Err(Error::InvalidArgument(format!("rectangle {rect} is finer than the grid")));
            }
        }
        Ok(())
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::SpecMismatch {
                expected: self.depths.clone(),
                found: other.depths.clone(),
            });
        }
        Ok(())
    }
}

/// `[pos·2^-scale, (pos+1)·2^-scale)` on parameter axis `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub axis: usize,
    pub scale: u32,
    pub pos: u32,
}

impl DyadicInterval {
    pub fn unit(axis: usize) -> Self {
        Self { axis, scale: 0, pos: 0 }
    }

    pub fn len(&self) -> f64 {
        pyramid::dyadic_len(self.scale)
    }

    pub fn heap_index(&self) -> usize {
        (1usize << self.scale) - 1 + self.pos as usize
    }

    pub fn from_heap_index(axis: usize, idx: usize) -> Self {
        let scale = pyramid::heap_scale(idx);
        Self { axis, scale, pos: (idx + 1 - (1 << scale)) as u32 }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.scale > 0).then(|| Self { axis: self.axis, scale: self.scale - 1, pos: self.pos / 2 })
    }

    /// The `l`-th generation ancestor, `I^{(l)}`.
    pub fn ancestor(&self, l: u32) -> Option<Self> {
        (l <= self.scale).then(|| Self { axis: self.axis, scale: self.scale - l, pos: self.pos >> l })
    }

    pub fn children(&self) -> [Self; 2] {
        let c = |p| Self { axis: self.axis, scale: self.scale + 1, pos: p };
        [c(2 * self.pos), c(2 * self.pos + 1)]
    }

    /// Descendants `J` with `J^{(l)} = self`.
    pub fn descendants(&self, l: u32) -> impl Iterator<Item = Self> + '_ {
        let base = self.pos << l;
        (0..1u32 << l).map(move |o| Self { axis: self.axis, scale: self.scale + l, pos: base + o })
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &Self) -> bool {
        other.scale >= self.scale && (other.pos >> (other.scale - self.scale)) == self.pos
    }

    /// Finest cells covered at depth `depth`.
    pub fn cell_range(&self, depth: u32) -> std::ops::Range<usize> {
        let w = 1usize << (depth - self.scale);
        let start = self.pos as usize * w;
        start..start + w
    }

    pub fn contains_cell(&self, depth: u32, cell: usize) -> bool {
        (cell >> (depth - self.scale)) == self.pos as usize
    }

    /// The interval of scale `scale` containing cell `cell` at depth `depth`.
    pub fn containing_cell(axis: usize, depth: u32, cell: usize, scale: u32) -> Self {
        Self { axis, scale, pos: (cell >> (depth - scale)) as u32 }
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.axis, self.scale, self.pos)
    }
}

/// A product of one dyadic interval per parameter axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicRectangle {
    intervals: Vec<DyadicInterval>,
}

impl DyadicRectangle {
    pub fn new(intervals: Vec<DyadicInterval>) -> Result<Self> {
        if intervals.is_empty() || intervals.iter().enumerate().any(|(t, iv)| iv.axis != t) {
            return Err(Error::InvalidArgument(
                "rectangle intervals must be listed once per axis, in axis order".into(),
            ));
        }
        Ok(Self { intervals })
    }

    /// Build from `(scale, pos)` pairs, one per axis.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .enumerate()
                .map(|(axis, &(scale, pos))| DyadicInterval { axis, scale, pos })
                .collect(),
        )
    }

    pub fn intervals(&self) -> &[DyadicInterval] {
        &self.intervals
    }

    pub fn interval(&self, axis: usize) -> DyadicInterval {
        self.intervals[axis]
    }

    pub fn param_count(&self) -> usize {
        self.intervals.len()
    }

    pub fn measure(&self) -> f64 {
        pyramid::dyadic_len(self.intervals.iter().map(|iv| iv.scale).sum())
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &DyadicRectangle) -> bool {
        self.intervals.iter().zip(&other.intervals).all(|(a, b)| a.contains(b))
    }

    pub fn contains_cell(&self, spec: &GridSpec, cell: &[usize]) -> bool {
        self.intervals
            .iter()
            .zip(cell)
            .all(|(iv, &c)| iv.contains_cell(spec.depth(iv.axis), c))
    }

    /// Every axis below the finest scale, so a fully cancellative Haar function exists.
    pub fn is_cancellative_on(&self, spec: &GridSpec) -> bool {
        self.intervals.iter().all(|iv| iv.scale < spec.depth(iv.axis))
    }

    /// The `2^m` children at the next joint scale.
    pub fn children(&self) -> Vec<DyadicRectangle> {
        let m = self.param_count();
        (0..1usize << m)
            .map(|mask| DyadicRectangle {
                intervals: self
                    .intervals
                    .iter()
                    .enumerate()
                    .map(|(t, iv)| iv.children()[(mask >> t) & 1])
                    .collect(),
            })
            .collect()
    }

    /// Flat indices of the cells inside the rectangle, in row-major order.
    pub fn cells(&self, spec: &GridSpec) -> Vec<usize> {
        let ranges: Vec<_> = self.intervals.iter().map(|iv| iv.cell_range(spec.depth(iv.axis))).collect();
        let mut out = Vec::with_capacity(ranges.iter().map(|r| r.len()).product());
        let mut cur: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        loop {
            out.push(spec.flat_cell(&cur));
            let mut t = ranges.len();
            loop {
                if t == 0 {
                    return out;
                }
                t -= 1;
                cur[t] += 1;
                if cur[t] < ranges[t].end {
                    break;
                }
                cur[t] = ranges[t].start;
            }
        }
    }
}

impl fmt::Display for DyadicRectangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

/// Every dyadic rectangle of the grid, ordered by scale tuple then position tuple.
pub fn enumerate_rectangles(spec: &GridSpec) -> Vec<DyadicRectangle> {
    let m = spec.param_count();
    let mut out = Vec::with_capacity(spec.rect_count());
    let mut scales = vec![0u32; m];
    loop {
        let mut pos = vec![0u32; m];
        loop {
            out.push(DyadicRectangle {
                intervals: (0..m)
                    .map(|axis| DyadicInterval { axis, scale: scales[axis], pos: pos[axis] })
                    .collect(),
            });
            if !odometer(&mut pos, |t| (1u32 << scales[t]) - 1) {
                break;
            }
        }
        if !odometer(&mut scales, |t| spec.depth(t)) {
            break;
        }
    }
    out
}

/// Advances a mixed-radix counter; returns false after the last value.
fn odometer(digits: &mut [u32], max: impl Fn(usize) -> u32) -> bool {
    for t in (0..digits.len()).rev() {
        if digits[t] < max(t) {
            digits[t] += 1;
            return true;
        }
        digits[t] = 0;
    }
    false
}

/// A real function constant on the finest cells of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: ArrayD<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionRepr {
    spec: GridSpec,
    values: Vec<f64>,
}

impl Serialize for GridFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridFunctionRepr { spec: self.spec.clone(), values: self.values().to_vec() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GridFunctionRepr::deserialize(d)?;
        GridFunction::new(r.spec, r.values).map_err(serde::de::Error::custom)
    }
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} cells",
                values.len(),
                spec.cell_count()
            )));
        }
        let values = ArrayD::from_shape_vec(IxDyn(&spec.shape()), values)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self { spec, values })
    }

    pub fn from_array(spec: GridSpec, values: ArrayD<f64>) -> Result<Self> {
        if values.shape() != spec.shape().as_slice() {
            return Err(Error::InvalidArgument(format!(
                "array shape {:?} does not match grid shape {:?}",
                values.shape(),
                spec.shape()
            )));
        }
        // Normalise to standard layout so `values()` is row-major.
        let values = if values.is_standard_layout() { values } else { values.as_standard_layout().into_owned() };
        Ok(Self { spec, values })
    }

    pub fn constant(spec: &GridSpec, c: f64) -> Self {
        Self { values: ArrayD::from_elem(IxDyn(&spec.shape()), c), spec: spec.clone() }
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn from_fn(spec: &GridSpec, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let values = (0..spec.cell_count()).map(|i| f(&spec.cell_coords(i))).collect();
        Self::new(spec.clone(), values).expect("length matches by construction")
    }

    /// Cellwise iid uniform values in `[-1, 1]`.
    pub fn random(spec: &GridSpec, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let values = (0..spec.cell_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Self::new(spec.clone(), values).expect("length matches by construction")
    }

    /// Indicator of a set of cells.
    pub fn indicator_of_cells(spec: &GridSpec, cells: &[usize]) -> Self {
        let mut v = vec![0.0; spec.cell_count()];
        for &c in cells {
            v[c] = 1.0;
        }
        Self::new(spec.clone(), v).expect("length matches by construction")
    }

    pub fn indicator(spec: &GridSpec, rect: &DyadicRectangle) -> Self {
        Self::indicator_of_cells(spec, &rect.cells(spec))
    }

    /// `f_1 ⊗ … ⊗ f_m` from one-parameter factors.
    pub fn tensor(factors: &[GridFunction]) -> Result<Self> {
        let mut depths = Vec::new();
        for f in factors {
            if f.spec.param_count() != 1 {
                return Err(Error::InvalidArgument("tensor factors must be one-parameter".into()));
            }
            depths.push(f.spec.depth(0));
        }
        let spec = GridSpec::new(&depths)?;
        Ok(Self::from_fn(&spec, |cell| {
            factors.iter().zip(cell).map(|(f, &c)| f.values()[c]).product()
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice().expect("standard layout")
    }

    pub fn array(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub fn into_array(self) -> ArrayD<f64> {
        self.values
    }

    pub fn get(&self, cell: &[usize]) -> f64 {
        self.values[IxDyn(cell)]
    }

    pub fn integral(&self) -> f64 {
        pyramid::pairwise_sum(self.values()) * self.spec.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { spec: self.spec.clone(), values: self.values.mapv(f) }
    }

    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.spec.ensure_same(&other.spec)?;
        let values = self.values().iter().zip(other.values()).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.spec.clone(), values)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `∫ f g`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.spec.ensure_same(&other.spec)?;
        let prods: Vec<f64> = self.values().iter().zip(other.values()).map(|(a, b)| a * b).collect();
        Ok(pyramid::pairwise_sum(&prods) * self.spec.cell_volume())
    }

    /// Sum over `R` of `f`, no normalisation.
    pub fn integral_over(&self, rect: &DyadicRectangle) -> Result<f64> {
        self.spec.check_rect(rect)?;
        let vals: Vec<f64> = rect.cells(&self.spec).into_iter().map(|c| self.values()[c]).collect();
        Ok(pyramid::pairwise_sum(&vals) * self.spec.cell_volume())
    }

    /// Averages of `f` over every dyadic rectangle, as an interval-indexed tensor.
    pub fn rect_averages(&self) -> ArrayD<f64> {
        let kernels = vec![AxisKernel::Average; self.spec.param_count()];
        pyramid::analyze(&self.values, self.spec.depths(), &kernels)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid functions serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// `⟨f⟩_R = |R|^{-1} ∫_R f`, by exact cell summation.
pub fn average(f: &GridFunction, rect: &DyadicRectangle) -> Result<f64> {
    Ok(f.integral_over(rect)? / rect.measure())
}

/// A nonempty finite union of finest cells, the finite stand-in for an open set Ω.
#[derive(Debug)]
pub struct OmegaSet {
    spec: GridSpec,
    cells: Vec<usize>,
    rect: Option<DyadicRectangle>,
    contained: OnceLock<Vec<bool>>,
}

impl Clone for OmegaSet {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            cells: self.cells.clone(),
            rect: self.rect.clone(),
            contained: OnceLock::new(),
        }
    }
}

impl PartialEq for OmegaSet {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.cells == other.cells
    }
}

impl Serialize for OmegaSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.cells.serialize(s)
    }
}

impl OmegaSet {
    pub fn from_cells(spec: &GridSpec, cells: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = cells.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidArgument("Ω must be nonempty".into()));
        }
        if set.iter().next_back().is_some_and(|&c| c >= spec.cell_count()) {
            return Err(Error::InvalidArgument("Ω cell index outside grid".into()));
        }
        Ok(Self {
            spec: spec.clone(),
            cells: set.into_iter().collect(),
            rect: None,
            contained: OnceLock::new(),
        })
    }

    pub fn from_rectangle(spec: &GridSpec, rect: &DyadicRectangle) -> Result<Self> {
        spec.check_rect(rect)?;
        let mut cells = rect.cells(spec);
        cells.sort_unstable();
        Ok(Self { spec: spec.clone(), cells, rect: Some(rect.clone()), contained: OnceLock::new() })
    }

    pub fn full(spec: &GridSpec) -> Self {
        Self::from_rectangle(spec, &spec.unit_rectangle()).expect("unit rectangle is on the grid")
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Sorted flat cell indices.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// The rectangle Ω equals, when it was built from one.
    pub fn as_rectangle(&self) -> Option<&DyadicRectangle> {
        self.rect.as_ref()
    }

    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 * self.spec.cell_volume()
    }

    /// `R ⊆ Ω`.
    pub fn contains(&self, rect: &DyadicRectangle) -> bool {
        if let Some(own) = &self.rect {
            return own.contains(rect);
        }
        let table = self.contained.get_or_init(|| {
            let ind = GridFunction::indicator_of_cells(&self.spec, &self.cells);
            let kernels = vec![AxisKernel::Indicator; self.spec.param_count()];
            let mass = pyramid::analyze(ind.array(), self.spec.depths(), &kernels);
            mass.iter()
                .enumerate()
                .map(|(i, &m)| m == self.spec.rect_from_index(i).measure())
                .collect()
        });
        table[self.spec.rect_index(rect)]
    }

    pub fn union(&self, other: &OmegaSet) -> Result<Self> {
        self.spec.ensure_same(&other.spec)?;
        Self::from_cells(&self.spec, self.cells.iter().chain(&other.cells).copied())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.cells).expect("cell lists serialize")
    }

    /// Short human-readable descriptor used in reports.
    pub fn descriptor(&self) -> String {
        match &self.rect {
            Some(r) => format!("rect[{r}]"),
            None => format!("cells[{}]", self.cells.len()),
        }
    }
}

/// How a finite family of Ω sets is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum OmegaStrategy {
    /// One Ω per dyadic rectangle.
    AllRectangles,
    /// `count` unions of `k` uniformly drawn rectangles.
    RandomUnions { k: usize, count: usize },
    /// Superlevel sets `{field > t}`; empty levels are skipped.
    LevelSets { field: GridFunction, thresholds: Vec<f64> },
    /// The whole grid.
    FullSpace,
}

impl OmegaStrategy {
    pub fn descriptor(&self) -> String {
        match self {
            OmegaStrategy::AllRectangles => "AllRectangles".into(),
            OmegaStrategy::RandomUnions { k, count } => format!("RandomUnions(k={k},count={count})"),
            OmegaStrategy::LevelSets { thresholds, .. } => format!("LevelSets({} levels)", thresholds.len()),
            OmegaStrategy::FullSpace => "FullSpace".into(),
        }
    }
}

/// A descriptor-tagged list of Ω sets over which BMO suprema are taken.
#[derive(Clone, Debug)]
pub struct OmegaFamily {
    pub descriptor: String,
    pub sets: Vec<OmegaSet>,
}

impl OmegaFamily {
    pub fn new(descriptor: impl Into<String>, sets: Vec<OmegaSet>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyFamily);
        }
        Ok(Self { descriptor: descriptor.into(), sets })
    }

    pub fn build(spec: &GridSpec, strategy: &OmegaStrategy, seed: u64) -> Result<Self> {
        Self::new(strategy.descriptor(), omega_family(spec, strategy, seed)?)
    }

    /// Family containing every set of both.
    pub fn merged(&self, other: &OmegaFamily) -> Self {
        Self {
            descriptor: format!("{}+{}", self.descriptor, other.descriptor),
            sets: self.sets.iter().chain(&other.sets).cloned().collect(),
        }
    }
}

/// Deterministic Ω family for a strategy.
pub fn omega_family(spec: &GridSpec, strategy: &OmegaStrategy, seed: u64) -> Result<Vec<OmegaSet>> {
    match strategy {
        OmegaStrategy::AllRectangles => enumerate_rectangles(spec)
            .iter()
            .map(|r| OmegaSet::from_rectangle(spec, r))
            .collect(),
        OmegaStrategy::FullSpace => Ok(vec![OmegaSet::full(spec)]),
        OmegaStrategy::RandomUnions { k, count } => {
            if *k == 0 {
                return Err(Error::InvalidArgument("RandomUnions needs k ≥ 1".into()));
            }
            let rects = enumerate_rectangles(spec);
            let mut rng = rng_from_seed(seed);
            (0..*count)
                .map(|_| {
                    let cells = (0..*k).flat_map(|_| rects[rng.gen_range(0..rects.len())].cells(spec));
                    OmegaSet::from_cells(spec, cells.collect::<Vec<_>>())
                })
                .collect()
        }
        OmegaStrategy::LevelSets { field, thresholds } => {
            spec.ensure_same(field.spec())?;
            Ok(thresholds
                .iter()
                .filter_map(|&t| {
                    let cells: Vec<usize> = field
                        .values()
                        .iter()
                        .enumerate()
                        .filter(|(_, &v)| v > t)
                        .map(|(i, _)| i)
                        .collect();
                    OmegaSet::from_cells(spec, cells).ok()
                })
                .collect())
        }
    }
}

//! Haar functions, Haar coefficients and martingale operators.
//!
//! `h⁰_I = |I|^{-1/2} 1_I` and `h¹_I = |I|^{-1/2}(1_{I_l} - 1_{I_r})`; a tensor
//! Haar function `h_R^η` picks one factor per axis. Only cancellative factors
//! need children, so `η_t = 1` requires `scale(I_t) < N_t`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{ArrayD, Dimension, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DyadicInterval, DyadicRectangle, GridFunction, GridSpec};
use crate::pyramid::{self, AxisKernel};

/// Per-axis choice between the averaging (`0`) and cancellative (`1`) factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HaarIndex(u8);

impl HaarIndex {
    pub fn from_bits(bits: &[bool]) -> Self {
        Self(bits.iter().enumerate().fold(0, |acc, (t, &b)| acc | (u8::from(b) << t)))
    }

    /// All axes cancellative.
    pub fn cancellative(m: usize) -> Self {
        Self(((1u16 << m) - 1) as u8)
    }

    pub fn averaging() -> Self {
        Self(0)
    }

    pub fn is_cancellative(&self, axis: usize) -> bool {
        self.0 >> axis & 1 == 1
    }

    pub fn is_fully_cancellative(&self, m: usize) -> bool {
        *self == Self::cancellative(m)
    }

    fn bits_string(&self, m: usize) -> String {
        (0..m).map(|t| if self.is_cancellative(t) { '1' } else { '0' }).collect()
    }
}

/// Value of `h^η_I` on finest cell `cell` of an axis of depth `depth`.
fn haar_value(iv: &DyadicInterval, depth: u32, cancellative: bool, cell: usize) -> f64 {
    if !iv.contains_cell(depth, cell) {
        return 0.0;
    }
    let amp = pyramid::inv_sqrt_len(iv.scale);
    if !cancellative {
        return amp;
    }
    let left = iv.children()[0];
    if left.contains_cell(depth, cell) {
        amp
    } else {
        -amp
    }
}

fn check_profile(iv: &DyadicInterval, depth: u32, cancellative: bool) -> Result<()> {
    if iv.scale > depth {
        return Err(Error::InvalidArgument(format!("interval {iv} is finer than depth {depth}")));
    }
    if cancellative && iv.scale == depth {
        return Err(Error::FinestScale(iv.to_string()));
    }
    Ok(())
}

/// One-parameter profile `h^0_I` or `h^1_I` on a grid of depth `depth`.
pub fn haar_function(depth: u32, iv: &DyadicInterval, cancellative: bool) -> Result<GridFunction> {
    check_profile(iv, depth, cancellative)?;
    let spec = GridSpec::new(&[depth])?;
    Ok(GridFunction::from_fn(&spec, |c| haar_value(iv, depth, cancellative, c[0])))
}

/// The tensor Haar function `h_R^η` as a grid function.
pub fn haar_tensor(spec: &GridSpec, rect: &DyadicRectangle, eta: HaarIndex) -> Result<GridFunction> {
    spec.check_rect(rect)?;
    for iv in rect.intervals() {
        check_profile(iv, spec.depth(iv.axis), eta.is_cancellative(iv.axis))?;
    }
    Ok(GridFunction::from_fn(spec, |cell| {
        rect.intervals()
            .iter()
            .map(|iv| haar_value(iv, spec.depth(iv.axis), eta.is_cancellative(iv.axis), cell[iv.axis]))
            .product()
    }))
}

/// `⟨f, h_R^η⟩` by summation over the cells of `R`.
pub fn haar_coefficient(f: &GridFunction, rect: &DyadicRectangle, eta: HaarIndex) -> Result<f64> {
    let spec = f.spec();
    spec.check_rect(rect)?;
    for iv in rect.intervals() {
        check_profile(iv, spec.depth(iv.axis), eta.is_cancellative(iv.axis))?;
    }
    let terms: Vec<f64> = rect
        .cells(spec)
        .into_iter()
        .map(|flat| {
            let cell = spec.cell_coords(flat);
            let w: f64 = rect
                .intervals()
                .iter()
                .map(|iv| haar_value(iv, spec.depth(iv.axis), eta.is_cancellative(iv.axis), cell[iv.axis]))
                .product();
            w * f.values()[flat]
        })
        .collect();
    Ok(pyramid::pairwise_sum(&terms) * spec.cell_volume())
}

/// Partial pairing `⟨f, ⊗_{t∈S} h^{η_t}_{I_t}⟩_S`, a function of the remaining axes.
///
/// `profiles` lists `(I_t, cancellative)` for each paired axis `t ∈ S`; `S` is
/// read from the intervals' axes and must be a nonempty proper subset.
pub fn partial_coefficient(f: &GridFunction, profiles: &[(DyadicInterval, bool)]) -> Result<GridFunction> {
    let spec = f.spec();
    let m = spec.param_count();
    let mut paired = vec![false; m];
    for (iv, canc) in profiles {
        if iv.axis >= m || paired[iv.axis] {
            return Err(Error::InvalidArgument(format!("axis {} listed twice or out of range", iv.axis)));
        }
        check_profile(iv, spec.depth(iv.axis), *canc)?;
        paired[iv.axis] = true;
    }
    let rest: Vec<usize> = (0..m).filter(|&t| !paired[t]).collect();
    if profiles.is_empty() || rest.is_empty() {
        return Err(Error::InvalidArgument(
            "partial pairing needs a nonempty proper subset of axes; use haar_coefficient for all axes".into(),
        ));
    }
    let out_spec = spec.sub_spec(&rest)?;
    let mut out = vec![0.0; out_spec.cell_count()];
    let vol: f64 = profiles.iter().map(|(iv, _)| pyramid::dyadic_len(spec.depth(iv.axis))).product();
    for (flat, &v) in f.values().iter().enumerate() {
        let cell = spec.cell_coords(flat);
        let w: f64 = profiles
            .iter()
            .map(|(iv, canc)| haar_value(iv, spec.depth(iv.axis), *canc, cell[iv.axis]))
            .product();
        if w != 0.0 {
            let rest_cell: Vec<usize> = rest.iter().map(|&t| cell[t]).collect();
            out[out_spec.flat_cell(&rest_cell)] += w * v * vol;
        }
    }
    GridFunction::new(out_spec, out)
}

/// Slice averages along one axis: the axis becomes interval-indexed.
fn axis_averages(f: &GridFunction, axis: usize) -> ArrayD<f64> {
    let mut kernels = vec![AxisKernel::Identity; f.spec().param_count()];
    kernels[axis] = AxisKernel::Average;
    pyramid::analyze(f.array(), f.spec().depths(), &kernels)
}

fn check_axis_interval(spec: &GridSpec, axis: usize, iv: &DyadicInterval) -> Result<()> {
    if axis >= spec.param_count() || iv.axis != axis {
        return Err(Error::InvalidArgument(format!("interval {iv} does not live on axis {axis}")));
    }
    if iv.scale > spec.depth(axis) {
        return Err(Error::InvalidArgument(format!("interval {iv} is finer than the grid")));
    }
    Ok(())
}

/// Builds `out(x) = φ(x_t, averages along axis t at x)` for every cell.
fn from_axis_profile(
    f: &GridFunction,
    axis: usize,
    mut value: impl FnMut(usize, &dyn Fn(DyadicInterval) -> f64) -> f64,
) -> GridFunction {
    let spec = f.spec();
    let avg = axis_averages(f, axis);
    GridFunction::from_fn(spec, |cell| {
        let lookup = |iv: DyadicInterval| {
            let mut idx = cell.to_vec();
            idx[axis] = iv.heap_index();
            avg[IxDyn(&idx)]
        };
        value(cell[axis], &lookup)
    })
}

/// `Δ^t_I f = ⟨f, h_I⟩_t ⊗ h_I`, computed as (child average − average of `I`) on `I`.
pub fn martingale_diff(f: &GridFunction, axis: usize, iv: &DyadicInterval) -> Result<GridFunction> {
    let spec = f.spec();
    check_axis_interval(spec, axis, iv)?;
    if iv.scale == spec.depth(axis) {
        return Err(Error::FinestScale(iv.to_string()));
    }
    let depth = spec.depth(axis);
    let iv = *iv;
    Ok(from_axis_profile(f, axis, |x, avg| {
        if !iv.contains_cell(depth, x) {
            return 0.0;
        }
        let child = DyadicInterval::containing_cell(axis, depth, x, iv.scale + 1);
        avg(child) - avg(iv)
    }))
}

/// `E^t_I f = 1_I ⟨f⟩^t_I`.
pub fn martingale_avg(f: &GridFunction, axis: usize, iv: &DyadicInterval) -> Result<GridFunction> {
    let spec = f.spec();
    check_axis_interval(spec, axis, iv)?;
    let depth = spec.depth(axis);
    let iv = *iv;
    Ok(from_axis_profile(f, axis, |x, avg| if iv.contains_cell(depth, x) { avg(iv) } else { 0.0 }))
}

/// Martingale block `Σ_{J^{(j)} = K} Δ^t_J f`.
///
/// Blocks reaching the finest scale (`scale(K) + j = N_t`) are zero.
pub fn martingale_block(f: &GridFunction, axis: usize, k: &DyadicInterval, j: u32) -> Result<GridFunction> {
    let spec = f.spec();
    check_axis_interval(spec, axis, k)?;
    let depth = spec.depth(axis);
    let s = k.scale + j;
    if s > depth {
        return Err(Error::InvalidArgument(format!(
            "block depth {j} below {k} overflows grid depth {depth}"
        )));
    }
    if s == depth {
        return Ok(GridFunction::zeros(spec));
    }
    let k = *k;
    Ok(from_axis_profile(f, axis, |x, avg| {
        if !k.contains_cell(depth, x) {
            return 0.0;
        }
        let fine = DyadicInterval::containing_cell(axis, depth, x, s + 1);
        let coarse = DyadicInterval::containing_cell(axis, depth, x, s);
        avg(fine) - avg(coarse)
    }))
}

/// Complete orthonormal Haar expansion of a grid function.
///
/// Along each axis of depth `N`, slot `0` holds the coarse coefficient
/// against `h⁰_{[0,1)}` and slot `i ≥ 1` the cancellative coefficient of the
/// interval with heap index `i - 1`. The tensor of slots covers the whole
/// basis, so reconstruction and Parseval are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoefficients {
    spec: GridSpec,
    data: ArrayD<f64>,
}

impl HaarCoefficients {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn data(&self) -> &ArrayD<f64> {
        &self.data
    }

    fn slot(iv: &DyadicInterval, cancellative: bool) -> Option<usize> {
        match cancellative {
            true => Some(iv.heap_index() + 1),
            false => (iv.scale == 0).then_some(0),
        }
    }

    fn slot_profile(axis: usize, slot: usize) -> (DyadicInterval, bool) {
        match slot {
            0 => (DyadicInterval::unit(axis), false),
            s => (DyadicInterval::from_heap_index(axis, s - 1), true),
        }
    }

    /// Stored coefficient of `h_R^η`, if that function belongs to the basis.
    pub fn get(&self, rect: &DyadicRectangle, eta: HaarIndex) -> Option<f64> {
        let idx: Option<Vec<usize>> = rect
            .intervals()
            .iter()
            .map(|iv| {
                let canc = eta.is_cancellative(iv.axis);
                if canc && iv.scale >= self.spec.depth(iv.axis) {
                    return None;
                }
                Self::slot(iv, canc)
            })
            .collect();
        idx.map(|i| self.data[IxDyn(&i)])
    }

    /// Every `(R, η, coefficient)` in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (DyadicRectangle, HaarIndex, f64)> + '_ {
        self.data.indexed_iter().map(|(idx, &v)| {
            let profiles: Vec<_> = (0..idx.ndim()).map(|t| Self::slot_profile(t, idx[t])).collect();
            let rect = DyadicRectangle::new(profiles.iter().map(|p| p.0).collect()).expect("axis order");
            let eta = HaarIndex::from_bits(&profiles.iter().map(|p| p.1).collect::<Vec<_>>());
            (rect, eta, v)
        })
    }

    /// Fully cancellative coefficients `(R, ⟨f, h_R⟩)`.
    pub fn cancellative(&self) -> impl Iterator<Item = (DyadicRectangle, f64)> + '_ {
        let m = self.spec.param_count();
        self.entries()
            .filter(move |(_, eta, _)| eta.is_fully_cancellative(m))
            .map(|(r, _, v)| (r, v))
    }

    /// `Σ` of all squared coefficients.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `Σ` of squared fully cancellative coefficients.
    pub fn cancellative_energy(&self) -> f64 {
        self.cancellative().map(|(_, v)| v * v).sum()
    }

    /// Zero every coefficient that is not fully cancellative.
    pub fn keep_cancellative(&self) -> Self {
        let mut data = self.data.clone();
        for (idx, v) in data.indexed_iter_mut() {
            if idx.slice().contains(&0) {
                *v = 0.0;
            }
        }
        Self { spec: self.spec.clone(), data }
    }

    /// JSON map keyed `"t:k:j|…;η"`.
    pub fn to_json_map(&self) -> BTreeMap<String, f64> {
        let m = self.spec.param_count();
        self.entries()
            .map(|(r, eta, v)| (format!("{r};{}", eta.bits_string(m)), v))
            .collect()
    }

    pub fn from_json_map(spec: &GridSpec, map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut data = ArrayD::zeros(IxDyn(&spec.shape()));
        for (key, &v) in map {
            let bad = || Error::InvalidArgument(format!("malformed coefficient key {key:?}"));
            let (rect_part, eta_part) = key.split_once(';').ok_or_else(bad)?;
            let mut idx = Vec::new();
            for (t, (piece, bit)) in rect_part.split('|').zip(eta_part.chars()).enumerate() {
                let nums: Vec<u32> = piece.split(':').map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                if nums.len() != 3 || nums[0] as usize != t {
                    return Err(bad());
                }
                let iv = spec.interval(t, nums[1], nums[2])?;
                let canc = bit == '1';
                if canc && iv.scale >= spec.depth(t) {
                    return Err(Error::FinestScale(iv.to_string()));
                }
                idx.push(Self::slot(&iv, canc).ok_or_else(bad)?);
            }
            if idx.len() != spec.param_count() || eta_part.len() != spec.param_count() {
                return Err(bad());
            }
            data[IxDyn(&idx)] = v;
        }
        Ok(Self { spec: spec.clone(), data })
    }
}

fn forward_line(line: &[f64], depth: u32, out: &mut [f64]) {
    let n = line.len();
    let scale = 1.0 / pyramid::inv_sqrt_len(depth);
    let mut s: Vec<f64> = line.iter().map(|v| v * scale).collect();
    for k in (0..depth).rev() {
        let half = 1usize << k;
        for j in 0..half {
            let (l, r) = (s[2 * j], s[2 * j + 1]);
            out[half + j] = (l - r) * FRAC_1_SQRT_2;
            s[j] = (l + r) * FRAC_1_SQRT_2;
        }
    }
    out[0] = s[0];
    debug_assert_eq!(out.len(), n);
}

fn inverse_line(coefs: &[f64], depth: u32, out: &mut [f64]) {
    let n = coefs.len();
    let mut s = vec![0.0; n];
    let mut next = vec![0.0; n];
    s[0] = coefs[0];
    for k in 0..depth {
        let half = 1usize << k;
        for j in 0..half {
            let (a, d) = (s[j], coefs[half + j]);
            next[2 * j] = (a + d) * FRAC_1_SQRT_2;
            next[2 * j + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        s[..2 * half].copy_from_slice(&next[..2 * half]);
    }
    let scale = pyramid::inv_sqrt_len(depth);
    for (o, v) in out.iter_mut().zip(&s) {
        *o = v * scale;
    }
}

/// Fast separable Haar analysis: one butterfly sweep per axis.
pub fn forward_transform(f: &GridFunction) -> HaarCoefficients {
    let spec = f.spec().clone();
    let mut data = f.array().clone();
    for (axis, &depth) in spec.depths().iter().enumerate() {
        data = pyramid::map_lanes(&data, axis, 1 << depth, |line, out| forward_line(line, depth, out));
    }
    HaarCoefficients { spec, data }
}

pub fn inverse_transform(coefs: &HaarCoefficients) -> GridFunction {
    let spec = coefs.spec.clone();
    let mut data = coefs.data.clone();
    for (axis, &depth) in spec.depths().iter().enumerate() {
        data = pyramid::map_lanes(&data, axis, 1 << depth, |line, out| inverse_line(line, depth, out));
    }
    GridFunction::from_array(spec, data).expect("shape preserved")
}

//! Product BMO norms of coefficient sequences and BMO-type quantities for functions.
//!
//! Suprema over open sets are taken over an explicit [`OmegaFamily`]; every
//! report carries the family descriptor so values are only compared within
//! one family.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haar::{self, HaarIndex};
use crate::lattice::{enumerate_rectangles, DyadicRectangle, GridFunction, GridSpec, OmegaFamily, OmegaSet};
use crate::maximal_square::{lp_norm, square_function, SquareMode};
use crate::pyramid::{self, AxisKernel};
use crate::rng::{rng_from_seed, split_seed};
use crate::weights::Weight;

/// Finitely supported scalars `a_R` on fully cancellative rectangles.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefSequence {
    spec: GridSpec,
    coefs: BTreeMap<DyadicRectangle, f64>,
}

#[derive(Serialize, Deserialize)]
struct CoefSequenceRepr {
    spec: GridSpec,
    coefs: BTreeMap<String, f64>,
}

impl Serialize for CoefSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CoefSequenceRepr {
            spec: self.spec.clone(),
            coefs: self.coefs.iter().map(|(r, v)| (r.to_string(), *v)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CoefSequenceRepr::deserialize(d)?;
        let mut out = CoefSequence::new(&repr.spec);
        for (k, v) in repr.coefs {
            let r = parse_rectangle(&repr.spec, &k).map_err(serde::de::Error::custom)?;
            out.insert(r, v).map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

/// Parse the `"t:k:j|…"` rendering of a rectangle.
pub fn parse_rectangle(spec: &GridSpec, s: &str) -> Result<DyadicRectangle> {
    let bad = || Error::InvalidArgument(format!("malformed rectangle {s:?}"));
    let ivs = s
        .split('|')
        .enumerate()
        .map(|(t, piece)| {
            let nums: Vec<u32> = piece.split(':').map(|x| x.parse().map_err(|_| bad())).collect::<Result<_>>()?;
            match nums[..] {
                [axis, k, j] if axis as usize == t && t < spec.param_count() => spec.interval(t, k, j),
                _ => Err(bad()),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let r = DyadicRectangle::new(ivs)?;
    spec.check_rect(&r)?;
    Ok(r)
}

impl CoefSequence {
    pub fn new(spec: &GridSpec) -> Self {
        Self { spec: spec.clone(), coefs: BTreeMap::new() }
    }

    pub fn from_entries(spec: &GridSpec, entries: impl IntoIterator<Item = (DyadicRectangle, f64)>) -> Result<Self> {
        let mut out = Self::new(spec);
        for (r, v) in entries {
            out.insert(r, v)?;
        }
        Ok(out)
    }

    /// Random values in `[-1,1]` on `support` distinct cancellative rectangles
    /// drawn uniformly (all of them if `support` exceeds the count).
    pub fn random(spec: &GridSpec, support: usize, seed: u64) -> Self {
        let cands: Vec<DyadicRectangle> =
            enumerate_rectangles(spec).into_iter().filter(|r| r.is_cancellative_on(spec)).collect();
        let mut rng = rng_from_seed(seed);
        let n = support.min(cands.len());
        let mut picks = index::sample(&mut rng, cands.len(), n).into_vec();
        picks.sort_unstable();
        let coefs = picks.into_iter().map(|i| (cands[i].clone(), rng.gen_range(-1.0..=1.0))).collect();
        Self { spec: spec.clone(), coefs }
    }

    pub fn insert(&mut self, rect: DyadicRectangle, value: f64) -> Result<()> {
        self.spec.check_rect(&rect)?;
        if !rect.is_cancellative_on(&self.spec) {
            return Err(Error::FinestScale(rect.to_string()));
        }
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("coefficient {value} is not finite")));
        }
        self.coefs.insert(rect, value);
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn get(&self, rect: &DyadicRectangle) -> f64 {
        self.coefs.get(rect).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DyadicRectangle, f64)> {
        self.coefs.iter().map(|(r, v)| (r, *v))
    }

    pub fn len(&self) -> usize {
        self.coefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    pub fn map_values(&self, f: impl Fn(&DyadicRectangle, f64) -> f64) -> Self {
        Self { spec: self.spec.clone(), coefs: self.coefs.iter().map(|(r, v)| (r.clone(), f(r, *v))).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_values(|_, v| c * v)
    }

    /// Interval-indexed tensor of the coefficients (zeros elsewhere).
    pub fn dense(&self) -> ArrayD<f64> {
        let mut out = ArrayD::zeros(IxDyn(&self.spec.rect_shape()));
        for (r, v) in &self.coefs {
            let idx: Vec<usize> = r.intervals().iter().map(|iv| iv.heap_index()).collect();
            out[IxDyn(&idx)] = *v;
        }
        out
    }

    /// `Σ_R a_R h_R`.
    pub fn synthesize(&self) -> GridFunction {
        let kernels = vec![AxisKernel::Haar; self.spec.param_count()];
        let arr = pyramid::synthesize(&self.dense(), self.spec.depths(), &kernels);
        GridFunction::from_array(self.spec.clone(), arr).expect("shape restored")
    }

    /// Fully cancellative Haar coefficients of `f`, dropping zeros.
    pub fn from_function(f: &GridFunction) -> Self {
        let spec = f.spec().clone();
        let coefs = haar::forward_transform(f)
            .cancellative()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        Self { spec, coefs }
    }
}

/// `S_A(x) = (Σ_R |a_R|^2 1_R(x)/|R|)^{1/2}`.
pub fn sa(a: &CoefSequence) -> GridFunction {
    let kernels = vec![AxisKernel::Average; a.spec.param_count()];
    let sq = pyramid::synthesize(&a.dense().mapv(|v| v * v), a.spec.depths(), &kernels);
    GridFunction::from_array(a.spec.clone(), sq.mapv(f64::sqrt)).expect("shape restored")
}

/// `S_{A,Ω}`: the square sum restricted to `R ⊆ Ω`.
pub fn sa_omega(a: &CoefSequence, omega: &OmegaSet) -> Result<GridFunction> {
    a.spec.ensure_same(omega.spec())?;
    let restricted = CoefSequence {
        spec: a.spec.clone(),
        coefs: a.coefs.iter().filter(|(r, _)| omega.contains(r)).map(|(r, v)| (r.clone(), *v)).collect(),
    };
    Ok(sa(&restricted))
}

/// Outcome of a supremum over an Ω family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BmoReport {
    pub norm: f64,
    pub omega_index: usize,
    pub omega: String,
    pub family: String,
    pub p: f64,
    pub weight: String,
}

struct SupportEntry<'a> {
    rect: &'a DyadicRectangle,
    cells: Vec<usize>,
    coef: f64,
}

fn support_entries(a: &CoefSequence) -> Vec<SupportEntry<'_>> {
    a.coefs
        .iter()
        .map(|(r, v)| SupportEntry { rect: r, cells: r.cells(&a.spec), coef: *v })
        .collect()
}

fn weight_values(w: Option<&Weight>) -> impl Fn(usize) -> f64 + '_ {
    move |c| w.map_or(1.0, |w| w.values()[c])
}

/// `(w(Ω)^{-1} ∫_Ω S_{A,Ω}^p w)^{1/p}`, with `buf` a cell-sized scratch vector.
fn quotient(
    spec: &GridSpec,
    support: &[SupportEntry<'_>],
    omega: &OmegaSet,
    p: f64,
    w: Option<&Weight>,
    buf: &mut [f64],
) -> f64 {
    let wt = weight_values(w);
    let cells = omega.cells();
    for &c in cells {
        buf[c] = 0.0;
    }
    for e in support.iter().filter(|e| omega.contains(e.rect)) {
        let v = e.coef * e.coef / e.rect.measure();
        for &c in &e.cells {
            buf[c] += v;
        }
    }
    let terms: Vec<f64> = cells.iter().map(|&c| buf[c].powf(p / 2.0) * wt(c)).collect();
    let mass: Vec<f64> = cells.iter().map(|&c| wt(c)).collect();
    let vol = spec.cell_volume();
    ((pyramid::pairwise_sum(&terms) * vol) / (pyramid::pairwise_sum(&mass) * vol)).powf(1.0 / p)
}

fn check_bmo_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange(p))
    }
}

fn sup_report(values: Vec<f64>, family: &OmegaFamily, p: f64, weight: String) -> BmoReport {
    let (idx, norm) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    BmoReport {
        norm,
        omega_index: idx,
        omega: family.sets[idx].descriptor(),
        family: family.descriptor.clone(),
        p,
        weight,
    }
}

fn bmo_impl(a: &CoefSequence, p: f64, w: Option<&Weight>, family: &OmegaFamily) -> Result<BmoReport> {
    check_bmo_exponent(p)?;
    if family.sets.is_empty() {
        return Err(Error::EmptyFamily);
    }
    for om in &family.sets {
        a.spec.ensure_same(om.spec())?;
    }
    if let Some(w) = w {
        a.spec.ensure_same(w.spec())?;
    }
    let support = support_entries(a);
    let n = a.spec.cell_count();
    let values: Vec<f64> = family
        .sets
        .par_iter()
        .map_init(|| vec![0.0; n], |buf, om| quotient(&a.spec, &support, om, p, w, buf))
        .collect();
    let desc = match w {
        None => "none".to_string(),
        Some(w) if w.is_unit() => "unit".to_string(),
        Some(_) => "weighted".to_string(),
    };
    Ok(sup_report(values, family, p, desc))
}

/// `sup_Ω |Ω|^{-1/p} ‖S_{A,Ω}‖_{L^p}`.
pub fn bmo_prod(a: &CoefSequence, p: f64, family: &OmegaFamily) -> Result<BmoReport> {
    bmo_impl(a, p, None, family)
}

/// `sup_Ω w(Ω)^{-1/p} ‖S_{A,Ω}‖_{L^p(w)}`; shares its arithmetic with
/// [`bmo_prod`], so `w ≡ 1` reproduces it bit for bit.
pub fn bmo_prod_w(a: &CoefSequence, p: f64, w: &Weight, family: &OmegaFamily) -> Result<BmoReport> {
    bmo_impl(a, p, Some(w), family)
}

/// The quotient of a single Ω, as maximised by [`bmo_prod_w`].
pub fn omega_quotient(a: &CoefSequence, p: f64, w: Option<&Weight>, omega: &OmegaSet) -> Result<f64> {
    check_bmo_exponent(p)?;
    a.spec.ensure_same(omega.spec())?;
    let support = support_entries(a);
    let mut buf = vec![0.0; a.spec.cell_count()];
    Ok(quotient(&a.spec, &support, omega, p, w, &mut buf))
}

/// `sup_Ω (w(Ω)^{-1} Σ_{R⊆Ω} |a_R|^2 / ⟨w⟩_R)^{1/2}`.
pub fn bmo_prod_weighted(a: &CoefSequence, w: &Weight, family: &OmegaFamily) -> Result<BmoReport> {
    if family.sets.is_empty() {
        return Err(Error::EmptyFamily);
    }
    a.spec.ensure_same(w.spec())?;
    let entries: Vec<(&DyadicRectangle, f64)> = a.iter().map(|(r, v)| (r, v * v / w.average(r))).collect();
    let values: Vec<f64> = family
        .sets
        .par_iter()
        .map(|om| {
            let terms: Vec<f64> = entries.iter().filter(|(r, _)| om.contains(r)).map(|(_, t)| *t).collect();
            (pyramid::pairwise_sum(&terms) / w.omega_mass(om)).sqrt()
        })
        .collect();
    let desc = if w.is_unit() { "unit" } else { "weighted" };
    Ok(sup_report(values, family, 2.0, desc.into()))
}

/// `A_w = (a_R ⟨w⟩_R)_R`.
pub fn lift_aw(a: &CoefSequence, w: &Weight) -> Result<CoefSequence> {
    a.spec.ensure_same(w.spec())?;
    Ok(a.map_values(|r, v| v * w.average(r)))
}

/// Both sides of the weighted H¹-BMO pairing bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairingReport {
    /// `Σ_R |a_R| ⟨w⟩_R |b_R|`.
    pub lhs: f64,
    /// `‖A‖_{BMO_prod}` at `p = 2` over the family.
    pub bmo: f64,
    /// `‖S_B‖_{L^1(w)}`.
    pub sb_l1: f64,
}

impl PairingReport {
    pub fn rhs(&self) -> f64 {
        self.bmo * self.sb_l1
    }

    /// `lhs / rhs`, with `0/0 = 0`.
    pub fn ratio(&self) -> f64 {
        ratio_or_zero(self.lhs, self.rhs())
    }
}

pub(crate) fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn h1_bmo_pairing(a: &CoefSequence, b: &CoefSequence, w: &Weight, family: &OmegaFamily) -> Result<PairingReport> {
    a.spec.ensure_same(&b.spec)?;
    a.spec.ensure_same(w.spec())?;
    let terms: Vec<f64> = b.iter().map(|(r, bv)| a.get(r).abs() * w.average(r) * bv.abs()).collect();
    Ok(PairingReport {
        lhs: pyramid::pairwise_sum(&terms),
        bmo: bmo_prod(a, 2.0, family)?.norm,
        sb_l1: lp_norm(&sa(b), 1.0, Some(w))?,
    })
}

/// `sup_R ν(R)^{-1} ∫_R |b - ⟨b⟩_R|`.
pub fn little_bmo_bloom(b: &GridFunction, nu: &Weight) -> Result<f64> {
    b.spec().ensure_same(nu.spec())?;
    let spec = b.spec();
    let avgs = b.rect_averages();
    let avgs = avgs.as_slice().expect("standard layout");
    let rects = enumerate_rectangles(spec);
    let vals: Vec<f64> = rects
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mean = avgs[i];
            let dev: Vec<f64> = r.cells(spec).into_iter().map(|c| (b.values()[c] - mean).abs()).collect();
            pyramid::pairwise_sum(&dev) * spec.cell_volume() / nu.mass(r)
        })
        .collect();
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Test functions for sampled dual-norm lower bounds: single atoms and random
/// Haar polynomials, cancellative on the selected axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSampler {
    pub atoms: usize,
    pub polynomials: usize,
    pub terms: usize,
    pub seed: u64,
}

impl DualSampler {
    /// Atom `⊗_{t∈S} h_{I_t} ⊗_{t∉S} h⁰_{I_t}` on a rectangle cancellative on `S`.
    fn atom(spec: &GridSpec, axes: &[bool], rng: &mut crate::rng::Rng) -> Result<GridFunction> {
        let pairs: Vec<(u32, u32)> = (0..spec.param_count())
            .map(|t| {
                let top = if axes[t] { spec.depth(t) - 1 } else { spec.depth(t) };
                let k = rng.gen_range(0..=top);
                (k, rng.gen_range(0..1u32 << k))
            })
            .collect();
        let r = DyadicRectangle::from_pairs(&pairs)?;
        haar::haar_tensor(spec, &r, HaarIndex::from_bits(axes))
    }

    pub fn samples(&self, spec: &GridSpec, axes: &[bool]) -> Result<Vec<GridFunction>> {
        let mut out = Vec::with_capacity(self.atoms + self.polynomials);
        for i in 0..self.atoms {
            let mut rng = rng_from_seed(split_seed(self.seed, i as u64));
            out.push(Self::atom(spec, axes, &mut rng)?);
        }
        for i in 0..self.polynomials {
            let mut rng = rng_from_seed(split_seed(split_seed(self.seed, u64::MAX), i as u64));
            let mut f = GridFunction::zeros(spec);
            for _ in 0..self.terms.max(1) {
                let c = rng.gen_range(-1.0..=1.0);
                f = f.add(&Self::atom(spec, axes, &mut rng)?.scale(c))?;
            }
            out.push(f);
        }
        Ok(out)
    }
}

/// `max_f |⟨b,f⟩| / ‖S^S f‖_{L^1(ν)}` over sampled `f`; a lower bound for the
/// dual norm. Samples with `S^S f ≡ 0` are skipped.
pub fn dual_bmo_lower(b: &GridFunction, nu: &Weight, axes: &[usize], sampler: &DualSampler) -> Result<f64> {
    let spec = b.spec();
    spec.ensure_same(nu.spec())?;
    let mode = SquareMode::axes(axes);
    let mut sel = vec![false; spec.param_count()];
    for &t in axes {
        if t >= sel.len() {
            return Err(Error::InvalidArgument(format!("axis {t} out of range")));
        }
        sel[t] = true;
    }
    // Samples have mean zero along every selected axis, so removing the
    // axis means of b leaves the pairing unchanged and makes constants pair to 0 exactly.
    let mut centred = b.array().clone();
    for &t in axes {
        let n = centred.shape()[t];
        centred = pyramid::map_lanes(&centred, t, n, |line, out| {
            let mean = pyramid::pairwise_sum(line) / n as f64;
            for (o, v) in out.iter_mut().zip(line) {
                *o = v - mean;
            }
        });
    }
    let centred = GridFunction::from_array(spec.clone(), centred)?;
    let mut best = 0.0f64;
    for f in sampler.samples(spec, &sel)? {
        let den = lp_norm(&square_function(&f, &mode)?, 1.0, Some(nu))?;
        if den == 0.0 {
            continue;
        }
        best = best.max(centred.inner(&f)?.abs() / den);
    }
    Ok(best)
}

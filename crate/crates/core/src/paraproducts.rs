//! Linear and bilinear bi-parameter paraproducts, the tri-parameter partial
//! paraproduct `P`, the martingale paraproducts `A^i_j`, and the operator `U`.
//!
//! Every operator is a sum over interval tensors of products of per-axis
//! pairings, so each one is evaluated as: analyse the inputs with one kernel
//! per axis, multiply coefficient arrays, synthesise with one kernel per axis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ndarray::{ArrayD, IxDyn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bmo::{bmo_prod, parse_rectangle, CoefSequence};
use crate::error::{Error, Result};
use crate::lattice::{DyadicInterval, GridFunction, GridSpec, OmegaFamily, OmegaStrategy};
use crate::maximal_square::lp_norm;
use crate::pyramid::{self, AxisKernel};
use crate::rng::{rng_from_seed, split_seed};
use crate::weights::Weight;

/// `Π_A f = Σ_R a_R ⟨f⟩_R h_R`.
pub fn linear_paraproduct(a: &CoefSequence, f: &GridFunction) -> Result<GridFunction> {
    let spec = a.spec();
    spec.ensure_same(f.spec())?;
    let m = spec.param_count();
    let avg = pyramid::analyze(f.array(), spec.depths(), &vec![AxisKernel::Average; m]);
    let coefs = &a.dense() * &avg;
    let out = pyramid::synthesize(&coefs, spec.depths(), &vec![AxisKernel::Haar; m]);
    GridFunction::from_array(spec.clone(), out)
}

/// Where the cancellative Haar factor of one axis sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    F1,
    F2,
    Output,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::F1, Slot::F2, Slot::Output];
}

/// One of the nine bilinear bi-parameter full paraproducts, named by the slot
/// holding `h_I` (axis 0) and the slot holding `h_J` (axis 1). Every other
/// slot carries the normalised indicator `1_I/|I|` or `1_J/|J|`.
///
/// `{ axis0: F1, axis1: Output }` is
/// `Σ a_R ⟨f_1, h_I ⊗ 1_J/|J|⟩ ⟨f_2⟩_R 1_I/|I| ⊗ h_J`, and
/// `{ axis0: F1, axis1: F2 }` is
/// `Σ a_R ⟨f_1, h_I ⊗ 1_J/|J|⟩ ⟨f_2, 1_I/|I| ⊗ h_J⟩ 1_R/|R|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FullParaproductSymmetry {
    pub axis0: Slot,
    pub axis1: Slot,
}

impl FullParaproductSymmetry {
    pub fn all() -> Vec<Self> {
        Slot::ALL
            .iter()
            .flat_map(|&a| Slot::ALL.iter().map(move |&b| Self { axis0: a, axis1: b }))
            .collect()
    }

    fn slots(&self) -> [Slot; 2] {
        [self.axis0, self.axis1]
    }

    fn kernel(slot: Slot, which: Slot) -> AxisKernel {
        if slot == which {
            AxisKernel::Haar
        } else {
            AxisKernel::Average
        }
    }
}

impl fmt::Display for FullParaproductSymmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}", self.axis0, self.axis1)
    }
}

/// Bilinear full paraproduct of the given symmetry.
pub fn full_paraproduct(
    a: &CoefSequence,
    f1: &GridFunction,
    f2: &GridFunction,
    sym: FullParaproductSymmetry,
) -> Result<GridFunction> {
    let spec = a.spec();
    if spec.param_count() != 2 {
        return Err(Error::InvalidArgument("full paraproducts are bi-parameter".into()));
    }
    spec.ensure_same(f1.spec())?;
    spec.ensure_same(f2.spec())?;
    let slots = sym.slots();
    let k1: Vec<_> = slots.iter().map(|&s| FullParaproductSymmetry::kernel(s, Slot::F1)).collect();
    let k2: Vec<_> = slots.iter().map(|&s| FullParaproductSymmetry::kernel(s, Slot::F2)).collect();
    let ko: Vec<_> = slots.iter().map(|&s| FullParaproductSymmetry::kernel(s, Slot::Output)).collect();
    let c1 = pyramid::analyze(f1.array(), spec.depths(), &k1);
    let c2 = pyramid::analyze(f2.array(), spec.depths(), &k2);
    let coefs = &(&a.dense() * &c1) * &c2;
    GridFunction::from_array(spec.clone(), pyramid::synthesize(&coefs, spec.depths(), &ko))
}

/// Sampled operator-norm statistics of a full paraproduct.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FullParaproductBound {
    /// `‖A‖_{BMO_prod}` before normalisation.
    pub bmo: f64,
    /// `sup ‖Π(f_1,f_2)‖_{L^r(w)} / (‖f_1‖_{L^p(w_1)} ‖f_2‖_{L^q(w_2)})`.
    pub sup_ratio: f64,
    /// Sup of `Σ_R |a_R| |⟨f_1,φ¹_R⟩| |⟨f_2,φ²_R⟩| ‖φ^out_R‖_{L^1(w)}` over the same
    /// denominator; the weighted `L^1` majorant of the operator.
    pub sup_dual_ratio: f64,
    pub samples: usize,
}

/// Samples `(f_1, f_2)` with iid uniform `[-1,1]` cell values and records the
/// bound ratios for `A / ‖A‖_{BMO_prod}`, with `w = w_1^{r/p} w_2^{r/q}`.
#[allow(clippy::too_many_arguments)]
pub fn full_paraproduct_bound_report(
    a: &CoefSequence,
    w1: &Weight,
    w2: &Weight,
    p: f64,
    q: f64,
    r: f64,
    sym: FullParaproductSymmetry,
    samples: usize,
    seed: u64,
) -> Result<FullParaproductBound> {
    for e in [p, q] {
        if !(e > 1.0 && e.is_finite()) {
            return Err(Error::ExponentOutOfRange(e));
        }
    }
    if r.is_nan() || r <= 0.5 || (1.0 / r - 1.0 / p - 1.0 / q).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("exponents must satisfy 1/r = 1/p + 1/q, got p={p}, q={q}, r={r}")));
    }
    let spec = a.spec();
    spec.ensure_same(w1.spec())?;
    spec.ensure_same(w2.spec())?;
    let family = OmegaFamily::build(spec, &OmegaStrategy::AllRectangles, 0)?;
    let bmo = bmo_prod(a, 2.0, &family)?.norm;
    if bmo == 0.0 {
        return Ok(FullParaproductBound { bmo, sup_ratio: 0.0, sup_dual_ratio: 0.0, samples });
    }
    let a = a.scale(1.0 / bmo);
    let w = Weight::new(w1.function().zip_map(w2.function(), |x, y| x.powf(r / p) * y.powf(r / q))?)?;

    let slots = sym.slots();
    let k1: Vec<_> = slots.iter().map(|&s| FullParaproductSymmetry::kernel(s, Slot::F1)).collect();
    let k2: Vec<_> = slots.iter().map(|&s| FullParaproductSymmetry::kernel(s, Slot::F2)).collect();
    // ‖φ^out_R‖_{L^1(w)} = w(R) Π_t |I_t|^{-1/2 or -1}.
    let out_l1: ArrayD<f64> = {
        let mut arr = w.rect_averages().clone();
        for (idx, v) in arr.indexed_iter_mut() {
            let mut scale = 1.0;
            for (t, slot) in slots.iter().enumerate() {
                let k = pyramid::heap_scale(idx[t]);
                scale *= if *slot == Slot::Output { pyramid::inv_sqrt_len(k) } else { 1.0 };
            }
            *v *= scale;
        }
        arr
    };

    let mut sup_ratio = 0.0f64;
    let mut sup_dual = 0.0f64;
    for i in 0..samples {
        let f1 = GridFunction::random(spec, split_seed(seed, 2 * i as u64));
        let f2 = GridFunction::random(spec, split_seed(seed, 2 * i as u64 + 1));
        let den = lp_norm(&f1, p, Some(w1))? * lp_norm(&f2, q, Some(w2))?;
        let out = full_paraproduct(&a, &f1, &f2, sym)?;
        sup_ratio = sup_ratio.max(lp_norm(&out, r, Some(&w))? / den);
        let c1 = pyramid::analyze(f1.array(), spec.depths(), &k1);
        let c2 = pyramid::analyze(f2.array(), spec.depths(), &k2);
        let dense = a.dense();
        let terms: Vec<f64> = dense
            .iter()
            .zip(c1.iter())
            .zip(c2.iter())
            .zip(out_l1.iter())
            .filter(|(((a, _), _), _)| **a != 0.0)
            .map(|(((a, x), y), o)| a.abs() * x.abs() * y.abs() * o)
            .collect();
        sup_dual = sup_dual.max(pyramid::pairwise_sum(&terms) / den);
    }
    Ok(FullParaproductBound { bmo, sup_ratio, sup_dual_ratio: sup_dual, samples })
}

/// Index of one coefficient block of a partial paraproduct: `I_1^{(i_1)} = J_1^{(j_1)} = K_1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartialBlock {
    pub k1: DyadicInterval,
    pub i1: DyadicInterval,
    pub j1: DyadicInterval,
}

impl fmt::Display for PartialBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{};{}", self.k1, self.i1, self.j1)
    }
}

/// Coefficients `a_{(K_j), I_1, J_1}` of a tri-parameter partial paraproduct.
///
/// Each block carries a sequence over `(K_2, K_3)` on the grid of axes 1 and 2.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialParaproductCoefs {
    spec: GridSpec,
    inner_spec: GridSpec,
    i1: u32,
    j1: u32,
    blocks: BTreeMap<PartialBlock, CoefSequence>,
}

#[derive(Serialize, Deserialize)]
struct PartialRepr {
    spec: GridSpec,
    i1: u32,
    j1: u32,
    blocks: BTreeMap<String, CoefSequence>,
}

impl Serialize for PartialParaproductCoefs {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PartialRepr {
            spec: self.spec.clone(),
            i1: self.i1,
            j1: self.j1,
            blocks: self.blocks.iter().map(|(b, c)| (b.to_string(), c.clone())).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartialParaproductCoefs {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = PartialRepr::deserialize(d)?;
        let mut out = PartialParaproductCoefs::new(&r.spec, r.i1, r.j1).map_err(D::Error::custom)?;
        let axis0 = GridSpec::new(&[r.spec.depth(0)]).map_err(D::Error::custom)?;
        for (key, seq) in r.blocks {
            let ivs = key
                .split(';')
                .map(|s| parse_rectangle(&axis0, s).map(|rect| rect.interval(0)))
                .collect::<Result<Vec<_>>>()
                .map_err(D::Error::custom)?;
            if ivs.len() != 3 {
                return Err(D::Error::custom(format!("malformed block key {key:?}")));
            }
            out.insert(PartialBlock { k1: ivs[0], i1: ivs[1], j1: ivs[2] }, seq).map_err(D::Error::custom)?;
        }
        Ok(out)
    }
}

impl PartialParaproductCoefs {
    pub fn new(spec: &GridSpec, i1: u32, j1: u32) -> Result<Self> {
        if spec.param_count() != 3 {
            return Err(Error::InvalidArgument("partial paraproducts are tri-parameter".into()));
        }
        let cap = spec.depth(0) - 1;
        if i1.max(j1) > cap {
            return Err(Error::InvalidArgument(format!(
                "complexity ({i1},{j1}) exceeds the cap {cap} for axis-0 depth {}",
                spec.depth(0)
            )));
        }
        Ok(Self { spec: spec.clone(), inner_spec: spec.sub_spec(&[1, 2])?, i1, j1, blocks: BTreeMap::new() })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Grid of axes 1 and 2 on which the inner sequences live.
    pub fn inner_spec(&self) -> &GridSpec {
        &self.inner_spec
    }

    pub fn complexity(&self) -> (u32, u32) {
        (self.i1, self.j1)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&PartialBlock, &CoefSequence)> {
        self.blocks.iter()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn insert(&mut self, block: PartialBlock, seq: CoefSequence) -> Result<()> {
        let n1 = self.spec.depth(0);
        let PartialBlock { k1, i1, j1 } = block;
        let ok = [k1, i1, j1].iter().all(|iv| iv.axis == 0 && iv.pos < (1 << iv.scale))
            && i1.scale < n1
            && j1.scale < n1
            && i1.ancestor(self.i1) == Some(k1)
            && j1.ancestor(self.j1) == Some(k1);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "block {block} does not satisfy I1^({}) = J1^({}) = K1 below depth {n1}",
                self.i1, self.j1
            )));
        }
        self.inner_spec.ensure_same(seq.spec())?;
        self.blocks.insert(block, seq);
        Ok(())
    }

    /// `|I_1|^{1/2} |J_1|^{1/2} / |K_1|`.
    pub fn block_bound(&self, block: &PartialBlock) -> f64 {
        (block.i1.len() * block.j1.len()).sqrt() / block.k1.len()
    }

    /// Every inner sequence has `‖·‖_{BMO_prod}` (p = 2, all rectangles) at
    /// most its block bound.
    pub fn check_normalization(&self) -> Result<()> {
        let family = OmegaFamily::build(&self.inner_spec, &OmegaStrategy::AllRectangles, 0)?;
        for (block, seq) in &self.blocks {
            let norm = bmo_prod(seq, 2.0, &family)?.norm;
            let bound = self.block_bound(block);
            if norm > bound * (1.0 + 1e-12) {
                return Err(Error::Normalization { block: block.to_string(), norm, bound });
            }
        }
        Ok(())
    }

    /// Every inner sequence multiplied by `c`.
    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        for seq in out.blocks.values_mut() {
            *seq = seq.scale(c);
        }
        out
    }

    /// `G[J_1, K_2, K_3] = Σ_blocks a · F[I_1, K_2, K_3]` over interval-indexed arrays.
    pub(crate) fn apply_blocks(&self, input: &ArrayD<f64>) -> ArrayD<f64> {
        let mut out = ArrayD::zeros(input.raw_dim());
        for (block, seq) in &self.blocks {
            let (ii, jj) = (block.i1.heap_index(), block.j1.heap_index());
            for (rect, a) in seq.iter() {
                let (k2, k3) = (rect.interval(0).heap_index(), rect.interval(1).heap_index());
                out[IxDyn(&[jj, k2, k3])] += a * input[IxDyn(&[ii, k2, k3])];
            }
        }
        out
    }

    /// Same as [`Self::apply_blocks`] with a per-entry factor `γ(block, K_2, K_3)`.
    pub(crate) fn apply_blocks_with(
        &self,
        input: &ArrayD<f64>,
        mut gamma: impl FnMut(&PartialBlock, usize, usize) -> f64,
    ) -> ArrayD<f64> {
        let mut out = ArrayD::zeros(input.raw_dim());
        for (block, seq) in &self.blocks {
            let (ii, jj) = (block.i1.heap_index(), block.j1.heap_index());
            for (rect, a) in seq.iter() {
                let (k2, k3) = (rect.interval(0).heap_index(), rect.interval(1).heap_index());
                out[IxDyn(&[jj, k2, k3])] += a * gamma(block, k2, k3) * input[IxDyn(&[ii, k2, k3])];
            }
        }
        out
    }
}

/// Input pairing of `P`: `⟨f, h_{I_1} ⊗ h_{K_2} ⊗ 1_{K_3}/|K_3|⟩`.
pub(crate) const P_INPUT: [AxisKernel; 3] = [AxisKernel::Haar, AxisKernel::Haar, AxisKernel::Average];
/// Output profile of `P`: `h_{J_1} ⊗ 1_{K_2}/|K_2| ⊗ h_{K_3}`.
pub(crate) const P_OUTPUT: [AxisKernel; 3] = [AxisKernel::Haar, AxisKernel::Average, AxisKernel::Haar];

/// The tri-parameter partial paraproduct `Pf`.
pub fn partial_paraproduct(c: &PartialParaproductCoefs, f: &GridFunction) -> Result<GridFunction> {
    let spec = c.spec();
    spec.ensure_same(f.spec())?;
    let fa = pyramid::analyze(f.array(), spec.depths(), &P_INPUT);
    let g = c.apply_blocks(&fa);
    GridFunction::from_array(spec.clone(), pyramid::synthesize(&g, spec.depths(), &P_OUTPUT))
}

/// Support size of each generated inner sequence.
pub const INNER_SUPPORT: usize = 6;

/// Random coefficients with `block_count` distinct blocks; each inner sequence
/// is rescaled to a uniform factor in `[1/2, 1]` of its block bound.
pub fn generate_partial_coefs(
    spec: &GridSpec,
    i1: u32,
    j1: u32,
    block_count: usize,
    seed: u64,
) -> Result<PartialParaproductCoefs> {
    let mut out = PartialParaproductCoefs::new(spec, i1, j1)?;
    let n1 = spec.depth(0);
    let top = n1 - 1 - i1.max(j1);
    let family = OmegaFamily::build(out.inner_spec(), &OmegaStrategy::AllRectangles, 0)?;
    let mut rng = rng_from_seed(seed);
    let mut seen = BTreeSet::new();
    let mut attempts = 0usize;
    while out.block_count() < block_count && attempts < 64 * block_count.max(1) {
        attempts += 1;
        let k = rng.gen_range(0..=top);
        let k1 = DyadicInterval { axis: 0, scale: k, pos: rng.gen_range(0..1u32 << k) };
        let i1_iv = DyadicInterval { axis: 0, scale: k + i1, pos: (k1.pos << i1) + rng.gen_range(0..1u32 << i1) };
        let j1_iv = DyadicInterval { axis: 0, scale: k + j1, pos: (k1.pos << j1) + rng.gen_range(0..1u32 << j1) };
        let block = PartialBlock { k1, i1: i1_iv, j1: j1_iv };
        if !seen.insert(block) {
            continue;
        }
        let seq = CoefSequence::random(out.inner_spec(), INNER_SUPPORT, split_seed(seed, seen.len() as u64));
        let norm = bmo_prod(&seq, 2.0, &family)?.norm;
        let factor = rng.gen_range(0.5..=1.0);
        let seq = seq.scale(factor * out.block_bound(&block) / norm);
        out.insert(block, seq)?;
    }
    Ok(out)
}

/// Per-axis kernels `(b, f, output)` of the martingale paraproduct of kind `j`:
/// `1: Σ Δb Δf`, `2: Σ Δb Ef`, `3: Σ Eb Δf`, `0: E_top b E_top f` (the coarse term).
fn kind_kernels(j: u8) -> Result<(AxisKernel, AxisKernel, AxisKernel)> {
    use AxisKernel::*;
    match j {
        0 => Ok((Average, Average, Indicator)),
        1 => Ok((Haar, Haar, Average)),
        2 => Ok((Haar, Average, Haar)),
        3 => Ok((Average, Haar, Haar)),
        _ => Err(Error::InvalidArgument(format!("paraproduct kind {j} not in 0..=3"))),
    }
}

/// Composition of one-axis martingale paraproducts over distinct axes.
///
/// Summing over all kinds `0..=3` on every listed axis reproduces `b f` exactly.
pub fn martingale_paraproduct(b: &GridFunction, f: &GridFunction, axes: &[(usize, u8)]) -> Result<GridFunction> {
    let spec = b.spec();
    spec.ensure_same(f.spec())?;
    let m = spec.param_count();
    let mut kb = vec![AxisKernel::Identity; m];
    let mut kf = vec![AxisKernel::Identity; m];
    let mut ko = vec![AxisKernel::Identity; m];
    let mut top_only = vec![false; m];
    for &(axis, j) in axes {
        if axis >= m {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range for {m} parameters")));
        }
        if kb[axis] != AxisKernel::Identity {
            return Err(Error::InvalidArgument(format!("axis {axis} listed twice")));
        }
        (kb[axis], kf[axis], ko[axis]) = kind_kernels(j)?;
        top_only[axis] = j == 0;
    }
    let bb = pyramid::analyze(b.array(), spec.depths(), &kb);
    let ff = pyramid::analyze(f.array(), spec.depths(), &kf);
    let mut prod = &bb * &ff;
    if top_only.iter().any(|&t| t) {
        for (idx, v) in prod.indexed_iter_mut() {
            if (0..m).any(|t| top_only[t] && idx[t] != 0) {
                *v = 0.0;
            }
        }
    }
    GridFunction::from_array(spec.clone(), pyramid::synthesize(&prod, spec.depths(), &ko))
}

/// `A^i_j(b, f)` for `j ∈ {1,2,3}`; `j = 0` gives the coarse term `E^i_top b E^i_top f`.
pub fn aij(b: &GridFunction, f: &GridFunction, axis: usize, j: u8) -> Result<GridFunction> {
    martingale_paraproduct(b, f, &[(axis, j)])
}

/// `A^{i_1,i_2}_{j_1,j_2}(b, f)`.
pub fn aij2(b: &GridFunction, f: &GridFunction, first: (usize, u8), second: (usize, u8)) -> Result<GridFunction> {
    if first.0 == second.0 {
        return Err(Error::InvalidArgument("composed paraproducts need distinct axes".into()));
    }
    martingale_paraproduct(b, f, &[first, second])
}

/// `Ug = Σ_{V_1,V_3} h_{V_1} ⊗ (S_{D^2}⟨g, h_{V_1} ⊗ h_{V_3}⟩_{1,3}) ⟨ν⟩^{1,3}_{V_1×V_3} ⊗ h_{V_3}`.
pub fn operator_u(g: &GridFunction, nu: &Weight) -> Result<GridFunction> {
    let spec = g.spec();
    if spec.param_count() != 3 {
        return Err(Error::InvalidArgument("U is tri-parameter".into()));
    }
    spec.ensure_same(nu.spec())?;
    use AxisKernel::*;
    let d = spec.depths();
    let coef = pyramid::analyze(g.array(), d, &[Haar, Identity, Haar]);
    // One-parameter square function along axis 1 for every (V_1, V_3).
    let c2 = pyramid::analyze(&coef, d, &[Identity, Haar, Identity]);
    let s2 = pyramid::synthesize(&c2.mapv(|v| v * v), d, &[Identity, Average, Identity]).mapv(f64::sqrt);
    let nu13 = pyramid::analyze(nu.function().array(), d, &[Average, Identity, Average]);
    let out = pyramid::synthesize(&(&s2 * &nu13), d, &[Haar, Identity, Haar]);
    GridFunction::from_array(spec.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::{haar_function, haar_tensor, HaarIndex};
    use crate::lattice::{enumerate_rectangles, DyadicRectangle};
    use crate::weights::{generate_weight, WeightRecipe};

    fn spec(d: &[u32]) -> GridSpec {
        GridSpec::new(d).unwrap()
    }

    /// `1_I/|I|` or `h_I` on a one-parameter grid.
    fn profile(depth: u32, iv: &DyadicInterval, haar: bool) -> GridFunction {
        let iv0 = DyadicInterval { axis: 0, ..*iv };
        if haar {
            haar_function(depth, &iv0, true).unwrap()
        } else {
            let s = GridSpec::new(&[depth]).unwrap();
            GridFunction::from_fn(&s, |c| if iv0.contains_cell(depth, c[0]) { 1.0 / iv0.len() } else { 0.0 })
        }
    }

    fn tensor(depths: &[u32], parts: &[(DyadicInterval, bool)]) -> GridFunction {
        let fs: Vec<_> = parts.iter().zip(depths).map(|((iv, h), &d)| profile(d, iv, *h)).collect();
        GridFunction::tensor(&fs).unwrap()
    }

    fn full_oracle(a: &CoefSequence, f1: &GridFunction, f2: &GridFunction, sym: FullParaproductSymmetry) -> GridFunction {
        let s = a.spec();
        let d = s.depths();
        let slots = sym.slots();
        let mut acc = GridFunction::zeros(s);
        for (r, v) in a.iter() {
            let parts = |which: Slot| -> Vec<(DyadicInterval, bool)> {
                (0..2).map(|t| (r.interval(t), slots[t] == which)).collect()
            };
            let p1 = f1.inner(&tensor(d, &parts(Slot::F1))).unwrap();
            let p2 = f2.inner(&tensor(d, &parts(Slot::F2))).unwrap();
            acc = acc.add(&tensor(d, &parts(Slot::Output)).scale(v * p1 * p2)).unwrap();
        }
        acc
    }

    #[test]
    fn linear_paraproduct_examples() {
        let s = spec(&[3, 2]);
        let r0 = DyadicRectangle::from_pairs(&[(1, 1), (0, 0)]).unwrap();
        let a = CoefSequence::from_entries(&s, [(r0.clone(), 0.7)]).unwrap();
        let out = linear_paraproduct(&a, &GridFunction::constant(&s, 1.0)).unwrap();
        let want = haar_tensor(&s, &r0, HaarIndex::cancellative(2)).unwrap().scale(0.7);
        assert!(out.max_abs_diff(&want) < 1e-15);
        let f = GridFunction::random(&s, 2);
        assert_eq!(linear_paraproduct(&CoefSequence::new(&s), &f).unwrap().max_abs(), 0.0);

        let a = CoefSequence::random(&s, 10, 3);
        let out = linear_paraproduct(&a, &f).unwrap();
        let coefs = CoefSequence::from_function(&out);
        for r in enumerate_rectangles(&s).into_iter().filter(|r| r.is_cancellative_on(&s)) {
            let want = a.get(&r) * crate::lattice::average(&f, &r).unwrap();
            assert!((coefs.get(&r) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn full_paraproduct_matches_oracle() {
        let s = spec(&[2, 2]);
        for seed in 0..20u64 {
            let a = CoefSequence::random(&s, 5, seed);
            let f1 = GridFunction::random(&s, 100 + seed);
            let f2 = GridFunction::random(&s, 200 + seed);
            for sym in FullParaproductSymmetry::all() {
                let got = full_paraproduct(&a, &f1, &f2, sym).unwrap();
                assert!(got.max_abs_diff(&full_oracle(&a, &f1, &f2, sym)) < 1e-12, "{sym}");
            }
        }
        assert_eq!(FullParaproductSymmetry::all().len(), 9);
    }

    #[test]
    fn full_paraproduct_properties() {
        let s = spec(&[3, 2]);
        let a = CoefSequence::random(&s, 8, 1);
        let f1 = GridFunction::random(&s, 2);
        let f2 = GridFunction::random(&s, 3);
        let g = GridFunction::random(&s, 4);
        let one = GridFunction::constant(&s, 1.0);
        for sym in FullParaproductSymmetry::all() {
            if sym.axis0 == Slot::F1 || sym.axis1 == Slot::F1 {
                assert!(full_paraproduct(&a, &one, &f2, sym).unwrap().max_abs() < 1e-15);
            }
            let lhs = full_paraproduct(&a, &f1.scale(2.0).add(&g).unwrap(), &f2, sym).unwrap();
            let rhs = full_paraproduct(&a, &f1, &f2, sym).unwrap().scale(2.0).add(&full_paraproduct(&a, &g, &f2, sym).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-13);
            let lhs = full_paraproduct(&a, &f1, &f2.sub(&g).unwrap(), sym).unwrap();
            let rhs = full_paraproduct(&a, &f1, &f2, sym).unwrap().sub(&full_paraproduct(&a, &f1, &g, sym).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-13);
        }
    }

    #[test]
    fn full_paraproduct_single_tensor_closed_form() {
        let s = spec(&[3, 3]);
        let r0 = DyadicRectangle::from_pairs(&[(1, 0), (2, 3)]).unwrap();
        let a = CoefSequence::from_entries(&s, [(r0.clone(), 1.5)]).unwrap();
        let s1 = spec(&[3]);
        let (u1, v1, u2, v2) = (
            GridFunction::random(&s1, 1),
            GridFunction::random(&s1, 2),
            GridFunction::random(&s1, 3),
            GridFunction::random(&s1, 4),
        );
        let f1 = GridFunction::tensor(&[u1.clone(), v1.clone()]).unwrap();
        let f2 = GridFunction::tensor(&[u2.clone(), v2.clone()]).unwrap();
        let (i, j) = (r0.interval(0), r0.interval(1));
        let sym = FullParaproductSymmetry { axis0: Slot::F1, axis1: Slot::Output };
        let c = 1.5
            * u1.inner(&profile(3, &i, true)).unwrap()
            * v1.inner(&profile(3, &j, false)).unwrap()
            * u2.inner(&profile(3, &i, false)).unwrap()
            * v2.inner(&profile(3, &j, false)).unwrap();
        let want = GridFunction::tensor(&[profile(3, &i, false), profile(3, &j, true)]).unwrap().scale(c);
        assert!(full_paraproduct(&a, &f1, &f2, sym).unwrap().max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn bound_report() {
        let s = spec(&[3, 3]);
        let one = Weight::unit(&s);
        let sym = FullParaproductSymmetry { axis0: Slot::F1, axis1: Slot::F2 };
        let zero = full_paraproduct_bound_report(&CoefSequence::new(&s), &one, &one, 4.0, 4.0, 2.0, sym, 5, 1).unwrap();
        assert_eq!(zero.sup_ratio, 0.0);
        assert!(full_paraproduct_bound_report(&CoefSequence::new(&s), &one, &one, 4.0, 4.0, 3.0, sym, 5, 1).is_err());

        // Single coefficient, unit weights: brute-force the same samples.
        let r0 = DyadicRectangle::from_pairs(&[(1, 1), (0, 0)]).unwrap();
        let a = CoefSequence::from_entries(&s, [(r0.clone(), 1.0)]).unwrap();
        let rep = full_paraproduct_bound_report(&a, &one, &one, 4.0, 4.0, 2.0, sym, 10, 7).unwrap();
        assert!((rep.bmo - r0.measure().powf(-0.5)).abs() < 1e-13);
        let an = a.scale(1.0 / rep.bmo);
        let mut best = 0.0f64;
        for i in 0..10u64 {
            let f1 = GridFunction::random(&s, split_seed(7, 2 * i));
            let f2 = GridFunction::random(&s, split_seed(7, 2 * i + 1));
            let out = full_oracle(&an, &f1, &f2, sym);
            let num = (out.values().iter().map(|v| v * v).sum::<f64>() * s.cell_volume()).sqrt();
            let n1 = (f1.values().iter().map(|v| v.powi(4)).sum::<f64>() * s.cell_volume()).powf(0.25);
            let n2 = (f2.values().iter().map(|v| v.powi(4)).sum::<f64>() * s.cell_volume()).powf(0.25);
            best = best.max(num / (n1 * n2));
        }
        assert!((rep.sup_ratio - best).abs() < 1e-12);

        // The L^1(w) majorant dominates the r = 1 ratio.
        let w1 = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: None }, 1).unwrap();
        let w2 = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: None }, 2).unwrap();
        let a = CoefSequence::random(&s, 10, 5);
        for sym in FullParaproductSymmetry::all() {
            let rep = full_paraproduct_bound_report(&a, &w1, &w2, 2.0, 2.0, 1.0, sym, 5, 3).unwrap();
            assert!(rep.sup_ratio <= rep.sup_dual_ratio * (1.0 + 1e-12), "{sym}");
        }
    }

    fn p_oracle(c: &PartialParaproductCoefs, f: &GridFunction) -> GridFunction {
        let s = c.spec();
        let d = s.depths();
        let mut acc = GridFunction::zeros(s);
        for (block, seq) in c.blocks() {
            for (r, a) in seq.iter() {
                let (k2, k3) = (r.interval(0), r.interval(1));
                let input = tensor(d, &[(block.i1, true), (k2, true), (k3, false)]);
                let output = tensor(d, &[(block.j1, true), (k2, false), (k3, true)]);
                acc = acc.add(&output.scale(a * f.inner(&input).unwrap())).unwrap();
            }
        }
        acc
    }

    #[test]
    fn partial_paraproduct_matches_oracle() {
        let s = spec(&[2, 2, 2]);
        for seed in 0..20u64 {
            let (i1, j1) = ((seed % 2) as u32, ((seed / 2) % 2) as u32);
            let c = generate_partial_coefs(&s, i1, j1, 3, seed).unwrap();
            c.check_normalization().unwrap();
            let f = GridFunction::random(&s, seed + 40);
            let got = partial_paraproduct(&c, &f).unwrap();
            assert!(got.max_abs_diff(&p_oracle(&c, &f)) < 1e-12);
            assert!(partial_paraproduct(&c, &GridFunction::constant(&s, 2.0)).unwrap().max_abs() < 1e-15);
            let scaled = partial_paraproduct(&c.scale(-3.0), &f).unwrap();
            assert!(scaled.max_abs_diff(&got.scale(-3.0)) < 1e-13);
        }
    }

    #[test]
    fn partial_paraproduct_single_coefficient() {
        let s = spec(&[3, 3, 3]);
        let mut c = PartialParaproductCoefs::new(&s, 1, 0).unwrap();
        let k1 = DyadicInterval { axis: 0, scale: 1, pos: 1 };
        let i1 = DyadicInterval { axis: 0, scale: 2, pos: 2 };
        let r = DyadicRectangle::from_pairs(&[(1, 0), (0, 0)]).unwrap();
        let seq = CoefSequence::from_entries(c.inner_spec(), [(r.clone(), 0.25)]).unwrap();
        c.insert(PartialBlock { k1, i1, j1: k1 }, seq).unwrap();
        c.check_normalization().unwrap();
        let (k2, k3) = (DyadicInterval { axis: 1, ..r.interval(0) }, DyadicInterval { axis: 2, ..r.interval(1) });
        let f = tensor(s.depths(), &[(i1, true), (k2, true), (DyadicInterval::unit(2), false)]);
        let want = tensor(s.depths(), &[(k1, true), (k2, false), (k3, true)]).scale(0.25);
        assert!(partial_paraproduct(&c, &f).unwrap().max_abs_diff(&want) < 1e-13);

        // Rank structure at zero complexity: P = a |out⟩⟨in|.
        let small = spec(&[2, 2, 2]);
        let mut c0 = PartialParaproductCoefs::new(&small, 0, 0).unwrap();
        let iv = DyadicInterval { axis: 0, scale: 1, pos: 0 };
        let r = DyadicRectangle::from_pairs(&[(0, 0), (1, 1)]).unwrap();
        c0.insert(PartialBlock { k1: iv, i1: iv, j1: iv }, CoefSequence::from_entries(c0.inner_spec(), [(r.clone(), 0.5)]).unwrap()).unwrap();
        let (k2, k3) = (DyadicInterval { axis: 1, ..r.interval(0) }, DyadicInterval { axis: 2, ..r.interval(1) });
        let input = tensor(small.depths(), &[(iv, true), (k2, true), (k3, false)]);
        let output = tensor(small.depths(), &[(iv, true), (k2, false), (k3, true)]);
        let n = small.cell_count();
        for col in 0..n {
            let e = GridFunction::indicator_of_cells(&small, &[col]);
            let got = partial_paraproduct(&c0, &e).unwrap();
            let want = output.scale(0.5 * input.values()[col] * small.cell_volume());
            assert!(got.max_abs_diff(&want) < 1e-14);
        }
    }

    #[test]
    fn partial_coefs_generation() {
        let s = spec(&[3, 3, 3]);
        let c = generate_partial_coefs(&s, 1, 2, 4, 9).unwrap();
        assert_eq!(c.block_count(), 4);
        c.check_normalization().unwrap();
        let fam = OmegaFamily::build(c.inner_spec(), &OmegaStrategy::AllRectangles, 0).unwrap();
        for (b, seq) in c.blocks() {
            let ratio = bmo_prod(seq, 2.0, &fam).unwrap().norm / c.block_bound(b);
            assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&ratio));
        }
        assert_eq!(c, generate_partial_coefs(&s, 1, 2, 4, 9).unwrap());
        let empty = generate_partial_coefs(&s, 0, 0, 0, 1).unwrap();
        assert_eq!(partial_paraproduct(&empty, &GridFunction::random(&s, 1)).unwrap().max_abs(), 0.0);
        assert!(generate_partial_coefs(&s, 3, 0, 1, 1).is_err());

        let bad = c.scale(3.0);
        assert!(matches!(bad.check_normalization(), Err(Error::Normalization { .. })));

        let json = serde_json::to_string(&c).unwrap();
        let back: PartialParaproductCoefs = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn martingale_paraproducts_reconstruct_products() {
        let s = spec(&[3, 2, 2]);
        let b = GridFunction::random(&s, 1);
        let f = GridFunction::random(&s, 2);
        let bf = b.mul(&f).unwrap();
        for axis in 0..3 {
            let mut sum = GridFunction::zeros(&s);
            for j in 0..=3 {
                sum = sum.add(&aij(&b, &f, axis, j).unwrap()).unwrap();
            }
            assert!(sum.max_abs_diff(&bf) < 1e-12);
        }
        for (i1, i2) in [(0, 2), (0, 1), (1, 2)] {
            let mut sum = GridFunction::zeros(&s);
            for j1 in 0..=3 {
                for j2 in 0..=3 {
                    sum = sum.add(&aij2(&b, &f, (i1, j1), (i2, j2)).unwrap()).unwrap();
                }
            }
            assert!(sum.max_abs_diff(&bf) < 1e-12);
        }
        assert!(aij(&b, &f, 3, 1).is_err());
        assert!(aij(&b, &f, 0, 4).is_err());
        assert!(aij2(&b, &f, (1, 1), (1, 2)).is_err());
    }

    #[test]
    fn martingale_paraproducts_match_martingale_sums() {
        use crate::haar::{martingale_avg, martingale_diff};
        let s = spec(&[2, 2]);
        let b = GridFunction::random(&s, 5);
        let f = GridFunction::random(&s, 6);
        let axis = 1;
        let mut want = [GridFunction::zeros(&s), GridFunction::zeros(&s), GridFunction::zeros(&s)];
        for k in 0..2 {
            for pos in 0..1u32 << k {
                let iv = DyadicInterval { axis, scale: k, pos };
                let (db, df) = (martingale_diff(&b, axis, &iv).unwrap(), martingale_diff(&f, axis, &iv).unwrap());
                let (eb, ef) = (martingale_avg(&b, axis, &iv).unwrap(), martingale_avg(&f, axis, &iv).unwrap());
                want[0] = want[0].add(&db.mul(&df).unwrap()).unwrap();
                want[1] = want[1].add(&db.mul(&ef).unwrap()).unwrap();
                want[2] = want[2].add(&eb.mul(&df).unwrap()).unwrap();
            }
        }
        for j in 1..=3u8 {
            assert!(aij(&b, &f, axis, j).unwrap().max_abs_diff(&want[j as usize - 1]) < 1e-13);
        }

        // Composition over two axes against nested one-axis sums.
        let a = aij2(&b, &f, (0, 1), (1, 2)).unwrap();
        let mut nested = GridFunction::zeros(&s);
        for k in 0..2 {
            for pos in 0..1u32 << k {
                let iv = DyadicInterval { axis: 1, scale: k, pos };
                let db = martingale_diff(&b, 1, &iv).unwrap();
                let ef = martingale_avg(&f, 1, &iv).unwrap();
                nested = nested.add(&aij(&db, &ef, 0, 1).unwrap()).unwrap();
            }
        }
        assert!(a.max_abs_diff(&nested) < 1e-13);
    }

    #[test]
    fn martingale_paraproducts_constant_symbol() {
        let s = spec(&[3, 2]);
        let f = GridFunction::random(&s, 3);
        let b = GridFunction::constant(&s, 2.5);
        for axis in 0..2 {
            assert_eq!(aij(&b, &f, axis, 1).unwrap().max_abs(), 0.0);
            assert_eq!(aij(&b, &f, axis, 2).unwrap().max_abs(), 0.0);
            let top = crate::haar::martingale_avg(&f, axis, &DyadicInterval::unit(axis)).unwrap();
            let want = f.sub(&top).unwrap().scale(2.5);
            assert!(aij(&b, &f, axis, 3).unwrap().max_abs_diff(&want) < 1e-13);
        }
        let g = GridFunction::random(&s, 4);
        let lhs = aij(&b.add(&g).unwrap(), &f.scale(2.0), 0, 2).unwrap();
        let rhs = aij(&b, &f, 0, 2).unwrap().add(&aij(&g, &f, 0, 2).unwrap()).unwrap().scale(2.0);
        assert!(lhs.max_abs_diff(&rhs) < 1e-13);
    }

    fn u_oracle(g: &GridFunction) -> GridFunction {
        let s = g.spec();
        let d = s.depths();
        let mut acc = GridFunction::zeros(s);
        for k1 in 0..d[0] {
            for p1 in 0..1u32 << k1 {
                for k3 in 0..d[2] {
                    for p3 in 0..1u32 << k3 {
                        let v1 = DyadicInterval { axis: 0, scale: k1, pos: p1 };
                        let v3 = DyadicInterval { axis: 2, scale: k3, pos: p3 };
                        let c = crate::haar::partial_coefficient(g, &[(v1, true), (v3, true)]).unwrap();
                        let sq = crate::maximal_square::square_function(&c, &crate::maximal_square::SquareMode::full(1)).unwrap();
                        let h1 = haar_function(d[0], &DyadicInterval { axis: 0, ..v1 }, true).unwrap();
                        let h3 = haar_function(d[2], &DyadicInterval { axis: 0, ..v3 }, true).unwrap();
                        acc = acc.add(&GridFunction::tensor(&[h1, sq, h3]).unwrap()).unwrap();
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn operator_u_properties() {
        let s = spec(&[2, 2, 2]);
        let nu = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: None }, 1).unwrap();
        assert!(operator_u(&GridFunction::constant(&s, 1.0), &nu).unwrap().max_abs() < 1e-15);
        let g = GridFunction::random(&s, 8);
        let u1 = operator_u(&g, &Weight::unit(&s)).unwrap();
        assert!(u1.max_abs_diff(&u_oracle(&g)) < 1e-12);
        let u = operator_u(&g, &nu).unwrap();
        assert!(operator_u(&g.scale(2.5), &nu).unwrap().max_abs_diff(&u.scale(2.5)) < 1e-13);
        assert!(operator_u(&g.scale(-1.0), &nu).unwrap().max_abs_diff(&u) < 1e-13);
    }
}

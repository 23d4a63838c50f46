//! Commutators `[b, P]` of partial paraproducts with multiplication, their
//! exact decomposition into martingale paraproduct pieces, and the quantities
//! entering the Bloom-type upper bound.

use ndarray::{ArrayD, IxDyn};
use serde::Serialize;

use crate::bmo::{bmo_prod, little_bmo_bloom, ratio_or_zero, CoefSequence};
use crate::error::{Error, Result};
use crate::lattice::{GridFunction, GridSpec, OmegaFamily, OmegaStrategy};
use crate::maximal_square::lp_norm;
use crate::paraproducts::{martingale_paraproduct, partial_paraproduct, PartialParaproductCoefs, P_INPUT, P_OUTPUT};
use crate::pyramid::{self, dyadic_len, heap_scale, AxisKernel};
use crate::weights::{bloom_nu, Weight};

use AxisKernel::{Average, Haar, Identity};

/// `b` minus its mean. The commutator only sees `b` modulo constants, and
/// removing the mean first makes constant symbols give exactly zero.
fn centred(b: &GridFunction) -> GridFunction {
    let mean = b.integral();
    b.map(|v| v - mean)
}

/// `[b, P] f = b · Pf − P(b f)`.
pub fn commutator(b: &GridFunction, c: &PartialParaproductCoefs, f: &GridFunction) -> Result<GridFunction> {
    c.spec().ensure_same(b.spec())?;
    let b = centred(b);
    partial_paraproduct(c, f)?.mul(&b)?.sub(&partial_paraproduct(c, &b.mul(f)?)?)
}

/// One signed piece of the commutator decomposition.
#[derive(Clone, Debug)]
pub struct CommutatorTerm {
    /// `A13_{j1}{j2}`, `PA12_{j1}{j2}`, `E1`, `E1m`, `E2`, `E2m` or `coarse`.
    pub name: String,
    /// `+1` or `−1`; the commutator is `Σ sign · value`.
    pub sign: f64,
    pub value: GridFunction,
}

/// `[b,P]f = Σ_{j_1,j_2} A^{1,3}_{j_1 j_2}(b, Pf) − Σ_{j_1,j_2} P(A^{1,2}_{j_1 j_2}(b, f))`,
/// with the `(3,3)` difference rewritten as `E2 − E2m + E1m − E1` and every
/// term involving a top-level average collected in `coarse`.
#[derive(Clone, Debug)]
pub struct CommutatorDecomposition {
    pub terms: Vec<CommutatorTerm>,
}

impl CommutatorDecomposition {
    pub fn sum(&self) -> Result<GridFunction> {
        let spec = self.terms[0].value.spec();
        self.terms
            .iter()
            .try_fold(GridFunction::zeros(spec), |acc, t| acc.add(&t.value.scale(t.sign)))
    }

    pub fn get(&self, name: &str) -> Option<&CommutatorTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.name.as_str()).collect()
    }
}

/// Interval-indexed averages the `E` terms need.
struct Pieces {
    spec: GridSpec,
    /// `⟨b⟩_{R}` for every rectangle.
    bavg: ArrayD<f64>,
    /// `⟨f, h_{I_1} ⊗ h_{K_2} ⊗ 1_{K_3}/|K_3|⟩`.
    f_in: ArrayD<f64>,
}

impl Pieces {
    fn new(b: &GridFunction, f: &GridFunction) -> Self {
        let spec = b.spec().clone();
        let d = spec.depths();
        Self {
            bavg: pyramid::analyze(b.array(), d, &[Average; 3]),
            f_in: pyramid::analyze(f.array(), d, &P_INPUT),
            spec,
        }
    }

    fn output(&self, g: &ArrayD<f64>) -> Result<GridFunction> {
        GridFunction::from_array(self.spec.clone(), pyramid::synthesize(g, self.spec.depths(), &P_OUTPUT))
    }
}

/// `E1 = Σ a (⟨b⟩_{I_1K_2K_3} − ⟨b⟩_{K_1K_2K_3}) F h_{J_1} ⊗ 1_{K_2}/|K_2| ⊗ h_{K_3}`;
/// `use_j` swaps `I_1` for `J_1` (the `E1m` term).
fn e1_term(c: &PartialParaproductCoefs, pc: &Pieces, use_j: bool) -> Result<GridFunction> {
    let g = c.apply_blocks_with(&pc.f_in, |blk, k2, k3| {
        let inner = if use_j { blk.j1 } else { blk.i1 };
        pc.bavg[IxDyn(&[inner.heap_index(), k2, k3])] - pc.bavg[IxDyn(&[blk.k1.heap_index(), k2, k3])]
    });
    pc.output(&g)
}

/// `E2 = Σ a F h_{J_1} ⊗ (⟨b⟩^{1,3}_{J_1×K_3} − ⟨b⟩_{J_1K_2K_3}) 1_{K_2}/|K_2| ⊗ h_{K_3}`.
fn e2_term(b: &GridFunction, c: &PartialParaproductCoefs, pc: &Pieces) -> Result<GridFunction> {
    let d = pc.spec.depths();
    let spread = [Identity, Average, Identity];
    let g = pyramid::synthesize(&c.apply_blocks(&pc.f_in), d, &spread);
    let gb = pyramid::synthesize(
        &c.apply_blocks_with(&pc.f_in, |blk, k2, k3| pc.bavg[IxDyn(&[blk.j1.heap_index(), k2, k3])]),
        d,
        &spread,
    );
    let b13 = pyramid::analyze(b.array(), d, &[Average, Identity, Average]);
    let q = &(&g * &b13) - &gb;
    GridFunction::from_array(pc.spec.clone(), pyramid::synthesize(&q, d, &[Haar, Identity, Haar]))
}

/// `E2m = Σ a ⟨(⟨b⟩^{1,2}_{I_1×K_2} − ⟨b⟩_{I_1K_2K_3}) ⟨f, h_{I_1} ⊗ h_{K_2}⟩_{1,2}⟩_{K_3} h_{J_1} ⊗ 1_{K_2}/|K_2| ⊗ h_{K_3}`.
fn e2m_term(b: &GridFunction, f: &GridFunction, c: &PartialParaproductCoefs, pc: &Pieces) -> Result<GridFunction> {
    let d = pc.spec.depths();
    let fp = pyramid::analyze(f.array(), d, &[Haar, Haar, Identity]);
    let b12 = pyramid::analyze(b.array(), d, &[Average, Average, Identity]);
    let h = &pyramid::analyze(&(&b12 * &fp), d, &[Identity, Identity, Average]) - &(&pc.bavg * &pc.f_in);
    pc.output(&c.apply_blocks(&h))
}

/// Splits `[b,P]f` into named, signed terms that sum to the commutator.
pub fn decompose(b: &GridFunction, c: &PartialParaproductCoefs, f: &GridFunction) -> Result<CommutatorDecomposition> {
    let spec = c.spec();
    spec.ensure_same(b.spec())?;
    spec.ensure_same(f.spec())?;
    let b = centred(b);
    let pf = partial_paraproduct(c, f)?;
    let mut terms = Vec::new();
    let mut coarse = GridFunction::zeros(spec);
    for j1 in 0..=3u8 {
        for j2 in 0..=3u8 {
            if (j1, j2) == (3, 3) {
                continue;
            }
            let a13 = martingale_paraproduct(&b, &pf, &[(0, j1), (2, j2)])?;
            let pa12 = partial_paraproduct(c, &martingale_paraproduct(&b, f, &[(0, j1), (1, j2)])?)?;
            if j1 == 0 || j2 == 0 {
                coarse = coarse.add(&a13)?.sub(&pa12)?;
            } else {
                terms.push(CommutatorTerm { name: format!("A13_{j1}{j2}"), sign: 1.0, value: a13 });
                terms.push(CommutatorTerm { name: format!("PA12_{j1}{j2}"), sign: -1.0, value: pa12 });
            }
        }
    }
    let pc = Pieces::new(&b, f);
    terms.push(CommutatorTerm { name: "E2".into(), sign: 1.0, value: e2_term(&b, c, &pc)? });
    terms.push(CommutatorTerm { name: "E2m".into(), sign: -1.0, value: e2m_term(&b, f, c, &pc)? });
    terms.push(CommutatorTerm { name: "E1m".into(), sign: 1.0, value: e1_term(c, &pc, true)? });
    terms.push(CommutatorTerm { name: "E1".into(), sign: -1.0, value: e1_term(c, &pc, false)? });
    terms.push(CommutatorTerm { name: "coarse".into(), sign: 1.0, value: coarse });
    Ok(CommutatorDecomposition { terms })
}

/// The chain of estimates for the `E1` pairing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct E1DualBound {
    /// `|⟨E1, g⟩|`.
    pub pairing: f64,
    /// `Σ_l Σ |a| |L_1|^{-1/2} |F| |G| ⟨|⟨b, h_{L_1}⟩_1|⟩_{K_2×K_3}` with `L_1 = I_1^{(l)}`;
    /// dominates `pairing` term by term.
    pub dualised: f64,
    /// `Σ_l ∫ (Σ_{L_1} 1_{L_1}/|L_1|² [Σ |a| |F| |G| 1_{K_2}/|K_2| 1_{K_3}/|K_3|]²)^{1/2} ν`.
    pub lhs: f64,
    /// The same with each inner bracket replaced by the `L^2`-square-function
    /// majorant `|I_1|^{1/2}|J_1|^{1/2}/|K_1| σ_{I_1,J_1}`.
    pub rhs: f64,
}

fn weighted_integral(values: &ArrayD<f64>, w: &Weight, vol: f64) -> f64 {
    let terms: Vec<f64> = values.iter().zip(w.values()).map(|(v, w)| v * w).collect();
    pyramid::pairwise_sum(&terms) * vol
}

/// Evaluates the `E1` estimate chain for `g` paired against `E1(b, f)`.
pub fn e1_dual_bound(
    b: &GridFunction,
    c: &PartialParaproductCoefs,
    f: &GridFunction,
    g: &GridFunction,
    nu: &Weight,
) -> Result<E1DualBound> {
    let spec = c.spec();
    for s in [b.spec(), f.spec(), g.spec(), nu.spec()] {
        spec.ensure_same(s)?;
    }
    let d = spec.depths();
    let b = centred(b);
    let pc = Pieces::new(&b, f);
    let pairing = e1_term(c, &pc, false)?.inner(g)?.abs();

    let g_out = pyramid::analyze(g.array(), d, &P_OUTPUT);
    let bh = pyramid::analyze(b.array(), d, &[Haar, Identity, Identity]).mapv(f64::abs);
    let bh_avg = pyramid::analyze(&bh, d, &[Identity, Average, Average]);
    let fp = pyramid::analyze(f.array(), d, &[Haar, Haar, Identity]).mapv(f64::abs);
    let f_avg = pyramid::analyze(&fp, d, &[Identity, Identity, Average]);
    let gq = pyramid::analyze(g.array(), d, &[Haar, Identity, Haar]).mapv(f64::abs);
    let g_avg = pyramid::analyze(&gq, d, &[Identity, Average, Identity]);

    let inner = c.inner_spec();
    let inner_shape = inner.rect_shape();
    let to_cells = |arr: &ArrayD<f64>| pyramid::synthesize(arr, inner.depths(), &[Average, Average]);
    let (i1c, _) = c.complexity();

    let mut dual_terms = Vec::new();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for l in 1..=i1c {
        // Per ancestor L_1 = I_1^{(l)}: the bracketed sums as functions of (x_2, x_3).
        let mut phi: std::collections::BTreeMap<usize, ArrayD<f64>> = Default::default();
        let mut psi: std::collections::BTreeMap<usize, (f64, ArrayD<f64>)> = Default::default();
        for (blk, seq) in c.blocks() {
            let lv = blk.i1.ancestor(l).expect("complexity checked on insert");
            let (ii, jj, li) = (blk.i1.heap_index(), blk.j1.heap_index(), lv.heap_index());
            let mut t = ArrayD::zeros(IxDyn(&inner_shape));
            for (rect, a) in seq.iter() {
                let (k2, k3) = (rect.interval(0).heap_index(), rect.interval(1).heap_index());
                let fg = a.abs() * pc.f_in[IxDyn(&[ii, k2, k3])].abs() * g_out[IxDyn(&[jj, k2, k3])].abs();
                t[IxDyn(&[k2, k3])] += fg;
                dual_terms.push(fg * pyramid::inv_sqrt_len(lv.scale) * bh_avg[IxDyn(&[li, k2, k3])]);
            }
            let acc = phi.entry(li).or_insert_with(|| ArrayD::zeros(IxDyn(&[1 << d[1], 1 << d[2]])));
            *acc += &to_cells(&t);

            let mut s = ArrayD::zeros(IxDyn(&inner_shape));
            for ((k2, k3), v) in s.indexed_iter_mut().map(|(ix, v)| ((ix[0], ix[1]), v)) {
                *v = (f_avg[IxDyn(&[ii, k2, k3])] * g_avg[IxDyn(&[jj, k2, k3])]).powi(2);
            }
            let sigma = to_cells(&s).mapv(f64::sqrt) * (blk.i1.len() * blk.j1.len()).sqrt();
            let entry = psi
                .entry(li)
                .or_insert_with(|| (blk.k1.len(), ArrayD::zeros(IxDyn(&[1 << d[1], 1 << d[2]]))));
            entry.1 += &sigma;
        }
        let integrand = |parts: Vec<(usize, f64, &ArrayD<f64>)>| {
            let mut sq = ArrayD::<f64>::zeros(IxDyn(&spec.shape()));
            for (li, scale, arr) in parts {
                let lv = crate::lattice::DyadicInterval::from_heap_index(0, li);
                for x1 in lv.cell_range(d[0]) {
                    let mut lane = sq.index_axis_mut(ndarray::Axis(0), x1);
                    lane.zip_mut_with(arr, |s, v| *s += (v * scale).powi(2));
                }
            }
            sq.mapv(f64::sqrt)
        };
        let lhs_int = integrand(phi.iter().map(|(&li, arr)| (li, 1.0 / dyadic_len(heap_scale(li)), arr)).collect());
        let rhs_int = integrand(
            psi.iter()
                .map(|(&li, (k1_len, arr))| (li, 1.0 / (dyadic_len(heap_scale(li)) * k1_len), arr))
                .collect(),
        );
        lhs += weighted_integral(&lhs_int, nu, spec.cell_volume());
        rhs += weighted_integral(&rhs_int, nu, spec.cell_volume());
    }
    Ok(E1DualBound { pairing, dualised: pyramid::pairwise_sum(&dual_terms), lhs, rhs })
}

/// One `(a^{k,j}, f_{j,k}, g_{j,k})` entry of the bi-parameter square-function estimate.
#[derive(Clone, Debug)]
pub struct Lemma52Entry {
    pub a: CoefSequence,
    pub f: GridFunction,
    pub g: GridFunction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Lemma52Sides {
    pub lhs: f64,
    pub rhs: f64,
}

/// Both sides of
/// `‖(Σ_j [Σ_k Σ_{K,V} |a^{k,j}_{K×V}| |⟨f, h_K ⊗ 1_V/|V|⟩| |⟨g, 1_K/|K| ⊗ h_V⟩| 1_K/|K| ⊗ 1_V/|V|]^p)^{1/p}‖_{L^q(w)}^q`
/// against the same expression with the inner sums replaced by
/// `(Σ_{K,V} ⟨|⟨f,h_K⟩_1|⟩_V² ⟨|⟨g,h_V⟩_2|⟩_K² 1_K/|K| ⊗ 1_V/|V|)^{1/2}`.
///
/// `families[j][k]` holds the entries; each `a` must have
/// `‖a‖_{BMO_prod} ≤ 1`.
pub fn lemma52_sides(families: &[Vec<Lemma52Entry>], w: &Weight, p: f64, q: f64) -> Result<Lemma52Sides> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::ExponentOutOfRange(p));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::ExponentOutOfRange(q));
    }
    let spec = w.spec();
    if spec.param_count() != 2 {
        return Err(Error::InvalidArgument("the square-function estimate is bi-parameter".into()));
    }
    let d = spec.depths();
    let family = OmegaFamily::build(spec, &OmegaStrategy::AllRectangles, 0)?;
    let mut lhs_acc = ArrayD::<f64>::zeros(IxDyn(&spec.shape()));
    let mut rhs_acc = ArrayD::<f64>::zeros(IxDyn(&spec.shape()));
    for (j, row) in families.iter().enumerate() {
        let mut lhs_j = ArrayD::<f64>::zeros(IxDyn(&spec.shape()));
        let mut rhs_j = ArrayD::<f64>::zeros(IxDyn(&spec.shape()));
        for (k, e) in row.iter().enumerate() {
            for s in [e.a.spec(), e.f.spec(), e.g.spec()] {
                spec.ensure_same(s)?;
            }
            let norm = bmo_prod(&e.a, 2.0, &family)?.norm;
            if norm > 1.0 + 1e-12 {
                return Err(Error::Normalization { block: format!("j={j}, k={k}"), norm, bound: 1.0 });
            }
            let fc = pyramid::analyze(e.f.array(), d, &[Haar, Average]);
            let gc = pyramid::analyze(e.g.array(), d, &[Average, Haar]);
            let t = e.a.dense().mapv(f64::abs) * fc.mapv(f64::abs) * gc.mapv(f64::abs);
            lhs_j += &pyramid::synthesize(&t, d, &[Average, Average]);

            let fa = pyramid::analyze(&pyramid::analyze(e.f.array(), d, &[Haar, Identity]).mapv(f64::abs), d, &[Identity, Average]);
            let ga = pyramid::analyze(&pyramid::analyze(e.g.array(), d, &[Identity, Haar]).mapv(f64::abs), d, &[Average, Identity]);
            let s = (fa * ga).mapv(|v| v * v);
            rhs_j += &pyramid::synthesize(&s, d, &[Average, Average]).mapv(f64::sqrt);
        }
        lhs_acc += &lhs_j.mapv(|v| v.powf(p));
        rhs_acc += &rhs_j.mapv(|v| v.powf(p));
    }
    let finish = |acc: ArrayD<f64>| weighted_integral(&acc.mapv(|v| v.powf(q / p)), w, spec.cell_volume());
    Ok(Lemma52Sides { lhs: finish(lhs_acc), rhs: finish(rhs_acc) })
}

/// `‖[b,P]f‖_{L^p(λ)} / (‖b‖_{bmo(ν)} ‖f‖_{L^p(μ)})` with `ν = (μ/λ)^{1/p}`.
///
/// Zero when `f = 0`; a constant symbol has no Bloom norm and is rejected.
pub fn bloom_ratio(
    b: &GridFunction,
    c: &PartialParaproductCoefs,
    f: &GridFunction,
    mu: &Weight,
    lambda: &Weight,
    p: f64,
) -> Result<f64> {
    let bw = bloom_nu(mu, lambda, p)?;
    let bmo = little_bmo_bloom(b, &bw.nu)?;
    if bmo == 0.0 {
        return Err(Error::Degenerate("constant symbol has zero little-bmo norm".into()));
    }
    let num = lp_norm(&commutator(b, c, f)?, p, Some(lambda))?;
    let den = bmo * lp_norm(f, p, Some(mu))?;
    Ok(ratio_or_zero(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::haar_function;
    use crate::lattice::{average, DyadicInterval, DyadicRectangle};
    use crate::paraproducts::{generate_partial_coefs, PartialBlock};
    use crate::weights::{generate_weight, WeightRecipe};

    fn spec(d: &[u32]) -> GridSpec {
        GridSpec::new(d).unwrap()
    }

    fn instance(seed: u64) -> (GridSpec, PartialParaproductCoefs, GridFunction, GridFunction) {
        let s = spec(&[3, 2, 2]);
        let (i1, j1) = ((seed % 3) as u32, ((seed / 3) % 3) as u32);
        let c = generate_partial_coefs(&s, i1, j1, 3, seed).unwrap();
        (s.clone(), c, GridFunction::random(&s, 100 + seed), GridFunction::random(&s, 200 + seed))
    }

    #[test]
    fn commutator_basics() {
        for seed in 0..10 {
            let (s, c, b, f) = instance(seed);
            let direct = partial_paraproduct(&c, &f).unwrap().mul(&b).unwrap().sub(&partial_paraproduct(&c, &b.mul(&f).unwrap()).unwrap()).unwrap();
            let got = commutator(&b, &c, &f).unwrap();
            assert!(got.max_abs_diff(&direct) < 1e-12);
            assert_eq!(commutator(&GridFunction::constant(&s, 0.3), &c, &f).unwrap().max_abs(), 0.0);
            let shifted = commutator(&b.map(|v| v + 1.7), &c, &f).unwrap();
            assert!(shifted.max_abs_diff(&got) < 1e-12);
            let g = GridFunction::random(&s, 300 + seed);
            let lin = commutator(&b.scale(2.0).add(&g).unwrap(), &c, &f).unwrap();
            let want = got.scale(2.0).add(&commutator(&g, &c, &f).unwrap()).unwrap();
            assert!(lin.max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn decomposition_sums_to_commutator() {
        for seed in 0..12 {
            let (_, c, b, f) = instance(seed);
            let dec = decompose(&b, &c, &f).unwrap();
            let comm = commutator(&b, &c, &f).unwrap();
            assert!(dec.sum().unwrap().max_abs_diff(&comm) < 1e-10);
            assert_eq!(dec.terms.len(), 8 * 2 + 5);
            assert!(dec.get("coarse").unwrap().value.max_abs() < 1e-12);
        }
    }

    #[test]
    fn e_terms_rewrite_the_diagonal_piece() {
        for seed in 0..6 {
            let (_, c, b, f) = instance(seed);
            let b = centred(&b);
            let pf = partial_paraproduct(&c, &f).unwrap();
            let a13 = martingale_paraproduct(&b, &pf, &[(0, 3), (2, 3)]).unwrap();
            let pa12 = partial_paraproduct(&c, &martingale_paraproduct(&b, &f, &[(0, 3), (1, 3)]).unwrap()).unwrap();
            let dec = decompose(&b, &c, &f).unwrap();
            let mut e = GridFunction::zeros(b.spec());
            for name in ["E2", "E2m", "E1m", "E1"] {
                let t = dec.get(name).unwrap();
                e = e.add(&t.value.scale(t.sign)).unwrap();
            }
            assert!(e.max_abs_diff(&a13.sub(&pa12).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn constant_symbol_kills_every_term() {
        let (s, c, _, f) = instance(4);
        let dec = decompose(&GridFunction::constant(&s, -1.3), &c, &f).unwrap();
        for t in &dec.terms {
            assert_eq!(t.value.max_abs(), 0.0, "{}", t.name);
        }
    }

    #[test]
    fn e1_single_block_oracle() {
        // One block with i1 = 1: E1 reduces to a single telescoping difference.
        let s = spec(&[2, 2, 2]);
        let mut c = PartialParaproductCoefs::new(&s, 1, 0).unwrap();
        let k1 = DyadicInterval { axis: 0, scale: 0, pos: 0 };
        let i1 = DyadicInterval { axis: 0, scale: 1, pos: 1 };
        let r = DyadicRectangle::from_pairs(&[(0, 0), (1, 0)]).unwrap();
        c.insert(PartialBlock { k1, i1, j1: k1 }, CoefSequence::from_entries(c.inner_spec(), [(r.clone(), 0.4)]).unwrap()).unwrap();
        let b = GridFunction::random(&s, 1);
        let f = GridFunction::random(&s, 2);
        let k2 = DyadicInterval { axis: 1, ..r.interval(0) };
        let k3 = DyadicInterval { axis: 2, ..r.interval(1) };
        let rect = |a: DyadicInterval| DyadicRectangle::new(vec![a, k2, k3]).unwrap();
        let diff = average(&b, &rect(i1)).unwrap() - average(&b, &rect(k1)).unwrap();
        let prof = |iv: DyadicInterval, haar: bool, depth: u32| {
            let iv0 = DyadicInterval { axis: 0, ..iv };
            if haar {
                haar_function(depth, &iv0, true).unwrap()
            } else {
                let s1 = spec(&[depth]);
                GridFunction::from_fn(&s1, |cell| if iv0.contains_cell(depth, cell[0]) { 1.0 / iv0.len() } else { 0.0 })
            }
        };
        let input = GridFunction::tensor(&[prof(i1, true, 2), prof(k2, true, 2), prof(k3, false, 2)]).unwrap();
        let output = GridFunction::tensor(&[prof(k1, true, 2), prof(k2, false, 2), prof(k3, true, 2)]).unwrap();
        let want = output.scale(0.4 * diff * f.inner(&input).unwrap());
        let got = decompose(&b, &c, &f).unwrap().get("E1").unwrap().value.clone();
        assert!(got.max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn e1_chain_is_ordered() {
        let s = spec(&[3, 2, 2]);
        let nu = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 2.0, seed: None }, 3).unwrap();
        for seed in 0..8u64 {
            let c = generate_partial_coefs(&s, 1 + (seed % 2) as u32, (seed % 3) as u32, 3, seed).unwrap();
            let b = GridFunction::random(&s, seed + 10);
            let f = GridFunction::random(&s, seed + 20);
            let g = GridFunction::random(&s, seed + 30);
            let r = e1_dual_bound(&b, &c, &f, &g, &nu).unwrap();
            assert!(r.pairing <= r.dualised * (1.0 + 1e-12) + 1e-15, "{r:?}");
            assert!(r.lhs > 0.0 && r.rhs > 0.0);
        }
        let c0 = generate_partial_coefs(&s, 0, 1, 2, 1).unwrap();
        let r = e1_dual_bound(&GridFunction::random(&s, 1), &c0, &GridFunction::random(&s, 2), &GridFunction::random(&s, 3), &nu).unwrap();
        assert_eq!((r.dualised, r.lhs, r.rhs), (0.0, 0.0, 0.0));
        assert!(r.pairing < 1e-15);
    }

    /// Cell-by-cell evaluation of the `E1` chain's two integrals.
    fn e1_oracle(b: &GridFunction, c: &PartialParaproductCoefs, f: &GridFunction, g: &GridFunction, nu: &Weight) -> (f64, f64) {
        let _ = b;
        let s = c.spec();
        let d = s.depths().to_vec();
        let avg_on = |h: &GridFunction, iv: &DyadicInterval| {
            let r = iv.cell_range(h.spec().depth(0));
            let n = r.len() as f64;
            r.map(|x| h.values()[x]).sum::<f64>() / n
        };
        let abs_avg_on = |h: &GridFunction, iv: &DyadicInterval| avg_on(&h.abs(), iv);
        let ivs = |axis: usize| -> Vec<DyadicInterval> {
            (0..d[axis]).flat_map(|k| (0..1u32 << k).map(move |p| DyadicInterval { axis, scale: k, pos: p })).collect()
        };
        let (i1c, _) = c.complexity();
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for x in 0..s.cell_count() {
            let cell = s.cell_coords(x);
            for l in 1..=i1c {
                let mut lb: std::collections::BTreeMap<DyadicInterval, (f64, f64, f64)> = Default::default();
                for (blk, seq) in c.blocks() {
                    let lv = blk.i1.ancestor(l).unwrap();
                    if !lv.contains_cell(d[0], cell[0]) {
                        continue;
                    }
                    let e = lb.entry(lv).or_insert((0.0, 0.0, blk.k1.len()));
                    for (r, a) in seq.iter() {
                        let k2 = DyadicInterval { axis: 1, ..r.interval(0) };
                        let k3 = DyadicInterval { axis: 2, ..r.interval(1) };
                        if !(k2.contains_cell(d[1], cell[1]) && k3.contains_cell(d[2], cell[2])) {
                            continue;
                        }
                        let fv = avg_on(&crate::haar::partial_coefficient(f, &[(blk.i1, true), (k2, true)]).unwrap(), &DyadicInterval { axis: 0, ..k3 });
                        let gv = avg_on(&crate::haar::partial_coefficient(g, &[(blk.j1, true), (k3, true)]).unwrap(), &DyadicInterval { axis: 0, ..k2 });
                        e.0 += (a * fv * gv).abs() / (k2.len() * k3.len());
                    }
                    let mut sig = 0.0;
                    for k2 in ivs(1).into_iter().filter(|k| k.contains_cell(d[1], cell[1])) {
                        for k3 in ivs(2).into_iter().filter(|k| k.contains_cell(d[2], cell[2])) {
                            let fa = abs_avg_on(&crate::haar::partial_coefficient(f, &[(blk.i1, true), (k2, true)]).unwrap(), &DyadicInterval { axis: 0, ..k3 });
                            let ga = abs_avg_on(&crate::haar::partial_coefficient(g, &[(blk.j1, true), (k3, true)]).unwrap(), &DyadicInterval { axis: 0, ..k2 });
                            sig += (fa * ga).powi(2) / (k2.len() * k3.len());
                        }
                    }
                    e.1 += (blk.i1.len() * blk.j1.len()).sqrt() * sig.sqrt();
                }
                let (mut sl, mut sr) = (0.0, 0.0);
                for (lv, (pl, pr, k1len)) in lb {
                    sl += (pl / lv.len()).powi(2);
                    sr += (pr / (lv.len() * k1len)).powi(2);
                }
                lhs += sl.sqrt() * nu.values()[x] * s.cell_volume();
                rhs += sr.sqrt() * nu.values()[x] * s.cell_volume();
            }
        }
        (lhs, rhs)
    }

    #[test]
    fn e1_chain_matches_oracle() {
        let s = spec(&[2, 2, 2]);
        let nu = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 2.0, seed: None }, 9).unwrap();
        for seed in 0..4u64 {
            let c = generate_partial_coefs(&s, 1, (seed % 2) as u32, 3, seed).unwrap();
            let (b, f, g) = (GridFunction::random(&s, seed + 1), GridFunction::random(&s, seed + 2), GridFunction::random(&s, seed + 3));
            let r = e1_dual_bound(&b, &c, &f, &g, &nu).unwrap();
            let (lhs, rhs) = e1_oracle(&b, &c, &f, &g, &nu);
            assert!((r.lhs - lhs).abs() < 1e-12 * lhs.max(1.0), "{} vs {lhs}", r.lhs);
            assert!((r.rhs - rhs).abs() < 1e-12 * rhs.max(1.0), "{} vs {rhs}", r.rhs);
        }
    }

    #[test]
    fn lemma52_equality_case() {
        let s = spec(&[3, 3]);
        let k = DyadicInterval { axis: 0, scale: 1, pos: 1 };
        let v = DyadicInterval { axis: 0, scale: 2, pos: 0 };
        let r0 = DyadicRectangle::from_pairs(&[(1, 1), (2, 0)]).unwrap();
        let m = r0.measure();
        let a = CoefSequence::from_entries(&s, [(r0, m.sqrt())]).unwrap();
        let one = GridFunction::constant(&spec(&[3]), 1.0);
        let ind = |iv: DyadicInterval| one.zip_map(&GridFunction::indicator(&spec(&[3]), &DyadicRectangle::new(vec![iv]).unwrap()), |_, y| y).unwrap();
        let f = GridFunction::tensor(&[haar_function(3, &k, true).unwrap(), ind(v)]).unwrap();
        let g = GridFunction::tensor(&[ind(k), haar_function(3, &v, true).unwrap()]).unwrap();
        let w = Weight::unit(&s);
        for q in [1.0, 1.5, 2.0, 3.0] {
            let sides = lemma52_sides(&[vec![Lemma52Entry { a: a.clone(), f: f.clone(), g: g.clone() }]], &w, 2.0, q).unwrap();
            let want = m.powf(1.0 - q / 2.0);
            assert!((sides.lhs - want).abs() < 1e-12 * want, "{q}");
            assert!((sides.rhs - want).abs() < 1e-12 * want, "{q}");
        }
        let big = a.scale(2.0);
        assert!(lemma52_sides(&[vec![Lemma52Entry { a: big, f, g }]], &w, 2.0, 1.0).is_err());
    }

    #[test]
    fn bloom_ratio_scalings() {
        let s = spec(&[2, 2, 2]);
        let mu = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: None }, 1).unwrap();
        let lambda = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: None }, 2).unwrap();
        let c = generate_partial_coefs(&s, 1, 1, 2, 5).unwrap();
        let b = GridFunction::random(&s, 6);
        let f = GridFunction::random(&s, 7);
        let r = bloom_ratio(&b, &c, &f, &mu, &lambda, 2.0).unwrap();
        assert!(r > 0.0);
        let r2 = bloom_ratio(&b.scale(2.0), &c, &f, &mu, &lambda, 2.0).unwrap();
        assert!((r2 - r).abs() < 1e-12 * r);
        let r3 = bloom_ratio(&b, &c, &f.scale(-3.0), &mu, &lambda, 2.0).unwrap();
        assert!((r3 - r).abs() < 1e-12 * r);
        assert!(bloom_ratio(&GridFunction::constant(&s, 1.0), &c, &f, &mu, &lambda, 2.0).is_err());
        assert_eq!(bloom_ratio(&b, &c, &GridFunction::zeros(&s), &mu, &lambda, 2.0).unwrap(), 0.0);
    }
}

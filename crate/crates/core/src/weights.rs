//! Multi-parameter weights, their dyadic A_p / A_∞ characteristics, and
//! Bloom weights `ν = μ^{1/p} λ^{-1/p}`.
//!
//! Every supremum ranges over dyadic rectangles of the grid.

use std::fmt;
use std::sync::{Mutex, OnceLock};

use ndarray::{ArrayD, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DyadicRectangle, GridFunction, GridSpec, OmegaSet};
use crate::pyramid::{self, AxisKernel};
use crate::rng::{rng_from_seed, split_seed};

/// Largest allowed `max w / min w` for generated weights.
pub const MAX_VALUE_RATIO: f64 = 1e4;

/// A strictly positive grid function with lazily computed characteristics.
pub struct Weight {
    w: GridFunction,
    averages: OnceLock<ArrayD<f64>>,
    ap_cache: Mutex<Vec<(f64, f64)>>,
}

impl Clone for Weight {
    fn clone(&self) -> Self {
        Self::new(self.w.clone()).expect("already validated")
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Weight").field("w", &self.w).finish()
    }
}

impl PartialEq for Weight {
    fn eq(&self, other: &Self) -> bool {
        self.w == other.w
    }
}

impl Weight {
    pub fn new(w: GridFunction) -> Result<Self> {
        if w.values().iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::NonPositiveWeight);
        }
        Ok(Self { w, averages: OnceLock::new(), ap_cache: Mutex::new(Vec::new()) })
    }

    /// The weight `w ≡ 1`.
    pub fn unit(spec: &GridSpec) -> Self {
        Self::new(GridFunction::constant(spec, 1.0)).expect("1 is positive")
    }

    pub fn function(&self) -> &GridFunction {
        &self.w
    }

    pub fn spec(&self) -> &GridSpec {
        self.w.spec()
    }

    pub fn values(&self) -> &[f64] {
        self.w.values()
    }

    /// True when every value equals `1.0`.
    pub fn is_unit(&self) -> bool {
        self.values().iter().all(|&v| v == 1.0)
    }

    /// `⟨w⟩_R` for every rectangle, indexed like [`GridSpec::rect_index`].
    pub fn rect_averages(&self) -> &ArrayD<f64> {
        self.averages.get_or_init(|| self.w.rect_averages())
    }

    pub fn average(&self, rect: &DyadicRectangle) -> f64 {
        let idx = self.spec().rect_index(rect);
        self.rect_averages().as_slice().expect("standard layout")[idx]
    }

    /// `w(R) = ∫_R w`.
    pub fn mass(&self, rect: &DyadicRectangle) -> f64 {
        self.average(rect) * rect.measure()
    }

    /// `w(Ω)`.
    pub fn omega_mass(&self, omega: &OmegaSet) -> f64 {
        let vals: Vec<f64> = omega.cells().iter().map(|&c| self.values()[c]).collect();
        pyramid::pairwise_sum(&vals) * self.spec().cell_volume()
    }

    /// Cached [`ap_constant`].
    pub fn ap(&self, p: f64) -> Result<f64> {
        if let Some(&(_, v)) = self.ap_cache.lock().expect("cache lock").iter().find(|(q, _)| *q == p) {
            return Ok(v);
        }
        let v = ap_constant(self, p)?;
        self.ap_cache.lock().expect("cache lock").push((p, v));
        Ok(v)
    }

    /// `max w / min w`.
    pub fn value_ratio(&self) -> f64 {
        let (lo, hi) = self
            .values()
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi / lo
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange(p))
    }
}

/// `max_R ⟨w⟩_R ⟨w^{1-p'}⟩_R^{p-1}` over dyadic rectangles.
pub fn ap_constant(w: &Weight, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let sigma = w.function().map(|v| v.powf(-1.0 / (p - 1.0)));
    let sa = sigma.rect_averages();
    let best = w
        .rect_averages()
        .iter()
        .zip(sa.iter())
        .map(|(a, s)| a * s.powf(p - 1.0))
        .fold(1.0f64, f64::max);
    Ok(best)
}

/// `max_R ⟨w⟩_R exp(⟨log w^{-1}⟩_R)`.
pub fn ainf_constant(w: &Weight) -> f64 {
    let logs = w.function().map(|v| -v.ln()).rect_averages();
    w.rect_averages()
        .iter()
        .zip(logs.iter())
        .map(|(a, l)| a * l.exp())
        .fold(1.0f64, f64::max)
}

/// One-parameter constants along each axis, maximised over the frozen
/// coordinates of the remaining axes.
pub fn iterated_ap(w: &Weight, p: f64) -> Result<Vec<f64>> {
    check_exponent(p)?;
    let spec = w.spec();
    let m = spec.param_count();
    if m < 2 {
        return Err(Error::InvalidArgument("iterated constants need at least two parameters".into()));
    }
    let sigma = w.function().map(|v| v.powf(-1.0 / (p - 1.0)));
    (0..m)
        .map(|axis| {
            let mut kernels = vec![AxisKernel::Identity; m];
            kernels[axis] = AxisKernel::Average;
            let wa = pyramid::analyze(w.function().array(), spec.depths(), &kernels);
            let sa = pyramid::analyze(sigma.array(), spec.depths(), &kernels);
            Ok(wa.iter().zip(sa.iter()).map(|(a, s)| a * s.powf(p - 1.0)).fold(1.0f64, f64::max))
        })
        .collect()
}

/// Weight generator recipe, tagged by `"recipe"` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", deny_unknown_fields)]
pub enum WeightRecipe {
    Constant { c: f64 },
    /// One one-parameter recipe per axis, multiplied together.
    Tensor { factors: Vec<WeightRecipe> },
    /// `Π_t (|x_t - c_t| + 2^{-N_t})^{α_t}` at cell centres; `c` is drawn from
    /// the seed when not given.
    PowerLike {
        alpha: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Cellwise iid log-uniform values in `[1/ρ, ρ]`.
    RandomBoundedRatio {
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// `Σ_i c_i w_i`; must not factor as a tensor product.
    NonTensorMix {
        components: Vec<WeightRecipe>,
        mixing: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl WeightRecipe {
    /// Short name of the recipe kind.
    pub fn kind(&self) -> &'static str {
        match self {
            WeightRecipe::Constant { .. } => "Constant",
            WeightRecipe::Tensor { .. } => "Tensor",
            WeightRecipe::PowerLike { .. } => "PowerLike",
            WeightRecipe::RandomBoundedRatio { .. } => "RandomBoundedRatio",
            WeightRecipe::NonTensorMix { .. } => "NonTensorMix",
        }
    }

    /// Compact JSON rendering used as a descriptor.
    pub fn descriptor(&self) -> String {
        serde_json::to_string(self).expect("recipes serialize")
    }

    fn own_seed(&self) -> Option<u64> {
        match self {
            WeightRecipe::PowerLike { seed, .. }
            | WeightRecipe::RandomBoundedRatio { seed, .. }
            | WeightRecipe::NonTensorMix { seed, .. } => *seed,
            _ => None,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidRecipe(msg.into())
}

fn raw_weight(spec: &GridSpec, recipe: &WeightRecipe, seed: u64) -> Result<GridFunction> {
    let seed = recipe.own_seed().unwrap_or(seed);
    let m = spec.param_count();
    match recipe {
        WeightRecipe::Constant { c } => {
            if !(c.is_finite() && *c > 0.0) {
                return Err(bad(format!("constant {c} must be positive")));
            }
            Ok(GridFunction::constant(spec, *c))
        }
        WeightRecipe::Tensor { factors } => {
            if factors.len() != m {
                return Err(bad(format!("Tensor needs {m} factors, got {}", factors.len())));
            }
            let parts = factors
                .iter()
                .enumerate()
                .map(|(t, r)| raw_weight(&GridSpec::new(&[spec.depth(t)])?, r, split_seed(seed, t as u64)))
                .collect::<Result<Vec<_>>>()?;
            GridFunction::tensor(&parts)
        }
        WeightRecipe::PowerLike { alpha, center, .. } => {
            if alpha.len() != m || alpha.iter().any(|a| !a.is_finite()) {
                return Err(bad(format!("PowerLike needs {m} finite exponents")));
            }
            let center = match center {
                Some(c) if c.len() == m && c.iter().all(|x| (0.0..=1.0).contains(x)) => c.clone(),
                Some(_) => return Err(bad(format!("PowerLike centre needs {m} coordinates in [0,1]"))),
                None => {
                    let mut rng = rng_from_seed(seed);
                    (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()
                }
            };
            Ok(GridFunction::from_fn(spec, |cell| {
                (0..m)
                    .map(|t| {
                        let h = pyramid::dyadic_len(spec.depth(t));
                        let x = (cell[t] as f64 + 0.5) * h;
                        ((x - center[t]).abs() + h).powf(alpha[t])
                    })
                    .product()
            }))
        }
        WeightRecipe::RandomBoundedRatio { rho, .. } => {
            if !(rho.is_finite() && *rho >= 1.0) {
                return Err(bad(format!("ρ = {rho} must be ≥ 1")));
            }
            if *rho == 1.0 {
                return Ok(GridFunction::constant(spec, 1.0));
            }
            let mut rng = rng_from_seed(seed);
            let l = rho.ln();
            let vals = (0..spec.cell_count()).map(|_| rng.gen_range(-l..=l).exp()).collect();
            GridFunction::new(spec.clone(), vals)
        }
        WeightRecipe::NonTensorMix { components, mixing, .. } => {
            if m < 2 {
                return Err(bad("NonTensorMix needs at least two parameters"));
            }
            if components.is_empty() || components.len() != mixing.len() {
                return Err(bad("NonTensorMix needs one mixing coefficient per component"));
            }
            if mixing.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(bad("mixing coefficients must be positive"));
            }
            let mut acc = GridFunction::zeros(spec);
            for (i, (r, c)) in components.iter().zip(mixing).enumerate() {
                let part = raw_weight(spec, r, split_seed(seed, i as u64))?;
                acc = acc.add(&part.scale(*c))?;
            }
            if is_tensor(&acc) {
                return Err(bad("mixture factors as a tensor product"));
            }
            Ok(acc)
        }
    }
}

/// Whether a positive function factors as `u(x_0) v(x_rest)`.
///
/// For positive values this holds iff `w(x,y) w(0,0) = w(x,0) w(0,y)`
/// everywhere, up to relative rounding.
pub fn is_tensor(w: &GridFunction) -> bool {
    let arr = w.array();
    let n0 = arr.shape()[0];
    let rows: Vec<Vec<f64>> = (0..n0).map(|x| arr.index_axis(Axis(0), x).iter().copied().collect()).collect();
    let w00 = rows[0][0];
    rows.iter().all(|row| {
        row.iter().zip(&rows[0]).all(|(&wxy, &w0y)| {
            let lhs = wxy * w00;
            let rhs = row[0] * w0y;
            (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs())
        })
    })
}

/// Deterministic weight from a recipe; rejects value ratios above [`MAX_VALUE_RATIO`].
pub fn generate_weight(spec: &GridSpec, recipe: &WeightRecipe, seed: u64) -> Result<Weight> {
    let w = Weight::new(raw_weight(spec, recipe, seed)?)?;
    let ratio = w.value_ratio();
    if ratio > MAX_VALUE_RATIO {
        return Err(bad(format!("value ratio {ratio:.3e} exceeds {MAX_VALUE_RATIO:e}")));
    }
    Ok(w)
}

/// Draw weights from `recipe` with split seeds until one has dyadic `A_2` constant
/// at most `max_a2`; gives up after `max_tries` draws.
pub fn sample_a2_weight(
    spec: &GridSpec,
    recipe: &WeightRecipe,
    seed: u64,
    max_a2: f64,
    max_tries: u64,
) -> Result<(Weight, u64)> {
    for attempt in 0..max_tries {
        let s = split_seed(seed, attempt);
        let w = generate_weight(spec, recipe, s)?;
        if w.ap(2.0)? <= max_a2 {
            return Ok((w, s));
        }
    }
    Err(Error::Degenerate(format!(
        "no draw of {} met A_2 ≤ {max_a2} in {max_tries} tries",
        recipe.kind()
    )))
}

/// Two weights with their Bloom weight.
#[derive(Clone, Debug)]
pub struct BloomWeight {
    pub mu: Weight,
    pub lambda: Weight,
    pub p: f64,
    pub nu: Weight,
}

fn nu_values(mu: &Weight, lambda: &Weight, p: f64) -> Result<GridFunction> {
    mu.function().zip_map(lambda.function(), |m, l| (m / l).powf(1.0 / p))
}

impl BloomWeight {
    /// Largest relative deviation of the stored `ν` from a fresh recomputation.
    pub fn consistency_error(&self) -> f64 {
        let fresh = nu_values(&self.mu, &self.lambda, self.p).expect("same grid");
        fresh
            .values()
            .iter()
            .zip(self.nu.values())
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0, f64::max)
    }
}

/// `ν = μ^{1/p} λ^{-1/p}` cellwise.
pub fn bloom_nu(mu: &Weight, lambda: &Weight, p: f64) -> Result<BloomWeight> {
    check_exponent(p)?;
    mu.spec().ensure_same(lambda.spec())?;
    let nu = Weight::new(nu_values(mu, lambda, p)?)?;
    Ok(BloomWeight { mu: mu.clone(), lambda: lambda.clone(), p, nu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::enumerate_rectangles;

    fn spec(d: &[u32]) -> GridSpec {
        GridSpec::new(d).unwrap()
    }

    fn w_of(spec: &GridSpec, vals: Vec<f64>) -> Weight {
        Weight::new(GridFunction::new(spec.clone(), vals).unwrap()).unwrap()
    }

    /// Brute-force oracle: loop over rectangles and cells directly.
    fn ap_oracle(w: &Weight, p: f64) -> f64 {
        let s = w.spec();
        enumerate_rectangles(s)
            .iter()
            .map(|r| {
                let cells = r.cells(s);
                let n = cells.len() as f64;
                let a: f64 = cells.iter().map(|&c| w.values()[c]).sum::<f64>() / n;
                let b: f64 = cells.iter().map(|&c| w.values()[c].powf(-1.0 / (p - 1.0))).sum::<f64>() / n;
                a * b.powf(p - 1.0)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn ap_examples() {
        let s = spec(&[3, 2]);
        assert_eq!(ap_constant(&Weight::unit(&s), 2.0).unwrap(), 1.0);
        assert_eq!(ap_constant(&generate_weight(&s, &WeightRecipe::Constant { c: 3.0 }, 0).unwrap(), 3.0).unwrap(), 1.0);
        let w = w_of(&spec(&[1]), vec![2.0, 1.0]);
        assert!((ap_constant(&w, 2.0).unwrap() - 1.125).abs() < 1e-15);
        assert!(matches!(ap_constant(&w, 1.0), Err(Error::ExponentOutOfRange(_))));
        assert!((ainf_constant(&w) - 1.5 * (-0.5 * 2f64.ln()).exp()).abs() < 1e-15);
        assert_eq!(ainf_constant(&Weight::unit(&s)), 1.0);
    }

    #[test]
    fn ap_matches_oracle() {
        let s = spec(&[3, 2]);
        for seed in 0..10 {
            let w = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 5.0, seed: None }, seed).unwrap();
            for p in [1.5, 2.0, 4.0] {
                let a = ap_constant(&w, p).unwrap();
                assert!((a - ap_oracle(&w, p)).abs() < 1e-12 * a);
            }
        }
    }

    #[test]
    fn ap_scale_invariance_monotonicity_duality() {
        let s = spec(&[3, 3]);
        for seed in 0..50 {
            let w = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 6.0, seed: None }, seed).unwrap();
            let a15 = ap_constant(&w, 1.5).unwrap();
            let a2 = ap_constant(&w, 2.0).unwrap();
            let a4 = ap_constant(&w, 4.0).unwrap();
            assert!(a15 >= a2 && a2 >= a4);
            assert!(ainf_constant(&w) <= a4 * (1.0 + 1e-12));

            // Power-of-two scaling is exact in floating point.
            let w8 = Weight::new(w.function().scale(8.0)).unwrap();
            assert_eq!(ap_constant(&w8, 2.0).unwrap(), a2);
            let w3 = Weight::new(w.function().scale(3.7)).unwrap();
            assert!((ap_constant(&w3, 2.0).unwrap() - a2).abs() < 1e-12 * a2);

            for p in [1.5, 3.0] {
                let pp = p / (p - 1.0);
                let dual = Weight::new(w.function().map(|v| v.powf(1.0 - pp))).unwrap();
                let lhs = ap_constant(&dual, pp).unwrap();
                let rhs = ap_constant(&w, p).unwrap().powf(pp - 1.0);
                assert!((lhs - rhs).abs() < 1e-10 * rhs);
            }
        }
    }

    #[test]
    fn iterated_constants() {
        let s = spec(&[3, 3]);
        assert_eq!(iterated_ap(&Weight::unit(&s), 2.0).unwrap(), vec![1.0, 1.0]);
        for seed in 0..50 {
            let w = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 4.0, seed: None }, seed).unwrap();
            let it = iterated_ap(&w, 2.0).unwrap();
            let full = ap_constant(&w, 2.0).unwrap();
            assert!(it.iter().all(|&c| c <= full));
        }
        let f1 = WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: Some(1) };
        let f2 = WeightRecipe::PowerLike { alpha: vec![0.5], center: Some(vec![0.3]), seed: None };
        let t = generate_weight(&s, &WeightRecipe::Tensor { factors: vec![f1.clone(), f2.clone()] }, 0).unwrap();
        let w1 = generate_weight(&spec(&[3]), &f1, 0).unwrap();
        let w2 = generate_weight(&spec(&[3]), &f2, 0).unwrap();
        let it = iterated_ap(&t, 2.0).unwrap();
        assert!((it[0] - ap_constant(&w1, 2.0).unwrap()).abs() < 1e-12 * it[0]);
        assert!((it[1] - ap_constant(&w2, 2.0).unwrap()).abs() < 1e-12 * it[1]);
        assert!(iterated_ap(&w1, 2.0).is_err());
    }

    #[test]
    fn recipes() {
        let s = spec(&[3, 3]);
        let c = generate_weight(&s, &WeightRecipe::Constant { c: 3.0 }, 9).unwrap();
        assert!(c.values().iter().all(|&v| v == 3.0));
        let one = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 1.0, seed: None }, 9).unwrap();
        assert!(one.is_unit());
        let r = WeightRecipe::RandomBoundedRatio { rho: 4.0, seed: None };
        let a = generate_weight(&s, &r, 5).unwrap();
        assert_eq!(a, generate_weight(&s, &r, 5).unwrap());
        assert_ne!(a, generate_weight(&s, &r, 6).unwrap());
        assert!(a.values().iter().all(|&v| (0.25..=4.0).contains(&v)));

        let mix = WeightRecipe::NonTensorMix {
            components: vec![
                WeightRecipe::PowerLike { alpha: vec![0.6, -0.4], center: Some(vec![0.2, 0.7]), seed: None },
                WeightRecipe::PowerLike { alpha: vec![-0.3, 0.5], center: Some(vec![0.8, 0.1]), seed: None },
            ],
            mixing: vec![1.0, 2.0],
            seed: None,
        };
        let w = generate_weight(&s, &mix, 0).unwrap();
        let v = |x: usize, y: usize| w.function().get(&[x, y]);
        let found = (0..8).any(|x| (0..8).any(|y| (v(x, y) * v(0, 0) - v(x, 0) * v(0, y)).abs() > 1e-9));
        assert!(found);

        let tensor_mix = WeightRecipe::NonTensorMix {
            components: vec![WeightRecipe::Constant { c: 1.0 }],
            mixing: vec![1.0],
            seed: None,
        };
        assert!(matches!(generate_weight(&s, &tensor_mix, 0), Err(Error::InvalidRecipe(_))));
        assert!(generate_weight(&s, &WeightRecipe::Constant { c: -1.0 }, 0).is_err());
        let steep = WeightRecipe::PowerLike { alpha: vec![-6.0, -6.0], center: Some(vec![0.5, 0.5]), seed: None };
        assert!(generate_weight(&s, &steep, 0).is_err());
    }

    #[test]
    fn recipe_json() {
        let r: WeightRecipe = serde_json::from_str(r#"{"recipe":"RandomBoundedRatio","rho":4,"seed":11}"#).unwrap();
        assert_eq!(r, WeightRecipe::RandomBoundedRatio { rho: 4.0, seed: Some(11) });
        let s = spec(&[2, 2]);
        assert_eq!(generate_weight(&s, &r, 0).unwrap(), generate_weight(&s, &r, 99).unwrap());
        let back: WeightRecipe = serde_json::from_str(&r.descriptor()).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<WeightRecipe>(r#"{"recipe":"Nope"}"#).is_err());
    }

    #[test]
    fn a2_sampling() {
        let s = spec(&[3, 3]);
        let r = WeightRecipe::PowerLike { alpha: vec![0.7, -0.7], center: None, seed: None };
        let (w, _) = sample_a2_weight(&s, &r, 1, 16.0, 50).unwrap();
        assert!(w.ap(2.0).unwrap() <= 16.0);
        assert!(sample_a2_weight(&s, &r, 1, 0.5, 3).is_err());
    }

    #[test]
    fn bloom_weights() {
        let s = spec(&[3, 3]);
        let r = WeightRecipe::RandomBoundedRatio { rho: 4.0, seed: None };
        let mu = generate_weight(&s, &r, 1).unwrap();
        let lam = generate_weight(&s, &r, 2).unwrap();
        let b = bloom_nu(&mu, &mu, 3.0).unwrap();
        assert!(b.nu.values().iter().all(|&v| v == 1.0));
        let b = bloom_nu(&mu, &Weight::unit(&s), 2.0).unwrap();
        for (n, m) in b.nu.values().iter().zip(mu.values()) {
            assert!((n - m.sqrt()).abs() < 1e-15);
        }
        let b = bloom_nu(&mu, &lam, 2.0).unwrap();
        assert!(b.consistency_error() < 1e-12);
        assert!(b.nu.ap(2.0).unwrap() <= (mu.ap(2.0).unwrap() * lam.ap(2.0).unwrap()).sqrt() * (1.0 + 1e-12));
        assert!(bloom_nu(&mu, &lam, 1.0).is_err());
    }

    #[test]
    fn masses() {
        let s = spec(&[2, 2]);
        let w = generate_weight(&s, &WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: None }, 4).unwrap();
        for r in enumerate_rectangles(&s) {
            let direct: f64 = r.cells(&s).iter().map(|&c| w.values()[c]).sum::<f64>() * s.cell_volume();
            assert!((w.mass(&r) - direct).abs() < 1e-14);
            let om = OmegaSet::from_rectangle(&s, &r).unwrap();
            assert!((w.omega_mass(&om) - direct).abs() < 1e-14);
        }
    }
}

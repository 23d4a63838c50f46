//! The verification suites run by `verify <suite>`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiment::{run_experiment, summarize};
use super::fixture::CalibrationFixture;
use super::Check;
use crate::bmo::{bmo_prod, bmo_prod_w, bmo_prod_weighted, h1_bmo_pairing, lift_aw, CoefSequence};
use crate::commutators::{bloom_ratio, commutator, decompose, e1_dual_bound, lemma52_sides, Lemma52Entry};
use crate::error::{Error, Result};
use crate::haar::{forward_transform, haar_function, inverse_transform};
use crate::lattice::{DyadicInterval, DyadicRectangle, GridFunction, GridSpec, OmegaFamily, OmegaStrategy};
use crate::maximal_square::{lp_norm, maximal, square_function, weighted_maximal, MaximalMode, SquareMode};
use crate::paraproducts::{
    aij, full_paraproduct, generate_partial_coefs, partial_paraproduct, FullParaproductSymmetry, Slot,
};
use crate::rng::split_seed;
use crate::weights::{bloom_nu, generate_weight, sample_a2_weight, Weight, WeightRecipe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Haar,
    Weights,
    Maximal,
    BmoExact,
    BmoEquivalence,
    Paraproducts,
    CommutatorIdentity,
    Bloom,
    Lemma52,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Haar,
        Suite::Weights,
        Suite::Maximal,
        Suite::BmoExact,
        Suite::BmoEquivalence,
        Suite::Paraproducts,
        Suite::CommutatorIdentity,
        Suite::Bloom,
        Suite::Lemma52,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Haar => "haar",
            Suite::Weights => "weights",
            Suite::Maximal => "maximal",
            Suite::BmoExact => "bmo-exact",
            Suite::BmoEquivalence => "bmo-equivalence",
            Suite::Paraproducts => "paraproducts",
            Suite::CommutatorIdentity => "commutator-identity",
            Suite::Bloom => "bloom",
            Suite::Lemma52 => "lemma52",
        }
    }

    /// Calibrated experiments whose fixtures the suite checks.
    pub fn experiments(&self) -> &'static [ExperimentKind] {
        match self {
            Suite::Maximal => &[ExperimentKind::Maximal],
            Suite::BmoEquivalence => &[ExperimentKind::BmoEquivalence, ExperimentKind::Pairing],
            Suite::Paraproducts => &[ExperimentKind::FullParaproduct],
            Suite::Bloom => &[ExperimentKind::Bloom],
            Suite::Lemma52 => &[ExperimentKind::Lemma52, ExperimentKind::E1Chain],
            _ => &[],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            Error::InvalidArgument(format!("unknown suite {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Where calibrated suites find their configs and fixtures.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Directory with `<experiment>.json` configs.
    pub configs: PathBuf,
    /// Directory with `<experiment>.json` fixtures.
    pub fixtures: PathBuf,
    /// Overrides the multiplier recorded in each fixture.
    pub multiplier: Option<f64>,
    /// Nonzero rounds rerun the configs with a derived seed.
    pub reseed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        let root = super::default_corpus_dir();
        Self { configs: root.join("configs"), fixtures: root.join("fixtures"), multiplier: None, reseed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{}: {} checks, {failed} failed", self.suite, self.checks.len())
    }
}

/// Loads the config for `kind` from `dir`.
pub fn load_config(dir: &Path, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let path = dir.join(format!("{}.json", kind.name()));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

/// Runs a calibrated experiment and compares it against its fixture.
pub fn check_against_fixture(kind: ExperimentKind, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let cfg = load_config(&opts.configs, kind)?.reseeded(opts.reseed);
    if cfg.experiment != kind {
        return Err(Error::Config { pointer: "/experiment".into(), message: format!("expected {}", kind.name()) });
    }
    let fixture = CalibrationFixture::load(&opts.fixtures.join(format!("{}.json", kind.name())))?;
    let summary = summarize(&cfg, &run_experiment(&cfg)?);
    Ok(fixture.compare(&summary, opts.multiplier))
}

/// Runs every check of a suite. Errors mean the suite could not be set up.
pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut checks = match suite {
        Suite::Haar => haar_checks()?,
        Suite::Weights => weight_checks()?,
        Suite::Maximal => maximal_checks()?,
        Suite::BmoExact => bmo_exact_checks()?,
        Suite::BmoEquivalence => Vec::new(),
        Suite::Paraproducts => paraproduct_checks()?,
        Suite::CommutatorIdentity => commutator_checks()?,
        Suite::Bloom => bloom_checks()?,
        Suite::Lemma52 => lemma52_checks()?,
    };
    for &kind in suite.experiments() {
        checks.extend(check_against_fixture(kind, opts)?);
    }
    Ok(SuiteReport { suite, checks })
}

fn max_check(name: &str, worst: f64, tol: f64) -> Check {
    Check::new(name, worst <= tol, format!("max error {worst:.3e} (tolerance {tol:e})"))
}

fn spec(d: &[u32]) -> Result<GridSpec> {
    GridSpec::new(d)
}

fn haar_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for depths in [vec![5, 5], vec![3, 3, 3]] {
        let s = spec(&depths)?;
        let (mut rec, mut pars) = (0.0f64, 0.0f64);
        for i in 0..100 {
            let f = GridFunction::random(&s, split_seed(1, i));
            let c = forward_transform(&f);
            rec = rec.max(inverse_transform(&c).max_abs_diff(&f));
            pars = pars.max((c.energy() - f.inner(&f)?).abs());
        }
        let label = format!("{depths:?}");
        out.push(max_check(&format!("round trip {label}"), rec, 1e-10));
        out.push(max_check(&format!("Parseval {label}"), pars, 1e-10));
    }
    let s = spec(&[3, 2])?;
    let f = GridFunction::random(&s, 9);
    let mut worst = 0.0f64;
    for axis in 0..2 {
        let sum = (0..=3).try_fold(GridFunction::zeros(&s), |acc, j| acc.add(&aij(&f, &f, axis, j)?))?;
        worst = worst.max(sum.max_abs_diff(&f.mul(&f)?));
    }
    out.push(max_check("martingale product expansion", worst, 1e-12));
    Ok(out)
}

fn a2_recipes(m: usize) -> Vec<WeightRecipe> {
    let alpha: Vec<f64> = (0..m).map(|t| if t % 2 == 0 { 0.4 } else { -0.3 }).collect();
    let mut v = vec![
        WeightRecipe::PowerLike { alpha, center: None, seed: None },
        WeightRecipe::RandomBoundedRatio { rho: 3.0, seed: None },
        WeightRecipe::Tensor { factors: vec![WeightRecipe::RandomBoundedRatio { rho: 2.0, seed: None }; m] },
    ];
    if m >= 2 {
        v.push(WeightRecipe::NonTensorMix {
            components: vec![
                WeightRecipe::RandomBoundedRatio { rho: 2.0, seed: None },
                WeightRecipe::PowerLike { alpha: vec![0.3; m], center: None, seed: None },
            ],
            mixing: vec![1.0, 1.0],
            seed: None,
        });
    }
    v
}

fn weight_checks() -> Result<Vec<Check>> {
    let s = spec(&[3, 3])?;
    let unit = Weight::unit(&s);
    let mut out = Vec::new();
    let unit_ap: Vec<f64> = [1.5, 2.0, 4.0].iter().map(|&p| unit.ap(p)).collect::<Result<_>>()?;
    out.push(Check::new("unit weight A_p = 1", unit_ap.iter().all(|&a| a == 1.0), format!("{unit_ap:?}")));
    let (mut mono, mut scale, mut bloom) = (true, 0.0f64, 0.0f64);
    for (ri, r) in a2_recipes(2).iter().enumerate() {
        for i in 0..10 {
            let w = generate_weight(&s, r, split_seed(ri as u64, i))?;
            let (a15, a2, a4) = (w.ap(1.5)?, w.ap(2.0)?, w.ap(4.0)?);
            mono &= 1.0 <= a4 && a4 <= a2 * (1.0 + 1e-12) && a2 <= a15 * (1.0 + 1e-12);
            let w3 = Weight::new(w.function().scale(3.0))?;
            scale = scale.max((w3.ap(2.0)? - a2).abs() / a2);
            let v = generate_weight(&s, r, split_seed(ri as u64 + 100, i))?;
            bloom = bloom.max(bloom_nu(&w, &v, 2.0)?.consistency_error());
        }
    }
    out.push(Check::new("A_p ≥ 1 and decreasing in p", mono, "40 sampled weights"));
    out.push(max_check("A_2 scale invariance", scale, 1e-12));
    out.push(max_check("Bloom weight consistency", bloom, 1e-12));
    Ok(out)
}

fn maximal_checks() -> Result<Vec<Check>> {
    let s = spec(&[4, 3])?;
    let unit = Weight::unit(&s);
    let (mut same, mut sq) = (true, f64::NEG_INFINITY);
    for i in 0..50 {
        let f = GridFunction::random(&s, split_seed(2, i));
        same &= weighted_maximal(&f, &unit)?.values() == maximal(&f, MaximalMode::Full)?.values();
        let sf = square_function(&f, &SquareMode::full(2))?;
        sq = sq.max(lp_norm(&sf, 2.0, None)? - lp_norm(&f, 2.0, None)?);
    }
    Ok(vec![
        Check::new("unit-weight maximal function equals dyadic maximal function", same, "50 samples, bitwise"),
        Check::new("‖S f‖_2 ≤ ‖f‖_2", sq <= 1e-12, format!("max excess {sq:.3e}")),
    ])
}

fn bmo_exact_checks() -> Result<Vec<Check>> {
    let s = spec(&[4, 4])?;
    let fam = OmegaFamily::build(&s, &OmegaStrategy::AllRectangles, 0)?;
    let unit = Weight::unit(&s);
    let mut collapse = 0.0f64;
    let mut holder = true;
    for i in 0..100 {
        let a = CoefSequence::random(&s, 8, split_seed(3, i));
        let mut norms = Vec::new();
        for p in [1.0, 2.0, 4.0] {
            let n = bmo_prod(&a, p, &fam)?.norm;
            collapse = collapse.max((bmo_prod_w(&a, p, &unit, &fam)?.norm - n).abs());
            norms.push(n);
        }
        holder &= norms[0] <= norms[1] * (1.0 + 1e-12) && norms[1] <= norms[2] * (1.0 + 1e-12);
    }
    let mut lifted = 0.0f64;
    for (ri, r) in a2_recipes(2).iter().enumerate() {
        for i in 0..12 {
            let (w, _) = sample_a2_weight(&s, r, split_seed(4 + ri as u64, i), 16.0, 200)?;
            let a = CoefSequence::random(&s, 8, split_seed(5 + ri as u64, i));
            let lhs = bmo_prod_weighted(&lift_aw(&a, &w)?, &w, &fam)?.norm;
            let rhs = bmo_prod_w(&a, 2.0, &w, &fam)?.norm;
            lifted = lifted.max((lhs - rhs).abs() / rhs);
        }
    }
    let mut pairing = 0.0f64;
    for (i, r) in crate::lattice::enumerate_rectangles(&s).iter().filter(|r| r.is_cancellative_on(&s)).enumerate().take(30) {
        let a = CoefSequence::from_entries(&s, [(r.clone(), 0.5 + i as f64)])?;
        let b = CoefSequence::from_entries(&s, [(r.clone(), -1.25)])?;
        let rep = h1_bmo_pairing(&a, &b, &unit, &fam)?;
        pairing = pairing.max((rep.lhs - rep.rhs()).abs() / rep.lhs);
    }
    Ok(vec![
        max_check("unit-weight collapse of weight-measured BMO", collapse, 1e-12),
        Check::new("‖A‖(1) ≤ ‖A‖(2) ≤ ‖A‖(4)", holder, "100 sequences over all rectangles"),
        max_check("lifted-sequence identity", lifted, 1e-12),
        max_check("single-rectangle pairing equality", pairing, 1e-12),
    ])
}

/// `1_I/|I|` or `h_I` as a one-parameter function.
fn profile(depth: u32, iv: &DyadicInterval, haar: bool) -> Result<GridFunction> {
    let iv0 = DyadicInterval { axis: 0, ..*iv };
    if haar {
        haar_function(depth, &iv0, true)
    } else {
        let s = spec(&[depth])?;
        Ok(GridFunction::from_fn(&s, |c| if iv0.contains_cell(depth, c[0]) { 1.0 / iv0.len() } else { 0.0 }))
    }
}

fn tensor_profile(depths: &[u32], parts: &[(DyadicInterval, bool)]) -> Result<GridFunction> {
    let fs = parts.iter().zip(depths).map(|((iv, h), &d)| profile(d, iv, *h)).collect::<Result<Vec<_>>>()?;
    GridFunction::tensor(&fs)
}

/// Sum over the support of `a`, one rank-one term at a time.
fn full_paraproduct_oracle(
    a: &CoefSequence,
    f1: &GridFunction,
    f2: &GridFunction,
    sym: FullParaproductSymmetry,
) -> Result<GridFunction> {
    let s = a.spec();
    let slots = [sym.axis0, sym.axis1];
    let mut acc = GridFunction::zeros(s);
    for (r, v) in a.iter() {
        let parts = |which: Slot| -> Vec<(DyadicInterval, bool)> {
            (0..2).map(|t| (r.interval(t), slots[t] == which)).collect()
        };
        let p1 = f1.inner(&tensor_profile(s.depths(), &parts(Slot::F1))?)?;
        let p2 = f2.inner(&tensor_profile(s.depths(), &parts(Slot::F2))?)?;
        acc = acc.add(&tensor_profile(s.depths(), &parts(Slot::Output))?.scale(v * p1 * p2))?;
    }
    Ok(acc)
}

fn paraproduct_checks() -> Result<Vec<Check>> {
    let s = spec(&[2, 2])?;
    let mut full = 0.0f64;
    for i in 0..10 {
        let a = CoefSequence::random(&s, 5, split_seed(6, i));
        let f1 = GridFunction::random(&s, split_seed(7, i));
        let f2 = GridFunction::random(&s, split_seed(8, i));
        for sym in FullParaproductSymmetry::all() {
            let got = full_paraproduct(&a, &f1, &f2, sym)?;
            full = full.max(got.max_abs_diff(&full_paraproduct_oracle(&a, &f1, &f2, sym)?));
        }
    }
    let s3 = spec(&[2, 2, 2])?;
    let mut partial = 0.0f64;
    for i in 0..10 {
        let c = generate_partial_coefs(&s3, (i % 2) as u32, ((i / 2) % 2) as u32, 3, split_seed(9, i))?;
        let f = GridFunction::random(&s3, split_seed(10, i));
        let mut acc = GridFunction::zeros(&s3);
        for (blk, seq) in c.blocks() {
            for (r, a) in seq.iter() {
                let (k2, k3) = (r.interval(0), r.interval(1));
                let input = tensor_profile(s3.depths(), &[(blk.i1, true), (k2, true), (k3, false)])?;
                let output = tensor_profile(s3.depths(), &[(blk.j1, true), (k2, false), (k3, true)])?;
                acc = acc.add(&output.scale(a * f.inner(&input)?))?;
            }
        }
        partial = partial.max(partial_paraproduct(&c, &f)?.max_abs_diff(&acc));
    }
    Ok(vec![
        max_check("full paraproducts match rank-one oracle at N=(2,2), nine symmetries", full, 1e-12),
        max_check("partial paraproduct matches rank-one oracle at N=(2,2,2)", partial, 1e-12),
    ])
}

fn commutator_checks() -> Result<Vec<Check>> {
    let s = spec(&[3, 3, 3])?;
    let mut worst = 0.0f64;
    let mut constant_zero = true;
    for i in 0..20u64 {
        let c = generate_partial_coefs(&s, (i % 3) as u32, ((i / 3) % 3) as u32, 1 + (i % 5) as usize, split_seed(11, i))?;
        let b = GridFunction::random(&s, split_seed(12, i));
        let f = GridFunction::random(&s, split_seed(13, i));
        let comm = commutator(&b, &c, &f)?;
        worst = worst.max(decompose(&b, &c, &f)?.sum()?.max_abs_diff(&comm));
        let k = GridFunction::constant(&s, 0.1 + i as f64);
        constant_zero &= commutator(&k, &c, &f)?.max_abs() == 0.0;
        constant_zero &= decompose(&k, &c, &f)?.terms.iter().all(|t| t.value.max_abs() == 0.0);
    }
    Ok(vec![
        max_check("decomposition terms sum to the commutator at N=(3,3,3)", worst, 1e-10),
        Check::new("constant symbols give zero commutator and zero terms", constant_zero, "20 instances, exact"),
    ])
}

fn bloom_checks() -> Result<Vec<Check>> {
    let s = spec(&[2, 2, 2])?;
    let mut worst = 0.0f64;
    for (ri, r) in a2_recipes(3).iter().enumerate() {
        for i in 0..3u64 {
            let seed = split_seed(14 + ri as u64, i);
            let (mu, _) = sample_a2_weight(&s, r, split_seed(seed, 0), 16.0, 200)?;
            let (lambda, _) = sample_a2_weight(&s, r, split_seed(seed, 1), 16.0, 200)?;
            let c = generate_partial_coefs(&s, 1, (i % 2) as u32, 2, split_seed(seed, 2))?;
            let b = GridFunction::random(&s, split_seed(seed, 3));
            let f = GridFunction::random(&s, split_seed(seed, 4));
            let base = bloom_ratio(&b, &c, &f, &mu, &lambda, 2.0)?;
            let mu5 = Weight::new(mu.function().scale(5.0))?;
            let lambda5 = Weight::new(lambda.function().scale(5.0))?;
            for other in [
                bloom_ratio(&b.scale(2.0), &c, &f, &mu, &lambda, 2.0)?,
                bloom_ratio(&b, &c, &f.scale(3.0), &mu, &lambda, 2.0)?,
                bloom_ratio(&b, &c, &f, &mu5, &lambda5, 2.0)?,
            ] {
                worst = worst.max((other - base).abs() / base);
            }
        }
    }
    Ok(vec![max_check("Bloom ratio invariant under b→2b, f→3f, (μ,λ)→(5μ,5λ)", worst, 1e-12)])
}

fn lemma52_checks() -> Result<Vec<Check>> {
    let s = spec(&[3, 3])?;
    let s1 = spec(&[3])?;
    let unit = Weight::unit(&s);
    let mut worst = 0.0f64;
    for (k, v) in [((0, 0), (0, 0)), ((1, 1), (2, 0)), ((2, 3), (1, 1))] {
        let r0 = DyadicRectangle::from_pairs(&[k, v])?;
        let a = CoefSequence::from_entries(&s, [(r0.clone(), r0.measure().sqrt())])?;
        let (ki, vi) = (r0.interval(0), DyadicInterval { axis: 0, ..r0.interval(1) });
        let ind = |iv: DyadicInterval| GridFunction::indicator(&s1, &DyadicRectangle::new(vec![iv]).expect("one axis"));
        let f = GridFunction::tensor(&[haar_function(3, &ki, true)?, ind(vi)])?;
        let g = GridFunction::tensor(&[ind(ki), haar_function(3, &vi, true)?])?;
        for q in [0.5, 1.0, 2.0, 3.0] {
            let sides = lemma52_sides(&[vec![Lemma52Entry { a: a.clone(), f: f.clone(), g: g.clone() }]], &unit, 2.0, q)?;
            let want = r0.measure().powf(1.0 - q / 2.0);
            worst = worst.max((sides.lhs - want).abs() / want).max((sides.rhs - want).abs() / want);
        }
    }
    let s3 = spec(&[3, 2, 2])?;
    let nu = generate_weight(&s3, &WeightRecipe::RandomBoundedRatio { rho: 2.0, seed: None }, 15)?;
    let mut dual = true;
    for i in 0..20u64 {
        let c = generate_partial_coefs(&s3, 1 + (i % 2) as u32, (i % 3) as u32, 3, split_seed(16, i))?;
        let fs: Vec<_> = (0..3).map(|j| GridFunction::random(&s3, split_seed(17 + j, i))).collect();
        let rep = e1_dual_bound(&fs[0], &c, &fs[1], &fs[2], &nu)?;
        dual &= rep.pairing <= rep.dualised * (1.0 + 1e-12);
    }
    Ok(vec![
        max_check("single-rectangle closed form lhs = rhs = |R|^(1-q/2)", worst, 1e-12),
        Check::new("E1 pairing ≤ dualised sum", dual, "20 instances"),
    ])
}

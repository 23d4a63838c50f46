//! Experiment configuration files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridFunction, GridSpec, OmegaFamily, OmegaStrategy};
use crate::paraproducts::FullParaproductSymmetry;
use crate::rng::split_seed;
use crate::weights::WeightRecipe;

/// Version of the CSV row layout and of fixture files.
pub const SCHEMA_VERSION: u32 = 1;

/// Which calibrated ratio an experiment samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// `‖A‖_{BMO_prod,w} / ‖A‖_{BMO_prod}` over a shared Ω family.
    BmoEquivalence,
    /// `Σ|a_R||b_R|` against `‖A‖_{BMO_prod,w} ‖S_B‖_{L^1(w)}`.
    Pairing,
    /// `‖M^w f‖_{L^p(w)} / ‖f‖_{L^p(w)}`.
    Maximal,
    /// Sampled operator norm of normalised full paraproducts.
    FullParaproduct,
    /// `‖[b,P]f‖_{L^p(λ)} / (‖b‖_{bmo(ν)} ‖f‖_{L^p(μ)})`.
    Bloom,
    /// Both sides of the bi-parameter square-function estimate.
    Lemma52,
    /// The `E1` majorisation chain.
    E1Chain,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BmoEquivalence => "bmo-equivalence",
            Self::Pairing => "pairing",
            Self::Maximal => "maximal",
            Self::FullParaproduct => "full-paraproduct",
            Self::Bloom => "bloom",
            Self::Lemma52 => "lemma52",
            Self::E1Chain => "e1-chain",
        }
    }

    /// Whether the lower tail of the ratio is calibrated as well as the upper.
    pub fn two_sided(&self) -> bool {
        matches!(self, Self::BmoEquivalence)
    }

    /// Length of each exponent tuple.
    pub fn exponent_arity(&self) -> usize {
        match self {
            Self::BmoEquivalence | Self::Maximal | Self::Bloom => 1,
            Self::FullParaproduct | Self::Lemma52 => 2,
            Self::Pairing | Self::E1Chain => 0,
        }
    }

    fn param_count(&self) -> Option<usize> {
        match self {
            Self::BmoEquivalence | Self::Pairing | Self::FullParaproduct | Self::Lemma52 => Some(2),
            Self::Bloom | Self::E1Chain => Some(3),
            Self::Maximal => None,
        }
    }
}

/// Ω family strategy as written in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", deny_unknown_fields)]
pub enum OmegaConfig {
    AllRectangles,
    RandomUnions { k: usize, count: usize },
    /// Superlevel sets of a seeded random field at evenly spaced thresholds.
    LevelSets { levels: usize },
    FullSpace,
}

impl OmegaConfig {
    fn strategy(&self, spec: &GridSpec, seed: u64) -> OmegaStrategy {
        match self {
            Self::AllRectangles => OmegaStrategy::AllRectangles,
            Self::RandomUnions { k, count } => OmegaStrategy::RandomUnions { k: *k, count: *count },
            Self::FullSpace => OmegaStrategy::FullSpace,
            Self::LevelSets { levels } => {
                let n = *levels as f64 + 1.0;
                OmegaStrategy::LevelSets {
                    field: GridFunction::random(spec, seed),
                    thresholds: (1..=*levels).map(|i| -1.0 + 2.0 * i as f64 / n).collect(),
                }
            }
        }
    }
}

fn default_omega() -> Vec<OmegaConfig> {
    vec![OmegaConfig::AllRectangles]
}
fn default_one() -> usize {
    1
}
fn default_max_a2() -> f64 {
    16.0
}
fn default_max_tries() -> u64 {
    200
}
fn default_support() -> usize {
    8
}
fn default_samples() -> usize {
    10
}
fn default_blocks() -> usize {
    3
}
fn default_families() -> [usize; 2] {
    [2, 2]
}

/// A fully deterministic experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// One entry per grid, listing per-axis depths.
    pub grids: Vec<Vec<u32>>,
    pub weights: Vec<WeightRecipe>,
    /// Weights drawn per recipe.
    #[serde(default = "default_one")]
    pub weights_per_recipe: usize,
    /// Instances per weight.
    pub instances: usize,
    /// Exponent tuples: `[p]` for BMO, maximal and Bloom ratios, `[p, q]` for
    /// full paraproducts and square-function sides, none for the rest.
    #[serde(default)]
    pub exponents: Vec<Vec<f64>>,
    #[serde(default = "default_omega")]
    pub omega: Vec<OmegaConfig>,
    /// Weights are redrawn until their dyadic `A_2` constant is at most this.
    #[serde(default = "default_max_a2")]
    pub max_a2: f64,
    #[serde(default = "default_max_tries")]
    pub max_tries: u64,
    /// Number of nonzero coefficients in random sequences.
    #[serde(default = "default_support")]
    pub support: usize,
    /// Test-function samples per full-paraproduct instance.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Upper bound on partial-paraproduct blocks.
    #[serde(default = "default_blocks")]
    pub max_blocks: usize,
    /// `[j, k]` family sizes of square-function instances.
    #[serde(default = "default_families")]
    pub families: [usize; 2],
    /// Full-paraproduct symmetries; all nine when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetries: Option<Vec<FullParaproductSymmetry>>,
}

fn config_error(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { pointer: pointer.into(), message: message.into() }
}

/// JSON pointer for a serde path.
pub(crate) fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

impl ExperimentConfig {
    /// Parses and validates a config; errors carry a JSON pointer.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| config_error(pointer(e.path()), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(config_error("/grids", "at least one grid is required"));
        }
        for (i, g) in self.grids.iter().enumerate() {
            GridSpec::new(g).map_err(|e| config_error(format!("/grids/{i}"), e.to_string()))?;
            if let Some(m) = self.experiment.param_count() {
                if g.len() != m {
                    return Err(config_error(
                        format!("/grids/{i}"),
                        format!("{} needs {m} parameters, got {}", self.experiment.name(), g.len()),
                    ));
                }
            }
        }
        if self.weights.is_empty() {
            return Err(config_error("/weights", "at least one weight recipe is required"));
        }
        let arity = self.experiment.exponent_arity();
        if self.exponents.is_empty() && arity > 0 {
            return Err(config_error("/exponents", "at least one exponent tuple is required"));
        }
        for (i, e) in self.exponents.iter().enumerate() {
            if e.len() != arity {
                return Err(config_error(
                    format!("/exponents/{i}"),
                    format!("{} takes {arity} exponents per tuple, got {}", self.experiment.name(), e.len()),
                ));
            }
            for (j, &x) in e.iter().enumerate() {
                let ok = x.is_finite()
                    && match (self.experiment, j) {
                        (ExperimentKind::BmoEquivalence, _) => x > 0.0,
                        (ExperimentKind::Lemma52, 0) => x >= 1.0,
                        (ExperimentKind::Lemma52, _) => x > 0.0,
                        _ => x > 1.0,
                    };
                if !ok {
                    return Err(config_error(format!("/exponents/{i}/{j}"), format!("exponent {x} out of range")));
                }
            }
        }
        if self.omega.is_empty() {
            return Err(config_error("/omega", "at least one Ω strategy is required"));
        }
        if self.max_a2.is_nan() || self.max_a2 < 1.0 {
            return Err(config_error("/max_a2", "A_2 constants are at least 1"));
        }
        for (field, v) in [("/weights_per_recipe", self.weights_per_recipe), ("/support", self.support), ("/max_blocks", self.max_blocks)] {
            if v == 0 {
                return Err(config_error(field, "must be positive"));
            }
        }
        if self.families.contains(&0) {
            return Err(config_error("/families", "family sizes must be positive"));
        }
        Ok(())
    }

    /// Ω family on `spec`, merging every listed strategy.
    pub fn omega_family(&self, spec: &GridSpec, seed: u64) -> Result<OmegaFamily> {
        let mut fam: Option<OmegaFamily> = None;
        for (i, o) in self.omega.iter().enumerate() {
            let s = split_seed(seed, i as u64);
            let next = OmegaFamily::build(spec, &o.strategy(spec, s), s)
                .map_err(|e| config_error(format!("/omega/{i}"), e.to_string()))?;
            fam = Some(match fam {
                None => next,
                Some(f) => f.merged(&next),
            });
        }
        Ok(fam.expect("validated non-empty"))
    }

    /// Exponent tuples to iterate; a single empty tuple when none apply.
    pub fn exponent_tuples(&self) -> Vec<Vec<f64>> {
        if self.exponents.is_empty() {
            vec![Vec::new()]
        } else {
            self.exponents.clone()
        }
    }

    pub fn symmetries(&self) -> Vec<FullParaproductSymmetry> {
        self.symmetries.clone().unwrap_or_else(FullParaproductSymmetry::all)
    }

    /// The same config with a different master seed.
    pub fn reseeded(&self, round: u64) -> Self {
        let mut c = self.clone();
        if round > 0 {
            c.seed = split_seed(self.seed, round);
        }
        c
    }
}

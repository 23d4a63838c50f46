//! Sampling runs: one CSV row per instance plus per-group summaries.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, SCHEMA_VERSION};
use crate::bmo::{bmo_prod, bmo_prod_w, h1_bmo_pairing, little_bmo_bloom, ratio_or_zero, CoefSequence};
use crate::commutators::{commutator, e1_dual_bound, lemma52_sides, Lemma52Entry};
use crate::error::{Error, Result};
use crate::lattice::{GridFunction, GridSpec, OmegaFamily, OmegaStrategy};
use crate::haar::{forward_transform, inverse_transform};
use crate::maximal_square::{fs_vector_maximal, lp_norm, square_function, vector_lp_norm, weighted_maximal, SquareMode};
use crate::paraproducts::{full_paraproduct_bound_report, generate_partial_coefs};
use crate::rng::{rng_from_seed, split_seed};
use crate::weights::{bloom_nu, sample_a2_weight, Weight};

/// One sampled instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub schema: u32,
    pub experiment: String,
    /// Calibration group: recipe, grid, exponents and variant.
    pub key: String,
    pub recipe: String,
    pub grid: String,
    pub exponents: String,
    pub variant: String,
    pub weight_index: usize,
    pub instance: usize,
    pub seed: u64,
    /// Dyadic `A_2` constant of the (first) sampled weight.
    pub weight_a2: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, with `0/0 = 0`.
    pub ratio: f64,
    /// Secondary diagnostic; its meaning depends on the experiment.
    pub aux: f64,
    pub degenerate: bool,
    /// Extremising Ω or instance parameters.
    pub detail: String,
}

/// Statistics of the ratio column over the non-degenerate rows of a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: usize,
    pub degenerate: usize,
    pub sup: f64,
    pub median: f64,
    pub inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema: u32,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub rows: usize,
    pub groups: BTreeMap<String, GroupSummary>,
}

impl ExperimentSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summaries serialize")
    }
}

fn grid_label(g: &[u32]) -> String {
    g.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn exponent_label(kind: ExperimentKind, e: &[f64]) -> String {
    let names: &[&str] = match kind {
        ExperimentKind::FullParaproduct | ExperimentKind::Lemma52 => &["p", "q"],
        _ => &["p"],
    };
    names.iter().zip(e).map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(",")
}

struct WeightSlot {
    grid: usize,
    recipe: usize,
    index: usize,
    seed: u64,
    weights: Vec<Weight>,
}

/// Ratios recorded by the maximal experiment: `‖M^w f‖/‖f‖`, `‖S f‖/‖f‖`,
/// `‖f‖/‖S f‖` on fully cancellative `f`, and the vector-valued maximal bound
/// with `s = 2`, all in `L^p(w)`.
pub const MAXIMAL_VARIANTS: [&str; 4] = ["maximal", "square", "square-lower", "fefferman-stein"];

struct Job<'a> {
    slot: &'a WeightSlot,
    exps: &'a [f64],
    variant: usize,
    instance: usize,
    seed: u64,
}

struct Outcome {
    lhs: f64,
    rhs: f64,
    aux: f64,
    detail: String,
}

fn weights_per_slot(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::FullParaproduct | ExperimentKind::Bloom => 2,
        _ => 1,
    }
}

/// Runs every instance of the config; rows come out in a fixed order
/// regardless of thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.validate()?;
    let kind = cfg.experiment;
    let specs: Vec<GridSpec> = cfg.grids.iter().map(|g| GridSpec::new(g)).collect::<Result<_>>()?;
    let families: Vec<OmegaFamily> = specs
        .iter()
        .enumerate()
        .map(|(gi, s)| cfg.omega_family(s, split_seed(cfg.seed, 1 << 32 | gi as u64)))
        .collect::<Result<_>>()?;
    let rect_families: Vec<Option<OmegaFamily>> = specs
        .iter()
        .map(|s| match kind {
            ExperimentKind::Lemma52 => OmegaFamily::build(s, &OmegaStrategy::AllRectangles, 0).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;

    let slot_ids: Vec<(usize, usize, usize)> = (0..specs.len())
        .flat_map(|g| (0..cfg.weights.len()).flat_map(move |r| (0..cfg.weights_per_recipe).map(move |i| (g, r, i))))
        .collect();
    let slots: Vec<WeightSlot> = slot_ids
        .par_iter()
        .map(|&(grid, recipe, index)| {
            let seed = split_seed(split_seed(split_seed(cfg.seed, grid as u64), recipe as u64), index as u64);
            let weights = (0..weights_per_slot(kind))
                .map(|k| {
                    sample_a2_weight(&specs[grid], &cfg.weights[recipe], split_seed(seed, k as u64), cfg.max_a2, cfg.max_tries)
                        .map(|(w, _)| w)
                        .map_err(|e| Error::Config { pointer: format!("/weights/{recipe}"), message: e.to_string() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(WeightSlot { grid, recipe, index, seed, weights })
        })
        .collect::<Result<_>>()?;

    let tuples = cfg.exponent_tuples();
    let symmetries = cfg.symmetries();
    let variant_names: Vec<String> = match kind {
        ExperimentKind::FullParaproduct => symmetries.iter().map(|s| s.to_string()).collect(),
        ExperimentKind::Maximal => MAXIMAL_VARIANTS.iter().map(|s| s.to_string()).collect(),
        _ => vec![String::new()],
    };
    let variants = variant_names.len();
    let mut jobs = Vec::new();
    for slot in &slots {
        for (ei, exps) in tuples.iter().enumerate() {
            for variant in 0..variants {
                for instance in 0..cfg.instances {
                    let seed = split_seed(split_seed(split_seed(slot.seed, 1000 + ei as u64), variant as u64), instance as u64);
                    jobs.push(Job { slot, exps, variant, instance, seed });
                }
            }
        }
    }

    jobs.par_iter()
        .map(|job| {
            let spec = &specs[job.slot.grid];
            let fam = &families[job.slot.grid];
            let out = run_instance(cfg, spec, fam, rect_families[job.slot.grid].as_ref(), job, &symmetries)?;
            let variant = variant_names[job.variant].clone();
            let recipe = format!("{}#{}", cfg.weights[job.slot.recipe].kind(), job.slot.recipe);
            let grid = grid_label(&cfg.grids[job.slot.grid]);
            let exponents = exponent_label(kind, job.exps);
            Ok(Row {
                schema: SCHEMA_VERSION,
                experiment: kind.name().into(),
                key: format!("{recipe}|{grid}|{exponents}|{variant}"),
                recipe,
                grid,
                exponents,
                variant,
                weight_index: job.slot.index,
                instance: job.instance,
                seed: job.seed,
                weight_a2: job.slot.weights[0].ap(2.0)?,
                lhs: out.lhs,
                rhs: out.rhs,
                ratio: ratio_or_zero(out.lhs, out.rhs),
                aux: out.aux,
                degenerate: out.rhs == 0.0,
                detail: out.detail,
            })
        })
        .collect()
}

fn run_instance(
    cfg: &ExperimentConfig,
    spec: &GridSpec,
    fam: &OmegaFamily,
    rect_fam: Option<&OmegaFamily>,
    job: &Job<'_>,
    symmetries: &[crate::paraproducts::FullParaproductSymmetry],
) -> Result<Outcome> {
    let s = job.seed;
    let w = &job.slot.weights;
    let random_fn = |i: u64| GridFunction::random(spec, split_seed(s, i));
    Ok(match cfg.experiment {
        ExperimentKind::BmoEquivalence => {
            let p = job.exps[0];
            let a = CoefSequence::random(spec, cfg.support, s);
            let lhs = bmo_prod_w(&a, p, &w[0], fam)?;
            let rhs = bmo_prod(&a, p, fam)?;
            Outcome { lhs: lhs.norm, rhs: rhs.norm, aux: w[0].ap(2.0)?, detail: lhs.omega }
        }
        ExperimentKind::Pairing => {
            let a = CoefSequence::random(spec, cfg.support, split_seed(s, 0));
            let b = CoefSequence::random(spec, cfg.support, split_seed(s, 1));
            let rep = h1_bmo_pairing(&a, &b, &w[0], fam)?;
            Outcome { lhs: rep.lhs, rhs: rep.rhs(), aux: rep.bmo, detail: String::new() }
        }
        ExperimentKind::Maximal => {
            let p = job.exps[0];
            let norm = |g: &GridFunction| lp_norm(g, p, Some(&w[0]));
            let square = |g: &GridFunction| square_function(g, &SquareMode::full(spec.param_count()));
            let f = random_fn(0);
            let (lhs, rhs) = match MAXIMAL_VARIANTS[job.variant] {
                "maximal" => (norm(&weighted_maximal(&f, &w[0])?)?, norm(&f)?),
                "square" => (norm(&square(&f)?)?, norm(&f)?),
                "square-lower" => {
                    let g = inverse_transform(&forward_transform(&f).keep_cancellative());
                    (norm(&g)?, norm(&square(&g)?)?)
                }
                _ => {
                    let fs: Vec<_> = (1..=4).map(random_fn).collect();
                    (fs_vector_maximal(&fs, 2.0, p, Some(&w[0]))?, vector_lp_norm(&fs, 2.0, p, Some(&w[0]))?)
                }
            };
            Outcome { lhs, rhs, aux: 0.0, detail: String::new() }
        }
        ExperimentKind::FullParaproduct => {
            let (p, q) = (job.exps[0], job.exps[1]);
            let r = p * q / (p + q);
            let a = CoefSequence::random(spec, cfg.support, split_seed(s, 0));
            let rep = full_paraproduct_bound_report(&a, &w[0], &w[1], p, q, r, symmetries[job.variant], cfg.samples, split_seed(s, 1))?;
            Outcome { lhs: rep.sup_ratio, rhs: 1.0, aux: rep.sup_dual_ratio, detail: format!("r={r}") }
        }
        ExperimentKind::Bloom => {
            let p = job.exps[0];
            let mut rng = rng_from_seed(split_seed(s, 0));
            let cap = 2.min(spec.depth(0) - 1);
            let (i1, j1) = (rng.gen_range(0..=cap), rng.gen_range(0..=cap));
            let blocks = rng.gen_range(1..=cfg.max_blocks);
            let c = generate_partial_coefs(spec, i1, j1, blocks, split_seed(s, 1))?;
            let (b, f) = (random_fn(2), random_fn(3));
            let bw = bloom_nu(&w[0], &w[1], p)?;
            let bmo = little_bmo_bloom(&b, &bw.nu)?;
            let lhs = lp_norm(&commutator(&b, &c, &f)?, p, Some(&w[1]))?;
            let rhs = bmo * lp_norm(&f, p, Some(&w[0]))?;
            Outcome { lhs, rhs, aux: bw.nu.ap(2.0)?, detail: format!("i1={i1},j1={j1},blocks={}", c.block_count()) }
        }
        ExperimentKind::Lemma52 => {
            let (p, q) = (job.exps[0], job.exps[1]);
            let rect_fam = rect_fam.expect("built for this experiment");
            let mut rng = rng_from_seed(split_seed(s, 0));
            let [nj, nk] = cfg.families;
            let mut families = Vec::with_capacity(nj);
            for j in 0..nj {
                let mut row = Vec::with_capacity(nk);
                for k in 0..nk {
                    let t = split_seed(s, 1 + (j * nk + k) as u64);
                    let a = CoefSequence::random(spec, cfg.support, split_seed(t, 0));
                    let norm = bmo_prod(&a, 2.0, rect_fam)?.norm;
                    let a = a.scale(rng.gen_range(0.5..=1.0) / norm);
                    row.push(Lemma52Entry {
                        a,
                        f: GridFunction::random(spec, split_seed(t, 1)),
                        g: GridFunction::random(spec, split_seed(t, 2)),
                    });
                }
                families.push(row);
            }
            let sides = lemma52_sides(&families, &w[0], p, q)?;
            Outcome { lhs: sides.lhs, rhs: sides.rhs, aux: 0.0, detail: format!("families={nj}x{nk}") }
        }
        ExperimentKind::E1Chain => {
            let mut rng = rng_from_seed(split_seed(s, 0));
            let cap = 2.min(spec.depth(0) - 1);
            let (i1, j1) = (rng.gen_range(1..=cap.max(1)), rng.gen_range(0..=cap));
            let blocks = rng.gen_range(1..=cfg.max_blocks);
            let c = generate_partial_coefs(spec, i1, j1, blocks, split_seed(s, 1))?;
            let rep = e1_dual_bound(&random_fn(2), &c, &random_fn(3), &random_fn(4), &w[0])?;
            Outcome {
                lhs: rep.lhs,
                rhs: rep.rhs,
                aux: ratio_or_zero(rep.pairing, rep.dualised),
                detail: format!("i1={i1},j1={j1},blocks={}", c.block_count()),
            }
        }
    })
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Per-key sup/median/inf of the ratio column.
pub fn summarize(cfg: &ExperimentConfig, rows: &[Row]) -> ExperimentSummary {
    let mut by_key: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let e = by_key.entry(r.key.clone()).or_default();
        if r.degenerate {
            e.1 += 1;
        } else {
            e.0.push(r.ratio);
        }
    }
    let groups = by_key
        .into_iter()
        .map(|(k, (mut v, degenerate))| {
            v.sort_by(f64::total_cmp);
            let g = GroupSummary {
                count: v.len(),
                degenerate,
                sup: v.last().copied().unwrap_or(0.0),
                median: median(&v),
                inf: v.first().copied().unwrap_or(0.0),
            };
            (k, g)
        })
        .collect();
    ExperimentSummary { schema: SCHEMA_VERSION, experiment: cfg.experiment, seed: cfg.seed, rows: rows.len(), groups }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_reader(input);
    let rows: Vec<Row> = r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| Error::Io(e.to_string()))?;
    if let Some(bad) = rows.iter().find(|r| r.schema != SCHEMA_VERSION) {
        return Err(Error::Io(format!("CSV schema {} does not match {SCHEMA_VERSION}", bad.schema)));
    }
    Ok(rows)
}

//! Calibration fixtures: recorded ratio statistics standing in for unstated
//! constants, and the comparison of fresh runs against them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, SCHEMA_VERSION};
use super::experiment::{run_experiment, summarize, ExperimentSummary, GroupSummary};
use super::Check;
use crate::error::{Error, Result};

/// Slack allowed between a fixture and a fresh run.
pub const DEFAULT_MULTIPLIER: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFixture {
    pub schema: u32,
    pub experiment: ExperimentKind,
    /// Master seed of the calibrating run.
    pub seed: u64,
    pub multiplier: f64,
    /// Whether `inf` is checked as well as `sup`.
    pub two_sided: bool,
    /// Keyed by `recipe|grid|exponents|variant`.
    pub entries: BTreeMap<String, GroupSummary>,
}

impl CalibrationFixture {
    pub fn from_summary(summary: &ExperimentSummary) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            experiment: summary.experiment,
            seed: summary.seed,
            multiplier: DEFAULT_MULTIPLIER,
            two_sided: summary.experiment.two_sided(),
            entries: summary.groups.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let f: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            pointer: super::config::pointer(e.path()),
            message: e.inner().to_string(),
        })?;
        if f.schema != SCHEMA_VERSION {
            return Err(Error::Config {
                pointer: "/schema".into(),
                message: format!("fixture schema {} does not match {SCHEMA_VERSION}", f.schema),
            });
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Writes the fixture; an existing file is only replaced with `force`.
    pub fn save(&self, path: &Path, force: bool) -> Result<()> {
        if path.exists() && !force {
            return Err(Error::Io(format!("{} exists; pass --force to overwrite", path.display())));
        }
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    /// Checks a fresh summary: every group must be recorded, its sup may not
    /// exceed `multiplier × sup`, and for two-sided fixtures its inf may not
    /// drop below `inf / multiplier`.
    pub fn compare(&self, fresh: &ExperimentSummary, multiplier: Option<f64>) -> Vec<Check> {
        let m = multiplier.unwrap_or(self.multiplier);
        let name = self.experiment.name();
        if fresh.experiment != self.experiment {
            return vec![Check::fail(
                format!("{name}: experiment"),
                format!("fixture records {name}, run is {}", fresh.experiment.name()),
            )];
        }
        let mut checks = Vec::new();
        for (key, g) in &fresh.groups {
            let label = format!("{name}[{key}]");
            let Some(rec) = self.entries.get(key) else {
                checks.push(Check::fail(label, "group missing from fixture"));
                continue;
            };
            let upper = g.sup <= m * rec.sup;
            let lower = !self.two_sided || g.inf >= rec.inf / m;
            let detail = if self.two_sided {
                format!("sup {:.6} ≤ {m}×{:.6}, inf {:.6} ≥ {:.6}/{m}", g.sup, rec.sup, g.inf, rec.inf)
            } else {
                format!("sup {:.6} ≤ {m}×{:.6}", g.sup, rec.sup)
            };
            checks.push(Check::new(label, upper && lower, detail));
        }
        checks
    }
}

/// Runs `cfg` and records its statistics.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<CalibrationFixture> {
    let rows = run_experiment(cfg)?;
    Ok(CalibrationFixture::from_summary(&summarize(cfg, &rows)))
}

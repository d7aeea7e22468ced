use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::stats::mean_std;
use crate::error::{Error, Result};

/// Crate version plus `git describe` of the tree it was built from.
pub const BUILD_ID: &str = env!("WDGNN_BUILD_ID");

pub const MANIFEST_FILE: &str = "experiment.json";

/// Both flocking metrics of one closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutScore {
    pub total_variation: f64,
    pub final_variation: f64,
}

/// Mean ± std of both metrics over the rollouts that finished. Diverged
/// rollouts are counted, not averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub total_mean: f64,
    pub total_std: f64,
    pub final_mean: f64,
    pub final_std: f64,
    pub rollouts: usize,
    pub diverged: usize,
}

impl MetricRow {
    pub fn from_scores(name: &str, scores: &[Option<RolloutScore>]) -> Self {
        let done: Vec<RolloutScore> = scores.iter().flatten().copied().collect();
        let totals: Vec<f64> = done.iter().map(|s| s.total_variation).collect();
        let finals: Vec<f64> = done.iter().map(|s| s.final_variation).collect();
        let (total_mean, total_std) = mean_std(&totals);
        let (final_mean, final_std) = mean_std(&finals);
        Self {
            name: name.into(),
            total_mean,
            total_std,
            final_mean,
            final_std,
            rollouts: scores.len(),
            diverged: scores.len() - done.len(),
        }
    }
}

pub const METRIC_HEADER: &str = "row,total_mean,total_std,final_mean,final_std,rollouts,diverged";

pub fn metric_rows_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRIC_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{},{}\n",
            r.name, r.total_mean, r.total_std, r.final_mean, r.final_std, r.rollouts, r.diverged
        ));
    }
    out
}

/// What a command did, written as `experiment.json` in its run directory.
/// Holds no timestamps or paths, so reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub build: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    #[serde(default)]
    pub metrics: Vec<MetricRow>,
    /// Files in the run directory, relative to it.
    #[serde(default)]
    pub artifacts: Vec<String>,
}

impl ExperimentManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            build: BUILD_ID.into(),
            seed: config.seed,
            config: config.clone(),
            notes: BTreeMap::new(),
            metrics: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.insert(key.into(), value.to_string());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_skip_diverged_rollouts() {
        let s = |t, f| {
            Some(RolloutScore {
                total_variation: t,
                final_variation: f,
            })
        };
        let row = MetricRow::from_scores("x", &[s(1.0, 0.1), None, s(3.0, 0.3)]);
        assert_eq!((row.total_mean, row.rollouts, row.diverged), (2.0, 3, 1));
        assert!((row.final_mean - 0.2).abs() < 1e-15);
        assert!((row.total_std - 2f64.sqrt()).abs() < 1e-15);
        let csv = metric_rows_csv(&[row]);
        assert!(csv.starts_with(METRIC_HEADER));
        assert!(csv.ends_with(",3,1\n"));
    }

    #[test]
    fn manifests_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = ExperimentManifest::new("test", &ExperimentConfig::desk());
        m.note("k", 3);
        m.write(dir.path()).unwrap();
        assert_eq!(ExperimentManifest::read(dir.path()).unwrap(), m);
        assert!(m.build.starts_with(env!("CARGO_PKG_VERSION")));
    }
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{metric_rows_csv, write_file, ExperimentManifest, MetricRow, RolloutScore};
use super::stats::spearman;
use crate::error::{Error, Result};
use crate::flocking::{rollout, velocity_variation_final, velocity_variation_total, FlockingConfig, Trajectory};
use crate::model::{checkpoint, WdGnnParams};
use crate::online::{run_online_phase, theorem_suite, write_records_csv, OnlineConfig, OnlineMode, TheoremSummary};
use crate::rng::{self, label};
use crate::training::{train, Dataset, ModelKind, TrainOutcome, WdGnnController};

/// Row labels of the evaluation table, in print order.
pub const ROW_OPTIMAL: &str = "optimal";
pub const ROW_FROZEN: &str = "wdgnn";
pub const ROW_CENTRALIZED: &str = "wdgnn+centralized";
pub const ROW_DECENTRALIZED: &str = "wdgnn+decentralized";
pub const ROW_GNN: &str = "gnn";
pub const ROW_FILTER: &str = "filter";

/// How the swarm is driven in an evaluation rollout.
#[derive(Debug, Clone)]
pub enum Policy<'a> {
    /// The centralized expert.
    Optimal,
    Frozen(&'a WdGnnParams),
    Online(&'a WdGnnParams, OnlineConfig),
}

fn score(traj: &Trajectory) -> Result<RolloutScore> {
    Ok(RolloutScore {
        total_variation: velocity_variation_total(traj)?,
        final_variation: velocity_variation_final(traj)?,
    })
}

/// Scores `policy` from the initial state of every trajectory in `test`.
/// A rollout that fails numerically scores `None`.
pub fn score_rollouts(
    test: &[Trajectory],
    flock: &FlockingConfig,
    policy: &Policy<'_>,
) -> Result<Vec<Option<RolloutScore>>> {
    test.par_iter()
        .map(|traj| {
            let run = match policy {
                // Expert rollouts are deterministic, so the recorded one is reused.
                Policy::Optimal => return score(traj).map(Some),
                Policy::Frozen(p) => rollout(flock, traj.states[0].clone(), &mut WdGnnController::new((*p).clone())),
                Policy::Online(p, cfg) => run_online_phase(p, flock, traj.states[0].clone(), cfg).map(|r| r.trajectory),
            };
            match run {
                Ok(t) => score(&t).map(Some),
                Err(e) if e.is_numeric() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// The experiment config with the flocking scenario and split sizes taken
/// from a stored dataset.
fn bind_dataset(cfg: &ExperimentConfig, data: &Dataset) -> ExperimentConfig {
    ExperimentConfig {
        flocking: data.config,
        dataset: data.sizes(),
        ..cfg.clone()
    }
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentManifest> {
    cfg.validate()?;
    let data = Dataset::generate(&cfg.flocking, cfg.dataset, cfg.seed)?;
    for traj in data.train.iter().chain(&data.valid).chain(&data.test) {
        let err = traj.reintegration_error(cfg.flocking.sample_time)?;
        if err > 1e-9 {
            return Err(Error::NonFinite {
                context: format!("expert trajectory fails re-integration by {err}"),
            });
        }
    }
    let stored = data.save(out)?;
    let mut m = ExperimentManifest::new("gen-data", cfg);
    let expert = score_rollouts(&data.test, &cfg.flocking, &Policy::Optimal)?;
    m.metrics.push(MetricRow::from_scores(ROW_OPTIMAL, &expert));
    m.artifacts = stored.files;
    m.artifacts.push("manifest.json".into());
    m.write(out)?;
    Ok(m)
}

pub fn checkpoint_file(kind: ModelKind) -> String {
    format!("{}.json", kind.name())
}

/// Trains one model of each kind in `kinds` on `data`. Every kind starts
/// from the same random draw, with its inactive branch switched off.
pub fn train_models(
    cfg: &ExperimentConfig,
    data: &Dataset,
    kinds: &[ModelKind],
) -> Result<Vec<(ModelKind, TrainOutcome)>> {
    let arch = cfg.architecture();
    let tc = cfg.training.with_seed(cfg.seed);
    kinds
        .iter()
        .map(|&kind| {
            let out = train(
                kind.init(&arch, cfg.seed),
                kind.mask(),
                &data.train,
                &data.valid,
                &data.config,
                &tc,
            )?;
            Ok((kind, out))
        })
        .collect()
}

pub fn loss_curve_csv(outcome: &TrainOutcome) -> String {
    let mut out = String::from("epoch,steps,train_loss,valid_metric\n");
    for r in &outcome.history {
        let valid = r.valid_metric.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(out, "{},{},{:?},{valid}", r.epoch, r.steps, r.train_loss).expect("writing to a String cannot fail");
    }
    out
}

/// Trains every kind in `kinds` on the dataset in `dataset_dir`, writing a
/// checkpoint and a loss curve per kind into `out`.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    dataset_dir: &Path,
    kinds: &[ModelKind],
    out: &Path,
) -> Result<ExperimentManifest> {
    let data = Dataset::load(dataset_dir)?;
    let cfg = bind_dataset(cfg, &data);
    cfg.validate()?;
    let mut m = ExperimentManifest::new("train", &cfg);
    m.note("dataset_seed", data.seed);
    for (kind, outcome) in train_models(&cfg, &data, kinds)? {
        let name = kind.name();
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), name.to_string());
        meta.insert("best_epoch".to_string(), outcome.best_epoch.to_string());
        meta.insert("seed".to_string(), cfg.seed.to_string());
        meta.insert("dataset_seed".to_string(), data.seed.to_string());
        meta.insert("build".to_string(), m.build.clone());
        let file = checkpoint_file(kind);
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        checkpoint::save(&out.join(&file), &outcome.params, &meta)?;
        let curve = format!("{name}_loss.csv");
        write_file(&out.join(&curve), &loss_curve_csv(&outcome))?;
        m.note(&format!("{name}.best_epoch"), outcome.best_epoch);
        if let Some(best) = outcome.history.iter().find(|r| r.epoch == outcome.best_epoch) {
            if let Some(v) = best.valid_metric {
                m.note(&format!("{name}.valid_metric"), format!("{v:?}"));
            }
        }
        m.artifacts.extend([file, curve]);
    }
    m.write(out)?;
    Ok(m)
}

pub fn load_model(dir: &Path, kind: ModelKind) -> Result<WdGnnParams> {
    Ok(checkpoint::load(&dir.join(checkpoint_file(kind)))?.0)
}

/// Per-rollout scores of every evaluated row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<(String, Vec<Option<RolloutScore>>)>,
}

impl EvalReport {
    pub fn scores(&self, name: &str) -> Option<&[Option<RolloutScore>]> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_slice())
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        self.rows.iter().map(|(n, s)| MetricRow::from_scores(n, s)).collect()
    }

    pub fn rollouts_csv(&self) -> String {
        let mut out = String::from("row,index,total,final\n");
        for (name, scores) in &self.rows {
            for (i, s) in scores.iter().enumerate() {
                match s {
                    Some(s) => writeln!(out, "{name},{i},{:?},{:?}", s.total_variation, s.final_variation),
                    None => writeln!(out, "{name},{i},inf,inf"),
                }
                .expect("writing to a String cannot fail");
            }
        }
        out
    }
}

/// Trained models of all three kinds.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub wdgnn: WdGnnParams,
    pub gnn: WdGnnParams,
    pub filter: WdGnnParams,
}

impl ModelSet {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self {
            wdgnn: load_model(dir, ModelKind::WdGnn)?,
            gnn: load_model(dir, ModelKind::GnnOnly)?,
            filter: load_model(dir, ModelKind::FilterOnly)?,
        })
    }
}

/// Every row of the comparison on the test trajectories: the expert, the
/// frozen WD-GNN, the WD-GNN retrained online in both modes and the two
/// single-branch baselines.
pub fn evaluate(cfg: &ExperimentConfig, test: &[Trajectory], models: &ModelSet) -> Result<EvalReport> {
    let flock = &cfg.flocking;
    let online = |mode| OnlineConfig { mode, ..cfg.online };
    let policies = [
        (ROW_OPTIMAL, Policy::Optimal),
        (ROW_FROZEN, Policy::Frozen(&models.wdgnn)),
        (
            ROW_CENTRALIZED,
            Policy::Online(&models.wdgnn, online(OnlineMode::Centralized)),
        ),
        (
            ROW_DECENTRALIZED,
            Policy::Online(&models.wdgnn, online(OnlineMode::Decentralized)),
        ),
        (ROW_GNN, Policy::Frozen(&models.gnn)),
        (ROW_FILTER, Policy::Frozen(&models.filter)),
    ];
    let rows = policies
        .iter()
        .map(|(name, policy)| Ok((name.to_string(), score_rollouts(test, flock, policy)?)))
        .collect::<Result<_>>()?;
    Ok(EvalReport { rows })
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    dataset_dir: &Path,
    checkpoints: &Path,
    out: &Path,
) -> Result<(EvalReport, ExperimentManifest)> {
    let models = ModelSet::load(checkpoints)?;
    let data = Dataset::load(dataset_dir)?;
    let cfg = bind_dataset(cfg, &data);
    cfg.validate()?;
    let report = evaluate(&cfg, &data.test, &models)?;
    let mut m = ExperimentManifest::new("eval", &cfg);
    m.note("dataset_seed", data.seed);
    m.metrics = report.metric_rows();
    write_file(&out.join("eval.csv"), &metric_rows_csv(&m.metrics))?;
    write_file(&out.join("eval_rollouts.csv"), &report.rollouts_csv())?;
    m.artifacts = vec!["eval.csv".into(), "eval_rollouts.csv".into()];
    m.write(out)?;
    Ok((report, m))
}

/// Online retraining of one checkpoint from every test initial state, next
/// to the same model kept frozen.
pub fn cmd_online(
    cfg: &ExperimentConfig,
    dataset_dir: &Path,
    checkpoint_path: &Path,
    out: &Path,
) -> Result<ExperimentManifest> {
    let (params, _) = checkpoint::load(checkpoint_path)?;
    let data = Dataset::load(dataset_dir)?;
    let cfg = bind_dataset(cfg, &data);
    cfg.validate()?;
    let mut m = ExperimentManifest::new("online", &cfg);
    m.note("dataset_seed", data.seed);
    let runs = data
        .test
        .par_iter()
        .map(
            |traj| match run_online_phase(&params, &cfg.flocking, traj.states[0].clone(), &cfg.online) {
                Ok(run) => Ok(Some(run)),
                Err(e) if e.is_numeric() => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut online = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let Some(run) = run else {
            online.push(None);
            continue;
        };
        let file = format!("online_{i:04}.csv");
        write_file(&out.join(&file), &write_records_csv(&run.records))?;
        m.artifacts.push(file);
        online.push(Some(RolloutScore {
            total_variation: run.total_variation,
            final_variation: run.final_variation,
        }));
    }
    let frozen = score_rollouts(&data.test, &cfg.flocking, &Policy::Frozen(&params))?;
    let mode = match cfg.online.mode {
        OnlineMode::Centralized => ROW_CENTRALIZED,
        OnlineMode::Decentralized => ROW_DECENTRALIZED,
    };
    m.metrics = vec![
        MetricRow::from_scores(ROW_FROZEN, &frozen),
        MetricRow::from_scores(mode, &online),
    ];
    m.write(out)?;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Communication radius r.
    Radius,
    /// Initial velocity bound v.
    Velocity,
    /// Number of agents N.
    Agents,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Radius => "radius",
            SweepAxis::Velocity => "velocity",
            SweepAxis::Agents => "agents",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Radius => vec![1.0, 1.5, 2.0, 2.5, 3.0],
            SweepAxis::Velocity => vec![1.0, 2.0, 3.0, 4.0, 5.0],
            SweepAxis::Agents => vec![10.0, 15.0, 20.0, 25.0, 30.0],
        }
    }

    pub fn apply(self, flock: &FlockingConfig, value: f64) -> Result<FlockingConfig> {
        let mut f = *flock;
        match self {
            SweepAxis::Radius => f.comm_radius = value,
            SweepAxis::Velocity => f.init_speed = value,
            SweepAxis::Agents => {
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(Error::InvalidInput(format!(
                        "agent count must be an integer of at least 2, got {value}"
                    )));
                }
                f.n_agents = value as usize;
            }
        }
        f.validate()?;
        Ok(f)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::Radius, SweepAxis::Velocity, SweepAxis::Agents]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown sweep axis {s:?}")))
    }
}

/// Mean total velocity variation at one sweep value, and the learned
/// controllers' ratios to the expert.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub optimal: MetricRow,
    pub wdgnn: MetricRow,
    pub gnn: MetricRow,
}

impl SweepPoint {
    /// Mean total of `row` over the expert's; infinite if any rollout diverged.
    pub fn ratio(&self, row: &MetricRow) -> f64 {
        if row.diverged > 0 {
            f64::INFINITY
        } else {
            row.total_mean / self.optimal.total_mean
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn spearman_wdgnn(&self) -> f64 {
        self.trend(|p| p.ratio(&p.wdgnn))
    }

    pub fn spearman_gnn(&self) -> f64 {
        self.trend(|p| p.ratio(&p.gnn))
    }

    fn trend(&self, f: impl Fn(&SweepPoint) -> f64) -> f64 {
        let x: Vec<f64> = self.points.iter().map(|p| p.value).collect();
        let y: Vec<f64> = self.points.iter().map(f).collect();
        spearman(&x, &y)
    }

    pub fn csv(&self) -> String {
        let mut out = format!(
            "{},optimal_total,wdgnn_total,gnn_total,ratio_optimal,ratio_wdgnn,ratio_gnn\n",
            self.axis.name()
        );
        for p in &self.points {
            writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                p.value,
                p.optimal.total_mean,
                p.wdgnn.total_mean,
                p.gnn.total_mean,
                p.ratio(&p.optimal),
                p.ratio(&p.wdgnn),
                p.ratio(&p.gnn)
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// For every value: a fresh dataset under the changed scenario, a WD-GNN
/// and a GNN trained on it, and both evaluated on its test split.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one value".into()));
    }
    cfg.validate()?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let flock = axis.apply(&cfg.flocking, value)?;
        let cfg = ExperimentConfig {
            flocking: flock,
            ..cfg.clone()
        };
        let data = Dataset::generate(&flock, cfg.dataset, cfg.seed)?;
        let trained = train_models(&cfg, &data, &[ModelKind::WdGnn, ModelKind::GnnOnly])?;
        let row = |name: &str, policy: Policy<'_>| -> Result<MetricRow> {
            Ok(MetricRow::from_scores(
                name,
                &score_rollouts(&data.test, &flock, &policy)?,
            ))
        };
        points.push(SweepPoint {
            value,
            optimal: row(ROW_OPTIMAL, Policy::Optimal)?,
            wdgnn: row(ROW_FROZEN, Policy::Frozen(&trained[0].1.params))?,
            gnn: row(ROW_GNN, Policy::Frozen(&trained[1].1.params))?,
        });
    }
    Ok(SweepReport { axis, points })
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    out: &Path,
) -> Result<(SweepReport, ExperimentManifest)> {
    let report = sweep(cfg, axis, values)?;
    let file = format!("sweep_{}.csv", axis.name());
    write_file(&out.join(&file), &report.csv())?;
    let mut m = ExperimentManifest::new("sweep", cfg);
    m.note("axis", axis.name());
    m.note("spearman_wdgnn", format!("{:?}", report.spearman_wdgnn()));
    m.note("spearman_gnn", format!("{:?}", report.spearman_gnn()));
    for p in &report.points {
        for row in [&p.optimal, &p.wdgnn, &p.gnn] {
            m.metrics.push(MetricRow {
                name: format!("{}@{:?}", row.name, p.value),
                ..row.clone()
            });
        }
    }
    m.artifacts.push(file);
    m.write(out)?;
    Ok((report, m))
}

/// Pooled results over `cfg.realizations` independent datasets, each
/// generated, trained and evaluated in `out/realization_{r}`.
#[derive(Debug, Clone)]
pub struct TableReport {
    pub rows: Vec<MetricRow>,
    pub realizations: Vec<EvalReport>,
}

pub fn realization_seed(master: u64, r: usize) -> u64 {
    rng::derive_seed(master, &[label::REALIZATION, r as u64])
}

pub fn cmd_table(cfg: &ExperimentConfig, out: &Path) -> Result<(TableReport, ExperimentManifest)> {
    cfg.validate()?;
    let mut realizations = Vec::with_capacity(cfg.realizations);
    for r in 0..cfg.realizations {
        let cfg_r = ExperimentConfig {
            seed: realization_seed(cfg.seed, r),
            ..cfg.clone()
        };
        let dir = out.join(format!("realization_{r}"));
        gen_data(&cfg_r, &dir.join("dataset"))?;
        cmd_train(&cfg_r, &dir.join("dataset"), &ModelKind::ALL, &dir.join("checkpoints"))?;
        let (report, _) = cmd_eval(
            &cfg_r,
            &dir.join("dataset"),
            &dir.join("checkpoints"),
            &dir.join("eval"),
        )?;
        realizations.push(report);
    }
    let names: Vec<String> = realizations[0].rows.iter().map(|(n, _)| n.clone()).collect();
    let rows: Vec<MetricRow> = names
        .iter()
        .map(|name| {
            let pooled: Vec<_> = realizations
                .iter()
                .flat_map(|rep| rep.scores(name).unwrap_or_default().iter().copied())
                .collect();
            MetricRow::from_scores(name, &pooled)
        })
        .collect();
    write_file(&out.join("table.csv"), &metric_rows_csv(&rows))?;
    let mut m = ExperimentManifest::new("table", cfg);
    for r in 0..cfg.realizations {
        m.note(&format!("realization_{r}.seed"), realization_seed(cfg.seed, r));
    }
    m.metrics = rows.clone();
    m.artifacts.push("table.csv".into());
    m.write(out)?;
    Ok((TableReport { rows, realizations }, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub seed: u64,
    pub problems: usize,
    pub max_dim: usize,
    pub steps: usize,
    pub slack: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            problems: 50,
            max_dim: 8,
            steps: 1000,
            slack: 1e-9,
        }
    }
}

/// Drift-free problems must converge below this.
pub const STATIC_ERROR_TOLERANCE: f64 = 1e-10;

pub fn theorem_holds(summary: &TheoremSummary) -> bool {
    summary.violations == 0 && summary.static_final_error < STATIC_ERROR_TOLERANCE
}

pub fn cmd_verify_theorem(tc: &TheoremConfig, out: &Path) -> Result<TheoremSummary> {
    let summary = theorem_suite(tc.seed, tc.problems, tc.max_dim, tc.steps, tc.slack)?;
    let report = serde_json::json!({
        "command": "verify-theorem",
        "build": super::manifest::BUILD_ID,
        "config": tc,
        "summary": summary,
        "holds": theorem_holds(&summary),
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_file(&out.join("theorem.json"), &text)?;
    Ok(summary)
}

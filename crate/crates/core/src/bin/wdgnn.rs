use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use wdgnn::experiment::{self, ExperimentConfig, MetricRow, SweepAxis, TheoremConfig};
use wdgnn::online::OnlineMode;
use wdgnn::training::ModelKind;
use wdgnn::Error;

/// Wide and deep graph neural network experiments on a flocking swarm.
///
/// Settings come from the desk-scale defaults (or `--paper-scale`), then a
/// `--config` JSON file, then individual flags. Exit status: 0 success,
/// 1 usage or input error, 2 numerical failure or theorem violation.
#[derive(Parser)]
#[command(name = "wdgnn", version = experiment::BUILD_ID)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert trajectories for the train, validation and test splits.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train controllers by imitation; writes one checkpoint and loss curve per kind.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by gen-data.
        #[arg(long)]
        dataset: PathBuf,
        /// wdgnn, gnn, filter or all.
        #[arg(long, default_value = "all")]
        arch: String,
    },
    /// Compare the expert, the WD-GNN (frozen and online) and both baselines on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Directory holding wdgnn.json, gnn.json and filter.json.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Retrain the wide part of one checkpoint online from every test initial state.
    Online {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Vary one scenario parameter, retraining WD-GNN and GNN at each value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// radius, velocity or agents.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; defaults depend on the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// gen-data, train and eval over several dataset realizations, pooled.
    Table {
        #[command(flatten)]
        common: Common,
    },
    /// Check the tracking bound of online gradient descent on random time-varying quadratics.
    VerifyTheorem {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        problems: usize,
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-9)]
        slack: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Run directory for every output of the command.
    #[arg(long)]
    out: PathBuf,
    /// JSON file overriding any subset of the settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-scale setup (N=50, 400/40/40 trajectories, 30 epochs).
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    sample_time: Option<f64>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    valid: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Offline gradient clip; "none" disables it.
    #[arg(long, value_parser = parse_clip)]
    clip_norm: Option<Clip>,
    /// Online step size.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    online_steps: Option<usize>,
    /// centralized or decentralized.
    #[arg(long)]
    mode: Option<String>,
    /// Online gradient clip; "none" disables it.
    #[arg(long, value_parser = parse_clip)]
    online_clip: Option<Clip>,
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Clone, Copy)]
struct Clip(Option<f64>);

fn parse_clip(s: &str) -> Result<Clip, String> {
    if s == "none" {
        return Ok(Clip(None));
    }
    s.parse::<f64>().map(|v| Clip(Some(v))).map_err(|e| e.to_string())
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = if self.paper_scale {
            ExperimentConfig::full()
        } else {
            ExperimentConfig::desk()
        };
        if let Some(path) = &self.config {
            cfg = cfg.merged_file(path)?;
        }
        cfg = cfg.merged(&self.patch()?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn patch(&self) -> Result<Value, Error> {
        let mut root = Map::new();
        let mut set = |section: Option<&str>, key: &str, value: Value| {
            let target = match section {
                Some(s) => root
                    .entry(s)
                    .or_insert_with(|| json!({}))
                    .as_object_mut()
                    .expect("sections are objects"),
                None => &mut root,
            };
            target.insert(key.into(), value);
        };
        macro_rules! put {
            ($section:expr, $key:expr, $field:expr) => {
                if let Some(v) = $field {
                    set($section, $key, json!(v));
                }
            };
        }
        put!(None, "seed", self.seed);
        put!(None, "realizations", self.realizations);
        put!(Some("flocking"), "n_agents", self.agents);
        put!(Some("flocking"), "comm_radius", self.radius);
        put!(Some("flocking"), "init_speed", self.speed);
        put!(Some("flocking"), "duration", self.duration);
        put!(Some("flocking"), "sample_time", self.sample_time);
        put!(Some("flocking"), "potential_cutoff", self.cutoff);
        put!(Some("dataset"), "train", self.train);
        put!(Some("dataset"), "valid", self.valid);
        put!(Some("dataset"), "test", self.test);
        put!(Some("model"), "hidden", self.hidden);
        put!(Some("model"), "order", self.order);
        put!(Some("model"), "layers", self.layers);
        put!(Some("training"), "epochs", self.epochs);
        put!(Some("training"), "batch_size", self.batch_size);
        put!(Some("training"), "learning_rate", self.lr);
        put!(Some("training"), "clip_norm", self.clip_norm.map(|c| c.0));
        put!(Some("online"), "gamma", self.gamma);
        put!(Some("online"), "steps", self.online_steps);
        put!(Some("online"), "clip_norm", self.online_clip.map(|c| c.0));
        if let Some(mode) = &self.mode {
            let mode = match mode.as_str() {
                "centralized" => OnlineMode::Centralized,
                "decentralized" => OnlineMode::Decentralized,
                other => return Err(Error::InvalidInput(format!("unknown online mode {other:?}"))),
            };
            set(Some("online"), "mode", serde_json::to_value(mode)?);
        }
        Ok(Value::Object(root))
    }
}

fn print_rows(rows: &[MetricRow]) {
    println!(
        "{:<22} {:>22} {:>26} {:>9}",
        "row", "total (mean ± std)", "final (mean ± std)", "diverged"
    );
    for r in rows {
        println!(
            "{:<22} {:>10.3} ± {:<9.3} {:>12.5} ± {:<11.5} {:>5}/{}",
            r.name, r.total_mean, r.total_std, r.final_mean, r.final_std, r.diverged, r.rollouts
        );
    }
}

fn kinds(arch: &str) -> Result<Vec<ModelKind>, Error> {
    if arch == "all" {
        return Ok(ModelKind::ALL.to_vec());
    }
    ModelKind::from_name(arch)
        .map(|k| vec![k])
        .ok_or_else(|| Error::InvalidInput(format!("unknown architecture {arch:?}")))
}

fn done(out: &Path) {
    println!("outputs in {}", out.display());
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::GenData { common } => {
            let m = experiment::gen_data(&common.config()?, &common.out)?;
            println!("{} trajectories written", m.artifacts.len() - 1);
            print_rows(&m.metrics);
            done(&common.out);
        }
        Command::Train { common, dataset, arch } => {
            let m = experiment::cmd_train(&common.config()?, &dataset, &kinds(&arch)?, &common.out)?;
            for (k, v) in &m.notes {
                println!("{k} = {v}");
            }
            done(&common.out);
        }
        Command::Eval {
            common,
            dataset,
            checkpoints,
        } => {
            let (_, m) = experiment::cmd_eval(&common.config()?, &dataset, &checkpoints, &common.out)?;
            print_rows(&m.metrics);
            done(&common.out);
        }
        Command::Online {
            common,
            dataset,
            checkpoint,
        } => {
            let m = experiment::cmd_online(&common.config()?, &dataset, &checkpoint, &common.out)?;
            print_rows(&m.metrics);
            done(&common.out);
        }
        Command::Sweep { common, axis, values } => {
            let axis: SweepAxis = axis.parse()?;
            let values = if values.is_empty() {
                axis.default_values()
            } else {
                values
            };
            let (report, _) = experiment::cmd_sweep(&common.config()?, axis, &values, &common.out)?;
            print!("{}", report.csv());
            println!(
                "spearman(ratio, {}): wdgnn {:.3}, gnn {:.3}",
                axis.name(),
                report.spearman_wdgnn(),
                report.spearman_gnn()
            );
            done(&common.out);
        }
        Command::Table { common } => {
            let (report, _) = experiment::cmd_table(&common.config()?, &common.out)?;
            print_rows(&report.rows);
            done(&common.out);
        }
        Command::VerifyTheorem {
            seed,
            problems,
            max_dim,
            steps,
            slack,
            out,
        } => {
            let tc = TheoremConfig {
                seed,
                problems,
                max_dim,
                steps,
                slack,
            };
            let summary = experiment::cmd_verify_theorem(&tc, &out)?;
            println!(
                "{} problems x {} steps: {} violations, max excess {:.3e}, static final error {:.3e}",
                summary.problems, summary.steps, summary.violations, summary.max_excess, summary.static_final_error
            );
            done(&out);
            if !experiment::theorem_holds(&summary) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

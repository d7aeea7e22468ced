use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::update::{decentralized_step, NodeParamSet};
use crate::error::{Error, Result};
use crate::flocking::{
    instantaneous_loss_centralized, instantaneous_loss_local, rollout, velocity_variation, velocity_variation_final,
    velocity_variation_total, Controller, FlockingConfig, Observation, SwarmState, Trajectory,
};
use crate::graph::{FilterTaps, ShiftRegister};
use crate::model::{forward, grad_wide_only, output_with_node_wide, Frames, WdGnnParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnlineMode {
    Centralized,
    Decentralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    /// Step size γ.
    pub gamma: f64,
    /// Gradient steps per time instant.
    pub steps: usize,
    pub mode: OnlineMode,
    /// Gradients with a larger norm are scaled down to it, per node in
    /// decentralized mode. Guards against the feature spikes of near
    /// collisions; `None` disables it.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            steps: 1,
            mode: OnlineMode::Centralized,
            clip_norm: Some(1.0),
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "online step size must be non-negative, got {}",
                self.gamma
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidInput(format!("clip norm must be positive, got {c}")));
            }
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("at least one online step per time instant".into()));
        }
        Ok(())
    }
}

/// One row of the per-step online log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineRecord {
    pub t: usize,
    /// Centralized instantaneous loss at the applied control.
    pub loss: f64,
    /// ‖B_t‖, averaged over nodes in decentralized mode.
    pub wide_norm: f64,
    pub disagreement: f64,
    pub velocity_variation: f64,
}

/// WD-GNN controller whose wide taps are retrained after every control.
/// Centralized mode keeps one copy of the taps; decentralized mode keeps
/// one per agent, each agent applying its own copy.
#[derive(Debug, Clone)]
pub struct OnlineController {
    params: WdGnnParams,
    initial_wide: FilterTaps,
    nodes: Option<NodeParamSet>,
    config: OnlineConfig,
    sample_time: f64,
    register: ShiftRegister,
    records: Vec<OnlineRecord>,
}

impl OnlineController {
    pub fn new(params: WdGnnParams, config: OnlineConfig, sample_time: f64) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let depth = params.temporal_depth();
        Ok(Self {
            initial_wide: params.wide.clone(),
            params,
            nodes: None,
            config,
            sample_time,
            register: ShiftRegister::new(depth),
            records: Vec::new(),
        })
    }

    /// Shared parameters; in decentralized mode the wide taps here stay at
    /// their initial value.
    pub fn params(&self) -> &WdGnnParams {
        &self.params
    }

    pub fn node_params(&self) -> Option<&NodeParamSet> {
        self.nodes.as_ref()
    }

    pub fn records(&self) -> &[OnlineRecord] {
        &self.records
    }

    fn outputs(&self, tape: &crate::model::ForwardTape) -> Result<Array2<f64>> {
        match &self.nodes {
            // Copies still equal to the shared taps give exactly the frozen output.
            Some(nodes) if nodes.taps.iter().any(|t| *t != self.params.wide) => {
                output_with_node_wide(tape, &self.params, &nodes.taps)
            }
            _ => Ok(tape.output().clone()),
        }
    }
}

impl Controller for OnlineController {
    fn reset(&mut self) {
        self.params.wide = self.initial_wide.clone();
        self.nodes = None;
        self.register = ShiftRegister::new(self.params.temporal_depth());
        self.records.clear();
    }

    fn control(&mut self, obs: &Observation<'_>) -> Result<Array2<f64>> {
        let n = obs.state.n_agents();
        if self.config.mode == OnlineMode::Decentralized && self.nodes.is_none() {
            self.nodes = Some(NodeParamSet::replicate(&self.params.wide, n));
        }
        self.register.push(obs.support.clone(), obs.features.clone())?;
        let (_, tape) = forward(Frames::Delayed(&self.register), &self.params)?;
        let applied = self.outputs(&tape)?;
        let ts = self.sample_time;
        let (loss, _) = instantaneous_loss_centralized(obs.state, &applied, ts)?;

        let mut current = applied.clone();
        for _ in 0..self.config.steps {
            match self.config.mode {
                OnlineMode::Centralized => {
                    let (_, upstream) = instantaneous_loss_centralized(obs.state, &current, ts)?;
                    let g = clip_taps(grad_wide_only(&tape, &self.params, &upstream)?, self.config.clip_norm);
                    if !g.is_finite() {
                        return Err(Error::NonFinite {
                            context: format!("online gradient at step {}", obs.t),
                        });
                    }
                    self.params.wide = self.params.wide.add_scaled(-self.config.gamma, &g);
                    // The stacks do not depend on B, so the new output is
                    // the old stacks under the new taps.
                    current = output_with_node_wide(&tape, &self.params, &vec![self.params.wide.clone(); n])?;
                }
                OnlineMode::Decentralized => {
                    let nodes = self.nodes.as_ref().expect("created above");
                    let local = |i: usize, _: &FilterTaps| {
                        let (_, grad) = instantaneous_loss_local(i, obs.state, &current, obs.support, ts)?;
                        // The wide output is linear in the taps, so this is the
                        // gradient of J_i with respect to node i's own copy
                        // as if its whole neighborhood were using it.
                        Ok(clip_taps(
                            grad_wide_only(&tape, &self.params, &grad)?,
                            self.config.clip_norm,
                        ))
                    };
                    let next = decentralized_step(nodes, obs.support, local, self.config.gamma)?;
                    current = output_with_node_wide(&tape, &self.params, &next.taps)?;
                    self.nodes = Some(next);
                }
            }
        }

        let (wide_norm, disagreement) = match &self.nodes {
            Some(nodes) => (nodes.mean_norm(), nodes.disagreement()),
            None => (self.params.wide.norm(), 0.0),
        };
        self.records.push(OnlineRecord {
            t: obs.t,
            loss,
            wide_norm,
            disagreement,
            velocity_variation: velocity_variation(&obs.state.velocities),
        });
        Ok(applied)
    }
}

fn clip_taps(g: FilterTaps, max: Option<f64>) -> FilterTaps {
    match max {
        Some(max) if g.norm() > max => g.scaled(max / g.norm()),
        _ => g,
    }
}

/// Outcome of one closed-loop online run.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub trajectory: Trajectory,
    pub records: Vec<OnlineRecord>,
    /// Parameters at the end; the wide taps are the node average in
    /// decentralized mode.
    pub final_params: WdGnnParams,
    pub total_variation: f64,
    pub final_variation: f64,
}

/// Runs the flocking task from `initial`, retraining the wide part online.
pub fn run_online_phase(
    params: &WdGnnParams,
    flock: &FlockingConfig,
    initial: SwarmState,
    cfg: &OnlineConfig,
) -> Result<OnlineRun> {
    let mut controller = OnlineController::new(params.clone(), *cfg, flock.sample_time)?;
    let trajectory = rollout(flock, initial, &mut controller)?;
    let mut final_params = controller.params.clone();
    if let Some(nodes) = &controller.nodes {
        final_params.wide = nodes.average();
    }
    Ok(OnlineRun {
        total_variation: velocity_variation_total(&trajectory)?,
        final_variation: velocity_variation_final(&trajectory)?,
        records: controller.records,
        trajectory,
        final_params,
    })
}

pub const RECORD_HEADER: &str = "t,loss,wide_norm,disagreement,velocity_variation";

pub fn write_records_csv(records: &[OnlineRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            r.t, r.loss, r.wide_norm, r.disagreement, r.velocity_variation
        )
        .expect("writing to a String cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flocking::{build_comm_graph, initial_state, local_features};
    use crate::model::checkpoint;
    use crate::training::{flocking_architecture, WdGnnController};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_flock() -> FlockingConfig {
        FlockingConfig {
            n_agents: 8,
            duration: 0.3,
            ..FlockingConfig::default()
        }
    }

    fn model(seed: u64) -> WdGnnParams {
        WdGnnParams::random(&flocking_architecture(6, 2, 1), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn start(flock: &FlockingConfig, seed: u64) -> SwarmState {
        initial_state(flock, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn bits(values: &[f64]) -> Vec<u64> {
        values.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn zero_step_size_reproduces_the_frozen_model() {
        let flock = small_flock();
        let p = model(1);
        let frozen = rollout(&flock, start(&flock, 2), &mut WdGnnController::new(p.clone())).unwrap();
        for mode in [OnlineMode::Centralized, OnlineMode::Decentralized] {
            let cfg = OnlineConfig {
                gamma: 0.0,
                mode,
                ..OnlineConfig::default()
            };
            let run = run_online_phase(&p, &flock, start(&flock, 2), &cfg).unwrap();
            for (a, b) in run.trajectory.states.iter().zip(&frozen.states) {
                assert_eq!(a, b, "{mode:?}");
            }
            assert_eq!(run.final_params, p);
        }
    }

    #[test]
    fn online_runs_leave_the_deep_part_byte_identical() {
        let flock = small_flock();
        let p = model(3);
        let frozen_json = |q: &WdGnnParams| {
            let mut q = q.clone();
            q.wide = FilterTaps::zeros(q.wide.order(), q.wide.in_features(), q.wide.out_features());
            checkpoint::to_json(&q, &Default::default()).unwrap()
        };
        for mode in [OnlineMode::Centralized, OnlineMode::Decentralized] {
            let cfg = OnlineConfig {
                gamma: 0.5,
                mode,
                clip_norm: None,
                steps: 2,
            };
            let run = run_online_phase(&p, &flock, start(&flock, 4), &cfg).unwrap();
            assert_ne!(
                run.final_params.wide, p.wide,
                "{mode:?} should have moved the wide part"
            );
            assert_eq!(frozen_json(&run.final_params), frozen_json(&p));
            assert_eq!(bits(&run.final_params.frozen_part()), bits(&p.frozen_part()));
        }
    }

    #[test]
    fn decentralized_on_a_complete_graph_tracks_centralized() {
        let flock = FlockingConfig {
            comm_radius: 1e3,
            ..small_flock()
        };
        let p = model(5);
        let runs: Vec<OnlineRun> = [OnlineMode::Centralized, OnlineMode::Decentralized]
            .into_iter()
            .map(|mode| {
                let cfg = OnlineConfig {
                    gamma: 0.05,
                    mode,
                    clip_norm: None,
                    steps: 1,
                };
                run_online_phase(&p, &flock, start(&flock, 6), &cfg).unwrap()
            })
            .collect();
        assert!(runs[1].records.iter().all(|r| r.disagreement < 1e-10));
        assert!(runs[1].final_params.wide.distance(&runs[0].final_params.wide) < 1e-10);
        assert!((runs[0].final_variation - runs[1].final_variation).abs() < 1e-10);
    }

    #[test]
    fn surrogate_loss_is_convex_in_the_wide_taps() {
        let flock = FlockingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..10 {
            let p = model(100 + seed);
            let state = start(&flock, seed);
            let s = build_comm_graph(&state, flock.comm_radius).unwrap();
            let x = local_features(&state, &s).unwrap();
            let mut reg = ShiftRegister::new(p.temporal_depth());
            reg.push(s, x).unwrap();
            let j = |q: &WdGnnParams| {
                let (out, _) = forward(Frames::Delayed(&reg), q).unwrap();
                instantaneous_loss_centralized(&state, out.as_array(), flock.sample_time)
                    .unwrap()
                    .0
            };
            for _ in 0..20 {
                let d = FilterTaps::random(p.wide.order(), p.wide.in_features(), p.wide.out_features(), &mut rng);
                let h = rng.gen_range(1e-3..1.0);
                let shifted = |c: f64| {
                    let mut q = p.clone();
                    q.wide = p.wide.add_scaled(c * h, &d);
                    j(&q)
                };
                let second = shifted(1.0) + shifted(-1.0) - 2.0 * j(&p);
                assert!(second >= -1e-8, "second difference {second}");
            }
        }
    }

    #[test]
    fn rejects_bad_configs_and_writes_a_header() {
        let bad = [
            OnlineConfig {
                gamma: -1.0,
                ..OnlineConfig::default()
            },
            OnlineConfig {
                steps: 0,
                ..OnlineConfig::default()
            },
            OnlineConfig {
                clip_norm: Some(0.0),
                ..OnlineConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let csv = write_records_csv(&[OnlineRecord {
            t: 3,
            loss: 0.5,
            wide_norm: 1.0,
            disagreement: 0.0,
            velocity_variation: 2.0,
        }]);
        assert_eq!(csv, format!("{RECORD_HEADER}\n3,0.5,1.0,0.0,2.0\n"));
    }
}

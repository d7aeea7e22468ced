use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::flocking::{FlockingConfig, SwarmState, Trajectory};
use crate::graph::{GraphSignal, ShiftRegister, SupportMatrix};
use crate::model::{checkpoint, forward, Architecture, Frames, Nonlinearity, ParamMask, WdGnnParams};

fn random_support(n: usize, rng: &mut ChaCha8Rng) -> SupportMatrix {
    let edges: Vec<_> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|_| rng.gen_bool(0.4))
        .collect();
    SupportMatrix::from_undirected_edges(n, &edges).unwrap()
}

fn random_signal(n: usize, f: usize, rng: &mut ChaCha8Rng) -> GraphSignal {
    GraphSignal::new(Array2::from_shape_fn((n, f), |_| rng.gen_range(-1.0..1.0))).unwrap()
}

fn small_arch() -> Architecture {
    Architecture {
        in_features: 3,
        hidden: 4,
        out_features: 2,
        order: 2,
        layers: 1,
        nonlinearity: Nonlinearity::Tanh,
    }
}

/// A trajectory of random graphs and features whose targets are the
/// outputs of `teacher`. States are placeholders: training never reads them.
fn synthetic_trajectory(teacher: &WdGnnParams, n: usize, len: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut traj = Trajectory {
        states: Vec::new(),
        supports: Vec::new(),
        features: Vec::new(),
        targets: Vec::new(),
    };
    let mut reg = ShiftRegister::new(teacher.temporal_depth());
    for _ in 0..len {
        let s = random_support(n, rng);
        let x = random_signal(n, teacher.in_features(), rng);
        reg.push(s.clone(), x.clone()).unwrap();
        let (y, _) = forward(Frames::Delayed(&reg), teacher).unwrap();
        traj.states
            .push(SwarmState::new(Array2::zeros((n, 2)), Array2::zeros((n, 2))).unwrap());
        traj.supports.push(s);
        traj.features.push(x);
        traj.targets.push(y.into_array());
    }
    traj
}

#[test]
fn erm_loss_matches_hand_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut p = WdGnnParams::random(&small_arch(), &mut rng);
    p.readout.weight.fill(0.0);
    let n = 5;
    let reg = ShiftRegister::filled(2, &random_support(n, &mut rng), &random_signal(n, 3, &mut rng)).unwrap();
    let ones = Array2::ones((n, 2));
    let (loss, _) = erm_loss(&p, &[(&reg, &ones)]).unwrap();
    assert!((loss - 2.0).abs() < 1e-15, "{loss}");

    let q = WdGnnParams::random(&small_arch(), &mut rng);
    let (y, _) = forward(Frames::Delayed(&reg), &q).unwrap();
    let target = y.into_array();
    let (loss, grad) = erm_loss(&q, &[(&reg, &target), (&reg, &target)]).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.flatten().iter().all(|&g| g == 0.0));

    assert!(erm_loss(&q, &[]).is_err());
}

#[test]
fn one_adam_step_lowers_the_batch_loss() {
    let mut improved = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = WdGnnParams::random(&small_arch(), &mut rng);
        let n = rng.gen_range(3..8);
        let regs: Vec<ShiftRegister> = (0..4)
            .map(|_| ShiftRegister::filled(2, &random_support(n, &mut rng), &random_signal(n, 3, &mut rng)).unwrap())
            .collect();
        let targets: Vec<Array2<f64>> = (0..4)
            .map(|_| Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let batch: Vec<_> = regs.iter().zip(&targets).collect();
        let (before, grad) = erm_loss(&p, &batch).unwrap();
        let mut flat = p.flatten();
        let mut adam = AdamState::new(flat.len(), AdamConfig::default());
        adam_step(&mut adam, &mut flat, &grad.flatten()).unwrap();
        let (after, _) = erm_loss(&p.unflatten(&flat).unwrap(), &batch).unwrap();
        if after < before {
            improved += 1;
        }
    }
    assert!(improved >= 48, "{improved}/50");
}

#[test]
fn gradients_reach_both_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = WdGnnParams::random(&small_arch(), &mut rng);
    let reg = ShiftRegister::filled(2, &random_support(6, &mut rng), &random_signal(6, 3, &mut rng)).unwrap();
    let target = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-1.0..1.0));
    let (_, grad) = erm_loss(&p, &[(&reg, &target)]).unwrap();
    let mut flat = p.flatten();
    let mut adam = AdamState::new(flat.len(), AdamConfig::default());
    adam_step(&mut adam, &mut flat, &grad.flatten()).unwrap();
    let q = p.unflatten(&flat).unwrap();
    assert!(q.deep.layers[0].distance(&p.deep.layers[0]) > 0.0);
    assert!(q.wide.distance(&p.wide) > 0.0);
}

#[test]
fn masks_keep_baseline_branches_switched_off() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let arch = small_arch();
    let teacher = WdGnnParams::random(&arch, &mut rng);
    let data = vec![synthetic_trajectory(&teacher, 5, 6, &mut rng)];
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 3,
        ..TrainConfig::default()
    };
    let flock = FlockingConfig::default();
    for kind in [ModelKind::GnnOnly, ModelKind::FilterOnly] {
        let init = kind.init(&arch, 3);
        let out = train(init.clone(), kind.mask(), &data, &[], &flock, &cfg).unwrap();
        match kind {
            ModelKind::GnnOnly => {
                assert_eq!(out.params.alpha_w, 0.0);
                assert_eq!(out.params.wide, init.wide);
            }
            _ => {
                assert_eq!(out.params.alpha_d, 0.0);
                assert_eq!(out.params.deep, init.deep);
            }
        }
    }
    assert_eq!(ModelKind::from_name("gnn"), Some(ModelKind::GnnOnly));
    assert_eq!(ModelKind::from_name("nope"), None);
}

#[test]
fn student_recovers_a_wide_only_teacher() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = small_arch();
    let mut teacher = ModelKind::FilterOnly.init(&arch, 11);
    teacher.beta = 0.3;
    let train_set: Vec<_> = (0..4)
        .map(|_| synthetic_trajectory(&teacher, 6, 10, &mut rng))
        .collect();
    let test_set: Vec<_> = (0..2)
        .map(|_| synthetic_trajectory(&teacher, 6, 10, &mut rng))
        .collect();

    let depth = teacher.temporal_depth();
    let test_loss = |p: &WdGnnParams| {
        let regs: Vec<_> = test_set
            .iter()
            .flat_map(|t| (0..t.len()).map(move |k| (t, k)))
            .map(|(t, k)| (register_at(t, k, depth).unwrap(), &t.targets[k]))
            .collect();
        let batch: Vec<_> = regs.iter().map(|(r, y)| (r, *y)).collect();
        erm_loss(p, &batch).unwrap().0
    };

    let student = ModelKind::FilterOnly.init(&arch, 12);
    let initial = test_loss(&student);
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 8,
        adam: AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train(
        student,
        ModelKind::FilterOnly.mask(),
        &train_set,
        &[],
        &FlockingConfig::default(),
        &cfg,
    )
    .unwrap();
    let last = test_loss(&out.params);
    assert!(last < 1e-3 * initial, "{last} vs {initial}");
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let flock = FlockingConfig {
        n_agents: 6,
        duration: 0.2,
        ..FlockingConfig::default()
    };
    let data = Dataset::generate(
        &flock,
        SplitSizes {
            train: 2,
            valid: 1,
            test: 0,
        },
        5,
    )
    .unwrap();
    let arch = flocking_architecture(4, 2, 1);
    let cfg = TrainConfig {
        epochs: 1,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        train(
            ModelKind::WdGnn.init(&arch, 1),
            ParamMask::all(),
            &data.train,
            &data.valid,
            &flock,
            &cfg,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    let bits = |p: &WdGnnParams| p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a.history, b.history);
    assert_eq!(a.best_epoch, 1);

    let text = checkpoint::to_json(&a.params, &Default::default()).unwrap();
    let (loaded, _) = checkpoint::from_json(&text).unwrap();
    assert_eq!(bits(&loaded), bits(&a.params));
    let metric = rollout_metric(&loaded, &data.valid, &flock).unwrap();
    assert_eq!(Some(metric), a.history[0].valid_metric);
}

#[test]
fn datasets_round_trip_through_disk() {
    let flock = FlockingConfig {
        n_agents: 5,
        duration: 0.1,
        ..FlockingConfig::default()
    };
    let sizes = SplitSizes {
        train: 2,
        valid: 1,
        test: 1,
    };
    let data = Dataset::generate(&flock, sizes, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = data.save(dir.path()).unwrap();
    assert_eq!(manifest.files.len(), 4);
    let loaded = Dataset::load(dir.path()).unwrap();
    assert_eq!(loaded.sizes(), sizes);
    for (a, b) in data
        .train
        .iter()
        .chain(&data.test)
        .zip(loaded.train.iter().chain(&loaded.test))
    {
        assert_eq!(a.states, b.states);
        assert_eq!(a.targets, b.targets);
        assert!(b.reintegration_error(flock.sample_time).unwrap() < 1e-9);
    }

    // Different splits never share an initial condition.
    let first = |t: &Trajectory| t.states[0].positions.clone();
    assert_ne!(first(&data.train[0]), first(&data.valid[0]));
    assert_ne!(first(&data.train[0]), first(&data.train[1]));

    std::fs::write(dir.path().join("manifest.json"), "{\"format\": \"other\"}").unwrap();
    assert!(Dataset::load(dir.path()).is_err());
}

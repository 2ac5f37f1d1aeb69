use apt_lab::agent::{
    finetune, pretrain, EncoderChoice, FinetuneConfig, PretrainedArtifacts, QTable, ReferenceSet, ReplayBuffer,
    RewardSource, TrainLoopConfig, Transition, VisitCounter,
};
use apt_lab::environments::{Environment, GridSpec, GridWorld, ObsMode, TaskSpec};
use apt_lab::experiments::metrics_csv;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tr(s: usize, a: usize, s2: usize, done: bool) -> Transition {
    Transition {
        obs: vec![s as f64],
        action: a,
        extrinsic_reward: None,
        next_obs: vec![s2 as f64],
        done,
        state_id: s,
        next_state_id: s2,
    }
}

#[test]
fn chain_q_values_converge_to_value_iteration() {
    // States 0 → 1 → 2(terminal, reward 1); action 1 advances, action 0 stays.
    let gamma = 0.9;
    let mut vi = [[0.0f64; 2]; 2];
    for _ in 0..1000 {
        let v = |s: usize| if s == 2 { 0.0 } else { vi[s][0].max(vi[s][1]) };
        vi = [
            [gamma * v(0), gamma * v(1)],
            [gamma * v(1), 1.0],
        ];
    }
    let mut q = QTable::new(3, 2, 0.5, gamma).unwrap();
    let batch = [tr(0, 0, 0, false), tr(0, 1, 1, false), tr(1, 0, 1, false), tr(1, 1, 2, true)];
    let refs: Vec<&Transition> = batch.iter().collect();
    for _ in 0..2000 {
        q.update(&refs, &[0.0, 0.0, 0.0, 1.0]).unwrap();
    }
    for s in 0..2 {
        for a in 0..2 {
            assert!((q.get(s, a) - vi[s][a]).abs() < 1e-9, "Q({s},{a})");
        }
    }
}

#[test]
fn fifo_eviction_and_single_item_sampling() {
    let mut b = ReplayBuffer::new(2).unwrap();
    assert!(b.push(1).is_none());
    assert!(b.push(2).is_none());
    assert_eq!(b.push(3), Some(1));
    assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3]);
    let mut one = ReplayBuffer::new(4).unwrap();
    one.push(7);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(one.sample(3, 1, &mut rng).unwrap(), vec![&7, &7, &7]);
    assert!(one.sample(3, 2, &mut rng).is_err());
}

#[test]
fn sampling_is_uniform_within_five_sigma() {
    let n = 50;
    let draws = 100_000;
    let mut b = ReplayBuffer::new(n).unwrap();
    for i in 0..n {
        b.push(i);
    }
    let mut counts = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in b.sample_indices(draws, 1, &mut rng).unwrap() {
        counts[i] += 1;
    }
    let p = 1.0 / n as f64;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    assert!(counts.iter().all(|&c| (c as f64 - mean).abs() < 5.0 * sigma));
}

#[test]
fn full_exploration_is_uniform_over_actions() {
    let q = QTable::new(1, 4, 0.1, 0.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 10_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        counts[q.select_action(0, 1.0, &mut rng)] += 1;
    }
    let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
    assert!(counts.iter().all(|&c| (c as f64 - 2500.0).abs() < 5.0 * sigma), "{counts:?}");
}

#[test]
fn count_bonus_sequence() {
    let mut c = VisitCounter::new(3, 0.1);
    assert!((c.count_bonus(2) - 0.1).abs() < 1e-15);
    c.count_bonus(2);
    c.count_bonus(2);
    assert!((c.count_bonus(2) - 0.05).abs() < 1e-15);
    assert_eq!(c.count(2), 4);
    assert_eq!(c.count(0), 0);
}

proptest! {
    #[test]
    fn greedy_choice_is_scale_invariant(values in prop::collection::vec(-100.0f64..100.0, 5), scale in 0.001f64..1000.0) {
        let mut a = QTable::new(1, 5, 0.1, 0.9).unwrap();
        let mut b = QTable::new(1, 5, 0.1, 0.9).unwrap();
        for (i, v) in values.iter().enumerate() {
            a.set(0, i, *v);
            b.set(0, i, v * scale);
        }
        prop_assert_eq!(a.greedy(0), b.greedy(0));
    }

    #[test]
    fn bonuses_never_increase(visits in prop::collection::vec(0usize..4, 1..100)) {
        let mut c = VisitCounter::new(4, 0.1);
        let mut last = [f64::INFINITY; 4];
        for s in visits {
            let b = c.count_bonus(s);
            prop_assert!(b <= last[s]);
            last[s] = b;
        }
    }
}

fn small_room() -> Environment {
    Environment::Grid(GridWorld::new(GridSpec::open_room(5, 5, 30), ObsMode::Coords, None).unwrap())
}

fn small_config(source: RewardSource) -> TrainLoopConfig {
    TrainLoopConfig {
        total_steps: 3_000,
        min_buffer: 200,
        batch_size: 16,
        buffer_capacity: 2_000,
        encoder_train_interval: 10,
        epoch_length: 1_000,
        log_interval: 500,
        reward_source: source,
        encoder_hidden: vec![16],
        projection_hidden: 16,
        projection_output: 8,
        record_timing: false,
        ..TrainLoopConfig::default()
    }
}

#[test]
fn pretraining_is_deterministic() {
    let env = small_room();
    for source in [RewardSource::Apt, RewardSource::Count, RewardSource::None] {
        let a = pretrain(&env, &small_config(source), 5).unwrap();
        let b = pretrain(&env, &small_config(source), 5).unwrap();
        assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
        assert_eq!(a.qtable, b.qtable);
        assert_eq!(a.encoder, b.encoder);
    }
    let c = pretrain(&env, &small_config(RewardSource::Apt), 6).unwrap();
    let a = pretrain(&env, &small_config(RewardSource::Apt), 5).unwrap();
    assert_ne!(a.qtable, c.qtable);
}

#[test]
fn zero_steps_leave_everything_untouched() {
    let cfg = TrainLoopConfig {
        total_steps: 0,
        ..small_config(RewardSource::Apt)
    };
    let out = pretrain(&small_room(), &cfg, 0).unwrap();
    assert!(out.metrics.is_empty());
    assert!(out.epochs.is_empty());
    assert!(out.qtable.values().iter().all(|v| *v == 0.0));
}

#[test]
fn random_walk_never_updates_the_table() {
    let out = pretrain(&small_room(), &small_config(RewardSource::None), 1).unwrap();
    assert!(out.qtable.values().iter().all(|v| *v == 0.0));
    assert!(out.metrics.iter().all(|m| m.mean_raw_intrinsic_reward.is_none()));
    assert_eq!(out.buffer.len(), 2_000);
}

#[test]
fn pretraining_records_metrics_and_rewards() {
    let out = pretrain(&small_room(), &small_config(RewardSource::Apt), 2).unwrap();
    assert_eq!(out.metrics.len(), 6);
    assert!(out.metrics.windows(2).all(|w| w[0].env_step < w[1].env_step));
    assert!(out
        .metrics
        .iter()
        .all(|m| m.coverage_fraction.is_some_and(|c| (0.0..=1.0).contains(&c))));
    assert!(out.metrics.iter().any(|m| m.contrastive_loss.is_some()));
    assert!(out.buffer.iter().all(|t| t.extrinsic_reward.is_none()));
    assert_eq!(out.epochs.len(), 3);
}

#[test]
fn buffer_reference_reward_shrinks_as_states_repeat() {
    let cfg = TrainLoopConfig {
        reference: ReferenceSet::Buffer,
        encoder: EncoderChoice::Identity,
        ..small_config(RewardSource::Apt)
    };
    let out = pretrain(&small_room(), &cfg, 0).unwrap();
    let first = out.epochs[0].mean_raw().unwrap();
    let last = out.epochs.last().unwrap().mean_raw().unwrap();
    assert!(last < 0.5 * first, "first {first} last {last}");
}

#[test]
fn inconsistent_configs_are_rejected() {
    let env = small_room();
    let bad = [
        TrainLoopConfig {
            batch_size: 5,
            ..small_config(RewardSource::Apt)
        },
        TrainLoopConfig {
            min_buffer: 5_000,
            ..small_config(RewardSource::Apt)
        },
        TrainLoopConfig {
            gradient_steps: 0,
            ..small_config(RewardSource::Apt)
        },
        TrainLoopConfig {
            epsilon_start: 1.5,
            ..small_config(RewardSource::Apt)
        },
        small_config(RewardSource::Extrinsic),
    ];
    for cfg in bad {
        assert!(pretrain(&env, &cfg, 0).is_err(), "{cfg:?}");
    }
}

fn corridor() -> (Environment, TaskSpec) {
    let env = Environment::Grid(GridWorld::new(GridSpec::open_room(4, 1, 20), ObsMode::Coords, None).unwrap());
    (env, TaskSpec::reach(3))
}

#[test]
fn optimal_table_succeeds_on_the_first_episode() {
    let (env, task) = corridor();
    let mut art = PretrainedArtifacts::scratch(&env, &small_config(RewardSource::Apt), 0).unwrap();
    for s in 0..3 {
        art.qtable.set(s, 3, 1.0);
    }
    let cfg = FinetuneConfig {
        episodes: 1,
        epsilon_start: 0.0,
        epsilon_end: 0.0,
        success_window: 1,
        reinit_table: false,
        record_timing: false,
        ..FinetuneConfig::default()
    };
    let out = finetune(&env, art, &task, &cfg, 0).unwrap();
    assert_eq!(out.successes, vec![true]);
    assert_eq!(out.episode_returns, vec![1.0]);
    assert_eq!(out.success_episode, Some(1));
    assert_eq!(out.metrics[0].env_step, 3);
}

#[test]
fn reinit_zeroes_the_table_and_keeps_the_encoder() {
    let (env, task) = corridor();
    let mut art = PretrainedArtifacts::scratch(&env, &small_config(RewardSource::Apt), 0).unwrap();
    art.qtable.set(0, 0, 5.0);
    let encoder = art.encoder.clone();
    let cfg = FinetuneConfig {
        episodes: 0,
        reinit_table: true,
        record_timing: false,
        ..FinetuneConfig::default()
    };
    let out = finetune(&env, art, &task, &cfg, 0).unwrap();
    assert!(out.qtable.values().iter().all(|v| *v == 0.0));
    assert_eq!(out.encoder, encoder);
}

#[test]
fn mismatched_artifacts_are_rejected() {
    let (env, task) = corridor();
    let art = PretrainedArtifacts::scratch(&small_room(), &small_config(RewardSource::Apt), 0).unwrap();
    assert!(finetune(&env, art, &task, &FinetuneConfig::default(), 0).is_err());
    let art = PretrainedArtifacts::scratch(&env, &small_config(RewardSource::Apt), 0).unwrap();
    assert!(finetune(&env, art, &TaskSpec::reach(99), &FinetuneConfig::default(), 0).is_err());
}

#[test]
fn finetuning_learns_the_corridor_and_is_deterministic() {
    let (env, task) = corridor();
    let cfg = FinetuneConfig {
        episodes: 60,
        min_buffer: 16,
        batch_size: 16,
        epsilon_start: 1.0,
        epsilon_end: 0.0,
        epsilon_horizon: Some(300),
        success_window: 10,
        record_timing: false,
        ..FinetuneConfig::default()
    };
    let run = || {
        let art = PretrainedArtifacts::scratch(&env, &small_config(RewardSource::Apt), 3).unwrap();
        finetune(&env, art, &task, &cfg, 3).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
    assert!(a.success_episode.is_some());
    assert!(a.successes[50..].iter().all(|s| *s));
}

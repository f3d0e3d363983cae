use lanechange::agent::rainbow::cross_entropy_and_grad;
use lanechange::agent::{
    project_distribution, DoubleDqnAgent, Learner, LearnerConfig, RainbowAgent, Support,
};
use lanechange::env::{Action, EpisodeStatus};
use lanechange::nn::{NetworkConfig, NoiseMode, ParamSet};
use lanechange::replay::{StepRecord, TerminalKind, Transition};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Sparse-ish vectors exercise the edges as well as the bulk.
    let raw: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let s: f64 = raw.iter().sum();
    if s == 0.0 {
        let mut v = vec![0.0; n];
        v[rng.random_range(0..n)] = 1.0;
        v
    } else {
        raw.iter().map(|x| x / s).collect()
    }
}

#[test]
fn projection_conserves_mass_and_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let support = Support::new(-120.0, 120.0, 51);
    let z: Vec<f64> = support.values();
    let mut worst_mass: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    let mut unclamped = 0;
    for _ in 0..10_000 {
        let probs = random_probs(&mut rng, 51);
        let reward = rng.random_range(-150.0..150.0);
        let discount = [0.0, 0.99, 0.9801, rng.random::<f64>()][rng.random_range(0..4)];
        let m = project_distribution(reward, discount, &probs, &support);
        assert!(m.iter().all(|&x| x >= 0.0));
        let mass: f64 = m.iter().sum();
        worst_mass = worst_mass.max((mass - 1.0).abs());
        assert!((mass - 1.0).abs() < 1e-6);
        // Expected value is preserved whenever no shifted atom with mass
        // falls outside the support.
        let inside = probs
            .iter()
            .zip(&z)
            .all(|(&p, &zj)| p == 0.0 || (-120.0..=120.0).contains(&(reward + discount * zj)));
        if inside {
            unclamped += 1;
            let lhs: f64 = m.iter().zip(&z).map(|(a, b)| a * b).sum();
            let rhs = reward + discount * probs.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            worst_mean = worst_mean.max((lhs - rhs).abs());
            assert!((lhs - rhs).abs() < 1e-5, "{lhs} vs {rhs}");
        }
    }
    println!("projection: worst mass error {worst_mass:e}, worst mean error {worst_mean:e} over {unclamped} unclamped cases");
    assert!(unclamped > 1000);
}

proptest! {
    #[test]
    fn projection_output_is_a_distribution(
        reward in -500.0f64..500.0,
        discount in 0.0f64..1.0,
        raw in prop::collection::vec(0.0f64..1.0, 11),
    ) {
        let s: f64 = raw.iter().sum::<f64>() + 1e-3;
        let probs: Vec<f64> = raw.iter().map(|x| x / s).chain(std::iter::once(1e-3 / s)).collect();
        let support = Support::new(-10.0, 10.0, 12);
        let m = project_distribution(reward, discount, &probs, &support);
        prop_assert!(m.iter().all(|&x| x >= 0.0));
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

fn small_config() -> LearnerConfig {
    let mut c = LearnerConfig {
        network: NetworkConfig {
            encoder_widths: [8, 8],
            head_width: 16,
            atom_count: 11,
            v_min: -10.0,
            v_max: 10.0,
            noisy_sigma0: 0.5,
        },
        ..LearnerConfig::default()
    };
    c.agent.batch_size = 8;
    c.agent.train_start = 16;
    c.agent.target_sync = 5;
    c.replay.capacity = 64;
    c
}

fn random_obs(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn greedy_action_matches_expectation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..50 {
        let agent = RainbowAgent::<f32>::new(small_config(), 4, &mut ChaCha8Rng::seed_from_u64(seed));
        let obs = random_obs(&mut rng, agent.online().input_len());
        let dump = agent.q_distribution(&obs);
        // Independent expectation from the dumped probabilities.
        let q: Vec<f64> = dump
            .probs
            .iter()
            .map(|p| p.iter().zip(&dump.support).map(|(a, b)| a * b).sum())
            .collect();
        let mut best = 0;
        for a in 1..3 {
            if q[a] > q[best] {
                best = a;
            }
        }
        assert_eq!(agent.greedy_action(&obs, NoiseMode::Zero).index(), best);
        for p in &dump.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

/// Sets the advantage head so that action `a` puts all its mass on atom
/// `atom_for[a]`.
fn force_distributions(agent: &mut RainbowAgent<f64>, atom_for: [usize; 3]) {
    let atoms = agent.online().atoms();
    let layout = agent.online().layout().clone();
    let params = agent.online_mut().params_mut();
    for name in ["value.fc2.weight_mu", "value.fc2.weight_sigma", "value.fc2.bias_mu", "value.fc2.bias_sigma",
        "advantage.fc2.weight_mu", "advantage.fc2.weight_sigma", "advantage.fc2.bias_sigma"] {
        params[layout.find(name).unwrap().range.clone()].fill(0.0);
    }
    let bias = layout.find("advantage.fc2.bias_mu").unwrap().range.clone();
    for (a, &atom) in atom_for.iter().enumerate() {
        for i in 0..atoms {
            params[bias.start + a * atoms + i] = if i == atom { 60.0 } else { -60.0 };
        }
    }
}

#[test]
fn select_action_examples() {
    let mut config = small_config();
    config.network.v_min = -100.0;
    config.network.v_max = 100.0;
    let mut agent = RainbowAgent::<f64>::new(config, 2, &mut ChaCha8Rng::seed_from_u64(2));
    let obs = vec![0.1f32; agent.online().input_len()];
    // All keep-lane mass at +100, the others at 0.
    force_distributions(&mut agent, [10, 5, 5]);
    assert_eq!(agent.greedy_action(&obs, NoiseMode::Zero), Action::KeepLane);
    force_distributions(&mut agent, [5, 10, 5]);
    assert_eq!(agent.greedy_action(&obs, NoiseMode::Zero), Action::ChangeLeft);
    // Identical distributions: lowest index wins.
    force_distributions(&mut agent, [7, 7, 7]);
    assert_eq!(agent.greedy_action(&obs, NoiseMode::Zero), Action::KeepLane);
}

fn random_transitions(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Transition> {
    (0..n)
        .map(|k| Transition {
            observation: random_obs(rng, len),
            action: Action::from_index(rng.random_range(0..3)),
            reward: rng.random_range(-3.0..3.0),
            next_observation: random_obs(rng, len),
            discount: if k % 3 == 0 { 0.0 } else { 0.9801 },
            terminal: if k % 3 == 0 { TerminalKind::Solved } else { TerminalKind::None },
        })
        .collect()
}

#[test]
fn target_action_is_the_online_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agent = RainbowAgent::<f64>::new(small_config(), 3, &mut rng);
    let support = *agent.support();
    let z: Vec<f64> = support.values();
    for _ in 0..30 {
        agent.online_mut().resample_noise(&mut rng);
        agent.target_mut().resample_noise(&mut rng);
        // Perturb the target so it disagrees with the online network.
        for p in agent.target_mut().params_mut().iter_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let batch = random_transitions(&mut rng, 6, agent.online().input_len());
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = agent.compute_targets(&refs);
        for (r, t) in batch.iter().enumerate() {
            let x: Vec<f64> = t.next_observation.iter().map(|&v| v as f64).collect();
            let online = agent.online().forward(&x, 1, NoiseMode::Sampled).probs;
            let q: Vec<f64> = online.chunks(z.len()).map(|p| p.iter().zip(&z).map(|(a, b)| a * b).sum()).collect();
            let best = (0..3).fold(0, |b, a| if q[a] > q[b] { a } else { b });
            assert_eq!(targets.next_actions[r], best);
            let target = agent.target().forward(&x, 1, NoiseMode::Sampled).probs;
            let expected = project_distribution(t.reward, t.discount, &target[best * z.len()..(best + 1) * z.len()], &support);
            let got = &targets.distributions[r * z.len()..(r + 1) * z.len()];
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn on_grid_terminal_batch_loss_is_negative_log_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let agent = RainbowAgent::<f64>::new(small_config(), 2, &mut rng);
    let mut t = random_transitions(&mut rng, 1, agent.online().input_len()).remove(0);
    t.reward = 4.0; // atom 7 of [-10, 10] with 11 atoms
    t.discount = 0.0;
    let targets = agent.compute_targets(&[&t]);
    assert!((targets.distributions[7] - 1.0).abs() < 1e-12);
    assert!(targets.distributions.iter().enumerate().all(|(i, &m)| i == 7 || m == 0.0));
    let obs: Vec<f64> = t.observation.iter().map(|&v| v as f64).collect();
    let (losses, _) = agent.loss_and_gradient(&obs, &[t.action.index()], &targets.distributions, &[1.0]);
    let probs = agent.online().forward(&obs, 1, NoiseMode::Sampled).probs;
    let p = probs[t.action.index() * 11 + 7];
    assert!((losses[0] + p.ln()).abs() < 1e-12);
    let (_, g) = cross_entropy_and_grad(&probs, &[t.action.index()], &targets.distributions, &[1.0], 11);
    assert!((g[t.action.index() * 11 + 7] - (p - 1.0)).abs() < 1e-15);
}

/// Double DQN targets from a script that evaluates each transition alone.
#[test]
fn double_dqn_targets_match_scripted_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agent = DoubleDqnAgent::<f64>::new(small_config(), 3, &mut rng);
    for p in agent.target_mut().params_mut().iter_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    let batch = random_transitions(&mut rng, 8, agent.online().input_len());
    let refs: Vec<&Transition> = batch.iter().collect();
    let y = agent.compute_targets(&refs);
    for (t, &y) in batch.iter().zip(&y) {
        let x: Vec<f64> = t.next_observation.iter().map(|&v| v as f64).collect();
        let qo = agent.online().forward(&x, 1).q;
        let qt = agent.target().forward(&x, 1).q;
        let a = if qo[1] > qo[0] && qo[1] >= qo[2] { 1 } else if qo[2] > qo[0] && qo[2] > qo[1] { 2 } else { 0 };
        let expected = t.reward + t.discount * qt[a];
        assert!((y - expected).abs() < 1e-12);
        if t.discount == 0.0 {
            assert_eq!(y, t.reward);
        }
    }
}

#[test]
fn identical_networks_reduce_to_plain_td_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let agent = DoubleDqnAgent::<f64>::new(small_config(), 2, &mut rng);
    let batch = random_transitions(&mut rng, 5, agent.online().input_len());
    let refs: Vec<&Transition> = batch.iter().collect();
    let y = agent.compute_targets(&refs);
    for (t, &y) in batch.iter().zip(&y) {
        let x: Vec<f64> = t.next_observation.iter().map(|&v| v as f64).collect();
        let q = agent.online().forward(&x, 1).q;
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((y - (t.reward + t.discount * max)).abs() < 1e-12);
    }
}

fn feed<L: Learner>(agent: &mut L, steps: usize, rng: &mut ChaCha8Rng) -> usize {
    let len = agent.input_len();
    let mut trained = 0;
    for k in 0..steps {
        let obs = random_obs(rng, len);
        let action = agent.act(&obs, true, rng);
        let status = if k % 25 == 24 { EpisodeStatus::Collided } else { EpisodeStatus::Running };
        let rec = StepRecord {
            observation: obs,
            action,
            reward: rng.random_range(-1.0..1.0),
            next_observation: random_obs(rng, len),
            status,
        };
        if agent.observe(rec, rng).unwrap().is_some() {
            trained += 1;
        }
    }
    trained
}

#[test]
fn training_starts_after_warmup_and_syncs_on_cadence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agent = RainbowAgent::<f32>::new(small_config(), 3, &mut rng);
    assert_eq!(feed(&mut agent, 15, &mut rng), 0);
    let before: Vec<f32> = agent.online().params().to_vec();
    // Step 16 is the first update; four more bring the count to five and
    // trigger a target sync.
    assert_eq!(feed(&mut agent, 4, &mut rng), 4);
    assert_ne!(agent.online().params(), &before[..]);
    assert_ne!(agent.online().params(), agent.target().params());
    assert_eq!(feed(&mut agent, 1, &mut rng), 1);
    assert_eq!(agent.counters().train_steps, 5);
    assert_eq!(agent.online().params(), agent.target().params());
    feed(&mut agent, 1, &mut rng);
    assert_ne!(agent.online().params(), agent.target().params());
}

#[test]
fn double_dqn_explores_early_and_trains() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agent = DoubleDqnAgent::<f32>::new(small_config(), 3, &mut rng);
    assert_eq!(agent.epsilon(), 1.0);
    let trained = feed(&mut agent, 60, &mut rng);
    assert_eq!(trained, 60 - 15);
    assert_eq!(agent.config().replay.priority_exponent, 0.0);
}

#[test]
fn evaluation_actions_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut agent = RainbowAgent::<f32>::new(small_config(), 3, &mut rng);
    feed(&mut agent, 40, &mut rng);
    let obs = random_obs(&mut rng, agent.input_len());
    let a = agent.act(&obs, false, &mut ChaCha8Rng::seed_from_u64(1));
    for s in 0..10 {
        assert_eq!(agent.act(&obs, false, &mut ChaCha8Rng::seed_from_u64(s)), a);
    }
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::projection::{project_distribution, Support};
use crate::agent::{
    should_train, to_scalars, AgentCounters, Learner, LearnerConfig, QDistribution, TrainStats,
};
use crate::env::Action;
use crate::error::Result;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{argmax, expected_values, Adam, DistributionalNetwork, NoiseMode, ParamSet};
use crate::replay::{NStepAssembler, PrioritizedReplay, StepRecord, Transition};
use crate::scalar::Scalar;

/// Bootstrap targets of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets<T> {
    /// Online-network argmax at the next state.
    pub next_actions: Vec<usize>,
    /// Online expected values at the next state, `batch x actions`.
    pub online_next_q: Vec<T>,
    /// Projected target distributions, `batch x atoms`.
    pub distributions: Vec<T>,
}

/// Per-sample cross-entropy `-sum_j m_j log p_j` and the gradient of
/// `sum_i weights_i * ce_i` with respect to the logits.
pub fn cross_entropy_and_grad<T: Scalar>(
    probs: &[T],
    actions: &[usize],
    targets: &[T],
    weights: &[T],
    atoms: usize,
) -> (Vec<T>, Vec<T>) {
    let per_row = Action::COUNT * atoms;
    let rows = actions.len();
    assert_eq!(probs.len(), rows * per_row);
    assert_eq!(targets.len(), rows * atoms);
    let tiny = T::min_positive_value();
    let mut losses = Vec::with_capacity(rows);
    let mut d_logits = vec![T::zero(); probs.len()];
    for r in 0..rows {
        let off = r * per_row + actions[r] * atoms;
        let p = &probs[off..off + atoms];
        let m = &targets[r * atoms..(r + 1) * atoms];
        losses.push(-m.iter().zip(p).map(|(&m, &p)| m * p.max(tiny).ln()).sum::<T>());
        for j in 0..atoms {
            d_logits[off + j] = weights[r] * (p[j] - m[j]);
        }
    }
    (losses, d_logits)
}

#[derive(Debug, Clone)]
pub struct RainbowAgent<T> {
    config: LearnerConfig,
    support: Support,
    z: Vec<T>,
    online: DistributionalNetwork<T>,
    target: DistributionalNetwork<T>,
    adam: Adam<T>,
    replay: PrioritizedReplay,
    nstep: NStepAssembler,
    env_steps: u64,
    train_steps: u64,
}

impl<T: Scalar> RainbowAgent<T> {
    pub fn new<R: Rng + ?Sized>(config: LearnerConfig, slots: usize, rng: &mut R) -> Self {
        config.validate().expect("invalid learner config");
        let online = DistributionalNetwork::new(&config.network, slots, rng);
        let target = online.clone();
        let support = Support::new(config.network.v_min, config.network.v_max, config.network.atom_count);
        Self {
            z: support.values(),
            support,
            adam: Adam::new(config.optimizer.clone(), online.layout().len()),
            replay: PrioritizedReplay::new(config.replay.capacity, config.replay.priority_exponent),
            nstep: NStepAssembler::new(config.replay.n_step, config.agent.gamma),
            online,
            target,
            config,
            env_steps: 0,
            train_steps: 0,
        }
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn online(&self) -> &DistributionalNetwork<T> {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut DistributionalNetwork<T> {
        &mut self.online
    }

    pub fn target(&self) -> &DistributionalNetwork<T> {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut DistributionalNetwork<T> {
        &mut self.target
    }

    pub fn replay(&self) -> &PrioritizedReplay {
        &self.replay
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Greedy action on expected values; `sampled` uses the current noise
    /// sample, otherwise the mean weights.
    pub fn greedy_action(&self, obs: &[f32], mode: NoiseMode) -> Action {
        let x = to_scalars::<T>(obs);
        let probs = self.online.forward(&x, 1, mode).probs;
        Action::from_index(argmax(&expected_values(&probs, &self.z)))
    }

    pub fn q_distribution(&self, obs: &[f32]) -> QDistribution {
        let x = to_scalars::<T>(obs);
        let probs = self.online.forward(&x, 1, NoiseMode::Zero).probs;
        let expected = expected_values(&probs, &self.z);
        QDistribution {
            support: self.z.iter().map(|z| z.as_f64()).collect(),
            probs: probs
                .chunks_exact(self.support.atoms)
                .map(|p| p.iter().map(|x| x.as_f64()).collect())
                .collect(),
            expected: expected.iter().map(|x| x.as_f64()).collect(),
        }
    }

    fn stack<'a>(&self, obs: impl Iterator<Item = &'a [f32]>) -> Vec<T> {
        let mut out = Vec::new();
        for o in obs {
            out.extend(o.iter().map(|&x| T::of(x as f64)));
        }
        out
    }

    /// Double-Q targets with the current noise samples of both networks.
    pub fn compute_targets(&self, batch: &[&Transition]) -> Targets<T> {
        let rows = batch.len();
        let atoms = self.support.atoms;
        let next = self.stack(batch.iter().map(|t| t.next_observation.as_slice()));
        let online_next = self.online.forward(&next, rows, NoiseMode::Sampled);
        let online_next_q = expected_values(&online_next.probs, &self.z);
        let next_actions: Vec<usize> = online_next_q.chunks_exact(Action::COUNT).map(argmax).collect();
        let target_next = self.target.forward(&next, rows, NoiseMode::Sampled);
        let mut distributions = Vec::with_capacity(rows * atoms);
        for (r, t) in batch.iter().enumerate() {
            let off = (r * Action::COUNT + next_actions[r]) * atoms;
            let p = &target_next.probs[off..off + atoms];
            distributions.extend(project_distribution(t.reward, t.discount, p, &self.support));
        }
        Targets {
            next_actions,
            online_next_q,
            distributions,
        }
    }

    /// Per-sample losses and the gradient of `mean_i(weights_i * loss_i)`
    /// with respect to the online parameters, using the current noise.
    pub fn loss_and_gradient(&self, obs: &[T], actions: &[usize], targets: &[T], weights: &[T]) -> (Vec<T>, Vec<T>) {
        let rows = actions.len();
        let fwd = self.online.forward(obs, rows, NoiseMode::Sampled);
        let inv = T::one() / T::of(rows as f64);
        let scaled: Vec<T> = weights.iter().map(|&w| w * inv).collect();
        let (losses, d_logits) = cross_entropy_and_grad(&fwd.probs, actions, targets, &scaled, self.support.atoms);
        let mut grads = vec![T::zero(); self.online.layout().len()];
        self.online.backward(&fwd, &d_logits, &mut grads);
        (losses, grads)
    }

    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TrainStats> {
        let beta = self.config.replay.beta(self.env_steps);
        self.online.resample_noise(rng);
        self.target.resample_noise(rng);
        let batch = self.replay.sample(self.config.agent.batch_size, beta, rng)?;
        let targets = self.compute_targets(&batch.transitions);
        let obs = self.stack(batch.transitions.iter().map(|t| t.observation.as_slice()));
        let actions: Vec<usize> = batch.transitions.iter().map(|t| t.action.index()).collect();
        let weights: Vec<T> = batch.weights.iter().map(|&w| T::of(w)).collect();
        let (losses, grads) = self.loss_and_gradient(&obs, &actions, &targets.distributions, &weights);
        let indices = batch.indices;

        let grad_norm = self.adam.step(self.online.params_mut(), &grads)?;
        let losses: Vec<f64> = losses.iter().map(|l| l.as_f64()).collect();
        self.replay.update_priorities(&indices, &losses)?;
        self.train_steps += 1;
        let target_synced = self.train_steps % self.config.agent.target_sync == 0;
        if target_synced {
            self.online.sync_into(&mut self.target);
        }
        Ok(TrainStats {
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            grad_norm,
            target_synced,
        })
    }
}

impl<T: Scalar> Learner for RainbowAgent<T> {
    fn greedy(&self, obs: &[f32]) -> Action {
        self.greedy_action(obs, NoiseMode::Zero)
    }

    fn act(&mut self, obs: &[f32], explore: bool, rng: &mut ChaCha8Rng) -> Action {
        if explore {
            self.online.resample_noise(rng);
            self.greedy_action(obs, NoiseMode::Sampled)
        } else {
            self.greedy_action(obs, NoiseMode::Zero)
        }
    }

    fn observe(&mut self, record: StepRecord, rng: &mut ChaCha8Rng) -> Result<Option<TrainStats>> {
        self.env_steps += 1;
        for t in self.nstep.push(record) {
            self.replay.push(t);
        }
        if should_train(&self.config.agent, self.env_steps, self.replay.len()) {
            self.train_step(rng).map(Some)
        } else {
            Ok(None)
        }
    }

    fn counters(&self) -> AgentCounters {
        AgentCounters {
            env_steps: self.env_steps,
            train_steps: self.train_steps,
            optimizer_steps: self.adam.t,
        }
    }

    fn input_len(&self) -> usize {
        self.online.input_len()
    }

    fn save_tensors(&self, ck: &mut Checkpoint) {
        let layout = self.online.layout();
        ck.push_params("online", layout, self.online.params());
        ck.push_params("target", layout, self.target.params());
        ck.push_params("adam.m", layout, &self.adam.m);
        ck.push_params("adam.v", layout, &self.adam.v);
    }

    fn restore(&mut self, ck: &Checkpoint, counters: AgentCounters) -> Result<()> {
        let layout = self.online.layout().clone();
        ck.load_params("online", &layout, self.online.params_mut())?;
        ck.load_params("target", &layout, self.target.params_mut())?;
        ck.load_params("adam.m", &layout, &mut self.adam.m)?;
        ck.load_params("adam.v", &layout, &mut self.adam.v)?;
        self.adam.t = counters.optimizer_steps;
        self.env_steps = counters.env_steps;
        self.train_steps = counters.train_steps;
        Ok(())
    }
}

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{should_train, to_scalars, AgentCounters, Learner, LearnerConfig, TrainStats};
use crate::env::Action;
use crate::error::Result;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{argmax, Adam, ParamSet, ScalarQNetwork};
use crate::replay::{NStepAssembler, PrioritizedReplay, StepRecord, Transition};
use crate::scalar::Scalar;

/// Huber loss and its derivative at `delta`.
pub fn huber<T: Scalar>(delta: T, kappa: T) -> (T, T) {
    let half = T::of(0.5);
    if delta.abs() <= kappa {
        (half * delta * delta, delta)
    } else {
        (kappa * (delta.abs() - half * kappa), kappa * delta.signum())
    }
}

/// Double DQN with epsilon-greedy exploration and uniform replay.
#[derive(Debug, Clone)]
pub struct DoubleDqnAgent<T> {
    config: LearnerConfig,
    online: ScalarQNetwork<T>,
    target: ScalarQNetwork<T>,
    adam: Adam<T>,
    replay: PrioritizedReplay,
    nstep: NStepAssembler,
    env_steps: u64,
    train_steps: u64,
}

impl<T: Scalar> DoubleDqnAgent<T> {
    /// The replay priority exponent is forced to 0 (uniform sampling).
    pub fn new<R: Rng + ?Sized>(mut config: LearnerConfig, slots: usize, rng: &mut R) -> Self {
        config.replay.priority_exponent = 0.0;
        config.validate().expect("invalid learner config");
        let online = ScalarQNetwork::new(&config.network, slots, rng);
        let target = online.clone();
        Self {
            adam: Adam::new(config.optimizer.clone(), online.layout().len()),
            replay: PrioritizedReplay::new(config.replay.capacity, 0.0),
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

    pub fn online(&self) -> &ScalarQNetwork<T> {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut ScalarQNetwork<T> {
        &mut self.online
    }

    pub fn target(&self) -> &ScalarQNetwork<T> {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut ScalarQNetwork<T> {
        &mut self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.config.agent.epsilon(self.env_steps)
    }

    pub fn q_values(&self, obs: &[f32]) -> Vec<T> {
        self.online.forward(&to_scalars(obs), 1).q
    }

    fn stack<'a>(obs: impl Iterator<Item = &'a [f32]>) -> Vec<T> {
        let mut out = Vec::new();
        for o in obs {
            out.extend(o.iter().map(|&x| T::of(x as f64)));
        }
        out
    }

    /// `y = r_n + discount * Q_target(s', argmax_a Q_online(s', a))`.
    pub fn compute_targets(&self, batch: &[&Transition]) -> Vec<T> {
        let rows = batch.len();
        let next = Self::stack(batch.iter().map(|t| t.next_observation.as_slice()));
        let q_online = self.online.forward(&next, rows).q;
        let q_target = self.target.forward(&next, rows).q;
        batch
            .iter()
            .enumerate()
            .map(|(r, t)| {
                let row = r * Action::COUNT..(r + 1) * Action::COUNT;
                let a = argmax(&q_online[row]);
                T::of(t.reward) + T::of(t.discount) * q_target[r * Action::COUNT + a]
            })
            .collect()
    }

    /// Per-sample Huber losses and the gradient of their mean.
    pub fn loss_and_gradient(&self, obs: &[T], actions: &[usize], targets: &[T]) -> (Vec<T>, Vec<T>) {
        let rows = actions.len();
        let fwd = self.online.forward(obs, rows);
        let kappa = T::of(self.config.agent.huber_kappa);
        let inv = T::one() / T::of(rows as f64);
        let mut losses = Vec::with_capacity(rows);
        let mut d_q = vec![T::zero(); fwd.q.len()];
        for r in 0..rows {
            let k = r * Action::COUNT + actions[r];
            let (l, d) = huber(fwd.q[k] - targets[r], kappa);
            losses.push(l);
            d_q[k] = d * inv;
        }
        let mut grads = vec![T::zero(); self.online.layout().len()];
        self.online.backward(&fwd, &d_q, &mut grads);
        (losses, grads)
    }

    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TrainStats> {
        let batch = self.replay.sample(self.config.agent.batch_size, 0.0, rng)?;
        let targets = self.compute_targets(&batch.transitions);
        let obs = Self::stack(batch.transitions.iter().map(|t| t.observation.as_slice()));
        let actions: Vec<usize> = batch.transitions.iter().map(|t| t.action.index()).collect();
        let (losses, grads) = self.loss_and_gradient(&obs, &actions, &targets);
        let grad_norm = self.adam.step(self.online.params_mut(), &grads)?;
        self.train_steps += 1;
        let target_synced = self.train_steps % self.config.agent.target_sync == 0;
        if target_synced {
            self.online.sync_into(&mut self.target);
        }
        Ok(TrainStats {
            loss: losses.iter().map(|l| l.as_f64()).sum::<f64>() / losses.len() as f64,
            grad_norm,
            target_synced,
        })
    }
}

impl<T: Scalar> Learner for DoubleDqnAgent<T> {
    fn greedy(&self, obs: &[f32]) -> Action {
        Action::from_index(argmax(&self.q_values(obs)))
    }

    fn act(&mut self, obs: &[f32], explore: bool, rng: &mut ChaCha8Rng) -> Action {
        if explore && rng.random::<f64>() < self.epsilon() {
            return Action::from_index(rng.random_range(0..Action::COUNT));
        }
        self.greedy(obs)
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

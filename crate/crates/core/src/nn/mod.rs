//! Value networks with hand-written forward and backward passes.
//!
//! Parameters of a network live in one flat vector described by a
//! [`ParamLayout`], so the optimizer, target sync, and checkpointing all
//! operate on plain slices.

pub mod adam;
pub mod checkpoint;
pub mod encoder;
pub mod layers;
pub mod layout;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::nn::encoder::{EncoderCache, SlotEncoder};
use crate::nn::layers::{relu_backward, relu_inplace, FactorizedNoise, Linear, NoisyLinear};
use crate::scalar::Scalar;

pub use adam::{Adam, AdamConfig};
pub use layers::NoiseMode;
pub use layout::{ParamEntry, ParamLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Widths of the two shared per-slot layers.
    pub encoder_widths: [usize; 2],
    pub head_width: usize,
    pub atom_count: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub noisy_sigma0: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            encoder_widths: [32, 64],
            head_width: 256,
            atom_count: 51,
            v_min: -120.0,
            v_max: 120.0,
            noisy_sigma0: 0.5,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.atom_count < 2 {
            return Err("atom_count must be at least 2".into());
        }
        if !(self.v_min < self.v_max) {
            return Err("v_min must be below v_max".into());
        }
        if self.encoder_widths.contains(&0) || self.head_width == 0 {
            return Err("layer widths must be positive".into());
        }
        if !(self.noisy_sigma0 >= 0.0) {
            return Err("noisy_sigma0 must be non-negative".into());
        }
        Ok(())
    }

    pub fn delta_z(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atom_count - 1) as f64
    }

    /// Atom values `z_i = v_min + i * delta_z`.
    pub fn support<T: Scalar>(&self) -> Vec<T> {
        let dz = self.delta_z();
        (0..self.atom_count).map(|i| T::of(self.v_min + i as f64 * dz)).collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `probs` is `rows x actions x atoms`; returns `rows x actions` expectations.
pub fn expected_values<T: Scalar>(probs: &[T], support: &[T]) -> Vec<T> {
    probs
        .chunks_exact(support.len())
        .map(|p| p.iter().zip(support).map(|(&p, &z)| p * z).sum())
        .collect()
}

/// In-place softmax over consecutive chunks of `n`.
fn softmax_rows<T: Scalar>(x: &mut [T], n: usize) {
    for row in x.chunks_exact_mut(n) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Per-atom dueling combine: `logit(a,i) = value(i) + adv(a,i) - mean_a adv(a,i)`.
pub fn dueling_combine<T: Scalar>(value: &[T], adv: &[T], actions: usize, atoms: usize) -> Vec<T> {
    let rows = value.len() / atoms;
    let inv = T::one() / T::of(actions as f64);
    let mut out = Vec::with_capacity(rows * actions * atoms);
    for r in 0..rows {
        let v = &value[r * atoms..(r + 1) * atoms];
        let a = &adv[r * actions * atoms..(r + 1) * actions * atoms];
        let mean: Vec<T> = (0..atoms).map(|i| (0..actions).map(|k| a[k * atoms + i]).sum::<T>() * inv).collect();
        for k in 0..actions {
            for i in 0..atoms {
                out.push(v[i] + a[k * atoms + i] - mean[i]);
            }
        }
    }
    out
}

/// Backward of [`dueling_combine`]: returns `(d_value, d_adv)`.
pub fn dueling_backward<T: Scalar>(d_logits: &[T], actions: usize, atoms: usize) -> (Vec<T>, Vec<T>) {
    let rows = d_logits.len() / (actions * atoms);
    let inv = T::one() / T::of(actions as f64);
    let mut dv = vec![T::zero(); rows * atoms];
    let mut da = vec![T::zero(); rows * actions * atoms];
    for r in 0..rows {
        let d = &d_logits[r * actions * atoms..(r + 1) * actions * atoms];
        for i in 0..atoms {
            let total: T = (0..actions).map(|k| d[k * atoms + i]).sum();
            dv[r * atoms + i] = total;
            for k in 0..actions {
                da[r * actions * atoms + k * atoms + i] = d[k * atoms + i] - total * inv;
            }
        }
    }
    (dv, da)
}

/// Something owning a flat parameter vector with a named layout.
pub trait ParamSet<T> {
    fn layout(&self) -> &ParamLayout;
    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];
}

/// Noisy dueling distributional Q-network.
#[derive(Debug, Clone)]
pub struct DistributionalNetwork<T> {
    config: NetworkConfig,
    layout: ParamLayout,
    encoder: SlotEncoder,
    value1: NoisyLinear,
    value2: NoisyLinear,
    adv1: NoisyLinear,
    adv2: NoisyLinear,
    params: Vec<T>,
    noise: [FactorizedNoise<T>; 4],
}

/// Result of a forward pass, holding what the backward pass needs.
#[derive(Debug, Clone)]
pub struct DistForward<T> {
    pub rows: usize,
    /// `rows x actions x atoms`, softmax over atoms.
    pub probs: Vec<T>,
    mode: NoiseMode,
    encoder: EncoderCache<T>,
    features: Vec<T>,
    hv: Vec<T>,
    ha: Vec<T>,
    effective: [(Vec<T>, Vec<T>); 4],
}

impl<T: Scalar> DistributionalNetwork<T> {
    pub fn new<R: Rng + ?Sized>(config: &NetworkConfig, slots: usize, rng: &mut R) -> Self {
        config.validate().expect("invalid network config");
        let mut layout = ParamLayout::default();
        let encoder = SlotEncoder::register(&mut layout, slots, config.encoder_widths);
        let n_feat = encoder.output_len();
        let h = config.head_width;
        let n = config.atom_count;
        let value1 = NoisyLinear::register(&mut layout, "value.fc1", n_feat, h);
        let value2 = NoisyLinear::register(&mut layout, "value.fc2", h, n);
        let adv1 = NoisyLinear::register(&mut layout, "advantage.fc1", n_feat, h);
        let adv2 = NoisyLinear::register(&mut layout, "advantage.fc2", h, Action::COUNT * n);
        let mut params = vec![T::zero(); layout.len()];
        encoder.init(&mut params, rng);
        for layer in [&value1, &value2, &adv1, &adv2] {
            layer.init(&mut params, config.noisy_sigma0, rng);
        }
        let noise = [&value1, &value2, &adv1, &adv2].map(|l| FactorizedNoise::zeros(l.n_in, l.n_out));
        Self {
            config: config.clone(),
            layout,
            encoder,
            value1,
            value2,
            adv1,
            adv2,
            params,
            noise,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn slots(&self) -> usize {
        self.encoder.slots
    }

    pub fn input_len(&self) -> usize {
        self.encoder.input_len()
    }

    pub fn atoms(&self) -> usize {
        self.config.atom_count
    }

    pub fn resample_noise<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for n in &mut self.noise {
            n.resample(rng);
        }
    }

    /// Hard copy of all parameters into `target`.
    pub fn sync_into(&self, target: &mut Self) {
        assert_eq!(self.layout, target.layout, "target network has a different layout");
        target.params.copy_from_slice(&self.params);
    }

    fn noisy_layers(&self) -> [&NoisyLinear; 4] {
        [&self.value1, &self.value2, &self.adv1, &self.adv2]
    }

    pub fn forward(&self, obs: &[T], rows: usize, mode: NoiseMode) -> DistForward<T> {
        let (features, encoder) = self.encoder.forward(&self.params, obs, rows);
        let effective = [0, 1, 2, 3].map(|k| self.noisy_layers()[k].effective(&self.params, &self.noise[k], mode));
        let mut hv = self.value1.forward_with(&effective[0].0, &effective[0].1, &features, rows);
        relu_inplace(&mut hv);
        let value = self.value2.forward_with(&effective[1].0, &effective[1].1, &hv, rows);
        let mut ha = self.adv1.forward_with(&effective[2].0, &effective[2].1, &features, rows);
        relu_inplace(&mut ha);
        let adv = self.adv2.forward_with(&effective[3].0, &effective[3].1, &ha, rows);
        let mut probs = dueling_combine(&value, &adv, Action::COUNT, self.atoms());
        softmax_rows(&mut probs, self.atoms());
        DistForward {
            rows,
            probs,
            mode,
            encoder,
            features,
            hv,
            ha,
            effective,
        }
    }

    /// Accumulates `dL/dparams` into `grads` given `dL/dlogits` (same layout
    /// as `probs`).
    pub fn backward(&self, fwd: &DistForward<T>, d_logits: &[T], grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(d_logits.len(), fwd.probs.len());
        let rows = fwd.rows;
        let (dv, da) = dueling_backward(d_logits, Action::COUNT, self.atoms());
        let eff = &fwd.effective;
        let mode = fwd.mode;

        let mut dhv = self
            .value2
            .backward(&eff[1].0, &self.noise[1], mode, &fwd.hv, &dv, rows, grads, true)
            .expect("dx requested");
        relu_backward(&mut dhv, &fwd.hv);
        let mut d_feat = self
            .value1
            .backward(&eff[0].0, &self.noise[0], mode, &fwd.features, &dhv, rows, grads, true)
            .expect("dx requested");

        let mut dha = self
            .adv2
            .backward(&eff[3].0, &self.noise[3], mode, &fwd.ha, &da, rows, grads, true)
            .expect("dx requested");
        relu_backward(&mut dha, &fwd.ha);
        let d_feat_adv = self
            .adv1
            .backward(&eff[2].0, &self.noise[2], mode, &fwd.features, &dha, rows, grads, true)
            .expect("dx requested");
        for (a, b) in d_feat.iter_mut().zip(d_feat_adv) {
            *a += b;
        }
        self.encoder.backward(&self.params, &fwd.encoder, &d_feat, grads);
    }
}

impl<T> ParamSet<T> for DistributionalNetwork<T> {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn params(&self) -> &[T] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }
}

/// Plain scalar Q-network sharing the slot encoder architecture.
#[derive(Debug, Clone)]
pub struct ScalarQNetwork<T> {
    layout: ParamLayout,
    encoder: SlotEncoder,
    fc1: Linear,
    fc2: Linear,
    params: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct QForward<T> {
    pub rows: usize,
    /// `rows x actions`.
    pub q: Vec<T>,
    encoder: EncoderCache<T>,
    features: Vec<T>,
    h: Vec<T>,
}

impl<T: Scalar> ScalarQNetwork<T> {
    pub fn new<R: Rng + ?Sized>(config: &NetworkConfig, slots: usize, rng: &mut R) -> Self {
        config.validate().expect("invalid network config");
        let mut layout = ParamLayout::default();
        let encoder = SlotEncoder::register(&mut layout, slots, config.encoder_widths);
        let fc1 = Linear::register(&mut layout, "q.fc1", encoder.output_len(), config.head_width);
        let fc2 = Linear::register(&mut layout, "q.fc2", config.head_width, Action::COUNT);
        let mut params = vec![T::zero(); layout.len()];
        encoder.init(&mut params, rng);
        fc1.init(&mut params, rng);
        fc2.init(&mut params, rng);
        Self {
            layout,
            encoder,
            fc1,
            fc2,
            params,
        }
    }

    pub fn slots(&self) -> usize {
        self.encoder.slots
    }

    pub fn input_len(&self) -> usize {
        self.encoder.input_len()
    }

    pub fn sync_into(&self, target: &mut Self) {
        assert_eq!(self.layout, target.layout, "target network has a different layout");
        target.params.copy_from_slice(&self.params);
    }

    pub fn forward(&self, obs: &[T], rows: usize) -> QForward<T> {
        let (features, encoder) = self.encoder.forward(&self.params, obs, rows);
        let mut h = self.fc1.forward(&self.params, &features, rows);
        relu_inplace(&mut h);
        let q = self.fc2.forward(&self.params, &h, rows);
        QForward {
            rows,
            q,
            encoder,
            features,
            h,
        }
    }

    pub fn backward(&self, fwd: &QForward<T>, d_q: &[T], grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len());
        let mut dh = self
            .fc2
            .backward(&self.params, &fwd.h, d_q, fwd.rows, grads, true)
            .expect("dx requested");
        relu_backward(&mut dh, &fwd.h);
        let d_feat = self
            .fc1
            .backward(&self.params, &fwd.features, &dh, fwd.rows, grads, true)
            .expect("dx requested");
        self.encoder.backward(&self.params, &fwd.encoder, &d_feat, grads);
    }
}

impl<T> ParamSet<T> for ScalarQNetwork<T> {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn params(&self) -> &[T] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }
}

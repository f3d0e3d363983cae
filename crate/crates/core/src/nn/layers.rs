//! Dense and factorized-noise dense layers over a flat parameter vector.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::nn::layout::ParamLayout;
use crate::scalar::{matmul_dy_w, matmul_dyt_x, matmul_xwt, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Effective weights `mu + sigma * eps` with the current noise sample.
    Sampled,
    /// Mean weights only.
    Zero,
}

pub(crate) fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `dy` wherever the post-activation output was clipped.
pub(crate) fn relu_backward<T: Scalar>(dy: &mut [T], y: &[T]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
}

fn with_bias<T: Scalar>(bias: &[T], rows: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * bias.len());
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    out
}

fn add_column_sums<T: Scalar>(dy: &[T], n_out: usize, db: &mut [T]) {
    for row in dy.chunks_exact(n_out) {
        for (g, &d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
}

fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(out: &mut [T], fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
    for v in out {
        *v = T::of(dist.sample(rng));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

impl Linear {
    pub fn register(layout: &mut ParamLayout, name: &str, n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight: layout.add(format!("{name}.weight"), &[n_out, n_in]),
            bias: layout.add(format!("{name}.bias"), &[n_out]),
        }
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, params: &mut [T], rng: &mut R) {
        fan_in_uniform(&mut params[self.weight.clone()], self.n_in, rng);
        fan_in_uniform(&mut params[self.bias.clone()], self.n_in, rng);
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T], rows: usize) -> Vec<T> {
        let mut out = with_bias(&params[self.bias.clone()], rows);
        matmul_xwt(x, &params[self.weight.clone()], &mut out, rows, self.n_in, self.n_out);
        out
    }

    /// Accumulates parameter gradients; returns `dx` when requested.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        x: &[T],
        dy: &[T],
        rows: usize,
        grads: &mut [T],
        want_dx: bool,
    ) -> Option<Vec<T>> {
        matmul_dyt_x(dy, x, &mut grads[self.weight.clone()], rows, self.n_in, self.n_out);
        add_column_sums(dy, self.n_out, &mut grads[self.bias.clone()]);
        want_dx.then(|| {
            let mut dx = vec![T::zero(); rows * self.n_in];
            matmul_dy_w(dy, &params[self.weight.clone()], &mut dx, rows, self.n_in, self.n_out);
            dx
        })
    }
}

/// Factorized Gaussian noise of one noisy layer, already passed through
/// `f(x) = sign(x) sqrt(|x|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedNoise<T> {
    pub f_in: Vec<T>,
    pub f_out: Vec<T>,
}

impl<T: Scalar> FactorizedNoise<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            f_in: vec![T::zero(); n_in],
            f_out: vec![T::zero(); n_out],
        }
    }

    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let f = |x: f64| x.signum() * x.abs().sqrt();
        for v in self.f_in.iter_mut().chain(self.f_out.iter_mut()) {
            let x: f64 = StandardNormal.sample(rng);
            *v = T::of(f(x));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisyLinear {
    pub n_in: usize,
    pub n_out: usize,
    pub weight_mu: Range<usize>,
    pub weight_sigma: Range<usize>,
    pub bias_mu: Range<usize>,
    pub bias_sigma: Range<usize>,
}

impl NoisyLinear {
    pub fn register(layout: &mut ParamLayout, name: &str, n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight_mu: layout.add(format!("{name}.weight_mu"), &[n_out, n_in]),
            weight_sigma: layout.add(format!("{name}.weight_sigma"), &[n_out, n_in]),
            bias_mu: layout.add(format!("{name}.bias_mu"), &[n_out]),
            bias_sigma: layout.add(format!("{name}.bias_sigma"), &[n_out]),
        }
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, params: &mut [T], sigma0: f64, rng: &mut R) {
        fan_in_uniform(&mut params[self.weight_mu.clone()], self.n_in, rng);
        fan_in_uniform(&mut params[self.bias_mu.clone()], self.n_in, rng);
        let sigma = T::of(sigma0 / (self.n_in as f64).sqrt());
        params[self.weight_sigma.clone()].fill(sigma);
        params[self.bias_sigma.clone()].fill(sigma);
    }

    /// Effective `(weight, bias)` under `mode`.
    pub fn effective<T: Scalar>(&self, params: &[T], noise: &FactorizedNoise<T>, mode: NoiseMode) -> (Vec<T>, Vec<T>) {
        let w_mu = &params[self.weight_mu.clone()];
        let b_mu = &params[self.bias_mu.clone()];
        match mode {
            NoiseMode::Zero => (w_mu.to_vec(), b_mu.to_vec()),
            NoiseMode::Sampled => {
                let w_sigma = &params[self.weight_sigma.clone()];
                let b_sigma = &params[self.bias_sigma.clone()];
                let mut w = Vec::with_capacity(w_mu.len());
                for o in 0..self.n_out {
                    let fo = noise.f_out[o];
                    let row = o * self.n_in..(o + 1) * self.n_in;
                    for ((&mu, &sig), &fi) in w_mu[row.clone()].iter().zip(&w_sigma[row]).zip(&noise.f_in) {
                        w.push(mu + sig * fo * fi);
                    }
                }
                let b = b_mu
                    .iter()
                    .zip(b_sigma)
                    .zip(&noise.f_out)
                    .map(|((&mu, &sig), &fo)| mu + sig * fo)
                    .collect();
                (w, b)
            }
        }
    }

    pub fn forward_with<T: Scalar>(&self, weight: &[T], bias: &[T], x: &[T], rows: usize) -> Vec<T> {
        let mut out = with_bias(bias, rows);
        matmul_xwt(x, weight, &mut out, rows, self.n_in, self.n_out);
        out
    }

    /// Accumulates gradients of `mu` and `sigma`; `weight` is the effective
    /// weight used in the forward pass.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Scalar>(
        &self,
        weight: &[T],
        noise: &FactorizedNoise<T>,
        mode: NoiseMode,
        x: &[T],
        dy: &[T],
        rows: usize,
        grads: &mut [T],
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let mut dw = vec![T::zero(); self.n_out * self.n_in];
        matmul_dyt_x(dy, x, &mut dw, rows, self.n_in, self.n_out);
        let mut db = vec![T::zero(); self.n_out];
        add_column_sums(dy, self.n_out, &mut db);

        for (g, &d) in grads[self.weight_mu.clone()].iter_mut().zip(&dw) {
            *g += d;
        }
        for (g, &d) in grads[self.bias_mu.clone()].iter_mut().zip(&db) {
            *g += d;
        }
        if mode == NoiseMode::Sampled {
            let gs = &mut grads[self.weight_sigma.clone()];
            for o in 0..self.n_out {
                let fo = noise.f_out[o];
                for i in 0..self.n_in {
                    let k = o * self.n_in + i;
                    gs[k] += dw[k] * fo * noise.f_in[i];
                }
            }
            for ((g, &d), &fo) in grads[self.bias_sigma.clone()].iter_mut().zip(&db).zip(&noise.f_out) {
                *g += d * fo;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); rows * self.n_in];
            matmul_dy_w(dy, weight, &mut dx, rows, self.n_in, self.n_out);
            dx
        })
    }
}

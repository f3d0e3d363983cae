//! Shared per-slot encoder with max pooling over vehicle slots.
//!
//! Every slot goes through the same two dense layers (a 1-D convolution with
//! kernel and stride equal to the slot width). The encodings are reduced by
//! an element-wise max and the ego features are appended.

use crate::env::observe::{EGO_FEATURES, SLOT_FEATURES};
use crate::nn::layers::{relu_backward, relu_inplace, Linear};
use crate::nn::layout::ParamLayout;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotEncoder {
    pub slots: usize,
    pub conv1: Linear,
    pub conv2: Linear,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    rows: usize,
    slot_input: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    /// Winning slot per (row, channel) of the max pool.
    argmax: Vec<usize>,
}

impl SlotEncoder {
    pub fn register(layout: &mut ParamLayout, slots: usize, widths: [usize; 2]) -> Self {
        assert!(slots > 0, "encoder needs at least one slot");
        Self {
            slots,
            conv1: Linear::register(layout, "encoder.conv1", SLOT_FEATURES, widths[0]),
            conv2: Linear::register(layout, "encoder.conv2", widths[0], widths[1]),
        }
    }

    pub fn input_len(&self) -> usize {
        EGO_FEATURES + SLOT_FEATURES * self.slots
    }

    pub fn output_len(&self) -> usize {
        self.conv2.n_out + EGO_FEATURES
    }

    pub fn init<T: Scalar, R: rand::Rng + ?Sized>(&self, params: &mut [T], rng: &mut R) {
        self.conv1.init(params, rng);
        self.conv2.init(params, rng);
    }

    /// Encodes `rows` observations laid out back to back.
    pub fn forward<T: Scalar>(&self, params: &[T], obs: &[T], rows: usize) -> (Vec<T>, EncoderCache<T>) {
        let n_obs = self.input_len();
        assert_eq!(obs.len(), rows * n_obs, "observation batch has the wrong length");
        let slot_rows = rows * self.slots;
        let mut slot_input = Vec::with_capacity(slot_rows * SLOT_FEATURES);
        for row in obs.chunks_exact(n_obs) {
            slot_input.extend_from_slice(&row[EGO_FEATURES..]);
        }
        let mut h1 = self.conv1.forward(params, &slot_input, slot_rows);
        relu_inplace(&mut h1);
        let mut h2 = self.conv2.forward(params, &h1, slot_rows);
        relu_inplace(&mut h2);

        let width = self.conv2.n_out;
        let out_len = self.output_len();
        let mut out = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::with_capacity(rows * width);
        for (r, row) in obs.chunks_exact(n_obs).enumerate() {
            let block = &h2[r * self.slots * width..(r + 1) * self.slots * width];
            for c in 0..width {
                let mut best = 0;
                for k in 1..self.slots {
                    if block[k * width + c] > block[best * width + c] {
                        best = k;
                    }
                }
                out.push(block[best * width + c]);
                argmax.push(best);
            }
            out.extend_from_slice(&row[..EGO_FEATURES]);
        }
        (
            out,
            EncoderCache {
                rows,
                slot_input,
                h1,
                h2,
                argmax,
            },
        )
    }

    /// Accumulates encoder gradients from the gradient of the encoded features.
    pub fn backward<T: Scalar>(&self, params: &[T], cache: &EncoderCache<T>, d_out: &[T], grads: &mut [T]) {
        let width = self.conv2.n_out;
        let out_len = self.output_len();
        let slot_rows = cache.rows * self.slots;
        let mut dh2 = vec![T::zero(); slot_rows * width];
        for r in 0..cache.rows {
            for c in 0..width {
                let k = cache.argmax[r * width + c];
                dh2[(r * self.slots + k) * width + c] += d_out[r * out_len + c];
            }
        }
        relu_backward(&mut dh2, &cache.h2);
        let mut dh1 = self
            .conv2
            .backward(params, &cache.h1, &dh2, slot_rows, grads, true)
            .expect("dx requested");
        relu_backward(&mut dh1, &cache.h1);
        self.conv1.backward(params, &cache.slot_input, &dh1, slot_rows, grads, false);
    }
}

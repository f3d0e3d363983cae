//! Categorical projection of a shifted and scaled return distribution back
//! onto the fixed atom grid.

use crate::scalar::Scalar;

/// Support description used by the projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, atoms: usize) -> Self {
        assert!(atoms >= 2 && v_min < v_max, "degenerate support");
        Self { v_min, v_max, atoms }
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms - 1) as f64
    }

    pub fn values<T: Scalar>(&self) -> Vec<T> {
        (0..self.atoms).map(|i| T::of(self.v_min + i as f64 * self.delta())).collect()
    }
}

/// Projects `reward + discount * Z` onto the support, where `Z` has atom
/// probabilities `next_probs`. With `discount == 0` all mass lands on
/// `clamp(reward)`.
pub fn project_distribution<T: Scalar>(reward: f64, discount: f64, next_probs: &[T], support: &Support) -> Vec<T> {
    assert_eq!(next_probs.len(), support.atoms, "next_probs does not match the support");
    let dz = support.delta();
    let last = (support.atoms - 1) as f64;
    // Positions within a few ulps of a grid point are snapped onto it so
    // that on-grid targets stay exact.
    let snap = 64.0 * f64::EPSILON * last.max(1.0);
    let mut out = vec![T::zero(); support.atoms];
    for (j, &p) in next_probs.iter().enumerate() {
        let z = support.v_min + j as f64 * dz;
        let tz = (reward + discount * z).clamp(support.v_min, support.v_max);
        let mut b = ((tz - support.v_min) / dz).clamp(0.0, last);
        if (b - b.round()).abs() <= snap {
            b = b.round();
        }
        let l = b.floor();
        let u = b.ceil();
        if l == u {
            out[l as usize] += p;
        } else {
            out[l as usize] += p * T::of(u - b);
            out[u as usize] += p * T::of(b - l);
        }
    }
    out
}

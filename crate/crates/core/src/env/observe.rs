//! Ego-centric normalized observation vector.
//!
//! Layout: `[v_ego / v_d, y_ego / y_max]` followed by one
//! `(ds / ds_max, dv / v_max, dy / y_max)` triple per vehicle slot. Unused
//! slots hold [`PAD_SLOT`].

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::env::config::{NoiseConfig, ObservationConfig, ObservationMode};
use crate::env::world::{WorldState, EGO};

pub const EGO_FEATURES: usize = 2;
pub const SLOT_FEATURES: usize = 3;
/// A phantom at sensor range, same speed, same lateral position.
pub const PAD_SLOT: [f32; SLOT_FEATURES] = [1.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationScale {
    pub ds_max: f64,
    pub v_max: f64,
    pub y_max: f64,
    pub v_desired: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f32>,
    pub scale: ObservationScale,
}

impl Observation {
    pub fn slot_count(&self) -> usize {
        (self.features.len() - EGO_FEATURES) / SLOT_FEATURES
    }

    pub fn slot(&self, k: usize) -> &[f32] {
        let start = EGO_FEATURES + k * SLOT_FEATURES;
        &self.features[start..start + SLOT_FEATURES]
    }
}

/// Vehicles feeding the slots, in slot order; `None` marks a padded slot.
pub fn slot_assignment(world: &WorldState, mode: ObservationMode, slots: usize) -> Vec<Option<usize>> {
    let ego = &world.vehicles[EGO].state;
    match mode {
        ObservationMode::Full => {
            let mut order: Vec<usize> = (1..world.vehicles.len()).collect();
            order.sort_by(|&a, &b| {
                let da = (world.vehicles[a].state.s - ego.s).abs();
                let db = (world.vehicles[b].state.s - ego.s).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            let mut out: Vec<Option<usize>> = order.into_iter().take(slots).map(Some).collect();
            out.resize(slots, None);
            out
        }
        ObservationMode::Compact => {
            let mut out = vec![None; slots];
            for lane in 0..world.road.lane_count.min(slots / 2) {
                let mut lead: Option<(f64, usize)> = None;
                let mut follow: Option<(f64, usize)> = None;
                for (j, v) in world.others() {
                    if v.state.lane != lane {
                        continue;
                    }
                    let ds = v.state.s - ego.s;
                    if ds >= 0.0 {
                        if lead.is_none_or(|(b, _)| ds < b) {
                            lead = Some((ds, j));
                        }
                    } else if follow.is_none_or(|(b, _)| -ds < b) {
                        follow = Some((-ds, j));
                    }
                }
                out[2 * lane] = lead.map(|(_, j)| j);
                out[2 * lane + 1] = follow.map(|(_, j)| j);
            }
            out
        }
    }
}

/// Builds the observation; measurement noise perturbs relative position and
/// speed of surrounding vehicles before normalization.
pub fn observe<R: Rng + ?Sized>(
    world: &WorldState,
    config: &ObservationConfig,
    slots: usize,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Observation {
    let ego = &world.vehicles[EGO].state;
    let scale = ObservationScale {
        ds_max: config.sensor_range,
        v_max: config.v_max,
        y_max: world.road.width(),
        v_desired: world.ego_desired_speed,
    };
    let norm = |x: f64, by: f64| (x / by).clamp(-1.0, 1.0) as f32;

    let mut features = Vec::with_capacity(EGO_FEATURES + SLOT_FEATURES * slots);
    features.push(norm(ego.v, scale.v_desired));
    features.push(norm(ego.y, scale.y_max));

    let pos_noise = Normal::new(0.0, noise.sigma_pos).expect("finite sigma");
    let vel_noise = Normal::new(0.0, noise.sigma_vel).expect("finite sigma");
    for slot in slot_assignment(world, config.mode, slots) {
        match slot {
            None => features.extend_from_slice(&PAD_SLOT),
            Some(j) => {
                let other = &world.vehicles[j].state;
                let mut ds = other.s - ego.s;
                let mut dv = other.v - ego.v;
                if noise.enabled {
                    ds += pos_noise.sample(rng);
                    dv += vel_noise.sample(rng);
                }
                features.push(norm(ds, scale.ds_max));
                features.push(norm(dv, scale.v_max));
                features.push(norm(other.y - ego.y, scale.y_max));
            }
        }
    }
    Observation { features, scale }
}

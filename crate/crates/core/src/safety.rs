//! Blind-spot safety layer.
//!
//! Lane change requests into a missing lane or into an adjacent lane with a
//! vehicle inside the blind-spot window are replaced by keep-lane. The
//! verdict is reported back so the reward can penalize the request.

use serde::{Deserialize, Serialize};

use crate::env::world::{WorldState, EGO};
use crate::env::Action;

/// Longitudinal occupancy window around the ego vehicle, measured from its
/// bumpers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlindSpotWindow {
    /// Behind the rear bumper, m.
    pub rear_extent: f64,
    /// Ahead of the front bumper, m.
    pub front_extent: f64,
}

impl Default for BlindSpotWindow {
    fn default() -> Self {
        Self {
            rear_extent: 12.0,
            front_extent: 8.0,
        }
    }
}

impl BlindSpotWindow {
    pub fn validate(&self) -> Result<(), String> {
        if self.rear_extent > 0.0 && self.front_extent > 0.0 {
            Ok(())
        } else {
            Err("blind-spot extents must be positive".into())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnsafeReason {
    None,
    OffRoad,
    BlindSpotOccupied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyVerdict {
    pub safe: bool,
    pub reason: UnsafeReason,
    /// Action to execute: the request when safe, keep-lane otherwise.
    pub overwritten_action: Action,
}

impl SafetyVerdict {
    fn safe(action: Action) -> Self {
        Self {
            safe: true,
            reason: UnsafeReason::None,
            overwritten_action: action,
        }
    }

    fn reject(reason: UnsafeReason) -> Self {
        Self {
            safe: false,
            reason,
            overwritten_action: Action::KeepLane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyLayer {
    pub window: BlindSpotWindow,
}

impl SafetyLayer {
    pub fn new(window: BlindSpotWindow) -> Self {
        Self { window }
    }

    pub fn evaluate(&self, world: &WorldState, requested: Action) -> SafetyVerdict {
        evaluate_action(world, requested, &self.window)
    }
}

/// Whether any vehicle occupying `lane` has its body inside the window.
pub fn window_occupied(world: &WorldState, lane: i32, window: &BlindSpotWindow) -> bool {
    let ego = &world.vehicles[EGO].state;
    let lo = ego.rear(&world.geom) - window.rear_extent;
    let hi = ego.front(&world.geom) + window.front_extent;
    world.others().any(|(j, v)| {
        world.occupies_lane(j, lane) && v.state.rear(&world.geom) < hi && v.state.front(&world.geom) > lo
    })
}

pub fn evaluate_action(world: &WorldState, requested: Action, window: &BlindSpotWindow) -> SafetyVerdict {
    let Some(offset) = requested.lane_offset() else {
        return SafetyVerdict::safe(requested);
    };
    let target = world.vehicles[EGO].state.lane as i32 + offset;
    if !world.road.has_lane(target) {
        return SafetyVerdict::reject(UnsafeReason::OffRoad);
    }
    if window_occupied(world, target, window) {
        return SafetyVerdict::reject(UnsafeReason::BlindSpotOccupied);
    }
    SafetyVerdict::safe(requested)
}

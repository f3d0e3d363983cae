//! Rule-based ego policy: MOBIL with the ego's own driver profile.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::driver::{mobil_decision, LaneDecision, NeighborView};
use crate::env::{Action, NoiseConfig, WorldState, EGO};

fn perturb<R: Rng + ?Sized>(view: &mut NeighborView, noise: &NoiseConfig, rng: &mut R) {
    let pos = Normal::new(0.0, noise.sigma_pos).expect("valid sigma");
    let vel = Normal::new(0.0, noise.sigma_vel).expect("valid sigma");
    if let Some(l) = view.leader.as_mut() {
        l.gap = (l.gap + pos.sample(rng)).max(0.01);
        l.dv += vel.sample(rng);
    }
    if let Some(f) = view.follower.as_mut() {
        f.gap = (f.gap + pos.sample(rng)).max(0.01);
        f.speed = (f.speed + vel.sample(rng)).max(0.0);
    }
}

/// Lane decision of the ego under MOBIL. When sensor noise is enabled the
/// ego judges gaps and speeds through the same noise as a learned agent.
pub fn mobil_ego_action<R: Rng + ?Sized>(world: &WorldState, noise: &NoiseConfig, rng: &mut R) -> Action {
    let ego = &world.vehicles[EGO];
    if ego.state.maneuver.is_active() {
        return Action::KeepLane;
    }
    let mut views = world.lane_views(EGO);
    if noise.enabled {
        perturb(&mut views.current, noise, rng);
        if let Some(v) = views.left.as_mut() {
            perturb(v, noise, rng);
        }
        if let Some(v) = views.right.as_mut() {
            perturb(v, noise, rng);
        }
    }
    match mobil_decision(&ego.state, &ego.profile, &views) {
        LaneDecision::Keep => Action::KeepLane,
        LaneDecision::ChangeLeft => Action::ChangeLeft,
        LaneDecision::ChangeRight => Action::ChangeRight,
    }
}

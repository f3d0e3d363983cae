//! The episodic lane-change environment.
//!
//! One decision step lasts `substeps * dt` seconds. Every vehicle follows
//! IDM longitudinally; background vehicles pick lanes with MOBIL once per
//! decision, while the ego vehicle's lane changes come from the agent.

pub mod config;
pub mod observe;
pub mod reward;
pub mod scenario;
pub mod trace;
pub mod world;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::safety::SafetyLayer;
use crate::traffic::CollisionReport;

pub use config::{EnvConfig, NoiseConfig, ObservationConfig, ObservationMode, ProfileMode, ScenarioConfig, Span};
pub use observe::{observe, Observation};
pub use reward::compute_reward;
pub use scenario::generate_scenario;
pub use world::{EpisodeStatus, Vehicle, WorldState, EGO};
pub use trace::{EpisodeTrace, TraceRow, TRACE_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    KeepLane = 0,
    ChangeLeft = 1,
    ChangeRight = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::KeepLane, Action::ChangeLeft, Action::ChangeRight];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    /// Lane index change requested by the action, `None` for keep-lane.
    pub fn lane_offset(self) -> Option<i32> {
        match self {
            Action::KeepLane => None,
            Action::ChangeLeft => Some(1),
            Action::ChangeRight => Some(-1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::KeepLane => "keep_lane",
            Action::ChangeLeft => "change_left",
            Action::ChangeRight => "change_right",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub requested_action: Action,
    pub executed_action: Action,
    pub safety_violation: bool,
    pub lane_change_executed: bool,
    pub lane_changes_so_far: u32,
    pub distance_traveled: f64,
    pub collision: CollisionReport,
    /// Index of the background vehicle whose desired speed was raised.
    pub unlocked: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub status: EpisodeStatus,
    pub info: StepInfo,
}

/// Raises the desired speed of one slow vehicle when every lane ahead of the
/// ego vehicle is held up and the ego vehicle has been slow for `patience`
/// consecutive decisions. Blockers in the ego's own lane are never chosen,
/// so the ego still has to change lanes to benefit.
pub fn apply_traffic_unlock<R: Rng + ?Sized>(world: &mut WorldState, config: &EnvConfig, rng: &mut R) -> Option<usize> {
    let cfg = &config.unlock;
    if !cfg.enabled {
        return None;
    }
    let ego = world.vehicles[EGO].state;
    let v_d = world.ego_desired_speed;
    if ego.v < v_d - cfg.slow_margin {
        world.slow_decisions += 1;
    } else {
        world.slow_decisions = 0;
    }
    if world.slow_decisions < cfg.patience {
        return None;
    }
    let blockers = lane_blockers(world, cfg.range);
    if blockers.iter().any(Option::is_none) {
        return None;
    }
    let candidates: Vec<usize> = blockers
        .iter()
        .enumerate()
        .filter(|&(lane, _)| lane != ego.lane)
        .filter_map(|(_, b)| *b)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let chosen = candidates[rng.random_range(0..candidates.len())];
    let boosted = v_d + rng.random::<f64>() * cfg.boost;
    world.vehicles[chosen].profile.v_set = boosted;
    world.slow_decisions = 0;
    Some(chosen)
}

/// Per lane, the nearest vehicle ahead of the ego vehicle within `range`
/// whose desired speed is below the ego's.
pub fn lane_blockers(world: &WorldState, range: f64) -> Vec<Option<usize>> {
    let ego = world.vehicles[EGO].state;
    (0..world.road.lane_count)
        .map(|lane| {
            world
                .others()
                .filter(|(_, v)| {
                    let ds = v.state.s - ego.s;
                    v.state.lane == lane && ds > 0.0 && ds <= range && v.profile.v_set < world.ego_desired_speed
                })
                .min_by(|a, b| a.1.state.s.total_cmp(&b.1.state.s))
                .map(|(j, _)| j)
        })
        .collect()
}

/// Advances the world by one decision step.
///
/// Panics when the episode has already finished.
pub fn env_step<R: Rng + ?Sized>(
    world: &mut WorldState,
    requested: Action,
    safety: Option<&SafetyLayer>,
    config: &EnvConfig,
    rng: &mut R,
) -> StepResult {
    assert!(!world.status.is_done(), "env_step called on a finished episode");

    let mid_maneuver = world.vehicles[EGO].state.maneuver.is_active();
    let (executed, violation) = if mid_maneuver {
        (Action::KeepLane, false)
    } else {
        match safety {
            Some(layer) => {
                let verdict = layer.evaluate(world, requested);
                (verdict.overwritten_action, !verdict.safe)
            }
            None => (requested, false),
        }
    };

    let lane_change_executed = executed != Action::KeepLane;
    if lane_change_executed {
        world.start_lane_change(EGO, executed == Action::ChangeLeft);
        world.lane_changes += 1;
    }

    world.background_lane_decisions();

    let mut collision = CollisionReport::None;
    for _ in 0..config.substeps {
        world.physics_step(config);
        collision = world.ego_collision();
        if collision != CollisionReport::None {
            break;
        }
    }
    world.decisions += 1;

    let ego_v = world.vehicles[EGO].state.v;
    world.status = if collision != CollisionReport::None {
        EpisodeStatus::Collided
    } else if ego_v >= world.ego_desired_speed - config.solved_tolerance {
        EpisodeStatus::Solved
    } else if world.distance >= world.road.episode_length || world.decisions >= config.max_decisions {
        EpisodeStatus::Truncated
    } else {
        EpisodeStatus::Running
    };

    let unlocked = if world.status == EpisodeStatus::Running {
        apply_traffic_unlock(world, config, rng)
    } else {
        None
    };

    let reward = compute_reward(
        ego_v,
        world.ego_initial_speed,
        world.ego_desired_speed,
        lane_change_executed,
        violation,
        world.status,
    );
    let observation = observe(
        world,
        &config.observation,
        config.observation_slots(),
        &config.scenario.noise,
        rng,
    );
    StepResult {
        observation,
        reward,
        status: world.status,
        info: StepInfo {
            requested_action: requested,
            executed_action: executed,
            safety_violation: violation,
            lane_change_executed,
            lane_changes_so_far: world.lane_changes,
            distance_traveled: world.distance,
            collision,
            unlocked,
        },
    }
}

/// An environment instance: configuration, optional safety layer, the
/// current world, and its random stream.
#[derive(Debug, Clone)]
pub struct HighwayEnv {
    config: EnvConfig,
    safety: Option<SafetyLayer>,
    world: Option<WorldState>,
    rng: ChaCha8Rng,
}

impl HighwayEnv {
    pub fn new(config: EnvConfig, safety: Option<SafetyLayer>) -> Result<Self> {
        config.validate().map_err(crate::Error::Config)?;
        Ok(Self {
            config,
            safety,
            world: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn safety(&self) -> Option<&SafetyLayer> {
        self.safety.as_ref()
    }

    /// Starts a new episode whose randomness derives entirely from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let world = generate_scenario(&self.config, &mut self.rng)?;
        let obs = observe(
            &world,
            &self.config.observation,
            self.config.observation_slots(),
            &self.config.scenario.noise,
            &mut self.rng,
        );
        self.world = Some(world);
        Ok(obs)
    }

    pub fn world(&self) -> &WorldState {
        self.world.as_ref().expect("reset() must be called before use")
    }

    pub fn step(&mut self, action: Action) -> StepResult {
        let world = self.world.as_mut().expect("reset() must be called before step()");
        env_step(world, action, self.safety.as_ref(), &self.config, &mut self.rng)
    }

    /// Random stream of the current episode, for policies that need
    /// measurement noise consistent with the environment.
    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn world_and_rng(&mut self) -> (&WorldState, &mut ChaCha8Rng) {
        (self.world.as_ref().expect("reset() must be called before use"), &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::DriverProfile;
    use crate::traffic::VehicleState;

    fn env(config: EnvConfig, safety: bool) -> HighwayEnv {
        HighwayEnv::new(config, safety.then(SafetyLayer::default)).unwrap()
    }

    #[test]
    fn left_change_from_leftmost_lane_is_penalized() {
        let mut e = env(EnvConfig::benchmark_a(), true);
        let mut seed = 0;
        loop {
            e.reset(seed).unwrap();
            if e.world().vehicles[EGO].state.lane == 2 {
                break;
            }
            seed += 1;
        }
        let r = e.step(Action::ChangeLeft);
        assert!(r.info.safety_violation);
        assert_eq!(r.info.executed_action, Action::KeepLane);
        assert!(!r.info.lane_change_executed);
        if r.status == EpisodeStatus::Running {
            let v = e.world().vehicles[EGO].state.v;
            let expected = (v - e.world().ego_initial_speed) / 25.0 - 1.0;
            assert!((r.reward - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn reaching_desired_speed_solves_the_episode() {
        let mut config = EnvConfig::benchmark_a();
        config.unlock.enabled = false;
        let mut e = env(config, true);
        e.reset(5).unwrap();
        {
            let w = e.world.as_mut().unwrap();
            w.vehicles.truncate(1);
            w.vehicles[EGO].state.v = 24.89;
        }
        let r = e.step(Action::KeepLane);
        assert!(e.world().vehicles[EGO].state.v >= 24.9);
        assert_eq!(r.status, EpisodeStatus::Solved);
        assert_eq!(r.reward, 100.0);
    }

    #[test]
    fn blocked_ego_at_initial_speed_earns_nothing() {
        // Ego and leader cruise at the same speed at the IDM equilibrium gap.
        let config = EnvConfig::benchmark_a();
        let mut e = env(config, true);
        e.reset(1).unwrap();
        let w = e.world.as_mut().unwrap();
        let road = w.road;
        let v = 15.0;
        let ego_profile = DriverProfile::normal();
        let leader_profile = DriverProfile::normal().with_desired_speed(v);
        w.vehicles.truncate(2);
        w.vehicles[EGO].state = VehicleState::in_lane(&road, 1, 0.0, v);
        w.vehicles[EGO].profile = ego_profile;
        w.ego_initial_speed = v;
        // Equilibrium of IDM behind a leader at speed v: free term equals
        // interaction term; the leader itself sits at its own desired speed.
        let s_star = ego_profile.d0 + v * ego_profile.t_set;
        let free = 1.0 - (v / ego_profile.v_set).powi(4);
        let gap = s_star / free.sqrt();
        w.vehicles[1].state = VehicleState::in_lane(&road, 1, gap + w.geom.length, v);
        w.vehicles[1].profile = leader_profile;
        w.vehicles[1].holds_lane = true;
        let r = e.step(Action::KeepLane);
        assert_eq!(r.status, EpisodeStatus::Running);
        assert!(r.reward.abs() < 1e-9, "reward {}", r.reward);
    }

    #[test]
    fn mid_maneuver_requests_are_coerced_without_penalty() {
        let mut e = env(EnvConfig::benchmark_a(), true);
        e.reset(2).unwrap();
        let w = e.world.as_mut().unwrap();
        let road = w.road;
        w.vehicles.truncate(1);
        w.vehicles[EGO].state = VehicleState::in_lane(&road, 1, 0.0, 15.0);
        let r1 = e.step(Action::ChangeLeft);
        assert!(r1.info.lane_change_executed);
        assert!(e.world().vehicles[EGO].state.maneuver.is_active());
        let r2 = e.step(Action::ChangeRight);
        assert_eq!(r2.info.executed_action, Action::KeepLane);
        assert!(!r2.info.safety_violation);
        assert!(!r2.info.lane_change_executed);
        assert_eq!(r2.info.lane_changes_so_far, 1);
    }

    #[test]
    #[should_panic(expected = "finished episode")]
    fn stepping_a_finished_episode_panics() {
        let mut e = env(EnvConfig::benchmark_a(), true);
        e.reset(0).unwrap();
        e.world.as_mut().unwrap().status = EpisodeStatus::Collided;
        e.step(Action::KeepLane);
    }

    #[test]
    fn unsupervised_agent_can_drive_off_road() {
        let mut e = env(EnvConfig::benchmark_a(), false);
        e.reset(0).unwrap();
        let w = e.world.as_mut().unwrap();
        let road = w.road;
        w.vehicles.truncate(1);
        w.vehicles[EGO].state = VehicleState::in_lane(&road, 0, 0.0, 15.0);
        let mut last = e.step(Action::ChangeRight);
        while last.status == EpisodeStatus::Running {
            last = e.step(Action::KeepLane);
        }
        assert_eq!(last.status, EpisodeStatus::Collided);
        assert_eq!(last.info.collision, CollisionReport::RoadDeparture);
        assert_eq!(last.reward, -100.0);
    }

    #[test]
    fn identical_seeds_give_identical_episodes() {
        let run = || {
            let mut e = env(EnvConfig::benchmark_b(), true);
            let mut obs = vec![e.reset(9).unwrap()];
            let mut rewards = Vec::new();
            for t in 0..200 {
                let r = e.step(Action::from_index(t % 3));
                obs.push(r.observation.clone());
                rewards.push(r.reward.to_bits());
                if r.status.is_done() {
                    break;
                }
            }
            (obs, rewards, e.world().clone())
        };
        let (o1, r1, w1) = run();
        let (o2, r2, w2) = run();
        assert_eq!(o1, o2);
        assert_eq!(r1, r2);
        assert_eq!(w1, w2);
    }

    #[test]
    fn no_unlock_without_locked_lanes() {
        let config = EnvConfig::benchmark_a();
        let mut e = env(config.clone(), true);
        e.reset(0).unwrap();
        let w = e.world.as_mut().unwrap();
        w.vehicles.truncate(2);
        w.slow_decisions = 50;
        let before = w.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(apply_traffic_unlock(w, &config, &mut rng), None);
        assert_eq!(w.vehicles, before.vehicles);
    }

    /// Three lanes, each with a slow vehicle 40 m ahead of the ego vehicle.
    fn locked_world() -> (EnvConfig, WorldState) {
        let config = EnvConfig::benchmark_a();
        let mut w = generate_scenario(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let road = w.road;
        w.vehicles.truncate(1);
        w.vehicles[EGO].state = VehicleState::in_lane(&road, 1, 0.0, 15.0);
        for lane in 0..3 {
            w.vehicles.push(Vehicle {
                state: VehicleState::in_lane(&road, lane, 40.0, 15.0),
                profile: DriverProfile::normal().with_desired_speed(15.0),
                kind: crate::driver::DriverKind::Normal,
                holds_lane: true,
            });
        }
        (config, w)
    }

    #[test]
    fn unlock_after_patience_raises_exactly_one_blocker() {
        let (config, mut w) = locked_world();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..config.unlock.patience - 1 {
            assert_eq!(apply_traffic_unlock(&mut w, &config, &mut rng), None);
        }
        let before = w.clone();
        let chosen = apply_traffic_unlock(&mut w, &config, &mut rng).expect("unlock fires");
        assert_ne!(w.vehicles[chosen].state.lane, w.vehicles[EGO].state.lane);
        let changed: Vec<usize> = (0..w.vehicles.len())
            .filter(|&j| w.vehicles[j].profile.v_set != before.vehicles[j].profile.v_set)
            .collect();
        assert_eq!(changed, vec![chosen]);
        let v = w.vehicles[chosen].profile.v_set;
        assert!((25.0..=27.0).contains(&v));
        assert_eq!(w.slow_decisions, 0);
    }

    #[test]
    fn unlock_eventually_clears_the_lock() {
        let (mut config, mut w) = locked_world();
        config.unlock.patience = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cleared = false;
        for _ in 0..200 {
            env_step(&mut w, Action::KeepLane, None, &config, &mut rng);
            if lane_blockers(&w, config.unlock.range).iter().any(Option::is_none) {
                cleared = true;
                break;
            }
        }
        assert!(cleared);
    }
}

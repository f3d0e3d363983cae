//! Randomized initial conditions.

use rand::Rng;

use crate::driver::DriverKind;
use crate::env::config::{EnvConfig, ProfileMode, Span};
use crate::env::world::{EpisodeStatus, Vehicle, WorldState};
use crate::error::{Error, Result};
use crate::traffic::{RoadGeometry, VehicleState};

fn uniform<R: Rng + ?Sized>(rng: &mut R, span: Span<f64>) -> f64 {
    if span.lo() == span.hi() {
        span.lo()
    } else {
        rng.random_range(span.lo()..span.hi())
    }
}

/// Draws a new world. The ego vehicle starts at `s = 0` and always has a
/// vehicle a short distance ahead in its own lane that wants to drive no
/// faster than the ego's initial speed.
pub fn generate_scenario<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> Result<WorldState> {
    let sc = &config.scenario;
    let lane_count = rng.random_range(sc.lanes.lo()..=sc.lanes.hi());
    let road = RoadGeometry {
        lane_count,
        lane_width: sc.lane_width,
        episode_length: sc.episode_length,
    };
    let total = rng.random_range(sc.vehicles.lo()..=sc.vehicles.hi());

    let ego_lane = rng.random_range(0..lane_count);
    let ego_speed = uniform(rng, sc.ego_speed);
    let ego_profile = config
        .profiles
        .get(sc.ego_longitudinal)
        .with_lane_change_of(&config.profiles.get(sc.ego_profile))
        .with_desired_speed(sc.ego_desired_speed);
    let mut vehicles = vec![Vehicle {
        state: VehicleState::in_lane(&road, ego_lane, 0.0, ego_speed),
        profile: ego_profile,
        kind: sc.ego_profile,
        holds_lane: true,
    }];

    let draw_kind = |rng: &mut R| match sc.profiles {
        ProfileMode::AllNormal => DriverKind::Normal,
        ProfileMode::UniformRandom => DriverKind::ALL[rng.random_range(0..DriverKind::ALL.len())],
    };

    let blocker_s = uniform(rng, sc.blocker_gap);
    let blocker_kind = draw_kind(rng);
    let cap = sc.blocker_desired_speed.hi().min(ego_speed);
    let blocker_desired = uniform(rng, Span(sc.blocker_desired_speed.lo().min(cap), cap));
    vehicles.push(Vehicle {
        state: VehicleState::in_lane(&road, ego_lane, blocker_s, uniform(rng, sc.front_speed)),
        profile: config.profiles.get(blocker_kind).with_desired_speed(blocker_desired),
        kind: blocker_kind,
        holds_lane: true,
    });

    while vehicles.len() < total {
        let mut placed = None;
        for _ in 0..sc.placement_attempts {
            let lane = rng.random_range(0..lane_count);
            let s = rng.random_range(-sc.spread..=sc.spread);
            let clear = vehicles
                .iter()
                .all(|v| v.state.lane != lane || (v.state.s - s).abs() >= sc.min_gap);
            if clear {
                placed = Some((lane, s));
                break;
            }
        }
        let Some((lane, s)) = placed else {
            return Err(Error::Generation {
                vehicle: vehicles.len(),
                attempts: sc.placement_attempts,
            });
        };
        let speed = if s > 0.0 {
            uniform(rng, sc.front_speed)
        } else {
            uniform(rng, sc.rear_speed)
        };
        let kind = draw_kind(rng);
        let desired = uniform(rng, sc.other_desired_speed);
        vehicles.push(Vehicle {
            state: VehicleState::in_lane(&road, lane, s, speed),
            profile: config.profiles.get(kind).with_desired_speed(desired),
            kind,
            holds_lane: false,
        });
    }

    Ok(WorldState {
        road,
        geom: config.vehicle,
        vehicles,
        ego_initial_speed: ego_speed,
        ego_desired_speed: sc.ego_desired_speed,
        time: 0.0,
        decisions: 0,
        distance: 0.0,
        lane_changes: 0,
        slow_decisions: 0,
        status: EpisodeStatus::Running,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::world::EGO;
    use crate::traffic::CollisionReport;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_postconditions(config: &EnvConfig, w: &WorldState) {
        let sc = &config.scenario;
        assert!(sc.lanes.contains(w.road.lane_count));
        assert!(sc.vehicles.contains(w.vehicles.len()));
        let ego = &w.vehicles[EGO].state;
        assert_eq!(ego.s, 0.0);
        assert!(sc.ego_speed.contains(ego.v));
        for (i, a) in w.vehicles.iter().enumerate() {
            for b in &w.vehicles[i + 1..] {
                if a.state.lane == b.state.lane {
                    assert!((a.state.s - b.state.s).abs() >= sc.min_gap);
                }
            }
            if i == EGO {
                continue;
            }
            assert!(a.state.s.abs() <= sc.spread);
            let range = if a.state.s > 0.0 { sc.front_speed } else { sc.rear_speed };
            assert!(range.contains(a.state.v), "speed {} outside {range:?}", a.state.v);
            if a.holds_lane {
                assert!(a.profile.v_set <= ego.v && a.profile.v_set <= sc.blocker_desired_speed.hi());
            } else {
                assert!(sc.other_desired_speed.contains(a.profile.v_set));
            }
        }
        let blocked = w.others().any(|(_, v)| {
            v.state.lane == ego.lane && v.state.s > ego.s && v.profile.v_set < sc.ego_desired_speed
        });
        assert!(blocked, "no slow vehicle ahead of the ego vehicle");
        assert_eq!(w.ego_collision(), CollisionReport::None);
        assert_eq!(w.any_collision(), None);
    }

    #[test]
    fn generated_worlds_satisfy_postconditions() {
        for config in [EnvConfig::benchmark_a(), EnvConfig::benchmark_b()] {
            for seed in 0..1000 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = generate_scenario(&config, &mut rng).unwrap();
                check_postconditions(&config, &w);
            }
        }
    }

    #[test]
    fn benchmark_a_has_eight_normal_neighbors() {
        let config = EnvConfig::benchmark_a();
        let w = generate_scenario(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(w.road.lane_count, 3);
        assert_eq!(w.vehicles.len(), 9);
        assert!(w.vehicles.iter().all(|v| v.kind == DriverKind::Normal));
        assert!(!config.scenario.noise.enabled);
    }

    #[test]
    fn benchmark_b_mixes_driver_types() {
        let config = EnvConfig::benchmark_b();
        assert!(config.scenario.noise.enabled);
        let mut seen = [false; 3];
        for seed in 0..20 {
            let w = generate_scenario(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(w.vehicles.len(), 21);
            for (_, v) in w.others() {
                seen[v.kind as usize] = true;
            }
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn overcrowded_config_fails_explicitly() {
        let mut config = EnvConfig::benchmark_a();
        config.scenario.vehicles = Span(60, 60);
        config.scenario.placement_attempts = 50;
        let err = generate_scenario(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Generation { .. }));
    }

    #[test]
    fn same_seed_same_world() {
        let config = EnvConfig::benchmark_b();
        let a = generate_scenario(&config, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = generate_scenario(&config, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }
}

use lanechange::agent::mobil_ego_action;
use lanechange::driver::{
    idm_acceleration, mobil_decision, DriverProfile, FollowerView, LaneDecision, LaneViews, LeaderView, NeighborView,
};
use lanechange::env::{Action, EnvConfig, EpisodeStatus, HighwayEnv, EGO};
use lanechange::safety::{window_occupied, BlindSpotWindow, SafetyLayer};
use lanechange::traffic::{CollisionReport, RoadGeometry, VehicleState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn idm_by_hand(v: f64, gap: f64, dv: f64, p: &DriverProfile) -> f64 {
    let s_star = p.d0 + v * p.t_set + v * dv / (2.0 * (p.a_max * p.b).sqrt());
    p.a_max * (1.0 - (v / p.v_set).powi(4) - (s_star / gap).powi(2))
}

#[test]
fn idm_matches_hand_substitution() {
    let p = DriverProfile::normal();
    let expected = idm_by_hand(20.0, 30.0, 5.0, &p);
    assert!((expected - -5.1301).abs() < 1e-3);
    assert!((idm_acceleration(20.0, Some((30.0, 5.0)), &p) - expected).abs() < 1e-9);
    assert!((idm_acceleration(0.0, None, &p) - 1.4).abs() < 1e-12);
    assert_eq!(idm_acceleration(25.0, None, &p), 0.0);
}

proptest! {
    #[test]
    fn idm_is_nondecreasing_in_gap(v in 0.0..35.0f64, dv in -10.0..10.0f64, g in 0.5..200.0f64, dg in 0.0..50.0f64) {
        let p = DriverProfile::normal();
        prop_assert!(idm_acceleration(v, Some((g + dg, dv)), &p) >= idm_acceleration(v, Some((g, dv)), &p) - 1e-12);
    }

    #[test]
    fn mobil_only_proposes_existing_lanes(
        v in 0.0..35.0f64,
        lead_gap in 1.0..150.0f64,
        lead_dv in -10.0..10.0f64,
        fol_gap in 1.0..150.0f64,
        fol_speed in 0.0..35.0f64,
        has_left in any::<bool>(),
        has_right in any::<bool>(),
    ) {
        let road = RoadGeometry::default();
        let subject = VehicleState::in_lane(&road, 1, 0.0, v);
        let open = NeighborView {
            leader: Some(LeaderView { gap: lead_gap * 2.0, dv: lead_dv - 5.0 }),
            follower: Some(FollowerView { gap: fol_gap, speed: fol_speed }),
            alongside: false,
        };
        let views = LaneViews {
            current: NeighborView { leader: Some(LeaderView { gap: lead_gap, dv: lead_dv }), ..Default::default() },
            left: has_left.then_some(open),
            right: has_right.then_some(open),
            subject_length: 5.0,
        };
        for p in [DriverProfile::timid(), DriverProfile::normal(), DriverProfile::aggressive()] {
            match mobil_decision(&subject, &p, &views) {
                LaneDecision::ChangeLeft => prop_assert!(has_left),
                LaneDecision::ChangeRight => prop_assert!(has_right),
                LaneDecision::Keep => {}
            }
        }
    }

    #[test]
    fn observations_and_rewards_stay_in_bounds(seed in any::<u64>(), actions in prop::collection::vec(0usize..3, 1..60)) {
        let config = EnvConfig::benchmark_b();
        let v_d = config.scenario.ego_desired_speed;
        let v_max = config.observation.v_max;
        let mut env = HighwayEnv::new(config, Some(SafetyLayer::default())).unwrap();
        let obs = env.reset(seed).unwrap();
        let len = obs.features.len();
        prop_assert!(obs.features.iter().all(|x| (-1.0..=1.0).contains(x)));
        for a in actions {
            let r = env.step(Action::from_index(a));
            prop_assert_eq!(r.observation.features.len(), len);
            prop_assert!(r.observation.features.iter().all(|x| (-1.0..=1.0).contains(x)));
            if r.status.is_terminal() {
                prop_assert!(r.reward == 100.0 || r.reward == -100.0);
            } else {
                prop_assert!(r.reward >= -2.0 - v_max / v_d && r.reward <= 1.0);
            }
            if r.status == EpisodeStatus::Solved {
                prop_assert!(env.world().ego().state.v >= v_d - 0.1);
            }
            if r.status.is_done() {
                break;
            }
        }
    }
}

#[test]
fn mobil_population_without_noise_is_collision_free() {
    let config = EnvConfig::benchmark_a();
    let noise = config.scenario.noise;
    let mut env = HighwayEnv::new(config, None).unwrap();
    let mut decisions = 0;
    for seed in 0..10u64 {
        let mut episode = 0;
        while decisions < (seed + 1) * 300 {
            env.reset(seed * 1000 + episode).unwrap();
            episode += 1;
            loop {
                let (world, rng) = env.world_and_rng();
                let a = mobil_ego_action(world, &noise, rng);
                let r = env.step(a);
                decisions += 1;
                assert_eq!(env.world().any_collision(), None, "seed {seed}");
                assert_ne!(r.status, EpisodeStatus::Collided, "seed {seed}");
                if r.status.is_done() {
                    break;
                }
            }
        }
    }
}

#[test]
fn safety_layer_keeps_a_random_policy_on_the_road() {
    for config in [EnvConfig::benchmark_a(), EnvConfig::benchmark_b()] {
        let window = BlindSpotWindow::default();
        let mut env = HighwayEnv::new(config, Some(SafetyLayer::new(window))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut seed = 0;
        env.reset(seed).unwrap();
        for _ in 0..5_000 {
            let requested = Action::from_index(rng.random_range(0..3));
            let world = env.world();
            let target = requested.lane_offset().map(|o| world.ego().state.lane as i32 + o);
            let mid = world.ego().state.maneuver.is_active();
            let blocked = target.is_some_and(|t| !world.road.has_lane(t) || window_occupied(world, t, &window));
            let r = env.step(requested);
            // The verdict and the reward signal agree.
            assert_eq!(r.info.safety_violation, !mid && blocked);
            if r.info.lane_change_executed {
                assert!(!blocked);
            }
            assert_ne!(r.info.collision, CollisionReport::RoadDeparture);
            if r.status.is_done() {
                seed += 1;
                env.reset(seed).unwrap();
            }
        }
    }
}

#[test]
fn identical_seeds_replay_identically() {
    let run = || {
        let mut env = HighwayEnv::new(EnvConfig::benchmark_b(), Some(SafetyLayer::default())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut out = Vec::new();
        env.reset(99).unwrap();
        for _ in 0..200 {
            let r = env.step(Action::from_index(rng.random_range(0..3)));
            out.push((r.reward.to_bits(), env.world().vehicles[EGO].state.s.to_bits(), r.observation.features));
            if r.status.is_done() {
                break;
            }
        }
        out
    };
    assert_eq!(run(), run());
}

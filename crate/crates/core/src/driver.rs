//! Driver behavior: IDM car following, MOBIL lane selection, and the
//! lateral steering controller shared by every vehicle.

use serde::{Deserialize, Serialize};

use crate::traffic::{RoadGeometry, VehicleState, STEER_MAX};

/// Physical braking limit applied to IDM output, m/s^2.
pub const B_HARD: f64 = 9.0;

/// IDM and MOBIL parameters of one driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverProfile {
    /// Desired speed, m/s.
    pub v_set: f64,
    /// Desired time gap, s.
    pub t_set: f64,
    /// Minimum gap, m.
    pub d0: f64,
    pub a_max: f64,
    /// Comfortable deceleration, m/s^2.
    pub b: f64,
    /// IDM free-road exponent.
    pub delta: f64,
    /// Politeness towards the new follower.
    pub p: f64,
    /// Politeness towards the old follower.
    pub q: f64,
    /// Lane change threshold, m/s^2.
    pub a_th: f64,
    /// Largest deceleration a lane change may impose on the new follower.
    pub b_safe: f64,
}

impl DriverProfile {
    pub const fn normal() -> Self {
        Self {
            v_set: 25.0,
            t_set: 1.5,
            d0: 2.0,
            a_max: 1.4,
            b: 2.0,
            delta: 4.0,
            p: 0.05,
            q: 0.05,
            a_th: 0.1,
            b_safe: 2.0,
        }
    }

    pub const fn timid() -> Self {
        Self {
            v_set: 19.4,
            t_set: 2.0,
            d0: 4.0,
            a_max: 0.8,
            b: 1.0,
            delta: 4.0,
            p: 0.1,
            q: 0.1,
            a_th: 0.2,
            b_safe: 1.0,
        }
    }

    pub const fn aggressive() -> Self {
        Self {
            v_set: 30.6,
            t_set: 1.0,
            d0: 0.0,
            a_max: 2.0,
            b: 3.0,
            delta: 4.0,
            p: 0.0,
            q: 0.0,
            a_th: 0.0,
            b_safe: 3.0,
        }
    }

    pub fn with_desired_speed(mut self, v_set: f64) -> Self {
        self.v_set = v_set;
        self
    }

    /// This profile's car-following parameters with the lane-change
    /// parameters (politeness, threshold, safe braking) of `other`.
    pub fn with_lane_change_of(mut self, other: &DriverProfile) -> Self {
        self.p = other.p;
        self.q = other.q;
        self.a_th = other.a_th;
        self.b_safe = other.b_safe;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = self.v_set > 0.0
            && self.a_max > 0.0
            && self.b > 0.0
            && self.b_safe > 0.0
            && self.t_set >= 0.0
            && self.d0 >= 0.0
            && self.delta > 0.0
            && (0.0..=1.0).contains(&self.p)
            && (0.0..=1.0).contains(&self.q);
        if ok {
            Ok(())
        } else {
            Err(format!("invalid driver profile {self:?}"))
        }
    }
}

/// Driver type of a simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    Normal,
    Timid,
    Aggressive,
}

impl DriverKind {
    pub const ALL: [DriverKind; 3] = [DriverKind::Normal, DriverKind::Timid, DriverKind::Aggressive];
}

/// The driver profile table, one row per [`DriverKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTable {
    pub normal: DriverProfile,
    pub timid: DriverProfile,
    pub aggressive: DriverProfile,
}

impl Default for ProfileTable {
    fn default() -> Self {
        Self {
            normal: DriverProfile::normal(),
            timid: DriverProfile::timid(),
            aggressive: DriverProfile::aggressive(),
        }
    }
}

impl ProfileTable {
    pub fn get(&self, kind: DriverKind) -> DriverProfile {
        match kind {
            DriverKind::Normal => self.normal,
            DriverKind::Timid => self.timid,
            DriverKind::Aggressive => self.aggressive,
        }
    }
}

/// Vehicle ahead in some lane, as seen from the subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderView {
    /// Bumper-to-bumper gap, m.
    pub gap: f64,
    /// Subject speed minus leader speed.
    pub dv: f64,
}

/// Vehicle behind in some lane, as seen from the subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerView {
    pub gap: f64,
    pub speed: f64,
}

/// Neighborhood of the subject in one lane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborView {
    pub leader: Option<LeaderView>,
    pub follower: Option<FollowerView>,
    /// Some vehicle overlaps the subject longitudinally in this lane.
    pub alongside: bool,
}

/// Everything MOBIL looks at; `left`/`right` are `None` when the lane does
/// not exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneViews {
    pub current: NeighborView,
    pub left: Option<NeighborView>,
    pub right: Option<NeighborView>,
    pub subject_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneDecision {
    Keep,
    ChangeLeft,
    ChangeRight,
}

/// IDM acceleration. `leader` is `(gap, subject speed - leader speed)`.
///
/// Panics when a leader is present with a non-positive gap: vehicles that
/// overlap have already collided.
pub fn idm_acceleration(v: f64, leader: Option<(f64, f64)>, profile: &DriverProfile) -> f64 {
    debug_assert!(v >= 0.0);
    let free = 1.0 - (v / profile.v_set).powf(profile.delta);
    let interaction = match leader {
        None => 0.0,
        Some((gap, dv)) => {
            assert!(gap > 0.0, "idm_acceleration: leader gap {gap} must be positive");
            let desired = profile.d0
                + v * profile.t_set
                + v * dv / (2.0 * (profile.a_max * profile.b).sqrt());
            let desired = desired.max(0.0);
            (desired / gap).powi(2)
        }
    };
    (profile.a_max * (free - interaction)).clamp(-B_HARD, profile.a_max)
}

fn idm_behind(v: f64, leader: Option<LeaderView>, profile: &DriverProfile) -> f64 {
    idm_acceleration(v, leader.map(|l| (l.gap, l.dv)), profile)
}

/// Safety and incentive of moving into one adjacent lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeAssessment {
    pub safe: bool,
    /// Left-hand side of the incentive criterion.
    pub incentive: f64,
    /// `incentive - a_th`; positive means the change is worth it.
    pub surplus: f64,
}

/// Evaluates the MOBIL safety and incentive criteria for moving the subject
/// into `target`, using the subject's own model of its neighbours.
pub fn assess_lane_change(
    v: f64,
    profile: &DriverProfile,
    current: &NeighborView,
    target: &NeighborView,
    length: f64,
) -> LaneChangeAssessment {
    let blocked = LaneChangeAssessment {
        safe: false,
        incentive: f64::NEG_INFINITY,
        surplus: f64::NEG_INFINITY,
    };
    if target.alongside {
        return blocked;
    }
    if let Some(l) = target.leader {
        if l.gap <= 0.0 {
            return blocked;
        }
    }

    let a_e = idm_behind(v, current.leader, profile);
    let a_e_new = idm_behind(v, target.leader, profile);

    // New follower: currently follows the target-lane leader (if any).
    let (a_n, a_n_new) = match target.follower {
        None => (0.0, 0.0),
        Some(f) => {
            if f.gap <= 0.0 {
                return blocked;
            }
            let before = target.leader.map(|l| LeaderView {
                gap: f.gap + length + l.gap,
                dv: f.speed - (v - l.dv),
            });
            let after = Some(LeaderView {
                gap: f.gap,
                dv: f.speed - v,
            });
            (idm_behind(f.speed, before, profile), idm_behind(f.speed, after, profile))
        }
    };
    if target.follower.is_some() && a_n_new < -profile.b_safe {
        return LaneChangeAssessment {
            safe: false,
            ..blocked
        };
    }

    // Old follower: currently follows the subject.
    let (a_o, a_o_new) = match current.follower {
        None => (0.0, 0.0),
        Some(f) => {
            let before = Some(LeaderView {
                gap: f.gap.max(f64::MIN_POSITIVE),
                dv: f.speed - v,
            });
            let after = current.leader.map(|l| LeaderView {
                gap: f.gap.max(0.0) + length + l.gap,
                dv: f.speed - (v - l.dv),
            });
            (idm_behind(f.speed, before, profile), idm_behind(f.speed, after, profile))
        }
    };

    let incentive = a_e_new - a_e + profile.p * (a_n_new - a_n) + profile.q * (a_o_new - a_o);
    LaneChangeAssessment {
        safe: true,
        incentive,
        surplus: incentive - profile.a_th,
    }
}

/// MOBIL lane selection. Directions must pass the safety criterion and
/// exceed the threshold; the larger surplus wins and exact ties go left.
pub fn mobil_decision(subject: &VehicleState, profile: &DriverProfile, views: &LaneViews) -> LaneDecision {
    let assess = |target: &Option<NeighborView>| {
        target
            .as_ref()
            .map(|t| assess_lane_change(subject.v, profile, &views.current, t, views.subject_length))
            .filter(|a| a.safe && a.surplus > 0.0)
    };
    match (assess(&views.left), assess(&views.right)) {
        (None, None) => LaneDecision::Keep,
        (Some(_), None) => LaneDecision::ChangeLeft,
        (None, Some(_)) => LaneDecision::ChangeRight,
        (Some(l), Some(r)) => {
            if l.surplus >= r.surplus {
                LaneDecision::ChangeLeft
            } else {
                LaneDecision::ChangeRight
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralGains {
    /// Lateral offset gain, rad/m.
    pub k_y: f64,
    /// Heading gain.
    pub k_psi: f64,
}

impl Default for LateralGains {
    fn default() -> Self {
        Self { k_y: 0.075, k_psi: 1.5 }
    }
}

/// Tolerances for declaring a lane change finished.
pub const MANEUVER_DONE_Y: f64 = 0.1;
pub const MANEUVER_DONE_PSI: f64 = 0.01;

/// Steering command pulling the vehicle onto the center of `target_lane`.
pub fn lateral_steering(
    state: &VehicleState,
    target_lane: i32,
    road: &RoadGeometry,
    gains: &LateralGains,
) -> f64 {
    let err = state.y - road.lane_center(target_lane);
    (-gains.k_y * err - gains.k_psi * state.psi).clamp(-STEER_MAX, STEER_MAX)
}

pub fn maneuver_complete(state: &VehicleState, target_lane: i32, road: &RoadGeometry) -> bool {
    (state.y - road.lane_center(target_lane)).abs() < MANEUVER_DONE_Y && state.psi.abs() < MANEUVER_DONE_PSI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{bicycle_step, Maneuver, VehicleGeometry};
    use proptest::prelude::*;

    /// Direct substitution into the IDM equations, kept separate from the
    /// implementation above.
    fn idm_oracle(p: &DriverProfile, v: f64, leader: Option<(f64, f64)>) -> f64 {
        let mut a = 1.0 - (v / p.v_set).powi(4);
        if let Some((d, dv)) = leader {
            let star = p.d0 + v * p.t_set + v * dv / (2.0 * (p.b * p.a_max).sqrt());
            a -= (star / d) * (star / d);
        }
        p.a_max * a
    }

    #[test]
    fn idm_free_road_equilibrium() {
        let p = DriverProfile::normal();
        assert_eq!(idm_acceleration(p.v_set, None, &p), 0.0);
    }

    #[test]
    fn idm_standstill_uses_max_acceleration() {
        for p in [DriverProfile::normal(), DriverProfile::timid(), DriverProfile::aggressive()] {
            assert!((idm_acceleration(0.0, None, &p) - p.a_max).abs() < 1e-12);
        }
        assert!((idm_acceleration(0.0, None, &DriverProfile::normal()) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn idm_substitution_case() {
        let p = DriverProfile::normal();
        let a = idm_acceleration(20.0, Some((30.0, 5.0)), &p);
        let oracle = idm_oracle(&p, 20.0, Some((30.0, 5.0)));
        assert!((a - oracle).abs() < 1e-9);
        // Frozen value from an offline evaluation of the same formula.
        assert!((a - (-5.130_008_983_232_268)).abs() < 1e-9, "{a}");
    }

    #[test]
    fn idm_output_is_clamped() {
        let p = DriverProfile::normal();
        assert_eq!(idm_acceleration(25.0, Some((0.5, 10.0)), &p), -B_HARD);
    }

    #[test]
    #[should_panic(expected = "must be positive")]
    fn idm_rejects_overlapping_leader() {
        idm_acceleration(10.0, Some((0.0, 0.0)), &DriverProfile::normal());
    }

    #[test]
    fn idm_free_road_convergence_does_not_overshoot() {
        let p = DriverProfile::normal();
        let dt = 0.1;
        let mut v: f64 = 3.0;
        for _ in 0..2000 {
            let next = v + idm_acceleration(v, None, &p) * dt;
            assert!(next >= v);
            assert!(next <= p.v_set + p.a_max * dt);
            v = next;
        }
        assert!((v - p.v_set).abs() < 1e-3);
    }

    fn subject(v: f64) -> VehicleState {
        let road = RoadGeometry::default();
        VehicleState::in_lane(&road, 0, 0.0, v)
    }

    fn views(current: NeighborView, left: Option<NeighborView>, right: Option<NeighborView>) -> LaneViews {
        LaneViews {
            current,
            left,
            right,
            subject_length: 5.0,
        }
    }

    #[test]
    fn unsafe_new_follower_vetoes_the_change() {
        let p = DriverProfile::normal();
        let current = NeighborView {
            leader: Some(LeaderView { gap: 10.0, dv: 8.0 }),
            ..Default::default()
        };
        // Follower closing fast at a short gap: braking far beyond b_safe.
        let left = NeighborView {
            follower: Some(FollowerView { gap: 15.0, speed: 26.0 }),
            ..Default::default()
        };
        let a = assess_lane_change(20.0, &p, &current, &left, 5.0);
        assert!(!a.safe);
        assert_eq!(mobil_decision(&subject(20.0), &p, &views(current, Some(left), None)), LaneDecision::Keep);
    }

    #[test]
    fn aggressive_driver_leaves_a_slow_leader_for_an_empty_lane() {
        let p = DriverProfile::aggressive();
        let current = NeighborView {
            leader: Some(LeaderView { gap: 20.0, dv: 4.0 }),
            ..Default::default()
        };
        let d = mobil_decision(&subject(20.0), &p, &views(current, Some(NeighborView::default()), None));
        assert_eq!(d, LaneDecision::ChangeLeft);
    }

    #[test]
    fn frozen_regression_case() {
        // Subject at 20 m/s, leader at 15 m/s 30 m ahead, empty left lane
        // except a follower 50 m behind at 20 m/s, no right lane.
        let p = DriverProfile::normal();
        let current = NeighborView {
            leader: Some(LeaderView { gap: 30.0, dv: 5.0 }),
            ..Default::default()
        };
        let left = NeighborView {
            follower: Some(FollowerView { gap: 50.0, speed: 20.0 }),
            ..Default::default()
        };
        let a = assess_lane_change(20.0, &p, &current, &left, 5.0);
        // Values from a standalone substitution script.
        assert!(a.safe);
        assert!((a.incentive - 5.927_896_983_232_268).abs() < 1e-9, "{}", a.incentive);
        let d = mobil_decision(&subject(20.0), &p, &views(current, Some(left), None));
        assert_eq!(d, LaneDecision::ChangeLeft);
    }

    #[test]
    fn tie_breaks_to_the_left() {
        let p = DriverProfile::aggressive();
        let current = NeighborView {
            leader: Some(LeaderView { gap: 20.0, dv: 4.0 }),
            ..Default::default()
        };
        let empty = Some(NeighborView::default());
        assert_eq!(mobil_decision(&subject(20.0), &p, &views(current, empty, empty)), LaneDecision::ChangeLeft);
    }

    #[test]
    fn alongside_vehicle_blocks_the_lane() {
        let p = DriverProfile::aggressive();
        let current = NeighborView {
            leader: Some(LeaderView { gap: 20.0, dv: 4.0 }),
            ..Default::default()
        };
        let left = NeighborView {
            alongside: true,
            ..Default::default()
        };
        assert_eq!(mobil_decision(&subject(20.0), &p, &views(current, Some(left), None)), LaneDecision::Keep);
    }

    #[test]
    fn steering_fixed_point_and_sign() {
        let road = RoadGeometry::default();
        let gains = LateralGains::default();
        let mut st = VehicleState::in_lane(&road, 1, 0.0, 20.0);
        assert_eq!(lateral_steering(&st, 1, &road, &gains), 0.0);
        st.y += 0.5;
        assert!(lateral_steering(&st, 1, &road, &gains) < 0.0);
    }

    /// Closed-loop lane change; returns (completion time, max overshoot).
    fn simulate_lane_change(v: f64, gains: &LateralGains) -> (f64, f64) {
        let road = RoadGeometry::default();
        let geom = VehicleGeometry::default();
        let mut st = VehicleState::in_lane(&road, 0, 0.0, v);
        st.maneuver = Maneuver::ChangingLeft { target_lane: 1 };
        let target = road.lane_center(1);
        let dt = 0.1;
        let mut overshoot: f64 = 0.0;
        for i in 1..=200 {
            let steer = lateral_steering(&st, 1, &road, gains);
            st = bicycle_step(&st, 0.0, steer, dt, &geom);
            overshoot = overshoot.max(st.y - target);
            if maneuver_complete(&st, 1, &road) {
                return (i as f64 * dt, overshoot);
            }
        }
        (f64::INFINITY, overshoot)
    }

    #[test]
    fn lane_change_completes_in_band_without_overshoot() {
        let (t, overshoot) = simulate_lane_change(20.0, &LateralGains::default());
        assert!((3.0..=4.0).contains(&t), "completion time {t}");
        assert!(overshoot <= 0.375, "overshoot {overshoot}");
    }

    proptest! {
        #[test]
        fn idm_monotone_in_speed_and_gap(
            v in 0.0f64..35.0, dv_lead in 0.0f64..10.0, gap in 1.0f64..150.0, dgap in 0.0f64..20.0, dvv in 0.0f64..3.0
        ) {
            // Fixed leader speed no faster than the subject: raising v also
            // raises the closing rate. Behind a faster leader the v*dv term
            // makes IDM non-monotone in v.
            let p = DriverProfile::normal();
            let leader_speed = (v - dv_lead).max(0.0);
            let a1 = idm_acceleration(v, Some((gap, v - leader_speed)), &p);
            let a2 = idm_acceleration(v + dvv, Some((gap, v + dvv - leader_speed)), &p);
            prop_assert!(a2 <= a1 + 1e-12);
            let a3 = idm_acceleration(v, Some((gap + dgap, v - leader_speed)), &p);
            prop_assert!(a3 >= a1 - 1e-12);
        }

        #[test]
        fn mobil_never_targets_missing_lanes(
            lgap in 1.0f64..100.0, ldv in -5.0f64..10.0, has_left in any::<bool>(), has_right in any::<bool>()
        ) {
            let p = DriverProfile::aggressive();
            let current = NeighborView { leader: Some(LeaderView { gap: lgap, dv: ldv }), ..Default::default() };
            let left = has_left.then(NeighborView::default);
            let right = has_right.then(NeighborView::default);
            let d = mobil_decision(&subject(20.0), &p, &views(current, left, right));
            prop_assert!(d != LaneDecision::ChangeLeft || has_left);
            prop_assert!(d != LaneDecision::ChangeRight || has_right);
        }
    }
}

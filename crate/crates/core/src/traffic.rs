//! Vehicle kinematics, road geometry, and collision detection.
//!
//! Lanes are numbered from the right road edge: lane `k` spans
//! `[k * lane_width, (k + 1) * lane_width]` laterally. Headings are measured
//! from the road axis, positive towards the left.

use serde::{Deserialize, Serialize};

/// Steering saturation of the kinematic bicycle model, radians.
pub const STEER_MAX: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadGeometry {
    pub lane_count: usize,
    pub lane_width: f64,
    /// Distance after which an episode is truncated (`d_max`).
    pub episode_length: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 3.75,
            episode_length: 5000.0,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<(), String> {
        if !(3..=4).contains(&self.lane_count) {
            return Err(format!("lane_count must be 3 or 4, got {}", self.lane_count));
        }
        if !(self.lane_width > 0.0) {
            return Err("lane_width must be positive".into());
        }
        if !(self.episode_length > 0.0) {
            return Err("episode_length must be positive".into());
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    /// Lateral position of the center of lane `k`. Defined for lanes outside
    /// the road too, which is where an unsupervised agent can steer.
    pub fn lane_center(&self, k: i32) -> f64 {
        (k as f64 + 0.5) * self.lane_width
    }

    pub fn lane_of(&self, y: f64) -> usize {
        let k = (y / self.lane_width).floor();
        k.clamp(0.0, (self.lane_count - 1) as f64) as usize
    }

    pub fn has_lane(&self, k: i32) -> bool {
        k >= 0 && (k as usize) < self.lane_count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleGeometry {
    pub length: f64,
    pub width: f64,
    /// Front axle to center of gravity.
    pub l_f: f64,
    /// Rear axle to center of gravity.
    pub l_r: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self {
            length: 5.0,
            width: 2.0,
            l_f: 1.4,
            l_r: 1.4,
        }
    }
}

impl VehicleGeometry {
    pub fn validate(&self, road: &RoadGeometry) -> Result<(), String> {
        if !(self.length > 0.0 && self.width > 0.0 && self.l_f > 0.0 && self.l_r > 0.0) {
            return Err("vehicle dimensions must be positive".into());
        }
        if self.width >= road.lane_width {
            return Err("vehicle width must be smaller than the lane width".into());
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Maneuver {
    #[default]
    None,
    ChangingLeft {
        target_lane: i32,
    },
    ChangingRight {
        target_lane: i32,
    },
}

impl Maneuver {
    pub fn target_lane(&self) -> Option<i32> {
        match *self {
            Maneuver::None => None,
            Maneuver::ChangingLeft { target_lane } | Maneuver::ChangingRight { target_lane } => {
                Some(target_lane)
            }
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, Maneuver::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleState {
    /// Longitudinal position of the center, meters.
    pub s: f64,
    /// Lateral position of the center, meters.
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    /// Last applied longitudinal acceleration.
    pub a: f64,
    pub lane: usize,
    pub maneuver: Maneuver,
}

impl VehicleState {
    /// A vehicle centered in `lane`, heading along the road.
    pub fn in_lane(road: &RoadGeometry, lane: usize, s: f64, v: f64) -> Self {
        Self {
            s,
            y: road.lane_center(lane as i32),
            psi: 0.0,
            v,
            a: 0.0,
            lane,
            maneuver: Maneuver::None,
        }
    }

    pub fn refresh_lane(&mut self, road: &RoadGeometry) {
        self.lane = road.lane_of(self.y);
    }

    pub fn front(&self, geom: &VehicleGeometry) -> f64 {
        self.s + 0.5 * geom.length
    }

    pub fn rear(&self, geom: &VehicleGeometry) -> f64 {
        self.s - 0.5 * geom.length
    }

    /// Lane the vehicle is heading for: the maneuver target, or its own lane.
    pub fn target_lane(&self) -> i32 {
        self.maneuver.target_lane().unwrap_or(self.lane as i32)
    }
}

/// One explicit Euler step of the kinematic bicycle model referenced at the
/// center of gravity. Steering is saturated at [`STEER_MAX`].
pub fn bicycle_step(
    state: &VehicleState,
    accel: f64,
    steer: f64,
    dt: f64,
    geom: &VehicleGeometry,
) -> VehicleState {
    assert!(dt > 0.0, "bicycle_step: dt must be positive");
    assert!(
        accel.is_finite() && steer.is_finite(),
        "bicycle_step: non-finite control input"
    );
    let steer = steer.clamp(-STEER_MAX, STEER_MAX);
    let beta = (geom.l_r * steer.tan() / geom.wheelbase()).atan();
    let v = state.v;
    let mut next = *state;
    next.s += v * (state.psi + beta).cos() * dt;
    next.y += v * (state.psi + beta).sin() * dt;
    next.psi += v / geom.l_r * beta.sin() * dt;
    next.v = (v + accel * dt).max(0.0);
    next.a = accel;
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionReport {
    None,
    /// Index into the `others` slice that was hit.
    Vehicle(usize),
    RoadDeparture,
}

/// Road-aligned rectangle overlap of two vehicle bodies.
pub fn bodies_overlap(a: &VehicleState, b: &VehicleState, geom: &VehicleGeometry) -> bool {
    (a.s - b.s).abs() < geom.length && (a.y - b.y).abs() < geom.width
}

pub fn leaves_road(state: &VehicleState, geom: &VehicleGeometry, road: &RoadGeometry) -> bool {
    let half = 0.5 * geom.width;
    state.y - half < 0.0 || state.y + half > road.width()
}

pub fn check_collision(
    ego: &VehicleState,
    others: &[VehicleState],
    geom: &VehicleGeometry,
    road: &RoadGeometry,
) -> CollisionReport {
    if let Some(i) = others.iter().position(|o| bodies_overlap(ego, o, geom)) {
        return CollisionReport::Vehicle(i);
    }
    if leaves_road(ego, geom, road) {
        return CollisionReport::RoadDeparture;
    }
    CollisionReport::None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(s: f64, y: f64, v: f64) -> VehicleState {
        VehicleState {
            s,
            y,
            psi: 0.0,
            v,
            a: 0.0,
            lane: 0,
            maneuver: Maneuver::None,
        }
    }

    #[test]
    fn straight_line_step_advances_exactly() {
        let geom = VehicleGeometry::default();
        let next = bicycle_step(&state(0.0, 1.875, 20.0), 0.0, 0.0, 0.1, &geom);
        assert_eq!(next.s, 2.0);
        assert_eq!(next.y, 1.875);
        assert_eq!(next.psi, 0.0);
        assert_eq!(next.v, 20.0);
    }

    #[test]
    fn zero_speed_is_a_fixed_point() {
        let geom = VehicleGeometry::default();
        let mut st = state(12.0, 3.0, 0.0);
        st.psi = 0.02;
        let next = bicycle_step(&st, 0.0, 0.25, 0.1, &geom);
        assert_eq!((next.s, next.y, next.psi, next.v), (st.s, st.y, st.psi, st.v));
    }

    #[test]
    fn speed_never_goes_negative() {
        let geom = VehicleGeometry::default();
        let next = bicycle_step(&state(0.0, 0.0, 0.5), -9.0, 0.0, 0.1, &geom);
        assert_eq!(next.v, 0.0);
        assert_eq!(next.a, -9.0);
    }

    #[test]
    fn steering_is_saturated() {
        let geom = VehicleGeometry::default();
        let a = bicycle_step(&state(0.0, 0.0, 10.0), 0.0, 1.0, 0.1, &geom);
        let b = bicycle_step(&state(0.0, 0.0, 10.0), 0.0, STEER_MAX, 0.1, &geom);
        assert_eq!(a, b);
    }

    /// Circumradius of three points.
    fn circumradius(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
        let a = ((q.0 - r.0).powi(2) + (q.1 - r.1).powi(2)).sqrt();
        let b = ((p.0 - r.0).powi(2) + (p.1 - r.1).powi(2)).sqrt();
        let c = ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
        let area2 = ((q.0 - p.0) * (r.1 - p.1) - (r.0 - p.0) * (q.1 - p.1)).abs();
        a * b * c / (2.0 * area2)
    }

    #[test]
    fn constant_steer_traces_the_analytic_turning_circle() {
        let geom = VehicleGeometry::default();
        let steer: f64 = 0.05;
        let expected = geom.wheelbase() / steer.tan();
        let mut st = state(0.0, 0.0, 10.0);
        let mut points = Vec::new();
        // About one full revolution: 2 pi R / v.
        let steps = (2.0 * std::f64::consts::PI * expected / 10.0 / 0.01) as usize;
        for i in 0..steps {
            if i % (steps / 3) == 0 {
                points.push((st.s, st.y));
            }
            st = bicycle_step(&st, 0.0, steer, 0.01, &geom);
        }
        let radius = circumradius(points[0], points[1], points[2]);
        assert!(
            (radius - expected).abs() / expected < 0.01,
            "radius {radius} vs {expected}"
        );
    }

    #[test]
    fn collision_examples() {
        let geom = VehicleGeometry::default();
        let road = RoadGeometry::default();
        let ego = VehicleState::in_lane(&road, 1, 0.0, 20.0);
        let ahead = VehicleState::in_lane(&road, 1, 25.0, 20.0);
        assert_eq!(check_collision(&ego, &[ahead], &geom, &road), CollisionReport::None);
        assert_eq!(check_collision(&ego, &[ahead, ego], &geom, &road), CollisionReport::Vehicle(1));

        let mut off = VehicleState::in_lane(&road, 0, 0.0, 20.0);
        off.y = -geom.width / 4.0;
        assert_eq!(check_collision(&off, &[], &geom, &road), CollisionReport::RoadDeparture);
    }

    #[test]
    fn road_bounds_match_rectangle_oracle() {
        let geom = VehicleGeometry::default();
        let road = RoadGeometry::default();
        for i in 0..=200 {
            let y = -2.0 + i as f64 * (road.width() + 4.0) / 200.0;
            let st = state(0.0, y, 10.0);
            let (lo, hi) = (y - geom.width / 2.0, y + geom.width / 2.0);
            let outside = lo < 0.0 || hi > road.width();
            assert_eq!(leaves_road(&st, &geom, &road), outside, "y = {y}");
        }
    }

    #[test]
    fn lane_index_is_clamped() {
        let road = RoadGeometry::default();
        assert_eq!(road.lane_of(-0.5), 0);
        assert_eq!(road.lane_of(1.0), 0);
        assert_eq!(road.lane_of(4.0), 1);
        assert_eq!(road.lane_of(100.0), 2);
    }

    proptest! {
        #[test]
        fn zero_steer_conserves_lateral_state(
            v in 0.0f64..40.0, a in -9.0f64..3.0, y in 0.0f64..11.0, dt in 0.001f64..0.5
        ) {
            let geom = VehicleGeometry::default();
            let next = bicycle_step(&state(0.0, y, v), a, 0.0, dt, &geom);
            prop_assert_eq!(next.y, y);
            prop_assert_eq!(next.psi, 0.0);
            prop_assert!(next.v >= 0.0);
        }

        #[test]
        fn collision_is_symmetric_and_reflexive(
            s1 in -20.0f64..20.0, y1 in 0.0f64..11.0, s2 in -20.0f64..20.0, y2 in 0.0f64..11.0
        ) {
            let geom = VehicleGeometry::default();
            let a = state(s1, y1, 10.0);
            let b = state(s2, y2, 10.0);
            prop_assert_eq!(bodies_overlap(&a, &b, &geom), bodies_overlap(&b, &a, &geom));
            prop_assert!(bodies_overlap(&a, &a, &geom));
        }
    }
}

//! World state and the physics/behavior update shared by the environment.

use crate::driver::{
    idm_acceleration, lateral_steering, maneuver_complete, mobil_decision, DriverKind, DriverProfile,
    FollowerView, LaneDecision, LaneViews, LeaderView, NeighborView,
};
use crate::env::config::EnvConfig;
use crate::traffic::{
    bicycle_step, bodies_overlap, check_collision, CollisionReport, Maneuver, RoadGeometry, VehicleGeometry,
    VehicleState,
};

/// Index of the ego vehicle in [`WorldState::vehicles`].
pub const EGO: usize = 0;

/// Smallest gap handed to IDM; anything closer is an imminent collision.
const MIN_IDM_GAP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub state: VehicleState,
    pub profile: DriverProfile,
    pub kind: DriverKind,
    /// Never changes lanes on its own (the ego vehicle and its initial blocker).
    pub holds_lane: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeStatus {
    Running,
    Solved,
    Collided,
    Truncated,
}

impl EpisodeStatus {
    pub fn is_done(self) -> bool {
        self != EpisodeStatus::Running
    }

    /// True terminals end the return; truncation does not.
    pub fn is_terminal(self) -> bool {
        matches!(self, EpisodeStatus::Solved | EpisodeStatus::Collided)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::Solved => "solved",
            EpisodeStatus::Collided => "collided",
            EpisodeStatus::Truncated => "truncated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub road: RoadGeometry,
    pub geom: VehicleGeometry,
    /// Ego vehicle first.
    pub vehicles: Vec<Vehicle>,
    pub ego_initial_speed: f64,
    pub ego_desired_speed: f64,
    pub time: f64,
    pub decisions: u64,
    pub distance: f64,
    pub lane_changes: u32,
    /// Consecutive decisions with the ego vehicle below the slow threshold.
    pub slow_decisions: u32,
    pub status: EpisodeStatus,
}

impl WorldState {
    pub fn ego(&self) -> &Vehicle {
        &self.vehicles[EGO]
    }

    pub fn others(&self) -> impl Iterator<Item = (usize, &Vehicle)> {
        self.vehicles.iter().enumerate().skip(1)
    }

    /// Lateral band swept by a vehicle: its body plus, while changing lanes,
    /// the target lane.
    fn corridor(&self, i: usize) -> (f64, f64) {
        let st = &self.vehicles[i].state;
        let half = 0.5 * self.geom.width;
        match st.maneuver.target_lane() {
            None => (st.y - half, st.y + half),
            Some(t) => {
                let ty = self.road.lane_center(t);
                (st.y.min(ty) - half, st.y.max(ty) + half)
            }
        }
    }

    /// Whether vehicle `j` occupies lane `lane`, by position or intent.
    pub fn occupies_lane(&self, j: usize, lane: i32) -> bool {
        let st = &self.vehicles[j].state;
        st.lane as i32 == lane || st.maneuver.target_lane() == Some(lane)
    }

    /// Nearest vehicle ahead of `i` whose corridor overlaps `i`'s corridor,
    /// as `(bumper gap, speed difference)`.
    pub fn idm_leader(&self, i: usize) -> Option<(f64, f64)> {
        let (lo, hi) = self.corridor(i);
        let me = &self.vehicles[i].state;
        let mut best: Option<(f64, usize)> = None;
        for (j, other) in self.vehicles.iter().enumerate() {
            if j == i || other.state.s <= me.s {
                continue;
            }
            let (olo, ohi) = self.corridor(j);
            if olo >= hi || ohi <= lo {
                continue;
            }
            let ds = other.state.s - me.s;
            if best.is_none_or(|(b, _)| ds < b) {
                best = Some((ds, j));
            }
        }
        best.map(|(ds, j)| {
            let gap = (ds - self.geom.length).max(MIN_IDM_GAP);
            (gap, me.v - self.vehicles[j].state.v)
        })
    }

    /// Leader and follower of vehicle `i` in `lane`, with exact gaps.
    pub fn neighbor_view(&self, i: usize, lane: i32) -> NeighborView {
        let me = &self.vehicles[i].state;
        let len = self.geom.length;
        let mut view = NeighborView::default();
        let mut lead: Option<(f64, usize)> = None;
        let mut follow: Option<(f64, usize)> = None;
        for (j, other) in self.vehicles.iter().enumerate() {
            if j == i || !self.occupies_lane(j, lane) {
                continue;
            }
            let ds = other.state.s - me.s;
            if ds.abs() < len {
                view.alongside = true;
            } else if ds > 0.0 {
                if lead.is_none_or(|(b, _)| ds < b) {
                    lead = Some((ds, j));
                }
            } else if follow.is_none_or(|(b, _)| -ds < b) {
                follow = Some((-ds, j));
            }
        }
        view.leader = lead.map(|(ds, j)| LeaderView {
            gap: ds - len,
            dv: me.v - self.vehicles[j].state.v,
        });
        view.follower = follow.map(|(ds, j)| FollowerView {
            gap: ds - len,
            speed: self.vehicles[j].state.v,
        });
        view
    }

    pub fn lane_views(&self, i: usize) -> LaneViews {
        let lane = self.vehicles[i].state.lane as i32;
        let adjacent = |k: i32| self.road.has_lane(k).then(|| self.neighbor_view(i, k));
        LaneViews {
            current: self.neighbor_view(i, lane),
            left: adjacent(lane + 1),
            right: adjacent(lane - 1),
            subject_length: self.geom.length,
        }
    }

    /// Starts a lane change of vehicle `i` towards `lane + direction`.
    pub fn start_lane_change(&mut self, i: usize, left: bool) {
        let st = &mut self.vehicles[i].state;
        let lane = st.lane as i32;
        st.maneuver = if left {
            Maneuver::ChangingLeft { target_lane: lane + 1 }
        } else {
            Maneuver::ChangingRight { target_lane: lane - 1 }
        };
    }

    /// MOBIL lane decisions for background vehicles, in index order so that
    /// each decision sees the ones taken before it.
    pub fn background_lane_decisions(&mut self) {
        for i in 1..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.holds_lane || v.state.maneuver.is_active() {
                continue;
            }
            let views = self.lane_views(i);
            match mobil_decision(&v.state, &v.profile, &views) {
                LaneDecision::Keep => {}
                LaneDecision::ChangeLeft => self.start_lane_change(i, true),
                LaneDecision::ChangeRight => self.start_lane_change(i, false),
            }
        }
    }

    /// Advances every vehicle by one physics step.
    pub fn physics_step(&mut self, config: &EnvConfig) {
        let controls: Vec<(f64, f64)> = (0..self.vehicles.len())
            .map(|i| {
                let v = &self.vehicles[i];
                let leader = self.idm_leader(i).filter(|&(gap, _)| gap <= config.leader_range);
                let accel = idm_acceleration(v.state.v, leader, &v.profile);
                let steer = lateral_steering(&v.state, v.state.target_lane(), &self.road, &config.lateral);
                (accel, steer)
            })
            .collect();
        let s_before = self.vehicles[EGO].state.s;
        for (veh, (accel, steer)) in self.vehicles.iter_mut().zip(controls) {
            let mut next = bicycle_step(&veh.state, accel, steer, config.dt, &self.geom);
            next.refresh_lane(&self.road);
            if let Some(t) = next.maneuver.target_lane() {
                if self.road.has_lane(t) && maneuver_complete(&next, t, &self.road) {
                    next.maneuver = Maneuver::None;
                    next.lane = t as usize;
                }
            }
            veh.state = next;
        }
        self.distance += self.vehicles[EGO].state.s - s_before;
        self.time += config.dt;
    }

    pub fn ego_collision(&self) -> CollisionReport {
        let others: Vec<VehicleState> = self.vehicles[1..].iter().map(|v| v.state).collect();
        match check_collision(&self.vehicles[EGO].state, &others, &self.geom, &self.road) {
            CollisionReport::Vehicle(k) => CollisionReport::Vehicle(k + 1),
            r => r,
        }
    }

    /// Any overlapping pair of vehicles, ego included.
    pub fn any_collision(&self) -> Option<(usize, usize)> {
        let n = self.vehicles.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .find(|&(i, j)| bodies_overlap(&self.vehicles[i].state, &self.vehicles[j].state, &self.geom))
    }
}

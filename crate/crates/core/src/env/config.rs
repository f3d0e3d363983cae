use serde::{Deserialize, Serialize};

use crate::driver::{DriverKind, LateralGains, ProfileTable};
use crate::traffic::VehicleGeometry;

/// Inclusive `[lo, hi]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span<T>(pub T, pub T);

impl<T: PartialOrd + Copy> Span<T> {
    pub fn lo(&self) -> T {
        self.0
    }

    pub fn hi(&self) -> T {
        self.1
    }

    pub fn contains(&self, x: T) -> bool {
        self.0 <= x && x <= self.1
    }

    pub fn is_valid(&self) -> bool {
        self.0 <= self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    AllNormal,
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Standard deviation of relative position measurements, m.
    pub sigma_pos: f64,
    /// Standard deviation of relative speed measurements, m/s.
    pub sigma_vel: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma_pos: 0.5,
            sigma_vel: 0.5,
        }
    }
}

/// Initial-condition distribution of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub lanes: Span<usize>,
    /// Total vehicle count including the ego vehicle.
    pub vehicles: Span<usize>,
    pub lane_width: f64,
    /// Other vehicles start within `+-spread` of the ego vehicle.
    pub spread: f64,
    /// Minimum same-lane center distance at spawn.
    pub min_gap: f64,
    pub rear_speed: Span<f64>,
    pub front_speed: Span<f64>,
    pub ego_speed: Span<f64>,
    pub other_desired_speed: Span<f64>,
    pub ego_desired_speed: f64,
    pub episode_length: f64,
    pub profiles: ProfileMode,
    /// Lane-change parameters of the ego when MOBIL drives it.
    pub ego_profile: DriverKind,
    /// Car-following profile of the ego vehicle, shared by every ego policy.
    pub ego_longitudinal: DriverKind,
    /// Distance ahead of the ego vehicle at which the slow blocker spawns.
    pub blocker_gap: Span<f64>,
    /// Desired speed of the blocker; must stay below the ego's.
    pub blocker_desired_speed: Span<f64>,
    pub noise: NoiseConfig,
    pub placement_attempts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lanes: Span(3, 4),
            vehicles: Span(9, 21),
            lane_width: 3.75,
            spread: 200.0,
            min_gap: 25.0,
            rear_speed: Span(15.0, 25.0),
            front_speed: Span(10.0, 18.0),
            ego_speed: Span(10.0, 15.0),
            other_desired_speed: Span(18.0, 26.0),
            ego_desired_speed: 25.0,
            episode_length: 5000.0,
            profiles: ProfileMode::AllNormal,
            ego_profile: DriverKind::Normal,
            ego_longitudinal: DriverKind::Normal,
            blocker_gap: Span(25.0, 45.0),
            blocker_desired_speed: Span(10.0, 18.0),
            noise: NoiseConfig::default(),
            placement_attempts: 1000,
        }
    }
}

impl ScenarioConfig {
    /// Three lanes, eight normal drivers around the ego vehicle, no noise.
    pub fn benchmark_a() -> Self {
        Self {
            lanes: Span(3, 3),
            vehicles: Span(9, 9),
            ..Self::default()
        }
    }

    /// Twenty surrounding vehicles with random driver types and measurement
    /// noise.
    pub fn benchmark_b() -> Self {
        Self {
            lanes: Span(3, 3),
            vehicles: Span(21, 21),
            profiles: ProfileMode::UniformRandom,
            noise: NoiseConfig {
                enabled: true,
                ..NoiseConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let spans = [
            ("rear_speed", self.rear_speed),
            ("front_speed", self.front_speed),
            ("ego_speed", self.ego_speed),
            ("other_desired_speed", self.other_desired_speed),
            ("blocker_gap", self.blocker_gap),
            ("blocker_desired_speed", self.blocker_desired_speed),
        ];
        for (name, s) in spans {
            if !s.is_valid() || s.lo() < 0.0 {
                return Err(format!("{name} must be a non-empty non-negative range"));
            }
        }
        if !self.lanes.is_valid() || self.lanes.lo() < 3 || self.lanes.hi() > 4 {
            return Err("lanes must lie within [3, 4]".into());
        }
        if !self.vehicles.is_valid() || self.vehicles.lo() < 2 {
            return Err("vehicles must be a range with at least two vehicles".into());
        }
        if !(self.min_gap > 0.0 && self.min_gap < self.spread) {
            return Err("min_gap must be positive and smaller than spread".into());
        }
        if self.blocker_gap.lo() < self.min_gap {
            return Err("blocker_gap must respect min_gap".into());
        }
        if !(self.blocker_desired_speed.hi() < self.ego_desired_speed) {
            return Err("the blocker must be slower than the ego's desired speed".into());
        }
        if !(self.ego_desired_speed > 0.0 && self.episode_length > 0.0 && self.lane_width > 0.0) {
            return Err("ego_desired_speed, episode_length and lane_width must be positive".into());
        }
        if self.noise.sigma_pos < 0.0 || self.noise.sigma_vel < 0.0 {
            return Err("noise standard deviations must be non-negative".into());
        }
        Ok(())
    }

    pub fn max_lanes(&self) -> usize {
        self.lanes.hi()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    Full,
    Compact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub mode: ObservationMode,
    /// Vehicle slots in full mode.
    pub full_slots: usize,
    /// Relative distance normalizer (sensor range), m.
    pub sensor_range: f64,
    /// Relative speed normalizer, m/s.
    pub v_max: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            mode: ObservationMode::Full,
            full_slots: 20,
            sensor_range: 100.0,
            v_max: 40.0,
        }
    }
}

/// Traffic unlock: when every lane ahead is held up by slow vehicles and the
/// ego vehicle has stayed slow, one blocker gets a faster desired speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlockConfig {
    pub enabled: bool,
    /// Look-ahead for slow vehicles, m.
    pub range: f64,
    /// Consecutive slow decisions before unlocking.
    pub patience: u32,
    /// Ego counts as slow below `ego_desired_speed - slow_margin`.
    pub slow_margin: f64,
    /// New desired speed is drawn from `[v_d, v_d + boost]`.
    pub boost: f64,
}

impl Default for UnlockConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            range: 100.0,
            patience: 10,
            slow_margin: 2.0,
            boost: 2.0,
        }
    }
}

/// Everything the environment needs besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub scenario: ScenarioConfig,
    pub observation: ObservationConfig,
    pub vehicle: VehicleGeometry,
    pub lateral: LateralGains,
    pub unlock: UnlockConfig,
    pub profiles: ProfileTable,
    /// Physics step, s.
    pub dt: f64,
    /// Physics steps per decision.
    pub substeps: usize,
    /// Ego counts as having reached its desired speed within this margin.
    pub solved_tolerance: f64,
    /// Decision steps after which an episode is truncated even if the
    /// distance budget is not used up.
    pub max_decisions: u64,
    /// Leaders farther ahead than this bumper gap do not enter IDM, m.
    pub leader_range: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::benchmark_a()
    }
}

impl EnvConfig {
    pub fn benchmark_a() -> Self {
        Self::with_scenario(ScenarioConfig::benchmark_a())
    }

    pub fn benchmark_b() -> Self {
        Self::with_scenario(ScenarioConfig::benchmark_b())
    }

    pub fn with_scenario(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            observation: ObservationConfig::default(),
            vehicle: VehicleGeometry::default(),
            lateral: LateralGains::default(),
            unlock: UnlockConfig::default(),
            profiles: ProfileTable::default(),
            dt: 0.1,
            substeps: 10,
            solved_tolerance: 0.1,
            max_decisions: 1500,
            leader_range: 120.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scenario.validate()?;
        let road = crate::traffic::RoadGeometry {
            lane_count: self.scenario.lanes.lo(),
            lane_width: self.scenario.lane_width,
            episode_length: self.scenario.episode_length,
        };
        road.validate()?;
        self.vehicle.validate(&road)?;
        for kind in DriverKind::ALL {
            self.profiles.get(kind).validate()?;
        }
        if !(self.dt > 0.0) || self.substeps == 0 || self.max_decisions == 0 || !(self.leader_range > 0.0) {
            return Err("dt, substeps, max_decisions and leader_range must be positive".into());
        }
        if self.observation.full_slots == 0
            || !(self.observation.sensor_range > 0.0)
            || !(self.observation.v_max > 0.0)
        {
            return Err("observation normalizers and slot count must be positive".into());
        }
        Ok(())
    }

    /// Vehicle slots in the observation vector.
    pub fn observation_slots(&self) -> usize {
        match self.observation.mode {
            ObservationMode::Full => self.observation.full_slots,
            ObservationMode::Compact => 2 * self.scenario.max_lanes(),
        }
    }

    pub fn observation_len(&self) -> usize {
        crate::env::observe::EGO_FEATURES + crate::env::observe::SLOT_FEATURES * self.observation_slots()
    }
}

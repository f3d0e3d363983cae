use crate::env::world::EpisodeStatus;

pub const TERMINAL_REWARD: f64 = 100.0;
pub const LANE_CHANGE_PENALTY: f64 = 1.0;
pub const SAFETY_PENALTY: f64 = 1.0;

/// Per-decision reward. Terminal outcomes pay `+-100` alone; otherwise the
/// ego earns its speed gain over the episode start, normalized by the
/// desired speed, minus lane change and safety penalties.
pub fn compute_reward(
    v_current: f64,
    v_initial: f64,
    v_desired: f64,
    lane_change_executed: bool,
    safety_violation: bool,
    status: EpisodeStatus,
) -> f64 {
    debug_assert!(v_desired > 0.0);
    match status {
        EpisodeStatus::Collided => -TERMINAL_REWARD,
        EpisodeStatus::Solved => TERMINAL_REWARD,
        EpisodeStatus::Running | EpisodeStatus::Truncated => {
            let mut r = (v_current - v_initial) / v_desired;
            if lane_change_executed {
                r -= LANE_CHANGE_PENALTY;
            }
            if safety_violation {
                r -= SAFETY_PENALTY;
            }
            r
        }
    }
}

//! Relative, normalized agent observations and action scaling.
//!
//! The policy never sees absolute positions. It sees its own heading and
//! airspeed, the intruder's heading and airspeed, and range plus tracking angle
//! to both the goal and the intruder, each squashed to `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_heading, ControlInput, Point, VehicleLimits, VehicleState};
use crate::env::{EpisodeState, SimConfig};
use crate::Error;

pub const OBS_DIM: usize = 8;
pub const ACTION_DIM: usize = 2;

/// Field names in serialization order. Recorded in every model file.
pub const OBSERVATION_ORDER: [&str; OBS_DIM] = [
    "heading",
    "airspeed",
    "intruder_heading",
    "intruder_airspeed",
    "dist_goal",
    "dist_intruder",
    "track_goal",
    "track_intruder",
];

pub const ACTION_ORDER: [&str; ACTION_DIM] = ["turn", "accel"];

/// Agent input vector, every component in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub heading_n: f64,
    pub airspeed_n: f64,
    pub intruder_heading_n: f64,
    pub intruder_airspeed_n: f64,
    pub dist_goal_n: f64,
    pub dist_intruder_n: f64,
    pub track_goal_n: f64,
    pub track_intruder_n: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.heading_n,
            self.airspeed_n,
            self.intruder_heading_n,
            self.intruder_airspeed_n,
            self.dist_goal_n,
            self.dist_intruder_n,
            self.track_goal_n,
            self.track_intruder_n,
        ]
    }

    pub fn from_array(v: [f64; OBS_DIM]) -> Self {
        Self {
            heading_n: v[0],
            airspeed_n: v[1],
            intruder_heading_n: v[2],
            intruder_airspeed_n: v[3],
            dist_goal_n: v[4],
            dist_intruder_n: v[5],
            track_goal_n: v[6],
            track_intruder_n: v[7],
        }
    }
}

/// Normalized action: `turn` and `accel` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub turn: f64,
    pub accel: f64,
}

impl ControlCommand {
    pub fn new(turn: f64, accel: f64) -> Self {
        Self { turn, accel }.clamped()
    }

    pub fn clamped(self) -> Self {
        Self {
            turn: self.turn.clamp(-1.0, 1.0),
            accel: self.accel.clamp(-1.0, 1.0),
        }
    }
}

/// Ranges used to scale each observation component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRanges {
    pub heading: (f64, f64),
    pub airspeed: (f64, f64),
    pub intruder_airspeed: (f64, f64),
    pub distance: (f64, f64),
    pub tracking_angle: (f64, f64),
}

impl NormalizationRanges {
    pub fn for_config(config: &SimConfig) -> Self {
        Self {
            heading: (-180.0, 180.0),
            airspeed: (config.agent_limits.v_min, config.agent_limits.v_max),
            intruder_airspeed: (config.intruder_limits.v_min, config.intruder_limits.v_max),
            // World diagonal.
            distance: (0.0, 2.0 * std::f64::consts::SQRT_2 * config.world_half_extent),
            tracking_angle: (-180.0, 180.0),
        }
    }
}

/// Map `value` affinely from `[lo, hi]` onto `[-1, 1]`, clamping first.
///
/// ```
/// use wellclear::observation::normalize;
/// assert_eq!(normalize(75.0, 50.0, 100.0).unwrap(), 0.0);
/// assert_eq!(normalize(120.0, 50.0, 100.0).unwrap(), 1.0);
/// ```
pub fn normalize(value: f64, lo: f64, hi: f64) -> Result<f64, Error> {
    if !(lo < hi) {
        return Err(Error::InvalidRange { lo, hi });
    }
    Ok(2.0 * (value.clamp(lo, hi) - lo) / (hi - lo) - 1.0)
}

/// Inverse of [`normalize`] for inputs already in `[-1, 1]`.
pub fn denormalize(value: f64, lo: f64, hi: f64) -> Result<f64, Error> {
    if !(lo < hi) {
        return Err(Error::InvalidRange { lo, hi });
    }
    Ok(lo + (value.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo))
}

/// Signed angle from the vehicle's heading to the line of sight toward
/// `target`. Positive means the target lies to the right. A target on top of
/// the vehicle gives `0`.
pub fn tracking_angle(from: &VehicleState, target: &Point) -> f64 {
    let here = from.position();
    if here == *target {
        return 0.0;
    }
    wrap_heading(here.bearing_to(target) - from.heading)
}

pub fn build_observation(state: &EpisodeState, config: &SimConfig) -> Observation {
    let ranges = NormalizationRanges::for_config(config);
    observe(&state.agent, &state.intruder, &state.goal, &ranges)
}

/// Observation from raw vehicle states, independent of episode bookkeeping.
pub fn observe(
    agent: &VehicleState,
    intruder: &VehicleState,
    goal: &Point,
    ranges: &NormalizationRanges,
) -> Observation {
    // Ranges come from validated configs, so lo < hi holds.
    let n = |v: f64, (lo, hi): (f64, f64)| 2.0 * (v.clamp(lo, hi) - lo) / (hi - lo) - 1.0;
    let agent_pos = agent.position();
    let intruder_pos = intruder.position();
    Observation {
        heading_n: n(agent.heading, ranges.heading),
        airspeed_n: n(agent.airspeed, ranges.airspeed),
        intruder_heading_n: n(intruder.heading, ranges.heading),
        intruder_airspeed_n: n(intruder.airspeed, ranges.intruder_airspeed),
        dist_goal_n: n(agent_pos.distance(goal), ranges.distance),
        dist_intruder_n: n(agent_pos.distance(&intruder_pos), ranges.distance),
        track_goal_n: n(tracking_angle(agent, goal), ranges.tracking_angle),
        track_intruder_n: n(tracking_angle(agent, &intruder_pos), ranges.tracking_angle),
    }
}

/// Scale a normalized command to physical units. `turn` is symmetric around
/// zero; `accel` maps affinely onto `[accel_min, accel_max]`, so an asymmetric
/// envelope moves the zero point.
pub fn denormalize_action(cmd: ControlCommand, limits: &VehicleLimits) -> ControlInput {
    let cmd = cmd.clamped();
    ControlInput {
        yaw_rate: cmd.turn * limits.yaw_rate_max,
        accel: limits.accel_min + (cmd.accel + 1.0) * 0.5 * (limits.accel_max - limits.accel_min),
    }
}

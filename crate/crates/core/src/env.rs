//! The two-aircraft surrogate encounter.
//!
//! An episode places the agent and the intruder on a common circle, both
//! pointed at its center, so their paths cross. The agent must hold the
//! separation minimum and reach the diametrically opposite point of its own
//! spawn (its goal on the original route) before time runs out. Rewards are
//! sparse: zero on every step except the terminating one.
//!
//! Each step updates the intruder (controller, then dynamics), then the agent,
//! then evaluates conflict, termination and score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{step_vehicle, wrap_heading, ControlInput, Point, VehicleLimits, VehicleState};
use crate::observation::{build_observation, denormalize_action, tracking_angle, ControlCommand, Observation};
use crate::Error;

/// Terminal scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub violation: f64,
    pub timeout_miss: f64,
    pub goal_return: f64,
}

impl Default for RewardTable {
    fn default() -> Self {
        Self {
            violation: -100.0,
            timeout_miss: -10.0,
            goal_return: 100.0,
        }
    }
}

/// Gains of the intruder's waypoint-following controller.
///
/// The defaults make it a pure proportional heading controller with a
/// proportional speed hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    /// deg/s of yaw rate per degree of tracking error.
    pub kp: f64,
    /// deg/s of yaw rate per deg/s of tracking-error rate.
    pub kd: f64,
    /// m/s² per m/s of speed error.
    pub kv: f64,
    /// A route waypoint counts as passed inside this radius, meters.
    pub advance_radius: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: 1.0,
            kd: 0.0,
            kv: 0.1,
            advance_radius: 300.0,
        }
    }
}

/// Parameters of the surrogate simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    /// Episode time limit, seconds.
    pub t_max: f64,
    /// The world spans `[-world_half_extent, world_half_extent]` on both axes.
    pub world_half_extent: f64,
    /// Minimum horizontal separation, meters. Strictly closer is a violation.
    pub separation_min: f64,
    /// The agent has returned to its route once within this distance of the goal.
    pub goal_capture_radius: f64,
    pub agent_limits: VehicleLimits,
    pub intruder_limits: VehicleLimits,
    /// Radius range of the spawn circle, meters.
    pub init_radius_range: (f64, f64),
    /// Minimum angular gap between the two spawn points on the circle, degrees.
    pub min_spawn_angle: f64,
    pub reward_table: RewardTable,
    pub intruder_gains: ControllerGains,
    /// With `false` the intruder is still flown but can never cause a violation.
    pub intruder_enabled: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            t_max: 300.0,
            world_half_extent: 10_000.0,
            separation_min: 1000.0,
            goal_capture_radius: 500.0,
            agent_limits: VehicleLimits::SURROGATE,
            intruder_limits: VehicleLimits::SURROGATE,
            init_radius_range: (5000.0, 8000.0),
            min_spawn_angle: 30.0,
            reward_table: RewardTable::default(),
            intruder_gains: ControllerGains::default(),
            intruder_enabled: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// The go-to-goal variant: identical, except the intruder cannot conflict.
    pub fn without_intruder(mut self) -> Self {
        self.intruder_enabled = false;
        self
    }

    /// Steps until timeout.
    pub fn max_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil() as usize
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_max >= self.dt) {
            return bad("t_max must be at least dt");
        }
        if !(self.separation_min > 0.0) || !(self.goal_capture_radius > 0.0) {
            return bad("separation_min and goal_capture_radius must be positive");
        }
        if !(self.world_half_extent > 0.0) {
            return bad("world_half_extent must be positive");
        }
        self.agent_limits.validate()?;
        self.intruder_limits.validate()?;
        let rt = &self.reward_table;
        if !(rt.violation < rt.timeout_miss && rt.timeout_miss < rt.goal_return) {
            return bad("reward table must order violation < timeout_miss < goal_return");
        }
        let (lo, hi) = self.init_radius_range;
        if !(lo <= hi) || hi > self.world_half_extent {
            return bad("init_radius_range must be ordered and inside the world");
        }
        if lo < self.separation_min {
            return bad("spawn radius below the separation minimum");
        }
        if !(0.0..180.0).contains(&self.min_spawn_angle) {
            return bad("min_spawn_angle must lie in [0, 180)");
        }
        Ok(())
    }
}

/// Episode status. Anything but `Running` is terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    GoalReached,
    SeparationViolated,
    TimedOut,
    OutOfBounds,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }

    /// Terminal score for this status; zero while running.
    pub fn reward(self, table: &RewardTable) -> f64 {
        match self {
            Status::Running => 0.0,
            Status::GoalReached => table.goal_return,
            Status::SeparationViolated => table.violation,
            Status::TimedOut | Status::OutOfBounds => table.timeout_miss,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "Running",
            Status::GoalReached => "GoalReached",
            Status::SeparationViolated => "SeparationViolated",
            Status::TimedOut => "TimedOut",
            Status::OutOfBounds => "OutOfBounds",
        }
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "Running" => Status::Running,
            "GoalReached" => Status::GoalReached,
            "SeparationViolated" => Status::SeparationViolated,
            "TimedOut" => Status::TimedOut,
            "OutOfBounds" => Status::OutOfBounds,
            other => return Err(Error::Parse(format!("unknown status {other:?}"))),
        })
    }
}

/// Full simulator state of one encounter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    /// Seconds elapsed.
    pub t: f64,
    pub steps: usize,
    pub agent: VehicleState,
    pub intruder: VehicleState,
    pub goal: Point,
    pub intruder_route: Vec<Point>,
    /// Index of the route waypoint the intruder is currently flying to.
    pub route_cursor: usize,
    pub intruder_target_speed: f64,
    /// Tracking angle to the active waypoint on the previous step (D-term memory).
    pub prev_waypoint_angle: Option<f64>,
    pub status: Status,
    pub min_separation: f64,
}

impl EpisodeState {
    /// A running episode from explicit initial conditions. The intruder holds
    /// its initial airspeed.
    pub fn new(agent: VehicleState, intruder: VehicleState, goal: Point, intruder_route: Vec<Point>) -> Self {
        Self {
            t: 0.0,
            steps: 0,
            agent,
            intruder,
            goal,
            intruder_route,
            route_cursor: 0,
            intruder_target_speed: intruder.airspeed,
            prev_waypoint_angle: None,
            status: Status::Running,
            min_separation: separation(&agent, &intruder),
        }
    }

    pub fn separation(&self) -> f64 {
        separation(&self.agent, &self.intruder)
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.agent.position().distance(&self.goal)
    }

    fn advance_route(&mut self, radius: f64) {
        let here = self.intruder.position();
        while let Some(wp) = self.intruder_route.get(self.route_cursor) {
            if here.distance(wp) < radius {
                self.route_cursor += 1;
            } else {
                break;
            }
        }
    }
}

/// Euclidean distance between the two aircraft.
pub fn separation(a: &VehicleState, b: &VehicleState) -> f64 {
    a.position().distance(&b.position())
}

/// Distance between agent and intruder in `state`.
pub fn min_separation(state: &EpisodeState) -> f64 {
    state.separation()
}

/// Diagnostics attached to each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub status: Status,
    pub separation: f64,
    pub min_separation: f64,
    pub distance_to_goal: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

/// Sample a conflict-prone encounter.
///
/// Both aircraft start on a circle of random radius centered on the origin,
/// at least `min_spawn_angle` apart, heading for the center at random speeds.
/// The agent's goal is the far end of its diameter; the intruder's route runs
/// through the center to the far end of its own.
pub fn reset(config: &SimConfig, seed: u64) -> Result<EpisodeState, Error> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = config.init_radius_range;
    let radius = if lo < hi { rng.gen_range(lo..hi) } else { lo };
    let agent_angle: f64 = rng.gen_range(0.0..360.0);
    let intruder_angle = loop {
        let candidate: f64 = rng.gen_range(0.0..360.0);
        if wrap_heading(candidate - agent_angle).abs() >= config.min_spawn_angle {
            break candidate;
        }
    };
    let on_circle = |deg: f64| {
        let rad = deg.to_radians();
        Point::new(radius * rad.sin(), radius * rad.cos())
    };
    let agent_pos = on_circle(agent_angle);
    let intruder_pos = on_circle(intruder_angle);
    let agent_speed = sample_speed(&mut rng, &config.agent_limits);
    let intruder_speed = sample_speed(&mut rng, &config.intruder_limits);
    let agent = VehicleState::new(
        agent_pos.x,
        agent_pos.y,
        agent_pos.bearing_to(&Point::ORIGIN),
        agent_speed,
    );
    let intruder = VehicleState::new(
        intruder_pos.x,
        intruder_pos.y,
        intruder_pos.bearing_to(&Point::ORIGIN),
        intruder_speed,
    );
    let goal = Point::new(-agent_pos.x, -agent_pos.y);
    let route = vec![Point::ORIGIN, Point::new(-intruder_pos.x, -intruder_pos.y)];
    Ok(EpisodeState::new(agent, intruder, goal, route))
}

fn sample_speed(rng: &mut ChaCha8Rng, limits: &VehicleLimits) -> f64 {
    rng.gen_range(limits.v_min..=limits.v_max)
}

/// Yaw-rate and acceleration demand of the intruder's waypoint follower.
///
/// Steers toward the active route waypoint with a PD law on the tracking angle
/// and holds the target speed with a P law. Past the end of the route it holds
/// heading.
pub fn intruder_control(
    state: &EpisodeState,
    gains: &ControllerGains,
    limits: &VehicleLimits,
    dt: f64,
) -> ControlInput {
    let accel = gains.kv * (state.intruder_target_speed - state.intruder.airspeed);
    let yaw_rate = match state.intruder_route.get(state.route_cursor) {
        Some(wp) => {
            let angle = tracking_angle(&state.intruder, wp);
            let rate = state
                .prev_waypoint_angle
                .map_or(0.0, |prev| wrap_heading(angle - prev) / dt);
            gains.kp * angle + gains.kd * rate
        }
        None => 0.0,
    };
    limits.clamp_input(ControlInput { yaw_rate, accel })
}

/// Move both aircraft by one `dt` without judging the outcome: the intruder
/// first (controller, input, dynamics), then the agent. Updates time and the
/// running minimum separation and returns the new separation.
pub fn advance(state: &mut EpisodeState, action: ControlCommand, config: &SimConfig) -> f64 {
    let dt = config.dt;

    state.advance_route(config.intruder_gains.advance_radius);
    let intruder_input = intruder_control(state, &config.intruder_gains, &config.intruder_limits, dt);
    state.prev_waypoint_angle = state
        .intruder_route
        .get(state.route_cursor)
        .map(|wp| tracking_angle(&state.intruder, wp));
    state.intruder = step_vehicle(&state.intruder, intruder_input, dt, &config.intruder_limits);

    let agent_input = denormalize_action(action, &config.agent_limits);
    state.agent = step_vehicle(&state.agent, agent_input, dt, &config.agent_limits);

    state.steps += 1;
    state.t = state.steps as f64 * dt;
    let sep = state.separation();
    state.min_separation = state.min_separation.min(sep);
    sep
}

/// Advance the episode by one `dt` and score it.
pub fn step(state: &mut EpisodeState, action: ControlCommand, config: &SimConfig) -> Result<StepResult, Error> {
    if state.status.is_terminal() {
        return Err(Error::EpisodeTerminated(state.status));
    }
    let sep = advance(state, action, config);

    // Conflict, termination, score.
    let dist_goal = state.distance_to_goal();
    let bound = config.world_half_extent;
    state.status = if config.intruder_enabled && sep < config.separation_min {
        Status::SeparationViolated
    } else if dist_goal <= config.goal_capture_radius {
        Status::GoalReached
    } else if state.steps >= config.max_steps() {
        Status::TimedOut
    } else if state.agent.x.abs() > bound || state.agent.y.abs() > bound {
        Status::OutOfBounds
    } else {
        Status::Running
    };

    Ok(StepResult {
        observation: build_observation(state, config),
        reward: state.status.reward(&config.reward_table),
        terminated: state.status.is_terminal(),
        info: StepInfo {
            status: state.status,
            separation: sep,
            min_separation: state.min_separation,
            distance_to_goal: dist_goal,
            t: state.t,
        },
    })
}

//! Runtime trajectory generation.
//!
//! Given own-ship and intruder states in geographic coordinates plus the
//! original route, the runner picks a goal waypoint on the route, projects
//! everything into a local tangent plane and rolls the deterministic policy
//! through the surrogate dynamics. Every 20 simulated seconds the agent's
//! position becomes a waypoint; after 19 of them the goal itself closes the
//! trajectory. The rollout is then replayed against a constant-velocity
//! intruder to decide whether the plan is acceptable.
//!
//! Requests and responses are newline-delimited JSON so the runner can sit
//! behind any transport: stdin/stdout, a file, or a socket bridge.

use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_heading, Point, VehicleLimits, VehicleState};
use crate::env::{advance, EpisodeState, SimConfig};
use crate::geo::{GeoPoint, LocalFrame};
use crate::observation::observe;
use crate::policy::PolicyModel;
use crate::Error;

/// Aircraft state as reported in geographic coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoState {
    /// Degrees.
    pub lat: f64,
    /// Degrees.
    pub lon: f64,
    /// Degrees true, 0 = north, clockwise.
    pub heading: f64,
    /// m/s.
    pub ground_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteWaypoint {
    pub index: i64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceRequest {
    pub request_id: String,
    pub own_ship: GeoState,
    pub intruder: GeoState,
    pub original_route: Vec<RouteWaypoint>,
    pub frame_origin: GeoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub index: i64,
    pub lat: f64,
    pub lon: f64,
    /// Seconds after the request.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub valid: bool,
    /// Meters, over the 1 s rollout up to goal capture.
    pub min_predicted_separation: f64,
    /// Seconds into the rollout at which the goal was first captured.
    pub goal_reached_at: Option<f64>,
    /// `true` when no route waypoint cleared the safety margin and the last
    /// one was used.
    pub fallback_goal: bool,
    pub generation_time_ms: f64,
}

/// Knobs of the runtime generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    pub sim: SimConfig,
    /// Simulation steps between consecutive waypoints.
    pub steps_per_waypoint: usize,
    /// Waypoints produced by the policy; the goal is appended after them.
    pub generated_waypoints: usize,
    /// A route waypoint is safe when the extrapolated intruder is at least
    /// this many separation minima away from it.
    pub safe_margin: f64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            steps_per_waypoint: 20,
            generated_waypoints: 19,
            safe_margin: 2.0,
        }
    }
}

impl RunnerConfig {
    /// Seconds between consecutive waypoints.
    pub fn spacing(&self) -> f64 {
        self.steps_per_waypoint as f64 * self.sim.dt
    }

    pub fn total_waypoints(&self) -> usize {
        self.generated_waypoints + 1
    }
}

/// The request expressed in the local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEncounter {
    pub frame: LocalFrame,
    pub own_ship: VehicleState,
    pub intruder: VehicleState,
    /// Route waypoints in local meters, same order as the request.
    pub route: Vec<(i64, Point)>,
}

impl LocalEncounter {
    pub fn from_request(request: &AvoidanceRequest) -> Result<Self, Error> {
        validate_request(request)?;
        let frame = LocalFrame::new(request.frame_origin)?;
        let vehicle = |s: &GeoState| -> Result<VehicleState, Error> {
            let p = frame.to_local(GeoPoint::new(s.lat, s.lon))?;
            Ok(VehicleState::new(p.x, p.y, s.heading, s.ground_speed))
        };
        let route = request
            .original_route
            .iter()
            .map(|w| Ok((w.index, frame.to_local(GeoPoint::new(w.lat, w.lon))?)))
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(Self {
            frame,
            own_ship: vehicle(&request.own_ship)?,
            intruder: vehicle(&request.intruder)?,
            route,
        })
    }

    /// Intruder position after `t` seconds of straight, constant-speed flight.
    pub fn intruder_at(&self, t: f64) -> Point {
        let (vx, vy) = self.intruder.velocity();
        Point::new(self.intruder.x + vx * t, self.intruder.y + vy * t)
    }
}

fn validate_request(request: &AvoidanceRequest) -> Result<(), Error> {
    let bad = |msg: String| Err(Error::InvalidRequest(msg));
    if request.original_route.is_empty() {
        return bad("original_route is empty".into());
    }
    for pair in request.original_route.windows(2) {
        if pair[1].index <= pair[0].index {
            return bad(format!(
                "route indices must strictly increase ({} then {})",
                pair[0].index, pair[1].index
            ));
        }
    }
    for (name, s) in [("own_ship", &request.own_ship), ("intruder", &request.intruder)] {
        if ![s.lat, s.lon, s.heading, s.ground_speed].iter().all(|v| v.is_finite()) {
            return bad(format!("{name} has a non-finite field"));
        }
        if s.ground_speed <= 0.0 {
            return bad(format!("{name} ground_speed must be positive"));
        }
    }
    Ok(())
}

/// A route waypoint is ahead when it lies within ±90° of the own-ship heading.
fn is_ahead(own: &VehicleState, p: &Point) -> bool {
    let here = own.position();
    here != *p && wrap_heading(here.bearing_to(p) - own.heading).abs() < 90.0
}

/// The chosen goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalChoice {
    pub index: i64,
    pub position: Point,
    pub fallback: bool,
}

/// First route waypoint ahead of own-ship that the intruder will be well clear
/// of when own-ship would get there flying straight; otherwise the last one.
pub fn select_goal(encounter: &LocalEncounter, config: &RunnerConfig) -> Result<GoalChoice, Error> {
    let own = &encounter.own_ship;
    let margin = config.safe_margin * config.sim.separation_min;
    let mut ahead = encounter
        .route
        .iter()
        .skip_while(|(_, p)| !is_ahead(own, p))
        .peekable();
    if ahead.peek().is_none() {
        return Err(Error::InvalidRequest("no route waypoint ahead of own-ship".into()));
    }
    for &(index, p) in ahead {
        let eta = own.position().distance(&p) / own.airspeed;
        if encounter.intruder_at(eta).distance(&p) >= margin {
            return Ok(GoalChoice { index, position: p, fallback: false });
        }
    }
    let &(index, position) = encounter.route.last().expect("route checked non-empty");
    Ok(GoalChoice { index, position, fallback: true })
}

/// The 1 s-resolution record behind a trajectory, in the local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Agent state at `t = 0, dt, 2dt, ...`.
    pub agent: Vec<VehicleState>,
    /// Simulated intruder state at the same instants.
    pub intruder: Vec<VehicleState>,
    pub goal: GoalChoice,
    pub dt: f64,
}

impl Rollout {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.agent.len()).map(move |k| k as f64 * self.dt)
    }
}

/// Limits that let the intruder keep whatever speed it reports.
fn passthrough_limits(base: &VehicleLimits, speed: f64) -> VehicleLimits {
    VehicleLimits {
        v_min: base.v_min.min(speed),
        v_max: base.v_max.max(speed),
        position_bound: f64::INFINITY,
        ..*base
    }
}

/// Roll the deterministic policy for `generated_waypoints * steps_per_waypoint`
/// steps. The episode is never terminated early: goal capture and separation
/// are judged afterwards from the recorded path.
pub fn rollout(encounter: &LocalEncounter, goal: GoalChoice, model: &PolicyModel, config: &RunnerConfig) -> Rollout {
    let mut sim = config.sim.clone();
    sim.intruder_limits = passthrough_limits(&sim.intruder_limits, encounter.intruder.airspeed);
    // No route: the intruder holds heading and speed.
    let mut state = EpisodeState::new(encounter.own_ship, encounter.intruder, goal.position, Vec::new());
    let n = config.generated_waypoints * config.steps_per_waypoint;
    let mut agent = Vec::with_capacity(n + 1);
    let mut intruder = Vec::with_capacity(n + 1);
    agent.push(state.agent);
    intruder.push(state.intruder);
    for _ in 0..n {
        let obs = observe(&state.agent, &state.intruder, &state.goal, &model.normalization);
        let action = model.actor_forward(&obs).mode();
        advance(&mut state, action, &sim);
        agent.push(state.agent);
        intruder.push(state.intruder);
    }
    Rollout { agent, intruder, goal, dt: sim.dt }
}

/// Outcome of replaying a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub valid: bool,
    pub min_predicted_separation: f64,
    pub goal_reached_at: Option<f64>,
}

/// Replay the rollout against the closed-form constant-velocity intruder.
///
/// Valid when the separation never drops below the minimum and the agent comes
/// within the capture radius of the goal. Once the goal is captured the plan
/// has rejoined the route, so separation is judged up to that instant.
pub fn validate_rollout(rollout: &Rollout, encounter: &LocalEncounter, config: &RunnerConfig) -> Validation {
    let mut min_sep = f64::INFINITY;
    let mut reached = None;
    for (state, t) in rollout.agent.iter().zip(rollout.times()) {
        let sep = state.position().distance(&encounter.intruder_at(t));
        min_sep = min_sep.min(sep);
        if state.position().distance(&rollout.goal.position) <= config.sim.goal_capture_radius {
            reached = Some(t);
            break;
        }
    }
    Validation {
        valid: min_sep >= config.sim.separation_min && reached.is_some(),
        min_predicted_separation: min_sep,
        goal_reached_at: reached,
    }
}

/// Validity of an already generated trajectory, by regenerating its rollout.
pub fn validate_trajectory(
    request: &AvoidanceRequest,
    model: &PolicyModel,
    config: &RunnerConfig,
) -> Result<Validation, Error> {
    let encounter = LocalEncounter::from_request(request)?;
    let goal = select_goal(&encounter, config)?;
    Ok(validate_rollout(&rollout(&encounter, goal, model, config), &encounter, config))
}

/// Full pipeline for one request.
pub fn generate_trajectory(
    request: &AvoidanceRequest,
    model: &PolicyModel,
    config: &RunnerConfig,
) -> Result<Trajectory, Error> {
    generate_with_rollout(request, model, config).map(|(t, _)| t)
}

/// Like [`generate_trajectory`], also returning the local-frame rollout.
pub fn generate_with_rollout(
    request: &AvoidanceRequest,
    model: &PolicyModel,
    config: &RunnerConfig,
) -> Result<(Trajectory, Rollout), Error> {
    let started = Instant::now();
    let encounter = LocalEncounter::from_request(request)?;
    let goal = select_goal(&encounter, config)?;
    let rollout = rollout(&encounter, goal, model, config);
    let check = validate_rollout(&rollout, &encounter, config);

    let spacing = config.spacing();
    let n = config.generated_waypoints;
    let mut waypoints: Vec<Waypoint> = (1..=n)
        .map(|k| {
            let s = rollout.agent[k * config.steps_per_waypoint];
            let g = encounter.frame.to_geo(s.position());
            Waypoint {
                index: goal.index - (n + 1 - k) as i64,
                lat: g.lat,
                lon: g.lon,
                eta: k as f64 * spacing,
            }
        })
        .collect();
    let goal_geo = request
        .original_route
        .iter()
        .find(|w| w.index == goal.index)
        .expect("goal comes from the route");
    waypoints.push(Waypoint {
        index: goal.index,
        lat: goal_geo.lat,
        lon: goal_geo.lon,
        eta: (n + 1) as f64 * spacing,
    });
    let trajectory = Trajectory {
        waypoints,
        valid: check.valid,
        min_predicted_separation: check.min_predicted_separation,
        goal_reached_at: check.goal_reached_at,
        fallback_goal: goal.fallback,
        generation_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((trajectory, rollout))
}

/// One line of runner output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Response {
    Ok {
        request_id: String,
        trajectory: Trajectory,
    },
    Error {
        request_id: Option<String>,
        kind: String,
        message: String,
    },
}

impl Response {
    pub fn request_id(&self) -> Option<&str> {
        match self {
            Response::Ok { request_id, .. } => Some(request_id),
            Response::Error { request_id, .. } => request_id.as_deref(),
        }
    }
}

/// Answer one request line.
pub fn handle_line(line: &str, model: &PolicyModel, config: &RunnerConfig) -> Response {
    let error = |request_id: Option<String>, kind: &str, message: String| Response::Error {
        request_id,
        kind: kind.to_string(),
        message,
    };
    let value: serde_json::Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error(None, "parse", e.to_string()),
    };
    let request_id = value
        .get("request_id")
        .and_then(|v| v.as_str())
        .map(str::to_string);
    let request: AvoidanceRequest = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return error(request_id, "schema", e.to_string()),
    };
    match generate_trajectory(&request, model, config) {
        Ok(trajectory) => Response::Ok {
            request_id: request.request_id,
            trajectory,
        },
        Err(e) => error(request_id, "request", e.to_string()),
    }
}

/// Counters reported when the input stream ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub requests: usize,
    pub errors: usize,
}

/// Read newline-delimited requests until EOF, writing one response line per
/// non-blank input line. Bad requests produce error responses; only I/O
/// failures stop the loop.
pub fn serve<R: BufRead, W: Write>(
    model: &PolicyModel,
    config: &RunnerConfig,
    input: R,
    mut output: W,
) -> std::io::Result<ServeStats> {
    let mut stats = ServeStats::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(&line, model, config);
        stats.requests += 1;
        if matches!(response, Response::Error { .. }) {
            stats.errors += 1;
        }
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(stats)
}

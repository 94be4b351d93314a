//! Monte-Carlo evaluation and scripted encounter studies.
//!
//! [`batch_evaluate`] flies the deterministic policy through `n` freshly
//! sampled encounters and aggregates outcomes, including a histogram over the
//! initial range and relative bearing to the intruder. [`run_scenarios`] flies
//! fixed encounters and keeps a per-second log for plotting.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Point, VehicleState};
use crate::env::{reset, step, EpisodeState, SimConfig, Status};
use crate::geo::{GeoPoint, LocalFrame};
use crate::observation::{build_observation, tracking_angle, ControlCommand};
use crate::policy::PolicyModel;
use crate::runner::{rollout, select_goal, LocalEncounter, RunnerConfig};
use crate::scenario::Scenario;
use crate::Error;

pub const ANGLE_BINS: usize = 36;
pub const DISTANCE_BINS: usize = 20;

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    /// Initial agent-intruder range, meters.
    pub initial_distance: f64,
    /// Initial tracking angle from the agent to the intruder, degrees.
    pub initial_angle: f64,
    /// Whether straight, constant-speed flight would have lost separation.
    pub conflict: bool,
    pub outcome: Status,
    pub min_separation: f64,
    pub final_goal_distance: f64,
    pub reward: f64,
    /// Seconds.
    pub length: f64,
}

/// Counts over `(angle, distance)` cells of the initial geometry.
/// `cells[d][a]`: distance bin `d`, angle bin `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub distance_max: f64,
    pub all: Vec<Vec<u64>>,
    pub failures: Vec<Vec<u64>>,
}

impl Heatmap {
    pub fn new(distance_max: f64) -> Self {
        Self {
            distance_max,
            all: vec![vec![0; ANGLE_BINS]; DISTANCE_BINS],
            failures: vec![vec![0; ANGLE_BINS]; DISTANCE_BINS],
        }
    }

    /// Angle bins are 10° wide from -180°; distance bins split
    /// `[0, distance_max]` evenly, the last one open-ended.
    pub fn cell(&self, angle: f64, distance: f64) -> (usize, usize) {
        let a = (((angle + 180.0) / 360.0 * ANGLE_BINS as f64).floor().max(0.0) as usize).min(ANGLE_BINS - 1);
        let d = ((distance / self.distance_max * DISTANCE_BINS as f64).floor().max(0.0) as usize).min(DISTANCE_BINS - 1);
        (d, a)
    }

    pub fn add(&mut self, record: &EpisodeRecord) {
        let (d, a) = self.cell(record.initial_angle, record.initial_distance);
        self.all[d][a] += 1;
        if record.outcome != Status::GoalReached {
            self.failures[d][a] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.all.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n: usize,
    pub successes: usize,
    pub violations: usize,
    pub timeouts: usize,
    pub out_of_bounds: usize,
    pub success_rate: f64,
    pub violation_rate: f64,
    pub timeout_rate: f64,
    pub out_of_bounds_rate: f64,
    pub mean_reward: f64,
    /// Episodes whose straight-line flight would have lost separation.
    pub conflict_episodes: usize,
    /// Success rate over conflict episodes only.
    pub conflict_success_rate: f64,
    pub heatmap: Heatmap,
}

impl BatchSummary {
    /// Aggregate in a fixed order of the records, so the result does not
    /// depend on which episode finished first.
    pub fn from_records(records: &[EpisodeRecord], distance_max: f64) -> Self {
        let mut sorted: Vec<&EpisodeRecord> = records.iter().collect();
        sorted.sort_by_key(|r| r.seed);
        let n = sorted.len();
        let count = |s: Status| sorted.iter().filter(|r| r.outcome == s).count();
        let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let mut heatmap = Heatmap::new(distance_max);
        sorted.iter().for_each(|r| heatmap.add(r));
        let conflicts: Vec<_> = sorted.iter().filter(|r| r.conflict).collect();
        let conflict_successes = conflicts.iter().filter(|r| r.outcome == Status::GoalReached).count();
        let successes = count(Status::GoalReached);
        let violations = count(Status::SeparationViolated);
        let timeouts = count(Status::TimedOut);
        let out_of_bounds = count(Status::OutOfBounds);
        Self {
            n,
            successes,
            violations,
            timeouts,
            out_of_bounds,
            success_rate: rate(successes),
            violation_rate: rate(violations),
            timeout_rate: rate(timeouts),
            out_of_bounds_rate: rate(out_of_bounds),
            mean_reward: if n == 0 { 0.0 } else { sorted.iter().map(|r| r.reward).sum::<f64>() / n as f64 },
            conflict_episodes: conflicts.len(),
            conflict_success_rate: if conflicts.is_empty() {
                0.0
            } else {
                conflict_successes as f64 / conflicts.len() as f64
            },
            heatmap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub summary: BatchSummary,
    pub records: Vec<EpisodeRecord>,
}

/// Would constant-heading, constant-speed flight of both aircraft lose
/// separation before the agent's goal or the time limit?
pub fn straight_line_conflict(initial: &EpisodeState, config: &SimConfig) -> bool {
    let mut cfg = config.clone();
    cfg.intruder_enabled = true;
    let mut state = initial.clone();
    let hold = ControlCommand::new(0.0, neutral_accel(config));
    while !state.status.is_terminal() {
        if step(&mut state, hold, &cfg).is_err() {
            break;
        }
    }
    state.status == Status::SeparationViolated
}

/// Normalized acceleration command that maps to zero physical acceleration.
fn neutral_accel(config: &SimConfig) -> f64 {
    let l = &config.agent_limits;
    2.0 * (0.0 - l.accel_min) / (l.accel_max - l.accel_min) - 1.0
}

/// Fly one episode with the deterministic policy, optionally recording every
/// state.
pub fn run_episode(
    model: &PolicyModel,
    config: &SimConfig,
    mut state: EpisodeState,
    mut log: Option<&mut Vec<(EpisodeState, ControlCommand)>>,
) -> Result<(EpisodeState, f64), Error> {
    let mut total = 0.0;
    while !state.status.is_terminal() {
        let obs = build_observation(&state, config);
        let action = model.actor_forward(&obs).mode();
        let result = step(&mut state, action, config)?;
        total += result.reward;
        if let Some(log) = log.as_deref_mut() {
            log.push((state.clone(), action));
        }
    }
    Ok((state, total))
}

pub fn evaluate_seed(model: &PolicyModel, config: &SimConfig, seed: u64) -> Result<EpisodeRecord, Error> {
    let initial = reset(config, seed)?;
    let conflict = straight_line_conflict(&initial, config);
    let (end, reward) = run_episode(model, config, initial.clone(), None)?;
    Ok(EpisodeRecord {
        seed,
        initial_distance: initial.separation(),
        initial_angle: tracking_angle(&initial.agent, &initial.intruder.position()),
        conflict,
        outcome: end.status,
        min_separation: end.min_separation,
        final_goal_distance: end.distance_to_goal(),
        reward,
        length: end.t,
    })
}

/// Evaluate `n` episodes seeded `seed, seed + 1, ...`. Episodes run in
/// parallel; records come back in seed order.
pub fn batch_evaluate(model: &PolicyModel, config: &SimConfig, n: usize, seed: u64) -> Result<BatchReport, Error> {
    if n == 0 {
        return Err(Error::InvalidConfig("batch needs at least one episode".into()));
    }
    config.validate()?;
    let records = (0..n as u64)
        .into_par_iter()
        .map(|k| evaluate_seed(model, config, seed + k))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = BatchSummary::from_records(&records, 2.0 * config.init_radius_range.1);
    Ok(BatchReport { summary, records })
}

/// One row per simulated second of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub t: f64,
    pub agent_x: f64,
    pub agent_y: f64,
    pub agent_heading: f64,
    pub agent_airspeed: f64,
    pub intruder_x: f64,
    pub intruder_y: f64,
    pub intruder_heading: f64,
    pub intruder_airspeed: f64,
    pub turn_cmd: f64,
    pub accel_cmd: f64,
    pub separation: f64,
    pub goal_distance: f64,
    /// Index into the commanded waypoint list of the leg being flown.
    pub active_waypoint: usize,
    /// Distance from the agent to the commanded waypoint polyline, meters.
    pub cross_track_error: f64,
}

/// A commanded waypoint in local meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalWaypoint {
    pub x: f64,
    pub y: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub name: String,
    pub outcome: Status,
    pub min_separation: f64,
    pub reward: f64,
    pub waypoints: Vec<LocalWaypoint>,
    pub rows: Vec<ScenarioRow>,
}

/// Distance from `p` to the segment `a`-`b`.
fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let s = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point::new(a.x + s * dx, a.y + s * dy))
}

/// Waypoints the runner would command at the start of `scenario`.
pub fn commanded_waypoints(scenario: &Scenario, model: &PolicyModel, config: &RunnerConfig) -> Result<Vec<LocalWaypoint>, Error> {
    let frame = LocalFrame::new(GeoPoint::new(0.0, 0.0))?;
    let state = scenario.to_episode();
    let encounter = LocalEncounter {
        frame,
        own_ship: state.agent,
        intruder: state.intruder,
        route: vec![(1, scenario.goal)],
    };
    let goal = select_goal(&encounter, config)?;
    let roll = rollout(&encounter, goal, model, config);
    let spacing = config.spacing();
    let mut wps: Vec<LocalWaypoint> = (1..=config.generated_waypoints)
        .map(|k| {
            let s: &VehicleState = &roll.agent[k * config.steps_per_waypoint];
            LocalWaypoint { x: s.x, y: s.y, eta: k as f64 * spacing }
        })
        .collect();
    wps.push(LocalWaypoint {
        x: scenario.goal.x,
        y: scenario.goal.y,
        eta: (config.generated_waypoints + 1) as f64 * spacing,
    });
    Ok(wps)
}

/// Fly a fixed scenario and log it.
pub fn run_scenario(scenario: &Scenario, model: &PolicyModel, config: &RunnerConfig) -> Result<ScenarioLog, Error> {
    let waypoints = commanded_waypoints(scenario, model, config)?;
    let start = scenario.to_episode();
    let mut polyline = vec![start.agent.position()];
    polyline.extend(waypoints.iter().map(|w| Point::new(w.x, w.y)));

    let mut log = Vec::new();
    let (end, reward) = run_episode(model, &config.sim, start, Some(&mut log))?;
    let rows = log
        .iter()
        .map(|(s, cmd)| {
            let p = s.agent.position();
            let active = waypoints
                .iter()
                .position(|w| w.eta >= s.t)
                .unwrap_or(waypoints.len() - 1);
            let cross_track = polyline
                .windows(2)
                .map(|seg| segment_distance(&p, &seg[0], &seg[1]))
                .fold(f64::INFINITY, f64::min);
            ScenarioRow {
                t: s.t,
                agent_x: s.agent.x,
                agent_y: s.agent.y,
                agent_heading: s.agent.heading,
                agent_airspeed: s.agent.airspeed,
                intruder_x: s.intruder.x,
                intruder_y: s.intruder.y,
                intruder_heading: s.intruder.heading,
                intruder_airspeed: s.intruder.airspeed,
                turn_cmd: cmd.turn,
                accel_cmd: cmd.accel,
                separation: s.separation(),
                goal_distance: s.distance_to_goal(),
                active_waypoint: active,
                cross_track_error: cross_track,
            }
        })
        .collect();
    Ok(ScenarioLog {
        name: scenario.name.clone(),
        outcome: end.status,
        min_separation: end.min_separation,
        reward,
        waypoints,
        rows,
    })
}

/// Load and fly each scenario file.
pub fn run_scenarios<P: AsRef<Path>>(model: &PolicyModel, files: &[P], config: &RunnerConfig) -> Result<Vec<ScenarioLog>, Error> {
    files
        .iter()
        .map(|f| run_scenario(&Scenario::load(f)?, model, config))
        .collect()
}

pub fn write_scenario_log(log: &ScenarioLog, dir: impl AsRef<Path>) -> Result<(), Error> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", log.name)))?;
    for row in &log.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_path(dir.join(format!("{}_waypoints.csv", log.name)))?;
    for wp in &log.waypoints {
        w.serialize(wp)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Write `records.csv`, `heatmap_all.csv`, `heatmap_failures.csv` and
/// `summary.json` into `dir`.
pub fn export(summary: &BatchSummary, records: &[EpisodeRecord], dir: impl AsRef<Path>) -> Result<(), Error> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records(records, dir.join("records.csv"))?;
    write_heatmap(&summary.heatmap.all, summary.heatmap.distance_max, dir.join("heatmap_all.csv"))?;
    write_heatmap(&summary.heatmap.failures, summary.heatmap.distance_max, dir.join("heatmap_failures.csv"))?;
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(summary)? + "\n").map_err(|e| Error::io(&path, e))
}

/// Columns: seed, initial_distance, initial_angle, conflict, outcome,
/// min_separation, final_goal_distance, reward, length.
pub fn write_records(records: &[EpisodeRecord], path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record([
        "seed",
        "initial_distance",
        "initial_angle",
        "conflict",
        "outcome",
        "min_separation",
        "final_goal_distance",
        "reward",
        "length",
    ])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>, Error> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

/// Rows are distance bins (lower edge in meters in the first column),
/// columns are 10° angle bins labelled by their lower edge.
fn write_heatmap(cells: &[Vec<u64>], distance_max: f64, path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["distance_m".to_string()];
    header.extend((0..ANGLE_BINS).map(|a| format!("{}", -180 + 10 * a as i64)));
    w.write_record(&header)?;
    for (d, row) in cells.iter().enumerate() {
        let mut rec = vec![format!("{}", d as f64 * distance_max / DISTANCE_BINS as f64)];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

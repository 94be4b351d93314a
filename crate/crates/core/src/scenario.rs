//! Fixed initial conditions for repeatable encounter studies.
//!
//! A scenario file is JSON that pins everything `reset` would otherwise
//! sample:
//!
//! ```json
//! {
//!   "name": "head_on",
//!   "description": "...",
//!   "agent":    { "x": 0.0, "y": -7000.0, "heading": 0.0,    "airspeed": 75.0 },
//!   "intruder": { "x": 0.0, "y":  7000.0, "heading": -180.0, "airspeed": 75.0 },
//!   "goal": { "x": 0.0, "y": 7000.0 },
//!   "intruder_route": [ { "x": 0.0, "y": -9500.0 } ]
//! }
//! ```
//!
//! Positions are local meters (x east, y north), headings degrees with 0 =
//! north and clockwise positive, airspeeds m/s.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Point, VehicleState};
use crate::env::EpisodeState;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub agent: VehicleState,
    pub intruder: VehicleState,
    pub goal: Point,
    pub intruder_route: Vec<Point>,
}

impl Scenario {
    pub fn to_episode(&self) -> EpisodeState {
        let agent = VehicleState::new(self.agent.x, self.agent.y, self.agent.heading, self.agent.airspeed);
        let intruder = VehicleState::new(
            self.intruder.x,
            self.intruder.y,
            self.intruder.heading,
            self.intruder.airspeed,
        );
        EpisodeState::new(agent, intruder, self.goal, self.intruder_route.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scenario: Scenario = serde_json::from_str(&text)?;
        let finite = [
            scenario.agent.x,
            scenario.agent.y,
            scenario.agent.heading,
            scenario.agent.airspeed,
            scenario.intruder.x,
            scenario.intruder.y,
            scenario.intruder.heading,
            scenario.intruder.airspeed,
            scenario.goal.x,
            scenario.goal.y,
        ];
        if !finite.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("scenario field"));
        }
        Ok(scenario)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// The four canned encounters: crossing left to right, crossing right to
    /// left, head-on, and a slower intruder ahead on the same course.
    ///
    /// The agent always starts 7 km south of the origin flying north at
    /// 75 m/s toward a goal 7 km north of it.
    pub fn canned() -> Vec<Scenario> {
        let agent = VehicleState::new(0.0, -7000.0, 0.0, 75.0);
        let goal = Point::new(0.0, 7000.0);
        let make = |name: &str, description: &str, intruder: VehicleState, route: Point| Scenario {
            name: name.to_string(),
            description: description.to_string(),
            agent,
            intruder,
            goal,
            intruder_route: vec![route],
        };
        vec![
            make(
                "cross_left_to_right",
                "Intruder crosses the route from west to east, arriving at the origin with the agent.",
                VehicleState::new(-7000.0, 0.0, 90.0, 75.0),
                Point::new(9500.0, 0.0),
            ),
            make(
                "cross_right_to_left",
                "Intruder crosses the route from east to west, arriving at the origin with the agent.",
                VehicleState::new(7000.0, 0.0, -90.0, 75.0),
                Point::new(-9500.0, 0.0),
            ),
            make(
                "head_on",
                "Intruder flies the reciprocal of the agent's course.",
                VehicleState::new(0.0, 7000.0, 180.0, 75.0),
                Point::new(0.0, -9500.0),
            ),
            make(
                "same_course",
                "Slower intruder ahead on the agent's course.",
                VehicleState::new(0.0, -3500.0, 0.0, 55.0),
                Point::new(0.0, 9500.0),
            ),
        ]
    }
}

//! Remain-well-clear avoidance for two aircraft in the horizontal plane.
//!
//! The crate has three layers:
//!
//! * a conservative 2D surrogate of the encounter ([`dynamics`], [`env`],
//!   [`observation`]),
//! * an actor-critic policy ([`policy`]) and its PPO trainer ([`ppo`]),
//! * the runtime side: a trajectory generator that rolls the policy through
//!   the surrogate to produce 20 geographic waypoints ([`runner`], [`geo`]),
//!   plus batch evaluation ([`eval`]) and canned encounters ([`scenario`]).
//!
//! ```
//! use wellclear::env::{reset, step, SimConfig};
//! use wellclear::observation::ControlCommand;
//!
//! let config = SimConfig::default();
//! let mut episode = reset(&config, 42).unwrap();
//! let result = step(&mut episode, ControlCommand::new(0.0, 1.0), &config).unwrap();
//! assert_eq!(result.reward, 0.0);
//! ```

pub mod dynamics;
pub mod env;
pub mod eval;
pub mod geo;
pub mod observation;
pub mod policy;
pub mod ppo;
pub mod runner;
pub mod scenario;

mod error;

pub use error::Error;

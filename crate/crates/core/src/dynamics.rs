//! Planar kinematics for a single aircraft.
//!
//! The vehicle is a Dubins-style point mass: it always moves forward along its
//! heading, turns at a bounded yaw rate and changes airspeed with a bounded
//! longitudinal acceleration. There is no mass, thrust or bank-angle model.
//!
//! Headings use the aviation convention: `0°` is north (`+y`), angles grow
//! clockwise, so `90°` is east (`+x`). Every heading leaving this module is
//! wrapped into `[-180, 180)`.

use serde::{Deserialize, Serialize};

use crate::Error;

/// Wrap an angle in degrees into `[-180, 180)`.
///
/// ```
/// use wellclear::dynamics::wrap_heading;
/// assert_eq!(wrap_heading(190.0), -170.0);
/// assert_eq!(wrap_heading(-540.0), -180.0);
/// ```
///
/// # Panics
///
/// Panics on a non-finite input. Use [`try_wrap_heading`] to get an error instead.
pub fn wrap_heading(deg: f64) -> f64 {
    try_wrap_heading(deg).expect("heading must be finite")
}

/// Fallible variant of [`wrap_heading`].
pub fn try_wrap_heading(deg: f64) -> Result<f64, Error> {
    if !deg.is_finite() {
        return Err(Error::NonFinite("heading"));
    }
    let mut wrapped = (deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if wrapped >= 180.0 {
        wrapped -= 360.0;
    }
    Ok(wrapped)
}

/// Position, heading and airspeed of one aircraft in the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Meters east of the frame origin.
    pub x: f64,
    /// Meters north of the frame origin.
    pub y: f64,
    /// Degrees, `0` = north, clockwise positive, in `[-180, 180)`.
    pub heading: f64,
    /// Meters per second.
    pub airspeed: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, airspeed: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_heading(heading),
            airspeed,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Ground velocity `(vx, vy)` in m/s.
    pub fn velocity(&self) -> (f64, f64) {
        let rad = self.heading.to_radians();
        (self.airspeed * rad.sin(), self.airspeed * rad.cos())
    }
}

/// A point in the local east/north frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from `self` to `other` in degrees, north-zero clockwise, wrapped.
    pub fn bearing_to(&self, other: &Point) -> f64 {
        wrap_heading((other.x - self.x).atan2(other.y - self.y).to_degrees())
    }
}

/// Actuation and state envelope of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Symmetric yaw-rate bound, deg/s.
    pub yaw_rate_max: f64,
    /// Half-extent of the square world, meters.
    pub position_bound: f64,
}

impl VehicleLimits {
    /// Conservative envelope the policy is trained against.
    pub const SURROGATE: VehicleLimits = VehicleLimits {
        v_min: 50.0,
        v_max: 100.0,
        accel_min: -0.5,
        accel_max: 0.5,
        yaw_rate_max: 3.0,
        position_bound: 10_000.0,
    };

    /// Envelope of the full-scale C208 airframe.
    pub const C208: VehicleLimits = VehicleLimits {
        v_min: 31.0,
        v_max: 100.0,
        accel_min: -0.8,
        accel_max: 0.5,
        yaw_rate_max: 5.0,
        position_bound: 10_000.0,
    };

    pub fn validate(&self) -> Result<(), Error> {
        let finite = [
            self.v_min,
            self.v_max,
            self.accel_min,
            self.accel_max,
            self.yaw_rate_max,
            self.position_bound,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("vehicle limits must be finite".into()));
        }
        if self.v_min >= self.v_max {
            return Err(Error::InvalidConfig("v_min must be below v_max".into()));
        }
        if !(self.accel_min < 0.0 && 0.0 < self.accel_max) {
            return Err(Error::InvalidConfig(
                "acceleration range must straddle zero".into(),
            ));
        }
        if self.yaw_rate_max <= 0.0 || self.position_bound <= 0.0 {
            return Err(Error::InvalidConfig(
                "yaw rate and position bounds must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn clamp_input(&self, input: ControlInput) -> ControlInput {
        ControlInput {
            yaw_rate: input.yaw_rate.clamp(-self.yaw_rate_max, self.yaw_rate_max),
            accel: input.accel.clamp(self.accel_min, self.accel_max),
        }
    }
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self::SURROGATE
    }
}

/// Physical control applied for one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// deg/s, positive turns right.
    pub yaw_rate: f64,
    /// m/s².
    pub accel: f64,
}

/// Advance a vehicle by `dt` seconds.
///
/// Speed and heading are updated first and the position is then translated with
/// the updated values (semi-implicit Euler). Inputs and airspeed saturate at the
/// limits; position is left unbounded.
///
/// ```
/// use wellclear::dynamics::{step_vehicle, ControlInput, VehicleLimits, VehicleState};
/// let s = VehicleState::new(0.0, 0.0, 0.0, 50.0);
/// let next = step_vehicle(&s, ControlInput::default(), 1.0, &VehicleLimits::SURROGATE);
/// assert_eq!((next.x, next.y), (0.0, 50.0));
/// ```
pub fn step_vehicle(
    state: &VehicleState,
    input: ControlInput,
    dt: f64,
    limits: &VehicleLimits,
) -> VehicleState {
    debug_assert!(dt > 0.0, "dt must be positive");
    let input = limits.clamp_input(input);
    let airspeed = (state.airspeed + input.accel * dt).clamp(limits.v_min, limits.v_max);
    let heading = wrap_heading(state.heading + input.yaw_rate * dt);
    let rad = heading.to_radians();
    VehicleState {
        x: state.x + airspeed * rad.sin() * dt,
        y: state.y + airspeed * rad.cos() * dt,
        heading,
        airspeed,
    }
}

/// Radius of the steady turn flown at `airspeed` m/s and `yaw_rate` deg/s.
pub fn turn_radius(airspeed: f64, yaw_rate: f64) -> f64 {
    airspeed / yaw_rate.abs().to_radians()
}

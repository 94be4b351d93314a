//! Local tangent plane around a geographic origin.
//!
//! An equirectangular projection on a spherical Earth: east offset scales
//! longitude by `cos(lat0)`, north offset is plain arc length. Within a few
//! tens of kilometres of the origin the distortion stays well under 0.1%, and
//! the inverse is exact algebra rather than an iteration.

use serde::{Deserialize, Serialize};

use crate::dynamics::Point;
use crate::Error;

/// Mean Earth radius, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Largest absolute latitude the projection accepts, degrees.
pub const MAX_LATITUDE: f64 = 85.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Tangent-plane frame anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    meters_per_deg_lat: f64,
    meters_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Result<Self, Error> {
        check_latitude(origin.lat)?;
        if !origin.lon.is_finite() {
            return Err(Error::NonFinite("longitude"));
        }
        let meters_per_deg_lat = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Ok(Self {
            origin,
            meters_per_deg_lat,
            meters_per_deg_lon: meters_per_deg_lat * origin.lat.to_radians().cos(),
        })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    /// `(east, north)` meters of `p` relative to the origin.
    pub fn to_local(&self, p: GeoPoint) -> Result<Point, Error> {
        check_latitude(p.lat)?;
        if !p.lon.is_finite() {
            return Err(Error::NonFinite("longitude"));
        }
        let dlon = wrap_lon(p.lon - self.origin.lon);
        Ok(Point::new(
            dlon * self.meters_per_deg_lon,
            (p.lat - self.origin.lat) * self.meters_per_deg_lat,
        ))
    }

    pub fn to_geo(&self, p: Point) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + p.y / self.meters_per_deg_lat,
            lon: wrap_lon(self.origin.lon + p.x / self.meters_per_deg_lon),
        }
    }
}

fn check_latitude(lat: f64) -> Result<(), Error> {
    if !lat.is_finite() || lat.abs() >= MAX_LATITUDE {
        return Err(Error::LatitudeOutOfRange(lat));
    }
    Ok(())
}

fn wrap_lon(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        lon
    } else {
        (lon + 180.0).rem_euclid(360.0) - 180.0
    }
}

/// Project `p` into the tangent plane at `origin`.
///
/// ```
/// use wellclear::geo::{geo_to_local, GeoPoint};
/// let origin = GeoPoint::new(47.2, -119.3);
/// let p = geo_to_local(GeoPoint::new(47.21, -119.3), origin).unwrap();
/// assert!((p.y - 1111.95).abs() < 0.01);
/// ```
pub fn geo_to_local(p: GeoPoint, origin: GeoPoint) -> Result<Point, Error> {
    LocalFrame::new(origin)?.to_local(p)
}

pub fn local_to_geo(p: Point, origin: GeoPoint) -> Result<GeoPoint, Error> {
    Ok(LocalFrame::new(origin)?.to_geo(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_maps_to_zero() {
        let o = GeoPoint::new(47.2, -119.3);
        assert_eq!(geo_to_local(o, o).unwrap(), Point::ORIGIN);
    }

    #[test]
    fn hundredth_degree_north() {
        let o = GeoPoint::new(47.2, -119.3);
        let p = geo_to_local(GeoPoint::new(47.21, -119.3), o).unwrap();
        // 0.01 * pi / 180 * 6371000
        assert!((p.y - 1111.949_266_445_587).abs() < 1e-6);
        assert_eq!(p.x, 0.0);
    }

    #[test]
    fn east_scales_with_cosine() {
        let o = GeoPoint::new(60.0, 10.0);
        let p = geo_to_local(GeoPoint::new(60.0, 10.01), o).unwrap();
        assert!((p.x - 555.974_633_222_793).abs() < 1e-6);
    }

    #[test]
    fn rejects_polar_latitudes() {
        assert!(matches!(
            LocalFrame::new(GeoPoint::new(86.0, 0.0)),
            Err(Error::LatitudeOutOfRange(_))
        ));
        let frame = LocalFrame::new(GeoPoint::new(0.0, 0.0)).unwrap();
        assert!(frame.to_local(GeoPoint::new(-89.0, 0.0)).is_err());
        assert!(frame.to_local(GeoPoint::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn antimeridian_crossing() {
        let o = GeoPoint::new(10.0, 179.99);
        let frame = LocalFrame::new(o).unwrap();
        let p = frame.to_local(GeoPoint::new(10.0, -179.99)).unwrap();
        assert!(p.x > 0.0 && p.x < 3000.0);
        let back = frame.to_geo(p);
        assert!((back.lon + 179.99).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn round_trip_is_sub_micrometre(
            lat0 in -80.0f64..80.0, lon0 in -180.0f64..180.0,
            dx in -20_000.0f64..20_000.0, dy in -20_000.0f64..20_000.0,
        ) {
            let frame = LocalFrame::new(GeoPoint::new(lat0, lon0)).unwrap();
            let p = Point::new(dx, dy);
            let back = frame.to_local(frame.to_geo(p)).unwrap();
            prop_assert!(back.distance(&p) < 1e-6);
        }
    }
}

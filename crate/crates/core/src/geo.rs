//! Great-circle distance and initial bearing between GPS coordinates.
//!
//! Spherical model with a fixed mean Earth radius. Altitude is carried on
//! [`GeoPoint`] for downstream text serialization but plays no part in the
//! distance or bearing math.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean Earth radius in kilometers used by [`haversine_distance`].
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A GPS coordinate in degrees, altitude in meters above sea level when known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint<S = f64> {
    pub lat_deg: S,
    pub lon_deg: S,
    #[serde(default = "none_alt", skip_serializing_if = "Option::is_none")]
    pub alt_m: Option<S>,
}

fn none_alt<S>() -> Option<S> {
    None
}

impl<S: Scalar> GeoPoint<S> {
    /// Builds a validated point. Latitude must lie in [-90, 90] and
    /// longitude in [-180, 180].
    pub fn new(lat_deg: S, lon_deg: S) -> Result<Self> {
        let p = Self { lat_deg, lon_deg, alt_m: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_altitude(mut self, alt_m: S) -> Self {
        self.alt_m = Some(alt_m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let lat_lo = S::from_f64(-90.0).unwrap();
        let lat_hi = S::from_f64(90.0).unwrap();
        let lon_lo = S::from_f64(-180.0).unwrap();
        let lon_hi = S::from_f64(180.0).unwrap();
        if !self.lat_deg.is_finite() || self.lat_deg < lat_lo || self.lat_deg > lat_hi {
            return Err(Error::InvalidCoordinate(format!(
                "lat_deg {} outside [-90, 90]",
                self.lat_deg
            )));
        }
        if !self.lon_deg.is_finite() || self.lon_deg < lon_lo || self.lon_deg > lon_hi {
            return Err(Error::InvalidCoordinate(format!(
                "lon_deg {} outside [-180, 180]",
                self.lon_deg
            )));
        }
        if let Some(alt) = self.alt_m {
            if !alt.is_finite() {
                return Err(Error::InvalidCoordinate(format!("alt_m {alt} not finite")));
            }
        }
        Ok(())
    }
}

/// Great-circle distance in kilometers over the default Earth radius.
pub fn haversine_distance<S: Scalar>(p1: &GeoPoint<S>, p2: &GeoPoint<S>) -> Result<S> {
    haversine_distance_r(p1, p2, S::from_f64(EARTH_RADIUS_KM).unwrap())
}

/// Great-circle distance with an explicit sphere radius (same unit as the result).
pub fn haversine_distance_r<S: Scalar>(
    p1: &GeoPoint<S>,
    p2: &GeoPoint<S>,
    radius: S,
) -> Result<S> {
    p1.validate()?;
    p2.validate()?;
    let two = S::from_f64(2.0).unwrap();
    let lat1 = p1.lat_deg.to_radians();
    let lat2 = p2.lat_deg.to_radians();
    let d_lat = (p2.lat_deg - p1.lat_deg).to_radians();
    let d_lon = (p2.lon_deg - p1.lon_deg).to_radians();

    let sin_lat = (d_lat / two).sin();
    let sin_lon = (d_lon / two).sin();
    // Rounding can push `a` a hair outside [0, 1]; clamp before the sqrt.
    let a = (sin_lat * sin_lat + lat1.cos() * lat2.cos() * sin_lon * sin_lon)
        .max(S::zero())
        .min(S::one());

    Ok(two * radius * a.sqrt().atan2((S::one() - a).sqrt()))
}

/// Initial compass bearing from `p1` toward `p2`, in degrees within [0, 360).
///
/// 0° is due north, 90° due east. For coincident points the formula
/// degenerates to `atan2(0, 0)`; the result is defined as 0.0 so that
/// serialization of a stationary transceiver pair never aborts.
pub fn initial_bearing<S: Scalar>(p1: &GeoPoint<S>, p2: &GeoPoint<S>) -> Result<S> {
    p1.validate()?;
    p2.validate()?;
    if p1.lat_deg == p2.lat_deg && p1.lon_deg == p2.lon_deg {
        return Ok(S::zero());
    }
    let lat1 = p1.lat_deg.to_radians();
    let lat2 = p2.lat_deg.to_radians();
    let d_lon = (p2.lon_deg - p1.lon_deg).to_radians();

    let y = d_lon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * d_lon.cos();
    let theta = y.atan2(x);

    let full_turn = S::from_f64(360.0).unwrap();
    Ok((theta.to_degrees() + full_turn) % full_turn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identical_points_zero_distance() {
        let a = p(40.0, -112.0);
        assert_eq!(haversine_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn one_degree_along_equator() {
        let d = haversine_distance(&p(0.0, 0.0), &p(0.0, 1.0)).unwrap();
        let expected = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        assert!((d - expected).abs() < 1e-9, "{d} vs {expected}");
    }

    #[test]
    fn rejects_out_of_range_latitude() {
        assert!(matches!(
            GeoPoint::new(90.5, 0.0),
            Err(Error::InvalidCoordinate(_))
        ));
        assert!(matches!(
            GeoPoint::new(f64::NAN, 0.0),
            Err(Error::InvalidCoordinate(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_longitude() {
        let bad = GeoPoint { lat_deg: 0.0, lon_deg: 181.0, alt_m: None };
        assert!(haversine_distance(&bad, &p(0.0, 0.0)).is_err());
        assert!(initial_bearing(&p(0.0, 0.0), &bad).is_err());
    }

    #[test]
    fn bearing_cardinal_directions() {
        let origin = p(0.0, 0.0);
        assert!((initial_bearing(&origin, &p(10.0, 0.0)).unwrap() - 0.0).abs() < 1e-9);
        assert!((initial_bearing(&origin, &p(0.0, 10.0)).unwrap() - 90.0).abs() < 1e-9);
        assert!((initial_bearing(&origin, &p(-10.0, 0.0)).unwrap() - 180.0).abs() < 1e-9);
        assert!((initial_bearing(&origin, &p(0.0, -10.0)).unwrap() - 270.0).abs() < 1e-9);
    }

    #[test]
    fn bearing_of_coincident_points_is_zero() {
        let a = p(33.42, -111.92);
        assert_eq!(initial_bearing(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn bearing_in_range_for_f32() {
        let a = GeoPoint::<f32>::new(48.85, 2.35).unwrap();
        let b = GeoPoint::<f32>::new(-33.86, 151.2).unwrap();
        let bearing = initial_bearing(&a, &b).unwrap();
        assert!((0.0..360.0).contains(&bearing));
    }

    #[test]
    fn altitude_does_not_affect_distance() {
        let a = p(10.0, 20.0);
        let b = p(11.0, 21.0).with_altitude(500.0);
        let c = p(11.0, 21.0).with_altitude(-20.0);
        assert_eq!(
            haversine_distance(&a, &b).unwrap(),
            haversine_distance(&a, &c).unwrap()
        );
    }
}

//! Bearings on a spherical Earth.
//!
//! Two base models are supported: the initial azimuth of the great circle and
//! the constant azimuth of the rhumb line (loxodrome). A third, composite model
//! bisects the bearings from a site towards two fixed anchors; it ignores the
//! reconstruction point entirely and therefore describes a fixed hypothesis.

use std::f64::consts::FRAC_PI_4;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Angular separation (radians) below which two points are treated as one.
pub const COINCIDENCE_TOLERANCE_RAD: f64 = 1e-9;

/// Tolerance (degrees) on `|b1 - b2| = 180` for an ambiguous bisector.
pub const ANTIPODAL_TOLERANCE_DEG: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} is outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("coordinate is not finite")]
    NonFinite,
    #[error("points coincide; bearing is undefined")]
    CoincidentPoints,
    #[error("rhumb bearing is undefined at a pole")]
    PoleUndefined,
    #[error("anchor bearings are opposite; bisector is ambiguous")]
    AntipodalBearings,
    #[error("bisector anchors must be distinct points")]
    IdenticalAnchors,
    #[error("model has no bisector anchors")]
    NotABisector,
}

/// A point on the sphere in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Validates the latitude and normalizes the longitude into (-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(GeoError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        Ok(Self {
            lat,
            lon: normalize_longitude(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Central angle to `other` in radians (haversine form).
    pub fn angular_distance(&self, other: &GeoPoint) -> f64 {
        let phi1 = self.lat.to_radians();
        let phi2 = other.lat.to_radians();
        let dphi = phi2 - phi1;
        let dlambda = (other.lon - self.lon).to_radians();
        let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
        2.0 * a.clamp(0.0, 1.0).sqrt().asin()
    }

    /// Central angle to `other` in degrees.
    pub fn distance_deg(&self, other: &GeoPoint) -> f64 {
        self.angular_distance(other).to_degrees()
    }

    pub fn coincides_with(&self, other: &GeoPoint) -> bool {
        self.angular_distance(other) < COINCIDENCE_TOLERANCE_RAD
    }

    fn is_pole(&self) -> bool {
        self.lat.abs() >= 90.0
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4})", self.lat, self.lon)
    }
}

/// Maps any finite longitude into (-180, 180].
pub fn normalize_longitude(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if wrapped <= -180.0 {
        wrapped + 360.0
    } else {
        wrapped
    }
}

/// Maps any finite angle in degrees into [0, 360).
pub fn normalize_bearing(deg: f64) -> f64 {
    let b = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

/// Signed difference `to - from` wrapped into (-180, 180].
pub fn signed_difference(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Initial azimuth of the great circle from `from` to `to`, degrees in [0, 360).
pub fn great_circle_bearing(from: &GeoPoint, to: &GeoPoint) -> Result<f64, GeoError> {
    if from.coincides_with(to) {
        return Err(GeoError::CoincidentPoints);
    }
    let phi1 = from.lat.to_radians();
    let phi2 = to.lat.to_radians();
    let dlambda = (to.lon - from.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(normalize_bearing(y.atan2(x).to_degrees()))
}

/// Constant azimuth of the rhumb line from `from` to `to`, degrees in [0, 360).
///
/// The longitude difference is taken along the shorter wrap (|dλ| ≤ 180°).
pub fn rhumb_bearing(from: &GeoPoint, to: &GeoPoint) -> Result<f64, GeoError> {
    if from.is_pole() || to.is_pole() {
        return Err(GeoError::PoleUndefined);
    }
    if from.coincides_with(to) {
        return Err(GeoError::CoincidentPoints);
    }
    let dpsi = mercator_ordinate(to.lat.to_radians()) - mercator_ordinate(from.lat.to_radians());
    let dlambda = signed_difference(from.lon, to.lon).to_radians();
    Ok(normalize_bearing(dlambda.atan2(dpsi).to_degrees()))
}

fn mercator_ordinate(phi: f64) -> f64 {
    (FRAC_PI_4 + phi / 2.0).tan().ln()
}

/// Bisector of two bearings along the smaller enclosed arc.
pub fn bisect_bearings(a: f64, b: f64) -> Result<f64, GeoError> {
    let d = signed_difference(a, b);
    if (d.abs() - 180.0).abs() < ANTIPODAL_TOLERANCE_DEG {
        return Err(GeoError::AntipodalBearings);
    }
    Ok(normalize_bearing(a + d / 2.0))
}

/// The two base bearing models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseModel {
    GreatCircle,
    RhumbLine,
}

impl BaseModel {
    pub fn bearing(self, from: &GeoPoint, to: &GeoPoint) -> Result<f64, GeoError> {
        match self {
            BaseModel::GreatCircle => great_circle_bearing(from, to),
            BaseModel::RhumbLine => rhumb_bearing(from, to),
        }
    }
}

/// How the bearing from a site towards a reconstruction point is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BearingModel {
    GreatCircle,
    RhumbLine,
    /// Bisector of the bearings to two anchors under `base`. The target point
    /// is ignored, so every reconstruction point sees the same bearing.
    Bisector {
        anchor_a: GeoPoint,
        anchor_b: GeoPoint,
        base: BaseModel,
    },
}

impl BearingModel {
    /// Bisector model over `base`; the anchors must be distinct.
    pub fn bisector(anchor_a: GeoPoint, anchor_b: GeoPoint, base: BaseModel) -> Result<Self, GeoError> {
        if anchor_a.coincides_with(&anchor_b) {
            return Err(GeoError::IdenticalAnchors);
        }
        Ok(BearingModel::Bisector {
            anchor_a,
            anchor_b,
            base,
        })
    }

    /// Bisector model over rhumb-line bearings.
    pub fn rhumb_bisector(anchor_a: GeoPoint, anchor_b: GeoPoint) -> Result<Self, GeoError> {
        Self::bisector(anchor_a, anchor_b, BaseModel::RhumbLine)
    }

    pub fn bearing(&self, from: &GeoPoint, to: &GeoPoint) -> Result<f64, GeoError> {
        match self {
            BearingModel::GreatCircle => great_circle_bearing(from, to),
            BearingModel::RhumbLine => rhumb_bearing(from, to),
            BearingModel::Bisector { .. } => self.bisector_bearing(from),
        }
    }

    /// Bearing of a bisector model from `from`; errors for the base models.
    pub fn bisector_bearing(&self, from: &GeoPoint) -> Result<f64, GeoError> {
        match self {
            BearingModel::Bisector {
                anchor_a,
                anchor_b,
                base,
            } => {
                let a = base.bearing(from, anchor_a)?;
                let b = base.bearing(from, anchor_b)?;
                bisect_bearings(a, b)
            }
            _ => Err(GeoError::NotABisector),
        }
    }

    /// True when the bearing does not depend on the reconstruction point.
    pub fn is_fixed(&self) -> bool {
        matches!(self, BearingModel::Bisector { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BearingModel::GreatCircle => "great-circle",
            BearingModel::RhumbLine => "rhumb",
            BearingModel::Bisector { .. } => "bisector",
        }
    }
}

impl fmt::Display for BearingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BearingModel::Bisector {
                anchor_a,
                anchor_b,
                base,
            } => write!(f, "bisector[{anchor_a} {anchor_b} {base:?}]"),
            other => f.write_str(other.name()),
        }
    }
}

/// Half-open check that a value lies in [0, 360).
pub fn is_valid_bearing(b: f64) -> bool {
    (0.0..360.0).contains(&b)
}

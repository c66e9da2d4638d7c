//! Circular statistics: the versine distortion and the circular
//! variance / circular standard deviation conversion.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircularError {
    #[error("circular variance {0} is outside [0, 1)")]
    DomainError(f64),
    #[error("circular standard deviation {0} must be finite and non-negative")]
    NegativeSigma(f64),
}

/// A direction, stored in radians in [0, 2π) and exposed in degrees.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Angle(f64);

impl Angle {
    pub fn from_degrees(deg: f64) -> Self {
        Self::from_radians(deg.to_radians())
    }

    pub fn from_radians(rad: f64) -> Self {
        let r = rad.rem_euclid(2.0 * PI);
        Angle(if r >= 2.0 * PI { 0.0 } else { r })
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Degrees in [0, 360).
    pub fn degrees(self) -> f64 {
        let d = self.0.to_degrees();
        if d >= 360.0 {
            0.0
        } else {
            d
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}°", self.degrees())
    }
}

/// `1 - cos(o - b)`, in [0, 2].
pub fn versin_distortion(orientation: Angle, bearing: Angle) -> f64 {
    versin_rad(orientation.0 - bearing.0)
}

/// Versine of an angular difference given in radians.
#[inline]
pub fn versin_rad(delta: f64) -> f64 {
    (1.0 - delta.cos()).clamp(0.0, 2.0)
}

/// Versine of an angular difference given in degrees.
#[inline]
pub fn versin_deg(delta: f64) -> f64 {
    versin_rad(delta.to_radians())
}

/// Circular standard deviation in degrees, `(360/2π)·sqrt(-2 ln(1 - V))`.
pub fn variance_to_sigma(variance: f64) -> Result<f64, CircularError> {
    if !(0.0..1.0).contains(&variance) {
        return Err(CircularError::DomainError(variance));
    }
    Ok((-2.0 * (-variance).ln_1p()).sqrt().to_degrees())
}

/// Inverse of [`variance_to_sigma`]: `V = 1 - exp(-σ²/2)` with σ in radians.
pub fn sigma_to_variance(sigma_deg: f64) -> Result<f64, CircularError> {
    if !(sigma_deg >= 0.0) || !sigma_deg.is_finite() {
        return Err(CircularError::NegativeSigma(sigma_deg));
    }
    let s = sigma_deg.to_radians();
    Ok(-(-s * s / 2.0).exp_m1())
}

/// A circular variance paired with its standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularDispersion {
    pub variance: f64,
    pub sigma_deg: f64,
}

impl CircularDispersion {
    pub fn from_variance(variance: f64) -> Result<Self, CircularError> {
        Ok(Self {
            variance,
            sigma_deg: variance_to_sigma(variance)?,
        })
    }

    pub fn from_sigma(sigma_deg: f64) -> Result<Self, CircularError> {
        Ok(Self {
            variance: sigma_to_variance(sigma_deg)?,
            sigma_deg,
        })
    }
}

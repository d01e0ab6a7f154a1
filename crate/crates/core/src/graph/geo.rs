use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest central angle (radians) ever returned; keeps reciprocal weights finite.
pub const MIN_ANGLE: f64 = 1e-12;

/// Latitude/longitude in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// `lat` in [−90, 90], `lon` in (−180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(lon > -180.0 && lon <= 180.0) {
            return Err(Error::invalid(format!(
                "geo point ({lat}, {lon}) out of range"
            )));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Which haversine variant turns a coordinate pair into an angle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HaversineMode {
    /// `2·asin(h)`, with no square root.
    #[default]
    Paper,
    /// Classical central angle `2·asin(√h)`.
    Standard,
}

impl std::str::FromStr for HaversineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "standard" => Ok(Self::Standard),
            other => Err(Error::Config(format!("unknown haversine mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for HaversineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::Standard => "standard",
        })
    }
}

fn hav(theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    s * s
}

/// Angle between two points, clamped below at [`MIN_ANGLE`].
pub fn haversine_angle(p: GeoPoint, q: GeoPoint, mode: HaversineMode) -> f64 {
    let (phi_p, phi_q) = (p.lat.to_radians(), q.lat.to_radians());
    let d_lambda = (q.lon - p.lon).to_radians();
    let h = (hav(phi_q - phi_p) + phi_p.cos() * phi_q.cos() * hav(d_lambda)).clamp(0.0, 1.0);
    let angle = match mode {
        HaversineMode::Paper => 2.0 * h.asin(),
        HaversineMode::Standard => 2.0 * h.sqrt().asin(),
    };
    angle.max(MIN_ANGLE)
}

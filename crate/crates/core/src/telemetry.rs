//! Telemetry containers shared by the fitting code and the I/O layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed positions of one individual, sorted by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub times: Vec<f64>,
    pub xy: Vec<[f64; 2]>,
}

impl Track {
    pub fn new(id: impl Into<String>, times: Vec<f64>, xy: Vec<[f64; 2]>) -> Result<Self> {
        let t = Track {
            id: id.into(),
            times,
            xy,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.xy.len() {
            return Err(Error::Dimension(format!(
                "track {}: {} times but {} positions",
                self.id,
                self.times.len(),
                self.xy.len()
            )));
        }
        if self.times.is_empty() {
            return Err(Error::Empty(format!("track {} has no observations", self.id)));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidSpec(format!(
                    "track {}: times must be strictly increasing ({} then {})",
                    self.id, w[0], w[1]
                )));
            }
        }
        if self
            .times
            .iter()
            .chain(self.xy.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain(format!("track {} has non-finite values", self.id)));
        }
        Ok(())
    }

    /// Values of one coordinate (0 = x, 1 = y).
    pub fn coord(&self, axis: usize) -> Vec<f64> {
        self.xy.iter().map(|p| p[axis]).collect()
    }

    pub fn first(&self) -> [f64; 2] {
        self.xy[0]
    }
}

/// Constants needed to map scaled coordinates back to kilometres and hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMeta {
    /// Projection center; `None` when the input was already planar km.
    pub center_lon: Option<f64>,
    pub center_lat: Option<f64>,
    /// Planar mean (km) subtracted before scaling.
    pub offset_km: [f64; 2],
    /// Pooled standard deviation (km) used as the spatial unit.
    pub scale_km: f64,
    /// Raw time (hours) mapped to 0.
    pub time_origin: f64,
    /// Raw elapsed hours mapped to 1.
    pub time_span: f64,
}

impl ProjectionMeta {
    pub fn to_km(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.scale_km + self.offset_km[0],
            p[1] * self.scale_km + self.offset_km[1],
        ]
    }

    pub fn to_hours(&self, t: f64) -> f64 {
        self.time_origin + t * self.time_span
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordKind {
    LonLat,
    Km,
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySet {
    pub tracks: Vec<Track>,
    pub coords: CoordKind,
    pub meta: Option<ProjectionMeta>,
}

impl TelemetrySet {
    pub fn scaled(tracks: Vec<Track>) -> Self {
        TelemetrySet {
            tracks,
            coords: CoordKind::Scaled,
            meta: None,
        }
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn n_obs(&self) -> usize {
        self.tracks.iter().map(Track::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_rejects_bad_input() {
        assert!(Track::new("a", vec![0.0, 0.0], vec![[0.0; 2]; 2]).is_err());
        assert!(Track::new("a", vec![0.0], vec![]).is_err());
        assert!(Track::new("a", vec![], vec![]).is_err());
        assert!(Track::new("a", vec![0.0, f64::NAN], vec![[0.0; 2]; 2]).is_err());
        assert!(Track::new("a", vec![0.0, 1.0], vec![[0.0; 2]; 2]).is_ok());
    }

    #[test]
    fn meta_inverts_scaling() {
        let m = ProjectionMeta {
            center_lon: None,
            center_lat: None,
            offset_km: [10.0, -5.0],
            scale_km: 200.0,
            time_origin: 1000.0,
            time_span: 48.0,
        };
        assert_eq!(m.to_km([0.5, -1.0]), [110.0, -205.0]);
        assert_eq!(m.to_hours(0.25), 1012.0);
    }
}

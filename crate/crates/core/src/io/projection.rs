//! Spherical azimuthal equidistant projection and the `[0, 1]` rescale.

use crate::error::{Error, Result};
use crate::telemetry::{CoordKind, ProjectionMeta, TelemetrySet, Track};

/// Mean earth radius (km).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Project `(lon, lat)` in degrees to planar km about `center`.
pub fn project(center: (f64, f64), lon: f64, lat: f64) -> [f64; 2] {
    let (lam0, phi1) = (center.0.to_radians(), center.1.to_radians());
    let (lam, phi) = (lon.to_radians(), lat.to_radians());
    let dl = lam - lam0;
    let a = phi.cos() * dl.sin();
    let b = phi1.cos() * phi.sin() - phi1.sin() * phi.cos() * dl.cos();
    let cos_c = phi1.sin() * phi.sin() + phi1.cos() * phi.cos() * dl.cos();
    let sin_c = a.hypot(b);
    if sin_c == 0.0 {
        return [0.0, 0.0];
    }
    let k = EARTH_RADIUS_KM * sin_c.atan2(cos_c) / sin_c;
    [k * a, k * b]
}

/// Inverse of [`project`]: planar km back to `(lon, lat)` in degrees.
pub fn unproject(center: (f64, f64), p: [f64; 2]) -> (f64, f64) {
    let (lam0, phi1) = (center.0.to_radians(), center.1.to_radians());
    let rho = p[0].hypot(p[1]);
    if rho == 0.0 {
        return center;
    }
    let c = rho / EARTH_RADIUS_KM;
    let phi = (c.cos() * phi1.sin() + p[1] * c.sin() * phi1.cos() / rho)
        .clamp(-1.0, 1.0)
        .asin();
    let lam = lam0 + (p[0] * c.sin()).atan2(rho * phi1.cos() * c.cos() - p[1] * phi1.sin() * c.sin());
    let mut lon = lam.to_degrees();
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    (lon, phi.to_degrees())
}

/// Center of mass of the points on the unit sphere, as `(lon, lat)`.
pub fn geographic_mean(points: impl Iterator<Item = [f64; 2]>) -> Result<(f64, f64)> {
    let mut v = [0.0; 3];
    let mut n = 0usize;
    for [lon, lat] in points {
        let (l, p) = (lon.to_radians(), lat.to_radians());
        v[0] += p.cos() * l.cos();
        v[1] += p.cos() * l.sin();
        v[2] += p.sin();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no positions".into()));
    }
    let h = v[0].hypot(v[1]);
    if h == 0.0 && v[2] == 0.0 {
        return Err(Error::Domain("positions have no defined mean direction".into()));
    }
    Ok((v[1].atan2(v[0]).to_degrees(), v[2].atan2(h).to_degrees()))
}

/// Where to center the projection of lon/lat input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ProjectionCenter {
    #[default]
    DataMean,
    Fixed {
        lon: f64,
        lat: f64,
    },
}

/// Project (when lon/lat), center on the pooled planar mean, divide by the
/// pooled standard deviation, and map all times affinely onto `[0, 1]`.
pub fn project_and_scale(set: &TelemetrySet, center: ProjectionCenter) -> Result<TelemetrySet> {
    let n = set.n_obs();
    if n == 0 {
        return Err(Error::Empty("telemetry set has no observations".into()));
    }
    let (center_ll, planar): (Option<(f64, f64)>, Vec<Vec<[f64; 2]>>) = match set.coords {
        CoordKind::LonLat => {
            let c = match center {
                ProjectionCenter::Fixed { lon, lat } => (lon, lat),
                ProjectionCenter::DataMean => geographic_mean(set.tracks.iter().flat_map(|t| t.xy.iter().copied()))?,
            };
            let p = set
                .tracks
                .iter()
                .map(|t| t.xy.iter().map(|q| project(c, q[0], q[1])).collect())
                .collect();
            (Some(c), p)
        }
        CoordKind::Km => (None, set.tracks.iter().map(|t| t.xy.clone()).collect()),
        CoordKind::Scaled => return Err(Error::InvalidSpec("telemetry is already scaled".into())),
    };
    let all = || planar.iter().flatten();
    let offset = [0, 1].map(|k| all().map(|p| p[k]).sum::<f64>() / n as f64);
    let ss: f64 = all()
        .map(|p| (p[0] - offset[0]).powi(2) + (p[1] - offset[1]).powi(2))
        .sum();
    let scale = if n > 1 { (ss / (2 * n - 2) as f64).sqrt() } else { 0.0 };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Domain("pooled spatial standard deviation is zero".into()));
    }
    let times = || set.tracks.iter().flat_map(|t| t.times.iter().copied());
    let t0 = times().fold(f64::INFINITY, f64::min);
    let span = times().fold(f64::NEG_INFINITY, f64::max) - t0;
    if !(span > 0.0) {
        return Err(Error::Domain("all observations share one time".into()));
    }
    let tracks = set
        .tracks
        .iter()
        .zip(&planar)
        .map(|(t, p)| {
            Track::new(
                t.id.clone(),
                t.times.iter().map(|&s| ((s - t0) / span).clamp(0.0, 1.0)).collect(),
                p.iter()
                    .map(|q| [(q[0] - offset[0]) / scale, (q[1] - offset[1]) / scale])
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TelemetrySet {
        tracks,
        coords: CoordKind::Scaled,
        meta: Some(ProjectionMeta {
            center_lon: center_ll.map(|c| c.0),
            center_lat: center_ll.map(|c| c.1),
            offset_km: offset,
            scale_km: scale,
            time_origin: t0,
            time_span: span,
        }),
    })
}

/// Scaled position back to `(lon, lat)`, or `None` for planar input.
pub fn scaled_to_lonlat(meta: &ProjectionMeta, p: [f64; 2]) -> Option<(f64, f64)> {
    let c = (meta.center_lon?, meta.center_lat?);
    Some(unproject(c, meta.to_km(p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_maps_to_origin() {
        assert_eq!(project((-110.0, 51.0), -110.0, 51.0), [0.0, 0.0]);
    }

    #[test]
    fn distance_from_center_is_great_circle() {
        // one degree of latitude due north
        let p = project((10.0, 20.0), 10.0, 21.0);
        assert!(p[0].abs() < 1e-9);
        assert!((p[1] - EARTH_RADIUS_KM * 1f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn symmetric_points_center_to_zero() {
        let t = Track::new("a", vec![0.0, 5.0], vec![[-1.0, 2.0], [1.0, -2.0]]).unwrap();
        let set = TelemetrySet {
            tracks: vec![t],
            coords: CoordKind::Km,
            meta: None,
        };
        let s = project_and_scale(&set, ProjectionCenter::DataMean).unwrap();
        let xy = &s.tracks[0].xy;
        assert!((xy[0][0] + xy[1][0]).abs() < 1e-15 && (xy[0][1] + xy[1][1]).abs() < 1e-15);
        assert_eq!(s.tracks[0].times, vec![0.0, 1.0]);
    }

    #[test]
    fn single_point_is_degenerate() {
        let t = Track::new("a", vec![0.0], vec![[3.0, 4.0]]).unwrap();
        let set = TelemetrySet {
            tracks: vec![t],
            coords: CoordKind::Km,
            meta: None,
        };
        assert!(project_and_scale(&set, ProjectionCenter::DataMean).is_err());
    }
}

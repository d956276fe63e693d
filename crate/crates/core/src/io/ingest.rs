//! Delimited telemetry input.
//!
//! Header `id,time,lon,lat`, `id,time,x_km,y_km`, or `id,time,x,y` for
//! coordinates that are already centered and scaled. Time is either numeric
//! hours or an ISO-8601 timestamp (converted to hours since the Unix epoch;
//! timestamps without an offset are read as UTC).

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{CoordKind, TelemetrySet, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line in the file, header included.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    pub individuals: usize,
    pub rejected: Vec<RejectedRow>,
    pub warnings: Vec<String>,
}

/// Parse a time field to hours.
pub fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let secs = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9
    } else {
        let naive = [
            "%Y-%m-%dT%H:%M:%S%.f",
            "%Y-%m-%d %H:%M:%S%.f",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M",
        ]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })?;
        let utc = naive.and_utc();
        utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
    };
    Some(secs / 3600.0)
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Read telemetry from a file. `coords` forces the schema; by default it is
/// inferred from the header.
pub fn ingest(path: &Path, coords: Option<CoordKind>) -> Result<(TelemetrySet, IngestReport)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open telemetry file {}: {e}", path.display())))?;
    ingest_reader(file, coords)
}

pub fn ingest_reader(reader: impl Read, coords: Option<CoordKind>) -> Result<(TelemetrySet, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Empty("telemetry file is empty".into()));
    }
    let lonlat = (column(&headers, "lon"), column(&headers, "lat"));
    let km = (column(&headers, "x_km"), column(&headers, "y_km"));
    let kind = match coords {
        Some(k) => k,
        None if lonlat.0.is_some() && lonlat.1.is_some() => CoordKind::LonLat,
        None if km.0.is_none() && column(&headers, "x").is_some() => CoordKind::Scaled,
        None => CoordKind::Km,
    };
    let (cx, cy) = match kind {
        CoordKind::LonLat => lonlat,
        CoordKind::Km => km,
        CoordKind::Scaled => (column(&headers, "x"), column(&headers, "y")),
    };
    let (ci, ct) = (column(&headers, "id"), column(&headers, "time"));
    let (Some(ci), Some(ct), Some(cx), Some(cy)) = (ci, ct, cx, cy) else {
        return Err(Error::Parse(format!(
            "header must contain id, time and the {kind:?} coordinate columns; found [{}]",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };

    let mut report = IngestReport::default();
    let mut by_id: BTreeMap<String, Vec<(f64, [f64; 2], usize)>> = BTreeMap::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    let mut unsorted = false;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        report.rows += 1;
        let mut reject = |reason: String| report.rejected.push(RejectedRow { line, reason });
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let id = field(ci);
        if id.is_empty() {
            reject("missing id".into());
            continue;
        }
        let Some(t) = parse_time(field(ct)) else {
            reject(format!("unparseable time {:?}", field(ct)));
            continue;
        };
        let (Ok(x), Ok(y)) = (field(cx).parse::<f64>(), field(cy).parse::<f64>()) else {
            reject(format!("unparseable coordinates ({:?}, {:?})", field(cx), field(cy)));
            continue;
        };
        if !(x.is_finite() && y.is_finite()) {
            reject("non-finite coordinates".into());
            continue;
        }
        if kind == CoordKind::LonLat && !((-180.0..=180.0).contains(&x) && (-90.0..=90.0).contains(&y)) {
            reject(format!("longitude/latitude out of range ({x}, {y})"));
            continue;
        }
        if !seen.insert((id.to_string(), t.to_bits())) {
            reject("duplicate".into());
            continue;
        }
        let rows = by_id.entry(id.to_string()).or_default();
        if rows.last().is_some_and(|r| r.0 > t) {
            unsorted = true;
        }
        rows.push((t, [x, y], line));
    }
    for r in &report.rejected {
        warn!("line {}: rejected ({})", r.line, r.reason);
    }
    if unsorted {
        let msg = "input was not sorted by time within individuals; rows were sorted".to_string();
        warn!("{msg}");
        report.warnings.push(msg);
    }
    let mut tracks = Vec::with_capacity(by_id.len());
    for (id, mut rows) in by_id {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        report.accepted += rows.len();
        tracks.push(Track::new(
            id,
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
        )?);
    }
    report.individuals = tracks.len();
    if tracks.is_empty() {
        return Err(Error::Empty(format!(
            "no valid telemetry rows ({} read, {} rejected)",
            report.rows,
            report.rejected.len()
        )));
    }
    Ok((
        TelemetrySet {
            tracks,
            coords: kind,
            meta: None,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numeric_and_iso_times() {
        assert_eq!(parse_time("12.5"), Some(12.5));
        assert_eq!(parse_time("1970-01-02T00:00:00Z"), Some(24.0));
        assert_eq!(parse_time("1970-01-01 06:30:00"), Some(6.5));
        assert_eq!(parse_time("1970-01-01T03:00:00+02:00"), Some(1.0));
        assert_eq!(parse_time("yesterday"), None);
    }

    #[test]
    fn three_rows() {
        let csv = "id,time,lon,lat\na,0,-110,51\na,1,-110.5,51.2\nb,0.5,-109,50\n";
        let (set, rep) = ingest_reader(csv.as_bytes(), None).unwrap();
        assert_eq!(set.n_obs(), 3);
        assert_eq!(set.coords, CoordKind::LonLat);
        assert_eq!(rep.accepted, 3);
        assert!(rep.rejected.is_empty());
    }

    #[test]
    fn duplicates_are_rejected_with_line() {
        let csv = "id,time,x_km,y_km\na,0,1,2\na,0,3,4\na,1,5,6\n";
        let (set, rep) = ingest_reader(csv.as_bytes(), None).unwrap();
        assert_eq!(set.n_obs(), 2);
        assert_eq!(
            rep.rejected,
            vec![RejectedRow {
                line: 3,
                reason: "duplicate".into()
            }]
        );
    }

    #[test]
    fn unsorted_rows_are_sorted_with_warning() {
        let csv = "id,time,x_km,y_km\na,2,0,0\na,1,1,1\na,3,2,2\n";
        let (set, rep) = ingest_reader(csv.as_bytes(), None).unwrap();
        assert_eq!(set.tracks[0].times, vec![1.0, 2.0, 3.0]);
        assert_eq!(set.tracks[0].xy[0], [1.0, 1.0]);
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn malformed_rows_listed() {
        let csv = "id,time,lon,lat\na,0,-110,51\na,x,-110,51\na,2,-300,51\n,3,0,0\na,4,1\n";
        let (_, rep) = ingest_reader(csv.as_bytes(), None).unwrap();
        let lines: Vec<usize> = rep.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6]);
    }

    #[test]
    fn empty_input_fails() {
        assert!(ingest_reader("".as_bytes(), None).is_err());
        assert!(ingest_reader("id,time,lon,lat\n".as_bytes(), None).is_err());
    }
}

//! Telemetry input, projection, and run outputs.

pub mod ingest;
pub mod output;
pub mod projection;

pub use ingest::{ingest, ingest_reader, parse_time, IngestReport, RejectedRow};
pub use output::{fmt_num, line_chart_svg, sha256_hex, Cell, FileEntry, Manifest, RunDir, Series, Table};
pub use projection::{
    geographic_mean, project, project_and_scale, scaled_to_lonlat, unproject, ProjectionCenter, EARTH_RADIUS_KM,
};

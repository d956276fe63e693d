use std::path::Path;

use clap::Parser;
use convmove_cli::{run, Cli};

fn convmove(args: &[&str]) -> anyhow::Result<()> {
    let argv = std::iter::once("convmove").chain(args.iter().copied());
    run(Cli::parse_from(argv)).map(|_| ())
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[i].to_string()).collect()
}

const SINGLE: &str = r#"
[data]
path = "sim/telemetry.csv"
[simulate]
kind = "single"
n = 40
meas_var = 1e-4
ratio = 20.0
range = 0.005
warp = true
[fit]
grid_nodes = 120
iterations = 400
burn_in = 100
phi_grid = [0.004, 0.008]
[screen]
centers = 8
scales = [0.02]
magnitudes = [0.8]
top_k = 1
include_unwarped = false
[bma]
iterations = 500
draws = 100
prediction_points = 30
"#;

#[test]
fn single_track_pipeline() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.toml");
    std::fs::write(&cfg, SINGLE).unwrap();
    let (c, d) = (cfg.to_str().unwrap(), |s: &str| {
        root.path().join(s).to_str().unwrap().to_string()
    });

    convmove(&["simulate", "-c", c, "-o", &d("sim")]).unwrap();
    assert!(root.path().join("sim/truth.csv").exists());
    convmove(&["fit", "-c", c, "-o", &d("fit")]).unwrap();
    convmove(&["bma", "-c", c, "--from", &d("fit"), "-o", &d("bma")]).unwrap();

    let probs = std::fs::read_dir(root.path().join("bma"))
        .unwrap()
        .map(|e| e.unwrap().path().join("probs.csv"))
        .find(|p| p.exists())
        .expect("probs.csv for the simulated individual");
    let p = column(&probs, "prob");
    assert_eq!(p.len(), 1);
    assert_eq!(p[0].parse::<f64>().unwrap(), 1.0);

    convmove(&["predict", "-c", c, "--from", &d("bma"), "-o", &d("predict")]).unwrap();
    convmove(&["report", "-c", c, "--from", &d("predict"), "-o", &d("report")]).unwrap();
    let svgs = walk(&root.path().join("report"), "svg");
    assert!(svgs.iter().any(|p| p.ends_with("trajectory.svg")), "{svgs:?}");
    assert!(root.path().join("report/manifest.json").exists());
}

const GROUP: &str = r#"
[data]
path = "sim/telemetry.csv"
[simulate]
kind = "group"
n = 30
meas_var = 1e-4
ratio = 100.0
range = 0.005
[network]
individuals = 3
grid_nodes = 80
[network_chain]
iterations = 200
burn_in = 50
[network_output]
draws = 100
times = 11
"#;

#[test]
fn group_pipeline_reports_degree_per_individual() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.toml");
    std::fs::write(&cfg, GROUP).unwrap();
    let (c, d) = (cfg.to_str().unwrap(), |s: &str| {
        root.path().join(s).to_str().unwrap().to_string()
    });

    convmove(&["simulate", "-c", c, "-o", &d("sim")]).unwrap();
    convmove(&["fit-network", "-c", c, "-o", &d("net")]).unwrap();
    // report straight from the fit derives the degree table itself
    convmove(&["report", "-c", c, "--from", &d("net"), "-o", &d("report")]).unwrap();
    let ids = column(&root.path().join("report/degree.csv"), "id");
    let mut distinct = ids.clone();
    distinct.dedup();
    assert_eq!(distinct.len(), 3);
    assert_eq!(ids.len(), 33);
    for v in column(&root.path().join("report/degree.csv"), "mean") {
        let v: f64 = v.parse().unwrap();
        assert!((0.0..=2.0).contains(&v));
    }
    assert!(root.path().join("report/degree_curves.svg").exists());
}

#[test]
fn unknown_config_keys_are_listed() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.toml");
    std::fs::write(&cfg, "[fit]\niteratons = 10\n[bogus]\nx = 1\n").unwrap();
    let err = convmove(&["fit", "-c", cfg.to_str().unwrap(), "-o", root.path().to_str().unwrap()]).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("fit.iteratons") && msg.contains("bogus"), "{msg}");
}

#[test]
fn missing_telemetry_is_an_error() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.toml");
    std::fs::write(&cfg, "[data]\npath = \"nowhere.csv\"\n").unwrap();
    let err = convmove(&[
        "fit",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        root.path().join("o").to_str().unwrap(),
    ])
    .unwrap_err();
    assert!(format!("{err:#}").contains("nowhere.csv"));
}

#[test]
fn report_with_nothing_to_show_fails() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("r");
    assert!(convmove(&[
        "report",
        "--from",
        root.path().to_str().unwrap(),
        "-o",
        out.to_str().unwrap()
    ])
    .is_err());
}

fn walk(dir: &Path, ext: &str) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push(p);
            }
        }
    }
    out
}

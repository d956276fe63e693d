use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use convmove::bma::{averaged_warp_derivative, model_averaged_predict, posterior_model_probs, WarpMixture};
use convmove::gp::{credible_radius_at, path_summaries};
use convmove::io::{
    ingest, line_chart_svg, project_and_scale, scaled_to_lonlat, Cell, IngestReport, Manifest, RunDir, Series, Table,
};
use convmove::mcmc::{deviance_screen, fit_models, fit_single, precompute_phi_gram, PosteriorChains};
use convmove::network::{
    degree_curves, fit_group, fit_individually, mean_weights, uncertainty_comparison, NetworkChains,
};
use convmove::simulate::{simulate_group, simulate_trajectory, uniform_schedule, with_gap, GroupScenario, SimScenario};
use convmove::stats::Summary;
use convmove::warp::enumerate_warp_candidates;
use convmove::{
    CoordKind, GroupModelSpec, KernelSpec, LatentPaths, NetworkMode, ProjectionMeta, TelemetrySet, Track, WarpSpec,
};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SimKind};

/// Everything a subcommand needs besides its own arguments.
pub struct Ctx {
    pub config: RunConfig,
    pub config_text: String,
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    pub from: Option<PathBuf>,
}

fn finish(ctx: &Ctx, run: RunDir, command: &str, seed: u64) -> Result<Manifest> {
    let manifest = Manifest {
        tool: "convmove".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed,
        config_sha256: convmove::io::sha256_hex(ctx.config_text.as_bytes()),
        config: serde_json::to_value(&ctx.config)?,
        created: ctx.config.report.timestamp.then(|| chrono::Utc::now().to_rfc3339()),
        files: Vec::new(),
    };
    Ok(run.finish(manifest)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("missing input {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn from_dir(ctx: &Ctx) -> Result<&Path> {
    ctx.from.as_deref().context("this command needs --from <run directory>")
}

/// Directory-safe form of an individual id.
pub fn slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Load, project, and scale the configured telemetry.
pub fn load_data(ctx: &Ctx) -> Result<(TelemetrySet, IngestReport)> {
    let base = ctx.config_path.clone().unwrap_or_else(|| PathBuf::from("config.toml"));
    let path = ctx.config.data_path(&base);
    let (set, report) = ingest(&path, ctx.config.data.coords.kind())?;
    let mut set = if set.coords == CoordKind::Scaled {
        set
    } else {
        project_and_scale(&set, ctx.config.data.projection_center()?)?
    };
    let wanted = &ctx.config.data.individuals;
    if !wanted.is_empty() {
        if let Some(w) = wanted.iter().find(|w| set.track(w).is_none()) {
            bail!("individual {w:?} is not in the data");
        }
        set.tracks.retain(|t| wanted.contains(&t.id));
    }
    Ok((set, report))
}

fn unit_times(n: usize) -> Vec<f64> {
    uniform_schedule(n, [0.0, 1.0])
}

fn xy_table(tracks: &[(&str, &[f64], &[[f64; 2]])]) -> Result<Table> {
    let mut t = Table::new(&["id", "time", "x", "y"]);
    for (id, times, xy) in tracks {
        for (s, p) in times.iter().zip(xy.iter()) {
            t.push(vec![(*id).into(), (*s).into(), p[0].into(), p[1].into()])?;
        }
    }
    Ok(t)
}

fn pair(v: &[f64], what: &str) -> Result<[f64; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => bail!("{what} must have two entries"),
    }
}

pub fn simulate(ctx: &Ctx) -> Result<Manifest> {
    let s = &ctx.config.simulate;
    let mut run = RunDir::create(&ctx.out)?;
    let proc_var = s.meas_var * s.ratio * s.ratio;
    match s.kind {
        SimKind::Single => {
            let warp = if s.warp {
                Some(WarpSpec::truncated_gaussian(
                    s.warp_center,
                    s.warp_scale,
                    s.warp_magnitude,
                    (0.0, 1.0),
                )?)
            } else {
                None
            };
            let scenario = SimScenario {
                kernel: KernelSpec::gaussian_integrated(s.range)?,
                warp,
                grid_nodes: s.grid_nodes,
                domain: [0.0, 1.0],
                meas_var: s.meas_var,
                proc_var,
                origin: pair(&s.origin, "simulate.origin")?,
                schedule: unit_times(s.n),
                seed: s.seed,
            };
            let sim = simulate_trajectory(&scenario)?;
            let o = &sim.observed;
            run.write_table("telemetry.csv", &xy_table(&[("sim", &o.times, &o.xy)])?)?;
            run.write_table("truth.csv", &xy_table(&[("sim", &o.times, &sim.truth_obs)])?)?;
            run.write_table(
                "truth_grid.csv",
                &xy_table(&[("sim", &sim.grid_times, &sim.truth_grid)])?,
            )?;
            run.write_json("scenario.json", &scenario)?;
        }
        SimKind::Group => {
            let j = s.latent.len();
            if j == 0 || s.origins.len() != j {
                bail!("simulate.latent and simulate.origins need one entry per individual");
            }
            let points = s
                .latent
                .iter()
                .map(|p| pair(p, "simulate.latent entry"))
                .collect::<Result<Vec<_>>>()?;
            let origins = s
                .origins
                .iter()
                .map(|p| pair(p, "simulate.origins entry"))
                .collect::<Result<Vec<_>>>()?;
            let spec = GroupModelSpec {
                individuals: j,
                ..ctx.config.network.clone()
            };
            let full = unit_times(s.n);
            let gap = pair(&s.gap, "simulate.gap")?;
            if s.gap_individual > j {
                bail!(
                    "simulate.gap_individual is {} but there are {j} individuals",
                    s.gap_individual
                );
            }
            let schedules = (0..j)
                .map(|k| {
                    if k + 1 == s.gap_individual {
                        with_gap(&full, (gap[0], gap[1]))
                    } else {
                        full.clone()
                    }
                })
                .collect();
            let scenario = GroupScenario {
                latent: LatentPaths::constant(&points, spec.latent_nodes),
                spec,
                meas_var: s.meas_var,
                proc_var,
                range: s.range,
                origins,
                schedules,
                seed: s.seed,
            };
            let sim = simulate_group(&scenario)?;
            let obs: Vec<_> = sim
                .observed
                .iter()
                .map(|t| (t.id.as_str(), &t.times[..], &t.xy[..]))
                .collect();
            run.write_table("telemetry.csv", &xy_table(&obs)?)?;
            let truth: Vec<_> = sim
                .observed
                .iter()
                .zip(&sim.truth_obs)
                .map(|(t, p)| (t.id.as_str(), &t.times[..], &p[..]))
                .collect();
            run.write_table("truth.csv", &xy_table(&truth)?)?;
            run.write_json("scenario.json", &scenario)?;
        }
    }
    finish(ctx, run, "simulate", s.seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub id: String,
    pub baseline_deviance: Option<f64>,
    pub models: Vec<PosteriorChains>,
}

fn warp_cells(w: Option<&WarpSpec>) -> [f64; 3] {
    match w {
        Some(w) => [
            w.center().unwrap_or(f64::NAN),
            w.scale().unwrap_or(f64::NAN),
            w.magnitude,
        ],
        None => [f64::NAN; 3],
    }
}

fn summary_row<'a>(model: usize, name: &'a str, s: &Summary) -> Vec<Cell<'a>> {
    vec![
        model.into(),
        name.into(),
        s.mean.into(),
        s.sd.into(),
        s.q025.into(),
        s.q500.into(),
        s.q975.into(),
    ]
}

const SUMMARY_HEADER: [&str; 7] = ["model", "parameter", "mean", "sd", "q025", "q500", "q975"];

pub fn fit(ctx: &Ctx) -> Result<Manifest> {
    let cfg = &ctx.config;
    let (data, report) = load_data(ctx)?;
    let mut run = RunDir::create(&ctx.out)?;
    run.write_json("ingest_report.json", &report)?;
    if let Some(meta) = &data.meta {
        run.write_json("projection.json", meta)?;
    }
    let sc = &cfg.screen;
    for track in &data.tracks {
        info!("fitting {} ({} observations)", track.id, track.len());
        let dir = slug(&track.id);
        let mut warps: Vec<Option<WarpSpec>> = Vec::new();
        if sc.include_unwarped {
            warps.push(None);
        }
        let mut baseline_deviance = None;
        if sc.top_k > 0 {
            let baseline = fit_single(track, None, &cfg.fit)?;
            let candidates = enumerate_warp_candidates(sc.centers, &sc.scales, &sc.magnitudes, (0.0, 1.0))?;
            let screen = deviance_screen(track, &candidates, &baseline, &cfg.fit, sc.top_k)?;
            let mut t = Table::new(&["rank", "candidate", "center", "scale", "magnitude", "deviance"]);
            for (r, s) in screen.ranked.iter().enumerate() {
                let [c, w, m] = warp_cells(Some(&s.warp));
                t.push(vec![
                    (r + 1).into(),
                    s.index.into(),
                    c.into(),
                    w.into(),
                    m.into(),
                    s.deviance.into(),
                ])?;
            }
            run.write_table(&format!("{dir}/screen.csv"), &t)?;
            baseline_deviance = Some(screen.baseline_deviance);
            warps.extend(screen.ranked.iter().map(|s| Some(s.warp)));
        }
        if warps.is_empty() {
            bail!("no models to fit: set screen.top_k > 0 or screen.include_unwarped = true");
        }
        let models = fit_models(track, &warps, &cfg.fit)?;
        for (l, m) in models.iter().enumerate() {
            let mut t = Table::new(&["iteration", "meas_var", "ratio", "phi", "loglik"]);
            for k in 0..m.len() {
                // 1-based sweep that produced stored draw k
                let it = cfg.fit.burn_in + (k + 1) * cfg.fit.thin;
                t.push(vec![
                    it.into(),
                    m.meas_var[k].into(),
                    m.ratio[k].into(),
                    m.phi[k].into(),
                    m.loglik[k].into(),
                ])?;
            }
            run.write_table(&format!("{dir}/chain_{l}.csv"), &t)?;
        }
        let mut t = Table::new(&SUMMARY_HEADER);
        for (l, m) in models.iter().enumerate() {
            let s = m.summaries();
            t.push(summary_row(l, "meas_var", &s.meas_var))?;
            t.push(summary_row(l, "ratio_sq", &s.ratio_sq))?;
            t.push(summary_row(l, "proc_var", &s.proc_var))?;
            t.push(summary_row(l, "range", &s.phi))?;
        }
        run.write_table(&format!("{dir}/posterior_summary.csv"), &t)?;
        run.write_json(
            &format!("{dir}/fit.json"),
            &FitOutput {
                id: track.id.clone(),
                baseline_deviance,
                models,
            },
        )?;
    }
    finish(ctx, run, "fit", cfg.fit.seed)
}

fn track_dirs<'a>(data: &'a TelemetrySet, from: &Path, file: &str) -> Result<Vec<(&'a Track, PathBuf)>> {
    data.tracks
        .iter()
        .map(|t| {
            let p = from.join(slug(&t.id)).join(file);
            if p.exists() {
                Ok((t, p))
            } else {
                bail!("missing input {} for individual {}", p.display(), t.id)
            }
        })
        .collect()
}

/// Model-averaged posterior mean and sd of each shared parameter.
fn averaged_parameters(mix: &WarpMixture) -> Vec<(&'static str, f64, f64)> {
    let pick: [(&str, fn(&PosteriorChains) -> Vec<f64>); 4] = [
        ("meas_var", |c| c.meas_var.clone()),
        ("ratio_sq", PosteriorChains::ratio_sq),
        ("proc_var", PosteriorChains::proc_var),
        ("range", |c| c.phi.clone()),
    ];
    pick.iter()
        .map(|(name, f)| {
            let (mut m1, mut m2) = (0.0, 0.0);
            for (c, &p) in mix.models.iter().zip(&mix.probs) {
                let s = Summary::of(&f(c));
                m1 += p * s.mean;
                m2 += p * (s.sd * s.sd + s.mean * s.mean);
            }
            (*name, m1, (m2 - m1 * m1).max(0.0).sqrt())
        })
        .collect()
}

pub fn bma(ctx: &Ctx) -> Result<Manifest> {
    let cfg = &ctx.config;
    let from = from_dir(ctx)?;
    let (data, _) = load_data(ctx)?;
    let mut run = RunDir::create(&ctx.out)?;
    for (track, path) in track_dirs(&data, from, "fit.json")? {
        let fit: FitOutput = read_json(&path)?;
        let caches = fit
            .models
            .iter()
            .map(|m| precompute_phi_gram(track, m.warp.as_ref(), &cfg.fit))
            .collect::<convmove::Result<Vec<_>>>()?;
        let probs = posterior_model_probs(&fit.models, &caches, None, cfg.bma.iterations, cfg.bma.seed)?;
        let mix = WarpMixture::new(fit.models, probs, None)?;
        let dir = slug(&track.id);

        let mut t = Table::new(&["model", "warped", "center", "scale", "magnitude", "prob"]);
        for (l, (m, &p)) in mix.models.iter().zip(&mix.probs).enumerate() {
            let [c, s, g] = warp_cells(m.warp.as_ref());
            let warped = if m.warp.is_some() { "true" } else { "false" };
            t.push(vec![l.into(), warped.into(), c.into(), s.into(), g.into(), p.into()])?;
        }
        run.write_table(&format!("{dir}/probs.csv"), &t)?;

        let times = unit_times(cfg.bma.prediction_points);
        let curve = averaged_warp_derivative(&mix, &times)?;
        let mut header = vec![
            "time".to_string(),
            "averaged".into(),
            "lower".into(),
            "upper".into(),
            "reference".into(),
        ];
        header.extend((0..mix.models.len()).map(|l| format!("model_{l}")));
        let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
        for i in 0..times.len() {
            let mut row: Vec<Cell> = vec![
                times[i].into(),
                curve.averaged[i].into(),
                curve.lower[i].into(),
                curve.upper[i].into(),
                curve.reference.into(),
            ];
            row.extend(curve.per_model.iter().map(|m| Cell::Num(m[i])));
            t.push(row)?;
        }
        run.write_table(&format!("{dir}/warp_derivative.csv"), &t)?;

        let mut t = Table::new(&["parameter", "mean", "sd"]);
        for (name, m, s) in averaged_parameters(&mix) {
            t.push(vec![name.into(), m.into(), s.into()])?;
        }
        run.write_table(&format!("{dir}/parameters.csv"), &t)?;
        run.write_json(&format!("{dir}/mixture.json"), &mix)?;
    }
    finish(ctx, run, "bma", cfg.bma.seed)
}

pub fn predict(ctx: &Ctx) -> Result<Manifest> {
    let cfg = &ctx.config;
    let from = from_dir(ctx)?;
    let (data, _) = load_data(ctx)?;
    let mut run = RunDir::create(&ctx.out)?;
    let times = unit_times(cfg.bma.prediction_points);
    let mut summary = Table::new(&["id", "length_mean", "length_sd", "speed_mean", "speed_sd", "units"]);
    for (track, path) in track_dirs(&data, from, "mixture.json")? {
        let mix: WarpMixture = read_json(&path)?;
        let draws = model_averaged_predict(track, &mix, &cfg.fit, &times, cfg.bma.draws, cfg.bma.seed)?;
        let dir = slug(&track.id);
        let meta = data.meta.as_ref();
        let mut t = Table::new(&[
            "time",
            "hours",
            "mean_x",
            "mean_y",
            "radius",
            "x_km",
            "y_km",
            "radius_km",
            "lon",
            "lat",
        ]);
        for (i, &s) in times.iter().enumerate() {
            let m = draws.mean_at(i);
            let r = credible_radius_at(&draws, i, cfg.bma.level)?;
            let (hours, km, r_km, ll) = match meta {
                Some(meta) => (
                    meta.to_hours(s),
                    meta.to_km(m),
                    r * meta.scale_km,
                    scaled_to_lonlat(meta, m).unwrap_or((f64::NAN, f64::NAN)),
                ),
                None => (f64::NAN, [f64::NAN; 2], f64::NAN, (f64::NAN, f64::NAN)),
            };
            t.push(vec![
                s.into(),
                hours.into(),
                m[0].into(),
                m[1].into(),
                r.into(),
                km[0].into(),
                km[1].into(),
                r_km.into(),
                ll.0.into(),
                ll.1.into(),
            ])?;
        }
        run.write_table(&format!("{dir}/trajectory.csv"), &t)?;

        let mut t = Table::new(&["draw", "model", "time", "x", "y"]);
        for (d, (path, &model)) in draws.draws.iter().zip(&draws.provenance).take(20).enumerate() {
            for (s, p) in times.iter().zip(path) {
                t.push(vec![d.into(), model.into(), (*s).into(), p[0].into(), p[1].into()])?;
            }
        }
        run.write_table(&format!("{dir}/draws.csv"), &t)?;

        let identity = ProjectionMeta {
            center_lon: None,
            center_lat: None,
            offset_km: [0.0, 0.0],
            scale_km: 1.0,
            time_origin: 0.0,
            time_span: 1.0,
        };
        let ps = path_summaries(&draws, Some(meta.unwrap_or(&identity)))?;
        let units = if meta.is_some() { "km,km/h" } else { "scaled" };
        summary.push(vec![
            track.id.as_str().into(),
            ps.length_mean.into(),
            ps.length_sd.into(),
            ps.speed_mean.into(),
            ps.speed_sd.into(),
            units.into(),
        ])?;
    }
    run.write_table("path_summary.csv", &summary)?;
    finish(ctx, run, "predict", cfg.bma.seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkOutput {
    pub spec: GroupModelSpec,
    pub tracks: Vec<Track>,
    pub joint: NetworkChains,
    /// Separate per-individual fits, in track order.
    pub independent: Option<Vec<NetworkChains>>,
}

fn network_summary(chains: &NetworkChains) -> Result<Table> {
    let mut t = Table::new(&["parameter", "mean", "sd", "q025", "q500", "q975"]);
    let mut row = |name: &str, v: &[f64]| -> Result<()> {
        let s = Summary::of(v);
        t.push(vec![
            name.into(),
            s.mean.into(),
            s.sd.into(),
            s.q025.into(),
            s.q500.into(),
            s.q975.into(),
        ])?;
        Ok(())
    };
    row("meas_var", &chains.meas_var)?;
    row("ratio_sq", &chains.ratio_sq)?;
    row("range", &chains.range)?;
    row("origin_var", &chains.origin_var)?;
    for (j, id) in chains.ids.iter().enumerate() {
        for (k, axis) in ["x", "y"].iter().enumerate() {
            let v: Vec<f64> = chains.origins.iter().map(|o| o[j][k]).collect();
            row(&format!("origin_{axis}[{id}]"), &v)?;
        }
    }
    Ok(t)
}

pub fn fit_network(ctx: &Ctx) -> Result<Manifest> {
    let cfg = &ctx.config;
    let (data, report) = load_data(ctx)?;
    let mut run = RunDir::create(&ctx.out)?;
    run.write_json("ingest_report.json", &report)?;
    let spec = GroupModelSpec {
        individuals: data.tracks.len(),
        mode: NetworkMode::Latent,
        ..cfg.network.clone()
    };
    info!("fitting network of {} individuals", spec.individuals);
    let joint = fit_group(&data.tracks, &spec, &cfg.network_chain)?;
    run.write_table("posterior_summary.csv", &network_summary(&joint)?)?;
    let independent = if cfg.network_output.compare_independent {
        info!("fitting each individual separately");
        let fits = fit_individually(&data.tracks, &spec, &cfg.network_chain)?;
        for f in &fits {
            run.write_table(
                &format!("independent/{}_summary.csv", slug(&f.ids[0])),
                &network_summary(f)?,
            )?;
        }
        Some(fits)
    } else {
        None
    };
    run.write_json(
        "network.json",
        &NetworkOutput {
            spec,
            tracks: data.tracks.clone(),
            joint,
            independent,
        },
    )?;
    finish(ctx, run, "fit-network", cfg.network_chain.seed)
}

fn degree_table(net: &NetworkOutput, times: &[f64]) -> Result<Table> {
    let curves = degree_curves(&net.joint, &net.spec, times)?;
    let mut t = Table::new(&["id", "time", "mean", "q025", "q975"]);
    for c in &curves {
        for i in 0..times.len() {
            t.push(vec![
                c.id.as_str().into(),
                times[i].into(),
                c.mean[i].into(),
                c.q025[i].into(),
                c.q975[i].into(),
            ])?;
        }
    }
    Ok(t)
}

pub fn degree(ctx: &Ctx) -> Result<Manifest> {
    let cfg = &ctx.config;
    let from = from_dir(ctx)?;
    let net: NetworkOutput = read_json(&from.join("network.json"))?;
    let mut run = RunDir::create(&ctx.out)?;
    let out = &cfg.network_output;
    let times = unit_times(out.times);
    run.write_table("degree.csv", &degree_table(&net, &times)?)?;

    let w = mean_weights(&net.joint, &net.spec, &times)?;
    let mut t = Table::new(&["time", "j", "k", "nu"]);
    let ids = &net.joint.ids;
    for (s, nu) in times.iter().zip(&w.nu) {
        for a in 0..ids.len() {
            for b in 0..ids.len() {
                t.push(vec![
                    (*s).into(),
                    ids[a].as_str().into(),
                    ids[b].as_str().into(),
                    nu[(a, b)].into(),
                ])?;
            }
        }
    }
    run.write_table("weights.csv", &t)?;

    if let Some(ind) = &net.independent {
        let curves = uncertainty_comparison(
            &net.tracks,
            &net.spec,
            &net.joint,
            ind,
            &times,
            out.level,
            out.draws,
            out.seed,
        )?;
        let mut t = Table::new(&["id", "time", "radius_joint", "radius_independent"]);
        for c in &curves {
            for i in 0..times.len() {
                t.push(vec![
                    c.id.as_str().into(),
                    times[i].into(),
                    c.radius_joint[i].into(),
                    c.radius_independent[i].into(),
                ])?;
            }
        }
        run.write_table("uncertainty.csv", &t)?;
    }
    finish(ctx, run, "degree", out.seed)
}

/// A CSV read back as named numeric columns plus an optional id column.
struct Columns {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Columns {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|x| x.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Columns { header, rows })
    }

    fn idx(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column {name} missing"))
    }

    fn num(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.idx(name)?;
        Ok(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }

    /// Rows grouped by the `id` column, in first-seen order.
    fn by_id(&self) -> Result<Vec<(String, Columns)>> {
        let i = self.idx("id")?;
        let mut out: Vec<(String, Columns)> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|(id, _)| *id == r[i]) {
                Some((_, c)) => c.rows.push(r.clone()),
                None => out.push((
                    r[i].clone(),
                    Columns {
                        header: self.header.clone(),
                        rows: vec![r.clone()],
                    },
                )),
            }
        }
        Ok(out)
    }
}

/// Wide, plot-ready table: a shared x column and one column per series.
fn wide_table(x_name: &str, series: &[Series]) -> Result<Table> {
    let mut header = vec![x_name.to_string()];
    header.extend(series.iter().map(|s| s.name.clone()));
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let n = series.first().map_or(0, |s| s.x.len());
    for i in 0..n {
        let mut row: Vec<Cell> = vec![series[0].x[i].into()];
        row.extend(
            series
                .iter()
                .map(|s| Cell::Num(s.y.get(i).copied().unwrap_or(f64::NAN))),
        );
        t.push(row)?;
    }
    Ok(t)
}

fn chart(run: &mut RunDir, stem: &str, title: &str, x: &str, y: &str, series: &[Series]) -> Result<()> {
    run.write_table(&format!("{stem}.csv"), &wide_table(x, series)?)?;
    run.write_text(&format!("{stem}.svg"), &line_chart_svg(title, x, y, series))?;
    Ok(())
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

pub fn report(ctx: &Ctx) -> Result<Manifest> {
    let from = from_dir(ctx)?;
    let mut run = RunDir::create(&ctx.out)?;
    let mut made = 0usize;

    for dir in subdirs(from)? {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let wd = dir.join("warp_derivative.csv");
        if wd.exists() {
            let c = Columns::read(&wd)?;
            let t = c.num("time")?;
            let series = vec![
                Series::new("averaged", t.clone(), c.num("averaged")?),
                Series::new("lower", t.clone(), c.num("lower")?).dashed(),
                Series::new("upper", t.clone(), c.num("upper")?).dashed(),
                Series::new("reference", t.clone(), c.num("reference")?).dashed(),
            ];
            chart(
                &mut run,
                &format!("{name}/warp_derivative"),
                &format!("{name}: dw/dt"),
                "time",
                "dw/dt",
                &series,
            )?;
            made += 1;
        }
        let tr = dir.join("trajectory.csv");
        if tr.exists() {
            let c = Columns::read(&tr)?;
            let t = c.num("time")?;
            let (x, y) = (c.num("mean_x")?, c.num("mean_y")?);
            let path = vec![Series::new("posterior mean", x, y)];
            run.write_text(
                &format!("{name}/trajectory.svg"),
                &line_chart_svg(&format!("{name}: model-averaged path"), "x", "y", &path),
            )?;
            let series = vec![
                Series::new("mean_x", t.clone(), c.num("mean_x")?),
                Series::new("mean_y", t.clone(), c.num("mean_y")?),
                Series::new("radius", t.clone(), c.num("radius")?),
            ];
            chart(
                &mut run,
                &format!("{name}/trajectory_time"),
                &format!("{name}: position"),
                "time",
                "scaled units",
                &series,
            )?;
            made += 1;
        }
    }

    let degree_path = from.join("degree.csv");
    let net_path = from.join("network.json");
    let degree = if degree_path.exists() {
        Some(Columns::read(&degree_path)?)
    } else if net_path.exists() {
        let net: NetworkOutput = read_json(&net_path)?;
        let times = unit_times(ctx.config.network_output.times);
        let t = degree_table(&net, &times)?;
        run.write_table("degree.csv", &t)?;
        Some(Columns::read(&run.path().join("degree.csv"))?)
    } else {
        None
    };
    if let Some(c) = degree {
        let series = c
            .by_id()?
            .into_iter()
            .map(|(id, g)| Ok(Series::new(id, g.num("time")?, g.num("mean")?)))
            .collect::<Result<Vec<_>>>()?;
        chart(
            &mut run,
            "degree_curves",
            "individual degree",
            "time",
            "degree",
            &series,
        )?;
        made += 1;
    }

    let unc = from.join("uncertainty.csv");
    if unc.exists() {
        for (id, g) in Columns::read(&unc)?.by_id()? {
            let t = g.num("time")?;
            let series = vec![
                Series::new("joint", t.clone(), g.num("radius_joint")?),
                Series::new("independent", t.clone(), g.num("radius_independent")?).dashed(),
            ];
            chart(
                &mut run,
                &format!("uncertainty_{}", slug(&id)),
                &format!("{id}: credible radius"),
                "time",
                "radius",
                &series,
            )?;
        }
        made += 1;
    }
    if made == 0 {
        bail!("nothing to report in {}", from.display());
    }
    finish(ctx, run, "report", 0)
}

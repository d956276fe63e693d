//! Run configuration: one TOML file with a section per pipeline stage.
//! Every key has a default; unknown keys are rejected and all of them are
//! listed in the error.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use convmove::io::ProjectionCenter;
use convmove::warp::{default_magnitudes, default_scales};
use convmove::{ChainSettings, CoordKind, FitConfig, GroupModelSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordsSetting {
    Auto,
    LonLat,
    Km,
    Scaled,
}

impl CoordsSetting {
    pub fn kind(self) -> Option<CoordKind> {
        match self {
            CoordsSetting::Auto => None,
            CoordsSetting::LonLat => Some(CoordKind::LonLat),
            CoordsSetting::Km => Some(CoordKind::Km),
            CoordsSetting::Scaled => Some(CoordKind::Scaled),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Telemetry CSV, relative to the config file.
    pub path: String,
    pub coords: CoordsSetting,
    /// Projection center `[lon, lat]`; empty uses the geographic mean.
    pub center: Vec<f64>,
    /// Individuals to analyze; empty means all.
    pub individuals: Vec<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: "telemetry.csv".into(),
            coords: CoordsSetting::Auto,
            center: Vec::new(),
            individuals: Vec::new(),
        }
    }
}

impl DataSection {
    pub fn projection_center(&self) -> Result<ProjectionCenter> {
        match self.center.as_slice() {
            [] => Ok(ProjectionCenter::DataMean),
            [lon, lat] => Ok(ProjectionCenter::Fixed { lon: *lon, lat: *lat }),
            _ => bail!("data.center must be empty or [lon, lat]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenSection {
    /// Equally spaced warp centers inside the domain.
    pub centers: usize,
    pub scales: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Warped models carried forward to full fits.
    pub top_k: usize,
    /// Also fit the unwarped model as a mixture component.
    pub include_unwarped: bool,
}

impl Default for ScreenSection {
    fn default() -> Self {
        ScreenSection {
            centers: 100,
            scales: default_scales(),
            magnitudes: default_magnitudes(),
            top_k: 20,
            include_unwarped: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmaSection {
    pub iterations: usize,
    pub seed: u64,
    /// Predictive draws.
    pub draws: usize,
    /// Equally spaced prediction times on `[0, 1]`.
    pub prediction_points: usize,
    pub level: f64,
}

impl Default for BmaSection {
    fn default() -> Self {
        BmaSection {
            iterations: convmove::bma::DEFAULT_STAGE_TWO_ITERATIONS,
            seed: 0,
            draws: 1000,
            prediction_points: 200,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkOutputSection {
    /// Also fit the model with all cross-individual weights set to zero.
    pub compare_independent: bool,
    pub draws: usize,
    pub seed: u64,
    /// Equally spaced output times on `[0, 1]`.
    pub times: usize,
    pub level: f64,
}

impl Default for NetworkOutputSection {
    fn default() -> Self {
        NetworkOutputSection {
            compare_independent: true,
            draws: 500,
            seed: 0,
            times: 101,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimKind {
    Single,
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub kind: SimKind,
    pub seed: u64,
    /// Observations per individual, equally spaced on `[0, 1]`.
    pub n: usize,
    pub meas_var: f64,
    /// `sigma_mu / sigma_s`.
    pub ratio: f64,
    pub range: f64,
    /// Integration grid for single-track simulation.
    pub grid_nodes: usize,
    pub warp: bool,
    pub warp_center: f64,
    pub warp_scale: f64,
    pub warp_magnitude: f64,
    pub origin: Vec<f64>,
    /// Group: fixed latent point per individual (sets the group size).
    pub latent: Vec<Vec<f64>>,
    pub origins: Vec<Vec<f64>>,
    /// Group: 1-based individual with a data gap; 0 for none.
    pub gap_individual: usize,
    pub gap: Vec<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            kind: SimKind::Single,
            seed: 0,
            n: 200,
            meas_var: 1.6e-5,
            ratio: 15.0,
            range: 0.007,
            grid_nodes: 800,
            warp: false,
            warp_center: 0.5,
            warp_scale: 0.02,
            warp_magnitude: 0.8,
            origin: vec![0.0, 0.0],
            latent: vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![8.0, 0.0]],
            origins: vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.5]],
            gap_individual: 0,
            gap: vec![0.4, 0.6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Record the wall-clock time in the manifest.
    pub timestamp: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub fit: FitConfig,
    pub screen: ScreenSection,
    pub bma: BmaSection,
    /// The group size is taken from the data; `individuals` here is ignored.
    pub network: GroupModelSpec,
    pub network_chain: ChainSettings,
    pub network_output: NetworkOutputSection,
    pub simulate: SimulateSection,
    pub report: ReportSection,
}

/// Dotted paths of keys in `user` that `known` does not have.
fn unknown_keys(user: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (known.get(k), v) {
            (None, _) => out.push(path),
            (Some(toml::Value::Table(kt)), toml::Value::Table(ut)) => unknown_keys(ut, kt, &path, out),
            _ => {}
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let known = toml::Table::try_from(RunConfig::default()).context("serializing defaults")?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &known, "", &mut unknown);
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        let cfg: RunConfig = toml::Value::Table(user).try_into().context("invalid config value")?;
        cfg.fit.validate()?;
        cfg.network_chain.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Ok((RunConfig::from_toml(&text)?, text))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Data path resolved against the config file's directory.
    pub fn data_path(&self, config_path: &Path) -> PathBuf {
        let p = Path::new(&self.data.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            config_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn all_unknown_keys_listed() {
        let err = RunConfig::from_toml("bogus = 1\n[fit]\niterations = 10\nburn_in = 2\nfoo = 2\n[fit.meas_var_prior]\nshape = 2.0\nscale = 1.0\nrate = 3.0\n")
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("bogus") && err.contains("fit.foo") && err.contains("fit.meas_var_prior.rate"),
            "{err}"
        );
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = RunConfig::from_toml("[screen]\ntop_k = 3\n").unwrap();
        assert_eq!(c.screen.top_k, 3);
        assert_eq!(c.screen.centers, 100);
    }
}

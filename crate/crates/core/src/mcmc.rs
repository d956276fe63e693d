//! Single-individual Metropolis-within-Gibbs sampler.
//!
//! The covariance is written as `sigma_s^2 (I + r K_phi)` with
//! `r = sigma_{mu/s}^2` and `K_phi = delta H_phi H_phi'`. Each `K_phi` on the
//! discrete range grid is eigen-decomposed once, after which every likelihood
//! evaluation costs `O(min(n, m))`:
//!
//! * `sigma_s^2` has a conjugate inverse-gamma full conditional;
//! * `sigma_{mu/s}` moves by a log-scale random walk under its uniform prior;
//! * `phi` is drawn from its discrete full conditional over the grid.

use log::warn;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{marginal_loglik, GramSpectrum, MovementParams};
use crate::kernels::{build_basis, BasisMatrix, KernelFamily, KernelSpec, TimeGrid};
use crate::linalg::{log_sum_exp, LN_2PI};
use crate::priors::InverseGamma;
use crate::rng::{seeded, std_normal, substream};
use crate::stats::{mean, Summary};
use crate::telemetry::Track;
use crate::warp::{linspace, WarpSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub phi_grid: Vec<f64>,
    /// Integration grid size `m`.
    pub grid_nodes: usize,
    pub domain: [f64; 2],
    pub kernel: KernelFamily,
    pub meas_var_prior: InverseGamma,
    /// Upper bound of the uniform prior on `sigma_{mu/s}`.
    pub ratio_upper: f64,
    pub ratio_init: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Upper bound on `|phi grid| * m^2` before the cache refuses to build.
    pub cache_cap: usize,
    /// When false the sampler targets the prior alone.
    pub use_likelihood: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            phi_grid: linspace(0.001, 0.02, 100),
            grid_nodes: 800,
            domain: [0.0, 1.0],
            kernel: KernelFamily::GaussianIntegrated,
            meas_var_prior: InverseGamma {
                shape: 2.0,
                scale: 1.0558e-10,
            },
            ratio_upper: 20.0,
            ratio_init: 1.0,
            iterations: 20_000,
            burn_in: 5_000,
            thin: 5,
            seed: 0,
            target_accept: 0.44,
            cache_cap: 100_000_000,
            use_likelihood: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phi_grid.is_empty() {
            return Err(Error::InvalidSpec("phi grid is empty".into()));
        }
        if self.phi_grid.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidSpec("phi grid values must be positive".into()));
        }
        let mut sorted = self.phi_grid.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("phi grid values must be distinct".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidSpec(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 || (self.iterations - self.burn_in) / self.thin == 0 {
            return Err(Error::InvalidSpec("thinning leaves no stored draws".into()));
        }
        if !(self.ratio_upper > 0.0 && self.ratio_init > 0.0 && self.ratio_init < self.ratio_upper) {
            return Err(Error::InvalidSpec(format!(
                "ratio start {} must lie in (0, {})",
                self.ratio_init, self.ratio_upper
            )));
        }
        if !(self.domain[1] > self.domain[0]) {
            return Err(Error::InvalidSpec("empty time domain".into()));
        }
        if !(0.0 < self.target_accept && self.target_accept < 1.0) {
            return Err(Error::InvalidSpec("target acceptance must be in (0, 1)".into()));
        }
        self.meas_var_prior.validate()
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.domain[0], self.domain[1], self.grid_nodes)
    }

    pub fn kernel_spec(&self, range: f64) -> Result<KernelSpec> {
        let spec = KernelSpec {
            family: self.kernel,
            range,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Basis at `times` for range `phi` under the configured kernel and grid.
pub fn model_basis(times: &[f64], config: &FitConfig, range: f64, warp: Option<&WarpSpec>) -> Result<BasisMatrix> {
    build_basis(&config.kernel_spec(range)?, times, &config.time_grid()?, warp)
}

/// Spectral summary of one range value: eigenvalues of `K_phi` and the data
/// projected onto its eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEntry {
    pub range: f64,
    lambda: Vec<f64>,
    proj: [Vec<f64>; 2],
    yy: [f64; 2],
    full: bool,
    n: usize,
}

impl PhiEntry {
    pub fn build(h: &BasisMatrix, resid: &[Vec<f64>; 2], range: f64) -> Self {
        let spec = GramSpectrum::new(&h.values, h.delta);
        let n = h.nrows();
        let proj = [0, 1].map(|k| {
            let y = nalgebra::DVector::from_column_slice(&resid[k]);
            spec.u.tr_mul(&y).iter().copied().collect::<Vec<f64>>()
        });
        let yy = [0, 1].map(|k| resid[k].iter().map(|v| v * v).sum());
        PhiEntry {
            range,
            full: spec.is_full(),
            lambda: spec.lambda,
            proj,
            yy,
            n,
        }
    }

    /// `y' (I + r K)^{-1} y` summed over both coordinates.
    pub fn quad(&self, r: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..2 {
            let c = &self.proj[k];
            if self.full {
                total += c
                    .iter()
                    .zip(&self.lambda)
                    .map(|(ci, &l)| ci * ci / (1.0 + r * l))
                    .sum::<f64>();
            } else {
                let shrink: f64 = c
                    .iter()
                    .zip(&self.lambda)
                    .map(|(ci, &l)| ci * ci * r * l / (1.0 + r * l))
                    .sum();
                total += self.yy[k] - shrink;
            }
        }
        total
    }

    /// `log det (I + r K)` for one coordinate.
    pub fn logdet_unit(&self, r: f64) -> f64 {
        self.lambda.iter().map(|&l| (r * l).ln_1p()).sum()
    }

    pub fn loglik(&self, meas_var: f64, ratio_sq: f64) -> f64 {
        let n = self.n as f64;
        -(n * LN_2PI + n * meas_var.ln() + self.logdet_unit(ratio_sq)) - 0.5 * self.quad(ratio_sq) / meas_var
    }
}

/// Per-range spectral structures for one track and warp, built once and
/// shared read-only by the sampler.
#[derive(Debug, Clone)]
pub struct PhiGramCache {
    pub entries: Vec<PhiEntry>,
    /// Entry indices sorted by range value.
    pub order: Vec<usize>,
    pub origin: [f64; 2],
    pub n: usize,
}

impl PhiGramCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn centered(track: &Track, origin: [f64; 2]) -> [Vec<f64>; 2] {
    [0, 1].map(|k| track.xy.iter().map(|p| p[k] - origin[k]).collect())
}

/// Build the cache for every value of `config.phi_grid`.
pub fn precompute_phi_gram(track: &Track, warp: Option<&WarpSpec>, config: &FitConfig) -> Result<PhiGramCache> {
    config.validate()?;
    track.validate()?;
    let m = config.grid_nodes;
    let need = config.phi_grid.len().saturating_mul(m.saturating_mul(m));
    if need > config.cache_cap {
        return Err(Error::ResourceLimit(format!(
            "phi cache needs {need} entries (|grid|={} x m^2={}), above the cap of {}; \
             use a coarser phi grid, fewer grid nodes, or raise cache_cap",
            config.phi_grid.len(),
            m * m,
            config.cache_cap
        )));
    }
    let origin = track.first();
    let resid = centered(track, origin);
    let entries = config
        .phi_grid
        .par_iter()
        .map(|&phi| {
            let h = model_basis(&track.times, config, phi, warp)?;
            Ok(PhiEntry::build(&h, &resid, phi))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].range.total_cmp(&entries[b].range));
    Ok(PhiGramCache {
        entries,
        order,
        origin,
        n: track.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChains {
    pub model_id: usize,
    pub seed: u64,
    pub warp: Option<WarpSpec>,
    pub origin: [f64; 2],
    pub meas_var: Vec<f64>,
    /// Standard-deviation ratio `sigma_{mu/s}`.
    pub ratio: Vec<f64>,
    pub phi: Vec<f64>,
    /// Index into the configured phi grid.
    pub phi_index: Vec<usize>,
    pub loglik: Vec<f64>,
    /// Post-burn-in acceptance rate of the ratio random walk.
    pub ratio_accept: f64,
    pub ratio_step: f64,
    pub warnings: Vec<String>,
}

impl PosteriorChains {
    pub fn len(&self) -> usize {
        self.meas_var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meas_var.is_empty()
    }

    pub fn ratio_sq(&self) -> Vec<f64> {
        self.ratio.iter().map(|r| r * r).collect()
    }

    pub fn proc_var(&self) -> Vec<f64> {
        self.meas_var.iter().zip(&self.ratio).map(|(s, r)| s * r * r).collect()
    }

    pub fn params(&self, i: usize) -> MovementParams {
        MovementParams {
            meas_var: self.meas_var[i],
            proc_var: self.meas_var[i] * self.ratio[i] * self.ratio[i],
            range: self.phi[i],
            origin: self.origin,
        }
    }

    /// Plug-in parameters: posterior means of `sigma_s^2`, `sigma_{mu/s}^2`, and `phi`.
    pub fn posterior_mean_params(&self) -> Result<MovementParams> {
        if self.is_empty() {
            return Err(Error::Empty("chain has no draws".into()));
        }
        MovementParams::from_ratio(
            mean(&self.meas_var),
            mean(&self.ratio_sq()),
            mean(&self.phi),
            self.origin,
        )
    }

    pub fn summaries(&self) -> ChainSummary {
        ChainSummary {
            meas_var: Summary::of(&self.meas_var),
            ratio_sq: Summary::of(&self.ratio_sq()),
            proc_var: Summary::of(&self.proc_var()),
            phi: Summary::of(&self.phi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub meas_var: Summary,
    pub ratio_sq: Summary,
    pub proc_var: Summary,
    pub phi: Summary,
}

/// Fit one model (optionally warped) to a track.
pub fn fit_single(track: &Track, warp: Option<&WarpSpec>, config: &FitConfig) -> Result<PosteriorChains> {
    let cache = precompute_phi_gram(track, warp, config)?;
    run_chain(&cache, warp, config, 0, config.seed)
}

/// Fit each model on its own sub-seed, in parallel. Model `l` uses
/// `substream(config.seed, l)`.
pub fn fit_models(track: &Track, warps: &[Option<WarpSpec>], config: &FitConfig) -> Result<Vec<PosteriorChains>> {
    Ok(fit_models_cached(track, warps, config)?
        .into_iter()
        .map(|(c, _)| c)
        .collect())
}

/// As [`fit_models`], also returning each model's cache for later
/// likelihood evaluation.
pub fn fit_models_cached(
    track: &Track,
    warps: &[Option<WarpSpec>],
    config: &FitConfig,
) -> Result<Vec<(PosteriorChains, PhiGramCache)>> {
    warps
        .par_iter()
        .enumerate()
        .map(|(l, w)| {
            let cache = precompute_phi_gram(track, w.as_ref(), config)?;
            let chains = run_chain(&cache, w.as_ref(), config, l, substream(config.seed, l as u64))?;
            Ok((chains, cache))
        })
        .collect()
}

/// Run the sampler against a prebuilt cache.
pub fn run_chain(
    cache: &PhiGramCache,
    warp: Option<&WarpSpec>,
    config: &FitConfig,
    model_id: usize,
    seed: u64,
) -> Result<PosteriorChains> {
    config.validate()?;
    if cache.len() != config.phi_grid.len() {
        return Err(Error::Dimension("cache does not match the phi grid".into()));
    }
    let mut rng = seeded(seed);
    let n = cache.n as f64;
    let prior = config.meas_var_prior;
    let lik = config.use_likelihood;
    let ll = |e: &PhiEntry, s2: f64, r: f64| if lik { e.loglik(s2, r) } else { 0.0 };

    let mut phi_pos = cache.len() / 2;
    let mut phi_idx = cache.order[phi_pos];
    let mut ratio = config.ratio_init;
    let mut log_step = 0.5f64.ln();

    let keep = config.stored_draws();
    let mut out = PosteriorChains {
        model_id,
        seed,
        warp: warp.cloned(),
        origin: cache.origin,
        meas_var: Vec::with_capacity(keep),
        ratio: Vec::with_capacity(keep),
        phi: Vec::with_capacity(keep),
        phi_index: Vec::with_capacity(keep),
        loglik: Vec::with_capacity(keep),
        ratio_accept: 0.0,
        ratio_step: 0.0,
        warnings: Vec::new(),
    };
    let mut accepted = 0usize;
    let mut weights = vec![0.0; cache.len()];

    for it in 0..config.iterations {
        let r = ratio * ratio;
        let entry = &cache.entries[phi_idx];

        // measurement variance: conjugate inverse gamma
        let post = if lik {
            InverseGamma {
                shape: prior.shape + n,
                scale: prior.scale + 0.5 * entry.quad(r),
            }
        } else {
            prior
        };
        let meas_var = post.sample(&mut rng);
        if !(meas_var > 0.0 && meas_var.is_finite()) {
            return Err(Error::numerical(
                "measurement variance draw is not positive and finite",
                format!("iteration={it}, ratio={ratio:e}, phi={:e}", entry.range),
            ));
        }

        // ratio: log-scale random walk, Jacobian rho'/rho
        let prop = ratio * (log_step.exp() * std_normal(&mut rng)).exp();
        let mut acc = false;
        if prop < config.ratio_upper {
            let log_a = ll(entry, meas_var, prop * prop) - ll(entry, meas_var, r) + (prop / ratio).ln();
            if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                ratio = prop;
                acc = true;
            }
        }
        if it < config.burn_in {
            let gain = (it as f64 + 1.0).powf(-0.6);
            log_step += gain * (f64::from(u8::from(acc)) - config.target_accept);
        } else if acc {
            accepted += 1;
        }

        // range: discrete full conditional, visited in sorted order
        let r = ratio * ratio;
        for (w, &i) in weights.iter_mut().zip(&cache.order) {
            *w = ll(&cache.entries[i], meas_var, r);
        }
        let lse = log_sum_exp(&weights);
        if !lse.is_finite() {
            return Err(Error::numerical(
                "phi full conditional is degenerate",
                format!("iteration={it}, meas_var={meas_var:e}, ratio={ratio:e}"),
            ));
        }
        let u: f64 = rng.random();
        let mut acc_p = 0.0;
        phi_pos = cache.len() - 1;
        for (pos, w) in weights.iter().enumerate() {
            acc_p += (w - lse).exp();
            if u < acc_p {
                phi_pos = pos;
                break;
            }
        }
        phi_idx = cache.order[phi_pos];

        if it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0 {
            let e = &cache.entries[phi_idx];
            out.meas_var.push(meas_var);
            out.ratio.push(ratio);
            out.phi.push(e.range);
            out.phi_index.push(phi_idx);
            out.loglik.push(e.loglik(meas_var, r));
        }
    }

    let sampled = config.iterations - config.burn_in;
    out.ratio_accept = accepted as f64 / sampled as f64;
    out.ratio_step = log_step.exp();
    if accepted == 0 {
        let msg = format!(
            "model {model_id}: every ratio proposal after adaptation was rejected (step {:.3e})",
            out.ratio_step
        );
        warn!("{msg}");
        out.warnings.push(msg);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWarp {
    /// Position in the candidate list.
    pub index: usize,
    pub warp: WarpSpec,
    pub deviance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    /// Deviance of the unwarped model at the same plug-in parameters.
    pub baseline_deviance: f64,
    pub params: MovementParams,
    /// Lowest-deviance candidates, best first.
    pub ranked: Vec<ScoredWarp>,
}

impl ScreenResult {
    /// The first `k` distinct warp centers in rank order.
    pub fn top_centers(&self, k: usize) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(k);
        for c in self.ranked.iter().filter_map(|s| s.warp.center()) {
            if out.len() == k {
                break;
            }
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }
}

/// Score warps by `-2 log L` at the baseline fit's posterior-mean parameters
/// and keep the `top_k` best.
pub fn deviance_screen(
    track: &Track,
    candidates: &[WarpSpec],
    baseline: &PosteriorChains,
    config: &FitConfig,
    top_k: usize,
) -> Result<ScreenResult> {
    let params = baseline.posterior_mean_params()?;
    let dev = |w: Option<&WarpSpec>| -> Result<f64> {
        let h = model_basis(&track.times, config, params.range, w)?;
        Ok(-2.0 * marginal_loglik(track, &h, &params)?)
    };
    let baseline_deviance = dev(None)?;
    let mut scored = candidates
        .par_iter()
        .enumerate()
        .map(|(index, w)| {
            Ok(ScoredWarp {
                index,
                warp: *w,
                deviance: dev(Some(w))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.deviance.total_cmp(&b.deviance).then(a.index.cmp(&b.index)));
    scored.truncate(top_k);
    Ok(ScreenResult {
        baseline_deviance,
        params,
        ranked: scored,
    })
}

//! Two-stage model averaging over fixed warps.
//!
//! Stage one fits each warp separately ([`crate::mcmc::fit_models_cached`]).
//! Every model shares the parameter triple `(sigma_s^2, sigma_{mu/s}^2, phi)`,
//! so stage two is a Gibbs chain over the model index alone: draw a stored
//! parameter vector from the current model, weigh every model's likelihood
//! at it, and resample the index.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{matheron_draw, residuals, GramSpectrum, SpectralSolve, TrajectoryDraws};
use crate::linalg::log_sum_exp;
use crate::mcmc::{model_basis, FitConfig, PhiGramCache, PosteriorChains};
use crate::rng::{seeded, Rng};
use crate::stats::mean;
use crate::telemetry::Track;
use crate::warp::{tdcf_derivative, WarpSpec};

pub const DEFAULT_STAGE_TWO_ITERATIONS: usize = 10_000;

/// Likelihood of the shared data under one model, at a parameter vector
/// indexed into the common range grid.
pub trait MixtureComponent {
    fn loglik_at(&self, meas_var: f64, ratio_sq: f64, phi_index: usize) -> f64;
}

impl MixtureComponent for PhiGramCache {
    fn loglik_at(&self, meas_var: f64, ratio_sq: f64, phi_index: usize) -> f64 {
        self.entries[phi_index].loglik(meas_var, ratio_sq)
    }
}

fn uniform(l: usize) -> Vec<f64> {
    vec![1.0 / l as f64; l]
}

fn check_prior(prior: &[f64], l: usize) -> Result<()> {
    if prior.len() != l {
        return Err(Error::Dimension(format!(
            "{} prior probabilities for {l} models",
            prior.len()
        )));
    }
    if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || prior.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidSpec(
            "prior probabilities must be non-negative with positive sum".into(),
        ));
    }
    Ok(())
}

/// Index of the category picked by `u` in `[0, 1)` from normalized log weights.
fn pick(logw: &[f64], lse: f64, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in logw.iter().enumerate() {
        let p = (w - lse).exp();
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

/// Posterior model probabilities as stage-two visit frequencies. The first
/// `iterations / 10` sweeps are discarded. `prior_probs` defaults to uniform.
pub fn posterior_model_probs<C: MixtureComponent>(
    models: &[PosteriorChains],
    components: &[C],
    prior_probs: Option<&[f64]>,
    iterations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let l = models.len();
    if l == 0 {
        return Err(Error::Empty("no models to average".into()));
    }
    if components.len() != l {
        return Err(Error::Dimension(format!(
            "{} likelihoods for {l} models",
            components.len()
        )));
    }
    let len = models[0].len();
    if len == 0 {
        return Err(Error::Empty("model chains are empty".into()));
    }
    if let Some(m) = models.iter().find(|m| m.len() != len) {
        return Err(Error::Dimension(format!(
            "chain lengths differ: model {} has {} draws, model 0 has {len}",
            m.model_id,
            m.len()
        )));
    }
    let prior = prior_probs.map_or_else(|| uniform(l), <[f64]>::to_vec);
    check_prior(&prior, l)?;
    if l == 1 {
        return Ok(vec![1.0]);
    }
    if iterations == 0 {
        return Err(Error::InvalidSpec("stage-two iterations must be positive".into()));
    }
    let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
    let burn = iterations / 10;
    let mut rng = seeded(seed);
    let mut current = (0..l)
        .max_by(|&a, &b| prior[a].total_cmp(&prior[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let mut visits = vec![0usize; l];
    let mut logw = vec![0.0; l];
    for it in 0..iterations {
        let chain = &models[current];
        let i = rng.random_range(0..len);
        let (s2, r, k) = (chain.meas_var[i], chain.ratio[i] * chain.ratio[i], chain.phi_index[i]);
        for (w, (c, lp)) in logw.iter_mut().zip(components.iter().zip(&log_prior)) {
            *w = if *lp == f64::NEG_INFINITY {
                *lp
            } else {
                c.loglik_at(s2, r, k) + lp
            };
        }
        let lse = log_sum_exp(&logw);
        if !lse.is_finite() {
            return Err(Error::numerical(
                "every model has zero weight at a stored draw",
                format!("model={current}, draw={i}, meas_var={s2:e}, ratio_sq={r:e}"),
            ));
        }
        current = pick(&logw, lse, rng.random());
        if it >= burn {
            visits[current] += 1;
        }
    }
    let total = (iterations - burn) as f64;
    Ok(visits.iter().map(|&v| v as f64 / total).collect())
}

/// A set of fixed-warp fits and their posterior probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpMixture {
    pub models: Vec<PosteriorChains>,
    pub probs: Vec<f64>,
    pub prior_probs: Vec<f64>,
}

impl WarpMixture {
    pub fn new(models: Vec<PosteriorChains>, probs: Vec<f64>, prior_probs: Option<Vec<f64>>) -> Result<Self> {
        let l = models.len();
        let prior_probs = prior_probs.unwrap_or_else(|| uniform(l));
        check_prior(&prior_probs, l)?;
        let mix = WarpMixture {
            models,
            probs,
            prior_probs,
        };
        mix.validate()?;
        Ok(mix)
    }

    /// Run stage two over `(chain, cache)` pairs from stage one.
    pub fn from_fits(
        fits: Vec<(PosteriorChains, PhiGramCache)>,
        prior_probs: Option<Vec<f64>>,
        iterations: usize,
        seed: u64,
    ) -> Result<Self> {
        let (models, caches): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
        let probs = posterior_model_probs(&models, &caches, prior_probs.as_deref(), iterations, seed)?;
        WarpMixture::new(models, probs, prior_probs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Empty("mixture has no models".into()));
        }
        if self.models.len() != self.probs.len() {
            return Err(Error::Dimension(format!(
                "{} probabilities for {} models",
                self.probs.len(),
                self.models.len()
            )));
        }
        if self.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidSpec("model probabilities must be non-negative".into()));
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!("model probabilities sum to {s}, not 1")));
        }
        Ok(())
    }

    pub fn warps(&self) -> Vec<Option<&WarpSpec>> {
        self.models.iter().map(|m| m.warp.as_ref()).collect()
    }
}

fn allocate(probs: &[f64], draws: usize, rng: &mut Rng) -> Vec<usize> {
    let logw: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let lse = log_sum_exp(&logw);
    let mut counts = vec![0; probs.len()];
    for _ in 0..draws {
        counts[pick(&logw, lse, rng.random())] += 1;
    }
    counts
}

/// `draws` model-averaged predictive paths at `pred_times`. Draws are
/// allocated to models multinomially by their probabilities; each uses a
/// stored parameter vector of its model and that model's warped basis.
/// `provenance` records the model index of each draw.
pub fn model_averaged_predict(
    track: &Track,
    mixture: &WarpMixture,
    config: &FitConfig,
    pred_times: &[f64],
    draws: usize,
    seed: u64,
) -> Result<TrajectoryDraws> {
    mixture.validate()?;
    track.validate()?;
    if draws == 0 {
        return Err(Error::InvalidSpec("draw count must be positive".into()));
    }
    if let Some(m) = mixture.models.iter().find(|m| m.is_empty()) {
        return Err(Error::Empty(format!("model {} has no draws", m.model_id)));
    }
    let mut rng = seeded(seed);
    let counts = allocate(&mixture.probs, draws, &mut rng);
    let mut out = TrajectoryDraws {
        times: pred_times.to_vec(),
        draws: Vec::with_capacity(draws),
        provenance: Vec::with_capacity(draws),
    };
    for (l, (model, &count)) in mixture.models.iter().zip(&counts).enumerate() {
        if count == 0 {
            continue;
        }
        // group this model's draws by range so each basis is built once
        let mut by_phi: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for _ in 0..count {
            let i = rng.random_range(0..model.len());
            by_phi.entry(model.phi_index[i]).or_default().push(i);
        }
        for (_, picks) in by_phi {
            let range = model.phi[picks[0]];
            let h_obs = model_basis(&track.times, config, range, model.warp.as_ref())?;
            let h_pred = model_basis(pred_times, config, range, model.warp.as_ref())?;
            let spec = GramSpectrum::new(&h_obs.values, h_obs.delta);
            let resid = residuals(track, model.origin);
            for i in picks {
                let p = model.params(i);
                let solver = SpectralSolve {
                    spec: &spec,
                    meas_var: p.meas_var,
                    ratio_sq: p.ratio_sq(),
                };
                let path = matheron_draw(
                    &solver,
                    &resid,
                    &h_obs.values,
                    &h_pred.values,
                    h_obs.delta,
                    p.meas_var,
                    p.proc_var,
                    p.origin,
                    &mut rng,
                );
                if path.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::numerical("non-finite predictive draw", p.describe()));
                }
                out.draws.push(path);
                out.provenance.push(l);
            }
        }
    }
    Ok(out)
}

/// Model-averaged `dw/dt` with a pointwise band from the discrete mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpDerivativeCurve {
    pub times: Vec<f64>,
    /// `per_model[l][i]`: model `l` at `times[i]`; unwarped models give 1.
    pub per_model: Vec<Vec<f64>>,
    pub averaged: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Derivative of the identity warp.
    pub reference: f64,
}

impl WarpDerivativeCurve {
    /// Time of the largest averaged derivative (first on ties).
    pub fn argmax(&self) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (&t, &v) in self.times.iter().zip(&self.averaged) {
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((t, v));
            }
        }
        best.map(|(t, _)| t)
    }
}

fn weighted_quantile(values: &[f64], probs: &[f64], q: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut acc = 0.0;
    for &i in &idx {
        acc += probs[i];
        if acc >= q {
            return values[i];
        }
    }
    values[*idx.last().expect("nonempty")]
}

/// `sum_l p_l dw_l/dt` at each of `times`, with the 2.5% and 97.5% points of
/// the model mixture.
pub fn averaged_warp_derivative(mixture: &WarpMixture, times: &[f64]) -> Result<WarpDerivativeCurve> {
    mixture.validate()?;
    let per_model = mixture
        .models
        .iter()
        .map(|m| {
            times
                .iter()
                .map(|&t| match &m.warp {
                    Some(w) => tdcf_derivative(w, t),
                    None => Ok(1.0),
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |i: usize| -> Vec<f64> { per_model.iter().map(|row| row[i]).collect() };
    let p = &mixture.probs;
    let averaged = (0..times.len())
        .map(|i| column(i).iter().zip(p).map(|(v, w)| v * w).sum())
        .collect();
    Ok(WarpDerivativeCurve {
        times: times.to_vec(),
        lower: (0..times.len())
            .map(|i| weighted_quantile(&column(i), p, 0.025))
            .collect(),
        upper: (0..times.len())
            .map(|i| weighted_quantile(&column(i), p, 0.975))
            .collect(),
        per_model,
        averaged,
        reference: 1.0,
    })
}

/// Mean of the draws contributed by each model, `None` where it contributed none.
pub fn per_model_means(draws: &TrajectoryDraws, models: usize) -> Vec<Option<Vec<[f64; 2]>>> {
    (0..models)
        .map(|l| {
            let rows: Vec<&Vec<[f64; 2]>> = draws
                .draws
                .iter()
                .zip(&draws.provenance)
                .filter(|(_, &p)| p == l)
                .map(|(d, _)| d)
                .collect();
            if rows.is_empty() {
                return None;
            }
            Some(
                (0..draws.times.len())
                    .map(|i| [0, 1].map(|k| mean(&rows.iter().map(|d| d[i][k]).collect::<Vec<f64>>())))
                    .collect(),
            )
        })
        .collect()
}

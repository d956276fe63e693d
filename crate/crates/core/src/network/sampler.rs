use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::design::GroupDesign;
use super::latent::{LatentPaths, LatentPrior};
use super::likelihood::{GroupContext, GroupFactor, GroupParams};
use super::{GroupModelSpec, NetworkMode};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, lower_mul};
use crate::priors::InverseGamma;
use crate::rng::{seeded, std_normal, Rng};
use crate::telemetry::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Target acceptance for the scalar random walks.
    pub target_accept: f64,
    /// Target acceptance for the latent-path block proposals.
    pub latent_target_accept: f64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 5,
            seed: 0,
            target_accept: 0.44,
            latent_target_accept: 0.234,
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidSpec(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 || (self.iterations - self.burn_in) / self.thin == 0 {
            return Err(Error::InvalidSpec("thinning leaves no stored draws".into()));
        }
        for a in [self.target_accept, self.latent_target_accept] {
            if !(0.0 < a && a < 1.0) {
                return Err(Error::InvalidSpec("target acceptance must be in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptRates {
    pub ratio_sq: f64,
    pub range: f64,
    pub latent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkChains {
    pub seed: u64,
    pub mode: NetworkMode,
    pub ids: Vec<String>,
    pub meas_var: Vec<f64>,
    pub ratio_sq: Vec<f64>,
    pub range: Vec<f64>,
    pub origin_var: Vec<f64>,
    pub origins: Vec<Vec<[f64; 2]>>,
    pub latent: Vec<LatentPaths>,
    pub loglik: Vec<f64>,
    /// Post-burn-in acceptance rates.
    pub accept: AcceptRates,
    pub warnings: Vec<String>,
}

impl NetworkChains {
    pub fn len(&self) -> usize {
        self.meas_var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meas_var.is_empty()
    }

    pub fn params(&self, i: usize) -> GroupParams {
        GroupParams {
            meas_var: self.meas_var[i],
            ratio_sq: self.ratio_sq[i],
            range: self.range[i],
            origins: self.origins[i].clone(),
        }
    }
}

/// Robbins-Monro update of a log step size during burn-in.
fn adapt(log_step: &mut f64, it: usize, accepted: bool, target: f64) {
    let gain = (it as f64 + 1.0).powf(-0.6);
    *log_step += gain * (f64::from(u8::from(accepted)) - target);
}

fn accept(rng: &mut Rng, log_a: f64) -> bool {
    log_a >= 0.0 || rng.random::<f64>().ln() < log_a
}

struct Current {
    meas_var: f64,
    ratio_sq: f64,
    range: f64,
    origins: Vec<[f64; 2]>,
    origin_var: f64,
    z: LatentPaths,
    h: DMatrix<f64>,
    k: DMatrix<f64>,
    w: DMatrix<f64>,
    factor: GroupFactor,
}

impl Current {
    fn describe(&self) -> String {
        format!(
            "meas_var={:e}, ratio_sq={:e}, range={:e}, origin_var={:e}",
            self.meas_var, self.ratio_sq, self.range, self.origin_var
        )
    }
}

/// Metropolis-within-Gibbs over `(sigma_s^2, mu_0, sigma_0^2, sigma^2_{mu/s}, phi, z)`.
pub fn fit_group(tracks: &[Track], spec: &GroupModelSpec, settings: &ChainSettings) -> Result<NetworkChains> {
    spec.validate()?;
    settings.validate()?;
    let schedules: Vec<Vec<f64>> = tracks.iter().map(|t| t.times.clone()).collect();
    let design = GroupDesign::new(spec, &schedules)?;
    let ctx = GroupContext::new(&design, tracks, spec.route)?;
    let prior = LatentPrior::new(spec)?;
    let j_count = spec.individuals;
    let n = ctx.n() as f64;
    let x = design.indicator();
    let sample_latent = spec.mode == NetworkMode::Latent && j_count > 1;

    let gram = |h: &DMatrix<f64>| {
        if ctx.woodbury {
            DMatrix::zeros(0, 0)
        } else {
            design.unit_gram(h)
        }
    };

    let mut rng = seeded(settings.seed);
    let range = spec.range_prior.shape / spec.range_prior.rate;
    let z = LatentPaths::zeros(j_count, spec.latent_nodes);
    let h = design.integrated_basis(range)?;
    let k = gram(&h);
    let w = design.mixing(&z);
    let factor = ctx.factor(&h, &k, &w, 1.0, "initial state")?;
    let mut cur = Current {
        meas_var: 1.0,
        ratio_sq: 1.0,
        range,
        origins: tracks.iter().map(Track::first).collect(),
        origin_var: 10.0,
        z,
        h,
        k,
        w,
        factor,
    };
    let mut lp_z: Vec<f64> = cur.z.z.iter().map(|zj| prior.logpdf_individual(zj)).collect();

    let mut step_r = 0.5f64.ln();
    let mut step_phi = 0.3f64.ln();
    let mut step_z = vec![0.1f64.ln(); j_count];
    let (mut acc_r, mut acc_phi, mut acc_z) = (0usize, 0usize, 0usize);

    let keep = (settings.iterations - settings.burn_in) / settings.thin;
    let mut out = NetworkChains {
        seed: settings.seed,
        mode: spec.mode,
        ids: tracks.iter().map(|t| t.id.clone()).collect(),
        meas_var: Vec::with_capacity(keep),
        ratio_sq: Vec::with_capacity(keep),
        range: Vec::with_capacity(keep),
        origin_var: Vec::with_capacity(keep),
        origins: Vec::with_capacity(keep),
        latent: Vec::with_capacity(keep),
        loglik: Vec::with_capacity(keep),
        accept: AcceptRates {
            ratio_sq: 0.0,
            range: 0.0,
            latent: 0.0,
        },
        warnings: Vec::new(),
    };

    for it in 0..settings.iterations {
        let burning = it < settings.burn_in;

        // measurement variance
        let q = ctx.quad(&cur.factor, &cur.origins);
        cur.meas_var = InverseGamma {
            shape: spec.meas_var_prior.shape + n,
            scale: spec.meas_var_prior.scale + 0.5 * q,
        }
        .sample(&mut rng);

        // origins: Normal full conditional per coordinate
        let rx = DMatrix::from_columns(
            &(0..j_count)
                .map(|c| cur.factor.solve(&x.column(c).into_owned()))
                .collect::<Vec<_>>(),
        );
        let mut prec = x.tr_mul(&rx) / cur.meas_var;
        for c in 0..j_count {
            prec[(c, c)] += 1.0 / cur.origin_var;
        }
        let pchol = cholesky_jittered(prec, &cur.describe())?;
        for c in 0..2 {
            let b = rx.tr_mul(&ctx.y[c]) / cur.meas_var;
            let mean = pchol.solve(&b);
            let xi = DVector::from_fn(j_count, |_, _| std_normal(&mut rng));
            let dev = pchol
                .l_dirty()
                .transpose()
                .solve_upper_triangular(&xi)
                .expect("cholesky factor has a positive diagonal");
            for j in 0..j_count {
                cur.origins[j][c] = mean[j] + dev[j];
            }
        }

        // origin variance
        let ss: f64 = cur.origins.iter().flatten().map(|v| v * v).sum();
        cur.origin_var = InverseGamma {
            shape: spec.origin_var_prior.shape + j_count as f64,
            scale: spec.origin_var_prior.scale + 0.5 * ss,
        }
        .sample(&mut rng);

        let mut ll = ctx.loglik(&cur.factor, cur.meas_var, &cur.origins);
        if !ll.is_finite() {
            return Err(Error::numerical("non-finite group log likelihood", cur.describe()));
        }

        // variance ratio: log-scale random walk
        let prop = cur.ratio_sq * (step_r.exp() * std_normal(&mut rng)).exp();
        let f = ctx.factor(&cur.h, &cur.k, &cur.w, prop, &cur.describe())?;
        let ll_p = ctx.loglik(&f, cur.meas_var, &cur.origins);
        let log_a = ll_p - ll + spec.ratio_sq_prior.ln_pdf(prop) - spec.ratio_sq_prior.ln_pdf(cur.ratio_sq)
            + (prop / cur.ratio_sq).ln();
        let ok = ll_p.is_finite() && accept(&mut rng, log_a);
        if ok {
            cur.ratio_sq = prop;
            cur.factor = f;
            ll = ll_p;
        }
        if burning {
            adapt(&mut step_r, it, ok, settings.target_accept);
        } else if ok {
            acc_r += 1;
        }

        // smoothing range: log-scale random walk
        let prop = cur.range * (step_phi.exp() * std_normal(&mut rng)).exp();
        let h_p = design.integrated_basis(prop)?;
        let k_p = gram(&h_p);
        let f = ctx.factor(&h_p, &k_p, &cur.w, cur.ratio_sq, &cur.describe())?;
        let ll_p = ctx.loglik(&f, cur.meas_var, &cur.origins);
        let log_a =
            ll_p - ll + spec.range_prior.ln_pdf(prop) - spec.range_prior.ln_pdf(cur.range) + (prop / cur.range).ln();
        let ok = ll_p.is_finite() && accept(&mut rng, log_a);
        if ok {
            cur.range = prop;
            cur.h = h_p;
            cur.k = k_p;
            cur.factor = f;
            ll = ll_p;
        }
        if burning {
            adapt(&mut step_phi, it, ok, settings.target_accept);
        } else if ok {
            acc_phi += 1;
        }

        // latent paths: prior-shaped block proposals, one individual at a time
        if sample_latent {
            for j in 0..j_count {
                let eps = step_z[j].exp();
                let mut z_p = cur.z.clone();
                for c in 0..2 {
                    let xi = DVector::from_fn(spec.latent_nodes, |_, _| std_normal(&mut rng));
                    let d = lower_mul(prior.factor(), &xi);
                    for q in 0..spec.latent_nodes {
                        z_p.z[j][q][c] += eps * d[q];
                    }
                }
                let lp_p = prior.logpdf_individual(&z_p.z[j]);
                let w_p = design.mixing(&z_p);
                let f = ctx.factor(&cur.h, &cur.k, &w_p, cur.ratio_sq, &cur.describe())?;
                let ll_p = ctx.loglik(&f, cur.meas_var, &cur.origins);
                let ok = ll_p.is_finite() && accept(&mut rng, ll_p - ll + lp_p - lp_z[j]);
                if ok {
                    cur.z = z_p;
                    cur.w = w_p;
                    cur.factor = f;
                    lp_z[j] = lp_p;
                    ll = ll_p;
                }
                if burning {
                    adapt(&mut step_z[j], it, ok, settings.latent_target_accept);
                } else if ok {
                    acc_z += 1;
                }
            }
        }

        if !burning && (it - settings.burn_in + 1) % settings.thin == 0 {
            out.meas_var.push(cur.meas_var);
            out.ratio_sq.push(cur.ratio_sq);
            out.range.push(cur.range);
            out.origin_var.push(cur.origin_var);
            out.origins.push(cur.origins.clone());
            out.latent.push(cur.z.clone());
            out.loglik.push(ll);
        }
    }

    let sampled = (settings.iterations - settings.burn_in) as f64;
    out.accept = AcceptRates {
        ratio_sq: acc_r as f64 / sampled,
        range: acc_phi as f64 / sampled,
        latent: if sample_latent {
            acc_z as f64 / (sampled * j_count as f64)
        } else {
            0.0
        },
    };
    for (name, rate) in [("ratio", out.accept.ratio_sq), ("range", out.accept.range)] {
        if rate == 0.0 {
            let msg = format!("every {name} proposal after burn-in was rejected");
            warn!("{msg}");
            out.warnings.push(msg);
        }
    }
    if sample_latent && acc_z == 0 {
        let msg = "every latent-path proposal after burn-in was rejected".to_string();
        warn!("{msg}");
        out.warnings.push(msg);
    }
    Ok(out)
}

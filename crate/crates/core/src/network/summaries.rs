use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::design::GroupDesign;
use super::latent::{interpolate_latent, weights_from_positions, NetworkWeights};
use super::likelihood::GroupContext;
use super::sampler::{fit_group, ChainSettings, NetworkChains};
use super::{GroupModelSpec, NetworkMode};
use crate::error::{Error, Result};
use crate::gp::{credible_radius_at, TrajectoryDraws};
use crate::rng::{seeded, std_normal, substream};
use crate::stats::Summary;
use crate::telemetry::Track;

fn nonempty(chains: &NetworkChains) -> Result<()> {
    if chains.is_empty() {
        Err(Error::Empty("network chain has no draws".into()))
    } else {
        Ok(())
    }
}

/// Posterior-mean network weights at `times`.
pub fn mean_weights(chains: &NetworkChains, spec: &GroupModelSpec, times: &[f64]) -> Result<NetworkWeights> {
    nonempty(chains)?;
    let j = spec.individuals;
    let mut acc = vec![DMatrix::zeros(j, j); times.len()];
    for z in &chains.latent {
        let w = weights_from_positions(&interpolate_latent(z, spec, times)?, times);
        for (a, m) in acc.iter_mut().zip(&w.nu) {
            *a += m;
        }
    }
    let d = chains.len() as f64;
    Ok(NetworkWeights {
        times: times.to_vec(),
        nu: acc.into_iter().map(|m| m / d).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCurve {
    pub id: String,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
}

/// Posterior of each individual's degree at `times`, mapped over every draw.
pub fn degree_curves(chains: &NetworkChains, spec: &GroupModelSpec, times: &[f64]) -> Result<Vec<DegreeCurve>> {
    nonempty(chains)?;
    let j = spec.individuals;
    // samples[j][t] over draws
    let mut samples = vec![vec![Vec::with_capacity(chains.len()); times.len()]; j];
    for z in &chains.latent {
        let w = weights_from_positions(&interpolate_latent(z, spec, times)?, times);
        for (t, nu) in w.nu.iter().enumerate() {
            for (a, s) in samples.iter_mut().enumerate() {
                s[t].push(nu.row(a).sum() - nu[(a, a)]);
            }
        }
    }
    Ok(samples
        .into_iter()
        .enumerate()
        .map(|(a, per_t)| {
            let sums: Vec<Summary> = per_t.iter().map(|v| Summary::of(v)).collect();
            DegreeCurve {
                id: chains.ids.get(a).cloned().unwrap_or_else(|| format!("ind{}", a + 1)),
                times: times.to_vec(),
                mean: sums.iter().map(|s| s.mean).collect(),
                q025: sums.iter().map(|s| s.q025).collect(),
                q975: sums.iter().map(|s| s.q975).collect(),
            }
        })
        .collect())
}

/// Predictive path draws for each individual of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDraws {
    pub ids: Vec<String>,
    pub individuals: Vec<TrajectoryDraws>,
}

/// Posterior-predictive draws of every individual's latent path at
/// `pred_times[j]`. Each draw picks a stored parameter set at random and
/// samples the conditional path by Matheron's rule.
pub fn group_predict(
    tracks: &[Track],
    spec: &GroupModelSpec,
    chains: &NetworkChains,
    pred_times: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Result<GroupDraws> {
    nonempty(chains)?;
    if draws == 0 {
        return Err(Error::InvalidSpec("draw count must be positive".into()));
    }
    let schedules: Vec<Vec<f64>> = tracks.iter().map(|t| t.times.clone()).collect();
    let obs = GroupDesign::new(spec, &schedules)?;
    let pred = GroupDesign::new(spec, pred_times)?;
    let ctx = GroupContext::new(&obs, tracks, spec.route)?;
    let delta = obs.grid.delta();
    let jm = spec.individuals * obs.grid.len();
    let n = obs.n_total();
    let mut rng = seeded(seed);
    let mut out: Vec<TrajectoryDraws> = pred_times
        .iter()
        .map(|t| TrajectoryDraws {
            times: t.clone(),
            draws: Vec::with_capacity(draws),
            provenance: Vec::with_capacity(draws),
        })
        .collect();
    let ranges = pred.row_ranges();
    for _ in 0..draws {
        let d = rng.random_range(0..chains.len());
        let p = chains.params(d);
        let z = &chains.latent[d];
        let h = obs.integrated_basis(p.range)?;
        let w = obs.mixing(z);
        let b_obs = obs.mixed_from(&h, &w);
        let b_pred = pred.mixed_from(&pred.integrated_basis(p.range)?, &pred.mixing(z));
        let k = if ctx.woodbury {
            DMatrix::zeros(0, 0)
        } else {
            obs.unit_gram(&h)
        };
        let f = ctx.factor(&h, &k, &w, p.ratio_sq, &p.describe())?;
        let resid = ctx.residuals(&p.origins);
        let sd_mu = (p.ratio_sq * p.meas_var).sqrt();
        let sd_s = p.meas_var.sqrt();
        let mut paths = vec![[0.0; 2]; pred.n_total()];
        for c in 0..2 {
            let bstar = DVector::from_fn(jm, |_, _| delta.sqrt() * std_normal(&mut rng));
            let eps = DVector::from_fn(n, |_, _| sd_s * std_normal(&mut rng));
            let sstar = &b_obs * &bstar * sd_mu + eps;
            let v = f.solve(&(&resid[c] - sstar)) / p.meas_var;
            let coef = bstar + b_obs.tr_mul(&v) * (sd_mu * delta);
            let path = &b_pred * coef * sd_mu;
            for (r, &j) in pred.owner.iter().enumerate() {
                paths[r][c] = p.origins[j][c] + path[r];
            }
        }
        if paths.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite predictive draw", p.describe()));
        }
        for (j, rows) in ranges.iter().enumerate() {
            out[j].draws.push(paths[rows.clone()].to_vec());
            out[j].provenance.push(d);
        }
    }
    Ok(GroupDraws {
        ids: tracks.iter().map(|t| t.id.clone()).collect(),
        individuals: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyCurve {
    pub id: String,
    pub times: Vec<f64>,
    pub radius_joint: Vec<f64>,
    pub radius_independent: Vec<f64>,
}

/// Single-individual version of `spec`: no mixing, own parameters.
pub fn individual_spec(spec: &GroupModelSpec) -> GroupModelSpec {
    GroupModelSpec {
        individuals: 1,
        mode: NetworkMode::Independent,
        ..spec.clone()
    }
}

/// Fit every individual on its own with [`individual_spec`]. Individual `j`
/// uses seed `substream(settings.seed, j)`.
pub fn fit_individually(
    tracks: &[Track],
    spec: &GroupModelSpec,
    settings: &ChainSettings,
) -> Result<Vec<NetworkChains>> {
    let single = individual_spec(spec);
    tracks
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let s = ChainSettings {
                seed: substream(settings.seed, j as u64),
                ..settings.clone()
            };
            fit_group(std::slice::from_ref(t), &single, &s)
        })
        .collect()
}

/// Credible-circle radii of each individual under a joint network fit and
/// under separate per-individual fits (`independent[j]` from
/// [`fit_individually`]).
#[allow(clippy::too_many_arguments)]
pub fn uncertainty_comparison(
    tracks: &[Track],
    spec: &GroupModelSpec,
    joint: &NetworkChains,
    independent: &[NetworkChains],
    times: &[f64],
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<UncertaintyCurve>> {
    if independent.len() != tracks.len() {
        return Err(Error::Dimension(format!(
            "{} independent fits for {} individuals",
            independent.len(),
            tracks.len()
        )));
    }
    let pred: Vec<Vec<f64>> = vec![times.to_vec(); tracks.len()];
    let a = group_predict(tracks, spec, joint, &pred, draws, seed)?;
    let single = individual_spec(spec);
    let radii = |d: &TrajectoryDraws| -> Result<Vec<f64>> {
        (0..times.len()).map(|i| credible_radius_at(d, i, level)).collect()
    };
    tracks
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let b = group_predict(
                std::slice::from_ref(t),
                &single,
                &independent[j],
                &pred[..1],
                draws,
                substream(seed, j as u64),
            )?;
            Ok(UncertaintyCurve {
                id: t.id.clone(),
                times: times.to_vec(),
                radius_joint: radii(&a.individuals[j])?,
                radius_independent: radii(&b.individuals[0])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LatentPaths, NetworkMode};

    fn chains_with(z: Vec<LatentPaths>) -> NetworkChains {
        let d = z.len();
        NetworkChains {
            seed: 0,
            mode: NetworkMode::Latent,
            ids: vec!["a".into(), "b".into(), "c".into()],
            meas_var: vec![0.01; d],
            ratio_sq: vec![10.0; d],
            range: vec![0.01; d],
            origin_var: vec![1.0; d],
            origins: vec![vec![[0.0; 2]; 3]; d],
            latent: z,
            loglik: vec![0.0; d],
            accept: super::super::sampler::AcceptRates {
                ratio_sq: 0.0,
                range: 0.0,
                latent: 0.0,
            },
            warnings: vec![],
        }
    }

    fn spec() -> GroupModelSpec {
        GroupModelSpec {
            individuals: 3,
            grid_nodes: 30,
            latent_nodes: 5,
            ..GroupModelSpec::default()
        }
    }

    #[test]
    fn degree_bounds_hold_for_every_draw() {
        let z = vec![
            LatentPaths::constant(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]], 5),
            LatentPaths::constant(&[[0.0, 0.0], [0.5, 0.0], [9.0, 0.0]], 5),
        ];
        let c = chains_with(z);
        let curves = degree_curves(&c, &spec(), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(curves.len(), 3);
        for cv in &curves {
            assert!(cv.q025.iter().chain(&cv.q975).all(|&d| (0.0..=2.0).contains(&d)));
        }
        // draw 1 is fully coincident (degree 2), draw 2 has a close pair
        let expect = 0.5 * (2.0 + (-0.25f64).exp() + (-81f64).exp());
        assert!((curves[0].mean[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn predictions_are_deterministic_and_finite() {
        let s = spec();
        let mut rng = seeded(1);
        let tracks: Vec<Track> = (0..3)
            .map(|j| {
                let t: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) / 8.0).collect();
                let xy = t
                    .iter()
                    .map(|_| [0.1 * std_normal(&mut rng), 0.1 * std_normal(&mut rng)])
                    .collect();
                Track::new(format!("i{j}"), t, xy).unwrap()
            })
            .collect();
        let settings = ChainSettings {
            iterations: 60,
            burn_in: 20,
            thin: 4,
            seed: 3,
            ..ChainSettings::default()
        };
        let ch = fit_group(&tracks, &s, &settings).unwrap();
        assert_eq!(ch, fit_group(&tracks, &s, &settings).unwrap());
        let pt = vec![vec![0.1, 0.5, 0.9]; 3];
        let a = group_predict(&tracks, &s, &ch, &pt, 10, 5).unwrap();
        let b = group_predict(&tracks, &s, &ch, &pt, 10, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.individuals.iter().all(|d| d.draws.len() == 10));

        let ind = fit_individually(&tracks, &s, &settings).unwrap();
        assert_eq!(ind.len(), 3);
        assert_eq!(ind[1].ids, vec!["i1".to_string()]);
        let u = uncertainty_comparison(&tracks, &s, &ch, &ind, &[0.2, 0.6], 0.95, 100, 1).unwrap();
        assert!(u
            .iter()
            .all(|c| c.radius_independent.iter().all(|r| r.is_finite() && *r > 0.0)));
        assert!(uncertainty_comparison(&tracks, &s, &ch, &ind[..2], &[0.2], 0.95, 20, 1).is_err());
    }
}

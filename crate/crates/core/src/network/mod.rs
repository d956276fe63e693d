//! Multi-individual nested convolutions with a latent-space dynamic network.
//!
//! Each individual's white noise is integrated to Brownian motion, smoothed
//! by a gaussian kernel, and finally mixed across individuals at each time
//! with row-normalized network weights
//! `nu_jk(t) = exp(-|z_j(t) - z_k(t)|^2)`, where the latent points `z_j(t)`
//! follow their own convolution prior.
//!
//! Brownian integration followed by gaussian smoothing is the
//! gaussian-integrated basis of [`crate::kernels`], so the stacked design is
//! `B[(j, i), (k, l)] = a_jk(t_ji) h(t_ji, tau_l)` with `a` the mixing
//! weights. Its unit Gram `delta B B'` equals `(W W') ∘ K`, where
//! `W[(j, i), k] = a_jk(t_ji)` and `K = delta H H'` over all stacked rows.

mod design;
mod latent;
mod likelihood;
mod sampler;
mod summaries;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::LikelihoodRoute;
use crate::kernels::TimeGrid;
use crate::priors::{GammaPrior, InverseGamma};

pub use design::GroupDesign;
pub use latent::{
    build_h3, degree, interpolate_latent, latent_z_logprior, network_weights, LatentPaths, LatentPrior, NetworkWeights,
};
pub use likelihood::{group_loglik, group_loglik_with, GroupParams};
pub use sampler::{fit_group, ChainSettings, NetworkChains};
pub use summaries::{
    degree_curves, fit_individually, group_predict, individual_spec, mean_weights, uncertainty_comparison, DegreeCurve,
    GroupDraws, UncertaintyCurve,
};

/// Whether individuals interact through the latent network or move
/// independently (all cross weights zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkMode {
    Latent,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupModelSpec {
    /// Number of individuals `J`.
    pub individuals: usize,
    /// Movement integration grid size `m`.
    pub grid_nodes: usize,
    /// Latent network grid size `m_w`.
    pub latent_nodes: usize,
    pub domain: [f64; 2],
    /// Network density hyperparameter `sigma_z`.
    pub latent_sd: f64,
    /// Latent kernel range `phi_z`.
    pub latent_range: f64,
    pub meas_var_prior: InverseGamma,
    /// Prior on `sigma^2_{mu/s}`.
    pub ratio_sq_prior: InverseGamma,
    /// Prior on the smoothing range `phi` (shape, rate).
    pub range_prior: GammaPrior,
    /// Prior on the origin variance `sigma_0^2`.
    pub origin_var_prior: InverseGamma,
    /// Recorded for completeness; it does not enter the group likelihood.
    pub aux_var_prior: InverseGamma,
    pub route: LikelihoodRoute,
    pub mode: NetworkMode,
}

impl Default for GroupModelSpec {
    fn default() -> Self {
        GroupModelSpec {
            individuals: 1,
            grid_nodes: 260,
            latent_nodes: 15,
            domain: [0.0, 1.0],
            latent_sd: 10.0,
            latent_range: 0.08,
            meas_var_prior: InverseGamma {
                shape: 1e-3,
                scale: 1e-3,
            },
            ratio_sq_prior: InverseGamma {
                shape: 1e-3,
                scale: 1e-3,
            },
            range_prior: GammaPrior {
                shape: 2.0,
                rate: 200.0,
            },
            origin_var_prior: InverseGamma {
                shape: 1.0,
                scale: 10.0,
            },
            aux_var_prior: InverseGamma {
                shape: 52.0,
                scale: 10.0,
            },
            route: LikelihoodRoute::Auto,
            mode: NetworkMode::Latent,
        }
    }
}

impl GroupModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.individuals == 0 {
            return Err(Error::InvalidSpec("group needs at least one individual".into()));
        }
        if self.latent_nodes < 2 || self.latent_nodes > self.grid_nodes {
            return Err(Error::InvalidSpec(format!(
                "latent grid size {} must be in [2, {}]",
                self.latent_nodes, self.grid_nodes
            )));
        }
        if !(self.latent_sd > 0.0 && self.latent_range > 0.0) {
            return Err(Error::InvalidSpec("latent sd and latent range must be positive".into()));
        }
        self.meas_var_prior.validate()?;
        self.ratio_sq_prior.validate()?;
        self.range_prior.validate()?;
        self.origin_var_prior.validate()?;
        self.aux_var_prior.validate()?;
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.domain[0], self.domain[1], self.grid_nodes)
    }

    pub fn latent_grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.domain[0], self.domain[1], self.latent_nodes)
    }
}

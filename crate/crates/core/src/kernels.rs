//! Convolution kernels and their discretized basis matrices.
//!
//! A movement path is `mu(t) = mu_0 + sum_j h(t, tau_j) db(tau_j)` over the
//! nodes of a [`TimeGrid`], where `db` is white noise with variance `delta`
//! per node. Three kernel families are available:
//!
//! * brownian indicator: `h(t, tau) = 1{tau < t}`;
//! * gaussian: `g(t, tau) = exp(-(w(t) - tau)^2 / phi)`;
//! * gaussian-integrated: `h(t, tau) = delta * sum_{tau_k > tau} g(t, tau_k)`,
//!   the grid approximation of `∫_tau^{t_end} g(t, x) dx`.
//!
//! With this discretization the integrated basis is exactly the product of
//! the gaussian and brownian bases: `H_int = H_gauss * H_brown * delta`.
//! Warps act on evaluation times only, never on grid nodes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warp::WarpSpec;

/// Equally spaced integration nodes on `[t_start, t_end]`, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    nodes: Vec<f64>,
    delta: f64,
}

impl TimeGrid {
    pub fn uniform(t_start: f64, t_end: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidSpec(format!("time grid needs at least 2 nodes, got {m}")));
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_end > t_start) {
            return Err(Error::InvalidSpec(format!(
                "time grid bounds [{t_start}, {t_end}] are empty"
            )));
        }
        let delta = (t_end - t_start) / (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|j| t_start + j as f64 * delta).collect();
        nodes[m - 1] = t_end;
        Ok(TimeGrid {
            t_start,
            t_end,
            nodes,
            delta,
        })
    }

    /// `m` nodes on the unit interval.
    pub fn unit(m: usize) -> Result<Self> {
        Self::uniform(0.0, 1.0, m)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn contains(&self, t: f64) -> bool {
        let tol = 1e-12 * (self.t_end - self.t_start).max(1.0);
        t.is_finite() && t >= self.t_start - tol && t <= self.t_end + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    BrownianIndicator,
    Gaussian,
    GaussianIntegrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Range `phi` in squared scaled-time units; ignored by the brownian family.
    pub range: f64,
}

impl KernelSpec {
    pub fn brownian() -> Self {
        KernelSpec {
            family: KernelFamily::BrownianIndicator,
            range: 0.0,
        }
    }

    pub fn gaussian(range: f64) -> Result<Self> {
        let spec = KernelSpec {
            family: KernelFamily::Gaussian,
            range,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian_integrated(range: f64) -> Result<Self> {
        let spec = KernelSpec {
            family: KernelFamily::GaussianIntegrated,
            range,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.family != KernelFamily::BrownianIndicator && !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "gaussian kernel range must be > 0, got {}",
                self.range
            )));
        }
        Ok(())
    }
}

#[inline]
fn warped(t: f64, warp: Option<&WarpSpec>) -> f64 {
    match warp {
        Some(w) => w.warp_unchecked(t),
        None => t,
    }
}

#[inline]
fn gauss(wt: f64, tau: f64, range: f64) -> f64 {
    let d = wt - tau;
    (-d * d / range).exp()
}

/// Kernel weight at `(t, tau)`. Gaussian families return the un-integrated
/// kernel `g`; the brownian indicator ignores any warp.
pub fn eval_kernel(spec: &KernelSpec, t: f64, tau: f64, warp: Option<&WarpSpec>) -> Result<f64> {
    spec.validate()?;
    if !(t.is_finite() && tau.is_finite()) {
        return Err(Error::Domain(format!("non-finite kernel argument ({t}, {tau})")));
    }
    Ok(match spec.family {
        KernelFamily::BrownianIndicator => {
            if tau < t {
                1.0
            } else {
                0.0
            }
        }
        KernelFamily::Gaussian | KernelFamily::GaussianIntegrated => gauss(warped(t, warp), tau, spec.range),
    })
}

/// Grid approximation of `∫_tau^{t_end} g(t, x) dx`: `delta` times the sum of
/// `g(t, tau_k)` over nodes strictly above `tau`. Zero when `tau >= t_end`.
pub fn integrated_basis(spec: &KernelSpec, grid: &TimeGrid, t: f64, tau: f64, warp: Option<&WarpSpec>) -> Result<f64> {
    if spec.family == KernelFamily::BrownianIndicator {
        return Err(Error::InvalidSpec("integrated basis requires a gaussian kernel".into()));
    }
    spec.validate()?;
    let wt = warped(t, warp);
    let sum: f64 = grid
        .nodes()
        .iter()
        .filter(|&&x| x > tau)
        .map(|&x| gauss(wt, x, spec.range))
        .sum();
    Ok(sum * grid.delta())
}

/// `n x m` matrix of kernel evaluations at observation times (rows) and grid
/// nodes (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub values: DMatrix<f64>,
    pub delta: f64,
}

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Evaluate the basis for `spec` at every `(obs_time, node)` pair.
pub fn build_basis(
    spec: &KernelSpec,
    obs_times: &[f64],
    grid: &TimeGrid,
    warp: Option<&WarpSpec>,
) -> Result<BasisMatrix> {
    spec.validate()?;
    if obs_times.is_empty() {
        return Err(Error::Empty("basis needs at least one evaluation time".into()));
    }
    if let Some(t) = obs_times.iter().find(|&&t| !grid.contains(t)) {
        return Err(Error::Domain(format!(
            "evaluation time {t} outside grid [{}, {}]",
            grid.t_start(),
            grid.t_end()
        )));
    }
    if let Some(w) = warp {
        w.validate()?;
    }
    let n = obs_times.len();
    let nodes = grid.nodes();
    let m = nodes.len();
    let delta = grid.delta();
    let mut values = DMatrix::zeros(n, m);
    match spec.family {
        KernelFamily::BrownianIndicator => {
            for (i, &t) in obs_times.iter().enumerate() {
                for (j, &tau) in nodes.iter().enumerate() {
                    if tau < t {
                        values[(i, j)] = 1.0;
                    }
                }
            }
        }
        KernelFamily::Gaussian => {
            for (i, &t) in obs_times.iter().enumerate() {
                let wt = warped(t, warp);
                for (j, &tau) in nodes.iter().enumerate() {
                    values[(i, j)] = gauss(wt, tau, spec.range);
                }
            }
        }
        KernelFamily::GaussianIntegrated => {
            let mut g = vec![0.0; m];
            for (i, &t) in obs_times.iter().enumerate() {
                let wt = warped(t, warp);
                for (gk, &tau) in g.iter_mut().zip(nodes) {
                    *gk = gauss(wt, tau, spec.range);
                }
                // reverse cumulative sum over nodes strictly after column j
                let mut acc = 0.0;
                for j in (0..m).rev() {
                    values[(i, j)] = acc * delta;
                    acc += g[j];
                }
            }
        }
    }
    Ok(BasisMatrix {
        rows: obs_times.to_vec(),
        cols: nodes.to_vec(),
        values,
        delta,
    })
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::GroupModelSpec;
use crate::error::{Error, Result};
use crate::kernels::TimeGrid;
use crate::linalg::{chol_logdet, cholesky_jittered, LN_2PI};

/// Latent positions `z_j` at the latent grid nodes, `z[j][q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPaths {
    pub z: Vec<Vec<[f64; 2]>>,
}

impl LatentPaths {
    pub fn zeros(individuals: usize, nodes: usize) -> Self {
        LatentPaths {
            z: vec![vec![[0.0; 2]; nodes]; individuals],
        }
    }

    /// Every individual held at a fixed latent point for all time.
    pub fn constant(points: &[[f64; 2]], nodes: usize) -> Self {
        LatentPaths {
            z: points.iter().map(|&p| vec![p; nodes]).collect(),
        }
    }

    pub fn individuals(&self) -> usize {
        self.z.len()
    }

    pub fn check(&self, spec: &GroupModelSpec) -> Result<()> {
        if self.z.len() != spec.individuals || self.z.iter().any(|zj| zj.len() != spec.latent_nodes) {
            return Err(Error::Dimension(format!(
                "latent paths must be {} x {}",
                spec.individuals, spec.latent_nodes
            )));
        }
        if self.z.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("latent positions must be finite".into()));
        }
        Ok(())
    }
}

/// Gaussian-process prior on each latent coordinate path:
/// `N(0, sigma_z^2 delta_w H_z H_z')` on the latent grid.
#[derive(Debug, Clone)]
pub struct LatentPrior {
    chol: Cholesky<f64, Dyn>,
    logdet: f64,
    nodes: usize,
}

impl LatentPrior {
    pub fn new(spec: &GroupModelSpec) -> Result<Self> {
        spec.validate()?;
        let cov = latent_covariance(&spec.latent_grid()?, spec.latent_sd, spec.latent_range);
        let chol = cholesky_jittered(
            cov,
            &format!("latent_sd={}, latent_range={}", spec.latent_sd, spec.latent_range),
        )?;
        let logdet = chol_logdet(&chol);
        Ok(LatentPrior {
            chol,
            logdet,
            nodes: spec.latent_nodes,
        })
    }

    pub fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Log density of one coordinate path of one individual.
    pub fn logpdf_path(&self, values: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(values)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (self.nodes as f64 * LN_2PI + self.logdet + z.norm_squared())
    }

    pub fn logpdf_individual(&self, zj: &[[f64; 2]]) -> f64 {
        (0..2)
            .map(|k| self.logpdf_path(&DVector::from_iterator(zj.len(), zj.iter().map(|p| p[k]))))
            .sum()
    }

    pub fn logpdf(&self, z: &LatentPaths) -> f64 {
        z.z.iter().map(|zj| self.logpdf_individual(zj)).sum()
    }
}

pub(crate) fn latent_covariance(grid: &TimeGrid, sd: f64, range: f64) -> DMatrix<f64> {
    let nodes = grid.nodes();
    let q = nodes.len();
    let hz = DMatrix::from_fn(q, q, |p, r| (-(nodes[p] - nodes[r]).powi(2) / range).exp());
    let mut c = &hz * hz.transpose();
    c *= sd * sd * grid.delta();
    c
}

/// Log prior density of the latent paths.
pub fn latent_z_logprior(z: &LatentPaths, spec: &GroupModelSpec) -> Result<f64> {
    z.check(spec)?;
    Ok(LatentPrior::new(spec)?.logpdf(z))
}

/// Row-normalized kernel-regression weights mapping latent-grid values to
/// `times`, using the latent kernel `exp(-(t - tau)^2 / phi_z)`.
pub(crate) fn smoother(spec: &GroupModelSpec, times: &[f64]) -> Result<DMatrix<f64>> {
    let grid = spec.latent_grid()?;
    let nodes = grid.nodes();
    let mut s = DMatrix::zeros(times.len(), nodes.len());
    for (i, &t) in times.iter().enumerate() {
        // shift by the nearest node so the largest weight is exactly 1
        let near = nodes.iter().map(|&x| (t - x).powi(2)).fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (q, &x) in nodes.iter().enumerate() {
            let w = (-((t - x).powi(2) - near) / spec.latent_range).exp();
            s[(i, q)] = w;
            total += w;
        }
        for q in 0..nodes.len() {
            s[(i, q)] /= total;
        }
    }
    Ok(s)
}

/// Latent positions of every individual at `times`, `out[j][i]`.
pub fn interpolate_latent(z: &LatentPaths, spec: &GroupModelSpec, times: &[f64]) -> Result<Vec<Vec<[f64; 2]>>> {
    z.check(spec)?;
    let s = smoother(spec, times)?;
    Ok(apply_smoother(&s, z))
}

pub(crate) fn apply_smoother(s: &DMatrix<f64>, z: &LatentPaths) -> Vec<Vec<[f64; 2]>> {
    z.z.iter()
        .map(|zj| {
            (0..s.nrows())
                .map(|i| {
                    let mut p = [0.0; 2];
                    for (q, zq) in zj.iter().enumerate() {
                        let w = s[(i, q)];
                        p[0] += w * zq[0];
                        p[1] += w * zq[1];
                    }
                    p
                })
                .collect()
        })
        .collect()
}

pub(crate) fn weight(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (-(dx * dx + dy * dy)).exp()
}

/// Network weights `nu_jk(t)` at a set of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub times: Vec<f64>,
    /// One symmetric `J x J` matrix per time.
    pub nu: Vec<DMatrix<f64>>,
}

pub fn network_weights(z: &LatentPaths, spec: &GroupModelSpec, times: &[f64]) -> Result<NetworkWeights> {
    let zt = interpolate_latent(z, spec, times)?;
    Ok(weights_from_positions(&zt, times))
}

pub(crate) fn weights_from_positions(zt: &[Vec<[f64; 2]>], times: &[f64]) -> NetworkWeights {
    let j = zt.len();
    let nu = (0..times.len())
        .map(|i| {
            let mut m = DMatrix::identity(j, j);
            for a in 0..j {
                for b in (a + 1)..j {
                    let w = weight(zt[a][i], zt[b][i]);
                    m[(a, b)] = w;
                    m[(b, a)] = w;
                }
            }
            m
        })
        .collect();
    NetworkWeights {
        times: times.to_vec(),
        nu,
    }
}

/// Row-stochastic mixing matrix at one time: row `j` of `nu` divided by its sum.
pub fn build_h3(nu: &DMatrix<f64>) -> DMatrix<f64> {
    let mut h = nu.clone();
    for mut row in h.row_iter_mut() {
        let s: f64 = row.sum();
        row /= s;
    }
    h
}

/// Individual degree `d_j(t) = sum_{k != j} nu_jk(t)` at time index `t_index`.
pub fn degree(weights: &NetworkWeights, j: usize, t_index: usize) -> Result<f64> {
    let nu = weights
        .nu
        .get(t_index)
        .ok_or_else(|| Error::Dimension(format!("time index {t_index} out of range")))?;
    if j >= nu.nrows() {
        return Err(Error::Dimension(format!("individual {j} out of range")));
    }
    Ok(nu.row(j).sum() - nu[(j, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, std_normal};

    fn spec(j: usize, mw: usize) -> GroupModelSpec {
        GroupModelSpec {
            individuals: j,
            grid_nodes: 40,
            latent_nodes: mw,
            ..GroupModelSpec::default()
        }
    }

    #[test]
    fn prior_mode_is_zero() {
        let s = spec(2, 5);
        let p = LatentPrior::new(&s).unwrap();
        let zero = p.logpdf(&LatentPaths::zeros(2, 5));
        let mut z = LatentPaths::zeros(2, 5);
        z.z[0][2] = [0.1, 0.0];
        assert!(p.logpdf(&z) < zero);
    }

    #[test]
    fn prior_matches_dense_oracle() {
        let s = spec(2, 5);
        let mut rng = seeded(1);
        let z = LatentPaths {
            z: (0..2)
                .map(|_| (0..5).map(|_| [std_normal(&mut rng), std_normal(&mut rng)]).collect())
                .collect(),
        };
        // oracle: explicit inverse and determinant of the 5 x 5 covariance
        let cov = latent_covariance(&s.latent_grid().unwrap(), s.latent_sd, s.latent_range);
        let c = cholesky_jittered(cov, "").unwrap();
        let inv = c.inverse();
        let det = c.determinant();
        let mut oracle = 0.0;
        for zj in &z.z {
            for k in 0..2 {
                let v = DVector::from_iterator(5, zj.iter().map(|p| p[k]));
                oracle += -0.5 * (5.0 * LN_2PI + det.ln() + (v.transpose() * &inv * &v)[(0, 0)]);
            }
        }
        let got = latent_z_logprior(&z, &s).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn doubling_latent_sd_shifts_by_closed_form() {
        // log p_2s(z) - log p_s(z) = -d ln 2 + (3/8) z' C_s^{-1} z per path
        let s1 = spec(1, 6);
        let s2 = GroupModelSpec {
            latent_sd: 2.0 * s1.latent_sd,
            ..s1.clone()
        };
        let z = LatentPaths {
            z: vec![(0..6).map(|q| [30.0 + q as f64, -25.0]).collect()],
        };
        let p1 = LatentPrior::new(&s1).unwrap();
        let p2 = LatentPrior::new(&s2).unwrap();
        let mut quad = 0.0;
        for k in 0..2 {
            let v = DVector::from_iterator(6, z.z[0].iter().map(|p| p[k]));
            let w = p1.factor().l_dirty().solve_lower_triangular(&v).unwrap();
            quad += w.norm_squared();
        }
        let expected = -12.0 * 2f64.ln() + 0.375 * quad;
        let got = p2.logpdf(&z) - p1.logpdf(&z);
        assert!((got - expected).abs() < 1e-6 * expected.abs(), "{got} vs {expected}");
    }

    #[test]
    fn coincident_and_unit_distance_weights() {
        let s = spec(2, 4);
        let same = LatentPaths::constant(&[[0.3, 0.2], [0.3, 0.2]], 4);
        let w = network_weights(&same, &s, &[0.1, 0.5]).unwrap();
        assert!(w.nu.iter().all(|m| m.iter().all(|&v| (v - 1.0).abs() < 1e-15)));
        let apart = LatentPaths::constant(&[[0.0, 0.0], [1.0, 0.0]], 4);
        let w = network_weights(&apart, &s, &[0.5]).unwrap();
        assert!((w.nu[0][(0, 1)] - (-1f64).exp()).abs() < 1e-12);
        assert_eq!(w.nu[0][(0, 1)], w.nu[0][(1, 0)]);
        assert!((degree(&w, 0, 0).unwrap() - 0.36788).abs() < 1e-5);
        let h = build_h3(&w.nu[0]);
        assert!((h[(0, 0)] - 0.73106).abs() < 1e-5);
        assert!((h[(0, 1)] - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn h3_and_degree_limits() {
        assert_eq!(build_h3(&DMatrix::identity(1, 1)), DMatrix::identity(1, 1));
        let ones = DMatrix::from_element(5, 5, 1.0);
        let h = build_h3(&ones);
        assert!(h.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let w = NetworkWeights {
            times: vec![0.0],
            nu: vec![ones],
        };
        assert_eq!(degree(&w, 3, 0).unwrap(), 4.0);
        let far = LatentPaths::constant(&[[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]], 4);
        let w = network_weights(&far, &spec(3, 4), &[0.5]).unwrap();
        assert_eq!(degree(&w, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn smoother_reproduces_constants() {
        let s = spec(1, 7);
        let sm = smoother(&s, &[0.0, 0.13, 0.5, 1.0]).unwrap();
        for row in sm.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-14);
        }
    }
}

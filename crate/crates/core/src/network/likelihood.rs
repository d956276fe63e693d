use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::design::GroupDesign;
use super::latent::LatentPaths;
use super::GroupModelSpec;
use crate::error::{Error, Result};
use crate::gp::LikelihoodRoute;
use crate::linalg::{chol_logdet, cholesky_jittered, LN_2PI};
use crate::telemetry::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub meas_var: f64,
    /// `sigma^2_{mu/s}`.
    pub ratio_sq: f64,
    pub range: f64,
    /// Per-individual origin `mu_0j`.
    pub origins: Vec<[f64; 2]>,
}

impl GroupParams {
    pub fn validate(&self, individuals: usize) -> Result<()> {
        let ok = self.meas_var > 0.0
            && self.meas_var.is_finite()
            && self.ratio_sq >= 0.0
            && self.ratio_sq.is_finite()
            && self.range > 0.0
            && self.range.is_finite()
            && self.origins.iter().flatten().all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidSpec(format!(
                "invalid group parameters {}",
                self.describe()
            )));
        }
        if self.origins.len() != individuals {
            return Err(Error::Dimension(format!(
                "{} origins for {individuals} individuals",
                self.origins.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "meas_var={:e}, ratio_sq={:e}, range={:e}",
            self.meas_var, self.ratio_sq, self.range
        )
    }
}

/// Factorization of the unit covariance `R = I + r delta B B'`, with
/// `Sigma = sigma_s^2 R`.
pub(crate) enum GroupFactor {
    Dense {
        chol: Cholesky<f64, Dyn>,
        logdet: f64,
    },
    Woodbury {
        b: DMatrix<f64>,
        c: f64,
        chol: Cholesky<f64, Dyn>,
        logdet: f64,
    },
}

impl GroupFactor {
    /// From the unit Gram `G = delta B B'`.
    pub fn dense(g: &DMatrix<f64>, r: f64, context: &str) -> Result<Self> {
        let n = g.nrows();
        let mut m = g * r;
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let chol = cholesky_jittered(m, context)?;
        let logdet = chol_logdet(&chol);
        Ok(GroupFactor::Dense { chol, logdet })
    }

    /// From the design itself, with an inner solve of size `J m`.
    pub fn woodbury(b: DMatrix<f64>, r: f64, delta: f64, context: &str) -> Result<Self> {
        let c = r * delta;
        let mut m = b.tr_mul(&b) * c;
        for i in 0..m.nrows() {
            m[(i, i)] += 1.0;
        }
        let chol = cholesky_jittered(m, context)?;
        let logdet = chol_logdet(&chol);
        Ok(GroupFactor::Woodbury { b, c, chol, logdet })
    }

    pub fn logdet(&self) -> f64 {
        match self {
            GroupFactor::Dense { logdet, .. } | GroupFactor::Woodbury { logdet, .. } => *logdet,
        }
    }

    /// `R^{-1} y`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            GroupFactor::Dense { chol, .. } => chol.solve(y),
            GroupFactor::Woodbury { b, c, chol, .. } => {
                let w = chol.solve(&b.tr_mul(y));
                y - (b * w) * *c
            }
        }
    }

    /// `y' R^{-1} y`.
    pub fn quad(&self, y: &DVector<f64>) -> f64 {
        match self {
            GroupFactor::Dense { chol, .. } => chol
                .l_dirty()
                .solve_lower_triangular(y)
                .expect("cholesky factor has a positive diagonal")
                .norm_squared(),
            GroupFactor::Woodbury { b, c, chol, .. } => {
                let z = chol
                    .l_dirty()
                    .solve_lower_triangular(&b.tr_mul(y))
                    .expect("cholesky factor has a positive diagonal");
                y.norm_squared() - c * z.norm_squared()
            }
        }
    }
}

/// Fixed data plus the per-range pieces the sampler reuses.
pub(crate) struct GroupContext<'a> {
    pub design: &'a GroupDesign,
    pub y: [DVector<f64>; 2],
    pub woodbury: bool,
}

impl<'a> GroupContext<'a> {
    pub fn new(design: &'a GroupDesign, tracks: &[Track], route: LikelihoodRoute) -> Result<Self> {
        if tracks.len() != design.individuals() {
            return Err(Error::Dimension(format!(
                "{} tracks for {} individuals",
                tracks.len(),
                design.individuals()
            )));
        }
        let n = design.n_total();
        let mut y = [DVector::zeros(n), DVector::zeros(n)];
        for (t, rows) in tracks.iter().zip(design.row_ranges()) {
            t.validate()?;
            for (r, p) in rows.zip(&t.xy) {
                y[0][r] = p[0];
                y[1][r] = p[1];
            }
        }
        let inner = design.individuals() * design.grid.len();
        let woodbury = match route {
            LikelihoodRoute::Woodbury => true,
            LikelihoodRoute::Dense => false,
            LikelihoodRoute::Auto => inner < n,
        };
        Ok(GroupContext { design, y, woodbury })
    }

    pub fn n(&self) -> usize {
        self.design.n_total()
    }

    pub fn factor(
        &self,
        h: &DMatrix<f64>,
        k: &DMatrix<f64>,
        w: &DMatrix<f64>,
        ratio_sq: f64,
        context: &str,
    ) -> Result<GroupFactor> {
        if self.woodbury {
            GroupFactor::woodbury(
                self.design.mixed_from(h, w),
                ratio_sq,
                self.design.grid.delta(),
                context,
            )
        } else {
            GroupFactor::dense(&GroupDesign::group_gram(w, k), ratio_sq, context)
        }
    }

    pub fn residuals(&self, origins: &[[f64; 2]]) -> [DVector<f64>; 2] {
        [0, 1].map(|c| {
            DVector::from_iterator(
                self.n(),
                self.y[c]
                    .iter()
                    .zip(&self.design.owner)
                    .map(|(v, &j)| v - origins[j][c]),
            )
        })
    }

    /// `sum_c (y_c - X mu_0c)' R^{-1} (y_c - X mu_0c)`.
    pub fn quad(&self, f: &GroupFactor, origins: &[[f64; 2]]) -> f64 {
        self.residuals(origins).iter().map(|r| f.quad(r)).sum()
    }

    pub fn loglik(&self, f: &GroupFactor, meas_var: f64, origins: &[[f64; 2]]) -> f64 {
        let n = self.n() as f64;
        -(n * LN_2PI + n * meas_var.ln() + f.logdet()) - 0.5 * self.quad(f, origins) / meas_var
    }
}

/// Group log likelihood using the route configured in `spec`.
pub fn group_loglik(tracks: &[Track], z: &LatentPaths, params: &GroupParams, spec: &GroupModelSpec) -> Result<f64> {
    group_loglik_with(tracks, z, params, spec, spec.route)
}

pub fn group_loglik_with(
    tracks: &[Track],
    z: &LatentPaths,
    params: &GroupParams,
    spec: &GroupModelSpec,
    route: LikelihoodRoute,
) -> Result<f64> {
    params.validate(spec.individuals)?;
    z.check(spec)?;
    let schedules: Vec<Vec<f64>> = tracks.iter().map(|t| t.times.clone()).collect();
    let design = GroupDesign::new(spec, &schedules)?;
    let ctx = GroupContext::new(&design, tracks, route)?;
    let h = design.integrated_basis(params.range)?;
    let k = if ctx.woodbury {
        DMatrix::zeros(0, 0)
    } else {
        design.unit_gram(&h)
    };
    let w = design.mixing(z);
    let f = ctx.factor(&h, &k, &w, params.ratio_sq, &params.describe())?;
    let ll = ctx.loglik(&f, params.meas_var, &params.origins);
    if !ll.is_finite() {
        return Err(Error::numerical("non-finite group log likelihood", params.describe()));
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{marginal_loglik, MovementParams};
    use crate::kernels::{build_basis, KernelSpec};
    use crate::network::NetworkMode;
    use crate::rng::{seeded, std_normal};

    fn tracks(j: usize, n: usize, seed: u64) -> Vec<Track> {
        let mut rng = seeded(seed);
        (0..j)
            .map(|k| {
                let times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.3 + 0.1 * k as f64) / n as f64).collect();
                let xy = times
                    .iter()
                    .map(|_| [0.3 * std_normal(&mut rng), 0.3 * std_normal(&mut rng)])
                    .collect();
                Track::new(format!("i{k}"), times, xy).unwrap()
            })
            .collect()
    }

    fn params(j: usize) -> GroupParams {
        GroupParams {
            meas_var: 0.02,
            ratio_sq: 30.0,
            range: 0.01,
            origins: (0..j).map(|k| [0.1 * k as f64, -0.05]).collect(),
        }
    }

    fn spec(j: usize, m: usize) -> GroupModelSpec {
        GroupModelSpec {
            individuals: j,
            grid_nodes: m,
            latent_nodes: 6,
            ..GroupModelSpec::default()
        }
    }

    // Oracle: assemble B row by row from nu and h, then evaluate the 2n x 2n
    // joint density with a plain Cholesky.
    fn dense_oracle(tr: &[Track], z: &LatentPaths, p: &GroupParams, s: &GroupModelSpec) -> f64 {
        let grid = s.grid().unwrap();
        let m = grid.len();
        let j = tr.len();
        let spec_k = KernelSpec::gaussian_integrated(p.range).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (a, t) in tr.iter().enumerate() {
            let h = build_basis(&spec_k, &t.times, &grid, None).unwrap();
            let w = crate::network::network_weights(z, s, &t.times).unwrap();
            for i in 0..t.len() {
                let h3 = crate::network::build_h3(&w.nu[i]);
                let mut row = vec![0.0; j * m];
                for k in 0..j {
                    for l in 0..m {
                        row[k * m + l] = h3[(a, k)] * h.values[(i, l)];
                    }
                }
                rows.push(row);
                y.push([t.xy[i][0] - p.origins[a][0], t.xy[i][1] - p.origins[a][1]]);
            }
        }
        let n = rows.len();
        let b = DMatrix::from_fn(n, j * m, |r, c| rows[r][c]);
        let mut big = DMatrix::zeros(2 * n, 2 * n);
        let g = &b * b.transpose() * (p.ratio_sq * grid.delta());
        big.view_mut((0, 0), (n, n)).copy_from(&g);
        big.view_mut((n, n), (n, n)).copy_from(&g);
        for i in 0..2 * n {
            big[(i, i)] += 1.0;
        }
        big *= p.meas_var;
        let yy = DVector::from_fn(2 * n, |i, _| if i < n { y[i][0] } else { y[i - n][1] });
        let c = Cholesky::new(big).unwrap();
        crate::linalg::mvn_logpdf_chol(&c, &yy)
    }

    #[test]
    fn single_individual_reduces_to_gp() {
        let tr = tracks(1, 25, 1);
        let s = spec(1, 60);
        let p = params(1);
        let z = LatentPaths::zeros(1, 6);
        let g = group_loglik(&tr, &z, &p, &s).unwrap();
        let h = build_basis(
            &KernelSpec::gaussian_integrated(p.range).unwrap(),
            &tr[0].times,
            &s.grid().unwrap(),
            None,
        )
        .unwrap();
        let mp = MovementParams::from_ratio(p.meas_var, p.ratio_sq, p.range, p.origins[0]).unwrap();
        let single = marginal_loglik(&tr[0], &h, &mp).unwrap();
        assert!((g - single).abs() < 1e-10 * single.abs().max(1.0), "{g} vs {single}");
    }

    #[test]
    fn routes_match_dense_oracle() {
        let tr = tracks(3, 12, 2);
        let s = spec(3, 20);
        let p = params(3);
        let z = LatentPaths {
            z: vec![
                (0..6).map(|q| [0.1 * q as f64, 0.0]).collect(),
                vec![[0.4, 0.3]; 6],
                (0..6).map(|q| [1.0, -0.2 * q as f64]).collect(),
            ],
        };
        let oracle = dense_oracle(&tr, &z, &p, &s);
        for route in [LikelihoodRoute::Dense, LikelihoodRoute::Woodbury, LikelihoodRoute::Auto] {
            let got = group_loglik_with(&tr, &z, &p, &s, route).unwrap();
            assert!(((got - oracle) / oracle).abs() < 1e-8, "{route:?}: {got} vs {oracle}");
        }
    }

    #[test]
    fn far_apart_latent_points_decouple() {
        let tr = tracks(3, 15, 3);
        let s = spec(3, 40);
        let p = params(3);
        let z = LatentPaths::constant(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], 6);
        let joint = group_loglik(&tr, &z, &p, &s).unwrap();
        let sep: f64 = tr
            .iter()
            .zip(&p.origins)
            .map(|(t, &o)| {
                let h = build_basis(
                    &KernelSpec::gaussian_integrated(p.range).unwrap(),
                    &t.times,
                    &s.grid().unwrap(),
                    None,
                )
                .unwrap();
                let mp = MovementParams::from_ratio(p.meas_var, p.ratio_sq, p.range, o).unwrap();
                marginal_loglik(t, &h, &mp).unwrap()
            })
            .sum();
        assert!((joint - sep).abs() < 1e-6, "{joint} vs {sep}");
        let indep = GroupModelSpec {
            mode: NetworkMode::Independent,
            ..s.clone()
        };
        let zero = LatentPaths::zeros(3, 6);
        let i = group_loglik(&tr, &zero, &p, &indep).unwrap();
        assert!((i - sep).abs() < 1e-8 * sep.abs());
    }
}

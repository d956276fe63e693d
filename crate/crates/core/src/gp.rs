//! Convolution-induced covariances, the integrated likelihood, and
//! posterior-predictive trajectory draws.
//!
//! Per coordinate the data follow `N(mu_0 1, sigma_s^2 I + sigma_mu^2 delta H H')`.
//! The two coordinates are independent given the parameters and share every
//! factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::BasisMatrix;
use crate::linalg::{chol_logdet, cholesky_jittered, LN_2PI};
use crate::rng::{seeded, std_normal, Rng};
use crate::telemetry::{ProjectionMeta, Track};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementParams {
    /// Measurement-error variance `sigma_s^2`.
    pub meas_var: f64,
    /// Process variance `sigma_mu^2`.
    pub proc_var: f64,
    /// Kernel range `phi`.
    pub range: f64,
    pub origin: [f64; 2],
}

impl MovementParams {
    pub fn new(meas_var: f64, proc_var: f64, range: f64, origin: [f64; 2]) -> Result<Self> {
        let p = MovementParams {
            meas_var,
            proc_var,
            range,
            origin,
        };
        p.validate()?;
        Ok(p)
    }

    /// Build from the variance ratio `sigma^2_{mu/s} = proc_var / meas_var`.
    pub fn from_ratio(meas_var: f64, ratio_sq: f64, range: f64, origin: [f64; 2]) -> Result<Self> {
        Self::new(meas_var, ratio_sq * meas_var, range, origin)
    }

    pub fn ratio_sq(&self) -> f64 {
        self.proc_var / self.meas_var
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.meas_var > 0.0
            && self.meas_var.is_finite()
            && self.proc_var >= 0.0
            && self.proc_var.is_finite()
            && self.range > 0.0
            && self.range.is_finite()
            && self.origin.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "invalid movement parameters {}",
                self.describe()
            )))
        }
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "meas_var={:e}, proc_var={:e}, range={:e}, origin=({}, {})",
            self.meas_var, self.proc_var, self.range, self.origin[0], self.origin[1]
        )
    }
}

/// `proc_var * delta * H H'`.
pub fn process_covariance(h: &BasisMatrix, proc_var: f64) -> DMatrix<f64> {
    cross_covariance(h, h, proc_var)
}

/// `proc_var * delta * H_a H_b'` for two bases on the same grid.
pub fn cross_covariance(h_a: &BasisMatrix, h_b: &BasisMatrix, proc_var: f64) -> DMatrix<f64> {
    let mut c = &h_a.values * h_b.values.transpose();
    c *= proc_var * h_a.delta;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodRoute {
    /// Woodbury when the grid is smaller than the data, dense otherwise.
    Auto,
    Woodbury,
    Dense,
}

enum FactorKind {
    /// Cholesky of `I_k + (c / sigma^2) A'A`.
    Woodbury(Cholesky<f64, Dyn>),
    /// Cholesky of the full `n x n` covariance.
    Dense(Cholesky<f64, Dyn>),
}

/// Factorization of `Sigma = sigma^2 I + c A A'` for one coordinate.
pub struct MarginalFactor<'a> {
    a: &'a DMatrix<f64>,
    meas_var: f64,
    c: f64,
    kind: FactorKind,
    logdet: f64,
}

impl<'a> MarginalFactor<'a> {
    /// `c` is the low-rank scale (`proc_var * delta` for a plain basis).
    pub fn new(a: &'a DMatrix<f64>, meas_var: f64, c: f64, route: LikelihoodRoute, context: &str) -> Result<Self> {
        let (n, k) = a.shape();
        let use_woodbury = match route {
            LikelihoodRoute::Woodbury => true,
            LikelihoodRoute::Dense => false,
            LikelihoodRoute::Auto => k < n,
        };
        if use_woodbury {
            let mut m = a.tr_mul(a);
            m *= c / meas_var;
            for i in 0..k {
                m[(i, i)] += 1.0;
            }
            let chol = cholesky_jittered(m, context)?;
            let logdet = n as f64 * meas_var.ln() + chol_logdet(&chol);
            Ok(MarginalFactor {
                a,
                meas_var,
                c,
                kind: FactorKind::Woodbury(chol),
                logdet,
            })
        } else {
            let mut s = a * a.transpose();
            s *= c;
            for i in 0..n {
                s[(i, i)] += meas_var;
            }
            let chol = cholesky_jittered(s, context)?;
            let logdet = chol_logdet(&chol);
            Ok(MarginalFactor {
                a,
                meas_var,
                c,
                kind: FactorKind::Dense(chol),
                logdet,
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// `Sigma^{-1} y`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            FactorKind::Dense(chol) => chol.solve(y),
            FactorKind::Woodbury(chol) => {
                let u = self.a.tr_mul(y);
                let w = chol.solve(&u);
                let mut out = y - (self.a * w) * (self.c / self.meas_var);
                out /= self.meas_var;
                out
            }
        }
    }

    /// `y' Sigma^{-1} y`.
    pub fn quad(&self, y: &DVector<f64>) -> f64 {
        match &self.kind {
            FactorKind::Dense(chol) => {
                let z = chol
                    .l_dirty()
                    .solve_lower_triangular(y)
                    .expect("cholesky factor has a positive diagonal");
                z.norm_squared()
            }
            FactorKind::Woodbury(chol) => {
                let u = self.a.tr_mul(y);
                let z = chol
                    .l_dirty()
                    .solve_lower_triangular(&u)
                    .expect("cholesky factor has a positive diagonal");
                (y.norm_squared() - (self.c / self.meas_var) * z.norm_squared()) / self.meas_var
            }
        }
    }

    pub fn logpdf(&self, y: &DVector<f64>) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.logdet + self.quad(y))
    }
}

pub(crate) fn residuals(track: &Track, origin: [f64; 2]) -> [DVector<f64>; 2] {
    [0, 1].map(|k| DVector::from_iterator(track.len(), track.xy.iter().map(|p| p[k] - origin[k])))
}

fn check_rows(track: &Track, h: &BasisMatrix) -> Result<()> {
    track.validate()?;
    if h.nrows() != track.len() {
        return Err(Error::Dimension(format!(
            "basis has {} rows for {} observations",
            h.nrows(),
            track.len()
        )));
    }
    Ok(())
}

/// Integrated log likelihood of both coordinates, choosing the route.
pub fn marginal_loglik_with(
    track: &Track,
    h: &BasisMatrix,
    params: &MovementParams,
    route: LikelihoodRoute,
) -> Result<f64> {
    check_rows(track, h)?;
    params.validate()?;
    let factor = MarginalFactor::new(
        &h.values,
        params.meas_var,
        params.proc_var * h.delta,
        route,
        &params.describe(),
    )?;
    let ll: f64 = residuals(track, params.origin).iter().map(|r| factor.logpdf(r)).sum();
    if !ll.is_finite() {
        return Err(Error::numerical("non-finite log likelihood", params.describe()));
    }
    Ok(ll)
}

/// Integrated log likelihood via the Woodbury identity with an `m x m` inner solve.
pub fn marginal_loglik_woodbury(track: &Track, h: &BasisMatrix, params: &MovementParams) -> Result<f64> {
    marginal_loglik_with(track, h, params, LikelihoodRoute::Woodbury)
}

/// Integrated log likelihood; uses the Woodbury route when `m < n` and a
/// direct `n x n` factorization otherwise.
pub fn marginal_loglik(track: &Track, h: &BasisMatrix, params: &MovementParams) -> Result<f64> {
    marginal_loglik_with(track, h, params, LikelihoodRoute::Auto)
}

/// Eigen-decomposition `K = U diag(lambda) U'` of the unit Gram
/// `K = delta H H'`, with `U` holding `min(n, m)` orthonormal columns.
///
/// With it, `Sigma = sigma^2 (I + r K)` can be solved and its determinant
/// taken for any `(sigma^2, r)` in `O(n k)`.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    pub u: DMatrix<f64>,
    pub lambda: Vec<f64>,
}

impl GramSpectrum {
    pub fn new(h: &DMatrix<f64>, delta: f64) -> Self {
        let (n, m) = h.shape();
        if n <= m {
            let mut k = h * h.transpose();
            k *= delta;
            let eig = SymmetricEigen::new(k);
            let lambda = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
            GramSpectrum {
                u: eig.eigenvectors,
                lambda,
            }
        } else {
            let mut g = h.tr_mul(h);
            g *= delta;
            let eig = SymmetricEigen::new(g);
            let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > top * 1e-14).collect();
            let mut u = DMatrix::zeros(n, keep.len());
            let mut lambda = Vec::with_capacity(keep.len());
            for (c, &i) in keep.iter().enumerate() {
                let l = eig.eigenvalues[i];
                let col = h * eig.eigenvectors.column(i) * (delta.sqrt() / l.sqrt());
                u.set_column(c, &col);
                lambda.push(l);
            }
            GramSpectrum { u, lambda }
        }
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    /// True when `U` is square, so `U U' = I`.
    pub fn is_full(&self) -> bool {
        self.u.ncols() == self.u.nrows()
    }

    /// `log det(I + r K)`.
    pub fn logdet_unit(&self, r: f64) -> f64 {
        self.lambda.iter().map(|&l| (r * l).ln_1p()).sum()
    }

    /// `(I + r K)^{-1} y`.
    pub fn solve_unit(&self, r: f64, y: &DVector<f64>) -> DVector<f64> {
        let c = self.u.tr_mul(y);
        if self.is_full() {
            let w = DVector::from_iterator(c.len(), c.iter().zip(&self.lambda).map(|(ci, &l)| ci / (1.0 + r * l)));
            &self.u * w
        } else {
            let w = DVector::from_iterator(
                c.len(),
                c.iter().zip(&self.lambda).map(|(ci, &l)| ci * r * l / (1.0 + r * l)),
            );
            y - &self.u * w
        }
    }
}

/// Something that can apply `Sigma^{-1}` for one coordinate.
pub(crate) trait CovSolve {
    fn solve_cov(&self, y: &DVector<f64>) -> DVector<f64>;
}

impl CovSolve for MarginalFactor<'_> {
    fn solve_cov(&self, y: &DVector<f64>) -> DVector<f64> {
        self.solve(y)
    }
}

pub(crate) struct SpectralSolve<'a> {
    pub spec: &'a GramSpectrum,
    pub meas_var: f64,
    pub ratio_sq: f64,
}

impl CovSolve for SpectralSolve<'_> {
    fn solve_cov(&self, y: &DVector<f64>) -> DVector<f64> {
        self.spec.solve_unit(self.ratio_sq, y) / self.meas_var
    }
}

/// Posterior-predictive trajectory samples at common times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDraws {
    pub times: Vec<f64>,
    /// `draws[d][i]` is the position of draw `d` at `times[i]`.
    pub draws: Vec<Vec<[f64; 2]>>,
    /// Model index that produced each draw.
    pub provenance: Vec<usize>,
}

impl TrajectoryDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&x| (x - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .ok_or_else(|| Error::Domain(format!("time {t} is not a prediction time")))
    }

    pub fn mean_at(&self, i: usize) -> [f64; 2] {
        let d = self.draws.len() as f64;
        let mut m = [0.0; 2];
        for draw in &self.draws {
            m[0] += draw[i][0];
            m[1] += draw[i][1];
        }
        [m[0] / d, m[1] / d]
    }

    pub fn mean_path(&self) -> Vec<[f64; 2]> {
        (0..self.times.len()).map(|i| self.mean_at(i)).collect()
    }
}

/// One pathwise conditional draw (Matheron's rule) for both coordinates:
/// sample a prior path and its noisy observations jointly, then correct by
/// the kriging update of the residual.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matheron_draw(
    solver: &dyn CovSolve,
    resid: &[DVector<f64>; 2],
    h_obs: &DMatrix<f64>,
    h_pred: &DMatrix<f64>,
    delta: f64,
    meas_var: f64,
    proc_var: f64,
    origin: [f64; 2],
    rng: &mut Rng,
) -> Vec<[f64; 2]> {
    let (n, m) = h_obs.shape();
    let p = h_pred.nrows();
    let sd_mu = proc_var.sqrt();
    let sd_s = meas_var.sqrt();
    let sd_b = delta.sqrt();
    let mut out = vec![[0.0; 2]; p];
    for (k, r) in resid.iter().enumerate() {
        let b = DVector::from_fn(m, |_, _| sd_b * std_normal(rng));
        let eps = DVector::from_fn(n, |_, _| sd_s * std_normal(rng));
        let s_star = h_obs * &b * sd_mu + eps;
        let v = solver.solve_cov(&(r - s_star));
        let coef = b + h_obs.tr_mul(&v) * (sd_mu * delta);
        let path = h_pred * coef * sd_mu;
        for (o, val) in out.iter_mut().zip(path.iter()) {
            o[k] = origin[k] + val;
        }
    }
    out
}

fn check_pred(h_obs: &BasisMatrix, h_pred: &BasisMatrix) -> Result<()> {
    if h_obs.ncols() != h_pred.ncols() || h_obs.delta != h_pred.delta {
        return Err(Error::Dimension(
            "observation and prediction bases must share a grid".into(),
        ));
    }
    Ok(())
}

/// `D` draws of the latent path at the rows of `h_pred` given the data.
pub fn predict_trajectory(
    track: &Track,
    h_obs: &BasisMatrix,
    h_pred: &BasisMatrix,
    params: &MovementParams,
    draws: usize,
    seed: u64,
) -> Result<TrajectoryDraws> {
    check_rows(track, h_obs)?;
    check_pred(h_obs, h_pred)?;
    params.validate()?;
    if draws == 0 {
        return Err(Error::InvalidSpec("draw count must be positive".into()));
    }
    let factor = MarginalFactor::new(
        &h_obs.values,
        params.meas_var,
        params.proc_var * h_obs.delta,
        LikelihoodRoute::Auto,
        &params.describe(),
    )?;
    let resid = residuals(track, params.origin);
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let path = matheron_draw(
            &factor,
            &resid,
            &h_obs.values,
            &h_pred.values,
            h_obs.delta,
            params.meas_var,
            params.proc_var,
            params.origin,
            &mut rng,
        );
        if path.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite predictive draw", params.describe()));
        }
        out.push(path);
    }
    Ok(TrajectoryDraws {
        times: h_pred.rows.clone(),
        draws: out,
        provenance: vec![0; draws],
    })
}

/// Analytic conditional mean (both coordinates) and the shared per-coordinate
/// conditional covariance of the latent path at the rows of `h_pred`.
pub fn conditional_moments(
    track: &Track,
    h_obs: &BasisMatrix,
    h_pred: &BasisMatrix,
    params: &MovementParams,
) -> Result<(Vec<[f64; 2]>, DMatrix<f64>)> {
    check_rows(track, h_obs)?;
    check_pred(h_obs, h_pred)?;
    params.validate()?;
    let factor = MarginalFactor::new(
        &h_obs.values,
        params.meas_var,
        params.proc_var * h_obs.delta,
        LikelihoodRoute::Auto,
        &params.describe(),
    )?;
    let c_ps = cross_covariance(h_pred, h_obs, params.proc_var);
    let resid = residuals(track, params.origin);
    let p = h_pred.nrows();
    let mut mean = vec![params.origin; p];
    for (k, r) in resid.iter().enumerate() {
        let m = &c_ps * factor.solve(r);
        for i in 0..p {
            mean[i][k] += m[i];
        }
    }
    let mut cov = process_covariance(h_pred, params.proc_var);
    for j in 0..p {
        let col = factor.solve(&c_ps.row(j).transpose());
        let upd = &c_ps * col;
        for i in 0..p {
            cov[(i, j)] -= upd[i];
        }
    }
    crate::linalg::symmetrize(&mut cov);
    Ok((mean, cov))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub lengths_km: Vec<f64>,
    pub speeds_kmh: Vec<f64>,
    pub length_mean: f64,
    pub length_sd: f64,
    pub speed_mean: f64,
    pub speed_sd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Path length (km) and mean speed (km/h) of every draw. Speed is zero for
/// a single prediction time.
pub fn path_summaries(draws: &TrajectoryDraws, meta: Option<&ProjectionMeta>) -> Result<PathSummary> {
    let meta = meta
        .ok_or_else(|| Error::InvalidSpec("path summaries need projection metadata to recover km and hours".into()))?;
    if draws.is_empty() {
        return Err(Error::Empty("no trajectory draws".into()));
    }
    let elapsed = match (draws.times.first(), draws.times.last()) {
        (Some(&a), Some(&b)) => meta.to_hours(b) - meta.to_hours(a),
        _ => 0.0,
    };
    let mut lengths = Vec::with_capacity(draws.len());
    let mut speeds = Vec::with_capacity(draws.len());
    for d in &draws.draws {
        let len: f64 = d
            .windows(2)
            .map(|w| {
                let a = meta.to_km(w[0]);
                let b = meta.to_km(w[1]);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum();
        lengths.push(len);
        speeds.push(if elapsed > 0.0 { len / elapsed } else { 0.0 });
    }
    let (length_mean, length_sd) = mean_sd(&lengths);
    let (speed_mean, speed_sd) = mean_sd(&speeds);
    Ok(PathSummary {
        lengths_km: lengths,
        speeds_kmh: speeds,
        length_mean,
        length_sd,
        speed_mean,
        speed_sd,
    })
}

/// Minimum number of draws for a credible radius.
pub const MIN_RADIUS_DRAWS: usize = 100;

/// Radius of the smallest circle about the mean position at `t` holding at
/// least `level` of the draws.
pub fn credible_circle_radius(draws: &TrajectoryDraws, t: f64, level: f64) -> Result<f64> {
    let i = draws.time_index(t)?;
    credible_radius_at(draws, i, level)
}

pub fn credible_radius_at(draws: &TrajectoryDraws, i: usize, level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Domain(format!("credible level {level} outside [0, 1]")));
    }
    if draws.len() < MIN_RADIUS_DRAWS {
        return Err(Error::InvalidSpec(format!(
            "credible radius needs at least {MIN_RADIUS_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    if i >= draws.times.len() {
        return Err(Error::Dimension(format!("time index {i} out of range")));
    }
    let need = (level * draws.len() as f64).ceil() as usize;
    if need == 0 {
        return Ok(0.0);
    }
    let c = draws.mean_at(i);
    let mut dist: Vec<f64> = draws
        .draws
        .iter()
        .map(|d| (d[i][0] - c[0]).hypot(d[i][1] - c[1]))
        .collect();
    dist.sort_by(f64::total_cmp);
    Ok(dist[need - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_basis, KernelSpec, TimeGrid};
    use rand::Rng as _;

    fn random_track(n: usize, seed: u64) -> Track {
        let mut rng = seeded(seed);
        let times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let xy = (0..n)
            .map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5])
            .collect();
        Track::new("t", times, xy).unwrap()
    }

    // Direct 2n x 2n evaluation of the joint density, built without any of
    // the block or low-rank structure used by the library routes.
    fn dense_oracle(track: &Track, h: &BasisMatrix, p: &MovementParams) -> f64 {
        let n = track.len();
        let m = h.ncols();
        let mut big_h = DMatrix::zeros(2 * n, 2 * m);
        big_h.view_mut((0, 0), (n, m)).copy_from(&h.values);
        big_h.view_mut((n, m), (n, m)).copy_from(&h.values);
        let r = p.ratio_sq();
        let mut cov = &big_h * big_h.transpose() * (r * h.delta);
        for i in 0..2 * n {
            cov[(i, i)] += 1.0;
        }
        cov *= p.meas_var;
        let mut y = DVector::zeros(2 * n);
        for i in 0..n {
            y[i] = track.xy[i][0] - p.origin[0];
            y[n + i] = track.xy[i][1] - p.origin[1];
        }
        let c = Cholesky::new(cov).unwrap();
        crate::linalg::mvn_logpdf_chol(&c, &y)
    }

    #[test]
    fn zero_process_variance_gives_zero_covariance() {
        let grid = TimeGrid::unit(20).unwrap();
        let h = build_basis(&KernelSpec::brownian(), &[0.1, 0.5, 0.9], &grid, None).unwrap();
        assert!(process_covariance(&h, 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn brownian_covariance_is_min_of_times() {
        let grid = TimeGrid::unit(401).unwrap();
        let times = [0.05, 0.2, 0.33, 0.71, 0.99];
        let h = build_basis(&KernelSpec::brownian(), &times, &grid, None).unwrap();
        let c = process_covariance(&h, 1.0);
        for i in 0..times.len() {
            for j in 0..times.len() {
                let oracle = times[i].min(times[j]);
                assert!((c[(i, j)] - oracle).abs() <= 2.0 * grid.delta());
            }
        }
    }

    #[test]
    fn single_point_without_process_is_closed_form() {
        let grid = TimeGrid::unit(10).unwrap();
        let track = Track::new("a", vec![0.3], vec![[0.2, -0.1]]).unwrap();
        let h = build_basis(
            &KernelSpec::gaussian_integrated(0.01).unwrap(),
            &track.times,
            &grid,
            None,
        )
        .unwrap();
        let p = MovementParams::new(0.5, 0.0, 0.01, [0.0, 0.0]).unwrap();
        let oracle = -LN_2PI - 0.5f64.ln() - (0.04 + 0.01) / (2.0 * 0.5);
        for route in [LikelihoodRoute::Woodbury, LikelihoodRoute::Dense, LikelihoodRoute::Auto] {
            let got = marginal_loglik_with(&track, &h, &p, route).unwrap();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn routes_agree_with_dense_oracle() {
        for (n, m, seed) in [(50, 80, 1), (120, 40, 2), (7, 7, 3)] {
            let track = random_track(n, seed);
            let grid = TimeGrid::unit(m).unwrap();
            let spec = KernelSpec::gaussian_integrated(0.004 + 0.001 * seed as f64).unwrap();
            let h = build_basis(&spec, &track.times, &grid, None).unwrap();
            let p = MovementParams::new(0.01, 0.3, spec.range, [0.1, -0.2]).unwrap();
            let oracle = dense_oracle(&track, &h, &p);
            for route in [LikelihoodRoute::Woodbury, LikelihoodRoute::Dense, LikelihoodRoute::Auto] {
                let got = marginal_loglik_with(&track, &h, &p, route).unwrap();
                assert!(((got - oracle) / oracle).abs() < 1e-8, "{route:?}: {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn spectrum_matches_factor() {
        for (n, m) in [(30, 60), (60, 25)] {
            let track = random_track(n, 9);
            let grid = TimeGrid::unit(m).unwrap();
            let h = build_basis(
                &KernelSpec::gaussian_integrated(0.01).unwrap(),
                &track.times,
                &grid,
                None,
            )
            .unwrap();
            let spec = GramSpectrum::new(&h.values, h.delta);
            let (s2, r) = (0.02, 40.0);
            let f = MarginalFactor::new(&h.values, s2, s2 * r * h.delta, LikelihoodRoute::Dense, "").unwrap();
            let ld = n as f64 * s2.ln() + spec.logdet_unit(r);
            assert!((ld - f.logdet()).abs() < 1e-8 * f.logdet().abs().max(1.0));
            let y = DVector::from_iterator(n, track.xy.iter().map(|p| p[0]));
            let a = spec.solve_unit(r, &y) / s2;
            let b = f.solve(&y);
            assert!((&a - &b).norm() < 1e-8 * b.norm());
        }
    }

    #[test]
    fn noiseless_prediction_interpolates() {
        let track = random_track(15, 4);
        let grid = TimeGrid::unit(60).unwrap();
        let spec = KernelSpec::gaussian_integrated(0.003).unwrap();
        let h = build_basis(&spec, &track.times, &grid, None).unwrap();
        let p = MovementParams::new(1e-13, 1.0, 0.003, track.first()).unwrap();
        let (mean, _) = conditional_moments(&track, &h, &h, &p).unwrap();
        for (m, obs) in mean.iter().zip(&track.xy) {
            let e = (m[0] - obs[0]).abs().max((m[1] - obs[1]).abs());
            assert!(e < 1e-6, "{e}");
        }
    }

    #[test]
    fn zero_process_draws_are_origin() {
        let track = random_track(10, 5);
        let grid = TimeGrid::unit(30).unwrap();
        let h = build_basis(&KernelSpec::brownian(), &track.times, &grid, None).unwrap();
        let hp = build_basis(&KernelSpec::brownian(), &[0.0, 0.4, 1.0], &grid, None).unwrap();
        let p = MovementParams::new(0.1, 0.0, 1.0, [3.0, 4.0]).unwrap();
        let d = predict_trajectory(&track, &h, &hp, &p, 20, 1).unwrap();
        assert!(d.draws.iter().flatten().all(|&q| q == [3.0, 4.0]));
    }

    #[test]
    fn prediction_is_deterministic() {
        let track = random_track(12, 6);
        let grid = TimeGrid::unit(40).unwrap();
        let spec = KernelSpec::gaussian_integrated(0.01).unwrap();
        let h = build_basis(&spec, &track.times, &grid, None).unwrap();
        let p = MovementParams::new(0.01, 0.5, 0.01, track.first()).unwrap();
        let a = predict_trajectory(&track, &h, &h, &p, 5, 77).unwrap();
        let b = predict_trajectory(&track, &h, &h, &p, 5, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn path_length_of_a_right_triangle_leg() {
        let meta = ProjectionMeta {
            center_lon: None,
            center_lat: None,
            offset_km: [0.0, 0.0],
            scale_km: 1.0,
            time_origin: 0.0,
            time_span: 2.0,
        };
        let d = TrajectoryDraws {
            times: vec![0.0, 1.0],
            draws: vec![vec![[0.0, 0.0], [3.0, 4.0]]],
            provenance: vec![0],
        };
        let s = path_summaries(&d, Some(&meta)).unwrap();
        assert_eq!(s.lengths_km[0], 5.0);
        assert_eq!(s.speeds_kmh[0], 2.5);
        let one = TrajectoryDraws {
            times: vec![0.5],
            draws: vec![vec![[1.0, 1.0]]],
            provenance: vec![0],
        };
        assert_eq!(path_summaries(&one, Some(&meta)).unwrap().lengths_km[0], 0.0);
        assert!(path_summaries(&d, None).is_err());
    }

    #[test]
    fn radius_edge_cases() {
        let same = TrajectoryDraws {
            times: vec![0.0],
            draws: vec![vec![[1.0, 2.0]]; 150],
            provenance: vec![0; 150],
        };
        assert_eq!(credible_circle_radius(&same, 0.0, 0.95).unwrap(), 0.0);
        let mut rng = seeded(3);
        let spread = TrajectoryDraws {
            times: vec![0.0],
            draws: (0..200)
                .map(|_| vec![[std_normal(&mut rng), std_normal(&mut rng)]])
                .collect(),
            provenance: vec![0; 200],
        };
        assert_eq!(credible_circle_radius(&spread, 0.0, 0.0).unwrap(), 0.0);
        let few = TrajectoryDraws {
            times: vec![0.0],
            draws: vec![vec![[0.0, 0.0]]; 99],
            provenance: vec![0; 99],
        };
        assert!(credible_circle_radius(&few, 0.0, 0.95).is_err());
    }
}

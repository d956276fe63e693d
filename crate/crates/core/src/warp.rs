//! Temporally deforming cumulative functions (TDCF).
//!
//! A warp maps time `t` on a domain `(t_start, t_end)` to warped time
//!
//! ```text
//! w(t) = (m * F(t) + t - t_start) / (m + t_end - t_start)
//! ```
//!
//! where `F` is the cumulative of a density `f` on the domain and `m >= 0` is
//! the warp magnitude. Its derivative `(m * f(t) + 1) / (m + t_end - t_start)`
//! is strictly positive, so `w` never folds time, and `w(t_start) = 0`,
//! `w(t_end) = 1`.
//!
//! Truncated Gaussian densities use the same squared-scale convention as the
//! movement kernels: `f(t) ∝ exp(-(t - center)^2 / scale)` on the domain.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};

/// Shape of the density `f` driving a warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum WarpShape {
    /// `f(t) ∝ exp(-(t - center)^2 / scale)` truncated to the domain.
    TruncatedGaussian { center: f64, scale: f64 },
    /// `f(t) = 1 / (t_end - t_start)`.
    Uniform,
}

/// One TDCF candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    pub shape: WarpShape,
    /// Warp magnitude `σ_w² ≥ 0`.
    pub magnitude: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl WarpSpec {
    pub fn truncated_gaussian(center: f64, scale: f64, magnitude: f64, domain: (f64, f64)) -> Result<Self> {
        let spec = WarpSpec {
            shape: WarpShape::TruncatedGaussian { center, scale },
            magnitude,
            t_start: domain.0,
            t_end: domain.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(magnitude: f64, domain: (f64, f64)) -> Result<Self> {
        let spec = WarpSpec {
            shape: WarpShape::Uniform,
            magnitude,
            t_start: domain.0,
            t_end: domain.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(Error::InvalidSpec(format!(
                "warp domain ({}, {}) is empty",
                self.t_start, self.t_end
            )));
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "warp magnitude must be >= 0, got {}",
                self.magnitude
            )));
        }
        if let WarpShape::TruncatedGaussian { center, scale } = self.shape {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidSpec(format!("warp scale must be > 0, got {scale}")));
            }
            if !(center >= self.t_start && center <= self.t_end) {
                return Err(Error::InvalidSpec(format!(
                    "warp center {center} outside ({}, {})",
                    self.t_start, self.t_end
                )));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Option<f64> {
        match self.shape {
            WarpShape::TruncatedGaussian { center, .. } => Some(center),
            WarpShape::Uniform => None,
        }
    }

    pub fn scale(&self) -> Option<f64> {
        match self.shape {
            WarpShape::TruncatedGaussian { scale, .. } => Some(scale),
            WarpShape::Uniform => None,
        }
    }

    fn span(&self) -> f64 {
        self.t_end - self.t_start
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        // allow round-off at the boundary
        let tol = 1e-12 * self.span().max(1.0);
        if t.is_finite() && t >= self.t_start - tol && t <= self.t_end + tol {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "t = {t} outside warp domain [{}, {}]",
                self.t_start, self.t_end
            )))
        }
    }

    /// Warped time; callers that have already validated `t` use this directly.
    pub(crate) fn warp_unchecked(&self, t: f64) -> f64 {
        let t = t.clamp(self.t_start, self.t_end);
        let cdf = self.cdf(t);
        (self.magnitude * cdf + (t - self.t_start)) / (self.magnitude + self.span())
    }

    fn density(&self, t: f64) -> f64 {
        match self.shape {
            WarpShape::Uniform => 1.0 / self.span(),
            WarpShape::TruncatedGaussian { center, scale } => {
                let root = scale.sqrt();
                let mass = 0.5
                    * (std::f64::consts::PI * scale).sqrt()
                    * erf_diff((self.t_end - center) / root, (self.t_start - center) / root);
                (-(t - center).powi(2) / scale).exp() / mass
            }
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        match self.shape {
            WarpShape::Uniform => (t - self.t_start) / self.span(),
            WarpShape::TruncatedGaussian { center, scale } => {
                let root = scale.sqrt();
                let lo = (self.t_start - center) / root;
                erf_diff((t - center) / root, lo) / erf_diff((self.t_end - center) / root, lo)
            }
        }
    }
}

/// `erf(a) - erf(b)` without cancellation in either tail.
fn erf_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a >= 0.0 && b >= 0.0 {
        erfc(b) - erfc(a)
    } else if a <= 0.0 && b <= 0.0 {
        erfc(-a) - erfc(-b)
    } else {
        erf(a) - erf(b)
    }
}

/// Density `f(t)` of the warp, normalized over the truncation window.
pub fn truncated_gaussian_density(spec: &WarpSpec, t: f64) -> Result<f64> {
    spec.check_domain(t)?;
    Ok(spec.density(t))
}

/// Warped time `w(t)`.
pub fn tdcf(spec: &WarpSpec, t: f64) -> Result<f64> {
    spec.check_domain(t)?;
    Ok(spec.warp_unchecked(t))
}

/// `dw/dt`, linear in the density.
pub fn tdcf_derivative(spec: &WarpSpec, t: f64) -> Result<f64> {
    spec.check_domain(t)?;
    Ok((spec.magnitude * spec.density(t) + 1.0) / (spec.magnitude + spec.span()))
}

/// Default warp scales: ten values spanning 0.01 to 0.0625.
pub fn default_scales() -> Vec<f64> {
    linspace(0.01, 0.0625, 10)
}

/// Default warp magnitudes: ten values spanning 0.6 to 0.8.
pub fn default_magnitudes() -> Vec<f64> {
    linspace(0.6, 0.8, 10)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Centers `t_start + (i + 1) * span / (count + 1)` for `i in 0..count`:
/// equally spaced and strictly inside the domain.
pub fn warp_centers(count: usize, domain: (f64, f64)) -> Vec<f64> {
    let span = domain.1 - domain.0;
    (0..count)
        .map(|i| domain.0 + span * (i + 1) as f64 / (count + 1) as f64)
        .collect()
}

/// Cartesian product of equally spaced centers, scales, and magnitudes
/// (center-major, then scale, then magnitude).
pub fn enumerate_warp_candidates(
    centers: usize,
    scales: &[f64],
    magnitudes: &[f64],
    domain: (f64, f64),
) -> Result<Vec<WarpSpec>> {
    if centers == 0 || scales.is_empty() || magnitudes.is_empty() {
        return Err(Error::Empty(
            "warp candidate grid needs at least one center, scale, and magnitude".into(),
        ));
    }
    let mut out = Vec::with_capacity(centers * scales.len() * magnitudes.len());
    for c in warp_centers(centers, domain) {
        for &s in scales {
            for &m in magnitudes {
                out.push(WarpSpec::truncated_gaussian(c, s, m, domain)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: (f64, f64) = (0.0, 1.0);

    /// Composite Simpson on [a, b] with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn flat_limit_density_is_one() {
        let w = WarpSpec::truncated_gaussian(0.5, 1e6, 0.7, UNIT).unwrap();
        for t in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let f = truncated_gaussian_density(&w, t).unwrap();
            assert!((f - 1.0).abs() < 1e-6, "f({t}) = {f}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for (c, s) in [(0.5, 0.04), (0.05, 0.01), (0.93, 0.0625), (0.5, 0.001)] {
            let w = WarpSpec::truncated_gaussian(c, s, 0.7, UNIT).unwrap();
            let total = simpson(|t| w.density(t), 0.0, 1.0, 200_000);
            assert!((total - 1.0).abs() < 1e-8, "center {c} scale {s}: {total}");
        }
    }

    #[test]
    fn density_matches_quadrature_normalized_gaussian() {
        let w = WarpSpec::truncated_gaussian(0.5, 0.04, 0.7, UNIT).unwrap();
        let mass = simpson(|t| (-(t - 0.5f64).powi(2) / 0.04).exp(), 0.0, 1.0, 100_000);
        let oracle = 1.0 / mass;
        let got = truncated_gaussian_density(&w, 0.5).unwrap();
        assert!((got - oracle).abs() < 1e-10 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let w = WarpSpec::truncated_gaussian(0.5, 0.04, 0.7, UNIT).unwrap();
        assert!(truncated_gaussian_density(&w, 1.5).is_err());
        assert!(tdcf(&w, -0.1).is_err());
    }

    #[test]
    fn zero_magnitude_is_identity_on_unit_domain() {
        let w = WarpSpec::truncated_gaussian(0.3, 0.02, 0.0, UNIT).unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert_eq!(tdcf(&w, t).unwrap(), t);
            assert_eq!(tdcf_derivative(&w, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn uniform_density_is_identity() {
        let w = WarpSpec::uniform(0.75, UNIT).unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((tdcf(&w, t).unwrap() - t).abs() <= 1e-12);
        }
    }

    #[test]
    fn tdcf_matches_quadrature_cdf() {
        let w = WarpSpec::truncated_gaussian(0.5, 0.04, 0.7, UNIT).unwrap();
        let g = |t: f64| (-(t - 0.5f64).powi(2) / 0.04).exp();
        let mass = simpson(g, 0.0, 1.0, 100_000);
        for t in [0.2, 0.5, 0.61] {
            let cdf = simpson(g, 0.0, t, 100_000) / mass;
            let oracle = (0.7 * cdf + t) / 1.7;
            let got = tdcf(&w, t).unwrap();
            assert!((got - oracle).abs() < 1e-10, "t={t}: {got} vs {oracle}");
        }
        // at the center the cdf is exactly one half by symmetry
        assert!((tdcf(&w, 0.5).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn endpoints_are_preserved_exactly() {
        let w = WarpSpec::truncated_gaussian(0.2, 0.013, 0.66, UNIT).unwrap();
        assert_eq!(tdcf(&w, 0.0).unwrap(), 0.0);
        assert_eq!(tdcf(&w, 1.0).unwrap(), 1.0);
        let w = WarpSpec::truncated_gaussian(3.0, 0.5, 2.0, (2.0, 5.0)).unwrap();
        assert_eq!(tdcf(&w, 2.0).unwrap(), 0.0);
        assert_eq!(tdcf(&w, 5.0).unwrap(), 1.0);
    }

    #[test]
    fn derivative_integrates_to_one() {
        let w = WarpSpec::truncated_gaussian(0.4, 0.02, 0.8, UNIT).unwrap();
        let total = simpson(|t| tdcf_derivative(&w, t).unwrap(), 0.0, 1.0, 100_000);
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn expansion_exactly_where_density_exceeds_one() {
        let w = WarpSpec::truncated_gaussian(0.5, 0.03, 0.7, UNIT).unwrap();
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let f = truncated_gaussian_density(&w, t).unwrap();
            let d = tdcf_derivative(&w, t).unwrap();
            assert_eq!(d > 1.0, f > 1.0, "t = {t}");
        }
    }

    #[test]
    fn candidate_grid_shapes() {
        let scales = default_scales();
        let mags = default_magnitudes();
        assert_eq!(scales.len(), 10);
        assert!((scales[0] - 0.01).abs() < 1e-15 && (scales[9] - 0.0625).abs() < 1e-15);
        assert!((mags[0] - 0.6).abs() < 1e-15 && (mags[9] - 0.8).abs() < 1e-15);
        let all = enumerate_warp_candidates(100, &scales, &mags, UNIT).unwrap();
        assert_eq!(all.len(), 10_000);

        let one = enumerate_warp_candidates(1, &[0.02], &[0.7], UNIT).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].center(), Some(0.5));

        let centers = warp_centers(9, UNIT);
        assert!(centers.iter().all(|&c| c > 0.0 && c < 1.0));
        for pair in centers.windows(2) {
            assert!((pair[1] - pair[0] - 0.1).abs() < 1e-12);
        }
        assert!(enumerate_warp_candidates(0, &scales, &mags, UNIT).is_err());
        assert!(enumerate_warp_candidates(3, &[], &mags, UNIT).is_err());
    }
}

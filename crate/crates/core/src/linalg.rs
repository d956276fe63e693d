//! Dense linear-algebra helpers shared by the likelihood code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal after a failed factorization.
pub const JITTER_REL: f64 = 1e-10;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cholesky factorization with the single-retry jitter policy: on failure add
/// `JITTER_REL * mean(diag)` to the diagonal and try once more.
pub fn cholesky_jittered(mat: DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = mat.nrows();
    let mean_diag = if n == 0 { 0.0 } else { mat.diagonal().sum() / n as f64 };
    let retry = mat.clone();
    if let Some(c) = Cholesky::new(mat) {
        return Ok(c);
    }
    let jitter = JITTER_REL * mean_diag.abs().max(f64::MIN_POSITIVE);
    let mut retry = retry;
    for i in 0..n {
        retry[(i, i)] += jitter;
    }
    Cholesky::new(retry).ok_or_else(|| {
        Error::numerical(
            format!("matrix not positive definite after jitter {jitter:.3e}"),
            context.to_string(),
        )
    })
}

pub fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Log density of `N(0, cov)` at `x`, given the Cholesky factor of `cov`.
pub fn mvn_logpdf_chol(c: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let n = x.len() as f64;
    let z = c
        .l_dirty()
        .solve_lower_triangular(x)
        .expect("cholesky factor has a positive diagonal");
    -0.5 * (n * LN_2PI + chol_logdet(c) + z.norm_squared())
}

/// `L * xi` for standard-normal `xi`; the lower factor stored by nalgebra has
/// junk above the diagonal, so only the lower triangle is used.
pub fn lower_mul(c: &Cholesky<f64, Dyn>, xi: &DVector<f64>) -> DVector<f64> {
    let l = c.l_dirty();
    let n = xi.len();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += l[(i, j)] * xi[j];
        }
        out[i] = acc;
    }
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Numerically stable `log(sum(exp(x)))`; returns `-inf` when every entry is `-inf`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank-one PSD matrix
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert!(Cholesky::new(m.clone()).is_none());
        let c = cholesky_jittered(m, "rank one").unwrap();
        assert!(chol_logdet(&c).is_finite());
    }

    #[test]
    fn indefinite_is_an_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = cholesky_jittered(m, "phi=0.5").unwrap_err();
        assert!(err.to_string().contains("phi=0.5"));
    }

    #[test]
    fn logpdf_standard_bivariate() {
        let c = Cholesky::new(DMatrix::identity(2, 2)).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0]);
        assert!((mvn_logpdf_chol(&c, &x) + LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn lse_handles_neg_infinity() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[0.0, f64::NEG_INFINITY, 0.0]);
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }
}

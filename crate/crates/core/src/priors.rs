//! Prior distributions used by the samplers.

use rand_distr::{Distribution, Gamma as GammaDist};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Inverse gamma with density `∝ x^(-shape-1) exp(-scale / x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        let d = InverseGamma { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() && self.scale.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "inverse-gamma needs positive shape and scale, got ({}, {})",
                self.shape, self.scale
            )))
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln() - self.scale / x
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        // 1/x with x ~ Gamma(shape, rate = scale)
        let g = GammaDist::new(self.shape, 1.0 / self.scale).expect("validated parameters");
        1.0 / g.sample(rng)
    }

    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.scale / (self.shape - 1.0))
    }
}

/// Gamma with shape and rate, density `∝ x^(shape-1) exp(-rate x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn validate(&self) -> Result<()> {
        if self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!(
                "gamma needs positive shape and rate, got ({}, {})",
                self.shape, self.rate
            )))
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        GammaDist::new(self.shape, 1.0 / self.rate)
            .expect("validated parameters")
            .sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn densities_integrate_to_one() {
        let ig = InverseGamma::new(3.0, 2.0).unwrap();
        let total = simpson(|x| ig.ln_pdf(x).exp(), 1e-6, 200.0, 400_000);
        assert!((total - 1.0).abs() < 1e-4, "{total}");
        let g = GammaPrior {
            shape: 2.0,
            rate: 200.0,
        };
        let total = simpson(|x| g.ln_pdf(x).exp(), 1e-9, 0.5, 200_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn sample_means() {
        let mut rng = seeded(5);
        let ig = InverseGamma::new(5.0, 8.0).unwrap();
        let n = 200_000;
        let m = (0..n).map(|_| ig.sample(&mut rng)).sum::<f64>() / n as f64;
        // sd of the mean: sqrt(var / n), var = scale^2 / ((a-1)^2 (a-2)) = 64 / 48
        let se = (64.0f64 / 48.0 / n as f64).sqrt();
        assert!((m - 2.0).abs() < 4.0 * se, "{m}");
        let g = GammaPrior {
            shape: 2.0,
            rate: 200.0,
        };
        let m = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        let se = (2.0f64 / 40_000.0 / n as f64).sqrt();
        assert!((m - 0.01).abs() < 4.0 * se, "{m}");
    }

    #[test]
    fn invalid_parameters() {
        assert!(InverseGamma::new(0.0, 1.0).is_err());
        assert!(InverseGamma::new(1.0, -1.0).is_err());
        assert!(GammaPrior { shape: 1.0, rate: 0.0 }.validate().is_err());
    }
}

use std::ops::Range;

use nalgebra::DMatrix;

use super::latent::{apply_smoother, smoother, weight, LatentPaths};
use super::{GroupModelSpec, NetworkMode};
use crate::error::{Error, Result};
use crate::kernels::{build_basis, KernelSpec, TimeGrid};

/// Observation layout of a group: every individual's times stacked into one
/// row index, plus the pieces needed to assemble the mixed basis.
#[derive(Debug, Clone)]
pub struct GroupDesign {
    pub spec: GroupModelSpec,
    pub grid: TimeGrid,
    pub times: Vec<Vec<f64>>,
    /// All times, individual-major.
    pub stacked: Vec<f64>,
    /// Individual owning each stacked row.
    pub owner: Vec<usize>,
    offsets: Vec<usize>,
    smoother: DMatrix<f64>,
}

impl GroupDesign {
    pub fn new(spec: &GroupModelSpec, schedules: &[Vec<f64>]) -> Result<Self> {
        spec.validate()?;
        if schedules.len() != spec.individuals {
            return Err(Error::Dimension(format!(
                "{} schedules for {} individuals",
                schedules.len(),
                spec.individuals
            )));
        }
        let grid = spec.grid()?;
        let mut stacked = Vec::new();
        let mut owner = Vec::new();
        let mut offsets = vec![0];
        for (j, s) in schedules.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::Empty(format!("individual {j} has no times")));
            }
            if s.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidSpec(format!(
                    "individual {j}: times must be strictly increasing"
                )));
            }
            if let Some(t) = s.iter().find(|&&t| !grid.contains(t)) {
                return Err(Error::Domain(format!("individual {j}: time {t} outside the grid")));
            }
            stacked.extend_from_slice(s);
            owner.extend(std::iter::repeat(j).take(s.len()));
            offsets.push(stacked.len());
        }
        let smoother = smoother(spec, &stacked)?;
        Ok(GroupDesign {
            spec: spec.clone(),
            grid,
            times: schedules.to_vec(),
            stacked,
            owner,
            offsets,
            smoother,
        })
    }

    pub fn individuals(&self) -> usize {
        self.times.len()
    }

    pub fn n_total(&self) -> usize {
        self.stacked.len()
    }

    pub fn row_ranges(&self) -> Vec<Range<usize>> {
        self.offsets.windows(2).map(|w| w[0]..w[1]).collect()
    }

    /// Brownian-then-gaussian basis at every stacked time, `n_tot x m`.
    pub fn integrated_basis(&self, range: f64) -> Result<DMatrix<f64>> {
        let spec = KernelSpec::gaussian_integrated(range)?;
        Ok(build_basis(&spec, &self.stacked, &self.grid, None)?.values)
    }

    /// `delta H H'`.
    pub fn unit_gram(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut k = h * h.transpose();
        k *= self.grid.delta();
        k
    }

    /// Row `(j, i)` holds the mixing weights `a_jk(t_ji)` over `k`.
    pub fn mixing(&self, z: &LatentPaths) -> DMatrix<f64> {
        let n = self.n_total();
        let j_count = self.individuals();
        let mut w = DMatrix::zeros(n, j_count);
        match self.spec.mode {
            NetworkMode::Independent => {
                for (r, &j) in self.owner.iter().enumerate() {
                    w[(r, j)] = 1.0;
                }
            }
            NetworkMode::Latent => {
                let zt = apply_smoother(&self.smoother, z);
                for (r, &j) in self.owner.iter().enumerate() {
                    let mut total = 0.0;
                    for k in 0..j_count {
                        let v = if k == j { 1.0 } else { weight(zt[j][r], zt[k][r]) };
                        w[(r, k)] = v;
                        total += v;
                    }
                    for k in 0..j_count {
                        w[(r, k)] /= total;
                    }
                }
            }
        }
        w
    }

    /// `(W W') ∘ K`.
    pub fn group_gram(w: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
        let ww = w * w.transpose();
        ww.component_mul(k)
    }

    /// Stacked design `B[(j, i), (k, l)] = a_jk(t_ji) h(t_ji, tau_l)`, `n_tot x J m`.
    pub fn mixed_from(&self, h: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = h.shape();
        let j_count = w.ncols();
        let mut b = DMatrix::zeros(n, j_count * m);
        for k in 0..j_count {
            for l in 0..m {
                for r in 0..n {
                    b[(r, k * m + l)] = w[(r, k)] * h[(r, l)];
                }
            }
        }
        b
    }

    pub fn mixed_basis(&self, z: &LatentPaths, range: f64) -> Result<DMatrix<f64>> {
        z.check(&self.spec)?;
        let h = self.integrated_basis(range)?;
        Ok(self.mixed_from(&h, &self.mixing(z)))
    }

    /// `X[(j, i), k] = 1{j = k}`: maps per-individual origins to rows.
    pub fn indicator(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n_total(), self.individuals());
        for (r, &j) in self.owner.iter().enumerate() {
            x[(r, j)] = 1.0;
        }
        x
    }
}

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const DIAGONAL_JITTER: f64 = 1e-8;

/// Multivariate normal fit to observed contexts (intercept excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModelFit {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl ContextModelFit {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.cov[(i, j)]).collect())
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = &self.chol * z;
        self.mean.iter().zip(s.iter()).map(|(m, v)| m + v).collect()
    }
}

/// Sample mean and (n - 1)-denominator covariance, with `1e-8` added to the
/// diagonal. Needs at least `dim + 1` observations.
pub fn fit_context_model<X: AsRef<[f64]>>(contexts: &[X]) -> Result<ContextModelFit> {
    let dim = contexts.first().map_or(0, |c| c.as_ref().len());
    if contexts.len() < dim + 1 || dim == 0 {
        return Err(Error::InsufficientData {
            needed: dim.max(1) + 1,
            have: contexts.len(),
        });
    }
    if contexts.iter().any(|c| c.as_ref().len() != dim) {
        return Err(Error::InvalidInput("contexts have different lengths".into()));
    }
    let n = contexts.len() as f64;
    let mut mean = vec![0.0; dim];
    for c in contexts {
        for (m, v) in mean.iter_mut().zip(c.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = DMatrix::zeros(dim, dim);
    for c in contexts {
        let c = c.as_ref();
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] += (c[i] - mean[i]) * (c[j] - mean[j]);
            }
        }
    }
    cov /= n - 1.0;
    for i in 0..dim {
        cov[(i, i)] += DIAGONAL_JITTER;
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Improper("context covariance is not positive definite".into()))?
        .l();
    Ok(ContextModelFit { mean, cov, chol })
}

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Two-arm normal-linear contextual bandit. Contexts are `(1, z)` with
/// `z ~ N(context_mean, context_cov)`; the reward of arm `a` is
/// `x . beta_a + N(0, noise_sd^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearContextualBandit {
    beta: Vec<Vec<f64>>,
    context_mean: Vec<f64>,
    context_cov: Vec<Vec<f64>>,
    context_chol: DMatrix<f64>,
    noise_sd: f64,
}

impl LinearContextualBandit {
    pub fn new(
        beta: Vec<Vec<f64>>,
        context_mean: Vec<f64>,
        context_cov: Vec<Vec<f64>>,
        noise_sd: f64,
    ) -> Result<Self> {
        if beta.len() != 2 {
            return Err(Error::InvalidInput(
                "the contextual bandit has exactly 2 arms".into(),
            ));
        }
        let d = context_mean.len() + 1;
        if beta.iter().any(|b| b.len() != d) {
            return Err(Error::InvalidInput(format!(
                "arm coefficients must have length {d}"
            )));
        }
        if context_cov.len() != d - 1 || context_cov.iter().any(|r| r.len() != d - 1) {
            return Err(Error::InvalidInput(
                "context covariance shape does not match the mean".into(),
            ));
        }
        if !(noise_sd.is_finite() && noise_sd > 0.0) {
            return Err(Error::InvalidInput("noise_sd must be positive".into()));
        }
        let cov = DMatrix::from_fn(d - 1, d - 1, |i, j| context_cov[i][j]);
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidInput("context covariance must be symmetric".into()));
        }
        let context_chol = if d > 1 {
            cov.clone()
                .cholesky()
                .ok_or_else(|| {
                    Error::InvalidInput("context covariance must be positive definite".into())
                })?
                .l()
        } else {
            DMatrix::zeros(0, 0)
        };
        Ok(LinearContextualBandit {
            beta,
            context_mean,
            context_cov,
            context_chol,
            noise_sd,
        })
    }

    /// Same contexts and noise with different arm coefficients.
    pub fn with_beta(&self, beta: Vec<Vec<f64>>) -> Result<Self> {
        if beta.len() != 2 || beta.iter().any(|b| b.len() != self.dim() || b.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("invalid arm coefficients".into()));
        }
        Ok(LinearContextualBandit {
            beta,
            ..self.clone()
        })
    }

    /// d = 3, standard bivariate normal contexts, noise sd 0.5.
    pub fn default_model() -> Self {
        Self::new(
            vec![vec![0.4, 0.2, -0.2], vec![0.2, 0.5, 0.2]],
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            0.5,
        )
        .expect("default contextual bandit is valid")
    }

    pub fn dim(&self) -> usize {
        self.context_mean.len() + 1
    }

    pub fn n_arms(&self) -> usize {
        2
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    pub fn context_mean(&self) -> &[f64] {
        &self.context_mean
    }

    pub fn context_cov(&self) -> &[Vec<f64>] {
        &self.context_cov
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.context_mean.len();
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let shifted = &self.context_chol * z;
        let mut x = Vec::with_capacity(m + 1);
        x.push(1.0);
        x.extend((0..m).map(|i| self.context_mean[i] + shifted[i]));
        x
    }

    #[inline]
    pub fn expected_reward(&self, context: &[f64], arm: usize) -> f64 {
        dot(context, &self.beta[arm])
    }

    pub fn pull<R: Rng + ?Sized>(&self, context: &[f64], arm: usize, rng: &mut R) -> Result<f64> {
        if arm >= 2 {
            return Err(Error::ArmOutOfRange { arm, n_arms: 2 });
        }
        if context.len() != self.dim() {
            return Err(Error::InvalidInput("context has the wrong length".into()));
        }
        Ok(self.draw(context, arm, rng))
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, context: &[f64], arm: usize, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.expected_reward(context, arm) + self.noise_sd * e
    }

    /// Per-context optimal mean and the arm attaining it (first on ties).
    pub fn optimal_mean(&self, context: &[f64]) -> (f64, usize) {
        let r0 = self.expected_reward(context, 0);
        let r1 = self.expected_reward(context, 1);
        if r1 > r0 {
            (r1, 1)
        } else {
            (r0, 0)
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn optimal_mean_at_origin_context() {
        let env = LinearContextualBandit::default_model();
        let (v, arm) = env.optimal_mean(&[1.0, 0.0, 0.0]);
        assert!((v - 0.4).abs() < 1e-15);
        assert_eq!(arm, 0);
        // x = (1, 1, 0): 0.6 vs 0.7
        let (v, arm) = env.optimal_mean(&[1.0, 1.0, 0.0]);
        assert!((v - 0.7).abs() < 1e-12);
        assert_eq!(arm, 1);
    }

    #[test]
    fn contexts_have_intercept_and_target_moments() {
        let env = LinearContextualBandit::new(
            vec![vec![0.0; 3], vec![0.0; 3]],
            vec![1.0, -2.0],
            vec![vec![4.0, 1.0], vec![1.0, 1.0]],
            1.0,
        )
        .unwrap();
        let mut rng = rng_for(5, &[]);
        let n = 50_000;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| env.sample_context(&mut rng)).collect();
        assert!(xs.iter().all(|x| x[0] == 1.0));
        let m1 = xs.iter().map(|x| x[1]).sum::<f64>() / n as f64;
        let m2 = xs.iter().map(|x| x[2]).sum::<f64>() / n as f64;
        let c12 = xs.iter().map(|x| (x[1] - m1) * (x[2] - m2)).sum::<f64>() / n as f64;
        assert!((m1 - 1.0).abs() < 4.0 * 2.0 / (n as f64).sqrt());
        assert!((m2 + 2.0).abs() < 4.0 / (n as f64).sqrt());
        assert!((c12 - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(LinearContextualBandit::new(vec![vec![0.0; 3]], vec![0.0; 2], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).is_err());
        assert!(LinearContextualBandit::new(
            vec![vec![0.0; 3], vec![0.0; 3]],
            vec![0.0; 2],
            vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            1.0
        )
        .is_err());
        let env = LinearContextualBandit::default_model();
        let mut rng = rng_for(1, &[]);
        assert!(env.pull(&[1.0, 0.0, 0.0], 2, &mut rng).is_err());
    }
}

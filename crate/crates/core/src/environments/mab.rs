use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Common surface of the non-contextual bandits.
pub trait Bandit {
    fn n_arms(&self) -> usize;

    fn arm_mean(&self, arm: usize) -> f64;

    /// Draws a reward without checking the arm index.
    fn draw<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64;

    fn pull<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<f64> {
        if arm >= self.n_arms() {
            return Err(Error::ArmOutOfRange {
                arm,
                n_arms: self.n_arms(),
            });
        }
        Ok(self.draw(arm, rng))
    }

    /// `max_i mu_i`.
    fn optimal_mean(&self) -> f64 {
        (0..self.n_arms())
            .map(|i| self.arm_mean(i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn worst_mean(&self) -> f64 {
        (0..self.n_arms())
            .map(|i| self.arm_mean(i))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliMab {
    p: Vec<f64>,
}

impl BernoulliMab {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidInput("a bandit needs at least 2 arms".into()));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(
                "Bernoulli probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(BernoulliMab { p })
    }

    /// Built-in arm probabilities for 2, 5 and 10 arms; other sizes get
    /// probabilities equally spaced over `[0.1, 0.9]`.
    pub fn default_probabilities(k: usize) -> Vec<f64> {
        match k {
            2 => vec![0.3, 0.7],
            5 => vec![0.3, 0.4, 0.5, 0.6, 0.7],
            10 => (0..10).map(|i| 0.1 + 0.07 * i as f64).collect(),
            _ => {
                let k = k.max(2);
                (0..k)
                    .map(|i| 0.1 + 0.8 * i as f64 / (k - 1) as f64)
                    .collect()
            }
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }
}

impl Bandit for BernoulliMab {
    fn n_arms(&self) -> usize {
        self.p.len()
    }

    fn arm_mean(&self, arm: usize) -> f64 {
        self.p[arm]
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.p[arm] {
            1.0
        } else {
            0.0
        }
    }
}

/// Gaussian arms. The experimental environments share one standard
/// deviation; models sampled from a posterior carry one per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMab {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianMab {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        let k = mu.len();
        Self::heteroskedastic(mu, vec![sigma; k])
    }

    pub fn heteroskedastic(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() < 2 || sigma.len() != mu.len() {
            return Err(Error::InvalidInput(
                "a bandit needs at least 2 arms and one sd per arm".into(),
            ));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("arm means must be finite".into()));
        }
        Ok(GaussianMab { mu, sigma })
    }

    /// Means equally spaced strictly inside `[0, 1]`: `i / (k + 1)`.
    pub fn default_means(k: usize) -> Vec<f64> {
        (1..=k).map(|i| i as f64 / (k + 1) as f64).collect()
    }

    pub fn means(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }
}

impl Bandit for GaussianMab {
    fn n_arms(&self) -> usize {
        self.mu.len()
    }

    fn arm_mean(&self, arm: usize) -> f64 {
        self.mu[arm]
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu[arm] + self.sigma[arm] * z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MabModel {
    Bernoulli(BernoulliMab),
    Gaussian(GaussianMab),
}

impl Bandit for MabModel {
    fn n_arms(&self) -> usize {
        match self {
            MabModel::Bernoulli(b) => b.n_arms(),
            MabModel::Gaussian(g) => g.n_arms(),
        }
    }

    fn arm_mean(&self, arm: usize) -> f64 {
        match self {
            MabModel::Bernoulli(b) => b.arm_mean(arm),
            MabModel::Gaussian(g) => g.arm_mean(arm),
        }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        match self {
            MabModel::Bernoulli(b) => b.draw(arm, rng),
            MabModel::Gaussian(g) => g.draw(arm, rng),
        }
    }
}

//! Conjugate arm posteriors.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal, StudentT};

use crate::environments::{BernoulliMab, GaussianMab, MabModel};
use crate::error::{Error, Result};
use crate::policies::ArmBelief;

/// Beta posterior of a Bernoulli arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaArm {
    pub a: f64,
    pub b: f64,
}

impl Default for BetaArm {
    fn default() -> Self {
        BetaArm { a: 1.0, b: 1.0 }
    }
}

impl BetaArm {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Improper(format!("Beta({a}, {b})")));
        }
        Ok(BetaArm { a, b })
    }

    pub fn update(&mut self, reward: f64) -> Result<()> {
        if reward != 0.0 && reward != 1.0 {
            return Err(Error::InvalidInput(format!(
                "Bernoulli reward must be 0 or 1, got {reward}"
            )));
        }
        self.a += reward;
        self.b += 1.0 - reward;
        Ok(())
    }

    pub fn updated(&self, reward: f64) -> Result<Self> {
        let mut next = *self;
        next.update(reward)?;
        Ok(next)
    }

    pub fn posterior_mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn sample_p<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match Beta::new(self.a, self.b) {
            Ok(d) => d.sample(rng).clamp(0.0, 1.0),
            Err(_) => self.posterior_mean(),
        }
    }
}

impl ArmBelief for BetaArm {
    fn mean(&self) -> Option<f64> {
        (self.a > 0.0 && self.b > 0.0).then(|| self.posterior_mean())
    }

    fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_p(rng)
    }
}

/// Normal-inverse-gamma posterior over `(mu, sigma^2)` of a Gaussian arm:
/// `sigma^2 ~ InvGamma(shape, scale)`, `mu | sigma^2 ~ N(m, sigma^2 / kappa)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalArm {
    pub m: f64,
    pub kappa: f64,
    pub shape: f64,
    pub scale: f64,
}

impl Default for NormalArm {
    /// Weak prior centred mid-range: `m = 0.5, kappa = 0.01, shape = 2,
    /// scale = 0.5 (shape - 1)`.
    fn default() -> Self {
        NormalArm {
            m: 0.5,
            kappa: 0.01,
            shape: 2.0,
            scale: 0.5,
        }
    }
}

impl NormalArm {
    pub fn new(m: f64, kappa: f64, shape: f64, scale: f64) -> Result<Self> {
        if !(m.is_finite() && kappa > 0.0 && shape > 0.0 && scale > 0.0)
            || !(kappa.is_finite() && shape.is_finite() && scale.is_finite())
        {
            return Err(Error::Improper(format!(
                "NIG(m={m}, kappa={kappa}, shape={shape}, scale={scale})"
            )));
        }
        Ok(NormalArm {
            m,
            kappa,
            shape,
            scale,
        })
    }

    pub fn update(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("reward {x} is not finite")));
        }
        let k1 = self.kappa + 1.0;
        let d = x - self.m;
        self.scale += 0.5 * self.kappa * d * d / k1;
        self.m += d / k1;
        self.kappa = k1;
        self.shape += 0.5;
        Ok(())
    }

    pub fn updated(&self, x: f64) -> Result<Self> {
        let mut next = *self;
        next.update(x)?;
        Ok(next)
    }

    /// Posterior mean of `sigma^2` (mode-like fallback when `shape <= 1`).
    pub fn expected_variance(&self) -> f64 {
        if self.shape > 1.0 {
            self.scale / (self.shape - 1.0)
        } else {
            self.scale / self.shape
        }
    }

    /// Draws `(mu, sigma^2)`.
    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let precision = Gamma::new(self.shape, 1.0 / self.scale)
            .map(|g| g.sample(rng))
            .unwrap_or(1.0 / self.expected_variance());
        let var = (1.0 / precision).clamp(1e-300, 1e300);
        let z: f64 = rng.sample(StandardNormal);
        (self.m + (var / self.kappa).sqrt() * z, var)
    }
}

impl ArmBelief for NormalArm {
    /// The marginal of `mu` is a location-scale t with `2 shape` degrees of
    /// freedom; its mean exists when `2 shape > 1`.
    fn mean(&self) -> Option<f64> {
        (2.0 * self.shape > 1.0).then_some(self.m)
    }

    fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let scale = (self.scale / (self.shape * self.kappa)).sqrt();
        let t = StudentT::new(2.0 * self.shape)
            .map(|d| d.sample(rng))
            .unwrap_or(0.0);
        self.m + scale * t
    }
}

/// One posterior per arm.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmPosteriors {
    Beta(Vec<BetaArm>),
    Normal(Vec<NormalArm>),
}

impl ArmPosteriors {
    pub fn beta_prior(k: usize) -> Self {
        ArmPosteriors::Beta(vec![BetaArm::default(); k])
    }

    pub fn normal_prior(k: usize) -> Self {
        ArmPosteriors::Normal(vec![NormalArm::default(); k])
    }

    /// Prior family matching a bandit's reward model.
    pub fn prior_for(model: &MabModel) -> Self {
        use crate::environments::Bandit;
        match model {
            MabModel::Bernoulli(b) => Self::beta_prior(b.n_arms()),
            MabModel::Gaussian(g) => Self::normal_prior(g.n_arms()),
        }
    }

    pub fn n_arms(&self) -> usize {
        match self {
            ArmPosteriors::Beta(v) => v.len(),
            ArmPosteriors::Normal(v) => v.len(),
        }
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        let k = self.n_arms();
        if arm >= k {
            return Err(Error::ArmOutOfRange { arm, n_arms: k });
        }
        match self {
            ArmPosteriors::Beta(v) => v[arm].update(reward),
            ArmPosteriors::Normal(v) => v[arm].update(reward),
        }
    }

    pub fn posterior_mean(&self, arm: usize) -> f64 {
        match self {
            ArmPosteriors::Beta(v) => v[arm].posterior_mean(),
            ArmPosteriors::Normal(v) => v[arm].m,
        }
    }

    /// Draws a complete bandit from the posterior.
    pub fn sample_model<R: Rng + ?Sized>(&self, rng: &mut R) -> MabModel {
        match self {
            ArmPosteriors::Beta(v) => {
                let p = v.iter().map(|b| b.sample_p(rng)).collect();
                MabModel::Bernoulli(BernoulliMab::new(p).expect("sampled probabilities are valid"))
            }
            ArmPosteriors::Normal(v) => {
                let (mu, sd): (Vec<f64>, Vec<f64>) = v
                    .iter()
                    .map(|a| {
                        let (m, var) = a.sample_params(rng);
                        (m, var.sqrt())
                    })
                    .unzip();
                MabModel::Gaussian(
                    GaussianMab::heteroskedastic(mu, sd).expect("sampled arms are valid"),
                )
            }
        }
    }

    /// The plug-in model at posterior means.
    pub fn point_model(&self) -> MabModel {
        match self {
            ArmPosteriors::Beta(v) => MabModel::Bernoulli(
                BernoulliMab::new(v.iter().map(BetaArm::posterior_mean).collect())
                    .expect("posterior means are valid"),
            ),
            ArmPosteriors::Normal(v) => MabModel::Gaussian(
                GaussianMab::heteroskedastic(
                    v.iter().map(|a| a.m).collect(),
                    v.iter().map(|a| a.expected_variance().sqrt()).collect(),
                )
                .expect("posterior means are valid"),
            ),
        }
    }
}

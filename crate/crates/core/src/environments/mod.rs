//! Generative models of the experimental domains.

mod contextual;
mod glucose;
mod mab;

pub use contextual::LinearContextualBandit;
pub use glucose::{
    glucose_reward, reward_unchecked, GlucoseDynamics, GlucoseMdp, GlucoseState, AR1_DIM, AR2_DIM,
    Q_STATE_DIM, TRUE_BETA,
};
pub use mab::{Bandit, BernoulliMab, GaussianMab, MabModel};

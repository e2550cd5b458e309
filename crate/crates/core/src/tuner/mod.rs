//! Per-step tuning of exploration schedules and the episode loops that use it.

mod bandit;
mod contextual;
mod glucose;
mod objective;

pub use bandit::{mab_rollout, run_mab_episode, MabAgent, MabConfidence};
pub use contextual::{
    contextual_rollout, run_contextual_episode, ContextualAgent, ContextualConfidence,
};
pub use glucose::{
    glucose_rollout, initial_state, run_glucose_episode, Cohort, Estimator, GlucoseConfidence,
    GlucoseModel, GlucoseOptions, LearnedDynamics,
};
pub use objective::{draw_models, estimate_objective, estimate_with_models, tune_theta, ConfidenceModel, TunedSchedule};

use serde::{Deserialize, Serialize};

use crate::bayesopt::OptimizerConfig;
use crate::error::{Error, Result};
use crate::models::ForestConfig;
use crate::policies::{Formula, PolicyKind};
use crate::schedule::{Schedule, Theta, ThetaBounds};

/// Which models the tuning objective averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningVariant {
    /// Models drawn from the confidence distribution.
    #[default]
    ConfidenceAveraged,
    /// The plug-in estimate only.
    PointEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub n_model_draws: usize,
    pub n_rollouts_per_draw: usize,
    pub retune_interval: usize,
    pub variant: TuningVariant,
    /// Simulate only the remaining steps from the current history.
    pub remaining_horizon: bool,
    pub bounds: ThetaBounds,
    pub optimizer: OptimizerConfig,
    /// Reward forest refit inside MDP rollouts.
    pub rollout_forest: ForestConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            n_model_draws: 25,
            n_rollouts_per_draw: 2,
            retune_interval: 1,
            variant: TuningVariant::ConfidenceAveraged,
            remaining_horizon: false,
            bounds: ThetaBounds::default(),
            optimizer: OptimizerConfig::default(),
            rollout_forest: ForestConfig {
                n_trees: 10,
                ..ForestConfig::default()
            },
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_model_draws == 0 || self.n_rollouts_per_draw == 0 {
            return Err(Error::Config("model draws and rollouts must be at least 1".into()));
        }
        if self.retune_interval == 0 {
            return Err(Error::Config("retune_interval must be at least 1".into()));
        }
        let b = &self.bounds;
        if !(0.0..=1.0).contains(&b.theta0_max)
            || !(b.theta2_min > 0.0 && b.theta2_min <= b.theta2_max && b.theta2_max.is_finite())
        {
            return Err(Error::Config("invalid schedule bounds".into()));
        }
        if self.rollout_forest.n_trees == 0 || self.rollout_forest.min_leaf == 0 {
            return Err(Error::Config("rollout forest needs trees and a positive leaf size".into()));
        }
        self.optimizer.validate()
    }
}

/// Where a rule's exploration parameter comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Exploration {
    /// No parameter (Gittins).
    None,
    Fixed(f64),
    Formula(Formula),
    Schedule(Theta),
    Tuned,
}

/// A decision rule plus its parameter source.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub exploration: Exploration,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, exploration: Exploration) -> Self {
        PolicySpec { kind, exploration }
    }

    pub fn is_tuned(&self) -> bool {
        self.exploration == Exploration::Tuned
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        match (&self.kind, &self.exploration) {
            (PolicyKind::Gittins, Exploration::None) => Ok(()),
            (PolicyKind::Gittins, _) => Err(Error::Config("Gittins takes no exploration parameter".into())),
            (_, Exploration::None) => Err(Error::Config(format!(
                "{} needs an exploration parameter",
                self.kind.as_str()
            ))),
            (_, Exploration::Fixed(v)) if !(0.0..=1.0).contains(v) => {
                Err(Error::Config(format!("fixed level {v} outside [0, 1]")))
            }
            (_, Exploration::Schedule(th)) => Schedule::new(*th, horizon).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Schedule level at step `t`, before mapping onto the rule's parameter.
    pub fn level(&self, t: usize, tuned: Option<&Schedule>, horizon: usize) -> Option<f64> {
        match &self.exploration {
            Exploration::None => None,
            Exploration::Fixed(v) => Some(*v),
            Exploration::Formula(f) => Some(f.value(t).clamp(0.0, 1.0)),
            Exploration::Schedule(th) => Schedule::new(*th, horizon).ok().map(|s| s.level(t)),
            Exploration::Tuned => tuned.map(|s| s.level(t)),
        }
    }
}

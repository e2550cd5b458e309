//! Episode histories and regret accounting.

use crate::environments::{Bandit, BernoulliMab, GaussianMab, LinearContextualBandit, MabModel};
use crate::error::{precondition, Error, Result};
use crate::schedule::Theta;

/// One decision: the step it was made at, the context it saw, the action
/// taken and the realized reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: usize,
    pub context: Option<Vec<f64>>,
    pub action: usize,
    pub reward: f64,
}

/// Append-only record of one episode. Initialization pulls are kept apart
/// from the numbered decision steps `1..=T`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    initial: Vec<Record>,
    records: Vec<Record>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_initial(&mut self, context: Option<Vec<f64>>, action: usize, reward: f64) {
        self.initial.push(Record {
            step: 0,
            context,
            action,
            reward,
        });
    }

    /// Appends a decision. Steps must be strictly increasing and start at 1.
    pub fn push(&mut self, record: Record) -> Result<()> {
        let last = self.records.last().map_or(0, |r| r.step);
        if record.step <= last {
            return Err(precondition(format!(
                "step {} does not follow step {last}",
                record.step
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn initial(&self) -> &[Record] {
        &self.initial
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Environments against which regret is defined.
pub trait RegretReference {
    /// `mu*` for a step, given the context it was taken in (if any).
    fn optimal_mean_at(&self, context: Option<&[f64]>) -> Result<f64>;

    /// Mean reward of `arm` in `context`.
    fn arm_mean_at(&self, arm: usize, context: Option<&[f64]>) -> Result<f64>;
}

macro_rules! mab_reference {
    ($t:ty) => {
        impl RegretReference for $t {
            fn optimal_mean_at(&self, _context: Option<&[f64]>) -> Result<f64> {
                Ok(self.optimal_mean())
            }

            fn arm_mean_at(&self, arm: usize, _context: Option<&[f64]>) -> Result<f64> {
                if arm >= self.n_arms() {
                    return Err(Error::ArmOutOfRange {
                        arm,
                        n_arms: self.n_arms(),
                    });
                }
                Ok(self.arm_mean(arm))
            }
        }
    };
}

mab_reference!(BernoulliMab);
mab_reference!(GaussianMab);
mab_reference!(MabModel);

impl RegretReference for LinearContextualBandit {
    fn optimal_mean_at(&self, context: Option<&[f64]>) -> Result<f64> {
        let x = context.ok_or_else(|| precondition("contextual regret needs the context"))?;
        Ok(self.optimal_mean(x).0)
    }

    fn arm_mean_at(&self, arm: usize, context: Option<&[f64]>) -> Result<f64> {
        let x = context.ok_or_else(|| precondition("contextual regret needs the context"))?;
        if arm >= 2 {
            return Err(Error::ArmOutOfRange { arm, n_arms: 2 });
        }
        Ok(self.expected_reward(x, arm))
    }
}

/// Realized regret `sum_t (mu*_t - U^t)` over the decision steps.
pub fn cumulative_regret<E: RegretReference + ?Sized>(history: &History, env: &E) -> Result<f64> {
    history.records().iter().try_fold(0.0, |acc, r| {
        Ok(acc + env.optimal_mean_at(r.context.as_deref())? - r.reward)
    })
}

/// Pseudo-regret `sum_t (mu*_t - mu_{A^t})`.
pub fn cumulative_pseudo_regret<E: RegretReference + ?Sized>(
    history: &History,
    env: &E,
) -> Result<f64> {
    history.records().iter().try_fold(0.0, |acc, r| {
        let ctx = r.context.as_deref();
        Ok(acc + env.optimal_mean_at(ctx)? - env.arm_mean_at(r.action, ctx)?)
    })
}

/// What the cumulative column of an episode measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Bandits: realized cumulative regret, lower is better.
    Regret,
    /// MDP: mean per-patient cumulative reward, higher is better.
    Reward,
}

/// Per-step log line of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    /// Arm index (bandits) or number of treated patients (MDP).
    pub action: usize,
    /// Realized reward (MDP: cohort mean).
    pub reward: f64,
    /// Exploration level used at this step, when the rule has one.
    pub eta: Option<f64>,
    /// Tuned schedule in force at this step.
    pub theta: Option<Theta>,
    /// This step's regret (bandits) or reward (MDP).
    pub increment: f64,
    pub cumulative: f64,
    /// Running pseudo-regret (bandits only).
    pub pseudo_cumulative: Option<f64>,
}

/// A completed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub variant: String,
    pub replicate: usize,
    pub seed: u64,
    pub objective: Objective,
    pub history: History,
    pub steps: Vec<StepLog>,
    /// Notes such as estimator substitutions made during the episode.
    pub notes: Vec<String>,
}

impl EpisodeRecord {
    pub fn final_value(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cumulative)
    }

    pub fn final_pseudo_regret(&self) -> Option<f64> {
        self.steps.last().and_then(|s| s.pseudo_cumulative)
    }

    /// Checks that each cumulative value is the running sum of increments.
    pub fn is_consistent(&self) -> bool {
        let mut acc = 0.0;
        self.steps.iter().all(|s| {
            acc += s.increment;
            (acc - s.cumulative).abs() <= 1e-9 * (1.0 + acc.abs())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(actions: &[usize], rewards: &[f64]) -> History {
        let mut h = History::new();
        for (i, (&a, &r)) in actions.iter().zip(rewards).enumerate() {
            h.push(Record {
                step: i + 1,
                context: None,
                action: a,
                reward: r,
            })
            .unwrap();
        }
        h
    }

    #[test]
    fn best_arm_of_noiseless_bandit_has_zero_regret() {
        let env = GaussianMab::new(vec![0.2, 0.8], 1e-300).unwrap();
        let h = history(&[1; 10], &[0.8; 10]);
        assert_eq!(cumulative_regret(&h, &env).unwrap(), 0.0);
    }

    #[test]
    fn suboptimal_arm_accumulates_gap() {
        let env = GaussianMab::new(vec![0.5, 0.8], 1e-300).unwrap();
        let h = history(&[0; 7], &[0.5; 7]);
        assert!((cumulative_regret(&h, &env).unwrap() - 7.0 * 0.3).abs() < 1e-12);
        assert!((cumulative_pseudo_regret(&h, &env).unwrap() - 2.1).abs() < 1e-12);
    }

    #[test]
    fn hand_summed_bernoulli_history() {
        let env = BernoulliMab::new(vec![0.3, 0.7]).unwrap();
        let h = history(&[0, 1, 1, 0, 1], &[1.0, 0.0, 1.0, 0.0, 1.0]);
        // 0.7-1 + 0.7-0 + 0.7-1 + 0.7-0 + 0.7-1
        let expected = -0.3 + 0.7 - 0.3 + 0.7 - 0.3;
        assert!((cumulative_regret(&h, &env).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn regret_is_additive_over_segments() {
        let env = BernoulliMab::new(vec![0.3, 0.7]).unwrap();
        let full = history(&[0, 1, 1, 0], &[1.0, 0.0, 1.0, 1.0]);
        let a = history(&[0, 1], &[1.0, 0.0]);
        let b = history(&[1, 0], &[1.0, 1.0]);
        let total = cumulative_regret(&full, &env).unwrap();
        let split = cumulative_regret(&a, &env).unwrap() + cumulative_regret(&b, &env).unwrap();
        assert!((total - split).abs() < 1e-12);
    }

    #[test]
    fn push_requires_increasing_steps() {
        let mut h = history(&[0, 1], &[0.0, 1.0]);
        let before = h.clone();
        let dup = Record {
            step: 2,
            context: None,
            action: 0,
            reward: 0.0,
        };
        assert!(h.push(dup).is_err());
        assert_eq!(h, before);
        h.push(Record {
            step: 5,
            context: None,
            action: 0,
            reward: 0.0,
        })
        .unwrap();
        assert_eq!(&h.records()[..2], before.records());
    }

    #[test]
    fn contextual_regret_needs_context() {
        let env = LinearContextualBandit::default_model();
        let h = history(&[0], &[0.0]);
        assert!(cumulative_regret(&h, &env).is_err());
        let mut h = History::new();
        h.push(Record {
            step: 1,
            context: Some(vec![1.0, 0.0, 0.0]),
            action: 1,
            reward: 0.1,
        })
        .unwrap();
        assert!((cumulative_regret(&h, &env).unwrap() - 0.3).abs() < 1e-12);
        assert!((cumulative_pseudo_regret(&h, &env).unwrap() - 0.2).abs() < 1e-12);
    }
}

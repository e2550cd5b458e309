//! Confidence-averaged rollout objective and the tuning step.

use rayon::prelude::*;

use crate::bayesopt::minimize;
use crate::error::Result;
use crate::rng::{rng_for, stream, SimRng};
use crate::schedule::{clamp_with_bounds, Schedule};

use super::{TuningConfig, TuningVariant};

/// A distribution over complete generative models.
pub trait ConfidenceModel: Sync {
    type Model: Send + Sync;

    fn sample_model(&self, rng: &mut SimRng) -> Self::Model;

    fn point_model(&self) -> Self::Model;
}

/// The models one tuning call averages over, shared by every candidate.
pub fn draw_models<C: ConfidenceModel>(conf: &C, cfg: &TuningConfig, crn_seed: u64) -> Vec<C::Model> {
    (0..cfg.n_model_draws as u64)
        .map(|m| match cfg.variant {
            TuningVariant::PointEstimate => conf.point_model(),
            TuningVariant::ConfidenceAveraged => {
                conf.sample_model(&mut rng_for(crn_seed, &[stream::MODEL_DRAW, m]))
            }
        })
        .collect()
}

/// Mean of `rollout` over every model and `n_rollouts` streams per model.
/// Stream `(m, r)` is the same for every call with the same `crn_seed`.
/// Failed rollouts make the estimate NaN.
pub fn estimate_with_models<M, F>(models: &[M], n_rollouts: usize, crn_seed: u64, rollout: F) -> f64
where
    M: Sync,
    F: Fn(&M, &mut SimRng) -> Result<f64> + Sync,
{
    let n = models.len() * n_rollouts;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (m, r) = (i / n_rollouts, i % n_rollouts);
            let mut rng = rng_for(crn_seed, &[stream::ROLLOUT, m as u64, r as u64]);
            rollout(&models[m], &mut rng).unwrap_or(f64::NAN)
        })
        .collect();
    values.iter().sum::<f64>() / n as f64
}

/// Estimated loss of `schedule` under the confidence model.
pub fn estimate_objective<C, F>(
    schedule: &Schedule,
    conf: &C,
    cfg: &TuningConfig,
    crn_seed: u64,
    rollout: F,
) -> f64
where
    C: ConfidenceModel,
    F: Fn(&C::Model, &Schedule, &mut SimRng) -> Result<f64> + Sync,
{
    let models = draw_models(conf, cfg, crn_seed);
    estimate_with_models(&models, cfg.n_rollouts_per_draw, crn_seed, |m, rng| {
        rollout(m, schedule, rng)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedSchedule {
    pub schedule: Schedule,
    /// Surrogate's estimate of the loss at `schedule`.
    pub estimated_loss: f64,
}

/// Minimizes the estimated loss over the schedule box.
pub fn tune_theta<C, F>(
    conf: &C,
    cfg: &TuningConfig,
    horizon: usize,
    crn_seed: u64,
    rollout: F,
) -> Result<TunedSchedule>
where
    C: ConfidenceModel,
    F: Fn(&C::Model, &Schedule, &mut SimRng) -> Result<f64> + Sync,
{
    let models = draw_models(conf, cfg, crn_seed);
    let bounds = cfg.bounds.box_for(horizon);
    let objective = |x: &[f64]| {
        let s = clamp_with_bounds([x[0], x[1], x[2]], horizon, &cfg.bounds);
        estimate_with_models(&models, cfg.n_rollouts_per_draw, crn_seed, |m, rng| {
            rollout(m, &s, rng)
        })
    };
    let mut rng = rng_for(crn_seed, &[stream::OPTIMIZER]);
    let res = minimize(objective, &bounds, &cfg.optimizer, &mut rng)?;
    Ok(TunedSchedule {
        schedule: clamp_with_bounds([res.x[0], res.x[1], res.x[2]], horizon, &cfg.bounds),
        estimated_loss: res.estimated_min,
    })
}

//! Bayesian optimization of noisy objectives over a box.

mod gp;

pub use gp::{expected_improvement, gp_fit, gp_predict, GpConfig, GpHyper, GpSurrogate, JITTER};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Total objective evaluations.
    pub budget: usize,
    pub initial_design: usize,
    pub n_candidates: usize,
    /// Perturbations of the incumbent added to the candidate set.
    pub n_local: usize,
    pub local_sd: f64,
    pub gp: GpConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            budget: 30,
            initial_design: 8,
            n_candidates: 512,
            n_local: 64,
            local_sd: 0.1,
            gp: GpConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_design < 2 {
            return Err(Error::Config("initial_design must be at least 2".into()));
        }
        if self.budget < self.initial_design {
            return Err(Error::Config(format!(
                "budget {} below initial design size {}",
                self.budget, self.initial_design
            )));
        }
        if self.n_candidates == 0 {
            return Err(Error::Config("n_candidates must be positive".into()));
        }
        if !(self.local_sd > 0.0) {
            return Err(Error::Config("local_sd must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub x: Vec<f64>,
    /// Value used by the surrogate (penalized when the objective was not finite).
    pub value: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    /// Posterior mean at `x`.
    pub estimated_min: f64,
    pub evaluations: Vec<Evaluation>,
}

const PRIMES: [u32; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// `n` Halton points in `[0,1)^dim` with a random toroidal shift.
pub fn shifted_halton<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if dim > PRIMES.len() {
        return Err(precondition(format!("at most {} dimensions", PRIMES.len())));
    }
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    Ok((1..=n as u64)
        .map(|i| {
            (0..dim)
                .map(|k| (radical_inverse(i, PRIMES[k]) + shift[k]).fract())
                .collect()
        })
        .collect())
}

fn penalize(values: &mut [Evaluation]) {
    let finite: Vec<f64> = values.iter().filter(|e| e.finite).map(|e| e.value).collect();
    let penalty = if finite.is_empty() {
        1e6
    } else {
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        hi + (hi - lo) + 1.0
    };
    for e in values.iter_mut().filter(|e| !e.finite) {
        e.value = penalty;
    }
}

/// Minimizes `objective` over the box `bounds` using at most `cfg.budget`
/// evaluations. The initial design is evaluated in parallel; results are
/// gathered in design order so the run is reproducible for a fixed `rng`.
pub fn minimize<F, R>(
    objective: F,
    bounds: &[(f64, f64)],
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<MinimizeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let dim = bounds.len();
    if dim == 0 || bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::InvalidInput("bounds must be finite with lo <= hi".into()));
    }
    let to_box = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(bounds)
            .map(|(v, (lo, hi))| (lo + v.clamp(0.0, 1.0) * (hi - lo)).clamp(*lo, *hi))
            .collect()
    };
    let eval = |u: &[f64]| {
        let v = objective(&to_box(u));
        Evaluation {
            x: u.to_vec(),
            value: v,
            finite: v.is_finite(),
        }
    };

    let design = shifted_halton(cfg.initial_design, dim, rng)?;
    let mut evals: Vec<Evaluation> = design.par_iter().map(|u| eval(u)).collect();

    let fit = |evals: &mut Vec<Evaluation>| {
        penalize(evals);
        let xs: Vec<Vec<f64>> = evals.iter().map(|e| e.x.clone()).collect();
        let ys: Vec<f64> = evals.iter().map(|e| e.value).collect();
        gp_fit(&xs, &ys, &cfg.gp)
    };
    let incumbent = |g: &GpSurrogate, evals: &[Evaluation]| -> Result<(usize, f64)> {
        let mut best = (0, f64::INFINITY);
        for (i, e) in evals.iter().enumerate() {
            let m = g.predict(&e.x)?.0;
            if m < best.1 {
                best = (i, m);
            }
        }
        Ok(best)
    };

    while evals.len() < cfg.budget {
        let g = fit(&mut evals)?;
        let (inc, inc_mean) = incumbent(&g, &evals)?;
        let mut candidates: Vec<Vec<f64>> = (0..cfg.n_candidates)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        for _ in 0..cfg.n_local {
            let c = evals[inc]
                .x
                .iter()
                .map(|v| {
                    let z: f64 = rng.sample(StandardNormal);
                    (v + cfg.local_sd * z).clamp(0.0, 1.0)
                })
                .collect();
            candidates.push(c);
        }
        let mut pick = 0;
        let mut best_ei = f64::NEG_INFINITY;
        for (i, c) in candidates.iter().enumerate() {
            let (m, v) = g.predict(c)?;
            let ei = expected_improvement(m, v, inc_mean);
            if ei > best_ei {
                best_ei = ei;
                pick = i;
            }
        }
        evals.push(eval(&candidates[pick]));
    }

    penalize(&mut evals);
    let (idx, est) = match fit(&mut evals) {
        Ok(g) => incumbent(&g, &evals)?,
        Err(_) => evals
            .iter()
            .enumerate()
            .map(|(i, e)| (i, e.value))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a }),
    };
    Ok(MinimizeResult {
        x: to_box(&evals[idx].x),
        estimated_min: est,
        evaluations: evals
            .into_iter()
            .map(|e| Evaluation {
                x: to_box(&e.x),
                ..e
            })
            .collect(),
    })
}

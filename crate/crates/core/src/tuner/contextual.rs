//! Two-arm linear contextual bandit episodes and rollouts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::environments::LinearContextualBandit;
use crate::error::{Error, Result};
use crate::history::{EpisodeRecord, History, Objective, Record, StepLog};
use crate::models::{fit_context_model, fit_ols, ContextModelFit, LinearFit, RIDGE_LAMBDA};
use crate::policies::{contextual_greedy, PolicyKind};
use crate::rng::{derive_seed, rng_for, stream, SimRng};
use crate::schedule::Schedule;

use super::objective::{tune_theta, ConfidenceModel};
use super::{PolicySpec, TuningConfig};

/// Per-arm least-squares state kept as normal-equation sums, plus the raw
/// data needed for full fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualAgent {
    dim: usize,
    xtx: Vec<DMatrix<f64>>,
    xty: Vec<DVector<f64>>,
    coef: Vec<Vec<f64>>,
    rows: Vec<Vec<Vec<f64>>>,
    ys: Vec<Vec<f64>>,
}

impl ContextualAgent {
    pub fn new(dim: usize) -> Self {
        ContextualAgent {
            dim,
            xtx: vec![DMatrix::zeros(dim, dim); 2],
            xty: vec![DVector::zeros(dim); 2],
            coef: vec![vec![0.0; dim]; 2],
            rows: vec![Vec::new(), Vec::new()],
            ys: vec![Vec::new(), Vec::new()],
        }
    }

    /// Number of initialization pulls per arm.
    pub fn init_pulls(&self) -> usize {
        self.dim + 1
    }

    pub fn counts(&self) -> [usize; 2] {
        [self.ys[0].len(), self.ys[1].len()]
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coef
    }

    pub fn observe(&mut self, context: &[f64], arm: usize, reward: f64) -> Result<()> {
        if arm >= 2 {
            return Err(Error::ArmOutOfRange { arm, n_arms: 2 });
        }
        if context.len() != self.dim {
            return Err(Error::InvalidInput("context has the wrong length".into()));
        }
        let x = DVector::from_column_slice(context);
        self.xtx[arm] += &x * x.transpose();
        self.xty[arm] += &x * reward;
        self.rows[arm].push(context.to_vec());
        self.ys[arm].push(reward);
        self.coef[arm] = self.solve(arm);
        Ok(())
    }

    fn solve(&self, arm: usize) -> Vec<f64> {
        let solved = self.xtx[arm].clone().cholesky().and_then(|c| {
            let b = c.solve(&self.xty[arm]);
            b.iter().all(|v| v.is_finite()).then_some(b)
        });
        let b = solved.unwrap_or_else(|| {
            let mut a = self.xtx[arm].clone();
            for i in 0..self.dim {
                a[(i, i)] += RIDGE_LAMBDA;
            }
            a.cholesky()
                .map(|c| c.solve(&self.xty[arm]))
                .unwrap_or_else(|| DVector::zeros(self.dim))
        });
        b.iter().copied().collect()
    }

    /// Epsilon-greedy choice: a uniform arm with probability `epsilon`,
    /// otherwise the arm with the larger fitted mean.
    pub fn select(&self, epsilon: f64, context: &[f64], rng: &mut SimRng) -> Result<usize> {
        if self.ys.iter().any(|y| y.len() < self.dim) {
            return Err(Error::Precondition("each arm needs d observations".into()));
        }
        if rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..2))
        } else {
            contextual_greedy(&self.coef, context, rng)
        }
    }

    /// Full least-squares fits (QR with ridge fallback) for each arm.
    pub fn fits(&self) -> Result<Vec<LinearFit>> {
        (0..2).map(|a| fit_ols(&self.rows[a], &self.ys[a])).collect()
    }

    /// Observed contexts without their intercept.
    pub fn covariates(&self) -> Vec<Vec<f64>> {
        self.rows.iter().flatten().map(|r| r[1..].to_vec()).collect()
    }
}

/// Sampling distribution of the per-arm coefficients with a fitted normal
/// context model and pooled noise.
#[derive(Debug, Clone)]
pub struct ContextualConfidence {
    fits: Vec<LinearFit>,
    context: ContextModelFit,
    point: LinearContextualBandit,
}

impl ContextualConfidence {
    pub fn from_agent(agent: &ContextualAgent) -> Result<Self> {
        let fits = agent.fits()?;
        let context = fit_context_model(&agent.covariates())?;
        let (mut rss, mut df) = (0.0, 0.0);
        for f in &fits {
            let d = f.n_obs().saturating_sub(f.coefficients().len()) as f64;
            rss += f.sigma2() * d;
            df += d;
        }
        let noise_sd = if df > 0.0 { (rss / df).sqrt().max(1e-6) } else { 1e-6 };
        let point = LinearContextualBandit::new(
            fits.iter().map(|f| f.coefficients().to_vec()).collect(),
            context.mean().to_vec(),
            context.covariance_rows(),
            noise_sd,
        )?;
        Ok(ContextualConfidence {
            fits,
            context,
            point,
        })
    }

    pub fn context_model(&self) -> &ContextModelFit {
        &self.context
    }
}

impl ConfidenceModel for ContextualConfidence {
    type Model = LinearContextualBandit;

    fn sample_model(&self, rng: &mut SimRng) -> LinearContextualBandit {
        let beta = self.fits.iter().map(|f| f.sample_coefficients(rng)).collect();
        self.point.with_beta(beta).unwrap_or_else(|_| self.point.clone())
    }

    fn point_model(&self) -> LinearContextualBandit {
        self.point.clone()
    }
}

/// Expected regret of one simulated epsilon-greedy episode in `model`.
/// A fresh episode starts with `d + 1` round-robin pulls per arm.
pub fn contextual_rollout(
    model: &LinearContextualBandit,
    schedule: &Schedule,
    start: Option<(&ContextualAgent, usize)>,
    rng: &mut SimRng,
) -> Result<f64> {
    let (mut agent, t0) = match start {
        Some((a, t)) => (a.clone(), t),
        None => {
            let mut a = ContextualAgent::new(model.dim());
            for i in 0..2 * a.init_pulls() {
                let x = model.sample_context(rng);
                let r = model.draw(&x, i % 2, rng);
                a.observe(&x, i % 2, r)?;
            }
            (a, 1)
        }
    };
    let mut regret = 0.0;
    for t in t0..=schedule.horizon() {
        let x = model.sample_context(rng);
        let eps = PolicyKind::EpsilonGreedy.parameter_from_level(schedule.level(t));
        let arm = agent.select(eps, &x, rng)?;
        let r = model.draw(&x, arm, rng);
        agent.observe(&x, arm, r)?;
        regret += model.optimal_mean(&x).0 - model.expected_reward(&x, arm);
    }
    Ok(regret)
}

/// Runs one epsilon-greedy episode in the true contextual bandit.
pub fn run_contextual_episode(
    env: &LinearContextualBandit,
    spec: &PolicySpec,
    cfg: &TuningConfig,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeRecord> {
    if spec.kind != PolicyKind::EpsilonGreedy {
        return Err(Error::Config("contextual bandits support epsilon-greedy only".into()));
    }
    spec.validate(horizon)?;
    if spec.is_tuned() {
        cfg.validate()?;
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let mut context_rng = rng_for(seed, &[stream::ENVIRONMENT, 0]);
    let mut arm_rngs = [
        rng_for(seed, &[stream::ENVIRONMENT, 1]),
        rng_for(seed, &[stream::ENVIRONMENT, 2]),
    ];
    let mut policy_rng = rng_for(seed, &[stream::POLICY]);
    let mut agent = ContextualAgent::new(env.dim());
    let mut history = History::new();
    for i in 0..2 * agent.init_pulls() {
        let arm = i % 2;
        let x = env.sample_context(&mut context_rng);
        let r = env.draw(&x, arm, &mut arm_rngs[arm]);
        agent.observe(&x, arm, r)?;
        history.push_initial(Some(x), arm, r);
    }

    let mut steps = Vec::with_capacity(horizon);
    let (mut cum, mut pseudo) = (0.0, 0.0);
    let mut tuned: Option<Schedule> = None;
    for t in 1..=horizon {
        if spec.is_tuned() && (t - 1) % cfg.retune_interval == 0 {
            let conf = ContextualConfidence::from_agent(&agent)?;
            let crn = derive_seed(seed, &[stream::TUNER, t as u64]);
            let start = cfg.remaining_horizon.then_some((&agent, t));
            let res = tune_theta(&conf, cfg, horizon, crn, |m, s, rng| {
                contextual_rollout(m, s, start, rng)
            })?;
            tuned = Some(res.schedule);
        }
        let x = env.sample_context(&mut context_rng);
        let eta = spec.level(t, tuned.as_ref(), horizon);
        let eps = PolicyKind::EpsilonGreedy.parameter_from_level(eta.unwrap_or(0.0));
        let arm = agent.select(eps, &x, &mut policy_rng)?;
        let r = env.draw(&x, arm, &mut arm_rngs[arm]);
        agent.observe(&x, arm, r)?;
        let best = env.optimal_mean(&x).0;
        cum += best - r;
        pseudo += best - env.expected_reward(&x, arm);
        history.push(Record {
            step: t,
            context: Some(x),
            action: arm,
            reward: r,
        })?;
        steps.push(StepLog {
            step: t,
            action: arm,
            reward: r,
            eta,
            theta: tuned.map(|s| s.theta()),
            increment: best - r,
            cumulative: cum,
            pseudo_cumulative: Some(pseudo),
        });
    }
    Ok(EpisodeRecord {
        variant: String::new(),
        replicate: 0,
        seed,
        objective: Objective::Regret,
        history,
        steps,
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::cumulative_regret;
    use crate::tuner::Exploration;

    #[test]
    fn normal_equation_coefficients_match_qr_fit() {
        let env = LinearContextualBandit::default_model();
        let mut rng = rng_for(1, &[]);
        let mut agent = ContextualAgent::new(3);
        for i in 0..40 {
            let x = env.sample_context(&mut rng);
            let r = env.draw(&x, i % 2, &mut rng);
            agent.observe(&x, i % 2, r).unwrap();
        }
        let fits = agent.fits().unwrap();
        for a in 0..2 {
            for (u, v) in agent.coefficients()[a].iter().zip(fits[a].coefficients()) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_model_confidence_is_tight() {
        let env = LinearContextualBandit::default_model();
        let mut rng = rng_for(2, &[]);
        let mut agent = ContextualAgent::new(3);
        for i in 0..4000 {
            let x = env.sample_context(&mut rng);
            let r = env.draw(&x, i % 2, &mut rng);
            agent.observe(&x, i % 2, r).unwrap();
        }
        let conf = ContextualConfidence::from_agent(&agent).unwrap();
        let p = conf.point_model();
        assert!((p.noise_sd() - 0.5).abs() < 0.03);
        for a in 0..2 {
            for (u, v) in p.beta()[a].iter().zip(&env.beta()[a]) {
                assert!((u - v).abs() < 0.06);
            }
        }
    }

    #[test]
    fn episode_regret_matches_history() {
        let env = LinearContextualBandit::default_model();
        let spec = PolicySpec::new(PolicyKind::EpsilonGreedy, Exploration::Fixed(0.05));
        let e = run_contextual_episode(&env, &spec, &TuningConfig::default(), 20, 5).unwrap();
        assert_eq!(e.steps.len(), 20);
        assert_eq!(e.history.initial().len(), 8);
        let direct = cumulative_regret(&e.history, &env).unwrap();
        assert!((direct - e.final_value()).abs() < 1e-9);
        assert!(e.is_consistent());
    }

    #[test]
    fn only_epsilon_greedy_is_supported() {
        let env = LinearContextualBandit::default_model();
        let spec = PolicySpec::new(PolicyKind::Ucb, Exploration::Fixed(0.05));
        assert!(run_contextual_episode(&env, &spec, &TuningConfig::default(), 5, 1).is_err());
    }

    #[test]
    fn tuned_episode_runs_with_small_budget() {
        let env = LinearContextualBandit::default_model();
        let spec = PolicySpec::new(PolicyKind::EpsilonGreedy, Exploration::Tuned);
        let cfg = TuningConfig {
            n_model_draws: 3,
            n_rollouts_per_draw: 1,
            retune_interval: 4,
            optimizer: crate::bayesopt::OptimizerConfig {
                budget: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        let e = run_contextual_episode(&env, &spec, &cfg, 10, 6).unwrap();
        assert!(e.steps.iter().all(|s| s.theta.is_some()));
        assert!(e.steps.iter().all(|s| (0.0..=1.0).contains(&s.eta.unwrap())));
    }
}

//! Multi-armed bandit episodes and rollouts.

use crate::environments::{Bandit, MabModel};
use crate::error::{Error, Result};
use crate::gittins::{gittins_select, GittinsTable};
use crate::history::{EpisodeRecord, History, Objective, Record, StepLog};
use crate::models::ArmPosteriors;
use crate::policies::{epsilon_greedy_select, ts_select, ucb_select, ArmStats, PolicyKind};
use crate::rng::{derive_seed, rng_for, stream, SimRng};
use crate::schedule::Schedule;

use super::objective::{tune_theta, ConfidenceModel};
use super::{PolicySpec, TuningConfig};

/// Everything a bandit rule needs from the history.
#[derive(Debug, Clone, PartialEq)]
pub struct MabAgent {
    stats: ArmStats,
    posteriors: ArmPosteriors,
}

impl MabAgent {
    pub fn new(posteriors: ArmPosteriors) -> Self {
        MabAgent {
            stats: ArmStats::new(posteriors.n_arms()),
            posteriors,
        }
    }

    /// Fresh agent with the default prior for the model's reward family.
    pub fn for_model(model: &MabModel) -> Self {
        Self::new(ArmPosteriors::prior_for(model))
    }

    pub fn stats(&self) -> &ArmStats {
        &self.stats
    }

    pub fn posteriors(&self) -> &ArmPosteriors {
        &self.posteriors
    }

    pub fn observe(&mut self, arm: usize, reward: f64) -> Result<()> {
        self.posteriors.update(arm, reward)?;
        self.stats.update(arm, reward);
        Ok(())
    }

    /// Chooses an arm at step `t`. `param` is the rule's own parameter
    /// (epsilon, alpha or tau) and is ignored by Gittins.
    pub fn select(
        &self,
        kind: PolicyKind,
        param: f64,
        t: usize,
        horizon: usize,
        rng: &mut SimRng,
    ) -> Result<usize> {
        match (kind, &self.posteriors) {
            (PolicyKind::EpsilonGreedy, _) => epsilon_greedy_select(&self.stats, param, rng),
            (PolicyKind::Ucb, _) => ucb_select(&self.stats, param, rng),
            (PolicyKind::Thompson, ArmPosteriors::Beta(v)) => ts_select(v, param, rng),
            (PolicyKind::Thompson, ArmPosteriors::Normal(v)) => ts_select(v, param, rng),
            (PolicyKind::Gittins, ArmPosteriors::Beta(v)) => {
                gittins_select(v, t, horizon, GittinsTable::shared(), rng)
            }
            (PolicyKind::Gittins, ArmPosteriors::Normal(_)) => Err(Error::Config(
                "Gittins indices are only defined for Bernoulli arms".into(),
            )),
        }
    }
}

/// Posterior over bandits, as a confidence model.
#[derive(Debug, Clone)]
pub struct MabConfidence<'a>(pub &'a ArmPosteriors);

impl ConfidenceModel for MabConfidence<'_> {
    type Model = MabModel;

    fn sample_model(&self, rng: &mut SimRng) -> MabModel {
        self.0.sample_model(rng)
    }

    fn point_model(&self) -> MabModel {
        self.0.point_model()
    }
}

/// Expected regret of one simulated episode of `kind` under `schedule` in
/// `model`. Without `start` the episode begins with one pull per arm and
/// runs steps `1..=T`; with `(agent, t)` it continues that agent from step `t`.
/// Regret is accumulated against arm means, which has the same expectation
/// as realized regret and less variance.
pub fn mab_rollout(
    model: &MabModel,
    kind: PolicyKind,
    schedule: &Schedule,
    start: Option<(&MabAgent, usize)>,
    rng: &mut SimRng,
) -> Result<f64> {
    let horizon = schedule.horizon();
    let (mut agent, t0) = match start {
        Some((a, t)) => (a.clone(), t),
        None => {
            let mut a = MabAgent::for_model(model);
            for arm in 0..model.n_arms() {
                a.observe(arm, model.draw(arm, rng))?;
            }
            (a, 1)
        }
    };
    let best = model.optimal_mean();
    let mut regret = 0.0;
    for t in t0..=horizon {
        let param = kind.parameter_from_level(schedule.level(t));
        let arm = agent.select(kind, param, t, horizon, rng)?;
        agent.observe(arm, model.draw(arm, rng))?;
        regret += best - model.arm_mean(arm);
    }
    Ok(regret)
}

/// Runs one episode in the true bandit `env`. Arm `i`'s rewards come from
/// its own stream, so rules that pull the same arms see the same rewards.
pub fn run_mab_episode(
    env: &MabModel,
    spec: &PolicySpec,
    cfg: &TuningConfig,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeRecord> {
    spec.validate(horizon)?;
    if spec.is_tuned() {
        cfg.validate()?;
        if spec.kind == PolicyKind::Gittins {
            return Err(Error::Config("Gittins cannot be tuned".into()));
        }
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let k = env.n_arms();
    let mut arm_rngs: Vec<SimRng> = (0..k as u64)
        .map(|a| rng_for(seed, &[stream::ENVIRONMENT, a]))
        .collect();
    let mut policy_rng = rng_for(seed, &[stream::POLICY]);
    let mut agent = MabAgent::for_model(env);
    let mut history = History::new();
    for arm in 0..k {
        let r = env.draw(arm, &mut arm_rngs[arm]);
        agent.observe(arm, r)?;
        history.push_initial(None, arm, r);
    }

    let best = env.optimal_mean();
    let mut steps = Vec::with_capacity(horizon);
    let (mut cum, mut pseudo) = (0.0, 0.0);
    let mut tuned: Option<Schedule> = None;
    for t in 1..=horizon {
        if spec.is_tuned() && (t - 1) % cfg.retune_interval == 0 {
            let crn = derive_seed(seed, &[stream::TUNER, t as u64]);
            let start = cfg.remaining_horizon.then_some((&agent, t));
            let res = tune_theta(&MabConfidence(agent.posteriors()), cfg, horizon, crn, |m, s, rng| {
                mab_rollout(m, spec.kind, s, start, rng)
            })?;
            tuned = Some(res.schedule);
        }
        let eta = spec.level(t, tuned.as_ref(), horizon);
        let param = spec.kind.parameter_from_level(eta.unwrap_or(0.0));
        let arm = agent.select(spec.kind, param, t, horizon, &mut policy_rng)?;
        let r = env.draw(arm, &mut arm_rngs[arm]);
        agent.observe(arm, r)?;
        history.push(Record {
            step: t,
            context: None,
            action: arm,
            reward: r,
        })?;
        cum += best - r;
        pseudo += best - env.arm_mean(arm);
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
    use crate::environments::BernoulliMab;
    use crate::schedule::Theta;
    use crate::tuner::{estimate_objective, Exploration, TuningVariant};

    fn bern(p: &[f64]) -> MabModel {
        MabModel::Bernoulli(BernoulliMab::new(p.to_vec()).unwrap())
    }

    fn constant(level: f64, horizon: usize) -> Schedule {
        // theta2 tiny keeps the level flat at theta0 / 2
        Schedule::new(Theta::new((2.0 * level).min(1.0), 0.0, 1e-6), horizon).unwrap()
    }

    #[test]
    fn perfect_arm_and_no_exploration_gives_zero_regret() {
        let m = bern(&[1.0, 0.0]);
        let s = Schedule::new(Theta::new(0.0, 5.0, 1.0), 10).unwrap();
        let mut rng = rng_for(0, &[]);
        for _ in 0..100 {
            assert_eq!(mab_rollout(&m, PolicyKind::EpsilonGreedy, &s, None, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn uniform_play_regret_is_half_per_step() {
        let m = bern(&[1.0, 0.0]);
        let mut rng = rng_for(1, &[]);
        let n = 10_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let mut a = MabAgent::for_model(&m);
                a.observe(0, 1.0).unwrap();
                a.observe(1, 0.0).unwrap();
                let mut reg = 0.0;
                for t in 1..=10 {
                    let arm = a.select(PolicyKind::EpsilonGreedy, 1.0, t, 10, &mut rng).unwrap();
                    a.observe(arm, m.draw(arm, &mut rng)).unwrap();
                    reg += 1.0 - m.arm_mean(arm);
                }
                reg
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 5.0).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn single_draw_single_rollout_is_one_rollout() {
        let post = ArmPosteriors::beta_prior(2);
        let cfg = TuningConfig {
            n_model_draws: 1,
            n_rollouts_per_draw: 1,
            ..Default::default()
        };
        let s = constant(0.1, 8);
        let rollout = |m: &MabModel, s: &Schedule, rng: &mut SimRng| {
            mab_rollout(m, PolicyKind::EpsilonGreedy, s, None, rng)
        };
        let est = estimate_objective(&s, &MabConfidence(&post), &cfg, 9, rollout);
        let model = post.sample_model(&mut rng_for(9, &[stream::MODEL_DRAW, 0]));
        let direct = rollout(&model, &s, &mut rng_for(9, &[stream::ROLLOUT, 0, 0])).unwrap();
        assert_eq!(est, direct);
    }

    #[test]
    fn point_mass_confidence_makes_variants_agree() {
        let post = ArmPosteriors::Beta(vec![
            crate::models::BetaArm::new(1e12, 1.0).unwrap(),
            crate::models::BetaArm::new(1.0, 1e12).unwrap(),
        ]);
        let s = constant(0.2, 10);
        let rollout = |m: &MabModel, s: &Schedule, rng: &mut SimRng| {
            mab_rollout(m, PolicyKind::EpsilonGreedy, s, None, rng)
        };
        let a = TuningConfig::default();
        let b = TuningConfig {
            variant: TuningVariant::PointEstimate,
            ..Default::default()
        };
        let ea = estimate_objective(&s, &MabConfidence(&post), &a, 3, rollout);
        let eb = estimate_objective(&s, &MabConfidence(&post), &b, 3, rollout);
        assert!((ea - eb).abs() < 1e-9, "{ea} vs {eb}");
    }

    #[test]
    fn collapsed_box_matches_greedy() {
        let env = bern(&[0.3, 0.7]);
        let cfg = TuningConfig {
            n_model_draws: 2,
            n_rollouts_per_draw: 1,
            bounds: crate::schedule::ThetaBounds::never_explore(),
            optimizer: crate::bayesopt::OptimizerConfig {
                budget: 8,
                ..Default::default()
            },
            ..Default::default()
        };
        let tuned = PolicySpec::new(PolicyKind::EpsilonGreedy, Exploration::Tuned);
        let greedy = PolicySpec::new(PolicyKind::EpsilonGreedy, Exploration::Fixed(0.0));
        let a = run_mab_episode(&env, &tuned, &cfg, 15, 4).unwrap();
        let b = run_mab_episode(&env, &greedy, &cfg, 15, 4).unwrap();
        assert_eq!(a.history, b.history);
        assert!(a.steps.iter().all(|s| s.eta == Some(0.0)));
    }

    #[test]
    fn one_step_episode_and_determinism() {
        let env = bern(&[0.3, 0.7]);
        let spec = PolicySpec::new(PolicyKind::Thompson, Exploration::Fixed(1.0));
        let cfg = TuningConfig::default();
        let a = run_mab_episode(&env, &spec, &cfg, 1, 11).unwrap();
        assert_eq!(a.steps.len(), 1);
        assert_eq!(a.history.initial().len(), 2);
        let b = run_mab_episode(&env, &spec, &cfg, 1, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gittins_episode_and_bounds() {
        let env = bern(&[0.2, 0.5, 0.8]);
        let spec = PolicySpec::new(PolicyKind::Gittins, Exploration::None);
        let e = run_mab_episode(&env, &spec, &TuningConfig::default(), 30, 2).unwrap();
        assert!(e.is_consistent());
        let p = e.final_pseudo_regret().unwrap();
        assert!((0.0..=30.0 * 0.6 + 1e-12).contains(&p));
        assert!(e.steps.iter().all(|s| s.eta.is_none()));
    }
}

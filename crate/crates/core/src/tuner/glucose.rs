//! Glucose-control episodes: a patient cohort run in lockstep with an
//! epsilon-greedy rule over a forest estimate of the one-step reward.

use std::slice;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::environments::{GlucoseDynamics, GlucoseMdp, GlucoseState, Q_STATE_DIM};
use crate::error::{Error, Result};
use crate::history::{EpisodeRecord, History, Objective, Record, StepLog};
use crate::models::{fit_np_conditional, fit_ols, ForestConfig, LinearFit, NpConditionalFit, NpConfig, QForest};
use crate::policies::{mdp_greedy, PolicyKind};
use crate::rng::{derive_seed, rng_for, stream, SimRng};
use crate::schedule::Schedule;

use super::objective::{tune_theta, ConfidenceModel};
use super::{PolicySpec, TuningConfig};

const Q_WIDTH: usize = Q_STATE_DIM + 1;
const NP_DIM: usize = 8;

/// Transition-model estimator used for tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    Ar2Linear,
    Ar1Linear,
    Ar2Np,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ar2Linear => "ar2-linear",
            Estimator::Ar1Linear => "ar1-linear",
            Estimator::Ar2Np => "ar2-np",
        }
    }
}

/// Glucose dynamics learned from data.
#[derive(Debug, Clone)]
pub enum LearnedDynamics {
    Ar2 { beta: Vec<f64>, noise_sd: f64 },
    Ar1 { beta: Vec<f64>, noise_sd: f64 },
    Np(Arc<NpConditionalFit>),
}

/// A complete simulator: learned glucose dynamics plus covariates
/// resampled from their empirical pools.
#[derive(Debug, Clone)]
pub struct GlucoseModel {
    pub dynamics: LearnedDynamics,
    diet: Arc<Vec<f64>>,
    exercise: Arc<Vec<f64>>,
}

fn np_features(state: &GlucoseState, action: u8) -> [f64; NP_DIM] {
    let x = state.ar2_design(action);
    let mut f = [0.0; NP_DIM];
    f.copy_from_slice(&x[1..]);
    f
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GlucoseDynamics for GlucoseModel {
    fn next_glucose<R: Rng + ?Sized>(&self, state: &GlucoseState, action: u8, rng: &mut R) -> f64 {
        match &self.dynamics {
            LearnedDynamics::Ar2 { beta, noise_sd } => {
                let e: f64 = rng.sample(StandardNormal);
                dot(beta, &state.ar2_design(action)) + noise_sd * e
            }
            LearnedDynamics::Ar1 { beta, noise_sd } => {
                let e: f64 = rng.sample(StandardNormal);
                dot(beta, &state.ar1_design(action)) + noise_sd * e
            }
            LearnedDynamics::Np(fit) => fit.sample(&np_features(state, action), rng),
        }
    }

    fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let di = self.diet[rng.random_range(0..self.diet.len())];
        let ex = self.exercise[rng.random_range(0..self.exercise.len())];
        (di, ex)
    }
}

/// Both glucose lags at 100, covariates from the model, no prior treatment.
pub fn initial_state<D: GlucoseDynamics, R: Rng + ?Sized>(d: &D, rng: &mut R) -> GlucoseState {
    let (d0, e0) = d.draw_covariates(rng);
    let (d1, e1) = d.draw_covariates(rng);
    GlucoseState {
        glucose: [100.0, 100.0],
        diet: [d0, d1],
        exercise: [e0, e1],
        prev_action: 0,
    }
}

/// Current patient states and the pooled data observed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    states: Vec<GlucoseState>,
    q_rows: Vec<f64>,
    q_rewards: Vec<f64>,
    action_counts: [usize; 2],
    transitions: Vec<(GlucoseState, u8, f64)>,
    diet: Vec<f64>,
    exercise: Vec<f64>,
}

impl Cohort {
    /// Draws `n` initial states and observes one transition per patient
    /// under action 0. Patient `i` uses `rngs[i % rngs.len()]`.
    pub fn start<D: GlucoseDynamics>(d: &D, n: usize, rngs: &mut [SimRng]) -> Result<Self> {
        if n == 0 || rngs.is_empty() {
            return Err(Error::Precondition("a cohort needs patients and streams".into()));
        }
        let mut c = Cohort {
            states: Vec::with_capacity(n),
            q_rows: Vec::new(),
            q_rewards: Vec::new(),
            action_counts: [0; 2],
            transitions: Vec::new(),
            diet: Vec::new(),
            exercise: Vec::new(),
        };
        let k = rngs.len();
        for i in 0..n {
            let s = initial_state(d, &mut rngs[i % k]);
            c.diet.extend_from_slice(&s.diet);
            c.exercise.extend_from_slice(&s.exercise);
            c.states.push(s);
        }
        c.step_all(d, &vec![0; n], rngs)?;
        Ok(c)
    }

    pub fn n_patients(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[GlucoseState] {
        &self.states
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn action_counts(&self) -> [usize; 2] {
        self.action_counts
    }

    /// Advances every patient; returns the cohort-mean reward.
    pub fn step_all<D: GlucoseDynamics>(&mut self, d: &D, actions: &[u8], rngs: &mut [SimRng]) -> Result<f64> {
        if actions.len() != self.states.len() || actions.iter().any(|a| *a > 1) {
            return Err(Error::InvalidInput("one binary action per patient".into()));
        }
        let k = rngs.len();
        let mut total = 0.0;
        for (i, &a) in actions.iter().enumerate() {
            let s = self.states[i];
            let (next, r) = d.step(&s, a, &mut rngs[i % k]);
            self.q_rows.extend_from_slice(&s.q_state());
            self.q_rows.push(f64::from(a));
            self.q_rewards.push(r);
            self.action_counts[usize::from(a)] += 1;
            self.transitions.push((s, a, next.glucose[0]));
            self.diet.push(next.diet[0]);
            self.exercise.push(next.exercise[0]);
            self.states[i] = next;
            total += r;
        }
        Ok(total / actions.len() as f64)
    }

    /// Reward forest on the pooled data, once both actions have been seen.
    pub fn fit_q(&self, cfg: &ForestConfig, rng: &mut SimRng) -> Result<Option<QForest>> {
        if self.action_counts.contains(&0) {
            return Ok(None);
        }
        QForest::fit_rows(&self.q_rows, Q_WIDTH, &self.q_rewards, cfg, rng).map(Some)
    }

    /// Epsilon-greedy actions for every patient. Until both actions have
    /// been observed the greedy choice is the untried action.
    pub fn choose(&self, q: Option<&QForest>, epsilon: f64, rng: &mut SimRng) -> Result<Vec<u8>> {
        self.states
            .iter()
            .map(|s| {
                if rng.random::<f64>() < epsilon {
                    return Ok(rng.random_range(0..2u8));
                }
                match (q, self.action_counts) {
                    (_, [0, _]) => Ok(0),
                    (_, [_, 0]) => Ok(1),
                    (Some(q), _) => mdp_greedy(q, &s.q_state()),
                    (None, _) => Err(Error::Precondition("reward model missing".into())),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
enum ConfKind {
    Linear { ar2: bool, fit: LinearFit },
    Np(Arc<NpConditionalFit>),
}

/// Confidence distribution over glucose simulators.
#[derive(Debug, Clone)]
pub struct GlucoseConfidence {
    kind: ConfKind,
    diet: Arc<Vec<f64>>,
    exercise: Arc<Vec<f64>>,
    substituted: bool,
}

impl GlucoseConfidence {
    /// Fits `estimator` to the cohort's pooled transitions. The
    /// nonparametric estimator falls back to the AR(2) linear fit below
    /// `np.min_transitions` transitions.
    pub fn fit(cohort: &Cohort, estimator: Estimator, np: &NpConfig, rng: &mut SimRng) -> Result<Self> {
        let y: Vec<f64> = cohort.transitions.iter().map(|t| t.2).collect();
        let substituted = estimator == Estimator::Ar2Np && y.len() < np.min_transitions;
        let kind = match estimator {
            Estimator::Ar2Np if !substituted => {
                let x: Vec<f64> = cohort
                    .transitions
                    .iter()
                    .flat_map(|(s, a, _)| np_features(s, *a))
                    .collect();
                ConfKind::Np(Arc::new(fit_np_conditional(&x, NP_DIM, &y, np, rng)?))
            }
            Estimator::Ar1Linear => {
                let rows: Vec<_> = cohort.transitions.iter().map(|(s, a, _)| s.ar1_design(*a)).collect();
                ConfKind::Linear {
                    ar2: false,
                    fit: fit_ols(&rows, &y)?,
                }
            }
            _ => {
                let rows: Vec<_> = cohort.transitions.iter().map(|(s, a, _)| s.ar2_design(*a)).collect();
                ConfKind::Linear {
                    ar2: true,
                    fit: fit_ols(&rows, &y)?,
                }
            }
        };
        Ok(GlucoseConfidence {
            kind,
            diet: Arc::new(cohort.diet.clone()),
            exercise: Arc::new(cohort.exercise.clone()),
            substituted,
        })
    }

    /// Whether the linear fit stood in for the nonparametric estimator.
    pub fn substituted(&self) -> bool {
        self.substituted
    }

    fn model(&self, dynamics: LearnedDynamics) -> GlucoseModel {
        GlucoseModel {
            dynamics,
            diet: Arc::clone(&self.diet),
            exercise: Arc::clone(&self.exercise),
        }
    }

    fn linear(ar2: bool, beta: Vec<f64>, fit: &LinearFit) -> LearnedDynamics {
        let noise_sd = fit.sigma2().sqrt().max(1e-6);
        if ar2 {
            LearnedDynamics::Ar2 { beta, noise_sd }
        } else {
            LearnedDynamics::Ar1 { beta, noise_sd }
        }
    }
}

impl ConfidenceModel for GlucoseConfidence {
    type Model = GlucoseModel;

    fn sample_model(&self, rng: &mut SimRng) -> GlucoseModel {
        match &self.kind {
            ConfKind::Linear { ar2, fit } => {
                self.model(Self::linear(*ar2, fit.sample_coefficients(rng), fit))
            }
            ConfKind::Np(_) => self.point_model(),
        }
    }

    fn point_model(&self) -> GlucoseModel {
        match &self.kind {
            ConfKind::Linear { ar2, fit } => {
                self.model(Self::linear(*ar2, fit.coefficients().to_vec(), fit))
            }
            ConfKind::Np(f) => self.model(LearnedDynamics::Np(Arc::clone(f))),
        }
    }
}

/// Negative mean per-patient cumulative reward of one simulated cohort
/// episode in `model`, refitting the reward forest every step.
pub fn glucose_rollout(
    model: &GlucoseModel,
    schedule: &Schedule,
    n_patients: usize,
    forest: &ForestConfig,
    start: Option<(&Cohort, usize)>,
    rng: &mut SimRng,
) -> Result<f64> {
    let (mut cohort, t0) = match start {
        Some((c, t)) => (c.clone(), t),
        None => (Cohort::start(model, n_patients, slice::from_mut(rng))?, 1),
    };
    let mut total = 0.0;
    for t in t0..=schedule.horizon() {
        let q = cohort.fit_q(forest, rng)?;
        let eps = PolicyKind::EpsilonGreedy.parameter_from_level(schedule.level(t));
        let actions = cohort.choose(q.as_ref(), eps, rng)?;
        total += cohort.step_all(model, &actions, slice::from_mut(rng))?;
    }
    Ok(-total)
}

/// Settings specific to the glucose domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlucoseOptions {
    pub estimator: Estimator,
    /// Reward forest of the outer loop.
    pub q_forest: ForestConfig,
    pub np: NpConfig,
}

impl Default for GlucoseOptions {
    fn default() -> Self {
        GlucoseOptions {
            estimator: Estimator::Ar2Linear,
            q_forest: ForestConfig::default(),
            np: NpConfig::default(),
        }
    }
}

/// Runs one cohort episode in the true glucose model. Patient `i` draws
/// from its own stream so variants share noise.
pub fn run_glucose_episode(
    env: &GlucoseMdp,
    spec: &PolicySpec,
    opts: &GlucoseOptions,
    cfg: &TuningConfig,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeRecord> {
    if spec.kind != PolicyKind::EpsilonGreedy {
        return Err(Error::Config("the glucose MDP supports epsilon-greedy only".into()));
    }
    env.validate()?;
    spec.validate(horizon)?;
    if spec.is_tuned() {
        cfg.validate()?;
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let n = env.n_patients;
    let mut patient_rngs: Vec<SimRng> = (0..n as u64)
        .map(|i| rng_for(seed, &[stream::ENVIRONMENT, i]))
        .collect();
    let mut policy_rng = rng_for(seed, &[stream::POLICY]);
    let mut cohort = Cohort::start(env, n, &mut patient_rngs)?;
    let mut history = History::new();
    history.push_initial(None, 0, cohort.q_rewards.iter().sum::<f64>() / n as f64);

    let mut steps = Vec::with_capacity(horizon);
    let mut cum = 0.0;
    let mut tuned: Option<Schedule> = None;
    let mut substitutions = 0usize;
    for t in 1..=horizon {
        if spec.is_tuned() && (t - 1) % cfg.retune_interval == 0 {
            let mut fit_rng = rng_for(seed, &[stream::FIT, t as u64, 1]);
            let conf = GlucoseConfidence::fit(&cohort, opts.estimator, &opts.np, &mut fit_rng)?;
            substitutions += usize::from(conf.substituted());
            let crn = derive_seed(seed, &[stream::TUNER, t as u64]);
            let start = cfg.remaining_horizon.then_some((&cohort, t));
            let res = tune_theta(&conf, cfg, horizon, crn, |m, s, rng| {
                glucose_rollout(m, s, n, &cfg.rollout_forest, start, rng)
            })?;
            tuned = Some(res.schedule);
        }
        let q = cohort.fit_q(&opts.q_forest, &mut rng_for(seed, &[stream::FIT, t as u64]))?;
        let eta = spec.level(t, tuned.as_ref(), horizon);
        let eps = PolicyKind::EpsilonGreedy.parameter_from_level(eta.unwrap_or(0.0));
        let actions = cohort.choose(q.as_ref(), eps, &mut policy_rng)?;
        let reward = cohort.step_all(env, &actions, &mut patient_rngs)?;
        let treated = actions.iter().filter(|a| **a == 1).count();
        cum += reward;
        history.push(Record {
            step: t,
            context: None,
            action: treated,
            reward,
        })?;
        steps.push(StepLog {
            step: t,
            action: treated,
            reward,
            eta,
            theta: tuned.map(|s| s.theta()),
            increment: reward,
            cumulative: cum,
            pseudo_cumulative: None,
        });
    }
    let mut notes = Vec::new();
    if substitutions > 0 {
        notes.push(format!(
            "ar2-np replaced by ar2-linear at {substitutions} tuning step(s) with fewer than {} transitions",
            opts.np.min_transitions
        ));
    }
    Ok(EpisodeRecord {
        variant: String::new(),
        replicate: 0,
        seed,
        objective: Objective::Reward,
        history,
        steps,
        notes,
    })
}

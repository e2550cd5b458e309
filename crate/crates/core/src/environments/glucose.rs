//! Glucose-control MDP with AR(2) glucose dynamics.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Coefficients on `(1, Gl1, Di1, Ex1, Gl2, Di2, Ex2, A1, A2)`.
pub const TRUE_BETA: [f64; 9] = [10.0, 0.9, 0.1, -0.01, 0.0, 0.1, -0.01, -10.0, -4.0];

pub const AR2_DIM: usize = 9;
pub const AR1_DIM: usize = 5;
/// Width of the state vector seen by reward models (action excluded).
pub const Q_STATE_DIM: usize = 7;

/// Two lags of (glucose, diet, exercise) plus the action taken two steps back.
/// Index 0 holds the most recent lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlucoseState {
    pub glucose: [f64; 2],
    pub diet: [f64; 2],
    pub exercise: [f64; 2],
    pub prev_action: u8,
}

impl GlucoseState {
    /// AR(2) design row for taking `action` now.
    pub fn ar2_design(&self, action: u8) -> [f64; AR2_DIM] {
        [
            1.0,
            self.glucose[0],
            self.diet[0],
            self.exercise[0],
            self.glucose[1],
            self.diet[1],
            self.exercise[1],
            f64::from(action),
            f64::from(self.prev_action),
        ]
    }

    /// AR(1) design row: intercept plus one lag of glucose, diet, exercise and action.
    pub fn ar1_design(&self, action: u8) -> [f64; AR1_DIM] {
        [
            1.0,
            self.glucose[0],
            self.diet[0],
            self.exercise[0],
            f64::from(action),
        ]
    }

    /// State vector `(Gl, Di, Ex, Gl', Di', Ex', A')` used by reward models.
    pub fn q_state(&self) -> [f64; Q_STATE_DIM] {
        [
            self.glucose[0],
            self.diet[0],
            self.exercise[0],
            self.glucose[1],
            self.diet[1],
            self.exercise[1],
            f64::from(self.prev_action),
        ]
    }

    /// Shifts the lags after `action` produced the new observation.
    pub fn advance(&self, glucose: f64, diet: f64, exercise: f64, action: u8) -> GlucoseState {
        GlucoseState {
            glucose: [glucose, self.glucose[0]],
            diet: [diet, self.diet[0]],
            exercise: [exercise, self.exercise[0]],
            prev_action: action,
        }
    }
}

/// Piecewise-quadratic reward; 70 mg/dL belongs to the upper branch.
pub fn glucose_reward(gl: f64) -> Result<f64> {
    if !gl.is_finite() {
        return Err(Error::InvalidInput(format!("glucose level {gl} is not finite")));
    }
    Ok(reward_unchecked(gl))
}

#[inline]
pub fn reward_unchecked(gl: f64) -> f64 {
    if gl < 70.0 {
        -0.005 * gl * gl + 0.95 * gl - 45.0
    } else {
        -0.0002 * gl * gl + 0.022 * gl - 0.5
    }
}

/// Anything that can advance a patient one step.
pub trait GlucoseDynamics {
    fn next_glucose<R: Rng + ?Sized>(&self, state: &GlucoseState, action: u8, rng: &mut R) -> f64;

    fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64);

    /// Next state and the reward of the realized glucose level.
    fn step<R: Rng + ?Sized>(
        &self,
        state: &GlucoseState,
        action: u8,
        rng: &mut R,
    ) -> (GlucoseState, f64) {
        let gl = self.next_glucose(state, action, rng);
        let (di, ex) = self.draw_covariates(rng);
        (state.advance(gl, di, ex, action), reward_unchecked(gl))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlucoseMdp {
    pub beta: [f64; AR2_DIM],
    pub glucose_noise_sd: f64,
    pub covariate_sd: f64,
    pub covariate_prob: f64,
    pub n_patients: usize,
}

impl Default for GlucoseMdp {
    fn default() -> Self {
        GlucoseMdp {
            beta: TRUE_BETA,
            glucose_noise_sd: 5.0,
            covariate_sd: 10.0,
            covariate_prob: 0.6,
            n_patients: 15,
        }
    }
}

impl GlucoseMdp {
    pub fn validate(&self) -> Result<()> {
        if !(self.glucose_noise_sd.is_finite() && self.glucose_noise_sd > 0.0) {
            return Err(Error::InvalidInput("glucose_noise_sd must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.covariate_prob) {
            return Err(Error::InvalidInput("covariate_prob must lie in [0, 1]".into()));
        }
        if !(self.covariate_sd.is_finite() && self.covariate_sd >= 0.0) {
            return Err(Error::InvalidInput("covariate_sd must be nonnegative".into()));
        }
        if self.n_patients == 0 {
            return Err(Error::InvalidInput("n_patients must be positive".into()));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("beta must be finite".into()));
        }
        Ok(())
    }

    /// Noise-free next glucose.
    pub fn glucose_mean(&self, state: &GlucoseState, action: u8) -> f64 {
        let x = state.ar2_design(action);
        self.beta.iter().zip(&x).map(|(b, v)| b * v).sum()
    }

    /// One mixture draw: `N(0, sd^2)` with probability `covariate_prob`, else 0.
    pub fn draw_covariate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.covariate_prob {
            let z: f64 = rng.sample(StandardNormal);
            self.covariate_sd * z
        } else {
            0.0
        }
    }

    /// Both glucose lags at 100, covariates from their marginals, no prior treatment.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> GlucoseState {
        let d0 = self.draw_covariate(rng);
        let e0 = self.draw_covariate(rng);
        let d1 = self.draw_covariate(rng);
        let e1 = self.draw_covariate(rng);
        GlucoseState {
            glucose: [100.0, 100.0],
            diet: [d0, d1],
            exercise: [e0, e1],
            prev_action: 0,
        }
    }

    pub fn glucose_step<R: Rng + ?Sized>(
        &self,
        state: &GlucoseState,
        action: u8,
        rng: &mut R,
    ) -> Result<(GlucoseState, f64)> {
        if action > 1 {
            return Err(Error::ArmOutOfRange {
                arm: usize::from(action),
                n_arms: 2,
            });
        }
        Ok(self.step(state, action, rng))
    }
}

impl GlucoseDynamics for GlucoseMdp {
    fn next_glucose<R: Rng + ?Sized>(&self, state: &GlucoseState, action: u8, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.glucose_mean(state, action) + self.glucose_noise_sd * e
    }

    fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let di = self.draw_covariate(rng);
        let ex = self.draw_covariate(rng);
        (di, ex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn lag_state(gl: f64) -> GlucoseState {
        GlucoseState {
            glucose: [gl, gl],
            diet: [0.0; 2],
            exercise: [0.0; 2],
            prev_action: 0,
        }
    }

    #[test]
    fn reward_examples() {
        assert!((glucose_reward(70.0).unwrap() - 0.06).abs() < 1e-12);
        assert!((glucose_reward(50.0).unwrap() + 10.0).abs() < 1e-12);
        assert!((glucose_reward(100.0).unwrap() + 0.3).abs() < 1e-12);
        assert!(glucose_reward(f64::NAN).is_err());
        assert!(glucose_reward(f64::INFINITY).is_err());
        // the reward is discontinuous at the branch boundary
        assert!(reward_unchecked(70.0 - 1e-9) < -2.9);
    }

    #[test]
    fn noiseless_means() {
        let env = GlucoseMdp::default();
        assert!((env.glucose_mean(&lag_state(100.0), 0) - 100.0).abs() < 1e-12);
        assert!((env.glucose_mean(&lag_state(100.0), 1) - 90.0).abs() < 1e-12);
        let mut s = lag_state(100.0);
        s.prev_action = 1;
        assert!((env.glucose_mean(&s, 1) - 86.0).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_covariates_are_zero() {
        let env = GlucoseMdp {
            covariate_prob: 0.0,
            ..Default::default()
        };
        let mut rng = rng_for(3, &[]);
        for _ in 0..1000 {
            assert_eq!(env.draw_covariates(&mut rng), (0.0, 0.0));
        }
    }

    #[test]
    fn step_shifts_lags() {
        let env = GlucoseMdp::default();
        let mut rng = rng_for(4, &[]);
        let s0 = env.initial_state(&mut rng);
        let (s1, r) = env.glucose_step(&s0, 1, &mut rng).unwrap();
        assert_eq!(s1.glucose[1], s0.glucose[0]);
        assert_eq!(s1.diet[1], s0.diet[0]);
        assert_eq!(s1.prev_action, 1);
        assert_eq!(r, reward_unchecked(s1.glucose[0]));
        assert!(env.glucose_step(&s0, 2, &mut rng).is_err());
    }

    #[test]
    fn covariate_mixture_moments() {
        let env = GlucoseMdp::default();
        let mut rng = rng_for(8, &[]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| env.draw_covariate(&mut rng)).collect();
        let nonzero: Vec<f64> = draws.iter().copied().filter(|v| *v != 0.0).collect();
        let frac = nonzero.len() as f64 / n as f64;
        let se = (0.6f64 * 0.4 / n as f64).sqrt();
        assert!((frac - 0.6).abs() < 4.0 * se);
        let m = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
        let sd = (nonzero.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            / (nonzero.len() - 1) as f64)
            .sqrt();
        assert!((sd - 10.0).abs() < 0.2);
    }
}

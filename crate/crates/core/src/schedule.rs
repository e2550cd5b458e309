//! Sigmoid exploration schedules.
//!
//! A schedule maps a decision step `t` of a horizon-`T` problem to an
//! exploration level `theta0 / (1 + exp(-theta2 * (T - t - theta1)))`.
//! Within the feasible box the level never increases with `t`.

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};

/// Lower bound on the decay rate; the box is closed at this value.
pub const THETA2_MIN: f64 = 1e-6;
/// Default upper bound on the decay rate.
pub const THETA2_MAX: f64 = 2.0;

/// The three schedule coordinates, without a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub theta0: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl Theta {
    pub fn new(theta0: f64, theta1: f64, theta2: f64) -> Self {
        Theta {
            theta0,
            theta1,
            theta2,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta0, self.theta1, self.theta2]
    }
}

/// Box bounds of the feasible set. `theta1` is always bounded by `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaBounds {
    pub theta0_max: f64,
    pub theta2_min: f64,
    pub theta2_max: f64,
}

impl Default for ThetaBounds {
    fn default() -> Self {
        ThetaBounds {
            theta0_max: 1.0,
            theta2_min: THETA2_MIN,
            theta2_max: THETA2_MAX,
        }
    }
}

impl ThetaBounds {
    /// Collapse the box to the single value `theta0 = 0` (never explore).
    pub fn never_explore() -> Self {
        ThetaBounds {
            theta0_max: 0.0,
            ..Default::default()
        }
    }

    /// `(lower, upper)` for each coordinate at horizon `horizon`.
    pub fn box_for(&self, horizon: usize) -> [(f64, f64); 3] {
        [
            (0.0, self.theta0_max),
            (0.0, horizon as f64),
            (self.theta2_min, self.theta2_max),
        ]
    }
}

/// A feasible schedule: `theta` together with its horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    theta: Theta,
    horizon: usize,
}

impl Schedule {
    /// Builds a schedule, rejecting points outside the default box.
    pub fn new(theta: Theta, horizon: usize) -> Result<Self> {
        Self::with_bounds(theta, horizon, &ThetaBounds::default())
    }

    pub fn with_bounds(theta: Theta, horizon: usize, bounds: &ThetaBounds) -> Result<Self> {
        if horizon == 0 {
            return Err(precondition("horizon must be positive"));
        }
        let [b0, b1, b2] = bounds.box_for(horizon);
        let ok = |v: f64, (lo, hi): (f64, f64)| v.is_finite() && v >= lo && v <= hi;
        if !(ok(theta.theta0, b0) && ok(theta.theta1, b1) && ok(theta.theta2, b2))
            || theta.theta2 <= 0.0
        {
            return Err(precondition(format!(
                "theta ({}, {}, {}) outside feasible box for T={horizon}",
                theta.theta0, theta.theta1, theta.theta2
            )));
        }
        Ok(Schedule { theta, horizon })
    }

    pub fn theta(&self) -> Theta {
        self.theta
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Exploration level at step `t`. Step 0 is the pre-loop index used
    /// during initialization; steps run `1..=T`.
    pub fn evaluate(&self, t: usize) -> Result<f64> {
        if t > self.horizon {
            return Err(precondition(format!(
                "step {t} beyond horizon {}",
                self.horizon
            )));
        }
        Ok(self.level(t))
    }

    /// Unchecked evaluation for hot loops; `t` must be within `0..=T`.
    #[inline]
    pub fn level(&self, t: usize) -> f64 {
        let Theta {
            theta0,
            theta1,
            theta2,
        } = self.theta;
        let arg = (self.horizon as f64 - t as f64) - theta1;
        theta0 / (1.0 + (-theta2 * arg).exp())
    }
}

/// Free-function form of [`Schedule::evaluate`].
pub fn evaluate_schedule(s: &Schedule, t: usize) -> Result<f64> {
    s.evaluate(t)
}

/// Projects an arbitrary triple onto the default feasible box. Never fails;
/// NaN coordinates land on the lower bound.
pub fn clamp_to_feasible(raw: [f64; 3], horizon: usize) -> Schedule {
    clamp_with_bounds(raw, horizon, &ThetaBounds::default())
}

pub fn clamp_with_bounds(raw: [f64; 3], horizon: usize, bounds: &ThetaBounds) -> Schedule {
    let horizon = horizon.max(1);
    let b = bounds.box_for(horizon);
    let clip = |v: f64, (lo, hi): (f64, f64)| {
        if v.is_nan() {
            lo
        } else {
            v.clamp(lo, hi)
        }
    };
    Schedule {
        theta: Theta {
            theta0: clip(raw[0], b[0]),
            theta1: clip(raw[1], b[1]),
            theta2: clip(raw[2], b[2]),
        },
        horizon,
    }
}

/// Maps a point of the unit cube affinely onto the feasible box.
pub fn from_unit_cube(u: [f64; 3], horizon: usize, bounds: &ThetaBounds) -> Schedule {
    let b = bounds.box_for(horizon.max(1));
    let mut raw = [0.0; 3];
    for i in 0..3 {
        raw[i] = b[i].0 + u[i] * (b[i].1 - b[i].0);
    }
    clamp_with_bounds(raw, horizon, bounds)
}

/// Inverse of [`from_unit_cube`]; degenerate coordinates map to 0.
pub fn to_unit_cube(s: &Schedule, bounds: &ThetaBounds) -> [f64; 3] {
    let b = bounds.box_for(s.horizon);
    let v = s.theta.to_array();
    let mut u = [0.0; 3];
    for i in 0..3 {
        let w = b[i].1 - b[i].0;
        u[i] = if w > 0.0 { (v[i] - b[i].0) / w } else { 0.0 };
    }
    u
}

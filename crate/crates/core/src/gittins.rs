//! Finite-horizon Gittins indices for Bernoulli arms with Beta posteriors.
//!
//! The index of a `Beta(a, b)` arm with `r` plays left is the smallest
//! retirement reward `lambda` such that collecting `lambda` on each of the
//! `r` remaining steps is at least as good as playing the arm optimally
//! with the option to retire later. It is found by bisection around a
//! dynamic program over the posterior tree of depth `r`.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use rand::Rng;

use crate::error::{precondition, Result};
use crate::models::BetaArm;
use crate::policies::argmax_uniform_ties;

/// Largest remaining horizon the table will compute.
pub const MAX_HORIZON: usize = 64;
const BISECTION_TOL: f64 = 1e-7;

fn check_args(a: u32, b: u32, remaining: usize) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(precondition(format!("pseudo-counts ({a}, {b}) must be >= 1")));
    }
    if remaining == 0 || remaining > MAX_HORIZON {
        return Err(precondition(format!(
            "remaining steps {remaining} outside 1..={MAX_HORIZON}"
        )));
    }
    Ok(())
}

/// Value of continuing with the arm at the root, given retirement reward `lambda`.
fn continuation_value(a: u32, b: u32, remaining: usize, lambda: f64, buf: &mut Vec<f64>) -> f64 {
    // buf[i] holds V at (a + i, b + depth - i) for the current depth's remaining steps.
    let (a, b) = (f64::from(a), f64::from(b));
    let r = remaining;
    buf.clear();
    buf.resize(r + 1, 0.0);
    // depth r: no steps left, value 0
    for depth in (1..r).rev() {
        let left = (r - depth) as f64;
        for i in 0..=depth {
            let aa = a + i as f64;
            let bb = b + (depth - i) as f64;
            let p = aa / (aa + bb);
            let cont = p * (1.0 + buf[i + 1]) + (1.0 - p) * buf[i];
            buf[i] = cont.max(lambda * left);
        }
    }
    let p = a / (a + b);
    if r == 1 {
        p
    } else {
        p * (1.0 + buf[1]) + (1.0 - p) * buf[0]
    }
}

/// Uncached index computation.
pub fn gittins_index(a: u32, b: u32, remaining: usize) -> Result<f64> {
    check_args(a, b, remaining)?;
    let p = f64::from(a) / f64::from(a + b);
    if remaining == 1 {
        return Ok(p);
    }
    let mut buf = Vec::with_capacity(remaining + 1);
    let (mut lo, mut hi) = (p, 1.0f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid * remaining as f64 >= continuation_value(a, b, remaining, mid, &mut buf) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Lazily filled, shareable memo of indices keyed by `(a, b, remaining)`.
#[derive(Debug, Default)]
pub struct GittinsTable {
    memo: RwLock<HashMap<(u32, u32, u32), f64>>,
}

impl GittinsTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide table.
    pub fn shared() -> &'static GittinsTable {
        static TABLE: OnceLock<GittinsTable> = OnceLock::new();
        TABLE.get_or_init(GittinsTable::new)
    }

    pub fn index(&self, a: u32, b: u32, remaining: usize) -> Result<f64> {
        check_args(a, b, remaining)?;
        let key = (a, b, remaining as u32);
        if let Some(v) = self.memo.read().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(v);
        }
        let v = gittins_index(a, b, remaining)?;
        if let Ok(mut m) = self.memo.write() {
            m.insert(key, v);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.memo.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn integer_count(v: f64) -> Result<u32> {
    if v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
        Ok(v as u32)
    } else {
        Err(precondition(format!(
            "Gittins indices need integer pseudo-counts >= 1, got {v}"
        )))
    }
}

/// Arm with the largest index at step `t` of `horizon` (remaining
/// `horizon - t + 1`), ties broken uniformly.
pub fn gittins_select<R: Rng + ?Sized>(
    posteriors: &[BetaArm],
    t: usize,
    horizon: usize,
    table: &GittinsTable,
    rng: &mut R,
) -> Result<usize> {
    if t == 0 || t > horizon {
        return Err(precondition(format!("step {t} outside 1..={horizon}")));
    }
    let remaining = horizon - t + 1;
    let indices = posteriors
        .iter()
        .map(|p| table.index(integer_count(p.a)?, integer_count(p.b)?, remaining))
        .collect::<Result<Vec<f64>>>()?;
    Ok(argmax_uniform_ties(&indices, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn one_step_index_is_posterior_mean() {
        assert_eq!(gittins_index(2, 3, 1).unwrap(), 0.4);
        assert_eq!(gittins_index(1, 1, 1).unwrap(), 0.5);
    }

    #[test]
    fn two_step_uniform_prior_closed_form() {
        // 2 lambda = 1/2 + (1/2) max(lambda, 2/3) + (1/2) max(lambda, 1/3)
        // has its root at lambda = 5/9.
        assert!((gittins_index(1, 1, 2).unwrap() - 5.0 / 9.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_arguments() {
        assert!(gittins_index(0, 1, 2).is_err());
        assert!(gittins_index(1, 1, 0).is_err());
        assert!(gittins_index(1, 1, MAX_HORIZON + 1).is_err());
    }

    #[test]
    fn dominance_and_spread() {
        let table = GittinsTable::new();
        let mut rng = rng_for(0, &[]);
        let arms = [BetaArm::new(10.0, 1.0).unwrap(), BetaArm::new(1.0, 10.0).unwrap()];
        for horizon in [1, 5, 30] {
            assert_eq!(gittins_select(&arms, 1, horizon, &table, &mut rng).unwrap(), 0);
        }
        let arms = [BetaArm::new(2.0, 4.0).unwrap(), BetaArm::new(1.0, 2.0).unwrap()];
        assert!(table.index(1, 2, 5).unwrap() > table.index(2, 4, 5).unwrap());
        assert_eq!(gittins_select(&arms, 1, 5, &table, &mut rng).unwrap(), 1);
    }

    #[test]
    fn identical_posteriors_tie_uniformly() {
        let table = GittinsTable::new();
        let mut rng = rng_for(1, &[]);
        let arms = [BetaArm::default(); 2];
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| gittins_select(&arms, 3, 10, &table, &mut rng).unwrap() == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn fractional_counts_rejected() {
        let table = GittinsTable::new();
        let mut rng = rng_for(1, &[]);
        let arms = [BetaArm::new(1.5, 1.0).unwrap(), BetaArm::default()];
        assert!(gittins_select(&arms, 1, 5, &table, &mut rng).is_err());
    }

    #[test]
    fn memoized_values_agree_with_direct_computation() {
        let table = GittinsTable::new();
        for (a, b, r) in [(1, 1, 5), (3, 2, 9), (1, 7, 20)] {
            let cached = table.index(a, b, r).unwrap();
            let again = table.index(a, b, r).unwrap();
            assert!((cached - gittins_index(a, b, r).unwrap()).abs() < 1e-9);
            assert_eq!(cached, again);
        }
        assert_eq!(table.len(), 3);
    }

    #[test]
    fn monotone_in_counts_and_horizon() {
        for a in 1..6u32 {
            for b in 1..6u32 {
                for r in 1..8usize {
                    let v = gittins_index(a, b, r).unwrap();
                    assert!(gittins_index(a, b, r + 1).unwrap() >= v);
                    assert!(gittins_index(a + 1, b, r).unwrap() > v);
                    assert!(gittins_index(a, b + 1, r).unwrap() < v);
                }
            }
        }
    }
}

//! Matérn-5/2 Gaussian-process surrogate on the unit cube.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const JITTER: f64 = 1e-8;

/// Hyperparameter grid searched by [`gp_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub length_scales: Vec<f64>,
    /// Noise variance as a multiple of the signal variance.
    pub noise_ratios: Vec<f64>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            length_scales: log_spaced(0.03, 3.0, 12),
            noise_ratios: vec![1e-6, 1e-4, 1e-2, 1e-1],
        }
    }
}

impl GpConfig {
    /// Same length-scale grid, no observation noise.
    pub fn noiseless() -> Self {
        GpConfig {
            noise_ratios: vec![0.0],
            ..Default::default()
        }
    }
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub length_scale: f64,
    /// Signal variance on the standardized scale.
    pub signal_var: f64,
    /// Noise variance on the standardized scale.
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn matern52(r: f64, ell: f64) -> f64 {
    let s = 5f64.sqrt() * r / ell;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn correlation(x: &[Vec<f64>], ell: f64, diag: f64) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + diag
        } else {
            matern52(dist(&x[i], &x[j]), ell)
        }
    })
}

fn in_unit_cube(x: &[f64]) -> bool {
    x.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v))
}

/// Fits the surrogate, choosing the length scale and noise ratio with the
/// largest profile marginal likelihood (signal variance in closed form).
pub fn gp_fit(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig) -> Result<GpSurrogate> {
    let n = x.len();
    if n != y.len() || n == 0 {
        return Err(Error::InvalidInput("inputs and values differ in length".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|p| p.len() != dim || !in_unit_cube(p)) {
        return Err(Error::InvalidInput("inputs must lie in the unit cube".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("objective values must be finite".into()));
    }
    let distinct = x.iter().any(|p| dist(p, &x[0]) > 0.0);
    if n < 2 || !distinct {
        return Err(Error::Precondition("need at least two distinct inputs".into()));
    }
    if cfg.length_scales.is_empty() || cfg.noise_ratios.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_scale));

    let mut best: Option<(f64, GpHyper, Cholesky<f64, Dyn>, DVector<f64>)> = None;
    for &ell in &cfg.length_scales {
        for &ratio in &cfg.noise_ratios {
            let Some(chol) = correlation(x, ell, ratio + JITTER).cholesky() else {
                continue;
            };
            let alpha = chol.solve(&ys);
            let s2 = (ys.dot(&alpha) / n as f64).max(1e-10);
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
            let ll = -0.5 * n as f64 * s2.ln() - log_det;
            if best.as_ref().is_none_or(|b| ll > b.0) {
                let hyper = GpHyper {
                    length_scale: ell,
                    signal_var: s2,
                    noise_var: s2 * ratio,
                };
                best = Some((ll, hyper, chol, alpha));
            }
        }
    }
    let (_, hyper, chol, alpha) =
        best.ok_or_else(|| Error::Improper("kernel matrix not positive definite".into()))?;
    Ok(GpSurrogate {
        x: x.to_vec(),
        y_mean,
        y_scale,
        hyper,
        chol,
        alpha,
    })
}

impl GpSurrogate {
    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn n_obs(&self) -> usize {
        self.x.len()
    }

    /// Prior mean and variance on the original scale.
    pub fn prior(&self) -> (f64, f64) {
        (self.y_mean, self.hyper.signal_var * self.y_scale * self.y_scale)
    }

    /// Posterior mean and variance of the latent objective at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.x[0].len() || !in_unit_cube(x) {
            return Err(Error::InvalidInput("prediction point outside the unit cube".into()));
        }
        let ell = self.hyper.length_scale;
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|p| matern52(dist(p, x), ell)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&k).unwrap_or_else(|| k.clone());
        let var = (self.hyper.signal_var * (1.0 - v.dot(&v))).max(0.0);
        Ok((
            self.y_mean + self.y_scale * mean,
            var * self.y_scale * self.y_scale,
        ))
    }
}

/// Free-function form of [`GpSurrogate::predict`].
pub fn gp_predict(g: &GpSurrogate, x: &[f64]) -> Result<(f64, f64)> {
    g.predict(x)
}

/// Expected improvement below `best` for a Gaussian with the given moments.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sd = variance.max(0.0).sqrt();
    let gain = best - mean;
    if sd == 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    let std = Normal::standard();
    (gain * std.cdf(z) + sd * std.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    #[test]
    fn noiseless_two_points_interpolate() {
        let g = gp_fit(&pts(&[0.2, 0.7]), &[1.5, -0.5], &GpConfig::noiseless()).unwrap();
        let (m, v) = g.predict(&[0.2]).unwrap();
        assert!((m - 1.5).abs() < 1e-6 && v < 1e-6);
        let (m, _) = g.predict(&[0.7]).unwrap();
        assert!((m + 0.5).abs() < 1e-6);
    }

    #[test]
    fn constant_values_give_constant_mean() {
        let g = gp_fit(&pts(&[0.0, 0.3, 0.9]), &[2.0; 3], &GpConfig::default()).unwrap();
        for x in [0.0, 0.5, 1.0] {
            assert!((g.predict(&[x]).unwrap().0 - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_is_reconstructed() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect();
        let g = gp_fit(&pts(&xs), &ys, &GpConfig::default()).unwrap();
        let worst = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|x| (g.predict(&[x]).unwrap().0 - (2.0 * std::f64::consts::PI * x).sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.05, "max error {worst}");
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        let cfg = GpConfig {
            length_scales: vec![1e-3],
            noise_ratios: vec![0.0],
        };
        let g = gp_fit(&pts(&[0.1, 0.2]), &[1.0, 3.0], &cfg).unwrap();
        let (m, v) = g.predict(&[0.9]).unwrap();
        let (pm, pv) = g.prior();
        assert!((m - pm).abs() < 1e-12 && (v - pv).abs() < 1e-12);
        assert_eq!(pm, 2.0);
    }

    #[test]
    fn symmetric_midpoint_is_zero() {
        let g = gp_fit(&pts(&[0.25, 0.75]), &[1.0, -1.0], &GpConfig::default()).unwrap();
        assert!(g.predict(&[0.5]).unwrap().0.abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(gp_fit(&pts(&[0.4, 0.4]), &[1.0, 2.0], &GpConfig::default()).is_err());
        assert!(gp_fit(&pts(&[0.4]), &[1.0], &GpConfig::default()).is_err());
        assert!(gp_fit(&pts(&[0.4, 1.4]), &[1.0, 2.0], &GpConfig::default()).is_err());
        let g = gp_fit(&pts(&[0.1, 0.4]), &[1.0, 2.0], &GpConfig::default()).unwrap();
        assert!(g.predict(&[1.1]).is_err());
    }

    #[test]
    fn expected_improvement_examples() {
        assert!((expected_improvement(0.7, 0.0, 1.0) - 0.3).abs() < 1e-15);
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(1.2, 0.0, 1.0), 0.0);
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((expected_improvement(1.0, 1.0, 1.0) - phi0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ei_nonnegative(m in -5.0..5.0f64, v in 0.0..10.0f64, b in -5.0..5.0f64) {
            prop_assert!(expected_improvement(m, v, b) >= 0.0);
        }

        #[test]
        fn ei_increases_with_sd_at_incumbent(v in 0.01..10.0f64, dv in 0.01..1.0f64) {
            prop_assert!(expected_improvement(0.0, v + dv, 0.0) > expected_improvement(0.0, v, 0.0));
        }

        #[test]
        fn variance_nonnegative(xs in proptest::collection::vec(0.0..=1.0f64, 3..8), q in 0.0..=1.0f64) {
            let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
            if let Ok(g) = gp_fit(&pts(&xs), &ys, &GpConfig::default()) {
                prop_assert!(g.predict(&[q]).unwrap().1 >= 0.0);
            }
        }
    }
}

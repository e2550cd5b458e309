//! Two-step nonparametric conditional density of the next glucose value.
//!
//! Step one fits the conditional mean with a regression forest. Step two
//! models the residual given the covariates as a ratio of kernel density
//! estimates (joint over marginal), with Gaussian product kernels whose
//! bandwidths are chosen by K-fold cross-validated log-likelihood.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::forest::{ForestConfig, RegressionForest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpConfig {
    pub forest: ForestConfig,
    pub folds: usize,
    /// Number of log-spaced multipliers tried per bandwidth.
    pub grid_points: usize,
    pub grid_low: f64,
    pub grid_high: f64,
    /// Cap on held-out points scored during cross-validation.
    pub max_cv_points: usize,
    /// Fewer transitions than this cannot be fitted.
    pub min_transitions: usize,
}

impl Default for NpConfig {
    fn default() -> Self {
        NpConfig {
            forest: ForestConfig {
                n_trees: 50,
                min_leaf: 5,
                ..ForestConfig::default()
            },
            folds: 5,
            grid_points: 8,
            grid_low: 0.25,
            grid_high: 4.0,
            max_cv_points: 300,
            min_transitions: 50,
        }
    }
}

const MIN_RESIDUAL_BANDWIDTH: f64 = 1e-300;
const MIN_COVARIATE_BANDWIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NpConditionalFit {
    forest: RegressionForest,
    /// Row-major training covariates.
    covariates: Vec<f64>,
    residuals: Vec<f64>,
    cov_bandwidth: Vec<f64>,
    resid_bandwidth: f64,
    /// Rescales jittered draws so their variance matches the stored residuals.
    shrink: f64,
}

impl NpConditionalFit {
    /// Assembles a fit from its parts. Residuals are used as given; jittered
    /// draws are shrunk toward zero so their variance equals the residual
    /// variance.
    pub fn from_parts(
        forest: RegressionForest,
        covariates: Vec<f64>,
        residuals: Vec<f64>,
        cov_bandwidth: Vec<f64>,
        resid_bandwidth: f64,
    ) -> Result<Self> {
        let d = forest.n_features();
        if cov_bandwidth.len() != d
            || residuals.is_empty()
            || covariates.len() != residuals.len() * d
        {
            return Err(Error::InvalidInput("inconsistent nonparametric fit".into()));
        }
        if cov_bandwidth.iter().any(|h| !(*h > 0.0)) || !(resid_bandwidth > 0.0) {
            return Err(Error::InvalidInput("bandwidths must be positive".into()));
        }
        let shrink = if residuals.len() > 1 {
            let (_, sd) = mean_sd(residuals.iter().copied());
            if sd > 0.0 {
                1.0 / (1.0 + (resid_bandwidth / sd).powi(2)).sqrt()
            } else {
                1.0
            }
        } else {
            1.0
        };
        Ok(NpConditionalFit {
            forest,
            covariates,
            residuals,
            cov_bandwidth,
            resid_bandwidth,
            shrink,
        })
    }

    pub fn dim(&self) -> usize {
        self.cov_bandwidth.len()
    }

    pub fn n_obs(&self) -> usize {
        self.residuals.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn covariate_bandwidths(&self) -> &[f64] {
        &self.cov_bandwidth
    }

    pub fn residual_bandwidth(&self) -> f64 {
        self.resid_bandwidth
    }

    pub fn predict_mean(&self, features: &[f64]) -> f64 {
        self.forest.predict(features)
    }

    /// Prediction plus a kernel-weighted resampled residual plus
    /// `N(0, resid_bandwidth^2)` jitter.
    pub fn sample<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> f64 {
        let d = self.dim();
        let n = self.residuals.len();
        let mut log_w = Vec::with_capacity(n);
        let mut max_lw = f64::NEG_INFINITY;
        for row in self.covariates.chunks_exact(d) {
            let mut q = 0.0;
            for k in 0..d {
                let u = (features[k] - row[k]) / self.cov_bandwidth[k];
                q += u * u;
            }
            let lw = -0.5 * q;
            max_lw = max_lw.max(lw);
            log_w.push(lw);
        }
        let pick = if max_lw.is_finite() {
            let total: f64 = log_w.iter_mut().map(|lw| {
                *lw = (*lw - max_lw).exp();
                *lw
            }).sum();
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (j, w) in log_w.iter().enumerate() {
                if u < *w {
                    chosen = j;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let z: f64 = rng.sample(StandardNormal);
        self.forest.predict(features) + self.shrink * (self.residuals[pick] + self.resid_bandwidth * z)
    }
}

/// Free-function form of [`NpConditionalFit::sample`].
pub fn np_sample_next_glucose<R: Rng + ?Sized>(
    fit: &NpConditionalFit,
    features: &[f64],
    rng: &mut R,
) -> f64 {
    fit.sample(features, rng)
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn log_grid(cfg: &NpConfig) -> Vec<f64> {
    let m = cfg.grid_points.max(1);
    if m == 1 {
        return vec![1.0];
    }
    let (a, b) = (cfg.grid_low.ln(), cfg.grid_high.ln());
    (0..m)
        .map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp())
        .collect()
}

/// Fits the two-step conditional density of `y` given the row-major
/// covariates `x` (`d` columns).
pub fn fit_np_conditional<R: Rng + ?Sized>(
    x: &[f64],
    d: usize,
    y: &[f64],
    cfg: &NpConfig,
    rng: &mut R,
) -> Result<NpConditionalFit> {
    let n = y.len();
    if n < cfg.min_transitions.max(2) {
        return Err(Error::InsufficientData {
            needed: cfg.min_transitions.max(2),
            have: n,
        });
    }
    if d == 0 || x.len() != n * d {
        return Err(Error::InvalidInput("covariate matrix shape mismatch".into()));
    }
    let forest = RegressionForest::fit(x, d, y, &cfg.forest, rng)?;
    let oob = forest.oob_predictions();
    let mut residuals: Vec<f64> = (0..n)
        .map(|i| {
            let pred = if oob[i].is_finite() {
                oob[i]
            } else {
                forest.predict(&x[i * d..(i + 1) * d])
            };
            y[i] - pred
        })
        .collect();
    let r_mean = residuals.iter().sum::<f64>() / n as f64;
    residuals.iter_mut().for_each(|r| *r -= r_mean);

    let nf = n as f64;
    let h0: Vec<f64> = (0..d)
        .map(|k| {
            let (_, sd) = mean_sd((0..n).map(|i| x[i * d + k]));
            (sd * nf.powf(-1.0 / (d as f64 + 4.0))).max(MIN_COVARIATE_BANDWIDTH)
        })
        .collect();
    let (_, r_sd) = mean_sd(residuals.iter().copied());
    let b0 = 1.06 * r_sd * nf.powf(-0.2);
    if !(b0 > MIN_RESIDUAL_BANDWIDTH) {
        return NpConditionalFit::from_parts(forest, x.to_vec(), residuals, h0, MIN_RESIDUAL_BANDWIDTH);
    }

    let grid = log_grid(cfg);
    let g = grid.len();
    let folds = cfg.folds.max(2);
    let stride = n.div_ceil(cfg.max_cv_points.max(1)).max(1);
    let mut score = vec![0.0f64; g * g];
    let mut dist = vec![0.0f64; n];
    let mut rdiff = vec![0.0f64; n];
    let mut kb = vec![0.0f64; g * n];
    let mut w = vec![0.0f64; n];
    for i in (0..n).step_by(stride) {
        let fold = i % folds;
        let xi = &x[i * d..(i + 1) * d];
        let mut max_neg = f64::INFINITY;
        for j in 0..n {
            if j % folds == fold {
                continue;
            }
            let xj = &x[j * d..(j + 1) * d];
            let mut q = 0.0;
            for k in 0..d {
                let u = (xi[k] - xj[k]) / h0[k];
                q += u * u;
            }
            dist[j] = q;
            max_neg = max_neg.min(q);
            rdiff[j] = (residuals[i] - residuals[j]).powi(2);
        }
        for (bi, &cb) in grid.iter().enumerate() {
            let b = cb * b0;
            let norm = 1.0 / (b * (2.0 * std::f64::consts::PI).sqrt());
            let inv = 0.5 / (b * b);
            for j in (0..n).filter(|j| j % folds != fold) {
                kb[bi * n + j] = norm * (-rdiff[j] * inv).exp();
            }
        }
        for (hi, &ch) in grid.iter().enumerate() {
            let inv = 0.5 / (ch * ch);
            let mut total = 0.0;
            for j in (0..n).filter(|j| j % folds != fold) {
                w[j] = (-(dist[j] - max_neg) * inv).exp();
                total += w[j];
            }
            for bi in 0..g {
                let mut num = 0.0;
                for j in (0..n).filter(|j| j % folds != fold) {
                    num += w[j] * kb[bi * n + j];
                }
                score[hi * g + bi] += (num / total).max(1e-300).ln();
            }
        }
    }
    let best = (0..g * g)
        .max_by(|&a, &b| score[a].partial_cmp(&score[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let (hi, bi) = (best / g, best % g);
    let cov_bandwidth = h0.iter().map(|h| (h * grid[hi]).max(MIN_COVARIATE_BANDWIDTH)).collect();
    let resid_bandwidth = (b0 * grid[bi]).max(MIN_RESIDUAL_BANDWIDTH);
    NpConditionalFit::from_parts(forest, x.to_vec(), residuals, cov_bandwidth, resid_bandwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn uniform_rows(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_for(seed, &[]);
        (0..n * d).map(|_| rng.random_range(0.0..10.0)).collect()
    }

    #[test]
    fn too_few_transitions_rejected() {
        let x = uniform_rows(20, 2, 1);
        let y = vec![1.0; 20];
        let mut rng = rng_for(1, &[]);
        assert!(matches!(
            fit_np_conditional(&x, 2, &y, &NpConfig::default(), &mut rng),
            Err(Error::InsufficientData { needed: 50, have: 20 })
        ));
    }

    #[test]
    fn zero_residual_variance_reproduces_prediction() {
        let x = uniform_rows(80, 2, 2);
        let y = vec![97.5; 80];
        let mut rng = rng_for(2, &[]);
        let fit = fit_np_conditional(&x, 2, &y, &NpConfig::default(), &mut rng).unwrap();
        for _ in 0..50 {
            let v = fit.sample(&[3.0, 4.0], &mut rng);
            assert_eq!(v, 97.5);
        }
    }

    #[test]
    fn single_residual_resampling() {
        let mut rng = rng_for(3, &[]);
        let forest = RegressionForest::fit(
            &[0.0, 1.0],
            1,
            &[5.0, 5.0],
            &ForestConfig {
                n_trees: 1,
                bootstrap: false,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        let fit = NpConditionalFit::from_parts(forest, vec![0.5], vec![0.75], vec![1.0], 0.1).unwrap();
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| fit.sample(&[123.0], &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - 5.75).abs() < 4.0 * 0.1 / (n as f64).sqrt());
        assert!((sd - 0.1).abs() < 0.005);
    }

    #[test]
    fn flat_covariate_kernel_resamples_uniformly() {
        let mut rng = rng_for(4, &[]);
        let forest = RegressionForest::fit(
            &[0.0, 1.0],
            1,
            &[0.0, 0.0],
            &ForestConfig {
                n_trees: 1,
                bootstrap: false,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        // covariates far apart; an enormous bandwidth makes them indistinguishable
        let fit =
            NpConditionalFit::from_parts(forest, vec![0.0, 100.0], vec![-1.0, 1.0], vec![1e12], 1e-300)
                .unwrap();
        let n = 40_000;
        let ones = (0..n).filter(|_| fit.sample(&[0.0], &mut rng) > 0.0).count();
        let p = ones as f64 / n as f64;
        assert!((p - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn linear_noiseless_mean_is_recovered() {
        let n = 5000;
        let x = uniform_rows(n, 2, 5);
        let line = |r: &[f64]| 50.0 + 2.0 * r[0] + r[1];
        let y: Vec<f64> = x.chunks_exact(2).map(line).collect();
        let mut rng = rng_for(5, &[]);
        let fit = fit_np_conditional(&x, 2, &y, &NpConfig::default(), &mut rng).unwrap();
        for q in uniform_rows(100, 2, 6).chunks_exact(2) {
            let q = [1.0 + 0.8 * q[0], 1.0 + 0.8 * q[1]];
            let truth = line(&q);
            assert!(((fit.predict_mean(&q) - truth) / truth).abs() < 0.02);
        }
    }

    #[test]
    fn homoskedastic_residual_scale_and_centering() {
        let n = 5000;
        let x = uniform_rows(n, 2, 7);
        let mut rng = rng_for(7, &[]);
        let y: Vec<f64> = x
            .chunks_exact(2)
            .map(|r| 10.0 + r[0] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fit = fit_np_conditional(&x, 2, &y, &NpConfig::default(), &mut rng).unwrap();
        let q = [5.0, 5.0];
        let pred = fit.predict_mean(&q);
        let m = 10_000;
        let draws: Vec<f64> = (0..m).map(|_| fit.sample(&q, &mut rng) - pred).collect();
        let mean = draws.iter().sum::<f64>() / m as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        assert!((sd - 1.0).abs() < 0.1, "residual sd {sd}");
        assert!(mean.abs() < 3.0 * sd / (m as f64).sqrt(), "residual mean {mean}");
        assert!(fit.residuals().iter().sum::<f64>().abs() < 1e-8);
    }
}

//! Ordinary least squares with a ridge fallback.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Ridge penalty applied when the design is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-6;

/// A fitted linear model `y = x . coef + N(0, sigma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    coef: Vec<f64>,
    sigma2: f64,
    /// `F` with `cov = sigma2 F F'`: `R^{-1}` from the QR factorization, or
    /// a symmetric square root of the ridge estimator's sampling covariance.
    cov_factor: DMatrix<f64>,
    n: usize,
    ridge: bool,
}

impl LinearFit {
    /// A fit with fixed coefficients and no parameter uncertainty.
    pub fn exact(coef: Vec<f64>, sigma2: f64) -> Self {
        let p = coef.len();
        LinearFit {
            coef,
            sigma2,
            cov_factor: DMatrix::zeros(p, p),
            n: 0,
            ridge: false,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// Residual variance `RSS / (n - p)`; zero when `n == p`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn used_ridge(&self) -> bool {
        self.ridge
    }

    /// `sigma2 (X'X)^{-1}`; for ridge fits the sandwich
    /// `sigma2 A^{-1} X'X A^{-1}` with `A = X'X + lambda I`, which is near zero
    /// along directions the data do not identify.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.cov_factor * self.cov_factor.transpose() * self.sigma2
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        let cov = self.covariance();
        (0..self.coef.len()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect()
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coef.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    /// Draws coefficients from `N(coef, covariance)`.
    pub fn sample_coefficients<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.coef.len();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let shift = &self.cov_factor * z * self.sigma2.sqrt();
        self.coef.iter().zip(shift.iter()).map(|(b, s)| b + s).collect()
    }
}

fn qr_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let p = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * max_diag) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p))?;
    Some((beta, r_inv))
}

/// Least-squares fit of `y` on the rows of `x` (intercepts must be
/// included in the rows by the caller).
pub fn fit_ols<X: AsRef<[f64]>>(rows: &[X], y: &[f64]) -> Result<LinearFit> {
    let n = rows.len();
    if n != y.len() {
        return Err(Error::InvalidInput(format!(
            "{n} design rows but {} responses",
            y.len()
        )));
    }
    let p = rows.first().map_or(0, |r| r.as_ref().len());
    if p == 0 {
        return Err(Error::InvalidInput("empty design".into()));
    }
    if n < p {
        return Err(Error::NotIdentifiable { rows: n, cols: p });
    }
    if rows.iter().any(|r| r.as_ref().len() != p) {
        return Err(Error::InvalidInput("ragged design matrix".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || rows.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("non-finite values in regression data".into()));
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i].as_ref()[j]);
    let yv = DVector::from_column_slice(y);
    let (beta, cov_factor, ridge) = match qr_solve(&x, &yv) {
        Some((b, ri)) => (b, ri, false),
        None => {
            let mut xa = DMatrix::zeros(n + p, p);
            xa.view_mut((0, 0), (n, p)).copy_from(&x);
            for j in 0..p {
                xa[(n + j, j)] = RIDGE_LAMBDA.sqrt();
            }
            let mut ya = DVector::zeros(n + p);
            ya.rows_mut(0, n).copy_from(&yv);
            let (b, ri) = qr_solve(&xa, &ya)
                .ok_or_else(|| Error::Improper("ridge system is singular".into()))?;
            let a_inv = &ri * ri.transpose();
            let sandwich = &a_inv * (x.transpose() * &x) * &a_inv;
            let sandwich = (&sandwich + sandwich.transpose()) * 0.5;
            let eig = sandwich.symmetric_eigen();
            let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            (b, eig.eigenvectors * DMatrix::from_diagonal(&roots), true)
        }
    };
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let sigma2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    Ok(LinearFit {
        coef: beta.iter().copied().collect(),
        sigma2,
        cov_factor,
        n,
        ridge,
    })
}

//! Wide linear least squares, scoring, and by-subject cross-validation.
//!
//! All fits include an unpenalized intercept: columns and response are
//! centered on the fit rows, the centered system is solved, and the
//! intercept is recovered from the means.
//!
//! Three solver routes share one contract (minimum-norm least squares for
//! `ridge_lambda == 0`, ridge otherwise):
//!
//! * SVD of the centered design, `w = V diag(s / (s^2 + lambda)) U^T y`.
//! * Dual Gram, for `d > n`: eigendecompose `K = X X^T` (n x n) and set
//!   `w = X^T (K + lambda I)^+ y`.
//! * Primal Gram, for `d <= n` beyond the SVD size limit: eigendecompose
//!   `G = X^T X` (d x d) and set `w = (G + lambda I)^+ X^T y`.
//!
//! Singular values below `rank_rtol * s_max` are discarded (default
//! `max(n, d) * eps`). Gram eigenvalues carry squared singular values and
//! are only accurate to a few ulps of the largest one, so the Gram routes
//! discard eigenvalues below `max(rank_rtol^2, GRAM_FLOOR * max(n, d) * eps)`
//! times the largest.

mod cv;
mod score;

use std::str::FromStr;

use log::debug;
use nalgebra::{DMatrix, DVector};

pub use cv::{crossval_by_subject, crossval_with, cv_splits, summarize_folds, CvSplit, CvSummary, FoldScore};
pub(crate) use cv::gather;
pub use score::{normalize_ceiling, pearson, ScoreResult, PEREIRA_CEILING};

use crate::error::{Error, Result};

/// Fitted signal at or below this fraction of the response norm is treated
/// as no fit at all, and the weights are set to exactly zero.
const NULL_FIT_RTOL: f64 = 1e-10;

const GRAM_FLOOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    #[default]
    Auto,
    Svd,
    Gram,
}

impl FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Solver::Auto),
            "svd" => Ok(Solver::Svd),
            "gram" => Ok(Solver::Gram),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

/// The route a fit actually took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverRoute {
    Svd,
    GramDual,
    GramPrimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub ridge_lambda: f64,
    /// Relative singular-value cutoff; `None` selects `max(n, d) * eps`.
    pub rank_rtol: Option<f64>,
    pub solver: Solver,
    /// `Auto` uses the SVD route while `n * d` stays at or below this.
    pub svd_max_elements: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge_lambda: 0.0,
            rank_rtol: None,
            solver: Solver::Auto,
            svd_max_elements: 250_000,
        }
    }
}

impl FitOptions {
    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_ridge(mut self, lambda: f64) -> Self {
        self.ridge_lambda = lambda;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub ridge_lambda: f64,
    pub effective_rank: usize,
    pub fit_row_count: usize,
    pub route: SolverRoute,
}

impl LinearModel {
    pub fn weight_norm(&self) -> f64 {
        self.weights.norm()
    }
}

/// Fits `y ~ X w + b`. See the module docs for the solver contract.
pub fn fit_linear(x: &DMatrix<f64>, y: &[f64], opts: &FitOptions) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::Precondition("cannot fit on zero rows".into()));
    }
    if y.len() != n {
        return Err(Error::Precondition(format!("{n} design rows but {} responses", y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in regression inputs".into()));
    }
    if !(opts.ridge_lambda.is_finite() && opts.ridge_lambda >= 0.0) {
        return Err(Error::Config(format!("ridge_lambda must be >= 0, got {}", opts.ridge_lambda)));
    }

    let col_means = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n as f64));
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for (j, mut c) in xc.column_iter_mut().enumerate() {
        c.add_scalar_mut(-col_means[j]);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let route = match opts.solver {
        Solver::Svd => SolverRoute::Svd,
        Solver::Auto if n.saturating_mul(d) <= opts.svd_max_elements => SolverRoute::Svd,
        _ if d > n => SolverRoute::GramDual,
        _ => SolverRoute::GramPrimal,
    };
    let sigma_rtol = opts.rank_rtol.unwrap_or(n.max(d) as f64 * f64::EPSILON);
    let gram_rtol = (sigma_rtol * sigma_rtol).max(GRAM_FLOOR * n.max(d) as f64 * f64::EPSILON);
    let lambda = opts.ridge_lambda;

    let (mut weights, rank) = if d == 0 {
        (DVector::zeros(0), 0)
    } else {
        match route {
            SolverRoute::Svd => solve_svd(&xc, &yc, lambda, sigma_rtol)?,
            SolverRoute::GramDual => {
                let k = &xc * xc.transpose();
                let (alpha, rank) = spectral_solve(k, &yc, lambda, gram_rtol);
                (xc.tr_mul(&alpha), rank)
            }
            SolverRoute::GramPrimal => {
                let g = xc.tr_mul(&xc);
                let b = xc.tr_mul(&yc);
                spectral_solve(g, &b, lambda, gram_rtol)
            }
        }
    };

    let y_norm = yc.norm();
    if (&xc * &weights).norm() <= NULL_FIT_RTOL * y_norm || y_norm == 0.0 {
        debug!("fit explains no variance; zeroing {d} weights");
        weights.fill(0.0);
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("solver produced non-finite weights".into()));
    }
    let intercept = y_mean - col_means.dot(&weights);
    Ok(LinearModel {
        weights,
        intercept,
        ridge_lambda: lambda,
        effective_rank: rank,
        fit_row_count: n,
        route,
    })
}

// nalgebra's SVD mis-factors some exactly rank-deficient matrices, so this
// route goes through faer.
fn solve_svd(xc: &DMatrix<f64>, yc: &DVector<f64>, lambda: f64, rtol: f64) -> Result<(DVector<f64>, usize)> {
    let (n, d) = xc.shape();
    let svd = faer::MatRef::from_column_major_slice(xc.as_slice(), n, d)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let k = n.min(d);
    let s_max = (0..k).map(|i| s[i]).fold(0.0, f64::max);
    let cut = rtol * s_max;
    let mut weights = DVector::zeros(d);
    let mut rank = 0;
    for i in 0..k {
        let si = s[i];
        if !(si > cut && si > 0.0) {
            continue;
        }
        rank += 1;
        let uty: f64 = (0..n).map(|r| u[(r, i)] * yc[r]).sum();
        let c = uty * si / (si * si + lambda);
        for j in 0..d {
            weights[j] += c * v[(j, i)];
        }
    }
    Ok((weights, rank))
}

/// `(A + lambda I)^+ b` for symmetric positive semi-definite `A`.
fn spectral_solve(a: DMatrix<f64>, b: &DVector<f64>, lambda: f64, rtol: f64) -> (DVector<f64>, usize) {
    let eig = a.symmetric_eigen();
    let mu_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = rtol * mu_max;
    let mut qtb = eig.eigenvectors.tr_mul(b);
    let mut rank = 0;
    for (i, c) in qtb.iter_mut().enumerate() {
        let mu = eig.eigenvalues[i];
        if mu > cut && mu > 0.0 {
            *c /= mu + lambda;
            rank += 1;
        } else {
            *c = 0.0;
        }
    }
    (&eig.eigenvectors * qtb, rank)
}

/// `X w + b` for every row of `x`.
pub fn predict(model: &LinearModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.weights.len() {
        return Err(Error::Precondition(format!(
            "design has {} columns, model has {} weights",
            x.ncols(),
            model.weights.len()
        )));
    }
    let yhat = x * &model.weights;
    Ok(yhat.iter().map(|v| v + model.intercept).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn two_point_line() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        for solver in [Solver::Svd, Solver::Gram] {
            let m = fit_linear(&x, &[2.0, 4.0], &FitOptions::default().with_solver(solver)).unwrap();
            assert!((m.weights[0] - 2.0).abs() < 1e-12);
            assert!(m.intercept.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_response_gives_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(10, 4, &mut rng);
        let m = fit_linear(&x, &[0.0; 10], &FitOptions::default()).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert_eq!(m.intercept, 0.0);
    }

    /// Pseudoinverse oracle: with duplicated columns [c, c] and y = c, the
    /// minimum-norm split is (1/2, 1/2).
    #[test]
    fn duplicated_columns_split_evenly() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 4.0, 4.0]);
        for solver in [Solver::Svd, Solver::Gram] {
            let m = fit_linear(&x, &[1.0, 2.0, 4.0], &FitOptions::default().with_solver(solver)).unwrap();
            assert!((m.weights[0] - 0.5).abs() < 1e-9, "{solver:?} {:?}", m.weights);
            assert!((m.weights[1] - 0.5).abs() < 1e-9);
            assert_eq!(m.effective_rank, 1);
        }
    }

    #[test]
    fn predict_cases() {
        let m = LinearModel {
            weights: DVector::zeros(2),
            intercept: 3.0,
            ridge_lambda: 0.0,
            effective_rank: 0,
            fit_row_count: 1,
            route: SolverRoute::Svd,
        };
        assert_eq!(predict(&m, &DMatrix::from_element(4, 2, 9.0)).unwrap(), vec![3.0; 4]);
        assert!(predict(&m, &DMatrix::zeros(1, 3)).is_err());

        let m = LinearModel { weights: DVector::from_vec(vec![2.0]), intercept: 0.0, ..m };
        assert_eq!(predict(&m, &DMatrix::from_element(1, 1, 5.0)).unwrap(), vec![10.0]);
    }

    #[test]
    fn predict_matches_dot_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(30, 6, &mut rng);
        let w: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = LinearModel {
            weights: DVector::from_vec(w.clone()),
            intercept: -0.75,
            ridge_lambda: 0.0,
            effective_rank: 6,
            fit_row_count: 30,
            route: SolverRoute::Svd,
        };
        let got = predict(&m, &x).unwrap();
        for i in 0..30 {
            let mut acc = -0.75;
            for j in 0..6 {
                acc += x[(i, j)] * w[j];
            }
            assert!((got[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn input_errors() {
        let opts = FitOptions::default();
        assert!(fit_linear(&DMatrix::zeros(0, 2), &[], &opts).is_err());
        let mut x = DMatrix::from_element(2, 1, 1.0);
        x[(0, 0)] = f64::NAN;
        assert!(matches!(fit_linear(&x, &[1.0, 2.0], &opts), Err(Error::Numerical(_))));
        assert!(fit_linear(&DMatrix::zeros(2, 1), &[1.0], &opts).is_err());
        assert!(fit_linear(&DMatrix::zeros(2, 1), &[1.0, 2.0], &opts.clone().with_ridge(-1.0)).is_err());
    }

    #[test]
    fn residuals_orthogonal_with_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (n, d) in [(40, 5), (25, 60)] {
            let x = gaussian(n, d, &mut rng);
            let y: Vec<f64> = (0..n).map(|_| { let e: f64 = StandardNormal.sample(&mut rng); 3.0 + e }).collect();
            for solver in [Solver::Svd, Solver::Gram] {
                let m = fit_linear(&x, &y, &FitOptions::default().with_solver(solver)).unwrap();
                let yhat = predict(&m, &x).unwrap();
                let r = DVector::from_iterator(n, y.iter().zip(&yhat).map(|(a, b)| a - b));
                assert!(r.mean().abs() < 1e-10);
                let xtr = x.tr_mul(&r);
                assert!(xtr.amax() < 1e-8 * x.norm() * DVector::from_vec(y.clone()).norm(), "{solver:?}");
            }
        }
    }

    #[test]
    fn ridge_shrinks_weights_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(30, 50, &mut rng);
        let y: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0] {
            let m = fit_linear(&x, &y, &FitOptions::default().with_ridge(lambda)).unwrap();
            assert!(m.weight_norm() <= last + 1e-12);
            last = m.weight_norm();
        }
    }

    #[test]
    fn ridge_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(20, 35, &mut rng);
        let y: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
        let opts = FitOptions::default().with_ridge(0.5);
        let a = fit_linear(&x, &y, &opts.clone().with_solver(Solver::Svd)).unwrap();
        let b = fit_linear(&x, &y, &opts.with_solver(Solver::Gram)).unwrap();
        assert_eq!(b.route, SolverRoute::GramDual);
        assert!((a.weights - b.weights).amax() < 1e-10);
    }
}

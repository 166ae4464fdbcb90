use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use readscale_core::regression::{fit_linear, pearson, predict, FitOptions, Solver};

fn gauss_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    c
}

/// `(intercept, weights)` from the augmented normal equations.
fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> (f64, DVector<f64>) {
    let (n, d) = x.shape();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let beta = (a.transpose() * &a).lu().solve(&(a.transpose() * DVector::from_column_slice(y))).unwrap();
    (beta[0], beta.rows(1, d).into_owned())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_rank_matches_normal_equations(seed in any::<u64>(), d in 1usize..=8, extra in 2usize..=42) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = d + extra;
        let x = gauss_matrix(&mut rng, n, d);
        let y = gauss_vec(&mut rng, n);
        let (b, w) = normal_equations(&x, &y);
        for solver in [Solver::Svd, Solver::Gram] {
            let m = fit_linear(&x, &y, &FitOptions::default().with_solver(solver)).unwrap();
            prop_assert!((m.intercept - b).abs() < 1e-8);
            prop_assert!((&m.weights - &w).amax() < 1e-8);
            prop_assert_eq!(m.effective_rank, d);
        }
    }

    #[test]
    fn rank_deficient_fit_is_minimum_norm(seed in any::<u64>(), d in 2usize..=8, extra in 2usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.random_range(1..d);
        let n = d + extra;
        let c = gauss_matrix(&mut rng, r, d);
        let x = gauss_matrix(&mut rng, n, r) * &c;
        let y = gauss_vec(&mut rng, n);
        // X is a rounded product, so its null directions carry singular values near the default cutoff.
        let opts = FitOptions { rank_rtol: Some(1e-10), ..FitOptions::default() };
        let m = fit_linear(&x, &y, &opts).unwrap();
        prop_assert_eq!(m.effective_rank, r);

        // Projector onto the null space of C, which is the null space of X.
        let p = DMatrix::identity(d, d) - c.transpose() * (&c * c.transpose()).try_inverse().unwrap() * &c;
        let z = &p * DVector::from_vec(gauss_vec(&mut rng, d));
        prop_assume!(z.norm() > 1e-3);
        let moved = readscale_core::regression::LinearModel { weights: &m.weights + &z, ..m.clone() };
        let (a, b) = (predict(&m, &x).unwrap(), predict(&moved, &x).unwrap());
        let scale = 1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-9 * scale));
        prop_assert!(moved.weight_norm() > m.weight_norm());
        // The fitted weights carry no null-space component.
        prop_assert!((&p * &m.weights).amax() < 1e-8 * (1.0 + m.weight_norm()));
    }

    #[test]
    fn residuals_are_orthogonal(seed in any::<u64>(), d in 1usize..=12, n in 3usize..=60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gauss_matrix(&mut rng, n, d);
        let y: Vec<f64> = gauss_vec(&mut rng, n).iter().map(|v| 5.0 + 2.0 * v).collect();
        let m = fit_linear(&x, &y, &FitOptions::default()).unwrap();
        let yhat = predict(&m, &x).unwrap();
        let res = DVector::from_iterator(n, y.iter().zip(&yhat).map(|(a, b)| a - b));
        prop_assert!(res.mean().abs() < 1e-10);
        let xc = centered(&x);
        let scale = xc.norm() * DVector::from_column_slice(&y).norm();
        prop_assert!((xc.transpose() * &res).amax() < 1e-10 * (1.0 + scale));
    }

    #[test]
    fn ridge_shrinks_weight_norm(seed in any::<u64>(), d in 1usize..=20, n in 3usize..=40, l1 in 0.0f64..10.0, dl in 0.001f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gauss_matrix(&mut rng, n, d);
        let y = gauss_vec(&mut rng, n);
        let a = fit_linear(&x, &y, &FitOptions::default().with_ridge(l1)).unwrap();
        let b = fit_linear(&x, &y, &FitOptions::default().with_ridge(l1 + dl)).unwrap();
        prop_assert!(a.weight_norm() >= b.weight_norm() - 1e-12);
    }

    #[test]
    fn svd_and_gram_routes_agree(seed in any::<u64>(), n in 3usize..=40, d in 1usize..=120, lambda in prop_oneof![Just(0.0), 0.01f64..5.0]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gauss_matrix(&mut rng, n, d);
        let y = gauss_vec(&mut rng, n);
        let opts = FitOptions::default().with_ridge(lambda);
        let s = fit_linear(&x, &y, &opts.clone().with_solver(Solver::Svd)).unwrap();
        let g = fit_linear(&x, &y, &opts.with_solver(Solver::Gram)).unwrap();
        prop_assert!((&s.weights - &g.weights).amax() < 1e-6);
        prop_assert!((s.intercept - g.intercept).abs() < 1e-6);
    }

    #[test]
    fn pearson_affine_invariance(seed in any::<u64>(), n in 3usize..=50, scale in 0.01f64..100.0, shift in -100.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gauss_vec(&mut rng, n);
        let b = gauss_vec(&mut rng, n);
        let r = pearson(&a, &b).unwrap().pearson_r.unwrap();
        let moved: Vec<f64> = b.iter().map(|v| scale * v + shift).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        prop_assert!((pearson(&a, &moved).unwrap().pearson_r.unwrap() - r).abs() < 1e-9);
        prop_assert!((pearson(&neg, &b).unwrap().pearson_r.unwrap() + r).abs() < 1e-12);
    }
}

#[test]
fn wide_fold_sized_problem_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(76);
    let x = gauss_matrix(&mut rng, 308, 1024);
    let y = gauss_vec(&mut rng, 308);
    let m = fit_linear(&x, &y, &FitOptions::default()).unwrap();
    let yhat = predict(&m, &x).unwrap();
    assert!(y.iter().zip(&yhat).all(|(a, b)| (a - b).abs() < 1e-8));
    assert_eq!(m.effective_rank, 307);
}

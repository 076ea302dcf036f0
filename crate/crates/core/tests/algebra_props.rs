//! Property tests for tensor algebra, the graphical lasso solver and the robust center.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use tegma_core::glasso::{graphical_lasso, kkt_residual, SolverOptions, WarmStart};
use tegma_core::robust::{
    sign_covariance_full, spatial_median, spatial_sign, MedianOptions, SIGN_EPS,
};
use tegma_core::simulation::{rng_from_seed, SimRng};
use tegma_core::tensor::kron;
use tegma_core::{SymMatrix, Tensor};

fn normal_matrix(rng: &mut SimRng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn normal_tensor(rng: &mut SimRng, dims: &[usize]) -> Tensor {
    let len = dims.iter().product();
    Tensor::new(
        dims.to_vec(),
        (0..len).map(|_| rng.sample(StandardNormal)).collect(),
    )
    .unwrap()
}

fn random_pd(rng: &mut SimRng, p: usize) -> SymMatrix {
    let b = normal_matrix(rng, p, p + 3);
    SymMatrix::new(&b * b.transpose() / (p + 3) as f64 + DMatrix::identity(p, p) * 0.1).unwrap()
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=4, 1..=4)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_inverts_unfold(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let x = normal_tensor(&mut rng, &dims);
        for k in 0..dims.len() {
            let back = Tensor::fold(&x.unfold(k).unwrap(), k, &dims).unwrap();
            prop_assert_eq!(&back, &x);
        }
    }

    #[test]
    fn identity_mode_product_is_noop(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let x = normal_tensor(&mut rng, &dims);
        for (k, &p) in dims.iter().enumerate() {
            let y = x.mode_product(&DMatrix::identity(p, p), k).unwrap();
            prop_assert!(max_diff(y.as_slice(), x.as_slice()) <= 1e-14);
        }
    }

    #[test]
    fn mode_products_commute_across_modes(dims in prop::collection::vec(1usize..=4, 2..=4), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let x = normal_tensor(&mut rng, &dims);
        let a = normal_matrix(&mut rng, 3, dims[0]);
        let b = normal_matrix(&mut rng, 2, dims[1]);
        let ab = x.mode_product(&a, 0).unwrap().mode_product(&b, 1).unwrap();
        let ba = x.mode_product(&b, 1).unwrap().mode_product(&a, 0).unwrap();
        prop_assert_eq!(ab.dims(), ba.dims());
        prop_assert!(max_diff(ab.as_slice(), ba.as_slice()) <= 1e-12);
    }

    #[test]
    fn vec_of_multi_product_is_kronecker(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let x = normal_tensor(&mut rng, &dims);
        let mats: Vec<DMatrix<f64>> = dims.iter().map(|&p| {
            let rows = rng.random_range(1..=4);
            normal_matrix(&mut rng, rows, p)
        }).collect();
        let pairs: Vec<(&DMatrix<f64>, usize)> = mats.iter().zip(0..).collect();
        let y = x.multi_mode_product(&pairs).unwrap();
        let rev: Vec<&DMatrix<f64>> = mats.iter().rev().collect();
        let expect = kron(&rev) * DMatrix::from_column_slice(x.len(), 1, &x.vectorize());
        prop_assert!(max_diff(expect.as_slice(), &y.vectorize()) <= 1e-10);
    }

    #[test]
    fn solver_meets_kkt(p in 2usize..=12, lambda in 0.0f64..0.5, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let s = random_pd(&mut rng, p);
        let res = graphical_lasso(&s, &SolverOptions::with_lambda(lambda)).unwrap();
        prop_assert!(res.converged);
        prop_assert!(res.omega.is_positive_definite());
        prop_assert!(kkt_residual(&s, &res.omega, lambda).unwrap() <= 1e-4);
    }

    #[test]
    fn solver_objective_never_increases(p in 3usize..=12, lambda in 0.01f64..0.5, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let s = random_pd(&mut rng, p);
        let res = graphical_lasso(&s, &SolverOptions::with_lambda(lambda)).unwrap();
        for w in res.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{:?}", res.objective_history);
        }
    }

    #[test]
    fn warm_start_at_solution_stops_quickly(p in 3usize..=12, lambda in 0.01f64..0.5, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let s = random_pd(&mut rng, p);
        let cold = graphical_lasso(&s, &SolverOptions::with_lambda(lambda)).unwrap();
        let warm = graphical_lasso(&s, &SolverOptions {
            warm_start: Some(WarmStart { omega: cold.omega.clone(), sigma: cold.sigma_hat.clone() }),
            ..SolverOptions::with_lambda(lambda)
        }).unwrap();
        prop_assert!(warm.converged);
        prop_assert!(warm.iterations <= 2, "warm start took {} sweeps", warm.iterations);
        prop_assert!(warm.omega.sub(&cold.omega).max_abs() <= 1e-5);
    }

    #[test]
    fn solver_is_permutation_equivariant(p in 2usize..=10, lambda in 0.0f64..0.5, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let s = random_pd(&mut rng, p);
        let mut perm: Vec<usize> = (0..p).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % p);
        let sp = SymMatrix::from_fn(p, |i, j| s.get(perm[i], perm[j]));
        let a = graphical_lasso(&s, &SolverOptions::with_lambda(lambda)).unwrap().omega;
        let b = graphical_lasso(&sp, &SolverOptions::with_lambda(lambda)).unwrap().omega;
        for i in 0..p {
            for j in 0..p {
                prop_assert!((b.get(i, j) - a.get(perm[i], perm[j])).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn spatial_signs_are_unit_or_zero(dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let center = normal_tensor(&mut rng, &dims);
        for t in [normal_tensor(&mut rng, &dims), center.clone()] {
            let n = spatial_sign(&t, &center, SIGN_EPS).unwrap().norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn weiszfeld_objective_never_increases(n in 3usize..40, dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let data: Vec<Tensor> = (0..n).map(|_| normal_tensor(&mut rng, &dims)).collect();
        let est = spatial_median(&data, MedianOptions::default()).unwrap();
        for w in est.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", est.objective_history);
        }
    }

    // Collinear data (a single entry) can have a whole segment of medians.
    #[test]
    fn spatial_median_is_translation_equivariant(n in 3usize..30, dims in dims_strategy().prop_filter("p* >= 2", |d| d.iter().product::<usize>() >= 2), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let data: Vec<Tensor> = (0..n).map(|_| normal_tensor(&mut rng, &dims)).collect();
        let shift = normal_tensor(&mut rng, &dims).scaled(5.0);
        let moved: Vec<Tensor> = data.iter().map(|t| {
            let v = t.as_slice().iter().zip(shift.as_slice()).map(|(a, b)| a + b).collect();
            Tensor::new(dims.clone(), v).unwrap()
        }).collect();
        let a = spatial_median(&data, MedianOptions::default()).unwrap().center;
        let b = spatial_median(&moved, MedianOptions::default()).unwrap().center;
        let expect: Vec<f64> = a.as_slice().iter().zip(shift.as_slice()).map(|(x, y)| x + y).collect();
        prop_assert!(max_diff(b.as_slice(), &expect) <= 1e-6);
    }

    #[test]
    fn sign_covariance_trace_is_total_dimension(n in 2usize..30, dims in dims_strategy(), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let data: Vec<Tensor> = (0..n).map(|_| normal_tensor(&mut rng, &dims)).collect();
        let sc = sign_covariance_full(&data, &Tensor::zeros(&dims)).unwrap();
        let p_star = dims.iter().product::<usize>() as f64;
        prop_assert!((sc.matrix.trace() - p_star).abs() <= 1e-10 * p_star);
    }
}

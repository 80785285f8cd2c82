mod common;

use common::*;
use icr_core::{
    compare_covariances, implicit_covariance, true_covariance, IcrModel, LatentVector, Matrix,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_latent(model: &IcrModel, rng: &mut ChaCha8Rng) -> LatentVector {
    let layout = model.latent_layout();
    LatentVector::from_vec(layout, (0..layout.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn apply_sqrt_is_linear(model in model_strategy(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x1, x2) = (random_latent(&model, &mut rng), random_latent(&model, &mut rng));
        let combo: Vec<f64> = x1.as_slice().iter().zip(x2.as_slice()).map(|(p, q)| a * p + b * q).collect();
        let combo = LatentVector::from_vec(model.latent_layout(), combo).unwrap();
        let (s1, s2) = (model.apply_sqrt(&x1).unwrap(), model.apply_sqrt(&x2).unwrap());
        let s = model.apply_sqrt(&combo).unwrap();
        let scale = a.abs() * norm(&s1) + b.abs() * norm(&s2) + f64::MIN_POSITIVE;
        let err = s.iter().zip(s1.iter().zip(&s2)).map(|(s, (p, q))| (s - a * p - b * q).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-12 * scale, "err {err:e} scale {scale:e}");
    }

    #[test]
    fn adjoint_identity(model in model_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let xi = random_latent(&model, &mut rng);
            let v: Vec<f64> = (0..model.size()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = model.apply_sqrt(&xi).unwrap();
            let st_v = model.apply_sqrt_adjoint(&v).unwrap();
            let lhs: f64 = s.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs = xi.dot(&st_v);
            let scale = norm(&s) * norm(&v) + norm(xi.as_slice()) * norm(st_v.as_slice());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn windows_reconstruct_fine_covariance(model in model_strategy()) {
        let h = model.hierarchy();
        let ck = icr_core::charted_kernel(*model.kernel(), *model.chart());
        for level in 1..=h.depth() {
            let lm = model.level_matrices(level);
            for i in 0..lm.window_count() {
                let m = lm.window(i);
                let xc = model.chart().map_all(h.coarse_window(level, i)).unwrap();
                let xf = model.chart().map_all(h.fine_window(level, i)).unwrap();
                let kcc = ck.kernel.gram(&xc, &xc).unwrap();
                let kff = ck.kernel.gram(&xf, &xf).unwrap();
                let r = m.r_matrix();
                let l = m.sqrt_d_matrix();
                let recon = &r * &kcc * r.transpose() + &l * l.transpose();
                let err = max_abs(&(recon - &kff));
                prop_assert!(err <= 100.0 * m.jitter() + 1e-10, "level {level} window {i}: {err:e}");
            }
        }
    }

    #[test]
    fn filter_is_conditional_mean(model in model_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = model.hierarchy();
        let k = model.kernel();
        for level in 1..=h.depth() {
            let lm = model.level_matrices(level);
            let i = rng.random_range(0..lm.window_count());
            let xc = model.chart().map_all(h.coarse_window(level, i)).unwrap();
            let xf = model.chart().map_all(h.fine_window(level, i)).unwrap();
            let kcc = k.gram(&xc, &xc).unwrap();
            let kfc = k.gram(&xf, &xc).unwrap();
            let v = nalgebra::DVector::from_fn(xc.len(), |_, _| rng.random_range(-1.0..1.0));
            let Some(w) = kcc.clone().lu().solve(&v) else { continue };
            let oracle = &kfc * w;
            let got = lm.window(i).r_matrix() * &v;
            prop_assert!((&got - &oracle).norm() <= 1e-9 * oracle.norm().max(v.norm()), "level {level} window {i}");
        }
    }

    #[test]
    fn implicit_covariance_is_symmetric_psd(model in model_strategy()) {
        let k = implicit_covariance(&model).unwrap();
        prop_assert!(max_abs(&(&k - k.transpose())) <= 1e-12);
        prop_assert!(min_eigenvalue(&k) >= -1e-8);
    }

    #[test]
    fn base_only_model_is_exact(n0 in 1usize..256, chart in chart_strategy(), rho in 0.3f64..3.0) {
        let spec = icr_core::RefinementSpec::new(n0, 0, 3, 2).unwrap();
        let chart = if n0 < 2 { icr_core::Chart::Identity.into() } else { chart };
        let model = IcrModel::build(icr_core::Kernel::matern32(rho).unwrap(), chart, &spec).unwrap();
        let t = true_covariance(&model).unwrap();
        let s = model.base_factor();
        let rel = (s * s.transpose() - &t).norm() / t.norm();
        prop_assert!(rel <= 1e-8, "base factor off by {rel:e}");
        let c = compare_covariances(&t, &implicit_covariance(&model).unwrap()).unwrap();
        prop_assert!(c.kl_true_from_approx <= 1e-6, "kl {:e}", c.kl_true_from_approx);
        prop_assert!(c.mae <= 1e-6);
    }

    #[test]
    fn kl_of_identical_is_zero(n in 1usize..=64, seed in any::<u64>()) {
        let a = random_spd(n, seed);
        let c = compare_covariances(&a, &a).unwrap();
        prop_assert!(c.kl_true_from_approx.abs() <= 1e-8);
        prop_assert_eq!(c.mae, 0.0);
    }

    #[test]
    fn comparison_is_permutation_invariant(n in 2usize..24, seed in any::<u64>()) {
        let a = random_spd(n, seed);
        let b = random_spd(n, seed.wrapping_add(1));
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let p = |m: &Matrix| Matrix::from_fn(n, n, |i, j| m[(perm[i], perm[j])]);
        let c0 = compare_covariances(&a, &b).unwrap();
        let c1 = compare_covariances(&p(&a), &p(&b)).unwrap();
        prop_assert!((c0.mae - c1.mae).abs() <= 1e-12 * c0.mae.max(1.0));
        prop_assert_eq!(c0.max_abs_err, c1.max_abs_err);
        prop_assert_eq!(c0.max_diag_err, c1.max_diag_err);
        prop_assert!((c0.kl_true_from_approx - c1.kl_true_from_approx).abs() <= 1e-8 * c0.kl_true_from_approx.max(1.0));
        prop_assert!(c0.kl_true_from_approx >= 0.0 && c0.mae <= c0.max_abs_err);
    }
}

fn random_spd(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + Matrix::identity(n, n) * 0.5
}

#[test]
fn same_seed_is_bit_identical() {
    let model = build(13, 5, (5, 4), log_experiment_chart());
    let a = model.sample(2024);
    assert_eq!(a, model.sample(2024));
    assert_eq!(a.len(), 200);
}

#[test]
fn samples_have_zero_mean() {
    let model = build(10, 1, (3, 2), icr_core::Chart::Identity.into());
    let var = implicit_covariance(&model).unwrap().diagonal();
    let n = 10_000;
    let mut mean = vec![0.0; model.size()];
    for seed in 0..n {
        for (m, v) in mean.iter_mut().zip(model.sample(seed)) {
            *m += v / n as f64;
        }
    }
    for (i, m) in mean.iter().enumerate() {
        assert!(m.abs() <= 4.0 * (var[i] / n as f64).sqrt(), "coordinate {i}: {m}");
    }
}

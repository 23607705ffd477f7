use joint_nlme::model::{
    build_error_cov, growth_mean, ErrorCovFactor, ErrorModel, Family, Individual, JointModel, LogisticGrowth,
    MeanFunction, ParameterState,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn increasing_times(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.0f64..50.0, prop::collection::vec(0.05f64..20.0, 0..max_len)).prop_map(|(start, gaps)| {
        let mut t = vec![start];
        for g in gaps {
            let next = t[t.len() - 1] + g;
            t.push(next);
        }
        t
    })
}

fn state(alpha: [f64; 2], x: f64, sigma2: f64, rho: f64) -> ParameterState {
    ParameterState {
        alpha: DVector::from_vec(alpha.to_vec()),
        beta: DVector::from_vec(vec![-22.0, 5.0]),
        mu_x: DVector::from_element(1, 4.0),
        sigma_x: DMatrix::from_element(1, 1, 0.2),
        sigma2_eps: sigma2,
        rho,
        phi: 1.0,
        x: DMatrix::from_element(1, 1, x),
    }
}

/// `log N(y; g, σ² Σ(ρ))` through an explicit inverse and determinant.
fn dense_oracle(y: &[f64], g: &[f64], sigma2: f64, rho: f64, times: &[f64]) -> f64 {
    let n = y.len();
    let cov = build_error_cov(sigma2, rho, times).unwrap();
    let inv = cov.clone().try_inverse().unwrap();
    let r = DVector::from_iterator(n, y.iter().zip(g).map(|(a, b)| a - b));
    let quad = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + quad)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn error_cov_is_symmetric_and_factorizes(
        times in increasing_times(10),
        rho in 0.0f64..=0.999,
        log_s2 in -6.0f64..6.0,
    ) {
        let sigma2 = 10f64.powf(log_s2);
        let cov = build_error_cov(sigma2, rho, &times).unwrap();
        prop_assert_eq!(&cov, &cov.transpose());
        prop_assert!(cov.clone().cholesky().is_some());
        let f = ErrorCovFactor::new(rho, &times).unwrap();
        let l = f.lower();
        let back = &l * l.transpose() * sigma2;
        prop_assert!((back - &cov).amax() <= 1e-9 * sigma2);
    }

    #[test]
    fn longit_loglik_matches_dense_inverse(
        times in increasing_times(6),
        rho in 0.0f64..0.99,
        sigma2 in 0.05f64..3.0,
        x in 1.0f64..7.0,
        a1 in 5.0f64..30.0,
        a2 in 2.0f64..12.0,
        noise in prop::collection::vec(-2.0f64..2.0, 6),
    ) {
        let g = growth_mean(&[a1, a2], x, &times).unwrap();
        let y: Vec<f64> = g.iter().zip(&noise).map(|(m, e)| m + e).collect();
        let ind = Individual::intercept_only("p", times.clone(), y.clone(), 1.0).unwrap();
        let ll = JointModel::new(Family::Bernoulli, ErrorModel::Car1)
            .longit_loglik(&ind, &state([a1, a2], x, sigma2, rho), 0)
            .unwrap();
        let want = dense_oracle(&y, &g, sigma2, rho, &times);
        prop_assert!((ll - want).abs() <= 1e-10 * want.abs().max(1.0), "{} vs {}", ll, want);
    }

    #[test]
    fn bernoulli_probabilities_sum_to_one(eta in -60.0f64..60.0) {
        let p1 = Family::Bernoulli.log_density(1.0, eta, 1.0).exp();
        let p0 = Family::Bernoulli.log_density(0.0, eta, 1.0).exp();
        prop_assert!((p1 + p0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growth_is_shift_invariant(
        times in increasing_times(6),
        a1 in -20.0f64..40.0,
        a2 in 0.5f64..15.0,
        x in -5.0f64..10.0,
        delta in -30.0f64..30.0,
    ) {
        let base = growth_mean(&[a1, a2], x, &times).unwrap();
        let shifted: Vec<f64> = times.iter().map(|t| t + delta).collect();
        let moved = growth_mean(&[a1 + delta, a2], x, &shifted).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
        if x > 0.0 {
            prop_assert!(base.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn growth_jacobian_matches_central_differences(
        times in increasing_times(6),
        a1 in 5.0f64..30.0,
        a2 in 1.0f64..12.0,
        x in 0.5f64..8.0,
    ) {
        let jac = LogisticGrowth.jacobian_x(&[a1, a2], &[x], &times).unwrap();
        let h = 1e-5;
        let hi = growth_mean(&[a1, a2], x + h, &times).unwrap();
        let lo = growth_mean(&[a1, a2], x - h, &times).unwrap();
        for k in 0..times.len() {
            let fd = (hi[k] - lo[k]) / (2.0 * h);
            prop_assert!((jac[(k, 0)] - fd).abs() <= 1e-4 * fd.abs().max(1e-8));
        }
    }
}

#[test]
fn rho_zero_is_scaled_identity() {
    for n in 1..=8 {
        let times: Vec<f64> = (0..n).map(|k| 3.0 * k as f64 + 0.5).collect();
        for sigma2 in [1e-6, 0.2, 1.0, 7.5, 1e6] {
            let cov = build_error_cov(sigma2, 0.0, &times).unwrap();
            assert_eq!(cov, DMatrix::identity(n, n) * sigma2);
        }
        let f = ErrorCovFactor::new(0.0, &times).unwrap();
        assert_eq!(f.log_det(), 0.0);
        assert_eq!(f.lower(), DMatrix::identity(n, n));
    }
}

#[test]
fn value_at_one_time_scale_before_midpoint() {
    let g = growth_mean(&[15.0, 7.0], 4.0, &[8.0]).unwrap()[0];
    let want = 4.0 / (1.0 + 1f64.exp());
    assert!((g - want).abs() < 1e-12);
}

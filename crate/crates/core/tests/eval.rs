use joint_nlme::eval::{classify, cpo_report, log_cpo_hat, predict_outcome_prob, roc_auc, CpoKernel};
use joint_nlme::model::{logistic, ErrorModel, Family, Individual, JointModel, MatrixSpec, ParameterState, VectorSpec};
use joint_nlme::sampler::{run_chain, ChainMeta, ChainStore, FitConfig, FixedBlocks, Schedule, Tallies};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn state(x: &[f64], beta: [f64; 2]) -> ParameterState {
    ParameterState {
        alpha: DVector::from_vec(vec![15.0, 7.0]),
        beta: DVector::from_vec(beta.to_vec()),
        mu_x: DVector::from_element(1, 4.0),
        sigma_x: DMatrix::from_element(1, 1, 0.2),
        sigma2_eps: 1.0,
        rho: 0.5,
        phi: 1.0,
        x: DMatrix::from_row_slice(1, x.len(), x),
    }
}

fn store(draws: Vec<ParameterState>, ids: Vec<String>) -> ChainStore {
    let n = draws.len();
    ChainStore {
        iterations: (1..=n).collect(),
        draws,
        meta: ChainMeta {
            seed: 0,
            schedule: Schedule::new(n + 1, 1, 1),
            family: Family::Bernoulli,
            error_model: ErrorModel::Car1,
            ids,
            tallies: Tallies::default(),
            wall_clock_secs: 0.0,
        },
    }
}

fn mini_data() -> Vec<Individual> {
    vec![
        Individual::intercept_only("a", vec![5.0, 20.0], vec![1.1, 2.9], 1.0).unwrap(),
        Individual::intercept_only("b", vec![10.0, 30.0], vec![0.4, 3.2], 0.0).unwrap(),
        Individual::intercept_only("c", vec![15.0, 40.0], vec![2.5, 4.6], 1.0).unwrap(),
    ]
}

fn log_kernel(model: &JointModel, ind: &Individual, s: &ParameterState) -> f64 {
    model.longit_loglik(ind, s, 0).unwrap() + model.glm_loglik(ind, s, 0).unwrap()
}

#[test]
fn constant_draws_give_the_density_itself() {
    let data = mini_data();
    let model = JointModel::default();
    let s = state(&[3.8, 4.1, 4.4], [-22.0, 5.0]);
    let st = store(vec![s.clone(); 7], vec!["a".into(), "b".into(), "c".into()]);
    for (i, ind) in data.iter().enumerate() {
        let mut one = s.clone();
        one.x = DMatrix::from_element(1, 1, s.x[(0, i)]);
        let want = log_kernel(&model, ind, &one);
        let got = log_cpo_hat(&model, ind, i, &st, CpoKernel::Conditional).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn two_draws_give_the_harmonic_mean() {
    let ind = &mini_data()[0];
    let model = JointModel::default();
    let (s1, s2) = (state(&[3.6], [-22.0, 5.0]), state(&[4.3], [-20.0, 4.5]));
    let (d1, d2) = (log_kernel(&model, ind, &s1).exp(), log_kernel(&model, ind, &s2).exp());
    let st = store(vec![s1, s2], vec!["a".into()]);
    let got = log_cpo_hat(&model, ind, 0, &st, CpoKernel::Conditional).unwrap().exp();
    let want = 2.0 / (1.0 / d1 + 1.0 / d2);
    assert!((got - want).abs() < 1e-12 * want);
}

#[test]
fn cpo_ignores_draw_order_and_lpml_scales() {
    let data = mini_data();
    let model = JointModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut draws: Vec<ParameterState> = (0..50)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(3.0..5.0)).collect();
            state(&x, [rng.random_range(-25.0..-18.0), rng.random_range(4.0..6.0)])
        })
        .collect();
    let ids: Vec<String> = data.iter().map(|d| d.id.clone()).collect();
    let a = cpo_report(&model, &data, &store(draws.clone(), ids.clone()), CpoKernel::Conditional).unwrap();
    draws.reverse();
    draws.swap(3, 40);
    let b = cpo_report(&model, &data, &store(draws, ids), CpoKernel::Conditional).unwrap();
    for (x, y) in a.log_cpo.iter().zip(&b.log_cpo) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!((a.lpml_sum - 3.0 * a.lpml_mean).abs() < 1e-12);
    assert!(a.cpo().iter().all(|c| *c > 0.0));
}

/// Normal density of `x` with the given mean and variance.
fn npdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// Three individuals with only X_i and μ_X free: f(y_i, D_i | data₋ᵢ) by
/// quadrature over a μ grid with each X_j integrated on an inner grid. A
/// shallow outcome slope keeps the harmonic-mean estimator's variance small.
#[test]
fn cpo_matches_quadrature_on_miniature_model() {
    let data = mini_data();
    let model = JointModel::default();
    let truth = state(&[4.0, 4.0, 4.0], [-6.0, 1.5]);
    let (mu0, c) = (4.0, 0.25);
    let sx = truth.sigma_x[(0, 0)];

    let mut cfg = FitConfig::default();
    cfg.schedule = Schedule::new(101_000, 1_000, 1);
    cfg.seed = 21;
    cfg.init = Some(truth.clone());
    cfg.hyper.mu_mean = VectorSpec::Fill(mu0);
    cfg.hyper.mu_cov = MatrixSpec::ScaledIdentity(c);
    let mut fixed = FixedBlocks::all(2, 3);
    fixed.mu_x = false;
    fixed.x.clear();
    cfg.fixed = fixed;
    let chain = run_chain(&data, &cfg).unwrap();
    let report = cpo_report(&model, &data, &chain, CpoKernel::Conditional).unwrap();

    let (xs, hx) = {
        let n = 2001;
        let h = 8.0 / (n - 1) as f64;
        ((0..n).map(|k| h * k as f64).collect::<Vec<f64>>(), h)
    };
    let (mus, hm) = {
        let n = 801;
        let h = 6.0 / (n - 1) as f64;
        ((0..n).map(|k| 1.0 + h * k as f64).collect::<Vec<f64>>(), h)
    };
    let kernels: Vec<Vec<f64>> = data
        .iter()
        .map(|ind| {
            xs.iter()
                .map(|&x| {
                    let mut s = truth.clone();
                    s.x = DMatrix::from_element(1, 1, x);
                    log_kernel(&model, ind, &s).exp()
                })
                .collect()
        })
        .collect();
    // g[i][μ] = ∫ f(y_i, D_i | x) N(x; μ, σ²_X) dx
    let g: Vec<Vec<f64>> = kernels
        .iter()
        .map(|k| {
            mus.iter()
                .map(|&mu| xs.iter().zip(k).map(|(&x, &f)| f * npdf(x, mu, sx)).sum::<f64>() * hx)
                .collect()
        })
        .collect();
    for i in 0..3 {
        let w: Vec<f64> = (0..mus.len())
            .map(|k| npdf(mus[k], mu0, c) * (0..3).filter(|&j| j != i).map(|j| g[j][k]).product::<f64>())
            .collect();
        let z: f64 = w.iter().sum::<f64>() * hm;
        let cpo = w.iter().zip(&g[i]).map(|(a, b)| a * b).sum::<f64>() * hm / z;
        let got = report.log_cpo[i].exp();
        assert!((got / cpo - 1.0).abs() < 0.05, "individual {i}: chain {got}, quadrature {cpo}");
    }
}

#[test]
fn prediction_matches_direct_average() {
    let ind = Individual::intercept_only("a", vec![5.0], vec![2.0], 1.0).unwrap();
    let model = JointModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws: Vec<ParameterState> = (0..100)
        .map(|_| state(&[rng.random_range(2.0..6.0)], [rng.random_range(-30.0..-10.0), rng.random_range(2.0..8.0)]))
        .collect();
    let want = draws.iter().map(|s| logistic(s.beta[0] + s.beta[1] * s.x[(0, 0)])).sum::<f64>() / 100.0;
    let got = predict_outcome_prob(&model, &ind, 0, &store(draws, vec!["a".into()])).unwrap();
    assert!((got - want).abs() < 1e-12);

    let zero = vec![state(&[0.0], [0.0, 1.0]); 3];
    assert_eq!(predict_outcome_prob(&model, &ind, 0, &store(zero, vec!["a".into()])).unwrap(), 0.5);
    let sat = vec![state(&[1.0], [0.0, 50.0]), state(&[1.0], [0.0, -50.0])];
    let p = predict_outcome_prob(&model, &ind, 0, &store(sat, vec!["a".into()])).unwrap();
    assert!((p - 0.5).abs() < 1e-12);
}

#[test]
fn prediction_needs_bernoulli_family() {
    let ind = Individual::intercept_only("a", vec![5.0], vec![2.0], 1.0).unwrap();
    let model = JointModel::new(Family::Poisson, ErrorModel::Car1);
    let st = store(vec![state(&[4.0], [0.0, 1.0])], vec!["a".into()]);
    assert!(predict_outcome_prob(&model, &ind, 0, &st).is_err());
}

fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (s1, l1) in scores.iter().zip(labels) {
        for (s0, l0) in scores.iter().zip(labels) {
            if *l1 == 1.0 && *l0 == 0.0 {
                pairs += 1.0;
                wins += if s1 > s0 {
                    1.0
                } else if s1 == s0 {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..30)
        .prop_flat_map(|n| (prop::collection::vec(0u8..6, n), prop::collection::vec(any::<bool>(), n)))
        .prop_filter("both classes", |(_, l)| l.iter().any(|b| *b) && l.iter().any(|b| !*b))
        .prop_map(|(s, l)| {
            (
                s.into_iter().map(|v| v as f64 / 5.0).collect(),
                l.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
            )
        })
}

proptest! {
    #[test]
    fn auc_matches_pair_counting((scores, labels) in scored_labels()) {
        let roc = roc_auc(&scores, &labels).unwrap();
        prop_assert!((roc.auc - brute_auc(&scores, &labels)).abs() < 1e-12);
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert!((roc_auc(&warped, &labels).unwrap().auc - roc.auc).abs() < 1e-12);
    }

    #[test]
    fn classification_counts_and_cutoff_sweep((scores, labels) in scored_labels()) {
        let mut last: Option<(f64, f64)> = None;
        for k in 0..=20 {
            let cutoff = k as f64 / 20.0;
            let r = classify(&scores, &labels, cutoff).unwrap();
            let total: usize = r.confusion.iter().flatten().sum();
            prop_assert_eq!(total, scores.len());
            prop_assert!((0.0..=1.0).contains(&r.error_rate));
            let (sens, spec) = (r.sensitivity().unwrap(), r.specificity().unwrap());
            if k == 0 {
                prop_assert_eq!((sens, spec), (1.0, 0.0));
            }
            if let Some((ps, pp)) = last {
                prop_assert!(sens <= ps && spec >= pp);
            }
            last = Some((sens, spec));
        }
        let r = classify(&scores, &labels, 1.01_f64.min(1.0)).unwrap();
        prop_assert!(r.sensitivity().unwrap() <= 1.0);
    }
}

#[test]
fn ties_at_cutoff_count_as_normal() {
    let r = classify(&[0.5, 0.5, 0.5], &[1.0, 0.0, 1.0], 0.5).unwrap();
    assert_eq!(r.confusion, [[2, 0], [1, 0]]);
}

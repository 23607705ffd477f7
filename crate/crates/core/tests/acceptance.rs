//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL`
//! line with the measured quantities to stderr before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use joint_nlme::diagnostics::geweke_z;
use joint_nlme::io::{persist_chain, x_companion_path};
use joint_nlme::model::{
    build_error_cov, growth_mean, logistic, ErrorCovFactor, ErrorModel, Family, HyperSpec, Hyperparameters,
    Individual, JointModel, MatrixSpec, ParameterState, VectorSpec,
};
use joint_nlme::sampler::{
    draw_mu_x, draw_sigma_eps, draw_sigma_x, gibbs_sweep, run_chain, stream_rng, FitConfig, FixedBlocks, Schedule,
};
use joint_nlme::simulator::{
    run_replication_study, simulate_dataset, ReplicationReport, SimDesign, Variant, BUNDLED_DESIGN_SEED,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};

/// Writes straight to the stderr handle, which the test harness does not
/// capture, so the line shows up in a plain `cargo test` run.
fn verdict(n: usize, ok: bool, detail: String) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(ok, "criterion {n} failed: {detail}");
}

/// Sample mean, and the standard error of the sample variance from the
/// fourth central moment.
fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m, m2, ((m4 - m2 * m2) / n).sqrt())
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_1_conjugate_draws() {
    let start = Instant::now();
    let mut spec = HyperSpec::default();
    spec.mu_mean = VectorSpec::Fill(1.0);
    spec.mu_cov = MatrixSpec::ScaledIdentity(2.0);
    spec.sigma_x_df = 6.0;
    spec.sigma_x_scale = MatrixSpec::ScaledIdentity(0.5);
    spec.sigma_eps_shape = 3.0;
    spec.sigma_eps_rate = 0.5;
    let hyper: Hyperparameters = spec.resolve(2, 1, 2).unwrap();
    let x = DMatrix::from_row_slice(1, 5, &[3.2, 4.1, 3.7, 4.6, 3.9]);
    let (m, sum): (f64, f64) = (5.0, 19.5);
    let sigma_x = DMatrix::from_element(1, 1, 0.4);
    let mu = DVector::from_element(1, 3.8);
    let n = 100_000;
    let mut rng = stream_rng(101, 0);

    // μ_X: precision 1/2 + 5/0.4, mean (1/2 + 19.5/0.4) / precision.
    let prec = 0.5 + m / 0.4;
    let mu_truth = ((0.5 * 1.0 + sum / 0.4) / prec, 1.0 / prec);
    let mu_draws: Vec<f64> = (0..n).map(|_| draw_mu_x(&x, &sigma_x, &hyper, &mut rng).unwrap()[0]).collect();

    // Σ_X (q = 1): IG((v + m)/2, (vV + Σ(X_i - μ)²)/2).
    let ss: f64 = x.iter().map(|v| (v - 3.8).powi(2)).sum();
    let (a, b) = ((6.0 + m) / 2.0, (6.0 * 0.5 + ss) / 2.0);
    let sx_truth = (b / (a - 1.0), b * b / ((a - 1.0).powi(2) * (a - 2.0)));
    let sx_draws: Vec<f64> = (0..n).map(|_| draw_sigma_x(&x, &mu, &hyper, &mut rng).unwrap()[(0, 0)]).collect();

    // σ²_ε: IG(3 + 12/2, 0.5 + 2.4/2).
    let (a, b): (f64, f64) = (3.0 + 6.0, 0.5 + 1.2);
    let se_truth = (b / (a - 1.0), b * b / ((a - 1.0).powi(2) * (a - 2.0)));
    let se_draws: Vec<f64> = (0..n).map(|_| draw_sigma_eps(12, 2.4, &hyper, &mut rng).unwrap()).collect();

    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for (name, draws, (mean, var)) in [("mu_x", &mu_draws, mu_truth), ("sigma_x", &sx_draws, sx_truth), ("sigma2_eps", &se_draws, se_truth)] {
        let (em, ev, ev_se) = moments(draws);
        let zm = (em - mean) / (var / n as f64).sqrt();
        let zv = (ev - var) / ev_se;
        worst = worst.max(zm.abs()).max(zv.abs());
        detail += &format!("{name} z(mean)={zm:.2} z(var)={zv:.2}; ");
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(1, worst < 4.0 && secs < 10.0, format!("{detail}max |z| {worst:.2} < 4, {secs:.1}s < 10s"));
}

// ---------------------------------------------------------------- criterion 2

const MINI_TIMES: [[f64; 2]; 3] = [[5.0, 20.0], [10.0, 30.0], [15.0, 40.0]];

struct Mini {
    y: [[f64; 2]; 3],
    d: [f64; 3],
    x: [f64; 3],
    alpha2: f64,
    beta: [f64; 2],
    mu: f64,
    s2x: f64,
    s2e: f64,
    rho: f64,
    prior: (f64, f64),
}

impl Mini {
    /// Unnormalized log posterior of (α₁, X₁), written out longhand: 2 × 2
    /// CAR(1) inverse in closed form, logistic growth, Bernoulli-logit.
    fn log_post(&self, a1: f64, x1: f64) -> f64 {
        let mut lp = -0.5 * (a1 - self.prior.0).powi(2) / self.prior.1;
        lp -= 0.5 * (x1 - self.mu).powi(2) / self.s2x;
        for i in 0..3 {
            let xi = if i == 0 { x1 } else { self.x[i] };
            let t = MINI_TIMES[i];
            let g = |tt: f64| xi / (1.0 + (-(tt - a1) / self.alpha2).exp());
            let r = [self.y[i][0] - g(t[0]), self.y[i][1] - g(t[1])];
            let c = self.rho.powf(t[1] - t[0]);
            let quad = (r[0] * r[0] - 2.0 * c * r[0] * r[1] + r[1] * r[1]) / (1.0 - c * c);
            lp -= 0.5 * quad / self.s2e;
        }
        let eta = self.beta[0] + self.beta[1] * x1;
        lp + self.d[0] * eta - (1.0 + eta.exp()).ln()
    }
}

#[test]
fn criterion_2_grid_oracle_posterior() {
    let start = Instant::now();
    let mini = Mini {
        y: [[0.9, 3.2], [1.5, 4.3], [1.2, 3.6]],
        d: [1.0, 0.0, 1.0],
        x: [4.0, 4.5, 3.8],
        alpha2: 7.0,
        beta: [-6.0, 1.5],
        mu: 4.0,
        s2x: 0.3,
        s2e: 0.2,
        rho: 0.8,
        prior: (15.0, 4.0),
    };
    let data: Vec<Individual> = (0..3)
        .map(|i| Individual::intercept_only(format!("m{i}"), MINI_TIMES[i].to_vec(), mini.y[i].to_vec(), mini.d[i]).unwrap())
        .collect();

    let mut cfg = FitConfig::default();
    cfg.hyper.alpha_mean = VectorSpec::Values(vec![15.0, 7.0]);
    cfg.hyper.alpha_cov = MatrixSpec::Diagonal(vec![4.0, 1.0]);
    let n = 100_000;
    cfg.schedule = Schedule::new(n + 2_000, 2_000, 1);
    cfg.seed = 2024;
    let mut fixed = FixedBlocks::all(2, 3);
    fixed.alpha = vec![1];
    fixed.x = vec![1, 2];
    cfg.fixed = fixed;
    cfg.init = Some(ParameterState {
        alpha: DVector::from_vec(vec![15.0, mini.alpha2]),
        beta: DVector::from_vec(mini.beta.to_vec()),
        mu_x: DVector::from_element(1, mini.mu),
        sigma_x: DMatrix::from_element(1, 1, mini.s2x),
        sigma2_eps: mini.s2e,
        rho: mini.rho,
        phi: 1.0,
        x: DMatrix::from_row_slice(1, 3, &mini.x),
    });
    let store = run_chain(&data, &cfg).unwrap();
    let mut draws = store.scalar("alpha[1]").unwrap();
    draws.sort_by(f64::total_cmp);

    // Dense grid over (α₁, X₁), X₁ integrated out.
    let (alo, ahi, na) = (0.0, 30.0, 6_001);
    let (xlo, xhi, nx) = (0.5, 8.0, 1_501);
    let ha = (ahi - alo) / (na - 1) as f64;
    let hx = (xhi - xlo) / (nx - 1) as f64;
    let logs: Vec<Vec<f64>> = (0..na)
        .map(|i| (0..nx).map(|j| mini.log_post(alo + ha * i as f64, xlo + hx * j as f64)).collect())
        .collect();
    let top = logs.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let marg: Vec<f64> = logs.iter().map(|row| row.iter().map(|l| (l - top).exp()).sum::<f64>()).collect();
    let mut cdf = vec![0.0; na];
    for i in 1..na {
        cdf[i] = cdf[i - 1] + 0.5 * ha * (marg[i] + marg[i - 1]);
    }
    let total = cdf[na - 1];
    let grid_mean = (0..na).map(|i| (alo + ha * i as f64) * marg[i]).sum::<f64>() / marg.iter().sum::<f64>();
    let grid_cdf = |v: f64| {
        let pos = ((v - alo) / ha).clamp(0.0, (na - 1) as f64);
        let i = (pos.floor() as usize).min(na - 2);
        let f = pos - i as f64;
        (cdf[i] * (1.0 - f) + cdf[i + 1] * f) / total
    };
    let nf = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let g = grid_cdf(v);
            (g - i as f64 / nf).abs().max((g - (i + 1) as f64 / nf).abs())
        })
        .fold(0.0, f64::max);
    let chain_mean = draws.iter().sum::<f64>() / nf;
    let secs = start.elapsed().as_secs_f64();
    let ok = (chain_mean - grid_mean).abs() < 0.05 && ks < 0.02 && secs < 120.0;
    verdict(
        2,
        ok,
        format!("alpha[1] mean {chain_mean:.4} vs grid {grid_mean:.4} (< 0.05), KS {ks:.4} (< 0.02), {secs:.1}s"),
    );
}

// ------------------------------------------------------------ criteria 3 to 6

fn study() -> &'static (Vec<ReplicationReport>, f64) {
    static STUDY: OnceLock<(Vec<ReplicationReport>, f64)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let start = Instant::now();
        let variant = |name: &str, em| {
            let mut config = FitConfig::default();
            config.schedule = Schedule::new(50_000, 5_000, 10);
            config.error_model = em;
            Variant {
                name: name.into(),
                config,
            }
        };
        let reports = run_replication_study(
            &SimDesign::bundled(BUNDLED_DESIGN_SEED),
            20,
            &[variant("car1", ErrorModel::Car1), variant("independent", ErrorModel::Independent)],
        )
        .unwrap();
        (reports, start.elapsed().as_secs_f64())
    })
}

fn param(r: &ReplicationReport, name: &str) -> (f64, f64) {
    let p = r.parameter(name).unwrap();
    (p.mean, p.coverage)
}

#[test]
fn criterion_3_bias_signature() {
    let (reports, secs) = study();
    let (car1, indep) = (&reports[0], &reports[1]);
    let (cb1, cc1) = param(car1, "beta[1]");
    let (cb2, cc2) = param(car1, "beta[2]");
    let (ib1, _) = param(indep, "beta[1]");
    let (ib2, ic2) = param(indep, "beta[2]");
    let a = (4.0..=6.3).contains(&cb2) && (-24.0..=-15.0).contains(&cb1);
    let b = ib2 < 4.0 && ib1 > -16.0;
    let c = cc1 >= 0.8 && cc2 >= 0.8;
    let d = ic2 <= 0.6;
    let failures = car1.failures.len() + indep.failures.len();
    let tag = |ok: bool| if ok { "ok" } else { "MISS" };
    verdict(
        3,
        a && b && c && d && failures == 0,
        format!(
            "(a) correct beta2 {cb2:.3} in [4, 6.3], beta1 {cb1:.3} in [-24, -15]: {}; \
             (b) misspecified beta2 {ib2:.3} < 4, beta1 {ib1:.3} > -16: {}; \
             (c) correct coverage {cc1:.2}/{cc2:.2} >= 0.8: {}; \
             (d) misspecified beta2 coverage {ic2:.2} <= 0.6: {}; \
             {failures} failed replicates; study {:.0}s (target 2700s)",
            tag(a),
            tag(b),
            tag(c),
            tag(d),
            secs
        ),
    );
}

#[test]
fn criterion_4_lpml_ordering() {
    let (reports, _) = study();
    let (car1, indep) = (&reports[0], &reports[1]);
    let mut wins = 0;
    let mut paired = 0;
    for f in &car1.fits {
        if let Some(g) = indep.fits.iter().find(|g| g.replicate == f.replicate) {
            paired += 1;
            wins += (f.lpml_sum > g.lpml_sum) as usize;
        }
    }
    let share = wins as f64 / paired.max(1) as f64;
    verdict(4, paired > 0 && share >= 0.8, format!("correct LPML higher in {wins}/{paired} replicates ({share:.2} >= 0.80)"));
}

#[test]
fn criterion_5_classification_quality() {
    let (reports, _) = study();
    let fits = &reports[0].fits;
    let n = fits.len().max(1) as f64;
    let auc = fits.iter().map(|f| f.auc).sum::<f64>() / n;
    let err = fits.iter().map(|f| f.error_rate).sum::<f64>() / n;
    verdict(5, !fits.is_empty() && auc >= 0.90 && err <= 0.20, format!("mean AUC {auc:.4} >= 0.90, mean error rate {err:.4} <= 0.20"));
}

#[test]
fn criterion_6_longitudinal_recovery() {
    let (reports, _) = study();
    let car1 = &reports[0];
    let bands = [("mu_x[1]", 3.9, 4.1), ("alpha[1]", 14.3, 15.7), ("alpha[2]", 6.3, 7.7), ("rho", 0.78, 0.95)];
    let mut ok = true;
    let mut detail = String::new();
    for (name, lo, hi) in bands {
        let (m, _) = param(car1, name);
        ok &= (lo..=hi).contains(&m);
        detail += &format!("{name} {m:.4} in [{lo}, {hi}]; ");
    }
    verdict(6, ok, detail);
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_car1_properties() {
    let start = Instant::now();
    let mut rng = stream_rng(77, 0);
    let model = JointModel::new(Family::Bernoulli, ErrorModel::Car1);
    let (mut asym, mut unfactored, mut worst_rel) = (0, 0, 0.0f64);
    for _ in 0..1_000 {
        let n = rng.random_range(1..=8usize);
        let mut times = vec![rng.random_range(0.0..40.0)];
        for _ in 1..n {
            let last = times[times.len() - 1];
            times.push(last + rng.random_range(0.1..15.0));
        }
        let rho = rng.random_range(0.0..=0.999);
        let sigma2 = 10f64.powf(rng.random_range(-3.0..3.0));
        let cov = build_error_cov(sigma2, rho, &times).unwrap();
        asym += (cov != cov.transpose()) as usize;
        if cov.clone().cholesky().is_none() {
            unfactored += 1;
            continue;
        }

        let (a1, a2, x) = (rng.random_range(5.0..30.0), rng.random_range(2.0..12.0), rng.random_range(1.0..7.0));
        let g = growth_mean(&[a1, a2], x, &times).unwrap();
        let l = ErrorCovFactor::new(rho, &times).unwrap().lower();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = l * z * sigma2.sqrt();
        let y: Vec<f64> = g.iter().zip(e.iter()).map(|(m, e)| m + e).collect();
        let ind = Individual::intercept_only("c", times.clone(), y.clone(), 0.0).unwrap();
        let state = ParameterState {
            alpha: DVector::from_vec(vec![a1, a2]),
            beta: DVector::from_vec(vec![0.0, 0.0]),
            mu_x: DVector::from_element(1, 4.0),
            sigma_x: DMatrix::from_element(1, 1, 0.2),
            sigma2_eps: sigma2,
            rho,
            phi: 1.0,
            x: DMatrix::from_element(1, 1, x),
        };
        let ll = model.longit_loglik(&ind, &state, 0).unwrap();
        let inv = cov.clone().try_inverse().unwrap();
        let r = DVector::from_iterator(n, y.iter().zip(&g).map(|(a, b)| a - b));
        let quad = (r.transpose() * inv * &r)[(0, 0)];
        let want = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + quad);
        worst_rel = worst_rel.max((ll - want).abs() / want.abs().max(1.0));
    }
    let mut identity_ok = true;
    for n in 1..=6 {
        let times: Vec<f64> = (0..n).map(|k| 1.5 * k as f64).collect();
        for s2 in [1e-3, 0.2, 1.0, 1e3] {
            identity_ok &= build_error_cov(s2, 0.0, &times).unwrap() == DMatrix::identity(n, n) * s2;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        7,
        asym == 0 && unfactored == 0 && identity_ok && worst_rel < 1e-10 && secs < 5.0,
        format!(
            "1000 draws: {asym} asymmetric, {unfactored} unfactorable; rho = 0 identity scaling {identity_ok}; \
             max relative log-density error {worst_rel:.2e} < 1e-10; {secs:.2}s"
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_geweke_calibration() {
    let start = Instant::now();
    let passes_over = |seeds: std::ops::Range<u64>| {
        seeds
            .filter(|&s| {
                let mut rng = stream_rng(s, 0);
                let v: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
                geweke_z(&v, 0.1, 0.5).unwrap().abs() < 1.96
            })
            .count()
    };
    let passes = passes_over(0..100);
    // Context only: at the nominal 0.95 a 100-seed count falls below 93
    // about one time in eight.
    let long_run = passes_over(100..2_100) as f64 / 2_000.0;
    let mut rng = stream_rng(1_000, 8);
    let drift: Vec<f64> = (0..5_000)
        .map(|i| i as f64 / 1_000.0 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let z = geweke_z(&drift, 0.1, 0.5).unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        passes >= 93 && z.abs() > 5.0 && secs < 10.0,
        format!("i.i.d. pass rate {passes}/100 >= 93 (over 2000 further seeds {long_run:.3}); drifting chain |z| = {:.2} > 5; {secs:.2}s", z.abs()),
    );
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_determinism() {
    let mut design = SimDesign::bundled(BUNDLED_DESIGN_SEED);
    design.rows.truncate(60);
    let data = simulate_dataset(&design).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let fit = |parallel: bool, tag: &str| {
        let mut cfg = FitConfig::default();
        cfg.schedule = Schedule::new(600, 100, 5);
        cfg.seed = 99;
        cfg.parallel = parallel;
        let path = tmp.path().join(format!("{tag}.csv"));
        persist_chain(&run_chain(&data, &cfg).unwrap(), &path).unwrap();
        (std::fs::read(&path).unwrap(), std::fs::read(x_companion_path(&path)).unwrap())
    };
    let serial = [fit(false, "s1"), fit(false, "s2")];
    let parallel = [fit(true, "p1"), fit(true, "p2")];
    let same = serial[0] == serial[1] && parallel[0] == parallel[1] && serial[0] == parallel[0];
    verdict(9, same, format!("serial, serial again, parallel, parallel again identical: {same}"));
}

// --------------------------------------------------------------- criterion 10

/// Draw (θ, data) from the joint prior on a three-person design, take one
/// sweep from θ, and compare moments of the output with those of θ. One
/// sweep of a kernel that preserves the posterior maps prior draws to prior
/// draws, so every paired difference has mean zero.
#[test]
fn criterion_10_joint_distribution() {
    let start = Instant::now();
    let mut spec = HyperSpec::default();
    spec.alpha_mean = VectorSpec::Values(vec![15.0, 7.0]);
    spec.alpha_cov = MatrixSpec::Diagonal(vec![1.0, 0.25]);
    spec.mu_mean = VectorSpec::Fill(4.0);
    spec.mu_cov = MatrixSpec::ScaledIdentity(0.25);
    spec.sigma_x_df = 10.0;
    spec.sigma_x_scale = MatrixSpec::ScaledIdentity(0.2);
    spec.sigma_eps_shape = 5.0;
    spec.sigma_eps_rate = 1.0;
    spec.beta_mean = VectorSpec::Values(vec![-22.0, 5.0]);
    spec.beta_cov = MatrixSpec::Diagonal(vec![4.0, 0.25]);
    spec.rho_upper = 0.999;
    let hyper = spec.resolve(2, 1, 2).unwrap();
    let model = JointModel::new(Family::Bernoulli, ErrorModel::Car1);
    let mut rng = stream_rng(10, 0);
    let names = ["alpha[1]", "alpha[2]", "beta[1]", "beta[2]", "mu_x", "sigma_x", "sigma2_eps", "rho", "x[1]"];
    let n = 200_000;
    // Per tested quantity: sums of the paired difference and its square.
    let mut acc = vec![(0.0, 0.0); 2 * names.len()];
    for k in 0..n {
        let mut nrm = || rng.sample::<f64, _>(StandardNormal);
        let alpha = DVector::from_vec(vec![15.0 + nrm(), 7.0 + 0.5 * nrm()]);
        let beta = DVector::from_vec(vec![-22.0 + 2.0 * nrm(), 5.0 + 0.5 * nrm()]);
        let mu = 4.0 + 0.5 * nrm();
        // IW(10, 10 · 0.2) in one dimension is IG(5, 1).
        let s2x: f64 = 1.0 / rng.sample(Gamma::new(5.0, 1.0).unwrap());
        let s2e: f64 = 1.0 / rng.sample(Gamma::new(5.0, 1.0).unwrap());
        let rho = rng.random::<f64>() * 0.999;
        let x: Vec<f64> = (0..3).map(|_| mu + s2x.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let data: Vec<Individual> = (0..3)
            .map(|i| {
                let times = MINI_TIMES[i].to_vec();
                let g = growth_mean(alpha.as_slice(), x[i], &times).unwrap();
                let c = rho.powf(times[1] - times[0]);
                let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let e = [z1, c * z1 + (1.0 - c * c).sqrt() * z2];
                let y = vec![g[0] + s2e.sqrt() * e[0], g[1] + s2e.sqrt() * e[1]];
                let d = if rng.random::<f64>() < logistic(beta[0] + beta[1] * x[i]) { 1.0 } else { 0.0 };
                Individual::intercept_only(format!("j{i}"), times, y, d).unwrap()
            })
            .collect();
        let state = ParameterState {
            alpha,
            beta,
            mu_x: DVector::from_element(1, mu),
            sigma_x: DMatrix::from_element(1, 1, s2x),
            sigma2_eps: s2e,
            rho,
            phi: 1.0,
            x: DMatrix::from_row_slice(1, 3, &x),
        };
        let mut cfg = FitConfig::default();
        cfg.seed = k as u64 + 1;
        let next = gibbs_sweep(&model, &data, &hyper, &cfg, &state).unwrap();
        let flat = |s: &ParameterState| {
            [s.alpha[0], s.alpha[1], s.beta[0], s.beta[1], s.mu_x[0], s.sigma_x[(0, 0)], s.sigma2_eps, s.rho, s.x[(0, 0)]]
        };
        let (after, before) = (flat(&next), flat(&state));
        for j in 0..names.len() {
            for (slot, d) in [(j, after[j] - before[j]), (names.len() + j, after[j].powi(2) - before[j].powi(2))] {
                acc[slot].0 += d;
                acc[slot].1 += d * d;
            }
        }
    }
    let nf = n as f64;
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for (slot, &(s, ss)) in acc.iter().enumerate() {
        let mean = s / nf;
        let sd = (ss / nf - mean * mean).max(0.0).sqrt();
        let z = if sd > 0.0 { mean / (sd / nf.sqrt()) } else { 0.0 };
        worst = worst.max(z.abs());
        let (name, power) = (names[slot % names.len()], 1 + slot / names.len());
        detail += &format!("{name}^{power} {z:.2} ");
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(10, worst < 4.0 && secs < 300.0, format!("paired z: {detail}; max |z| {worst:.2} < 4; {secs:.0}s"));
}

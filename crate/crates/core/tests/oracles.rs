//! Statistical checks of the closed forms and estimators against simulation.

use uncertain_eval::leaderboard::attach_variance;
use uncertain_eval::simulator::{simulate_predictions, MeanDistribution};
use uncertain_eval::stats::Moments;
use uncertain_eval::uncertainty::{fit_population_sigma_with, SigmaBias};
use uncertain_eval::{
    derive_rng, draw_sigma, estimate_from_trials, mc_metric_distribution, mse_distribution, rmse_distribution,
    simulate, trial_metric_series, Approach, AuditConfig, FitFamily, Gaussian, LeaderboardEntry, Metric,
    PropagationSums, Scale, SimConfig, UncertainRating, UncertaintyModel,
};

fn continuous(users: usize, items: usize, trials: u32, sigma_model: UncertaintyModel, seed: u64) -> SimConfig {
    SimConfig {
        users,
        items,
        trials,
        scale: Scale::five_star(),
        mean_distribution: MeanDistribution::Uniform { low: 1.5, high: 4.5 },
        sigma_model,
        discretize: false,
        seed,
    }
}

#[test]
fn estimates_are_unbiased_up_to_the_ml_factor() {
    let model = UncertaintyModel::uniform(Scale::five_star(), 1.0).unwrap();
    let t = 5u32;
    let sim = simulate(&continuous(100, 100, t, model, 21)).unwrap();
    let est = estimate_from_trials(&sim.trials).unwrap();
    let mut truth = sim.truth.clone();
    truth.sort_by(|a, b| (&a.user, &a.item).cmp(&(&b.user, &b.item)));
    let mut mean_err = Moments::new();
    let (mut est_var, mut true_var) = (0.0, 0.0);
    for (e, g) in est.iter().zip(&truth) {
        assert_eq!((&e.user, &e.item), (&g.user, &g.item));
        mean_err.push(e.density.mean() - g.density.mean());
        est_var += e.density.variance();
        true_var += g.density.variance();
    }
    let se = (mean_err.ml_variance() / mean_err.count() as f64).sqrt();
    assert!(
        mean_err.mean().abs() < 4.0 * se,
        "mean bias {} (se {se})",
        mean_err.mean()
    );
    // E[ML variance] = (T - 1)/T · σ²
    let ratio = est_var / true_var * t as f64 / (t as f64 - 1.0);
    assert!((ratio - 1.0).abs() < 0.02, "variance ratio {ratio}");
}

#[test]
fn population_sigma_round_trip() {
    let scale = Scale::five_star();
    let model = UncertaintyModel::uniform(scale, 1.0).unwrap();
    let sim = simulate(&continuous(100, 100, 5, model, 22)).unwrap();
    let truth_mean = sim.truth.iter().map(|r| r.density.std_dev()).sum::<f64>() / sim.truth.len() as f64;
    let est = estimate_from_trials(&sim.trials).unwrap();
    let corrected = fit_population_sigma_with(&est, scale, FitFamily::Beta, SigmaBias::SmallSampleCorrected).unwrap();
    let raw = fit_population_sigma_with(&est, scale, FitFamily::Beta, SigmaBias::Raw).unwrap();
    let rel = (corrected.raw_moment(1) - truth_mean).abs() / truth_mean;
    assert!(rel < 0.05, "fitted mean σ {} vs {truth_mean}", corrected.raw_moment(1));
    // five trials bias the raw ML σ low by roughly 16%
    assert!(raw.raw_moment(1) < corrected.raw_moment(1));
}

#[test]
fn per_trial_rmse_spread_matches_closed_form() {
    let scale = Scale::five_star();
    let model = UncertaintyModel::uniform(scale, 1.5).unwrap();
    let sim = simulate(&continuous(20, 20, 100, model, 23)).unwrap();
    let preds = simulate_predictions(&sim.truth, &[("s".into(), 0.7)], 23).unwrap();
    let series = trial_metric_series(&sim.trials, &preds, Metric::Rmse).unwrap();
    let mut m = Moments::new();
    m.extend(series[0].values.iter().copied());
    let ratings: Vec<UncertainRating> = sim
        .truth
        .iter()
        .map(|r| r.clone().with_predictor(preds.get("s", &r.user, &r.item).unwrap()))
        .collect();
    let analytic = rmse_distribution(&ratings).unwrap().gaussian;
    let ratio = m.ml_variance() / analytic.variance();
    assert!((0.5..=2.0).contains(&ratio), "trial variance ratio {ratio}");
    assert!((m.mean() - analytic.mean()).abs() / analytic.mean() < 0.01);
}

fn ratings(n: usize, seed: u64) -> Vec<UncertainRating> {
    let mut rng = derive_rng(seed, 0);
    let unit = Gaussian::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|v| {
            let sigma = 0.2 + 0.3 * unit.draw(&mut rng).abs();
            let delta = 0.9 * unit.draw(&mut rng);
            UncertainRating::new(format!("u{v}"), "i", Gaussian::from_std(3.0, sigma).unwrap())
                .with_predictor(3.0 - delta)
        })
        .collect()
}

#[test]
fn mse_moments_are_exact() {
    let rs = ratings(50, 31);
    let analytic = mse_distribution(&rs).unwrap().gaussian;
    let mc = mc_metric_distribution(&rs, Metric::Mse, 31, 200_000).unwrap().gaussian;
    assert!((analytic.mean() - mc.mean()).abs() < 4.0 * (analytic.variance() / 200_000.0).sqrt());
    assert!((analytic.variance() / mc.variance() - 1.0).abs() < 0.02);
}

#[test]
fn rmse_delta_method_is_tight_for_moderate_n() {
    for seed in 0..5 {
        let rs = ratings(200, 40 + seed);
        let analytic = rmse_distribution(&rs).unwrap().gaussian;
        let mc = mc_metric_distribution(&rs, Metric::Rmse, seed, 50_000)
            .unwrap()
            .gaussian;
        // Jensen: E[RMSE] sits slightly below √E[MSE]
        assert!(mc.mean() <= analytic.mean());
        assert!((analytic.mean() - mc.mean()) / mc.mean() < 0.005);
        assert!((analytic.std_dev() / mc.std_dev() - 1.0).abs() < 0.03);
    }
}

#[test]
fn variance_halves_when_n_doubles() {
    let model = UncertaintyModel::beta(Scale::five_star(), 2.0, 2.0).unwrap();
    let mut rng = derive_rng(50, 0);
    let var = |n: usize, rng: &mut _| {
        let mut sums = PropagationSums::new();
        for s in draw_sigma(&model, rng, n).unwrap() {
            sums.push(s * s, 0.0);
        }
        sums.rmse().unwrap().gaussian.variance()
    };
    let v1 = var(10_000, &mut rng);
    let v2 = var(20_000, &mut rng);
    assert!((0.45..=0.55).contains(&(v2 / v1)), "{}", v2 / v1);
    for (n, sigma) in [(10u64, 0.3), (1000, 1.0), (100_000, 2.0)] {
        let mut s = PropagationSums::new();
        s.push_repeated(sigma * sigma, 0.0, n);
        let v = s.rmse().unwrap().gaussian.variance();
        assert!((v - sigma * sigma / (2.0 * n as f64)).abs() <= 2.0 * f64::EPSILON * v);
    }
}

#[test]
fn approaches_a_and_b_converge() {
    let scale = Scale::five_star();
    let sim = simulate(&continuous(
        60,
        60,
        40,
        UncertaintyModel::beta(scale, 2.0, 3.0).unwrap(),
        60,
    ))
    .unwrap();
    let fitted = fit_population_sigma_with(
        &estimate_from_trials(&sim.trials).unwrap(),
        scale,
        FitFamily::Beta,
        SigmaBias::SmallSampleCorrected,
    )
    .unwrap();
    let m2 = fitted.raw_moment(2);
    let uniform = UncertaintyModel::uniform(scale, (3.0 * m2).sqrt()).unwrap();
    let entry = LeaderboardEntry::new(1, "x", 0.86);
    let n = 500_000;
    let a = attach_variance(
        &entry,
        &AuditConfig::new(n, Approach::A, 1),
        &fitted,
        &mut derive_rng(1, 0),
    )
    .unwrap();
    let b = attach_variance(
        &entry,
        &AuditConfig::new(n, Approach::B, 1),
        &uniform,
        &mut derive_rng(1, 1),
    )
    .unwrap();
    let c = attach_variance(
        &entry,
        &AuditConfig::new(n, Approach::C, 1),
        &uniform,
        &mut derive_rng(1, 2),
    )
    .unwrap();
    let (sa, sb) = (a.score_std().unwrap(), b.score_std().unwrap());
    assert!((sa / sb - 1.0).abs() < 0.05, "{sa} vs {sb}");
    let (lo, hi) = c.variance_interval.unwrap();
    assert!(lo <= sa * sa && sa * sa <= hi && lo <= sb * sb && sb * sb <= hi);
}

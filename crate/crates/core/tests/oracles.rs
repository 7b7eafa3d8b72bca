//! Monte Carlo checks against values computed independently of the crate.

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use sprint_cusum::baselines::{classical_run, golden_classical_h, np_cusum_run, ClassicalParams, NP1};
use sprint_cusum::calibration::{
    bootstrap_preliminary_limits, calibrate, estimate_alpha_hat, select_k, simulated_arl, CalibrationConfig,
    SprintFraction,
};
use sprint_cusum::cusum::summarize_runs;
use sprint_cusum::distributions::{sample_stream, DistributionKind, DistributionModel, Sampler, ShiftSpec};
use sprint_cusum::prewhiten::{
    autocovariance, example_ar_models, residuals, select_order_aic, simulate_ar, yule_walker_fit,
};
use sprint_cusum::rng::stream_rng;
use sprint_cusum::stats::{ks_two_sample, normal_cdf};

fn normal() -> DistributionModel {
    DistributionModel::in_control(DistributionKind::StandardNormal)
}

/// Inverse of `normal_cdf` by bisection.
fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn alpha_hat_on_a_large_normal_sample() {
    let phase1 = sample_stream(normal(), ShiftSpec::none(), 1_000_000, 11);
    let alpha = estimate_alpha_hat(&phase1, 0.5, 200.0).unwrap();
    let tail = 1.0 - normal_cdf(0.5);
    let exact = 1.0 / (tail * tail * 200.0);
    assert!((exact - 0.0525).abs() < 0.0005, "{exact}");
    assert!((alpha - exact).abs() < 0.001, "{alpha} vs {exact}");
}

#[test]
fn first_limit_is_a_truncated_normal_quantile() {
    let alpha = 0.0525;
    let k = 0.5;
    let mut cfg = CalibrationConfig::new(200.0, 1, 1.0);
    cfg.boot_reps = 20_000;
    cfg.seed = 3;
    let prelim = bootstrap_preliminary_limits(&normal(), k, alpha, &cfg).unwrap();
    // P(X - k > q | X > k) = alpha.
    let tail = 1.0 - normal_cdf(k);
    let exact = normal_quantile(1.0 - alpha * tail) - k;
    assert!((prelim.m[0] - exact).abs() < 0.05, "{} vs {exact}", prelim.m[0]);
}

#[test]
fn golden_classical_limit_gives_nominal_arl() {
    for k in [0.25, 0.5] {
        let h = golden_classical_h(k, 200.0).unwrap();
        let params = ClassicalParams::standard(k, h).unwrap();
        let runs: Vec<u64> = (0..100_000u64)
            .map(|i| {
                let mut rng = stream_rng(21, &[i]);
                let model = normal();
                classical_run(core::iter::repeat_with(|| model.sample(&mut rng)), &params, 1_000_000)
                    .unwrap()
                    .length
            })
            .collect();
        let arl = summarize_runs(&runs).unwrap().mean;
        assert!((196.0..=204.0).contains(&arl), "k = {k}: {arl}");
    }
}

struct ScaledT3;

impl Sampler for ScaledT3 {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        StudentT::new(3.0).unwrap().sample(rng) / 3f64.sqrt()
    }
}

#[test]
fn np_chart_is_distribution_free_for_symmetric_data() {
    let reps = 3000u64;
    let arl = |sampler: &dyn Fn(&mut sprint_cusum::rng::SimRng) -> f64, tag: u64| {
        let runs: Vec<u64> = (0..reps)
            .map(|i| {
                let mut rng = stream_rng(31, &[tag, i]);
                np_cusum_run(core::iter::repeat_with(|| sampler(&mut rng)), &NP1, 1_000_000).unwrap().length
            })
            .collect();
        summarize_runs(&runs).unwrap()
    };
    let model = normal();
    let a = arl(&|r| model.sample(r), 1);
    let b = arl(&|r| ScaledT3.sample(r), 2);
    let se = (a.se * a.se + b.se * b.se).sqrt();
    assert!((a.mean - b.mean).abs() < 3.5 * se, "{} vs {} (se {se})", a.mean, b.mean);
}

#[test]
fn aic_order_selection_rates() {
    let reps = 200;
    let mut zeros = 0;
    for i in 0..reps {
        let x = sample_stream(normal(), ShiftSpec::none(), 5000, 1000 + i);
        if select_order_aic(&x, 10).unwrap() == 0 {
            zeros += 1;
        }
    }
    // An independent simulation puts this rate at 0.717 (AIC overfits).
    let rate = zeros as f64 / reps as f64;
    assert!((0.62..=0.81).contains(&rate), "{rate}");

    let ar2 = &example_ar_models()[1];
    let mut twos = 0;
    for i in 0..100u64 {
        let mut rng = stream_rng(41, &[i]);
        let x = simulate_ar(ar2, &normal(), 5000, 500, &mut rng);
        if select_order_aic(&x, 10).unwrap() == 2 {
            twos += 1;
        }
    }
    assert!(twos > 50, "{twos}");
}

#[test]
fn residuals_of_a_correct_fit_are_white() {
    let ar1 = &example_ar_models()[2];
    let mut rng = stream_rng(51, &[]);
    let x = simulate_ar(ar1, &normal(), 5000, 500, &mut rng);
    let model = yule_walker_fit(&x, 1).unwrap();
    let res = residuals(&x, &model).unwrap();
    let band = 3.0 / (res.len() as f64).sqrt();
    let acov = autocovariance(&res, 1);
    assert!((acov[1] / acov[0]).abs() < band);
    let mean = res.iter().sum::<f64>() / res.len() as f64;
    assert!(mean.abs() < band * model.noise_var.sqrt());
    let refit = yule_walker_fit(&res, 1).unwrap();
    assert!(refit.coeffs.iter().all(|a| a.abs() < band), "{:?}", refit.coeffs);
}

#[test]
fn ks_level_is_calibrated() {
    let reps = 200;
    let mut rejections = 0;
    for i in 0..reps {
        let a = sample_stream(normal(), ShiftSpec::none(), 10_000, 2 * i);
        let b = sample_stream(normal(), ShiftSpec::none(), 10_000, 2 * i + 1);
        if ks_two_sample(&a, &b).unwrap().p < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    assert!((0.02..=0.09).contains(&rate), "{rate}");
}

#[test]
fn select_k_decreases_with_target() {
    let phase1 = sample_stream(normal(), ShiftSpec::none(), 1000, 61);
    let short = select_k(&phase1, 50, 25.0, 2000, 5).unwrap();
    let long = select_k(&phase1, 50, 50.0, 2000, 5).unwrap();
    assert!(short.k > long.k, "{} vs {}", short.k, long.k);
    assert!(short.iterations <= 30 && long.iterations <= 30);
}

#[test]
fn end_to_end_schedules_hold_the_in_control_arl() {
    // Averaged over Phase-I samples: a single m = 1000 sample can put the
    // conditional ARL well away from 200.
    for (i, kind) in [DistributionKind::StandardNormal, DistributionKind::RightSkewMix, DistributionKind::LeftSkewMix]
        .into_iter()
        .enumerate()
    {
        let model = DistributionModel::in_control(kind);
        let mut total = 0.0;
        let samples = 10u64;
        for s in 0..samples {
            let phase1 = sample_stream(model, ShiftSpec::none(), 1000, 1000 * i as u64 + s);
            let mut cfg = CalibrationConfig::with_fraction(200.0, 50, SprintFraction::ThreeQuarters);
            cfg.boot_reps = 2000;
            cfg.tune_reps = 400;
            cfg.seed = 80 + s;
            let cal = calibrate(&phase1, &cfg).unwrap();
            assert!(cal.tuning.iterations <= 15);
            let std = cal.standardization;
            let fresh = Mapped(model, std.center, std.scale);
            total += simulated_arl(&fresh, &cal.schedule, 400, 1_000_000, 90 + s);
        }
        let arl = total / samples as f64;
        assert!((160.0..=245.0).contains(&arl), "{kind:?}: {arl}");
    }
}

/// `(x - center) / scale` applied to draws from the true model.
struct Mapped(DistributionModel, f64, f64);

impl Sampler for Mapped {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        (self.0.sample(rng) - self.1) / self.2
    }
}

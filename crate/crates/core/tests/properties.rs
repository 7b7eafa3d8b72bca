use proptest::prelude::*;
use sprint_cusum::baselines::signed_rank_block;
use sprint_cusum::calibration::{conditional_quantile, interpolate_limits, order_statistic_rank, select_k_with, KSearch};
use sprint_cusum::cusum::{cusum_step, run_length, signal_check, CusumState, LimitSchedule};
use sprint_cusum::density::FittedDensity;
use sprint_cusum::distributions::{DistributionKind, DistributionModel};
use sprint_cusum::prewhiten::{autocovariance, levinson_durbin};
use sprint_cusum::stats::{ks_one_sample, ks_two_sample};

fn finite() -> impl Strategy<Value = f64> {
    -50.0f64..50.0
}

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

proptest! {
    #[test]
    fn cusum_state_invariants(xs in prop::collection::vec(finite(), 1..300), k in -2.0f64..2.0) {
        let mut state = CusumState::new();
        let mut prev_t = 0;
        for &x in &xs {
            state = cusum_step(state, x, k).unwrap();
            prop_assert!(state.c() >= 0.0);
            prop_assert_eq!(state.c() == 0.0, state.t() == 0);
            prop_assert!(state.t() == 0 || state.t() == prev_t + 1);
            prop_assert!(state.t() <= state.n());
            prev_t = state.t();
        }
        prop_assert_eq!(state.n(), xs.len() as u64);
    }

    #[test]
    fn raising_limits_never_shortens_a_run(
        xs in prop::collection::vec(-1.0f64..3.0, 50..200),
        limits in prop::collection::vec(0.5f64..5.0, 1..10),
        bump in 0.0f64..2.0,
    ) {
        let low = LimitSchedule::new(0.5, limits.clone(), limits[0]).unwrap();
        let high = low.scaled(1.0 + bump).unwrap();
        let cap = xs.len() as u64;
        let a = run_length(xs.iter().copied(), &low, cap).unwrap();
        let b = run_length(xs.iter().copied(), &high, cap).unwrap();
        prop_assert!(b.length >= a.length);
    }

    #[test]
    fn signal_needs_strict_excess(h in 0.1f64..10.0) {
        let sched = LimitSchedule::constant(0.0, h).unwrap();
        let at = CusumState::from_parts(h, 1, 1).unwrap();
        prop_assert!(!signal_check(&at, &sched));
        let above = CusumState::from_parts(h * (1.0 + 1e-12) + 1e-300, 1, 1).unwrap();
        prop_assert!(signal_check(&above, &sched));
    }

    #[test]
    fn interpolation_brackets_and_keeps_ratios(
        base in prop::collection::vec(0.5f64..5.0, 1..20),
        f_lo in 0.5f64..0.99,
        f_hi in 1.01f64..2.0,
        rl_lo in 50.0f64..199.0,
        rl_hi in 201.0f64..900.0,
    ) {
        let m = LimitSchedule::new(0.1, base.clone(), base[base.len() - 1] * 1.1).unwrap();
        let a = m.scaled(f_lo).unwrap();
        let b = m.scaled(f_hi).unwrap();
        let mid = interpolate_limits(&a, rl_lo, &b, rl_hi, 200.0).unwrap();
        for ((x, y), z) in a.limit_vector().zip(b.limit_vector()).zip(mid.limit_vector()) {
            prop_assert!(x <= z * (1.0 + 1e-12) && z <= y * (1.0 + 1e-12));
        }
        // Scalar multiples of one vector stay multiples of it.
        let r0 = mid.limits()[0] / base[0];
        for (z, m0) in mid.limits().iter().zip(&base) {
            prop_assert!((z / m0 - r0).abs() <= 1e-12 * r0);
        }
        prop_assert!(interpolate_limits(&a, rl_lo, &b, rl_lo + 1.0, rl_hi + 1.0).is_err());
    }

    #[test]
    fn signed_rank_is_antisymmetric(xs in prop::collection::vec(-10.0f64..10.0, 1..30)) {
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        prop_assert_eq!(signed_rank_block(&neg), -signed_rank_block(&xs));
    }

    #[test]
    fn signed_rank_invariant_under_odd_monotone_maps(xs in prop::collection::vec(-10.0f64..10.0, 1..30)) {
        let cubed: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        let sinh: Vec<f64> = xs.iter().map(|x| x.sinh()).collect();
        let s = signed_rank_block(&xs);
        prop_assert_eq!(signed_rank_block(&cubed), s);
        prop_assert_eq!(signed_rank_block(&sinh), s);
    }

    #[test]
    fn levinson_matches_dense_toeplitz_solve(
        series in prop::collection::vec(-5.0f64..5.0, 60..200),
        order in 1usize..6,
    ) {
        let acov = autocovariance(&series, order);
        prop_assume!(acov[0] > 1e-6);
        let fits = levinson_durbin(&acov, order).unwrap();
        let (coeffs, var) = &fits[order];
        let a: Vec<Vec<f64>> = (0..order)
            .map(|i| (0..order).map(|j| acov[i.abs_diff(j)]).collect())
            .collect();
        let dense = dense_solve(a, acov[1..=order].to_vec());
        for (x, y) in coeffs.iter().zip(&dense) {
            prop_assert!((x - y).abs() < 1e-10, "{} vs {}", x, y);
        }
        let dense_var = acov[0] - dense.iter().zip(&acov[1..]).map(|(p, g)| p * g).sum::<f64>();
        prop_assert!((var - dense_var).abs() < 1e-10 * acov[0].max(1.0));
    }

    #[test]
    fn order_statistic_matches_sort(xs in prop::collection::vec(-100.0f64..100.0, 1..400), alpha in 0.0001f64..0.9999) {
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = order_statistic_rank(xs.len(), alpha);
        prop_assert!((1..=xs.len()).contains(&rank));
        prop_assert!(rank as f64 >= xs.len() as f64 * (1.0 - alpha) - 1e-6);
        let mut work = xs.clone();
        prop_assert_eq!(conditional_quantile(&mut work, alpha), sorted[rank - 1]);
    }

    #[test]
    fn ks_two_sample_of_identical_samples_is_zero(xs in prop::collection::vec(-10.0f64..10.0, 2..100)) {
        let out = ks_two_sample(&xs, &xs).unwrap();
        prop_assert_eq!(out.d, 0.0);
        prop_assert!(out.p > 0.99);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kde_integrates_to_one(xs in prop::collection::vec(-3.0f64..3.0, 20..80)) {
        let density = FittedDensity::fit(&xs, true).unwrap();
        let h = density.bandwidth();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min) - 12.0 * h;
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 12.0 * h;
        // Composite Simpson with steps well below the bandwidth.
        let n = 2 * ((hi - lo) / (h / 40.0)).ceil() as usize;
        let step = (hi - lo) / n as f64;
        let mut s = density.density_at(lo) + density.density_at(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * density.density_at(lo + i as f64 * step);
        }
        let mass = s * step / 3.0;
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {}", mass);
    }

    #[test]
    fn larger_target_sprint_never_raises_k(t1 in 3.0f64..20.0, gap in 1.0f64..20.0) {
        let model = DistributionModel::in_control(DistributionKind::StandardNormal);
        let bounds = (model.quantile(0.25).unwrap(), 0.0, model.quantile(0.75).unwrap());
        let search = KSearch { rel_tol: 0.02, ..KSearch::default() };
        let a = select_k_with(&model, bounds, t1, 400, 9, &search).unwrap();
        let b = select_k_with(&model, bounds, t1 + gap, 400, 9, &search).unwrap();
        // Common streams make the mean first sprint monotone in k; the
        // tolerance band lets the two searches stop a little apart.
        prop_assert!(b.k <= a.k + 0.05, "{} then {}", a.k, b.k);
    }
}

#[test]
fn ks_closed_form_toy_cases() {
    // Disjoint samples: D = 1.
    let a = [1.0, 2.0, 3.0];
    let b = [4.0, 5.0, 6.0];
    assert_eq!(ks_two_sample(&a, &b).unwrap().d, 1.0);
    // 1,2,3,4 against 1.5,3.5: the ECDFs differ by at most 1/4.
    let d = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[1.5, 3.5]).unwrap().d;
    assert!((d - 0.25).abs() < 1e-15, "{d}");
    // One point at 0.5 against U(0,1): D = 1/2.
    let d = ks_one_sample(&[0.5], |x| x.clamp(0.0, 1.0)).unwrap().d;
    assert!((d - 0.5).abs() < 1e-15);
    // Midpoints (i - 1/2)/n against U(0,1): D = 1/(2n).
    let n = 20;
    let mid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let d = ks_one_sample(&mid, |x| x.clamp(0.0, 1.0)).unwrap().d;
    assert!((d - 0.5 / n as f64).abs() < 1e-15);
    // Same points shifted right by 1/(2n): D = 1/n.
    let shifted: Vec<f64> = mid.iter().map(|x| x + 0.5 / n as f64).collect();
    let d = ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0)).unwrap().d;
    assert!((d - 1.0 / n as f64).abs() < 1e-12);
}

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use serverfarm::queueing::{erlang_b, erlang_c, oracle_metrics, stationary_dist_oracle, steady_state, SystemParams};

const GRID_LAMBDA: [f64; 4] = [1.0, 10.0, 80.0, 120.0];
const GRID_MU: [f64; 2] = [1.0, 10.0];
const GRID_THETA: [f64; 3] = [0.1, 1.0, 5.0];
const GRID_N: [usize; 4] = [1, 4, 8, 16];

fn grid() -> impl Iterator<Item = SystemParams> {
    GRID_LAMBDA.into_iter().flat_map(|l| {
        GRID_MU.into_iter().flat_map(move |m| {
            GRID_THETA.into_iter().flat_map(move |t| GRID_N.into_iter().map(move |n| SystemParams::new(l, m, t, n).unwrap()))
        })
    })
}

#[test]
fn reference_case_matches_oracle() {
    let p = SystemParams::new(80.0, 10.0, 2.0, 8).unwrap();
    let s = steady_state(&p).unwrap();
    let o = oracle_metrics(&p, &stationary_dist_oracle(&p, 500).unwrap());
    assert_abs_diff_eq!(s.p0, o.p0, epsilon = 1e-8);
    assert_abs_diff_eq!(s.pn, o.pn, epsilon = 1e-8);
    assert_abs_diff_eq!(s.delay_prob, o.delay_prob, epsilon = 1e-8);
    assert_abs_diff_eq!(s.abandon_prob, o.abandon_prob, epsilon = 1e-8);
    assert_abs_diff_eq!(s.throughput, o.throughput, epsilon = 1e-8);
    assert_abs_diff_eq!(s.mean_in_system, o.mean_in_system, epsilon = 1e-8);
}

#[test]
fn overstaffed_system_rarely_waits() {
    let p = SystemParams::new(5.0, 10.0, 3.0, 50).unwrap();
    let o = oracle_metrics(&p, &stationary_dist_oracle(&p, 200).unwrap());
    assert!(o.delay_prob < 1e-6);
}

#[test]
fn oracle_is_normalized_on_grid() {
    for p in grid() {
        let probs = stationary_dist_oracle(&p, 16).unwrap();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{p:?}: {total}");
    }
}

#[test]
fn mean_in_system_matches_oracle_on_grid() {
    for p in grid() {
        let s = steady_state(&p).unwrap();
        let o = oracle_metrics(&p, &stationary_dist_oracle(&p, 64).unwrap());
        assert!((s.mean_in_system - o.mean_in_system).abs() < 1e-8 * o.mean_in_system.max(1.0), "{p:?}");
    }
}

#[test]
fn flow_balance_against_oracle_departures() {
    for p in grid() {
        let s = steady_state(&p).unwrap();
        let probs = stationary_dist_oracle(&p, 64).unwrap();
        let departures: f64 = probs.iter().enumerate().map(|(j, q)| j.min(p.n) as f64 * p.mu * q).sum();
        assert!((p.lambda * (1.0 - s.abandon_prob) - departures).abs() < 1e-8, "{p:?}");
    }
}

#[test]
fn abandonment_monotone_on_grid() {
    for mu in GRID_MU {
        for theta in GRID_THETA {
            for lambda in GRID_LAMBDA {
                let by_n: Vec<f64> =
                    GRID_N.iter().map(|&n| steady_state(&SystemParams::new(lambda, mu, theta, n).unwrap()).unwrap().abandon_prob).collect();
                assert!(by_n.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{lambda} {mu} {theta}: {by_n:?}");
            }
            for n in GRID_N {
                let by_lambda: Vec<f64> =
                    GRID_LAMBDA.iter().map(|&l| steady_state(&SystemParams::new(l, mu, theta, n).unwrap()).unwrap().abandon_prob).collect();
                assert!(by_lambda.windows(2).all(|w| w[1] >= w[0] - 1e-15), "{n} {mu} {theta}: {by_lambda:?}");
            }
        }
    }
}

#[test]
fn patience_limits() {
    for (n, rho) in [(3, 2.0), (10, 7.5), (25, 20.0)] {
        let slow = steady_state(&SystemParams::new(rho * 10.0, 10.0, 1e-6, n).unwrap()).unwrap();
        assert!((slow.delay_prob - erlang_c(n, rho).unwrap()).abs() < 1e-4);
        assert!(slow.abandon_prob < 1e-4);
        let fast = steady_state(&SystemParams::new(rho * 10.0, 10.0, 1e6, n).unwrap()).unwrap();
        assert!((fast.abandon_prob - erlang_b(n, rho).unwrap()).abs() < 1e-4);
    }
}

#[test]
fn throughput_is_capped_by_capacity() {
    let s = steady_state(&SystemParams::new(200.0, 10.0, 0.5, 4).unwrap()).unwrap();
    assert!(s.throughput <= 40.0 + 1e-12);
    let s = steady_state(&SystemParams::new(20.0, 10.0, 0.5, 4).unwrap()).unwrap();
    assert!((s.throughput - 20.0 * (1.0 - s.abandon_prob)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_agrees_with_oracle(
        lambda in 0.5f64..150.0,
        mu in 0.5f64..12.0,
        theta in 0.05f64..6.0,
        n in 1usize..24,
    ) {
        let p = SystemParams::new(lambda, mu, theta, n).unwrap();
        let s = steady_state(&p).unwrap();
        let o = oracle_metrics(&p, &stationary_dist_oracle(&p, 64).unwrap());
        prop_assert!((s.p0 - o.p0).abs() < 1e-8);
        prop_assert!((s.pn - o.pn).abs() < 1e-8);
        prop_assert!((s.delay_prob - o.delay_prob).abs() < 1e-8);
        prop_assert!((s.abandon_prob - o.abandon_prob).abs() < 1e-8);
        prop_assert!((s.throughput - o.throughput).abs() < 1e-8 * o.throughput.max(1.0));
    }

    #[test]
    fn probabilities_stay_in_range(
        lambda in 0.0f64..20_000.0,
        theta in 0.001f64..10.0,
        n in 0usize..1500,
    ) {
        let s = steady_state(&SystemParams::new(lambda, 10.0, theta, n).unwrap()).unwrap();
        for v in [s.p0, s.pn, s.delay_prob, s.cond_abandon, s.abandon_prob] {
            prop_assert!((0.0..=1.0).contains(&v), "{s:?}");
        }
        prop_assert!(s.throughput <= n as f64 * 10.0 + 1e-9);
        prop_assert!(s.mean_in_system.is_finite() && s.mean_in_system >= 0.0);
    }
}

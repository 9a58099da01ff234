//! Piecewise-linear machinery checked against representation-free probes:
//! a slope-change counter on a fine grid, pointwise evaluation, and an
//! independent run-counting oracle for the minimal-breakpoint fit.

mod common;

use common::slope_change_runs;
use proptest::prelude::*;
use xmodal_core::embed::{gen_relu_bridge_scenario, ScenarioMeta};
use xmodal_core::pwl::{
    compose, minimal_breakpoints_fit, relu_net_to_pwl, PwlFunction, ReluNet1D,
};

#[test]
fn bridge_composition_counts_match_grid_probe() {
    for (w, expect_min) in [(2usize, 6usize), (4, 8)] {
        let s = gen_relu_bridge_scenario(w, 256, 9).unwrap();
        let ScenarioMeta::ReluBridge { g, h, composed, .. } = &s.meta else { panic!() };
        let exact = composed.breakpoint_count();
        assert!(exact >= expect_min, "w={w}: {exact} < {expect_min}");
        // Probe the composite pointwise, never touching the representation.
        let runs = slope_change_runs(|x| h.eval(g.eval(x)), 0.0, 1.0, 4097);
        assert_eq!(runs, exact, "w={w}");
    }
}

/// Piecewise-linear function through knots at sorted positions with the
/// given values; collapses numerically-equal slopes, so the result is
/// canonical by construction.
fn from_knots(xs: &[f64], ys: &[f64]) -> PwlFunction {
    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    PwlFunction::canonicalize(
        (xs[0], *xs.last().unwrap()),
        xs[1..xs.len() - 1].to_vec(),
        ys[0],
        slopes,
    )
    .unwrap()
}

fn knot_positions(raw: &[f64]) -> Vec<f64> {
    // Spread raw values into strictly increasing positions in [0, 1].
    let mut xs = vec![0.0];
    let total: f64 = raw.iter().map(|r| r + 0.05).sum();
    let mut acc = 0.0;
    for r in &raw[..raw.len() - 1] {
        acc += r + 0.05;
        xs.push(acc / total);
    }
    xs.push(1.0);
    xs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compose_matches_pointwise(
        raw_g in prop::collection::vec(0.0f64..1.0, 2..6),
        ys_g in prop::collection::vec(0.0f64..1.0, 3..7),
        raw_h in prop::collection::vec(0.0f64..1.0, 2..6),
        ys_h in prop::collection::vec(0.0f64..1.0, 3..7),
    ) {
        let kg = raw_g.len().min(ys_g.len() - 1);
        let g = from_knots(&knot_positions(&raw_g[..kg]), &ys_g[..kg + 1]);
        let kh = raw_h.len().min(ys_h.len() - 1);
        let h = from_knots(&knot_positions(&raw_h[..kh]), &ys_h[..kh + 1]);
        // Values of g live in [0, 1] = domain of h by construction.
        let c = compose(&h, &g).unwrap();
        for i in 0..=400 {
            let x = i as f64 / 400.0;
            let want = h.eval(g.eval(x));
            prop_assert!((c.eval(x) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn net_to_pwl_is_pointwise_exact_and_width_bounded(
        params in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 1..7),
        d in -2.0f64..2.0,
    ) {
        let (a, (b, c)): (Vec<f64>, (Vec<f64>, Vec<f64>)) =
            params.into_iter().map(|(a, b, c)| (a, (b, c))).unzip();
        let width = a.len();
        let net = ReluNet1D { a, b, c, d };
        let f = relu_net_to_pwl(&net, (-3.0, 3.0)).unwrap();
        prop_assert!(f.breakpoint_count() <= width);
        for i in 0..=300 {
            let x = -3.0 + 6.0 * i as f64 / 300.0;
            let want = net.eval(x);
            prop_assert!((f.eval(x) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn minimal_fit_matches_run_oracle_on_exact_samples(
        raw in prop::collection::vec(0.05f64..1.0, 2..6),
        ys in prop::collection::vec(0.0f64..1.0, 3..7),
        per_piece in 3usize..6,
    ) {
        let k = raw.len().min(ys.len() - 1);
        let f = from_knots(&knot_positions(&raw[..k]), &ys[..k + 1]);
        // The grid probe resolves slope gaps above 1e-6; discard the
        // measure-zero draws below that.
        let max_slope = f.slopes().iter().fold(0.0f64, |m, s| m.max(s.abs()));
        prop_assume!(f
            .slopes()
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() > 1e-5 * (1.0 + max_slope)));
        // Sample every piece at least `per_piece` times, plus the knots.
        let mut xs: Vec<f64> = Vec::new();
        let (lo, hi) = f.domain();
        let mut cuts = vec![lo];
        cuts.extend_from_slice(f.breakpoints());
        cuts.push(hi);
        for w in cuts.windows(2) {
            for t in 0..per_piece {
                xs.push(w[0] + (w[1] - w[0]) * t as f64 / per_piece as f64);
            }
        }
        xs.push(hi);
        let samples: Vec<(f64, f64)> = xs.iter().map(|&x| (x, f.eval(x))).collect();
        let fitted = minimal_breakpoints_fit(&samples, 0.0).unwrap();
        let runs = slope_change_runs(|x| f.eval(x), lo, hi, 2048);
        prop_assert_eq!(fitted, f.breakpoint_count());
        prop_assert_eq!(runs, f.breakpoint_count());
    }
}

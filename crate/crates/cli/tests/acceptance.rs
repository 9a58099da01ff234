//! Acceptance gate: one test per shipped guarantee. Each test prints a
//! `criterion NN … PASS` line with the measured numbers (visible under
//! `--nocapture` or on failure); the test name itself doubles as the
//! pass/fail line in standard `cargo test` output.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use xmodal_core::embed::{
    apply_whitener, fit_whitener, gen_relu_bridge_scenario, gen_signflip_scenario, EmbeddingSet,
    ScenarioMeta,
};
use xmodal_core::families::{estimate_parameter_lipschitz, FamilySpec};
use xmodal_core::invariants::{
    check_global_bound, check_poincare, compatibility_relation, default_lambda_grid,
    fit_parameter_field, global_map_error, hardness_certified_relu, local_error, obstruction,
    signflip_min_variation, CompatibilityProfile, ParameterField,
};
use xmodal_core::pwl::{compose, relu_net_to_pwl, PwlFunction, ReluNet1D};
use xmodal_core::rng::rng_from_seed;
use xmodal_core::sheaf::CellularSheaf;
use xmodal_core::site::{graph_laplacian, Edge, Graph};

// --- shared helpers ---------------------------------------------------------

/// Random connected graph: spanning tree plus extra edges, weights in
/// [0.5, 2.0).
fn random_connected_graph(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> Graph {
    let n = rng.random_range(min_n..=max_n);
    let mut keys = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        keys.insert((u, v));
        edges.push(Edge { u, v, weight: rng.random_range(0.5..2.0) });
    }
    for _ in 0..n / 2 {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        let key = (u.min(v), u.max(v));
        if u != v && keys.insert(key) {
            edges.push(Edge { u: key.0, v: key.1, weight: rng.random_range(0.5..2.0) });
        }
    }
    Graph::new(n, edges).unwrap()
}

/// Random 1-d modality pair with a roughly linear relation plus noise, for
/// scalar-family sweeps.
fn random_scalar_data(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let slope = rng.random_range(-2.0..2.0);
    let x = DMatrix::from_fn(n, 1, |_, _| {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sign * rng.random_range(0.3..2.0)
    });
    let y = DMatrix::from_fn(n, 1, |r, _| slope * x[(r, 0)] + rng.random_range(-0.3..0.3));
    (x, y)
}

/// Count runs of slope changes of `f` on a uniform grid over [lo, hi]: an
/// independent probe for the number of breakpoints that never inspects the
/// piecewise representation.
fn slope_change_runs(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> usize {
    assert!(n >= 3);
    let h = (hi - lo) / (n - 1) as f64;
    let values: Vec<f64> = (0..n).map(|i| f(lo + i as f64 * h)).collect();
    let slopes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let max_slope = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let tol = 1e-6 * (1.0 + max_slope);
    let flags: Vec<bool> = slopes.windows(2).map(|w| (w[1] - w[0]).abs() > tol).collect();
    let mut runs = 0;
    let mut inside = false;
    for &flag in &flags {
        if flag && !inside {
            runs += 1;
        }
        inside = flag;
    }
    runs
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

// --- criteria ----------------------------------------------------------------

#[test]
fn c01_constant_sheaf_laplacian_equals_kronecker() {
    let mut rng = rng_from_seed(4001);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let g = random_connected_graph(&mut rng, 2, 30);
        let lap = graph_laplacian(&g);
        for p in [1usize, 2, 5] {
            let sheaf = CellularSheaf::constant(g.clone(), p).unwrap();
            let expected = lap.kronecker(&DMatrix::<f64>::identity(p, p));
            let diff = max_abs(&(sheaf.laplacian() - expected));
            worst = worst.max(diff);
            assert!(
                diff <= 1e-12,
                "constant sheaf Laplacian deviates from L ⊗ I_{p} by {diff:.3e}"
            );
        }
    }
    println!("criterion 01 constant-sheaf reduction: PASS (20 graphs × p ∈ {{1,2,5}}, max |Δ| = {worst:.3e})");
}

#[test]
fn c02_poincare_holds_and_single_edge_is_tight() {
    let mut rng = rng_from_seed(4002);
    let mut min_slack = f64::INFINITY;
    for _ in 0..500 {
        let g = random_connected_graph(&mut rng, 2, 25);
        let d_in = rng.random_range(1..=3);
        let d_out = rng.random_range(1..=3);
        let spec = FamilySpec::LowRank {
            d_in,
            d_out,
            rank: d_in.min(d_out),
            lipschitz: 10.0,
        };
        let params: Vec<DVector<f64>> = (0..g.n_vertices())
            .map(|_| DVector::from_fn(d_in * d_out, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let field = ParameterField::new(spec, params).unwrap();
        let check = check_poincare(&field, &g).unwrap();
        min_slack = min_slack.min(check.rhs - check.lhs);
        assert!(
            check.holds,
            "Poincaré violated: lhs {} > rhs {}",
            check.lhs, check.rhs
        );
    }

    // Single edge, antisymmetric field = eigenvector of the nontrivial
    // eigenvalue: the inequality is an equality.
    let weight = 1.7;
    let g = Graph::new(2, vec![Edge { u: 0, v: 1, weight }]).unwrap();
    let p = DVector::from_vec(vec![0.8, -0.4]);
    let spec = FamilySpec::LowRank { d_in: 2, d_out: 1, rank: 1, lipschitz: 10.0 };
    let field = ParameterField::new(spec, vec![p.clone(), -p]).unwrap();
    let check = check_poincare(&field, &g).unwrap();
    let gap = (check.lhs - check.rhs).abs();
    assert!(check.holds);
    assert!(
        gap <= 1e-9 * (1.0 + check.lhs.abs() + check.rhs.abs()),
        "single-edge case should be tight, |lhs − rhs| = {gap:.3e}"
    );
    println!(
        "criterion 02 Poincaré sweep: PASS (500 random fields hold, min slack {min_slack:.3e}; single-edge |lhs − rhs| = {gap:.3e})"
    );
}

#[test]
fn c03_global_bound_holds_on_scalar_instances() {
    let mut rng = rng_from_seed(4003);
    let grid = default_lambda_grid();
    let mut min_slack = f64::INFINITY;
    for trial in 0..200u64 {
        let g = random_connected_graph(&mut rng, 3, 20);
        let n = g.n_vertices();
        let (x, y) = random_scalar_data(&mut rng, n);
        let spec = FamilySpec::Scalar { dim: 1 };
        let field = if trial % 2 == 0 {
            // Field produced by the solver at a random regularization level.
            let lambda = grid[rng.random_range(0..grid.len())];
            fit_parameter_field(&x, &y, &spec, &g, lambda, trial).unwrap().0
        } else {
            // Arbitrary field: the bound holds for any parameter assignment.
            let params: Vec<DVector<f64>> =
                (0..n).map(|_| DVector::from_vec(vec![rng.random_range(-2.0..2.0)])).collect();
            ParameterField::new(spec.clone(), params).unwrap()
        };
        let mean = field.mean_params();
        let radius = field
            .params()
            .iter()
            .map(|w| w.norm())
            .fold(mean.norm(), f64::max)
            * 1.5
            + 0.1;
        let lw = estimate_parameter_lipschitz(&spec, &x, &y, radius, trial).unwrap();
        assert!(lw.analytic, "scalar-family Lipschitz bound should be analytic");
        let check = check_global_bound(&field, &x, &y, &g, &lw).unwrap();
        min_slack = min_slack.min(check.bound - check.mean_err_at_mean);
        assert!(
            check.holds,
            "global bound violated: err at mean {} > bound {}",
            check.mean_err_at_mean, check.bound
        );
    }
    println!(
        "criterion 03 global-bound sweep: PASS (200 scalar instances with analytic L_w hold, min slack {min_slack:.3e})"
    );
}

#[test]
fn c04_signflip_cut_sizes_match_closed_form_and_lambda_path() {
    let start = Instant::now();
    let mut lines = Vec::new();
    for cut in [1usize, 3, 5] {
        let s = gen_signflip_scenario(30, 30, cut, 7).unwrap();
        assert_eq!(s.site.n_vertices(), 60);
        let ScenarioMeta::SignFlip { ref partition, n_cut } = s.meta else {
            panic!("expected a sign-flip scenario");
        };
        assert_eq!(n_cut, cut);
        let closed = signflip_min_variation(&s.site, partition).unwrap();
        assert_eq!(
            closed,
            (4 * cut) as f64,
            "perfect-fit minimum variation should be exactly 4·|cut|"
        );
        let xa = &s.modality("a").unwrap().data;
        let xb = &s.modality("b").unwrap().data;
        let spec = FamilySpec::Scalar { dim: 1 };
        // ε = 1e-4 is a total squared-error budget across the 60 vertices;
        // `obstruction` compares the per-vertex mean, so the budget divides
        // by n. (A mean-form 1e-4 would allow 60× more total error, enough
        // to bend the field around small cuts by more than 5%.)
        let eps = 1e-4 / s.site.n_vertices() as f64;
        let res =
            obstruction(xa, xb, &spec, &s.site, eps, &default_lambda_grid(), 7).unwrap();
        let value = res.value.expect("the λ path should reach the error budget");
        let rel = (value - closed).abs() / closed;
        assert!(
            rel <= 0.05,
            "cut {cut}: path obstruction {value:.6} is {:.1}% away from closed form {closed}",
            rel * 100.0
        );
        lines.push(format!("cut {cut}: exact {closed}, path {value:.4} ({:+.2}%)", 100.0 * (value - closed) / closed));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "sweep took {elapsed:?}, budget 30 s");
    println!(
        "criterion 04 cut obstruction: PASS ({}; n = 60, {:.2} s)",
        lines.join("; "),
        elapsed.as_secs_f64()
    );
}

#[test]
fn c05_relu_nets_have_at_most_width_breakpoints() {
    let mut rng = rng_from_seed(4005);
    let mut worst_ratio = 0.0f64;
    for _ in 0..200 {
        let w = rng.random_range(1..=10usize);
        let net = ReluNet1D {
            a: (0..w).map(|_| rng.random_range(-2.0..2.0)).collect(),
            b: (0..w).map(|_| rng.random_range(-2.0..2.0)).collect(),
            c: (0..w).map(|_| rng.random_range(-2.0..2.0)).collect(),
            d: rng.random_range(-2.0..2.0),
        };
        let f = relu_net_to_pwl(&net, (-3.0, 3.0)).unwrap();
        let count = f.breakpoint_count();
        worst_ratio = worst_ratio.max(count as f64 / w as f64);
        assert!(
            count <= w,
            "width-{w} net produced {count} breakpoints"
        );
    }
    println!(
        "criterion 05 breakpoint bound: PASS (200 random nets, width ≤ 10, zero violations, max count/width = {worst_ratio:.2})"
    );
}

#[test]
fn c06_composed_breakpoint_counts_match_grid_oracle() {
    let mut lines = Vec::new();
    for (w, expect_exact, expect_min) in [(2usize, Some(6usize), 6usize), (4, None, 8)] {
        let s = gen_relu_bridge_scenario(w, 256, 9).unwrap();
        let ScenarioMeta::ReluBridge { ref g, ref h, ref composed, width } = s.meta else {
            panic!("expected a bridge scenario");
        };
        assert_eq!(width, w);
        let exact = composed.breakpoint_count();
        let recomposed: PwlFunction = compose(h, g).unwrap();
        assert_eq!(
            recomposed.breakpoint_count(),
            exact,
            "stored composite disagrees with a fresh exact composition"
        );
        let probed = slope_change_runs(|x| composed.eval(x), 0.0, 1.0, 4097);
        assert_eq!(probed, exact, "grid probe disagrees with exact composition");
        if let Some(e) = expect_exact {
            assert_eq!(exact, e, "width {w} should compose to exactly {e} breakpoints");
        }
        assert!(exact >= expect_min, "width {w} composed to only {exact} breakpoints");
        lines.push(format!("w = {w}: {exact} breakpoints (exact = grid probe)"));
    }
    println!("criterion 06 composition count: PASS ({})", lines.join("; "));
}

#[test]
fn c07_bridging_certifies_non_transitivity() {
    let eps = 1e-6;
    let s = gen_relu_bridge_scenario(2, 256, 7).unwrap();
    let pairs = [("a", "c"), ("c", "b"), ("a", "b")];
    let mut profiles = Vec::new();
    let mut widths = Vec::new();
    for &(from, to) in &pairs {
        let h = hardness_certified_relu(&s, from, to, eps).unwrap();
        assert!(h.certified);
        widths.push((from, to, h.value.unwrap(), h.certified_lower.unwrap()));
        // Exact scalar interpolation at λ = 0 gives a perfect fit, so the
        // relation below is decided purely by the hardness threshold.
        let o = obstruction(
            &s.modality(from).unwrap().data,
            &s.modality(to).unwrap().data,
            &FamilySpec::Scalar { dim: 1 },
            &s.site,
            eps,
            &[0.0],
            7,
        )
        .unwrap();
        assert!(o.value.is_some(), "λ = 0 scalar fit should be exact on 1-d data");
        profiles.push(CompatibilityProfile {
            pair: (from.to_string(), to.to_string()),
            epsilon: eps,
            hardness: h,
            obstruction: o,
        });
    }
    let [ac, cb, ab] = widths.as_slice() else { unreachable!() };
    assert!(ac.2 <= 3, "H(a→c) = {} exceeds 3", ac.2);
    assert!(cb.2 <= 3, "H(c→b) = {} exceeds 3", cb.2);
    assert!(ab.3 >= 6, "certified lower bound for a→b is only {}", ab.3);
    assert!(ab.2 >= 6, "realized width for a→b is only {}", ab.2);

    let relation = compatibility_relation(&profiles, 3, 1e18).unwrap();
    let has = |a: &str, b: &str| relation.edges.iter().any(|e| e.0 == a && e.1 == b);
    assert!(has("a", "c") && has("c", "b"), "relation at α₀ = 3 must keep both stages");
    assert!(!has("a", "b"), "relation at α₀ = 3 must exclude the direct pair");
    println!(
        "criterion 07 non-transitivity: PASS (H(a→c) = {} ≥ {}, H(c→b) = {} ≥ {}, H(a→b) = {} ≥ {}; edges {:?})",
        ac.2, ac.3, cb.2, cb.3, ab.2, ab.3, relation.edges
    );
}

#[test]
fn c08_whitening_kills_first_two_moments() {
    let mut rng = rng_from_seed(4008);
    // Correlated, shifted data: a random mixing of uniform coordinates.
    let mix = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
    let shift = DVector::from_fn(5, |_, _| rng.random_range(-3.0..3.0));
    let raw = DMatrix::from_fn(200, 5, |_, _| rng.random_range(-1.0..1.0));
    let mut data = raw * mix;
    for mut row in data.row_iter_mut() {
        row += shift.transpose();
    }
    let e = EmbeddingSet::new("m", data).unwrap();
    // Zero ridge: the ridge default is a numerical floor for degenerate
    // covariances, not part of the moment guarantee being checked here.
    let w = fit_whitener(&e, Some(0.0)).unwrap();
    let out = apply_whitener(&w, &e).unwrap();
    let n = out.data.nrows() as f64;
    let mean = out.data.row_mean();
    let mut centered = out.data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / n;
    let mean_dev = mean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cov_dev = max_abs(&(cov - DMatrix::identity(5, 5)));
    assert!(mean_dev <= 1e-10, "whitened mean deviates by {mean_dev:.3e}");
    assert!(cov_dev <= 1e-8, "whitened covariance deviates from I by {cov_dev:.3e}");
    println!(
        "criterion 08 whitening moments: PASS (200×5, |mean| ≤ {mean_dev:.3e}, |cov − I| ≤ {cov_dev:.3e})"
    );
}

#[test]
fn c09_large_lambda_collapses_to_the_global_map() {
    let mut rng = rng_from_seed(4009);
    let spec = FamilySpec::Scalar { dim: 1 };
    let mut worst_dev = 0.0f64;
    let mut worst_gap = 0.0f64;
    for trial in 0..20u64 {
        let g = random_connected_graph(&mut rng, 3, 20);
        let (x, y) = random_scalar_data(&mut rng, g.n_vertices());
        let (field, _) = fit_parameter_field(&x, &y, &spec, &g, 1e9, trial).unwrap();
        let dev = field.max_deviation_from_mean();
        let field_err = local_error(&field, &x, &y).unwrap();
        let (global_err, _) = global_map_error(&x, &y, &spec, trial).unwrap();
        let gap = (field_err - global_err).abs();
        worst_dev = worst_dev.max(dev);
        worst_gap = worst_gap.max(gap);
        assert!(dev <= 1e-6, "field not constant at λ = 1e9: deviation {dev:.3e}");
        assert!(gap <= 1e-6, "field error {field_err} vs global map error {global_err}");
    }
    println!(
        "criterion 09 large-λ collapse: PASS (20 graphs, max constancy deviation {worst_dev:.3e}, max error gap {worst_gap:.3e})"
    );
}

#[test]
fn c10_scalar_fits_match_dense_solve_on_three_vertices() {
    let mut rng = rng_from_seed(4010);
    let spec = FamilySpec::Scalar { dim: 1 };
    let grid = default_lambda_grid();
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        // Alternate path and triangle topologies with random weights.
        let mut edges = vec![
            Edge { u: 0, v: 1, weight: rng.random_range(0.5..2.0) },
            Edge { u: 1, v: 2, weight: rng.random_range(0.5..2.0) },
        ];
        if trial % 2 == 1 {
            edges.push(Edge { u: 0, v: 2, weight: rng.random_range(0.5..2.0) });
        }
        let g = Graph::new(3, edges).unwrap();
        let (x, y) = random_scalar_data(&mut rng, 3);
        let lap = graph_laplacian(&g);
        for &lambda in &grid {
            let (field, _) = fit_parameter_field(&x, &y, &spec, &g, lambda, trial).unwrap();
            // Closed form: (diag(x_v²) + λL) w = (x_v·y_v), solved densely.
            let mut a = lap.scale(lambda);
            let mut s = DVector::zeros(3);
            for v in 0..3 {
                a[(v, v)] += x[(v, 0)] * x[(v, 0)];
                s[v] = x[(v, 0)] * y[(v, 0)];
            }
            let oracle = a.lu().solve(&s).expect("3×3 system should be nonsingular");
            for v in 0..3 {
                let diff = (field.params()[v][0] - oracle[v]).abs();
                worst = worst.max(diff);
                assert!(
                    diff <= 1e-10,
                    "λ = {lambda:.3e}, vertex {v}: fit {} vs dense solve {} (Δ = {diff:.3e})",
                    field.params()[v][0],
                    oracle[v]
                );
            }
        }
    }
    println!(
        "criterion 10 exact-solver cross-check: PASS (20 instances × {} λ values, max |Δ| = {worst:.3e})",
        grid.len()
    );
}

#[test]
fn c11_demo_reports_are_byte_identical_across_reruns() {
    let bin = env!("CARGO_BIN_EXE_xmodal");
    let mut lines = Vec::new();
    for (name, args) in [
        ("signflip", vec!["demo", "signflip", "--cut", "3", "--seed", "7"]),
        ("relu", vec!["demo", "relu", "--width", "2", "--seed", "7"]),
    ] {
        let mut reports = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let out = std::process::Command::new(bin)
                .args(&args)
                .arg("--out")
                .arg(dir.path())
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "demo {name} failed:\n{}{}",
                String::from_utf8_lossy(&out.stdout),
                String::from_utf8_lossy(&out.stderr)
            );
            reports.push(std::fs::read(dir.path().join("report.json")).unwrap());
        }
        assert_eq!(
            reports[0], reports[1],
            "demo {name}: rerun with the same seed changed report.json"
        );
        lines.push(format!("{name}: {} bytes, identical", reports[0].len()));
    }
    println!("criterion 11 determinism: PASS ({})", lines.join("; "));
}

//! Spectral quantities cross-checked against a hand-rolled Jacobi
//! eigensolver and dense closed-form solves.

mod common;

use common::{jacobi_eigenvalues, random_connected_graph};
use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use xmodal_core::families::FamilySpec;
use xmodal_core::invariants::{default_lambda_grid, fit_parameter_field};
use xmodal_core::rng::rng_from_seed;
use xmodal_core::sheaf::CellularSheaf;
use xmodal_core::site::{algebraic_connectivity, graph_laplacian};

#[test]
fn algebraic_connectivity_matches_jacobi() {
    let mut rng = rng_from_seed(101);
    for _ in 0..30 {
        let g = random_connected_graph(&mut rng, 2, 50);
        let evs = jacobi_eigenvalues(&graph_laplacian(&g));
        let got = algebraic_connectivity(&g).lambda2;
        assert!(
            (got - evs[1]).abs() <= 1e-9 * (1.0 + evs[1]),
            "n={} got {got} jacobi {}",
            g.n_vertices(),
            evs[1]
        );
    }
}

#[test]
fn constant_sheaf_gap_matches_jacobi() {
    let mut rng = rng_from_seed(102);
    for _ in 0..8 {
        let g = random_connected_graph(&mut rng, 2, 12);
        for p in [1usize, 3] {
            let sheaf = CellularSheaf::constant(g.clone(), p).unwrap();
            let evs = jacobi_eigenvalues(&sheaf.laplacian());
            // Kernel has dimension p on a connected graph; the gap is the
            // next eigenvalue up.
            for &ev in evs.iter().take(p) {
                assert!(ev.abs() < 1e-9);
            }
            let gap = sheaf.spectral_gap();
            assert!((gap - evs[p]).abs() <= 1e-9 * (1.0 + evs[p]));
        }
    }
}

#[test]
fn scalar_field_matches_dense_solve_on_random_graphs() {
    let mut rng = rng_from_seed(103);
    let spec = FamilySpec::Scalar { dim: 1 };
    for _ in 0..10 {
        let g = random_connected_graph(&mut rng, 2, 8);
        let n = g.n_vertices();
        let xa = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.2..2.0));
        let xb = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        for lambda in default_lambda_grid() {
            let (field, _) = fit_parameter_field(&xa, &xb, &spec, &g, lambda, 0).unwrap();
            let mut a = graph_laplacian(&g) * lambda;
            let mut b = DVector::zeros(n);
            for v in 0..n {
                a[(v, v)] += xa[(v, 0)] * xa[(v, 0)];
                b[v] = xa[(v, 0)] * xb[(v, 0)];
            }
            let w = a.lu().solve(&b).expect("dense solve");
            for v in 0..n {
                assert!(
                    (field.params()[v][0] - w[v]).abs() <= 1e-10 * (1.0 + w[v].abs()),
                    "lambda={lambda} v={v}"
                );
            }
        }
    }
}

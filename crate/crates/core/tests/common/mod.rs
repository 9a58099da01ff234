//! Independent oracles for the integration tests: a self-contained Jacobi
//! eigensolver, brute-force neighbor search, and a grid probe that counts
//! slope changes without looking at the exact representation.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use xmodal_core::site::{Edge, Graph};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let total: f64 = m.iter().map(|v| v * v).sum();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= 1e-28 * (1.0 + total) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (m[(q, q)] - m[(p, p)]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut evs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    evs.sort_by(f64::total_cmp);
    evs
}

/// Random spanning tree plus a few extra edges; weights in [0.5, 2].
pub fn random_connected_graph(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> Graph {
    let n = rng.random_range(min_n..=max_n);
    let mut edges: Vec<Edge> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        seen.insert((u, v));
        edges.push(Edge { u, v, weight: rng.random_range(0.5..2.0) });
    }
    for _ in 0..n / 2 {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        let key = (u.min(v), u.max(v));
        if u != v && seen.insert(key) {
            edges.push(Edge { u: key.0, v: key.1, weight: rng.random_range(0.5..2.0) });
        }
    }
    Graph::new(n, edges).unwrap()
}

/// Number of runs of consecutive grid gaps whose secant slope differs from
/// the previous gap's. For a piecewise-linear f sampled finely enough this
/// counts the breakpoints without using the representation.
pub fn slope_change_runs(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> usize {
    assert!(n >= 3);
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let slopes: Vec<f64> =
        xs.windows(2).map(|w| (f(w[1]) - f(w[0])) / (w[1] - w[0])).collect();
    let max_slope = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let tol = 1e-6 * (1.0 + max_slope);
    let flags: Vec<bool> =
        slopes.windows(2).map(|w| (w[1] - w[0]).abs() > tol).collect();
    let mut runs = 0;
    let mut prev = false;
    for &f in &flags {
        if f && !prev {
            runs += 1;
        }
        prev = f;
    }
    runs
}

/// Brute-force k nearest neighbors of each row, ties to the lower index.
pub fn brute_knn(points: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = points.nrows();
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((points.row(i) - points.row(j)).norm(), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

//! Neighborhood graph construction against brute-force search.

mod common;

use common::brute_knn;
use nalgebra::DMatrix;
use rand::RngExt;
use std::collections::BTreeMap;
use xmodal_core::rng::rng_from_seed;
use xmodal_core::site::{build_knn_site, SiteConfig, Symmetrization};

fn edge_map(g: &xmodal_core::site::Graph) -> BTreeMap<(usize, usize), f64> {
    g.edges().iter().map(|e| ((e.u, e.v), e.weight)).collect()
}

#[test]
fn knn_site_matches_brute_force() {
    let mut rng = rng_from_seed(201);
    for trial in 0..12 {
        let n = rng.random_range(5..25);
        let d = rng.random_range(1..4);
        let pts = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let k = rng.random_range(1..n.min(5));
        let sigma = if trial % 2 == 0 { None } else { Some(0.7) };
        for sym in [Symmetrization::Union, Symmetrization::Mutual] {
            let config = SiteConfig { k_nn: k, rbf_sigma: sigma, symmetrization: sym };
            let got = edge_map(&build_knn_site(&pts, &config).unwrap());
            let neigh = brute_knn(&pts, k);
            let mut want: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for (i, ns) in neigh.iter().enumerate() {
                for &j in ns {
                    let keep = match sym {
                        Symmetrization::Union => true,
                        Symmetrization::Mutual => neigh[j].contains(&i),
                    };
                    if keep {
                        let key = (i.min(j), i.max(j));
                        let dist = (pts.row(i) - pts.row(j)).norm();
                        let w = match sigma {
                            None => 1.0,
                            Some(s) => (-dist * dist / (s * s)).exp(),
                        };
                        want.insert(key, w);
                    }
                }
            }
            assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
            for (k2, w) in &want {
                assert!((got[k2] - w).abs() <= 1e-12 * (1.0 + w));
            }
        }
    }
}

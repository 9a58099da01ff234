//! The fixed modality-independent site: a weighted undirected graph on sample
//! indices, built from latent coordinates by kNN (optionally RBF-weighted) or
//! ingested from an edge-list file. Also the spectral quantities the bounds
//! consume: graph Laplacian, algebraic connectivity, components, cut edges.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::eigenvalues_ascending;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Undirected weighted graph. The stored (u, v) order of each edge doubles as
/// its orientation for coboundary signs; energies never depend on it.
#[derive(Debug, Clone)]
pub struct Graph {
    n_vertices: usize,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(n_vertices: usize, edges: Vec<Edge>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(invalid("graph needs at least one vertex"));
        }
        let mut seen = BTreeSet::new();
        for (i, e) in edges.iter().enumerate() {
            if e.u >= n_vertices || e.v >= n_vertices {
                return Err(invalid(format!(
                    "edge {i} ({},{}) references a vertex >= n={n_vertices}",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(invalid(format!("edge {i} is a self-loop at {}", e.u)));
            }
            if !e.weight.is_finite() || e.weight < 0.0 {
                return Err(invalid(format!("edge {i} has invalid weight {}", e.weight)));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(invalid(format!("duplicate undirected edge ({},{})", e.u, e.v)));
            }
        }
        Ok(Graph { n_vertices, edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Same topology with every weight replaced by 1 (used when a run strips
    /// RBF weights out of the energy; see the config flag on the CLI side).
    pub fn with_unit_weights(&self) -> Graph {
        Graph {
            n_vertices: self.n_vertices,
            edges: self
                .edges
                .iter()
                .map(|e| Edge { u: e.u, v: e.v, weight: 1.0 })
                .collect(),
        }
    }

    pub fn component_labels(&self) -> Vec<usize> {
        // Union-find, then relabel components by first appearance.
        let mut parent: Vec<usize> = (0..self.n_vertices).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.edges {
            let (ru, rv) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if ru != rv {
                parent[ru.max(rv)] = ru.min(rv);
            }
        }
        let mut label = vec![usize::MAX; self.n_vertices];
        let mut next = 0;
        for v in 0..self.n_vertices {
            let root = find(&mut parent, v);
            if label[root] == usize::MAX {
                label[root] = next;
                next += 1;
            }
            label[v] = label[root];
        }
        label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrization {
    Union,
    Mutual,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteConfig {
    pub k_nn: usize,
    #[serde(default)]
    pub rbf_sigma: Option<f64>,
    pub symmetrization: Symmetrization,
}

impl Default for SiteConfig {
    fn default() -> Self {
        SiteConfig { k_nn: 2, rbf_sigma: None, symmetrization: Symmetrization::Union }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda2: f64,
    pub n_components: usize,
    pub component_labels: Vec<usize>,
}

/// kNN site on row-points. Edge (i,j) exists iff j is among the k nearest of
/// i (union) or both directions hold (mutual). Distance ties break toward the
/// lower index, so the construction is deterministic. Weight is
/// exp(−d²/σ²) when σ is set, else 1.
pub fn build_knn_site(points: &DMatrix<f64>, config: &SiteConfig) -> Result<Graph> {
    let n = points.nrows();
    if n < 2 {
        return Err(invalid("kNN site needs n >= 2 points"));
    }
    if config.k_nn == 0 || config.k_nn >= n {
        return Err(invalid(format!("k_nn must satisfy 1 <= k < n, got k={} n={n}", config.k_nn)));
    }
    if let Some(s) = config.rbf_sigma {
        if !(s > 0.0) || !s.is_finite() {
            return Err(invalid(format!("rbf_sigma must be positive and finite, got {s}")));
        }
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(invalid("points contain non-finite coordinates"));
    }

    let mut d2 = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = points.row(i) - points.row(j);
            let d = diff.norm_squared();
            d2[i][j] = d;
            d2[j][i] = d;
        }
    }

    let mut neighbors: Vec<BTreeSet<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).map(|j| (d2[i][j], j)).collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        neighbors.push(cand[..config.k_nn].iter().map(|&(_, j)| j).collect());
    }

    let mut pairs = BTreeSet::new();
    for i in 0..n {
        for &j in &neighbors[i] {
            let keep = match config.symmetrization {
                Symmetrization::Union => true,
                Symmetrization::Mutual => neighbors[j].contains(&i),
            };
            if keep {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }

    let edges = pairs
        .into_iter()
        .map(|(u, v)| {
            let weight = match config.rbf_sigma {
                Some(s) => (-d2[u][v] / (s * s)).exp(),
                None => 1.0,
            };
            Edge { u, v, weight }
        })
        .collect();
    Graph::new(n, edges)
}

/// L = D − W with the graph's edge weights.
pub fn graph_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        l[(e.u, e.u)] += e.weight;
        l[(e.v, e.v)] += e.weight;
        l[(e.u, e.v)] -= e.weight;
        l[(e.v, e.u)] -= e.weight;
    }
    l
}

pub fn algebraic_connectivity(g: &Graph) -> SpectralSummary {
    let labels = g.component_labels();
    let n_components = labels.iter().max().map_or(0, |&m| m + 1);
    let lambda2 = if n_components > 1 || g.n_vertices() == 1 {
        // Disconnected graphs have an exact zero here; don't report rounding noise.
        0.0
    } else {
        let ev = eigenvalues_ascending(&graph_laplacian(g));
        ev[1].max(0.0)
    };
    SpectralSummary { lambda2, n_components, component_labels: labels }
}

/// Indices of edges whose endpoints get different labels. `partition[v]` is
/// true on the plus side.
pub fn cut_edges(g: &Graph, partition: &[bool]) -> Result<Vec<usize>> {
    if partition.len() != g.n_vertices() {
        return Err(invalid(format!(
            "partition labels {} vertices, graph has {}",
            partition.len(),
            g.n_vertices()
        )));
    }
    Ok(g.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| partition[e.u] != partition[e.v])
        .map(|(i, _)| i)
        .collect())
}

/// Edge-list text format: one `u v weight` triple per line, 0-based ids, `#`
/// starts a comment. The vertex count is max id + 1, so trailing isolated
/// vertices are not representable in this format.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected `u v weight`, got {} fields", toks.len()),
            });
        }
        let u: usize = toks[0].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad vertex id {:?}", toks[0]),
        })?;
        let v: usize = toks[1].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad vertex id {:?}", toks[1]),
        })?;
        let weight: f64 = toks[2].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad weight {:?}", toks[2]),
        })?;
        max_id = max_id.max(u).max(v);
        edges.push(Edge { u, v, weight });
    }
    if edges.is_empty() {
        return Err(invalid("edge list is empty"));
    }
    Graph::new(max_id + 1, edges)
}

pub fn write_edge_list(g: &Graph) -> String {
    let mut out = String::from("# u v weight\n");
    for e in g.edges() {
        out.push_str(&format!("{} {} {}\n", e.u, e.v, e.weight));
    }
    out
}

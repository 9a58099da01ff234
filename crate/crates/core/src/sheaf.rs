//! Cellular sheaves on the site graph: coboundary, degree-0 sheaf Laplacian,
//! inconsistency energy, global sections, spectral gap. The constant sheaf
//! (all stalks ℝ^p, identity restrictions) is the specialization the
//! parameter-field machinery runs on; general restriction maps are supported
//! to validate the definitions.
//!
//! Edge weights enter the theory once: the coboundary row of edge e is scaled
//! by √w_e, so the energy is Σ_e w_e‖ρ_u c(u) − ρ_v c(v)‖² and Δ⁰ matches the
//! weighted graph Laplacian in the constant case.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{eigenvalues_ascending, max_abs};
use crate::site::{Edge, Graph};

#[derive(Debug, Clone)]
pub struct CellularSheaf {
    graph: Graph,
    vertex_dims: Vec<usize>,
    edge_dims: Vec<usize>,
    /// Per edge e=(u→v): (ρ_{e←u}, ρ_{e←v}), shapes (dim 𝓕(e) × dim 𝓕(u/v)).
    restrictions: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

/// Per-vertex blocks c(v) ∈ ℝ^{dim 𝓕(v)}.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain0 {
    pub blocks: Vec<DVector<f64>>,
}

/// Per-edge blocks x(e) ∈ ℝ^{dim 𝓕(e)}.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain1 {
    pub blocks: Vec<DVector<f64>>,
}

impl Cochain0 {
    /// Split a stacked vector into per-vertex blocks matching the sheaf.
    pub fn from_flat(sheaf: &CellularSheaf, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() != sheaf.total_vertex_dim() {
            return Err(invalid(format!(
                "flat cochain has length {}, sheaf expects {}",
                flat.len(),
                sheaf.total_vertex_dim()
            )));
        }
        let mut blocks = Vec::with_capacity(sheaf.vertex_dims.len());
        let mut off = 0;
        for &d in &sheaf.vertex_dims {
            blocks.push(DVector::from_iterator(d, (0..d).map(|i| flat[off + i])));
            off += d;
        }
        Ok(Cochain0 { blocks })
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let total: usize = self.blocks.iter().map(|b| b.len()).sum();
        DVector::from_iterator(total, self.blocks.iter().flat_map(|b| b.iter().copied()))
    }
}

impl CellularSheaf {
    pub fn new(
        graph: Graph,
        vertex_dims: Vec<usize>,
        edge_dims: Vec<usize>,
        restrictions: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    ) -> Result<Self> {
        if vertex_dims.len() != graph.n_vertices() {
            return Err(invalid("vertex_dims length must equal n_vertices"));
        }
        if vertex_dims.iter().any(|&d| d == 0) {
            return Err(invalid("vertex stalk dims must be positive"));
        }
        if edge_dims.len() != graph.edges().len() || restrictions.len() != graph.edges().len() {
            return Err(invalid("edge_dims and restrictions must match the edge count"));
        }
        for (i, e) in graph.edges().iter().enumerate() {
            let de = edge_dims[i];
            if de == 0 {
                return Err(invalid(format!("edge {i} stalk dim must be positive")));
            }
            let (ru, rv) = &restrictions[i];
            if ru.nrows() != de || ru.ncols() != vertex_dims[e.u] {
                return Err(invalid(format!(
                    "restriction for incidence ({} <= edge {i}) has shape {}x{}, expected {}x{}",
                    e.u,
                    ru.nrows(),
                    ru.ncols(),
                    de,
                    vertex_dims[e.u]
                )));
            }
            if rv.nrows() != de || rv.ncols() != vertex_dims[e.v] {
                return Err(invalid(format!(
                    "restriction for incidence ({} <= edge {i}) has shape {}x{}, expected {}x{}",
                    e.v,
                    rv.nrows(),
                    rv.ncols(),
                    de,
                    vertex_dims[e.v]
                )));
            }
        }
        Ok(CellularSheaf { graph, vertex_dims, edge_dims, restrictions })
    }

    /// All stalks ℝ^p, all restrictions identity.
    pub fn constant(graph: Graph, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(invalid("constant sheaf needs p >= 1"));
        }
        let n = graph.n_vertices();
        let m = graph.edges().len();
        let eye = DMatrix::<f64>::identity(p, p);
        CellularSheaf::new(graph, vec![p; n], vec![p; m], vec![(eye.clone(), eye); m])
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn vertex_dims(&self) -> &[usize] {
        &self.vertex_dims
    }

    pub fn total_vertex_dim(&self) -> usize {
        self.vertex_dims.iter().sum()
    }

    fn check_cochain(&self, c: &Cochain0) -> Result<()> {
        if c.blocks.len() != self.vertex_dims.len() {
            return Err(invalid(format!(
                "cochain has {} blocks, sheaf has {} vertices",
                c.blocks.len(),
                self.vertex_dims.len()
            )));
        }
        for (v, b) in c.blocks.iter().enumerate() {
            if b.len() != self.vertex_dims[v] {
                return Err(invalid(format!(
                    "cochain block at vertex {v} has dim {}, stalk dim is {}",
                    b.len(),
                    self.vertex_dims[v]
                )));
            }
        }
        Ok(())
    }

    /// (δ⁰c)(e=(u→v)) = √w_e (ρ_{e←u}c(u) − ρ_{e←v}c(v)).
    pub fn coboundary(&self, c: &Cochain0) -> Result<Cochain1> {
        self.check_cochain(c)?;
        let blocks = self
            .graph
            .edges()
            .iter()
            .zip(&self.restrictions)
            .map(|(e, (ru, rv))| (ru * &c.blocks[e.u] - rv * &c.blocks[e.v]) * e.weight.sqrt())
            .collect();
        Ok(Cochain1 { blocks })
    }

    /// E(c) = ‖δ⁰c‖² = Σ_e w_e‖ρ_u c(u) − ρ_v c(v)‖², accumulated with exact
    /// w_e factors (no √w round trip).
    pub fn energy(&self, c: &Cochain0) -> Result<f64> {
        self.check_cochain(c)?;
        let mut total = 0.0;
        for (e, (ru, rv)) in self.graph.edges().iter().zip(&self.restrictions) {
            let diff = ru * &c.blocks[e.u] - rv * &c.blocks[e.v];
            total += e.weight * diff.norm_squared();
        }
        Ok(total)
    }

    /// Δ⁰ = (δ⁰)ᵀδ⁰, assembled blockwise so the constant sheaf reproduces
    /// L ⊗ I_p exactly (same per-edge weight sums as the graph Laplacian).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let offsets = self.vertex_offsets();
        let total = self.total_vertex_dim();
        let mut lap = DMatrix::zeros(total, total);
        for (e, (ru, rv)) in self.graph.edges().iter().zip(&self.restrictions) {
            let w = e.weight;
            let (ou, ov) = (offsets[e.u], offsets[e.v]);
            let (du, dv) = (self.vertex_dims[e.u], self.vertex_dims[e.v]);
            let uu = ru.transpose() * ru * w;
            let vv = rv.transpose() * rv * w;
            let uv = ru.transpose() * rv * w;
            for i in 0..du {
                for j in 0..du {
                    lap[(ou + i, ou + j)] += uu[(i, j)];
                }
            }
            for i in 0..dv {
                for j in 0..dv {
                    lap[(ov + i, ov + j)] += vv[(i, j)];
                }
            }
            for i in 0..du {
                for j in 0..dv {
                    lap[(ou + i, ov + j)] -= uv[(i, j)];
                    lap[(ov + j, ou + i)] -= uv[(i, j)];
                }
            }
        }
        lap
    }

    fn vertex_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.vertex_dims.len());
        let mut off = 0;
        for &d in &self.vertex_dims {
            offsets.push(off);
            off += d;
        }
        offsets
    }

    fn kernel_tolerance(lap: &DMatrix<f64>) -> f64 {
        1e-9 * (max_abs(lap) + 1.0)
    }

    /// dim ker(Δ⁰): eigenvalues below the relative tolerance
    /// 1e-9 × (max |entry| + 1).
    pub fn global_section_dim(&self) -> usize {
        let lap = self.laplacian();
        let tol = Self::kernel_tolerance(&lap);
        eigenvalues_ascending(&lap).iter().filter(|&&ev| ev < tol).count()
    }

    /// Smallest eigenvalue of Δ⁰ strictly above the kernel tolerance; 0 when
    /// the whole spectrum is kernel.
    pub fn spectral_gap(&self) -> f64 {
        let lap = self.laplacian();
        let tol = Self::kernel_tolerance(&lap);
        eigenvalues_ascending(&lap).into_iter().find(|&ev| ev >= tol).unwrap_or(0.0)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let edges = self
            .graph
            .edges()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (ru, rv) = &self.restrictions[i];
                SheafEdgeJson {
                    u: e.u,
                    v: e.v,
                    weight: e.weight,
                    edge_stalk_dim: self.edge_dims[i],
                    rho_u: row_major(ru),
                    rho_v: row_major(rv),
                }
            })
            .collect();
        let doc = SheafJson {
            n_vertices: self.graph.n_vertices(),
            vertex_stalk_dims: self.vertex_dims.clone(),
            edges,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: SheafJson = serde_json::from_str(text)?;
        let mut edges = Vec::with_capacity(doc.edges.len());
        let mut edge_dims = Vec::with_capacity(doc.edges.len());
        let mut restrictions = Vec::with_capacity(doc.edges.len());
        for (i, e) in doc.edges.iter().enumerate() {
            if e.u >= doc.n_vertices || e.v >= doc.n_vertices {
                return Err(invalid(format!("edge {i} references a vertex out of range")));
            }
            let du = *doc
                .vertex_stalk_dims
                .get(e.u)
                .ok_or_else(|| invalid("vertex_stalk_dims too short"))?;
            let dv = doc.vertex_stalk_dims[e.v];
            let ru = from_row_major(&e.rho_u, e.edge_stalk_dim, du)
                .ok_or_else(|| invalid(format!("edge {i}: rho_u has wrong element count")))?;
            let rv = from_row_major(&e.rho_v, e.edge_stalk_dim, dv)
                .ok_or_else(|| invalid(format!("edge {i}: rho_v has wrong element count")))?;
            edges.push(Edge { u: e.u, v: e.v, weight: e.weight });
            edge_dims.push(e.edge_stalk_dim);
            restrictions.push((ru, rv));
        }
        let graph = Graph::new(doc.n_vertices, edges)?;
        CellularSheaf::new(graph, doc.vertex_stalk_dims, edge_dims, restrictions)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major(data: &[f64], rows: usize, cols: usize) -> Option<DMatrix<f64>> {
    if data.len() != rows * cols {
        return None;
    }
    Some(DMatrix::from_row_slice(rows, cols, data))
}

#[derive(Serialize, Deserialize)]
struct SheafJson {
    n_vertices: usize,
    vertex_stalk_dims: Vec<usize>,
    edges: Vec<SheafEdgeJson>,
}

#[derive(Serialize, Deserialize)]
struct SheafEdgeJson {
    u: usize,
    v: usize,
    weight: f64,
    edge_stalk_dim: usize,
    rho_u: Vec<f64>,
    rho_v: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_edge() -> Graph {
        Graph::new(2, vec![Edge { u: 0, v: 1, weight: 1.0 }]).unwrap()
    }

    fn c0(vals: &[&[f64]]) -> Cochain0 {
        Cochain0 { blocks: vals.iter().map(|b| DVector::from_row_slice(b)).collect() }
    }

    #[test]
    fn coboundary_constant_sheaf() {
        let sheaf = CellularSheaf::constant(single_edge(), 1).unwrap();
        let section = sheaf.coboundary(&c0(&[&[3.0], &[3.0]])).unwrap();
        assert_eq!(section.blocks[0][0], 0.0);
        let opposed = sheaf.coboundary(&c0(&[&[1.0], &[-1.0]])).unwrap();
        assert_eq!(opposed.blocks[0][0], 2.0);
    }

    #[test]
    fn coboundary_general_restrictions() {
        // rho_u = [2], rho_v = [1]: c = (1, 2) is a section of this sheaf.
        let sheaf = CellularSheaf::new(
            single_edge(),
            vec![1, 1],
            vec![1],
            vec![(DMatrix::from_row_slice(1, 1, &[2.0]), DMatrix::from_row_slice(1, 1, &[1.0]))],
        )
        .unwrap();
        let out = sheaf.coboundary(&c0(&[&[1.0], &[2.0]])).unwrap();
        assert_eq!(out.blocks[0][0], 0.0);
        assert_eq!(sheaf.global_section_dim(), 1);
    }

    #[test]
    fn coboundary_rejects_shape_mismatch() {
        let sheaf = CellularSheaf::constant(single_edge(), 2).unwrap();
        let err = sheaf.coboundary(&c0(&[&[1.0], &[1.0]])).unwrap_err();
        assert!(err.to_string().contains("vertex 0"));
    }

    #[test]
    fn laplacian_single_edge_matches_graph() {
        let sheaf = CellularSheaf::constant(single_edge(), 1).unwrap();
        let lap = sheaf.laplacian();
        assert_eq!(lap, DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.]));
        assert!((sheaf.spectral_gap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sheaf_kernel_dims() {
        let g = Graph::new(2, vec![Edge { u: 0, v: 1, weight: 1.0 }]).unwrap();
        let sheaf = CellularSheaf::constant(g, 3).unwrap();
        assert_eq!(sheaf.laplacian().nrows(), 6);
        assert_eq!(sheaf.global_section_dim(), 3);

        let disconnected = Graph::new(
            4,
            vec![Edge { u: 0, v: 1, weight: 1.0 }, Edge { u: 2, v: 3, weight: 1.0 }],
        )
        .unwrap();
        let sheaf = CellularSheaf::constant(disconnected, 2).unwrap();
        assert_eq!(sheaf.global_section_dim(), 4);
    }

    #[test]
    fn energy_is_quadratic_and_zero_on_sections() {
        let g = Graph::new(
            3,
            vec![
                Edge { u: 0, v: 1, weight: 1.0 },
                Edge { u: 1, v: 2, weight: 1.0 },
                Edge { u: 0, v: 2, weight: 1.0 },
            ],
        )
        .unwrap();
        let sheaf = CellularSheaf::constant(g, 1).unwrap();
        let constant = c0(&[&[5.0], &[5.0], &[5.0]]);
        assert_eq!(sheaf.energy(&constant).unwrap(), 0.0);

        let c = c0(&[&[1.0], &[0.0], &[2.0]]);
        let e = sheaf.energy(&c).unwrap();
        let scaled = c0(&[&[2.0], &[0.0], &[4.0]]);
        assert!((sheaf.energy(&scaled).unwrap() - 4.0 * e).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let sheaf = CellularSheaf::new(
            single_edge(),
            vec![2, 1],
            vec![1],
            vec![(DMatrix::from_row_slice(1, 2, &[1.0, -0.5]), DMatrix::from_row_slice(1, 1, &[2.0]))],
        )
        .unwrap();
        let text = sheaf.to_json_string().unwrap();
        let back = CellularSheaf::from_json_str(&text).unwrap();
        assert_eq!(back.vertex_dims(), sheaf.vertex_dims());
        assert_eq!(back.laplacian(), sheaf.laplacian());
        assert!(CellularSheaf::from_json_str("{}").is_err());
    }
}

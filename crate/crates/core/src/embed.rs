//! Embedding containers, canonical whitening, and the synthetic scenario
//! generators (latent manifold, two-cluster sign-flip, ReLU bridge) used to
//! exercise the invariants end to end.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::{load_matrix_csv, save_matrix_csv};
use crate::pwl::{compose, PwlFunction};
use crate::rng::rng_from_seed;
use crate::site::{
    build_knn_site, cut_edges, parse_edge_list, write_edge_list, Edge, Graph, SiteConfig,
};

#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub modality_id: String,
    pub data: DMatrix<f64>,
    pub whitened: bool,
}

impl EmbeddingSet {
    pub fn new(modality_id: impl Into<String>, data: DMatrix<f64>) -> Result<Self> {
        let modality_id = modality_id.into();
        if modality_id.is_empty()
            || !modality_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(invalid(format!(
                "modality id {modality_id:?} must be non-empty [A-Za-z0-9_-]"
            )));
        }
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(invalid("embedding matrix must be non-empty"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite entry in modality {modality_id}")));
        }
        Ok(EmbeddingSet { modality_id, data, whitened: false })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Affine whitening map z ↦ transform·(z − mean) with a ridge-regularized
/// inverse square root transform.
#[derive(Debug, Clone)]
pub struct Whitener {
    mean: DVector<f64>,
    transform: DMatrix<f64>,
    ridge: f64,
}

impl Whitener {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn to_json_string(&self) -> Result<String> {
        let j = WhitenerJson {
            dim: self.mean.len(),
            mean: self.mean.iter().copied().collect(),
            transform_row_major: self.transform.transpose().as_slice().to_vec(),
            ridge: self.ridge,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let j: WhitenerJson = serde_json::from_str(text)?;
        if j.mean.len() != j.dim || j.transform_row_major.len() != j.dim * j.dim {
            return Err(invalid("whitener JSON has inconsistent dimensions"));
        }
        Ok(Whitener {
            mean: DVector::from_vec(j.mean),
            transform: DMatrix::from_row_slice(j.dim, j.dim, &j.transform_row_major),
            ridge: j.ridge,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct WhitenerJson {
    dim: usize,
    mean: Vec<f64>,
    transform_row_major: Vec<f64>,
    ridge: f64,
}

fn population_covariance(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = data.nrows() as f64;
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n;
    (mean, cov)
}

/// Default ridge: 1e-8 · trace(Σ)/d, a scale-aware floor for near-singular
/// covariances.
pub fn default_ridge(data: &DMatrix<f64>) -> f64 {
    let (_, cov) = population_covariance(data);
    1e-8 * cov.trace() / cov.nrows() as f64
}

/// Fit transform = (Σ + τI)^{-1/2} via symmetric eigendecomposition, with
/// eigenvalues floored at zero before the ridge is added. `ridge: None`
/// selects the default.
pub fn fit_whitener(e: &EmbeddingSet, ridge: Option<f64>) -> Result<Whitener> {
    if e.n() < 2 {
        return Err(invalid("whitening needs at least 2 rows"));
    }
    let tau = ridge.unwrap_or_else(|| default_ridge(&e.data));
    if !tau.is_finite() || tau < 0.0 {
        return Err(invalid(format!("ridge must be a nonnegative finite real, got {tau}")));
    }
    let (mean, cov) = population_covariance(&e.data);
    let (eigvals, eigvecs) = crate::linalg::sym_eigen_ascending(&cov);
    let floored: Vec<f64> = eigvals.iter().map(|&l| l.max(0.0) + tau).collect();
    let scale_tol = 1e-12 * (1.0 + floored.last().copied().unwrap_or(0.0));
    if floored.iter().any(|&l| l <= scale_tol) {
        return Err(Error::SingularCovariance);
    }
    let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
        floored.len(),
        floored.iter().map(|&l| 1.0 / l.sqrt()),
    ));
    let transform = &eigvecs * inv_sqrt * eigvecs.transpose();
    Ok(Whitener { mean, transform, ridge: tau })
}

pub fn apply_whitener(w: &Whitener, e: &EmbeddingSet) -> Result<EmbeddingSet> {
    if e.dim() != w.mean.len() {
        return Err(invalid(format!(
            "whitener dimension {} does not match data dimension {}",
            w.mean.len(),
            e.dim()
        )));
    }
    let mut out = e.data.clone();
    for mut row in out.row_iter_mut() {
        let z = &w.transform * (row.transpose() - &w.mean);
        row.copy_from(&z.transpose());
    }
    Ok(EmbeddingSet { modality_id: e.modality_id.clone(), data: out, whitened: true })
}

/// Seeded shuffle split; returns (train, test) row indices.
pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(invalid(format!("train fraction {train_frac} outside [0, 1]")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let n_train = ((n as f64) * train_frac).round() as usize;
    let test = idx.split_off(n_train.min(n));
    Ok((idx, test))
}

/// Deterministic uniform samples in [0,1]^q.
pub fn gen_latent_manifold(n: usize, q: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || q == 0 {
        return Err(invalid("latent manifold needs n >= 1 and q >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok(DMatrix::from_row_iterator(n, q, (0..n * q).map(|_| rng.random::<f64>())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioMeta {
    SignFlip {
        /// true = positive-sign cluster.
        partition: Vec<bool>,
        n_cut: usize,
    },
    ReluBridge {
        width: usize,
        g: PwlFunction,
        h: PwlFunction,
        composed: PwlFunction,
    },
}

#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub latent: DMatrix<f64>,
    pub modalities: Vec<EmbeddingSet>,
    pub site: Graph,
    pub meta: ScenarioMeta,
    pub seed: u64,
}

impl SyntheticScenario {
    pub fn modality(&self, id: &str) -> Result<&EmbeddingSet> {
        self.modalities
            .iter()
            .find(|m| m.modality_id == id)
            .ok_or_else(|| invalid(format!("scenario has no modality {id:?}")))
    }

    fn validate(&self) -> Result<()> {
        let n = self.latent.nrows();
        if self.site.n_vertices() != n {
            return Err(invalid("site vertex count does not match latent rows"));
        }
        for m in &self.modalities {
            if m.n() != n {
                return Err(invalid(format!(
                    "modality {} has {} rows; latent has {n}",
                    m.modality_id,
                    m.n()
                )));
            }
        }
        Ok(())
    }
}

/// Two sign clusters with 1-d values z_v, |z_v| ∈ [0.5, 1.5]. Modality a is
/// z itself; modality b is +z on the positive cluster and −z on the negative
/// one. Clusters are internally connected (random tree plus extras) and
/// joined by exactly n_cut distinct unit-weight cross edges.
pub fn gen_signflip_scenario(
    n_plus: usize,
    n_minus: usize,
    n_cut: usize,
    seed: u64,
) -> Result<SyntheticScenario> {
    if n_plus == 0 || n_minus == 0 {
        return Err(invalid("both clusters must be non-empty"));
    }
    if n_cut == 0 || n_cut > n_plus * n_minus {
        return Err(invalid(format!(
            "n_cut must be in 1..={} for cluster sizes ({n_plus}, {n_minus})",
            n_plus * n_minus
        )));
    }
    let n = n_plus + n_minus;
    let mut rng = rng_from_seed(seed);

    let z: Vec<f64> = (0..n)
        .map(|_| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * (0.5 + rng.random::<f64>())
        })
        .collect();
    let partition: Vec<bool> = (0..n).map(|v| v < n_plus).collect();

    let mut edges: Vec<Edge> = Vec::new();
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let push = |edges: &mut Vec<Edge>, seen: &mut BTreeSet<(usize, usize)>, u: usize, v: usize| {
        let key = (u.min(v), u.max(v));
        if u != v && seen.insert(key) {
            edges.push(Edge { u: key.0, v: key.1, weight: 1.0 });
            true
        } else {
            false
        }
    };
    for (offset, size) in [(0usize, n_plus), (n_plus, n_minus)] {
        for i in 1..size {
            let j = rng.random_range(0..i);
            push(&mut edges, &mut seen, offset + j, offset + i);
        }
        for _ in 0..size / 2 {
            let u = offset + rng.random_range(0..size);
            let v = offset + rng.random_range(0..size);
            push(&mut edges, &mut seen, u, v);
        }
    }
    let mut cross: Vec<(usize, usize)> = (0..n_plus)
        .flat_map(|u| (n_plus..n).map(move |v| (u, v)))
        .collect();
    cross.shuffle(&mut rng);
    for &(u, v) in cross.iter().take(n_cut) {
        push(&mut edges, &mut seen, u, v);
    }
    let site = Graph::new(n, edges)?;
    debug_assert_eq!(cut_edges(&site, &partition)?.len(), n_cut);

    let latent = DMatrix::from_column_slice(n, 1, &z);
    let a = EmbeddingSet::new("a", latent.clone())?;
    let mut b_data = latent.clone();
    for v in 0..n {
        if !partition[v] {
            b_data[(v, 0)] = -b_data[(v, 0)];
        }
    }
    let b = EmbeddingSet::new("b", b_data)?;

    let scenario = SyntheticScenario {
        latent,
        modalities: vec![a, b],
        site,
        meta: ScenarioMeta::SignFlip { partition, n_cut },
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Plateau sawtooth on [0,1] with exactly `w` breakpoints: pieces alternate
/// sloped (0↔1) and flat. Sloped pieces get power-of-two widths so every
/// knot value is exactly 0 or 1 in floating point; slack is absorbed by the
/// flat pieces. That keeps range(g) = domain(h) exact and makes composed
/// breakpoints and slopes exact dyadics.
fn plateau_sawtooth(w: usize) -> Result<PwlFunction> {
    let pieces = w + 1;
    let m = usize::BITS - (pieces - 1).leading_zeros(); // 2^m >= pieces
    let unit = 0.5f64.powi(m as i32);
    let mut width_units = vec![1usize; pieces];
    let flats: Vec<usize> = (0..pieces).filter(|k| k % 2 == 1).collect();
    let mut leftover = (1usize << m) - pieces;
    if leftover > 0 && flats.is_empty() {
        return Err(invalid("sawtooth needs a flat piece to absorb width slack"));
    }
    let mut fi = 0;
    while leftover > 0 {
        width_units[flats[fi % flats.len()]] += 1;
        fi += 1;
        leftover -= 1;
    }
    let mut breakpoints = Vec::with_capacity(w);
    let mut acc = 0usize;
    for &u in width_units.iter().take(pieces - 1) {
        acc += u;
        breakpoints.push(acc as f64 * unit);
    }
    let slope_mag = 1.0 / unit;
    let mut slopes = Vec::with_capacity(pieces);
    let mut dir = 1.0;
    for k in 0..pieces {
        if k % 2 == 0 {
            slopes.push(dir * slope_mag);
            dir = -dir;
        } else {
            slopes.push(0.0);
        }
    }
    PwlFunction::new((0.0, 1.0), breakpoints, 0.0, slopes)
}

/// Scenario with modalities a = x, c = g(x), b = h(g(x)) for sawtooth PWLs
/// g, h with w breakpoints each, chosen so h∘g has ≥ w²/2 breakpoints.
/// Samples are a jittered grid, so pieces of h∘g stay populated at the
/// stated n; fewer than 2 samples in any piece is an error.
pub fn gen_relu_bridge_scenario(w: usize, n: usize, seed: u64) -> Result<SyntheticScenario> {
    if w < 2 {
        return Err(invalid("width w must be >= 2"));
    }
    if n < 2 {
        return Err(invalid("need n >= 2 samples"));
    }
    let g = plateau_sawtooth(w)?;
    let mut h = plateau_sawtooth(w)?;
    let mut composed = compose(&h, &g)?;
    let target = (w * w).div_ceil(2);
    if composed.breakpoint_count() < target {
        // Fallback: rebuild h on a finer dyadic grid so its breakpoints move
        // off any coincidences with g's values, then recompose.
        h = refine_sawtooth(&h)?;
        composed = compose(&h, &g)?;
        if composed.breakpoint_count() < target {
            return Err(Error::Numerical(format!(
                "composed breakpoint count {} below target {target} even after fallback",
                composed.breakpoint_count()
            )));
        }
    }

    let mut rng = rng_from_seed(seed);
    let x: Vec<f64> = (0..n)
        .map(|i| (i as f64 + 0.5 + 0.4 * (2.0 * rng.random::<f64>() - 1.0)) / n as f64)
        .collect();
    let mut counts = vec![0usize; composed.breakpoint_count() + 1];
    for &xi in &x {
        counts[composed.breakpoints().partition_point(|&b| b <= xi)] += 1;
    }
    if let Some(piece) = counts.iter().position(|&c| c < 2) {
        return Err(invalid(format!(
            "piece {piece} of the composed function has {} samples; need >= 2 per piece, \
             increase n (got n = {n} for {} pieces)",
            counts[piece],
            counts.len()
        )));
    }

    let latent = DMatrix::from_column_slice(n, 1, &x);
    let c_vals: Vec<f64> = x.iter().map(|&xi| g.eval(xi)).collect();
    let b_vals: Vec<f64> = c_vals.iter().map(|&ci| h.eval(ci)).collect();
    let a = EmbeddingSet::new("a", latent.clone())?;
    let c = EmbeddingSet::new("c", DMatrix::from_column_slice(n, 1, &c_vals))?;
    let b = EmbeddingSet::new("b", DMatrix::from_column_slice(n, 1, &b_vals))?;
    let site = build_knn_site(&latent, &SiteConfig::default())?;

    let scenario = SyntheticScenario {
        latent,
        modalities: vec![a, c, b],
        site,
        meta: ScenarioMeta::ReluBridge { width: w, g, h, composed },
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Same shape on a grid twice as fine, with the slack pushed to the first
/// flat piece only; shifts interior breakpoints off coincidences.
fn refine_sawtooth(f: &PwlFunction) -> Result<PwlFunction> {
    let w = f.breakpoint_count();
    let pieces = w + 1;
    let m = usize::BITS - (pieces - 1).leading_zeros() + 1;
    let unit = 0.5f64.powi(m as i32);
    let total = 1usize << m;
    let mut width_units = vec![1usize; pieces];
    let first_flat = (0..pieces)
        .find(|k| k % 2 == 1)
        .ok_or_else(|| invalid("sawtooth needs a flat piece"))?;
    width_units[first_flat] += total - pieces;
    let mut breakpoints = Vec::with_capacity(w);
    let mut acc = 0usize;
    for &u in width_units.iter().take(pieces - 1) {
        acc += u;
        breakpoints.push(acc as f64 * unit);
    }
    let slope_mag = 1.0 / unit;
    let mut slopes = Vec::with_capacity(pieces);
    let mut dir = 1.0;
    for k in 0..pieces {
        if k % 2 == 0 {
            slopes.push(dir * slope_mag);
            dir = -dir;
        } else {
            slopes.push(0.0);
        }
    }
    PwlFunction::new((0.0, 1.0), breakpoints, 0.0, slopes)
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    seed: u64,
    modalities: Vec<BundleModality>,
    scenario: ScenarioMeta,
}

#[derive(Serialize, Deserialize)]
struct BundleModality {
    id: String,
    whitened: bool,
}

pub fn write_scenario_bundle(dir: impl AsRef<Path>, s: &SyntheticScenario) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_matrix_csv(dir.join("latent.csv"), &s.latent)?;
    for m in &s.modalities {
        save_matrix_csv(dir.join(format!("{}.csv", m.modality_id)), &m.data)?;
    }
    std::fs::write(dir.join("site.edges"), write_edge_list(&s.site))?;
    let meta = BundleMeta {
        seed: s.seed,
        modalities: s
            .modalities
            .iter()
            .map(|m| BundleModality { id: m.modality_id.clone(), whitened: m.whitened })
            .collect(),
        scenario: s.meta.clone(),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_scenario_bundle(dir: impl AsRef<Path>) -> Result<SyntheticScenario> {
    let dir = dir.as_ref();
    let meta: BundleMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
    let latent = load_matrix_csv(dir.join("latent.csv"))?;
    let site = parse_edge_list(&std::fs::read_to_string(dir.join("site.edges"))?)?;
    let mut modalities = Vec::with_capacity(meta.modalities.len());
    for bm in &meta.modalities {
        let data = load_matrix_csv(dir.join(format!("{}.csv", bm.id)))?;
        let mut set = EmbeddingSet::new(bm.id.clone(), data)?;
        set.whitened = bm.whitened;
        modalities.push(set);
    }
    let scenario =
        SyntheticScenario { latent, modalities, site, meta: meta.scenario, seed: meta.seed };
    scenario.validate()?;
    Ok(scenario)
}

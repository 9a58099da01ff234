//! Shared pipeline pieces behind the commands: site loading, whitening,
//! profile computation, and deterministic report emission.

use nalgebra::DMatrix;
use serde::Serialize;
use std::path::{Path, PathBuf};
use xmodal_core::embed::{apply_whitener, fit_whitener, split_indices, EmbeddingSet, Whitener};
use xmodal_core::families::FamilySpec;
use xmodal_core::invariants::{
    compatibility_relation, default_ladder, hardness, obstruction, CompatibilityProfile,
    ProfileJson,
};
use xmodal_core::io::load_matrix_csv;
use xmodal_core::rng::derive_seed;
use xmodal_core::site::{
    algebraic_connectivity, build_knn_site, parse_edge_list, Graph, SiteConfig,
};
use xmodal_core::{Error, Result};

use crate::config::{LadderConfig, RunConfig, SiteSource};

pub fn load_site(cfg: &RunConfig) -> Result<Graph> {
    match &cfg.site {
        SiteSource::Knn { latent_csv, k_nn, rbf_sigma, symmetrization } => {
            let pts = load_matrix_csv(latent_csv)?;
            let site_cfg = SiteConfig {
                k_nn: *k_nn,
                rbf_sigma: *rbf_sigma,
                symmetrization: *symmetrization,
            };
            build_knn_site(&pts, &site_cfg)
        }
        SiteSource::EdgeList { path } => parse_edge_list(&std::fs::read_to_string(path)?),
    }
}

pub fn load_raw_modalities(cfg: &RunConfig, n_expected: usize) -> Result<Vec<EmbeddingSet>> {
    cfg.modalities
        .iter()
        .map(|m| {
            let data = load_matrix_csv(&m.csv)?;
            if data.nrows() != n_expected {
                return Err(Error::InvalidInput(format!(
                    "modality {:?} has {} rows; the site has {n_expected} vertices",
                    m.id,
                    data.nrows()
                )));
            }
            EmbeddingSet::new(m.id.clone(), data)
        })
        .collect()
}

/// Fit the whitener on the seeded training split, apply it to all rows.
pub fn whiten_modality(
    set: &EmbeddingSet,
    train_frac: f64,
    ridge: Option<f64>,
    seed: u64,
) -> Result<(EmbeddingSet, Whitener)> {
    let (train, _) = split_indices(set.n(), train_frac, seed)?;
    let rows = DMatrix::from_fn(train.len(), set.dim(), |i, j| set.data[(train[i], j)]);
    let train_set = EmbeddingSet::new(set.modality_id.clone(), rows)?;
    let whitener = fit_whitener(&train_set, ridge)?;
    let out = apply_whitener(&whitener, set)?;
    Ok((out, whitener))
}

pub fn whitened_path(out_dir: &Path, id: &str) -> PathBuf {
    out_dir.join(format!("{id}.whitened.csv"))
}

/// Load the outputs of `xmodal whiten`; points at the prerequisite command
/// when they are missing.
pub fn load_whitened(cfg: &RunConfig, out_dir: &Path, n_expected: usize) -> Result<Vec<EmbeddingSet>> {
    cfg.modalities
        .iter()
        .map(|m| {
            let path = whitened_path(out_dir, &m.id);
            if !path.is_file() {
                return Err(Error::InvalidInput(format!(
                    "whitened data for modality {:?} not found at {}; run `xmodal whiten --config <config>` first",
                    m.id,
                    path.display()
                )));
            }
            let data = load_matrix_csv(&path)?;
            if data.nrows() != n_expected {
                return Err(Error::InvalidInput(format!(
                    "whitened modality {:?} has {} rows; the site has {n_expected} vertices",
                    m.id,
                    data.nrows()
                )));
            }
            let mut set = EmbeddingSet::new(m.id.clone(), data)?;
            set.whitened = true;
            Ok(set)
        })
        .collect()
}

pub fn find<'a>(sets: &'a [EmbeddingSet], id: &str) -> Result<&'a EmbeddingSet> {
    sets.iter()
        .find(|s| s.modality_id == id)
        .ok_or_else(|| Error::InvalidInput(format!("no modality {id:?} loaded")))
}

/// Field family for the obstruction path: exact scalar solves in the 1-d
/// case, the full-rank linear family otherwise.
pub fn field_family(d_in: usize, d_out: usize, lipschitz: f64) -> FamilySpec {
    if d_in == 1 && d_out == 1 {
        FamilySpec::Scalar { dim: 1 }
    } else {
        FamilySpec::LowRank { d_in, d_out, rank: d_in.min(d_out), lipschitz }
    }
}

pub fn compute_profile(
    a: &EmbeddingSet,
    b: &EmbeddingSet,
    site: &Graph,
    ladder_cfg: &LadderConfig,
    eps: f64,
    grid: &[f64],
    seed: u64,
) -> Result<CompatibilityProfile> {
    let ladder =
        default_ladder(a.dim(), b.dim(), ladder_cfg.lipschitz, ladder_cfg.depth, ladder_cfg.max_width);
    let h = hardness(&a.data, &b.data, &ladder, eps, derive_seed(seed, 0))?;
    let spec = field_family(a.dim(), b.dim(), ladder_cfg.lipschitz);
    let o = obstruction(&a.data, &b.data, &spec, site, eps, grid, derive_seed(seed, 1))?;
    Ok(CompatibilityProfile {
        pair: (a.modality_id.clone(), b.modality_id.clone()),
        epsilon: eps,
        hardness: h,
        obstruction: o,
    })
}

#[derive(Serialize)]
pub struct SiteStamp {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub lambda2: f64,
    pub n_components: usize,
}

impl SiteStamp {
    pub fn of(g: &Graph) -> SiteStamp {
        let s = algebraic_connectivity(g);
        SiteStamp {
            n_vertices: g.n_vertices(),
            n_edges: g.edges().len(),
            lambda2: s.lambda2,
            n_components: s.n_components,
        }
    }
}

#[derive(Serialize)]
pub struct RelationJson {
    pub epsilon: f64,
    pub alpha0: usize,
    pub tau0: f64,
    pub edges: Vec<(String, String)>,
}

/// Report emitted by `report` and the demos. Field order is fixed by this
/// struct, values are seed-determined, and nothing here depends on time or
/// machine, so identical runs serialize to identical bytes.
#[derive(Serialize)]
pub struct Report<D: Serialize> {
    pub version: &'static str,
    pub seed: u64,
    pub config_hash: String,
    pub error_convention: &'static str,
    pub obstruction_note: &'static str,
    pub site: SiteStamp,
    pub profiles: Vec<ProfileJson>,
    pub relations: Vec<RelationJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo: Option<D>,
}

pub const ERROR_CONVENTION: &str =
    "all reported errors are means over vertices; objectives are optimized in sum form";
pub const OBSTRUCTION_NOTE: &str =
    "obstruction values are certified only up to the lambda grid resolution";

pub fn build_relations(
    profiles: &[CompatibilityProfile],
    epsilons: &[f64],
    alpha0: usize,
    tau0: f64,
) -> Result<Vec<RelationJson>> {
    epsilons
        .iter()
        .map(|&eps| {
            let slice: Vec<CompatibilityProfile> =
                profiles.iter().filter(|p| p.epsilon == eps).cloned().collect();
            let rel = compatibility_relation(&slice, alpha0, tau0)?;
            Ok(RelationJson { epsilon: eps, alpha0: rel.alpha0, tau0: rel.tau0, edges: rel.edges })
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

//! Run configuration: one canonical JSON form, schema-validated before any
//! computation. Command-line flags override individual fields after loading.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use xmodal_core::families::{DEFAULT_DEPTH, DEFAULT_LIPSCHITZ};
use xmodal_core::site::Symmetrization;
use xmodal_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SiteSource {
    /// Build a kNN graph from latent coordinates.
    Knn {
        latent_csv: PathBuf,
        #[serde(default = "default_k")]
        k_nn: usize,
        #[serde(default)]
        rbf_sigma: Option<f64>,
        #[serde(default = "default_sym")]
        symmetrization: Symmetrization,
    },
    /// Load a ready-made edge list (`u v weight` lines).
    EdgeList { path: PathBuf },
}

fn default_k() -> usize {
    2
}

fn default_sym() -> Symmetrization {
    Symmetrization::Union
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityEntry {
    pub id: String,
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitenConfig {
    /// None uses the data-scaled default ridge.
    #[serde(default)]
    pub ridge: Option<f64>,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
}

impl Default for WhitenConfig {
    fn default() -> Self {
        WhitenConfig { ridge: None, train_frac: default_train_frac() }
    }
}

fn default_train_frac() -> f64 {
    0.8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default = "default_lipschitz")]
    pub lipschitz: f64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_max_width")]
    pub max_width: usize,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            lipschitz: default_lipschitz(),
            depth: default_depth(),
            max_width: default_max_width(),
        }
    }
}

fn default_lipschitz() -> f64 {
    DEFAULT_LIPSCHITZ
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

fn default_max_width() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub site: SiteSource,
    pub modalities: Vec<ModalityEntry>,
    #[serde(default)]
    pub whiten: WhitenConfig,
    #[serde(default)]
    pub ladder: LadderConfig,
    /// Ordered pairs (from, to) of modality ids to profile.
    pub pairs: Vec<(String, String)>,
    pub epsilons: Vec<f64>,
    /// None uses the default 17-point grid, 1e-4..1e4.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    pub seed: u64,
    #[serde(default = "default_alpha0")]
    pub alpha0: usize,
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_alpha0() -> usize {
    3
}

fn default_tau0() -> f64 {
    1e18
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.site {
            SiteSource::Knn { latent_csv, k_nn, rbf_sigma, .. } => {
                require_file(latent_csv)?;
                if *k_nn == 0 {
                    return Err(bad("site.k_nn must be >= 1"));
                }
                if let Some(s) = rbf_sigma {
                    if !(*s > 0.0) || !s.is_finite() {
                        return Err(bad(format!("site.rbf_sigma must be positive, got {s}")));
                    }
                }
            }
            SiteSource::EdgeList { path } => require_file(path)?,
        }
        if self.modalities.is_empty() {
            return Err(bad("config needs at least one modality"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.modalities {
            if !ids.insert(m.id.as_str()) {
                return Err(bad(format!("duplicate modality id {:?}", m.id)));
            }
            require_file(&m.csv)?;
        }
        if self.pairs.is_empty() {
            return Err(bad("config needs at least one pair"));
        }
        for (a, b) in &self.pairs {
            if !ids.contains(a.as_str()) || !ids.contains(b.as_str()) {
                return Err(bad(format!("pair ({a}, {b}) references an unknown modality")));
            }
            if a == b {
                return Err(bad(format!("pair ({a}, {b}) must relate two distinct modalities")));
            }
        }
        if self.epsilons.is_empty() {
            return Err(bad("epsilons must be non-empty"));
        }
        for &e in &self.epsilons {
            if !(e > 0.0) || !e.is_finite() {
                return Err(bad(format!("epsilon must be positive and finite, got {e}")));
            }
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() {
                return Err(bad("lambda_grid must be non-empty when given"));
            }
            if grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return Err(bad("lambda_grid entries must be finite and nonnegative"));
            }
            if grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(bad("lambda_grid must be strictly ascending"));
            }
        }
        if !(self.ladder.lipschitz > 0.0) || !self.ladder.lipschitz.is_finite() {
            return Err(bad("ladder.lipschitz must be positive and finite"));
        }
        if self.ladder.depth == 0 || self.ladder.max_width == 0 {
            return Err(bad("ladder.depth and ladder.max_width must be >= 1"));
        }
        if !(self.whiten.train_frac > 0.0 && self.whiten.train_frac <= 1.0) {
            return Err(bad("whiten.train_frac must lie in (0, 1]"));
        }
        if !(self.tau0 >= 0.0) {
            return Err(bad("tau0 must be nonnegative"));
        }
        Ok(())
    }

    /// Hash of the canonical serialized form; stamps reports so identical
    /// configs are recognizable.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&serde_json::to_string(self)?))
    }

    pub fn lambda_grid(&self) -> Vec<f64> {
        self.lambda_grid
            .clone()
            .unwrap_or_else(xmodal_core::invariants::default_lambda_grid)
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(bad(format!("referenced file does not exist: {}", path.display())))
    }
}

/// Output directory precedence: explicit flag, then config, then the
/// XMODAL_OUT_DIR environment variable, then ./xmodal_out.
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&RunConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = config.and_then(|c| c.out_dir.clone()) {
        return p;
    }
    if let Some(p) = std::env::var_os("XMODAL_OUT_DIR") {
        return PathBuf::from(p);
    }
    PathBuf::from("xmodal_out")
}

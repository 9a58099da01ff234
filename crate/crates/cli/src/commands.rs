//! Command implementations for the file-driven pipeline. Every command
//! reads one validated config, applies flag overrides, and writes
//! deterministic artifacts into the resolved output directory.

use std::path::{Path, PathBuf};
use xmodal_core::embed::gen_relu_bridge_scenario;
use xmodal_core::embed::write_scenario_bundle;
use xmodal_core::invariants::{CompatibilityProfile, ProfileJson};
use xmodal_core::io::save_matrix_csv;
use xmodal_core::rng::derive_seed;
use xmodal_core::site::write_edge_list;
use xmodal_core::{Error, Result};

use crate::config::{resolve_out_dir, RunConfig};
use crate::demo::{print_comparison_table, relu_analysis};
use crate::engine::{
    build_relations, compute_profile, find, load_raw_modalities, load_site, load_whitened,
    whiten_modality, whitened_path, write_json, write_text, Report, SiteStamp,
    ERROR_CONVENTION, OBSTRUCTION_NOTE,
};
use crate::svg::tradeoff_svg;

pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub pair: Option<String>,
}

/// Load + validate the config, then apply flag overrides so one effective
/// config drives computation, file naming, and the report stamp alike.
pub fn effective_config(path: &Path, ov: &Overrides) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(eps) = ov.eps {
        cfg.epsilons = vec![eps];
    }
    if let Some(pair) = &ov.pair {
        let (a, b) = pair
            .split_once(',')
            .ok_or_else(|| Error::InvalidInput(format!("--pair wants `from,to`, got {pair:?}")))?;
        cfg.pairs = vec![(a.trim().to_string(), b.trim().to_string())];
    }
    if let Some(out) = &ov.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    let out = resolve_out_dir(ov.out.as_deref(), Some(&cfg));
    Ok((cfg, out))
}

pub fn cmd_site(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let site = load_site(cfg)?;
    let stamp = SiteStamp::of(&site);
    write_text(&out_dir.join("site.edges"), &write_edge_list(&site))?;
    write_json(&out_dir.join("spectral.json"), &stamp)?;
    println!(
        "site: {} vertices, {} edges, lambda2 = {:.6e}, {} component(s)",
        stamp.n_vertices, stamp.n_edges, stamp.lambda2, stamp.n_components
    );
    if stamp.n_components > 1 {
        println!("note: the graph is disconnected; spectral bounds downstream will refuse it");
    }
    println!("wrote {}", out_dir.join("site.edges").display());
    Ok(())
}

pub fn cmd_whiten(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let site = load_site(cfg)?;
    let sets = load_raw_modalities(cfg, site.n_vertices())?;
    for (i, set) in sets.iter().enumerate() {
        let (whitened, whitener) = whiten_modality(
            set,
            cfg.whiten.train_frac,
            cfg.whiten.ridge,
            derive_seed(cfg.seed, 5000 + i as u64),
        )?;
        let csv = whitened_path(out_dir, &set.modality_id);
        if let Some(dir) = csv.parent() {
            std::fs::create_dir_all(dir)?;
        }
        save_matrix_csv(&csv, &whitened.data)?;
        write_text(
            &out_dir.join(format!("{}.whitener.json", set.modality_id)),
            &(whitener.to_json_string()? + "\n"),
        )?;
        println!("whitened {:?} -> {}", set.modality_id, csv.display());
    }
    Ok(())
}

fn profile_file(out_dir: &Path, pair: &(String, String), eps_idx: usize) -> PathBuf {
    out_dir.join(format!("{}_to_{}.eps{eps_idx}.profile.json", pair.0, pair.1))
}

/// Profiles for the configured pairs; `plot` also writes the tradeoff SVGs.
pub fn cmd_profiles(cfg: &RunConfig, out_dir: &Path, plot: bool) -> Result<()> {
    let site = load_site(cfg)?;
    let sets = load_whitened(cfg, out_dir, site.n_vertices())?;
    let grid = cfg.lambda_grid();
    for (pair_idx, pair) in cfg.pairs.iter().enumerate() {
        let a = find(&sets, &pair.0)?;
        let b = find(&sets, &pair.1)?;
        for (eps_idx, &eps) in cfg.epsilons.iter().enumerate() {
            let seed =
                derive_seed(cfg.seed, (pair_idx * cfg.epsilons.len() + eps_idx) as u64);
            let profile = compute_profile(a, b, &site, &cfg.ladder, eps, &grid, seed)?;
            print_profile(&profile);
            write_json(&profile_file(out_dir, pair, eps_idx), &ProfileJson::from(&profile))?;
            if plot {
                let svg_path =
                    out_dir.join(format!("{}_to_{}.eps{eps_idx}.tradeoff.svg", pair.0, pair.1));
                let title = format!("{} to {} (eps {:e})", pair.0, pair.1, eps);
                write_text(&svg_path, &tradeoff_svg(&title, &profile.obstruction.path))?;
            }
        }
    }
    Ok(())
}

fn print_profile(p: &CompatibilityProfile) {
    println!("pair {} -> {}  (eps {:e})", p.pair.0, p.pair.1, p.epsilon);
    match p.hardness.value {
        Some(v) => println!("  hardness: alpha = {v}"),
        None => println!("  hardness: infeasible at ladder max (best err {:.3e})", p.hardness.best_err),
    }
    for level in &p.hardness.levels {
        println!("    {:<18} err {:>12.3e}  {:?}", level.label, level.err, level.status);
    }
    match (p.obstruction.value, p.obstruction.best_lambda) {
        (Some(c), Some(l)) => println!("  obstruction: C = {c:.6e} at lambda = {l:e}"),
        _ => println!("  obstruction: infeasible on the lambda grid"),
    }
}

pub fn cmd_report(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let site = load_site(cfg)?;
    let stamp = SiteStamp::of(&site);
    write_text(&out_dir.join("site.edges"), &write_edge_list(&site))?;
    write_json(&out_dir.join("spectral.json"), &stamp)?;
    cmd_whiten(cfg, out_dir)?;
    let sets = load_whitened(cfg, out_dir, site.n_vertices())?;
    let grid = cfg.lambda_grid();
    let mut profiles = Vec::new();
    for (pair_idx, pair) in cfg.pairs.iter().enumerate() {
        let a = find(&sets, &pair.0)?;
        let b = find(&sets, &pair.1)?;
        for (eps_idx, &eps) in cfg.epsilons.iter().enumerate() {
            let seed =
                derive_seed(cfg.seed, (pair_idx * cfg.epsilons.len() + eps_idx) as u64);
            let profile = compute_profile(a, b, &site, &cfg.ladder, eps, &grid, seed)?;
            print_profile(&profile);
            write_json(&profile_file(out_dir, pair, eps_idx), &ProfileJson::from(&profile))?;
            let svg_path =
                out_dir.join(format!("{}_to_{}.eps{eps_idx}.tradeoff.svg", pair.0, pair.1));
            let title = format!("{} to {} (eps {:e})", pair.0, pair.1, eps);
            write_text(&svg_path, &tradeoff_svg(&title, &profile.obstruction.path))?;
            profiles.push(profile);
        }
    }
    let relations = build_relations(&profiles, &cfg.epsilons, cfg.alpha0, cfg.tau0)?;
    for rel in &relations {
        println!(
            "relation at eps {:e} (alpha0 {}, tau0 {:e}): {:?}",
            rel.epsilon, rel.alpha0, rel.tau0, rel.edges
        );
    }
    let report = Report::<()> {
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: cfg.hash()?,
        error_convention: ERROR_CONVENTION,
        obstruction_note: OBSTRUCTION_NOTE,
        site: stamp,
        profiles: profiles.iter().map(ProfileJson::from).collect(),
        relations,
        demo: None,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    println!("report written to {}", out_dir.join("report.json").display());
    Ok(())
}

pub fn cmd_bridge(width: usize, n: usize, seed: u64, eps: f64, out_dir: &Path) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let scenario = gen_relu_bridge_scenario(width, n, seed)?;
    write_scenario_bundle(out_dir.join("scenario"), &scenario)?;
    let analysis = relu_analysis(&scenario, eps, seed)?;
    print_comparison_table(&analysis);
    #[derive(serde::Serialize)]
    struct BridgeJson {
        width: usize,
        n: usize,
        seed: u64,
        epsilon: f64,
        certified: Vec<crate::demo::CertifiedRow>,
        composed_levels: Vec<xmodal_core::invariants::LevelRecord>,
        direct_levels: Vec<xmodal_core::invariants::LevelRecord>,
        stagewise_variation: Option<f64>,
        direct_variation: Option<f64>,
    }
    let json = BridgeJson {
        width,
        n,
        seed,
        epsilon: eps,
        certified: analysis
            .certified
            .iter()
            .map(|(from, to, h)| crate::demo::CertifiedRow {
                pair: (from.clone(), to.clone()),
                width: h.value.unwrap_or(0),
                certified_lower: h.certified_lower.unwrap_or(0),
                err: h.best_err,
            })
            .collect(),
        composed_levels: analysis.composed.levels.clone(),
        direct_levels: analysis.direct.levels.clone(),
        stagewise_variation: analysis.stagewise_variation,
        direct_variation: analysis.direct_variation,
    };
    write_json(&out_dir.join("bridge.json"), &json)?;
    println!("bridge comparison written to {}", out_dir.join("bridge.json").display());
    Ok(())
}

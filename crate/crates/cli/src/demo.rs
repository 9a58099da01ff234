//! Self-checking demonstration scenarios. Each one generates its synthetic
//! data, runs the full pipeline, asserts the structural results it is built
//! around, and writes a deterministic report; any failed assertion makes the
//! process exit nonzero.

use serde::Serialize;
use std::path::Path;
use xmodal_core::embed::{
    gen_relu_bridge_scenario, gen_signflip_scenario, write_scenario_bundle, ScenarioMeta,
    SyntheticScenario,
};
use xmodal_core::families::{estimate_parameter_lipschitz, FamilySpec};
use xmodal_core::invariants::{
    check_global_bound, check_poincare, composed_hardness, default_ladder, default_lambda_grid,
    hardness, hardness_certified_relu, obstruction, signflip_min_variation,
    stagewise_obstruction, CompatibilityProfile, CompatibilityRelation, GlobalBoundCheck,
    HardnessResult, LevelRecord, ObstructionResult, PoincareCheck, ProfileJson,
    compatibility_relation,
};
use xmodal_core::rng::derive_seed;
use xmodal_core::{Error, Result};

use crate::config::sha256_hex;
use crate::engine::{
    write_json, write_text, Report, SiteStamp, ERROR_CONVENTION, OBSTRUCTION_NOTE,
};
use crate::svg::tradeoff_svg;

/// Total squared-error budget for the sign-flip demo, summed across all
/// vertices. `obstruction` compares the per-vertex mean, so the mean-form ε
/// is this budget divided by the vertex count; keeping the budget fixed in
/// total form makes the 5% closed-form check hold uniformly in the cut size
/// (a mean-form 1e-4 would let the field bend visibly around small cuts).
const DEMO_TOTAL_ERR_BUDGET_SIGNFLIP: f64 = 1e-4;
const DEMO_EPS_RELU: f64 = 1e-6;
const SIGNFLIP_CLUSTER: usize = 30; // 60 vertices total
const RELU_SAMPLES: usize = 256;

#[derive(Serialize)]
pub struct CheckJson {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

struct Checks(Vec<CheckJson>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("check {name}: {} ({detail})", if pass { "pass" } else { "FAIL" });
        self.0.push(CheckJson { name: name.to_string(), pass, detail });
    }

    fn finish(self) -> Result<Vec<CheckJson>> {
        let failed: Vec<&str> =
            self.0.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        if failed.is_empty() {
            Ok(self.0)
        } else {
            Err(Error::CheckFailed(format!("demo checks failed: {}", failed.join(", "))))
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemoJson {
    Signflip {
        cut: usize,
        closed_form_min_variation: f64,
        obstruction_value: f64,
        ratio: f64,
        poincare: PoincareCheck,
        global_bound: GlobalBoundCheck,
        checks: Vec<CheckJson>,
    },
    Relu {
        width: usize,
        expected_direct_lower: usize,
        certified: Vec<CertifiedRow>,
        composed_levels: Vec<LevelRecord>,
        direct_levels: Vec<LevelRecord>,
        stagewise_variation: Option<f64>,
        direct_variation: Option<f64>,
        checks: Vec<CheckJson>,
    },
}

#[derive(Serialize)]
pub struct CertifiedRow {
    pub pair: (String, String),
    pub width: usize,
    pub certified_lower: usize,
    pub err: f64,
}

/// Two sign clusters joined by `cut` edges: a single nonlinear map aligns
/// the modalities, but any perfect scalar parameter field must flip sign
/// across the cut, so its variation is pinned at 4·cut.
pub fn run_signflip(cut: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let scenario = gen_signflip_scenario(SIGNFLIP_CLUSTER, SIGNFLIP_CLUSTER, cut, seed)?;
    write_scenario_bundle(out_dir.join("scenario"), &scenario)?;
    let xa = &scenario.modality("a")?.data;
    let xb = &scenario.modality("b")?.data;
    let site = &scenario.site;
    let ScenarioMeta::SignFlip { partition, .. } = &scenario.meta else {
        return Err(Error::Numerical("sign-flip scenario carries wrong metadata".into()));
    };
    let mut checks = Checks::new();

    let expected = 4.0 * cut as f64;
    let closed = signflip_min_variation(site, partition)?;
    checks.record(
        "perfect-fit minimum variation equals 4*cut",
        closed == expected,
        format!("{closed} vs {expected}"),
    );

    let spec = FamilySpec::Scalar { dim: 1 };
    let grid = default_lambda_grid();
    let eps = DEMO_TOTAL_ERR_BUDGET_SIGNFLIP / site.n_vertices() as f64;
    let obs = obstruction(xa, xb, &spec, site, eps, &grid, derive_seed(seed, 1))?;
    let c = obs.value.ok_or_else(|| {
        Error::CheckFailed(format!("obstruction path has no feasible point at eps={eps:.3e}"))
    })?;
    let ratio = c / expected;
    checks.record(
        "lambda-path obstruction within 5% of 4*cut",
        (ratio - 1.0).abs() <= 0.05,
        format!("C = {c:.6}, target {expected}, ratio {ratio:.4}, eps {eps:.3e}"),
    );

    let best_idx = obs
        .path
        .iter()
        .position(|p| Some(p.lambda) == obs.best_lambda)
        .expect("best lambda comes from the path");
    let field = &obs.fields[best_idx];

    let poincare = check_poincare(field, site)?;
    checks.record(
        "Poincare inequality on the solved field",
        poincare.holds,
        format!("lhs {:.6e} <= rhs {:.6e}", poincare.lhs, poincare.rhs),
    );

    let radius = field
        .params()
        .iter()
        .map(|w| w.norm())
        .fold(field.mean_params().norm(), f64::max)
        * 1.5
        + 0.1;
    let lw = estimate_parameter_lipschitz(&spec, xa, xb, radius, derive_seed(seed, 2))?;
    let bound = check_global_bound(field, xa, xb, site, &lw)?;
    checks.record(
        "global-map error bound on the solved field",
        bound.holds,
        format!("lhs {:.6e} <= bound {:.6e}", bound.mean_err_at_mean, bound.bound),
    );

    // Full profile at the same ε: the ladder records how far each single-map
    // family gets, while every scalar field pays the cut in variation.
    let ladder = default_ladder(1, 1, 10.0, 1, 3);
    let h = hardness(xa, xb, &ladder, eps, derive_seed(seed, 3))?;
    let profile = CompatibilityProfile {
        pair: ("a".to_string(), "b".to_string()),
        epsilon: eps,
        hardness: h,
        obstruction: obs.clone(),
    };
    write_text(&out_dir.join("a_to_b.tradeoff.svg"), &tradeoff_svg("a to b", &obs.path))?;

    let config_hash = sha256_hex(&format!("demo/signflip cut={cut} seed={seed} n=60"));
    let demo = DemoJson::Signflip {
        cut,
        closed_form_min_variation: closed,
        obstruction_value: c,
        ratio,
        poincare,
        global_bound: bound,
        checks: checks.finish()?,
    };
    let report = Report {
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config_hash,
        error_convention: ERROR_CONVENTION,
        obstruction_note: OBSTRUCTION_NOTE,
        site: SiteStamp::of(site),
        profiles: vec![ProfileJson::from(&profile)],
        relations: vec![],
        demo: Some(demo),
    };
    write_json(&out_dir.join("report.json"), &report)?;
    println!("report written to {}", out_dir.join("report.json").display());
    Ok(())
}

pub struct ReluAnalysis {
    pub certified: Vec<(String, String, HardnessResult)>,
    pub composed: HardnessResult,
    pub direct: HardnessResult,
    pub obstructions: Vec<((String, String), ObstructionResult)>,
    pub stagewise_variation: Option<f64>,
    pub direct_variation: Option<f64>,
}

/// Certified width bounds plus composed-vs-direct comparisons for a bridge
/// scenario; shared by `demo relu` and `bridge`.
pub fn relu_analysis(scenario: &SyntheticScenario, eps: f64, seed: u64) -> Result<ReluAnalysis> {
    let pairs = [("a", "c"), ("c", "b"), ("a", "b")];
    let mut certified = Vec::new();
    for (from, to) in pairs {
        let h = hardness_certified_relu(scenario, from, to, eps)?;
        certified.push((from.to_string(), to.to_string(), h));
    }
    let xa = &scenario.modality("a")?.data;
    let xc = &scenario.modality("c")?.data;
    let xb = &scenario.modality("b")?.data;
    let ScenarioMeta::ReluBridge { width, .. } = &scenario.meta else {
        return Err(Error::Numerical("bridge scenario carries wrong metadata".into()));
    };
    let ladder = default_ladder(1, 1, 10.0, 1, width + 2);
    let composed = composed_hardness(xa, xc, xb, &ladder, &ladder, eps, derive_seed(seed, 10))?;
    let direct = hardness(xa, xb, &ladder, eps, derive_seed(seed, 11))?;

    // λ = 0 keeps the path feasible on exact 1-d data (pointwise ratios),
    // so the obstruction side of the profile is always populated.
    let mut grid = vec![0.0];
    grid.extend(default_lambda_grid());
    let spec = FamilySpec::Scalar { dim: 1 };
    let site = &scenario.site;
    let mut obstructions = Vec::new();
    for (k, (from, to)) in pairs.iter().enumerate() {
        let (x, y) = (&scenario.modality(from)?.data, &scenario.modality(to)?.data);
        let o = obstruction(x, y, &spec, site, eps, &grid, derive_seed(seed, 20 + k as u64))?;
        obstructions.push(((from.to_string(), to.to_string()), o));
    }
    let stage = stagewise_obstruction(
        xa,
        xc,
        xb,
        &spec,
        &spec,
        site,
        eps,
        &grid,
        &grid,
        derive_seed(seed, 30),
    )?;
    let direct_variation = obstructions[2].1.value;
    Ok(ReluAnalysis {
        certified,
        composed,
        direct,
        obstructions,
        stagewise_variation: stage.value,
        direct_variation,
    })
}

pub fn print_comparison_table(analysis: &ReluAnalysis) {
    println!("certified width bounds:");
    println!("  {:<8} {:>6} {:>6} {:>12}", "pair", "width", "lower", "err");
    for (from, to, h) in &analysis.certified {
        println!(
            "  {:<8} {:>6} {:>6} {:>12.3e}",
            format!("{from}->{to}"),
            h.value.unwrap_or(0),
            h.certified_lower.unwrap_or(0),
            h.best_err
        );
    }
    println!("composed (a->c->b) vs direct (a->b) along the trained ladder:");
    println!("  {:<22} {:>14} {:>14}", "level", "composed err", "direct err");
    let rows = analysis.composed.levels.len().max(analysis.direct.levels.len());
    for i in 0..rows {
        let c = analysis.composed.levels.get(i);
        let d = analysis.direct.levels.get(i);
        println!(
            "  {:<22} {:>14} {:>14}",
            c.or(d).map(|l| l.label.clone()).unwrap_or_default(),
            c.map(|l| format!("{:.3e}", l.err)).unwrap_or_else(|| "-".into()),
            d.map(|l| format!("{:.3e}", l.err)).unwrap_or_else(|| "-".into()),
        );
    }
    match (analysis.stagewise_variation, analysis.direct_variation) {
        (Some(s), Some(d)) => {
            println!("obstruction: stagewise C = {s:.6e}, direct C = {d:.6e}");
        }
        _ => println!("obstruction: infeasible on grid for at least one route"),
    }
}

/// Bridge construction: both stages are certified easy (width ≤ w+1) while
/// the direct map is certified hard (width ≥ about w²/2; 6 at w = 2), so
/// the thresholded relation keeps a→c and c→b but drops a→b.
pub fn run_relu(width: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let scenario = gen_relu_bridge_scenario(width, RELU_SAMPLES, seed)?;
    write_scenario_bundle(out_dir.join("scenario"), &scenario)?;
    let analysis = relu_analysis(&scenario, DEMO_EPS_RELU, seed)?;
    print_comparison_table(&analysis);

    let mut checks = Checks::new();
    let stage_cap = width + 1;
    let expected_lower = if width == 2 { 6 } else { (width * width).div_ceil(2) };
    let by_pair = |from: &str, to: &str| -> &HardnessResult {
        &analysis
            .certified
            .iter()
            .find(|(f, t, _)| f == from && t == to)
            .expect("all three pairs are certified")
            .2
    };
    let h_ac = by_pair("a", "c");
    let h_cb = by_pair("c", "b");
    let h_ab = by_pair("a", "b");
    checks.record(
        "stage a->c certified width within budget",
        h_ac.value.is_some_and(|v| v <= stage_cap),
        format!("width {:?} <= {stage_cap}", h_ac.value),
    );
    checks.record(
        "stage c->b certified width within budget",
        h_cb.value.is_some_and(|v| v <= stage_cap),
        format!("width {:?} <= {stage_cap}", h_cb.value),
    );
    checks.record(
        "direct a->b certified lower bound",
        h_ab.certified_lower.is_some_and(|l| l >= expected_lower),
        format!("lower {:?} >= {expected_lower}", h_ab.certified_lower),
    );

    let profiles: Vec<CompatibilityProfile> = analysis
        .certified
        .iter()
        .zip(&analysis.obstructions)
        .map(|((from, to, h), (_, o))| CompatibilityProfile {
            pair: (from.clone(), to.clone()),
            epsilon: DEMO_EPS_RELU,
            hardness: h.clone(),
            obstruction: o.clone(),
        })
        .collect();
    let relation: CompatibilityRelation =
        compatibility_relation(&profiles, stage_cap, 1e18)?;
    let has = |x: &str, y: &str| relation.edges.iter().any(|e| e.0 == x && e.1 == y);
    checks.record(
        "relation keeps a->c and c->b",
        has("a", "c") && has("c", "b"),
        format!("edges {:?}", relation.edges),
    );
    checks.record(
        "relation drops a->b",
        !has("a", "b"),
        format!("alpha0 = {stage_cap}, direct width {:?}", h_ab.value),
    );

    for ((from, to), o) in &analysis.obstructions {
        write_text(
            &out_dir.join(format!("{from}_to_{to}.tradeoff.svg")),
            &tradeoff_svg(&format!("{from} to {to}"), &o.path),
        )?;
    }

    let config_hash =
        sha256_hex(&format!("demo/relu width={width} seed={seed} n={RELU_SAMPLES}"));
    let demo = DemoJson::Relu {
        width,
        expected_direct_lower: expected_lower,
        certified: analysis
            .certified
            .iter()
            .map(|(from, to, h)| CertifiedRow {
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
        checks: checks.finish()?,
    };
    let report = Report {
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config_hash,
        error_convention: ERROR_CONVENTION,
        obstruction_note: OBSTRUCTION_NOTE,
        site: SiteStamp::of(&scenario.site),
        profiles: profiles.iter().map(ProfileJson::from).collect(),
        relations: vec![crate::engine::RelationJson {
            epsilon: DEMO_EPS_RELU,
            alpha0: relation.alpha0,
            tau0: relation.tau0,
            edges: relation.edges,
        }],
        demo: Some(demo),
    };
    write_json(&out_dir.join("report.json"), &report)?;
    println!("report written to {}", out_dir.join("report.json").display());
    Ok(())
}

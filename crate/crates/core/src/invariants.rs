//! The compatibility invariants: projection hardness over the family
//! ladder, sheaf-regularized parameter fields with their error/variation
//! tradeoff, the obstruction value C(ε), composed/stagewise variants, and
//! executable forms of the Poincaré and global-error bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::families::{
    fit_low_rank, fit_mlp, fit_procrustes, fit_scalar, mlp_flat_grad, mlp_project_theta,
    prediction_error, FamilySpec, ParamLipschitz, ProjectionMap,
};
use crate::linalg::spd_solve;
use crate::rng::derive_seed;
use crate::site::{algebraic_connectivity, cut_edges, Graph};

pub const DEFAULT_MLP_RESTARTS: usize = 4;

/// One flat parameter vector per vertex, a 0-cochain of the constant sheaf
/// with stalk dimension `spec.param_count()`. Maps unflattened from field
/// entries are not forced to satisfy family constraints (linear classes are
/// fitted unconstrained per vertex); `check_family_invariants` reports on
/// the classes where the constraint is maintained.
#[derive(Debug, Clone)]
pub struct ParameterField {
    pub spec: FamilySpec,
    params: Vec<DVector<f64>>,
}

impl ParameterField {
    pub fn new(spec: FamilySpec, params: Vec<DVector<f64>>) -> Result<Self> {
        spec.validate()?;
        let p = spec.param_count();
        if params.is_empty() {
            return Err(invalid("parameter field needs at least one vertex"));
        }
        for (v, w) in params.iter().enumerate() {
            if w.len() != p {
                return Err(invalid(format!(
                    "vertex {v} has {} parameters; spec needs {p}",
                    w.len()
                )));
            }
            if w.iter().any(|t| !t.is_finite()) {
                return Err(invalid(format!("non-finite parameter at vertex {v}")));
            }
        }
        Ok(ParameterField { spec, params })
    }

    pub fn constant(spec: FamilySpec, theta: DVector<f64>, n: usize) -> Result<Self> {
        ParameterField::new(spec, vec![theta; n])
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }

    pub fn param_dim(&self) -> usize {
        self.spec.param_count()
    }

    pub fn params(&self) -> &[DVector<f64>] {
        &self.params
    }

    pub fn mean_params(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.param_dim());
        for w in &self.params {
            acc += w;
        }
        acc / self.params.len() as f64
    }

    pub fn map_at(&self, v: usize) -> Result<ProjectionMap> {
        ProjectionMap::new(self.spec.clone(), self.params[v].clone())
    }

    /// Largest ‖w_v − w̄‖ over vertices.
    pub fn max_deviation_from_mean(&self) -> f64 {
        let mean = self.mean_params();
        self.params.iter().map(|w| (w - &mean).norm()).fold(0.0, f64::max)
    }

    pub fn check_family_invariants(&self) -> Result<()> {
        for v in 0..self.n() {
            self.map_at(v)?.check_invariants()?;
        }
        Ok(())
    }
}

fn check_field_data(
    field: &ParameterField,
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
) -> Result<()> {
    if xa.nrows() != field.n() || xb.nrows() != field.n() {
        return Err(invalid(format!(
            "field has {} vertices; data has {}/{} rows",
            field.n(),
            xa.nrows(),
            xb.nrows()
        )));
    }
    if xa.ncols() != field.spec.d_in() || xb.ncols() != field.spec.d_out() {
        return Err(invalid("data dimensions do not match the family spec"));
    }
    Ok(())
}

/// Mean per-vertex loss (1/n)Σ_v ‖g_{w_v}(x_v) − y_v‖².
pub fn local_error(field: &ParameterField, xa: &DMatrix<f64>, xb: &DMatrix<f64>) -> Result<f64> {
    check_field_data(field, xa, xb)?;
    let mut total = 0.0;
    for v in 0..field.n() {
        let map = field.map_at(v)?;
        let pred = map.apply(&xa.row(v).transpose());
        total += (pred - xb.row(v).transpose()).norm_squared();
    }
    Ok(total / field.n() as f64)
}

/// Dirichlet energy Σ_e w_e‖w_u − w_v‖² of the field over the site; equals
/// the constant-sheaf energy of the same cochain.
pub fn variation_energy(field: &ParameterField, g: &Graph) -> Result<f64> {
    if g.n_vertices() != field.n() {
        return Err(invalid("graph size does not match field"));
    }
    let mut total = 0.0;
    for e in g.edges() {
        total += e.weight * (&field.params[e.u] - &field.params[e.v]).norm_squared();
    }
    Ok(total)
}

fn family_label(spec: &FamilySpec) -> String {
    match spec {
        FamilySpec::Orthogonal { .. } => "orthogonal".to_string(),
        FamilySpec::LowRank { rank, .. } => format!("lowrank(r={rank})"),
        FamilySpec::Mlp { width, .. } => format!("mlp(w={width})"),
        FamilySpec::Scalar { .. } => "scalar".to_string(),
    }
}

/// Fit one global map of the given class; returns the map and its error.
fn fit_spec(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    spec: &FamilySpec,
    seed: u64,
) -> Result<(ProjectionMap, f64)> {
    match spec {
        FamilySpec::Orthogonal { .. } => {
            let fit = fit_procrustes(x, y)?;
            let err = prediction_error(&fit.map, x, y)?;
            Ok((fit.map, err))
        }
        FamilySpec::LowRank { rank, lipschitz, .. } => {
            let (map, report) = fit_low_rank(x, y, *rank, *lipschitz)?;
            Ok((map, report.final_err))
        }
        FamilySpec::Mlp { .. } => {
            let (map, report) = fit_mlp(x, y, spec, seed, DEFAULT_MLP_RESTARTS)?;
            Ok((map, report.final_err))
        }
        FamilySpec::Scalar { .. } => {
            let (map, report) = fit_scalar(x, y)?;
            Ok((map, report.final_err))
        }
    }
}

/// Best achievable error with a single map of this class (constant field).
pub fn global_map_error(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    spec: &FamilySpec,
    seed: u64,
) -> Result<(f64, ProjectionMap)> {
    let (map, err) = fit_spec(xa, xb, spec, seed)?;
    Ok((err, map))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldFitInfo {
    pub converged: bool,
    pub iterations: usize,
}

/// Minimize Σ_v ℓ(g_{w_v}(x_v), y_v) + λ Σ_e w_e‖w_u − w_v‖².
///
/// Scalar and linear-parameter classes are convex quadratics solved exactly
/// (SPD system with iterative refinement); mlp runs projected block gradient
/// descent from the constant field at the fitted global map.
pub fn fit_parameter_field(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    spec: &FamilySpec,
    g: &Graph,
    lambda: f64,
    seed: u64,
) -> Result<(ParameterField, FieldFitInfo)> {
    spec.validate()?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(invalid(format!("lambda must be nonnegative and finite, got {lambda}")));
    }
    let n = g.n_vertices();
    if xa.nrows() != n || xb.nrows() != n {
        return Err(invalid("data rows must match the site vertex count"));
    }
    if xa.ncols() != spec.d_in() || xb.ncols() != spec.d_out() {
        return Err(invalid("data dimensions do not match the family spec"));
    }
    match spec {
        FamilySpec::Scalar { .. } => fit_field_scalar(xa, xb, g, lambda, spec),
        FamilySpec::Orthogonal { .. } | FamilySpec::LowRank { .. } => {
            fit_field_linear(xa, xb, g, lambda, spec)
        }
        FamilySpec::Mlp { .. } => fit_field_mlp(xa, xb, g, lambda, spec, seed),
    }
}

fn fit_field_scalar(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    g: &Graph,
    lambda: f64,
    spec: &FamilySpec,
) -> Result<(ParameterField, FieldFitInfo)> {
    let n = g.n_vertices();
    let d: Vec<f64> = (0..n).map(|v| xa.row(v).norm_squared()).collect();
    let s: Vec<f64> = (0..n).map(|v| xa.row(v).dot(&xb.row(v))).collect();
    let w = if lambda == 0.0 {
        DVector::from_fn(n, |v, _| if d[v] > 0.0 { s[v] / d[v] } else { 0.0 })
    } else {
        let mut a = crate::site::graph_laplacian(g) * lambda;
        for v in 0..n {
            a[(v, v)] += d[v];
        }
        spd_solve(&a, &DVector::from_vec(s))?
    };
    let params = (0..n).map(|v| DVector::from_element(1, w[v])).collect();
    Ok((ParameterField::new(spec.clone(), params)?, FieldFitInfo { converged: true, iterations: 1 }))
}

fn fit_field_linear(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    g: &Graph,
    lambda: f64,
    spec: &FamilySpec,
) -> Result<(ParameterField, FieldFitInfo)> {
    let n = g.n_vertices();
    let d_in = spec.d_in();
    let d_out = spec.d_out();
    let p = d_in * d_out;
    if lambda == 0.0 {
        // Decoupled, underdetermined per vertex: minimum-norm interpolant
        // W_v = y_v x_vᵀ / ‖x_v‖².
        let params = (0..n)
            .map(|v| {
                let x = xa.row(v).transpose();
                let y = xb.row(v).transpose();
                let nx = x.norm_squared();
                let w = if nx > 0.0 { y * x.transpose() / nx } else { DMatrix::zeros(d_out, d_in) };
                DVector::from_vec(w.transpose().as_slice().to_vec())
            })
            .collect();
        return Ok((
            ParameterField::new(spec.clone(), params)?,
            FieldFitInfo { converged: true, iterations: 1 },
        ));
    }
    // Row-major vec(W): index (o, i) ↦ o·d_in + i. Data Hessian block is
    // I_{d_out} ⊗ x_v x_vᵀ; the coupling is λ(L ⊗ I_p) in vertex-major order.
    let lap = crate::site::graph_laplacian(g);
    let mut a = DMatrix::zeros(n * p, n * p);
    let mut b = DVector::zeros(n * p);
    for v in 0..n {
        let x = xa.row(v);
        let y = xb.row(v);
        let base = v * p;
        for o in 0..d_out {
            for i in 0..d_in {
                for i2 in 0..d_in {
                    a[(base + o * d_in + i, base + o * d_in + i2)] += x[i] * x[i2];
                }
                b[base + o * d_in + i] += y[o] * x[i];
            }
        }
    }
    for u in 0..n {
        for v in 0..n {
            let luv = lap[(u, v)];
            if luv != 0.0 {
                for k in 0..p {
                    a[(u * p + k, v * p + k)] += lambda * luv;
                }
            }
        }
    }
    let w = spd_solve(&a, &b)?;
    let params = (0..n).map(|v| DVector::from_column_slice(&w.as_slice()[v * p..(v + 1) * p])).collect();
    Ok((ParameterField::new(spec.clone(), params)?, FieldFitInfo { converged: true, iterations: 1 }))
}

fn field_objective(
    field: &[DVector<f64>],
    spec: &FamilySpec,
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    g: &Graph,
    lambda: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for (v, w) in field.iter().enumerate() {
        let map = ProjectionMap::new(spec.clone(), w.clone())?;
        total += (map.apply(&xa.row(v).transpose()) - xb.row(v).transpose()).norm_squared();
    }
    for e in g.edges() {
        total += lambda * e.weight * (&field[e.u] - &field[e.v]).norm_squared();
    }
    Ok(total)
}

fn fit_field_mlp(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    g: &Graph,
    lambda: f64,
    spec: &FamilySpec,
    seed: u64,
) -> Result<(ParameterField, FieldFitInfo)> {
    let n = g.n_vertices();
    let (gmap, _) = fit_spec(xa, xb, spec, derive_seed(seed, 0))?;
    let mut field: Vec<DVector<f64>> = vec![gmap.theta().clone(); n];
    let mut obj = field_objective(&field, spec, xa, xb, g, lambda)?;
    let mut step = 0.05;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..500 {
        // Gradient: per-vertex data term plus the graph coupling.
        let mut grads: Vec<DVector<f64>> = Vec::with_capacity(n);
        for (v, w) in field.iter().enumerate() {
            let xr = DMatrix::from_row_slice(1, xa.ncols(), xa.row(v).transpose().as_slice());
            let yr = DMatrix::from_row_slice(1, xb.ncols(), xb.row(v).transpose().as_slice());
            grads.push(mlp_flat_grad(spec, w, &xr, &yr)?);
        }
        for e in g.edges() {
            let diff = (&field[e.u] - &field[e.v]) * (2.0 * lambda * e.weight);
            grads[e.u] += &diff;
            grads[e.v] -= &diff;
        }
        let mut accepted = false;
        while step > 1e-18 {
            let cand: Vec<DVector<f64>> = field
                .iter()
                .zip(&grads)
                .map(|(w, gr)| mlp_project_theta(spec, &(w - gr * step)))
                .collect::<Result<_>>()?;
            let cand_obj = field_objective(&cand, spec, xa, xb, g, lambda)?;
            if cand_obj <= obj {
                let improved = obj - cand_obj >= 1e-12 * (1.0 + obj);
                field = cand;
                obj = cand_obj;
                step *= 1.1;
                accepted = true;
                if !improved {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    Ok((ParameterField::new(spec.clone(), field)?, FieldFitInfo { converged, iterations }))
}

/// 17 log-spaced points from 1e-4 to 1e4.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..17).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub err_local: f64,
    pub variation: f64,
}

#[derive(Debug, Clone)]
pub struct ObstructionResult {
    pub epsilon: f64,
    /// Minimal variation among grid points reaching err ≤ ε; None means
    /// infeasible on this grid.
    pub value: Option<f64>,
    pub best_lambda: Option<f64>,
    pub path: Vec<PathPoint>,
    pub fields: Vec<ParameterField>,
}

pub fn obstruction(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    spec: &FamilySpec,
    g: &Graph,
    eps: f64,
    lambda_grid: &[f64],
    seed: u64,
) -> Result<ObstructionResult> {
    if lambda_grid.is_empty() {
        return Err(invalid("lambda grid must be non-empty"));
    }
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) || lambda_grid[0] < 0.0 {
        return Err(invalid("lambda grid must be ascending and nonnegative"));
    }
    if !(eps >= 0.0) {
        return Err(invalid("eps must be nonnegative"));
    }
    let mut path = Vec::with_capacity(lambda_grid.len());
    let mut fields = Vec::with_capacity(lambda_grid.len());
    let mut value: Option<f64> = None;
    let mut best_lambda = None;
    for (k, &lambda) in lambda_grid.iter().enumerate() {
        let (field, _) = fit_parameter_field(xa, xb, spec, g, lambda, derive_seed(seed, k as u64))?;
        let err_local = local_error(&field, xa, xb)?;
        let variation = variation_energy(&field, g)?;
        if err_local <= eps && value.is_none_or(|best| variation < best) {
            value = Some(variation);
            best_lambda = Some(lambda);
        }
        path.push(PathPoint { lambda, err_local, variation });
        fields.push(field);
    }
    Ok(ObstructionResult { epsilon: eps, value, best_lambda, path, fields })
}

/// Closed-form minimum variation among perfect sign-flip fits: 4·Σ_cut w_e,
/// verified against the energy of the explicit ±1 field.
pub fn signflip_min_variation(g: &Graph, partition: &[bool]) -> Result<f64> {
    let cut = cut_edges(g, partition)?;
    let closed: f64 = 4.0 * cut.iter().map(|&i| g.edges()[i].weight).sum::<f64>();
    let spec = FamilySpec::Scalar { dim: 1 };
    let params = partition
        .iter()
        .map(|&plus| DVector::from_element(1, if plus { 1.0 } else { -1.0 }))
        .collect();
    let field = ParameterField::new(spec, params)?;
    let energy = variation_energy(&field, g)?;
    if (energy - closed).abs() > 1e-12 * (1.0 + closed) {
        return Err(Error::Numerical(format!(
            "sign-flip variation mismatch: closed form {closed}, field energy {energy}"
        )));
    }
    Ok(closed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Σ_v‖w_v − w̄‖² ≤ Var/λ₂ on a connected graph.
pub fn check_poincare(field: &ParameterField, g: &Graph) -> Result<PoincareCheck> {
    if g.n_vertices() != field.n() {
        return Err(invalid("graph size does not match field"));
    }
    let spectral = algebraic_connectivity(g);
    if spectral.n_components > 1 {
        return Err(Error::Disconnected { components: spectral.n_components });
    }
    let mean = field.mean_params();
    let lhs: f64 = field.params().iter().map(|w| (w - &mean).norm_squared()).sum();
    let variation = variation_energy(field, g)?;
    let rhs = if g.n_vertices() == 1 { 0.0 } else { variation / spectral.lambda2 };
    let holds = lhs <= rhs + 1e-9 * (1.0 + lhs.abs() + rhs.abs());
    Ok(PoincareCheck { lhs, rhs, holds })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalBoundCheck {
    pub mean_err_at_mean: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Mean loss of the single map at w̄ is at most the field's mean loss plus
/// L_w·sqrt(Var/(n·λ₂)). The Lipschitz bound must cover a ball containing
/// every w_v and w̄.
pub fn check_global_bound(
    field: &ParameterField,
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    g: &Graph,
    lw: &ParamLipschitz,
) -> Result<GlobalBoundCheck> {
    check_field_data(field, xa, xb)?;
    let spectral = algebraic_connectivity(g);
    if spectral.n_components > 1 {
        return Err(Error::Disconnected { components: spectral.n_components });
    }
    let mean = field.mean_params();
    let max_norm = field.params().iter().map(|w| w.norm()).fold(mean.norm(), f64::max);
    if max_norm > lw.ball_radius + 1e-12 {
        return Err(invalid(format!(
            "parameter ball radius {} does not contain the field (max norm {max_norm})",
            lw.ball_radius
        )));
    }
    let n = field.n() as f64;
    let constant = ParameterField::constant(field.spec.clone(), mean, field.n())?;
    let mean_err_at_mean = local_error(&constant, xa, xb)?;
    let field_err = local_error(field, xa, xb)?;
    let variation = variation_energy(field, g)?;
    let lambda2 = if field.n() == 1 { f64::INFINITY } else { spectral.lambda2 };
    let bound = field_err + lw.bound * (variation / (n * lambda2)).sqrt();
    let holds = mean_err_at_mean <= bound + 1e-9 * (1.0 + mean_err_at_mean.abs() + bound.abs());
    Ok(GlobalBoundCheck { mean_err_at_mean, bound, holds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelStatus {
    Feasible,
    /// Training did not reach ε; no claim the level is truly infeasible.
    FailedToFit,
    /// Ruled out by an exact certificate, not by failed optimization.
    CertifiedInfeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRecord {
    pub alpha: usize,
    pub label: String,
    /// Best error at or below this level (best-so-far carried, so the
    /// sequence is non-increasing by construction).
    pub err: f64,
    pub status: LevelStatus,
}

#[derive(Debug, Clone)]
pub struct HardnessResult {
    pub epsilon: f64,
    /// Smallest feasible complexity ordinal (certified: realized width);
    /// None means infeasible at the ladder maximum.
    pub value: Option<usize>,
    pub best_err: f64,
    pub certified: bool,
    /// Certified lower bound on the feasible level (certified results only).
    pub certified_lower: Option<usize>,
    pub levels: Vec<LevelRecord>,
}

fn validate_ladder(ladder: &[FamilySpec]) -> Result<()> {
    if ladder.is_empty() {
        return Err(invalid("ladder must be non-empty"));
    }
    for spec in ladder {
        spec.validate()?;
    }
    let ok = ladder
        .windows(2)
        .all(|w| w[0].complexity_index() < w[1].complexity_index());
    if !ok {
        return Err(invalid("ladder complexity indices must be strictly ascending"));
    }
    Ok(())
}

/// Orthogonal (square case), then lowrank ranks 1..=min dim, then mlp widths
/// 1..=max_width.
pub fn default_ladder(
    d_in: usize,
    d_out: usize,
    lipschitz: f64,
    depth: usize,
    max_width: usize,
) -> Vec<FamilySpec> {
    let mut ladder = Vec::new();
    if d_in == d_out {
        ladder.push(FamilySpec::Orthogonal { dim: d_in });
    }
    for rank in 1..=d_in.min(d_out) {
        ladder.push(FamilySpec::LowRank { d_in, d_out, rank, lipschitz });
    }
    for width in 1..=max_width {
        ladder.push(FamilySpec::Mlp { d_in, d_out, width, depth, lipschitz });
    }
    ladder
}

/// Smallest ladder level whose best fit reaches err ≤ ε, scanning in order
/// with best-so-far error carried (nested families keep lower levels'
/// maps available at higher levels).
pub fn hardness(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    ladder: &[FamilySpec],
    eps: f64,
    seed: u64,
) -> Result<HardnessResult> {
    validate_ladder(ladder)?;
    if !(eps >= 0.0) {
        return Err(invalid("eps must be nonnegative"));
    }
    let mut levels = Vec::new();
    let mut best = f64::INFINITY;
    let mut value = None;
    for (k, spec) in ladder.iter().enumerate() {
        let (_, err) = fit_spec(xa, xb, spec, derive_seed(seed, k as u64))?;
        best = best.min(err);
        let feasible = best <= eps;
        levels.push(LevelRecord {
            alpha: spec.complexity_index(),
            label: family_label(spec),
            err: best,
            status: if feasible { LevelStatus::Feasible } else { LevelStatus::FailedToFit },
        });
        if feasible {
            value = Some(spec.complexity_index());
            break;
        }
    }
    Ok(HardnessResult {
        epsilon: eps,
        value,
        best_err: best,
        certified: false,
        certified_lower: None,
        levels,
    })
}

/// Width bounds for 1-d modality pairs by exact piecewise-linear
/// certification: lower bound from minimal breakpoints (any width-w net has
/// ≤ w breakpoints), upper bound from realizing the optimal fit as a net.
pub fn hardness_certified_relu(
    scenario: &crate::embed::SyntheticScenario,
    from: &str,
    to: &str,
    eps: f64,
) -> Result<HardnessResult> {
    let xa = &scenario.modality(from)?.data;
    let xb = &scenario.modality(to)?.data;
    if xa.ncols() != 1 || xb.ncols() != 1 {
        return Err(invalid("certified hardness needs 1-d modalities"));
    }
    let mut pairs: Vec<(f64, f64)> =
        (0..xa.nrows()).map(|v| (xa[(v, 0)], xb[(v, 0)])).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        if let Some(&(px, py)) = samples.last() {
            if x == px {
                if y != py {
                    return Err(invalid(format!(
                        "pair ({from}->{to}) is not a function: x={x} maps to both {py} and {y}"
                    )));
                }
                continue;
            }
        }
        samples.push((x, y));
    }
    let fit = crate::pwl::minimal_breakpoints_fit_detailed(&samples, eps)?;
    let lower = fit.breakpoints;
    let net = crate::pwl::pwl_to_relu_net(&fit.fitted);
    let m = samples.len() as f64;
    let realized_err =
        samples.iter().map(|&(x, y)| (net.eval(x) - y).powi(2)).sum::<f64>() / m;
    if realized_err > eps.max(fit.mse + 1e-12 * (1.0 + fit.mse)) {
        return Err(Error::Numerical(format!(
            "realized net error {realized_err} exceeds tolerance {eps}"
        )));
    }
    let upper = net.width();
    Ok(HardnessResult {
        epsilon: eps,
        value: Some(upper),
        best_err: realized_err,
        certified: true,
        certified_lower: Some(lower),
        levels: vec![LevelRecord {
            alpha: upper,
            label: format!("relu width {upper} (certified lower {lower})"),
            err: realized_err,
            status: LevelStatus::Feasible,
        }],
    })
}

/// Two-stage hardness: at each level fit a→c and c→b independently, then
/// evaluate the composition on the direct pair.
pub fn composed_hardness(
    xa: &DMatrix<f64>,
    xc: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    ladder1: &[FamilySpec],
    ladder2: &[FamilySpec],
    eps: f64,
    seed: u64,
) -> Result<HardnessResult> {
    validate_ladder(ladder1)?;
    validate_ladder(ladder2)?;
    if ladder1.len() != ladder2.len() {
        return Err(invalid("stage ladders must have matching levels"));
    }
    let mut levels = Vec::new();
    let mut best = f64::INFINITY;
    let mut value = None;
    for (k, (s1, s2)) in ladder1.iter().zip(ladder2).enumerate() {
        let alpha = s1.complexity_index().max(s2.complexity_index());
        let (m1, _) = fit_spec(xa, xc, s1, derive_seed(seed, 2 * k as u64))?;
        let (m2, _) = fit_spec(xc, xb, s2, derive_seed(seed, 2 * k as u64 + 1))?;
        let composed = m2.apply_rows(&m1.apply_rows(xa));
        let err = (composed - xb).norm_squared() / xa.nrows() as f64;
        best = best.min(err);
        let feasible = best <= eps;
        levels.push(LevelRecord {
            alpha,
            label: format!("{} ∘ {}", family_label(s2), family_label(s1)),
            err: best,
            status: if feasible { LevelStatus::Feasible } else { LevelStatus::FailedToFit },
        });
        if feasible {
            value = Some(alpha);
            break;
        }
    }
    Ok(HardnessResult {
        epsilon: eps,
        value,
        best_err: best,
        certified: false,
        certified_lower: None,
        levels,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StagewisePoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub err_composed: f64,
    pub variation_total: f64,
}

#[derive(Debug, Clone)]
pub struct StagewiseResult {
    pub epsilon: f64,
    pub value: Option<f64>,
    pub best: Option<(f64, f64)>,
    pub points: Vec<StagewisePoint>,
}

/// Stage fields are fitted independently per λ, then every (λ₁, λ₂) pair is
/// scored by composed per-vertex error; C is the least total variation among
/// qualifying pairs.
pub fn stagewise_obstruction(
    xa: &DMatrix<f64>,
    xc: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    spec1: &FamilySpec,
    spec2: &FamilySpec,
    g: &Graph,
    eps: f64,
    grid1: &[f64],
    grid2: &[f64],
    seed: u64,
) -> Result<StagewiseResult> {
    if grid1.is_empty() || grid2.is_empty() {
        return Err(invalid("stagewise grids must be non-empty"));
    }
    let n = xa.nrows();
    let mut stage1 = Vec::with_capacity(grid1.len());
    for (k, &l1) in grid1.iter().enumerate() {
        let (f, _) = fit_parameter_field(xa, xc, spec1, g, l1, derive_seed(seed, k as u64))?;
        let var = variation_energy(&f, g)?;
        stage1.push((l1, f, var));
    }
    let mut stage2 = Vec::with_capacity(grid2.len());
    for (k, &l2) in grid2.iter().enumerate() {
        let (f, _) =
            fit_parameter_field(xc, xb, spec2, g, l2, derive_seed(seed, 1000 + k as u64))?;
        let var = variation_energy(&f, g)?;
        stage2.push((l2, f, var));
    }
    let mut points = Vec::with_capacity(stage1.len() * stage2.len());
    let mut value: Option<f64> = None;
    let mut best = None;
    for (l1, f1, v1) in &stage1 {
        // Per-vertex stage-1 predictions are shared across λ₂.
        let mut mid = DMatrix::zeros(n, spec1.d_out());
        for v in 0..n {
            let pred = f1.map_at(v)?.apply(&xa.row(v).transpose());
            mid.row_mut(v).copy_from(&pred.transpose());
        }
        for (l2, f2, v2) in &stage2 {
            let mut total = 0.0;
            for v in 0..n {
                let pred = f2.map_at(v)?.apply(&mid.row(v).transpose());
                total += (pred - xb.row(v).transpose()).norm_squared();
            }
            let err = total / n as f64;
            let var_total = v1 + v2;
            if err <= eps && value.is_none_or(|b| var_total < b) {
                value = Some(var_total);
                best = Some((*l1, *l2));
            }
            points.push(StagewisePoint {
                lambda1: *l1,
                lambda2: *l2,
                err_composed: err,
                variation_total: var_total,
            });
        }
    }
    Ok(StagewiseResult { epsilon: eps, value, best, points })
}

#[derive(Debug, Clone)]
pub struct CompatibilityProfile {
    pub pair: (String, String),
    pub epsilon: f64,
    pub hardness: HardnessResult,
    pub obstruction: ObstructionResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatibilityRelation {
    pub alpha0: usize,
    pub tau0: f64,
    pub edges: Vec<(String, String)>,
}

/// Directed edge (a, b) iff H ≤ α₀ and C ≤ τ₀; infeasible sentinels never
/// qualify.
pub fn compatibility_relation(
    profiles: &[CompatibilityProfile],
    alpha0: usize,
    tau0: f64,
) -> Result<CompatibilityRelation> {
    if let Some(first) = profiles.first() {
        if profiles.iter().any(|p| p.epsilon != first.epsilon) {
            return Err(invalid("profiles must share the same epsilon"));
        }
    }
    let edges = profiles
        .iter()
        .filter(|p| {
            p.hardness.value.is_some_and(|h| h <= alpha0)
                && p.obstruction.value.is_some_and(|c| c <= tau0)
        })
        .map(|p| p.pair.clone())
        .collect();
    Ok(CompatibilityRelation { alpha0, tau0, edges })
}

// --- serialized forms -------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct HardnessJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified_lower: Option<usize>,
    pub best_err: f64,
    pub per_level: Vec<LevelRecord>,
}

impl From<&HardnessResult> for HardnessJson {
    fn from(h: &HardnessResult) -> Self {
        HardnessJson {
            value: h.value,
            status: h.value.is_none().then(|| "infeasible_at_max".to_string()),
            certified: h.certified,
            certified_lower: h.certified_lower,
            best_err: h.best_err,
            per_level: h.levels.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct ObstructionJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_lambda: Option<f64>,
    pub path: Vec<PathPoint>,
}

impl From<&ObstructionResult> for ObstructionJson {
    fn from(o: &ObstructionResult) -> Self {
        ObstructionJson {
            value: o.value,
            status: o.value.is_none().then(|| "infeasible_on_grid".to_string()),
            best_lambda: o.best_lambda,
            path: o.path.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct ProfileJson {
    pub pair: [String; 2],
    pub epsilon: f64,
    pub hardness: HardnessJson,
    pub obstruction: ObstructionJson,
}

impl From<&CompatibilityProfile> for ProfileJson {
    fn from(p: &CompatibilityProfile) -> Self {
        ProfileJson {
            pair: [p.pair.0.clone(), p.pair.1.clone()],
            epsilon: p.epsilon,
            hardness: (&p.hardness).into(),
            obstruction: (&p.obstruction).into(),
        }
    }
}

impl CompatibilityProfile {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProfileJson::from(self))?)
    }
}

//! The nested projection ladder: orthogonal maps, rank/norm-constrained
//! linear maps, Lipschitz-bounded one-hidden-layer-and-deeper ReLU maps, and
//! the 1-parameter scalar family. Fitting routines share one error metric
//! (mean squared error per vertex) and one flat parameter layout so fields
//! of fitted parameters can live on sheaf stalks.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::spectral_norm_power;
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_LIPSCHITZ: f64 = 10.0;
pub const DEFAULT_DEPTH: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum FamilySpec {
    /// Square orthogonal maps x ↦ Qx.
    Orthogonal { dim: usize },
    /// Linear maps x ↦ Wx with rank(W) ≤ rank and ‖W‖₂ ≤ lipschitz.
    LowRank { d_in: usize, d_out: usize, rank: usize, lipschitz: f64 },
    /// ReLU nets with `depth` hidden layers of `width`, every weight matrix
    /// spectral-norm capped at lipschitz^(1/(depth+1)) so the end-to-end map
    /// is lipschitz-Lipschitz.
    Mlp { d_in: usize, d_out: usize, width: usize, depth: usize, lipschitz: f64 },
    /// x ↦ w·x with a single scalar parameter.
    Scalar { dim: usize },
}

impl FamilySpec {
    pub fn d_in(&self) -> usize {
        match *self {
            FamilySpec::Orthogonal { dim } | FamilySpec::Scalar { dim } => dim,
            FamilySpec::LowRank { d_in, .. } | FamilySpec::Mlp { d_in, .. } => d_in,
        }
    }

    pub fn d_out(&self) -> usize {
        match *self {
            FamilySpec::Orthogonal { dim } | FamilySpec::Scalar { dim } => dim,
            FamilySpec::LowRank { d_out, .. } | FamilySpec::Mlp { d_out, .. } => d_out,
        }
    }

    /// Ordinal position in the complexity ladder: orthogonal 0, lowrank(r)
    /// r, mlp(w) d_in + w (continuing past full rank), scalar 1.
    pub fn complexity_index(&self) -> usize {
        match *self {
            FamilySpec::Orthogonal { .. } => 0,
            FamilySpec::LowRank { rank, .. } => rank,
            FamilySpec::Mlp { d_in, width, .. } => d_in + width,
            FamilySpec::Scalar { .. } => 1,
        }
    }

    /// Flat parameter count. Layouts: orthogonal/lowrank row-major matrix;
    /// mlp per layer weights (row-major) then bias; scalar one value.
    pub fn param_count(&self) -> usize {
        match *self {
            FamilySpec::Orthogonal { dim } => dim * dim,
            FamilySpec::LowRank { d_in, d_out, .. } => d_in * d_out,
            FamilySpec::Mlp { d_in, d_out, width, depth, .. } => {
                let mut p = width * d_in + width;
                p += (depth - 1) * (width * width + width);
                p + d_out * width + d_out
            }
            FamilySpec::Scalar { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FamilySpec::Orthogonal { dim } => dim >= 1,
            FamilySpec::LowRank { d_in, d_out, rank, lipschitz } => {
                d_in >= 1 && d_out >= 1 && rank >= 1 && rank <= d_in.min(d_out) && lipschitz > 0.0
            }
            FamilySpec::Mlp { d_in, d_out, width, depth, lipschitz } => {
                d_in >= 1 && d_out >= 1 && width >= 1 && depth >= 1 && lipschitz > 0.0
            }
            FamilySpec::Scalar { dim } => dim >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid family spec {self:?}")))
        }
    }

    /// Per-matrix spectral norm cap for the mlp class.
    pub fn layer_norm_cap(&self) -> Option<f64> {
        match *self {
            FamilySpec::Mlp { depth, lipschitz, .. } => {
                Some(lipschitz.powf(1.0 / (depth + 1) as f64))
            }
            _ => None,
        }
    }

    /// (rows, cols) of each weight matrix, input to output.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        match *self {
            FamilySpec::Mlp { d_in, d_out, width, depth, .. } => {
                let mut shapes = vec![(width, d_in)];
                for _ in 1..depth {
                    shapes.push((width, width));
                }
                shapes.push((d_out, width));
                shapes
            }
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionMap {
    pub spec: FamilySpec,
    theta: DVector<f64>,
}

/// Mlp parameters unpacked from the flat layout.
struct MlpParams {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

impl MlpParams {
    fn unpack(spec: &FamilySpec, theta: &DVector<f64>) -> MlpParams {
        let shapes = spec.layer_shapes();
        let mut weights = Vec::with_capacity(shapes.len());
        let mut biases = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for &(r, c) in &shapes {
            weights.push(DMatrix::from_row_slice(r, c, &theta.as_slice()[off..off + r * c]));
            off += r * c;
            biases.push(DVector::from_column_slice(&theta.as_slice()[off..off + r]));
            off += r;
        }
        MlpParams { weights, biases }
    }

    fn pack(&self) -> DVector<f64> {
        let mut flat = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend(w.transpose().as_slice()); // row-major
            flat.extend(b.as_slice());
        }
        DVector::from_vec(flat)
    }

    /// Rescale any weight matrix whose spectral norm exceeds the cap.
    fn project(&mut self, cap: f64) {
        for w in &mut self.weights {
            let norm = spectral_norm_power(w, 50);
            if norm > cap && norm > 0.0 {
                *w *= cap / norm;
            }
        }
    }

    fn forward_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = &a * w.transpose();
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            if k < last {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }
}

impl ProjectionMap {
    pub fn new(spec: FamilySpec, theta: DVector<f64>) -> Result<Self> {
        spec.validate()?;
        if theta.len() != spec.param_count() {
            return Err(invalid(format!(
                "theta has {} entries; spec {spec:?} needs {}",
                theta.len(),
                spec.param_count()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite parameter"));
        }
        Ok(ProjectionMap { spec, theta })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let row = DMatrix::from_row_slice(1, x.len(), x.as_slice());
        self.apply_rows(&row).row(0).transpose()
    }

    /// Map every row of X (n×d_in) to a row of the output (n×d_out).
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.spec {
            FamilySpec::Orthogonal { dim } => {
                let q = DMatrix::from_row_slice(*dim, *dim, self.theta.as_slice());
                x * q.transpose()
            }
            FamilySpec::LowRank { d_in, d_out, .. } => {
                let w = DMatrix::from_row_slice(*d_out, *d_in, self.theta.as_slice());
                x * w.transpose()
            }
            FamilySpec::Mlp { .. } => MlpParams::unpack(&self.spec, &self.theta).forward_rows(x),
            FamilySpec::Scalar { .. } => x * self.theta[0],
        }
    }

    /// Post-fit family membership checks (orthogonality, rank, norm caps).
    pub fn check_invariants(&self) -> Result<()> {
        match &self.spec {
            FamilySpec::Orthogonal { dim } => {
                let q = DMatrix::from_row_slice(*dim, *dim, self.theta.as_slice());
                let dev = (q.transpose() * &q - DMatrix::identity(*dim, *dim)).amax();
                if dev > 1e-8 {
                    return Err(invalid(format!("QᵀQ deviates from I by {dev}")));
                }
            }
            FamilySpec::LowRank { d_in, d_out, rank, lipschitz } => {
                let w = DMatrix::from_row_slice(*d_out, *d_in, self.theta.as_slice());
                let sv = w.singular_values();
                if sv[0] > lipschitz + 1e-8 {
                    return Err(invalid(format!("operator norm {} exceeds {lipschitz}", sv[0])));
                }
                if sv.len() > *rank && sv[*rank] > 1e-8 {
                    return Err(invalid(format!("singular value {} beyond rank {rank}", sv[*rank])));
                }
            }
            FamilySpec::Mlp { .. } => {
                let cap = self.spec.layer_norm_cap().unwrap();
                let params = MlpParams::unpack(&self.spec, &self.theta);
                for (k, w) in params.weights.iter().enumerate() {
                    let norm = spectral_norm_power(w, 50);
                    if norm > cap + 1e-6 {
                        return Err(invalid(format!(
                            "layer {k} spectral norm {norm} exceeds cap {cap}"
                        )));
                    }
                }
            }
            FamilySpec::Scalar { .. } => {}
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let j = MapJson { spec: self.spec.clone(), theta: self.theta.as_slice().to_vec() };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let j: MapJson = serde_json::from_str(text)?;
        ProjectionMap::new(j.spec, DVector::from_vec(j.theta))
    }
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    spec: FamilySpec,
    theta: Vec<f64>,
}

pub fn flatten(map: &ProjectionMap) -> DVector<f64> {
    map.theta.clone()
}

pub fn unflatten(spec: &FamilySpec, theta: DVector<f64>) -> Result<ProjectionMap> {
    ProjectionMap::new(spec.clone(), theta)
}

/// Mean squared error (1/n)Σ‖g(x_i) − y_i‖².
pub fn prediction_error(map: &ProjectionMap, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() != y.nrows() || x.ncols() != map.spec.d_in() || y.ncols() != map.spec.d_out() {
        return Err(invalid(format!(
            "shape mismatch: x {}×{}, y {}×{}, map {}→{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols(),
            map.spec.d_in(),
            map.spec.d_out()
        )));
    }
    let diff = map.apply_rows(x) - y;
    Ok(diff.norm_squared() / x.nrows() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub final_err: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub seed: u64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ProcrustesFit {
    pub map: ProjectionMap,
    /// False when YᵀX is rank-deficient and the polar factor is not unique.
    pub unique: bool,
}

/// Q = argmin over orthogonal Q of ‖XQᵀ − Y‖_F, the polar factor UVᵀ of YᵀX.
pub fn fit_procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProcrustesFit> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(invalid("procrustes needs equal shapes"));
    }
    let d = x.ncols();
    let m = y.transpose() * x;
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| invalid("svd failed"))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| invalid("svd failed"))?;
    let q = u * vt;
    let sv = &svd.singular_values;
    let unique = sv[sv.len() - 1] > 1e-12 * (1.0 + sv[0]);
    let theta = DVector::from_vec(q.transpose().as_slice().to_vec()); // row-major
    Ok(ProcrustesFit { map: ProjectionMap::new(FamilySpec::Orthogonal { dim: d }, theta)?, unique })
}

/// Keep the top `rank` singular values, each clipped to ≤ cap.
fn project_rank_norm(w: &DMatrix<f64>, rank: usize, cap: f64) -> DMatrix<f64> {
    let svd = w.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut s = svd.singular_values;
    for (i, v) in s.iter_mut().enumerate() {
        *v = if i < rank { v.min(cap) } else { 0.0 };
    }
    let mut scaled = vt;
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= s[i];
    }
    u * scaled
}

/// Projected gradient descent on ‖XWᵀ − Y‖²/n over {rank(W) ≤ r, ‖W‖₂ ≤ L},
/// initialized from ridge-stabilized least squares.
pub fn fit_low_rank(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    rank: usize,
    lipschitz: f64,
) -> Result<(ProjectionMap, FitReport)> {
    if x.nrows() != y.nrows() {
        return Err(invalid("row count mismatch"));
    }
    let spec = FamilySpec::LowRank { d_in: x.ncols(), d_out: y.ncols(), rank, lipschitz };
    spec.validate()?;
    let n = x.nrows() as f64;

    let gram = x.transpose() * x;
    let ridge = 1e-12 * (1.0 + gram.trace());
    let reg = &gram + DMatrix::identity(x.ncols(), x.ncols()) * ridge;
    let chol = reg.cholesky().ok_or_else(|| invalid("gram matrix factorization failed"))?;
    let w_ols = (chol.solve(&(x.transpose() * y))).transpose();
    let mut w = project_rank_norm(&w_ols, rank, lipschitz);

    let sigma_max = {
        let sv = x.clone().singular_values();
        sv[0]
    };
    if sigma_max == 0.0 {
        // Zero inputs: any W predicts zero; OLS init (= 0) is optimal.
        let map = ProjectionMap::new(spec, row_major_theta(&w))?;
        let final_err = prediction_error(&map, x, y)?;
        return Ok((map, FitReport { final_err, iterations: 0, restarts_used: 0, seed: 0, converged: true }));
    }
    let step = n / (2.0 * sigma_max * sigma_max);

    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..10_000 {
        let grad = (&(x * w.transpose()) - y).transpose() * x * (2.0 / n);
        let w_next = project_rank_norm(&(&w - &grad * step), rank, lipschitz);
        let residual = (&w_next - &w).norm() / step;
        w = w_next;
        iterations += 1;
        if residual <= 1e-9 {
            converged = true;
            break;
        }
    }
    let map = ProjectionMap::new(spec, row_major_theta(&w))?;
    let final_err = prediction_error(&map, x, y)?;
    Ok((map, FitReport { final_err, iterations, restarts_used: 0, seed: 0, converged }))
}

fn row_major_theta(w: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_vec(w.transpose().as_slice().to_vec())
}

/// Full-batch gradient descent with step halving and per-step spectral
/// projection; best of `n_restarts` deterministic restarts.
pub fn fit_mlp(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    spec: &FamilySpec,
    seed: u64,
    n_restarts: usize,
) -> Result<(ProjectionMap, FitReport)> {
    let FamilySpec::Mlp { .. } = spec else {
        return Err(invalid("fit_mlp requires an mlp family spec"));
    };
    spec.validate()?;
    if x.nrows() != y.nrows() || x.ncols() != spec.d_in() || y.ncols() != spec.d_out() {
        return Err(invalid("data shapes do not match the mlp spec"));
    }
    if n_restarts == 0 {
        return Err(invalid("need at least one restart"));
    }
    let cap = spec.layer_norm_cap().unwrap();
    let n = x.nrows() as f64;

    let mut best: Option<(MlpParams, f64, usize, bool)> = None;
    for restart in 0..n_restarts {
        let mut rng = rng_from_seed(derive_seed(seed, restart as u64));
        let shapes = spec.layer_shapes();
        let mut params = MlpParams {
            weights: shapes
                .iter()
                .map(|&(r, c)| {
                    let scale = (1.0 / c as f64).sqrt();
                    DMatrix::from_fn(r, c, |_, _| (2.0 * rng.random::<f64>() - 1.0) * scale)
                })
                .collect(),
            biases: shapes.iter().map(|&(r, _)| DVector::zeros(r)).collect(),
        };
        params.project(cap);

        let mut loss = mlp_loss(&params, x, y, n);
        let mut step = 0.1;
        let mut iterations = 0;
        let mut stalled = 0;
        for _ in 0..2000 {
            let (gw, gb) = mlp_grad(&params, x, y, n);
            let mut accepted = false;
            while step > 1e-18 {
                let mut cand = MlpParams {
                    weights: params
                        .weights
                        .iter()
                        .zip(&gw)
                        .map(|(w, g)| w - g * step)
                        .collect(),
                    biases: params.biases.iter().zip(&gb).map(|(b, g)| b - g * step).collect(),
                };
                cand.project(cap);
                let cand_loss = mlp_loss(&cand, x, y, n);
                if cand_loss <= loss {
                    stalled = if loss - cand_loss < 1e-14 * (1.0 + loss) { stalled + 1 } else { 0 };
                    params = cand;
                    loss = cand_loss;
                    step *= 1.1;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            if !accepted || loss <= 1e-14 || stalled >= 50 {
                break;
            }
        }
        let converged = loss <= 1e-14 || stalled >= 50 || iterations < 2000;
        let better = match &best {
            None => true,
            Some((_, best_loss, _, _)) => loss < *best_loss,
        };
        if better {
            best = Some((params, loss, iterations, converged));
        }
    }

    let (params, _, iterations, converged) = best.unwrap();
    let map = ProjectionMap::new(spec.clone(), params.pack())?;
    let final_err = prediction_error(&map, x, y)?;
    Ok((map, FitReport { final_err, iterations, restarts_used: n_restarts, seed, converged }))
}

fn mlp_loss(p: &MlpParams, x: &DMatrix<f64>, y: &DMatrix<f64>, n: f64) -> f64 {
    (p.forward_rows(x) - y).norm_squared() / n
}

/// Gradients of the mean squared loss by reverse accumulation over the
/// whole batch at once.
fn mlp_grad(
    p: &MlpParams,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n: f64,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let k = p.weights.len();
    let mut pre: Vec<DMatrix<f64>> = Vec::with_capacity(k); // pre-activations
    let mut act: Vec<DMatrix<f64>> = vec![x.clone()]; // act[i] feeds layer i
    for i in 0..k {
        let mut z = &act[i] * p.weights[i].transpose();
        for mut row in z.row_iter_mut() {
            row += p.biases[i].transpose();
        }
        pre.push(z.clone());
        if i < k - 1 {
            z.apply(|v| *v = v.max(0.0));
        }
        act.push(z);
    }
    let mut delta = (&act[k] - y) * (2.0 / n);
    let mut gw = vec![DMatrix::zeros(0, 0); k];
    let mut gb = vec![DVector::zeros(0); k];
    for i in (0..k).rev() {
        gw[i] = delta.transpose() * &act[i];
        gb[i] = delta.row_sum().transpose();
        if i > 0 {
            let mut back = delta * &p.weights[i];
            back.zip_apply(&pre[i - 1], |v, z| {
                if z <= 0.0 {
                    *v = 0.0;
                }
            });
            delta = back;
        }
    }
    (gw, gb)
}

/// Gradient of the mean squared loss at a flat parameter vector.
pub(crate) fn mlp_flat_grad(
    spec: &FamilySpec,
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let FamilySpec::Mlp { .. } = spec else {
        return Err(invalid("flat gradient needs an mlp family spec"));
    };
    let p = MlpParams::unpack(spec, theta);
    let (weights, biases) = mlp_grad(&p, x, y, x.nrows() as f64);
    Ok(MlpParams { weights, biases }.pack())
}

/// Spectral projection of a flat parameter vector onto the norm caps.
pub(crate) fn mlp_project_theta(spec: &FamilySpec, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let Some(cap) = spec.layer_norm_cap() else {
        return Err(invalid("norm projection needs an mlp family spec"));
    };
    let mut p = MlpParams::unpack(spec, theta);
    p.project(cap);
    Ok(p.pack())
}

/// Closed-form scalar fit: w = Σ⟨x_i, y_i⟩ / Σ‖x_i‖² (0 on zero inputs).
pub fn fit_scalar(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(ProjectionMap, FitReport)> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(invalid("scalar family needs equal shapes"));
    }
    let num: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    let den: f64 = x.iter().map(|a| a * a).sum();
    let w = if den > 0.0 { num / den } else { 0.0 };
    let map = ProjectionMap::new(
        FamilySpec::Scalar { dim: x.ncols() },
        DVector::from_element(1, w),
    )?;
    let final_err = prediction_error(&map, x, y)?;
    Ok((map, FitReport { final_err, iterations: 1, restarts_used: 0, seed: 0, converged: true }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamLipschitz {
    pub bound: f64,
    pub ball_radius: f64,
    /// True when the bound is a symbolic worst case; false for the sampled
    /// mlp estimate (inflated ×1.5 but still an estimate).
    pub analytic: bool,
}

/// Upper bound on the per-vertex loss change per unit parameter change over
/// the ball ‖w‖ ≤ radius. Analytic for scalar and linear-in-parameter
/// classes; sampled (10000 pairs, ×1.5) for mlp.
pub fn estimate_parameter_lipschitz(
    spec: &FamilySpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    radius: f64,
    seed: u64,
) -> Result<ParamLipschitz> {
    spec.validate()?;
    if !(radius > 0.0) {
        return Err(invalid("parameter ball radius must be positive"));
    }
    if x.nrows() != y.nrows() {
        return Err(invalid("row count mismatch"));
    }
    match spec {
        FamilySpec::Scalar { .. } | FamilySpec::Orthogonal { .. } | FamilySpec::LowRank { .. } => {
            // ℓ(w) = ‖g_w(x) − y‖² with g linear in w; ‖∇_w ℓ‖ ≤
            // 2(radius·‖x‖ + ‖y‖)·‖x‖, maximized over vertices.
            let mut bound = 0.0f64;
            for v in 0..x.nrows() {
                let xn = x.row(v).norm();
                let yn = y.row(v).norm();
                bound = bound.max(2.0 * (radius * xn + yn) * xn);
            }
            Ok(ParamLipschitz { bound, ball_radius: radius, analytic: true })
        }
        FamilySpec::Mlp { .. } => {
            let p = spec.param_count();
            let mut rng = rng_from_seed(seed);
            let mut worst = 0.0f64;
            for _ in 0..10_000 {
                let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                    let v = DVector::from_fn(p, |_, _| 2.0 * rng.random::<f64>() - 1.0);
                    let norm = v.norm();
                    let r = radius * rng.random::<f64>().powf(1.0 / p as f64);
                    if norm > 0.0 {
                        v * (r / norm)
                    } else {
                        v
                    }
                };
                let t1 = draw(&mut rng);
                let t2 = draw(&mut rng);
                let dist = (&t1 - &t2).norm();
                if dist < 1e-12 {
                    continue;
                }
                let m1 = ProjectionMap::new(spec.clone(), t1)?;
                let m2 = ProjectionMap::new(spec.clone(), t2)?;
                let p1 = m1.apply_rows(x);
                let p2 = m2.apply_rows(x);
                for v in 0..x.nrows() {
                    let l1 = (p1.row(v) - y.row(v)).norm_squared();
                    let l2 = (p2.row(v) - y.row(v)).norm_squared();
                    worst = worst.max((l1 - l2).abs() / dist);
                }
            }
            Ok(ParamLipschitz { bound: 1.5 * worst, ball_radius: radius, analytic: false })
        }
    }
}

//! Exact piecewise-linear function algebra on an interval, plus conversions
//! to and from one-hidden-layer ReLU nets and a minimal-breakpoint fitting
//! routine. This is the certification machinery: breakpoint counts translate
//! into width bounds without any training.
//!
//! A `PwlFunction` is always stored in canonical form: strictly increasing
//! interior breakpoints and adjacent slopes differing by more than
//! `SLOPE_TOL`, so `breakpoint_count` counts true slope changes only.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Slope changes at or below this are not breakpoints (canonical form).
pub const SLOPE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PwlJson", into = "PwlJson")]
pub struct PwlFunction {
    lo: f64,
    hi: f64,
    breakpoints: Vec<f64>,
    left_value: f64,
    slopes: Vec<f64>,
    /// values[i] = f(knot_i) where knot_0 = lo and knot_{i>0} = breakpoints[i-1].
    values: Vec<f64>,
}

impl PwlFunction {
    /// Strict constructor: rejects anything not already canonical.
    pub fn new(
        domain: (f64, f64),
        breakpoints: Vec<f64>,
        left_value: f64,
        slopes: Vec<f64>,
    ) -> Result<Self> {
        let (lo, hi) = domain;
        if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
            return Err(invalid(format!("bad domain [{lo}, {hi}]")));
        }
        if slopes.len() != breakpoints.len() + 1 {
            return Err(invalid(format!(
                "{} slopes for {} breakpoints; need one slope per piece",
                slopes.len(),
                breakpoints.len()
            )));
        }
        if !left_value.is_finite() || slopes.iter().any(|s| !s.is_finite()) {
            return Err(invalid("non-finite value or slope"));
        }
        for (i, &b) in breakpoints.iter().enumerate() {
            if !b.is_finite() || b <= lo || b >= hi {
                return Err(invalid(format!("breakpoint {b} outside open domain ({lo}, {hi})")));
            }
            if i > 0 && b <= breakpoints[i - 1] {
                return Err(invalid("breakpoints must be strictly increasing"));
            }
        }
        for i in 0..breakpoints.len() {
            if (slopes[i + 1] - slopes[i]).abs() <= SLOPE_TOL {
                return Err(invalid(format!(
                    "slope change at breakpoint {} is below SLOPE_TOL; not canonical",
                    breakpoints[i]
                )));
            }
        }
        let mut f = PwlFunction { lo, hi, breakpoints, left_value, slopes, values: Vec::new() };
        f.rebuild_values();
        Ok(f)
    }

    /// Lenient constructor: sorts out near-duplicate breakpoints and drops
    /// slope changes at or below `SLOPE_TOL`, then validates.
    pub fn canonicalize(
        domain: (f64, f64),
        breakpoints: Vec<f64>,
        left_value: f64,
        slopes: Vec<f64>,
    ) -> Result<Self> {
        let (lo, hi) = domain;
        if slopes.len() != breakpoints.len() + 1 {
            return Err(invalid("slopes must have one entry per piece"));
        }
        // Merge breakpoints closer than the position tolerance, keeping the
        // left one and discarding the micro-piece between them.
        let mut bps: Vec<f64> = Vec::with_capacity(breakpoints.len());
        let mut sls: Vec<f64> = vec![slopes[0]];
        for (i, &b) in breakpoints.iter().enumerate() {
            let postol = 1e-12 * (1.0 + b.abs());
            if let Some(&prev) = bps.last() {
                if b - prev <= postol {
                    *sls.last_mut().unwrap() = slopes[i + 1];
                    continue;
                }
            }
            if hi - b <= postol {
                // Micro-piece hugging hi: keep the real piece to its left.
                continue;
            }
            if b - lo <= postol {
                *sls.last_mut().unwrap() = slopes[i + 1];
                continue;
            }
            bps.push(b);
            sls.push(slopes[i + 1]);
        }
        // Drop non-slope-changes.
        let mut out_b = Vec::with_capacity(bps.len());
        let mut out_s = vec![sls[0]];
        for i in 0..bps.len() {
            let s_next = sls[i + 1];
            if (s_next - *out_s.last().unwrap()).abs() > SLOPE_TOL {
                out_b.push(bps[i]);
                out_s.push(s_next);
            }
        }
        PwlFunction::new(domain, out_b, left_value, out_s)
    }

    pub fn affine(domain: (f64, f64), value_at_lo: f64, slope: f64) -> Result<Self> {
        PwlFunction::new(domain, vec![], value_at_lo, vec![slope])
    }

    pub fn identity(domain: (f64, f64)) -> Result<Self> {
        PwlFunction::affine(domain, domain.0, 1.0)
    }

    fn rebuild_values(&mut self) {
        self.values.clear();
        self.values.push(self.left_value);
        let mut prev_x = self.lo;
        for (i, &b) in self.breakpoints.iter().enumerate() {
            let v = self.values[i] + self.slopes[i] * (b - prev_x);
            self.values.push(v);
            prev_x = b;
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn left_value(&self) -> f64 {
        self.left_value
    }

    pub fn breakpoint_count(&self) -> usize {
        self.breakpoints.len()
    }

    fn knot(&self, i: usize) -> f64 {
        if i == 0 {
            self.lo
        } else {
            self.breakpoints[i - 1]
        }
    }

    fn piece_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    /// Evaluate, clamping x into the domain (see `eval_checked` for the flag).
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_checked(x).0
    }

    /// Evaluate; the flag reports whether x fell outside the domain and was
    /// clamped to the nearer endpoint.
    pub fn eval_checked(&self, x: f64) -> (f64, bool) {
        let clamped = x < self.lo || x > self.hi;
        let x = x.clamp(self.lo, self.hi);
        let i = self.piece_index(x);
        (self.values[i] + self.slopes[i] * (x - self.knot(i)), clamped)
    }

    /// Exact range over the domain. Pieces are affine, so extremes sit at
    /// knots or at `hi`.
    pub fn range(&self) -> (f64, f64) {
        let end = self.eval(self.hi);
        let mut lo_v = end;
        let mut hi_v = end;
        for &v in &self.values {
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        (lo_v, hi_v)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PwlJson::from(self.clone()))?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PwlJson {
    domain: [f64; 2],
    breakpoints: Vec<f64>,
    left_value: f64,
    slopes: Vec<f64>,
}

impl From<PwlFunction> for PwlJson {
    fn from(f: PwlFunction) -> Self {
        PwlJson {
            domain: [f.lo, f.hi],
            breakpoints: f.breakpoints,
            left_value: f.left_value,
            slopes: f.slopes,
        }
    }
}

impl TryFrom<PwlJson> for PwlFunction {
    type Error = crate::error::Error;
    fn try_from(j: PwlJson) -> Result<Self> {
        PwlFunction::new((j.domain[0], j.domain[1]), j.breakpoints, j.left_value, j.slopes)
    }
}

/// h ∘ g. Requires range(g) ⊆ domain(h); the range is computed exactly from
/// g's pieces and the inclusion check allows a relative slack of 1e-9 to
/// absorb evaluation roundoff, with inner values clamped into h's domain.
pub fn compose(h: &PwlFunction, g: &PwlFunction) -> Result<PwlFunction> {
    let (rlo, rhi) = g.range();
    let (dlo, dhi) = h.domain();
    let slack = 1e-9 * (1.0 + dhi.abs().max(dlo.abs()));
    if rlo < dlo - slack || rhi > dhi + slack {
        return Err(invalid(format!(
            "compose: range of inner [{rlo}, {rhi}] is not inside domain of outer [{dlo}, {dhi}]"
        )));
    }

    let mut candidates: Vec<f64> = g.breakpoints().to_vec();
    // Preimages of h's breakpoints under each non-flat piece of g.
    let n_pieces = g.slopes.len();
    for i in 0..n_pieces {
        let s = g.slopes[i];
        if s == 0.0 {
            continue;
        }
        let x0 = g.knot(i);
        let x1 = if i + 1 < n_pieces { g.breakpoints[i] } else { g.hi };
        let v0 = g.values[i];
        for &beta in h.breakpoints() {
            let x = x0 + (beta - v0) / s;
            if x > x0 && x < x1 && x > g.lo && x < g.hi {
                candidates.push(x);
            }
        }
    }
    candidates.sort_by(|a, b| a.total_cmp(b));

    // Slopes between consecutive candidates via midpoint piece lookup; the
    // candidate set contains every possible slope change, so each gap is a
    // single affine piece of h∘g.
    let mut slopes = Vec::with_capacity(candidates.len() + 1);
    let mut prev = g.lo;
    let mut gaps: Vec<f64> = Vec::new();
    for &c in candidates.iter().chain(std::iter::once(&g.hi)) {
        if c - prev <= 0.0 {
            continue;
        }
        let mid = 0.5 * (prev + c);
        let gi = g.piece_index(mid);
        let gv = g.eval(mid).clamp(dlo, dhi);
        let hi_idx = h.piece_index(gv);
        slopes.push(h.slopes[hi_idx] * g.slopes[gi]);
        gaps.push(c);
        prev = c;
    }
    // gaps ends with g.hi; breakpoint candidates are everything before it.
    gaps.pop();
    let left_value = h.eval(g.left_value.clamp(dlo, dhi));
    PwlFunction::canonicalize((g.lo, g.hi), gaps, left_value, slopes)
}

/// One-hidden-layer scalar ReLU net f(x) = Σ_j a_j σ(b_j x + c_j) + d.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReluNet1D {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl ReluNet1D {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.d;
        for j in 0..self.a.len() {
            acc += self.a[j] * (self.b[j] * x + self.c[j]).max(0.0);
        }
        acc
    }

    fn validate(&self) -> Result<()> {
        if self.a.len() != self.b.len() || self.a.len() != self.c.len() {
            return Err(invalid("unit parameter lists must have equal length"));
        }
        if !self.d.is_finite()
            || self.a.iter().chain(&self.b).chain(&self.c).any(|p| !p.is_finite())
        {
            return Err(invalid("non-finite net parameter"));
        }
        Ok(())
    }
}

/// Exact PWL of the net on the given domain. Breakpoints are the thresholds
/// −c_j/b_j that fall strictly inside and actually change the slope.
pub fn relu_net_to_pwl(net: &ReluNet1D, domain: (f64, f64)) -> Result<PwlFunction> {
    net.validate()?;
    let (lo, hi) = domain;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("bad domain [{lo}, {hi}]")));
    }
    let mut thresholds: Vec<f64> = net
        .b
        .iter()
        .zip(&net.c)
        .filter(|(&b, _)| b != 0.0)
        .map(|(&b, &c)| -c / b)
        .filter(|t| *t > lo && *t < hi)
        .collect();
    thresholds.sort_by(|a, b| a.total_cmp(b));
    thresholds.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));

    let mut slopes = Vec::with_capacity(thresholds.len() + 1);
    let mut prev = lo;
    for &t in thresholds.iter().chain(std::iter::once(&hi)) {
        let mid = 0.5 * (prev + t);
        let slope: f64 = (0..net.width())
            .filter(|&j| net.b[j] * mid + net.c[j] > 0.0)
            .map(|j| net.a[j] * net.b[j])
            .sum();
        slopes.push(slope);
        prev = t;
    }
    PwlFunction::canonicalize(domain, thresholds, net.eval(lo), slopes)
}

/// Width-(B or B+1) realization of a canonical PWL: one unit per breakpoint
/// carrying the slope increment, plus one boundary unit for the initial slope
/// when it is nonzero (σ(x − lo) = x − lo on the domain). The reported width
/// is exact, which keeps hardness certificates sound.
pub fn pwl_to_relu_net(f: &PwlFunction) -> ReluNet1D {
    let (lo, _) = f.domain();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut c = Vec::new();
    if f.slopes[0] != 0.0 {
        a.push(f.slopes[0]);
        b.push(1.0);
        c.push(-lo);
    }
    for (i, &bp) in f.breakpoints.iter().enumerate() {
        a.push(f.slopes[i + 1] - f.slopes[i]);
        b.push(1.0);
        c.push(-bp);
    }
    ReluNet1D { a, b, c, d: f.left_value }
}

#[derive(Debug, Clone)]
pub struct BreakpointFit {
    pub breakpoints: usize,
    pub fitted: PwlFunction,
    /// Mean squared error the reconstructed PWL actually achieves.
    pub mse: f64,
}

/// Minimal B such that a continuous PWL with ≤ B breakpoints achieves mean
/// squared error ≤ eps on the samples.
///
/// eps = 0 runs an exact search: maximal collinear blocks (within 1e-12)
/// joined at line intersections when those land inside the sample gap, with a
/// two-breakpoint connector otherwise. For eps > 0 the DP minimizes the block
/// count subject to the total least-squares SSE budget; that relaxes the
/// continuity constraint between blocks, so the count is a certified lower
/// bound (exact in the ≥ 2-samples-per-piece regime the generators enforce).
pub fn minimal_breakpoints_fit(samples: &[(f64, f64)], eps: f64) -> Result<usize> {
    Ok(minimal_breakpoints_fit_detailed(samples, eps)?.breakpoints)
}

pub fn minimal_breakpoints_fit_detailed(samples: &[(f64, f64)], eps: f64) -> Result<BreakpointFit> {
    if samples.is_empty() {
        return Err(invalid("need at least one sample"));
    }
    if !(eps >= 0.0) {
        return Err(invalid(format!("eps must be >= 0, got {eps}")));
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(invalid("sample x values must be strictly increasing"));
        }
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(invalid("non-finite sample"));
    }

    let blocks = if eps == 0.0 { exact_blocks(samples) } else { budget_blocks(samples, eps) };
    let (fitted, count) = reconstruct(samples, &blocks);
    let m = samples.len() as f64;
    let mse = samples.iter().map(|&(x, y)| (fitted.eval(x) - y).powi(2)).sum::<f64>() / m;
    Ok(BreakpointFit { breakpoints: count, fitted, mse })
}

/// Greedy maximal collinear blocks; optimal for exact fitting because a block
/// can never straddle a genuine slope change in the data.
fn exact_blocks(samples: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let m = samples.len();
    let tol = 1e-12 * (1.0 + samples.iter().fold(0.0f64, |acc, &(_, y)| acc.max(y.abs())));
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < m {
        if i + 1 >= m {
            blocks.push((i, i));
            break;
        }
        let (x0, y0) = samples[i];
        let (x1, y1) = samples[i + 1];
        let slope = (y1 - y0) / (x1 - x0);
        let mut j = i + 1;
        while j + 1 < m {
            let (xn, yn) = samples[j + 1];
            if (y0 + slope * (xn - x0) - yn).abs() > tol {
                break;
            }
            j += 1;
        }
        blocks.push((i, j));
        i = j + 1;
    }
    blocks
}

/// O(B·m²) DP: fewest contiguous blocks whose summed per-block least-squares
/// SSE stays within eps·m.
fn budget_blocks(samples: &[(f64, f64)], eps: f64) -> Vec<(usize, usize)> {
    let m = samples.len();
    let budget = eps * m as f64;
    let pre = LinePrefixes::new(samples);

    // dp[j] = best total SSE covering 0..=j with the current block count.
    let mut dp: Vec<f64> = (0..m).map(|j| pre.sse(0, j)).collect();
    let mut choice: Vec<Vec<usize>> = vec![(0..m).map(|_| 0).collect()];
    let mut b = 1;
    while dp[m - 1] > budget && b < m {
        let mut next = vec![f64::INFINITY; m];
        let mut ch = vec![0usize; m];
        for j in 0..m {
            for i in 1..=j {
                let cand = dp[i - 1] + pre.sse(i, j);
                if cand < next[j] {
                    next[j] = cand;
                    ch[j] = i;
                }
            }
        }
        dp = next;
        choice.push(ch);
        b += 1;
    }
    // Backtrack block starts.
    let mut bounds = Vec::with_capacity(b);
    let mut j = m - 1;
    for level in (0..b).rev() {
        let start = choice[level][j];
        bounds.push((start, j));
        if start == 0 {
            break;
        }
        j = start - 1;
    }
    bounds.reverse();
    bounds
}

struct LinePrefixes {
    x: Vec<f64>,
    y: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxx: Vec<f64>,
    sxy: Vec<f64>,
    syy: Vec<f64>,
}

impl LinePrefixes {
    fn new(samples: &[(f64, f64)]) -> Self {
        let m = samples.len();
        let mut p = LinePrefixes {
            x: samples.iter().map(|s| s.0).collect(),
            y: samples.iter().map(|s| s.1).collect(),
            sx: vec![0.0; m + 1],
            sy: vec![0.0; m + 1],
            sxx: vec![0.0; m + 1],
            sxy: vec![0.0; m + 1],
            syy: vec![0.0; m + 1],
        };
        for i in 0..m {
            p.sx[i + 1] = p.sx[i] + p.x[i];
            p.sy[i + 1] = p.sy[i] + p.y[i];
            p.sxx[i + 1] = p.sxx[i] + p.x[i] * p.x[i];
            p.sxy[i + 1] = p.sxy[i] + p.x[i] * p.y[i];
            p.syy[i + 1] = p.syy[i] + p.y[i] * p.y[i];
        }
        p
    }

    /// SSE of the least-squares line over samples i..=j.
    fn sse(&self, i: usize, j: usize) -> f64 {
        let n = (j - i + 1) as f64;
        let sx = self.sx[j + 1] - self.sx[i];
        let sy = self.sy[j + 1] - self.sy[i];
        let sxx = self.sxx[j + 1] - self.sxx[i];
        let sxy = self.sxy[j + 1] - self.sxy[i];
        let syy = self.syy[j + 1] - self.syy[i];
        let cxx = sxx - sx * sx / n;
        let cxy = sxy - sx * sy / n;
        let cyy = syy - sy * sy / n;
        if cxx <= 0.0 {
            return cyy.max(0.0);
        }
        (cyy - cxy * cxy / cxx).max(0.0)
    }

    fn line(&self, i: usize, j: usize) -> (f64, f64) {
        let n = (j - i + 1) as f64;
        let sx = self.sx[j + 1] - self.sx[i];
        let sy = self.sy[j + 1] - self.sy[i];
        let sxx = self.sxx[j + 1] - self.sxx[i];
        let sxy = self.sxy[j + 1] - self.sxy[i];
        let cxx = sxx - sx * sx / n;
        let cxy = sxy - sx * sy / n;
        let slope = if cxx > 0.0 { cxy / cxx } else { 0.0 };
        let intercept = (sy - slope * sx) / n;
        (slope, intercept)
    }
}

/// Join block lines into a continuous PWL and count the breakpoints it needs:
/// one where adjacent lines meet inside the closed sample gap, two (a short
/// connector piece) where they do not.
fn reconstruct(samples: &[(f64, f64)], blocks: &[(usize, usize)]) -> (PwlFunction, usize) {
    let pre = LinePrefixes::new(samples);
    let lo = samples[0].0;
    let hi_x = samples[samples.len() - 1].0;
    // Degenerate domain (single sample): widen so the constructor accepts it.
    let (lo, hi_x) = if lo < hi_x { (lo, hi_x) } else { (lo, lo + 1.0) };

    let lines: Vec<(f64, f64)> = blocks
        .iter()
        .map(|&(i, j)| {
            if i == j {
                // Under-determined single-point block: horizontal line.
                (0.0, samples[i].1)
            } else {
                pre.line(i, j)
            }
        })
        .collect();

    let mut count = 0;
    let mut knots: Vec<(f64, f64)> = Vec::new(); // (x, value) polyline vertices
    knots.push((lo, lines[0].0 * lo + lines[0].1));
    for k in 0..blocks.len() - 1 {
        let (sa, ia) = lines[k];
        let (sb, ib) = lines[k + 1];
        let gap_lo = samples[blocks[k].1].0;
        let gap_hi = samples[blocks[k + 1].0].0;
        let single = blocks[k].0 == blocks[k].1 || blocks[k + 1].0 == blocks[k + 1].1;
        let cross = if (sa - sb).abs() > 1e-12 * (1.0 + sa.abs()) {
            let x = (ib - ia) / (sa - sb);
            let tol = 1e-12 * (1.0 + gap_hi.abs());
            (x >= gap_lo - tol && x <= gap_hi + tol).then_some(x.clamp(gap_lo, gap_hi))
        } else {
            None
        };
        match cross {
            Some(x) => {
                count += 1;
                knots.push((x, sa * x + ia));
            }
            None => {
                count += if single { 1 } else { 2 };
                let x1 = gap_lo + (gap_hi - gap_lo) / 3.0;
                let x2 = gap_lo + 2.0 * (gap_hi - gap_lo) / 3.0;
                knots.push((x1, sa * x1 + ia));
                knots.push((x2, sb * x2 + ib));
            }
        }
    }

    // Polyline → canonical PWL.
    let last = *lines.last().unwrap();
    let mut bps = Vec::new();
    let mut slopes = Vec::new();
    for w in knots.windows(2) {
        let (x0, v0) = w[0];
        let (x1, v1) = w[1];
        if x1 > x0 {
            bps.push(x1);
            slopes.push((v1 - v0) / (x1 - x0));
        }
    }
    if let Some(&(xk, _)) = knots.last() {
        if hi_x > xk {
            slopes.push(last.0);
        } else {
            bps.pop();
        }
    }
    if slopes.is_empty() {
        slopes.push(last.0);
    }
    let left_value = knots[0].1;
    let fitted = PwlFunction::canonicalize((lo, hi_x), bps, left_value, slopes)
        .unwrap_or_else(|_| PwlFunction::affine((lo, hi_x), left_value, last.0).unwrap());
    (fitted, count)
}

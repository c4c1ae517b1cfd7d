//! Gradient descent x_{i+1} = x_i - (h_i/L)∇f(x_i) in machine precision on
//! bundled convex objectives, plus the empirical checks run on its traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Precision;
use crate::sequence::{DeltaSource, ScheduledStep, Sequences};

/// A smooth convex objective with analytically known optimum and sublevel radius.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// L.
    fn smoothness(&self) -> f64;
    fn optimum_value(&self) -> f64;
    fn minimizer(&self) -> Vec<f64>;
    /// D = sup{‖x - x⋆‖ : f(x) ≤ f(x0)}.
    fn radius(&self, x0: &[f64]) -> f64;
    /// μ for strongly convex (or quadratic-growth) objectives.
    fn strong_convexity(&self) -> Option<f64> {
        None
    }
    /// f(x) - f⋆; objectives override this to avoid cancellation.
    fn gap(&self, x: &[f64]) -> f64 {
        (self.value(x) - self.optimum_value()).max(0.0)
    }
}

/// ½ Σ d_i x_i².
#[derive(Clone, Debug)]
pub struct DiagonalQuadratic {
    pub diag: Vec<f64>,
}

impl DiagonalQuadratic {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Invalid("diagonal entries must be positive".into()));
        }
        Ok(DiagonalQuadratic { diag })
    }

    /// ½x².
    pub fn scalar() -> Self {
        DiagonalQuadratic { diag: vec![1.0] }
    }

    /// Eigenvalues log-spaced in [lo, hi].
    pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n == 0 || !(lo > 0.0 && hi >= lo) {
            return Err(Error::Invalid("need n >= 1 and 0 < lo <= hi".into()));
        }
        if n == 1 {
            return Self::new(vec![hi]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        Self::new((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
    }
}

impl Objective for DiagonalQuadratic {
    fn name(&self) -> &str {
        if self.diag.len() == 1 {
            "quadratic"
        } else {
            "diag-quadratic"
        }
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.diag.iter().zip(x).map(|(d, v)| d * v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), v) in out.iter_mut().zip(&self.diag).zip(x) {
            *o = d * v;
        }
    }

    fn smoothness(&self) -> f64 {
        self.diag.iter().cloned().fold(0.0, f64::max)
    }

    fn optimum_value(&self) -> f64 {
        0.0
    }

    fn minimizer(&self) -> Vec<f64> {
        vec![0.0; self.diag.len()]
    }

    /// The sublevel set is an ellipsoid; its longest semi-axis lies along the
    /// smallest eigenvalue.
    fn radius(&self, x0: &[f64]) -> f64 {
        (2.0 * self.value(x0) / self.strong_convexity().unwrap()).sqrt()
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.diag.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    fn gap(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

/// ½x² on |x| ≤ 1, |x| - ½ outside.
#[derive(Clone, Copy, Debug, Default)]
pub struct Huber1D;

impl Huber1D {
    fn inverse(level: f64) -> f64 {
        if level <= 0.5 {
            (2.0 * level).sqrt()
        } else {
            level + 0.5
        }
    }
}

impl Objective for Huber1D {
    fn name(&self) -> &str {
        "huber"
    }

    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        let a = x[0].abs();
        if a <= 1.0 {
            0.5 * a * a
        } else {
            a - 0.5
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0].clamp(-1.0, 1.0);
    }

    fn smoothness(&self) -> f64 {
        1.0
    }

    fn optimum_value(&self) -> f64 {
        0.0
    }

    fn minimizer(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn radius(&self, x0: &[f64]) -> f64 {
        Self::inverse(self.value(x0))
    }

    fn gap(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

/// ½x² + ½ for x ≤ 1 and x beyond.
#[derive(Clone, Copy, Debug, Default)]
pub struct Splice1D;

impl Objective for Splice1D {
    fn name(&self) -> &str {
        "splice"
    }

    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.gap(x) + 0.5
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0].min(1.0);
    }

    fn smoothness(&self) -> f64 {
        1.0
    }

    fn optimum_value(&self) -> f64 {
        0.5
    }

    fn minimizer(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn radius(&self, x0: &[f64]) -> f64 {
        let g = self.gap(x0);
        let left = (2.0 * g).sqrt();
        let right = if g <= 0.5 { left } else { g + 0.5 };
        left.max(right)
    }

    fn gap(&self, x: &[f64]) -> f64 {
        let v = x[0];
        if v <= 1.0 {
            0.5 * v * v
        } else {
            v - 0.5
        }
    }
}

/// Σ log(e^{x_i} + 2 + e^{-x_i}) = Σ 2 log(2 cosh(x_i/2)); L = ½, f⋆ = n log 4.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    pub n: usize,
}

impl LogSumExp {
    fn coord_gap(x: f64) -> f64 {
        let s = (0.5 * x).sinh();
        (s * s).ln_1p()
    }

    fn coord_inverse(level: f64) -> f64 {
        2.0 * level.exp_m1().sqrt().asinh()
    }
}

impl Objective for LogSumExp {
    fn name(&self) -> &str {
        "logsumexp"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.gap(x) + self.optimum_value()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = (0.5 * v).tanh();
        }
    }

    fn smoothness(&self) -> f64 {
        0.5
    }

    fn optimum_value(&self) -> f64 {
        self.n as f64 * 4f64.ln()
    }

    fn minimizer(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }

    /// x² is convex in the per-coordinate gap, so the farthest sublevel point
    /// spends the whole gap on one coordinate.
    fn radius(&self, x0: &[f64]) -> f64 {
        Self::coord_inverse(self.gap(x0))
    }

    fn gap(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| Self::coord_gap(*v)).sum()
    }
}

/// Builds a bundled objective by name.
pub fn objective_by_name(name: &str, dim: usize) -> Result<Box<dyn Objective>> {
    let one_d = |o: Box<dyn Objective>| {
        if dim == 1 {
            Ok(o)
        } else {
            Err(Error::Invalid(format!("objective {name} is one-dimensional")))
        }
    };
    match name {
        "quadratic" => one_d(Box::new(DiagonalQuadratic::scalar())),
        "huber" => one_d(Box::new(Huber1D)),
        "splice" => one_d(Box::new(Splice1D)),
        "diag-quadratic" => Ok(Box::new(DiagonalQuadratic::log_spaced(dim, 1e-3, 1.0)?)),
        "logsumexp" => {
            if dim == 0 {
                return Err(Error::Invalid("dimension must be positive".into()));
            }
            Ok(Box::new(LogSumExp { n: dim }))
        }
        other => Err(Error::Invalid(format!("unknown objective {other}"))),
    }
}

pub const OBJECTIVES: [&str; 5] = ["quadratic", "huber", "splice", "diag-quadratic", "logsumexp"];

/// Max over coordinates of |central difference - gradient|, relative to
/// max(‖∇f‖∞, 1).
pub fn gradient_check(obj: &dyn Objective, x: &[f64], step: f64) -> f64 {
    let mut g = vec![0.0; x.len()];
    obj.gradient(x, &mut g);
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = obj.value(&probe);
        probe[i] = x[i] - step;
        let down = obj.value(&probe);
        probe[i] = x[i];
        worst = worst.max(((up - down) / (2.0 * step) - g[i]).abs());
    }
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    worst / scale
}

/// A fixed pattern repeated indefinitely, as a step stream on stage k.
pub fn repeat_pattern(steps: &[f64], k: u32) -> impl Iterator<Item = ScheduledStep> + '_ {
    let len = steps.len();
    (0u128..).map(move |i| {
        let offset = (i % len as u128) as usize;
        ScheduledStep { index: i, k, offset, closes_pattern: offset + 1 == len, h: steps[offset] }
    })
}

/// One row of a trace as streamed to disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub gap: f64,
    pub min_gap: f64,
    pub stage_k: u32,
    pub pattern_boundary: bool,
}

/// Iterates' gaps and schedule bookkeeping; index i refers to x_i.
#[derive(Clone, Debug, Default)]
pub struct GdTrace {
    pub gaps: Vec<f64>,
    pub min_gap_prefix: Vec<f64>,
    /// Iterate indices i at which a pattern application has just completed.
    pub pattern_boundaries: Vec<usize>,
    /// (k, i): stage k is first used on the step out of x_i.
    pub stage_starts: Vec<(u32, usize)>,
    /// Stage of the step taken from x_i; the final iterate repeats the last.
    pub stage_of: Vec<u32>,
    pub steps_used: Vec<f64>,
    pub x_final: Vec<f64>,
    pub smoothness: f64,
    pub radius: f64,
}

impl GdTrace {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn last_gap(&self) -> f64 {
        *self.gaps.last().unwrap_or(&f64::NAN)
    }

    pub fn best_gap(&self) -> f64 {
        *self.min_gap_prefix.last().unwrap_or(&f64::NAN)
    }

    /// Start and end iterate of every completed application.
    pub fn applications(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.pattern_boundaries.len());
        let mut start = 0;
        for &b in &self.pattern_boundaries {
            out.push((start, b));
            start = b;
        }
        out
    }

    pub fn row(&self, i: usize) -> TraceRow {
        TraceRow {
            iter: i,
            gap: self.gaps[i],
            min_gap: self.min_gap_prefix[i],
            stage_k: self.stage_of[i],
            pattern_boundary: self.pattern_boundaries.binary_search(&i).is_ok(),
        }
    }
}

/// Runs `budget` iterations from x0.
pub fn run(
    obj: &dyn Objective,
    x0: &[f64],
    schedule: impl Iterator<Item = ScheduledStep>,
    budget: usize,
) -> Result<GdTrace> {
    run_with(obj, x0, schedule, budget, |_| Ok(()))
}

/// As [`run`], handing every row to `observer` as soon as it is known.
pub fn run_with(
    obj: &dyn Objective,
    x0: &[f64],
    mut schedule: impl Iterator<Item = ScheduledStep>,
    budget: usize,
    mut observer: impl FnMut(&TraceRow) -> Result<()>,
) -> Result<GdTrace> {
    if budget < 1 {
        return Err(Error::Invalid("budget must be at least 1".into()));
    }
    if x0.len() != obj.dim() {
        return Err(Error::Dimension { expected: obj.dim(), found: x0.len() });
    }
    let l = obj.smoothness();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut tr = GdTrace {
        gaps: Vec::with_capacity(budget + 1),
        min_gap_prefix: Vec::with_capacity(budget + 1),
        stage_of: Vec::with_capacity(budget + 1),
        steps_used: Vec::with_capacity(budget),
        smoothness: l,
        radius: obj.radius(x0),
        ..GdTrace::default()
    };
    let mut best = f64::INFINITY;
    let mut boundary = false;
    let mut last_k = None;
    for i in 0..=budget {
        let gap = obj.gap(&x);
        if !gap.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { index: i as u64 });
        }
        best = best.min(gap);
        tr.gaps.push(gap);
        tr.min_gap_prefix.push(best);
        let step = if i < budget {
            Some(schedule.next().ok_or_else(|| Error::Invalid("step stream ended".into()))?)
        } else {
            None
        };
        let k = step.map(|s| s.k).or(last_k).unwrap_or(0);
        if step.is_some() && last_k != Some(k) {
            tr.stage_starts.push((k, i));
        }
        tr.stage_of.push(k);
        last_k = Some(k);
        observer(&TraceRow { iter: i, gap, min_gap: best, stage_k: k, pattern_boundary: boundary })?;
        let Some(step) = step else { break };
        obj.gradient(&x, &mut g);
        let scale = step.h / l;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= scale * gi;
        }
        tr.steps_used.push(step.h);
        boundary = step.closes_pattern;
        if boundary {
            tr.pattern_boundaries.push(i + 1);
        }
    }
    tr.x_final = x;
    Ok(tr)
}

/// Relative slack granted to f64 gap comparisons.
pub const GAP_SLACK: f64 = 1e-12;

/// A failed recurrence step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceViolation {
    pub start: usize,
    pub end: usize,
    pub k: u32,
    pub gap_start: f64,
    pub gap_end: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RecurrenceReport {
    /// Applications whose start gap met the precondition.
    pub checked: usize,
    /// Applications skipped because the start gap exceeded LD²Δ.
    pub skipped: usize,
    pub violations: Vec<RecurrenceViolation>,
    /// Application ends where δ_s ≤ LD²/(S_k s) failed, s counted within the stage.
    pub solution_violations: Vec<(usize, u32)>,
    /// Largest (gap_end)/(bound) over checked applications with positive bound.
    pub worst_ratio: f64,
}

impl RecurrenceReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty() && self.solution_violations.is_empty()
    }
}

/// Checks δ_next ≤ δ - (S_k/(LD²))δ² at every completed application whose start
/// gap is at most LD²Δ_k. `pattern_sums[k]` is Σ(1-η)𝔥⁽ᵏ⁾ and `deltas[k]` the
/// active Δ⁽ᵏ⁾.
pub fn verify_descent_recurrence(
    trace: &GdTrace,
    pattern_sums: &[f64],
    deltas: &[f64],
    l: f64,
    d: f64,
) -> RecurrenceReport {
    let ld2 = l * d * d;
    let mut rep = RecurrenceReport::default();
    let mut stage = None;
    let mut s = 0usize;
    let mut clean = true;
    for (a, b) in trace.applications() {
        let k = trace.stage_of[a];
        if stage != Some(k) {
            stage = Some(k);
            s = 0;
            clean = true;
        }
        s += 1;
        let (Some(&sum), Some(&delta)) = (pattern_sums.get(k as usize), deltas.get(k as usize)) else {
            rep.skipped += 1;
            clean = false;
            continue;
        };
        let (g0, g1) = (trace.gaps[a], trace.gaps[b]);
        if g0 > ld2 * delta {
            rep.skipped += 1;
            clean = false;
            continue;
        }
        rep.checked += 1;
        let bound = g0 - sum / ld2 * g0 * g0;
        if bound > 0.0 {
            rep.worst_ratio = rep.worst_ratio.max(g1 / bound);
        }
        if g1 > bound + GAP_SLACK * g0 {
            rep.violations.push(RecurrenceViolation { start: a, end: b, k, gap_start: g0, gap_end: g1, bound });
            clean = false;
        }
        if clean && s > 0 && g1 > ld2 / (sum * s as f64) * (1.0 + GAP_SLACK) {
            rep.solution_violations.push((b, k));
        }
    }
    rep
}

/// δ at each stage start I_k against LD²Δ⁽ᵏ⁾.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryCheck {
    pub k: u32,
    pub index: usize,
    pub gap: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn stage_boundary_check(trace: &GdTrace, deltas: &[f64], l: f64, d: f64) -> Vec<BoundaryCheck> {
    let ld2 = l * d * d;
    trace
        .stage_starts
        .iter()
        .filter_map(|&(k, i)| {
            let bound = ld2 * deltas.get(k as usize)?;
            let gap = trace.gaps[i];
            Some(BoundaryCheck { k, index: i, gap, bound, ok: gap <= bound * (1.0 + GAP_SLACK) })
        })
        .collect()
}

/// Least-squares fit of log(min gap) against log(T).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<(usize, f64)>,
}

/// Fits the best gap at every stage start I_k with k ≥ 1 and positive gap,
/// plus the final iterate. Needs at least three stages in the trace.
pub fn rate_fit(trace: &GdTrace) -> Result<RateFit> {
    if trace.stage_starts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "trace spans {} stages, need at least 3",
            trace.stage_starts.len()
        )));
    }
    let mut points: Vec<(usize, f64)> = trace
        .stage_starts
        .iter()
        .map(|&(_, i)| i)
        .chain(std::iter::once(trace.len() - 1))
        .filter(|&i| i > 0)
        .map(|i| (i, trace.min_gap_prefix[i]))
        .filter(|&(_, g)| g > 0.0)
        .collect();
    points.dedup_by_key(|p| p.0);
    if points.len() < 2 {
        return Err(Error::InsufficientData("fewer than two positive gaps at stage boundaries".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all fit points share one iteration count".into()));
    }
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, points })
}

/// Iteration counts T ≤ c (LD²/ε)^e for the accelerated rate. RATE_PROOF is
/// what the stage recurrences give; RATE_STATED is a sharper pair they do not
/// reach, carried for comparison and never checked against.
pub const RATE_PROOF: (f64, f64) = (10.3280, 0.94662);
pub const RATE_STATED: (f64, f64) = (7.00809, 0.976091);
/// Amortized strongly convex contraction 1 - 0.204652 κ^{-0.94662}.
pub const AMORTIZED: (f64, f64) = (0.204652, 0.94662);

/// c (LD²/ε)^e for one of the rate pairs.
pub fn iteration_bound(rate: (f64, f64), ld2_over_eps: f64) -> f64 {
    rate.0 * ld2_over_eps.powf(rate.1)
}

pub fn amortized_bound(kappa: f64) -> f64 {
    1.0 - AMORTIZED.0 * kappa.powf(-AMORTIZED.1)
}

/// k(κ) = sup{k : Δ⁽ᵏ⁾ ≥ 1/(2κ)}, scanning at most `max_k`.
pub fn stage_for_kappa(prec: Precision, source: &DeltaSource, kappa: f64, max_k: u32) -> u32 {
    let target = 0.5 / kappa;
    let limit = match source {
        DeltaSource::Override(list) => max_k.min(list.len() as u32),
        DeltaSource::Conservative => max_k,
    };
    let mut k = 0;
    while k < limit && source.delta(prec, k + 1).to_f64() >= target {
        k += 1;
    }
    k
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub kappa: f64,
    pub k: u32,
    pub delta: f64,
    pub pattern_len: usize,
    /// 1 - min(Δ, μ/2L)·Σ(1-η)𝔥⁽ᵏ⁾.
    pub per_application_bound: f64,
    pub applications: usize,
    pub worst_ratio: f64,
    pub violations: usize,
    /// Largest per-application ratio raised to 1/t.
    pub worst_amortized: f64,
    /// (δ_end/δ_0)^{1/T}.
    pub overall_amortized: f64,
    pub rate_bound: f64,
}

impl ContractionReport {
    pub fn ok(&self) -> bool {
        self.violations == 0 && self.worst_amortized <= self.rate_bound
    }
}

/// Repeats (1-η)𝔥^{(k(κ))} with η = ½ and checks every application's contraction.
pub fn strongly_convex_run(
    obj: &dyn Objective,
    x0: &[f64],
    source: &DeltaSource,
    budget: usize,
) -> Result<ContractionReport> {
    let mu = obj
        .strong_convexity()
        .filter(|m| *m > 0.0)
        .ok_or_else(|| Error::Invalid("objective has no positive strong convexity constant".into()))?;
    let l = obj.smoothness();
    let kappa = l / mu;
    let prec = Precision::default();
    let k = stage_for_kappa(prec, source, kappa, 20);
    let seq = Sequences::new(prec, k);
    let pattern = seq.building_block(k).scaled(&prec.ratio(1, 2));
    let steps = pattern.to_f64();
    let t = steps.len();
    let delta = source.delta(prec, k).to_f64();
    let sum: f64 = pattern.sum_h.to_f64();
    let per_application_bound = 1.0 - delta.min(mu / (2.0 * l)) * sum;
    let budget = (budget / t).max(1) * t;
    let tr = run(obj, x0, repeat_pattern(&steps, k), budget)?;
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut applications = 0;
    for (a, b) in tr.applications() {
        let (g0, g1) = (tr.gaps[a], tr.gaps[b]);
        if g0 < f64::MIN_POSITIVE * 1e20 {
            break;
        }
        applications += 1;
        let r = g1 / g0;
        worst_ratio = worst_ratio.max(r);
        if r > per_application_bound + GAP_SLACK {
            violations += 1;
        }
    }
    let overall = if tr.gaps[0] > 0.0 && tr.last_gap() > 0.0 {
        (tr.last_gap() / tr.gaps[0]).powf(1.0 / budget as f64)
    } else {
        0.0
    };
    Ok(ContractionReport {
        kappa,
        k,
        delta,
        pattern_len: t,
        per_application_bound,
        applications,
        worst_ratio,
        violations,
        worst_amortized: worst_ratio.powf(1.0 / t as f64),
        overall_amortized: overall,
        rate_bound: amortized_bound(kappa),
    })
}

/// Which necessary condition an adversarial instance targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Product,
    Sum,
    Mixed,
}

#[derive(Clone, Debug)]
pub struct AdversaryOutcome {
    pub rule: Rule,
    /// Index i the instance targets (none for the product rule).
    pub index: Option<usize>,
    pub x0: f64,
    pub x_final: f64,
    pub gap_start: f64,
    pub gap_end: f64,
    pub descended: bool,
    pub trace: GdTrace,
}

/// The three instances, each at the index where it does worst.
#[derive(Clone, Debug)]
pub struct AdversaryReport {
    pub product: AdversaryOutcome,
    pub sum: AdversaryOutcome,
    pub mixed: AdversaryOutcome,
    /// Descent per targeted index, sum rule.
    pub sum_by_index: Vec<bool>,
    /// Descent per targeted cyclic pair (i, i+1), mixed rule.
    pub mixed_by_index: Vec<bool>,
}

impl AdversaryReport {
    pub fn all_descended(&self) -> bool {
        self.product.descended && self.sum_by_index.iter().all(|d| *d) && self.mixed_by_index.iter().all(|d| *d)
    }
}

fn one_pass(obj: &dyn Objective, rule: Rule, index: Option<usize>, steps: &[f64], x0: f64) -> Result<AdversaryOutcome> {
    let tr = run(obj, &[x0], repeat_pattern(steps, 0), steps.len())?;
    let gap_start = tr.gaps[0];
    let gap_end = tr.last_gap();
    Ok(AdversaryOutcome {
        rule,
        index,
        x0,
        x_final: tr.x_final[0],
        gap_start,
        gap_end,
        descended: gap_end < gap_start,
        trace: tr,
    })
}

fn worst(mut v: Vec<AdversaryOutcome>) -> AdversaryOutcome {
    let pos = v
        .iter()
        .enumerate()
        .max_by(|a, b| {
            let ka = (!a.1.descended, a.1.gap_end - a.1.gap_start);
            let kb = (!b.1.descended, b.1.gap_end - b.1.gap_start);
            ka.partial_cmp(&kb).expect("finite gaps")
        })
        .map(|(i, _)| i)
        .expect("nonempty");
    v.swap_remove(pos)
}

/// Runs one pass of the pattern on ½x² from 1, on the Huber objective from
/// -Σ_{j<i}h_j - 1 for every i, and on the splice from 1 with the pattern
/// rotated so the pair (i, i+1 mod t) comes first.
pub fn adversary_suite(steps: &[f64]) -> Result<AdversaryReport> {
    if steps.is_empty() || steps.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::Invalid("steps must be positive and finite".into()));
    }
    let t = steps.len();
    let product = one_pass(&DiagonalQuadratic::scalar(), Rule::Product, None, steps, 1.0)?;
    let mut sums = Vec::with_capacity(t);
    let mut prefix = 0.0;
    for (i, h) in steps.iter().enumerate() {
        sums.push(one_pass(&Huber1D, Rule::Sum, Some(i), steps, -prefix - 1.0)?);
        prefix += h;
    }
    let mut mixed = Vec::with_capacity(t);
    for i in 0..t {
        let rotated: Vec<f64> = steps[i..].iter().chain(&steps[..i]).copied().collect();
        mixed.push(one_pass(&Splice1D, Rule::Mixed, Some(i), &rotated, 1.0)?);
    }
    let sum_by_index = sums.iter().map(|o| o.descended).collect();
    let mixed_by_index = mixed.iter().map(|o| o.descended).collect();
    Ok(AdversaryReport { product, sum: worst(sums), mixed: worst(mixed), sum_by_index, mixed_by_index })
}

/// Which of the three necessary bounds fail (non-strictly) for a pattern in f64.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundViolations {
    pub product: bool,
    pub sum: Vec<bool>,
    pub mixed: Vec<bool>,
}

// Negated comparisons count NaN as a violation.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn bound_violations(steps: &[f64]) -> BoundViolations {
    let t = steps.len();
    let total: f64 = steps.iter().sum();
    let product: f64 = steps.iter().map(|h| h - 1.0).product();
    BoundViolations {
        product: !(product > -1.0 && product < 1.0),
        sum: steps.iter().map(|h| !(*h < total - h + 2.0)).collect(),
        mixed: (0..t)
            .map(|i| {
                let ip = (i + 1) % t;
                let others = if ip == i { total - steps[i] } else { total - steps[i] - steps[ip] };
                !(others + 1.0 > (1.0 - steps[i]) * (1.0 - steps[ip]))
            })
            .collect(),
    }
}

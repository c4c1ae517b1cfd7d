//! Performance-estimation matrices for a fixed pattern and the numerical checks
//! that a certificate makes the pattern straightforward.
//!
//! Coordinates of the Gram matrix are [x_0, g_0, …, g_t]; function values are
//! [f_0, …, f_t]. Iterates satisfy x_{i+1} = x_i - h_i g_i (L = 1).

use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::certificate::{
    base_gamma, gamma_from_phi, lambda_cert, phi, Certificate, GammaMultiplier, Node, PhiVector,
};
use crate::error::{Error, Result};
use crate::linalg::{psd_check, PsdResult, SymMatrix};
use crate::real::{max_abs, to_decimal, Precision, Real};
use crate::sequence::{delta_conservative, Sequences, StepPattern};

type Sparse = Vec<(usize, Real)>;

/// Selector vectors and matrix generators for one step vector. Generators are
/// produced on demand per (i, j) pair.
#[derive(Clone, Debug)]
pub struct PepWorkspace {
    pub t: usize,
    pub steps: Vec<Real>,
    prec: Precision,
}

impl PepWorkspace {
    pub fn new(steps: &[Real]) -> Result<Self> {
        let prec = steps
            .first()
            .map(|x| Precision::new(x.prec()))
            .transpose()?
            .ok_or_else(|| Error::Invalid("empty step vector".into()))?;
        Ok(PepWorkspace { t: steps.len(), steps: steps.to_vec(), prec })
    }

    pub fn from_pattern(pattern: &StepPattern) -> Result<Self> {
        Self::new(&pattern.steps)
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    /// Dimension t + 2 of the Gram matrix.
    pub fn dim(&self) -> usize {
        self.t + 2
    }

    fn check(&self, n: Node) -> Result<()> {
        match n {
            Node::At(i) if i > self.t => Err(Error::Dimension { expected: self.t, found: i }),
            _ => Ok(()),
        }
    }

    /// 𝐱_i as a sparse vector.
    pub fn x(&self, n: Node) -> Sparse {
        match n {
            Node::Star => Vec::new(),
            Node::At(i) => {
                let mut v = vec![(0, self.prec.int(1))];
                v.extend((0..i).map(|l| (l + 1, Float::with_val(self.prec.bits(), -&self.steps[l]))));
                v
            }
        }
    }

    /// 𝐠_i as a sparse vector.
    pub fn g(&self, n: Node) -> Sparse {
        match n {
            Node::Star => Vec::new(),
            Node::At(i) => vec![(i + 1, self.prec.int(1))],
        }
    }

    /// 𝐟_i as a sparse vector in R^{t+1}.
    pub fn f(&self, n: Node) -> Sparse {
        match n {
            Node::Star => Vec::new(),
            Node::At(i) => vec![(i, self.prec.int(1))],
        }
    }

    /// 𝐱_i - 𝐱_j, touching only the coordinates that differ.
    pub fn x_diff(&self, i: Node, j: Node) -> Sparse {
        let bits = self.prec.bits();
        match (i, j) {
            (Node::At(a), Node::At(b)) => {
                let (lo, hi, sign) = if a < b { (a, b, 1) } else { (b, a, -1) };
                (lo..hi)
                    .map(|l| (l + 1, Float::with_val(bits, &self.steps[l] * sign)))
                    .collect()
            }
            (Node::Star, other) => self
                .x(other)
                .into_iter()
                .map(|(c, v)| (c, -v))
                .collect(),
            (_, Node::Star) => self.x(i),
        }
    }

    /// a_{i,j} = 𝐟_j - 𝐟_i.
    pub fn a(&self, i: Node, j: Node) -> Vec<Real> {
        let mut out = vec![self.prec.zero(); self.t + 1];
        for (c, v) in self.f(j) {
            out[c] += v;
        }
        for (c, v) in self.f(i) {
            out[c] -= v;
        }
        out
    }

    /// A_{i,j}(h) = 𝐠_j ⊙ (𝐱_i - 𝐱_j).
    pub fn a_matrix(&self, i: Node, j: Node) -> Result<SymMatrix> {
        self.check(i)?;
        self.check(j)?;
        let mut m = SymMatrix::zeros(self.prec, self.dim());
        m.add_sym_outer(&self.g(j), &self.x_diff(i, j), &self.prec.int(1));
        Ok(m)
    }

    /// B_{i,j}(h) = (𝐱_i - 𝐱_j) ⊙ (𝐱_i - 𝐱_j).
    pub fn b_matrix(&self, i: Node, j: Node) -> Result<SymMatrix> {
        self.check(i)?;
        self.check(j)?;
        let d = self.x_diff(i, j);
        let mut m = SymMatrix::zeros(self.prec, self.dim());
        m.add_sym_outer(&d, &d, &self.prec.int(1));
        Ok(m)
    }

    /// C_{i,j} = (𝐠_i - 𝐠_j) ⊙ (𝐠_i - 𝐠_j).
    pub fn c_matrix(&self, i: Node, j: Node) -> Result<SymMatrix> {
        self.check(i)?;
        self.check(j)?;
        let d = self.g_diff(i, j);
        let mut m = SymMatrix::zeros(self.prec, self.dim());
        m.add_sym_outer(&d, &d, &self.prec.int(1));
        Ok(m)
    }

    fn g_diff(&self, i: Node, j: Node) -> Sparse {
        let mut d = self.g(i);
        d.extend(self.g(j).into_iter().map(|(c, v)| (c, -v)));
        d
    }

    /// Streams Σ λ_{i,j}(A_{i,j} + ½C_{i,j}) over a sparse multiplier.
    pub fn accumulate<'a>(&self, entries: impl IntoIterator<Item = (Node, Node, &'a Real)>) -> Result<Assembly> {
        let n = self.dim();
        let mut za = SymMatrix::zeros(self.prec, n);
        let mut zc = SymMatrix::zeros(self.prec, n);
        let half = self.prec.ratio(1, 2);
        for (i, j, lam) in entries {
            self.check(i)?;
            self.check(j)?;
            if i == j || *lam == 0 {
                continue;
            }
            za.add_sym_outer(&self.g(j), &self.x_diff(i, j), lam);
            let d = self.g_diff(i, j);
            zc.add_sym_outer(&d, &d, &Float::with_val(self.prec.bits(), lam * &half));
        }
        let one = self.prec.int(1);
        let z = za.combine(&zc, &one, &one)?;
        let m_vec = (1..n).map(|c| z.get(c, 0).clone()).collect();
        Ok(Assembly { m: z.block(1, n - 1), w1: za.block(1, n - 1), w2: zc.block(1, n - 1), m_vec })
    }
}

/// The (t+1)-blocks of Z and its first column.
#[derive(Clone, Debug)]
pub struct Assembly {
    /// M = W1 + W2.
    pub m: SymMatrix,
    pub w1: SymMatrix,
    pub w2: SymMatrix,
    /// m(λ), the off-corner part of the first column of Z.
    pub m_vec: Vec<Real>,
}

/// M(λ,h), W1, W2 and m(λ) for a certificate at a pattern.
pub fn assemble_m(cert: &Certificate, pattern: &StepPattern) -> Result<Assembly> {
    if cert.t != pattern.len() {
        return Err(Error::Dimension { expected: cert.t, found: pattern.len() });
    }
    PepWorkspace::from_pattern(pattern)?.accumulate(cert.entries())
}

pub fn assemble_gamma(gamma: &GammaMultiplier, steps: &[Real]) -> Result<Assembly> {
    if gamma.t() != steps.len() {
        return Err(Error::Dimension { expected: gamma.t(), found: steps.len() });
    }
    let entries = gamma.entries();
    PepWorkspace::new(steps)?.accumulate(entries.iter().map(|(i, j, v)| (*i, *j, v)))
}

fn rel(x: &Real, scale: &Real) -> Real {
    let bits = x.prec();
    let s = Float::with_val(bits, scale.abs_ref()).max(&Float::with_val(bits, 1u32));
    Float::with_val(bits, x.abs_ref()) / s
}

/// Residual of one identity check.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub max_residual: Real,
    pub ok: bool,
}

/// Row/column balance: row 0 exceeds column 0 by one, interior rows balance,
/// row t falls one short of column t. Residuals are relative to the larger of
/// the two sums (at least one).
pub fn check_rowcol(cert: &Certificate, tol: f64) -> Residual {
    let prec = cert.precision();
    let mut worst = prec.zero();
    for r in 0..=cert.t {
        let n = Node::At(r);
        let rs = cert.row_sum(n);
        let cs = cert.col_sum(n);
        let target = if r == 0 {
            1
        } else if r == cert.t {
            -1
        } else {
            0
        };
        let res = Float::with_val(prec.bits(), &rs - &cs) - target;
        let scale = Float::with_val(prec.bits(), rs.abs_ref()).max(&cs.clone().abs());
        let e = rel(&res, &scale);
        if e > worst {
            worst = e;
        }
    }
    let ok = worst <= tol;
    Residual { max_residual: worst, ok }
}

/// Σ λ_{i,j} a_{i,j} - (a_{⋆,t} - a_{⋆,0}) assembled from the selector vectors.
pub fn lambda_linear_residual<'a>(
    ws: &PepWorkspace,
    entries: impl IntoIterator<Item = (Node, Node, &'a Real)>,
) -> Real {
    let prec = ws.precision();
    let mut acc = vec![prec.zero(); ws.t + 1];
    let mut scale = prec.int(1);
    for (i, j, v) in entries {
        for (c, x) in ws.a(i, j).iter().enumerate() {
            acc[c] += Float::with_val(prec.bits(), x * v);
        }
        if Float::with_val(prec.bits(), v.abs_ref()) > scale {
            scale = Float::with_val(prec.bits(), v.abs_ref());
        }
    }
    let target_hi = ws.a(Node::Star, Node::At(ws.t));
    let target_lo = ws.a(Node::Star, Node::At(0));
    for c in 0..=ws.t {
        acc[c] -= &target_hi[c];
        acc[c] += &target_lo[c];
    }
    max_abs(prec, &acc) / scale
}

/// The three-line system γ_{⋆,0} - γ_{0,1} = 2H, γ_{⋆,i} - γ_{i,i+1} + γ_{i-1,i} = 0,
/// γ_{⋆,t} + γ_{t-1,t} = 0 with H = Σ steps. Residuals relative to 2H.
pub fn check_gamma_lin(gamma: &GammaMultiplier, steps: &[Real], tol: f64) -> Result<Residual> {
    let t = steps.len();
    if gamma.t() != t {
        return Err(Error::Dimension { expected: t, found: gamma.t() });
    }
    let prec = Precision::new(steps[0].prec())?;
    let bits = prec.bits();
    let two_h = crate::real::sum(prec, steps) * 2u32;
    let (s, u) = (&gamma.star_row, &gamma.superdiag);
    let mut res = vec![Float::with_val(bits, &s[0] - &u[0]) - &two_h];
    for i in 1..t {
        res.push(Float::with_val(bits, &s[i] - &u[i]) + &u[i - 1]);
    }
    res.push(Float::with_val(bits, &s[t] + &u[t - 1]));
    let worst = max_abs(prec, &res) / &two_h;
    let ok = worst <= tol;
    Ok(Residual { max_residual: worst, ok })
}

/// Deviation of M from φφᵀ/2 and the spectral rank-one test.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneReport {
    /// max |M - φφᵀ/2| / max |M|.
    pub max_deviation: Real,
    /// Second largest |eigenvalue| over the largest.
    pub singular_ratio: Real,
    pub nonnegative: bool,
    pub ok: bool,
}

pub fn check_rank_one(m: &SymMatrix, phi: &PhiVector, tol: f64) -> Result<RankOneReport> {
    let n = m.dim();
    if phi.values.len() != n {
        return Err(Error::Dimension { expected: n, found: phi.values.len() });
    }
    let prec = m.precision();
    let bits = prec.bits();
    let scale = m.max_abs();
    let mut worst = prec.zero();
    let mut nonnegative = true;
    for i in 0..n {
        for j in 0..n {
            let want = Float::with_val(bits, &phi.values[i] * &phi.values[j]) / 2u32;
            let d = Float::with_val(bits, m.get(i, j) - &want).abs();
            if d > worst {
                worst = d;
            }
            if *m.get(i, j) < 0 && Float::with_val(bits, m.get(i, j).abs_ref()) > Float::with_val(bits, &scale * tol) {
                nonnegative = false;
            }
        }
    }
    let max_deviation = worst / &scale;
    let mut sv: Vec<Real> = m.eigenvalues()?.into_iter().map(|x| x.abs()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let singular_ratio = if n > 1 { Float::with_val(bits, &sv[1] / &sv[0]) } else { prec.zero() };
    let ok = max_deviation <= tol && singular_ratio <= tol && nonnegative;
    Ok(RankOneReport { max_deviation, singular_ratio, nonnegative, ok })
}

/// Laplacian of the graph on 0..=t with edge weights λ_{i,j} + λ_{j,i}.
pub fn laplacian(cert: &Certificate) -> SymMatrix {
    let prec = cert.precision();
    let mut l = SymMatrix::zeros(prec, cert.t + 1);
    for (i, j, v) in cert.entries() {
        if let (Node::At(a), Node::At(b)) = (i, j) {
            if a != b {
                l.add(a, a, v);
                l.add(b, b, v);
                l.add(a, b, &Float::with_val(prec.bits(), -v));
            }
        }
    }
    l
}

/// Two smallest eigenvalues of the weighted Laplacian.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianSpectrum {
    pub smallest: Real,
    pub second: Real,
    /// max |L·𝟏|, zero when 𝟏 spans the kernel direction exactly.
    pub kernel_residual: Real,
}

/// Second-smallest eigenvalue of the Laplacian with edge weights λ_{i,j} + λ_{j,i}.
/// The matrix W2 inside M carries half these weights.
pub fn w2_second_eigenvalue(cert: &Certificate) -> Result<LaplacianSpectrum> {
    let l = laplacian(cert);
    let prec = cert.precision();
    let ones = vec![prec.int(1); l.dim()];
    let kernel_residual = max_abs(prec, &l.mul_vec(&ones));
    let ev = l.eigenvalues()?;
    Ok(LaplacianSpectrum { smallest: ev[0].clone(), second: ev[1].clone(), kernel_residual })
}

/// (1/286)(1+√2)^{-k}.
pub fn second_eigenvalue_bound(prec: Precision, k: u32) -> Real {
    prec.silver_pow(-(k as i64)) / 286u32
}

/// ((2-√2)/(8√2))(1+√2)^{-2k+1}.
pub fn superdiagonal_bound(prec: Precision, k: u32) -> Real {
    let r2 = prec.sqrt2();
    let num = Float::with_val(prec.bits(), 2u32 - &r2);
    num / (r2 * 8u32) * prec.silver_pow(1 - 2 * k as i64)
}

pub fn superdiagonal_min(cert: &Certificate) -> Real {
    cert.superdiagonal()
        .into_iter()
        .min_by(|a, b| a.partial_cmp(b).expect("finite"))
        .unwrap_or_else(|| cert.precision().zero())
}

/// min(min_i λ_{i,i+1}/H, 𝔏/(21H³)) for t ≥ 3, H ≥ 8 and 𝔏 ∈ (0, 1].
pub fn delta_quantitative(cert: &Certificate, pattern: &StepPattern, lfrak: &Real) -> Result<Real> {
    if pattern.len() < 3 {
        return Err(Error::Invalid(format!("need t >= 3, got {}", pattern.len())));
    }
    if pattern.sum_h < 8 {
        return Err(Error::Invalid(format!("need H >= 8, got {}", pattern.sum_h.to_f64())));
    }
    if *lfrak <= 0 || *lfrak > 1 {
        return Err(Error::Invalid("eigenvalue lower bound must lie in (0, 1]".into()));
    }
    Ok(delta_quantitative_raw(&superdiagonal_min(cert), &pattern.sum_h, lfrak))
}

fn delta_quantitative_raw(superdiag_min: &Real, h: &Real, lfrak: &Real) -> Real {
    let bits = h.prec();
    let first = Float::with_val(bits, superdiag_min / h);
    let h3 = Float::with_val(bits, h * h) * h;
    let second = Float::with_val(bits, lfrak / (h3 * 21u32));
    first.min(&second)
}

/// The 𝔏/(21H³) branch evaluated at 𝔏 = s^{-k}/286 and H = 4√2 s^k, next to
/// the conservative Δ⁽ᵏ⁾; the two agree because 286·21·128 = 768768.
pub fn delta_composition(prec: Precision, k: u32) -> (Real, Real) {
    let lfrak = second_eigenvalue_bound(prec, k);
    let h = prec.sqrt2() * 4u32 * prec.silver_pow(k as i64);
    let composed = Float::with_val(prec.bits(), &lfrak / (Float::with_val(prec.bits(), h.square_ref()) * &h * 21u32));
    (composed, delta_conservative(prec, k))
}

/// Constraint-by-constraint outcome of a membership test.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipReport {
    pub delta: Real,
    pub lambda_linear: Residual,
    pub gamma_linear: Residual,
    pub m_lambda_zero: Residual,
    pub lambda_nonneg: bool,
    pub shifted_nonneg: bool,
    pub psd_first: PsdResult,
    pub psd_second: PsdResult,
}

impl MembershipReport {
    pub fn passed(&self) -> bool {
        self.lambda_linear.ok
            && self.gamma_linear.ok
            && self.m_lambda_zero.ok
            && self.lambda_nonneg
            && self.shifted_nonneg
            && self.psd_first.passed
            && self.psd_second.passed
    }
}

/// Tolerances for the checks.
#[derive(Clone, Debug)]
pub struct Tolerances {
    /// Relative tolerance on linear identities.
    pub identity: f64,
    /// ε in the PSD rule λ_min > -ε(1 + ‖·‖∞).
    pub psd: Real,
}

impl Tolerances {
    pub fn for_precision(prec: Precision) -> Self {
        Tolerances { identity: 1e-20, psd: prec.psd_tolerance() }
    }
}

/// Tests (λ, γ) against the spectral set at step vector `steps` and Δ = `delta`.
pub fn membership_s(
    steps: &[Real],
    delta: &Real,
    cert: &Certificate,
    gamma: &GammaMultiplier,
    tol: &Tolerances,
) -> Result<MembershipReport> {
    let ws = PepWorkspace::new(steps)?;
    let prec = ws.precision();
    let bits = prec.bits();
    let lam_res = lambda_linear_residual(&ws, cert.entries());
    let lambda_linear = Residual { ok: lam_res <= tol.identity, max_residual: lam_res };
    let gamma_linear = check_gamma_lin(gamma, steps, tol.identity)?;
    let lam = ws.accumulate(cert.entries())?;
    let m_scale = lam.m.max_abs();
    let m_res = max_abs(prec, &lam.m_vec) / Float::with_val(bits, &m_scale + 1u32);
    let m_lambda_zero = Residual { ok: m_res <= tol.identity, max_residual: m_res };
    let lambda_nonneg = cert.entries().all(|(_, _, v)| *v >= 0);

    // λ + Δγ as a sparse list.
    let mut shifted: std::collections::BTreeMap<(Node, Node), Real> =
        cert.entries().map(|(i, j, v)| ((i, j), v.clone())).collect();
    for (i, j, g) in gamma.entries() {
        let add = Float::with_val(bits, &g * delta);
        shifted
            .entry((i, j))
            .and_modify(|x| *x += &add)
            .or_insert(add);
    }
    let shifted_nonneg = shifted.values().all(|v| *v >= 0);
    let gam = assemble_gamma(gamma, steps)?;
    let sh = ws.accumulate(shifted.iter().map(|((i, j), v)| (*i, *j, v)))?;
    let total = crate::real::sum(prec, steps);
    let block = |inner: &SymMatrix| {
        let n = inner.dim() + 1;
        SymMatrix::from_fn(prec, n, |a, b| match (a, b) {
            (0, 0) => total.clone(),
            (0, c) => gam.m_vec[c - 1].clone(),
            (r, c) => inner.get(r - 1, c - 1).clone(),
        })
    };
    let psd_first = psd_check(&block(&lam.m), &tol.psd)?;
    let psd_second = psd_check(&block(&sh.m), &tol.psd)?;
    Ok(MembershipReport {
        delta: delta.clone(),
        lambda_linear,
        gamma_linear,
        m_lambda_zero,
        lambda_nonneg,
        shifted_nonneg,
        psd_first,
        psd_second,
    })
}

/// Result of a bisection on Δ.
#[derive(Clone, Debug, PartialEq)]
pub struct BisectResult {
    /// Largest Δ found to pass.
    pub delta: Real,
    /// Smallest Δ found to fail, or 1 if none failed.
    pub upper: Real,
    /// Membership at a few values below `delta` (monotonicity spot checks).
    pub spot_checks_ok: bool,
}

/// Geometric bisection of the passing Δ over [lower, 1]. Each iteration halves
/// the bracket on a log scale, so after n steps hi/lo = (1/lower)^{2^{-n}}.
pub fn bisect_delta(
    steps: &[Real],
    cert: &Certificate,
    gamma: &GammaMultiplier,
    lower: &Real,
    iterations: u32,
    tol: &Tolerances,
) -> Result<BisectResult> {
    let prec = Precision::new(steps[0].prec())?;
    let bits = prec.bits();
    if !membership_s(steps, lower, cert, gamma, tol)?.passed() {
        return Err(Error::Construction(format!(
            "membership fails already at the lower end Δ = {}",
            to_decimal(lower)
        )));
    }
    let mut lo = Float::with_val(bits, lower);
    let mut hi = prec.int(1);
    if iterations > 0 && membership_s(steps, &hi, cert, gamma, tol)?.passed() {
        lo = hi.clone();
    } else {
        for _ in 0..iterations {
            let mid = Float::with_val(bits, &lo * &hi).sqrt();
            if membership_s(steps, &mid, cert, gamma, tol)?.passed() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let mut spot_checks_ok = true;
    for f in [0.5, 0.1, 1e-3] {
        let d = Float::with_val(bits, &lo * f);
        if d > *lower && !membership_s(steps, &d, cert, gamma, tol)?.passed() {
            spot_checks_ok = false;
        }
    }
    Ok(BisectResult { delta: lo, upper: hi, spot_checks_ok })
}

/// Status of one necessary condition for straightforwardness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Strict,
    /// Holds with equality up to the tolerance.
    Tight,
    Violated,
}

fn classify(margin: &Real, scale: &Real, tol: f64) -> BoundStatus {
    let band = Float::with_val(margin.prec(), scale * tol);
    if *margin > band {
        BoundStatus::Strict
    } else if Float::with_val(margin.prec(), -margin) > band {
        BoundStatus::Violated
    } else {
        BoundStatus::Tight
    }
}

/// Margins of the product, sum and mixed necessary conditions. A positive
/// margin means the bound holds strictly; any violation certifies that the
/// pattern is not straightforward.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    /// ∏(h_i - 1).
    pub product: Real,
    pub product_status: BoundStatus,
    /// Σ_{j≠i} h_j + 2 - h_i, per i.
    pub sum_margins: Vec<Real>,
    pub sum_status: Vec<BoundStatus>,
    /// Σ_{j∉{i,i+}} h_j + 1 - (1-h_i)(1-h_{i+}), per cyclic pair.
    pub mixed_margins: Vec<Real>,
    pub mixed_status: Vec<BoundStatus>,
}

impl FeasibilityReport {
    pub fn all_strict(&self) -> bool {
        self.product_status == BoundStatus::Strict
            && self.sum_status.iter().all(|s| *s == BoundStatus::Strict)
            && self.mixed_status.iter().all(|s| *s == BoundStatus::Strict)
    }

    pub fn any_violated(&self) -> bool {
        self.product_status == BoundStatus::Violated
            || self.sum_status.contains(&BoundStatus::Violated)
            || self.mixed_status.contains(&BoundStatus::Violated)
    }
}

pub fn pattern_feasibility_bounds(steps: &[Real], tol: f64) -> Result<FeasibilityReport> {
    if steps.is_empty() {
        return Err(Error::Invalid("empty step vector".into()));
    }
    if steps.iter().any(|h| *h <= 0) {
        return Err(Error::Invalid("steps must be positive".into()));
    }
    let prec = Precision::new(steps[0].prec())?;
    let bits = prec.bits();
    let t = steps.len();
    let total = crate::real::sum(prec, steps);
    let mut product = prec.int(1);
    for h in steps {
        product *= Float::with_val(bits, h - 1u32);
    }
    let margin_p = Float::with_val(bits, 1u32 - Float::with_val(bits, product.abs_ref()));
    let product_status = classify(&margin_p, &prec.int(1), tol);
    let scale = Float::with_val(bits, &total + 2u32);
    let sum_margins: Vec<Real> = steps
        .iter()
        .map(|h| Float::with_val(bits, &total + 2u32) - Float::with_val(bits, h * 2u32))
        .collect();
    let sum_status = sum_margins.iter().map(|m| classify(m, &scale, tol)).collect();
    let mixed_margins: Vec<Real> = (0..t)
        .map(|i| {
            let ip = (i + 1) % t;
            let others = if ip == i {
                Float::with_val(bits, &total - &steps[i])
            } else {
                Float::with_val(bits, &total - &steps[i]) - &steps[ip]
            };
            let prod = Float::with_val(bits, 1u32 - &steps[i]) * Float::with_val(bits, 1u32 - &steps[ip]);
            others + 1u32 - prod
        })
        .collect();
    let mscale = Float::with_val(bits, Float::with_val(bits, &total * &total) + 1u32);
    let mixed_status = mixed_margins.iter().map(|m| classify(m, &mscale, tol)).collect();
    Ok(FeasibilityReport {
        product,
        product_status,
        sum_margins,
        sum_status,
        mixed_margins,
        mixed_status,
    })
}

/// Options for a full certificate verification.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub tolerances: Tolerances,
    /// Bisection steps on Δ; `None` skips the bisection.
    pub bisect: Option<u32>,
    /// Whether to run the spectral membership test at the conservative Δ.
    pub membership: bool,
}

impl VerifyOptions {
    pub fn new(prec: Precision) -> Self {
        VerifyOptions { tolerances: Tolerances::for_precision(prec), bisect: None, membership: true }
    }
}

/// Every check run on λ⁽ᵏ⁾ at 𝔥⁽ᵏ⁾.
#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub k: u32,
    pub precision_bits: u32,
    pub rowcol: Residual,
    pub lambda_linear: Residual,
    pub rank_one: RankOneReport,
    pub m_lambda_zero: Residual,
    /// λ ≥ 0, zero ⋆ row/column and zero final row.
    pub nonneg_ok: bool,
    pub phi_sum_residual: Real,
    pub second_eig: Real,
    pub second_eig_bound: Option<Real>,
    pub superdiag_min: Real,
    pub superdiag_bound: Option<Real>,
    pub delta_conservative: Real,
    pub delta_quant: Option<Real>,
    pub membership: Option<MembershipReport>,
    pub delta_bisected: Option<BisectResult>,
}

impl VerificationReport {
    pub fn eigen_bound_ok(&self) -> bool {
        self.second_eig_bound.as_ref().is_none_or(|b| self.second_eig >= *b)
    }

    pub fn superdiag_ok(&self) -> bool {
        self.superdiag_min > 0 && self.superdiag_bound.as_ref().is_none_or(|b| self.superdiag_min >= *b)
    }

    pub fn delta_quant_ok(&self) -> bool {
        self.delta_quant.as_ref().is_none_or(|d| *d >= self.delta_conservative)
    }

    pub fn passed(&self) -> bool {
        self.rowcol.ok
            && self.lambda_linear.ok
            && self.rank_one.ok
            && self.m_lambda_zero.ok
            && self.nonneg_ok
            && self.eigen_bound_ok()
            && self.superdiag_ok()
            && self.delta_quant_ok()
            && self.membership.as_ref().is_none_or(|m| m.passed())
            && self.delta_bisected.as_ref().is_none_or(|b| b.spot_checks_ok)
    }

    pub fn to_json(&self) -> ReportJson {
        let d = to_decimal;
        ReportJson {
            k: self.k,
            precision_bits: self.precision_bits,
            passed: self.passed(),
            rowcol_ok: self.rowcol.ok,
            rowcol_residual: d(&self.rowcol.max_residual),
            lambda_linear_ok: self.lambda_linear.ok,
            lambda_linear_residual: d(&self.lambda_linear.max_residual),
            rank_one_ok: self.rank_one.ok,
            rank_one_deviation: d(&self.rank_one.max_deviation),
            rank_one_singular_ratio: d(&self.rank_one.singular_ratio),
            m_lambda_zero_ok: self.m_lambda_zero.ok,
            m_lambda_residual: d(&self.m_lambda_zero.max_residual),
            nonneg_ok: self.nonneg_ok,
            phi_sum_residual: d(&self.phi_sum_residual),
            second_eig: d(&self.second_eig),
            second_eig_bound: self.second_eig_bound.as_ref().map(d),
            second_eig_ok: self.eigen_bound_ok(),
            superdiag_min: d(&self.superdiag_min),
            superdiag_bound: self.superdiag_bound.as_ref().map(d),
            superdiag_ok: self.superdiag_ok(),
            delta_conservative: d(&self.delta_conservative),
            delta_quant: self.delta_quant.as_ref().map(d),
            delta_quant_ok: self.delta_quant_ok(),
            membership_ok: self.membership.as_ref().map(|m| m.passed()),
            membership_min_eig: self
                .membership
                .as_ref()
                .map(|m| [d(&m.psd_first.min_eigenvalue), d(&m.psd_second.min_eigenvalue)]),
            delta_bisected: self.delta_bisected.as_ref().map(|b| d(&b.delta)),
            delta_bisected_upper: self.delta_bisected.as_ref().map(|b| d(&b.upper)),
        }
    }
}

/// Serialized report: reals as decimal strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportJson {
    pub k: u32,
    pub precision_bits: u32,
    pub passed: bool,
    pub rowcol_ok: bool,
    pub rowcol_residual: String,
    pub lambda_linear_ok: bool,
    pub lambda_linear_residual: String,
    pub rank_one_ok: bool,
    pub rank_one_deviation: String,
    pub rank_one_singular_ratio: String,
    pub m_lambda_zero_ok: bool,
    pub m_lambda_residual: String,
    pub nonneg_ok: bool,
    pub phi_sum_residual: String,
    pub second_eig: String,
    pub second_eig_bound: Option<String>,
    pub second_eig_ok: bool,
    pub superdiag_min: String,
    pub superdiag_bound: Option<String>,
    pub superdiag_ok: bool,
    pub delta_conservative: String,
    pub delta_quant: Option<String>,
    pub delta_quant_ok: bool,
    pub membership_ok: Option<bool>,
    pub membership_min_eig: Option<[String; 2]>,
    pub delta_bisected: Option<String>,
    pub delta_bisected_upper: Option<String>,
}

/// The certificate structure: nonnegative, zero ⋆ row and column, zero final
/// row.
pub fn check_structure(cert: &Certificate) -> bool {
    cert.entries().all(|(i, j, v)| {
        *v >= 0 && i != Node::Star && j != Node::Star && i != Node::At(cert.t) && i != j
    })
}

/// Scaled step vector 𝔥/2 and the matching multiplier γ/2 (the printed pair for
/// k = 0).
pub fn halved_instance(seq: &Sequences, k: u32) -> Result<(Vec<Real>, GammaMultiplier)> {
    let prec = seq.precision();
    let half = prec.ratio(1, 2);
    let pattern = seq.building_block(k);
    let steps = pattern.scaled(&half).steps;
    let gamma = if k == 0 {
        base_gamma(prec)
    } else {
        gamma_from_phi(&pattern.sum_h, &phi(seq, k))?.scaled(&half)
    };
    Ok((steps, gamma))
}

/// Runs every check on stage k.
pub fn verify(seq: &Sequences, k: u32, opts: &VerifyOptions) -> Result<VerificationReport> {
    let prec = seq.precision();
    let bits = prec.bits();
    let tol = &opts.tolerances;
    let pattern = seq.building_block(k);
    let cert = lambda_cert(seq, k);
    let ph = phi(seq, k);
    let asm = assemble_m(&cert, &pattern)?;
    let ws = PepWorkspace::from_pattern(&pattern)?;
    let rowcol = check_rowcol(&cert, tol.identity);
    let lres = lambda_linear_residual(&ws, cert.entries());
    let lambda_linear = Residual { ok: lres <= tol.identity, max_residual: lres };
    let rank_one = check_rank_one(&asm.m, &ph, tol.identity)?;
    let mres = max_abs(prec, &asm.m_vec) / Float::with_val(bits, asm.m.max_abs() + 1u32);
    let m_lambda_zero = Residual { ok: mres <= tol.identity, max_residual: mres };
    let root = Float::with_val(bits, &pattern.sum_h * 2u32).sqrt();
    let phi_sum_residual = crate::real::rel_err(&ph.sum(), &root, 1.0);
    let spectrum = w2_second_eigenvalue(&cert)?;
    let sd_min = superdiagonal_min(&cert);
    let (eig_bound, sd_bound) = if k >= 1 {
        (Some(second_eigenvalue_bound(prec, k)), Some(superdiagonal_bound(prec, k)))
    } else {
        (None, None)
    };
    let delta_quant = if pattern.len() >= 3 {
        // W2 inside M carries half the Laplacian weights.
        let lfrak = Float::with_val(bits, &spectrum.second / 2u32).min(&prec.int(1));
        Some(delta_quantitative(&cert, &pattern, &lfrak)?)
    } else {
        None
    };
    let lower = delta_conservative(prec, k);
    let (steps, gamma) = halved_instance(seq, k)?;
    let membership = if opts.membership {
        Some(membership_s(&steps, &lower, &cert, &gamma, tol)?)
    } else {
        None
    };
    let delta_bisected = match opts.bisect {
        Some(n) => Some(bisect_delta(&steps, &cert, &gamma, &lower, n, tol)?),
        None => None,
    };
    Ok(VerificationReport {
        k,
        precision_bits: bits,
        rowcol,
        lambda_linear,
        rank_one,
        m_lambda_zero,
        nonneg_ok: check_structure(&cert),
        phi_sum_residual,
        second_eig: spectrum.second,
        second_eig_bound: eig_bound,
        superdiag_min: sd_min,
        superdiag_bound: sd_bound,
        delta_conservative: lower,
        delta_quant,
        membership,
        delta_bisected,
    })
}

/// Verifies several stages in parallel; each stage gets its own memo table at
/// `prec_for(k)`.
pub fn verify_many(
    ks: &[u32],
    prec_for: impl Fn(u32) -> Precision + Sync,
    opts_for: impl Fn(Precision) -> VerifyOptions + Sync,
) -> Vec<Result<VerificationReport>> {
    ks.par_iter()
        .map(|&k| {
            let prec = prec_for(k);
            let seq = Sequences::new(prec, k);
            verify(&seq, k, &opts_for(prec))
        })
        .collect()
}

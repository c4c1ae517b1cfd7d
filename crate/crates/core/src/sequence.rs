//! Scalar sequences β, α, μ, the vectors π⁽ˡ⁾ and the building-block patterns.

pub mod schedule;

use std::fmt;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{rel_err, to_decimal, Precision, Real};

pub use schedule::{build_schedule, repetitions, DeltaSource, Schedule, ScheduledStep, Stage};

/// 2-adic valuation of an integer. Zero has infinite valuation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Valuation {
    Finite(u32),
    Infinite,
}

impl Valuation {
    pub fn of(n: u64) -> Self {
        if n == 0 {
            Valuation::Infinite
        } else {
            Valuation::Finite(n.trailing_zeros())
        }
    }

    /// The finite value. Panics on the sentinel, which never indexes a sequence.
    pub fn finite(self) -> u32 {
        match self {
            Valuation::Finite(v) => v,
            Valuation::Infinite => panic!("2-adic valuation of zero used as an index"),
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => f.write_str("inf"),
        }
    }
}

/// Memo table of (β_i, α_i, μ_i).
///
/// Built once for a fixed precision and index range, then only read. Every
/// consumer of a given table sees the same bits.
#[derive(Clone, Debug)]
pub struct Sequences {
    prec: Precision,
    beta: Vec<Real>,
    alpha: Vec<Real>,
    mu: Vec<Real>,
}

impl Sequences {
    /// Table sufficient for stages `0..=max_k`: α up to index max_k + 1, μ up to
    /// max_k + 2 and β up to max_k + 3.
    pub fn new(prec: Precision, max_k: u32) -> Self {
        let n = max_k as usize + 2;
        let bits = prec.bits();
        let silver = prec.silver();
        let mut beta = Vec::with_capacity(n + 2);
        let mut pow = Float::with_val(bits, 1u32) / &silver; // (1+√2)^{-1}
        for _ in 0..n + 2 {
            beta.push(Float::with_val(bits, &pow + 1u32));
            pow *= &silver;
        }
        let mut alpha: Vec<Real> = Vec::with_capacity(n);
        let mut mu: Vec<Real> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let m = mu_direct(prec, &alpha, &beta, i);
            if i < n {
                alpha.push(alpha_root(prec, &m, &beta[i + 1]));
            }
            mu.push(m);
        }
        Sequences { prec, beta, alpha, mu }
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    /// Largest stage whose pattern and certificate this table covers.
    pub fn max_stage(&self) -> u32 {
        self.alpha.len() as u32 - 2
    }

    fn check(&self, what: &str, i: usize, len: usize) {
        assert!(
            i < len,
            "{what}_{i} outside the memo table (covers stages up to {})",
            self.max_stage()
        );
    }

    /// β_i = 1 + (1+√2)^{i-1}.
    pub fn beta(&self, i: u32) -> &Real {
        self.check("beta", i as usize, self.beta.len());
        &self.beta[i as usize]
    }

    /// Root larger than one of 2(x-1)² + (μ_i-1)(x-1) - (β_{i+1}-1)(μ_i-1).
    pub fn alpha(&self, i: u32) -> &Real {
        self.check("alpha", i as usize, self.alpha.len());
        &self.alpha[i as usize]
    }

    pub fn mu(&self, i: u32) -> &Real {
        self.check("mu", i as usize, self.mu.len());
        &self.mu[i as usize]
    }

    /// π⁽ˡ⁾, length 2^ℓ - 1, entry i (1-based) equal to β_{ν(i)}.
    pub fn pi_vector(&self, ell: u32) -> Vec<Real> {
        (1..(1u64 << ell))
            .map(|i| self.beta(Valuation::of(i).finite()).clone())
            .collect()
    }

    /// H_k = 2(μ_k - 1), the sum of the k-th building block.
    pub fn pattern_sum(&self, k: u32) -> Real {
        Float::with_val(self.prec.bits(), self.mu(k) - 1u32) * 2u32
    }

    /// 𝔥⁽ᵏ⁾ = [α_0, π⁽⁰⁾, …, α_{k-1}, π⁽ᵏ⁻¹⁾, μ_k, mirror image].
    pub fn building_block(&self, k: u32) -> StepPattern {
        let mut left = Vec::new();
        for ell in 0..k {
            left.push(self.alpha(ell).clone());
            left.extend(self.pi_vector(ell));
        }
        let mut steps = left.clone();
        steps.push(self.mu(k).clone());
        steps.extend(left.into_iter().rev());
        StepPattern::new(k, steps, self.prec)
    }

    /// The four inequality chains bounding α, H, μ - 1 and the growth of μ.
    pub fn bounds_check(&self, k: u32) -> Result<BoundsReport> {
        if k == 0 {
            return Err(Error::Invalid("sequence bounds need k >= 1".into()));
        }
        let p = self.prec;
        let bits = p.bits();
        let sk = p.silver_pow(k as i64);
        let sqrt2 = p.sqrt2();
        let h = self.pattern_sum(k);
        let mu1 = Float::with_val(bits, self.mu(k) - 1u32);
        let growth = Float::with_val(bits, self.mu(k) - self.mu(k - 1));
        let growth_floor = (Float::with_val(bits, 2u32) - &sqrt2) * p.silver_pow(k as i64 - 1);
        let alpha_bracket = self.beta(k) <= self.alpha(k) && self.alpha(k) <= self.beta(k + 1);
        let h_lo = Float::with_val(bits, &sqrt2 * &sk) * 2u32;
        let h_hi = Float::with_val(bits, &sqrt2 * &sk) * 4u32;
        let mu_lo = Float::with_val(bits, &sqrt2 * &sk);
        let mu_hi = Float::with_val(bits, &mu_lo * 2u32);
        Ok(BoundsReport {
            k,
            alpha_bracket,
            sum_bracket: h_lo <= h && h <= h_hi,
            mu_bracket: mu_lo <= mu1 && mu1 <= mu_hi,
            mu_growth: growth >= growth_floor,
        })
    }

    /// Relative residuals of the exact identities tying α, β, μ and 𝔥⁽ᵏ⁾ together.
    pub fn identity_residuals(&self, k: u32) -> Result<IdentityResiduals> {
        if k == 0 || k > self.max_stage() {
            return Err(Error::Invalid(format!("identities need 1 <= k <= {}", self.max_stage())));
        }
        let p = self.prec;
        let bits = p.bits();
        let one = |x: &Real| Float::with_val(bits, x - 1u32);
        let pattern = self.building_block(k);
        let mut prod = p.int(1);
        for h in &pattern.steps {
            prod *= one(h);
        }
        let product = rel_err(&prod, &p.int(1), 1.0);
        let next = Float::with_val(bits, self.alpha(k) + self.beta(k + 1)) - 2u32;
        let rec = Float::with_val(bits, self.mu(k) + next * 2u32);
        let mu_recurrence = rel_err(self.mu(k + 1), &rec, 1.0);
        let lhs = one(self.mu(k)).sqrt() / one(self.alpha(k));
        let rhs = one(self.mu(k + 1)).sqrt() / one(self.beta(k + 1));
        let sqrt_mu = rel_err(&lhs, &rhs, 1.0);
        let root = Float::with_val(bits, one(self.mu(k - 1)) * one(self.mu(k))).sqrt();
        let rel = Float::with_val(bits, one(self.beta(k)) * 2u32) + root;
        let relating = rel_err(&rel, &one(self.mu(k)), 1.0);
        let two_mu = one(self.mu(k)) * 2u32;
        let pattern_sum = rel_err(&pattern.sum_h, &two_mu, 1.0);
        Ok(IdentityResiduals { k, product, mu_recurrence, sqrt_mu, relating, pattern_sum })
    }
}

/// Relative residuals at one k; each is zero in exact arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityResiduals {
    pub k: u32,
    /// ∏(𝔥⁽ᵏ⁾_i - 1) against 1.
    pub product: Real,
    /// μ_{k+1} against μ_k + 2(α_k + β_{k+1} - 2).
    pub mu_recurrence: Real,
    /// √(μ_k-1)/(α_k-1) against √(μ_{k+1}-1)/(β_{k+1}-1).
    pub sqrt_mu: Real,
    /// 2(β_k-1) + √((μ_{k-1}-1)(μ_k-1)) against μ_k - 1.
    pub relating: Real,
    /// Σ𝔥⁽ᵏ⁾ against 2(μ_k-1).
    pub pattern_sum: Real,
}

impl IdentityResiduals {
    pub fn max(&self) -> Real {
        [&self.product, &self.mu_recurrence, &self.sqrt_mu, &self.relating, &self.pattern_sum]
            .into_iter()
            .max_by(|a, b| a.partial_cmp(b).expect("finite"))
            .cloned()
            .expect("nonempty")
    }
}

fn mu_direct(prec: Precision, alpha: &[Real], beta: &[Real], i: usize) -> Real {
    let bits = prec.bits();
    let mut acc = Float::with_val(bits, 2u32);
    for a in &alpha[..i] {
        acc += Float::with_val(bits, a * 2u32);
    }
    if i >= 2 {
        for (ell, b) in beta.iter().enumerate().take(i - 1) {
            let w = 2 * ((1u128 << (i - ell - 1)) - 1);
            acc += Float::with_val(bits, b * Float::with_val(bits, w));
        }
    }
    acc
}

/// Positive root in y = x - 1 of 2y² + (μ-1)y - (β-1)(μ-1), written without
/// cancellation.
fn alpha_root(prec: Precision, mu: &Real, beta_next: &Real) -> Real {
    let bits = prec.bits();
    let b = Float::with_val(bits, mu - 1u32);
    let c = Float::with_val(bits, beta_next - 1u32) * &b;
    let disc = Float::with_val(bits, b.square_ref()) + Float::with_val(bits, &c * 8u32);
    let y = Float::with_val(bits, &c * 2u32) / (b + disc.sqrt());
    y + 1u32
}

/// Outcome of the four sequence inequality chains at one k.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub k: u32,
    /// β_k ≤ α_k ≤ β_{k+1}
    pub alpha_bracket: bool,
    /// 2√2 s^k ≤ H_k ≤ 4√2 s^k
    pub sum_bracket: bool,
    /// √2 s^k ≤ μ_k - 1 ≤ 2√2 s^k
    pub mu_bracket: bool,
    /// μ_k - μ_{k-1} ≥ (2-√2) s^{k-1}
    pub mu_growth: bool,
}

impl BoundsReport {
    pub fn all(&self) -> bool {
        self.alpha_bracket && self.sum_bracket && self.mu_bracket && self.mu_growth
    }
}

/// Convenience wrapper building a table just large enough for stage k.
pub fn sequence_bounds_check(prec: Precision, k: u32) -> Result<BoundsReport> {
    Sequences::new(prec, k.max(1)).bounds_check(k)
}

/// Δ⁽⁰⁾ = 1/2 and Δ⁽ᵏ⁾ = (1+√2)^{-4k} / (768768√2) for k ≥ 1.
pub fn delta_conservative(prec: Precision, k: u32) -> Real {
    if k == 0 {
        return prec.ratio(1, 2);
    }
    let denom = prec.sqrt2() * 768768u32;
    prec.silver_pow(-4 * k as i64) / denom
}

/// A building-block stepsize vector with its stage index and total.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPattern {
    pub k: u32,
    pub steps: Vec<Real>,
    pub sum_h: Real,
}

impl StepPattern {
    pub fn new(k: u32, steps: Vec<Real>, prec: Precision) -> Self {
        let sum_h = crate::real::sum(prec, &steps);
        StepPattern { k, steps, sum_h }
    }

    /// Arbitrary step vector, stage index irrelevant.
    pub fn from_steps(steps: Vec<Real>, prec: Precision) -> Self {
        Self::new(0, steps, prec)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn precision(&self) -> Precision {
        Precision::new(self.sum_h.prec()).unwrap_or_default()
    }

    /// Every step multiplied by `factor`.
    pub fn scaled(&self, factor: &Real) -> StepPattern {
        let prec = self.precision();
        let steps = self
            .steps
            .iter()
            .map(|x| Float::with_val(prec.bits(), x * factor))
            .collect();
        StepPattern::new(self.k, steps, prec)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.steps.iter().map(|x| x.to_f64()).collect()
    }

    /// Length, symmetry, middle-entry and positivity invariants, each to a
    /// relative tolerance.
    pub fn check_invariants(&self, rel_tol: f64) -> Result<()> {
        let t = self.len();
        if t != (1usize << (self.k + 1)) - 1 {
            return Err(Error::Construction(format!(
                "pattern k={} has length {t}",
                self.k
            )));
        }
        if self.steps.iter().any(|x| *x <= 0) {
            return Err(Error::Construction("nonpositive step".into()));
        }
        for i in 0..t {
            if crate::real::rel_err(&self.steps[i], &self.steps[t - 1 - i], 1.0) > rel_tol {
                return Err(Error::Construction(format!("pattern not symmetric at {i}")));
            }
        }
        let mid = &self.steps[t / 2];
        let rest = Float::with_val(mid.prec(), &self.sum_h - mid) + 2u32;
        if crate::real::rel_err(mid, &rest, 1.0) > rel_tol {
            return Err(Error::Construction("middle entry is not the rest plus two".into()));
        }
        Ok(())
    }
}

/// Serialized pattern: decimal strings at full precision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDump {
    pub k: u32,
    pub length: usize,
    pub precision_bits: u32,
    pub sum: String,
    pub steps: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub closed_form: Option<Vec<String>>,
}

impl PatternDump {
    pub fn new(pattern: &StepPattern) -> Self {
        PatternDump {
            k: pattern.k,
            length: pattern.len(),
            precision_bits: pattern.precision().bits(),
            sum: to_decimal(&pattern.sum_h),
            steps: pattern.steps.iter().map(to_decimal).collect(),
            closed_form: closed_form_strings(pattern.k),
        }
    }

    pub fn to_pattern(&self) -> Result<StepPattern> {
        let prec = Precision::new(self.precision_bits)?;
        let steps = self
            .steps
            .iter()
            .map(|s| prec.parse(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(StepPattern::new(self.k, steps, prec))
    }
}

const A0: &str = "3/2";
const A1: &str = "1+sqrt(2)";
const A2: &str = "-1/2-sqrt(2)+3*sqrt(5)/2+sqrt(10)";
const B0: &str = "sqrt(2)";
const B1: &str = "2";

/// Radical expressions of each entry, available for k ≤ 3.
pub fn closed_form_strings(k: u32) -> Option<Vec<String>> {
    let (left, mid): (Vec<&str>, &str) = match k {
        0 => (vec![], "2"),
        1 => (vec![A0], "5"),
        2 => (vec![A0, A1, B0], "7+4*sqrt(2)"),
        3 => (vec![A0, A1, B0, A2, B0, B1, B0], "1+(3+2*sqrt(2))*(3+sqrt(5))"),
        _ => return None,
    };
    let mut out: Vec<String> = left.iter().map(|s| s.to_string()).collect();
    out.push(mid.to_string());
    out.extend(left.iter().rev().map(|s| s.to_string()));
    Some(out)
}

/// Numerical values of [`closed_form_strings`], evaluated directly from the
/// radicals rather than through the recursions.
pub fn closed_form_values(prec: Precision, k: u32) -> Option<Vec<Real>> {
    let bits = prec.bits();
    let r2 = prec.sqrt2();
    let r5 = Float::with_val(bits, 5u32).sqrt();
    let r10 = Float::with_val(bits, 10u32).sqrt();
    let a0 = prec.ratio(3, 2);
    let a1 = Float::with_val(bits, &r2 + 1u32);
    let a2 = Float::with_val(bits, &r10 - &r2) + Float::with_val(bits, &r5 * 3u32) / 2u32 - prec.ratio(1, 2);
    let b0 = r2.clone();
    let b1 = prec.int(2);
    let (left, mid) = match k {
        0 => (vec![], prec.int(2)),
        1 => (vec![a0], prec.int(5)),
        2 => (vec![a0, a1, b0], Float::with_val(bits, &r2 * 4u32) + 7u32),
        3 => {
            let m = (Float::with_val(bits, &r2 * 2u32) + 3u32) * (r5 + 3u32) + 1u32;
            (vec![a0, a1, b0.clone(), a2, b0.clone(), b1, b0], m)
        }
        _ => return None,
    };
    let mut out = left.clone();
    out.push(mid);
    out.extend(left.into_iter().rev());
    Some(out)
}

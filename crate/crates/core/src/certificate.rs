//! Certificate multipliers λ⁽ᵏ⁾, the auxiliary vectors σ, ρ, w, φ, the derived
//! multiplier γ and the combinatorics of their supports.
//!
//! Rows and columns are labelled by [`Node`]: the minimizer ⋆ and the iterates
//! 0..=t. Internally ⋆ occupies slot 0 and iterate i slot i + 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{rel_err, to_decimal, Precision, Real};
use crate::sequence::{Sequences, Valuation};

/// Row/column label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Star,
    At(usize),
}

impl Node {
    /// Position in the (t+2)-dimensional coordinate system with ⋆ first.
    pub fn slot(self) -> usize {
        match self {
            Node::Star => 0,
            Node::At(i) => i + 1,
        }
    }

    pub fn from_slot(slot: usize) -> Node {
        if slot == 0 {
            Node::Star
        } else {
            Node::At(slot - 1)
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Star => f.write_str("*"),
            Node::At(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for Node {
    type Err = Error;
    fn from_str(s: &str) -> Result<Node> {
        if s == "*" {
            return Ok(Node::Star);
        }
        s.parse::<usize>()
            .map(Node::At)
            .map_err(|_| Error::Parse(s.to_string()))
    }
}

/// Binary statistics of i + 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    /// 2-adic valuation of i + 1.
    pub nu: Valuation,
    /// Number of ones in the binary expansion of i + 1.
    pub p: u32,
    /// ⌊log₂(i + 1)⌋.
    pub z: u32,
}

pub fn index_meta(i: u64) -> IndexMeta {
    let n = i + 1;
    IndexMeta { nu: Valuation::of(n), p: n.count_ones(), z: 63 - n.leading_zeros() }
}

/// rev_k(r) = 2^{k+1} - 2 - r.
pub fn rev(k: u32, r: u64) -> u64 {
    (1u64 << (k + 1)) - 2 - r
}

fn nu1(j: usize) -> u32 {
    Valuation::of(j as u64 + 1).finite()
}

fn is_pow2(n: u64) -> bool {
    n != 0 && n & (n - 1) == 0
}

fn log2(n: u64) -> u32 {
    63 - n.leading_zeros()
}

/// Which construction rule defines a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowCase {
    Star,
    /// The all-zero final row.
    Zero,
    /// Row 0 of the stage-0 certificate.
    Base,
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

/// Row rule for iterate row i of stage k ≥ 1, with the ℓ attached to Cases 3
/// and 5.
pub fn row_case(k: u32, i: usize) -> (RowCase, u32) {
    let t = (1usize << (k + 1)) - 1;
    let half = 1usize << k;
    if i == t {
        (RowCase::Zero, 0)
    } else if i + 1 == half {
        (RowCase::Case4, k)
    } else if i + 1 < half {
        if is_pow2(i as u64 + 1) {
            (RowCase::Case3, log2(i as u64 + 1))
        } else {
            (RowCase::Case1, 0)
        }
    } else if is_pow2((t - i) as u64) {
        (RowCase::Case5, log2((t - i) as u64))
    } else {
        (RowCase::Case2, 0)
    }
}

/// Auxiliary vectors built from one memo table.
pub struct Vectors<'a> {
    seq: &'a Sequences,
    prec: Precision,
    silver: Real,
}

impl<'a> Vectors<'a> {
    pub fn new(seq: &'a Sequences) -> Self {
        let prec = seq.precision();
        Vectors { seq, prec, silver: prec.silver() }
    }

    fn spow(&self, e: i64) -> Real {
        self.prec.silver_pow(e)
    }

    fn scale(&self, v: &[Real], c: &Real) -> Vec<Real> {
        v.iter().map(|x| Float::with_val(self.prec.bits(), x * c)).collect()
    }

    fn sqrt_mu1(&self, i: u32) -> Real {
        Float::with_val(self.prec.bits(), self.seq.mu(i) - 1u32).sqrt()
    }

    /// σ⁽ᵏ⁾, length 2^{k-1} - 1.
    pub fn sigma(&self, k: u32) -> Vec<Real> {
        assert!(k >= 1, "sigma is defined for k >= 1");
        if k == 1 {
            return Vec::new();
        }
        let f = self.spow(-2 * (k as i64 - 1)) / 2u32;
        let mut out = self.scale(&self.seq.pi_vector(k - 2), &f);
        out.push(Float::with_val(self.prec.bits(), self.seq.beta(k) * &f));
        // ½ s^{-2(k-1)} · 2 s^{2(k-1)} = 1
        out.extend(self.sigma(k - 1));
        out
    }

    /// ρ_k, length ⌊2^{k-1}⌋ + 1 + 2^k.
    pub fn rho(&self, k: u32) -> Vec<Real> {
        let bits = self.prec.bits();
        if k == 0 {
            return vec![self.prec.zero(), self.prec.int(1)];
        }
        let mut out = vec![self.spow(k as i64 - 2)];
        let a = self.spow(2 * k as i64 - 1);
        let two_s = Float::with_val(bits, &self.silver * 2u32);
        for (sg, pi) in self.sigma(k).iter().zip(self.seq.pi_vector(k - 1)) {
            out.push(Float::with_val(bits, sg * &a) - pi / &two_s);
        }
        out.push(self.prec.zero());
        out.extend(self.seq.pi_vector(k));
        out.push(self.prec.int(1));
        out
    }

    /// w_k, length 2^k.
    pub fn w(&self, k: u32) -> Vec<Real> {
        if k == 0 {
            return vec![self.prec.int(1)];
        }
        let bits = self.prec.bits();
        let r = self.sqrt_mu1(k);
        let mut out: Vec<Real> = self
            .seq
            .pi_vector(k - 1)
            .iter()
            .map(|x| Float::with_val(bits, x / &r))
            .collect();
        out.push(Float::with_val(bits, self.seq.beta(k) / &r));
        out.extend(self.w(k - 1));
        out
    }

    /// φ⁽ᵏ⁾ = [0_{2^k-1}, √(μ_k-1), w_k]; φ⁽⁰⁾ = [1, 1].
    pub fn phi(&self, k: u32) -> PhiVector {
        let mut values = vec![self.prec.zero(); (1usize << k) - 1];
        values.push(self.sqrt_mu1(k));
        values.extend(self.w(k));
        PhiVector { values }
    }

    /// Row i of λ⁽ᵏ⁾ in concatenated-vector form: the vector v with
    /// λ_{i,j} = v[j - i + ⌊2^{ℓ-1}⌋], ℓ = ν(i+1).
    fn row_vector(&self, k: u32, i: usize) -> Vec<Real> {
        let bits = self.prec.bits();
        let seq = self.seq;
        let ell = nu1(i);
        let (case, lc) = row_case(k, i);
        let mu1 = |n: u32| Float::with_val(bits, seq.mu(n) - 1u32);
        match case {
            RowCase::Case1 => {
                let m = index_meta(i as u64);
                let c = mu1(m.z + 1) / self.spow(2 * (m.z as i64 - m.p as i64) + 3);
                self.scale(&self.rho(ell), &c)
            }
            RowCase::Case2 => {
                let p = index_meta(i as u64).p as i64;
                let zr = index_meta(rev(k, i as u64)).z;
                let c = self.spow(2 * (p + zr as i64 - k as i64) - 1) / mu1(zr + 1);
                self.scale(&self.rho(ell), &c)
            }
            RowCase::Case3 if lc == 0 => vec![self.prec.zero(), self.prec.int(2)],
            RowCase::Case3 | RowCase::Case4 => {
                let l = lc;
                let mut v = vec![self.left_head(l)];
                v.extend(self.scale(&self.sigma(l), &mu1(l)));
                v.push(self.prec.zero());
                if case == RowCase::Case3 {
                    let c2 = mu1(l + 1) / (self.spow(2 * l as i64) * 2u32);
                    v.extend(self.scale(&self.seq.pi_vector(l), &c2));
                    v.push(c2);
                } else {
                    let r = self.sqrt_mu1(k);
                    v.extend(self.w(k).iter().map(|x| Float::with_val(bits, x / &r)));
                }
                v
            }
            RowCase::Case5 if lc == 0 => vec![self.prec.zero(), self.prec.ratio(1, 2)],
            RowCase::Case5 => {
                let l = lc;
                let den = mu1(l + 1);
                let mut v = vec![self.spow(l as i64 - 1) / &den];
                let s2l = self.spow(2 * l as i64);
                for (sg, pi) in self.sigma(l).iter().zip(self.seq.pi_vector(l - 1)) {
                    let x = Float::with_val(bits, sg * &s2l) - pi / 2u32;
                    v.push(x / &den);
                }
                v.push(self.prec.zero());
                let c5 = self.sqrt_mu1(l).recip() - self.sqrt_mu1(l + 1).recip();
                v.extend(self.scale(&self.w(l), &c5));
                v
            }
            RowCase::Star | RowCase::Zero | RowCase::Base => unreachable!(),
        }
    }

    /// ½(μ_ℓ-1)s^{-(ℓ-1)} - 1
    fn left_head(&self, l: u32) -> Real {
        let bits = self.prec.bits();
        Float::with_val(bits, self.seq.mu(l) - 1u32) * self.spow(-(l as i64 - 1)) / 2u32 - 1u32
    }

    /// Row i of λ⁽ᵏ⁾ from the entry-by-entry formulas.
    fn row_entrywise(&self, k: u32, i: usize) -> BTreeMap<usize, Real> {
        let bits = self.prec.bits();
        let seq = self.seq;
        let t = (1usize << (k + 1)) - 1;
        let ell = nu1(i);
        let (case, lc) = row_case(k, i);
        let mu1 = |n: u32| Float::with_val(bits, seq.mu(n) - 1u32);
        let sp = |e: i64| self.spow(e);
        let beta = |n: u32| seq.beta(n).clone();
        let bnu = |j: usize| seq.beta(nu1(j)).clone();
        let mut row = BTreeMap::new();
        let two_s = Float::with_val(bits, &self.silver * 2u32);
        match case {
            RowCase::Case1 | RowCase::Case2 => {
                let m = index_meta(i as u64);
                let (z, p) = if case == RowCase::Case1 {
                    (m.z as i64, m.p as i64)
                } else {
                    (index_meta(rev(k, i as u64)).z as i64, m.p as i64)
                };
                let den = mu1(z as u32 + 1);
                // Common factor C of ρ_ℓ and the three left-hand families.
                let (c, head, pair, fill) = if case == RowCase::Case1 {
                    let c = Float::with_val(bits, &den / sp(2 * (z - p) + 3));
                    let head = Float::with_val(bits, &den / sp(2 * (z - p) - ell as i64 + 5));
                    let fill = Float::with_val(bits, &den / (sp(2 * (z - p) + 4) * 2u32));
                    (c.clone(), head, c, fill)
                } else {
                    let e = 2 * (p + z - k as i64);
                    let c = sp(e - 1) / &den;
                    let head = sp(e - 3 + ell as i64) / &den;
                    let fill = sp(2 * (p + z - k as i64 - 1)) / Float::with_val(bits, &den * 2u32);
                    (c.clone(), head, c, fill)
                };
                if ell >= 1 {
                    row.insert(i - (1 << (ell - 1)), head);
                    for a in 0..ell.saturating_sub(1) {
                        let x = if case == RowCase::Case1 {
                            sp(2 * (ell as i64 - a as i64) - 3) * beta(a + 2) / 2u32
                                - Float::with_val(bits, &beta(a) / &two_s)
                        } else {
                            (sp(2 * (ell as i64 - a as i64) - 3) * beta(a + 2)
                                - Float::with_val(bits, &beta(a) / &self.silver))
                                / 2u32
                        };
                        row.insert(i - (1 << a), Float::with_val(bits, &pair * &x));
                        let g = sp(2 * (ell as i64 - a as i64) - 2) - 1u32;
                        for j in i - (1 << (a + 1)) + 1..i - (1 << a) {
                            row.insert(j, Float::with_val(bits, &fill * &g) * bnu(j));
                        }
                    }
                }
                for j in i + 1..i + (1 << ell) {
                    row.insert(j, Float::with_val(bits, &c * bnu(j)));
                }
                row.insert(i + (1 << ell), c);
            }
            RowCase::Case3 if lc == 0 => {
                row.insert(1, self.prec.int(2));
            }
            RowCase::Case3 | RowCase::Case4 => {
                let l = lc;
                row.insert((1 << (l - 1)) - 1, self.left_head(l));
                let half_mu = mu1(l) / 2u32;
                for a in 0..l - 1 {
                    let c = Float::with_val(bits, &half_mu * sp(-2 * (a as i64 + 1)));
                    row.insert(i - (1 << a), Float::with_val(bits, &c * seq.beta(a + 2)));
                    for j in i - (1 << (a + 1)) + 1..i - (1 << a) {
                        row.insert(j, Float::with_val(bits, &c * bnu(j)));
                    }
                }
                if case == RowCase::Case3 {
                    let c2 = mu1(l + 1) / (sp(2 * l as i64) * 2u32);
                    for j in (1 << l)..(1 << (l + 1)) - 1 {
                        row.insert(j, Float::with_val(bits, &c2 * bnu(j)));
                    }
                    row.insert((1 << (l + 1)) - 1, c2);
                } else {
                    let rk = self.sqrt_mu1(k);
                    self.right_w_part(k, k, &rk.recip(), &mut row);
                }
            }
            RowCase::Case5 if lc == 0 => {
                row.insert(t, self.prec.ratio(1, 2));
            }
            RowCase::Case5 => {
                let l = lc;
                let den = mu1(l + 1);
                row.insert(i - (1 << (l - 1)), sp(l as i64 - 1) / &den);
                let den2 = Float::with_val(bits, &den * 2u32);
                for a in 0..l - 1 {
                    let g = sp(2 * (l as i64 - a as i64 - 1));
                    let x = Float::with_val(bits, &g * seq.beta(a + 2)) - seq.beta(a);
                    row.insert(i - (1 << a), x / &den2);
                    let g1 = g - 1u32;
                    for j in i - (1 << (a + 1)) + 1..i - (1 << a) {
                        row.insert(j, Float::with_val(bits, &g1 * bnu(j)) / &den2);
                    }
                }
                let c5 = self.sqrt_mu1(l).recip() - self.sqrt_mu1(l + 1).recip();
                self.right_w_part(k, l, &c5, &mut row);
            }
            RowCase::Star | RowCase::Zero | RowCase::Base => unreachable!(),
        }
        row
    }

    /// The w-shaped right block shared by Cases 4 and 5:
    /// c·β_{a+1}/√(μ_{a+1}-1) at j = rev(2^a - 1), c·β_{ν(j+1)}/√(μ_{a+1}-1)
    /// strictly between rev(2^a - 1) and rev(2^{a+1} - 1), for a < l. The
    /// final column t carries the w_0 component c.
    fn right_w_part(&self, k: u32, l: u32, c: &Real, row: &mut BTreeMap<usize, Real>) {
        let bits = self.prec.bits();
        let t = (1usize << (k + 1)) - 1;
        for a in 0..l {
            let f = Float::with_val(bits, c / self.sqrt_mu1(a + 1));
            let hi = rev(k, (1u64 << a) - 1) as usize;
            let lo = rev(k, (1u64 << (a + 1)) - 1) as usize;
            row.insert(hi, Float::with_val(bits, &f * self.seq.beta(a + 1)));
            for j in lo + 1..hi {
                row.insert(j, Float::with_val(bits, &f * self.seq.beta(nu1(j))));
            }
        }
        row.insert(t, c.clone());
    }
}

/// Rank-one factor of M(λ,𝔥): M = φφᵀ/2.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiVector {
    pub values: Vec<Real>,
}

impl PhiVector {
    pub fn sum(&self) -> Real {
        let prec = Precision::new(self.values[0].prec()).unwrap_or_default();
        crate::real::sum(prec, &self.values)
    }
}

/// Sparse multiplier matrix indexed by {⋆, 0, …, t}.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub k: u32,
    pub t: usize,
    prec: Precision,
    entries: BTreeMap<(Node, Node), Real>,
    cases: Vec<RowCase>,
}

impl Certificate {
    pub fn precision(&self) -> Precision {
        self.prec
    }

    /// Stored entries in (row, col) order.
    pub fn entries(&self) -> impl Iterator<Item = (Node, Node, &Real)> {
        self.entries.iter().map(|((i, j), v)| (*i, *j, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: Node, j: Node) -> Option<&Real> {
        self.entries.get(&(i, j))
    }

    /// Entry value, zero when absent.
    pub fn value(&self, i: Node, j: Node) -> Real {
        self.get(i, j).cloned().unwrap_or_else(|| self.prec.zero())
    }

    /// Construction rule of each row, ⋆ first.
    pub fn cases(&self) -> &[RowCase] {
        &self.cases
    }

    pub fn case_of(&self, row: Node) -> RowCase {
        self.cases[row.slot()]
    }

    pub fn row(&self, i: Node) -> impl Iterator<Item = (Node, &Real)> {
        self.entries
            .range((i, Node::Star)..=(i, Node::At(usize::MAX)))
            .map(|((_, j), v)| (*j, v))
    }

    pub fn row_sum(&self, i: Node) -> Real {
        let mut acc = self.prec.zero();
        for (_, v) in self.row(i) {
            acc += v;
        }
        acc
    }

    pub fn col_sum(&self, j: Node) -> Real {
        let mut acc = self.prec.zero();
        for ((_, c), v) in &self.entries {
            if *c == j {
                acc += v;
            }
        }
        acc
    }

    /// λ_{i,i+1} for i in 0..t.
    pub fn superdiagonal(&self) -> Vec<Real> {
        (0..self.t).map(|i| self.value(Node::At(i), Node::At(i + 1))).collect()
    }

    /// Largest relative entrywise difference over the union of supports.
    pub fn max_rel_diff(&self, other: &Certificate) -> Real {
        let keys: BTreeSet<_> = self.entries.keys().chain(other.entries.keys()).collect();
        let mut worst = self.prec.zero();
        for (i, j) in keys {
            let d = rel_err(&self.value(*i, *j), &other.value(*i, *j), 1e-300);
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    pub fn to_dump(&self) -> CertificateDump {
        CertificateDump {
            k: self.k,
            t: self.t,
            precision_bits: self.prec.bits(),
            entries: self
                .entries()
                .map(|(i, j, v)| (i.to_string(), j.to_string(), to_decimal(v)))
                .collect(),
            cases: self.cases.clone(),
        }
    }

    pub fn from_dump(d: &CertificateDump) -> Result<Certificate> {
        let prec = Precision::new(d.precision_bits)?;
        if d.cases.len() != d.t + 2 {
            return Err(Error::Dimension { expected: d.t + 2, found: d.cases.len() });
        }
        let mut entries = BTreeMap::new();
        for (i, j, v) in &d.entries {
            let (i, j): (Node, Node) = (i.parse()?, j.parse()?);
            for n in [i, j] {
                if let Node::At(x) = n {
                    if x > d.t {
                        return Err(Error::Invalid(format!("index {x} exceeds t = {}", d.t)));
                    }
                }
            }
            entries.insert((i, j), prec.parse(v)?);
        }
        Ok(Certificate { k: d.k, t: d.t, prec, entries, cases: d.cases.clone() })
    }
}

/// JSON form of a certificate: sparse (row, col, value) triplets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateDump {
    pub k: u32,
    pub t: usize,
    pub precision_bits: u32,
    pub entries: Vec<(String, String, String)>,
    pub cases: Vec<RowCase>,
}

fn assemble(k: u32, prec: Precision, rows: impl Iterator<Item = (usize, BTreeMap<usize, Real>)>) -> Certificate {
    let t = (1usize << (k + 1)) - 1;
    let mut entries = BTreeMap::new();
    for (i, row) in rows {
        for (j, v) in row {
            entries.insert((Node::At(i), Node::At(j)), v);
        }
    }
    let mut cases = vec![RowCase::Star];
    if k == 0 {
        cases.extend([RowCase::Base, RowCase::Zero]);
    } else {
        cases.extend((0..=t).map(|i| row_case(k, i).0));
    }
    Certificate { k, t, prec, entries, cases }
}

fn base_certificate(prec: Precision) -> Certificate {
    let row = BTreeMap::from([(1usize, prec.int(1))]);
    assemble(0, prec, std::iter::once((0, row)))
}

/// λ⁽ᵏ⁾ from the concatenated-vector row descriptions.
pub fn lambda_cert(seq: &Sequences, k: u32) -> Certificate {
    let prec = seq.precision();
    if k == 0 {
        return base_certificate(prec);
    }
    let vecs = Vectors::new(seq);
    let t = (1usize << (k + 1)) - 1;
    let rows = (0..t).map(|i| {
        let v = vecs.row_vector(k, i);
        let ell = nu1(i);
        let off = if ell == 0 { 0 } else { 1usize << (ell - 1) };
        assert_eq!(v.len(), off + 1 + (1 << ell), "row {i} of stage {k}");
        let row: BTreeMap<usize, Real> = v
            .into_iter()
            .enumerate()
            .filter(|(idx, _)| *idx != off)
            .map(|(idx, x)| (i + idx - off, x))
            .collect();
        (i, row)
    });
    assemble(k, prec, rows)
}

/// λ⁽ᵏ⁾ from the entry-by-entry formulas; agrees with [`lambda_cert`] when
/// both transcriptions are right.
pub fn lambda_cert_entrywise(seq: &Sequences, k: u32) -> Certificate {
    let prec = seq.precision();
    if k == 0 {
        return base_certificate(prec);
    }
    let vecs = Vectors::new(seq);
    let t = (1usize << (k + 1)) - 1;
    assemble(k, prec, (0..t).map(|i| (i, vecs.row_entrywise(k, i))))
}

pub fn phi(seq: &Sequences, k: u32) -> PhiVector {
    Vectors::new(seq).phi(k)
}

/// γ supported on the ⋆ row and the superdiagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaMultiplier {
    /// γ_{⋆,i}, i in 0..=t.
    pub star_row: Vec<Real>,
    /// γ_{i,i+1}, i in 0..t.
    pub superdiag: Vec<Real>,
}

impl GammaMultiplier {
    pub fn t(&self) -> usize {
        self.superdiag.len()
    }

    pub fn scaled(&self, c: &Real) -> GammaMultiplier {
        let f = |v: &Vec<Real>| v.iter().map(|x| Float::with_val(x.prec(), x * c)).collect();
        GammaMultiplier { star_row: f(&self.star_row), superdiag: f(&self.superdiag) }
    }

    /// Nonzero pattern as (row, col, value) triplets.
    pub fn entries(&self) -> Vec<(Node, Node, Real)> {
        let mut out: Vec<_> = self
            .star_row
            .iter()
            .enumerate()
            .map(|(i, v)| (Node::Star, Node::At(i), v.clone()))
            .collect();
        out.extend(
            self.superdiag
                .iter()
                .enumerate()
                .map(|(i, v)| (Node::At(i), Node::At(i + 1), v.clone())),
        );
        out
    }
}

/// γ_{⋆,i} = √(2H) φ_i and γ_{i,i+1} = Σ_{j≤i} γ_{⋆,j} - 2H.
pub fn gamma_from_phi(h: &Real, phi: &PhiVector) -> Result<GammaMultiplier> {
    let prec = Precision::new(h.prec())?;
    let bits = prec.bits();
    let two_h = Float::with_val(bits, h * 2u32);
    let root = Float::with_val(bits, two_h.sqrt_ref());
    let sum = phi.sum();
    if rel_err(&sum, &root, 1.0) > prec.psd_tolerance() {
        return Err(Error::Construction(format!(
            "1ᵀφ = {} differs from √(2H) = {}",
            to_decimal(&sum),
            to_decimal(&root)
        )));
    }
    let star_row: Vec<Real> = phi
        .values
        .iter()
        .map(|x| Float::with_val(bits, x * &root))
        .collect();
    let mut acc = prec.zero();
    let superdiag = star_row[..star_row.len() - 1]
        .iter()
        .map(|g| {
            acc += g;
            Float::with_val(bits, &acc - &two_h)
        })
        .collect();
    Ok(GammaMultiplier { star_row, superdiag })
}

/// The multiplier paired with the stage-0 certificate at pattern [1].
pub fn base_gamma(prec: Precision) -> GammaMultiplier {
    GammaMultiplier {
        star_row: vec![prec.int(1), prec.int(1)],
        superdiag: vec![prec.int(-1)],
    }
}

/// S_j^- = {i < j : λ_{i,j} ≠ 0} and S_j^+ = {i > j : λ_{i,j} ≠ 0} for λ⁽ᵏ⁾.
///
/// For 1 ≤ j < 2^k the lower set is read off the binary expansion of j: it
/// consists of the numbers obtained by clearing the low bits of j below each
/// set bit, minus one. Everywhere else both sets follow from the row windows
/// [i - ⌊2^{ν(i+1)-1}⌋, i + 2^{ν(i+1)}].
pub fn support_sets(k: u32, j: usize) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let t = (1usize << (k + 1)) - 1;
    assert!(j <= t, "column {j} outside stage {k}");
    let reaches = |i: usize| -> bool {
        if i >= t || i == j {
            return false;
        }
        if k == 0 {
            return i == 0 && j == 1;
        }
        let ell = nu1(i);
        if i < j {
            j - i <= 1 << ell
        } else {
            i - j <= if ell == 0 { 0 } else { 1 << (ell - 1) }
        }
    };
    let minus: BTreeSet<usize> = if k >= 1 && j >= 1 && j < (1 << k) {
        (0..=log2(j as u64))
            .filter(|r| j >> r & 1 == 1)
            .map(|r| ((j >> r) << r) - 1)
            .filter(|&i| i < j)
            .collect()
    } else {
        (j.saturating_sub(1 << k)..j).filter(|&i| reaches(i)).collect()
    };
    let plus = (j + 1..t.min(j + (1 << k) + 1)).filter(|&i| reaches(i)).collect();
    (minus, plus)
}

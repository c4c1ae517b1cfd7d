//! Dense symmetric matrices and an extended-precision symmetric eigen-solver
//! (Householder tridiagonalization followed by implicit QL with shifts).

use rug::{Assign, Float};

use crate::error::{Error, Result};
use crate::real::{Precision, Real};

/// Dense symmetric matrix stored in full row-major form.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    prec: Precision,
    data: Vec<Real>,
}

impl SymMatrix {
    pub fn zeros(prec: Precision, n: usize) -> Self {
        SymMatrix { n, prec, data: vec![prec.zero(); n * n] }
    }

    /// Builds from a closure evaluated on the upper triangle.
    pub fn from_fn(prec: Precision, n: usize, mut f: impl FnMut(usize, usize) -> Real) -> Self {
        let mut m = Self::zeros(prec, n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn precision(&self) -> Precision {
        self.prec
    }

    pub fn get(&self, i: usize, j: usize) -> &Real {
        &self.data[i * self.n + j]
    }

    /// Sets (i,j) and (j,i).
    pub fn set(&mut self, i: usize, j: usize, v: Real) {
        let v = Float::with_val(self.prec.bits(), v);
        self.data[j * self.n + i] = v.clone();
        self.data[i * self.n + j] = v;
    }

    /// Adds `v` to (i,j) and, off the diagonal, to (j,i).
    pub fn add(&mut self, i: usize, j: usize, v: &Real) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    /// Adds `v·(x yᵀ + y xᵀ)/2` for sparse vectors given as (index, value) lists.
    pub fn add_sym_outer(&mut self, x: &[(usize, Real)], y: &[(usize, Real)], v: &Real) {
        let bits = self.prec.bits();
        let half = Float::with_val(bits, v / 2u32);
        let mut tmp = self.prec.zero();
        for (a, xa) in x {
            for (b, yb) in y {
                tmp.assign(xa * yb);
                tmp *= &half;
                self.data[a * self.n + b] += &tmp;
                self.data[b * self.n + a] += &tmp;
            }
        }
    }

    /// Principal submatrix on `start..start+len`.
    pub fn block(&self, start: usize, len: usize) -> SymMatrix {
        SymMatrix::from_fn(self.prec, len, |i, j| self.get(start + i, start + j).clone())
    }

    pub fn combine(&self, other: &SymMatrix, a: &Real, b: &Real) -> Result<SymMatrix> {
        if other.n != self.n {
            return Err(Error::Dimension { expected: self.n, found: other.n });
        }
        let bits = self.prec.bits();
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| Float::with_val(bits, x * a) + Float::with_val(bits, y * b))
            .collect();
        Ok(SymMatrix { n: self.n, prec: self.prec, data })
    }

    pub fn max_abs(&self) -> Real {
        crate::real::max_abs(self.prec, &self.data)
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> Real {
        let mut best = self.prec.zero();
        for i in 0..self.n {
            let mut row = self.prec.zero();
            for x in &self.data[i * self.n..(i + 1) * self.n] {
                row += &*x.as_abs();
            }
            if row > best {
                best = row;
            }
        }
        best
    }

    pub fn mul_vec(&self, v: &[Real]) -> Vec<Real> {
        (0..self.n)
            .map(|i| {
                let mut acc = self.prec.zero();
                for (a, b) in self.data[i * self.n..(i + 1) * self.n].iter().zip(v) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    /// xᵀ A x.
    pub fn quad_form(&self, x: &[Real]) -> Real {
        let ax = self.mul_vec(x);
        let mut acc = self.prec.zero();
        for (a, b) in ax.iter().zip(x) {
            acc += a * b;
        }
        acc
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<Real>> {
        let (d, _) = self.solve(false)?;
        Ok(d)
    }

    /// Ascending eigenvalues and the matching orthonormal eigenvectors as the
    /// columns of a row-major n×n matrix.
    pub fn eigen(&self) -> Result<(Vec<Real>, Vec<Real>)> {
        let (d, z) = self.solve(true)?;
        Ok((d, z.expect("eigenvectors requested")))
    }

    fn solve(&self, vectors: bool) -> Result<(Vec<Real>, Option<Vec<Real>>)> {
        let n = self.n;
        if n == 0 {
            return Ok((vec![], vectors.then(Vec::new)));
        }
        let mut z = self.data.clone();
        let mut d = vec![self.prec.zero(); n];
        let mut e = vec![self.prec.zero(); n];
        tridiagonalize(self.prec, n, &mut z, &mut d, &mut e, vectors);
        ql_implicit(self.prec, n, &mut d, &mut e, vectors.then_some(&mut z[..]))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
        let vals = order.iter().map(|&i| d[i].clone()).collect();
        let vecs = vectors.then(|| {
            let mut out = vec![self.prec.zero(); n * n];
            for (newc, &oldc) in order.iter().enumerate() {
                for r in 0..n {
                    out[r * n + newc] = z[r * n + oldc].clone();
                }
            }
            out
        });
        Ok((vals, vecs))
    }
}


/// Householder reduction to tridiagonal form. On return `d` holds the
/// diagonal, `e[1..]` the subdiagonal and, with `vectors`, `z` the orthogonal
/// transformation.
fn tridiagonalize(
    prec: Precision,
    n: usize,
    z: &mut [Real],
    d: &mut [Real],
    e: &mut [Real],
    vectors: bool,
) {
    let bits = prec.bits();
    let mut tmp = prec.zero();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = prec.zero();
        if l > 0 {
            let mut scale = prec.zero();
            for k in 0..i {
                scale += &*z[i * n + k].as_abs();
            }
            if scale == 0 {
                e[i] = z[i * n + l].clone();
            } else {
                for k in 0..i {
                    z[i * n + k] /= &scale;
                    h += &z[i * n + k] * &z[i * n + k];
                }
                let f = z[i * n + l].clone();
                let root = Float::with_val(bits, h.sqrt_ref());
                let g = if f >= 0 { -root } else { root };
                e[i] = Float::with_val(bits, &scale * &g);
                h -= &f * &g;
                z[i * n + l] = Float::with_val(bits, &f - &g);
                let row_i: Vec<Real> = z[i * n..i * n + i].to_vec();
                let mut fsum = prec.zero();
                for j in 0..i {
                    if vectors {
                        z[j * n + i] = Float::with_val(bits, &row_i[j] / &h);
                    }
                    let mut gg = prec.zero();
                    for k in 0..=j {
                        gg += &z[j * n + k] * &row_i[k];
                    }
                    for k in j + 1..i {
                        gg += &z[k * n + j] * &row_i[k];
                    }
                    e[j] = gg / &h;
                    fsum += &e[j] * &row_i[j];
                }
                let hh = Float::with_val(bits, &fsum / Float::with_val(bits, &h * 2u32));
                for j in 0..i {
                    let fj = &row_i[j];
                    tmp.assign(&hh * fj);
                    e[j] -= &tmp;
                    let gj = e[j].clone();
                    for k in 0..=j {
                        tmp.assign(fj * &e[k]);
                        tmp += &gj * &row_i[k];
                        z[j * n + k] -= &tmp;
                    }
                }
            }
        } else {
            e[i] = z[i * n + l].clone();
        }
        d[i] = h;
    }
    if vectors {
        d[0] = prec.zero();
    }
    e[0] = prec.zero();
    for i in 0..n {
        if vectors {
            if d[i] != 0 {
                for j in 0..i {
                    let mut g = prec.zero();
                    for k in 0..i {
                        g += &z[i * n + k] * &z[k * n + j];
                    }
                    for k in 0..i {
                        tmp.assign(&g * &z[k * n + i]);
                        z[k * n + j] -= &tmp;
                    }
                }
            }
            d[i] = z[i * n + i].clone();
            z[i * n + i] = Float::with_val(bits, 1u32);
            for j in 0..i {
                z[j * n + i] = prec.zero();
                z[i * n + j] = prec.zero();
            }
        } else {
            d[i] = z[i * n + i].clone();
        }
    }
}

fn hypot(a: &Real, b: &Real) -> Real {
    Float::with_val(a.prec(), a.hypot_ref(b))
}

/// Implicit QL iterations on a symmetric tridiagonal matrix. Convergence uses
/// |e_m| ≤ 2^{-bits}(|d_m| + |d_{m+1}|).
fn ql_implicit(
    prec: Precision,
    n: usize,
    d: &mut [Real],
    e: &mut [Real],
    mut z: Option<&mut [Real]>,
) -> Result<()> {
    let bits = prec.bits();
    let eps = prec.epsilon();
    let max_iter = 30 + bits as usize / 2;
    for i in 1..n {
        e[i - 1] = e[i].clone();
    }
    e[n - 1] = prec.zero();
    let one = prec.int(1);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = Float::with_val(bits, d[m].abs_ref()) + &*d[m + 1].as_abs();
                if Float::with_val(bits, e[m].abs_ref()) <= Float::with_val(bits, &eps * &dd) {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > max_iter {
                return Err(Error::Construction("QL iteration did not converge".into()));
            }
            let mut g = Float::with_val(bits, &d[l + 1] - &d[l]) / Float::with_val(bits, &e[l] * 2u32);
            let mut r = hypot(&g, &one);
            let signed = if g >= 0 { r.clone() } else { -r.clone() };
            g = Float::with_val(bits, &d[m] - &d[l]) + Float::with_val(bits, &e[l] / (g + signed));
            let mut s = prec.int(1);
            let mut c = prec.int(1);
            let mut p = prec.zero();
            let mut early = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = Float::with_val(bits, &s * &e[i]);
                let b = Float::with_val(bits, &c * &e[i]);
                r = hypot(&f, &g);
                e[i + 1] = r.clone();
                if r == 0 {
                    d[i + 1] -= &p;
                    e[m] = prec.zero();
                    early = true;
                    break;
                }
                s = Float::with_val(bits, &f / &r);
                c = Float::with_val(bits, &g / &r);
                g = Float::with_val(bits, &d[i + 1] - &p);
                r = Float::with_val(bits, &d[i] - &g) * &s + Float::with_val(bits, &c * &b) * 2u32;
                p = Float::with_val(bits, &s * &r);
                d[i + 1] = Float::with_val(bits, &g + &p);
                g = Float::with_val(bits, &c * &r) - &b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let fk = z[k * n + i + 1].clone();
                        let zi = z[k * n + i].clone();
                        z[k * n + i + 1] = Float::with_val(bits, &s * &zi) + Float::with_val(bits, &c * &fk);
                        z[k * n + i] = Float::with_val(bits, &c * &zi) - Float::with_val(bits, &s * &fk);
                    }
                }
            }
            if early {
                continue;
            }
            d[l] -= &p;
            e[l] = g;
            e[m] = prec.zero();
        }
    }
    Ok(())
}

/// Outcome of a positive-semidefiniteness test.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdResult {
    pub passed: bool,
    pub min_eigenvalue: Real,
    pub norm_inf: Real,
}

/// Passes iff λ_min > -tol·(1 + ‖A‖∞). Eigenvalues within the solver noise
/// floor n·2^{-bits}·‖A‖∞ are treated as exact zeros before the comparison,
/// so a zero tolerance rejects every singular boundary matrix.
pub fn psd_check(a: &SymMatrix, tol: &Real) -> Result<PsdResult> {
    let bits = a.prec.bits();
    let vals = a.eigenvalues()?;
    let norm = a.norm_inf();
    let mut min = vals.first().cloned().unwrap_or_else(|| a.prec.zero());
    let floor = Float::with_val(bits, &norm * a.prec.epsilon()) * (a.n.max(1) as u32);
    if Float::with_val(bits, min.abs_ref()) <= floor {
        min = a.prec.zero();
    }
    let slack = Float::with_val(bits, &norm + 1u32) * tol;
    let passed = Float::with_val(bits, &min + &slack) > 0;
    Ok(PsdResult { passed, min_eigenvalue: min, norm_inf: norm })
}

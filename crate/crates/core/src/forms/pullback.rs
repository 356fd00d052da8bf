//! Pullback of pointwise form values along a (possibly non-holomorphic) map.

use super::basis::{self, Mask, BAR};
use super::value::{det, FormValue};
use crate::C64;

/// Complex Jacobian pair of a map `C^cols → C^rows`: `J = ∂τ/∂y`, `K = ∂τ/∂ȳ` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair {
    pub rows: usize,
    pub cols: usize,
    pub j: Vec<C64>,
    pub kbar: Vec<C64>,
}

impl JacobianPair {
    pub fn identity(n: usize) -> Self {
        let mut j = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            j[i * n + i] = C64::new(1.0, 0.0);
        }
        Self { rows: n, cols: n, j, kbar: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn holomorphic(rows: usize, cols: usize, j: Vec<C64>) -> Self {
        Self { rows, cols, j, kbar: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn is_holomorphic(&self) -> bool {
        self.kbar.iter().all(|c| c.norm() == 0.0)
    }

    pub fn jc(&self, r: usize, c: usize) -> C64 {
        self.j[r * self.cols + c]
    }

    pub fn kc(&self, r: usize, c: usize) -> C64 {
        self.kbar[r * self.cols + c]
    }

    /// Chain rule: `self ∘ inner` where `inner` is applied first.
    pub fn compose(&self, inner: &Self) -> Self {
        assert_eq!(self.cols, inner.rows);
        let (r, m, c) = (self.rows, self.cols, inner.cols);
        let mut j = vec![C64::new(0.0, 0.0); r * c];
        let mut k = vec![C64::new(0.0, 0.0); r * c];
        for a in 0..r {
            for b in 0..c {
                let mut sj = C64::new(0.0, 0.0);
                let mut sk = C64::new(0.0, 0.0);
                for t in 0..m {
                    sj += self.jc(a, t) * inner.jc(t, b) + self.kc(a, t) * inner.kc(t, b).conj();
                    sk += self.jc(a, t) * inner.kc(t, b) + self.kc(a, t) * inner.jc(t, b).conj();
                }
                j[a * c + b] = sj;
                k[a * c + b] = sk;
            }
        }
        Self { rows: r, cols: c, j, kbar: k }
    }

    /// Inverse of a square pair, via the real `2n × 2n` block matrix `[[J, K], [K̄, J̄]]`.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.rows;
        assert_eq!(n, self.cols);
        let mut m = nalgebra::DMatrix::<C64>::zeros(2 * n, 2 * n);
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] = self.jc(a, b);
                m[(a, n + b)] = self.kc(a, b);
                m[(n + a, b)] = self.kc(a, b).conj();
                m[(n + a, n + b)] = self.jc(a, b).conj();
            }
        }
        let inv = m.try_inverse()?;
        let mut j = vec![C64::new(0.0, 0.0); n * n];
        let mut k = vec![C64::new(0.0, 0.0); n * n];
        for a in 0..n {
            for b in 0..n {
                j[a * n + b] = inv[(a, b)];
                k[a * n + b] = inv[(a, n + b)];
            }
        }
        Some(Self { rows: n, cols: n, j, kbar: k })
    }
}

fn column_bit(c: usize, cols: usize) -> Mask {
    if c < cols {
        1 << c
    } else {
        1 << (BAR as usize + c - cols)
    }
}

fn is_diagonal(jac: &JacobianPair) -> bool {
    let n = jac.cols;
    (0..n).all(|a| (0..n).all(|b| a == b || jac.jc(a, b) == C64::new(0.0, 0.0)))
}

/// `τ*v` where `v` lives on the target and `jac` is the Jacobian of `τ` at the source point.
pub fn pullback_value(jac: &JacobianPair, v: &FormValue) -> FormValue {
    let n2 = 2 * jac.cols;
    let holo = jac.is_holomorphic();
    if holo && jac.rows == jac.cols && is_diagonal(jac) {
        let terms = v
            .terms()
            .iter()
            .map(|&(s, c)| {
                let f = basis::factors(s).iter().fold(c, |acc, &(i, bar)| {
                    let d = jac.jc(i, i);
                    acc * if bar { d.conj() } else { d }
                });
                (s, f)
            })
            .collect();
        return FormValue::from_terms(terms);
    }
    let mut out: Vec<(Mask, C64)> = Vec::new();
    let mut rowbuf: Vec<Vec<C64>> = Vec::new();
    for &(s, c) in v.terms() {
        let fs = basis::factors(s);
        let d = fs.len();
        if d == 0 {
            out.push((0, c));
            continue;
        }
        if d > n2 {
            continue;
        }
        rowbuf.clear();
        for &(i, bar) in &fs {
            let mut row = vec![C64::new(0.0, 0.0); n2];
            for b in 0..jac.cols {
                if bar {
                    row[b] = jac.kc(i, b).conj();
                    row[jac.cols + b] = jac.jc(i, b).conj();
                } else {
                    row[b] = jac.jc(i, b);
                    row[jac.cols + b] = jac.kc(i, b);
                }
            }
            rowbuf.push(row);
        }
        let want = basis::bidegree(s);
        let mut idx: Vec<usize> = (0..d).collect();
        let mut mat = vec![C64::new(0.0, 0.0); d * d];
        loop {
            let nh = idx.iter().filter(|&&x| x < jac.cols).count();
            if !holo || (nh, d - nh) == want {
                for (a, row) in rowbuf.iter().enumerate() {
                    for (b, &col) in idx.iter().enumerate() {
                        mat[a * d + b] = row[col];
                    }
                }
                let dt = det(&mut mat, d);
                if dt != C64::new(0.0, 0.0) {
                    let mask = idx.iter().map(|&x| column_bit(x, jac.cols)).sum::<Mask>();
                    out.push((mask, c * dt));
                }
            }
            if !next_combination(&mut idx, n2) {
                break;
            }
        }
    }
    FormValue::from_terms(out)
}

/// Advance `idx` to the next increasing `d`-subset of `0..n`; false when exhausted.
pub fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let d = idx.len();
    for i in (0..d).rev() {
        if idx[i] < n - d + i {
            idx[i] += 1;
            for t in i + 1..d {
                idx[t] = idx[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

//! Polynomials in `y` and `ȳ` with exact derivatives.

use super::basis::MAX_DIM;
use super::jet::Jet;
use crate::error::{LabError, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    /// exponents of `y_i`
    pub a: [u8; MAX_DIM],
    /// exponents of `ȳ_i`
    pub b: [u8; MAX_DIM],
}

impl Monomial {
    pub fn one() -> Self {
        Self { a: [0; MAX_DIM], b: [0; MAX_DIM] }
    }

    pub fn degree(&self) -> usize {
        self.a.iter().chain(self.b.iter()).map(|&e| e as usize).sum()
    }

    fn mul(&self, o: &Self) -> Self {
        let mut r = *self;
        for i in 0..MAX_DIM {
            r.a[i] += o.a[i];
            r.b[i] += o.b[i];
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub n: usize,
    pub terms: Vec<(Monomial, C64)>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: Vec::new() }
    }

    pub fn constant(n: usize, c: C64) -> Self {
        Self { n, terms: vec![(Monomial::one(), c)] }.normalized()
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut m = Monomial::one();
        m.a[i] = 1;
        Self { n, terms: vec![(m, C64::new(1.0, 0.0))] }
    }

    pub fn var_bar(n: usize, i: usize) -> Self {
        let mut m = Monomial::one();
        m.b[i] = 1;
        Self { n, terms: vec![(m, C64::new(1.0, 0.0))] }
    }

    /// `c · y^a ȳ^b`
    pub fn monomial(n: usize, a: &[u8], b: &[u8], c: C64) -> Result<Self> {
        if a.len() > n || b.len() > n || n > MAX_DIM {
            return Err(LabError::Invalid(format!("monomial exponents exceed dimension {n}")));
        }
        let mut m = Monomial::one();
        m.a[..a.len()].copy_from_slice(a);
        m.b[..b.len()].copy_from_slice(b);
        Ok(Self { n, terms: vec![(m, c)] }.normalized())
    }

    pub fn normalized(mut self) -> Self {
        self.terms.sort_by(|x, y| x.0.cmp(&y.0));
        let mut out: Vec<(Monomial, C64)> = Vec::with_capacity(self.terms.len());
        for (m, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == m => last.1 += c,
                _ => out.push((m, c)),
            }
        }
        out.retain(|t| t.1 != C64::new(0.0, 0.0));
        Self { n: self.n, terms: out }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut t = self.terms.clone();
        t.extend_from_slice(&o.terms);
        Self { n: self.n.max(o.n), terms: t }.normalized()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|&(m, v)| (m, v * c)).collect() }.normalized()
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut t = Vec::with_capacity(self.terms.len() * o.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                t.push((ma.mul(mb), ca * cb));
            }
        }
        Self { n: self.n.max(o.n), terms: t }.normalized()
    }

    pub fn pow(&self, e: usize) -> Self {
        let mut r = Self::constant(self.n, C64::new(1.0, 0.0));
        for _ in 0..e {
            r = r.mul(self);
        }
        r
    }

    pub fn conj(&self) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|(m, c)| (Monomial { a: m.b, b: m.a }, c.conj())).collect() }
            .normalized()
    }

    /// `∂/∂y_i`
    pub fn deriv(&self, i: usize) -> Self {
        let t = self
            .terms
            .iter()
            .filter(|(m, _)| m.a[i] > 0)
            .map(|(m, c)| {
                let mut mm = *m;
                mm.a[i] -= 1;
                (mm, c * m.a[i] as f64)
            })
            .collect();
        Self { n: self.n, terms: t }.normalized()
    }

    /// `∂/∂ȳ_i`
    pub fn deriv_bar(&self, i: usize) -> Self {
        let t = self
            .terms
            .iter()
            .filter(|(m, _)| m.b[i] > 0)
            .map(|(m, c)| {
                let mut mm = *m;
                mm.b[i] -= 1;
                (mm, c * m.b[i] as f64)
            })
            .collect();
        Self { n: self.n, terms: t }.normalized()
    }

    pub fn is_holomorphic(&self) -> bool {
        self.terms.iter().all(|(m, _)| m.b.iter().all(|&e| e == 0))
    }

    /// True when no variable with index in `vars` (bit set) appears.
    pub fn independent_of(&self, vars: u32) -> bool {
        self.terms.iter().all(|(m, _)| (0..MAX_DIM).all(|i| vars & (1 << i) == 0 || (m.a[i] == 0 && m.b[i] == 0)))
    }

    /// Smallest total degree in the variables of `vars` over all terms.
    pub fn min_degree_in(&self, vars: u32) -> Option<usize> {
        self.terms
            .iter()
            .map(|(m, _)| (0..MAX_DIM).filter(|i| vars & (1 << i) != 0).map(|i| (m.a[i] + m.b[i]) as usize).sum())
            .min()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(m, _)| m.degree()).max().unwrap_or(0)
    }

    fn power_tables(&self, y: &[C64]) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
        let n = self.n;
        let mut ma = vec![0u8; n];
        let mut mb = vec![0u8; n];
        for (m, _) in &self.terms {
            for i in 0..n {
                ma[i] = ma[i].max(m.a[i]);
                mb[i] = mb[i].max(m.b[i]);
            }
        }
        let table = |base: C64, e: u8| {
            let mut v = Vec::with_capacity(e as usize + 1);
            let mut p = C64::new(1.0, 0.0);
            v.push(p);
            for _ in 0..e {
                p *= base;
                v.push(p);
            }
            v
        };
        let pa = (0..n).map(|i| table(y[i], ma[i])).collect();
        let pb = (0..n).map(|i| table(y[i].conj(), mb[i])).collect();
        (pa, pb)
    }

    pub fn eval(&self, y: &[C64]) -> C64 {
        let (pa, pb) = self.power_tables(y);
        let mut acc = C64::new(0.0, 0.0);
        for (m, c) in &self.terms {
            let mut t = *c;
            for i in 0..self.n {
                t *= pa[i][m.a[i] as usize] * pb[i][m.b[i] as usize];
            }
            acc += t;
        }
        acc
    }

    pub fn jet(&self, y: &[C64]) -> Jet {
        let n = self.n;
        let (pa, pb) = self.power_tables(y);
        let zero = C64::new(0.0, 0.0);
        let mut jet = Jet::constant(n, zero);
        let mut f = [zero; MAX_DIM];
        let mut fd = [zero; MAX_DIM];
        let mut fdb = [zero; MAX_DIM];
        let mut fh = [zero; MAX_DIM];
        for (m, c) in &self.terms {
            for i in 0..n {
                let (a, b) = (m.a[i] as usize, m.b[i] as usize);
                f[i] = pa[i][a] * pb[i][b];
                fd[i] = if a > 0 { pa[i][a - 1] * pb[i][b] * a as f64 } else { zero };
                fdb[i] = if b > 0 { pa[i][a] * pb[i][b - 1] * b as f64 } else { zero };
                fh[i] = if a > 0 && b > 0 { pa[i][a - 1] * pb[i][b - 1] * (a * b) as f64 } else { zero };
            }
            let prod_except = |skip1: usize, skip2: usize| {
                let mut p = *c;
                for i in 0..n {
                    if i != skip1 && i != skip2 {
                        p *= f[i];
                    }
                }
                p
            };
            jet.v += prod_except(usize::MAX, usize::MAX);
            for i in 0..n {
                let rest = prod_except(i, usize::MAX);
                jet.d[i] += fd[i] * rest;
                jet.db[i] += fdb[i] * rest;
                jet.h[i][i] += fh[i] * rest;
                for j in 0..n {
                    if j != i {
                        jet.h[i][j] += fd[i] * fdb[j] * prod_except(i, j);
                    }
                }
            }
        }
        jet
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_matches_symbolic_derivatives() {
        let n = 3;
        let p = Polynomial::monomial(n, &[2, 0, 1], &[1, 1, 0], C64::new(0.5, 1.0))
            .unwrap()
            .add(&Polynomial::monomial(n, &[0, 3], &[0, 0, 2], C64::new(-1.0, 0.0)).unwrap())
            .add(&Polynomial::constant(n, C64::new(2.0, 0.0)));
        let y = [C64::new(0.3, 0.1), C64::new(-0.7, 0.2), C64::new(0.4, -0.9)];
        let j = p.jet(&y);
        assert!((j.v - p.eval(&y)).norm() < 1e-14);
        for i in 0..n {
            assert!((j.d[i] - p.deriv(i).eval(&y)).norm() < 1e-13);
            assert!((j.db[i] - p.deriv_bar(i).eval(&y)).norm() < 1e-13);
            for k in 0..n {
                assert!((j.h[i][k] - p.deriv(i).deriv_bar(k).eval(&y)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn conj_swaps_variables() {
        let p = Polynomial::var(2, 0).mul(&Polynomial::var_bar(2, 1)).scale(C64::new(0.0, 1.0));
        let y = [C64::new(0.2, 0.3), C64::new(-1.0, 0.4)];
        assert!((p.conj().eval(&y) - p.eval(&y).conj()).norm() < 1e-15);
    }
}

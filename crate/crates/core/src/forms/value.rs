//! Pointwise values of forms: sparse combinations of basis monomials.

use std::ops::{Add, Mul, Neg, Sub};

use super::basis::{self, Mask};
use crate::C64;

/// A form evaluated at one point. Terms are sorted by mask and merged; absent masks are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormValue {
    terms: Vec<(Mask, C64)>,
}

impl FormValue {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn scalar(c: C64) -> Self {
        Self { terms: vec![(0, c)] }
    }

    pub fn monomial(mask: Mask, c: C64) -> Self {
        Self { terms: vec![(mask, c)] }
    }

    pub fn from_terms(mut terms: Vec<(Mask, C64)>) -> Self {
        terms.sort_unstable_by_key(|t| t.0);
        let mut out: Vec<(Mask, C64)> = Vec::with_capacity(terms.len());
        for (m, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == m => last.1 += c,
                _ => out.push((m, c)),
            }
        }
        Self { terms: out }
    }

    pub fn terms(&self) -> &[(Mask, C64)] {
        &self.terms
    }

    pub fn get(&self, mask: Mask) -> C64 {
        match self.terms.binary_search_by_key(&mask, |t| t.0) {
            Ok(i) => self.terms[i].1,
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.iter().fold(0.0, |a, t| a.max(t.1.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.terms.iter().all(|t| t.1.re.is_finite() && t.1.im.is_finite())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { terms: self.terms.iter().map(|&(m, v)| (m, v * c)).collect() }
    }

    pub fn conj(&self) -> Self {
        // conj(dy_I ∧ dȳ_J) = dȳ_I ∧ dy_J, reorder to canonical form
        let terms = self
            .terms
            .iter()
            .map(|&(m, v)| {
                let h = basis::holo_bits(m);
                let a = basis::anti_bits(m);
                let sign = basis::merge_sign(h << basis::BAR, a).unwrap_or(1.0);
                // factors in the order dȳ_I then dy_J
                let nm = a | (h << basis::BAR);
                (nm, v.conj() * sign)
            })
            .collect();
        Self::from_terms(terms)
    }

    /// Keep only the terms of bidegree `(a, b)`.
    pub fn bidegree_part(&self, a: usize, b: usize) -> Self {
        Self { terms: self.terms.iter().copied().filter(|t| basis::bidegree(t.0) == (a, b)).collect() }
    }

    pub fn wedge(&self, other: &Self) -> Self {
        if self.terms.is_empty() || other.terms.is_empty() {
            return Self::zero();
        }
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(a, ca) in &self.terms {
            for &(b, cb) in &other.terms {
                if let Some(s) = basis::merge_sign(a, b) {
                    out.push((a | b, ca * cb * s));
                }
            }
        }
        Self::from_terms(out)
    }

    pub fn power(&self, n: usize) -> Self {
        let mut out = Self::scalar(C64::new(1.0, 0.0));
        for _ in 0..n {
            out = out.wedge(self);
        }
        out
    }

    /// Coefficient of the top monomial in `self ∧ other`, without forming the product.
    pub fn pair_top(&self, other: &Self, k: usize) -> C64 {
        let full = basis::full_mask(k);
        let mut acc = C64::new(0.0, 0.0);
        for &(m, c) in &self.terms {
            if m & !full != 0 {
                continue;
            }
            let comp = full ^ m;
            let oc = other.get(comp);
            if oc != C64::new(0.0, 0.0) {
                acc += c * oc * basis::merge_sign(m, comp).unwrap();
            }
        }
        acc
    }

    /// Density of the top-degree part with respect to Lebesgue measure on `C^k`.
    pub fn lebesgue_density(&self, k: usize) -> C64 {
        self.get(basis::full_mask(k)) * basis::top_density_factor(k)
    }

    /// Lebesgue density of `self ∧ other`.
    pub fn pair_density(&self, other: &Self, k: usize) -> C64 {
        self.pair_top(other, k) * basis::top_density_factor(k)
    }

    /// Evaluate on complexified tangent vectors given by their `dy` and `dȳ` components.
    pub fn evaluate_on(&self, frame: &[(Vec<C64>, Vec<C64>)]) -> C64 {
        let n = frame.len();
        let mut acc = C64::new(0.0, 0.0);
        let mut mat = vec![C64::new(0.0, 0.0); n * n];
        for &(m, c) in &self.terms {
            if basis::degree(m) != n {
                continue;
            }
            for (a, (idx, bar)) in basis::factors(m).into_iter().enumerate() {
                for (b, v) in frame.iter().enumerate() {
                    mat[a * n + b] = if bar { v.1[idx] } else { v.0[idx] };
                }
            }
            acc += c * det(&mut mat.clone(), n);
        }
        acc
    }
}

/// Determinant by Gaussian elimination with partial pivoting; `a` is row-major and destroyed.
pub fn det(a: &mut [C64], n: usize) -> C64 {
    let mut d = C64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].norm() > a[piv * n + col].norm() {
                piv = r;
            }
        }
        if a[piv * n + col].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            d = -d;
        }
        let p = a[col * n + col];
        d *= p;
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != C64::new(0.0, 0.0) {
                for c in col..n {
                    let t = a[col * n + c];
                    a[r * n + c] -= f * t;
                }
            }
        }
    }
    d
}

impl Add for &FormValue {
    type Output = FormValue;
    fn add(self, rhs: &FormValue) -> FormValue {
        let mut t = self.terms.clone();
        t.extend_from_slice(&rhs.terms);
        FormValue::from_terms(t)
    }
}

impl Sub for &FormValue {
    type Output = FormValue;
    fn sub(self, rhs: &FormValue) -> FormValue {
        self + &(-rhs)
    }
}

impl Neg for &FormValue {
    type Output = FormValue;
    fn neg(self) -> FormValue {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul<C64> for &FormValue {
    type Output = FormValue;
    fn mul(self, c: C64) -> FormValue {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::basis::{dy, dybar};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn lebesgue_density_of_kahler_square() {
        // ((i/2) Σ dz∧dz̄)^2 / 2! is Lebesgue measure on C^2
        let k = 2;
        let om = FormValue::from_terms(
            (0..k).map(|i| (dy(i) | dybar(i), C64::new(0.0, 0.5))).collect(),
        );
        let vol = om.power(2).scale(c(0.5));
        assert!((vol.lebesgue_density(k) - c(1.0)).norm() < 1e-15);
        assert!((om.pair_density(&om, k) - c(2.0)).norm() < 1e-15);
    }

    #[test]
    fn odd_forms_square_to_zero() {
        let f = FormValue::from_terms(vec![(dy(0), c(1.0)), (dybar(1), c(2.0))]);
        assert!(f.wedge(&f).max_abs() < 1e-15);
    }

    #[test]
    fn frame_alternation() {
        let f = FormValue::monomial(dy(0) | dybar(0), c(1.0));
        let e = (vec![c(1.0)], vec![c(0.0)]);
        let eb = (vec![c(0.0)], vec![c(1.0)]);
        assert_eq!(f.evaluate_on(&[e.clone(), eb.clone()]), c(1.0));
        assert_eq!(f.evaluate_on(&[eb, e]), c(-1.0));
    }

    #[test]
    fn conjugation_is_involutive() {
        let f = FormValue::from_terms(vec![
            (dy(0) | dy(1) | dybar(2), C64::new(1.0, 2.0)),
            (dy(2) | dybar(0), C64::new(-0.5, 0.25)),
        ]);
        assert_eq!(f.conj().conj(), f);
        // conj(i dz∧dz̄) = i dz∧dz̄
        let g = FormValue::monomial(dy(0) | dybar(0), C64::new(0.0, 1.0));
        assert!((&g.conj() - &g).max_abs() < 1e-15);
    }
}

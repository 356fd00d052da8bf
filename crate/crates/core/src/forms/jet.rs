//! Second-order Wirtinger jets: value, `∂/∂y_i`, `∂/∂ȳ_i` and `∂²/∂y_i∂ȳ_j`.

use super::basis::MAX_DIM;
use crate::C64;

const Z: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub n: usize,
    pub v: C64,
    pub d: [C64; MAX_DIM],
    pub db: [C64; MAX_DIM],
    /// `h[i][j] = ∂²/∂y_i∂ȳ_j`
    pub h: [[C64; MAX_DIM]; MAX_DIM],
}

impl Jet {
    pub fn constant(n: usize, v: C64) -> Self {
        Self { n, v, d: [Z; MAX_DIM], db: [Z; MAX_DIM], h: [[Z; MAX_DIM]; MAX_DIM] }
    }

    pub fn var(n: usize, i: usize, y: &[C64]) -> Self {
        let mut j = Self::constant(n, y[i]);
        j.d[i] = C64::new(1.0, 0.0);
        j
    }

    pub fn var_bar(n: usize, i: usize, y: &[C64]) -> Self {
        let mut j = Self::constant(n, y[i].conj());
        j.db[i] = C64::new(1.0, 0.0);
        j
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        r.v += o.v;
        for i in 0..self.n {
            r.d[i] += o.d[i];
            r.db[i] += o.db[i];
            for j in 0..self.n {
                r.h[i][j] += o.h[i][j];
            }
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut r = *self;
        r.v *= c;
        for i in 0..self.n {
            r.d[i] *= c;
            r.db[i] *= c;
            for j in 0..self.n {
                r.h[i][j] *= c;
            }
        }
        r
    }

    pub fn add_const(&self, c: C64) -> Self {
        let mut r = *self;
        r.v += c;
        r
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.n;
        let mut r = Self::constant(n, self.v * o.v);
        for i in 0..n {
            r.d[i] = self.d[i] * o.v + self.v * o.d[i];
            r.db[i] = self.db[i] * o.v + self.v * o.db[i];
        }
        for i in 0..n {
            for j in 0..n {
                r.h[i][j] = self.h[i][j] * o.v
                    + self.d[i] * o.db[j]
                    + self.db[j] * o.d[i]
                    + self.v * o.h[i][j];
            }
        }
        r
    }

    pub fn conj(&self) -> Self {
        let n = self.n;
        let mut r = Self::constant(n, self.v.conj());
        for i in 0..n {
            r.d[i] = self.db[i].conj();
            r.db[i] = self.d[i].conj();
            for j in 0..n {
                r.h[i][j] = self.h[j][i].conj();
            }
        }
        r
    }

    /// `g ∘ self` for `g` holomorphic (or a real function of a real-valued jet), given
    /// `(g, g', g'')` at the value.
    pub fn compose(&self, g: C64, g1: C64, g2: C64) -> Self {
        let n = self.n;
        let mut r = Self::constant(n, g);
        for i in 0..n {
            r.d[i] = g1 * self.d[i];
            r.db[i] = g1 * self.db[i];
        }
        for i in 0..n {
            for j in 0..n {
                r.h[i][j] = g2 * self.d[i] * self.db[j] + g1 * self.h[i][j];
            }
        }
        r
    }

    pub fn ln(&self) -> Self {
        let v = self.v;
        self.compose(v.ln(), v.inv(), -(v * v).inv())
    }

    pub fn recip(&self) -> Self {
        let v = self.v;
        let iv = v.inv();
        self.compose(iv, -iv * iv, 2.0 * iv * iv * iv)
    }

    pub fn powi(&self, e: i32) -> Self {
        let v = self.v;
        let e_f = e as f64;
        let g = v.powi(e);
        let g1 = if e == 0 { Z } else { v.powi(e - 1) * e_f };
        let g2 = if e == 0 || e == 1 { Z } else { v.powi(e - 2) * (e_f * (e_f - 1.0)) };
        self.compose(g, g1, g2)
    }

    pub fn exp(&self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_squared_has_identity_levi_matrix() {
        let y = [C64::new(0.3, -0.2), C64::new(1.0, 0.5)];
        let mut phi = Jet::constant(2, Z);
        for i in 0..2 {
            phi = phi.add(&Jet::var(2, i, &y).mul(&Jet::var_bar(2, i, &y)));
        }
        for i in 0..2 {
            assert!((phi.d[i] - y[i].conj()).norm() < 1e-15);
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((phi.h[i][j] - C64::new(e, 0.0)).norm() < 1e-15);
            }
        }
        // conj of a real jet is itself
        let c = phi.conj();
        assert!((c.h[0][1] - phi.h[0][1]).norm() < 1e-15);
    }
}

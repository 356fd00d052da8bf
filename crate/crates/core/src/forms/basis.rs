//! Basis monomials `dy_I ∧ dȳ_J` encoded as bit masks.
//!
//! Bit `i` (< 16) stands for `dy_i`, bit `16 + i` for `dȳ_i`. The canonical order of the
//! factors is increasing bit index, so all holomorphic differentials come first.

use crate::error::{LabError, Result};

pub type Mask = u32;

/// Largest chart dimension supported by the fixed-size jets.
pub const MAX_DIM: usize = 6;
pub const BAR: u32 = 16;

pub fn dy(i: usize) -> Mask {
    1 << i
}

pub fn dybar(i: usize) -> Mask {
    1 << (BAR as usize + i)
}

pub fn holo_bits(m: Mask) -> u32 {
    m & 0xffff
}

pub fn anti_bits(m: Mask) -> u32 {
    m >> BAR
}

pub fn degree(m: Mask) -> usize {
    m.count_ones() as usize
}

pub fn bidegree(m: Mask) -> (usize, usize) {
    (holo_bits(m).count_ones() as usize, anti_bits(m).count_ones() as usize)
}

/// `dy_1 ∧ … ∧ dy_k ∧ dȳ_1 ∧ … ∧ dȳ_k`.
pub fn full_mask(k: usize) -> Mask {
    let ones = (1u32 << k) - 1;
    ones | (ones << BAR)
}

/// Sign of `e_a ∧ e_b` relative to the canonical monomial `e_{a|b}`, or `None` when the
/// monomials share a factor.
pub fn merge_sign(a: Mask, b: Mask) -> Option<f64> {
    if a & b != 0 {
        return None;
    }
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        rest &= rest - 1;
        inversions += (a >> j >> 1).count_ones();
    }
    Some(if inversions % 2 == 0 { 1.0 } else { -1.0 })
}

/// Factors of a monomial in canonical order, as `(index, is_bar)`.
pub fn factors(m: Mask) -> Vec<(usize, bool)> {
    let mut out = Vec::with_capacity(degree(m));
    let mut rest = m;
    while rest != 0 {
        let b = rest.trailing_zeros();
        rest &= rest - 1;
        if b >= BAR {
            out.push(((b - BAR) as usize, true));
        } else {
            out.push((b as usize, false));
        }
    }
    out
}

/// `(−1)^{k(k−1)/2} (−2i)^k`: Lebesgue density of the top monomial.
pub fn top_density_factor(k: usize) -> num_complex::Complex64 {
    let sign = if (k * (k.saturating_sub(1)) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    num_complex::Complex64::new(0.0, -2.0).powu(k as u32) * sign
}

/// Strictly increasing holomorphic/antiholomorphic index tuples, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndexPair {
    pub holo: Vec<usize>,
    pub anti: Vec<usize>,
}

impl MultiIndexPair {
    pub fn new(holo: Vec<usize>, anti: Vec<usize>) -> Result<Self> {
        for idx in [&holo, &anti] {
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LabError::Invalid(format!("indices not strictly increasing: {idx:?}")));
            }
            if idx.iter().any(|&i| i >= BAR as usize) {
                return Err(LabError::Invalid("index out of range".into()));
            }
        }
        Ok(Self { holo, anti })
    }

    pub fn mask(&self) -> Mask {
        self.holo.iter().map(|&i| dy(i)).sum::<Mask>() | self.anti.iter().map(|&i| dybar(i)).sum::<Mask>()
    }

    pub fn from_mask(m: Mask) -> Self {
        let mut holo = Vec::new();
        let mut anti = Vec::new();
        for (i, bar) in factors(m) {
            if bar {
                anti.push(i)
            } else {
                holo.push(i)
            }
        }
        Self { holo, anti }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_of_disjoint_pairs() {
        // dz1∧dz̄1 ∧ dz2∧dz̄2 = dz1∧dz2∧dz̄1∧dz̄2 up to one swap
        let a = dy(0) | dybar(0);
        let b = dy(1) | dybar(1);
        assert_eq!(merge_sign(a, b), Some(-1.0));
        assert_eq!(merge_sign(dy(1), dy(0)), Some(-1.0));
        assert_eq!(merge_sign(dy(0), dy(1)), Some(1.0));
        assert_eq!(merge_sign(dy(0), dy(0)), None);
    }

    #[test]
    fn multi_index_roundtrip() {
        let p = MultiIndexPair::new(vec![0, 2], vec![1]).unwrap();
        assert_eq!(MultiIndexPair::from_mask(p.mask()), p);
        assert!(MultiIndexPair::new(vec![2, 1], vec![]).is_err());
    }
}

//! Exterior algebra on charts of `C^(k−l) × C^l`.

pub mod basis;
pub mod field;
pub mod form;
pub mod jet;
pub mod poly;
pub mod pullback;
pub mod value;

pub use basis::{dy, dybar, Mask, MultiIndexPair, MAX_DIM};
pub use field::{constant_field, poly_field, Field, JetField, ScalarField, ValueField};
pub use form::{DerivativeMode, DiffOp, Form, FormEvaluator, FormJet, SingularLocus, TangentVector};
pub use jet::Jet;
pub use poly::{Monomial, Polynomial};
pub use pullback::{pullback_value, JacobianPair};
pub use value::FormValue;

use crate::C64;

/// A point `y = (z, w)` with fiber coordinates `z` and base coordinates `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub z: Vec<C64>,
    pub w: Vec<C64>,
}

impl ChartPoint {
    pub fn new(z: Vec<C64>, w: Vec<C64>) -> Self {
        Self { z, w }
    }

    pub fn from_coords(y: &[C64], fiber_dim: usize) -> Self {
        Self { z: y[..fiber_dim].to_vec(), w: y[fiber_dim..].to_vec() }
    }

    pub fn coords(&self) -> Vec<C64> {
        let mut y = self.z.clone();
        y.extend_from_slice(&self.w);
        y
    }
}

/// `ddᶜ f` (or `d`, `dᶜ`) of a form at a point.
pub fn differentiate(f: &Form, op: DiffOp, at: &ChartPoint) -> crate::Result<FormValue> {
    f.differentiate(op, &at.coords())
}

/// `(τ* f)(x)`.
pub fn pullback(map: &crate::maps::AdmissibleMap, f: &Form, at: &ChartPoint) -> FormValue {
    f.pullback(map).eval(&at.coords())
}

pub fn wedge(f: &Form, g: &Form) -> Form {
    f.wedge(g)
}

pub fn evaluate_on_tangent_frame(f: &Form, at: &ChartPoint, frame: &[TangentVector]) -> crate::Result<C64> {
    f.evaluate_on_tangent_frame(&at.coords(), frame)
}

//! Scalar coefficient fields.

use std::fmt;
use std::sync::Arc;

use super::jet::Jet;
use super::poly::Polynomial;
use crate::C64;

/// A complex-valued function on a chart of dimension `dim()`.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, y: &[C64]) -> C64;
    /// Analytic second-order jet, when the field supplies one.
    fn jet(&self, _y: &[C64]) -> Option<Jet> {
        None
    }
    fn as_polynomial(&self) -> Option<&Polynomial> {
        None
    }
}

impl fmt::Debug for dyn ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_polynomial() {
            Some(p) => write!(f, "{p:?}"),
            None => write!(f, "ScalarField(dim={})", self.dim()),
        }
    }
}

pub type Field = Arc<dyn ScalarField>;

impl ScalarField for Polynomial {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, y: &[C64]) -> C64 {
        self.eval(y)
    }
    fn jet(&self, y: &[C64]) -> Option<Jet> {
        Some(Polynomial::jet(self, y))
    }
    fn as_polynomial(&self) -> Option<&Polynomial> {
        Some(self)
    }
}

type JetFn = dyn Fn(&[C64]) -> Jet + Send + Sync;
type ValFn = dyn Fn(&[C64]) -> C64 + Send + Sync;

/// Field given by a closure producing full jets.
pub struct JetField {
    n: usize,
    f: Arc<JetFn>,
}

impl JetField {
    pub fn new(n: usize, f: impl Fn(&[C64]) -> Jet + Send + Sync + 'static) -> Self {
        Self { n, f: Arc::new(f) }
    }
}

impl ScalarField for JetField {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, y: &[C64]) -> C64 {
        (self.f)(y).v
    }
    fn jet(&self, y: &[C64]) -> Option<Jet> {
        Some((self.f)(y))
    }
}

/// Field known only through point values; derivatives fall back to numeric stencils.
pub struct ValueField {
    n: usize,
    f: Arc<ValFn>,
}

impl ValueField {
    pub fn new(n: usize, f: impl Fn(&[C64]) -> C64 + Send + Sync + 'static) -> Self {
        Self { n, f: Arc::new(f) }
    }
}

impl ScalarField for ValueField {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, y: &[C64]) -> C64 {
        (self.f)(y)
    }
}

pub fn poly_field(p: Polynomial) -> Field {
    Arc::new(p)
}

pub fn constant_field(n: usize, c: C64) -> Field {
    Arc::new(Polynomial::constant(n, c))
}

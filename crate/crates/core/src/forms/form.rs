//! Differential form fields on a chart of `C^k`.

use std::fmt;
use std::sync::Arc;

use super::basis::{self, dy, dybar, Mask};
use super::field::{Field, ScalarField};
use super::jet::Jet;
use super::poly::Polynomial;
use super::pullback::pullback_value;
use super::value::FormValue;
use crate::error::{LabError, Result};
use crate::maps::AdmissibleMap;
use crate::C64;

const I_OVER_PI: C64 = C64 { re: 0.0, im: std::f64::consts::FRAC_1_PI };

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode {
    /// Use supplied partials; fall back to stencils when a coefficient has none.
    Analytic,
    /// Fourth-order central differences; `None` means `h = 1e-4 (1 + |y|)`.
    Numeric { step: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOp {
    D,
    Dc,
    Ddc,
}

/// Where coefficients may blow up; used to refuse numeric stencils that reach it.
#[derive(Clone)]
pub enum SingularLocus {
    /// `{z = 0}` where `z` are the first `fiber_dim` coordinates.
    FiberOrigin { fiber_dim: usize },
    Custom(Arc<dyn Fn(&[C64]) -> bool + Send + Sync>),
}

impl fmt::Debug for SingularLocus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SingularLocus::FiberOrigin { fiber_dim } => write!(f, "FiberOrigin({fiber_dim})"),
            SingularLocus::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Sparse jets of all coefficients, keyed by basis mask.
pub type FormJet = Vec<(Mask, Jet)>;

/// User-supplied pointwise evaluator for forms that are not built from the combinators.
pub trait FormEvaluator: Send + Sync {
    fn eval(&self, y: &[C64]) -> FormValue;
    fn eval_jet(&self, _y: &[C64]) -> Option<FormJet> {
        None
    }
}

#[derive(Clone)]
enum Repr {
    Components(Vec<(Mask, Field)>),
    Constant(FormValue),
    /// `(i/π) Σ_{a ∈ rows, b ∈ cols} ∂_a ∂̄_b u dy_a ∧ dȳ_b`
    Ddc { potential: Field, rows: u32, cols: u32 },
    Wedge(Vec<Form>),
    Sum(Vec<(C64, Form)>),
    Scaled(Field, Form),
    Power(Form, usize),
    Pullback(AdmissibleMap, Form),
    Derivative(DiffOp, Form),
    Custom(Arc<dyn FormEvaluator>),
}

struct Node {
    k: usize,
    degree: usize,
    bidegree: Option<(usize, usize)>,
    repr: Repr,
    mode: DerivativeMode,
    singular: Option<SingularLocus>,
}

/// A form field; cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Form(Arc<Node>);

impl fmt::Debug for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form(k={}, degree={}, bidegree={:?})", self.0.k, self.0.degree, self.0.bidegree)
    }
}

impl Form {
    fn node(k: usize, degree: usize, bidegree: Option<(usize, usize)>, repr: Repr) -> Self {
        Form(Arc::new(Node { k, degree, bidegree, repr, mode: DerivativeMode::Analytic, singular: None }))
    }

    pub fn k(&self) -> usize {
        self.0.k
    }

    pub fn degree(&self) -> usize {
        self.0.degree
    }

    /// `None` for forms of mixed type (e.g. pullbacks by non-holomorphic maps).
    pub fn bidegree(&self) -> Option<(usize, usize)> {
        self.0.bidegree
    }

    pub fn mode(&self) -> DerivativeMode {
        self.0.mode
    }

    pub fn singular_locus(&self) -> Option<&SingularLocus> {
        self.0.singular.as_ref()
    }

    fn with(&self, mode: DerivativeMode, singular: Option<SingularLocus>) -> Self {
        let n = &self.0;
        Form(Arc::new(Node {
            k: n.k,
            degree: n.degree,
            bidegree: n.bidegree,
            repr: n.repr.clone(),
            mode,
            singular,
        }))
    }

    pub fn with_mode(&self, mode: DerivativeMode) -> Self {
        self.with(mode, self.0.singular.clone())
    }

    pub fn with_singular(&self, locus: SingularLocus) -> Self {
        self.with(self.0.mode, Some(locus))
    }

    pub fn zero(k: usize, bidegree: (usize, usize)) -> Self {
        Self::node(k, bidegree.0 + bidegree.1, Some(bidegree), Repr::Constant(FormValue::zero()))
    }

    pub fn is_trivially_zero(&self) -> bool {
        matches!(&self.0.repr, Repr::Constant(v) if v.terms().is_empty())
            || matches!(&self.0.repr, Repr::Components(c) if c.is_empty())
    }

    pub fn constant(k: usize, v: FormValue) -> Result<Self> {
        let (deg, bideg) = check_terms(k, v.terms().iter().map(|t| t.0))?;
        Ok(Self::node(k, deg, bideg, Repr::Constant(v)))
    }

    pub fn scalar(k: usize, f: Field) -> Self {
        Self::node(k, 0, Some((0, 0)), Repr::Components(vec![(0, f)]))
    }

    /// Sparse components; every mask must have the same bidegree.
    pub fn components(k: usize, comps: Vec<(Mask, Field)>) -> Result<Self> {
        if comps.is_empty() {
            return Err(LabError::Invalid("use Form::zero for the zero form".into()));
        }
        let (deg, bideg) = check_terms(k, comps.iter().map(|t| t.0))?;
        if bideg.is_none() {
            return Err(LabError::Invalid("components of mixed bidegree".into()));
        }
        for (_, f) in &comps {
            if f.dim() != k {
                return Err(LabError::Invalid(format!("coefficient on C^{} in a form on C^{k}", f.dim())));
            }
        }
        Ok(Self::node(k, deg, bideg, Repr::Components(comps)))
    }

    pub fn polynomial(k: usize, comps: Vec<(Mask, Polynomial)>) -> Result<Self> {
        let comps: Vec<(Mask, Polynomial)> = comps.into_iter().filter(|c| !c.1.is_zero()).collect();
        if comps.is_empty() {
            return Ok(Self::zero(k, (0, 0)));
        }
        Self::components(k, comps.into_iter().map(|(m, p)| (m, Arc::new(p) as Field)).collect())
    }

    /// `ddᶜ u` restricted to index sets `rows` (holomorphic slots) and `cols` (antiholomorphic).
    pub fn ddc_of_potential(k: usize, potential: Field, rows: u32, cols: u32) -> Self {
        Self::node(k, 2, Some((1, 1)), Repr::Ddc { potential, rows, cols })
    }

    pub fn custom(k: usize, degree: usize, bidegree: Option<(usize, usize)>, e: Arc<dyn FormEvaluator>) -> Self {
        Self::node(k, degree, bidegree, Repr::Custom(e))
    }

    pub fn wedge(&self, other: &Form) -> Form {
        assert_eq!(self.k(), other.k(), "wedge of forms on different charts");
        let k = self.k();
        let deg = self.degree() + other.degree();
        let bideg = match (self.bidegree(), other.bidegree()) {
            (Some(a), Some(b)) => Some((a.0 + b.0, a.1 + b.1)),
            _ => None,
        };
        let overflow = deg > 2 * k || bideg.map_or(false, |b| b.0 > k || b.1 > k);
        if overflow || self.is_trivially_zero() || other.is_trivially_zero() {
            return Form::zero(k, bideg.unwrap_or((deg.min(2 * k) / 2, deg.min(2 * k) - deg.min(2 * k) / 2)));
        }
        let mut parts = Vec::new();
        for f in [self, other] {
            match &f.0.repr {
                Repr::Wedge(v) if f.0.singular.is_none() => parts.extend(v.iter().cloned()),
                _ => parts.push(f.clone()),
            }
        }
        let singular = self.0.singular.clone().or_else(|| other.0.singular.clone());
        let mut out = Self::node(k, deg, bideg, Repr::Wedge(parts));
        if let Some(s) = singular {
            out = out.with_singular(s);
        }
        out
    }

    pub fn power(&self, n: usize) -> Form {
        let k = self.k();
        if n == 0 {
            return Form::constant(k, FormValue::scalar(C64::new(1.0, 0.0))).unwrap();
        }
        if n == 1 {
            return self.clone();
        }
        let deg = self.degree() * n;
        let bideg = self.bidegree().map(|b| (b.0 * n, b.1 * n));
        if deg > 2 * k || bideg.map_or(false, |b| b.0 > k || b.1 > k) {
            return Form::zero(k, bideg.unwrap_or((k, k)));
        }
        let mut out = Self::node(k, deg, bideg, Repr::Power(self.clone(), n));
        if let Some(s) = &self.0.singular {
            out = out.with_singular(s.clone());
        }
        out
    }

    /// `Σ c_i f_i`; all terms must share the total degree.
    pub fn linear_combination(terms: Vec<(C64, Form)>) -> Result<Form> {
        let first = terms.first().ok_or_else(|| LabError::Invalid("empty combination".into()))?;
        let k = first.1.k();
        let deg = first.1.degree();
        let mut bideg = first.1.bidegree();
        for (_, f) in &terms {
            if f.k() != k || f.degree() != deg {
                return Err(LabError::Invalid("linear combination of forms of different degree".into()));
            }
            if f.bidegree() != bideg {
                bideg = None;
            }
        }
        let singular = terms.iter().find_map(|t| t.1.0.singular.clone());
        let mut out = Self::node(k, deg, bideg, Repr::Sum(terms));
        if let Some(s) = singular {
            out = out.with_singular(s);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        Self::linear_combination(vec![(C64::new(1.0, 0.0), self.clone()), (C64::new(1.0, 0.0), other.clone())])
    }

    pub fn scale(&self, c: C64) -> Form {
        Self::linear_combination(vec![(c, self.clone())]).unwrap()
    }

    /// `u · f` for a scalar field `u`.
    pub fn mul_field(&self, u: Field) -> Form {
        let n = &self.0;
        let mut out = Self::node(n.k, n.degree, n.bidegree, Repr::Scaled(u, self.clone()));
        if let Some(s) = &n.singular {
            out = out.with_singular(s.clone());
        }
        out
    }

    /// `τ* f` as a field.
    pub fn pullback(&self, map: &AdmissibleMap) -> Form {
        let bideg = if map.is_holomorphic() { self.bidegree() } else { None };
        Self::node(self.k(), self.degree(), bideg, Repr::Pullback(map.clone(), self.clone())).with_mode(self.mode())
    }

    /// Coefficients as polynomials, when every leaf is polynomial and the tree is closed
    /// under polynomial arithmetic.
    pub fn as_polynomial(&self) -> Option<Vec<(Mask, Polynomial)>> {
        let k = self.k();
        let out: Vec<(Mask, Polynomial)> = match &self.0.repr {
            Repr::Components(c) => {
                c.iter().map(|(m, f)| f.as_polynomial().map(|p| (*m, p.clone()))).collect::<Option<_>>()?
            }
            Repr::Constant(v) => v.terms().iter().map(|&(m, c)| (m, Polynomial::constant(k, c))).collect(),
            Repr::Sum(ts) => {
                let mut acc = Vec::new();
                for (c, f) in ts {
                    acc.extend(f.as_polynomial()?.into_iter().map(|(m, p)| (m, p.scale(*c))));
                }
                acc
            }
            Repr::Scaled(u, f) => {
                let u = u.as_polynomial()?;
                f.as_polynomial()?.into_iter().map(|(m, p)| (m, p.mul(u))).collect()
            }
            Repr::Wedge(parts) => {
                let mut acc = vec![(0 as Mask, Polynomial::constant(k, C64::new(1.0, 0.0)))];
                for f in parts {
                    acc = poly_wedge(&acc, &f.as_polynomial()?);
                }
                acc
            }
            Repr::Power(f, n) => {
                let base = f.as_polynomial()?;
                let mut acc = vec![(0 as Mask, Polynomial::constant(k, C64::new(1.0, 0.0)))];
                for _ in 0..*n {
                    acc = poly_wedge(&acc, &base);
                }
                acc
            }
            Repr::Ddc { potential, rows, cols } => {
                let u = potential.as_polynomial()?;
                let mut acc = Vec::new();
                for a in 0..k {
                    for b in 0..k {
                        if rows & (1 << a) != 0 && cols & (1 << b) != 0 {
                            acc.push((dy(a) | dybar(b), u.deriv(a).deriv_bar(b).scale(I_OVER_PI)));
                        }
                    }
                }
                acc
            }
            _ => return None,
        };
        Some(merge_poly_terms(out))
    }

    /// `d f`, `dᶜ f` or `ddᶜ f` as a field. Exact (polynomial) when the coefficients are.
    pub fn derivative(&self, op: DiffOp) -> Form {
        let k = self.k();
        let (deg, bideg) = match op {
            DiffOp::D | DiffOp::Dc => (self.degree() + 1, None),
            DiffOp::Ddc => (self.degree() + 2, self.bidegree().map(|b| (b.0 + 1, b.1 + 1))),
        };
        if deg > 2 * k {
            return Form::zero(k, bideg.unwrap_or((k, k)));
        }
        if let Some(p) = self.as_polynomial() {
            let out = poly_derivative(k, &p, op);
            let comps: Vec<(Mask, Field)> = out.into_iter().map(|(m, p)| (m, Arc::new(p) as Field)).collect();
            if comps.is_empty() {
                return Form::zero(k, bideg.unwrap_or((deg / 2, deg - deg / 2)));
            }
            return Self::node(k, deg, bideg, Repr::Components(comps)).with(self.mode(), self.0.singular.clone());
        }
        Self::node(k, deg, bideg, Repr::Derivative(op, self.clone())).with(self.mode(), self.0.singular.clone())
    }

    pub fn eval(&self, y: &[C64]) -> FormValue {
        let k = self.k();
        match &self.0.repr {
            Repr::Components(c) => FormValue::from_terms(c.iter().map(|(m, f)| (*m, f.value(y))).collect()),
            Repr::Constant(v) => v.clone(),
            Repr::Ddc { potential, rows, cols } => {
                let h = potential_hessian(potential.as_ref(), y, self.mode());
                let mut t = Vec::new();
                for a in 0..k {
                    if rows & (1 << a) == 0 {
                        continue;
                    }
                    for b in 0..k {
                        if cols & (1 << b) != 0 {
                            t.push((dy(a) | dybar(b), h[a][b] * I_OVER_PI));
                        }
                    }
                }
                FormValue::from_terms(t)
            }
            Repr::Wedge(parts) => {
                let mut acc = parts[0].eval(y);
                for f in &parts[1..] {
                    if acc.terms().is_empty() {
                        break;
                    }
                    acc = acc.wedge(&f.eval(y));
                }
                acc
            }
            Repr::Sum(ts) => {
                let mut all = Vec::new();
                for (c, f) in ts {
                    all.extend(f.eval(y).terms().iter().map(|&(m, v)| (m, v * c)));
                }
                FormValue::from_terms(all)
            }
            Repr::Scaled(u, f) => f.eval(y).scale(u.value(y)),
            Repr::Power(f, n) => f.eval(y).power(*n),
            Repr::Pullback(map, f) => {
                let x = map.apply_coords(y);
                pullback_value(&map.jacobian_coords(y), &f.eval(&x))
            }
            Repr::Derivative(op, f) => match f.differentiate(*op, y) {
                Ok(v) => v,
                Err(_) => FormValue::from_terms(vec![(0, C64::new(f64::NAN, f64::NAN))]),
            },
            Repr::Custom(e) => e.eval(y),
        }
    }

    /// Jets of all coefficients, when every leaf supplies analytic partials.
    pub fn eval_jet(&self, y: &[C64]) -> Option<FormJet> {
        let k = self.k();
        match &self.0.repr {
            Repr::Components(c) => c.iter().map(|(m, f)| f.jet(y).map(|j| (*m, j))).collect(),
            Repr::Constant(v) => Some(v.terms().iter().map(|&(m, c)| (m, Jet::constant(k, c))).collect()),
            Repr::Wedge(parts) => {
                let mut acc = parts[0].eval_jet(y)?;
                for f in &parts[1..] {
                    acc = jet_wedge(&acc, &f.eval_jet(y)?);
                }
                Some(acc)
            }
            Repr::Sum(ts) => {
                let mut all = Vec::new();
                for (c, f) in ts {
                    all.extend(f.eval_jet(y)?.into_iter().map(|(m, j)| (m, j.scale(*c))));
                }
                Some(merge_jets(all))
            }
            Repr::Scaled(u, f) => {
                let uj = u.jet(y)?;
                Some(f.eval_jet(y)?.into_iter().map(|(m, j)| (m, j.mul(&uj))).collect())
            }
            Repr::Power(f, n) => {
                let base = f.eval_jet(y)?;
                let mut acc = vec![(0, Jet::constant(k, C64::new(1.0, 0.0)))];
                for _ in 0..*n {
                    acc = jet_wedge(&acc, &base);
                }
                Some(acc)
            }
            Repr::Custom(e) => e.eval_jet(y),
            _ => None,
        }
    }

    /// Value of `op f` at `y`.
    pub fn differentiate(&self, op: DiffOp, y: &[C64]) -> Result<FormValue> {
        if let DerivativeMode::Analytic = self.mode() {
            if let Some(j) = self.eval_jet(y) {
                return Ok(apply_op_jets(&j, op, self.k()));
            }
        }
        let step = match self.mode() {
            DerivativeMode::Numeric { step: Some(h) } => h,
            _ => default_step(y),
        };
        numeric_derivative(self, op, y, step)
    }

    /// Evaluate on complexified tangent vectors.
    pub fn evaluate_on_tangent_frame(&self, at: &[C64], frame: &[TangentVector]) -> Result<C64> {
        if frame.len() != self.degree() {
            return Err(LabError::ArityMismatch { expected: self.degree(), got: frame.len() });
        }
        let fr: Vec<(Vec<C64>, Vec<C64>)> = frame.iter().map(|v| (v.hol.clone(), v.anti.clone())).collect();
        Ok(self.eval(at).evaluate_on(&fr))
    }
}

/// A complexified tangent vector through its `dy` and `dȳ` components.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub hol: Vec<C64>,
    pub anti: Vec<C64>,
}

impl TangentVector {
    /// A real tangent vector with complex coordinates `v`.
    pub fn real(v: &[C64]) -> Self {
        Self { hol: v.to_vec(), anti: v.iter().map(|c| c.conj()).collect() }
    }

    /// `∂/∂y_i`
    pub fn holomorphic(k: usize, i: usize) -> Self {
        let mut hol = vec![C64::new(0.0, 0.0); k];
        hol[i] = C64::new(1.0, 0.0);
        Self { hol, anti: vec![C64::new(0.0, 0.0); k] }
    }

    /// `∂/∂ȳ_i`
    pub fn antiholomorphic(k: usize, i: usize) -> Self {
        let mut anti = vec![C64::new(0.0, 0.0); k];
        anti[i] = C64::new(1.0, 0.0);
        Self { hol: vec![C64::new(0.0, 0.0); k], anti }
    }
}

fn check_terms(k: usize, masks: impl Iterator<Item = Mask>) -> Result<(usize, Option<(usize, usize)>)> {
    let full = basis::full_mask(k);
    let mut deg = None;
    let mut bideg = None;
    let mut mixed = false;
    for m in masks {
        if m & !full != 0 {
            return Err(LabError::Invalid(format!("basis mask {m:#x} outside C^{k}")));
        }
        let d = basis::degree(m);
        match deg {
            None => deg = Some(d),
            Some(d0) if d0 != d => return Err(LabError::Invalid("components of different degree".into())),
            _ => {}
        }
        let b = basis::bidegree(m);
        match bideg {
            None => bideg = Some(b),
            Some(b0) if b0 != b => mixed = true,
            _ => {}
        }
    }
    let deg = deg.unwrap_or(0);
    Ok((deg, if mixed { None } else { Some(bideg.unwrap_or((0, 0))) }))
}

pub fn default_step(y: &[C64]) -> f64 {
    let n = y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    1e-4 * (1.0 + n)
}

fn potential_hessian(u: &dyn ScalarField, y: &[C64], mode: DerivativeMode) -> [[C64; basis::MAX_DIM]; basis::MAX_DIM] {
    if let DerivativeMode::Analytic = mode {
        if let Some(j) = u.jet(y) {
            return j.h;
        }
    }
    let h = match mode {
        DerivativeMode::Numeric { step: Some(h) } => h,
        _ => default_step(y),
    };
    let k = y.len();
    let f = |p: &[C64]| FormValue::scalar(u.value(p));
    let hess = numeric_mixed(&f, y, h);
    let mut out = [[C64::new(0.0, 0.0); basis::MAX_DIM]; basis::MAX_DIM];
    for a in 0..k {
        for b in 0..k {
            out[a][b] = hess[a][b].get(0);
        }
    }
    out
}

fn merge_poly_terms(mut t: Vec<(Mask, Polynomial)>) -> Vec<(Mask, Polynomial)> {
    t.sort_by_key(|x| x.0);
    let mut out: Vec<(Mask, Polynomial)> = Vec::new();
    for (m, p) in t {
        match out.last_mut() {
            Some(last) if last.0 == m => last.1 = last.1.add(&p),
            _ => out.push((m, p)),
        }
    }
    out.retain(|x| !x.1.is_zero());
    out
}

fn poly_wedge(a: &[(Mask, Polynomial)], b: &[(Mask, Polynomial)]) -> Vec<(Mask, Polynomial)> {
    let mut out = Vec::new();
    for (ma, pa) in a {
        for (mb, pb) in b {
            if let Some(s) = basis::merge_sign(*ma, *mb) {
                out.push((ma | mb, pa.mul(pb).scale(C64::new(s, 0.0))));
            }
        }
    }
    merge_poly_terms(out)
}

fn poly_derivative(k: usize, p: &[(Mask, Polynomial)], op: DiffOp) -> Vec<(Mask, Polynomial)> {
    let mut out = Vec::new();
    let c_dc = C64::new(0.0, -0.5 / std::f64::consts::PI); // 1/(2πi)
    for (m, q) in p {
        for i in 0..k {
            match op {
                DiffOp::D | DiffOp::Dc => {
                    let (ch, ca) = if op == DiffOp::D {
                        (C64::new(1.0, 0.0), C64::new(1.0, 0.0))
                    } else {
                        (c_dc, -c_dc)
                    };
                    if let Some(s) = basis::merge_sign(dy(i), *m) {
                        out.push((dy(i) | m, q.deriv(i).scale(ch * s)));
                    }
                    if let Some(s) = basis::merge_sign(dybar(i), *m) {
                        out.push((dybar(i) | m, q.deriv_bar(i).scale(ca * s)));
                    }
                }
                DiffOp::Ddc => {
                    for j in 0..k {
                        let e = dy(i) | dybar(j);
                        if let Some(s) = basis::merge_sign(e, *m) {
                            out.push((e | m, q.deriv(i).deriv_bar(j).scale(I_OVER_PI * s)));
                        }
                    }
                }
            }
        }
    }
    merge_poly_terms(out)
}

fn merge_jets(mut t: Vec<(Mask, Jet)>) -> FormJet {
    t.sort_by_key(|x| x.0);
    let mut out: FormJet = Vec::new();
    for (m, j) in t {
        match out.last_mut() {
            Some(last) if last.0 == m => last.1 = last.1.add(&j),
            _ => out.push((m, j)),
        }
    }
    out
}

fn jet_wedge(a: &FormJet, b: &FormJet) -> FormJet {
    let mut out = Vec::new();
    for (ma, ja) in a {
        for (mb, jb) in b {
            if let Some(s) = basis::merge_sign(*ma, *mb) {
                out.push((ma | mb, ja.mul(jb).scale(C64::new(s, 0.0))));
            }
        }
    }
    merge_jets(out)
}

fn apply_op_jets(j: &FormJet, op: DiffOp, k: usize) -> FormValue {
    let c_dc = C64::new(0.0, -0.5 / std::f64::consts::PI);
    let mut out = Vec::new();
    for (m, jet) in j {
        for i in 0..k {
            match op {
                DiffOp::D | DiffOp::Dc => {
                    let (ch, ca) = if op == DiffOp::D { (C64::new(1.0, 0.0), C64::new(1.0, 0.0)) } else { (c_dc, -c_dc) };
                    if let Some(s) = basis::merge_sign(dy(i), *m) {
                        out.push((dy(i) | m, jet.d[i] * ch * s));
                    }
                    if let Some(s) = basis::merge_sign(dybar(i), *m) {
                        out.push((dybar(i) | m, jet.db[i] * ca * s));
                    }
                }
                DiffOp::Ddc => {
                    for b in 0..k {
                        let e = dy(i) | dybar(b);
                        if let Some(s) = basis::merge_sign(e, *m) {
                            out.push((e | m, jet.h[i][b] * I_OVER_PI * s));
                        }
                    }
                }
            }
        }
    }
    FormValue::from_terms(out)
}

const C4: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];

fn shifted(y: &[C64], dir: usize, t: f64) -> Vec<C64> {
    let mut p = y.to_vec();
    if dir % 2 == 0 {
        p[dir / 2].re += t;
    } else {
        p[dir / 2].im += t;
    }
    p
}

/// Real directional derivatives along `x_i` (dir `2i`) and `u_i` (dir `2i+1`).
fn numeric_first(f: &dyn Fn(&[C64]) -> FormValue, y: &[C64], h: f64) -> Vec<FormValue> {
    (0..2 * y.len())
        .map(|dir| {
            let mut acc = FormValue::zero();
            for &(s, c) in &C4 {
                acc = &acc + &f(&shifted(y, dir, s * h)).scale(C64::new(c / (12.0 * h), 0.0));
            }
            acc
        })
        .collect()
}

/// `∂²/∂y_a∂ȳ_b` by nested fourth-order stencils.
fn numeric_mixed(f: &dyn Fn(&[C64]) -> FormValue, y: &[C64], h: f64) -> Vec<Vec<FormValue>> {
    let n = 2 * y.len();
    let mut real = vec![vec![FormValue::zero(); n]; n];
    let f0 = f(y);
    for s in 0..n {
        for t in s..n {
            let mut acc = FormValue::zero();
            if s == t {
                for &(o, c) in &[(-2.0, -1.0), (-1.0, 16.0), (1.0, 16.0), (2.0, -1.0)] {
                    acc = &acc + &f(&shifted(y, s, o * h)).scale(C64::new(c / (12.0 * h * h), 0.0));
                }
                acc = &acc + &f0.scale(C64::new(-30.0 / (12.0 * h * h), 0.0));
            } else {
                for &(a, ca) in &C4 {
                    let ys = shifted(y, s, a * h);
                    for &(b, cb) in &C4 {
                        let p = shifted(&ys, t, b * h);
                        acc = &acc + &f(&p).scale(C64::new(ca * cb / (144.0 * h * h), 0.0));
                    }
                }
            }
            real[t][s] = acc.clone();
            real[s][t] = acc;
        }
    }
    let k = y.len();
    let i = C64::new(0.0, 1.0);
    let mut out = vec![vec![FormValue::zero(); k]; k];
    for a in 0..k {
        for b in 0..k {
            let (xa, ua, xb, ub) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
            // ∂_a ∂̄_b = ¼ (∂x_a − i ∂u_a)(∂x_b + i ∂u_b)
            let v = &(&real[xa][xb] + &real[ua][ub]) + &(&real[xa][ub] - &real[ua][xb]).scale(i);
            out[a][b] = v.scale(C64::new(0.25, 0.0));
        }
    }
    out
}

fn stencil_hits_locus(f: &Form, y: &[C64], h: f64) -> bool {
    match f.singular_locus() {
        None => false,
        Some(SingularLocus::FiberOrigin { fiber_dim }) => {
            let r = y[..*fiber_dim].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            r <= 3.0 * h
        }
        Some(SingularLocus::Custom(pred)) => {
            let n = 2 * y.len();
            (0..n).any(|s| {
                [-2.0, -1.0, 1.0, 2.0].iter().any(|&a| {
                    let ys = shifted(y, s, a * h);
                    pred(&ys) || (0..n).any(|t| [-2.0, 2.0].iter().any(|&b| pred(&shifted(&ys, t, b * h))))
                })
            }) || pred(y)
        }
    }
}

fn numeric_derivative(f: &Form, op: DiffOp, y: &[C64], h: f64) -> Result<FormValue> {
    if stencil_hits_locus(f, y, h) {
        return Err(LabError::SingularStencil(format!("{y:?}")));
    }
    let k = f.k();
    let ev = |p: &[C64]| f.eval(p);
    let i = C64::new(0.0, 1.0);
    let mut out = FormValue::zero();
    match op {
        DiffOp::D | DiffOp::Dc => {
            let r = numeric_first(&ev, y, h);
            let c_dc = C64::new(0.0, -0.5 / std::f64::consts::PI);
            let (ch, ca) = if op == DiffOp::D { (C64::new(1.0, 0.0), C64::new(1.0, 0.0)) } else { (c_dc, -c_dc) };
            for a in 0..k {
                let d = (&r[2 * a] - &r[2 * a + 1].scale(i)).scale(C64::new(0.5, 0.0));
                let db = (&r[2 * a] + &r[2 * a + 1].scale(i)).scale(C64::new(0.5, 0.0));
                out = &out + &FormValue::monomial(dy(a), ch).wedge(&d);
                out = &out + &FormValue::monomial(dybar(a), ca).wedge(&db);
            }
        }
        DiffOp::Ddc => {
            let hm = numeric_mixed(&ev, y, h);
            for a in 0..k {
                for b in 0..k {
                    out = &out + &FormValue::monomial(dy(a) | dybar(b), I_OVER_PI).wedge(&hm[a][b]);
                }
            }
        }
    }
    Ok(out)
}

//! A catalog of explicit `(p,p)`-currents on the chart and the pairing `⟨T, 1_W Φ⟩`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::forms::{
    basis, dy, dybar, poly_field, pullback_value, DiffOp, Form, FormValue, JacobianPair, JetField, Monomial,
    Polynomial, SingularLocus,
};
use crate::geometry::{binomial, factorial, BaseDomain, LocalSetting, Metric, Tube};
use crate::integrate::{
    base_rule, gauss_legendre, integrate_ball, integrate_tube_radii, radial_segments, sphere_rule, Estimate, Method,
    QuadratureSpec, TensorBudget,
};
use crate::maps::{AdmissibleMap, MapKind};
use crate::C64;

/// `‖f‖^{2e} (ddᶜ‖f‖²)^a ∧ (ddᶜ log‖f‖²)^b` for a holomorphic polynomial map `f`.
#[derive(Debug, Clone)]
pub struct PshData {
    pub f: Vec<Polynomial>,
    pub e: usize,
    pub a: usize,
    pub b: usize,
    /// declared blow-up order near `{f = 0}` for the integrator
    pub singular_weight: f64,
}

#[derive(Debug, Clone)]
pub enum CurrentKind {
    Zero,
    SmoothForm(Form),
    /// `(ddᶜ log‖z‖²)^q`, Euclidean fiber norm
    AlphaPower { q: usize },
    /// `[L]` for the span of an orthonormal basis
    IntegrationLinear { basis: Vec<Vec<C64>> },
    PshLogNorm(PshData),
    Pushforward { map: AdmissibleMap, inner: Current },
    Dilated { lambda: C64, inner: Current },
    Regularized { inner: Current, eps: f64, form: Form },
}

#[derive(Debug)]
struct Node {
    k: usize,
    l: usize,
    p: usize,
    kind: CurrentKind,
    density: OnceLock<Form>,
}

/// An immutable `(p,p)`-current on `C^(k−l) × C^l`.
#[derive(Debug, Clone)]
pub struct Current(Arc<Node>);

/// Where a pairing is taken.
#[derive(Debug, Clone)]
pub enum Region {
    Tube { setting: LocalSetting, tube: Tube },
    Ball { center: Vec<C64>, radius: f64 },
}

impl Current {
    fn node(k: usize, l: usize, p: usize, kind: CurrentKind) -> Self {
        Current(Arc::new(Node { k, l, p, kind, density: OnceLock::new() }))
    }

    pub fn k(&self) -> usize {
        self.0.k
    }

    pub fn l(&self) -> usize {
        self.0.l
    }

    pub fn m(&self) -> usize {
        self.0.k - self.0.l
    }

    pub fn p(&self) -> usize {
        self.0.p
    }

    pub fn kind(&self) -> &CurrentKind {
        &self.0.kind
    }

    pub fn tag(&self) -> &'static str {
        match self.kind() {
            CurrentKind::Zero => "zero",
            CurrentKind::SmoothForm(_) => "smooth_form",
            CurrentKind::AlphaPower { .. } => "alpha_power",
            CurrentKind::IntegrationLinear { .. } => "integration_linear",
            CurrentKind::PshLogNorm(_) => "psh_log_norm",
            CurrentKind::Pushforward { .. } => "pushforward",
            CurrentKind::Dilated { .. } => "dilated",
            CurrentKind::Regularized { .. } => "regularized",
        }
    }

    pub fn zero(k: usize, l: usize, p: usize) -> Self {
        Self::node(k, l, p, CurrentKind::Zero)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind(), CurrentKind::Zero)
    }

    pub fn smooth(l: usize, form: Form) -> Result<Self> {
        let k = form.k();
        if form.degree() % 2 == 1 {
            return Err(LabError::Invalid(format!("a smooth current needs even degree, got {}", form.degree())));
        }
        if let Some((a, b)) = form.bidegree() {
            if a != b {
                return Err(LabError::Invalid(format!("a smooth current needs bidegree (p,p), got ({a},{b})")));
            }
        }
        check_dims(k, l)?;
        Ok(Self::node(k, l, form.degree() / 2, CurrentKind::SmoothForm(form)))
    }

    pub fn alpha_power(k: usize, l: usize, q: usize) -> Result<Self> {
        check_dims(k, l)?;
        if q > k - l {
            return Err(LabError::Invalid(format!("alpha power {q} exceeds the fiber dimension {}", k - l)));
        }
        Ok(Self::node(k, l, q, CurrentKind::AlphaPower { q }))
    }

    /// Integration on the complex span of `basis` (dimension `k − p`).
    pub fn integration_linear(k: usize, l: usize, basis: &[Vec<C64>]) -> Result<Self> {
        check_dims(k, l)?;
        if basis.iter().any(|v| v.len() != k) {
            return Err(LabError::Invalid(format!("basis vectors must have length {k}")));
        }
        let ortho = orthonormalize(basis)?;
        let d = ortho.len();
        Ok(Self::node(k, l, k - d, CurrentKind::IntegrationLinear { basis: ortho }))
    }

    pub fn psh_log_norm(k: usize, l: usize, data: PshData) -> Result<Self> {
        check_dims(k, l)?;
        if data.f.is_empty() || data.f.iter().any(|f| !f.is_holomorphic() || f.n > k) {
            return Err(LabError::Invalid("psh data needs a nonempty holomorphic polynomial map".into()));
        }
        let p = data.a + data.b;
        if p > k {
            return Err(LabError::Invalid(format!("bidegree {p} exceeds {k}")));
        }
        let mut data = data;
        data.f.iter_mut().for_each(|f| f.n = k);
        Ok(Self::node(k, l, p, CurrentKind::PshLogNorm(data)))
    }

    /// Whether the current has a pointwise density form off its singular locus that represents it.
    pub fn is_absolutely_continuous(&self) -> bool {
        match self.kind() {
            CurrentKind::IntegrationLinear { .. } => false,
            CurrentKind::AlphaPower { q } => *q < self.m(),
            CurrentKind::Pushforward { inner, .. } | CurrentKind::Dilated { inner, .. } => inner.is_absolutely_continuous(),
            _ => true,
        }
    }

    /// `(ddᶜ log‖z‖²)^(k−l)` and `[V]` are fixed by dilations and admissible maps.
    pub fn is_carried_by_v(&self) -> bool {
        let m = self.m();
        match self.kind() {
            CurrentKind::AlphaPower { q } => *q == m,
            CurrentKind::IntegrationLinear { basis } => {
                basis.len() == self.l() && basis.iter().all(|v| v[..m].iter().all(|c| c.norm() == 0.0))
            }
            _ => false,
        }
    }

    /// `[V]` on this chart.
    pub fn zero_section(&self) -> Result<Current> {
        let (k, m) = (self.k(), self.m());
        let basis: Vec<Vec<C64>> = (m..k)
            .map(|i| (0..k).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
            .collect();
        Current::integration_linear(k, self.l(), &basis)
    }

    /// `s` such that `‖z‖^s` times the density stays bounded near the singular locus.
    pub fn singular_weight(&self) -> f64 {
        match self.kind() {
            CurrentKind::AlphaPower { q } => 2.0 * *q as f64,
            CurrentKind::PshLogNorm(d) => d.singular_weight,
            CurrentKind::Pushforward { inner, .. } | CurrentKind::Dilated { inner, .. } => inner.singular_weight(),
            _ => 0.0,
        }
    }

    fn alpha_form(&self, q: usize) -> Form {
        let k = self.k();
        let m = self.m();
        let fiber = (1u32 << m) - 1;
        let lf = Arc::new(JetField::new(k, move |y| {
            let mut j = crate::forms::Jet::constant(k, C64::new(0.0, 0.0));
            for i in 0..m {
                j.v += y[i].norm_sqr();
                j.d[i] = y[i].conj();
                j.db[i] = y[i];
                j.h[i][i] = C64::new(1.0, 0.0);
            }
            j.ln()
        }));
        Form::ddc_of_potential(k, lf, fiber, fiber)
            .with_singular(SingularLocus::FiberOrigin { fiber_dim: m })
            .power(q)
    }

    fn psh_form(&self, d: &PshData) -> Form {
        let k = self.k();
        let u = d.f.iter().fold(Polynomial::zero(k), |acc, f| acc.add(&f.mul(&f.conj())));
        let all = basis::full_mask(k) & ((1 << k) - 1);
        let ddc_u = Form::ddc_of_potential(k, poly_field(u.clone()), all, all);
        let uu = u.clone();
        let log_u = Arc::new(JetField::new(k, move |y| uu.jet(y).ln()));
        let ddc_log = Form::ddc_of_potential(k, log_u, all, all);
        let mut f = ddc_u.power(d.a).wedge(&ddc_log.power(d.b));
        if d.e > 0 {
            f = f.mul_field(poly_field(u.pow(d.e)));
        }
        f
    }

    /// The density form of an absolutely continuous current at `y`.
    pub fn density_form(&self, y: &[C64]) -> Result<FormValue> {
        match self.kind() {
            CurrentKind::Zero => Ok(FormValue::zero()),
            CurrentKind::SmoothForm(f) => Ok(f.eval(y)),
            CurrentKind::Regularized { form, .. } => Ok(form.eval(y)),
            CurrentKind::AlphaPower { q } => Ok(self.cached_form(|| self.alpha_form(*q)).eval(y)),
            CurrentKind::PshLogNorm(d) => Ok(self.cached_form(|| self.psh_form(d)).eval(y)),
            CurrentKind::Dilated { lambda, inner } => {
                // (A_λ)_* T = (A_{1/λ})^* T
                let inv = AdmissibleMap::dilation(self.k(), self.l(), C64::new(1.0, 0.0) / lambda)?;
                let x = inv.apply_coords(y);
                Ok(pullback_value(&inv.jacobian_coords(y), &inner.density_form(&x)?))
            }
            CurrentKind::Pushforward { map, inner } => {
                let x = map
                    .inverse_coords(y)
                    .map_err(|e| LabError::NotInvertibleOnRegion(format!("{e} at {y:?}")))?;
                let jinv = map
                    .jacobian_coords(&x)
                    .inverse()
                    .ok_or_else(|| LabError::NotInvertibleOnRegion(format!("singular Jacobian at {x:?}")))?;
                Ok(pullback_value(&jinv, &inner.density_form(&x)?))
            }
            CurrentKind::IntegrationLinear { .. } => {
                Err(LabError::UnsupportedKind("integration currents have no pointwise density".into()))
            }
        }
    }

    fn cached_form(&self, build: impl FnOnce() -> Form) -> Form {
        self.0.density.get_or_init(build).clone()
    }

    /// The smooth form standing for the current, when there is one.
    pub fn as_form(&self) -> Option<Form> {
        match self.kind() {
            CurrentKind::SmoothForm(f) | CurrentKind::Regularized { form: f, .. } => Some(f.clone()),
            CurrentKind::AlphaPower { q } if *q < self.m() => Some(self.alpha_form(*q)),
            CurrentKind::PshLogNorm(d) => Some(self.psh_form(d)),
            _ => None,
        }
    }
}

fn check_dims(k: usize, l: usize) -> Result<()> {
    if l >= k || k > crate::forms::MAX_DIM {
        return Err(LabError::Invalid(format!("need 0 <= l < k <= {}, got k={k}, l={l}", crate::forms::MAX_DIM)));
    }
    Ok(())
}

fn orthonormalize(basis: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
    let mut out: Vec<Vec<C64>> = Vec::new();
    for v in basis {
        let mut u = v.clone();
        for _ in 0..2 {
            for e in &out {
                let c: C64 = e.iter().zip(&u).map(|(a, b)| a.conj() * b).sum();
                u.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let n0 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 1e-10 * n0.max(1e-300)) {
            return Err(LabError::Invalid("basis vectors are linearly dependent".into()));
        }
        out.push(u.into_iter().map(|c| c / n).collect());
    }
    Ok(out)
}

/// `ddᶜ T` for the kinds that have an explicit one.
pub fn ddc_of(t: &Current) -> Result<Current> {
    let (k, l, p) = (t.k(), t.l(), t.p());
    match t.kind() {
        CurrentKind::Zero | CurrentKind::AlphaPower { .. } | CurrentKind::IntegrationLinear { .. } => {
            Ok(Current::zero(k, l, p + 1))
        }
        CurrentKind::SmoothForm(f) | CurrentKind::Regularized { form: f, .. } => {
            Current::smooth(l, f.derivative(DiffOp::Ddc))
        }
        CurrentKind::PshLogNorm(d) => match d.e {
            0 => Ok(Current::zero(k, l, p + 1)),
            1 => {
                // dropping the ‖f‖² factor loses its vanishing order along V
                let fiber = (1u32 << t.m()) - 1;
                let ord = d.f.iter().filter_map(|f| f.min_degree_in(fiber)).min().unwrap_or(0);
                let weight = (d.singular_weight + 2.0 * ord as f64).min(2.0 * t.m() as f64 - 1.0);
                Current::psh_log_norm(k, l, PshData { e: 0, a: d.a + 1, singular_weight: weight, ..d.clone() })
            }
            _ => Err(LabError::UnsupportedKind(format!("ddc of |f|^{} powers is outside the catalog", 2 * d.e))),
        },
        CurrentKind::Dilated { lambda, inner } => dilate(*lambda, &ddc_of(inner)?),
        CurrentKind::Pushforward { map, inner } => {
            if !map.is_holomorphic() {
                return Err(LabError::UnsupportedKind("ddc does not commute with a non-holomorphic pushforward".into()));
            }
            pushforward(map, &ddc_of(inner)?)
        }
    }
}

/// `τ_* T`.
pub fn pushforward(map: &AdmissibleMap, t: &Current) -> Result<Current> {
    if map.k() != t.k() || map.l() != t.l() {
        return Err(LabError::Invalid("map and current live on different charts".into()));
    }
    // admissible maps fix V pointwise
    if map.is_identity() || t.is_zero() || t.is_carried_by_v() {
        return Ok(t.clone());
    }
    if let MapKind::Dilation(lambda) = map.kind() {
        return dilate(*lambda, t);
    }
    if let CurrentKind::Pushforward { map: inner_map, inner } = t.kind() {
        let comp = AdmissibleMap::composite(vec![map.clone(), inner_map.clone()])?;
        return Ok(Current::node(t.k(), t.l(), t.p(), CurrentKind::Pushforward { map: comp, inner: inner.clone() }));
    }
    Ok(Current::node(t.k(), t.l(), t.p(), CurrentKind::Pushforward { map: map.clone(), inner: t.clone() }))
}

/// `(A_λ)_* T`.
pub fn dilate(lambda: C64, t: &Current) -> Result<Current> {
    if lambda.norm() == 0.0 {
        return Err(LabError::ZeroLambda);
    }
    if lambda == C64::new(1.0, 0.0) || t.is_carried_by_v() {
        return Ok(t.clone());
    }
    match t.kind() {
        CurrentKind::Zero => Ok(t.clone()),
        CurrentKind::Dilated { lambda: mu, inner } => dilate(lambda * mu, inner),
        _ => Ok(Current::node(t.k(), t.l(), t.p(), CurrentKind::Dilated { lambda, inner: t.clone() })),
    }
}

/// The image `A_λ L` of a linear integration current.
pub fn dilate_linear(lambda: C64, t: &Current) -> Result<Current> {
    match t.kind() {
        CurrentKind::IntegrationLinear { basis } => {
            let m = t.m();
            let img: Vec<Vec<C64>> = basis
                .iter()
                .map(|v| v.iter().enumerate().map(|(i, c)| if i < m { c * lambda } else { *c }).collect())
                .collect();
            Current::integration_linear(t.k(), t.l(), &img)
        }
        _ => Err(LabError::UnsupportedKind(format!("{} is not a linear integration current", t.tag()))),
    }
}

/// A smooth current converging to `T` as `ε → 0`.
pub fn regularize(t: &Current, eps: f64) -> Result<Current> {
    if !(eps > 0.0) {
        return Err(LabError::Invalid(format!("regularization scale {eps} must be positive")));
    }
    let (k, l, p) = (t.k(), t.l(), t.p());
    let form = match t.kind() {
        CurrentKind::AlphaPower { q } => {
            let m = t.m();
            let e2 = eps * eps;
            let all = (1u32 << k) - 1;
            let lf = Arc::new(JetField::new(k, move |y| {
                let mut j = crate::forms::Jet::constant(k, C64::new(e2, 0.0));
                for i in 0..m {
                    j.v += y[i].norm_sqr();
                    j.d[i] = y[i].conj();
                    j.db[i] = y[i];
                    j.h[i][i] = C64::new(1.0, 0.0);
                }
                j.ln()
            }));
            Form::ddc_of_potential(k, lf, all, all).power(*q)
        }
        CurrentKind::SmoothForm(f) => {
            let comps = f.as_polynomial().ok_or_else(|| {
                LabError::UnsupportedKind("fiberwise mollification needs polynomial coefficients".into())
            })?;
            let m = t.m();
            let moll: Vec<_> = comps.into_iter().map(|(mask, c)| (mask, mollify(&c, m, eps))).collect();
            Form::polynomial(k, moll)?
        }
        _ => return Err(LabError::UnsupportedKind(format!("regularization of {} currents", t.tag()))),
    };
    Ok(Current::node(k, l, p, CurrentKind::Regularized { inner: t.clone(), eps, form }))
}

/// Radial moments `E|x|^{2n}` of the normalized bump `exp(−1/(1−|x|²))` on the unit ball of `C^m`.
pub fn bump_moment(m: usize, n: usize) -> f64 {
    let gl = gauss_legendre(96);
    let integ = |pow: usize| -> f64 {
        gl.iter()
            .map(|&(u, w)| {
                let e = if u < 1.0 { (-1.0 / (1.0 - u)).exp() } else { 0.0 };
                w * u.powi(pow as i32) * e
            })
            .sum()
    };
    integ(n + m - 1) / integ(m - 1)
}

/// `E[P(z − εx, w)]` for `x` distributed by the bump on the fiber ball.
pub fn mollify(poly: &Polynomial, m: usize, eps: f64) -> Polynomial {
    let n = poly.n;
    let mut out = Polynomial::zero(n);
    for (mono, c) in &poly.terms {
        // expand each fiber factor; only balanced x-exponents survive
        let mut partial: Vec<(Monomial, C64, [usize; crate::forms::MAX_DIM])> = vec![(*mono, *c, [0; crate::forms::MAX_DIM])];
        for i in 0..m {
            let (a, b) = (mono.a[i] as usize, mono.b[i] as usize);
            let mut next = Vec::new();
            for (mo, cc, used) in &partial {
                for s in 0..=a.min(b) {
                    let mut mm = *mo;
                    mm.a[i] = (a - s) as u8;
                    mm.b[i] = (b - s) as u8;
                    let coef = binomial(a, s) * binomial(b, s) * eps.powi(2 * s as i32);
                    let mut u = *used;
                    u[i] = s;
                    next.push((mm, cc * coef, u));
                }
            }
            partial = next;
        }
        for (mo, cc, used) in partial {
            let tot: usize = used.iter().sum();
            let sphere = factorial(m - 1) * used.iter().map(|&s| factorial(s)).product::<f64>() / factorial(m - 1 + tot);
            let e = if tot == 0 { 1.0 } else { bump_moment(m, tot) * sphere };
            out = out.add(&Polynomial { n, terms: vec![(mo, cc * e)] });
        }
    }
    out.normalized()
}

fn check_test_degree(t: &Current, phi: &Form) -> Result<()> {
    let want = 2 * (t.k() - t.p());
    if phi.degree() != want || phi.k() != t.k() {
        return Err(LabError::ArityMismatch { expected: want, got: phi.degree() });
    }
    Ok(())
}

/// `⟨T, 1_region Φ⟩`.
pub fn pair(t: &Current, region: &Region, phi: &Form, quad: &QuadratureSpec) -> Result<Estimate> {
    match region {
        Region::Tube { setting, tube } => {
            if tube.outer <= tube.inner {
                check_test_degree(t, phi)?;
                return Ok(Estimate::zero());
            }
            Ok(pair_tube_radii(t, setting, &tube.base, tube.inner, &[tube.outer], phi, quad)?[0])
        }
        Region::Ball { center, radius } => pair_ball(t, center, *radius, phi, quad),
    }
}

fn with_weight(quad: &QuadratureSpec, s: f64) -> QuadratureSpec {
    let mut q = *quad;
    q.singular_weight = q.singular_weight.max(s);
    q
}

/// `⟨T, 1_{Tube(B, inner, r)} Φ⟩` for every `r` in `radii` (increasing), on shared nodes.
pub fn pair_tube_radii(
    t: &Current,
    setting: &LocalSetting,
    base: &BaseDomain,
    inner: f64,
    radii: &[f64],
    phi: &Form,
    quad: &QuadratureSpec,
) -> Result<Vec<Estimate>> {
    check_test_degree(t, phi)?;
    if setting.k != t.k() || setting.l != t.l() {
        return Err(LabError::Invalid("current and setting disagree on (k, l)".into()));
    }
    match t.kind() {
        CurrentKind::Zero => Ok(vec![Estimate::zero(); radii.len()]),
        CurrentKind::Dilated { lambda, inner: tin } => {
            let a = lambda.norm();
            let map = AdmissibleMap::dilation(t.k(), t.l(), *lambda)?;
            let rr: Vec<f64> = radii.iter().map(|r| r / a).collect();
            pair_tube_radii(tin, setting, base, inner / a, &rr, &phi.pullback(&map), quad)
        }
        CurrentKind::IntegrationLinear { basis } => linear_tube(t, basis, setting, base, inner, radii, phi, quad),
        CurrentKind::Pushforward { inner: tin, .. } if !tin.is_absolutely_continuous() => Err(LabError::UnsupportedKind(
            "pushforward of an integration current by a non-linear map".into(),
        )),
        CurrentKind::AlphaPower { q } if *q == t.m() && inner == 0.0 => {
            let v = t.zero_section()?;
            let vals = pair_tube_radii(&v, setting, base, inner, radii, phi, quad)?;
            Ok(vals.into_iter().map(|e| e.scale(2f64.powi(*q as i32))).collect())
        }
        // the top power vanishes off the zero section
        CurrentKind::AlphaPower { q } if *q == t.m() => Ok(vec![Estimate::zero(); radii.len()]),
        _ => {
            let k = t.k();
            let q = with_weight(quad, t.singular_weight());
            let f = |y: &[C64]| Ok(t.density_form(y)?.pair_density(&phi.eval(y), k));
            integrate_tube_radii(setting, &f, base, inner, radii, &q)
        }
    }
}

fn pair_ball(t: &Current, center: &[C64], radius: f64, phi: &Form, quad: &QuadratureSpec) -> Result<Estimate> {
    check_test_degree(t, phi)?;
    let k = t.k();
    match t.kind() {
        CurrentKind::Zero => Ok(Estimate::zero()),
        CurrentKind::IntegrationLinear { basis } => linear_ball(basis, k, center, radius, phi, quad),
        CurrentKind::Dilated { lambda, inner } if !inner.is_absolutely_continuous() => {
            pair_ball(&dilate_linear(*lambda, inner)?, center, radius, phi, quad)
        }
        CurrentKind::Pushforward { inner, .. } if !inner.is_absolutely_continuous() => Err(LabError::UnsupportedKind(
            "pushforward of an integration current by a non-linear map".into(),
        )),
        CurrentKind::AlphaPower { q } if *q == t.m() => {
            Ok(pair_ball(&t.zero_section()?, center, radius, phi, quad)?.scale(2f64.powi(*q as i32)))
        }
        _ => {
            let q = with_weight(quad, t.singular_weight());
            let f = |y: &[C64]| Ok(t.density_form(y)?.pair_density(&phi.eval(y), k));
            integrate_ball(k, &f, center, radius, &q)
        }
    }
}

/// `⟨T, 1_region τ*Φ⟩` over a region given by an indicator on the pulled-back side, used as a
/// second code path for `⟨τ_*T, Φ⟩`.
pub fn pair_pullback_indicator(
    t: &Current,
    map: &AdmissibleMap,
    setting: &LocalSetting,
    tube: &Tube,
    enclosing: &Tube,
    phi: &Form,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    check_test_degree(t, phi)?;
    let k = t.k();
    let pulled = phi.pullback(map);
    let q = with_weight(quad, t.singular_weight());
    let f = |x: &[C64]| {
        let y = map.apply_coords(x);
        let cp = crate::forms::ChartPoint::from_coords(&y, setting.m());
        if !setting.tube_membership(tube, &cp) {
            return Ok(C64::new(0.0, 0.0));
        }
        Ok(t.density_form(x)?.pair_density(&pulled.eval(x), k))
    };
    integrate_tube_radii(setting, &f, &enclosing.base, enclosing.inner, &[enclosing.outer], &q).map(|v| v[0])
}

/// Density of `Φ|_L` on the coordinates `s ↦ E s`.
fn restricted_density(e: &JacobianPair, y: &[C64], phi: &Form) -> C64 {
    pullback_value(e, &phi.eval(y)).lebesgue_density(e.cols)
}

fn tensor_budget(quad: &QuadratureSpec) -> TensorBudget {
    match quad.method {
        Method::TensorPolar(b) => b,
        Method::StratifiedMc(_) => TensorBudget::default(),
    }
}

fn linear_ball(basis: &[Vec<C64>], k: usize, center: &[C64], radius: f64, phi: &Form, quad: &QuadratureSpec) -> Result<Estimate> {
    let d = basis.len();
    // L ∩ B(c, r) is the ball about the projection of c
    let s0: Vec<C64> = basis.iter().map(|e| e.iter().zip(center).map(|(a, b)| a.conj() * b).sum()).collect();
    let proj: Vec<C64> = (0..k).map(|i| basis.iter().zip(&s0).map(|(e, s)| e[i] * s).sum()).collect();
    let dist2: f64 = proj.iter().zip(center).map(|(a, b)| (a - b).norm_sqr()).sum();
    let rad2 = radius * radius - dist2;
    if rad2 <= 0.0 {
        return Ok(Estimate::zero());
    }
    let e = embedding(basis, k);
    let b = tensor_budget(quad);
    let run = |n: usize| -> (C64, f64, usize) {
        let nodes = base_rule(&BaseDomain::Ball { center: s0.clone(), radius: rad2.sqrt() }, n);
        let mut acc = C64::new(0.0, 0.0);
        let mut abs = 0.0;
        for (s, w) in &nodes {
            let y: Vec<C64> = (0..k).map(|i| basis.iter().zip(s).map(|(v, c)| v[i] * c).sum()).collect();
            let t = restricted_density(&e, &y, phi) * *w;
            acc += t;
            abs += t.norm();
        }
        (acc, abs, nodes.len())
    };
    if d == 0 {
        let v = if radius > dist2.sqrt() { phi.eval(&vec![C64::new(0.0, 0.0); k]).get(0) } else { C64::new(0.0, 0.0) };
        return Ok(Estimate::exact(v));
    }
    let (hi, abs, n1) = run(b.base.max(4));
    let (lo, _, n2) = run((b.base - b.base / 4).max(4));
    Ok(Estimate { value: hi, error: (hi - lo).norm() + 1e-14 * abs, evaluations: n1 + n2 })
}

fn embedding(basis: &[Vec<C64>], k: usize) -> JacobianPair {
    let d = basis.len();
    let mut j = vec![C64::new(0.0, 0.0); k * d];
    for (c, v) in basis.iter().enumerate() {
        for r in 0..k {
            j[r * d + c] = v[r];
        }
    }
    JacobianPair::holomorphic(k, d, j)
}

/// `L = (L ∩ V) ⊕ L′` with orthonormal bases; returns `(E_v, E_t)`.
fn split_along_v(basis: &[Vec<C64>], m: usize) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
    let d = basis.len();
    if d == 0 {
        return (vec![], vec![]);
    }
    let k = basis[0].len();
    let z = DMatrix::<C64>::from_fn(m, d, |r, c| basis[c][r]);
    // right singular vectors of the fiber part
    let zz = z.adjoint() * &z;
    let eig = zz.symmetric_eigen();
    let mut ev = Vec::new();
    let mut et = Vec::new();
    for i in 0..d {
        let col = eig.eigenvectors.column(i);
        let v: Vec<C64> = (0..k).map(|r| (0..d).map(|c| basis[c][r] * col[c]).sum()).collect();
        if eig.eigenvalues[i].abs() < 1e-20 {
            ev.push(v);
        } else {
            et.push(v);
        }
    }
    (ev, et)
}

#[allow(clippy::too_many_arguments)]
fn linear_tube(
    t: &Current,
    basis: &[Vec<C64>],
    setting: &LocalSetting,
    base: &BaseDomain,
    inner: f64,
    radii: &[f64],
    phi: &Form,
    quad: &QuadratureSpec,
) -> Result<Vec<Estimate>> {
    let k = t.k();
    let m = t.m();
    let amat = match &setting.metric {
        Metric::Identity | Metric::Constant(_) => setting.metric_matrix(&vec![C64::new(0.0, 0.0); setting.l]),
        Metric::Matrix(_) if setting.metric.is_constant() => setting.metric_matrix(&vec![C64::new(0.0, 0.0); setting.l]),
        _ => {
            return Err(LabError::UnsupportedKind("integration currents over tubes need a constant fiber metric".into()))
        }
    };
    let (ev, et) = split_along_v(basis, m);
    let (c, dt) = (ev.len(), et.len());
    if c > 0 && !matches!(base, BaseDomain::Ball { .. }) {
        return Err(LabError::UnsupportedKind("slices of L ∩ V need a ball base".into()));
    }
    let mut full = ev.clone();
    full.extend(et.iter().cloned());
    let e = embedding(&full, k);
    // η = R s_t with A·Z_t = Q R
    let amat = DMatrix::from_row_slice(m, m, &amat);
    let zt = DMatrix::<C64>::from_fn(m, dt, |r, cc| et[cc][r]);
    let (rinv, jac) = if dt > 0 {
        let qr = (amat * zt).qr();
        let r = qr.r();
        let det = r.determinant().norm_sqr();
        (r.try_inverse().ok_or_else(|| LabError::Invalid("degenerate transverse part".into()))?, 1.0 / det)
    } else {
        (DMatrix::<C64>::zeros(0, 0), 1.0)
    };
    let (bc, br) = match base {
        BaseDomain::Ball { center, radius } => (center.clone(), *radius),
        _ => (vec![], 0.0),
    };
    let wv: Vec<Vec<C64>> = ev.iter().map(|v| v[m..].to_vec()).collect();
    let b = tensor_budget(quad);
    let valid: Vec<f64> = radii.iter().copied().filter(|r| *r > inner).collect();
    let mut out = vec![Estimate::zero(); radii.len()];
    if valid.is_empty() || (dt == 0 && inner > 0.0) {
        return Ok(out);
    }
    let point_density = |yt: &[C64], wscale: f64, acc: &mut C64, abs: &mut f64, n: usize| -> Result<usize> {
        // slice in s_v
        let u: Vec<C64> = if bc.is_empty() { vec![] } else { yt[m..].iter().zip(&bc).map(|(a, c)| a - c).collect() };
        if c == 0 {
            if base.contains(&yt[m..]) {
                let v = restricted_density(&e, yt, phi) * wscale;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(LabError::NonfiniteSample(format!("{v} at {yt:?}")));
                }
                *acc += v;
                *abs += v.norm();
            }
            return Ok(1);
        }
        let proj: Vec<C64> = wv.iter().map(|w| w.iter().zip(&u).map(|(a, b)| a.conj() * b).sum()).collect();
        let perp2 = u.iter().map(|c| c.norm_sqr()).sum::<f64>() - proj.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let rad2 = br * br - perp2;
        if rad2 <= 0.0 {
            return Ok(0);
        }
        let center: Vec<C64> = proj.iter().map(|c| -c).collect();
        let nodes = base_rule(&BaseDomain::Ball { center, radius: rad2.sqrt() }, n);
        for (sv, w) in &nodes {
            let y: Vec<C64> = (0..k).map(|i| yt[i] + ev.iter().zip(sv).map(|(v, s)| v[i] * s).sum::<C64>()).collect();
            let v = restricted_density(&e, &y, phi) * (wscale * w);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(LabError::NonfiniteSample(format!("{v} at {y:?}")));
            }
            *acc += v;
            *abs += v.norm();
        }
        Ok(nodes.len())
    };
    let run = |bb: &TensorBudget| -> Result<(Vec<C64>, f64, usize)> {
        if dt == 0 {
            // L ⊂ V: the slice does not depend on the radius once it is positive
            let mut acc = C64::new(0.0, 0.0);
            let mut abs = 0.0;
            let n = point_density(&vec![C64::new(0.0, 0.0); k], 1.0, &mut acc, &mut abs, bb.base)?;
            let fill = if inner == 0.0 { acc } else { C64::new(0.0, 0.0) };
            let v = vec![fill; valid.len()];
            return Ok((v, abs, n));
        }
        let mut bounds = vec![inner];
        bounds.extend_from_slice(&valid);
        let segs = radial_segments(&bounds, dt, 2.0 * dt as f64, bb.panels, bb.radial);
        let sphere = sphere_rule(dt, bb.angular_for(dt));
        let mut sums = vec![C64::new(0.0, 0.0); segs.len()];
        let mut abs = 0.0;
        let mut evals = 0;
        for (si, seg) in segs.iter().enumerate() {
            for &(rho, wr) in seg {
                for (th, ws) in &sphere {
                    let st: Vec<C64> = (0..dt).map(|i| (0..dt).map(|j| rinv[(i, j)] * th[j] * rho).sum()).collect();
                    let yt: Vec<C64> = (0..k).map(|i| et.iter().zip(&st).map(|(v, s)| v[i] * s).sum()).collect();
                    evals += point_density(&yt, wr * ws * jac, &mut sums[si], &mut abs, bb.base)?;
                }
            }
        }
        let mut acc = C64::new(0.0, 0.0);
        let cum = sums[1..]
            .iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect();
        Ok((cum, abs, evals))
    };
    let (hi, abs, n1) = run(&b)?;
    let (lo, _, n2) = run(&b.reduced(dt))?;
    let mut j = 0;
    for (i, r) in radii.iter().enumerate() {
        if *r > inner {
            out[i] = Estimate { value: hi[j], error: (hi[j] - lo[j]).norm() + 1e-14 * abs, evaluations: n1 + n2 };
            j += 1;
        }
    }
    Ok(out)
}

/// `ω_0 = (i/2)∂∂̄‖y‖²` on `C^k`, the form of the trace measure.
pub fn euclidean_kahler(k: usize) -> Form {
    let terms = (0..k).map(|i| (dy(i) | dybar(i), C64::new(0.0, 0.5))).collect();
    Form::constant(k, FormValue::from_terms(terms)).unwrap()
}

/// Mass of the unit ball of a complex `d`-plane for `ω_0^d / d!`.
pub fn plane_mass(d: usize, r: f64) -> f64 {
    PI.powi(d as i32) * r.powi(2 * d as i32) / factorial(d)
}

//! Named inputs shared by configs and the verification suite.

use lelong_core::currents::{Current, PshData};
use lelong_core::forms::{dy, dybar, Form, Polynomial};
use lelong_core::geometry::LocalSetting;
use lelong_core::jensen::{catalog_full_bidegree, catalog_generic};
use lelong_core::C64;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

/// Names accepted by `{"kind": "smooth", "catalog": ...}`.
pub const SMOOTH_NAMES: &[&str] = &[
    "random-positive",
    "beta",
    "omega",
    "beta-plus-omega",
    "omega-w",
    "radial",
    "radial-squared",
    "mixed-modulus",
    "real-part",
    "fiber-line",
    "tangential-weight",
    "fiber-plus-base",
];

/// `Σ_i (1 + |P_i|²)(i/π) dy_i∧dȳ_i` with small random linear `P_i`.
pub fn random_positive_form(k: usize, seed: u64) -> Form {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let comps = (0..k)
        .map(|i| {
            let mut p = Polynomial::zero(k);
            for v in 0..k {
                let a = C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                p = p.add(&Polynomial::var(k, v).scale(a));
            }
            let coef = Polynomial::constant(k, C64::new(1.0, 0.0)).add(&p.mul(&p.conj()));
            (dy(i) | dybar(i), coef.scale(C64::new(0.0, 1.0 / PI)))
        })
        .collect();
    Form::polynomial(k, comps).expect("pure (1,1) components")
}

/// `‖z‖² α`: psh, not pluriharmonic, with `ddᶜ` known in closed form.
pub fn norm2_alpha(k: usize, l: usize) -> lelong_core::Result<Current> {
    let f = (0..k - l).map(|i| Polynomial::var(k, i)).collect();
    Current::psh_log_norm(k, l, PshData { f, e: 1, a: 0, b: 1, singular_weight: 0.0 })
}

/// The smooth form registered under `name`, or `None` for an unknown or inapplicable name.
pub fn smooth_form(setting: &LocalSetting, name: &str, seed: u64) -> Option<Form> {
    match name {
        "random-positive" => Some(random_positive_form(setting.k, seed)),
        "beta" => Some(setting.beta()),
        "omega" => Some(setting.omega()),
        "beta-plus-omega" => setting.beta().add(&setting.omega()).ok(),
        _ => {
            let full = catalog_full_bidegree(setting).ok().unwrap_or_default();
            let generic = catalog_generic(setting).ok().unwrap_or_default();
            full.into_iter().chain(generic).find(|(n, _)| *n == name).map(|(_, f)| f)
        }
    }
}

//! 3/2 model: dX = (b - a X) X dt + sigma X^{3/2} dB, discount rate q X.
//! The eigenpair is (b eta, x^{-eta}); the eigen-measure dynamics keep the
//! 3/2 form with speed alpha = a + sigma^2 eta, and the power moments of
//! that process are closed form in terms of Kummer's function, which makes
//! the price and its state derivatives closed form as well.

use crate::catalog::PayoffKind;
use crate::diffusion::{build_chain, DecompositionChain, Eigenpair, Quadruple};
use crate::field::{ScalarField, StateInterval};
use crate::special::{kummer_m, ln_gamma};
use crate::{Error, Result};

use super::ModelParams;

/// Parameters of the 3/2 model with linear discount q x.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeHalvesParams {
    /// Linear mean-reversion coefficient (a > -sigma^2/2).
    pub a: f64,
    /// Drift level (> 0).
    pub b: f64,
    /// Volatility coefficient (> 0).
    pub sigma: f64,
    /// Discount slope (> 0).
    pub q: f64,
    /// Initial state (> 0).
    pub xi: f64,
}

impl ThreeHalvesParams {
    pub fn new(a: f64, b: f64, sigma: f64, q: f64, xi: f64) -> Result<Self> {
        let p = ThreeHalvesParams { a, b, sigma, q, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn canonical() -> Self {
        ThreeHalvesParams {
            a: 1.0,
            b: 1.0,
            sigma: 1.0,
            q: 1.0,
            xi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validation_errors()
            .into_iter()
            .next()
            .map_or(Ok(()), Err)
    }

    pub fn validation_errors(&self) -> Vec<Error> {
        let mut errs = Vec::new();
        if !(self.b > 0.0) {
            errs.push(Error::parameter(
                "drift-level",
                format!("b must be positive, got {}", self.b),
            ));
        }
        if !(self.sigma > 0.0) {
            errs.push(Error::parameter(
                "volatility",
                format!("sigma must be positive, got {}", self.sigma),
            ));
        }
        if !(self.a > -0.5 * self.sigma * self.sigma) {
            errs.push(Error::parameter(
                "domain-violation",
                format!(
                    "a > -sigma^2/2 required, got a = {}, -sigma^2/2 = {}",
                    self.a,
                    -0.5 * self.sigma * self.sigma
                ),
            ));
        }
        if !(self.q > 0.0) {
            errs.push(Error::parameter(
                "discount-slope",
                format!("q must be positive, got {}", self.q),
            ));
        }
        if !(self.xi > 0.0) {
            errs.push(Error::parameter(
                "initial-state",
                format!("xi must be positive, got {}", self.xi),
            ));
        }
        errs
    }

    /// eta = (sqrt((a + sigma^2/2)^2 + 2 q sigma^2) - (a + sigma^2/2)) / sigma^2.
    pub fn eta(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        let m = self.a + 0.5 * s2;
        ((m * m + 2.0 * self.q * s2).sqrt() - m) / s2
    }

    /// Principal eigenvalue lambda = b eta.
    pub fn lambda(&self) -> f64 {
        self.b * self.eta()
    }

    /// Eigen-measure speed alpha = a + sigma^2 eta.
    pub fn alpha(&self) -> f64 {
        self.a + self.sigma * self.sigma * self.eta()
    }

    /// Pricing quadruple ((b - a x) x, sigma x^{3/2}, q x, h) on (0, inf).
    pub fn quadruple(&self, payoff: PayoffKind) -> Quadruple {
        let (a, b, s, q) = (self.a, self.b, self.sigma, self.q);
        Quadruple::new(
            ScalarField::analytic(
                move |x| (b - a * x) * x,
                move |x| b - 2.0 * a * x,
                move |_| -2.0 * a,
            ),
            ScalarField::analytic(
                move |x| s * x.powf(1.5),
                move |x| 1.5 * s * x.sqrt(),
                move |x| 0.75 * s / x.sqrt(),
            ),
            ScalarField::affine(0.0, q),
            payoff.field(&self.phi()),
            StateInterval::positive(),
        )
    }

    /// Eigenfunction x^{-eta} with analytic derivatives.
    pub fn phi(&self) -> ScalarField {
        let eta = self.eta();
        ScalarField::analytic(
            move |x| x.powf(-eta),
            move |x| -eta * x.powf(-eta - 1.0),
            move |x| eta * (eta + 1.0) * x.powf(-eta - 2.0),
        )
    }

    /// Eigenfunction x^{-2} of both derived problems.
    fn phi_hat() -> ScalarField {
        ScalarField::analytic(
            |x| 1.0 / (x * x),
            |x| -2.0 / (x * x * x),
            |x| 6.0 / (x * x * x * x),
        )
    }
}

/// Power moment E[X_T^A | X_0 = x] of the 3/2 process with drift
/// (b - alpha x) x and volatility coefficient sigma, for A < 2 alpha/sigma^2 + 2:
///
/// ```text
/// Gamma(B - A)/Gamma(B) * ((2b/sigma^2)/(1 - e^{-bT}))^A * M(A, B, -(2b/sigma^2)/((e^{bT}-1) x))
/// ```
///
/// with `B = 2 alpha / sigma^2 + 2`. At T = 0 the transition degenerates and
/// the moment is x^A.
pub fn three_halves_moment(
    alpha: f64,
    b: f64,
    sigma: f64,
    a_exp: f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("state must be positive, got {x}")));
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("maturity must be nonnegative, got {t}")));
    }
    let s2 = sigma * sigma;
    let cap = 2.0 * alpha / s2 + 2.0;
    if a_exp >= cap {
        return Err(Error::Domain(format!(
            "moment explodes: exponent {a_exp} >= 2 alpha/sigma^2 + 2 = {cap}"
        )));
    }
    if t == 0.0 {
        return Ok(x.powf(a_exp));
    }
    let bphase = 2.0 * b / s2;
    let growth = -(-b * t).exp_m1(); // 1 - e^{-bT}
    let z = -bphase / ((b * t).exp_m1() * x);
    let ln_pref = ln_gamma(cap - a_exp) - ln_gamma(cap) + a_exp * (bphase / growth).ln();
    Ok(ln_pref.exp() * kummer_m(a_exp, cap, z)?)
}

/// Closed-form price of the h == 1 problem:
/// p_T = xi^{-eta} e^{-lambda T} E-hat[X_T^eta].
pub fn three_halves_price_closed(p: &ThreeHalvesParams, t: f64) -> Result<f64> {
    p.validate()?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let m = three_halves_moment(p.alpha(), p.b, p.sigma, p.eta(), t, p.xi)?;
    Ok(p.xi.powf(-p.eta()) * (-p.lambda() * t).exp() * m)
}

/// Closed-form (d/dxi ln p_T, d2/dxi2 p_T / p_T) for h == 1 via the Kummer
/// derivative identities M'(a,b,z) = (a/b) M(a+1,b+1,z).
pub fn three_halves_closed_log_derivs(p: &ThreeHalvesParams, t: f64) -> Result<(f64, f64)> {
    p.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain("log-derivatives require t > 0".into()));
    }
    let eta = p.eta();
    let alpha = p.alpha();
    let s2 = p.sigma * p.sigma;
    let cap = 2.0 * alpha / s2 + 2.0;
    let x = p.xi;
    let z = -(2.0 * p.b / s2) / ((p.b * t).exp_m1() * x);

    let f0 = kummer_m(eta, cap, z)?;
    let f1 = kummer_m(eta + 1.0, cap + 1.0, z)?;
    let f2 = kummer_m(eta + 2.0, cap + 2.0, z)?;
    let fz_over = eta / cap * f1 / f0;
    let fzz_over = eta * (eta + 1.0) / (cap * (cap + 1.0)) * f2 / f0;

    let z_x = -z / x;
    let z_xx = 2.0 * z / (x * x);
    let fx_over_f = fz_over * z_x;
    let fxx_over_f = fzz_over * z_x * z_x + fz_over * z_xx;

    let delta = -eta / x + fx_over_f;
    let gamma = eta * (eta + 1.0) / (x * x) - 2.0 * eta / x * fx_over_f + fxx_over_f;
    Ok((delta, gamma))
}

/// Full decomposition chain. Both derived eigenpairs are (b, x^{-2}).
pub fn three_halves_chain(p: &ThreeHalvesParams, payoff: PayoffKind) -> Result<DecompositionChain> {
    p.validate()?;
    let q = p.quadruple(payoff);
    let pair0 = Eigenpair::new(p.lambda(), p.phi());
    let pair1 = Eigenpair::new(p.b, ThreeHalvesParams::phi_hat());
    let pair2 = Eigenpair::new(p.b, ThreeHalvesParams::phi_hat());
    let grid = ModelParams::ThreeHalves(p.clone()).stationary_grid(200)?;
    build_chain(q, pair0, pair1, pair2, &grid)
}

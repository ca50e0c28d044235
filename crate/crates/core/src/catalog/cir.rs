//! Square-root (CIR) model: dX = (b - a X) dt + sigma sqrt(X) dB, discount
//! rate q X. Everything about the model is closed form: the eigenpair
//! (b eta, e^{-eta x}) with alpha = sqrt(a^2 + 2 q sigma^2) and
//! eta = (alpha - a)/sigma^2, the moment generating function of the
//! eigen-measure dynamics, and through it the price, the remainder function,
//! and the remainder's first two state derivatives.

use crate::catalog::PayoffKind;
use crate::diffusion::{build_chain, DecompositionChain, Eigenpair, Quadruple};
use crate::field::{ScalarField, StateInterval};
use crate::{Error, Result};

use super::ModelParams;

/// Parameters of the square-root model with linear discount q x.
#[derive(Debug, Clone, PartialEq)]
pub struct CirParams {
    /// Mean-reversion speed (> 0).
    pub a: f64,
    /// Drift level (Feller: 2b > sigma^2).
    pub b: f64,
    /// Volatility coefficient (nonzero; sign is immaterial).
    pub sigma: f64,
    /// Discount slope (> 0).
    pub q: f64,
    /// Initial state (> 0).
    pub xi: f64,
}

impl CirParams {
    pub fn new(a: f64, b: f64, sigma: f64, q: f64, xi: f64) -> Result<Self> {
        let p = CirParams { a, b, sigma, q, xi };
        p.validate()?;
        Ok(p)
    }

    /// The canonical benchmark record a = b = sigma = q = xi = 1.
    pub fn canonical() -> Self {
        CirParams {
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
        if !(self.a > 0.0) {
            errs.push(Error::parameter(
                "mean-reversion",
                format!("a must be positive, got {}", self.a),
            ));
        }
        if self.sigma == 0.0 || !self.sigma.is_finite() {
            errs.push(Error::parameter(
                "volatility",
                format!("sigma must be nonzero and finite, got {}", self.sigma),
            ));
        }
        if !(2.0 * self.b > self.sigma * self.sigma) {
            errs.push(Error::parameter(
                "feller-violation",
                format!("2b > sigma^2 required, got 2b = {}, sigma^2 = {}",
                    2.0 * self.b,
                    self.sigma * self.sigma
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

    /// alpha = sqrt(a^2 + 2 q sigma^2); the decay rate of the derived
    /// problems and the drift speed under the eigen-measure.
    pub fn alpha(&self) -> f64 {
        (self.a * self.a + 2.0 * self.q * self.sigma * self.sigma).sqrt()
    }

    /// eta = (alpha - a)/sigma^2 > 0; the eigenfunction is e^{-eta x}.
    pub fn eta(&self) -> f64 {
        (self.alpha() - self.a) / (self.sigma * self.sigma)
    }

    /// Principal eigenvalue lambda = b eta.
    pub fn lambda(&self) -> f64 {
        self.b * self.eta()
    }

    /// Pricing quadruple (b - a x, |sigma| sqrt(x), q x, h) on (0, inf).
    pub fn quadruple(&self, payoff: PayoffKind) -> Quadruple {
        let (a, b, q) = (self.a, self.b, self.q);
        let s = self.sigma.abs();
        Quadruple::new(
            ScalarField::analytic(move |x| b - a * x, move |_| -a, |_| 0.0),
            ScalarField::analytic(
                move |x| s * x.sqrt(),
                move |x| 0.5 * s / x.sqrt(),
                move |x| -0.25 * s / (x * x.sqrt()),
            ),
            ScalarField::affine(0.0, q),
            payoff.field(&self.phi()),
            StateInterval::positive(),
        )
    }

    /// Eigenfunction e^{-eta x} with analytic derivatives.
    pub fn phi(&self) -> ScalarField {
        let eta = self.eta();
        ScalarField::analytic(
            move |x| (-eta * x).exp(),
            move |x| -eta * (-eta * x).exp(),
            move |x| eta * eta * (-eta * x).exp(),
        )
    }
}

/// Exponential moment E[e^{beta X_T} | X_0 = x] of the square-root process
/// with drift (bhat - alpha x) and volatility coefficient sigma:
///
/// ```text
/// (1 - beta c(T))^{-2 bhat / sigma^2} exp(beta x e^{-alpha T} / (1 - beta c(T)))
/// ```
///
/// with `c(T) = sigma^2 (1 - e^{-alpha T}) / (2 alpha)`, valid for
/// beta < 2 alpha / sigma^2.
pub fn cir_mgf(bhat: f64, alpha: f64, sigma: f64, beta: f64, t: f64, x: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("maturity must be nonnegative, got {t}")));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("state must be positive, got {x}")));
    }
    let s2 = sigma * sigma;
    if beta >= 2.0 * alpha / s2 {
        return Err(Error::Domain(format!(
            "exponential moment explodes: beta = {beta} >= 2 alpha / sigma^2 = {}",
            2.0 * alpha / s2
        )));
    }
    let decay = (-alpha * t).exp();
    let c = s2 * (-(-alpha * t).exp_m1()) / (2.0 * alpha);
    let den = 1.0 - beta * c;
    Ok(den.powf(-2.0 * bhat / s2) * (beta * x * decay / den).exp())
}

/// Remainder function of the h == 1 problem: f(t, x) = E-hat[e^{eta X_t}],
/// the exponential moment under the eigen-measure drift (b - alpha x).
pub fn cir_remainder_closed(p: &CirParams, t: f64, x: f64) -> Result<f64> {
    cir_mgf(p.b, p.alpha(), p.sigma, p.eta(), t, x)
}

/// State derivative of the remainder function for h == 1 (Feynman--Kac
/// route: eta times the exponential moment of the hatted dynamics, damped
/// at rate alpha).
pub fn cir_remainder_fx(p: &CirParams, t: f64, x: f64) -> Result<f64> {
    let alpha = p.alpha();
    let bhat = p.b + 0.5 * p.sigma * p.sigma;
    Ok(p.eta() * cir_mgf(bhat, alpha, p.sigma, p.eta(), t, x)? * (-alpha * t).exp())
}

/// Second state derivative of the remainder function for h == 1; decays at
/// rate 2 alpha.
pub fn cir_remainder_fxx(p: &CirParams, t: f64, x: f64) -> Result<f64> {
    let alpha = p.alpha();
    let btilde = p.b + p.sigma * p.sigma;
    let eta = p.eta();
    Ok(eta * eta * cir_mgf(btilde, alpha, p.sigma, eta, t, x)? * (-2.0 * alpha * t).exp())
}

/// Closed-form price of the h == 1 problem:
/// p_T = e^{-eta xi} e^{-lambda T} f(T, xi).
pub fn cir_price_closed(p: &CirParams, t: f64) -> Result<f64> {
    p.validate()?;
    let f = cir_remainder_closed(p, t, p.xi)?;
    Ok((-p.eta() * p.xi).exp() * (-p.lambda() * t).exp() * f)
}

/// Closed-form f_x(T, xi) for h == 1.
pub fn cir_fx_closed(p: &CirParams, t: f64) -> Result<f64> {
    p.validate()?;
    cir_remainder_fx(p, t, p.xi)
}

/// Closed-form f_xx(T, xi) for h == 1.
pub fn cir_fxx_closed(p: &CirParams, t: f64) -> Result<f64> {
    p.validate()?;
    cir_remainder_fxx(p, t, p.xi)
}

/// Closed-form (d/dxi ln p_T, d2/dxi2 p_T / p_T) for the unit or affine
/// payoff. The affine payoff h = c0 + c1 x keeps all ratios closed form
/// because the remainder function is the beta-derivative of the exponential
/// moment.
pub fn cir_closed_log_derivs(p: &CirParams, t: f64, payoff: PayoffKind) -> Result<(f64, f64)> {
    p.validate()?;
    let eta = p.eta();
    match payoff {
        PayoffKind::Eigenfunction => Ok((-eta, eta * eta)),
        PayoffKind::One | PayoffKind::Affine { .. } => {
            let (c0, c1) = match payoff {
                PayoffKind::One => (1.0, 0.0),
                PayoffKind::Affine { c0, c1 } => (c0, c1),
                PayoffKind::Eigenfunction => unreachable!(),
            };
            let alpha = p.alpha();
            let s2 = p.sigma * p.sigma;
            let decay = (-alpha * t).exp();
            let c = s2 * (-(-alpha * t).exp_m1()) / (2.0 * alpha);
            let den = 1.0 - eta * c;
            // log-slope of the exponential moment in x
            let l = eta * decay / den;
            // d/dbeta log-moment and its x-derivative
            let d = (2.0 * p.b / s2) * c / den + p.xi * decay / (den * den);
            let d_x = decay / (den * den);
            let amp = c0 + c1 * d;
            if amp == 0.0 {
                return Err(Error::Numerics(
                    "affine payoff remainder vanishes at this maturity".into(),
                ));
            }
            let fx_over_f = l + c1 * d_x / amp;
            let fxx_over_f = l * l + 2.0 * l * c1 * d_x / amp;
            let delta = -eta + fx_over_f;
            let gamma = eta * eta - 2.0 * eta * fx_over_f + fxx_over_f;
            Ok((delta, gamma))
        }
    }
}

/// Full decomposition chain for the square-root model. The hatted and tilde
/// eigenpairs are both (alpha, 1).
pub fn cir_chain(p: &CirParams, payoff: PayoffKind) -> Result<DecompositionChain> {
    p.validate()?;
    let q = p.quadruple(payoff);
    let pair0 = Eigenpair::new(p.lambda(), p.phi());
    let pair1 = Eigenpair::new(p.alpha(), ScalarField::constant(1.0));
    let pair2 = Eigenpair::new(p.alpha(), ScalarField::constant(1.0));
    let grid = ModelParams::Cir(p.clone()).stationary_grid(200)?;
    build_chain(q, pair0, pair1, pair2, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::eigen_residual;

    const ETA: f64 = 0.7320508075688772;
    const ALPHA: f64 = 1.7320508075688772;

    fn assert_rel(actual: f64, expected: f64, tol: f64, label: &str) {
        let rel = (actual - expected).abs() / expected.abs().max(1e-300);
        assert!(
            rel <= tol,
            "{label}: expected {expected}, got {actual} (rel {rel:.2e})"
        );
    }

    #[test]
    fn canonical_constants() {
        let p = CirParams::canonical();
        assert_rel(p.alpha(), ALPHA, 1e-15, "alpha");
        assert_rel(p.eta(), ETA, 1e-15, "eta");
        assert_rel(p.lambda(), ETA, 1e-15, "lambda");
    }

    #[test]
    fn validation_catches_feller_and_signs() {
        let p = CirParams {
            a: 1.0,
            b: 0.4,
            sigma: 1.0,
            q: 1.0,
            xi: 1.0,
        };
        let errs = p.validation_errors();
        assert!(errs.iter().any(|e| e.code() == Some("feller-violation")));
        let p2 = CirParams {
            a: -1.0,
            q: -1.0,
            ..CirParams::canonical()
        };
        let codes: Vec<_> = p2
            .validation_errors()
            .iter()
            .filter_map(|e| e.code().map(String::from))
            .collect();
        assert!(codes.contains(&"mean-reversion".to_string()));
        assert!(codes.contains(&"discount-slope".to_string()));
    }

    #[test]
    fn mgf_degenerate_cases() {
        // beta = 0 -> 1 for all (T, x).
        for t in [0.0, 1.0, 7.0] {
            assert_eq!(cir_mgf(1.0, ALPHA, 1.0, 0.0, t, 2.3).unwrap(), 1.0);
        }
        // T = 0 -> e^{beta x} exactly.
        for (beta, x) in [(0.5, 1.0), (ETA, 0.7), (-2.0, 3.0)] {
            assert_rel(
                cir_mgf(1.0, ALPHA, 1.0, beta, 0.0, x).unwrap(),
                (beta * x).exp(),
                1e-14,
                "T=0 moment",
            );
        }
        // Explosion boundary rejected.
        assert!(cir_mgf(1.0, ALPHA, 1.0, 2.0 * ALPHA, 1.0, 1.0).is_err());
    }

    #[test]
    fn mgf_long_maturity_limit() {
        // (1 - eta/(2 sqrt 3))^{-2} for the canonical record.
        let lim = cir_mgf(1.0, ALPHA, 1.0, ETA, 1e4, 1.0).unwrap();
        assert_rel(lim, 1.6076951545867363, 1e-12, "moment limit");
    }

    #[test]
    fn mgf_monotone_in_beta() {
        let mut prev = 0.0;
        for i in 0..10 {
            let beta = -1.0 + 0.3 * i as f64;
            let v = cir_mgf(1.0, ALPHA, 1.0, beta, 2.0, 1.0).unwrap();
            if i > 0 {
                assert!(v > prev, "moment must increase in beta");
            }
            prev = v;
        }
    }

    #[test]
    fn price_closed_reference_values() {
        let p = CirParams::canonical();
        assert_eq!(cir_price_closed(&p, 0.0).unwrap(), 1.0);
        // mpmath references for the canonical record.
        assert_rel(
            cir_price_closed(&p, 1.0).unwrap(),
            0.39647318850263998,
            1e-13,
            "p(1)",
        );
        assert_rel(
            cir_price_closed(&p, 10.0).unwrap(),
            5.1170754404172085e-4,
            1e-13,
            "p(10)",
        );
        // ln p_T + lambda T + eta converges to ln of the moment limit.
        let t = 40.0;
        let v = cir_price_closed(&p, t).unwrap().ln() + p.lambda() * t + p.eta();
        assert_rel(v, 0.4748015723032383, 1e-10, "log-limit");
    }

    #[test]
    fn price_invariant_under_vol_sign() {
        let p = CirParams::canonical();
        let m = CirParams {
            sigma: -1.0,
            ..p.clone()
        };
        for t in [0.5, 2.0, 11.0] {
            assert_eq!(
                cir_price_closed(&p, t).unwrap(),
                cir_price_closed(&m, t).unwrap()
            );
        }
    }

    #[test]
    fn fx_closed_positive_and_decaying() {
        let p = CirParams::canonical();
        // Long-maturity plateau of f_x e^{alpha T}: eta (1 - eta/(2 sqrt3))^{-3}.
        let t = 50.0;
        let v = cir_fx_closed(&p, t).unwrap() * (ALPHA * t).exp();
        assert_rel(v, 1.4922678357856927, 1e-10, "fx plateau");
        let mut prev = f64::INFINITY;
        for t in [1.0, 2.0, 4.0, 8.0] {
            let fx = cir_fx_closed(&p, t).unwrap();
            assert!(fx > 0.0 && fx < prev, "f_x positive and decreasing");
            prev = fx;
        }
    }

    #[test]
    fn chain_matches_hand_derived_fields() {
        let p = CirParams::canonical();
        let chain = cir_chain(&p, PayoffKind::One).unwrap();
        // kappa = 1 - sqrt(3) x
        for x in [0.3, 1.0, 2.5] {
            assert_rel(chain.kappa.eval(x), 1.0 - ALPHA * x, 1e-12, "kappa");
            assert_rel(
                chain.hatted.drift.eval(x),
                1.5 - ALPHA * x,
                1e-12,
                "hatted drift",
            );
            assert_rel(chain.hatted.discount.eval(x), ALPHA, 1e-9, "hatted rate");
            assert_rel(
                chain.tilde.drift.eval(x),
                2.0 - ALPHA * x,
                1e-12,
                "tilde drift",
            );
            assert_rel(chain.tilde.discount.eval(x), ALPHA, 1e-9, "tilde rate");
            // hatted payoff (h/phi)' = eta e^{eta x} for h == 1.
            assert_rel(
                chain.hatted.payoff.eval(x),
                ETA * (ETA * x).exp(),
                1e-11,
                "hatted payoff",
            );
        }
        assert_rel(chain.pair1.eigenvalue, ALPHA, 1e-15, "lambda hat");
    }

    #[test]
    fn chain_eigenfunction_payoff_zeroes_hatted_payoff() {
        let p = CirParams::canonical();
        let chain = cir_chain(&p, PayoffKind::Eigenfunction).unwrap();
        for x in [0.4, 1.1, 2.0] {
            assert!(chain.hatted.payoff.eval(x).abs() < 1e-12);
        }
    }

    #[test]
    fn base_eigen_residual_tiny() {
        let p = CirParams::canonical();
        let chain = cir_chain(&p, PayoffKind::One).unwrap();
        let grid = ModelParams::Cir(p).stationary_grid(200).unwrap();
        let r = eigen_residual(&chain.base, &chain.pair0, &grid).unwrap();
        assert!(r <= 1e-9, "base residual {r}");
    }

    #[test]
    fn closed_log_derivs_limits() {
        let p = CirParams::canonical();
        let (d, g) = cir_closed_log_derivs(&p, 30.0, PayoffKind::One).unwrap();
        assert_rel(d, -ETA, 1e-6, "delta limit");
        assert_rel(g, ETA * ETA, 1e-5, "gamma limit");
        let (d_e, g_e) = cir_closed_log_derivs(&p, 3.0, PayoffKind::Eigenfunction).unwrap();
        assert_eq!(d_e, -ETA);
        assert_eq!(g_e, ETA * ETA);
    }
}

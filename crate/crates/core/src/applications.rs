//! Maps the three front-end problems onto pricing quadruples: power-utility
//! maximization, entropic risk of constant-proportion portfolios, and bond
//! prices. Each map returns either a generic quadruple or a catalog record
//! plus the exact scalar wrapper that reconstructs the original objective
//! from the mapped price.

use crate::catalog::{CevParams, CevVariant, CirParams, ModelParams, ThreeHalvesParams};
use crate::diffusion::Quadruple;
use crate::field::{ScalarField, StateInterval};
use crate::{Error, Result};

/// One-factor market specification. Multi-dimensional Brownian drivers are
/// already collapsed: `vol_norm` is |v|, `vol_dot_theta` is the scalar
/// product v theta, and `theta_norm_sq` is |theta|^2.
#[derive(Debug, Clone)]
pub struct FactorSpec {
    pub drift: ScalarField,
    pub vol_norm: ScalarField,
    pub vol_dot_theta: ScalarField,
    pub theta_norm_sq: ScalarField,
    pub short_rate: ScalarField,
    pub risk_aversion: f64,
    pub domain: StateInterval,
    pub xi: f64,
}

/// The mapped pricing problem: either a raw quadruple or a catalog record.
#[derive(Debug, Clone)]
pub enum MappedProblem {
    Quadruple { quadruple: Quadruple, xi: f64 },
    Model(ModelParams),
}

/// Final composition applied to the wrapped expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Composition {
    /// Utility level u^{1-nu}/nu.
    UtilityPower { nu: f64 },
    /// Entropic risk (1/nu) ln u.
    EntropicRisk { nu: f64 },
    /// No composition (bond prices).
    Identity,
}

/// Exact algebraic wrapper: u_T = p_T e^{rate T}, then the composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarWrap {
    pub exp_rate: f64,
    pub compose: Composition,
}

impl ScalarWrap {
    /// Reconstruct u_T from a mapped price.
    pub fn wrap_price(&self, p_t: f64, t: f64) -> f64 {
        p_t * (self.exp_rate * t).exp()
    }

    /// Apply the final composition to u_T.
    pub fn objective(&self, u_t: f64) -> f64 {
        match self.compose {
            Composition::UtilityPower { nu } => u_t.powf(1.0 - nu) / nu,
            Composition::EntropicRisk { nu } => u_t.ln() / nu,
            Composition::Identity => u_t,
        }
    }
}

/// Result of an application map.
#[derive(Debug, Clone)]
pub struct AppResult {
    pub problem: MappedProblem,
    pub wrapper: ScalarWrap,
    /// Long-horizon exponential growth rate of the wrapped expectation
    /// (-lambda of the mapped problem plus the wrapper rate), when the
    /// problem lands in the catalog.
    pub growth_limit: Option<f64>,
}

impl AppResult {
    pub fn model(&self) -> Option<&ModelParams> {
        match &self.problem {
            MappedProblem::Model(m) => Some(m),
            MappedProblem::Quadruple { .. } => None,
        }
    }
}

/// Generic factor-model utility map: for risk aversion nu < 0 the optimal
/// expected utility is u_T^{1-nu}/nu with u_T the price of the quadruple
///
/// ```text
/// (k - nu/(nu-1) v theta, |v|, -nu/(2(nu-1)^2) |theta|^2 + nu/(nu-1) r, 1)
/// ```
pub fn utility_factor_map(spec: &FactorSpec) -> Result<AppResult> {
    let nu = spec.risk_aversion;
    if !(nu < 0.0) {
        return Err(Error::parameter(
            "risk-aversion-branch",
            format!("utility maximization requires nu < 0, got {nu}"),
        ));
    }
    let ratio = nu / (nu - 1.0);
    let disc_coef = -nu / (2.0 * (nu - 1.0) * (nu - 1.0));
    let drift = {
        let (k, vt) = (spec.drift.clone(), spec.vol_dot_theta.clone());
        ScalarField::new(move |x| k.eval(x) - ratio * vt.eval(x))
    };
    let discount = {
        let (th2, r) = (spec.theta_norm_sq.clone(), spec.short_rate.clone());
        ScalarField::new(move |x| disc_coef * th2.eval(x) + ratio * r.eval(x))
    };
    let quadruple = Quadruple::new(
        drift,
        spec.vol_norm.clone(),
        discount,
        ScalarField::constant(1.0),
        spec.domain,
    );
    Ok(AppResult {
        problem: MappedProblem::Quadruple {
            quadruple,
            xi: spec.xi,
        },
        wrapper: ScalarWrap {
            exp_rate: 0.0,
            compose: Composition::UtilityPower { nu },
        },
        growth_limit: None,
    })
}

/// Stochastic-volatility utility example: zero short rate unless stated,
/// variance factor dX = k(m - X) dt + v sqrt(X) dZ, market price of risk
/// mu sqrt(X) on the first driver, correlation rho. Maps to the square-root
/// record (a, b, sigma, q) = (k + nu/(nu-1) v rho mu, k m, v,
/// -nu mu^2 / (2 (nu-1)^2)) with wrapper e^{-nu r T/(nu-1)}.
#[allow(clippy::too_many_arguments)]
pub fn utility_heston_map(
    k: f64,
    m: f64,
    v: f64,
    rho: f64,
    mu: f64,
    r: f64,
    nu: f64,
    xi: f64,
) -> Result<AppResult> {
    if !(nu < 0.0) {
        return Err(Error::parameter(
            "risk-aversion-branch",
            format!("utility maximization requires nu < 0, got {nu}"),
        ));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::parameter(
            "correlation",
            format!("rho must lie in [-1, 1], got {rho}"),
        ));
    }
    let ratio = nu / (nu - 1.0);
    let a = k + ratio * v * rho * mu;
    let b = k * m;
    let q = -nu * mu * mu / (2.0 * (nu - 1.0) * (nu - 1.0));
    let record = CirParams::new(a, b, v, q, xi)?;
    let wrap_rate = -ratio * r;
    let growth = -record.lambda() + wrap_rate;
    Ok(AppResult {
        problem: MappedProblem::Model(ModelParams::Cir(record)),
        wrapper: ScalarWrap {
            exp_rate: wrap_rate,
            compose: Composition::UtilityPower { nu },
        },
        growth_limit: Some(growth),
    })
}

/// 3/2 stochastic-volatility utility example; same market price of risk
/// structure with factor dX = k(m - X) X dt + v X^{3/2} dZ. Maps to the
/// 3/2 record (a, b, sigma, q) with the same formulas as the square-root
/// case.
#[allow(clippy::too_many_arguments)]
pub fn utility_three_halves_map(
    k: f64,
    m: f64,
    v: f64,
    rho: f64,
    mu: f64,
    r: f64,
    nu: f64,
    xi: f64,
) -> Result<AppResult> {
    if !(nu < 0.0) {
        return Err(Error::parameter(
            "risk-aversion-branch",
            format!("utility maximization requires nu < 0, got {nu}"),
        ));
    }
    let ratio = nu / (nu - 1.0);
    let a = k + ratio * v * rho * mu;
    let b = k * m;
    let q = -nu * mu * mu / (2.0 * (nu - 1.0) * (nu - 1.0));
    let record = ThreeHalvesParams::new(a, b, v, q, xi)?;
    let wrap_rate = -ratio * r;
    let growth = -record.lambda() + wrap_rate;
    Ok(AppResult {
        problem: MappedProblem::Model(ModelParams::ThreeHalves(record)),
        wrapper: ScalarWrap {
            exp_rate: wrap_rate,
            compose: Composition::UtilityPower { nu },
        },
        growth_limit: Some(growth),
    })
}

/// Local-volatility utility example with elasticity dynamics
/// dS/S = k dt + sigma S^beta dB: maps to the variant-I elasticity record
/// with mu = (nu r - k)/(nu - 1) and q = -(k - r)^2 nu / (2 sigma^2 (nu-1)^2),
/// wrapper e^{-nu r T/(nu-1)}.
pub fn utility_cev_map(k: f64, r: f64, sigma: f64, beta: f64, nu: f64, xi: f64) -> Result<AppResult> {
    if !(nu < 0.0) {
        return Err(Error::parameter(
            "risk-aversion-branch",
            format!("utility maximization requires nu < 0, got {nu}"),
        ));
    }
    let ratio = nu / (nu - 1.0);
    let mu = (nu * r - k) / (nu - 1.0);
    let q = -(k - r) * (k - r) * nu / (2.0 * sigma * sigma * (nu - 1.0) * (nu - 1.0));
    if q == 0.0 {
        return Err(Error::parameter(
            "degenerate-market",
            "k = r gives zero market price of risk; the mapped discount vanishes",
        ));
    }
    let record = CevParams::new(mu, 0.0, sigma, beta, xi, q, CevVariant::I)?;
    let wrap_rate = -ratio * r;
    let growth = -record.lambda() + wrap_rate;
    Ok(AppResult {
        problem: MappedProblem::Model(ModelParams::Cev(record)),
        wrapper: ScalarWrap {
            exp_rate: wrap_rate,
            compose: Composition::UtilityPower { nu },
        },
        growth_limit: Some(growth),
    })
}

/// Entropic-risk example selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropicKind {
    /// Constant proportion eta-bar in a one-dimensional affine factor model
    /// with stock drift mu_c + gamma_c x and vol sqrt(varsigma x).
    AffineCp {
        k: f64,
        m: f64,
        v: f64,
        eta_bar: f64,
        gamma_c: f64,
        varsigma: f64,
        mu_c: f64,
        nu: f64,
        xi: f64,
    },
    /// pi(s) s^2 = eta-bar in a 3/2 stock model; reduces through x = 1/s to
    /// a square-root record.
    ThreeHalvesCp1 {
        k: f64,
        m: f64,
        v: f64,
        eta_bar: f64,
        nu: f64,
        s0: f64,
    },
    /// pi(s) s = eta-bar (eta-bar < 0) in a 3/2 stock model; stays in the
    /// 3/2 family.
    ThreeHalvesCp2 {
        k: f64,
        m: f64,
        v: f64,
        eta_bar: f64,
        nu: f64,
        s0: f64,
    },
}

/// Map an entropic-risk example onto a catalog record and its wrapper; the
/// risk of the portfolio is (1/nu) ln u_T.
pub fn entropic_map(kind: EntropicKind) -> Result<AppResult> {
    match kind {
        EntropicKind::AffineCp {
            k,
            m,
            v,
            eta_bar,
            gamma_c,
            varsigma,
            mu_c,
            nu,
            xi,
        } => {
            if !(nu > 0.0) {
                return Err(Error::parameter(
                    "risk-aversion-branch",
                    format!("entropic risk requires nu > 0, got {nu}"),
                ));
            }
            let b = m * k;
            let a = k + nu * v * varsigma.sqrt() * eta_bar;
            let q = nu * (eta_bar * gamma_c
                - 0.5 * nu * (eta_bar * varsigma.sqrt()) * (eta_bar * varsigma.sqrt()));
            if !(q > 0.0) {
                return Err(Error::parameter(
                    "portfolio-range",
                    format!("mapped discount slope must be positive, got q = {q}"),
                ));
            }
            let record = CirParams::new(a, b, v, q, xi)?;
            let wrap_rate = -nu * eta_bar * mu_c;
            let growth = -record.lambda() + wrap_rate;
            Ok(AppResult {
                problem: MappedProblem::Model(ModelParams::Cir(record)),
                wrapper: ScalarWrap {
                    exp_rate: wrap_rate,
                    compose: Composition::EntropicRisk { nu },
                },
                growth_limit: Some(growth),
            })
        }
        EntropicKind::ThreeHalvesCp1 {
            k,
            m,
            v,
            eta_bar,
            nu,
            s0,
        } => {
            if !(nu > 0.0) {
                return Err(Error::parameter(
                    "risk-aversion-branch",
                    format!("entropic risk requires nu > 0, got {nu}"),
                ));
            }
            let cap = k * m / (nu * v * v);
            if !(eta_bar > 0.0 && eta_bar < cap) {
                return Err(Error::parameter(
                    "portfolio-range",
                    format!("proportion must satisfy 0 < eta_bar < km/(nu v^2) = {cap}, got {eta_bar}"),
                ));
            }
            let b = k + v * v;
            let a = k * m - nu * v * v * eta_bar;
            let sigma = -v;
            let q = nu * eta_bar * (k * m - 0.5 * nu * v * v * eta_bar);
            let record = CirParams::new(a, b, sigma, q, 1.0 / s0)?;
            let wrap_rate = nu * k * eta_bar;
            let growth = -record.lambda() + wrap_rate;
            Ok(AppResult {
                problem: MappedProblem::Model(ModelParams::Cir(record)),
                wrapper: ScalarWrap {
                    exp_rate: wrap_rate,
                    compose: Composition::EntropicRisk { nu },
                },
                growth_limit: Some(growth),
            })
        }
        EntropicKind::ThreeHalvesCp2 {
            k,
            m,
            v,
            eta_bar,
            nu,
            s0,
        } => {
            if !(nu > 0.0) {
                return Err(Error::parameter(
                    "risk-aversion-branch",
                    format!("entropic risk requires nu > 0, got {nu}"),
                ));
            }
            let floor = -k / (nu * v * v);
            if !(eta_bar > floor && eta_bar < 0.0) {
                return Err(Error::parameter(
                    "portfolio-range",
                    format!(
                        "proportion must satisfy -k/(nu v^2) = {floor} < eta_bar < 0, got {eta_bar}"
                    ),
                ));
            }
            let a = k + nu * v * v * eta_bar;
            let b = k * m;
            let q = -nu * eta_bar * (k + 0.5 * nu * v * v * eta_bar);
            let record = ThreeHalvesParams::new(a, b, v, q, s0)?;
            let wrap_rate = -nu * m * k * eta_bar;
            let growth = -record.lambda() + wrap_rate;
            Ok(AppResult {
                problem: MappedProblem::Model(ModelParams::ThreeHalves(record)),
                wrapper: ScalarWrap {
                    exp_rate: wrap_rate,
                    compose: Composition::EntropicRisk { nu },
                },
                growth_limit: Some(growth),
            })
        }
    }
}

/// Bond-price map: the short rate follows the given model, the bond is the
/// unit-payoff price with discount slope one. The long yield is the
/// principal eigenvalue.
pub fn bond_map(short_rate_model: &ModelParams) -> Result<AppResult> {
    let model = match short_rate_model {
        ModelParams::Cir(p) => {
            let mut p = p.clone();
            p.q = 1.0;
            p.validate()?;
            ModelParams::Cir(p)
        }
        ModelParams::ThreeHalves(p) => {
            let mut p = p.clone();
            p.q = 1.0;
            p.validate()?;
            ModelParams::ThreeHalves(p)
        }
        ModelParams::Cev(_) => {
            return Err(Error::Contract(
                "bond map supports the square-root and 3/2 short-rate families".into(),
            ))
        }
    };
    let growth = -model.lambda();
    Ok(AppResult {
        problem: MappedProblem::Model(model),
        wrapper: ScalarWrap {
            exp_rate: 0.0,
            compose: Composition::Identity,
        },
        growth_limit: Some(growth),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rel(actual: f64, expected: f64, tol: f64, label: &str) {
        let rel = (actual - expected).abs() / expected.abs().max(1e-300);
        assert!(
            rel <= tol,
            "{label}: expected {expected}, got {actual} (rel {rel:.2e})"
        );
    }

    #[test]
    fn heston_example_record() {
        // k=2, m=0.04, v=0.3, rho=-0.5, mu=2, nu=-1 -> (1.85, 0.08, 0.3, 0.5).
        let r = utility_heston_map(2.0, 0.04, 0.3, -0.5, 2.0, 0.0, -1.0, 0.04).unwrap();
        match r.model().unwrap() {
            ModelParams::Cir(p) => {
                assert_rel(p.a, 1.85, 1e-14, "a");
                assert_rel(p.b, 0.08, 1e-14, "b");
                assert_rel(p.sigma, 0.3, 1e-14, "sigma");
                assert_rel(p.q, 0.5, 1e-14, "q");
            }
            _ => panic!("expected a square-root record"),
        }
        assert_eq!(r.wrapper.exp_rate, 0.0);
        assert!(matches!(
            r.wrapper.compose,
            Composition::UtilityPower { nu } if nu == -1.0
        ));
    }

    #[test]
    fn three_halves_utility_example_record() {
        let r = utility_three_halves_map(2.0, 0.04, 0.3, -0.5, 2.0, 0.0, -1.0, 0.5).unwrap();
        match r.model().unwrap() {
            ModelParams::ThreeHalves(p) => {
                assert_rel(p.a, 1.85, 1e-14, "a");
                assert_rel(p.b, 0.08, 1e-14, "b");
            }
            _ => panic!("expected a 3/2 record"),
        }
    }

    #[test]
    fn utility_rejects_positive_risk_aversion() {
        assert!(utility_heston_map(2.0, 0.04, 0.3, -0.5, 2.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn riskless_market_degenerates() {
        // theta = 0, r = 0: mapped discount is 0 and u_T = 1, utility 1/nu.
        let spec = FactorSpec {
            drift: ScalarField::constant(0.0),
            vol_norm: ScalarField::constant(1.0),
            vol_dot_theta: ScalarField::constant(0.0),
            theta_norm_sq: ScalarField::constant(0.0),
            short_rate: ScalarField::constant(0.0),
            risk_aversion: -2.0,
            domain: StateInterval::real_line(),
            xi: 0.0,
        };
        let r = utility_factor_map(&spec).unwrap();
        match &r.problem {
            MappedProblem::Quadruple { quadruple, .. } => {
                for x in [-1.0, 0.0, 2.0] {
                    assert_eq!(quadruple.discount.eval(x), 0.0);
                }
            }
            _ => panic!(),
        }
        let u = r.wrapper.wrap_price(1.0, 3.0);
        assert_eq!(u, 1.0);
        assert_rel(r.wrapper.objective(u), 1.0 / -2.0, 1e-15, "utility = 1/nu");
    }

    #[test]
    fn cev_utility_example_record() {
        // k=0.08, r=0.02, sigma=0.2, beta=0.5, nu=-1 -> mu=0.05, q=0.01125.
        let r = utility_cev_map(0.08, 0.02, 0.2, 0.5, -1.0, 1.0).unwrap();
        match r.model().unwrap() {
            ModelParams::Cev(p) => {
                assert_rel(p.mu, 0.05, 1e-14, "mu");
                assert_rel(p.q, 0.01125, 1e-14, "q");
                assert_eq!(p.theta, 0.0);
                assert_eq!(p.variant, CevVariant::I);
            }
            _ => panic!("expected an elasticity record"),
        }
        // wrapper rate -nu r/(nu-1) = -(-1)(0.02)/(-2) = -0.01.
        assert_rel(r.wrapper.exp_rate, -0.01, 1e-14, "wrap rate");
        // growth limit composes the reduced eigenvalue with the wrapper.
        let lam = r.model().unwrap().lambda();
        assert_rel(r.growth_limit.unwrap(), -lam - 0.01, 1e-12, "growth");
    }

    #[test]
    fn cev_utility_zero_price_of_risk_rejected() {
        assert!(utility_cev_map(0.02, 0.02, 0.2, 0.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn entropic_affine_example_record() {
        // k=1, m=0.04, v=0.2, eta=0.5, gamma=1, varsigma=1, nu=2
        // -> (b, a, sigma, q) = (0.04, 1.2, 0.2, 0.5).
        let r = entropic_map(EntropicKind::AffineCp {
            k: 1.0,
            m: 0.04,
            v: 0.2,
            eta_bar: 0.5,
            gamma_c: 1.0,
            varsigma: 1.0,
            mu_c: 0.0,
            nu: 2.0,
            xi: 0.04,
        })
        .unwrap();
        match r.model().unwrap() {
            ModelParams::Cir(p) => {
                assert_rel(p.b, 0.04, 1e-14, "b");
                assert_rel(p.a, 1.2, 1e-14, "a");
                assert_rel(p.sigma, 0.2, 1e-14, "sigma");
                assert_rel(p.q, 0.5, 1e-14, "q");
            }
            _ => panic!("expected a square-root record"),
        }
    }

    #[test]
    fn entropic_cp1_example_record() {
        // k=1, m=0.5, v=0.3, nu=1, eta=0.2 -> (1.09, 0.482, -0.3, 0.0982).
        let r = entropic_map(EntropicKind::ThreeHalvesCp1 {
            k: 1.0,
            m: 0.5,
            v: 0.3,
            eta_bar: 0.2,
            nu: 1.0,
            s0: 2.0,
        })
        .unwrap();
        match r.model().unwrap() {
            ModelParams::Cir(p) => {
                assert_rel(p.b, 1.09, 1e-14, "b");
                assert_rel(p.a, 0.482, 1e-14, "a");
                assert_rel(p.sigma, -0.3, 1e-14, "sigma");
                assert_rel(p.q, 0.0982, 1e-13, "q");
                assert_rel(p.xi, 0.5, 1e-14, "xi = 1/S0");
            }
            _ => panic!("expected a square-root record"),
        }
        assert_rel(r.wrapper.exp_rate, 0.2, 1e-14, "wrap rate nu k eta");
    }

    #[test]
    fn entropic_admissibility_enforced() {
        // eta_bar above km/(nu v^2) rejected.
        let bad = entropic_map(EntropicKind::ThreeHalvesCp1 {
            k: 1.0,
            m: 0.5,
            v: 0.3,
            eta_bar: 6.0,
            nu: 1.0,
            s0: 1.0,
        });
        assert!(matches!(bad, Err(Error::Parameter { ref code, .. }) if code == "portfolio-range"));
        // Positive eta_bar rejected on the second branch.
        let bad2 = entropic_map(EntropicKind::ThreeHalvesCp2 {
            k: 1.0,
            m: 0.5,
            v: 0.3,
            eta_bar: 0.2,
            nu: 1.0,
            s0: 1.0,
        });
        assert!(matches!(bad2, Err(Error::Parameter { ref code, .. }) if code == "portfolio-range"));
    }

    #[test]
    fn entropic_cp2_accepts_negative_proportion() {
        let r = entropic_map(EntropicKind::ThreeHalvesCp2 {
            k: 1.0,
            m: 0.5,
            v: 0.3,
            eta_bar: -0.2,
            nu: 1.0,
            s0: 1.0,
        })
        .unwrap();
        match r.model().unwrap() {
            ModelParams::ThreeHalves(p) => {
                assert_rel(p.a, 1.0 + 0.09 * -0.2, 1e-14, "a");
                assert_rel(p.b, 0.5, 1e-14, "b");
                assert!(p.q > 0.0);
            }
            _ => panic!("expected a 3/2 record"),
        }
    }

    #[test]
    fn bond_long_yields() {
        let cir = ModelParams::Cir(CirParams {
            q: 0.3,
            ..CirParams::canonical()
        });
        let r = bond_map(&cir).unwrap();
        assert_rel(
            -r.growth_limit.unwrap(),
            0.7320508075688772,
            1e-12,
            "square-root long yield",
        );
        let th = ModelParams::ThreeHalves(ThreeHalvesParams::canonical());
        let r = bond_map(&th).unwrap();
        assert_rel(
            -r.growth_limit.unwrap(),
            0.5615528128088303,
            1e-12,
            "3/2 long yield",
        );
    }
}

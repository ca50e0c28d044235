//! Long-horizon sensitivity limits: the state-derivative limits phi'/phi and
//! phi''/phi, the exponential rates they are approached at, and the per-
//! parameter limits -d lambda/d parameter of the time-averaged log-price
//! sensitivities.

use crate::catalog::{CevVariant, ModelParams};
use crate::{Error, Result};

/// A model parameter that can be perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    /// Mean-reversion speed of the square-root and 3/2 families.
    A,
    /// Drift level of the square-root and 3/2 families.
    B,
    /// Volatility coefficient.
    Sigma,
    /// Proportional drift of the elasticity family.
    Mu,
    /// Quadratic damping of the elasticity family.
    Theta,
    /// Elasticity exponent.
    Beta,
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParamId::A => "a",
            ParamId::B => "b",
            ParamId::Sigma => "sigma",
            ParamId::Mu => "mu",
            ParamId::Theta => "theta",
            ParamId::Beta => "beta",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ParamId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(ParamId::A),
            "b" => Ok(ParamId::B),
            "sigma" => Ok(ParamId::Sigma),
            "mu" => Ok(ParamId::Mu),
            "theta" => Ok(ParamId::Theta),
            "beta" => Ok(ParamId::Beta),
            other => Err(Error::Contract(format!("unknown parameter id '{other}'"))),
        }
    }
}

/// Long-horizon limits of the initial-state and parameter sensitivities.
#[derive(Debug, Clone)]
pub struct SensitivityLimits {
    /// Limit of d/dxi ln p_T: phi'/phi at xi.
    pub delta_limit: f64,
    /// Limit of d2/dxi2 p_T / p_T: phi''/phi at xi.
    pub gamma_limit: f64,
    /// Exponential approach rate of the first-order limit (lambda hat).
    pub delta_rate: f64,
    /// Rate of the second-order combo statistic (2 lambda hat).
    pub gamma_combo_rate: f64,
    /// Per-parameter limits of (1/T) d/dparam ln p_T: -d lambda/d param.
    pub param_limits: Vec<(ParamId, f64)>,
    /// For the variant-II elasticity model the beta sensitivity is only
    /// bounded; no limit is recorded.
    pub beta_bounded_only: bool,
}

impl SensitivityLimits {
    pub fn param_limit(&self, id: ParamId) -> Option<f64> {
        self.param_limits
            .iter()
            .find(|(p, _)| *p == id)
            .map(|&(_, v)| v)
    }
}

/// Limits for any catalog record, evaluated symbolically.
pub fn sensitivity_limits(model: &ModelParams) -> SensitivityLimits {
    let delta_limit = model.phi_log_deriv();
    let gamma_limit = model.phi_curvature();
    match model {
        ModelParams::Cir(p) => {
            let (a, b, q) = (p.a, p.b, p.q);
            let s2 = p.sigma * p.sigma;
            let alpha = p.alpha();
            let eta = p.eta();
            let d_a = b / s2 * (a / alpha - 1.0);
            let d_sigma = 2.0 * b * (q / (alpha * p.sigma) - (alpha - a) / (s2 * p.sigma));
            SensitivityLimits {
                delta_limit,
                gamma_limit,
                delta_rate: alpha,
                gamma_combo_rate: 2.0 * alpha,
                param_limits: vec![
                    (ParamId::B, -eta),
                    (ParamId::A, -d_a),
                    (ParamId::Sigma, -d_sigma),
                ],
                beta_bounded_only: false,
            }
        }
        ModelParams::ThreeHalves(p) => {
            let s2 = p.sigma * p.sigma;
            let m = p.a + 0.5 * s2;
            let s = (m * m + 2.0 * p.q * s2).sqrt();
            let eta = p.eta();
            let d_a = p.b / s2 * (m / s - 1.0);
            let d_sigma =
                p.b * (m + 2.0 * p.q - s) / (p.sigma * s) - 2.0 * p.b / (s2 * p.sigma) * (s - m);
            SensitivityLimits {
                delta_limit,
                gamma_limit,
                delta_rate: p.b,
                gamma_combo_rate: 2.0 * p.b,
                param_limits: vec![
                    (ParamId::B, -eta),
                    (ParamId::A, -d_a),
                    (ParamId::Sigma, -d_sigma),
                ],
                beta_bounded_only: false,
            }
        }
        ModelParams::Cev(p) => {
            let s2 = p.sigma * p.sigma;
            let lam_hat = p.lambda_hat();
            match p.variant {
                CevVariant::I => {
                    let s = (p.mu * p.mu + 2.0 * p.q * s2).sqrt();
                    let eta = p.eta();
                    let d_mu = (p.theta / s2 + p.beta + 0.5) * (p.mu / s - 1.0);
                    let d_sigma = (p.q * s2 * s2 * (2.0 * p.beta + 1.0)
                        - 2.0 * p.theta * (p.mu * p.mu + p.q * s2))
                        / (s2 * p.sigma * s)
                        + 2.0 * p.theta * p.mu / (s2 * p.sigma);
                    let d_beta = s2 * eta; // = s - mu
                    SensitivityLimits {
                        delta_limit,
                        gamma_limit,
                        delta_rate: lam_hat,
                        gamma_combo_rate: 2.0 * lam_hat,
                        param_limits: vec![
                            (ParamId::Mu, -d_mu),
                            (ParamId::Theta, -eta),
                            (ParamId::Sigma, -d_sigma),
                            (ParamId::Beta, -d_beta),
                        ],
                        beta_bounded_only: false,
                    }
                }
                CevVariant::II => {
                    let m = p.theta + 0.5 * s2;
                    let s = (m * m + 2.0 * p.q * s2).sqrt();
                    let eta = p.eta();
                    let d_theta = p.mu / s2 * (m / s - 1.0);
                    let d_sigma = p.mu * (m + 2.0 * p.q - s) / (p.sigma * s)
                        - 2.0 * p.mu / (s2 * p.sigma) * (s - m);
                    SensitivityLimits {
                        delta_limit,
                        gamma_limit,
                        delta_rate: lam_hat,
                        gamma_combo_rate: 2.0 * lam_hat,
                        param_limits: vec![
                            (ParamId::Mu, -eta),
                            (ParamId::Theta, -d_theta),
                            (ParamId::Sigma, -d_sigma),
                        ],
                        beta_bounded_only: true,
                    }
                }
            }
        }
    }
}

/// Return a copy of the model with one parameter relatively bumped:
/// value -> value (1 + rel). The bumped record is re-validated.
pub fn bump_param(model: &ModelParams, id: ParamId, rel: f64) -> Result<ModelParams> {
    fn bumped(v: f64, rel: f64) -> Result<f64> {
        if v == 0.0 {
            return Err(Error::Contract(
                "cannot apply a relative bump to a zero parameter".into(),
            ));
        }
        Ok(v * (1.0 + rel))
    }
    let out = match model {
        ModelParams::Cir(p) => {
            let mut p = p.clone();
            match id {
                ParamId::A => p.a = bumped(p.a, rel)?,
                ParamId::B => p.b = bumped(p.b, rel)?,
                ParamId::Sigma => p.sigma = bumped(p.sigma, rel)?,
                other => {
                    return Err(Error::Contract(format!(
                        "parameter '{other}' does not exist on the square-root family"
                    )))
                }
            }
            ModelParams::Cir(p)
        }
        ModelParams::ThreeHalves(p) => {
            let mut p = p.clone();
            match id {
                ParamId::A => p.a = bumped(p.a, rel)?,
                ParamId::B => p.b = bumped(p.b, rel)?,
                ParamId::Sigma => p.sigma = bumped(p.sigma, rel)?,
                other => {
                    return Err(Error::Contract(format!(
                        "parameter '{other}' does not exist on the 3/2 family"
                    )))
                }
            }
            ModelParams::ThreeHalves(p)
        }
        ModelParams::Cev(p) => {
            let mut p = p.clone();
            match id {
                ParamId::Mu => p.mu = bumped(p.mu, rel)?,
                ParamId::Theta => p.theta = bumped(p.theta, rel)?,
                ParamId::Sigma => p.sigma = bumped(p.sigma, rel)?,
                ParamId::Beta => p.beta = bumped(p.beta, rel)?,
                other => {
                    return Err(Error::Contract(format!(
                        "parameter '{other}' does not exist on the elasticity family"
                    )))
                }
            }
            ModelParams::Cev(p)
        }
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CevParams, CirParams, ThreeHalvesParams};

    fn assert_rel(actual: f64, expected: f64, tol: f64, label: &str) {
        let rel = (actual - expected).abs() / expected.abs().max(1e-300);
        assert!(
            rel <= tol,
            "{label}: expected {expected}, got {actual} (rel {rel:.2e})"
        );
    }

    #[test]
    fn cir_canonical_limits() {
        let lim = sensitivity_limits(&ModelParams::Cir(CirParams::canonical()));
        assert_rel(lim.delta_limit, -0.7320508075688772, 1e-14, "delta");
        assert_rel(lim.gamma_limit, 0.5358983848622454, 1e-14, "gamma");
        assert_rel(lim.delta_rate, 1.7320508075688772, 1e-14, "rate");
        assert_rel(
            lim.param_limit(ParamId::B).unwrap(),
            -0.7320508075688772,
            1e-14,
            "b limit",
        );
        assert_rel(
            lim.param_limit(ParamId::A).unwrap(),
            0.42264973081037424,
            1e-14,
            "a limit",
        );
        assert_rel(
            lim.param_limit(ParamId::Sigma).unwrap(),
            0.30940107675850306,
            1e-13,
            "sigma limit",
        );
    }

    #[test]
    fn three_halves_canonical_limits() {
        let lim = sensitivity_limits(&ModelParams::ThreeHalves(ThreeHalvesParams::canonical()));
        assert_rel(lim.delta_limit, -0.5615528128088303, 1e-14, "delta");
        assert_rel(lim.gamma_limit, 0.8768943743823395, 1e-13, "gamma");
        assert_rel(lim.delta_rate, 1.0, 1e-15, "rate = b");
        assert_rel(
            lim.param_limit(ParamId::A).unwrap(),
            0.2723931248910011,
            1e-13,
            "a limit",
        );
        assert_rel(
            lim.param_limit(ParamId::Sigma).unwrap(),
            0.42535625036332974,
            1e-13,
            "sigma limit",
        );
    }

    #[test]
    fn cev_canonical_limits() {
        let one = sensitivity_limits(&ModelParams::Cev(CevParams::canonical(CevVariant::I)));
        assert_rel(one.delta_limit, 0.5559337354052415, 1e-12, "I delta");
        assert_rel(one.gamma_limit, -0.849132963932628, 1e-12, "I gamma");
        assert_rel(one.delta_rate, 0.9604686356149273, 1e-12, "I rate");
        assert_rel(
            one.param_limit(ParamId::Mu).unwrap(),
            0.41087098229431814,
            1e-12,
            "I mu",
        );
        assert_rel(
            one.param_limit(ParamId::Theta).unwrap(),
            -0.8769526483955304,
            1e-12,
            "I theta",
        );
        assert_rel(
            one.param_limit(ParamId::Sigma).unwrap(),
            -0.7328268899667803,
            1e-12,
            "I sigma",
        );
        assert_rel(
            one.param_limit(ParamId::Beta).unwrap(),
            -0.14031242374328487,
            1e-12,
            "I beta",
        );
        assert!(!one.beta_bounded_only);

        let two = sensitivity_limits(&ModelParams::Cev(CevParams::canonical(CevVariant::II)));
        assert_rel(two.delta_limit, -1.347053354110553, 1e-12, "II delta");
        assert_rel(two.gamma_limit, 2.937097200579285, 1e-12, "II gamma");
        assert_rel(two.delta_rate, 0.75, 1e-15, "II rate");
        assert_rel(
            two.param_limit(ParamId::Mu).unwrap(),
            -1.6164640249326636,
            1e-12,
            "II mu",
        );
        assert_rel(
            two.param_limit(ParamId::Theta).unwrap(),
            1.8426103833475066,
            1e-12,
            "II theta",
        );
        assert_rel(
            two.param_limit(ParamId::Sigma).unwrap(),
            1.9284495119984542,
            1e-12,
            "II sigma",
        );
        assert!(two.beta_bounded_only);
        assert!(two.param_limit(ParamId::Beta).is_none());
    }

    #[test]
    fn bump_respects_family_and_validation() {
        let m = ModelParams::Cir(CirParams::canonical());
        let b = bump_param(&m, ParamId::A, 1e-5).unwrap();
        match b {
            ModelParams::Cir(p) => assert_rel(p.a, 1.0 + 1e-5, 1e-15, "bumped a"),
            _ => unreachable!(),
        }
        assert!(bump_param(&m, ParamId::Mu, 1e-5).is_err());
        // A bump that breaks Feller must fail validation.
        let edge = ModelParams::Cir(CirParams {
            b: 0.5000001,
            ..CirParams::canonical()
        });
        assert!(bump_param(&edge, ParamId::Sigma, 1e-3).is_err());
    }
}

//! Closed-form model catalog: square-root (CIR), 3/2, and constant-elasticity
//! families, their eigen-decompositions, closed-form prices and sensitivity
//! limits, and the elasticity-model reductions onto the first two families.

mod cev;
mod cir;
mod limits;
mod three_halves;

pub use cev::{cev_reduce, CevParams, CevVariant, ReductionMap};
pub use cir::{
    cir_chain, cir_closed_log_derivs, cir_fx_closed, cir_fxx_closed, cir_mgf, cir_price_closed,
    cir_remainder_closed, cir_remainder_fx, cir_remainder_fxx, CirParams,
};
pub use limits::{bump_param, sensitivity_limits, ParamId, SensitivityLimits};
pub use three_halves::{
    three_halves_chain, three_halves_closed_log_derivs, three_halves_moment,
    three_halves_price_closed, ThreeHalvesParams,
};

use crate::diffusion::{DecompositionChain, Quadruple};
use crate::field::ScalarField;
use crate::special::inv_reg_gamma_p;
use crate::{Error, Result};

/// Payoff selector for closed forms and chains. The affine payoff
/// `c0 + c1 x` keeps every closed form available for the square-root model
/// while giving the remainder function genuine curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffKind {
    /// h == 1 (bond-style payoff).
    One,
    /// h(x) = c0 + c1 x.
    Affine { c0: f64, c1: f64 },
    /// h = phi, which collapses the remainder function to 1.
    Eigenfunction,
}

impl PayoffKind {
    pub fn field(&self, phi: &ScalarField) -> ScalarField {
        match *self {
            PayoffKind::One => ScalarField::constant(1.0),
            PayoffKind::Affine { c0, c1 } => ScalarField::affine(c0, c1),
            PayoffKind::Eigenfunction => phi.clone(),
        }
    }
}

/// A validated parameter record for one of the catalog families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Cir(CirParams),
    ThreeHalves(ThreeHalvesParams),
    Cev(CevParams),
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::Cir(p) => p.validate(),
            ModelParams::ThreeHalves(p) => p.validate(),
            ModelParams::Cev(p) => p.validate(),
        }
    }

    /// Collect every validation failure instead of stopping at the first.
    pub fn validation_errors(&self) -> Vec<Error> {
        match self {
            ModelParams::Cir(p) => p.validation_errors(),
            ModelParams::ThreeHalves(p) => p.validation_errors(),
            ModelParams::Cev(p) => p.validation_errors(),
        }
    }

    pub fn xi(&self) -> f64 {
        match self {
            ModelParams::Cir(p) => p.xi,
            ModelParams::ThreeHalves(p) => p.xi,
            ModelParams::Cev(p) => p.xi,
        }
    }

    /// Principal eigenvalue of the pricing problem.
    pub fn lambda(&self) -> f64 {
        match self {
            ModelParams::Cir(p) => p.lambda(),
            ModelParams::ThreeHalves(p) => p.lambda(),
            ModelParams::Cev(p) => p.lambda(),
        }
    }

    /// phi'/phi at the initial state.
    pub fn phi_log_deriv(&self) -> f64 {
        match self {
            ModelParams::Cir(p) => -p.eta(),
            ModelParams::ThreeHalves(p) => -p.eta() / p.xi,
            ModelParams::Cev(p) => p.phi_log_deriv(),
        }
    }

    /// phi''/phi at the initial state.
    pub fn phi_curvature(&self) -> f64 {
        match self {
            ModelParams::Cir(p) => p.eta() * p.eta(),
            ModelParams::ThreeHalves(p) => {
                let eta = p.eta();
                eta * (eta + 1.0) / (p.xi * p.xi)
            }
            ModelParams::Cev(p) => p.phi_curvature(),
        }
    }

    /// phi_hat'/phi_hat at the initial state (cross term of the second-order
    /// combo statistic).
    pub fn phi_hat_log_deriv(&self) -> f64 {
        match self {
            ModelParams::Cir(_) => 0.0,
            ModelParams::ThreeHalves(p) => -2.0 / p.xi,
            ModelParams::Cev(p) => p.phi_hat_log_deriv(),
        }
    }

    /// Closed-form price of the h == 1 problem at maturity `t`.
    pub fn price_closed(&self, t: f64) -> Result<f64> {
        match self {
            ModelParams::Cir(p) => cir_price_closed(p, t),
            ModelParams::ThreeHalves(p) => three_halves_price_closed(p, t),
            ModelParams::Cev(p) => {
                let (reduced, map) = cev_reduce(p)?;
                reduced_with_initial(&reduced, map.y0).price_closed(t)
            }
        }
    }

    /// Closed-form (delta, gamma) = (d/dxi ln p, d2/dxi2 p / p) at maturity `t`.
    pub fn closed_log_derivs(&self, t: f64, payoff: PayoffKind) -> Result<(f64, f64)> {
        match self {
            ModelParams::Cir(p) => cir_closed_log_derivs(p, t, payoff),
            ModelParams::ThreeHalves(p) => {
                if !matches!(payoff, PayoffKind::One) {
                    return Err(Error::Contract(
                        "3/2 closed log-derivatives support only the unit payoff".into(),
                    ));
                }
                three_halves_closed_log_derivs(p, t)
            }
            ModelParams::Cev(p) => {
                if !matches!(payoff, PayoffKind::One) {
                    return Err(Error::Contract(
                        "elasticity-model closed log-derivatives support only the unit payoff"
                            .into(),
                    ));
                }
                let (reduced, map) = cev_reduce(p)?;
                let inner = reduced_with_initial(&reduced, map.y0);
                let (d_y, g_y) = inner.closed_log_derivs(t, PayoffKind::One)?;
                let delta = d_y * map.dy0_dxi;
                let gamma = g_y * map.dy0_dxi * map.dy0_dxi + d_y * map.d2y0_dxi2;
                Ok((delta, gamma))
            }
        }
    }

    /// The pricing quadruple in the model's own coordinates.
    pub fn quadruple(&self, payoff: PayoffKind) -> Quadruple {
        match self {
            ModelParams::Cir(p) => p.quadruple(payoff),
            ModelParams::ThreeHalves(p) => p.quadruple(payoff),
            ModelParams::Cev(p) => p.quadruple(payoff),
        }
    }

    /// Decomposition chain. For the elasticity families this is the chain of
    /// the reduced model with the mapped initial state.
    pub fn chain(&self, payoff: PayoffKind) -> Result<DecompositionChain> {
        match self {
            ModelParams::Cir(p) => cir_chain(p, payoff),
            ModelParams::ThreeHalves(p) => three_halves_chain(p, payoff),
            ModelParams::Cev(p) => {
                let (reduced, map) = cev_reduce(p)?;
                reduced_with_initial(&reduced, map.y0).chain(payoff)
            }
        }
    }

    pub fn sensitivity_limits(&self) -> SensitivityLimits {
        sensitivity_limits(self)
    }

    /// Stationary quantile of the model's eigen-measure dynamics.
    pub fn stationary_quantile(&self, p: f64) -> Result<f64> {
        match self {
            ModelParams::Cir(m) => {
                let s2 = m.sigma * m.sigma;
                let shape = 2.0 * m.b / s2;
                let rate = 2.0 * m.alpha() / s2;
                Ok(inv_reg_gamma_p(shape, p)? / rate)
            }
            ModelParams::ThreeHalves(m) => {
                // 1/X is square-root with level alpha + sigma^2 and speed b.
                let s2 = m.sigma * m.sigma;
                let shape = 2.0 * (m.alpha() + s2) / s2;
                let rate = 2.0 * m.b / s2;
                let y = inv_reg_gamma_p(shape, 1.0 - p)? / rate;
                Ok(1.0 / y)
            }
            ModelParams::Cev(m) => {
                let (reduced, map) = cev_reduce(m)?;
                let inner = reduced_with_initial(&reduced, map.y0);
                let pr = if map.decreasing { 1.0 - p } else { p };
                let y = inner.stationary_quantile(pr)?;
                Ok(map.pull_back(y))
            }
        }
    }

    /// Log-spaced grid over the stationary quantile range
    /// [q(0.001), q(0.999)] of the eigen-measure dynamics, clipped to the
    /// domain interior.
    pub fn stationary_grid(&self, n: usize) -> Result<Vec<f64>> {
        let lo = self.stationary_quantile(0.001)?;
        let hi = self.stationary_quantile(0.999)?;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Numerics(format!(
                "degenerate stationary range ({lo}, {hi})"
            )));
        }
        let ln_lo = lo.ln();
        let ln_hi = hi.ln();
        Ok((0..n)
            .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / (n - 1) as f64).exp())
            .collect())
    }
}

/// Clone a reduced record replacing its initial state.
fn reduced_with_initial(reduced: &ModelParams, y0: f64) -> ModelParams {
    match reduced {
        ModelParams::Cir(p) => {
            let mut p = p.clone();
            p.xi = y0;
            ModelParams::Cir(p)
        }
        ModelParams::ThreeHalves(p) => {
            let mut p = p.clone();
            p.xi = y0;
            ModelParams::ThreeHalves(p)
        }
        ModelParams::Cev(_) => unreachable!("reduction never yields another elasticity record"),
    }
}

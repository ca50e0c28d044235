//! Constant-elasticity model dX/X = (mu - theta X^{2 beta}) dt
//! + sigma X^beta dB with discount q x^{-2 beta} (variant I) or
//! q x^{2 beta} (variant II). Both variants transform onto a catalog
//! family: Y = X^{-2 beta} is square-root, Y = X^{2 beta} is 3/2.

use crate::catalog::{CirParams, ModelParams, PayoffKind, ThreeHalvesParams};
use crate::diffusion::Quadruple;
use crate::field::{ScalarField, StateInterval};
use crate::{Error, Result};

/// Which power of the state the discount rate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CevVariant {
    /// r(x) = q x^{-2 beta}; reduces to the square-root family.
    I,
    /// r(x) = q x^{2 beta}; reduces to the 3/2 family.
    II,
}

/// Parameters of the elasticity model.
#[derive(Debug, Clone, PartialEq)]
pub struct CevParams {
    /// Proportional drift (> 0).
    pub mu: f64,
    /// Quadratic damping (>= 0).
    pub theta: f64,
    /// Volatility coefficient (nonzero).
    pub sigma: f64,
    /// Elasticity exponent (> 0).
    pub beta: f64,
    /// Initial state (> 0).
    pub xi: f64,
    /// Discount slope (> 0).
    pub q: f64,
    pub variant: CevVariant,
}

/// State map of a reduction Y = X^{-2 beta} or Y = X^{2 beta}, with the
/// jacobian entries needed to pull sensitivities back to the original state.
#[derive(Debug, Clone, Copy)]
pub struct ReductionMap {
    pub y0: f64,
    pub dy0_dxi: f64,
    pub d2y0_dxi2: f64,
    /// Whether the map is decreasing in x (variant I).
    pub decreasing: bool,
    /// Exponent e with x = y^e on the way back.
    pub back_exponent: f64,
}

impl ReductionMap {
    pub fn pull_back(&self, y: f64) -> f64 {
        y.powf(self.back_exponent)
    }
}

impl CevParams {
    pub fn new(
        mu: f64,
        theta: f64,
        sigma: f64,
        beta: f64,
        xi: f64,
        q: f64,
        variant: CevVariant,
    ) -> Result<Self> {
        let p = CevParams {
            mu,
            theta,
            sigma,
            beta,
            xi,
            q,
            variant,
        };
        p.validate()?;
        Ok(p)
    }

    /// Benchmark record with a nontrivial state map (xi != 1).
    pub fn canonical(variant: CevVariant) -> Self {
        CevParams {
            mu: 0.5,
            theta: 0.1,
            sigma: 0.4,
            beta: 0.75,
            xi: 1.2,
            q: 0.5,
            variant,
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
        if !(self.mu > 0.0) {
            errs.push(Error::parameter(
                "proportional-drift",
                format!("mu must be positive, got {}", self.mu),
            ));
        }
        if !(self.theta >= 0.0) {
            errs.push(Error::parameter(
                "damping",
                format!("theta must be nonnegative, got {}", self.theta),
            ));
        }
        if self.sigma == 0.0 || !self.sigma.is_finite() {
            errs.push(Error::parameter(
                "volatility",
                format!("sigma must be nonzero and finite, got {}", self.sigma),
            ));
        }
        if !(self.beta > 0.0) {
            errs.push(Error::parameter(
                "elasticity",
                format!("beta must be positive, got {}", self.beta),
            ));
        }
        if !(self.xi > 0.0) {
            errs.push(Error::parameter(
                "initial-state",
                format!("xi must be positive, got {}", self.xi),
            ));
        }
        if !(self.q > 0.0) {
            errs.push(Error::parameter(
                "discount-slope",
                format!("q must be positive, got {}", self.q),
            ));
        }
        errs
    }

    /// eta of the reduced family expressed in the original parameters.
    pub fn eta(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.variant {
            CevVariant::I => ((self.mu * self.mu + 2.0 * self.q * s2).sqrt() - self.mu) / s2,
            CevVariant::II => {
                let m = self.theta + 0.5 * s2;
                ((m * m + 2.0 * self.q * s2).sqrt() - m) / s2
            }
        }
    }

    /// Principal eigenvalue in original coordinates.
    pub fn lambda(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.variant {
            CevVariant::I => (self.theta + (self.beta + 0.5) * s2) * self.eta(),
            CevVariant::II => self.mu * self.eta(),
        }
    }

    /// Decay rate of the derived problems (eigenvalue of the hatted chain).
    pub fn lambda_hat(&self) -> f64 {
        match self.variant {
            CevVariant::I => {
                2.0 * self.beta
                    * (self.mu * self.mu + 2.0 * self.q * self.sigma * self.sigma).sqrt()
            }
            CevVariant::II => 2.0 * self.beta * self.mu,
        }
    }

    /// phi'/phi at xi in original coordinates.
    pub fn phi_log_deriv(&self) -> f64 {
        let eta = self.eta();
        match self.variant {
            CevVariant::I => eta * self.xi.powf(-2.0 * self.beta - 1.0),
            CevVariant::II => -eta / self.xi,
        }
    }

    /// phi''/phi at xi in original coordinates.
    pub fn phi_curvature(&self) -> f64 {
        let eta = self.eta();
        let (xi, beta) = (self.xi, self.beta);
        match self.variant {
            CevVariant::I => {
                eta * xi.powf(-2.0 * beta - 2.0)
                    * (eta * xi.powf(-2.0 * beta) - 2.0 * beta - 1.0)
            }
            CevVariant::II => eta * (eta + 1.0) / (xi * xi),
        }
    }

    /// phi_hat'/phi_hat at xi (zero for variant I, -4 beta / xi for II).
    pub fn phi_hat_log_deriv(&self) -> f64 {
        match self.variant {
            CevVariant::I => 0.0,
            CevVariant::II => -4.0 * self.beta / self.xi,
        }
    }

    /// Eigenfunction in original coordinates with analytic derivatives.
    pub fn phi(&self) -> ScalarField {
        let eta = self.eta();
        let beta = self.beta;
        match self.variant {
            CevVariant::I => {
                // exp(-(eta / 2 beta) x^{-2 beta})
                let coef = eta / (2.0 * beta);
                ScalarField::analytic(
                    move |x| (-coef * x.powf(-2.0 * beta)).exp(),
                    move |x| {
                        let g1 = eta * x.powf(-2.0 * beta - 1.0);
                        (-coef * x.powf(-2.0 * beta)).exp() * g1
                    },
                    move |x| {
                        let g1 = eta * x.powf(-2.0 * beta - 1.0);
                        let g2 = -eta * (2.0 * beta + 1.0) * x.powf(-2.0 * beta - 2.0);
                        (-coef * x.powf(-2.0 * beta)).exp() * (g2 + g1 * g1)
                    },
                )
            }
            CevVariant::II => ScalarField::analytic(
                move |x| x.powf(-eta),
                move |x| -eta * x.powf(-eta - 1.0),
                move |x| eta * (eta + 1.0) * x.powf(-eta - 2.0),
            ),
        }
    }

    /// Pricing quadruple in original coordinates,
    /// ((mu - theta x^{2 beta}) x, |sigma| x^{beta+1}, q x^{-+2 beta}, h).
    pub fn quadruple(&self, payoff: PayoffKind) -> Quadruple {
        let (mu, th, beta, q) = (self.mu, self.theta, self.beta, self.q);
        let s = self.sigma.abs();
        let rexp = match self.variant {
            CevVariant::I => -2.0 * beta,
            CevVariant::II => 2.0 * beta,
        };
        Quadruple::new(
            ScalarField::analytic(
                move |x| (mu - th * x.powf(2.0 * beta)) * x,
                move |x| mu - th * (2.0 * beta + 1.0) * x.powf(2.0 * beta),
                move |x| -th * 2.0 * beta * (2.0 * beta + 1.0) * x.powf(2.0 * beta - 1.0),
            ),
            ScalarField::analytic(
                move |x| s * x.powf(beta + 1.0),
                move |x| s * (beta + 1.0) * x.powf(beta),
                move |x| s * (beta + 1.0) * beta * x.powf(beta - 1.0),
            ),
            ScalarField::analytic(
                move |x| q * x.powf(rexp),
                move |x| q * rexp * x.powf(rexp - 1.0),
                move |x| q * rexp * (rexp - 1.0) * x.powf(rexp - 2.0),
            ),
            payoff.field(&self.phi()),
            StateInterval::positive(),
        )
    }
}

/// Transform the elasticity model onto its reduced family and return the
/// state map. Variant I: Y = X^{-2 beta} is square-root with
/// (b, a, Sigma) = (2 beta theta + beta (2 beta + 1) sigma^2, 2 beta mu,
/// -2 beta sigma). Variant II: Y = X^{2 beta} is 3/2 with
/// (b, a, Sigma) = (2 beta mu, 2 beta theta - beta (2 beta - 1) sigma^2,
/// 2 beta sigma).
pub fn cev_reduce(p: &CevParams) -> Result<(ModelParams, ReductionMap)> {
    p.validate()?;
    let beta = p.beta;
    let s2 = p.sigma * p.sigma;
    match p.variant {
        CevVariant::I => {
            let b = 2.0 * beta * p.theta + beta * (2.0 * beta + 1.0) * s2;
            let a = 2.0 * beta * p.mu;
            let big_sigma = -2.0 * beta * p.sigma;
            if !(2.0 * b > big_sigma * big_sigma) {
                return Err(Error::parameter(
                    "reduction-invariant",
                    "reduced square-root record violates the Feller condition",
                ));
            }
            let y0 = p.xi.powf(-2.0 * beta);
            let map = ReductionMap {
                y0,
                dy0_dxi: -2.0 * beta * p.xi.powf(-2.0 * beta - 1.0),
                d2y0_dxi2: 2.0 * beta * (2.0 * beta + 1.0) * p.xi.powf(-2.0 * beta - 2.0),
                decreasing: true,
                back_exponent: -1.0 / (2.0 * beta),
            };
            let reduced = CirParams::new(a, b, big_sigma, p.q, y0)?;
            Ok((ModelParams::Cir(reduced), map))
        }
        CevVariant::II => {
            let b = 2.0 * beta * p.mu;
            let a = 2.0 * beta * p.theta - beta * (2.0 * beta - 1.0) * s2;
            let big_sigma = 2.0 * beta * p.sigma.abs();
            if !(a > -0.5 * big_sigma * big_sigma) {
                return Err(Error::parameter(
                    "reduction-invariant",
                    "reduced 3/2 record violates a > -Sigma^2/2",
                ));
            }
            let y0 = p.xi.powf(2.0 * beta);
            let map = ReductionMap {
                y0,
                dy0_dxi: 2.0 * beta * p.xi.powf(2.0 * beta - 1.0),
                d2y0_dxi2: 2.0 * beta * (2.0 * beta - 1.0) * p.xi.powf(2.0 * beta - 2.0),
                decreasing: false,
                back_exponent: 1.0 / (2.0 * beta),
            };
            let reduced = ThreeHalvesParams::new(a, b, big_sigma, p.q, y0)?;
            Ok((ModelParams::ThreeHalves(reduced), map))
        }
    }
}

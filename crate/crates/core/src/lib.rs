//! Numerical laboratory for the eigen-decomposition of one-dimensional
//! diffusion pricing operators and the long-horizon behavior of price
//! sensitivities.
//!
//! The pricing problem is a quadruple (drift, vol, discount, payoff) on an
//! open interval. A positive eigenpair (lambda, phi) of the pricing
//! operator factorizes the price as `p_T = phi(xi) e^{-lambda T} f(T, xi)`
//! with a remainder `f` that converges; the derived "hatted" and "tilde"
//! problems govern the remainder's state derivatives and set the
//! exponential rates at which delta and gamma approach the eigenfunction
//! ratios phi'/phi and phi''/phi, while drift/diffusion parameter
//! sensitivities of ln p_T, time-averaged, approach -d lambda/d parameter
//! at rate O(1/T).
//!
//! Everything is organized around four closed-form model families
//! ([`catalog`]), with three independent computation routes: closed forms,
//! seeded Monte Carlo ([`montecarlo`]), and a Crank--Nicolson PDE solver
//! ([`pde`]); [`sensitivity`] produces maturity curves and rate fits, and
//! [`applications`] maps utility-maximization, entropic-risk, and
//! bond-pricing front ends onto the same machinery.

pub mod applications;
pub mod catalog;
pub mod diffusion;
mod error;
pub mod field;
pub mod montecarlo;
pub mod pde;
pub mod quadrature;
pub mod sensitivity;
pub mod special;

pub use error::{Error, Result};
pub use field::{ScalarField, StateInterval};

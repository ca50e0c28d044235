//! Scalar coefficient functions on an open state interval.
//!
//! A [`ScalarField`] bundles a function of the state with optional analytic
//! first and second derivatives. When a derivative closure is absent the
//! field falls back to central differences with relative step
//! `1e-6 * max(1, |x|)`, so every field can always answer derivative
//! queries at interior points.

use std::fmt;
use std::sync::Arc;

type DynFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative step for the central-difference fallback.
const FD_REL_STEP: f64 = 1e-6;

/// An open interval of the real line, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInterval {
    pub lower: f64,
    pub upper: f64,
}

impl StateInterval {
    pub fn new(lower: f64, upper: f64) -> crate::Result<Self> {
        if !(lower < upper) {
            return Err(crate::Error::Contract(format!(
                "state interval requires lower < upper, got ({lower}, {upper})"
            )));
        }
        Ok(StateInterval { lower, upper })
    }

    /// The positive half-line `(0, inf)`, domain of every catalog model.
    pub fn positive() -> Self {
        StateInterval {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    /// The whole real line.
    pub fn real_line() -> Self {
        StateInterval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    /// Strict interior membership; the endpoints are always excluded.
    pub fn contains_interior(&self, x: f64) -> bool {
        x.is_finite() && x > self.lower && x < self.upper
    }

    /// Clamp a state into the interior, at relative margin `eps` from any
    /// finite endpoint. Used by discretization schemes that evaluate
    /// coefficients at (possibly excursive) states.
    pub fn clamp_interior(&self, x: f64, eps: f64) -> f64 {
        let lo = if self.lower.is_finite() {
            self.lower + eps * self.lower.abs().max(1.0)
        } else {
            f64::NEG_INFINITY
        };
        let hi = if self.upper.is_finite() {
            self.upper - eps * self.upper.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        x.clamp(lo, hi)
    }
}

impl fmt::Display for StateInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lower, self.upper)
    }
}

/// A scalar function of the state with optional analytic derivatives.
#[derive(Clone)]
pub struct ScalarField {
    value: DynFn,
    d1: Option<DynFn>,
    d2: Option<DynFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("analytic_d1", &self.d1.is_some())
            .field("analytic_d2", &self.d2.is_some())
            .finish()
    }
}

impl ScalarField {
    /// Field from a bare value function; derivatives fall back to central
    /// differences.
    pub fn new(value: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            value: Arc::new(value),
            d1: None,
            d2: None,
        }
    }

    /// Field with an analytic first derivative.
    pub fn with_first(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            value: Arc::new(value),
            d1: Some(Arc::new(d1)),
            d2: None,
        }
    }

    /// Field with analytic first and second derivatives.
    pub fn analytic(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            value: Arc::new(value),
            d1: Some(Arc::new(d1)),
            d2: Some(Arc::new(d2)),
        }
    }

    /// Constant field with exactly zero derivatives.
    pub fn constant(c: f64) -> Self {
        ScalarField::analytic(move |_| c, |_| 0.0, |_| 0.0)
    }

    /// Affine field `c0 + c1 x`.
    pub fn affine(c0: f64, c1: f64) -> Self {
        ScalarField::analytic(move |x| c0 + c1 * x, move |_| c1, |_| 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn has_analytic_d1(&self) -> bool {
        self.d1.is_some()
    }

    pub fn has_analytic_d2(&self) -> bool {
        self.d2.is_some()
    }

    fn fd_step(x: f64) -> f64 {
        FD_REL_STEP * x.abs().max(1.0)
    }

    /// First derivative: analytic when supplied, otherwise central difference.
    pub fn deriv1(&self, x: f64) -> f64 {
        match &self.d1 {
            Some(d) => d(x),
            None => {
                let h = Self::fd_step(x);
                (self.eval(x + h) - self.eval(x - h)) / (2.0 * h)
            }
        }
    }

    /// Second derivative: analytic when supplied, otherwise central difference.
    pub fn deriv2(&self, x: f64) -> f64 {
        match &self.d2 {
            Some(d) => d(x),
            None => {
                let h = Self::fd_step(x);
                (self.eval(x + h) - 2.0 * self.eval(x) + self.eval(x - h)) / (h * h)
            }
        }
    }

    /// Central-difference first derivative at an explicit step, for
    /// validating analytic derivatives under step refinement.
    pub fn central_d1(&self, x: f64, h: f64) -> f64 {
        (self.eval(x + h) - self.eval(x - h)) / (2.0 * h)
    }

    /// Central-difference second derivative at an explicit step.
    pub fn central_d2(&self, x: f64, h: f64) -> f64 {
        (self.eval(x + h) - 2.0 * self.eval(x) + self.eval(x - h)) / (h * h)
    }

    /// Whether a central-difference stencil around `x` stays interior.
    pub fn stencil_fits(&self, x: f64, domain: &StateInterval) -> bool {
        let h = Self::fd_step(x);
        domain.contains_interior(x - h) && domain.contains_interior(x + h)
    }
}

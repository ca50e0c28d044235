//! Pricing quadruples, eigenpairs, and the derived decomposition chain.
//!
//! A pricing problem is the quadruple (drift, vol, discount, payoff) on an
//! open interval. A positive eigenpair (lambda, phi) of its pricing
//! operator induces a drift shift `kappa = b + sigma^2 phi'/phi`, a derived
//! "hatted" quadruple governing the first spatial derivative of the
//! remainder function, and a "tilde" quadruple governing the second. This
//! module builds and validates that three-quadruple chain, and implements
//! the boundary double-integral criterion used to certify the eigen-measure
//! martingale property.

use crate::field::{ScalarField, StateInterval};
use crate::quadrature::{integrate, QuadOptions};
use crate::{Error, Result};

/// Relative tolerance for eigen-relation residuals checked by `build_chain`.
pub const CHAIN_RESIDUAL_TOL: f64 = 1e-9;

/// A pricing problem: state dynamics, discount rate, and payoff.
#[derive(Debug, Clone)]
pub struct Quadruple {
    pub drift: ScalarField,
    pub vol: ScalarField,
    pub discount: ScalarField,
    pub payoff: ScalarField,
    pub domain: StateInterval,
}

impl Quadruple {
    pub fn new(
        drift: ScalarField,
        vol: ScalarField,
        discount: ScalarField,
        payoff: ScalarField,
        domain: StateInterval,
    ) -> Self {
        Quadruple {
            drift,
            vol,
            discount,
            payoff,
            domain,
        }
    }

    /// Check basic invariants on a sample grid: vol positive, drift and
    /// discount finite.
    pub fn validate_on(&self, grid: &[f64]) -> Result<()> {
        for &x in grid {
            if !self.domain.contains_interior(x) {
                return Err(Error::Domain(format!(
                    "grid point {x} not interior to {}",
                    self.domain
                )));
            }
            let s = self.vol.eval(x);
            if !(s > 0.0) {
                return Err(Error::Contract(format!(
                    "vol must be positive on the domain, got {s} at x={x}"
                )));
            }
            for (name, v) in [
                ("drift", self.drift.eval(x)),
                ("discount", self.discount.eval(x)),
            ] {
                if !v.is_finite() {
                    return Err(Error::Numerics(format!("{name} non-finite at x={x}")));
                }
            }
        }
        Ok(())
    }
}

/// A positive eigenfunction and its eigenvalue.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub eigenvalue: f64,
    pub phi: ScalarField,
}

impl Eigenpair {
    pub fn new(eigenvalue: f64, phi: ScalarField) -> Self {
        Eigenpair { eigenvalue, phi }
    }

    /// Logarithmic derivative phi'/phi.
    pub fn log_deriv(&self, x: f64) -> f64 {
        self.phi.deriv1(x) / self.phi.eval(x)
    }

    /// Second logarithmic ratio phi''/phi.
    pub fn curvature_ratio(&self, x: f64) -> f64 {
        self.phi.deriv2(x) / self.phi.eval(x)
    }
}

/// The base quadruple with its eigenpair and the two derived problems.
#[derive(Debug, Clone)]
pub struct DecompositionChain {
    pub base: Quadruple,
    pub pair0: Eigenpair,
    /// Drift under the eigen-measure: kappa = b + sigma^2 phi'/phi.
    pub kappa: ScalarField,
    /// (kappa + sigma' sigma, sigma, -kappa', (h/phi)')
    pub hatted: Quadruple,
    pub pair1: Eigenpair,
    /// gamma = kappa + sigma' sigma + sigma^2 phi_hat'/phi_hat.
    pub gamma: ScalarField,
    /// (gamma + sigma' sigma, sigma, -gamma', ((h/phi)'/phi_hat)')
    pub tilde: Quadruple,
    pub pair2: Eigenpair,
}

/// Apply the generator of the pricing problem to a function at a point:
/// (1/2) sigma^2 f'' + b f' - r f.
pub fn apply_generator(q: &Quadruple, f: &ScalarField, x: f64) -> Result<f64> {
    if !q.domain.contains_interior(x) {
        return Err(Error::Domain(format!(
            "state {x} is not interior to {}",
            q.domain
        )));
    }
    if !(f.has_analytic_d1() && f.has_analytic_d2()) && !f.stencil_fits(x, &q.domain) {
        return Err(Error::Contract(format!(
            "derivatives of f unavailable at x={x}: no analytic form and the \
             difference stencil exits the domain"
        )));
    }
    let s = q.vol.eval(x);
    Ok(0.5 * s * s * f.deriv2(x) + q.drift.eval(x) * f.deriv1(x) - q.discount.eval(x) * f.eval(x))
}

/// Maximum normalized eigen-relation residual over a grid:
/// max |G phi + lambda phi| / max(1, |phi|).
pub fn eigen_residual(q: &Quadruple, pair: &Eigenpair, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Contract("eigen_residual requires a nonempty grid".into()));
    }
    let mut worst = 0.0f64;
    for &x in grid {
        let g = apply_generator(q, &pair.phi, x)?;
        let p = pair.phi.eval(x);
        let res = (g + pair.eigenvalue * p).abs() / p.abs().max(1.0);
        worst = worst.max(res);
    }
    Ok(worst)
}

/// Field kappa = b + sigma^2 phi'/phi with an exact first derivative
/// assembled from the ingredients' derivatives.
fn kappa_field(drift: &ScalarField, vol: &ScalarField, phi: &ScalarField) -> ScalarField {
    let b = drift.clone();
    let s = vol.clone();
    let p = phi.clone();
    let (b2, s2, p2) = (b.clone(), s.clone(), p.clone());
    ScalarField::with_first(
        move |x| {
            let sv = s.eval(x);
            b.eval(x) + sv * sv * p.deriv1(x) / p.eval(x)
        },
        move |x| {
            let sv = s2.eval(x);
            let lr = p2.deriv1(x) / p2.eval(x);
            let lr1 = p2.deriv2(x) / p2.eval(x) - lr * lr;
            b2.deriv1(x) + 2.0 * sv * s2.deriv1(x) * lr + sv * sv * lr1
        },
    )
}

/// Field g + sigma' sigma for a drift-like field g.
fn add_stratonovich_correction(g: &ScalarField, vol: &ScalarField) -> ScalarField {
    let (g1, s1) = (g.clone(), vol.clone());
    let (g2, s2) = (g.clone(), vol.clone());
    ScalarField::with_first(
        move |x| g1.eval(x) + s1.deriv1(x) * s1.eval(x),
        move |x| {
            g2.deriv1(x) + s2.deriv2(x) * s2.eval(x) + s2.deriv1(x) * s2.deriv1(x)
        },
    )
}

/// Discount field -g' for a drift-like field g.
fn negated_derivative(g: &ScalarField) -> ScalarField {
    let g1 = g.clone();
    ScalarField::new(move |x| -g1.deriv1(x))
}

/// Ratio derivative field (h/phi)' with exact value and first derivative.
fn ratio_derivative(h: &ScalarField, phi: &ScalarField) -> ScalarField {
    let (h1, p1) = (h.clone(), phi.clone());
    let (h2, p2) = (h.clone(), phi.clone());
    ScalarField::with_first(
        move |x| {
            let pv = p1.eval(x);
            let u = h1.eval(x) / pv;
            (h1.deriv1(x) - u * p1.deriv1(x)) / pv
        },
        move |x| {
            let pv = p2.eval(x);
            let u = h2.eval(x) / pv;
            let u1 = (h2.deriv1(x) - u * p2.deriv1(x)) / pv;
            (h2.deriv2(x) - 2.0 * u1 * p2.deriv1(x) - u * p2.deriv2(x)) / pv
        },
    )
}

/// Assemble and validate the three-quadruple chain from a base problem and
/// its three eigenpairs. Residuals of pair1 against the hatted problem and
/// pair2 against the tilde problem must not exceed [`CHAIN_RESIDUAL_TOL`]
/// on the supplied grid, and all eigenfunctions must be positive there.
pub fn build_chain(
    q: Quadruple,
    pair0: Eigenpair,
    pair1: Eigenpair,
    pair2: Eigenpair,
    grid: &[f64],
) -> Result<DecompositionChain> {
    if grid.is_empty() {
        return Err(Error::Contract("build_chain requires a nonempty grid".into()));
    }
    for pair in [&pair0, &pair1, &pair2] {
        for &x in grid {
            let v = pair.phi.eval(x);
            if !(v > 0.0) {
                return Err(Error::Contract(format!(
                    "eigenfunction must be positive on the grid, got {v} at x={x}"
                )));
            }
        }
    }
    q.validate_on(grid)?;

    let kappa = kappa_field(&q.drift, &q.vol, &pair0.phi);
    let hatted_drift = add_stratonovich_correction(&kappa, &q.vol);
    let hatted = Quadruple::new(
        hatted_drift,
        q.vol.clone(),
        negated_derivative(&kappa),
        ratio_derivative(&q.payoff, &pair0.phi),
        q.domain,
    );

    // gamma = kappa + sigma' sigma + sigma^2 phi_hat'/phi_hat
    //       = kappa_field(hatted drift basis) over the hatted problem.
    let gamma = kappa_field(&hatted.drift, &q.vol, &pair1.phi);
    let tilde_drift = add_stratonovich_correction(&gamma, &q.vol);
    let tilde = Quadruple::new(
        tilde_drift,
        q.vol.clone(),
        negated_derivative(&gamma),
        ratio_derivative(&hatted.payoff, &pair1.phi),
        q.domain,
    );

    let r1 = eigen_residual(&hatted, &pair1, grid)?;
    if r1 > CHAIN_RESIDUAL_TOL {
        return Err(Error::Numerics(format!(
            "hatted eigenpair residual {r1:.3e} exceeds {CHAIN_RESIDUAL_TOL:.0e}"
        )));
    }
    let r2 = eigen_residual(&tilde, &pair2, grid)?;
    if r2 > CHAIN_RESIDUAL_TOL {
        return Err(Error::Numerics(format!(
            "tilde eigenpair residual {r2:.3e} exceeds {CHAIN_RESIDUAL_TOL:.0e}"
        )));
    }

    Ok(DecompositionChain {
        base: q,
        pair0,
        kappa,
        hatted,
        pair1,
        gamma,
        tilde,
        pair2,
    })
}

impl DecompositionChain {
    /// Remainder-function payoff h/phi.
    pub fn remainder_payoff(&self) -> ScalarField {
        let h = self.base.payoff.clone();
        let p = self.pair0.phi.clone();
        ScalarField::new(move |x| h.eval(x) / p.eval(x))
    }
}

/// The two truncated boundary double integrals whose joint divergence
/// certifies that the eigen-measure change is a true martingale:
///
/// ```text
/// left  = int_a^x0 (1/sigma^2(x)) e^{-S(x)} int_x^x0 e^{S(y)} dy dx
/// right = int_x0^b (1/sigma^2(x)) e^{-S(x)} int_x0^x e^{S(y)} dy dx
/// ```
///
/// with `S(x) = int_x0^x 2 kappa / sigma^2`. Values are computed on the
/// truncation `(a_eps, b_n)`; the caller asserts divergence by checking the
/// values are large and increase as the truncation widens.
pub fn martingale_criterion(
    kappa: &ScalarField,
    sigma: &ScalarField,
    domain: &StateInterval,
    x0: f64,
    trunc: (f64, f64),
) -> Result<(f64, f64)> {
    let (a_eps, b_n) = trunc;
    if !(a_eps < x0 && x0 < b_n) {
        return Err(Error::Contract(format!(
            "truncation must straddle the reference point: {a_eps} < {x0} < {b_n} required"
        )));
    }
    if !domain.contains_interior(a_eps) || !domain.contains_interior(b_n) {
        return Err(Error::Domain(format!(
            "truncation ({a_eps}, {b_n}) must lie inside {domain}"
        )));
    }

    let exponent_rate = {
        let (k, s) = (kappa.clone(), sigma.clone());
        move |x: f64| {
            let sv = s.eval(x);
            2.0 * k.eval(x) / (sv * sv)
        }
    };
    let table = CumulativeTable::build(&exponent_rate, a_eps, x0, b_n)?;

    let inner_opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-9,
        max_subdivisions: 2000,
    };
    let outer_opts = QuadOptions {
        abs_tol: 1e-8,
        rel_tol: 1e-8,
        max_subdivisions: 4000,
    };

    let sig = sigma.clone();
    let tbl = &table;
    let left = integrate(
        |x| {
            let inner = integrate(|y| tbl.s(y).exp(), x, x0, inner_opts).unwrap_or(f64::NAN);
            let sv = sig.eval(x);
            (-tbl.s(x)).exp() * inner / (sv * sv)
        },
        a_eps,
        x0,
        outer_opts,
    )
    .map_err(|e| Error::Numerics(format!("left criterion integral: {e}")))?;

    let sig = sigma.clone();
    let right = integrate(
        |x| {
            let inner = integrate(|y| tbl.s(y).exp(), x0, x, inner_opts).unwrap_or(f64::NAN);
            let sv = sig.eval(x);
            (-tbl.s(x)).exp() * inner / (sv * sv)
        },
        x0,
        b_n,
        outer_opts,
    )
    .map_err(|e| Error::Numerics(format!("right criterion integral: {e}")))?;

    if !(left.is_finite() && right.is_finite()) || left < 0.0 || right < 0.0 {
        return Err(Error::Numerics(format!(
            "criterion integrals must be finite and nonnegative, got ({left}, {right}); \
             a non-integrable singularity may lie inside the truncation"
        )));
    }
    Ok((left, right))
}

/// Cumulative antiderivative S(x) = int_x0^x g on a graded grid, with local
/// quadratic interpolation between nodes. The grading is geometric toward
/// both truncation endpoints so integrable endpoint blow-ups of `g` are
/// resolved.
struct CumulativeTable {
    xs: Vec<f64>,
    ss: Vec<f64>,
}

impl CumulativeTable {
    fn build(g: &dyn Fn(f64) -> f64, lo: f64, x0: f64, hi: f64) -> Result<Self> {
        let mut xs = graded_nodes(lo, x0, hi, 4096);
        xs.dedup();
        let mut ss = vec![0.0f64; xs.len()];
        let i0 = xs
            .iter()
            .position(|&x| (x - x0).abs() < 1e-300 || x >= x0)
            .unwrap_or(xs.len() / 2);
        // March right from x0 accumulating per-cell Simpson integrals.
        for i in i0..xs.len() {
            if i == i0 {
                ss[i] = simpson_cell(g, x0, xs[i]);
            } else {
                ss[i] = ss[i - 1] + simpson_cell(g, xs[i - 1], xs[i]);
            }
        }
        for i in (0..i0).rev() {
            let right = if i + 1 == i0 { xs[i0] } else { xs[i + 1] };
            let base = if i + 1 == i0 { ss[i0] } else { ss[i + 1] };
            ss[i] = base - simpson_cell(g, xs[i], right);
        }
        if ss.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerics(
                "exponent table non-finite; kappa/sigma^2 not integrable on the truncation".into(),
            ));
        }
        Ok(CumulativeTable { xs, ss })
    }

    fn s(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ss[0];
        }
        if x >= self.xs[n - 1] {
            return self.ss[n - 1];
        }
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Quadratic through (lo-1, lo, lo+1) when possible, else linear.
        if lo >= 1 {
            let (x0, x1, x2) = (self.xs[lo - 1], self.xs[lo], self.xs[lo + 1]);
            let (y0, y1, y2) = (self.ss[lo - 1], self.ss[lo], self.ss[lo + 1]);
            let l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2));
            let l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2));
            let l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
            y0 * l0 + y1 * l1 + y2 * l2
        } else {
            let t = (x - self.xs[lo]) / (self.xs[lo + 1] - self.xs[lo]);
            self.ss[lo] * (1.0 - t) + self.ss[lo + 1] * t
        }
    }
}

/// Composite Simpson over one (short) cell.
fn simpson_cell(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (g(a) + 4.0 * g(m) + g(b))
}

/// Nodes on [lo, hi] through x0: geometric clustering toward both endpoints,
/// denser near `lo` and `hi` where criterion integrands can blow up.
fn graded_nodes(lo: f64, x0: f64, hi: f64, n_half: usize) -> Vec<f64> {
    let mut xs = Vec::with_capacity(2 * n_half + 1);
    // Left block: from lo to x0, clustered toward lo.
    for i in 0..n_half {
        let t = i as f64 / n_half as f64; // 0 -> lo, 1 -> x0
        let w = 1.0 - (1.0 - t).powi(3);
        xs.push(lo + (x0 - lo) * w);
    }
    xs.push(x0);
    // Right block: from x0 to hi, clustered toward hi.
    for i in 1..=n_half {
        let t = i as f64 / n_half as f64;
        let w = t.powi(3);
        xs.push(x0 + (hi - x0) * w);
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs
}

//! Crank--Nicolson finite-difference solver for the remainder-function
//! equation f_t = (1/2) sigma^2 f_xx + kappa f_x and its derivative
//! equation, which carries the extra reaction term kappa'.
//!
//! The solver marches forward from the initial slice, uses zero-curvature
//! (linear extrapolation) boundary conditions at both truncation edges,
//! switches to upwind convection per cell when the cell Peclet number
//! exceeds 2, and solves the tridiagonal systems with the Thomas algorithm.

use crate::catalog::ModelParams;
use crate::diffusion::Quadruple;
use crate::field::ScalarField;
use crate::{Error, Result};

/// Blow-up guard: a solve fails if the max norm ever exceeds this multiple
/// of the initial slice's max norm.
const GROWTH_LIMIT: f64 = 10.0;

/// Working coordinate of the spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    Native,
    Log,
}

/// Spatial truncation and resolution of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_t: usize,
    pub coordinate: Coordinate,
}

impl PdeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::Contract(format!(
                "grid requires finite x_min < x_max, got ({}, {})",
                self.x_min, self.x_max
            )));
        }
        if self.n_x < 50 || self.n_t < 50 {
            return Err(Error::Contract(format!(
                "grid requires n_x >= 50 and n_t >= 50, got ({}, {})",
                self.n_x, self.n_t
            )));
        }
        if self.coordinate == Coordinate::Log && !(self.x_min > 0.0) {
            return Err(Error::Contract(
                "log coordinate requires a positive truncation".into(),
            ));
        }
        Ok(())
    }

    /// Truncation at the stationary quantiles [0.0005, 0.9995] of the
    /// model's eigen-measure dynamics, widened 25% on each side.
    pub fn auto(model: &ModelParams, n_x: usize, n_t: usize, coordinate: Coordinate) -> Result<Self> {
        let lo = model.stationary_quantile(0.0005)? / 1.25;
        let hi = model.stationary_quantile(0.9995)? * 1.25;
        let g = PdeGrid {
            x_min: lo,
            x_max: hi,
            n_x,
            n_t,
            coordinate,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Solution surface on the full time-space lattice, `values[k][i]` at time
/// `times[k]` and state `xs[i]`.
#[derive(Debug, Clone)]
pub struct PdeSurface {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl PdeSurface {
    /// Linear interpolation in state at a stored time index.
    pub fn value_at(&self, t_index: usize, x: f64) -> Result<f64> {
        let xs = &self.xs;
        if t_index >= self.values.len() {
            return Err(Error::Contract(format!(
                "time index {t_index} out of range ({} slices)",
                self.values.len()
            )));
        }
        if x < xs[0] || x > xs[xs.len() - 1] {
            return Err(Error::Domain(format!(
                "query state {x} outside truncation [{}, {}]",
                xs[0],
                xs[xs.len() - 1]
            )));
        }
        let mut lo = 0usize;
        let mut hi = xs.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
        let row = &self.values[t_index];
        Ok(row[lo] * (1.0 - w) + row[hi] * w)
    }

    /// Value at the final maturity.
    pub fn final_at(&self, x: f64) -> Result<f64> {
        self.value_at(self.values.len() - 1, x)
    }

    /// Index of the stored time closest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        let dt = self.times[1] - self.times[0];
        ((t / dt).round() as usize).min(self.times.len() - 1)
    }

    /// Central-difference state derivative of a stored slice at `x`, using
    /// the local node spacing (grids may be nonuniform in state).
    pub fn state_derivative_at(&self, t_index: usize, x: f64) -> Result<f64> {
        let mut lo = 0usize;
        let mut hi = self.xs.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.xs[hi] - self.xs[lo];
        let up = self.value_at(t_index, x + h)?;
        let down = self.value_at(t_index, x - h)?;
        Ok((up - down) / (2.0 * h))
    }

    /// Dump the surface as `t,x,value` rows.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "t,x,value")?;
        for (k, row) in self.values.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(out, "{:.17e},{:.17e},{:.17e}", self.times[k], self.xs[i], v)?;
            }
        }
        Ok(())
    }
}

/// Per-node operator coefficients of L f = D f'' + V f' + R f in the
/// working coordinate.
struct Stencil {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

fn build_stencil(d: &[f64], v: &[f64], r: &[f64], h: f64) -> Stencil {
    let n = d.len();
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    for i in 0..n {
        let diff = d[i] / (h * h);
        let peclet = v[i].abs() * h / (2.0 * d[i].max(1e-300));
        if peclet <= 2.0 {
            lo[i] = diff - v[i] / (2.0 * h);
            di[i] = -2.0 * diff + r[i];
            up[i] = diff + v[i] / (2.0 * h);
        } else if v[i] > 0.0 {
            lo[i] = diff;
            di[i] = -2.0 * diff - v[i] / h + r[i];
            up[i] = diff + v[i] / h;
        } else {
            lo[i] = diff - v[i] / h;
            di[i] = -2.0 * diff + v[i] / h + r[i];
            up[i] = diff;
        }
    }
    Stencil { lo, di, up }
}

/// Thomas algorithm for a tridiagonal system; overwrites nothing, returns x.
fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = di.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = di[0];
    if denom == 0.0 {
        return Err(Error::Solver("singular tridiagonal pivot".into()));
    }
    c[0] = up[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = di[i] - lo[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::Solver("singular tridiagonal pivot".into()));
        }
        c[i] = up[i] / denom;
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Generic Crank--Nicolson march. `us` are the uniformly spaced working
/// coordinates the operator is discretized in; `xs` are the corresponding
/// states stored on the output surface.
#[allow(clippy::too_many_arguments)]
fn crank_nicolson(
    us: &[f64],
    xs: Vec<f64>,
    d: Vec<f64>,
    v: Vec<f64>,
    r: Vec<f64>,
    initial: Vec<f64>,
    n_t: usize,
    horizon: f64,
) -> Result<PdeSurface> {
    let n = xs.len();
    let m = n - 2; // interior unknowns
    let h = us[1] - us[0];
    let dt = horizon / n_t as f64;
    let st = build_stencil(&d[1..n - 1], &v[1..n - 1], &r[1..n - 1], h);

    // Fold the zero-curvature boundary rules f_0 = 2 f_1 - f_2 and
    // f_{n-1} = 2 f_{n-2} - f_{n-3} into the first and last interior rows.
    let mut l_lo = st.lo.clone();
    let mut l_di = st.di.clone();
    let mut l_up = st.up.clone();
    l_di[0] += 2.0 * st.lo[0];
    l_up[0] -= st.lo[0];
    l_lo[0] = 0.0;
    l_di[m - 1] += 2.0 * st.up[m - 1];
    l_lo[m - 1] -= st.up[m - 1];
    l_up[m - 1] = 0.0;

    // Implicit matrix A = I - dt/2 L. The same matrix serves both the
    // Crank--Nicolson step and a backward-Euler half-step of size dt/2.
    let a_lo: Vec<f64> = l_lo.iter().map(|&x| -0.5 * dt * x).collect();
    let a_di: Vec<f64> = l_di.iter().map(|&x| 1.0 - 0.5 * dt * x).collect();
    let a_up: Vec<f64> = l_up.iter().map(|&x| -0.5 * dt * x).collect();

    let extrapolate = |f: &mut Vec<f64>| {
        f[0] = 2.0 * f[1] - f[2];
        f[n - 1] = 2.0 * f[n - 2] - f[n - 3];
    };

    let mut f = initial;
    extrapolate(&mut f);
    let cap = GROWTH_LIMIT * f.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())).max(1e-300);

    let mut times = Vec::with_capacity(n_t + 1);
    let mut values = Vec::with_capacity(n_t + 1);
    times.push(0.0);
    values.push(f.clone());

    // Rannacher start: the first two steps run as damped backward-Euler
    // half-step pairs, suppressing the oscillatory modes Crank--Nicolson
    // would otherwise carry; global order stays two.
    const RANNACHER_STEPS: usize = 2;

    let mut rhs = vec![0.0; m];
    for k in 1..=n_t {
        if k <= RANNACHER_STEPS {
            for _ in 0..2 {
                rhs.copy_from_slice(&f[1..=m]);
                let interior = thomas(&a_lo, &a_di, &a_up, &rhs)?;
                f[1..(m + 1)].copy_from_slice(&interior);
                extrapolate(&mut f);
            }
        } else {
            for i in 0..m {
                let li = l_lo[i] * if i > 0 { f[i] } else { 0.0 }
                    + l_di[i] * f[i + 1]
                    + l_up[i] * if i + 1 < m { f[i + 2] } else { 0.0 };
                rhs[i] = f[i + 1] + 0.5 * dt * li;
            }
            let interior = thomas(&a_lo, &a_di, &a_up, &rhs)?;
            f[1..(m + 1)].copy_from_slice(&interior);
            extrapolate(&mut f);
        }
        let worst = f.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
        if !worst.is_finite() || worst > cap {
            return Err(Error::Solver(format!(
                "max-norm grew to {worst:.3e} at step {k}; refine the grid"
            )));
        }
        times.push(k as f64 * dt);
        values.push(f.clone());
    }
    Ok(PdeSurface {
        times,
        xs,
        values,
    })
}

fn node_coordinates(grid: &PdeGrid) -> (Vec<f64>, Vec<f64>) {
    // Returns (working coordinates u, states x).
    match grid.coordinate {
        Coordinate::Native => {
            let us: Vec<f64> = (0..grid.n_x)
                .map(|i| {
                    grid.x_min + (grid.x_max - grid.x_min) * i as f64 / (grid.n_x - 1) as f64
                })
                .collect();
            let xs = us.clone();
            (us, xs)
        }
        Coordinate::Log => {
            let (a, b) = (grid.x_min.ln(), grid.x_max.ln());
            let us: Vec<f64> = (0..grid.n_x)
                .map(|i| a + (b - a) * i as f64 / (grid.n_x - 1) as f64)
                .collect();
            let xs = us.iter().map(|u| u.exp()).collect();
            (us, xs)
        }
    }
}

/// Solve f_t = (1/2) sigma^2 f_xx + kappa f_x with f(0, .) = initial.
pub fn solve_remainder(
    kappa: &ScalarField,
    sigma: &ScalarField,
    initial: &ScalarField,
    grid: &PdeGrid,
    horizon: f64,
) -> Result<PdeSurface> {
    solve_convection_diffusion(kappa, sigma, None, initial, grid, horizon)
}

/// Solve the derivative equation u_t = (1/2) sigma^2 u_xx
/// + (kappa + sigma' sigma) u_x + kappa' u with u(0, .) = initial, where the
/// hatted quadruple supplies drift kappa + sigma' sigma and discount -kappa'.
pub fn solve_fx(
    hatted: &Quadruple,
    initial: &ScalarField,
    grid: &PdeGrid,
    horizon: f64,
) -> Result<PdeSurface> {
    let reaction = {
        let disc = hatted.discount.clone();
        ScalarField::new(move |x| -disc.eval(x))
    };
    solve_convection_diffusion(&hatted.drift, &hatted.vol, Some(&reaction), initial, grid, horizon)
}

/// Shared driver: optional reaction term, coordinate transform, coefficient
/// sampling, and the CN march.
pub fn solve_convection_diffusion(
    convection: &ScalarField,
    sigma: &ScalarField,
    reaction: Option<&ScalarField>,
    initial: &ScalarField,
    grid: &PdeGrid,
    horizon: f64,
) -> Result<PdeSurface> {
    grid.validate()?;
    if !(horizon > 0.0) {
        return Err(Error::Contract(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let (us, xs) = node_coordinates(grid);
    let n = xs.len();
    let mut d = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut init = vec![0.0; n];
    for i in 0..n {
        let x = xs[i];
        let s = sigma.eval(x);
        let diff = 0.5 * s * s;
        let conv = convection.eval(x);
        match grid.coordinate {
            Coordinate::Native => {
                d[i] = diff;
                v[i] = conv;
            }
            Coordinate::Log => {
                // With u = ln x: f_x = e^{-u} f_u, f_xx = e^{-2u}(f_uu - f_u).
                let e = (-us[i]).exp();
                d[i] = diff * e * e;
                v[i] = conv * e - diff * e * e;
            }
        }
        r[i] = reaction.map_or(0.0, |f| f.eval(x));
        init[i] = initial.eval(x);
        if !(d[i].is_finite() && v[i].is_finite() && r[i].is_finite() && init[i].is_finite()) {
            return Err(Error::Numerics(format!(
                "non-finite coefficient or data at x = {x}"
            )));
        }
        if d[i] < 0.0 {
            return Err(Error::Numerics(format!("negative diffusion at x = {x}")));
        }
    }
    crank_nicolson(&us, xs, d, v, r, init, grid.n_t, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{cir_fx_closed, cir_price_closed, CirParams, PayoffKind};
    use crate::catalog::ModelParams;

    fn canonical_grid(n: usize) -> PdeGrid {
        PdeGrid::auto(
            &ModelParams::Cir(CirParams::canonical()),
            n,
            n,
            Coordinate::Native,
        )
        .unwrap()
    }

    #[test]
    fn constant_initial_data_is_preserved() {
        // h = phi: remainder is identically 1.
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::One).unwrap();
        let grid = canonical_grid(100);
        let s = solve_remainder(
            &chain.kappa,
            &chain.base.vol,
            &ScalarField::constant(1.0),
            &grid,
            1.0,
        )
        .unwrap();
        for row in &s.values {
            for v in row {
                assert!((v - 1.0).abs() < 1e-10, "constant drifted to {v}");
            }
        }
    }

    #[test]
    fn zero_initial_data_stays_zero() {
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::One).unwrap();
        let grid = canonical_grid(80);
        let s = solve_fx(&chain.hatted, &ScalarField::constant(0.0), &grid, 1.0).unwrap();
        for row in &s.values {
            for v in row {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn maximum_principle_for_pure_convection_diffusion() {
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::One).unwrap();
        let grid = canonical_grid(120);
        // Bounded data in [0, 1] with flat tails at both truncation edges,
        // compatible with the zero-curvature boundary rule.
        let init = ScalarField::new(|x: f64| 1.0 / (1.0 + (-4.0 * (x - 1.2)).exp()));
        let s = solve_remainder(&chain.kappa, &chain.base.vol, &init, &grid, 2.0).unwrap();
        for row in &s.values {
            for v in row {
                assert!(
                    *v >= -1e-8 && *v <= 1.0 + 1e-8,
                    "maximum principle violated: {v}"
                );
            }
        }
    }

    #[test]
    fn remainder_matches_closed_form_value() {
        // f(2, 1) for the canonical record vs the exponential-moment value.
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::One).unwrap();
        let grid = canonical_grid(400);
        let eta = p.eta();
        let init = ScalarField::new(move |x: f64| (eta * x).exp());
        let s = solve_remainder(&chain.kappa, &chain.base.vol, &init, &grid, 2.0).unwrap();
        let got = s.final_at(1.0).unwrap();
        let want = crate::catalog::cir_remainder_closed(&p, 2.0, 1.0).unwrap();
        let rel = (got - want).abs() / want;
        assert!(rel < 1e-3, "remainder rel err {rel:.2e}");
        // Price recomposition agrees with the closed price.
        let price = (-eta * 1.0f64).exp() * (-p.lambda() * 2.0).exp() * got;
        let closed = cir_price_closed(&p, 2.0).unwrap();
        assert!((price - closed).abs() / closed < 1e-3);
    }

    #[test]
    fn fx_matches_closed_form_value() {
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::One).unwrap();
        let grid = canonical_grid(400);
        let s = solve_fx(&chain.hatted, &chain.hatted.payoff, &grid, 2.0).unwrap();
        let got = s.final_at(1.0).unwrap();
        let want = cir_fx_closed(&p, 2.0).unwrap();
        let rel = (got - want).abs() / want;
        assert!(rel < 1e-3, "fx rel err {rel:.2e}");
    }

    #[test]
    fn refinement_is_second_order() {
        // Truncation wide enough that the boundary error sits far below the
        // discretization error being measured.
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::One).unwrap();
        let eta = p.eta();
        let init = ScalarField::new(move |x: f64| (eta * x).exp());
        let want = crate::catalog::cir_remainder_closed(&p, 2.0, 1.0).unwrap();
        let mut errs = Vec::new();
        for n in [400, 566, 800] {
            let grid = PdeGrid {
                x_min: 0.002,
                x_max: 8.0,
                n_x: n,
                n_t: n,
                coordinate: Coordinate::Native,
            };
            let s = solve_remainder(&chain.kappa, &chain.base.vol, &init, &grid, 2.0).unwrap();
            errs.push((s.final_at(1.0).unwrap() - want).abs());
        }
        // Successive grids refine by sqrt(2).
        let step = 2.0f64.sqrt().log2();
        let order1 = (errs[0] / errs[1]).log2() / step;
        let order2 = (errs[1] / errs[2]).log2() / step;
        for o in [order1, order2] {
            assert!(
                (1.7..=2.3).contains(&o),
                "observed order {o} outside [1.7, 2.3] (errors {errs:?})"
            );
        }
    }

    #[test]
    fn log_coordinate_agrees_with_native() {
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::One).unwrap();
        let eta = p.eta();
        let init = ScalarField::new(move |x: f64| (eta * x).exp());
        let native = canonical_grid(400);
        let log = PdeGrid {
            coordinate: Coordinate::Log,
            ..native
        };
        let a = solve_remainder(&chain.kappa, &chain.base.vol, &init, &native, 1.0).unwrap();
        let b = solve_remainder(&chain.kappa, &chain.base.vol, &init, &log, 1.0).unwrap();
        let (va, vb) = (a.final_at(1.0).unwrap(), b.final_at(1.0).unwrap());
        // The log grid is coarse where the data lives; agreement is looser.
        assert!(
            (va - vb).abs() / va.abs() < 1e-2,
            "coordinate mismatch {va} vs {vb}"
        );
    }

    #[test]
    fn grid_validation() {
        let mut g = canonical_grid(100);
        g.n_x = 10;
        assert!(g.validate().is_err());
        let mut g2 = canonical_grid(100);
        g2.x_min = g2.x_max + 1.0;
        assert!(g2.validate().is_err());
    }
}

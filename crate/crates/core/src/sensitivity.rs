//! Sensitivity curves over maturity grids, exponential-rate and boundedness
//! fits, and the time-integral representation estimators for drift and
//! diffusion parameter sensitivities of the square-root model.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::catalog::{
    bump_param, cir_remainder_closed, cir_remainder_fx, cir_remainder_fxx, CirParams, ModelParams,
    ParamId, PayoffKind,
};
use crate::diffusion::Quadruple;
use crate::montecarlo::{cir_exact_transition, path_rng, Estimate, Measure, PathConfig, Scheme};
use crate::pde::{solve_fx, solve_remainder, Coordinate, PdeGrid};
use crate::{Error, Result};

/// Relative bump for differentiating closed-form prices.
pub const CLOSED_BUMP: f64 = 1e-5;

/// Relative bump for Monte Carlo differentiation (noise floor).
pub const MC_BUMP: f64 = 1e-3;

/// Default maturity window for rate fits; earlier maturities are transient.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (2.0, 12.0);

/// How a curve value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Closed,
    Mc,
    Pde,
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodKind::Closed => f.write_str("closed"),
            MethodKind::Mc => f.write_str("mc"),
            MethodKind::Pde => f.write_str("pde"),
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(MethodKind::Closed),
            "mc" => Ok(MethodKind::Mc),
            "pde" => Ok(MethodKind::Pde),
            other => Err(Error::Contract(format!("unknown method '{other}'"))),
        }
    }
}

/// Resolution parameters for the PDE method; the spatial truncation is
/// taken from the model's stationary quantiles unless overridden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeSpec {
    pub n_x: usize,
    pub n_t_per_unit: usize,
    pub coordinate: Coordinate,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
}

impl Default for PdeSpec {
    fn default() -> Self {
        PdeSpec {
            n_x: 400,
            n_t_per_unit: 200,
            coordinate: Coordinate::Native,
            x_min: None,
            x_max: None,
        }
    }
}

impl PdeSpec {
    fn grid(&self, model: &ModelParams, horizon: f64) -> Result<PdeGrid> {
        let n_t = (self.n_t_per_unit as f64 * horizon).ceil() as usize;
        let mut grid = PdeGrid::auto(model, self.n_x, n_t.max(50), self.coordinate)?;
        if let Some(lo) = self.x_min {
            grid.x_min = lo;
        }
        if let Some(hi) = self.x_max {
            grid.x_max = hi;
        }
        grid.validate()?;
        Ok(grid)
    }
}

/// Computation route of a sensitivity curve.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodSpec {
    Closed,
    Mc(PathConfig),
    Pde(PdeSpec),
}

impl MethodSpec {
    pub fn kind(&self) -> MethodKind {
        match self {
            MethodSpec::Closed => MethodKind::Closed,
            MethodSpec::Mc(_) => MethodKind::Mc,
            MethodSpec::Pde(_) => MethodKind::Pde,
        }
    }
}

/// One maturity point of a sensitivity curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
    pub std_error: Option<f64>,
    pub method: MethodKind,
}

/// Exponential decay fit of an error series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub low_confidence: bool,
}

/// Boundedness summary of a transformed O(1/T) series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundednessStat {
    pub sup: f64,
    pub trend_slope: f64,
}

impl BoundednessStat {
    /// A positive tail trend marks the series as unbounded.
    pub fn flagged_unbounded(&self, slope_tol: f64) -> bool {
        self.trend_slope > slope_tol
    }
}

fn check_t_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Contract("empty maturity grid".into()));
    }
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Contract("maturities must be positive".into()));
    }
    Ok(())
}

/// First-order initial-state sensitivity d/dxi ln p_T on a maturity grid.
pub fn delta_curve(
    model: &ModelParams,
    t_grid: &[f64],
    method: &MethodSpec,
    payoff: PayoffKind,
) -> Result<Vec<CurvePoint>> {
    check_t_grid(t_grid)?;
    model.validate()?;
    match method {
        MethodSpec::Closed => t_grid
            .iter()
            .map(|&t| {
                let (delta, _) = model.closed_log_derivs(t, payoff)?;
                Ok(CurvePoint {
                    t,
                    value: delta,
                    std_error: None,
                    method: MethodKind::Closed,
                })
            })
            .collect(),
        MethodSpec::Mc(cfg) => {
            let xi = model.xi();
            let q = model.quadruple(payoff);
            t_grid
                .iter()
                .map(|&t| {
                    let (value, se) = mc_delta(&q, xi, t, cfg)?;
                    Ok(CurvePoint {
                        t,
                        value,
                        std_error: Some(se),
                        method: MethodKind::Mc,
                    })
                })
                .collect()
        }
        MethodSpec::Pde(spec) => {
            let series = pde_log_derivs(model, t_grid, spec, payoff)?;
            Ok(series
                .into_iter()
                .map(|(t, delta, _)| CurvePoint {
                    t,
                    value: delta,
                    std_error: None,
                    method: MethodKind::Pde,
                })
                .collect())
        }
    }
}

/// Second-order curve: values d2/dxi2 p_T / p_T plus the combo statistic
/// whose decay rate doubles.
pub fn gamma_curve(
    model: &ModelParams,
    t_grid: &[f64],
    method: &MethodSpec,
    payoff: PayoffKind,
) -> Result<(Vec<CurvePoint>, Vec<CurvePoint>)> {
    check_t_grid(t_grid)?;
    model.validate()?;
    let mut gammas = Vec::with_capacity(t_grid.len());
    let mut combos = Vec::with_capacity(t_grid.len());
    match method {
        MethodSpec::Closed => {
            for &t in t_grid {
                let (delta, gamma) = model.closed_log_derivs(t, payoff)?;
                gammas.push(CurvePoint {
                    t,
                    value: gamma,
                    std_error: None,
                    method: MethodKind::Closed,
                });
                combos.push(CurvePoint {
                    t,
                    value: combo_statistic(model, delta, gamma),
                    std_error: None,
                    method: MethodKind::Closed,
                });
            }
        }
        MethodSpec::Mc(cfg) => {
            if cfg.n_paths < 1_000_000 {
                log::warn!(
                    "second-order Monte Carlo differences with n_paths = {} < 1e6 are noisy",
                    cfg.n_paths
                );
            }
            let xi = model.xi();
            let q = model.quadruple(payoff);
            for &t in t_grid {
                let (delta, gamma, se) = mc_gamma(&q, xi, t, cfg)?;
                gammas.push(CurvePoint {
                    t,
                    value: gamma,
                    std_error: Some(se),
                    method: MethodKind::Mc,
                });
                combos.push(CurvePoint {
                    t,
                    value: combo_statistic(model, delta, gamma),
                    std_error: Some(se),
                    method: MethodKind::Mc,
                });
            }
        }
        MethodSpec::Pde(spec) => {
            for (t, delta, gamma) in pde_log_derivs(model, t_grid, spec, payoff)? {
                gammas.push(CurvePoint {
                    t,
                    value: gamma,
                    std_error: None,
                    method: MethodKind::Pde,
                });
                combos.push(CurvePoint {
                    t,
                    value: combo_statistic(model, delta, gamma),
                    std_error: None,
                    method: MethodKind::Pde,
                });
            }
        }
    }
    Ok((gammas, combos))
}

/// The second-order combination whose decay rate doubles:
/// gamma - delta^2 - phi''/phi + (phi'/phi)^2 - (phi_hat'/phi_hat)(delta - phi'/phi).
pub fn combo_statistic(model: &ModelParams, delta: f64, gamma: f64) -> f64 {
    let g1 = model.phi_log_deriv();
    let g2 = model.phi_curvature();
    let h1 = model.phi_hat_log_deriv();
    gamma - delta * delta - g2 + g1 * g1 - h1 * (delta - g1)
}

/// Time-averaged parameter sensitivity (1/T) d/dparam ln p_T on a maturity
/// grid, from the closed-form pricer differentiated by a central bump.
pub fn param_curve(
    model: &ModelParams,
    param: ParamId,
    t_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    check_t_grid(t_grid)?;
    model.validate()?;
    let up = bump_param(model, param, CLOSED_BUMP)?;
    let down = bump_param(model, param, -CLOSED_BUMP)?;
    let base = param_value(model, param)?;
    t_grid
        .iter()
        .map(|&t| {
            let pu = up.price_closed(t)?;
            let pd = down.price_closed(t)?;
            if !(pu > 0.0 && pd > 0.0) {
                return Err(Error::Numerics(format!(
                    "closed price non-positive at t = {t}"
                )));
            }
            let dlnp = (pu.ln() - pd.ln()) / (2.0 * base * CLOSED_BUMP);
            Ok(CurvePoint {
                t,
                value: dlnp / t,
                std_error: None,
                method: MethodKind::Closed,
            })
        })
        .collect()
}

fn param_value(model: &ModelParams, param: ParamId) -> Result<f64> {
    let v = match (model, param) {
        (ModelParams::Cir(p), ParamId::A) => p.a,
        (ModelParams::Cir(p), ParamId::B) => p.b,
        (ModelParams::Cir(p), ParamId::Sigma) => p.sigma,
        (ModelParams::ThreeHalves(p), ParamId::A) => p.a,
        (ModelParams::ThreeHalves(p), ParamId::B) => p.b,
        (ModelParams::ThreeHalves(p), ParamId::Sigma) => p.sigma,
        (ModelParams::Cev(p), ParamId::Mu) => p.mu,
        (ModelParams::Cev(p), ParamId::Theta) => p.theta,
        (ModelParams::Cev(p), ParamId::Sigma) => p.sigma,
        (ModelParams::Cev(p), ParamId::Beta) => p.beta,
        _ => {
            return Err(Error::Contract(format!(
                "parameter '{param}' does not exist on this family"
            )))
        }
    };
    Ok(v)
}

/// Least-squares fit of ln e on T inside the window; rate = -slope.
pub fn rate_fit(errors: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect();
    if pts.len() < 4 {
        return Err(Error::Contract(format!(
            "rate fit needs at least 4 points in the window, got {}",
            pts.len()
        )));
    }
    if let Some(&(t, e)) = pts.iter().find(|&&(_, e)| !(e > 0.0)) {
        return Err(Error::Contract(format!(
            "rate fit requires positive errors, got {e} at T = {t}"
        )));
    }
    let n = pts.len() as f64;
    let (mut st, mut sy, mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, e) in &pts {
        let y = e.ln();
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
        syy += y * y;
    }
    let denom = n * stt - st * st;
    if denom == 0.0 {
        return Err(Error::Contract("degenerate maturity grid".into()));
    }
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    let ss_tot = syy - sy * sy / n;
    let ss_res: f64 = pts
        .iter()
        .map(|&(t, e)| {
            let r = e.ln() - (intercept + slope * t);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RateFit {
        rate: -slope,
        intercept,
        r_squared,
        window,
        low_confidence: r_squared < 0.9,
    })
}

/// Transform an O(1/T) series: w(T) = T |v(T) - limit|, report its sup and
/// the slope of the tail regression (tail = upper half of the maturity
/// range). Nonpositive trend certifies boundedness.
pub fn boundedness_stat(values: &[(f64, f64)], limit: f64) -> Result<BoundednessStat> {
    if values.len() < 4 {
        return Err(Error::Contract(
            "boundedness statistic needs at least 4 points".into(),
        ));
    }
    let w: Vec<(f64, f64)> = values
        .iter()
        .map(|&(t, v)| (t, t * (v - limit).abs()))
        .collect();
    let sup = w.iter().fold(0.0f64, |acc, &(_, x)| acc.max(x));
    let t_min = w.iter().map(|&(t, _)| t).fold(f64::INFINITY, f64::min);
    let t_max = w.iter().map(|&(t, _)| t).fold(f64::NEG_INFINITY, f64::max);
    let cut = 0.5 * (t_min + t_max);
    let mut tail: Vec<(f64, f64)> = w.iter().copied().filter(|&(t, _)| t >= cut).collect();
    if tail.len() < 4 {
        tail = w[w.len().saturating_sub(4)..].to_vec();
    }
    let n = tail.len() as f64;
    let st: f64 = tail.iter().map(|&(t, _)| t).sum();
    let sy: f64 = tail.iter().map(|&(_, y)| y).sum();
    let stt: f64 = tail.iter().map(|&(t, _)| t * t).sum();
    let sty: f64 = tail.iter().map(|&(t, y)| t * y).sum();
    let denom = n * stt - st * st;
    let trend_slope = if denom != 0.0 {
        (n * sty - st * sy) / denom
    } else {
        0.0
    };
    Ok(BoundednessStat { sup, trend_slope })
}

// ---------------------------------------------------------------------------
// Monte Carlo curve internals (common random numbers)
// ---------------------------------------------------------------------------

/// Discounted payoff at maturity for several initial states driven by the
/// same Gaussian increments (one stream per path). Euler full truncation:
/// states may differ, noise does not.
fn crn_terminal_values(
    q: &Quadruple,
    x0s: &[f64],
    horizon: f64,
    cfg: &PathConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut leg_cfg = *cfg;
    leg_cfg.horizon = horizon;
    leg_cfg.n_steps = ((cfg.n_steps as f64 * horizon / cfg.horizon).ceil() as usize).max(1);
    leg_cfg.validate()?;
    let n_steps = leg_cfg.n_steps;
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let k = x0s.len();
    let per_path: Vec<Vec<f64>> = (0..leg_cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(leg_cfg.seed, i as u64);
            let mut xs: Vec<f64> = x0s.to_vec();
            let mut integrals = vec![0.0f64; k];
            let mut rho_prev: Vec<f64> = xs
                .iter()
                .map(|&x| q.discount.eval(q.domain.clamp_interior(x, 1e-12)))
                .collect();
            for _ in 0..n_steps {
                let z: f64 = rng.sample(StandardNormal);
                for j in 0..k {
                    let xc = q.domain.clamp_interior(xs[j], 1e-12);
                    xs[j] += q.drift.eval(xc) * dt + q.vol.eval(xc) * sqrt_dt * z;
                    let rho_next = q.discount.eval(q.domain.clamp_interior(xs[j], 1e-12));
                    integrals[j] += 0.5 * (rho_prev[j] + rho_next) * dt;
                    rho_prev[j] = rho_next;
                }
            }
            (0..k)
                .map(|j| {
                    let xc = q.domain.clamp_interior(xs[j], 1e-12);
                    (-integrals[j]).exp() * q.payoff.eval(xc)
                })
                .collect()
        })
        .collect();
    // Transpose to per-leg vectors in path order.
    let mut legs = vec![Vec::with_capacity(leg_cfg.n_paths); k];
    for row in per_path {
        for (j, v) in row.into_iter().enumerate() {
            legs[j].push(v);
        }
    }
    Ok(legs)
}

/// Delta-method standard error of mean(a)/mean(b).
fn ratio_stats(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    let nm1 = n - 1.0;
    let (vaa, vbb, vab) = (saa / nm1 / n, sbb / nm1 / n, sab / nm1 / n);
    let ratio = ma / mb;
    let var = (vaa - 2.0 * ratio * vab + ratio * ratio * vbb) / (mb * mb);
    (ratio, var.max(0.0).sqrt())
}

fn mc_delta(q: &Quadruple, xi: f64, t: f64, cfg: &PathConfig) -> Result<(f64, f64)> {
    let h = MC_BUMP;
    let legs = crn_terminal_values(q, &[xi * (1.0 - h), xi * (1.0 + h)], t, cfg)?;
    let denom = 2.0 * xi * h;
    let a: Vec<f64> = legs[1]
        .iter()
        .zip(&legs[0])
        .map(|(u, d)| (u - d) / denom)
        .collect();
    let b: Vec<f64> = legs[1]
        .iter()
        .zip(&legs[0])
        .map(|(u, d)| 0.5 * (u + d))
        .collect();
    Ok(ratio_stats(&a, &b))
}

fn mc_gamma(q: &Quadruple, xi: f64, t: f64, cfg: &PathConfig) -> Result<(f64, f64, f64)> {
    let h = MC_BUMP;
    let legs = crn_terminal_values(q, &[xi * (1.0 - h), xi, xi * (1.0 + h)], t, cfg)?;
    let dx = xi * h;
    let second: Vec<f64> = (0..legs[0].len())
        .map(|i| (legs[2][i] - 2.0 * legs[1][i] + legs[0][i]) / (dx * dx))
        .collect();
    let (gamma, se) = ratio_stats(&second, &legs[1]);
    let first: Vec<f64> = (0..legs[0].len())
        .map(|i| (legs[2][i] - legs[0][i]) / (2.0 * dx))
        .collect();
    let (delta, _) = ratio_stats(&first, &legs[1]);
    Ok((delta, gamma, se))
}

// ---------------------------------------------------------------------------
// PDE curve internals
// ---------------------------------------------------------------------------

/// (delta, gamma) per maturity via the remainder and derivative solves.
/// Elasticity models run in reduced coordinates and pull the results back
/// through the state map.
fn pde_log_derivs(
    model: &ModelParams,
    t_grid: &[f64],
    spec: &PdeSpec,
    payoff: PayoffKind,
) -> Result<Vec<(f64, f64, f64)>> {
    if let ModelParams::Cev(p) = model {
        let (reduced, map) = crate::catalog::cev_reduce(p)?;
        let inner = match &reduced {
            ModelParams::Cir(c) => {
                let mut c = c.clone();
                c.xi = map.y0;
                ModelParams::Cir(c)
            }
            ModelParams::ThreeHalves(th) => {
                let mut th = th.clone();
                th.xi = map.y0;
                ModelParams::ThreeHalves(th)
            }
            ModelParams::Cev(_) => unreachable!(),
        };
        let series = pde_log_derivs(&inner, t_grid, spec, payoff)?;
        return Ok(series
            .into_iter()
            .map(|(t, d_y, g_y)| {
                let delta = d_y * map.dy0_dxi;
                let gamma = g_y * map.dy0_dxi * map.dy0_dxi + d_y * map.d2y0_dxi2;
                (t, delta, gamma)
            })
            .collect());
    }

    let xi = model.xi();
    let chain = model.chain(payoff)?;
    let g1 = model.phi_log_deriv();
    let g2 = model.phi_curvature();
    let remainder0 = chain.remainder_payoff();
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let grid = spec.grid(model, t)?;
        let f_surface = solve_remainder(&chain.kappa, &chain.base.vol, &remainder0, &grid, t)?;
        let fx_surface = solve_fx(&chain.hatted, &chain.hatted.payoff, &grid, t)?;
        let f = f_surface.final_at(xi)?;
        let fx = fx_surface.final_at(xi)?;
        let fxx = fx_surface.state_derivative_at(fx_surface.values.len() - 1, xi)?;
        if f == 0.0 {
            return Err(Error::Numerics(format!("remainder vanished at t = {t}")));
        }
        let delta = g1 + fx / f;
        let gamma = g2 + 2.0 * g1 * (fx / f) + fxx / f;
        out.push((t, delta, gamma));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Representation estimators (square-root model, h == 1)
// ---------------------------------------------------------------------------

/// Simulate square-root eigen-measure paths (exact transitions) and return
/// per-path states on the step grid, flattened as rows in path order.
fn hat_paths(p: &CirParams, t: f64, cfg: &PathConfig) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut run = *cfg;
    run.horizon = t;
    run.scheme = Scheme::CirExact {
        level: p.b,
        rate: p.alpha(),
        vol: p.sigma.abs(),
    };
    run.validate()?;
    let dt = t / run.n_steps as f64;
    let paths: Vec<Vec<f64>> = (0..run.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(run.seed, i as u64);
            let mut xs = Vec::with_capacity(run.n_steps + 1);
            let mut x = p.xi;
            xs.push(x);
            for _ in 0..run.n_steps {
                x = cir_exact_transition(x, dt, p.b, p.alpha(), p.sigma.abs(), &mut rng);
                xs.push(x);
            }
            xs
        })
        .collect();
    Ok((paths, dt))
}

/// Time-integral estimator of the drift-level sensitivity of the remainder
/// function: f_b(T, xi) as the expectation of int_0^T f_x(T - s, X_s) ds
/// along eigen-measure paths, with f_x supplied in closed form.
pub fn feps_representation(p: &CirParams, t: f64, cfg: &PathConfig) -> Result<Estimate> {
    p.validate()?;
    if t == 0.0 {
        return Ok(Estimate {
            mean: 0.0,
            std_error: 0.0,
            n: cfg.n_paths,
            measure: Measure::PHat,
            seed: cfg.seed,
        });
    }
    let (paths, dt) = hat_paths(p, t, cfg)?;
    let values: Vec<Option<f64>> = paths
        .par_iter()
        .map(|xs| {
            let mut acc = 0.0f64;
            let steps = xs.len() - 1;
            for k in 0..=steps {
                let s = k as f64 * dt;
                let g = cir_remainder_fx(p, t - s, xs[k]).unwrap_or(f64::NAN);
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                acc += w * g * dt;
            }
            if acc.is_finite() {
                Some(acc)
            } else {
                None
            }
        })
        .collect();
    summarize_values(&values, cfg.seed)
}

/// Time-integral estimator of the volatility-coefficient sensitivity of the
/// remainder function: sigma int X f_xx + ell int X f_x plus the terminal
/// term from the payoff-over-eigenfunction derivative, all in closed form
/// along eigen-measure paths.
pub fn cir_sigma_representation(p: &CirParams, t: f64, cfg: &PathConfig) -> Result<Estimate> {
    p.validate()?;
    if t == 0.0 {
        return Ok(Estimate {
            mean: 0.0,
            std_error: 0.0,
            n: cfg.n_paths,
            measure: Measure::PHat,
            seed: cfg.seed,
        });
    }
    let alpha = p.alpha();
    let sigma = p.sigma;
    let eta = p.eta();
    // d eta / d sigma = 2 q / (alpha sigma) - 2 (alpha - a) / sigma^3.
    let deta_dsigma =
        2.0 * p.q / (alpha * sigma) - 2.0 * (alpha - p.a) / (sigma * sigma * sigma);
    let (paths, dt) = hat_paths(p, t, cfg)?;
    let values: Vec<Option<f64>> = paths
        .par_iter()
        .map(|xs| {
            let steps = xs.len() - 1;
            let mut acc = 0.0f64;
            for k in 0..=steps {
                let s = k as f64 * dt;
                let x = xs[k];
                let fx = cir_remainder_fx(p, t - s, x).unwrap_or(f64::NAN);
                let fxx = cir_remainder_fxx(p, t - s, x).unwrap_or(f64::NAN);
                let integrand = sigma * x * fxx - (2.0 * p.q * sigma / alpha) * x * fx;
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                acc += w * integrand * dt;
            }
            let x_t = xs[steps];
            let terminal = deta_dsigma * x_t * (eta * x_t).exp();
            let total = acc + terminal;
            if total.is_finite() {
                Some(total)
            } else {
                None
            }
        })
        .collect();
    summarize_values(&values, cfg.seed)
}

/// Central bump of the closed-form remainder in the drift level b.
pub fn cir_remainder_b_bump(p: &CirParams, t: f64, rel: f64) -> Result<f64> {
    let mut up = p.clone();
    up.b = p.b * (1.0 + rel);
    let mut down = p.clone();
    down.b = p.b * (1.0 - rel);
    let fu = cir_remainder_closed(&up, t, p.xi)?;
    let fd = cir_remainder_closed(&down, t, p.xi)?;
    Ok((fu - fd) / (2.0 * p.b * rel))
}

/// Central bump of the closed-form remainder in the volatility coefficient.
pub fn cir_remainder_sigma_bump(p: &CirParams, t: f64, rel: f64) -> Result<f64> {
    let mut up = p.clone();
    up.sigma = p.sigma * (1.0 + rel);
    let mut down = p.clone();
    down.sigma = p.sigma * (1.0 - rel);
    let fu = cir_remainder_closed(&up, t, p.xi)?;
    let fd = cir_remainder_closed(&down, t, p.xi)?;
    Ok((fu - fd) / (2.0 * p.sigma * rel))
}

fn summarize_values(values: &[Option<f64>], seed: u64) -> Result<Estimate> {
    let kept: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let dropped = values.len() - kept.len();
    if dropped as f64 > 0.01 * values.len() as f64 {
        return Err(Error::Estimator(format!(
            "{dropped} of {} paths rejected",
            values.len()
        )));
    }
    let n = kept.len();
    if n < 2 {
        return Err(Error::Estimator("fewer than two usable paths".into()));
    }
    let mean = kept.iter().sum::<f64>() / n as f64;
    let ss = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Ok(Estimate {
        mean,
        std_error: (ss / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt(),
        n,
        measure: Measure::PHat,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ThreeHalvesParams;

    #[test]
    fn rate_fit_recovers_exact_exponential() {
        // e(T) = 2 e^{-1.5 T}.
        let pts: Vec<(f64, f64)> = (1..=5)
            .map(|k| {
                let t = k as f64;
                (t, 2.0 * (-1.5 * t).exp())
            })
            .collect();
        let fit = rate_fit(&pts, (0.5, 5.5)).unwrap();
        assert!((fit.rate - 1.5).abs() < 1e-12, "rate {}", fit.rate);
        assert!(
            (fit.intercept - 2.0f64.ln()).abs() < 1e-12,
            "intercept {}",
            fit.intercept
        );
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(!fit.low_confidence);
    }

    #[test]
    fn rate_fit_contract_errors() {
        let pts = vec![(1.0, 0.5), (2.0, 0.2), (3.0, -0.1), (4.0, 0.05)];
        assert!(rate_fit(&pts, (0.0, 10.0)).is_err(), "negative error");
        let few = vec![(1.0, 0.5), (2.0, 0.2), (3.0, 0.1)];
        assert!(rate_fit(&few, (0.0, 10.0)).is_err(), "too few points");
    }

    #[test]
    fn boundedness_transform_reference_cases() {
        // v(T) = limit + 0.3/T -> transformed series constant 0.3, trend 0.
        let limit = -0.7;
        let pts: Vec<(f64, f64)> = (5..=40)
            .step_by(5)
            .map(|k| {
                let t = k as f64;
                (t, limit + 0.3 / t)
            })
            .collect();
        let stat = boundedness_stat(&pts, limit).unwrap();
        assert!((stat.sup - 0.3).abs() < 1e-12);
        assert!(stat.trend_slope.abs() < 1e-12);
        assert!(!stat.flagged_unbounded(0.02));

        // v(T) = limit + ln(T)/T -> transformed ln T, increasing: flagged.
        let bad: Vec<(f64, f64)> = (5..=40)
            .step_by(5)
            .map(|k| {
                let t = k as f64;
                (t, limit + t.ln() / t)
            })
            .collect();
        let stat = boundedness_stat(&bad, limit).unwrap();
        assert!(stat.flagged_unbounded(0.02), "slope {}", stat.trend_slope);
    }

    #[test]
    fn closed_delta_curve_hits_documented_limits() {
        let cir = ModelParams::Cir(CirParams::canonical());
        let pts = delta_curve(&cir, &[30.0], &MethodSpec::Closed, PayoffKind::One).unwrap();
        assert!((pts[0].value + 0.7320508075688772).abs() < 1e-6);

        let th = ModelParams::ThreeHalves(ThreeHalvesParams::canonical());
        let pts = delta_curve(&th, &[20.0], &MethodSpec::Closed, PayoffKind::One).unwrap();
        assert!((pts[0].value + 0.5615528128088303).abs() < 1e-4);
    }

    #[test]
    fn eigenfunction_payoff_curve_is_flat() {
        let cir = ModelParams::Cir(CirParams::canonical());
        let pts = delta_curve(
            &cir,
            &[0.5, 1.0, 5.0],
            &MethodSpec::Closed,
            PayoffKind::Eigenfunction,
        )
        .unwrap();
        for p in pts {
            assert_eq!(p.value, -0.7320508075688772);
        }
    }

    #[test]
    fn cir_delta_error_decays_at_rate_alpha() {
        let cir = ModelParams::Cir(CirParams::canonical());
        let ts: Vec<f64> = (2..=12).map(|k| k as f64).collect();
        let pts = delta_curve(&cir, &ts, &MethodSpec::Closed, PayoffKind::One).unwrap();
        let errs: Vec<(f64, f64)> = pts
            .iter()
            .map(|p| (p.t, (p.value + 0.7320508075688772).abs()))
            .collect();
        let fit = rate_fit(&errs, DEFAULT_FIT_WINDOW).unwrap();
        let alpha = 1.7320508075688772;
        assert!(
            (fit.rate - alpha).abs() / alpha < 0.05,
            "rate {} vs alpha {alpha}",
            fit.rate
        );
        assert!(fit.r_squared >= 0.999, "r^2 {}", fit.r_squared);
    }

    #[test]
    fn param_curve_degenerates_gracefully() {
        // Wrong family parameter errors out.
        let cir = ModelParams::Cir(CirParams::canonical());
        assert!(param_curve(&cir, ParamId::Mu, &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn feps_representation_zero_horizon_is_exact_zero() {
        let p = CirParams::canonical();
        let cfg = PathConfig {
            horizon: 1.0,
            n_steps: 10,
            n_paths: 10,
            seed: 1,
            scheme: Scheme::EulerFullTruncation,
        };
        let est = feps_representation(&p, 0.0, &cfg).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn feps_representation_matches_closed_bump() {
        let p = CirParams::canonical();
        let cfg = PathConfig {
            horizon: 2.0,
            n_steps: 100,
            n_paths: 20_000,
            seed: 77,
            scheme: Scheme::EulerFullTruncation,
        };
        let est = feps_representation(&p, 2.0, &cfg).unwrap();
        let bump = cir_remainder_b_bump(&p, 2.0, CLOSED_BUMP).unwrap();
        assert!(
            (est.mean - bump).abs() < 3.0 * est.std_error,
            "repr {} vs bump {bump} (SE {})",
            est.mean,
            est.std_error
        );
    }
}

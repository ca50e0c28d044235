//! Seeded, parallel path simulation and price estimators.
//!
//! Reproducibility contract: every path owns an independent random stream
//! keyed by (seed, path index), and reductions run in path-index order, so
//! an estimate is bit-identical for a given (inputs, seed, n_paths) no
//! matter how many worker threads run the path loop.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::diffusion::{DecompositionChain, Quadruple};
use crate::field::{ScalarField, StateInterval};
use crate::{Error, Result};

/// Relative interior margin used when clamping excursive states for
/// coefficient evaluation under the full-truncation scheme.
const CLAMP_EPS: f64 = 1e-12;

/// Maximum tolerated fraction of rejected (non-finite) paths.
const MAX_REJECT_RATE: f64 = 0.01;

/// Discretization scheme for the state dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Euler--Maruyama with coefficients evaluated at the state clamped into
    /// the domain interior (full truncation).
    EulerFullTruncation,
    /// Exact square-root-diffusion transition via noncentral chi-square
    /// sampling; valid only when the dynamics are dX = (level - rate X) dt
    /// + vol sqrt(X) dB.
    CirExact { level: f64, rate: f64, vol: f64 },
}

/// Simulation request: horizon, discretization, and seeding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl PathConfig {
    /// Euler config with the default density of 100 steps per unit time.
    pub fn euler(horizon: f64, n_paths: usize, seed: u64) -> Self {
        PathConfig {
            horizon,
            n_steps: ((100.0 * horizon).ceil() as usize).max(1),
            n_paths,
            seed,
            scheme: Scheme::EulerFullTruncation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(Error::Contract("n_steps must be at least 1".into()));
        }
        if self.n_paths < 2 {
            return Err(Error::Contract("n_paths must be at least 2".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Contract(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Scheme::CirExact { level, rate, vol } = self.scheme {
            if !(level > 0.0 && rate > 0.0 && vol != 0.0) {
                return Err(Error::Contract(format!(
                    "exact square-root scheme requires level > 0, rate > 0, vol != 0; \
                     got ({level}, {rate}, {vol})"
                )));
            }
        }
        Ok(())
    }
}

/// Measure tag carried by estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    P,
    PHat,
    PTilde,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::P => f.write_str("P"),
            Measure::PHat => f.write_str("P-hat"),
            Measure::PTilde => f.write_str("P-tilde"),
        }
    }
}

/// Monte Carlo mean with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub measure: Measure,
    pub seed: u64,
}

impl Estimate {
    /// Combined standard error of the difference of two estimates.
    pub fn combined_se(&self, other: &Estimate) -> f64 {
        (self.std_error * self.std_error + other.std_error * other.std_error).sqrt()
    }

    /// |self - other| measured in combined standard errors.
    pub fn sigmas_from(&self, value: f64) -> f64 {
        (self.mean - value).abs() / self.std_error.max(1e-300)
    }
}

/// Deterministic per-path stream keyed by (seed, path index).
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let mut key = [0u8; 32];
    let a = mix(seed);
    let b = mix(path_index ^ 0x632be59bd9b4e019);
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        let w = mix(a ^ b.rotate_left(17 * i as u32) ^ (i as u64).wrapping_mul(0xd1342543de82ef95));
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Terminal state and accumulated discount integral of one path.
#[derive(Debug, Clone, Copy)]
pub struct TerminalOutcome {
    pub state: f64,
    pub integral: f64,
}

/// Output of a terminal simulation: per-path outcomes in path order plus
/// the rejection count (paths that went non-finite).
#[derive(Debug, Clone)]
pub struct TerminalSample {
    pub outcomes: Vec<Option<TerminalOutcome>>,
    pub rejected: usize,
}

/// One exact square-root transition over `dt` for dX = (level - rate X) dt
/// + vol sqrt(X) dB: the conditional law is a scaled noncentral chi-square,
/// sampled as a Poisson mixture of gamma variates.
pub fn cir_exact_transition(
    x: f64,
    dt: f64,
    level: f64,
    rate: f64,
    vol: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let s2 = vol * vol;
    let decay = (-rate * dt).exp();
    let scale = s2 * (-(-rate * dt).exp_m1()) / (4.0 * rate);
    let nc = x.max(0.0) * decay / scale;
    let n = if nc > 0.0 {
        Poisson::new(0.5 * nc).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    };
    let shape = 2.0 * level / s2 + n;
    let g: f64 = Gamma::new(shape, 2.0)
        .map(|d| d.sample(rng))
        .unwrap_or(f64::NAN);
    scale * g
}

/// Simulate paths of dX = drift dt + vol dB from `x0`, accumulating the
/// trapezoidal integral of `rho` along each path.
pub fn simulate_terminal(
    drift: &ScalarField,
    vol: &ScalarField,
    domain: &StateInterval,
    x0: f64,
    rho: &ScalarField,
    cfg: &PathConfig,
) -> Result<TerminalSample> {
    cfg.validate()?;
    if !domain.contains_interior(x0) {
        return Err(Error::Domain(format!(
            "initial state {x0} outside domain {domain}"
        )));
    }
    let dt = cfg.horizon / cfg.n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let outcomes: Vec<Option<TerminalOutcome>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.seed, i as u64);
            let mut x = x0;
            let mut integral = 0.0f64;
            let mut rho_prev = rho.eval(domain.clamp_interior(x, CLAMP_EPS));
            for _ in 0..cfg.n_steps {
                match cfg.scheme {
                    Scheme::EulerFullTruncation => {
                        let xc = domain.clamp_interior(x, CLAMP_EPS);
                        let z: f64 = rng.sample(StandardNormal);
                        x += drift.eval(xc) * dt + vol.eval(xc) * sqrt_dt * z;
                    }
                    Scheme::CirExact { level, rate, vol } => {
                        x = cir_exact_transition(x, dt, level, rate, vol, &mut rng);
                    }
                }
                let rho_next = rho.eval(domain.clamp_interior(x, CLAMP_EPS));
                integral += 0.5 * (rho_prev + rho_next) * dt;
                rho_prev = rho_next;
            }
            if x.is_finite() && integral.is_finite() {
                Some(TerminalOutcome {
                    state: x,
                    integral,
                })
            } else {
                None
            }
        })
        .collect();
    let rejected = outcomes.iter().filter(|o| o.is_none()).count();
    if (rejected as f64) > MAX_REJECT_RATE * cfg.n_paths as f64 {
        return Err(Error::Estimator(format!(
            "rejection rate {:.2}% exceeds {:.0}%",
            100.0 * rejected as f64 / cfg.n_paths as f64,
            100.0 * MAX_REJECT_RATE
        )));
    }
    Ok(TerminalSample { outcomes, rejected })
}

/// Mean and standard error over per-path values, reduced in path order.
fn summarize(values: &[Option<f64>], measure: Measure, seed: u64) -> Result<Estimate> {
    let kept: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let n = kept.len();
    if n < 2 {
        return Err(Error::Estimator("fewer than two usable paths".into()));
    }
    let mean = kept.iter().sum::<f64>() / n as f64;
    let ss = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let std_error = (ss / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt();
    if !mean.is_finite() || !std_error.is_finite() {
        return Err(Error::Estimator("non-finite estimate".into()));
    }
    Ok(Estimate {
        mean,
        std_error,
        n,
        measure,
        seed,
    })
}

/// Direct estimator of E[e^{-int r} h(X_T)] under the quadruple's own
/// dynamics.
pub fn estimate_price_direct(q: &Quadruple, x0: f64, cfg: &PathConfig) -> Result<Estimate> {
    let sample = simulate_terminal(&q.drift, &q.vol, &q.domain, x0, &q.discount, cfg)?;
    let values: Vec<Option<f64>> = sample
        .outcomes
        .iter()
        .map(|o| o.map(|o| (-o.integral).exp() * q.payoff.eval(o.state)))
        .collect();
    summarize(&values, Measure::P, cfg.seed)
}

/// Eigen-decomposition estimator: phi(xi) e^{-lambda T} times the mean of
/// (h/phi)(X_T) with X simulated under the eigen-measure drift kappa.
pub fn estimate_price_hs(
    chain: &DecompositionChain,
    xi: f64,
    cfg: &PathConfig,
) -> Result<Estimate> {
    let zero = ScalarField::constant(0.0);
    let sample = simulate_terminal(&chain.kappa, &chain.base.vol, &chain.base.domain, xi, &zero, cfg)?;
    let level = chain.pair0.phi.eval(xi) * (-chain.pair0.eigenvalue * cfg.horizon).exp();
    let h = &chain.base.payoff;
    let phi = &chain.pair0.phi;
    let values: Vec<Option<f64>> = sample
        .outcomes
        .iter()
        .map(|o| o.map(|o| level * h.eval(o.state) / phi.eval(o.state)))
        .collect();
    summarize(&values, Measure::PHat, cfg.seed)
}

/// Estimator of the remainder-derivative f_x(T, xi): price the hatted
/// quadruple, i.e. the mean of e^{int kappa'}(h/phi)'(X_T) under the hatted
/// drift.
pub fn estimate_fx_hs(chain: &DecompositionChain, xi: f64, cfg: &PathConfig) -> Result<Estimate> {
    let hatted = &chain.hatted;
    let sample = simulate_terminal(&hatted.drift, &hatted.vol, &hatted.domain, xi, &hatted.discount, cfg)?;
    let values: Vec<Option<f64>> = sample
        .outcomes
        .iter()
        .map(|o| o.map(|o| (-o.integral).exp() * hatted.payoff.eval(o.state)))
        .collect();
    let mut est = summarize(&values, Measure::PHat, cfg.seed)?;
    est.measure = Measure::PHat;
    Ok(est)
}

/// Central-difference derivative of a scalar-parameter pricer with common
/// random numbers: the pricer must reuse identical streams on both legs.
pub fn bump_derivative(
    pricer: impl Fn(f64) -> Result<f64>,
    p0: f64,
    rel_bump: f64,
) -> Result<f64> {
    if !(rel_bump > 0.0 && rel_bump <= 1e-2) {
        return Err(Error::Contract(format!(
            "relative bump must lie in (0, 1e-2], got {rel_bump}"
        )));
    }
    if p0 == 0.0 {
        return Err(Error::Contract(
            "cannot apply a relative bump at parameter value 0".into(),
        ));
    }
    let up = pricer(p0 * (1.0 + rel_bump))?;
    let down = pricer(p0 * (1.0 - rel_bump))?;
    Ok((up - down) / (2.0 * p0 * rel_bump))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{cir_price_closed, CirParams, PayoffKind};

    #[test]
    fn driftless_brownian_mean_is_zero() {
        let drift = ScalarField::constant(0.0);
        let vol = ScalarField::constant(1.0);
        let rho = ScalarField::constant(0.0);
        let cfg = PathConfig {
            horizon: 1.0,
            n_steps: 50,
            n_paths: 20_000,
            seed: 7,
            scheme: Scheme::EulerFullTruncation,
        };
        let s = simulate_terminal(&drift, &vol, &StateInterval::real_line(), 0.0, &rho, &cfg)
            .unwrap();
        let vals: Vec<Option<f64>> = s.outcomes.iter().map(|o| o.map(|o| o.state)).collect();
        let est = summarize(&vals, Measure::P, 7).unwrap();
        assert!(
            est.mean.abs() < 3.0 * est.std_error,
            "mean {} vs SE {}",
            est.mean,
            est.std_error
        );
        assert_eq!(s.rejected, 0);
    }

    #[test]
    fn constant_rho_integates_exactly() {
        let drift = ScalarField::constant(0.0);
        let vol = ScalarField::constant(1.0);
        let rho = ScalarField::constant(0.7);
        let cfg = PathConfig {
            horizon: 2.0,
            n_steps: 37,
            n_paths: 16,
            seed: 1,
            scheme: Scheme::EulerFullTruncation,
        };
        let s = simulate_terminal(&drift, &vol, &StateInterval::real_line(), 0.0, &rho, &cfg)
            .unwrap();
        for o in s.outcomes.iter().flatten() {
            assert!((o.integral - 1.4).abs() < 1e-12, "trapezoid of a constant");
        }
    }

    #[test]
    fn square_root_mean_matches_ode() {
        // dX = (1 - X) dt + sqrt(X) dB from 1: E[X_T] = 1 for all T.
        let cfg = PathConfig {
            horizon: 2.0,
            n_steps: 200,
            n_paths: 20_000,
            seed: 11,
            scheme: Scheme::CirExact {
                level: 1.0,
                rate: 1.0,
                vol: 1.0,
            },
        };
        let drift = ScalarField::affine(1.0, -1.0);
        let vol = ScalarField::new(|x: f64| x.max(0.0).sqrt());
        let rho = ScalarField::constant(0.0);
        let s = simulate_terminal(&drift, &vol, &StateInterval::positive(), 1.0, &rho, &cfg)
            .unwrap();
        let vals: Vec<Option<f64>> = s.outcomes.iter().map(|o| o.map(|o| o.state)).collect();
        let est = summarize(&vals, Measure::P, 11).unwrap();
        assert!(
            (est.mean - 1.0).abs() < 3.0 * est.std_error,
            "mean {} SE {}",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn trivial_price_is_exact() {
        // r = 0, h = 1 -> price 1 with zero standard error.
        let q = Quadruple::new(
            ScalarField::constant(0.0),
            ScalarField::constant(1.0),
            ScalarField::constant(0.0),
            ScalarField::constant(1.0),
            StateInterval::real_line(),
        );
        let cfg = PathConfig {
            horizon: 1.0,
            n_steps: 10,
            n_paths: 100,
            seed: 3,
            scheme: Scheme::EulerFullTruncation,
        };
        let est = estimate_price_direct(&q, 0.0, &cfg).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn hs_estimator_with_eigenfunction_payoff_has_zero_variance() {
        let p = CirParams::canonical();
        let chain = crate::catalog::cir_chain(&p, PayoffKind::Eigenfunction).unwrap();
        let cfg = PathConfig {
            horizon: 1.5,
            n_steps: 100,
            n_paths: 200,
            seed: 5,
            scheme: Scheme::CirExact {
                level: 1.0,
                rate: p.alpha(),
                vol: 1.0,
            },
        };
        let est = estimate_price_hs(&chain, 1.0, &cfg).unwrap();
        let expect = (-p.eta()).exp() * (-p.lambda() * 1.5f64).exp();
        assert!((est.mean - expect).abs() < 1e-14);
        // Zero variance up to floating summation noise.
        assert!(est.std_error <= 1e-15, "SE {}", est.std_error);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let p = CirParams::canonical();
        let q = p.quadruple(PayoffKind::One);
        let cfg = PathConfig {
            horizon: 1.0,
            n_steps: 50,
            n_paths: 4000,
            seed: 42,
            scheme: Scheme::EulerFullTruncation,
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| estimate_price_direct(&q, 1.0, &cfg).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| estimate_price_direct(&q, 1.0, &cfg).unwrap());
        assert_eq!(single.mean.to_bits(), multi.mean.to_bits());
        assert_eq!(single.std_error.to_bits(), multi.std_error.to_bits());
    }

    #[test]
    fn exact_scheme_matches_closed_form() {
        let p = CirParams::canonical();
        let q = p.quadruple(PayoffKind::One);
        let cfg = PathConfig {
            horizon: 2.0,
            n_steps: 200,
            n_paths: 40_000,
            seed: 9,
            scheme: Scheme::CirExact {
                level: 1.0,
                rate: 1.0,
                vol: 1.0,
            },
        };
        let est = estimate_price_direct(&q, 1.0, &cfg).unwrap();
        let closed = cir_price_closed(&p, 2.0).unwrap();
        assert!(
            (est.mean - closed).abs() < 3.0 * est.std_error,
            "mc {} vs closed {closed} (SE {})",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn doubling_paths_shrinks_standard_error() {
        let p = CirParams::canonical();
        let q = p.quadruple(PayoffKind::One);
        let base = PathConfig {
            horizon: 1.0,
            n_steps: 100,
            n_paths: 20_000,
            seed: 21,
            scheme: Scheme::EulerFullTruncation,
        };
        let mut double = base;
        double.n_paths *= 2;
        let e1 = estimate_price_direct(&q, 1.0, &base).unwrap();
        let e2 = estimate_price_direct(&q, 1.0, &double).unwrap();
        let ratio = e2.std_error / e1.std_error;
        let target = 1.0 / 2f64.sqrt();
        assert!(
            (ratio - target).abs() < 0.15 * target,
            "SE ratio {ratio}, want ~{target}"
        );
    }

    #[test]
    fn bump_derivative_quadratic_exact() {
        let d = bump_derivative(|p| Ok(p * p), 1.0, 1e-4).unwrap();
        assert!((d - 2.0).abs() < 1e-7, "got {d}");
        assert!(bump_derivative(|p| Ok(p), 1.0, 0.5).is_err());
        assert!(bump_derivative(|p| Ok(p), 0.0, 1e-4).is_err());
    }
}

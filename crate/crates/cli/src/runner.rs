//! Experiment execution: curves, fits, CSV and summary emission.
//!
//! Every CSV row carries the target limit and rate metadata so a curve file
//! is self-describing; floats print with 17 significant digits so reruns
//! diff byte-for-byte and rows parse back losslessly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hslab_core::applications::{
    bond_map, entropic_map, utility_cev_map, utility_heston_map, utility_three_halves_map,
    AppResult, EntropicKind,
};
use hslab_core::catalog::{CirParams, ModelParams, ThreeHalvesParams};
use hslab_core::montecarlo::{estimate_price_direct, PathConfig};
use hslab_core::sensitivity::{
    boundedness_stat, delta_curve, gamma_curve, param_curve, rate_fit, CurvePoint, MethodKind,
    MethodSpec,
};
use hslab_core::{Error, Result};

use crate::config::{AppConfig, ExperimentConfig, ExperimentKind};

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub curve_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub summary: String,
}

/// Format a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Atomic write: temp file in the destination directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)
        .map_err(|e| Error::Contract(format!("cannot create output directory {dir:?}: {e}")))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| Error::Contract(format!("cannot create {tmp:?}: {e}")))?;
        f.write_all(contents.as_bytes())
            .map_err(|e| Error::Contract(format!("write failed: {e}")))?;
        f.sync_all().ok();
    }
    fs::rename(&tmp, path).map_err(|e| Error::Contract(format!("rename failed: {e}")))?;
    Ok(())
}

/// Render a curve as CSV with target metadata columns.
fn curve_csv(points: &[CurvePoint], target_limit: f64, target_rate: f64) -> String {
    let mut out = String::from("T,value,std_error,method,target_limit,target_rate\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(p.t),
            fmt_f64(p.value),
            fmt_opt(p.std_error),
            p.method,
            fmt_f64(target_limit),
            fmt_f64(target_rate),
        ));
    }
    out
}

/// Parse a curve CSV produced by this runner back into points plus the
/// target metadata of the first row.
pub fn parse_curve_csv(text: &str) -> Result<(Vec<CurvePoint>, f64, f64)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Contract("empty curve file".into()))?;
    if header.trim() != "T,value,std_error,method,target_limit,target_rate" {
        return Err(Error::Contract(format!("unexpected header '{header}'")));
    }
    let mut points = Vec::new();
    let (mut limit, mut rate) = (f64::NAN, f64::NAN);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::Contract(format!("row {i}: expected 6 columns")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Contract(format!("row {i}: bad float '{s}': {e}")))
        };
        let t = parse(cols[0])?;
        let value = parse(cols[1])?;
        let std_error = if cols[2].is_empty() {
            None
        } else {
            Some(parse(cols[2])?)
        };
        let method: MethodKind = cols[3].parse()?;
        limit = parse(cols[4])?;
        rate = parse(cols[5])?;
        points.push(CurvePoint {
            t,
            value,
            std_error,
            method,
        });
    }
    if points.is_empty() {
        return Err(Error::Contract("curve file has no data rows".into()));
    }
    Ok((points, limit, rate))
}

fn model_label(m: &ModelParams) -> String {
    match m {
        ModelParams::Cir(p) => format!(
            "cir a={} b={} sigma={} q={} xi={}",
            fmt_f64(p.a),
            fmt_f64(p.b),
            fmt_f64(p.sigma),
            fmt_f64(p.q),
            fmt_f64(p.xi)
        ),
        ModelParams::ThreeHalves(p) => format!(
            "three_halves a={} b={} sigma={} q={} xi={}",
            fmt_f64(p.a),
            fmt_f64(p.b),
            fmt_f64(p.sigma),
            fmt_f64(p.q),
            fmt_f64(p.xi)
        ),
        ModelParams::Cev(p) => format!(
            "cev{:?} mu={} theta={} sigma={} beta={} q={} xi={}",
            p.variant,
            fmt_f64(p.mu),
            fmt_f64(p.theta),
            fmt_f64(p.sigma),
            fmt_f64(p.beta),
            fmt_f64(p.q),
            fmt_f64(p.xi)
        ),
    }
}

fn require_model(cfg: &ExperimentConfig) -> Result<&ModelParams> {
    cfg.model
        .as_ref()
        .ok_or_else(|| Error::Contract("experiment requires a model".into()))
}

fn price_points(cfg: &ExperimentConfig, model: &ModelParams) -> Result<Vec<CurvePoint>> {
    match &cfg.method {
        MethodSpec::Closed => cfg
            .t_grid
            .iter()
            .map(|&t| {
                Ok(CurvePoint {
                    t,
                    value: model.price_closed(t)?,
                    std_error: None,
                    method: MethodKind::Closed,
                })
            })
            .collect(),
        MethodSpec::Mc(base) => {
            let q = model.quadruple(cfg.payoff);
            cfg.t_grid
                .iter()
                .map(|&t| {
                    let run = PathConfig {
                        horizon: t,
                        n_steps: ((base.n_steps as f64 * t).ceil() as usize).max(1),
                        ..*base
                    };
                    let est = estimate_price_direct(&q, model.xi(), &run)?;
                    Ok(CurvePoint {
                        t,
                        value: est.mean,
                        std_error: Some(est.std_error),
                        method: MethodKind::Mc,
                    })
                })
                .collect()
        }
        MethodSpec::Pde(_) => Err(Error::Contract(
            "price experiment supports closed and mc methods".into(),
        )),
    }
}

fn app_result(app: &AppConfig) -> Result<AppResult> {
    match *app {
        AppConfig::HestonUtility {
            k,
            m,
            v,
            rho,
            mu,
            r,
            nu,
            xi,
        } => utility_heston_map(k, m, v, rho, mu, r, nu, xi),
        AppConfig::ThreeHalvesUtility {
            k,
            m,
            v,
            rho,
            mu,
            r,
            nu,
            xi,
        } => utility_three_halves_map(k, m, v, rho, mu, r, nu, xi),
        AppConfig::CevUtility {
            k,
            r,
            sigma,
            beta,
            nu,
            xi,
        } => utility_cev_map(k, r, sigma, beta, nu, xi),
        AppConfig::AffineCp {
            k,
            m,
            v,
            eta_bar,
            gamma_c,
            varsigma,
            mu_c,
            nu,
            xi,
        } => entropic_map(EntropicKind::AffineCp {
            k,
            m,
            v,
            eta_bar,
            gamma_c,
            varsigma,
            mu_c,
            nu,
            xi,
        }),
        AppConfig::ThreeHalvesCp1 {
            k,
            m,
            v,
            eta_bar,
            nu,
            s0,
        } => entropic_map(EntropicKind::ThreeHalvesCp1 {
            k,
            m,
            v,
            eta_bar,
            nu,
            s0,
        }),
        AppConfig::ThreeHalvesCp2 {
            k,
            m,
            v,
            eta_bar,
            nu,
            s0,
        } => entropic_map(EntropicKind::ThreeHalvesCp2 {
            k,
            m,
            v,
            eta_bar,
            nu,
            s0,
        }),
        AppConfig::BondCir { a, b, sigma, xi } => bond_map(&ModelParams::Cir(CirParams {
            a,
            b,
            sigma,
            q: 1.0,
            xi,
        })),
        AppConfig::BondThreeHalves { a, b, sigma, xi } => {
            bond_map(&ModelParams::ThreeHalves(ThreeHalvesParams {
                a,
                b,
                sigma,
                q: 1.0,
                xi,
            }))
        }
    }
}

/// Execute a validated experiment, writing `<prefix>_curve.csv` (plus
/// `<prefix>_combo.csv` for the second-order experiment) and
/// `<prefix>_summary.txt` under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let prefix = out_dir.join(&cfg.output);
    let curve_path = prefix.with_file_name(format!(
        "{}_curve.csv",
        prefix.file_name().and_then(|s| s.to_str()).unwrap_or("run")
    ));
    let combo_path = prefix.with_file_name(format!(
        "{}_combo.csv",
        prefix.file_name().and_then(|s| s.to_str()).unwrap_or("run")
    ));
    let summary_path = prefix.with_file_name(format!(
        "{}_summary.txt",
        prefix.file_name().and_then(|s| s.to_str()).unwrap_or("run")
    ));

    let mut summary = String::new();
    let mut curve_files = Vec::new();
    summary.push_str(&format!("experiment: {}\n", cfg.experiment));
    if let Some(m) = &cfg.model {
        summary.push_str(&format!("model: {}\n", model_label(m)));
    }
    summary.push_str(&format!("method: {}\n", cfg.method.kind()));
    summary.push_str(&format!("seed: {}\n", cfg.seed));

    match cfg.experiment {
        ExperimentKind::Validate => {
            summary.push_str("validation: ok\n");
        }
        ExperimentKind::Price => {
            let model = require_model(cfg)?;
            let points = price_points(cfg, model)?;
            let lambda = model.lambda();
            write_atomic(&curve_path, &curve_csv(&points, f64::NAN, lambda))?;
            curve_files.push(curve_path.clone());
            summary.push_str(&format!("points: {}\n", points.len()));
            summary.push_str(&format!("decay_rate_lambda: {}\n", fmt_f64(lambda)));
            summary.push_str("status: OK\n");
        }
        ExperimentKind::Delta => {
            let model = require_model(cfg)?;
            let limits = model.sensitivity_limits();
            let points = delta_curve(model, &cfg.t_grid, &cfg.method, cfg.payoff)?;
            write_atomic(
                &curve_path,
                &curve_csv(&points, limits.delta_limit, limits.delta_rate),
            )?;
            curve_files.push(curve_path.clone());
            summary.push_str(&format!("target_limit: {}\n", fmt_f64(limits.delta_limit)));
            summary.push_str(&format!("target_rate: {}\n", fmt_f64(limits.delta_rate)));
            append_rate_fit_summary(&mut summary, &points, limits.delta_limit, limits.delta_rate, cfg.fit_window, 0.05)?;
        }
        ExperimentKind::Gamma => {
            let model = require_model(cfg)?;
            let limits = model.sensitivity_limits();
            let (gammas, combos) = gamma_curve(model, &cfg.t_grid, &cfg.method, cfg.payoff)?;
            write_atomic(
                &curve_path,
                &curve_csv(&gammas, limits.gamma_limit, limits.delta_rate),
            )?;
            write_atomic(
                &combo_path,
                &curve_csv(&combos, 0.0, limits.gamma_combo_rate),
            )?;
            curve_files.push(curve_path.clone());
            curve_files.push(combo_path.clone());
            summary.push_str(&format!("target_limit: {}\n", fmt_f64(limits.gamma_limit)));
            summary.push_str(&format!(
                "combo_target_rate: {}\n",
                fmt_f64(limits.gamma_combo_rate)
            ));
            summary.push_str("combo fit:\n");
            append_rate_fit_summary(
                &mut summary,
                &combos,
                0.0,
                limits.gamma_combo_rate,
                cfg.fit_window,
                0.10,
            )?;
        }
        ExperimentKind::Param => {
            let model = require_model(cfg)?;
            let param = cfg
                .param
                .ok_or_else(|| Error::Contract("param experiment requires param_id".into()))?;
            let limits = model.sensitivity_limits();
            let points = param_curve(model, param, &cfg.t_grid)?;
            let limit = limits.param_limit(param);
            write_atomic(
                &curve_path,
                &curve_csv(&points, limit.unwrap_or(f64::NAN), f64::NAN),
            )?;
            curve_files.push(curve_path.clone());
            summary.push_str(&format!("param: {param}\n"));
            match limit {
                Some(l) => {
                    summary.push_str(&format!("target_limit: {}\n", fmt_f64(l)));
                    let series: Vec<(f64, f64)> =
                        points.iter().map(|p| (p.t, p.value)).collect();
                    let stat = boundedness_stat(&series, l)?;
                    summary.push_str(&format!("transformed_sup: {}\n", fmt_f64(stat.sup)));
                    summary.push_str(&format!("tail_trend: {}\n", fmt_f64(stat.trend_slope)));
                    let pass = stat.sup.is_finite() && !stat.flagged_unbounded(0.02);
                    summary.push_str(&format!(
                        "status: {}\n",
                        if pass { "PASS" } else { "FAIL" }
                    ));
                }
                None => {
                    // Bounded-only parameter: report the raw sup of T |v|.
                    let sup = points
                        .iter()
                        .map(|p| (p.t * p.value).abs())
                        .fold(0.0f64, f64::max);
                    summary.push_str("target_limit: bounded-only\n");
                    summary.push_str(&format!("sup_T_times_value: {}\n", fmt_f64(sup)));
                    summary.push_str(&format!(
                        "status: {}\n",
                        if sup.is_finite() { "PASS" } else { "FAIL" }
                    ));
                }
            }
        }
        ExperimentKind::Ratefit => {
            let (points, limit, rate) = match &cfg.input_csv {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| {
                        Error::Contract(format!("cannot read input csv {path}: {e}"))
                    })?;
                    parse_curve_csv(&text)?
                }
                None => {
                    let model = require_model(cfg)?;
                    let limits = model.sensitivity_limits();
                    let points = delta_curve(model, &cfg.t_grid, &cfg.method, cfg.payoff)?;
                    (points, limits.delta_limit, limits.delta_rate)
                }
            };
            write_atomic(&curve_path, &curve_csv(&points, limit, rate))?;
            curve_files.push(curve_path.clone());
            summary.push_str(&format!("target_limit: {}\n", fmt_f64(limit)));
            summary.push_str(&format!("target_rate: {}\n", fmt_f64(rate)));
            append_rate_fit_summary(&mut summary, &points, limit, rate, cfg.fit_window, 0.05)?;
        }
        ExperimentKind::App => {
            let app = cfg
                .app
                .as_ref()
                .ok_or_else(|| Error::Contract("app experiment requires an app block".into()))?;
            let result = app_result(app)?;
            let model = result.model().ok_or_else(|| {
                Error::Contract("app experiment requires a catalog-mapped example".into())
            })?;
            summary.push_str(&format!("mapped_model: {}\n", model_label(model)));
            summary.push_str(&format!(
                "wrapper_rate: {}\n",
                fmt_f64(result.wrapper.exp_rate)
            ));
            if let Some(g) = result.growth_limit {
                summary.push_str(&format!("growth_limit: {}\n", fmt_f64(g)));
            }
            let points: Vec<CurvePoint> = cfg
                .t_grid
                .iter()
                .map(|&t| {
                    let p = model.price_closed(t)?;
                    Ok(CurvePoint {
                        t,
                        value: result.wrapper.wrap_price(p, t),
                        std_error: None,
                        method: MethodKind::Closed,
                    })
                })
                .collect::<Result<_>>()?;
            let rate = result.growth_limit.map(|g| -g).unwrap_or(f64::NAN);
            write_atomic(&curve_path, &curve_csv(&points, f64::NAN, rate))?;
            curve_files.push(curve_path.clone());
            summary.push_str("status: OK\n");
        }
    }

    write_atomic(&summary_path, &summary)?;
    Ok(RunReport {
        curve_files,
        summary_file: summary_path,
        summary,
    })
}

/// Fit the decay rate of |value - limit| and report pass/fail against the
/// target rate at the given relative tolerance.
fn append_rate_fit_summary(
    summary: &mut String,
    points: &[CurvePoint],
    limit: f64,
    target_rate: f64,
    window: (f64, f64),
    rel_tol: f64,
) -> Result<()> {
    let errs: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.t, (p.value - limit).abs()))
        .filter(|&(_, e)| e > 0.0)
        .collect();
    summary.push_str(&format!(
        "fit_window: [{}, {}]\n",
        fmt_f64(window.0),
        fmt_f64(window.1)
    ));
    match rate_fit(&errs, window) {
        Ok(fit) => {
            summary.push_str(&format!("fitted_rate: {}\n", fmt_f64(fit.rate)));
            summary.push_str(&format!("fitted_intercept: {}\n", fmt_f64(fit.intercept)));
            summary.push_str(&format!("r_squared: {}\n", fmt_f64(fit.r_squared)));
            if fit.low_confidence {
                summary.push_str("low_confidence: true\n");
            }
            if target_rate.is_finite() && target_rate != 0.0 {
                let rel = (fit.rate - target_rate).abs() / target_rate.abs();
                summary.push_str(&format!("rate_rel_err: {}\n", fmt_f64(rel)));
                summary.push_str(&format!(
                    "status: {}\n",
                    if rel <= rel_tol { "PASS" } else { "FAIL" }
                ));
            } else {
                summary.push_str("status: OK\n");
            }
        }
        Err(e) => {
            summary.push_str(&format!("fit_error: {e}\n"));
            summary.push_str("status: SKIPPED\n");
        }
    }
    Ok(())
}

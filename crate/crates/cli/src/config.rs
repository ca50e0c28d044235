//! Experiment configuration: a single JSON document, schema-validated with
//! unknown keys rejected, and semantic validation that collects every
//! failure instead of stopping at the first.

use serde::Deserialize;

use hslab_core::catalog::{
    CevParams, CevVariant, CirParams, ModelParams, ParamId, PayoffKind, ThreeHalvesParams,
};
use hslab_core::montecarlo::{PathConfig, Scheme};
use hslab_core::pde::Coordinate;
use hslab_core::sensitivity::{MethodSpec, PdeSpec, DEFAULT_FIT_WINDOW};

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Price,
    Delta,
    Gamma,
    Param,
    Ratefit,
    App,
    Validate,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Price => "price",
            ExperimentKind::Delta => "delta",
            ExperimentKind::Gamma => "gamma",
            ExperimentKind::Param => "param",
            ExperimentKind::Ratefit => "ratefit",
            ExperimentKind::App => "app",
            ExperimentKind::Validate => "validate",
        };
        f.write_str(s)
    }
}

/// Model block, tagged by family.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Cir {
        a: f64,
        b: f64,
        sigma: f64,
        q: f64,
        xi: f64,
    },
    ThreeHalves {
        a: f64,
        b: f64,
        sigma: f64,
        q: f64,
        xi: f64,
    },
    Cev1 {
        mu: f64,
        theta: f64,
        sigma: f64,
        beta: f64,
        q: f64,
        xi: f64,
    },
    Cev2 {
        mu: f64,
        theta: f64,
        sigma: f64,
        beta: f64,
        q: f64,
        xi: f64,
    },
}

impl ModelConfig {
    pub fn to_params(&self) -> ModelParams {
        match *self {
            ModelConfig::Cir { a, b, sigma, q, xi } => {
                ModelParams::Cir(CirParams { a, b, sigma, q, xi })
            }
            ModelConfig::ThreeHalves { a, b, sigma, q, xi } => {
                ModelParams::ThreeHalves(ThreeHalvesParams { a, b, sigma, q, xi })
            }
            ModelConfig::Cev1 {
                mu,
                theta,
                sigma,
                beta,
                q,
                xi,
            } => ModelParams::Cev(CevParams {
                mu,
                theta,
                sigma,
                beta,
                xi,
                q,
                variant: CevVariant::I,
            }),
            ModelConfig::Cev2 {
                mu,
                theta,
                sigma,
                beta,
                q,
                xi,
            } => ModelParams::Cev(CevParams {
                mu,
                theta,
                sigma,
                beta,
                xi,
                q,
                variant: CevVariant::II,
            }),
        }
    }
}

/// Monte Carlo block.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_steps_per_unit")]
    pub n_steps_per_unit: usize,
    #[serde(default)]
    pub scheme: SchemeConfig,
}

fn default_seed() -> u64 {
    12345
}
fn default_paths() -> usize {
    100_000
}
fn default_steps_per_unit() -> usize {
    100
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            seed: default_seed(),
            n_paths: default_paths(),
            n_steps_per_unit: default_steps_per_unit(),
            scheme: SchemeConfig::Euler,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeConfig {
    #[default]
    Euler,
    CirExact,
}

/// PDE block.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConfig {
    #[serde(default = "default_nx")]
    pub n_x: usize,
    #[serde(default = "default_nt_per_unit")]
    pub n_t_per_unit: usize,
    #[serde(default)]
    pub coordinate: CoordinateConfig,
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
}

fn default_nx() -> usize {
    400
}
fn default_nt_per_unit() -> usize {
    200
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            n_x: default_nx(),
            n_t_per_unit: default_nt_per_unit(),
            coordinate: CoordinateConfig::Native,
            x_min: None,
            x_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateConfig {
    #[default]
    Native,
    Log,
}

/// Payoff block.
#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    #[default]
    One,
    Eigenfunction,
    Affine {
        c0: f64,
        c1: f64,
    },
}

impl PayoffConfig {
    pub fn to_kind(self) -> PayoffKind {
        match self {
            PayoffConfig::One => PayoffKind::One,
            PayoffConfig::Eigenfunction => PayoffKind::Eigenfunction,
            PayoffConfig::Affine { c0, c1 } => PayoffKind::Affine { c0, c1 },
        }
    }
}

/// Application block, tagged by kind.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AppConfig {
    HestonUtility {
        k: f64,
        m: f64,
        v: f64,
        rho: f64,
        mu: f64,
        #[serde(default)]
        r: f64,
        nu: f64,
        xi: f64,
    },
    ThreeHalvesUtility {
        k: f64,
        m: f64,
        v: f64,
        rho: f64,
        mu: f64,
        #[serde(default)]
        r: f64,
        nu: f64,
        xi: f64,
    },
    CevUtility {
        k: f64,
        r: f64,
        sigma: f64,
        beta: f64,
        nu: f64,
        xi: f64,
    },
    AffineCp {
        k: f64,
        m: f64,
        v: f64,
        eta_bar: f64,
        gamma_c: f64,
        varsigma: f64,
        #[serde(default)]
        mu_c: f64,
        nu: f64,
        xi: f64,
    },
    ThreeHalvesCp1 {
        k: f64,
        m: f64,
        v: f64,
        eta_bar: f64,
        nu: f64,
        s0: f64,
    },
    ThreeHalvesCp2 {
        k: f64,
        m: f64,
        v: f64,
        eta_bar: f64,
        nu: f64,
        s0: f64,
    },
    BondCir {
        a: f64,
        b: f64,
        sigma: f64,
        xi: f64,
    },
    BondThreeHalves {
        a: f64,
        b: f64,
        sigma: f64,
        xi: f64,
    },
}

/// Raw document as parsed from JSON.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default)]
    pub param_id: Option<String>,
    #[serde(default)]
    pub payoff: PayoffConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub app: Option<AppConfig>,
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    #[serde(default)]
    pub input_csv: Option<String>,
    pub output: String,
}

fn default_method() -> String {
    "closed".to_string()
}

/// Fully validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: Option<ModelParams>,
    pub t_grid: Vec<f64>,
    pub method: MethodSpec,
    pub payoff: PayoffKind,
    pub param: Option<ParamId>,
    pub app: Option<AppConfig>,
    pub fit_window: (f64, f64),
    pub input_csv: Option<String>,
    pub output: String,
    pub seed: u64,
}

/// Validate a raw JSON document. Structural failures return a single-entry
/// list; semantic failures are collected exhaustively.
pub fn validate_config(raw_json: &str, seed_override: Option<u64>) -> Result<ExperimentConfig, Vec<String>> {
    let raw: RawConfig =
        serde_json::from_str(raw_json).map_err(|e| vec![format!("schema: {e}")])?;
    let mut errors: Vec<String> = Vec::new();

    let mut mc = raw.mc.clone();
    if let Some(seed) = seed_override {
        mc.seed = seed;
    }

    let model = raw.model.as_ref().map(|m| m.to_params());
    if let Some(m) = &model {
        for e in m.validation_errors() {
            errors.push(match e.code() {
                Some(code) => format!("{code}: {e}"),
                None => e.to_string(),
            });
        }
    }

    let needs_model = !matches!(raw.experiment, ExperimentKind::App);
    if needs_model && model.is_none() {
        errors.push("missing-model: this experiment requires a model block".into());
    }
    if matches!(raw.experiment, ExperimentKind::App) && raw.app.is_none() {
        errors.push("missing-app: the app experiment requires an app block".into());
    }

    let needs_grid = matches!(
        raw.experiment,
        ExperimentKind::Price
            | ExperimentKind::Delta
            | ExperimentKind::Gamma
            | ExperimentKind::Param
            | ExperimentKind::App
    ) || (matches!(raw.experiment, ExperimentKind::Ratefit) && raw.input_csv.is_none());
    if needs_grid {
        if raw.t_grid.is_empty() {
            errors.push("empty-grid: t_grid must be nonempty".into());
        }
        if raw.t_grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            errors.push("bad-grid: maturities must be positive and finite".into());
        }
    }

    let method = match raw.method.as_str() {
        "closed" => MethodSpec::Closed,
        "mc" => {
            let scheme = match (mc.scheme, &model) {
                (SchemeConfig::Euler, _) => Scheme::EulerFullTruncation,
                (SchemeConfig::CirExact, Some(ModelParams::Cir(p))) => Scheme::CirExact {
                    level: p.b,
                    rate: p.a,
                    vol: p.sigma.abs(),
                },
                (SchemeConfig::CirExact, _) => {
                    errors.push(
                        "scheme-mismatch: cir-exact requires a square-root model".into(),
                    );
                    Scheme::EulerFullTruncation
                }
            };
            MethodSpec::Mc(PathConfig {
                horizon: 1.0,
                n_steps: mc.n_steps_per_unit.max(1),
                n_paths: mc.n_paths,
                seed: mc.seed,
                scheme,
            })
        }
        "pde" => MethodSpec::Pde(PdeSpec {
            n_x: raw.pde.n_x,
            n_t_per_unit: raw.pde.n_t_per_unit,
            coordinate: match raw.pde.coordinate {
                CoordinateConfig::Native => Coordinate::Native,
                CoordinateConfig::Log => Coordinate::Log,
            },
            x_min: raw.pde.x_min,
            x_max: raw.pde.x_max,
        }),
        other => {
            errors.push(format!("bad-method: unknown method '{other}'"));
            MethodSpec::Closed
        }
    };

    let param = match (&raw.experiment, &raw.param_id) {
        (ExperimentKind::Param, Some(s)) => match s.parse::<ParamId>() {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(format!("bad-param: {e}"));
                None
            }
        },
        (ExperimentKind::Param, None) => {
            errors.push("missing-param: the param experiment requires param_id".into());
            None
        }
        _ => None,
    };

    if raw.mc.n_paths < 2 {
        errors.push("bad-mc: n_paths must be at least 2".into());
    }
    if let Some((lo, hi)) = raw.fit_window {
        if !(lo < hi) {
            errors.push(format!("bad-window: fit window ({lo}, {hi}) is empty"));
        }
    }
    if raw.output.trim().is_empty() {
        errors.push("bad-output: output prefix must be nonempty".into());
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(ExperimentConfig {
        experiment: raw.experiment,
        model,
        t_grid: raw.t_grid,
        method,
        payoff: raw.payoff.to_kind(),
        param,
        app: raw.app,
        fit_window: raw.fit_window.unwrap_or(DEFAULT_FIT_WINDOW),
        input_csv: raw.input_csv,
        output: raw.output,
        seed: mc.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_delta_config_parses() {
        let json = r#"{
            "model": {"family": "cir", "a": 1.0, "b": 1.0, "sigma": 1.0, "q": 1.0, "xi": 1.0},
            "experiment": "delta",
            "t_grid": [1.0, 2.0],
            "output": "out/test"
        }"#;
        let cfg = validate_config(json, None).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Delta);
        assert!(matches!(cfg.method, MethodSpec::Closed));
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{
            "model": {"family": "cir", "a": 1.0, "b": 1.0, "sigma": 1.0, "q": 1.0, "xi": 1.0},
            "experiment": "delta",
            "t_grid": [1.0],
            "output": "x",
            "bogus": 1
        }"#;
        let err = validate_config(json, None).unwrap_err();
        assert!(err[0].contains("schema"), "{err:?}");
    }

    #[test]
    fn feller_violation_collected() {
        let json = r#"{
            "model": {"family": "cir", "a": 1.0, "b": 0.3, "sigma": 1.0, "q": 1.0, "xi": 1.0},
            "experiment": "delta",
            "t_grid": [1.0],
            "output": "x"
        }"#;
        let errs = validate_config(json, None).unwrap_err();
        assert!(
            errs.iter().any(|e| e.contains("feller-violation")),
            "{errs:?}"
        );
    }

    #[test]
    fn three_halves_domain_violation_collected() {
        let json = r#"{
            "model": {"family": "three_halves", "a": -0.9, "b": 1.0, "sigma": 1.0, "q": 1.0, "xi": 1.0},
            "experiment": "delta",
            "t_grid": [1.0],
            "output": "x"
        }"#;
        let errs = validate_config(json, None).unwrap_err();
        assert!(
            errs.iter().any(|e| e.contains("domain-violation")),
            "{errs:?}"
        );
    }

    #[test]
    fn errors_are_collected_not_fail_fast() {
        let json = r#"{
            "model": {"family": "cir", "a": -1.0, "b": 0.3, "sigma": 1.0, "q": -1.0, "xi": 1.0},
            "experiment": "param",
            "t_grid": [],
            "output": ""
        }"#;
        let errs = validate_config(json, None).unwrap_err();
        assert!(errs.len() >= 4, "expected many errors, got {errs:?}");
    }

    #[test]
    fn seed_override_applies() {
        let json = r#"{
            "model": {"family": "cir", "a": 1.0, "b": 1.0, "sigma": 1.0, "q": 1.0, "xi": 1.0},
            "experiment": "delta",
            "method": "mc",
            "t_grid": [1.0],
            "output": "x"
        }"#;
        let cfg = validate_config(json, Some(777)).unwrap();
        assert_eq!(cfg.seed, 777);
    }
}

//! Flat `key = value` run configuration.
//!
//! Resolution order: built-in defaults, then the `preset` model (if any),
//! then the config file, then `--key value` overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use coxperc_core::lattice::{
    validate_params, BlockId, ModelParams, ParamViolation, ValidatedParams, Variant,
};
use coxperc_core::presets;
use sha2::{Digest, Sha256};

pub const FORMAT_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "COXPERC_OUTPUT_DIR";

/// Every accepted key with its default (empty = derived at resolution).
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("format_version", "1", "config format version"),
    ("preset", "", "base model: m1, m5 or m20"),
    ("d", "2", "dimension (only 2)"),
    ("m", "1", "coarse scale M"),
    ("b_inv", "5", "integer reciprocal of the fine scale, > 2dM"),
    ("lambda", "1", "intensity"),
    ("lambda_del", "1", "intensity of the Delaunay points"),
    ("l", "1", "grid spacing L"),
    ("rho", "1", "mass cap / acceptance bound"),
    ("w0", "0", "street half-width (WIDTH)"),
    ("eta", "0.001", "support threshold for essential connectedness"),
    ("variant", "CAPPED", "DEL, DEL_GRID, WIDTH or CAPPED"),
    ("ball_radius", "0.5", "radius of the balls"),
    ("n", "6", "annulus index"),
    ("n_list", "6 7 8", "annulus indices for sweeps"),
    ("lambda_list", "0.5 1 1.5", "intensities for sweeps"),
    ("trials", "100", "Monte Carlo trials"),
    ("seed", "1", "master seed"),
    ("q0", "0.9999", "coverage threshold"),
    ("threshold", "0.5", "theta level for the lambda_c bracket"),
    ("tol", "0.001", "bracket width"),
    ("lambda_lo", "0", "initial bracket, lower end"),
    ("lambda_hi", "4", "initial bracket, upper end"),
    ("h", "", "finite-difference step (default 0.1 lambda)"),
    ("target", "0 0", "block for influence estimates"),
    ("probes", "16", "pivotality probes per trial"),
    ("reveal_trials", "", "trials for the revealment part of OSSS (default trials)"),
    ("env_radius", "4", "check-env window half-width in blocks"),
    ("coverage_blocks", "200", "fresh blocks for the coverage estimate"),
    ("one_dep_sites", "64", "sites rebuilt for the 1-dependence check"),
    ("conn_blocks", "16", "blocks checked for essential connectedness"),
    ("output_dir", "", "artifact directory (default $COXPERC_OUTPUT_DIR or ./out)"),
];

const MODEL_KEYS: [&str; 11] = [
    "d",
    "m",
    "b_inv",
    "lambda",
    "lambda_del",
    "l",
    "rho",
    "w0",
    "eta",
    "variant",
    "ball_radius",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(key: &str, msg: impl std::fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError(format!("{key}: {msg}")))
}

fn known(key: &str) -> bool {
    SCHEMA.iter().any(|(k, _, _)| *k == key)
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Explicitly set values, in file-then-override order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
        let mut values = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`",
                    no + 1
                )));
            };
            let k = normalize(k);
            if !known(&k) {
                return err(&k, "unknown key");
            }
            if values.insert(k.clone(), v.trim().to_string()).is_some() {
                return err(&k, "set twice");
            }
        }
        Ok(RawConfig { values })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let k = normalize(key);
        if !known(&k) {
            return err(&k, "unknown key");
        }
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    /// `--key value` and `--key=value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), ConfigError> {
        let mut i = 0;
        while i < args.len() {
            let Some(flag) = args[i].strip_prefix("--") else {
                return Err(ConfigError(format!(
                    "unexpected argument '{}'",
                    args[i]
                )));
            };
            if let Some((k, v)) = flag.split_once('=') {
                self.set(k, v)?;
                i += 1;
            } else {
                let v = args
                    .get(i + 1)
                    .ok_or_else(|| ConfigError(format!("{}: missing value", normalize(flag))))?;
                self.set(flag, v)?;
                i += 2;
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: ModelParams,
    pub n: i64,
    pub n_list: Vec<i64>,
    pub lambda_list: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub q0: f64,
    pub threshold: f64,
    pub tol: f64,
    pub bracket: (f64, f64),
    pub h: Option<f64>,
    pub target: BlockId,
    pub probes: u32,
    pub reveal_trials: Option<u64>,
    pub env_radius: i64,
    pub coverage_blocks: usize,
    pub one_dep_sites: usize,
    pub conn_blocks: usize,
    pub output_dir: PathBuf,
    /// Resolved key = value pairs in schema order.
    pub resolved: Vec<(String, String)>,
}

fn num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse::<T>()
        .or_else(|e| err(key, format!("cannot parse '{s}': {e}")))
}

fn list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| num(key, t))
        .collect()
}

fn violation_key(v: &ParamViolation) -> String {
    match v {
        ParamViolation::InvalidScale { .. } => "b_inv".into(),
        ParamViolation::InvalidGrid { .. } => "m".into(),
        ParamViolation::NonPositive(k) => k.to_ascii_lowercase(),
        ParamViolation::OutOfRange(s) => s
            .split_whitespace()
            .next()
            .unwrap_or("")
            .to_ascii_lowercase(),
    }
}

fn model_value(p: &ModelParams, key: &str) -> String {
    match key {
        "d" => p.d.to_string(),
        "m" => p.m.to_string(),
        "b_inv" => p.b_inv.to_string(),
        "lambda" => p.lambda.to_string(),
        "lambda_del" => p.lambda_del.to_string(),
        "l" => p.l.to_string(),
        "rho" => p.rho.to_string(),
        "w0" => p.w0.to_string(),
        "eta" => p.eta.to_string(),
        "variant" => p.variant.name().to_string(),
        "ball_radius" => p.ball_radius.to_string(),
        _ => unreachable!("{key}"),
    }
}

impl RunConfig {
    pub fn resolve(raw: &RawConfig) -> Result<RunConfig, ConfigError> {
        let get = |k: &str| -> String {
            raw.get(k).map(str::to_string).unwrap_or_else(|| {
                SCHEMA
                    .iter()
                    .find(|e| e.0 == k)
                    .map(|e| e.1.to_string())
                    .unwrap()
            })
        };
        let version: u32 = num("format_version", &get("format_version"))?;
        if version != FORMAT_VERSION {
            return err(
                "format_version",
                format!("{version} is not supported (expected {FORMAT_VERSION})"),
            );
        }
        let preset = raw.get("preset").filter(|s| !s.is_empty()).map(|s| s.to_ascii_lowercase());
        let mut model = match &preset {
            Some(name) => match presets::by_name(name) {
                Some(m) => m,
                None => {
                    return err(
                        "preset",
                        format!("unknown preset '{name}' (one of {})", presets::NAMES.join(", ")),
                    )
                }
            },
            None => ModelParams::default(),
        };
        for k in MODEL_KEYS {
            let Some(v) = raw.get(k) else { continue };
            match k {
                "d" => model.d = num(k, v)?,
                "m" => model.m = num(k, v)?,
                "b_inv" => model.b_inv = num(k, v)?,
                "lambda" => model.lambda = num(k, v)?,
                "lambda_del" => model.lambda_del = num(k, v)?,
                "l" => model.l = num(k, v)?,
                "rho" => model.rho = num(k, v)?,
                "w0" => model.w0 = num(k, v)?,
                "eta" => model.eta = num(k, v)?,
                "variant" => model.variant = v.parse::<Variant>().or_else(|e| err(k, e))?,
                "ball_radius" => model.ball_radius = num(k, v)?,
                _ => unreachable!(),
            }
        }
        let target: Vec<i64> = list("target", &get("target"))?;
        if target.len() != 2 {
            return err("target", "expected two integers");
        }
        let opt = |k: &str| raw.get(k).filter(|s| !s.is_empty());
        let output_dir = match opt("output_dir") {
            Some(d) => PathBuf::from(d),
            None => std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        let mut cfg = RunConfig {
            preset,
            model,
            n: num("n", &get("n"))?,
            n_list: list("n_list", &get("n_list"))?,
            lambda_list: list("lambda_list", &get("lambda_list"))?,
            trials: num("trials", &get("trials"))?,
            seed: num("seed", &get("seed"))?,
            q0: num("q0", &get("q0"))?,
            threshold: num("threshold", &get("threshold"))?,
            tol: num("tol", &get("tol"))?,
            bracket: (
                num("lambda_lo", &get("lambda_lo"))?,
                num("lambda_hi", &get("lambda_hi"))?,
            ),
            h: opt("h").map(|v| num("h", v)).transpose()?,
            target: [target[0], target[1]],
            probes: num("probes", &get("probes"))?,
            reveal_trials: opt("reveal_trials")
                .map(|v| num("reveal_trials", v))
                .transpose()?,
            env_radius: num("env_radius", &get("env_radius"))?,
            coverage_blocks: num("coverage_blocks", &get("coverage_blocks"))?,
            one_dep_sites: num("one_dep_sites", &get("one_dep_sites"))?,
            conn_blocks: num("conn_blocks", &get("conn_blocks"))?,
            output_dir,
            resolved: Vec::new(),
        };
        if cfg.trials == 0 {
            return err("trials", "must be at least 1");
        }
        if cfg.env_radius < 0 {
            return err("env_radius", "must be >= 0");
        }
        if let Some(h) = cfg.h {
            if !(h > 0.0 && h.is_finite()) {
                return err("h", "must be positive");
            }
        }
        cfg.resolved = SCHEMA
            .iter()
            .filter(|(k, _, _)| *k != "output_dir")
            .map(|(k, _, _)| {
                let v = if MODEL_KEYS.contains(k) {
                    model_value(&cfg.model, k)
                } else {
                    match *k {
                        "preset" => cfg.preset.clone().unwrap_or_default(),
                        "h" | "reveal_trials" => raw.get(k).unwrap_or("").to_string(),
                        _ => get(k),
                    }
                };
                (k.to_string(), v)
            })
            .collect();
        Ok(cfg)
    }

    pub fn params(&self) -> Result<ValidatedParams, ConfigError> {
        validate_params(&self.model).map_err(|vs| {
            ConfigError(
                vs.iter()
                    .map(|v| format!("{}: {v}", violation_key(v)))
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda
    }

    /// The resolved configuration as `key = value` lines.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Artifact header: the resolved configuration as comment lines.
    pub fn header(&self, command: &str) -> String {
        let mut s = format!(
            "# coxperc {}\n# command = {command}\n# config_hash = {}\n",
            env!("CARGO_PKG_VERSION"),
            self.hash()
        );
        for (k, v) in &self.resolved {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{MatrixSpec, VectorSpec};
use crate::sampler::FitConfig;

const KEYS: &[&str] = &[
    "iterations",
    "burn_in",
    "thin",
    "seed",
    "family",
    "error_model",
    "a1",
    "A",
    "c1",
    "C",
    "v",
    "V",
    "v1",
    "v2",
    "s",
    "S",
    "r1",
    "r2",
    "rho_lower",
    "rho_upper",
    "refresh_every",
    "parallel",
    "supplementary_rw",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn numbers(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|s| parse::<f64>(key, s.trim())).collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn vector(key: &str, value: &str) -> Result<VectorSpec> {
    let v = numbers(key, value)?;
    Ok(match v.as_slice() {
        [x] => VectorSpec::Fill(*x),
        _ => VectorSpec::Values(v),
    })
}

/// `diag:c` is `c·I`, `diag:a,b,...` a diagonal, a lone number `c·I`, and
/// any other list the row-major entries.
fn matrix(key: &str, value: &str) -> Result<MatrixSpec> {
    if let Some(rest) = value.strip_prefix("diag:") {
        let d = numbers(key, rest)?;
        return Ok(match d.as_slice() {
            [c] => MatrixSpec::ScaledIdentity(*c),
            _ => MatrixSpec::Diagonal(d),
        });
    }
    let v = numbers(key, value)?;
    Ok(match v.as_slice() {
        [c] => MatrixSpec::ScaledIdentity(*c),
        _ => MatrixSpec::Full(v),
    })
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, "must be a positive finite number"))
    }
}

/// Parses flat `key = value` text. Blank lines and `#` comments are ignored;
/// keys left out keep their defaults. Unknown or repeated keys and values
/// violating a configuration invariant are errors naming the key.
pub fn parse_config_str(text: &str) -> Result<FitConfig> {
    let mut cfg = FitConfig::default();
    let mut seen = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(line, format!("line {}: expected key = value", n + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::config(key, format!("line {}: unknown key", n + 1)));
        }
        if !seen.insert(key.to_string()) {
            return Err(Error::config(key, format!("line {}: key given twice", n + 1)));
        }
        let h = &mut cfg.hyper;
        match key {
            "iterations" => cfg.schedule.iterations = parse(key, value)?,
            "burn_in" => cfg.schedule.burn_in = parse(key, value)?,
            "thin" => cfg.schedule.thin = parse(key, value)?,
            "seed" => cfg.seed = parse(key, value)?,
            "family" => cfg.family = value.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "error_model" => cfg.error_model = value.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "a1" => h.alpha_mean = vector(key, value)?,
            "A" => h.alpha_cov = matrix(key, value)?,
            "c1" => h.mu_mean = vector(key, value)?,
            "C" => h.mu_cov = matrix(key, value)?,
            "v" => h.sigma_x_df = positive(key, parse(key, value)?)?,
            "V" => h.sigma_x_scale = matrix(key, value)?,
            "v1" => h.sigma_eps_shape = positive(key, parse(key, value)?)?,
            "v2" => h.sigma_eps_rate = positive(key, parse(key, value)?)?,
            "s" => h.beta_mean = vector(key, value)?,
            "S" => h.beta_cov = matrix(key, value)?,
            "r1" => h.phi_shape = positive(key, parse(key, value)?)?,
            "r2" => h.phi_rate = positive(key, parse(key, value)?)?,
            "rho_lower" => h.rho_lower = parse(key, value)?,
            "rho_upper" => h.rho_upper = parse(key, value)?,
            "refresh_every" => cfg.refresh_every = parse(key, value)?,
            "parallel" => cfg.parallel = boolean(key, value)?,
            "supplementary_rw" => cfg.supplementary_rw = boolean(key, value)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    let h = &cfg.hyper;
    if !(0.0 <= h.rho_lower && h.rho_lower < h.rho_upper && h.rho_upper <= 1.0) {
        return Err(Error::config("rho_lower", "rho prior bounds must satisfy 0 <= lower < upper <= 1"));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<FitConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn vector_text(v: &VectorSpec) -> String {
    match v {
        VectorSpec::Fill(x) => x.to_string(),
        VectorSpec::Values(v) => list(v),
    }
}

fn matrix_text(m: &MatrixSpec) -> String {
    match m {
        MatrixSpec::ScaledIdentity(c) => format!("diag:{c}"),
        MatrixSpec::Diagonal(d) => format!("diag:{}", list(d)),
        MatrixSpec::Full(v) => list(v),
    }
}

/// Renders a configuration in the format read by [`parse_config_str`].
/// Initial states and fixed blocks have no text form and are dropped.
pub fn render_config(cfg: &FitConfig) -> String {
    let h = &cfg.hyper;
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("iterations", cfg.schedule.iterations.to_string());
    put("burn_in", cfg.schedule.burn_in.to_string());
    put("thin", cfg.schedule.thin.to_string());
    put("seed", cfg.seed.to_string());
    put("family", cfg.family.to_string());
    put("error_model", cfg.error_model.to_string());
    put("a1", vector_text(&h.alpha_mean));
    put("A", matrix_text(&h.alpha_cov));
    put("c1", vector_text(&h.mu_mean));
    put("C", matrix_text(&h.mu_cov));
    put("v", h.sigma_x_df.to_string());
    put("V", matrix_text(&h.sigma_x_scale));
    put("v1", h.sigma_eps_shape.to_string());
    put("v2", h.sigma_eps_rate.to_string());
    put("s", vector_text(&h.beta_mean));
    put("S", matrix_text(&h.beta_cov));
    put("r1", h.phi_shape.to_string());
    put("r2", h.phi_rate.to_string());
    put("rho_lower", h.rho_lower.to_string());
    put("rho_upper", h.rho_upper.to_string());
    put("refresh_every", cfg.refresh_every.to_string());
    put("parallel", cfg.parallel.to_string());
    put("supplementary_rw", cfg.supplementary_rw.to_string());
    s
}

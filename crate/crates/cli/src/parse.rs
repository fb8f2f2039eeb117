//! Parsing helpers for flag values and config merging.

use std::fs;
use std::path::Path;

use liplab_core::{BiasSpec, LipError, NetworkParams, Result, SampleLaw};
use serde_json::{Map, Value};

fn num(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| LipError::InvalidConfig(format!("cannot parse {what} from {s:?}")))
}

/// `zero`, `gaussian:σ`, `uniform:m`, `rademacher[:scale]`, `constant:v`, or a JSON object.
pub fn bias(s: &str) -> Result<BiasSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        return Ok(serde_json::from_str(s)?);
    }
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let need = || arg.ok_or_else(|| LipError::InvalidConfig(format!("bias {kind:?} needs a parameter, e.g. {kind}:1.0")));
    let spec = match kind {
        "zero" => BiasSpec::Zero,
        "gaussian" => BiasSpec::Gaussian { sigma: num(need()?, "sigma")? },
        "uniform" => BiasSpec::Uniform { m: num(need()?, "m")? },
        "rademacher" => BiasSpec::Rademacher { scale: arg.map(|a| num(a, "scale")).transpose()?.unwrap_or(1.0) },
        "constant" => BiasSpec::Constant { value: num(need()?, "value")? },
        other => {
            return Err(LipError::InvalidConfig(format!(
                "unknown bias law {other:?}; expected zero, gaussian:S, uniform:M, rademacher[:S], constant:V or a JSON object"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// `gaussian`, `sphere:r`, `ball:r`, `multiscale:r[:min]`, or a JSON object.
pub fn sample_law(s: &str) -> Result<SampleLaw> {
    let s = s.trim();
    if s.starts_with('{') {
        return Ok(serde_json::from_str(s)?);
    }
    let parts: Vec<&str> = s.split(':').collect();
    let radius = |i: usize| -> Result<f64> {
        parts.get(i).ok_or_else(|| LipError::InvalidConfig(format!("sample law {s:?} needs a radius"))).and_then(|p| num(p, "radius"))
    };
    Ok(match parts[0] {
        "gaussian" => SampleLaw::StdGaussian,
        "sphere" => SampleLaw::Sphere { radius: radius(1)? },
        "ball" => SampleLaw::Ball { radius: radius(1)? },
        "multiscale" => SampleLaw::MultiscaleBall {
            radius: radius(1)?,
            min_radius: if parts.len() > 2 { radius(2)? } else { 1e-3 },
        },
        other => {
            return Err(LipError::InvalidConfig(format!(
                "unknown sample law {other:?}; expected gaussian, sphere:R, ball:R or multiscale:R[:MIN]"
            )))
        }
    })
}

/// A point given as `1,2.5,-3` or a JSON array.
pub fn point(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.starts_with('[') {
        return Ok(serde_json::from_str(s)?);
    }
    s.split(',').map(|p| num(p, "coordinate")).collect()
}

pub fn read_net(path: &Path) -> Result<NetworkParams> {
    let text = fs::read_to_string(path)
        .map_err(|e| LipError::InvalidConfig(format!("cannot read network {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads `--config` as a JSON object (empty when absent).
pub fn config_object(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| LipError::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text)? {
        Value::Object(m) => Ok(m),
        _ => Err(LipError::InvalidConfig(format!("config {} must be a JSON object", path.display()))),
    }
}

/// Explicit flags override config values.
pub fn merge(mut base: Map<String, Value>, overrides: Vec<(&str, Option<Value>)>) -> Value {
    for (k, v) in overrides {
        if let Some(v) = v {
            base.insert(k.to_string(), v);
        }
    }
    Value::Object(base)
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use geoext_core::systems::{builtin, load_system, Params};
use geoext_core::FramedSystem;
use serde_json::{json, Value};

use crate::args::Common;
use crate::exit::{invalid, Outcome};

/// Where a system comes from, plus textual parameter overrides.
#[derive(Clone, Debug)]
pub enum SystemSpec {
    Builtin { name: String, params: Params },
    Config { path: PathBuf, text: String, params: Params },
}

pub fn parse_kv(s: &str) -> Result<(String, String), Outcome> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| invalid(anyhow!("expected K=V, got `{s}`")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(invalid(anyhow!("empty parameter name in `{s}`")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

impl SystemSpec {
    pub fn from_common(c: &Common) -> Result<Self, Outcome> {
        let mut params = Params::new();
        for p in &c.params {
            let (k, v) = parse_kv(p)?;
            params.insert(k, v);
        }
        match (&c.builtin, &c.config) {
            (Some(name), None) => Ok(SystemSpec::Builtin {
                name: name.clone(),
                params,
            }),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(invalid)?;
                let path = std::fs::canonicalize(path).unwrap_or_else(|_| path.clone());
                Ok(SystemSpec::Config { path, text, params })
            }
            _ => Err(invalid(anyhow!("exactly one of --builtin or --config is required"))),
        }
    }

    pub fn with_param(&self, k: &str, v: &str) -> Self {
        let mut s = self.clone();
        match &mut s {
            SystemSpec::Builtin { params, .. } | SystemSpec::Config { params, .. } => {
                params.insert(k.to_string(), v.to_string());
            }
        }
        s
    }

    pub fn load(&self) -> Result<FramedSystem, Outcome> {
        match self {
            SystemSpec::Builtin { name, params } => builtin(name, params).map_err(Outcome::from),
            SystemSpec::Config { text, params, .. } => {
                let mut o = BTreeMap::new();
                for (k, v) in params {
                    let x: f64 = v
                        .parse()
                        .map_err(|_| invalid(anyhow!("parameter `{k}` needs a number, got `{v}`")))?;
                    o.insert(k.clone(), x);
                }
                load_system(text, &o).map_err(Outcome::from)
            }
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            SystemSpec::Builtin { name, params } => json!({"builtin": name, "params": params}),
            SystemSpec::Config { path, params, .. } => {
                json!({"config": path.to_string_lossy(), "params": params})
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<Self, Outcome> {
        let params: Params = match v.get("params") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| invalid(anyhow!(e)))?,
            None => Params::new(),
        };
        if let Some(name) = v.get("builtin").and_then(Value::as_str) {
            return Ok(SystemSpec::Builtin {
                name: name.to_string(),
                params,
            });
        }
        if let Some(path) = v.get("config").and_then(Value::as_str) {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(invalid)?;
            return Ok(SystemSpec::Config { path, text, params });
        }
        Err(invalid(anyhow!("system description needs `builtin` or `config`")))
    }
}

/// Parses `lo:hi:step` into an inclusive list.
pub fn parse_range(s: &str) -> Result<Vec<f64>, Outcome> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid(anyhow!("range must be lo:hi:step, got `{s}`")));
    }
    let num = |t: &str| -> Result<f64, Outcome> {
        t.trim()
            .parse::<f64>()
            .map_err(|_| invalid(anyhow!("not a number: `{t}`")))
    };
    let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(invalid(anyhow!("empty range `{s}`")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, Outcome> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| invalid(anyhow!("not a number: `{t}`")))
        })
        .collect()
}

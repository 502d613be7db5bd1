//! Experiment configuration: JSON file and/or flags, flags winning.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use heisenflow::dynamics::Method;
use heisenflow::heisenberg::MetricSpec;
use heisenflow::systems::{SystemId, SystemKind};

/// Fields as they appear in a config file; everything optional so flags can
/// fill the gaps.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartialConfig {
    pub system: Option<String>,
    pub n: Option<usize>,
    pub sigma: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub c: Option<f64>,
    pub init: Option<String>,
    pub lambda_z: Option<f64>,
    pub t_end: Option<f64>,
    pub method: Option<String>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub step: Option<f64>,
    pub seed: Option<u64>,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
}

impl PartialConfig {
    /// Later (flag-supplied) values override earlier (file) ones.
    pub fn overridden_by(mut self, other: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            system, n, sigma, tau, c, init, lambda_z, t_end, method, rel_tol, abs_tol, step,
            seed, out_csv, out_json
        );
        self
    }
}

/// Fully resolved configuration, echoed verbatim into every summary.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedConfig {
    pub system: String,
    pub n: usize,
    pub sigma: Vec<f64>,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub init: String,
    pub lambda_z: f64,
    pub t_end: f64,
    pub method: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub step: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_json: Option<PathBuf>,
}

impl ResolvedConfig {
    pub fn from_partial(p: &PartialConfig) -> Result<ResolvedConfig, String> {
        let system = p.system.clone().ok_or("missing --system")?;
        let kind: SystemKind = system.parse()?;
        let n = match (p.n, &p.sigma) {
            (Some(n), _) => n,
            (None, Some(s)) => s.len(),
            (None, None) => return Err("missing --n (or --sigma to imply it)".into()),
        };
        if n == 0 {
            return Err("n must be at least 1".into());
        }
        let sigma = p.sigma.clone().unwrap_or_else(|| vec![1.0; n]);
        if sigma.len() != n {
            return Err(format!(
                "sigma has {} entries but n = {n}",
                sigma.len()
            ));
        }
        let needs_level = !kind.is_full();
        if needs_level && p.c.is_none() {
            return Err("this system needs the level constant --c".into());
        }
        Ok(ResolvedConfig {
            system,
            n,
            sigma,
            tau: p.tau.unwrap_or(1.0),
            c: if needs_level { p.c } else { None },
            init: p.init.clone().unwrap_or_else(|| "random".into()),
            lambda_z: p.lambda_z.unwrap_or(1.0),
            t_end: p.t_end.unwrap_or(10.0),
            method: p.method.clone().unwrap_or_else(|| "dopri".into()),
            rel_tol: p.rel_tol.unwrap_or(1e-10),
            abs_tol: p.abs_tol.unwrap_or(1e-12),
            step: p.step.unwrap_or(1e-2),
            seed: p.seed.unwrap_or(0),
            out_csv: p.out_csv.clone(),
            out_json: p.out_json.clone(),
        })
    }

    pub fn system_id(&self) -> Result<SystemId, String> {
        let kind: SystemKind = self.system.parse()?;
        let spec = MetricSpec::new(self.sigma.clone(), self.tau).map_err(|e| e.to_string())?;
        SystemId::new(kind, spec, self.c).map_err(|e| e.to_string())
    }

    pub fn integration_method(&self) -> Result<Method, String> {
        match self.method.as_str() {
            "dopri" => Ok(Method::Dopri {
                rel_tol: self.rel_tol,
                abs_tol: self.abs_tol,
            }),
            "rk4" => Ok(Method::Rk4 { step: self.step }),
            "implicit-midpoint" => Ok(Method::ImplicitMidpoint { step: self.step }),
            other => Err(format!(
                "unknown method '{other}' (expected dopri, rk4, implicit-midpoint)"
            )),
        }
    }
}

/// A config file holds either one config or an array of them.
#[derive(Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    One(PartialConfig),
    Many(Vec<PartialConfig>),
}

pub fn load_config_file(path: &std::path::Path) -> Result<Vec<PartialConfig>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let parsed: ConfigFile =
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
    Ok(match parsed {
        ConfigFile::One(c) => vec![c],
        ConfigFile::Many(v) => v,
    })
}

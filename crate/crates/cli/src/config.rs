use serde::{Deserialize, Serialize};
use sg_spectral::io::PotentialSpec;
use sg_spectral::C64;
use std::path::{Path, PathBuf};

/// Prefix of the environment overrides: SGSPEC_K_MAX=24 sets `k_max`.
pub const ENV_PREFIX: &str = "SGSPEC_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowDirection {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    /// Truncation radius K.
    pub k_max: usize,
    /// Entries with |k| > k_align must sit in their own annulus.
    pub k_align: usize,
    pub rtol: f64,
    pub max_steps: usize,
    pub taylor_points: usize,
    pub verify_counts: bool,
    pub bounding_radii: usize,
    pub bounding_angles: usize,
    /// Evaluation points for `monodromy` and `reconstruct`; empty uses the
    /// default 20-point test grid.
    pub lambdas: Vec<C64>,
    pub finite_type_n: usize,
    pub finite_type_tol: f64,
    pub n_gaps: usize,
    pub flow: FlowDirection,
    pub samples: usize,
    pub y_max: f64,
    pub quad_nodes: usize,
    pub decay_n_min: usize,
    pub decay_n_max: usize,
    pub y0_hint: Option<f64>,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: PotentialSpec::Cosine { amplitude: 0.3 },
            k_max: 16,
            k_align: 0,
            rtol: 1e-11,
            max_steps: 400_000,
            taylor_points: 16,
            verify_counts: true,
            bounding_radii: 3,
            bounding_angles: 24,
            lambdas: Vec::new(),
            finite_type_n: 4,
            finite_type_tol: 1e-10,
            n_gaps: 2,
            flow: FlowDirection::X,
            samples: 33,
            y_max: 0.05,
            quad_nodes: 64,
            decay_n_min: 4,
            decay_n_max: 16,
            y0_hint: None,
            threads: None,
            deterministic: false,
            out: None,
        }
    }
}

impl RunConfig {
    /// Defaults, then the file, then SGSPEC_* variables from `env`.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                serde_json::from_str::<serde_json::Value>(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => serde_json::json!({}),
        };
        let obj = value
            .as_object_mut()
            .ok_or_else(|| "config must be a JSON object".to_string())?;
        for (k, v) in env {
            let Some(key) = k.strip_prefix(ENV_PREFIX) else { continue };
            if key == "CONFIG" {
                continue;
            }
            // numbers, booleans and objects parse as JSON; anything else is a string
            let parsed = serde_json::from_str(&v).unwrap_or(serde_json::Value::String(v));
            obj.insert(key.to_ascii_lowercase(), parsed);
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| format!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("rtol", self.rtol),
            ("finite_type_tol", self.finite_type_tol),
            ("y_max", self.y_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.k_max == 0 {
            return Err("k_max must be at least 1".into());
        }
        if self.samples < 2 {
            return Err("samples must be at least 2".into());
        }
        if self.threads == Some(0) {
            return Err("threads must be positive".into());
        }
        if self.taylor_points < 4 || self.quad_nodes < 2 {
            return Err("taylor_points ≥ 4 and quad_nodes ≥ 2 required".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_file_values() {
        let env = vec![
            ("SGSPEC_K_MAX".to_string(), "24".to_string()),
            ("SGSPEC_FLOW".to_string(), "y".to_string()),
            ("SGSPEC_POTENTIAL".to_string(), r#"{"kind":"vacuum"}"#.to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = RunConfig::load(None, env).unwrap();
        assert_eq!(c.k_max, 24);
        assert_eq!(c.flow, FlowDirection::Y);
        assert_eq!(c.potential, PotentialSpec::Vacuum);
    }

    #[test]
    fn rejects_bad_values() {
        let env = vec![("SGSPEC_RTOL".to_string(), "-1".to_string())];
        assert!(RunConfig::load(None, env).is_err());
        let env = vec![("SGSPEC_NOT_A_FIELD".to_string(), "1".to_string())];
        assert!(RunConfig::load(None, env).is_err());
    }
}

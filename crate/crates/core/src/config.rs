//! Experiment configuration: strict JSON decoding, environment overrides,
//! eager validation and a stable content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{HawkesError, Result};
use crate::intensity::{IntensityFn, Modulators, Modulus, RateMap};
use crate::kernels::Kernel;
use crate::multitype::MultiTypeModel;
use crate::samplers::{affine_parameters, EnvelopePolicy, SimConfig, DEFAULT_MAX_EVENTS};
use crate::state::InitialCondition;
use crate::strict;

/// Prefix of environment variables that override config entries;
/// `HAWKES_RUN__SEED=7` sets `run.seed`.
pub const ENV_PREFIX: &str = "HAWKES_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub kernel: Kernel,
    pub rate: RateMap,
    #[serde(default)]
    pub modulators: Modulators,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multitype: Option<MultiTypeModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Thinning,
    Cluster,
}

fn one() -> usize {
    1
}

fn default_max_events() -> usize {
    DEFAULT_MAX_EVENTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBlock {
    pub horizon: f64,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default)]
    pub envelope: EnvelopePolicy,
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisBlock {
    pub burn_in: f64,
    pub window: f64,
    pub sample_every: f64,
    pub s_grid: Vec<f64>,
    pub thetas: Vec<f64>,
    pub grid_step: f64,
    pub grid_len: usize,
    pub t_grid: Vec<f64>,
    /// Initial condition of the perturbed leg in coupling runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<InitialCondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    pub forests: usize,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            burn_in: 200.0,
            window: 1000.0,
            sample_every: 0.5,
            s_grid: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            thetas: vec![0.05, 0.1],
            grid_step: 0.01,
            grid_len: 8000,
            t_grid: vec![1.0, 2.0, 5.0, 10.0],
            perturbation: None,
            bin_width: None,
            forests: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputBlock {
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: ".".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// A validated config with the hash of its canonical text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn intensity(&self) -> Result<IntensityFn> {
        IntensityFn::new(self.model.rate.clone(), self.model.modulators.clone())
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut c = SimConfig::new(
            self.model.kernel.clone(),
            self.intensity()?,
            self.model.initial.clone(),
            self.run.horizon,
        );
        c.max_events = self.run.max_events;
        c.envelope = self.run.envelope;
        Ok(c)
    }

    pub fn modulus(&self) -> Modulus {
        self.model
            .modulus
            .clone()
            .unwrap_or(Modulus::Lipschitz { constant: 1.0 })
    }

    /// Check every invariant the run depends on.
    pub fn validate(&self) -> Result<()> {
        let sim = self.sim_config()?;
        sim.validate()?;
        if self.run.replicas == 0 {
            return Err(HawkesError::param("run.replicas", "must be positive"));
        }
        if self.run.sampler == SamplerKind::Cluster {
            affine_parameters(&sim)?;
        }
        if let Some(m) = &self.model.multitype {
            m.validate()?;
        }
        if let Some(p) = &self.analysis.perturbation {
            p.validate()?;
        }
        let a = &self.analysis;
        for (name, v) in [
            ("analysis.burn_in", a.burn_in),
            ("analysis.window", a.window),
            ("analysis.sample_every", a.sample_every),
            ("analysis.grid_step", a.grid_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HawkesError::param(name, "must be finite and positive"));
            }
        }
        if a.thetas.iter().any(|t| !(*t >= 0.0)) {
            return Err(HawkesError::param("analysis.thetas", "must be non-negative"));
        }
        if a.s_grid.iter().chain(&a.t_grid).any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(HawkesError::param("analysis", "grid points must be finite and non-negative"));
        }
        Ok(())
    }

    /// Canonical text: sorted keys, shortest round-trip floats, no whitespace.
    pub fn canonical_json(&self) -> Result<String> {
        // serde_json maps are ordered by key, so going through `Value` sorts them
        let v = serde_json::to_value(self)?;
        Ok(serde_json::to_string(&v)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }
}

/// Split `HAWKES_RUN__SEED` into `["run", "seed"]`.
fn env_path(key: &str) -> Option<Vec<String>> {
    let rest = key.strip_prefix(ENV_PREFIX)?;
    if rest.is_empty() {
        return None;
    }
    Some(rest.split("__").map(|s| s.to_ascii_lowercase()).collect())
}

/// Set `path` inside `doc`, creating objects on the way. The value is parsed
/// as JSON when possible and taken as a string otherwise.
pub fn set_path(doc: &mut Value, path: &[String], raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    for (i, seg) in path.iter().enumerate() {
        let Value::Object(map) = cur else {
            return Err(HawkesError::Config(format!(
                "override {}: {} is not an object",
                path.join("."),
                path[..i].join(".")
            )));
        };
        if i + 1 == path.len() {
            map.insert(seg.clone(), value);
            return Ok(());
        }
        cur = map.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Apply `HAWKES_*` overrides from `vars` (sorted by key so the order is fixed).
pub fn apply_env<I: IntoIterator<Item = (String, String)>>(doc: &mut Value, vars: I) -> Result<()> {
    let mut vars: Vec<(Vec<String>, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| env_path(&k).map(|p| (p, v)))
        .collect();
    vars.sort();
    for (path, raw) in vars {
        set_path(doc, &path, &raw)?;
    }
    Ok(())
}

/// Decode, validate and hash a JSON document.
pub fn from_value(doc: &Value) -> Result<LoadedConfig> {
    let config: ExperimentConfig = strict::from_value(doc, "")?;
    config.validate()?;
    let hash = config.hash()?;
    Ok(LoadedConfig { config, hash })
}

/// Parse `text`, apply the environment overrides in `vars`, then validate.
pub fn from_str_with_env<I: IntoIterator<Item = (String, String)>>(text: &str, vars: I) -> Result<LoadedConfig> {
    let mut doc: Value = serde_json::from_str(text)?;
    apply_env(&mut doc, vars)?;
    from_value(&doc)
}

/// Read a config file, applying overrides from the process environment.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    from_str_with_env(&text, std::env::vars())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::RateFamily;

    const POPULATION: &str = include_str!("../configs/population.json");

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn shipped_config_is_linear() {
        let c = from_str_with_env(POPULATION, no_env()).unwrap();
        assert!(matches!(c.config.model.rate.family(), RateFamily::Linear { .. }));
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn round_trip_keeps_hash() {
        let a = from_str_with_env(POPULATION, no_env()).unwrap();
        let text = serde_json::to_string_pretty(&a.config).unwrap();
        let b = from_str_with_env(&text, no_env()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let mut doc: Value = serde_json::from_str(POPULATION).unwrap();
        doc["run"]["sede"] = 3.into();
        doc["colour"] = "red".into();
        match from_value(&doc) {
            Err(HawkesError::UnknownKeys(k)) => {
                assert!(k.contains(&"run.sede".to_string()), "{k:?}");
                assert!(k.contains(&"colour".to_string()), "{k:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn supercritical_cluster_refused() {
        let env = vec![
            ("HAWKES_MODEL__RATE__PARAMS__B".to_string(), "1.5".to_string()),
            ("HAWKES_MODEL__RATE__ENVELOPE".to_string(), "[1.0, 1.5]".to_string()),
            ("HAWKES_RUN__SAMPLER".to_string(), "cluster".to_string()),
        ];
        match from_str_with_env(POPULATION, env) {
            Err(HawkesError::Supercritical(m)) => assert!(m.contains("≥ 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn env_overrides_change_hash() {
        let a = from_str_with_env(POPULATION, no_env()).unwrap();
        let b = from_str_with_env(POPULATION, vec![("HAWKES_RUN__SEED".into(), "99".into())]).unwrap();
        assert_eq!(b.config.run.seed, 99);
        assert_ne!(a.hash, b.hash);
        let c = from_str_with_env(POPULATION, vec![("OTHER_RUN__SEED".into(), "99".into())]).unwrap();
        assert_eq!(a.hash, c.hash);
    }

    #[test]
    fn invalid_field_named() {
        let env = vec![("HAWKES_RUN__HORIZON".to_string(), "-1".to_string())];
        match from_str_with_env(POPULATION, env) {
            Err(HawkesError::InvalidParameter { field, .. }) => assert_eq!(field, "horizon"),
            other => panic!("{other:?}"),
        }
    }
}

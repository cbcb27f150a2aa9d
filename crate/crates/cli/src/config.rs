//! Versioned run configurations. TOML is the primary format; files ending in
//! `.json` are read as JSON. Deserialization errors carry the field path.

use std::path::Path;

use hkm_core::concentration::{MomentModel, TailCheckConfig};
use hkm_core::experiments::ExperimentConfig;
use hkm_core::hilbert::CovarianceOp;
use hkm_core::sampling::NoiseModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "HKM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationKind {
    ErrorCurve,
    SobolevComparison,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub schema_version: u32,
    pub kind: SimulationKind,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramFile {
    pub schema_version: u32,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgfSection {
    pub noise: NoiseModel,
    pub gamma: CovarianceOp,
    pub t_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernsteinSection {
    pub model: MomentModel,
    pub k_max: u32,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCheckFile {
    pub schema_version: u32,
    pub tail: TailCheckConfig,
    #[serde(default)]
    pub mgf: Option<MgfSection>,
    #[serde(default)]
    pub bernstein: Option<BernsteinSection>,
}

pub trait Versioned {
    fn schema_version(&self) -> u32;
    /// Replace every seed with `seed`.
    fn override_seed(&mut self, seed: u64);
}

impl Versioned for SimulateFile {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
    fn override_seed(&mut self, seed: u64) {
        self.experiment.seed = seed;
    }
}

impl Versioned for PhaseDiagramFile {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
    fn override_seed(&mut self, seed: u64) {
        self.experiment.seed = seed;
    }
}

impl Versioned for TailCheckFile {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
    fn override_seed(&mut self, seed: u64) {
        self.tail.seed = seed;
        if let Some(m) = self.mgf.as_mut() {
            m.seed = seed;
        }
        if let Some(b) = self.bernstein.as_mut() {
            b.seed = seed;
        }
    }
}

fn parse_text<T: DeserializeOwned>(text: &str, json: bool) -> Result<T, String> {
    if json {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| format!("at `{}`: {}", e.path(), e.inner()))
    } else {
        let de = toml::Deserializer::parse(text).map_err(|e| e.to_string())?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner().message().to_string();
            format!("at `{}`: {inner}", e.path())
        })
    }
}

/// Read, version-check and seed-override a config file.
pub fn load<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
    let json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut cfg: T = parse_text(&text, json)
        .map_err(|e| Failure::input(format!("invalid config {}: {e}", path.display())))?;
    if cfg.schema_version() != SCHEMA_VERSION {
        return Err(Failure::input(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version()
        )));
    }
    if let Ok(raw) = std::env::var(SEED_ENV) {
        let seed = raw.trim().parse().map_err(|_| {
            Failure::input(format!("{SEED_ENV}='{raw}' is not an unsigned integer"))
        })?;
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

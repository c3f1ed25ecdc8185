use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use l2man::isometry_group::IsometryRecord;
use l2man::{ManifoldSpec, ProbSpace};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Space,
    Angle,
    Decompose,
    EtaRecover,
    Gallery,
    Suite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GalleryCase {
    Interleave,
    Hilbert,
    R1,
    Product,
}

/// Everything an experiment can be parameterized by. Command-line flags
/// override the corresponding fields.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub space: Option<ProbSpace>,
    /// Shorthand for a uniform grid space of this size.
    pub uniform: Option<usize>,
    pub manifold: Option<ManifoldSpec>,
    pub seed: Option<u64>,
    /// Replaces the tolerance of every report check with this name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub pairs: Option<usize>,
    pub oracle: Option<String>,
    pub isometry: Option<IsometryRecord>,
    pub expect: Option<String>,
    pub case: Option<GalleryCase>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub eta: Option<Vec<f64>>,
    pub set: Option<Vec<usize>>,
    pub radius: Option<f64>,
    pub factor_weights: Option<Vec<f64>>,
    pub trace: Option<PathBuf>,
}

/// Input problems; the process exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<l2man::Error> for ConfigError {
    fn from(e: l2man::Error) -> Self {
        ConfigError(e.to_string())
    }
}

/// Parses JSON text, reporting the line, column and field path of the first error.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let parsed: T = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.inner();
        let (line, column) = (inner.line(), inner.column());
        let msg = inner.to_string();
        let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m).to_string();
        ConfigError(format!(
            "config error in {origin} at line {line}, column {column}, field `{path}`: {msg}"
        ))
    })?;
    Ok(parsed)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

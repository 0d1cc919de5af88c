//! The JSON interchange format shared by model files, answers files and
//! what-if files.
//!
//! Every document carries `format_version`; documents from a newer version
//! are refused before any other field is read, and unknown fields are
//! errors. Probabilities are written as decimal strings.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elicitation::{Answer, ElicitationStore, ReconcileConfig, SelectionMode};
use crate::graph::{Dag, GraphError, Variable};
use crate::inference::{Evidence, InferenceError, Network, Strategy};
use crate::loglinear::{CountConvention, InteractionSpec};
use crate::synthesis::{Cpt, SynthesisMode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("document has no format_version field")]
    MissingVersion,
    #[error("format_version {found} is newer than the supported version {supported}")]
    UnsupportedVersion { found: u64, supported: u32 },
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0} is being saved by another process")]
    Locked(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

fn default_tolerance() -> f64 {
    ReconcileConfig::default().tolerance
}

fn default_significance() -> f64 {
    ReconcileConfig::default().significance
}

/// Run settings stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default = "default_tolerance", with = "crate::decimal")]
    pub tolerance: f64,
    #[serde(default = "default_significance", with = "crate::decimal")]
    pub significance: f64,
    #[serde(default)]
    pub selection_mode: SelectionMode,
    #[serde(default)]
    pub synthesis_mode: SynthesisMode,
    #[serde(default)]
    pub count_convention: CountConvention,
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            name: String::new(),
            tolerance: default_tolerance(),
            significance: default_significance(),
            selection_mode: SelectionMode::default(),
            synthesis_mode: SynthesisMode::default(),
            count_convention: CountConvention::default(),
        }
    }
}

impl Metadata {
    pub fn reconcile_config(&self) -> ReconcileConfig {
        ReconcileConfig {
            tolerance: self.tolerance,
            significance: self.significance,
            mode: self.selection_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(default)]
    pub metadata: Metadata,
    pub variables: Vec<Variable>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kept_interactions: Vec<InteractionSpec>,
    #[serde(default)]
    pub store: ElicitationStore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpts: Option<Vec<Cpt>>,
}

impl ModelFile {
    pub fn new(dag: &Dag, kept: Vec<InteractionSpec>, store: ElicitationStore) -> ModelFile {
        ModelFile {
            format_version: FORMAT_VERSION,
            metadata: Metadata::default(),
            variables: dag.variables().to_vec(),
            edges: dag.edges().into_iter().map(|(from, to)| Edge { from, to }).collect(),
            kept_interactions: kept,
            store,
            cpts: None,
        }
    }

    pub fn dag(&self) -> Result<Dag, GraphError> {
        let edges: Vec<(String, String)> = self.edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect();
        Dag::new(self.variables.clone(), &edges)
    }

    /// The synthesized network, when the model has tables.
    pub fn network(&self) -> Result<Option<Network>, ModelFileError> {
        match &self.cpts {
            None => Ok(None),
            Some(cpts) => Ok(Some(Network::new(self.dag()?, cpts.clone())?)),
        }
    }

    pub fn parse(text: &str) -> Result<ModelFile, ModelFileError> {
        parse_document(text)
    }

    pub fn to_canonical_string(&self) -> String {
        canonical_string(self)
    }

    pub fn load(path: &Path) -> Result<ModelFile, ModelFileError> {
        ModelFile::parse(&read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        write_atomic(path, &self.to_canonical_string())
    }
}

/// Answers supplied by an expert or a database extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswersFile {
    pub format_version: u32,
    pub answers: Vec<Answer>,
}

impl AnswersFile {
    pub fn new(answers: Vec<Answer>) -> Self {
        AnswersFile {
            format_version: FORMAT_VERSION,
            answers,
        }
    }

    pub fn parse(text: &str) -> Result<AnswersFile, ModelFileError> {
        parse_document(text)
    }

    pub fn to_canonical_string(&self) -> String {
        canonical_string(self)
    }
}

/// Maintenance strategies to compare against the base network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfFile {
    pub format_version: u32,
    pub query: String,
    #[serde(default)]
    pub evidence: Evidence,
    pub strategies: Vec<Strategy>,
}

impl WhatIfFile {
    pub fn parse(text: &str) -> Result<WhatIfFile, ModelFileError> {
        parse_document(text)
    }

    pub fn to_canonical_string(&self) -> String {
        canonical_string(self)
    }
}

pub fn check_version(value: &serde_json::Value) -> Result<(), ModelFileError> {
    let v = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or(ModelFileError::MissingVersion)?;
    if v > FORMAT_VERSION as u64 {
        return Err(ModelFileError::UnsupportedVersion {
            found: v,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// Parses any versioned document: the version is checked before the body.
pub fn parse_document<T: DeserializeOwned>(text: &str) -> Result<T, ModelFileError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    check_version(&value)?;
    Ok(serde_json::from_value(value)?)
}

/// Pretty JSON with a trailing newline: the byte-stable saved form.
pub fn canonical_string<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

pub fn read(path: &Path) -> Result<String, ModelFileError> {
    fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a half-written model. A `.lock` file excludes concurrent writers.
pub fn write_atomic(path: &Path, text: &str) -> Result<(), ModelFileError> {
    let io = |source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let lock = path.with_extension("lock");
    match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(ModelFileError::Locked(path.display().to_string()))
        }
        Err(e) => return Err(io(e)),
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    let _ = fs::remove_file(&lock);
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

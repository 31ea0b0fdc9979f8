//! Domain types for execution traces: state observations, action records,
//! and trace-manifest ingestion.
//!
//! A trace directory holds one `trace.json` manifest plus the PNG screenshots
//! it references. Images are identified everywhere else by the SHA-256 digest
//! of their raw bytes, so byte-identical frames compare equal without ever
//! being decoded.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("failed to read manifest {path}: {source}")]
    ManifestRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse manifest {path}: {source}")]
    ManifestParse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("trace {id} is empty: a trace needs at least one state")]
    EmptyTrace { id: String },
    #[error("trace {id} has {states} states but {actions} actions; expected {}", states - 1)]
    ActionCountMismatch {
        id: String,
        states: usize,
        actions: usize,
    },
    #[error("trace {id}: missing image {path}")]
    MissingImage { id: String, path: PathBuf },
    #[error("trace {id}: {path} is not a PNG image ({detail})")]
    NotPng {
        id: String,
        path: PathBuf,
        detail: String,
    },
    #[error("action {index} of trace {id} connects {from}->{to}; actions must link consecutive states")]
    ActionEndpoints {
        id: String,
        index: usize,
        from: usize,
        to: usize,
    },
    #[error("state at position {position} of trace {id} carries index {index}; indices must be consecutive from 0")]
    StateIndex {
        id: String,
        position: usize,
        index: usize,
    },
}

/// SHA-256 digest of an image's raw file bytes. Two observations with equal
/// digests are byte-identical and therefore trivially equivalent.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        Digest(hasher.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(64);
        for b in &self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn from_hex(hex: &str) -> Option<Self> {
        if hex.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let s = std::str::from_utf8(chunk).ok()?;
            out[i] = u8::from_str_radix(s, 16).ok()?;
        }
        Some(Digest(out))
    }

    /// First 12 hex characters, for human-readable summaries.
    pub fn short(&self) -> String {
        self.to_hex()[..12].to_string()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid digest hex: {s}")))
    }
}

/// Where an observation's image lives: a file on disk, or bytes carried
/// along (used for representatives embedded in a persisted model).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Path(PathBuf),
    Bytes(Arc<Vec<u8>>),
}

impl ImageRef {
    pub fn read_bytes(&self) -> std::io::Result<Vec<u8>> {
        match self {
            ImageRef::Path(p) => fs::read(p),
            ImageRef::Bytes(b) => Ok(b.as_ref().clone()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ImageRef::Path(p) => p.display().to_string(),
            ImageRef::Bytes(b) => format!("<{} embedded bytes>", b.len()),
        }
    }
}

/// One observed state in a trace: a screenshot at a given step.
///
/// The optional label is metadata for synthetic fixtures and the mock judge;
/// the visual metrics never read it.
#[derive(Debug, Clone, PartialEq)]
pub struct StateObservation {
    /// Zero-based position within its trace.
    pub index: usize,
    pub image: ImageRef,
    pub label: Option<String>,
    pub digest: Digest,
}

impl StateObservation {
    /// Builds an observation around in-memory PNG bytes.
    pub fn from_png_bytes(index: usize, bytes: Vec<u8>, label: Option<String>) -> Self {
        let digest = Digest::of_bytes(&bytes);
        StateObservation {
            index,
            image: ImageRef::Bytes(Arc::new(bytes)),
            label,
            digest,
        }
    }

    /// Label if present, else a digest prefix. Used in reports.
    pub fn display_name(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None => self.digest.short(),
        }
    }
}

/// The action taken between two consecutive observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub kind: String,
    #[serde(default)]
    pub params: IndexMap<String, String>,
    pub from_index: usize,
    pub to_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceRole {
    Training,
    Test,
}

/// An ordered sequence of observations with the actions between them.
/// `states.len() >= 1` and `actions.len() == states.len() - 1` always hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub id: String,
    pub role: TraceRole,
    pub states: Vec<StateObservation>,
    pub actions: Vec<ActionRecord>,
}

impl Trace {
    pub fn new(
        id: String,
        role: TraceRole,
        states: Vec<StateObservation>,
        actions: Vec<ActionRecord>,
    ) -> Result<Self, TraceError> {
        if states.is_empty() {
            return Err(TraceError::EmptyTrace { id });
        }
        if actions.len() != states.len() - 1 {
            return Err(TraceError::ActionCountMismatch {
                id,
                states: states.len(),
                actions: actions.len(),
            });
        }
        for (position, s) in states.iter().enumerate() {
            if s.index != position {
                return Err(TraceError::StateIndex {
                    id,
                    position,
                    index: s.index,
                });
            }
        }
        for (i, a) in actions.iter().enumerate() {
            if a.from_index != i || a.to_index != i + 1 {
                return Err(TraceError::ActionEndpoints {
                    id,
                    index: i,
                    from: a.from_index,
                    to: a.to_index,
                });
            }
        }
        Ok(Trace {
            id,
            role,
            states,
            actions,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// On-disk manifest schema. One manifest per trace directory; image paths
/// resolve relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceManifest {
    pub id: String,
    pub role: TraceRole,
    pub states: Vec<ManifestState>,
    pub actions: Vec<ManifestAction>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestState {
    pub image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestAction {
    pub kind: String,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub params: IndexMap<String, String>,
}

/// Loads a trace from its manifest, computing the digest of every referenced
/// image. Only PNG images are accepted; a missing or non-PNG image fails the
/// whole load.
pub fn load_trace(manifest_path: &Path) -> Result<Trace, TraceError> {
    let text = fs::read_to_string(manifest_path).map_err(|source| TraceError::ManifestRead {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: TraceManifest =
        serde_json::from_str(&text).map_err(|source| TraceError::ManifestParse {
            path: manifest_path.to_path_buf(),
            source,
        })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    if manifest.states.is_empty() {
        return Err(TraceError::EmptyTrace { id: manifest.id });
    }
    if manifest.actions.len() != manifest.states.len() - 1 {
        return Err(TraceError::ActionCountMismatch {
            id: manifest.id,
            states: manifest.states.len(),
            actions: manifest.actions.len(),
        });
    }

    let mut states = Vec::with_capacity(manifest.states.len());
    for (index, st) in manifest.states.iter().enumerate() {
        let path = base.join(&st.image);
        let bytes = fs::read(&path).map_err(|_| TraceError::MissingImage {
            id: manifest.id.clone(),
            path: path.clone(),
        })?;
        verify_png(&manifest.id, &path, &bytes)?;
        states.push(StateObservation {
            index,
            image: ImageRef::Path(path),
            label: st.label.clone(),
            digest: Digest::of_bytes(&bytes),
        });
    }

    let actions = manifest
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| ActionRecord {
            kind: a.kind.clone(),
            params: a.params.clone(),
            from_index: i,
            to_index: i + 1,
        })
        .collect();

    Trace::new(manifest.id, manifest.role, states, actions)
}

fn verify_png(id: &str, path: &Path, bytes: &[u8]) -> Result<(), TraceError> {
    match image::guess_format(bytes) {
        Ok(image::ImageFormat::Png) => Ok(()),
        Ok(other) => Err(TraceError::NotPng {
            id: id.to_string(),
            path: path.to_path_buf(),
            detail: format!("detected {other:?}"),
        }),
        Err(e) => Err(TraceError::NotPng {
            id: id.to_string(),
            path: path.to_path_buf(),
            detail: e.to_string(),
        }),
    }
}

/// The m digests of a trace, in trace order.
pub fn trace_digest_sequence(t: &Trace) -> Vec<Digest> {
    t.states.iter().map(|s| s.digest).collect()
}

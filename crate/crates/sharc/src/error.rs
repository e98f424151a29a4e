//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph construction, scoring, training, I/O and metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// An `EmbeddingSet` violated one or more structural invariants.
    #[error("invalid embedding set: {}", format_violations(.0))]
    InvalidEmbeddings(Vec<crate::types::Violation>),

    /// A feature row had zero norm, so cosine similarity is undefined.
    #[error("row {row} has zero norm; cosine similarity is undefined")]
    ZeroNormRow { row: usize },

    /// A graph operation was asked to run on zero nodes.
    #[error("operation requires a non-empty graph")]
    EmptyGraph,

    /// Matrix/vector dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// Training was requested on a recording without labels.
    #[error("recording {recording_id:?} has no labels; training requires labeled embeddings")]
    MissingLabels { recording_id: String },

    /// The training loss became non-finite.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    /// A parameter supplied through config or CLI was out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Underlying file-system failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A binary container did not start with the expected magic bytes.
    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        found: [u8; 4],
    },

    /// A binary container declared an unsupported format version.
    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: String, version: u32 },

    /// A file ended before the declared payload was complete.
    #[error("{path}: truncated payload, {detail}")]
    Truncated { path: String, detail: String },

    /// Declared dimensions overflow when multiplied out.
    #[error("{path}: declared size {rows}x{cols} overflows")]
    SizeOverflow { path: String, rows: u64, cols: u64 },

    /// A `.segs` sidecar did not have one line per embedding row.
    #[error("{path}: sidecar has {found} entries but the container declares {expected}")]
    SidecarMismatch {
        path: String,
        expected: usize,
        found: usize,
    },

    /// A malformed line in a text file (RTTM, sidecar, training log).
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    /// A checkpoint's stored dimensions do not match the expected ones.
    #[error("checkpoint {path} has dims (F={f}, F'={latent}, h1={hidden1}, h2={hidden2}), incompatible with the data: {reason}")]
    IncompatibleCheckpoint {
        path: String,
        f: usize,
        latent: usize,
        hidden1: usize,
        hidden2: usize,
        reason: String,
    },

    /// Centroid sampling could not satisfy the minimum-angle constraint.
    #[error("could not place {speakers} centroids with pairwise angle >= {min_angle_deg} deg after {attempts} attempts")]
    InfeasibleAngles {
        speakers: usize,
        min_angle_deg: f64,
        attempts: usize,
    },

    /// DER was asked to score an empty reference.
    #[error("reference annotation is empty")]
    EmptyReference,

    /// Reference and hypothesis cover different recording-id sets.
    #[error("recording ids differ between reference and hypothesis: {detail}")]
    RecordingMismatch { detail: String },

    /// An internal invariant that should be unreachable was violated.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

fn format_violations(violations: &[crate::types::Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

//! Ingestion and persistence: binary embedding/similarity containers,
//! `.segs` timeline sidecars, RTTM annotation files and synthetic dataset
//! generation.

mod embeddings;
mod rttm;
mod synth;

pub use embeddings::{read_embeddings, read_similarity, write_embeddings, write_similarity};
pub use rttm::{read_rttm, records_from_labels, write_rttm, RttmRecord};
pub use synth::{synth_generate, SynthConfig};

//! Symptom vocabulary, case and literature ingestion, feature encoding and
//! the synthetic case generator.

mod dataset;
pub mod io;
mod meta;
pub mod synth;
mod vocab;

pub use dataset::{Dataset, Encoder, LiteratureProfile, PatientCase, RawCase, RawLiterature};
pub use meta::{AgeGroup, Gender, MetaField, MetaRecord, MetaSchema, MetaValue};
pub use synth::{synth_generate, MetaSkew, SynthOutput, SynthSpec};
pub use vocab::SymptomVocabulary;

use sha2::{Digest, Sha256};

impl Dataset {
    /// SHA-256 over the serialized literature and case files.
    pub fn content_hash(&self) -> crate::Result<String> {
        let mut h = Sha256::new();
        h.update(io::to_jsonl(&self.raw_literature)?.as_bytes());
        h.update(io::to_jsonl(&self.raw_cases)?.as_bytes());
        Ok(hex::encode(h.finalize()))
    }
}

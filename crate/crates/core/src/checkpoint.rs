//! JSON checkpoints of trained models.
//!
//! Freeze masks are stored run-length encoded: alternating run lengths,
//! starting with a (possibly empty) run of trainable entries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Encoder, MetaField, MetaSchema};
use crate::diffcore::{Matrix, ParamStore, Parameter};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelDims, ToxNet};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub frozen_mask_rle: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub config_hash: String,
    pub dims: ModelDims,
    pub vocab_hash: String,
    pub year_range: (i32, i32),
    pub meta_schema: MetaSchema,
    /// Meta fields that defined graph edges during training.
    pub meta_fields: Vec<MetaField>,
    pub classes: Vec<String>,
    /// Content hash of the training population graph, if the variant has one.
    pub population_hash: Option<String>,
    pub model_hash: String,
    pub params: Vec<StoredParam>,
}

pub fn encode_rle(mask: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &m in mask {
        if m == current {
            len += 1;
        } else {
            runs.push(len);
            current = m;
            len = 1;
        }
    }
    if len > 0 || runs.is_empty() {
        runs.push(len);
    }
    runs
}

pub fn decode_rle(runs: &[usize], expected_len: usize) -> Result<Vec<bool>> {
    let total: usize = runs.iter().sum();
    if total != expected_len {
        return Err(Error::Checkpoint(format!(
            "freeze mask covers {total} entries, expected {expected_len}"
        )));
    }
    let mut out = Vec::with_capacity(total);
    for (k, &len) in runs.iter().enumerate() {
        out.extend(std::iter::repeat_n(k % 2 == 1, len));
    }
    Ok(out)
}

/// SHA-256 over parameter names, shapes and value bits.
pub fn model_hash(params: &ParamStore) -> String {
    let mut h = Sha256::new();
    for p in params.iter() {
        h.update((p.name.len() as u64).to_le_bytes());
        h.update(p.name.as_bytes());
        h.update((p.value.rows() as u64).to_le_bytes());
        h.update((p.value.cols() as u64).to_le_bytes());
        for v in p.value.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn config_hash(config: &ModelConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(config)?)))
}

impl Checkpoint {
    pub fn from_model(
        model: &ToxNet,
        encoder: &Encoder,
        meta_fields: &[MetaField],
        population_hash: Option<String>,
    ) -> Result<Self> {
        let params = model
            .params
            .iter()
            .map(|p| StoredParam {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                values: p.value.as_slice().to_vec(),
                frozen_mask_rle: encode_rle(p.freeze_mask()),
            })
            .collect();
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash: config_hash(&model.config)?,
            config: model.config.clone(),
            dims: model.dims,
            vocab_hash: encoder.vocab.hash(),
            year_range: encoder.schema.year_range,
            meta_schema: encoder.schema.clone(),
            meta_fields: meta_fields.to_vec(),
            classes: encoder.classes.clone(),
            population_hash,
            model_hash: model_hash(&model.params),
            params,
        })
    }

    /// Checks that the checkpoint fits `encoder` (vocabulary, classes, meta alphabets).
    pub fn check_encoder(&self, encoder: &Encoder) -> Result<()> {
        let hash = encoder.vocab.hash();
        if hash != self.vocab_hash {
            return Err(Error::VocabularyMismatch(format!(
                "checkpoint vocabulary {} differs from dataset vocabulary {}",
                short(&self.vocab_hash),
                short(&hash)
            )));
        }
        if encoder.classes != self.classes {
            return Err(Error::Checkpoint("class list differs from the dataset".into()));
        }
        if encoder.schema != self.meta_schema || encoder.schema.year_range != self.year_range {
            return Err(Error::Checkpoint("meta schema differs from the dataset".into()));
        }
        Ok(())
    }

    /// Rebuilds the model. `literature` is the dataset's literature matrix,
    /// against which the stored frozen entries are verified bit for bit.
    pub fn to_model(&self, encoder: &Encoder, literature: &Matrix) -> Result<ToxNet> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        self.check_encoder(encoder)?;
        if config_hash(&self.config)? != self.config_hash {
            return Err(Error::Checkpoint("config_hash does not match config".into()));
        }
        let mut store = ParamStore::new();
        for p in &self.params {
            if p.values.len() != p.rows * p.cols {
                return Err(Error::Checkpoint(format!(
                    "{} holds {} values for shape {}x{}",
                    p.name,
                    p.values.len(),
                    p.rows,
                    p.cols
                )));
            }
            let mask = decode_rle(&p.frozen_mask_rle, p.values.len())?;
            let value = Matrix::from_vec(p.rows, p.cols, p.values.clone())?;
            store.add(Parameter::new(p.name.clone(), value).with_freeze_mask(mask)?);
        }
        // Structural and frozen-value checks first: they give the precise error.
        let model = ToxNet::from_params(self.config.clone(), self.dims, literature, store)?;
        if model_hash(&model.params) != self.model_hash {
            return Err(Error::Checkpoint("model_hash does not match parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        serde_json::from_reader(r).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip() {
        for mask in [
            vec![],
            vec![true],
            vec![false],
            vec![true, true, false, true],
            vec![false, false, true, false, false],
        ] {
            let runs = encode_rle(&mask);
            assert_eq!(decode_rle(&runs, mask.len()).unwrap(), mask, "{runs:?}");
        }
        assert_eq!(encode_rle(&[true, true, false]), vec![0, 2, 1]);
        assert!(decode_rle(&[1, 2], 4).is_err());
    }
}

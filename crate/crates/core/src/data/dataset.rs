//! Cases, literature profiles and the feature encoder that ties them to a
//! vocabulary.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::meta::{MetaRecord, MetaSchema};
use super::vocab::SymptomVocabulary;
use crate::diffcore::Matrix;
use crate::error::{Error, Result};

/// One case as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCase {
    pub id: String,
    pub symptoms: Vec<String>,
    pub meta: MetaRecord,
    pub label: Option<String>,
}

/// One literature entry as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLiterature {
    pub toxin: String,
    pub symptoms: Vec<String>,
}

/// An encoded case: binary symptom vector over the full vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientCase {
    pub id: String,
    pub symptom_vector: Vec<bool>,
    pub meta: MetaRecord,
    pub label: Option<usize>,
}

impl PatientCase {
    pub fn symptom_count(&self) -> usize {
        self.symptom_vector.iter().filter(|b| **b).count()
    }
}

/// Literature symptom vector of one toxin class, over the first `F_H` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteratureProfile {
    pub toxin_name: String,
    pub class_index: usize,
    pub symptom_vector: Vec<bool>,
}

/// Everything needed to turn raw cases into model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub vocab: SymptomVocabulary,
    pub schema: MetaSchema,
    pub classes: Vec<String>,
}

impl Encoder {
    /// Total feature width `F = F_P + meta width`.
    pub fn feature_width(&self) -> usize {
        self.vocab.len() + self.schema.width()
    }

    pub fn class_index(&self, toxin: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == toxin)
            .ok_or_else(|| Error::UnknownToxin(toxin.to_string()))
    }

    pub fn encode_case(&self, raw: &RawCase) -> Result<PatientCase> {
        if raw.symptoms.is_empty() {
            return Err(Error::NoSymptoms(raw.id.clone()));
        }
        let symptom_vector = self.vocab.indicator(&raw.symptoms)?;
        // Validate meta against the declared alphabets up front.
        self.schema.encode(&raw.meta)?;
        let label = raw.label.as_deref().map(|l| self.class_index(l)).transpose()?;
        Ok(PatientCase {
            id: raw.id.clone(),
            symptom_vector,
            meta: raw.meta.clone(),
            label,
        })
    }

    /// `x_i = [p_i ‖ enc(q_i)]`
    pub fn features(&self, case: &PatientCase) -> Result<Vec<f64>> {
        if case.symptom_vector.len() != self.vocab.len() {
            return Err(Error::VocabularyMismatch(format!(
                "case {} has {} symptom slots, vocabulary has {}",
                case.id,
                case.symptom_vector.len(),
                self.vocab.len()
            )));
        }
        let mut x: Vec<f64> = case
            .symptom_vector
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        x.extend(self.schema.encode(&case.meta)?);
        Ok(x)
    }

    pub fn feature_matrix<'a>(&self, cases: impl IntoIterator<Item = &'a PatientCase>) -> Result<Matrix> {
        let rows = cases
            .into_iter()
            .map(|c| self.features(c))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.feature_width()));
        }
        Matrix::from_rows(&rows)
    }
}

/// A validated, encoded dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub raw_literature: Vec<RawLiterature>,
    pub raw_cases: Vec<RawCase>,
    pub encoder: Encoder,
    pub literature: Vec<LiteratureProfile>,
    pub cases: Vec<PatientCase>,
}

impl Dataset {
    /// Builds the vocabulary and meta schema from the inputs and encodes
    /// every case. Class indices follow literature order.
    pub fn new(raw_literature: Vec<RawLiterature>, raw_cases: Vec<RawCase>) -> Result<Self> {
        if raw_literature.is_empty() {
            return Err(Error::Dataset("literature is empty".into()));
        }
        if raw_cases.is_empty() {
            return Err(Error::Dataset("case list is empty".into()));
        }
        let mut toxins = HashSet::new();
        for entry in &raw_literature {
            if !toxins.insert(entry.toxin.as_str()) {
                return Err(Error::Dataset(format!("duplicate toxin {:?}", entry.toxin)));
            }
            if entry.symptoms.is_empty() {
                return Err(Error::Dataset(format!(
                    "literature profile {:?} has no symptoms",
                    entry.toxin
                )));
            }
        }
        let mut ids = HashSet::new();
        for case in &raw_cases {
            if !ids.insert(case.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate case id {:?}", case.id)));
            }
        }

        let vocab = SymptomVocabulary::build(
            raw_literature
                .iter()
                .flat_map(|l| l.symptoms.iter().map(String::as_str)),
            raw_cases
                .iter()
                .flat_map(|c| c.symptoms.iter().map(String::as_str)),
        )?;
        let schema = MetaSchema::from_records(raw_cases.iter().map(|c| &c.meta))?;
        let encoder = Encoder {
            vocab,
            schema,
            classes: raw_literature.iter().map(|l| l.toxin.clone()).collect(),
        };
        let f_h = encoder.vocab.literature_count();
        let literature = raw_literature
            .iter()
            .enumerate()
            .map(|(class_index, entry)| {
                let full = encoder.vocab.indicator(&entry.symptoms)?;
                Ok(LiteratureProfile {
                    toxin_name: entry.toxin.clone(),
                    class_index,
                    symptom_vector: full[..f_h].to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cases = raw_cases
            .iter()
            .map(|c| encoder.encode_case(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            raw_literature,
            raw_cases,
            encoder,
            literature,
            cases,
        })
    }

    pub fn class_count(&self) -> usize {
        self.literature.len()
    }

    /// Labels of all cases; errors if any case is unlabelled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.cases
            .iter()
            .map(|c| {
                c.label
                    .ok_or_else(|| Error::Dataset(format!("case {:?} is unlabelled", c.id)))
            })
            .collect()
    }

    /// Literature matrix `[C × F_H]` with `h_c` as row `c`.
    pub fn literature_matrix(&self) -> Matrix {
        let f_h = self.encoder.vocab.literature_count();
        Matrix::from_fn(self.literature.len(), f_h, |c, s| {
            if self.literature[c].symptom_vector[s] {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.class_count()];
        for c in &self.cases {
            if let Some(l) = c.label {
                hist[l] += 1;
            }
        }
        hist
    }
}

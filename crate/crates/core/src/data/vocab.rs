//! Ordered symptom universe with literature symptoms first.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymptomVocabulary {
    symptoms: Vec<String>,
    literature_count: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl SymptomVocabulary {
    /// Literature symptoms (sorted) occupy the first `F_H` slots, case-only
    /// symptoms (sorted) follow.
    pub fn build<'a, L, C>(literature_symptoms: L, case_symptoms: C) -> Result<Self>
    where
        L: IntoIterator<Item = &'a str>,
        C: IntoIterator<Item = &'a str>,
    {
        let lit: BTreeSet<&str> = literature_symptoms.into_iter().collect();
        if lit.is_empty() {
            return Err(Error::Dataset("literature contains no symptoms".into()));
        }
        let extra: BTreeSet<&str> = case_symptoms
            .into_iter()
            .filter(|s| !lit.contains(s))
            .collect();
        let symptoms: Vec<String> = lit.iter().chain(extra.iter()).map(|s| s.to_string()).collect();
        Ok(Self::from_ordered(symptoms, lit.len()))
    }

    /// Rebuilds a vocabulary from an already ordered list.
    pub fn from_ordered(symptoms: Vec<String>, literature_count: usize) -> Self {
        let index = symptoms
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self {
            symptoms,
            literature_count,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.symptoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symptoms.is_empty()
    }

    /// `F_H`
    pub fn literature_count(&self) -> usize {
        self.literature_count
    }

    pub fn symptoms(&self) -> &[String] {
        &self.symptoms
    }

    pub fn name(&self, index: usize) -> &str {
        &self.symptoms[index]
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn is_literature(&self, index: usize) -> bool {
        index < self.literature_count
    }

    /// Stable content hash used to bind checkpoints to a vocabulary.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.literature_count.to_le_bytes());
        for s in &self.symptoms {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Binary indicator vector for a list of names; every unknown name is reported.
    pub fn indicator(&self, names: &[String]) -> Result<Vec<bool>> {
        let mut out = vec![false; self.len()];
        let mut unknown = Vec::new();
        for n in names {
            match self.lookup(n) {
                Some(i) => out[i] = true,
                None => unknown.push(n.clone()),
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownSymptoms(unknown));
        }
        Ok(out)
    }
}

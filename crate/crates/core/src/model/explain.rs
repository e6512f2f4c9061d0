//! Per-symptom attribution of the literature-prior scores.
//!
//! `y_lit_c = Σ_s W_lit[c,s] · v_s` with `v = elu(W_symp p)`, so the terms
//! `W_lit[c,s] · v_s` sum exactly to the class score.

use serde::{Deserialize, Serialize};

use super::ToxNet;
use crate::diffcore::ops::elu;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomContribution {
    /// Literature symptom `s`.
    pub symptom: String,
    pub activation: f64,
    pub contribution: f64,
    /// Input symptoms feeding `u_s = Σ_j W_symp[s,j] p_j`, with their weights.
    pub mapped_from: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassExplanation {
    pub class_index: usize,
    pub class: String,
    pub score: f64,
    /// One term per symptom of the class's literature profile, largest first.
    pub contributions: Vec<SymptomContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub classes: Vec<ClassExplanation>,
}

/// Explains the literature scores of one case, classes in index order.
/// `symptom_names` is the full vocabulary; `top_k` keeps the largest terms
/// of each class.
pub fn explain(
    model: &ToxNet,
    symptoms: &[bool],
    symptom_names: &[String],
    class_names: &[String],
    top_k: Option<usize>,
) -> Result<Explanation> {
    let (w_symp, w_lit) = match (model.symptom_map(), model.literature_matrix()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Contract(format!(
                "{} has no literature prior to explain",
                model.variant()
            )))
        }
    };
    let f_p = model.dims.symptoms;
    let f_h = model.dims.literature;
    if symptoms.len() != f_p || symptom_names.len() != f_p || class_names.len() != model.dims.classes {
        return Err(Error::Contract(format!(
            "explain expects {f_p} symptoms and {} classes",
            model.dims.classes
        )));
    }

    let mut activation = vec![0.0; f_h];
    let mut sources: Vec<Vec<(String, f64)>> = vec![Vec::new(); f_h];
    for s in 0..f_h {
        let mut u = 0.0;
        for j in (0..f_p).filter(|&j| symptoms[j]) {
            let w = w_symp.get(s, j);
            u += w;
            if w != 0.0 {
                sources[s].push((symptom_names[j].clone(), w));
            }
        }
        activation[s] = elu(u);
    }

    let classes: Vec<ClassExplanation> = (0..model.dims.classes)
        .map(|c| {
            let mut contributions: Vec<SymptomContribution> = (0..f_h)
                .filter(|&s| w_lit.get(c, s) != 0.0)
                .map(|s| SymptomContribution {
                    symptom: symptom_names[s].clone(),
                    activation: activation[s],
                    contribution: w_lit.get(c, s) * activation[s],
                    mapped_from: sources[s].clone(),
                })
                .collect();
            // The score is summed in index order so it matches the forward pass.
            let score = (0..f_h).map(|s| w_lit.get(c, s) * activation[s]).sum();
            // Stable sort keeps vocabulary order among ties.
            contributions.sort_by(|a, b| b.contribution.total_cmp(&a.contribution));
            if let Some(k) = top_k {
                contributions.truncate(k);
            }
            ClassExplanation {
                class_index: c,
                class: class_names[c].clone(),
                score,
                contributions,
            }
        })
        .collect();
    Ok(Explanation { classes })
}

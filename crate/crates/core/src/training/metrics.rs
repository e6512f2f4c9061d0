use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScore>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Micro and macro F1 for single-label multi-class predictions. Undefined
/// ratios count as 0; macro averages over all `classes`, absent ones included.
pub fn f1_scores(predictions: &[usize], labels: &[usize], classes: usize) -> Result<F1Scores> {
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = predictions.iter().chain(labels).find(|&&c| c >= classes) {
        return Err(Error::LabelOutOfRange { label: bad, classes });
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let per_class: Vec<ClassScore> = (0..classes)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            ClassScore {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: tp[c] + fn_[c],
            }
        })
        .collect();
    let (tp_all, fp_all, fn_all) = (tp.iter().sum(), fp.iter().sum::<usize>(), fn_.iter().sum::<usize>());
    let micro = harmonic(ratio(tp_all, tp_all + fp_all), ratio(tp_all, tp_all + fn_all));
    let macro_f1 = if classes == 0 {
        0.0
    } else {
        per_class.iter().map(|s| s.f1).sum::<f64>() / classes as f64
    };
    Ok(F1Scores {
        micro,
        macro_f1,
        per_class,
    })
}

/// Mean and sample standard deviation (n − 1); std is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

use crate::diffcore::Matrix;
use crate::error::{Error, Result};

/// Overlap counts `|p ∩ h_c|` for every class. `literature` is `[C × F_H]`;
/// `symptoms` may be longer than `F_H` (case-only symptoms never match).
pub fn naive_scores(symptoms: &[bool], literature: &Matrix) -> Result<Vec<usize>> {
    if symptoms.len() < literature.cols() {
        return Err(Error::Shape {
            op: "naive_match",
            left: literature.shape(),
            right: (symptoms.len(), 1),
        });
    }
    Ok((0..literature.rows())
        .map(|c| {
            literature
                .row(c)
                .iter()
                .zip(symptoms)
                .filter(|(h, p)| **p && **h != 0.0)
                .count()
        })
        .collect())
}

/// Class with the largest overlap; ties go to the lowest index.
pub fn naive_match(symptoms: &[bool], literature: &Matrix) -> Result<usize> {
    let scores = naive_scores(symptoms, literature)?;
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    Ok(best)
}

//! Slow, obviously-correct reference implementations. Tests compare the fast
//! paths against these.

use crate::data::{MetaField, MetaRecord, PatientCase};
use crate::error::{Error, Result};

fn field_equal(a: &MetaRecord, b: &MetaRecord, field: MetaField) -> bool {
    match field {
        MetaField::AgeGroup => a.age_group == b.age_group,
        MetaField::Gender => a.gender == b.gender,
        MetaField::Aetiology => a.aetiology == b.aetiology,
        MetaField::PointOfEntry => a.point_of_entry == b.point_of_entry,
        MetaField::Weekday => a.weekday == b.weekday,
        MetaField::Year => a.year == b.year,
    }
}

/// Neighbour lists by checking every ordered pair: `i ~ j` iff all selected
/// fields are equal. Self-loops follow from reflexivity.
pub fn pairwise_neighbors(cases: &[&PatientCase], fields: &[MetaField]) -> Vec<Vec<usize>> {
    (0..cases.len())
        .map(|i| {
            (0..cases.len())
                .filter(|&j| fields.iter().all(|&f| field_equal(&cases[i].meta, &cases[j].meta, f)))
                .collect()
        })
        .collect()
}

/// `(micro, macro, per-class F1)` from an explicit confusion matrix.
pub fn confusion_f1(predictions: &[usize], labels: &[usize], classes: usize) -> Result<(f64, f64, Vec<f64>)> {
    if predictions.len() != labels.len() {
        return Err(Error::Contract("length mismatch".into()));
    }
    // confusion[true][predicted]
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::LabelOutOfRange { label: p.max(l), classes });
        }
        confusion[l][p] += 1;
    }
    let safe = |n: f64, d: f64| if d == 0.0 { 0.0 } else { n / d };
    let mut per_class = Vec::with_capacity(classes);
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let fp = (0..classes).filter(|&r| r != c).map(|r| confusion[r][c] as f64).sum::<f64>();
        let fneg = (0..classes).filter(|&p| p != c).map(|p| confusion[c][p] as f64).sum::<f64>();
        let precision = safe(tp, tp + fp);
        let recall = safe(tp, tp + fneg);
        per_class.push(safe(2.0 * precision * recall, precision + recall));
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
    }
    let p = safe(tp_all, tp_all + fp_all);
    let r = safe(tp_all, tp_all + fn_all);
    let micro = safe(2.0 * p * r, p + r);
    let macro_f1 = if classes == 0 {
        0.0
    } else {
        per_class.iter().sum::<f64>() / classes as f64
    };
    Ok((micro, macro_f1, per_class))
}

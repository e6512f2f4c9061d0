//! Central finite-difference gradient checker.

use serde::Serialize;

use super::param::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub skipped_frozen: usize,
    pub max_relative_error: f64,
    /// Flat index, analytic and numeric value of the worst entry.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub params: Vec<ParamCheck>,
    /// Every checked entry as `(param index, flat index, analytic, numeric)`.
    #[serde(skip)]
    pub entries: Vec<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_relative_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the gradients currently stored in `store` against
/// `(f(θ+ε) − f(θ−ε)) / 2ε` for every non-frozen scalar.
///
/// `loss` must be a deterministic function of the parameter values. Every
/// perturbed entry is restored bit-exactly before the next one.
pub fn gradient_check<F>(store: &mut ParamStore, epsilon: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut params = Vec::with_capacity(store.len());
    let mut entries = Vec::new();
    for p in 0..store.len() {
        let id = super::param::ParamId(p);
        let (name, len, analytic) = {
            let param = store.get(id);
            (
                param.name.clone(),
                param.value.as_slice().len(),
                param.grad.as_slice().to_vec(),
            )
        };
        let mut check = ParamCheck {
            name,
            checked: 0,
            skipped_frozen: 0,
            max_relative_error: 0.0,
            worst: None,
        };
        for i in 0..len {
            if store.get(id).freeze_mask()[i] {
                check.skipped_frozen += 1;
                continue;
            }
            let original = store.get(id).value.as_slice()[i];
            store.get_mut(id).value.as_mut_slice()[i] = original + epsilon;
            let plus = loss(store)?;
            store.get_mut(id).value.as_mut_slice()[i] = original - epsilon;
            let minus = loss(store)?;
            store.get_mut(id).value.as_mut_slice()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing {}[{i}]",
                    check.name
                )));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic[i], numeric);
            entries.push((p, i, analytic[i], numeric));
            if check.worst.is_none() || err > check.max_relative_error {
                check.max_relative_error = err;
                check.worst = Some((i, analytic[i], numeric));
            }
            check.checked += 1;
        }
        params.push(check);
    }
    Ok(GradCheckReport {
        epsilon,
        params,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Matrix, Parameter};

    #[test]
    fn linear_loss_is_exact() {
        let mut store = ParamStore::new();
        let coeffs = [0.3, -1.2, 2.5, 0.8];
        let w = store.add(Parameter::new("w", Matrix::from_vec(1, 4, vec![1.0, 2.0, -3.0, 0.5]).unwrap()));
        store.get_mut(w).grad = Matrix::from_vec(1, 4, coeffs.to_vec()).unwrap();
        let report = gradient_check(&mut store, 1e-5, |s| {
            Ok(s.value(w).as_slice().iter().zip(&coeffs).map(|(a, b)| a * b).sum())
        })
        .unwrap();
        assert!(report.max_relative_error() < 1e-9, "{report:?}");
        assert_eq!(report.params[0].checked, 4);
    }

    #[test]
    fn frozen_entries_are_skipped() {
        let mut store = ParamStore::new();
        let w = store.add(
            Parameter::new("w", Matrix::filled(1, 3, 1.0))
                .with_freeze_mask(vec![false, true, true])
                .unwrap(),
        );
        // Wrong analytic gradient on frozen entries must not matter.
        store.get_mut(w).grad = Matrix::from_vec(1, 3, vec![2.0, 99.0, 99.0]).unwrap();
        let report = gradient_check(&mut store, 1e-5, |s| {
            Ok(s.value(w).as_slice().iter().map(|v| v * 2.0).sum())
        })
        .unwrap();
        assert_eq!(report.params[0].skipped_frozen, 2);
        assert_eq!(report.params[0].checked, 1);
        assert!(report.max_relative_error() < 1e-9);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut store = ParamStore::new();
        store.add(Parameter::new("w", Matrix::filled(1, 1, 1.0)));
        assert!(gradient_check(&mut store, 1e-5, |_| Ok(f64::NAN)).is_err());
    }

    #[test]
    fn values_are_restored_exactly() {
        let mut store = ParamStore::new();
        let w = store.add(Parameter::new("w", Matrix::from_vec(1, 2, vec![0.1, 0.7]).unwrap()));
        let before = store.value(w).clone();
        gradient_check(&mut store, 1e-5, |s| Ok(s.value(w).get(0, 0).sin())).unwrap();
        assert_eq!(store.value(w), &before);
    }
}

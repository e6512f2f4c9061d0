use crate::diffcore::ops::masked_cross_entropy;
use crate::diffcore::{gradient_check, relative_error, GradCheckReport, ParamId, ParamStore};
use crate::error::Result;

use super::{Mode, ModelInput, ToxNet};

/// Mean cross-entropy over `rows` and its parameter gradients, left in the
/// model's gradient buffers (which are cleared first).
pub fn loss_and_gradients(model: &mut ToxNet, input: ModelInput, rows: &[usize], labels: &[usize]) -> Result<f64> {
    model.params.zero_grads();
    let fwd = model.forward(input, Mode::Eval)?;
    let (loss, grad) = masked_cross_entropy(&fwd.probs, rows, labels)?;
    model.backward(&fwd, input, &grad)?;
    Ok(loss)
}

/// Finite-difference check of every trainable scalar of `model`.
pub fn check_model_gradients(
    model: &mut ToxNet,
    input: ModelInput,
    rows: &[usize],
    labels: &[usize],
    epsilon: f64,
) -> Result<GradCheckReport> {
    loss_and_gradients(model, input, rows, labels)?;
    let mut store = model.params.clone();
    let report = gradient_check(&mut store, epsilon, |p| {
        let fwd = model.forward_with(p, input, Mode::Eval)?;
        Ok(masked_cross_entropy(&fwd.probs, rows, labels)?.0)
    })?;
    model.params.zero_grads();
    Ok(report)
}

/// Why an entry exceeded the tolerance at the nominal step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Excess {
    /// `|analytic − numeric|` is within a few ulps of the loss divided by
    /// `2ε`, the resolution of the difference quotient. Typical for
    /// gradients that vanish by symmetry.
    Roundoff,
    /// A smaller step agrees within tolerance (an activation kink lay within
    /// `ε` of the evaluation point).
    Kink,
    /// Unexplained mismatch.
    Mismatch,
}

/// Classifies every entry whose relative error exceeds `tol`, re-evaluating
/// central differences with steps `ε/10` and `ε/100`.
pub fn classify_excess(
    model: &ToxNet,
    input: ModelInput,
    rows: &[usize],
    labels: &[usize],
    report: &GradCheckReport,
    tol: f64,
) -> Result<Vec<(String, usize, Excess)>> {
    let loss = |p: &ParamStore| -> Result<f64> {
        let fwd = model.forward_with(p, input, Mode::Eval)?;
        Ok(masked_cross_entropy(&fwd.probs, rows, labels)?.0)
    };
    let base = loss(&model.params)?;
    let noise = 8.0 * f64::EPSILON * base.abs().max(1.0) / (2.0 * report.epsilon);
    let mut out = Vec::new();
    for &(p, i, analytic, numeric) in &report.entries {
        if relative_error(analytic, numeric) <= tol {
            continue;
        }
        let name = model.params.get(ParamId(p)).name.clone();
        let kind = if (analytic - numeric).abs() <= noise {
            Excess::Roundoff
        } else {
            let mut store = model.params.clone();
            let mut refined = false;
            for eps in [report.epsilon / 10.0, report.epsilon / 100.0] {
                let id = ParamId(p);
                let orig = store.get(id).value.as_slice()[i];
                store.get_mut(id).value.as_mut_slice()[i] = orig + eps;
                let plus = loss(&store)?;
                store.get_mut(id).value.as_mut_slice()[i] = orig - eps;
                let minus = loss(&store)?;
                store.get_mut(id).value.as_mut_slice()[i] = orig;
                if relative_error(analytic, (plus - minus) / (2.0 * eps)) <= tol {
                    refined = true;
                    break;
                }
            }
            if refined {
                Excess::Kink
            } else {
                Excess::Mismatch
            }
        };
        out.push((name, i, kind));
    }
    Ok(out)
}

//! Forward operations and their hand-derived backward passes.

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Negative slope used for attention scoring.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Floor applied to probabilities before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Applies `W` (F′×F) to every row of `X` (N×F), giving N×F′.
pub fn linear_transform(weight: &Matrix, input: &Matrix) -> Result<Matrix> {
    if weight.cols() != input.cols() {
        return Err(Error::Shape {
            op: "linear_transform",
            left: weight.shape(),
            right: input.shape(),
        });
    }
    input.matmul_nt(weight)
}

/// Gradients of [`linear_transform`]: returns `(dL/dW, dL/dX)`.
pub fn linear_transform_backward(
    weight: &Matrix,
    input: &Matrix,
    grad_out: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let grad_w = grad_out.matmul_tn(input)?;
    let grad_x = grad_out.matmul(weight)?;
    Ok((grad_w, grad_x))
}

/// Weight gradient only, for layers whose input needs no gradient.
pub fn linear_transform_weight_grad(input: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    grad_out.matmul_tn(input)
}

/// Adds a 1×F′ bias row to every row.
pub fn add_bias(out: &mut Matrix, bias: &Matrix) -> Result<()> {
    if bias.rows() != 1 || bias.cols() != out.cols() {
        return Err(Error::Shape {
            op: "add_bias",
            left: out.shape(),
            right: bias.shape(),
        });
    }
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(bias.as_slice()) {
            *o += b;
        }
    }
    Ok(())
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU; the positive branch is used at exactly zero.
#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn elu_matrix(x: &Matrix) -> Matrix {
    x.map(elu)
}

/// `dL/dx` for `y = elu(x)` given the pre-activation `x`.
pub fn elu_backward(pre: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    pre.check_same_shape("elu_backward", grad_out)?;
    let data = pre
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&x, &g)| g * elu_grad(x))
        .collect();
    Matrix::from_vec(pre.rows(), pre.cols(), data)
}

/// Exp-normalizes a slice in place with max subtraction.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// Softmax within each group of an arbitrary index partition.
pub fn grouped_softmax(scores: &[f64], groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    let mut seen = vec![false; scores.len()];
    for group in groups {
        if group.is_empty() {
            return Err(Error::Contract("softmax group is empty".into()));
        }
        for &i in group {
            if i >= scores.len() || seen[i] {
                return Err(Error::Contract(format!(
                    "index {i} is out of range or belongs to more than one group"
                )));
            }
            seen[i] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Contract(format!("index {missing} belongs to no group")));
    }
    let mut out = vec![0.0; scores.len()];
    let mut buf = Vec::new();
    for group in groups {
        buf.clear();
        buf.extend(group.iter().map(|&i| scores[i]));
        softmax_in_place(&mut buf);
        for (&i, &p) in group.iter().zip(&buf) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// Softmax over contiguous segments `offsets[g]..offsets[g+1]` (CSR layout).
pub fn segment_softmax(scores: &[f64], offsets: &[usize]) -> Result<Vec<f64>> {
    let mut out = scores.to_vec();
    for w in offsets.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Contract("softmax segment is empty".into()));
        }
        softmax_in_place(&mut out[w[0]..w[1]]);
    }
    Ok(out)
}

/// Backward of [`segment_softmax`]: `ds_j = α_j (dα_j − Σ_r α_r dα_r)`.
pub fn segment_softmax_backward(alpha: &[f64], grad_alpha: &[f64], offsets: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; alpha.len()];
    for w in offsets.windows(2) {
        let range = w[0]..w[1];
        let dot: f64 = alpha[range.clone()]
            .iter()
            .zip(&grad_alpha[range.clone()])
            .map(|(a, g)| a * g)
            .sum();
        for e in range {
            out[e] = alpha[e] * (grad_alpha[e] - dot);
        }
    }
    out
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

fn check_probabilities(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: probs.shape(),
            right: (labels.len(), 1),
        });
    }
    for (r, &label) in labels.iter().enumerate() {
        if label >= probs.cols() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: probs.cols(),
            });
        }
        let sum: f64 = probs.row(r).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "probability row {r} sums to {sum}"
            )));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of the labelled classes.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_probabilities(probs, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -probs.get(r, l).max(LOG_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Cross-entropy over a subset of rows plus the fused softmax gradient
/// w.r.t. the logits (`(p − onehot) / |rows|` on those rows, zero elsewhere).
pub fn masked_cross_entropy(
    probs: &Matrix,
    rows: &[usize],
    labels: &[usize],
) -> Result<(f64, Matrix)> {
    let selected = probs.select_rows(rows);
    let loss = cross_entropy(&selected, labels)?;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    if rows.is_empty() {
        return Ok((loss, grad));
    }
    let inv = 1.0 / rows.len() as f64;
    for (&r, &label) in rows.iter().zip(labels) {
        let g = grad.row_mut(r);
        for (c, v) in g.iter_mut().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            *v = (probs.get(r, c) - onehot) * inv;
        }
    }
    Ok((loss, grad))
}

/// Inverted dropout. Returns the output and the keep-scale mask (0 or 1/(1−rate)).
/// With `rate == 0` or outside training this is the identity and no mask is drawn.
pub fn dropout<R: Rng>(
    input: &Matrix,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Matrix, Option<Matrix>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Contract(format!("dropout rate {rate} not in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Matrix::from_fn(input.rows(), input.cols(), |_, _| {
        if rng.gen::<f64>() < rate {
            0.0
        } else {
            keep
        }
    });
    let out = Matrix::from_vec(
        input.rows(),
        input.cols(),
        input
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .map(|(x, m)| x * m)
            .collect(),
    )?;
    Ok((out, Some(mask)))
}

pub fn dropout_backward(grad_out: &Matrix, mask: Option<&Matrix>) -> Matrix {
    match mask {
        None => grad_out.clone(),
        Some(mask) => Matrix::from_fn(grad_out.rows(), grad_out.cols(), |r, c| {
            grad_out.get(r, c) * mask.get(r, c)
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_identity_and_permutation() {
        let x = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let id = Matrix::identity(2);
        assert_eq!(linear_transform(&id, &x).unwrap(), x);
        let perm = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(
            linear_transform(&perm, &x).unwrap().as_slice(),
            &[4.0, 3.0]
        );
    }

    #[test]
    fn linear_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Matrix::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        let x = Matrix::from_fn(2, 4, |_, _| rng.gen_range(-1.0..1.0));
        let y = linear_transform(&w, &x).unwrap();
        for n in 0..2 {
            for o in 0..3 {
                let mut acc = 0.0;
                for i in 0..4 {
                    acc += w.get(o, i) * x.get(n, i);
                }
                assert!((y.get(n, o) - acc).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_rejects_mismatch() {
        let err = linear_transform(&Matrix::zeros(3, 4), &Matrix::zeros(2, 5)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(3, 4)") && msg.contains("(2, 5)"), "{msg}");
    }

    #[test]
    fn scalar_activations() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(2.0), 2.0);
        assert!((elu(-1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-12);
        assert_eq!(leaky_relu(-1.0, LEAKY_SLOPE), -0.2);
        assert_eq!(leaky_relu(1.5, LEAKY_SLOPE), 1.5);
        assert_eq!(elu_grad(0.0), 1.0);
        assert_eq!(leaky_relu_grad(0.0, LEAKY_SLOPE), 1.0);
    }

    #[test]
    fn grouped_softmax_examples() {
        assert_eq!(grouped_softmax(&[17.3], &[vec![0]]).unwrap(), vec![1.0]);
        assert_eq!(
            grouped_softmax(&[0.0, 0.0], &[vec![0, 1]]).unwrap(),
            vec![0.5, 0.5]
        );
        let p = grouped_softmax(&[1f64.ln(), 3f64.ln()], &[vec![0, 1]]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn grouped_softmax_rejects_bad_partitions() {
        assert!(grouped_softmax(&[1.0], &[vec![0], vec![]]).is_err());
        assert!(grouped_softmax(&[1.0, 2.0], &[vec![0]]).is_err());
        assert!(grouped_softmax(&[1.0, 2.0], &[vec![0, 1], vec![1]]).is_err());
        assert!(segment_softmax(&[1.0], &[0, 0, 1]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let onehot = Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(cross_entropy(&onehot, &[1]).unwrap(), 0.0);
        let uniform = Matrix::filled(1, 10, 0.1);
        assert!((cross_entropy(&uniform, &[7]).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mixed = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let expected = (-(0.8f64).ln() - (0.6f64).ln()) / 2.0;
        assert!((cross_entropy(&mixed, &[1, 0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_errors() {
        let p = Matrix::filled(1, 3, 1.0 / 3.0);
        assert!(matches!(
            cross_entropy(&p, &[3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
        let bad = Matrix::filled(1, 3, 0.5);
        assert!(cross_entropy(&bad, &[0]).is_err());
    }

    #[test]
    fn zero_probability_is_clamped() {
        let p = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let loss = cross_entropy(&p, &[1]).unwrap();
        assert!((loss - (-LOG_FLOOR.ln())).abs() < 1e-12);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Matrix::from_fn(3, 3, |i, j| (i * j) as f64);
        let (y, mask) = dropout(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, _) = dropout(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_scales_kept_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::filled(20, 20, 1.0);
        let (y, mask) = dropout(&x, 0.25, true, &mut rng).unwrap();
        let mask = mask.unwrap();
        for (v, m) in y.as_slice().iter().zip(mask.as_slice()) {
            assert!(*v == 0.0 || (*v - 4.0 / 3.0).abs() < 1e-15);
            assert_eq!(v, m);
        }
        let g = dropout_backward(&Matrix::filled(20, 20, 1.0), Some(&mask));
        assert_eq!(g, mask);
    }
}

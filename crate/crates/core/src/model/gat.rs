//! Multi-head graph attention layer.
//!
//! Per head `k`: `z = X·Wᵏᵀ`, edge score `e_ij = leaky(aᵏᵀ[z_i ‖ z_j])`,
//! `α_ij = softmax_{j ∈ N_i}(e_ij)`, `h_i = Σ_j α_ij z_j`. Heads are either
//! concatenated or averaged, then passed through ELU.
//!
//! The head projections run as one stacked GEMM; narrow per-head products
//! leave most of the matrix kernel idle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::ops::{
    elu_backward, elu_matrix, leaky_relu, leaky_relu_grad, linear_transform, linear_transform_backward,
    linear_transform_weight_grad, segment_softmax, segment_softmax_backward,
};
use crate::diffcore::{Matrix, ParamId, ParamStore, Parameter};
use crate::error::{Error, Result};
use crate::graph::Adjacency;

use super::init::glorot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Concat,
    Mean,
}

#[derive(Debug, Clone, Copy)]
pub struct GatHead {
    pub weight: ParamId,
    pub attention: ParamId,
}

#[derive(Debug, Clone)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub in_width: usize,
    pub head_width: usize,
    pub aggregation: Aggregation,
    pub slope: f64,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GatLayerCache {
    pub input: Matrix,
    pub transformed: Vec<Matrix>,
    pub raw_scores: Vec<Vec<f64>>,
    /// Attention coefficients per head, in adjacency entry order.
    pub alpha: Vec<Vec<f64>>,
    pub pre_activation: Matrix,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_width: usize,
        head_width: usize,
        heads: usize,
        aggregation: Aggregation,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let heads = (0..heads)
            .map(|k| {
                let weight = store.add(Parameter::new(
                    format!("{name}.head{k}.weight"),
                    glorot(head_width, in_width, rng),
                ));
                let attention = store.add(Parameter::new(
                    format!("{name}.head{k}.attention"),
                    glorot(2 * head_width, 1, rng),
                ));
                GatHead { weight, attention }
            })
            .collect();
        Self {
            heads,
            in_width,
            head_width,
            aggregation,
            slope,
        }
    }

    pub fn out_width(&self) -> usize {
        match self.aggregation {
            Aggregation::Concat => self.head_width * self.heads.len(),
            Aggregation::Mean => self.head_width,
        }
    }

    fn check_input(&self, input: &Matrix, adj: &Adjacency) -> Result<()> {
        if input.cols() != self.in_width {
            return Err(Error::Shape {
                op: "gat_layer",
                left: (input.rows(), self.in_width),
                right: input.shape(),
            });
        }
        if adj.node_count() != input.rows() {
            return Err(Error::Shape {
                op: "gat_layer adjacency",
                left: input.shape(),
                right: (adj.node_count(), adj.node_count()),
            });
        }
        Ok(())
    }

    /// All head weights stacked row-wise: `[K·F × in]`.
    fn stacked_weights(&self, store: &ParamStore) -> Matrix {
        let mut data = Vec::with_capacity(self.heads.len() * self.head_width * self.in_width);
        for h in &self.heads {
            data.extend_from_slice(store.value(h.weight).as_slice());
        }
        Matrix::from_vec(self.heads.len() * self.head_width, self.in_width, data)
            .expect("head weights share one shape")
    }

    /// Per-head projections `z^k = X·Wᵏᵀ`.
    fn project(&self, store: &ParamStore, input: &Matrix) -> Result<Vec<Matrix>> {
        let f = self.head_width;
        let z_all = linear_transform(&self.stacked_weights(store), input)?;
        Ok((0..self.heads.len()).map(|k| z_all.columns(k * f, (k + 1) * f)).collect())
    }

    /// Raw (pre-LeakyReLU) edge scores and attention coefficients of one head.
    fn head_attention(&self, z: &Matrix, a: &Matrix, adj: &Adjacency) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.head_width;
        let (a_src, a_dst) = a.as_slice().split_at(f);
        let n = z.rows();
        let src: Vec<f64> = (0..n).map(|i| dot(z.row(i), a_src)).collect();
        let dst: Vec<f64> = (0..n).map(|j| dot(z.row(j), a_dst)).collect();
        let mut raw = Vec::with_capacity(adj.entry_count());
        for i in 0..n {
            for &j in adj.neighbors(i) {
                raw.push(src[i] + dst[j]);
            }
        }
        let scores: Vec<f64> = raw.iter().map(|&r| leaky_relu(r, self.slope)).collect();
        let alpha = segment_softmax(&scores, adj.offsets())?;
        Ok((raw, alpha))
    }

    /// Attention coefficients `α^k_ij` per head, in adjacency entry order.
    pub fn attention_coefficients(
        &self,
        store: &ParamStore,
        input: &Matrix,
        adj: &Adjacency,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_input(input, adj)?;
        let z = self.project(store, input)?;
        self.heads
            .iter()
            .zip(&z)
            .map(|(h, z)| Ok(self.head_attention(z, store.value(h.attention), adj)?.1))
            .collect()
    }

    pub fn forward(&self, store: &ParamStore, input: Matrix, adj: &Adjacency) -> Result<(Matrix, GatLayerCache)> {
        self.check_input(&input, adj)?;
        let n = input.rows();
        let f = self.head_width;
        let k_count = self.heads.len();
        let mut pre = Matrix::zeros(n, self.out_width());
        let transformed = self.project(store, &input)?;
        let mut raw_scores = Vec::with_capacity(k_count);
        let mut alphas = Vec::with_capacity(k_count);
        let head_scale = match self.aggregation {
            Aggregation::Concat => 1.0,
            Aggregation::Mean => 1.0 / k_count as f64,
        };
        for (k, (head, z)) in self.heads.iter().zip(&transformed).enumerate() {
            let (raw, alpha) = self.head_attention(z, store.value(head.attention), adj)?;
            let col = match self.aggregation {
                Aggregation::Concat => k * f,
                Aggregation::Mean => 0,
            };
            let offsets = adj.offsets();
            let nbrs = adj.neighbor_slice();
            for i in 0..n {
                let out = &mut pre.row_mut(i)[col..col + f];
                for e in offsets[i]..offsets[i + 1] {
                    axpy(alpha[e] * head_scale, z.row(nbrs[e]), out);
                }
            }
            raw_scores.push(raw);
            alphas.push(alpha);
        }
        let out = elu_matrix(&pre);
        Ok((
            out,
            GatLayerCache {
                input,
                transformed,
                raw_scores,
                alpha: alphas,
                pre_activation: pre,
            },
        ))
    }

    /// Accumulates parameter gradients; returns `dL/dX` when requested.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &GatLayerCache,
        adj: &Adjacency,
        grad_out: &Matrix,
        need_input_grad: bool,
    ) -> Result<Option<Matrix>> {
        let n = cache.input.rows();
        let f = self.head_width;
        let k_count = self.heads.len();
        let grad_pre = elu_backward(&cache.pre_activation, grad_out)?;
        let offsets = adj.offsets();
        let nbrs = adj.neighbor_slice();
        let mut grad_z_all = Matrix::zeros(n, k_count * f);

        for (k, head) in self.heads.iter().enumerate() {
            let z = &cache.transformed[k];
            let alpha = &cache.alpha[k];
            let raw = &cache.raw_scores[k];
            let (col, scale) = match self.aggregation {
                Aggregation::Concat => (k * f, 1.0),
                Aggregation::Mean => (0, 1.0 / k_count as f64),
            };
            let grad_h = |i: usize| &grad_pre.row(i)[col..col + f];

            let mut grad_z = Matrix::zeros(n, f);
            let mut grad_alpha = vec![0.0; alpha.len()];
            for i in 0..n {
                let gh = grad_h(i);
                for e in offsets[i]..offsets[i + 1] {
                    let j = nbrs[e];
                    grad_alpha[e] = scale * dot(gh, z.row(j));
                    axpy(scale * alpha[e], gh, grad_z.row_mut(j));
                }
            }
            let grad_scores = segment_softmax_backward(alpha, &grad_alpha, offsets);
            let mut grad_src = vec![0.0; n];
            let mut grad_dst = vec![0.0; n];
            for i in 0..n {
                for e in offsets[i]..offsets[i + 1] {
                    let g = grad_scores[e] * leaky_relu_grad(raw[e], self.slope);
                    grad_src[i] += g;
                    grad_dst[nbrs[e]] += g;
                }
            }
            let a = store.value(head.attention).as_slice().to_vec();
            let (a_src, a_dst) = a.split_at(f);
            let mut grad_a = Matrix::zeros(2 * f, 1);
            {
                let ga = grad_a.as_mut_slice();
                for i in 0..n {
                    let zi = z.row(i);
                    axpy(grad_src[i], zi, &mut ga[..f]);
                    axpy(grad_dst[i], zi, &mut ga[f..]);
                }
            }
            for i in 0..n {
                let row = grad_z.row_mut(i);
                axpy(grad_src[i], a_src, row);
                axpy(grad_dst[i], a_dst, row);
            }
            store.accumulate(head.attention, &grad_a)?;
            for i in 0..n {
                grad_z_all.row_mut(i)[k * f..(k + 1) * f].copy_from_slice(grad_z.row(i));
            }
        }

        let (grad_w_all, grad_input) = if need_input_grad {
            let (gw, gx) = linear_transform_backward(&self.stacked_weights(store), &cache.input, &grad_z_all)?;
            (gw, Some(gx))
        } else {
            (linear_transform_weight_grad(&cache.input, &grad_z_all)?, None)
        };
        let block = f * self.in_width;
        for (k, head) in self.heads.iter().enumerate() {
            let rows = grad_w_all.as_slice()[k * block..(k + 1) * block].to_vec();
            store.accumulate(head.weight, &Matrix::from_vec(f, self.in_width, rows)?)?;
        }
        Ok(grad_input)
    }
}

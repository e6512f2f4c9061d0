//! ToxNet and its ablations, with hand-written backward passes.

mod check;
mod explain;
pub mod fixtures;
mod gat;
mod init;
mod naive;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::ops::{
    add_bias, dropout, dropout_backward, elu_backward, elu_matrix, linear_transform,
    linear_transform_backward, linear_transform_weight_grad, softmax_rows, LEAKY_SLOPE,
};
use crate::diffcore::{Matrix, ParamId, ParamStore, Parameter};
use crate::error::{Error, Result};
use crate::graph::Adjacency;

pub use check::{check_model_gradients, classify_excess, loss_and_gradients, Excess};
pub use explain::{explain, ClassExplanation, Explanation, SymptomContribution};
pub use gat::{Aggregation, GatHead, GatLayer, GatLayerCache};
pub use init::glorot;
pub use naive::{naive_match, naive_scores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Toxnet,
    ToxnetSequential,
    GatOnly,
    LitmatchOnly,
    Mlp,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::LitmatchOnly,
        Variant::Mlp,
        Variant::GatOnly,
        Variant::ToxnetSequential,
        Variant::Toxnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Toxnet => "toxnet",
            Variant::ToxnetSequential => "toxnet_sequential",
            Variant::GatOnly => "gat_only",
            Variant::LitmatchOnly => "litmatch_only",
            Variant::Mlp => "mlp",
        }
    }

    pub fn uses_graph(self) -> bool {
        matches!(self, Variant::Toxnet | Variant::ToxnetSequential | Variant::GatOnly)
    }

    pub fn uses_literature(self) -> bool {
        matches!(self, Variant::Toxnet | Variant::ToxnetSequential | Variant::LitmatchOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Per-head output width of each attention layer; MLP widths are `heads ×` these.
    pub widths: Vec<usize>,
    pub heads: usize,
    /// Heads of the final attention layer, averaged. 1 gives a single head.
    pub final_heads: usize,
    pub dropout: f64,
    pub attention_slope: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Toxnet,
            widths: vec![128, 64, 64],
            heads: 5,
            final_heads: 5,
            dropout: 0.0,
            attention_slope: LEAKY_SLOPE,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Contract("widths must be non-empty and positive".into()));
        }
        if self.heads == 0 || self.final_heads == 0 {
            return Err(Error::Contract("head counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Contract(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !self.attention_slope.is_finite() || self.attention_slope < 0.0 {
            return Err(Error::Contract("attention_slope must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Number of message-passing hops the model looks at.
    pub fn receptive_depth(&self) -> usize {
        if self.variant.uses_graph() {
            self.widths.len()
        } else {
            0
        }
    }
}

/// Input widths of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// `F_P`, the full symptom vocabulary.
    pub symptoms: usize,
    /// `F_H`, the literature symptoms (a prefix of the vocabulary).
    pub literature: usize,
    /// Width of the encoded meta block.
    pub meta: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn feature_width(&self) -> usize {
        self.symptoms + self.meta
    }

    fn validate(&self) -> Result<()> {
        if self.literature == 0 || self.literature > self.symptoms || self.classes == 0 {
            return Err(Error::Contract(format!("invalid model dims {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, name: &str, out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = store.add(Parameter::new(format!("{name}.weight"), glorot(out, inp, rng)));
        let bias = store.add(Parameter::new(format!("{name}.bias"), Matrix::zeros(1, out)));
        Self { weight, bias }
    }

    fn forward(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        let mut y = linear_transform(store.value(self.weight), x)?;
        add_bias(&mut y, store.value(self.bias))?;
        Ok(y)
    }

    fn backward(&self, store: &mut ParamStore, x: &Matrix, grad: &Matrix, need_input: bool) -> Result<Option<Matrix>> {
        store.accumulate(self.bias, &grad.column_sums())?;
        if need_input {
            let (gw, gx) = linear_transform_backward(store.value(self.weight), x, grad)?;
            store.accumulate(self.weight, &gw)?;
            Ok(Some(gx))
        } else {
            store.accumulate(self.weight, &linear_transform_weight_grad(x, grad)?)?;
            Ok(None)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Literature {
    symptom_map: ParamId,
    /// Absent in the sequential variant.
    literature: Option<ParamId>,
}

#[derive(Debug, Clone)]
struct Layout {
    gat: Vec<GatLayer>,
    mlp: Vec<Dense>,
    head: Option<Dense>,
    literature: Option<Literature>,
    fusion: Option<Dense>,
}

/// Parameter names shared with checkpoints.
pub const W_SYMP: &str = "literature.w_symp";
pub const W_LIT: &str = "literature.w_lit";

/// Input to a forward pass. Graph variants need an adjacency over the rows
/// of `features`.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub features: &'a Matrix,
    pub adjacency: Option<&'a Adjacency>,
}

#[derive(Debug)]
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

#[derive(Debug, Clone, Default)]
struct Cache {
    /// `[y_gat ‖ y_lit]` before the fusion ELU.
    fusion_pre: Option<Matrix>,
    fusion_act: Option<Matrix>,
    head_input: Option<Matrix>,
    gat: Vec<GatLayerCache>,
    masks: Vec<Option<Matrix>>,
    mlp_inputs: Vec<Matrix>,
    mlp_pre: Vec<Matrix>,
    lit_pre: Option<Matrix>,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Matrix,
    pub probs: Matrix,
    pub y_gat: Option<Matrix>,
    pub y_lit: Option<Matrix>,
    cache: Cache,
}

impl Forward {
    /// Attention coefficients as `(layer, head, α in adjacency entry order)`.
    pub fn attention(&self) -> impl Iterator<Item = (usize, usize, &[f64])> + '_ {
        self.cache.gat.iter().enumerate().flat_map(|(l, c)| {
            c.alpha.iter().enumerate().map(move |(k, a)| (l, k, a.as_slice()))
        })
    }

    /// Largest `|Σ_j α_ij − 1|` over all nodes, heads and layers.
    pub fn attention_normalization_error(&self, adjacency: &Adjacency) -> f64 {
        let off = adjacency.offsets();
        let mut worst: f64 = 0.0;
        for (_, _, alpha) in self.attention() {
            for i in 0..adjacency.node_count() {
                let s: f64 = alpha[off[i]..off[i + 1]].iter().sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct ToxNet {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub params: ParamStore,
    layout: Layout,
}

fn frozen_identity_block(f_h: usize, f_p: usize) -> Result<Parameter> {
    let value = Matrix::from_fn(f_h, f_p, |r, c| if r == c { 1.0 } else { 0.0 });
    let mask = (0..f_h * f_p).map(|i| i / f_p == i % f_p).collect();
    Parameter::new(W_SYMP, value).with_freeze_mask(mask)
}

impl ToxNet {
    /// Builds a freshly initialised model. `literature` is `[C × F_H]`.
    pub fn new(config: ModelConfig, dims: ModelDims, literature: &Matrix) -> Result<Self> {
        config.validate()?;
        dims.validate()?;
        if literature.shape() != (dims.classes, dims.literature) {
            return Err(Error::Shape {
                op: "literature matrix",
                left: (dims.classes, dims.literature),
                right: literature.shape(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let v = config.variant;
        let c = dims.classes;

        let literature_ids = if v.uses_literature() {
            let symptom_map = store.add(frozen_identity_block(dims.literature, dims.symptoms)?);
            let lit = (v != Variant::ToxnetSequential)
                .then(|| store.add(Parameter::new(W_LIT, literature.clone()).frozen()));
            Some(Literature {
                symptom_map,
                literature: lit,
            })
        } else {
            None
        };

        let depth = config.widths.len();
        let mut gat = Vec::new();
        let mut mlp = Vec::new();
        let mut head = None;
        if v.uses_graph() {
            let mut width = match v {
                Variant::ToxnetSequential => dims.literature + dims.meta,
                _ => dims.feature_width(),
            };
            for (l, &w) in config.widths.iter().enumerate() {
                let last = l + 1 == depth;
                let (heads, agg) = if last {
                    (config.final_heads, Aggregation::Mean)
                } else {
                    (config.heads, Aggregation::Concat)
                };
                let layer = GatLayer::new(
                    &mut store,
                    &format!("gat{l}"),
                    width,
                    w,
                    heads,
                    agg,
                    config.attention_slope,
                    &mut rng,
                );
                width = layer.out_width();
                gat.push(layer);
            }
            head = Some(Dense::new(&mut store, "head", c, width, &mut rng));
        } else if v == Variant::Mlp {
            let mut width = dims.feature_width();
            for (l, &w) in config.widths.iter().enumerate() {
                let out = if l + 1 == depth { w } else { w * config.heads };
                mlp.push(Dense::new(&mut store, &format!("mlp{l}"), out, width, &mut rng));
                width = out;
            }
            head = Some(Dense::new(&mut store, "head", c, width, &mut rng));
        }
        let fusion = (v == Variant::Toxnet).then(|| Dense::new(&mut store, "fusion", c, 2 * c, &mut rng));

        Ok(Self {
            config,
            dims,
            params: store,
            layout: Layout {
                gat,
                mlp,
                head,
                literature: literature_ids,
                fusion,
            },
        })
    }

    /// Rebuilds a model from stored parameter values. Names, shapes and freeze
    /// masks must match a fresh model of the same config; frozen entries must
    /// carry their prescribed values exactly.
    pub fn from_params(config: ModelConfig, dims: ModelDims, literature: &Matrix, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, dims, literature)?;
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (fresh, stored) in model.params.iter().zip(params.iter()) {
            if fresh.name != stored.name || fresh.value.shape() != stored.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    fresh.name,
                    fresh.value.shape(),
                    stored.name,
                    stored.value.shape()
                )));
            }
            if fresh.freeze_mask() != stored.freeze_mask() {
                return Err(Error::Checkpoint(format!("freeze mask of {} differs", fresh.name)));
            }
            for (i, frozen) in fresh.freeze_mask().iter().enumerate() {
                let (a, b) = (fresh.value.as_slice()[i], stored.value.as_slice()[i]);
                if *frozen && a.to_bits() != b.to_bits() {
                    return Err(Error::Checkpoint(format!(
                        "frozen entry {i} of {} was modified ({b} != {a})",
                        fresh.name
                    )));
                }
            }
            if !stored.value.is_finite() {
                return Err(Error::Checkpoint(format!("{} has non-finite values", stored.name)));
            }
        }
        model.params.copy_values_from(&params)?;
        Ok(model)
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn gat_layers(&self) -> &[GatLayer] {
        &self.layout.gat
    }

    pub fn symptom_map(&self) -> Option<&Matrix> {
        self.layout.literature.map(|l| self.params.value(l.symptom_map))
    }

    pub fn literature_matrix(&self) -> Option<&Matrix> {
        self.layout
            .literature
            .and_then(|l| l.literature)
            .map(|id| self.params.value(id))
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        if input.features.cols() != self.dims.feature_width() {
            return Err(Error::Shape {
                op: "model input",
                left: (input.features.rows(), self.dims.feature_width()),
                right: input.features.shape(),
            });
        }
        if self.variant().uses_graph() {
            let adj = input
                .adjacency
                .ok_or_else(|| Error::Contract(format!("{} needs a graph", self.variant())))?;
            if adj.node_count() != input.features.rows() {
                return Err(Error::Shape {
                    op: "model adjacency",
                    left: input.features.shape(),
                    right: (adj.node_count(), adj.node_count()),
                });
            }
        }
        Ok(())
    }

    fn drop(&self, x: Matrix, mode: &mut Mode, cache: &mut Cache) -> Result<Matrix> {
        match mode {
            Mode::Train(rng) if self.config.dropout > 0.0 => {
                let (out, mask) = dropout(&x, self.config.dropout, true, rng)?;
                cache.masks.push(mask);
                Ok(out)
            }
            _ => {
                cache.masks.push(None);
                Ok(x)
            }
        }
    }

    pub fn forward(&self, input: ModelInput, mode: Mode) -> Result<Forward> {
        self.forward_with(&self.params, input, mode)
    }

    /// Forward pass using `params` in place of the model's own values
    /// (same layout), e.g. for finite differences.
    pub fn forward_with(&self, params: &ParamStore, input: ModelInput, mut mode: Mode) -> Result<Forward> {
        self.check_input(&input)?;
        let x = input.features;
        let f_p = self.dims.symptoms;
        let mut cache = Cache::default();

        // Literature branch: u = W_symp p, v = elu(u).
        let mut lit_act = None;
        if let Some(lit) = self.layout.literature {
            let p = x.columns(0, f_p);
            let u = linear_transform(params.value(lit.symptom_map), &p)?;
            lit_act = Some(elu_matrix(&u));
            cache.lit_pre = Some(u);
        }
        let y_lit = match (self.layout.literature.and_then(|l| l.literature), &lit_act) {
            (Some(id), Some(v)) => Some(linear_transform(params.value(id), v)?),
            _ => None,
        };

        let mut y_gat = None;
        if self.variant().uses_graph() {
            let adj = input.adjacency.expect("checked");
            let mut h = match self.variant() {
                Variant::ToxnetSequential => {
                    let meta = x.columns(f_p, x.cols());
                    Matrix::hcat(&[lit_act.as_ref().expect("literature branch"), &meta])?
                }
                _ => x.clone(),
            };
            for layer in &self.layout.gat {
                let dropped = self.drop(h, &mut mode, &mut cache)?;
                let (out, c) = layer.forward(params, dropped, adj)?;
                cache.gat.push(c);
                h = out;
            }
            y_gat = Some(self.layout.head.expect("head").forward(params, &h)?);
            cache.head_input = Some(h);
        }

        let logits = match self.variant() {
            Variant::Toxnet => {
                let pre = Matrix::hcat(&[y_gat.as_ref().expect("gat"), y_lit.as_ref().expect("lit")])?;
                let act = elu_matrix(&pre);
                let logits = self.layout.fusion.expect("fusion").forward(params, &act)?;
                cache.fusion_pre = Some(pre);
                cache.fusion_act = Some(act);
                logits
            }
            Variant::ToxnetSequential | Variant::GatOnly => y_gat.clone().expect("gat"),
            Variant::LitmatchOnly => y_lit.clone().expect("lit"),
            Variant::Mlp => {
                let mut h = x.clone();
                for layer in &self.layout.mlp {
                    let dropped = self.drop(h, &mut mode, &mut cache)?;
                    let pre = layer.forward(params, &dropped)?;
                    h = elu_matrix(&pre);
                    cache.mlp_inputs.push(dropped);
                    cache.mlp_pre.push(pre);
                }
                let logits = self.layout.head.expect("head").forward(params, &h)?;
                cache.head_input = Some(h);
                logits
            }
        };
        if !logits.is_finite() {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(Forward {
            probs: softmax_rows(&logits),
            logits,
            y_gat,
            y_lit,
            cache,
        })
    }

    /// Accumulates `dL/dθ` into the parameter gradients given `dL/dlogits`.
    pub fn backward(&mut self, fwd: &Forward, input: ModelInput, grad_logits: &Matrix) -> Result<()> {
        fwd.logits.check_same_shape("backward", grad_logits)?;
        let x = input.features;
        let f_p = self.dims.symptoms;
        let c = self.dims.classes;
        let store = &mut self.params;
        let cache = &fwd.cache;
        let layout = &self.layout;

        let mut grad_y_gat = None;
        let mut grad_y_lit = None;
        match self.config.variant {
            Variant::Toxnet => {
                let act = cache.fusion_act.as_ref().expect("fusion cache");
                let g_act = layout.fusion.expect("fusion").backward(store, act, grad_logits, true)?.expect("input");
                let g_pre = elu_backward(cache.fusion_pre.as_ref().expect("fusion cache"), &g_act)?;
                grad_y_gat = Some(g_pre.columns(0, c));
                grad_y_lit = Some(g_pre.columns(c, 2 * c));
            }
            Variant::ToxnetSequential | Variant::GatOnly => grad_y_gat = Some(grad_logits.clone()),
            Variant::LitmatchOnly => grad_y_lit = Some(grad_logits.clone()),
            Variant::Mlp => {
                let h = cache.head_input.as_ref().expect("head cache");
                let mut g = layout.head.expect("head").backward(store, h, grad_logits, true)?.expect("input");
                for (l, layer) in layout.mlp.iter().enumerate().rev() {
                    let g_pre = elu_backward(&cache.mlp_pre[l], &g)?;
                    let need = l > 0;
                    let g_in = layer.backward(store, &cache.mlp_inputs[l], &g_pre, need)?;
                    if let Some(g_in) = g_in {
                        g = dropout_backward(&g_in, cache.masks[l].as_ref());
                    }
                }
            }
        }

        // Gradient w.r.t. v = elu(W_symp p), from either route.
        let mut grad_lit_act: Option<Matrix> = None;
        if let Some(g) = grad_y_lit {
            let id = layout.literature.and_then(|l| l.literature).expect("w_lit");
            // W_lit is frozen; only the input gradient is needed.
            grad_lit_act = Some(g.matmul(store.value(id))?);
        }

        if let Some(g) = grad_y_gat {
            let adj = input.adjacency.ok_or_else(|| Error::Contract("backward needs the graph".into()))?;
            let h = cache.head_input.as_ref().expect("head cache");
            let mut g = layout.head.expect("head").backward(store, h, &g, true)?.expect("input");
            let sequential = self.config.variant == Variant::ToxnetSequential;
            for (l, layer) in layout.gat.iter().enumerate().rev() {
                let need = l > 0 || sequential;
                let g_in = layer.backward(store, &cache.gat[l], adj, &g, need)?;
                if let Some(g_in) = g_in {
                    g = dropout_backward(&g_in, cache.masks[l].as_ref());
                }
            }
            if sequential {
                let g_v = g.columns(0, self.dims.literature);
                grad_lit_act = Some(match grad_lit_act {
                    Some(mut acc) => {
                        acc.add_assign(&g_v)?;
                        acc
                    }
                    None => g_v,
                });
            }
        }

        if let (Some(g_v), Some(lit)) = (grad_lit_act, layout.literature) {
            let g_u = elu_backward(cache.lit_pre.as_ref().expect("literature cache"), &g_v)?;
            let p = x.columns(0, f_p);
            store.accumulate(lit.symptom_map, &linear_transform_weight_grad(&p, &g_u)?)?;
        }
        Ok(())
    }

    /// Class probabilities in evaluation mode.
    pub fn predict_proba(&self, input: ModelInput) -> Result<Matrix> {
        Ok(self.forward(input, Mode::Eval)?.probs)
    }

    /// Literature scores `y_lit = W_lit·elu(W_symp p)` (variants with `W_lit` only).
    pub fn literature_scores(&self, symptoms: &Matrix) -> Result<Matrix> {
        let lit = self
            .layout
            .literature
            .ok_or_else(|| Error::Contract(format!("{} has no literature branch", self.variant())))?;
        let id = lit
            .literature
            .ok_or_else(|| Error::Contract(format!("{} has no literature matrix", self.variant())))?;
        let u = linear_transform(self.params.value(lit.symptom_map), symptoms)?;
        linear_transform(self.params.value(id), &elu_matrix(&u))
    }
}

#[cfg(test)]
mod tests;

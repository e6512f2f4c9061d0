//! Full-batch training of one model on one set of cases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::stratified_split;
use super::metrics::{argmax, f1_scores, F1Scores};
use crate::data::{Dataset, MetaField, PatientCase};
use crate::diffcore::ops::{cross_entropy, masked_cross_entropy};
use crate::diffcore::{Adam, AdamConfig, Matrix};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, PopulationGraph};
use crate::model::{Forward, Mode, ModelConfig, ModelDims, ModelInput, ToxNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
    /// Stop once validation loss has not improved for this many epochs.
    pub patience: Option<usize>,
    pub meta_fields: Vec<MetaField>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 300,
            learning_rate: 0.001,
            weight_decay: 5e-4,
            validation_fraction: 0.1,
            patience: Some(DEFAULT_PATIENCE),
            meta_fields: MetaField::ALL.to_vec(),
        }
    }
}

pub const DEFAULT_PATIENCE: usize = 30;

impl TrainConfig {
    // Negated comparisons so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 {
            return Err(Error::Contract("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Contract("learning_rate must be > 0 and weight_decay ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Contract("validation_fraction must be in [0, 1)".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Contract("patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// What an observer sees after each epoch's forward pass (before the update).
pub struct EpochView<'a> {
    pub log: &'a EpochLog,
    pub forward: &'a Forward,
    pub adjacency: Option<&'a Adjacency>,
}

/// A trained model together with the population it was trained on.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: ToxNet,
    /// Training-fold graph (graph variants only). Node k is `members[k]`.
    pub graph: Option<PopulationGraph>,
    pub members: Vec<usize>,
    pub curve: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// SplitMix64 step, used to derive independent seeds from one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn model_dims(dataset: &Dataset) -> ModelDims {
    let enc = &dataset.encoder;
    ModelDims {
        symptoms: enc.vocab.len(),
        literature: enc.vocab.literature_count(),
        meta: enc.schema.width(),
        classes: dataset.class_count(),
    }
}

fn labels_of(dataset: &Dataset, indices: &[usize]) -> Result<Vec<usize>> {
    indices
        .iter()
        .map(|&i| {
            dataset.cases[i]
                .label
                .ok_or_else(|| Error::Dataset(format!("case {} has no label", dataset.cases[i].id)))
        })
        .collect()
}

/// Trains on `indices` (dataset case positions). A stratified validation
/// share is held out from the loss but stays in the graph; the parameters of
/// the epoch with the lowest validation loss are kept.
///
/// Only the listed cases are read, so nothing outside `indices` can influence
/// the result.
pub fn fit(
    dataset: &Dataset,
    indices: &[usize],
    config: &TrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(EpochView),
) -> Result<Fitted> {
    config.validate()?;
    if indices.is_empty() {
        return Err(Error::Contract("no training cases".into()));
    }
    let labels = labels_of(dataset, indices)?;
    let local: Vec<usize> = (0..indices.len()).collect();
    let (train_rows, val_rows) = stratified_split(&labels, &local, config.validation_fraction, derive_seed(seed, 1));
    let train_labels: Vec<usize> = train_rows.iter().map(|&r| labels[r]).collect();
    let val_labels: Vec<usize> = val_rows.iter().map(|&r| labels[r]).collect();

    let mut model_config = config.model.clone();
    model_config.seed = derive_seed(seed, 2);
    let mut model = ToxNet::new(model_config, model_dims(dataset), &dataset.literature_matrix())?;

    let cases: Vec<&PatientCase> = indices.iter().map(|&i| &dataset.cases[i]).collect();
    let graph = if model.variant().uses_graph() {
        Some(PopulationGraph::build(cases.iter().copied(), &dataset.encoder, &config.meta_fields)?)
    } else {
        None
    };
    let plain_features;
    let features = match &graph {
        Some(g) => &g.features,
        None => {
            plain_features = dataset.encoder.feature_matrix(cases.iter().copied())?;
            &plain_features
        }
    };
    let input = ModelInput {
        features,
        adjacency: graph.as_ref().map(|g| &g.adjacency),
    };

    let mut adam = Adam::new(
        AdamConfig {
            lr: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, crate::diffcore::ParamStore)> = None;

    for epoch in 0..config.epochs {
        let fwd = match model.forward(input, Mode::Train(&mut dropout_rng)) {
            Ok(f) => f,
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        let (train_loss, grad) = masked_cross_entropy(&fwd.probs, &train_rows, &train_labels)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: train_loss });
        }
        let val_loss = if val_rows.is_empty() {
            None
        } else if config.model.dropout > 0.0 {
            let eval = model.forward(input, Mode::Eval)?;
            Some(cross_entropy(&eval.probs.select_rows(&val_rows), &val_labels)?)
        } else {
            Some(cross_entropy(&fwd.probs.select_rows(&val_rows), &val_labels)?)
        };
        let log = EpochLog {
            epoch,
            train_loss,
            val_loss,
        };
        observer(EpochView {
            log: &log,
            forward: &fwd,
            adjacency: input.adjacency,
        });
        curve.push(log);

        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.params.clone()));
        }
        let since_best = epoch - best.as_ref().map_or(epoch, |b| b.1);
        if config.patience.is_some_and(|p| since_best >= p) {
            break;
        }

        model.params.zero_grads();
        model.backward(&fwd, input, &grad)?;
        drop(fwd);
        adam.step(&mut model.params)?;
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    model.params.zero_grads();
    Ok(Fitted {
        model,
        graph,
        members: indices.to_vec(),
        curve,
        best_epoch,
    })
}

impl Fitted {
    /// Class probabilities for dataset cases `indices`, attached inductively:
    /// each query connects only to training nodes, never to other queries.
    pub fn predict_indices(&self, dataset: &Dataset, indices: &[usize]) -> Result<Matrix> {
        let cases: Vec<PatientCase> = indices.iter().map(|&i| dataset.cases[i].clone()).collect();
        self.predict_cases(dataset, &cases)
    }

    pub fn predict_cases(&self, dataset: &Dataset, cases: &[PatientCase]) -> Result<Matrix> {
        match &self.graph {
            Some(graph) => {
                let attached = graph.attach_queries(cases, &dataset.encoder)?;
                let probs = self.model.predict_proba(ModelInput {
                    features: &attached.features,
                    adjacency: Some(&attached.adjacency),
                })?;
                let rows: Vec<usize> = (0..cases.len()).map(|q| attached.query_node(q)).collect();
                Ok(probs.select_rows(&rows))
            }
            None => {
                let x = dataset.encoder.feature_matrix(cases.iter())?;
                self.model.predict_proba(ModelInput {
                    features: &x,
                    adjacency: None,
                })
            }
        }
    }
}

/// Metrics of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub micro: f64,
    pub macro_f1: f64,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub curve: Vec<EpochLog>,
}

pub fn predictions(probs: &Matrix) -> Vec<usize> {
    (0..probs.rows()).map(|r| argmax(probs.row(r))).collect()
}

/// Trains on `train` and scores the held-out `test` cases.
pub fn train_fold(
    dataset: &Dataset,
    train: &[usize],
    test: &[usize],
    config: &TrainConfig,
    seed: u64,
) -> Result<(Fitted, F1Scores)> {
    let fitted = fit(dataset, train, config, seed, &mut |_| {})?;
    let probs = fitted.predict_indices(dataset, test)?;
    let scores = f1_scores(&predictions(&probs), &labels_of(dataset, test)?, dataset.class_count())?;
    Ok((fitted, scores))
}

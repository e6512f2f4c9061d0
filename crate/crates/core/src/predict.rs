//! Single-case inference over a finished model and its training population.

use serde::{Deserialize, Serialize};

use crate::checkpoint::{model_hash, Checkpoint};
use crate::data::{Dataset, Encoder, MetaField, MetaRecord, PatientCase, RawCase};
use crate::error::{Error, Result};
use crate::graph::PopulationGraph;
use crate::model::{explain, Explanation, Mode, ModelInput, ToxNet};
use crate::training::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedToxin {
    pub toxin: String,
    pub probability: f64,
}

/// Pre-fusion branch outputs. A branch the variant lacks is an empty list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchScores {
    pub y_gat: Vec<f64>,
    pub y_lit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// All classes, most probable first; ties keep class order.
    pub ranking: Vec<RankedToxin>,
    pub branch_scores: BranchScores,
    /// Training cases the query is connected to (0 for graph-free variants).
    pub neighbors_used: usize,
    pub model_hash: String,
}

impl Prediction {
    pub fn top(&self) -> &str {
        &self.ranking[0].toxin
    }
}

/// Immutable inference state: model, encoder and (for graph variants) the
/// training population the query attaches to.
#[derive(Debug, Clone)]
pub struct Predictor {
    model: ToxNet,
    encoder: Encoder,
    graph: Option<PopulationGraph>,
    model_hash: String,
}

impl Predictor {
    pub fn new(model: ToxNet, encoder: Encoder, graph: Option<PopulationGraph>) -> Result<Self> {
        match (&graph, model.variant().uses_graph()) {
            (None, true) => {
                return Err(Error::Contract(format!("{} needs a population graph", model.variant())))
            }
            (Some(g), _) if g.vocab_hash != encoder.vocab.hash() => {
                return Err(Error::VocabularyMismatch("graph and encoder vocabularies differ".into()))
            }
            _ => {}
        }
        let model_hash = model_hash(&model.params);
        Ok(Self {
            model,
            encoder,
            graph,
            model_hash,
        })
    }

    /// Loads a checkpoint against the dataset it was trained on. Every labelled
    /// case becomes a population node.
    pub fn from_checkpoint(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<Self> {
        let model = checkpoint.to_model(&dataset.encoder, &dataset.literature_matrix())?;
        let graph = if model.variant().uses_graph() {
            let g = population_graph(dataset, &checkpoint.meta_fields)?;
            let hash = g.content_hash();
            if checkpoint.population_hash.as_deref().is_some_and(|h| h != hash) {
                log::warn!("population graph differs from the one the checkpoint was trained on");
            }
            Some(g)
        } else {
            None
        };
        Self::new(model, dataset.encoder.clone(), graph)
    }

    pub fn model(&self) -> &ToxNet {
        &self.model
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn graph(&self) -> Option<&PopulationGraph> {
        self.graph.as_ref()
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    /// Validates and encodes a query. Unknown symptoms are rejected, not dropped.
    pub fn encode(&self, symptoms: &[String], meta: &MetaRecord) -> Result<PatientCase> {
        self.encoder.encode_case(&RawCase {
            id: "query".into(),
            symptoms: symptoms.to_vec(),
            meta: meta.clone(),
            label: None,
        })
    }

    /// Runs the model on the query's receptive field only; the result equals
    /// attaching the query to the whole training graph.
    pub fn predict(&self, case: &PatientCase) -> Result<Prediction> {
        let depth = self.model.config.receptive_depth();
        let (features, adjacency, neighbors_used) = match &self.graph {
            Some(g) => {
                let (x, adj, _) = g.query_subgraph(case, &self.encoder, depth)?;
                let n = g.consistent_nodes(case).len();
                (x, Some(adj), n)
            }
            None => (self.encoder.feature_matrix([case])?, None, 0),
        };
        let fwd = self.model.forward(
            ModelInput {
                features: &features,
                adjacency: adjacency.as_ref(),
            },
            Mode::Eval,
        )?;
        let probs = fwd.probs.row(0);
        let mut order: Vec<usize> = (0..probs.len()).collect();
        // Stable: equal probabilities keep class order, so the first entry is the argmax.
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
        debug_assert_eq!(order[0], argmax(probs));
        let row0 = |m: &Option<crate::diffcore::Matrix>| m.as_ref().map(|m| m.row(0).to_vec()).unwrap_or_default();
        Ok(Prediction {
            ranking: order
                .into_iter()
                .map(|c| RankedToxin {
                    toxin: self.encoder.classes[c].clone(),
                    probability: probs[c],
                })
                .collect(),
            branch_scores: BranchScores {
                y_gat: row0(&fwd.y_gat),
                y_lit: row0(&fwd.y_lit),
            },
            neighbors_used,
            model_hash: self.model_hash.clone(),
        })
    }

    pub fn explain(&self, case: &PatientCase, top_k: Option<usize>) -> Result<Explanation> {
        explain(
            &self.model,
            &case.symptom_vector,
            self.encoder.vocab.symptoms(),
            &self.encoder.classes,
            top_k,
        )
    }
}

/// The population graph over every labelled case of `dataset`.
pub fn population_graph(dataset: &Dataset, meta_fields: &[MetaField]) -> Result<PopulationGraph> {
    PopulationGraph::build(
        dataset.cases.iter().filter(|c| c.label.is_some()),
        &dataset.encoder,
        meta_fields,
    )
}

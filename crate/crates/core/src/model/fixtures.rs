//! Small random problems for gradient checks and property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_model_gradients, ModelConfig, ModelDims, ModelInput, ToxNet, Variant};
use crate::diffcore::{GradCheckReport, Matrix};
use crate::error::Result;
use crate::graph::Adjacency;

#[derive(Debug, Clone)]
pub struct TinyProblem {
    pub dims: ModelDims,
    pub features: Matrix,
    pub adjacency: Adjacency,
    pub literature: Matrix,
    pub labels: Vec<usize>,
}

/// Random binary symptoms, one-hot meta over `groups` values, and symmetric
/// random edges (probability 0.6) within each group, self-loops included.
///
/// The fixture steers clear of points where a gradient is exactly zero by
/// symmetry, since central differences only see roundoff there: full cliques
/// (attention goes uniform), dense graphs (deeper layers over-smooth until the
/// source half of each attention vector drops out of the softmax) and
/// literature symptoms shared by every class (they shift all logits equally).
pub fn tiny_problem(dims: ModelDims, nodes: usize, groups: usize, seed: u64) -> TinyProblem {
    assert!(dims.meta >= groups && groups > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group: Vec<usize> = (0..nodes).map(|_| rng.gen_range(0..groups)).collect();
    let features = Matrix::from_fn(nodes, dims.feature_width(), |r, c| {
        if c < dims.symptoms {
            f64::from(rng.gen_bool(0.35))
        } else {
            f64::from(c - dims.symptoms == group[r])
        }
    });
    let mut lists: Vec<Vec<usize>> = (0..nodes).map(|i| vec![i]).collect();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if group[i] == group[j] && rng.gen_bool(0.6) {
                lists[i].push(j);
                lists[j].push(i);
            }
        }
    }
    lists.iter_mut().for_each(|l| l.sort_unstable());
    // Column s always contains class s mod C and never class (s + 1) mod C.
    let literature = Matrix::from_fn(dims.classes, dims.literature, |c, s| {
        let own = s % dims.classes == c;
        let excluded = dims.classes > 1 && (s + 1) % dims.classes == c;
        f64::from(own || (!excluded && rng.gen_bool(0.25)))
    });
    let labels = (0..nodes).map(|_| rng.gen_range(0..dims.classes)).collect();
    TinyProblem {
        dims,
        features,
        adjacency: Adjacency::from_lists(&lists),
        literature,
        labels,
    }
}

/// Dimensions of the small gradient-check configuration.
pub const TINY_DIMS: ModelDims = ModelDims {
    symptoms: 12,
    literature: 8,
    meta: 4,
    classes: 3,
};

/// Adds uniform noise in `[-scale, scale)` to every trainable entry, moving the
/// model off initialisation points where ELU inputs sit exactly on a kink.
pub fn jitter(model: &mut ToxNet, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for param in model.params.iter_mut() {
        let mask = param.freeze_mask().to_vec();
        for (x, frozen) in param.value.as_mut_slice().iter_mut().zip(mask) {
            if !frozen {
                *x += rng.gen_range(-scale..scale);
            }
        }
    }
}

/// Small model configuration matching [`TINY_DIMS`]: widths [8, 8, 8], two heads.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        widths: vec![8, 8, 8],
        heads: 2,
        final_heads: 2,
        seed: 7,
        ..ModelConfig::default()
    }
}

/// Nodes in the reference gradient check.
pub const GRADCHECK_NODES: usize = 20;
/// Pinned fixture seed of the reference gradient check.
pub const GRADCHECK_SEED: u64 = 2;
pub const GRADCHECK_EPSILON: f64 = 1e-5;
pub const GRADCHECK_JITTER: f64 = 0.1;

/// Reference gradient check: every variant on the tiny configuration, loss
/// over all nodes.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<(Variant, GradCheckReport)>> {
    let p = tiny_problem(TINY_DIMS, GRADCHECK_NODES, 4, seed);
    let rows: Vec<usize> = (0..GRADCHECK_NODES).collect();
    let input = ModelInput {
        features: &p.features,
        adjacency: Some(&p.adjacency),
    };
    Variant::ALL
        .iter()
        .map(|&v| {
            let mut model = ToxNet::new(tiny_config(v), p.dims, &p.literature)?;
            jitter(&mut model, GRADCHECK_JITTER, seed);
            let report = check_model_gradients(&mut model, input, &rows, &p.labels, GRADCHECK_EPSILON)?;
            Ok((v, report))
        })
        .collect()
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fixtures::{gradcheck_suite, tiny_config, tiny_problem, GRADCHECK_SEED, TINY_DIMS};
use super::*;
use crate::diffcore::{Adam, AdamConfig};

fn input(p: &fixtures::TinyProblem) -> ModelInput<'_> {
    ModelInput {
        features: &p.features,
        adjacency: Some(&p.adjacency),
    }
}

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    for (v, report) in gradcheck_suite(GRADCHECK_SEED).unwrap() {
        assert!(report.max_relative_error() < 1e-4, "{v}: {:#?}", report.params);
    }
}

/// Over many random problems every entry above tolerance must be explained by
/// finite-difference resolution or a nearby kink, never by a wrong gradient.
#[test]
fn gradient_excesses_are_numerical_across_seeds() {
    let rows: Vec<usize> = (0..20).collect();
    let mut excess = 0;
    for seed in 0..24 {
        let p = tiny_problem(TINY_DIMS, 20, 4, seed);
        for v in Variant::ALL {
            let mut model = ToxNet::new(tiny_config(v), p.dims, &p.literature).unwrap();
            fixtures::jitter(&mut model, 0.1, seed);
            let report = check_model_gradients(&mut model, input(&p), &rows, &p.labels, 1e-5).unwrap();
            let bad = classify_excess(&model, input(&p), &rows, &p.labels, &report, 1e-4).unwrap();
            excess += bad.len();
            let wrong: Vec<_> = bad.iter().filter(|b| b.2 == Excess::Mismatch).collect();
            assert!(wrong.is_empty(), "seed {seed} {v}: {wrong:?}");
        }
    }
    // Sanity: the classifier is exercised, not vacuous.
    assert!(excess > 0);
}

#[test]
fn corrupted_backward_is_classified_as_mismatch() {
    let p = tiny_problem(TINY_DIMS, 20, 4, 2);
    let rows: Vec<usize> = (0..20).collect();
    let mut model = ToxNet::new(tiny_config(Variant::GatOnly), p.dims, &p.literature).unwrap();
    fixtures::jitter(&mut model, 0.1, 2);
    let mut report = check_model_gradients(&mut model, input(&p), &rows, &p.labels, 1e-5).unwrap();
    report.entries[3].2 *= 1.01;
    let bad = classify_excess(&model, input(&p), &rows, &p.labels, &report, 1e-4).unwrap();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0].2, Excess::Mismatch);
}

/// Dense reference: `α_ij = exp(e_ij) / Σ_{k∈N_i} exp(e_ik)` with masked
/// entries excluded.
fn dense_alpha(z: &Matrix, a: &Matrix, adj: &Adjacency, slope: f64) -> Vec<Vec<f64>> {
    let n = z.rows();
    let f = z.cols();
    let score = |i: usize, j: usize| {
        let s: f64 = (0..f).map(|t| a.get(t, 0) * z.get(i, t) + a.get(f + t, 0) * z.get(j, t)).sum();
        if s >= 0.0 {
            s
        } else {
            slope * s
        }
    };
    (0..n)
        .map(|i| {
            let mask: Vec<bool> = (0..n).map(|j| adj.neighbors(i).contains(&j)).collect();
            let denom: f64 = (0..n).filter(|&j| mask[j]).map(|j| score(i, j).exp()).sum();
            (0..n)
                .map(|j| if mask[j] { score(i, j).exp() / denom } else { 0.0 })
                .collect()
        })
        .collect()
}

#[test]
fn attention_matches_dense_masked_softmax() {
    let p = tiny_problem(TINY_DIMS, 15, 3, 9);
    let model = ToxNet::new(tiny_config(Variant::GatOnly), p.dims, &p.literature).unwrap();
    let layer = &model.gat_layers()[0];
    let alphas = layer.attention_coefficients(&model.params, &p.features, &p.adjacency).unwrap();
    for (k, head) in layer.heads.iter().enumerate() {
        let z = linear_transform(model.params.value(head.weight), &p.features).unwrap();
        let dense = dense_alpha(&z, model.params.value(head.attention), &p.adjacency, LEAKY_SLOPE);
        let off = p.adjacency.offsets();
        for i in 0..15 {
            for (e, &j) in (off[i]..off[i + 1]).zip(p.adjacency.neighbors(i)) {
                assert!((alphas[k][e] - dense[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn path_graph_attention_by_hand() {
    // 0 - 1 - 2 with self-loops; one head, F = F' = 1, W = 1, a = [1, 2].
    let adj = Adjacency::from_lists(&[vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
    let mut store = ParamStore::new();
    let layer = GatLayer {
        heads: vec![GatHead {
            weight: store.add(Parameter::new("w", Matrix::filled(1, 1, 1.0))),
            attention: store.add(Parameter::new("a", Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap())),
        }],
        in_width: 1,
        head_width: 1,
        aggregation: Aggregation::Concat,
        slope: 0.2,
    };
    let x = Matrix::from_vec(3, 1, vec![1.0, -1.0, 0.5]).unwrap();
    let alpha = layer.attention_coefficients(&store, &x, &adj).unwrap().remove(0);
    // Node 0: e_00 = 1+2 = 3, e_01 = leaky(1-2) = -0.2.
    let a00 = 3f64.exp() / (3f64.exp() + (-0.2f64).exp());
    assert!((alpha[0] - a00).abs() < 1e-15);
    // Node 1: raw = -1 + 2x_j -> [1, -3, 0] -> leaky [1, -0.6, 0].
    let d = 1f64.exp() + (-0.6f64).exp() + 1.0;
    let expect = [1f64.exp() / d, (-0.6f64).exp() / d, 1.0 / d];
    for (got, want) in alpha[2..5].iter().zip(expect) {
        assert!((got - want).abs() < 1e-15);
    }
    let (out, _) = layer.forward(&store, x.clone(), &adj).unwrap();
    let h1 = expect[0] * 1.0 + -expect[1] + expect[2] * 0.5;
    assert!((out.get(1, 0) - crate::diffcore::ops::elu(h1)).abs() < 1e-15);
}

#[test]
fn graph_variants_are_permutation_equivariant() {
    let p = tiny_problem(TINY_DIMS, 12, 3, 5);
    let perm: Vec<usize> = vec![3, 7, 0, 11, 5, 1, 9, 2, 10, 4, 8, 6];
    let mut inv = [0; 12];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let lists: Vec<Vec<usize>> = perm
        .iter()
        .map(|&old| {
            let mut l: Vec<usize> = p.adjacency.neighbors(old).iter().map(|&j| inv[j]).collect();
            l.sort_unstable();
            l
        })
        .collect();
    let adj2 = Adjacency::from_lists(&lists);
    let x2 = p.features.select_rows(&perm);
    for v in [Variant::Toxnet, Variant::GatOnly, Variant::ToxnetSequential] {
        let model = ToxNet::new(tiny_config(v), p.dims, &p.literature).unwrap();
        let a = model.predict_proba(input(&p)).unwrap();
        let b = model
            .predict_proba(ModelInput {
                features: &x2,
                adjacency: Some(&adj2),
            })
            .unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for c in 0..3 {
                assert!((a.get(old, c) - b.get(new, c)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn litmatch_at_init_agrees_with_naive_match() {
    let p = tiny_problem(TINY_DIMS, 200, 4, 11);
    let model = ToxNet::new(tiny_config(Variant::LitmatchOnly), p.dims, &p.literature).unwrap();
    let probs = model.predict_proba(input(&p)).unwrap();
    for r in 0..200 {
        let symptoms: Vec<bool> = p.features.row(r)[..12].iter().map(|&x| x != 0.0).collect();
        let want = naive_match(&symptoms, &p.literature).unwrap();
        let row = probs.row(r);
        let got = (0..3).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        assert_eq!(got, want, "row {r}");
    }
}

#[test]
fn frozen_entries_survive_training() {
    let p = tiny_problem(TINY_DIMS, 20, 4, 2);
    let rows: Vec<usize> = (0..20).collect();
    let mut model = ToxNet::new(tiny_config(Variant::Toxnet), p.dims, &p.literature).unwrap();
    let mut adam = Adam::new(
        AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        },
        &model.params,
    );
    for _ in 0..30 {
        loss_and_gradients(&mut model, input(&p), &rows, &p.labels).unwrap();
        adam.step(&mut model.params).unwrap();
    }
    let w = model.symptom_map().unwrap();
    for s in 0..8 {
        assert_eq!(w.get(s, s).to_bits(), 1f64.to_bits());
    }
    assert!(w.as_slice().iter().enumerate().any(|(i, &x)| i / 12 != i % 12 && x != 0.0));
    assert_eq!(model.literature_matrix().unwrap(), &p.literature);
}

#[test]
fn explanation_terms_sum_to_scores() {
    let p = tiny_problem(TINY_DIMS, 5, 2, 4);
    let mut model = ToxNet::new(tiny_config(Variant::Toxnet), p.dims, &p.literature).unwrap();
    let id = model.params.find(W_SYMP).unwrap();
    let param = model.params.get_mut(id);
    param.value.set(2, 10, 0.7);
    let names: Vec<String> = (0..12).map(|i| format!("s{i}")).collect();
    let classes: Vec<String> = (0..3).map(|i| format!("t{i}")).collect();
    let symptoms: Vec<bool> = p.features.row(0)[..12].iter().map(|&x| x != 0.0).collect();
    let ex = explain(&model, &symptoms, &names, &classes, None).unwrap();
    let sym = Matrix::from_vec(1, 12, p.features.row(0)[..12].to_vec()).unwrap();
    let y = model.literature_scores(&sym).unwrap();
    for c in &ex.classes {
        let total: f64 = c.contributions.iter().map(|t| t.contribution).sum();
        assert!((total - c.score).abs() < 1e-12);
        assert!((c.score - y.get(0, c.class_index)).abs() < 1e-12);
    }
    for c in &ex.classes {
        assert!(c.contributions.windows(2).all(|w| w[0].contribution >= w[1].contribution));
    }
    // No symptoms: every term is zero. At init with p = h_c: indicator of h_c.
    let none = explain(&model, &[false; 12], &names, &classes, None).unwrap();
    assert!(none.classes.iter().flat_map(|c| &c.contributions).all(|t| t.contribution == 0.0));
    let fresh = ToxNet::new(tiny_config(Variant::Toxnet), p.dims, &p.literature).unwrap();
    let mut h1 = vec![false; 12];
    for s in 0..8 {
        h1[s] = p.literature.get(1, s) != 0.0;
    }
    let ex1 = explain(&fresh, &h1, &names, &classes, None).unwrap();
    for t in &ex1.classes[1].contributions {
        assert_eq!(t.contribution, 1.0);
    }
    assert!(explain(&ToxNet::new(tiny_config(Variant::Mlp), p.dims, &p.literature).unwrap(), &symptoms, &names, &classes, None).is_err());
}

#[test]
fn graph_variants_require_adjacency() {
    let p = tiny_problem(TINY_DIMS, 4, 2, 1);
    let model = ToxNet::new(tiny_config(Variant::GatOnly), p.dims, &p.literature).unwrap();
    let err = model.predict_proba(ModelInput {
        features: &p.features,
        adjacency: None,
    });
    assert!(matches!(err, Err(Error::Contract(_))));
}

#[test]
fn initial_loss_near_uniform_for_prior_free_variants() {
    let p = tiny_problem(TINY_DIMS, 50, 4, 8);
    let rows: Vec<usize> = (0..50).collect();
    for v in [Variant::GatOnly, Variant::Mlp] {
        let mut cfg = ModelConfig::default();
        cfg.variant = v;
        let mut model = ToxNet::new(cfg, p.dims, &p.literature).unwrap();
        let loss = loss_and_gradients(&mut model, input(&p), &rows, &p.labels).unwrap();
        assert!((loss - 3f64.ln()).abs() < 0.1 * 3f64.ln(), "{v}: {loss}");
    }
}

#[test]
fn dropout_changes_training_output_only() {
    let p = tiny_problem(TINY_DIMS, 10, 2, 6);
    let mut cfg = tiny_config(Variant::GatOnly);
    cfg.dropout = 0.5;
    let model = ToxNet::new(cfg, p.dims, &p.literature).unwrap();
    let a = model.forward(input(&p), Mode::Eval).unwrap().probs;
    let b = model.forward(input(&p), Mode::Eval).unwrap().probs;
    assert_eq!(a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = model.forward(input(&p), Mode::Train(&mut rng)).unwrap().probs;
    assert_ne!(a, c);
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
    }
    assert!(matches!("gcn".parse::<Variant>(), Err(Error::UnknownVariant(_))));
}



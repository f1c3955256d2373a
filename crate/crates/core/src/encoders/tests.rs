use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::inference::{tree_marginals, ArcMatrix};
use crate::tensor::ParamStore;

fn tiny_config(variant: Variant, tree_mode: TreeMode, aggregation: Aggregation) -> EncoderConfig {
    EncoderConfig {
        embedding_dim: 5,
        lstm_hidden: 3,
        mlp_hidden: 4,
        mlp_depth: 2,
        relation_dim: 4,
        rn_output_dim: 6,
        attn_output_dim: 4,
        context_dim: 5,
        aggregation,
        recurrent_steps: 3,
        tree_mode,
        variant,
        dropout: 0.0,
        ..Default::default()
    }
}

fn build(config: &EncoderConfig, seed: u64) -> (ParamStore, SentenceEncoder) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = SentenceEncoder::build(&mut store, &mut rng, "enc", config).unwrap();
    (store, encoder)
}

fn random_embedding(n: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from(TensorData::new(vec![n, dim], data).unwrap())
}

fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len());
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!((a - e).abs() <= tol, "[{i}]: {a} vs {e}");
    }
}

#[test]
fn config_validation_catches_bad_combinations() {
    let mut cfg = tiny_config(Variant::RecurrentRn, TreeMode::None, Aggregation::Sum);
    assert!(cfg.validate().is_err(), "recurrent RN needs a tree mode");
    cfg.tree_mode = TreeMode::Latent;
    assert!(cfg.validate().is_ok());
    cfg.recurrent_steps = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_config(Variant::Bow, TreeMode::None, Aggregation::Sum);
    cfg.embedding_dim = 0;
    assert!(cfg.validate().is_err());
}

#[test]
fn bow_is_the_mean_embedding() {
    let cfg = tiny_config(Variant::Bow, TreeMode::None, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 0);
    let pass = Pass::eval(&store);
    let x = random_embedding(3, 5, 1);
    let out = encoder.encode(&pass, &x, None).unwrap();
    for c in 0..5 {
        let mean = (x.value().at(0, c) + x.value().at(1, c) + x.value().at(2, c)) / 3.0;
        assert!((out.sentence.data()[c] - mean).abs() < 1e-12);
    }

    // single word: its own embedding
    let single = random_embedding(1, 5, 2);
    let out = encoder.encode(&pass, &single, None).unwrap();
    assert_close(out.sentence.data(), single.data(), 1e-15);

    // duplicating a word leaves the mean unchanged
    let mut doubled_rows = Vec::new();
    doubled_rows.push(single.data().to_vec());
    doubled_rows.push(single.data().to_vec());
    let doubled = Tensor::from(TensorData::from_rows(&doubled_rows).unwrap());
    let out2 = encoder.encode(&pass, &doubled, None).unwrap();
    assert_close(out2.sentence.data(), out.sentence.data(), 1e-15);
}

#[test]
fn bilstm_max_single_word_is_its_object_vector() {
    let cfg = tiny_config(Variant::BilstmMax, TreeMode::None, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 3);
    let pass = Pass::eval(&store);
    let x = random_embedding(1, 5, 4);
    let out = encoder.encode(&pass, &x, None).unwrap();
    let o = encoder.objects(&pass, &x).unwrap();
    assert_close(out.sentence.data(), o.data(), 0.0);
}

#[test]
fn flat_rn_single_word_uses_zero_aggregate() {
    let cfg = tiny_config(Variant::FlatRn, TreeMode::None, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 5);
    let pass = Pass::eval(&store);
    let x = random_embedding(1, 5, 6);
    let out = encoder.encode(&pass, &x, None).unwrap();
    let zero = Tensor::from(TensorData::zeros(vec![cfg.relation_dim]));
    let expected = encoder.post_rn.as_ref().unwrap().forward_vec(&pass, &zero).unwrap();
    assert_close(out.sentence.data(), expected.data(), 0.0);
}

#[test]
fn flat_rn_aggregate_is_permutation_invariant() {
    for aggregation in [Aggregation::Sum, Aggregation::Max] {
        let cfg = tiny_config(Variant::FlatRn, TreeMode::None, aggregation);
        let (store, encoder) = build(&cfg, 7);
        let pass = Pass::eval(&store);
        let o = random_embedding(4, 6, 8); // object width is 2*lstm_hidden = 6
        let permuted_rows: Vec<Vec<f64>> =
            [2usize, 0, 3, 1].iter().map(|&r| o.value().data()[r * 6..(r + 1) * 6].to_vec()).collect();
        let o_perm = Tensor::from(TensorData::from_rows(&permuted_rows).unwrap());
        let a = encoder.flat_pair_aggregate(&pass, &o).unwrap();
        let b = encoder.flat_pair_aggregate(&pass, &o_perm).unwrap();
        assert_close(a.data(), b.data(), 1e-12);
    }
}

#[test]
fn flat_rn_two_words_match_manual_composition() {
    for aggregation in [Aggregation::Sum, Aggregation::Max] {
        let cfg = tiny_config(Variant::FlatRn, TreeMode::None, aggregation);
        let (store, encoder) = build(&cfg, 9);
        let pass = Pass::eval(&store);
        let x = random_embedding(2, 5, 10);
        let out = encoder.encode(&pass, &x, None).unwrap();

        let o = encoder.objects(&pass, &x).unwrap();
        let g = encoder.relation.as_ref().unwrap();
        let f = encoder.post_rn.as_ref().unwrap();
        let o1 = o.row(0).unwrap();
        let o2 = o.row(1).unwrap();
        let g12 = g.forward_vec(&pass, &Tensor::concat(&[&o1, &o2], 0).unwrap()).unwrap();
        let g21 = g.forward_vec(&pass, &Tensor::concat(&[&o2, &o1], 0).unwrap()).unwrap();
        let stacked = crate::tensor::stack_rows(&[&g12, &g21]).unwrap();
        let agg = match aggregation {
            Aggregation::Sum => stacked.reduce_sum(Some(0)).unwrap(),
            Aggregation::Max => stacked.reduce_max(Some(0)).unwrap(),
        };
        let expected = f.forward_vec(&pass, &agg).unwrap();
        assert_close(out.sentence.data(), expected.data(), 1e-12);
    }
}

#[test]
fn supervised_tree_rn_matches_manual_chain_composition() {
    let cfg = tiny_config(Variant::FlatRn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 11);
    let pass = Pass::eval(&store);
    let x = random_embedding(3, 5, 12);
    let tree = DependencyTree::new(vec![0, 1, 2]).unwrap(); // chain 0 -> 1 -> 2 -> 3
    let out = encoder.encode(&pass, &x, Some(&tree)).unwrap();

    let o = encoder.objects(&pass, &x).unwrap();
    let root = pass.param(encoder.root_object.as_ref().unwrap()).unwrap();
    let g = encoder.relation.as_ref().unwrap();
    let f = encoder.post_rn.as_ref().unwrap();
    let rows = [
        (root.clone(), o.row(0).unwrap()),
        (o.row(0).unwrap(), o.row(1).unwrap()),
        (o.row(1).unwrap(), o.row(2).unwrap()),
    ];
    let mut total: Option<Tensor> = None;
    for (head, modifier) in rows {
        let rel = g.forward_vec(&pass, &Tensor::concat(&[&head, &modifier], 0).unwrap()).unwrap();
        total = Some(match total {
            None => rel,
            Some(t) => t.add(&rel).unwrap(),
        });
    }
    let expected = f.forward_vec(&pass, &total.unwrap()).unwrap();
    assert_close(out.sentence.data(), expected.data(), 1e-10);
}

#[test]
fn supervised_single_word_is_root_relation() {
    let cfg = tiny_config(Variant::FlatRn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 13);
    let pass = Pass::eval(&store);
    let x = random_embedding(1, 5, 14);
    let tree = DependencyTree::new(vec![0]).unwrap();
    let out = encoder.encode(&pass, &x, Some(&tree)).unwrap();

    let o = encoder.objects(&pass, &x).unwrap();
    let root = pass.param(encoder.root_object.as_ref().unwrap()).unwrap();
    let rel = encoder
        .relation
        .as_ref()
        .unwrap()
        .forward_vec(&pass, &Tensor::concat(&[&root, &o.row(0).unwrap()], 0).unwrap())
        .unwrap();
    let expected = encoder.post_rn.as_ref().unwrap().forward_vec(&pass, &rel).unwrap();
    assert_close(out.sentence.data(), expected.data(), 1e-12);
}

#[test]
fn one_hot_marginals_reproduce_the_supervised_rn() {
    // sum aggregation: the marginal rewrite at a point mass is exactly Eq-3
    let cfg = tiny_config(Variant::FlatRn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 15);
    let pass = Pass::eval(&store);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for n in 1..=5usize {
        let x = random_embedding(n, 5, 17 + n as u64);
        let trees = crate::inference::enumerate_trees(n, RootMode::MultiRoot).unwrap();
        let tree = &trees[rng.random_range(0..trees.len())];
        let supervised = encoder.encode(&pass, &x, Some(tree)).unwrap();
        let latent = encoder.encode_with_marginals(&pass, &x, &marginals_from_tree(tree)).unwrap();
        assert_close(latent.sentence.data(), supervised.sentence.data(), 1e-10);
    }
}

#[test]
fn missing_or_mismatched_tree_is_an_error() {
    let cfg = tiny_config(Variant::FlatRn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 18);
    let pass = Pass::eval(&store);
    let x = random_embedding(2, 5, 19);
    assert!(matches!(encoder.encode(&pass, &x, None), Err(EncoderError::MissingTree)));
    let wrong = DependencyTree::new(vec![0]).unwrap();
    assert!(matches!(encoder.encode(&pass, &x, Some(&wrong)), Err(EncoderError::TreeLength { .. })));
}

#[test]
fn potentials_with_zero_parameters_are_uniform() {
    let cfg = tiny_config(Variant::FlatRn, TreeMode::Latent, Aggregation::Sum);
    let (mut store, encoder) = build(&cfg, 20);
    for suffix in ["w", "u", "v", "b"] {
        let name = format!("enc/potentials/{suffix}");
        let shape = store.value(&name).unwrap().shape().to_vec();
        store.set_value(&name, TensorData::zeros(shape)).unwrap();
    }
    let pass = Pass::eval(&store);
    let o_full = random_embedding(3, 6, 21);
    let psi = encoder.edge_potentials_from_objects(&pass, &o_full).unwrap();
    for h in 0..=2usize {
        for m in 1..=2usize {
            if h != m {
                assert!((psi.values().get(h, m) - 1.0).abs() < 1e-12);
            }
        }
    }

    // uniform potentials over two words give the 2/3-1/3 marginal pattern
    let p = tree_marginals(psi.tensor(), RootMode::MultiRoot).unwrap();
    assert!((p.get(0, 1) - 2.0 / 3.0).abs() < 1e-10);
    assert!((p.get(1, 2) - 1.0 / 3.0).abs() < 1e-10);
}

#[test]
fn potential_exponents_are_clamped() {
    let cfg = tiny_config(Variant::FlatRn, TreeMode::Latent, Aggregation::Sum);
    let (mut store, encoder) = build(&cfg, 22);
    store.set_value("enc/potentials/b", TensorData::vector(vec![100.0])).unwrap();
    for suffix in ["w", "u", "v"] {
        let name = format!("enc/potentials/{suffix}");
        let shape = store.value(&name).unwrap().shape().to_vec();
        store.set_value(&name, TensorData::zeros(shape)).unwrap();
    }
    let pass = Pass::eval(&store);
    let o_full = random_embedding(3, 6, 23);
    let psi = encoder.edge_potentials_from_objects(&pass, &o_full).unwrap();
    let e30 = 30.0f64.exp();
    for h in 0..=2usize {
        for m in 1..=2usize {
            if h != m {
                let v = psi.values().get(h, m);
                assert!(v.is_finite() && (v - e30).abs() / e30 < 1e-12);
            }
        }
    }
}

#[test]
fn latent_encoding_is_scale_invariant_in_the_potentials() {
    // adding a constant to the bias multiplies all potentials by a constant;
    // the marginals, and therefore the encoding, must not move
    let cfg = tiny_config(Variant::FlatRn, TreeMode::Latent, Aggregation::Sum);
    let (mut store, encoder) = build(&cfg, 24);
    let x = random_embedding(3, 5, 25);
    let before = {
        let pass = Pass::eval(&store);
        encoder.encode(&pass, &x, None).unwrap().sentence
    };
    let b = store.value("enc/potentials/b").unwrap().data()[0];
    store.set_value("enc/potentials/b", TensorData::vector(vec![b + 2.0])).unwrap();
    let after = {
        let pass = Pass::eval(&store);
        encoder.encode(&pass, &x, None).unwrap().sentence
    };
    assert_close(after.data(), before.data(), 1e-8);
}

#[test]
fn intra_attention_supervised_single_word_matches_manual() {
    let cfg = tiny_config(Variant::IntraAttn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 26);
    let pass = Pass::eval(&store);
    let x = random_embedding(1, 5, 27);
    let tree = DependencyTree::new(vec![0]).unwrap();
    let out = encoder.encode(&pass, &x, Some(&tree)).unwrap();

    let o = encoder.objects(&pass, &x).unwrap();
    let root = pass.param(encoder.root_object.as_ref().unwrap()).unwrap();
    let rel = encoder
        .relation
        .as_ref()
        .unwrap()
        .forward_vec(&pass, &Tensor::concat(&[&root, &o.row(0).unwrap()], 0).unwrap())
        .unwrap();
    let r1 = encoder.post_attn.as_ref().unwrap().forward_vec(&pass, &rel).unwrap();
    let w_r = pass.param(encoder.context_proj.as_ref().unwrap()).unwrap();
    let s = Tensor::concat(&[&r1, &o.row(0).unwrap()], 0)
        .unwrap()
        .reshape(vec![1, cfg.attn_output_dim + 6])
        .unwrap()
        .matmul(&w_r)
        .unwrap()
        .tanh();
    assert_close(out.words.as_ref().unwrap().data(), s.data(), 1e-12);
}

#[test]
fn contextual_vectors_stay_in_tanh_range() {
    let cfg = tiny_config(Variant::IntraAttn, TreeMode::Latent, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 28);
    let pass = Pass::eval(&store);
    let x = random_embedding(4, 5, 29);
    let out = encoder.encode(&pass, &x, None).unwrap();
    for v in out.words.as_ref().unwrap().data() {
        assert!(*v > -1.0 && *v < 1.0);
    }
}

#[test]
fn intra_attention_word_context_depends_on_its_parent() {
    // chain tree over two words: zeroing o_1 must change s_2
    let cfg = tiny_config(Variant::IntraAttn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 30);
    let pass = Pass::eval(&store);
    let tree = DependencyTree::new(vec![0, 1]).unwrap();
    let o_full = random_embedding(3, 6, 31);
    let r = encoder.intra_parent_vectors_from_tree(&pass, &o_full, &tree).unwrap();

    let mut zeroed_rows: Vec<Vec<f64>> =
        (0..3).map(|i| o_full.value().data()[i * 6..(i + 1) * 6].to_vec()).collect();
    zeroed_rows[1] = vec![0.0; 6]; // o_1
    let o_zeroed = Tensor::from(TensorData::from_rows(&zeroed_rows).unwrap());
    let r_zeroed = encoder.intra_parent_vectors_from_tree(&pass, &o_zeroed, &tree).unwrap();

    let row = |t: &Tensor, i: usize| t.value().data()[i * cfg.attn_output_dim..(i + 1) * cfg.attn_output_dim].to_vec();
    assert!(
        row(&r, 1).iter().zip(row(&r_zeroed, 1)).any(|(a, b)| (a - b).abs() > 1e-9),
        "word 2's context must reflect its parent o_1"
    );
}

#[test]
fn intra_attention_one_hot_parent_vectors_match_supervised() {
    let cfg = tiny_config(Variant::IntraAttn, TreeMode::Latent, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 32);
    let pass = Pass::eval(&store);
    for n in 1..=4usize {
        let o_full = random_embedding(n + 1, 6, 33 + n as u64);
        let trees = crate::inference::enumerate_trees(n, RootMode::MultiRoot).unwrap();
        for tree in trees.iter().take(5) {
            let supervised = encoder.intra_parent_vectors_from_tree(&pass, &o_full, tree).unwrap();
            let latent = encoder
                .intra_parent_vectors_from_marginals(&pass, &o_full, &marginals_from_tree(tree))
                .unwrap();
            assert_close(latent.data(), supervised.data(), 1e-10);
        }
    }
}

#[test]
fn intra_attention_leaf_child_context_is_f_of_zero() {
    let cfg = tiny_config(Variant::IntraAttn, TreeMode::Latent, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 34);
    let pass = Pass::eval(&store);
    let x = random_embedding(2, 5, 35);
    // chain: word 2 is a leaf (no children)
    let tree = DependencyTree::new(vec![0, 1]).unwrap();
    let out = encoder.encode_with_marginals(&pass, &x, &marginals_from_tree(&tree)).unwrap();

    let f = encoder.post_attn.as_ref().unwrap();
    let f_zero = f.forward_vec(&pass, &Tensor::from(TensorData::zeros(vec![cfg.relation_dim]))).unwrap();
    // reconstruct s_2 with the leaf child term and compare
    let o = encoder.objects(&pass, &x).unwrap();
    let root = pass.param(encoder.root_object.as_ref().unwrap()).unwrap();
    let o_full = Tensor::concat(&[&root.reshape(vec![1, 6]).unwrap(), &o], 0).unwrap();
    let p_vecs = encoder
        .intra_parent_vectors_from_marginals(&pass, &o_full, &marginals_from_tree(&tree))
        .unwrap();
    let p2 = p_vecs.row(1).unwrap();
    let w_r = pass.param(encoder.context_proj.as_ref().unwrap()).unwrap();
    let s2 = Tensor::concat(&[&p2, &f_zero, &o.row(1).unwrap()], 0)
        .unwrap()
        .reshape(vec![1, 2 * cfg.attn_output_dim + 6])
        .unwrap()
        .matmul(&w_r)
        .unwrap()
        .tanh();
    let words = out.words.as_ref().unwrap();
    assert_close(&words.data()[cfg.context_dim..], s2.data(), 1e-10);
}

#[test]
fn structured_baseline_one_hot_context_is_the_parent_object() {
    let cfg = tiny_config(Variant::StructuredAttnBaseline, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 36);
    let pass = Pass::eval(&store);
    let o_full = random_embedding(4, 6, 37); // root + 3 words
    let tree = DependencyTree::new(vec![0, 1, 1]).unwrap();
    let p = marginals_from_tree(&tree);
    let (parent_ctx, child_ctx) = encoder.expected_neighbor_contexts(&o_full, &p).unwrap();
    // parent context of each word is exactly its head's object vector
    for m in 1..=3usize {
        let head = tree.head_of(m);
        let expected = &o_full.value().data()[head * 6..(head + 1) * 6];
        assert_close(&parent_ctx.value().data()[(m - 1) * 6..m * 6], expected, 1e-12);
    }
    // word 1 has children {2, 3}: child context sums their objects
    for c in 0..6 {
        let expected = o_full.value().at(2, c) + o_full.value().at(3, c);
        assert!((child_ctx.value().at(0, c) - expected).abs() < 1e-12);
    }
}

#[test]
fn structured_baseline_uniform_two_words_averages_neighbors() {
    let cfg = tiny_config(Variant::StructuredAttnBaseline, TreeMode::None, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 38);
    let pass = Pass::eval(&store);
    let o_full = random_embedding(3, 6, 39);
    let p = super::uniform_marginals(2);
    let (parent_ctx, _) = encoder.expected_neighbor_contexts(&o_full, &p).unwrap();
    // each word's parent context averages the root object and the other word
    for (word, other) in [(1usize, 2usize), (2, 1)] {
        for c in 0..6 {
            let expected = 0.5 * (o_full.value().at(0, c) + o_full.value().at(other, c));
            assert!((parent_ctx.value().at(word - 1, c) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn structured_baseline_differs_from_intra_attention() {
    let intra_cfg = tiny_config(Variant::IntraAttn, TreeMode::Latent, Aggregation::Sum);
    let (intra_store, intra) = build(&intra_cfg, 40);
    let base_cfg = tiny_config(Variant::StructuredAttnBaseline, TreeMode::Latent, Aggregation::Sum);
    let (base_store, base) = build(&base_cfg, 40);
    let x = random_embedding(3, 5, 41);
    let intra_pass = Pass::eval(&intra_store);
    let base_pass = Pass::eval(&base_store);
    let a = intra.encode(&intra_pass, &x, None).unwrap();
    let b = base.encode(&base_pass, &x, None).unwrap();
    assert!(a.sentence.data().iter().zip(b.sentence.data()).any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn recurrent_t1_returns_objects_exactly() {
    for tree_mode in [TreeMode::Supervised, TreeMode::Latent] {
        let mut cfg = tiny_config(Variant::RecurrentRn, tree_mode, Aggregation::Sum);
        cfg.recurrent_steps = 1;
        let (store, encoder) = build(&cfg, 42);
        let pass = Pass::eval(&store);
        let x = random_embedding(3, 5, 43);
        let tree = DependencyTree::new(vec![0, 1, 2]).unwrap();
        let out = encoder.encode(&pass, &x, Some(&tree)).unwrap();
        let o = encoder.objects(&pass, &x).unwrap();
        assert_close(out.words.as_ref().unwrap().data(), o.data(), 0.0);
    }
}

#[test]
fn recurrent_single_word_is_finite() {
    let cfg = tiny_config(Variant::RecurrentRn, TreeMode::Latent, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 44);
    let pass = Pass::eval(&store);
    let x = random_embedding(1, 5, 45);
    let out = encoder.encode(&pass, &x, None).unwrap();
    assert!(out.sentence.data().iter().all(|v| v.is_finite()));
    assert_eq!(out.words.as_ref().unwrap().shape(), &[1, 6]);
}

#[test]
fn recurrent_messages_come_only_from_the_parent() {
    let cfg = tiny_config(Variant::RecurrentRn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 46);
    let pass = Pass::eval(&store);
    let tree = DependencyTree::new(vec![0, 1, 2]).unwrap(); // chain 1 -> 2 -> 3
    let states = random_embedding(4, 6, 47); // root + 3 words

    let messages = encoder.recurrent_messages_from_tree(&pass, &states, &tree).unwrap();

    // perturb the state of word 2 (row 2): only word 3's message may change
    let mut rows: Vec<Vec<f64>> = (0..4).map(|i| states.value().data()[i * 6..(i + 1) * 6].to_vec()).collect();
    rows[2][0] += 1.0;
    let perturbed = Tensor::from(TensorData::from_rows(&rows).unwrap());
    let messages_perturbed = encoder.recurrent_messages_from_tree(&pass, &perturbed, &tree).unwrap();

    let row = |t: &Tensor, i: usize| t.value().data()[i * 4..(i + 1) * 4].to_vec();
    assert_close(&row(&messages, 0), &row(&messages_perturbed, 0), 1e-12); // word 1: parent is root
    assert!(
        row(&messages, 2).iter().zip(row(&messages_perturbed, 2)).any(|(a, b)| (a - b).abs() > 1e-9),
        "word 3's message comes from word 2"
    );
}

#[test]
fn recurrent_one_hot_parent_messages_match_supervised() {
    let cfg = tiny_config(Variant::RecurrentRn, TreeMode::Latent, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 48);
    let pass = Pass::eval(&store);
    for n in 1..=4usize {
        let states = random_embedding(n + 1, 6, 49 + n as u64);
        let trees = crate::inference::enumerate_trees(n, RootMode::MultiRoot).unwrap();
        for tree in trees.iter().take(5) {
            let supervised = encoder.recurrent_messages_from_tree(&pass, &states, tree).unwrap();
            let latent = encoder
                .recurrent_parent_messages_from_marginals(&pass, &states, &marginals_from_tree(tree))
                .unwrap();
            assert_close(latent.data(), supervised.data(), 1e-10);
        }
    }
}

#[test]
fn recurrent_chain_propagates_information_over_steps() {
    // chain 1 -> 2 -> 3 with parent-only messages: h_3 at T=3 reflects o_1
    let cfg = tiny_config(Variant::RecurrentRn, TreeMode::Supervised, Aggregation::Sum);
    let (store, encoder) = build(&cfg, 50);
    let tree = DependencyTree::new(vec![0, 1, 2]).unwrap();
    let x = random_embedding(3, 5, 51);
    let mut perturbed_rows: Vec<Vec<f64>> =
        (0..3).map(|i| x.value().data()[i * 5..(i + 1) * 5].to_vec()).collect();
    perturbed_rows[0][0] += 0.5; // perturb word 1's embedding
    let x_perturbed = Tensor::from(TensorData::from_rows(&perturbed_rows).unwrap());

    let pass = Pass::eval(&store);
    let h = encoder.encode(&pass, &x, Some(&tree)).unwrap();
    let h_perturbed = encoder.encode(&pass, &x_perturbed, Some(&tree)).unwrap();
    let row3 = |t: &SentenceRepr| t.words.as_ref().unwrap().value().data()[2 * 6..3 * 6].to_vec();
    assert!(
        row3(&h).iter().zip(row3(&h_perturbed)).any(|(a, b)| (a - b).abs() > 1e-9),
        "word 3's state reflects word 1 after three steps"
    );
}

#[test]
fn empty_sentence_rejected_by_all_variants() {
    for (variant, tree_mode) in [
        (Variant::Bow, TreeMode::None),
        (Variant::BilstmMax, TreeMode::None),
        (Variant::FlatRn, TreeMode::None),
        (Variant::IntraAttn, TreeMode::Latent),
        (Variant::RecurrentRn, TreeMode::Latent),
    ] {
        let cfg = tiny_config(variant, tree_mode, Aggregation::Sum);
        let (store, encoder) = build(&cfg, 52);
        let pass = Pass::eval(&store);
        let empty = Tensor::from(TensorData::new(vec![0, 5], vec![]).unwrap());
        assert!(matches!(encoder.encode(&pass, &empty, None), Err(EncoderError::EmptySentence)));
    }
}

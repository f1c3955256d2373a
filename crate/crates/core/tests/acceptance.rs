//! Acceptance suite: one test per criterion, each printing a PASS line when
//! it holds (run with `cargo test --test acceptance -- --nocapture` to see
//! them). Criterion 8 needs a local question-classification dataset and is
//! ignored by default; see its doc comment.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treern::data::{
    make_batches, synthetic_keyword_corpus, EmbeddingTable, EncodedExample, SyntheticSpec,
};
use treern::encoders::{Aggregation, EncoderConfig, TreeMode, Variant};
use treern::inference::{
    cle_decode, enumerate_trees, is_valid_tree, log_partition, marginals_from_tree, tree_marginals,
    tree_score, ArcMatrix, DependencyTree, RootMode,
};
use treern::model::{TaskKind, TextClassifier};
use treern::tensor::{finite_difference_check, ParamStore, Pass, Tensor, TensorData, FD_EPS_SWEEP};
use treern::train::{approx_randomization_test, dump_trees, train, Datasets, OptimizerKind, TrainConfig};

fn random_potentials(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..(n + 1) * n).map(|_| rng.random_range(-2.0..2.0f64).exp()).collect();
    Tensor::from(TensorData::new(vec![n + 1, n], data).unwrap())
}

fn random_scores(n: usize, rng: &mut ChaCha8Rng) -> ArcMatrix {
    let mut arcs = ArcMatrix::zeros(n);
    for h in 0..=n {
        for m in 1..=n {
            if h != m {
                arcs.set(h, m, rng.random_range(-5.0..5.0));
            }
        }
    }
    arcs
}

/// Brute-force marginals and log-partition from a pre-enumerated tree list.
fn oracle_marginals(psi: &ArcMatrix, trees: &[DependencyTree]) -> (ArcMatrix, f64) {
    let n = psi.n();
    let log_weights: Vec<f64> = trees
        .iter()
        .map(|t| t.heads().iter().enumerate().map(|(i, &h)| psi.get(h, i + 1).ln()).sum())
        .collect();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut marginals = ArcMatrix::zeros(n);
    for (tree, w) in trees.iter().zip(&weights) {
        for m in 1..=n {
            let h = tree.head_of(m);
            marginals.set(h, m, marginals.get(h, m) + w / total);
        }
    }
    (marginals, max + total.ln())
}

// ── criterion 1 ──────────────────────────────────────────────────────

#[test]
fn criterion_1_matrix_tree_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for mode in [RootMode::MultiRoot, RootMode::SingleRoot] {
        for n in 1..=6usize {
            let trees = enumerate_trees(n, mode).unwrap();
            for _ in 0..50 {
                let psi = random_potentials(n, &mut rng);
                let arcs = ArcMatrix::from_tensor(psi.value()).unwrap();
                let (oracle_p, oracle_log_z) = oracle_marginals(&arcs, &trees);

                let p = tree_marginals(&psi, mode).unwrap();
                for h in 0..=n {
                    for m in 1..=n {
                        if h == m {
                            continue;
                        }
                        let diff = (p.get(h, m) - oracle_p.get(h, m)).abs();
                        assert!(diff <= 1e-8, "n={n} mode={mode:?} arc {h}->{m}: diff {diff}");
                    }
                }
                assert!(p.check_invariants(mode, 1e-8), "marginal invariants violated");

                let log_z = log_partition(&psi, mode).unwrap().data()[0];
                assert!(
                    (log_z - oracle_log_z).abs() <= 1e-8,
                    "n={n} mode={mode:?}: log Z {log_z} vs oracle {oracle_log_z}"
                );
            }
        }
    }
    println!("criterion 1 (matrix-tree oracle equivalence, n=1..6 x 50 x both modes): PASS");
}

// ── criterion 2 ──────────────────────────────────────────────────────

#[test]
fn criterion_2_cle_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for mode in [RootMode::MultiRoot, RootMode::SingleRoot] {
        for n in 1..=7usize {
            let trees = enumerate_trees(n, mode).unwrap();
            for _ in 0..100 {
                let scores = random_scores(n, &mut rng);
                let decoded = cle_decode(&scores, mode);
                assert!(is_valid_tree(decoded.heads(), mode));
                let decoded_score = tree_score(&scores, decoded.heads());
                let best = trees
                    .iter()
                    .map(|t| tree_score(&scores, t.heads()))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    decoded_score == best,
                    "n={n} mode={mode:?}: decoded {decoded_score} vs best {best}"
                );
            }
        }
    }
    println!("criterion 2 (CLE oracle equivalence, n=1..7 x 100 x both modes): PASS");
}

// ── criterion 3 ──────────────────────────────────────────────────────

#[test]
fn criterion_3_crf_moment_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for mode in [RootMode::MultiRoot, RootMode::SingleRoot] {
        for n in 1..=6usize {
            for _ in 0..3 {
                let tape = treern::tensor::Tape::new();
                let theta_data: Vec<f64> =
                    (0..(n + 1) * n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let theta = tape.leaf(TensorData::new(vec![n + 1, n], theta_data).unwrap());
                let psi = theta.exp();
                let log_z = log_partition(&psi, mode).unwrap();
                let marginals = tree_marginals(&psi, mode).unwrap();
                let grads = tape.backward(&log_z).unwrap();
                let g = grads.wrt(&theta).unwrap();
                for h in 0..=n {
                    for m in 1..=n {
                        if h == m {
                            continue;
                        }
                        let diff = (g[h * n + (m - 1)] - marginals.get(h, m)).abs();
                        assert!(diff <= 1e-6, "n={n} mode={mode:?} arc {h}->{m}: diff {diff}");
                    }
                }
            }
        }
    }
    println!("criterion 3 (CRF moment identity, log-partition gradient = marginals): PASS");
}

// ── criterion 4 ──────────────────────────────────────────────────────

fn gradient_check_config(variant: Variant, tree_mode: TreeMode) -> EncoderConfig {
    EncoderConfig {
        embedding_dim: 8,
        lstm_hidden: 8,
        mlp_hidden: 8,
        mlp_depth: 2,
        relation_dim: 8,
        rn_output_dim: 8,
        attn_output_dim: 8,
        context_dim: 8,
        aggregation: Aggregation::Sum,
        recurrent_steps: 3,
        tree_mode,
        variant,
        dropout: 0.0,
        ..Default::default()
    }
}

fn full_model_gradient_error(variant: Variant, tree_mode: TreeMode, length: usize, seed: u64) -> f64 {
    let config = gradient_check_config(variant, tree_mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab_size = 6;
    let mut store = ParamStore::new();
    // unit-scale embeddings: the default tiny init leaves deep-path gradient
    // entries below what any finite-difference quotient can resolve
    let mut embeddings = EmbeddingTable::random(vocab_size, config.embedding_dim, &mut rng);
    let scaled: Vec<f64> = embeddings.matrix.data().iter().map(|v| v * 20.0).collect();
    embeddings.matrix = TensorData::new(vec![vocab_size, config.embedding_dim], scaled).unwrap();
    let model =
        TextClassifier::build(&mut store, &mut rng, &config, embeddings, 3, TaskKind::Single).unwrap();

    let tokens: Vec<usize> = (0..length).map(|_| rng.random_range(2..vocab_size)).collect();
    let tree = if tree_mode == TreeMode::Supervised {
        let trees = enumerate_trees(length, RootMode::MultiRoot).unwrap();
        Some(trees[rng.random_range(0..trees.len())].clone())
    } else {
        None
    };
    let example = EncodedExample {
        id: "g".into(),
        sides: vec![tokens],
        trees: vec![tree],
        label: 1,
    };

    let forward = |store: &ParamStore| {
        let pass = Pass::eval(store);
        let out = model.forward_example(&pass, &example).unwrap();
        out.loss.scalar_value()
    };

    let pass = Pass::eval(&store);
    let out = model.forward_example(&pass, &example).unwrap();
    let grads = pass.backward(&out.loss).unwrap();
    let mut analytic: IndexMap<String, Vec<f64>> = grads.0.iter().cloned().collect();

    // The potential bias and modifier vector have identically zero loss
    // gradients under latent marginals: a uniform shift of all exponents, or
    // of any modifier's column, multiplies every tree weight equally (each
    // tree has exactly one incoming edge per modifier), so the marginals do
    // not move. The backward pass realizes that zero as cancellation dust
    // around 1e-18, which a finite-difference quotient cannot certify against
    // a relative tolerance; assert the dust directly instead.
    for degenerate in ["enc/potentials/v", "enc/potentials/b"] {
        if let Some(grad) = analytic.shift_remove(degenerate) {
            let max_abs = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            assert!(
                max_abs <= 1e-10,
                "{degenerate} should have a structurally zero gradient, got {max_abs:.3e}"
            );
        }
    }

    // wider sweep than the default: small steps keep the stencil on one side
    // of nearby ReLU kinks, large steps lift near-zero gradient entries out
    // of the roundoff floor; the per-entry minimum picks whichever applies
    let sweep = [1e-4, 1e-5, 1e-6, 1e-7, 1e-3, 1e-2];
    finite_difference_check(&mut store, &analytic, forward, &sweep).unwrap()
}

#[test]
fn criterion_4_end_to_end_gradient_suite() {
    let variants: [(Variant, TreeMode, &str); 7] = [
        (Variant::FlatRn, TreeMode::None, "flat RN"),
        (Variant::FlatRn, TreeMode::Supervised, "supervised-tree RN"),
        (Variant::FlatRn, TreeMode::Latent, "latent-tree RN"),
        (Variant::IntraAttn, TreeMode::Supervised, "intra-attention supervised"),
        (Variant::IntraAttn, TreeMode::Latent, "intra-attention latent"),
        (Variant::RecurrentRn, TreeMode::Supervised, "recurrent RN supervised"),
        (Variant::RecurrentRn, TreeMode::Latent, "recurrent RN latent"),
    ];
    for (variant, tree_mode, name) in variants {
        for length in 2..=5usize {
            let err = full_model_gradient_error(variant, tree_mode, length, 4040 + 7 * length as u64);
            assert!(err <= 1e-4, "{name}, length {length}: gradient error {err:.3e}");
            println!("criterion 4 [{name}, length {length}]: max rel err {err:.3e}");
        }
    }
    println!("criterion 4 (end-to-end gradient suite, all variants, rel err <= 1e-4): PASS");
}

// ── criterion 5 ──────────────────────────────────────────────────────

#[test]
fn criterion_5_one_hot_bridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    // RN path: full sentence-vector equality under sum aggregation
    let rn_config = EncoderConfig {
        aggregation: Aggregation::Sum,
        ..gradient_check_config(Variant::FlatRn, TreeMode::Supervised)
    };
    let mut store = ParamStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(506);
    let rn = treern::encoders::SentenceEncoder::build(&mut store, &mut init_rng, "rn", &rn_config).unwrap();

    // intra-attention and recurrent paths share parameters through their
    // latent instances; the bridge compares the parent-path terms
    let intra_config = gradient_check_config(Variant::IntraAttn, TreeMode::Latent);
    let mut intra_store = ParamStore::new();
    let intra =
        treern::encoders::SentenceEncoder::build(&mut intra_store, &mut init_rng, "ia", &intra_config).unwrap();
    let rec_config = gradient_check_config(Variant::RecurrentRn, TreeMode::Latent);
    let mut rec_store = ParamStore::new();
    let rec =
        treern::encoders::SentenceEncoder::build(&mut rec_store, &mut init_rng, "rr", &rec_config).unwrap();

    let mut checked = 0usize;
    while checked < 100 {
        let n = rng.random_range(1..=6usize);
        let trees = enumerate_trees(n, RootMode::MultiRoot).unwrap();
        let tree = trees[rng.random_range(0..trees.len())].clone();
        let one_hot = marginals_from_tree(&tree);

        let embedded_data: Vec<f64> = (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let embedded = Tensor::from(TensorData::new(vec![n, 8], embedded_data).unwrap());

        let pass = Pass::eval(&store);
        let supervised = rn.encode(&pass, &embedded, Some(&tree)).unwrap();
        let latent = rn.encode_with_marginals(&pass, &embedded, &one_hot).unwrap();
        for (a, b) in latent.sentence.data().iter().zip(supervised.sentence.data()) {
            assert!((a - b).abs() <= 1e-10, "RN bridge: {a} vs {b}");
        }

        let states_data: Vec<f64> = (0..(n + 1) * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let states = Tensor::from(TensorData::new(vec![n + 1, 16], states_data).unwrap());

        let intra_pass = Pass::eval(&intra_store);
        let sup_vecs = intra.intra_parent_vectors_from_tree(&intra_pass, &states, &tree).unwrap();
        let lat_vecs = intra.intra_parent_vectors_from_marginals(&intra_pass, &states, &one_hot).unwrap();
        for (a, b) in lat_vecs.data().iter().zip(sup_vecs.data()) {
            assert!((a - b).abs() <= 1e-10, "intra-attention bridge: {a} vs {b}");
        }

        let rec_pass = Pass::eval(&rec_store);
        let sup_msgs = rec.recurrent_messages_from_tree(&rec_pass, &states, &tree).unwrap();
        let lat_msgs = rec.recurrent_parent_messages_from_marginals(&rec_pass, &states, &one_hot).unwrap();
        for (a, b) in lat_msgs.data().iter().zip(sup_msgs.data()) {
            assert!((a - b).abs() <= 1e-10, "recurrent bridge: {a} vs {b}");
        }

        checked += 1;
    }
    println!("criterion 5 (one-hot bridge over 100 random trees, n <= 6, tol 1e-10): PASS");
}

// ── criterion 6 ──────────────────────────────────────────────────────

#[test]
fn criterion_6_batching_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let variants: [(Variant, TreeMode); 8] = [
        (Variant::Bow, TreeMode::None),
        (Variant::BilstmMax, TreeMode::None),
        (Variant::FlatRn, TreeMode::None),
        (Variant::FlatRn, TreeMode::Supervised),
        (Variant::FlatRn, TreeMode::Latent),
        (Variant::IntraAttn, TreeMode::Latent),
        (Variant::StructuredAttnBaseline, TreeMode::Latent),
        (Variant::RecurrentRn, TreeMode::Latent),
    ];
    for (variant, tree_mode) in variants {
        let config = gradient_check_config(variant, tree_mode);
        let mut store = ParamStore::new();
        let mut init_rng = ChaCha8Rng::seed_from_u64(607);
        let vocab_size = 9;
        let embeddings = EmbeddingTable::random(vocab_size, config.embedding_dim, &mut init_rng);
        let model =
            TextClassifier::build(&mut store, &mut init_rng, &config, embeddings, 3, TaskKind::Single)
                .unwrap();

        // mixed lengths force padding inside the batch
        let examples: Vec<EncodedExample> = (0..5usize)
            .map(|i| {
                let len = 2 + i;
                let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(2..vocab_size)).collect();
                let tree = (tree_mode == TreeMode::Supervised).then(|| {
                    let trees = enumerate_trees(len, RootMode::MultiRoot).unwrap();
                    trees[rng.random_range(0..trees.len())].clone()
                });
                EncodedExample { id: i.to_string(), sides: vec![tokens], trees: vec![tree], label: i % 3 }
            })
            .collect();

        let batches = make_batches(&examples, 5);
        assert_eq!(batches.len(), 1);
        let batch = &batches[0];
        assert!(batch.blocks[0].tokens.iter().all(|row| row.len() == 6), "padded to the max length");

        for i in 0..batch.len() {
            let from_batch = EncodedExample {
                id: batch.ids[i].clone(),
                sides: vec![batch.blocks[0].tokens_of(i).to_vec()],
                trees: vec![batch.blocks[0].tree_of(i)],
                label: batch.labels[i],
            };
            let pass_batch = Pass::eval(&store);
            let out_batch = model.forward_example(&pass_batch, &from_batch).unwrap();
            let pass_single = Pass::eval(&store);
            let out_single = model.forward_example(&pass_single, &examples[i]).unwrap();
            for (a, b) in out_batch.reprs[0]
                .sentence
                .data()
                .iter()
                .zip(out_single.reprs[0].sentence.data())
            {
                assert!((a - b).abs() <= 1e-10, "{variant:?}/{tree_mode:?} example {i}: {a} vs {b}");
            }
            for (a, b) in out_batch.prediction.probs.iter().zip(&out_single.prediction.probs) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }
    println!("criterion 6 (batched vs unbatched equivalence across variants, tol 1e-10): PASS");
}

// ── criterion 7 ──────────────────────────────────────────────────────

#[test]
fn criterion_7_synthetic_relational_task() {
    let spec = SyntheticSpec {
        num_classes: 4,
        train_size: 400,
        test_size: 200,
        min_len: 5,
        max_len: 9,
        filler_vocab: 30,
        seed: 7,
    };
    let (train_examples, test_examples, labels) = synthetic_keyword_corpus(&spec);

    let config = TrainConfig {
        task: TaskKind::Single,
        labels: labels.labels().to_vec(),
        encoder: EncoderConfig {
            embedding_dim: 16,
            lstm_hidden: 8,
            mlp_hidden: 16,
            mlp_depth: 2,
            relation_dim: 16,
            rn_output_dim: 16,
            attn_output_dim: 16,
            context_dim: 16,
            aggregation: Aggregation::Max,
            recurrent_steps: 3,
            tree_mode: TreeMode::Latent,
            variant: Variant::RecurrentRn,
            root_mode: RootMode::SingleRoot,
            dropout: 0.5,
            ..Default::default()
        },
        optimizer: OptimizerKind::Adam,
        learning_rate: Some(1e-3),
        dropout: 0.5,
        batch_size: 16,
        max_epochs: 20,
        patience: 20,
        seed: 7,
        validation_size: 50,
        embeddings_path: None,
        lowercase: false,
        min_freq: 1,
        clip_norm: 5.0,
        grid: None,
        sigtest_rounds: 10_000,
    };

    let split_seed = treern::train::seed_stream(config.seed, treern::train::SeedStream::Split);
    let (train_split, dev_split) =
        treern::data::split_validation(&train_examples, config.validation_size, split_seed, false).unwrap();
    let data = Datasets {
        train: train_split,
        dev: dev_split,
        test: Some(test_examples.clone()),
        labels: labels.clone(),
    };

    let out_dir = tempfile::tempdir().unwrap();
    let outcome = train(&config, &data, Some(out_dir.path())).unwrap();
    let test_accuracy = outcome.report.test_accuracy.unwrap();
    println!(
        "criterion 7: test accuracy {test_accuracy:.4} after {} epochs (best dev {:.4})",
        outcome.report.epochs.len(),
        outcome.report.best_dev_accuracy
    );
    assert!(
        test_accuracy >= 0.95,
        "recurrent RN + latent tree reached only {test_accuracy:.4} on the synthetic task"
    );

    // root attraction: decode the induced trees and check the keyword heads them
    let sentences: Vec<Vec<String>> = test_examples.iter().map(|ex| ex.sentences[0].clone()).collect();
    let tree_path = out_dir.path().join("trees.conllu");
    let stats = dump_trees(&outcome.model, &outcome.store, &outcome.vocab, &sentences, &tree_path).unwrap();
    let mut keyword_roots = 0usize;
    for (sentence, tree) in sentences.iter().zip(&stats.trees) {
        assert!(is_valid_tree(tree.heads(), RootMode::SingleRoot));
        let keyword = treern::data::keyword_position(sentence).expect("every sentence has a keyword") + 1;
        if tree.head_of(keyword) == 0 {
            keyword_roots += 1;
        }
    }
    let fraction = keyword_roots as f64 / sentences.len() as f64;
    println!("criterion 7: keyword at root in {:.1}% of test sentences", 100.0 * fraction);
    assert!(
        fraction >= 0.80,
        "keyword heads only {:.1}% of induced trees",
        100.0 * fraction
    );
    println!("criterion 7 (synthetic relational task: accuracy >= 95%, keyword root >= 80%): PASS");
}

// ── criterion 8 ──────────────────────────────────────────────────────

/// Desk-scale question-classification reproduction. Needs the dataset on
/// disk, which this repository does not ship: set `TREERN_TREC_DIR` to a
/// directory holding `train.tsv` and `test.tsv` in `label<TAB>sentence`
/// format with the six question-type labels (ABBR, ENTY, DESC, HUM, LOC,
/// NUM), then run `cargo test --test acceptance -- --ignored --nocapture`.
/// Optionally set `TREERN_GLOVE_PATH` to 300-dimensional pretrained vectors
/// to enable the pretrained-embedding check.
#[test]
#[ignore = "needs a local TREC-format dataset; see the doc comment"]
fn criterion_8_question_classification_desk_scale() {
    let data_dir = std::env::var("TREERN_TREC_DIR").unwrap_or_else(|_| "data/trec".to_string());
    let data_dir = std::path::Path::new(&data_dir);
    assert!(
        data_dir.join("train.tsv").exists(),
        "criterion 8: no dataset at {} (set TREERN_TREC_DIR)",
        data_dir.display()
    );

    let labels = ["ABBR", "ENTY", "DESC", "HUM", "LOC", "NUM"].map(str::to_string).to_vec();
    let base_encoder = EncoderConfig {
        embedding_dim: 100,
        lstm_hidden: 100,
        mlp_hidden: 100,
        mlp_depth: 2,
        relation_dim: 100,
        rn_output_dim: 100,
        attn_output_dim: 100,
        context_dim: 100,
        aggregation: Aggregation::Max,
        recurrent_steps: 3,
        tree_mode: TreeMode::Latent,
        variant: Variant::RecurrentRn,
        root_mode: RootMode::MultiRoot,
        dropout: 0.5,
        ..Default::default()
    };
    let base = TrainConfig {
        task: TaskKind::Single,
        labels,
        encoder: base_encoder,
        optimizer: OptimizerKind::Adam,
        learning_rate: Some(1e-3),
        dropout: 0.5,
        batch_size: 32,
        max_epochs: 30,
        patience: 10,
        seed: 0,
        validation_size: 500,
        embeddings_path: None,
        lowercase: false,
        min_freq: 1,
        clip_norm: 5.0,
        grid: None,
        sigtest_rounds: 10_000,
    };

    let median_over_seeds = |config: &TrainConfig| -> f64 {
        let mut accs: Vec<f64> = [0u64, 1, 2]
            .iter()
            .map(|&seed| {
                let mut c = config.clone();
                c.seed = seed;
                let data = treern::train::load_datasets_from_dir(&c, data_dir).unwrap();
                let out_dir = tempfile::tempdir().unwrap();
                let outcome = train(&c, &data, Some(out_dir.path())).unwrap();
                let acc = outcome.report.test_accuracy.expect("test.tsv provides test accuracy");
                println!("criterion 8: {:?} seed {seed}: test accuracy {acc:.4}", c.encoder.variant);
                acc
            })
            .collect();
        accs.sort_by(f64::total_cmp);
        accs[1]
    };

    // (a) recurrent RN + latent tree at reduced dims
    let recurrent_acc = median_over_seeds(&base);
    println!("criterion 8a: recurrent RN + latent tree median test accuracy {recurrent_acc:.4}");
    assert!(recurrent_acc >= 0.85, "criterion 8a failed: {recurrent_acc:.4} < 0.85");

    // (b) bag of words must trail the best RN variant by >= 3 points
    let mut bow_config = base.clone();
    bow_config.encoder.variant = Variant::Bow;
    bow_config.encoder.tree_mode = TreeMode::None;
    let bow_acc = median_over_seeds(&bow_config);
    println!("criterion 8b: BoW median test accuracy {bow_acc:.4}");
    assert!(
        recurrent_acc - bow_acc >= 0.03,
        "criterion 8b failed: RN {recurrent_acc:.4} does not beat BoW {bow_acc:.4} by 3 points"
    );

    // (c) with full 300-dim pretrained embeddings available locally
    if let Ok(glove) = std::env::var("TREERN_GLOVE_PATH") {
        let mut pretrained = base.clone();
        pretrained.encoder.embedding_dim = 300;
        pretrained.embeddings_path = Some(glove);
        let acc = median_over_seeds(&pretrained);
        println!("criterion 8c: pretrained-embedding median test accuracy {acc:.4}");
        assert!(acc >= 0.91, "criterion 8c failed: {acc:.4} < 0.91");
    } else {
        println!("criterion 8c: skipped (TREERN_GLOVE_PATH not set; pretrained vectors unavailable)");
    }
    println!("criterion 8 (question-classification desk-scale reproduction): PASS");
}

// ── criterion 9 ──────────────────────────────────────────────────────

#[test]
fn criterion_9_significance_test_sanity() {
    let same = vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
    let p_same = approx_randomization_test(&same, &same, 10_000, 0).unwrap();
    assert_eq!(p_same, 1.0, "identical prediction vectors must give p = 1.0");

    let a = vec![1.0; 20];
    let b = vec![0.0; 20];
    let p_contrast = approx_randomization_test(&a, &b, 10_000, 0).unwrap();
    assert!(p_contrast < 0.01, "all-correct vs all-wrong gave p = {p_contrast}");
    println!("criterion 9 (significance test sanity: p = 1.0 identical, p < 0.01 contrast): PASS");
}

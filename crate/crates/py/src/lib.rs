//! Python bindings: exact tree inference, significance testing, training,
//! and trained-model loading.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use treern::data::Vocabulary;
use treern::inference::{self, ArcMatrix, DependencyTree, RootMode};
use treern::model::{TaskKind, TextClassifier};
use treern::tensor::{ParamStore, Pass, Tensor, TensorData};
use treern::train::{self, ModelMeta};

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn runtime_err(err: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(err.to_string())
}

fn root_mode(single_root: bool) -> RootMode {
    if single_root {
        RootMode::SingleRoot
    } else {
        RootMode::MultiRoot
    }
}

/// Rows: heads 0..=n, columns: modifiers 1..=n.
fn arc_matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<(ArcMatrix, usize)> {
    if rows.len() < 2 {
        return Err(value_err("expected an (n+1) x n matrix with n >= 1"));
    }
    let n = rows.len() - 1;
    let mut flat = Vec::with_capacity((n + 1) * n);
    for row in rows {
        if row.len() != n {
            return Err(value_err(format!("expected {} columns per row, got {}", n, row.len())));
        }
        flat.extend_from_slice(row);
    }
    let data = TensorData::new(vec![n + 1, n], flat).map_err(value_err)?;
    Ok((ArcMatrix::from_tensor(&data).map_err(value_err)?, n))
}

fn arc_matrix_to_rows(arcs: &ArcMatrix) -> Vec<Vec<f64>> {
    let n = arcs.n();
    (0..=n)
        .map(|h| (1..=n).map(|m| if h == m { 0.0 } else { arcs.get(h, m) }).collect())
        .collect()
}

/// Arc marginals p(h -> m | x) from strictly positive potentials via the
/// matrix-tree theorem. `psi` has n+1 rows (head 0 is the root) and n columns.
#[pyfunction]
#[pyo3(signature = (psi, single_root = false))]
fn tree_marginals(psi: Vec<Vec<f64>>, single_root: bool) -> PyResult<Vec<Vec<f64>>> {
    let (arcs, _) = arc_matrix_from_rows(&psi)?;
    let tensor = Tensor::from(arcs.to_tensor_data());
    let marginals = inference::tree_marginals(&tensor, root_mode(single_root)).map_err(value_err)?;
    Ok(arc_matrix_to_rows(&marginals.values()))
}

/// Log partition function over all trees valid under the root mode.
#[pyfunction]
#[pyo3(signature = (psi, single_root = false))]
fn log_partition(psi: Vec<Vec<f64>>, single_root: bool) -> PyResult<f64> {
    let (arcs, _) = arc_matrix_from_rows(&psi)?;
    let tensor = Tensor::from(arcs.to_tensor_data());
    let z = inference::log_partition(&tensor, root_mode(single_root)).map_err(value_err)?;
    Ok(z.data()[0])
}

/// Maximum spanning arborescence over arc scores; returns the head array
/// (entry i is the head of word i+1, 0 for the root).
#[pyfunction]
#[pyo3(signature = (scores, single_root = false))]
fn cle_decode(scores: Vec<Vec<f64>>, single_root: bool) -> PyResult<Vec<usize>> {
    let (arcs, _) = arc_matrix_from_rows(&scores)?;
    Ok(inference::cle_decode(&arcs, root_mode(single_root)).heads().to_vec())
}

/// All valid head arrays for n words (n <= 8).
#[pyfunction]
#[pyo3(signature = (n, single_root = false))]
fn enumerate_trees(n: usize, single_root: bool) -> PyResult<Vec<Vec<usize>>> {
    let trees = inference::enumerate_trees(n, root_mode(single_root)).map_err(value_err)?;
    Ok(trees.into_iter().map(|t| t.heads().to_vec()).collect())
}

#[pyfunction]
#[pyo3(signature = (heads, single_root = false))]
fn is_valid_tree(heads: Vec<usize>, single_root: bool) -> bool {
    inference::is_valid_tree(&heads, root_mode(single_root))
}

/// One-hot marginal matrix of a fixed head array.
#[pyfunction]
fn marginals_from_tree(heads: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
    let tree = DependencyTree::new(heads).map_err(value_err)?;
    Ok(arc_matrix_to_rows(&inference::marginals_from_tree(&tree).values()))
}

/// Two-sided approximate randomization test over paired per-example scores.
#[pyfunction]
#[pyo3(signature = (a, b, rounds = 10_000, seed = 0))]
fn approx_randomization_test(a: Vec<f64>, b: Vec<f64>, rounds: usize, seed: u64) -> PyResult<f64> {
    train::approx_randomization_test(&a, &b, rounds, seed).map_err(value_err)
}

/// Train from a JSON config file and a data directory (same layout as the
/// CLI); returns the run report as a JSON string.
#[pyfunction]
fn train_from_files(config_path: &str, data_dir: &str, out_dir: &str) -> PyResult<String> {
    let text = std::fs::read_to_string(config_path).map_err(runtime_err)?;
    let config: train::TrainConfig = serde_json::from_str(&text).map_err(value_err)?;
    config.validate().map_err(value_err)?;
    let data = train::load_datasets_from_dir(&config, Path::new(data_dir)).map_err(runtime_err)?;
    let outcome = train::train(&config, &data, Some(Path::new(out_dir))).map_err(runtime_err)?;
    serde_json::to_string_pretty(&outcome.report).map_err(runtime_err)
}

/// A trained model loaded from a checkpoint plus its sidecar metadata.
#[pyclass(unsendable)]
struct Model {
    model: TextClassifier,
    store: ParamStore,
    vocab: Vocabulary,
    meta: ModelMeta,
}

impl Model {
    fn encode_tokens(&self, tokens: &[String]) -> Vec<usize> {
        self.vocab.encode_sentence(tokens)
    }

    fn predict_ids(&self, sides: Vec<Vec<usize>>) -> PyResult<(String, Vec<f64>)> {
        let pass = Pass::eval(&self.store);
        let trees = vec![None; sides.len()];
        let prediction = self.model.predict_sides(&pass, &sides, &trees).map_err(runtime_err)?;
        let label = self
            .meta
            .labels
            .label(prediction.label_index)
            .map_err(runtime_err)?
            .to_string();
        Ok((label, prediction.probs))
    }
}

#[pymethods]
impl Model {
    /// Load from a `.rnsx` checkpoint; `<checkpoint>.meta.json` must sit
    /// beside it.
    #[staticmethod]
    fn load(checkpoint: &str) -> PyResult<Model> {
        let (model, store, meta) = train::load_model(Path::new(checkpoint)).map_err(runtime_err)?;
        let vocab = meta.vocab.clone();
        Ok(Model { model, store, vocab, meta })
    }

    /// Predicted label and class probabilities for one tokenized sentence.
    fn predict(&self, tokens: Vec<String>) -> PyResult<(String, Vec<f64>)> {
        if self.meta.config.task != TaskKind::Single {
            return Err(value_err("this checkpoint is a sentence-pair model; use predict_pair"));
        }
        self.predict_ids(vec![self.encode_tokens(&tokens)])
    }

    /// Predicted label and class probabilities for a sentence pair.
    fn predict_pair(&self, first: Vec<String>, second: Vec<String>) -> PyResult<(String, Vec<f64>)> {
        if self.meta.config.task != TaskKind::Pair {
            return Err(value_err("this checkpoint is a single-sentence model; use predict"));
        }
        self.predict_ids(vec![self.encode_tokens(&first), self.encode_tokens(&second)])
    }

    /// Head array of the maximum spanning tree under the learned potentials
    /// (latent-tree checkpoints only).
    fn parse(&self, tokens: Vec<String>) -> PyResult<Vec<usize>> {
        let ids = self.encode_tokens(&tokens);
        let pass = Pass::eval(&self.store);
        let repr = self.model.encode_sentence(&pass, &ids, None).map_err(runtime_err)?;
        let scores = repr
            .log_potentials
            .ok_or_else(|| value_err("parsing needs a latent-tree checkpoint"))?;
        let arcs = ArcMatrix::from_tensor(&scores).map_err(runtime_err)?;
        let root_mode = self.model.encoder().config().root_mode;
        Ok(inference::cle_decode(&arcs, root_mode).heads().to_vec())
    }

    /// Arc marginals for one sentence (latent-tree checkpoints only).
    fn marginals(&self, tokens: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
        let ids = self.encode_tokens(&tokens);
        let pass = Pass::eval(&self.store);
        let repr = self.model.encode_sentence(&pass, &ids, None).map_err(runtime_err)?;
        let marginals = repr
            .marginals
            .ok_or_else(|| value_err("marginals need a latent-tree checkpoint"))?;
        Ok(arc_matrix_to_rows(&marginals.values()))
    }

    /// Fixed-width sentence vector.
    fn encode(&self, tokens: Vec<String>) -> PyResult<Vec<f64>> {
        let ids = self.encode_tokens(&tokens);
        let pass = Pass::eval(&self.store);
        let repr = self.model.encode_sentence(&pass, &ids, None).map_err(runtime_err)?;
        Ok(repr.sentence.data().to_vec())
    }

    /// Per-word contextual vectors, for variants that produce them.
    fn words_in_context(&self, tokens: Vec<String>) -> PyResult<Option<Vec<Vec<f64>>>> {
        let ids = self.encode_tokens(&tokens);
        let pass = Pass::eval(&self.store);
        let repr = self.model.encode_sentence(&pass, &ids, None).map_err(runtime_err)?;
        Ok(repr.words.map(|w| {
            let cols = w.value().cols();
            w.data().chunks(cols).map(<[f64]>::to_vec).collect()
        }))
    }

    fn labels(&self) -> Vec<String> {
        self.meta.labels.labels().to_vec()
    }

    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.meta.config).map_err(runtime_err)
    }
}

#[pymodule]
fn treern_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tree_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(log_partition, m)?)?;
    m.add_function(wrap_pyfunction!(cle_decode, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_trees, m)?)?;
    m.add_function(wrap_pyfunction!(is_valid_tree, m)?)?;
    m.add_function(wrap_pyfunction!(marginals_from_tree, m)?)?;
    m.add_function(wrap_pyfunction!(approx_randomization_test, m)?)?;
    m.add_function(wrap_pyfunction!(train_from_files, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}

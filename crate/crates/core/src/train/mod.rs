//! Training, evaluation, grid search, significance testing, and analysis
//! dumps.

mod dump;
mod optim;
mod sigtest;

pub use dump::{dump_trees, read_predictions, write_marginals_tsv, write_predictions, DumpStats};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};
pub use sigtest::approx_randomization_test;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    encode_examples, load_pretrained_embeddings, make_batches, DataError, EmbeddingTable,
    EncodedExample, Example, Vocabulary,
};
use crate::encoders::EncoderConfig;
use crate::model::{ModelError, TaskKind, TextClassifier};
use crate::tasks::{LabelSet, Prediction, TaskError};
use crate::tensor::{
    load_checkpoint_into, save_checkpoint, CheckpointError, ParamStore, Pass, TensorError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Inference(#[from] crate::inference::InferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged: first non-finite value produced by operation '{op}' (node {node}) in epoch {epoch}")]
    Diverged { op: String, node: usize, epoch: usize },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Grid-search axes: the Cartesian product of these lists is trained.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GridAxes {
    #[serde(default)]
    pub optimizer: Vec<OptimizerKind>,
    #[serde(default)]
    pub learning_rate: Vec<f64>,
}

fn default_batch_size() -> usize {
    32
}
fn default_max_epochs() -> usize {
    50
}
fn default_patience() -> usize {
    10
}
fn default_validation_size() -> usize {
    500
}
fn default_min_freq() -> u64 {
    1
}
fn default_clip_norm() -> f64 {
    5.0
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_sigtest_rounds() -> usize {
    10_000
}

/// Full training configuration; mirrors the JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub labels: Vec<String>,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    /// Learning rate; when absent the optimizer's default applies
    /// (1e-4 for adam, 0.01 for adagrad).
    #[serde(default)]
    pub learning_rate: Option<f64>,
    /// Dropout rate applied to BiLSTM inputs and outputs during training.
    #[serde(default = "crate::encoders::default_dropout_rate")]
    pub dropout: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Early stopping: epochs without a dev-accuracy improvement.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Validation examples sampled from the training set when no separate
    /// dev file exists.
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    #[serde(default)]
    pub embeddings_path: Option<String>,
    #[serde(default)]
    pub lowercase: bool,
    #[serde(default = "default_min_freq")]
    pub min_freq: u64,
    /// Global gradient-norm clip.
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default)]
    pub grid: Option<GridAxes>,
    #[serde(default = "default_sigtest_rounds")]
    pub sigtest_rounds: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(TrainError::Config("no labels configured".into()));
        }
        if let Some(lr) = self.learning_rate {
            if lr <= 0.0 {
                return Err(TrainError::Config(format!("learning rate {lr} must be positive")));
            }
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::Config("batch size and max epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        let mut encoder = self.encoder.clone();
        encoder.dropout = self.dropout;
        encoder.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn resolved_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or_else(|| self.optimizer.default_learning_rate())
    }

    /// Encoder configuration with the training dropout rate applied.
    pub fn encoder_config(&self) -> EncoderConfig {
        let mut cfg = self.encoder.clone();
        cfg.dropout = self.dropout;
        cfg
    }

    pub fn label_set(&self) -> Result<LabelSet> {
        Ok(LabelSet::new(self.labels.clone())?)
    }
}

/// Independent random streams derived from the master seed, so toggling one
/// consumer (say dropout) does not perturb the others.
#[derive(Debug, Clone, Copy)]
pub enum SeedStream {
    Split,
    Init,
    Dropout,
    Shuffle,
}

/// Derive a substream seed from the master seed (splitmix64).
pub fn seed_stream(master: u64, stream: SeedStream) -> u64 {
    let salt = match stream {
        SeedStream::Split => 1,
        SeedStream::Init => 2,
        SeedStream::Dropout => 3,
        SeedStream::Shuffle => 4,
    };
    let mut z = master.wrapping_add((salt as u64).wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Loaded datasets ready for training.
pub struct Datasets {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Option<Vec<Example>>,
    pub labels: LabelSet,
}

/// Load datasets from a directory using the standard layout: `train.tsv` is
/// required, `dev.tsv` overrides the sampled validation split, `test.tsv` is
/// optional. With supervised trees configured, `<stem>.conllu` (single) or
/// `<stem>.s1.conllu`/`<stem>.s2.conllu` (pair) must sit next to each TSV and
/// match it line for line.
pub fn load_datasets_from_dir(config: &TrainConfig, dir: &Path) -> Result<Datasets> {
    use crate::data::{attach_trees, read_conllu_heads, read_pair_tsv, read_single_sentence_tsv};
    use crate::encoders::TreeMode;

    let labels = config.label_set()?;
    let needs_trees = config.encoder.tree_mode == TreeMode::Supervised;

    let read_split = |stem: &str| -> Result<Option<Vec<Example>>> {
        let tsv = dir.join(format!("{stem}.tsv"));
        if !tsv.exists() {
            return Ok(None);
        }
        let mut examples = match config.task {
            TaskKind::Single => read_single_sentence_tsv(&tsv, &labels)?,
            TaskKind::Pair => read_pair_tsv(&tsv, &labels)?,
        };
        if needs_trees {
            match config.task {
                TaskKind::Single => {
                    let trees = read_conllu_heads(&dir.join(format!("{stem}.conllu")))?;
                    attach_trees(&mut examples, 0, trees)?;
                }
                TaskKind::Pair => {
                    for side in 0..2 {
                        let trees = read_conllu_heads(&dir.join(format!("{stem}.s{}.conllu", side + 1)))?;
                        attach_trees(&mut examples, side, trees)?;
                    }
                }
            }
        }
        Ok(Some(examples))
    };

    let train_full = read_split("train")?.ok_or_else(|| {
        TrainError::Config(format!("no train.tsv in {}", dir.display()))
    })?;
    let explicit_dev = read_split("dev")?;
    let test = read_split("test")?;

    let (train, dev) = match explicit_dev {
        Some(dev) => (train_full, dev),
        None => {
            let split_seed = seed_stream(config.seed, SeedStream::Split);
            crate::data::split_validation(&train_full, config.validation_size, split_seed, false)?
        }
    };
    Ok(Datasets { train, dev, test, labels })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

/// Everything a run reports: per-epoch metrics, the best checkpoint, final
/// test accuracy, wall clock, and the configuration it ran under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub checkpoint_path: Option<String>,
    pub test_accuracy: Option<f64>,
    pub wall_clock_secs: f64,
    pub config: TrainConfig,
}

impl RunReport {
    /// Human-readable aligned table.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:>6}  {:>12}  {:>8}\n", "epoch", "train-loss", "dev-acc"));
        for e in &self.epochs {
            out.push_str(&format!("{:>6}  {:>12.6}  {:>8.4}\n", e.epoch, e.train_loss, e.dev_accuracy));
        }
        out.push_str(&format!(
            "best epoch {} (dev accuracy {:.4})",
            self.best_epoch, self.best_dev_accuracy
        ));
        if let Some(t) = self.test_accuracy {
            out.push_str(&format!("; test accuracy {t:.4}"));
        }
        out.push_str(&format!("; wall clock {:.1}s\n", self.wall_clock_secs));
        out
    }
}

/// Metadata stored next to a parameter checkpoint so a model can be rebuilt
/// for evaluation or analysis.
#[derive(Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub labels: LabelSet,
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    checkpoint.with_file_name(name)
}

pub fn save_meta(checkpoint: &Path, meta: &ModelMeta) -> Result<()> {
    let json = serde_json::to_string_pretty(meta)?;
    fs::write(meta_path(checkpoint), json)?;
    Ok(())
}

pub fn load_meta(checkpoint: &Path) -> Result<ModelMeta> {
    let json = fs::read_to_string(meta_path(checkpoint))?;
    let mut meta: ModelMeta = serde_json::from_str(&json)?;
    meta.vocab.rebuild_index();
    Ok(meta)
}

/// A trained model: parameters, the wiring, and the data mappings.
pub struct TrainOutcome {
    pub report: RunReport,
    pub store: ParamStore,
    pub model: TextClassifier,
    pub vocab: Vocabulary,
    pub labels: LabelSet,
}

/// Rebuild a model from a checkpoint and its sidecar metadata.
pub fn load_model(checkpoint: &Path) -> Result<(TextClassifier, ParamStore, ModelMeta)> {
    let meta = load_meta(checkpoint)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_stream(meta.config.seed, SeedStream::Init));
    let embeddings = EmbeddingTable::random(meta.vocab.len(), meta.config.encoder.embedding_dim, &mut rng);
    let model = TextClassifier::build(
        &mut store,
        &mut rng,
        &meta.config.encoder_config(),
        embeddings,
        meta.labels.len(),
        meta.config.task,
    )?;
    load_checkpoint_into(&mut store, checkpoint)?;
    Ok((model, store, meta))
}

/// Evaluation result with per-example predictions in input order.
pub struct EvalResult {
    pub accuracy: f64,
    pub predictions: Vec<(String, usize, Prediction)>,
}

/// Evaluate with dropout off.
pub fn evaluate(model: &TextClassifier, store: &ParamStore, examples: &[EncodedExample]) -> Result<EvalResult> {
    let mut predictions = Vec::with_capacity(examples.len());
    let mut hits = 0usize;
    for example in examples {
        let pass = Pass::eval(store);
        let out = model.forward_example(&pass, example)?;
        if out.prediction.label_index == example.label {
            hits += 1;
        }
        predictions.push((example.id.clone(), example.label, out.prediction));
    }
    let accuracy = if examples.is_empty() { 0.0 } else { hits as f64 / examples.len() as f64 };
    Ok(EvalResult { accuracy, predictions })
}

/// Train a model. Saves the best-dev checkpoint under `out_dir` when given
/// and reloads it before computing the final test accuracy, so the returned
/// parameters are the best ones seen.
pub fn train(config: &TrainConfig, data: &Datasets, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let labels = data.labels.clone();
    let encoder_cfg = config.encoder_config();

    // vocabulary from the training split only
    let train_sentences: Vec<&[String]> =
        data.train.iter().flat_map(|ex| ex.sentences.iter().map(Vec::as_slice)).collect();
    let mut vocab = Vocabulary::build(train_sentences, config.min_freq, config.lowercase);
    vocab.rebuild_index();

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed_stream(config.seed, SeedStream::Init));
    let embeddings = match &config.embeddings_path {
        Some(path) => {
            let (table, report) =
                load_pretrained_embeddings(Path::new(path), &vocab, encoder_cfg.embedding_dim, &mut init_rng)?;
            log::info!(
                "embeddings: {} pretrained rows, {} random rows ({} duplicates in file)",
                report.hits,
                report.misses,
                report.duplicates
            );
            table
        }
        None => EmbeddingTable::random(vocab.len(), encoder_cfg.embedding_dim, &mut init_rng),
    };

    let mut store = ParamStore::new();
    let model = TextClassifier::build(&mut store, &mut init_rng, &encoder_cfg, embeddings, labels.len(), config.task)?;

    let train_encoded = encode_examples(&data.train, &vocab, &labels)?;
    let dev_encoded = encode_examples(&data.dev, &vocab, &labels)?;
    let test_encoded = data.test.as_ref().map(|t| encode_examples(t, &vocab, &labels)).transpose()?;

    let mut optimizer = Optimizer::new(config.optimizer, config.resolved_learning_rate());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed_stream(config.seed, SeedStream::Shuffle));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed_stream(config.seed, SeedStream::Dropout));

    let checkpoint_path = out_dir.map(|d| d.join("model.rnsx"));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    let mut epochs = Vec::new();
    let mut best_dev = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs_since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train_encoded.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let shuffled: Vec<EncodedExample> = order.iter().map(|&i| train_encoded[i].clone()).collect();

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in make_batches(&shuffled, config.batch_size) {
            for i in 0..batch.len() {
                let example = EncodedExample {
                    id: batch.ids[i].clone(),
                    sides: batch.blocks.iter().map(|b| b.tokens_of(i).to_vec()).collect(),
                    trees: batch.blocks.iter().map(|b| b.tree_of(i)).collect(),
                    label: batch.labels[i],
                };
                let pass_seed = dropout_rng.random::<u64>();
                let pass = Pass::train(&store, config.dropout, ChaCha8Rng::seed_from_u64(pass_seed));
                let out = model.forward_example(&pass, &example)?;
                let loss_value = out.loss.scalar_value()?;
                if !loss_value.is_finite() {
                    let (node, op) = pass.tape().first_nonfinite_op().unwrap_or((0, "loss"));
                    return Err(TrainError::Diverged { op: op.to_string(), node, epoch });
                }
                loss_sum += loss_value;
                loss_count += 1;
                let grads = pass.backward(&out.loss)?;
                store.accumulate(&grads)?;
            }
            store.scale_grads(1.0 / batch.len() as f64);
            clip_global_norm(&mut store, config.clip_norm);
            optimizer.step(&mut store)?;
        }

        let dev_result = evaluate(&model, &store, &dev_encoded)?;
        let train_loss = loss_sum / loss_count.max(1) as f64;
        epochs.push(EpochStats { epoch, train_loss, dev_accuracy: dev_result.accuracy });
        log::info!("epoch {epoch}: train loss {train_loss:.6}, dev accuracy {:.4}", dev_result.accuracy);

        if dev_result.accuracy > best_dev {
            best_dev = dev_result.accuracy;
            best_epoch = epoch;
            epochs_since_best = 0;
            if let Some(path) = &checkpoint_path {
                save_checkpoint(&store, path)?;
                save_meta(
                    path,
                    &ModelMeta { config: config.clone(), vocab: vocab.clone(), labels: labels.clone() },
                )?;
            }
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.patience {
                log::info!("early stop after epoch {epoch} (no improvement for {} epochs)", config.patience);
                break;
            }
        }
    }

    // the best parameters are the run's result
    if let Some(path) = &checkpoint_path {
        load_checkpoint_into(&mut store, path)?;
    }

    let test_accuracy = match &test_encoded {
        Some(test) => Some(evaluate(&model, &store, test)?.accuracy),
        None => None,
    };

    let report = RunReport {
        epochs,
        best_epoch,
        best_dev_accuracy: best_dev,
        checkpoint_path: checkpoint_path.as_ref().map(|p| p.display().to_string()),
        test_accuracy,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    Ok(TrainOutcome { report, store, model, vocab, labels })
}

/// Train every cell of the grid (optimizer x learning rate), returning the
/// best outcome by dev accuracy (ties break to the earlier cell) and every
/// cell's report.
pub fn grid_search(config: &TrainConfig, data: &Datasets, out_dir: Option<&Path>) -> Result<(TrainOutcome, Vec<RunReport>)> {
    let axes = config.grid.clone().unwrap_or_default();
    let optimizers = if axes.optimizer.is_empty() { vec![config.optimizer] } else { axes.optimizer };
    let rates: Vec<Option<f64>> = if axes.learning_rate.is_empty() {
        vec![config.learning_rate]
    } else {
        axes.learning_rate.iter().map(|&r| Some(r)).collect()
    };
    if optimizers.is_empty() || rates.is_empty() {
        return Err(TrainError::Config("empty grid".into()));
    }

    let mut reports = Vec::new();
    let mut best: Option<TrainOutcome> = None;
    let mut cell = 0usize;
    for &optimizer in &optimizers {
        for &learning_rate in &rates {
            let mut cell_config = config.clone();
            cell_config.optimizer = optimizer;
            cell_config.learning_rate = learning_rate;
            cell_config.grid = None;
            let cell_dir = out_dir.map(|d| d.join(format!("grid-{cell}")));
            log::info!(
                "grid cell {cell}: optimizer {optimizer:?}, learning rate {}",
                cell_config.resolved_learning_rate()
            );
            let outcome = train(&cell_config, data, cell_dir.as_deref())?;
            reports.push(outcome.report.clone());
            let better = match &best {
                None => true,
                Some(b) => outcome.report.best_dev_accuracy > b.report.best_dev_accuracy,
            };
            if better {
                best = Some(outcome);
            }
            cell += 1;
        }
    }
    Ok((best.expect("grid has at least one cell"), reports))
}

//! The full text classifier: embedding table, sentence encoder, and softmax
//! head, with the parameters of all three living in one [`ParamStore`].

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EmbeddingTable, EncodedExample};
use crate::encoders::{EncoderConfig, EncoderError, SentenceEncoder, SentenceRepr};
use crate::inference::DependencyTree;
use crate::tasks::{cross_entropy, pair_features, predict, ClassifierHead, Prediction, TaskError};
use crate::tensor::{ParamStore, Pass, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("example has {got} sentence sides, model expects {expected}")]
    SideCount { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Single,
    Pair,
}

impl TaskKind {
    pub fn sides(&self) -> usize {
        match self {
            TaskKind::Single => 1,
            TaskKind::Pair => 2,
        }
    }
}

const EMBEDDING_PARAM: &str = "embed/table";

/// Encoder plus classification head over one or two sentences.
pub struct TextClassifier {
    encoder: SentenceEncoder,
    head: ClassifierHead,
    task: TaskKind,
    num_labels: usize,
    vocab_size: usize,
}

/// Everything the forward pass produces for one example.
pub struct ModelOutput {
    pub loss: Tensor,
    pub prediction: Prediction,
    pub reprs: Vec<SentenceRepr>,
}

impl TextClassifier {
    /// Register all parameters and return the wired model. The embedding
    /// table is trainable; pass a pretrained table to start from loaded rows.
    pub fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        config: &EncoderConfig,
        embeddings: EmbeddingTable,
        num_labels: usize,
        task: TaskKind,
    ) -> Result<TextClassifier> {
        let vocab_size = embeddings.matrix.rows();
        assert_eq!(
            embeddings.matrix.cols(),
            config.embedding_dim,
            "embedding table width must match the configured embedding dimension"
        );
        store.define(EMBEDDING_PARAM, embeddings.matrix)?;
        let encoder = SentenceEncoder::build(store, rng, "enc", config)?;
        let sentence_dim = config.sentence_dim();
        let q_dim = match task {
            TaskKind::Single => sentence_dim,
            TaskKind::Pair => 4 * sentence_dim,
        };
        // head hidden width defaults to the sentence-vector width
        let head = ClassifierHead::build(store, rng, "head", q_dim, sentence_dim, num_labels)?;
        Ok(TextClassifier { encoder, head, task, num_labels, vocab_size })
    }

    pub fn encoder(&self) -> &SentenceEncoder {
        &self.encoder
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Embed token indices as a [n x d] matrix of trainable rows.
    pub fn embed(&self, pass: &Pass, tokens: &[usize]) -> Result<Tensor> {
        Ok(pass.param(EMBEDDING_PARAM)?.gather_rows(tokens)?)
    }

    /// Encode one sentence (token indices) into its representation.
    pub fn encode_sentence(
        &self,
        pass: &Pass,
        tokens: &[usize],
        tree: Option<&DependencyTree>,
    ) -> Result<SentenceRepr> {
        let embedded = self.embed(pass, tokens)?;
        Ok(self.encoder.encode(pass, &embedded, tree)?)
    }

    /// Logits and per-side representations for arbitrary sentence sides.
    pub fn logits(
        &self,
        pass: &Pass,
        sides: &[Vec<usize>],
        trees: &[Option<DependencyTree>],
    ) -> Result<(Tensor, Vec<SentenceRepr>)> {
        if sides.len() != self.task.sides() {
            return Err(ModelError::SideCount { expected: self.task.sides(), got: sides.len() });
        }
        let mut reprs = Vec::with_capacity(sides.len());
        for (side, tokens) in sides.iter().enumerate() {
            let tree = trees.get(side).and_then(Option::as_ref);
            reprs.push(self.encode_sentence(pass, tokens, tree)?);
        }
        let q = match self.task {
            TaskKind::Single => reprs[0].sentence.clone(),
            TaskKind::Pair => pair_features(&reprs[0].sentence, &reprs[1].sentence)?,
        };
        let logits = self.head.forward(pass, &q)?;
        Ok((logits, reprs))
    }

    /// Label-free prediction for raw token-index sides.
    pub fn predict_sides(
        &self,
        pass: &Pass,
        sides: &[Vec<usize>],
        trees: &[Option<DependencyTree>],
    ) -> Result<Prediction> {
        let (logits, _) = self.logits(pass, sides, trees)?;
        Ok(predict(&logits)?)
    }

    /// Full forward pass for one example: encode all sides, build the feature
    /// vector, and return loss, prediction, and the per-side representations.
    pub fn forward_example(&self, pass: &Pass, example: &EncodedExample) -> Result<ModelOutput> {
        let (logits, reprs) = self.logits(pass, &example.sides, &example.trees)?;
        let loss = cross_entropy(&logits, example.label)?;
        let prediction = predict(&logits)?;
        Ok(ModelOutput { loss, prediction, reprs })
    }
}

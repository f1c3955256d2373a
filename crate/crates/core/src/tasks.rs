//! Classification heads, pair features, losses, and metrics.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::Linear;
use crate::tensor::{ParamStore, Pass, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("unknown label '{0}'")]
    UnknownLabel(String),
    #[error("label index {index} out of range for {count} labels")]
    LabelIndex { index: usize, count: usize },
    #[error("duplicate label '{0}'")]
    DuplicateLabel(String),
    #[error("accuracy over empty prediction lists")]
    Empty,
    #[error("prediction and gold lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, TaskError>;

/// Ordered set of label strings with stable index assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<LabelSet> {
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(TaskError::DuplicateLabel(l.clone()));
            }
        }
        Ok(LabelSet { labels })
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| TaskError::UnknownLabel(label.to_string()))
    }

    pub fn label(&self, index: usize) -> Result<&str> {
        self.labels
            .get(index)
            .map(String::as_str)
            .ok_or(TaskError::LabelIndex { index, count: self.labels.len() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// q = [s1 ; s2 ; s1 * s2 ; |s1 - s2|] for sentence-pair classification.
pub fn pair_features(s1: &Tensor, s2: &Tensor) -> Result<Tensor> {
    if s1.shape() != s2.shape() {
        return Err(TaskError::Tensor(TensorError::ShapeMismatch {
            op: "pair_features",
            left: s1.shape().to_vec(),
            right: s2.shape().to_vec(),
        }));
    }
    let product = s1.mul(s2)?;
    let difference = s1.sub(s2)?.abs();
    Ok(Tensor::concat(&[s1, s2, &product, &difference], 0)?)
}

/// Softmax classifier over a one-hidden-layer MLP: p(Y|q) = softmax(W phi(q) + b).
pub struct ClassifierHead {
    hidden: Linear,
    output: Linear,
    pub num_labels: usize,
}

impl ClassifierHead {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
        num_labels: usize,
    ) -> Result<ClassifierHead> {
        let hidden = Linear::build(store, rng, &format!("{prefix}/hidden"), in_dim, hidden_dim)?;
        let output = Linear::build(store, rng, &format!("{prefix}/output"), hidden_dim, num_labels)?;
        Ok(ClassifierHead { hidden, output, num_labels })
    }

    /// Logits for a feature vector `q`.
    pub fn forward(&self, pass: &Pass, q: &Tensor) -> Result<Tensor> {
        let row = q.reshape(vec![1, q.value().len()])?;
        let phi = self.hidden.forward(pass, &row)?.relu();
        Ok(self.output.forward(pass, &phi)?.reshape(vec![self.num_labels])?)
    }
}

/// A probability distribution over labels plus its argmax.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub label_index: usize,
}

/// Turn logits into a prediction (softmax probabilities, first argmax).
pub fn predict(logits: &Tensor) -> Result<Prediction> {
    let probs = logits.softmax(None)?;
    let data = probs.data();
    let mut best = 0;
    for (i, v) in data.iter().enumerate() {
        if *v > data[best] {
            best = i;
        }
    }
    Ok(Prediction { probs: data.to_vec(), label_index: best })
}

/// Cross-entropy -log p(gold), computed in log space from shifted logits.
pub fn cross_entropy(logits: &Tensor, gold: usize) -> Result<Tensor> {
    let count = logits.value().len();
    if gold >= count {
        return Err(TaskError::LabelIndex { index: gold, count });
    }
    Ok(logits.log_softmax(None)?.element(gold)?.neg())
}

/// Fraction of positions where the predicted label index matches the gold.
pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(TaskError::LengthMismatch(predictions.len(), golds.len()));
    }
    if predictions.is_empty() {
        return Err(TaskError::Empty);
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predictions.len() as f64)
}

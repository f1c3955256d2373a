//! Corpus ingestion: vocabularies, TSV and treebank readers, pretrained
//! embeddings, validation splits, batching and padding.

mod batch;
mod embeddings;
mod readers;
mod synthetic;

pub use batch::{make_batches, split_validation, Batch, PaddedBlock, HEAD_PAD};
pub use embeddings::{load_pretrained_embeddings, EmbeddingLoadReport, EmbeddingTable};
pub use readers::{read_conllu_heads, read_pair_tsv, read_single_sentence_tsv};
pub use synthetic::{keyword_position, synthetic_keyword_corpus, SyntheticSpec};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{DependencyTree, InferenceError};
use crate::tasks::{LabelSet, TaskError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("validation size {k} out of range for {total} training examples")]
    BadSplit { k: usize, total: usize },
    #[error("{expected} examples but {got} trees for positional matching")]
    TreeCount { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Reserved vocabulary index for padding.
pub const PAD: usize = 0;
/// Reserved vocabulary index for unknown tokens.
pub const UNK: usize = 1;

/// Token-to-index mapping with reserved padding and unknown entries and a
/// frequency table. Indices are dense and assigned in first-appearance order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    freq: Vec<u64>,
    lowercase: bool,
}

impl Vocabulary {
    /// Build from tokenized sentences, keeping tokens seen at least
    /// `min_freq` times.
    pub fn build<'a, I>(sentences: I, min_freq: u64, lowercase: bool) -> Vocabulary
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for sentence in sentences {
            for token in sentence {
                let token = if lowercase { token.to_lowercase() } else { token.clone() };
                match counts.get_mut(&token) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(token.clone(), 1);
                        order.push(token);
                    }
                }
            }
        }
        let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
        let mut freq = vec![0, 0];
        for token in order {
            let c = counts[&token];
            if c >= min_freq {
                tokens.push(token);
                freq.push(c);
            }
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, freq, lowercase }
    }

    /// Rebuild the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn encode(&self, token: &str) -> usize {
        let key = if self.lowercase { token.to_lowercase() } else { token.to_string() };
        *self.index.get(&key).unwrap_or(&UNK)
    }

    pub fn encode_sentence(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }

    pub fn decode(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn frequency(&self, index: usize) -> u64 {
        self.freq[index]
    }
}

/// One labeled example: one sentence or a pair, with optional supervised
/// dependency trees aligned per sentence.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub label: String,
    pub trees: Vec<Option<DependencyTree>>,
}

impl Example {
    pub fn single(id: String, tokens: Vec<String>, label: String) -> Example {
        Example { id, sentences: vec![tokens], label, trees: vec![None] }
    }

    pub fn pair(id: String, first: Vec<String>, second: Vec<String>, label: String) -> Example {
        Example { id, sentences: vec![first, second], label, trees: vec![None, None] }
    }
}

/// An example with tokens and label mapped to indices.
#[derive(Debug, Clone)]
pub struct EncodedExample {
    pub id: String,
    pub sides: Vec<Vec<usize>>,
    pub trees: Vec<Option<DependencyTree>>,
    pub label: usize,
}

/// Encode examples against a vocabulary and label set.
pub fn encode_examples(
    examples: &[Example],
    vocab: &Vocabulary,
    labels: &LabelSet,
) -> Result<Vec<EncodedExample>> {
    examples
        .iter()
        .map(|ex| {
            Ok(EncodedExample {
                id: ex.id.clone(),
                sides: ex.sentences.iter().map(|s| vocab.encode_sentence(s)).collect(),
                trees: ex.trees.clone(),
                label: labels.index_of(&ex.label)?,
            })
        })
        .collect()
}

/// Attach supervised trees to examples positionally (tree i goes to the
/// `side`-th sentence of example i). Tree lengths are validated.
pub fn attach_trees(examples: &mut [Example], side: usize, trees: Vec<DependencyTree>) -> Result<()> {
    if examples.len() != trees.len() {
        return Err(DataError::TreeCount { expected: examples.len(), got: trees.len() });
    }
    for (ex, tree) in examples.iter_mut().zip(trees) {
        if ex.sentences[side].len() != tree.len() {
            return Err(DataError::Format {
                path: String::new(),
                line: 0,
                message: format!(
                    "example {}: tree has {} words but sentence has {}",
                    ex.id,
                    tree.len(),
                    ex.sentences[side].len()
                ),
            });
        }
        ex.trees[side] = Some(tree);
    }
    Ok(())
}

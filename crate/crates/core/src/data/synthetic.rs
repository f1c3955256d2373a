//! Synthetic keyword-classification corpus.
//!
//! Each sentence contains exactly one keyword drawn from a small set of
//! label-determining tokens, surrounded by filler words that carry no label
//! information. A tree-learning encoder that discovers the keyword should
//! both classify well and pull the keyword toward the root of its induced
//! trees, which makes this corpus a root-attraction diagnostic.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tasks::LabelSet;

use super::Example;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 4,
            train_size: 400,
            test_size: 200,
            min_len: 5,
            max_len: 9,
            filler_vocab: 30,
            seed: 0,
        }
    }
}

/// Generate train and test splits plus the label set. The keyword position is
/// uniform over the sentence; fillers are sampled independently of the label.
pub fn synthetic_keyword_corpus(spec: &SyntheticSpec) -> (Vec<Example>, Vec<Example>, LabelSet) {
    assert!(spec.num_classes >= 2 && spec.min_len >= 2 && spec.max_len >= spec.min_len);
    let labels: Vec<String> = (0..spec.num_classes).map(|c| format!("class{c}")).collect();
    let label_set = LabelSet::new(labels.clone()).expect("generated labels are unique");

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut generate = |count: usize, tag: &str| -> Vec<Example> {
        (0..count)
            .map(|i| {
                let class = rng.random_range(0..spec.num_classes);
                let len = rng.random_range(spec.min_len..=spec.max_len);
                let key_pos = rng.random_range(0..len);
                let tokens: Vec<String> = (0..len)
                    .map(|p| {
                        if p == key_pos {
                            format!("key{class}")
                        } else {
                            format!("filler{}", rng.random_range(0..spec.filler_vocab))
                        }
                    })
                    .collect();
                Example::single(format!("{tag}-{i}"), tokens, labels[class].clone())
            })
            .collect()
    };

    let train = generate(spec.train_size, "train");
    let test = generate(spec.test_size, "test");
    (train, test, label_set)
}

/// Position (0-based) of the keyword token in a sentence, if present.
pub fn keyword_position(tokens: &[String]) -> Option<usize> {
    tokens.iter().position(|t| t.starts_with("key"))
}

//! Validation splits, batching, and padding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::inference::DependencyTree;

use super::{DataError, EncodedExample, Example, Result, PAD};

/// Sentinel filling padded positions of supervised head arrays.
pub const HEAD_PAD: usize = usize::MAX;

/// One padded sentence side of a batch. The mask is 1 exactly on real tokens;
/// padded positions never enter encoder aggregations or marginal
/// computations (sentences are processed at their true lengths).
#[derive(Debug, Clone)]
pub struct PaddedBlock {
    pub tokens: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
    pub mask: Vec<Vec<f64>>,
    /// Per-example supervised head arrays, padded with [`HEAD_PAD`].
    pub heads: Vec<Option<Vec<usize>>>,
}

impl PaddedBlock {
    fn from_sides(sides: Vec<&[usize]>, trees: Vec<&Option<DependencyTree>>) -> PaddedBlock {
        let width = sides.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut tokens = Vec::with_capacity(sides.len());
        let mut lengths = Vec::with_capacity(sides.len());
        let mut mask = Vec::with_capacity(sides.len());
        let mut heads = Vec::with_capacity(sides.len());
        for (side, tree) in sides.into_iter().zip(trees) {
            let mut row = side.to_vec();
            row.resize(width, PAD);
            let mut m = vec![1.0; side.len()];
            m.resize(width, 0.0);
            tokens.push(row);
            lengths.push(side.len());
            mask.push(m);
            heads.push(tree.as_ref().map(|t| {
                let mut h = t.heads().to_vec();
                h.resize(width, HEAD_PAD);
                h
            }));
        }
        PaddedBlock { tokens, lengths, mask, heads }
    }

    /// True tokens of example `i`, without padding.
    pub fn tokens_of(&self, i: usize) -> &[usize] {
        &self.tokens[i][..self.lengths[i]]
    }

    /// Supervised tree of example `i`, reconstructed from the padded row.
    pub fn tree_of(&self, i: usize) -> Option<DependencyTree> {
        self.heads[i].as_ref().map(|h| {
            DependencyTree::new(h[..self.lengths[i]].to_vec()).expect("validated before batching")
        })
    }
}

/// A batch of padded examples: one block per sentence side plus label indices.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<String>,
    pub blocks: Vec<PaddedBlock>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Group encoded examples into padded batches, preserving order.
pub fn make_batches(examples: &[EncodedExample], batch_size: usize) -> Vec<Batch> {
    assert!(batch_size > 0, "batch size must be positive");
    examples
        .chunks(batch_size)
        .map(|chunk| {
            let sides = chunk.first().map_or(1, |ex| ex.sides.len());
            let blocks = (0..sides)
                .map(|s| {
                    PaddedBlock::from_sides(
                        chunk.iter().map(|ex| ex.sides[s].as_slice()).collect(),
                        chunk.iter().map(|ex| &ex.trees[s]).collect(),
                    )
                })
                .collect();
            Batch {
                ids: chunk.iter().map(|ex| ex.id.clone()).collect(),
                blocks,
                labels: chunk.iter().map(|ex| ex.label).collect(),
            }
        })
        .collect()
}

/// Deterministically split off `k` validation examples. The two halves are
/// disjoint and keep their original relative order. `k = 0` is rejected
/// unless explicitly allowed.
pub fn split_validation(
    examples: &[Example],
    k: usize,
    seed: u64,
    allow_empty_dev: bool,
) -> Result<(Vec<Example>, Vec<Example>)> {
    if k >= examples.len() || (k == 0 && !allow_empty_dev) {
        return Err(DataError::BadSplit { k, total: examples.len() });
    }
    let mut indices: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut dev_idx: Vec<usize> = indices[..k].to_vec();
    let mut train_idx: Vec<usize> = indices[k..].to_vec();
    dev_idx.sort_unstable();
    train_idx.sort_unstable();
    let dev = dev_idx.iter().map(|&i| examples[i].clone()).collect();
    let train = train_idx.iter().map(|&i| examples[i].clone()).collect();
    Ok((train, dev))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: usize, len: usize) -> Example {
        Example::single(
            id.to_string(),
            (0..len).map(|i| format!("w{i}")).collect(),
            "a".to_string(),
        )
    }

    fn encoded(id: usize, tokens: Vec<usize>) -> EncodedExample {
        EncodedExample { id: id.to_string(), sides: vec![tokens], trees: vec![None], label: 0 }
    }

    #[test]
    fn padding_and_masks() {
        let examples = vec![encoded(0, vec![2, 3, 4]), encoded(1, vec![5, 6, 7, 8, 9])];
        let batches = make_batches(&examples, 2);
        assert_eq!(batches.len(), 1);
        let block = &batches[0].blocks[0];
        assert_eq!(block.tokens[0], vec![2, 3, 4, PAD, PAD]);
        assert_eq!(block.mask[0], vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(block.mask[1], vec![1.0; 5]);
        assert_eq!(block.tokens_of(0), &[2, 3, 4]);
    }

    #[test]
    fn batch_of_one_has_no_padding() {
        let examples = vec![encoded(0, vec![2, 3])];
        let batches = make_batches(&examples, 4);
        assert_eq!(batches[0].blocks[0].tokens[0].len(), 2);
    }

    #[test]
    fn head_arrays_padded_with_sentinel() {
        let mut ex = encoded(0, vec![2, 3]);
        ex.trees = vec![Some(DependencyTree::new(vec![0, 1]).unwrap())];
        let longer = encoded(1, vec![4, 5, 6]);
        let batches = make_batches(&[ex, longer], 2);
        let block = &batches[0].blocks[0];
        assert_eq!(block.heads[0].as_ref().unwrap(), &vec![0, 1, HEAD_PAD]);
        assert_eq!(block.tree_of(0).unwrap().heads(), &[0, 1]);
        assert!(block.tree_of(1).is_none());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let examples: Vec<Example> = (0..100).map(|i| example(i, 3)).collect();
        let (train_a, dev_a) = split_validation(&examples, 10, 7, false).unwrap();
        let (train_b, dev_b) = split_validation(&examples, 10, 7, false).unwrap();
        assert_eq!(train_a.len(), 90);
        assert_eq!(dev_a.len(), 10);
        let ids = |v: &[Example]| v.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&train_a), ids(&train_b));
        assert_eq!(ids(&dev_a), ids(&dev_b));
        // disjoint
        for d in &dev_a {
            assert!(!train_a.iter().any(|t| t.id == d.id));
        }
    }

    #[test]
    fn split_rejects_bad_sizes() {
        let examples: Vec<Example> = (0..5).map(|i| example(i, 2)).collect();
        assert!(split_validation(&examples, 5, 0, false).is_err());
        assert!(split_validation(&examples, 0, 0, false).is_err());
        assert!(split_validation(&examples, 0, 0, true).is_ok());
    }
}

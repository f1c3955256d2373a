//! Brute-force enumeration oracles for small sentences.
//!
//! These deliberately avoid the Laplacian machinery: partition functions,
//! marginals, and best trees are computed by generating every candidate head
//! array and filtering with the validity check, so they can arbitrate the
//! correctness of the O(n^3) implementations.

use super::{is_valid_tree, ArcMatrix, DependencyTree, InferenceError, Result, RootMode};

/// Hard cap on the enumerable sentence length: (n+1)^n candidate head arrays.
pub const MAX_ENUMERATION_LEN: usize = 8;

/// All spanning arborescences rooted at 0 over n words, filtered to a single
/// root attachment when requested.
pub fn enumerate_trees(n: usize, mode: RootMode) -> Result<Vec<DependencyTree>> {
    if n == 0 {
        return Err(InferenceError::EmptySentence);
    }
    if n > MAX_ENUMERATION_LEN {
        return Err(InferenceError::TooLong { n, limit: MAX_ENUMERATION_LEN });
    }
    let mut trees = Vec::new();
    let mut heads = vec![0usize; n];
    loop {
        if is_valid_tree(&heads, mode) {
            trees.push(DependencyTree::new_unchecked(heads.clone()));
        }
        // odometer over head assignments in [0..=n]^n
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(trees);
            }
            heads[pos] += 1;
            if heads[pos] <= n {
                break;
            }
            heads[pos] = 0;
            pos += 1;
        }
    }
}

fn tree_log_weight(log_psi: impl Fn(usize, usize) -> f64, heads: &[usize]) -> f64 {
    heads.iter().enumerate().map(|(i, &h)| log_psi(h, i + 1)).sum()
}

/// log of the summed potential products over all valid trees, via log-sum-exp.
pub fn brute_force_log_partition(psi: &ArcMatrix, mode: RootMode) -> f64 {
    let trees = enumerate_trees(psi.n(), mode).expect("oracle inputs stay within the enumeration cap");
    let log_weights: Vec<f64> = trees
        .iter()
        .map(|t| tree_log_weight(|h, m| psi.get(h, m).ln(), t.heads()))
        .collect();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + log_weights.iter().map(|lw| (lw - max).exp()).sum::<f64>().ln()
}

/// Exact arc marginals by enumerating and normalizing every valid tree.
pub fn brute_force_marginals(psi: &ArcMatrix, mode: RootMode) -> ArcMatrix {
    let n = psi.n();
    let trees = enumerate_trees(n, mode).expect("oracle inputs stay within the enumeration cap");
    let log_weights: Vec<f64> = trees
        .iter()
        .map(|t| tree_log_weight(|h, m| psi.get(h, m).ln(), t.heads()))
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
    marginals
}

/// The maximum-scoring valid tree and its score, by exhaustive search.
pub fn brute_force_best(scores: &ArcMatrix, mode: RootMode) -> (DependencyTree, f64) {
    let trees = enumerate_trees(scores.n(), mode).expect("oracle inputs stay within the enumeration cap");
    trees
        .into_iter()
        .map(|t| {
            let s = super::cle::tree_score(scores, t.heads());
            (t, s)
        })
        .max_by(|(_, a), (_, b)| a.total_cmp(b))
        .expect("at least one valid tree exists for n >= 1")
}

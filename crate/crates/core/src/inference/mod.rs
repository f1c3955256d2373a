//! Exact first-order inference over dependency trees.
//!
//! Sentences of n words have candidate arcs D = {(h, m) | h in 0..=n,
//! m in 1..=n, h != m}, where node 0 is the artificial root. Edge-factored
//! potentials define a distribution over spanning arborescences rooted at 0;
//! the matrix-tree theorem gives the partition function as a determinant and
//! the arc marginals from the inverse of the same Laplacian, all in O(n^3)
//! and differentiable with respect to the potentials.

mod cle;
mod enumerate;

pub use cle::{cle_decode, tree_score};
pub use enumerate::{
    brute_force_best, brute_force_log_partition, brute_force_marginals, enumerate_trees,
    MAX_ENUMERATION_LEN,
};

use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorData, TensorError};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("degenerate tree distribution: {0}")]
    Degenerate(TensorError),
    #[error("invalid dependency tree {heads:?}")]
    InvalidTree { heads: Vec<usize> },
    #[error("refusing to enumerate trees for n = {n} (limit {limit})")]
    TooLong { n: usize, limit: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, InferenceError>;

/// Whether the artificial root may head one word or arbitrarily many.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMode {
    #[default]
    MultiRoot,
    SingleRoot,
}

/// Dense matrix over the candidate arcs: rows are heads 0..=n, columns are
/// modifiers 1..=n. Entries with h == m are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ArcMatrix {
    pub fn zeros(n: usize) -> ArcMatrix {
        ArcMatrix { n, data: vec![0.0; (n + 1) * n] }
    }

    /// Reinterpret a [(n+1) x n] tensor value as an arc matrix.
    pub fn from_tensor(t: &TensorData) -> Result<ArcMatrix> {
        if t.rank() != 2 || t.rows() != t.cols() + 1 || t.cols() == 0 {
            return Err(InferenceError::Tensor(TensorError::InvalidArgument {
                op: "from_tensor",
                message: format!("expected shape [n+1, n], got {:?}", t.shape()),
            }));
        }
        Ok(ArcMatrix { n: t.cols(), data: t.data().to_vec() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Score of arc h -> m, with h in 0..=n and m in 1..=n.
    pub fn get(&self, h: usize, m: usize) -> f64 {
        debug_assert!(h <= self.n && (1..=self.n).contains(&m) && h != m);
        self.data[h * self.n + (m - 1)]
    }

    pub fn set(&mut self, h: usize, m: usize, v: f64) {
        debug_assert!(h <= self.n && (1..=self.n).contains(&m) && h != m);
        self.data[h * self.n + (m - 1)] = v;
    }

    pub fn to_tensor_data(&self) -> TensorData {
        TensorData::new(vec![self.n + 1, self.n], self.data.clone()).expect("sizes agree")
    }
}

/// Strictly positive arc potentials as a differentiable [(n+1) x n] tensor.
#[derive(Clone)]
pub struct EdgePotentials {
    n: usize,
    psi: Tensor,
}

impl EdgePotentials {
    /// Wrap a potential tensor, checking that every defined arc entry is
    /// strictly positive and finite (h == m entries are ignored).
    pub fn new(psi: Tensor) -> Result<EdgePotentials> {
        let v = psi.value();
        if v.rank() != 2 || v.rows() != v.cols() + 1 || v.cols() == 0 {
            return Err(InferenceError::Tensor(TensorError::InvalidArgument {
                op: "edge_potentials",
                message: format!("expected shape [n+1, n], got {:?}", v.shape()),
            }));
        }
        let n = v.cols();
        for h in 0..=n {
            for m in 1..=n {
                if h == m {
                    continue;
                }
                let x = v.at(h, m - 1);
                if !(x > 0.0 && x.is_finite()) {
                    return Err(InferenceError::Tensor(TensorError::InvalidArgument {
                        op: "edge_potentials",
                        message: format!("potential ({h} -> {m}) = {x} is not strictly positive and finite"),
                    }));
                }
            }
        }
        Ok(EdgePotentials { n, psi })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tensor(&self) -> &Tensor {
        &self.psi
    }

    pub fn values(&self) -> ArcMatrix {
        ArcMatrix { n: self.n, data: self.psi.data().to_vec() }
    }
}

/// Arc attachment probabilities p(h -> m | x) as a [(n+1) x n] tensor.
#[derive(Clone)]
pub struct MarginalMatrix {
    n: usize,
    p: Tensor,
}

impl MarginalMatrix {
    /// Wrap a [(n+1) x n] tensor of attachment probabilities. Only the shape
    /// is checked here; see [`MarginalMatrix::check_invariants`].
    pub fn from_tensor(p: Tensor) -> Result<MarginalMatrix> {
        let v = p.value();
        if v.rank() != 2 || v.rows() != v.cols() + 1 || v.cols() == 0 {
            return Err(InferenceError::Tensor(TensorError::InvalidArgument {
                op: "marginal_matrix",
                message: format!("expected shape [n+1, n], got {:?}", v.shape()),
            }));
        }
        let n = v.cols();
        Ok(MarginalMatrix { n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tensor(&self) -> &Tensor {
        &self.p
    }

    pub fn values(&self) -> ArcMatrix {
        ArcMatrix { n: self.n, data: self.p.data().to_vec() }
    }

    /// Probability of arc h -> m.
    pub fn get(&self, h: usize, m: usize) -> f64 {
        debug_assert!(h <= self.n && (1..=self.n).contains(&m) && h != m);
        self.p.data()[h * self.n + (m - 1)]
    }

    /// Check the distribution invariants within `tol`: entries in [0, 1],
    /// each modifier's head probabilities summing to one, and (single-root)
    /// the root's outgoing mass summing to one.
    pub fn check_invariants(&self, mode: RootMode, tol: f64) -> bool {
        let n = self.n;
        for h in 0..=n {
            for m in 1..=n {
                if h == m {
                    continue;
                }
                let p = self.get(h, m);
                if !(-tol..=1.0 + tol).contains(&p) {
                    return false;
                }
            }
        }
        for m in 1..=n {
            let total: f64 = (0..=n).filter(|&h| h != m).map(|h| self.get(h, m)).sum();
            if (total - 1.0).abs() > tol {
                return false;
            }
        }
        if mode == RootMode::SingleRoot {
            let root_total: f64 = (1..=n).map(|m| self.get(0, m)).sum();
            if (root_total - 1.0).abs() > tol {
                return false;
            }
        }
        true
    }
}

/// A dependency tree as a head array: `heads[i]` is the head of word i+1,
/// with 0 denoting the artificial root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    heads: Vec<usize>,
}

impl DependencyTree {
    /// Build from a head array, validating the arborescence invariants
    /// (multi-root attachments allowed).
    pub fn new(heads: Vec<usize>) -> Result<DependencyTree> {
        if !is_valid_tree(&heads, RootMode::MultiRoot) {
            return Err(InferenceError::InvalidTree { heads });
        }
        Ok(DependencyTree { heads })
    }

    pub(crate) fn new_unchecked(heads: Vec<usize>) -> DependencyTree {
        debug_assert!(is_valid_tree(&heads, RootMode::MultiRoot));
        DependencyTree { heads }
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head of word m (1-based).
    pub fn head_of(&self, m: usize) -> usize {
        self.heads[m - 1]
    }

    pub fn contains_arc(&self, h: usize, m: usize) -> bool {
        (1..=self.heads.len()).contains(&m) && self.heads[m - 1] == h
    }
}

/// True iff the head array forms a spanning arborescence rooted at 0; under
/// [`RootMode::SingleRoot`] the root must additionally head exactly one word.
pub fn is_valid_tree(heads: &[usize], mode: RootMode) -> bool {
    let n = heads.len();
    if n == 0 {
        return false;
    }
    for (i, &h) in heads.iter().enumerate() {
        if h > n || h == i + 1 {
            return false;
        }
    }
    for start in 1..=n {
        let mut node = start;
        let mut steps = 0;
        while node != 0 {
            node = heads[node - 1];
            steps += 1;
            if steps > n {
                return false; // cycle
            }
        }
    }
    if mode == RootMode::SingleRoot && heads.iter().filter(|&&h| h == 0).count() != 1 {
        return false;
    }
    true
}

fn check_psi_shape(psi: &Tensor) -> Result<usize> {
    let v = psi.value();
    if v.rank() != 2 || v.rows() != v.cols() + 1 {
        return Err(InferenceError::Tensor(TensorError::InvalidArgument {
            op: "build_laplacian",
            message: format!("expected potentials of shape [n+1, n], got {:?}", v.shape()),
        }));
    }
    if v.cols() == 0 {
        return Err(InferenceError::EmptySentence);
    }
    Ok(v.cols())
}

/// Triples assembling the (modified) Laplacian from the flat potential matrix.
fn laplacian_triples(n: usize, mode: RootMode) -> Vec<(usize, usize, f64)> {
    let mut triples = Vec::new();
    let psi_idx = |h: usize, m: usize| h * n + (m - 1);
    let l_idx = |i: usize, j: usize| (i - 1) * n + (j - 1);
    match mode {
        RootMode::MultiRoot => {
            // L[m,m] = psi(0,m) + sum_h psi(h,m);  L[h,m] = -psi(h,m)
            for m in 1..=n {
                triples.push((l_idx(m, m), psi_idx(0, m), 1.0));
                for h in 1..=n {
                    if h == m {
                        continue;
                    }
                    triples.push((l_idx(m, m), psi_idx(h, m), 1.0));
                    triples.push((l_idx(h, m), psi_idx(h, m), -1.0));
                }
            }
        }
        RootMode::SingleRoot => {
            // Row 1 holds the root scores; the remaining rows form the
            // word-only Laplacian.
            for m in 1..=n {
                triples.push((l_idx(1, m), psi_idx(0, m), 1.0));
                for h in 1..=n {
                    if h == m {
                        continue;
                    }
                    if m != 1 {
                        triples.push((l_idx(m, m), psi_idx(h, m), 1.0));
                    }
                    if h != 1 {
                        triples.push((l_idx(h, m), psi_idx(h, m), -1.0));
                    }
                }
            }
        }
    }
    triples
}

/// Triples turning Laplacian-inverse entries into the per-arc factors that,
/// multiplied elementwise with the potentials, yield the marginals.
fn marginal_factor_triples(n: usize, mode: RootMode) -> Vec<(usize, usize, f64)> {
    let mut triples = Vec::new();
    let q_idx = |h: usize, m: usize| h * n + (m - 1);
    let b_idx = |i: usize, j: usize| (i - 1) * n + (j - 1);
    match mode {
        RootMode::MultiRoot => {
            for m in 1..=n {
                triples.push((q_idx(0, m), b_idx(m, m), 1.0));
                for h in 1..=n {
                    if h == m {
                        continue;
                    }
                    triples.push((q_idx(h, m), b_idx(m, m), 1.0));
                    triples.push((q_idx(h, m), b_idx(m, h), -1.0));
                }
            }
        }
        RootMode::SingleRoot => {
            for m in 1..=n {
                triples.push((q_idx(0, m), b_idx(m, 1), 1.0));
                for h in 1..=n {
                    if h == m {
                        continue;
                    }
                    if m != 1 {
                        triples.push((q_idx(h, m), b_idx(m, m), 1.0));
                    }
                    if h != 1 {
                        triples.push((q_idx(h, m), b_idx(m, h), -1.0));
                    }
                }
            }
        }
    }
    triples
}

/// Graph Laplacian whose determinant is the total weight of all trees valid
/// under `mode`. Differentiable with respect to the potentials.
pub fn build_laplacian(psi: &Tensor, mode: RootMode) -> Result<Tensor> {
    let n = check_psi_shape(psi)?;
    let triples = Rc::new(laplacian_triples(n, mode));
    Ok(psi.linear_assemble(vec![n, n], triples)?)
}

/// Log of the partition function: the log-determinant of the Laplacian.
pub fn log_partition(psi: &Tensor, mode: RootMode) -> Result<Tensor> {
    let laplacian = build_laplacian(psi, mode)?;
    laplacian.log_det().map_err(map_degenerate)
}

/// Arc marginals p(h -> m | x) from the Laplacian inverse; O(n^3) and fully
/// differentiable, so gradients flow back into the potentials.
pub fn tree_marginals(psi: &Tensor, mode: RootMode) -> Result<MarginalMatrix> {
    let n = check_psi_shape(psi)?;
    let laplacian = build_laplacian(psi, mode)?;
    let inverse = laplacian.matrix_inverse().map_err(map_degenerate)?;
    let factors = inverse.linear_assemble(vec![n + 1, n], Rc::new(marginal_factor_triples(n, mode)))?;
    let p = psi.mul(&factors)?;
    Ok(MarginalMatrix { n, p })
}

fn map_degenerate(err: TensorError) -> InferenceError {
    match err {
        TensorError::Singular { .. } | TensorError::NonPositiveDet { .. } => InferenceError::Degenerate(err),
        other => InferenceError::Tensor(other),
    }
}

/// One-hot marginal matrix of a fixed tree: p(h -> m) = 1 iff (h, m) is an
/// edge of the tree.
pub fn marginals_from_tree(tree: &DependencyTree) -> MarginalMatrix {
    let n = tree.len();
    let mut data = vec![0.0; (n + 1) * n];
    for m in 1..=n {
        let h = tree.head_of(m);
        data[h * n + (m - 1)] = 1.0;
    }
    let p = Tensor::from(TensorData::new(vec![n + 1, n], data).expect("sizes agree"));
    MarginalMatrix { n, p }
}

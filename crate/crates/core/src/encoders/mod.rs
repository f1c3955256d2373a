//! Sentence encoders: BiLSTM objects, flat and tree-constrained relation
//! networks, structured intra-sentence attention, and recurrent relation
//! networks with supervised or latent trees.
//!
//! Every encoder consumes a matrix of word embeddings and produces a fixed
//! sentence vector, most also produce per-word contextual vectors. Tree
//! constraints enter either as a fixed dependency tree (supervised) or as arc
//! marginals computed from learned potentials (latent); the marginal path is
//! differentiable end to end, so tree structure is trained by the task loss.

mod layers;
#[cfg(test)]
mod tests;

pub use layers::{BiLstm, Linear, LstmCell, Mlp};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{
    marginals_from_tree, tree_marginals, DependencyTree, EdgePotentials, InferenceError,
    MarginalMatrix, RootMode,
};
use crate::tensor::{uniform, ParamStore, Pass, Tensor, TensorData, TensorError};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("empty sentence")]
    EmptySentence,
    #[error("encoder is configured for supervised trees but no tree was provided")]
    MissingTree,
    #[error("tree has {got} words but the sentence has {expected}")]
    TreeLength { expected: usize, got: usize },
    #[error("invalid encoder configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    None,
    Supervised,
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FlatRn,
    IntraAttn,
    RecurrentRn,
    StructuredAttnBaseline,
    Bow,
    BilstmMax,
}

fn default_dim() -> usize {
    300
}
fn default_depth() -> usize {
    2
}
fn default_steps() -> usize {
    3
}
/// The dropout rate used throughout when none is configured.
pub fn default_dropout_rate() -> f64 {
    0.5
}
fn default_aggregation() -> Aggregation {
    Aggregation::Max
}

/// Architecture hyperparameters shared by all encoder variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    /// BiLSTM hidden units per direction; object vectors are twice this wide.
    #[serde(default = "default_dim")]
    pub lstm_hidden: usize,
    #[serde(default = "default_dim")]
    pub mlp_hidden: usize,
    #[serde(default = "default_depth")]
    pub mlp_depth: usize,
    /// Output width of the pair-relation function.
    #[serde(default = "default_dim")]
    pub relation_dim: usize,
    /// Output width of the post-aggregation function on the RN path.
    #[serde(default = "default_dim")]
    pub rn_output_dim: usize,
    /// Output width of the post-aggregation function on the attention path.
    #[serde(default = "default_dim")]
    pub attn_output_dim: usize,
    /// Width of the contextual word vectors.
    #[serde(default = "default_dim")]
    pub context_dim: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub pooling: Pooling,
    /// Total recurrent timesteps T; T = 1 performs no message round.
    #[serde(default = "default_steps")]
    pub recurrent_steps: usize,
    pub tree_mode: TreeMode,
    pub variant: Variant,
    #[serde(default)]
    pub root_mode: RootMode,
    #[serde(default = "default_dropout_rate")]
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embedding_dim: default_dim(),
            lstm_hidden: default_dim(),
            mlp_hidden: default_dim(),
            mlp_depth: default_depth(),
            relation_dim: default_dim(),
            rn_output_dim: default_dim(),
            attn_output_dim: default_dim(),
            context_dim: default_dim(),
            aggregation: default_aggregation(),
            pooling: Pooling::Max,
            recurrent_steps: default_steps(),
            tree_mode: TreeMode::Latent,
            variant: Variant::RecurrentRn,
            root_mode: RootMode::default(),
            dropout: default_dropout_rate(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.embedding_dim,
            self.lstm_hidden,
            self.mlp_hidden,
            self.relation_dim,
            self.rn_output_dim,
            self.attn_output_dim,
            self.context_dim,
        ];
        if dims.contains(&0) {
            return Err(EncoderError::Config("all dimensions must be positive".into()));
        }
        if self.mlp_depth == 0 {
            return Err(EncoderError::Config("mlp_depth must be at least 1".into()));
        }
        if self.recurrent_steps == 0 {
            return Err(EncoderError::Config("recurrent_steps must be at least 1".into()));
        }
        if self.variant == Variant::RecurrentRn && self.tree_mode == TreeMode::None {
            return Err(EncoderError::Config("recurrent_rn requires a tree mode".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncoderError::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Width of the object vectors o_i.
    pub fn object_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Width of the sentence vector this configuration produces.
    pub fn sentence_dim(&self) -> usize {
        match self.variant {
            Variant::Bow => self.embedding_dim,
            Variant::BilstmMax | Variant::RecurrentRn => self.object_dim(),
            Variant::FlatRn => self.rn_output_dim,
            Variant::IntraAttn | Variant::StructuredAttnBaseline => self.context_dim,
        }
    }
}

/// Output of one sentence encoding.
pub struct SentenceRepr {
    /// Fixed-width sentence vector.
    pub sentence: Tensor,
    /// Per-word contextual vectors, for variants that produce them.
    pub words: Option<Tensor>,
    /// Arc marginals, when the latent path ran.
    pub marginals: Option<MarginalMatrix>,
    /// Clamped log-potential scores, when potentials were computed. These are
    /// the scores maximum-spanning-tree extraction decodes over.
    pub log_potentials: Option<TensorData>,
}

/// Index bookkeeping for the candidate-arc pair list D(x), ordered by head
/// then modifier. `left`/`right` index rows of a root-augmented state matrix.
struct ArcPairs {
    left: Vec<usize>,
    right: Vec<usize>,
    /// Flat index of each pair in a [(n+1) x n] arc matrix.
    flat: Vec<usize>,
    /// Modifier word (0-based) per pair, for parent-message sums.
    modifier_seg: Vec<usize>,
    /// Positions of pairs whose head is a word (h >= 1).
    child_rows: Vec<usize>,
    /// Head word (0-based) for those pairs, for child-message sums.
    child_seg: Vec<usize>,
}

fn arc_pairs(n: usize) -> ArcPairs {
    let mut pairs = ArcPairs {
        left: Vec::new(),
        right: Vec::new(),
        flat: Vec::new(),
        modifier_seg: Vec::new(),
        child_rows: Vec::new(),
        child_seg: Vec::new(),
    };
    for h in 0..=n {
        for m in 1..=n {
            if h == m {
                continue;
            }
            let row = pairs.left.len();
            pairs.left.push(h);
            pairs.right.push(m);
            pairs.flat.push(h * n + (m - 1));
            pairs.modifier_seg.push(m - 1);
            if h >= 1 {
                pairs.child_rows.push(row);
                pairs.child_seg.push(h - 1);
            }
        }
    }
    pairs
}

/// Uniform attachment distribution over D(x): every modifier's head mass is
/// split evenly over its n candidates. Used when an attention variant runs
/// without tree information.
fn uniform_marginals(n: usize) -> MarginalMatrix {
    let mut data = vec![0.0; (n + 1) * n];
    for h in 0..=n {
        for m in 1..=n {
            if h != m {
                data[h * n + (m - 1)] = 1.0 / n as f64;
            }
        }
    }
    let t = Tensor::from(TensorData::new(vec![n + 1, n], data).expect("sizes agree"));
    MarginalMatrix::from_tensor(t).expect("shape is valid")
}

/// A sentence encoder: the layer structure for one [`EncoderConfig`], with
/// parameters registered in a [`ParamStore`].
pub struct SentenceEncoder {
    config: EncoderConfig,
    bilstm: Option<BiLstm>,
    relation: Option<Mlp>,
    post_rn: Option<Mlp>,
    post_attn: Option<Mlp>,
    context_proj: Option<String>,
    cell: Option<LstmCell>,
    root_object: Option<String>,
    root_state: Option<String>,
    potential_w: Option<String>,
    potential_u: Option<String>,
    potential_v: Option<String>,
    potential_b: Option<String>,
}

impl SentenceEncoder {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        config: &EncoderConfig,
    ) -> Result<SentenceEncoder> {
        config.validate()?;
        let cfg = config.clone();
        let w = cfg.object_dim();
        let needs_bilstm = cfg.variant != Variant::Bow;
        let needs_potentials = cfg.tree_mode == TreeMode::Latent && cfg.variant != Variant::Bow && cfg.variant != Variant::BilstmMax;
        // The arc set D(x) includes root attachments, so every variant whose
        // aggregation can range over D(x) owns a root object vector.
        let needs_root_object = needs_potentials
            || match cfg.variant {
                Variant::FlatRn => cfg.tree_mode != TreeMode::None,
                Variant::IntraAttn | Variant::StructuredAttnBaseline => true,
                Variant::RecurrentRn | Variant::Bow | Variant::BilstmMax => false,
            };

        let bilstm = needs_bilstm
            .then(|| BiLstm::build(store, rng, &format!("{prefix}/bilstm"), cfg.embedding_dim, cfg.lstm_hidden))
            .transpose()?;

        let mut encoder = SentenceEncoder {
            config: cfg.clone(),
            bilstm,
            relation: None,
            post_rn: None,
            post_attn: None,
            context_proj: None,
            cell: None,
            root_object: None,
            root_state: None,
            potential_w: None,
            potential_u: None,
            potential_v: None,
            potential_b: None,
        };

        match cfg.variant {
            Variant::Bow | Variant::BilstmMax => {}
            Variant::FlatRn => {
                encoder.relation = Some(Mlp::build(store, rng, &format!("{prefix}/g"), 2 * w, cfg.mlp_hidden, cfg.mlp_depth, cfg.relation_dim)?);
                encoder.post_rn = Some(Mlp::build(store, rng, &format!("{prefix}/f"), cfg.relation_dim, cfg.mlp_hidden, cfg.mlp_depth, cfg.rn_output_dim)?);
            }
            Variant::IntraAttn => {
                encoder.relation = Some(Mlp::build(store, rng, &format!("{prefix}/g"), 2 * w, cfg.mlp_hidden, cfg.mlp_depth, cfg.relation_dim)?);
                encoder.post_attn = Some(Mlp::build(store, rng, &format!("{prefix}/f"), cfg.relation_dim, cfg.mlp_hidden, cfg.mlp_depth, cfg.attn_output_dim)?);
                let r_dim = match cfg.tree_mode {
                    TreeMode::Supervised => cfg.attn_output_dim,
                    _ => 2 * cfg.attn_output_dim,
                };
                let name = format!("{prefix}/context_w");
                store.define(&name, crate::tensor::xavier_uniform(r_dim + w, cfg.context_dim, rng))?;
                encoder.context_proj = Some(name);
            }
            Variant::StructuredAttnBaseline => {
                let name = format!("{prefix}/context_w");
                store.define(&name, crate::tensor::xavier_uniform(3 * w, cfg.context_dim, rng))?;
                encoder.context_proj = Some(name);
            }
            Variant::RecurrentRn => {
                encoder.relation = Some(Mlp::build(store, rng, &format!("{prefix}/g"), 2 * w, cfg.mlp_hidden, cfg.mlp_depth, cfg.relation_dim)?);
                let msg_dim = match cfg.tree_mode {
                    TreeMode::Supervised => cfg.relation_dim,
                    _ => 2 * cfg.relation_dim,
                };
                encoder.cell = Some(LstmCell::build(store, rng, &format!("{prefix}/cell"), w + msg_dim, w)?);
                let name = format!("{prefix}/root_state");
                store.define(&name, uniform(vec![w], -0.05, 0.05, rng))?;
                encoder.root_state = Some(name);
            }
        }

        if needs_root_object {
            let name = format!("{prefix}/root_object");
            store.define(&name, uniform(vec![w], -0.05, 0.05, rng))?;
            encoder.root_object = Some(name);
        }

        if needs_potentials {
            let pw = format!("{prefix}/potentials/w");
            let pu = format!("{prefix}/potentials/u");
            let pv = format!("{prefix}/potentials/v");
            let pb = format!("{prefix}/potentials/b");
            store.define(&pw, crate::tensor::xavier_uniform(w, w, rng))?;
            store.define(&pu, TensorData::zeros(vec![w, 1]))?;
            store.define(&pv, TensorData::zeros(vec![w, 1]))?;
            store.define(&pb, TensorData::zeros(vec![1]))?;
            encoder.potential_w = Some(pw);
            encoder.potential_u = Some(pu);
            encoder.potential_v = Some(pv);
            encoder.potential_b = Some(pb);
        }

        Ok(encoder)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn root_object_row(&self, pass: &Pass) -> Result<Tensor> {
        let name = self.root_object.as_ref().expect("variant defines a root object");
        Ok(pass.param(name)?.reshape(vec![1, self.config.object_dim()])?)
    }

    /// BiLSTM object matrix with dropout applied to its input and output.
    fn objects(&self, pass: &Pass, embedded: &Tensor) -> Result<Tensor> {
        let bilstm = self.bilstm.as_ref().expect("variant uses the BiLSTM");
        let x = pass.dropout(embedded)?;
        let o = bilstm.encode(pass, &x)?;
        Ok(pass.dropout(&o)?)
    }

    /// Bilinear arc potentials exp(o_h W o_m + U o_h + V o_m + b) from a
    /// root-augmented object matrix; exponents are clamped to [-30, 30].
    pub fn edge_potentials_from_objects(&self, pass: &Pass, o_full: &Tensor) -> Result<EdgePotentials> {
        let (exponents, _) = self.potential_exponents(pass, o_full)?;
        Ok(EdgePotentials::new(exponents.exp())?)
    }

    fn potential_exponents(&self, pass: &Pass, o_full: &Tensor) -> Result<(Tensor, usize)> {
        let n = o_full.value().rows() - 1;
        let w_name = self.potential_w.as_ref().ok_or_else(|| {
            EncoderError::Config("this encoder has no potential parameters (tree mode is not latent)".into())
        })?;
        let o_words = o_full.slice_rows(1, n + 1)?;
        let bilinear = o_full.matmul(&pass.param(w_name)?)?.matmul(&o_words.transpose()?)?;
        let head_term = o_full.matmul(&pass.param(self.potential_u.as_ref().expect("built together"))?)?;
        let mod_term = o_words.matmul(&pass.param(self.potential_v.as_ref().expect("built together"))?)?;
        let with_head = bilinear
            .transpose()?
            .add(&head_term.reshape(vec![n + 1])?)?
            .transpose()?;
        let with_mod = with_head.add(&mod_term.reshape(vec![n])?)?;
        let exponents = with_mod.add(&pass.param(self.potential_b.as_ref().expect("built together"))?)?;
        Ok((exponents.clamp(-30.0, 30.0), n))
    }

    /// Marginals for the latent path, plus the log-potential scores.
    fn latent_marginals(&self, pass: &Pass, o_full: &Tensor) -> Result<(MarginalMatrix, TensorData)> {
        let (exponents, _) = self.potential_exponents(pass, o_full)?;
        let psi = exponents.exp();
        let marginals = tree_marginals(&psi, self.config.root_mode)?;
        Ok((marginals, exponents.value().clone()))
    }

    fn expect_tree<'t>(&self, tree: Option<&'t DependencyTree>, n: usize) -> Result<&'t DependencyTree> {
        let tree = tree.ok_or(EncoderError::MissingTree)?;
        if tree.len() != n {
            return Err(EncoderError::TreeLength { expected: n, got: tree.len() });
        }
        Ok(tree)
    }

    /// Encode a sentence according to the configured variant and tree mode.
    /// `tree` is required exactly when the tree mode is supervised.
    pub fn encode(&self, pass: &Pass, embedded: &Tensor, tree: Option<&DependencyTree>) -> Result<SentenceRepr> {
        self.encode_inner(pass, embedded, tree, None)
    }

    /// Encode using externally supplied arc marginals in place of the
    /// configured tree source. Valid for marginal-consuming variants; this is
    /// how a point-mass tree distribution reproduces the supervised path.
    pub fn encode_with_marginals(&self, pass: &Pass, embedded: &Tensor, p: &MarginalMatrix) -> Result<SentenceRepr> {
        self.encode_inner(pass, embedded, None, Some(p))
    }

    fn encode_inner(
        &self,
        pass: &Pass,
        embedded: &Tensor,
        tree: Option<&DependencyTree>,
        marginal_override: Option<&MarginalMatrix>,
    ) -> Result<SentenceRepr> {
        let n = embedded.value().rows();
        if n == 0 {
            return Err(EncoderError::EmptySentence);
        }
        if embedded.value().cols() != self.config.embedding_dim {
            return Err(EncoderError::Config(format!(
                "embedding width {} does not match configured {}",
                embedded.value().cols(),
                self.config.embedding_dim
            )));
        }

        match self.config.variant {
            Variant::Bow => {
                let sentence = embedded.reduce_sum(Some(0))?.scale(1.0 / n as f64);
                Ok(SentenceRepr { sentence, words: None, marginals: None, log_potentials: None })
            }
            Variant::BilstmMax => {
                let o = self.objects(pass, embedded)?;
                let sentence = o.reduce_max(Some(0))?;
                Ok(SentenceRepr { sentence, words: Some(o), marginals: None, log_potentials: None })
            }
            Variant::FlatRn => self.encode_rn(pass, embedded, tree, marginal_override),
            Variant::IntraAttn => self.encode_intra_attention(pass, embedded, tree, marginal_override),
            Variant::StructuredAttnBaseline => self.encode_structured_baseline(pass, embedded, tree, marginal_override),
            Variant::RecurrentRn => self.encode_recurrent(pass, embedded, tree, marginal_override),
        }
    }

    /// Marginals according to the tree mode (or the override), together with
    /// log-potential scores when the latent machinery ran.
    fn marginal_source(
        &self,
        pass: &Pass,
        o_full: &Tensor,
        n: usize,
        tree: Option<&DependencyTree>,
        marginal_override: Option<&MarginalMatrix>,
    ) -> Result<(MarginalMatrix, Option<TensorData>)> {
        if let Some(p) = marginal_override {
            if p.n() != n {
                return Err(EncoderError::TreeLength { expected: n, got: p.n() });
            }
            return Ok((p.clone(), None));
        }
        match self.config.tree_mode {
            TreeMode::Supervised => {
                let tree = self.expect_tree(tree, n)?;
                Ok((marginals_from_tree(tree), None))
            }
            TreeMode::Latent => {
                let (p, scores) = self.latent_marginals(pass, o_full)?;
                Ok((p, Some(scores)))
            }
            TreeMode::None => Ok((uniform_marginals(n), None)),
        }
    }

    /// Relation vectors g over the full candidate-arc list, weighted by the
    /// marginals: the shared core of every latent-tree computation.
    fn weighted_arc_relations(
        &self,
        pass: &Pass,
        states_full: &Tensor,
        p: &MarginalMatrix,
        pairs: &ArcPairs,
    ) -> Result<Tensor> {
        let g = self.relation.as_ref().expect("variant defines a relation function");
        let left = states_full.gather_rows(&pairs.left)?;
        let right = states_full.gather_rows(&pairs.right)?;
        let pair_in = Tensor::concat(&[&left, &right], 1)?;
        let relations = g.forward(pass, &pair_in)?;
        let flat = p.tensor().reshape(vec![(p.n() + 1) * p.n()])?;
        let weights = flat.gather_elements(&pairs.flat)?;
        Ok(relations.scale_rows(&weights)?)
    }

    // ── flat / tree-constrained RN ───────────────────────────────────

    fn encode_rn(
        &self,
        pass: &Pass,
        embedded: &Tensor,
        tree: Option<&DependencyTree>,
        marginal_override: Option<&MarginalMatrix>,
    ) -> Result<SentenceRepr> {
        let n = embedded.value().rows();
        let g = self.relation.as_ref().expect("flat RN defines g");
        let f = self.post_rn.as_ref().expect("flat RN defines f");
        let o_words = self.objects(pass, embedded)?;

        let (aggregate, marginals, log_potentials) = if self.config.tree_mode == TreeMode::None && marginal_override.is_none() {
            (self.flat_pair_aggregate(pass, &o_words)?, None, None)
        } else {
            if self.root_object.is_none() {
                return Err(EncoderError::Config(
                    "flat RN without a tree mode has no root object; it cannot consume marginals".into(),
                ));
            }
            let o_full = Tensor::concat(&[&self.root_object_row(pass)?, &o_words], 0)?;
            match (self.config.tree_mode, marginal_override) {
                (TreeMode::Supervised, None) => {
                    let tree = self.expect_tree(tree, n)?;
                    let left: Vec<usize> = (1..=n).map(|m| tree.head_of(m)).collect();
                    let right: Vec<usize> = (1..=n).collect();
                    let pair_in = Tensor::concat(&[&o_full.gather_rows(&left)?, &o_full.gather_rows(&right)?], 1)?;
                    let relations = g.forward(pass, &pair_in)?;
                    (self.aggregate_rows(&relations)?, None, None)
                }
                _ => {
                    let (p, scores) = self.marginal_source(pass, &o_full, n, tree, marginal_override)?;
                    let pairs = arc_pairs(n);
                    let weighted = self.weighted_arc_relations(pass, &o_full, &p, &pairs)?;
                    (self.aggregate_rows(&weighted)?, Some(p), scores)
                }
            }
        };

        let sentence = f.forward_vec(pass, &aggregate)?;
        Ok(SentenceRepr { sentence, words: None, marginals, log_potentials })
    }

    fn aggregate_rows(&self, rows: &Tensor) -> Result<Tensor> {
        Ok(match self.config.aggregation {
            Aggregation::Sum => rows.reduce_sum(Some(0))?,
            Aggregation::Max => rows.reduce_max(Some(0))?,
        })
    }

    /// Aggregate g over all ordered word pairs i != j. A single word has no
    /// pairs; the aggregate is then the zero vector.
    fn flat_pair_aggregate(&self, pass: &Pass, o_words: &Tensor) -> Result<Tensor> {
        let g = self.relation.as_ref().expect("flat RN defines g");
        let n = o_words.value().rows();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    left.push(i);
                    right.push(j);
                }
            }
        }
        if left.is_empty() {
            return Ok(Tensor::from(TensorData::zeros(vec![self.config.relation_dim])));
        }
        let pair_in = Tensor::concat(&[&o_words.gather_rows(&left)?, &o_words.gather_rows(&right)?], 1)?;
        let relations = g.forward(pass, &pair_in)?;
        self.aggregate_rows(&relations)
    }

    // ── structured intra-sentence attention ─────────────────────────

    /// Parent-relation vectors f(g(o_head(i), o_i)) for a fixed tree.
    pub fn intra_parent_vectors_from_tree(&self, pass: &Pass, o_full: &Tensor, tree: &DependencyTree) -> Result<Tensor> {
        let g = self.relation.as_ref().expect("intra-attention defines g");
        let f = self.post_attn.as_ref().expect("intra-attention defines f");
        let n = tree.len();
        let left: Vec<usize> = (1..=n).map(|m| tree.head_of(m)).collect();
        let right: Vec<usize> = (1..=n).collect();
        let pair_in = Tensor::concat(&[&o_full.gather_rows(&left)?, &o_full.gather_rows(&right)?], 1)?;
        Ok(f.forward(pass, &g.forward(pass, &pair_in)?)?)
    }

    /// Parent-relation vectors f(sum_h p(h -> i) g(o_h, o_i)) under marginals.
    pub fn intra_parent_vectors_from_marginals(&self, pass: &Pass, o_full: &Tensor, p: &MarginalMatrix) -> Result<Tensor> {
        let f = self.post_attn.as_ref().expect("intra-attention defines f");
        let n = p.n();
        let pairs = arc_pairs(n);
        let weighted = self.weighted_arc_relations(pass, o_full, p, &pairs)?;
        let parent_sums = weighted.segment_sum(&pairs.modifier_seg, n)?;
        Ok(f.forward(pass, &parent_sums)?)
    }

    fn encode_intra_attention(
        &self,
        pass: &Pass,
        embedded: &Tensor,
        tree: Option<&DependencyTree>,
        marginal_override: Option<&MarginalMatrix>,
    ) -> Result<SentenceRepr> {
        let n = embedded.value().rows();
        let f = self.post_attn.as_ref().expect("intra-attention defines f");
        let o_words = self.objects(pass, embedded)?;
        let o_full = Tensor::concat(&[&self.root_object_row(pass)?, &o_words], 0)?;

        let (r, marginals, log_potentials) = match (self.config.tree_mode, marginal_override) {
            (TreeMode::Supervised, None) => {
                let tree = self.expect_tree(tree, n)?;
                (self.intra_parent_vectors_from_tree(pass, &o_full, tree)?, None, None)
            }
            _ => {
                let (p, scores) = self.marginal_source(pass, &o_full, n, tree, marginal_override)?;
                let pairs = arc_pairs(n);
                let weighted = self.weighted_arc_relations(pass, &o_full, &p, &pairs)?;
                let parent_vecs = f.forward(pass, &weighted.segment_sum(&pairs.modifier_seg, n)?)?;
                let child_contrib = weighted.gather_rows(&pairs.child_rows)?;
                let child_vecs = f.forward(pass, &child_contrib.segment_sum(&pairs.child_seg, n)?)?;
                (Tensor::concat(&[&parent_vecs, &child_vecs], 1)?, Some(p), scores)
            }
        };

        let words = self.contextualize(pass, &r, &o_words)?;
        let sentence = words.reduce_max(Some(0))?;
        Ok(SentenceRepr { sentence, words: Some(words), marginals, log_potentials })
    }

    /// s_i = tanh(W_r [r_i ; o_i])
    fn contextualize(&self, pass: &Pass, r: &Tensor, o_words: &Tensor) -> Result<Tensor> {
        let w_r = pass.param(self.context_proj.as_ref().expect("attention variants define W_r"))?;
        Ok(Tensor::concat(&[r, o_words], 1)?.matmul(&w_r)?.tanh())
    }

    // ── structured attention over object vectors (baseline) ─────────

    /// Expected parent and child object vectors under the marginals: the
    /// attention baseline's context, built from o vectors rather than pair
    /// relations.
    fn expected_neighbor_contexts(&self, o_full: &Tensor, p: &MarginalMatrix) -> Result<(Tensor, Tensor)> {
        let n = p.n();
        let o_words = o_full.slice_rows(1, n + 1)?;
        let parent_ctx = p.tensor().transpose()?.matmul(o_full)?;
        let child_ctx = p.tensor().slice_rows(1, n + 1)?.matmul(&o_words)?;
        Ok((parent_ctx, child_ctx))
    }

    fn encode_structured_baseline(
        &self,
        pass: &Pass,
        embedded: &Tensor,
        tree: Option<&DependencyTree>,
        marginal_override: Option<&MarginalMatrix>,
    ) -> Result<SentenceRepr> {
        let n = embedded.value().rows();
        let o_words = self.objects(pass, embedded)?;
        let o_full = Tensor::concat(&[&self.root_object_row(pass)?, &o_words], 0)?;
        let (p, log_potentials) = self.marginal_source(pass, &o_full, n, tree, marginal_override)?;

        let (parent_ctx, child_ctx) = self.expected_neighbor_contexts(&o_full, &p)?;
        let r = Tensor::concat(&[&parent_ctx, &child_ctx], 1)?;
        let words = self.contextualize(pass, &r, &o_words)?;
        let sentence = words.reduce_max(Some(0))?;
        Ok(SentenceRepr { sentence, words: Some(words), marginals: Some(p), log_potentials })
    }

    // ── recurrent relation networks ──────────────────────────────────

    /// Messages from each word's parent under a fixed tree, given the current
    /// hidden states (row 0 of `states_full` is the root state).
    pub fn recurrent_messages_from_tree(&self, pass: &Pass, states_full: &Tensor, tree: &DependencyTree) -> Result<Tensor> {
        let g = self.relation.as_ref().expect("recurrent RN defines g");
        let n = tree.len();
        let left: Vec<usize> = (1..=n).map(|m| tree.head_of(m)).collect();
        let right: Vec<usize> = (1..=n).collect();
        let pair_in = Tensor::concat(&[&states_full.gather_rows(&left)?, &states_full.gather_rows(&right)?], 1)?;
        Ok(g.forward(pass, &pair_in)?)
    }

    /// Marginal-weighted parent messages sum_h p(h -> i) g(h_h, h_i) given the
    /// current hidden states.
    pub fn recurrent_parent_messages_from_marginals(&self, pass: &Pass, states_full: &Tensor, p: &MarginalMatrix) -> Result<Tensor> {
        let n = p.n();
        let pairs = arc_pairs(n);
        let weighted = self.weighted_arc_relations(pass, states_full, p, &pairs)?;
        Ok(weighted.segment_sum(&pairs.modifier_seg, n)?)
    }

    fn encode_recurrent(
        &self,
        pass: &Pass,
        embedded: &Tensor,
        tree: Option<&DependencyTree>,
        marginal_override: Option<&MarginalMatrix>,
    ) -> Result<SentenceRepr> {
        let n = embedded.value().rows();
        let cell = self.cell.as_ref().expect("recurrent RN defines its cell");
        let w = self.config.object_dim();
        let o_words = self.objects(pass, embedded)?;
        let root_state = pass.param(self.root_state.as_ref().expect("recurrent RN defines a root state"))?.reshape(vec![1, w])?;

        enum Source {
            Tree(DependencyTree),
            Marginals(MarginalMatrix, Option<TensorData>),
        }
        let source = match (self.config.tree_mode, marginal_override) {
            (TreeMode::Supervised, None) => Source::Tree(self.expect_tree(tree, n)?.clone()),
            (_, Some(p)) => {
                if p.n() != n {
                    return Err(EncoderError::TreeLength { expected: n, got: p.n() });
                }
                Source::Marginals(p.clone(), None)
            }
            (TreeMode::Latent, None) => {
                // Potentials come from the BiLSTM objects and stay fixed
                // across the recurrent timesteps.
                let o_full = Tensor::concat(&[&self.root_object_row(pass)?, &o_words], 0)?;
                let (p, scores) = self.latent_marginals(pass, &o_full)?;
                Source::Marginals(p, Some(scores))
            }
            (TreeMode::None, None) => unreachable!("validated at build time"),
        };

        let pairs = arc_pairs(n);
        let mut hidden = o_words.clone();
        let mut cell_state = Tensor::from(TensorData::zeros(vec![n, w]));
        for _step in 2..=self.config.recurrent_steps {
            let states_full = Tensor::concat(&[&root_state, &hidden], 0)?;
            let cell_in = match &source {
                Source::Tree(tree) => {
                    let messages = self.recurrent_messages_from_tree(pass, &states_full, tree)?;
                    Tensor::concat(&[&o_words, &messages], 1)?
                }
                Source::Marginals(p, _) => {
                    let weighted = self.weighted_arc_relations(pass, &states_full, p, &pairs)?;
                    let parent_msgs = weighted.segment_sum(&pairs.modifier_seg, n)?;
                    let child_contrib = weighted.gather_rows(&pairs.child_rows)?;
                    let child_msgs = child_contrib.segment_sum(&pairs.child_seg, n)?;
                    Tensor::concat(&[&o_words, &parent_msgs, &child_msgs], 1)?
                }
            };
            let (h_next, c_next) = cell.step(pass, &cell_in, &hidden, &cell_state)?;
            hidden = h_next;
            cell_state = c_next;
        }

        let (marginals, log_potentials) = match source {
            Source::Tree(_) => (None, None),
            Source::Marginals(p, scores) => (Some(p), scores),
        };
        let sentence = hidden.reduce_max(Some(0))?;
        Ok(SentenceRepr { sentence, words: Some(hidden), marginals, log_potentials })
    }
}

//! Shared neural building blocks: residual MLPs and LSTM cells.
//!
//! Layers own parameter *names*; values live in the [`ParamStore`] and are
//! bound onto the active tape through the [`Pass`].

use rand_chacha::ChaCha8Rng;

use crate::tensor::{xavier_uniform, ParamStore, Pass, Result, Tensor, TensorData};

/// A linear map `x -> x W + b` acting on row-major batches.
pub struct Linear {
    w: String,
    b: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Linear> {
        let w = format!("{prefix}/w");
        let b = format!("{prefix}/b");
        store.define(&w, xavier_uniform(in_dim, out_dim, rng))?;
        store.define(&b, TensorData::zeros(vec![out_dim]))?;
        Ok(Linear { w, b, in_dim, out_dim })
    }

    /// Apply to a [k x in_dim] batch.
    pub fn forward(&self, pass: &Pass, x: &Tensor) -> Result<Tensor> {
        x.matmul(&pass.param(&self.w)?)?.add(&pass.param(&self.b)?)
    }
}

struct MlpLayer {
    linear: Linear,
    /// Projection for the residual path when widths differ; `None` means the
    /// input is added back unchanged.
    residual_proj: Option<String>,
}

/// Feed-forward network with ReLU hidden layers, a residual connection around
/// each hidden layer, and a final linear output layer. Residuals use the
/// identity where the widths agree and a learned projection otherwise.
pub struct Mlp {
    hidden: Vec<MlpLayer>,
    out: Linear,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Mlp {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
        depth: usize,
        out_dim: usize,
    ) -> Result<Mlp> {
        let mut hidden = Vec::with_capacity(depth);
        let mut width = in_dim;
        for layer in 0..depth {
            let lp = format!("{prefix}/h{layer}");
            let linear = Linear::build(store, rng, &lp, width, hidden_dim)?;
            let residual_proj = if width == hidden_dim {
                None
            } else {
                let name = format!("{lp}/proj");
                store.define(&name, xavier_uniform(width, hidden_dim, rng))?;
                Some(name)
            };
            hidden.push(MlpLayer { linear, residual_proj });
            width = hidden_dim;
        }
        let out = Linear::build(store, rng, &format!("{prefix}/out"), width, out_dim)?;
        Ok(Mlp { hidden, out, in_dim, out_dim })
    }

    /// Apply to a [k x in_dim] batch (k may be zero).
    pub fn forward(&self, pass: &Pass, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.hidden {
            let activated = layer.linear.forward(pass, &h)?.relu();
            let residual = match &layer.residual_proj {
                Some(p) => h.matmul(&pass.param(p)?)?,
                None => h,
            };
            h = activated.add(&residual)?;
        }
        self.out.forward(pass, &h)
    }

    /// Apply to a single vector.
    pub fn forward_vec(&self, pass: &Pass, x: &Tensor) -> Result<Tensor> {
        let row = x.reshape(vec![1, x.value().len()])?;
        self.forward(pass, &row)?.reshape(vec![self.out_dim])
    }
}

/// One LSTM cell over row-major batches of independent sequences.
pub struct LstmCell {
    wx: String,
    wh: String,
    b: String,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<LstmCell> {
        let wx = format!("{prefix}/wx");
        let wh = format!("{prefix}/wh");
        let b = format!("{prefix}/b");
        store.define(&wx, xavier_uniform(in_dim, 4 * hidden, rng))?;
        store.define(&wh, xavier_uniform(hidden, 4 * hidden, rng))?;
        // forget-gate bias starts at 1
        let mut bias = vec![0.0; 4 * hidden];
        for v in &mut bias[hidden..2 * hidden] {
            *v = 1.0;
        }
        store.define(&b, TensorData::vector(bias))?;
        Ok(LstmCell { wx, wh, b, in_dim, hidden })
    }

    /// One step: `x` is [k x in_dim], `h` and `c` are [k x hidden].
    /// Returns the updated (h, c).
    pub fn step(&self, pass: &Pass, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let gates = x
            .matmul(&pass.param(&self.wx)?)?
            .add(&h.matmul(&pass.param(&self.wh)?)?)?
            .add(&pass.param(&self.b)?)?;
        let d = self.hidden;
        let input_gate = gates.slice_cols(0, d)?.sigmoid();
        let forget_gate = gates.slice_cols(d, 2 * d)?.sigmoid();
        let candidate = gates.slice_cols(2 * d, 3 * d)?.tanh();
        let output_gate = gates.slice_cols(3 * d, 4 * d)?.sigmoid();
        let c_next = forget_gate.mul(c)?.add(&input_gate.mul(&candidate)?)?;
        let h_next = output_gate.mul(&c_next.tanh())?;
        Ok((h_next, c_next))
    }
}

/// Bidirectional LSTM producing one output row per word: the forward and
/// backward hidden states concatenated.
pub struct BiLstm {
    fwd: LstmCell,
    bwd: LstmCell,
    pub hidden: usize,
}

impl BiLstm {
    pub fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<BiLstm> {
        let fwd = LstmCell::build(store, rng, &format!("{prefix}/fwd"), in_dim, hidden)?;
        let bwd = LstmCell::build(store, rng, &format!("{prefix}/bwd"), in_dim, hidden)?;
        Ok(BiLstm { fwd, bwd, hidden })
    }

    fn run_direction(&self, pass: &Pass, x: &Tensor, cell: &LstmCell, reverse: bool) -> Result<Vec<Tensor>> {
        let n = x.value().rows();
        let mut h = Tensor::from(TensorData::zeros(vec![1, self.hidden]));
        let mut c = h.clone();
        let mut outputs = vec![None; n];
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let xt = x.slice_rows(t, t + 1)?;
            let (h_next, c_next) = cell.step(pass, &xt, &h, &c)?;
            outputs[t] = Some(h_next.clone());
            h = h_next;
            c = c_next;
        }
        Ok(outputs.into_iter().map(|o| o.expect("every position visited")).collect())
    }

    /// Encode [n x in_dim] embeddings into [n x 2*hidden] objects.
    pub fn encode(&self, pass: &Pass, x: &Tensor) -> Result<Tensor> {
        let fwd = self.run_direction(pass, x, &self.fwd, false)?;
        let bwd = self.run_direction(pass, x, &self.bwd, true)?;
        let fwd_refs: Vec<&Tensor> = fwd.iter().collect();
        let bwd_refs: Vec<&Tensor> = bwd.iter().collect();
        let fwd_mat = Tensor::concat(&fwd_refs, 0)?;
        let bwd_mat = Tensor::concat(&bwd_refs, 0)?;
        Tensor::concat(&[&fwd_mat, &bwd_mat], 1)
    }
}

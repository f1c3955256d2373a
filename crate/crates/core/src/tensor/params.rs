//! Named trainable parameters and the per-pass binding of parameters to a tape.

use std::cell::RefCell;
use std::rc::Rc;

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tape, Tensor, TensorData, TensorError};

/// One trainable parameter: a value and an accumulated gradient of the same
/// shape. The gradient is zero-filled after every optimizer step.
pub struct ParamEntry {
    pub value: Rc<TensorData>,
    pub grad: Vec<f64>,
}

/// Registry of named parameters with deterministic iteration order.
#[derive(Default)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    /// Register a parameter. Registering the same name twice is a bug.
    pub fn define(&mut self, name: &str, value: TensorData) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(TensorError::InvalidArgument {
                op: "define",
                message: format!("parameter '{}' already defined", name),
            });
        }
        let grad = vec![0.0; value.len()];
        self.entries.insert(name.to_string(), ParamEntry { value: Rc::new(value), grad });
        Ok(())
    }

    pub fn value(&self, name: &str) -> Result<&Rc<TensorData>> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&[f64]> {
        self.entries
            .get(name)
            .map(|e| e.grad.as_slice())
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn set_value(&mut self, name: &str, value: TensorData) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        if value.shape() != entry.value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "set_value",
                left: entry.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        entry.value = Rc::new(value);
        Ok(())
    }

    /// Read one entry of one parameter.
    pub fn entry_value(&self, name: &str, index: usize) -> Result<f64> {
        Ok(self.value(name)?.data()[index])
    }

    /// Overwrite one entry of one parameter (used by finite differences;
    /// assignment restores the original bit-exactly, which adding and
    /// subtracting a step would not).
    pub fn set_entry(&mut self, name: &str, index: usize, value: f64) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        let data = Rc::make_mut(&mut entry.value);
        data.data_mut()[index] = value;
        Ok(())
    }

    pub fn accumulate(&mut self, grads: &NamedGradients) -> Result<()> {
        for (name, g) in &grads.0 {
            let entry = self
                .entries
                .get_mut(name)
                .ok_or_else(|| TensorError::UnknownParam(name.clone()))?;
            if g.len() != entry.grad.len() {
                return Err(TensorError::InvalidArgument {
                    op: "accumulate",
                    message: format!("gradient length {} for parameter '{}' of size {}", g.len(), name, entry.grad.len()),
                });
            }
            for (a, v) in entry.grad.iter_mut().zip(g) {
                *a += v;
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Multiply every accumulated gradient by `factor` (batch averaging,
    /// global-norm clipping).
    pub fn scale_grads(&mut self, factor: f64) {
        for entry in self.entries.values_mut() {
            entry.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Euclidean norm of the concatenated gradient vector.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|e| &e.grad)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn total_values(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub(crate) fn from_entries(entries: Vec<(String, TensorData)>) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, value) in entries {
            let grad = vec![0.0; value.len()];
            store.entries.insert(name, ParamEntry { value: Rc::new(value), grad });
        }
        store
    }
}

/// Gradients keyed by parameter name, one entry per parameter bound during the
/// pass (zero-filled when no gradient flowed to it).
pub struct NamedGradients(pub Vec<(String, Vec<f64>)>);

impl NamedGradients {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, g)| g.as_slice())
    }

    /// Sum of squared entries across all gradients.
    pub fn squared_norm(&self) -> f64 {
        self.0.iter().flat_map(|(_, g)| g).map(|v| v * v).sum()
    }
}

enum PassMode {
    Eval,
    Train { dropout_rate: f64, rng: RefCell<ChaCha8Rng> },
}

/// One forward(-backward) pass: a fresh tape plus lazily bound parameters.
///
/// Parameters are leafed onto the tape on first use and cached, so each
/// parameter appears exactly once per pass regardless of how many operations
/// consume it.
pub struct Pass<'s> {
    tape: Tape,
    store: &'s ParamStore,
    bound: RefCell<IndexMap<String, Tensor>>,
    mode: PassMode,
}

impl<'s> Pass<'s> {
    pub fn eval(store: &'s ParamStore) -> Pass<'s> {
        Pass { tape: Tape::new(), store, bound: RefCell::new(IndexMap::new()), mode: PassMode::Eval }
    }

    pub fn train(store: &'s ParamStore, dropout_rate: f64, rng: ChaCha8Rng) -> Pass<'s> {
        Pass {
            tape: Tape::new(),
            store,
            bound: RefCell::new(IndexMap::new()),
            mode: PassMode::Train { dropout_rate, rng: RefCell::new(rng) },
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn is_train(&self) -> bool {
        matches!(self.mode, PassMode::Train { .. })
    }

    /// The named parameter as a tracked tensor on this pass's tape.
    pub fn param(&self, name: &str) -> Result<Tensor> {
        if let Some(t) = self.bound.borrow().get(name) {
            return Ok(t.clone());
        }
        let value = Rc::clone(self.store.value(name)?);
        let tensor = self.tape.leaf_shared(value);
        self.bound.borrow_mut().insert(name.to_string(), tensor.clone());
        Ok(tensor)
    }

    /// Inverted dropout: in train mode, zero each entry with probability
    /// `dropout_rate` and scale survivors by 1/(1-rate). Identity in eval mode.
    pub fn dropout(&self, t: &Tensor) -> Result<Tensor> {
        let PassMode::Train { dropout_rate, rng } = &self.mode else {
            return Ok(t.clone());
        };
        let rate = *dropout_rate;
        if rate <= 0.0 {
            return Ok(t.clone());
        }
        let keep = 1.0 - rate;
        let mut rng = rng.borrow_mut();
        let mask: Vec<f64> = (0..t.value().len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep })
            .collect();
        let mask = Tensor::from(TensorData::new(t.shape().to_vec(), mask)?);
        t.mul(&mask)
    }

    /// Backward from a scalar loss, returning one gradient per bound
    /// parameter (zeros for parameters no gradient reached).
    pub fn backward(&self, loss: &Tensor) -> Result<NamedGradients> {
        let grads = self.tape.backward(loss)?;
        let bound = self.bound.borrow();
        let mut named = Vec::with_capacity(bound.len());
        for (name, tensor) in bound.iter() {
            let g = grads
                .wrt(tensor)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; tensor.value().len()]);
            named.push((name.clone(), g));
        }
        Ok(NamedGradients(named))
    }
}

// ── initializers ─────────────────────────────────────────────────────

/// Xavier/Glorot uniform initialization for a weight matrix.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> TensorData {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    TensorData { shape: vec![rows, cols], data }
}

/// Uniform initialization in [lo, hi].
pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> TensorData {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(lo..hi)).collect();
    TensorData { shape, data }
}

impl TensorData {
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

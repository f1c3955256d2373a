//! Dense 64-bit float tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable values. Operations on tensors that are attached to a
//! [`Tape`] record a backward rule; calling [`Tape::backward`] on a scalar loss
//! replays the recorded operations in reverse and accumulates gradients.

mod checkpoint;
mod fd;
mod ops;
mod params;
mod tape;

pub use checkpoint::{load_checkpoint, load_checkpoint_into, save_checkpoint, CheckpointError};
pub use fd::{finite_difference_check, FD_EPS_SWEEP};
pub use ops::stack_rows;
pub use params::{uniform, xavier_uniform, NamedGradients, ParamStore, Pass};
pub use tape::{Gradients, Tape};

use std::rc::Rc;
use thiserror::Error;

/// Errors raised by tensor operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {message}")]
    InvalidArgument { op: &'static str, message: String },
    #[error("log of non-positive value {value}")]
    LogDomain { value: f64 },
    #[error("singular matrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("log-determinant of matrix with non-positive determinant (sign {sign})")]
    NonPositiveDet { sign: f64 },
    #[error("backward requires a scalar loss of shape [1], got {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Immutable tensor storage: a shape and row-major 64-bit float data.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorData {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidArgument {
                op: "new",
                message: format!("shape {:?} implies {} values, got {}", shape, numel, data.len()),
            });
        }
        Ok(TensorData { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        TensorData { shape, data: vec![0.0; numel] }
    }

    pub fn scalar(v: f64) -> Self {
        TensorData { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        TensorData { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        TensorData::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::InvalidArgument {
                    op: "from_rows",
                    message: format!("ragged rows: expected {} columns, got {}", c, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        TensorData::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    /// Entry (i, j) of a rank-2 tensor.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A tensor value, optionally attached to a gradient tape.
///
/// Cloning is cheap (the storage is shared). A tensor created directly from
/// [`TensorData`] is detached: operations on it compute values but record no
/// gradient. Attach values via [`Tape::leaf`] or [`Pass::param`] to track them.
#[derive(Clone)]
pub struct Tensor {
    value: Rc<TensorData>,
    node: Option<(Tape, usize)>,
}

impl Tensor {
    pub fn value(&self) -> &TensorData {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    /// Node id on the tape, if attached.
    pub fn node_id(&self) -> Option<usize> {
        self.node.as_ref().map(|(_, id)| *id)
    }

    pub(crate) fn node(&self) -> Option<&(Tape, usize)> {
        self.node.as_ref()
    }

    pub(crate) fn shared_value(&self) -> Rc<TensorData> {
        Rc::clone(&self.value)
    }

    pub(crate) fn attached(value: Rc<TensorData>, tape: Tape, id: usize) -> Tensor {
        Tensor { value, node: Some((tape, id)) }
    }

    /// Value of a shape-[1] tensor.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.value.len() != 1 {
            return Err(TensorError::NonScalarLoss { shape: self.shape().to_vec() });
        }
        Ok(self.value.data()[0])
    }
}

impl From<TensorData> for Tensor {
    fn from(value: TensorData) -> Self {
        Tensor { value: Rc::new(value), node: None }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.value.shape)
            .field("attached", &self.node.is_some())
            .finish()
    }
}

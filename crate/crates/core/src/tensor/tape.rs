//! The gradient tape: a linear record of operations replayed in reverse.

use std::cell::RefCell;
use std::rc::Rc;

use super::{Result, Tensor, TensorData, TensorError};

/// Backward rule of a recorded operation. Receives the upstream gradient and a
/// sink accepting (parent node id, gradient contribution) pairs.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &mut dyn FnMut(usize, Vec<f64>))>;

pub(crate) struct Node {
    pub name: &'static str,
    pub len: usize,
    pub backward: Option<BackwardFn>,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    first_nonfinite: Option<(usize, &'static str)>,
}

/// Records operations during a forward pass and replays them in reverse.
///
/// Single-threaded by construction: a tape and the tensors attached to it must
/// stay within one execution context. Detached tensors are plain values.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub(crate) fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn record(&self, name: &'static str, value: &TensorData, backward: Option<BackwardFn>) -> usize {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        if inner.first_nonfinite.is_none() && !value.all_finite() {
            inner.first_nonfinite = Some((id, name));
        }
        inner.nodes.push(Node { name, len: value.len(), backward });
        id
    }

    /// Attach a value as a tracked leaf (no backward rule of its own).
    pub fn leaf(&self, value: TensorData) -> Tensor {
        self.leaf_shared(Rc::new(value))
    }

    /// Attach an already-shared value as a tracked leaf without copying it.
    pub fn leaf_shared(&self, value: Rc<TensorData>) -> Tensor {
        let id = self.record("leaf", &value, None);
        Tensor::attached(value, self.clone(), id)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First operation that produced a non-finite value, if any. Used for
    /// divergence diagnostics during training.
    pub fn first_nonfinite_op(&self) -> Option<(usize, &'static str)> {
        self.inner.borrow().first_nonfinite
    }

    /// Run the backward pass from a scalar loss. Visits every recorded node at
    /// most once, in reverse topological order, and returns the accumulated
    /// gradient for every node gradient flowed to.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        let loss_id = match loss.node() {
            Some((tape, id)) if tape.same_tape(self) => *id,
            _ => {
                return Err(TensorError::InvalidArgument {
                    op: "backward",
                    message: "loss tensor is not attached to this tape".into(),
                })
            }
        };
        if loss.value().len() != 1 {
            return Err(TensorError::NonScalarLoss { shape: loss.shape().to_vec() });
        }

        let inner = self.inner.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; inner.nodes.len()];
        grads[loss_id] = Some(vec![1.0]);

        for id in (0..=loss_id).rev() {
            let Some(grad) = grads[id].clone() else { continue };
            let node = &inner.nodes[id];
            debug_assert_eq!(grad.len(), node.len, "gradient length mismatch at node {id} ({})", node.name);
            if let Some(backward) = &node.backward {
                backward(&grad, &mut |parent, contribution| {
                    debug_assert!(parent < id, "tape order violated: {parent} >= {id}");
                    match &mut grads[parent] {
                        Some(acc) => {
                            for (a, c) in acc.iter_mut().zip(&contribution) {
                                *a += c;
                            }
                        }
                        slot => *slot = Some(contribution),
                    }
                });
            }
        }

        Ok(Gradients { tape: self.clone(), grads })
    }
}

/// Gradients produced by one backward pass, addressable by tensor.
pub struct Gradients {
    tape: Tape,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `t`, or `None` when no gradient
    /// flowed to it (or it lives on a different tape).
    pub fn wrt(&self, t: &Tensor) -> Option<&[f64]> {
        let (tape, id) = t.node()?;
        if !tape.same_tape(&self.tape) {
            return None;
        }
        self.grads.get(*id)?.as_deref()
    }
}

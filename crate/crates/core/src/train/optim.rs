//! First-order optimizers over a parameter store.

use std::rc::Rc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Adagrad,
}

impl OptimizerKind {
    /// Default learning rate when the configuration leaves it unset.
    pub fn default_learning_rate(&self) -> f64 {
        match self {
            OptimizerKind::Adam => 1e-4,
            OptimizerKind::Adagrad => 0.01,
        }
    }
}

struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Per-parameter moment accumulators plus a step counter. Moment shapes
/// mirror the parameters they track; the counter is monotone.
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    state: IndexMap<String, Moments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Optimizer {
        Optimizer {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            state: IndexMap::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply the accumulated gradients to the parameters, then zero them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        for (name, entry) in store.iter_mut() {
            let size = entry.grad.len();
            let moments = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                first: vec![0.0; size],
                second: vec![0.0; size],
            });
            if moments.first.len() != size {
                return Err(TensorError::InvalidArgument {
                    op: "optimizer_step",
                    message: format!("parameter '{name}' changed size: {} vs {}", moments.first.len(), size),
                });
            }
            let values = Rc::make_mut(&mut entry.value).data_mut();
            match self.kind {
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - self.beta1.powi(t as i32);
                    let bc2 = 1.0 - self.beta2.powi(t as i32);
                    for i in 0..size {
                        let g = entry.grad[i];
                        moments.first[i] = self.beta1 * moments.first[i] + (1.0 - self.beta1) * g;
                        moments.second[i] = self.beta2 * moments.second[i] + (1.0 - self.beta2) * g * g;
                        let m_hat = moments.first[i] / bc1;
                        let v_hat = moments.second[i] / bc2;
                        values[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
                OptimizerKind::Adagrad => {
                    for i in 0..size {
                        let g = entry.grad[i];
                        moments.second[i] += g * g;
                        values[i] -= self.learning_rate * g / (moments.second[i] + self.epsilon).sqrt();
                    }
                }
            }
        }
        store.zero_grads();
        Ok(())
    }
}

/// Scale gradients so their global norm is at most `max_norm`.
pub fn clip_global_norm(store: &mut ParamStore, max_norm: f64) {
    let norm = store.grad_norm();
    if norm > max_norm && norm > 0.0 {
        store.scale_grads(max_norm / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorData;

    fn store_with(name: &str, values: Vec<f64>) -> ParamStore {
        let mut store = ParamStore::new();
        store.define(name, TensorData::vector(values)).unwrap();
        store
    }

    fn set_grad(store: &mut ParamStore, name: &str, grad: Vec<f64>) {
        for (n, entry) in store.iter_mut() {
            if n == name {
                entry.grad.copy_from_slice(&grad);
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Adagrad] {
            let mut store = store_with("p", vec![1.0, -2.0]);
            let mut opt = Optimizer::new(kind, 0.1);
            opt.step(&mut store).unwrap();
            assert_eq!(store.value("p").unwrap().data(), &[1.0, -2.0]);
        }
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut store = store_with("p", vec![0.0, 0.0]);
        set_grad(&mut store, "p", vec![0.5, -3.0]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01);
        opt.step(&mut store).unwrap();
        let p = store.value("p").unwrap().data().to_vec();
        // bias correction makes m_hat / sqrt(v_hat) = sign(g) on the first step
        assert!((p[0] + 0.01).abs() < 1e-6, "{p:?}");
        assert!((p[1] - 0.01).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn gradients_zeroed_after_step() {
        let mut store = store_with("p", vec![0.0]);
        set_grad(&mut store, "p", vec![1.0]);
        let mut opt = Optimizer::new(OptimizerKind::Adagrad, 0.1);
        opt.step(&mut store).unwrap();
        assert_eq!(store.grad("p").unwrap(), &[0.0]);
    }

    #[test]
    fn adagrad_steps_shrink_like_inverse_sqrt_t() {
        let mut store = store_with("p", vec![0.0]);
        let mut opt = Optimizer::new(OptimizerKind::Adagrad, 1.0);
        let mut prev_value = 0.0f64;
        let mut steps = Vec::new();
        for _ in 0..50 {
            set_grad(&mut store, "p", vec![1.0]);
            opt.step(&mut store).unwrap();
            let v = store.value("p").unwrap().data()[0];
            steps.push((prev_value - v).abs());
            prev_value = v;
        }
        // constant gradient stream: step t is lr / sqrt(t)
        for (t, s) in steps.iter().enumerate() {
            let expected = 1.0 / ((t + 1) as f64).sqrt();
            assert!((s - expected).abs() < 1e-3, "step {t}: {s} vs {expected}");
        }
    }

    #[test]
    fn both_optimizers_descend_a_quadratic_bowl() {
        // minimize |x - c|^2; gradient 2(x - c)
        let target = [3.0, -1.5, 0.25];
        for (kind, lr, max_steps) in [
            (OptimizerKind::Adam, 0.05, 5000usize),
            (OptimizerKind::Adagrad, 0.5, 5000),
        ] {
            let mut store = store_with("x", vec![0.0, 0.0, 0.0]);
            let mut opt = Optimizer::new(kind, lr);
            for _ in 0..max_steps {
                let x = store.value("x").unwrap().data().to_vec();
                let grad: Vec<f64> = x.iter().zip(&target).map(|(xi, c)| 2.0 * (xi - c)).collect();
                set_grad(&mut store, "x", grad);
                opt.step(&mut store).unwrap();
            }
            let x = store.value("x").unwrap().data();
            for (xi, c) in x.iter().zip(&target) {
                assert!((xi - c).abs() < 1e-4, "{kind:?}: {xi} vs {c}");
            }
        }
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut store = store_with("p", vec![0.0, 0.0]);
        set_grad(&mut store, "p", vec![30.0, 40.0]);
        clip_global_norm(&mut store, 5.0);
        let g = store.grad("p").unwrap();
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((norm - 5.0).abs() < 1e-9);
        assert!((g[0] / g[1] - 0.75).abs() < 1e-9, "direction preserved");
    }
}

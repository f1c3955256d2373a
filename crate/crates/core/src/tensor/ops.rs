//! Differentiable tensor operations.
//!
//! Every operation computes its forward value eagerly and, when any operand is
//! attached to a tape, records a backward rule closing over whatever values the
//! rule needs. Gradients are exact: ReLU takes subgradient 0 at the origin and
//! max reductions route the full gradient to the first (lowest-index) argmax.

use std::rc::Rc;

use super::tape::BackwardFn;
use super::{Result, Tape, Tensor, TensorData, TensorError};

// ── recording helper ─────────────────────────────────────────────────

fn record(
    inputs: &[&Tensor],
    name: &'static str,
    value: TensorData,
    make_backward: impl FnOnce(&Rc<TensorData>, &[Option<usize>]) -> BackwardFn,
) -> Tensor {
    let mut tape: Option<&Tape> = None;
    for t in inputs {
        if let Some((tp, _)) = t.node() {
            match tape {
                None => tape = Some(tp),
                Some(existing) => assert!(
                    existing.same_tape(tp),
                    "{name}: operands are attached to different tapes"
                ),
            }
        }
    }
    let Some(tape) = tape else {
        return Tensor::from(value);
    };
    let value = Rc::new(value);
    let ids: Vec<Option<usize>> = inputs.iter().map(|t| t.node_id()).collect();
    let backward = make_backward(&value, &ids);
    let tape = tape.clone();
    let id = tape.record(name, &value, Some(backward));
    Tensor::attached(value, tape, id)
}

// ── raw matrix kernels ───────────────────────────────────────────────

/// C[m×n] = A[m×k] · B[k×n]
fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == 0.0 {
                continue;
            }
            let b_row = &b[l * n..(l + 1) * n];
            let c_row = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                c_row[j] += a_il * b_row[j];
            }
        }
    }
    c
}

/// C[m×k] = G[m×n] · Bᵀ where B is [k×n]
fn mm_nt(g: &[f64], m: usize, n: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for l in 0..k {
            let b_row = &b[l * n..(l + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += g_row[j] * b_row[j];
            }
            c[i * k + l] = s;
        }
    }
    c
}

/// C[k×n] = Aᵀ · G where A is [m×k], G is [m×n]
fn mm_tn(a: &[f64], m: usize, k: usize, g: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == 0.0 {
                continue;
            }
            let c_row = &mut c[l * n..(l + 1) * n];
            for j in 0..n {
                c_row[j] += a_il * g_row[j];
            }
        }
    }
    c
}

fn transpose_data(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

// ── LU factorization (partial pivoting) ──────────────────────────────

const PIVOT_TOLERANCE: f64 = 1e-12;

struct Lu {
    lu: Vec<f64>,
    n: usize,
    perm: Vec<usize>,
    perm_sign: f64,
}

fn lu_factor(a: &[f64], n: usize) -> Result<Lu> {
    let mut lu = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut perm_sign = 1.0;
    let mut max_pivot = 0.0f64;

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = lu[col * n + col].abs();
        for r in col + 1..n {
            let mag = lu[r * n + col].abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if pivot_mag < PIVOT_TOLERANCE {
            let condition = if pivot_mag == 0.0 { f64::INFINITY } else { max_pivot / pivot_mag };
            return Err(TensorError::Singular { condition: condition.max(1.0) });
        }
        max_pivot = max_pivot.max(pivot_mag);
        if pivot_row != col {
            for j in 0..n {
                lu.swap(col * n + j, pivot_row * n + j);
            }
            perm.swap(col, pivot_row);
            perm_sign = -perm_sign;
        }
        let pivot = lu[col * n + col];
        for r in col + 1..n {
            let factor = lu[r * n + col] / pivot;
            lu[r * n + col] = factor;
            for j in col + 1..n {
                lu[r * n + j] -= factor * lu[col * n + j];
            }
        }
    }
    Ok(Lu { lu, n, perm, perm_sign })
}

impl Lu {
    /// Solve A·x = e_col for one unit vector, writing into `x`.
    fn solve_unit(&self, col: usize, x: &mut [f64]) {
        let n = self.n;
        for (i, slot) in x.iter_mut().enumerate() {
            *slot = if self.perm[i] == col { 1.0 } else { 0.0 };
        }
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
    }

    fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col_buf = vec![0.0; n];
        for col in 0..n {
            self.solve_unit(col, &mut col_buf);
            for i in 0..n {
                inv[i * n + col] = col_buf[i];
            }
        }
        inv
    }

    fn det_sign(&self) -> f64 {
        let mut sign = self.perm_sign;
        for i in 0..self.n {
            if self.lu[i * self.n + i] < 0.0 {
                sign = -sign;
            }
        }
        sign
    }

    fn log_abs_det(&self) -> f64 {
        (0..self.n).map(|i| self.lu[i * self.n + i].abs().ln()).sum()
    }
}

// ── elementwise broadcasting ─────────────────────────────────────────

enum Broadcast {
    Same,
    /// rhs is a vector matching the column count of a rank-2 lhs; it is added
    /// to (multiplied into) every row.
    Rows,
    /// rhs has a single element applied everywhere.
    Scalar,
}

fn broadcast_kind(op: &'static str, a: &TensorData, b: &TensorData) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        return Ok(Broadcast::Same);
    }
    if b.len() == 1 {
        return Ok(Broadcast::Scalar);
    }
    if a.rank() == 2 && b.rank() == 1 && b.len() == a.cols() {
        return Ok(Broadcast::Rows);
    }
    Err(TensorError::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() })
}

fn reduce_like_rhs(kind: &Broadcast, a_shape: &[usize], g: &[f64]) -> Vec<f64> {
    match kind {
        Broadcast::Same => g.to_vec(),
        Broadcast::Scalar => vec![g.iter().sum()],
        Broadcast::Rows => {
            let cols = a_shape[1];
            let mut out = vec![0.0; cols];
            for row in g.chunks_exact(cols) {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            out
        }
    }
}

impl Tensor {
    // ── matrix product ───────────────────────────────────────────────

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.value(), rhs.value());
        if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let out = TensorData::new(vec![m, n], mm(a.data(), m, k, b.data(), n))?;
        Ok(record(&[self, rhs], "matmul", out, |_, ids| {
            let a = self.shared_value();
            let b = rhs.shared_value();
            let (ia, ib) = (ids[0], ids[1]);
            Box::new(move |g, sink| {
                if let Some(ia) = ia {
                    sink(ia, mm_nt(g, m, n, b.data(), k));
                }
                if let Some(ib) = ib {
                    sink(ib, mm_tn(a.data(), m, k, g, n));
                }
            })
        }))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let a = self.value();
        if a.rank() != 2 {
            return Err(TensorError::InvalidArgument {
                op: "transpose",
                message: format!("expected a matrix, got shape {:?}", a.shape()),
            });
        }
        let (r, c) = (a.rows(), a.cols());
        let out = TensorData::new(vec![c, r], transpose_data(a.data(), r, c))?;
        Ok(record(&[self], "transpose", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    sink(id, transpose_data(g, c, r));
                }
            })
        }))
    }

    // ── elementwise binary ───────────────────────────────────────────

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, "add", |x, y| x + y, 1.0)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, "sub", |x, y| x - y, -1.0)
    }

    fn binary(
        &self,
        rhs: &Tensor,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        rhs_sign: f64,
    ) -> Result<Tensor> {
        let (a, b) = (self.value(), rhs.value());
        let kind = broadcast_kind(name, a, b)?;
        let data: Vec<f64> = match &kind {
            Broadcast::Same => a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Scalar => {
                let y = b.data()[0];
                a.data().iter().map(|&x| f(x, y)).collect()
            }
            Broadcast::Rows => {
                let cols = a.cols();
                a.data()
                    .iter()
                    .enumerate()
                    .map(|(idx, &x)| f(x, b.data()[idx % cols]))
                    .collect()
            }
        };
        let out = TensorData::new(a.shape().to_vec(), data)?;
        let a_shape = a.shape().to_vec();
        Ok(record(&[self, rhs], name, out, |_, ids| {
            let (ia, ib) = (ids[0], ids[1]);
            Box::new(move |g, sink| {
                if let Some(ia) = ia {
                    sink(ia, g.to_vec());
                }
                if let Some(ib) = ib {
                    let mut gb = reduce_like_rhs(&kind, &a_shape, g);
                    if rhs_sign != 1.0 {
                        for v in &mut gb {
                            *v *= rhs_sign;
                        }
                    }
                    sink(ib, gb);
                }
            })
        }))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.value(), rhs.value());
        let kind = broadcast_kind("mul", a, b)?;
        let data: Vec<f64> = match &kind {
            Broadcast::Same => a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
            Broadcast::Scalar => {
                let y = b.data()[0];
                a.data().iter().map(|&x| x * y).collect()
            }
            Broadcast::Rows => {
                let cols = a.cols();
                a.data().iter().enumerate().map(|(idx, &x)| x * b.data()[idx % cols]).collect()
            }
        };
        let out = TensorData::new(a.shape().to_vec(), data)?;
        let a_shape = a.shape().to_vec();
        Ok(record(&[self, rhs], "mul", out, |_, ids| {
            let a = self.shared_value();
            let b = rhs.shared_value();
            let (ia, ib) = (ids[0], ids[1]);
            Box::new(move |g, sink| {
                if let Some(ia) = ia {
                    let ga: Vec<f64> = match &kind {
                        Broadcast::Same => g.iter().zip(b.data()).map(|(&gv, &y)| gv * y).collect(),
                        Broadcast::Scalar => g.iter().map(|&gv| gv * b.data()[0]).collect(),
                        Broadcast::Rows => {
                            let cols = a_shape[1];
                            g.iter().enumerate().map(|(idx, &gv)| gv * b.data()[idx % cols]).collect()
                        }
                    };
                    sink(ia, ga);
                }
                if let Some(ib) = ib {
                    let weighted: Vec<f64> = g.iter().zip(a.data()).map(|(&gv, &x)| gv * x).collect();
                    sink(ib, reduce_like_rhs(&kind, &a_shape, &weighted));
                }
            })
        }))
    }

    // ── elementwise unary ────────────────────────────────────────────

    fn unary(
        &self,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        // derivative as a function of (input, output)
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let out = TensorData { shape: self.shape().to_vec(), data };
        record(&[self], name, out, |value, ids| {
            let x = self.shared_value();
            let y = Rc::clone(value);
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(x.data().iter().zip(y.data()))
                        .map(|(&gv, (&xv, &yv))| gv * df(xv, yv))
                        .collect();
                    sink(id, gx);
                }
            })
        })
    }

    pub fn tanh(&self) -> Tensor {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&self) -> Tensor {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(
            "sigmoid",
            |x| 1.0 / (1.0 + (-x).exp()),
            |_, y| y * (1.0 - y),
        )
    }

    pub fn exp(&self) -> Tensor {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn abs(&self) -> Tensor {
        self.unary("abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn neg(&self) -> Tensor {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary("scale", move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary("add_scalar", move |x| x + c, |_, _| 1.0)
    }

    /// Clamp to [lo, hi]. Gradient passes through inside the interval
    /// (boundaries included) and is zero outside.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.unary(
            "clamp",
            move |x| x.clamp(lo, hi),
            move |x, _| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 },
        )
    }

    pub fn log(&self) -> Result<Tensor> {
        if let Some(&bad) = self.data().iter().find(|v| **v <= 0.0) {
            return Err(TensorError::LogDomain { value: bad });
        }
        Ok(self.unary("log", f64::ln, |x, _| 1.0 / x))
    }

    // ── reductions ───────────────────────────────────────────────────

    fn reduction_slices(&self, op: &'static str, axis: Option<usize>) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
        let shape = self.shape();
        let slices: Vec<Vec<usize>> = match (shape.len(), axis) {
            (_, None) => vec![(0..self.value().len()).collect()],
            (1, Some(0)) => vec![(0..shape[0]).collect()],
            (2, Some(0)) => (0..shape[1]).map(|c| (0..shape[0]).map(|r| r * shape[1] + c).collect()).collect(),
            (2, Some(1)) => (0..shape[0]).map(|r| (0..shape[1]).map(|c| r * shape[1] + c).collect()).collect(),
            (_, Some(a)) => {
                return Err(TensorError::InvalidArgument {
                    op,
                    message: format!("axis {} invalid for shape {:?}", a, shape),
                })
            }
        };
        if slices.iter().any(Vec::is_empty) || slices.is_empty() {
            return Err(TensorError::InvalidArgument { op, message: format!("empty axis extent in shape {:?}", shape) });
        }
        let out_shape = match (shape.len(), axis) {
            (_, None) | (1, Some(0)) => vec![1],
            (2, Some(0)) => vec![shape[1]],
            (2, Some(1)) => vec![shape[0]],
            _ => unreachable!(),
        };
        Ok((out_shape, slices))
    }

    pub fn reduce_sum(&self, axis: Option<usize>) -> Result<Tensor> {
        let (out_shape, slices) = self.reduction_slices("reduce_sum", axis)?;
        let data: Vec<f64> = slices.iter().map(|s| s.iter().map(|&i| self.data()[i]).sum()).collect();
        let out = TensorData::new(out_shape, data)?;
        let in_len = self.value().len();
        Ok(record(&[self], "reduce_sum", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    for (slot, slice) in g.iter().zip(&slices) {
                        for &i in slice {
                            gx[i] += slot;
                        }
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    pub fn reduce_max(&self, axis: Option<usize>) -> Result<Tensor> {
        let (out_shape, slices) = self.reduction_slices("reduce_max", axis)?;
        let mut data = Vec::with_capacity(slices.len());
        let mut argmax = Vec::with_capacity(slices.len());
        for slice in &slices {
            let mut best_i = slice[0];
            let mut best_v = self.data()[slice[0]];
            for &i in &slice[1..] {
                if self.data()[i] > best_v {
                    best_v = self.data()[i];
                    best_i = i;
                }
            }
            data.push(best_v);
            argmax.push(best_i);
        }
        let out = TensorData::new(out_shape, data)?;
        let in_len = self.value().len();
        Ok(record(&[self], "reduce_max", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    for (slot, &i) in g.iter().zip(&argmax) {
                        gx[i] += slot;
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    // ── normalizers ──────────────────────────────────────────────────

    /// Softmax along `axis`, computed with a max shift for stability.
    pub fn softmax(&self, axis: Option<usize>) -> Result<Tensor> {
        let (_, slices) = self.reduction_slices("softmax", axis)?;
        let mut data = vec![0.0; self.value().len()];
        for slice in &slices {
            let max = slice.iter().map(|&i| self.data()[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &i in slice {
                let e = (self.data()[i] - max).exp();
                data[i] = e;
                z += e;
            }
            for &i in slice {
                data[i] /= z;
            }
        }
        let out = TensorData::new(self.shape().to_vec(), data)?;
        let in_len = self.value().len();
        Ok(record(&[self], "softmax", out, |value, ids| {
            let y = Rc::clone(value);
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    for slice in &slices {
                        let dot: f64 = slice.iter().map(|&i| g[i] * y.data()[i]).sum();
                        for &i in slice {
                            gx[i] = y.data()[i] * (g[i] - dot);
                        }
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    /// Log-softmax along `axis` from max-shifted logits.
    pub fn log_softmax(&self, axis: Option<usize>) -> Result<Tensor> {
        let (_, slices) = self.reduction_slices("log_softmax", axis)?;
        let mut data = vec![0.0; self.value().len()];
        for slice in &slices {
            let max = slice.iter().map(|&i| self.data()[i]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = slice.iter().map(|&i| (self.data()[i] - max).exp()).sum();
            let log_z = max + z.ln();
            for &i in slice {
                data[i] = self.data()[i] - log_z;
            }
        }
        let out = TensorData::new(self.shape().to_vec(), data)?;
        let in_len = self.value().len();
        Ok(record(&[self], "log_softmax", out, |value, ids| {
            let y = Rc::clone(value);
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    for slice in &slices {
                        let sum_g: f64 = slice.iter().map(|&i| g[i]).sum();
                        for &i in slice {
                            gx[i] = g[i] - y.data()[i].exp() * sum_g;
                        }
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    // ── linear algebra ───────────────────────────────────────────────

    fn square_check(&self, op: &'static str) -> Result<usize> {
        let v = self.value();
        if v.rank() != 2 || v.rows() != v.cols() {
            return Err(TensorError::InvalidArgument {
                op,
                message: format!("expected a square matrix, got shape {:?}", v.shape()),
            });
        }
        Ok(v.rows())
    }

    /// Inverse of a square matrix via LU with partial pivoting.
    pub fn matrix_inverse(&self) -> Result<Tensor> {
        let n = self.square_check("matrix_inverse")?;
        let lu = lu_factor(self.data(), n)?;
        let inv = lu.inverse();
        let out = TensorData::new(vec![n, n], inv)?;
        Ok(record(&[self], "matrix_inverse", out, |value, ids| {
            // d(A⁻¹) = −A⁻¹ · dA · A⁻¹  ⇒  dA = −Cᵀ · g · Cᵀ with C = A⁻¹
            let c = Rc::clone(value);
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let ct = transpose_data(c.data(), n, n);
                    let tmp = mm(&ct, n, n, g, n);
                    let mut ga = mm(&tmp, n, n, &ct, n);
                    for v in &mut ga {
                        *v = -*v;
                    }
                    sink(id, ga);
                }
            })
        }))
    }

    /// Log-determinant of a square matrix with positive determinant.
    pub fn log_det(&self) -> Result<Tensor> {
        let n = self.square_check("log_det")?;
        let lu = lu_factor(self.data(), n)?;
        let sign = lu.det_sign();
        if sign <= 0.0 {
            return Err(TensorError::NonPositiveDet { sign });
        }
        let out = TensorData::scalar(lu.log_abs_det());
        Ok(record(&[self], "log_det", out, |_, ids| {
            let inv = lu.inverse();
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    // d log det A = tr(A⁻¹ dA) ⇒ dA = g · (A⁻¹)ᵀ
                    let mut ga = transpose_data(&inv, n, n);
                    for v in &mut ga {
                        *v *= g[0];
                    }
                    sink(id, ga);
                }
            })
        }))
    }

    // ── shape surgery ────────────────────────────────────────────────

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.value().len() {
            return Err(TensorError::InvalidArgument {
                op: "reshape",
                message: format!("cannot reshape {:?} to {:?}", self.shape(), shape),
            });
        }
        let out = TensorData::new(shape, self.data().to_vec())?;
        Ok(record(&[self], "reshape", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    sink(id, g.to_vec());
                }
            })
        }))
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(TensorError::InvalidArgument { op: "concat", message: "no parts".into() });
        }
        if parts.len() == 1 {
            return Ok(parts[0].clone());
        }
        let rank = parts[0].value().rank();
        for p in parts {
            if p.value().rank() != rank {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: parts[0].shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
        }
        let (out, spans): (TensorData, Vec<(usize, usize)>) = match (rank, axis) {
            (1, 0) => {
                let mut data = Vec::new();
                let mut spans = Vec::new();
                for p in parts {
                    spans.push((data.len(), p.value().len()));
                    data.extend_from_slice(p.data());
                }
                (TensorData::vector(data), spans)
            }
            (2, 0) => {
                let cols = parts[0].value().cols();
                let mut data = Vec::new();
                let mut spans = Vec::new();
                for p in parts {
                    if p.value().cols() != cols {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: parts[0].shape().to_vec(),
                            right: p.shape().to_vec(),
                        });
                    }
                    spans.push((data.len(), p.value().len()));
                    data.extend_from_slice(p.data());
                }
                let rows = data.len() / cols.max(1);
                (TensorData::new(vec![rows, cols], data)?, spans)
            }
            (2, 1) => {
                let rows = parts[0].value().rows();
                let total_cols: usize = parts.iter().map(|p| p.value().cols()).sum();
                for p in parts {
                    if p.value().rows() != rows {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: parts[0].shape().to_vec(),
                            right: p.shape().to_vec(),
                        });
                    }
                }
                let mut data = vec![0.0; rows * total_cols];
                let mut col_offsets = Vec::new();
                let mut offset = 0;
                for p in parts {
                    let c = p.value().cols();
                    col_offsets.push((offset, c));
                    for r in 0..rows {
                        data[r * total_cols + offset..r * total_cols + offset + c]
                            .copy_from_slice(&p.data()[r * c..(r + 1) * c]);
                    }
                    offset += c;
                }
                (TensorData::new(vec![rows, total_cols], data)?, col_offsets)
            }
            _ => {
                return Err(TensorError::InvalidArgument {
                    op: "concat",
                    message: format!("axis {} invalid for rank {}", axis, rank),
                })
            }
        };
        let column_wise = rank == 2 && axis == 1;
        let rows = if column_wise { parts[0].value().rows() } else { 0 };
        let total_cols = if column_wise { out.cols() } else { 0 };
        Ok(record(parts, "concat", out, |_, ids| {
            let ids = ids.to_vec();
            Box::new(move |g, sink| {
                for (idx, id) in ids.iter().enumerate() {
                    let Some(id) = id else { continue };
                    let (offset, extent) = spans[idx];
                    let gp = if column_wise {
                        let mut gp = vec![0.0; rows * extent];
                        for r in 0..rows {
                            gp[r * extent..(r + 1) * extent]
                                .copy_from_slice(&g[r * total_cols + offset..r * total_cols + offset + extent]);
                        }
                        gp
                    } else {
                        g[offset..offset + extent].to_vec()
                    };
                    sink(*id, gp);
                }
            })
        }))
    }

    /// Rows [r0, r1) of a matrix.
    pub fn slice_rows(&self, r0: usize, r1: usize) -> Result<Tensor> {
        let v = self.value();
        if v.rank() != 2 || r1 > v.rows() || r0 > r1 {
            return Err(TensorError::InvalidArgument {
                op: "slice_rows",
                message: format!("rows {}..{} invalid for shape {:?}", r0, r1, v.shape()),
            });
        }
        let cols = v.cols();
        let data = v.data()[r0 * cols..r1 * cols].to_vec();
        let out = TensorData::new(vec![r1 - r0, cols], data)?;
        let in_len = v.len();
        Ok(record(&[self], "slice_rows", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    gx[r0 * cols..r0 * cols + g.len()].copy_from_slice(g);
                    sink(id, gx);
                }
            })
        }))
    }

    /// Columns [c0, c1) of a matrix.
    pub fn slice_cols(&self, c0: usize, c1: usize) -> Result<Tensor> {
        let v = self.value();
        if v.rank() != 2 || c1 > v.cols() || c0 > c1 {
            return Err(TensorError::InvalidArgument {
                op: "slice_cols",
                message: format!("cols {}..{} invalid for shape {:?}", c0, c1, v.shape()),
            });
        }
        let (rows, cols) = (v.rows(), v.cols());
        let width = c1 - c0;
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&v.data()[r * cols + c0..r * cols + c1]);
        }
        let out = TensorData::new(vec![rows, width], data)?;
        Ok(record(&[self], "slice_cols", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        gx[r * cols + c0..r * cols + c1].copy_from_slice(&g[r * width..(r + 1) * width]);
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&self, i: usize) -> Result<Tensor> {
        let cols = if self.value().rank() == 2 { self.value().cols() } else { 0 };
        self.slice_rows(i, i + 1)?.reshape(vec![cols])
    }

    /// Elements [a, b) of a vector.
    pub fn slice(&self, a: usize, b: usize) -> Result<Tensor> {
        let v = self.value();
        if v.rank() != 1 || b > v.len() || a > b {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                message: format!("range {}..{} invalid for shape {:?}", a, b, v.shape()),
            });
        }
        let out = TensorData::vector(v.data()[a..b].to_vec());
        let in_len = v.len();
        Ok(record(&[self], "slice", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    gx[a..a + g.len()].copy_from_slice(g);
                    sink(id, gx);
                }
            })
        }))
    }

    /// Single element of a vector as a shape-[1] tensor.
    pub fn element(&self, i: usize) -> Result<Tensor> {
        self.slice(i, i + 1)
    }

    // ── gather / scatter ─────────────────────────────────────────────

    /// Rows of a matrix selected by index, with scatter-add backward.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let v = self.value();
        if v.rank() != 2 {
            return Err(TensorError::InvalidArgument {
                op: "gather_rows",
                message: format!("expected a matrix, got shape {:?}", v.shape()),
            });
        }
        let (rows, cols) = (v.rows(), v.cols());
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TensorError::InvalidArgument {
                op: "gather_rows",
                message: format!("row index {} out of range for {} rows", bad, rows),
            });
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(&v.data()[i * cols..(i + 1) * cols]);
        }
        let out = TensorData::new(vec![indices.len(), cols], data)?;
        let indices = Rc::new(indices.to_vec());
        Ok(record(&[self], "gather_rows", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; rows * cols];
                    for (slot, &i) in indices.iter().enumerate() {
                        for c in 0..cols {
                            gx[i * cols + c] += g[slot * cols + c];
                        }
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    /// Elements of a vector selected by index, with scatter-add backward.
    pub fn gather_elements(&self, indices: &[usize]) -> Result<Tensor> {
        let v = self.value();
        if v.rank() != 1 {
            return Err(TensorError::InvalidArgument {
                op: "gather_elements",
                message: format!("expected a vector, got shape {:?}", v.shape()),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.len()) {
            return Err(TensorError::InvalidArgument {
                op: "gather_elements",
                message: format!("index {} out of range for length {}", bad, v.len()),
            });
        }
        let data: Vec<f64> = indices.iter().map(|&i| v.data()[i]).collect();
        let out = TensorData::vector(data);
        let in_len = v.len();
        let indices = Rc::new(indices.to_vec());
        Ok(record(&[self], "gather_elements", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    for (slot, &i) in indices.iter().enumerate() {
                        gx[i] += g[slot];
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    /// Scale each row of a matrix by the matching entry of a weight vector.
    /// Differentiable in both the matrix and the weights.
    pub fn scale_rows(&self, weights: &Tensor) -> Result<Tensor> {
        let (v, w) = (self.value(), weights.value());
        if v.rank() != 2 || w.rank() != 1 || w.len() != v.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                left: v.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        let (rows, cols) = (v.rows(), v.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let wr = w.data()[r];
            data.extend(v.data()[r * cols..(r + 1) * cols].iter().map(|&x| x * wr));
        }
        let out = TensorData::new(vec![rows, cols], data)?;
        Ok(record(&[self, weights], "scale_rows", out, |_, ids| {
            let x = self.shared_value();
            let w = weights.shared_value();
            let (ix, iw) = (ids[0], ids[1]);
            Box::new(move |g, sink| {
                if let Some(ix) = ix {
                    let mut gx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let wr = w.data()[r];
                        for c in 0..cols {
                            gx[r * cols + c] = g[r * cols + c] * wr;
                        }
                    }
                    sink(ix, gx);
                }
                if let Some(iw) = iw {
                    let mut gw = vec![0.0; rows];
                    for r in 0..rows {
                        gw[r] = (0..cols).map(|c| g[r * cols + c] * x.data()[r * cols + c]).sum();
                    }
                    sink(iw, gw);
                }
            })
        }))
    }

    /// Sum rows of a matrix into `num_segments` buckets given per-row segment
    /// ids. Rows mapping to no bucket do not exist; buckets receiving no rows
    /// come out as zero.
    pub fn segment_sum(&self, segments: &[usize], num_segments: usize) -> Result<Tensor> {
        let v = self.value();
        if v.rank() != 2 || segments.len() != v.rows() {
            return Err(TensorError::InvalidArgument {
                op: "segment_sum",
                message: format!("{} segment ids for shape {:?}", segments.len(), v.shape()),
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= num_segments) {
            return Err(TensorError::InvalidArgument {
                op: "segment_sum",
                message: format!("segment id {} out of range for {} segments", bad, num_segments),
            });
        }
        let cols = v.cols();
        let mut data = vec![0.0; num_segments * cols];
        for (r, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                data[s * cols + c] += v.data()[r * cols + c];
            }
        }
        let out = TensorData::new(vec![num_segments, cols], data)?;
        let rows = v.rows();
        let segments = Rc::new(segments.to_vec());
        Ok(record(&[self], "segment_sum", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; rows * cols];
                    for (r, &s) in segments.iter().enumerate() {
                        gx[r * cols..(r + 1) * cols].copy_from_slice(&g[s * cols..(s + 1) * cols]);
                    }
                    sink(id, gx);
                }
            })
        }))
    }

    /// Sparse linear map: `out[oi] += coeff * self[ii]` for every triple
    /// `(oi, ii, coeff)`. The backward rule is the transposed scatter.
    pub fn linear_assemble(
        &self,
        out_shape: Vec<usize>,
        triples: Rc<Vec<(usize, usize, f64)>>,
    ) -> Result<Tensor> {
        let out_len: usize = out_shape.iter().product();
        let in_len = self.value().len();
        for &(oi, ii, _) in triples.iter() {
            if oi >= out_len || ii >= in_len {
                return Err(TensorError::InvalidArgument {
                    op: "linear_assemble",
                    message: format!("triple ({}, {}) out of range ({} out, {} in)", oi, ii, out_len, in_len),
                });
            }
        }
        let mut data = vec![0.0; out_len];
        for &(oi, ii, c) in triples.iter() {
            data[oi] += c * self.data()[ii];
        }
        let out = TensorData::new(out_shape, data)?;
        Ok(record(&[self], "linear_assemble", out, |_, ids| {
            let id = ids[0];
            Box::new(move |g, sink| {
                if let Some(id) = id {
                    let mut gx = vec![0.0; in_len];
                    for &(oi, ii, c) in triples.iter() {
                        gx[ii] += c * g[oi];
                    }
                    sink(id, gx);
                }
            })
        }))
    }
}

/// Stack vectors of equal width into a matrix, one vector per row.
pub fn stack_rows(parts: &[&Tensor]) -> Result<Tensor> {
    let rows: Vec<Tensor> = parts
        .iter()
        .map(|p| p.reshape(vec![1, p.value().len()]))
        .collect::<Result<_>>()?;
    let refs: Vec<&Tensor> = rows.iter().collect();
    Tensor::concat(&refs, 0)
}

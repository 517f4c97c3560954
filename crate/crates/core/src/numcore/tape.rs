//! Reverse-mode automatic differentiation over a per-computation tape.
//!
//! A `Tape` records every primitive applied to it; `backward` walks the
//! record in reverse and accumulates exact analytic gradients into
//! per-node buffers. Tapes are cheap and single-use: build one per batch,
//! run backward once, read the leaf gradients, drop it. Gradient buffers
//! accumulate additively, so a fresh tape is the reset.

use crate::error::{Error, Result};
use crate::numcore::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Elementwise sum of two same-shape tensors.
    Add,
    /// Matrix plus row vector, broadcast down the rows.
    AddBias,
    /// Elementwise (Hadamard) product.
    Mul,
    Scale(f64),
    AddScalar,
    Matmul,
    Transpose,
    Conv1d { stride: usize },
    Tanh,
    Sigmoid,
    Relu,
    MaxScalar(f64),
    SoftmaxRows,
    ConcatRows,
    ConcatCols,
    SliceRows { start: usize },
    SumAll,
    L2Normalize,
    CosineSim,
    Diag,
}

struct Node {
    value: Tensor,
    op: Op,
    parents: Vec<NodeId>,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Tensor>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, parents: Vec<NodeId>) -> NodeId {
        self.nodes.push(Node { value, op, parents });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, vec![])
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target with respect to this node.
    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.grads[id.0]
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::contract(format!(
                "add: shape {:?} vs {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        Ok(self.push(value, Op::Add, vec![a, b]))
    }

    /// `m` is [r, c], `bias` is [1, c] or [c]; the bias is added to every row.
    pub fn add_bias(&mut self, m: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = (self.nodes[m.0].value.rows(), self.nodes[m.0].value.cols());
        if self.nodes[bias.0].value.len() != c {
            return Err(Error::contract(format!(
                "add_bias: matrix cols {} vs bias len {}",
                c,
                self.nodes[bias.0].value.len()
            )));
        }
        let mut data = self.nodes[m.0].value.data().to_vec();
        let b = self.nodes[bias.0].value.data();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += b[j];
            }
        }
        let value = Tensor::new(self.shape_of(m).to_vec(), data)?;
        Ok(self.push(value, Op::AddBias, vec![m, bias]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::contract(format!(
                "mul: shape {:?} vs {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul, vec![a, b]))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let data = self.nodes[a.0].value.data().iter().map(|x| x * k).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data).expect("same shape");
        self.push(value, Op::Scale(k), vec![a])
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        let data = self.nodes[a.0].value.data().iter().map(|x| x + k).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data).expect("same shape");
        self.push(value, Op::AddScalar, vec![a])
    }

    /// Matrix product of two 2-d tensors: [m, k] x [k, n] -> [m, n].
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (am, ak) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
        let (bk, bn) = (self.nodes[b.0].value.rows(), self.nodes[b.0].value.cols());
        if ak != bk {
            return Err(Error::contract(format!(
                "matmul: inner dims {} vs {}",
                ak, bk
            )));
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = vec![0.0; am * bn];
        for i in 0..am {
            for k in 0..ak {
                let aik = av[i * ak + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[k * bn..(k + 1) * bn];
                let orow = &mut out[i * bn..(i + 1) * bn];
                for j in 0..bn {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let value = Tensor::new(vec![am, bn], out)?;
        Ok(self.push(value, Op::Matmul, vec![a, b]))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
        let v = self.nodes[a.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out).expect("same len");
        self.push(value, Op::Transpose, vec![a])
    }

    /// 1-d convolution over time. `input` is [T, c_in], `kernel` is
    /// [c_out, c_in, k]; output is [T', c_out] with
    /// T' = floor((T - k) / stride) + 1.
    pub fn conv1d(&mut self, input: NodeId, kernel: NodeId, stride: usize) -> Result<NodeId> {
        if stride == 0 {
            return Err(Error::contract("conv1d: stride must be positive"));
        }
        let ishape = self.shape_of(input).to_vec();
        let kshape = self.shape_of(kernel).to_vec();
        if ishape.len() != 2 || kshape.len() != 3 {
            return Err(Error::contract(format!(
                "conv1d: expected [T, c_in] and [c_out, c_in, k], got {:?} and {:?}",
                ishape, kshape
            )));
        }
        let (t, c_in) = (ishape[0], ishape[1]);
        let (c_out, kc_in, k) = (kshape[0], kshape[1], kshape[2]);
        if kc_in != c_in {
            return Err(Error::contract(format!(
                "conv1d: input channels {} vs kernel channels {}",
                c_in, kc_in
            )));
        }
        if t < k {
            return Err(Error::degenerate(format!(
                "conv1d: input length {} shorter than kernel {}",
                t, k
            )));
        }
        let t_out = (t - k) / stride + 1;
        let iv = self.nodes[input.0].value.data();
        let kv = self.nodes[kernel.0].value.data();
        let mut out = vec![0.0; t_out * c_out];
        for to in 0..t_out {
            let base = to * stride;
            for co in 0..c_out {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    let kbase = (co * c_in + ci) * k;
                    for kk in 0..k {
                        acc += iv[(base + kk) * c_in + ci] * kv[kbase + kk];
                    }
                }
                out[to * c_out + co] = acc;
            }
        }
        let value = Tensor::new(vec![t_out, c_out], out)?;
        Ok(self.push(value, Op::Conv1d { stride }, vec![input, kernel]))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0].value.data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data).expect("same shape");
        self.push(value, Op::Tanh, vec![a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data).expect("same shape");
        self.push(value, Op::Sigmoid, vec![a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0].value.data().iter().map(|x| x.max(0.0)).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data).expect("same shape");
        self.push(value, Op::Relu, vec![a])
    }

    /// Elementwise max(x, c). The subgradient at x == c is taken as 0.
    pub fn max_with_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.nodes[a.0].value.data().iter().map(|x| x.max(c)).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data).expect("same shape");
        self.push(value, Op::MaxScalar(c), vec![a])
    }

    /// Row-wise softmax (a 1-d tensor is treated as a single row).
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let (r, c) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
        let v = self.nodes[a.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &v[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                out[i * c + j] = e;
                z += e;
            }
            for j in 0..c {
                out[i * c + j] /= z;
            }
        }
        let value = Tensor::new(self.shape_of(a).to_vec(), out).expect("same shape");
        self.push(value, Op::SoftmaxRows, vec![a])
    }

    /// Stack 2-d tensors with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::degenerate("concat_rows: no inputs"));
        }
        let cols = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.nodes[p.0].value.cols() != cols {
                return Err(Error::contract("concat_rows: column mismatch"));
            }
            rows += self.nodes[p.0].value.rows();
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(value, Op::ConcatRows, parts.to_vec()))
    }

    /// Concatenate 2-d tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::degenerate("concat_cols: no inputs"));
        }
        let rows = self.nodes[parts[0].0].value.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.nodes[p.0].value.rows() != rows {
                return Err(Error::contract("concat_cols: row mismatch"));
            }
            widths.push(self.nodes[p.0].value.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (idx, &p) in parts.iter().enumerate() {
            let w = widths[idx];
            let v = self.nodes[p.0].value.data();
            for i in 0..rows {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&v[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(value, Op::ConcatCols, parts.to_vec()))
    }

    /// Rows [start, end) of a 2-d tensor.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (r, c) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
        if start >= end || end > r {
            return Err(Error::contract(format!(
                "slice_rows: [{start}, {end}) out of {r} rows"
            )));
        }
        let v = self.nodes[a.0].value.data();
        let value = Tensor::new(vec![end - start, c], v[start * c..end * c].to_vec())?;
        Ok(self.push(value, Op::SliceRows { start }, vec![a]))
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll, vec![a])
    }

    /// Whole-tensor L2 normalization: x / ||x||.
    pub fn l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.nodes[a.0].value.norm();
        if n <= 1e-12 {
            return Err(Error::degenerate(format!(
                "l2_normalize: norm {n} too close to zero"
            )));
        }
        let data = self.nodes[a.0].value.data().iter().map(|x| x / n).collect();
        let value = Tensor::new(self.shape_of(a).to_vec(), data)?;
        Ok(self.push(value, Op::L2Normalize, vec![a]))
    }

    /// Cosine similarity of two tensors viewed as flat vectors.
    pub fn cosine_similarity(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.nodes[a.0].value.len() != self.nodes[b.0].value.len() {
            return Err(Error::contract("cosine_similarity: length mismatch"));
        }
        let na = self.nodes[a.0].value.norm();
        let nb = self.nodes[b.0].value.norm();
        if na <= 1e-12 || nb <= 1e-12 {
            return Err(Error::degenerate("cosine_similarity: zero-norm operand"));
        }
        let dot: f64 = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x * y)
            .sum();
        let value = Tensor::scalar(dot / (na * nb));
        Ok(self.push(value, Op::CosineSim, vec![a, b]))
    }

    /// Main diagonal of a square matrix, as a column vector [n, 1].
    pub fn diag(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
        if r != c {
            return Err(Error::contract(format!("diag: matrix is {r}x{c}")));
        }
        let v = self.nodes[a.0].value.data();
        let data: Vec<f64> = (0..r).map(|i| v[i * c + i]).collect();
        let value = Tensor::new(vec![r, 1], data)?;
        Ok(self.push(value, Op::Diag, vec![a]))
    }

    /// Backpropagate from a scalar node, filling per-node gradient buffers.
    pub fn backward(&mut self, target: NodeId) -> Result<()> {
        if self.nodes[target.0].value.len() != 1 {
            return Err(Error::contract("backward: target must be scalar"));
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape().to_vec()))
            .collect();
        self.grads[target.0].data_mut()[0] = 1.0;

        for idx in (0..=target.0).rev() {
            if self.grads[idx].data().iter().all(|&g| g == 0.0) {
                continue;
            }
            let (op, parents) = (self.nodes[idx].op.clone(), self.nodes[idx].parents.clone());
            match op {
                Op::Leaf => {}
                Op::Add => {
                    let g = self.grads[idx].clone();
                    accumulate(&mut self.grads[parents[0].0], g.data());
                    accumulate(&mut self.grads[parents[1].0], g.data());
                }
                Op::AddBias => {
                    let g = self.grads[idx].clone();
                    let c = self.nodes[idx].value.cols();
                    let r = self.nodes[idx].value.rows();
                    accumulate(&mut self.grads[parents[0].0], g.data());
                    let gb = self.grads[parents[1].0].data_mut();
                    for i in 0..r {
                        for (j, dst) in gb.iter_mut().enumerate().take(c) {
                            *dst += g.data()[i * c + j];
                        }
                    }
                }
                Op::Mul => {
                    let g = self.grads[idx].clone();
                    let av = self.nodes[parents[0].0].value.clone();
                    let bv = self.nodes[parents[1].0].value.clone();
                    for (dst, (gi, bi)) in self.grads[parents[0].0]
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(bv.data()))
                    {
                        *dst += gi * bi;
                    }
                    for (dst, (gi, ai)) in self.grads[parents[1].0]
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(av.data()))
                    {
                        *dst += gi * ai;
                    }
                }
                Op::Scale(k) => {
                    let g = self.grads[idx].clone();
                    for (dst, gi) in self.grads[parents[0].0].data_mut().iter_mut().zip(g.data()) {
                        *dst += k * gi;
                    }
                }
                Op::AddScalar => {
                    let g = self.grads[idx].clone();
                    accumulate(&mut self.grads[parents[0].0], g.data());
                }
                Op::Matmul => {
                    let g = self.grads[idx].clone();
                    let (m, n) = (self.nodes[idx].value.rows(), self.nodes[idx].value.cols());
                    let k = self.nodes[parents[0].0].value.cols();
                    let av = self.nodes[parents[0].0].value.clone();
                    let bv = self.nodes[parents[1].0].value.clone();
                    {
                        // dA[i,k] += sum_j g[i,j] * B[k,j]
                        let ga = self.grads[parents[0].0].data_mut();
                        for i in 0..m {
                            let grow = &g.data()[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let brow = &bv.data()[kk * n..(kk + 1) * n];
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += grow[j] * brow[j];
                                }
                                ga[i * k + kk] += acc;
                            }
                        }
                    }
                    {
                        // dB[k,j] += sum_i A[i,k] * g[i,j]
                        let gb = self.grads[parents[1].0].data_mut();
                        for i in 0..m {
                            let grow = &g.data()[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let aik = av.data()[i * k + kk];
                                if aik == 0.0 {
                                    continue;
                                }
                                let brow = &mut gb[kk * n..(kk + 1) * n];
                                for j in 0..n {
                                    brow[j] += aik * grow[j];
                                }
                            }
                        }
                    }
                }
                Op::Transpose => {
                    let g = self.grads[idx].clone();
                    let (r, c) = (self.nodes[idx].value.rows(), self.nodes[idx].value.cols());
                    let ga = self.grads[parents[0].0].data_mut();
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g.data()[i * c + j];
                        }
                    }
                }
                Op::Conv1d { stride } => {
                    let g = self.grads[idx].clone();
                    let ishape = self.nodes[parents[0].0].value.shape().to_vec();
                    let kshape = self.nodes[parents[1].0].value.shape().to_vec();
                    let (c_in, c_out, k) = (ishape[1], kshape[0], kshape[2]);
                    let t_out = self.nodes[idx].value.rows();
                    let iv = self.nodes[parents[0].0].value.clone();
                    let kv = self.nodes[parents[1].0].value.clone();
                    {
                        let gi = self.grads[parents[0].0].data_mut();
                        for to in 0..t_out {
                            let base = to * stride;
                            for co in 0..c_out {
                                let go = g.data()[to * c_out + co];
                                if go == 0.0 {
                                    continue;
                                }
                                for ci in 0..c_in {
                                    let kbase = (co * c_in + ci) * k;
                                    for kk in 0..k {
                                        gi[(base + kk) * c_in + ci] += go * kv.data()[kbase + kk];
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gk = self.grads[parents[1].0].data_mut();
                        for to in 0..t_out {
                            let base = to * stride;
                            for co in 0..c_out {
                                let go = g.data()[to * c_out + co];
                                if go == 0.0 {
                                    continue;
                                }
                                for ci in 0..c_in {
                                    let kbase = (co * c_in + ci) * k;
                                    for kk in 0..k {
                                        gk[kbase + kk] += go * iv.data()[(base + kk) * c_in + ci];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Tanh => {
                    let g = self.grads[idx].clone();
                    let y = self.nodes[idx].value.clone();
                    for (dst, (gi, yi)) in self.grads[parents[0].0]
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(y.data()))
                    {
                        *dst += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid => {
                    let g = self.grads[idx].clone();
                    let y = self.nodes[idx].value.clone();
                    for (dst, (gi, yi)) in self.grads[parents[0].0]
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(y.data()))
                    {
                        *dst += gi * yi * (1.0 - yi);
                    }
                }
                Op::Relu => {
                    let g = self.grads[idx].clone();
                    let x = self.nodes[parents[0].0].value.clone();
                    for (dst, (gi, xi)) in self.grads[parents[0].0]
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(x.data()))
                    {
                        *dst += if *xi > 0.0 { *gi } else { 0.0 };
                    }
                }
                Op::MaxScalar(c) => {
                    let g = self.grads[idx].clone();
                    let x = self.nodes[parents[0].0].value.clone();
                    for (dst, (gi, xi)) in self.grads[parents[0].0]
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(x.data()))
                    {
                        *dst += if *xi > c { *gi } else { 0.0 };
                    }
                }
                Op::SoftmaxRows => {
                    let g = self.grads[idx].clone();
                    let y = self.nodes[idx].value.clone();
                    let (r, c) = (y.rows(), y.cols());
                    let ga = self.grads[parents[0].0].data_mut();
                    for i in 0..r {
                        let yr = &y.data()[i * c..(i + 1) * c];
                        let gr = &g.data()[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                        for j in 0..c {
                            ga[i * c + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
                Op::ConcatRows => {
                    let g = self.grads[idx].clone();
                    let c = self.nodes[idx].value.cols();
                    let mut row = 0;
                    for p in parents {
                        let pr = self.nodes[p.0].value.rows();
                        accumulate(
                            &mut self.grads[p.0],
                            &g.data()[row * c..(row + pr) * c],
                        );
                        row += pr;
                    }
                }
                Op::ConcatCols => {
                    let g = self.grads[idx].clone();
                    let total = self.nodes[idx].value.cols();
                    let rows = self.nodes[idx].value.rows();
                    let mut offset = 0;
                    for p in parents {
                        let w = self.nodes[p.0].value.cols();
                        let gp = self.grads[p.0].data_mut();
                        for i in 0..rows {
                            for j in 0..w {
                                gp[i * w + j] += g.data()[i * total + offset + j];
                            }
                        }
                        offset += w;
                    }
                }
                Op::SliceRows { start } => {
                    let g = self.grads[idx].clone();
                    let c = self.nodes[idx].value.cols();
                    let rows = self.nodes[idx].value.rows();
                    let gp = self.grads[parents[0].0].data_mut();
                    for i in 0..rows {
                        for j in 0..c {
                            gp[(start + i) * c + j] += g.data()[i * c + j];
                        }
                    }
                }
                Op::SumAll => {
                    let g = self.grads[idx].item();
                    for dst in self.grads[parents[0].0].data_mut() {
                        *dst += g;
                    }
                }
                Op::L2Normalize => {
                    let g = self.grads[idx].clone();
                    let y = self.nodes[idx].value.clone();
                    let n = self.nodes[parents[0].0].value.norm();
                    let dot: f64 = g.data().iter().zip(y.data()).map(|(gi, yi)| gi * yi).sum();
                    for (dst, (gi, yi)) in self.grads[parents[0].0]
                        .data_mut()
                        .iter_mut()
                        .zip(g.data().iter().zip(y.data()))
                    {
                        *dst += (gi - dot * yi) / n;
                    }
                }
                Op::CosineSim => {
                    let g = self.grads[idx].item();
                    let a = self.nodes[parents[0].0].value.clone();
                    let b = self.nodes[parents[1].0].value.clone();
                    let na = a.norm();
                    let nb = b.norm();
                    let cosv = self.nodes[idx].value.item();
                    for (i, dst) in self.grads[parents[0].0].data_mut().iter_mut().enumerate() {
                        *dst += g * (b.data()[i] / (na * nb) - cosv * a.data()[i] / (na * na));
                    }
                    for (i, dst) in self.grads[parents[1].0].data_mut().iter_mut().enumerate() {
                        *dst += g * (a.data()[i] / (na * nb) - cosv * b.data()[i] / (nb * nb));
                    }
                }
                Op::Diag => {
                    let g = self.grads[idx].clone();
                    let n = self.nodes[idx].value.rows();
                    let gp = self.grads[parents[0].0].data_mut();
                    for i in 0..n {
                        gp[i * n + i] += g.data()[i];
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(dst: &mut Tensor, src: &[f64]) {
    for (d, s) in dst.data_mut().iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn l2_normalize_three_four_five() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[3.0, 4.0]));
        let y = tape.l2_normalize(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.6, 0.8]);
    }

    #[test]
    fn l2_normalize_rejects_near_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1e-13, 0.0]));
        assert!(matches!(
            tape.l2_normalize(x),
            Err(crate::error::Error::Degenerate(_))
        ));
    }

    #[test]
    fn l2_normalize_unit_norm_within_1e12() {
        let mut rng = crate::numcore::rng::Rng::new(4);
        for _ in 0..20 {
            let mut tape = Tape::new();
            let v: Vec<f64> = (0..12).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let x = tape.leaf(Tensor::vector(&v));
            let y = tape.l2_normalize(x).unwrap();
            assert!((tape.value(y).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_similarity_identity_and_orthogonal() {
        let mut tape = Tape::new();
        let u = tape.leaf(Tensor::vector(&[0.6, 0.8]));
        let v = tape.leaf(Tensor::vector(&[-0.8, 0.6]));
        let uu = tape.cosine_similarity(u, u).unwrap();
        let uv = tape.cosine_similarity(u, v).unwrap();
        assert!((tape.value(uu).item() - 1.0).abs() < 1e-12);
        assert!(tape.value(uv).item().abs() < 1e-12);
    }

    #[test]
    fn conv1d_identity_kernel_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![5, 1], vec![1.0, -2.0, 3.0, 0.5, 4.0]));
        let k = tape.leaf(t(vec![1, 1, 1], vec![1.0]));
        let y = tape.conv1d(x, k, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -2.0, 3.0, 0.5, 4.0]);
    }

    #[test]
    fn conv1d_output_length_formula() {
        let mut rng = crate::numcore::rng::Rng::new(9);
        for &(t_len, k, s) in &[(10usize, 3usize, 1usize), (10, 3, 2), (17, 6, 2), (6, 6, 4)] {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::uniform(vec![t_len, 2], 1.0, &mut rng));
            let ker = tape.leaf(Tensor::uniform(vec![3, 2, k], 1.0, &mut rng));
            let y = tape.conv1d(x, ker, s).unwrap();
            assert_eq!(tape.value(y).rows(), (t_len - k) / s + 1);
        }
    }

    #[test]
    fn conv1d_too_short_is_degenerate() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![2, 1], vec![1.0, 2.0]));
        let k = tape.leaf(t(vec![1, 1, 3], vec![1.0, 1.0, 1.0]));
        assert!(matches!(
            tape.conv1d(x, k, 1),
            Err(crate::error::Error::Degenerate(_))
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = crate::numcore::rng::Rng::new(2);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::uniform(vec![6, 9], 4.0, &mut rng));
        let y = tape.softmax(x);
        for i in 0..6 {
            let row_sum: f64 = (0..9).map(|j| tape.value(y).at2(i, j)).sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
            assert!((0..9).all(|j| tape.value(y).at2(i, j) >= 0.0));
        }
    }

    #[test]
    fn matmul_shape_mismatch_is_contract_error() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![4, 2]));
        assert!(matches!(
            tape.matmul(a, b),
            Err(crate::error::Error::Contract(_))
        ));
    }

    #[test]
    fn backward_through_simple_chain() {
        // f = sum((2x)^2) = 4 * sum(x^2), df/dx = 8x
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0, -2.0, 3.0]));
        let y = tape.scale(x, 2.0);
        let y2 = tape.mul(y, y).unwrap();
        let s = tape.sum(y2);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).data(), &[8.0, -16.0, 24.0]);
    }

    #[test]
    fn backward_matmul_matches_known_gradient() {
        // f = sum(A B); dA = 1 B^T, dB = A^T 1
        let mut tape = Tape::new();
        let a = tape.leaf(t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(t(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.sum(c);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).data(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(tape.grad(b).data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn diag_and_transpose_roundtrip_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let at = tape.transpose(a);
        let d = tape.diag(at).unwrap();
        let s = tape.sum(d);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).data(), &[1.0, 0.0, 0.0, 1.0]);
    }
}

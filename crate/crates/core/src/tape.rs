//! Reverse-mode automatic differentiation over an eagerly evaluated tape.
//!
//! Every operation computes its value immediately and records enough to replay
//! the adjoint in reverse order. Shape errors are programmer errors and panic;
//! non-finite values are caught at the op that produced them.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryKind<T> {
    Neg,
    Exp,
    Abs,
    Silu,
    Sigmoid,
    Softplus,
    Scale(T),
    AddConst(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
    Min,
}

pub(crate) enum Op<T: Scalar> {
    Leaf,
    Binary {
        kind: BinaryKind,
        lhs: Var,
        rhs: Var,
    },
    Unary {
        kind: UnaryKind<T>,
        input: Var,
    },
    Matmul {
        lhs: Var,
        rhs: Var,
    },
    Reshape {
        input: Var,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Reduce {
        kind: ReduceKind,
        input: Var,
        axes: Vec<usize>,
        /// For max/min: flat input index feeding each output element.
        arg: Vec<usize>,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
    },
    DwConv3x3 {
        input: Var,
        weight: Var,
        bias: Var,
    },
    LayerNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        /// Per-row (mean, inv_std).
        stats: Vec<(T, T)>,
    },
    Gather {
        input: Var,
        perm: Vec<usize>,
    },
    SelectiveScan(Box<ScanRecord<T>>),
}

/// Saved forward state of the selective-scan op, consumed by its adjoint.
pub(crate) struct ScanRecord<T> {
    pub x: Var,       // (L, C)
    pub delta: Var,   // (L, C), positive
    pub b_in: Var,    // (L, N)
    pub c_in: Var,    // (L, N)
    pub a_diag: Var,  // (C, N), negative
    pub d_skip: Var,  // (C,)
    pub a_bar: Vec<T>, // (L, C, N)
    pub h: Vec<T>,     // (L, C, N)
}

struct Node<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    op: Op<T>,
}

#[derive(Debug, thiserror::Error)]
pub enum TapeError {
    #[error("backward requires a scalar loss, got {0} elements")]
    NonScalarLoss(usize),
    #[error("backward called twice without a new forward pass")]
    BackwardTwice,
    #[error("empty tape")]
    EmptyTape,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value.shape().to_vec(), value.into_data(), requires_grad, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].data.clone())
    }

    /// Gradient of the last backward pass w.r.t. `v`, if it flowed.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, requires_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value produced by {} (shape {:?})",
            op_name(&op),
            shape
        );
        self.nodes.push(Node { shape, data, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn var_requires_grad(&self, v: Var) -> bool {
        self.requires(v)
    }

    pub(crate) fn node_op(&self, i: usize) -> &Op<T> {
        &self.nodes[i].op
    }

    pub(crate) fn push_scan(
        &mut self,
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        record: ScanRecord<T>,
    ) -> Var {
        self.push(shape, data, requires_grad, Op::SelectiveScan(Box::new(record)))
    }

    pub(crate) fn accumulate_grad(&mut self, v: Var, contrib: &[T]) {
        self.accumulate(v, contrib)
    }

    // ---- elementwise / broadcasting -------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinaryKind::Div, a, b)
    }

    fn binary(&mut self, kind: BinaryKind, lhs: Var, rhs: Var) -> Var {
        let out_shape = broadcast_shape(self.shape(lhs), self.shape(rhs));
        let la = Layout::broadcast(self.shape(lhs), &out_shape);
        let lb = Layout::broadcast(self.shape(rhs), &out_shape);
        let n: usize = out_shape.iter().product();
        let mut out = Vec::with_capacity(n);
        {
            let a = self.data(lhs);
            let b = self.data(rhs);
            let mut it = BroadcastIter::new(&out_shape, &la, &lb);
            for _ in 0..n {
                let (oa, ob) = it.next_offsets();
                let (x, y) = (a[oa], b[ob]);
                out.push(match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                });
            }
        }
        let rg = self.requires(lhs) || self.requires(rhs);
        self.push(out_shape, out, rg, Op::Binary { kind, lhs, rhs })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Abs, a)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Silu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Softplus, a)
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        self.unary(UnaryKind::Scale(k), a)
    }

    pub fn add_const(&mut self, a: Var, k: T) -> Var {
        self.unary(UnaryKind::AddConst(k), a)
    }

    fn unary(&mut self, kind: UnaryKind<T>, input: Var) -> Var {
        let shape = self.shape(input).to_vec();
        let out: Vec<T> = self.data(input).iter().map(|&x| unary_eval(kind, x)).collect();
        let rg = self.requires(input);
        self.push(shape, out, rg, Op::Unary { kind, input })
    }

    // ---- linear algebra --------------------------------------------------

    /// (M, K) x (K, N) -> (M, N).
    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Var {
        let (ls, rs) = (self.shape(lhs), self.shape(rhs));
        assert_eq!(ls.len(), 2, "matmul lhs must be rank 2, got {ls:?}");
        assert_eq!(rs.len(), 2, "matmul rhs must be rank 2, got {rs:?}");
        assert_eq!(ls[1], rs[0], "matmul inner dims differ: {ls:?} x {rs:?}");
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let mut out = vec![T::zero(); m * n];
        {
            let a = self.data(lhs);
            let b = self.data(rhs);
            for i in 0..m {
                for p in 0..k {
                    let aip = a[i * k + p];
                    let brow = &b[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] = orow[j] + aip * brow[j];
                    }
                }
            }
        }
        let rg = self.requires(lhs) || self.requires(rhs);
        self.push(vec![m, n], out, rg, Op::Matmul { lhs, rhs })
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data(input).len(),
            "reshape changes element count"
        );
        let data = self.data(input).to_vec();
        let rg = self.requires(input);
        self.push(shape, data, rg, Op::Reshape { input })
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Var {
        assert!(!inputs.is_empty());
        let base = self.shape(inputs[0]).to_vec();
        assert!(axis < base.len(), "concat axis {axis} out of range");
        let mut cat_extent = 0;
        for &v in inputs {
            let s = self.shape(v);
            assert_eq!(s.len(), base.len(), "concat rank mismatch");
            for (ax, (&e, &be)) in s.iter().zip(&base).enumerate() {
                if ax != axis {
                    assert_eq!(e, be, "concat shape conflict on axis {ax}");
                }
            }
            cat_extent += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = cat_extent;
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = vec![T::zero(); out_shape.iter().product()];
        let mut offset = 0;
        for &v in inputs {
            let e = self.shape(v)[axis];
            let src = self.data(v);
            for o in 0..outer {
                let dst_start = (o * cat_extent + offset) * inner;
                let src_start = o * e * inner;
                out[dst_start..dst_start + e * inner]
                    .copy_from_slice(&src[src_start..src_start + e * inner]);
            }
            offset += e;
        }
        let rg = inputs.iter().any(|&v| self.requires(v));
        self.push(out_shape, out, rg, Op::Concat { inputs: inputs.to_vec(), axis })
    }

    pub fn slice(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Var {
        let s = self.shape(input).to_vec();
        assert!(axis < s.len(), "slice axis {axis} out of range");
        assert!(len >= 1 && start + len <= s[axis], "slice [{start}, {start}+{len}) exceeds extent {}", s[axis]);
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let mut out_shape = s.clone();
        out_shape[axis] = len;
        let mut out = vec![T::zero(); outer * len * inner];
        let src = self.data(input);
        for o in 0..outer {
            let src_start = (o * s[axis] + start) * inner;
            let dst_start = o * len * inner;
            out[dst_start..dst_start + len * inner]
                .copy_from_slice(&src[src_start..src_start + len * inner]);
        }
        let rg = self.requires(input);
        self.push(out_shape, out, rg, Op::Slice { input, axis, start })
    }

    // ---- reductions (keepdim) -------------------------------------------

    pub fn reduce_sum(&mut self, input: Var, axes: &[usize]) -> Var {
        self.reduce(ReduceKind::Sum, input, axes)
    }

    pub fn reduce_mean(&mut self, input: Var, axes: &[usize]) -> Var {
        self.reduce(ReduceKind::Mean, input, axes)
    }

    pub fn reduce_max(&mut self, input: Var, axes: &[usize]) -> Var {
        self.reduce(ReduceKind::Max, input, axes)
    }

    pub fn reduce_min(&mut self, input: Var, axes: &[usize]) -> Var {
        self.reduce(ReduceKind::Min, input, axes)
    }

    /// Reduce over every axis down to a single element of shape [1].
    pub fn mean_all(&mut self, input: Var) -> Var {
        let axes: Vec<usize> = (0..self.shape(input).len()).collect();
        let r = self.reduce_mean(input, &axes);
        self.reshape(r, vec![1])
    }

    pub fn sum_all(&mut self, input: Var) -> Var {
        let axes: Vec<usize> = (0..self.shape(input).len()).collect();
        let r = self.reduce_sum(input, &axes);
        self.reshape(r, vec![1])
    }

    pub fn max_all(&mut self, input: Var) -> Var {
        let axes: Vec<usize> = (0..self.shape(input).len()).collect();
        let r = self.reduce_max(input, &axes);
        self.reshape(r, vec![1])
    }

    pub fn min_all(&mut self, input: Var) -> Var {
        let axes: Vec<usize> = (0..self.shape(input).len()).collect();
        let r = self.reduce_min(input, &axes);
        self.reshape(r, vec![1])
    }

    fn reduce(&mut self, kind: ReduceKind, input: Var, axes: &[usize]) -> Var {
        let in_shape = self.shape(input).to_vec();
        for &ax in axes {
            assert!(ax < in_shape.len(), "reduce axis {ax} out of range for {in_shape:?}");
        }
        let mut out_shape = in_shape.clone();
        for &ax in axes {
            out_shape[ax] = 1;
        }
        let out_n: usize = out_shape.iter().product();
        let count: usize = axes.iter().map(|&ax| in_shape[ax]).product();
        assert!(count >= 1, "empty reduction axis");

        // Map each input flat index to its output flat index.
        let in_strides = strides(&in_shape);
        let out_strides = strides(&out_shape);
        let reduced: Vec<bool> = {
            let mut r = vec![false; in_shape.len()];
            for &ax in axes {
                r[ax] = true;
            }
            r
        };

        let src = self.data(input);
        let init = match kind {
            ReduceKind::Sum | ReduceKind::Mean => T::zero(),
            ReduceKind::Max => T::neg_infinity(),
            ReduceKind::Min => T::infinity(),
        };
        let mut out = vec![init; out_n];
        let mut arg = if matches!(kind, ReduceKind::Max | ReduceKind::Min) {
            vec![usize::MAX; out_n]
        } else {
            Vec::new()
        };

        let mut idx = vec![0usize; in_shape.len()];
        for (flat, &v) in src.iter().enumerate() {
            let mut out_flat = 0;
            for d in 0..in_shape.len() {
                if !reduced[d] {
                    out_flat += idx[d] * out_strides[d];
                }
            }
            match kind {
                ReduceKind::Sum | ReduceKind::Mean => out[out_flat] = out[out_flat] + v,
                ReduceKind::Max => {
                    // strict > keeps the first (lowest flat index) on ties
                    if v > out[out_flat] || arg[out_flat] == usize::MAX {
                        out[out_flat] = v;
                        arg[out_flat] = flat;
                    }
                }
                ReduceKind::Min => {
                    if v < out[out_flat] || arg[out_flat] == usize::MAX {
                        out[out_flat] = v;
                        arg[out_flat] = flat;
                    }
                }
            }
            // advance multi-index
            for d in (0..in_shape.len()).rev() {
                idx[d] += 1;
                if idx[d] < in_shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let _ = in_strides;
        if kind == ReduceKind::Mean {
            let inv = T::one() / T::from_f64_lossy(count as f64);
            for v in &mut out {
                *v = *v * inv;
            }
        }
        let rg = self.requires(input);
        self.push(out_shape, out, rg, Op::Reduce { kind, input, axes: axes.to_vec(), arg })
    }

    // ---- convolutions & layernorm ---------------------------------------

    /// Dense 2D convolution, zero padding k/2 so H x W is preserved.
    ///
    /// input (H, W, Cin), weight (Kh, Kw, Cin, Cout), bias (Cout).
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let is = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        let bs = self.shape(bias).to_vec();
        assert_eq!(is.len(), 3, "conv2d input must be (H, W, Cin)");
        assert_eq!(ws.len(), 4, "conv2d weight must be (Kh, Kw, Cin, Cout)");
        let (h, w, cin) = (is[0], is[1], is[2]);
        let (kh, kw, wcin, cout) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(cin, wcin, "conv2d channel mismatch: input {cin}, weight {wcin}");
        assert_eq!(bs, vec![cout], "conv2d bias must be (Cout)");
        assert!(kh % 2 == 1 && kw % 2 == 1, "conv2d kernel extents must be odd");
        let (ph, pw) = (kh / 2, kw / 2);
        let mut out = vec![T::zero(); h * w * cout];
        {
            let x = self.data(input);
            let wt = self.data(weight);
            let b = self.data(bias);
            for oy in 0..h {
                for ox in 0..w {
                    let orow = &mut out[(oy * w + ox) * cout..(oy * w + ox + 1) * cout];
                    orow.copy_from_slice(&b[..cout]);
                    for ky in 0..kh {
                        let iy = oy as isize + ky as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = ox as isize + kx as isize - pw as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xrow = &x[((iy as usize) * w + ix as usize) * cin..][..cin];
                            let wrow = &wt[(ky * kw + kx) * cin * cout..][..cin * cout];
                            for ci in 0..cin {
                                let xv = xrow[ci];
                                for co in 0..cout {
                                    orow[co] = orow[co] + xv * wrow[ci * cout + co];
                                }
                            }
                        }
                    }
                }
            }
        }
        let rg = self.requires(input) || self.requires(weight) || self.requires(bias);
        self.push(vec![h, w, cout], out, rg, Op::Conv2d { input, weight, bias })
    }

    /// Depthwise 3x3 convolution, zero padding 1.
    ///
    /// input (H, W, C), weight (3, 3, C), bias (C).
    pub fn dwconv3x3(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let is = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        assert_eq!(is.len(), 3, "dwconv input must be (H, W, C)");
        let (h, w, c) = (is[0], is[1], is[2]);
        assert_eq!(ws, vec![3, 3, c], "dwconv weight must be (3, 3, C)");
        assert_eq!(self.shape(bias), &[c], "dwconv bias must be (C)");
        let mut out = vec![T::zero(); h * w * c];
        {
            let x = self.data(input);
            let wt = self.data(weight);
            let b = self.data(bias);
            for oy in 0..h {
                for ox in 0..w {
                    let orow = &mut out[(oy * w + ox) * c..][..c];
                    orow.copy_from_slice(&b[..c]);
                    for ky in 0..3usize {
                        let iy = oy as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let ix = ox as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xrow = &x[((iy as usize) * w + ix as usize) * c..][..c];
                            let wrow = &wt[(ky * 3 + kx) * c..][..c];
                            for ci in 0..c {
                                orow[ci] = orow[ci] + xrow[ci] * wrow[ci];
                            }
                        }
                    }
                }
            }
        }
        let rg = self.requires(input) || self.requires(weight) || self.requires(bias);
        self.push(vec![h, w, c], out, rg, Op::DwConv3x3 { input, weight, bias })
    }

    /// Layer normalization over the last axis with per-channel affine.
    pub fn layernorm(&mut self, input: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let shape = self.shape(input).to_vec();
        let c = *shape.last().expect("layernorm needs rank >= 1");
        assert!(c >= 1);
        assert_eq!(self.shape(gamma), &[c], "gamma must be (C)");
        assert_eq!(self.shape(beta), &[c], "beta must be (C)");
        let rows = self.data(input).len() / c;
        let mut out = vec![T::zero(); rows * c];
        let mut stats = Vec::with_capacity(rows);
        {
            let x = self.data(input);
            let g = self.data(gamma);
            let b = self.data(beta);
            let inv_c = T::one() / T::from_f64_lossy(c as f64);
            for r in 0..rows {
                let row = &x[r * c..(r + 1) * c];
                let mean = row.iter().copied().sum::<T>() * inv_c;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
                let inv_std = T::one() / (var + eps).sqrt();
                stats.push((mean, inv_std));
                let orow = &mut out[r * c..(r + 1) * c];
                for i in 0..c {
                    orow[i] = (row[i] - mean) * inv_std * g[i] + b[i];
                }
            }
        }
        let rg = self.requires(input) || self.requires(gamma) || self.requires(beta);
        self.push(shape, out, rg, Op::LayerNorm { input, gamma, beta, stats })
    }

    // ---- permutation ----------------------------------------------------

    /// Permute the first axis: out[i, ...] = in[perm[i], ...].
    pub fn gather_rows(&mut self, input: Var, perm: &[usize]) -> Var {
        let shape = self.shape(input).to_vec();
        assert!(!shape.is_empty());
        let rows = shape[0];
        assert_eq!(perm.len(), rows, "permutation length must match the first extent");
        let inner: usize = shape[1..].iter().product();
        let src = self.data(input);
        let mut out = vec![T::zero(); rows * inner];
        for (i, &p) in perm.iter().enumerate() {
            assert!(p < rows, "permutation index {p} out of range");
            out[i * inner..(i + 1) * inner].copy_from_slice(&src[p * inner..(p + 1) * inner]);
        }
        let rg = self.requires(input);
        self.push(shape, out, rg, Op::Gather { input, perm: perm.to_vec() })
    }

    // ---- composite helpers ----------------------------------------------

    /// x (Rows, In) @ w (In, Out) + b (Out).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out_dim = self.shape(w)[1];
        assert_eq!(self.shape(b), &[out_dim], "linear bias shape mismatch");
        let y = self.matmul(x, w);
        let b2 = self.reshape(b, vec![1, out_dim]);
        self.add(y, b2)
    }

    /// Per-pixel linear over the channel axis of an (H, W, C) map.
    pub fn linear_hw(&mut self, x: Var, w: Var, b: Var) -> Var {
        let s = self.shape(x).to_vec();
        assert_eq!(s.len(), 3, "linear_hw input must be (H, W, C)");
        let out_dim = self.shape(w)[1];
        let flat = self.reshape(x, vec![s[0] * s[1], s[2]]);
        let y = self.linear(flat, w, b);
        self.reshape(y, vec![s[0], s[1], out_dim])
    }

    /// Whole-map min-max normalization to [0, 1].
    ///
    /// Guard: if max - min < 1e-8 the map is treated as constant and the
    /// output is identically zero (detached from the input).
    pub fn minmax_normalize(&mut self, x: Var) -> Var {
        let lo = self.min_all(x);
        let hi = self.max_all(x);
        let range = self.data(hi)[0] - self.data(lo)[0];
        if range.into_f64() < 1e-8 {
            let shape = self.shape(x).to_vec();
            return self.constant(Tensor::zeros(shape));
        }
        let span = self.sub(hi, lo);
        let lo_b = self.broadcastable(lo, self.shape(x).len());
        let span_b = self.broadcastable(span, self.shape(x).len());
        let shifted = self.sub(x, lo_b);
        self.div(shifted, span_b)
    }

    /// Reshape a [1] scalar node to all-ones extents of the given rank.
    fn broadcastable(&mut self, v: Var, rank: usize) -> Var {
        self.reshape(v, vec![1; rank])
    }

    // ---- backward --------------------------------------------------------

    /// Populate gradients of `loss` w.r.t. every requires_grad node.
    pub fn backward(&mut self, loss: Var) -> Result<(), TapeError> {
        if self.nodes.is_empty() {
            return Err(TapeError::EmptyTape);
        }
        if self.backward_done {
            return Err(TapeError::BackwardTwice);
        }
        let n = self.data(loss).len();
        if n != 1 {
            return Err(TapeError::NonScalarLoss(n));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = match self.grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contrib: &[T]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut self.grads[v.0];
        match slot {
            Some(g) => {
                for (gi, &c) in g.iter_mut().zip(contrib) {
                    *gi += c;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        if matches!(self.nodes[i].op, Op::SelectiveScan(_)) {
            self.scan_backward(i, g);
            return;
        }
        // Ops are moved out structurally via indices; data is read immutably.
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Binary { kind, lhs, rhs } => {
                let (kind, lhs, rhs) = (*kind, *lhs, *rhs);
                let out_shape = self.nodes[i].shape.clone();
                let la = Layout::broadcast(self.shape(lhs), &out_shape);
                let lb = Layout::broadcast(self.shape(rhs), &out_shape);
                let mut ga = vec![T::zero(); self.data(lhs).len()];
                let mut gb = vec![T::zero(); self.data(rhs).len()];
                {
                    let a = self.data(lhs);
                    let b = self.data(rhs);
                    let mut it = BroadcastIter::new(&out_shape, &la, &lb);
                    for &gv in g.iter() {
                        let (oa, ob) = it.next_offsets();
                        match kind {
                            BinaryKind::Add => {
                                ga[oa] += gv;
                                gb[ob] += gv;
                            }
                            BinaryKind::Sub => {
                                ga[oa] += gv;
                                gb[ob] -= gv;
                            }
                            BinaryKind::Mul => {
                                ga[oa] += gv * b[ob];
                                gb[ob] += gv * a[oa];
                            }
                            BinaryKind::Div => {
                                let inv = T::one() / b[ob];
                                ga[oa] += gv * inv;
                                gb[ob] -= gv * a[oa] * inv * inv;
                            }
                        }
                    }
                }
                self.accumulate(lhs, &ga);
                self.accumulate(rhs, &gb);
            }
            Op::Unary { kind, input } => {
                let (kind, input) = (*kind, *input);
                let gx: Vec<T> = self
                    .data(input)
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| gv * unary_deriv(kind, x))
                    .collect();
                self.accumulate(input, &gx);
            }
            Op::Matmul { lhs, rhs } => {
                let (lhs, rhs) = (*lhs, *rhs);
                let (m, k) = (self.shape(lhs)[0], self.shape(lhs)[1]);
                let n = self.shape(rhs)[1];
                let mut ga = vec![T::zero(); m * k];
                let mut gb = vec![T::zero(); k * n];
                {
                    let a = self.data(lhs);
                    let b = self.data(rhs);
                    // dA = G B^T ; dB = A^T G
                    for i2 in 0..m {
                        for j in 0..n {
                            let gv = g[i2 * n + j];
                            if gv == T::zero() {
                                continue;
                            }
                            for p in 0..k {
                                ga[i2 * k + p] += gv * b[p * n + j];
                                gb[p * n + j] += gv * a[i2 * k + p];
                            }
                        }
                    }
                }
                self.accumulate(lhs, &ga);
                self.accumulate(rhs, &gb);
            }
            Op::Reshape { input } => {
                let input = *input;
                self.accumulate(input, g);
            }
            Op::Concat { inputs, axis } => {
                let (inputs, axis) = (inputs.clone(), *axis);
                let out_shape = self.nodes[i].shape.clone();
                let cat_extent = out_shape[axis];
                let outer: usize = out_shape[..axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let mut offset = 0;
                for &v in &inputs {
                    let e = self.shape(v)[axis];
                    let mut gv = vec![T::zero(); self.data(v).len()];
                    for o in 0..outer {
                        let src_start = (o * cat_extent + offset) * inner;
                        let dst_start = o * e * inner;
                        gv[dst_start..dst_start + e * inner]
                            .copy_from_slice(&g[src_start..src_start + e * inner]);
                    }
                    self.accumulate(v, &gv);
                    offset += e;
                }
            }
            Op::Slice { input, axis, start } => {
                let (input, axis, start) = (*input, *axis, *start);
                let in_shape = self.shape(input).to_vec();
                let len = self.nodes[i].shape[axis];
                let outer: usize = in_shape[..axis].iter().product();
                let inner: usize = in_shape[axis + 1..].iter().product();
                let mut gv = vec![T::zero(); self.data(input).len()];
                for o in 0..outer {
                    let dst_start = (o * in_shape[axis] + start) * inner;
                    let src_start = o * len * inner;
                    gv[dst_start..dst_start + len * inner]
                        .copy_from_slice(&g[src_start..src_start + len * inner]);
                }
                self.accumulate(input, &gv);
            }
            Op::Reduce { kind, input, axes, arg } => {
                let (kind, input) = (*kind, *input);
                let axes = axes.clone();
                let arg = arg.clone();
                let in_shape = self.shape(input).to_vec();
                let out_shape = self.nodes[i].shape.clone();
                let mut gv = vec![T::zero(); self.data(input).len()];
                match kind {
                    ReduceKind::Max | ReduceKind::Min => {
                        for (out_flat, &src_flat) in arg.iter().enumerate() {
                            gv[src_flat] += g[out_flat];
                        }
                    }
                    ReduceKind::Sum | ReduceKind::Mean => {
                        let count: usize = axes.iter().map(|&ax| in_shape[ax]).product();
                        let scale = if kind == ReduceKind::Mean {
                            T::one() / T::from_f64_lossy(count as f64)
                        } else {
                            T::one()
                        };
                        let out_strides = strides(&out_shape);
                        let reduced: Vec<bool> = {
                            let mut r = vec![false; in_shape.len()];
                            for &ax in &axes {
                                r[ax] = true;
                            }
                            r
                        };
                        let mut idx = vec![0usize; in_shape.len()];
                        for gvi in gv.iter_mut() {
                            let mut out_flat = 0;
                            for d in 0..in_shape.len() {
                                if !reduced[d] {
                                    out_flat += idx[d] * out_strides[d];
                                }
                            }
                            *gvi += g[out_flat] * scale;
                            for d in (0..in_shape.len()).rev() {
                                idx[d] += 1;
                                if idx[d] < in_shape[d] {
                                    break;
                                }
                                idx[d] = 0;
                            }
                        }
                    }
                }
                self.accumulate(input, &gv);
            }
            Op::Conv2d { input, weight, bias } => {
                let (input, weight, bias) = (*input, *weight, *bias);
                let is = self.shape(input).to_vec();
                let ws = self.shape(weight).to_vec();
                let (h, w, cin) = (is[0], is[1], is[2]);
                let (kh, kw, cout) = (ws[0], ws[1], ws[3]);
                let (ph, pw) = (kh / 2, kw / 2);
                let mut gx = vec![T::zero(); h * w * cin];
                let mut gw = vec![T::zero(); kh * kw * cin * cout];
                let mut gb = vec![T::zero(); cout];
                {
                    let x = self.data(input);
                    let wt = self.data(weight);
                    for oy in 0..h {
                        for ox in 0..w {
                            let grow = &g[(oy * w + ox) * cout..][..cout];
                            for co in 0..cout {
                                gb[co] += grow[co];
                            }
                            for ky in 0..kh {
                                let iy = oy as isize + ky as isize - ph as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = ox as isize + kx as isize - pw as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xoff = ((iy as usize) * w + ix as usize) * cin;
                                    let woff = (ky * kw + kx) * cin * cout;
                                    for ci in 0..cin {
                                        let xv = x[xoff + ci];
                                        for co in 0..cout {
                                            let gv = grow[co];
                                            gx[xoff + ci] += gv * wt[woff + ci * cout + co];
                                            gw[woff + ci * cout + co] += gv * xv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                self.accumulate(input, &gx);
                self.accumulate(weight, &gw);
                self.accumulate(bias, &gb);
            }
            Op::DwConv3x3 { input, weight, bias } => {
                let (input, weight, bias) = (*input, *weight, *bias);
                let is = self.shape(input).to_vec();
                let (h, w, c) = (is[0], is[1], is[2]);
                let mut gx = vec![T::zero(); h * w * c];
                let mut gw = vec![T::zero(); 9 * c];
                let mut gb = vec![T::zero(); c];
                {
                    let x = self.data(input);
                    let wt = self.data(weight);
                    for oy in 0..h {
                        for ox in 0..w {
                            let grow = &g[(oy * w + ox) * c..][..c];
                            for ci in 0..c {
                                gb[ci] += grow[ci];
                            }
                            for ky in 0..3usize {
                                let iy = oy as isize + ky as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = ox as isize + kx as isize - 1;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xoff = ((iy as usize) * w + ix as usize) * c;
                                    let woff = (ky * 3 + kx) * c;
                                    for ci in 0..c {
                                        gx[xoff + ci] += grow[ci] * wt[woff + ci];
                                        gw[woff + ci] += grow[ci] * x[xoff + ci];
                                    }
                                }
                            }
                        }
                    }
                }
                self.accumulate(input, &gx);
                self.accumulate(weight, &gw);
                self.accumulate(bias, &gb);
            }
            Op::LayerNorm { input, gamma, beta, stats } => {
                let (input, gamma, beta) = (*input, *gamma, *beta);
                let stats = stats.clone();
                let c = *self.shape(input).last().unwrap();
                let rows = self.data(input).len() / c;
                let mut gx = vec![T::zero(); rows * c];
                let mut gg = vec![T::zero(); c];
                let mut gb = vec![T::zero(); c];
                {
                    let x = self.data(input);
                    let gm = self.data(gamma);
                    let inv_c = T::one() / T::from_f64_lossy(c as f64);
                    for r in 0..rows {
                        let (mean, inv_std) = stats[r];
                        let row = &x[r * c..(r + 1) * c];
                        let grow = &g[r * c..(r + 1) * c];
                        // xhat_i = (x_i - mean) * inv_std
                        let mut sum_dxh = T::zero();
                        let mut sum_dxh_xh = T::zero();
                        for ci in 0..c {
                            let xh = (row[ci] - mean) * inv_std;
                            let dxh = grow[ci] * gm[ci];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh;
                            gg[ci] += grow[ci] * xh;
                            gb[ci] += grow[ci];
                        }
                        let m1 = sum_dxh * inv_c;
                        let m2 = sum_dxh_xh * inv_c;
                        for ci in 0..c {
                            let xh = (row[ci] - mean) * inv_std;
                            let dxh = grow[ci] * gm[ci];
                            gx[r * c + ci] = inv_std * (dxh - m1 - xh * m2);
                        }
                    }
                }
                self.accumulate(input, &gx);
                self.accumulate(gamma, &gg);
                self.accumulate(beta, &gb);
            }
            Op::Gather { input, perm } => {
                let input = *input;
                let perm = perm.clone();
                let inner = self.data(input).len() / perm.len();
                let mut gv = vec![T::zero(); self.data(input).len()];
                for (i2, &p) in perm.iter().enumerate() {
                    for j in 0..inner {
                        gv[p * inner + j] += g[i2 * inner + j];
                    }
                }
                self.accumulate(input, &gv);
            }
            Op::SelectiveScan(_) => unreachable!("handled above"),
        }
    }
}

fn op_name<T: Scalar>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Binary { .. } => "binary",
        Op::Unary { .. } => "unary",
        Op::Matmul { .. } => "matmul",
        Op::Reshape { .. } => "reshape",
        Op::Concat { .. } => "concat",
        Op::Slice { .. } => "slice",
        Op::Reduce { .. } => "reduce",
        Op::Conv2d { .. } => "conv2d",
        Op::DwConv3x3 { .. } => "dwconv3x3",
        Op::LayerNorm { .. } => "layernorm",
        Op::Gather { .. } => "gather",
        Op::SelectiveScan(_) => "selective_scan",
    }
}

fn unary_eval<T: Scalar>(kind: UnaryKind<T>, x: T) -> T {
    match kind {
        UnaryKind::Neg => -x,
        UnaryKind::Exp => x.exp(),
        UnaryKind::Abs => x.abs(),
        UnaryKind::Silu => x * stable_sigmoid(x),
        UnaryKind::Sigmoid => stable_sigmoid(x),
        UnaryKind::Softplus => stable_softplus(x),
        UnaryKind::Scale(k) => x * k,
        UnaryKind::AddConst(k) => x + k,
    }
}

fn unary_deriv<T: Scalar>(kind: UnaryKind<T>, x: T) -> T {
    match kind {
        UnaryKind::Neg => -T::one(),
        UnaryKind::Exp => x.exp(),
        // subgradient at 0 defined as 0
        UnaryKind::Abs => {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        }
        UnaryKind::Silu => {
            let s = stable_sigmoid(x);
            s + x * s * (T::one() - s)
        }
        UnaryKind::Sigmoid => {
            let s = stable_sigmoid(x);
            s * (T::one() - s)
        }
        UnaryKind::Softplus => stable_sigmoid(x),
        UnaryKind::Scale(k) => k,
        UnaryKind::AddConst(_) => T::one(),
    }
}

pub(crate) fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn stable_softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + ln(1 + exp(-|x|))
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    assert_eq!(a.len(), b.len(), "broadcast requires equal rank: {a:?} vs {b:?}");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            assert!(x == y || x == 1 || y == 1, "incompatible broadcast: {a:?} vs {b:?}");
            x.max(y)
        })
        .collect()
}

/// Strides of an operand viewed through a broadcast output shape
/// (stride 0 on broadcast axes).
struct Layout {
    strides: Vec<usize>,
}

impl Layout {
    fn broadcast(operand: &[usize], out: &[usize]) -> Layout {
        let base = strides(operand);
        let strides = operand
            .iter()
            .zip(out)
            .zip(base)
            .map(|((&e, &oe), s)| if e == oe { s } else { 0 })
            .collect();
        Layout { strides }
    }
}

/// Walks a broadcast output in flat order, yielding operand offsets.
struct BroadcastIter<'a> {
    shape: &'a [usize],
    idx: Vec<usize>,
    a: &'a Layout,
    b: &'a Layout,
    off_a: usize,
    off_b: usize,
    started: bool,
}

impl<'a> BroadcastIter<'a> {
    fn new(shape: &'a [usize], a: &'a Layout, b: &'a Layout) -> Self {
        BroadcastIter { shape, idx: vec![0; shape.len()], a, b, off_a: 0, off_b: 0, started: false }
    }

    fn next_offsets(&mut self) -> (usize, usize) {
        if !self.started {
            self.started = true;
            return (self.off_a, self.off_b);
        }
        for d in (0..self.shape.len()).rev() {
            self.idx[d] += 1;
            self.off_a += self.a.strides[d];
            self.off_b += self.b.strides[d];
            if self.idx[d] < self.shape[d] {
                return (self.off_a, self.off_b);
            }
            self.off_a -= self.a.strides[d] * self.shape[d];
            self.off_b -= self.b.strides[d] * self.shape[d];
            self.idx[d] = 0;
        }
        (self.off_a, self.off_b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec())
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]), true);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn half_square_backward_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[4], &[1., -2., 3., 0.5]), true);
        let sq = tape.mul(x, x);
        let s = tape.sum_all(sq);
        let loss = tape.scale(s, 0.5);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1., -2., 3., 0.5]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]), true);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(TapeError::BackwardTwice)));
    }

    #[test]
    fn non_scalar_loss_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]), true);
        assert!(matches!(tape.backward(x), Err(TapeError::NonScalarLoss(2))));
    }

    #[test]
    fn broadcasting_add_and_grad_reduction() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]), true);
        let b = tape.leaf(t(&[1, 3], &[10., 20., 30.]), true);
        let y = tape.add(x, b);
        assert_eq!(tape.data(y), &[11., 22., 33., 14., 25., 36.]);
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(b).unwrap(), &[2., 2., 2.]);
    }

    #[test]
    fn silu_and_sigmoid_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[3], &[0.0, 20.0, -20.0]), false);
        let s = tape.silu(x);
        let sg = tape.sigmoid(x);
        assert_eq!(tape.data(s)[0], 0.0);
        assert!((tape.data(s)[1] - 20.0).abs() < 1e-6);
        assert_eq!(tape.data(sg)[0], 0.5);
        assert!(tape.data(sg).iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn max_reduce_ties_take_first_index() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[4], &[5., 5., 1., 5.]), true);
        let m = tape.max_all(x);
        assert_eq!(tape.data(m), &[5.0]);
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1., 0., 0., 0.]);
    }

    #[test]
    fn channel_and_spatial_pooling_shapes() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![4, 4, 3], (0..48).map(|v| v as f64).collect()), false);
        let cmax = tape.reduce_max(x, &[2]);
        assert_eq!(tape.shape(cmax), &[4, 4, 1]);
        let savg = tape.reduce_mean(x, &[0, 1]);
        assert_eq!(tape.shape(savg), &[1, 1, 3]);
        // spatial avg matches a direct per-channel mean
        for c in 0..3 {
            let direct: f64 = (0..16).map(|p| (p * 3 + c) as f64).sum::<f64>() / 16.0;
            assert!((tape.data(savg)[c] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_vector_layernorm_is_beta() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 4], &[3., 3., 3., 3.]), false);
        let gamma = tape.leaf(t(&[4], &[1., 1., 1., 1.]), false);
        let beta = tape.leaf(t(&[4], &[0., 0., 0., 0.]), false);
        let y = tape.layernorm(x, gamma, beta, 1e-5);
        for &v in tape.data(y) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn two_channel_layernorm_analytic() {
        // [1, 3] standardizes toward [-1, 1] as eps -> 0
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 2], &[1., 3.]), false);
        let gamma = tape.leaf(t(&[2], &[1., 1.]), false);
        let beta = tape.leaf(t(&[2], &[0., 0.]), false);
        let y = tape.layernorm(x, gamma, beta, 1e-12);
        assert!((tape.data(y)[0] + 1.0).abs() < 1e-6);
        assert!((tape.data(y)[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_pointwise_conv_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64 * 0.5).collect()), false);
        // 1x1 conv with identity weight matrix
        let mut w = vec![0.0; 3 * 3];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let weight = tape.leaf(Tensor::new(vec![1, 1, 3, 3], w), false);
        let bias = tape.leaf(Tensor::zeros(vec![3]), false);
        let y = tape.conv2d(x, weight, bias);
        assert_eq!(tape.data(y), tape.data(x));
    }

    #[test]
    fn zero_depthwise_conv_annihilates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![3, 3, 2], (0..18).map(|v| v as f64).collect()), false);
        let w = tape.leaf(Tensor::zeros(vec![3, 3, 2]), false);
        let b = tape.leaf(Tensor::zeros(vec![2]), false);
        let y = tape.dwconv3x3(x, w, b);
        assert!(tape.data(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depthwise_all_ones_on_2x2_ramp() {
        // brute-force direct convolution oracle on [[1,2],[3,4]]
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2, 1], &[1., 2., 3., 4.]), false);
        let w = tape.leaf(Tensor::full(vec![3, 3, 1], 1.0), false);
        let b = tape.leaf(Tensor::zeros(vec![1]), false);
        let y = tape.dwconv3x3(x, w, b);
        // every output sees the whole 2x2 block through zero padding
        assert_eq!(tape.data(y), &[10., 10., 10., 10.]);
    }

    #[test]
    fn concat_slice_roundtrip_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 2, 3]), false);
        let b = tape.leaf(Tensor::zeros(vec![2, 2, 5]), false);
        let y = tape.concat(&[a, b], 2);
        assert_eq!(tape.shape(y), &[2, 2, 8]);
        let s = tape.slice(y, 2, 3, 5);
        assert_eq!(tape.shape(s), &[2, 2, 5]);
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1., -2., 3., 4.]), false);
        let ones = tape.leaf(Tensor::full(vec![2, 2], 1.0), false);
        let y = tape.mul(x, ones);
        assert_eq!(tape.data(y), tape.data(x));
    }

    #[test]
    fn linear_with_zero_weight_is_bias() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]), false);
        let w = tape.leaf(Tensor::zeros(vec![3, 2]), false);
        let b = tape.leaf(t(&[2], &[7., 8.]), false);
        let y = tape.linear(x, w, b);
        assert_eq!(tape.data(y), &[7., 8., 7., 8.]);
    }

    #[test]
    fn minmax_guard_zeroes_constant_maps() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(vec![3, 3, 2], 5.0), true);
        let y = tape.minmax_normalize(x);
        assert!(tape.data(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minmax_maps_to_unit_interval() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[4], &[-2., 0., 1., 6.]), false);
        let y = tape.minmax_normalize(x);
        let d = tape.data(y);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[3], 1.0);
        assert!(d.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn non_finite_results_are_surfaced() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1], &[1.0]), false);
        let b = tape.leaf(t(&[1], &[0.0]), false);
        let _ = tape.div(a, b);
    }

    #[test]
    fn gather_rows_permutes_and_backprops() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]), true);
        let y = tape.gather_rows(x, &[2, 0, 1]);
        assert_eq!(tape.data(y), &[5., 6., 1., 2., 3., 4.]);
        let w = tape.leaf(t(&[3, 2], &[1., 0., 0., 0., 0., 0.]), false);
        let prod = tape.mul(y, w);
        let loss = tape.sum_all(prod);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0., 0., 0., 0., 1., 0.]);
    }
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{matmul_acc, matmul_at_acc, matmul_bt_acc, sigmoid, softmax_row};
use super::{ParamId, ParamStore, Real, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

enum Op<T> {
    Constant,
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { table: Var, ids: Vec<Option<usize>> },
    SelectCols { x: Var, cols: Vec<usize> },
    Positional { table: Var, ids: Vec<Option<usize>> },
    WhereRows { take_new: Vec<bool>, new: Var, old: Var },
    Sum(Var),
    Mean(Var),
    Dropout { x: Var, mask: Vec<T> },
    ConvMax { x: Var, w: Var, b: Var, width: usize, argmax: Vec<usize> },
    MaskedSoftmax { x: Var, lengths: Vec<usize> },
    WeightedSum { alpha: Var, seq: Var },
    SoftmaxXent { logits: Var, targets: Vec<usize>, probs: Vec<T> },
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records operations in topological order and differentiates them in reverse.
///
/// Node `i` only ever reads nodes `j < i`. Dropout masks come from the graph's
/// own ChaCha stream, so rebuilding a graph with the same seed and inputs
/// replays identical values bit for bit.
pub struct Graph<'p, T: Real> {
    params: Option<&'p ParamStore<T>>,
    param_nodes: Vec<Option<Var>>,
    nodes: Vec<Node<T>>,
    mode: Mode,
    rng: ChaCha8Rng,
    leaf_grads: Vec<Option<Vec<T>>>,
    param_grads: Vec<Option<Vec<T>>>,
}

fn value_of<'a, T: Real>(
    nodes: &'a [Node<T>],
    params: Option<&'a ParamStore<T>>,
    v: Var,
) -> &'a Tensor<T> {
    match &nodes[v.0].value {
        Value::Owned(t) => t,
        Value::Param(id) => params.expect("parameter node without store").get(*id),
    }
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, len: usize, f: impl FnOnce(&mut [T])) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    f(buf);
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>, mode: Mode, seed: u64) -> Self {
        Graph {
            params: Some(params),
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            leaf_grads: Vec::new(),
            param_grads: vec![None; params.len()],
        }
    }

    /// A graph with no parameter store; only constants and leaves.
    pub fn standalone(mode: Mode, seed: u64) -> Graph<'static, T> {
        Graph {
            params: None,
            param_nodes: Vec::new(),
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            leaf_grads: Vec::new(),
            param_grads: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        value_of(&self.nodes, self.params, v)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Input whose gradient is accumulated and readable via [`Graph::grad`].
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            needs_grad: true,
        });
        self.leaf_grads.push(None);
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    // ---------------------------------------------------------------- ops

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![T::zero(); m * n];
        matmul_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), ng))
    }

    /// Adds a length-`q` vector to every row of an `N×q` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.shape().len() != 1 || tx.cols() != tb.len() {
            return Err(Error::dim("add_bias", tx.shape(), tb.shape()));
        }
        let q = tb.len();
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(q) {
            add_into(row, tb.data());
        }
        let shape = tx.shape().to_vec();
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::AddBias(x, b), ng))
    }

    /// `X·W + b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let t = self.value(x).map(|v| v * s);
        let ng = self.needs(x);
        self.push(t, Op::Scale(x, s), ng)
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| T::one() - v);
        let ng = self.needs(x);
        self.push(t, Op::OneMinus(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        let ng = self.needs(x);
        self.push(t, Op::Sigmoid(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(T::libm_tanh);
        let ng = self.needs(x);
        self.push(t, Op::Tanh(x), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let ng = self.needs(x);
        self.push(t, Op::Relu(x), ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        if tx.shape().len() != 2 || len == 0 || start + len > cols {
            return Err(Error::dim("slice_cols", tx.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&tx.row(r)[start..start + len]);
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::from_parts(vec![rows, len], out), Op::SliceCols { x, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows || t.shape().len() != 2 {
                return Err(Error::dim("concat_cols", self.value(parts[0]).shape(), t.shape()));
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::from_parts(vec![rows, total], out), Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols || t.shape().len() != 2 {
                return Err(Error::dim("concat_rows", self.value(parts[0]).shape(), t.shape()));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::from_parts(vec![rows, cols], out), Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Row lookup; `None` yields a zero row. Output shape is
    /// `[ids.len(), table.shape[1..]..]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[Option<usize>]) -> Result<Var> {
        let tt = self.value(table);
        let (n_rows, c) = (tt.rows(), tt.cols());
        let mut out = vec![T::zero(); ids.len() * c];
        for (slot, id) in out.chunks_mut(c).zip(ids) {
            if let Some(i) = *id {
                if i >= n_rows {
                    return Err(Error::Index {
                        what: "gather_rows",
                        index: i,
                        bound: n_rows,
                    });
                }
                slot.copy_from_slice(tt.row(i));
            }
        }
        let mut shape = vec![ids.len()];
        shape.extend_from_slice(&tt.shape()[1..]);
        let ng = self.needs(table);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Column gather: `out[r][j] = x[r][cols[j]]`.
    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let (rows, c) = (tx.rows(), tx.cols());
        if tx.shape().len() != 2 || cols.is_empty() {
            return Err(Error::dim("select_cols", tx.shape(), &[cols.len()]));
        }
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(Error::Index {
                what: "select_cols",
                index: bad,
                bound: c,
            });
        }
        let mut out = Vec::with_capacity(rows * cols.len());
        for r in 0..rows {
            let row = tx.row(r);
            out.extend(cols.iter().map(|&j| row[j]));
        }
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols.len()], out),
            Op::SelectCols {
                x,
                cols: cols.to_vec(),
            },
            ng,
        ))
    }

    /// Position-dependent lookup: with `table` of shape `R×n` and `ids` of
    /// length `b·n`, returns `out[r][t] = table[ids[r·n + t]][t]` (zero for `None`).
    pub fn positional(&mut self, table: Var, ids: &[Option<usize>]) -> Result<Var> {
        let tt = self.value(table);
        let (n_rows, n) = (tt.rows(), tt.cols());
        if tt.shape().len() != 2 || ids.len() % n != 0 {
            return Err(Error::dim("positional", tt.shape(), &[ids.len()]));
        }
        let mut out = vec![T::zero(); ids.len()];
        for (k, id) in ids.iter().enumerate() {
            if let Some(i) = *id {
                if i >= n_rows {
                    return Err(Error::Index {
                        what: "positional",
                        index: i,
                        bound: n_rows,
                    });
                }
                out[k] = tt.data()[i * n + k % n];
            }
        }
        let ng = self.needs(table);
        Ok(self.push(
            Tensor::from_parts(vec![ids.len() / n, n], out),
            Op::Positional {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Row-wise select: row `r` comes from `new` when `take_new[r]`, else from `old`.
    pub fn where_rows(&mut self, take_new: &[bool], new: Var, old: Var) -> Result<Var> {
        let (tn, to) = (self.value(new), self.value(old));
        if tn.shape() != to.shape() || tn.rows() != take_new.len() {
            return Err(Error::dim("where_rows", tn.shape(), to.shape()));
        }
        let c = tn.cols();
        let mut out = Vec::with_capacity(tn.len());
        for (r, &k) in take_new.iter().enumerate() {
            let src = if k { tn.row(r) } else { to.row(r) };
            out.extend_from_slice(src);
        }
        debug_assert_eq!(out.len(), take_new.len() * c);
        let shape = tn.shape().to_vec();
        let ng = self.needs(new) || self.needs(old);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::WhereRows {
                take_new: take_new.to_vec(),
                new,
                old,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &b| a + b);
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().fold(T::zero(), |a, &b| a + b) / T::of(t.len() as f64);
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// Inverted dropout. Identity in eval mode or at rate 0, otherwise each
    /// element is kept with probability `1 - rate` and scaled by `1 / (1 - rate)`.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let scale = T::of(1.0 / keep);
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let tx = self.value(x);
        let data = tx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::from_parts(tx.shape().to_vec(), data);
        let ng = self.needs(x);
        Ok(self.push(t, Op::Dropout { x, mask }, ng))
    }

    /// One bank of width-`width` filters over a zero-padded subword sequence,
    /// followed by `tanh` and max-over-time pooling.
    ///
    /// `x` is `b × (n·d)` (position-major), `w` is `(width·d) × k`, `b` has
    /// length `k`. Row `r` pools over window starts `0..=positions[r] - width`.
    pub fn conv_max_over_time(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        width: usize,
        n: usize,
        positions: &[usize],
    ) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let rows = tx.rows();
        if n == 0 || tx.cols() % n != 0 || positions.len() != rows {
            return Err(Error::dim("conv_max_over_time", tx.shape(), &[n]));
        }
        let d = tx.cols() / n;
        let k = tw.cols();
        if tw.rows() != width * d || tb.len() != k {
            return Err(Error::dim("conv_max_over_time", tx.shape(), tw.shape()));
        }
        if width == 0 || width > n {
            return Err(Error::Config(format!("filter width {width} must lie in 1..={n}")));
        }
        let mut out = vec![T::zero(); rows * k];
        let mut argmax = vec![0usize; rows * k];
        let mut pre = vec![T::zero(); k];
        for r in 0..rows {
            let p = positions[r].clamp(width, n);
            let row = tx.row(r);
            let best = &mut out[r * k..(r + 1) * k];
            let arg = &mut argmax[r * k..(r + 1) * k];
            for s in 0..=(p - width) {
                pre.copy_from_slice(tb.data());
                matmul_acc(&row[s * d..(s + width) * d], tw.data(), &mut pre, 1, width * d, k);
                for j in 0..k {
                    if s == 0 || pre[j] > best[j] {
                        best[j] = pre[j];
                        arg[j] = s;
                    }
                }
            }
            for v in best.iter_mut() {
                *v = v.libm_tanh();
            }
        }
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(
            Tensor::from_parts(vec![rows, k], out),
            Op::ConvMax {
                x,
                w,
                b,
                width,
                argmax,
            },
            ng,
        ))
    }

    /// Row-wise softmax restricted to the first `lengths[r]` columns; the
    /// remaining entries are exactly zero.
    pub fn masked_softmax(&mut self, x: Var, lengths: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let (rows, n) = (tx.rows(), tx.cols());
        if lengths.len() != rows || lengths.iter().any(|&l| l == 0 || l > n) {
            return Err(Error::dim("masked_softmax", tx.shape(), &[lengths.len()]));
        }
        let mut out = vec![T::zero(); rows * n];
        for r in 0..rows {
            let l = lengths[r];
            softmax_row(&tx.row(r)[..l], &mut out[r * n..r * n + l]);
        }
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::from_parts(vec![rows, n], out),
            Op::MaskedSoftmax {
                x,
                lengths: lengths.to_vec(),
            },
            ng,
        ))
    }

    /// `out[r] = Σ_t alpha[r][t] · seq[r][t·d .. (t+1)·d]` with `alpha: b×n`, `seq: b×(n·d)`.
    pub fn weighted_sum(&mut self, alpha: Var, seq: Var) -> Result<Var> {
        let (ta, ts) = (self.value(alpha), self.value(seq));
        let (rows, n) = (ta.rows(), ta.cols());
        if ts.rows() != rows || ts.cols() % n != 0 {
            return Err(Error::dim("weighted_sum", ta.shape(), ts.shape()));
        }
        let d = ts.cols() / n;
        let mut out = vec![T::zero(); rows * d];
        for r in 0..rows {
            let o = &mut out[r * d..(r + 1) * d];
            let srow = ts.row(r);
            for (t, &a) in ta.row(r).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (ov, &sv) in o.iter_mut().zip(&srow[t * d..(t + 1) * d]) {
                    *ov += a * sv;
                }
            }
        }
        let ng = self.needs(alpha) || self.needs(seq);
        Ok(self.push(Tensor::from_parts(vec![rows, d], out), Op::WeightedSum { alpha, seq }, ng))
    }

    /// Mean cross-entropy of row-wise softmax against integer targets.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let (rows, v) = (tl.rows(), tl.cols());
        if targets.len() != rows {
            return Err(Error::dim("softmax_xent", tl.shape(), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Index {
                what: "target",
                index: bad,
                bound: v,
            });
        }
        let mut probs = vec![T::zero(); rows * v];
        let mut total = T::zero();
        for r in 0..rows {
            let row = tl.row(r);
            let p = &mut probs[r * v..(r + 1) * v];
            softmax_row(row, p);
            total += nll_from_logits(row, targets[r]);
        }
        let loss = total / T::of(rows as f64);
        let ng = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Probabilities saved by a [`Graph::softmax_xent`] node, `rows × V`.
    pub fn softmax_probs(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::SoftmaxXent { probs, .. } => Some(probs),
            _ => None,
        }
    }

    // ----------------------------------------------------------- backward

    /// Accumulates `d loss / d node` into every leaf and parameter reachable
    /// from `loss`. Repeated calls add to what is already accumulated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let nodes = &self.nodes;
        let params = self.params;
        let val = |v: Var| value_of(nodes, params, v);
        let needs = |v: Var| nodes[v.0].needs_grad;
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let out = val(Var(i));
            match &node.op {
                Op::Constant => {}
                Op::Leaf => accumulate(&mut self.leaf_grads[i], g.len(), |b| add_into(b, &g)),
                Op::Param(id) => accumulate(&mut self.param_grads[id.0], g.len(), |b| add_into(b, &g)),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if needs(*a) {
                        accumulate(&mut grads[a.0], m * k, |buf| matmul_bt_acc(&g, tb.data(), buf, m, k, n));
                    }
                    if needs(*b) {
                        accumulate(&mut grads[b.0], k * n, |buf| matmul_at_acc(ta.data(), &g, buf, m, k, n));
                    }
                }
                Op::AddBias(x, b) => {
                    let q = val(*b).len();
                    if needs(*x) {
                        accumulate(&mut grads[x.0], g.len(), |buf| add_into(buf, &g));
                    }
                    if needs(*b) {
                        accumulate(&mut grads[b.0], q, |buf| {
                            for row in g.chunks(q) {
                                add_into(buf, row);
                            }
                        });
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if needs(v) {
                            accumulate(&mut grads[v.0], g.len(), |buf| add_into(buf, &g));
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    if needs(*a) {
                        accumulate(&mut grads[a.0], g.len(), |buf| {
                            for ((d, &gv), &y) in buf.iter_mut().zip(&g).zip(tb.data()) {
                                *d += gv * y;
                            }
                        });
                    }
                    if needs(*b) {
                        accumulate(&mut grads[b.0], g.len(), |buf| {
                            for ((d, &gv), &x) in buf.iter_mut().zip(&g).zip(ta.data()) {
                                *d += gv * x;
                            }
                        });
                    }
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    accumulate(&mut grads[x.0], g.len(), |buf| {
                        for (d, &gv) in buf.iter_mut().zip(&g) {
                            *d += gv * s;
                        }
                    });
                }
                Op::OneMinus(x) => accumulate(&mut grads[x.0], g.len(), |buf| {
                    for (d, &gv) in buf.iter_mut().zip(&g) {
                        *d -= gv;
                    }
                }),
                Op::Sigmoid(x) => accumulate(&mut grads[x.0], g.len(), |buf| {
                    for ((d, &gv), &y) in buf.iter_mut().zip(&g).zip(out.data()) {
                        *d += gv * y * (T::one() - y);
                    }
                }),
                Op::Tanh(x) => accumulate(&mut grads[x.0], g.len(), |buf| {
                    for ((d, &gv), &y) in buf.iter_mut().zip(&g).zip(out.data()) {
                        *d += gv * (T::one() - y * y);
                    }
                }),
                Op::Relu(x) => accumulate(&mut grads[x.0], g.len(), |buf| {
                    for ((d, &gv), &y) in buf.iter_mut().zip(&g).zip(out.data()) {
                        if y > T::zero() {
                            *d += gv;
                        }
                    }
                }),
                Op::Reshape(x) => accumulate(&mut grads[x.0], g.len(), |buf| add_into(buf, &g)),
                Op::SliceCols { x, start } => {
                    let tx = val(*x);
                    let (cols, len) = (tx.cols(), out.cols());
                    accumulate(&mut grads[x.0], tx.len(), |buf| {
                        for (r, gr) in g.chunks(len).enumerate() {
                            add_into(&mut buf[r * cols + start..r * cols + start + len], gr);
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let total = out.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let tp = val(p);
                        let c = tp.cols();
                        if needs(p) {
                            accumulate(&mut grads[p.0], tp.len(), |buf| {
                                for (r, br) in buf.chunks_mut(c).enumerate() {
                                    add_into(br, &g[r * total + offset..r * total + offset + c]);
                                }
                            });
                        }
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = val(p).len();
                        if needs(p) {
                            accumulate(&mut grads[p.0], len, |buf| add_into(buf, &g[offset..offset + len]));
                        }
                        offset += len;
                    }
                }
                Op::GatherRows { table, ids } => {
                    let tt = val(*table);
                    let c = tt.cols();
                    accumulate(&mut grads[table.0], tt.len(), |buf| {
                        for (gr, id) in g.chunks(c).zip(ids) {
                            if let Some(i) = *id {
                                add_into(&mut buf[i * c..(i + 1) * c], gr);
                            }
                        }
                    });
                }
                Op::SelectCols { x, cols } => {
                    let tx = val(*x);
                    let c = tx.cols();
                    accumulate(&mut grads[x.0], tx.len(), |buf| {
                        for (r, gr) in g.chunks(cols.len()).enumerate() {
                            for (&j, &gv) in cols.iter().zip(gr) {
                                buf[r * c + j] += gv;
                            }
                        }
                    });
                }
                Op::Positional { table, ids } => {
                    let tt = val(*table);
                    let n = tt.cols();
                    accumulate(&mut grads[table.0], tt.len(), |buf| {
                        for (k, id) in ids.iter().enumerate() {
                            if let Some(i) = *id {
                                buf[i * n + k % n] += g[k];
                            }
                        }
                    });
                }
                Op::WhereRows { take_new, new, old } => {
                    let c = out.cols();
                    for (v, want) in [(*new, true), (*old, false)] {
                        if needs(v) {
                            accumulate(&mut grads[v.0], g.len(), |buf| {
                                for (r, &k) in take_new.iter().enumerate() {
                                    if k == want {
                                        add_into(&mut buf[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                                    }
                                }
                            });
                        }
                    }
                }
                Op::Sum(x) => {
                    let len = val(*x).len();
                    accumulate(&mut grads[x.0], len, |buf| {
                        for d in buf.iter_mut() {
                            *d += g[0];
                        }
                    });
                }
                Op::Mean(x) => {
                    let len = val(*x).len();
                    let s = g[0] / T::of(len as f64);
                    accumulate(&mut grads[x.0], len, |buf| {
                        for d in buf.iter_mut() {
                            *d += s;
                        }
                    });
                }
                Op::Dropout { x, mask } => accumulate(&mut grads[x.0], g.len(), |buf| {
                    for ((d, &gv), &m) in buf.iter_mut().zip(&g).zip(mask) {
                        *d += gv * m;
                    }
                }),
                Op::ConvMax { x, w, b, width, argmax } => {
                    let (tx, tw) = (val(*x), val(*w));
                    let k = tw.cols();
                    let wd = tw.rows();
                    let d = wd / width;
                    let cols = tx.cols();
                    let gpre: Vec<T> = g
                        .iter()
                        .zip(out.data())
                        .map(|(&gv, &y)| gv * (T::one() - y * y))
                        .collect();
                    if needs(*b) {
                        accumulate(&mut grads[b.0], k, |buf| {
                            for row in gpre.chunks(k) {
                                add_into(buf, row);
                            }
                        });
                    }
                    if needs(*w) {
                        accumulate(&mut grads[w.0], tw.len(), |buf| {
                            for r in 0..tx.rows() {
                                let xrow = tx.row(r);
                                for j in 0..k {
                                    let gp = gpre[r * k + j];
                                    if gp == T::zero() {
                                        continue;
                                    }
                                    let s = argmax[r * k + j];
                                    for (e, &xv) in xrow[s * d..s * d + wd].iter().enumerate() {
                                        buf[e * k + j] += gp * xv;
                                    }
                                }
                            }
                        });
                    }
                    if needs(*x) {
                        accumulate(&mut grads[x.0], tx.len(), |buf| {
                            for r in 0..tx.rows() {
                                for j in 0..k {
                                    let gp = gpre[r * k + j];
                                    if gp == T::zero() {
                                        continue;
                                    }
                                    let base = r * cols + argmax[r * k + j] * d;
                                    for e in 0..wd {
                                        buf[base + e] += gp * tw.data()[e * k + j];
                                    }
                                }
                            }
                        });
                    }
                }
                Op::MaskedSoftmax { x, lengths } => {
                    let n = out.cols();
                    accumulate(&mut grads[x.0], g.len(), |buf| {
                        for (r, &l) in lengths.iter().enumerate() {
                            let a = &out.data()[r * n..r * n + l];
                            let gr = &g[r * n..r * n + l];
                            let dot = a.iter().zip(gr).fold(T::zero(), |s, (&p, &q)| s + p * q);
                            for t in 0..l {
                                buf[r * n + t] += a[t] * (gr[t] - dot);
                            }
                        }
                    });
                }
                Op::WeightedSum { alpha, seq } => {
                    let (ta, ts) = (val(*alpha), val(*seq));
                    let n = ta.cols();
                    let d = ts.cols() / n;
                    if needs(*alpha) {
                        accumulate(&mut grads[alpha.0], ta.len(), |buf| {
                            for r in 0..ta.rows() {
                                let gr = &g[r * d..(r + 1) * d];
                                let srow = ts.row(r);
                                for t in 0..n {
                                    let s = srow[t * d..(t + 1) * d]
                                        .iter()
                                        .zip(gr)
                                        .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                                    buf[r * n + t] += s;
                                }
                            }
                        });
                    }
                    if needs(*seq) {
                        accumulate(&mut grads[seq.0], ts.len(), |buf| {
                            for r in 0..ta.rows() {
                                let gr = &g[r * d..(r + 1) * d];
                                for (t, &a) in ta.row(r).iter().enumerate() {
                                    if a == T::zero() {
                                        continue;
                                    }
                                    let dst = &mut buf[r * n * d + t * d..r * n * d + (t + 1) * d];
                                    for (dv, &gv) in dst.iter_mut().zip(gr) {
                                        *dv += a * gv;
                                    }
                                }
                            }
                        });
                    }
                }
                Op::SoftmaxXent { logits, targets, probs } => {
                    let rows = targets.len();
                    let v = probs.len() / rows;
                    let s = g[0] / T::of(rows as f64);
                    accumulate(&mut grads[logits.0], probs.len(), |buf| {
                        for r in 0..rows {
                            for c in 0..v {
                                let mut d = probs[r * v + c];
                                if c == targets[r] {
                                    d -= T::one();
                                }
                                buf[r * v + c] += s * d;
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }

    /// Accumulated gradient of a leaf or parameter node.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.param_grads[id.0].as_deref(),
            _ => self.leaf_grads[v.0].as_deref(),
        }
    }

    pub fn param_grad(&self, id: ParamId) -> Option<&[T]> {
        self.param_grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Per-parameter gradients indexed by [`ParamId`]; untouched parameters are `None`.
    pub fn take_param_grads(&mut self) -> Vec<Option<Vec<T>>> {
        let n = self.param_grads.len();
        core::mem::replace(&mut self.param_grads, vec![None; n])
    }
}

/// `-log softmax(row)[target]` computed as `logsumexp(row) - row[target]`.
pub fn nll_from_logits<T: Real>(row: &[T], target: usize) -> T {
    let max = row
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, x| if x > m { x } else { m });
    let mut sum = T::zero();
    for &z in row {
        sum += (z - max).libm_exp();
    }
    max + sum.libm_ln() - row[target]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn affine_examples() {
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let x = g.constant(t(&[1, 2], &[1.0, 2.0]));
        let w = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(t(&[2], &[0.0, 0.0]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), [1.0, 2.0]);

        let x = g.constant(t(&[1, 2], &[1.0, 1.0]));
        let w = g.constant(t(&[2, 1], &[2.0, 3.0]));
        let b = g.constant(t(&[1], &[1.0]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), [6.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let w = g.constant(Tensor::zeros(&[4, 2]));
        let b = g.constant(Tensor::zeros(&[2]));
        let msg = g.affine(x, w, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn softmax_xent_examples() {
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let z = g.constant(Tensor::zeros(&[1, 10]));
        let l = g.softmax_xent(z, &[3]).unwrap();
        assert!((g.value(l).item() - 10f64.ln()).abs() < 1e-12);
        assert!(g.softmax_probs(l).unwrap().iter().all(|&p| (p - 0.1).abs() < 1e-15));

        let z = g.constant(t(&[1, 2], &[100.0, 0.0]));
        let l = g.softmax_xent(z, &[0]).unwrap();
        assert!(g.value(l).item() < 1e-6);

        let z = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.softmax_xent(z, &[0, 3]), Err(Error::Index { .. })));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..50 * 40).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let z = g.constant(t(&[50, 40], &data));
        let l = g.softmax_xent(z, &[0; 50]).unwrap();
        for row in g.softmax_probs(l).unwrap().chunks(40) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        let mut g = Graph::<f32>::standalone(Mode::Eval, 0);
        let z = g.constant(Tensor::new(&[50, 40], data.iter().map(|&x| x as f32).collect()).unwrap());
        let l = g.softmax_xent(z, &[0; 50]).unwrap();
        for row in g.softmax_probs(l).unwrap().chunks(40) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn dropout_modes() {
        let x = t(&[2, 3], &[1.0, -2.0, 3.5, 0.25, 9.0, -1e-3]);
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let v = g.constant(x.clone());
        let y = g.dropout(v, 0.5).unwrap();
        assert_eq!(g.value(y), &x);

        let mut g = Graph::<f64>::standalone(Mode::Train, 0);
        let v = g.constant(x.clone());
        let y = g.dropout(v, 0.0).unwrap();
        assert_eq!(g.value(y), &x);
        assert!(matches!(g.dropout(v, 1.0), Err(Error::Config(_))));
        assert!(matches!(g.dropout(v, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_keep_fraction() {
        let n = 100_000;
        let mut g = Graph::<f64>::standalone(Mode::Train, 42);
        let v = g.constant(Tensor::full(&[n], 1.0));
        let y = g.dropout(v, 0.5).unwrap();
        let kept = g.value(y).data().iter().filter(|&&x| x != 0.0).count();
        let frac = kept as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "keep fraction {frac}");
        assert!(g.value(y).data().iter().all(|&x| x == 0.0 || x == 2.0));
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::<f64>::standalone(Mode::Train, 0);
        let x = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), [1.0; 4]);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), [2.0; 4]);

        let mut g = Graph::<f64>::standalone(Mode::Train, 0);
        let a = g.leaf(Tensor::scalar(3.0));
        let b = g.leaf(Tensor::scalar(-5.0));
        let p = g.mul(a, b).unwrap();
        g.backward(p).unwrap();
        assert_eq!(g.grad(a).unwrap(), [-5.0]);
        assert_eq!(g.grad(b).unwrap(), [3.0]);

        let v = g.leaf(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(v), Err(Error::Contract(_))));
    }

    #[test]
    fn records_are_topological() {
        let mut g = Graph::<f64>::standalone(Mode::Train, 0);
        let x = g.leaf(t(&[1, 2], &[1.0, 2.0]));
        let y = g.tanh(x);
        let z = g.mul(x, y).unwrap();
        assert!(x.index() < y.index() && y.index() < z.index());
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn conv_basis_filter_is_max_of_one_coordinate() {
        let (n, d) = (4, 3);
        let x = t(&[2, n * d], &[
            0.1, 0.5, -0.2, 0.9, -0.4, 0.0, 0.3, 0.2, 0.1, -0.5, 1.2, 0.7, //
            -0.3, -0.1, 0.0, -0.6, 0.4, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let xv = g.constant(x.clone());
        let w = g.constant(t(&[d, 1], &[0.0, 1.0, 0.0]));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv_max_over_time(xv, w, b, 1, n, &[4, 2]).unwrap();
        let want0 = [0.5f64, -0.4, 0.2, 1.2].iter().copied().fold(f64::MIN, f64::max).tanh();
        let want1 = [-0.1f64, 0.4].iter().copied().fold(f64::MIN, f64::max).tanh();
        assert_eq!(g.value(y).data(), [want0, want1]);
    }

    #[test]
    fn conv_single_position() {
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let x = g.constant(t(&[1, 2], &[0.3, -0.7]));
        let w = g.constant(t(&[2, 2], &[1.0, 2.0, -1.0, 0.5]));
        let b = g.constant(t(&[2], &[0.1, 0.0]));
        let y = g.conv_max_over_time(x, w, b, 1, 1, &[1]).unwrap();
        let want = [(0.3f64 + 0.7 + 0.1).tanh(), (0.6f64 - 0.35).tanh()];
        for (a, b) in g.value(y).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(g.conv_max_over_time(x, w, b, 2, 1, &[1]), Err(Error::Dimension { .. }) | Err(Error::Config(_))));
    }

    #[test]
    fn masked_softmax_zeroes_the_tail() {
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let x = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 0.0, 0.0, 5.0]));
        let a = g.masked_softmax(x, &[3, 2]).unwrap();
        let v = g.value(a).data();
        assert!((v[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(&v[3..], [0.5, 0.5, 0.0]);
    }

    #[test]
    fn gather_none_is_zero_row() {
        let mut g = Graph::<f64>::standalone(Mode::Eval, 0);
        let e = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let r = g.gather_rows(e, &[Some(1), None, Some(0)]).unwrap();
        assert_eq!(g.value(r).data(), [3.0, 4.0, 0.0, 0.0, 1.0, 2.0]);
        assert!(matches!(g.gather_rows(e, &[Some(2)]), Err(Error::Index { .. })));
    }
}

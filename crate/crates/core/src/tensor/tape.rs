use std::collections::HashMap;

use super::{check_shape, lit, Activation, Real, Tensor, TensorError};
use crate::params::{ParamId, ParameterStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Activate(Var, Activation),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    GatherRows {
        src: Var,
        index: Vec<usize>,
    },
    ScatterAddRows {
        src: Var,
        index: Vec<usize>,
    },
    ScaleRows {
        src: Var,
        weights: Var,
    },
    Softmax {
        src: Var,
        segments: Option<Vec<usize>>,
    },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Entropy(Var),
    NegLogPick {
        src: Var,
        index: usize,
    },
    Clamp {
        src: Var,
        lo: T,
        hi: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    shape: Vec<usize>,
    /// `None` for parameter leaves, whose values live in the store.
    value: Option<Vec<T>>,
    requires_grad: bool,
}

/// Floor applied inside logarithms of probabilities.
pub const LOG_FLOOR: f64 = 1e-12;

/// Ordered record of executed primitive ops.
///
/// Parameters are read through a shared borrow of the [`ParameterStore`], so a
/// tape must be dropped before the optimizer mutates the store. Requesting the
/// same parameter twice returns the same [`Var`].
pub struct Tape<'p, T: Real> {
    params: Option<&'p ParameterStore<T>>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new() -> Self {
        Tape {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn with_params(store: &'p ParameterStore<T>) -> Self {
        Tape {
            params: Some(store),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(data), _) => data,
            (None, Op::Param(id)) => self
                .params
                .expect("parameter leaf without store")
                .get(*id)
                .data(),
            _ => unreachable!("non-parameter node without value"),
        }
    }

    /// Copies a recorded value out as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("recorded values are valid")
    }

    pub fn item(&self, v: Var) -> T {
        self.value(v)[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Every recorded value, in execution order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.nodes.len()).map(Var)
    }

    /// Parameters bound on this tape, in first-use order.
    pub fn param_vars(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, Var(i))),
                _ => None,
            })
    }

    fn push(
        &mut self,
        op: &'static str,
        kind: Op<T>,
        shape: Vec<usize>,
        value: Vec<T>,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if value.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        self.nodes.push(Node {
            op: kind,
            shape,
            value: Some(value),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize), TensorError> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(TensorError::dim(
                op,
                format!("expected a matrix, got shape {s:?}"),
            )),
        }
    }

    /// Records a tensor as a leaf. It is differentiable iff `requires_grad` is set.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad;
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            op: Op::Leaf,
            shape,
            value: Some(t.into_data()),
            requires_grad: rg,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a non-differentiable constant.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var, TensorError> {
        Ok(self.leaf(Tensor::new(shape, data)?))
    }

    /// Binds a parameter from the store; repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.params.expect("Tape::param requires Tape::with_params");
        let shape = store.get(id).shape().to_vec();
        self.nodes.push(Node {
            op: Op::Param(id),
            shape,
            value: None,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(TensorError::dim(
                "matmul",
                format!("[{m}x{k}] x [{k2}x{n}]"),
            ));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                for (o, &y) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o = *o + x * y;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push("matmul", Op::MatMul(a, b), vec![m, n], out, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::dim(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.rg(&[a, b]);
        let shape = self.shape(a).to_vec();
        self.push("add", Op::Add(a, b), shape, out, rg)
    }

    /// Adds a length-`cols` vector to every row of a matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (r, c) = self.matrix_dims("add_row", a)?;
        let len = self.value(row).len();
        if len != c {
            return Err(TensorError::dim(
                "add_row",
                format!("{c} columns vs bias of {len}"),
            ));
        }
        let (av, bv) = (self.value(a), self.value(row));
        let out = (0..r * c).map(|i| av[i] + bv[i % c]).collect();
        let rg = self.rg(&[a, row]);
        self.push("add_row", Op::AddRow(a, row), vec![r, c], out, rg)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::dim(
                "mul",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let rg = self.rg(&[a, b]);
        let shape = self.shape(a).to_vec();
        self.push("mul", Op::Mul(a, b), shape, out, rg)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var, TensorError> {
        let out = self.value(a).iter().map(|&x| x * factor).collect();
        let rg = self.rg(&[a]);
        let shape = self.shape(a).to_vec();
        self.push("scale", Op::Scale(a, factor), shape, out, rg)
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Result<Var, TensorError> {
        let out = self.value(a).iter().map(|&x| act.apply(x)).collect();
        let rg = self.rg(&[a]);
        let shape = self.shape(a).to_vec();
        self.push("activate", Op::Activate(a, act), shape, out, rg)
    }

    /// Concatenates along `axis`; every other dimension must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::arg("concat", "empty part list"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::arg(
                "concat",
                format!("axis {axis} for rank {}", base.len()),
            ));
        }
        let mut shape = base.clone();
        shape[axis] = 0;
        for &p in parts {
            let s = self.shape(p);
            let agrees = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !agrees {
                return Err(TensorError::dim(
                    "concat",
                    format!("{s:?} vs {base:?} on axis {axis}"),
                ));
            }
            shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p)[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = self.rg(parts);
        self.push(
            "concat",
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            shape,
            out,
            rg,
        )
    }

    /// Selects rows of a matrix (rows may repeat).
    pub fn gather_rows(&mut self, src: Var, index: &[usize]) -> Result<Var, TensorError> {
        let (r, c) = self.matrix_dims("gather_rows", src)?;
        if index.is_empty() {
            return Err(TensorError::arg("gather_rows", "empty index"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(TensorError::arg(
                "gather_rows",
                format!("row {bad} out of {r}"),
            ));
        }
        let sv = self.value(src);
        let out = index
            .iter()
            .flat_map(|&i| sv[i * c..(i + 1) * c].iter().copied())
            .collect();
        let rg = self.rg(&[src]);
        let kind = Op::GatherRows {
            src,
            index: index.to_vec(),
        };
        self.push("gather_rows", kind, vec![index.len(), c], out, rg)
    }

    /// `out[index[k]] += src[k]` into a zero matrix with `rows` rows.
    pub fn scatter_add_rows(
        &mut self,
        src: Var,
        index: &[usize],
        rows: usize,
    ) -> Result<Var, TensorError> {
        let (r, c) = self.matrix_dims("scatter_add_rows", src)?;
        if index.len() != r {
            return Err(TensorError::dim(
                "scatter_add_rows",
                format!("{} indices for {r} rows", index.len()),
            ));
        }
        check_shape("scatter_add_rows", &[rows])?;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(TensorError::arg(
                "scatter_add_rows",
                format!("row {bad} out of {rows}"),
            ));
        }
        let sv = self.value(src);
        let mut out = vec![T::zero(); rows * c];
        for (k, &dst) in index.iter().enumerate() {
            for d in 0..c {
                out[dst * c + d] = out[dst * c + d] + sv[k * c + d];
            }
        }
        let rg = self.rg(&[src]);
        let kind = Op::ScatterAddRows {
            src,
            index: index.to_vec(),
        };
        self.push("scatter_add_rows", kind, vec![rows, c], out, rg)
    }

    /// Multiplies row `k` of a matrix by `weights[k]`.
    pub fn scale_rows(&mut self, src: Var, weights: Var) -> Result<Var, TensorError> {
        let (r, c) = self.matrix_dims("scale_rows", src)?;
        if self.value(weights).len() != r {
            return Err(TensorError::dim(
                "scale_rows",
                format!("{} weights for {r} rows", self.value(weights).len()),
            ));
        }
        let (sv, wv) = (self.value(src), self.value(weights));
        let out = (0..r * c).map(|i| sv[i] * wv[i / c]).collect();
        let rg = self.rg(&[src, weights]);
        self.push(
            "scale_rows",
            Op::ScaleRows { src, weights },
            vec![r, c],
            out,
            rg,
        )
    }

    /// Softmax over all elements, computed with max subtraction.
    pub fn softmax(&mut self, v: Var) -> Result<Var, TensorError> {
        let out = softmax_segments(self.value(v), None, 1);
        let rg = self.rg(&[v]);
        let shape = self.shape(v).to_vec();
        self.push(
            "softmax",
            Op::Softmax {
                src: v,
                segments: None,
            },
            shape,
            out,
            rg,
        )
    }

    /// Independent softmax within each segment; `segments[k]` names the group of element `k`.
    pub fn segment_softmax(&mut self, v: Var, segments: &[usize]) -> Result<Var, TensorError> {
        if segments.len() != self.value(v).len() {
            return Err(TensorError::dim(
                "segment_softmax",
                "segment ids do not cover the input",
            ));
        }
        let groups = segments.iter().max().map_or(0, |&m| m + 1);
        let out = softmax_segments(self.value(v), Some(segments), groups);
        let rg = self.rg(&[v]);
        let shape = self.shape(v).to_vec();
        let kind = Op::Softmax {
            src: v,
            segments: Some(segments.to_vec()),
        };
        self.push("segment_softmax", kind, shape, out, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let (r, c) = self.matrix_dims("transpose", a)?;
        let av = self.value(a);
        let out = (0..r * c).map(|i| av[(i % r) * c + i / r]).collect();
        let rg = self.rg(&[a]);
        self.push("transpose", Op::Transpose(a), vec![c, r], out, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        check_shape("reshape", &shape)?;
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(TensorError::dim(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape(a)),
            ));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        self.push("reshape", Op::Reshape(a), shape, out, rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push("sum", Op::Sum(a), vec![1], vec![s], rg)
    }

    /// Shannon entropy `-Σ p ln max(p, 1e-12)`; zero entries contribute nothing.
    pub fn entropy(&mut self, p: Var) -> Result<Var, TensorError> {
        let floor = lit::<T>(LOG_FLOOR);
        let h = self
            .value(p)
            .iter()
            .map(|&x| -(x * x.max(floor).ln()))
            .sum();
        let rg = self.rg(&[p]);
        self.push("entropy", Op::Entropy(p), vec![1], vec![h], rg)
    }

    /// `-ln max(p[index], 1e-12)`.
    pub fn neg_log_pick(&mut self, p: Var, index: usize) -> Result<Var, TensorError> {
        let len = self.value(p).len();
        if index >= len {
            return Err(TensorError::arg(
                "neg_log_pick",
                format!("index {index} out of {len}"),
            ));
        }
        let x = self.value(p)[index].max(lit(LOG_FLOOR));
        let rg = self.rg(&[p]);
        self.push(
            "neg_log_pick",
            Op::NegLogPick { src: p, index },
            vec![1],
            vec![-x.ln()],
            rg,
        )
    }

    /// Clamps elementwise into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Result<Var, TensorError> {
        let out = self.value(a).iter().map(|&x| x.max(lo).min(hi)).collect();
        let rg = self.rg(&[a]);
        let shape = self.shape(a).to_vec();
        self.push("clamp", Op::Clamp { src: a, lo, hi }, shape, out, rg)
    }

    /// Reverse sweep from a scalar `loss`, visiting ops in exact reverse order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::arg(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].shape.iter().product();
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = self.nodes[i].value.as_deref().unwrap_or(&[]);
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                let (av, bv) = (self.value(a), self.value(b));
                self.accumulate(grads, a, |da| {
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s = s + g[r * n + j] * bv[p * n + j];
                            }
                            da[r * k + p] = da[r * k + p] + s;
                        }
                    }
                });
                self.accumulate(grads, b, |db| {
                    for r in 0..m {
                        for p in 0..k {
                            let x = av[r * k + p];
                            for j in 0..n {
                                db[p * n + j] = db[p * n + j] + x * g[r * n + j];
                            }
                        }
                    }
                });
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    self.accumulate(grads, v, |d| add_into(d, g));
                }
            }
            &Op::AddRow(a, row) => {
                self.accumulate(grads, a, |d| add_into(d, g));
                let c = self.value(row).len();
                self.accumulate(grads, row, |d| {
                    for (k, &x) in g.iter().enumerate() {
                        d[k % c] = d[k % c] + x;
                    }
                });
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                self.accumulate(grads, a, |d| {
                    for k in 0..d.len() {
                        d[k] = d[k] + g[k] * bv[k];
                    }
                });
                self.accumulate(grads, b, |d| {
                    for k in 0..d.len() {
                        d[k] = d[k] + g[k] * av[k];
                    }
                });
            }
            &Op::Scale(a, f) => self.accumulate(grads, a, |d| {
                for (x, &y) in d.iter_mut().zip(g) {
                    *x = *x + y * f;
                }
            }),
            &Op::Activate(a, act) => {
                let input = self.value(a);
                self.accumulate(grads, a, |d| {
                    for k in 0..d.len() {
                        d[k] = d[k] + g[k] * act.derivative(input[k], out[k]);
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let axis = *axis;
                let inner: usize = self.nodes[i].shape[axis + 1..].iter().product();
                let outer: usize = self.nodes[i].shape[..axis].iter().product();
                let total = self.nodes[i].shape[axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = self.shape(p)[axis] * inner;
                    self.accumulate(grads, p, |d| {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            add_into(&mut d[o * chunk..(o + 1) * chunk], src);
                        }
                    });
                    offset += chunk;
                }
            }
            Op::GatherRows { src, index } => {
                let c = self.shape(*src)[1];
                self.accumulate(grads, *src, |d| {
                    for (k, &r) in index.iter().enumerate() {
                        add_into(&mut d[r * c..(r + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::ScatterAddRows { src, index } => {
                let c = self.shape(*src)[1];
                self.accumulate(grads, *src, |d| {
                    for (k, &r) in index.iter().enumerate() {
                        add_into(&mut d[k * c..(k + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                });
            }
            &Op::ScaleRows { src, weights } => {
                let c = self.shape(src)[1];
                let (sv, wv) = (self.value(src), self.value(weights));
                self.accumulate(grads, src, |d| {
                    for k in 0..d.len() {
                        d[k] = d[k] + g[k] * wv[k / c];
                    }
                });
                self.accumulate(grads, weights, |d| {
                    for (r, dr) in d.iter_mut().enumerate() {
                        let mut s = T::zero();
                        for j in 0..c {
                            s = s + g[r * c + j] * sv[r * c + j];
                        }
                        *dr = *dr + s;
                    }
                });
            }
            Op::Softmax { src, segments } => {
                let groups = segments
                    .as_ref()
                    .map_or(1, |s| s.iter().max().map_or(0, |&m| m + 1));
                let seg = |k: usize| segments.as_ref().map_or(0, |s| s[k]);
                let mut dot = vec![T::zero(); groups];
                for k in 0..out.len() {
                    dot[seg(k)] = dot[seg(k)] + g[k] * out[k];
                }
                self.accumulate(grads, *src, |d| {
                    for k in 0..d.len() {
                        d[k] = d[k] + out[k] * (g[k] - dot[seg(k)]);
                    }
                });
            }
            &Op::Transpose(a) => {
                let (r, c) = (self.shape(a)[0], self.shape(a)[1]);
                self.accumulate(grads, a, |d| {
                    for x in 0..r {
                        for y in 0..c {
                            d[x * c + y] = d[x * c + y] + g[y * r + x];
                        }
                    }
                });
            }
            &Op::Reshape(a) => self.accumulate(grads, a, |d| add_into(d, g)),
            &Op::Sum(a) => self.accumulate(grads, a, |d| d.iter_mut().for_each(|x| *x = *x + g[0])),
            &Op::Entropy(p) => {
                let floor = lit::<T>(LOG_FLOOR);
                let pv = self.value(p);
                self.accumulate(grads, p, |d| {
                    for k in 0..d.len() {
                        let local = if pv[k] >= floor {
                            -(pv[k].ln() + T::one())
                        } else {
                            -floor.ln()
                        };
                        d[k] = d[k] + g[0] * local;
                    }
                });
            }
            &Op::NegLogPick { src, index } => {
                let x = self.value(src)[index];
                if x >= lit(LOG_FLOOR) {
                    self.accumulate(grads, src, |d| d[index] = d[index] - g[0] / x);
                }
            }
            &Op::Clamp { src, lo, hi } => {
                let sv = self.value(src);
                self.accumulate(grads, src, |d| {
                    for k in 0..d.len() {
                        if sv[k] >= lo && sv[k] <= hi {
                            d[k] = d[k] + g[k];
                        }
                    }
                });
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn softmax_segments<T: Real>(v: &[T], segments: Option<&[usize]>, groups: usize) -> Vec<T> {
    let seg = |k: usize| segments.map_or(0, |s| s[k]);
    let mut max = vec![T::neg_infinity(); groups];
    for (k, &x) in v.iter().enumerate() {
        max[seg(k)] = max[seg(k)].max(x);
    }
    let exps: Vec<T> = v
        .iter()
        .enumerate()
        .map(|(k, &x)| (x - max[seg(k)]).exp())
        .collect();
    let mut total = vec![T::zero(); groups];
    for (k, &e) in exps.iter().enumerate() {
        total[seg(k)] = total[seg(k)] + e;
    }
    exps.iter()
        .enumerate()
        .map(|(k, &e)| e / total[seg(k)])
        .collect()
}

/// Result of [`Tape::backward`]: one optional gradient buffer per recorded node.
///
/// Nodes that do not require a gradient, or that the loss does not reach,
/// have no buffer.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient buffers of every parameter leaf on `tape` that the loss reached.
    pub fn into_param_grads(mut self, tape: &Tape<'_, T>) -> Vec<(ParamId, Vec<T>)> {
        tape.param_vars()
            .filter_map(|(id, v)| {
                self.grads
                    .get_mut(v.0)
                    .and_then(Option::take)
                    .map(|g| (id, g))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(t: &mut Tape<'_, f64>, rows: &[&[f64]], rg: bool) -> Var {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let mut x = Tensor::from_rows(&rows).unwrap();
        x.requires_grad = rg;
        t.leaf(x)
    }

    /// Central differences of `f` with respect to every element of `x`.
    fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                p[i] += h;
                let up = f(&p);
                p[i] -= 2.0 * h;
                (up - f(&p)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn matmul_identity_and_selection() {
        let mut t = Tape::new();
        let i2 = m(&mut t, &[&[1.0, 0.0], &[0.0, 1.0]], false);
        let b = m(&mut t, &[&[1.0, 2.0], &[3.0, 4.0]], false);
        let y = t.matmul(i2, b).unwrap();
        assert_eq!(t.value(y), &[1.0, 2.0, 3.0, 4.0]);
        let a = m(&mut t, &[&[1.0, 0.0]], false);
        let c = m(&mut t, &[&[0.0], &[5.0]], false);
        let z = t.matmul(a, c).unwrap();
        assert_eq!((t.shape(z), t.value(z)), (&[1usize, 1][..], &[0.0][..]));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut t = Tape::new();
        let a = m(&mut t, &[&[1.0, 2.0]], false);
        let b = m(&mut t, &[&[1.0, 2.0]], false);
        assert!(matches!(t.matmul(a, b), Err(TensorError::Dimension { .. })));
    }

    #[test]
    fn concat_layouts_and_identity() {
        let mut t = Tape::new();
        let a = m(&mut t, &[&[1.0], &[2.0]], false);
        let b = m(&mut t, &[&[3.0]], false);
        let y = t.concat(&[a, b], 0).unwrap();
        assert_eq!(
            (t.shape(y), t.value(y)),
            (&[3usize, 1][..], &[1.0, 2.0, 3.0][..])
        );
        let single = t.concat(&[a], 0).unwrap();
        assert_eq!(t.value(single), t.value(a));
        let c = m(&mut t, &[&[5.0], &[6.0]], false);
        let cols = t.concat(&[a, c], 1).unwrap();
        assert_eq!(t.value(cols), &[1.0, 5.0, 2.0, 6.0]);
        assert!(matches!(
            t.concat(&[], 0),
            Err(TensorError::Argument { .. })
        ));
        assert!(matches!(
            t.concat(&[a, b], 1),
            Err(TensorError::Dimension { .. })
        ));
    }

    #[test]
    fn concat_backward_is_all_ones() {
        let mut t = Tape::new();
        let a = m(&mut t, &[&[1.0, 2.0], &[3.0, 4.0]], true);
        let b = m(&mut t, &[&[5.0, 6.0]], true);
        let y = t.concat(&[a, b], 0).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(a).unwrap(), &[1.0; 4]);
        assert_eq!(g.wrt(b).unwrap(), &[1.0; 2]);
        // finite differences agree
        let fd = numeric_grad(&[1.0, 2.0, 3.0, 4.0], |x| x.iter().sum::<f64>() + 11.0);
        for d in fd {
            assert!((d - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let z = t.constant(vec![4], vec![0.0; 4]).unwrap();
        let p = t.softmax(z).unwrap();
        assert_eq!(t.value(p), &[0.25; 4]);
        let l = t.constant(vec![2], vec![1f64.ln(), 3f64.ln()]).unwrap();
        let q = t.softmax(l).unwrap();
        assert!((t.value(q)[0] - 0.25).abs() < 1e-15 && (t.value(q)[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let x: [f64; 8] = [0.3, -1.2, 2.5, 0.0, -0.7, 1.1, 4.0, -3.3];
        let mut t = Tape::new();
        let v = t.constant(vec![8], x.to_vec()).unwrap();
        let p = t.softmax(v).unwrap();
        let z: f64 = x.iter().map(|a| a.exp()).sum();
        for (k, &a) in x.iter().enumerate() {
            assert!((t.value(p)[k] - a.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_softmax_normalizes_each_group() {
        let mut t = Tape::<f64>::new();
        let v = t.constant(vec![5], vec![1.0, 2.0, 3.0, -1.0, 0.5]).unwrap();
        let p = t.segment_softmax(v, &[0, 1, 0, 1, 1]).unwrap();
        let pv = t.value(p);
        assert!((pv[0] + pv[2] - 1.0).abs() < 1e-12);
        assert!((pv[1] + pv[3] + pv[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_simple_cases() {
        let mut t = Tape::new();
        let x = m(&mut t, &[&[1.0, -2.0, 3.0], &[0.5, 0.0, 4.0]], true);
        let s = t.sum(x).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(x).unwrap(), &[1.0; 6]);

        let mut t = Tape::new();
        let x = m(&mut t, &[&[1.0], &[-2.0], &[3.0]], true);
        let xt = t.transpose(x).unwrap();
        let q = t.matmul(xt, x).unwrap();
        let loss = t.scale(q, 0.5).unwrap();
        assert_eq!(t.backward(loss).unwrap().wrt(x).unwrap(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_skips_unreached() {
        let mut t = Tape::new();
        let x = m(&mut t, &[&[1.0, 2.0]], true);
        let unused = m(&mut t, &[&[1.0]], true);
        assert!(matches!(t.backward(x), Err(TensorError::Argument { .. })));
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.wrt(unused).is_none());
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut t = Tape::new();
        let x = t.constant(vec![1], vec![1e300]).unwrap();
        let y = t.mul(x, x);
        assert_eq!(y, Err(TensorError::NonFinite { op: "mul" }));
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        // loss = entropy(softmax(clamp(W x))) + neglogpick + gather/scatter/scale_rows chain
        let w0 = vec![0.3, -0.2, 0.5, 0.1, 0.7, -0.4];
        let run = |w: &[f64], want_grad: bool| -> (f64, Vec<f64>) {
            let mut t = Tape::new();
            let wt = t.leaf(Tensor::new(vec![3, 2], w.to_vec()).unwrap().with_grad());
            let x = t.constant(vec![2, 2], vec![1.0, -0.5, 0.25, 2.0]).unwrap();
            let y = t.matmul(wt, x).unwrap(); // 3x2
            let y = t.activate(y, Activation::Tanh).unwrap();
            let col = t.constant(vec![2, 1], vec![1.0, 1.0]).unwrap();
            let s = t.matmul(y, col).unwrap(); // 3x1
            let s = t.clamp(s, -30.0, 30.0).unwrap();
            let s = t.reshape(s, vec![3]).unwrap();
            let p = t.softmax(s).unwrap();
            let e = t.entropy(p).unwrap();
            let nl = t.neg_log_pick(p, 1).unwrap();
            let g = t.gather_rows(y, &[0, 2, 2, 1]).unwrap();
            let sc = t.scale_rows(g, p).err();
            assert!(sc.is_some());
            let wts = t.constant(vec![4], vec![0.5, 1.5, -1.0, 2.0]).unwrap();
            let sr = t.scale_rows(g, wts).unwrap();
            let sa = t.scatter_add_rows(sr, &[1, 0, 1, 1], 2).unwrap();
            let sq = t.mul(sa, sa).unwrap();
            let sqs = t.sum(sq).unwrap();
            let tot = t.add(e, nl).unwrap();
            let tot = t.add(tot, sqs).unwrap();
            let val = t.item(tot);
            let grad = if want_grad {
                t.backward(tot).unwrap().wrt(wt).unwrap().to_vec()
            } else {
                vec![]
            };
            (val, grad)
        };
        let (_, analytic) = run(&w0, true);
        let numeric = numeric_grad(&w0, |w| run(w, false).0);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() / (a.abs() + 1e-8) < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn repeated_param_requests_share_a_var() {
        let mut store = ParameterStore::<f64>::new();
        let id = store
            .add("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap())
            .unwrap();
        let mut t = Tape::with_params(&store);
        let a = t.param(id);
        let b = t.param(id);
        assert_eq!(a, b);
        let s = t.add(a, b).unwrap();
        let s = t.sum(s).unwrap();
        let grads = t.backward(s).unwrap().into_param_grads(&t);
        assert_eq!(grads, vec![(id, vec![2.0, 2.0])]);
    }
}

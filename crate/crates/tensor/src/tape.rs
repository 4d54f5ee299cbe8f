//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation evaluates eagerly and appends a node recording its parents.
//! [`Tape::backward`] replays the nodes in reverse, accumulating vector-Jacobian
//! products. The op set is closed; each variant of [`Op`] carries exactly what
//! its backward rule needs.

use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::kernels::{self, MixDims, Twiddles};
use crate::params::ParamSet;
use crate::tensor::{matrix_dims, Tensor};

type Id = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Id, Id),
    Sub(Id, Id),
    Mul(Id, Id),
    AddBias { a: Id, bias: Id, cols: usize },
    MulCol { a: Id, col: Id, cols: usize },
    Scale { a: Id, s: f64 },
    MatMul { a: Id, b: Id, m: usize, k: usize, n: usize },
    Sum(Id),
    Mean(Id),
    RowSum { a: Id, cols: usize },
    Square(Id),
    Sqrt(Id),
    RowNorm { a: Id, cols: usize },
    ConcatCols { parts: Vec<(Id, usize)>, rows: usize },
    SliceCols { a: Id, start: usize, width: usize, cols: usize },
    Gather { a: Id, idx: Arc<[usize]>, cols: usize },
    ScatterAdd { a: Id, idx: Arc<[usize]>, cols: usize },
    Silu { a: Id, sig: Vec<f64> },
    Sigmoid(Id),
    Reshape(Id),
    Dft { a: Id, tw: Arc<Twiddles>, batch: usize, feat: usize },
    Idft { a: Id, tw: Arc<Twiddles>, batch: usize, feat: usize },
    ModeMix { spec: Id, kre: Id, kim: Id, dims: MixDims },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias { .. } => "add_bias",
            Op::MulCol { .. } => "mul_col",
            Op::Scale { .. } => "scale",
            Op::MatMul { .. } => "matmul",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::RowSum { .. } => "row_sum",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::RowNorm { .. } => "row_norm",
            Op::ConcatCols { .. } => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::Gather { .. } => "gather_rows",
            Op::ScatterAdd { .. } => "scatter_add_rows",
            Op::Silu { .. } => "silu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Reshape(_) => "reshape",
            Op::Dft { .. } => "temporal_dft",
            Op::Idft { .. } => "temporal_idft",
            Op::ModeMix { .. } => "mode_mix",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording context for one computation graph. Not shareable across threads;
/// build one tape per thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: Id,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Registers every tensor of `params` as a differentiable leaf.
    pub fn bind<'t>(&'t self, params: &ParamSet) -> Bound<'t> {
        let vars = params
            .iter()
            .map(|(name, t)| (name.to_string(), self.param(t.clone())))
            .collect();
        Bound { vars }
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[Id]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    fn check_same(&self, v: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    /// Concatenates 2-D views along the last axis. All parts must share the
    /// leading row count.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat_cols",
            detail: "no inputs".into(),
        })?;
        for p in parts {
            self.check_same(p)?;
        }
        let (rows, _) = matrix_dims(&first.shape());
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = matrix_dims(&p.shape());
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: first.shape(),
                    rhs: p.shape(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        {
            let nodes = self.nodes.borrow();
            let mut off = 0;
            for (p, &w) in parts.iter().zip(&widths) {
                let src = nodes[p.id].value.data();
                for r in 0..rows {
                    data[r * total + off..r * total + off + w]
                        .copy_from_slice(&src[r * w..(r + 1) * w]);
                }
                off += w;
            }
        }
        let ids: Vec<Id> = parts.iter().map(|p| p.id).collect();
        let ng = self.needs(&ids);
        let value = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(
            value,
            Op::ConcatCols {
                parts: ids.into_iter().zip(widths).collect(),
                rows,
            },
            ng,
        ))
    }

    /// First node holding a NaN or infinity, with the op that produced it.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite() {
            Some((node, op)) => Err(TensorError::NonFinite { node, op }),
            None => Ok(()),
        }
    }

    /// Reverse pass from a single-element root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        self.check_same(&root)?;
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: nodes[root.id].value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[root.id] = Some(vec![1.0]);
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, g, &mut grads);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn acc<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], id: Id) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].needs_grad {
        return None;
    }
    let n = nodes[id].value.len();
    Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
}

/// Adds `contrib` to the gradient of `id`, moving it in when `id` has no
/// gradient yet.
fn deposit(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: Id, contrib: Vec<f64>) {
    if !nodes[id].needs_grad {
        return;
    }
    match &mut grads[id] {
        Some(buf) => buf.iter_mut().zip(&contrib).for_each(|(x, y)| *x += y),
        slot => *slot = Some(contrib),
    }
}

fn wants(nodes: &[Node], id: Id) -> bool {
    nodes[id].needs_grad
}

fn backprop(nodes: &[Node], id: Id, g: Vec<f64>, grads: &mut [Option<Vec<f64>>]) {
    let val = |i: Id| nodes[i].value.data();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if wants(nodes, *a) {
                deposit(nodes, grads, *a, g.clone());
            }
            deposit(nodes, grads, *b, g);
        }
        Op::Sub(a, b) => {
            if wants(nodes, *b) {
                deposit(nodes, grads, *b, g.iter().map(|y| -y).collect());
            }
            deposit(nodes, grads, *a, g);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            if wants(nodes, *a) {
                deposit(nodes, grads, *a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
            }
            if wants(nodes, *b) {
                deposit(nodes, grads, *b, g.iter().zip(av).map(|(x, y)| x * y).collect());
            }
        }
        Op::AddBias { a, bias, cols } => {
            if let Some(gb) = acc(nodes, grads, *bias) {
                for row in g.chunks_exact(*cols) {
                    gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                }
            }
            deposit(nodes, grads, *a, g);
        }
        Op::MulCol { a, col, cols } => {
            let (av, cv) = (val(*a), val(*col));
            if let Some(ga) = acc(nodes, grads, *a) {
                for (r, (gr, gar)) in g.chunks_exact(*cols).zip(ga.chunks_exact_mut(*cols)).enumerate() {
                    let s = cv[r];
                    gar.iter_mut().zip(gr).for_each(|(x, y)| *x += y * s);
                }
            }
            if let Some(gc) = acc(nodes, grads, *col) {
                for (r, (gr, ar)) in g.chunks_exact(*cols).zip(av.chunks_exact(*cols)).enumerate() {
                    gc[r] += gr.iter().zip(ar).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
        Op::Scale { a, s } => {
            deposit(nodes, grads, *a, g.into_iter().map(|y| s * y).collect());
        }
        Op::MatMul { a, b, m, k, n } => {
            let (av, bv) = (val(*a), val(*b));
            if let Some(ga) = acc(nodes, grads, *a) {
                // dA = G·Bᵀ
                kernels::gemm(*m, *n, *k, &g, false, bv, true, 1.0, ga);
            }
            if let Some(gb) = acc(nodes, grads, *b) {
                // dB = Aᵀ·G
                kernels::gemm(*k, *m, *n, av, true, &g, false, 1.0, gb);
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(nodes, grads, *a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::Mean(a) => {
            if let Some(ga) = acc(nodes, grads, *a) {
                let s = g[0] / ga.len() as f64;
                ga.iter_mut().for_each(|x| *x += s);
            }
        }
        Op::RowSum { a, cols } => {
            if let Some(ga) = acc(nodes, grads, *a) {
                for (r, row) in ga.chunks_exact_mut(*cols).enumerate() {
                    row.iter_mut().for_each(|x| *x += g[r]);
                }
            }
        }
        Op::Square(a) => {
            let av = val(*a);
            deposit(nodes, grads, *a, g.iter().zip(av).map(|(y, x)| 2.0 * x * y).collect());
        }
        Op::Sqrt(a) => {
            let out = nodes[id].value.data();
            if let Some(ga) = acc(nodes, grads, *a) {
                for i in 0..g.len() {
                    if out[i] > 0.0 {
                        ga[i] += g[i] / (2.0 * out[i]);
                    }
                }
            }
        }
        Op::RowNorm { a, cols } => {
            let av = val(*a);
            let out = nodes[id].value.data();
            if let Some(ga) = acc(nodes, grads, *a) {
                for (r, (gar, ar)) in ga.chunks_exact_mut(*cols).zip(av.chunks_exact(*cols)).enumerate() {
                    if out[r] > 0.0 {
                        let s = g[r] / out[r];
                        gar.iter_mut().zip(ar).for_each(|(x, y)| *x += s * y);
                    }
                }
            }
        }
        Op::ConcatCols { parts, rows } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut off = 0;
            for &(p, w) in parts {
                if let Some(gp) = acc(nodes, grads, p) {
                    for r in 0..*rows {
                        let src = &g[r * total + off..r * total + off + w];
                        gp[r * w..(r + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, y)| *x += y);
                    }
                }
                off += w;
            }
        }
        Op::SliceCols {
            a,
            start,
            width,
            cols,
        } => {
            if let Some(ga) = acc(nodes, grads, *a) {
                for (r, gr) in g.chunks_exact(*width).enumerate() {
                    ga[r * cols + start..r * cols + start + width]
                        .iter_mut()
                        .zip(gr)
                        .for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Gather { a, idx, cols } => {
            if let Some(ga) = acc(nodes, grads, *a) {
                for (e, &src) in idx.iter().enumerate() {
                    let gr = &g[e * cols..(e + 1) * cols];
                    ga[src * cols..(src + 1) * cols]
                        .iter_mut()
                        .zip(gr)
                        .for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::ScatterAdd { a, idx, cols } => {
            if wants(nodes, *a) {
                let mut contrib = Vec::with_capacity(idx.len() * cols);
                for &dst in idx.iter() {
                    contrib.extend_from_slice(&g[dst * cols..(dst + 1) * cols]);
                }
                deposit(nodes, grads, *a, contrib);
            }
        }
        Op::Silu { a, sig } => {
            let av = val(*a);
            let contrib = g
                .iter()
                .zip(av)
                .zip(sig)
                .map(|((y, x), s)| y * s * (1.0 + x * (1.0 - s)))
                .collect();
            deposit(nodes, grads, *a, contrib);
        }
        Op::Sigmoid(a) => {
            let out = nodes[id].value.data();
            deposit(nodes, grads, *a, g.iter().zip(out).map(|(y, o)| y * o * (1.0 - o)).collect());
        }
        Op::Reshape(a) => {
            deposit(nodes, grads, *a, g);
        }
        Op::Dft { a, tw, batch, feat } => {
            if let Some(ga) = acc(nodes, grads, *a) {
                kernels::dft_adjoint(tw, *batch, *feat, &g, ga);
            }
        }
        Op::Idft { a, tw, batch, feat } => {
            if let Some(ga) = acc(nodes, grads, *a) {
                kernels::idft_adjoint(tw, *batch, *feat, &g, ga);
            }
        }
        Op::ModeMix {
            spec,
            kre,
            kim,
            dims,
        } => {
            let (sv, krv, kiv) = (val(*spec), val(*kre), val(*kim));
            // Three distinct parents; take their buffers one at a time.
            let mut gs = acc(nodes, grads, *spec).map(std::mem::take);
            let mut gkr = acc(nodes, grads, *kre).map(std::mem::take);
            let mut gki = acc(nodes, grads, *kim).map(std::mem::take);
            kernels::mode_mix_backward(
                *dims,
                sv,
                krv,
                kiv,
                &g,
                gs.as_deref_mut(),
                gkr.as_deref_mut(),
                gki.as_deref_mut(),
            );
            for (p, buf) in [(*spec, gs), (*kre, gkr), (*kim, gki)] {
                if let Some(b) = buf {
                    grads[p] = Some(b);
                }
            }
        }
    }
}

/// Gradients of one backward pass, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if `v` did not influence the root.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        let shape = self.shapes[v.id].clone();
        match &self.grads[v.id] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Named gradients for every bound parameter.
    pub fn collect(&self, bound: &Bound<'_>) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, var) in &bound.vars {
            out.insert(name.clone(), self.get(*var));
        }
        out
    }
}

/// Parameters registered on a tape, by name.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::InvalidArgument {
                op: "bind",
                detail: format!("unknown parameter `{name}`"),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t>)> + '_ {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Scalar value of a single-element node.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn same_shape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        self.tape.check_same(other)?;
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(TensorError::ShapeMismatch { op, lhs: a, rhs: b });
        }
        Ok(())
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = {
            let v = self.value();
            Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
                .expect("same length")
        };
        let ng = self.tape.needs(&[self.id]);
        self.tape.push(value, op, ng)
    }

    fn binary(&self, other: &Var<'t>, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.same_shape(other, name)?;
        let value = {
            let (a, b) = (self.value(), other.value());
            Tensor::new(
                a.shape().to_vec(),
                a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
            )?
        };
        let ng = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(value, op, ng))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(&other, Op::Add(self.id, other.id), "add", |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(&other, Op::Sub(self.id, other.id), "sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(&other, Op::Mul(self.id, other.id), "mul", |a, b| a * b)
    }

    /// Adds a length-`cols` vector to every row of the 2-D view.
    pub fn add_bias(&self, bias: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_same(&bias)?;
        let shape = self.shape();
        let (_, cols) = matrix_dims(&shape);
        if bias.value().len() != cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: shape,
                rhs: bias.shape(),
            });
        }
        let value = {
            let (a, b) = (self.value(), bias.value());
            let mut d = a.data().to_vec();
            for row in d.chunks_exact_mut(cols) {
                row.iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
            }
            Tensor::new(shape, d)?
        };
        let ng = self.tape.needs(&[self.id, bias.id]);
        Ok(self.tape.push(
            value,
            Op::AddBias {
                a: self.id,
                bias: bias.id,
                cols,
            },
            ng,
        ))
    }

    /// Scales row `r` of the 2-D view by `col[r]`; `col` has one entry per row.
    pub fn mul_col(&self, col: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_same(&col)?;
        let shape = self.shape();
        let (rows, cols) = matrix_dims(&shape);
        if col.value().len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "mul_col",
                lhs: shape,
                rhs: col.shape(),
            });
        }
        let value = {
            let (a, c) = (self.value(), col.value());
            let mut d = a.data().to_vec();
            for (row, s) in d.chunks_exact_mut(cols).zip(c.data()) {
                row.iter_mut().for_each(|x| *x *= s);
            }
            Tensor::new(shape, d)?
        };
        let ng = self.tape.needs(&[self.id, col.id]);
        Ok(self.tape.push(
            value,
            Op::MulCol {
                a: self.id,
                col: col.id,
                cols,
            },
            ng,
        ))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.unary(Op::Scale { a: self.id, s }, |x| s * x)
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_same(&other)?;
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let value = {
            let (a, b) = (self.value(), other.value());
            let mut c = vec![0.0; m * n];
            kernels::gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut c);
            Tensor::new(vec![m, n], c)?
        };
        let ng = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            value,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
            ng,
        ))
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        let ng = self.tape.needs(&[self.id]);
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), ng)
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let m = {
            let v = self.value();
            if v.is_empty() {
                return Err(TensorError::InvalidArgument {
                    op: "mean",
                    detail: "empty tensor".into(),
                });
            }
            v.data().iter().sum::<f64>() / v.len() as f64
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(Tensor::scalar(m), Op::Mean(self.id), ng))
    }

    /// Sum over the last axis, producing `[rows, 1]`.
    pub fn row_sum(&self) -> Var<'t> {
        let (value, cols) = {
            let v = self.value();
            let (rows, cols) = v.as_matrix_dims();
            let d = v.data().chunks_exact(cols.max(1)).map(|r| r.iter().sum()).collect();
            (Tensor::new(vec![rows, 1], d).expect("row count"), cols)
        };
        let ng = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::RowSum { a: self.id, cols }, ng)
    }

    pub fn square(&self) -> Var<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    pub fn sqrt(&self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    /// Euclidean norm of each row of the 2-D view, producing `[rows, 1]`.
    /// The gradient at a zero row is taken as zero.
    pub fn row_norm(&self) -> Var<'t> {
        let (value, cols) = {
            let v = self.value();
            let (rows, cols) = v.as_matrix_dims();
            let d = v
                .data()
                .chunks_exact(cols.max(1))
                .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect();
            (Tensor::new(vec![rows, 1], d).expect("row count"), cols)
        };
        let ng = self.tape.needs(&[self.id]);
        self.tape.push(value, Op::RowNorm { a: self.id, cols }, ng)
    }

    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        let (rows, cols) = matrix_dims(&shape);
        if start + width > cols {
            return Err(TensorError::InvalidArgument {
                op: "slice_cols",
                detail: format!("columns {start}..{} of {cols}", start + width),
            });
        }
        let value = {
            let v = self.value();
            let mut d = Vec::with_capacity(rows * width);
            for r in v.data().chunks_exact(cols) {
                d.extend_from_slice(&r[start..start + width]);
            }
            Tensor::new(vec![rows, width], d)?
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            value,
            Op::SliceCols {
                a: self.id,
                start,
                width,
                cols,
            },
            ng,
        ))
    }

    /// `out[e] = self[idx[e]]` over rows of the 2-D view.
    pub fn gather_rows(&self, idx: &Arc<[usize]>) -> Result<Var<'t>> {
        let shape = self.shape();
        let (rows, cols) = matrix_dims(&shape);
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                bound: rows,
            });
        }
        let value = {
            let v = self.value();
            let src = v.data();
            let mut d = Vec::with_capacity(idx.len() * cols);
            for &i in idx.iter() {
                d.extend_from_slice(&src[i * cols..(i + 1) * cols]);
            }
            Tensor::new(vec![idx.len(), cols], d)?
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            value,
            Op::Gather {
                a: self.id,
                idx: idx.clone(),
                cols,
            },
            ng,
        ))
    }

    /// `out[idx[e]] += self[e]` into `out_rows` zero-initialized rows.
    pub fn scatter_add_rows(&self, idx: &Arc<[usize]>, out_rows: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        let (rows, cols) = matrix_dims(&shape);
        if rows != idx.len() {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: shape,
                rhs: vec![idx.len()],
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(TensorError::IndexOutOfRange {
                op: "scatter_add_rows",
                index: bad,
                bound: out_rows,
            });
        }
        let value = {
            let v = self.value();
            let src = v.data();
            let mut d = vec![0.0; out_rows * cols];
            for (e, &i) in idx.iter().enumerate() {
                d[i * cols..(i + 1) * cols]
                    .iter_mut()
                    .zip(&src[e * cols..(e + 1) * cols])
                    .for_each(|(x, y)| *x += y);
            }
            Tensor::new(vec![out_rows, cols], d)?
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            value,
            Op::ScatterAdd {
                a: self.id,
                idx: idx.clone(),
                cols,
            },
            ng,
        ))
    }

    pub fn silu(&self) -> Var<'t> {
        let (value, sig) = {
            let v = self.value();
            let sig: Vec<f64> = v.data().iter().map(|&x| sigmoid(x)).collect();
            let out = v.data().iter().zip(&sig).map(|(x, s)| x * s).collect();
            (Tensor::new(v.shape().to_vec(), out).expect("same length"), sig)
        };
        let ng = self.tape.needs(&[self.id]);
        let sig = if ng { sig } else { Vec::new() };
        self.tape.push(value, Op::Silu { a: self.id, sig }, ng)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let value = self.value().clone().reshape(shape)?;
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(value, Op::Reshape(self.id), ng))
    }

    /// Truncated real DFT along axis 1 of `[batch, len, feat]`, keeping
    /// `modes` frequencies. Output layout `[2, modes, batch, feat]`.
    pub fn temporal_dft(&self, modes: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 3 {
            return Err(TensorError::InvalidArgument {
                op: "temporal_dft",
                detail: format!("expected [batch, len, feat], got {shape:?}"),
            });
        }
        let (batch, len, feat) = (shape[0], shape[1], shape[2]);
        check_modes(len, modes, "temporal_dft")?;
        let tw = Arc::new(Twiddles::new(len, modes));
        let value = {
            let v = self.value();
            let mut out = vec![0.0; 2 * modes * batch * feat];
            kernels::dft_forward(&tw, batch, feat, v.data(), &mut out);
            Tensor::new(vec![2, modes, batch, feat], out)?
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            value,
            Op::Dft {
                a: self.id,
                tw,
                batch,
                feat,
            },
            ng,
        ))
    }

    /// Inverse of [`Var::temporal_dft`] onto `len` samples, zero-padding the
    /// missing modes. Output layout `[batch, len, feat]`.
    pub fn temporal_idft(&self, len: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 4 || shape[0] != 2 {
            return Err(TensorError::InvalidArgument {
                op: "temporal_idft",
                detail: format!("expected [2, modes, batch, feat], got {shape:?}"),
            });
        }
        let (modes, batch, feat) = (shape[1], shape[2], shape[3]);
        check_modes(len, modes, "temporal_idft")?;
        let tw = Arc::new(Twiddles::new(len, modes));
        let value = {
            let v = self.value();
            let mut out = vec![0.0; batch * len * feat];
            kernels::idft_forward(&tw, batch, feat, v.data(), &mut out);
            Tensor::new(vec![batch, len, feat], out)?
        };
        let ng = self.tape.needs(&[self.id]);
        Ok(self.tape.push(
            value,
            Op::Idft {
                a: self.id,
                tw,
                batch,
                feat,
            },
            ng,
        ))
    }

    /// Per-mode complex channel mixing of a spectrum `[2, modes, rows, cin]`
    /// with kernel halves `[modes, cout, cin]`.
    pub fn mode_mix(&self, kre: Var<'t>, kim: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_same(&kre)?;
        self.tape.check_same(&kim)?;
        let (ss, ks) = (self.shape(), kre.shape());
        let mismatch = || TensorError::ShapeMismatch {
            op: "mode_mix",
            lhs: ss.clone(),
            rhs: ks.clone(),
        };
        if ss.len() != 4 || ss[0] != 2 || ks.len() != 3 || ks[0] != ss[1] || ks[2] != ss[3] {
            return Err(mismatch());
        }
        if kim.shape() != ks {
            return Err(TensorError::ShapeMismatch {
                op: "mode_mix",
                lhs: ks.clone(),
                rhs: kim.shape(),
            });
        }
        let dims = MixDims {
            modes: ss[1],
            rows: ss[2],
            cin: ss[3],
            cout: ks[1],
        };
        let value = {
            let (s, kr, ki) = (self.value(), kre.value(), kim.value());
            let mut out = vec![0.0; 2 * dims.modes * dims.rows * dims.cout];
            kernels::mode_mix_forward(dims, s.data(), kr.data(), ki.data(), &mut out);
            Tensor::new(vec![2, dims.modes, dims.rows, dims.cout], out)?
        };
        let ng = self.tape.needs(&[self.id, kre.id, kim.id]);
        Ok(self.tape.push(
            value,
            Op::ModeMix {
                spec: self.id,
                kre: kre.id,
                kim: kim.id,
                dims,
            },
            ng,
        ))
    }
}

fn check_modes(len: usize, modes: usize, op: &'static str) -> Result<()> {
    if len == 0 || modes == 0 || modes > len / 2 + 1 {
        return Err(TensorError::InvalidArgument {
            op,
            detail: format!("{modes} modes for length {len} (allowed 1..={})", len / 2 + 1),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative_at_three() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = x.mul(x).unwrap();
        assert_eq!(y.item().unwrap(), 9.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
    }

    #[test]
    fn sum_has_unit_gradient() {
        let tape = Tape::new();
        let x = tape.param(Tensor::from_fn(vec![2, 3, 4], |i| i as f64 * 0.5 - 3.0));
        let g = tape.backward(x.sum()).unwrap();
        assert!(g.get(x).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::zeros(vec![3]));
        assert!(matches!(tape.backward(x.silu()), Err(TensorError::NotScalar { .. })));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.param(Tensor::zeros(vec![2, 3]));
        let b = tape.param(Tensor::zeros(vec![3, 2]));
        match a.add(b) {
            Err(TensorError::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "add");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![3, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(a.matmul(a).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::full(vec![2], 2.0));
        let p = tape.param(Tensor::full(vec![2], 3.0));
        let y = c.mul(p).unwrap().sum();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(p).data(), &[2.0, 2.0]);
        assert_eq!(g.get(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn scatter_and_gather_are_adjoint() {
        let tape = Tape::new();
        let idx: Arc<[usize]> = vec![0, 2, 2, 1].into();
        let x = tape.param(Tensor::from_fn(vec![3, 2], |i| i as f64));
        let g = x.gather_rows(&idx).unwrap();
        assert_eq!(g.value().data(), &[0., 1., 4., 5., 4., 5., 2., 3.]);
        let s = g.scatter_add_rows(&idx, 3).unwrap();
        assert_eq!(s.value().data(), &[0., 1., 2., 3., 8., 10.]);
        let grads = tape.backward(s.sum()).unwrap();
        assert_eq!(grads.get(x).data(), &[1., 1., 1., 1., 2., 2.]);
        let bad: Arc<[usize]> = vec![5].into();
        assert!(x.gather_rows(&bad).is_err());
    }

    #[test]
    fn temporal_dft_of_constant_is_dc_only() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::full(vec![1, 4, 1], 1.0));
        let s = x.temporal_dft(2).unwrap();
        assert_eq!(s.value().data(), &[4.0, 0.0, 0.0, 0.0]);
        let back = s.temporal_idft(4).unwrap();
        assert_eq!(back.value().data(), &[1.0; 4]);
        assert!(x.temporal_dft(4).is_err());
    }

    #[test]
    fn non_finite_node_is_reported() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(-1.0));
        let _ = x.sqrt();
        assert_eq!(tape.first_non_finite(), Some((1, "sqrt")));
    }
}

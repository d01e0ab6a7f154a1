//! Tape-based reverse-mode differentiation.
//!
//! Every primitive appends one entry to the tape holding its output value and
//! whatever the backward rule needs. Entries only reference earlier entries, so
//! the tape is already in topological order and `backward` is a single reverse
//! sweep.

use rand::Rng as _;

use super::tensor::{kernels, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Handle to an entry on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Hardswish,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// Forward-pass mode. Dropout draws from the generator only in training.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Eval => Mode::Eval,
            Mode::Train(rng) => Mode::Train(rng),
        }
    }
}

/// Deliberately broken backward rules, used to prove the verification suites
/// catch them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    HardswishGrad,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Elementwise, Var, Var, bool),
    Unary(Activation, Var),
    Dropout(Var, Vec<f64>),
    Mse(Var, Var),
    Reduce(Reduction, Var),
    HConcat(Vec<Var>),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    ScaleRows(Var, Var),
    DivScalar(Var, Var),
    Norm(Var),
}

#[derive(Debug)]
struct Entry {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    entries: Vec<Entry>,
    params: Vec<Var>,
    fault: Option<Fault>,
}

/// `x·clamp(x+3, 0, 6)/6`, exact in the saturated branches.
pub fn hardswish(x: f64) -> f64 {
    if x <= -3.0 {
        0.0
    } else if x >= 3.0 {
        x
    } else {
        x * (x + 3.0) / 6.0
    }
}

/// Hardswish derivative; both kinks take the middle-branch value.
pub fn hardswish_grad(x: f64) -> f64 {
    if x < -3.0 {
        0.0
    } else if x > 3.0 {
        1.0
    } else {
        (2.0 * x + 3.0) / 6.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: Option<Fault>) -> Self {
        Self {
            fault,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.entries.push(Entry {
            value,
            op,
            requires_grad,
        });
        Var(self.entries.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.entries[v.0].requires_grad
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value.detached(), Op::Leaf, false)
    }

    /// Leaf that honours the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let rg = value.requires_grad();
        self.push(value.detached(), Op::Leaf, rg)
    }

    /// Trainable leaf. Parameters are remembered in binding order.
    pub fn param(&mut self, value: &Tensor) -> Var {
        let v = self.push(value.detached(), Op::Leaf, true);
        self.params.push(v);
        v
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.entries[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.entries[v.0].value.shape()
    }

    /// Gradient stored by the last `backward` call, if `v` takes part in it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.entries[v.0].value.grad()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        let e = &self.entries[v.0];
        e.value
            .grad()
            .map(|g| Tensor::new(e.value.rows(), e.value.cols(), g.to_vec()).expect("grad shape"))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::dim("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(sa.0, sb.1);
        kernels::gemm(
            self.value(a).data(),
            sa,
            false,
            self.value(b).data(),
            sb,
            false,
            out.data_mut(),
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Elementwise op on equal shapes, or with `b` a 1×n row broadcast down `a`.
    pub fn elementwise(&mut self, a: Var, b: Var, kind: Elementwise) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let broadcast = if sa == sb {
            false
        } else if sb.0 == 1 && sb.1 == sa.1 {
            true
        } else {
            return Err(Error::dim("elementwise", sa, sb));
        };
        let f = match kind {
            Elementwise::Add => |x: f64, y: f64| x + y,
            Elementwise::Sub => |x: f64, y: f64| x - y,
            Elementwise::Mul => |x: f64, y: f64| x * y,
        };
        let av = self.value(a);
        let bv = self.value(b).data();
        let cols = sa.1;
        let data: Vec<f64> = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, if broadcast { bv[i % cols] } else { bv[i] }))
            .collect();
        let out = Tensor::new(sa.0, sa.1, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Binary(kind, a, b, broadcast), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Mul)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let f = match kind {
            Activation::Sigmoid => sigmoid,
            Activation::Tanh => f64::tanh,
            Activation::Hardswish => hardswish,
        };
        let out = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(out, Op::Unary(kind, x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn hardswish(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Hardswish)
    }

    /// Inverted dropout. Eval mode and `p == 0` return `x` itself.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode<'_>) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        let rng = match mode {
            Mode::Train(rng) if p > 0.0 => rng,
            _ => return Ok(x),
        };
        let keep = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(xv.rows(), xv.cols(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout(x, mask), rg))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(Error::dim("mse_loss", sp, st));
        }
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let n = p.len().max(1) as f64;
        let loss = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target), rg))
    }

    pub fn reduce(&mut self, x: Var, kind: Reduction) -> Var {
        let xv = self.value(x);
        let s: f64 = xv.data().iter().sum();
        let v = match kind {
            Reduction::Sum => s,
            Reduction::Mean => s / xv.len().max(1) as f64,
        };
        let rg = self.rg(x);
        self.push(Tensor::scalar(v), Op::Reduce(kind, x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.reduce(x, Reduction::Sum)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        self.reduce(x, Reduction::Mean)
    }

    /// Horizontal concatenation of equal-height matrices, row by row.
    pub fn hconcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("hconcat of zero tensors"))?;
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(Error::dim("row_concat", self.shape(first), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::HConcat(parts.to_vec()), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        let rg = self.rg(x);
        self.push(out, Op::Transpose(x), rg)
    }

    /// Output row `i` is input row `idx[i]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range for {} rows",
                xv.rows()
            )));
        }
        let out = xv.permute_rows(idx);
        let rg = self.rg(x);
        Ok(self.push(out, Op::GatherRows(x, idx.to_vec()), rg))
    }

    /// Multiplies row `i` of `x` by `s[i]`, with `s` an n×1 column.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (sx, ss) = (self.shape(x), self.shape(s));
        if ss != (sx.0, 1) {
            return Err(Error::dim("scale_rows", sx, ss));
        }
        let sv = self.value(s).data().to_vec();
        let xv = self.value(x);
        let out = Tensor::from_fn(sx.0, sx.1, |r, c| xv.get(r, c) * sv[r]);
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(out, Op::ScaleRows(x, s), rg))
    }

    /// Divides every element of `a` by the 1×1 tensor `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Error::dim("div_scalar", self.shape(a), self.shape(s)));
        }
        let d = self.value(s).data()[0];
        if d == 0.0 {
            return Err(Error::Numeric("division by zero scalar".into()));
        }
        let out = self.value(a).map(|x| x / d);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::DivScalar(a, s), rg))
    }

    /// Frobenius norm as a 1×1 tensor.
    pub fn norm(&mut self, x: Var) -> Var {
        let n = self
            .value(x)
            .data()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let rg = self.rg(x);
        self.push(Tensor::scalar(n), Op::Norm(x), rg)
    }

    /// Reverse sweep from a 1×1 loss. Afterwards every entry that requires a
    /// gradient holds d(loss)/d(entry); trainable leaves the loss does not
    /// depend on get zeros.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.entries.len()];
        grads[loss.0] = Some(vec![1.0]);

        for k in (0..=loss.0).rev() {
            if !self.entries[k].requires_grad {
                continue;
            }
            let Some(g) = grads[k].take() else { continue };
            self.backprop_entry(k, &g, &mut grads)?;
            grads[k] = Some(g);
        }

        for (k, g) in grads.into_iter().enumerate() {
            let e = &mut self.entries[k];
            if !e.requires_grad {
                continue;
            }
            match g {
                Some(g) => e.value.set_grad(g)?,
                None if matches!(e.op, Op::Leaf) => {
                    let n = e.value.len();
                    e.value.set_grad(vec![0.0; n])?
                }
                None => e.value.clear_grad(),
            }
        }
        Ok(())
    }

    fn backprop_entry(&self, k: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let entry = &self.entries[k];
        let out = &entry.value;
        match &entry.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    // dA = G·Bᵀ
                    let buf = self.slot(grads, *a);
                    kernels::gemm(g, out.shape(), false, bv.data(), bv.shape(), true, buf, 1.0);
                }
                if self.rg(*b) {
                    // dB = Aᵀ·G
                    let buf = self.slot(grads, *b);
                    kernels::gemm(av.data(), av.shape(), true, g, out.shape(), false, buf, 1.0);
                }
            }
            Op::Binary(kind, a, b, broadcast) => {
                let cols = out.cols();
                let bidx = |i: usize| if *broadcast { i % cols } else { i };
                if self.rg(*a) {
                    let bv = self.value(*b).data();
                    let buf = self.slot(grads, *a);
                    for (i, gi) in g.iter().enumerate() {
                        buf[i] += match kind {
                            Elementwise::Add | Elementwise::Sub => *gi,
                            Elementwise::Mul => gi * bv[bidx(i)],
                        };
                    }
                }
                if self.rg(*b) {
                    let av = self.value(*a).data();
                    let buf = self.slot(grads, *b);
                    for (i, gi) in g.iter().enumerate() {
                        buf[bidx(i)] += match kind {
                            Elementwise::Add => *gi,
                            Elementwise::Sub => -gi,
                            Elementwise::Mul => gi * av[i],
                        };
                    }
                }
            }
            Op::Unary(kind, x) => {
                let xv = self.value(*x).data();
                let y = out.data();
                let hsw_fault = self.fault == Some(Fault::HardswishGrad);
                let buf = self.slot(grads, *x);
                for i in 0..g.len() {
                    let d = match kind {
                        Activation::Sigmoid => y[i] * (1.0 - y[i]),
                        Activation::Tanh => 1.0 - y[i] * y[i],
                        Activation::Hardswish if hsw_fault => {
                            if xv[i].abs() <= 3.0 {
                                (xv[i] + 3.0) / 6.0
                            } else {
                                hardswish_grad(xv[i])
                            }
                        }
                        Activation::Hardswish => hardswish_grad(xv[i]),
                    };
                    buf[i] += g[i] * d;
                }
            }
            Op::Dropout(x, mask) => {
                let buf = self.slot(grads, *x);
                for i in 0..g.len() {
                    buf[i] += g[i] * mask[i];
                }
            }
            Op::Mse(p, t) => {
                let pv = self.value(*p).data();
                let tv = self.value(*t).data();
                let scale = 2.0 * g[0] / pv.len().max(1) as f64;
                if self.rg(*p) {
                    let buf = self.slot(grads, *p);
                    for i in 0..pv.len() {
                        buf[i] += scale * (pv[i] - tv[i]);
                    }
                }
                if self.rg(*t) {
                    let buf = self.slot(grads, *t);
                    for i in 0..pv.len() {
                        buf[i] -= scale * (pv[i] - tv[i]);
                    }
                }
            }
            Op::Reduce(kind, x) => {
                let n = self.value(*x).len();
                let d = match kind {
                    Reduction::Sum => g[0],
                    Reduction::Mean => g[0] / n.max(1) as f64,
                };
                let buf = self.slot(grads, *x);
                buf.iter_mut().for_each(|v| *v += d);
            }
            Op::HConcat(parts) => {
                let rows = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if self.rg(p) {
                        let buf = self.slot(grads, p);
                        for r in 0..rows {
                            for c in 0..w {
                                buf[r * w + c] += g[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Transpose(x) => {
                let (r, c) = out.shape();
                let buf = self.slot(grads, *x);
                // out is r×c, x is c×r
                for i in 0..r {
                    for j in 0..c {
                        buf[j * r + i] += g[i * c + j];
                    }
                }
            }
            Op::GatherRows(x, idx) => {
                let w = out.cols();
                let buf = self.slot(grads, *x);
                for (i, &src) in idx.iter().enumerate() {
                    for c in 0..w {
                        buf[src * w + c] += g[i * w + c];
                    }
                }
            }
            Op::ScaleRows(x, s) => {
                let (rows, w) = out.shape();
                let xv = self.value(*x).data();
                let sv = self.value(*s).data();
                if self.rg(*x) {
                    let buf = self.slot(grads, *x);
                    for r in 0..rows {
                        for c in 0..w {
                            buf[r * w + c] += g[r * w + c] * sv[r];
                        }
                    }
                }
                if self.rg(*s) {
                    let buf = self.slot(grads, *s);
                    for r in 0..rows {
                        buf[r] += (0..w).map(|c| g[r * w + c] * xv[r * w + c]).sum::<f64>();
                    }
                }
            }
            Op::DivScalar(a, s) => {
                let d = self.value(*s).data()[0];
                if self.rg(*a) {
                    let buf = self.slot(grads, *a);
                    for i in 0..g.len() {
                        buf[i] += g[i] / d;
                    }
                }
                if self.rg(*s) {
                    // d(a/s)/ds = -a/s² = -out/s
                    let y = out.data();
                    let total: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    let buf = self.slot(grads, *s);
                    buf[0] -= total / d;
                }
            }
            Op::Norm(x) => {
                let n = out.data()[0];
                if n == 0.0 {
                    return Err(Error::Numeric("gradient of norm at zero".into()));
                }
                let xv = self.value(*x).data();
                let buf = self.slot(grads, *x);
                for i in 0..xv.len() {
                    buf[i] += g[0] * xv[i] / n;
                }
            }
        }
        Ok(())
    }

    /// Mutable gradient accumulator for `v`, created zeroed on first use.
    #[allow(clippy::mut_from_ref)]
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        let n = self.entries[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }
}

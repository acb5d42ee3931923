//! Recorded forward evaluation with hand-written backward rules.

use ndarray::{ArrayView2, Axis};

use super::conv::{check_conv_shapes, conv2d_forward, ConvGeom, Padding};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<T> },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Clamp01(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Gather { x: Var, index: Vec<usize> },
    L1(Var, Var),
    Mse(Var, Var),
    Mean(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// One forward evaluation. Nodes are appended in topological order, so
/// the backward pass is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!("{op}: shape {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn softmax_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for mut row in out.as_matrix_mut().outer_iter_mut() {
        let m = row.iter().fold(row[0], |a, &b| a.max(b));
        let mut s = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v = *v / s;
        }
    }
    out
}

pub fn log_softmax_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for mut row in out.as_matrix_mut().outer_iter_mut() {
        let m = row.iter().fold(row[0], |a, &b| a.max(b));
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        for v in row.iter_mut() {
            *v = *v - lse;
        }
    }
    out
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// A differentiable leaf (a parameter).
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `x [B, in] * w[out, in]^T + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bv.shape() != [ws[0]] {
            return Err(Error::invalid(format!(
                "linear: input {xs:?}, weight {ws:?}, bias {:?}",
                bv.shape()
            )));
        }
        let y = xv.as_matrix().dot(&wv.as_matrix().t());
        let bias = bv.data();
        let data: Vec<T> = y
            .outer_iter()
            .flat_map(|row| row.iter().zip(bias).map(|(&a, &c)| a + c).collect::<Vec<_>>())
            .collect();
        let out = Tensor::new(&[xs[0], ws[0]], data)?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(out, Op::Linear { x, w, b }, ng))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (out, geom, cols) = conv2d_forward(self.value(x), self.value(w), self.value(b), stride, padding)?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(out, Op::Conv2d { x, w, b, geom, cols }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::ZERO));
        let ng = self.ng(x);
        self.push(out, Op::Relu(x), ng)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(av, bv, name)?;
        let data = av.data().iter().zip(bv.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::new(av.shape(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |p, q| p * q, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    pub fn clamp01(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::ZERO).min(T::ONE));
        let ng = self.ng(x);
        self.push(out, Op::Clamp01(x), ng)
    }

    /// Softmax along the last axis, max-shifted.
    pub fn softmax(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        let ng = self.ng(x);
        self.push(out, Op::Softmax(x), ng)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let out = log_softmax_rows(self.value(x));
        let ng = self.ng(x);
        self.push(out, Op::LogSoftmax(x), ng)
    }

    /// Picks `x[i, index[i]]` from a `[B, A]` tensor, giving `[B]`.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 2 || s[0] != index.len() || index.iter().any(|&i| i >= s[1]) {
            return Err(Error::invalid(format!("gather: shape {s:?} with {} indices", index.len())));
        }
        let data = index.iter().enumerate().map(|(r, &c)| xv.data()[r * s[1] + c]).collect();
        let out = Tensor::new(&[index.len()], data)?;
        let ng = self.ng(x);
        Ok(self.push(
            out,
            Op::Gather {
                x,
                index: index.to_vec(),
            },
            ng,
        ))
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(av, bv, "l1_loss")?;
        let n = T::from_f64(av.len() as f64);
        let s: T = av.data().iter().zip(bv.data()).map(|(&p, &q)| (p - q).abs()).sum();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::scalar(s / n), Op::L1(a, b), ng))
    }

    /// Mean squared difference.
    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(av, bv, "mse_loss")?;
        let n = T::from_f64(av.len() as f64);
        let s: T = av.data().iter().zip(bv.data()).map(|(&p, &q)| (p - q) * (p - q)).sum();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a, b), ng))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.data().iter().copied().sum::<T>() / T::from_f64(xv.len() as f64);
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::ONE));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Linear { x, w, b } => {
                    let gm = g.as_matrix();
                    if self.ng(*x) {
                        let dx = gm.dot(&self.value(*w).as_matrix());
                        accumulate(&mut grads, *x, self.value(*x).shape(), dx.iter().copied());
                    }
                    if self.ng(*w) {
                        let dw = gm.t().dot(&self.value(*x).as_matrix());
                        accumulate(&mut grads, *w, self.value(*w).shape(), dw.iter().copied());
                    }
                    if self.ng(*b) {
                        let db = gm.sum_axis(Axis(0));
                        accumulate(&mut grads, *b, self.value(*b).shape(), db.iter().copied());
                    }
                }
                Op::Conv2d { x, w, b, geom, cols } => {
                    self.conv_backward(&mut grads, &g, *x, *w, *b, geom, cols)?;
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let d = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(&gv, &v)| if v > T::ZERO { gv } else { T::ZERO });
                    accumulate(&mut grads, *x, xv.shape(), d);
                }
                Op::Add(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g.shape(), g.data().iter().copied());
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.shape(), g.data().iter().copied());
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g.shape(), g.data().iter().copied());
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.shape(), g.data().iter().map(|&v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g.shape(), g.data().iter().zip(bv.data()).map(|(&p, &q)| p * q));
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.shape(), g.data().iter().zip(av.data()).map(|(&p, &q)| p * q));
                    }
                }
                Op::Scale(x, s) => {
                    accumulate(&mut grads, *x, g.shape(), g.data().iter().map(|&v| v * *s));
                }
                Op::Clamp01(x) => {
                    let xv = self.value(*x);
                    let d = g.data().iter().zip(xv.data()).map(|(&gv, &v)| {
                        if v >= T::ZERO && v <= T::ONE {
                            gv
                        } else {
                            T::ZERO
                        }
                    });
                    accumulate(&mut grads, *x, xv.shape(), d);
                }
                Op::Softmax(x) => {
                    let y = node.value.as_matrix();
                    let gm = g.as_matrix();
                    let mut d = Vec::with_capacity(g.len());
                    for (yr, gr) in y.outer_iter().zip(gm.outer_iter()) {
                        let dot: T = yr.iter().zip(gr.iter()).map(|(&a, &b)| a * b).sum();
                        d.extend(yr.iter().zip(gr.iter()).map(|(&a, &b)| a * (b - dot)));
                    }
                    accumulate(&mut grads, *x, g.shape(), d.into_iter());
                }
                Op::LogSoftmax(x) => {
                    let y = node.value.as_matrix();
                    let gm = g.as_matrix();
                    let mut d = Vec::with_capacity(g.len());
                    for (yr, gr) in y.outer_iter().zip(gm.outer_iter()) {
                        let gs: T = gr.iter().copied().sum();
                        d.extend(yr.iter().zip(gr.iter()).map(|(&ly, &b)| b - ly.exp() * gs));
                    }
                    accumulate(&mut grads, *x, g.shape(), d.into_iter());
                }
                Op::Gather { x, index } => {
                    let s = self.value(*x).shape().to_vec();
                    let mut d = vec![T::ZERO; s[0] * s[1]];
                    for (r, &c) in index.iter().enumerate() {
                        d[r * s[1] + c] = g.data()[r];
                    }
                    accumulate(&mut grads, *x, &s, d.into_iter());
                }
                Op::L1(a, b) | Op::Mse(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let n = T::from_f64(av.len() as f64);
                    let gs = g.item() / n;
                    let is_l1 = matches!(node.op, Op::L1(..));
                    let two = T::from_f64(2.0);
                    let d: Vec<T> = av
                        .data()
                        .iter()
                        .zip(bv.data())
                        .map(|(&p, &q)| if is_l1 { (p - q).signum0() * gs } else { two * (p - q) * gs })
                        .collect();
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, av.shape(), d.iter().copied());
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, bv.shape(), d.iter().map(|&v| -v));
                    }
                }
                Op::Mean(x) | Op::Sum(x) => {
                    let xv = self.value(*x);
                    let gv = if matches!(node.op, Op::Mean(_)) {
                        g.item() / T::from_f64(xv.len() as f64)
                    } else {
                        g.item()
                    };
                    accumulate(&mut grads, *x, xv.shape(), std::iter::repeat_n(gv, xv.len()));
                }
            }
        }
        Ok(Gradients { grads })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        grads: &mut [Option<Tensor<T>>],
        g: &Tensor<T>,
        x: Var,
        w: Var,
        b: Var,
        geom: &ConvGeom,
        cols: &[T],
    ) -> Result<()> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, out_c) = check_conv_shapes(xv, wv, bv)?;
        let rows = geom.channels * geom.kernel * geom.kernel;
        let opix = geom.out_height * geom.out_width;
        let in_len = geom.channels * geom.height * geom.width;
        let wm = ArrayView2::from_shape((out_c, rows), wv.data()).expect("weight layout");
        let mut dw = ndarray::Array2::<T>::zeros((out_c, rows));
        let mut db = vec![T::ZERO; out_c];
        let mut dx = if self.ng(x) { vec![T::ZERO; xv.len()] } else { Vec::new() };
        for i in 0..n {
            let gi = ArrayView2::from_shape((out_c, opix), &g.data()[i * out_c * opix..(i + 1) * out_c * opix])
                .expect("grad layout");
            let ci = ArrayView2::from_shape((rows, opix), &cols[i * rows * opix..(i + 1) * rows * opix]).expect("cols layout");
            if self.ng(w) {
                dw += &gi.dot(&ci.t());
            }
            if self.ng(b) {
                for (o, row) in gi.outer_iter().enumerate() {
                    db[o] += row.iter().copied().sum::<T>();
                }
            }
            if self.ng(x) {
                let dcols = wm.t().dot(&gi);
                let dcols: Vec<T> = dcols.iter().copied().collect();
                geom.col2im_add(&dcols, &mut dx[i * in_len..(i + 1) * in_len]);
            }
        }
        if self.ng(w) {
            accumulate(grads, w, wv.shape(), dw.iter().copied());
        }
        if self.ng(b) {
            accumulate(grads, b, bv.shape(), db.into_iter());
        }
        if self.ng(x) {
            accumulate(grads, x, xv.shape(), dx.into_iter());
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, shape: &[usize], d: impl Iterator<Item = T>) {
    match &mut grads[v.0] {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(d) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape, d.collect()).expect("gradient matches value shape"));
        }
    }
}

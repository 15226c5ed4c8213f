//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node appended after its inputs, so
//! node order is already a topological order and the backward sweep is a
//! single reverse scan. Parameters enter the tape through [`Graph::param`];
//! requesting the same parameter twice returns the same node, which is how
//! both legs of a Siamese pair share one parameter set within one step.

use std::collections::HashMap;

use super::ops;
use super::params::{ParamId, ParamSet};
use super::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Dense { x: Var, w: Var, b: Var },
    Conv2d { x: Var, k: Var, b: Var, stride: (usize, usize) },
    MaxPool { x: Var, argmax: Vec<usize> },
    Relu(Var),
    Tanh(Var),
    Reshape(Var),
    Rows { x: Var, start: usize },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mse { pred: Var, targets: Vec<T> },
    PairHinge { left: Var, right: Var, signs: Vec<T>, active: Vec<bool> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; gradients are not propagated into it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(params.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Dense { x, w, b }))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, stride: (usize, usize)) -> Result<Var> {
        let y = ops::conv2d(self.value(x), self.value(k), self.value(b), stride)?;
        Ok(self.push(y, Op::Conv2d { x, k, b, stride }))
    }

    pub fn max_pool2d(&mut self, x: Var, window: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        let p = ops::max_pool2d(self.value(x), window, stride)?;
        Ok(self.push(p.output, Op::MaxPool { x, argmax: p.argmax }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(y, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.tanh());
        self.push(y, Op::Tanh(x))
    }

    /// Rows `start..end` of the leading axis.
    pub fn rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        let lead = xv.shape()[0];
        if start >= end || end > lead {
            return Err(shape_err("rows", format!("{start}..{end} of {lead}")));
        }
        let stride = xv.len() / lead;
        let mut shape = xv.shape().to_vec();
        shape[0] = end - start;
        let y = Tensor::new(shape, xv.data()[start * stride..end * stride].to_vec())?;
        Ok(self.push(y, Op::Rows { x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        Ok(self.push(y, Op::Reshape(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let y = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let y = self.value(a).map(|v| v * c);
        self.push(y, Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean squared error between every element of `pred` and `targets`.
    pub fn mse(&mut self, pred: Var, targets: &[T]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != targets.len() {
            return Err(shape_err(
                "mse",
                format!("{} predictions vs {} targets", p.len(), targets.len()),
            ));
        }
        if targets.is_empty() {
            return Err(Error::Empty("mse batch"));
        }
        let n = T::from_count(targets.len());
        let loss = p
            .data()
            .iter()
            .zip(targets)
            .map(|(&f, &y)| (y - f) * (y - f))
            .sum::<T>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Mean pairwise hinge `max(0, margin − sign·(left − right))`.
    ///
    /// At the hinge kink the subgradient is taken as zero.
    pub fn pair_hinge(&mut self, left: Var, right: Var, signs: &[T], margin: T) -> Result<Var> {
        self.same_shape("pair_hinge", left, right)?;
        let (l, r) = (self.value(left), self.value(right));
        if l.len() != signs.len() {
            return Err(shape_err(
                "pair_hinge",
                format!("{} pairs vs {} signs", l.len(), signs.len()),
            ));
        }
        if signs.is_empty() {
            return Err(Error::Empty("pair batch"));
        }
        let mut total = T::zero();
        let mut active = Vec::with_capacity(signs.len());
        for ((&fi, &fj), &s) in l.data().iter().zip(r.data()).zip(signs) {
            let h = margin - s * (fi - fj);
            active.push(h > T::zero());
            if h > T::zero() {
                total = total + h;
            }
        }
        let loss = total / T::from_count(signs.len());
        Ok(self.push(
            Tensor::scalar(loss),
            Op::PairHinge {
                left,
                right,
                signs: signs.to_vec(),
                active,
            },
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// Propagates d(loss)/d(node) back through the tape and adds the result
    /// into the gradient buffers of `params`.
    ///
    /// Gradients accumulate across calls; call [`ParamSet::zero_grad`] between
    /// optimisation steps (the trainer does this every step).
    pub fn backward(&self, loss: Var, params: &mut ParamSet<T>) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarBackward(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.accumulate_grad(*id, &g),
                Op::Dense { x, w, b } => {
                    let (gx, gw, gb) = ops::dense_backward(self.value(*x), self.value(*w), &g);
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Conv2d { x, k, b, stride } => {
                    let (gx, gk, gb) = ops::conv2d_backward(
                        self.value(*x),
                        self.value(*k),
                        self.value(*b),
                        *stride,
                        &g,
                    );
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *k, gk);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MaxPool { x, argmax } => {
                    let gx = ops::max_pool2d_backward(self.value(*x).shape(), argmax, &g);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Tanh(x) => {
                    let yv = &node.value;
                    let data = yv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &gv)| gv * (T::one() - y * y))
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(yv.shape().to_vec(), data)?);
                }
                Op::Rows { x, start } => {
                    let xv = self.value(*x);
                    let stride = xv.len() / xv.shape()[0];
                    let mut full = Tensor::zeros(xv.shape().to_vec());
                    full.data_mut()[start * stride..start * stride + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, full);
                }
                Op::Reshape(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    accumulate(&mut grads, *x, g.reshape(shape)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
                    let gb = g.data().iter().zip(va.data()).map(|(&x, &y)| x * y).collect();
                    accumulate(&mut grads, *a, Tensor::new(va.shape().to_vec(), ga)?);
                    accumulate(&mut grads, *b, Tensor::new(vb.shape().to_vec(), gb)?);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|v| v * *c)),
                Op::Sum(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, Tensor::full(shape, g.data()[0]));
                }
                Op::Mse { pred, targets } => {
                    let p = self.value(*pred);
                    let k = g.data()[0] * T::lit(2.0) / T::from_count(targets.len());
                    let data = p.data().iter().zip(targets).map(|(&f, &y)| k * (f - y)).collect();
                    accumulate(&mut grads, *pred, Tensor::new(p.shape().to_vec(), data)?);
                }
                Op::PairHinge {
                    left,
                    right,
                    signs,
                    active,
                } => {
                    let k = g.data()[0] / T::from_count(signs.len());
                    let shape = self.value(*left).shape().to_vec();
                    let gl: Vec<T> = signs
                        .iter()
                        .zip(active)
                        .map(|(&s, &a)| if a { -s * k } else { T::zero() })
                        .collect();
                    let gr: Vec<T> = gl.iter().map(|&v| -v).collect();
                    accumulate(&mut grads, *left, Tensor::new(shape.clone(), gl)?);
                    accumulate(&mut grads, *right, Tensor::new(shape, gr)?);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

//! Append-only computation graph with reverse-mode differentiation.
//!
//! A graph is built for one forward pass and dropped afterwards. Parameters are
//! borrowed, not copied, so a frozen model can feed many graphs at once.

use std::borrow::Cow;

use super::kernels::{self, ConvGeometry};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    /// `max(x, 0.01·x)`.
    LeakyRelu,
    Sigmoid,
    Identity,
}

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Dense { input: NodeId, weights: NodeId, bias: NodeId },
    Conv2d { input: NodeId, kernels: NodeId, bias: NodeId, geom: ConvGeometry },
    ConvTranspose2d { input: NodeId, kernels: NodeId, bias: NodeId, geom: ConvGeometry },
    Activation { input: NodeId, kind: Activation },
    Reshape { input: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Square { input: NodeId },
    Scale { input: NodeId, factor: f64 },
    Sum { input: NodeId },
    Mean { input: NodeId },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients from one backward pass, indexed by node.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an owned leaf, e.g. an input image.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    /// Adds a borrowed leaf, e.g. a model parameter.
    pub fn param(&mut self, value: &'a Tensor, requires_grad: bool) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Leaf, requires_grad)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        self.push(Cow::Owned(value), op, requires_grad)
    }

    /// `[batch, in] · [in, out] + [out]`.
    pub fn dense(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, w, b) = (self.value(input), self.value(weights), self.value(bias));
        let &[batch, in_f] = x.shape() else {
            return Err(rank_error("dense", 2, x.ndim()));
        };
        let &[w_in, out_f] = w.shape() else {
            return Err(rank_error("dense", 2, w.ndim()));
        };
        if w_in != in_f {
            return Err(dim_error("dense", "in_features", in_f, w_in));
        }
        b.expect_shape("dense bias", &[out_f])?;
        let out = kernels::dense_forward(batch, in_f, out_f, x.data(), w.data(), b.data());
        let value = Tensor::new(vec![batch, out_f], out)?;
        Ok(self.push_op(value, Op::Dense { input, weights, bias }, &[input, weights, bias]))
    }

    /// Zero-padded cross-correlation of `[batch, C_in, H, W]` with
    /// `[C_out, C_in, kH, kW]` kernels.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (x, w, b) = (self.value(input), self.value(kernels), self.value(bias));
        let &[batch, c_in, h, wd] = x.shape() else {
            return Err(rank_error("conv2d", 4, x.ndim()));
        };
        let &[c_out, k_in, kh, kw] = w.shape() else {
            return Err(rank_error("conv2d kernels", 4, w.ndim()));
        };
        if k_in != c_in {
            return Err(dim_error("conv2d", "in_channels", c_in, k_in));
        }
        b.expect_shape("conv2d bias", &[c_out])?;
        let geom = ConvGeometry::for_conv(c_in, h, wd, kh, kw, stride, padding)?;
        let out = kernels::conv2d_forward(&geom, batch, c_out, x.data(), w.data(), b.data());
        let value = Tensor::new(vec![batch, c_out, geom.grid_h, geom.grid_w], out)?;
        Ok(self.push_op(
            value,
            Op::Conv2d { input, kernels, bias, geom },
            &[input, kernels, bias],
        ))
    }

    /// Transposed convolution of `[batch, C_in, H, W]` with `[C_in, C_out, kH, kW]`
    /// kernels; output side `(H − 1)·stride − 2·padding + kH`.
    pub fn conv_transpose2d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (x, w, b) = (self.value(input), self.value(kernels), self.value(bias));
        let &[batch, c_in, h, wd] = x.shape() else {
            return Err(rank_error("conv_transpose2d", 4, x.ndim()));
        };
        let &[k_in, c_out, kh, kw] = w.shape() else {
            return Err(rank_error("conv_transpose2d kernels", 4, w.ndim()));
        };
        if k_in != c_in {
            return Err(dim_error("conv_transpose2d", "in_channels", c_in, k_in));
        }
        b.expect_shape("conv_transpose2d bias", &[c_out])?;
        let geom = ConvGeometry::for_transposed(c_out, h, wd, kh, kw, stride, padding)?;
        let out =
            kernels::conv_transpose2d_forward(&geom, batch, c_in, x.data(), w.data(), b.data());
        let value = Tensor::new(vec![batch, c_out, geom.height, geom.width], out)?;
        Ok(self.push_op(
            value,
            Op::ConvTranspose2d { input, kernels, bias, geom },
            &[input, kernels, bias],
        ))
    }

    pub fn activation(&mut self, input: NodeId, kind: Activation) -> NodeId {
        let value = self.value(input).map(|v| kind.apply(v));
        self.push_op(value, Op::Activation { input, kind }, &[input])
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(input).reshape(shape)?;
        Ok(self.push_op(value, Op::Reshape { input }, &[input]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push_op(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push_op(value, Op::Sub { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push_op(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn square(&mut self, input: NodeId) -> NodeId {
        let value = self.value(input).map(|v| v * v);
        self.push_op(value, Op::Square { input }, &[input])
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> NodeId {
        let value = self.value(input).map(|v| v * factor);
        self.push_op(value, Op::Scale { input, factor }, &[input])
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let total = self.value(input).data().iter().sum();
        self.push_op(Tensor::scalar(total), Op::Sum { input }, &[input])
    }

    pub fn mean(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let mean = x.data().iter().sum::<f64>() / x.numel() as f64;
        self.push_op(Tensor::scalar(mean), Op::Mean { input }, &[input])
    }

    /// `mean((a − b)²)` over every element.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let diff = self.sub(a, b)?;
        let sq = self.square(diff);
        Ok(self.mean(sq))
    }

    fn zip(&self, op: &'static str, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        y.expect_shape(op, x.shape())?;
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    /// Backpropagates from a scalar node, seeding its gradient with 1.
    ///
    /// Every node that requires gradients and feeds `loss` receives one;
    /// nodes off that path stay empty.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &grad, &mut grads)?;
            grads[idx] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'_>, grad: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let g = grad.data();
        match node.op {
            Op::Leaf => {}
            Op::Dense { input, weights, bias } => {
                let (x, w) = (self.value(input), self.value(weights));
                let (batch, in_f, out_f) = (x.shape()[0], x.shape()[1], w.shape()[1]);
                let d = kernels::dense_backward(batch, in_f, out_f, x.data(), w.data(), g);
                self.accumulate(grads, input, d.input)?;
                self.accumulate(grads, weights, d.weights)?;
                self.accumulate(grads, bias, d.bias)?;
            }
            Op::Conv2d { input, kernels: k, bias, geom } => {
                let (x, w) = (self.value(input), self.value(k));
                let want = [input, k, bias].map(|n| self.requires_grad(n));
                let c_out = w.shape()[0];
                let d = kernels::conv2d_backward(&geom, c_out, x.data(), w.data(), g, want);
                self.accumulate_opt(grads, input, d.input)?;
                self.accumulate_opt(grads, k, d.kernels)?;
                self.accumulate_opt(grads, bias, d.bias)?;
            }
            Op::ConvTranspose2d { input, kernels: k, bias, geom } => {
                let (x, w) = (self.value(input), self.value(k));
                let want = [input, k, bias].map(|n| self.requires_grad(n));
                let c_in = w.shape()[0];
                let d = kernels::conv_transpose2d_backward(&geom, c_in, x.data(), w.data(), g, want);
                self.accumulate_opt(grads, input, d.input)?;
                self.accumulate_opt(grads, k, d.kernels)?;
                self.accumulate_opt(grads, bias, d.bias)?;
            }
            Op::Activation { input, kind } => {
                let x = self.value(input).data();
                let y = node.value.data();
                let d = g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(&gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                    .collect();
                self.accumulate(grads, input, d)?;
            }
            Op::Reshape { input } => self.accumulate(grads, input, g.to_vec())?,
            Op::Add { a, b } => {
                self.accumulate(grads, a, g.to_vec())?;
                self.accumulate(grads, b, g.to_vec())?;
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, a, g.to_vec())?;
                self.accumulate(grads, b, g.iter().map(|v| -v).collect())?;
            }
            Op::Mul { a, b } => {
                let (x, y) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, g.iter().zip(y).map(|(gi, yi)| gi * yi).collect())?;
                self.accumulate(grads, b, g.iter().zip(x).map(|(gi, xi)| gi * xi).collect())?;
            }
            Op::Square { input } => {
                let x = self.value(input).data();
                let d = g.iter().zip(x).map(|(gi, xi)| 2.0 * xi * gi).collect();
                self.accumulate(grads, input, d)?;
            }
            Op::Scale { input, factor } => {
                self.accumulate(grads, input, g.iter().map(|v| v * factor).collect())?;
            }
            Op::Sum { input } => {
                let n = self.value(input).numel();
                self.accumulate(grads, input, vec![g[0]; n])?;
            }
            Op::Mean { input } => {
                let n = self.value(input).numel();
                self.accumulate(grads, input, vec![g[0] / n as f64; n])?;
            }
        }
        Ok(())
    }

    fn accumulate_opt(&self, grads: &mut [Option<Tensor>], id: NodeId, d: Option<Vec<f64>>) -> Result<()> {
        match d {
            Some(d) => self.accumulate(grads, id, d),
            None => Ok(()),
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, d: Vec<f64>) -> Result<()> {
        if !self.requires_grad(id) {
            return Ok(());
        }
        let shape = self.value(id).shape().to_vec();
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, v) in existing.data_mut().iter_mut().zip(&d) {
                    *e += v;
                }
            }
            slot => *slot = Some(Tensor::new(shape, d)?),
        }
        Ok(())
    }
}

fn rank_error(op: &'static str, expected: usize, found: usize) -> Error {
    Error::Dimension { op, axis: "rank", expected, found }
}

fn dim_error(op: &'static str, axis: &'static str, expected: usize, found: usize) -> Error {
    Error::Dimension { op, axis, expected, found }
}

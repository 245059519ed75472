use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::kernels;

/// Handle to a node on a [`Graph`]. Ids are positions on the tape.
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

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Param,
    Binary(Elementwise, Var, Var),
    Relu(Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
    },
    ChannelBias {
        input: Var,
        bias: Var,
    },
    Softmax(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Option<Vec<T>>,
    },
    AdaIn {
        input: Var,
        target_std: Vec<T>,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

/// Append-only tape for reverse-mode differentiation.
///
/// A graph is built during one forward pass. After [`Graph::backward`] the
/// tape is spent and must be [`reset`](Graph::reset) before reuse.
#[derive(Clone, Debug, Default)]
pub struct Graph<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
    spent: bool,
}

/// Gradients keyed by parameter handle.
#[derive(Clone, Debug)]
pub struct Gradients<T: Scalar = f64> {
    grads: HashMap<Var, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, param: Var) -> Option<&Tensor<T>> {
        self.grads.get(&param)
    }

    /// Gradients in the order of `params`.
    pub fn collect(mut self, params: &[Var]) -> Vec<Tensor<T>> {
        params
            .iter()
            .map(|p| self.grads.remove(p).expect("not a parameter of this graph"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            spent: false,
        }
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.spent = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Constant input; never receives a gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Trainable parameter.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Param, value, true)
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = match kind {
            Elementwise::Add => va.zip_map(vb, "add", |x, y| x + y)?,
            Elementwise::Sub => va.zip_map(vb, "sub", |x, y| x - y)?,
            Elementwise::Mul => va.zip_map(vb, "mul", |x, y| x * y)?,
        };
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Binary(kind, a, b), out, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, a, b)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // NaN passes through so that a poisoned input still shows up in the loss.
        let out = self.value(a).map(|x| if x < T::zero() { T::zero() } else { x });
        let ng = self.needs(a);
        self.push(Op::Relu(a), out, ng)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        let ng = self.needs(a);
        self.push(Op::Scale(a, c), out, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(Op::Sum(a), out, ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / T::lit(v.numel() as f64));
        let ng = self.needs(a);
        self.push(Op::Mean(a), out, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), out, ng))
    }

    /// Stride-1, zero "same" padding convolution of an NCHW input with an
    /// OIKK kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let out = kernels::conv2d(self.value(input), self.value(kernel))?;
        let ng = self.needs(input) || self.needs(kernel);
        Ok(self.push(Op::Conv2d { input, kernel }, out, ng))
    }

    /// Adds `bias[c]` to every element of channel `c` (dimension 1).
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let out = kernels::channel_bias(self.value(input), self.value(bias))?;
        let ng = self.needs(input) || self.needs(bias);
        Ok(self.push(Op::ChannelBias { input, bias }, out, ng))
    }

    /// Softmax over dimension 1 of an `[N, C, ...]` tensor.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let out = kernels::softmax(self.value(logits))?;
        let ng = self.needs(logits);
        Ok(self.push(Op::Softmax(logits), out, ng))
    }

    /// Mean over weighted pixels of `-log softmax(logits)[target]`.
    ///
    /// `targets` and `weights` are laid out as `[N, ...spatial]`. Weights must
    /// be 0 or 1. With no positive weight the loss is 0 and so is its gradient.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: Option<&[T]>,
    ) -> Result<Var> {
        let loss = kernels::softmax_cross_entropy(self.value(logits), targets, weights)?;
        let ng = self.needs(logits);
        let op = Op::SoftmaxCrossEntropy {
            logits,
            targets: targets.to_vec(),
            weights: weights.map(<[T]>::to_vec),
        };
        Ok(self.push(op, Tensor::scalar(loss), ng))
    }

    /// Per-channel re-standardization of `input` to the given target mean and
    /// standard deviation. Statistics of `input` are taken over batch and
    /// spatial positions. Channels with zero variance pass through unchanged.
    pub fn adain(&mut self, input: Var, target_mean: &[T], target_std: &[T]) -> Result<Var> {
        let out = kernels::adain(self.value(input), target_mean, target_std)?;
        let ng = self.needs(input);
        let op = Op::AdaIn {
            input,
            target_std: target_std.to_vec(),
        };
        Ok(self.push(op, out, ng))
    }

    /// Reverse pass from a scalar root. Returns a gradient for every
    /// parameter on the tape, zero when the root does not depend on it.
    pub fn backward(&mut self, root: Var) -> Result<Gradients<T>> {
        if self.spent {
            return Err(Error::BackwardTwice);
        }
        let root_shape = self.value(root).shape().to_vec();
        if !self.value(root).is_scalar() {
            return Err(Error::NonScalarRoot(root_shape));
        }
        self.spent = true;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(&root_shape, T::one()));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Param) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }

        let mut out = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Param) {
                let g = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                out.insert(Var(i), g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let mut acc = |v: Var, delta: Tensor<T>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign_scaled(&delta, T::one()),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Binary(kind, a, b) => match kind {
                Elementwise::Add => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Elementwise::Sub => {
                    acc(*a, g.clone());
                    acc(*b, g.map(|x| -x));
                }
                Elementwise::Mul => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        acc(*a, g.zip_map(vb, "mul", |x, y| x * y)?);
                    }
                    if self.needs(*b) {
                        acc(*b, g.zip_map(va, "mul", |x, y| x * y)?);
                    }
                }
            },
            Op::Relu(a) => {
                let va = self.value(*a);
                acc(
                    *a,
                    g.zip_map(va, "relu", |d, x| if x > T::zero() { d } else { T::zero() })?,
                );
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * *c)),
            Op::Sum(a) => acc(*a, Tensor::full(self.value(*a).shape(), g.item())),
            Op::Mean(a) => {
                let va = self.value(*a);
                let d = g.item() / T::lit(va.numel() as f64);
                acc(*a, Tensor::full(va.shape(), d));
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    acc(*a, kernels::matmul_grad_lhs(g, vb));
                }
                if self.needs(*b) {
                    acc(*b, kernels::matmul_grad_rhs(va, g));
                }
            }
            Op::Conv2d { input, kernel } => {
                let (vx, vk) = (self.value(*input), self.value(*kernel));
                let (dx, dk) = kernels::conv2d_backward(
                    vx,
                    vk,
                    g,
                    self.needs(*input),
                    self.needs(*kernel),
                );
                if let Some(dx) = dx {
                    acc(*input, dx);
                }
                if let Some(dk) = dk {
                    acc(*kernel, dk);
                }
            }
            Op::ChannelBias { input, bias } => {
                acc(*input, g.clone());
                if self.needs(*bias) {
                    acc(*bias, kernels::channel_sum(g, self.value(*bias).numel()));
                }
            }
            Op::Softmax(a) => acc(*a, kernels::softmax_backward(&node.value, g)),
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                weights,
            } => {
                let vl = self.value(*logits);
                let mut d = kernels::softmax_cross_entropy_grad(vl, targets, weights.as_deref());
                let s = g.item();
                d.data_mut().iter_mut().for_each(|v| *v *= s);
                acc(*logits, d);
            }
            Op::AdaIn { input, target_std } => {
                acc(
                    *input,
                    kernels::adain_backward(self.value(*input), target_std, g),
                );
            }
        }
        Ok(())
    }
}

//! Reverse-mode tape over the operation set in [`super::ops`].
//!
//! Each call records one node holding its forward value and whatever the
//! adjoint rule needs. [`Graph::backward`] walks the nodes in reverse
//! recording order, which is a valid reverse topological order because a
//! node can only reference nodes recorded before it.

use super::ops::{self, PaddingSpec};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch-norm evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BnMode<'a, T> {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with the given running mean and variance.
    Inference {
        running_mean: &'a [T],
        running_var: &'a [T],
    },
}

/// Per-channel statistics of one training-mode batch-norm call.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub variance: Vec<f64>,
    /// Number of values reduced per channel.
    pub count: usize,
}

/// Deliberately wrong adjoint rules, used to prove the gradient checker
/// catches faulty derivatives.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjointFault {
    None,
    /// Leaky-ReLU adjoint uses twice the slope on the negative side.
    LeakyReluSlope,
    /// Convolution adjoint drops the bias gradient.
    ConvBias,
}

enum Op<T> {
    Leaf,
    Constant,
    Pad {
        x: Var,
        spec: PaddingSpec,
    },
    Conv {
        x: Var,
        kernel: Var,
        bias: Var,
        spec: PaddingSpec,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    LeakyRelu {
        x: Var,
        slope: T,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Upsample {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    WeightedSum {
        x: Var,
        weights: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if it influenced the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Operation tape for one forward evaluation.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    fault: AdjointFault,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            fault: AdjointFault::None,
        }
    }

    #[doc(hidden)]
    pub fn with_fault(fault: AdjointFault) -> Self {
        Graph {
            nodes: Vec::new(),
            fault,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
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

    /// Record a differentiable input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Record a value that receives no gradient (network inputs, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn pad3d(&mut self, x: Var, spec: PaddingSpec) -> Result<Var> {
        let y = ops::pad3d(self.value(x), &spec)?;
        Ok(self.push(y, Op::Pad { x, spec }))
    }

    pub fn conv3d(&mut self, x: Var, kernel: Var, bias: Var, spec: PaddingSpec) -> Result<Var> {
        let y = ops::conv3d(self.value(x), self.value(kernel), self.value(bias), &spec)?;
        Ok(self.push(
            y,
            Op::Conv {
                x,
                kernel,
                bias,
                spec,
            },
        ))
    }

    /// Batch normalization. In train mode also returns the batch statistics
    /// so the caller can update its running averages.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        match mode {
            BnMode::Train => {
                let c = *self.value(x).shape().last().expect("non-empty shape");
                let count = self.value(x).len() / c.max(1);
                let f = ops::batch_norm_train(self.value(x), self.value(gamma), self.value(beta), eps)?;
                let stats = BatchStats {
                    mean: f.mean,
                    variance: f.variance,
                    count,
                };
                let v = self.push(
                    f.output,
                    Op::BatchNorm {
                        x,
                        gamma,
                        beta,
                        normalized: f.normalized,
                        inv_std: f.inv_std,
                        train: true,
                    },
                );
                Ok((v, Some(stats)))
            }
            BnMode::Inference {
                running_mean,
                running_var,
            } => {
                let (y, normalized, inv_std) = ops::batch_norm_inference(
                    self.value(x),
                    self.value(gamma),
                    self.value(beta),
                    running_mean,
                    running_var,
                    eps,
                )?;
                let v = self.push(
                    y,
                    Op::BatchNorm {
                        x,
                        gamma,
                        beta,
                        normalized,
                        inv_std,
                        train: false,
                    },
                );
                Ok((v, None))
            }
        }
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let y = ops::leaky_relu(self.value(x), slope);
        self.push(y, Op::LeakyRelu { x, slope })
    }

    pub fn max_pool3d(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = ops::max_pool3d(self.value(x))?;
        Ok(self.push(y, Op::MaxPool { x, argmax }))
    }

    pub fn upsample3d(&mut self, x: Var) -> Result<Var> {
        let y = ops::upsample3d(self.value(x))?;
        Ok(self.push(y, Op::Upsample { x }))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Concat { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Add { a, b }))
    }

    /// Scalar mean squared error between `pred` and `target`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = ops::mse(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor::scalar(T::lit(loss)), Op::Mse { pred, target }))
    }

    /// Scalar `sum(weights * x)`, a convenient probe loss for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        if weights.shape() != self.value(x).shape() {
            return Err(Error::invalid("weighted_sum: weight shape mismatch"));
        }
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &w)| (a * w).as_f64())
            .sum();
        Ok(self.push(Tensor::scalar(T::lit(s)), Op::WeightedSum { x, weights }))
    }

    /// Propagate d(loss)/d(node) for every node. `loss` must be a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid("backward needs a scalar loss node"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![T::one()])?);

        let nodes = &self.nodes;
        let accumulate = |grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>| {
            if matches!(nodes[v.0].op, Op::Constant) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Constant => continue,
                Op::Pad { x, spec } => {
                    let dx = ops::pad3d_adjoint(&g, spec, self.value(*x).shape())?;
                    accumulate(&mut grads, *x, dx);
                }
                Op::Conv {
                    x,
                    kernel,
                    bias,
                    spec,
                } => {
                    let (dx, dk, mut db) = ops::conv3d_adjoint(
                        self.value(*x),
                        self.value(*kernel),
                        self.value(*bias),
                        spec,
                        &g,
                    )?;
                    if self.fault == AdjointFault::ConvBias {
                        db = Tensor::zeros(db.shape().to_vec());
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *kernel, dk);
                    accumulate(&mut grads, *bias, db);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                    train,
                } => {
                    let (dx, dg, db) = if *train {
                        ops::batch_norm_train_adjoint(&g, normalized, self.value(*gamma), inv_std)
                    } else {
                        ops::batch_norm_inference_adjoint(&g, normalized, self.value(*gamma), inv_std)
                    };
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dg);
                    accumulate(&mut grads, *beta, db);
                }
                Op::LeakyRelu { x, slope } => {
                    let slope = if self.fault == AdjointFault::LeakyReluSlope {
                        *slope + *slope
                    } else {
                        *slope
                    };
                    let dx = ops::leaky_relu_adjoint(self.value(*x), slope, &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::MaxPool { x, argmax } => {
                    let dx = ops::max_pool3d_adjoint(self.value(*x).shape(), argmax, &g);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Upsample { x } => {
                    let dx = ops::upsample3d_adjoint(self.value(*x).shape(), &g)?;
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat { a, b } => {
                    let (ga, gb) =
                        ops::concat_channels_adjoint(&g, self.value(*a).shape(), self.value(*b).shape());
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mse { pred, target } => {
                    let up = g.data()[0].as_f64();
                    let p = self.value(*pred);
                    let t = self.value(*target);
                    accumulate(&mut grads, *pred, ops::mse_adjoint(p, t, up));
                    accumulate(&mut grads, *target, ops::mse_adjoint(t, p, up));
                }
                Op::WeightedSum { x, weights } => {
                    let up = g.data()[0];
                    accumulate(&mut grads, *x, weights.map(|w| w * up));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

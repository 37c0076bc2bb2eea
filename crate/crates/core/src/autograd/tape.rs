//! Straight-line reverse-mode tape.
//!
//! Every op appends a node holding its output value and what its backward
//! rule needs. `backward` walks the tape once, last node first.

use crate::adaptive::apply_grouped_adaptive_backward;
use crate::conv::{conv2d_backward, conv2d_raw};
use crate::error::{arg_err, shape_err, Result};
use crate::norm::{batchnorm, batchnorm_train, batchnorm_train_backward, BatchNorm, BnSaved};
use crate::ops::{
    broadcast_spatial, global_avg_pool, max_pool2d_with_indices, softmax_backward, softmax_over_axis,
    strided_subsample, strided_subsample_backward,
};
use crate::predictor::FilterField;
use crate::scalar::Scalar;
use crate::tensor::{PadMode, Shape4, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        mode: PadMode,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        saved: BnSaved<T>,
    },
    /// Running statistics are constants; only the affine part is learnable.
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
    },
    Softmax {
        x: Var,
        m: usize,
    },
    AdaptiveBlur {
        x: Var,
        field: Var,
        groups: usize,
        k: usize,
    },
    Subsample {
        x: Var,
        stride: usize,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Relu {
        x: Var,
    },
    GlobalAvgPool {
        x: Var,
    },
    Broadcast {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: f64,
    },
    WeightedSum {
        x: Var,
        weights: Tensor<T>,
    },
    Mean {
        x: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
pub struct TapeNode<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

impl<T> TapeNode<T> {
    pub fn op_name(&self) -> &'static str {
        match self.op {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNormTrain { .. } => "batchnorm_train",
            Op::BatchNormEval { .. } => "batchnorm_eval",
            Op::Softmax { .. } => "softmax",
            Op::AdaptiveBlur { .. } => "adaptive_blur",
            Op::Subsample { .. } => "subsample",
            Op::MaxPool { .. } => "max_pool",
            Op::Relu { .. } => "relu",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::Broadcast { .. } => "broadcast",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::Mean { .. } => "mean",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    order: Vec<usize>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not reach the loss.
    pub fn get_or_zeros(&self, v: Var, like: Shape4) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like))
    }

    /// Node indices in the order their backward rules ran.
    pub fn visit_order(&self) -> &[usize] {
        &self.order
    }
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<TapeNode<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &TapeNode<T> {
        &self.nodes[v.0]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(TapeNode {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Learnable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(TapeNode {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(TapeNode {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize, mode: PadMode) -> Result<Var> {
        let y = conv2d_raw(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad, mode)?;
        let mut ins = vec![x, w];
        ins.extend(b);
        Ok(self.push(y, Op::Conv2d { x, w, b, stride, pad, mode }, &ins))
    }

    /// Training-mode batchnorm; folds batch statistics into `bn`'s running stats.
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var, bn: &mut BatchNorm<T>) -> Result<Var> {
        let (y, saved, mean, var) = batchnorm_train(self.value(x), self.value(gamma), self.value(beta), bn.eps)?;
        let s = self.value(x).shape();
        bn.update_running(&mean, &var, s.n * s.plane());
        Ok(self.push(y, Op::BatchNormTrain { x, gamma, beta, saved }, &[x, gamma, beta]))
    }

    /// Inference-mode batchnorm with fixed running statistics.
    pub fn batchnorm_eval(&mut self, x: Var, gamma: Var, beta: Var, bn: &BatchNorm<T>) -> Result<Var> {
        let y = batchnorm(
            self.value(x),
            bn.running_mean.data(),
            bn.running_var.data(),
            self.value(gamma),
            self.value(beta),
            bn.eps,
        )?;
        let inv_std = bn.running_var.data().iter().map(|v| 1.0 / (v.acc() + bn.eps).sqrt()).collect();
        let mean = bn.running_mean.data().iter().map(|v| v.acc()).collect();
        Ok(self.push(y, Op::BatchNormEval { x, gamma, beta, inv_std, mean }, &[x, gamma, beta]))
    }

    pub fn softmax(&mut self, x: Var, m: usize) -> Result<Var> {
        let y = softmax_over_axis(self.value(x), m)?;
        Ok(self.push(y, Op::Softmax { x, m }, &[x]))
    }

    /// Per-location, per-group filtering; `field` holds `(n, g k^2, h, w)` weights.
    pub fn adaptive_blur(&mut self, x: Var, field: Var, groups: usize, k: usize) -> Result<Var> {
        let f = FilterField::new(self.value(field).clone(), groups, k)?;
        let y = crate::adaptive::apply_grouped_adaptive(self.value(x), &f)?;
        Ok(self.push(y, Op::AdaptiveBlur { x, field, groups, k }, &[x, field]))
    }

    pub fn subsample(&mut self, x: Var, stride: usize) -> Result<Var> {
        let y = strided_subsample(self.value(x), stride)?;
        Ok(self.push(y, Op::Subsample { x, stride }, &[x]))
    }

    pub fn max_pool(&mut self, x: Var, kernel: (usize, usize), stride: usize) -> Result<Var> {
        let (y, argmax) = max_pool2d_with_indices(self.value(x), kernel, stride)?;
        Ok(self.push(y, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).relu();
        self.push(y, Op::Relu { x }, &[x])
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let y = global_avg_pool(self.value(x));
        self.push(y, Op::GlobalAvgPool { x }, &[x])
    }

    /// `(n, c, 1, 1) -> (n, c, h, w)`
    pub fn broadcast(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let y = broadcast_spatial(self.value(x), h, w)?;
        Ok(self.push(y, Op::Broadcast { x }, &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).add(self.value(b))?;
        Ok(self.push(y, Op::Add { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let y = self.value(x).mul_scalar(T::from_acc(s));
        self.push(y, Op::Scale { x, s }, &[x])
    }

    /// Scalar `sum(x * weights)`; with all-one weights this is `sum(x)`.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        let xs = self.value(x);
        if xs.shape() != weights.shape() {
            return shape_err("weighted_sum", format!("{} vs {}", xs.shape(), weights.shape()));
        }
        let s: f64 = xs.data().iter().zip(weights.data()).map(|(a, b)| a.acc() * b.acc()).sum();
        Ok(self.push(Tensor::full([1, 1, 1, 1], T::from_acc(s)), Op::WeightedSum { x, weights }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ones = Tensor::full(self.value(x).shape(), T::one());
        self.weighted_sum(x, ones)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let y = Tensor::full([1, 1, 1, 1], T::from_acc(self.value(x).mean()));
        self.push(y, Op::Mean { x }, &[x])
    }

    /// Mean cross-entropy of `(n, classes, 1, 1)` logits against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.value(logits).shape();
        if s.h != 1 || s.w != 1 || s.n != labels.len() {
            return shape_err(
                "softmax_cross_entropy",
                format!("logits {} for {} labels", s, labels.len()),
            );
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= s.c) {
            return arg_err("softmax_cross_entropy", format!("label {bad} out of {} classes", s.c));
        }
        let z = self.value(logits).data();
        let mut probs = Vec::with_capacity(s.n * s.c);
        let mut loss = 0.0;
        for (n, &label) in labels.iter().enumerate() {
            let row: Vec<f64> = z[n * s.c..(n + 1) * s.c].iter().map(|v| v.acc()).collect();
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let y = Tensor::full([1, 1, 1, 1], T::from_acc(loss / s.n as f64));
        Ok(self.push(
            y,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Reverse sweep from a scalar root. Nodes are visited in exact reverse
    /// recording order; nodes that do not require gradients are skipped.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let rs = self.value(root).shape();
        if rs.numel() != 1 {
            return arg_err("backward", format!("root must be a scalar, got shape {rs}"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(rs, T::one()));
        let mut order = Vec::new();
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            order.push(i);
            self.backward_node(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, order })
    }

    fn backward_node(&self, node: &TapeNode<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, d: Tensor<T>| -> Result<()> {
            match &mut grads[v.0] {
                Some(existing) => *existing = existing.add(&d)?,
                slot @ None => *slot = Some(d),
            }
            Ok(())
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride, pad, mode } => {
                let cg = conv2d_backward(self.value(*x), self.value(*w), g, *stride, *pad, *mode, rg(*x))?;
                if let Some(dx) = cg.input {
                    acc(*x, dx)?;
                }
                if rg(*w) {
                    acc(*w, cg.weight)?;
                }
                if let Some(b) = b {
                    if rg(*b) {
                        acc(*b, cg.bias)?;
                    }
                }
            }
            Op::BatchNormTrain { x, gamma, beta, saved } => {
                let (dx, dg, db) = batchnorm_train_backward(saved, self.value(*gamma), g)?;
                if rg(*x) {
                    acc(*x, dx)?;
                }
                if rg(*gamma) {
                    acc(*gamma, dg)?;
                }
                if rg(*beta) {
                    acc(*beta, db)?;
                }
            }
            Op::BatchNormEval { x, gamma, beta, inv_std, mean } => {
                let xs = self.value(*x);
                let s = xs.shape();
                let gam = self.value(*gamma);
                let mut dx = Tensor::zeros(s);
                let mut dg = Tensor::zeros([1, s.c, 1, 1]);
                let mut db = Tensor::zeros([1, s.c, 1, 1]);
                for c in 0..s.c {
                    let scale = gam.data()[c].acc() * inv_std[c];
                    let (mut sg, mut sb) = (0.0, 0.0);
                    for n in 0..s.n {
                        for ((d, gv), xv) in dx.plane_mut(n, c).iter_mut().zip(g.plane(n, c)).zip(xs.plane(n, c)) {
                            *d = T::from_acc(gv.acc() * scale);
                            sb += gv.acc();
                            sg += gv.acc() * (xv.acc() - mean[c]) * inv_std[c];
                        }
                    }
                    dg.data_mut()[c] = T::from_acc(sg);
                    db.data_mut()[c] = T::from_acc(sb);
                }
                if rg(*x) {
                    acc(*x, dx)?;
                }
                if rg(*gamma) {
                    acc(*gamma, dg)?;
                }
                if rg(*beta) {
                    acc(*beta, db)?;
                }
            }
            Op::Softmax { x, m } => {
                let d = softmax_backward(&node.value, g, *m)?;
                acc(*x, d)?;
            }
            Op::AdaptiveBlur { x, field, groups, k } => {
                let f = FilterField::new(self.value(*field).clone(), *groups, *k)?;
                let (dx, df) = apply_grouped_adaptive_backward(self.value(*x), &f, g, rg(*x), rg(*field))?;
                if let Some(dx) = dx {
                    acc(*x, dx)?;
                }
                if let Some(df) = df {
                    acc(*field, df)?;
                }
            }
            Op::Subsample { x, stride } => {
                let d = strided_subsample_backward(g, self.value(*x).shape(), *stride)?;
                acc(*x, d)?;
            }
            Op::MaxPool { x, argmax } => {
                let mut d = Tensor::zeros(self.value(*x).shape());
                for (gv, &i) in g.data().iter().zip(argmax) {
                    let slot = &mut d.data_mut()[i];
                    *slot = *slot + *gv;
                }
                acc(*x, d)?;
            }
            Op::Relu { x } => {
                let d = self
                    .value(*x)
                    .zip_map(g, "relu_backward", |xv, gv| if xv > T::zero() { gv } else { T::zero() })?;
                acc(*x, d)?;
            }
            Op::GlobalAvgPool { x } => {
                let s = self.value(*x).shape();
                let inv = 1.0 / s.plane() as f64;
                let d = Tensor::from_fn(s, |n, c, _, _| T::from_acc(g.at(n, c, 0, 0).acc() * inv));
                acc(*x, d)?;
            }
            Op::Broadcast { x } => {
                let d = global_avg_pool(g).mul_scalar(T::from_acc(g.shape().plane() as f64));
                acc(*x, d)?;
            }
            Op::Add { a, b } => {
                if rg(*a) {
                    acc(*a, g.clone())?;
                }
                if rg(*b) {
                    acc(*b, g.clone())?;
                }
            }
            Op::Scale { x, s } => acc(*x, g.mul_scalar(T::from_acc(*s)))?,
            Op::WeightedSum { x, weights } => {
                let gv = g.data()[0];
                acc(*x, weights.mul_scalar(gv))?;
            }
            Op::Mean { x } => {
                let s = self.value(*x).shape();
                acc(*x, Tensor::full(s, T::from_acc(g.data()[0].acc() / s.numel() as f64)))?;
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let s = self.value(*logits).shape();
                let scale = g.data()[0].acc() / s.n as f64;
                let mut d = probs.clone();
                for (n, &l) in labels.iter().enumerate() {
                    d[n * s.c + l] -= 1.0;
                }
                let d = d.into_iter().map(|v| T::from_acc(v * scale)).collect();
                acc(*logits, Tensor::from_vec(s, d)?)?;
            }
        }
        Ok(())
    }
}

use num_complex::Complex64;

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::spectral;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    Relu(NodeId),
    MaxPool1d {
        input: NodeId,
        argmax: Vec<u32>,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Reshape(NodeId),
    MeanBatch(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    SumSquares(NodeId),
    DftMagnitude {
        input: NodeId,
        /// Per-row spectra, kept only when a gradient is needed.
        spectra: Vec<Vec<Complex64>>,
    },
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    op: Op,
}

/// A recorded computation. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted and backward walks it in
/// reverse.
///
/// Leaves created with `requires_grad = true` accumulate gradients across
/// [`Graph::backward`] calls; all other nodes never hold a gradient.
#[derive(Debug, Default)]
pub struct Graph<F: Real = f32> {
    nodes: Vec<Node<F>>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> F {
        self.nodes[id.0].value.data()[0]
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if it has received one.
    pub fn grad(&self, id: NodeId) -> Option<&[F]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<F>, inputs: &[NodeId], op: Op) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// `input: [B, C, L]`, `kernel: [F, C, K]`, optional `bias: [F]`.
    /// Output length is `floor((L + 2·padding − K) / stride) + 1`.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(kernel).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] {
            return Err(shape_err("conv1d", &xs, &ws));
        }
        if stride == 0 || xs[2] + 2 * padding < ws[2] || ws[2] == 0 {
            return Err(Error::validation(format!(
                "conv1d: kernel {} with stride {stride} and padding {padding} does not fit length {}",
                ws[2], xs[2]
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(shape_err("conv1d bias", self.shape(b), &[ws[0]]));
            }
        }
        let geom = ConvGeom {
            batch: xs[0],
            c_in: xs[1],
            l_in: xs[2],
            c_out: ws[0],
            kernel: ws[2],
            stride,
            padding,
            l_out: (xs[2] + 2 * padding - ws[2]) / stride + 1,
        };
        let out = kernels::conv1d_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(vec![geom.batch, geom.c_out, geom.l_out], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push(
            "conv1d",
            value,
            &inputs,
            Op::Conv1d {
                input,
                kernel,
                bias,
                geom,
            },
        )
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| if a > F::zero() { a } else { F::zero() }).collect();
        let value = Tensor::new(v.shape().to_vec(), data)?;
        self.push("relu", value, &[x], Op::Relu(x))
    }

    /// Max pooling over the last axis of `[B, C, L]`.
    pub fn max_pool1d(&mut self, x: NodeId, width: usize, stride: usize) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(shape_err("max_pool1d", &shape, &[width]));
        }
        if width == 0 || stride == 0 || shape[2] < width {
            return Err(Error::validation(format!(
                "max_pool1d: width {width} stride {stride} does not fit length {}",
                shape[2]
            )));
        }
        let l_out = (shape[2] - width) / stride + 1;
        let (out, argmax) = kernels::max_pool1d_forward(self.value(x).data(), shape[2], width, stride, l_out);
        let value = Tensor::new(vec![shape[0], shape[1], l_out], out)?;
        self.push("max_pool1d", value, &[x], Op::MaxPool1d { input: x, argmax })
    }

    /// `input: [B, D] · weight: [D, E] + bias: [E]`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err("linear", &xs, &ws));
        }
        if self.shape(bias) != [ws[1]] {
            return Err(shape_err("linear bias", self.shape(bias), &[ws[1]]));
        }
        let out = kernels::linear_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            ws[0],
            ws[1],
        );
        let value = Tensor::new(vec![xs[0], ws[1]], out)?;
        self.push("linear", value, &[input, weight, bias], Op::Linear { input, weight, bias })
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push("reshape", value, &[x], Op::Reshape(x))
    }

    /// `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x);
        if shape.is_empty() {
            return Err(shape_err("flatten", shape, &[]));
        }
        let rest = shape[1..].iter().product();
        let batch = shape[0];
        self.reshape(x, vec![batch, rest])
    }

    /// Mean over the leading (batch) axis, accumulated in `f64`.
    pub fn mean_over_batch(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let shape = v.shape();
        if shape.is_empty() || shape[0] == 0 {
            return Err(Error::validation(format!("mean_over_batch of an empty batch {shape:?}")));
        }
        let batch = shape[0];
        let row = v.numel() / batch;
        let mut acc = vec![0.0f64; row];
        for chunk in v.data().chunks(row) {
            acc.iter_mut().zip(chunk).for_each(|(a, b)| *a += b.as_f64());
        }
        let data = acc.iter().map(|&s| F::from_f64(s / batch as f64)).collect();
        let value = Tensor::new(shape[1..].to_vec(), data)?;
        self.push("mean_over_batch", value, &[x], Op::MeanBatch(x))
    }

    fn zip_with(&mut self, a: NodeId, b: NodeId, name: &'static str, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip_with(a, b, "add", |x, y| x + y)?;
        self.push("add", value, &[a, b], Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip_with(a, b, "sub", |x, y| x - y)?;
        self.push("sub", value, &[a, b], Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.zip_with(a, b, "mul", |x, y| x * y)?;
        self.push("mul", value, &[a, b], Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        let v = self.value(x);
        let s = F::from_f64(factor);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| a * s).collect())?;
        self.push("scale", value, &[x], Op::Scale(x, factor))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let total: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        self.push("sum", Tensor::scalar(F::from_f64(total)), &[x], Op::Sum(x))
    }

    pub fn sum_of_squares(&mut self, x: NodeId) -> Result<NodeId> {
        let total: f64 = self.value(x).data().iter().map(|v| v.as_f64().powi(2)).sum();
        self.push("sum_of_squares", Tensor::scalar(F::from_f64(total)), &[x], Op::SumSquares(x))
    }

    /// DFT magnitude along the last axis (each row transformed independently).
    pub fn dft_magnitude(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let n = *v.shape().last().ok_or_else(|| shape_err("dft_magnitude", &[], &[]))?;
        if n == 0 {
            return Err(shape_err("dft_magnitude", v.shape(), &[]));
        }
        let keep = self.nodes[x.0].requires_grad;
        let mut out = Vec::with_capacity(v.numel());
        let mut spectra = Vec::new();
        for row in v.data().chunks(n) {
            let spec = spectral::dft(row);
            out.extend(spec.iter().map(|z| F::from_f64(z.norm())));
            if keep {
                spectra.push(spec);
            }
        }
        let value = Tensor::new(v.shape().to_vec(), out)?;
        self.push("dft_magnitude", value, &[x], Op::DftMagnitude { input: x, spectra })
    }

    /// Mean cross-entropy of `logits: [B, E]` against integer labels.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let v = self.value(logits);
        let shape = v.shape();
        if shape.len() != 2 || shape[0] != labels.len() || shape[0] == 0 {
            return Err(shape_err("cross_entropy", shape, &[labels.len()]));
        }
        let e = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= e) {
            return Err(Error::validation(format!("cross_entropy: label {bad} with {e} logits")));
        }
        let mut probs = Vec::with_capacity(v.numel());
        let mut loss = 0.0;
        for (row, &label) in v.data().chunks(e).zip(labels) {
            let max = row.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|x| (x.as_f64() - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            loss += z.ln() + max - row[label].as_f64();
            probs.extend(exps.iter().map(|p| p / z));
        }
        let value = Tensor::scalar(F::from_f64(loss / labels.len() as f64));
        self.push(
            "cross_entropy",
            value,
            &[logits],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Reverse-mode sweep from a single-element root. Gradients are added to
    /// whatever the `requires_grad` leaves already hold.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.value(root).numel() != 1 {
            return Err(Error::validation(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(vec![F::one()]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                let node = &mut self.nodes[idx];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }
        Ok(())
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[idx];
        let mut acc = |id: NodeId, contrib: Vec<F>| {
            if !self.needs(id) {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(a, &b)| *a += b),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                input,
                kernel,
                bias,
                geom,
            } => {
                if self.needs(*input) {
                    acc(*input, kernels::conv1d_backward_input(geom, g, self.value(*kernel).data()));
                }
                if self.needs(*kernel) || bias.is_some_and(|b| self.needs(b)) {
                    let (gw, gb) = kernels::conv1d_backward_params(geom, g, self.value(*input).data());
                    acc(*kernel, gw);
                    if let Some(b) = bias {
                        acc(*b, gb);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let contrib = xv
                    .iter()
                    .zip(g)
                    .map(|(&a, &gv)| if a > F::zero() { gv } else { F::zero() })
                    .collect();
                acc(*x, contrib);
            }
            Op::MaxPool1d { input, argmax } => {
                let mut contrib = vec![F::zero(); self.value(*input).numel()];
                for (&pos, &gv) in argmax.iter().zip(g) {
                    contrib[pos as usize] += gv;
                }
                acc(*input, contrib);
            }
            Op::Linear { input, weight, bias } => {
                let ws = self.shape(*weight);
                let (d_in, d_out) = (ws[0], ws[1]);
                if self.needs(*input) {
                    acc(*input, kernels::linear_backward_input(g, self.value(*weight).data(), d_in, d_out));
                }
                if self.needs(*weight) || self.needs(*bias) {
                    let (gw, gb) = kernels::linear_backward_params(g, self.value(*input).data(), d_in, d_out);
                    acc(*weight, gw);
                    acc(*bias, gb);
                }
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::MeanBatch(x) => {
                let batch = self.shape(*x)[0];
                let inv = F::from_f64(1.0 / batch as f64);
                let row: Vec<F> = g.iter().map(|&v| v * inv).collect();
                let mut contrib = Vec::with_capacity(row.len() * batch);
                for _ in 0..batch {
                    contrib.extend_from_slice(&row);
                }
                acc(*x, contrib);
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, g.iter().zip(vb).map(|(&gv, &y)| gv * y).collect());
                acc(*b, g.iter().zip(va).map(|(&gv, &x)| gv * x).collect());
            }
            Op::Scale(x, factor) => {
                let s = F::from_f64(*factor);
                acc(*x, g.iter().map(|&v| v * s).collect());
            }
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).numel()]),
            Op::SumSquares(x) => {
                let two_g = g[0] + g[0];
                acc(*x, self.value(*x).data().iter().map(|&v| two_g * v).collect());
            }
            Op::DftMagnitude { input, spectra } => {
                let n = spectra.first().map_or(1, Vec::len);
                let mut contrib = Vec::with_capacity(self.value(*input).numel());
                for (spec, up) in spectra.iter().zip(g.chunks(n)) {
                    contrib.extend(spectral::magnitude_vjp(spec, up));
                }
                acc(*input, contrib);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let e = self.shape(*logits)[1];
                let scale = g[0].as_f64() / labels.len() as f64;
                let mut contrib: Vec<F> = probs.iter().map(|&p| F::from_f64(p * scale)).collect();
                for (row, &label) in contrib.chunks_mut(e).zip(labels) {
                    row[label] -= F::from_f64(scale);
                }
                acc(*logits, contrib);
            }
        }
    }
}

//! Embedding network presets and the classifiers built on them.
//!
//! Every network takes `[B, 2, N]` input (I and Q as two channels) and
//! returns the flattened final feature map. Classifiers add a linear head.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

pub const IN_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        width: usize,
        stride: usize,
    },
    /// `relu(conv(relu(conv(x))) + x)` with channel count and length preserved.
    Residual {
        kernel: usize,
    },
}

fn conv(out_channels: usize, kernel: usize) -> Layer {
    Layer::Conv {
        out_channels,
        kernel,
        stride: 1,
        padding: kernel / 2,
    }
}

const POOL2: Layer = Layer::MaxPool { width: 2, stride: 2 };

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    name: String,
    layers: Vec<Layer>,
}

impl ArchSpec {
    pub const PRESETS: [&'static str; 4] = ["alexnet1d", "cnn2", "vgg-lite", "resnet1d-lite"];

    pub fn new(name: impl Into<String>, layers: Vec<Layer>) -> Result<Self> {
        let spec = ArchSpec {
            name: name.into(),
            layers,
        };
        for layer in &spec.layers {
            match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    stride,
                    ..
                } if out_channels == 0 || kernel == 0 || stride == 0 => {
                    return Err(Error::validation(format!("{}: degenerate conv layer", spec.name)))
                }
                Layer::MaxPool { width, stride } if width == 0 || stride == 0 => {
                    return Err(Error::validation(format!("{}: degenerate pooling layer", spec.name)))
                }
                Layer::Residual { kernel } if kernel % 2 == 0 => {
                    return Err(Error::validation(format!("{}: residual kernels must be odd", spec.name)))
                }
                _ => {}
            }
        }
        Ok(spec)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let layers = match name {
            "cnn2" => vec![conv(8, 5), Layer::Relu, POOL2, conv(16, 5), Layer::Relu, POOL2],
            "alexnet1d" => vec![
                conv(16, 7),
                Layer::Relu,
                POOL2,
                conv(32, 5),
                Layer::Relu,
                POOL2,
                conv(48, 3),
                Layer::Relu,
                conv(48, 3),
                Layer::Relu,
                conv(32, 3),
                Layer::Relu,
                POOL2,
            ],
            "vgg-lite" => {
                let mut layers = Vec::new();
                for width in [8, 16, 32, 32] {
                    layers.extend([conv(width, 3), Layer::Relu, conv(width, 3), Layer::Relu, POOL2]);
                }
                layers
            }
            "resnet1d-lite" => {
                let mut layers = vec![conv(16, 3), Layer::Relu];
                for _ in 0..4 {
                    layers.extend([Layer::Residual { kernel: 3 }, POOL2]);
                }
                layers
            }
            other => {
                return Err(Error::validation(format!(
                    "unknown architecture {other:?}; available: {}",
                    Self::PRESETS.join(", ")
                )))
            }
        };
        ArchSpec::new(name, layers)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Feature-map `(channels, length)` produced for an input of length `len`.
    pub fn output_shape(&self, len: usize) -> Result<(usize, usize)> {
        let (mut c, mut l) = (IN_CHANNELS, len);
        for layer in &self.layers {
            match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if l + 2 * padding < kernel {
                        return Err(self.too_short(len));
                    }
                    l = (l + 2 * padding - kernel) / stride + 1;
                    c = out_channels;
                }
                Layer::MaxPool { width, stride } => {
                    if l < width {
                        return Err(self.too_short(len));
                    }
                    l = (l - width) / stride + 1;
                }
                Layer::Relu | Layer::Residual { .. } => {}
            }
        }
        Ok((c, l))
    }

    pub fn embed_dim(&self, len: usize) -> Result<usize> {
        self.output_shape(len).map(|(c, l)| c * l)
    }

    fn too_short(&self, len: usize) -> Error {
        Error::validation(format!("architecture {} cannot process records of length {len}", self.name))
    }

    /// Shape of every weight tensor, in parameter order. Each weight is
    /// followed by a bias of its output width.
    fn weight_shapes(&self) -> Vec<Vec<usize>> {
        let mut c = IN_CHANNELS;
        let mut shapes = Vec::new();
        for layer in &self.layers {
            match *layer {
                Layer::Conv {
                    out_channels, kernel, ..
                } => {
                    shapes.push(vec![out_channels, c, kernel]);
                    c = out_channels;
                }
                Layer::Residual { kernel } => {
                    shapes.push(vec![c, c, kernel]);
                    shapes.push(vec![c, c, kernel]);
                }
                Layer::Relu | Layer::MaxPool { .. } => {}
            }
        }
        shapes
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Kaiming-uniform weights in `±sqrt(6 / fan_in)`, drawn in `f64`.
fn kaiming_uniform<F: Real>(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<F> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| F::from_f64(rng.random_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// A feature extractor `ψ_θ`: conv stack followed by a flatten.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet<F: Real = f32> {
    arch: ArchSpec,
    /// Alternating weight and bias tensors.
    params: Vec<Tensor<F>>,
}

/// Draw fresh parameters for `arch`: Kaiming-uniform (fan-in) weights and
/// zero biases. Deterministic per seed.
pub fn sample_network<F: Real>(arch: &ArchSpec, seed: u64) -> EmbeddingNet<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for shape in arch.weight_shapes() {
        let fan_in = shape[1] * shape[2];
        let out = shape[0];
        params.push(kaiming_uniform(shape, fan_in, &mut rng));
        params.push(Tensor::zeros(vec![out]));
    }
    EmbeddingNet {
        arch: arch.clone(),
        params,
    }
}

impl<F: Real> EmbeddingNet<F> {
    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.params
    }

    /// Register the parameters as graph leaves.
    pub fn bind(&self, g: &mut Graph<F>, requires_grad: bool) -> Vec<NodeId> {
        self.params.iter().map(|p| g.leaf(p.clone(), requires_grad)).collect()
    }

    /// Embed `x: [B, 2, N]` into `[B, embed_dim]` using parameters returned by
    /// [`EmbeddingNet::bind`] on the same graph.
    pub fn forward(&self, g: &mut Graph<F>, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        if params.len() != self.params.len() {
            return Err(Error::validation(format!(
                "{}: expected {} bound parameters, got {}",
                self.arch.name,
                self.params.len(),
                params.len()
            )));
        }
        let shape = g.shape(x);
        if shape.len() != 3 || shape[1] != IN_CHANNELS {
            return Err(Error::Shape {
                op: "embedding input",
                lhs: shape.to_vec(),
                rhs: vec![0, IN_CHANNELS, 0],
            });
        }
        let mut p = params.chunks_exact(2);
        let mut h = x;
        for layer in &self.arch.layers {
            h = match *layer {
                Layer::Conv { stride, padding, .. } => {
                    let wb = p.next().expect("parameter count checked");
                    g.conv1d(h, wb[0], Some(wb[1]), stride, padding)?
                }
                Layer::Relu => g.relu(h)?,
                Layer::MaxPool { width, stride } => g.max_pool1d(h, width, stride)?,
                Layer::Residual { kernel } => {
                    let a = p.next().expect("parameter count checked");
                    let b = p.next().expect("parameter count checked");
                    let t = g.conv1d(h, a[0], Some(a[1]), 1, kernel / 2)?;
                    let t = g.relu(t)?;
                    let t = g.conv1d(t, b[0], Some(b[1]), 1, kernel / 2)?;
                    let t = g.add(t, h)?;
                    g.relu(t)?
                }
            };
        }
        g.flatten(h)
    }

    /// Forward pass on a fresh graph, no gradients.
    pub fn embed(&self, x: Tensor<F>) -> Result<Tensor<F>> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let xid = g.constant(x);
        let out = self.forward(&mut g, &params, xid)?;
        Ok(g.value(out).clone())
    }
}

/// Embedding preset plus a linear classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<F: Real = f32> {
    body: EmbeddingNet<F>,
    head_weight: Tensor<F>,
    head_bias: Tensor<F>,
    n_samples: usize,
}

impl<F: Real> Classifier<F> {
    pub fn sample(arch: &ArchSpec, n_samples: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::validation("a classifier needs at least one class"));
        }
        let dim = arch.embed_dim(n_samples)?;
        let body = sample_network(arch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4845_4144);
        Ok(Classifier {
            body,
            head_weight: kaiming_uniform(vec![dim, num_classes], dim, &mut rng),
            head_bias: Tensor::zeros(vec![num_classes]),
            n_samples,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.head_bias.numel()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn arch(&self) -> &ArchSpec {
        self.body.arch()
    }

    /// All trainable tensors: body parameters then head weight and bias.
    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out: Vec<&Tensor<F>> = self.body.params().iter().collect();
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = self.body.params_mut().iter_mut().collect();
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn bind(&self, g: &mut Graph<F>, requires_grad: bool) -> Vec<NodeId> {
        self.params().into_iter().map(|p| g.leaf(p.clone(), requires_grad)).collect()
    }

    /// Logits `[B, num_classes]` for `x: [B, 2, N]`.
    pub fn forward(&self, g: &mut Graph<F>, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let n_body = self.body.params().len();
        if params.len() != n_body + 2 {
            return Err(Error::validation("classifier parameter count mismatch"));
        }
        let features = self.body.forward(g, &params[..n_body], x)?;
        g.linear(features, params[n_body], params[n_body + 1])
    }

    pub fn logits(&self, x: Tensor<F>) -> Result<Tensor<F>> {
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let xid = g.constant(x);
        let out = self.forward(&mut g, &params, xid)?;
        Ok(g.value(out).clone())
    }
}

//! Feed-forward networks: dense, convolutional and max-pool layers with
//! ReLU/tanh/softmax activations, forward passes that keep every layer's
//! activations, and exact backpropagation of the mean cross-entropy loss.

pub mod conv;
mod io;

use serde::{Deserialize, Serialize};

pub use conv::ConvGeometry;
pub use io::{load_network, read_network, save_network, write_network, NETWORK_MAGIC};

use crate::datasets::ImageShape;
use crate::error::{Result, SnrError};
use crate::rng::SeededRng;
use crate::tensor::{gemm, matmul, matmul_nt, matmul_tn, Matrix, Op};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Softmax,
    #[serde(rename = "none")]
    Identity,
}

impl Activation {
    /// Elementwise value; softmax is handled row-wise by [`softmax_rows`].
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity | Activation::Softmax => x,
        }
    }

    /// Elementwise derivative (ReLU uses 0 at the kink).
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity | Activation::Softmax => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        channels: usize,
        height: usize,
        width: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    Maxpool {
        channels: usize,
        height: usize,
        width: usize,
        size: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense { inputs, outputs },
            activation,
        }
    }

    pub fn conv(input: ImageShape, filters: usize, kernel: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Conv {
                channels: input.channels,
                height: input.height,
                width: input.width,
                filters,
                kernel,
                stride: 1,
            },
            activation,
        }
    }

    pub fn maxpool(input: ImageShape, size: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Maxpool {
                channels: input.channels,
                height: input.height,
                width: input.width,
                size,
            },
            activation: Activation::Identity,
        }
    }

    pub fn conv_geometry(&self) -> Option<ConvGeometry> {
        match self.kind {
            LayerKind::Conv {
                channels,
                height,
                width,
                kernel,
                stride,
                ..
            } => Some(ConvGeometry {
                channels,
                height,
                width,
                kernel,
                stride,
            }),
            _ => None,
        }
    }

    pub fn input_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv {
                channels,
                height,
                width,
                ..
            }
            | LayerKind::Maxpool {
                channels,
                height,
                width,
                ..
            } => channels * height * width,
        }
    }

    pub fn output_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv { filters, .. } => filters * self.conv_geometry().unwrap().positions(),
            LayerKind::Maxpool {
                channels,
                height,
                width,
                size,
            } => channels * (height / size) * (width / size),
        }
    }

    /// Spatial shape of the output, for conv and pool layers.
    pub fn output_image(&self) -> Option<ImageShape> {
        match self.kind {
            LayerKind::Dense { .. } => None,
            LayerKind::Conv { filters, .. } => {
                let g = self.conv_geometry().unwrap();
                Some(ImageShape {
                    channels: filters,
                    height: g.out_height(),
                    width: g.out_width(),
                })
            }
            LayerKind::Maxpool {
                channels,
                height,
                width,
                size,
            } => Some(ImageShape {
                channels,
                height: height / size,
                width: width / size,
            }),
        }
    }

    pub fn is_weighted(&self) -> bool {
        !matches!(self.kind, LayerKind::Maxpool { .. })
    }

    /// `(fan_in, fan_out)` of the weight matrix; `None` for pooling.
    pub fn weight_shape(&self) -> Option<(usize, usize)> {
        match self.kind {
            LayerKind::Dense { inputs, outputs } => Some((inputs, outputs)),
            LayerKind::Conv { filters, .. } => Some((self.conv_geometry().unwrap().patch_len(), filters)),
            LayerKind::Maxpool { .. } => None,
        }
    }

    /// Number of output positions each weight column is applied at.
    pub fn positions(&self) -> usize {
        self.conv_geometry().map_or(1, |g| g.positions())
    }
}

/// Weights (fan-in × fan-out; conv kernels flattened per filter as
/// channel, kernel-row, kernel-column) and bias (fan-out).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        LayerWeights {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    /// Incoming weights of output node `node`.
    pub fn node_weights(&self, node: usize) -> Vec<f64> {
        self.weights.column(node)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    pub fn squared_norm(&self) -> f64 {
        let w = self.weights.norm();
        w * w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `None` exactly for pooling layers.
    pub params: Option<LayerWeights>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Architectures used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Dense 784→1024→1000→10.
    MnistFull,
    /// Dense 784→256→128→10.
    MnistSmall,
    /// conv64 5×5 → pool → conv64 5×5 → pool → 1000 → 500 → 10.
    CifarFull,
    /// conv16 5×5 → pool → conv32 5×5 → pool → 256 → 128 → 10.
    CifarSmall,
    /// Dense 16→32→16→4, sized for the generated correlated-group data.
    Toy,
}

impl Architecture {
    pub fn specs(self) -> Vec<LayerSpec> {
        use Activation::*;
        match self {
            Architecture::MnistFull => vec![
                LayerSpec::dense(784, 1024, Relu),
                LayerSpec::dense(1024, 1000, Relu),
                LayerSpec::dense(1000, 10, Softmax),
            ],
            Architecture::MnistSmall => vec![
                LayerSpec::dense(784, 256, Relu),
                LayerSpec::dense(256, 128, Relu),
                LayerSpec::dense(128, 10, Softmax),
            ],
            Architecture::CifarFull => cifar_specs(64, 64, 1000, 500),
            Architecture::CifarSmall => cifar_specs(16, 32, 256, 128),
            Architecture::Toy => vec![
                LayerSpec::dense(16, 32, Relu),
                LayerSpec::dense(32, 16, Relu),
                LayerSpec::dense(16, 4, Softmax),
            ],
        }
    }

    pub fn build(self, seed: u64) -> Network {
        Network::initialized(&self.specs(), &mut SeededRng::new(seed)).expect("architecture specs chain")
    }

    pub fn input_len(self) -> usize {
        self.specs()[0].input_len()
    }
}

fn cifar_specs(f1: usize, f2: usize, d1: usize, d2: usize) -> Vec<LayerSpec> {
    use Activation::*;
    let input = ImageShape {
        channels: 3,
        height: 32,
        width: 32,
    };
    let c1 = LayerSpec::conv(input, f1, 5, Relu);
    let p1 = LayerSpec::maxpool(c1.output_image().unwrap(), 2);
    let c2 = LayerSpec::conv(p1.output_image().unwrap(), f2, 5, Relu);
    let p2 = LayerSpec::maxpool(c2.output_image().unwrap(), 2);
    let flat = p2.output_len();
    vec![
        c1,
        p1,
        c2,
        p2,
        LayerSpec::dense(flat, d1, Relu),
        LayerSpec::dense(d1, d2, Relu),
        LayerSpec::dense(d2, 10, Softmax),
    ]
}

/// Dense 784→1024→1000→10 with Glorot-uniform weights.
pub fn build_mnist_net(seed: u64) -> Network {
    Architecture::MnistFull.build(seed)
}

/// Two conv/pool stages then dense 1000→500→10.
pub fn build_cifar_net(seed: u64) -> Network {
    Architecture::CifarFull.build(seed)
}

impl Network {
    /// Validate and assemble a network.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(SnrError::InvalidArgument("a network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            let spec = &layer.spec;
            if spec.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(SnrError::InvalidArgument(format!(
                    "softmax on layer {i}; only the final layer may use it"
                )));
            }
            if let Some(g) = spec.conv_geometry() {
                if g.kernel == 0 || g.stride == 0 || g.kernel > g.height || g.kernel > g.width {
                    return Err(SnrError::InvalidArgument(format!("layer {i}: bad conv geometry {g:?}")));
                }
            }
            if let LayerKind::Maxpool { size, height, width, .. } = spec.kind {
                if size == 0 || size > height || size > width {
                    return Err(SnrError::InvalidArgument(format!("layer {i}: bad pool size {size}")));
                }
            }
            if i > 0 {
                let prev = &layers[i - 1].spec;
                if prev.output_len() != spec.input_len() {
                    return Err(SnrError::shape(
                        "Network::new",
                        format!(
                            "layer {} emits {} values but layer {i} expects {}",
                            i - 1,
                            prev.output_len(),
                            spec.input_len()
                        ),
                    ));
                }
            }
            match (spec.weight_shape(), &layer.params) {
                (None, None) => {}
                (Some((fi, fo)), Some(p)) => {
                    if p.weights.shape() != (fi, fo) || p.bias.len() != fo {
                        return Err(SnrError::shape(
                            "Network::new",
                            format!(
                                "layer {i}: weights {:?}/bias {} vs expected {fi}x{fo}",
                                p.weights.shape(),
                                p.bias.len()
                            ),
                        ));
                    }
                    if !p.weights.all_finite() || p.bias.iter().any(|b| !b.is_finite()) {
                        return Err(SnrError::InvalidArgument(format!("layer {i}: non-finite weights")));
                    }
                }
                _ => {
                    return Err(SnrError::InvalidArgument(format!(
                        "layer {i}: parameters present iff the layer is weighted"
                    )))
                }
            }
        }
        Ok(Network { layers })
    }

    /// All weights and biases zero.
    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        Network::new(
            specs
                .iter()
                .map(|&spec| Layer {
                    spec,
                    params: spec.weight_shape().map(|(fi, fo)| LayerWeights::zeros(fi, fo)),
                })
                .collect(),
        )
    }

    /// Weights uniform in ±√(6/(fan_in + fan_out)) of the stored matrix,
    /// biases zero.
    pub fn initialized(specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self> {
        let mut net = Network::zeros(specs)?;
        for layer in &mut net.layers {
            if let Some(p) = &mut layer.params {
                let limit = (6.0 / (p.fan_in() + p.fan_out()) as f64).sqrt();
                for w in p.weights.data_mut() {
                    *w = rng.uniform_range(-limit, limit);
                }
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].spec.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().spec.output_len()
    }

    /// Positions (into `layers()`) of the weighted layers; metric layer
    /// numbers 1..=L index this list.
    pub fn weighted_layer_indices(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].spec.is_weighted()).collect()
    }

    pub fn weighted_layer_count(&self) -> usize {
        self.weighted_layer_indices().len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .map(LayerWeights::parameter_count)
            .sum()
    }

    pub fn params(&self, layer: usize) -> Option<&LayerWeights> {
        self.layers[layer].params.as_ref()
    }

    pub fn params_mut(&mut self, layer: usize) -> Option<&mut LayerWeights> {
        self.layers[layer].params.as_mut()
    }
}

/// Activations captured by a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    /// Before the activation function (pooled values for pool layers).
    pub pre: Matrix,
    /// After the activation function and any dropout mask.
    pub post: Matrix,
    pub pool_argmax: Option<Vec<usize>>,
    /// Inverted-dropout multipliers applied to `post`.
    pub dropout_mask: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.layers.last().unwrap().post
    }

    /// Values feeding layer `layer`.
    pub fn layer_input(&self, layer: usize) -> &Matrix {
        if layer == 0 {
            &self.input
        } else {
            &self.layers[layer - 1].post
        }
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

fn layer_pre(spec: &LayerSpec, params: Option<&LayerWeights>, x: &Matrix) -> Result<(Matrix, Option<Vec<usize>>)> {
    match spec.kind {
        LayerKind::Dense { .. } => {
            let p = params.unwrap();
            let mut z = matmul(x, &p.weights)?;
            z.add_row_vector(&p.bias)?;
            Ok((z, None))
        }
        LayerKind::Conv { .. } => {
            let p = params.unwrap();
            let g = spec.conv_geometry().unwrap();
            let cols = conv::im2col(&g, x)?;
            let mut z = matmul(&cols, &p.weights)?;
            z.add_row_vector(&p.bias)?;
            Ok((conv::positions_to_planar(&z, x.rows(), g.positions()), None))
        }
        LayerKind::Maxpool {
            channels,
            height,
            width,
            size,
        } => {
            let (pooled, arg) = conv::maxpool(x, channels, height, width, size);
            Ok((pooled, Some(arg)))
        }
    }
}

fn activate(act: Activation, pre: &Matrix) -> Matrix {
    match act {
        Activation::Softmax => softmax_rows(pre),
        Activation::Identity => pre.clone(),
        other => pre.map(|v| other.apply(v)),
    }
}

/// Dropout rates for the weighted hidden layers, in order; a single rate
/// applies to all of them.
pub struct DropoutPlan<'a> {
    pub rates: &'a [f64],
    pub rng: &'a mut SeededRng,
}

impl DropoutPlan<'_> {
    fn rate_for(&self, layer: usize) -> f64 {
        match self.rates.len() {
            0 => 0.0,
            1 => self.rates[0],
            _ => self.rates.get(layer).copied().unwrap_or(0.0),
        }
    }
}

/// Forward pass keeping every layer's activations.
pub fn forward(net: &Network, batch: &Matrix) -> Result<ForwardTrace> {
    forward_with_dropout(net, batch, None)
}

/// Forward pass with optional inverted dropout on the outputs of weighted
/// hidden layers.
pub fn forward_with_dropout(net: &Network, batch: &Matrix, mut dropout: Option<DropoutPlan<'_>>) -> Result<ForwardTrace> {
    if batch.cols() != net.input_len() {
        return Err(SnrError::shape(
            "forward",
            format!("batch has {} features, network expects {}", batch.cols(), net.input_len()),
        ));
    }
    let last = net.layers.len() - 1;
    let mut traces: Vec<LayerTrace> = Vec::with_capacity(net.layers.len());
    let mut weighted = 0;
    for (i, layer) in net.layers.iter().enumerate() {
        let x = if i == 0 { batch } else { &traces[i - 1].post };
        let (pre, pool_argmax) = layer_pre(&layer.spec, layer.params.as_ref(), x)?;
        let mut post = activate(layer.spec.activation, &pre);
        let mut dropout_mask = None;
        if let Some(plan) = dropout.as_mut() {
            let rate = plan.rate_for(weighted);
            if i != last && layer.spec.is_weighted() && rate > 0.0 {
                let mask = crate::training::dropout_mask(post.rows(), post.cols(), rate, plan.rng);
                post = post.zip_map(&mask, |a, m| a * m)?;
                dropout_mask = Some(mask);
            }
        }
        if layer.spec.is_weighted() {
            weighted += 1;
        }
        traces.push(LayerTrace {
            pre,
            post,
            pool_argmax,
            dropout_mask,
        });
    }
    Ok(ForwardTrace {
        input: batch.clone(),
        layers: traces,
    })
}

/// Network outputs only.
pub fn predict(net: &Network, batch: &Matrix) -> Result<Matrix> {
    let mut x = batch.clone();
    if x.cols() != net.input_len() {
        return Err(SnrError::shape(
            "predict",
            format!("batch has {} features, network expects {}", x.cols(), net.input_len()),
        ));
    }
    for layer in &net.layers {
        let (pre, _) = layer_pre(&layer.spec, layer.params.as_ref(), &x)?;
        x = activate(layer.spec.activation, &pre);
    }
    Ok(x)
}

/// Mean cross-entropy of softmax outputs against class labels.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -probs.get(r, l).max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

fn check_labels(out: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != out.rows() {
        return Err(SnrError::shape(
            "labels",
            format!("{} labels for {} samples", labels.len(), out.rows()),
        ));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= out.cols()) {
        return Err(SnrError::InvalidArgument(format!(
            "label {bad} out of range for {} outputs",
            out.cols()
        )));
    }
    Ok(())
}

/// Gradients, laid out like the network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<LayerWeights>>,
}

impl Gradients {
    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|g| g.squared_norm() + g.bias.iter().map(|b| b * b).sum::<f64>())
            .sum()
    }
}

/// Exact gradients of the mean cross-entropy loss; the final layer must
/// be softmax.
pub fn backward(net: &Network, trace: &ForwardTrace, labels: &[usize]) -> Result<Gradients> {
    let out = trace.output();
    check_labels(out, labels)?;
    let last = net.layers.len() - 1;
    if net.layers[last].spec.activation != Activation::Softmax {
        return Err(SnrError::InvalidArgument(
            "cross-entropy backward needs a softmax output layer".into(),
        ));
    }
    let n = labels.len() as f64;
    let mut d_pre = out.clone();
    for (r, &l) in labels.iter().enumerate() {
        let v = d_pre.get(r, l);
        d_pre.set(r, l, v - 1.0);
    }
    let d_pre = d_pre.scale(1.0 / n);
    backward_layers(net, trace, d_pre)
}

/// Gradients given `d_output`, the loss gradient with respect to the final
/// layer's post-activation values (softmax Jacobian included).
pub fn backward_from_output(net: &Network, trace: &ForwardTrace, d_output: &Matrix) -> Result<Gradients> {
    let last = net.layers.len() - 1;
    let lt = &trace.layers[last];
    if d_output.shape() != lt.post.shape() {
        return Err(SnrError::shape(
            "backward_from_output",
            format!("{:?} vs output {:?}", d_output.shape(), lt.post.shape()),
        ));
    }
    let d_pre = pre_gradient(net.layers[last].spec.activation, lt, d_output.clone())?;
    backward_layers(net, trace, d_pre)
}

fn pre_gradient(act: Activation, lt: &LayerTrace, mut d_post: Matrix) -> Result<Matrix> {
    if let Some(mask) = &lt.dropout_mask {
        d_post = d_post.zip_map(mask, |g, m| g * m)?;
    }
    Ok(match act {
        Activation::Identity => d_post,
        Activation::Softmax => {
            let p = &lt.post;
            let mut out = d_post;
            for r in 0..out.rows() {
                let pr = p.row(r);
                let inner: f64 = out.row(r).iter().zip(pr).map(|(g, q)| g * q).sum();
                for (g, &q) in out.row_mut(r).iter_mut().zip(pr) {
                    *g = q * (*g - inner);
                }
            }
            out
        }
        other => d_post.zip_map(&lt.pre, |g, z| g * other.derivative(z))?,
    })
}

fn backward_layers(net: &Network, trace: &ForwardTrace, mut d_pre: Matrix) -> Result<Gradients> {
    let mut grads: Vec<Option<LayerWeights>> = vec![None; net.layers.len()];
    for i in (0..net.layers.len()).rev() {
        let layer = &net.layers[i];
        let x = trace.layer_input(i);
        let need_input_grad = i > 0;
        let d_input = match layer.spec.kind {
            LayerKind::Dense { .. } => {
                let p = layer.params.as_ref().unwrap();
                let dw = matmul_tn(x, &d_pre)?;
                let db = d_pre.column_sums();
                grads[i] = Some(LayerWeights { weights: dw, bias: db });
                if need_input_grad {
                    Some(matmul_nt(&d_pre, &p.weights)?)
                } else {
                    None
                }
            }
            LayerKind::Conv { filters, .. } => {
                let p = layer.params.as_ref().unwrap();
                let g = layer.spec.conv_geometry().unwrap();
                let dz = conv::planar_to_positions(&d_pre, filters, g.positions());
                let cols = conv::im2col(&g, x)?;
                let mut dw = Matrix::zeros(g.patch_len(), filters);
                gemm(&cols, Op::T, &dz, Op::N, 0.0, &mut dw)?;
                let db = dz.column_sums();
                grads[i] = Some(LayerWeights { weights: dw, bias: db });
                if need_input_grad {
                    let dcols = matmul_nt(&dz, &p.weights)?;
                    Some(conv::col2im(&g, &dcols, x.rows()))
                } else {
                    None
                }
            }
            LayerKind::Maxpool { .. } => {
                let arg = trace.layers[i].pool_argmax.as_ref().ok_or_else(|| {
                    SnrError::InvalidArgument("trace lacks pooling indices".into())
                })?;
                Some(conv::maxpool_backward(&d_pre, arg, layer.spec.input_len()))
            }
        };
        if let Some(d_post_prev) = d_input {
            let prev = &net.layers[i - 1];
            d_pre = pre_gradient(prev.spec.activation, &trace.layers[i - 1], d_post_prev)?;
        }
    }
    Ok(Gradients { layers: grads })
}

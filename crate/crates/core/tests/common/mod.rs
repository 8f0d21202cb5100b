//! Helpers shared by the integration tests: finite-difference gradients and
//! a direct, loop-based evaluation of the node figures.
#![allow(dead_code)]

use snr_core::datasets::ImageShape;
use snr_core::nn::{
    backward, backward_from_output, cross_entropy, forward, Activation, Gradients, Layer, LayerKind, LayerSpec,
    Network,
};
use snr_core::{Matrix, SeededRng};

pub enum Target {
    Labels(Vec<usize>),
    Values(Matrix),
}

pub struct Toy {
    pub name: &'static str,
    pub net: Network,
    pub input: Matrix,
    pub target: Target,
}

fn randomize_bias(net: &mut Network, rng: &mut SeededRng) {
    for i in net.weighted_layer_indices() {
        for b in &mut net.params_mut(i).unwrap().bias {
            *b = rng.uniform_range(-0.1, 0.1);
        }
    }
}

fn build(specs: Vec<LayerSpec>, rng: &mut SeededRng) -> Network {
    let mut net = Network::initialized(&specs, rng).unwrap();
    randomize_bias(&mut net, rng);
    net
}

/// Three small networks that between them use every layer kind and
/// activation, with a loss to differentiate.
pub fn toy_networks(seed: u64) -> Vec<Toy> {
    let mut rng = SeededRng::new(seed);
    let dense = build(
        vec![
            LayerSpec::dense(6, 5, Activation::Relu),
            LayerSpec::dense(5, 4, Activation::Tanh),
            LayerSpec::dense(4, 3, Activation::Softmax),
        ],
        &mut rng,
    );
    let dense_x = Matrix::from_fn(4, 6, |_, _| rng.normal());

    let img = ImageShape {
        channels: 2,
        height: 6,
        width: 6,
    };
    let conv = LayerSpec::conv(img, 3, 3, Activation::Relu);
    let pool = LayerSpec::maxpool(conv.output_image().unwrap(), 2);
    let flat = pool.output_len();
    let conv_pool = build(vec![conv, pool, LayerSpec::dense(flat, 3, Activation::Softmax)], &mut rng);
    let conv_x = Matrix::from_fn(3, img.features(), |_, _| rng.uniform());

    let strided = LayerSpec {
        kind: LayerKind::Conv {
            channels: 1,
            height: 7,
            width: 7,
            filters: 2,
            kernel: 3,
            stride: 2,
        },
        activation: Activation::Tanh,
    };
    let out = strided.output_len();
    let regression = build(
        vec![
            strided,
            LayerSpec::dense(out, 4, Activation::Relu),
            LayerSpec::dense(4, 2, Activation::Identity),
        ],
        &mut rng,
    );
    let reg_x = Matrix::from_fn(3, 49, |_, _| rng.normal());
    let reg_t = Matrix::from_fn(3, 2, |_, _| rng.normal());

    vec![
        Toy {
            name: "dense relu/tanh/softmax",
            net: dense,
            input: dense_x,
            target: Target::Labels(vec![0, 2, 1, 2]),
        },
        Toy {
            name: "conv relu + maxpool + softmax",
            net: conv_pool,
            input: conv_x,
            target: Target::Labels(vec![1, 0, 2]),
        },
        Toy {
            name: "strided conv tanh + dense, squared error",
            net: regression,
            input: reg_x,
            target: Target::Values(reg_t),
        },
    ]
}

pub fn loss(net: &Network, x: &Matrix, target: &Target) -> f64 {
    let trace = forward(net, x).unwrap();
    match target {
        Target::Labels(l) => cross_entropy(trace.output(), l).unwrap(),
        Target::Values(t) => {
            let n = x.rows() as f64;
            0.5 * trace
                .output()
                .data()
                .iter()
                .zip(t.data())
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
                / n
        }
    }
}

pub fn analytic(net: &Network, x: &Matrix, target: &Target) -> Gradients {
    let trace = forward(net, x).unwrap();
    match target {
        Target::Labels(l) => backward(net, &trace, l).unwrap(),
        Target::Values(t) => {
            let n = x.rows() as f64;
            let d = trace.output().sub(t).unwrap().scale(1.0 / n);
            backward_from_output(net, &trace, &d).unwrap()
        }
    }
}

/// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)` over
/// every weight and bias, with central differences of the given step.
pub fn max_relative_error(toy: &Toy, step: f64, floor: f64) -> f64 {
    let grads = analytic(&toy.net, &toy.input, &toy.target);
    let mut worst = 0.0f64;
    let mut net = toy.net.clone();
    for li in toy.net.weighted_layer_indices() {
        let g = grads.layers[li].as_ref().unwrap();
        let n_w = g.weights.data().len();
        for k in 0..n_w + g.bias.len() {
            let read = |net: &Network| {
                let p = net.params(li).unwrap();
                if k < n_w {
                    p.weights.data()[k]
                } else {
                    p.bias[k - n_w]
                }
            };
            let write = |net: &mut Network, v: f64| {
                let p = net.params_mut(li).unwrap();
                if k < n_w {
                    p.weights.data_mut()[k] = v;
                } else {
                    p.bias[k - n_w] = v;
                }
            };
            let original = read(&net);
            write(&mut net, original + step);
            let up = loss(&net, &toy.input, &toy.target);
            write(&mut net, original - step);
            let down = loss(&net, &toy.input, &toy.target);
            write(&mut net, original);
            let numeric = (up - down) / (2.0 * step);
            let exact = if k < n_w { g.weights.data()[k] } else { g.bias[k - n_w] };
            let err = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

/// Figures of one node computed straight from the definitions.
pub struct OracleNode {
    pub active: Vec<usize>,
    pub c: Vec<f64>,
    pub s: Option<f64>,
    pub s_ref: Option<f64>,
    pub g: Option<f64>,
}

pub struct OracleLayer {
    pub nodes: Vec<OracleNode>,
    pub mean_s: Option<f64>,
    pub mean_g: Option<f64>,
}

fn column(x: &Matrix, j: usize) -> Vec<f64> {
    (0..x.rows()).map(|r| x.get(r, j)).collect()
}

fn two_pass_cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

pub fn oracle_layer(
    x: &Matrix,
    weights: &Matrix,
    threshold: f64,
    scaling: bool,
    weighted: bool,
    activity: &[f64],
) -> OracleLayer {
    let n = x.rows();
    let maxima: Vec<f64> = (0..x.cols())
        .map(|j| column(x, j).into_iter().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let active: Vec<usize> = (0..x.cols())
        .filter(|&j| maxima[j] > threshold && column(x, j).iter().any(|&v| v > 0.0))
        .collect();
    let scale = |j: usize| if scaling { maxima[j] } else { 1.0 };
    let scaled: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| column(x, j).iter().map(|v| v / scale(j)).collect())
        .collect();
    let rates: Vec<f64> = active
        .iter()
        .map(|&j| column(x, j).iter().filter(|&&v| v > 0.0).count() as f64 / n as f64)
        .collect();
    let mut nodes = Vec::new();
    for k in 0..weights.cols() {
        let w: Vec<f64> = active.iter().map(|&j| weights.get(j, k) * scale(j)).collect();
        let y: Vec<f64> = (0..n)
            .map(|r| (0..active.len()).map(|a| scaled[a][r] * w[a]).sum())
            .collect();
        let c: Vec<f64> = (0..active.len())
            .map(|a| two_pass_cov(&scaled[a], &y) / rates[a])
            .collect();
        let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nc = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let defined = !w.is_empty() && nw > 0.0 && nc > 0.0 && activity.get(k).is_some_and(|&a| a > 0.0);
        let inner: f64 = w.iter().zip(&c).map(|(a, b)| a * b).sum();
        nodes.push(OracleNode {
            active: active.clone(),
            s: defined.then(|| inner / (nw * nc)),
            s_ref: defined.then(|| cmax / nc),
            g: defined.then(|| (inner / (nw * nc)) / (cmax / nc)),
            c,
        });
    }
    let defined: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].g.is_some()).collect();
    let mean_s = (!defined.is_empty())
        .then(|| defined.iter().map(|&k| nodes[k].s.unwrap()).sum::<f64>() / defined.len() as f64);
    let mean_g = (!defined.is_empty()).then(|| {
        if weighted {
            let total: f64 = defined.iter().map(|&k| activity[k]).sum();
            defined.iter().map(|&k| activity[k] * nodes[k].g.unwrap()).sum::<f64>() / total
        } else {
            defined.iter().map(|&k| nodes[k].g.unwrap()).sum::<f64>() / defined.len() as f64
        }
    });
    OracleLayer { nodes, mean_s, mean_g }
}

/// A random post-ReLU input batch with some dead and some faint columns.
pub fn random_layer_inputs(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let kind: Vec<u8> = (0..cols).map(|_| rng.below(10) as u8).collect();
    let shared: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
    Matrix::from_fn(rows, cols, |r, c| match kind[c] {
        0 => 0.0,
        1 => 0.004 * rng.uniform(),
        2..=4 => (shared[r] + 0.3 * rng.normal()).max(0.0) * 2.0,
        _ => (rng.normal() + 0.2).max(0.0),
    })
}

/// Layer with a single weighted layer, used to feed layer inputs straight in.
pub fn single_layer(weights: Matrix) -> Network {
    let spec = LayerSpec::dense(weights.rows(), weights.cols(), Activation::Relu);
    let bias = vec![0.0; weights.cols()];
    Network::new(vec![Layer {
        spec,
        params: Some(snr_core::nn::LayerWeights { weights, bias }),
    }])
    .unwrap()
}

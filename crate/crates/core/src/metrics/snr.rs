//! Output SNR of a node, by Monte Carlo and in closed form.
//!
//! The noise model perturbs only inputs that are active on a sample: an
//! input at zero (a silent ReLU) carries no noise. Signal power is the
//! variance over samples of the clean weighted sum.

use crate::error::{Result, SnrError};
use crate::nn::{conv, forward, Activation, LayerKind, Network};
use crate::par::{chunk_ranges, map_indexed, Execution};
use crate::rng::SeededRng;
use crate::tensor::{gemm, matvec, variance, Matrix, Op};

const TRIALS_PER_CHUNK: usize = 32;

fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(SnrError::InvalidArgument(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    Ok(())
}

/// Running first and second moments, merged in a fixed order.
#[derive(Clone)]
struct Moments {
    count: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(width: usize) -> Self {
        Moments {
            count: 0.0,
            sum: vec![0.0; width],
            sum_sq: vec![0.0; width],
        }
    }

    fn add_rows(&mut self, m: &Matrix) {
        self.count += m.rows() as f64;
        for r in 0..m.rows() {
            for (j, &v) in m.row(r).iter().enumerate() {
                self.sum[j] += v;
                self.sum_sq[j] += v * v;
            }
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        for j in 0..self.sum.len() {
            self.sum[j] += other.sum[j];
            self.sum_sq[j] += other.sum_sq[j];
        }
    }

    fn variances(&self) -> Vec<f64> {
        let n = self.count;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| ((q - s * s / n) / (n - 1.0)).max(0.0))
            .collect()
    }
}

fn ratio(signal: f64, noise: f64, node: usize) -> Result<f64> {
    if noise <= 0.0 {
        return Err(SnrError::Undefined(format!("node {node} has zero noise variance")));
    }
    Ok(signal / noise)
}

/// Monte Carlo SNR of every column of `weights` (fan_in × nodes) over
/// `inputs`, adding N(0, σ²) to each strictly positive input entry.
///
/// Trials are split into fixed chunks with their own random streams, so the
/// estimate depends only on `seed`.
pub fn empirical_snr_inputs(
    inputs: &Matrix,
    weights: &Matrix,
    sigma: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    if weights.rows() != inputs.cols() {
        return Err(SnrError::shape(
            "empirical_snr",
            format!("{} inputs vs weights {:?}", inputs.cols(), weights.shape()),
        ));
    }
    if trials == 0 || inputs.rows() < 2 {
        return Err(SnrError::InvalidArgument("need at least one trial and two samples".into()));
    }
    let nodes = weights.cols();
    let mut clean = Matrix::zeros(inputs.rows(), nodes);
    gemm(inputs, Op::N, weights, Op::N, 0.0, &mut clean)?;
    let signal: Vec<f64> = (0..nodes).map(|k| variance(&clean.column(k))).collect();

    let base = SeededRng::new(seed);
    let chunks = chunk_ranges(trials, TRIALS_PER_CHUNK);
    let parts = map_indexed(exec, chunks.len(), |c| -> Result<Moments> {
        let mut rng = base.split(c as u64);
        let mut m = Moments::new(nodes);
        let mut noise = Matrix::zeros(inputs.rows(), inputs.cols());
        let mut out = Matrix::zeros(inputs.rows(), nodes);
        for _ in chunks[c].clone() {
            for (n, &x) in noise.data_mut().iter_mut().zip(inputs.data()) {
                *n = if x > 0.0 { sigma * rng.normal() } else { 0.0 };
            }
            gemm(&noise, Op::N, weights, Op::N, 0.0, &mut out)?;
            m.add_rows(&out);
        }
        Ok(m)
    });
    let mut total = Moments::new(nodes);
    for p in parts {
        total.merge(&p?);
    }
    let noise_var = total.variances();
    (0..nodes).map(|k| ratio(signal[k], noise_var[k], k)).collect()
}

/// Monte Carlo SNR of every node of weighted layer `layer` (1-based) when
/// its inputs are computed from `clean_batch`.
pub fn empirical_snr(
    net: &Network,
    layer: usize,
    clean_batch: &Matrix,
    sigma: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let weighted = net.weighted_layer_indices();
    let li = *layer
        .checked_sub(1)
        .and_then(|i| weighted.get(i))
        .ok_or_else(|| SnrError::InvalidArgument(format!("no weighted layer {layer}")))?;
    let trace = forward(net, clean_batch)?;
    let spec = &net.layers()[li].spec;
    let weights = &net.layers()[li].params.as_ref().unwrap().weights;
    let inputs = trace.layer_input(li);
    match spec.kind {
        LayerKind::Conv { .. } => {
            let patches = conv::im2col(&spec.conv_geometry().unwrap(), inputs)?;
            empirical_snr_inputs(&patches, weights, sigma, trials, seed, exec)
        }
        _ => empirical_snr_inputs(inputs, weights, sigma, trials, seed, exec),
    }
}

/// Closed-form SNR for gated noise: `var(x·w) / (σ² Σ_j w_j² a_j)`.
pub fn gated_snr(inputs: &Matrix, weights: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let y = matvec(inputs, weights)?;
    let rates = super::activation_rates(inputs);
    let noise: f64 = weights.iter().zip(&rates).map(|(w, a)| w * w * a).sum::<f64>() * sigma * sigma;
    ratio(variance(&y), noise, 0)
}

fn check_activation(act: Activation) -> Result<()> {
    if act == Activation::Softmax {
        return Err(SnrError::InvalidArgument(
            "per-node SNR is not defined through a softmax".into(),
        ));
    }
    Ok(())
}

/// First-order SNR when noise enters before the activation `g`:
/// `var(Σ w g(z)) / (σ² Σ_j w_j² mean(g'(z_j)²))`.
///
/// For the identity this is the plain `var(z·w) / (σ²‖w‖²)`; for ReLU the
/// mean squared slope is the activation rate, matching [`gated_snr`].
pub fn linearized_snr(act: Activation, pre: &Matrix, weights: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_activation(act)?;
    let post = pre.map(|z| act.apply(z));
    let y = matvec(&post, weights)?;
    let n = pre.rows() as f64;
    let mut slope_sq = vec![0.0; pre.cols()];
    for r in 0..pre.rows() {
        for (s, &z) in slope_sq.iter_mut().zip(pre.row(r)) {
            let d = act.derivative(z);
            *s += d * d;
        }
    }
    let noise: f64 = weights
        .iter()
        .zip(&slope_sq)
        .map(|(w, s)| w * w * (s / n))
        .sum::<f64>()
        * sigma
        * sigma;
    ratio(variance(&y), noise, 0)
}

/// Monte Carlo counterpart of [`linearized_snr`]: noise is added to the
/// pre-activations and the output noise is `Σ w (g(z+n) - g(z))`.
pub fn empirical_snr_activated(
    act: Activation,
    pre: &Matrix,
    weights: &[f64],
    sigma: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    check_sigma(sigma)?;
    check_activation(act)?;
    if weights.len() != pre.cols() {
        return Err(SnrError::shape(
            "empirical_snr_activated",
            format!("{} inputs vs {} weights", pre.cols(), weights.len()),
        ));
    }
    if trials == 0 || pre.rows() < 2 {
        return Err(SnrError::InvalidArgument("need at least one trial and two samples".into()));
    }
    let clean = pre.map(|z| act.apply(z));
    let signal = variance(&matvec(&clean, weights)?);
    let base = SeededRng::new(seed);
    let chunks = chunk_ranges(trials, TRIALS_PER_CHUNK);
    let parts = map_indexed(exec, chunks.len(), |c| {
        let mut rng = base.split(c as u64);
        let mut m = Moments::new(1);
        let mut delta = Matrix::zeros(pre.rows(), 1);
        for _ in chunks[c].clone() {
            for r in 0..pre.rows() {
                let mut acc = 0.0;
                for (j, (&z, &g)) in pre.row(r).iter().zip(clean.row(r)).enumerate() {
                    acc += weights[j] * (act.apply(z + sigma * rng.normal()) - g);
                }
                delta.set(r, 0, acc);
            }
            m.add_rows(&delta);
        }
        m
    });
    let mut total = Moments::new(1);
    for p in &parts {
        total.merge(p);
    }
    ratio(signal, total.variances()[0], 0)
}

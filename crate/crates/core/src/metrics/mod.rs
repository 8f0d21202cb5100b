//! Node-level SNR figures-of-merit.
//!
//! For a node with incoming weights `w` over inputs `x_j`, the covariance
//! vector is `c_j = cov(x_j, Σ_k w_k x_k) / a_j`, where `a_j` is the fraction
//! of samples on which input `j` is strictly positive. `c` points along the
//! weights that maximise output SNR when every active input carries noise of
//! equal variance. From it:
//!
//! * SNR-fitness `S = ⟨w, c⟩ / (‖w‖‖c‖)`, the cosine between `w` and `c`;
//! * reference fitness `S' = max_j |c_j| / ‖c‖`, the fitness of the signed
//!   indicator on the single best-correlated input;
//! * SNR-gain `G = S / S' = ⟨w, c⟩ / (‖w‖ max_j |c_j|)`.
//!
//! Layer merits average these over nodes (gain weighted by how often each
//! node is active), and a network merit sums layer gains over a range.

mod prune;
mod snr;

use serde::{Deserialize, Serialize};

pub use prune::{prune_layer, prune_weak_inputs, PruneSelection};
pub use snr::{empirical_snr, empirical_snr_activated, empirical_snr_inputs, gated_snr, linearized_snr};

use crate::error::{Result, SnrError};
use crate::nn::{conv, forward, ConvGeometry, ForwardTrace, LayerKind, LayerSpec, LayerWeights, Network};
use crate::par::{chunk_ranges, map_indexed, Execution};
use crate::tensor::{dot, gemm, norm, Matrix, Op};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Inputs whose batch maximum (before scaling) does not exceed this are
    /// left out of every node's vectors.
    pub low_input_threshold: f64,
    /// Divide each input by its batch maximum, folding the factor into the
    /// weight so the node's weighted sum is unchanged.
    pub apply_max_scaling: bool,
    /// Remove per-input means across output nodes from a softmax layer.
    pub apply_softmax_centering: bool,
    /// Weight each node's gain by its output activation rate.
    pub weighted_mean: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            low_input_threshold: 0.01,
            apply_max_scaling: true,
            apply_softmax_centering: true,
            weighted_mean: true,
            execution: Execution::Parallel,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.low_input_threshold.is_nan() || self.low_input_threshold < 0.0 {
            return Err(SnrError::InvalidArgument(format!(
                "low_input_threshold {} < 0",
                self.low_input_threshold
            )));
        }
        Ok(())
    }
}

/// Why a node has no figures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Undefined {
    EmptyActiveSet,
    ZeroWeights,
    ZeroCovariance,
    Inactive,
}

impl std::fmt::Display for Undefined {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Undefined::EmptyActiveSet => "empty_active_set",
            Undefined::ZeroWeights => "zero_weights",
            Undefined::ZeroCovariance => "zero_covariance",
            Undefined::Inactive => "inactive",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFigures {
    pub s_fitness: f64,
    pub s_reference: f64,
    pub g_gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeMerit {
    pub node: usize,
    /// Input indices the vectors below refer to.
    pub active_inputs: Vec<usize>,
    pub c: Vec<f64>,
    pub rates: Vec<f64>,
    /// Node's own output activation rate over the batch.
    pub activity_weight: f64,
    pub figures: std::result::Result<NodeFigures, Undefined>,
}

impl NodeMerit {
    pub fn is_defined(&self) -> bool {
        self.figures.is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerMerit {
    /// 1-based position among the network's weighted layers.
    pub layer: usize,
    /// Plain mean of S over defined nodes.
    pub mean_s: Option<f64>,
    /// Mean of G over defined nodes, activity-weighted when configured.
    pub mean_g: Option<f64>,
    /// Mean output activation rate over all nodes.
    pub mean_activity: f64,
    pub nodes: Vec<NodeMerit>,
}

impl LayerMerit {
    pub fn g(&self) -> Result<f64> {
        self.mean_g
            .ok_or_else(|| SnrError::Undefined(format!("layer {} has no defined nodes", self.layer)))
    }

    pub fn s(&self) -> Result<f64> {
        self.mean_s
            .ok_or_else(|| SnrError::Undefined(format!("layer {} has no defined nodes", self.layer)))
    }

    pub fn defined_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_defined()).count()
    }
}

/// Per column, the fraction of samples strictly greater than zero.
pub fn activation_rates(inputs: &Matrix) -> Vec<f64> {
    let mut counts = vec![0usize; inputs.cols()];
    for r in 0..inputs.rows() {
        for (c, &v) in counts.iter_mut().zip(inputs.row(r)) {
            if v > 0.0 {
                *c += 1;
            }
        }
    }
    let n = inputs.rows().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Divide each column by its batch maximum; all-zero columns are unchanged.
pub fn max_scale(inputs: &Matrix) -> Result<Matrix> {
    if inputs.data().iter().any(|&v| v < 0.0) {
        return Err(SnrError::InvalidArgument(
            "max scaling expects non-negative (post-ReLU) inputs".into(),
        ));
    }
    let maxima = inputs.column_max();
    let mut out = inputs.clone();
    for r in 0..out.rows() {
        for (v, &m) in out.row_mut(r).iter_mut().zip(&maxima) {
            if m > 0.0 {
                *v /= m;
            }
        }
    }
    Ok(out)
}

/// Indices of the columns whose batch maximum exceeds `threshold`.
pub fn filter_low_inputs(inputs: &Matrix, threshold: f64) -> Result<Vec<usize>> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(SnrError::InvalidArgument(format!("threshold {threshold} < 0")));
    }
    Ok(inputs
        .column_max()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > threshold)
        .map(|(j, _)| j)
        .collect())
}

/// `c_j = cov(x_j, y) / a_j` with `y = inputs · weights`.
pub fn covariance_vector(inputs: &Matrix, weights: &[f64], rates: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != inputs.cols() || rates.len() != inputs.cols() {
        return Err(SnrError::shape(
            "covariance_vector",
            format!(
                "{} inputs, {} weights, {} rates",
                inputs.cols(),
                weights.len(),
                rates.len()
            ),
        ));
    }
    if let Some(j) = rates.iter().position(|&a| a <= 0.0) {
        return Err(SnrError::InvalidArgument(format!(
            "input {j} is never active; remove it before computing c"
        )));
    }
    let y = crate::tensor::matvec(inputs, weights)?;
    let cov = crate::tensor::column_covariance(inputs, &y)?;
    Ok(cov.iter().zip(rates).map(|(c, a)| c / a).collect())
}

/// Cosine between `w` and `c`.
pub fn snr_fitness(weights: &[f64], c: &[f64]) -> Result<f64> {
    let (nw, nc) = nonzero_norms(weights, c)?;
    Ok((dot(weights, c) / (nw * nc)).clamp(-1.0, 1.0))
}

/// Fitness of the signed single-input reference, `max_j |c_j| / ‖c‖`.
pub fn snr_reference(c: &[f64]) -> Result<f64> {
    let nc = norm(c);
    if nc == 0.0 {
        return Err(SnrError::Undefined("zero covariance vector".into()));
    }
    Ok(max_abs(c) / nc)
}

/// `⟨w, c⟩ / (‖w‖ max_j |c_j|)`.
pub fn snr_gain(weights: &[f64], c: &[f64]) -> Result<f64> {
    let (nw, _) = nonzero_norms(weights, c)?;
    Ok(dot(weights, c) / (nw * max_abs(c)))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn nonzero_norms(weights: &[f64], c: &[f64]) -> Result<(f64, f64)> {
    if weights.len() != c.len() {
        return Err(SnrError::shape(
            "snr_fitness",
            format!("{} weights vs {} covariances", weights.len(), c.len()),
        ));
    }
    let nw = norm(weights);
    let nc = norm(c);
    if nw == 0.0 {
        return Err(SnrError::Undefined("zero weight vector".into()));
    }
    if nc == 0.0 {
        return Err(SnrError::Undefined("zero covariance vector".into()));
    }
    Ok((nw, nc))
}

fn node_figures(w: &[f64], c: &[f64]) -> std::result::Result<NodeFigures, Undefined> {
    if w.is_empty() {
        return Err(Undefined::EmptyActiveSet);
    }
    if norm(w) == 0.0 {
        return Err(Undefined::ZeroWeights);
    }
    if norm(c) == 0.0 {
        return Err(Undefined::ZeroCovariance);
    }
    let s_fitness = snr_fitness(w, c).map_err(|_| Undefined::ZeroCovariance)?;
    let s_reference = snr_reference(c).map_err(|_| Undefined::ZeroCovariance)?;
    let g_gain = snr_gain(w, c).map_err(|_| Undefined::ZeroCovariance)?;
    Ok(NodeFigures {
        s_fitness,
        s_reference,
        g_gain,
    })
}

/// Subtract, for every input, its mean weight across the output nodes, and
/// center the bias the same way. Softmax outputs are unchanged.
pub fn softmax_center(weights: &LayerWeights) -> LayerWeights {
    let mut out = weights.clone();
    for k in 0..out.weights.rows() {
        let row = out.weights.row_mut(k);
        let m = row.iter().sum::<f64>() / row.len() as f64;
        for v in row.iter_mut() {
            *v -= m;
        }
    }
    let mb = out.bias.iter().sum::<f64>() / out.bias.len().max(1) as f64;
    for b in &mut out.bias {
        *b -= mb;
    }
    out
}

/// Where a layer's input samples come from: plain rows, or receptive-field
/// patches of a convolution (one row per sample and output position).
#[derive(Clone, Copy)]
enum RowSource<'a> {
    Dense(&'a Matrix),
    Patches { geometry: ConvGeometry, batch: &'a Matrix },
}

impl RowSource<'_> {
    fn samples(&self) -> usize {
        match self {
            RowSource::Dense(m) => m.rows(),
            RowSource::Patches { batch, .. } => batch.rows(),
        }
    }

    fn rows_per_sample(&self) -> usize {
        match self {
            RowSource::Dense(_) => 1,
            RowSource::Patches { geometry, .. } => geometry.positions(),
        }
    }

    fn width(&self) -> usize {
        match self {
            RowSource::Dense(m) => m.cols(),
            RowSource::Patches { geometry, .. } => geometry.patch_len(),
        }
    }

    fn chunk(&self, samples: std::ops::Range<usize>) -> Result<Matrix> {
        match self {
            RowSource::Dense(m) => Ok(m.row_range(samples)),
            RowSource::Patches { geometry, batch } => conv::im2col(geometry, &batch.row_range(samples)),
        }
    }

    fn sample_chunks(&self) -> Vec<std::ops::Range<usize>> {
        let per = (2048 / self.rows_per_sample()).max(1);
        chunk_ranges(self.samples(), per)
    }
}

struct ColumnSummary {
    rows: usize,
    max: Vec<f64>,
    sum: Vec<f64>,
    positive: Vec<usize>,
    has_negative: bool,
}

fn summarize_columns(src: RowSource<'_>, exec: Execution) -> Result<ColumnSummary> {
    let chunks = src.sample_chunks();
    let parts = map_indexed(exec, chunks.len(), |i| -> Result<ColumnSummary> {
        let m = src.chunk(chunks[i].clone())?;
        let width = m.cols();
        let mut s = ColumnSummary {
            rows: m.rows(),
            max: vec![f64::NEG_INFINITY; width],
            sum: vec![0.0; width],
            positive: vec![0; width],
            has_negative: false,
        };
        for r in 0..m.rows() {
            for (j, &v) in m.row(r).iter().enumerate() {
                if v > s.max[j] {
                    s.max[j] = v;
                }
                s.sum[j] += v;
                if v > 0.0 {
                    s.positive[j] += 1;
                } else if v < 0.0 {
                    s.has_negative = true;
                }
            }
        }
        Ok(s)
    });
    let width = src.width();
    let mut total = ColumnSummary {
        rows: 0,
        max: vec![f64::NEG_INFINITY; width],
        sum: vec![0.0; width],
        positive: vec![0; width],
        has_negative: false,
    };
    for p in parts {
        let p = p?;
        total.rows += p.rows;
        total.has_negative |= p.has_negative;
        for j in 0..width {
            total.max[j] = total.max[j].max(p.max[j]);
            total.sum[j] += p.sum[j];
            total.positive[j] += p.positive[j];
        }
    }
    Ok(total)
}

fn merit_from_rows(
    src: RowSource<'_>,
    layer: usize,
    weights: &LayerWeights,
    cfg: &MetricConfig,
    node_activity: &[f64],
) -> Result<LayerMerit> {
    cfg.validate()?;
    let fan_in = src.width();
    let nodes = weights.fan_out();
    if weights.fan_in() != fan_in {
        return Err(SnrError::shape(
            "layer_merit",
            format!("{fan_in} inputs but weights are {:?}", weights.weights.shape()),
        ));
    }
    if node_activity.len() != nodes {
        return Err(SnrError::shape(
            "layer_merit",
            format!("{} activity values for {nodes} nodes", node_activity.len()),
        ));
    }
    let exec = cfg.execution;
    let summary = summarize_columns(src, exec)?;
    let n = summary.rows;
    if n < 2 {
        return Err(SnrError::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    if cfg.apply_max_scaling && summary.has_negative {
        return Err(SnrError::InvalidArgument(
            "max scaling expects non-negative (post-ReLU) inputs".into(),
        ));
    }
    let active: Vec<usize> = (0..fan_in)
        .filter(|&j| summary.max[j] > cfg.low_input_threshold && summary.positive[j] > 0)
        .collect();
    let scale: Vec<f64> = active
        .iter()
        .map(|&j| if cfg.apply_max_scaling { summary.max[j] } else { 1.0 })
        .collect();
    let means: Vec<f64> = active.iter().map(|&j| summary.sum[j] / n as f64).collect();
    let rates: Vec<f64> = active.iter().map(|&j| summary.positive[j] as f64 / n as f64).collect();
    let w_active = weights.weights.select_rows(&active);

    // Σ over rows of (x - mean)ᵀ (y - mean_y), with y = x_A · w_A.
    let cross = if active.is_empty() {
        Matrix::zeros(0, nodes)
    } else {
        let chunks = src.sample_chunks();
        let parts = map_indexed(exec, chunks.len(), |i| -> Result<Matrix> {
            let m = src.chunk(chunks[i].clone())?;
            let mut xc = m.select_columns(&active);
            for r in 0..xc.rows() {
                for (v, &mu) in xc.row_mut(r).iter_mut().zip(&means) {
                    *v -= mu;
                }
            }
            let mut yc = Matrix::zeros(xc.rows(), nodes);
            gemm(&xc, Op::N, &w_active, Op::N, 0.0, &mut yc)?;
            let mut acc = Matrix::zeros(active.len(), nodes);
            gemm(&xc, Op::T, &yc, Op::N, 0.0, &mut acc)?;
            Ok(acc)
        });
        let mut total = Matrix::zeros(active.len(), nodes);
        for p in parts {
            total.axpy(1.0, &p?)?;
        }
        total
    };
    let denom = (n - 1) as f64;

    let node_merits: Vec<NodeMerit> = map_indexed(exec, nodes, |k| {
        let w: Vec<f64> = (0..active.len()).map(|a| w_active.get(a, k) * scale[a]).collect();
        let c: Vec<f64> = (0..active.len())
            .map(|a| cross.get(a, k) / denom / scale[a] / rates[a])
            .collect();
        let activity = node_activity[k];
        let figures = if activity <= 0.0 {
            Err(Undefined::Inactive)
        } else {
            node_figures(&w, &c)
        };
        NodeMerit {
            node: k,
            active_inputs: active.clone(),
            c,
            rates: rates.clone(),
            activity_weight: activity,
            figures,
        }
    });

    let defined: Vec<&NodeMerit> = node_merits.iter().filter(|m| m.is_defined()).collect();
    let mean_s = (!defined.is_empty()).then(|| {
        defined.iter().map(|m| m.figures.unwrap().s_fitness).sum::<f64>() / defined.len() as f64
    });
    let mean_g = if defined.is_empty() {
        None
    } else if cfg.weighted_mean {
        let total: f64 = defined.iter().map(|m| m.activity_weight).sum();
        Some(
            defined
                .iter()
                .map(|m| m.activity_weight * m.figures.unwrap().g_gain)
                .sum::<f64>()
                / total,
        )
    } else {
        Some(defined.iter().map(|m| m.figures.unwrap().g_gain).sum::<f64>() / defined.len() as f64)
    };
    let mean_activity = node_activity.iter().sum::<f64>() / nodes.max(1) as f64;
    Ok(LayerMerit {
        layer,
        mean_s,
        mean_g,
        mean_activity,
        nodes: node_merits,
    })
}

/// Merit of a dense layer. `inputs` are the values feeding it over the
/// evaluation batch; `node_activity` is each node's output activation rate.
/// The bias never enters the vectors.
pub fn layer_merit(
    inputs: &Matrix,
    weights: &LayerWeights,
    cfg: &MetricConfig,
    node_activity: &[f64],
) -> Result<LayerMerit> {
    merit_from_rows(RowSource::Dense(inputs), 0, weights, cfg, node_activity)
}

/// Merit of a convolution layer, treating each filter as a node whose input
/// samples are all receptive fields of all images.
pub fn conv_layer_merit(
    spec: &LayerSpec,
    weights: &LayerWeights,
    input_batch: &Matrix,
    cfg: &MetricConfig,
    node_activity: &[f64],
) -> Result<LayerMerit> {
    let geometry = spec
        .conv_geometry()
        .ok_or_else(|| SnrError::InvalidArgument("conv_layer_merit needs a conv layer".into()))?;
    if input_batch.cols() != geometry.input_len() {
        return Err(SnrError::shape(
            "conv_layer_merit",
            format!("{} features vs conv input {}", input_batch.cols(), geometry.input_len()),
        ));
    }
    merit_from_rows(
        RowSource::Patches {
            geometry,
            batch: input_batch,
        },
        0,
        weights,
        cfg,
        node_activity,
    )
}

/// One CSV row per node: `layer, node, activity, active_inputs, s_fitness,
/// s_reference, g_gain, status`. Undefined nodes leave the three figures
/// empty and name the reason in `status`.
pub fn nodes_csv(merits: &[LayerMerit]) -> String {
    use std::fmt::Write;
    let mut s = String::from("layer,node,activity,active_inputs,s_fitness,s_reference,g_gain,status\n");
    for m in merits {
        for n in &m.nodes {
            let _ = write!(s, "{},{},{},{},", m.layer, n.node, n.activity_weight, n.active_inputs.len());
            let _ = match n.figures {
                Ok(f) => writeln!(s, "{},{},{},ok", f.s_fitness, f.s_reference, f.g_gain),
                Err(u) => writeln!(s, ",,,{u}"),
            };
        }
    }
    s
}

/// Output activation rate of every node (filter) of a layer, from its
/// post-activation values.
pub fn node_activity(spec: &LayerSpec, post: &Matrix) -> Vec<f64> {
    match spec.kind {
        LayerKind::Conv { filters, .. } => {
            let p = spec.positions();
            let mut counts = vec![0usize; filters];
            for r in 0..post.rows() {
                let row = post.row(r);
                for (f, c) in counts.iter_mut().enumerate() {
                    *c += row[f * p..(f + 1) * p].iter().filter(|&&v| v > 0.0).count();
                }
            }
            let total = (post.rows() * p).max(1) as f64;
            counts.into_iter().map(|c| c as f64 / total).collect()
        }
        _ => activation_rates(post),
    }
}

/// Merits of every weighted layer, from an existing trace.
pub fn analyze_trace(net: &Network, trace: &ForwardTrace, cfg: &MetricConfig) -> Result<Vec<LayerMerit>> {
    let weighted = net.weighted_layer_indices();
    let last = net.layers().len() - 1;
    let mut out = Vec::with_capacity(weighted.len());
    for (pos, &li) in weighted.iter().enumerate() {
        let layer = &net.layers()[li];
        let mut params = layer.params.clone().unwrap();
        if li == last && layer.spec.activation == crate::nn::Activation::Softmax && cfg.apply_softmax_centering {
            params = softmax_center(&params);
        }
        let activity = node_activity(&layer.spec, &trace.layers[li].post);
        let inputs = trace.layer_input(li);
        let mut merit = match layer.spec.kind {
            LayerKind::Conv { .. } => conv_layer_merit(&layer.spec, &params, inputs, cfg, &activity)?,
            _ => layer_merit(inputs, &params, cfg, &activity)?,
        };
        merit.layer = pos + 1;
        out.push(merit);
    }
    Ok(out)
}

/// Merits of every weighted layer over `batch`.
pub fn analyze_network(net: &Network, batch: &Matrix, cfg: &MetricConfig) -> Result<Vec<LayerMerit>> {
    let trace = forward(net, batch)?;
    analyze_trace(net, &trace, cfg)
}

/// Sum of layer gains over weighted layers `first..=last` (1-based).
pub fn aggregate_gain(layers: &[LayerMerit], first: usize, last: usize) -> Result<f64> {
    if first == 0 || first > last || last > layers.len() {
        return Err(SnrError::InvalidArgument(format!(
            "layer range {first}..{last} outside 1..{}",
            layers.len()
        )));
    }
    layers[first - 1..last].iter().map(LayerMerit::g).sum()
}

/// Network figure-of-merit `G^(first..last)` over `batch`.
pub fn network_merit(net: &Network, batch: &Matrix, cfg: &MetricConfig, first: usize, last: usize) -> Result<f64> {
    let count = net.weighted_layer_count();
    if first == 0 || first > last || last > count {
        return Err(SnrError::InvalidArgument(format!(
            "layer range {first}..{last} outside 1..{count}"
        )));
    }
    let layers = analyze_network(net, batch, cfg)?;
    aggregate_gain(&layers, first, last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn activation_rate_counts() {
        let x = Matrix::new(8, 3, {
            let mut v = Vec::new();
            for r in 0..8 {
                v.push(1.0 + r as f64);
                v.push(0.0);
                v.push(if r % 3 == 0 { 2.0 } else { 0.0 });
            }
            v
        })
        .unwrap();
        assert_eq!(activation_rates(&x), vec![1.0, 0.0, 0.375]);
    }

    #[test]
    fn max_scale_cases() {
        let x = Matrix::new(2, 2, vec![4.0, 0.0, 2.0, 0.0]).unwrap();
        let s = max_scale(&x).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0, 0.5, 0.0]);
        assert_eq!(max_scale(&s).unwrap(), s);
        assert!(max_scale(&Matrix::new(1, 1, vec![-1.0]).unwrap()).is_err());
    }

    #[test]
    fn low_input_filter() {
        let x = Matrix::new(2, 4, vec![0.0, 0.005, 0.5, 0.02, 0.0, 0.001, 0.1, 0.0]).unwrap();
        assert_eq!(filter_low_inputs(&x, 0.0).unwrap(), vec![1, 2, 3]);
        assert_eq!(filter_low_inputs(&x, 0.01).unwrap(), vec![2, 3]);
        assert!(filter_low_inputs(&x, 1.0).unwrap().is_empty());
        assert!(filter_low_inputs(&x, -1.0).is_err());
    }

    #[test]
    fn figures_by_hand() {
        assert!((snr_fitness(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!((snr_fitness(&[2.0, 4.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(snr_fitness(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((snr_reference(&[3.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(snr_reference(&[0.0, -2.0, 0.0]).unwrap(), 1.0);
        assert!((snr_reference(&[1.0, -1.0, 1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        let g = snr_gain(&[1.0, 1.0], &[2.0, 1.0]).unwrap();
        assert!((g - 3.0 / (2f64.sqrt() * 2.0)).abs() < 1e-15);
        // the signed indicator achieves unit gain
        assert!((snr_gain(&[0.0, -1.0, 0.0], &[0.5, -3.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        // w ∝ c gives ‖c‖ / max|c|
        let c = [1.0, -2.0, 2.0];
        assert!((snr_gain(&c, &c).unwrap() - 3.0 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_vectors_are_undefined() {
        assert!(matches!(snr_fitness(&[0.0, 0.0], &[1.0, 1.0]), Err(SnrError::Undefined(_))));
        assert!(matches!(snr_gain(&[1.0, 0.0], &[0.0, 0.0]), Err(SnrError::Undefined(_))));
        assert!(snr_reference(&[0.0]).is_err());
    }

    #[test]
    fn covariance_vector_collapses() {
        let x = Matrix::new(5, 1, vec![0.0, 1.0, 3.0, 0.0, 2.0]).unwrap();
        let a = activation_rates(&x);
        let c = covariance_vector(&x, &[1.0], &a).unwrap();
        let var = crate::tensor::variance(&x.column(0));
        assert!((c[0] - var / 0.6).abs() < 1e-14);

        let dup = Matrix::from_fn(6, 2, |r, _| (r as f64 * 0.7).sin().max(0.0) + 0.1);
        let a = activation_rates(&dup);
        let c = covariance_vector(&dup, &[1.0, 0.0], &a).unwrap();
        assert_eq!(c[0], c[1]);

        let dead = Matrix::new(2, 1, vec![0.0, 0.0]).unwrap();
        assert!(covariance_vector(&dead, &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn softmax_center_cases() {
        let w = LayerWeights {
            weights: Matrix::new(2, 3, vec![1.0, -1.0, 0.0, 2.0, 0.0, -2.0]).unwrap(),
            bias: vec![0.0; 3],
        };
        assert_eq!(softmax_center(&w), w);
        let shifted = LayerWeights {
            weights: w.weights.map(|v| v + 5.0),
            bias: vec![1.0, 1.0, 1.0],
        };
        let back = softmax_center(&shifted);
        for (a, b) in back.weights.data().iter().zip(w.weights.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(back.bias, vec![0.0; 3]);
    }

    #[test]
    fn inactive_nodes_do_not_count() {
        let mut rng = SeededRng::new(1);
        let x = Matrix::from_fn(20, 3, |_, _| rng.uniform());
        let w = LayerWeights {
            weights: Matrix::from_fn(3, 2, |_, _| rng.uniform_range(-1.0, 1.0)),
            bias: vec![0.0; 2],
        };
        let cfg = MetricConfig::default();
        let both = layer_merit(&x, &w, &cfg, &[0.5, 0.5]).unwrap();
        let one = layer_merit(&x, &w, &cfg, &[0.5, 0.0]).unwrap();
        assert_eq!(one.nodes[1].figures, Err(Undefined::Inactive));
        assert!((one.mean_g.unwrap() - both.nodes[0].figures.unwrap().g_gain).abs() < 1e-15);
        let none = layer_merit(&x, &w, &cfg, &[0.0, 0.0]).unwrap();
        assert!(none.g().is_err());
    }

    #[test]
    fn single_node_aligned_with_c_has_unit_fitness() {
        // y depends on w, so set w to the c it induces: iterate to the fixed
        // point (principal direction of the scaled covariance).
        let mut rng = SeededRng::new(2);
        let base = Matrix::from_fn(200, 4, |_, _| rng.uniform());
        let mix = Matrix::new(4, 4, vec![1.0, 0.5, 0.0, 0.0, 0.5, 1.0, 0.3, 0.0, 0.0, 0.3, 1.0, 0.2, 0.0, 0.0, 0.2, 1.0]).unwrap();
        let x = crate::tensor::matmul(&base, &mix).unwrap();
        let cfg = MetricConfig::default();
        let maxima = x.column_max();
        let mut w = vec![1.0; 4];
        for _ in 0..200 {
            let lw = LayerWeights {
                weights: Matrix::column_vector(&w),
                bias: vec![0.0],
            };
            let m = layer_merit(&x, &lw, &cfg, &[1.0]).unwrap();
            let c = &m.nodes[0].c;
            // scaled weights follow c, stored weights drop the scale factor
            w = c.iter().zip(&maxima).map(|(ci, mj)| ci / mj).collect();
            let nw = norm(&w);
            w.iter_mut().for_each(|v| *v /= nw);
        }
        let lw = LayerWeights {
            weights: Matrix::column_vector(&w),
            bias: vec![0.0],
        };
        let m = layer_merit(&x, &lw, &cfg, &[1.0]).unwrap();
        assert!((m.mean_s.unwrap() - 1.0).abs() < 1e-10);
    }
}

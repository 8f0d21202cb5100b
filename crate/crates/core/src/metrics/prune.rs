use crate::error::{Result, SnrError};
use crate::nn::Network;
use crate::rng::SeededRng;
use crate::tensor::Matrix;

use super::{analyze_network, MetricConfig, NodeMerit};

/// How `prune_layer` chooses which inputs each node keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PruneSelection {
    /// Inputs with the largest `|c_j|`.
    Strongest,
    /// Inputs with the smallest `|c_j|`; a control for `Strongest`.
    Weakest,
    /// A uniformly random subset of the same size per node.
    Random { seed: u64 },
}

fn keep_count(n: usize, keep_fraction: f64) -> Result<usize> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(SnrError::InvalidArgument(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    Ok(((keep_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1.min(n), n))
}

fn covariance_magnitudes(merit: &NodeMerit, n: usize) -> Result<Vec<f64>> {
    let mut mag = vec![0.0; n];
    for (&j, c) in merit.active_inputs.iter().zip(&merit.c) {
        *mag.get_mut(j).ok_or_else(|| {
            SnrError::shape("prune_weak_inputs", format!("input {j} beyond {n} weights"))
        })? = c.abs();
    }
    Ok(mag)
}

fn ranked(mag: &[f64], strongest: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mag.len()).collect();
    // stable sort keeps lower indices first among ties
    if strongest {
        order.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]));
    } else {
        order.sort_by(|&a, &b| mag[a].total_cmp(&mag[b]));
    }
    order
}

fn zero_except(weights: &[f64], keep: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; weights.len()];
    for &j in keep {
        out[j] = weights[j];
    }
    out
}

/// Zero every weight except the `ceil(keep_fraction · n)` inputs with the
/// largest covariance magnitude. Inputs outside the node's active set rank
/// last; ties go to the lower index.
pub fn prune_weak_inputs(merit: &NodeMerit, weights: &[f64], keep_fraction: f64) -> Result<Vec<f64>> {
    let n = weights.len();
    let k = keep_count(n, keep_fraction)?;
    let mag = covariance_magnitudes(merit, n)?;
    Ok(zero_except(weights, &ranked(&mag, true)[..k]))
}

/// Copy of `net` where every node of weighted layer `layer` (1-based) keeps
/// only a fraction of its input weights. Covariances come from `batch`.
pub fn prune_layer(
    net: &Network,
    layer: usize,
    batch: &Matrix,
    cfg: &MetricConfig,
    keep_fraction: f64,
    selection: PruneSelection,
) -> Result<Network> {
    let weighted = net.weighted_layer_indices();
    let li = *layer
        .checked_sub(1)
        .and_then(|i| weighted.get(i))
        .ok_or_else(|| SnrError::InvalidArgument(format!("no weighted layer {layer}")))?;
    let merits = analyze_network(net, batch, cfg)?;
    let merit = &merits[layer - 1];
    let mut out = net.clone();
    let params = out.params_mut(li).unwrap();
    let n = params.fan_in();
    let k = keep_count(n, keep_fraction)?;
    let mut rng = match selection {
        PruneSelection::Random { seed } => Some(SeededRng::new(seed)),
        _ => None,
    };
    for node in 0..params.fan_out() {
        let w = params.node_weights(node);
        let keep: Vec<usize> = match selection {
            PruneSelection::Strongest | PruneSelection::Weakest => {
                let mag = covariance_magnitudes(&merit.nodes[node], n)?;
                ranked(&mag, selection == PruneSelection::Strongest)[..k].to_vec()
            }
            PruneSelection::Random { .. } => rng.as_mut().unwrap().permutation(n)[..k].to_vec(),
        };
        let pruned = zero_except(&w, &keep);
        for (j, v) in pruned.into_iter().enumerate() {
            params.weights.set(j, node, v);
        }
    }
    Ok(out)
}

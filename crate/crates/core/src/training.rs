//! Fixed-step mini-batch SGD with optional L2, dropout, input-noise and
//! augmentation.

use serde::{Deserialize, Serialize};

use crate::datasets::{augment_with_flip_probability, AugmentSpec, LabeledDataset};
use crate::error::{Result, SnrError};
use crate::nn::{backward, backward_from_output, cross_entropy, forward_with_dropout, predict, DropoutPlan, Gradients, Network};
use crate::rng::SeededRng;
use crate::tensor::{gaussian_noise, Matrix};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    #[default]
    None,
    L2 { lambda: f64 },
    /// Rates for the weighted hidden layers in order; one rate applies to all.
    Dropout { rates: Vec<f64> },
    InputNoise { sigma: f64 },
}

/// Training hyperparameters. Serialized as TOML:
///
/// ```toml
/// epochs = 10
/// batch_size = 32
/// learning_rate = 0.05
/// seed = 1
/// [regularizer]
/// kind = "dropout"        # none | l2 | dropout | input_noise
/// rates = [0.5]           # l2: lambda = 1e-4, input_noise: sigma = 0.1
/// [augmentation]
/// shift_pixels = 0
/// flip_horizontal = false
/// noise_sigma = 0.0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub regularizer: Regularizer,
    #[serde(default)]
    pub augmentation: AugmentSpec,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.05,
            regularizer: Regularizer::None,
            augmentation: AugmentSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SnrError::InvalidArgument(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        match &self.regularizer {
            Regularizer::None => {}
            Regularizer::L2 { lambda } if lambda.is_nan() || *lambda < 0.0 => return bad(format!("L2 lambda {lambda} < 0")),
            Regularizer::Dropout { rates } if rates.iter().any(|r| !(0.0..1.0).contains(r)) => {
                return bad(format!("dropout rates {rates:?} must lie in [0, 1)"))
            }
            Regularizer::InputNoise { sigma } if sigma.is_nan() || *sigma < 0.0 => {
                return bad(format!("input noise sigma {sigma} < 0"))
            }
            _ => {}
        }
        if self.augmentation.noise_sigma.is_nan() || self.augmentation.noise_sigma < 0.0 {
            return bad("augmentation noise sigma < 0".into());
        }
        Ok(())
    }

    pub fn l2_lambda(&self) -> f64 {
        match self.regularizer {
            Regularizer::L2 { lambda } => lambda,
            _ => 0.0,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SnrError::Serialization(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| SnrError::Serialization(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub network: Network,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub epochs_completed: usize,
    pub final_loss: f64,
    pub config: TrainConfig,
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut SeededRng) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols).map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect();
    Matrix::from_vec_unchecked(rows, cols, data)
}

/// Zero each entry independently with probability `rate` and rescale the
/// survivors by `1/(1-rate)`.
pub fn apply_dropout_mask(activations: &Matrix, rate: f64, rng: &mut SeededRng) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SnrError::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if rate == 0.0 {
        return Ok(activations.clone());
    }
    let mask = dropout_mask(activations.rows(), activations.cols(), rate, rng);
    activations.zip_map(&mask, |a, m| a * m)
}

/// Fraction of samples whose arg-max output equals the label (ties go to
/// the lowest class index).
pub fn evaluate(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for range in crate::par::chunk_ranges(data.len(), 1000) {
        let out = predict(net, &data.inputs().row_range(range.clone()))?;
        correct += out
            .row_argmax()
            .iter()
            .zip(&data.labels()[range])
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

struct Streams {
    shuffle: SeededRng,
    dropout: SeededRng,
    noise: SeededRng,
}

fn sgd_loop<F>(net: &mut Network, samples: usize, cfg: &TrainConfig, mut batch_loss: F) -> Result<(usize, f64)>
where
    F: FnMut(&Network, &[usize], &mut Streams) -> Result<(f64, Gradients)>,
{
    cfg.validate()?;
    if samples == 0 {
        return Err(SnrError::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let root = SeededRng::new(cfg.seed);
    let mut streams = Streams {
        shuffle: root.split(1),
        dropout: root.split(2),
        noise: root.split(3),
    };
    let lambda = cfg.l2_lambda();
    let lr = cfg.learning_rate;
    let mut last_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let order = streams.shuffle.permutation(samples);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = batch_loss(net, idx, &mut streams)?;
            if !loss.is_finite() {
                return Err(SnrError::Divergence { epoch, batch: b, loss });
            }
            last_loss = loss;
            if lr == 0.0 {
                continue;
            }
            for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                let (Some(p), Some(g)) = (layer.params.as_mut(), g.as_ref()) else {
                    continue;
                };
                for (w, &dw) in p.weights.data_mut().iter_mut().zip(g.weights.data()) {
                    *w -= lr * (dw + 2.0 * lambda * *w);
                }
                for (bias, &db) in p.bias.iter_mut().zip(&g.bias) {
                    *bias -= lr * db;
                }
                if !p.weights.all_finite() {
                    return Err(SnrError::Divergence { epoch, batch: b, loss: f64::INFINITY });
                }
            }
        }
    }
    Ok((cfg.epochs, last_loss))
}

fn prepare_batch(data: &LabeledDataset, idx: &[usize], cfg: &TrainConfig, rng: &mut SeededRng) -> Result<Matrix> {
    let mut batch = data.subset(idx);
    if !cfg.augmentation.is_identity() {
        batch = augment_with_flip_probability(&batch, &cfg.augmentation, 0.5, rng)?;
    }
    let mut x = batch.inputs().clone();
    if let Regularizer::InputNoise { sigma } = cfg.regularizer {
        if sigma > 0.0 {
            let noise = gaussian_noise(x.rows(), x.cols(), sigma, rng)?;
            x.axpy(1.0, &noise)?;
        }
    }
    Ok(x)
}

/// Train a softmax classifier on mean cross-entropy.
pub fn train(net: Network, train_data: &LabeledDataset, test_data: Option<&LabeledDataset>, cfg: &TrainConfig) -> Result<TrainResult> {
    let mut net = net;
    if train_data.features() != net.input_len() {
        return Err(SnrError::shape(
            "train",
            format!("{} features vs network input {}", train_data.features(), net.input_len()),
        ));
    }
    let rates: Vec<f64> = match &cfg.regularizer {
        Regularizer::Dropout { rates } => rates.clone(),
        _ => Vec::new(),
    };
    let (epochs, final_loss) = sgd_loop(&mut net, train_data.len(), cfg, |net, idx, s| {
        let x = prepare_batch(train_data, idx, cfg, &mut s.noise)?;
        let labels: Vec<usize> = idx.iter().map(|&i| train_data.labels()[i]).collect();
        let plan = (!rates.is_empty()).then(|| DropoutPlan {
            rates: &rates,
            rng: &mut s.dropout,
        });
        let trace = forward_with_dropout(net, &x, plan)?;
        let loss = cross_entropy(trace.output(), &labels)?;
        let grads = backward(net, &trace, &labels)?;
        Ok((loss, grads))
    })?;
    let train_accuracy = evaluate(&net, train_data)?;
    let test_accuracy = test_data.map(|t| evaluate(&net, t)).transpose()?;
    Ok(TrainResult {
        network: net,
        train_accuracy,
        test_accuracy,
        epochs_completed: epochs,
        final_loss,
        config: cfg.clone(),
    })
}

/// Train on mean squared error `mean_n ½‖y_n − t_n‖²`; the network's last
/// layer should have an identity activation.
pub fn train_regression(net: Network, inputs: &Matrix, targets: &Matrix, cfg: &TrainConfig) -> Result<(Network, f64)> {
    let mut net = net;
    if targets.rows() != inputs.rows() || targets.cols() != net.output_len() {
        return Err(SnrError::shape(
            "train_regression",
            format!("targets {:?} for {} samples", targets.shape(), inputs.rows()),
        ));
    }
    let (_, loss) = sgd_loop(&mut net, inputs.rows(), cfg, |net, idx, _| {
        let x = inputs.select_rows(idx);
        let t = targets.select_rows(idx);
        let trace = forward_with_dropout(net, &x, None)?;
        let diff = trace.output().sub(&t)?;
        let n = idx.len() as f64;
        let loss = 0.5 * diff.data().iter().map(|d| d * d).sum::<f64>() / n;
        let grads = backward_from_output(net, &trace, &diff.scale(1.0 / n))?;
        Ok((loss, grads))
    })?;
    Ok((net, loss))
}

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Result, SnrError};
use crate::metrics::{analyze_network, MetricConfig};
use crate::nn::Architecture;
use crate::par::{map_indexed, with_workers, Execution};
use crate::rng::derive_seed;
use crate::training::{train, TrainConfig};

use super::data::DatasetId;
use super::stats::{fit_line, r_squared, spearman};

/// A run whose penultimate layer is active on more than this fraction of
/// samples is flagged as an outlier.
pub const OUTLIER_ACTIVITY: f64 = 0.9;

/// Fewest usable runs for which correlations are reported.
pub const MIN_RECORDS: usize = 10;

const INIT_STREAM: u64 = 0x1417;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedConfig {
    pub id: String,
    #[serde(flatten)]
    pub train: TrainConfig,
}

/// A grid of training configurations, each repeated with fresh seeds.
///
/// ```toml
/// architecture = "mnist-small"
/// dataset = "mnist"
/// runs_per_config = 4
/// seed = 7
/// train_samples = 8000
/// test_samples = 2000
///
/// [metric]
/// low_input_threshold = 0.01
///
/// [[configs]]
/// id = "plain"
/// epochs = 10
/// batch_size = 32
/// learning_rate = 0.05
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub architecture: Architecture,
    pub dataset: DatasetId,
    pub configs: Vec<NamedConfig>,
    pub runs_per_config: usize,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Test samples used for the SNR figures; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_samples: Option<usize>,
    #[serde(default)]
    pub metric: MetricConfig,
    /// Training epochs for each repetition index, overriding the configs'
    /// own `epochs`; gives every regime a spread of training budgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetition_epochs: Option<Vec<usize>>,
    /// Concurrent runs; 0 lets the thread pool decide.
    #[serde(default)]
    pub workers: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() || self.runs_per_config == 0 {
            return Err(SnrError::InvalidArgument("sweep has no runs".into()));
        }
        let mut ids: Vec<&str> = self.configs.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.configs.len() {
            return Err(SnrError::InvalidArgument("config ids must be unique".into()));
        }
        for c in &self.configs {
            c.train.validate()?;
        }
        if let Some(e) = &self.repetition_epochs {
            if e.len() != self.runs_per_config || e.contains(&0) {
                return Err(SnrError::InvalidArgument(format!(
                    "repetition_epochs needs {} positive entries",
                    self.runs_per_config
                )));
            }
        }
        self.metric.validate()
    }

    pub fn run_count(&self) -> usize {
        self.configs.len() * self.runs_per_config
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| SnrError::Format(format!("sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SnrError::Serialization(e.to_string()))
    }

    /// Seven regimes on the reduced MNIST network, four runs each with
    /// budgets of 5, 10, 20 and 40 epochs.
    pub fn default_mnist() -> Self {
        use crate::training::Regularizer;
        let base = TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let regimes = [
            ("plain", Regularizer::None),
            ("l2_1e-4", Regularizer::L2 { lambda: 1e-4 }),
            ("l2_1e-3", Regularizer::L2 { lambda: 1e-3 }),
            ("dropout_0.2", Regularizer::Dropout { rates: vec![0.2] }),
            ("dropout_0.5", Regularizer::Dropout { rates: vec![0.5] }),
            ("noise_0.1", Regularizer::InputNoise { sigma: 0.1 }),
            ("noise_0.3", Regularizer::InputNoise { sigma: 0.3 }),
        ];
        SweepSpec {
            architecture: Architecture::MnistSmall,
            dataset: DatasetId::Mnist,
            configs: regimes
                .into_iter()
                .map(|(id, regularizer)| NamedConfig {
                    id: id.to_string(),
                    train: TrainConfig {
                        regularizer,
                        ..base.clone()
                    },
                })
                .collect(),
            runs_per_config: 4,
            seed: 7,
            train_samples: 8000,
            test_samples: 2000,
            metric_samples: None,
            metric: MetricConfig::default(),
            repetition_epochs: Some(vec![5, 10, 20, 40]),
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub config_id: String,
    pub seed: u64,
    pub epochs: usize,
    pub test_acc: f64,
    /// Layer gains in weighted-layer order; `None` where undefined.
    pub g: Vec<Option<f64>>,
    /// Sum of the gains of all but the output layer.
    pub g_agg: Option<f64>,
    pub s: Vec<Option<f64>>,
    pub outlier_flag: bool,
    /// Mean output activation rate of the last hidden layer.
    pub penultimate_activity: f64,
    pub train_acc: f64,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn is_usable(&self) -> bool {
        self.status == RunStatus::Ok && self.g_agg.is_some() && self.g.iter().all(Option::is_some)
    }
}

fn run_one(
    spec: &SweepSpec,
    run_id: usize,
    train_data: &LabeledDataset,
    test_data: &LabeledDataset,
    metric_batch: &crate::tensor::Matrix,
) -> Result<RunRecord> {
    let named = &spec.configs[run_id / spec.runs_per_config];
    let seed = derive_seed(spec.seed, run_id as u64);
    let epochs = spec
        .repetition_epochs
        .as_ref()
        .map_or(named.train.epochs, |e| e[run_id % spec.runs_per_config]);
    let layers = spec.architecture.specs().iter().filter(|s| s.is_weighted()).count();
    let mut record = RunRecord {
        run_id,
        config_id: named.id.clone(),
        seed,
        epochs,
        test_acc: 0.0,
        g: vec![None; layers],
        g_agg: None,
        s: vec![None; layers],
        outlier_flag: false,
        penultimate_activity: 0.0,
        train_acc: 0.0,
        status: RunStatus::Ok,
    };
    let cfg = TrainConfig {
        seed,
        epochs,
        ..named.train.clone()
    };
    let net = spec.architecture.build(derive_seed(seed, INIT_STREAM));
    let result = match train(net, train_data, Some(test_data), &cfg) {
        Ok(r) => r,
        Err(e @ SnrError::Divergence { .. }) => {
            record.status = RunStatus::Failed(e.to_string());
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    record.test_acc = result.test_accuracy.unwrap_or(0.0);
    record.train_acc = result.train_accuracy;
    let metric = MetricConfig {
        execution: Execution::Sequential,
        ..spec.metric
    };
    let merits = analyze_network(&result.network, metric_batch, &metric)?;
    record.g = merits.iter().map(|m| m.mean_g).collect();
    record.s = merits.iter().map(|m| m.mean_s).collect();
    if layers >= 2 {
        record.g_agg = record.g[..layers - 1].iter().copied().sum();
        record.penultimate_activity = merits[layers - 2].mean_activity;
    }
    Ok(record)
}

/// Train and analyze every (config, repetition) pair. Run `i` uses seed
/// `derive_seed(spec.seed, i)`; records come back sorted by run id with
/// outliers flagged. A diverged run becomes a failed record.
pub fn run_sweep(spec: &SweepSpec, train_data: &LabeledDataset, test_data: &LabeledDataset) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let metric_rows = spec.metric_samples.unwrap_or(test_data.len()).min(test_data.len());
    let metric_batch = test_data.inputs().row_range(0..metric_rows);
    let runs = with_workers(spec.workers, || {
        map_indexed(spec.metric.execution, spec.run_count(), |i| {
            run_one(spec, i, train_data, test_data, &metric_batch)
        })
    });
    let mut records = runs.into_iter().collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.run_id);
    flag_outliers(&mut records);
    Ok(records)
}

/// Flag every record whose penultimate-layer activation rate exceeds
/// [`OUTLIER_ACTIVITY`], clearing the flag on the others.
pub fn flag_outliers(records: &mut [RunRecord]) {
    for r in records {
        r.outlier_flag = r.penultimate_activity > OUTLIER_ACTIVITY;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    /// `g_1` … `g_L` or `g_agg`.
    pub name: String,
    /// Spearman ρ and p over all usable runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// r² and the fit line over usable runs that are not outliers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    pub n_all: usize,
    pub n_without_outliers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config_id: String,
    pub runs: usize,
    pub mean_test_acc: f64,
    pub mean_g: Vec<f64>,
    pub mean_g_agg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub records: usize,
    pub usable: usize,
    pub failed: usize,
    pub outliers: usize,
    pub parameters: Vec<ParameterSummary>,
    pub configs: Vec<ConfigSummary>,
}

impl CorrelationSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SnrError::Serialization(e.to_string()))
    }
}

/// Named parameter columns of a record set: `g_1` … `g_L`, then `g_agg`.
pub fn parameter_values(records: &[&RunRecord]) -> Vec<(String, Vec<f64>)> {
    let layers = records.first().map_or(0, |r| r.g.len());
    let mut out: Vec<(String, Vec<f64>)> = (0..layers)
        .map(|l| {
            (
                format!("g_{}", l + 1),
                records.iter().map(|r| r.g[l].unwrap_or(f64::NAN)).collect(),
            )
        })
        .collect();
    out.push((
        "g_agg".into(),
        records.iter().map(|r| r.g_agg.unwrap_or(f64::NAN)).collect(),
    ));
    out
}

/// Correlate every gain parameter with test accuracy.
pub fn summarize(records: &[RunRecord]) -> Result<CorrelationSummary> {
    let usable: Vec<&RunRecord> = records.iter().filter(|r| r.is_usable()).collect();
    if usable.len() < MIN_RECORDS {
        return Err(SnrError::InvalidArgument(format!(
            "{} usable runs; correlations need at least {MIN_RECORDS}",
            usable.len()
        )));
    }
    if usable.iter().any(|r| r.g.len() != usable[0].g.len()) {
        return Err(SnrError::InvalidArgument("records differ in layer count".into()));
    }
    let inliers: Vec<&RunRecord> = usable.iter().copied().filter(|r| !r.outlier_flag).collect();
    let acc_all: Vec<f64> = usable.iter().map(|r| r.test_acc).collect();
    let acc_in: Vec<f64> = inliers.iter().map(|r| r.test_acc).collect();
    let in_values = parameter_values(&inliers);
    let parameters = parameter_values(&usable)
        .into_iter()
        .zip(in_values)
        .map(|((name, all), (_, inl))| {
            let sp = spearman(&all, &acc_all).ok();
            let r2 = r_squared(&inl, &acc_in).ok();
            let fit = fit_line(&inl, &acc_in).ok();
            ParameterSummary {
                name,
                rho: sp.map(|s| s.0),
                p_value: sp.map(|s| s.1),
                r_squared: r2,
                slope: fit.map(|f| f.0),
                intercept: fit.map(|f| f.1),
                n_all: all.len(),
                n_without_outliers: inl.len(),
            }
        })
        .collect();

    let mut config_ids: Vec<&str> = Vec::new();
    for r in &usable {
        if !config_ids.contains(&r.config_id.as_str()) {
            config_ids.push(&r.config_id);
        }
    }
    let configs = config_ids
        .into_iter()
        .map(|id| {
            let runs: Vec<&&RunRecord> = usable.iter().filter(|r| r.config_id == id).collect();
            let n = runs.len() as f64;
            let layers = runs[0].g.len();
            ConfigSummary {
                config_id: id.to_string(),
                runs: runs.len(),
                mean_test_acc: runs.iter().map(|r| r.test_acc).sum::<f64>() / n,
                mean_g: (0..layers)
                    .map(|l| runs.iter().map(|r| r.g[l].unwrap()).sum::<f64>() / n)
                    .collect(),
                mean_g_agg: runs.iter().map(|r| r.g_agg.unwrap()).sum::<f64>() / n,
            }
        })
        .collect();

    Ok(CorrelationSummary {
        records: records.len(),
        usable: usable.len(),
        failed: records.iter().filter(|r| r.status != RunStatus::Ok).count(),
        outliers: usable.len() - inliers.len(),
        parameters,
        configs,
    })
}

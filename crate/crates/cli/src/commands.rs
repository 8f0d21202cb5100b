use std::error::Error;
use std::path::{Path, PathBuf};

use serde::Serialize;
use snr_core::datasets::{LabeledDataset, SplitSpec};
use snr_core::experiment::{
    emit_report, load_split, read_records_csv, run_sweep, summarize, write_records_csv, DatasetId, SweepSpec,
};
use snr_core::metrics::{aggregate_gain, analyze_network, nodes_csv, prune_layer, MetricConfig, PruneSelection};
use snr_core::nn::{load_network, save_network, Architecture, LayerKind, Network};
use snr_core::training::{evaluate, train as train_network, TrainConfig};
use snr_core::SnrError;

use crate::{AnalyzeArgs, Arch, DataArgs, Dataset, MetricArgs, PruneArgs, ReportArgs, Selection, SweepArgs, TrainArgs};

type CmdResult = Result<Outcome, Box<dyn Error>>;

pub enum Outcome {
    Complete,
    /// Output was written but some figures are undefined or statistics
    /// could not be computed.
    Partial,
}

fn dataset_id(d: Dataset) -> DatasetId {
    match d {
        Dataset::Mnist => DatasetId::Mnist,
        Dataset::Cifar10 => DatasetId::Cifar10,
        Dataset::Synthetic => DatasetId::Synthetic,
    }
}

fn architecture(a: Arch) -> Architecture {
    match a {
        Arch::MnistSmall => Architecture::MnistSmall,
        Arch::MnistFull => Architecture::MnistFull,
        Arch::CifarSmall => Architecture::CifarSmall,
        Arch::CifarFull => Architecture::CifarFull,
        Arch::Toy => Architecture::Toy,
    }
}

fn default_architecture(d: DatasetId) -> Architecture {
    match d {
        DatasetId::Mnist => Architecture::MnistSmall,
        DatasetId::Cifar10 => Architecture::CifarSmall,
        DatasetId::Synthetic => Architecture::Toy,
    }
}

fn default_counts(d: DatasetId) -> (usize, usize) {
    match d {
        DatasetId::Mnist => (8000, 2000),
        DatasetId::Cifar10 => (10000, 2000),
        DatasetId::Synthetic => (4000, 1000),
    }
}

/// `<data_dir>/<dataset>` when it exists, else `data_dir` itself.
fn dataset_dir(id: DatasetId, data_dir: &Path) -> PathBuf {
    let names: &[&str] = match id {
        DatasetId::Mnist => &["mnist"],
        DatasetId::Cifar10 => &["cifar10", "cifar-10-batches-bin"],
        DatasetId::Synthetic => &[],
    };
    names
        .iter()
        .map(|n| data_dir.join(n))
        .find(|p| p.is_dir())
        .unwrap_or_else(|| data_dir.to_path_buf())
}

fn load_data(
    id: DatasetId,
    data_dir: &Path,
    seed: u64,
    train: Option<usize>,
    test: Option<usize>,
) -> Result<(LabeledDataset, LabeledDataset), SnrError> {
    let (dt, ds) = default_counts(id);
    let split = SplitSpec {
        train_count: train.unwrap_or(dt),
        test_count: test.unwrap_or(ds),
        seed,
    };
    eprintln!(
        "loading {} ({} train / {} test)",
        id.name(),
        split.train_count,
        split.test_count
    );
    load_split(id, &dataset_dir(id, data_dir), split)
}

fn load_args(d: &DataArgs) -> Result<(LabeledDataset, LabeledDataset), SnrError> {
    load_data(dataset_id(d.dataset), &d.data_dir, d.split_seed, d.train_samples, d.test_samples)
}

fn read_text(path: &Path) -> Result<String, SnrError> {
    std::fs::read_to_string(path).map_err(|e| SnrError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), SnrError> {
    std::fs::write(path, text).map_err(|e| SnrError::io(path, e))
}

fn check_inputs(net: &Network, data: &LabeledDataset) -> Result<(), SnrError> {
    if net.input_len() != data.features() || net.output_len() != data.class_count() {
        return Err(SnrError::InvalidArgument(format!(
            "network takes {} inputs and {} classes; dataset has {} features and {} classes",
            net.input_len(),
            net.output_len(),
            data.features(),
            data.class_count()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainReport<'a> {
    dataset: &'static str,
    architecture: Architecture,
    seed: u64,
    split_seed: u64,
    train_samples: usize,
    test_samples: usize,
    train_accuracy: f64,
    test_accuracy: f64,
    final_loss: f64,
    epochs_completed: usize,
    config: &'a TrainConfig,
}

pub fn train(a: TrainArgs) -> CmdResult {
    let id = dataset_id(a.data.dataset);
    let arch = a.arch.map_or(default_architecture(id), architecture);
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_toml(&read_text(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    cfg.seed = a.seed;
    cfg.validate()?;
    let (train_data, test_data) = load_args(&a.data)?;
    let net = arch.build(a.seed);
    check_inputs(&net, &train_data)?;
    eprintln!("training {arch:?} for {} epochs", cfg.epochs);
    let result = train_network(net, &train_data, Some(&test_data), &cfg)?;
    save_network(&result.network, &a.out)?;
    let report = TrainReport {
        dataset: id.name(),
        architecture: arch,
        seed: a.seed,
        split_seed: a.data.split_seed,
        train_samples: train_data.len(),
        test_samples: test_data.len(),
        train_accuracy: result.train_accuracy,
        test_accuracy: result.test_accuracy.unwrap_or(0.0),
        final_loss: result.final_loss,
        epochs_completed: result.epochs_completed,
        config: &result.config,
    };
    let report_path = sidecar(&a.out, "toml");
    write_text(&report_path, &toml::to_string(&report)?)?;
    println!("train_accuracy\t{}", result.train_accuracy);
    println!("test_accuracy\t{}", report.test_accuracy);
    Ok(Outcome::Complete)
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn metric_config(m: &MetricArgs) -> Result<MetricConfig, Box<dyn Error>> {
    let mut cfg: MetricConfig = match &m.metric_config {
        Some(p) => toml::from_str(&read_text(p)?)?,
        None => MetricConfig::default(),
    };
    if let Some(t) = m.threshold {
        cfg.low_input_threshold = t;
    }
    cfg.apply_max_scaling &= !m.no_scaling;
    cfg.apply_softmax_centering &= !m.no_centering;
    cfg.weighted_mean &= !m.unweighted;
    cfg.validate()?;
    Ok(cfg)
}

/// `"2"`, `"1..3"` or `"1-3"`.
fn parse_range(text: &str) -> Result<(usize, usize), SnrError> {
    let bad = || SnrError::InvalidArgument(format!("layer range {text:?} is not `m..n`"));
    let (a, b) = match text.split_once("..").or_else(|| text.split_once('-')) {
        Some((a, b)) => (a, b),
        None => (text, text),
    };
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

#[derive(Serialize)]
struct LayerRow {
    layer: usize,
    kind: &'static str,
    nodes: usize,
    defined_nodes: usize,
    mean_s: Option<f64>,
    mean_g: Option<f64>,
    mean_activity: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    samples: usize,
    metric: MetricConfig,
    layers: Vec<LayerRow>,
    range: (usize, usize),
    aggregate_g: Option<f64>,
}

fn layer_kind(net: &Network, position: usize) -> &'static str {
    let li = net.weighted_layer_indices()[position];
    match net.layers()[li].spec.kind {
        LayerKind::Conv { .. } => "conv",
        _ => "dense",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".to_string(), |x| format!("{x:.6}"))
}

pub fn analyze(a: AnalyzeArgs) -> CmdResult {
    let cfg = metric_config(&a.metric)?;
    let net = load_network(&a.network)?;
    let (_, test_data) = load_args(&a.data)?;
    check_inputs(&net, &test_data)?;
    let count = net.weighted_layer_count();
    let range = match &a.layers {
        Some(r) => parse_range(r)?,
        None => (1, count.saturating_sub(1).max(1)),
    };
    if range.0 == 0 || range.0 > range.1 || range.1 > count {
        return Err(Box::new(SnrError::InvalidArgument(format!(
            "layer range {}..{} outside 1..{count}",
            range.0, range.1
        ))));
    }
    let rows = a.samples.unwrap_or(test_data.len()).min(test_data.len());
    let batch = test_data.inputs().row_range(0..rows);
    eprintln!("analyzing {count} weighted layers over {rows} samples");
    let merits = analyze_network(&net, &batch, &cfg)?;
    let aggregate = aggregate_gain(&merits, range.0, range.1).ok();
    let layers: Vec<LayerRow> = merits
        .iter()
        .enumerate()
        .map(|(i, m)| LayerRow {
            layer: m.layer,
            kind: layer_kind(&net, i),
            nodes: m.nodes.len(),
            defined_nodes: m.defined_nodes(),
            mean_s: m.mean_s,
            mean_g: m.mean_g,
            mean_activity: m.mean_activity,
        })
        .collect();
    let partial = aggregate.is_none() || layers.iter().any(|l| l.mean_g.is_none());
    let report = AnalyzeReport {
        samples: rows,
        metric: cfg,
        layers,
        range,
        aggregate_g: aggregate,
    };
    write_text(&a.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if let Some(p) = &a.nodes_csv {
        write_text(p, &nodes_csv(&merits))?;
    }
    println!("layer\tkind\tnodes\tdefined\tmean_S\tmean_G\tactivity");
    for l in &report.layers {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}",
            l.layer,
            l.kind,
            l.nodes,
            l.defined_nodes,
            fmt_opt(l.mean_s),
            fmt_opt(l.mean_g),
            l.mean_activity
        );
    }
    println!("G[{}..{}]\t{}", range.0, range.1, fmt_opt(aggregate));
    Ok(if partial { Outcome::Partial } else { Outcome::Complete })
}

pub fn sweep(a: SweepArgs) -> CmdResult {
    let mut spec = match &a.spec {
        Some(p) => SweepSpec::from_toml(&read_text(p)?)?,
        None => SweepSpec::default_mnist(),
    };
    if let Some(w) = a.workers {
        spec.workers = w;
    }
    let (train_data, test_data) = load_data(
        spec.dataset,
        &a.data_dir,
        spec.seed,
        Some(spec.train_samples),
        Some(spec.test_samples),
    )?;
    eprintln!("sweep: {} runs", spec.run_count());
    let records = run_sweep(&spec, &train_data, &test_data)?;
    std::fs::create_dir_all(&a.out).map_err(|e| SnrError::io(&a.out, e))?;
    write_text(&a.out.join("spec.toml"), &spec.to_toml()?)?;
    match summarize(&records) {
        Ok(summary) => {
            emit_report(&summary, &records, &a.out)?;
            print_summary(&summary);
            Ok(Outcome::Complete)
        }
        Err(e) => {
            let mut buf = Vec::new();
            write_records_csv(&records, &mut buf)?;
            std::fs::write(a.out.join("records.csv"), buf).map_err(|e| SnrError::io(a.out.join("records.csv"), e))?;
            eprintln!("statistics not computed: {e}");
            Ok(Outcome::Partial)
        }
    }
}

fn print_summary(s: &snr_core::experiment::CorrelationSummary) {
    println!("param\trho\tp_value\tr_squared\tn");
    for p in &s.parameters {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            p.name,
            fmt_opt(p.rho),
            fmt_opt(p.p_value),
            fmt_opt(p.r_squared),
            p.n_all
        );
    }
}

pub fn prune(a: PruneArgs) -> CmdResult {
    let cfg = metric_config(&a.metric)?;
    let net = load_network(&a.network)?;
    let (train_data, test_data) = load_args(&a.data)?;
    check_inputs(&net, &test_data)?;
    let rows = a.samples.min(train_data.len());
    let batch = train_data.inputs().row_range(0..rows);
    let selection = match a.selection {
        Selection::Strongest => PruneSelection::Strongest,
        Selection::Weakest => PruneSelection::Weakest,
        Selection::Random => PruneSelection::Random { seed: a.seed },
    };
    let pruned = prune_layer(&net, a.layer, &batch, &cfg, a.keep, selection)?;
    let before = evaluate(&net, &test_data)?;
    let after = evaluate(&pruned, &test_data)?;
    save_network(&pruned, &a.out)?;
    println!("accuracy_before\t{before}");
    println!("accuracy_after\t{after}");
    Ok(Outcome::Complete)
}

pub fn report(a: ReportArgs) -> CmdResult {
    let file = std::fs::File::open(&a.records).map_err(|e| SnrError::io(&a.records, e))?;
    let records = read_records_csv(file)?;
    let summary = summarize(&records)?;
    emit_report(&summary, &records, &a.out)?;
    print_summary(&summary);
    Ok(Outcome::Complete)
}

//! Files written after a sweep.
//!
//! * `records.csv`: one row per run. Columns are `run_id, config_id, seed,
//!   test_acc, g_1 … g_L, g_agg, s_1 … s_L, outlier_flag`, followed by
//!   `epochs, penultimate_activity, train_acc, status`. Numbers use the shortest
//!   decimal form that parses back to the same bits; undefined values are
//!   empty fields.
//! * `summary.toml`: the [`CorrelationSummary`], including fit-line slope and
//!   intercept per parameter.
//! * `scatter_<param>.csv`: two columns, the parameter and test accuracy, for
//!   every usable run.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SnrError};

use super::sweep::{parameter_values, CorrelationSummary, RunRecord, RunStatus};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> SnrError {
    SnrError::Format(format!("records csv: {e}"))
}

pub fn write_records_csv(records: &[RunRecord], out: impl Write) -> Result<()> {
    let layers = records.first().map_or(0, |r| r.g.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["run_id", "config_id", "seed", "test_acc"].map(String::from).to_vec();
    header.extend((1..=layers).map(|l| format!("g_{l}")));
    header.push("g_agg".into());
    header.extend((1..=layers).map(|l| format!("s_{l}")));
    header.extend(["outlier_flag", "epochs", "penultimate_activity", "train_acc", "status"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        if r.g.len() != layers || r.s.len() != layers {
            return Err(SnrError::InvalidArgument("records differ in layer count".into()));
        }
        let mut row = vec![r.run_id.to_string(), r.config_id.clone(), r.seed.to_string(), r.test_acc.to_string()];
        row.extend(r.g.iter().map(|&v| opt(v)));
        row.push(opt(r.g_agg));
        row.extend(r.s.iter().map(|&v| opt(v)));
        row.push(r.outlier_flag.to_string());
        row.push(r.epochs.to_string());
        row.push(r.penultimate_activity.to_string());
        row.push(r.train_acc.to_string());
        row.push(match &r.status {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::Failed(msg) => format!("failed: {msg}"),
        });
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| SnrError::Format(e.to_string()))?;
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize) -> Result<&str> {
    rec.get(i)
        .ok_or_else(|| SnrError::Format(format!("records csv: missing column {i}")))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| SnrError::Format(format!("records csv: bad {what} value {s:?}")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, "number").map(Some)
    }
}

pub fn read_records_csv(input: impl Read) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let layers = header
        .iter()
        .filter(|h| h.starts_with("g_") && *h != "g_agg")
        .count();
    let expected = 4 + 2 * layers + 1 + 5;
    if header.len() != expected || field(&header, 0)? != "run_id" {
        return Err(SnrError::Format(format!(
            "records csv: unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let g = (0..layers)
            .map(|l| parse_opt(field(&rec, 4 + l)?))
            .collect::<Result<Vec<_>>>()?;
        let s0 = 5 + layers;
        let s = (0..layers)
            .map(|l| parse_opt(field(&rec, s0 + l)?))
            .collect::<Result<Vec<_>>>()?;
        let t = s0 + layers;
        let status = match field(&rec, t + 4)? {
            "ok" => RunStatus::Ok,
            other => RunStatus::Failed(other.strip_prefix("failed: ").unwrap_or(other).to_string()),
        };
        out.push(RunRecord {
            run_id: parse(field(&rec, 0)?, "run_id")?,
            config_id: field(&rec, 1)?.to_string(),
            seed: parse(field(&rec, 2)?, "seed")?,
            test_acc: parse(field(&rec, 3)?, "test_acc")?,
            g,
            g_agg: parse_opt(field(&rec, 4 + layers)?)?,
            s,
            outlier_flag: parse(field(&rec, t)?, "outlier_flag")?,
            epochs: parse(field(&rec, t + 1)?, "epochs")?,
            penultimate_activity: parse(field(&rec, t + 2)?, "penultimate_activity")?,
            train_acc: parse(field(&rec, t + 3)?, "train_acc")?,
            status,
        });
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| SnrError::io(path, e))
}

/// Write `records.csv`, `summary.toml` and the scatter files into `dir`,
/// creating it if needed.
pub fn emit_report(summary: &CorrelationSummary, records: &[RunRecord], dir: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(SnrError::InvalidArgument("no records to report".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| SnrError::io(dir, e))?;
    let mut csv_bytes = Vec::new();
    write_records_csv(records, &mut csv_bytes)?;
    write_file(&dir.join("records.csv"), &csv_bytes)?;
    write_file(&dir.join("summary.toml"), summary.to_toml()?.as_bytes())?;

    let usable: Vec<&RunRecord> = records.iter().filter(|r| r.is_usable()).collect();
    for (name, values) in parameter_values(&usable) {
        let mut text = format!("{name},test_acc\n");
        for (v, r) in values.iter().zip(&usable) {
            text.push_str(&format!("{v},{}\n", r.test_acc));
        }
        write_file(&dir.join(format!("scatter_{name}.csv")), text.as_bytes())?;
    }
    Ok(())
}

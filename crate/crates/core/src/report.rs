//! CSV and JSON emission for run records, summaries and curves.
//!
//! Everything written here is deterministic: floats use a fixed scientific
//! format, rows have a stable order and JSON object keys are sorted.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::arcgd::PhasePoint;
use crate::error::Result;
use crate::mlp::{AblationTable, CurvePoint};
use crate::rosenbrock::{RunRecord, RunSummary, TracePoint};

pub const RUN_HEADER: [&str; 8] = [
    "run",
    "optimizer",
    "converged",
    "iterations",
    "final_loss",
    "final_gradient_norm",
    "distance_to_minimum",
    "time_s",
];
pub const MLP_CURVE_HEADER: [&str; 4] = ["iteration", "train_loss", "train_acc", "test_acc"];
pub const TRACE_HEADER: [&str; 4] = ["iteration", "loss", "smoothed_loss", "grad_norm"];
pub const ABLATION_HEADER: [&str; 7] = [
    "arch",
    "checkpoint",
    "eta_low_a",
    "eta_low_b",
    "test_acc_a",
    "test_acc_b",
    "delta",
];
pub const PHASE_HEADER: [&str; 6] = [
    "gradient",
    "transformed",
    "high_term",
    "middle_term",
    "floor_term",
    "update",
];

/// Default trace subsampling interval.
pub const DEFAULT_TRACE_EVERY: u64 = 10;

/// Scientific notation with 10 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.9e}")
}

/// One parsed line of a run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: u64,
    pub optimizer: String,
    pub converged: bool,
    pub iterations: u64,
    pub final_loss: f64,
    pub final_gradient_norm: f64,
    pub distance_to_minimum: f64,
    pub time_s: f64,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        Self {
            run: r.run,
            optimizer: r.optimizer.clone(),
            converged: r.converged,
            iterations: r.iterations,
            final_loss: r.final_loss,
            final_gradient_norm: r.final_grad_norm,
            distance_to_minimum: r.distance_to_minimum,
            time_s: r.wall_time_s,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Rows sorted by run index, then optimizer name.
pub fn write_run_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (a.run, &a.optimizer).cmp(&(b.run, &b.optimizer)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_HEADER)?;
    for r in sorted {
        w.write_record([
            r.run.to_string(),
            r.optimizer.clone(),
            r.converged.to_string(),
            r.iterations.to_string(),
            fmt_float(r.final_loss),
            fmt_float(r.final_grad_norm),
            fmt_float(r.distance_to_minimum),
            fmt_float(r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_run_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_run_csv(create(path)?, records)
}

pub fn parse_run_csv<R: Read>(input: R) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Summary document: `{"metadata": ..., "summaries": [...]}` with sorted keys
/// and `null` for undefined averages.
pub fn summary_document(summaries: &[RunSummary], metadata: &Value) -> Result<Value> {
    let mut doc = serde_json::Map::new();
    doc.insert("metadata".into(), metadata.clone());
    doc.insert("summaries".into(), serde_json::to_value(summaries)?);
    // Round-trip through `Value` so nested objects use the sorted map.
    Ok(serde_json::from_str(&serde_json::to_string(
        &Value::Object(doc),
    )?)?)
}

pub fn write_summary_json<W: Write>(
    mut out: W,
    summaries: &[RunSummary],
    metadata: &Value,
) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &summary_document(summaries, metadata)?)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn emit_summary_json(path: &Path, summaries: &[RunSummary], metadata: &Value) -> Result<()> {
    write_summary_json(create(path)?, summaries, metadata)
}

#[derive(Debug, Deserialize)]
struct SummaryDocument {
    summaries: Vec<RunSummary>,
}

pub fn parse_summary_json<R: Read>(input: R) -> Result<Vec<RunSummary>> {
    let doc: SummaryDocument = serde_json::from_reader(input)?;
    Ok(doc.summaries)
}

pub fn write_mlp_curve_csv<W: Write>(out: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MLP_CURVE_HEADER)?;
    for p in points {
        w.write_record([
            p.iteration.to_string(),
            fmt_float(p.train_loss),
            fmt_float(p.train_acc),
            fmt_float(p.test_acc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_mlp_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    write_mlp_curve_csv(create(path)?, points)
}

pub fn parse_mlp_curve_csv<R: Read>(input: R) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Keeps every `k`-th iteration (and the first). `k = 1` keeps everything.
pub fn subsample(trace: &[TracePoint], k: u64) -> Vec<TracePoint> {
    let k = k.max(1);
    trace
        .iter()
        .enumerate()
        .filter(|(i, p)| *i == 0 || p.iteration % k == 0)
        .map(|(_, p)| *p)
        .collect()
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for p in trace {
        w.write_record([
            p.iteration.to_string(),
            fmt_float(p.loss),
            fmt_float(p.smoothed_loss),
            fmt_float(p.grad_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_trace_csv(path: &Path, trace: &[TracePoint]) -> Result<()> {
    write_trace_csv(create(path)?, trace)
}

pub fn parse_trace_csv<R: Read>(input: R) -> Result<Vec<TracePoint>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_ablation_csv<W: Write>(out: W, table: &AblationTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ABLATION_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.arch.clone(),
            r.checkpoint.to_string(),
            fmt_float(table.eta_low_a),
            fmt_float(table.eta_low_b),
            fmt_float(r.test_acc_a),
            fmt_float(r.test_acc_b),
            fmt_float(r.delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_ablation_csv(path: &Path, table: &AblationTable) -> Result<()> {
    write_ablation_csv(create(path)?, table)
}

pub fn write_phase_csv<W: Write>(out: W, points: &[PhasePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PHASE_HEADER)?;
    for p in points {
        w.write_record(
            [
                p.gradient,
                p.transformed,
                p.high_term,
                p.middle_term,
                p.floor_term,
                p.update,
            ]
            .map(fmt_float),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Drops the named column from every line of a CSV document, for comparing
/// files that differ only in timing.
pub fn strip_column(csv_text: &str, column: &str) -> io::Result<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = r.headers().map_err(io::Error::other)?.clone();
    let skip = headers.iter().position(|h| h == column);
    let keep = |rec: &csv::StringRecord| -> Vec<String> {
        rec.iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, f)| f.to_string())
            .collect()
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep(&headers)).map_err(io::Error::other)?;
    for rec in r.records() {
        w.write_record(keep(&rec.map_err(io::Error::other)?))
            .map_err(io::Error::other)?;
    }
    String::from_utf8(w.into_inner().map_err(io::Error::other)?).map_err(io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rosenbrock::RunStatus;

    fn record(run: u64, optimizer: &str, converged: bool) -> RunRecord {
        RunRecord {
            run,
            optimizer: optimizer.into(),
            converged,
            status: if converged {
                RunStatus::ConvergedTrue
            } else {
                RunStatus::FailedHighLoss
            },
            iterations: 1234 * run,
            final_loss: -3.25e-4,
            final_smoothed_loss: 1e-5,
            final_grad_norm: 0.012345678901,
            distance_to_minimum: 2.0 / 3.0,
            wall_time_s: 0.5 + run as f64,
        }
    }

    fn to_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn run_csv_shape_and_order() {
        let empty = to_string(|b| write_run_csv(b, &[]));
        assert_eq!(empty, format!("{}\n", RUN_HEADER.join(",")));

        let one = to_string(|b| write_run_csv(b, &[record(1, "ArcGD", true)]));
        assert_eq!(one.lines().count(), 2);
        assert!(one.lines().nth(1).unwrap().contains("-3.250000000e-4"));

        let records = [
            record(2, "ArcGD", true),
            record(1, "ArcGD", false),
            record(1, "ADAM", true),
        ];
        let text = to_string(|b| write_run_csv(b, &records));
        let rows = parse_run_csv(text.as_bytes()).unwrap();
        let order: Vec<_> = rows.iter().map(|r| (r.run, r.optimizer.as_str())).collect();
        assert_eq!(order, [(1, "ADAM"), (1, "ArcGD"), (2, "ArcGD")]);
        assert_eq!(text, to_string(|b| write_run_csv(b, &records)));
    }

    #[test]
    fn run_csv_round_trip() {
        let rec = record(3, "ADAM", true);
        let text = to_string(|b| write_run_csv(b, std::slice::from_ref(&rec)));
        let row = &parse_run_csv(text.as_bytes()).unwrap()[0];
        let orig = RunRow::from(&rec);
        assert_eq!(
            (row.run, &row.optimizer, row.converged, row.iterations),
            (orig.run, &orig.optimizer, orig.converged, orig.iterations)
        );
        for (a, b) in [
            (row.final_loss, orig.final_loss),
            (row.final_gradient_norm, orig.final_gradient_norm),
            (row.distance_to_minimum, orig.distance_to_minimum),
            (row.time_s, orig.time_s),
        ] {
            assert!((a - b).abs() <= 1e-9 * b.abs());
        }
    }

    #[test]
    fn summary_json_nulls_and_sorted_keys() {
        let s = RunSummary {
            test_set: "A50000".into(),
            optimizer: "ADAM".into(),
            total_runs: 3,
            converged_runs: 0,
            convergence_rate_pct: 0.0,
            avg_iterations: None,
            avg_time: None,
            avg_distance: None,
            avg_final_loss: None,
            avg_final_gradnorm: None,
        };
        let meta = serde_json::json!({"seed": 42, "config": "A"});
        let text = to_string(|b| write_summary_json(b, std::slice::from_ref(&s), &meta));
        assert!(text.contains("\"avg_iterations\": null"));
        let keys: Vec<usize> = [
            "avg_distance",
            "avg_final_gradnorm",
            "avg_iterations",
            "converged_runs",
            "test_set",
        ]
        .iter()
        .map(|k| text.find(&format!("\"{k}\"")).unwrap())
        .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(text.find("\"metadata\"").unwrap() < text.find("\"summaries\"").unwrap());
        assert_eq!(parse_summary_json(text.as_bytes()).unwrap(), vec![s]);
    }

    #[test]
    fn trace_csv_subsampling() {
        let trace: Vec<TracePoint> = (1..=25)
            .map(|i| TracePoint {
                iteration: i,
                loss: 1.0 / i as f64,
                smoothed_loss: 2.0 / i as f64,
                grad_norm: i as f64,
            })
            .collect();
        assert_eq!(subsample(&trace, 1), trace);
        let every10: Vec<u64> = subsample(&trace, 10).iter().map(|p| p.iteration).collect();
        assert_eq!(every10, [1, 10, 20]);
        let text = to_string(|b| write_trace_csv(b, &trace));
        assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
        let back = parse_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 25);
        assert!(back.windows(2).all(|w| w[0].iteration < w[1].iteration));
        assert!((back[2].loss - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn mlp_curve_round_trip() {
        let pts = vec![
            CurvePoint {
                iteration: 0,
                train_loss: 2.3,
                train_acc: 0.1,
                test_acc: 0.09,
            },
            CurvePoint {
                iteration: 100,
                train_loss: 1.7,
                train_acc: 0.4,
                test_acc: 0.35,
            },
        ];
        let text = to_string(|b| write_mlp_curve_csv(b, &pts));
        assert_eq!(
            text.lines().next().unwrap(),
            "iteration,train_loss,train_acc,test_acc"
        );
        assert_eq!(parse_mlp_curve_csv(text.as_bytes()).unwrap(), pts);
    }

    #[test]
    fn strip_time_column() {
        let text = to_string(|b| write_run_csv(b, &[record(1, "ArcGD", true)]));
        let stripped = strip_column(&text, "time_s").unwrap();
        assert!(!stripped.contains("time_s"));
        assert_eq!(stripped.lines().next().unwrap().split(',').count(), 7);
    }
}

//! Run reports, prediction dumps, cross-cell aggregation, and the
//! dump-check verifier.
//!
//! Reports are deterministic JSON (timing lives in a separate sidecar so
//! identical runs produce identical report bytes). Dumps are CSV rows of
//! `id,y,z,y_hat,method,seed,repeat` — enough to recompute every test-set
//! metric from scratch, which is exactly what [`dump_check`] does.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::RecordId;
use crate::error::{Error, Result};
use crate::harness::config::Method;
use crate::metrics::{classification_report, LabeledOutcomes, MetricsBundle};
use crate::predictor::PredictedLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub n_test: usize,
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub alpha: f64,
    pub rho: f64,
    pub vote_k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallReport {
    pub selection_calls: u64,
    pub inference_calls: u64,
    pub cache_hits: u64,
    /// Prediction calls spent selecting, per batch (zero for baselines).
    pub per_batch_selection: Vec<u64>,
    /// Selection plus final-inference prediction calls, per batch.
    pub per_batch_total: Vec<u64>,
}

/// Everything recorded for one (seed, repeat, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    pub repeat: usize,
    pub backend_id: String,
    pub params: ReportParams,
    pub overall: MetricsBundle,
    pub per_batch: Vec<MetricsBundle>,
    /// In-context example ids used per batch (the selected demonstration
    /// set for the selection method, the sampled/retrieved ids for the
    /// baselines, empty for zero-shot).
    pub ice_sets: Vec<Vec<RecordId>>,
    pub dump_file: String,
    pub calls: CallReport,
}

pub fn cell_stem(method: Method, seed: u64, repeat: usize) -> String {
    format!("{}_seed{seed}_rep{repeat}", method.name())
}

pub fn report_path(out_dir: &Path, stem: &str) -> PathBuf {
    out_dir.join("reports").join(format!("report_{stem}.json"))
}

pub fn dump_path(out_dir: &Path, stem: &str) -> PathBuf {
    out_dir.join("dumps").join(format!("dump_{stem}.csv"))
}

pub fn trace_path(out_dir: &Path, stem: &str, batch: usize) -> PathBuf {
    out_dir.join("traces").join(format!("trace_{stem}_batch{batch}.json"))
}

pub fn write_report(out_dir: &Path, report: &RunReport) -> Result<PathBuf> {
    let path = report_path(out_dir, &cell_stem(report.method, report.seed, report.repeat));
    let json =
        serde_json::to_string_pretty(report).map_err(|e| Error::Invariant(e.to_string()))?;
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

/// Reads every report under `out_dir/reports`, sorted by file name.
pub fn read_reports(out_dir: &Path) -> Result<Vec<RunReport>> {
    let dir = out_dir.join("reports");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::Config(format!("reading {dir:?}: {e}")))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    let mut reports = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let report: RunReport = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(Error::Config(format!("no reports found under {dir:?}")));
    }
    Ok(reports)
}

/// One prediction-dump row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpRow {
    pub id: RecordId,
    pub y: u8,
    pub z: u8,
    pub y_hat: PredictedLabel,
    pub method: Method,
    pub seed: u64,
    pub repeat: usize,
}

pub fn write_dump(path: &Path, rows: &[DumpRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["id", "y", "z", "y_hat", "method", "seed", "repeat"])?;
    for row in rows {
        writer.write_record([
            row.id.to_string(),
            row.y.to_string(),
            row.z.to_string(),
            row.y_hat.to_string(),
            row.method.name().to_string(),
            row.seed.to_string(),
            row.repeat.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<Vec<DumpRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::Config(format!("{path:?}: short row")))
        };
        rows.push(DumpRow {
            id: RecordId(
                field(0)?
                    .parse()
                    .map_err(|e| Error::Config(format!("{path:?}: id: {e}")))?,
            ),
            y: field(1)?
                .parse()
                .map_err(|e| Error::Config(format!("{path:?}: y: {e}")))?,
            z: field(2)?
                .parse()
                .map_err(|e| Error::Config(format!("{path:?}: z: {e}")))?,
            y_hat: field(3)?.parse()?,
            method: field(4)?.parse()?,
            seed: field(5)?
                .parse()
                .map_err(|e| Error::Config(format!("{path:?}: seed: {e}")))?,
            repeat: field(6)?
                .parse()
                .map_err(|e| Error::Config(format!("{path:?}: repeat: {e}")))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

fn stat(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt()
    };
    Stat { mean, sd }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub cells: usize,
    pub accuracy: Stat,
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
    pub pi: Stat,
    pub psi: Stat,
    pub kappa: Stat,
    pub e: Stat,
    /// Batches whose fairness error was degenerate (single-group).
    pub degenerate_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub dataset: String,
    pub methods: Vec<MethodSummary>,
}

/// Mean and standard deviation per (method, metric) across all
/// (seed, repeat) cells.
pub fn aggregate(reports: &[RunReport]) -> Result<AggregateSummary> {
    if reports.is_empty() {
        return Err(Error::Argument("aggregate needs at least one report".into()));
    }
    let dataset = reports[0].dataset.clone();
    let mut methods = Vec::new();
    for method in Method::all() {
        let cells: Vec<&RunReport> = reports.iter().filter(|r| r.method == method).collect();
        if cells.is_empty() {
            continue;
        }
        let pick = |f: fn(&MetricsBundle) -> f64| -> Stat {
            stat(&cells.iter().map(|r| f(&r.overall)).collect::<Vec<_>>())
        };
        methods.push(MethodSummary {
            method,
            cells: cells.len(),
            accuracy: pick(|b| b.accuracy),
            precision: pick(|b| b.precision),
            recall: pick(|b| b.recall),
            f1: pick(|b| b.f1),
            pi: pick(|b| b.pi),
            psi: pick(|b| b.psi),
            kappa: pick(|b| b.kappa),
            e: pick(|b| b.e),
            degenerate_batches: cells
                .iter()
                .map(|r| r.per_batch.iter().filter(|b| b.degenerate_group).count())
                .sum(),
        });
    }
    Ok(AggregateSummary { dataset, methods })
}

impl AggregateSummary {
    /// Fixed-width text table, one row per method, mean±sd per metric.
    pub fn to_table(&self) -> String {
        let mut out = format!("dataset: {}\n", self.dataset);
        out.push_str(&format!(
            "{:<12} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
            "method", "accuracy", "precision", "recall", "f1", "pi", "psi", "kappa", "e"
        ));
        for m in &self.methods {
            let cell = |s: &Stat| format!("{:.3}±{:.3}", s.mean, s.sd);
            out.push_str(&format!(
                "{:<12} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
                m.method.name(),
                cell(&m.accuracy),
                cell(&m.precision),
                cell(&m.recall),
                cell(&m.f1),
                cell(&m.pi),
                cell(&m.psi),
                cell(&m.kappa),
                cell(&m.e),
            ));
        }
        let degenerate: usize = self.methods.iter().map(|m| m.degenerate_batches).sum();
        if degenerate > 0 {
            out.push_str(&format!(
                "note: {degenerate} batch(es) had a single-group fairness denominator\n"
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpCheckOutcome {
    pub cells_checked: usize,
    pub mismatches: Vec<String>,
}

impl DumpCheckOutcome {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes every report's test-set metrics from its CSV dump alone and
/// diffs them against the stored bundle. Any difference is an integrity
/// failure.
pub fn dump_check(out_dir: &Path) -> Result<DumpCheckOutcome> {
    let reports = read_reports(out_dir)?;
    let mut mismatches = Vec::new();
    for report in &reports {
        let stem = cell_stem(report.method, report.seed, report.repeat);
        let dump = out_dir.join(&report.dump_file);
        let rows = read_dump(&dump)?;
        if rows.len() != report.params.n_test {
            mismatches.push(format!(
                "{stem}: dump has {} rows, expected {}",
                rows.len(),
                report.params.n_test
            ));
            continue;
        }
        if rows.iter().any(|r| {
            r.method != report.method || r.seed != report.seed || r.repeat != report.repeat
        }) {
            mismatches.push(format!("{stem}: dump rows tagged with a different cell"));
            continue;
        }
        let outcomes = LabeledOutcomes::new(
            rows.iter().map(|r| r.y).collect(),
            rows.iter().map(|r| r.y_hat).collect(),
            rows.iter().map(|r| r.z).collect(),
        )?;
        let recomputed =
            classification_report(&outcomes, report.params.alpha, report.params.rho)?;
        if recomputed != report.overall {
            mismatches.push(format!(
                "{stem}: recomputed metrics differ from report (recomputed e={}, reported e={})",
                recomputed.e, report.overall.e
            ));
        }
    }
    Ok(DumpCheckOutcome {
        cells_checked: reports.len(),
        mismatches,
    })
}

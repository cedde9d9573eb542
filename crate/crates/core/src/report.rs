//! Run artifacts: the JSON report, the results table row, stage timings and
//! the CSV sidecars that let stages be run separately.
//!
//! `report.json` holds only seed-determined content, so identical inputs give
//! byte-identical reports regardless of thread count. Wall-clock figures go
//! to `results.csv` and `timing.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boruta::{BorutaResult, FeatureStatus, StatusCounts};
use crate::data::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::learners::ModelSummary;
use crate::pipeline::{CurvePoint, FeatureRanking, PipelineConfig, SelectionResult, Timing};

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_HEADER: [&str; 12] = [
    "id", "dataset", "classes", "method", "samples", "top_k", "acc", "prec", "rec", "f1", "train_s", "select_s",
];

pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const BORUTA_FILE: &str = "boruta.csv";
pub const BORUTA_SUMMARY_FILE: &str = "boruta_summary.csv";
pub const RANKING_FILE: &str = "ranking.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRef {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub index: usize,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorutaSection {
    #[serde(flatten)]
    pub counts: StatusCounts,
    pub iterations_run: usize,
    pub confirmed_features: Vec<FeatureRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSection {
    /// Training rows of the first (or only) split.
    pub n_train: usize,
    /// Held-out rows summed over folds.
    pub n_test: usize,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub dataset: DatasetMeta,
    pub method: String,
    pub config: PipelineConfig,
    pub partition: PartitionSection,
    pub boruta: BorutaSection,
    pub ranking: Vec<RankedFeature>,
    pub curve: Vec<CurvePoint>,
    pub k_star: usize,
    pub best_accuracy: f64,
    pub best: MetricsReport,
    pub selected: Vec<FeatureRef>,
    pub model: ModelSummary,
    pub eval_seed: u64,
}

fn feature_ref(ds: &Dataset, index: usize) -> FeatureRef {
    FeatureRef {
        index,
        name: ds.feature_names[index].clone(),
    }
}

pub fn build_report(ds: &Dataset, config: &PipelineConfig, boruta: &BorutaResult, sel: &SelectionResult) -> Report {
    let n_test: usize = sel.partition.iter().map(|p| p.test.len()).sum();
    Report {
        schema_version: SCHEMA_VERSION,
        dataset: ds.meta(),
        method: config.eval_classifier.method().to_string(),
        config: config.clone(),
        partition: PartitionSection {
            n_train: sel.partition.first().map_or(0, |p| p.train.len()),
            n_test,
            folds: sel.partition.len(),
        },
        boruta: BorutaSection {
            counts: boruta.counts(),
            iterations_run: boruta.iterations_run,
            confirmed_features: boruta.confirmed().into_iter().map(|i| feature_ref(ds, i)).collect(),
        },
        ranking: sel
            .ranking
            .features
            .iter()
            .zip(&sel.ranking.scores)
            .enumerate()
            .map(|(r, (&index, &score))| RankedFeature {
                rank: r + 1,
                index,
                name: ds.feature_names[index].clone(),
                score,
            })
            .collect(),
        curve: sel.curve.clone(),
        k_star: sel.k_star,
        best_accuracy: sel.best_accuracy,
        best: sel.best_metrics().clone(),
        selected: sel.selected.iter().map(|&i| feature_ref(ds, i)).collect(),
        model: sel.model.summary(),
        eval_seed: sel.eval_seed,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Csv {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path.as_ref())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: Report = serde_json::from_str(&text)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(artifact(
            "report",
            path,
            format!("unsupported schema version {}", report.schema_version),
        ));
    }
    Ok(report)
}

pub fn write_timing(timing: &Timing, path: impl AsRef<Path>) -> Result<()> {
    write_json(timing, path.as_ref())
}

pub fn read_timing(path: impl AsRef<Path>) -> Result<Timing> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub id: usize,
    pub dataset: String,
    pub classes: usize,
    pub method: String,
    pub samples: usize,
    pub top_k: usize,
    pub metrics: MetricsReport,
    pub train_s: f64,
    pub select_s: f64,
}

impl ResultsRow {
    pub fn new(id: usize, report: &Report, timing: &Timing) -> Self {
        Self {
            id,
            dataset: report.dataset.name.clone(),
            classes: report.dataset.classes,
            method: report.method.clone(),
            samples: report.dataset.samples,
            top_k: report.k_star,
            metrics: report.best.clone(),
            train_s: timing.train_s,
            select_s: timing.selection_s(),
        }
    }

    fn record(&self) -> Vec<String> {
        let m = &self.metrics;
        vec![
            self.id.to_string(),
            self.dataset.clone(),
            self.classes.to_string(),
            self.method.clone(),
            self.samples.to_string(),
            self.top_k.to_string(),
            format!("{:.3}", m.accuracy),
            format!("{:.3}", m.precision),
            format!("{:.3}", m.recall),
            format!("{:.3}", m.f1),
            format!("{:.3}", self.train_s),
            format!("{:.3}", self.select_s),
        ]
    }
}

pub fn write_results(rows: &[ResultsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(RESULTS_HEADER).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.record()).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Paths of everything [`emit_report`] writes.
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub results: PathBuf,
    pub timing: PathBuf,
}

/// Writes `report.json`, `results.csv` and `timing.json` into `dir`.
pub fn emit_report(
    ds: &Dataset,
    config: &PipelineConfig,
    boruta: &BorutaResult,
    sel: &SelectionResult,
    dir: impl AsRef<Path>,
) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        report: dir.join(REPORT_FILE),
        results: dir.join(RESULTS_FILE),
        timing: dir.join(TIMING_FILE),
    };
    let report = build_report(ds, config, boruta, sel);
    write_report(&report, &files.report)?;
    write_results(&[ResultsRow::new(1, &report, &sel.timing)], &files.results)?;
    write_timing(&sel.timing, &files.timing)?;
    Ok(files)
}

fn artifact(what: &'static str, path: &Path, message: impl Into<String>) -> Error {
    Error::Artifact {
        what,
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BorutaRow {
    feature_index: usize,
    feature_name: String,
    status: String,
    hits: u64,
    trials: u64,
}

/// Per-feature Boruta outcome: `feature_index,feature_name,status,hits,trials`.
pub fn write_boruta(ds: &Dataset, result: &BorutaResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if result.status.len() != ds.n_features() {
        return Err(Error::Shape(format!(
            "{} statuses for {} features",
            result.status.len(),
            ds.n_features()
        )));
    }
    let mut w = csv_writer(path)?;
    for j in 0..ds.n_features() {
        w.serialize(BorutaRow {
            feature_index: j,
            feature_name: ds.feature_names[j].clone(),
            status: result.status[j].as_str().to_string(),
            hits: result.hits[j],
            trials: result.trials[j],
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a Boruta sidecar back, checking it against `ds`'s feature names.
/// Thresholds and elapsed time are not stored per feature and come back
/// empty; `iterations_run` is the largest trial count.
pub fn read_boruta(ds: &Dataset, path: impl AsRef<Path>) -> Result<BorutaResult> {
    let path = path.as_ref();
    let mut r = csv_reader(path)?;
    let (mut status, mut hits, mut trials) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in r.deserialize::<BorutaRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if row.feature_index != i || ds.feature_names.get(i) != Some(&row.feature_name) {
            return Err(artifact(
                "boruta",
                path,
                format!(
                    "row {} ('{}') does not match the dataset's feature {i}",
                    i + 1,
                    row.feature_name
                ),
            ));
        }
        if row.hits > row.trials {
            return Err(artifact(
                "boruta",
                path,
                format!("feature '{}' has hits > trials", row.feature_name),
            ));
        }
        status.push(
            row.status
                .parse::<FeatureStatus>()
                .map_err(|m| artifact("boruta", path, m))?,
        );
        hits.push(row.hits);
        trials.push(row.trials);
    }
    if status.len() != ds.n_features() {
        return Err(artifact(
            "boruta",
            path,
            format!("{} rows for {} features", status.len(), ds.n_features()),
        ));
    }
    Ok(BorutaResult {
        status,
        iterations_run: trials.iter().copied().max().unwrap_or(0) as usize,
        hits,
        trials,
        shadow_thresholds: Vec::new(),
        elapsed_s: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorutaSummaryRow {
    pub dataset: String,
    pub confirmed: usize,
    pub tentative: usize,
    pub rejected: usize,
    pub iterations: usize,
    pub time_s: f64,
}

impl BorutaSummaryRow {
    pub fn new(ds: &Dataset, result: &BorutaResult) -> Self {
        let c = result.counts();
        Self {
            dataset: ds.name.clone(),
            confirmed: c.confirmed,
            tentative: c.tentative,
            rejected: c.rejected,
            iterations: result.iterations_run,
            time_s: result.elapsed_s,
        }
    }
}

pub fn write_boruta_summary(row: &BorutaSummaryRow, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.serialize(row).map_err(|e| csv_error(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_boruta_summary(path: impl AsRef<Path>) -> Result<BorutaSummaryRow> {
    let path = path.as_ref();
    let mut r = csv_reader(path)?;
    r.deserialize()
        .next()
        .ok_or_else(|| artifact("boruta summary", path, "no data row"))?
        .map_err(|e| csv_error(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct RankingRow {
    feature_name: String,
    score: f64,
    rank: usize,
}

/// `feature_name,score,rank`, best first, scores at full precision.
pub fn write_ranking(ds: &Dataset, ranking: &FeatureRanking, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for (r, (&j, &score)) in ranking.features.iter().zip(&ranking.scores).enumerate() {
        w.serialize(RankingRow {
            feature_name: ds.feature_names[j].clone(),
            score,
            rank: r + 1,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Maps names back to `ds`'s column indices. Ranks must run 1, 2, ... in
/// file order and names must be distinct.
pub fn read_ranking(ds: &Dataset, path: impl AsRef<Path>) -> Result<FeatureRanking> {
    let path = path.as_ref();
    let index: std::collections::HashMap<&str, usize> = ds
        .feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut seen = vec![false; ds.n_features()];
    let mut out = FeatureRanking {
        features: Vec::new(),
        scores: Vec::new(),
    };
    let mut r = csv_reader(path)?;
    for (i, row) in r.deserialize::<RankingRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let &j = index
            .get(row.feature_name.as_str())
            .ok_or_else(|| artifact("ranking", path, format!("unknown feature '{}'", row.feature_name)))?;
        if row.rank != i + 1 {
            return Err(artifact(
                "ranking",
                path,
                format!("expected rank {} at row {}, got {}", i + 1, i + 1, row.rank),
            ));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(artifact(
                "ranking",
                path,
                format!("feature '{}' listed twice", row.feature_name),
            ));
        }
        out.features.push(j);
        out.scores.push(row.score);
    }
    if out.is_empty() {
        return Err(artifact("ranking", path, "no features"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::run_bolimes;
    use crate::synth::{synthesize, SyntheticSpec};

    fn small_run() -> (Dataset, PipelineConfig, crate::pipeline::BolimesRun) {
        let ds = synthesize(&SyntheticSpec {
            n_samples: 60,
            n_informative: 3,
            n_noise: 12,
            n_classes: 2,
            class_separation: 3.0,
            seed: 5,
        })
        .unwrap()
        .dataset;
        let mut config = PipelineConfig::new(5);
        config.boruta.n_estimators = 50;
        config.boruta.max_iter = 20;
        config.lime.n_perturbations = 200;
        config.k_min = 1;
        if let crate::pipeline::EvalClassifier::Forest(p) = &mut config.eval_classifier {
            p.n_estimators = 20;
        }
        let run = run_bolimes(&ds, &config).unwrap();
        (ds, config, run)
    }

    #[test]
    fn report_round_trips() {
        let (ds, config, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&ds, &config, &run.boruta, &run.selection, dir.path()).unwrap();
        let back = read_report(&files.report).unwrap();
        assert_eq!(back, build_report(&ds, &config, &run.boruta, &run.selection));
        assert_eq!(read_timing(&files.timing).unwrap(), run.selection.timing);

        let text = std::fs::read_to_string(&files.results).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER.join(","));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 12);
        for cell in &row[6..10] {
            assert_eq!(cell.split('.').nth(1).unwrap().len(), 3, "{cell}");
        }
        assert!(lines.next().is_none());
    }

    #[test]
    fn sidecars_round_trip() {
        let (ds, _, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let b = dir.path().join(BORUTA_FILE);
        write_boruta(&ds, &run.boruta, &b).unwrap();
        let back = read_boruta(&ds, &b).unwrap();
        assert_eq!(back.status, run.boruta.status);
        assert_eq!(back.hits, run.boruta.hits);
        assert_eq!(back.iterations_run, run.boruta.iterations_run);

        let s = dir.path().join(BORUTA_SUMMARY_FILE);
        let row = BorutaSummaryRow::new(&ds, &run.boruta);
        write_boruta_summary(&row, &s).unwrap();
        assert_eq!(read_boruta_summary(&s).unwrap(), row);

        let r = dir.path().join(RANKING_FILE);
        write_ranking(&ds, &run.selection.ranking, &r).unwrap();
        assert_eq!(read_ranking(&ds, &r).unwrap(), run.selection.ranking);
    }

    #[test]
    fn malformed_sidecars_are_rejected() {
        let (ds, _, _) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path().join("r.csv");
        std::fs::write(&r, "feature_name,score,rank\nnope,1.0,1\n").unwrap();
        assert!(matches!(read_ranking(&ds, &r), Err(Error::Artifact { .. })));
        std::fs::write(&r, "feature_name,score,rank\nf0,1.0,2\n").unwrap();
        assert!(matches!(read_ranking(&ds, &r), Err(Error::Artifact { .. })));
        std::fs::write(&r, "feature_name,score,rank\n").unwrap();
        assert!(matches!(read_ranking(&ds, &r), Err(Error::Artifact { .. })));
        let b = dir.path().join("b.csv");
        std::fs::write(
            &b,
            "feature_index,feature_name,status,hits,trials\n0,f0,Confirmed,3,2\n",
        )
        .unwrap();
        assert!(matches!(read_boruta(&ds, &b), Err(Error::Artifact { .. })));
        assert!(matches!(
            read_boruta(&ds, dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let (ds, config, run) = small_run();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = emit_report(&ds, &config, &run.boruta, &run.selection, blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}

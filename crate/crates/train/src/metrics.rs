//! Accuracy summaries, per-epoch records and their on-disk forms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result, TrainError};

/// Accuracies in percent; `variance` is the generalisation gap
/// `training - validation`, not a statistical variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub validation_accuracy: f64,
    pub training_accuracy: f64,
    pub variance: f64,
}

impl Metrics {
    pub fn new(training_accuracy: f64, validation_accuracy: f64) -> Self {
        Self {
            validation_accuracy,
            training_accuracy,
            variance: training_accuracy - validation_accuracy,
        }
    }
}

/// Percentage of `predicted` equal to `labels`.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(config(format!("{} predictions for {} labels", predicted.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(config("accuracy over zero samples"));
    }
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_accuracy: Option<f64>,
}

impl EpochRecord {
    pub fn new(phase: &str, epoch: usize) -> Self {
        Self {
            phase: phase.into(),
            epoch,
            ..Self::default()
        }
    }

    /// Metrics of this epoch when both accuracies were measured.
    pub fn metrics(&self) -> Option<Metrics> {
        Some(Metrics::new(self.train_accuracy?, self.valid_accuracy?))
    }
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    phase: &'a str,
    epoch: usize,
    seconds: f64,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";

/// Sink for epoch records. Wall time goes to a separate file so the metrics
/// file depends only on the configuration.
pub struct MetricsLog {
    files: Option<(BufWriter<File>, BufWriter<File>)>,
    last: Instant,
}

impl MetricsLog {
    /// Keeps nothing.
    pub fn discard() -> Self {
        Self { files: None, last: Instant::now() }
    }

    /// Truncates `metrics.jsonl` and `timing.jsonl` under `dir`.
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        Ok(Self {
            files: Some((open(METRICS_FILE)?, open(TIMING_FILE)?)),
            last: Instant::now(),
        })
    }

    pub fn record(&mut self, rec: &EpochRecord) -> Result<()> {
        let seconds = self.last.elapsed().as_secs_f64();
        self.last = Instant::now();
        if let Some((metrics, timing)) = &mut self.files {
            writeln!(metrics, "{}", serde_json::to_string(rec)?)?;
            let t = TimingRecord { phase: &rec.phase, epoch: rec.epoch, seconds };
            writeln!(timing, "{}", serde_json::to_string(&t)?)?;
            metrics.flush()?;
            timing.flush()?;
        }
        Ok(())
    }
}

/// Reads back a `metrics.jsonl` file.
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(TrainError::from))
        .collect()
}

pub const CSV_HEADER: &str = "model,validation,training,variance";

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub metrics: Metrics,
}

impl SummaryRow {
    /// Values use the shortest exact decimal form, so the variance column
    /// re-reads as exactly training minus validation.
    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        format!("{},{},{},{}", self.model, m.validation_accuracy, m.training_accuracy, m.variance)
    }

    pub fn parse(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        let [model, v, t, var] = cols[..] else {
            return Err(config(format!("summary row needs 4 columns: {line:?}")));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| config(format!("summary row: bad number {s:?}")));
        Ok(Self {
            model: model.into(),
            metrics: Metrics {
                validation_accuracy: num(v)?,
                training_accuracy: num(t)?,
                variance: num(var)?,
            },
        })
    }
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(config(format!("summary table must start with {CSV_HEADER:?}")));
    }
    lines.filter(|l| !l.trim().is_empty()).map(SummaryRow::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_is_the_gap() {
        let m = Metrics::new(97.04, 95.62);
        assert_eq!(m.variance, 97.04 - 95.62);
    }

    #[test]
    fn accuracy_counts_hits() {
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 100.0);
        assert_eq!(accuracy(&[0, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 75.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn records_omit_missing_fields() {
        let mut r = EpochRecord::new("generator", 2);
        r.valid_loss = Some(0.5);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"phase":"generator","epoch":2,"valid_loss":0.5}"#);
        assert_eq!(r.metrics(), None);
        assert_eq!(serde_json::from_str::<EpochRecord>(&s).unwrap(), r);
    }

    #[test]
    fn summary_roundtrip_keeps_exact_gap() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            SummaryRow { model: "rc3d-rgb".into(), metrics: Metrics::new(100.0 / 3.0, 200.0 / 7.0) },
            SummaryRow { model: "c3d".into(), metrics: Metrics::new(62.5, 50.0) },
        ];
        write_summary(dir.path().join("s.csv"), &rows).unwrap();
        let back = read_summary(dir.path().join("s.csv")).unwrap();
        assert_eq!(back, rows);
        for r in back {
            assert_eq!(r.metrics.variance, r.metrics.training_accuracy - r.metrics.validation_accuracy);
        }
    }

    #[test]
    fn log_splits_timing_from_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = MetricsLog::create(dir.path()).unwrap();
        log.record(&EpochRecord { train_accuracy: Some(10.0), ..EpochRecord::new("classifier", 0) }).unwrap();
        drop(log);
        let m = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert!(!m.contains("seconds"));
        let t = std::fs::read_to_string(dir.path().join(TIMING_FILE)).unwrap();
        assert!(t.contains("seconds"));
        assert_eq!(read_metrics(dir.path().join(METRICS_FILE)).unwrap().len(), 1);
    }
}

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub elimination_rate: f64,
    pub mi_bound: f64,
    /// Present on steps that close a probed epoch.
    pub knn_acc: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header { config: serde_json::Value },
    Step(MetricRecord),
}

/// Append-only JSON-lines metrics file: one header line carrying the run
/// configuration, then one line per step with strictly increasing `step`.
pub struct MetricsLog {
    path: PathBuf,
    writer: BufWriter<File>,
    last_step: Option<u64>,
}

impl MetricsLog {
    /// Create (truncating) a log and write its header.
    pub fn create(path: &Path, config: &serde_json::Value) -> Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer(
            &mut writer,
            &LogLine::Header {
                config: config.clone(),
            },
        )?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
            last_step: None,
        })
    }

    /// Reopen an existing log for appending, dropping records with
    /// `step > keep_through` so a resumed run continues without overlap.
    pub fn resume(path: &Path, keep_through: Option<u64>) -> Result<Self> {
        let parsed = read_metrics(path)?;
        let kept: Vec<MetricRecord> = parsed
            .records
            .into_iter()
            .filter(|r| keep_through.is_some_and(|k| r.step <= k))
            .collect();
        let mut log = Self::create(path, &parsed.header.unwrap_or(serde_json::Value::Null))?;
        for r in &kept {
            log.append(r)?;
        }
        Ok(log)
    }

    pub fn append(&mut self, record: &MetricRecord) -> Result<()> {
        if let Some(last) = self.last_step {
            if record.step <= last {
                return Err(Error::Malformed(format!("step {} does not follow step {last}", record.step)));
            }
        }
        serde_json::to_writer(&mut self.writer, &LogLine::Step(record.clone()))?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.last_step = Some(record.step);
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_step(&self) -> Option<u64> {
        self.last_step
    }
}

/// Write `records` to a fresh log; returns how many were written.
pub fn track_run<I>(path: &Path, config: &serde_json::Value, records: I) -> Result<usize>
where
    I: IntoIterator<Item = MetricRecord>,
{
    let mut log = MetricsLog::create(path, config)?;
    let mut n = 0;
    for r in records {
        log.append(&r)?;
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMetrics {
    pub header: Option<serde_json::Value>,
    pub records: Vec<MetricRecord>,
}

pub fn read_metrics(path: &Path) -> Result<ParsedMetrics> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut records: Vec<MetricRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("{}:{}: {e}", path.display(), i + 1)))?;
        match parsed {
            LogLine::Header { config } if header.is_none() && records.is_empty() => header = Some(config),
            LogLine::Header { .. } => {
                return Err(Error::Malformed(format!("{}:{}: misplaced header", path.display(), i + 1)))
            }
            LogLine::Step(r) => {
                if records.last().is_some_and(|p| r.step <= p.step) {
                    return Err(Error::Malformed(format!(
                        "{}:{}: step {} out of order",
                        path.display(),
                        i + 1,
                        r.step
                    )));
                }
                records.push(r);
            }
        }
    }
    Ok(ParsedMetrics { header, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64) -> MetricRecord {
        MetricRecord {
            step,
            epoch: 0,
            loss: 1.0 / (step as f64 + 3.0),
            elimination_rate: 0.25,
            mi_bound: -0.1,
            knn_acc: step.is_multiple_of(2).then_some(0.5),
            lr: 0.1,
        }
    }

    #[test]
    fn empty_run_gives_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        assert_eq!(track_run(&p, &serde_json::json!({"seed": 1}), Vec::new()).unwrap(), 0);
        let parsed = read_metrics(&p).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.header.unwrap()["seed"], 1);
    }

    #[test]
    fn round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        track_run(&p, &serde_json::Value::Null, (0..5).map(rec)).unwrap();
        let parsed = read_metrics(&p).unwrap();
        assert_eq!(parsed.records, (0..5).map(rec).collect::<Vec<_>>());

        let mut log = MetricsLog::create(&p, &serde_json::Value::Null).unwrap();
        log.append(&rec(3)).unwrap();
        assert!(log.append(&rec(3)).is_err());
    }

    #[test]
    fn resume_truncates_to_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        track_run(&p, &serde_json::json!({"a": 1}), (0..6).map(rec)).unwrap();
        let mut log = MetricsLog::resume(&p, Some(2)).unwrap();
        assert_eq!(log.last_step(), Some(2));
        log.append(&rec(3)).unwrap();
        let parsed = read_metrics(&p).unwrap();
        assert_eq!(parsed.records.len(), 4);
        assert_eq!(parsed.header.unwrap()["a"], 1);
    }

    #[test]
    fn malformed_lines_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, "{\"kind\":\"step\",\"step\":1}\n").unwrap();
        assert!(matches!(read_metrics(&p), Err(Error::Malformed(_))));
    }
}

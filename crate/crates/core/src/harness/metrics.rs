use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::{MetricsRow, MetricsSink};

pub const METRICS_FILE: &str = "metrics.csv";

/// Header for a run with `m` constraints.
pub fn metrics_header(m: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["iteration", "episode", "kind", "episode_return"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..m).map(|i| format!("constraint_return_{i}")));
    cols.extend((0..m).map(|i| format!("lambda_{i}")));
    cols.extend(
        ["critic_loss", "policy_loss", "temperature", "task_metric"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_record(row: &MetricsRow, m: usize) -> Result<Vec<String>> {
    if row.lambdas.len() != m || row.constraint_returns.as_ref().is_some_and(|c| c.len() != m) {
        return Err(Error::Structural(format!("metrics row does not have {m} constraint columns")));
    }
    let mut out = vec![
        row.iteration.to_string(),
        row.episode.to_string(),
        row.kind.as_str().to_string(),
        cell(row.episode_return),
    ];
    match &row.constraint_returns {
        Some(c) => out.extend(c.iter().map(|v| v.to_string())),
        None => out.extend(std::iter::repeat_n(String::new(), m)),
    }
    out.extend(row.lambdas.iter().map(|v| v.to_string()));
    out.extend([
        cell(row.critic_loss),
        cell(row.policy_loss),
        cell(row.temperature),
        cell(row.task_metric),
    ]);
    Ok(out)
}

/// Append-only CSV sink; every row is flushed as it arrives.
pub struct CsvMetrics {
    writer: csv::Writer<BufWriter<File>>,
    constraints: usize,
    path: PathBuf,
}

impl CsvMetrics {
    pub fn create(path: &Path, constraints: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(metrics_header(constraints))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            writer,
            constraints,
            path: path.to_path_buf(),
        })
    }
}

impl MetricsSink for CsvMetrics {
    fn record(&mut self, row: &MetricsRow) -> Result<()> {
        self.writer.write_record(metrics_record(row, self.constraints)?)?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Parsed metrics file: header plus string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// `(iteration, value)` pairs of `metric` over rows of the given kind.
    pub fn series(&self, metric: &str, kind: &str) -> Result<Vec<(f64, f64)>> {
        let col = self.column(metric).ok_or_else(|| {
            Error::Config(format!(
                "metric `{metric}` not found; available: {}",
                self.header.join(", ")
            ))
        })?;
        let it = self.column("iteration").expect("iteration column");
        let k = self.column("kind").expect("kind column");
        let mut out = Vec::new();
        for row in &self.rows {
            if row[k] != kind || row[col].is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number `{s}` in column `{metric}`: {e}")))
            };
            out.push((parse(&row[it])?, parse(&row[col])?));
        }
        Ok(out)
    }
}

/// Writes a one-off CSV with the given header and rows.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::RowKind;

    fn row(i: u64) -> MetricsRow {
        MetricsRow {
            iteration: i,
            episode: i / 201,
            kind: RowKind::Eval,
            episode_return: Some(-1.5),
            constraint_returns: Some(vec![-0.25]),
            lambdas: vec![0.1],
            critic_loss: None,
            policy_loss: Some(2.0),
            temperature: Some(0.5),
            task_metric: Some(0.05),
        }
    }

    #[test]
    fn written_rows_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let mut sink = CsvMetrics::create(&path, 1).unwrap();
        sink.record(&row(5000)).unwrap();
        sink.record(&row(10000)).unwrap();
        let table = MetricsTable::read(&path).unwrap();
        assert_eq!(table.header, metrics_header(1));
        assert_eq!(table.rows.len(), 2);
        assert_eq!(
            table.series("task_metric", "eval").unwrap(),
            vec![(5000.0, 0.05), (10000.0, 0.05)]
        );
        assert!(table.series("critic_loss", "eval").unwrap().is_empty());
        let err = table.series("nope", "eval").unwrap_err().to_string();
        assert!(err.contains("lambda_0"));
    }

    #[test]
    fn column_count_is_checked() {
        assert!(metrics_record(&row(1), 2).is_err());
    }
}

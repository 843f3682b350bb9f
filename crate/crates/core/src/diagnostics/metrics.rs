//! The per-run metrics CSV.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 11] = [
    "env_step",
    "critic_updates_total",
    "policy_updates_total",
    "eval_return_mean",
    "eval_return_std",
    "q_bias_mean",
    "q_bias_normalized",
    "critic_loss",
    "actor_loss",
    "alpha",
    "wall_ms",
];

/// One evaluation point. `critic_updates_total` sums over every critic network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: u64,
    pub critic_updates_total: u64,
    pub policy_updates_total: u64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub q_bias_mean: f64,
    pub q_bias_normalized: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    /// Bit-level equality, so NaN fields compare equal to themselves.
    pub fn same_bits(&self, other: &MetricsRow) -> bool {
        let floats = |r: &MetricsRow| {
            [
                r.eval_return_mean,
                r.eval_return_std,
                r.q_bias_mean,
                r.q_bias_normalized,
                r.critic_loss,
                r.actor_loss,
                r.alpha,
            ]
            .map(f64::to_bits)
        };
        (self.env_step, self.critic_updates_total, self.policy_updates_total, self.wall_ms)
            == (other.env_step, other.critic_updates_total, other.policy_updates_total, other.wall_ms)
            && floats(self) == floats(other)
    }
}

/// Appends rows to a CSV, flushing after each one.
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
    last_step: Option<u64>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::state(format!("{}: {other:?}", path.display())),
    }
}

impl MetricsWriter {
    /// Creates (truncating) `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
        inner.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
            last_step: None,
        })
    }

    /// Opens an existing metrics file for appending, keeping rows up to and
    /// including `through_step` and dropping any later ones.
    pub fn resume(path: &Path, through_step: u64) -> Result<Self> {
        let kept: Vec<MetricsRow> = read_metrics(path)?.into_iter().filter(|r| r.env_step <= through_step).collect();
        let mut w = Self::create(path)?;
        for row in &kept {
            w.write(row)?;
        }
        Ok(w)
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.env_step <= s) {
            return Err(Error::state(format!(
                "metrics rows must advance: step {} after {}",
                row.env_step,
                self.last_step.unwrap_or(0)
            )));
        }
        self.inner.serialize(row).map_err(|e| csv_err(&self.path, e))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        self.last_step = Some(row.env_step);
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::state(format!("{}: unexpected metrics header", path.display())));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            env_step: step,
            critic_updates_total: 3 * step,
            policy_updates_total: step,
            eval_return_mean: -1234.567_890_123_456_7,
            eval_return_std: 0.1 + 0.2,
            q_bias_mean: f64::NAN,
            q_bias_normalized: -1e-300,
            critic_loss: 1.0 / 3.0,
            actor_loss: -0.0,
            alpha: f64::MIN_POSITIVE,
            wall_ms: 0,
        }
    }

    #[test]
    fn empty_stream_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        MetricsWriter::create(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", METRICS_HEADER.join(",")));
        assert!(read_metrics(&path).unwrap().is_empty());
    }

    #[test]
    fn rows_round_trip_at_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.write(&row(1000)).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        w.write(&row(2000)).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].same_bits(&row(1000)));
        assert!(back[1].same_bits(&row(2000)));
    }

    #[test]
    fn steps_must_increase() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = MetricsWriter::create(&dir.path().join("m.csv")).unwrap();
        w.write(&row(5)).unwrap();
        assert!(w.write(&row(5)).is_err());
        assert!(w.write(&row(4)).is_err());
        w.write(&row(6)).unwrap();
    }

    #[test]
    fn resume_drops_rows_past_the_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        for s in [10, 20, 30] {
            w.write(&row(s)).unwrap();
        }
        drop(w);
        let mut w = MetricsWriter::resume(&path, 20).unwrap();
        w.write(&row(25)).unwrap();
        let steps: Vec<u64> = read_metrics(&path).unwrap().iter().map(|r| r.env_step).collect();
        assert_eq!(steps, vec![10, 20, 25]);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "step,return\n1,2\n").unwrap();
        assert!(read_metrics(&path).is_err());
    }
}

//! Per-episode metrics as a fixed-schema CSV.
//!
//! Wall-clock time goes to the console only: every byte written to disk is
//! a deterministic function of (config, seeds).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "episode,train_return,critic_loss,mean_q,eval_return";

/// One row of metrics.csv. Optional fields render as empty cells (no
/// updates ran, or no evaluation was scheduled this episode).
#[derive(Clone, Debug)]
pub struct MetricsRecord {
    pub episode: u64,
    pub train_return: f64,
    pub critic_loss: Option<f64>,
    pub mean_q: Option<f64>,
    pub eval_return: Option<f64>,
}

impl MetricsRecord {
    fn check(&self) -> Result<()> {
        let finite = |v: Option<f64>| v.map(|x| x.is_finite()).unwrap_or(true);
        if !self.train_return.is_finite()
            || !finite(self.critic_loss)
            || !finite(self.mean_q)
            || !finite(self.eval_return)
        {
            return Err(Error::non_finite("metrics", format!("{self:?}")));
        }
        Ok(())
    }

    fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.episode,
            self.train_return,
            opt(self.critic_loss),
            opt(self.mean_q),
            opt(self.eval_return)
        )
    }
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    rows: u64,
    last_episode: Option<u64>,
}

impl MetricsWriter {
    pub fn create<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(MetricsWriter { out, rows: 0, last_episode: None })
    }

    /// Append one row; episode indices must increase monotonically and no
    /// non-finite value is ever written.
    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        record.check()?;
        if let Some(last) = self.last_episode {
            if record.episode <= last {
                return Err(Error::invalid(
                    "metrics",
                    format!("episode {} after {last} breaks monotonicity", record.episode),
                ));
            }
        }
        writeln!(self.out, "{}", record.to_csv_row())?;
        self.last_episode = Some(record.episode);
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.write(&MetricsRecord {
            episode: 1,
            train_return: -1.5,
            critic_loss: Some(0.25),
            mean_q: Some(-0.5),
            eval_return: None,
        })
        .unwrap();
        w.write(&MetricsRecord {
            episode: 2,
            train_return: -1.0,
            critic_loss: None,
            mean_q: None,
            eval_return: Some(-0.75),
        })
        .unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "1,-1.5,0.25,-0.5,");
        assert_eq!(lines[2], "2,-1,,,-0.75");
    }

    #[test]
    fn non_finite_values_never_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = MetricsWriter::create(dir.path().join("m.csv")).unwrap();
        let bad = MetricsRecord {
            episode: 1,
            train_return: f64::NAN,
            critic_loss: None,
            mean_q: None,
            eval_return: None,
        };
        assert!(w.write(&bad).is_err());
        assert_eq!(w.rows(), 0);
    }

    #[test]
    fn episode_monotonicity_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = MetricsWriter::create(dir.path().join("m.csv")).unwrap();
        let rec = |e| MetricsRecord {
            episode: e,
            train_return: 0.0,
            critic_loss: None,
            mean_q: None,
            eval_return: None,
        };
        w.write(&rec(5)).unwrap();
        assert!(w.write(&rec(5)).is_err());
        assert!(w.write(&rec(4)).is_err());
        w.write(&rec(6)).unwrap();
    }
}

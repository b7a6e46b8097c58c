use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StepLosses;
use crate::error::{Error, Result};

pub const RUNLOG_HEADER: [&str; 7] = ["step", "d_loss", "g_adv", "g_per", "g_l1", "g_total", "seconds"];

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    #[serde(flatten)]
    pub losses: StepLosses,
    /// Wall-clock seconds since the run started.
    pub seconds: f64,
}

/// Per-step losses of a run, with strictly increasing step numbers.
///
/// Equality compares steps and losses bitwise but ignores `seconds`, so two
/// runs with the same seed compare equal.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    records: Vec<StepRecord>,
}

impl PartialEq for RunLog {
    fn eq(&self, other: &Self) -> bool {
        self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.step == b.step && a.losses == b.losses)
    }
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_step(&self) -> u64 {
        self.records.last().map_or(0, |r| r.step)
    }

    pub fn push(&mut self, r: StepRecord) -> Result<()> {
        if r.step <= self.last_step() && !self.records.is_empty() {
            return Err(Error::Contract(format!(
                "run log step {} does not follow {}",
                r.step,
                self.last_step()
            )));
        }
        self.records.push(r);
        Ok(())
    }

    /// Drops records after `step`.
    pub fn truncate_to(&mut self, step: u64) {
        self.records.retain(|r| r.step <= step);
    }

    pub fn to_csv(&self) -> String {
        let mut s = RUNLOG_HEADER.join(",");
        s.push('\n');
        for r in &self.records {
            let l = &r.losses;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.3}",
                r.step, l.d_loss, l.g_adv, l.g_per, l.g_l1, l.g_total, r.seconds
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::Data(format!("run log: {e}")))?;
        if header.iter().ne(RUNLOG_HEADER) {
            return Err(Error::Data(format!(
                "run log header {header:?} is not {RUNLOG_HEADER:?}"
            )));
        }
        let mut log = RunLog::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Data(format!("run log: {e}")))?;
            let f = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| Error::Data(format!("run log: bad number {:?}", &row[i])))
            };
            let step = row[0]
                .parse()
                .map_err(|_| Error::Data(format!("run log: bad step {:?}", &row[0])))?;
            log.push(StepRecord {
                step,
                losses: StepLosses {
                    d_loss: f(1)?,
                    g_adv: f(2)?,
                    g_per: f(3)?,
                    g_l1: f(4)?,
                    g_total: f(5)?,
                },
                seconds: f(6)?,
            })?;
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, v: f64, seconds: f64) -> StepRecord {
        StepRecord {
            step,
            losses: StepLosses {
                d_loss: v,
                g_adv: v / 3.0,
                g_per: 0.1,
                g_l1: 1e-7,
                g_total: v * 7.0,
            },
            seconds,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut log = RunLog::new();
        log.push(rec(1, 1.234567890123, 0.5)).unwrap();
        log.push(rec(2, std::f64::consts::PI, 1.25)).unwrap();
        let back = RunLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(back, log);
        assert!(log
            .to_csv()
            .starts_with("step,d_loss,g_adv,g_per,g_l1,g_total,seconds\n"));
    }

    #[test]
    fn equality_ignores_wall_clock() {
        let mut a = RunLog::new();
        let mut b = RunLog::new();
        a.push(rec(1, 2.0, 0.1)).unwrap();
        b.push(rec(1, 2.0, 9.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn steps_must_increase() {
        let mut a = RunLog::new();
        a.push(rec(3, 2.0, 0.1)).unwrap();
        assert!(a.push(rec(3, 2.0, 0.1)).is_err());
    }
}

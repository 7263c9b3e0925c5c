//! Run traces: the per-tick KPI matrix plus realized fault activations
//! and the failure event, with CSV persistence.
//!
//! Two files per run: a wide KPI CSV (first column ISO-8601 timestamp,
//! then one column per `r<i>.<kpi>`), and a ground-truth CSV
//! (`tick,event,detail`) listing fault activations and the failure, if
//! any. A run with an empty ground-truth file is failure-free.

use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::FaultType;

/// KPI order within each resource's column block.
pub const KPI_NAMES: [&str; 5] = ["cpu", "mem", "net", "req", "succ"];

/// Number of KPIs monitored per resource.
pub const KPIS_PER_RESOURCE: usize = KPI_NAMES.len();

/// Why a run ended in failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// A resource exhausted its memory.
    Crash,
    /// System call success rate fell below the quality-of-service floor.
    Qos,
}

impl FailureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FailureKind::Crash => "crash",
            FailureKind::Qos => "qos",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "crash" => Ok(FailureKind::Crash),
            "qos" => Ok(FailureKind::Qos),
            _ => Err(Error::data(format!("unknown failure kind '{s}'"))),
        }
    }
}

/// The ground-truth failure of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub tick: u64,
    pub kind: FailureKind,
}

/// One realized fault activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub tick: u64,
    pub fault_type: FaultType,
}

/// A complete simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub start: DateTime<Utc>,
    pub tick_minutes: u32,
    pub resources: usize,
    /// tick-major KPI matrix; each row holds `resources * 5` values in
    /// `KPI_NAMES` order per resource.
    pub rows: Vec<Vec<f64>>,
    pub activations: Vec<Activation>,
    pub failure: Option<FailureEvent>,
}

impl Trace {
    pub fn columns(&self) -> usize {
        self.resources * KPIS_PER_RESOURCE
    }

    pub fn ticks(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn timestamp(&self, tick: u64) -> DateTime<Utc> {
        self.start + Duration::minutes(tick as i64 * self.tick_minutes as i64)
    }

    pub fn kpi(&self, tick: u64, resource: usize, kpi: usize) -> f64 {
        self.rows[tick as usize][resource * KPIS_PER_RESOURCE + kpi]
    }

    /// One KPI's full series.
    pub fn column(&self, resource: usize, kpi: usize) -> Vec<f64> {
        let idx = resource * KPIS_PER_RESOURCE + kpi;
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Whether this run had a fault injected (realized activations) or
    /// ended in failure.
    pub fn is_faulty(&self) -> bool {
        !self.activations.is_empty() || self.failure.is_some()
    }

    /// The injected fault type, if any.
    pub fn fault_type(&self) -> Option<FaultType> {
        self.activations.first().map(|a| a.fault_type)
    }

    fn kpi_path(dir: &Path, name: &str) -> std::path::PathBuf {
        dir.join(format!("{name}.csv"))
    }

    fn truth_path(dir: &Path, name: &str) -> std::path::PathBuf {
        dir.join(format!("{name}.truth.csv"))
    }

    /// Writes `<name>.csv` and `<name>.truth.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(Self::kpi_path(dir, &self.name))?;
        let mut header = vec!["timestamp".to_string()];
        for r in 0..self.resources {
            for k in KPI_NAMES {
                header.push(format!("r{r}.{k}"));
            }
        }
        w.write_record(&header)?;
        for (t, row) in self.rows.iter().enumerate() {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(
                self.timestamp(t as u64)
                    .to_rfc3339_opts(SecondsFormat::Secs, true),
            );
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(Self::truth_path(dir, &self.name))?;
        w.write_record(["tick", "event", "detail"])?;
        for a in &self.activations {
            w.write_record([a.tick.to_string(), "activation".into(), a.fault_type.name().into()])?;
        }
        if let Some(f) = &self.failure {
            w.write_record([f.tick.to_string(), "failure".into(), f.kind.name().into()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads `<name>.csv` + `<name>.truth.csv` from `dir`.
    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let kpi_path = Self::kpi_path(dir, name);
        let mut r = csv::Reader::from_path(&kpi_path)
            .map_err(|e| Error::data(format!("{}: {e}", kpi_path.display())))?;
        let headers = r.headers()?.clone();
        if headers.len() < 1 + KPIS_PER_RESOURCE || headers.get(0) != Some("timestamp") {
            return Err(Error::data(format!(
                "{}: malformed header",
                kpi_path.display()
            )));
        }
        let data_cols = headers.len() - 1;
        if data_cols % KPIS_PER_RESOURCE != 0 {
            return Err(Error::data(format!(
                "{}: {} KPI columns is not a multiple of {}",
                kpi_path.display(),
                data_cols,
                KPIS_PER_RESOURCE
            )));
        }
        let resources = data_cols / KPIS_PER_RESOURCE;

        let mut rows = Vec::new();
        let mut times: Vec<DateTime<Utc>> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let ts = DateTime::parse_from_rfc3339(rec.get(0).unwrap_or_default())
                .map_err(|e| Error::data(format!("bad timestamp in {name}: {e}")))?
                .with_timezone(&Utc);
            times.push(ts);
            let row: std::result::Result<Vec<f64>, _> =
                (1..rec.len()).map(|i| rec[i].parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::data(format!("bad value in {name}: {e}")))?);
        }
        if rows.is_empty() {
            return Err(Error::data(format!("{}: empty trace", kpi_path.display())));
        }
        let start = times[0];
        let tick_minutes = if times.len() >= 2 {
            let dt = (times[1] - times[0]).num_minutes();
            if dt <= 0 {
                return Err(Error::data(format!("{name}: non-increasing timestamps")));
            }
            dt as u32
        } else {
            1
        };

        let truth_path = Self::truth_path(dir, name);
        let mut activations = Vec::new();
        let mut failure = None;
        let mut tr = csv::Reader::from_path(&truth_path)
            .map_err(|e| Error::data(format!("{}: {e}", truth_path.display())))?;
        for rec in tr.records() {
            let rec = rec?;
            let tick: u64 = rec
                .get(0)
                .unwrap_or_default()
                .parse()
                .map_err(|e| Error::data(format!("bad tick in {name} truth: {e}")))?;
            match rec.get(1).unwrap_or_default() {
                "activation" => activations.push(Activation {
                    tick,
                    fault_type: FaultType::parse(rec.get(2).unwrap_or_default())?,
                }),
                "failure" => {
                    failure = Some(FailureEvent {
                        tick,
                        kind: FailureKind::parse(rec.get(2).unwrap_or_default())?,
                    })
                }
                other => {
                    return Err(Error::data(format!(
                        "unknown ground-truth event '{other}' in {name}"
                    )))
                }
            }
        }

        Ok(Trace {
            name: name.to_string(),
            start,
            tick_minutes,
            resources,
            rows,
            activations,
            failure,
        })
    }

    /// Names of all traces stored in `dir` (anything with both files).
    pub fn list(dir: &Path) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(fname) = path.file_name().and_then(|s| s.to_str()) else {
                continue;
            };
            if let Some(stem) = fname.strip_suffix(".csv") {
                if stem.ends_with(".truth") {
                    continue;
                }
                if Self::truth_path(dir, stem).exists() {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_epoch;

    fn sample_trace() -> Trace {
        let resources = 2;
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|t| {
                (0..resources * KPIS_PER_RESOURCE)
                    .map(|c| t as f64 + 0.125 * c as f64)
                    .collect()
            })
            .collect();
        Trace {
            name: "sample".into(),
            start: default_epoch(),
            tick_minutes: 1,
            resources,
            rows,
            activations: vec![Activation {
                tick: 2,
                fault_type: FaultType::PacketLoss,
            }],
            failure: Some(FailureEvent {
                tick: 4,
                kind: FailureKind::Qos,
            }),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let trace = sample_trace();
        trace.save(dir.path()).unwrap();
        let back = Trace::load(dir.path(), "sample").unwrap();
        assert_eq!(trace, back);
    }

    #[test]
    fn clean_trace_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut trace = sample_trace();
        trace.name = "clean".into();
        trace.activations.clear();
        trace.failure = None;
        trace.save(dir.path()).unwrap();
        let back = Trace::load(dir.path(), "clean").unwrap();
        assert!(!back.is_faulty());
        assert_eq!(back.fault_type(), None);
    }

    #[test]
    fn timestamps_follow_tick_length() {
        let mut trace = sample_trace();
        trace.tick_minutes = 30;
        assert_eq!(
            trace.timestamp(3),
            default_epoch() + Duration::minutes(90)
        );
    }

    #[test]
    fn header_and_columns_round_trip_shape() {
        let dir = tempfile::tempdir().unwrap();
        let trace = sample_trace();
        trace.save(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("sample.csv")).unwrap();
        let first_line = text.lines().next().unwrap();
        assert_eq!(
            first_line,
            "timestamp,r0.cpu,r0.mem,r0.net,r0.req,r0.succ,r1.cpu,r1.mem,r1.net,r1.req,r1.succ"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("2024-01-01T00:00:00Z,"));
    }

    #[test]
    fn list_finds_saved_traces() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = sample_trace();
        a.name = "bbb".into();
        a.save(dir.path()).unwrap();
        let mut b = sample_trace();
        b.name = "aaa".into();
        b.save(dir.path()).unwrap();
        assert_eq!(Trace::list(dir.path()).unwrap(), vec!["aaa", "bbb"]);
    }

    #[test]
    fn column_extracts_one_kpi() {
        let trace = sample_trace();
        let succ = trace.column(1, 4); // last column
        assert_eq!(succ.len(), 5);
        assert!((succ[0] - 0.125 * 9.0).abs() < 1e-12);
    }
}

//! Configuration sweep bookkeeping: the 72-member parameter grid,
//! run-level outcome scoring, precision/recall/F-measure, lead times, and
//! report CSV assembly.

use crate::error::{Error, Result};
use crate::global::{GlobalPrediction, Strategy};
use crate::scenario::FaultType;
use crate::trace::Trace;

/// Detector flag thresholds covered by the sweep.
pub const EPSILONS: [f64; 4] = [0.80, 0.85, 0.90, 0.95];

/// Confirmation thresholds covered by the sweep.
pub const N_VALUES: [u32; 2] = [1, 2];

/// Single-resource streak lengths covered by the sweep.
pub const X_VALUES: [u32; 6] = [1, 2, 3, 4, 5, 6];

/// Vote streak lengths covered by the sweep.
pub const Y_VALUES: [u32; 3] = [1, 2, 3];

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub epsilon: f64,
    pub n: u32,
    pub strategy: Strategy,
}

/// The full grid: 4 epsilons x 2 confirmation thresholds x (6 streak
/// lengths + 3 vote lengths) = 72 configurations.
pub fn enumerate_configs() -> Vec<SweepConfig> {
    let mut out = Vec::with_capacity(72);
    for &epsilon in &EPSILONS {
        for &n in &N_VALUES {
            for &x in &X_VALUES {
                out.push(SweepConfig {
                    epsilon,
                    n,
                    strategy: Strategy::SingleResource { x },
                });
            }
            for &y in &Y_VALUES {
                out.push(SweepConfig {
                    epsilon,
                    n,
                    strategy: Strategy::VoteBased { y },
                });
            }
        }
    }
    out
}

/// Precision, recall, F-measure from run-level counts; any zero
/// denominator yields 0.
pub fn metrics(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f)
}

/// Median of a sample; `None` when empty. Even-sized samples average the
/// two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite lead times"));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Minutes between a prediction and the failure it anticipates.
pub fn lead_time_minutes(prediction_tick: u64, failure_tick: u64, tick_minutes: u32) -> Result<f64> {
    if prediction_tick >= failure_tick {
        return Err(Error::data(format!(
            "prediction at tick {prediction_tick} is not before failure at {failure_tick}"
        )));
    }
    Ok((failure_tick - prediction_tick) as f64 * tick_minutes as f64)
}

/// Run-level outcome for one (run, configuration) pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: String,
    pub faulty: bool,
    pub fault_type: Option<FaultType>,
    /// Faulty runs: a prediction exists strictly before the failure.
    /// Failure-free runs: any prediction at all (a false alarm).
    pub predicted: bool,
    /// Minutes from the run's first prediction to its failure; only for
    /// correctly predicted faulty runs.
    pub lead_min: Option<f64>,
}

/// Scores one run against its prediction events.
pub fn evaluate_run(trace: &Trace, events: &[GlobalPrediction]) -> Result<RunOutcome> {
    let first = events.iter().map(|e| e.tick).min();
    if trace.is_faulty() {
        let failure = trace.failure.ok_or_else(|| {
            Error::data(format!("faulty run '{}' has no failure event", trace.name))
        })?;
        let predicted = first.is_some_and(|t| t < failure.tick);
        let lead_min = if predicted {
            Some(lead_time_minutes(
                first.expect("predicted implies an event"),
                failure.tick,
                trace.tick_minutes,
            )?)
        } else {
            None
        };
        Ok(RunOutcome {
            run: trace.name.clone(),
            faulty: true,
            fault_type: trace.fault_type(),
            predicted,
            lead_min,
        })
    } else {
        Ok(RunOutcome {
            run: trace.name.clone(),
            faulty: false,
            fault_type: None,
            predicted: first.is_some(),
            lead_min: None,
        })
    }
}

/// Aggregated scores for one configuration over a run set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigReport {
    pub config: SweepConfig,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub median_lead_min: Option<f64>,
}

/// Folds run outcomes into the per-configuration report row.
pub fn aggregate(config: SweepConfig, outcomes: &[RunOutcome]) -> ConfigReport {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut leads = Vec::new();
    for o in outcomes {
        match (o.faulty, o.predicted) {
            (true, true) => {
                tp += 1;
                if let Some(l) = o.lead_min {
                    leads.push(l);
                }
            }
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => {}
        }
    }
    let (precision, recall, f_measure) = metrics(tp, fp, fn_);
    ConfigReport {
        config,
        tp,
        fp,
        fn_,
        precision,
        recall,
        f_measure,
        median_lead_min: median(&leads),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.1}"))
}

/// Report CSV, one row per configuration.
pub fn report_csv(reports: &[ConfigReport]) -> String {
    let mut out =
        String::from("strategy,epsilon,n,x_or_y,tp,fp,fn,precision,recall,f_measure,median_lead_min\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{}\n",
            r.config.strategy.name(),
            r.config.epsilon,
            r.config.n,
            r.config.strategy.threshold(),
            r.tp,
            r.fp,
            r.fn_,
            r.precision,
            r.recall,
            r.f_measure,
            fmt_opt(r.median_lead_min),
        ));
    }
    out
}

/// Parses a report CSV produced by [`report_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ConfigReport>> {
    let mut out = Vec::new();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or_default();
        let threshold: u32 = get(3)
            .parse()
            .map_err(|e| Error::data(format!("bad x_or_y: {e}")))?;
        let strategy = match get(0) {
            "single_resource" => Strategy::SingleResource { x: threshold },
            "vote_based" => Strategy::VoteBased { y: threshold },
            s => return Err(Error::data(format!("unknown strategy '{s}'"))),
        };
        let num = |i: usize| -> Result<f64> {
            get(i)
                .parse()
                .map_err(|e| Error::data(format!("bad number in report: {e}")))
        };
        out.push(ConfigReport {
            config: SweepConfig {
                epsilon: num(1)?,
                n: num(2)? as u32,
                strategy,
            },
            tp: num(4)? as u64,
            fp: num(5)? as u64,
            fn_: num(6)? as u64,
            precision: num(7)?,
            recall: num(8)?,
            f_measure: num(9)?,
            median_lead_min: if get(10).is_empty() {
                None
            } else {
                Some(num(10)?)
            },
        });
    }
    Ok(out)
}

/// Per-fault-type aggregation pooled over every configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PerFaultRow {
    pub fault_type: FaultType,
    /// (configuration, run) pairings with this fault type.
    pub total: u64,
    pub tp: u64,
    pub recall: f64,
    pub median_lead_min: Option<f64>,
}

/// Pools outcomes (across all configurations) by fault type: recall per
/// type and the median lead over correct predictions. Empty groups report
/// recall 0 with count 0.
pub fn per_fault(outcomes: &[RunOutcome]) -> Vec<PerFaultRow> {
    FaultType::ALL
        .into_iter()
        .map(|ft| {
            let group: Vec<&RunOutcome> = outcomes
                .iter()
                .filter(|o| o.fault_type == Some(ft))
                .collect();
            let total = group.len() as u64;
            let tp = group.iter().filter(|o| o.predicted).count() as u64;
            let leads: Vec<f64> = group.iter().filter_map(|o| o.lead_min).collect();
            let recall = if total > 0 { tp as f64 / total as f64 } else { 0.0 };
            PerFaultRow {
                fault_type: ft,
                total,
                tp,
                recall,
                median_lead_min: median(&leads),
            }
        })
        .collect()
}

/// Per-fault report CSV.
pub fn per_fault_csv(rows: &[PerFaultRow]) -> String {
    let mut out = String::from("fault_type,pairings,tp,recall,median_lead_min\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.3},{}\n",
            r.fault_type,
            r.total,
            r.tp,
            r.recall,
            fmt_opt(r.median_lead_min),
        ));
    }
    out
}

/// Per-(strategy, epsilon) aggregates over the grid: average and best
/// scores across the remaining parameters.
pub fn by_epsilon_csv(reports: &[ConfigReport]) -> String {
    let mut out = String::from("strategy,epsilon,configs,mean_precision,mean_recall,mean_f,best_f\n");
    for kind in ["single_resource", "vote_based"] {
        for &eps in &EPSILONS {
            let group: Vec<&ConfigReport> = reports
                .iter()
                .filter(|r| r.config.strategy.name() == kind && r.config.epsilon == eps)
                .collect();
            if group.is_empty() {
                continue;
            }
            let count = group.len() as f64;
            let mean = |f: fn(&ConfigReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / count;
            let best = group
                .iter()
                .map(|r| r.f_measure)
                .fold(0.0f64, f64::max);
            out.push_str(&format!(
                "{},{},{},{:.3},{:.3},{:.3},{:.3}\n",
                kind,
                eps,
                group.len(),
                mean(|r| r.precision),
                mean(|r| r.recall),
                mean(|r| r.f_measure),
                best,
            ));
        }
    }
    out
}

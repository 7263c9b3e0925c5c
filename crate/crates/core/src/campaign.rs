//! End-to-end campaign: generate scenarios, simulate traces, train the
//! system on two clean weeks, sweep the configuration grid over a
//! battery of evaluation runs, and write the report files.
//!
//! Layout under the campaign directory:
//!
//! ```text
//! scenarios/*.toml          every generated scenario
//! traces/train/             two failure-free training traces
//! traces/eval/              12 faulty + N clean evaluation traces
//! models/                   the trained system
//! report.csv                one row per grid configuration
//! report_per_fault.csv      pooled per-fault-type recall and lead time
//! report_by_epsilon.csv     per-(strategy, epsilon) aggregates
//! ```

use std::path::{Path, PathBuf};

use chrono::Duration;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{by_epsilon_csv, per_fault_csv, report_csv};
use crate::hashmix::mix3;
use crate::model::save_system;
use crate::pipeline::{sweep, train_system, SweepOutput, SystemParams};
use crate::real::Real;
use crate::scenario::{
    default_epoch, ActivationPattern, FaultSpec, FaultType, ScenarioConfig,
};
use crate::simulate::run_scenario;
use crate::trace::Trace;

const MINUTES_PER_WEEK: u64 = 7 * 24 * 60;

/// Derives a per-scenario seed, kept in the 63-bit range so scenario
/// files stay plain TOML integers.
fn scenario_seed(base: u64, kind: u64, index: u64) -> u64 {
    mix3(base, kind, index) >> 1
}

/// Campaign geometry: two training weeks from the epoch, then short
/// evaluation runs starting the third Monday morning. The second
/// training week extends through the bridge so observation is seamless
/// up to the first evaluation tick.
#[derive(Debug, Clone)]
pub struct CampaignSpec {
    /// Base seed; every scenario derives its own seed from it.
    pub seed: u64,
    pub resources: usize,
    pub tick_minutes: u32,
    /// Minutes between the end of the second training week and the
    /// start of evaluation (9:00 for the default 540).
    pub bridge_minutes: u64,
    /// Length of each evaluation run, in ticks.
    pub eval_ticks: u64,
    /// First tick at which an injected fault may activate.
    pub fault_start_tick: u64,
    /// Number of fault-free evaluation runs appended to the battery.
    pub clean_runs: usize,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            seed: 7,
            resources: 6,
            tick_minutes: 1,
            bridge_minutes: 540,
            eval_ticks: 120,
            fault_start_tick: 30,
            clean_runs: 12,
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resources < 6 {
            return Err(Error::config(
                "campaign needs at least 6 resources (streak lengths up to 6 and a \
                 fault battery spread over six targets assume that many)",
            ));
        }
        if self.tick_minutes == 0 || MINUTES_PER_WEEK % self.tick_minutes as u64 != 0 {
            return Err(Error::config("tick length must divide a week evenly"));
        }
        if self.bridge_minutes % self.tick_minutes as u64 != 0 {
            return Err(Error::config("bridge must be a whole number of ticks"));
        }
        if self.fault_start_tick >= self.eval_ticks {
            return Err(Error::config("fault start must fall inside the eval window"));
        }
        Ok(())
    }

    fn week_ticks(&self) -> u64 {
        MINUTES_PER_WEEK / self.tick_minutes as u64
    }

    /// Two clean training scenarios; the second runs a week plus the
    /// bridge, ending exactly where evaluation begins.
    pub fn training_scenarios(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::with_capacity(2);
        for week in 0..2u64 {
            let mut duration = self.week_ticks();
            if week == 1 {
                duration += self.bridge_minutes / self.tick_minutes as u64;
            }
            let mut cfg = ScenarioConfig::new(
                format!("train_week{}", week + 1),
                scenario_seed(self.seed, 1, week + 1),
                duration,
                self.resources,
            );
            cfg.tick_minutes = self.tick_minutes;
            cfg.start = default_epoch() + Duration::minutes((week * MINUTES_PER_WEEK) as i64);
            out.push(cfg);
        }
        out
    }

    fn eval_start(&self) -> chrono::DateTime<chrono::Utc> {
        default_epoch()
            + Duration::minutes((2 * MINUTES_PER_WEEK + self.bridge_minutes) as i64)
    }

    /// The evaluation battery: every fault type under every activation
    /// pattern (targets rotating over the resources), then the clean
    /// runs. Names sort in construction order.
    pub fn eval_scenarios(&self) -> Vec<ScenarioConfig> {
        let faulty = FaultType::ALL.len() * ActivationPattern::ALL.len();
        let mut out = Vec::with_capacity(faulty + self.clean_runs);
        for i in 0..faulty + self.clean_runs {
            let name = if i < faulty {
                let fault_type = FaultType::ALL[i / ActivationPattern::ALL.len()];
                let pattern = ActivationPattern::ALL[i % ActivationPattern::ALL.len()];
                format!("eval_{i:02}_{fault_type}_{pattern}")
            } else {
                format!("eval_{i:02}_clean")
            };
            let mut cfg = ScenarioConfig::new(
                name,
                scenario_seed(self.seed, 2, i as u64),
                self.eval_ticks,
                self.resources,
            );
            cfg.tick_minutes = self.tick_minutes;
            cfg.start = self.eval_start();
            if i < faulty {
                let fault_type = FaultType::ALL[i / ActivationPattern::ALL.len()];
                let pattern = ActivationPattern::ALL[i % ActivationPattern::ALL.len()];
                let mut fault =
                    FaultSpec::standard(fault_type, pattern, i % self.resources);
                fault.start_tick = self.fault_start_tick;
                cfg = cfg.with_fault(fault);
            }
            out.push(cfg);
        }
        out
    }
}

/// Everything a finished campaign produced, plus where the reports went.
#[derive(Debug)]
pub struct CampaignResult {
    pub sweep: SweepOutput,
    /// Fault-free evaluation runs that nevertheless reached failure
    /// (expected to be zero; nonzero means the testbed is miscalibrated).
    pub clean_failures: usize,
    pub models_dir: PathBuf,
    pub report_path: PathBuf,
    pub per_fault_path: PathBuf,
    pub by_epsilon_path: PathBuf,
}

fn simulate_batch(
    scenarios: &[ScenarioConfig],
    scenario_dir: &Path,
    trace_dir: &Path,
) -> Result<Vec<Trace>> {
    std::fs::create_dir_all(trace_dir)?;
    for cfg in scenarios {
        cfg.save(&scenario_dir.join(format!("{}.toml", cfg.name)))?;
    }
    let traces: Vec<Trace> = scenarios
        .par_iter()
        .map(run_scenario)
        .collect::<Result<Vec<_>>>()?;
    for trace in &traces {
        trace.save(trace_dir)?;
    }
    Ok(traces)
}

/// Runs the whole campaign under `dir`. Deterministic: the same spec
/// and parameters produce byte-identical traces, models, and reports.
pub fn run_campaign<F: Real>(
    dir: &Path,
    spec: &CampaignSpec,
    params: &SystemParams<F>,
) -> Result<CampaignResult> {
    spec.validate()?;
    params.validate()?;
    let scenario_dir = dir.join("scenarios");
    std::fs::create_dir_all(&scenario_dir)?;

    let train_traces = simulate_batch(
        &spec.training_scenarios(),
        &scenario_dir,
        &dir.join("traces/train"),
    )?;
    for t in &train_traces {
        if t.is_faulty() {
            return Err(Error::Train(format!(
                "training trace '{}' is not failure-free",
                t.name
            )));
        }
    }

    let eval_scenarios = spec.eval_scenarios();
    let eval_traces = simulate_batch(&eval_scenarios, &scenario_dir, &dir.join("traces/eval"))?;
    let clean_failures = eval_scenarios
        .iter()
        .zip(&eval_traces)
        .filter(|(cfg, trace)| cfg.fault.is_none() && trace.failure.is_some())
        .count();

    let system = train_system(params, &train_traces)?;
    let models_dir = dir.join("models");
    save_system(&system, &models_dir)?;

    let sweep_out = sweep(&system, &eval_traces)?;
    let report_path = dir.join("report.csv");
    std::fs::write(&report_path, report_csv(&sweep_out.reports))?;
    let per_fault_path = dir.join("report_per_fault.csv");
    std::fs::write(&per_fault_path, per_fault_csv(&sweep_out.per_fault))?;
    let by_epsilon_path = dir.join("report_by_epsilon.csv");
    std::fs::write(&by_epsilon_path, by_epsilon_csv(&sweep_out.reports))?;

    Ok(CampaignResult {
        sweep: sweep_out,
        clean_failures,
        models_dir,
        report_path,
        per_fault_path,
        by_epsilon_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Datelike, Timelike};

    #[test]
    fn training_geometry_lines_up() {
        let spec = CampaignSpec::default();
        let train = spec.training_scenarios();
        assert_eq!(train.len(), 2);
        assert_eq!(train[0].duration_ticks, 10080);
        assert_eq!(train[1].duration_ticks, 10080 + 540);
        assert_eq!(
            train[0].start + Duration::minutes(MINUTES_PER_WEEK as i64),
            train[1].start
        );
        // Week 2 ends exactly where evaluation begins: Monday 09:00.
        let eval = spec.eval_scenarios();
        let week2_end =
            train[1].start + Duration::minutes(train[1].duration_ticks as i64);
        assert_eq!(week2_end, eval[0].start);
        assert_eq!(eval[0].start.weekday(), chrono::Weekday::Mon);
        assert_eq!(eval[0].start.hour(), 9);
    }

    #[test]
    fn battery_covers_the_fault_grid() {
        let spec = CampaignSpec::default();
        let eval = spec.eval_scenarios();
        assert_eq!(eval.len(), 24);
        let faults: Vec<_> = eval.iter().filter_map(|c| c.fault.clone()).collect();
        assert_eq!(faults.len(), 12);
        for ft in FaultType::ALL {
            assert_eq!(faults.iter().filter(|f| f.fault_type == ft).count(), 3);
        }
        for p in ActivationPattern::ALL {
            assert_eq!(faults.iter().filter(|f| f.pattern == p).count(), 4);
        }
        // Targets rotate over the resources.
        assert_eq!(
            faults.iter().map(|f| f.target).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5]
        );
        for f in &faults {
            assert_eq!(f.start_tick, spec.fault_start_tick);
        }
        assert!(eval[12..].iter().all(|c| c.fault.is_none()));
    }

    #[test]
    fn names_sort_in_battery_order() {
        let eval = CampaignSpec::default().eval_scenarios();
        let mut names: Vec<_> = eval.iter().map(|c| c.name.clone()).collect();
        let original = names.clone();
        names.sort();
        assert_eq!(names, original);
    }

    #[test]
    fn scenario_seeds_are_distinct() {
        let spec = CampaignSpec::default();
        let mut seeds: Vec<u64> = spec
            .training_scenarios()
            .iter()
            .chain(spec.eval_scenarios().iter())
            .map(|c| c.seed)
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 26);
    }

    #[test]
    fn validation_rejects_bad_geometry() {
        let spec = CampaignSpec {
            resources: 4,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        let spec = CampaignSpec {
            tick_minutes: 13, // does not divide a week
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        let spec = CampaignSpec {
            fault_start_tick: 480,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
        assert!(CampaignSpec::default().validate().is_ok());
    }
}

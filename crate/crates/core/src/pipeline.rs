//! End-to-end wiring: detector bank training, per-resource novelty
//! models, run evaluation, and the 72-configuration sweep.
//!
//! Training follows the two-stage protocol: detectors stream through the
//! failure-free training traces with learning on; the flag vectors they
//! emit over the later portion (every trace after the first, or the
//! second half of a single trace) train one one-class SVM per (threshold,
//! resource). Evaluation streams each run through clones of the trained
//! detectors — learning continues online exactly as during training, but
//! the trained system itself is never mutated, so every run branches from
//! the same state and the sweep stays deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anomaly::{is_anomalous, DetectorParams, KpiDetector};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, enumerate_configs, evaluate_run, per_fault, ConfigReport, PerFaultRow, RunOutcome,
    SweepConfig,
};
use crate::global::{scan_events, GlobalPrediction};
use crate::local::{default_gamma, ConfirmationStreak};
use crate::real::Real;
use crate::svm::OneClassSvm;
use crate::trace::{Trace, KPIS_PER_RESOURCE};

/// Everything needed to build a detector bank and its novelty models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct SystemParams<F: Real> {
    pub detector: DetectorParams<F>,
    /// Encoder (min, max) per KPI column: cpu%, mem%, net, req, succ.
    pub kpi_ranges: Vec<(F, F)>,
    /// Training-outlier budget for the per-resource novelty models.
    pub nu: F,
    /// Flag thresholds the system is trained for.
    pub epsilons: Vec<F>,
    pub seed: u64,
}

impl<F: Real> Default for SystemParams<F> {
    fn default() -> Self {
        SystemParams {
            detector: DetectorParams::default(),
            kpi_ranges: vec![
                (F::zero(), F::of(100.0)),  // cpu %
                (F::zero(), F::of(100.0)),  // mem %
                (F::zero(), F::of(1600.0)), // net throughput
                (F::zero(), F::of(1800.0)), // request rate
                (F::zero(), F::one()),      // call success rate
            ],
            nu: F::of(crate::local::DEFAULT_NU),
            epsilons: crate::eval::EPSILONS.iter().map(|&e| F::of(e)).collect(),
            seed: 7,
        }
    }
}

impl<F: Real> SystemParams<F> {
    /// Defaults with the likelihood window scaled to cover one simulated
    /// day at the given tick length, so the rolling baseline spans the
    /// full diurnal cycle regardless of sampling rate. (The stock window
    /// of 288 corresponds to 5-minute ticks.)
    pub fn for_tick_minutes(tick_minutes: u32) -> Result<Self> {
        if tick_minutes == 0 || tick_minutes > 1440 {
            return Err(Error::config("tick length must be within a day"));
        }
        let mut params = Self::default();
        params.detector.likelihood.window = (1440 / tick_minutes).max(2) as usize;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kpi_ranges.len() != KPIS_PER_RESOURCE {
            return Err(Error::config(format!(
                "expected {} KPI ranges, got {}",
                KPIS_PER_RESOURCE,
                self.kpi_ranges.len()
            )));
        }
        if self.epsilons.is_empty() {
            return Err(Error::config("at least one epsilon required"));
        }
        Ok(())
    }

    /// Index of `epsilon` in the trained threshold list.
    pub fn epsilon_index(&self, epsilon: f64) -> Result<usize> {
        self.epsilons
            .iter()
            .position(|e| (e.as_f64() - epsilon).abs() < 1e-9)
            .ok_or_else(|| {
                Error::config(format!(
                    "epsilon {epsilon} not in trained set {:?}",
                    self.epsilons
                        .iter()
                        .map(|e| e.as_f64())
                        .collect::<Vec<_>>()
                ))
            })
    }
}

/// A trained detector bank plus per-(epsilon, resource) novelty models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TrainedSystem<F: Real> {
    pub params: SystemParams<F>,
    pub resources: usize,
    /// Detector per KPI stream, indexed `resource * 5 + kpi`.
    pub detectors: Vec<KpiDetector<F>>,
    /// `svms[epsilon_index][resource]`.
    pub svms: Vec<Vec<OneClassSvm<F>>>,
    pub trained_ticks: u64,
    pub svm_training_vectors: usize,
}

fn detector_seed(system_seed: u64, resource: usize, kpi: usize) -> u64 {
    crate::hashmix::mix3(system_seed, resource as u64, kpi as u64)
}

/// Trains the full system on failure-free traces, processed in the given
/// order (their timestamps must be increasing across the sequence).
pub fn train_system<F: Real>(params: &SystemParams<F>, traces: &[Trace]) -> Result<TrainedSystem<F>> {
    params.validate()?;
    let first = traces
        .first()
        .ok_or_else(|| Error::Train("no training traces given".into()))?;
    let resources = first.resources;
    for t in traces {
        if t.is_faulty() {
            return Err(Error::Train(format!(
                "training trace '{}' is not failure-free",
                t.name
            )));
        }
        if t.resources != resources {
            return Err(Error::Train(format!(
                "trace '{}' has {} resources, expected {resources}",
                t.name, t.resources
            )));
        }
    }
    let total_ticks: u64 = traces.iter().map(|t| t.ticks()).sum();
    // Flags for novelty training come from everything after the first
    // trace; with a single trace, from its second half.
    let collect_from: u64 = if traces.len() >= 2 {
        first.ticks()
    } else {
        total_ticks / 2
    };

    struct Trained<F: Real> {
        detector: KpiDetector<F>,
        likelihoods: Vec<F>,
        warm: Vec<bool>,
    }

    let columns: Vec<(usize, usize)> = (0..resources)
        .flat_map(|r| (0..KPIS_PER_RESOURCE).map(move |k| (r, k)))
        .collect();
    let trained: Vec<Trained<F>> = columns
        .par_iter()
        .map(|&(r, k)| -> Result<Trained<F>> {
            let (min, max) = params.kpi_ranges[k];
            let mut detector =
                KpiDetector::new(min, max, &params.detector, detector_seed(params.seed, r, k))?;
            let mut likelihoods = Vec::new();
            let mut warm = Vec::new();
            let mut global_tick = 0u64;
            for trace in traces {
                for t in 0..trace.ticks() {
                    let v = detector.step(
                        F::of(trace.kpi(t, r, k)),
                        trace.timestamp(t).timestamp(),
                        true,
                    )?;
                    if global_tick >= collect_from {
                        likelihoods.push(v.likelihood);
                        warm.push(!detector.in_warmup());
                    }
                    global_tick += 1;
                }
            }
            Ok(Trained {
                detector,
                likelihoods,
                warm,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sample_count = trained[0].likelihoods.len();
    if sample_count < 10 {
        return Err(Error::Train(format!(
            "only {sample_count} flag samples for novelty training; need at least 10"
        )));
    }

    let gamma = default_gamma::<F>(KPIS_PER_RESOURCE);
    let rule = params.detector.flag_rule;
    let pairs: Vec<(usize, usize)> = (0..params.epsilons.len())
        .flat_map(|e| (0..resources).map(move |r| (e, r)))
        .collect();
    let flat: Vec<OneClassSvm<F>> = pairs
        .par_iter()
        .map(|&(e, r)| -> Result<OneClassSvm<F>> {
            let eps = params.epsilons[e];
            let vectors: Vec<Vec<F>> = (0..sample_count)
                .map(|i| {
                    (0..KPIS_PER_RESOURCE)
                        .map(|k| {
                            let d = &trained[r * KPIS_PER_RESOURCE + k];
                            let flagged = d.warm[i] && is_anomalous(d.likelihoods[i], eps, rule);
                            if flagged {
                                F::one()
                            } else {
                                F::zero()
                            }
                        })
                        .collect()
                })
                .collect();
            OneClassSvm::train(&vectors, params.nu, gamma)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut svms: Vec<Vec<OneClassSvm<F>>> = Vec::with_capacity(params.epsilons.len());
    let mut it = flat.into_iter();
    for _ in 0..params.epsilons.len() {
        svms.push(it.by_ref().take(resources).collect());
    }

    Ok(TrainedSystem {
        params: params.clone(),
        resources,
        detectors: trained.into_iter().map(|t| t.detector).collect(),
        svms,
        trained_ticks: total_ticks,
        svm_training_vectors: sample_count,
    })
}

/// Per-KPI likelihood series for one evaluation run. Detectors keep
/// learning online during the run (matching how they were trained, so
/// likelihood statistics stay calibrated), but each run streams through
/// its own clones: the trained system is untouched and runs are
/// independent.
#[derive(Debug, Clone)]
pub struct RunEval<F: Real> {
    /// `likelihoods[resource * 5 + kpi][tick]`
    pub likelihoods: Vec<Vec<F>>,
    /// Whether the detector was past warmup at each tick (parallel to
    /// `likelihoods`).
    pub warm: Vec<Vec<bool>>,
    pub ticks: u64,
}

/// Streams one run through clones of the trained detectors.
pub fn eval_run<F: Real>(system: &TrainedSystem<F>, trace: &Trace) -> Result<RunEval<F>> {
    if trace.resources != system.resources {
        return Err(Error::data(format!(
            "trace '{}' has {} resources, model expects {}",
            trace.name, trace.resources, system.resources
        )));
    }
    let results: Vec<(Vec<F>, Vec<bool>)> = system
        .detectors
        .par_iter()
        .enumerate()
        .map(|(idx, base)| -> Result<(Vec<F>, Vec<bool>)> {
            let (r, k) = (idx / KPIS_PER_RESOURCE, idx % KPIS_PER_RESOURCE);
            let mut det = base.clone();
            let mut ls = Vec::with_capacity(trace.ticks() as usize);
            let mut warm = Vec::with_capacity(trace.ticks() as usize);
            for t in 0..trace.ticks() {
                let v = det.step(
                    F::of(trace.kpi(t, r, k)),
                    trace.timestamp(t).timestamp(),
                    true,
                )?;
                ls.push(v.likelihood);
                warm.push(!det.in_warmup());
            }
            Ok((ls, warm))
        })
        .collect::<Result<Vec<_>>>()?;
    let (likelihoods, warm) = results.into_iter().unzip();
    Ok(RunEval {
        likelihoods,
        warm,
        ticks: trace.ticks(),
    })
}

/// Per-resource SVM outlier matrix (ticks x resources) at one threshold.
pub fn outlier_matrix<F: Real>(
    system: &TrainedSystem<F>,
    eval: &RunEval<F>,
    epsilon_index: usize,
) -> Result<Vec<Vec<bool>>> {
    let eps = system.params.epsilons[epsilon_index];
    let rule = system.params.detector.flag_rule;
    let mut out = Vec::with_capacity(eval.ticks as usize);
    let mut features = vec![F::zero(); KPIS_PER_RESOURCE];
    for t in 0..eval.ticks as usize {
        let mut row = Vec::with_capacity(system.resources);
        for r in 0..system.resources {
            for (k, feature) in features.iter_mut().enumerate() {
                let idx = r * KPIS_PER_RESOURCE + k;
                let flagged =
                    eval.warm[idx][t] && is_anomalous(eval.likelihoods[idx][t], eps, rule);
                *feature = if flagged { F::one() } else { F::zero() };
            }
            row.push(system.svms[epsilon_index][r].is_outlier(&features)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Applies the n-consecutive confirmation per resource.
pub fn verdict_matrix(outliers: &[Vec<bool>], n: u32) -> Result<Vec<Vec<bool>>> {
    let resources = outliers.first().map_or(0, |r| r.len());
    let mut streaks: Vec<ConfirmationStreak> = (0..resources)
        .map(|_| ConfirmationStreak::new(n))
        .collect::<Result<Vec<_>>>()?;
    Ok(outliers
        .iter()
        .map(|row| {
            row.iter()
                .zip(streaks.iter_mut())
                .map(|(&o, s)| s.update(o))
                .collect()
        })
        .collect())
}

/// Full prediction pass for one run under one configuration.
pub fn predict_run<F: Real>(
    system: &TrainedSystem<F>,
    trace: &Trace,
    config: &SweepConfig,
) -> Result<Vec<GlobalPrediction>> {
    let eval = eval_run(system, trace)?;
    let eps_idx = system.params.epsilon_index(config.epsilon)?;
    let outliers = outlier_matrix(system, &eval, eps_idx)?;
    let verdicts = verdict_matrix(&outliers, config.n)?;
    scan_events(&verdicts, config.strategy, system.resources)
}

/// Sweep results: one report row per configuration plus fault-type
/// aggregates pooled over the whole grid.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub reports: Vec<ConfigReport>,
    pub per_fault: Vec<PerFaultRow>,
    /// All (configuration, run) outcomes in grid order.
    pub outcomes: Vec<(SweepConfig, Vec<RunOutcome>)>,
}

impl SweepOutput {
    /// Best row by F-measure (ties: higher precision, then grid order).
    pub fn best(&self) -> &ConfigReport {
        self.reports
            .iter()
            .reduce(|best, r| {
                if r.f_measure > best.f_measure
                    || (r.f_measure == best.f_measure && r.precision > best.precision)
                {
                    r
                } else {
                    best
                }
            })
            .expect("grid is never empty")
    }
}

/// Runs every configuration over every run. Detector evaluation happens
/// once per run; outlier matrices once per (run, epsilon); confirmation
/// and fusion once per (run, epsilon, n, strategy).
pub fn sweep<F: Real>(system: &TrainedSystem<F>, traces: &[Trace]) -> Result<SweepOutput> {
    if traces.is_empty() {
        return Err(Error::data("no evaluation traces given"));
    }
    let configs = enumerate_configs();
    for c in &configs {
        system.params.epsilon_index(c.epsilon)?;
    }

    let evals: Vec<RunEval<F>> = traces
        .par_iter()
        .map(|t| eval_run(system, t))
        .collect::<Result<Vec<_>>>()?;

    // verdicts[run][epsilon][n] -> ticks x resources
    let verdicts: Vec<Vec<Vec<Vec<Vec<bool>>>>> = evals
        .par_iter()
        .map(|eval| -> Result<_> {
            let mut per_eps = Vec::with_capacity(system.params.epsilons.len());
            for e in 0..system.params.epsilons.len() {
                let outliers = outlier_matrix(system, eval, e)?;
                let per_n = crate::eval::N_VALUES
                    .iter()
                    .map(|&n| verdict_matrix(&outliers, n))
                    .collect::<Result<Vec<_>>>()?;
                per_eps.push(per_n);
            }
            Ok(per_eps)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(configs.len());
    let mut outcomes = Vec::with_capacity(configs.len());
    for config in configs {
        let eps_idx = system.params.epsilon_index(config.epsilon)?;
        let n_idx = crate::eval::N_VALUES
            .iter()
            .position(|&n| n == config.n)
            .expect("grid n");
        let mut run_outcomes = Vec::with_capacity(traces.len());
        for (run, trace) in traces.iter().enumerate() {
            let events = scan_events(
                &verdicts[run][eps_idx][n_idx],
                config.strategy,
                system.resources,
            )?;
            run_outcomes.push(evaluate_run(trace, &events)?);
        }
        reports.push(aggregate(config, &run_outcomes));
        outcomes.push((config, run_outcomes));
    }

    let pooled: Vec<RunOutcome> = outcomes
        .iter()
        .flat_map(|(_, os)| os.iter().cloned())
        .collect();
    Ok(SweepOutput {
        reports,
        per_fault: per_fault(&pooled),
        outcomes,
    })
}

/// Prediction-event log CSV (`timestamp,strategy,detail`).
pub fn prediction_log_csv(trace: &Trace, events: &[GlobalPrediction]) -> String {
    let mut out = String::from("timestamp,strategy,detail\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{}\n",
            trace
                .timestamp(e.tick)
                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            e.strategy.name(),
            e.trigger,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::global::Strategy;
    use crate::scenario::{ActivationPattern, FaultSpec, FaultType, ScenarioConfig};
    use crate::simulate::run_scenario;

    /// Small system for fast tests: coarse encoders, short likelihood
    /// window, two resources.
    fn small_params() -> SystemParams<f64> {
        let mut p = SystemParams::default();
        p.detector.scalar_buckets = 40;
        p.detector.scalar_w = 7;
        p.detector.tod_bucket_minutes = 120;
        p.detector.tod_w = 3;
        p.detector.likelihood.window = 60;
        p.detector.likelihood.short_window = 5;
        p.detector.sp.num_columns = 128;
        p.detector.sp.active_count = 6;
        p.epsilons = vec![0.8, 0.9];
        p
    }

    fn training_traces(resources: usize, ticks: u64) -> Vec<Trace> {
        let mut a = ScenarioConfig::new("w1", 5, ticks, resources);
        a.tick_minutes = 5;
        let mut b = ScenarioConfig::new("w2", 6, ticks, resources);
        b.tick_minutes = 5;
        b.start = a.start + chrono::Duration::minutes((ticks * 5) as i64);
        vec![run_scenario(&a).unwrap(), run_scenario(&b).unwrap()]
    }

    #[test]
    fn train_eval_and_predict_round() {
        let params = small_params();
        let traces = training_traces(2, 400);
        let system = train_system(&params, &traces).unwrap();
        assert_eq!(system.detectors.len(), 2 * KPIS_PER_RESOURCE);
        assert_eq!(system.svms.len(), 2);
        assert_eq!(system.svms[0].len(), 2);
        assert_eq!(system.svm_training_vectors, 400);

        let mut eval_cfg = ScenarioConfig::new("ev", 9, 120, 2);
        eval_cfg.tick_minutes = 5;
        eval_cfg.start = traces[1].timestamp(traces[1].ticks() - 1) + chrono::Duration::minutes(5);
        let run = run_scenario(&eval_cfg).unwrap();
        let eval = eval_run(&system, &run).unwrap();
        assert_eq!(eval.likelihoods.len(), 2 * KPIS_PER_RESOURCE);
        assert_eq!(eval.ticks, 120);

        let config = SweepConfig {
            epsilon: 0.9,
            n: 1,
            strategy: Strategy::SingleResource { x: 1 },
        };
        let events = predict_run(&system, &run, &config).unwrap();
        // Clean continuation of the training regime: no event flood.
        assert!(events.len() <= 3, "{} events on a clean run", events.len());
    }

    #[test]
    fn evaluation_never_mutates_the_trained_system() {
        let params = small_params();
        let traces = training_traces(2, 400);
        let system = train_system(&params, &traces).unwrap();
        let before = bincode::serialize(&system).unwrap();

        let mut cfg = ScenarioConfig::new("ev", 11, 80, 2);
        cfg.tick_minutes = 5;
        cfg.start = traces[1].timestamp(traces[1].ticks() - 1) + chrono::Duration::minutes(5);
        let run = run_scenario(&cfg).unwrap();
        let a = eval_run(&system, &run).unwrap();
        let b = eval_run(&system, &run).unwrap();
        assert_eq!(a.likelihoods, b.likelihoods);
        assert_eq!(before, bincode::serialize(&system).unwrap());
    }

    #[test]
    fn training_rejects_faulty_traces() {
        let params = small_params();
        let cfg = ScenarioConfig::new("bad", 5, 400, 2).with_fault(FaultSpec::standard(
            FaultType::MemoryLeak,
            ActivationPattern::Constant,
            0,
        ));
        let trace = run_scenario(&cfg).unwrap();
        assert!(train_system(&params, &[trace]).is_err());
    }

    #[test]
    fn epsilon_lookup_and_errors() {
        let params: SystemParams<f64> = SystemParams::default();
        assert_eq!(params.epsilon_index(0.9).unwrap(), 2);
        assert_eq!(params.epsilon_index(0.80).unwrap(), 0);
        assert!(params.epsilon_index(0.5).is_err());
    }

    #[test]
    fn verdict_matrix_applies_confirmation() {
        let outliers = vec![
            vec![true, false],
            vec![true, true],
            vec![false, true],
            vec![true, true],
        ];
        let v1 = verdict_matrix(&outliers, 1).unwrap();
        assert_eq!(v1, outliers);
        let v2 = verdict_matrix(&outliers, 2).unwrap();
        assert_eq!(
            v2,
            vec![
                vec![false, false],
                vec![true, false],  // r0 streak 2; r1 streak 1
                vec![false, true],  // r0 reset; r1 streak 2
                vec![false, true],  // r0 restarts; r1 streak 3 holds
            ]
        );
    }

    #[test]
    fn fault_run_is_detected_by_a_permissive_config() {
        let params = small_params();
        let traces = training_traces(2, 600);
        let system = train_system(&params, &traces).unwrap();

        let mut cfg = ScenarioConfig::new("faulty", 13, 300, 2);
        cfg.tick_minutes = 5;
        cfg.start = traces[1].timestamp(traces[1].ticks() - 1) + chrono::Duration::minutes(5);
        let mut fault =
            FaultSpec::standard(FaultType::PacketLoss, ActivationPattern::Constant, 0);
        fault.start_tick = 40;
        fault.period = 3; // 5-minute ticks: activate briskly
        let run = run_scenario(&cfg.with_fault(fault)).unwrap();
        assert!(run.failure.is_some(), "fault must drive the run down");

        let config = SweepConfig {
            epsilon: 0.8,
            n: 1,
            strategy: Strategy::SingleResource { x: 1 },
        };
        let events = predict_run(&system, &run, &config).unwrap();
        let outcome = evaluate_run(&run, &events).unwrap();
        assert!(outcome.predicted, "no prediction before the failure");
        assert!(outcome.lead_min.unwrap() > 0.0);
    }
}

//! Deterministic synthetic testbed: workload, resource dynamics, fault
//! injection, and the ground-truth failure oracle.
//!
//! Resources form a call pipeline. Each tick, a diurnal/weekly arrival
//! rate enters resource 0 and each stage forwards the fraction of traffic
//! it completes (reduced by packet drops and by CPU/memory saturation),
//! so a fault on one resource also shifts the KPIs of everything
//! downstream of it. System call success is the product of the
//! per-resource success rates, which is what the quality-of-service
//! failure rule watches.
//!
//! All randomness is counter-based (hash of seed, tick, channel), so a
//! zero-magnitude fault yields a byte-identical trace to the fault-free
//! run with the same seed, and the activation schedule draws never
//! perturb the KPI noise.

use chrono::{Datelike, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hashmix::{mix3, splitmix64, unit_noise};
use crate::scenario::{ActivationPattern, FaultSpec, FaultType, ScenarioConfig};
use crate::trace::{Activation, FailureEvent, FailureKind, Trace, KPIS_PER_RESOURCE};

/// A run fails on quality of service when system call success drops
/// strictly below this floor.
pub const QOS_FLOOR: f64 = 0.60;

/// A run fails by crash when any resource's memory reaches this level.
pub const MEM_CAPACITY: f64 = 100.0;

// Baseline KPI shape.
const CPU_BASE: f64 = 6.0;
const CPU_PER_REQ: f64 = 0.07;
const MEM_BASE: f64 = 35.0;
const MEM_DAILY_SWING: f64 = 3.0;
const NET_PER_REQ: f64 = 0.9;
const SUCC_BASE: f64 = 0.998;

// Saturation coupling: completion quality degrades once CPU or memory
// near their limits.
const CPU_SOFT_LIMIT: f64 = 75.0;
const CPU_SOFT_RANGE: f64 = 15.0;
const MEM_SOFT_LIMIT: f64 = 97.0;
const MEM_SOFT_RANGE: f64 = 3.0;
const QUALITY_FLOOR: f64 = 0.05;

// Fault dynamics.
const HOG_DECAY_TICKS: f64 = 120.0;
const SURGE_DECAY_TICKS: f64 = 40.0;
// Per-tick fraction of the gap between demanded and realized surge
// traffic that actually lands; models queue buildup during a spike.
const SURGE_RAMP: f64 = 0.26;
const DROP_CAP: f64 = 0.9;

// Per-resource measurement factors (cycled when R > 6): stages see
// slightly different volumes of the same call flow.
const RESOURCE_FACTOR: [f64; 6] = [1.05, 0.95, 1.10, 0.90, 1.00, 1.02];

// KPI noise amplitudes (absolute units). Sized to span a few encoder
// buckets at default detector resolution, so measurement noise is part
// of what the detectors must model rather than vanishing in bucketing.
const CPU_NOISE: f64 = 2.0;
const MEM_NOISE: f64 = 2.0;
const NET_NOISE: f64 = 30.0;
const REQ_JITTER: f64 = 0.05; // relative
const SUCC_NOISE: f64 = 0.008;

// Noise channel layout for the counter-based generator.
const CH_RATE: u64 = 10_000;
fn kpi_channel(resource: usize, kpi: usize) -> u64 {
    (resource * KPIS_PER_RESOURCE + kpi) as u64
}

fn gaussian_bump(x: f64) -> f64 {
    (-0.5 * x * x).exp()
}

/// Circular distance in hours on the 24h clock.
fn hour_distance(h: f64, peak: f64) -> f64 {
    let d = (h - peak).abs();
    d.min(24.0 - d)
}

/// Deterministic diurnal shape: morning and evening peaks with a
/// nighttime trough. Dimensionless, max ~1.2.
fn diurnal_shape(minute_of_day: f64) -> f64 {
    let h = minute_of_day / 60.0;
    0.22 + 0.95 * gaussian_bump(hour_distance(h, 9.0) / 2.6)
        + 0.80 * gaussian_bump(hour_distance(h, 19.0) / 3.0)
}

/// Deterministic arrival rate (calls/min) at a tick: diurnal shape times
/// the weekday/weekend factor, no noise.
pub fn workload_base(cfg: &ScenarioConfig, tick: u64) -> f64 {
    let ts = cfg.start + chrono::Duration::minutes(tick as i64 * cfg.tick_minutes as i64);
    let minute_of_day = (ts.hour() * 60 + ts.minute()) as f64;
    let day_factor = match ts.weekday() {
        Weekday::Sat | Weekday::Sun => cfg.workload.weekend_factor,
        _ => 1.0,
    };
    cfg.workload.base_rate * diurnal_shape(minute_of_day) * day_factor
}

/// Arrival rate with seeded multiplicative noise; strictly positive.
pub fn gen_workload(cfg: &ScenarioConfig, tick: u64) -> f64 {
    let eta = unit_noise(mix3(cfg.seed, tick, CH_RATE));
    workload_base(cfg, tick) * (1.0 + cfg.workload.noise * eta)
}

/// Realized activation ticks for a fault over `duration` ticks.
pub fn activation_schedule(fault: &FaultSpec, duration: u64, seed: u64) -> Vec<u64> {
    if fault.start_tick >= duration {
        return Vec::new();
    }
    match fault.pattern {
        ActivationPattern::Constant => (fault.start_tick..duration)
            .step_by(fault.period.max(1) as usize)
            .collect(),
        ActivationPattern::Exponential => {
            let mut ticks = vec![fault.start_tick];
            let mut t = fault.start_tick;
            let mut gap = fault.period as f64;
            loop {
                t += (gap.round() as u64).max(1);
                if t >= duration {
                    break;
                }
                ticks.push(t);
                gap *= fault.ratio;
            }
            ticks
        }
        ActivationPattern::Random => {
            let count = (duration - fault.start_tick).div_ceil(fault.period.max(1));
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xAC71_5C4E_D01E_u64));
            let mut ticks: Vec<u64> = (0..count)
                .map(|_| rng.gen_range(fault.start_tick..duration))
                .collect();
            ticks.sort_unstable();
            ticks
        }
    }
}

/// Mutable fault effect levels carried across ticks.
#[derive(Debug, Clone, Default)]
struct FaultState {
    hog: f64,
    leak: f64,
    drop: f64,
    /// Nominal extra arrival rate demanded by workload activations.
    surge_target: f64,
    /// Extra arrival rate actually reaching the system; lags the target
    /// because queued traffic builds up over a few ticks rather than
    /// hitting full volume instantly.
    surge: f64,
}

impl FaultState {
    fn decay(&mut self) {
        self.hog *= (-1.0 / HOG_DECAY_TICKS).exp();
        self.surge_target *= (-1.0 / SURGE_DECAY_TICKS).exp();
    }

    /// Moves the realized surge toward its target after activations land.
    fn settle(&mut self) {
        self.surge += SURGE_RAMP * (self.surge_target - self.surge);
    }

    fn activate(&mut self, fault: &FaultSpec) {
        match fault.fault_type {
            FaultType::CpuHog => self.hog += fault.magnitude,
            FaultType::MemoryLeak => self.leak += fault.magnitude,
            FaultType::PacketLoss => self.drop = (self.drop + fault.magnitude).min(DROP_CAP),
            FaultType::ExcessiveWorkload => self.surge_target += fault.magnitude,
        }
    }
}

/// Ground-truth failure rule over one tick's KPI row: crash if any
/// resource's memory reached capacity, else quality-of-service failure if
/// system call success (product of per-resource success rates) is
/// strictly below the floor.
pub fn failure_oracle(row: &[f64], resources: usize) -> Option<FailureKind> {
    for r in 0..resources {
        if row[r * KPIS_PER_RESOURCE + 1] >= MEM_CAPACITY {
            return Some(FailureKind::Crash);
        }
    }
    let success: f64 = (0..resources)
        .map(|r| row[r * KPIS_PER_RESOURCE + 4])
        .product();
    (success < QOS_FLOOR).then_some(FailureKind::Qos)
}

/// Runs a scenario to completion: full deterministic trace, stopping at
/// the first failure event or at duration end.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace> {
    cfg.validate()?;
    let schedule: Vec<u64> = cfg
        .fault
        .as_ref()
        .map(|f| activation_schedule(f, cfg.duration_ticks, cfg.seed))
        .unwrap_or_default();
    let mut next_activation = 0usize;

    let mut state = FaultState::default();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.duration_ticks as usize);
    let mut activations: Vec<Activation> = Vec::new();
    let mut failure = None;

    for tick in 0..cfg.duration_ticks {
        state.decay();
        while next_activation < schedule.len() && schedule[next_activation] == tick {
            let fault = cfg.fault.as_ref().expect("schedule implies fault");
            state.activate(fault);
            activations.push(Activation {
                tick,
                fault_type: fault.fault_type,
            });
            next_activation += 1;
        }
        state.settle();

        let fault = cfg.fault.as_ref();
        let target = |ft: FaultType| -> Option<usize> {
            fault
                .filter(|f| f.fault_type == ft)
                .map(|f| f.target)
        };

        let rate = gen_workload(cfg, tick) * (1.0 + state.surge);
        let ts = cfg.start + chrono::Duration::minutes(tick as i64 * cfg.tick_minutes as i64);
        let minutes = (ts.hour() * 60 + ts.minute()) as f64;

        let mut row = vec![0.0; cfg.resources * KPIS_PER_RESOURCE];
        let mut inflow = rate;
        for r in 0..cfg.resources {
            let noise = |kpi: usize| unit_noise(mix3(cfg.seed, tick, kpi_channel(r, kpi)));
            let factor = RESOURCE_FACTOR[r % RESOURCE_FACTOR.len()];
            let volume = inflow * factor;

            let hog = if target(FaultType::CpuHog) == Some(r) {
                state.hog
            } else {
                0.0
            };
            let leak = if target(FaultType::MemoryLeak) == Some(r) {
                state.leak
            } else {
                0.0
            };
            let drop = if target(FaultType::PacketLoss) == Some(r) {
                state.drop
            } else {
                0.0
            };

            let cpu = CPU_BASE + CPU_PER_REQ * volume + hog + CPU_NOISE * noise(0);
            let phase = r as f64 * 0.9;
            let mem = MEM_BASE
                + MEM_DAILY_SWING * (minutes / 1440.0 * std::f64::consts::TAU + phase).sin()
                + leak
                + MEM_NOISE * noise(1);

            let quality = (1.0
                - 0.5 * ((cpu - CPU_SOFT_LIMIT).max(0.0) / CPU_SOFT_RANGE)
                - 0.5 * ((mem - MEM_SOFT_LIMIT).max(0.0) / MEM_SOFT_RANGE))
                .clamp(QUALITY_FLOOR, 1.0);
            let pass = SUCC_BASE * (1.0 - drop) * quality;

            let req = volume * (1.0 + REQ_JITTER * noise(3));
            let net = NET_PER_REQ * volume * (1.0 - drop) + NET_NOISE * noise(2);
            let succ = pass + SUCC_NOISE * noise(4);

            let base = r * KPIS_PER_RESOURCE;
            row[base] = cpu.clamp(0.0, 100.0);
            row[base + 1] = mem.clamp(0.0, MEM_CAPACITY);
            row[base + 2] = net.max(0.0);
            row[base + 3] = req.max(0.0);
            row[base + 4] = succ.clamp(0.0, 1.0);

            inflow *= pass;
        }

        let event = failure_oracle(&row, cfg.resources);
        rows.push(row);
        if let Some(kind) = event {
            failure = Some(FailureEvent { tick, kind });
            break;
        }
    }

    // Activations after the failure tick never happened.
    let end = rows.len() as u64;
    activations.retain(|a| a.tick < end);

    Ok(Trace {
        name: cfg.name.clone(),
        start: cfg.start,
        tick_minutes: cfg.tick_minutes,
        resources: cfg.resources,
        rows,
        activations,
        failure,
    })
}

//! Scenario descriptions for the synthetic testbed.
//!
//! A scenario pins everything a run needs to be reproducible: seed, clock
//! geometry, resource count, workload shape parameters, and at most one
//! injected fault. Scenarios round-trip through TOML so campaigns can be
//! generated, inspected, and replayed from plain files.

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Injected fault class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultType {
    /// Competing load steals CPU from the target resource.
    CpuHog,
    /// Non-reclaimed memory accumulates on the target resource.
    MemoryLeak,
    /// The target resource drops a growing fraction of its traffic.
    PacketLoss,
    /// System-wide arrival-rate surge.
    ExcessiveWorkload,
}

impl FaultType {
    pub const ALL: [FaultType; 4] = [
        FaultType::CpuHog,
        FaultType::MemoryLeak,
        FaultType::PacketLoss,
        FaultType::ExcessiveWorkload,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FaultType::CpuHog => "cpu_hog",
            FaultType::MemoryLeak => "memory_leak",
            FaultType::PacketLoss => "packet_loss",
            FaultType::ExcessiveWorkload => "excessive_workload",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown fault type '{s}'")))
    }
}

impl std::fmt::Display for FaultType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How fault activations are spread over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationPattern {
    /// Fixed period between activations.
    Constant,
    /// Gaps shrink geometrically (period, period*ratio, ...), floored at
    /// one tick.
    Exponential,
    /// Uniformly random activation ticks with the same expected count as
    /// the constant pattern.
    Random,
}

impl ActivationPattern {
    pub const ALL: [ActivationPattern; 3] = [
        ActivationPattern::Constant,
        ActivationPattern::Exponential,
        ActivationPattern::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ActivationPattern::Constant => "constant",
            ActivationPattern::Exponential => "exponential",
            ActivationPattern::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown activation pattern '{s}'")))
    }
}

impl std::fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One injected fault: what, where, when, and how hard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub fault_type: FaultType,
    pub pattern: ActivationPattern,
    /// Target resource index; ignored by `excessive_workload`, which is
    /// system-wide.
    pub target: usize,
    /// First tick at which the fault may activate.
    pub start_tick: u64,
    /// Base inter-activation gap in ticks.
    pub period: u64,
    /// Gap shrink factor for the exponential pattern (in (0,1]).
    pub ratio: f64,
    /// Per-activation effect size (units depend on the fault type).
    pub magnitude: f64,
}

impl FaultSpec {
    /// Calibrated defaults: every fault type at these magnitudes drives a
    /// run to failure well before a standard 120-tick evaluation window
    /// ends, while zero-magnitude variants leave the trace untouched.
    pub fn standard(fault_type: FaultType, pattern: ActivationPattern, target: usize) -> Self {
        let (period, magnitude) = match fault_type {
            FaultType::CpuHog => (10, 10.0),
            FaultType::MemoryLeak => (10, 10.0),
            FaultType::PacketLoss => (10, 0.09),
            FaultType::ExcessiveWorkload => (10, 1.0),
        };
        FaultSpec {
            fault_type,
            pattern,
            target,
            start_tick: 30,
            period,
            ratio: 0.7,
            magnitude,
        }
    }

    pub fn validate(&self, resources: usize) -> Result<()> {
        if self.fault_type != FaultType::ExcessiveWorkload && self.target >= resources {
            return Err(Error::config(format!(
                "fault target {} out of range for {} resources",
                self.target, resources
            )));
        }
        if self.period == 0 {
            return Err(Error::config("fault period must be >= 1 tick"));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::config("fault ratio must be in (0, 1]"));
        }
        if !self.magnitude.is_finite() || self.magnitude < 0.0 {
            return Err(Error::config("fault magnitude must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Workload shape: weekly/diurnal arrival-rate curve with seeded noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadParams {
    /// Nominal arrival rate (calls/min) at the reference weekday peak.
    pub base_rate: f64,
    /// Weekend arrival-rate multiplier (< 1).
    pub weekend_factor: f64,
    /// Multiplicative noise amplitude (fraction of the deterministic
    /// rate).
    pub noise: f64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            base_rate: 600.0,
            weekend_factor: 0.55,
            noise: 0.08,
        }
    }
}

/// Everything a deterministic run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Simulated wall-clock start (drives diurnal/weekly patterns).
    pub start: DateTime<Utc>,
    pub tick_minutes: u32,
    pub duration_ticks: u64,
    pub resources: usize,
    #[serde(default)]
    pub workload: WorkloadParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSpec>,
}

/// Default simulated epoch: a Monday at midnight, so week arithmetic is
/// easy to reason about in scenarios and tests.
pub fn default_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, seed: u64, duration_ticks: u64, resources: usize) -> Self {
        ScenarioConfig {
            name: name.into(),
            seed,
            start: default_epoch(),
            tick_minutes: 1,
            duration_ticks,
            resources,
            workload: WorkloadParams::default(),
            fault: None,
        }
    }

    pub fn with_fault(mut self, fault: FaultSpec) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.resources == 0 {
            return Err(Error::config("resource count must be >= 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed must fit a TOML integer (< 2^63)"));
        }
        if self.tick_minutes == 0 {
            return Err(Error::config("tick length must be >= 1 minute"));
        }
        if self.duration_ticks == 0 {
            return Err(Error::config("duration must be >= 1 tick"));
        }
        if !self.workload.base_rate.is_finite() || self.workload.base_rate <= 0.0 {
            return Err(Error::config("base rate must be positive and finite"));
        }
        if !(self.workload.weekend_factor > 0.0 && self.workload.weekend_factor <= 1.0) {
            return Err(Error::config("weekend factor must be in (0, 1]"));
        }
        if !(self.workload.noise >= 0.0 && self.workload.noise < 1.0) {
            return Err(Error::config("workload noise must be in [0, 1)"));
        }
        if let Some(f) = &self.fault {
            f.validate(self.resources)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::new("demo", 42, 480, 6).with_fault(FaultSpec::standard(
            FaultType::PacketLoss,
            ActivationPattern::Exponential,
            2,
        ));
        let text = cfg.to_toml().unwrap();
        let back = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn toml_round_trip_without_fault() {
        let cfg = ScenarioConfig::new("clean", 1, 100, 3);
        let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
        assert!(back.fault.is_none());
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = ScenarioConfig::new("bad", 1, 100, 0);
        assert!(cfg.validate().is_err());
        cfg.resources = 6;
        cfg.tick_minutes = 0;
        assert!(cfg.validate().is_err());
        cfg.tick_minutes = 1;
        cfg.workload.noise = 1.5;
        assert!(cfg.validate().is_err());
        cfg.workload.noise = 0.05;
        cfg.fault = Some(FaultSpec {
            target: 9,
            ..FaultSpec::standard(FaultType::CpuHog, ActivationPattern::Constant, 0)
        });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn workload_fault_ignores_target_bound() {
        let mut f = FaultSpec::standard(
            FaultType::ExcessiveWorkload,
            ActivationPattern::Constant,
            0,
        );
        f.target = 99; // system-wide: target is ignored
        assert!(f.validate(6).is_ok());
    }

    #[test]
    fn names_parse_back() {
        for t in FaultType::ALL {
            assert_eq!(FaultType::parse(t.name()).unwrap(), t);
        }
        for p in ActivationPattern::ALL {
            assert_eq!(ActivationPattern::parse(p.name()).unwrap(), p);
        }
        assert!(FaultType::parse("gremlins").is_err());
    }

    #[test]
    fn default_epoch_is_a_monday() {
        use chrono::Datelike;
        assert_eq!(default_epoch().weekday(), chrono::Weekday::Mon);
    }
}

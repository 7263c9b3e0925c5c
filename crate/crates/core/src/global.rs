//! System-level failure prediction fused from per-resource verdicts.
//!
//! Two strategies:
//!
//! * single-resource: fire when any one resource has been locally positive
//!   for `x` consecutive ticks (streaks on different resources never
//!   combine);
//! * vote-based: fire when at least half of the resources (⌈R/2⌉) are
//!   positive, for `y` consecutive ticks.
//!
//! After firing, the predictor holds in a refractory state until an
//! all-false tick re-arms it, so one incident yields one prediction event
//! instead of a flood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fusion strategy and its streak threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One resource positive for `x` consecutive ticks.
    SingleResource { x: u32 },
    /// At least ⌈R/2⌉ resources positive, `y` consecutive ticks.
    VoteBased { y: u32 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::SingleResource { .. } => "single_resource",
            Strategy::VoteBased { .. } => "vote_based",
        }
    }

    pub fn threshold(&self) -> u32 {
        match *self {
            Strategy::SingleResource { x } => x,
            Strategy::VoteBased { y } => y,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::SingleResource { x } => write!(f, "single_resource(x={x})"),
            Strategy::VoteBased { y } => write!(f, "vote_based(y={y})"),
        }
    }
}

/// What tripped the prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trigger {
    /// The resource whose streak reached `x` (lowest index on ties).
    Resource(usize),
    /// The resources voting positive on the firing tick.
    Voters(Vec<usize>),
}

impl std::fmt::Display for Trigger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Trigger::Resource(r) => write!(f, "r{r}"),
            Trigger::Voters(v) => {
                for (i, r) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "r{r}")?;
                }
                Ok(())
            }
        }
    }
}

/// One system-level prediction event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalPrediction {
    /// 0-based tick index of the verdict vector that fired.
    pub tick: u64,
    pub strategy: Strategy,
    pub trigger: Trigger,
}

/// Incremental fusion over a stream of per-resource verdict vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalPredictor {
    strategy: Strategy,
    resources: usize,
    /// Consecutive-true run length per resource.
    streaks: Vec<u32>,
    /// Consecutive majority-tick run length.
    majority_streak: u32,
    armed: bool,
    tick: u64,
    /// Condition level at the last consumed tick, ignoring the refractory
    /// hold (used by invariance checks).
    condition: bool,
}

impl GlobalPredictor {
    pub fn new(strategy: Strategy, resources: usize) -> Result<Self> {
        if resources == 0 {
            return Err(Error::config("resource count must be >= 1"));
        }
        if strategy.threshold() == 0 {
            return Err(Error::config("streak threshold must be >= 1"));
        }
        Ok(GlobalPredictor {
            strategy,
            resources,
            streaks: vec![0; resources],
            majority_streak: 0,
            armed: true,
            tick: 0,
            condition: false,
        })
    }

    /// Majority quorum: at least half of the resources, rounding up.
    pub fn quorum(&self) -> usize {
        self.resources.div_ceil(2)
    }

    /// Consumes one tick of per-resource verdicts; returns a prediction
    /// event if the strategy fires on an armed predictor.
    pub fn step(&mut self, verdicts: &[bool]) -> Result<Option<GlobalPrediction>> {
        if verdicts.len() != self.resources {
            return Err(Error::data(format!(
                "verdict vector length {} does not match resource count {}",
                verdicts.len(),
                self.resources
            )));
        }

        let trigger = match self.strategy {
            Strategy::SingleResource { x } => {
                let mut hit: Option<usize> = None;
                for (r, &v) in verdicts.iter().enumerate() {
                    if v {
                        self.streaks[r] = self.streaks[r].saturating_add(1);
                        if self.streaks[r] >= x && hit.is_none() {
                            hit = Some(r);
                        }
                    } else {
                        self.streaks[r] = 0;
                    }
                }
                hit.map(Trigger::Resource)
            }
            Strategy::VoteBased { y } => {
                let voters: Vec<usize> = verdicts
                    .iter()
                    .enumerate()
                    .filter_map(|(r, &v)| v.then_some(r))
                    .collect();
                if voters.len() >= self.quorum() {
                    self.majority_streak = self.majority_streak.saturating_add(1);
                } else {
                    self.majority_streak = 0;
                }
                (self.majority_streak >= y).then_some(Trigger::Voters(voters))
            }
        };
        self.condition = trigger.is_some();

        let event = if self.armed {
            trigger.map(|t| {
                self.armed = false;
                GlobalPrediction {
                    tick: self.tick,
                    strategy: self.strategy,
                    trigger: t,
                }
            })
        } else {
            if verdicts.iter().all(|&v| !v) {
                self.armed = true;
            }
            None
        };
        self.tick += 1;
        Ok(event)
    }

    /// Whether the strategy condition held on the last consumed tick,
    /// regardless of the refractory hold.
    pub fn condition_met(&self) -> bool {
        self.condition
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    pub fn ticks_consumed(&self) -> u64 {
        self.tick
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn resources(&self) -> usize {
        self.resources
    }

    pub fn reset(&mut self) {
        self.streaks.iter_mut().for_each(|s| *s = 0);
        self.majority_streak = 0;
        self.armed = true;
        self.tick = 0;
        self.condition = false;
    }
}

/// Runs a predictor over a whole verdict matrix (ticks x resources).
pub fn scan_events(matrix: &[Vec<bool>], strategy: Strategy, resources: usize) -> Result<Vec<GlobalPrediction>> {
    let mut p = GlobalPredictor::new(strategy, resources)?;
    let mut events = Vec::new();
    for row in matrix {
        if let Some(e) = p.step(row)? {
            events.push(e);
        }
    }
    Ok(events)
}

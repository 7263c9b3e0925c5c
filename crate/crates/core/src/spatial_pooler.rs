//! Spatial pooler: maps encoder bit vectors to a fixed-sparsity column
//! activation.
//!
//! Each column owns a random subset of input bits (its potential pool) with
//! a learned permanence per bit. A bit is connected when its permanence
//! crosses the threshold. Per step, columns are scored by how many connected
//! bits are active, and the top `active_count` columns win (global
//! inhibition, ties to the lower column index). Learning nudges winning
//! columns toward the current input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sdr::{BitBuf, Sdr};

/// Construction parameters. `potential_fraction` of the input is sampled
/// into each column's pool; initial permanences straddle the connected
/// threshold so roughly half the pool starts connected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct SpatialPoolerParams<F: Real> {
    pub num_columns: u32,
    pub active_count: u32,
    pub potential_fraction: F,
    pub connected_threshold: F,
    pub permanence_inc: F,
    pub permanence_dec: F,
    /// Exponent scale for duty-cycle boosting. Zero disables boosting,
    /// which keeps column assignments stable on streaming data.
    pub boost_strength: F,
    /// Duty-cycle averaging period in steps.
    pub duty_period: u32,
}

impl<F: Real> Default for SpatialPoolerParams<F> {
    fn default() -> Self {
        SpatialPoolerParams {
            num_columns: 512,
            active_count: 10,
            potential_fraction: F::half(),
            connected_threshold: F::half(),
            permanence_inc: F::of(0.05),
            permanence_dec: F::of(0.008),
            boost_strength: F::zero(),
            duty_period: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
struct SpSnapshot<F: Real> {
    input_size: u32,
    params: SpatialPoolerParams<F>,
    potential: Vec<Vec<u32>>,
    permanences: Vec<Vec<F>>,
    duty: Vec<F>,
    boost: Vec<F>,
    steps: u64,
}

/// Spatial pooler state. One instance per KPI stream; instances are
/// independent and may run on different threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real", from = "SpSnapshot<F>", into = "SpSnapshot<F>")]
pub struct SpatialPooler<F: Real> {
    input_size: u32,
    params: SpatialPoolerParams<F>,
    /// Per column: sorted input-bit indices of the potential pool.
    potential: Vec<Vec<u32>>,
    /// Per column: permanence per potential bit, parallel to `potential`.
    permanences: Vec<Vec<F>>,
    duty: Vec<F>,
    boost: Vec<F>,
    steps: u64,
    /// Derived: per-column mask of connected bits, rebuilt after load.
    connected: Vec<BitBuf>,
    input_mask: BitBuf,
    scores: Vec<F>,
    order: Vec<u32>,
}

impl<F: Real> From<SpSnapshot<F>> for SpatialPooler<F> {
    fn from(s: SpSnapshot<F>) -> Self {
        let mut sp = SpatialPooler {
            input_size: s.input_size,
            connected: Vec::new(),
            input_mask: BitBuf::zeroed(s.input_size),
            scores: vec![F::zero(); s.params.num_columns as usize],
            order: (0..s.params.num_columns).collect(),
            params: s.params,
            potential: s.potential,
            permanences: s.permanences,
            duty: s.duty,
            boost: s.boost,
            steps: s.steps,
        };
        sp.rebuild_connected();
        sp
    }
}

impl<F: Real> From<SpatialPooler<F>> for SpSnapshot<F> {
    fn from(sp: SpatialPooler<F>) -> Self {
        SpSnapshot {
            input_size: sp.input_size,
            params: sp.params,
            potential: sp.potential,
            permanences: sp.permanences,
            duty: sp.duty,
            boost: sp.boost,
            steps: sp.steps,
        }
    }
}

impl<F: Real> SpatialPooler<F> {
    pub fn new(input_size: u32, params: SpatialPoolerParams<F>, seed: u64) -> Result<Self> {
        if input_size == 0 {
            return Err(Error::config("spatial pooler input size must be positive"));
        }
        if params.num_columns == 0 || params.active_count == 0 {
            return Err(Error::config("column counts must be positive"));
        }
        if params.active_count >= params.num_columns {
            return Err(Error::config(format!(
                "active_count {} must be below num_columns {}",
                params.active_count, params.num_columns
            )));
        }
        let pf = params.potential_fraction.as_f64();
        if !(0.0..=1.0).contains(&pf) {
            return Err(Error::config("potential_fraction must be in [0, 1]"));
        }
        let pool_size = ((input_size as f64) * pf).round() as usize;
        if pool_size == 0 {
            return Err(Error::config("potential pool would be empty"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = params.num_columns as usize;
        let mut potential = Vec::with_capacity(n);
        let mut permanences = Vec::with_capacity(n);
        let spread = F::of(0.15);
        for _ in 0..n {
            let mut pool = sample_distinct(&mut rng, input_size, pool_size);
            pool.sort_unstable();
            let perms: Vec<F> = pool
                .iter()
                .map(|_| {
                    let u = F::of(rng.gen_range(-1.0f64..=1.0));
                    clamp01(params.connected_threshold + u * spread)
                })
                .collect();
            potential.push(pool);
            permanences.push(perms);
        }

        let mut sp = SpatialPooler {
            input_size,
            potential,
            permanences,
            duty: vec![F::zero(); n],
            boost: vec![F::one(); n],
            steps: 0,
            connected: Vec::new(),
            input_mask: BitBuf::zeroed(input_size),
            scores: vec![F::zero(); n],
            order: (0..params.num_columns).collect(),
            params,
        };
        sp.rebuild_connected();
        Ok(sp)
    }

    pub fn with_defaults(input_size: u32, seed: u64) -> Result<Self> {
        Self::new(input_size, SpatialPoolerParams::default(), seed)
    }

    pub fn num_columns(&self) -> u32 {
        self.params.num_columns
    }

    pub fn active_count(&self) -> u32 {
        self.params.active_count
    }

    pub fn input_size(&self) -> u32 {
        self.input_size
    }

    pub fn potential_pool(&self, column: u32) -> &[u32] {
        &self.potential[column as usize]
    }

    pub fn boost_factor(&self, column: u32) -> F {
        self.boost[column as usize]
    }

    fn rebuild_connected(&mut self) {
        let thr = self.params.connected_threshold;
        self.connected = self
            .potential
            .iter()
            .zip(&self.permanences)
            .map(|(pool, perms)| {
                let mut m = BitBuf::zeroed(self.input_size);
                for (&bit, &p) in pool.iter().zip(perms) {
                    if p >= thr {
                        m.set(bit);
                    }
                }
                m
            })
            .collect();
    }

    /// One pooling step: returns the active-column SDR (always exactly
    /// `active_count` columns). With `learn`, winning columns move their
    /// permanences toward the input and duty cycles/boosts update;
    /// without, the state is untouched.
    pub fn compute(&mut self, input: &Sdr, learn: bool) -> Result<Sdr> {
        if input.size() != self.input_size {
            return Err(Error::config(format!(
                "input size {} does not match pooler input size {}",
                input.size(),
                self.input_size
            )));
        }
        self.input_mask.fill_from(input);

        let n = self.params.num_columns as usize;
        for c in 0..n {
            let ov = self.connected[c].overlap_count(&self.input_mask);
            self.scores[c] = F::of_usize(ov as usize) * self.boost[c];
        }

        let k = self.params.active_count as usize;
        let scores = &self.scores;
        let better = |a: &u32, b: &u32| {
            scores[*b as usize]
                .partial_cmp(&scores[*a as usize])
                .expect("finite scores")
                .then_with(|| a.cmp(b))
        };
        for (i, c) in self.order.iter_mut().enumerate() {
            *c = i as u32;
        }
        self.order.select_nth_unstable_by(k - 1, better);
        let mut winners: Vec<u32> = self.order[..k].to_vec();
        winners.sort_unstable();

        if learn {
            let thr = self.params.connected_threshold;
            for &c in &winners {
                let ci = c as usize;
                let pool = &self.potential[ci];
                let perms = &mut self.permanences[ci];
                let conn = &mut self.connected[ci];
                for (i, &bit) in pool.iter().enumerate() {
                    let p = if self.input_mask.get(bit) {
                        perms[i] + self.params.permanence_inc
                    } else {
                        perms[i] - self.params.permanence_dec
                    };
                    let p = clamp01(p);
                    perms[i] = p;
                    if p >= thr {
                        conn.set(bit);
                    } else {
                        conn.unset(bit);
                    }
                }
            }

            let period = F::of_usize(self.params.duty_period as usize);
            let target = F::of_usize(self.params.active_count as usize)
                / F::of_usize(self.params.num_columns as usize);
            let strength = self.params.boost_strength;
            let mut wi = 0usize;
            for c in 0..n {
                let active = wi < winners.len() && winners[wi] == c as u32;
                if active {
                    wi += 1;
                }
                let x = if active { F::one() } else { F::zero() };
                self.duty[c] = self.duty[c] + (x - self.duty[c]) / period;
                self.boost[c] = if strength == F::zero() {
                    F::one()
                } else {
                    (strength * (target - self.duty[c])).exp()
                };
            }
            self.steps += 1;
        }

        Ok(Sdr::from_sorted(self.params.num_columns, winners))
    }
}

fn clamp01<F: Real>(p: F) -> F {
    if p < F::zero() {
        F::zero()
    } else if p > F::one() {
        F::one()
    } else {
        p
    }
}

/// Draws `k` distinct values from [0, n) with a partial Fisher-Yates
/// shuffle; deterministic for a given RNG state.
fn sample_distinct(rng: &mut ChaCha8Rng, n: u32, k: usize) -> Vec<u32> {
    debug_assert!(k as u32 <= n);
    let mut idx: Vec<u32> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n as usize);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

//! Temporal memory: learns column-to-column transitions and predicts the
//! next activation.
//!
//! Every column hosts `cells_per_column` cells; cells grow distal segments
//! whose synapses listen to other cells. A segment with enough connected
//! synapses onto the currently active cells makes its cell predictive for
//! the next step. Columns that activate as predicted confirm their
//! segments; columns that activate unpredicted burst (all cells fire) and
//! recruit a winner cell to learn the new context; columns that were
//! predicted but stayed silent get their segments punished.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sdr::{BitBuf, Sdr};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TemporalMemoryParams<F: Real> {
    pub cells_per_column: u32,
    /// Connected synapses onto active cells needed for a segment to
    /// activate (and thus predict).
    pub activation_threshold: u32,
    /// Potential synapses onto active cells needed for a segment to count
    /// as matching (learnable context).
    pub min_threshold: u32,
    pub connected_permanence: F,
    pub init_permanence: F,
    pub permanence_inc: F,
    pub permanence_dec: F,
    /// Decrement applied to segments that predicted a column which then
    /// stayed inactive.
    pub predicted_decrement: F,
    /// Upper bound on synapses grown per segment per step.
    pub max_new_synapses: u32,
    /// Structural caps; least-recently-matched segments are evicted when a
    /// cell is full, keeping memory bounded on noisy streams.
    pub max_segments_per_cell: u32,
    pub max_synapses_per_segment: u32,
}

impl<F: Real> Default for TemporalMemoryParams<F> {
    fn default() -> Self {
        TemporalMemoryParams {
            cells_per_column: 8,
            activation_threshold: 7,
            min_threshold: 4,
            connected_permanence: F::half(),
            init_permanence: F::of(0.21),
            permanence_inc: F::of(0.1),
            permanence_dec: F::of(0.1),
            predicted_decrement: F::of(0.004),
            max_new_synapses: 16,
            max_segments_per_cell: 32,
            max_synapses_per_segment: 48,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
struct Synapse<F: Real> {
    presyn: u32,
    perm: F,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
struct Segment<F: Real> {
    cell: u32,
    last_used: u64,
    synapses: Vec<Synapse<F>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
struct TmSnapshot<F: Real> {
    num_columns: u32,
    params: TemporalMemoryParams<F>,
    seed: u64,
    rng_word_pos_lo: u64,
    rng_word_pos_hi: u64,
    segments: Vec<Option<Segment<F>>>,
    prev_active_cells: Vec<u32>,
    prev_winner_cells: Vec<u32>,
    active_segments: Vec<u32>,
    matching_segments: Vec<u32>,
    matching_counts: Vec<u32>,
    steps: u64,
}

/// Temporal memory state. Single-writer per instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real", from = "TmSnapshot<F>", into = "TmSnapshot<F>")]
pub struct TemporalMemory<F: Real> {
    num_columns: u32,
    params: TemporalMemoryParams<F>,
    seed: u64,
    rng: ChaCha8Rng,
    segments: Vec<Option<Segment<F>>>,
    free: Vec<u32>,
    /// Per cell: live segment ids rooted on that cell.
    cell_segments: Vec<Vec<u32>>,
    /// Per cell: segment ids holding a synapse from that cell.
    receivers: Vec<Vec<u32>>,
    prev_active_cells: Vec<u32>,
    prev_winner_cells: Vec<u32>,
    /// Segments active/matching against `prev_active_cells`, sorted by id.
    active_segments: Vec<u32>,
    matching_segments: Vec<u32>,
    /// Generation-stamped potential-synapse activity counts per segment.
    pot_count: Vec<u32>,
    pot_gen: Vec<u32>,
    generation: u32,
    steps: u64,
    prev_active_mask: BitBuf,
    active_col_mask: BitBuf,
}

impl<F: Real> TemporalMemory<F> {
    pub fn new(num_columns: u32, params: TemporalMemoryParams<F>, seed: u64) -> Result<Self> {
        if num_columns == 0 || params.cells_per_column == 0 {
            return Err(Error::config("temporal memory needs columns and cells"));
        }
        if params.min_threshold < 1 || params.activation_threshold < params.min_threshold {
            return Err(Error::config(
                "need activation_threshold >= min_threshold >= 1",
            ));
        }
        if params.max_new_synapses < 1
            || params.max_segments_per_cell < 1
            || params.max_synapses_per_segment < params.max_new_synapses
        {
            return Err(Error::config("invalid growth limits"));
        }
        let cells = (num_columns * params.cells_per_column) as usize;
        Ok(TemporalMemory {
            num_columns,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            segments: Vec::new(),
            free: Vec::new(),
            cell_segments: vec![Vec::new(); cells],
            receivers: vec![Vec::new(); cells],
            prev_active_cells: Vec::new(),
            prev_winner_cells: Vec::new(),
            active_segments: Vec::new(),
            matching_segments: Vec::new(),
            pot_count: Vec::new(),
            pot_gen: Vec::new(),
            generation: 0,
            steps: 0,
            prev_active_mask: BitBuf::zeroed(cells as u32),
            active_col_mask: BitBuf::zeroed(num_columns),
            params,
        })
    }

    pub fn with_defaults(num_columns: u32, seed: u64) -> Result<Self> {
        Self::new(num_columns, TemporalMemoryParams::default(), seed)
    }

    pub fn num_columns(&self) -> u32 {
        self.num_columns
    }

    pub fn num_cells(&self) -> u32 {
        self.num_columns * self.params.cells_per_column
    }

    pub fn segment_count(&self) -> usize {
        self.segments.iter().filter(|s| s.is_some()).count()
    }

    pub fn synapse_count(&self) -> usize {
        self.segments
            .iter()
            .flatten()
            .map(|s| s.synapses.len())
            .sum()
    }

    /// Cells currently predictive (would recognize the next input).
    pub fn predictive_cells(&self) -> Vec<u32> {
        let mut cells: Vec<u32> = self
            .active_segments
            .iter()
            .map(|&s| self.segments[s as usize].as_ref().expect("live segment").cell)
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    fn column_of(&self, cell: u32) -> u32 {
        cell / self.params.cells_per_column
    }

    fn prev_count(&self, seg: u32) -> u32 {
        if self.pot_gen.get(seg as usize) == Some(&self.generation) {
            self.pot_count[seg as usize]
        } else {
            0
        }
    }

    /// Clears transient activity (sequence boundary). Learned structure is
    /// retained; the next compute bursts on every active column.
    pub fn reset(&mut self) {
        self.prev_active_cells.clear();
        self.prev_winner_cells.clear();
        self.active_segments.clear();
        self.matching_segments.clear();
        self.generation = self.generation.wrapping_add(1);
    }

    /// One step: consumes the active-column SDR, learns the transition from
    /// the previous step (if `learn`), and returns the prediction for the
    /// NEXT step as a column-level SDR.
    pub fn compute(&mut self, active_columns: &Sdr, learn: bool) -> Result<Sdr> {
        if active_columns.size() != self.num_columns {
            return Err(Error::config(format!(
                "active column SDR size {} does not match column count {}",
                active_columns.size(),
                self.num_columns
            )));
        }

        let prev_winner_cells = std::mem::take(&mut self.prev_winner_cells);
        let prev_active_cells = std::mem::take(&mut self.prev_active_cells);
        self.prev_active_mask.clear();
        for &c in &prev_active_cells {
            self.prev_active_mask.set(c);
        }
        let active_segs = std::mem::take(&mut self.active_segments);
        let matching_segs = std::mem::take(&mut self.matching_segments);

        // (column, segment) lists sorted by column then id.
        let by_col = |tm: &Self, segs: &[u32]| -> Vec<(u32, u32)> {
            let mut v: Vec<(u32, u32)> = segs
                .iter()
                .map(|&s| {
                    let cell = tm.segments[s as usize].as_ref().expect("live segment").cell;
                    (tm.column_of(cell), s)
                })
                .collect();
            v.sort_unstable();
            v
        };
        let active_by_col = by_col(self, &active_segs);
        let matching_by_col = by_col(self, &matching_segs);

        self.active_col_mask.clear();
        for &c in active_columns.active() {
            self.active_col_mask.set(c);
        }

        let cpc = self.params.cells_per_column;
        let mut active_cells: Vec<u32> = Vec::new();
        let mut winner_cells: Vec<u32> = Vec::new();

        for &col in active_columns.active() {
            let segs_here = |list: &[(u32, u32)]| -> Vec<u32> {
                let lo = list.partition_point(|&(c, _)| c < col);
                let hi = list.partition_point(|&(c, _)| c <= col);
                list[lo..hi].iter().map(|&(_, s)| s).collect()
            };
            let col_active = segs_here(&active_by_col);

            if !col_active.is_empty() {
                // Predicted column: the cells behind the active segments
                // activate and win.
                let mut cells: Vec<u32> = col_active
                    .iter()
                    .map(|&s| self.segments[s as usize].as_ref().expect("live").cell)
                    .collect();
                cells.sort_unstable();
                cells.dedup();
                active_cells.extend_from_slice(&cells);
                winner_cells.extend_from_slice(&cells);

                if learn {
                    for &seg in &col_active {
                        self.adapt(
                            seg,
                            self.params.permanence_inc,
                            self.params.permanence_dec,
                        );
                        if self.segments[seg as usize].is_some() {
                            let have = self.prev_count(seg);
                            let want = self.params.max_new_synapses.saturating_sub(have);
                            self.grow(seg, &prev_winner_cells, want);
                        }
                    }
                }
            } else {
                // Unpredicted column: burst.
                active_cells.extend(col * cpc..(col + 1) * cpc);
                let col_matching = segs_here(&matching_by_col);
                if let Some(&best) = col_matching.iter().max_by(|&&a, &&b| {
                    self.prev_count(a)
                        .cmp(&self.prev_count(b))
                        .then(b.cmp(&a)) // ties to the lower segment id
                }) {
                    let cell = self.segments[best as usize].as_ref().expect("live").cell;
                    winner_cells.push(cell);
                    if learn {
                        self.adapt(
                            best,
                            self.params.permanence_inc,
                            self.params.permanence_dec,
                        );
                        if self.segments[best as usize].is_some() {
                            let have = self.prev_count(best);
                            let want = self.params.max_new_synapses.saturating_sub(have);
                            self.grow(best, &prev_winner_cells, want);
                        }
                    }
                } else {
                    // Least-used cell of the column, ties to lowest index.
                    let cell = (col * cpc..(col + 1) * cpc)
                        .min_by_key(|&c| self.cell_segments[c as usize].len())
                        .expect("column has cells");
                    winner_cells.push(cell);
                    if learn && !prev_winner_cells.is_empty() {
                        let seg = self.create_segment(cell);
                        self.grow(seg, &prev_winner_cells, self.params.max_new_synapses);
                    }
                }
            }
        }

        if learn && self.params.predicted_decrement > F::zero() {
            // Segments that predicted a column which did not activate.
            for &seg in &matching_segs {
                if self.segments[seg as usize].is_none() {
                    continue;
                }
                let cell = self.segments[seg as usize].as_ref().expect("live").cell;
                if !self.active_col_mask.get(self.column_of(cell)) {
                    self.adapt(seg, -self.params.predicted_decrement, F::zero());
                }
            }
        }

        debug_assert!(active_cells.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(winner_cells.windows(2).all(|w| w[0] < w[1]));

        // Evaluate segment activity against the new active cells.
        self.generation = self.generation.wrapping_add(1);
        let gen = self.generation;
        let mut candidates: Vec<u32> = Vec::new();
        for &cell in &active_cells {
            for &seg in &self.receivers[cell as usize] {
                let s = seg as usize;
                if self.pot_gen[s] != gen {
                    self.pot_gen[s] = gen;
                    self.pot_count[s] = 0;
                }
                self.pot_count[s] += 1;
                if self.pot_count[s] == self.params.min_threshold {
                    candidates.push(seg);
                }
            }
        }
        candidates.sort_unstable();

        self.prev_active_mask.clear();
        for &c in &active_cells {
            self.prev_active_mask.set(c);
        }
        let mut active_now: Vec<u32> = Vec::new();
        for &seg in &candidates {
            let segment = self.segments[seg as usize].as_mut().expect("live segment");
            segment.last_used = self.steps;
            let connected = segment
                .synapses
                .iter()
                .filter(|sy| {
                    sy.perm >= self.params.connected_permanence
                        && self.prev_active_mask.get(sy.presyn)
                })
                .count() as u32;
            if connected >= self.params.activation_threshold {
                active_now.push(seg);
            }
        }

        let mut predicted_cols: Vec<u32> = active_now
            .iter()
            .map(|&s| {
                let cell = self.segments[s as usize].as_ref().expect("live").cell;
                self.column_of(cell)
            })
            .collect();
        predicted_cols.sort_unstable();
        predicted_cols.dedup();

        self.prev_active_cells = active_cells;
        self.prev_winner_cells = winner_cells;
        self.active_segments = active_now;
        self.matching_segments = candidates;
        self.steps += 1;

        Ok(Sdr::from_sorted(self.num_columns, predicted_cols))
    }

    /// Moves permanences toward/away from the previous active cells:
    /// `active_delta` applies to synapses whose source was active,
    /// `inactive_delta` (as a decrement) to the rest. Zero-permanence
    /// synapses and empty segments are destroyed.
    fn adapt(&mut self, seg: u32, active_delta: F, inactive_delta: F) {
        let segment = self.segments[seg as usize].as_mut().expect("live segment");
        let mut i = 0;
        let mut removed: Vec<u32> = Vec::new();
        while i < segment.synapses.len() {
            let sy = &mut segment.synapses[i];
            let p = if self.prev_active_mask.get(sy.presyn) {
                sy.perm + active_delta
            } else {
                sy.perm - inactive_delta
            };
            let p = if p > F::one() {
                F::one()
            } else if p < F::zero() {
                F::zero()
            } else {
                p
            };
            if p <= F::zero() {
                removed.push(sy.presyn);
                segment.synapses.swap_remove(i);
            } else {
                sy.perm = p;
                i += 1;
            }
        }
        let empty = segment.synapses.is_empty();
        for presyn in removed {
            let list = &mut self.receivers[presyn as usize];
            let pos = list.iter().position(|&s| s == seg).expect("receiver entry");
            list.swap_remove(pos);
        }
        if empty {
            self.destroy_segment(seg);
        }
    }

    /// Grows up to `want` synapses from the segment to previous winner
    /// cells it is not yet connected to, in seeded random order.
    fn grow(&mut self, seg: u32, prev_winners: &[u32], want: u32) {
        if want == 0 || prev_winners.is_empty() {
            return;
        }
        let segment = self.segments[seg as usize].as_ref().expect("live segment");
        let mut candidates: Vec<u32> = prev_winners
            .iter()
            .copied()
            .filter(|&w| !segment.synapses.iter().any(|sy| sy.presyn == w))
            .collect();
        let room = self
            .params
            .max_synapses_per_segment
            .saturating_sub(segment.synapses.len() as u32);
        let take = (want.min(room) as usize).min(candidates.len());
        if take == 0 {
            return;
        }
        for i in 0..take {
            let j = self.rng.gen_range(i..candidates.len());
            candidates.swap(i, j);
        }
        let init = self.params.init_permanence;
        let segment = self.segments[seg as usize].as_mut().expect("live segment");
        for &presyn in &candidates[..take] {
            segment.synapses.push(Synapse { presyn, perm: init });
            self.receivers[presyn as usize].push(seg);
        }
    }

    /// Allocates a segment on `cell`, evicting the least recently matched
    /// segment if the cell is at its cap.
    fn create_segment(&mut self, cell: u32) -> u32 {
        if self.cell_segments[cell as usize].len() >= self.params.max_segments_per_cell as usize {
            let victim = self.cell_segments[cell as usize]
                .iter()
                .copied()
                .min_by_key(|&s| {
                    (
                        self.segments[s as usize].as_ref().expect("live").last_used,
                        s,
                    )
                })
                .expect("cap is at least one");
            self.destroy_segment(victim);
        }
        let segment = Segment {
            cell,
            last_used: self.steps,
            synapses: Vec::new(),
        };
        let id = if let Some(id) = self.free.pop() {
            self.segments[id as usize] = Some(segment);
            id
        } else {
            self.segments.push(Some(segment));
            self.pot_count.push(0);
            self.pot_gen.push(0);
            (self.segments.len() - 1) as u32
        };
        self.cell_segments[cell as usize].push(id);
        id
    }

    fn destroy_segment(&mut self, seg: u32) {
        let segment = self.segments[seg as usize].take().expect("live segment");
        for sy in &segment.synapses {
            let list = &mut self.receivers[sy.presyn as usize];
            let pos = list.iter().position(|&s| s == seg).expect("receiver entry");
            list.swap_remove(pos);
        }
        let list = &mut self.cell_segments[segment.cell as usize];
        let pos = list.iter().position(|&s| s == seg).expect("cell entry");
        list.swap_remove(pos);
        self.pot_gen[seg as usize] = 0;
        self.pot_count[seg as usize] = 0;
        self.free.push(seg);
    }
}

impl<F: Real> From<TmSnapshot<F>> for TemporalMemory<F> {
    fn from(s: TmSnapshot<F>) -> Self {
        let cells = (s.num_columns * s.params.cells_per_column) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_word_pos(((s.rng_word_pos_hi as u128) << 64) | s.rng_word_pos_lo as u128);

        let mut cell_segments = vec![Vec::new(); cells];
        let mut receivers: Vec<Vec<u32>> = vec![Vec::new(); cells];
        let mut free = Vec::new();
        for (id, entry) in s.segments.iter().enumerate() {
            match entry {
                Some(seg) => {
                    cell_segments[seg.cell as usize].push(id as u32);
                    for sy in &seg.synapses {
                        receivers[sy.presyn as usize].push(id as u32);
                    }
                }
                None => free.push(id as u32),
            }
        }

        let n = s.segments.len();
        let mut pot_count = vec![0u32; n];
        let mut pot_gen = vec![0u32; n];
        let generation = 1u32;
        for (&seg, &count) in s.matching_segments.iter().zip(&s.matching_counts) {
            pot_count[seg as usize] = count;
            pot_gen[seg as usize] = generation;
        }

        TemporalMemory {
            num_columns: s.num_columns,
            seed: s.seed,
            rng,
            segments: s.segments,
            free,
            cell_segments,
            receivers,
            prev_active_cells: s.prev_active_cells,
            prev_winner_cells: s.prev_winner_cells,
            active_segments: s.active_segments,
            matching_segments: s.matching_segments,
            pot_count,
            pot_gen,
            generation,
            steps: s.steps,
            prev_active_mask: BitBuf::zeroed(cells as u32),
            active_col_mask: BitBuf::zeroed(s.num_columns),
            params: s.params,
        }
    }
}

impl<F: Real> From<TemporalMemory<F>> for TmSnapshot<F> {
    fn from(tm: TemporalMemory<F>) -> Self {
        let pos = tm.rng.get_word_pos();
        let matching_counts = tm
            .matching_segments
            .iter()
            .map(|&s| tm.pot_count[s as usize])
            .collect();
        TmSnapshot {
            num_columns: tm.num_columns,
            params: tm.params,
            seed: tm.seed,
            rng_word_pos_lo: pos as u64,
            rng_word_pos_hi: (pos >> 64) as u64,
            segments: tm.segments,
            prev_active_cells: tm.prev_active_cells,
            prev_winner_cells: tm.prev_winner_cells,
            active_segments: tm.active_segments,
            matching_segments: tm.matching_segments,
            matching_counts,
            steps: tm.steps,
        }
    }
}

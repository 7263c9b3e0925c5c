//! Sparse distributed representations.
//!
//! An [`Sdr`] is a fixed-width binary vector stored as the sorted list of
//! its active bit indices. Overlap (shared active bits) is the only
//! similarity measure used by the rest of the pipeline.

use crate::error::{Error, Result};

/// Binary vector of `size` bits with a sparse set of active indices.
///
/// Active indices are kept sorted and unique, which makes overlap a linear
/// merge and keeps every downstream computation order-independent.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Sdr {
    size: u32,
    active: Vec<u32>,
}

impl Sdr {
    /// Builds an SDR from arbitrary indices. Indices are sorted and
    /// deduplicated; any index `>= size` is an error.
    pub fn new(size: u32, mut active: Vec<u32>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if let Some(&last) = active.last() {
            if last >= size {
                return Err(Error::config(format!(
                    "active index {last} out of range for SDR of size {size}"
                )));
            }
        }
        Ok(Sdr { size, active })
    }

    /// Builds an SDR from indices already sorted, unique and in range.
    /// Only checked in debug builds; used on hot paths that construct
    /// indices in order.
    pub fn from_sorted(size: u32, active: Vec<u32>) -> Self {
        debug_assert!(active.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(active.last().is_none_or(|&b| b < size));
        Sdr { size, active }
    }

    pub fn empty(size: u32) -> Self {
        Sdr { size, active: Vec::new() }
    }

    /// Total width in bits.
    pub fn size(&self) -> u32 {
        self.size
    }

    /// Number of active bits.
    pub fn count(&self) -> u32 {
        self.active.len() as u32
    }

    /// Sorted active bit indices.
    pub fn active(&self) -> &[u32] {
        &self.active
    }

    pub fn contains(&self, bit: u32) -> bool {
        self.active.binary_search(&bit).is_ok()
    }

    /// Number of active bits shared with `other`. Sizes must match.
    pub fn overlap(&self, other: &Sdr) -> Result<u32> {
        if self.size != other.size {
            return Err(Error::config(format!(
                "overlap of mismatched SDR sizes {} and {}",
                self.size, other.size
            )));
        }
        let (mut i, mut j, mut n) = (0usize, 0usize, 0u32);
        let (a, b) = (&self.active, &other.active);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(n)
    }

    /// Concatenates SDRs into one vector; part `k` is shifted by the sum of
    /// the sizes before it. Total size is the sum of part sizes and the
    /// active count is preserved. The list must be non-empty.
    pub fn concat(parts: &[&Sdr]) -> Result<Sdr> {
        if parts.is_empty() {
            return Err(Error::config("concat of an empty SDR list"));
        }
        let size = parts.iter().map(|p| p.size).sum();
        let count = parts.iter().map(|p| p.active.len()).sum();
        let mut active = Vec::with_capacity(count);
        let mut offset = 0u32;
        for p in parts {
            active.extend(p.active.iter().map(|&b| b + offset));
            offset += p.size;
        }
        Ok(Sdr { size, active })
    }
}

/// Fixed-size bit mask for O(1) membership tests against an SDR's bits.
/// Used by the spatial pooler and temporal memory inner loops.
#[derive(Debug, Clone)]
pub(crate) struct BitBuf {
    words: Vec<u64>,
}

impl BitBuf {
    pub fn zeroed(bits: u32) -> Self {
        BitBuf { words: vec![0u64; (bits as usize).div_ceil(64)] }
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn set(&mut self, bit: u32) {
        self.words[(bit / 64) as usize] |= 1u64 << (bit % 64);
    }

    pub fn unset(&mut self, bit: u32) {
        self.words[(bit / 64) as usize] &= !(1u64 << (bit % 64));
    }

    pub fn get(&self, bit: u32) -> bool {
        self.words[(bit / 64) as usize] >> (bit % 64) & 1 == 1
    }

    /// Number of bits set in both masks. Masks must be the same width.
    pub fn overlap_count(&self, other: &BitBuf) -> u32 {
        debug_assert_eq!(self.words.len(), other.words.len());
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn fill_from(&mut self, sdr: &Sdr) {
        self.clear();
        for &b in sdr.active() {
            self.set(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sorts_and_dedups() {
        let s = Sdr::new(10, vec![7, 2, 2, 0]).unwrap();
        assert_eq!(s.active(), &[0, 2, 7]);
        assert_eq!(s.count(), 3);
        assert_eq!(s.size(), 10);
    }

    #[test]
    fn new_rejects_out_of_range() {
        assert!(Sdr::new(10, vec![10]).is_err());
        assert!(Sdr::new(10, vec![9]).is_ok());
    }

    #[test]
    fn overlap_with_self_is_count() {
        let s = Sdr::new(100, (0..21).collect()).unwrap();
        assert_eq!(s.overlap(&s).unwrap(), 21);
    }

    #[test]
    fn overlap_disjoint_is_zero() {
        let a = Sdr::new(100, (0..21).collect()).unwrap();
        let b = Sdr::new(100, (40..61).collect()).unwrap();
        assert_eq!(a.overlap(&b).unwrap(), 0);
        assert_eq!(b.overlap(&a).unwrap(), 0);
    }

    #[test]
    fn overlap_subset_is_subset_size() {
        let a = Sdr::new(100, (0..21).collect()).unwrap();
        let b = Sdr::new(100, (5..10).collect()).unwrap();
        assert_eq!(a.overlap(&b).unwrap(), 5);
        assert_eq!(b.overlap(&a).unwrap(), 5);
    }

    #[test]
    fn overlap_rejects_size_mismatch() {
        let a = Sdr::new(100, vec![1]).unwrap();
        let b = Sdr::new(101, vec![1]).unwrap();
        assert!(a.overlap(&b).is_err());
    }

    #[test]
    fn concat_offsets_parts() {
        let a = Sdr::new(4, vec![0, 3]).unwrap();
        let b = Sdr::new(5, vec![1]).unwrap();
        let c = Sdr::concat(&[&a, &b]).unwrap();
        assert_eq!(c.size(), 9);
        assert_eq!(c.count(), 3);
        assert_eq!(c.active(), &[0, 3, 5]);
    }

    #[test]
    fn concat_identity_and_empty() {
        let a = Sdr::new(8, vec![2, 4]).unwrap();
        assert_eq!(Sdr::concat(&[&a]).unwrap(), a);
        assert!(Sdr::concat(&[]).is_err());
    }

    #[test]
    fn concat_of_identical_layout_is_deterministic() {
        let a = Sdr::new(8, vec![2, 4]).unwrap();
        let c1 = Sdr::concat(&[&a, &a]).unwrap();
        let c2 = Sdr::concat(&[&a, &a]).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.active(), &[2, 4, 10, 12]);
    }

    #[test]
    fn bitbuf_membership_matches_sdr() {
        let s = Sdr::new(130, vec![0, 63, 64, 65, 129]).unwrap();
        let mut m = BitBuf::zeroed(130);
        m.fill_from(&s);
        for b in 0..130 {
            assert_eq!(m.get(b), s.contains(b), "bit {b}");
        }
    }
}

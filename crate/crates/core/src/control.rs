//! Index selector maps `k -> i(k)`.
//!
//! The random-permutation control draws a fresh permutation of the index
//! set for every block of `m = card(I)` consecutive iterations. The
//! permutation for block `b` depends only on `(seed, b)`:
//!
//! 1. `ChaCha8Rng::seed_from_u64(seed)`, then `set_stream(b)`;
//! 2. start from the identity `[0, 1, ..., m-1]`;
//! 3. for `i = m-1` down to `1`: draw `u = next_u64()`, set
//!    `j = (u * (i + 1)) >> 64` (128-bit product), swap entries `i` and `j`.
//!
//! Nothing in this procedure depends on the platform or on `rand`'s
//! distribution code.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("index set must be nonempty")]
    EmptyIndexSet,
    #[error("cyclic order is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("explicit sequence must be nonempty")]
    EmptySequence,
    #[error("index {index} outside the index set of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("quasiperiod must be at least 1 and at most the horizon (M = {period}, horizon = {horizon})")]
    InvalidWindow { period: usize, horizon: usize },
    #[error("window starting at k = {start} of length {period} misses index {missing}")]
    WindowNotCovering {
        start: usize,
        period: usize,
        missing: usize,
    },
}

pub type Result<T> = std::result::Result<T, ControlError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlKind {
    /// `order[k mod m]`
    Cyclic { order: Vec<usize> },
    /// A seeded permutation per block of `m` iterations.
    RandomPermutationBlocks { seed: u64 },
    /// A finite buffer repeated forever.
    Explicit { sequence: Vec<usize> },
}

/// A control over the index set `{0, ..., size-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSchedule {
    size: usize,
    kind: ControlKind,
}

impl ControlSchedule {
    /// Natural cyclic order `0, 1, ..., size-1, 0, 1, ...`.
    pub fn cyclic(size: usize) -> Result<Self> {
        Self::cyclic_with_order((0..size).collect())
    }

    pub fn cyclic_with_order(order: Vec<usize>) -> Result<Self> {
        let size = order.len();
        if size == 0 {
            return Err(ControlError::EmptyIndexSet);
        }
        let mut seen = vec![false; size];
        for &i in &order {
            if i >= size || std::mem::replace(&mut seen[i], true) {
                return Err(ControlError::NotAPermutation(size));
            }
        }
        Ok(Self {
            size,
            kind: ControlKind::Cyclic { order },
        })
    }

    pub fn random_permutation_blocks(size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(ControlError::EmptyIndexSet);
        }
        Ok(Self {
            size,
            kind: ControlKind::RandomPermutationBlocks { seed },
        })
    }

    /// Coverage of the index set is not checked here; use
    /// [`validate_quasicyclic`].
    pub fn explicit(size: usize, sequence: Vec<usize>) -> Result<Self> {
        if size == 0 {
            return Err(ControlError::EmptyIndexSet);
        }
        if sequence.is_empty() {
            return Err(ControlError::EmptySequence);
        }
        if let Some(&index) = sequence.iter().find(|&&i| i >= size) {
            return Err(ControlError::IndexOutOfRange { index, size });
        }
        Ok(Self {
            size,
            kind: ControlKind::Explicit { sequence },
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    pub fn next_index(&self, k: u64) -> usize {
        match &self.kind {
            ControlKind::Cyclic { order } => order[(k % order.len() as u64) as usize],
            ControlKind::RandomPermutationBlocks { seed } => {
                let m = self.size as u64;
                block_permutation(*seed, k / m, self.size)[(k % m) as usize]
            }
            ControlKind::Explicit { sequence } => sequence[(k % sequence.len() as u64) as usize],
        }
    }

    /// Sequential index stream starting at `k = 0`; caches the current
    /// random block.
    pub fn iter(&self) -> IndexStream<'_> {
        IndexStream {
            schedule: self,
            k: 0,
            block: Vec::new(),
        }
    }
}

pub fn next_index(s: &ControlSchedule, k: u64) -> usize {
    s.next_index(k)
}

/// Permutation of `0..size` used by block `block` of the random control.
pub fn block_permutation(seed: u64, block: u64, size: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let mut perm: Vec<usize> = (0..size).collect();
    for i in (1..size).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Derives an independent 64-bit seed for sub-stream `stream` (SplitMix64
/// finalizer applied twice).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(stream))
}

pub struct IndexStream<'a> {
    schedule: &'a ControlSchedule,
    k: u64,
    block: Vec<usize>,
}

impl Iterator for IndexStream<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        let k = self.k;
        self.k += 1;
        let i = match &self.schedule.kind {
            ControlKind::RandomPermutationBlocks { seed } => {
                let m = self.schedule.size as u64;
                if k.is_multiple_of(m) {
                    self.block = block_permutation(*seed, k / m, self.schedule.size);
                }
                self.block[(k % m) as usize]
            }
            _ => self.schedule.next_index(k),
        };
        Some(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuasiperiodCertificate {
    pub quasiperiod: usize,
    pub horizon: usize,
}

/// Checks that every window `{i(k), ..., i(k+M-1)}` with `k + M <= horizon`
/// covers the whole index set.
pub fn validate_quasicyclic(
    s: &ControlSchedule,
    period: usize,
    horizon: usize,
) -> Result<QuasiperiodCertificate> {
    if period == 0 || horizon < period {
        return Err(ControlError::InvalidWindow { period, horizon });
    }
    let seq: Vec<usize> = s.iter().take(horizon).collect();
    let mut counts = vec![0usize; s.size];
    let mut covered = 0;
    for &i in &seq[..period] {
        if counts[i] == 0 {
            covered += 1;
        }
        counts[i] += 1;
    }
    let missing = |counts: &[usize]| counts.iter().position(|&c| c == 0).unwrap_or(0);
    if covered < s.size {
        return Err(ControlError::WindowNotCovering {
            start: 0,
            period,
            missing: missing(&counts),
        });
    }
    for start in 1..=(horizon - period) {
        let out = seq[start - 1];
        counts[out] -= 1;
        if counts[out] == 0 {
            covered -= 1;
        }
        let inc = seq[start + period - 1];
        if counts[inc] == 0 {
            covered += 1;
        }
        counts[inc] += 1;
        if covered < s.size {
            return Err(ControlError::WindowNotCovering {
                start,
                period,
                missing: missing(&counts),
            });
        }
    }
    Ok(QuasiperiodCertificate {
        quasiperiod: period,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_examples() {
        let s = ControlSchedule::cyclic(6).unwrap();
        assert_eq!(s.next_index(7), 1);
        assert_eq!(next_index(&s, 0), 0);
        let s = ControlSchedule::cyclic_with_order(vec![2, 0, 1]).unwrap();
        assert_eq!(s.iter().take(4).collect::<Vec<_>>(), vec![2, 0, 1, 2]);
        assert!(ControlSchedule::cyclic_with_order(vec![0, 0]).is_err());
        assert!(ControlSchedule::cyclic(0).is_err());
    }

    #[test]
    fn random_blocks_are_permutations() {
        let s = ControlSchedule::random_permutation_blocks(6, 42).unwrap();
        let seq: Vec<usize> = s.iter().take(6 * 1001).collect();
        for (b, block) in seq.chunks(6).enumerate() {
            let mut sorted = block.to_vec();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>(), "block {b}");
        }
        for k in [0u64, 5, 6, 17, 6000] {
            assert_eq!(s.next_index(k), seq[k as usize]);
        }
    }

    #[test]
    fn random_blocks_are_seed_deterministic_and_vary() {
        let a = ControlSchedule::random_permutation_blocks(6, 7).unwrap();
        let b = ControlSchedule::random_permutation_blocks(6, 7).unwrap();
        let c = ControlSchedule::random_permutation_blocks(6, 8).unwrap();
        let sa: Vec<_> = a.iter().take(600).collect();
        assert_eq!(sa, b.iter().take(600).collect::<Vec<_>>());
        assert_ne!(sa, c.iter().take(600).collect::<Vec<_>>());
        // not every block is the same permutation
        assert!(sa.chunks(6).any(|w| w != &sa[..6]));
    }

    #[test]
    fn quasicyclic_examples() {
        let s = ControlSchedule::cyclic(4).unwrap();
        assert_eq!(
            validate_quasicyclic(&s, 4, 100).unwrap(),
            QuasiperiodCertificate {
                quasiperiod: 4,
                horizon: 100
            }
        );
        assert!(validate_quasicyclic(&s, 3, 100).is_err());

        let s = ControlSchedule::explicit(2, vec![0]).unwrap();
        for m in 1..10 {
            assert!(matches!(
                validate_quasicyclic(&s, m, 50),
                Err(ControlError::WindowNotCovering { missing: 1, .. })
            ));
        }

        for seed in 0..20 {
            let s = ControlSchedule::random_permutation_blocks(6, seed).unwrap();
            validate_quasicyclic(&s, 11, 6 * 500).unwrap();
        }
    }

    #[test]
    fn explicit_sequence_reports_first_bad_window() {
        let s = ControlSchedule::explicit(3, vec![0, 1, 2, 0, 0, 1, 2]).unwrap();
        assert_eq!(
            validate_quasicyclic(&s, 3, 7),
            Err(ControlError::WindowNotCovering {
                start: 2,
                period: 3,
                missing: 1
            })
        );
        assert!(validate_quasicyclic(&s, 0, 7).is_err());
        assert!(validate_quasicyclic(&s, 8, 7).is_err());
    }
}

//! Centred Latin-hypercube sampling of the three clearances.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CLEARANCE_MAX, CLEARANCE_MIN};
use crate::error::{Error, Result};

/// Clearances in % span for one build, plus its identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearanceSample {
    pub id: usize,
    pub igv_clearance: f64,
    pub rotor_clearance: f64,
    pub stator_clearance: f64,
    /// Seed for any stochastic part of generation (default config has none).
    pub seed: u64,
}

impl ClearanceSample {
    pub fn new(id: usize, clearances: [f64; 3], seed: u64) -> Self {
        ClearanceSample {
            id,
            igv_clearance: clearances[0],
            rotor_clearance: clearances[1],
            stator_clearance: clearances[2],
            seed,
        }
    }

    /// `[igv, rotor, stator]`
    pub fn clearances(&self) -> [f64; 3] {
        [self.igv_clearance, self.rotor_clearance, self.stator_clearance]
    }

    pub fn in_range(&self) -> bool {
        self.clearances()
            .iter()
            .all(|c| (CLEARANCE_MIN..=CLEARANCE_MAX).contains(c))
    }
}

/// SplitMix64 finaliser; mixes a dataset seed and a sample index into a per-sample seed.
pub fn sample_seed(seed: u64, id: usize) -> u64 {
    let mut z = seed ^ (id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` samples with exactly one per stratum in every dimension. Each sample sits
/// at the midpoint of its stratum; strata are paired by seeded permutations.
pub fn lhs_sample(n: usize, seed: u64) -> Result<Vec<ClearanceSample>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (CLEARANCE_MAX - CLEARANCE_MIN) / n as f64;
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        perms.push(p);
    }
    Ok((0..n)
        .map(|i| {
            let c = [0, 1, 2].map(|d| CLEARANCE_MIN + (perms[d][i] as f64 + 0.5) * width);
            ClearanceSample::new(i, c, sample_seed(seed, i))
        })
        .collect())
}

/// Stratum index of clearance `c` among `n` equal strata.
pub fn stratum_of(c: f64, n: usize) -> usize {
    let u = (c - CLEARANCE_MIN) / (CLEARANCE_MAX - CLEARANCE_MIN);
    ((u * n as f64).floor() as usize).min(n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn five_hundred_samples_cover_every_stratum() {
        let s = lhs_sample(500, 42).unwrap();
        assert_eq!(s.len(), 500);
        for d in 0..3 {
            let mut seen = vec![false; 500];
            for x in &s {
                let k = stratum_of(x.clearances()[d], 500);
                assert!(!seen[k], "stratum {k} hit twice in dim {d}");
                seen[k] = true;
            }
            assert!(seen.iter().all(|&b| b));
        }
        assert!(s.iter().all(|x| x.in_range()));
    }

    #[test]
    fn single_sample_is_the_midpoint() {
        let s = lhs_sample(1, 9).unwrap();
        let mid = 0.5 * (CLEARANCE_MIN + CLEARANCE_MAX);
        assert_eq!(s[0].clearances(), [mid; 3]);
    }

    #[test]
    fn zero_samples_is_an_error() {
        assert!(matches!(lhs_sample(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn same_seed_same_samples() {
        assert_eq!(lhs_sample(37, 5).unwrap(), lhs_sample(37, 5).unwrap());
        assert_ne!(lhs_sample(37, 5).unwrap(), lhs_sample(37, 6).unwrap());
    }

    proptest! {
        #[test]
        fn strata_are_a_permutation(n in 1usize..200, seed in any::<u64>()) {
            let s = lhs_sample(n, seed).unwrap();
            for d in 0..3 {
                let mut k: Vec<usize> = s.iter().map(|x| stratum_of(x.clearances()[d], n)).collect();
                k.sort_unstable();
                prop_assert_eq!(k, (0..n).collect::<Vec<_>>());
            }
        }
    }
}

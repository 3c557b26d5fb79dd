//! Deterministic train/validation/holdout partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synth::SplitRecord;

pub const MIN_SPLIT_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            validation: 0.2,
            holdout: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.validation, self.holdout];
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || self.train <= 0.0 || self.validation <= 0.0 {
            return Err(Error::invalid(format!("split fractions {f:?} must lie in [0, 1] with non-empty train and validation")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions {f:?} must sum to 1")));
        }
        Ok(())
    }

    /// `(train, validation, holdout)` counts: floor for the first two,
    /// remainder to holdout.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        // small slack so 0.7·500 lands on 350 despite binary rounding
        let nt = (n as f64 * self.train + 1e-9).floor() as usize;
        let nv = (n as f64 * self.validation + 1e-9).floor() as usize;
        (nt, nv, n - nt - nv)
    }
}

pub fn split_dataset(n: usize, spec: &SplitSpec) -> Result<SplitRecord> {
    spec.validate()?;
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_SPLIT_SAMPLES} samples to split, got {n}")));
    }
    let (nt, nv, _) = spec.counts(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut train = idx[..nt].to_vec();
    let mut validation = idx[nt..nt + nv].to_vec();
    let mut holdout = idx[nt + nv..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    holdout.sort_unstable();
    Ok(SplitRecord {
        seed: spec.seed,
        train,
        validation,
        holdout,
    })
}

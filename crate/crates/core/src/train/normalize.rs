//! Per-(station, variable) standardization of flow-field targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{N_STATIONS, N_VARIABLES, STATION_NAMES, VARIABLE_NAMES};
use crate::{Scalar, Tensor};

/// Standard deviations below this are treated as degenerate.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// Indexed `station * N_VARIABLES + variable`.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn check_field<T: Scalar>(t: &Tensor<T>) -> Result<()> {
    let s = t.shape();
    if s.len() != 4 || s[0] != N_STATIONS || s[3] != N_VARIABLES {
        return Err(Error::invalid(format!(
            "expected a ({N_STATIONS}, T, R, {N_VARIABLES}) field, got {s:?}"
        )));
    }
    Ok(())
}

/// Station and variable of flat element `i` in a `(4, T, R, 6)` field.
#[inline]
fn slot(i: usize, per_station: usize) -> usize {
    (i / per_station) * N_VARIABLES + i % N_VARIABLES
}

impl NormalizationStats {
    /// Two-pass mean and population standard deviation over every node of
    /// every field.
    pub fn fit<T: Scalar>(fields: &[&Tensor<T>]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::invalid("cannot fit normalization on an empty split"))?;
        for f in fields {
            check_field(f)?;
            if f.shape() != first.shape() {
                return Err(Error::invalid("fields in a split must share one mesh"));
            }
        }
        let per_station = first.len() / N_STATIONS;
        let count = (fields.len() * per_station / N_VARIABLES) as f64;
        let n = N_STATIONS * N_VARIABLES;
        let mut sum = vec![0.0f64; n];
        for f in fields {
            for (i, v) in f.data().iter().enumerate() {
                sum[slot(i, per_station)] += v.as_f64();
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let mut sq = vec![0.0f64; n];
        for f in fields {
            for (i, v) in f.data().iter().enumerate() {
                let c = slot(i, per_station);
                let d = v.as_f64() - mean[c];
                sq[c] += d * d;
            }
        }
        let std = sq
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let sd = (s / count).sqrt();
                if sd < STD_FLOOR {
                    log::warn!(
                        "{} at {} is constant over the training split; its standard deviation is floored to 1",
                        VARIABLE_NAMES[c % N_VARIABLES],
                        STATION_NAMES[c / N_VARIABLES]
                    );
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(NormalizationStats { mean, std })
    }

    pub fn apply<T: Scalar>(&self, field: &Tensor<T>) -> Result<Tensor<T>> {
        check_field(field)?;
        let per_station = field.len() / N_STATIONS;
        let data = field
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = slot(i, per_station);
                T::lit((v.as_f64() - self.mean[c]) / self.std[c])
            })
            .collect();
        Tensor::new(field.shape().to_vec(), data)
    }

    pub fn invert<T: Scalar>(&self, standardized: &Tensor<T>) -> Result<Tensor<T>> {
        check_field(standardized)?;
        let per_station = standardized.len() / N_STATIONS;
        let data = standardized
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = slot(i, per_station);
                T::lit(v.as_f64() * self.std[c] + self.mean[c])
            })
            .collect();
        Tensor::new(standardized.shape().to_vec(), data)
    }

    /// `[mean; std]` as a `(2, 4, 6)` tensor for checkpoint storage.
    pub fn to_tensor(&self) -> Tensor<f64> {
        let mut d = self.mean.clone();
        d.extend_from_slice(&self.std);
        Tensor::new(vec![2, N_STATIONS, N_VARIABLES], d).expect("fixed shape")
    }

    pub fn from_tensor(t: &Tensor<f64>) -> Result<Self> {
        if t.shape() != [2, N_STATIONS, N_VARIABLES] {
            return Err(Error::CorruptCheckpoint(format!("normalization record has shape {:?}", t.shape())));
        }
        let n = N_STATIONS * N_VARIABLES;
        Ok(NormalizationStats {
            mean: t.data()[..n].to_vec(),
            std: t.data()[n..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fields(n: usize, seed: u64) -> Vec<Tensor<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Tensor::from_fn(vec![4, 5, 3, 6], |i| (i % 7) as f64 * 1e4 + rng.random_range(-50.0..50.0)))
            .collect()
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let fs = random_fields(6, 1);
        let refs: Vec<&Tensor<f64>> = fs.iter().collect();
        let st = NormalizationStats::fit(&refs).unwrap();
        for s in 0..4 {
            for v in 0..6 {
                let vals: Vec<f64> = fs
                    .iter()
                    .flat_map(|f| {
                        let mut out = Vec::new();
                        for k in 0..5 {
                            for j in 0..3 {
                                out.push(f.at(&[s, k, j, v]));
                            }
                        }
                        out
                    })
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
                let c = s * 6 + v;
                assert!((st.mean[c] - m).abs() <= 1e-12 * m.abs().max(1.0));
                assert!((st.std[c] - var.sqrt()).abs() <= 1e-12 * var.sqrt());
            }
        }
    }

    #[test]
    fn standardized_split_has_zero_mean_unit_std() {
        let fs = random_fields(4, 2);
        let refs: Vec<&Tensor<f64>> = fs.iter().collect();
        let st = NormalizationStats::fit(&refs).unwrap();
        let z: Vec<Tensor<f64>> = fs.iter().map(|f| st.apply(f).unwrap()).collect();
        let zr: Vec<&Tensor<f64>> = z.iter().collect();
        let zs = NormalizationStats::fit(&zr).unwrap();
        assert!(zs.mean.iter().all(|m| m.abs() < 1e-6));
        assert!(zs.std.iter().all(|s| (s - 1.0).abs() < 1e-3));
        for (f, zf) in fs.iter().zip(&z) {
            let back = st.invert(zf).unwrap();
            for (a, b) in f.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_variable_standardizes_to_zero() {
        let f = Tensor::from_fn(vec![4, 2, 2, 6], |i| if i % 6 == 1 { 300.0 } else { i as f64 });
        let st = NormalizationStats::fit(&[&f]).unwrap();
        assert_eq!(st.std[1], 1.0);
        let z = st.apply(&f).unwrap();
        assert!(z.data().iter().skip(1).step_by(6).all(|&v| v == 0.0));
    }

    #[test]
    fn empty_split_is_rejected() {
        assert!(NormalizationStats::fit::<f64>(&[]).is_err());
    }

    #[test]
    fn tensor_record_round_trips() {
        let fs = random_fields(2, 3);
        let refs: Vec<&Tensor<f64>> = fs.iter().collect();
        let st = NormalizationStats::fit(&refs).unwrap();
        assert_eq!(NormalizationStats::from_tensor(&st.to_tensor()).unwrap(), st);
    }
}

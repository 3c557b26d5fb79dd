//! Scalar accuracy metrics and node-wise error maps.

use crate::error::{Error, Result};
use crate::field::{FlowField, N_STATIONS, N_VARIABLES};
use crate::Tensor;

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid("prediction and truth lengths differ"));
    }
    if truth.len() < 2 {
        return Err(Error::UndefinedMetric("R² needs at least two samples".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("truth values have zero variance".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute error as a percentage of `baseline`.
pub fn mae_percent(pred: &[f64], truth: &[f64], baseline: f64) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::invalid("prediction and truth must be non-empty and equally long"));
    }
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::invalid("MAE baseline must be finite and non-zero"));
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(100.0 * sum / pred.len() as f64 / baseline.abs())
}

/// Streaming counterpart of [`mae_percent`]: Kahan-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct MaeAccumulator {
    sum: f64,
    compensation: f64,
    count: usize,
}

impl MaeAccumulator {
    pub fn push(&mut self, pred: f64, truth: f64) {
        let y = (pred - truth).abs() - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn percent_of(&self, baseline: f64) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::invalid("no samples accumulated"));
        }
        if baseline == 0.0 || !baseline.is_finite() {
            return Err(Error::invalid("MAE baseline must be finite and non-zero"));
        }
        Ok(100.0 * self.sum / self.count as f64 / baseline.abs())
    }
}

/// Location of one node in a flow field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeIndex {
    pub station: usize,
    /// Tangential index.
    pub k: usize,
    /// Radial index.
    pub j: usize,
    pub variable: usize,
}

/// Per-node percentage errors and the location of the largest magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorField {
    /// `(4, T, R, 6)`: `100·(pred − truth)/scale[variable]`.
    pub percent: Tensor<f64>,
    pub argmax: NodeIndex,
    /// Signed error at `argmax`.
    pub peak: f64,
}

impl ErrorField {
    pub fn peak_abs(&self) -> f64 {
        self.peak.abs()
    }

    /// Largest absolute error per (station, variable).
    pub fn max_abs_by_slot(&self) -> [[f64; N_VARIABLES]; N_STATIONS] {
        let mut out = [[0.0f64; N_VARIABLES]; N_STATIONS];
        let per_station = self.percent.len() / N_STATIONS;
        for (i, v) in self.percent.data().iter().enumerate() {
            let s = i / per_station;
            let var = i % N_VARIABLES;
            out[s][var] = out[s][var].max(v.abs());
        }
        out
    }
}

/// `100·(pred − truth)/scale` per node, the scale chosen per variable.
/// Ties for the peak resolve to the first node in row-major order.
pub fn error_field(pred: &FlowField, truth: &FlowField, scale: &[f64; N_VARIABLES]) -> Result<ErrorField> {
    if pred.tensor().shape() != truth.tensor().shape() {
        return Err(Error::invalid(format!(
            "field shapes differ: {:?} vs {:?}",
            pred.tensor().shape(),
            truth.tensor().shape()
        )));
    }
    if scale.iter().any(|s| !(s.abs() > 0.0) || !s.is_finite()) {
        return Err(Error::invalid("error scales must be finite and non-zero"));
    }
    let data: Vec<f64> = pred
        .tensor()
        .data()
        .iter()
        .zip(truth.tensor().data())
        .enumerate()
        .map(|(i, (p, t))| 100.0 * (p - t) / scale[i % N_VARIABLES].abs())
        .collect();
    let mut best = 0usize;
    for (i, v) in data.iter().enumerate() {
        if v.abs() > data[best].abs() {
            best = i;
        }
    }
    let (nt, nr) = (truth.n_tangential(), truth.n_radial());
    let variable = best % N_VARIABLES;
    let node = best / N_VARIABLES;
    let argmax = NodeIndex {
        station: node / (nt * nr),
        k: (node / nr) % nt,
        j: node % nr,
        variable,
    };
    let peak = data[best];
    Ok(ErrorField {
        percent: Tensor::new(truth.tensor().shape().to_vec(), data)?,
        argmax,
        peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(seed: u64) -> FlowField {
        let mut x = seed;
        FlowField::new(Tensor::from_fn(vec![4, 3, 5, 6], |_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            1.0 + (x >> 40) as f64 / (1u64 << 24) as f64
        }))
        .unwrap()
    }

    #[test]
    fn r_squared_reference_values() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.0, 2.0, 2.0], &t).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 4.0], &t).unwrap(), 0.5);
        assert!(matches!(r_squared(&[1.0, 1.0], &[3.0, 3.0]), Err(Error::UndefinedMetric(_))));
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mae_reference_values() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(mae_percent(&t, &t, 1.0).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|x| x + 0.01).collect();
        assert!((mae_percent(&p, &t, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(mae_percent(&p, &t, 0.0).is_err());
    }

    #[test]
    fn streaming_and_batch_mae_agree() {
        let truth: Vec<f64> = (0..50).map(|i| 4.7 + 0.013 * (i as f64).sin()).collect();
        let pred: Vec<f64> = truth.iter().enumerate().map(|(i, t)| t + 1e-4 * (i as f64 * 0.7).cos()).collect();
        let mut acc = MaeAccumulator::default();
        for (p, t) in pred.iter().zip(&truth) {
            acc.push(*p, *t);
        }
        let a = acc.percent_of(4.7).unwrap();
        let b = mae_percent(&pred, &truth, 4.7).unwrap();
        assert!((a - b).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn error_field_zero_and_single_node() {
        let t = field(1);
        let scale = [1.0; 6];
        let e = error_field(&t, &t, &scale).unwrap();
        assert!(e.percent.data().iter().all(|&v| v == 0.0));
        let mut p = t.clone();
        let v = p.get(2, 1, 4, 3);
        p.set(2, 1, 4, 3, v + 0.5);
        let e = error_field(&p, &t, &scale).unwrap();
        assert_eq!(e.argmax, NodeIndex { station: 2, k: 1, j: 4, variable: 3 });
        assert!((e.peak - 50.0).abs() < 1e-9);
        assert!(error_field(&p, &FlowField::zeros(2, 5), &scale).is_err());
    }

    proptest! {
        #[test]
        fn r_squared_is_affine_invariant(
            truth in prop::collection::vec(-10.0f64..10.0, 3..30),
            noise in prop::collection::vec(-1.0f64..1.0, 30),
            a in 0.1f64..10.0,
            b in -100.0f64..100.0,
        ) {
            let mean = truth.iter().sum::<f64>() / truth.len() as f64;
            prop_assume!(truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() > 1e-3);
            let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, n)| t + n).collect();
            let r = r_squared(&pred, &truth).unwrap();
            let tp: Vec<f64> = pred.iter().map(|x| a * x + b).collect();
            let tt: Vec<f64> = truth.iter().map(|x| a * x + b).collect();
            let r2 = r_squared(&tp, &tt).unwrap();
            prop_assert!((r - r2).abs() <= 1e-9 * r.abs().max(1.0));
            prop_assert!(r <= 1.0);
        }

        #[test]
        fn error_field_is_antisymmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
            let (a, b) = (field(s1), field(s2));
            let scale = [2.0, 3.0, 1.0, 5.0, 0.5, 1.5];
            let ab = error_field(&a, &b, &scale).unwrap();
            let ba = error_field(&b, &a, &scale).unwrap();
            for (x, y) in ab.percent.data().iter().zip(ba.percent.data()) {
                prop_assert_eq!(*x, -*y);
            }
            prop_assert_eq!(ab.argmax, ba.argmax);
        }
    }
}

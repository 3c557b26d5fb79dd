//! A trained surrogate: network weights plus everything needed to turn a
//! clearance triple into physical fields and overall performance.

use std::path::Path;

use super::{slot_of, NormalizationStats};
use crate::aero::{overall_performance, AnnulusGrid, OverallPerformance};
use crate::error::{Error, Result};
use crate::field::{FlowField, N_STATIONS, N_VARIABLES};
use crate::net::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::net::assemble_input_on;
use crate::net::ModelParameters;
use crate::Tensor;

const NORM_RECORD: &str = "norm.stats";
const REFERENCE_RECORD: &str = "norm.reference";
const SCALE_RECORD: &str = "norm.residual_scale";
const BASELINE_RECORD: &str = "meta.baseline";
const MAGNITUDE_RECORD: &str = "meta.baseline_magnitude";
const RANGE_RECORD: &str = "meta.variable_range";
const ANNULUS_RECORD: &str = "meta.annulus";

/// Reference data stored next to the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMeta {
    /// Overall performance of the nominal-clearance baseline.
    pub baseline: OverallPerformance,
    /// RMS of each variable over the nominal baseline field.
    pub baseline_magnitude: [f64; N_VARIABLES],
    /// `(min, max)` of each variable over the whole dataset.
    pub variable_range: [(f64, f64); N_VARIABLES],
    pub annulus: AnnulusGrid,
}

impl ModelMeta {
    /// Build from the nominal baseline field and dataset-wide ranges.
    pub fn from_baseline(
        baseline_field: &FlowField,
        annulus: AnnulusGrid,
        gamma: f64,
        variable_range: [(f64, f64); N_VARIABLES],
    ) -> Result<Self> {
        let baseline = overall_performance(baseline_field, &annulus, gamma, None)?;
        let mut sq = [0.0f64; N_VARIABLES];
        let data = baseline_field.tensor().data();
        for node in data.chunks(N_VARIABLES) {
            for v in 0..N_VARIABLES {
                sq[v] += node[v] * node[v];
            }
        }
        let count = (data.len() / N_VARIABLES) as f64;
        Ok(ModelMeta {
            baseline,
            baseline_magnitude: sq.map(|s| (s / count).sqrt()),
            variable_range,
            annulus,
        })
    }

    pub fn range_span(&self, var: usize) -> f64 {
        self.variable_range[var].1 - self.variable_range[var].0
    }
}

/// Model output for one clearance triple.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub field: FlowField,
    pub performance: OverallPerformance,
    pub extrapolated: bool,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: ModelParameters<f32>,
    pub normalization: NormalizationStats,
    /// Standardized field added to the network output: the nominal baseline
    /// for residual training, zeros otherwise.
    pub reference: Tensor<f32>,
    /// Per (station, variable) slot factor applied to the network output
    /// before the reference is added.
    pub residual_scale: Vec<f64>,
    pub meta: ModelMeta,
}

fn vec_tensor(v: Vec<f64>) -> Tensor<f64> {
    let n = v.len();
    Tensor::new(vec![n], v).expect("non-empty")
}

impl TrainedModel {
    fn extras(&self) -> Vec<(String, Tensor<f64>)> {
        let b = &self.meta.baseline;
        let a = &self.meta.annulus;
        let ranges: Vec<f64> = self.meta.variable_range.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
        vec![
            (NORM_RECORD.into(), self.normalization.to_tensor()),
            (REFERENCE_RECORD.into(), self.reference.cast()),
            (SCALE_RECORD.into(), vec_tensor(self.residual_scale.clone())),
            (
                BASELINE_RECORD.into(),
                vec_tensor(vec![b.mass_flow, b.pressure_ratio, b.temperature_ratio, b.efficiency, b.gamma]),
            ),
            (MAGNITUDE_RECORD.into(), vec_tensor(self.meta.baseline_magnitude.to_vec())),
            (RANGE_RECORD.into(), Tensor::new(vec![N_VARIABLES, 2], ranges).expect("fixed shape")),
            (
                ANNULUS_RECORD.into(),
                vec_tensor(vec![
                    a.hub_radius,
                    a.tip_radius,
                    a.passage_angle,
                    a.n_radial as f64,
                    a.n_tangential as f64,
                    a.area_scale,
                ]),
            ),
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.model, &self.extras(), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint<f32> = load_checkpoint(path)?;
        Self::from_checkpoint(ck)
    }

    pub fn from_checkpoint(ck: Checkpoint<f32>) -> Result<Self> {
        let need = |name: &str, len: usize| -> Result<Vec<f64>> {
            let t = ck
                .extra(name)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing record {name}; not a trained-model checkpoint")))?;
            if t.len() != len {
                return Err(Error::CorruptCheckpoint(format!("record {name} has {} values, expected {len}", t.len())));
            }
            Ok(t.data().to_vec())
        };
        let normalization = NormalizationStats::from_tensor(
            ck.extra(NORM_RECORD)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing record {NORM_RECORD}")))?,
        )?;
        let reference = ck
            .extra(REFERENCE_RECORD)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing record {REFERENCE_RECORD}")))?
            .cast();
        let residual_scale = need(SCALE_RECORD, N_STATIONS * N_VARIABLES)?;
        let b = need(BASELINE_RECORD, 5)?;
        let m = need(MAGNITUDE_RECORD, N_VARIABLES)?;
        let r = need(RANGE_RECORD, 2 * N_VARIABLES)?;
        let a = need(ANNULUS_RECORD, 6)?;
        let annulus = AnnulusGrid {
            hub_radius: a[0],
            tip_radius: a[1],
            passage_angle: a[2],
            n_radial: a[3] as usize,
            n_tangential: a[4] as usize,
            area_scale: a[5],
        };
        let mut variable_range = [(0.0, 0.0); N_VARIABLES];
        let mut baseline_magnitude = [0.0; N_VARIABLES];
        for v in 0..N_VARIABLES {
            variable_range[v] = (r[2 * v], r[2 * v + 1]);
            baseline_magnitude[v] = m[v];
        }
        let expected = [4, annulus.n_tangential, annulus.n_radial, N_VARIABLES];
        if reference.shape() != expected {
            return Err(Error::CorruptCheckpoint(format!(
                "record {REFERENCE_RECORD} has shape {:?}, expected {expected:?}",
                reference.shape()
            )));
        }
        Ok(TrainedModel {
            model: ck.model,
            normalization,
            reference,
            residual_scale,
            meta: ModelMeta {
                baseline: OverallPerformance {
                    mass_flow: b[0],
                    pressure_ratio: b[1],
                    temperature_ratio: b[2],
                    efficiency: b[3],
                    gamma: b[4],
                    deltas: None,
                },
                baseline_magnitude,
                variable_range,
                annulus,
            },
        })
    }

    /// Physical field predicted for `clearances` (`[igv, rotor, stator]`, % span).
    pub fn predict_field(&self, clearances: [f64; 3]) -> Result<(FlowField, bool)> {
        let a = &self.meta.annulus;
        let grid = assemble_input_on(clearances, [4, a.n_tangential, a.n_radial])?;
        let mut z = self.model.predict(&grid.tensor)?;
        let per_station = z.len() / N_STATIONS;
        for (i, (v, r)) in z.data_mut().iter_mut().zip(self.reference.data()).enumerate() {
            *v = (*v as f64 * self.residual_scale[slot_of(i, per_station)]) as f32 + *r;
        }
        let phys = self.normalization.invert(&z.cast::<f64>())?;
        Ok((FlowField::new(phys)?, grid.extrapolated))
    }

    /// Field plus overall performance with deltas against the nominal baseline.
    pub fn predict(&self, clearances: [f64; 3]) -> Result<Prediction> {
        let (field, extrapolated) = self.predict_field(clearances)?;
        let performance = overall_performance(&field, &self.meta.annulus, self.meta.baseline.gamma, Some(&self.meta.baseline))?;
        Ok(Prediction {
            field,
            performance,
            extrapolated,
        })
    }
}

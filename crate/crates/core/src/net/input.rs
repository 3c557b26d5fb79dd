//! Conditioning grid: how three scalar clearances enter a convolutional network.
//!
//! Clearances are broadcast as spatially constant channels, followed by four
//! coordinate channels (span, sin θ, cos θ, axial index). With circular
//! tangential padding a constant-only input would force tangentially uniform
//! outputs; the coordinate channels let the network place wakes in θ.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::synth::{CLEARANCE_MAX, CLEARANCE_MIN};
use crate::Tensor;

/// Number of channels in the conditioning grid.
pub const CONDITIONING_CHANNELS: usize = 7;

/// Index of the span channel; clearance channels occupy `0..3`.
pub const SPAN_CHANNEL: usize = 3;
pub const SIN_CHANNEL: usize = 4;
pub const COS_CHANNEL: usize = 5;
pub const AXIAL_CHANNEL: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningGrid {
    pub tensor: Tensor<f32>,
    /// True when any clearance lies outside the sampling range.
    pub extrapolated: bool,
}

/// Map a clearance in % span onto `[0, 1]` over the sampling range.
pub fn normalize_clearance(c: f64) -> f64 {
    (c - CLEARANCE_MIN) / (CLEARANCE_MAX - CLEARANCE_MIN)
}

/// Span coordinate of radial node `j` of `n` (cell centred, hub = 0, casing = 1).
pub fn node_span(j: usize, n: usize) -> f64 {
    (j as f64 + 0.5) / n as f64
}

/// Conditioning grid on the full (4, 64, 64) mesh.
pub fn assemble_input(clearances: [f64; 3]) -> Result<ConditioningGrid> {
    assemble_input_on(clearances, [4, 64, 64])
}

/// Conditioning grid on an arbitrary `(A, T, R)` mesh.
pub fn assemble_input_on(clearances: [f64; 3], extents: [usize; 3]) -> Result<ConditioningGrid> {
    if let Some(c) = clearances.iter().find(|c| !c.is_finite()) {
        return Err(Error::invalid(format!("clearance must be finite, got {c}")));
    }
    let extrapolated = clearances
        .iter()
        .any(|&c| !(CLEARANCE_MIN..=CLEARANCE_MAX).contains(&c));
    if extrapolated {
        log::warn!(
            "clearances {clearances:?} lie outside [{CLEARANCE_MIN}, {CLEARANCE_MAX}] % span; prediction is an extrapolation"
        );
    }
    let [na, nt, nr] = extents;
    let norm = clearances.map(normalize_clearance);
    let mut data = Vec::with_capacity(na * nt * nr * CONDITIONING_CHANNELS);
    for a in 0..na {
        let axial = if na > 1 { a as f64 / (na - 1) as f64 } else { 0.0 };
        for k in 0..nt {
            let theta = 2.0 * PI * k as f64 / nt as f64;
            let (s, c) = theta.sin_cos();
            for j in 0..nr {
                data.extend(norm.iter().map(|&v| v as f32));
                data.push(node_span(j, nr) as f32);
                data.push(s as f32);
                data.push(c as f32);
                data.push(axial as f32);
            }
        }
    }
    Ok(ConditioningGrid {
        tensor: Tensor::new(vec![na, nt, nr, CONDITIONING_CHANNELS], data)?,
        extrapolated,
    })
}

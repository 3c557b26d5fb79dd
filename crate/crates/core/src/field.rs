//! Flow-field data model: six variables at four inter-row stations on a
//! (tangential, radial) mesh of one blade passage.

use crate::error::{Error, Result};
use crate::Tensor;

pub const N_STATIONS: usize = 4;
pub const N_VARIABLES: usize = 6;

/// Inter-row stations in axial order.
pub const STATION_NAMES: [&str; N_STATIONS] = ["Blading_In", "I1Outlet", "R1Outlet", "Blading_Out"];

/// Variable order along the last axis.
pub const VARIABLE_NAMES: [&str; N_VARIABLES] = ["Pt", "Tt", "Vx", "Vt", "Vr", "rho"];
pub const VARIABLE_UNITS: [&str; N_VARIABLES] = ["Pa", "K", "m/s", "m/s", "m/s", "kg/m3"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Station {
    BladingIn = 0,
    I1Outlet = 1,
    R1Outlet = 2,
    BladingOut = 3,
}

impl Station {
    pub const ALL: [Station; N_STATIONS] = [
        Station::BladingIn,
        Station::I1Outlet,
        Station::R1Outlet,
        Station::BladingOut,
    ];

    pub fn name(self) -> &'static str {
        STATION_NAMES[self as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlowVar {
    Pt = 0,
    Tt = 1,
    Vx = 2,
    Vt = 3,
    Vr = 4,
    Rho = 5,
}

impl FlowVar {
    pub const ALL: [FlowVar; N_VARIABLES] = [
        FlowVar::Pt,
        FlowVar::Tt,
        FlowVar::Vx,
        FlowVar::Vt,
        FlowVar::Vr,
        FlowVar::Rho,
    ];

    pub fn name(self) -> &'static str {
        VARIABLE_NAMES[self as usize]
    }
}

/// A `(station, tangential, radial, variable)` tensor in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    tensor: Tensor<f64>,
}

impl FlowField {
    pub fn new(tensor: Tensor<f64>) -> Result<Self> {
        let s = tensor.shape();
        if s.len() != 4 || s[0] != N_STATIONS || s[3] != N_VARIABLES {
            return Err(Error::invalid(format!(
                "flow field must be ({N_STATIONS}, T, R, {N_VARIABLES}), got {s:?}"
            )));
        }
        Ok(FlowField { tensor })
    }

    pub fn zeros(n_tangential: usize, n_radial: usize) -> Self {
        FlowField {
            tensor: Tensor::zeros(vec![N_STATIONS, n_tangential, n_radial, N_VARIABLES]),
        }
    }

    pub fn tensor(&self) -> &Tensor<f64> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<f64> {
        self.tensor
    }

    pub fn n_tangential(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn n_radial(&self) -> usize {
        self.tensor.shape()[2]
    }

    #[inline]
    fn idx(&self, s: usize, k: usize, j: usize, v: usize) -> usize {
        ((s * self.n_tangential() + k) * self.n_radial() + j) * N_VARIABLES + v
    }

    #[inline]
    pub fn get(&self, s: usize, k: usize, j: usize, v: usize) -> f64 {
        self.tensor.data()[self.idx(s, k, j, v)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, k: usize, j: usize, v: usize, value: f64) {
        let i = self.idx(s, k, j, v);
        self.tensor.data_mut()[i] = value;
    }

    /// The six variables at one node.
    pub fn node(&self, s: usize, k: usize, j: usize) -> &[f64] {
        let i = self.idx(s, k, j, 0);
        &self.tensor.data()[i..i + N_VARIABLES]
    }

    pub fn node_mut(&mut self, s: usize, k: usize, j: usize) -> &mut [f64] {
        let i = self.idx(s, k, j, 0);
        &mut self.tensor.data_mut()[i..i + N_VARIABLES]
    }

    /// Finite everywhere and strictly positive Pt, Tt and density.
    pub fn check_physical(&self) -> Result<()> {
        for (i, node) in self.tensor.data().chunks(N_VARIABLES).enumerate() {
            if node.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidState(format!("non-finite value at node {i}")));
            }
            for v in [FlowVar::Pt, FlowVar::Tt, FlowVar::Rho] {
                if node[v as usize] <= 0.0 {
                    return Err(Error::InvalidState(format!(
                        "{} = {} is not positive at node {i}",
                        v.name(),
                        node[v as usize]
                    )));
                }
            }
        }
        Ok(())
    }
}

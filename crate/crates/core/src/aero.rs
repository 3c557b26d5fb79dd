//! Mass-flow averaging and overall compressor performance.
//!
//! Flow field → circumferential mass-flow averages (radial profiles) → radial
//! mass-flow averages (one value per station) → mass flow, pressure ratio and
//! polytropic efficiency. Every variable is averaged with the local mass flux
//! `w = ρ·Vx·dA` as the weight.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FlowField, FlowVar, Station, N_STATIONS, N_VARIABLES, STATION_NAMES, VARIABLE_NAMES, VARIABLE_UNITS};

pub const DEFAULT_GAMMA: f64 = 1.4;

/// Geometry of one annulus passage on an equispaced, cell-centred mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusGrid {
    pub hub_radius: f64,
    pub tip_radius: f64,
    /// Sector angle of one passage (radians).
    pub passage_angle: f64,
    pub n_radial: usize,
    pub n_tangential: usize,
    /// Multiplies every cell area; 1 for the physical grid.
    pub area_scale: f64,
}

impl AnnulusGrid {
    pub fn new(
        hub_to_tip: f64,
        tip_radius: f64,
        passage_angle: f64,
        n_radial: usize,
        n_tangential: usize,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&hub_to_tip) || tip_radius <= 0.0 || passage_angle <= 0.0 {
            return Err(Error::invalid(
                "annulus needs 0 <= hub/tip < 1, positive tip radius and passage angle",
            ));
        }
        if n_radial == 0 || n_tangential == 0 {
            return Err(Error::invalid("annulus mesh needs at least one node per axis"));
        }
        Ok(AnnulusGrid {
            hub_radius: hub_to_tip * tip_radius,
            tip_radius,
            passage_angle,
            n_radial,
            n_tangential,
            area_scale: 1.0,
        })
    }

    /// Same mesh with every cell area multiplied by `factor`.
    pub fn with_area_scale(&self, factor: f64) -> Self {
        AnnulusGrid {
            area_scale: self.area_scale * factor,
            ..self.clone()
        }
    }

    pub fn dr(&self) -> f64 {
        (self.tip_radius - self.hub_radius) / self.n_radial as f64
    }

    pub fn dtheta(&self) -> f64 {
        self.passage_angle / self.n_tangential as f64
    }

    /// Radius of the centre of radial cell `j`.
    pub fn radius(&self, j: usize) -> f64 {
        self.hub_radius + (j as f64 + 0.5) * self.dr()
    }

    /// Tangential angle of node `k` within the passage.
    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * self.dtheta()
    }

    /// Area of a cell at radial index `j`: `r(j)·Δr·Δθ`.
    pub fn cell_area(&self, j: usize) -> f64 {
        self.radius(j) * self.dr() * self.dtheta() * self.area_scale
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_radial).map(|j| self.cell_area(j)).sum::<f64>() * self.n_tangential as f64
    }

    /// Exact one-passage sector area `Θ/2 · (r_tip² − r_hub²)`.
    pub fn analytic_area(&self) -> f64 {
        0.5 * self.passage_angle * (self.tip_radius.powi(2) - self.hub_radius.powi(2)) * self.area_scale
    }

    fn check_field(&self, field: &FlowField) -> Result<()> {
        if field.n_radial() != self.n_radial || field.n_tangential() != self.n_tangential {
            return Err(Error::invalid(format!(
                "field mesh ({}, {}) does not match grid ({}, {})",
                field.n_tangential(),
                field.n_radial(),
                self.n_tangential,
                self.n_radial
            )));
        }
        Ok(())
    }
}

/// Circumferential mass-flow averages for every station.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfiles {
    /// `values[station][j][variable]`
    pub values: Vec<Vec<[f64; N_VARIABLES]>>,
    /// Ring mass flow `Σ_k ρ·Vx·dA` for each station and radial index.
    pub ring_mass_flow: Vec<Vec<f64>>,
}

impl RadialProfiles {
    pub fn n_radial(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }
}

/// One mass-flow-averaged value per station and variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationAverages {
    pub values: Vec<[f64; N_VARIABLES]>,
    pub mass_flow: Vec<f64>,
}

impl StationAverages {
    pub fn get(&self, station: Station, var: FlowVar) -> f64 {
        self.values[station as usize][var as usize]
    }
}

/// Mass flow, pressure ratio and polytropic efficiency of the blading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallPerformance {
    /// Mass flow through one passage at Blading_In (kg/s).
    pub mass_flow: f64,
    pub pressure_ratio: f64,
    pub temperature_ratio: f64,
    pub efficiency: f64,
    pub gamma: f64,
    pub deltas: Option<PerformanceDeltas>,
}

/// Percentage change relative to a baseline: `100·(x − x_base)/x_base`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceDeltas {
    pub mass_flow_pct: f64,
    pub pressure_ratio_pct: f64,
    pub efficiency_pct: f64,
}

impl OverallPerformance {
    pub fn relative_to(&self, baseline: &OverallPerformance) -> PerformanceDeltas {
        let pct = |x: f64, b: f64| 100.0 * (x - b) / b;
        PerformanceDeltas {
            mass_flow_pct: pct(self.mass_flow, baseline.mass_flow),
            pressure_ratio_pct: pct(self.pressure_ratio, baseline.pressure_ratio),
            efficiency_pct: pct(self.efficiency, baseline.efficiency),
        }
    }

    /// The three headline quantities in a fixed order: ṁ, PR, η_p.
    pub fn headline(&self) -> [f64; 3] {
        [self.mass_flow, self.pressure_ratio, self.efficiency]
    }
}

/// Circumferential mass-flow averages `φ̄(j) = Σ_k w·φ / Σ_k w` with `w = ρ·Vx·dA`.
pub fn radial_profiles(field: &FlowField, grid: &AnnulusGrid) -> Result<RadialProfiles> {
    grid.check_field(field)?;
    let (nt, nr) = (field.n_tangential(), field.n_radial());
    let mut values = Vec::with_capacity(N_STATIONS);
    let mut ring = Vec::with_capacity(N_STATIONS);
    for s in 0..N_STATIONS {
        let mut sv = Vec::with_capacity(nr);
        let mut sw = Vec::with_capacity(nr);
        for j in 0..nr {
            let da = grid.cell_area(j);
            let mut acc = [0.0f64; N_VARIABLES];
            let mut wsum = 0.0;
            for k in 0..nt {
                let node = field.node(s, k, j);
                let w = node[FlowVar::Rho as usize] * node[FlowVar::Vx as usize] * da;
                wsum += w;
                for v in 0..N_VARIABLES {
                    acc[v] += w * node[v];
                }
            }
            if !(wsum > 0.0) {
                return Err(Error::ReversedFlow {
                    station: s,
                    radial: j,
                    weight: wsum,
                });
            }
            sv.push(acc.map(|a| a / wsum));
            sw.push(wsum);
        }
        values.push(sv);
        ring.push(sw);
    }
    Ok(RadialProfiles {
        values,
        ring_mass_flow: ring,
    })
}

/// Radial mass-flow average of each profile, weighted by the ring mass flow.
pub fn station_average(profiles: &RadialProfiles) -> Result<StationAverages> {
    let mut values = Vec::with_capacity(profiles.values.len());
    let mut mass_flow = Vec::with_capacity(profiles.values.len());
    for (s, (sv, sw)) in profiles.values.iter().zip(&profiles.ring_mass_flow).enumerate() {
        let total: f64 = sw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ReversedFlow {
                station: s,
                radial: 0,
                weight: total,
            });
        }
        let mut acc = [0.0f64; N_VARIABLES];
        for (row, &w) in sv.iter().zip(sw) {
            for v in 0..N_VARIABLES {
                acc[v] += w * row[v];
            }
        }
        values.push(acc.map(|a| a / total));
        mass_flow.push(total);
    }
    Ok(StationAverages { values, mass_flow })
}

/// `ṁ = Σ_{j,k} ρ·Vx·dA` at one station. Negative values mean net reversed flow.
pub fn mass_flow(field: &FlowField, grid: &AnnulusGrid, station: Station) -> Result<f64> {
    grid.check_field(field)?;
    let s = station as usize;
    let mut total = 0.0;
    for j in 0..field.n_radial() {
        let da = grid.cell_area(j);
        let mut ring = 0.0;
        for k in 0..field.n_tangential() {
            let node = field.node(s, k, j);
            ring += node[FlowVar::Rho as usize] * node[FlowVar::Vx as usize];
        }
        total += ring * da;
    }
    Ok(total)
}

/// Polytropic efficiency `((γ−1)/γ)·ln(PR)/ln(TR)`.
pub fn polytropic_efficiency(pressure_ratio: f64, temperature_ratio: f64, gamma: f64) -> Result<f64> {
    if !(pressure_ratio > 0.0) || !(temperature_ratio > 0.0) {
        return Err(Error::InvalidState(format!(
            "pressure ratio {pressure_ratio} and temperature ratio {temperature_ratio} must be positive"
        )));
    }
    let ln_tr = temperature_ratio.ln();
    if ln_tr == 0.0 {
        return Err(Error::UndefinedEfficiency);
    }
    Ok((gamma - 1.0) / gamma * pressure_ratio.ln() / ln_tr)
}

/// Overall performance from station averages: PR and TR between Blading_Out
/// and Blading_In, ṁ at Blading_In.
pub fn performance_from_averages(
    avg: &StationAverages,
    gamma: f64,
    baseline: Option<&OverallPerformance>,
) -> Result<OverallPerformance> {
    let pr = avg.get(Station::BladingOut, FlowVar::Pt) / avg.get(Station::BladingIn, FlowVar::Pt);
    let tr = avg.get(Station::BladingOut, FlowVar::Tt) / avg.get(Station::BladingIn, FlowVar::Tt);
    let eff = polytropic_efficiency(pr, tr, gamma)?;
    let mut perf = OverallPerformance {
        mass_flow: avg.mass_flow[Station::BladingIn as usize],
        pressure_ratio: pr,
        temperature_ratio: tr,
        efficiency: eff,
        gamma,
        deltas: None,
    };
    if let Some(b) = baseline {
        perf.deltas = Some(perf.relative_to(b));
    }
    Ok(perf)
}

pub fn overall_performance(
    field: &FlowField,
    grid: &AnnulusGrid,
    gamma: f64,
    baseline: Option<&OverallPerformance>,
) -> Result<OverallPerformance> {
    let profiles = radial_profiles(field, grid)?;
    let avg = station_average(&profiles)?;
    performance_from_averages(&avg, gamma, baseline)
}

fn header_with_units(first: &str) -> String {
    let mut h = first.to_string();
    for (n, u) in VARIABLE_NAMES.iter().zip(VARIABLE_UNITS) {
        let _ = write!(h, ",{n}_{}", u.replace('/', "_per_"));
    }
    h
}

/// One row per (station, radial node): `station,radial_index,span,<variables>`.
pub fn profiles_csv(profiles: &RadialProfiles) -> String {
    let mut out = header_with_units("station,radial_index,span");
    out.push('\n');
    let nr = profiles.n_radial();
    for (s, sv) in profiles.values.iter().enumerate() {
        for (j, row) in sv.iter().enumerate() {
            let _ = write!(out, "{},{},{}", STATION_NAMES[s], j, (j as f64 + 0.5) / nr as f64);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// One row per station: `station,mass_flow_kg_per_s,<variables>`.
pub fn averages_csv(avg: &StationAverages) -> String {
    let mut out = header_with_units("station,mass_flow_kg_per_s");
    out.push('\n');
    for (s, row) in avg.values.iter().enumerate() {
        let _ = write!(out, "{},{}", STATION_NAMES[s], avg.mass_flow[s]);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

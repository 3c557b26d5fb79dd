//! Accuracy metrics over a split and report exports.
//!
//! CSV schemas written by [`export_report`]:
//!
//! | file                   | columns |
//! |------------------------|---------|
//! | `summary.csv`          | `variable,r2,mae_pct,dataset_range_pct` |
//! | `scatter_<var>.csv`    | `sample_id,truth,pred` |
//! | `contour_worst.csv`    | `station,j,k,variable,truth,pred,error_pct` |
//! | `profiles_worst.csv`   | `station,j,span,variable,truth,pred` |
//! | `field_errors.csv`     | `station,variable,max_error_pct_range,mean_abs_error` |
//! | `worst_case.csv`       | `key,value` |
//!
//! Lines starting with `#` are comments documenting normalization choices.
//! `mae_pct` and `dataset_range_pct` are percentages of the nominal-baseline
//! value of the quantity; `error_pct` is relative to the RMS of the variable
//! over the nominal baseline field; `max_error_pct_range` is relative to the
//! dataset-wide range of the variable.

mod metrics;
mod svg;

use std::fmt::Write as _;
use std::path::Path;

pub use metrics::{error_field, mae_percent, r_squared, ErrorField, MaeAccumulator, NodeIndex};

use crate::aero::{overall_performance, radial_profiles, OverallPerformance};
use crate::error::{Error, Result};
use crate::field::{FlowField, N_STATIONS, N_VARIABLES, STATION_NAMES, VARIABLE_NAMES};
use crate::train::{SampleSource, TrainedModel};
use crate::par;

/// The overall-performance quantities reported per case.
pub const PERFORMANCE_NAMES: [&str; 3] = ["mass_flow", "pressure_ratio", "efficiency"];

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub id: usize,
    pub clearances: [f64; 3],
    pub truth: OverallPerformance,
    pub pred: OverallPerformance,
    /// Largest node error of the case, % of the dataset range of its variable.
    pub peak_error_pct_range: f64,
    pub peak_at: NodeIndex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceMetric {
    pub name: &'static str,
    pub r2: f64,
    pub mae_pct: f64,
    /// `100·(max − min)/baseline` of the truth values over the split.
    pub dataset_range_pct: f64,
    /// Raw `max − min` of the truth values.
    pub range: f64,
    /// Raw mean absolute error.
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldMetric {
    pub station: usize,
    pub variable: usize,
    /// Largest node error over the split, % of the variable's dataset range.
    pub max_error_pct_range: f64,
    /// Mean absolute node error in physical units.
    pub mean_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub performance: Vec<PerformanceMetric>,
    pub fields: Vec<FieldMetric>,
}

/// Fields of the worst case, kept for contour and profile exports.
#[derive(Clone, Debug)]
pub struct WorstCase {
    pub id: usize,
    pub clearances: [f64; 3],
    pub truth: FlowField,
    pub pred: FlowField,
    /// Percent of baseline RMS magnitude per node.
    pub error: ErrorField,
    /// Percent of dataset range per node.
    pub error_range: ErrorField,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub split_name: String,
    pub cases: Vec<CaseResult>,
    pub report: MetricReport,
    pub worst: WorstCase,
    pub baseline: OverallPerformance,
}

fn headline(p: &OverallPerformance) -> [f64; 3] {
    p.headline()
}

struct CaseWork {
    result: CaseResult,
    slot_max: [[f64; N_VARIABLES]; N_STATIONS],
    slot_abs_sum: [[f64; N_VARIABLES]; N_STATIONS],
    nodes_per_slot: usize,
}

/// Run the model over `indices` and compare against ground truth.
pub fn evaluate<S: SampleSource + ?Sized>(
    model: &TrainedModel,
    source: &S,
    indices: &[usize],
    split_name: &str,
) -> Result<Evaluation> {
    if indices.len() < 2 {
        return Err(Error::invalid("evaluation needs at least two samples"));
    }
    let meta = &model.meta;
    let gamma = meta.baseline.gamma;
    let mut range_scale = [0.0; N_VARIABLES];
    for (v, s) in range_scale.iter_mut().enumerate() {
        *s = meta.range_span(v);
    }
    let work: Vec<Result<CaseWork>> = par::map_range(indices.len(), |i| {
        let id = indices[i];
        let clearances = source.clearances(id)?;
        let truth = FlowField::new(source.field(id)?.cast())?;
        let (pred, _) = model.predict_field(clearances)?;
        let tp = overall_performance(&truth, &meta.annulus, gamma, Some(&meta.baseline))?;
        let pp = overall_performance(&pred, &meta.annulus, gamma, Some(&meta.baseline))?;
        let er = error_field(&pred, &truth, &range_scale)?;
        let mut abs_sum = [[0.0; N_VARIABLES]; N_STATIONS];
        let per_station = truth.tensor().len() / N_STATIONS;
        for (n, (p, t)) in pred.tensor().data().iter().zip(truth.tensor().data()).enumerate() {
            abs_sum[n / per_station][n % N_VARIABLES] += (p - t).abs();
        }
        Ok(CaseWork {
            result: CaseResult {
                id,
                clearances,
                truth: tp,
                pred: pp,
                peak_error_pct_range: er.peak_abs(),
                peak_at: er.argmax,
            },
            slot_max: er.max_abs_by_slot(),
            slot_abs_sum: abs_sum,
            nodes_per_slot: per_station / N_VARIABLES,
        })
    });
    let work = work.into_iter().collect::<Result<Vec<_>>>()?;

    let mut performance = Vec::with_capacity(3);
    let base = headline(&meta.baseline);
    for q in 0..3 {
        let truth: Vec<f64> = work.iter().map(|w| headline(&w.result.truth)[q]).collect();
        let pred: Vec<f64> = work.iter().map(|w| headline(&w.result.pred)[q]).collect();
        let lo = truth.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = truth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mae_pct = mae_percent(&pred, &truth, base[q])?;
        performance.push(PerformanceMetric {
            name: PERFORMANCE_NAMES[q],
            r2: r_squared(&pred, &truth)?,
            mae_pct,
            dataset_range_pct: 100.0 * (hi - lo) / base[q].abs(),
            range: hi - lo,
            mae: mae_pct * base[q].abs() / 100.0,
        });
    }
    let mut fields = Vec::with_capacity(N_STATIONS * N_VARIABLES);
    for s in 0..N_STATIONS {
        for v in 0..N_VARIABLES {
            let max = work.iter().map(|w| w.slot_max[s][v]).fold(0.0, f64::max);
            let sum: f64 = work.iter().map(|w| w.slot_abs_sum[s][v]).sum();
            let count: usize = work.iter().map(|w| w.nodes_per_slot).sum();
            fields.push(FieldMetric {
                station: s,
                variable: v,
                max_error_pct_range: max,
                mean_abs_error: sum / count as f64,
            });
        }
    }

    // worst case by peak node error; first index wins ties
    let mut wi = 0;
    for (i, w) in work.iter().enumerate() {
        if w.result.peak_error_pct_range > work[wi].result.peak_error_pct_range {
            wi = i;
        }
    }
    let wid = work[wi].result.id;
    let clearances = work[wi].result.clearances;
    let truth = FlowField::new(source.field(wid)?.cast())?;
    let (pred, _) = model.predict_field(clearances)?;
    let worst = WorstCase {
        id: wid,
        clearances,
        error: error_field(&pred, &truth, &meta.baseline_magnitude)?,
        error_range: error_field(&pred, &truth, &range_scale)?,
        truth,
        pred,
    };
    Ok(Evaluation {
        split_name: split_name.to_string(),
        cases: work.into_iter().map(|w| w.result).collect(),
        report: MetricReport { performance, fields },
        worst,
        baseline: meta.baseline,
    })
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

pub fn summary_csv(eval: &Evaluation) -> String {
    let mut out = String::new();
    out.push_str("# mae_pct: mean |pred - truth| as % of the nominal-baseline value\n");
    out.push_str("# dataset_range_pct: (max - min) of truth over the split as % of the nominal-baseline value\n");
    let _ = writeln!(out, "# split: {} ({} samples)", eval.split_name, eval.cases.len());
    out.push_str("variable,r2,mae_pct,dataset_range_pct\n");
    for m in &eval.report.performance {
        let _ = writeln!(out, "{},{},{},{}", m.name, m.r2, m.mae_pct, m.dataset_range_pct);
    }
    out
}

fn scatter_csv(eval: &Evaluation, q: usize) -> String {
    let mut out = String::from("sample_id,truth,pred\n");
    for c in &eval.cases {
        let _ = writeln!(out, "{},{},{}", c.id, headline(&c.truth)[q], headline(&c.pred)[q]);
    }
    out
}

fn contour_csv(w: &WorstCase) -> String {
    let mut out = String::from("# error_pct: 100 (pred - truth) / RMS of the variable over the nominal baseline\n");
    out.push_str("station,j,k,variable,truth,pred,error_pct\n");
    let (nt, nr) = (w.truth.n_tangential(), w.truth.n_radial());
    for s in 0..N_STATIONS {
        for j in 0..nr {
            for k in 0..nt {
                for v in 0..N_VARIABLES {
                    let idx = ((s * nt + k) * nr + j) * N_VARIABLES + v;
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        STATION_NAMES[s],
                        j,
                        k,
                        VARIABLE_NAMES[v],
                        w.truth.get(s, k, j, v),
                        w.pred.get(s, k, j, v),
                        w.error.percent.data()[idx]
                    );
                }
            }
        }
    }
    out
}

fn profiles_csv(truth: &crate::aero::RadialProfiles, pred: &crate::aero::RadialProfiles) -> String {
    let mut out = String::from("station,j,span,variable,truth,pred\n");
    let nr = truth.n_radial();
    for s in 0..N_STATIONS {
        for j in 0..nr {
            for v in 0..N_VARIABLES {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    STATION_NAMES[s],
                    j,
                    (j as f64 + 0.5) / nr as f64,
                    VARIABLE_NAMES[v],
                    truth.values[s][j][v],
                    pred.values[s][j][v]
                );
            }
        }
    }
    out
}

fn field_errors_csv(r: &MetricReport) -> String {
    let mut out = String::from("# max_error_pct_range: largest |pred - truth| over all nodes and cases as % of the variable's dataset range\n");
    out.push_str("station,variable,max_error_pct_range,mean_abs_error\n");
    for f in &r.fields {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            STATION_NAMES[f.station], VARIABLE_NAMES[f.variable], f.max_error_pct_range, f.mean_abs_error
        );
    }
    out
}

fn worst_csv(w: &WorstCase) -> String {
    let a = w.error_range.argmax;
    let mut out = String::from("key,value\n");
    let _ = writeln!(out, "sample_id,{}", w.id);
    let _ = writeln!(out, "igv_clearance,{}", w.clearances[0]);
    let _ = writeln!(out, "rotor_clearance,{}", w.clearances[1]);
    let _ = writeln!(out, "stator_clearance,{}", w.clearances[2]);
    let _ = writeln!(out, "peak_station,{}", STATION_NAMES[a.station]);
    let _ = writeln!(out, "peak_j,{}", a.j);
    let _ = writeln!(out, "peak_k,{}", a.k);
    let _ = writeln!(out, "peak_variable,{}", VARIABLE_NAMES[a.variable]);
    let _ = writeln!(out, "peak_error_pct_range,{}", w.error_range.peak);
    let _ = writeln!(out, "peak_error_pct_baseline,{}", w.error.percent.data()[flat(&w.truth, a)]);
    out
}

fn flat(f: &FlowField, a: NodeIndex) -> usize {
    ((a.station * f.n_tangential() + a.k) * f.n_radial() + a.j) * N_VARIABLES + a.variable
}

/// Write every report file into `dir`. Output depends only on `eval`, so
/// repeated exports are byte-identical.
pub fn export_report(eval: &Evaluation, model: &TrainedModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir, "summary.csv", &summary_csv(eval))?;
    for (q, name) in PERFORMANCE_NAMES.iter().enumerate() {
        write_file(dir, &format!("scatter_{name}.csv"), &scatter_csv(eval, q))?;
        let pts: Vec<(f64, f64)> = eval
            .cases
            .iter()
            .map(|c| (headline(&c.truth)[q], headline(&c.pred)[q]))
            .collect();
        write_file(dir, &format!("scatter_{name}.svg"), &svg::scatter(name, &pts))?;
    }
    let w = &eval.worst;
    write_file(dir, "contour_worst.csv", &contour_csv(w))?;
    let tp = radial_profiles(&w.truth, &model.meta.annulus)?;
    let pp = radial_profiles(&w.pred, &model.meta.annulus)?;
    write_file(dir, "profiles_worst.csv", &profiles_csv(&tp, &pp))?;
    for v in 0..N_VARIABLES {
        write_file(
            dir,
            &format!("profiles_worst_{}.svg", VARIABLE_NAMES[v]),
            &svg::profiles(VARIABLE_NAMES[v], &tp, &pp, v),
        )?;
    }
    write_file(dir, "field_errors.csv", &field_errors_csv(&eval.report))?;
    write_file(dir, "worst_case.csv", &worst_csv(w))?;
    Ok(())
}

/// Parse `variable,r2,mae_pct,dataset_range_pct` rows back from `summary.csv`.
pub fn parse_summary(text: &str) -> Result<Vec<(String, [f64; 3])>> {
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::invalid(format!("bad summary row {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::invalid(format!("bad number {s:?}")));
        rows.push((cols[0].to_string(), [num(cols[1])?, num(cols[2])?, num(cols[3])?]));
    }
    Ok(rows)
}

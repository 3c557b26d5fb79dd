use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum acceptable relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so that gradients that
    /// are zero up to round-off are compared in absolute terms.
    pub floor: f64,
    /// Check at most this many randomly chosen elements per parameter.
    pub max_elements_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-6,
            floor: 1e-8,
            max_elements_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, element index) of the worst disagreement.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Largest relative error per parameter.
    pub per_param: Vec<f64>,
    pub checked: usize,
    pub passed: bool,
}

/// Compare the adjoint gradients returned by `f` against central finite
/// differences of its scalar output.
///
/// `f` maps the parameter list to `(loss, d loss / d param)` for every
/// parameter. It must be deterministic.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>)>,
{
    let (_, analytic) = f(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        per_param: vec![0.0; params.len()],
        checked: 0,
        passed: true,
    };
    for (p, grad) in analytic.iter().enumerate() {
        let len = params[p].len();
        let indices: Vec<usize> = match opts.max_elements_per_param {
            Some(m) if m < len => {
                let mut v = sample(&mut rng, len, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        for i in indices {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + opts.step;
            let (plus, _) = f(&work)?;
            work[p].data_mut()[i] = orig - opts.step;
            let (minus, _) = f(&work)?;
            work[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(opts.floor);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.per_param[p] {
                report.per_param[p] = rel;
            }
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst = (p, i);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error.is_finite() && report.max_rel_error < opts.tolerance;
    Ok(report)
}

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Denominator floor so gradients near zero are compared absolutely.
    pub abs_floor: f64,
    /// Coordinates probed per parameter tensor; larger tensors are sampled.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-5,
            abs_floor: 1e-6,
            max_coords_per_param: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords_checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// Compares `analytic` (indexed by [`ParamId`]) against central differences
/// of `loss`. A missing analytic gradient counts as zero.
pub fn grad_check(
    store: &ParamStore,
    loss: impl Fn(&ParamStore) -> Result<f64>,
    analytic: &[Option<Tensor>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        coords_checked: 0,
        worst: None,
        passed: true,
    };
    for (id, name, value) in store.iter() {
        let n = value.len();
        let coords: Vec<usize> = if n <= opts.max_coords_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let numeric = central_difference(&mut probe, id, i, opts.h, &loss)?;
            let a = analytic
                .get(id.0)
                .and_then(Option::as_ref)
                .map_or(0.0, |g| g.data()[i]);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.abs_floor);
            report.coords_checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst = Some((name.to_string(), i));
            }
        }
    }
    report.passed = report.max_rel_error <= opts.tol;
    Ok(report)
}

fn central_difference(
    probe: &mut ParamStore,
    id: ParamId,
    i: usize,
    h: f64,
    loss: &impl Fn(&ParamStore) -> Result<f64>,
) -> Result<f64> {
    let orig = probe.get(id).data()[i];
    probe.get_mut(id).data_mut()[i] = orig + h;
    let plus = loss(probe)?;
    probe.get_mut(id).data_mut()[i] = orig - h;
    let minus = loss(probe)?;
    probe.get_mut(id).data_mut()[i] = orig;
    Ok((plus - minus) / (2.0 * h))
}

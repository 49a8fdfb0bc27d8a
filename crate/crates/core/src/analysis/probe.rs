use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::metrics::macro_f1;
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::tensor::Tensor;

/// Input representation fed to a probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSource {
    TomFeatures,
    OmkHidden,
    PmkHidden,
    RandomNoise,
}

impl ProbeSource {
    pub const ALL: [ProbeSource; 4] = [
        ProbeSource::TomFeatures,
        ProbeSource::OmkHidden,
        ProbeSource::PmkHidden,
        ProbeSource::RandomNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeSource::TomFeatures => "tom_features",
            ProbeSource::OmkHidden => "omk_hidden",
            ProbeSource::PmkHidden => "pmk_hidden",
            ProbeSource::RandomNoise => "random_noise",
        }
    }
}

/// `n × width` standard-normal features from `seed`.
pub fn noise_features(n: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * width).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(&[n, width], data).expect("shape")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub max_iters: usize,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub grad_tol: f64,
    /// Initial weights are `U(±init_scale)` from `seed` (zero by default).
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            grad_tol: 1e-6,
            init_scale: 0.0,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    /// `(d + 1) × classes`; the last row is the intercept.
    pub weights: Tensor,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Standardized features with a trailing constant column.
fn design(x: &Tensor, mean: &[f64], scale: &[f64]) -> Tensor {
    let (n, d) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(&[n, d + 1]);
    for r in 0..n {
        let src = x.row(r);
        let dst = out.row_mut(r);
        for c in 0..d {
            dst[c] = (src[c] - mean[c]) / scale[c];
        }
        dst[d] = 1.0;
    }
    out
}

/// Mean cross-entropy and the row-wise softmax probabilities.
fn objective(xd: &Tensor, w: &Tensor, y: &[usize]) -> Result<(f64, Tensor)> {
    let mut p = xd.matmul(w)?;
    let mut loss = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let row = p.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        loss += z.ln() + max - row[label];
        for v in row.iter_mut() {
            *v = (*v - max).exp() / z;
        }
    }
    Ok((loss / y.len() as f64, p))
}

impl LogisticModel {
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        if x.cols() + 1 != self.weights.rows() {
            return Err(Error::Contract(format!(
                "probe fitted on width {} applied to width {}",
                self.weights.rows() - 1,
                x.cols()
            )));
        }
        let logits = design(x, &self.mean, &self.scale).matmul(&self.weights)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }
}

/// Fitting outcome with the objective after every accepted step.
#[derive(Clone, Debug)]
pub struct ProbeFit {
    pub model: LogisticModel,
    pub iterations: usize,
    pub converged: bool,
    pub objective: Vec<f64>,
}

/// Full-batch gradient descent with Armijo backtracking (the step doubles
/// after each accepted move), so the objective never increases. Stops when
/// the gradient norm drops below `grad_tol` or after `max_iters` steps.
pub fn fit_logistic(x: &Tensor, y: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<ProbeFit> {
    let (n, d) = (x.rows(), x.cols());
    if n != y.len() || n == 0 {
        return Err(Error::Contract(format!("probe: {n} feature rows for {} labels", y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(Error::Schema(format!("label {bad} outside {classes} classes")));
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(Error::DegenerateFit(format!("all training labels are class {}", y[0])));
    }
    let mut mean = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v / n as f64;
        }
    }
    for r in 0..n {
        for c in 0..d {
            scale[c] += (x.row(r)[c] - mean[c]).powi(2) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let xd = design(x, &mean, &scale);
    let xt = xd.transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = Tensor::new(
        &[d + 1, classes],
        (0..(d + 1) * classes)
            .map(|_| if cfg.init_scale > 0.0 { rng.random_range(-cfg.init_scale..cfg.init_scale) } else { 0.0 })
            .collect(),
    )?;
    let (mut f, mut p) = objective(&xd, &w, y)?;
    let mut history = vec![f];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        for (r, &label) in y.iter().enumerate() {
            p.row_mut(r)[label] -= 1.0;
        }
        let g = xt.matmul(&p)?.map(|v| v / n as f64);
        let g2: f64 = g.data().iter().map(|v| v * v).sum();
        if g2.sqrt() < cfg.grad_tol {
            converged = true;
            break;
        }
        loop {
            let cand = w.zip_map(&g, |a, b| a - step * b)?;
            let (fc, pc) = objective(&xd, &cand, y)?;
            if fc <= f - 1e-4 * step * g2 {
                w = cand;
                f = fc;
                p = pc;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                // No representable descent step: the objective is flat to
                // machine precision.
                return Ok(ProbeFit {
                    model: LogisticModel { weights: w, mean, scale },
                    iterations,
                    converged: true,
                    objective: history,
                });
            }
        }
        history.push(f);
        step *= 2.0;
        iterations += 1;
    }
    Ok(ProbeFit {
        model: LogisticModel { weights: w, mean, scale },
        iterations,
        converged,
        objective: history,
    })
}

#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    /// Macro-F1 on the evaluation set.
    pub f1: f64,
    pub fit: ProbeFit,
}

/// Fits on `(train_x, train_y)` and reports macro-F1 on `(test_x, test_y)`.
pub fn logistic_probe(
    train_x: &Tensor,
    train_y: &[usize],
    test_x: &Tensor,
    test_y: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeOutcome> {
    let fit = fit_logistic(train_x, train_y, classes, cfg)?;
    let pred = fit.model.predict(test_x)?;
    let f1 = macro_f1(test_y, &pred, classes)?;
    Ok(ProbeOutcome { f1, fit })
}

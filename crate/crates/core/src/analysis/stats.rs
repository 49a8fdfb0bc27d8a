use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// CDF of Student's t with `df` degrees of freedom (regularized incomplete
/// beta under the hood).
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(Error::Stat(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Stat(e.to_string()))?;
    Ok(dist.cdf(t))
}

/// `P(|T| ≥ |t|)`.
pub fn two_sided_p(t: f64, df: f64) -> Result<f64> {
    let tail = 1.0 - student_t_cdf(t.abs(), df)?;
    Ok((2.0 * tail).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub n: usize,
    pub mean_difference: f64,
}

/// Paired t-test on `a - b`. When every difference is identical the
/// statistic is 0 with `p = 1` if they are all zero, and `±∞` with `p = 0`
/// otherwise.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Stat(format!("paired t-test on {} vs {} values", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Stat(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let df = nf - 1.0;
    let sd = var.sqrt();
    let (t, p) = if sd == 0.0 || sd <= 1e-15 * mean.abs() {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / (sd / nf.sqrt());
        (t, two_sided_p(t, df)?)
    };
    Ok(TTestResult {
        t,
        df,
        p,
        n,
        mean_difference: mean,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Pearson's r with the two-sided p from `t = r √((n−2)/(1−r²))`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::Stat(format!("pearson on {} vs {} values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Stat(format!("pearson needs at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stat("correlation undefined: no variance in an input".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p = if (1.0 - r.abs()) < 1e-15 {
        0.0
    } else {
        let t = r * ((nf - 2.0) / (1.0 - r * r)).sqrt();
        two_sided_p(t, nf - 2.0)?
    };
    Ok(CorrelationResult { r, p, n })
}

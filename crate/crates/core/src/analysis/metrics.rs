use crate::error::{Error, Result};

/// `2TP / (2TP + FP + FN)`. With nothing to find and nothing predicted
/// (`TP = FP = FN = 0`) the score is 1.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Binary F1 over the positive class.
pub fn binary_f1(truth: &[bool], pred: &[bool]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Contract(format!(
            "binary_f1: {} labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(f1_score(tp, fp, fn_))
}

/// `counts[truth][pred]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn from_labels(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Contract(format!(
                "confusion: {} labels vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut counts = vec![vec![0; classes]; classes];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= classes || p >= classes {
                return Err(Error::Schema(format!("label {} outside {classes} classes", t.max(p))));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// F1 of class `c`, or `None` when `c` occurs in neither truth nor
    /// prediction.
    pub fn class_f1(&self, c: usize) -> Option<f64> {
        let tp = self.counts[c][c];
        let fn_: usize = self.counts[c].iter().sum::<usize>() - tp;
        let fp: usize = self.counts.iter().map(|row| row[c]).sum::<usize>() - tp;
        (tp + fp + fn_ > 0).then(|| f1_score(tp, fp, fn_))
    }

    /// Unweighted mean of the per-class F1 over classes present in truth or
    /// prediction.
    pub fn macro_f1(&self) -> Result<f64> {
        let scores: Vec<f64> = (0..self.classes()).filter_map(|c| self.class_f1(c)).collect();
        if scores.is_empty() {
            return Err(Error::Stat("macro F1 of an empty label set".into()));
        }
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

pub fn macro_f1(truth: &[usize], pred: &[usize], classes: usize) -> Result<f64> {
    Confusion::from_labels(truth, pred, classes)?.macro_f1()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

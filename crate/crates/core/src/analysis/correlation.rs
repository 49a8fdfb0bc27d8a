use serde::Serialize;

use super::stats::{pearson, CorrelationResult};
use crate::error::Result;

/// One evaluation unit (a player in a test session).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationPoint {
    pub session: u64,
    pub player: usize,
    /// Macro-F1 of the ToM model on this unit's questions.
    pub tom_f1: f64,
    /// CPA F1 with ToM features minus without.
    pub delta_f1: f64,
}

impl CorrelationPoint {
    /// ToM F1 of zero while the CPA score still improved.
    pub fn flagged(&self) -> bool {
        self.tom_f1 == 0.0 && self.delta_f1 > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub result: CorrelationResult,
    pub flagged: usize,
}

/// Pearson correlation between per-unit ToM F1 and CPA gain. Fails with a
/// statistics error when either series has no variance.
pub fn correlation_experiment(points: &[CorrelationPoint]) -> Result<CorrelationReport> {
    let x: Vec<f64> = points.iter().map(|p| p.tom_f1).collect();
    let y: Vec<f64> = points.iter().map(|p| p.delta_f1).collect();
    let result = pearson(&x, &y)?;
    Ok(CorrelationReport {
        result,
        flagged: points.iter().filter(|p| p.flagged()).count(),
    })
}

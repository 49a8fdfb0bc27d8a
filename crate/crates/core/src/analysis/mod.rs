//! Metrics and the diagnostic analyses: F1, paired t-tests, Pearson
//! correlation and logistic-regression probing.

mod correlation;
mod metrics;
mod probe;
mod stats;

pub use correlation::{correlation_experiment, CorrelationPoint, CorrelationReport};
pub use metrics::{binary_f1, f1_score, macro_f1, mean_std, Confusion};
pub use probe::{
    fit_logistic, logistic_probe, noise_features, LogisticModel, ProbeConfig, ProbeFit, ProbeOutcome, ProbeSource,
};
pub use stats::{paired_ttest, pearson, student_t_cdf, two_sided_p, CorrelationResult, TTestResult};

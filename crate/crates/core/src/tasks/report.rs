//! CSV output of runs and tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use super::ablation::{assemble_rows, AblationMode, AblationReport, Column, MetricCell, RunSummary, TomStage};
use super::config::{parse_tom_kinds, subset_label};
use super::cpa::InstanceScore;
use super::tom::tom_instance_scores;
use crate::synth::ToMKind;
use super::tables::{overall_consistent, OVERALL_TOLERANCE};
use crate::error::{Error, Result};

/// One `(task, subset, seed, split, metric, value)` line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task: String,
    pub subset: String,
    pub seed: u64,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Writes serializable records with a header line.
pub fn write_records<W: Write, T: Serialize>(w: W, records: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads records written by [`write_records`].
pub fn read_records<R: std::io::Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|x| x.map_err(csv_err))
        .collect()
}

/// Per-run validation and test F1 of an ablation.
pub fn ablation_records(report: &AblationReport) -> Vec<MetricRecord> {
    let mut out = Vec::new();
    for r in &report.runs {
        for (split, value) in [("val", r.val_f1), ("test", r.test_f1)] {
            out.push(MetricRecord {
                task: r.column.name().into(),
                subset: subset_label(&r.subset),
                seed: r.seed,
                split: split.into(),
                metric: "f1".into(),
                value,
            });
        }
        out.push(MetricRecord {
            task: r.column.name().into(),
            subset: subset_label(&r.subset),
            seed: r.seed,
            split: "val".into(),
            metric: "best_epoch".into(),
            value: r.best_epoch as f64,
        });
    }
    out
}

/// Per-instance test F1 of an ablation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub task: String,
    pub subset: String,
    pub seed: u64,
    pub session: u64,
    pub player: usize,
    pub f1: f64,
}

pub fn instance_records(report: &AblationReport) -> Vec<InstanceRecord> {
    report
        .runs
        .iter()
        .flat_map(|r| {
            r.test_scores.iter().map(move |s| InstanceRecord {
                task: r.column.name().into(),
                subset: subset_label(&r.subset),
                seed: r.seed,
                session: s.session,
                player: s.player,
                f1: s.f1,
            })
        })
        .collect()
}

fn pp(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(String::new, |v| format!("{v:.digits$}"))
}

/// Table-shaped summary: one line per subset with mean, std (percentage
/// points), t and p of each metric, and a note on `p > 0.05`.
pub fn write_ablation_table<W: Write>(w: W, report: &AblationReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let metrics: Vec<&str> = std::iter::once("overall")
        .chain(Column::for_mode(report.mode).iter().map(|c| c.name()))
        .collect();
    let mut header = vec!["subset".to_string()];
    for m in &metrics {
        for f in ["mean", "std", "t", "p"] {
            header.push(format!("{m}_{f}"));
        }
    }
    header.push("note".into());
    out.write_record(&header).map_err(csv_err)?;
    for row in &report.rows {
        let mut line = vec![row.label.clone()];
        let cells: Vec<MetricCell> = row.cells().into_iter().map(|(_, c)| c).collect();
        for c in cells {
            line.push(pp(c.mean));
            line.push(pp(c.std));
            line.push(opt(c.ttest.map(|t| t.t), 4));
            line.push(opt(c.ttest.map(|t| t.p), 6));
        }
        line.push(row.note());
        out.write_record(&line).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Overall = mean(OMK, PMK) within the published tolerance, per row, on
/// the percentage-point means of the report.
pub fn ablation_overall_checks(report: &AblationReport) -> Vec<(String, bool)> {
    report
        .rows
        .iter()
        .map(|r| {
            (
                r.label.clone(),
                overall_consistent(100.0 * r.omk.mean, 100.0 * r.pmk.mean, 100.0 * r.overall.mean, OVERALL_TOLERANCE),
            )
        })
        .collect()
}

/// Per-instance test macro-F1 of a ToM model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomInstanceRecord {
    pub kind: String,
    pub seed: u64,
    pub session: u64,
    pub player: usize,
    pub f1: f64,
}

pub fn tom_instance_records(stage: &TomStage) -> Result<Vec<TomInstanceRecord>> {
    let mut out = Vec::new();
    for run in &stage.runs {
        for s in tom_instance_scores(run.kind, &run.test_predictions)? {
            out.push(TomInstanceRecord {
                kind: run.kind.name().into(),
                seed: run.seed,
                session: s.session,
                player: s.player,
                f1: s.f1,
            });
        }
    }
    Ok(out)
}

/// Per-instance ToM F1 of `seed`'s models averaged over `kinds`, from
/// records written by [`tom_instance_records`].
pub fn tom_f1_from_records(records: &[TomInstanceRecord], seed: u64, kinds: &[ToMKind]) -> Result<BTreeMap<(u64, usize), f64>> {
    let mut sums: BTreeMap<(u64, usize), (f64, usize)> = BTreeMap::new();
    for &kind in kinds {
        let mut found = false;
        for r in records.iter().filter(|r| r.seed == seed && r.kind == kind.name()) {
            found = true;
            let e = sums.entry((r.session, r.player)).or_default();
            e.0 += r.f1;
            e.1 += 1;
        }
        if !found {
            return Err(Error::Data(format!("no {} ToM records for seed {seed}", kind.name())));
        }
    }
    Ok(sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}

/// Parses a label written by [`subset_label`].
pub fn parse_subset_label(label: &str) -> Result<Vec<ToMKind>> {
    if label == "none" {
        Ok(Vec::new())
    } else {
        parse_tom_kinds(label)
    }
}

fn column_by_name(name: &str) -> Result<Column> {
    [Column::Omk, Column::OmkNaive, Column::Pmk]
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| Error::Data(format!("unknown ablation column {name:?}")))
}

/// Rebuilds an ablation report (without models) from its run and instance
/// records. The mode is learned when a naive-sampling column is present.
pub fn report_from_records(records: &[MetricRecord], instances: &[InstanceRecord]) -> Result<AblationReport> {
    let mut runs: BTreeMap<(Column, String, u64), RunSummary> = BTreeMap::new();
    let mut seeds: Vec<u64> = Vec::new();
    for r in records {
        let column = column_by_name(&r.task)?;
        if !seeds.contains(&r.seed) {
            seeds.push(r.seed);
        }
        let run = runs.entry((column, r.subset.clone(), r.seed)).or_insert(RunSummary {
            column,
            subset: parse_subset_label(&r.subset)?,
            seed: r.seed,
            best_epoch: 0,
            val_f1: f64::NAN,
            test_f1: f64::NAN,
            test_scores: Vec::new(),
            model: None,
        });
        match (r.split.as_str(), r.metric.as_str()) {
            ("val", "f1") => run.val_f1 = r.value,
            ("test", "f1") => run.test_f1 = r.value,
            ("val", "best_epoch") => run.best_epoch = r.value as usize,
            _ => {}
        }
    }
    for i in instances {
        let key = (column_by_name(&i.task)?, i.subset.clone(), i.seed);
        let run = runs
            .get_mut(&key)
            .ok_or_else(|| Error::Data(format!("instance record without a run: {} {} seed {}", i.task, i.subset, i.seed)))?;
        run.test_scores.push(InstanceScore {
            session: i.session,
            player: i.player,
            f1: i.f1,
        });
    }
    let runs: Vec<RunSummary> = runs.into_values().collect();
    let mode = if runs.iter().any(|r| r.column == Column::OmkNaive) {
        AblationMode::Learned
    } else {
        AblationMode::GroundTruth
    };
    Ok(AblationReport {
        mode,
        rows: assemble_rows(mode, &seeds, &runs)?,
        seeds,
        runs,
    })
}

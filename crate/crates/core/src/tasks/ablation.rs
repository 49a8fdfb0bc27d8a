use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{all_subsets, subset_label, CpaTask, Sampling, TrainConfig};
use super::cpa::{dataset_num_tools, train_cpa_on, CpaSetup, InstanceScore};
use super::fit::FitOptions;
use super::inputs::FeatureBanks;
use super::tom::{build_feature_bank, tom_instance_scores, train_tom_on, TomRun, TomSetup};
use crate::analysis::{mean_std, paired_ttest, TTestResult};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::synth::{DatasetSplit, GameSession, ToMKind};

/// Runs `f` over `items` on a pool of `threads` workers; results keep the
/// order of `items`, so the output does not depend on scheduling.
pub fn run_parallel<T, R, F>(threads: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

pub(crate) fn split_refs(data: &DatasetSplit) -> [Vec<&GameSession>; 3] {
    [
        data.train.iter().collect(),
        data.val.iter().collect(),
        data.test.iter().collect(),
    ]
}

/// Trained ToM models of every kind and seed, with their feature banks.
#[derive(Clone, Debug, Default)]
pub struct TomStage {
    /// Sorted by (seed order, kind).
    pub runs: Vec<TomRun>,
    /// Per seed: features of every session of the dataset.
    pub banks: BTreeMap<u64, FeatureBanks>,
}

impl TomStage {
    pub fn run(&self, seed: u64, kind: ToMKind) -> Option<&TomRun> {
        self.runs.iter().find(|r| r.seed == seed && r.kind == kind)
    }
}

/// Trains one ToM model per (seed, kind) and extracts features for every
/// session.
pub fn train_tom_stage(data: &DatasetSplit, cfg: &TrainConfig, kinds: &[ToMKind], threads: usize) -> Result<TomStage> {
    let num_tools = dataset_num_tools(data.all());
    let [train, val, test] = split_refs(data);
    let jobs: Vec<(u64, ToMKind)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| kinds.iter().map(move |&k| (s, k)))
        .collect();
    let runs = run_parallel(threads, &jobs, |&(seed, kind)| {
        log::info!("training {} ToM model, seed {seed}", kind.name());
        let setup = TomSetup::new(kind, cfg, num_tools)?;
        train_tom_on(&setup, cfg, seed, &train, &val, &test, FitOptions::default())
    })?;
    let mut banks: BTreeMap<u64, FeatureBanks> = BTreeMap::new();
    for run in &runs {
        banks
            .entry(run.seed)
            .or_default()
            .insert(run.kind, build_feature_bank(run, data.all())?);
    }
    Ok(TomStage { runs, banks })
}

/// Source of the ToM slot in an ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Features of trained ToM models (Table 2 layout, with naive OMK).
    Learned,
    /// Ground-truth question-answer one-hots (Table 4 layout).
    GroundTruth,
}

/// One CPA training target of the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Omk,
    OmkNaive,
    Pmk,
}

impl Column {
    pub fn name(self) -> &'static str {
        match self {
            Column::Omk => "omk",
            Column::OmkNaive => "omk_ns",
            Column::Pmk => "pmk",
        }
    }

    pub fn task(self) -> CpaTask {
        match self {
            Column::Omk | Column::OmkNaive => CpaTask::Omk,
            Column::Pmk => CpaTask::Pmk,
        }
    }

    pub fn sampling(self) -> Sampling {
        match self {
            Column::OmkNaive => Sampling::Naive,
            _ => Sampling::Candidate,
        }
    }

    pub fn for_mode(mode: AblationMode) -> &'static [Column] {
        match mode {
            AblationMode::Learned => &[Column::Omk, Column::OmkNaive, Column::Pmk],
            AblationMode::GroundTruth => &[Column::Omk, Column::Pmk],
        }
    }
}

/// Outcome of one (subset, seed, column) CPA run; the model is kept only
/// for the no-feature subset.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub column: Column,
    pub subset: Vec<ToMKind>,
    pub seed: u64,
    pub best_epoch: usize,
    pub val_f1: f64,
    pub test_f1: f64,
    pub test_scores: Vec<InstanceScore>,
    pub model: Option<Model>,
}

/// Mean ± population std over seeds, with the paired t-test against the
/// no-feature row (absent on that row).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricCell {
    pub mean: f64,
    pub std: f64,
    pub ttest: Option<TTestResult>,
}

impl MetricCell {
    /// `p > 0.05` (no significant difference) or an untestable comparison.
    pub fn not_significant(&self) -> bool {
        self.ttest.is_some_and(|t| !(t.p <= 0.05))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub subset: Vec<ToMKind>,
    pub label: String,
    pub overall: MetricCell,
    pub omk: MetricCell,
    pub omk_naive: Option<MetricCell>,
    pub pmk: MetricCell,
}

impl AblationRow {
    pub fn cells(&self) -> Vec<(&'static str, MetricCell)> {
        let mut v = vec![("overall", self.overall), ("omk", self.omk)];
        if let Some(ns) = self.omk_naive {
            v.push(("omk_ns", ns));
        }
        v.push(("pmk", self.pmk));
        v
    }

    /// Report note listing the metrics whose comparison has `p > 0.05`.
    pub fn note(&self) -> String {
        let weak: Vec<&str> = self
            .cells()
            .into_iter()
            .filter(|(_, c)| c.not_significant())
            .map(|(n, _)| n)
            .collect();
        if weak.is_empty() {
            String::new()
        } else {
            format!("p > 0.05 vs none: {}", weak.join(" "))
        }
    }
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<RunSummary>,
}

impl AblationReport {
    pub fn run(&self, column: Column, subset: &[ToMKind], seed: u64) -> Option<&RunSummary> {
        self.runs
            .iter()
            .find(|r| r.column == column && r.subset == subset && r.seed == seed)
    }

    /// Non-empty subset with the best mean Overall F1 (first on ties).
    pub fn best_subset(&self) -> Option<&AblationRow> {
        self.rows
            .iter()
            .filter(|r| !r.subset.is_empty())
            .fold(None, |best: Option<&AblationRow>, r| match best {
                Some(b) if b.overall.mean >= r.overall.mean => Some(b),
                _ => Some(r),
            })
    }
}

type InstanceKey = (u64, u64, usize);

fn keyed(runs: &[&RunSummary]) -> BTreeMap<InstanceKey, f64> {
    runs.iter()
        .flat_map(|r| r.test_scores.iter().map(move |s| ((r.seed, s.session, s.player), s.f1)))
        .collect()
}

fn overall_keyed(omk: &BTreeMap<InstanceKey, f64>, pmk: &BTreeMap<InstanceKey, f64>) -> BTreeMap<InstanceKey, f64> {
    omk.iter()
        .filter_map(|(k, a)| pmk.get(k).map(|b| (*k, 0.5 * (a + b))))
        .collect()
}

fn compare(a: &BTreeMap<InstanceKey, f64>, base: &BTreeMap<InstanceKey, f64>) -> Option<TTestResult> {
    let (x, y): (Vec<f64>, Vec<f64>) = a.iter().filter_map(|(k, v)| base.get(k).map(|b| (*v, *b))).unzip();
    match paired_ttest(&x, &y) {
        Ok(t) => Some(t),
        Err(e) => {
            log::warn!("t-test skipped: {e}");
            None
        }
    }
}

fn cell(per_seed: &[f64], ttest: Option<TTestResult>) -> MetricCell {
    let (mean, std) = mean_std(per_seed);
    MetricCell { mean, std, ttest }
}

/// Assembles the per-subset rows from finished runs.
pub fn assemble_rows(mode: AblationMode, seeds: &[u64], runs: &[RunSummary]) -> Result<Vec<AblationRow>> {
    let pick = |column: Column, subset: &[ToMKind]| -> Result<Vec<&RunSummary>> {
        seeds
            .iter()
            .map(|&seed| {
                runs.iter()
                    .find(|r| r.column == column && r.subset == subset && r.seed == seed)
                    .ok_or_else(|| Error::Data(format!("missing run {} {} seed {seed}", column.name(), subset_label(subset))))
            })
            .collect()
    };
    let f1s = |rs: &[&RunSummary]| rs.iter().map(|r| r.test_f1).collect::<Vec<f64>>();
    let base_omk = keyed(&pick(Column::Omk, &[])?);
    let base_pmk = keyed(&pick(Column::Pmk, &[])?);
    let base_overall = overall_keyed(&base_omk, &base_pmk);
    let base_ns = match mode {
        AblationMode::Learned => Some(keyed(&pick(Column::OmkNaive, &[])?)),
        AblationMode::GroundTruth => None,
    };
    all_subsets()
        .into_iter()
        .map(|subset| {
            let is_base = subset.is_empty();
            let test = |a: &BTreeMap<InstanceKey, f64>, b: &BTreeMap<InstanceKey, f64>| {
                if is_base {
                    None
                } else {
                    compare(a, b)
                }
            };
            let omk_runs = pick(Column::Omk, &subset)?;
            let pmk_runs = pick(Column::Pmk, &subset)?;
            let (omk_k, pmk_k) = (keyed(&omk_runs), keyed(&pmk_runs));
            let overall_seed: Vec<f64> = omk_runs
                .iter()
                .zip(&pmk_runs)
                .map(|(o, p)| 0.5 * (o.test_f1 + p.test_f1))
                .collect();
            let omk_naive = match &base_ns {
                Some(base) => {
                    let ns_runs = pick(Column::OmkNaive, &subset)?;
                    Some(cell(&f1s(&ns_runs), test(&keyed(&ns_runs), base)))
                }
                None => None,
            };
            Ok(AblationRow {
                label: subset_label(&subset),
                overall: cell(&overall_seed, test(&overall_keyed(&omk_k, &pmk_k), &base_overall)),
                omk: cell(&f1s(&omk_runs), test(&omk_k, &base_omk)),
                omk_naive,
                pmk: cell(&f1s(&pmk_runs), test(&pmk_k, &base_pmk)),
                subset,
            })
        })
        .collect()
}

/// Trains every (subset, seed, column) CPA model. Learned mode needs the
/// ToM stage for its feature banks.
pub fn ablation_matrix(
    data: &DatasetSplit,
    cfg: &TrainConfig,
    mode: AblationMode,
    tom: Option<&TomStage>,
    threads: usize,
) -> Result<AblationReport> {
    let mut base = cfg.clone();
    base.tom_features.clear();
    base.ground_truth_tom.clear();
    base.validate()?;
    if mode == AblationMode::Learned && tom.is_none() {
        return Err(Error::Data("learned-feature ablation needs trained ToM models".into()));
    }
    let num_tools = dataset_num_tools(data.all());
    let [train, val, test] = split_refs(data);
    let mut jobs = Vec::new();
    for subset in all_subsets() {
        for &seed in &cfg.seeds {
            for &column in Column::for_mode(mode) {
                jobs.push((subset.clone(), seed, column));
            }
        }
    }
    let runs = run_parallel(threads, &jobs, |(subset, seed, column)| {
        let mut c = base.clone();
        c.sampling = column.sampling();
        let banks = match mode {
            AblationMode::Learned => {
                c.tom_features = subset.clone();
                let banks = tom.and_then(|t| t.banks.get(seed));
                if !subset.is_empty() && banks.is_none() {
                    return Err(Error::Data(format!("no ToM features for seed {seed}")));
                }
                banks
            }
            AblationMode::GroundTruth => {
                c.ground_truth_tom = subset.clone();
                None
            }
        };
        log::info!("training {} with {}, seed {seed}", column.name(), subset_label(subset));
        let setup = CpaSetup::new(column.task(), &c, num_tools, banks)?;
        let run = train_cpa_on(&setup, &c, *seed, &train, &val, &test, FitOptions::default())?;
        Ok(RunSummary {
            column: *column,
            subset: subset.clone(),
            seed: *seed,
            best_epoch: run.fit.best_epoch,
            val_f1: run.val_f1,
            test_f1: run.test_f1,
            test_scores: run.test_scores,
            model: subset.is_empty().then_some(run.model),
        })
    })?;
    Ok(AblationReport {
        mode,
        seeds: cfg.seeds.clone(),
        rows: assemble_rows(mode, &cfg.seeds, &runs)?,
        runs,
    })
}

/// Per-instance ToM F1 of a seed's models, averaged over `kinds`.
pub fn tom_instance_f1(stage: &TomStage, seed: u64, kinds: &[ToMKind]) -> Result<BTreeMap<(u64, usize), f64>> {
    let mut sums: BTreeMap<(u64, usize), (f64, usize)> = BTreeMap::new();
    for &kind in kinds {
        let run = stage
            .run(seed, kind)
            .ok_or_else(|| Error::Data(format!("no {} ToM model for seed {seed}", kind.name())))?;
        for s in tom_instance_scores(kind, &run.test_predictions)? {
            let e = sums.entry((s.session, s.player)).or_default();
            e.0 += s.f1;
            e.1 += 1;
        }
    }
    Ok(sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect())
}

//! The probing and correlation analyses on trained models.

use std::collections::BTreeMap;

use serde::Serialize;

use super::ablation::{tom_instance_f1, AblationReport, Column, TomStage};
use super::config::subset_label;
use super::cpa::CpaSetup;
use super::inputs::player_questions;
use crate::analysis::{logistic_probe, mean_std, noise_features, CorrelationPoint, ProbeConfig, ProbeSource};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::synth::{mix_seed, DatasetSplit, GameSession, ToMKind};
use crate::tensor::Tensor;

/// Width of the noise probe input (the published feature width).
pub const NOISE_WIDTH: usize = 1024;

/// A trained no-feature CPA model used as a probe source.
pub struct CpaProbeModel<'a> {
    pub setup: CpaSetup<'a>,
    pub model: &'a Model,
}

/// Macro-F1 of one (source, kind) probe per seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeCell {
    pub source: ProbeSource,
    pub kind: ToMKind,
    pub seeds: Vec<u64>,
    pub f1: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Per-seed models for the probe: ToM stage plus no-feature OMK/PMK models.
pub struct ProbeModels<'a> {
    pub seed: u64,
    pub omk: CpaProbeModel<'a>,
    pub pmk: CpaProbeModel<'a>,
}

struct Question {
    session: u64,
    player: usize,
    time: usize,
    class: usize,
}

fn questions(sessions: &[GameSession], kind: ToMKind) -> Vec<Question> {
    sessions
        .iter()
        .flat_map(|s| {
            (0..2).flat_map(move |player| {
                player_questions(s, player, kind).into_iter().map(move |q| Question {
                    session: s.id,
                    player,
                    time: q.time,
                    class: q.answer.class_index(),
                })
            })
        })
        .collect()
}

/// Final-timestep contexts of a CPA model for every player of `sessions`.
fn contexts(m: &CpaProbeModel, sessions: &[GameSession]) -> Result<BTreeMap<(u64, usize), Vec<f64>>> {
    let mut out = BTreeMap::new();
    for s in sessions {
        for player in 0..2 {
            out.insert((s.id, player), m.setup.context(m.model, s, player)?);
        }
    }
    Ok(out)
}

fn rows(qs: &[Question], f: impl Fn(&Question) -> Result<Vec<f64>>) -> Result<Tensor> {
    let data: Vec<Vec<f64>> = qs.iter().map(f).collect::<Result<_>>()?;
    let width = data.first().map_or(0, Vec::len);
    Tensor::new(&[qs.len(), width], data.concat())
}

/// Fits one logistic probe per (seed, source, kind) on training-split
/// questions and scores macro-F1 on test-split questions. ToM features
/// are taken at the question's timestep; OMK/PMK features are the
/// final-timestep context of the player's session.
pub fn probe_report(
    data: &DatasetSplit,
    stage: &TomStage,
    models: &[ProbeModels],
    kinds: &[ToMKind],
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeCell>> {
    let mut cells: BTreeMap<(ProbeSource, ToMKind), (Vec<u64>, Vec<f64>)> = BTreeMap::new();
    for m in models {
        let bank_set = stage
            .banks
            .get(&m.seed)
            .ok_or_else(|| Error::Data(format!("no ToM features for seed {}", m.seed)))?;
        let mut hidden = BTreeMap::new();
        for (source, cpa) in [(ProbeSource::OmkHidden, &m.omk), (ProbeSource::PmkHidden, &m.pmk)] {
            let mut all = contexts(cpa, &data.train)?;
            all.extend(contexts(cpa, &data.test)?);
            hidden.insert(source, all);
        }
        for &kind in kinds {
            let (train_q, test_q) = (questions(&data.train, kind), questions(&data.test, kind));
            let bank = bank_set
                .get(&kind)
                .ok_or_else(|| Error::Data(format!("no {} features", kind.name())))?;
            let train_y: Vec<usize> = train_q.iter().map(|q| q.class).collect();
            let test_y: Vec<usize> = test_q.iter().map(|q| q.class).collect();
            for source in ProbeSource::ALL {
                let feature = |q: &Question| -> Result<Vec<f64>> {
                    match source {
                        ProbeSource::TomFeatures => bank
                            .get(q.session, q.player)?
                            .iter()
                            .find(|(t, _)| *t == q.time)
                            .map(|(_, f)| f.clone())
                            .ok_or_else(|| Error::Data(format!("no feature at t={} in session {}", q.time, q.session))),
                        _ => hidden[&source]
                            .get(&(q.session, q.player))
                            .cloned()
                            .ok_or_else(|| Error::Data(format!("no context for session {}", q.session))),
                    }
                };
                let (train_x, test_x) = if source == ProbeSource::RandomNoise {
                    let noise_seed = mix_seed(m.seed, 0x6e6f_6973 + kind.index() as u64);
                    let all = noise_features(train_q.len() + test_q.len(), NOISE_WIDTH, noise_seed);
                    let (a, b) = all.data().split_at(train_q.len() * NOISE_WIDTH);
                    (
                        Tensor::new(&[train_q.len(), NOISE_WIDTH], a.to_vec())?,
                        Tensor::new(&[test_q.len(), NOISE_WIDTH], b.to_vec())?,
                    )
                } else {
                    (rows(&train_q, feature)?, rows(&test_q, feature)?)
                };
                let outcome = logistic_probe(&train_x, &train_y, &test_x, &test_y, kind.num_classes(), cfg)?;
                log::info!(
                    "probe {} on {} (seed {}): F1 {:.4}, {} iterations",
                    source.name(),
                    kind.name(),
                    m.seed,
                    outcome.f1,
                    outcome.fit.iterations
                );
                let e = cells.entry((source, kind)).or_default();
                e.0.push(m.seed);
                e.1.push(outcome.f1);
            }
        }
    }
    Ok(cells
        .into_iter()
        .map(|((source, kind), (seeds, f1))| {
            let (mean, std) = mean_std(&f1);
            ProbeCell {
                source,
                kind,
                seeds,
                f1,
                mean,
                std,
            }
        })
        .collect())
}

/// Per test instance: ToM F1 of the best subset's source models (mean
/// over its kinds, then over seeds) against the OMK gain of that subset
/// over the no-feature row (with minus without, mean over seeds).
pub fn correlation_points(report: &AblationReport, stage: &TomStage) -> Result<(String, Vec<CorrelationPoint>)> {
    correlation_points_with(report, |seed, kinds| tom_instance_f1(stage, seed, kinds))
}

/// [`correlation_points`] with per-instance ToM F1 supplied by `tom(seed,
/// kinds)`, e.g. read back from a report directory.
pub fn correlation_points_with<F>(report: &AblationReport, tom: F) -> Result<(String, Vec<CorrelationPoint>)>
where
    F: Fn(u64, &[ToMKind]) -> Result<BTreeMap<(u64, usize), f64>>,
{
    let best = report
        .best_subset()
        .ok_or_else(|| Error::Data("ablation has no feature subsets".into()))?;
    let mut acc: BTreeMap<(u64, usize), (f64, f64, usize)> = BTreeMap::new();
    for &seed in &report.seeds {
        let with = report
            .run(Column::Omk, &best.subset, seed)
            .ok_or_else(|| Error::Data(format!("missing OMK run for seed {seed}")))?;
        let without = report
            .run(Column::Omk, &[], seed)
            .ok_or_else(|| Error::Data(format!("missing baseline OMK run for seed {seed}")))?;
        let base: BTreeMap<(u64, usize), f64> = without.test_scores.iter().map(|s| ((s.session, s.player), s.f1)).collect();
        let tom = tom(seed, &best.subset)?;
        for s in &with.test_scores {
            let key = (s.session, s.player);
            if let (Some(b), Some(t)) = (base.get(&key), tom.get(&key)) {
                let e = acc.entry(key).or_default();
                e.0 += t;
                e.1 += s.f1 - b;
                e.2 += 1;
            }
        }
    }
    let points = acc
        .into_iter()
        .map(|((session, player), (t, d, n))| CorrelationPoint {
            session,
            player,
            tom_f1: t / n as f64,
            delta_f1: d / n as f64,
        })
        .collect();
    Ok((subset_label(&best.subset), points))
}

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{CpaTask, Sampling, TrainConfig};
use super::fit::{fit, model_seed, FitLog, FitOptions};
use super::inputs::{build_input, FeatureBanks, InputSpec, TomSlot};
use crate::analysis::f1_score;
use crate::error::{Error, Result};
use crate::nn::{is_positive, Model, Readout, SequenceInput};
use crate::plangraph::{candidate_sampling, missing_edges, naive_sampling, MaterialId, PartialPlan, PlanGraph};
use crate::synth::{mix_seed, DatasetSplit, GameSession};
use crate::tensor::{Mode, Tape, Var};

pub type Pair = (MaterialId, MaterialId);

/// Training targets of one player: the scoring pool and the positive pairs.
/// Positives are scored even when the pool misses them (naive sampling).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CpaTargets {
    pub positives: BTreeSet<Pair>,
    pub pool: Vec<Pair>,
}

impl CpaTargets {
    /// `positives ∪ pool`, sorted, with labels.
    pub fn training_pairs(&self) -> (Vec<Pair>, Vec<bool>) {
        let all: BTreeSet<Pair> = self.positives.iter().copied().chain(self.pool.iter().copied()).collect();
        let labels = all.iter().map(|p| self.positives.contains(p)).collect();
        (all.into_iter().collect(), labels)
    }
}

fn pair_set(edges: impl IntoIterator<Item = crate::plangraph::PlanEdge>) -> BTreeSet<Pair> {
    edges.into_iter().map(|e| e.pair()).collect()
}

/// OMK: positives are the player's missing edges; the pool is the candidate
/// set (or a naive sample of the same size). PMK: the pool is the player's
/// known edges; positives are those the partner lacks.
pub fn cpa_targets<R: Rng + ?Sized>(
    task: CpaTask,
    full: &PlanGraph,
    partials: &[PartialPlan; 2],
    player: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Result<CpaTargets> {
    let own = &partials[player];
    match task {
        CpaTask::Omk => {
            let positives = pair_set(missing_edges(full, own)?);
            let candidates = candidate_sampling(own, &own.starting_set());
            let pool = match sampling {
                Sampling::Candidate => candidates.pairs().to_vec(),
                Sampling::Naive if candidates.is_empty() => Vec::new(),
                Sampling::Naive => naive_sampling(own, candidates.len(), rng)?.pairs().to_vec(),
            };
            Ok(CpaTargets { positives, pool })
        }
        CpaTask::Pmk => {
            let partner = &partials[1 - player];
            let pool: Vec<Pair> = own.known_edges().iter().map(|e| e.pair()).collect();
            let partner_known = pair_set(partner.known_edges().iter().copied());
            let positives = pool.iter().copied().filter(|p| !partner_known.contains(p)).collect();
            Ok(CpaTargets { positives, pool })
        }
    }
}

const EVAL_STREAM: u64 = 0x6576_616c;

/// Pairs scored at evaluation. OMK: the candidate set, or in naive mode a
/// uniform sample of non-existing pairs of the same size, drawn from a
/// stream fixed by `(session, player)` so every model sees the same pool.
/// Missing edges outside a naive sample cannot be recovered. PMK: the
/// player's known edges.
pub fn eval_pool(task: CpaTask, own: &PartialPlan, sampling: Sampling, session: u64, player: usize) -> Result<Vec<Pair>> {
    Ok(match (task, sampling) {
        (CpaTask::Omk, Sampling::Candidate) => candidate_sampling(own, &own.starting_set()).pairs().to_vec(),
        (CpaTask::Omk, Sampling::Naive) => {
            let size = candidate_sampling(own, &own.starting_set()).len();
            if size == 0 {
                Vec::new()
            } else {
                let key = mix_seed(session, (player as u64) << 32 | EVAL_STREAM);
                naive_sampling(own, size, &mut ChaCha8Rng::seed_from_u64(key))?.pairs().to_vec()
            }
        }
        (CpaTask::Pmk, _) => own.known_edges().iter().map(|e| e.pair()).collect(),
    })
}

/// Scored candidate pairs of one player at `t = T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CpaPrediction {
    pub task: CpaTask,
    pub session: u64,
    pub player: usize,
    pub pairs: Vec<Pair>,
    pub logits: Vec<f64>,
    /// `σ(logit) > 0.5`.
    pub decisions: Vec<bool>,
    pub truth: Vec<bool>,
    /// Positives outside the scored pool (false negatives by construction).
    pub missed: usize,
}

impl CpaPrediction {
    /// Binary F1 against every positive, scored or not.
    pub fn f1(&self) -> f64 {
        let count = |t: bool, d: bool| self.truth.iter().zip(&self.decisions).filter(|&(&a, &b)| a == t && b == d).count();
        f1_score(count(true, true), count(false, true), count(true, false) + self.missed)
    }
}

/// Per-unit evaluation score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InstanceScore {
    pub session: u64,
    pub player: usize,
    pub f1: f64,
}

/// Mean F1 over units (NaN when empty).
pub fn mean_f1(scores: &[InstanceScore]) -> f64 {
    scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64
}

/// What a CPA model needs besides its parameters.
#[derive(Clone, Debug)]
pub struct CpaSetup<'a> {
    pub task: CpaTask,
    pub sampling: Sampling,
    pub spec: InputSpec,
    pub num_tools: usize,
    pub banks: Option<&'a FeatureBanks>,
}

impl<'a> CpaSetup<'a> {
    /// Setup for `cfg`: learned features go with `banks`, ground-truth
    /// labels need none.
    pub fn new(task: CpaTask, cfg: &TrainConfig, num_tools: usize, banks: Option<&'a FeatureBanks>) -> Result<Self> {
        cfg.validate()?;
        let tom = if !cfg.ground_truth_tom.is_empty() {
            TomSlot::GroundTruth(cfg.ground_truth_tom.clone())
        } else if !cfg.tom_features.is_empty() {
            if banks.is_none() {
                return Err(Error::Data("learned ToM features requested without a feature bank".into()));
            }
            TomSlot::Learned(cfg.tom_features.clone())
        } else {
            TomSlot::None
        };
        Ok(Self {
            task,
            sampling: cfg.sampling,
            spec: InputSpec {
                modalities: cfg.modalities,
                question: None,
                tom,
            },
            num_tools,
            banks,
        })
    }

    fn feature_width(&self) -> usize {
        match (&self.spec.tom, self.banks) {
            (TomSlot::Learned(k), Some(b)) => k.first().and_then(|k| b.get(k)).map_or(0, |b| b.width),
            _ => 0,
        }
    }

    pub fn model(&self, cfg: &TrainConfig, seed: u64, sample: &GameSession) -> Result<Model> {
        let streams = self
            .spec
            .slots(sample.dialogue_dim, sample.visual_dim, self.feature_width());
        Model::new(cfg.arch.model_config(self.num_tools, streams, Readout::EdgeScore), model_seed(seed))
    }

    fn input(&self, s: &GameSession, player: usize) -> Result<SequenceInput> {
        build_input(s, player, &self.spec, self.num_tools, self.banks)
    }

    /// Training loss of one player, or `None` when there is nothing to score.
    pub fn player_loss(
        &self,
        model: &Model,
        tape: &mut Tape,
        s: &GameSession,
        player: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Var>> {
        let targets = cpa_targets(self.task, &s.plan, &s.partials, player, self.sampling, rng)?;
        let (pairs, labels) = targets.training_pairs();
        if pairs.is_empty() {
            log::warn!("session {} player {player}: empty {} pool, skipped", s.id, self.task.name());
            return Ok(None);
        }
        let input = self.input(s, player)?;
        let idx = index_pairs(&input, &pairs)?;
        let (_, logits) = model.score_edges(tape, &input, &idx, rng)?;
        Ok(Some(tape.bce_with_logits(logits, &labels)?))
    }

    /// Both players' losses summed.
    pub fn session_loss(&self, model: &Model, tape: &mut Tape, s: &GameSession, rng: &mut ChaCha8Rng) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for player in 0..2 {
            if let Some(l) = self.player_loss(model, tape, s, player, rng)? {
                total = Some(match total {
                    Some(t) => tape.add(t, l)?,
                    None => l,
                });
            }
        }
        Ok(total)
    }

    /// Eval-mode prediction for one player; `None` when the pool is empty.
    pub fn predict(&self, model: &Model, s: &GameSession, player: usize) -> Result<Option<CpaPrediction>> {
        let pool = eval_pool(self.task, &s.partials[player], self.sampling, s.id, player)?;
        if pool.is_empty() {
            log::warn!("session {} player {player}: empty {} evaluation pool, skipped", s.id, self.task.name());
            return Ok(None);
        }
        let positives = cpa_targets(self.task, &s.plan, &s.partials, player, Sampling::Candidate, &mut NoRng)?.positives;
        let input = self.input(s, player)?;
        let idx = index_pairs(&input, &pool)?;
        let mut tape = Tape::new(&model.store, Mode::Eval);
        let (_, logits) = model.score_edges(&mut tape, &input, &idx, &mut NoRng)?;
        let logits = tape.value(logits).data().to_vec();
        Ok(Some(CpaPrediction {
            task: self.task,
            session: s.id,
            player,
            decisions: logits.iter().map(|&l| is_positive(l)).collect(),
            truth: pool.iter().map(|p| positives.contains(p)).collect(),
            missed: positives.iter().filter(|p| !pool.contains(p)).count(),
            pairs: pool,
            logits,
        }))
    }

    /// Transformer output at the final timestep (eval mode).
    pub fn context(&self, model: &Model, s: &GameSession, player: usize) -> Result<Vec<f64>> {
        let input = self.input(s, player)?;
        let mut tape = Tape::new(&model.store, Mode::Eval);
        let out = model.forward(&mut tape, &input, &[input.len - 1], &mut NoRng)?;
        Ok(tape.value(out.context).data().to_vec())
    }

    /// Per-player F1 over `sessions`.
    pub fn evaluate(&self, model: &Model, sessions: &[&GameSession]) -> Result<Vec<InstanceScore>> {
        let mut out = Vec::new();
        for s in sessions {
            for player in 0..2 {
                if let Some(p) = self.predict(model, s, player)? {
                    out.push(InstanceScore {
                        session: s.id,
                        player,
                        f1: p.f1(),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Positional RNG stand-in for eval-mode passes (dropout is off, so it is
/// never sampled).
pub(crate) struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval mode draws no random numbers")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval mode draws no random numbers")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval mode draws no random numbers")
    }
}

fn index_pairs(input: &SequenceInput, pairs: &[Pair]) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|&(u, v)| match (input.plan.index_of(u), input.plan.index_of(v)) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(Error::Data(format!("pair ({u}, {v}) outside the plan"))),
        })
        .collect()
}

/// Tool vocabulary size implied by a dataset (largest tool id + 1).
pub fn dataset_num_tools<'a>(sessions: impl IntoIterator<Item = &'a GameSession>) -> usize {
    sessions
        .into_iter()
        .flat_map(|s| s.plan.edges().iter().map(|e| e.tool.0 + 1).chain(s.tools.iter().flatten().map(|t| t.0 + 1)))
        .max()
        .unwrap_or(1)
}

/// A trained CPA model with its scores.
#[derive(Clone, Debug)]
pub struct CpaRun {
    pub task: CpaTask,
    pub sampling: Sampling,
    pub seed: u64,
    pub model: Model,
    pub fit: FitLog,
    pub val_f1: f64,
    pub test_f1: f64,
    pub test_scores: Vec<InstanceScore>,
}

/// Trains on `train`, selects on `val`, reports on `test`.
#[allow(clippy::too_many_arguments)]
pub fn train_cpa_on(
    setup: &CpaSetup,
    cfg: &TrainConfig,
    seed: u64,
    train: &[&GameSession],
    val: &[&GameSession],
    test: &[&GameSession],
    opts: FitOptions,
) -> Result<CpaRun> {
    let first = train
        .first()
        .ok_or_else(|| Error::Data("no training sessions".into()))?;
    let mut model = setup.model(cfg, seed, first)?;
    let fit = fit(
        &mut model,
        cfg,
        seed,
        train,
        opts,
        |m, tape, s, rng| setup.session_loss(m, tape, s, rng),
        |m| Ok(mean_f1(&setup.evaluate(m, val)?)),
    )?;
    let val_f1 = mean_f1(&setup.evaluate(&model, val)?);
    let test_scores = setup.evaluate(&model, test)?;
    Ok(CpaRun {
        task: setup.task,
        sampling: setup.sampling,
        seed,
        val_f1,
        test_f1: mean_f1(&test_scores),
        test_scores,
        model,
        fit,
    })
}

/// [`train_cpa_on`] with the dataset's own splits.
pub fn train_cpa(
    task: CpaTask,
    data: &DatasetSplit,
    cfg: &TrainConfig,
    seed: u64,
    banks: Option<&FeatureBanks>,
) -> Result<CpaRun> {
    let setup = CpaSetup::new(task, cfg, dataset_num_tools(data.all()), banks)?;
    fn refs(v: &[GameSession]) -> Vec<&GameSession> {
        v.iter().collect()
    }
    train_cpa_on(
        &setup,
        cfg,
        seed,
        &refs(&data.train),
        &refs(&data.val),
        &refs(&data.test),
        FitOptions::default(),
    )
}

/// All-negative decisions score 0 on a unit with positives, 1 without.
pub fn all_negative_f1(positives: usize) -> f64 {
    f1_score(0, 0, positives)
}

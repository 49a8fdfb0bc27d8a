use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::cpa::{dataset_num_tools, InstanceScore, NoRng};
use super::fit::{fit, model_seed, FitLog, FitOptions};
use super::inputs::{build_input, player_questions, FeatureBanks, InputSpec, ToMFeatureBank, TomSlot};
use crate::analysis::macro_f1;
use crate::error::{Error, Result};
use crate::nn::{argmax, Model, Readout, SequenceInput};
use crate::synth::{DatasetSplit, GameSession, ToMKind};
use crate::tensor::{Mode, Tape, Var};

/// What a ToM model of one kind needs besides its parameters.
#[derive(Clone, Debug)]
pub struct TomSetup {
    pub kind: ToMKind,
    pub spec: InputSpec,
    pub num_tools: usize,
}

/// One answered question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TomPrediction {
    pub session: u64,
    pub player: usize,
    pub time: usize,
    pub truth: usize,
    pub predicted: usize,
}

impl TomSetup {
    pub fn new(kind: ToMKind, cfg: &TrainConfig, num_tools: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            kind,
            spec: InputSpec {
                modalities: cfg.modalities,
                question: Some(kind),
                tom: TomSlot::None,
            },
            num_tools,
        })
    }

    pub fn model(&self, cfg: &TrainConfig, seed: u64, sample: &GameSession) -> Result<Model> {
        let streams = self.spec.slots(sample.dialogue_dim, sample.visual_dim, 0);
        let readout = Readout::Classes(self.kind.num_classes());
        Model::new(cfg.arch.model_config(self.num_tools, streams, readout), model_seed(seed))
    }

    fn input(&self, s: &GameSession, player: usize) -> Result<SequenceInput> {
        build_input(s, player, &self.spec, self.num_tools, None::<&FeatureBanks>)
    }

    /// Question times and answer classes of one player.
    fn targets(&self, s: &GameSession, player: usize) -> (Vec<usize>, Vec<usize>) {
        player_questions(s, player, self.kind)
            .into_iter()
            .map(|q| (q.time, q.answer.class_index()))
            .unzip()
    }

    /// Cross-entropy over both players' questions, or `None` without any.
    pub fn session_loss(&self, model: &Model, tape: &mut Tape, s: &GameSession, rng: &mut ChaCha8Rng) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for player in 0..2 {
            let (rows, classes) = self.targets(s, player);
            if rows.is_empty() {
                continue;
            }
            let input = self.input(s, player)?;
            let (_, logits) = model.classify(tape, &input, &rows, rng)?;
            let loss = tape.cross_entropy(logits, &classes)?;
            total = Some(match total {
                Some(t) => tape.add(t, loss)?,
                None => loss,
            });
        }
        Ok(total)
    }

    /// Eval-mode answers and transformer outputs at one player's questions.
    fn run_player(&self, model: &Model, s: &GameSession, player: usize) -> Result<Option<(Vec<TomPrediction>, Vec<Vec<f64>>)>> {
        let (rows, classes) = self.targets(s, player);
        if rows.is_empty() {
            return Ok(None);
        }
        let input = self.input(s, player)?;
        let mut tape = Tape::new(&model.store, Mode::Eval);
        let (out, logits) = model.classify(&mut tape, &input, &rows, &mut NoRng)?;
        let logits = tape.value(logits);
        let ctx = tape.value(out.context);
        let preds = rows
            .iter()
            .zip(&classes)
            .enumerate()
            .map(|(i, (&time, &truth))| TomPrediction {
                session: s.id,
                player,
                time,
                truth,
                predicted: argmax(logits.row(i)),
            })
            .collect();
        let feats = (0..rows.len()).map(|i| ctx.row(i).to_vec()).collect();
        Ok(Some((preds, feats)))
    }

    pub fn predict(&self, model: &Model, sessions: &[&GameSession]) -> Result<Vec<TomPrediction>> {
        let mut out = Vec::new();
        for s in sessions {
            for player in 0..2 {
                if let Some((p, _)) = self.run_player(model, s, player)? {
                    out.extend(p);
                }
            }
        }
        Ok(out)
    }

    /// Macro F1 over all questions of `sessions`.
    pub fn evaluate(&self, model: &Model, sessions: &[&GameSession]) -> Result<f64> {
        tom_macro_f1(self.kind, &self.predict(model, sessions)?)
    }

    /// Transformer outputs (width `model_dim`) at every question of one
    /// player, computed in eval mode. Empty when the player has none.
    pub fn features(&self, model: &Model, s: &GameSession, player: usize) -> Result<Vec<(usize, Vec<f64>)>> {
        Ok(match self.run_player(model, s, player)? {
            None => Vec::new(),
            Some((preds, feats)) => preds.iter().map(|p| p.time).zip(feats).collect(),
        })
    }
}

/// Macro F1 of a set of answers.
pub fn tom_macro_f1(kind: ToMKind, preds: &[TomPrediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Data(format!("no {} questions to score", kind.name())));
    }
    let truth: Vec<usize> = preds.iter().map(|p| p.truth).collect();
    let pred: Vec<usize> = preds.iter().map(|p| p.predicted).collect();
    macro_f1(&truth, &pred, kind.num_classes())
}

/// Macro F1 per (session, player) over that player's questions.
pub fn tom_instance_scores(kind: ToMKind, preds: &[TomPrediction]) -> Result<Vec<InstanceScore>> {
    let mut groups: std::collections::BTreeMap<(u64, usize), Vec<TomPrediction>> = Default::default();
    for p in preds {
        groups.entry((p.session, p.player)).or_default().push(*p);
    }
    groups
        .into_iter()
        .map(|((session, player), g)| {
            Ok(InstanceScore {
                session,
                player,
                f1: tom_macro_f1(kind, &g)?,
            })
        })
        .collect()
}

/// A trained ToM model with its scores.
#[derive(Clone, Debug)]
pub struct TomRun {
    pub kind: ToMKind,
    pub seed: u64,
    pub model: Model,
    pub setup: TomSetup,
    pub fit: FitLog,
    pub val_f1: f64,
    pub test_f1: f64,
    pub test_predictions: Vec<TomPrediction>,
}

fn has_questions(kind: ToMKind, sessions: &[&GameSession]) -> bool {
    sessions.iter().any(|s| s.questions.iter().any(|q| q.kind == kind))
}

/// Trains on `train`, selects on `val` macro F1, reports on `test`.
pub fn train_tom_on(
    setup: &TomSetup,
    cfg: &TrainConfig,
    seed: u64,
    train: &[&GameSession],
    val: &[&GameSession],
    test: &[&GameSession],
    opts: FitOptions,
) -> Result<TomRun> {
    for (name, split) in [("training", train), ("validation", val), ("test", test)] {
        if !has_questions(setup.kind, split) {
            return Err(Error::Data(format!("no {} questions in the {name} split", setup.kind.name())));
        }
    }
    let mut model = setup.model(cfg, seed, train[0])?;
    let fit = fit(
        &mut model,
        cfg,
        seed,
        train,
        opts,
        |m, tape, s, rng| setup.session_loss(m, tape, s, rng),
        |m| setup.evaluate(m, val),
    )?;
    let val_f1 = setup.evaluate(&model, val)?;
    let test_predictions = setup.predict(&model, test)?;
    Ok(TomRun {
        kind: setup.kind,
        seed,
        test_f1: tom_macro_f1(setup.kind, &test_predictions)?,
        val_f1,
        test_predictions,
        setup: setup.clone(),
        model,
        fit,
    })
}

fn refs(v: &[GameSession]) -> Vec<&GameSession> {
    v.iter().collect()
}

/// [`train_tom_on`] with the dataset's own splits.
pub fn train_tom(kind: ToMKind, data: &DatasetSplit, cfg: &TrainConfig, seed: u64) -> Result<TomRun> {
    let setup = TomSetup::new(kind, cfg, dataset_num_tools(data.all()))?;
    train_tom_on(
        &setup,
        cfg,
        seed,
        &refs(&data.train),
        &refs(&data.val),
        &refs(&data.test),
        FitOptions::default(),
    )
}

/// Features of `run`'s model for every player of `sessions`.
pub fn build_feature_bank<'a>(run: &TomRun, sessions: impl IntoIterator<Item = &'a GameSession>) -> Result<ToMFeatureBank> {
    let mut bank = ToMFeatureBank::new(run.model.config.model_dim);
    for s in sessions {
        for player in 0..2 {
            bank.insert(s.id, player, run.setup.features(&run.model, s, player)?)?;
        }
    }
    Ok(bank)
}

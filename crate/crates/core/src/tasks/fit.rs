use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use crate::error::Result;
use crate::nn::Model;
use crate::synth::{mix_seed, GameSession};
use crate::tensor::{Adam, Mode, Tape, Var};

const MODEL_STREAM: u64 = 0x6d6f_6465;
const TRAIN_STREAM: u64 = 0x7472_6169;

/// Initialisation seed of the model trained with run seed `seed`.
pub fn model_seed(seed: u64) -> u64 {
    mix_seed(seed, MODEL_STREAM)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitLog {
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochLog>,
}

/// Options of [`fit`] beyond the train config.
#[derive(Clone, Copy, Debug, Default)]
pub struct FitOptions {
    /// Stop as soon as the validation score reaches this value.
    pub stop_at: Option<f64>,
}

/// Runs `cfg.epochs` epochs of one Adam step per training session (sessions
/// shuffled each epoch), scoring with `validate` after every epoch.
/// `session_loss` returns `None` for sessions without a training signal.
pub fn fit<L, V>(
    model: &mut Model,
    cfg: &TrainConfig,
    seed: u64,
    train: &[&GameSession],
    opts: FitOptions,
    session_loss: L,
    validate: V,
) -> Result<FitLog>
where
    L: Fn(&Model, &mut Tape, &GameSession, &mut ChaCha8Rng) -> Result<Option<Var>>,
    V: Fn(&Model) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, TRAIN_STREAM));
    let mut adam = Adam::new(cfg.adam, &model.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(usize, f64, crate::tensor::ParamStore)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0usize;
        for &i in &order {
            let grads = {
                let mut tape = Tape::new(&model.store, Mode::Train);
                let Some(loss) = session_loss(model, &mut tape, train[i], &mut rng)? else {
                    continue;
                };
                total += tape.value(loss).item();
                steps += 1;
                tape.backward(loss)?
            };
            adam.step(&mut model.store, &grads);
        }
        let val = validate(model)?;
        let train_loss = if steps > 0 { total / steps as f64 } else { f64::NAN };
        log::info!("epoch {epoch}: train loss {train_loss:.4}, validation {val:.4}");
        history.push(EpochLog {
            epoch,
            train_loss,
            val_score: val,
        });
        let improved = best.as_ref().is_none_or(|(_, b, _)| val > *b);
        if improved {
            let snapshot = if cfg.select_on_val { model.store.clone() } else { Default::default() };
            best = Some((epoch, val, snapshot));
        }
        if opts.stop_at.is_some_and(|target| val >= target) {
            break;
        }
    }
    let (best_epoch, best_val, store) = best.expect("at least one epoch");
    if cfg.select_on_val {
        model.store = store;
    }
    Ok(FitLog {
        best_epoch: if cfg.select_on_val { best_epoch } else { history.len() },
        best_val: if cfg.select_on_val { best_val } else { history.last().map_or(f64::NAN, |h| h.val_score) },
        history,
    })
}

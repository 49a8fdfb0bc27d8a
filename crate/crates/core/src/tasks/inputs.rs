use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Modalities;
use super::ground_truth::{encode_tom_ground_truth, GT_WIDTH};
use crate::error::{Error, Result};
use crate::nn::{PlanInput, SequenceInput, SlotSpec};
use crate::plangraph::NUM_MATERIALS;
use crate::synth::{About, DialogueMove, GameSession, QuestionRecord, ToMKind};

/// Width of the question slot: one-hot subject ⊕ one-hot {self, partner}.
pub const QUESTION_WIDTH: usize = NUM_MATERIALS + 2;

/// Source of the ToM slot of a CPA model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TomSlot {
    None,
    /// Learned features of these kinds, concatenated in kind order.
    Learned(Vec<ToMKind>),
    /// Ground-truth one-hots of these kinds, concatenated in kind order.
    GroundTruth(Vec<ToMKind>),
}

impl TomSlot {
    pub fn kinds(&self) -> &[ToMKind] {
        match self {
            TomSlot::None => &[],
            TomSlot::Learned(k) | TomSlot::GroundTruth(k) => k,
        }
    }
}

/// Which per-timestep streams a model sees, in slot order: moves,
/// dialogue, visual, question, ToM.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub modalities: Modalities,
    /// For ToM models: the question slot for this kind.
    pub question: Option<ToMKind>,
    pub tom: TomSlot,
}

impl InputSpec {
    /// Stream slots for sessions with the given feature widths. An empty ToM
    /// kind set adds no slot at all.
    pub fn slots(&self, dialogue_dim: usize, visual_dim: usize, feature_width: usize) -> Vec<SlotSpec> {
        let mut v = Vec::new();
        if self.modalities.moves {
            v.push(SlotSpec::new("moves", DialogueMove::COUNT));
        }
        if self.modalities.dialogue {
            v.push(SlotSpec::new("dialogue", dialogue_dim));
        }
        if self.modalities.visual {
            v.push(SlotSpec::new("visual", visual_dim));
        }
        if self.question.is_some() {
            v.push(SlotSpec::new("question", QUESTION_WIDTH));
        }
        match &self.tom {
            TomSlot::None => {}
            TomSlot::Learned(k) if !k.is_empty() => {
                v.push(SlotSpec::new("tom_features", k.len() * feature_width))
            }
            TomSlot::GroundTruth(k) if !k.is_empty() => v.push(SlotSpec::new("tom_ground_truth", k.len() * GT_WIDTH)),
            _ => {}
        }
        v
    }
}

/// Per (session, player): ToM-model outputs at that player's question
/// timesteps for one kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ToMFeatureBank {
    pub width: usize,
    pub entries: BTreeMap<(u64, usize), Vec<(usize, Vec<f64>)>>,
}

impl ToMFeatureBank {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, session: u64, player: usize, features: Vec<(usize, Vec<f64>)>) -> Result<()> {
        if let Some((_, f)) = features.iter().find(|(_, f)| f.len() != self.width) {
            return Err(Error::Contract(format!(
                "feature of width {} in a bank of width {}",
                f.len(),
                self.width
            )));
        }
        self.entries.insert((session, player), features);
        Ok(())
    }

    pub fn get(&self, session: u64, player: usize) -> Result<&[(usize, Vec<f64>)]> {
        self.entries
            .get(&(session, player))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("no ToM features for session {session} player {player}")))
    }
}

/// Feature banks by kind.
pub type FeatureBanks = BTreeMap<ToMKind, ToMFeatureBank>;

/// `player`'s questions of `kind`, in time order.
pub fn player_questions(s: &GameSession, player: usize, kind: ToMKind) -> Vec<&QuestionRecord> {
    let mut q: Vec<&QuestionRecord> = s
        .questions
        .iter()
        .filter(|q| q.asked_of == player && q.kind == kind)
        .collect();
    q.sort_by_key(|q| q.time);
    q
}

/// Builds one player's model input. `banks` must hold every learned kind
/// when the spec asks for learned features.
pub fn build_input(
    s: &GameSession,
    player: usize,
    spec: &InputSpec,
    num_tools: usize,
    banks: Option<&FeatureBanks>,
) -> Result<SequenceInput> {
    if player > 1 {
        return Err(Error::Contract(format!("player {player} (expected 0 or 1)")));
    }
    let len = s.length;
    let plan = PlanInput::from_partial(&s.partials[player], num_tools)?;
    let mut streams = Vec::new();
    let obs = &s.observations[player];
    let dense = |width: usize, f: &dyn Fn(&crate::synth::Observation) -> Option<Vec<f64>>| {
        let mut t = crate::tensor::Tensor::zeros(&[len, width]);
        for o in obs {
            if let Some(v) = f(o) {
                t.row_mut(o.t).copy_from_slice(&v);
            }
        }
        t
    };
    if spec.modalities.moves {
        streams.push(dense(DialogueMove::COUNT, &|o| {
            o.dialogue_move.map(|m| {
                let mut v = vec![0.0; DialogueMove::COUNT];
                v[m.index()] = 1.0;
                v
            })
        }));
    }
    if spec.modalities.dialogue {
        streams.push(dense(s.dialogue_dim, &|o| o.dialogue.clone()));
    }
    if spec.modalities.visual {
        streams.push(dense(s.visual_dim, &|o| o.visual.clone()));
    }
    if let Some(kind) = spec.question {
        let mut t = crate::tensor::Tensor::zeros(&[len, QUESTION_WIDTH]);
        for q in player_questions(s, player, kind) {
            let row = t.row_mut(q.time);
            row[q.subject.0] = 1.0;
            row[NUM_MATERIALS + usize::from(q.about == About::Partner)] = 1.0;
        }
        streams.push(t);
    }
    match &spec.tom {
        TomSlot::Learned(kinds) if !kinds.is_empty() => {
            let banks = banks.ok_or_else(|| Error::Data("learned ToM features requested without a feature bank".into()))?;
            let width = banks
                .get(&kinds[0])
                .ok_or_else(|| Error::Data(format!("no feature bank for {:?}", kinds[0])))?
                .width;
            let mut t = crate::tensor::Tensor::zeros(&[len, kinds.len() * width]);
            for (k, kind) in kinds.iter().enumerate() {
                let bank = banks
                    .get(kind)
                    .ok_or_else(|| Error::Data(format!("no feature bank for {kind:?}")))?;
                if bank.width != width {
                    return Err(Error::Data("feature banks of different widths".into()));
                }
                for (time, f) in bank.get(s.id, player)? {
                    if *time >= len {
                        return Err(Error::Data(format!("feature at t={time} beyond session length {len}")));
                    }
                    t.row_mut(*time)[k * width..(k + 1) * width].copy_from_slice(f);
                }
            }
            streams.push(t);
        }
        TomSlot::GroundTruth(kinds) if !kinds.is_empty() => {
            let mut t = crate::tensor::Tensor::zeros(&[len, kinds.len() * GT_WIDTH]);
            for (k, &kind) in kinds.iter().enumerate() {
                for q in player_questions(s, player, kind) {
                    let enc = encode_tom_ground_truth(q.kind, q.subject, q.answer)?;
                    t.row_mut(q.time)[k * GT_WIDTH..(k + 1) * GT_WIDTH].copy_from_slice(&enc);
                }
            }
            streams.push(t);
        }
        _ => {}
    }
    Ok(SequenceInput { plan, len, streams })
}

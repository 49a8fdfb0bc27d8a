//! Session data model and the scripted two-player simulator.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::answers::{answer_intention, answer_knowledge, answer_status};
use super::GameConfig;
use crate::error::Result;
use crate::plangraph::{MaterialId, PartialPlan, PlanEdge, PlanGraph, ToolId, NUM_MATERIALS};

/// Dialogue-move vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueMove {
    RequestKnowledge,
    ShareEdge,
    AnnounceCraft,
    AnnounceTarget,
    Ack,
    AskStatus,
    InformStatus,
    Noop,
}

impl DialogueMove {
    pub const COUNT: usize = 8;
    pub const ALL: [DialogueMove; 8] = [
        DialogueMove::RequestKnowledge,
        DialogueMove::ShareEdge,
        DialogueMove::AnnounceCraft,
        DialogueMove::AnnounceTarget,
        DialogueMove::Ack,
        DialogueMove::AskStatus,
        DialogueMove::InformStatus,
        DialogueMove::Noop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One chat utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub time: usize,
    pub speaker: usize,
    #[serde(rename = "move")]
    pub dialogue_move: DialogueMove,
    /// Up to two materials the utterance mentions (share-edge: src, dst).
    pub materials: Vec<MaterialId>,
    /// For inform-status: whether the speaker reports the material as made.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
}

/// A craft occupying `[begin, finish)`; the product exists from `finish` on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CraftEvent {
    pub player: usize,
    pub material: MaterialId,
    pub begin: usize,
    pub finish: usize,
    /// Whether the other player observed this craft.
    pub seen_by_partner: bool,
}

/// An edge transferred from `from` to `to` at `time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareEvent {
    pub time: usize,
    pub from: usize,
    pub to: usize,
    pub edge: PlanEdge,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub crafts: Vec<CraftEvent>,
    pub shares: Vec<ShareEvent>,
    pub utterances: Vec<Utterance>,
}

/// A player's observations at one timestep; absent modalities are `None`
/// (zero-padded by consumers).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: usize,
    #[serde(default, rename = "move", skip_serializing_if = "Option::is_none")]
    pub dialogue_move: Option<DialogueMove>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToMKind {
    Status,
    Knowledge,
    Intention,
}

impl ToMKind {
    pub const ALL: [ToMKind; 3] = [ToMKind::Status, ToMKind::Knowledge, ToMKind::Intention];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn num_classes(self) -> usize {
        match self {
            ToMKind::Intention => NUM_MATERIALS + 1,
            _ => 3,
        }
    }

    pub fn letter(self) -> char {
        match self {
            ToMKind::Status => 'S',
            ToMKind::Knowledge => 'K',
            ToMKind::Intention => 'I',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ToMKind::Status => "status",
            ToMKind::Knowledge => "knowledge",
            ToMKind::Intention => "intention",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum About {
    #[serde(rename = "self")]
    SelfDirected,
    Partner,
}

/// Answer labels. Status/Knowledge use YES/NO/MAYBE; Intention uses a
/// material or NOT_SURE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToMAnswer {
    Yes,
    No,
    Maybe,
    Material(MaterialId),
    NotSure,
}

impl ToMAnswer {
    /// Class index within the kind's vocabulary: YES 0, NO 1, MAYBE 2;
    /// materials by global id, NOT_SURE = 21.
    pub fn class_index(self) -> usize {
        match self {
            ToMAnswer::Yes => 0,
            ToMAnswer::No => 1,
            ToMAnswer::Maybe => 2,
            ToMAnswer::Material(m) => m.0,
            ToMAnswer::NotSure => NUM_MATERIALS,
        }
    }

    pub fn from_class(kind: ToMKind, class: usize) -> Result<Self> {
        match (kind, class) {
            (ToMKind::Intention, c) if c < NUM_MATERIALS => Ok(ToMAnswer::Material(MaterialId(c))),
            (ToMKind::Intention, c) if c == NUM_MATERIALS => Ok(ToMAnswer::NotSure),
            (ToMKind::Status | ToMKind::Knowledge, 0) => Ok(ToMAnswer::Yes),
            (ToMKind::Status | ToMKind::Knowledge, 1) => Ok(ToMAnswer::No),
            (ToMKind::Status | ToMKind::Knowledge, 2) => Ok(ToMAnswer::Maybe),
            _ => Err(crate::Error::Schema(format!(
                "class {class} outside the {kind:?} vocabulary"
            ))),
        }
    }

    pub fn valid_for(self, kind: ToMKind) -> bool {
        match self {
            ToMAnswer::Yes | ToMAnswer::No | ToMAnswer::Maybe => kind != ToMKind::Intention,
            ToMAnswer::Material(m) => kind == ToMKind::Intention && m.0 < NUM_MATERIALS,
            ToMAnswer::NotSure => kind == ToMKind::Intention,
        }
    }
}

/// A pop-up question with its ground-truth answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub kind: ToMKind,
    pub subject: MaterialId,
    pub asked_of: usize,
    pub about: About,
    pub time: usize,
    pub answer: ToMAnswer,
}

/// One simulated game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSession {
    pub v: String,
    pub id: u64,
    pub split: Split,
    pub plan: PlanGraph,
    pub partials: [PartialPlan; 2],
    pub tools: [BTreeSet<ToolId>; 2],
    pub length: usize,
    pub complete: bool,
    /// Seconds between question rounds, in timesteps.
    pub question_steps: usize,
    pub dialogue_dim: usize,
    pub visual_dim: usize,
    pub observations: [Vec<Observation>; 2],
    pub questions: Vec<QuestionRecord>,
    pub trace: Trace,
    /// Known edge sets at the end of the session (for replay checks).
    pub final_known: [BTreeSet<PlanEdge>; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl GameSession {
    /// Edges `player` knows at the end of timestep `t`.
    pub fn known_at(&self, player: usize, t: usize) -> BTreeSet<PlanEdge> {
        let mut known = self.partials[player].known_edges().clone();
        for s in &self.trace.shares {
            if s.to == player && s.time <= t {
                known.insert(s.edge);
            }
        }
        known
    }

    /// Time at which `m` became available (`finish` of its craft).
    pub fn crafted_at(&self, m: MaterialId) -> Option<&CraftEvent> {
        self.trace.crafts.iter().find(|c| c.material == m)
    }

    /// Craft of `player` in progress at `t`.
    pub fn crafting_at(&self, player: usize, t: usize) -> Option<&CraftEvent> {
        self.trace
            .crafts
            .iter()
            .find(|c| c.player == player && c.begin <= t && t < c.finish)
    }

    /// Pop-up question times.
    pub fn question_times(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.questions.iter().map(|q| q.time).collect();
        ts.dedup();
        ts
    }
}

/// Fixed random projections that turn symbolic events into dense features.
#[derive(Clone, Debug)]
pub struct FeatureProjector {
    dialogue: Vec<Vec<f64>>,
    visual: Vec<Vec<f64>>,
    noise: f64,
}

/// Width of the symbolic dialogue code: move, speaker, two material slots,
/// done flag.
const DIALOGUE_CODE: usize = DialogueMove::COUNT + 2 + 2 * NUM_MATERIALS + 1;
/// Width of the symbolic visual code: actor (self/partner), material.
const VISUAL_CODE: usize = 2 + NUM_MATERIALS;

impl FeatureProjector {
    /// Projections drawn from `N(0, 1/in)`; the same `seed` gives the same
    /// projections, so every session of a dataset shares them.
    pub fn new<R: Rng + ?Sized>(dialogue_dim: usize, visual_dim: usize, noise: f64, rng: &mut R) -> Self {
        let mut mat = |rows: usize, cols: usize| {
            let d = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid normal");
            (0..rows)
                .map(|_| (0..cols).map(|_| d.sample(rng)).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        FeatureProjector {
            dialogue: mat(DIALOGUE_CODE, dialogue_dim),
            visual: mat(VISUAL_CODE, visual_dim),
            noise,
        }
    }

    fn project<R: Rng + ?Sized>(&self, w: &[Vec<f64>], active: &[usize], rng: &mut R) -> Vec<f64> {
        let dim = w[0].len();
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("valid normal");
        let mut out = vec![0.0; dim];
        for &i in active {
            for (o, x) in out.iter_mut().zip(&w[i]) {
                *o += x;
            }
        }
        if self.noise > 0.0 {
            for o in &mut out {
                *o += noise.sample(rng);
            }
        }
        out
    }

    pub fn dialogue<R: Rng + ?Sized>(&self, u: &Utterance, rng: &mut R) -> Vec<f64> {
        let mut active = vec![u.dialogue_move.index(), DialogueMove::COUNT + u.speaker.min(1)];
        for (slot, m) in u.materials.iter().take(2).enumerate() {
            active.push(DialogueMove::COUNT + 2 + slot * NUM_MATERIALS + m.0);
        }
        if u.done == Some(true) {
            active.push(DIALOGUE_CODE - 1);
        }
        self.project(&self.dialogue, &active, rng)
    }

    /// Visual code for crafts visible to a player: `(is_partner, material)`.
    pub fn visual<R: Rng + ?Sized>(&self, seen: &[(bool, MaterialId)], rng: &mut R) -> Vec<f64> {
        let active: Vec<usize> = seen
            .iter()
            .flat_map(|&(partner, m)| [usize::from(partner), 2 + m.0])
            .collect();
        self.project(&self.visual, &active, rng)
    }
}

struct Pending {
    speaker: usize,
    dialogue_move: DialogueMove,
    materials: Vec<MaterialId>,
    done: Option<bool>,
    edge: Option<PlanEdge>,
}

/// Runs the scripted game. Each step: finish crafts; each idle player starts
/// the first ready product of its agenda (ingredients first) whose recipe it
/// fully knows and whose tool it holds, else it may ask for help; a share is
/// triggered with the per-step hazard matching `share_probability` per
/// question interval; one queued utterance is emitted (shares take effect
/// when their utterance is emitted). Questions are answered afterwards from
/// the trace, using only events up to their timestep.
pub fn simulate_session<R: Rng + ?Sized>(
    plan: &PlanGraph,
    partials: &(PartialPlan, PartialPlan),
    tool_split: &[BTreeSet<ToolId>; 2],
    cfg: &GameConfig,
    projector: &FeatureProjector,
    rng: &mut R,
) -> Result<GameSession> {
    let q = cfg.question_steps();
    let hazard = 1.0 - (1.0 - cfg.share_probability).powf(1.0 / q as f64);
    let mut known = [
        partials.0.known_edges().clone(),
        partials.1.known_edges().clone(),
    ];
    let starting = plan.starting_set();
    let mut agenda = plan.view().topological_order()?;
    agenda.reverse();
    agenda.retain(|m| !starting.contains(m));
    let recipe = |m: MaterialId| plan.recipe(m).copied().collect::<Vec<_>>();
    let tool_of = |m: MaterialId| plan.recipe(m).next().map(|e| e.tool);

    let mut crafts: Vec<CraftEvent> = Vec::new();
    let mut shares = Vec::new();
    let mut utterances: Vec<Utterance> = Vec::new();
    let mut queue: VecDeque<Pending> = VecDeque::new();
    let mut busy: [Option<usize>; 2] = [None, None];
    let mut complete = false;
    let mut length = cfg.max_timesteps;
    let mut last_request: [Option<(MaterialId, usize)>; 2] = [None, None];

    for t in 0..cfg.max_timesteps {
        // 1. finish crafts
        for p in 0..2 {
            if let Some(i) = busy[p] {
                if crafts[i].finish == t {
                    busy[p] = None;
                    let m = crafts[i].material;
                    if m == plan.goal() {
                        complete = true;
                    } else if rng.random_bool(cfg.announce_probability) {
                        queue.push_back(Pending {
                            speaker: p,
                            dialogue_move: DialogueMove::AnnounceCraft,
                            materials: vec![m],
                            done: None,
                            edge: None,
                        });
                    }
                }
            }
        }
        if complete {
            length = t + 1;
            break;
        }
        let available = |m: MaterialId, crafts: &[CraftEvent]| {
            starting.contains(&m) || crafts.iter().any(|c| c.material == m && c.finish <= t)
        };
        // 2. idle players start a craft or ask for help
        let order: [usize; 2] = if rng.random_bool(0.5) { [0, 1] } else { [1, 0] };
        for p in order {
            if busy[p].is_some() {
                continue;
            }
            let taken = |m: MaterialId| crafts.iter().any(|c| c.material == m);
            let ready = agenda.iter().copied().find(|&m| {
                !taken(m)
                    && tool_of(m).is_some_and(|tl| tool_split[p].contains(&tl))
                    && recipe(m).iter().all(|e| known[p].contains(e) && available(e.dst, &crafts))
            });
            if let Some(m) = ready {
                crafts.push(CraftEvent {
                    player: p,
                    material: m,
                    begin: t,
                    finish: t + cfg.craft_duration,
                    seen_by_partner: rng.random_bool(cfg.visibility),
                });
                busy[p] = Some(crafts.len() - 1);
                if rng.random_bool(cfg.announce_probability) {
                    queue.push_back(Pending {
                        speaker: p,
                        dialogue_move: DialogueMove::AnnounceTarget,
                        materials: vec![m],
                        done: None,
                        edge: None,
                    });
                }
            } else if rng.random_bool(cfg.talk_probability) {
                // ask about the first uncrafted product whose recipe is
                // incomplete, preferring ones this player could make
                let lacking: Vec<MaterialId> = agenda
                    .iter()
                    .copied()
                    .filter(|&m| !taken(m) && recipe(m).iter().any(|e| !known[p].contains(e)))
                    .collect();
                let own_tool = lacking
                    .iter()
                    .copied()
                    .find(|&m| tool_of(m).is_some_and(|tl| tool_split[p].contains(&tl)));
                if let Some(m) = own_tool.or(lacking.first().copied()) {
                    if last_request[p].is_none_or(|(lm, lt)| lm != m || t >= lt + q / 2) {
                        last_request[p] = Some((m, t));
                        queue.push_back(Pending {
                            speaker: p,
                            dialogue_move: DialogueMove::RequestKnowledge,
                            materials: vec![m],
                            done: None,
                            edge: None,
                        });
                    }
                }
            }
        }
        // 3. knowledge sharing
        if cfg.share_probability > 0.0 && rng.random_bool(hazard.min(1.0)) {
            let giver = rng.random_range(0..2);
            let receiver = 1 - giver;
            let candidates: Vec<PlanEdge> = known[giver]
                .iter()
                .filter(|e| !known[receiver].contains(e))
                .copied()
                .collect();
            let useful: Vec<PlanEdge> = candidates
                .iter()
                .filter(|e| tool_split[receiver].contains(&e.tool))
                .copied()
                .collect();
            let pick_from = if useful.is_empty() { &candidates } else { &useful };
            if !pick_from.is_empty() {
                let edge = pick_from[rng.random_range(0..pick_from.len())];
                queue.push_back(Pending {
                    speaker: giver,
                    dialogue_move: DialogueMove::ShareEdge,
                    materials: vec![edge.src, edge.dst],
                    done: None,
                    edge: Some(edge),
                });
            }
        }
        // 4. small talk
        if rng.random_bool(cfg.chat_probability) {
            let speaker = rng.random_range(0..2);
            if rng.random_bool(0.5) {
                let m = agenda[rng.random_range(0..agenda.len())];
                queue.push_back(Pending {
                    speaker,
                    dialogue_move: DialogueMove::AskStatus,
                    materials: vec![m],
                    done: None,
                    edge: None,
                });
            } else {
                queue.push_back(Pending {
                    speaker,
                    dialogue_move: DialogueMove::Noop,
                    materials: vec![],
                    done: None,
                    edge: None,
                });
            }
        }
        // 5. emit one utterance
        if let Some(u) = queue.pop_front() {
            match u.dialogue_move {
                DialogueMove::ShareEdge => {
                    let edge = u.edge.expect("share carries an edge");
                    let to = 1 - u.speaker;
                    if known[to].insert(edge) {
                        shares.push(ShareEvent {
                            time: t,
                            from: u.speaker,
                            to,
                            edge,
                        });
                    }
                    queue.push_back(Pending {
                        speaker: to,
                        dialogue_move: DialogueMove::Ack,
                        materials: vec![],
                        done: None,
                        edge: None,
                    });
                }
                DialogueMove::AskStatus => {
                    let m = u.materials[0];
                    let other = 1 - u.speaker;
                    let done = crafts
                        .iter()
                        .any(|c| c.material == m && c.player == other && c.finish <= t);
                    queue.push_back(Pending {
                        speaker: other,
                        dialogue_move: DialogueMove::InformStatus,
                        materials: vec![m],
                        done: Some(done),
                        edge: None,
                    });
                }
                _ => {}
            }
            // inform-status is re-evaluated at emission so it is never stale
            let done = if u.dialogue_move == DialogueMove::InformStatus {
                let m = u.materials[0];
                Some(crafts
                    .iter()
                    .any(|c| c.material == m && c.player == u.speaker && c.finish <= t))
            } else {
                u.done
            };
            utterances.push(Utterance {
                time: t,
                speaker: u.speaker,
                dialogue_move: u.dialogue_move,
                materials: u.materials,
                done,
            });
        }
    }

    // observations
    let mut observations: [Vec<Observation>; 2] = [Vec::new(), Vec::new()];
    let mut ui = 0;
    for t in 0..length {
        let utter = if ui < utterances.len() && utterances[ui].time == t {
            ui += 1;
            Some(&utterances[ui - 1])
        } else {
            None
        };
        let dialogue = utter.map(|u| projector.dialogue(u, rng));
        for p in 0..2 {
            let seen: Vec<(bool, MaterialId)> = crafts
                .iter()
                .filter(|c| c.begin <= t && t < c.finish && (c.player == p || c.seen_by_partner))
                .map(|c| (c.player != p, c.material))
                .collect();
            let visual = (!seen.is_empty()).then(|| projector.visual(&seen, rng));
            if utter.is_some() || visual.is_some() {
                observations[p].push(Observation {
                    t,
                    dialogue_move: utter.map(|u| u.dialogue_move),
                    dialogue: dialogue.clone(),
                    visual,
                });
            }
        }
    }

    let mut session = GameSession {
        v: super::SCHEMA_VERSION.to_string(),
        id: 0,
        split: Split::Train,
        plan: plan.clone(),
        partials: [partials.0.clone(), partials.1.clone()],
        tools: tool_split.clone(),
        length,
        complete,
        question_steps: q,
        dialogue_dim: cfg.dialogue_dim,
        visual_dim: cfg.visual_dim,
        observations,
        questions: Vec::new(),
        trace: Trace {
            crafts,
            shares,
            utterances,
        },
        final_known: known,
    };
    session.questions = ask_questions(&session, rng)?;
    Ok(session)
}

/// Every `question_steps` timesteps, one pair per kind: one player is asked
/// about itself, the other about its partner, with a shared subject.
/// Intention questions use the goal as their nominal subject.
fn ask_questions<R: Rng + ?Sized>(s: &GameSession, rng: &mut R) -> Result<Vec<QuestionRecord>> {
    let products = s.plan.products();
    let mut out = Vec::new();
    let mut t = s.question_steps;
    while t < s.length {
        for kind in ToMKind::ALL {
            let subject = match kind {
                ToMKind::Intention => s.plan.goal(),
                _ => products[rng.random_range(0..products.len())],
            };
            let self_player = rng.random_range(0..2);
            for (player, about) in [(self_player, About::SelfDirected), (1 - self_player, About::Partner)] {
                let answer = match kind {
                    ToMKind::Status => answer_status(s, t, subject, player, about)?,
                    ToMKind::Knowledge => answer_knowledge(s, t, subject, player, about)?,
                    ToMKind::Intention => answer_intention(s, t, player, about),
                };
                out.push(QuestionRecord {
                    kind,
                    subject,
                    asked_of: player,
                    about,
                    time: t,
                    answer,
                });
            }
        }
        t += s.question_steps;
    }
    out.sort_by_key(|q| (q.time, q.asked_of, q.kind));
    Ok(out)
}

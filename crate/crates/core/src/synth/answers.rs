//! Ground-truth answers to the pop-up questions, derived from the trace with
//! an explicit observability model.
//!
//! A player `a` asked about partner `b` knows what it saw (crafts of `b`
//! flagged `seen_by_partner`) and what was said in chat (both players read
//! every utterance). Answers are never wrong; when `a` lacks evidence the
//! answer is MAYBE (Status, Knowledge) or NOT_SURE (Intention).

use super::session::{About, DialogueMove, GameSession, ToMAnswer};
use crate::error::{Error, Result};
use crate::plangraph::MaterialId;

fn check_subject(s: &GameSession, subject: MaterialId) -> Result<()> {
    match s.plan.material(subject) {
        None => Err(Error::Schema(format!("material {subject} is not in the plan"))),
        Some(m) if m.is_starting => Err(Error::Schema(format!(
            "starting material {subject} cannot be a question subject"
        ))),
        Some(_) => Ok(()),
    }
}

/// Whether `observer` had evidence of `other`'s crafting activity in
/// `(t - question_steps, t]`: an announcement or status report by `other`,
/// or a seen craft.
fn recent_contact(s: &GameSession, observer: usize, other: usize, t: usize) -> bool {
    let from = (t + 1).saturating_sub(s.question_steps);
    let spoke = s.trace.utterances.iter().any(|u| {
        u.speaker == other
            && u.time >= from
            && u.time <= t
            && matches!(
                u.dialogue_move,
                DialogueMove::AnnounceCraft | DialogueMove::AnnounceTarget | DialogueMove::InformStatus
            )
    });
    let seen = s.trace.crafts.iter().any(|c| {
        c.player == other && c.player != observer && c.seen_by_partner && c.begin <= t && c.finish > from
    });
    spoke || seen
}

/// "Has X made `subject` so far?"
///
/// Self-directed: YES iff `player` finished crafting `subject` by `t`.
/// Partner-directed (`a` asked about `b`): YES if `b` finished it by `t` and
/// `a` saw the craft, or `b` announced it (announce-craft or inform-status
/// "done"); NO if `b` has not made it and either `a` made it itself, `b`
/// said so (inform-status "not done"), or `a` had recent contact with `b`;
/// otherwise MAYBE.
pub fn answer_status(
    s: &GameSession,
    t: usize,
    subject: MaterialId,
    player: usize,
    about: About,
) -> Result<ToMAnswer> {
    check_subject(s, subject)?;
    let made_by = |p: usize| {
        s.trace
            .crafts
            .iter()
            .find(|c| c.player == p && c.material == subject && c.finish <= t)
    };
    if about == About::SelfDirected {
        return Ok(if made_by(player).is_some() {
            ToMAnswer::Yes
        } else {
            ToMAnswer::No
        });
    }
    let (a, b) = (player, 1 - player);
    let said = |mv: DialogueMove, done: Option<bool>| {
        s.trace.utterances.iter().any(|u| {
            u.speaker == b
                && u.time <= t
                && u.dialogue_move == mv
                && u.materials.first() == Some(&subject)
                && (done.is_none() || u.done == done)
        })
    };
    if let Some(c) = made_by(b) {
        let evidence = c.seen_by_partner
            || said(DialogueMove::AnnounceCraft, None)
            || said(DialogueMove::InformStatus, Some(true));
        return Ok(if evidence { ToMAnswer::Yes } else { ToMAnswer::Maybe });
    }
    let evidence = made_by(a).is_some()
        || said(DialogueMove::InformStatus, Some(false))
        || recent_contact(s, a, b, t);
    Ok(if evidence { ToMAnswer::No } else { ToMAnswer::Maybe })
}

/// "Does X know how to make `subject`?"
///
/// Self-directed: YES iff `player` knows every plan edge with
/// `src = subject` at `t`. Partner-directed: the truth for the partner if
/// `subject`'s recipe came up by `t` (a share of one of its edges in either
/// direction, a request about it, the partner announcing it, or a seen craft
/// of it by the partner); otherwise MAYBE.
pub fn answer_knowledge(
    s: &GameSession,
    t: usize,
    subject: MaterialId,
    player: usize,
    about: About,
) -> Result<ToMAnswer> {
    check_subject(s, subject)?;
    let knows = |p: usize| {
        let known = s.known_at(p, t);
        s.plan.recipe(subject).all(|e| known.contains(e))
    };
    let truth = |p: usize| if knows(p) { ToMAnswer::Yes } else { ToMAnswer::No };
    if about == About::SelfDirected {
        return Ok(truth(player));
    }
    let (a, b) = (player, 1 - player);
    let shared = s
        .trace
        .shares
        .iter()
        .any(|sh| sh.time <= t && sh.edge.src == subject);
    let talked = s.trace.utterances.iter().any(|u| {
        u.time <= t
            && u.materials.first() == Some(&subject)
            && match u.dialogue_move {
                DialogueMove::RequestKnowledge => true,
                DialogueMove::AnnounceTarget | DialogueMove::AnnounceCraft => u.speaker == b,
                _ => false,
            }
    });
    let seen = s
        .trace
        .crafts
        .iter()
        .any(|c| c.player == b && c.player != a && c.material == subject && c.seen_by_partner && c.begin <= t);
    Ok(if shared || talked || seen {
        truth(b)
    } else {
        ToMAnswer::Maybe
    })
}

/// "What is X making right now?"
///
/// Self-directed: the material of `player`'s craft in progress at `t`, or
/// NOT_SURE when idle (blocked). Partner-directed: the partner's craft in
/// progress at `t` if the partner announced that target after starting it
/// and within the last question interval; otherwise NOT_SURE.
pub fn answer_intention(s: &GameSession, t: usize, player: usize, about: About) -> ToMAnswer {
    if about == About::SelfDirected {
        return s
            .crafting_at(player, t)
            .map_or(ToMAnswer::NotSure, |c| ToMAnswer::Material(c.material));
    }
    let b = 1 - player;
    let Some(c) = s.crafting_at(b, t) else {
        return ToMAnswer::NotSure;
    };
    let from = (t + 1).saturating_sub(s.question_steps).max(c.begin);
    let announced = s.trace.utterances.iter().any(|u| {
        u.speaker == b
            && u.dialogue_move == DialogueMove::AnnounceTarget
            && u.materials.first() == Some(&c.material)
            && u.time >= from
            && u.time <= t
    });
    if announced {
        ToMAnswer::Material(c.material)
    } else {
        ToMAnswer::NotSure
    }
}

use crate::error::{Error, Result};
use crate::plangraph::{MaterialId, NUM_MATERIALS};
use crate::synth::{ToMAnswer, ToMKind};

/// Offset of the question-kind block (3 wide).
pub const GT_KIND_OFFSET: usize = 0;
/// Offset of the subject-material block (21 wide).
pub const GT_SUBJECT_OFFSET: usize = 3;
/// Offset of the answer block (22 wide; 3-class answers left-aligned).
pub const GT_ANSWER_OFFSET: usize = 3 + NUM_MATERIALS;
/// Total encoding width.
pub const GT_WIDTH: usize = GT_ANSWER_OFFSET + 22;

/// One-hot kind ⊕ one-hot subject ⊕ one-hot answer class.
pub fn encode_tom_ground_truth(kind: ToMKind, subject: MaterialId, answer: ToMAnswer) -> Result<[f64; GT_WIDTH]> {
    if subject.0 >= NUM_MATERIALS {
        return Err(Error::Schema(format!("subject {subject} outside the material vocabulary")));
    }
    if !answer.valid_for(kind) {
        return Err(Error::Schema(format!("answer {answer:?} outside the {kind:?} vocabulary")));
    }
    let mut v = [0.0; GT_WIDTH];
    v[GT_KIND_OFFSET + kind.index()] = 1.0;
    v[GT_SUBJECT_OFFSET + subject.0] = 1.0;
    v[GT_ANSWER_OFFSET + answer.class_index()] = 1.0;
    Ok(v)
}

fn one_hot_index(block: &[f64], what: &str) -> Result<usize> {
    let hot: Vec<usize> = block
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, _)| i)
        .collect();
    match hot.as_slice() {
        [i] if block[*i] == 1.0 => Ok(*i),
        _ => Err(Error::Schema(format!("{what} block is not one-hot"))),
    }
}

/// Inverse of [`encode_tom_ground_truth`].
pub fn decode_tom_ground_truth(v: &[f64]) -> Result<(ToMKind, MaterialId, ToMAnswer)> {
    if v.len() != GT_WIDTH {
        return Err(Error::Schema(format!("encoding width {} (expected {GT_WIDTH})", v.len())));
    }
    let kind = ToMKind::ALL[one_hot_index(&v[GT_KIND_OFFSET..GT_SUBJECT_OFFSET], "kind")?];
    let subject = MaterialId(one_hot_index(&v[GT_SUBJECT_OFFSET..GT_ANSWER_OFFSET], "subject")?);
    let answer = ToMAnswer::from_class(kind, one_hot_index(&v[GT_ANSWER_OFFSET..], "answer")?)?;
    Ok((kind, subject, answer))
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Linear;
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tape, Var};

/// `f(z_src ⊕ z_dst ⊕ c)`: one linear map to a logit per candidate edge.
#[derive(Clone, Debug)]
pub struct EdgeScorer {
    pub linear: Linear,
    pub node_dim: usize,
    pub context_dim: usize,
}

impl EdgeScorer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, node_dim: usize, context_dim: usize, rng: &mut R) -> Self {
        Self {
            linear: Linear::new(store, name, 2 * node_dim + context_dim, 1, true, rng),
            node_dim,
            context_dim,
        }
    }

    /// Logits (`P × 1`) for row-index pairs into `nodes` (`N × node_dim`);
    /// `context` is `1 × context_dim`.
    pub fn score(&self, tape: &mut Tape, nodes: Var, context: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        if pairs.is_empty() {
            return Err(Error::Contract("edge scoring over an empty candidate set".into()));
        }
        let (src, dst): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let zs = tape.gather_rows(nodes, &src)?;
        let zd = tape.gather_rows(nodes, &dst)?;
        let c = tape.repeat_rows(context, pairs.len())?;
        let x = tape.concat(&[zs, zd, c], 1)?;
        self.linear.forward(tape, x)
    }
}

/// Positive-class decision on a logit: `σ(logit) > 0.5`, i.e. `logit > 0`.
/// A logit of exactly zero is negative.
pub fn is_positive(logit: f64) -> bool {
    crate::tensor::activation::sigmoid(logit) > 0.5
}

/// Linear classification head over context vectors.
#[derive(Clone, Debug)]
pub struct ToMHead {
    pub linear: Linear,
    pub classes: usize,
}

impl ToMHead {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            linear: Linear::new(store, name, in_dim, classes, true, rng),
            classes,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.linear.forward(tape, x)
    }
}

/// Index of the largest entry (first on ties).
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// A named per-timestep input stream of fixed width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub width: usize,
}

impl SlotSpec {
    pub fn new(name: impl Into<String>, width: usize) -> Self {
        Self {
            name: name.into(),
            width,
        }
    }
}

/// One bias-free linear projection per input stream into `embed_dim`, outputs
/// concatenated per timestep. Without a bias an absent (all-zero) stream
/// contributes an all-zero block.
#[derive(Clone, Debug)]
pub struct ModalityEmbedders {
    pub slots: Vec<SlotSpec>,
    pub projections: Vec<Linear>,
    pub embed_dim: usize,
}

impl ModalityEmbedders {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, slots: &[SlotSpec], embed_dim: usize, rng: &mut R) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Config("at least one input stream is required".into()));
        }
        let projections = slots
            .iter()
            .map(|s| Linear::new(store, &format!("{name}.{}", s.name), s.width, embed_dim, false, rng))
            .collect();
        Ok(Self {
            slots: slots.to_vec(),
            projections,
            embed_dim,
        })
    }

    /// Width of the concatenated output.
    pub fn out_dim(&self) -> usize {
        self.slots.len() * self.embed_dim
    }

    /// `inputs[k]` is `len × width_k`, or `1 × width_k` for a stream constant
    /// over time (broadcast after projection). Returns `len × out_dim`.
    pub fn forward(&self, tape: &mut Tape, inputs: &[Var], len: usize) -> Result<Var> {
        if inputs.len() != self.slots.len() {
            return Err(Error::Contract(format!(
                "expected {} input streams, got {}",
                self.slots.len(),
                inputs.len()
            )));
        }
        let mut parts = Vec::with_capacity(inputs.len());
        for ((slot, proj), &x) in self.slots.iter().zip(&self.projections).zip(inputs) {
            let shape = tape.shape(x).to_vec();
            if shape.len() != 2 || shape[1] != slot.width || (shape[0] != len && shape[0] != 1) {
                return Err(Error::Contract(format!(
                    "stream {} has shape {shape:?}, expected [{len} or 1, {}]",
                    slot.name, slot.width
                )));
            }
            let e = proj.forward(tape, x)?;
            parts.push(if shape[0] == len { e } else { tape.repeat_rows(e, len)? });
        }
        tape.concat(&parts, 1)
    }
}

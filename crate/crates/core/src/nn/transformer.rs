use rand::Rng;

use super::{LayerNorm, Linear};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tape, Tensor, Var};

/// `pe[t, 2i] = sin(t / 10000^(2i/d))`, `pe[t, 2i+1] = cos(·)`.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    let mut pe = Tensor::zeros(&[len, dim]);
    for t in 0..len {
        let row = pe.row_mut(t);
        for (c, v) in row.iter_mut().enumerate() {
            let i2 = (c - c % 2) as f64;
            let angle = t as f64 / 10000f64.powf(i2 / dim as f64);
            *v = if c % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// Single post-LN Transformer block over a per-timestep feature sequence:
/// input projection + sinusoidal positions, causal multi-head
/// self-attention, residual + LayerNorm, GELU feed-forward, residual +
/// LayerNorm.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub input_proj: Linear,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
    pub dim: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl TransformerBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "model dim {dim} must be divisible by the head count {heads}"
            )));
        }
        let lin = |store: &mut ParamStore, part: &str, i, o, rng: &mut R| {
            Linear::new(store, &format!("{name}.{part}"), i, o, true, rng)
        };
        Ok(Self {
            input_proj: lin(store, "input_proj", in_dim, dim, rng),
            wq: lin(store, "wq", dim, dim, rng),
            wk: lin(store, "wk", dim, dim, rng),
            wv: lin(store, "wv", dim, dim, rng),
            wo: lin(store, "wo", dim, dim, rng),
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            ff1: lin(store, "ff1", dim, ff_dim, rng),
            ff2: lin(store, "ff2", ff_dim, dim, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            dim,
            heads,
            dropout,
        })
    }

    /// Outputs for every position of `x` (`T × in_dim`).
    pub fn forward<R: Rng>(&self, tape: &mut Tape, x: Var, rng: &mut R) -> Result<Var> {
        let len = tape.shape(x)[0];
        let rows: Vec<usize> = (0..len).collect();
        self.forward_at(tape, x, &rows, rng)
    }

    /// Outputs at the positions in `query_rows` only (`Q × dim`). Position
    /// `t` attends to positions `0..=t`; everything after the attention is
    /// per-position, so the result equals the matching rows of
    /// [`TransformerBlock::forward`].
    pub fn forward_at<R: Rng>(&self, tape: &mut Tape, x: Var, query_rows: &[usize], rng: &mut R) -> Result<Var> {
        let len = tape.shape(x)[0];
        if len == 0 || query_rows.is_empty() {
            return Err(Error::Contract("transformer over an empty sequence".into()));
        }
        if let Some(&r) = query_rows.iter().find(|&&r| r >= len) {
            return Err(Error::Contract(format!("query position {r} beyond length {len}")));
        }
        let h = self.input_proj.forward(tape, x)?;
        let pe = tape.constant(positional_encoding(len, self.dim));
        let h = tape.add(h, pe)?;
        let hq = if query_rows.len() == len && query_rows.iter().enumerate().all(|(i, &r)| i == r) {
            h
        } else {
            tape.gather_rows(h, query_rows)?
        };
        let q = self.wq.forward(tape, hq)?;
        let k = self.wk.forward(tape, h)?;
        let v = self.wv.forward(tape, h)?;
        let widths: Vec<usize> = query_rows.iter().map(|&r| r + 1).collect();
        let dh = self.dim / self.heads;
        let inv = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for i in 0..self.heads {
            let qh = tape.slice(q, 1, i * dh, (i + 1) * dh)?;
            let kh = tape.slice(k, 1, i * dh, (i + 1) * dh)?;
            let vh = tape.slice(v, 1, i * dh, (i + 1) * dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, inv);
            let att = tape.prefix_softmax(scores, &widths)?;
            heads.push(tape.matmul(att, vh)?);
        }
        let attn = tape.concat(&heads, 1)?;
        let attn = self.wo.forward(tape, attn)?;
        let attn = tape.dropout(attn, self.dropout, rng)?;
        let x1 = tape.add(hq, attn)?;
        let x1 = self.ln1.forward(tape, x1)?;
        let ff = self.ff1.forward(tape, x1)?;
        let ff = tape.gelu(ff);
        let ff = tape.dropout(ff, self.dropout, rng)?;
        let ff = self.ff2.forward(tape, ff)?;
        let ff = tape.dropout(ff, self.dropout, rng)?;
        let x2 = tape.add(x1, ff)?;
        self.ln2.forward(tape, x2)
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Linear;
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// How the per-head outputs of a [`GatV2Layer`] are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadAggregation {
    Concat,
    Mean,
}

/// Message-passing structure: node `dst[k]` aggregates from node `src[k]`.
/// Built with one self-loop per node appended after the graph edges.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStructure {
    pub num_nodes: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Number of graph edges; entries from this index on are self-loops.
    pub num_graph_edges: usize,
}

impl GraphStructure {
    pub fn with_self_loops(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Contract("graph attention over an empty node set".into()));
        }
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s >= num_nodes || d >= num_nodes) {
            return Err(Error::Contract(format!(
                "edge ({s}, {d}) outside a graph of {num_nodes} nodes"
            )));
        }
        let (mut src, mut dst): (Vec<usize>, Vec<usize>) = edges.iter().copied().unzip();
        src.extend(0..num_nodes);
        dst.extend(0..num_nodes);
        Ok(Self {
            num_nodes,
            src,
            dst,
            num_graph_edges: edges.len(),
        })
    }

    /// Edge count including self-loops.
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Output of [`GatV2Layer::forward`].
#[derive(Clone, Copy, Debug)]
pub struct GatOutput {
    /// `N × out_dim` node features.
    pub nodes: Var,
    /// `E' × heads` attention coefficients, rows aligned with the structure's
    /// edge list (self-loops last).
    pub attention: Var,
}

/// GATv2 attention layer with edge features in the score only:
///
/// `e_ij = aᵀ LeakyReLU(W_s h_i + W_t h_j + W_e f_ij)`,
/// `α_ij = softmax_{j ∈ N(i) ∪ {i}} e_ij`,
/// `h'_i = Σ_j α_ij W_t h_j + b`.
///
/// The per-head weight matrices are stored side by side, so head `k` owns
/// columns `k·C .. (k+1)·C` of `W_s`, `W_t`, `W_e`.
#[derive(Clone, Debug)]
pub struct GatV2Layer {
    pub in_dim: usize,
    pub edge_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub aggregation: HeadAggregation,
    pub slope: f64,
    pub w_s: Linear,
    pub w_t: Linear,
    pub w_e: Linear,
    /// `heads × C` attention vectors.
    pub att: ParamId,
    pub bias: ParamId,
}

impl GatV2Layer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        edge_dim: usize,
        out_dim: usize,
        heads: usize,
        aggregation: HeadAggregation,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || out_dim == 0 {
            return Err(Error::Config("GATv2 layer needs at least one head and output".into()));
        }
        if aggregation == HeadAggregation::Concat && out_dim % heads != 0 {
            return Err(Error::Config(format!(
                "concat aggregation needs out_dim ({out_dim}) divisible by heads ({heads})"
            )));
        }
        let c = match aggregation {
            HeadAggregation::Concat => out_dim / heads,
            HeadAggregation::Mean => out_dim,
        };
        let w_s = Linear::new(store, &format!("{name}.w_s"), in_dim, heads * c, false, rng);
        let w_t = Linear::new(store, &format!("{name}.w_t"), in_dim, heads * c, false, rng);
        let w_e = Linear::new(store, &format!("{name}.w_e"), edge_dim, heads * c, false, rng);
        // Glorot bound for a (heads, C) attention tensor, as in the reference
        // implementation.
        let att_bound = (6.0 / (heads + c) as f64).sqrt();
        let att = store.add_uniform(format!("{name}.att"), &[heads, c], att_bound, rng);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Ok(Self {
            in_dim,
            edge_dim,
            out_dim,
            heads,
            aggregation,
            slope: 0.2,
            w_s,
            w_t,
            w_e,
            att,
            bias,
        })
    }

    /// Per-head channel count `C`.
    pub fn head_dim(&self) -> usize {
        match self.aggregation {
            HeadAggregation::Concat => self.out_dim / self.heads,
            HeadAggregation::Mean => self.out_dim,
        }
    }

    /// `h`: `N × in_dim`; `edge_feats`: `E × edge_dim` for the graph edges
    /// (`None` when there are none). Self-loops get a zero edge feature.
    pub fn forward(
        &self,
        tape: &mut Tape,
        h: Var,
        graph: &GraphStructure,
        edge_feats: Option<Var>,
    ) -> Result<GatOutput> {
        let n = tape.shape(h)[0];
        if n != graph.num_nodes {
            return Err(Error::Contract(format!(
                "GATv2 got {n} node rows for a graph of {} nodes",
                graph.num_nodes
            )));
        }
        let c = self.head_dim();
        let hc = self.heads * c;
        let hs = self.w_s.forward(tape, h)?;
        let ht = self.w_t.forward(tape, h)?;
        let loops = tape.constant(Tensor::zeros(&[graph.num_nodes, hc]));
        let fe = match (edge_feats, graph.num_graph_edges) {
            (_, 0) => loops,
            (Some(f), e) => {
                if tape.shape(f)[0] != e {
                    return Err(Error::Contract(format!(
                        "GATv2 got {} edge-feature rows for {e} edges",
                        tape.shape(f)[0]
                    )));
                }
                let fe = self.w_e.forward(tape, f)?;
                tape.concat(&[fe, loops], 0)?
            }
            (None, _) => return Err(Error::Contract("GATv2 edges without edge features".into())),
        };
        let gi = tape.gather_rows(hs, &graph.dst)?;
        let gj = tape.gather_rows(ht, &graph.src)?;
        let s = tape.add(gi, gj)?;
        let s = tape.add(s, fe)?;
        let act = tape.leaky_relu(s, self.slope);
        let att = tape.param(self.att);
        let mut outs = Vec::with_capacity(self.heads);
        let mut alphas = Vec::with_capacity(self.heads);
        for k in 0..self.heads {
            let ak = tape.slice(att, 0, k, k + 1)?;
            let lk = tape.slice(act, 1, k * c, (k + 1) * c)?;
            let score = tape.matmul_nt(lk, ak)?;
            let alpha = tape.segment_softmax(score, &graph.dst)?;
            let msg = tape.slice(gj, 1, k * c, (k + 1) * c)?;
            let msg = tape.mul_col(msg, alpha)?;
            outs.push(tape.scatter_add_rows(msg, &graph.dst, graph.num_nodes)?);
            alphas.push(alpha);
        }
        let combined = match self.aggregation {
            HeadAggregation::Concat => tape.concat(&outs, 1)?,
            HeadAggregation::Mean => {
                let mut acc = outs[0];
                for &o in &outs[1..] {
                    acc = tape.add(acc, o)?;
                }
                tape.scale(acc, 1.0 / self.heads as f64)
            }
        };
        let bias = tape.param(self.bias);
        let nodes = tape.add_row(combined, bias)?;
        let attention = tape.concat(&alphas, 1)?;
        Ok(GatOutput { nodes, attention })
    }
}

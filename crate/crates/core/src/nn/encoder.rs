use std::collections::BTreeMap;

use rand::Rng;

use super::gat::{GatV2Layer, GraphStructure, HeadAggregation};
use super::Linear;
use crate::error::{Error, Result};
use crate::plangraph::{MaterialId, PartialPlan, NUM_MATERIALS};
use crate::tensor::{ParamStore, Tape, Tensor, Var};

/// Node feature width: one-hot material id ⊕ `[is_starting, is_goal]`.
pub const NODE_FEATURE_DIM: usize = NUM_MATERIALS + 2;

/// Edge feature width: one-hot tool ⊕ `[product → ingredient,
/// ingredient → product]` direction flags.
pub fn edge_feature_dim(num_tools: usize) -> usize {
    num_tools + 2
}

/// Encoder input for one (partial) plan graph. Rows of `node_feats` follow
/// `nodes`; `edges` holds `(src, dst)` row indices along which messages
/// flow: every known recipe edge product → ingredient, then the same edges
/// reversed, so each material hears from both its products and its
/// ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanInput {
    pub nodes: Vec<MaterialId>,
    pub node_feats: Tensor,
    pub edges: Vec<(usize, usize)>,
    /// `E × (num_tools + 2)`: one-hot tool ⊕ direction flags.
    pub edge_feats: Tensor,
}

impl PlanInput {
    /// Features of a player's view: every plan material, the known edges.
    pub fn from_partial(partial: &PartialPlan, num_tools: usize) -> Result<Self> {
        let nodes = partial.node_ids();
        let index: BTreeMap<MaterialId, usize> = nodes.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let mut node_feats = Tensor::zeros(&[nodes.len(), NODE_FEATURE_DIM]);
        for (r, m) in partial.materials().iter().enumerate() {
            let row = node_feats.row_mut(r);
            row[m.id.0] = 1.0;
            row[NUM_MATERIALS] = f64::from(u8::from(m.is_starting));
            row[NUM_MATERIALS + 1] = f64::from(u8::from(m.id == partial.goal()));
        }
        let known = partial.known_edges();
        let n = known.len();
        let mut edges = Vec::with_capacity(2 * n);
        let mut edge_feats = Tensor::zeros(&[2 * n, edge_feature_dim(num_tools)]);
        for (r, e) in known.iter().enumerate() {
            if e.tool.0 >= num_tools {
                return Err(Error::Schema(format!(
                    "tool {} outside a vocabulary of {num_tools}",
                    e.tool.0
                )));
            }
            edges.push((index[&e.src], index[&e.dst]));
            let row = edge_feats.row_mut(r);
            row[e.tool.0] = 1.0;
            row[num_tools] = 1.0;
        }
        for (r, e) in known.iter().enumerate() {
            edges.push((index[&e.dst], index[&e.src]));
            let row = edge_feats.row_mut(n + r);
            row[e.tool.0] = 1.0;
            row[num_tools + 1] = 1.0;
        }
        Ok(Self {
            nodes,
            node_feats,
            edges,
            edge_feats,
        })
    }

    /// Row of `m` in the node order.
    pub fn index_of(&self, m: MaterialId) -> Option<usize> {
        self.nodes.iter().position(|&x| x == m)
    }
}

/// Per-node embeddings and their mean.
#[derive(Clone, Copy, Debug)]
pub struct PlanEncoding {
    /// `N × plan_dim`.
    pub nodes: Var,
    /// `1 × plan_dim`.
    pub pooled: Var,
}

/// Node/edge projections (linear → GELU → dropout), GATv2 with `heads`
/// concatenated heads, GELU, dropout, a single-head GATv2 layer, and mean
/// pooling.
#[derive(Clone, Debug)]
pub struct PlanEncoder {
    pub node_proj: Linear,
    pub edge_proj: Linear,
    pub gat1: GatV2Layer,
    pub gat2: GatV2Layer,
    pub dropout: f64,
}

impl PlanEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        node_dim: usize,
        edge_dim: usize,
        hidden: usize,
        heads: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let node_proj = Linear::new(store, &format!("{name}.node_proj"), node_dim, hidden, true, rng);
        let edge_proj = Linear::new(store, &format!("{name}.edge_proj"), edge_dim, hidden, true, rng);
        let gat1 = GatV2Layer::new(
            store,
            &format!("{name}.gat1"),
            hidden,
            hidden,
            hidden,
            heads,
            HeadAggregation::Concat,
            rng,
        )?;
        let gat2 = GatV2Layer::new(
            store,
            &format!("{name}.gat2"),
            hidden,
            hidden,
            hidden,
            1,
            HeadAggregation::Concat,
            rng,
        )?;
        Ok(Self {
            node_proj,
            edge_proj,
            gat1,
            gat2,
            dropout,
        })
    }

    pub fn forward<R: Rng>(&self, tape: &mut Tape, input: &PlanInput, rng: &mut R) -> Result<PlanEncoding> {
        let graph = GraphStructure::with_self_loops(input.nodes.len(), &input.edges)?;
        let x = tape.constant(input.node_feats.clone());
        let h = self.node_proj.forward(tape, x)?;
        let h = tape.gelu(h);
        let h = tape.dropout(h, self.dropout, rng)?;
        let e = if input.edges.is_empty() {
            None
        } else {
            let f = tape.constant(input.edge_feats.clone());
            let e = self.edge_proj.forward(tape, f)?;
            let e = tape.gelu(e);
            Some(tape.dropout(e, self.dropout, rng)?)
        };
        let h = self.gat1.forward(tape, h, &graph, e)?.nodes;
        let h = tape.gelu(h);
        let h = tape.dropout(h, self.dropout, rng)?;
        let nodes = self.gat2.forward(tape, h, &graph, e)?.nodes;
        let pooled = tape.mean_over(nodes, 0)?;
        Ok(PlanEncoding { nodes, pooled })
    }
}

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{edge_feature_dim, PlanEncoder, PlanEncoding, PlanInput, NODE_FEATURE_DIM};
use super::heads::{EdgeScorer, ModalityEmbedders, SlotSpec, ToMHead};
use super::transformer::TransformerBlock;
use crate::error::{Error, Result};
use crate::tensor::{load_checkpoint, save_checkpoint, ParamStore, Tape, Tensor, Var};

/// What sits on top of the Transformer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// A classification head with this many classes.
    Classes(usize),
    /// An edge scorer over plan-node pairs.
    EdgeScore,
}

/// Architecture hyperparameters; stored as the checkpoint header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_tools: usize,
    pub plan_dim: usize,
    pub gat_heads: usize,
    pub model_dim: usize,
    pub attn_heads: usize,
    pub ff_dim: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    /// Per-timestep input streams, in order. The pooled plan vector is
    /// always an extra first stream of width `plan_dim`.
    pub streams: Vec<SlotSpec>,
    pub readout: Readout,
}

impl ModelConfig {
    /// The published sizes: plan dim 128 with 4 heads, model dim 1024 with 8
    /// heads, feed-forward 2048, 64 per input stream, dropout 0.1.
    pub fn new(num_tools: usize, streams: Vec<SlotSpec>, readout: Readout) -> Self {
        Self {
            num_tools,
            plan_dim: 128,
            gat_heads: 4,
            model_dim: 1024,
            attn_heads: 8,
            ff_dim: 2048,
            embed_dim: 64,
            dropout: 0.1,
            streams,
            readout,
        }
    }

    /// Every stream the embedders see, plan first.
    pub fn all_slots(&self) -> Vec<SlotSpec> {
        let mut v = vec![SlotSpec::new("plan", self.plan_dim)];
        v.extend(self.streams.iter().cloned());
        v
    }

    /// Width of the concatenated per-timestep input to the Transformer.
    pub fn input_width(&self) -> usize {
        self.all_slots().len() * self.embed_dim
    }
}

/// One player's view of a session: their plan and per-timestep streams.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceInput {
    pub plan: PlanInput,
    pub len: usize,
    /// One `len × width` tensor per configured stream.
    pub streams: Vec<Tensor>,
}

/// Forward result at the requested positions.
#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    pub plan: PlanEncoding,
    /// `Q × model_dim` Transformer outputs.
    pub context: Var,
}

/// Plan encoder + modality embedders + Transformer block + readout, with
/// all parameters in one store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: PlanEncoder,
    pub embedders: ModalityEmbedders,
    pub block: TransformerBlock,
    pub head: Option<ToMHead>,
    pub scorer: Option<EdgeScorer>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let encoder = PlanEncoder::new(
            &mut store,
            "encoder",
            NODE_FEATURE_DIM,
            edge_feature_dim(c.num_tools),
            c.plan_dim,
            c.gat_heads,
            c.dropout,
            &mut rng,
        )?;
        let embedders = ModalityEmbedders::new(&mut store, "embed", &c.all_slots(), c.embed_dim, &mut rng)?;
        let block = TransformerBlock::new(
            &mut store,
            "block",
            embedders.out_dim(),
            c.model_dim,
            c.attn_heads,
            c.ff_dim,
            c.dropout,
            &mut rng,
        )?;
        let (head, scorer) = match c.readout {
            Readout::Classes(k) => (Some(ToMHead::new(&mut store, "head", c.model_dim, k, &mut rng)), None),
            Readout::EdgeScore => (
                None,
                Some(EdgeScorer::new(&mut store, "scorer", c.plan_dim, c.model_dim, &mut rng)),
            ),
        };
        Ok(Self {
            config,
            store,
            encoder,
            embedders,
            block,
            head,
            scorer,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Encodes the plan and runs the Transformer, returning outputs at
    /// `query_rows`.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        input: &SequenceInput,
        query_rows: &[usize],
        rng: &mut R,
    ) -> Result<ModelOutput> {
        if input.streams.len() != self.config.streams.len() {
            return Err(Error::Contract(format!(
                "model expects {} streams, input has {}",
                self.config.streams.len(),
                input.streams.len()
            )));
        }
        let plan = self.encoder.forward(tape, &input.plan, rng)?;
        let mut vars = vec![plan.pooled];
        for s in &input.streams {
            vars.push(tape.constant(s.clone()));
        }
        let x = self.embedders.forward(tape, &vars, input.len)?;
        let context = self.block.forward_at(tape, x, query_rows, rng)?;
        Ok(ModelOutput { plan, context })
    }

    /// Class logits (`Q × classes`) at `query_rows`.
    pub fn classify<R: Rng>(
        &self,
        tape: &mut Tape,
        input: &SequenceInput,
        query_rows: &[usize],
        rng: &mut R,
    ) -> Result<(ModelOutput, Var)> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no classification head".into()))?;
        let out = self.forward(tape, input, query_rows, rng)?;
        let logits = head.forward(tape, out.context)?;
        Ok((out, logits))
    }

    /// Edge logits (`P × 1`) for node-row pairs, with the context taken at
    /// the final timestep.
    pub fn score_edges<R: Rng>(
        &self,
        tape: &mut Tape,
        input: &SequenceInput,
        pairs: &[(usize, usize)],
        rng: &mut R,
    ) -> Result<(ModelOutput, Var)> {
        let scorer = self
            .scorer
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no edge scorer".into()))?;
        if input.len == 0 {
            return Err(Error::Contract("edge scoring on an empty sequence".into()));
        }
        let out = self.forward(tape, input, &[input.len - 1], rng)?;
        let logits = scorer.score(tape, out.plan.nodes, out.context, pairs)?;
        Ok((out, logits))
    }

    /// Writes the parameters with `{"model": config, "meta": meta}` as the
    /// checkpoint header.
    pub fn save(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let header = serde_json::json!({ "model": self.config, "meta": meta });
        save_checkpoint(path, &self.store, &header)
    }

    /// Rebuilds a model from a checkpoint; returns it with the `meta` value.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let (store, header) = load_checkpoint(path)?;
        let config: ModelConfig = serde_json::from_value(header["model"].clone())
            .map_err(|e| Error::Schema(format!("checkpoint header: {e}")))?;
        let mut model = Model::new(config, 0)?;
        if store.len() != model.store.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} tensors, architecture has {}",
                store.len(),
                model.store.len()
            )));
        }
        model.store.load_from(&store)?;
        Ok((model, header["meta"].clone()))
    }
}

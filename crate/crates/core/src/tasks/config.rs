use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelConfig, Readout, SlotSpec};
use crate::synth::{parse_bool, ToMKind};
use crate::tensor::AdamConfig;

/// Missing-knowledge prediction target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpaTask {
    /// Own missing knowledge: plan edges the player lacks.
    Omk,
    /// Partner's missing knowledge: own edges the partner lacks.
    Pmk,
}

impl CpaTask {
    pub fn name(self) -> &'static str {
        match self {
            CpaTask::Omk => "omk",
            CpaTask::Pmk => "pmk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omk" => Ok(CpaTask::Omk),
            "pmk" => Ok(CpaTask::Pmk),
            _ => Err(Error::Config(format!("unknown CPA task {s:?} (omk|pmk)"))),
        }
    }
}

/// How the OMK scoring pool is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Structurally valid pairs only.
    Candidate,
    /// Uniform pairs: negatives sampled to the candidate-pool size during
    /// training, every non-existing pair scored at evaluation.
    Naive,
}

impl Sampling {
    pub fn name(self) -> &'static str {
        match self {
            Sampling::Candidate => "candidate",
            Sampling::Naive => "naive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "candidate" => Ok(Sampling::Candidate),
            "naive" => Ok(Sampling::Naive),
            _ => Err(Error::Config(format!("unknown sampling mode {s:?} (candidate|naive)"))),
        }
    }
}

/// Observation streams fed to a model: dialogue moves (M), dialogue
/// features (D), visual features (V).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modalities {
    pub moves: bool,
    pub dialogue: bool,
    pub visual: bool,
}

impl Default for Modalities {
    fn default() -> Self {
        Self {
            moves: true,
            dialogue: true,
            visual: true,
        }
    }
}

impl Modalities {
    /// Parses `M`, `D`, `V` letters separated by `,` or `+` (e.g. `D+V+M`).
    pub fn parse(s: &str) -> Result<Self> {
        let mut m = Modalities {
            moves: false,
            dialogue: false,
            visual: false,
        };
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_uppercase().as_str() {
                "M" => m.moves = true,
                "D" => m.dialogue = true,
                "V" => m.visual = true,
                _ => return Err(Error::Config(format!("unknown modality {part:?} (M, D, V)"))),
            }
        }
        Ok(m)
    }

    /// `D+V+M` style label, in the order D, V, M; `none` when empty.
    pub fn label(self) -> String {
        let mut parts = Vec::new();
        if self.dialogue {
            parts.push("D");
        }
        if self.visual {
            parts.push("V");
        }
        if self.moves {
            parts.push("M");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

/// Parses a ToM-kind list such as `s,k,i` or `status,intention`.
pub fn parse_tom_kinds(s: &str) -> Result<Vec<ToMKind>> {
    let mut out = Vec::new();
    for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
        let k = match part.to_ascii_lowercase().as_str() {
            "s" | "status" => ToMKind::Status,
            "k" | "knowledge" => ToMKind::Knowledge,
            "i" | "intention" => ToMKind::Intention,
            _ => return Err(Error::Config(format!("unknown ToM kind {part:?} (s, k, i)"))),
        };
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out.sort();
    Ok(out)
}

/// `S+K` style label of a kind subset; `none` when empty.
pub fn subset_label(kinds: &[ToMKind]) -> String {
    if kinds.is_empty() {
        return "none".into();
    }
    kinds.iter().map(|k| k.letter().to_string()).collect::<Vec<_>>().join("+")
}

/// The 8 subsets of {Status, Knowledge, Intention} in table order: none,
/// singletons, pairs, all.
pub fn all_subsets() -> Vec<Vec<ToMKind>> {
    use ToMKind::*;
    vec![
        vec![],
        vec![Status],
        vec![Knowledge],
        vec![Intention],
        vec![Status, Knowledge],
        vec![Status, Intention],
        vec![Knowledge, Intention],
        vec![Status, Knowledge, Intention],
    ]
}

/// Model sizes (the published architecture by default).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub plan_dim: usize,
    pub gat_heads: usize,
    pub model_dim: usize,
    pub attn_heads: usize,
    pub ff_dim: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            plan_dim: 128,
            gat_heads: 4,
            model_dim: 1024,
            attn_heads: 8,
            ff_dim: 2048,
            embed_dim: 64,
            dropout: 0.1,
        }
    }
}

impl ArchConfig {
    pub fn model_config(&self, num_tools: usize, streams: Vec<SlotSpec>, readout: Readout) -> ModelConfig {
        ModelConfig {
            plan_dim: self.plan_dim,
            gat_heads: self.gat_heads,
            model_dim: self.model_dim,
            attn_heads: self.attn_heads,
            ff_dim: self.ff_dim,
            embed_dim: self.embed_dim,
            dropout: self.dropout,
            ..ModelConfig::new(num_tools, streams, readout)
        }
    }
}

/// Everything that defines a training run apart from the data and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub modalities: Modalities,
    /// Learned ToM features to feed the CPA model.
    pub tom_features: Vec<ToMKind>,
    /// Ground-truth ToM one-hots to feed the CPA model instead.
    pub ground_truth_tom: Vec<ToMKind>,
    pub sampling: Sampling,
    pub adam: AdamConfig,
    pub arch: ArchConfig,
    /// Keep the parameters of the epoch with the best validation score
    /// (otherwise the last epoch).
    pub select_on_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 42, 123],
            epochs: 20,
            modalities: Modalities::default(),
            tom_features: Vec::new(),
            ground_truth_tom: Vec::new(),
            sampling: Sampling::Candidate,
            adam: AdamConfig::default(),
            arch: ArchConfig::default(),
            select_on_val: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn kinds_value(kinds: &[ToMKind]) -> String {
    kinds.iter().map(|k| k.letter().to_ascii_lowercase().to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Keys accepted by [`TrainConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "seeds",
        "epochs",
        "modalities",
        "tom_features",
        "ground_truth_tom",
        "sampling",
        "lr",
        "beta1",
        "beta2",
        "eps",
        "plan_dim",
        "gat_heads",
        "model_dim",
        "attn_heads",
        "ff_dim",
        "embed_dim",
        "dropout",
        "select_on_val",
    ];

    /// Sets one key. Returns `Ok(false)` for keys this struct does not own.
    /// List values (`seeds`, ToM kinds) are comma-separated; an empty value
    /// clears a kind list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(|v| parse_num(key, v))
                    .collect::<Result<_>>()?
            }
            "epochs" => self.epochs = parse_num(key, value)?,
            "modalities" => self.modalities = Modalities::parse(value)?,
            "tom_features" => self.tom_features = parse_tom_kinds(value)?,
            "ground_truth_tom" => self.ground_truth_tom = parse_tom_kinds(value)?,
            "sampling" => self.sampling = Sampling::parse(value)?,
            "lr" => self.adam.lr = parse_num(key, value)?,
            "beta1" => self.adam.beta1 = parse_num(key, value)?,
            "beta2" => self.adam.beta2 = parse_num(key, value)?,
            "eps" => self.adam.eps = parse_num(key, value)?,
            "plan_dim" => self.arch.plan_dim = parse_num(key, value)?,
            "gat_heads" => self.arch.gat_heads = parse_num(key, value)?,
            "model_dim" => self.arch.model_dim = parse_num(key, value)?,
            "attn_heads" => self.arch.attn_heads = parse_num(key, value)?,
            "ff_dim" => self.arch.ff_dim = parse_num(key, value)?,
            "embed_dim" => self.arch.embed_dim = parse_num(key, value)?,
            "dropout" => self.arch.dropout = parse_num(key, value)?,
            "select_on_val" => self.select_on_val = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every key in [`TrainConfig::KEYS`] order with a value that
    /// [`TrainConfig::set`] parses back to the same config.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let m = self.modalities;
        let modalities = [(m.moves, "M"), (m.dialogue, "D"), (m.visual, "V")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, l)| *l)
            .collect::<Vec<_>>()
            .join(",");
        let values = [
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            self.epochs.to_string(),
            modalities,
            kinds_value(&self.tom_features),
            kinds_value(&self.ground_truth_tom),
            self.sampling.name().to_string(),
            self.adam.lr.to_string(),
            self.adam.beta1.to_string(),
            self.adam.beta2.to_string(),
            self.adam.eps.to_string(),
            self.arch.plan_dim.to_string(),
            self.arch.gat_heads.to_string(),
            self.arch.model_dim.to_string(),
            self.arch.attn_heads.to_string(),
            self.arch.ff_dim.to_string(),
            self.arch.embed_dim.to_string(),
            self.arch.dropout.to_string(),
            self.select_on_val.to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tom_features.is_empty() && !self.ground_truth_tom.is_empty() {
            return Err(Error::Config(
                "learned ToM features and ground-truth ToM labels are mutually exclusive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.arch.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

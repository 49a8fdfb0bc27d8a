//! Dataset generation, JSON-lines serialization and the 60/20/20 split.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plan::{generate_plan, sample_size, split_knowledge, split_tools};
use super::session::{simulate_session, FeatureProjector, GameSession, Split};
use super::{GameConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::plangraph::{json_offset, missing_edges};

/// SplitMix64 finalizer; derives independent stream seeds from one seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PROJECTOR_STREAM: u64 = 0x7072_6f6a;
const SPLIT_STREAM: u64 = 0x7370_6c74;

/// The dataset-wide feature projections for `cfg`.
pub fn projector_for(cfg: &GameConfig) -> FeatureProjector {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, PROJECTOR_STREAM));
    FeatureProjector::new(cfg.dialogue_dim, cfg.visual_dim, cfg.feature_noise, &mut rng)
}

/// Simulates session `id` of the dataset defined by `cfg`. Depends only on
/// `(cfg, id)`, so sessions can be generated in any order or in parallel.
pub fn generate_session(cfg: &GameConfig, projector: &FeatureProjector, id: u64) -> Result<GameSession> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, id + 1));
    let mut plan_cfg = cfg.clone();
    if cfg.randomize_size {
        let (n, s) = sample_size(&mut rng);
        plan_cfg.num_materials = n;
        plan_cfg.num_steps = s;
    }
    let plan = generate_plan(&plan_cfg, &mut rng)?;
    let partials = split_knowledge(&plan, cfg.overlap_fraction, &mut rng)?;
    let tools = split_tools(cfg.num_tools, &mut rng)?;
    let mut s = simulate_session(&plan, &partials, &tools, cfg, projector, &mut rng)?;
    s.id = id;
    Ok(s)
}

/// Seed-stable split labels for `n` sessions: a seeded permutation, the
/// first `round(0.6 n)` train, the next `round(0.2 n)` validation, the rest
/// test.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, SPLIT_STREAM)));
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = (0.2 * n as f64).round() as usize;
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Generates `n` sessions sequentially with their split labels.
pub fn generate_dataset(cfg: &GameConfig, n: usize) -> Result<Vec<GameSession>> {
    cfg.validate()?;
    let projector = projector_for(cfg);
    let splits = assign_splits(n, cfg.seed);
    (0..n)
        .map(|i| {
            let mut s = generate_session(cfg, &projector, i as u64)?;
            s.split = splits[i];
            Ok(s)
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<GameSession>,
    pub val: Vec<GameSession>,
    pub test: Vec<GameSession>,
}

impl DatasetSplit {
    pub fn from_sessions(sessions: Vec<GameSession>) -> Self {
        let mut d = DatasetSplit::default();
        for s in sessions {
            match s.split {
                Split::Train => d.train.push(s),
                Split::Val => d.val.push(s),
                Split::Test => d.test.push(s),
            }
        }
        d
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, split: Split) -> &[GameSession] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// All sessions in train, val, test order.
    pub fn all(&self) -> impl Iterator<Item = &GameSession> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Writes one JSON object per line.
pub fn write_dataset<W: Write>(mut w: W, sessions: &[GameSession]) -> Result<()> {
    for s in sessions {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn serialize_dataset(sessions: &[GameSession], path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(f, sessions)
}

/// Structural checks beyond what deserialization enforces.
pub fn validate_session(s: &GameSession) -> Result<()> {
    if s.v != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported schema version {:?} (expected {SCHEMA_VERSION:?})",
            s.v
        )));
    }
    for p in &s.partials {
        missing_edges(&s.plan, p)?;
    }
    for q in &s.questions {
        if !q.answer.valid_for(q.kind) {
            return Err(Error::Schema(format!(
                "answer {:?} outside the {:?} vocabulary",
                q.answer, q.kind
            )));
        }
        if q.asked_of > 1 || q.time >= s.length {
            return Err(Error::Schema("question outside the session".into()));
        }
    }
    for obs in &s.observations {
        for o in obs {
            if o.t >= s.length
                || o.dialogue.as_ref().is_some_and(|d| d.len() != s.dialogue_dim)
                || o.visual.as_ref().is_some_and(|d| d.len() != s.visual_dim)
            {
                return Err(Error::Schema(format!("malformed observation at t={}", o.t)));
            }
        }
    }
    Ok(())
}

/// Parses JSON-lines text. Errors name the byte offset of the problem.
pub fn parse_dataset(text: &str) -> Result<Vec<GameSession>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            let s: GameSession = serde_json::from_str(body).map_err(|e| Error::Parse {
                offset: offset + json_offset(body, &e),
                msg: e.to_string(),
            })?;
            validate_session(&s).map_err(|e| Error::Parse {
                offset,
                msg: e.to_string(),
            })?;
            out.push(s);
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn read_dataset<R: BufRead>(mut r: R) -> Result<Vec<GameSession>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    parse_dataset(&text)
}

pub fn load_dataset(path: &Path) -> Result<DatasetSplit> {
    let text = std::fs::read_to_string(path)?;
    Ok(DatasetSplit::from_sessions(parse_dataset(&text)?))
}

/// Summary statistics of a set of sessions.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DatasetStats {
    pub sessions: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub complete_fraction: f64,
    pub mean_length: f64,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub mean_shares: f64,
    pub mean_utterances: f64,
    pub questions: usize,
    /// Per kind, answer class → count.
    pub labels: std::collections::BTreeMap<String, std::collections::BTreeMap<usize, usize>>,
}

pub fn dataset_stats<'a>(sessions: impl IntoIterator<Item = &'a GameSession>) -> DatasetStats {
    let sessions: Vec<&GameSession> = sessions.into_iter().collect();
    let n = sessions.len().max(1) as f64;
    let mean = |f: &dyn Fn(&GameSession) -> f64| sessions.iter().map(|s| f(s)).sum::<f64>() / n;
    let mut labels: std::collections::BTreeMap<String, std::collections::BTreeMap<usize, usize>> =
        Default::default();
    for s in &sessions {
        for q in &s.questions {
            *labels
                .entry(q.kind.name().to_string())
                .or_default()
                .entry(q.answer.class_index())
                .or_default() += 1;
        }
    }
    let count = |sp: Split| sessions.iter().filter(|s| s.split == sp).count();
    DatasetStats {
        sessions: sessions.len(),
        train: count(Split::Train),
        val: count(Split::Val),
        test: count(Split::Test),
        complete_fraction: mean(&|s| f64::from(u8::from(s.complete))),
        mean_length: mean(&|s| s.length as f64),
        mean_nodes: mean(&|s| s.plan.node_ids().len() as f64),
        mean_edges: mean(&|s| s.plan.edges().len() as f64),
        mean_shares: mean(&|s| s.trace.shares.len() as f64),
        mean_utterances: mean(&|s| s.trace.utterances.len() as f64),
        questions: sessions.iter().map(|s| s.questions.len()).sum(),
        labels,
    }
}

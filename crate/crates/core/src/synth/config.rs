//! Game configuration and the flat `key = value` config format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the synthetic crafting game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Plan node count, in `[5, 10]`.
    pub num_materials: usize,
    /// Plan edge count, in `[7, 11]`.
    pub num_steps: usize,
    pub num_tools: usize,
    /// Seconds between pop-up question rounds.
    pub question_interval: f64,
    /// Seconds per simulation timestep.
    pub timestep: f64,
    /// Probability of a knowledge-share event per question interval.
    pub share_probability: f64,
    /// Fraction of plan edges known to both players at the start.
    pub overlap_fraction: f64,
    pub seed: u64,
    /// Session length cap `T_max` in timesteps.
    pub max_timesteps: usize,
    /// Timesteps a craft takes.
    pub craft_duration: usize,
    /// Sample `(num_materials, num_steps)` per session instead of using the
    /// fixed values.
    pub randomize_size: bool,
    /// Probability that a player sees a given craft of the partner.
    pub visibility: f64,
    /// Probability that a craft start/finish is announced in chat.
    pub announce_probability: f64,
    /// Per-step probability that a blocked player asks for help.
    pub talk_probability: f64,
    /// Per-step probability of small talk (status questions, fillers).
    pub chat_probability: f64,
    pub dialogue_dim: usize,
    pub visual_dim: usize,
    /// Standard deviation of the noise added to feature vectors.
    pub feature_noise: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            num_materials: 8,
            num_steps: 9,
            num_tools: 4,
            question_interval: 75.0,
            timestep: 1.0,
            share_probability: 0.8,
            overlap_fraction: 0.5,
            seed: 0,
            max_timesteps: 600,
            craft_duration: 20,
            randomize_size: true,
            visibility: 0.5,
            announce_probability: 0.5,
            talk_probability: 0.05,
            chat_probability: 0.02,
            dialogue_dim: 32,
            visual_dim: 32,
            feature_noise: 0.1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

/// Parses `true/false/1/0/yes/no`.
pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl GameConfig {
    /// Keys accepted by [`GameConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "num_materials",
        "num_steps",
        "num_tools",
        "question_interval",
        "timestep",
        "share_probability",
        "overlap_fraction",
        "seed",
        "max_timesteps",
        "craft_duration",
        "randomize_size",
        "visibility",
        "announce_probability",
        "talk_probability",
        "chat_probability",
        "dialogue_dim",
        "visual_dim",
        "feature_noise",
    ];

    /// Sets one key. Returns `Ok(false)` for keys this struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "num_materials" => self.num_materials = parse(key, value)?,
            "num_steps" => self.num_steps = parse(key, value)?,
            "num_tools" => self.num_tools = parse(key, value)?,
            "question_interval" => self.question_interval = parse(key, value)?,
            "timestep" => self.timestep = parse(key, value)?,
            "share_probability" => self.share_probability = parse(key, value)?,
            "overlap_fraction" => self.overlap_fraction = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max_timesteps" => self.max_timesteps = parse(key, value)?,
            "craft_duration" => self.craft_duration = parse(key, value)?,
            "randomize_size" => self.randomize_size = parse_bool(key, value)?,
            "visibility" => self.visibility = parse(key, value)?,
            "announce_probability" => self.announce_probability = parse(key, value)?,
            "talk_probability" => self.talk_probability = parse(key, value)?,
            "chat_probability" => self.chat_probability = parse(key, value)?,
            "dialogue_dim" => self.dialogue_dim = parse(key, value)?,
            "visual_dim" => self.visual_dim = parse(key, value)?,
            "feature_noise" => self.feature_noise = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Writes every key in [`GameConfig::KEYS`] order as `key = value` lines.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let v = serde_json::to_value(self).expect("config serializes");
        Self::KEYS
            .iter()
            .map(|k| {
                let val = &v[*k];
                let s = match val {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.to_string(), s)
            })
            .collect()
    }

    /// Timesteps between question rounds (at least 1).
    pub fn question_steps(&self) -> usize {
        ((self.question_interval / self.timestep).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("share_probability", self.share_probability)?;
        prob("overlap_fraction", self.overlap_fraction)?;
        prob("visibility", self.visibility)?;
        prob("announce_probability", self.announce_probability)?;
        prob("talk_probability", self.talk_probability)?;
        prob("chat_probability", self.chat_probability)?;
        if !(self.question_interval > 0.0 && self.timestep > 0.0) {
            return Err(Error::Config("question_interval and timestep must be positive".into()));
        }
        if self.num_tools < 2 {
            return Err(Error::Config("num_tools must be at least 2".into()));
        }
        if self.craft_duration == 0 || self.max_timesteps == 0 {
            return Err(Error::Config("craft_duration and max_timesteps must be positive".into()));
        }
        if self.dialogue_dim == 0 || self.visual_dim == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if !(self.feature_noise >= 0.0) {
            return Err(Error::Config("feature_noise must be non-negative".into()));
        }
        if !self.randomize_size {
            super::plan::check_size(self.num_materials, self.num_steps)?;
        }
        Ok(())
    }
}

/// One `key = value` entry with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses flat `key = value` text. `#` starts a comment; blank lines are
/// ignored; duplicate keys are an error.
pub fn parse_key_values(text: &str) -> Result<Vec<ConfigEntry>> {
    let mut out: Vec<ConfigEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.iter().any(|e| e.key == key) {
            return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
        }
        out.push(ConfigEntry {
            key,
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_unknown() {
        let entries = parse_key_values("# header\nseed = 7 # trailing\n\nnum_tools=3\n").unwrap();
        let mut cfg = GameConfig::default();
        for e in &entries {
            assert!(cfg.set(&e.key, &e.value).unwrap());
        }
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.num_tools, 3);
        assert!(!cfg.set("bogus", "1").unwrap());
        assert!(cfg.set("seed", "x").is_err());
        assert!(parse_key_values("a = 1\na = 2").is_err());
        assert!(parse_key_values("novalue").is_err());
    }

    #[test]
    fn key_values_round_trip() {
        let mut cfg = GameConfig {
            share_probability: 0.25,
            randomize_size: false,
            ..Default::default()
        };
        cfg.seed = 99;
        let mut back = GameConfig::default();
        for (k, v) in cfg.to_key_values() {
            assert!(back.set(&k, &v).unwrap(), "{k}");
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn question_cadence() {
        assert_eq!(GameConfig::default().question_steps(), 75);
        let cfg = GameConfig {
            question_interval: 75.0,
            timestep: 2.0,
            ..Default::default()
        };
        assert_eq!(cfg.question_steps(), 38);
    }
}

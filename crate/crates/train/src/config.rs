//! Training configuration and the flat key-value config-file format.

use serde::{Deserialize, Serialize};

use crate::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Alignment,
    Synthesis,
}

/// Learning-rate annealing for the alignment model: halve at each milestone.
/// The synthesis model keeps the bare warmup/decay schedule.
pub const ALIGNMENT_ANNEAL_STEPS: [u64; 3] = [10_000, 20_000, 50_000];
pub const ALIGNMENT_ANNEAL_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub dropout: f64,
    /// Warmup steps for the learning-rate schedule. Unset picks the
    /// per-model default: 1000 for alignment, 4000 for synthesis.
    pub warmup_steps: Option<u64>,
    pub max_steps: u64,
    pub seed: u64,
    pub clip_seconds: f64,
    pub validation_fraction: f64,
    /// Log train/validation loss every this many optimizer steps.
    pub log_every: u64,
    /// Overwrite the rolling checkpoint every this many optimizer steps.
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 16,
            dropout: 0.2,
            warmup_steps: None,
            max_steps: 10_000,
            seed: 0,
            clip_seconds: 5.0,
            validation_fraction: 0.1,
            log_every: 50,
            checkpoint_every: 500,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1".into());
        }
        if self.warmup_steps == Some(0) {
            return bad("warmup_steps must be >= 1".into());
        }
        if !(self.clip_seconds > 0.0) || !self.clip_seconds.is_finite() {
            return bad(format!("clip_seconds must be positive, got {}", self.clip_seconds));
        }
        if !(0.0..=1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction must be in [0, 1], got {}",
                self.validation_fraction
            ));
        }
        if self.log_every == 0 || self.checkpoint_every == 0 {
            return bad("log_every and checkpoint_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn warmup_for(&self, kind: ModelKind) -> u64 {
        self.warmup_steps.unwrap_or(match kind {
            ModelKind::Alignment => 1000,
            ModelKind::Synthesis => 4000,
        })
    }

    /// Applies one `key = value` override. Unknown keys are errors so a
    /// typo in a config file cannot silently fall back to a default.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
            value.trim().parse().map_err(|_| {
                TrainError::Config(format!("cannot parse {key} = {value:?}"))
            })
        }
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = Some(parse(key, value)?),
            "max_steps" => self.max_steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "clip_seconds" => self.clip_seconds = parse(key, value)?,
            "validation_fraction" => self.validation_fraction = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            other => return Err(TrainError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a whole flat config file: one `key = value` per line, `#`
    /// comments and blank lines ignored.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<(), TrainError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }
}

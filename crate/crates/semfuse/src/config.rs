//! Run configuration: a flat JSON file, one key per field, with desk-scale
//! defaults for anything omitted. CLI flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

pub const MAX_EPOCHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
    Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Contextual and semantic views fused at the word level.
    Sembert,
    /// Raw label embeddings concatenated per subword, no word pooling.
    SubwordAblation,
    /// Contextual view only.
    Baseline,
}

impl FusionMode {
    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Sembert => "sembert",
            FusionMode::SubwordAblation => "subword_ablation",
            FusionMode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task_kind: TaskKind,
    /// Frames kept per sentence (padded with all-O frames when short).
    pub m: usize,
    pub d_srl: usize,
    /// Width of the word-level semantic embedding e^t.
    pub d: usize,
    pub kernel_size: usize,
    /// Width of the pooled word-level contextual embedding e^w.
    pub d_w: usize,
    pub d_enc: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_len: usize,
    pub seed: u64,
    pub fusion_mode: FusionMode,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            task_kind: TaskKind::Classification,
            m: 3,
            d_srl: 10,
            d: 10,
            kernel_size: 3,
            d_w: 16,
            d_enc: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 64,
            max_positions: 64,
            learning_rate: 1e-3,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            batch_size: 16,
            epochs: 5,
            max_len: 48,
            seed: 42,
            fusion_mode: FusionMode::Sembert,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.epochs > MAX_EPOCHS {
            return Err(Error::Config(format!(
                "epochs must be in 1..={MAX_EPOCHS}, got {}",
                self.epochs
            )));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.max_len > self.max_positions {
            return Err(Error::Config(format!(
                "max_len {} exceeds max_positions {}",
                self.max_len, self.max_positions
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (name, v) in [
            ("d_srl", self.d_srl),
            ("d", self.d),
            ("kernel_size", self.kernel_size),
            ("d_w", self.d_w),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        self.encoder_config(1).validate()
    }

    /// Encoder shape for a given vocabulary; vocab size comes from the vocab
    /// file, never from the config.
    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            d_enc: self.d_enc,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_positions: self.max_positions,
            vocab_size,
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig {
            task_kind: TaskKind::Span,
            fusion_mode: FusionMode::SubwordAblation,
            m: 2,
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_file_fills_defaults_and_canonicalizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"m": 4, "fusion_mode": "baseline"}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.m, 4);
        assert_eq!(cfg.fusion_mode, FusionMode::Baseline);
        assert_eq!(cfg.d_srl, RunConfig::default().d_srl);
        let canon = dir.path().join("canon.json");
        cfg.save(&canon).unwrap();
        assert_eq!(RunConfig::load(&canon).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"m": 4, "learnig_rate": 0.1}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Config(_))));
    }

    #[test]
    fn mode_tokens_match_external_names() {
        assert_eq!(
            serde_json::to_string(&FusionMode::SubwordAblation).unwrap(),
            "\"subword_ablation\""
        );
        assert_eq!(serde_json::to_string(&TaskKind::Span).unwrap(), "\"span\"");
    }

    #[test]
    fn invariants_rejected() {
        let broken = [
            RunConfig { learning_rate: 0.0, ..RunConfig::default() },
            RunConfig { m: 0, ..RunConfig::default() },
            RunConfig { max_len: RunConfig::default().max_positions + 1, ..RunConfig::default() },
            RunConfig { epochs: 0, ..RunConfig::default() },
            // d_enc not divisible by n_heads = 4
            RunConfig { d_enc: 30, ..RunConfig::default() },
        ];
        for cfg in broken {
            assert!(cfg.validate().is_err());
        }
    }
}

//! Plain-text `key=value` run configuration.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use maskgan_core::models::ModelConfig;
use maskgan_core::training::{GanConfig, PretrainConfig};

use crate::error::{io_err, Error, Result};

/// Everything a run needs besides the data itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub train: Option<String>,
    pub valid: Option<String>,
    pub max_vocab: usize,
    pub max_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub share_embeddings: bool,
    pub suppress_specials: bool,
    pub lm_steps: usize,
    pub infill_steps: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_learning_rate: f64,
    pub gan: GanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::desk(0);
        let pre = PretrainConfig::default();
        let gan = GanConfig::default();
        Self {
            seed: gan.seed,
            train: None,
            valid: None,
            max_vocab: 10_000,
            max_len: 40,
            embed_dim: model.embed_dim,
            hidden_dim: model.hidden_dim,
            layers: model.layers,
            dropout: model.dropout,
            share_embeddings: model.share_embeddings,
            suppress_specials: model.suppress_specials,
            lm_steps: pre.steps,
            infill_steps: pre.steps,
            pretrain_batch_size: pre.batch_size,
            pretrain_learning_rate: pre.learning_rate,
            gan,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
}

fn opt_path(v: &Option<String>) -> String {
    v.clone().unwrap_or_default()
}

fn set_path(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

// One row per key: name, getter, setter. Keeps `set` and `entries` in step.
macro_rules! keys {
    ($($key:literal => $($field:ident).+ : $kind:ident),* $(,)?) => {
        impl RunConfig {
            /// Every key in canonical order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key from its string form.
            pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $($key => keys!(@set self, key, value, $($field).+, $kind),)*
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            }

            /// `(key, value)` pairs that parse back to this config.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, keys!(@get self, $($field).+, $kind))),*]
            }
        }
    };
    (@set $s:ident, $k:ident, $v:ident, $($field:ident).+, value) => { $s.$($field).+ = parse($k, $v)? };
    (@set $s:ident, $k:ident, $v:ident, $($field:ident).+, path) => { $s.$($field).+ = set_path($v) };
    (@get $s:ident, $($field:ident).+, value) => { display(&$s.$($field).+) };
    (@get $s:ident, $($field:ident).+, path) => { opt_path(&$s.$($field).+) };
}

fn display(v: &impl Display) -> String {
    v.to_string()
}

keys! {
    "seed" => seed: value,
    "train" => train: path,
    "valid" => valid: path,
    "max_vocab" => max_vocab: value,
    "max_len" => max_len: value,
    "embed_dim" => embed_dim: value,
    "hidden_dim" => hidden_dim: value,
    "layers" => layers: value,
    "dropout" => dropout: value,
    "share_embeddings" => share_embeddings: value,
    "suppress_specials" => suppress_specials: value,
    "lm_steps" => lm_steps: value,
    "infill_steps" => infill_steps: value,
    "pretrain_batch_size" => pretrain_batch_size: value,
    "pretrain_learning_rate" => pretrain_learning_rate: value,
    "gamma" => gan.gamma: value,
    "mask_rate" => gan.mask_rate: value,
    "mask_regime" => gan.mask_regime: value,
    "d_steps" => gan.d_steps: value,
    "g_learning_rate" => gan.g_learning_rate: value,
    "d_learning_rate" => gan.d_learning_rate: value,
    "critic_learning_rate" => gan.critic_learning_rate: value,
    "reward_scope" => gan.reward_scope: value,
    "full_vocab_rewards" => gan.full_vocab_rewards: value,
    "use_critic" => gan.use_critic: value,
    "curriculum" => gan.curriculum.enabled: value,
    "curriculum_start_len" => gan.curriculum.start_len: value,
    "curriculum_window" => gan.curriculum.window: value,
    "curriculum_threshold" => gan.curriculum.threshold: value,
    "batch_size" => gan.batch_size: value,
    "iterations" => gan.iterations: value,
    "dis_pretrain_steps" => gan.dis_pretrain_steps: value,
    "clip_norm" => gan.clip_norm: value,
    "adam_beta1" => gan.adam_beta1: value,
    "adam_beta2" => gan.adam_beta2: value,
    "eval_every" => gan.eval_every: value,
    "eval_samples" => gan.eval_samples: value,
    "eval_length" => gan.eval_length: value,
    "divergence_factor" => gan.divergence_factor: value,
}

impl RunConfig {
    /// Applies `key=value` lines on top of `self`. Blank lines and text after
    /// `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            self.set(k.trim(), v.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// The config rendered as `key=value` lines.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            dropout: self.dropout,
            share_embeddings: self.share_embeddings,
            suppress_specials: self.suppress_specials,
        }
    }

    pub fn pretrain_config(&self, steps: usize) -> PretrainConfig {
        PretrainConfig {
            steps,
            batch_size: self.pretrain_batch_size,
            learning_rate: self.pretrain_learning_rate,
            mask_rate: self.gan.mask_rate,
            mask_regime: self.gan.mask_regime,
            clip_norm: self.gan.clip_norm,
            adam_beta1: self.gan.adam_beta1,
            adam_beta2: self.gan.adam_beta2,
            seed: self.seed,
        }
    }

    pub fn gan_config(&self) -> GanConfig {
        GanConfig {
            seed: self.seed,
            ..self.gan.clone()
        }
    }
}

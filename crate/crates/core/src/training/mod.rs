//! Language-model pretraining, in-fill MLE pretraining and adversarial
//! actor-critic training.

mod curriculum;
mod gan;
mod pretrain;
mod returns;
mod steps;

use core::fmt;
use core::str::FromStr;

pub use curriculum::{curriculum_advance, CurriculumConfig, CurriculumState};
pub use gan::{gan_train_loop, GanData, GanHistory, GanTrainer, IterationMetrics, UpdateCounts};
pub use pretrain::{infill_loss, lm_loss, pretrain_infill, pretrain_lm, PretrainConfig};
pub use returns::{advantages, compute_rewards, discounted_returns};
pub use steps::{
    critic_loss, critic_step, discriminator_loss, discriminator_step, expected_reward, full_vocab_rewards, generator_pg_step,
    generator_surrogate_loss, policy_gradient, sample_rollouts, score_rollout, DiscStepStats, FULL_VOCAB_LIMIT,
};

use crate::error::{invalid, Error, Result};
use crate::masking::{Mask, MaskRegime};
use crate::numerics::{AdamConfig, DEFAULT_CLIP_NORM};

/// Positions that receive a discriminator reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardScope {
    /// Only blanked positions, where the generator acted.
    #[default]
    MaskedOnly,
    /// Every position of the composite sequence.
    AllPositions,
}

impl RewardScope {
    pub fn in_scope(self, mask: &Mask, t: usize) -> bool {
        match self {
            RewardScope::MaskedOnly => mask.is_masked(t),
            RewardScope::AllPositions => true,
        }
    }
}

impl fmt::Display for RewardScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardScope::MaskedOnly => "masked-only",
            RewardScope::AllPositions => "all-positions",
        })
    }
}

impl FromStr for RewardScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked-only" => Ok(RewardScope::MaskedOnly),
            "all-positions" => Ok(RewardScope::AllPositions),
            other => Err(invalid(alloc::format!("unknown reward scope {other:?}"))),
        }
    }
}

/// Adversarial training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    /// Discount γ applied to future rewards.
    pub gamma: f64,
    pub mask_rate: f64,
    pub mask_regime: MaskRegime,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub g_learning_rate: f64,
    pub d_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub reward_scope: RewardScope,
    /// Score every vocabulary token at blanked positions and use the
    /// expected reward instead of the sampled one.
    pub full_vocab_rewards: bool,
    /// Subtract the critic's value estimate from the return.
    pub use_critic: bool,
    pub curriculum: CurriculumConfig,
    pub batch_size: usize,
    pub iterations: usize,
    /// Discriminator updates against the initial generator before the
    /// adversarial loop starts.
    pub dis_pretrain_steps: usize,
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Evaluate every this many iterations; 0 disables evaluation.
    pub eval_every: usize,
    pub eval_samples: usize,
    pub eval_length: usize,
    pub divergence_factor: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            mask_rate: 0.5,
            mask_regime: MaskRegime::Contiguous,
            d_steps: 3,
            g_learning_rate: 5e-4,
            d_learning_rate: 1e-3,
            critic_learning_rate: 1e-3,
            reward_scope: RewardScope::MaskedOnly,
            full_vocab_rewards: false,
            use_critic: true,
            curriculum: CurriculumConfig::default(),
            batch_size: 16,
            iterations: 200,
            dis_pretrain_steps: 500,
            clip_norm: DEFAULT_CLIP_NORM,
            adam_beta1: AdamConfig::default().beta1,
            adam_beta2: AdamConfig::default().beta2,
            eval_every: 20,
            eval_samples: 100,
            eval_length: 20,
            divergence_factor: 4.0,
            seed: 42,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("discount must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(invalid("mask rate must lie in [0, 1]"));
        }
        if self.d_steps == 0 {
            return Err(invalid("at least one discriminator step per generator step is required"));
        }
        for (name, lr) in [
            ("generator", self.g_learning_rate),
            ("discriminator", self.d_learning_rate),
            ("critic", self.critic_learning_rate),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(invalid(alloc::format!("{name} learning rate must be positive")));
            }
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(invalid("clip norm must be positive"));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(invalid("divergence factor must exceed 1"));
        }
        self.curriculum.validate()
    }
}

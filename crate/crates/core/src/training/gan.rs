use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::steps::{critic_step, discriminator_step, generator_pg_step, sample_rollouts, score_rollout, DiscStepStats};
use super::{curriculum_advance, CurriculumState, GanConfig};
use crate::corpus::TokenSeq;
use crate::error::{Error, Result};
use crate::eval::{sample_perplexity, unconditional_samples, validation_nll, DivergenceMonitor, ModeCollapseMonitor, PerplexityMode};
use crate::math;
use crate::models::{MaskGan, Rollout};
use crate::numerics::{AdamConfig, AdamState, ParamStore};

/// Parameter updates performed, by network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateCounts {
    pub discriminator: usize,
    pub generator: usize,
    pub critic: usize,
}

impl core::ops::AddAssign for UpdateCounts {
    fn add_assign(&mut self, o: Self) {
        self.discriminator += o.discriminator;
        self.generator += o.generator;
        self.critic += o.critic;
    }
}

/// Statistics of one adversarial iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iter: usize,
    /// Mean discriminator loss over this iteration's D updates.
    pub d_loss: f64,
    pub d_accuracy: f64,
    /// Generator surrogate objective `Σ_t A_t log G(x̂_t)`, per rollout.
    pub g_surrogate: f64,
    /// Mean reward over in-scope positions.
    pub mean_reward: f64,
    /// Mean advantage over blanked positions.
    pub mean_advantage: f64,
    pub critic_mse: Option<f64>,
    /// Mean perplexity of unconditional samples under the frozen LM, on
    /// evaluation iterations.
    pub sample_ppl: Option<f64>,
    /// In-fill validation perplexity, on evaluation iterations.
    pub validation_ppl: Option<f64>,
    /// Curriculum length used for this iteration.
    pub max_len: usize,
    pub updates: UpdateCounts,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str = "iter,d_loss,g_surrogate,mean_reward,mean_advantage,critic_mse,sample_ppl";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| alloc::format!("{x}")).unwrap_or_default();
        alloc::format!(
            "{},{},{},{},{},{},{}",
            self.iter,
            self.d_loss,
            self.g_surrogate,
            self.mean_reward,
            self.mean_advantage,
            opt(self.critic_mse),
            opt(self.sample_ppl)
        )
    }
}

/// Data for adversarial training.
#[derive(Debug, Clone, Copy)]
pub struct GanData<'a> {
    pub train: &'a [TokenSeq],
    /// Held-out sequences for in-fill validation perplexity; may be empty.
    pub valid: &'a [TokenSeq],
    /// Frozen pretraining LM used to score unconditional samples.
    pub lm: Option<&'a MaskGan>,
}

/// Everything recorded by [`gan_train_loop`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GanHistory {
    pub dis_pretrain: Vec<DiscStepStats>,
    pub iterations: Vec<IterationMetrics>,
    pub warnings: Vec<String>,
    pub totals: UpdateCounts,
    /// Validation perplexity before the first adversarial iteration.
    pub initial_validation_ppl: Option<f64>,
}

/// Optimizer states, RNG streams and monitors of an adversarial run.
#[derive(Debug, Clone)]
pub struct GanTrainer {
    pub cfg: GanConfig,
    opt_g: AdamState,
    opt_d: AdamState,
    opt_c: AdamState,
    rng: crate::Rng,
    eval_rng: crate::Rng,
    pub curriculum: CurriculumState,
    divergence: DivergenceMonitor,
    collapse: ModeCollapseMonitor,
    pub totals: UpdateCounts,
    iter: usize,
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl GanTrainer {
    /// Optimizer settings for the generator, discriminator and critic.
    pub fn optimizers(&self) -> [AdamConfig; 3] {
        [self.opt_g.config, self.opt_d.config, self.opt_c.config]
    }

    pub fn new(model: &MaskGan, cfg: GanConfig, corpus_max: usize) -> Result<Self> {
        cfg.validate()?;
        let adam = |lr| AdamConfig::new(lr, cfg.adam_beta1, cfg.adam_beta2);
        Ok(Self {
            opt_g: AdamState::new(adam(cfg.g_learning_rate), &model.store, &model.generator_params())?,
            opt_d: AdamState::new(adam(cfg.d_learning_rate), &model.store, &model.discriminator_params())?,
            opt_c: AdamState::new(adam(cfg.critic_learning_rate), &model.store, &model.critic_params())?,
            rng: crate::seeded_rng(cfg.seed),
            eval_rng: crate::seeded_rng(cfg.seed ^ 0x5eed_e7a1),
            curriculum: CurriculumState::new(&cfg.curriculum, corpus_max),
            divergence: DivergenceMonitor::new(cfg.divergence_factor),
            collapse: ModeCollapseMonitor::default(),
            totals: UpdateCounts::default(),
            iter: 0,
            cfg,
        })
    }

    fn window(&self, x: &TokenSeq) -> TokenSeq {
        TokenSeq::new(x[..x.len().min(self.curriculum.max_len)].to_vec())
    }

    /// Batch drawn uniformly with replacement, cut to the curriculum length.
    fn batch(&mut self, train: &[TokenSeq]) -> Result<Vec<TokenSeq>> {
        if train.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        Ok((0..self.cfg.batch_size)
            .map(|_| {
                let i = self.rng.gen_range(0..train.len());
                self.window(&train[i])
            })
            .collect())
    }

    fn rollouts(&mut self, model: &MaskGan, train: &[TokenSeq]) -> Result<Vec<Rollout>> {
        let batch = self.batch(train)?;
        sample_rollouts(model, &batch, self.cfg.mask_rate, self.cfg.mask_regime, &mut self.rng)
    }

    /// One discriminator update against fresh in-fillings of the current
    /// generator.
    pub fn discriminator_round(&mut self, model: &mut MaskGan, train: &[TokenSeq]) -> Result<DiscStepStats> {
        let rollouts = self.rollouts(model, train)?;
        let stats = discriminator_step(model, &mut self.opt_d, &rollouts, self.cfg.clip_norm, &mut self.rng)?;
        self.totals.discriminator += 1;
        Ok(stats)
    }

    pub fn pretrain_discriminator(&mut self, model: &mut MaskGan, train: &[TokenSeq], steps: usize) -> Result<Vec<DiscStepStats>> {
        (0..steps).map(|_| self.discriminator_round(model, train)).collect()
    }

    /// `d_steps` discriminator updates, then one generator and one critic
    /// update on a shared batch of scored rollouts. Evaluation runs after
    /// the updates when the iteration index calls for it.
    pub fn iteration(&mut self, model: &mut MaskGan, data: &GanData<'_>) -> Result<(IterationMetrics, Vec<String>)> {
        let before = self.totals;
        let max_len = self.curriculum.max_len;
        let (mut d_loss, mut d_acc) = (0.0, 0.0);
        for _ in 0..self.cfg.d_steps {
            let s = self.discriminator_round(model, data.train)?;
            d_loss += s.loss;
            d_acc += s.accuracy;
        }
        let mut rollouts = self.rollouts(model, data.train)?;
        for r in rollouts.iter_mut() {
            score_rollout(model, r, &self.cfg)?;
        }
        let (mut r_sum, mut r_n, mut a_sum, mut a_n) = (0.0, 0, 0.0, 0);
        for r in &rollouts {
            for t in 0..r.len() {
                if self.cfg.reward_scope.in_scope(&r.context.mask, t) {
                    r_sum += r.rewards[t];
                    r_n += 1;
                }
                if r.context.mask.is_masked(t) {
                    a_sum += r.advantages[t];
                    a_n += 1;
                }
            }
        }
        let g_surrogate = generator_pg_step(model, &mut self.opt_g, &rollouts, self.cfg.clip_norm)?;
        self.totals.generator += 1;
        let critic_mse = if self.cfg.use_critic {
            let mse = critic_step(
                model,
                &mut self.opt_c,
                &rollouts,
                self.cfg.reward_scope,
                self.cfg.clip_norm,
                &mut self.rng,
            )?;
            if mse.is_some() {
                self.totals.critic += 1;
            }
            mse
        } else {
            None
        };
        self.iter += 1;
        let mut metrics = IterationMetrics {
            iter: self.iter,
            d_loss: d_loss / self.cfg.d_steps as f64,
            d_accuracy: d_acc / self.cfg.d_steps as f64,
            g_surrogate,
            mean_reward: mean(r_sum, r_n),
            mean_advantage: mean(a_sum, a_n),
            critic_mse,
            sample_ppl: None,
            validation_ppl: None,
            max_len,
            updates: UpdateCounts {
                discriminator: self.totals.discriminator - before.discriminator,
                generator: self.totals.generator - before.generator,
                critic: self.totals.critic - before.critic,
            },
        };
        let mut warnings = Vec::new();
        if self.cfg.eval_every > 0 && self.iter.is_multiple_of(self.cfg.eval_every) {
            let (val, sample, w) = self.evaluate(model, data)?;
            metrics.validation_ppl = val;
            metrics.sample_ppl = sample;
            warnings = w;
        }
        Ok((metrics, warnings))
    }

    /// In-fill validation perplexity (fed to the divergence monitor and the
    /// curriculum) and, with a frozen LM, the perplexity of unconditional
    /// samples (fed to the mode-collapse monitor).
    pub fn evaluate(&mut self, model: &MaskGan, data: &GanData<'_>) -> Result<(Option<f64>, Option<f64>, Vec<String>)> {
        let mut warnings = Vec::new();
        let mut val = None;
        if !data.valid.is_empty() {
            let valid: Vec<TokenSeq> = data.valid.iter().map(|x| self.window(x)).collect();
            let mode = PerplexityMode::Infill {
                rate: self.cfg.mask_rate,
                regime: self.cfg.mask_regime,
                seed: self.cfg.seed,
            };
            let (nll, count) = validation_nll(model, &valid, mode)?;
            if count > 0 {
                let loss = nll / count as f64;
                let ppl = math::exp(loss);
                warnings.extend(self.divergence.observe(ppl));
                if self.cfg.curriculum.enabled {
                    self.curriculum = curriculum_advance(self.curriculum.clone(), loss);
                }
                val = Some(ppl);
            }
        }
        let mut sample = None;
        if let Some(lm) = data.lm {
            if self.cfg.eval_samples > 0 && self.cfg.eval_length > 0 {
                let samples = unconditional_samples(model, self.cfg.eval_samples, self.cfg.eval_length, &mut self.eval_rng)?;
                sample = Some(sample_perplexity(&samples, lm)?.mean);
                if self.cfg.eval_length >= 4 {
                    warnings.extend(self.collapse.check(&samples)?);
                }
            }
        }
        Ok((val, sample, warnings))
    }
}

fn drive(trainer: &mut GanTrainer, model: &mut MaskGan, data: &GanData<'_>, hist: &mut GanHistory, last_good: &mut ParamStore) -> Result<()> {
    hist.dis_pretrain = trainer.pretrain_discriminator(model, data.train, trainer.cfg.dis_pretrain_steps)?;
    *last_good = model.store.clone();
    if trainer.cfg.eval_every > 0 {
        let (val, _, w) = trainer.evaluate(model, data)?;
        hist.initial_validation_ppl = val;
        hist.warnings.extend(w);
    }
    for _ in 0..trainer.cfg.iterations {
        let (m, w) = trainer.iteration(model, data)?;
        hist.iterations.push(m);
        hist.warnings.extend(w);
        *last_good = model.store.clone();
    }
    Ok(())
}

/// Adversarial training from a MaskMLE initialisation: discriminator
/// pretraining, then `iterations` rounds of `d_steps` discriminator updates
/// followed by one generator and one critic update.
///
/// Monitor findings are collected as warnings and never stop training. If
/// a step fails, `model` is reset to the parameters after the last
/// completed iteration and the error is returned, so the caller can still
/// save a usable checkpoint.
pub fn gan_train_loop(model: &mut MaskGan, data: &GanData<'_>, cfg: &GanConfig) -> Result<GanHistory> {
    if data.train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let corpus_max = data.train.iter().map(|x| x.len()).max().unwrap_or(0);
    let mut trainer = GanTrainer::new(model, cfg.clone(), corpus_max)?;
    let mut hist = GanHistory::default();
    let mut last_good = model.store.clone();
    if let Err(e) = drive(&mut trainer, model, data, &mut hist, &mut last_good) {
        model.store = last_good;
        return Err(e);
    }
    hist.totals = trainer.totals;
    Ok(hist)
}

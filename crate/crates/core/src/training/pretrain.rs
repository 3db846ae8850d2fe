use alloc::vec::Vec;

use super::steps::apply_update;
use crate::corpus::{BatchStream, TokenSeq};
use crate::error::{invalid, Error, Result};
use crate::masking::{apply_mask, Mask, MaskRegime, MaskedSeq};
use crate::models::{Conditioning, FillMode, MaskGan};
use crate::numerics::{AdamConfig, AdamState, Graph, NodeId, ParamId, DEFAULT_CLIP_NORM};

/// Maximum-likelihood pretraining settings, shared by both stages.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    /// Number of parameter updates.
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// In-fill stage only.
    pub mask_rate: f64,
    pub mask_regime: MaskRegime,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 16,
            learning_rate: 1e-3,
            clip_norm: DEFAULT_CLIP_NORM,
            adam_beta1: AdamConfig::default().beta1,
            adam_beta2: AdamConfig::default().beta2,
            mask_rate: 0.5,
            mask_regime: MaskRegime::Contiguous,
            seed: 42,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(invalid("clip norm must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(invalid("mask rate must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Summed next-token negative log-likelihood of `seq` with the generator
/// run as a plain language model.
pub fn lm_loss(g: &mut Graph, model: &MaskGan, seq: &[usize], p: f64, rng: &mut crate::Rng) -> Result<NodeId> {
    let x = TokenSeq::new(seq.to_vec());
    let ms = apply_mask(&x, &Mask::all_masked(seq.len()))?;
    let trace = model
        .generator
        .fill_graph(g, &model.store, &ms, FillMode::Teacher(seq), Conditioning::LanguageModel, p, rng)?;
    let terms: Vec<NodeId> = trace.log_probs.iter().flatten().copied().collect();
    let total = g.add_all(&terms)?;
    Ok(g.scale(total, -1.0))
}

/// Summed negative log-likelihood of the true tokens at blanked positions,
/// conditioned on `m(x)`. `None` when nothing is blanked.
pub fn infill_loss(g: &mut Graph, model: &MaskGan, ms: &MaskedSeq, p: f64, rng: &mut crate::Rng) -> Result<Option<NodeId>> {
    if ms.mask.masked_count() == 0 {
        return Ok(None);
    }
    let trace = model
        .generator
        .fill_graph(g, &model.store, ms, FillMode::Teacher(&ms.original), Conditioning::Attention, p, rng)?;
    let terms: Vec<NodeId> = trace.log_probs.iter().flatten().copied().collect();
    let total = g.add_all(&terms)?;
    Ok(Some(g.scale(total, -1.0)))
}

/// Shared minibatch loop: `build` returns a summed loss and its token count
/// per sequence; each step minimises the per-token mean.
fn run<F>(model: &mut MaskGan, corpus: &[TokenSeq], cfg: &PretrainConfig, params: &[ParamId], mut build: F) -> Result<Vec<f64>>
where
    F: FnMut(&MaskGan, &TokenSeq, &mut crate::Rng, &mut Graph) -> Result<Option<(NodeId, usize)>>,
{
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut opt = AdamState::new(AdamConfig::new(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2), &model.store, params)?;
    let mut stream = BatchStream::new(corpus, cfg.batch_size, cfg.seed.wrapping_add(1))?;
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut batches = Vec::new().into_iter();
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                batches = stream.epoch().into_iter();
                batches.next().ok_or(Error::Empty("training corpus"))?
            }
        };
        let mut built = Vec::with_capacity(batch.indices.len());
        let mut count = 0;
        for &i in &batch.indices {
            let mut g = Graph::training();
            if let Some((node, n)) = build(model, &corpus[i], &mut rng, &mut g)? {
                count += n;
                built.push((g, node));
            }
        }
        if count == 0 {
            curve.push(0.0);
            continue;
        }
        let norm = 1.0 / count as f64;
        let mut loss = 0.0;
        for (g, node) in built.iter_mut() {
            *node = g.scale(*node, norm);
            loss += g.scalar(*node);
        }
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        apply_update(&mut model.store, &mut opt, cfg.clip_norm, &built)?;
        curve.push(loss);
    }
    Ok(curve)
}

/// Teacher-forced language-model training of the generator decoder.
/// Returns the per-step mean token loss.
pub fn pretrain_lm(model: &mut MaskGan, corpus: &[TokenSeq], cfg: &PretrainConfig) -> Result<Vec<f64>> {
    let params = model.generator.lm_params();
    let p = model.config.dropout;
    run(model, corpus, cfg, &params, |m, seq, rng, g| {
        let node = lm_loss(g, m, seq, p, rng)?;
        Ok(Some((node, seq.len())))
    })
}

/// Maximum-likelihood in-filling: cross-entropy of the true tokens at
/// blanked positions. Steps whose batch has no blanked position leave the
/// parameters untouched and record a loss of 0.
pub fn pretrain_infill(model: &mut MaskGan, corpus: &[TokenSeq], cfg: &PretrainConfig) -> Result<Vec<f64>> {
    let params = model.generator_params();
    let p = model.config.dropout;
    let (rate, regime) = (cfg.mask_rate, cfg.mask_regime);
    run(model, corpus, cfg, &params, |m, seq, rng, g| {
        let mask = regime.sample(seq.len(), rate, rng)?;
        let ms = apply_mask(seq, &mask)?;
        Ok(infill_loss(g, m, &ms, p, rng)?.map(|n| (n, mask.masked_count())))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{validation_perplexity, PerplexityMode};
    use crate::models::ModelConfig;

    fn small(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            embed_dim: 8,
            hidden_dim: 12,
            layers: 1,
            dropout: 0.0,
            share_embeddings: true,
            suppress_specials: true,
        }
    }

    #[test]
    fn deterministic_corpus_reaches_perplexity_one() {
        let corpus: Vec<TokenSeq> = (0..8).map(|_| TokenSeq::new(alloc::vec![4, 5, 6])).collect();
        let mut m = MaskGan::new(small(7), 1).unwrap();
        let cfg = PretrainConfig {
            steps: 300,
            batch_size: 8,
            learning_rate: 1e-2,
            ..PretrainConfig::default()
        };
        pretrain_lm(&mut m, &corpus, &cfg).unwrap();
        let ppl = validation_perplexity(&m, &corpus, PerplexityMode::LanguageModel).unwrap();
        assert!((ppl - 1.0).abs() < 0.05, "perplexity {ppl}");
    }

    #[test]
    fn seeded_runs_repeat() {
        let corpus: Vec<TokenSeq> = (0..6).map(|i| TokenSeq::new(alloc::vec![4 + i % 3, 5, 4 + (i + 1) % 3])).collect();
        let cfg = PretrainConfig {
            steps: 5,
            batch_size: 4,
            ..PretrainConfig::default()
        };
        let run = || {
            let mut m = MaskGan::new(small(7), 3).unwrap();
            pretrain_lm(&mut m, &corpus, &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_rate_infill_is_a_no_op() {
        let corpus: Vec<TokenSeq> = (0..4).map(|_| TokenSeq::new(alloc::vec![4, 5, 6, 4])).collect();
        let mut m = MaskGan::new(small(7), 5).unwrap();
        let before = m.store.clone();
        let cfg = PretrainConfig {
            steps: 3,
            mask_rate: 0.0,
            ..PretrainConfig::default()
        };
        let curve = pretrain_infill(&mut m, &corpus, &cfg).unwrap();
        assert_eq!(curve, [0.0, 0.0, 0.0]);
        let ids: Vec<_> = m.store.ids().collect();
        assert_eq!(m.store.fingerprint(&ids), before.fingerprint(&ids));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let mut m = MaskGan::new(small(7), 5).unwrap();
        assert!(pretrain_lm(&mut m, &[], &PretrainConfig::default()).is_err());
    }
}

//! Generator, discriminator and critic.

mod discriminator;
mod generator;
mod trunk;

use alloc::vec::Vec;

pub use discriminator::{clamp_prob, DiscTrace, Discriminator, PROB_FLOOR};
pub use generator::{Conditioning, FillMode, FillTrace, Generator};
pub use trunk::{Encoded, Lstm, LstmLayer, LstmState, Trunk, TrunkDims};

use crate::corpus::TokenSeq;
use crate::error::{invalid, Result};
use crate::masking::MaskedSeq;
use crate::math;
use crate::numerics::{ParamId, ParamStore, Tensor};

/// Network sizes and structural switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    /// Per-step dropout probability used in training graphs.
    pub dropout: f64,
    /// Generator and discriminator use one embedding table.
    pub share_embeddings: bool,
    /// The generator never emits `<pad>` or `<m>`.
    pub suppress_specials: bool,
}

impl ModelConfig {
    /// Two layers of 64 units with 64-dimensional embeddings.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 64,
            hidden_dim: 64,
            layers: 2,
            dropout: 0.1,
            share_embeddings: true,
            suppress_specials: true,
        }
    }

    pub fn dims(&self) -> TrunkDims {
        TrunkDims {
            vocab: self.vocab_size,
            embed: self.embed_dim,
            hidden: self.hidden_dim,
            layers: self.layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= crate::corpus::EOS_ID {
            return Err(invalid("vocabulary must hold at least the <pad>, <m> and <eos> tokens"));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.layers == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// All three networks and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGan {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl MaskGan {
    /// Freshly initialised networks; parameter creation order is fixed so a
    /// seed determines every value.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::seeded_rng(seed);
        let mut store = ParamStore::new();
        let dims = config.dims();
        let scale = 1.0 / math::sqrt(dims.embed as f64);
        let gen_emb = store.insert("gen/embedding", Tensor::uniform(&[dims.vocab, dims.embed], scale, &mut rng))?;
        let generator = Generator::new(&mut store, dims, gen_emb, config.suppress_specials, &mut rng)?;
        let dis_emb = if config.share_embeddings {
            gen_emb
        } else {
            store.insert("dis/embedding", Tensor::uniform(&[dims.vocab, dims.embed], scale, &mut rng))?
        };
        let discriminator = Discriminator::new(&mut store, dims, dis_emb, &mut rng)?;
        Ok(Self {
            config,
            store,
            generator,
            discriminator,
        })
    }

    pub fn generator_params(&self) -> Vec<ParamId> {
        self.generator.params()
    }

    pub fn discriminator_params(&self) -> Vec<ParamId> {
        self.discriminator.discriminator_params()
    }

    pub fn critic_params(&self) -> Vec<ParamId> {
        self.discriminator.critic_params()
    }

    /// Loads language-model weights into the generator: the LM decoder
    /// initialises both encoder and decoder, and the context half of the
    /// output projection starts at zero so the initial in-filling model
    /// reproduces the LM's next-token distributions.
    pub fn init_from_lm(&mut self, lm: &MaskGan) -> Result<()> {
        if lm.config.dims() != self.config.dims() {
            return Err(invalid("language model dimensions differ from this model"));
        }
        let src = &lm.store;
        let (gl, gs) = (&lm.generator, &self.generator);
        let copy = |dst: &mut ParamStore, from: ParamId, to: ParamId| {
            let v = src.get(from).values().to_vec();
            dst.get_mut(to).values_mut().copy_from_slice(&v);
        };
        copy(&mut self.store, gl.trunk.embedding, gs.trunk.embedding);
        for (l_src, (l_enc, l_dec)) in gl
            .trunk
            .decoder
            .layers
            .iter()
            .zip(gs.trunk.encoder.layers.iter().zip(&gs.trunk.decoder.layers))
        {
            copy(&mut self.store, l_src.w, l_enc.w);
            copy(&mut self.store, l_src.b, l_enc.b);
            copy(&mut self.store, l_src.w, l_dec.w);
            copy(&mut self.store, l_src.b, l_dec.b);
        }
        copy(&mut self.store, gl.out_b, gs.out_b);
        copy(&mut self.store, gl.vocab_bias, gs.vocab_bias);
        let h = self.config.hidden_dim;
        let e = self.config.embed_dim;
        let lm_w = src.get(gl.out_w).values().to_vec();
        let w = self.store.get_mut(gs.out_w).values_mut();
        w[..h * e].copy_from_slice(&lm_w[..h * e]);
        w[h * e..].iter_mut().for_each(|x| *x = 0.0);
        Ok(())
    }
}

/// One in-filling episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub context: MaskedSeq,
    /// Composite sequence `x̃`: real tokens where kept, fills where blanked.
    pub filled: TokenSeq,
    /// `log G(x̂_t)` at blanked positions.
    pub log_probs: Vec<Option<f64>>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub baselines: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Generator distribution at blanked positions.
    pub distributions: Vec<Option<Vec<f64>>>,
    /// `log D` for every candidate token at blanked positions; filled only
    /// when full-vocabulary rewards are in use.
    pub candidate_rewards: Vec<Option<Vec<f64>>>,
}

impl Rollout {
    pub fn new(context: MaskedSeq, filled: TokenSeq, log_probs: Vec<Option<f64>>) -> Self {
        let n = filled.len();
        Self {
            context,
            filled,
            log_probs,
            rewards: alloc::vec![0.0; n],
            returns: alloc::vec![0.0; n],
            baselines: alloc::vec![0.0; n],
            advantages: alloc::vec![0.0; n],
            distributions: alloc::vec![None; n],
            candidate_rewards: alloc::vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.filled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filled.is_empty()
    }

    /// Fraction of blanked positions filled with the original token.
    pub fn fill_accuracy(&self) -> Option<f64> {
        let masked: Vec<usize> = self.context.mask.masked_positions().collect();
        if masked.is_empty() {
            return None;
        }
        let hits = masked.iter().filter(|&&t| self.filled[t] == self.context.original[t]).count();
        Some(hits as f64 / masked.len() as f64)
    }
}

use alloc::vec::Vec;

use super::trunk::{init_uniform, Encoded, LstmState, Trunk, TrunkDims};
use super::Rollout;
use crate::corpus::{sample_categorical, EOS_ID, MASK_ID, PAD_ID};
use crate::error::{invalid, Error, Result};
use crate::masking::MaskedSeq;
use crate::math;
use crate::numerics::{Graph, NodeId, ParamId, ParamStore, Tensor};

/// Logit offset for suppressed tokens; their probability underflows to 0.
const BLOCKED_LOGIT: f64 = -1e9;

/// How the decoder sees the masked context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Encoder over `m(x)` plus attention: the in-filling generator.
    Attention,
    /// Decoder alone with a zero context vector: the language model.
    LanguageModel,
}

/// Token choice at blanked positions.
#[derive(Debug, Clone, Copy)]
pub enum FillMode<'a> {
    Sample,
    Greedy,
    /// Feed and score the given tokens (teacher forcing).
    Teacher(&'a [usize]),
}

/// Seq2seq generator with tied embedding/softmax weights.
///
/// The decoder consumes the previous token of the composite sequence
/// (`<eos>` as the go symbol), attends over the encoder states of `m(x)`,
/// and projects `tanh([h; c]·W + b)` onto the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub trunk: Trunk,
    /// `2H × E`; the first `H` rows act on the decoder output, the rest on
    /// the attention context.
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub vocab_bias: ParamId,
    /// Additive logit offsets that rule out special tokens, if enabled.
    pub blocked: Option<Vec<f64>>,
}

/// Graph-level record of one in-filling pass.
#[derive(Debug, Clone)]
pub struct FillTrace {
    pub filled: Vec<usize>,
    /// `log G(x̂_t)` as a 1×1 node at blanked positions.
    pub log_probs: Vec<Option<NodeId>>,
    /// Full 1×V log-distribution at blanked positions.
    pub log_dists: Vec<Option<NodeId>>,
    /// Attention weights at blanked positions (attention mode only).
    pub attention: Vec<Option<NodeId>>,
}

impl Generator {
    pub fn new(store: &mut ParamStore, dims: TrunkDims, embedding: ParamId, suppress_specials: bool, rng: &mut crate::Rng) -> Result<Self> {
        let trunk = Trunk::new(store, "gen", dims, embedding, rng)?;
        let fan = 2 * dims.hidden;
        let out_w = init_uniform(store, "gen/out/w", &[fan, dims.embed], fan, rng)?;
        let out_b = init_uniform(store, "gen/out/b", &[dims.embed], fan, rng)?;
        let vocab_bias = store.insert("gen/out/vocab_bias", Tensor::zeros(&[dims.vocab]))?;
        Ok(Self {
            trunk,
            out_w,
            out_b,
            vocab_bias,
            blocked: suppress_specials.then(|| {
                let mut b = alloc::vec![0.0; dims.vocab];
                for id in [PAD_ID, MASK_ID] {
                    b[id] = BLOCKED_LOGIT;
                }
                b
            }),
        })
    }

    pub fn dims(&self) -> TrunkDims {
        self.trunk.dims
    }

    /// Every generator parameter, embedding table first.
    pub fn params(&self) -> Vec<ParamId> {
        let mut p = alloc::vec![self.trunk.embedding];
        p.extend(self.trunk.own_params());
        p.extend([self.out_w, self.out_b, self.vocab_bias]);
        p
    }

    /// Parameters used in language-model mode.
    pub fn lm_params(&self) -> Vec<ParamId> {
        let mut p = alloc::vec![self.trunk.embedding];
        p.extend(self.trunk.decoder.params());
        p.extend([self.out_w, self.out_b, self.vocab_bias]);
        p
    }

    /// Encoder states for the masked context.
    pub fn encode_context(&self, g: &mut Graph, store: &ParamStore, masked: &[usize], p: f64, rng: &mut crate::Rng) -> Result<Encoded> {
        self.trunk.encode(g, store, masked, p, rng)
    }

    /// Log-distribution over the vocabulary from the current decoder state.
    /// Returns `(log_dist, attention_weights)`.
    pub fn project(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        state: &LstmState,
        enc: Option<&Encoded>,
        p: f64,
        rng: &mut crate::Rng,
    ) -> Result<(NodeId, Option<NodeId>)> {
        let h = state.top();
        let (ctx, weights) = match enc {
            Some(enc) => {
                let (c, w) = self.trunk.attend(g, store, h, enc)?;
                (c, Some(w))
            }
            None => (g.zeros(1, self.trunk.dims.hidden), None),
        };
        let feat = g.concat_cols(&[h, ctx])?;
        let w = g.param(store, self.out_w);
        let b = g.param(store, self.out_b);
        let z = g.matmul(feat, w)?;
        let z = g.add(z, b)?;
        let ht = g.tanh(z);
        let ht = g.dropout(ht, p, rng)?;
        let emb = g.param(store, self.trunk.embedding);
        let logits = g.matmul_t(ht, emb)?;
        let vb = g.param(store, self.vocab_bias);
        let mut logits = g.add(logits, vb)?;
        if let Some(block) = &self.blocked {
            let c = g.constant(1, block.len(), block.clone())?;
            logits = g.add(logits, c)?;
        }
        Ok((g.log_softmax_rows(logits), weights))
    }

    /// One decoder step: consume `prev`, return the next-token
    /// log-distribution, the new state and the attention weights.
    #[allow(clippy::too_many_arguments)]
    pub fn decoder_step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        prev: usize,
        state: &LstmState,
        enc: Option<&Encoded>,
        p: f64,
        rng: &mut crate::Rng,
    ) -> Result<(NodeId, LstmState, Option<NodeId>)> {
        let x = self.trunk.embed(g, store, prev)?;
        let next = self.trunk.decoder.step(g, store, x, state, p, rng)?;
        let (dist, weights) = self.project(g, store, &next, enc, p, rng)?;
        Ok((dist, next, weights))
    }

    /// Auto-regressive in-filling recorded on `g`. Known tokens are fed
    /// forward at kept positions; blanked positions are sampled, decoded
    /// greedily, or teacher-forced according to `mode`.
    #[allow(clippy::too_many_arguments)]
    pub fn fill_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: &MaskedSeq,
        mode: FillMode<'_>,
        cond: Conditioning,
        p: f64,
        rng: &mut crate::Rng,
    ) -> Result<FillTrace> {
        let t_len = input.len();
        if let FillMode::Teacher(teacher) = mode {
            if teacher.len() != t_len {
                return Err(Error::Length {
                    expected: t_len,
                    actual: teacher.len(),
                });
            }
        }
        if t_len == 0 {
            return Err(Error::Empty("sequence to fill"));
        }
        let vocab = self.trunk.dims.vocab;
        let enc = match cond {
            Conditioning::Attention => Some(self.encode_context(g, store, &input.masked, p, rng)?),
            Conditioning::LanguageModel => None,
        };
        let mut state = LstmState::zeros(g, self.trunk.dims.layers, self.trunk.dims.hidden);
        let mut prev = EOS_ID;
        let mut trace = FillTrace {
            filled: Vec::with_capacity(t_len),
            log_probs: alloc::vec![None; t_len],
            log_dists: alloc::vec![None; t_len],
            attention: alloc::vec![None; t_len],
        };
        for t in 0..t_len {
            let x = self.trunk.embed(g, store, prev)?;
            state = self.trunk.decoder.step(g, store, x, &state, p, rng)?;
            let tok = if input.mask.is_masked(t) {
                let (dist, weights) = self.project(g, store, &state, enc.as_ref(), p, rng)?;
                let tok = match mode {
                    FillMode::Teacher(teacher) => teacher[t],
                    FillMode::Greedy => argmax(g.value(dist)),
                    FillMode::Sample => {
                        let probs: Vec<f64> = g.value(dist).iter().map(|l| math::exp(*l)).collect();
                        sample_categorical(&probs, rng)
                    }
                };
                if tok >= vocab {
                    return Err(invalid(alloc::format!("token {tok} outside vocabulary")));
                }
                trace.log_probs[t] = Some(g.pick(dist, 0, tok)?);
                trace.log_dists[t] = Some(dist);
                trace.attention[t] = weights;
                tok
            } else {
                input.original[t]
            };
            trace.filled.push(tok);
            prev = tok;
        }
        Ok(trace)
    }

    /// In-fills `input` in inference mode and returns the rollout (rewards,
    /// returns and baselines left at zero).
    pub fn generator_fill(
        &self,
        store: &ParamStore,
        input: &MaskedSeq,
        mode: FillMode<'_>,
        cond: Conditioning,
        rng: &mut crate::Rng,
    ) -> Result<Rollout> {
        let mut g = Graph::new();
        let trace = self.fill_graph(&mut g, store, input, mode, cond, 0.0, rng)?;
        let log_probs = trace.log_probs.iter().map(|n| n.map(|id| g.scalar(id))).collect();
        let mut r = Rollout::new(input.clone(), trace.filled.into(), log_probs);
        r.distributions = trace
            .log_dists
            .iter()
            .map(|n| n.map(|id| g.value(id).iter().map(|l| math::exp(*l)).collect()))
            .collect();
        Ok(r)
    }

    /// Teacher-forced log-likelihood of `seq` as a language model.
    pub fn lm_log_likelihood(&self, store: &ParamStore, seq: &[usize]) -> Result<f64> {
        let x = crate::corpus::TokenSeq::new(seq.to_vec());
        let ms = crate::masking::apply_mask(&x, &crate::masking::Mask::all_masked(seq.len()))?;
        let r = self.generator_fill(store, &ms, FillMode::Teacher(seq), Conditioning::LanguageModel, &mut crate::seeded_rng(0))?;
        Ok(r.log_probs.iter().flatten().sum())
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

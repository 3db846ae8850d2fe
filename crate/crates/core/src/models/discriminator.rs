use alloc::vec::Vec;

use super::trunk::{init_uniform, Encoded, LstmState, Trunk, TrunkDims};
use crate::error::{Error, Result};
use crate::masking::MaskedSeq;
use crate::math;
use crate::numerics::{Graph, NodeId, ParamId, ParamStore};

/// Lower/upper clamp applied to discriminator probabilities.
pub const PROB_FLOOR: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Per-token discriminator with a value head on the same trunk.
///
/// The decoder reads the composite sequence `x̃` while attending over the
/// encoder states of the true context `m(x)`. Writing `f_t` for the
/// attended decoder feature after consuming `x̃_1..x̃_t` (`f_0` before any
/// token), the discriminator logit at position `t` reads `f_t` and the
/// critic value reads `f_{t-1}`, so the baseline never sees the token it is
/// a baseline for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discriminator {
    pub trunk: Trunk,
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub critic_w: ParamId,
    pub critic_b: ParamId,
}

/// Graph-level discriminator outputs, one 1×1 node per position.
#[derive(Debug, Clone)]
pub struct DiscTrace {
    pub logits: Vec<NodeId>,
    pub values: Vec<NodeId>,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, dims: TrunkDims, embedding: ParamId, rng: &mut crate::Rng) -> Result<Self> {
        let trunk = Trunk::new(store, "dis", dims, embedding, rng)?;
        let fan = 2 * dims.hidden;
        let head_w = init_uniform(store, "dis/head/w", &[fan, 1], fan, rng)?;
        let head_b = init_uniform(store, "dis/head/b", &[1], fan, rng)?;
        let critic_w = init_uniform(store, "critic/head/w", &[fan, 1], fan, rng)?;
        let critic_b = init_uniform(store, "critic/head/b", &[1], fan, rng)?;
        Ok(Self {
            trunk,
            head_w,
            head_b,
            critic_w,
            critic_b,
        })
    }

    /// Shared trunk parameters (encoder, decoder, attention), without the
    /// embedding table.
    pub fn trunk_params(&self) -> Vec<ParamId> {
        self.trunk.own_params()
    }

    /// Parameters trained by the discriminator loss.
    pub fn discriminator_params(&self) -> Vec<ParamId> {
        let mut p = alloc::vec![self.trunk.embedding];
        p.extend(self.trunk_params());
        p.extend([self.head_w, self.head_b]);
        p
    }

    /// Parameters trained by the critic loss.
    pub fn critic_params(&self) -> Vec<ParamId> {
        let mut p = alloc::vec![self.trunk.embedding];
        p.extend(self.trunk_params());
        p.extend([self.critic_w, self.critic_b]);
        p
    }

    fn feature(&self, g: &mut Graph, store: &ParamStore, state: &LstmState, enc: &Encoded) -> Result<NodeId> {
        let h = state.top();
        let (ctx, _) = self.trunk.attend(g, store, h, enc)?;
        g.concat_cols(&[h, ctx])
    }

    fn head(g: &mut Graph, store: &ParamStore, feat: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let w = g.param(store, w);
        let b = g.param(store, b);
        let z = g.matmul(feat, w)?;
        g.add(z, b)
    }

    fn check(filled: &[usize], context: &MaskedSeq) -> Result<()> {
        if filled.len() != context.len() {
            return Err(Error::Length {
                expected: context.len(),
                actual: filled.len(),
            });
        }
        if filled.is_empty() {
            return Err(Error::Empty("sequence to score"));
        }
        Ok(())
    }

    /// Records discriminator logits and critic values for every position.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        filled: &[usize],
        context: &MaskedSeq,
        p: f64,
        rng: &mut crate::Rng,
    ) -> Result<DiscTrace> {
        Self::check(filled, context)?;
        let dims = self.trunk.dims;
        let enc = self.trunk.encode(g, store, &context.masked, p, rng)?;
        let mut state = LstmState::zeros(g, dims.layers, dims.hidden);
        let mut feat = self.feature(g, store, &state, &enc)?;
        let mut out = DiscTrace {
            logits: Vec::with_capacity(filled.len()),
            values: Vec::with_capacity(filled.len()),
        };
        for &tok in filled {
            let f_prev = g.dropout(feat, p, rng)?;
            out.values.push(Self::head(g, store, f_prev, self.critic_w, self.critic_b)?);
            let x = self.trunk.embed(g, store, tok)?;
            state = self.trunk.decoder.step(g, store, x, &state, p, rng)?;
            feat = self.feature(g, store, &state, &enc)?;
            let f_cur = g.dropout(feat, p, rng)?;
            out.logits.push(Self::head(g, store, f_cur, self.head_w, self.head_b)?);
        }
        Ok(out)
    }

    /// `P(x̃_t is real | x̃, m(x))` per position, clamped to
    /// `[1e-7, 1 − 1e-7]`.
    pub fn discriminator_score(&self, store: &ParamStore, filled: &[usize], context: &MaskedSeq) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let tr = self.forward(&mut g, store, filled, context, 0.0, &mut crate::seeded_rng(0))?;
        Ok(tr.logits.iter().map(|&l| clamp_prob(math::sigmoid(g.scalar(l)))).collect())
    }

    /// Critic baseline `b_t` per position.
    pub fn critic_values(&self, store: &ParamStore, filled: &[usize], context: &MaskedSeq) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let tr = self.forward(&mut g, store, filled, context, 0.0, &mut crate::seeded_rng(0))?;
        Ok(tr.values.iter().map(|&v| g.scalar(v)).collect())
    }

    /// Scores and baselines in one pass.
    pub fn score_and_values(&self, store: &ParamStore, filled: &[usize], context: &MaskedSeq) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let tr = self.forward(&mut g, store, filled, context, 0.0, &mut crate::seeded_rng(0))?;
        Ok((
            tr.logits.iter().map(|&l| clamp_prob(math::sigmoid(g.scalar(l)))).collect(),
            tr.values.iter().map(|&v| g.scalar(v)).collect(),
        ))
    }

    /// For every position in `positions`, the clamped probability that each
    /// vocabulary token would be judged real if substituted at that position
    /// after the prefix `filled[..t]`. Other positions yield `None`.
    pub fn candidate_scores(&self, store: &ParamStore, filled: &[usize], context: &MaskedSeq, positions: &[bool]) -> Result<Vec<Option<Vec<f64>>>> {
        Self::check(filled, context)?;
        if positions.len() != filled.len() {
            return Err(Error::Length {
                expected: filled.len(),
                actual: positions.len(),
            });
        }
        let dims = self.trunk.dims;
        let mut rng = crate::seeded_rng(0);
        let mut g = Graph::new();
        let enc = self.trunk.encode(&mut g, store, &context.masked, 0.0, &mut rng)?;
        let mut state = LstmState::zeros(&mut g, dims.layers, dims.hidden);
        let mut out = Vec::with_capacity(filled.len());
        for (t, &tok) in filled.iter().enumerate() {
            if positions[t] {
                let mut row = Vec::with_capacity(dims.vocab);
                for v in 0..dims.vocab {
                    let x = self.trunk.embed(&mut g, store, v)?;
                    let s = self.trunk.decoder.step(&mut g, store, x, &state, 0.0, &mut rng)?;
                    let f = self.feature(&mut g, store, &s, &enc)?;
                    let l = Self::head(&mut g, store, f, self.head_w, self.head_b)?;
                    row.push(clamp_prob(math::sigmoid(g.scalar(l))));
                }
                out.push(Some(row));
            } else {
                out.push(None);
            }
            let x = self.trunk.embed(&mut g, store, tok)?;
            state = self.trunk.decoder.step(&mut g, store, x, &state, 0.0, &mut rng)?;
        }
        Ok(out)
    }
}

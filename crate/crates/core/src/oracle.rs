//! Brute-force reference computations for instances small enough to
//! enumerate. Nothing here is used by training or evaluation; tests compare
//! the two.

use alloc::vec::Vec;

use crate::corpus::TokenSeq;
use crate::error::{invalid, Error, Result};
use crate::masking::{apply_mask, Mask, MaskedSeq};
use crate::math;
use crate::models::{Conditioning, FillMode, MaskGan};
use crate::numerics::Graph;

pub const MAX_ENV_VOCAB: usize = 6;
pub const MAX_ENV_HORIZON: usize = 4;
/// Upper bound on `V^T` for [`exact_seq_stats`].
pub const MAX_ENUMERATION: usize = 1_000_000;

/// A masked context and an explicit reward for every (sequence, position).
#[derive(Debug, Clone, PartialEq)]
pub struct EnumerableEnv {
    pub vocab: usize,
    pub context: MaskedSeq,
    /// `V^T · T` entries; sequence `s` (base-`V` digits, first position most
    /// significant) at position `t` lives at `index(s) · T + t`.
    pub rewards: Vec<f64>,
}

impl EnumerableEnv {
    pub fn new(vocab: usize, context: MaskedSeq, rewards: Vec<f64>) -> Result<Self> {
        let t = context.len();
        if vocab == 0 || vocab > MAX_ENV_VOCAB || t == 0 || t > MAX_ENV_HORIZON {
            return Err(Error::TooLarge(alloc::format!(
                "enumerable environments need 1 <= V <= {MAX_ENV_VOCAB} and 1 <= T <= {MAX_ENV_HORIZON}, got V = {vocab}, T = {t}"
            )));
        }
        let expected = vocab.pow(t as u32) * t;
        if rewards.len() != expected {
            return Err(Error::Length {
                expected,
                actual: rewards.len(),
            });
        }
        if context.original.iter().any(|&x| x >= vocab) {
            return Err(invalid("context token outside the environment vocabulary"));
        }
        Ok(Self { vocab, context, rewards })
    }

    /// Builds the reward table from `f(sequence, position)`.
    pub fn from_fn(vocab: usize, context: MaskedSeq, f: impl Fn(&[usize], usize) -> f64) -> Result<Self> {
        let t = context.len();
        if vocab == 0 || vocab > MAX_ENV_VOCAB || t == 0 || t > MAX_ENV_HORIZON {
            return Self::new(vocab, context, Vec::new());
        }
        let mut rewards = Vec::new();
        for i in 0..vocab.pow(t as u32) {
            let s = decode_index(i, vocab, t);
            for pos in 0..t {
                rewards.push(f(&s, pos));
            }
        }
        Self::new(vocab, context, rewards)
    }

    pub fn horizon(&self) -> usize {
        self.context.len()
    }

    pub fn index(&self, seq: &[usize]) -> usize {
        seq.iter().fold(0, |acc, &x| acc * self.vocab + x)
    }

    pub fn reward(&self, seq: &[usize], t: usize) -> f64 {
        self.rewards[self.index(seq) * self.horizon() + t]
    }

    pub fn rewards_for(&self, seq: &[usize]) -> Vec<f64> {
        (0..self.horizon()).map(|t| self.reward(seq, t)).collect()
    }

    /// Every sequence that agrees with the context at kept positions.
    pub fn completions(&self) -> Vec<Vec<usize>> {
        let t = self.horizon();
        (0..self.vocab.pow(t as u32))
            .map(|i| decode_index(i, self.vocab, t))
            .filter(|s| (0..t).all(|p| self.context.mask.is_masked(p) || s[p] == self.context.original[p]))
            .collect()
    }
}

fn decode_index(mut i: usize, vocab: usize, len: usize) -> Vec<usize> {
    let mut s = alloc::vec![0; len];
    for p in (0..len).rev() {
        s[p] = i % vocab;
        i /= vocab;
    }
    s
}

/// `R_t = Σ_{s=t}^{T} γ^{s−t} r_s` by direct double summation.
pub fn exact_returns(r: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.len());
    for t in 0..r.len() {
        let mut total = 0.0;
        for s in t..r.len() {
            total += math::powi(gamma, (s - t) as i32) * r[s];
        }
        out.push(total);
    }
    out
}

fn check_env(model: &MaskGan, env: &EnumerableEnv) -> Result<()> {
    if model.config.vocab_size != env.vocab {
        return Err(invalid(alloc::format!(
            "model vocabulary {} differs from environment vocabulary {}",
            model.config.vocab_size,
            env.vocab
        )));
    }
    if env.vocab > MAX_ENV_VOCAB || env.horizon() > MAX_ENV_HORIZON {
        return Err(Error::TooLarge("environment too large to enumerate".into()));
    }
    Ok(())
}

/// Per-sequence probability and, per blanked position, the gradient of
/// `log G(x_t)` over the generator parameters.
fn score_sequence(model: &MaskGan, env: &EnumerableEnv, seq: &[usize]) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
    let ids = model.generator_params();
    let mut g = Graph::new();
    let trace = model.generator.fill_graph(
        &mut g,
        &model.store,
        &env.context,
        FillMode::Teacher(seq),
        Conditioning::Attention,
        0.0,
        &mut crate::seeded_rng(0),
    )?;
    let mut logp = 0.0;
    let mut grads = Vec::with_capacity(seq.len());
    for lp in &trace.log_probs {
        match lp {
            Some(node) => {
                logp += g.scalar(*node);
                grads.push(Some(g.gradients(*node)?.flatten(&model.store, &ids)));
            }
            None => grads.push(None),
        }
    }
    Ok((math::exp(logp), grads))
}

/// Exact `∇_θ E[Σ_t R_t log G(x̂_t)]`-style policy gradient
/// `Σ_x P(x) Σ_t R_t(x) ∇ log G(x_t)` over blanked positions, by
/// enumerating every in-filling. Flattened over
/// [`MaskGan::generator_params`].
pub fn exact_policy_gradient(model: &MaskGan, env: &EnumerableEnv, gamma: f64) -> Result<Vec<f64>> {
    exact_policy_gradient_with_baseline(model, env, gamma, |_, _| 0.0)
}

/// As [`exact_policy_gradient`] with `R_t − b(x_{<t}, t)` in place of
/// `R_t`; `b` sees only the prefix before position `t`.
pub fn exact_policy_gradient_with_baseline(model: &MaskGan, env: &EnumerableEnv, gamma: f64, b: impl Fn(&[usize], usize) -> f64) -> Result<Vec<f64>> {
    check_env(model, env)?;
    let n: usize = model.generator_params().iter().map(|&i| model.store.get(i).len()).sum();
    let mut total = alloc::vec![0.0; n];
    for seq in env.completions() {
        let (p, grads) = score_sequence(model, env, &seq)?;
        let ret = exact_returns(&env.rewards_for(&seq), gamma);
        for (t, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let w = p * (ret[t] - b(&seq[..t], t));
            for (acc, gi) in total.iter_mut().zip(grad) {
                *acc += w * gi;
            }
        }
    }
    Ok(total)
}

/// `E[R_t | x_{<t} = prefix]` under the generator, by enumeration.
pub fn exact_value(model: &MaskGan, env: &EnumerableEnv, gamma: f64, prefix: &[usize]) -> Result<f64> {
    check_env(model, env)?;
    let t = prefix.len();
    if t >= env.horizon() {
        return Err(invalid("prefix must be shorter than the horizon"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for seq in env.completions() {
        if seq[..t] != *prefix {
            continue;
        }
        let (p, _) = score_sequence(model, env, &seq)?;
        num += p * exact_returns(&env.rewards_for(&seq), gamma)[t];
        den += p;
    }
    if den == 0.0 {
        return Err(invalid("prefix has zero probability"));
    }
    Ok(num / den)
}

/// Exact statistics of the generator run as a language model over every
/// sequence of one length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqStats {
    /// `−Σ P log P` in nats over whole sequences.
    pub entropy: f64,
    /// `exp(entropy / T)`.
    pub perplexity: f64,
    /// `Σ P`; 1 up to rounding.
    pub total_prob: f64,
}

pub fn exact_seq_stats(model: &MaskGan, len: usize) -> Result<SeqStats> {
    let v = model.config.vocab_size;
    let count = u32::try_from(len)
        .ok()
        .and_then(|l| v.checked_pow(l))
        .filter(|&c| c <= MAX_ENUMERATION)
        .ok_or_else(|| Error::TooLarge(alloc::format!("{v}^{len} sequences exceed {MAX_ENUMERATION}")))?;
    if len == 0 {
        return Err(Error::Empty("sequence length"));
    }
    let (mut entropy, mut total) = (0.0, 0.0);
    for i in 0..count {
        let seq = decode_index(i, v, len);
        let x = TokenSeq::new(seq.clone());
        let ms = apply_mask(&x, &Mask::all_masked(len))?;
        let mut g = Graph::new();
        let trace = model.generator.fill_graph(
            &mut g,
            &model.store,
            &ms,
            FillMode::Teacher(&seq),
            Conditioning::LanguageModel,
            0.0,
            &mut crate::seeded_rng(0),
        )?;
        let logp: f64 = trace.log_probs.iter().flatten().map(|&n| g.scalar(n)).sum();
        let p = math::exp(logp);
        if p > 0.0 {
            entropy -= p * logp;
        }
        total += p;
    }
    Ok(SeqStats {
        entropy,
        perplexity: math::exp(entropy / len as f64),
        total_prob: total,
    })
}

/// `(distinct, total)` n-gram counts by nested loops. n-grams containing a
/// token from `skip` are ignored; n-grams never span samples.
pub fn brute_ngram(samples: &[TokenSeq], n: usize, skip: &[usize]) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let mut seen: Vec<&[usize]> = Vec::new();
    let mut total = 0;
    for s in samples {
        if s.len() < n {
            continue;
        }
        for start in 0..=(s.len() - n) {
            let gram = &s[start..start + n];
            let mut bad = false;
            for tok in gram {
                for sk in skip {
                    if tok == sk {
                        bad = true;
                    }
                }
            }
            if bad {
                continue;
            }
            total += 1;
            let mut dup = false;
            for prev in &seen {
                let mut same = true;
                for k in 0..n {
                    if prev[k] != gram[k] {
                        same = false;
                    }
                }
                if same {
                    dup = true;
                }
            }
            if !dup {
                seen.push(gram);
            }
        }
    }
    (seen.len(), total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;

    fn tiny(vocab: usize) -> MaskGan {
        MaskGan::new(
            ModelConfig {
                vocab_size: vocab,
                embed_dim: 2,
                hidden_dim: 2,
                layers: 1,
                dropout: 0.0,
                share_embeddings: true,
                suppress_specials: false,
            },
            4,
        )
        .unwrap()
    }

    fn masked(len: usize) -> MaskedSeq {
        apply_mask(&TokenSeq::new(alloc::vec![0; len]), &Mask::all_masked(len)).unwrap()
    }

    #[test]
    fn returns_examples() {
        assert_eq!(exact_returns(&[1.0, 1.0, 1.0], 1.0), [3.0, 2.0, 1.0]);
        assert!(exact_returns(&[], 0.5).is_empty());
        assert_eq!(exact_returns(&[0.0, -1.0, 2.0], 0.5), [0.0, 0.0, 2.0]);
    }

    #[test]
    fn constant_rewards_give_zero_gradient() {
        let m = tiny(3);
        let env = EnumerableEnv::from_fn(3, masked(2), |_, _| 1.5).unwrap();
        let g = exact_policy_gradient(&m, &env, 0.9).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12), "{g:?}");
    }

    #[test]
    fn bandit_closed_form() {
        // Zero embeddings leave the logits equal to the vocabulary bias;
        // a very negative bias on token 2 reduces the choice to two actions.
        let mut m = tiny(3);
        m.store
            .get_mut(m.generator.trunk.embedding)
            .values_mut()
            .iter_mut()
            .for_each(|x| *x = 0.0);
        m.store.get_mut(m.generator.vocab_bias).values_mut()[2] = -1e3;
        let env = EnumerableEnv::from_fn(3, masked(1), |s, _| if s[0] == 0 { 1.0 } else { 0.0 }).unwrap();
        let g = exact_policy_gradient(&m, &env, 1.0).unwrap();
        let ids = m.generator_params();
        let offset: usize = ids
            .iter()
            .take_while(|&&i| i != m.generator.vocab_bias)
            .map(|&i| m.store.get(i).len())
            .sum();
        assert!((g[offset] - 0.25).abs() < 1e-12, "{}", g[offset]);
        assert!((g[offset + 1] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn baseline_leaves_exact_gradient_unchanged() {
        let m = tiny(3);
        let env = EnumerableEnv::from_fn(3, masked(2), |s, t| (s[0] * 3 + s[1]) as f64 * 0.3 - t as f64).unwrap();
        let plain = exact_policy_gradient(&m, &env, 0.9).unwrap();
        let with = exact_policy_gradient_with_baseline(&m, &env, 0.9, |p, t| 2.0 + p.iter().sum::<usize>() as f64 - t as f64).unwrap();
        for (a, b) in plain.iter().zip(&with) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn oversized_inputs_are_rejected() {
        assert!(EnumerableEnv::from_fn(7, masked(2), |_, _| 0.0).is_err());
        assert!(EnumerableEnv::from_fn(3, masked(5), |_, _| 0.0).is_err());
        assert!(EnumerableEnv::new(3, masked(2), alloc::vec![0.0; 5]).is_err());
        let m = MaskGan::new(ModelConfig::desk(40), 0).unwrap();
        assert!(exact_seq_stats(&m, 4).is_err());
        let env = EnumerableEnv::from_fn(3, masked(2), |_, _| 0.0).unwrap();
        assert!(exact_policy_gradient(&tiny(4), &env, 0.5).is_err());
    }

    #[test]
    fn uniform_model_entropy() {
        let mut m = tiny(4);
        m.store
            .get_mut(m.generator.trunk.embedding)
            .values_mut()
            .iter_mut()
            .for_each(|x| *x = 0.0);
        let s = exact_seq_stats(&m, 3).unwrap();
        assert!((s.entropy - 3.0 * math::ln(4.0)).abs() < 1e-9);
        assert!((s.perplexity - 4.0).abs() < 1e-9);
        assert!((s.total_prob - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_model_entropy() {
        let mut m = tiny(3);
        m.store
            .get_mut(m.generator.trunk.embedding)
            .values_mut()
            .iter_mut()
            .for_each(|x| *x = 0.0);
        m.store
            .get_mut(m.generator.vocab_bias)
            .values_mut()
            .copy_from_slice(&[60.0, -60.0, -60.0]);
        let s = exact_seq_stats(&m, 2).unwrap();
        assert!(s.entropy.abs() < 1e-9);
        assert!((s.perplexity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ngram_examples() {
        let abab = [TokenSeq::new(alloc::vec![4, 5, 4, 5])];
        assert_eq!(brute_ngram(&abab, 2, &[]), (2, 3));
        let short = [TokenSeq::new(alloc::vec![4])];
        assert_eq!(brute_ngram(&short, 2, &[]), (0, 0));
    }
}

use alloc::vec::Vec;

use super::{advantages, compute_rewards, discounted_returns, GanConfig, RewardScope};
use crate::corpus::TokenSeq;
use crate::error::{invalid, Error, Result};
use crate::masking::{apply_mask, MaskRegime};
use crate::math;
use crate::models::{Conditioning, Discriminator, FillMode, Generator, MaskGan, Rollout};
use crate::numerics::{AdamState, Graph, NodeId, ParamStore};

/// Largest vocabulary for which every candidate token is scored.
pub const FULL_VOCAB_LIMIT: usize = 64;

/// Zeroes the optimizer's gradients, back-propagates every loss, clips and
/// takes one Adam step.
pub(crate) fn apply_update(store: &mut ParamStore, opt: &mut AdamState, clip: f64, losses: &[(Graph, NodeId)]) -> Result<()> {
    let params = opt.params().to_vec();
    store.zero_grad_of(&params);
    for (g, loss) in losses {
        g.backward(*loss, store)?;
    }
    store.clip_grad_norm(&params, clip);
    opt.step(store)
}

/// Masks each sequence and samples an in-filling for it.
pub fn sample_rollouts(model: &MaskGan, batch: &[TokenSeq], rate: f64, regime: MaskRegime, rng: &mut crate::Rng) -> Result<Vec<Rollout>> {
    batch
        .iter()
        .map(|x| {
            let mask = regime.sample(x.len(), rate, rng)?;
            let ms = apply_mask(x, &mask)?;
            model
                .generator
                .generator_fill(&model.store, &ms, FillMode::Sample, Conditioning::Attention, rng)
        })
        .collect()
}

/// `log D(v)` for every token `v` substituted at each blanked position of
/// the rollout, after the prefix of the composite sequence.
pub fn full_vocab_rewards(model: &MaskGan, rollout: &Rollout) -> Result<Vec<Option<Vec<f64>>>> {
    let v = model.config.vocab_size;
    if v > FULL_VOCAB_LIMIT {
        return Err(invalid(alloc::format!(
            "full-vocabulary rewards need vocab <= {FULL_VOCAB_LIMIT} (got {v}); use sampled rewards instead"
        )));
    }
    let positions: Vec<bool> = (0..rollout.len()).map(|t| rollout.context.mask.is_masked(t)).collect();
    let scores = model
        .discriminator
        .candidate_scores(&model.store, &rollout.filled, &rollout.context, &positions)?;
    Ok(scores.into_iter().map(|row| row.map(|r| r.into_iter().map(math::ln).collect())).collect())
}

/// `Σ_v G(v)·r(v)`.
pub fn expected_reward(dist: &[f64], rewards: &[f64]) -> Result<f64> {
    if dist.len() != rewards.len() {
        return Err(Error::Length {
            expected: dist.len(),
            actual: rewards.len(),
        });
    }
    Ok(dist.iter().zip(rewards).map(|(p, r)| p * r).sum())
}

/// Fills in rewards, returns, baselines and advantages of a sampled
/// rollout using the current discriminator and critic.
///
/// With full-vocabulary rewards, the reward at a blanked position is the
/// expectation of `log D` under the generator's distribution there, and the
/// per-candidate rewards are kept on the rollout for the generator update.
pub fn score_rollout(model: &MaskGan, rollout: &mut Rollout, cfg: &GanConfig) -> Result<()> {
    let (scores, values) = model.discriminator.score_and_values(&model.store, &rollout.filled, &rollout.context)?;
    let mut rewards = compute_rewards(&scores, &rollout.context.mask, cfg.reward_scope)?;
    if cfg.full_vocab_rewards {
        let cand = full_vocab_rewards(model, rollout)?;
        for (t, row) in cand.iter().enumerate() {
            if let (Some(r), Some(p)) = (row, &rollout.distributions[t]) {
                rewards[t] = expected_reward(p, r)?;
            }
        }
        rollout.candidate_rewards = cand;
    }
    rollout.returns = discounted_returns(&rewards, cfg.gamma);
    rollout.rewards = rewards;
    rollout.baselines = if cfg.use_critic { values } else { alloc::vec![0.0; rollout.len()] };
    rollout.advantages = advantages(&rollout.returns, &rollout.baselines)?;
    Ok(())
}

/// Negated generator surrogate for one rollout:
/// `−Σ_t A_t·log G(x̂_t)` over blanked positions, with advantages held
/// constant. Where candidate rewards are present the exact term
/// `−Σ_v G(v)·r_t(v)` is added. The sampled tokens are replayed with
/// teacher forcing and no dropout, so the log-probabilities are those of the
/// sampling distribution. `None` when nothing is blanked.
pub fn generator_surrogate_loss(g: &mut Graph, store: &ParamStore, gen: &Generator, rollout: &Rollout) -> Result<Option<NodeId>> {
    let mut rng = crate::seeded_rng(0);
    let trace = gen.fill_graph(
        g,
        store,
        &rollout.context,
        FillMode::Teacher(&rollout.filled),
        Conditioning::Attention,
        0.0,
        &mut rng,
    )?;
    let mut terms = Vec::new();
    for t in 0..rollout.len() {
        let (Some(lp), Some(dist)) = (trace.log_probs[t], trace.log_dists[t]) else {
            continue;
        };
        let a = rollout.advantages[t];
        if !a.is_finite() {
            return Err(Error::NonFinite(alloc::format!("advantage at position {t}")));
        }
        terms.push(g.scale(lp, -a));
        if let Some(r) = &rollout.candidate_rewards[t] {
            let probs = g.softmax_rows(dist);
            let col = g.constant(r.len(), 1, r.clone())?;
            let e = g.matmul(probs, col)?;
            terms.push(g.scale(e, -1.0));
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    g.add_all(&terms).map(Some)
}

/// Ascent direction `Σ_t A_t ∇ log G(x̂_t)` (plus the exact candidate term
/// when present) over [`MaskGan::generator_params`], flattened.
pub fn policy_gradient(model: &MaskGan, rollout: &Rollout) -> Result<Vec<f64>> {
    let ids = model.generator_params();
    let mut g = Graph::new();
    match generator_surrogate_loss(&mut g, &model.store, &model.generator, rollout)? {
        Some(loss) => Ok(g.gradients(loss)?.flatten(&model.store, &ids).into_iter().map(|x| -x).collect()),
        None => Ok(alloc::vec![0.0; ids.iter().map(|&i| model.store.get(i).len()).sum()]),
    }
}

/// One policy-gradient update of the generator on scored rollouts. Returns
/// the surrogate objective averaged over rollouts.
pub fn generator_pg_step(model: &mut MaskGan, opt: &mut AdamState, rollouts: &[Rollout], clip: f64) -> Result<f64> {
    if rollouts.is_empty() {
        return Err(Error::Empty("rollout batch"));
    }
    let norm = 1.0 / rollouts.len() as f64;
    let mut built = Vec::with_capacity(rollouts.len());
    let mut objective = 0.0;
    for r in rollouts {
        let mut g = Graph::new();
        if let Some(loss) = generator_surrogate_loss(&mut g, &model.store, &model.generator, r)? {
            let loss = g.scale(loss, norm);
            objective -= g.scalar(loss);
            built.push((g, loss));
        }
    }
    if built.is_empty() {
        return Ok(0.0);
    }
    apply_update(&mut model.store, opt, clip, &built)?;
    Ok(objective)
}

/// Binary cross-entropy of the discriminator on a real/fake pair: the real
/// sequence is labelled real everywhere; the in-filled one is labelled fake
/// at blanked positions and real elsewhere. Returns the summed loss, the
/// number of scored positions and the number classified correctly.
pub fn discriminator_loss(
    g: &mut Graph,
    store: &ParamStore,
    dis: &Discriminator,
    rollout: &Rollout,
    p: f64,
    rng: &mut crate::Rng,
) -> Result<(NodeId, usize, usize)> {
    let real = dis.forward(g, store, &rollout.context.original, &rollout.context, p, rng)?;
    let fake = dis.forward(g, store, &rollout.filled, &rollout.context, p, rng)?;
    let mut terms = Vec::with_capacity(2 * rollout.len());
    let mut correct = 0;
    for (t, (&lr, &lf)) in real.logits.iter().zip(&fake.logits).enumerate() {
        terms.push(g.log_sigmoid(lr));
        correct += usize::from(g.scalar(lr) > 0.0);
        if rollout.context.mask.is_masked(t) {
            let neg = g.scale(lf, -1.0);
            terms.push(g.log_sigmoid(neg));
            correct += usize::from(g.scalar(lf) <= 0.0);
        } else {
            terms.push(g.log_sigmoid(lf));
            correct += usize::from(g.scalar(lf) > 0.0);
        }
    }
    let n = terms.len();
    let total = g.add_all(&terms)?;
    Ok((g.scale(total, -1.0), n, correct))
}

/// Outcome of one discriminator update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscStepStats {
    /// Mean per-position cross-entropy before the update.
    pub loss: f64,
    /// Fraction of positions classified correctly before the update.
    pub accuracy: f64,
}

/// One discriminator update on the real sequences and in-fillings of
/// `rollouts`, minimising the mean per-position cross-entropy.
pub fn discriminator_step(model: &mut MaskGan, opt: &mut AdamState, rollouts: &[Rollout], clip: f64, rng: &mut crate::Rng) -> Result<DiscStepStats> {
    if rollouts.is_empty() {
        return Err(Error::Empty("rollout batch"));
    }
    let p = model.config.dropout;
    let mut built = Vec::with_capacity(rollouts.len());
    let (mut count, mut correct) = (0, 0);
    for r in rollouts {
        let mut g = Graph::training();
        let (loss, n, c) = discriminator_loss(&mut g, &model.store, &model.discriminator, r, p, rng)?;
        count += n;
        correct += c;
        built.push((g, loss));
    }
    let norm = 1.0 / count as f64;
    let mut loss = 0.0;
    for (g, node) in built.iter_mut() {
        *node = g.scale(*node, norm);
        loss += g.scalar(*node);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("discriminator loss".into()));
    }
    apply_update(&mut model.store, opt, clip, &built)?;
    Ok(DiscStepStats {
        loss,
        accuracy: correct as f64 / count as f64,
    })
}

/// Summed squared error `Σ_t (b_t − R_t)²` of the critic over in-scope
/// positions, with the number of such positions. `None` if there are none.
pub fn critic_loss(
    g: &mut Graph,
    store: &ParamStore,
    dis: &Discriminator,
    rollout: &Rollout,
    scope: RewardScope,
    p: f64,
    rng: &mut crate::Rng,
) -> Result<Option<(NodeId, usize)>> {
    let tr = dis.forward(g, store, &rollout.filled, &rollout.context, p, rng)?;
    let mut terms = Vec::new();
    for (t, &v) in tr.values.iter().enumerate() {
        if !scope.in_scope(&rollout.context.mask, t) {
            continue;
        }
        let target = g.scalar_const(rollout.returns[t]);
        let d = g.sub(v, target)?;
        terms.push(g.mul(d, d)?);
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let n = terms.len();
    Ok(Some((g.add_all(&terms)?, n)))
}

/// One critic regression step towards the returns stored on `rollouts`.
/// Returns the mean squared error before the update, or `None` (and no
/// update) when no position is in scope.
pub fn critic_step(
    model: &mut MaskGan,
    opt: &mut AdamState,
    rollouts: &[Rollout],
    scope: RewardScope,
    clip: f64,
    rng: &mut crate::Rng,
) -> Result<Option<f64>> {
    let p = model.config.dropout;
    let mut built = Vec::with_capacity(rollouts.len());
    let mut count = 0;
    for r in rollouts {
        let mut g = Graph::training();
        if let Some((loss, n)) = critic_loss(&mut g, &model.store, &model.discriminator, r, scope, p, rng)? {
            count += n;
            built.push((g, loss));
        }
    }
    if count == 0 {
        return Ok(None);
    }
    let norm = 1.0 / count as f64;
    let mut mse = 0.0;
    for (g, node) in built.iter_mut() {
        *node = g.scale(*node, norm);
        mse += g.scalar(*node);
    }
    if !mse.is_finite() {
        return Err(Error::NonFinite("critic loss".into()));
    }
    apply_update(&mut model.store, opt, clip, &built)?;
    Ok(Some(mse))
}

use alloc::vec::Vec;

use super::RewardScope;
use crate::error::{invalid, Error, Result};
use crate::masking::Mask;
use crate::math;

/// Per-position rewards `r_t = log D_t` inside `scope`, zero elsewhere.
pub fn compute_rewards(scores: &[f64], mask: &Mask, scope: RewardScope) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(Error::Length {
            expected: mask.len(),
            actual: scores.len(),
        });
    }
    scores
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            if !(s > 0.0 && s < 1.0) {
                return Err(invalid(alloc::format!("discriminator score {s} at position {t} is outside (0, 1)")));
            }
            Ok(if scope.in_scope(mask, t) { math::ln(s) } else { 0.0 })
        })
        .collect()
}

/// `R_t = Σ_{s≥t} γ^{s−t} r_s`, computed by the recursion
/// `R_t = r_t + γ·R_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `R_t − b_t`; errors if any advantage is not finite.
pub fn advantages(returns: &[f64], baselines: &[f64]) -> Result<Vec<f64>> {
    if returns.len() != baselines.len() {
        return Err(Error::Length {
            expected: returns.len(),
            actual: baselines.len(),
        });
    }
    returns
        .iter()
        .zip(baselines)
        .enumerate()
        .map(|(t, (r, b))| {
            let a = r - b;
            if a.is_finite() {
                Ok(a)
            } else {
                Err(Error::NonFinite(alloc::format!("advantage at position {t}")))
            }
        })
        .collect()
}

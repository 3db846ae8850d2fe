//! Synthetic corpora written as text files.

use std::path::Path;

use maskgan_core::corpus::{gen_alphabet_task, gen_markov_corpus, SyntheticTaskSpec, TaskKind, TokenSeq};
use maskgan_core::seeded_rng;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::io::{render_samples, write_text};

/// A chain over `states` tokens in which every state moves to `fanout`
/// random successors with random weights.
pub fn sparse_chain(states: usize, fanout: usize, length: usize, seed: u64) -> SyntheticTaskSpec {
    let mut rng = seeded_rng(seed);
    let fanout = fanout.clamp(1, states.max(1));
    let mut transition = vec![0.0; states * states];
    let all: Vec<usize> = (0..states).collect();
    for row in transition.chunks_mut(states) {
        let picks: Vec<usize> = all.choose_multiple(&mut rng, fanout).copied().collect();
        let w: Vec<f64> = picks.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (&j, wj) in picks.iter().zip(&w) {
            row[j] = wj / total;
        }
    }
    let initial = vec![1.0 / states as f64; states];
    SyntheticTaskSpec::markov(transition, initial, length)
}

pub fn generate(spec: &SyntheticTaskSpec, n: usize, seed: u64) -> Result<Vec<TokenSeq>> {
    Ok(match spec.kind {
        TaskKind::AlphabetOrder => gen_alphabet_task(spec, n, seed)?,
        TaskKind::MarkovChain { .. } => gen_markov_corpus(spec, n, seed)?,
    })
}

/// Writes `train.txt` and `valid.txt` under `dir` from disjoint seeds.
pub fn write_corpus(dir: &Path, spec: &SyntheticTaskSpec, train: usize, valid: usize, seed: u64) -> Result<()> {
    let vocab = spec.vocab()?;
    std::fs::create_dir_all(dir).map_err(crate::error::io_err(dir))?;
    write_text(&dir.join("train.txt"), &render_samples(&generate(spec, train, seed)?, &vocab))?;
    write_text(&dir.join("valid.txt"), &render_samples(&generate(spec, valid, seed ^ 0x7a11d)?, &vocab))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_rows_are_distributions_with_given_fanout() {
        let spec = sparse_chain(6, 3, 10, 1);
        spec.validate().unwrap();
        let TaskKind::MarkovChain { transition, .. } = &spec.kind else {
            unreachable!()
        };
        for row in transition.chunks(6) {
            assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 3);
        }
    }
}

//! Vocabulary, encoding, synthetic corpora and batching.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::{Deref, RangeInclusive};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::math;

pub const PAD_ID: usize = 0;
pub const MASK_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
/// First id available to content tokens.
pub const FIRST_CONTENT_ID: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const MASK_TOKEN: &str = "<m>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, MASK_TOKEN, EOS_TOKEN, UNK_TOKEN];

/// Bijective token ↔ id map. Ids 0..3 are pad, mask, eos, unk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from content tokens, prepending the four specials.
    /// Duplicates and special-token strings among `content` are errors.
    pub fn from_content<S: AsRef<str>>(content: &[S]) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(content.iter().map(|s| s.as_ref().to_string()));
        Self::from_tokens(tokens)
    }

    /// Builds a vocabulary from its full token list (id = position). The
    /// first four entries must be the special tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 5 {
            return Err(invalid("vocabulary needs the four specials and at least one content token"));
        }
        if tokens.iter().take(4).map(String::as_str).ne(SPECIALS.iter().copied()) {
            return Err(invalid("ids 0..3 must be <pad>, <m>, <eos>, <unk>"));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(invalid(alloc::format!("token {t:?} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(invalid(alloc::format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Number of non-special tokens.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - FIRST_CONTENT_ID
    }
}

/// Frequency-ranked vocabulary of at most `max_size` entries (specials
/// included). Ties are broken lexicographically.
pub fn build_vocab(corpus: &str, max_size: usize) -> Result<Vocab> {
    if max_size < 5 {
        return Err(invalid(alloc::format!("max_size {max_size} < 5")));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tok in corpus.split_whitespace() {
        if SPECIALS.contains(&tok) {
            continue;
        }
        *counts.entry(tok).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is already lexicographic, so a stable sort keeps ties ordered.
    ranked.sort_by_key(|&(_, c)| core::cmp::Reverse(c));
    let content: Vec<&str> = ranked.into_iter().take(max_size - FIRST_CONTENT_ID).map(|(t, _)| t).collect();
    Vocab::from_content(&content)
}

/// A sequence of token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TokenSeq(pub Vec<usize>);

impl TokenSeq {
    pub fn new(ids: Vec<usize>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    /// Checks every id against the vocabulary and the length bound.
    pub fn validate(&self, vocab_size: usize, max_len: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        if self.0.len() > max_len {
            return Err(invalid(alloc::format!("sequence length {} exceeds {max_len}", self.0.len())));
        }
        if let Some(bad) = self.0.iter().find(|&&i| i >= vocab_size) {
            return Err(invalid(alloc::format!("token id {bad} outside vocabulary of {vocab_size}")));
        }
        Ok(())
    }
}

impl Deref for TokenSeq {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for TokenSeq {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Whitespace-tokenises `text`, maps unknown tokens to `<unk>`, and keeps at
/// most `max_len` tokens.
pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> TokenSeq {
    TokenSeq(text.split_whitespace().take(max_len).map(|t| vocab.id_or_unk(t)).collect())
}

/// Space-joined token strings; ids outside the vocabulary render as `<unk>`.
pub fn decode(seq: &[usize], vocab: &Vocab) -> String {
    let mut out = String::new();
    for (i, &id) in seq.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(vocab.token(id).unwrap_or(UNK_TOKEN));
    }
    out
}

/// Input/target pair for next-token prediction. The input starts with the
/// `<eos>` token as a go symbol, so `target[t] == input[t + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub input: TokenSeq,
    pub target: TokenSeq,
}

impl TrainingPair {
    pub fn from_seq(seq: &[usize]) -> Self {
        let mut input = Vec::with_capacity(seq.len());
        input.push(EOS_ID);
        input.extend_from_slice(&seq[..seq.len().saturating_sub(1)]);
        Self {
            input: TokenSeq(input),
            target: TokenSeq(seq.to_vec()),
        }
    }
}

/// Content token names used by the synthetic tasks: `a`..`z`, then `t26`,
/// `t27`, …
pub fn synthetic_token_name(k: usize) -> String {
    if k < 26 {
        char::from(b'a' + k as u8).to_string()
    } else {
        alloc::format!("t{k}")
    }
}

/// Vocabulary with `content` synthetic tokens.
pub fn synthetic_vocab(content: usize) -> Result<Vocab> {
    let names: Vec<String> = (0..content).map(synthetic_token_name).collect();
    Vocab::from_content(&names)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    /// Consecutive ascending runs `a, b, c, …` from a random start.
    AlphabetOrder,
    /// Row-major `n × n` row-stochastic transitions and an initial
    /// distribution over the `n` content tokens.
    MarkovChain { transition: Vec<f64>, initial: Vec<f64> },
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskSpec {
    pub kind: TaskKind,
    /// Number of content tokens.
    pub content_size: usize,
    /// Sequence lengths, drawn uniformly per sequence.
    pub lengths: RangeInclusive<usize>,
}

impl SyntheticTaskSpec {
    pub fn alphabet(content_size: usize, lengths: RangeInclusive<usize>) -> Self {
        Self {
            kind: TaskKind::AlphabetOrder,
            content_size,
            lengths,
        }
    }

    pub fn markov(transition: Vec<f64>, initial: Vec<f64>, length: usize) -> Self {
        Self {
            content_size: initial.len(),
            kind: TaskKind::MarkovChain { transition, initial },
            lengths: length..=length,
        }
    }

    pub fn vocab(&self) -> Result<Vocab> {
        synthetic_vocab(self.content_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.content_size == 0 {
            return Err(invalid("synthetic task needs at least one content token"));
        }
        if self.lengths.is_empty() || *self.lengths.start() == 0 {
            return Err(invalid("sequence lengths must be a non-empty range of positive values"));
        }
        match &self.kind {
            TaskKind::AlphabetOrder => {
                if *self.lengths.end() > self.content_size {
                    return Err(invalid(alloc::format!(
                        "length {} exceeds the {} content tokens",
                        self.lengths.end(),
                        self.content_size
                    )));
                }
            }
            TaskKind::MarkovChain { transition, initial } => {
                let n = self.content_size;
                if transition.len() != n * n {
                    return Err(invalid("transition matrix must be n × n"));
                }
                check_distribution(initial, "initial distribution")?;
                for (r, row) in transition.chunks(n).enumerate() {
                    check_distribution(row, &alloc::format!("transition row {r}"))?;
                }
            }
        }
        Ok(())
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(invalid(alloc::format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if math::abs(total - 1.0) > 1e-9 {
        return Err(invalid(alloc::format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Index drawn from the categorical distribution `probs` (need not be
/// exactly normalised).
pub fn sample_categorical(probs: &[f64], rng: &mut crate::Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    // rounding fell off the end: last index with mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// The alphabet run of `len` tokens starting at content index `offset`.
pub fn alphabet_sequence(offset: usize, len: usize) -> TokenSeq {
    TokenSeq((0..len).map(|k| FIRST_CONTENT_ID + offset + k).collect())
}

/// `n` alphabet-order sequences with uniform lengths and start offsets.
pub fn gen_alphabet_task(spec: &SyntheticTaskSpec, n: usize, seed: u64) -> Result<Vec<TokenSeq>> {
    if spec.kind != TaskKind::AlphabetOrder {
        return Err(invalid("gen_alphabet_task needs an alphabet-order spec"));
    }
    spec.validate()?;
    let mut rng = crate::seeded_rng(seed);
    Ok((0..n)
        .map(|_| {
            let len = rng.gen_range(spec.lengths.clone());
            let offset = rng.gen_range(0..=spec.content_size - len);
            alphabet_sequence(offset, len)
        })
        .collect())
}

/// `n` i.i.d. sequences from the Markov chain in `spec`.
pub fn gen_markov_corpus(spec: &SyntheticTaskSpec, n: usize, seed: u64) -> Result<Vec<TokenSeq>> {
    let TaskKind::MarkovChain { transition, initial } = &spec.kind else {
        return Err(invalid("gen_markov_corpus needs a Markov-chain spec"));
    };
    spec.validate()?;
    let states = spec.content_size;
    let mut rng = crate::seeded_rng(seed);
    Ok((0..n)
        .map(|_| {
            let len = rng.gen_range(spec.lengths.clone());
            let mut s = sample_categorical(initial, &mut rng);
            let mut ids = Vec::with_capacity(len);
            ids.push(FIRST_CONTENT_ID + s);
            for _ in 1..len {
                s = sample_categorical(&transition[s * states..(s + 1) * states], &mut rng);
                ids.push(FIRST_CONTENT_ID + s);
            }
            TokenSeq(ids)
        })
        .collect())
}

/// One padded batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Indices into the source data.
    pub indices: Vec<usize>,
    /// Rows padded with `<pad>` to the longest member.
    pub ids: Vec<Vec<usize>>,
    /// Unpadded length of each row.
    pub lengths: Vec<usize>,
}

/// Epoch-wise shuffled batching under a seeded RNG.
#[derive(Debug, Clone)]
pub struct BatchStream<'a> {
    data: &'a [TokenSeq],
    batch_size: usize,
    rng: crate::Rng,
}

impl<'a> BatchStream<'a> {
    pub fn new(data: &'a [TokenSeq], batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        Ok(Self {
            data,
            batch_size,
            rng: crate::seeded_rng(seed),
        })
    }

    /// Batches for the next epoch; every sequence appears exactly once.
    pub fn epoch(&mut self) -> Vec<Batch> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);
        order
            .chunks(self.batch_size)
            .map(|chunk| {
                let width = chunk.iter().map(|&i| self.data[i].len()).max().unwrap_or(0);
                let ids = chunk
                    .iter()
                    .map(|&i| {
                        let mut row = self.data[i].0.clone();
                        row.resize(width, PAD_ID);
                        row
                    })
                    .collect();
                Batch {
                    indices: chunk.to_vec(),
                    ids,
                    lengths: chunk.iter().map(|&i| self.data[i].len()).collect(),
                }
            })
            .collect()
    }
}

/// First epoch of [`BatchStream`].
pub fn batch_iter(data: &[TokenSeq], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    Ok(BatchStream::new(data, batch_size, seed)?.epoch())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn vocab_ranks_by_frequency() {
        let v = build_vocab("a b\nb b", 6).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<m>", "<eos>", "<unk>", "b", "a"]);
    }

    #[test]
    fn vocab_single_token() {
        let v = build_vocab("x", 5).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<m>", "<eos>", "<unk>", "x"]);
    }

    #[test]
    fn vocab_errors() {
        assert_eq!(build_vocab("", 10), Err(Error::Empty("corpus")));
        assert_eq!(build_vocab("  \n ", 10), Err(Error::Empty("corpus")));
        assert!(matches!(build_vocab("a", 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn vocab_ties_are_lexicographic_and_truncated() {
        let v = build_vocab("c b a c b a d", 6).unwrap();
        assert_eq!(&v.tokens()[4..], &["a", "b"]);
        assert_eq!(v.id_or_unk("c"), UNK_ID);
    }

    #[test]
    fn special_strings_in_corpus_are_not_duplicated() {
        let v = build_vocab("a <eos> b <eos>", 10).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("<eos>"), Some(EOS_ID));
        assert_eq!(encode("a <eos>", &v, 5).ids(), &[4, EOS_ID]);
    }

    #[test]
    fn encode_examples() {
        let v = build_vocab("a b\nb b", 6).unwrap();
        assert_eq!(encode("a b", &v, 10).ids(), &[5, 4]);
        assert_eq!(encode("zzz", &v, 10).ids(), &[3]);
        assert_eq!(encode("a b", &v, 1).ids(), &[5]);
        assert_eq!(decode(&[5, 4], &v), "a b");
        assert_eq!(v.token(MASK_ID), Some("<m>"));
    }

    #[test]
    fn training_pair_shift() {
        let p = TrainingPair::from_seq(&[7, 8, 9]);
        assert_eq!(p.input.ids(), &[EOS_ID, 7, 8]);
        assert_eq!(p.target.ids(), &[7, 8, 9]);
        for t in 0..2 {
            assert_eq!(p.target[t], p.input[t + 1]);
        }
    }

    #[test]
    fn alphabet_runs() {
        let v = synthetic_vocab(26).unwrap();
        assert_eq!(decode(&alphabet_sequence(0, 5), &v), "a b c d e");
        assert_eq!(decode(&alphabet_sequence(2, 3), &v), "c d e");
        assert_eq!(alphabet_sequence(7, 1).len(), 1);

        let spec = SyntheticTaskSpec::alphabet(26, 5..=10);
        for s in gen_alphabet_task(&spec, 200, 1).unwrap() {
            assert!((5..=10).contains(&s.len()));
            assert!(s.windows(2).all(|w| w[1] == w[0] + 1));
            assert!(*s.last().unwrap() < FIRST_CONTENT_ID + 26);
        }
        let too_long = SyntheticTaskSpec::alphabet(4, 5..=5);
        assert!(gen_alphabet_task(&too_long, 1, 0).is_err());
    }

    #[test]
    fn markov_examples() {
        // identity transitions absorb at the start state
        let spec = SyntheticTaskSpec::markov(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 1.0], 6);
        for s in gen_markov_corpus(&spec, 5, 9).unwrap() {
            assert_eq!(s.ids(), &[5; 6]);
        }
        assert!(gen_markov_corpus(&spec, 0, 9).unwrap().is_empty());

        let bad = SyntheticTaskSpec::markov(vec![0.5, 0.4, 0.0, 1.0], vec![0.5, 0.5], 3);
        assert!(gen_markov_corpus(&bad, 1, 0).is_err());
        let neg = SyntheticTaskSpec::markov(vec![1.5, -0.5, 0.0, 1.0], vec![0.5, 0.5], 3);
        assert!(neg.validate().is_err());
    }

    #[test]
    fn uniform_chain_bigrams_within_three_sigma() {
        let spec = SyntheticTaskSpec::markov(vec![0.5; 4], vec![0.5, 0.5], 4);
        let data = gen_markov_corpus(&spec, 10_000, 21).unwrap();
        let mut counts = [0usize; 4];
        let mut total = 0;
        for s in &data {
            for w in s.windows(2) {
                counts[(w[0] - 4) * 2 + (w[1] - 4)] += 1;
                total += 1;
            }
        }
        let sigma = math::sqrt(0.25 * 0.75 / total as f64);
        for c in counts {
            let f = c as f64 / total as f64;
            assert!(math::abs(f - 0.25) < 3.0 * sigma, "{f}");
        }
    }

    #[test]
    fn batching() {
        let data = vec![TokenSeq(vec![4, 5]), TokenSeq(vec![4, 5, 6, 7]), TokenSeq(vec![6])];
        let batches = batch_iter(&data, 2, 0).unwrap();
        assert_eq!(batches.iter().map(|b| b.ids.len()).collect::<Vec<_>>(), vec![2, 1]);
        for b in &batches {
            let width = b.ids[0].len();
            for (row, &len) in b.ids.iter().zip(&b.lengths) {
                assert_eq!(row.len(), width);
                assert!(row[len..].iter().all(|&x| x == PAD_ID));
                assert_eq!(len, data[b.indices[b.lengths.iter().position(|l| *l == len).unwrap()]].len());
            }
        }
        assert_eq!(batches, batch_iter(&data, 2, 0).unwrap());
        assert!(batch_iter(&data, 0, 0).is_err());

        let pair = vec![TokenSeq(vec![4, 5]), TokenSeq(vec![4, 5, 6, 7])];
        let b = &batch_iter(&pair, 2, 5).unwrap()[0];
        let mut lens = b.lengths.clone();
        lens.sort();
        assert_eq!(lens, vec![2, 4]);
        assert!(b.ids.iter().all(|r| r.len() == 4));
    }
}

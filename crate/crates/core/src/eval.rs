//! Sample-quality metrics and training monitors.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::corpus::{TokenSeq, EOS_ID, PAD_ID};
use crate::error::{invalid, Error, Result};
use crate::masking::{apply_mask, Mask, MaskRegime};
use crate::math;
use crate::models::{Conditioning, FillMode, MaskGan};

/// Which special tokens break n-grams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NgramOptions {
    /// Keep `<eos>` as an ordinary token inside n-grams.
    pub include_eos: bool,
}

impl NgramOptions {
    fn excluded(&self, id: usize) -> bool {
        id == PAD_ID || (!self.include_eos && id == EOS_ID)
    }
}

fn ngrams<'a>(samples: &'a [TokenSeq], n: usize, opts: NgramOptions) -> impl Iterator<Item = &'a [usize]> {
    samples
        .iter()
        .flat_map(move |s| s.windows(n))
        .filter(move |w| !w.iter().any(|&t| opts.excluded(t)))
}

fn check_samples(samples: &[TokenSeq], n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n-gram order must be at least 1"));
    }
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    if let Some(s) = samples.iter().find(|s| s.len() < n) {
        return Err(invalid(alloc::format!("sample of length {} is shorter than n = {n}", s.len())));
    }
    Ok(())
}

/// `(distinct, total)` n-gram counts, n-grams never spanning two samples.
pub fn ngram_counts(samples: &[TokenSeq], n: usize, opts: NgramOptions) -> Result<(usize, usize)> {
    check_samples(samples, n)?;
    let mut seen = BTreeSet::new();
    let mut total = 0;
    for g in ngrams(samples, n, opts) {
        seen.insert(g);
        total += 1;
    }
    Ok((seen.len(), total))
}

/// Percentage of n-gram occurrences that are distinct.
pub fn unique_ngram_pct(samples: &[TokenSeq], n: usize, opts: NgramOptions) -> Result<f64> {
    let (distinct, total) = ngram_counts(samples, n, opts)?;
    if total == 0 {
        return Err(Error::Empty("n-gram set"));
    }
    Ok(100.0 * distinct as f64 / total as f64)
}

/// Number of distinct sample n-grams that also occur in `reference`.
pub fn ngrams_in_reference(samples: &[TokenSeq], n: usize, reference: &[TokenSeq], opts: NgramOptions) -> Result<usize> {
    check_samples(samples, n)?;
    if reference.is_empty() {
        return Err(Error::Empty("reference corpus"));
    }
    let known: BTreeSet<&[usize]> = reference.iter().flat_map(|s| s.windows(n)).collect();
    let produced: BTreeSet<&[usize]> = ngrams(samples, n, opts).collect();
    Ok(produced.intersection(&known).count())
}

/// Geometric mean of counts; zero when any count is zero.
pub fn geometric_mean_of_counts(counts: &[usize]) -> f64 {
    if counts.is_empty() || counts.contains(&0) {
        return 0.0;
    }
    let mean_log = counts.iter().map(|&c| math::ln(c as f64)).sum::<f64>() / counts.len() as f64;
    math::exp(mean_log)
}

/// Geometric mean over `ns` of the number of distinct generated n-grams
/// found in the reference corpus.
pub fn geometric_ngram_score(samples: &[TokenSeq], ns: &[usize], reference: &[TokenSeq], opts: NgramOptions) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("reference corpus"));
    }
    if ns.is_empty() {
        return Err(invalid("need at least one n-gram order"));
    }
    let counts = ns
        .iter()
        .map(|&n| ngrams_in_reference(samples, n, reference, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(geometric_mean_of_counts(&counts))
}

/// Mean and standard error of per-sample perplexities.
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityStats {
    pub mean: f64,
    pub stderr: f64,
    pub per_sample: Vec<f64>,
}

impl PerplexityStats {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            math::sqrt(var / n)
        } else {
            0.0
        };
        Ok(Self {
            mean,
            stderr,
            per_sample: values,
        })
    }
}

/// Per-sample `exp(−(1/T) Σ log P_LM(x_t))` under the frozen language model.
pub fn sample_perplexity(samples: &[TokenSeq], lm: &MaskGan) -> Result<PerplexityStats> {
    let mut values = Vec::with_capacity(samples.len());
    for s in samples {
        if s.is_empty() {
            return Err(Error::Empty("sample"));
        }
        if s.contains(&PAD_ID) {
            return Err(invalid("sample contains <pad>"));
        }
        let ll = lm.generator.lm_log_likelihood(&lm.store, s)?;
        values.push(math::exp(-ll / s.len() as f64));
    }
    PerplexityStats::from_values(values)
}

/// Validation perplexity flavour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerplexityMode {
    /// Next-token prediction over every position, no context.
    LanguageModel,
    /// Blanked positions only, conditioned on `m(x)`; masks drawn from
    /// `seed` so repeated evaluations see identical masks.
    Infill { rate: f64, regime: MaskRegime, seed: u64 },
}

/// Total negative log-likelihood and number of scored tokens.
pub fn validation_nll(model: &MaskGan, corpus: &[TokenSeq], mode: PerplexityMode) -> Result<(f64, usize)> {
    let g = &model.generator;
    let mut nll = 0.0;
    let mut count = 0;
    let mut mask_rng = match mode {
        PerplexityMode::Infill { seed, .. } => crate::seeded_rng(seed),
        PerplexityMode::LanguageModel => crate::seeded_rng(0),
    };
    let mut rng = crate::seeded_rng(0);
    for seq in corpus {
        let (mask, cond) = match mode {
            PerplexityMode::LanguageModel => (Mask::all_masked(seq.len()), Conditioning::LanguageModel),
            PerplexityMode::Infill { rate, regime, .. } => (regime.sample(seq.len(), rate, &mut mask_rng)?, Conditioning::Attention),
        };
        let ms = apply_mask(seq, &mask)?;
        let r = g.generator_fill(&model.store, &ms, FillMode::Teacher(seq), cond, &mut rng)?;
        for lp in r.log_probs.iter().flatten() {
            nll -= lp;
            count += 1;
        }
    }
    Ok((nll, count))
}

/// Teacher-forced perplexity on held-out data. An empty scored set yields 1.
pub fn validation_perplexity(model: &MaskGan, corpus: &[TokenSeq], mode: PerplexityMode) -> Result<f64> {
    let (nll, count) = validation_nll(model, corpus, mode)?;
    if count == 0 {
        return Ok(1.0);
    }
    Ok(math::exp(nll / count as f64))
}

/// Draws `n` unconditional samples of `len` tokens (every position blanked).
pub fn unconditional_samples(model: &MaskGan, n: usize, len: usize, rng: &mut crate::Rng) -> Result<Vec<TokenSeq>> {
    let blank = TokenSeq::new(alloc::vec![crate::corpus::MASK_ID; len]);
    let ms = apply_mask(&blank, &Mask::all_masked(len))?;
    (0..n)
        .map(|_| {
            model
                .generator
                .generator_fill(&model.store, &ms, FillMode::Sample, Conditioning::Attention, rng)
                .map(|r| r.filled)
        })
        .collect()
}

/// Diversity and quality summary for one sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub unique_bigram_pct: f64,
    pub unique_trigram_pct: f64,
    pub unique_quadgram_pct: f64,
    pub geometric_ngram_score: f64,
    pub sample_ppl_mean: f64,
    pub sample_ppl_stderr: f64,
    pub validation_ppl: Option<f64>,
    pub sample_count: usize,
    pub sample_len: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "unique_bigram_pct,unique_trigram_pct,unique_quadgram_pct,geometric_ngram_score,sample_ppl_mean,sample_ppl_stderr,validation_ppl,sample_count,sample_len";

    /// Computes every metric. `reference` is the validation corpus used for
    /// the geometric score; `validation_ppl` is passed through.
    pub fn compute(samples: &[TokenSeq], reference: &[TokenSeq], lm: &MaskGan, validation_ppl: Option<f64>, opts: NgramOptions) -> Result<Self> {
        let ppl = sample_perplexity(samples, lm)?;
        Ok(Self {
            unique_bigram_pct: unique_ngram_pct(samples, 2, opts)?,
            unique_trigram_pct: unique_ngram_pct(samples, 3, opts)?,
            unique_quadgram_pct: unique_ngram_pct(samples, 4, opts)?,
            geometric_ngram_score: geometric_ngram_score(samples, &[2, 3, 4], reference, opts)?,
            sample_ppl_mean: ppl.mean,
            sample_ppl_stderr: ppl.stderr,
            validation_ppl,
            sample_count: samples.len(),
            sample_len: samples.iter().map(|s| s.len()).max().unwrap_or(0),
        })
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{:.4},{:.4},{:.4},{:.4},{:.6},{:.6},",
            self.unique_bigram_pct,
            self.unique_trigram_pct,
            self.unique_quadgram_pct,
            self.geometric_ngram_score,
            self.sample_ppl_mean,
            self.sample_ppl_stderr
        );
        if let Some(v) = self.validation_ppl {
            let _ = write!(s, "{v:.6}");
        }
        let _ = write!(s, ",{},{}", self.sample_count, self.sample_len);
        s
    }

    pub fn text_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples            {} (max length {})", self.sample_count, self.sample_len);
        let _ = writeln!(s, "unique bigrams     {:.2}%", self.unique_bigram_pct);
        let _ = writeln!(s, "unique trigrams    {:.2}%", self.unique_trigram_pct);
        let _ = writeln!(s, "unique quadgrams   {:.2}%", self.unique_quadgram_pct);
        let _ = writeln!(s, "geometric n-gram   {:.3}", self.geometric_ngram_score);
        let _ = writeln!(s, "sample perplexity  {:.3} ± {:.3}", self.sample_ppl_mean, self.sample_ppl_stderr);
        if let Some(v) = self.validation_ppl {
            let _ = writeln!(s, "validation ppl     {v:.3}");
        }
        s
    }
}

/// Flags low quadgram diversity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCollapseMonitor {
    /// Warn when the unique-quadgram percentage falls below this.
    pub min_unique_quadgram_pct: f64,
}

impl Default for ModeCollapseMonitor {
    fn default() -> Self {
        Self {
            min_unique_quadgram_pct: 5.0,
        }
    }
}

impl ModeCollapseMonitor {
    pub fn check(&self, samples: &[TokenSeq]) -> Result<Option<String>> {
        let pct = unique_ngram_pct(samples, 4, NgramOptions::default())?;
        Ok((pct < self.min_unique_quadgram_pct).then(|| {
            alloc::format!(
                "mode collapse: {pct:.2}% unique quadgrams (threshold {:.1}%)",
                self.min_unique_quadgram_pct
            )
        }))
    }
}

/// Flags validation perplexity rising past a multiple of its first value.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceMonitor {
    pub factor: f64,
    start: Option<f64>,
    fired: bool,
}

impl Default for DivergenceMonitor {
    fn default() -> Self {
        Self::new(4.0)
    }
}

impl DivergenceMonitor {
    pub fn new(factor: f64) -> Self {
        Self {
            factor,
            start: None,
            fired: false,
        }
    }

    pub fn start(&self) -> Option<f64> {
        self.start
    }

    /// Records a perplexity; the first call sets the reference. Returns a
    /// warning the first time the threshold is exceeded.
    pub fn observe(&mut self, ppl: f64) -> Option<String> {
        let Some(start) = self.start else {
            self.start = Some(ppl);
            return None;
        };
        if !self.fired && (ppl > self.factor * start || !ppl.is_finite()) {
            self.fired = true;
            return Some(alloc::format!(
                "divergence: validation perplexity {ppl:.3} exceeds {}x its starting value {start:.3}",
                self.factor
            ));
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;
    use alloc::vec;

    fn seqs(v: &[&[usize]]) -> Vec<TokenSeq> {
        v.iter().map(|s| TokenSeq(s.to_vec())).collect()
    }

    #[test]
    fn unique_pct_examples() {
        let s = seqs(&[&[4, 5, 4, 5]]);
        assert!((unique_ngram_pct(&s, 2, Default::default()).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        let same = seqs(&[&[4; 50], &[4; 50]]);
        assert!(unique_ngram_pct(&same, 2, Default::default()).unwrap() < 2.0);
        let distinct = seqs(&[&[4, 5, 6], &[7, 8, 9]]);
        assert_eq!(unique_ngram_pct(&distinct, 2, Default::default()).unwrap(), 100.0);
        assert!(unique_ngram_pct(&[], 2, Default::default()).is_err());
        assert!(unique_ngram_pct(&seqs(&[&[4]]), 2, Default::default()).is_err());
    }

    #[test]
    fn ngrams_do_not_span_samples_and_skip_specials() {
        let s = seqs(&[&[4, 5], &[6, 7]]);
        assert_eq!(ngram_counts(&s, 2, Default::default()).unwrap(), (2, 2));
        let e = seqs(&[&[4, EOS_ID, 5, 6]]);
        assert_eq!(ngram_counts(&e, 2, Default::default()).unwrap(), (1, 1));
        assert_eq!(ngram_counts(&e, 2, NgramOptions { include_eos: true }).unwrap(), (3, 3));
    }

    #[test]
    fn geometric_examples() {
        assert_eq!(geometric_mean_of_counts(&[8, 2]), 4.0);
        assert_eq!(geometric_mean_of_counts(&[8, 0, 3]), 0.0);
        assert!((geometric_mean_of_counts(&[7, 7, 7]) - 7.0).abs() < 1e-12);
        for k in 1..5 {
            let a = geometric_mean_of_counts(&[3, 5, 11]);
            let b = geometric_mean_of_counts(&[3 * k, 5 * k, 11 * k]);
            assert!((b - k as f64 * a).abs() < 1e-9);
        }
        let samples = seqs(&[&[4, 5, 6, 7]]);
        let reference = seqs(&[&[4, 5, 6, 9]]);
        // bigrams in ref: 45, 56 → 2; trigrams: 456 → 1
        let s = geometric_ngram_score(&samples, &[2, 3], &reference, Default::default()).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        assert!(geometric_ngram_score(&samples, &[2], &[], Default::default()).is_err());
    }

    fn uniform_lm(vocab: usize) -> MaskGan {
        let cfg = ModelConfig {
            vocab_size: vocab,
            embed_dim: 4,
            hidden_dim: 4,
            layers: 1,
            dropout: 0.0,
            share_embeddings: true,
            suppress_specials: false,
        };
        let mut m = MaskGan::new(cfg, 0).unwrap();
        let emb = m.generator.trunk.embedding;
        m.store.get_mut(emb).values_mut().iter_mut().for_each(|v| *v = 0.0);
        m
    }

    #[test]
    fn uniform_lm_perplexity_is_vocab_size() {
        let lm = uniform_lm(10);
        let samples = seqs(&[&[4, 5, 6], &[9, 9, 9, 8, 7]]);
        let p = sample_perplexity(&samples, &lm).unwrap();
        assert!(p.per_sample.iter().all(|v| (v - 10.0).abs() < 1e-9));
        let v = validation_perplexity(&lm, &samples, PerplexityMode::LanguageModel).unwrap();
        assert!((v - 10.0).abs() < 1e-9);
        assert!(sample_perplexity(&seqs(&[&[4, PAD_ID]]), &lm).is_err());
    }

    #[test]
    fn monitors() {
        let collapsed: Vec<TokenSeq> = (0..100).map(|_| TokenSeq(vec![4, 5, 6, 7, 8, 9, 10, 11])).collect();
        assert!(ModeCollapseMonitor::default().check(&collapsed).unwrap().is_some());
        let diverse: Vec<TokenSeq> = (0..20).map(|i| TokenSeq((0..8).map(|k| 4 + (i * 7 + k * k) % 23).collect())).collect();
        assert!(ModeCollapseMonitor::default().check(&diverse).unwrap().is_none());

        let mut d = DivergenceMonitor::default();
        assert!(d.observe(10.0).is_none());
        assert!(d.observe(39.0).is_none());
        assert!(d.observe(41.0).is_some());
        assert!(d.observe(80.0).is_none());
    }

    #[test]
    fn report_formats() {
        let r = MetricsReport {
            unique_bigram_pct: 50.0,
            unique_trigram_pct: 60.0,
            unique_quadgram_pct: 70.0,
            geometric_ngram_score: 3.0,
            sample_ppl_mean: 5.5,
            sample_ppl_stderr: 0.25,
            validation_ppl: None,
            sample_count: 2,
            sample_len: 4,
        };
        assert_eq!(r.csv_row().split(',').count(), MetricsReport::CSV_HEADER.split(',').count());
        assert!(r.text_block().contains("unique quadgrams   70.00%"));
    }
}

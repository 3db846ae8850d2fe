//! The training stages, run against one run directory.

use std::path::{Path, PathBuf};

use maskgan_core::corpus::{build_vocab, TokenSeq, Vocab};
use maskgan_core::eval::{unconditional_samples, MetricsReport, NgramOptions};
use maskgan_core::masking::Mask;
use maskgan_core::models::{Conditioning, FillMode, MaskGan};
use maskgan_core::seeded_rng;
use maskgan_core::training::{gan_train_loop, pretrain_infill, pretrain_lm, GanData, GanHistory, IterationMetrics};

use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};
use crate::io::{encode_lines, parse_blanked, read_checkpoint, read_corpus, read_text, read_vocab, write_checkpoint, write_text, write_vocab};
use crate::lock::RunLock;
use crate::manifest::RunManifest;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const LM_CKPT: &str = "lm.ckpt";
pub const MLE_CKPT: &str = "maskmle.ckpt";
pub const GAN_CKPT: &str = "maskgan.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.csv";

/// An open run directory. Holding a `Run` holds the directory lock.
#[derive(Debug)]
pub struct Run {
    dir: PathBuf,
    pub config: RunConfig,
    force: bool,
    _lock: RunLock,
}

impl Run {
    /// Creates `dir` if needed and locks it. `force` lets stages overwrite a
    /// manifest written under different settings.
    pub fn open(dir: &Path, config: RunConfig, force: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let lock = RunLock::acquire(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            force,
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn manifest(&self, stage: &str, checkpoints: &[(&str, &Path)]) -> Result<()> {
        let m = checkpoints
            .iter()
            .fold(RunManifest::new(stage, &self.config), |m, (role, p)| m.with_checkpoint(role, p));
        m.write(&self.path(&format!("{stage}.manifest")), self.force)
    }

    fn require(path: &Path, stage: &'static str) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::MissingStage {
                path: path.to_path_buf(),
                stage,
            })
        }
    }

    pub fn vocab(&self) -> Result<Vocab> {
        let p = self.path(VOCAB_FILE);
        Self::require(&p, "build-vocab")?;
        read_vocab(&p)
    }

    fn train_path(&self) -> Result<&str> {
        self.config
            .train
            .as_deref()
            .ok_or_else(|| Error::Missing("no training corpus; set train= in the config or pass --train".into()))
    }

    pub fn train_corpus(&self, vocab: &Vocab) -> Result<Vec<TokenSeq>> {
        read_corpus(Path::new(self.train_path()?), vocab, self.config.max_len)
    }

    /// The validation corpus, empty when none is configured.
    pub fn valid_corpus(&self, vocab: &Vocab) -> Result<Vec<TokenSeq>> {
        match &self.config.valid {
            Some(p) => read_corpus(Path::new(p), vocab, self.config.max_len),
            None => Ok(Vec::new()),
        }
    }

    /// Loads a model checkpoint, naming `stage` when it is missing.
    pub fn load_model(&self, path: &Path, stage: &'static str) -> Result<MaskGan> {
        Self::require(path, stage)?;
        Ok(read_checkpoint(path)?.restore(self.config.seed)?)
    }

    fn ckpt_or(&self, ckpt: Option<&Path>, default: &str) -> PathBuf {
        ckpt.map_or_else(|| self.path(default), Path::to_path_buf)
    }

    /// Frequency-ranked vocabulary of the training corpus.
    pub fn build_vocab(&self) -> Result<Vocab> {
        let corpus = self.train_path()?;
        self.manifest("build-vocab", &[])?;
        let vocab = build_vocab(&read_text(Path::new(corpus))?, self.config.max_vocab)?;
        write_vocab(&self.path(VOCAB_FILE), &vocab)?;
        Ok(vocab)
    }

    /// Trains the language model and writes `lm.ckpt`. Returns the loss
    /// curve.
    pub fn pretrain_lm(&self) -> Result<Vec<f64>> {
        let vocab = self.vocab()?;
        let data = self.train_corpus(&vocab)?;
        let out = self.path(LM_CKPT);
        self.manifest("pretrain-lm", &[("output", &out)])?;
        let mut model = MaskGan::new(self.config.model_config(vocab.len()), self.config.seed)?;
        let losses = pretrain_lm(&mut model, &data, &self.config.pretrain_config(self.config.lm_steps))?;
        write_checkpoint(&out, &model)?;
        Ok(losses)
    }

    /// Initialises the in-filling model from the language model, trains it
    /// by maximum likelihood and writes `maskmle.ckpt`.
    pub fn pretrain_infill(&self, lm_ckpt: Option<&Path>) -> Result<Vec<f64>> {
        let vocab = self.vocab()?;
        let data = self.train_corpus(&vocab)?;
        let input = self.ckpt_or(lm_ckpt, LM_CKPT);
        let out = self.path(MLE_CKPT);
        let lm = self.load_model(&input, "pretrain-lm")?;
        self.manifest("pretrain-infill", &[("input", &input), ("output", &out)])?;
        let mut model = MaskGan::new(lm.config, self.config.seed.wrapping_add(1))?;
        model.init_from_lm(&lm)?;
        let losses = pretrain_infill(&mut model, &data, &self.config.pretrain_config(self.config.infill_steps))?;
        write_checkpoint(&out, &model)?;
        Ok(losses)
    }

    /// Adversarial training from `maskmle.ckpt`. Writes `maskgan.ckpt` and
    /// the metrics CSV; monitor warnings are logged and returned in the
    /// history. When a step fails the last good parameters are still saved.
    pub fn train_gan(&self, mle_ckpt: Option<&Path>) -> Result<GanHistory> {
        let vocab = self.vocab()?;
        let train = self.train_corpus(&vocab)?;
        let valid = self.valid_corpus(&vocab)?;
        let input = self.ckpt_or(mle_ckpt, MLE_CKPT);
        let lm_path = self.path(LM_CKPT);
        let out = self.path(GAN_CKPT);
        let mut model = self.load_model(&input, "pretrain-infill")?;
        let lm = if lm_path.exists() {
            Some(self.load_model(&lm_path, "pretrain-lm")?)
        } else {
            None
        };
        let mut ckpts = vec![("input", input.as_path()), ("output", out.as_path())];
        if lm.is_some() {
            ckpts.push(("lm", lm_path.as_path()));
        }
        self.manifest("train-gan", &ckpts)?;
        let data = GanData {
            train: &train,
            valid: &valid,
            lm: lm.as_ref(),
        };
        let result = gan_train_loop(&mut model, &data, &self.config.gan_config());
        write_checkpoint(&out, &model)?;
        let hist = result?;
        for w in &hist.warnings {
            log::warn!("{w}");
        }
        let mut csv = String::from(IterationMetrics::CSV_HEADER);
        csv.push('\n');
        for m in &hist.iterations {
            csv += &m.csv_row();
            csv.push('\n');
        }
        write_text(&self.path(METRICS_FILE), &csv)?;
        Ok(hist)
    }

    /// `n` free-running samples of `length` tokens from a fully blanked
    /// context.
    pub fn sample_unconditional(&self, ckpt: Option<&Path>, n: usize, length: usize) -> Result<Vec<TokenSeq>> {
        let model = self.load_model(&self.ckpt_or(ckpt, GAN_CKPT), "train-gan")?;
        Ok(unconditional_samples(&model, n, length, &mut seeded_rng(self.config.seed))?)
    }

    /// Fills the `_` blanks of each input line. Each result carries the mask
    /// of the blanks it filled.
    pub fn sample_conditional(&self, ckpt: Option<&Path>, lines: &[String]) -> Result<Vec<(Mask, TokenSeq)>> {
        let vocab = self.vocab()?;
        let model = self.load_model(&self.ckpt_or(ckpt, GAN_CKPT), "train-gan")?;
        let mut rng = seeded_rng(self.config.seed);
        lines
            .iter()
            .map(|l| {
                let ms = parse_blanked(l, &vocab)?;
                let r = model
                    .generator
                    .generator_fill(&model.store, &ms, FillMode::Sample, Conditioning::Attention, &mut rng)?;
                Ok((ms.mask, r.filled))
            })
            .collect()
    }

    /// Scores sample files under the frozen language model. The reference
    /// corpus for the n-gram score is the validation set, or the training
    /// set when none is configured.
    pub fn evaluate(&self, samples: &[PathBuf], lm_ckpt: Option<&Path>, ngrams: NgramOptions) -> Result<MetricsReport> {
        let vocab = self.vocab()?;
        let lm = self.load_model(&self.ckpt_or(lm_ckpt, LM_CKPT), "pretrain-lm")?;
        let mut seqs = Vec::new();
        for p in samples {
            seqs.extend(encode_lines(&read_text(p)?, &vocab, usize::MAX));
        }
        if seqs.is_empty() {
            return Err(Error::Missing("no samples to evaluate".into()));
        }
        let reference = match self.valid_corpus(&vocab)? {
            v if !v.is_empty() => v,
            _ => self.train_corpus(&vocab)?,
        };
        let report = MetricsReport::compute(&seqs, &reference, &lm, None, ngrams)?;
        write_text(&self.path(REPORT_FILE), &format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()))?;
        Ok(report)
    }
}

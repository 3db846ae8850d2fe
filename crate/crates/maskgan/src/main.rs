use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use maskgan::gradcheck::{self, TOLERANCE};
use maskgan::io::{render_filled, render_samples, write_text};
use maskgan::{synth, Error, Result, Run, RunConfig};
use maskgan_core::corpus::SyntheticTaskSpec;
use maskgan_core::eval::NgramOptions;
use maskgan_core::training::RewardScope;

#[derive(Parser)]
#[command(name = "maskgan", version, about = "Masked-text in-filling with an actor-critic GAN")]
struct Cli {
    /// key=value config file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Input checkpoint, overriding the run directory's default for the command
    #[arg(long, global = true)]
    ckpt: Option<PathBuf>,
    /// Training corpus, one sentence per line
    #[arg(long, global = true)]
    train: Option<String>,
    /// Validation corpus, one sentence per line
    #[arg(long, global = true)]
    valid: Option<String>,
    #[arg(long, global = true)]
    mask_rate: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    d_steps: Option<usize>,
    #[arg(long, global = true)]
    reward_scope: Option<RewardScope>,
    #[arg(long, global = true)]
    full_vocab_rewards: bool,
    #[arg(long, global = true)]
    curriculum: bool,
    #[arg(long, global = true)]
    adam_beta1: Option<f64>,
    #[arg(long, global = true)]
    adam_beta2: Option<f64>,
    /// Overwrite a manifest recorded under different settings
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Conditional,
    Unconditional,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Alphabet,
    Markov,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic train.txt/valid.txt pair into the run directory
    Synth {
        #[arg(long, value_enum, default_value = "alphabet")]
        task: Task,
        /// Content tokens
        #[arg(long, default_value_t = 26)]
        content: usize,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 200)]
        valid_count: usize,
    },
    BuildVocab,
    PretrainLm,
    PretrainInfill,
    TrainGan,
    Sample {
        #[arg(long, value_enum, default_value = "unconditional")]
        mode: Mode,
        /// Conditional input with `_` for each blank; repeatable
        #[arg(long)]
        text: Vec<String>,
        #[arg(long, default_value_t = 20)]
        length: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Written before each filled-in span of a conditional sample
        #[arg(long, default_value = "[[")]
        span_open: String,
        /// Written after each filled-in span of a conditional sample
        #[arg(long, default_value = "]]")]
        span_close: String,
    },
    /// Score sample files under the frozen language model
    Evaluate {
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        /// Count <eos> as a token in n-gram statistics
        #[arg(long)]
        include_eos: bool,
    },
    /// Finite-difference check of every op and training loss
    Gradcheck,
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.train.is_some() {
            cfg.train.clone_from(&self.train);
        }
        if self.valid.is_some() {
            cfg.valid.clone_from(&self.valid);
        }
        if let Some(v) = self.mask_rate {
            cfg.gan.mask_rate = v;
        }
        if let Some(v) = self.gamma {
            cfg.gan.gamma = v;
        }
        if let Some(v) = self.d_steps {
            cfg.gan.d_steps = v;
        }
        if let Some(v) = self.reward_scope {
            cfg.gan.reward_scope = v;
        }
        if let Some(v) = self.adam_beta1 {
            cfg.gan.adam_beta1 = v;
        }
        if let Some(v) = self.adam_beta2 {
            cfg.gan.adam_beta2 = v;
        }
        cfg.gan.full_vocab_rewards |= self.full_vocab_rewards;
        cfg.gan.curriculum.enabled |= self.curriculum;
        Ok(cfg)
    }
}

fn report_losses(stage: &str, losses: &[f64]) {
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        log::info!("{stage}: {} steps, loss {first:.4} -> {last:.4}", losses.len());
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let cfg = cli.run_config()?;
    let ckpt = cli.ckpt.as_deref();
    if let Cmd::Gradcheck = cli.cmd {
        let mut ok = true;
        for c in gradcheck::run_suite(cfg.seed)? {
            let verdict = if c.passed() { "ok" } else { "FAIL" };
            println!("{verdict:4} {:28} {:.3e}", c.name, c.max_error);
            ok &= c.passed();
        }
        println!("tolerance {TOLERANCE:e}");
        return Ok(ok);
    }
    if let Cmd::Synth {
        task,
        content,
        min_len,
        max_len,
        count,
        valid_count,
    } = cli.cmd
    {
        let spec = match task {
            Task::Alphabet => SyntheticTaskSpec::alphabet(content, min_len..=max_len),
            Task::Markov => synth::sparse_chain(content, 3, max_len, cfg.seed),
        };
        synth::write_corpus(&cli.out, &spec, count, valid_count, cfg.seed)?;
        log::info!("wrote {}/train.txt and valid.txt", cli.out.display());
        return Ok(true);
    }
    let run = Run::open(&cli.out, cfg, cli.force)?;
    match &cli.cmd {
        Cmd::BuildVocab => {
            let v = run.build_vocab()?;
            log::info!("vocabulary of {} tokens", v.len());
        }
        Cmd::PretrainLm => report_losses("pretrain-lm", &run.pretrain_lm()?),
        Cmd::PretrainInfill => report_losses("pretrain-infill", &run.pretrain_infill(ckpt)?),
        Cmd::TrainGan => {
            let h = run.train_gan(ckpt)?;
            log::info!(
                "train-gan: {} iterations, {} discriminator / {} generator / {} critic updates",
                h.iterations.len(),
                h.totals.discriminator,
                h.totals.generator,
                h.totals.critic
            );
        }
        Cmd::Sample {
            mode,
            text,
            length,
            count,
            span_open,
            span_close,
        } => {
            let vocab = run.vocab()?;
            let (rendered, name) = match mode {
                Mode::Unconditional => (
                    render_samples(&run.sample_unconditional(ckpt, *count, *length)?, &vocab),
                    "samples-unconditional.txt",
                ),
                Mode::Conditional => {
                    if text.is_empty() {
                        return Err(Error::Missing("--mode conditional needs at least one --text".into()));
                    }
                    let filled = run.sample_conditional(ckpt, text)?;
                    (render_filled(&filled, &vocab, span_open, span_close), "samples-conditional.txt")
                }
            };
            write_text(&run.path(name), &rendered)?;
            print!("{rendered}");
        }
        Cmd::Evaluate { samples, include_eos } => {
            let report = run.evaluate(samples, ckpt, NgramOptions { include_eos: *include_eos })?;
            print!("{}", report.text_block());
            log::info!("report written to {}", run.path(maskgan::pipeline::REPORT_FILE).display());
        }
        Cmd::Gradcheck | Cmd::Synth { .. } => unreachable!(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}

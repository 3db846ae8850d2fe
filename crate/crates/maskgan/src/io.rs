//! Text and binary file formats.

use std::fs;
use std::path::Path;

use maskgan_core::checkpoint::Checkpoint;
use maskgan_core::corpus::{decode, encode, TokenSeq, Vocab, MASK_ID, UNK_TOKEN};
use maskgan_core::masking::{apply_mask, Mask, MaskedSeq};
use maskgan_core::models::MaskGan;

use crate::error::{io_err, Error, Result};

/// Blank marker in conditional-sampling input.
pub const BLANK: &str = "_";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// One token per line, specials first.
pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut s = vocab.tokens().join("\n");
    s.push('\n');
    write_text(path, &s)
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let tokens = read_text(path)?.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    Ok(Vocab::from_tokens(tokens)?)
}

/// One sentence per line; blank lines are skipped and long lines cut to
/// `max_len` tokens.
pub fn encode_lines(text: &str, vocab: &Vocab, max_len: usize) -> Vec<TokenSeq> {
    text.lines().map(|l| encode(l, vocab, max_len)).filter(|s| !s.is_empty()).collect()
}

pub fn read_corpus(path: &Path, vocab: &Vocab, max_len: usize) -> Result<Vec<TokenSeq>> {
    let seqs = encode_lines(&read_text(path)?, vocab, max_len);
    if seqs.is_empty() {
        return Err(Error::Missing(format!("{} holds no sentences", path.display())));
    }
    Ok(seqs)
}

/// One decoded sample per line.
pub fn render_samples(samples: &[TokenSeq], vocab: &Vocab) -> String {
    samples.iter().map(|s| decode(s, vocab) + "\n").collect()
}

/// One conditional sample per line, each run of filled-in tokens wrapped
/// in `open` ... `close`. Empty markers are left out.
pub fn render_filled(samples: &[(Mask, TokenSeq)], vocab: &Vocab, open: &str, close: &str) -> String {
    let mut out = String::new();
    for (mask, seq) in samples {
        let mut words: Vec<&str> = Vec::with_capacity(seq.len() + 2);
        for (t, &id) in seq.iter().enumerate() {
            let blank = mask.is_masked(t);
            if blank && (t == 0 || !mask.is_masked(t - 1)) && !open.is_empty() {
                words.push(open);
            }
            words.push(vocab.token(id).unwrap_or(UNK_TOKEN));
            if blank && (t + 1 == seq.len() || !mask.is_masked(t + 1)) && !close.is_empty() {
                words.push(close);
            }
        }
        out += &words.join(" ");
        out.push('\n');
    }
    out
}

/// Parses a line such as `a _ _ d e`: every `_` becomes a blank, every other
/// token is kept.
pub fn parse_blanked(text: &str, vocab: &Vocab) -> Result<MaskedSeq> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.is_empty() {
        return Err(Error::Missing("conditional input is empty".into()));
    }
    let ids = toks.iter().map(|&t| if t == BLANK { MASK_ID } else { vocab.id_or_unk(t) }).collect();
    let mask = Mask::from_bits(toks.iter().map(|&t| t != BLANK).collect());
    Ok(apply_mask(&TokenSeq::new(ids), &mask)?)
}

pub fn write_checkpoint(path: &Path, model: &MaskGan) -> Result<()> {
    let bytes = Checkpoint::capture_all(model).to_bytes()?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(Checkpoint::from_bytes(&bytes)?)
}

//! Binary masks and the masked context `m(x)`.
//!
//! A mask bit of `1` keeps the token, `0` blanks it with `<m>`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng as _;

use crate::corpus::{TokenSeq, MASK_ID};
use crate::error::{invalid, Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all_kept(len: usize) -> Self {
        Self { bits: vec![true; len] }
    }

    pub fn all_masked(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_masked(&self, t: usize) -> bool {
        !self.bits[t]
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| !**b).map(|(i, _)| i)
    }

    pub fn masked_count(&self) -> usize {
        self.bits.iter().filter(|b| !**b).count()
    }

    /// Fraction of positions blanked.
    pub fn rate(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.masked_count() as f64 / self.bits.len() as f64
        }
    }

    /// Number of maximal runs of blanked positions.
    pub fn masked_runs(&self) -> usize {
        let mut runs = 0;
        let mut prev_kept = true;
        for &b in &self.bits {
            if !b && prev_kept {
                runs += 1;
            }
            prev_kept = b;
        }
        runs
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(invalid(alloc::format!("mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Mask::from_bits)
    }
}

fn check_rate(t: usize, rate: f64) -> Result<()> {
    if t == 0 {
        return Err(invalid("mask length must be at least 1"));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(invalid(alloc::format!("mask rate {rate} outside [0, 1]")));
    }
    Ok(())
}

/// Number of blanked positions for a contiguous mask: `round(rate·T)`,
/// halves rounded to even.
pub fn contiguous_block_len(t: usize, rate: f64) -> usize {
    math::round_half_even(rate * t as f64) as usize
}

/// One block of `round(rate·T)` blanks whose start is chosen by the caller.
pub fn contiguous_mask_at(t: usize, rate: f64, start: usize) -> Result<Mask> {
    check_rate(t, rate)?;
    let k = contiguous_block_len(t, rate);
    if start + k > t {
        return Err(invalid(alloc::format!("block of {k} at {start} overruns length {t}")));
    }
    Ok(Mask::from_bits((0..t).map(|i| i < start || i >= start + k).collect()))
}

/// One block of `round(rate·T)` blanks at a uniformly drawn offset.
pub fn contiguous_mask(t: usize, rate: f64, rng: &mut crate::Rng) -> Result<Mask> {
    check_rate(t, rate)?;
    let k = contiguous_block_len(t, rate);
    let start = rng.gen_range(0..=t - k);
    contiguous_mask_at(t, rate, start)
}

/// Each position blanked independently with probability `rate`.
pub fn bernoulli_mask(t: usize, rate: f64, rng: &mut crate::Rng) -> Result<Mask> {
    check_rate(t, rate)?;
    Ok(Mask::from_bits((0..t).map(|_| rng.gen::<f64>() >= rate).collect()))
}

/// How training masks are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskRegime {
    Contiguous,
    Bernoulli,
}

impl MaskRegime {
    pub fn sample(self, t: usize, rate: f64, rng: &mut crate::Rng) -> Result<Mask> {
        match self {
            Self::Contiguous => contiguous_mask(t, rate, rng),
            Self::Bernoulli => bernoulli_mask(t, rate, rng),
        }
    }
}

impl fmt::Display for MaskRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Contiguous => "contiguous",
            Self::Bernoulli => "bernoulli",
        })
    }
}

impl FromStr for MaskRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contiguous" => Ok(Self::Contiguous),
            "bernoulli" => Ok(Self::Bernoulli),
            _ => Err(invalid(alloc::format!("unknown mask regime {s:?}"))),
        }
    }
}

/// A sequence together with its mask and masked rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSeq {
    pub original: TokenSeq,
    pub mask: Mask,
    pub masked: TokenSeq,
}

impl MaskedSeq {
    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }
}

/// Replaces blanked positions of `x` with `<m>`.
pub fn apply_mask(x: &TokenSeq, m: &Mask) -> Result<MaskedSeq> {
    if x.len() != m.len() {
        return Err(Error::Length {
            expected: x.len(),
            actual: m.len(),
        });
    }
    let masked = x
        .iter()
        .zip(m.bits())
        .map(|(&tok, &keep)| if keep { tok } else { MASK_ID })
        .collect::<Vec<_>>();
    Ok(MaskedSeq {
        original: x.clone(),
        mask: m.clone(),
        masked: TokenSeq(masked),
    })
}

/// Renders a masked sequence with `blank` at masked positions.
pub fn render_masked(ms: &MaskedSeq, vocab: &crate::corpus::Vocab, blank: &str) -> String {
    let mut out = String::new();
    for (t, &id) in ms.original.iter().enumerate() {
        if t > 0 {
            out.push(' ');
        }
        if ms.mask.is_masked(t) {
            out.push_str(blank);
        } else {
            out.push_str(vocab.token(id).unwrap_or(crate::corpus::UNK_TOKEN));
        }
    }
    out
}

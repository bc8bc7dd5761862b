//! Word- and sentence-level segmentation with a unigram lexicon: Viterbi,
//! marginals, subword-regularization sampling, n-best and taboo sampling.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Segmentation};
use crate::lexicon::SubwordLexicon;
use crate::scalar::Scalar;

pub fn viterbi_segment<F: Scalar>(model: &SubwordLexicon<F>, word: &str) -> Segmentation {
    Lattice::new(model, word).viterbi().0
}

pub fn marginal_logprob<F: Scalar>(model: &SubwordLexicon<F>, word: &str) -> F {
    Lattice::new(model, word).marginal_logprob()
}

fn check_temperature<F: Scalar>(temperature: F) -> Result<()> {
    if temperature > F::zero() && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("temperature must be positive, got {temperature}")))
    }
}

/// Samples a segmentation with probability ∝ `P(s)^(1/temperature)`.
pub fn sample_segment<F: Scalar, R: Rng + ?Sized>(
    model: &SubwordLexicon<F>,
    word: &str,
    temperature: F,
    rng: &mut R,
) -> Result<Segmentation> {
    check_temperature(temperature)?;
    Ok(Lattice::new(model, word).sample(temperature, rng))
}

pub fn nbest_segment<F: Scalar>(model: &SubwordLexicon<F>, word: &str, n: usize) -> Result<Vec<(Segmentation, F)>> {
    if n == 0 {
        return Err(Error::OutOfRange("n-best size must be at least 1".into()));
    }
    Ok(Lattice::new(model, word).nbest(n))
}

/// Samples one segmentation, then a second one from the model with every
/// multi-character morph of the first forbidden. Single characters may be
/// reused, so the second draw always exists.
pub fn taboo_sample<F: Scalar, R: Rng + ?Sized>(
    model: &SubwordLexicon<F>,
    word: &str,
    temperature: F,
    rng: &mut R,
) -> Result<(Segmentation, Segmentation)> {
    check_temperature(temperature)?;
    Ok(taboo_pair(model, word, temperature, rng))
}

fn taboo_pair<F: Scalar, R: Rng + ?Sized>(
    model: &SubwordLexicon<F>,
    word: &str,
    temperature: F,
    rng: &mut R,
) -> (Segmentation, Segmentation) {
    let first = Lattice::new(model, word).sample(temperature, rng);
    let taboo: HashSet<u32> = first
        .morphs
        .iter()
        .filter(|m| m.chars().nth(1).is_some())
        .filter_map(|m| model.id(m))
        .collect();
    let second = if taboo.is_empty() {
        Lattice::new(model, word).sample(temperature, rng)
    } else {
        Lattice::with_filter(model, word, |id| !taboo.contains(&id)).sample(temperature, rng)
    };
    (first, second)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentMode {
    Viterbi,
    Sample,
    Taboo,
}

impl std::str::FromStr for SegmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(SegmentMode::Viterbi),
            "sample" => Ok(SegmentMode::Sample),
            "taboo" => Ok(SegmentMode::Taboo),
            other => Err(Error::Config(format!("unknown segmentation mode {other:?}"))),
        }
    }
}

/// Result of segmenting a sentence; taboo mode yields two token sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segmented {
    Single(Vec<String>),
    Pair(Vec<String>, Vec<String>),
}

/// Segments each whitespace-separated word independently. Every word is
/// prefixed with the lexicon's marker before segmentation, so the first
/// morph of each word carries the marker.
///
/// In taboo mode the two per-word segmentations are distributed over the
/// outputs by a uniformly drawn mask with `⌊n_words / 2⌋` ones: words whose
/// bit is set have their pair swapped.
pub fn segment_sentence<F: Scalar, R: Rng + ?Sized>(
    model: &SubwordLexicon<F>,
    sentence: &str,
    mode: SegmentMode,
    temperature: F,
    rng: &mut R,
) -> Result<Segmented> {
    check_temperature(temperature)?;
    let marker = model.marker();
    let mut buf = String::new();
    let mut marked = |w: &str| {
        buf.clear();
        buf.push(marker);
        buf.push_str(w);
        buf.clone()
    };
    match mode {
        SegmentMode::Viterbi | SegmentMode::Sample => {
            let mut out = Vec::new();
            for w in sentence.split_whitespace() {
                let word = marked(w);
                let lattice = Lattice::new(model, &word);
                let seg = match mode {
                    SegmentMode::Viterbi => lattice.viterbi().0,
                    _ => lattice.sample(temperature, rng),
                };
                out.extend(seg.morphs);
            }
            Ok(Segmented::Single(out))
        }
        SegmentMode::Taboo => {
            let pairs: Vec<(Segmentation, Segmentation)> = sentence
                .split_whitespace()
                .map(|w| taboo_pair(model, &marked(w), temperature, rng))
                .collect();
            let mask = half_mask(pairs.len(), rng);
            let (mut src, mut tgt) = (Vec::new(), Vec::new());
            for ((a, b), swap) in pairs.into_iter().zip(mask) {
                let (a, b) = if swap { (b, a) } else { (a, b) };
                src.extend(a.morphs);
                tgt.extend(b.morphs);
            }
            Ok(Segmented::Pair(src, tgt))
        }
    }
}

/// Uniform draw from the binary masks of length `n` with exactly `⌊n/2⌋` ones.
pub fn half_mask<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    mask.shuffle(rng);
    mask
}

/// Joins marker-prefixed tokens back into a sentence.
pub fn detokenize(tokens: &[impl AsRef<str>], marker: char) -> String {
    let mut out = String::new();
    for t in tokens {
        for c in t.as_ref().chars() {
            out.push(if c == marker { ' ' } else { c });
        }
    }
    out.trim_start_matches(' ').to_string()
}

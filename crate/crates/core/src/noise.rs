//! Stochastic corruption operators and the three training-time pipelines.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lexicon::SubwordLexicon;
use crate::scalar::Scalar;
use crate::unigram::{segment_sentence, SegmentMode, Segmented};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Maximum reordering distance.
    pub reorder_k: f64,
    pub p_drop: f64,
    pub p_insert: f64,
    pub p_substitute: f64,
    pub p_boundary: f64,
    /// When set, substitution replaces tokens with this symbol instead of
    /// drawing from `insert_pool`.
    pub mask_symbol: Option<String>,
    pub insert_pool: Vec<String>,
    /// Segmentation sampling temperature.
    pub temperature: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            reorder_k: 0.0,
            p_drop: 0.0,
            p_insert: 0.0,
            p_substitute: 0.0,
            p_boundary: 0.0,
            mask_symbol: None,
            insert_pool: Vec::new(),
            temperature: 1.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_drop", self.p_drop),
            ("p_insert", self.p_insert),
            ("p_substitute", self.p_substitute),
            ("p_boundary", self.p_boundary),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Noise(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.p_drop >= 1.0 {
            return Err(Error::Noise("p_drop must be below 1".into()));
        }
        if !(self.reorder_k >= 0.0) || !self.reorder_k.is_finite() {
            return Err(Error::Noise(format!("reorder_k must be >= 0, got {}", self.reorder_k)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Noise(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.p_insert > 0.0 && self.insert_pool.is_empty() {
            return Err(Error::Noise("p_insert > 0 requires a nonempty insert pool".into()));
        }
        if self.p_substitute > 0.0 && self.mask_symbol.is_none() && self.insert_pool.is_empty() {
            return Err(Error::Noise("p_substitute > 0 requires a mask symbol or an insert pool".into()));
        }
        Ok(())
    }

    fn substitution(&self) -> Substitution<'_, String> {
        match &self.mask_symbol {
            Some(m) => Substitution::Mask(m),
            None => Substitution::Pool(&self.insert_pool),
        }
    }
}

/// Sorts tokens by `i + offset_i`; ties keep input order.
pub fn reorder_with_offsets<T: Clone>(tokens: &[T], offsets: &[f64]) -> Vec<T> {
    let mut keyed: Vec<(f64, usize)> = offsets.iter().enumerate().map(|(i, o)| (i as f64 + o, i)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, i)| tokens[i].clone()).collect()
}

/// Local reordering: each index gets a key `i + U(0, k)` and tokens are
/// stably sorted by key, so no token moves more than `⌈k⌉` places.
pub fn local_reorder<T: Clone, R: Rng + ?Sized>(tokens: &[T], k: f64, rng: &mut R) -> Vec<T> {
    if k <= 0.0 {
        return tokens.to_vec();
    }
    let offsets: Vec<f64> = (0..tokens.len()).map(|_| rng.gen::<f64>() * k).collect();
    reorder_with_offsets(tokens, &offsets)
}

/// Drops each token with probability `p`. If every token would be dropped,
/// one uniformly chosen token is kept.
pub fn token_drop<T: Clone, R: Rng + ?Sized>(tokens: &[T], p: f64, rng: &mut R) -> Vec<T> {
    if p <= 0.0 || tokens.is_empty() {
        return tokens.to_vec();
    }
    let kept: Vec<T> = tokens.iter().filter(|_| !rng.gen_bool(p)).cloned().collect();
    if kept.is_empty() {
        vec![tokens[rng.gen_range(0..tokens.len())].clone()]
    } else {
        kept
    }
}

/// At each of the `n + 1` gaps, inserts with probability `p` one token drawn
/// uniformly from `pool`.
pub fn token_insert<T: Clone, R: Rng + ?Sized>(tokens: &[T], p: f64, pool: &[T], rng: &mut R) -> Result<Vec<T>> {
    if p <= 0.0 {
        return Ok(tokens.to_vec());
    }
    if pool.is_empty() {
        return Err(Error::Noise("insertion needs a nonempty pool".into()));
    }
    let mut out = Vec::with_capacity(tokens.len() + 4);
    for gap in 0..=tokens.len() {
        if rng.gen_bool(p) {
            out.push(pool[rng.gen_range(0..pool.len())].clone());
        }
        if let Some(t) = tokens.get(gap) {
            out.push(t.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub enum Substitution<'a, T> {
    Pool(&'a [T]),
    Mask(&'a T),
}

/// Replaces each token with probability `p`, by a pool draw or the mask.
pub fn token_substitute<T: Clone, R: Rng + ?Sized>(
    tokens: &[T],
    p: f64,
    with: Substitution<'_, T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    if p <= 0.0 {
        return Ok(tokens.to_vec());
    }
    if let Substitution::Pool(pool) = with {
        if pool.is_empty() {
            return Err(Error::Noise("substitution needs a nonempty pool".into()));
        }
    }
    Ok(tokens
        .iter()
        .map(|t| {
            if !rng.gen_bool(p) {
                return t.clone();
            }
            match with {
                Substitution::Mask(m) => m.clone(),
                Substitution::Pool(pool) => pool[rng.gen_range(0..pool.len())].clone(),
            }
        })
        .collect())
}

/// Adds the marker to a token lacking it, or removes it if present.
pub fn toggle_marker(token: &str, marker: char) -> String {
    match token.strip_prefix(marker) {
        Some(rest) => rest.to_string(),
        None => format!("{marker}{token}"),
    }
}

/// Toggles the word-initial marker of each token with probability `p`.
pub fn word_boundary_noise<R: Rng + ?Sized>(tokens: &[String], p: f64, marker: char, rng: &mut R) -> Vec<String> {
    if p <= 0.0 {
        return tokens.to_vec();
    }
    tokens
        .iter()
        .map(|t| if rng.gen_bool(p) { toggle_marker(t, marker) } else { t.clone() })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineKind {
    /// (a) parallel data: sampled segmentation on both sides.
    Parallel,
    /// (b) monolingual autoencoder with reorder, segmentation and drop.
    MonoNoised,
    /// (c) monolingual autoencoder with taboo segmentation.
    MonoTaboo,
}

impl std::str::FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" | "a" => Ok(PipelineKind::Parallel),
            "mono-noised" | "b" => Ok(PipelineKind::MonoNoised),
            "mono-taboo" | "c" => Ok(PipelineKind::MonoTaboo),
            other => Err(Error::Config(format!("unknown pipeline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Example<'a> {
    Pair(&'a str, &'a str),
    Mono(&'a str),
}

fn sample_tokens<F: Scalar, R: Rng + ?Sized>(
    model: &SubwordLexicon<F>,
    text: &str,
    temperature: F,
    rng: &mut R,
) -> Result<Vec<String>> {
    match segment_sentence(model, text, SegmentMode::Sample, temperature, rng)? {
        Segmented::Single(t) => Ok(t),
        Segmented::Pair(..) => unreachable!("sample mode yields one sequence"),
    }
}

/// Runs one example through a pipeline, returning `(source, target)`
/// subword tokens. Control tokens and length filtering are left to the
/// caller.
///
/// Pipeline (b) reorders words, segments, then drops subwords; insertion,
/// substitution and boundary noise follow in that order when enabled. Its
/// target is an independently sampled segmentation of the clean sentence.
pub fn apply_pipeline<F: Scalar, R: Rng + ?Sized>(
    example: Example<'_>,
    kind: PipelineKind,
    model: &SubwordLexicon<F>,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<(Vec<String>, Vec<String>)> {
    let temperature = F::of(cfg.temperature);
    match (kind, example) {
        (PipelineKind::Parallel, Example::Pair(src, tgt)) => Ok((
            sample_tokens(model, src, temperature, rng)?,
            sample_tokens(model, tgt, temperature, rng)?,
        )),
        (PipelineKind::MonoNoised, Example::Mono(sentence)) => {
            let words: Vec<&str> = sentence.split_whitespace().collect();
            let reordered = local_reorder(&words, cfg.reorder_k, rng).join(" ");
            let mut src = sample_tokens(model, &reordered, temperature, rng)?;
            src = token_drop(&src, cfg.p_drop, rng);
            src = token_insert(&src, cfg.p_insert, &cfg.insert_pool, rng)?;
            src = token_substitute(&src, cfg.p_substitute, cfg.substitution(), rng)?;
            src = word_boundary_noise(&src, cfg.p_boundary, model.marker(), rng);
            let tgt = sample_tokens(model, sentence, temperature, rng)?;
            Ok((src, tgt))
        }
        (PipelineKind::MonoTaboo, Example::Mono(sentence)) => {
            match segment_sentence(model, sentence, SegmentMode::Taboo, temperature, rng)? {
                Segmented::Pair(a, b) => Ok((a, b)),
                Segmented::Single(_) => unreachable!("taboo mode yields two sequences"),
            }
        }
        (kind, _) => Err(Error::Noise(format!("example shape does not match pipeline {kind:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::DEFAULT_MARKER;
    use crate::unigram::detokenize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn toks(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn reorder_examples() {
        let t = toks(5);
        assert_eq!(local_reorder(&t, 0.0, &mut rng(1)), t);
        let three = vec!["t1", "t2", "t3"];
        assert_eq!(reorder_with_offsets(&three, &[1.8, 0.2, 0.0]), vec!["t2", "t1", "t3"]);
        // Equal keys keep input order.
        assert_eq!(reorder_with_offsets(&three, &[1.0, 0.0, 0.0]), vec!["t1", "t2", "t3"]);
    }

    #[test]
    fn reorder_is_permutation_with_bound() {
        let t: Vec<usize> = (0..30).collect();
        let mut r = rng(2);
        for k in [0.5, 1.0, 2.5] {
            for _ in 0..2000 {
                let out = local_reorder(&t, k, &mut r);
                let mut sorted = out.clone();
                sorted.sort();
                assert_eq!(sorted, t);
                for (pos, &orig) in out.iter().enumerate() {
                    assert!((pos as i64 - orig as i64).unsigned_abs() as f64 <= k.ceil());
                }
            }
        }
    }

    #[test]
    fn drop_identity_and_guard() {
        let t = toks(4);
        assert_eq!(token_drop(&t, 0.0, &mut rng(1)), t);
        let one = vec!["only".to_string()];
        let mut r = rng(3);
        for _ in 0..100 {
            assert_eq!(token_drop(&one, 0.99, &mut r), one);
        }
        assert!(token_drop::<String, _>(&[], 0.5, &mut r).is_empty());
    }

    #[test]
    fn drop_mean_survivors() {
        let t = toks(20);
        let mut r = rng(4);
        let trials = 100_000;
        let total: usize = (0..trials).map(|_| token_drop(&t, 0.1, &mut r).len()).sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 18.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn insert_behaviour() {
        let t = toks(9);
        let pool = vec!["X".to_string()];
        assert_eq!(token_insert(&t, 0.0, &pool, &mut rng(1)).unwrap(), t);
        assert!(token_insert(&t, 0.5, &[], &mut rng(1)).is_err());
        let mut r = rng(5);
        let trials = 100_000;
        let mut inserted = 0usize;
        for _ in 0..trials {
            let out = token_insert(&t, 0.2, &pool, &mut r).unwrap();
            let extra: Vec<&String> = out.iter().filter(|s| *s == "X").collect();
            inserted += extra.len();
            let rest: Vec<&String> = out.iter().filter(|s| *s != "X").collect();
            assert_eq!(rest, t.iter().collect::<Vec<_>>());
        }
        let expected = 10.0 * 0.2 * trials as f64;
        assert!(((inserted as f64) - expected).abs() < 0.01 * expected);
    }

    #[test]
    fn substitute_behaviour() {
        let t = toks(10);
        let mask = "<mask>".to_string();
        assert_eq!(token_substitute(&t, 0.0, Substitution::Mask(&mask), &mut rng(1)).unwrap(), t);
        let all = token_substitute(&t, 1.0, Substitution::Mask(&mask), &mut rng(1)).unwrap();
        assert!(all.iter().all(|s| *s == mask));
        assert!(token_substitute(&t, 0.3, Substitution::Pool(&[]), &mut rng(1)).is_err());
        let mut r = rng(6);
        let trials = 100_000;
        let mut subs = 0usize;
        for _ in 0..trials {
            let out = token_substitute(&t, 0.15, Substitution::Mask(&mask), &mut r).unwrap();
            assert_eq!(out.len(), t.len());
            subs += out.iter().filter(|s| **s == mask).count();
        }
        let expected = 10.0 * 0.15 * trials as f64;
        assert!(((subs as f64) - expected).abs() < 0.01 * expected);
    }

    #[test]
    fn boundary_toggle() {
        let m = DEFAULT_MARKER;
        assert_eq!(toggle_marker("kielinen", m), format!("{m}kielinen"));
        assert_eq!(toggle_marker(&format!("{m}kielinen"), m), "kielinen");
        let t = vec![format!("{m}suomen"), "kielinen".to_string()];
        assert_eq!(word_boundary_noise(&t, 0.0, m, &mut rng(1)), t);
        let flipped = word_boundary_noise(&t, 1.0, m, &mut rng(1));
        assert_eq!(word_boundary_noise(&flipped, 1.0, m, &mut rng(1)), t);
    }

    fn char_model() -> SubwordLexicon<f64> {
        let mut entries: Vec<(String, f64)> = "abcdefghijklmnopqrstuvwxyz".chars().map(|c| (c.to_string(), 1.0)).collect();
        entries.push((DEFAULT_MARKER.to_string(), 1.0));
        for m in ["▁the", "▁cat", "at", "he", "▁s"] {
            entries.push((m.to_string(), 3.0));
        }
        SubwordLexicon::from_weights(DEFAULT_MARKER, entries).unwrap()
    }

    #[test]
    fn copy_task_degenerate_case() {
        let model = char_model();
        let cfg = NoiseConfig {
            temperature: 1e-6,
            ..NoiseConfig::default()
        };
        let (src, tgt) = apply_pipeline(Example::Mono("the cat sat"), PipelineKind::MonoNoised, &model, &cfg, &mut rng(1)).unwrap();
        assert_eq!(src, tgt);
    }

    #[test]
    fn parallel_pipeline_only_segments() {
        let model = char_model();
        let cfg = NoiseConfig {
            reorder_k: 3.0,
            p_drop: 0.5,
            ..NoiseConfig::default()
        };
        let mut r = rng(2);
        for _ in 0..50 {
            let (s, t) = apply_pipeline(Example::Pair("the cat sat", "a b c"), PipelineKind::Parallel, &model, &cfg, &mut r).unwrap();
            assert_eq!(detokenize(&s, DEFAULT_MARKER), "the cat sat");
            assert_eq!(detokenize(&t, DEFAULT_MARKER), "a b c");
        }
    }

    #[test]
    fn noised_target_is_clean() {
        let model = char_model();
        let cfg = NoiseConfig {
            reorder_k: 3.0,
            p_drop: 0.2,
            p_substitute: 0.1,
            p_boundary: 0.1,
            mask_symbol: Some("<mask>".into()),
            ..NoiseConfig::default()
        };
        let mut r = rng(3);
        for _ in 0..200 {
            let (_, t) = apply_pipeline(Example::Mono("the cat sat on the mat"), PipelineKind::MonoNoised, &model, &cfg, &mut r).unwrap();
            assert_eq!(detokenize(&t, DEFAULT_MARKER), "the cat sat on the mat");
        }
    }

    #[test]
    fn mismatched_example_shape() {
        let model = char_model();
        assert!(apply_pipeline(Example::Mono("x"), PipelineKind::Parallel, &model, &NoiseConfig::default(), &mut rng(1)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = NoiseConfig::default();
        assert!(c.validate().is_ok());
        c.p_insert = 0.1;
        assert!(c.validate().is_err());
        c.insert_pool = vec!["lol".into()];
        assert!(c.validate().is_ok());
        c.p_drop = 1.0;
        assert!(c.validate().is_err());
    }
}

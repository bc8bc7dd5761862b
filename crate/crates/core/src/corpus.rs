//! Corpus ingestion, cleaning, balanced subsampling and substring statistics.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Word type → occurrence count, iterated in lexicographic order.
pub type WordCounts = BTreeMap<String, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    ParallelSide,
    Monolingual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub id: String,
    pub language: String,
    pub kind: CorpusKind,
    pub sentences: Vec<String>,
    /// Source-corpus label of each line.
    pub origin: Vec<Arc<str>>,
}

impl Corpus {
    pub fn new(id: &str, language: &str, kind: CorpusKind, sentences: Vec<String>) -> Self {
        let label: Arc<str> = Arc::from(id);
        let origin = vec![label; sentences.len()];
        Corpus {
            id: id.to_string(),
            language: language.to_string(),
            kind,
            sentences,
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Line filters applied at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct CleaningRules {
    /// Lines longer than this (in characters, before stripping) are dropped.
    pub max_raw_chars: usize,
    /// Minimum share of alphabetic characters in the stripped line.
    pub min_letter_ratio: f64,
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            max_raw_chars: 10_000,
            min_letter_ratio: 0.2,
        }
    }
}

impl CleaningRules {
    /// Returns the stripped line if it survives every rule.
    pub fn clean<'a>(&self, raw: &'a str) -> Option<&'a str> {
        if raw.chars().count() > self.max_raw_chars {
            return None;
        }
        let line = raw.trim();
        if line.is_empty() {
            return None;
        }
        let (mut letters, mut total) = (0usize, 0usize);
        for c in line.chars() {
            total += 1;
            if c.is_alphabetic() {
                letters += 1;
            }
        }
        if (letters as f64) < self.min_letter_ratio * total as f64 {
            return None;
        }
        Some(line)
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| Error::Encoding {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        lines.push(line.to_string());
    }
    // A trailing newline does not start another line.
    if bytes.ends_with(b"\n") {
        lines.pop();
    }
    Ok(lines)
}

fn corpus_id(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads a monolingual corpus, one sentence per line.
pub fn load_corpus(path: impl AsRef<Path>, language: &str, cleaning: &CleaningRules) -> Result<Corpus> {
    let path = path.as_ref();
    let sentences = read_lines(path)?
        .iter()
        .filter_map(|l| cleaning.clean(l).map(str::to_string))
        .collect();
    Ok(Corpus::new(&corpus_id(path), language, CorpusKind::Monolingual, sentences))
}

/// Loads two aligned files. A pair is dropped when either side fails cleaning.
pub fn load_parallel(
    source: (impl AsRef<Path>, &str),
    target: (impl AsRef<Path>, &str),
    cleaning: &CleaningRules,
) -> Result<(Corpus, Corpus)> {
    let (src_path, tgt_path) = (source.0.as_ref(), target.0.as_ref());
    let src_lines = read_lines(src_path)?;
    let tgt_lines = read_lines(tgt_path)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::Misaligned {
            left: src_path.display().to_string(),
            left_lines: src_lines.len(),
            right: tgt_path.display().to_string(),
            right_lines: tgt_lines.len(),
        });
    }
    let (mut src, mut tgt) = (Vec::new(), Vec::new());
    for (s, t) in src_lines.iter().zip(&tgt_lines) {
        if let (Some(s), Some(t)) = (cleaning.clean(s), cleaning.clean(t)) {
            src.push(s.to_string());
            tgt.push(t.to_string());
        }
    }
    Ok((
        Corpus::new(&corpus_id(src_path), source.1, CorpusKind::ParallelSide, src),
        Corpus::new(&corpus_id(tgt_path), target.1, CorpusKind::ParallelSide, tgt),
    ))
}

/// Draws `n_total` sentences, an equal share from each corpus.
///
/// Each corpus contributes `n_total / m` lines sampled uniformly without
/// replacement; the remainder goes one extra line each to the largest
/// corpora (earlier corpora win size ties). Sampled lines keep their
/// original order within each corpus.
pub fn balanced_subsample(corpora: &[Corpus], n_total: usize, seed: u64) -> Result<Corpus> {
    let first = corpora.first();
    let language = match first {
        Some(c) if corpora.iter().all(|o| o.language == c.language) => c.language.clone(),
        Some(_) => "mul".to_string(),
        None => String::new(),
    };
    let kind = first.map_or(CorpusKind::Monolingual, |c| c.kind);
    let mut out = Corpus::new("balanced", &language, kind, Vec::new());
    if n_total == 0 {
        return Ok(out);
    }
    if corpora.is_empty() {
        return Err(Error::OutOfRange(format!("cannot draw {n_total} sentences from zero corpora")));
    }

    let m = corpora.len();
    let mut quotas = vec![n_total / m; m];
    let mut by_size: Vec<usize> = (0..m).collect();
    by_size.sort_by(|&a, &b| corpora[b].len().cmp(&corpora[a].len()).then(a.cmp(&b)));
    for &i in by_size.iter().take(n_total % m) {
        quotas[i] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (corpus, &quota) in corpora.iter().zip(&quotas) {
        if corpus.len() < quota || corpus.is_empty() {
            return Err(Error::QuotaExceeded {
                corpus: corpus.id.clone(),
                quota,
                available: corpus.len(),
            });
        }
        let mut picked = index::sample(&mut rng, corpus.len(), quota).into_vec();
        picked.sort_unstable();
        for i in picked {
            out.sentences.push(corpus.sentences[i].clone());
            out.origin.push(corpus.origin[i].clone());
        }
    }
    Ok(out)
}

/// Multiset of whitespace-separated tokens.
pub fn word_counts(corpus: &Corpus) -> WordCounts {
    let mut counts = WordCounts::new();
    for s in &corpus.sentences {
        for w in s.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Word counts with the word-initial marker prepended to every word; this
/// is the form the trainers segment.
pub fn marked_word_counts(corpus: &Corpus, marker: char) -> WordCounts {
    word_counts(corpus)
        .into_iter()
        .map(|(w, c)| (format!("{marker}{w}"), c))
        .collect()
}

/// Substring frequencies collected within words.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstringCounts {
    /// Sorted by count descending, then lexicographically.
    pub entries: Vec<(String, u64)>,
    pub max_len: usize,
    pub marker: Option<char>,
}

impl SubstringCounts {
    pub fn get(&self, s: &str) -> Option<u64> {
        self.entries.iter().find(|(k, _)| k == s).map(|&(_, c)| c)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Writes `substring<TAB>count` lines in stored order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (s, c) in &self.entries {
            writeln!(w, "{s}\t{c}")?;
        }
        Ok(())
    }
}

fn sort_counts(entries: &mut [(String, u64)]) {
    entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Counts every substring of length `1..=max_len` inside each word.
///
/// When `marker` is set it is prepended to each word before counting. All
/// single characters are kept; of the multi-character substrings only the
/// `top_n` most frequent survive (ties broken lexicographically).
pub fn count_substrings(corpus: &Corpus, max_len: usize, top_n: usize, marker: Option<char>) -> SubstringCounts {
    let words: Vec<(String, u64)> = match marker {
        Some(m) => marked_word_counts(corpus, m),
        None => word_counts(corpus),
    }
    .into_iter()
    .collect();
    count_word_substrings(&words, max_len, top_n, marker)
}

/// Same as [`count_substrings`] but starting from prepared word counts
/// (markers already attached, if any).
pub fn count_word_substrings(
    words: &[(String, u64)],
    max_len: usize,
    top_n: usize,
    marker: Option<char>,
) -> SubstringCounts {
    let max_len = max_len.max(1);
    let merged = words
        .par_chunks(256)
        .map(|chunk| {
            let mut local: HashMap<&str, u64> = HashMap::new();
            for (w, c) in chunk {
                let bounds: Vec<usize> = w.char_indices().map(|(i, _)| i).chain([w.len()]).collect();
                let n = bounds.len() - 1;
                for i in 0..n {
                    for j in i + 1..=n.min(i + max_len) {
                        *local.entry(&w[bounds[i]..bounds[j]]).or_insert(0) += c;
                    }
                }
            }
            local
        })
        .reduce(HashMap::new, |mut a, b| {
            if a.len() < b.len() {
                return merge_into(b, a);
            }
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });

    let (mut singles, mut multi): (Vec<_>, Vec<_>) = merged
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .partition(|(k, _)| k.chars().nth(1).is_none());
    sort_counts(&mut multi);
    multi.truncate(top_n);
    singles.extend(multi);
    sort_counts(&mut singles);
    SubstringCounts {
        entries: singles,
        max_len,
        marker,
    }
}

fn merge_into<'a>(mut a: HashMap<&'a str, u64>, b: HashMap<&'a str, u64>) -> HashMap<&'a str, u64> {
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

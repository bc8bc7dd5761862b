//! The unigram subword lexicon: morphs with log-probabilities.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Word-initial boundary marker used unless configured otherwise.
pub const DEFAULT_MARKER: char = '\u{2581}';

/// Longest morph considered during lattice construction, in characters.
pub const MAX_MORPH_LEN: usize = 24;

const HEADER_PREFIX: &str = "#subseg-lexicon v1 marker=";

/// Character trie mapping morph strings to lexicon ids.
#[derive(Debug, Clone, Default)]
struct Trie {
    nodes: Vec<TrieNode>,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: Vec<(char, u32)>,
    id: Option<u32>,
}

impl Trie {
    fn new() -> Self {
        Trie {
            nodes: vec![TrieNode::default()],
        }
    }

    fn insert(&mut self, key: &str, id: u32) {
        let mut node = 0usize;
        for c in key.chars() {
            let next = match self.nodes[node].children.binary_search_by_key(&c, |&(k, _)| k) {
                Ok(pos) => self.nodes[node].children[pos].1 as usize,
                Err(pos) => {
                    let fresh = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(pos, (c, fresh as u32));
                    fresh
                }
            };
            node = next;
        }
        self.nodes[node].id = Some(id);
    }

    #[inline]
    fn step(&self, node: usize, c: char) -> Option<usize> {
        let ch = &self.nodes[node].children;
        ch.binary_search_by_key(&c, |&(k, _)| k).ok().map(|p| ch[p].1 as usize)
    }
}

/// Unigram lexicon. Morphs are kept in canonical file order (log-probability
/// descending, then lexicographic) and a morph's id is its position in that
/// order.
#[derive(Debug, Clone)]
pub struct SubwordLexicon<F> {
    morphs: Vec<(String, F)>,
    index: HashMap<String, u32>,
    marker: char,
    alphabet: BTreeSet<char>,
    unk_logprob: F,
    trie: Trie,
}

impl<F: Scalar> PartialEq for SubwordLexicon<F> {
    fn eq(&self, other: &Self) -> bool {
        self.marker == other.marker && self.morphs == other.morphs
    }
}

fn canonical_order<F: Scalar>(a: &(String, F), b: &(String, F)) -> std::cmp::Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

impl<F: Scalar> SubwordLexicon<F> {
    /// Builds a lexicon from log-probabilities that already sum to one.
    pub fn from_log_probs(marker: char, morphs: impl IntoIterator<Item = (String, F)>) -> Result<Self> {
        let mut morphs: Vec<(String, F)> = morphs.into_iter().collect();
        if morphs.is_empty() {
            return Err(Error::Lexicon("no morphs".into()));
        }
        for (m, lp) in &morphs {
            if m.is_empty() {
                return Err(Error::Lexicon("empty morph".into()));
            }
            if m.chars().any(char::is_whitespace) {
                return Err(Error::Lexicon(format!("morph {m:?} contains whitespace")));
            }
            if lp.is_nan() || *lp > F::zero() {
                return Err(Error::Lexicon(format!("morph {m:?} has invalid log-probability {lp}")));
            }
        }
        let total: F = morphs.iter().map(|(_, lp)| lp.exp()).sum();
        if (total - F::one()).abs() > F::norm_tolerance() {
            return Err(Error::Lexicon(format!("probabilities sum to {total}, not 1")));
        }
        morphs.sort_by(canonical_order);

        let mut index = HashMap::with_capacity(morphs.len());
        let mut trie = Trie::new();
        let mut alphabet = BTreeSet::new();
        for (i, (m, _)) in morphs.iter().enumerate() {
            if index.insert(m.clone(), i as u32).is_some() {
                return Err(Error::Lexicon(format!("duplicate morph {m:?}")));
            }
            trie.insert(m, i as u32);
            let mut chars = m.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                alphabet.insert(c);
            }
        }
        for (m, _) in &morphs {
            if let Some(c) = m.chars().find(|c| !alphabet.contains(c)) {
                return Err(Error::Lexicon(format!(
                    "character {c:?} of morph {m:?} is not itself a morph"
                )));
            }
        }
        let min_lp = morphs
            .iter()
            .map(|(_, lp)| *lp)
            .filter(|lp| lp.is_finite())
            .fold(F::zero(), F::min);
        Ok(SubwordLexicon {
            morphs,
            index,
            marker,
            alphabet,
            unk_logprob: min_lp - F::of(10.0),
            trie,
        })
    }

    /// Builds a lexicon from non-negative weights, normalizing them.
    pub fn from_weights(marker: char, weights: impl IntoIterator<Item = (String, F)>) -> Result<Self> {
        let weights: Vec<(String, F)> = weights.into_iter().collect();
        let total: F = weights.iter().map(|(_, w)| *w).sum();
        if !(total > F::zero()) || !total.is_finite() {
            return Err(Error::Lexicon(format!("weights sum to {total}")));
        }
        let log_total = total.ln();
        Self::from_log_probs(marker, weights.into_iter().map(|(m, w)| (m, w.ln() - log_total)))
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn alphabet(&self) -> &BTreeSet<char> {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.morphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.morphs.is_empty()
    }

    /// Number of morphs longer than one character.
    pub fn num_multi(&self) -> usize {
        self.morphs.len() - self.alphabet.len()
    }

    pub fn id(&self, morph: &str) -> Option<u32> {
        self.index.get(morph).copied()
    }

    pub fn morph(&self, id: u32) -> &str {
        &self.morphs[id as usize].0
    }

    pub fn logprob(&self, id: u32) -> F {
        self.morphs[id as usize].1
    }

    pub fn get(&self, morph: &str) -> Option<F> {
        self.id(morph).map(|i| self.logprob(i))
    }

    /// Log-probability assigned to an out-of-lexicon character.
    pub fn unk_logprob(&self) -> F {
        self.unk_logprob
    }

    /// Lattice weight of a morph: its log-probability, except that a
    /// single character with zero probability scores like an unknown
    /// character.
    pub fn arc_logprob(&self, id: u32) -> F {
        let lp = self.logprob(id);
        if lp == F::neg_infinity() && !self.is_multi(id) {
            self.unk_logprob
        } else {
            lp
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, F)> + '_ {
        self.morphs.iter().map(|(m, lp)| (m.as_str(), *lp))
    }

    pub fn is_multi(&self, id: u32) -> bool {
        self.morphs[id as usize].0.chars().nth(1).is_some()
    }

    /// Calls `f(end_char, id)` for every lexicon morph that is a prefix of
    /// `chars`, up to `max_len` characters.
    #[inline]
    pub(crate) fn for_each_prefix(&self, chars: &[char], max_len: usize, mut f: impl FnMut(usize, u32)) {
        let mut node = 0usize;
        for (k, &c) in chars.iter().take(max_len).enumerate() {
            match self.trie.step(node, c) {
                Some(n) => node = n,
                None => return,
            }
            if let Some(id) = self.trie.nodes[node].id {
                f(k + 1, id);
            }
        }
    }

    /// Writes the lexicon file format: header line, then
    /// `morph<TAB>logprob` lines in canonical order.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER_PREFIX}{}", self.marker)?;
        for (m, lp) in &self.morphs {
            writeln!(w, "{m}\t{lp}")?;
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("lexicon is UTF-8")
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format {
                what: "lexicon",
                line: 1,
                msg: "empty file".into(),
            })??;
        let marker_str = header.strip_prefix(HEADER_PREFIX).ok_or_else(|| Error::Format {
            what: "lexicon",
            line: 1,
            msg: format!("bad header {header:?}"),
        })?;
        let mut mc = marker_str.chars();
        let marker = match (mc.next(), mc.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(Error::Format {
                    what: "lexicon",
                    line: 1,
                    msg: format!("marker must be one character, got {marker_str:?}"),
                })
            }
        };
        let mut morphs = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let bad = |msg: String| Error::Format {
                what: "lexicon",
                line: i + 2,
                msg,
            };
            let (m, lp) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected morph<TAB>logprob".into()))?;
            let lp: F = lp.parse().map_err(|_| bad(format!("bad log-probability {lp:?}")))?;
            morphs.push((m.to_string(), lp));
        }
        Self::from_log_probs(marker, morphs)
    }
}

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

const HEADER: &str = "#subseg-bpe v1";

/// Character-level BPE merges in application order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    pub merges: Vec<(String, String)>,
    pub vocab: BTreeSet<String>,
}

impl BpeModel {
    /// Applies the merges to one word, lowest-ranked pair first.
    pub fn segment(&self, word: &str) -> Vec<String> {
        let ranks: HashMap<(&str, &str), usize> = self
            .merges
            .iter()
            .enumerate()
            .map(|(r, (a, b))| ((a.as_str(), b.as_str()), r))
            .collect();
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| ranks.get(&(w[0].as_str(), w[1].as_str())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == a && &symbols[i + 1] == b {
                    out.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = out;
        }
        symbols
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for (a, b) in &self.merges {
            writeln!(w, "{a}\t{b}")?;
        }
        Ok(())
    }

    /// Reads a merge list. The vocabulary is rebuilt from `alphabet` plus
    /// the merged symbols.
    pub fn read<R: BufRead>(r: R, alphabet: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next().transpose()? {
            Some(h) if h == HEADER => {}
            other => {
                return Err(Error::Format {
                    what: "bpe",
                    line: 1,
                    msg: format!("bad header {other:?}"),
                })
            }
        }
        let mut vocab: BTreeSet<String> = alphabet.into_iter().map(String::from).collect();
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let (a, b) = line.split_once('\t').ok_or_else(|| Error::Format {
                what: "bpe",
                line: i + 2,
                msg: "expected left<TAB>right".into(),
            })?;
            vocab.insert(format!("{a}{b}"));
            merges.push((a.to_string(), b.to_string()));
        }
        Ok(BpeModel { merges, vocab })
    }
}

/// Learns merges greedily: the most frequent adjacent symbol pair within
/// words is merged until the symbol inventory reaches `vocab_size`. Count
/// ties go to the lexicographically smallest pair.
pub fn train_bpe(words: &[(String, u64)], vocab_size: usize) -> Result<BpeModel> {
    let mut symbols: Vec<String> = Vec::new();
    let mut sym_id: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: String, symbols: &mut Vec<String>| -> u32 {
        *sym_id.entry(s.clone()).or_insert_with(|| {
            symbols.push(s);
            (symbols.len() - 1) as u32
        })
    };

    let mut seqs: Vec<(Vec<u32>, u64)> = Vec::with_capacity(words.len());
    for (w, c) in words {
        let seq = w.chars().map(|ch| intern(ch.to_string(), &mut symbols)).collect();
        seqs.push((seq, *c));
    }
    let alphabet = symbols.len();
    if vocab_size < alphabet {
        return Err(Error::OutOfRange(format!(
            "vocabulary size {vocab_size} is smaller than the alphabet ({alphabet})"
        )));
    }
    let mut vocab: BTreeSet<String> = symbols.iter().cloned().collect();

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (seq, c)) in seqs.iter().enumerate() {
        for p in seq.windows(2) {
            let key = (p[0], p[1]);
            *pair_counts.entry(key).or_insert(0) += c;
            where_.entry(key).or_default().insert(wi);
        }
    }

    // Max-heap on count, then smallest (left, right) strings.
    #[derive(PartialEq, Eq)]
    struct Entry {
        count: u64,
        left: String,
        right: String,
        pair: (u32, u32),
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            self.count
                .cmp(&other.count)
                .then_with(|| Reverse((&self.left, &self.right)).cmp(&Reverse((&other.left, &other.right))))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    let entry = |pair: (u32, u32), count: u64, symbols: &[String]| Entry {
        count,
        left: symbols[pair.0 as usize].clone(),
        right: symbols[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Entry> = pair_counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&p, &c)| entry(p, c, &symbols))
        .collect();

    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        let Some(top) = heap.pop() else { break };
        let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                heap.push(entry(top.pair, current, &symbols));
            }
            continue;
        }
        let merged = format!("{}{}", top.left, top.right);
        let new_id = intern(merged.clone(), &mut symbols);
        vocab.insert(merged);
        merges.push((top.left, top.right));

        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        let affected: Vec<usize> = where_.remove(&top.pair).unwrap_or_default().into_iter().collect();
        for wi in affected {
            let (seq, c) = &mut seqs[wi];
            let c = *c;
            for p in seq.windows(2) {
                let key = (p[0], p[1]);
                if let Some(v) = pair_counts.get_mut(&key) {
                    *v -= c;
                }
                touched.insert(key);
            }
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && (seq[i], seq[i + 1]) == top.pair {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
            for p in seq.windows(2) {
                let key = (p[0], p[1]);
                *pair_counts.entry(key).or_insert(0) += c;
                where_.entry(key).or_default().insert(wi);
                touched.insert(key);
            }
        }
        pair_counts.remove(&top.pair);
        let mut touched: Vec<(u32, u32)> = touched.into_iter().collect();
        touched.sort_unstable();
        for key in touched {
            match pair_counts.get(&key) {
                Some(&c) if c > 0 => heap.push(entry(key, c, &symbols)),
                Some(_) => {
                    pair_counts.remove(&key);
                }
                None => {}
            }
        }
    }
    Ok(BpeModel { merges, vocab })
}

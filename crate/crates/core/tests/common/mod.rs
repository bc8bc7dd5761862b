//! Shared fixtures: a synthetic agglutinative corpus generator, random
//! lexicons and an independent brute-force segmentation oracle.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subseg::corpus::{Corpus, CorpusKind};
use subseg::lexicon::MAX_MORPH_LEN;
use subseg::loader::{Loader, ServeConfig, TaskData, Vocabulary};
use subseg::noise::PipelineKind;
use subseg::schedule::{builtin_schedule, Preset, TaskKind, TaskRoles, TaskSpec};
use subseg::{Lexicon, MixSchedule};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Word generator: Zipf-distributed stems built from CV syllables,
/// optionally followed by one or two suffixes.
pub struct Language {
    stems: Vec<String>,
    stem_dist: WeightedIndex<f64>,
    suffixes: Vec<String>,
}

impl Language {
    pub fn new(seed: u64, n_stems: usize) -> Self {
        let mut r = rng(seed);
        let cons = ["k", "t", "p", "s", "m", "n", "l", "r", "v", "h", "j"];
        let vows = ["a", "e", "i", "o", "u", "y", "ä", "ö"];
        let syll = |r: &mut ChaCha8Rng| format!("{}{}", cons.choose(r).unwrap(), vows.choose(r).unwrap());
        let mut stems = Vec::with_capacity(n_stems);
        let mut seen = std::collections::HashSet::new();
        while stems.len() < n_stems {
            let n = r.gen_range(1..=3);
            let mut s: String = (0..n).map(|_| syll(&mut r)).collect();
            if r.gen_bool(0.3) {
                s.push_str(cons.choose(&mut r).unwrap());
            }
            if seen.insert(s.clone()) {
                stems.push(s);
            }
        }
        let suffixes = [
            "ssa", "sta", "lla", "lta", "lle", "ksi", "na", "tta", "n", "t", "ni", "si", "mme", "nne", "nsa",
            "kin", "ko", "han", "lle", "ine", "iin", "ista", "illa", "issa",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let weights: Vec<f64> = (1..=n_stems).map(|i| 1.0 / i as f64).collect();
        Language {
            stems,
            stem_dist: WeightedIndex::new(weights).unwrap(),
            suffixes,
        }
    }

    pub fn word<R: Rng>(&self, r: &mut R) -> String {
        let mut w = self.stems[self.stem_dist.sample(r)].clone();
        if r.gen_bool(0.3) {
            w.push_str(&self.stems[self.stem_dist.sample(r)]);
        }
        for _ in 0..[0, 1, 1, 2][r.gen_range(0..4)] {
            w.push_str(self.suffixes.choose(r).unwrap());
        }
        w
    }

    pub fn sentence<R: Rng>(&self, r: &mut R, min_words: usize, max_words: usize) -> String {
        let n = r.gen_range(min_words..=max_words);
        (0..n).map(|_| self.word(r)).collect::<Vec<_>>().join(" ")
    }
}

/// Seed of the word generator shared by every synthetic corpus.
pub const LANGUAGE_SEED: u64 = 1;

/// `n` sentences of the shared synthetic language, drawn with `seed`.
pub fn synthetic_sentences(seed: u64, n: usize, min_words: usize, max_words: usize) -> Vec<String> {
    let lang = Language::new(LANGUAGE_SEED, 3000);
    let mut r = rng(seed);
    (0..n).map(|_| lang.sentence(&mut r, min_words, max_words)).collect()
}

pub fn synthetic_corpus(id: &str, language: &str, seed: u64, n: usize) -> Corpus {
    Corpus::new(id, language, CorpusKind::Monolingual, synthetic_sentences(seed, n, 3, 14))
}

/// Random lexicon over `alphabet`: every character plus `n_multi` distinct
/// multi-character morphs of length 2 to 4, with random weights.
pub fn random_lexicon<R: Rng>(r: &mut R, alphabet: &[char], n_multi: usize) -> Lexicon {
    let mut entries: BTreeMap<String, f64> =
        alphabet.iter().map(|c| (c.to_string(), r.gen_range(0.05..1.0))).collect();
    while entries.len() < alphabet.len() + n_multi {
        let len = r.gen_range(2..=4);
        let m: String = (0..len).map(|_| *alphabet.choose(r).unwrap()).collect();
        entries.entry(m).or_insert_with(|| r.gen_range(0.05..1.0));
    }
    Lexicon::from_weights(subseg::DEFAULT_MARKER, entries).unwrap()
}

/// All segmentations of `word` with their log-probabilities, found by
/// iterating over the bitmasks of cut points. Characters outside the
/// lexicon's alphabet score as unknown.
pub fn brute_force(model: &Lexicon, word: &str) -> Vec<(Vec<String>, f64)> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    if n == 0 {
        return vec![(Vec::new(), 0.0)];
    }
    'mask: for mask in 0u32..(1 << (n - 1)) {
        let mut pieces = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || mask & (1 << (i - 1)) != 0 {
                pieces.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        let mut lp = 0.0;
        for p in &pieces {
            let single = p.chars().count() == 1;
            if p.chars().count() > MAX_MORPH_LEN {
                continue 'mask;
            }
            lp += match model.id(p) {
                Some(id) => {
                    let l = model.logprob(id);
                    if l == f64::NEG_INFINITY && single {
                        model.unk_logprob()
                    } else {
                        l
                    }
                }
                None if single && !model.alphabet().contains(&p.chars().next().unwrap()) => model.unk_logprob(),
                None => continue 'mask,
            };
        }
        out.push((pieces, lp));
    }
    out
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Best segmentation under the tie-break: higher score, then fewer
/// morphs, then the lexicographically smaller morph sequence.
pub fn brute_force_best(model: &Lexicon, word: &str) -> (Vec<String>, f64) {
    brute_force(model, word)
        .into_iter()
        .min_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(a.0.len().cmp(&b.0.len()))
                .then_with(|| a.0.cmp(&b.0))
        })
        .unwrap()
}

/// Tasks of the asymmetric-resource setup: SRC→HRL (0), SRC→LRL (1),
/// SRC autoencoder (2), HRL autoencoder (3), LRL autoencoder (4).
pub fn five_tasks(n_sentences: usize, seed: u64, min_words: usize, max_words: usize) -> Vec<TaskData> {
    let mk = |lang: &str, s: u64| {
        Arc::new(Corpus::new(
            lang,
            lang,
            CorpusKind::Monolingual,
            synthetic_sentences(s, n_sentences, min_words, max_words),
        ))
    };
    let (src, hrl, lrl) = (mk("en", seed), mk("et", seed + 1), mk("fi", seed + 2));
    let spec = |id, kind, s: &str, t: &str, pipeline| TaskSpec {
        id,
        name: format!("task{id}"),
        kind,
        source_language: s.into(),
        target_language: t.into(),
        pipeline,
        corpora: match pipeline {
            PipelineKind::Parallel => vec!["a".into(), "b".into()],
            _ => vec!["a".into()],
        },
        synthetic: false,
    };
    vec![
        TaskData {
            spec: spec(0, TaskKind::Translation, "en", "et", PipelineKind::Parallel),
            source: src.clone(),
            target: Some(hrl.clone()),
        },
        TaskData {
            spec: spec(1, TaskKind::Translation, "en", "fi", PipelineKind::Parallel),
            source: src.clone(),
            target: Some(lrl.clone()),
        },
        TaskData {
            spec: spec(2, TaskKind::Autoencoder, "en", "en", PipelineKind::MonoNoised),
            source: src,
            target: None,
        },
        TaskData {
            spec: spec(3, TaskKind::Autoencoder, "et", "et", PipelineKind::MonoNoised),
            source: hrl,
            target: None,
        },
        TaskData {
            spec: spec(4, TaskKind::Autoencoder, "fi", "fi", PipelineKind::MonoTaboo),
            source: lrl,
            target: None,
        },
    ]
}

pub fn five_roles() -> TaskRoles {
    TaskRoles {
        src_hrl: Some(0),
        src_lrl: Some(1),
        src_ae: Some(2),
        hrl_ae: Some(3),
        lrl_ae: Some(4),
    }
}

pub fn three_phase() -> MixSchedule {
    builtin_schedule(Preset::ThreePhase, &five_roles(), &[], None).unwrap()
}

pub fn loader(model: Arc<Lexicon>, tasks: Vec<TaskData>, schedule: MixSchedule, cfg: ServeConfig) -> Loader<f64> {
    let langs: Vec<String> = tasks.iter().map(|t| t.spec.target_language.clone()).collect();
    let vocab = Arc::new(Vocabulary::build(&model, &langs).unwrap());
    Loader::new(model, vocab, tasks, schedule, cfg).unwrap()
}

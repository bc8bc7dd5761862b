//! Segmentation lattice over one word and the inference routines on it:
//! Viterbi, forward marginals, forward-filtering backward-sampling, n-best
//! and expected morph counts.

use std::cmp::Ordering;

use rand::Rng;

use crate::lexicon::{SubwordLexicon, MAX_MORPH_LEN};
use crate::scalar::{log_sum_exp, Scalar};

/// A segmentation of one word. Concatenating `morphs` yields the word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Segmentation {
    pub morphs: Vec<String>,
    /// Indices into `morphs` of out-of-lexicon single characters.
    pub unknown: Vec<usize>,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.morphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.morphs.is_empty()
    }

    pub fn as_strs(&self) -> Vec<&str> {
        self.morphs.iter().map(String::as_str).collect()
    }

    pub fn concat(&self) -> String {
        self.morphs.concat()
    }
}

/// One lattice edge: characters `start..end` emitted as a single morph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc<F> {
    pub start: usize,
    pub end: usize,
    /// `None` for an out-of-lexicon character.
    pub morph: Option<u32>,
    pub logprob: F,
}

#[derive(Debug, Clone)]
pub struct Lattice<'w, F> {
    pub word: &'w str,
    /// Byte offset of every character boundary, `n + 1` entries.
    bounds: Vec<usize>,
    /// Arcs grouped by end position; `by_end[j]` starts at `arcs[ends[j]]`.
    pub arcs: Vec<Arc<F>>,
    ends: Vec<usize>,
    /// Forward log-sums at temperature 1. `alpha[0] = 0`.
    pub alpha: Vec<F>,
}

impl<'w, F: Scalar> Lattice<'w, F> {
    pub fn new(model: &SubwordLexicon<F>, word: &'w str) -> Self {
        Self::with_filter(model, word, |_| true)
    }

    /// Builds the lattice keeping only lexicon arcs whose morph id passes
    /// `allow`. Out-of-lexicon characters always get a singleton arc.
    pub fn with_filter(model: &SubwordLexicon<F>, word: &'w str, allow: impl Fn(u32) -> bool) -> Self {
        let chars: Vec<char> = word.chars().collect();
        let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain([word.len()]).collect();
        let n = chars.len();
        let mut by_end: Vec<Vec<Arc<F>>> = vec![Vec::new(); n + 1];
        for start in 0..n {
            let mut has_single = false;
            model.for_each_prefix(&chars[start..], MAX_MORPH_LEN, |len, id| {
                if len == 1 {
                    has_single = true;
                }
                if allow(id) {
                    by_end[start + len].push(Arc {
                        start,
                        end: start + len,
                        morph: Some(id),
                        logprob: model.arc_logprob(id),
                    });
                }
            });
            if !has_single {
                by_end[start + 1].push(Arc {
                    start,
                    end: start + 1,
                    morph: None,
                    logprob: model.unk_logprob(),
                });
            }
        }
        let mut arcs = Vec::new();
        let mut ends = Vec::with_capacity(n + 2);
        for bucket in by_end {
            ends.push(arcs.len());
            arcs.extend(bucket);
        }
        ends.push(arcs.len());
        let mut lattice = Lattice {
            word,
            bounds,
            arcs,
            ends,
            alpha: Vec::new(),
        };
        lattice.alpha = lattice.forward(F::one());
        lattice
    }

    /// Number of characters in the word.
    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arcs_ending_at(&self, j: usize) -> &[Arc<F>] {
        &self.arcs[self.ends[j]..self.ends[j + 1]]
    }

    pub fn text(&self, arc: &Arc<F>) -> &'w str {
        &self.word[self.bounds[arc.start]..self.bounds[arc.end]]
    }

    fn forward(&self, temperature: F) -> Vec<F> {
        let n = self.len();
        let inv_t = F::one() / temperature;
        let mut alpha = vec![F::neg_infinity(); n + 1];
        alpha[0] = F::zero();
        for j in 1..=n {
            let mut acc = F::neg_infinity();
            for a in self.arcs_ending_at(j) {
                acc = acc.log_add_exp(alpha[a.start] + a.logprob * inv_t);
            }
            alpha[j] = acc;
        }
        alpha
    }

    fn backward(&self) -> Vec<F> {
        let n = self.len();
        let mut beta = vec![F::neg_infinity(); n + 1];
        beta[n] = F::zero();
        for j in (1..=n).rev() {
            for a in self.arcs_ending_at(j) {
                beta[a.start] = beta[a.start].log_add_exp(beta[j] + a.logprob);
            }
        }
        beta
    }

    /// `ln Σ_s Π P(m_i)` over every segmentation in the lattice.
    pub fn marginal_logprob(&self) -> F {
        self.alpha[self.len()]
    }

    fn build(&self, arcs_rev: impl IntoIterator<Item = Arc<F>>) -> Segmentation {
        let mut path: Vec<Arc<F>> = arcs_rev.into_iter().collect();
        path.reverse();
        let mut seg = Segmentation::default();
        for (k, a) in path.iter().enumerate() {
            seg.morphs.push(self.text(a).to_string());
            if a.morph.is_none() {
                seg.unknown.push(k);
            }
        }
        seg
    }

    fn morph_seq(&self, back: &[Option<Arc<F>>], mut j: usize) -> Vec<&'w str> {
        let mut out = Vec::new();
        while j > 0 {
            let a = back[j].expect("reachable position has a backpointer");
            out.push(self.text(&a));
            j = a.start;
        }
        out.reverse();
        out
    }

    /// Highest-probability segmentation. Exact score ties go to fewer morphs,
    /// then to the lexicographically smaller morph sequence.
    pub fn viterbi(&self) -> (Segmentation, F) {
        let n = self.len();
        let mut score = vec![F::neg_infinity(); n + 1];
        let mut count = vec![usize::MAX; n + 1];
        let mut back: Vec<Option<Arc<F>>> = vec![None; n + 1];
        score[0] = F::zero();
        count[0] = 0;
        for j in 1..=n {
            for a in self.arcs_ending_at(j) {
                if count[a.start] == usize::MAX {
                    continue;
                }
                let s = score[a.start] + a.logprob;
                let c = count[a.start] + 1;
                let better = match back[j] {
                    None => true,
                    Some(_) => match s.partial_cmp(&score[j]) {
                        Some(Ordering::Greater) => true,
                        Some(Ordering::Less) | None => false,
                        Some(Ordering::Equal) => {
                            c < count[j]
                                || (c == count[j] && {
                                    let mut cand = self.morph_seq(&back, a.start);
                                    cand.push(self.text(a));
                                    cand < self.morph_seq(&back, j)
                                })
                        }
                    },
                };
                if better {
                    score[j] = s;
                    count[j] = c;
                    back[j] = Some(*a);
                }
            }
        }
        let mut path = Vec::new();
        let mut j = n;
        while j > 0 {
            let a = back[j].expect("every position is reachable through character arcs");
            path.push(a);
            j = a.start;
        }
        (self.build(path), score[n])
    }

    /// Draws a segmentation with probability proportional to
    /// `P(s)^(1/temperature)` by forward filtering, backward sampling.
    pub fn sample<R: Rng + ?Sized>(&self, temperature: F, rng: &mut R) -> Segmentation {
        let alpha_t;
        let alpha = if temperature == F::one() {
            &self.alpha
        } else {
            alpha_t = self.forward(temperature);
            &alpha_t
        };
        let inv_t = F::one() / temperature;
        let mut path = Vec::new();
        let mut j = self.len();
        while j > 0 {
            let arcs = self.arcs_ending_at(j);
            let total = alpha[j];
            let u = F::of(rng.gen::<f64>());
            let mut acc = F::zero();
            let mut chosen = None;
            for a in arcs {
                let w = alpha[a.start] + a.logprob * inv_t - total;
                if w == F::neg_infinity() || w.is_nan() {
                    continue;
                }
                acc += w.exp();
                chosen = Some(*a);
                if u < acc {
                    break;
                }
            }
            // Rounding can leave `acc` a hair below one; the last viable arc
            // absorbs the remainder.
            let a = chosen.expect("some arc into a reachable position has positive weight");
            path.push(a);
            j = a.start;
        }
        self.build(path)
    }

    /// Expected number of uses of each arc, `P(arc | word)`, aligned with
    /// `self.arcs`.
    pub fn arc_posteriors(&self) -> Vec<F> {
        let beta = self.backward();
        let z = self.marginal_logprob();
        self.arcs
            .iter()
            .map(|a| {
                let lp = self.alpha[a.start] + a.logprob + beta[a.end] - z;
                if lp == F::neg_infinity() || lp.is_nan() {
                    F::zero()
                } else {
                    lp.exp()
                }
            })
            .collect()
    }

    /// The `n` most probable segmentations, best first, without duplicates.
    /// Ordering ties follow the same rule as [`Lattice::viterbi`].
    pub fn nbest(&self, n: usize) -> Vec<(Segmentation, F)> {
        #[derive(Clone)]
        struct Partial<F> {
            score: F,
            path: Vec<usize>,
        }
        let len = self.len();
        let order = |a: &Partial<F>, b: &Partial<F>| -> Ordering {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.path.len().cmp(&b.path.len()))
                .then_with(|| {
                    let ta = a.path.iter().map(|&i| self.text(&self.arcs[i]));
                    let tb = b.path.iter().map(|&i| self.text(&self.arcs[i]));
                    ta.cmp(tb)
                })
        };
        let mut best: Vec<Vec<Partial<F>>> = vec![Vec::new(); len + 1];
        best[0].push(Partial {
            score: F::zero(),
            path: Vec::new(),
        });
        for j in 1..=len {
            let mut cands = Vec::new();
            for (k, a) in self.arcs_ending_at(j).iter().enumerate() {
                let idx = self.ends[j] + k;
                for p in &best[a.start] {
                    let mut path = p.path.clone();
                    path.push(idx);
                    cands.push(Partial {
                        score: p.score + a.logprob,
                        path,
                    });
                }
            }
            cands.sort_by(order);
            cands.truncate(n);
            best[j] = cands;
        }
        std::mem::take(&mut best[len])
            .into_iter()
            .map(|p| {
                let score = p.score;
                (self.build(p.path.iter().rev().map(|&i| self.arcs[i])), score)
            })
            .collect()
    }
}

/// Brute-force enumeration of every segmentation with its log-probability.
/// Exponential in the word length; intended for oracles and tiny inputs.
pub fn enumerate_segmentations<F: Scalar>(model: &SubwordLexicon<F>, word: &str) -> Vec<(Vec<String>, F)> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    fn rec<F: Scalar>(
        model: &SubwordLexicon<F>,
        chars: &[char],
        pos: usize,
        stack: &mut Vec<String>,
        lp: F,
        out: &mut Vec<(Vec<String>, F)>,
    ) {
        if pos == chars.len() {
            out.push((stack.clone(), lp));
            return;
        }
        for end in pos + 1..=chars.len().min(pos + MAX_MORPH_LEN) {
            let piece: String = chars[pos..end].iter().collect();
            let piece_lp = match model.id(&piece) {
                Some(id) => model.arc_logprob(id),
                None if end == pos + 1 && !model.alphabet().contains(&chars[pos]) => model.unk_logprob(),
                None => continue,
            };
            stack.push(piece);
            rec(model, chars, end, stack, lp + piece_lp, out);
            stack.pop();
        }
    }
    rec(model, &chars, 0, &mut stack, F::zero(), &mut out);
    out
}

/// Log of the total probability mass, computed from an enumeration.
pub fn enumerated_marginal<F: Scalar>(enumeration: &[(Vec<String>, F)]) -> F {
    log_sum_exp(enumeration.iter().map(|(_, lp)| *lp))
}

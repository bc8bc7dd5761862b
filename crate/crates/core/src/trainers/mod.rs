//! Lexicon training: MAP-weighted EM with lexicon pruning, the
//! maximum-likelihood unigram variant, and BPE.
//!
//! All unigram trainers work on word types that already carry the
//! word-initial marker (see [`crate::corpus::marked_word_counts`]).

mod bpe;
mod em;
mod emprune;
mod prune;
mod seed;

use std::collections::HashMap;

pub use bpe::{train_bpe, BpeModel};
pub use em::{corpus_loglik, em_step};
pub use emprune::{train_emprune, train_sp_unigram, PhaseRecord, TrainingOutcome};
pub use prune::{alpha_for_target, keep_order, prior_cost, prune_round, pruning_stats, tune_alpha, MorphStats};
pub use seed::seed_lexicon;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a word type's corpus frequency weights its contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    #[default]
    Tokens,
    Types,
    LogDampened,
}

impl CountMode {
    #[inline]
    pub fn weight<F: Scalar>(self, count: u64) -> F {
        match self {
            CountMode::Tokens => F::of_count(count),
            CountMode::Types => F::one(),
            CountMode::LogDampened => F::of_count(count).ln_1p(),
        }
    }
}

impl std::str::FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" => Ok(CountMode::Tokens),
            "types" => Ok(CountMode::Types),
            "log-dampened" => Ok(CountMode::LogDampened),
            other => Err(Error::Config(format!("unknown count mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Prior {
    #[default]
    Mdl,
    Off,
}

impl std::str::FromStr for Prior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdl" => Ok(Prior::Mdl),
            "off" => Ok(Prior::Off),
            other => Err(Error::Config(format!("unknown prior {other:?}"))),
        }
    }
}

/// Likelihood weight of the MAP cost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Alpha<F> {
    Fixed(F),
    /// Re-tuned before every pruning round so that exactly the target
    /// number of morphs would survive.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmPruneConfig<F> {
    pub seed_size: usize,
    /// Number of multi-character morphs in the final lexicon. The alphabet
    /// comes on top.
    pub target_vocab: usize,
    pub em_iters_per_phase: usize,
    pub prune_proportion: F,
    pub alpha: Alpha<F>,
    pub count_mode: CountMode,
    pub prior: Prior,
}

impl<F: Scalar> Default for EmPruneConfig<F> {
    fn default() -> Self {
        EmPruneConfig {
            seed_size: 1_000_000,
            target_vocab: 16_000,
            em_iters_per_phase: 2,
            prune_proportion: F::of(0.25),
            alpha: Alpha::Auto,
            count_mode: CountMode::Tokens,
            prior: Prior::Mdl,
        }
    }
}

impl<F: Scalar> EmPruneConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_proportion > F::zero() && self.prune_proportion < F::one()) {
            return Err(Error::OutOfRange(format!(
                "prune proportion must be in (0, 1), got {}",
                self.prune_proportion
            )));
        }
        if let Alpha::Fixed(a) = self.alpha {
            if !(a > F::zero()) {
                return Err(Error::OutOfRange(format!("alpha must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

/// The two parts of the MAP cost, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown<F> {
    pub prior_cost: F,
    pub corpus_cost: F,
    pub alpha: F,
    pub total: F,
}

impl<F: Scalar> CostBreakdown<F> {
    pub fn new(prior_cost: F, corpus_cost: F, alpha: F) -> Self {
        CostBreakdown {
            prior_cost,
            corpus_cost,
            alpha,
            total: prior_cost + alpha * corpus_cost,
        }
    }
}

/// Character distribution of the training words, extended with an
/// end-of-morph symbol whose count is the number of word tokens. Used as
/// the code for spelling out morphs in the lexicon prior.
#[derive(Debug, Clone)]
pub struct CharDistribution<F> {
    costs: HashMap<char, F>,
    end_cost: F,
    unseen_cost: F,
}

impl<F: Scalar> CharDistribution<F> {
    pub fn from_words(words: &[(String, u64)]) -> Self {
        let mut counts: HashMap<char, u64> = HashMap::new();
        let mut ends = 0u64;
        for (w, c) in words {
            for ch in w.chars() {
                *counts.entry(ch).or_insert(0) += c;
            }
            ends += c;
        }
        let total = F::of_count(counts.values().sum::<u64>() + ends);
        let cost = |c: u64| -(F::of_count(c) / total).ln();
        CharDistribution {
            costs: counts.iter().map(|(&ch, &c)| (ch, cost(c))).collect(),
            end_cost: cost(ends.max(1)),
            unseen_cost: cost(1),
        }
    }

    /// Uniform distribution over `alphabet` plus the end symbol.
    pub fn uniform(alphabet: impl IntoIterator<Item = char>) -> Self {
        let chars: Vec<char> = alphabet.into_iter().collect();
        let cost = F::of_count(chars.len() as u64 + 1).ln();
        CharDistribution {
            costs: chars.into_iter().map(|c| (c, cost)).collect(),
            end_cost: cost,
            unseen_cost: cost,
        }
    }

    pub fn char_cost(&self, c: char) -> F {
        self.costs.get(&c).copied().unwrap_or(self.unseen_cost)
    }

    /// Code length of spelling `morph` followed by the end symbol.
    pub fn code_length(&self, morph: &str) -> F {
        morph.chars().map(|c| self.char_cost(c)).sum::<F>() + self.end_cost
    }
}

/// Flattens word counts into the slice form the trainers take.
pub fn word_list(counts: &crate::corpus::WordCounts) -> Vec<(String, u64)> {
    counts.iter().map(|(w, &c)| (w.clone(), c)).collect()
}

use super::em::{corpus_loglik, em_step};
use super::prune::{keep_order, pruning_stats, remove_morphs, removal_candidates, round_quota, alpha_for_target, prior_cost};
use super::seed::seed_lexicon;
use super::{Alpha, CharDistribution, CostBreakdown, EmPruneConfig, Prior};
use crate::corpus::SubstringCounts;
use crate::error::Result;
use crate::lexicon::SubwordLexicon;
use crate::scalar::Scalar;

/// State after the EM iterations of one phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord<F> {
    pub num_multi: usize,
    pub cost: CostBreakdown<F>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<F> {
    pub lexicon: SubwordLexicon<F>,
    /// MAP cost of the final lexicon at the last likelihood weight used.
    pub cost: CostBreakdown<F>,
    pub history: Vec<PhaseRecord<F>>,
}

fn breakdown<F: Scalar>(
    model: &SubwordLexicon<F>,
    words: &[(String, u64)],
    config: &EmPruneConfig<F>,
    dist: &CharDistribution<F>,
    alpha: F,
) -> CostBreakdown<F> {
    let prior = match config.prior {
        Prior::Mdl => prior_cost(model, dist),
        Prior::Off => F::zero(),
    };
    CostBreakdown::new(prior, -corpus_loglik(model, words, config.count_mode), alpha)
}

/// EM+Prune training.
///
/// Seeds a lexicon from `counts`, then alternates `em_iters_per_phase` EM
/// steps with a pruning round until at most `target_vocab` multi-character
/// morphs remain. With [`Alpha::Auto`] the likelihood weight is re-tuned
/// before every round so that exactly `target_vocab` morphs pass the keep
/// rule, which makes the final size exact. With a fixed weight training
/// stops early once no morph lowers the cost by leaving.
pub fn train_emprune<F: Scalar>(
    counts: &SubstringCounts,
    words: &[(String, u64)],
    config: &EmPruneConfig<F>,
) -> Result<TrainingOutcome<F>> {
    config.validate()?;
    let dist = CharDistribution::from_words(words);
    let mut model = seed_lexicon::<F>(counts, config.seed_size.max(alphabet_size(counts)))?;
    let mut alpha = match config.alpha {
        Alpha::Fixed(a) => a,
        Alpha::Auto => F::one(),
    };
    let mut history = Vec::new();
    loop {
        for _ in 0..config.em_iters_per_phase {
            model = em_step(&model, words, config.count_mode)?.0;
        }
        history.push(PhaseRecord {
            num_multi: model.num_multi(),
            cost: breakdown(&model, words, config, &dist, alpha),
        });

        let n_multi = model.num_multi();
        if n_multi <= config.target_vocab {
            break;
        }
        let excess = n_multi - config.target_vocab;
        let quota = round_quota(n_multi, config.prune_proportion).min(excess);
        let stats = pruning_stats(&model, words, config.count_mode, &dist, config.prior);
        let order = match (config.prior, config.alpha) {
            (Prior::Mdl, Alpha::Auto) => {
                alpha = alpha_for_target(&stats, config.target_vocab)?;
                let mut protected = vec![false; stats.len()];
                for &i in keep_order(&stats).iter().take(config.target_vocab) {
                    protected[i] = true;
                }
                removal_candidates(&stats, alpha, config.prior, Some(&protected))
            }
            _ => removal_candidates(&stats, alpha, config.prior, None),
        };
        let remove: Vec<u32> = order.into_iter().take(quota).map(|i| stats[i].id).collect();
        if remove.is_empty() {
            break;
        }
        model = remove_morphs(&model, &remove)?;
    }
    let cost = history.last().expect("at least one phase ran").cost;
    Ok(TrainingOutcome {
        lexicon: model,
        cost,
        history,
    })
}

fn alphabet_size(counts: &SubstringCounts) -> usize {
    counts.entries.iter().filter(|(s, _)| s.chars().nth(1).is_none()).count()
}

/// Maximum-likelihood unigram training: the same EM/prune alternation with
/// no prior, pruning the morphs whose removal loses the least likelihood.
/// Uses the seed size, EM iterations, prune proportion and count mode of
/// `config`; its prior and likelihood weight are ignored.
pub fn train_sp_unigram<F: Scalar>(
    counts: &SubstringCounts,
    words: &[(String, u64)],
    target_vocab: usize,
    config: &EmPruneConfig<F>,
) -> Result<SubwordLexicon<F>> {
    config.validate()?;
    let mut model = seed_lexicon::<F>(counts, config.seed_size.max(alphabet_size(counts)))?;
    let no_prior = CharDistribution::uniform([]);
    loop {
        for _ in 0..config.em_iters_per_phase {
            model = em_step(&model, words, config.count_mode)?.0;
        }
        let n_multi = model.num_multi();
        if n_multi <= target_vocab {
            return Ok(model);
        }
        let quota = round_quota(n_multi, config.prune_proportion).min(n_multi - target_vocab);
        let mut stats = pruning_stats(&model, words, config.count_mode, &no_prior, Prior::Off);
        stats.sort_by(|a, b| {
            a.loss
                .partial_cmp(&b.loss)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| b.morph.cmp(&a.morph))
        });
        let remove: Vec<u32> = stats.iter().take(quota).map(|s| s.id).collect();
        model = remove_morphs(&model, &remove)?;
    }
}

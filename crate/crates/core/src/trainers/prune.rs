//! Lexicon prior, per-morph removal estimates and the pruning step.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::em::CHUNK;
use super::{CharDistribution, CountMode, Prior};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::lexicon::SubwordLexicon;
use crate::scalar::Scalar;

/// Code length of the whole lexicon: every morph spelled out character by
/// character under `dist`, plus one end symbol per morph.
pub fn prior_cost<F: Scalar>(model: &SubwordLexicon<F>, dist: &CharDistribution<F>) -> F {
    model.iter().map(|(m, _)| dist.code_length(m)).sum()
}

/// Estimated effect of removing one multi-character morph.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphStats<F> {
    pub id: u32,
    pub morph: String,
    /// Prior cost saved by removing the morph (0 when the prior is off).
    pub code_length: F,
    /// Weighted Viterbi frequency of the morph.
    pub frequency: F,
    /// Likelihood lost by re-segmenting its occurrences without it, in
    /// nats (`-Δloglik`, never negative).
    pub loss: F,
}

impl<F: Scalar> MorphStats<F> {
    /// Change of the MAP cost if the morph is removed.
    pub fn delta_cost(&self, alpha: F) -> F {
        if self.loss == F::zero() {
            -self.code_length
        } else {
            -self.code_length + alpha * self.loss
        }
    }

    /// Smallest likelihood weight at which the morph is worth keeping.
    pub fn threshold(&self) -> F {
        if self.loss == F::zero() {
            F::infinity()
        } else {
            self.code_length / self.loss
        }
    }
}

/// Per-morph removal estimates for every multi-character morph.
///
/// Words are segmented with Viterbi; each occurrence of morph `s` is
/// assumed to fall back to the best segmentation of `s` itself that does
/// not use `s`. The estimates are independent across morphs.
pub fn pruning_stats<F: Scalar>(
    model: &SubwordLexicon<F>,
    words: &[(String, u64)],
    mode: CountMode,
    dist: &CharDistribution<F>,
    prior: Prior,
) -> Vec<MorphStats<F>> {
    let partials: Vec<Vec<F>> = words
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut freq = vec![F::zero(); model.len()];
            for (w, c) in chunk {
                let weight: F = mode.weight(*c);
                let lattice = Lattice::new(model, w);
                let (seg, _) = lattice.viterbi();
                for (k, m) in seg.morphs.iter().enumerate() {
                    if seg.unknown.contains(&k) {
                        continue;
                    }
                    if let Some(id) = model.id(m) {
                        freq[id as usize] += weight;
                    }
                }
            }
            freq
        })
        .collect();
    let mut freq = vec![F::zero(); model.len()];
    for part in partials {
        for (f, p) in freq.iter_mut().zip(part) {
            *f += p;
        }
    }

    (0..model.len() as u32)
        .into_par_iter()
        .filter(|&id| model.is_multi(id))
        .map(|id| {
            let morph = model.morph(id);
            let frequency = freq[id as usize];
            let loss = if frequency > F::zero() {
                let alt = Lattice::with_filter(model, morph, |other| other != id).viterbi().1;
                (frequency * (model.logprob(id) - alt)).max(F::zero())
            } else {
                F::zero()
            };
            let code_length = match prior {
                Prior::Mdl => dist.code_length(morph),
                Prior::Off => F::zero(),
            };
            MorphStats {
                id,
                morph: morph.to_string(),
                code_length,
                frequency,
                loss,
            }
        })
        .collect()
}

/// Indices of `stats` in keep order: ascending threshold, ties keeping the
/// lexicographically smaller morph first.
pub fn keep_order<F: Scalar>(stats: &[MorphStats<F>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        stats[a]
            .threshold()
            .partial_cmp(&stats[b].threshold())
            .unwrap_or(Ordering::Equal)
            .then_with(|| stats[a].morph.cmp(&stats[b].morph))
    });
    order
}

/// Likelihood weight under which exactly `target` morphs satisfy the keep
/// rule `alpha · loss ≥ code_length`. The value is the threshold of the
/// `target`-th morph in [`keep_order`]; 0 for an empty target. When
/// thresholds tie at the cut, the lexicographic order of [`keep_order`]
/// decides.
pub fn alpha_for_target<F: Scalar>(stats: &[MorphStats<F>], target: usize) -> Result<F> {
    if target > stats.len() {
        return Err(Error::OutOfRange(format!(
            "target of {target} multi-character morphs exceeds the current {}",
            stats.len()
        )));
    }
    if target == 0 {
        return Ok(F::zero());
    }
    let order = keep_order(stats);
    Ok(stats[order[target - 1]].threshold())
}

/// Estimates per-morph statistics and returns the tuned likelihood weight
/// for `target` multi-character morphs.
pub fn tune_alpha<F: Scalar>(
    model: &SubwordLexicon<F>,
    words: &[(String, u64)],
    mode: CountMode,
    dist: &CharDistribution<F>,
    target: usize,
) -> Result<F> {
    if target > model.num_multi() {
        return Err(Error::OutOfRange(format!(
            "target of {target} multi-character morphs exceeds the current {}",
            model.num_multi()
        )));
    }
    alpha_for_target(&pruning_stats(model, words, mode, dist, Prior::Mdl), target)
}

/// Removal order for a pruning round. `protected` morphs (by stats index)
/// are never candidates.
pub(crate) fn removal_candidates<F: Scalar>(
    stats: &[MorphStats<F>],
    alpha: F,
    prior: Prior,
    protected: Option<&[bool]>,
) -> Vec<usize> {
    let mut cands: Vec<usize> = (0..stats.len())
        .filter(|&i| protected.map_or(true, |p| !p[i]))
        .filter(|&i| match (prior, protected) {
            (Prior::Off, _) | (Prior::Mdl, Some(_)) => true,
            (Prior::Mdl, None) => stats[i].delta_cost(alpha) < F::zero(),
        })
        .collect();
    let key = |i: usize| match prior {
        Prior::Mdl => stats[i].delta_cost(alpha),
        Prior::Off => stats[i].loss,
    };
    cands.sort_by(|&a, &b| {
        key(a)
            .partial_cmp(&key(b))
            .unwrap_or(Ordering::Equal)
            .then_with(|| stats[b].morph.cmp(&stats[a].morph))
    });
    cands
}

pub(crate) fn remove_morphs<F: Scalar>(model: &SubwordLexicon<F>, remove: &[u32]) -> Result<SubwordLexicon<F>> {
    if remove.is_empty() {
        return Ok(model.clone());
    }
    let mut drop = vec![false; model.len()];
    for &id in remove {
        drop[id as usize] = true;
    }
    let kept: Vec<(String, F)> = model
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop[*i])
        .map(|(_, (m, lp))| (m.to_string(), lp.exp()))
        .collect();
    SubwordLexicon::from_weights(model.marker(), kept)
}

pub(crate) fn round_quota<F: Scalar>(n_multi: usize, proportion: F) -> usize {
    let k = (F::of_count(n_multi as u64) * proportion).ceil();
    k.to_usize().unwrap_or(n_multi).clamp(1, n_multi.max(1))
}

/// One pruning round at a fixed likelihood weight.
///
/// With the prior on, morphs whose removal lowers the MAP cost
/// (`Δcost < 0`) are candidates, lowest `Δcost` first. With the prior off,
/// every multi-character morph is a candidate, smallest likelihood loss
/// first. At most `⌈proportion · n_multi⌉` morphs are removed; single
/// characters never are. Ties remove the lexicographically larger morph.
#[allow(clippy::too_many_arguments)]
pub fn prune_round<F: Scalar>(
    model: &SubwordLexicon<F>,
    words: &[(String, u64)],
    mode: CountMode,
    dist: &CharDistribution<F>,
    prior: Prior,
    alpha: F,
    proportion: F,
) -> Result<SubwordLexicon<F>> {
    if !(proportion > F::zero() && proportion < F::one()) {
        return Err(Error::OutOfRange(format!("prune proportion must be in (0, 1), got {proportion}")));
    }
    let stats = pruning_stats(model, words, mode, dist, prior);
    let quota = round_quota(model.num_multi(), proportion);
    let remove: Vec<u32> = removal_candidates(&stats, alpha, prior, None)
        .into_iter()
        .take(quota)
        .map(|i| stats[i].id)
        .collect();
    remove_morphs(model, &remove)
}

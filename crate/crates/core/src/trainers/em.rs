use rayon::prelude::*;

use super::CountMode;
use crate::error::Result;
use crate::lattice::Lattice;
use crate::lexicon::SubwordLexicon;
use crate::scalar::Scalar;

/// Words per parallel work unit. Partial sums are combined in chunk order,
/// so results do not depend on the thread count.
pub(crate) const CHUNK: usize = 512;

/// One EM iteration over word types.
///
/// Expected morph counts come from lattice forward-backward on each word,
/// scaled by the word's weight under `mode`. The new probabilities are the
/// normalized expected counts; membership of the lexicon does not change.
/// The returned log-likelihood is that of the data under the *input* model.
pub fn em_step<F: Scalar>(
    model: &SubwordLexicon<F>,
    words: &[(String, u64)],
    mode: CountMode,
) -> Result<(SubwordLexicon<F>, F)> {
    if words.is_empty() {
        return Ok((model.clone(), F::zero()));
    }
    let partials: Vec<(Vec<F>, F)> = words
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut expected = vec![F::zero(); model.len()];
            let mut loglik = F::zero();
            for (w, c) in chunk {
                let weight: F = mode.weight(*c);
                let lattice = Lattice::new(model, w);
                loglik += weight * lattice.marginal_logprob();
                for (arc, p) in lattice.arcs.iter().zip(lattice.arc_posteriors()) {
                    if let Some(id) = arc.morph {
                        expected[id as usize] += weight * p;
                    }
                }
            }
            (expected, loglik)
        })
        .collect();

    let mut expected = vec![F::zero(); model.len()];
    let mut loglik = F::zero();
    for (part, ll) in partials {
        for (e, p) in expected.iter_mut().zip(part) {
            *e += p;
        }
        loglik += ll;
    }
    let updated = SubwordLexicon::from_weights(
        model.marker(),
        model.iter().zip(expected).map(|((m, _), e)| (m.to_string(), e)),
    )?;
    Ok((updated, loglik))
}

/// Weighted marginal log-likelihood of the words.
pub fn corpus_loglik<F: Scalar>(model: &SubwordLexicon<F>, words: &[(String, u64)], mode: CountMode) -> F {
    let partials: Vec<F> = words
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|(w, c)| mode.weight::<F>(*c) * Lattice::new(model, w).marginal_logprob())
                .sum()
        })
        .collect();
    partials.into_iter().sum()
}

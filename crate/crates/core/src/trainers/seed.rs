use crate::corpus::SubstringCounts;
use crate::error::{Error, Result};
use crate::lexicon::{SubwordLexicon, DEFAULT_MARKER};
use crate::scalar::Scalar;

/// Initial lexicon: every single character plus the most frequent
/// multi-character substrings, `seed_size` morphs in total, with
/// probabilities proportional to the substring counts.
pub fn seed_lexicon<F: Scalar>(counts: &SubstringCounts, seed_size: usize) -> Result<SubwordLexicon<F>> {
    if counts.is_empty() {
        return Err(Error::OutOfRange("cannot seed a lexicon from empty counts".into()));
    }
    let is_single = |s: &str| s.chars().nth(1).is_none();
    let alphabet = counts.entries.iter().filter(|(s, _)| is_single(s)).count();
    if seed_size < alphabet {
        return Err(Error::OutOfRange(format!(
            "seed size {seed_size} is smaller than the alphabet ({alphabet} characters)"
        )));
    }
    let singles = counts.entries.iter().filter(|(s, _)| is_single(s));
    let multi = counts
        .entries
        .iter()
        .filter(|(s, _)| !is_single(s))
        .take(seed_size - alphabet);
    SubwordLexicon::from_weights(
        counts.marker.unwrap_or(DEFAULT_MARKER),
        singles.chain(multi).map(|(s, c)| (s.clone(), F::of_count(*c))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count_substrings, Corpus, CorpusKind};

    fn aaa() -> SubstringCounts {
        let c = Corpus::new("t", "xx", CorpusKind::Monolingual, vec!["aaa".into()]);
        count_substrings(&c, 3, 10, None)
    }

    #[test]
    fn seed_takes_top_substrings() {
        let lex: SubwordLexicon<f64> = seed_lexicon(&aaa(), 2).unwrap();
        assert_eq!(lex.len(), 2);
        assert!((lex.get("a").unwrap() - 0.6f64.ln()).abs() < 1e-12);
        assert!((lex.get("aa").unwrap() - 0.4f64.ln()).abs() < 1e-12);
        assert!(lex.get("aaa").is_none());
    }

    #[test]
    fn seed_of_alphabet_size_is_characters_only() {
        let lex: SubwordLexicon<f64> = seed_lexicon(&aaa(), 1).unwrap();
        assert_eq!(lex.num_multi(), 0);
        assert_eq!(lex.get("a"), Some(0.0));
    }

    #[test]
    fn seed_too_small_or_empty() {
        let c = Corpus::new("t", "xx", CorpusKind::Monolingual, vec!["ab".into()]);
        let counts = count_substrings(&c, 3, 10, None);
        assert!(seed_lexicon::<f64>(&counts, 1).is_err());
        let empty = Corpus::new("t", "xx", CorpusKind::Monolingual, vec![]);
        assert!(seed_lexicon::<f64>(&count_substrings(&empty, 3, 10, None), 5).is_err());
    }

    #[test]
    fn seed_probabilities_normalized() {
        let c = Corpus::new("t", "xx", CorpusKind::Monolingual, vec!["abc abd bcd".into()]);
        let lex: SubwordLexicon<f64> = seed_lexicon(&count_substrings(&c, 4, 100, Some('_')), 12).unwrap();
        let total: f64 = lex.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

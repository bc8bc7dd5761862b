//! Token-to-id mapping shared by the producer and its consumers.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lexicon::SubwordLexicon;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SYNTHETIC: &str = "<synthetic>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

const HEADER: &str = "#subseg-vocab v1";

/// Target-language control token, e.g. `<to_fi>`.
pub fn target_token(language: &str) -> String {
    format!("<to_{language}>")
}

/// Dense id space: reserved tokens first, then morphs in lexicon order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Reserved tokens are `<pad> <unk> <s> </s>`, one `<to_xx>` per
    /// target language in sorted order, and `<synthetic>`.
    pub fn build<F>(model: &SubwordLexicon<F>, target_languages: &[impl AsRef<str>]) -> Result<Self>
    where
        F: crate::scalar::Scalar,
    {
        let langs: BTreeSet<&str> = target_languages.iter().map(|l| l.as_ref()).collect();
        let mut tokens: Vec<String> = [PAD, UNK, BOS, EOS].iter().map(|s| s.to_string()).collect();
        tokens.extend(langs.into_iter().map(target_token));
        tokens.push(SYNTHETIC.to_string());
        tokens.extend(model.iter().map(|(m, _)| m.to_string()));
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(PAD) || tokens.get(1).map(String::as_str) != Some(UNK) {
            return Err(Error::Lexicon(format!("vocabulary must start with {PAD} {UNK}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Lexicon(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids; anything outside the vocabulary becomes UNK.
    pub fn numericalize(&self, tokens: &[impl AsRef<str>]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect()
    }

    /// First two bytes of the SHA-256 of the newline-terminated token list,
    /// read little-endian.
    pub fn hash16(&self) -> u16 {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let d = h.finalize();
        u16::from_le_bytes([d[0], d[1]])
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next().transpose()? {
            Some(h) if h == HEADER => {}
            other => {
                return Err(Error::Format {
                    what: "vocabulary",
                    line: 1,
                    msg: format!("bad header {other:?}"),
                })
            }
        }
        Self::from_tokens(lines.collect::<std::io::Result<_>>()?)
    }
}

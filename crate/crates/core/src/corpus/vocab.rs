use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Sentence, Sequence, StyleCorpus};
use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;

/// Surface strings of the reserved ids, in id order.
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Shared token/id mapping for both styles and both directions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: BTreeMap<String, TokenId>,
}

impl Vocabulary {
    /// Counts tokens and keeps those seen at least `min_count` times.
    ///
    /// Ids after the reserved block are assigned by descending frequency, ties
    /// broken lexicographically, so the result depends only on the counts.
    pub fn build<'a, I>(sentences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for t in s.tokens() {
                if !RESERVED.contains(&t.as_str()) {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens).expect("reserved prefix is present")
    }

    /// Shared vocabulary over the training splits of both styles.
    pub fn from_corpus(corpus: &StyleCorpus, min_count: usize) -> Self {
        Self::build(corpus.sides.iter().flat_map(|s| s.train.iter()), min_count)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::InvalidConfig("vocabulary must start with the reserved tokens".into()));
        }
        let mut token_to_id = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate().skip(RESERVED.len()) {
            if token_to_id.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidConfig(alloc::format!("duplicate vocabulary token {t}")));
            }
        }
        Ok(Self {
            id_to_token: tokens,
            token_to_id,
        })
    }

    /// Restores the lookup map after deserialization.
    pub fn reindex(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .skip(RESERVED.len())
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() == RESERVED.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.id_to_token[id as usize]
    }

    /// Maps tokens to ids; out-of-vocabulary tokens become UNK.
    pub fn to_ids(&self, sentence: &Sentence) -> Sequence {
        let ids = sentence
            .tokens()
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK))
            .collect();
        Sequence::new(ids).expect("lookup never yields PAD/BOS/EOS")
    }

    /// Maps ids back to tokens, stopping at the first EOS and dropping PAD/BOS.
    pub fn from_ids(&self, ids: &[TokenId]) -> Sentence {
        Sentence::new(
            ids.iter()
                .take_while(|&&i| i != EOS)
                .filter(|&&i| i != PAD && i != BOS)
                .map(|&i| self.token(i).to_string())
                .collect(),
        )
    }
}

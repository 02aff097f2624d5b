//! Sentences, vocabularies, style corpora and synthetic transfer tasks.

mod synthetic;
mod vocab;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{generate_synthetic, GoldMap, SyntheticKind, SyntheticTask, SyntheticTaskSpec};
pub use vocab::{TokenId, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

/// One of the two styles of a transfer task.
///
/// `Source` is `s_x` (corpus `D_X`), `Target` is `s_y` (corpus `D_Y`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Style {
    Source,
    Target,
}

impl Style {
    pub const BOTH: [Style; 2] = [Style::Source, Style::Target];

    pub fn index(self) -> usize {
        match self {
            Style::Source => 0,
            Style::Target => 1,
        }
    }

    pub fn other(self) -> Style {
        match self {
            Style::Source => Style::Target,
            Style::Target => Style::Source,
        }
    }
}

/// A style with its human-readable tag, e.g. `negative`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleLabel {
    pub id: Style,
    pub name: String,
}

/// Transfer direction. `XToY` is the forward model `f`, `YToX` the backward `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    XToY,
    YToX,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::XToY, Direction::YToX];

    pub fn input_style(self) -> Style {
        match self {
            Direction::XToY => Style::Source,
            Direction::YToX => Style::Target,
        }
    }

    pub fn output_style(self) -> Style {
        self.input_style().other()
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::XToY => Direction::YToX,
            Direction::YToX => Direction::XToY,
        }
    }

    pub fn index(self) -> usize {
        self.input_style().index()
    }

    pub fn tag(self) -> &'static str {
        match self {
            Direction::XToY => "f",
            Direction::YToX => "g",
        }
    }
}

/// Whitespace-tokenized surface form of a sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn from_words(words: &[&str]) -> Self {
        Self {
            tokens: words.iter().map(|w| w.to_string()).collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t)?;
        }
        Ok(())
    }
}

/// Splits a raw line on runs of whitespace.
pub fn tokenize(raw_line: &str) -> Result<Sentence> {
    let tokens: Vec<String> = raw_line.split_whitespace().map(String::from).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyLine);
    }
    Ok(Sentence { tokens })
}

/// Token ids of a sentence, without the terminating EOS.
///
/// Model code works on [`Sequence::with_eos`], which is always non-empty and
/// EOS-terminated; a sequence with no content tokens is the empty output.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sequence {
    ids: Vec<TokenId>,
}

impl Sequence {
    /// Fails if `ids` contains a reserved id other than UNK.
    pub fn new(ids: Vec<TokenId>) -> Result<Self> {
        if ids.iter().any(|&i| i == PAD || i == BOS || i == EOS) {
            return Err(Error::InvalidConfig("sequence holds a reserved id".into()));
        }
        Ok(Self { ids })
    }

    /// Builds a sequence from decoder output, cutting at the first EOS.
    pub fn from_decoded(ids: &[TokenId]) -> Self {
        let end = ids.iter().position(|&i| i == EOS).unwrap_or(ids.len());
        Self {
            ids: ids[..end].to_vec(),
        }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn with_eos(&self) -> Vec<TokenId> {
        let mut v = Vec::with_capacity(self.ids.len() + 1);
        v.extend_from_slice(&self.ids);
        v.push(EOS);
        v
    }
}

/// Train/dev/test sentences of one style, with optional line-aligned
/// references (transfers into the other style) for dev and test.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StyleSide {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub dev_refs: Vec<Vec<Sentence>>,
    pub test_refs: Vec<Vec<Sentence>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl StyleSide {
    pub fn split(&self, split: Split) -> &[Sentence] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Sentence> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    /// References for dev/test; train never carries any.
    pub fn refs(&self, split: Split) -> &[Vec<Sentence>] {
        match split {
            Split::Train => &[],
            Split::Dev => &self.dev_refs,
            Split::Test => &self.test_refs,
        }
    }

    pub fn refs_mut(&mut self, split: Split) -> Option<&mut Vec<Vec<Sentence>>> {
        match split {
            Split::Train => None,
            Split::Dev => Some(&mut self.dev_refs),
            Split::Test => Some(&mut self.test_refs),
        }
    }
}

/// Two non-parallel corpora `D_X` and `D_Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleCorpus {
    pub labels: [StyleLabel; 2],
    pub sides: [StyleSide; 2],
}

impl StyleCorpus {
    pub fn new(source_name: &str, target_name: &str) -> Self {
        Self {
            labels: [
                StyleLabel {
                    id: Style::Source,
                    name: source_name.to_string(),
                },
                StyleLabel {
                    id: Style::Target,
                    name: target_name.to_string(),
                },
            ],
            sides: [StyleSide::default(), StyleSide::default()],
        }
    }

    pub fn side(&self, style: Style) -> &StyleSide {
        &self.sides[style.index()]
    }

    pub fn side_mut(&mut self, style: Style) -> &mut StyleSide {
        &mut self.sides[style.index()]
    }

    pub fn label(&self, style: Style) -> &StyleLabel {
        &self.labels[style.index()]
    }

    /// All sentences of both styles and every split, in a fixed order.
    pub fn all_sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sides
            .iter()
            .flat_map(|s| s.train.iter().chain(&s.dev).chain(&s.test))
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels[0].name == self.labels[1].name {
            return Err(Error::InvalidConfig("style labels must be distinct".into()));
        }
        for side in &self.sides {
            if side.train.is_empty() {
                return Err(Error::EmptyList);
            }
            for split in [Split::Dev, Split::Test] {
                let refs = side.refs(split);
                if !refs.is_empty() && refs.len() != side.split(split).len() {
                    return Err(Error::LengthMismatch {
                        left: side.split(split).len(),
                        right: refs.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tokenize_splits_on_whitespace() {
        assert_eq!(tokenize("good food !").unwrap(), Sentence::from_words(&["good", "food", "!"]));
        assert_eq!(tokenize("  a  b ").unwrap(), Sentence::from_words(&["a", "b"]));
        assert_eq!(tokenize("tab\tsep\n").unwrap(), Sentence::from_words(&["tab", "sep"]));
    }

    #[test]
    fn empty_line_is_an_error() {
        assert_eq!(tokenize(""), Err(Error::EmptyLine));
        assert_eq!(tokenize("   \t "), Err(Error::EmptyLine));
    }

    #[test]
    fn decoded_sequences_stop_at_eos() {
        let s = Sequence::from_decoded(&[5, 6, EOS, 7]);
        assert_eq!(s.ids(), &[5, 6]);
        assert_eq!(s.with_eos(), vec![5, 6, EOS]);
        assert!(Sequence::from_decoded(&[EOS]).is_empty());
        assert!(Sequence::new(vec![4, PAD]).is_err());
    }

    #[test]
    fn directions_mirror_styles() {
        assert_eq!(Direction::XToY.output_style(), Style::Target);
        assert_eq!(Direction::YToX.reverse(), Direction::XToY);
        assert_eq!(Style::Source.other().other(), Style::Source);
    }
}

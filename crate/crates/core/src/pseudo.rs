//! Pseudo-parallel data: a salience-lexicon template transfer for
//! pre-training and back-translated pairs for teacher forcing.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, Sequence, Style, StyleCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::seq2seq::{DecodeConfig, Seq2Seq};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconConfig {
    /// Additive smoothing of the salience ratio.
    pub lambda: f64,
    /// Minimum salience of a marked n-gram.
    pub gamma: f64,
    pub max_n: usize,
    /// Context tokens considered on each side of a deletion site.
    pub window: usize,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 5.0,
            max_n: 2,
            window: 3,
        }
    }
}

type Gram = Vec<String>;

/// Positional context counts of one lexicon entry in its own style's corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct ContextProfile {
    occurrences: usize,
    counts: BTreeMap<(i64, String), usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleLexicon {
    pub config: LexiconConfig,
    /// Marked n-grams with their salience, per style.
    entries: [BTreeMap<Gram, f64>; 2],
    contexts: [BTreeMap<Gram, ContextProfile>; 2],
    context_types: usize,
}

/// Salience of `u` for a style: smoothed count ratio against the other style.
pub fn salience(count_own: usize, count_other: usize, lambda: f64) -> f64 {
    (count_own as f64 + lambda) / (count_other as f64 + lambda)
}

fn count_ngrams(sentences: &[Sentence], max_n: usize) -> BTreeMap<Gram, usize> {
    let mut m = BTreeMap::new();
    for s in sentences {
        for n in 1..=max_n {
            for w in s.tokens().windows(n) {
                *m.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
    }
    m
}

impl StyleLexicon {
    pub fn entries(&self, style: Style) -> impl Iterator<Item = (&[String], f64)> {
        self.entries[style.index()].iter().map(|(g, s)| (g.as_slice(), *s))
    }

    pub fn salience_of(&self, style: Style, gram: &[String]) -> Option<f64> {
        self.entries[style.index()].get(gram).copied()
    }

    pub fn len(&self, style: Style) -> usize {
        self.entries[style.index()].len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(BTreeMap::is_empty)
    }

    /// Maximal marked spans of `style` in `tokens`, left to right, longest
    /// match first.
    pub fn marked_spans(&self, tokens: &[String], style: Style) -> Vec<(usize, usize)> {
        let lex = &self.entries[style.index()];
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let hit = (1..=self.config.max_n.min(tokens.len() - i))
                .rev()
                .find(|&n| lex.contains_key(&tokens[i..i + n]));
            match hit {
                Some(n) => {
                    spans.push((i, i + n));
                    i += n;
                }
                None => i += 1,
            }
        }
        spans
    }

    fn context(&self, tokens: &[String], span: (usize, usize)) -> Vec<(i64, String)> {
        let w = self.config.window as i64;
        let mut ctx = Vec::new();
        for d in 1..=w {
            let left = span.0 as i64 - d;
            if left >= 0 {
                ctx.push((-d, tokens[left as usize].clone()));
            }
            let right = span.1 as i64 - 1 + d;
            if (right as usize) < tokens.len() {
                ctx.push((d, tokens[right as usize].clone()));
            }
        }
        ctx
    }

    /// Log-likelihood of a context under an entry's add-one smoothed
    /// positional profile.
    fn context_score(&self, profile: &ContextProfile, ctx: &[(i64, String)]) -> f64 {
        let den = (profile.occurrences + self.context_types) as f64;
        ctx.iter()
            .map(|k| Float::ln((profile.counts.get(k).copied().unwrap_or(0) + 1) as f64 / den))
            .sum()
    }

    /// Target-style entry whose recorded contexts best match `ctx`.
    fn best_entry(&self, target: Style, ctx: &[(i64, String)]) -> Option<&Gram> {
        let mut best: Option<(&Gram, f64, f64)> = None;
        for (g, &sal) in &self.entries[target.index()] {
            let score = self
                .contexts[target.index()]
                .get(g)
                .map_or(f64::NEG_INFINITY, |p| self.context_score(p, ctx));
            let better = match best {
                None => true,
                Some((bg, bs, bsal)) => {
                    score > bs || (score == bs && (sal > bsal || (sal == bsal && g < bg)))
                }
            };
            if better {
                best = Some((g, score, sal));
            }
        }
        best.map(|b| b.0)
    }
}

/// Marks n-grams (n up to `max_n`) whose salience reaches `gamma`. A bigram
/// is kept only when it is more salient than each of its unigrams, so that
/// marked words are not re-marked with every neighbour.
pub fn build_style_lexicon(corpus: &StyleCorpus, cfg: &LexiconConfig) -> Result<StyleLexicon> {
    if !(cfg.lambda > 0.0) || cfg.max_n == 0 {
        return Err(Error::InvalidConfig("lexicon needs lambda > 0 and max_n >= 1".into()));
    }
    let sides: [&[Sentence]; 2] = [&corpus.side(Style::Source).train, &corpus.side(Style::Target).train];
    if sides.iter().any(|s| s.is_empty()) {
        return Err(Error::EmptyList);
    }
    let counts = [count_ngrams(sides[0], cfg.max_n), count_ngrams(sides[1], cfg.max_n)];
    let mut entries: [BTreeMap<Gram, f64>; 2] = Default::default();
    for style in Style::BOTH {
        let (own, other) = (&counts[style.index()], &counts[style.other().index()]);
        for (g, &c) in own {
            let sal = salience(c, other.get(g).copied().unwrap_or(0), cfg.lambda);
            if sal < cfg.gamma {
                continue;
            }
            if g.len() > 1 {
                let beats_parts = g.iter().all(|t| {
                    let u = core::slice::from_ref(t);
                    let cu = own.get(u).copied().unwrap_or(0);
                    sal > salience(cu, other.get(u).copied().unwrap_or(0), cfg.lambda)
                });
                if !beats_parts {
                    continue;
                }
            }
            entries[style.index()].insert(g.clone(), sal);
        }
    }
    let mut lex = StyleLexicon {
        config: *cfg,
        entries,
        contexts: Default::default(),
        context_types: 0,
    };
    let mut types = BTreeSet::new();
    for style in Style::BOTH {
        for s in sides[style.index()] {
            types.extend(s.tokens().iter().cloned());
            for span in lex.marked_spans(s.tokens(), style) {
                let ctx = lex.context(s.tokens(), span);
                let p = lex.contexts[style.index()]
                    .entry(s.tokens()[span.0..span.1].to_vec())
                    .or_default();
                p.occurrences += 1;
                for k in ctx {
                    *p.counts.entry(k).or_insert(0) += 1;
                }
            }
        }
    }
    lex.context_types = types.len();
    Ok(lex)
}

/// Replaces every marked span of the opposite style with the best-matching
/// `target` entry. The flag is false when nothing was marked.
pub fn template_transfer(s: &Sentence, lex: &StyleLexicon, target: Style) -> (Sentence, bool) {
    let tokens = s.tokens();
    let spans = lex.marked_spans(tokens, target.other());
    if spans.is_empty() {
        return (s.clone(), false);
    }
    let mut out = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    for span in spans {
        out.extend_from_slice(&tokens[pos..span.0]);
        let ctx = lex.context(tokens, span);
        match lex.best_entry(target, &ctx) {
            Some(g) => out.extend(g.iter().cloned()),
            // no target entry exists: plain deletion
            None => {}
        }
        pos = span.1;
    }
    out.extend_from_slice(&tokens[pos..]);
    (Sentence::new(out), true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Template,
    BackTranslation,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Template => "template",
            Provenance::BackTranslation => "back_translation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub source: Sentence,
    pub target: Sentence,
    pub provenance: Provenance,
    pub iteration: u64,
}

impl PseudoPair {
    /// `source TAB target TAB provenance TAB iteration`.
    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.source, self.target, self.provenance.name(), self.iteration)
    }
}

/// Pre-training pairs: index 0 holds `(x, x~)` for `f`, index 1 `(y, y~)` for
/// `g`, one per training sentence, identity when no marker was found.
pub fn make_pretrain_pairs(corpus: &StyleCorpus, lex: &StyleLexicon) -> [Vec<PseudoPair>; 2] {
    let make = |style: Style| -> Vec<PseudoPair> {
        corpus
            .side(style)
            .train
            .iter()
            .map(|s| PseudoPair {
                source: s.clone(),
                target: template_transfer(s, lex, style.other()).0,
                provenance: Provenance::Template,
                iteration: 0,
            })
            .collect()
    };
    [make(Style::Source), make(Style::Target)]
}

/// `(model(s), s)` with greedy decoding; the authentic sentence is the target.
pub fn back_translate_pair(
    model: &Seq2Seq,
    vocab: &Vocabulary,
    s: &Sentence,
    iteration: u64,
    decode: &DecodeConfig,
) -> Result<PseudoPair> {
    let ids = vocab.to_ids(s);
    let out = model.greedy_decode(&ids, decode)?;
    Ok(PseudoPair {
        source: vocab.from_ids(&out.with_eos()),
        target: s.clone(),
        provenance: Provenance::BackTranslation,
        iteration,
    })
}

/// Id-level back-translation of a batch: raw `(source, target)` model inputs.
pub fn back_translate_ids(
    model: &Seq2Seq,
    sentences: &[Sequence],
    decode: &DecodeConfig,
) -> Result<Vec<(Vec<u32>, Vec<u32>)>> {
    let outs = model.decode_batch(sentences, decode)?;
    Ok(outs
        .iter()
        .zip(sentences)
        .map(|(o, s)| (o.with_eos(), s.with_eos()))
        .collect())
}

//! Seeded synthetic style-transfer tasks with known gold transfers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Sentence, Split, Style, StyleCorpus};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Styles differ by a bijective dictionary of opinion words.
    LexiconSwap,
    /// Style Y capitalizes every token of a style-X sentence.
    Casing,
    /// Style Y appends a marker token to a style-X sentence.
    Marker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTaskSpec {
    pub kind: SyntheticKind,
    /// Upper bound on the number of distinct word types the task may use.
    pub vocab_size: usize,
    /// Longest sentence, in tokens.
    pub max_len: usize,
    /// Number of opinion-word pairs in the style lexicon.
    pub pair_count: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::LexiconSwap,
            vocab_size: 200,
            max_len: 12,
            pair_count: 24,
            train_size: 4000,
            dev_size: 500,
            test_size: 500,
            seed: 7,
        }
    }
}

/// Gold transfer function of a synthetic task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GoldMap {
    Lexicon { x_to_y: BTreeMap<String, String> },
    Casing,
    Marker { token: String },
}

impl GoldMap {
    /// Transfers `s` into style `to`.
    pub fn transfer(&self, s: &Sentence, to: Style) -> Sentence {
        match self {
            GoldMap::Lexicon { x_to_y } => {
                let map = |t: &String| -> String {
                    match to {
                        Style::Target => x_to_y.get(t).cloned().unwrap_or_else(|| t.clone()),
                        Style::Source => x_to_y
                            .iter()
                            .find(|(_, y)| *y == t)
                            .map(|(x, _)| x.clone())
                            .unwrap_or_else(|| t.clone()),
                    }
                };
                Sentence::new(s.tokens().iter().map(map).collect())
            }
            GoldMap::Casing => Sentence::new(
                s.tokens()
                    .iter()
                    .map(|t| match to {
                        Style::Target => capitalize(t),
                        Style::Source => t.to_lowercase(),
                    })
                    .collect(),
            ),
            GoldMap::Marker { token } => {
                let mut toks: Vec<String> = s.tokens().iter().filter(|t| *t != token).cloned().collect();
                if to == Style::Target {
                    toks.push(token.clone());
                }
                Sentence::new(toks)
            }
        }
    }

    /// Lexicon-lookup style oracle; `None` when the evidence is balanced.
    pub fn oracle_style(&self, s: &Sentence) -> Option<Style> {
        let (mut x, mut y) = (0usize, 0usize);
        match self {
            GoldMap::Lexicon { x_to_y } => {
                for t in s.tokens() {
                    if x_to_y.contains_key(t) {
                        x += 1;
                    } else if x_to_y.values().any(|v| v == t) {
                        y += 1;
                    }
                }
            }
            GoldMap::Casing => {
                for t in s.tokens() {
                    let first = t.chars().next();
                    match first {
                        Some(c) if c.is_uppercase() => y += 1,
                        Some(c) if c.is_lowercase() => x += 1,
                        _ => {}
                    }
                }
            }
            GoldMap::Marker { token } => {
                if s.tokens().iter().any(|t| t == token) {
                    y += 1;
                } else {
                    x += 1;
                }
            }
        }
        match x.cmp(&y) {
            core::cmp::Ordering::Greater => Some(Style::Source),
            core::cmp::Ordering::Less => Some(Style::Target),
            core::cmp::Ordering::Equal => None,
        }
    }
}

/// A generated corpus together with its gold transfer function.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub corpus: StyleCorpus,
    pub gold: GoldMap,
}

// Opinion-word pairs: (style X, style Y).
const OPINION_PAIRS: [(&str, &str); 32] = [
    ("tasty", "bland"),
    ("friendly", "rude"),
    ("fresh", "stale"),
    ("great", "awful"),
    ("clean", "dirty"),
    ("quick", "slow"),
    ("warm", "cold"),
    ("good", "bad"),
    ("quiet", "noisy"),
    ("fun", "boring"),
    ("generous", "tiny"),
    ("crisp", "greasy"),
    ("affordable", "overpriced"),
    ("sweet", "sour"),
    ("lively", "dull"),
    ("crunchy", "soggy"),
    ("perfect", "burnt"),
    ("helpful", "lazy"),
    ("strong", "weak"),
    ("lovely", "ugly"),
    ("spacious", "cramped"),
    ("bright", "gloomy"),
    ("excellent", "terrible"),
    ("amazing", "mediocre"),
    ("balanced", "salty"),
    ("rich", "watery"),
    ("tender", "chewy"),
    ("cheerful", "grumpy"),
    ("neat", "sloppy"),
    ("wonderful", "dreadful"),
    ("fantastic", "horrible"),
    ("superb", "poor"),
];

const NOUNS: [&str; 64] = [
    "food", "meal", "pizza", "burger", "salad", "soup", "bread", "pasta", "coffee", "tea", "dessert", "cake",
    "waiter", "staff", "service", "owner", "room", "table", "patio", "bar", "music", "price", "menu", "portion",
    "fries", "steak", "chicken", "fish", "rice", "noodles", "sauce", "wine", "beer", "juice", "lighting", "decor",
    "parking", "line", "booth", "kitchen", "chef", "cashier", "host", "sandwich", "taco", "curry", "sushi",
    "bacon", "eggs", "toast", "pie", "cookies", "donut", "lobby", "bathroom", "view", "crust", "broth", "salsa",
    "omelet", "waffles", "bagel", "smoothie", "gelato",
];

const PREFIXES: [&[&str]; 4] = [&[], &["honestly", ","], &["overall", ","], &["well", ","]];

const SINGLE_SLOT: [&[&str]; 11] = [
    &["the", "{N}", "was", "{A}", "."],
    &["the", "{N}", "is", "{A}", "."],
    &["the", "{N}", "was", "really", "{A}", "."],
    &["i", "think", "the", "{N}", "is", "{A}", "."],
    &["we", "found", "the", "{N}", "{A}", "."],
    &["our", "{N}", "was", "so", "{A}", "today", "."],
    &["they", "said", "the", "{N}", "was", "{A}", "!"],
    &["this", "{N}", "is", "{A}", "!"],
    &["we", "had", "a", "{A}", "{N}", "."],
    &["what", "a", "{A}", "{N}", "!"],
    &["the", "{A}", "{N}", "was", "here", "again", "."],
];

const DOUBLE_SLOT: [&[&str]; 2] = [
    &["the", "{N}", "was", "{A}", "and", "the", "{N2}", "was", "{A2}", "."],
    &["the", "{N}", "is", "{A}", "but", "the", "{N2}", "is", "{A2}", "."],
];

const NOUNS_PER_PAIR: usize = 2;
const DOUBLE_SLOT_RATE: f64 = 0.3;
const MAX_ATTEMPTS_PER_SENTENCE: usize = 200;

fn capitalize(t: &str) -> String {
    let mut c = t.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Grammar<'a> {
    spec: &'a SyntheticTaskSpec,
    templates: Vec<(&'static [&'static str], &'static [&'static str])>,
}

impl<'a> Grammar<'a> {
    fn new(spec: &'a SyntheticTaskSpec) -> Self {
        let mut templates = Vec::new();
        for t in SINGLE_SLOT.iter().chain(DOUBLE_SLOT.iter()) {
            for p in PREFIXES {
                if p.len() + t.len() <= spec.max_len {
                    templates.push((p, *t));
                }
            }
        }
        Self { spec, templates }
    }

    fn word_types(&self) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        for (p, t) in &self.templates {
            for w in p.iter().chain(t.iter()) {
                if !w.starts_with('{') {
                    set.insert(w.to_string());
                }
            }
        }
        for (x, y) in &OPINION_PAIRS[..self.spec.pair_count] {
            set.insert(x.to_string());
            set.insert(y.to_string());
        }
        for n in &NOUNS[..self.spec.pair_count * NOUNS_PER_PAIR] {
            set.insert(n.to_string());
        }
        set
    }

    /// Draws a sentence whose opinion words come from `pick(pair_index)`.
    fn sample(&self, rng: &mut ChaCha8Rng, pick: &dyn Fn(usize, &mut ChaCha8Rng) -> &'static str) -> Sentence {
        let singles: Vec<_> = self.templates.iter().filter(|(_, t)| !t.contains(&"{N2}")).collect();
        let doubles: Vec<_> = self.templates.iter().filter(|(_, t)| t.contains(&"{N2}")).collect();
        let use_double = !doubles.is_empty() && (singles.is_empty() || rng.random_bool(DOUBLE_SLOT_RATE));
        let pool = if use_double { &doubles } else { &singles };
        let (prefix, body) = pool[rng.random_range(0..pool.len())];
        let pairs = self.spec.pair_count;
        let first = rng.random_range(0..pairs);
        let second = if pairs > 1 {
            (first + 1 + rng.random_range(0..pairs - 1)) % pairs
        } else {
            first
        };
        let noun = |pair: usize, rng: &mut ChaCha8Rng| NOUNS[pair * NOUNS_PER_PAIR + rng.random_range(0..NOUNS_PER_PAIR)];
        let n1 = noun(first, rng);
        let a1 = pick(first, rng);
        let n2 = noun(second, rng);
        let a2 = pick(second, rng);
        let tokens = prefix
            .iter()
            .chain(body.iter())
            .map(|w| match *w {
                "{N}" => n1.to_string(),
                "{A}" => a1.to_string(),
                "{N2}" => n2.to_string(),
                "{A2}" => a2.to_string(),
                other => other.to_string(),
            })
            .collect();
        Sentence::new(tokens)
    }
}

fn validate(spec: &SyntheticTaskSpec) -> Result<()> {
    if spec.pair_count == 0 || spec.pair_count > OPINION_PAIRS.len() {
        return Err(Error::InvalidSpec(format!(
            "pair_count must be in 1..={}",
            OPINION_PAIRS.len()
        )));
    }
    if spec.train_size == 0 || spec.dev_size == 0 || spec.test_size == 0 {
        return Err(Error::InvalidSpec("every split needs at least one sentence".into()));
    }
    Ok(())
}

/// Generates a seeded non-parallel task; dev/test items carry one gold
/// reference each and training sentences carry none.
pub fn generate_synthetic(spec: &SyntheticTaskSpec) -> Result<SyntheticTask> {
    validate(spec)?;
    let mut grammar = Grammar::new(spec);
    if spec.kind == SyntheticKind::Marker {
        // the marker costs one token
        let limit = spec.max_len.saturating_sub(1);
        grammar.templates.retain(|(p, t)| p.len() + t.len() <= limit);
    }
    if grammar.templates.is_empty() {
        return Err(Error::InvalidSpec(format!("no template fits max_len {}", spec.max_len)));
    }
    let base_types = grammar.word_types();
    let (gold, types, names) = match spec.kind {
        SyntheticKind::LexiconSwap => {
            let x_to_y = OPINION_PAIRS[..spec.pair_count]
                .iter()
                .map(|(x, y)| (x.to_string(), y.to_string()))
                .collect();
            (GoldMap::Lexicon { x_to_y }, base_types.len(), ("positive", "negative"))
        }
        SyntheticKind::Casing => {
            let cased: BTreeSet<String> = base_types.iter().map(|t| capitalize(t)).collect();
            (GoldMap::Casing, base_types.union(&cased).count(), ("lower", "title"))
        }
        SyntheticKind::Marker => (
            GoldMap::Marker { token: "lol".into() },
            base_types.len() + 1,
            ("plain", "marked"),
        ),
    };
    if types > spec.vocab_size {
        return Err(Error::InvalidSpec(format!(
            "task needs {types} word types but vocab_size is {}",
            spec.vocab_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = StyleCorpus::new(names.0, names.1);
    let sizes = [spec.train_size, spec.dev_size, spec.test_size];
    let total: usize = sizes.iter().sum();
    for style in Style::BOTH {
        let pick: &dyn Fn(usize, &mut ChaCha8Rng) -> &'static str = match (spec.kind, style) {
            (SyntheticKind::LexiconSwap, Style::Source) => &|i, _| OPINION_PAIRS[i].0,
            (SyntheticKind::LexiconSwap, Style::Target) => &|i, _| OPINION_PAIRS[i].1,
            _ => &|i, r: &mut ChaCha8Rng| {
                if r.random_bool(0.5) {
                    OPINION_PAIRS[i].0
                } else {
                    OPINION_PAIRS[i].1
                }
            },
        };
        let mut seen = BTreeSet::new();
        let mut drawn = Vec::with_capacity(total);
        let mut attempts = 0usize;
        while drawn.len() < total {
            attempts += 1;
            if attempts > total * MAX_ATTEMPTS_PER_SENTENCE {
                return Err(Error::InvalidSpec(format!(
                    "grammar cannot produce {total} distinct sentences"
                )));
            }
            let mut s = grammar.sample(&mut rng, pick);
            if style == Style::Target && spec.kind != SyntheticKind::LexiconSwap {
                s = gold.transfer(&s, Style::Target);
            }
            if seen.insert(s.clone()) {
                drawn.push(s);
            }
        }
        let side = corpus.side_mut(style);
        let mut it = drawn.into_iter();
        for (split, n) in Split::ALL.into_iter().zip(sizes) {
            let items: Vec<Sentence> = it.by_ref().take(n).collect();
            if let Some(refs) = side.refs_mut(split) {
                *refs = items.iter().map(|s| vec![gold.transfer(s, style.other())]).collect();
            }
            *side.split_mut(split) = items;
        }
    }
    corpus.validate()?;
    Ok(SyntheticTask { corpus, gold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: SyntheticKind) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            kind,
            train_size: 300,
            dev_size: 40,
            test_size: 40,
            pair_count: 8,
            ..SyntheticTaskSpec::default()
        }
    }

    #[test]
    fn gold_lexicon_substitution_example() {
        let task = generate_synthetic(&small(SyntheticKind::LexiconSwap)).unwrap();
        let x = Sentence::from_words(&["the", "meal", "was", "tasty"]);
        let y = Sentence::from_words(&["the", "meal", "was", "bland"]);
        assert_eq!(task.gold.transfer(&x, Style::Target), y);
        assert_eq!(task.gold.transfer(&y, Style::Source), x);
    }

    #[test]
    fn gold_map_is_an_involution() {
        for kind in [SyntheticKind::LexiconSwap, SyntheticKind::Casing, SyntheticKind::Marker] {
            let task = generate_synthetic(&small(kind)).unwrap();
            for s in &task.corpus.side(Style::Source).train {
                let there = task.gold.transfer(s, Style::Target);
                assert_eq!(&task.gold.transfer(&there, Style::Source), s, "{kind:?}");
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic(&small(SyntheticKind::LexiconSwap)).unwrap();
        let b = generate_synthetic(&small(SyntheticKind::LexiconSwap)).unwrap();
        assert_eq!(a, b);
        let mut other = small(SyntheticKind::LexiconSwap);
        other.seed += 1;
        assert_ne!(a.corpus, generate_synthetic(&other).unwrap().corpus);
    }

    #[test]
    fn splits_are_disjoint_and_train_has_no_refs() {
        let task = generate_synthetic(&small(SyntheticKind::LexiconSwap)).unwrap();
        for side in &task.corpus.sides {
            let mut all = BTreeSet::new();
            for split in Split::ALL {
                for s in side.split(split) {
                    assert!(all.insert(s.clone()));
                }
            }
            assert!(side.refs(Split::Train).is_empty());
            assert_eq!(side.dev_refs.len(), side.dev.len());
            assert_eq!(side.test_refs.len(), side.test.len());
        }
    }

    #[test]
    fn every_sentence_carries_its_style_and_the_oracle_agrees() {
        let task = generate_synthetic(&small(SyntheticKind::LexiconSwap)).unwrap();
        for style in Style::BOTH {
            for s in task.corpus.side(style).train.iter().chain(&task.corpus.side(style).dev) {
                assert_eq!(task.gold.oracle_style(s), Some(style));
                assert!(s.len() <= 12);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small(SyntheticKind::LexiconSwap);
        s.pair_count = 0;
        assert!(matches!(generate_synthetic(&s), Err(Error::InvalidSpec(_))));
        let mut s = small(SyntheticKind::LexiconSwap);
        s.vocab_size = 10;
        assert!(matches!(generate_synthetic(&s), Err(Error::InvalidSpec(_))));
        let mut s = small(SyntheticKind::LexiconSwap);
        s.max_len = 3;
        assert!(matches!(generate_synthetic(&s), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn default_task_fits_its_budget() {
        let spec = SyntheticTaskSpec::default();
        let task = generate_synthetic(&spec).unwrap();
        let vocab = crate::corpus::Vocabulary::from_corpus(&task.corpus, 1);
        assert!(vocab.len() - 4 <= spec.vocab_size);
        assert_eq!(task.corpus.side(Style::Source).train.len(), 4000);
    }
}

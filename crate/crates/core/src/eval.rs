//! Corpus BLEU, accuracy-based reports and overall scores.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax_style, Classifier};
use crate::corpus::{Sequence, Style};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// N-gram multiset of one order.
pub(crate) fn ngram_counts<T: Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut m = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Matched and total n-gram counts of one candidate, clipped by the maximum
/// count of each n-gram over the references.
pub(crate) fn clipped_matches<T: Ord>(cand: &[T], refs: &[&[T]], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let mut max_ref: BTreeMap<&[T], usize> = BTreeMap::new();
    for r in refs {
        for (g, k) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(k);
        }
    }
    let matched = c.iter().map(|(g, k)| (*k).min(max_ref.get(g).copied().unwrap_or(0))).sum();
    (matched, cand.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`; ties go to the shorter reference.
pub(crate) fn closest_ref_len(c: usize, refs: &[usize]) -> usize {
    let mut best = refs[0];
    for &r in &refs[1..] {
        let (d, bd) = (r.abs_diff(c), best.abs_diff(c));
        if d < bd || (d == bd && r < best) {
            best = r;
        }
    }
    best
}

/// Accumulated corpus statistics for BLEU.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matched: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn add<T: Ord>(&mut self, cand: &[T], refs: &[&[T]]) {
        for n in 1..=MAX_ORDER {
            let (m, t) = clipped_matches(cand, refs, n);
            self.matched[n - 1] += m;
            self.total[n - 1] += t;
        }
        self.cand_len += cand.len();
        let lens: Vec<usize> = refs.iter().map(|r| r.len()).collect();
        self.ref_len += closest_ref_len(cand.len(), &lens);
    }

    /// BLEU-4 in percent; 0 when any order has no match.
    pub fn score(&self) -> f64 {
        if self.matched.iter().any(|m| *m == 0) || self.cand_len == 0 {
            return 0.0;
        }
        let log_p: f64 = (0..MAX_ORDER)
            .map(|i| Float::ln(self.matched[i] as f64 / self.total[i] as f64))
            .sum::<f64>()
            / MAX_ORDER as f64;
        let bp = if self.cand_len < self.ref_len {
            Float::exp(1.0 - self.ref_len as f64 / self.cand_len as f64)
        } else {
            1.0
        };
        100.0 * bp * Float::exp(log_p)
    }
}

/// Corpus-level BLEU-4 over any token type.
pub fn corpus_bleu_tokens<T: Ord>(candidates: &[&[T]], references: &[Vec<&[T]>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut stats = BleuStats::default();
    for (i, (c, r)) in candidates.iter().zip(references).enumerate() {
        if r.is_empty() {
            return Err(Error::MissingReference(i));
        }
        stats.add(c, r);
    }
    Ok(stats.score())
}

/// Corpus BLEU of token-string sentences, case-sensitive.
pub fn corpus_bleu(candidates: &[crate::corpus::Sentence], references: &[Vec<crate::corpus::Sentence>]) -> Result<f64> {
    let c: Vec<&[String]> = candidates.iter().map(|s| s.tokens()).collect();
    let r: Vec<Vec<&[String]>> = references
        .iter()
        .map(|set| set.iter().map(|s| s.tokens()).collect())
        .collect();
    corpus_bleu_tokens(&c, &r)
}

/// Corpus BLEU over id sequences with one reference each.
pub fn corpus_bleu_ids(candidates: &[Sequence], references: &[Sequence]) -> Result<f64> {
    let c: Vec<&[u32]> = candidates.iter().map(Sequence::ids).collect();
    let r: Vec<Vec<&[u32]>> = references.iter().map(|s| alloc::vec![s.ids()]).collect();
    corpus_bleu_tokens(&c, &r)
}

/// Geometric and harmonic means of two percentages.
pub fn g2h2(acc: f64, bleu: f64) -> (f64, f64) {
    let g2 = Float::sqrt(acc * bleu);
    let h2 = if acc + bleu == 0.0 { 0.0 } else { 2.0 * acc * bleu / (acc + bleu) };
    (g2, h2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub input: String,
    pub output: String,
    pub references: Vec<String>,
    pub p_target: f64,
    /// Smoothed sentence BLEU against the best-matching reference.
    pub best_ref_bleu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub bleu: f64,
    pub g2: f64,
    pub h2: f64,
    pub n_sentences: usize,
    pub records: Vec<SentenceRecord>,
}

/// Add-one smoothed sentence BLEU (orders 2 and up) as a fraction in [0, 1].
pub fn smoothed_sentence_bleu<T: Ord>(cand: &[T], refs: &[&[T]]) -> f64 {
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=MAX_ORDER {
        let (m, t) = clipped_matches(cand, refs, n);
        let (m, t) = if n == 1 { (m as f64, t as f64) } else { (m as f64 + 1.0, t as f64 + 1.0) };
        if m == 0.0 {
            return 0.0;
        }
        log_p += Float::ln(m / t);
    }
    let lens: Vec<usize> = refs.iter().map(|r| r.len()).collect();
    let r = closest_ref_len(cand.len(), &lens) as f64;
    let c = cand.len() as f64;
    let bp = if c < r { Float::exp(1.0 - r / c) } else { 1.0 };
    bp * Float::exp(log_p / MAX_ORDER as f64)
}

/// Scores transferred outputs: ACC toward `target` with the classifier, BLEU
/// against the references, and their overall means.
///
/// `inputs`, `outputs` and `references` are line-aligned; `outputs` must be
/// the id form of `output_text`.
pub fn evaluate(
    clf: &Classifier,
    target: Style,
    inputs: &[crate::corpus::Sentence],
    outputs: &[crate::corpus::Sentence],
    output_ids: &[Sequence],
    references: &[Vec<crate::corpus::Sentence>],
) -> Result<EvalReport> {
    for len in [outputs.len(), output_ids.len(), references.len()] {
        if len != inputs.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: len,
            });
        }
    }
    if inputs.is_empty() {
        return Err(Error::EmptyList);
    }
    let bleu = corpus_bleu(outputs, references)?;
    // empty outputs cannot be classified and count as misses
    let mut probs = alloc::vec![[f64::NAN; 2]; output_ids.len()];
    let nonempty: Vec<usize> = (0..output_ids.len()).filter(|&i| !output_ids[i].is_empty()).collect();
    let seqs: Vec<Sequence> = nonempty.iter().map(|&i| output_ids[i].clone()).collect();
    for (&i, p) in nonempty.iter().zip(clf.classify_batch(&seqs)?) {
        probs[i] = p;
    }
    let hits = probs
        .iter()
        .filter(|p| !p[0].is_nan() && argmax_style(**p) == target)
        .count();
    let acc = 100.0 * hits as f64 / inputs.len() as f64;
    let (g2, h2) = g2h2(acc, bleu);
    let records = (0..inputs.len())
        .map(|i| {
            let refs: Vec<&[String]> = references[i].iter().map(|s| s.tokens()).collect();
            let best = refs
                .iter()
                .map(|r| smoothed_sentence_bleu(outputs[i].tokens(), core::slice::from_ref(r)))
                .fold(0.0, f64::max);
            SentenceRecord {
                input: alloc::format!("{}", inputs[i]),
                output: alloc::format!("{}", outputs[i]),
                references: references[i].iter().map(|s| alloc::format!("{s}")).collect(),
                p_target: if probs[i][0].is_nan() { 0.0 } else { probs[i][target.index()] },
                best_ref_bleu: 100.0 * best,
            }
        })
        .collect();
    Ok(EvalReport {
        acc,
        bleu,
        g2,
        h2,
        n_sentences: inputs.len(),
        records,
    })
}

/// One epoch of learning-curve data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub dev_acc: f64,
    pub dev_bleu: f64,
    pub mean_style_reward: f64,
    pub mean_content_reward: f64,
    pub mean_reward: f64,
}

/// Epoch-indexed CSV of dev metrics and mean rewards.
pub fn emit_curves(history: &[CurvePoint]) -> Result<String> {
    if history.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut rows: Vec<&CurvePoint> = history.iter().collect();
    rows.sort_by_key(|p| p.epoch);
    let mut out = String::from("epoch,dev_acc,dev_bleu,mean_style_reward,mean_content_reward,mean_reward\n");
    for p in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.epoch, p.dev_acc, p.dev_bleu, p.mean_style_reward, p.mean_content_reward, p.mean_reward
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests;

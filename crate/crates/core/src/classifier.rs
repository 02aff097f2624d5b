//! Convolutional binary style classifier used for the style reward and ACC.
//!
//! Class 0 is `s_x`, class 1 is `s_y`. An exact tie resolves to `s_x`.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sequence, Style, PAD};
use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, init_normal, init_uniform, softmax_in_place, AdamConfig, AdamState, Array, NodeId, ParamId, ParamSet,
    Tape,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub widths: Vec<usize>,
    pub channels: usize,
}

impl ClassifierConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 64,
            widths: vec![1, 2, 3],
            channels: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub params: ParamSet,
    frozen: bool,
    embed: ParamId,
    convs: Vec<(ParamId, ParamId)>,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            lr: 1e-3,
            seed: 11,
        }
    }
}

const CHUNK_ROWS: usize = 256;

impl Classifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let e = config.embed_dim;
        let embed = params.add("embed", init_normal(config.vocab_size, e, 0.1, &mut rng));
        let convs = config
            .widths
            .iter()
            .map(|&w| {
                let bound = 1.0 / Float::sqrt((w * e) as f64);
                let wid = params.add(&alloc::format!("conv{w}_w"), init_uniform(w * e, config.channels, bound, &mut rng));
                let bid = params.add(&alloc::format!("conv{w}_b"), Array::zeros(1, config.channels));
                (wid, bid)
            })
            .collect();
        let feat = config.channels * config.widths.len();
        let out_w = params.add("out_w", init_uniform(feat, 2, 1.0 / Float::sqrt(feat as f64), &mut rng));
        let out_b = params.add("out_b", Array::zeros(1, 2));
        Self {
            config,
            params,
            frozen: false,
            embed,
            convs,
            out_w,
            out_b,
        }
    }

    /// A classifier whose parameters are all zero; predicts (0.5, 0.5).
    pub fn zeroed(config: ClassifierConfig) -> Self {
        let mut c = Self::new(config, 0);
        let ids: Vec<ParamId> = c.params.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            c.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        c
    }

    pub fn from_params(config: ClassifierConfig, params: ParamSet, frozen: bool) -> Result<Self> {
        let mut c = Self::new(config, 0);
        c.params.load_from(&params)?;
        c.frozen = frozen;
        Ok(c)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Mutable parameter access; refused once frozen.
    pub fn params_mut(&mut self) -> Result<&mut ParamSet> {
        if self.frozen {
            return Err(Error::InvalidConfig("classifier is frozen".into()));
        }
        Ok(&mut self.params)
    }

    fn logits(&self, t: &mut Tape<'_>, batch: &[&Sequence]) -> NodeId {
        let max_w = self.config.widths.iter().copied().max().unwrap_or(1);
        let padded = batch.iter().map(|s| s.len()).max().unwrap_or(1).max(max_w);
        let lengths: Vec<usize> = batch.iter().map(|s| s.len()).collect();
        let mut ids = Vec::with_capacity(batch.len() * padded);
        for s in batch {
            ids.extend(s.ids().iter().map(|&i| i as usize));
            ids.extend(core::iter::repeat(PAD as usize).take(padded - s.len()));
        }
        let embed = t.param(self.embed);
        let x = t.embedding(embed, &ids);
        let mut feats = Vec::with_capacity(self.convs.len());
        for (&w, &(wid, bid)) in self.config.widths.iter().zip(&self.convs) {
            let wn = t.param(wid);
            let bn = t.param(bid);
            let conv = t.conv1d(x, wn, bn, &lengths, padded, w);
            let act = t.relu(conv);
            let segments: Vec<usize> = lengths.iter().map(|&l| l.saturating_sub(w - 1).max(1)).collect();
            feats.push(t.max_over_time(act, &segments));
        }
        let f = t.concat_cols(&feats);
        let ow = t.param(self.out_w);
        let ob = t.param(self.out_b);
        let l = t.matmul(f, ow);
        t.add_row(l, ob)
    }

    /// `[P(s_x), P(s_y)]` for one sentence.
    pub fn classify_prob(&self, s: &Sequence) -> Result<[f64; 2]> {
        Ok(self.classify_batch(core::slice::from_ref(s))?[0])
    }

    pub fn classify_batch(&self, seqs: &[Sequence]) -> Result<Vec<[f64; 2]>> {
        if seqs.iter().any(Sequence::is_empty) {
            return Err(Error::EmptySequence);
        }
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(CHUNK_ROWS) {
            let refs: Vec<&Sequence> = chunk.iter().collect();
            let mut t = Tape::new(&self.params);
            let l = self.logits(&mut t, &refs);
            let v = t.value(l);
            for i in 0..v.rows() {
                let mut row = [v.get(i, 0), v.get(i, 1)];
                softmax_in_place(&mut row);
                out.push(row);
            }
        }
        Ok(out)
    }

    /// Argmax style; an exact tie goes to `s_x`.
    pub fn predict(&self, s: &Sequence) -> Result<Style> {
        Ok(argmax_style(self.classify_prob(s)?))
    }
}

pub fn argmax_style(p: [f64; 2]) -> Style {
    if p[1] > p[0] {
        Style::Target
    } else {
        Style::Source
    }
}

/// Fraction of `sentences` whose predicted style is `target`.
pub fn style_accuracy(clf: &Classifier, sentences: &[Sequence], target: Style) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::EmptyList);
    }
    let probs = clf.classify_batch(sentences)?;
    let hits = probs.iter().filter(|p| argmax_style(**p) == target).count();
    Ok(hits as f64 / sentences.len() as f64)
}

/// Balanced dev accuracy over both styles.
fn dev_accuracy(clf: &Classifier, dev: &[&[Sequence]; 2]) -> Result<f64> {
    let mut hits = 0.0;
    let mut n = 0usize;
    for style in Style::BOTH {
        let set = dev[style.index()];
        if set.is_empty() {
            continue;
        }
        hits += style_accuracy(clf, set, style)? * set.len() as f64;
        n += set.len();
    }
    if n == 0 {
        return Err(Error::EmptyList);
    }
    Ok(hits / n as f64)
}

/// Trains on labelled train sentences of both styles and returns the frozen
/// snapshot with the best dev accuracy, together with that accuracy.
pub fn train_classifier(
    config: ClassifierConfig,
    train: [&[Sequence]; 2],
    dev: [&[Sequence]; 2],
    tc: &ClassifierTrainConfig,
) -> Result<(Classifier, f64)> {
    let mut data: Vec<(&Sequence, usize)> = Vec::new();
    for style in Style::BOTH {
        data.extend(train[style.index()].iter().map(|s| (s, style.index())));
    }
    if data.is_empty() {
        return Err(Error::EmptyList);
    }
    if data.iter().any(|(s, _)| s.is_empty()) {
        return Err(Error::EmptySequence);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut clf = Classifier::new(config, tc.seed);
    let mut opt = AdamState::new(&clf.params, AdamConfig::with_lr(tc.lr));
    let mut best = (clf.params.clone(), dev_accuracy(&clf, &dev)?);
    let batch = tc.batch_size.max(1);
    for _ in 0..tc.epochs {
        data.shuffle(&mut rng);
        for chunk in data.chunks(batch) {
            let seqs: Vec<&Sequence> = chunk.iter().map(|(s, _)| *s).collect();
            let labels: Vec<usize> = chunk.iter().map(|(_, l)| *l).collect();
            let w = vec![1.0 / chunk.len() as f64; chunk.len()];
            let grads = {
                let mut t = Tape::new(&clf.params);
                let l = clf.logits(&mut t, &seqs);
                let loss = t.cross_entropy(l, &labels, &w);
                t.backward(loss)?
            };
            adam_step(&mut clf.params, &grads, &mut opt)?;
        }
        let acc = dev_accuracy(&clf, &dev)?;
        if acc > best.1 {
            best = (clf.params.clone(), acc);
        }
    }
    clf.params = best.0;
    clf.freeze();
    Ok((clf, best.1))
}

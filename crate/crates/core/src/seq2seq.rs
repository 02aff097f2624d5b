//! Attention-based LSTM encoder-decoder used for both transfer directions.
//!
//! The encoder is a single-layer LSTM over the EOS-terminated source. The
//! decoder is a single-layer LSTM fed the previous token (BOS first) and
//! initialised from the final encoder state; a bilinear attention over the
//! encoder states is combined with the decoder state through a `tanh` layer
//! before the vocabulary projection. PAD and BOS are never emitted.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Direction, Sequence, TokenId, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, init_normal, init_uniform, softmax_in_place, AdamState, Array, Gradients, NodeId, ParamId, ParamSet,
    Tape,
};

/// Logit offset that removes a token from the output distribution.
const MASKED_LOGIT: f64 = -1e9;

/// Rows per forward pass in the batched helpers; bounds tape memory.
pub const CHUNK_ROWS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Bound of the uniform initialisation of recurrent/attention weights.
    pub init_scale: f64,
    /// Standard deviation of the normal embedding initialisation.
    pub embed_std: f64,
}

impl Seq2SeqConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 300,
            hidden_dim: 256,
            init_scale: 0.08,
            embed_std: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxLen {
    Fixed(usize),
    /// Source length plus `extra` decoding steps, at most `cap`.
    SourcePlus { extra: usize, cap: usize },
}

impl MaxLen {
    pub fn resolve(self, source_len: usize) -> usize {
        match self {
            MaxLen::Fixed(n) => n,
            MaxLen::SourcePlus { extra, cap } => (source_len + extra).min(cap),
        }
        .max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_len: MaxLen,
    pub mode: DecodeMode,
    pub temperature: f64,
    pub seed: u64,
    pub beam_width: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_len: MaxLen::SourcePlus { extra: 5, cap: 32 },
            mode: DecodeMode::Greedy,
            temperature: 1.0,
            seed: 0,
            beam_width: 1,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if let MaxLen::Fixed(0) = self.max_len {
            return Err(Error::InvalidConfig("max_len must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam_width must be at least 1".into()));
        }
        Ok(())
    }
}

/// One sampled output: raw decoder tokens (EOS-terminated unless truncated)
/// and their total log-probability under the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
}

impl Sample {
    pub fn sequence(&self) -> Sequence {
        Sequence::from_decoded(&self.tokens)
    }

    /// The model emitted EOS immediately.
    pub fn is_degenerate(&self) -> bool {
        self.tokens.first() == Some(&EOS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<Sample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Ids {
    embed: ParamId,
    enc_w: ParamId,
    enc_b: ParamId,
    dec_w: ParamId,
    dec_b: ParamId,
    attn: ParamId,
    comb_w: ParamId,
    comb_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Parameters and hyperparameters of one transfer model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub config: Seq2SeqConfig,
    pub direction: Direction,
    pub params: ParamSet,
    ids: Ids,
}

/// Encoder outputs recorded on a tape.
struct Memory {
    values: NodeId,
    keys: NodeId,
    score_mask: NodeId,
    steps: usize,
    h: NodeId,
    c: NodeId,
}

/// Decoder state for a batch of rows.
struct DecState {
    h: NodeId,
    c: NodeId,
}

pub(crate) struct Rollout {
    pub tokens: Vec<Vec<TokenId>>,
    /// `B x 1` column of per-row total log-probabilities.
    pub log_prob: NodeId,
}

pub(crate) enum Policy<'r> {
    Greedy,
    Sample { temperature: f64, rng: &'r mut ChaCha8Rng },
}

pub const PARAM_NAMES: [&str; 10] = [
    "embed", "enc_w", "enc_b", "dec_w", "dec_b", "attn", "comb_w", "comb_b", "out_w", "out_b",
];

impl Seq2Seq {
    pub fn new(config: Seq2SeqConfig, direction: Direction, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, e, h, s) = (config.vocab_size, config.embed_dim, config.hidden_dim, config.init_scale);
        let mut p = ParamSet::new();
        let ids = Ids {
            embed: p.add("embed", init_normal(v, e, config.embed_std, &mut rng)),
            enc_w: p.add("enc_w", init_uniform(e + h, 4 * h, s, &mut rng)),
            enc_b: p.add("enc_b", Array::zeros(1, 4 * h)),
            dec_w: p.add("dec_w", init_uniform(e + h, 4 * h, s, &mut rng)),
            dec_b: p.add("dec_b", Array::zeros(1, 4 * h)),
            attn: p.add("attn", init_uniform(h, h, s, &mut rng)),
            comb_w: p.add("comb_w", init_uniform(2 * h, h, s, &mut rng)),
            comb_b: p.add("comb_b", Array::zeros(1, h)),
            out_w: p.add("out_w", init_uniform(h, v, s, &mut rng)),
            out_b: p.add("out_b", Array::zeros(1, v)),
        };
        Self {
            config,
            direction,
            params: p,
            ids,
        }
    }

    /// Rebuilds a model around loaded parameters; names and shapes must match.
    pub fn from_params(config: Seq2SeqConfig, direction: Direction, params: ParamSet) -> Result<Self> {
        let mut model = Self::new(config, direction, 0);
        model.params.load_from(&params)?;
        Ok(model)
    }

    fn lstm(t: &mut Tape<'_>, w: NodeId, b: NodeId, x: NodeId, st: &DecState, hdim: usize) -> DecState {
        let xh = t.concat_cols(&[x, st.h]);
        let z = t.matmul(xh, w);
        let z = t.add_row(z, b);
        let zi = t.slice_cols(z, 0, hdim);
        let zf = t.slice_cols(z, hdim, hdim);
        let zg = t.slice_cols(z, 2 * hdim, hdim);
        let zo = t.slice_cols(z, 3 * hdim, hdim);
        let i = t.sigmoid(zi);
        let f = t.sigmoid(zf);
        let g = t.tanh(zg);
        let o = t.sigmoid(zo);
        let fc = t.mul(f, st.c);
        let ig = t.mul(i, g);
        let c = t.add(fc, ig);
        let tc = t.tanh(c);
        let h = t.mul(o, tc);
        DecState { h, c }
    }

    fn encode(&self, t: &mut Tape<'_>, sources: &[Vec<TokenId>]) -> Memory {
        let hd = self.config.hidden_dim;
        let b = sources.len();
        let steps = sources.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let embed = t.param(self.ids.embed);
        let w = t.param(self.ids.enc_w);
        let bias = t.param(self.ids.enc_b);
        let mut st = DecState {
            h: t.constant(Array::zeros(b, hd)),
            c: t.constant(Array::zeros(b, hd)),
        };
        let mut outputs = Vec::with_capacity(steps);
        for step in 0..steps {
            let tok: Vec<usize> = sources
                .iter()
                .map(|s| s.get(step).copied().unwrap_or(PAD) as usize)
                .collect();
            let live: Vec<bool> = sources.iter().map(|s| step < s.len()).collect();
            let x = t.embedding(embed, &tok);
            let next = Self::lstm(t, w, bias, x, &st, hd);
            st = if live.iter().all(|l| *l) {
                next
            } else {
                DecState {
                    h: t.select_rows(&live, next.h, st.h),
                    c: t.select_rows(&live, next.c, st.c),
                }
            };
            outputs.push(st.h);
        }
        let values = t.stack_steps(&outputs);
        let attn = t.param(self.ids.attn);
        let keys = t.matmul(values, attn);
        let mut mask = Array::zeros(b, steps);
        for (i, s) in sources.iter().enumerate() {
            for step in s.len()..steps {
                mask.set(i, step, MASKED_LOGIT);
            }
        }
        let score_mask = t.constant(mask);
        Memory {
            values,
            keys,
            score_mask,
            steps,
            h: st.h,
            c: st.c,
        }
    }

    /// One decoder step; returns the new state and masked `B x V` logits.
    fn decode_step(&self, t: &mut Tape<'_>, mem: &Memory, st: &DecState, prev: &[usize], out_mask: NodeId) -> (DecState, NodeId) {
        let hd = self.config.hidden_dim;
        let embed = t.param(self.ids.embed);
        let w = t.param(self.ids.dec_w);
        let bias = t.param(self.ids.dec_b);
        let x = t.embedding(embed, prev);
        let next = Self::lstm(t, w, bias, x, st, hd);
        let scores = t.attn_scores(next.h, mem.keys, mem.steps);
        let scores = t.add(scores, mem.score_mask);
        let weights = t.softmax_rows(scores);
        let ctx = t.attn_context(weights, mem.values, mem.steps);
        let cat = t.concat_cols(&[next.h, ctx]);
        let cw = t.param(self.ids.comb_w);
        let cb = t.param(self.ids.comb_b);
        let comb = t.matmul(cat, cw);
        let comb = t.add_row(comb, cb);
        let comb = t.tanh(comb);
        let ow = t.param(self.ids.out_w);
        let ob = t.param(self.ids.out_b);
        let logits = t.matmul(comb, ow);
        let logits = t.add_row(logits, ob);
        let logits = t.add_row(logits, out_mask);
        (next, logits)
    }

    fn output_mask(&self, t: &mut Tape<'_>) -> NodeId {
        let mut m = Array::zeros(1, self.config.vocab_size);
        m.set(0, PAD as usize, MASKED_LOGIT);
        m.set(0, BOS as usize, MASKED_LOGIT);
        t.constant(m)
    }

    fn check_ids(&self, seqs: &[Vec<TokenId>]) -> Result<()> {
        for s in seqs {
            if s.is_empty() {
                return Err(Error::EmptySequence);
            }
            if s.iter().any(|&i| i as usize >= self.config.vocab_size) {
                return Err(Error::InvalidConfig("token id outside the model vocabulary".into()));
            }
        }
        Ok(())
    }

    /// Teacher-forced per-row log-probabilities (`B x 1`) of `targets` given
    /// `sources`. Both are raw id sequences as fed to the model.
    pub(crate) fn target_log_probs(&self, t: &mut Tape<'_>, sources: &[Vec<TokenId>], targets: &[Vec<TokenId>]) -> NodeId {
        let b = sources.len();
        let mem = self.encode(t, sources);
        let out_mask = self.output_mask(t);
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0);
        let mut st = DecState { h: mem.h, c: mem.c };
        let mut prev = vec![BOS as usize; b];
        let mut weights = Array::zeros(b, steps);
        let mut picks = Vec::with_capacity(steps);
        for step in 0..steps {
            let (next, logits) = self.decode_step(t, &mem, &st, &prev, out_mask);
            let logp = t.log_softmax_rows(logits);
            let tgt: Vec<usize> = targets
                .iter()
                .map(|s| s.get(step).copied().unwrap_or(PAD) as usize)
                .collect();
            for (i, s) in targets.iter().enumerate() {
                if step < s.len() {
                    weights.set(i, step, 1.0);
                }
            }
            picks.push(t.gather_cols(logp, &tgt));
            prev = tgt;
            st = next;
        }
        let all = t.concat_cols(&picks);
        let w = t.constant(weights);
        let masked = t.mul(all, w);
        let ones = t.constant(Array::filled(steps, 1, 1.0));
        t.matmul(masked, ones)
    }

    /// Mean per-token cross-entropy of `targets` given `sources` (scalar node).
    pub(crate) fn mle_loss(&self, t: &mut Tape<'_>, sources: &[Vec<TokenId>], targets: &[Vec<TokenId>]) -> NodeId {
        let b = sources.len();
        let mem = self.encode(t, sources);
        let out_mask = self.output_mask(t);
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0);
        let n_tokens: usize = targets.iter().map(Vec::len).sum();
        let scale = 1.0 / n_tokens.max(1) as f64;
        let mut st = DecState { h: mem.h, c: mem.c };
        let mut prev = vec![BOS as usize; b];
        let mut total: Option<NodeId> = None;
        for step in 0..steps {
            let (next, logits) = self.decode_step(t, &mem, &st, &prev, out_mask);
            let tgt: Vec<usize> = targets
                .iter()
                .map(|s| s.get(step).copied().unwrap_or(PAD) as usize)
                .collect();
            let w: Vec<f64> = targets
                .iter()
                .map(|s| if step < s.len() { scale } else { 0.0 })
                .collect();
            let ce = t.cross_entropy(logits, &tgt, &w);
            total = Some(match total {
                Some(acc) => t.add(acc, ce),
                None => ce,
            });
            prev = tgt;
            st = next;
        }
        total.unwrap_or_else(|| t.constant(Array::scalar(0.0)))
    }

    /// Autoregressive decoding of one batch; sampling draws rows in order.
    pub(crate) fn rollout(&self, t: &mut Tape<'_>, sources: &[Vec<TokenId>], max_lens: &[usize], mut policy: Policy<'_>) -> Rollout {
        let b = sources.len();
        let mem = self.encode(t, sources);
        let out_mask = self.output_mask(t);
        let horizon = max_lens.iter().copied().max().unwrap_or(1);
        let mut st = DecState { h: mem.h, c: mem.c };
        let mut prev = vec![BOS as usize; b];
        let mut tokens: Vec<Vec<TokenId>> = vec![Vec::new(); b];
        let mut active = vec![true; b];
        let mut total: Option<NodeId> = None;
        let v = self.config.vocab_size;
        let mut probs = vec![0.0; v];
        for step in 0..horizon {
            if !active.iter().any(|a| *a) {
                break;
            }
            let (next, logits) = self.decode_step(t, &mem, &st, &prev, out_mask);
            let logp = t.log_softmax_rows(logits);
            let lp = t.value(logp);
            let mut chosen = vec![EOS as usize; b];
            let mut weights = Array::zeros(b, 1);
            for i in 0..b {
                if !active[i] {
                    continue;
                }
                let row = lp.row(i);
                let tok = match &mut policy {
                    Policy::Greedy => argmax(row),
                    Policy::Sample { temperature, rng } => {
                        for (p, l) in probs.iter_mut().zip(row) {
                            *p = *l / *temperature;
                        }
                        softmax_in_place(&mut probs);
                        categorical(&probs, rng.random::<f64>())
                    }
                };
                chosen[i] = tok;
                weights.set(i, 0, 1.0);
                tokens[i].push(tok as TokenId);
                if tok == EOS as usize || step + 1 >= max_lens[i] {
                    active[i] = false;
                }
            }
            let pick = t.gather_cols(logp, &chosen);
            let w = t.constant(weights);
            let masked = t.mul(pick, w);
            total = Some(match total {
                Some(acc) => t.add(acc, masked),
                None => masked,
            });
            prev = chosen;
            st = next;
        }
        let log_prob = total.unwrap_or_else(|| t.constant(Array::zeros(b, 1)));
        Rollout { tokens, log_prob }
    }

    /// Total log-probability of `target` (raw ids, normally EOS-terminated)
    /// given `source`, evaluated with the gold prefix.
    pub fn log_prob_ids(&self, source: &[TokenId], target: &[TokenId]) -> Result<f64> {
        Ok(self.log_prob_batch(&[(source.to_vec(), target.to_vec())])?[0])
    }

    /// `log P(target | source)` for EOS-terminated sentences.
    pub fn log_prob(&self, source: &Sequence, target: &Sequence) -> Result<f64> {
        self.log_prob_ids(&source.with_eos(), &target.with_eos())
    }

    /// Batched [`Seq2Seq::log_prob_ids`], evaluated in chunks.
    pub fn log_prob_batch(&self, pairs: &[(Vec<TokenId>, Vec<TokenId>)]) -> Result<Vec<f64>> {
        let (src, tgt): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        self.check_ids(&src)?;
        self.check_ids(&tgt)?;
        let mut out = Vec::with_capacity(pairs.len());
        for (s, g) in src.chunks(CHUNK_ROWS).zip(tgt.chunks(CHUNK_ROWS)) {
            let mut t = Tape::new(&self.params);
            let lp = self.target_log_probs(&mut t, s, g);
            out.extend_from_slice(t.value(lp).data());
        }
        Ok(out)
    }

    /// Gradient of `sum_i weights[i] * log P(target_i | source_i)` over raw
    /// id pairs, accumulated over chunks in order.
    pub fn weighted_log_prob_gradient(&self, pairs: &[(Vec<TokenId>, Vec<TokenId>)], weights: &[f64]) -> Result<Gradients> {
        if pairs.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: pairs.len(),
                right: weights.len(),
            });
        }
        let (src, tgt): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        self.check_ids(&src)?;
        self.check_ids(&tgt)?;
        let mut grads = Gradients::zeros_like(&self.params);
        for ((s, g), w) in src.chunks(CHUNK_ROWS).zip(tgt.chunks(CHUNK_ROWS)).zip(weights.chunks(CHUNK_ROWS)) {
            let mut t = Tape::new(&self.params);
            let lp = self.target_log_probs(&mut t, s, g);
            let obj = t.weighted_sum(lp, Array::from_vec(w.len(), 1, w.to_vec())?);
            grads.accumulate(&t.backward(obj)?, 1.0);
        }
        Ok(grads)
    }

    /// Draws `k` independent samples for one source.
    pub fn sample(&self, source: &Sequence, k: usize, cfg: &DecodeConfig) -> Result<SampleBatch> {
        cfg.validate()?;
        if k == 0 {
            return Err(Error::InvalidConfig("sample size must be at least 1".into()));
        }
        let src = source.with_eos();
        self.check_ids(core::slice::from_ref(&src))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let max_len = cfg.max_len.resolve(source.len());
        let mut samples = Vec::with_capacity(k);
        let mut left = k;
        while left > 0 {
            let n = left.min(CHUNK_ROWS);
            let sources = vec![src.clone(); n];
            let mut t = Tape::new(&self.params);
            let r = self.rollout(
                &mut t,
                &sources,
                &vec![max_len; n],
                Policy::Sample {
                    temperature: cfg.temperature,
                    rng: &mut rng,
                },
            );
            let lp = t.value(r.log_prob);
            samples.extend(r.tokens.into_iter().enumerate().map(|(i, tokens)| Sample {
                tokens,
                log_prob: lp.data()[i],
            }));
            left -= n;
        }
        Ok(SampleBatch { samples })
    }

    pub fn greedy_decode(&self, source: &Sequence, cfg: &DecodeConfig) -> Result<Sequence> {
        Ok(self.decode_batch(core::slice::from_ref(source), cfg)?.remove(0))
    }

    /// Greedy (or beam, when `beam_width > 1`) decoding of many sources.
    pub fn decode_batch(&self, sources: &[Sequence], cfg: &DecodeConfig) -> Result<Vec<Sequence>> {
        cfg.validate()?;
        let raw: Vec<Vec<TokenId>> = sources.iter().map(Sequence::with_eos).collect();
        self.check_ids(&raw)?;
        if cfg.beam_width > 1 {
            return sources
                .iter()
                .zip(&raw)
                .map(|(s, r)| self.beam_decode(r, cfg.max_len.resolve(s.len()), cfg.beam_width))
                .collect();
        }
        let mut out = Vec::with_capacity(sources.len());
        for (chunk, src) in raw.chunks(CHUNK_ROWS).zip(sources.chunks(CHUNK_ROWS)) {
            let lens: Vec<usize> = src.iter().map(|s| cfg.max_len.resolve(s.len())).collect();
            let mut t = Tape::new(&self.params);
            let r = self.rollout(&mut t, chunk, &lens, Policy::Greedy);
            out.extend(r.tokens.iter().map(|tk| Sequence::from_decoded(tk)));
        }
        Ok(out)
    }

    fn beam_decode(&self, source: &[TokenId], max_len: usize, width: usize) -> Result<Sequence> {
        let mut t = Tape::new(&self.params);
        let sources = vec![source.to_vec(); width];
        let mem = self.encode(&mut t, &sources);
        let out_mask = self.output_mask(&mut t);
        // (tokens, score, finished)
        let mut beams: Vec<(Vec<TokenId>, f64, bool)> = vec![(Vec::new(), 0.0, false)];
        let mut st = DecState { h: mem.h, c: mem.c };
        for _ in 0..max_len {
            if beams.iter().all(|b| b.2) {
                break;
            }
            let prev: Vec<usize> = (0..width)
                .map(|i| beams.get(i).and_then(|b| b.0.last().copied()).unwrap_or(BOS) as usize)
                .collect();
            let (next, logits) = self.decode_step(&mut t, &mem, &st, &prev, out_mask);
            let logp = t.log_softmax_rows(logits);
            let lp = t.value(logp).clone();
            let mut cand: Vec<(usize, Option<usize>, f64)> = Vec::new();
            for (bi, beam) in beams.iter().enumerate() {
                if beam.2 {
                    cand.push((bi, None, beam.1));
                    continue;
                }
                for (tok, l) in lp.row(bi).iter().enumerate() {
                    if *l > MASKED_LOGIT / 2.0 {
                        cand.push((bi, Some(tok), beam.1 + l));
                    }
                }
            }
            cand.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)).then_with(|| a.1.cmp(&b.1)));
            cand.truncate(width);
            let parents: Vec<usize> = (0..width).map(|i| cand.get(i).map(|c| c.0).unwrap_or(0)).collect();
            beams = cand
                .iter()
                .map(|&(bi, tok, score)| {
                    let mut toks = beams[bi].0.clone();
                    match tok {
                        Some(tk) => {
                            toks.push(tk as TokenId);
                            (toks, score, tk == EOS as usize)
                        }
                        None => (toks, score, true),
                    }
                })
                .collect();
            st = DecState {
                h: t.embedding(next.h, &parents),
                c: t.embedding(next.c, &parents),
            };
        }
        Ok(Sequence::from_decoded(&beams[0].0))
    }

    /// One Adam step on the mean per-token cross-entropy of `pairs`
    /// (raw source ids, raw target ids). Returns the pre-update loss.
    pub fn mle_step(&mut self, pairs: &[(Vec<TokenId>, Vec<TokenId>)], opt: &mut AdamState) -> Result<f64> {
        let (loss, grads) = self.mle_gradients(pairs)?;
        adam_step(&mut self.params, &grads, opt)?;
        Ok(loss)
    }

    /// Loss and gradient of the mean per-token cross-entropy, accumulated
    /// over chunks in a fixed order.
    pub fn mle_gradients(&self, pairs: &[(Vec<TokenId>, Vec<TokenId>)]) -> Result<(f64, Gradients)> {
        if pairs.is_empty() {
            return Err(Error::EmptyList);
        }
        let (src, tgt): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        self.check_ids(&src)?;
        self.check_ids(&tgt)?;
        let total_tokens: usize = tgt.iter().map(Vec::len).sum();
        let mut grads = Gradients::zeros_like(&self.params);
        let mut loss = 0.0;
        for (s, g) in src.chunks(CHUNK_ROWS).zip(tgt.chunks(CHUNK_ROWS)) {
            let chunk_tokens: usize = g.iter().map(Vec::len).sum();
            let share = chunk_tokens as f64 / total_tokens as f64;
            let mut t = Tape::new(&self.params);
            let l = self.mle_loss(&mut t, s, g);
            loss += share * t.value(l).item();
            grads.accumulate(&t.backward(l)?, share);
        }
        Ok((loss, grads))
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a probability vector with a uniform `u` in `[0, 1)`.
fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

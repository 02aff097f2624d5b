//! Style, content and combined rewards for the policy-gradient step.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::corpus::{Sequence, Style};
use crate::error::{Error, Result};
use crate::eval::smoothed_sentence_bleu;
use crate::seq2seq::{DecodeConfig, Seq2Seq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentVariant {
    /// `P(x | y')` under the opposite model.
    ReconstructionProb,
    /// Sentence BLEU of the greedy back-transfer `g(y')` against `x`.
    BleuXDoublePrime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub beta: f64,
    /// Samples per input.
    pub k: usize,
    pub length_normalize_content: bool,
    pub content_variant: ContentVariant,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            k: 4,
            length_normalize_content: true,
            content_variant: ContentVariant::ReconstructionProb,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("beta must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("sample size k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_style: f64,
    pub r_content: f64,
    pub r_total: f64,
}

impl RewardBreakdown {
    pub fn new(r_style: f64, r_content: f64, beta: f64) -> Self {
        Self {
            r_style,
            r_content,
            r_total: combine(r_style, r_content, beta),
        }
    }
}

/// Weighted harmonic mean `(1 + b^2) Rc Rs / (b^2 Rc + Rs)`, 0 when both are 0.
pub fn combine(r_style: f64, r_content: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * r_content + r_style;
    if den == 0.0 {
        return 0.0;
    }
    (1.0 + b2) * r_content * r_style / den
}

/// Probability the classifier assigns to `target` for `y_prime`.
pub fn style_reward(clf: &Classifier, y_prime: &Sequence, target: Style) -> Result<f64> {
    Ok(clf.classify_prob(y_prime)?[target.index()])
}

pub fn style_rewards(clf: &Classifier, ys: &[Sequence], target: Style) -> Result<Vec<f64>> {
    Ok(clf.classify_batch(ys)?.iter().map(|p| p[target.index()]).collect())
}

/// Reconstruction probability of `x` from `y_prime` under `g`; with length
/// normalisation the per-step geometric mean, counting the EOS step.
pub fn content_reward(g: &Seq2Seq, y_prime: &Sequence, x: &Sequence, cfg: &RewardConfig) -> Result<f64> {
    Ok(content_rewards(g, &[(y_prime.clone(), x.clone())], cfg)?[0])
}

/// Batched [`content_reward`] over `(y', x)` pairs.
pub fn content_rewards(g: &Seq2Seq, pairs: &[(Sequence, Sequence)], cfg: &RewardConfig) -> Result<Vec<f64>> {
    if pairs.iter().any(|(y, x)| y.is_empty() || x.is_empty()) {
        return Err(Error::EmptySequence);
    }
    let raw: Vec<_> = pairs.iter().map(|(y, x)| (y.with_eos(), x.with_eos())).collect();
    let lps = g.log_prob_batch(&raw)?;
    Ok(lps
        .iter()
        .zip(pairs)
        .map(|(lp, (_, x))| {
            if cfg.length_normalize_content {
                Float::exp(lp / (x.len() + 1) as f64)
            } else {
                Float::exp(*lp)
            }
        })
        .collect())
}

/// Smoothed sentence BLEU (as a fraction) of the greedy back-transfer of
/// `y_prime` against `x`.
pub fn bleu_content_reward(g: &Seq2Seq, y_prime: &Sequence, x: &Sequence, decode: &DecodeConfig) -> Result<f64> {
    Ok(bleu_content_rewards(g, &[(y_prime.clone(), x.clone())], decode)?[0])
}

pub fn bleu_content_rewards(g: &Seq2Seq, pairs: &[(Sequence, Sequence)], decode: &DecodeConfig) -> Result<Vec<f64>> {
    if pairs.iter().any(|(y, x)| y.is_empty() || x.is_empty()) {
        return Err(Error::EmptySequence);
    }
    let ys: Vec<Sequence> = pairs.iter().map(|p| p.0.clone()).collect();
    let back = g.decode_batch(&ys, decode)?;
    Ok(back
        .iter()
        .zip(pairs)
        .map(|(xx, (_, x))| smoothed_sentence_bleu(xx.ids(), &[x.ids()]))
        .collect())
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use proptest::prelude::*;

    use super::*;
    use crate::classifier::ClassifierConfig;
    use crate::corpus::Direction;
    use crate::seq2seq::Seq2SeqConfig;

    fn uniform_model(vocab: usize) -> Seq2Seq {
        let mut cfg = Seq2SeqConfig::new(vocab);
        cfg.embed_dim = 3;
        cfg.hidden_dim = 4;
        let mut m = Seq2Seq::new(cfg, Direction::YToX, 2);
        for name in ["out_w", "out_b"] {
            let id = m.params.id_of(name).unwrap();
            m.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    fn seq(ids: &[u32]) -> Sequence {
        Sequence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn combine_examples() {
        // (1 + 0.25) * 0.32 / (0.25 * 0.8 + 0.4)
        assert!((combine(0.4, 0.8, 0.5) - 0.4 / 0.6).abs() < 1e-12);
        assert!((combine(0.4, 0.8, 0.5) - 0.6667).abs() < 1e-4);
        assert_eq!(combine(0.0, 0.7, 0.5), 0.0);
        assert_eq!(combine(0.7, 0.0, 0.5), 0.0);
        assert_eq!(combine(0.0, 0.0, 0.5), 0.0);
        for v in [0.0, 0.25, 0.5, 1.0] {
            for b in [0.5, 1.0, 2.0] {
                assert_eq!(combine(v, v, b), v);
            }
        }
    }

    #[test]
    fn style_reward_of_uniform_and_biased_classifier() {
        let mut c = Classifier::zeroed(ClassifierConfig::new(8));
        assert_eq!(style_reward(&c, &seq(&[4]), Style::Target).unwrap(), 0.5);
        let id = c.params.id_of("out_b").unwrap();
        c.params_mut().unwrap().get_mut(id).set(0, 0, 2.0);
        let r0 = style_reward(&c, &seq(&[4, 5]), Style::Source).unwrap();
        let r1 = style_reward(&c, &seq(&[4, 5]), Style::Target).unwrap();
        assert!((r0 - 0.881).abs() < 5e-4);
        assert!((r0 + r1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_decoder_content_reward() {
        // emittable tokens: UNK, EOS and token 4
        let g = uniform_model(5);
        let x = seq(&[4]);
        let y = seq(&[4, 4, 1]);
        let raw = RewardConfig {
            length_normalize_content: false,
            ..RewardConfig::default()
        };
        assert!((content_reward(&g, &y, &x, &raw).unwrap() - 1.0 / 9.0).abs() < 1e-12);
        assert!((content_reward(&g, &y, &x, &RewardConfig::default()).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            content_reward(&g, &Sequence::new(vec![]).unwrap(), &x, &raw),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn impossible_target_token_gives_zero() {
        let mut g = uniform_model(5);
        let ob = g.params.id_of("out_b").unwrap();
        let (x, y) = (seq(&[4]), seq(&[4]));
        // token 4 impossible
        g.params.get_mut(ob).set(0, 4, -1e5);
        for norm in [false, true] {
            let cfg = RewardConfig {
                length_normalize_content: norm,
                ..RewardConfig::default()
            };
            assert_eq!(content_reward(&g, &y, &x, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn deterministic_decoder_gives_full_reward() {
        let mut cfg = Seq2SeqConfig::new(6);
        cfg.embed_dim = 8;
        cfg.hidden_dim = 8;
        let mut g = Seq2Seq::new(cfg, Direction::YToX, 3);
        let pair = (seq(&[5, 4]).with_eos(), seq(&[4, 5]).with_eos());
        let mut opt = crate::numerics::AdamState::new(&g.params, crate::numerics::AdamConfig::with_lr(0.1));
        for _ in 0..300 {
            g.mle_step(core::slice::from_ref(&pair), &mut opt).unwrap();
        }
        for norm in [false, true] {
            let cfg = RewardConfig {
                length_normalize_content: norm,
                ..RewardConfig::default()
            };
            let r = content_reward(&g, &seq(&[5, 4]), &seq(&[4, 5]), &cfg).unwrap();
            assert!(r > 0.999, "{r}");
        }
    }

    #[test]
    fn content_reward_ignores_batch_padding() {
        let mut cfg = Seq2SeqConfig::new(9);
        cfg.embed_dim = 3;
        cfg.hidden_dim = 4;
        let g = Seq2Seq::new(cfg, Direction::YToX, 6);
        let rc = RewardConfig::default();
        let a = (seq(&[4, 5]), seq(&[6]));
        let b = (seq(&[4, 5, 6, 7, 8, 8]), seq(&[8, 7, 6, 5, 4]));
        let alone = content_rewards(&g, core::slice::from_ref(&a), &rc).unwrap()[0];
        let mixed = content_rewards(&g, &[b, a], &rc).unwrap()[1];
        assert!((alone - mixed).abs() < 1e-12);
    }

    #[test]
    fn bleu_variant_on_identity_and_disjoint_back_transfer() {
        let mut g = uniform_model(9);
        let ob = g.params.id_of("out_b").unwrap();
        // greedy always emits 5 then keeps emitting 5 until max_len
        g.params.get_mut(ob).set(0, 5, 3.0);
        let dc = DecodeConfig {
            max_len: crate::seq2seq::MaxLen::Fixed(4),
            ..DecodeConfig::default()
        };
        let r = bleu_content_reward(&g, &seq(&[4]), &seq(&[5, 5, 5, 5]), &dc).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = bleu_content_reward(&g, &seq(&[4]), &seq(&[6, 7, 8, 6]), &dc).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn validation() {
        assert!(RewardConfig::default().validate().is_ok());
        assert!(RewardConfig { beta: 0.0, ..RewardConfig::default() }.validate().is_err());
        assert!(RewardConfig { k: 0, ..RewardConfig::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn combine_swap_symmetry(rs in 0.0f64..=1.0, rc in 0.0f64..=1.0, beta in 0.1f64..5.0) {
            let a = combine(rs, rc, beta);
            let b = combine(rc, rs, 1.0 / beta);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn combine_is_bounded_by_min_and_max(rs in 0.0f64..=1.0, rc in 0.0f64..=1.0, beta in 0.1f64..5.0) {
            let r = combine(rs, rc, beta);
            prop_assert!(r >= rs.min(rc) - 1e-12);
            prop_assert!(r <= rs.max(rc) + 1e-12);
            let bd = RewardBreakdown::new(rs, rc, beta);
            prop_assert!(bd.r_total <= bd.r_style.max(bd.r_content) + 1e-12);
        }

        #[test]
        fn combined_reward_sits_below_the_means(rs in 0.0f64..=1.0, rc in 0.0f64..=1.0) {
            // with beta = 1 the harmonic mean obeys HM <= GM <= AM
            let h = combine(rs, rc, 1.0);
            prop_assert!(h <= (rs * rc).sqrt() + 1e-12);
            prop_assert!((rs * rc).sqrt() <= (rs + rc) / 2.0 + 1e-12);
        }
    }
}

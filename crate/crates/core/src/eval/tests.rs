use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::classifier::ClassifierConfig;
use crate::corpus::Sentence;

fn s(text: &str) -> Sentence {
    Sentence::new(text.split_whitespace().map(|t| t.to_string()).collect())
}

fn bleu1(cand: &str, refs: &[&str]) -> f64 {
    corpus_bleu(&[s(cand)], &[refs.iter().map(|r| s(r)).collect()]).unwrap()
}

#[test]
fn hand_counted_example() {
    // precisions 5/5, 3/4, 2/3, 1/2 and BP = exp(1 - 6/5)
    let oracle = 100.0 * (-0.2f64).exp() * (1.0f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
    let got = bleu1("the cat sat on mat", &["the cat sat on the mat"]);
    assert!((got - oracle).abs() < 1e-9);
    assert!((got - 57.9).abs() < 0.1, "{got}");
}

#[test]
fn identity_and_disjoint() {
    assert!((bleu1("a b c d e", &["a b c d e"]) - 100.0).abs() < 1e-9);
    assert_eq!(bleu1("a b c d e", &["v w x y z"]), 0.0);
    // a missing 4-gram match anywhere zeroes the corpus score
    assert_eq!(bleu1("a b c x d", &["a b c y d"]), 0.0);
}

#[test]
fn closest_length_prefers_shorter_on_ties() {
    assert_eq!(closest_ref_len(5, &[6, 4]), 4);
    assert_eq!(closest_ref_len(5, &[7, 5, 3]), 5);
    assert_eq!(closest_ref_len(10, &[20, 11]), 11);
}

#[test]
fn corpus_level_is_not_averaged_sentence_level() {
    let cands = [s("a b c d e f"), s("x y")];
    let refs = [vec![s("a b c d e f")], vec![s("x z")]];
    let got = corpus_bleu(&cands, &refs).unwrap();
    // matched 7/8, 5/6, 4/4, 3/3 over the corpus; lengths equal so BP = 1
    let oracle = 100.0 * ((7.0 / 8.0) * (5.0 / 6.0) * 1.0 * 1.0f64).powf(0.25);
    assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
}

#[test]
fn errors() {
    assert!(matches!(
        corpus_bleu(&[s("a")], &[]),
        Err(Error::LengthMismatch { left: 1, right: 0 })
    ));
    assert!(matches!(corpus_bleu(&[s("a")], &[vec![]]), Err(Error::MissingReference(0))));
    assert!(matches!(corpus_bleu(&[], &[]), Err(Error::EmptyList)));
}

#[test]
fn a_closer_but_longer_reference_can_lower_the_score() {
    // the brevity penalty switches to the new, longer reference
    let before = bleu1("a b c d e f g h i j", &["a b c d e f g"]);
    let after = bleu1("a b c d e f g h i j", &["a b c d e f g", "q r s t u v w x y z k"]);
    assert!(after < before);
}

#[test]
fn g2h2_values() {
    let (g, h) = g2h2(85.6, 55.2);
    assert!((g - 68.7).abs() < 0.1 && (h - 67.1).abs() < 0.1);
    let (g, h) = g2h2(95.4, 44.5);
    assert!((g - 65.1).abs() < 0.1 && (h - 60.7).abs() < 0.1);
    assert_eq!(g2h2(42.0, 42.0), (42.0, 42.0));
    assert_eq!(g2h2(0.0, 30.0), (0.0, 0.0));
    assert_eq!(g2h2(0.0, 0.0), (0.0, 0.0));
}

#[test]
fn smoothed_sentence_bleu_hand_counts() {
    let c: Vec<&str> = "a b c d f".split(' ').collect();
    let r: Vec<&str> = "a b c d e".split(' ').collect();
    // unigrams 4/5; smoothed 3+1/4+1, 2+1/3+1, 1+1/2+1
    let oracle = (0.8f64 * 0.8 * 0.75 * (2.0 / 3.0)).powf(0.25);
    assert!((smoothed_sentence_bleu(&c, &[&r]) - oracle).abs() < 1e-12);
    assert!((smoothed_sentence_bleu(&r, &[&r]) - 1.0).abs() < 1e-12);
    let z: Vec<&str> = "v w x y z".split(' ').collect();
    assert_eq!(smoothed_sentence_bleu(&z, &[&r]), 0.0);
}

#[test]
fn evaluate_with_gold_outputs() {
    let clf = Classifier::zeroed(ClassifierConfig::new(10));
    let inputs = [s("a b c d"), s("b c d e")];
    let outs = [s("a b c x"), s("b c d y")];
    let ids = [Sequence::new(vec![4, 5]).unwrap(), Sequence::new(vec![6]).unwrap()];
    let refs = vec![vec![outs[0].clone()], vec![outs[1].clone()]];
    let rep = evaluate(&clf, Style::Source, &inputs, &outs, &ids, &refs).unwrap();
    assert!((rep.bleu - 100.0).abs() < 1e-9);
    assert_eq!(rep.acc, 100.0);
    assert!((rep.g2 - 100.0).abs() < 1e-9);
    assert_eq!(rep.n_sentences, 2);
    assert_eq!(rep.records[1].p_target, 0.5);
    assert!(matches!(
        evaluate(&clf, Style::Source, &inputs, &outs[..1], &ids, &refs),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn curves_have_a_header_and_one_row_per_epoch() {
    let p = |e| CurvePoint {
        epoch: e,
        dev_acc: 1.0,
        dev_bleu: 2.0,
        mean_style_reward: 0.5,
        mean_content_reward: 0.25,
        mean_reward: 0.3,
    };
    let csv = emit_curves(&[p(0)]).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let csv = emit_curves(&[p(2), p(0), p(1)]).unwrap();
    let epochs: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["0", "1", "2"]);
    assert!(emit_curves(&[]).is_err());
}

fn sentence_strategy() -> impl Strategy<Value = Vec<u32>> {
    proptest::collection::vec(0u32..6, 1..9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bleu_is_permutation_invariant(pairs in proptest::collection::vec((sentence_strategy(), sentence_strategy()), 1..6), rot in 0usize..6) {
        let c: Vec<&[u32]> = pairs.iter().map(|p| p.0.as_slice()).collect();
        let r: Vec<Vec<&[u32]>> = pairs.iter().map(|p| vec![p.1.as_slice()]).collect();
        let a = corpus_bleu_tokens(&c, &r).unwrap();
        let k = rot % pairs.len();
        let mut c2 = c.clone();
        let mut r2 = r.clone();
        c2.rotate_left(k);
        r2.rotate_left(k);
        c2.reverse();
        r2.reverse();
        let b = corpus_bleu_tokens(&c2, &r2).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn duplicate_reference_changes_nothing(cand in sentence_strategy(), refs in proptest::collection::vec(sentence_strategy(), 1..4), pick in 0usize..4) {
        let r: Vec<&[u32]> = refs.iter().map(Vec::as_slice).collect();
        let mut r2 = r.clone();
        r2.push(r[pick % r.len()]);
        let a = corpus_bleu_tokens(&[cand.as_slice()], &[r]).unwrap();
        let b = corpus_bleu_tokens(&[cand.as_slice()], &[r2]).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn extra_reference_without_closer_length_never_lowers(cand in sentence_strategy(), refs in proptest::collection::vec(sentence_strategy(), 1..4), extra in sentence_strategy()) {
        let r: Vec<&[u32]> = refs.iter().map(Vec::as_slice).collect();
        let lens: Vec<usize> = r.iter().map(|x| x.len()).collect();
        let old = closest_ref_len(cand.len(), &lens);
        let mut lens2 = lens.clone();
        lens2.push(extra.len());
        prop_assume!(closest_ref_len(cand.len(), &lens2) == old);
        let mut r2 = r.clone();
        r2.push(extra.as_slice());
        let a = corpus_bleu_tokens(&[cand.as_slice()], &[r]).unwrap();
        let b = corpus_bleu_tokens(&[cand.as_slice()], &[r2]).unwrap();
        prop_assert!(b >= a - 1e-9);
    }

    #[test]
    fn hm_le_gm_le_am(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (g, h) = g2h2(a, b);
        prop_assert!(h <= g + 1e-9);
        prop_assert!(g <= (a + b) / 2.0 + 1e-9);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&g) && (0.0..=100.0 + 1e-9).contains(&h));
    }
}

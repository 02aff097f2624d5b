use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sequence;
use crate::error::{Error, Result};
use crate::numerics::{Array, Gradients, Tape};
use crate::rewards::RewardBreakdown;
use crate::seq2seq::{DecodeConfig, Policy, Seq2Seq, CHUNK_ROWS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Mean reward of the other samples drawn for the same input.
    LeaveOneOut,
    None,
}

/// `R_k - b_k` for the `K` samples of one input. Degenerate samples keep
/// their (zero) reward in their own advantage but are left out of the
/// other samples' baselines.
pub fn advantages(rewards: &[f64], degenerate: &[bool], mode: BaselineMode) -> Vec<f64> {
    let k = rewards.len();
    rewards
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let b = match mode {
                BaselineMode::None => 0.0,
                BaselineMode::LeaveOneOut => {
                    let (mut sum, mut n) = (0.0, 0usize);
                    for j in 0..k {
                        if j != i && !degenerate[j] {
                            sum += rewards[j];
                            n += 1;
                        }
                    }
                    if n == 0 {
                        0.0
                    } else {
                        sum / n as f64
                    }
                }
            };
            r - b
        })
        .collect()
}

/// Result of one sampled policy-gradient estimate.
#[derive(Clone, Debug)]
pub struct PolicyGradient {
    /// Gradient of `-(1/B) sum_x (1/K) sum_k (R_k - b_k) log P(y_k | x)`.
    pub grads: Gradients,
    pub loss: f64,
    pub mean_reward: RewardBreakdown,
    pub degenerate: usize,
    pub samples: usize,
}

/// Samples `k` outputs per input, scores the non-degenerate ones with
/// `reward` (called with `(x, y')` pairs) and returns the REINFORCE gradient.
///
/// Inputs are processed in chunks so that all samples of one input share a
/// tape; the sampling tape is reused for the backward pass.
pub fn policy_gradient<F>(
    model: &Seq2Seq,
    inputs: &[Sequence],
    k: usize,
    decode: &DecodeConfig,
    baseline: BaselineMode,
    rng: &mut ChaCha8Rng,
    mut reward: F,
) -> Result<PolicyGradient>
where
    F: FnMut(&[(&Sequence, Sequence)]) -> Result<Vec<RewardBreakdown>>,
{
    if inputs.is_empty() {
        return Err(Error::EmptyList);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("sample size k must be at least 1".into()));
    }
    decode.validate()?;
    let total_rows = (inputs.len() * k) as f64;
    let per_chunk = (CHUNK_ROWS / k).max(1);
    let mut grads = Gradients::zeros_like(&model.params);
    let mut loss = 0.0;
    let mut sums = [0.0f64; 3];
    let mut degenerate = 0;
    for chunk in inputs.chunks(per_chunk) {
        let sources: Vec<Vec<u32>> = chunk.iter().flat_map(|x| vec![x.with_eos(); k]).collect();
        let max_lens: Vec<usize> = chunk
            .iter()
            .flat_map(|x| vec![decode.max_len.resolve(x.len()); k])
            .collect();
        let mut tape = Tape::new(&model.params);
        let roll = model.rollout(
            &mut tape,
            &sources,
            &max_lens,
            Policy::Sample {
                temperature: decode.temperature,
                rng: &mut *rng,
            },
        );
        let samples: Vec<Sequence> = roll.tokens.iter().map(|t| Sequence::from_decoded(t)).collect();
        let is_deg: Vec<bool> = samples.iter().map(Sequence::is_empty).collect();
        let scored: Vec<usize> = (0..samples.len()).filter(|&r| !is_deg[r]).collect();
        let query: Vec<(&Sequence, Sequence)> = scored.iter().map(|&r| (&chunk[r / k], samples[r].clone())).collect();
        let mut rewards = vec![RewardBreakdown::default(); samples.len()];
        if !query.is_empty() {
            let got = reward(&query)?;
            if got.len() != query.len() {
                return Err(Error::LengthMismatch {
                    left: query.len(),
                    right: got.len(),
                });
            }
            for (&r, b) in scored.iter().zip(got) {
                rewards[r] = b;
            }
        }
        degenerate += is_deg.iter().filter(|d| **d).count();
        for b in &rewards {
            sums[0] += b.r_style;
            sums[1] += b.r_content;
            sums[2] += b.r_total;
        }
        let mut weights = Array::zeros(samples.len(), 1);
        for (i, _) in chunk.iter().enumerate() {
            let rs: Vec<f64> = (0..k).map(|j| rewards[i * k + j].r_total).collect();
            let adv = advantages(&rs, &is_deg[i * k..(i + 1) * k], baseline);
            for (j, a) in adv.iter().enumerate() {
                weights.set(i * k + j, 0, -a / total_rows);
            }
        }
        let objective = tape.weighted_sum(roll.log_prob, weights);
        loss += tape.value(objective).item();
        grads.accumulate(&tape.backward(objective)?, 1.0);
    }
    Ok(PolicyGradient {
        grads,
        loss,
        mean_reward: RewardBreakdown {
            r_style: sums[0] / total_rows,
            r_content: sums[1] / total_rows,
            r_total: sums[2] / total_rows,
        },
        degenerate,
        samples: total_rows as usize,
    })
}

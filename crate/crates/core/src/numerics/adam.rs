use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{Array, Gradients, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clipping threshold applied before every update.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Array>,
    pub second: Vec<Array>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Array> = params
            .iter()
            .map(|(_, _, v)| Array::zeros(v.rows(), v.cols()))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One Adam update; returns the (pre-clipping) global gradient norm.
pub fn adam_step(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState) -> Result<f64> {
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: (params.len(), 1),
            actual: (grads.len(), state.first.len()),
        });
    }
    for (i, (id, _, p)) in params.iter().enumerate() {
        grads.get(id).check_shape(p.shape())?;
        state.first[i].check_shape(p.shape())?;
        state.second[i].check_shape(p.shape())?;
    }
    let norm = grads.global_norm();
    if !norm.is_finite() {
        return Err(Error::NaNDetected("gradient norm".into()));
    }
    let cfg = state.config;
    let clip = match cfg.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - Float::powi(cfg.beta1, t);
    let bc2 = 1.0 - Float::powi(cfg.beta2, t);
    let ids: Vec<_> = params.iter().map(|(id, _, _)| id).collect();
    for (i, id) in ids.into_iter().enumerate() {
        let g = grads.get(id).data();
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            let gj = g[j] * clip;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= cfg.lr * m_hat / (Float::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", Array::scalar(value));
        p
    }

    fn grads_of(p: &ParamSet, g: f64) -> Gradients {
        let mut gr = Gradients::zeros_like(p);
        gr.get_mut(super::super::ParamId(0)).data_mut()[0] = g;
        gr
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = single(0.0);
        let mut st = AdamState::new(&p, AdamConfig::with_lr(1e-3));
        let g = grads_of(&p, 1.0);
        adam_step(&mut p, &g, &mut st).unwrap();
        // m_hat = 1, v_hat = 1: step = lr / (1 + eps)
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p.get(super::super::ParamId(0)).item() - want).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = single(0.25);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = grads_of(&p, 0.0);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p.get(super::super::ParamId(0)).item(), 0.25);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut p = single(0.5);
            let mut st = AdamState::new(&p, AdamConfig::default());
            for k in 0..10 {
                let g = grads_of(&p, (k as f64).cos());
                adam_step(&mut p, &g, &mut st).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = single(0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let mut other = ParamSet::new();
        other.add("w", Array::zeros(2, 1));
        let g = Gradients::zeros_like(&other);
        assert!(matches!(adam_step(&mut p, &g, &mut st), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn clipping_bounds_the_effective_gradient() {
        let mut p = single(0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = grads_of(&p, 100.0);
        let norm = adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(norm, 100.0);
        // clipped to 5, m = 0.5 after one step
        assert!((st.first[0].item() - 0.5).abs() < 1e-12);
    }
}

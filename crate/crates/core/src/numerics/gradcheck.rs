use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use super::{NodeId, ParamId, ParamSet, Tape};
use crate::error::Result;

/// Denominator floor for relative errors, so coordinates whose true gradient
/// is zero are judged by absolute error instead.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients against central differences
/// `(f(x+h) - f(x-h)) / 2h` at the given coordinates.
pub fn grad_check<F>(params: &ParamSet, h: f64, coords: &[(ParamId, usize)], f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new(p);
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).item())
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        checked: 0,
    };
    for &(id, k) in coords {
        let orig = work.get(id).data()[k];
        work.get_mut(id).data_mut()[k] = orig + h;
        let up = eval(&work)?;
        work.get_mut(id).data_mut()[k] = orig - h;
        let down = eval(&work)?;
        work.get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.get(id).data()[k];
        let abs = Float::abs(a - numeric);
        let rel = abs / Float::abs(a).max(Float::abs(numeric)).max(RELATIVE_FLOOR);
        report.max_absolute_error = report.max_absolute_error.max(abs);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

/// Every scalar coordinate of every parameter.
pub fn all_coords(params: &ParamSet) -> Vec<(ParamId, usize)> {
    params
        .iter()
        .flat_map(|(id, _, v)| (0..v.len()).map(move |k| (id, k)))
        .collect()
}

/// `n` coordinates drawn uniformly with replacement.
pub fn sample_coords<R: Rng + ?Sized>(params: &ParamSet, n: usize, rng: &mut R) -> Vec<(ParamId, usize)> {
    let all = all_coords(params);
    (0..n).map(|_| all[rng.random_range(0..all.len())]).collect()
}

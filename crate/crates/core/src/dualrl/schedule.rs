use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Exponentially growing teacher-forcing interval `min(p0 * r^(i/d), p_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub p0: f64,
    pub p_max: f64,
    pub r: f64,
    pub d: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            p0: 1.0,
            p_max: 100.0,
            r: 1.1,
            d: 1000.0,
        }
    }
}

impl Schedule {
    /// First iteration at which the interval reaches `p_max`.
    pub fn cap_iteration(&self) -> u64 {
        let i = self.d * Float::ln(self.p_max / self.p0) / Float::ln(self.r);
        let mut n = Float::floor(i) as u64;
        while anneal_interval(n, self) < self.p_max {
            n += 1;
        }
        while n > 0 && anneal_interval(n - 1, self) >= self.p_max {
            n -= 1;
        }
        n
    }
}

pub fn anneal_interval(i: u64, s: &Schedule) -> f64 {
    let p = s.p0 * Float::powf(s.r, i as f64 / s.d);
    if p >= s.p_max {
        s.p_max
    } else {
        p
    }
}

/// Spacing rule: fire when at least `p` iterations have passed since the
/// last trigger (or on the first call), and record the trigger.
pub fn spacing_trigger(i: u64, p: f64, last: &mut Option<u64>) -> bool {
    let fire = match *last {
        None => true,
        Some(l) => (i.saturating_sub(l)) as f64 >= p,
    };
    if fire {
        *last = Some(i);
    }
    fire
}

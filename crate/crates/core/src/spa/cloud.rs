use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct AgentState {
    pub p: Point2,
    pub v: Point2,
}

impl AgentState {
    pub fn new(p: Point2, v: Point2) -> Self {
        Self { p, v }
    }

    pub(crate) fn as_array(&self) -> [f64; 4] {
        [self.p.x, self.p.y, self.v.x, self.v.y]
    }

    pub(crate) fn from_array(a: [f64; 4]) -> Self {
        Self::new(Point2::new(a[0], a[1]), Point2::new(a[2], a[3]))
    }
}

/// Weighted agent-state particles carrying one message (α, γ or belief).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub states: Vec<AgentState>,
    pub log_weights: Vec<f64>,
    pub time_index: u32,
    /// Panel that produced the message; 0 for the collector / prior.
    pub origin_panel: u16,
}

/// `ln Σ exp(x)`, `-inf` for an empty or all-`-inf` input.
pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(exp(a) + exp(b))`.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

impl ParticleCloud {
    /// Equally weighted cloud.
    pub fn uniform(states: Vec<AgentState>, time_index: u32, origin_panel: u16) -> Self {
        let n = states.len();
        Self {
            states,
            log_weights: vec![-(n as f64).ln(); n],
            time_index,
            origin_panel,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Shifts log-weights so they sum to one; returns the log of the
    /// previous total.
    pub fn normalize(&mut self) -> Result<f64> {
        let total = log_sum_exp(self.log_weights.iter().copied());
        if !total.is_finite() {
            return Err(Error::Degenerate(format!(
                "particle weights sum to {} at time {}",
                total.exp(),
                self.time_index
            )));
        }
        self.log_weights.iter_mut().for_each(|w| *w -= total);
        Ok(total)
    }

    /// Linear, normalized weights.
    pub fn weights(&self) -> Vec<f64> {
        let total = log_sum_exp(self.log_weights.iter().copied());
        self.log_weights.iter().map(|w| (w - total).exp()).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.log_weights.iter().map(|w| w.exp()).sum()
    }

    /// Effective sample size `1 / Σ w²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights().iter().map(|w| w * w).sum::<f64>()
    }

    /// Weighted mean state.
    pub fn mean(&self) -> AgentState {
        let mut acc = [0.0; 4];
        for (s, w) in self.states.iter().zip(self.weights()) {
            for (a, x) in acc.iter_mut().zip(s.as_array()) {
                *a += w * x;
            }
        }
        AgentState::from_array(acc)
    }

    /// Weighted standard deviation per dimension `(px, py, vx, vy)`.
    pub fn std_dev(&self) -> [f64; 4] {
        let w = self.weights();
        let mean = self.mean().as_array();
        let mut var = [0.0; 4];
        for (s, wi) in self.states.iter().zip(&w) {
            for (k, x) in s.as_array().iter().enumerate() {
                var[k] += wi * (x - mean[k]).powi(2);
            }
        }
        var.map(f64::sqrt)
    }
}

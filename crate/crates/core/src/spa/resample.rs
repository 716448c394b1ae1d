use crate::error::{Error, Result};
use crate::rng::StreamRng;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{AgentState, ParticleCloud};

/// Systematic resampling of `n` indices from normalized `weights`.
pub fn systematic_indices(weights: &[f64], n: usize, rng: &mut StreamRng) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for (j, w) in weights.iter().enumerate() {
        cum += w;
        while i < n && u < cum {
            out.push(j);
            u += step;
            i += 1;
        }
    }
    // rounding can leave the last few slots unfilled
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    out.resize(n, last);
    out
}

/// Systematic resampling followed by Gaussian jitter with Silverman-style
/// bandwidth `h = N^(−1/6)` times the weighted standard deviation of each
/// state dimension. Offspring are first shrunk toward the mean by
/// `√(1 − h²)` so the jitter leaves mean and variance unchanged; without
/// the shrinkage every hop would inflate the spread by `1 + h²`, which
/// compounds over long chains. The result has uniform weights.
pub fn resample_regularize(cloud: &ParticleCloud, rng: &mut StreamRng) -> Result<ParticleCloud> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::Degenerate("empty particle cloud".into()));
    }
    let w = cloud.weights();
    if !w.iter().all(|x| x.is_finite()) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Degenerate(format!(
            "cannot resample: weights sum to zero at time {}",
            cloud.time_index
        )));
    }
    let std = cloud.std_dev();
    let mean = cloud.mean().as_array();
    let h = (n as f64).powf(-1.0 / 6.0);
    let shrink = (1.0 - h * h).sqrt();
    let bw = std.map(|s| h * s);
    let idx = systematic_indices(&w, n, rng);
    let states = idx
        .into_iter()
        .map(|i| {
            let mut a = cloud.states[i].as_array();
            for k in 0..4 {
                let e: f64 = rng.sample(StandardNormal);
                a[k] = mean[k] + shrink * (a[k] - mean[k]) + bw[k] * e;
            }
            AgentState::from_array(a)
        })
        .collect();
    Ok(ParticleCloud::uniform(states, cloud.time_index, cloud.origin_panel))
}

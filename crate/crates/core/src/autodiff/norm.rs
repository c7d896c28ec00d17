//! Per-channel batch normalization over NCHW (or NC) activations.

use super::params::RunningStats;
use super::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f64,
    /// Weight of the current batch in the running-statistics update.
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Per-channel statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Saved<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

pub struct Layout {
    pub batch: usize,
    pub channels: usize,
    pub spatial: usize,
}

impl Layout {
    fn index(&self, n: usize, c: usize) -> std::ops::Range<usize> {
        let start = (n * self.channels + c) * self.spatial;
        start..start + self.spatial
    }
}

pub fn forward_train<T: Real>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    stats: &mut RunningStats<T>,
    l: &Layout,
    cfg: BatchNormConfig,
) -> (Vec<T>, Saved<T>) {
    let count = l.batch * l.spatial;
    let inv_count = T::lit(1.0 / count as f64);
    let eps = T::lit(cfg.eps);
    let m = T::lit(cfg.momentum);
    let mut out = vec![T::zero(); x.len()];
    let mut saved = Saved {
        mean: vec![T::zero(); l.channels],
        inv_std: vec![T::zero(); l.channels],
    };
    for c in 0..l.channels {
        let mut sum = T::zero();
        for n in 0..l.batch {
            sum += x[l.index(n, c)].iter().copied().sum::<T>();
        }
        let mean = sum * inv_count;
        let mut sq = T::zero();
        for n in 0..l.batch {
            for &v in &x[l.index(n, c)] {
                let d = v - mean;
                sq += d * d;
            }
        }
        let var = sq * inv_count;
        let inv_std = (var + eps).sqrt().recip();
        for n in 0..l.batch {
            let r = l.index(n, c);
            for (o, &v) in out[r.clone()].iter_mut().zip(&x[r]) {
                *o = gamma[c] * ((v - mean) * inv_std) + beta[c];
            }
        }
        saved.mean[c] = mean;
        saved.inv_std[c] = inv_std;
        // Running variance tracks the unbiased estimate.
        let unbiased = if count > 1 {
            sq / T::lit((count - 1) as f64)
        } else {
            var
        };
        let rm = &mut stats.mean.data_mut()[c];
        *rm = (T::one() - m) * *rm + m * mean;
        let rv = &mut stats.var.data_mut()[c];
        *rv = (T::one() - m) * *rv + m * unbiased;
    }
    (out, saved)
}

pub fn forward_eval<T: Real>(
    x: &[T],
    gamma: &[T],
    beta: &[T],
    stats: &RunningStats<T>,
    l: &Layout,
    cfg: BatchNormConfig,
) -> (Vec<T>, Saved<T>) {
    let eps = T::lit(cfg.eps);
    let mut out = vec![T::zero(); x.len()];
    let mean = stats.mean.data().to_vec();
    let inv_std: Vec<T> = stats
        .var
        .data()
        .iter()
        .map(|&v| (v + eps).sqrt().recip())
        .collect();
    for n in 0..l.batch {
        for c in 0..l.channels {
            let r = l.index(n, c);
            for (o, &v) in out[r.clone()].iter_mut().zip(&x[r]) {
                *o = gamma[c] * ((v - mean[c]) * inv_std[c]) + beta[c];
            }
        }
    }
    (out, Saved { mean, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`. With `batch_stats` the mean and variance
/// are functions of `x` and contribute to `dx`.
pub fn backward<T: Real>(
    x: &[T],
    dy: &[T],
    gamma: &[T],
    saved: &Saved<T>,
    l: &Layout,
    batch_stats: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let count = T::lit((l.batch * l.spatial) as f64);
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); l.channels];
    let mut dbeta = vec![T::zero(); l.channels];
    for c in 0..l.channels {
        let (mean, inv_std) = (saved.mean[c], saved.inv_std[c]);
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for n in 0..l.batch {
            let r = l.index(n, c);
            for (&g, &v) in dy[r.clone()].iter().zip(&x[r]) {
                sum_dy += g;
                sum_dy_xhat += g * (v - mean) * inv_std;
            }
        }
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
        let scale = gamma[c] * inv_std;
        for n in 0..l.batch {
            let r = l.index(n, c);
            for ((d, &g), &v) in dx[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&x[r]) {
                *d = if batch_stats {
                    let xhat = (v - mean) * inv_std;
                    scale * (g - sum_dy / count - xhat * sum_dy_xhat / count)
                } else {
                    scale * g
                };
            }
        }
    }
    (dx, dgamma, dbeta)
}

//! Closed-form optimal denoiser over an empirical dataset.
//!
//! For data `{y_i}` and kernel `(s, sigma)` the minimizer of the
//! noise-prediction loss is
//!
//! ```text
//! eps*(x) = (x - s * y_hat(x)) / (s * sigma),
//! y_hat(x) = sum_i w_i y_i,   w = softmax_i(-|x - s y_i|^2 / (2 s^2 sigma^2))
//! ```
//!
//! i.e. the posterior mean of a Gaussian mixture centered on the scaled
//! data points. Weights are formed in the log domain with the maximum
//! subtracted; squared distances use `|x|^2 - 2 s <x, y_i> + s^2 |y_i|^2`
//! with the point norms computed once.

use std::f64::consts::PI;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schedule::KernelParams;

/// Log-weights further than this below the maximum underflow to zero in
/// `exp` and are dropped.
pub const LOG_WEIGHT_FLOOR: f64 = 745.0;

/// Nearest-neighbour short-circuit threshold on the largest softmax weight.
pub const SHORTCUT_WEIGHT: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMean {
    pub y_hat: Vec<f64>,
    /// `ln sum_i exp(log_weight_i)` over the unnormalized log-weights.
    pub log_partition: f64,
    pub max_log_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserEval {
    pub eps_star: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub log_partition: f64,
    pub max_log_weight: f64,
}

/// The optimal denoiser for one dataset. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct OptimalDenoiser<'a> {
    data: &'a Dataset,
    sq_norms: Vec<f64>,
    nearest_shortcut: bool,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

impl<'a> OptimalDenoiser<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let sq_norms = data.iter().map(|y| dot(y, y)).collect();
        Self { data, sq_norms, nearest_shortcut: false }
    }

    /// Return the dominant point outright when its weight exceeds
    /// [`SHORTCUT_WEIGHT`]; agrees with the exact path within 1e-9.
    pub fn with_nearest_shortcut(mut self, enabled: bool) -> Self {
        self.nearest_shortcut = enabled;
        self
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    fn check(&self, k: &KernelParams, x: &[f64]) -> Result<()> {
        if !(k.sigma > 0.0) || !(k.s > 0.0) {
            return Err(Error::DegenerateKernel);
        }
        if x.len() != self.data.dim() {
            return Err(Error::arg(format!("query has dimension {}, dataset has {}", x.len(), self.data.dim())));
        }
        Ok(())
    }

    /// Unnormalized log-weights `-|x - s y_i|^2 / (2 s^2 sigma^2)`.
    fn log_weights(&self, k: &KernelParams, x: &[f64]) -> Vec<f64> {
        let xx = dot(x, x);
        let inv = 1.0 / (2.0 * k.s * k.s * k.sigma * k.sigma);
        let s2 = k.s * k.s;
        self.data
            .iter()
            .zip(&self.sq_norms)
            .map(|(y, &yy)| {
                let d2 = (xx - 2.0 * k.s * dot(x, y) + s2 * yy).max(0.0);
                -d2 * inv
            })
            .collect()
    }

    pub fn posterior_mean(&self, k: &KernelParams, x: &[f64]) -> Result<PosteriorMean> {
        self.check(k, x)?;
        let logw = self.log_weights(k, x);
        let (argmax, max) =
            logw.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let floor = max - LOG_WEIGHT_FLOOR;
        let total: f64 = logw.iter().filter(|&&v| v >= floor).map(|&v| (v - max).exp()).sum();
        let log_partition = max + total.ln();

        if self.nearest_shortcut && 1.0 / total > SHORTCUT_WEIGHT {
            return Ok(PosteriorMean { y_hat: self.data.point(argmax).to_vec(), log_partition, max_log_weight: max });
        }

        let mut y_hat = vec![0.0; self.data.dim()];
        for (y, &v) in self.data.iter().zip(&logw) {
            if v < floor {
                continue;
            }
            let w = (v - max).exp();
            for (acc, &yi) in y_hat.iter_mut().zip(y) {
                *acc += w * yi;
            }
        }
        let inv_total = 1.0 / total;
        y_hat.iter_mut().for_each(|v| *v *= inv_total);
        Ok(PosteriorMean { y_hat, log_partition, max_log_weight: max })
    }

    pub fn optimal_eps(&self, k: &KernelParams, x: &[f64]) -> Result<DenoiserEval> {
        let pm = self.posterior_mean(k, x)?;
        let inv = 1.0 / (k.s * k.sigma);
        let eps_star = x.iter().zip(&pm.y_hat).map(|(&xi, &yi)| (xi - k.s * yi) * inv).collect();
        Ok(DenoiserEval {
            eps_star,
            y_hat: pm.y_hat,
            log_partition: pm.log_partition,
            max_log_weight: pm.max_log_weight,
        })
    }

    /// `grad_x log p_t(x) = -eps*(x) / (s sigma)`.
    pub fn score(&self, k: &KernelParams, x: &[f64]) -> Result<Vec<f64>> {
        let eval = self.optimal_eps(k, x)?;
        let inv = -1.0 / (k.s * k.sigma);
        Ok(eval.eps_star.into_iter().map(|e| e * inv).collect())
    }

    /// Exact log-density of `(1/N) sum_i N(x; s y_i, s^2 sigma^2 I)`.
    pub fn log_density(&self, k: &KernelParams, x: &[f64]) -> Result<f64> {
        self.check(k, x)?;
        let logw = self.log_weights(k, x);
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logw.iter().map(|&v| (v - max).exp()).sum();
        let n = self.data.dim() as f64;
        let var = k.s * k.s * k.sigma * k.sigma;
        Ok(max + total.ln() - (self.data.len() as f64).ln() - 0.5 * n * (2.0 * PI * var).ln())
    }
}

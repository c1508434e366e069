//! Perturbation kernels `p_t(x_t | x_0) = N(s_t x_0, s_t^2 sigma_t^2 I)`.
//!
//! The variance-preserving family uses the EDM parameterization
//! `B(t) = beta_d t^2 / 2 + beta_min t`, `s(t) = exp(-B/2)`,
//! `sigma(t) = sqrt(exp(B) - 1)`, so that `s^2 (1 + sigma^2) = 1`.
//! The variance-exploding family keeps `s = 1` and grows sigma
//! geometrically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BETA_D: f64 = 19.9;
pub const DEFAULT_BETA_MIN: f64 = 0.1;
pub const DEFAULT_T_MIN: f64 = 1e-3;

/// Interval width at which `t_of_snr` stops bisecting.
const BISECTION_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpSchedule {
    pub beta_d: f64,
    pub beta_min: f64,
    pub t_min: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self { beta_d: DEFAULT_BETA_D, beta_min: DEFAULT_BETA_MIN, t_min: DEFAULT_T_MIN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VeSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSchedule {
    Vp(VpSchedule),
    Ve(VeSchedule),
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::Vp(VpSchedule::default())
    }
}

/// The pair `(s_t, sigma_t)` at a time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub s: f64,
    pub sigma: f64,
    pub t: f64,
}

impl KernelParams {
    /// Kernel parameters not tied to any schedule (tests, CLI queries).
    pub fn new(s: f64, sigma: f64) -> Self {
        Self { s, sigma, t: f64::NAN }
    }

    /// Forward perturbation `x_t = s y + s sigma eps`.
    pub fn perturb(&self, y: &[f64], eps: &[f64]) -> Vec<f64> {
        let scale = self.s * self.sigma;
        y.iter().zip(eps).map(|(&yi, &ei)| self.s * yi + scale * ei).collect()
    }
}

fn check_in(t: f64, lo: f64, hi: f64) -> Result<()> {
    if t.is_finite() && t >= lo && t <= hi {
        Ok(())
    } else {
        Err(Error::Domain { t, lo, hi })
    }
}

impl VpSchedule {
    pub fn new(beta_d: f64, beta_min: f64, t_min: f64) -> Result<Self> {
        if !(beta_d > 0.0) {
            return Err(Error::arg(format!("beta_d must be positive, got {beta_d}")));
        }
        if !(beta_min >= 0.0) {
            return Err(Error::arg(format!("beta_min must be non-negative, got {beta_min}")));
        }
        if !(t_min > 0.0 && t_min < 1.0) {
            return Err(Error::arg(format!("t_min must lie in (0, 1), got {t_min}")));
        }
        Ok(Self { beta_d, beta_min, t_min })
    }

    /// Integrated rate `B(t) = beta_d t^2 / 2 + beta_min t`.
    pub fn integrated_rate(&self, t: f64) -> f64 {
        0.5 * self.beta_d * t * t + self.beta_min * t
    }

    /// Kernel parameters on the closed form's full domain [0, 1]; `t = 0`
    /// gives the noiseless limit `(1, 0)`.
    pub fn kernel_at(&self, t: f64) -> Result<KernelParams> {
        check_in(t, 0.0, 1.0)?;
        let b = self.integrated_rate(t);
        Ok(KernelParams { s: (-0.5 * b).exp(), sigma: b.exp_m1().sqrt(), t })
    }

    pub fn sigma(&self, t: f64) -> Result<f64> {
        self.kernel_at(t).map(|k| k.sigma)
    }

    /// `1 / sigma(t)^2` for `t` in `[t_min, 1]`.
    pub fn snr(&self, t: f64) -> Result<f64> {
        check_in(t, self.t_min, 1.0)?;
        Ok(1.0 / self.integrated_rate(t).exp_m1())
    }

    /// Inverse of [`snr`](Self::snr) by bisection on `[t_min, 1]`.
    pub fn t_of_snr(&self, target: f64) -> Result<f64> {
        let lo_snr = self.snr(1.0)?;
        let hi_snr = self.snr(self.t_min)?;
        if !(target >= lo_snr && target <= hi_snr) {
            return Err(Error::OutOfRange { value: target, lo: lo_snr, hi: hi_snr });
        }
        // snr is decreasing, so compare rates instead: B(t) = ln(1 + 1/target).
        let rate = (1.0 / target).ln_1p();
        let (mut lo, mut hi) = (self.t_min, 1.0);
        while hi - lo > BISECTION_WIDTH {
            let mid = 0.5 * (lo + hi);
            if self.integrated_rate(mid) < rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The VE sigma whose SNR equals this schedule's SNR at `t`.
    pub fn ve_sigma_equivalent(&self, t: f64) -> Result<f64> {
        check_in(t, self.t_min, 1.0)?;
        self.sigma(t)
    }

    /// Drift `f(t)` and squared diffusion `g^2(t)` of the forward SDE.
    pub fn drift_diffusion(&self, t: f64) -> Result<(f64, f64)> {
        check_in(t, 0.0, 1.0)?;
        let rate = self.beta_d * t + self.beta_min;
        Ok((-0.5 * rate, rate))
    }
}

impl VeSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_max > sigma_min) {
            return Err(Error::arg(format!(
                "VE schedule needs 0 < sigma_min < sigma_max, got ({sigma_min}, {sigma_max})"
            )));
        }
        Ok(Self { sigma_min, sigma_max })
    }

    pub fn kernel_at(&self, t: f64) -> Result<KernelParams> {
        check_in(t, 0.0, 1.0)?;
        let sigma = self.sigma_min * (self.sigma_max / self.sigma_min).powf(t);
        Ok(KernelParams { s: 1.0, sigma, t })
    }

    pub fn snr(&self, t: f64) -> Result<f64> {
        let sigma = self.kernel_at(t)?.sigma;
        Ok(1.0 / (sigma * sigma))
    }
}

impl NoiseSchedule {
    pub fn kernel_at(&self, t: f64) -> Result<KernelParams> {
        match self {
            NoiseSchedule::Vp(vp) => vp.kernel_at(t),
            NoiseSchedule::Ve(ve) => ve.kernel_at(t),
        }
    }

    pub fn snr(&self, t: f64) -> Result<f64> {
        match self {
            NoiseSchedule::Vp(vp) => vp.snr(t),
            NoiseSchedule::Ve(ve) => ve.snr(t),
        }
    }

    /// Smallest time at which the kernel has positive noise.
    pub fn t_min(&self) -> f64 {
        match self {
            NoiseSchedule::Vp(vp) => vp.t_min,
            NoiseSchedule::Ve(_) => 0.0,
        }
    }

    /// Kernel at a time where the denoiser is defined (`t >= t_min`).
    pub fn denoising_kernel(&self, t: f64) -> Result<KernelParams> {
        check_in(t, self.t_min(), 1.0)?;
        self.kernel_at(t)
    }
}

//! Compute accounting for multistage models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageBudget {
    pub gflops_per_eval: f64,
    pub nfe_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingBudget {
    pub iterations: f64,
    pub gflops_per_eval: f64,
}

/// Per-evaluation GFLOPs averaged over stages, weighted by solver steps.
pub fn weighted_gflops(stages: &[StageBudget]) -> Result<f64> {
    if let Some(bad) = stages.iter().find(|s| !(s.gflops_per_eval > 0.0)) {
        return Err(Error::arg(format!("stage cost must be positive, got {}", bad.gflops_per_eval)));
    }
    let steps: u64 = stages.iter().map(|s| s.nfe_steps).sum();
    if steps == 0 {
        return Err(Error::arg("stages must be assigned at least one solver step in total"));
    }
    let work: f64 = stages.iter().map(|s| s.gflops_per_eval * s.nfe_steps as f64).sum();
    Ok(work / steps as f64)
}

/// Forward-pass training cost in PFLOPs (backward pass ignored).
pub fn training_pflops(b: &TrainingBudget) -> Result<f64> {
    if !(b.iterations > 0.0 && b.gflops_per_eval > 0.0) {
        return Err(Error::arg("iterations and GFLOPs must both be positive"));
    }
    Ok(b.iterations * b.gflops_per_eval * 1e-6)
}

/// Half-up rounding to `decimals` places, as printed in result tables.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    // nudge by a few ulps so binary representation error at .5 rounds up
    let scaled = x * scale;
    (scaled + scaled.abs() * 4.0 * f64::EPSILON + 0.5).floor() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(g: f64, s: u64) -> StageBudget {
        StageBudget { gflops_per_eval: g, nfe_steps: s }
    }

    #[test]
    fn weighting() {
        assert_eq!(weighted_gflops(&[stage(7.5, 3), stage(7.5, 9)]).unwrap(), 7.5);
        assert_eq!(weighted_gflops(&[stage(10.0, 1), stage(20.0, 3)]).unwrap(), 17.5);
        assert!(weighted_gflops(&[stage(10.0, 0)]).is_err());
        assert!(weighted_gflops(&[]).is_err());
        assert!(weighted_gflops(&[stage(0.0, 1)]).is_err());
    }

    #[test]
    fn weighted_value_within_stage_range() {
        let stages = [stage(29.95, 4), stage(17.65, 7), stage(6.31, 11)];
        let w = weighted_gflops(&stages).unwrap();
        assert!((6.31..=29.95).contains(&w));
    }

    #[test]
    fn pflops() {
        let p = training_pflops(&TrainingBudget { iterations: 1.0, gflops_per_eval: 1.0 }).unwrap();
        assert!((p - 1e-6).abs() < 1e-20);
        let p = training_pflops(&TrainingBudget { iterations: 4.5e5, gflops_per_eval: 17.65 }).unwrap();
        assert_eq!(round_half_up(p, 2), 7.94);
        assert!(training_pflops(&TrainingBudget { iterations: 0.0, gflops_per_eval: 1.0 }).is_err());
    }

    #[test]
    fn half_up() {
        assert_eq!(round_half_up(2.675, 2), 2.68);
        assert_eq!(round_half_up(4.6625, 2), 4.66);
        assert_eq!(round_half_up(8.2775, 2), 8.28);
        assert_eq!(round_half_up(1.004, 2), 1.0);
    }
}

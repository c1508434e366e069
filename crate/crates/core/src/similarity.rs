//! Functional similarity of the optimal denoiser across timesteps.
//!
//! Two evaluations are compared on the same clean point `y` and the same
//! noise draw `eps`, perturbed to two different times. The per-sample
//! score is the fraction of coordinates on which the two `eps*` outputs
//! agree within `eta`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Fingerprint;
use crate::denoiser::OptimalDenoiser;
use crate::error::{Error, Result};
use crate::rng::{self, Slot, StreamKey};
use crate::schedule::NoiseSchedule;

pub const DEFAULT_ETA: f64 = 2.0 / 256.0;
pub const DEFAULT_K_SAMPLES: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub eta: f64,
    pub k_samples: usize,
    pub seed: u64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            k_samples: DEFAULT_K_SAMPLES,
            seed: 0,
            t_lo: crate::schedule::DEFAULT_T_MIN,
            t_hi: 1.0,
        }
    }
}

impl SimilarityConfig {
    /// Defaults with the time range taken from the schedule.
    pub fn for_schedule(sched: &NoiseSchedule) -> Self {
        Self { t_lo: sched.t_min(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::arg(format!("eta must be positive, got {}", self.eta)));
        }
        if self.k_samples == 0 {
            return Err(Error::arg("k_samples must be at least 1"));
        }
        if !(self.t_lo < self.t_hi) {
            return Err(Error::arg(format!("need t_lo < t_hi, got [{}, {}]", self.t_lo, self.t_hi)));
        }
        Ok(())
    }
}

/// One Monte-Carlo record for the three-interval search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointSample {
    pub k: usize,
    pub t: f64,
    pub s0: f64,
    pub s1: f64,
}

/// One Monte-Carlo record for the n-interval search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub k: usize,
    pub t_a: f64,
    pub t_b: f64,
    pub s: f64,
}

/// Fraction of coordinates with `|a_i - b_i| <= eta`.
pub fn coord_agreement(a: &[f64], b: &[f64], eta: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::arg(format!("cannot compare vectors of length {} and {}", a.len(), b.len())));
    }
    let hits = a.iter().zip(b).filter(|(x, y)| (*x - *y).abs() <= eta).count();
    Ok(hits as f64 / a.len() as f64)
}

/// `eps*` at time `t` for the perturbation of `y` by `eps`.
pub fn eps_at(den: &OptimalDenoiser<'_>, sched: &NoiseSchedule, y: &[f64], eps: &[f64], t: f64) -> Result<Vec<f64>> {
    let k = sched.denoising_kernel(t)?;
    let x = k.perturb(y, eps);
    Ok(den.optimal_eps(&k, &x)?.eps_star)
}

/// The clean point index and noise vector of sample `k`.
pub fn draw_point_and_noise(n_points: usize, dim: usize, seed: u64, k: usize) -> (usize, Vec<f64>) {
    let k = k as u64;
    let index = rng::uniform_index(StreamKey::new(seed, k, Slot::DataIndex), n_points);
    let eps = rng::standard_normal(StreamKey::new(seed, k, Slot::NoiseVector), dim);
    (index, eps)
}

/// Agreement of `eps*` at `t` with `eps*` at `t_lo` and at `t_hi`.
#[allow(clippy::too_many_arguments)]
pub fn endpoint_agreement(
    den: &OptimalDenoiser<'_>,
    sched: &NoiseSchedule,
    eta: f64,
    y: &[f64],
    eps: &[f64],
    t: f64,
    t_lo: f64,
    t_hi: f64,
) -> Result<(f64, f64)> {
    let mid = eps_at(den, sched, y, eps, t)?;
    let lo = eps_at(den, sched, y, eps, t_lo)?;
    let hi = eps_at(den, sched, y, eps, t_hi)?;
    Ok((coord_agreement(&mid, &lo, eta)?, coord_agreement(&mid, &hi, eta)?))
}

pub fn pair_agreement(
    den: &OptimalDenoiser<'_>,
    sched: &NoiseSchedule,
    eta: f64,
    y: &[f64],
    eps: &[f64],
    t_a: f64,
    t_b: f64,
) -> Result<f64> {
    let a = eps_at(den, sched, y, eps, t_a)?;
    let b = eps_at(den, sched, y, eps, t_b)?;
    coord_agreement(&a, &b, eta)
}

pub fn endpoint_sample(
    den: &OptimalDenoiser<'_>,
    sched: &NoiseSchedule,
    cfg: &SimilarityConfig,
    k: usize,
) -> Result<EndpointSample> {
    if k >= cfg.k_samples {
        return Err(Error::arg(format!("sample index {k} exceeds k_samples {}", cfg.k_samples)));
    }
    let data = den.dataset();
    let (index, eps) = draw_point_and_noise(data.len(), data.dim(), cfg.seed, k);
    let t = rng::uniform_in(StreamKey::new(cfg.seed, k as u64, Slot::TimeA), cfg.t_lo, cfg.t_hi);
    let (s0, s1) = endpoint_agreement(den, sched, cfg.eta, data.point(index), &eps, t, cfg.t_lo, cfg.t_hi)?;
    Ok(EndpointSample { k, t, s0, s1 })
}

pub fn pair_sample(
    den: &OptimalDenoiser<'_>,
    sched: &NoiseSchedule,
    cfg: &SimilarityConfig,
    k: usize,
) -> Result<PairSample> {
    if k >= cfg.k_samples {
        return Err(Error::arg(format!("sample index {k} exceeds k_samples {}", cfg.k_samples)));
    }
    let data = den.dataset();
    let (index, eps) = draw_point_and_noise(data.len(), data.dim(), cfg.seed, k);
    let t_a = rng::uniform_in(StreamKey::new(cfg.seed, k as u64, Slot::TimeA), cfg.t_lo, cfg.t_hi);
    let t_b = rng::uniform_in(StreamKey::new(cfg.seed, k as u64, Slot::TimeB), cfg.t_lo, cfg.t_hi);
    let s = pair_agreement(den, sched, cfg.eta, data.point(index), &eps, t_a, t_b)?;
    Ok(PairSample { k, t_a, t_b, s })
}

fn run_indexed<T, F>(k_samples: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build()?;
    pool.install(|| (0..k_samples).into_par_iter().map(&f).collect())
}

/// Endpoint study for the three-interval search: `k_samples` records, index order.
pub fn run_endpoint_study(
    den: &OptimalDenoiser<'_>,
    sched: &NoiseSchedule,
    cfg: &SimilarityConfig,
    threads: Option<usize>,
) -> Result<Vec<EndpointSample>> {
    cfg.validate()?;
    run_indexed(cfg.k_samples, threads, |k| endpoint_sample(den, sched, cfg, k))
}

/// Random-pair study for the n-interval search: `k_samples` records, index order.
pub fn run_pair_study(
    den: &OptimalDenoiser<'_>,
    sched: &NoiseSchedule,
    cfg: &SimilarityConfig,
    threads: Option<usize>,
) -> Result<Vec<PairSample>> {
    cfg.validate()?;
    run_indexed(cfg.k_samples, threads, |k| pair_sample(den, sched, cfg, k))
}

/// Sidecar metadata written next to a sample store CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub kind: StoreKind,
    pub config: SimilarityConfig,
    pub schedule: NoiseSchedule,
    pub dataset: Fingerprint,
    pub dataset_source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Endpoint,
    Pair,
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sidecar_path(store: &Path) -> PathBuf {
    let mut name = store.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn endpoint_csv(samples: &[EndpointSample]) -> String {
    let mut out = String::from("k,t,s0,s1\n");
    for s in samples {
        out.push_str(&format!("{},{},{},{}\n", s.k, fmt17(s.t), fmt17(s.s0), fmt17(s.s1)));
    }
    out
}

pub fn pair_csv(samples: &[PairSample]) -> String {
    let mut out = String::from("k,t_a,t_b,s\n");
    for s in samples {
        out.push_str(&format!("{},{},{},{}\n", s.k, fmt17(s.t_a), fmt17(s.t_b), fmt17(s.s)));
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the store CSV and its JSON sidecar.
pub fn write_endpoint_store(path: &Path, samples: &[EndpointSample], meta: &StoreMeta) -> Result<()> {
    write_text(path, &endpoint_csv(samples))?;
    write_text(&sidecar_path(path), &serde_json::to_string_pretty(meta)?)
}

pub fn write_pair_store(path: &Path, samples: &[PairSample], meta: &StoreMeta) -> Result<()> {
    write_text(path, &pair_csv(samples))?;
    write_text(&sidecar_path(path), &serde_json::to_string_pretty(meta)?)
}

/// Reads the sidecar of a store, if present.
pub fn read_store_meta(path: &Path) -> Result<Option<StoreMeta>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format { path: path.to_path_buf(), msg: format!("{other:?}") },
    })?;
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected header {}, found {}", header.join(","), found.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?;
        let vals = record
            .iter()
            .enumerate()
            .map(|(col, cell)| cell.parse::<f64>().map_err(|_| Error::Parse { row, col, value: cell.to_string() }))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok(rows)
}

pub fn read_endpoint_csv(path: &Path) -> Result<Vec<EndpointSample>> {
    read_rows(path, &["k", "t", "s0", "s1"])?
        .into_iter()
        .map(|r| Ok(EndpointSample { k: r[0] as usize, t: r[1], s0: r[2], s1: r[3] }))
        .collect()
}

pub fn read_pair_csv(path: &Path) -> Result<Vec<PairSample>> {
    read_rows(path, &["k", "t_a", "t_b", "s"])?
        .into_iter()
        .map(|r| Ok(PairSample { k: r[0] as usize, t_a: r[1], t_b: r[2], s: r[3] }))
        .collect()
}

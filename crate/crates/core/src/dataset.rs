//! Empirical datasets `{y_i}` defining the multi-Dirac data law.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{self, Slot, StreamKey};

/// Bytes per CIFAR-10 binary record: one label byte plus 3072 pixel bytes.
pub const CIFAR_RECORD_LEN: usize = 3073;
pub const CIFAR_DIM: usize = 3072;
/// Environment variable naming the directory that holds dataset files.
pub const DATA_DIR_ENV: &str = "STAGECUT_DATA_DIR";
pub const CIFAR_TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    dim: usize,
    range: (f64, f64),
    source: String,
}

/// Size and checksum of a dataset, recorded next to every sample store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub n_points: usize,
    pub dim: usize,
    pub sha256: String,
}

impl Dataset {
    /// Builds a dataset from row-major flattened points.
    pub fn from_flat(points: Vec<f64>, dim: usize, range: (f64, f64), source: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dataset dimension must be at least 1"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::arg(format!(
                "{} values do not form a nonempty set of {dim}-dimensional points",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("dataset contains non-finite values"));
        }
        Ok(Self { points, dim, range, source: source.into() })
    }

    /// Builds a dataset from explicit rows; the declared range is the
    /// observed `[min, max]`.
    pub fn from_rows(rows: &[Vec<f64>], source: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::arg(format!("row {i} has {} values, expected {dim}", rows[i].len())));
        }
        let flat: Vec<f64> = rows.concat();
        let range = value_span(&flat);
        Self::from_flat(flat, dim, range, source)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    /// Coordinatewise minimum and maximum over all points.
    pub fn coordinate_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for p in self.iter().skip(1) {
            for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(p) {
                *l = l.min(v);
                *h = h.max(v);
            }
        }
        (lo, hi)
    }

    /// Affinely maps the declared range onto `[lo, hi]`.
    pub fn rescaled(&self, lo: f64, hi: f64) -> Result<Self> {
        let (a, b) = self.range;
        if !(hi > lo) || !(b > a) {
            return Err(Error::arg(format!("cannot rescale [{a}, {b}] onto [{lo}, {hi}]")));
        }
        let scale = (hi - lo) / (b - a);
        let points = self.points.iter().map(|&v| lo + (v - a) * scale).collect();
        Ok(Self { points, dim: self.dim, range: (lo, hi), source: self.source.clone() })
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for v in &self.points {
            hasher.update(v.to_le_bytes());
        }
        Fingerprint { n_points: self.len(), dim: self.dim, sha256: hex::encode(hasher.finalize()) }
    }
}

fn value_span(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads CIFAR-10 binary batches. Labels are dropped; pixels keep the
/// channel-planar order of the file and are mapped to `byte / 255`.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::arg("load_cifar10 needs at least one batch file"));
    }
    let mut points = Vec::new();
    let mut names = Vec::with_capacity(paths.len());
    for path in paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        let residue = bytes.len() % CIFAR_RECORD_LEN;
        if residue != 0 || bytes.is_empty() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!(
                    "length {} is not a positive multiple of {CIFAR_RECORD_LEN} (residue {residue})",
                    bytes.len()
                ),
            });
        }
        points.reserve(bytes.len() / CIFAR_RECORD_LEN * CIFAR_DIM);
        for record in bytes.chunks_exact(CIFAR_RECORD_LEN) {
            points.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
        names.push(path.display().to_string());
    }
    Dataset::from_flat(points, CIFAR_DIM, (0.0, 1.0), format!("cifar10:{}", names.join(",")))
}

/// The five CIFAR-10 training batches under `dir`.
pub fn cifar10_train_paths(dir: &Path) -> Vec<PathBuf> {
    CIFAR_TRAIN_FILES.iter().map(|f| dir.join(f)).collect()
}

/// Loads a headered CSV of numeric columns. The declared range is the
/// observed `[min, max]`.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_open_error(path, e))?;
    let dim = reader.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?;
        if record.len() != dim {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("row {row} has {} fields, header has {dim}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse { row, col, value: cell.to_string() })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format { path: path.to_path_buf(), msg: "no data rows".into() });
    }
    let range = value_span(&values);
    Dataset::from_flat(values, dim, range, format!("csv:{}", path.display()))
}

fn csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format { path: path.to_path_buf(), msg: format!("{other:?}") },
    }
}

/// Writes the dataset as CSV with header `x0,x1,...`. Values use Rust's
/// shortest round-trip formatting, so `load_csv` reads them back exactly.
pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..d.dim()).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in d.iter() {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// `per_center` Gaussian draws around each center, isotropic stdev `spread`.
pub fn synth_clusters(centers: &[Vec<f64>], per_center: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if centers.is_empty() {
        return Err(Error::arg("synth_clusters needs at least one center"));
    }
    if per_center == 0 {
        return Err(Error::arg("per_center must be at least 1"));
    }
    if !(spread >= 0.0) {
        return Err(Error::arg(format!("spread must be non-negative, got {spread}")));
    }
    let dim = centers[0].len();
    let mut rows = Vec::with_capacity(centers.len() * per_center);
    for (c, center) in centers.iter().enumerate() {
        if center.len() != dim {
            return Err(Error::arg(format!("center {c} has dimension {}, expected {dim}", center.len())));
        }
        for j in 0..per_center {
            let index = (c * per_center + j) as u64;
            let noise = rng::standard_normal(StreamKey::new(seed, index, Slot::NoiseVector), dim);
            rows.push(center.iter().zip(&noise).map(|(&m, &z)| m + spread * z).collect());
        }
    }
    Dataset::from_rows(&rows, format!("synthetic:{}x{per_center},spread={spread},seed={seed}", centers.len()))
}

/// `m` distinct points chosen by a seeded shuffle.
pub fn subsample(d: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 || m > d.len() {
        return Err(Error::arg(format!("subsample size {m} must lie in 1..={}", d.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, d.len(), m);
    let mut points = Vec::with_capacity(m * d.dim());
    for i in picks.iter() {
        points.extend_from_slice(d.point(i));
    }
    Dataset::from_flat(points, d.dim(), d.range(), format!("{}|subsample(m={m},seed={seed})", d.source()))
}

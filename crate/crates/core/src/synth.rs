//! Deterministic synthetic logistic benchmarks: designs with controlled
//! condition numbers, Bernoulli responses, the named presets used by the
//! harness, and CSV/JSON serialization.
//!
//! All randomness flows through a counter-based generator (ChaCha8 keyed by
//! a 64-bit seed with a per-purpose stream id), so generation is bit-exact
//! for a given seed on any platform.

use crate::linalg::DenseMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("design requires n ≥ p ≥ 1, got n={n}, p={p}")]
    InvalidShape { n: usize, p: usize },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed data file: {0}")]
    Malformed(String),
}

/// Stream ids keep draws for different purposes independent under one seed.
mod stream {
    pub const DESIGN_U: u64 = 1;
    pub const DESIGN_V: u64 = 2;
    pub const BETA: u64 = 3;
    pub const RESPONSE: u64 = 4;
}

/// Counter-based generator for (seed, stream).
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One benchmark instance.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Standardized n×p design.
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    /// Per-observation trial counts (all 1 by default).
    pub m: Vec<f64>,
    pub beta_true: Vec<f64>,
    pub seed: u64,
    pub target_cond: f64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }
}

fn fill_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let entries = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::new(rows, cols, entries)
}

/// Orthonormalize the columns of `a` in place by modified Gram-Schmidt with
/// one re-orthogonalization pass.
fn orthonormalize_columns(a: &mut DenseMatrix) {
    let (n, p) = (a.rows(), a.cols());
    for j in 0..p {
        for _pass in 0..2 {
            for k in 0..j {
                let mut dot = 0.0;
                for i in 0..n {
                    dot += a.get(i, k) * a.get(i, j);
                }
                for i in 0..n {
                    let v = a.get(i, j) - dot * a.get(i, k);
                    a.set(i, j, v);
                }
            }
        }
        let mut norm = 0.0;
        for i in 0..n {
            norm += a.get(i, j) * a.get(i, j);
        }
        let norm = norm.sqrt();
        for i in 0..n {
            a.set(i, j, a.get(i, j) / norm);
        }
    }
}

/// Subtract column means and rescale to unit (population) variance, in place.
pub fn standardize_columns(x: &mut DenseMatrix) {
    let (n, p) = (x.rows(), x.cols());
    for j in 0..p {
        let mean = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let mut var = 0.0;
        for i in 0..n {
            let c = x.get(i, j) - mean;
            x.set(i, j, c);
            var += c * c;
        }
        let sd = (var / n as f64).sqrt();
        if sd > 0.0 {
            for i in 0..n {
                x.set(i, j, x.get(i, j) / sd);
            }
        }
    }
}

/// Design with cond(XᵀX) equal to `cond` before standardization:
/// X = U·diag(d)·Vᵀ with random orthonormal factors and a geometric singular
/// spectrum from 1 down to 1/√cond, columns then standardized to zero mean
/// and unit variance.
pub fn gen_design(n: usize, p: usize, cond: f64, seed: u64) -> Result<DenseMatrix, SynthError> {
    if n < p || p == 0 {
        return Err(SynthError::InvalidShape { n, p });
    }
    debug_assert!(cond >= 1.0);
    let mut u = fill_normal(&mut seeded_rng(seed, stream::DESIGN_U), n, p);
    orthonormalize_columns(&mut u);
    let mut v = fill_normal(&mut seeded_rng(seed, stream::DESIGN_V), p, p);
    orthonormalize_columns(&mut v);
    let d: Vec<f64> = (0..p)
        .map(|j| {
            if p == 1 {
                1.0
            } else {
                // d_j = cond^(−j / (2(p−1))), so (d_0/d_{p−1})² = cond
                cond.powf(-(j as f64) / (2.0 * (p - 1) as f64))
            }
        })
        .collect();
    let mut x = DenseMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                s += u.get(i, k) * d[k] * v.get(j, k);
            }
            x.set(i, j, s);
        }
    }
    standardize_columns(&mut x);
    Ok(x)
}

/// Same construction without the final standardization; used to verify the
/// realized spectrum against the target.
pub fn gen_design_raw(n: usize, p: usize, cond: f64, seed: u64) -> Result<DenseMatrix, SynthError> {
    if n < p || p == 0 {
        return Err(SynthError::InvalidShape { n, p });
    }
    let mut u = fill_normal(&mut seeded_rng(seed, stream::DESIGN_U), n, p);
    orthonormalize_columns(&mut u);
    let mut v = fill_normal(&mut seeded_rng(seed, stream::DESIGN_V), p, p);
    orthonormalize_columns(&mut v);
    let mut x = DenseMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                let d = if p == 1 {
                    1.0
                } else {
                    cond.powf(-(k as f64) / (2.0 * (p - 1) as f64))
                };
                s += u.get(i, k) * d * v.get(j, k);
            }
            x.set(i, j, s);
        }
    }
    Ok(x)
}

/// Bernoulli responses y_i ~ Bern(σ(x_iᵀβ*)) from seeded uniform draws.
pub fn gen_logistic(x: &DenseMatrix, beta_true: &[f64], seed: u64) -> Vec<f64> {
    assert_eq!(x.cols(), beta_true.len());
    let mut rng = seeded_rng(seed, stream::RESPONSE);
    let z = x.matvec(beta_true);
    z.iter()
        .map(|zi| {
            let pr = crate::kernels::sigmoid(*zi);
            if rng.gen::<f64>() < pr {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Coefficients drawn standard normal (optionally sparsified) and rescaled so
/// ‖Xβ*‖/√n ≈ `signal`, keeping responses moderately separable.
fn gen_beta_true(
    x: &DenseMatrix,
    seed: u64,
    signal: f64,
    nonzero: Option<usize>,
) -> Vec<f64> {
    let p = x.cols();
    let n = x.rows();
    let mut rng = seeded_rng(seed, stream::BETA);
    let mut beta: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    if let Some(k) = nonzero {
        // deterministic support: first k coordinates of a seeded permutation
        let mut idx: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let mut mask = vec![false; p];
        for &j in idx.iter().take(k) {
            mask[j] = true;
        }
        for (b, keep) in beta.iter_mut().zip(&mask) {
            if !keep {
                *b = 0.0;
            }
        }
    }
    let z = x.matvec(&beta);
    let scale = (z.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if scale > 0.0 {
        for b in &mut beta {
            *b *= signal / scale;
        }
    }
    beta
}

/// Build a full logistic dataset (m_i = 1) for the given shape with the
/// default signal scale.
pub fn gen_dataset(
    n: usize,
    p: usize,
    cond: f64,
    seed: u64,
    sparse_support: Option<usize>,
) -> Result<Dataset, SynthError> {
    gen_dataset_scaled(n, p, cond, seed, sparse_support, 2.0)
}

/// As [`gen_dataset`] with an explicit ‖Xβ*‖/√n signal scale.
pub fn gen_dataset_scaled(
    n: usize,
    p: usize,
    cond: f64,
    seed: u64,
    sparse_support: Option<usize>,
    signal: f64,
) -> Result<Dataset, SynthError> {
    let x = gen_design(n, p, cond, seed)?;
    let beta_true = gen_beta_true(&x, seed, signal, sparse_support);
    let y = gen_logistic(&x, &beta_true, seed);
    Ok(Dataset { x, y, m: vec![1.0; n], beta_true, seed, target_cond: cond })
}

/// The named benchmark presets with their documented shapes and seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    /// n=2000, p=20, cond 50, seed 101
    Conv50,
    /// n=2000, p=20, cond 500, seed 202
    Cond500,
    /// n=2000, p=20, cond 450, seed 303
    Nesterov450,
    /// n=5000, cond 500, seed 404; dimension chosen by the caller
    Highdim(usize),
    /// n=5000, p=200, cond 200, seed 505
    Regpath,
    /// n=2000, p=500, cond 1e4, seed 606, sparse truth (50 of 500 nonzero)
    Activeset,
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PresetName::Conv50 => write!(f, "conv50"),
            PresetName::Cond500 => write!(f, "cond500"),
            PresetName::Nesterov450 => write!(f, "nesterov450"),
            PresetName::Highdim(p) => write!(f, "highdim({p})"),
            PresetName::Regpath => write!(f, "regpath"),
            PresetName::Activeset => write!(f, "activeset"),
        }
    }
}

impl FromStr for PresetName {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conv50" => Ok(PresetName::Conv50),
            "cond500" => Ok(PresetName::Cond500),
            "nesterov450" => Ok(PresetName::Nesterov450),
            "regpath" => Ok(PresetName::Regpath),
            "activeset" => Ok(PresetName::Activeset),
            other => {
                if let Some(inner) = other.strip_prefix("highdim(").and_then(|t| t.strip_suffix(')'))
                {
                    if let Ok(p) = inner.parse::<usize>() {
                        return Ok(PresetName::Highdim(p));
                    }
                }
                Err(SynthError::UnknownPreset(other.to_string()))
            }
        }
    }
}

impl PresetName {
    /// (n, p, cond, seed, sparse support size)
    pub fn shape(self) -> (usize, usize, f64, u64, Option<usize>) {
        match self {
            PresetName::Conv50 => (2000, 20, 50.0, 101, None),
            PresetName::Cond500 => (2000, 20, 500.0, 202, None),
            PresetName::Nesterov450 => (2000, 20, 450.0, 303, None),
            PresetName::Highdim(p) => (5000, p, 500.0, 404, None),
            PresetName::Regpath => (5000, 200, 200.0, 505, None),
            PresetName::Activeset => (2000, 500, 1e4, 606, Some(50)),
        }
    }

    /// ‖Xβ*‖/√n scale. The comparison presets use strongly separated data
    /// (the low-NLL regime where adaptive weights matter most); the path and
    /// active-set presets stay moderate so every penalty on the grid
    /// converges quickly.
    pub fn signal(self) -> f64 {
        match self {
            PresetName::Regpath => 4.0,
            PresetName::Activeset => 6.0,
            _ => 30.0,
        }
    }
}

/// Build a preset dataset with its documented shape and seed.
pub fn make_preset(name: PresetName) -> Result<Dataset, SynthError> {
    let (n, p, cond, seed, sparse) = name.shape();
    gen_dataset_scaled(n, p, cond, seed, sparse, name.signal())
}

/// Same preset with a caller-supplied seed (re-run studies).
pub fn make_preset_seeded(name: PresetName, seed: u64) -> Result<Dataset, SynthError> {
    let (n, p, cond, _, sparse) = name.shape();
    gen_dataset_scaled(n, p, cond, seed, sparse, name.signal())
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    n: usize,
    p: usize,
    cond: f64,
    seed: u64,
    beta_true: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    realized_cond_xtx: Option<f64>,
}

impl Dataset {
    /// Write `X.csv` (one headerless row of p comma-separated values per
    /// observation), `y.csv` (one value per line), and `meta.json`
    /// (n, p, cond, seed, beta_true, and the realized post-standardization
    /// cond(XᵀX) when supplied).
    pub fn save(&self, dir: &Path, realized_cond: Option<f64>) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let mut wx = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join("X.csv"))?;
        for i in 0..self.n() {
            wx.write_record(self.x.row(i).iter().map(|v| v.to_string()))?;
        }
        wx.flush()?;
        let mut wy = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join("y.csv"))?;
        for v in &self.y {
            wy.write_record([v.to_string()])?;
        }
        wy.flush()?;
        let meta = DatasetMeta {
            n: self.n(),
            p: self.p(),
            cond: self.target_cond,
            seed: self.seed,
            beta_true: self.beta_true.clone(),
            realized_cond_xtx: realized_cond,
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Load a dataset from an `X.csv`/`y.csv` pair written by [`Dataset::save`]
    /// (or any headerless numeric CSVs of matching length). A `meta.json`
    /// next to `X.csv` is used when present; otherwise trial counts default
    /// to 1 and the generating coefficients are unknown.
    pub fn load(x_path: &Path, y_path: &Path) -> Result<Self, SynthError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rx = csv::ReaderBuilder::new().has_headers(false).from_path(x_path)?;
        for rec in rx.records() {
            let rec = rec?;
            let row: Result<Vec<f64>, _> = rec.iter().map(|v| v.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| SynthError::Malformed(format!("X.csv: {e}")))?);
        }
        if rows.is_empty() {
            return Err(SynthError::Malformed("X.csv is empty".into()));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(SynthError::Malformed("X.csv has ragged rows".into()));
        }
        let mut ry = csv::ReaderBuilder::new().has_headers(false).from_path(y_path)?;
        let mut y = Vec::new();
        for rec in ry.records() {
            let rec = rec?;
            let v = rec
                .get(0)
                .ok_or_else(|| SynthError::Malformed("y.csv: empty record".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| SynthError::Malformed(format!("y.csv: {e}")))?;
            y.push(v);
        }
        if y.len() != rows.len() {
            return Err(SynthError::Malformed(format!(
                "X.csv has {} rows but y.csv has {}",
                rows.len(),
                y.len()
            )));
        }
        let n = rows.len();
        let x = DenseMatrix::from_rows(&rows);
        let meta_path = x_path.parent().map(|d| d.join("meta.json"));
        let (beta_true, seed, target_cond) = match meta_path {
            Some(mp) if mp.exists() => {
                let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(mp)?)?;
                (meta.beta_true, meta.seed, meta.cond)
            }
            _ => (Vec::new(), 0, f64::NAN),
        };
        Ok(Dataset { x, y, m: vec![1.0; n], beta_true, seed, target_cond })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_cond;

    fn xtx(x: &DenseMatrix) -> DenseMatrix {
        let (n, p) = (x.rows(), x.cols());
        let mut g = DenseMatrix::zeros(p, p);
        for i in 0..n {
            for j in 0..p {
                for k in 0..p {
                    g.set(j, k, g.get(j, k) + x.get(i, j) * x.get(i, k));
                }
            }
        }
        g
    }

    #[test]
    fn raw_design_hits_target_cond() {
        for seed in 0..20 {
            let x = gen_design_raw(60, 8, 50.0, seed).unwrap();
            let c = spectral_cond(&xtx(&x)).unwrap();
            assert!((c - 50.0).abs() <= 5.0, "seed {seed}: realized {c}");
        }
    }

    #[test]
    fn flat_spectrum_square_design_is_orthogonal() {
        let x = gen_design_raw(16, 16, 1.0, 9).unwrap();
        let c = spectral_cond(&xtx(&x)).unwrap();
        assert!((c - 1.0).abs() <= 0.1, "realized {c}");
    }

    #[test]
    fn cond500_preset_shape_realized() {
        let x = gen_design_raw(2000, 20, 500.0, 202).unwrap();
        let c = spectral_cond(&xtx(&x)).unwrap();
        assert!((450.0..=550.0).contains(&c), "realized {c}");
    }

    #[test]
    fn design_is_deterministic() {
        let a = gen_design(100, 6, 30.0, 7).unwrap();
        let b = gen_design(100, 6, 30.0, 7).unwrap();
        assert_eq!(a.entries(), b.entries());
        let c = gen_design(100, 6, 30.0, 8).unwrap();
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn rejects_wide_design() {
        assert!(matches!(gen_design(3, 5, 10.0, 0), Err(SynthError::InvalidShape { .. })));
    }

    #[test]
    fn standardization_moments() {
        let x = gen_design(500, 10, 100.0, 3).unwrap();
        let n = x.rows() as f64;
        for j in 0..x.cols() {
            let mean = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
            let var = (0..x.rows()).map(|i| x.get(i, j) * x.get(i, j)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn logistic_responses_balanced_at_zero_signal() {
        let x = gen_design(2000, 5, 10.0, 11).unwrap();
        let y = gen_logistic(&x, &[0.0; 5], 11);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((0.45..=0.55).contains(&mean), "mean {mean}");
    }

    #[test]
    fn logistic_responses_saturate() {
        let x = DenseMatrix::new(500, 1, vec![1.0; 500]);
        let y = gen_logistic(&x, &[20.0], 5);
        let frac = y.iter().sum::<f64>() / 500.0;
        assert!(frac >= 0.99);
    }

    #[test]
    fn logistic_responses_deterministic() {
        let x = gen_design(200, 4, 20.0, 2).unwrap();
        let b = [0.5, -0.5, 1.0, 0.0];
        assert_eq!(gen_logistic(&x, &b, 3), gen_logistic(&x, &b, 3));
    }

    #[test]
    fn preset_shapes() {
        let d = make_preset(PresetName::Nesterov450).unwrap();
        assert_eq!((d.n(), d.p(), d.target_cond), (2000, 20, 450.0));
        let (n, p, cond, _, _) = PresetName::Highdim(200).shape();
        assert_eq!((n, p, cond), (5000, 200, 500.0));
        let (n, p, cond, _, _) = PresetName::Regpath.shape();
        assert_eq!((n, p, cond), (5000, 200, 200.0));
    }

    #[test]
    fn preset_pipeline_deterministic() {
        let a = gen_dataset(200, 8, 50.0, 42, None).unwrap();
        let b = gen_dataset(200, 8, 50.0, 42, None).unwrap();
        assert_eq!(a.x.entries(), b.x.entries());
        assert_eq!(a.y, b.y);
        assert_eq!(a.beta_true, b.beta_true);
    }

    #[test]
    fn beta_true_scaling_and_sparsity() {
        let d = gen_dataset(400, 20, 50.0, 13, Some(5)).unwrap();
        assert_eq!(d.beta_true.iter().filter(|b| **b != 0.0).count(), 5);
        let z = d.x.matvec(&d.beta_true);
        let scale = (z.iter().map(|v| v * v).sum::<f64>() / d.n() as f64).sqrt();
        assert!((scale - 2.0).abs() < 1e-9);
    }

    #[test]
    fn preset_name_parsing() {
        assert_eq!("conv50".parse::<PresetName>().unwrap(), PresetName::Conv50);
        assert_eq!("highdim(200)".parse::<PresetName>().unwrap(), PresetName::Highdim(200));
        assert!(matches!(
            "no_such".parse::<PresetName>(),
            Err(SynthError::UnknownPreset(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = gen_dataset(50, 4, 10.0, 21, None).unwrap();
        d.save(dir.path(), Some(12.5)).unwrap();
        let back = Dataset::load(&dir.path().join("X.csv"), &dir.path().join("y.csv")).unwrap();
        assert_eq!(back.n(), 50);
        assert_eq!(back.p(), 4);
        assert_eq!(back.y, d.y);
        assert_eq!(back.beta_true, d.beta_true);
        assert_eq!(back.seed, 21);
        for i in 0..50 {
            for j in 0..4 {
                // shortest-round-trip float formatting is exact
                assert_eq!(back.x.get(i, j), d.x.get(i, j));
            }
        }
    }
}

//! Synthetic structured data `x = A z`.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::corruption::Dataset;
use crate::error::{Error, Result};
use crate::structure::StructureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    Gaussian,
    Uniform,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub kind: LatentKind,
    pub r: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LatentSpec {
    /// Zero mean, unit scale.
    pub fn standard(kind: LatentKind, r: usize) -> Self {
        Self {
            kind,
            r,
            mean: vec![0.0; r],
            scale: vec![1.0; r],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("latent dimension must be positive"));
        }
        if self.mean.len() != self.r || self.scale.len() != self.r {
            return Err(Error::dims(format!(
                "latent r = {} but mean has {} and scale {} entries",
                self.r,
                self.mean.len(),
                self.scale.len()
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("latent mean must be finite"));
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("latent scale entries must be positive"));
        }
        Ok(())
    }

    /// Population covariance of `z` (diagonal).
    pub fn covariance(&self) -> DMatrix<f64> {
        let var = self.scale.iter().map(|s| match self.kind {
            LatentKind::Gaussian | LatentKind::Exponential => s * s,
            LatentKind::Uniform => s * s / 3.0,
        });
        DMatrix::from_diagonal(&DVector::from_iterator(self.r, var))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    BlockDiagonal,
    DenseRandom,
    Identity,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub kind: StructureKind,
    pub n: usize,
    pub r: usize,
    /// `(rows, cols)` of each diagonal block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub seed: u64,
    /// Row-major matrix for `Explicit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<f64>>>,
    /// Headerless CSV for `Explicit`, used when `entries` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl StructureSpec {
    pub fn identity(n: usize) -> Self {
        Self::plain(StructureKind::Identity, n, n, 0)
    }

    pub fn dense(n: usize, r: usize, seed: u64) -> Self {
        Self::plain(StructureKind::DenseRandom, n, r, seed)
    }

    pub fn block_diagonal(blocks: Vec<(usize, usize)>, seed: u64) -> Self {
        let n = blocks.iter().map(|b| b.0).sum();
        let r = blocks.iter().map(|b| b.1).sum();
        Self {
            blocks: Some(blocks),
            ..Self::plain(StructureKind::BlockDiagonal, n, r, seed)
        }
    }

    /// Two 8×4 Gaussian blocks: a 16×8 structure.
    pub fn two_blocks(seed: u64) -> Self {
        Self::block_diagonal(vec![(8, 4), (8, 4)], seed)
    }

    pub fn explicit(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        Self {
            entries: Some(rows),
            ..Self::plain(StructureKind::Explicit, n, r, 0)
        }
    }

    fn plain(kind: StructureKind, n: usize, r: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            r,
            blocks: None,
            seed,
            entries: None,
            path: None,
        }
    }
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // fill row by row so the draw order matches the printed layout
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

const STRUCTURE_STREAM: u64 = 3;

/// Builds the structure matrix; random kinds draw from a stream seeded by
/// `spec.seed`.
pub fn gen_structure(spec: &StructureSpec) -> Result<StructureMatrix> {
    let (n, r) = (spec.n, spec.r);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // latents are usually drawn from stream 0 of a seed; keep A off that stream
    rng.set_stream(STRUCTURE_STREAM);
    let entries = match spec.kind {
        StructureKind::Identity => {
            if n != r || n == 0 {
                return Err(Error::invalid(format!("identity structure needs n = r > 0, got {n}×{r}")));
            }
            DMatrix::identity(n, n)
        }
        StructureKind::DenseRandom => {
            if n == 0 || r == 0 {
                return Err(Error::invalid("structure dimensions must be positive"));
            }
            standard_normal_matrix(n, r, &mut rng)
        }
        StructureKind::BlockDiagonal => {
            let blocks = spec
                .blocks
                .as_ref()
                .filter(|b| !b.is_empty())
                .ok_or_else(|| Error::invalid("block-diagonal structure needs blocks"))?;
            let rows: usize = blocks.iter().map(|b| b.0).sum();
            let cols: usize = blocks.iter().map(|b| b.1).sum();
            if (rows, cols) != (n, r) {
                return Err(Error::invalid(format!(
                    "blocks cover {rows}×{cols}, structure is {n}×{r}"
                )));
            }
            if blocks.iter().any(|b| b.0 == 0 || b.1 == 0) {
                return Err(Error::invalid("blocks must be nonempty"));
            }
            let mut m = DMatrix::zeros(n, r);
            let (mut i0, mut j0) = (0, 0);
            for &(br, bc) in blocks {
                let block = standard_normal_matrix(br, bc, &mut rng);
                m.view_mut((i0, j0), (br, bc)).copy_from(&block);
                i0 += br;
                j0 += bc;
            }
            m
        }
        StructureKind::Explicit => {
            let a = match (&spec.entries, &spec.path) {
                (Some(rows), _) => StructureMatrix::from_rows(rows)?,
                (None, Some(path)) => StructureMatrix::from_csv_path(path)?,
                (None, None) => {
                    return Err(Error::invalid("explicit structure needs entries or a path"))
                }
            };
            if (a.n(), a.r()) != (n, r) {
                return Err(Error::invalid(format!(
                    "explicit matrix is {}×{}, expected {n}×{r}",
                    a.n(),
                    a.r()
                )));
            }
            return Ok(a);
        }
    };
    StructureMatrix::new(entries)
}

/// `N × r` latent draws, one sample per row.
pub fn gen_latents<R: Rng + ?Sized>(spec: &LatentSpec, n_samples: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let r = spec.r;
    let mut z = DMatrix::zeros(n_samples, r);
    match spec.kind {
        LatentKind::Gaussian => {
            for i in 0..n_samples {
                for j in 0..r {
                    let g: f64 = rng.sample(StandardNormal);
                    z[(i, j)] = spec.mean[j] + spec.scale[j] * g;
                }
            }
        }
        LatentKind::Uniform => {
            let unit = Uniform::new_inclusive(-1.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
            for i in 0..n_samples {
                for j in 0..r {
                    z[(i, j)] = spec.mean[j] + spec.scale[j] * unit.sample(rng);
                }
            }
        }
        LatentKind::Exponential => {
            let unit = Exp::new(1.0).map_err(|e| Error::invalid(e.to_string()))?;
            for i in 0..n_samples {
                for j in 0..r {
                    // scale · Exp(1) has rate 1/scale; subtracting scale centres it
                    let e: f64 = unit.sample(rng);
                    z[(i, j)] = spec.mean[j] + spec.scale[j] * e - spec.scale[j];
                }
            }
        }
    }
    Ok(z)
}

/// Row `i` of the result is `A z_i`.
pub fn gen_dataset(a: &StructureMatrix, z: &DMatrix<f64>) -> Result<Dataset> {
    if z.ncols() != a.r() {
        return Err(Error::dims(format!(
            "latents have {} columns, structure has {}",
            z.ncols(),
            a.r()
        )));
    }
    Ok(Dataset::new(z * a.entries().transpose()))
}

pub fn true_mean(a: &StructureMatrix, spec: &LatentSpec) -> Result<DVector<f64>> {
    spec.validate()?;
    if spec.r != a.r() {
        return Err(Error::dims("latent dimension differs from structure columns"));
    }
    Ok(a.apply(&DVector::from_column_slice(&spec.mean)))
}

/// `A Cov(z) Aᵀ`.
pub fn population_covariance(a: &StructureMatrix, spec: &LatentSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if spec.r != a.r() {
        return Err(Error::dims("latent dimension differs from structure columns"));
    }
    Ok(a.entries() * spec.covariance() * a.entries().transpose())
}

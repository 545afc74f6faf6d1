//! The linear structure `A` (n × r) and its redundancy quantities.
//!
//! Samples are modelled as `x = A z`. The redundancy `m_A` is the minimum
//! number of rows whose deletion strictly lowers the row-space dimension;
//! it governs how many corrupted coordinates a sample can absorb.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::combinatorics::{binomial, complement, Combinations};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{largest_singular_value, numerical_rank, select_rows};

/// Relative singular-value threshold used for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Largest `n` accepted by [`compute_m_a_exact`].
pub const DEFAULT_MA_CAP: usize = 20;
/// Largest `C(n, r)` accepted by [`check_general_position`].
pub const DEFAULT_GP_CAP: usize = 100_000;
/// Draw budget for [`sample_independent_rows`].
pub const DEFAULT_ROW_RETRIES: usize = 1000;

#[derive(Debug, Clone)]
pub struct StructureMatrix {
    entries: DMatrix<f64>,
    rank_tol: f64,
    abs_tol: f64,
    rank: usize,
    m_a: OnceLock<usize>,
    general_position: OnceLock<bool>,
}

impl StructureMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_rank_tol(entries, DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(entries: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("structure matrix must be nonempty"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("structure matrix has non-finite entries"));
        }
        if !(rank_tol >= 0.0) {
            return Err(Error::invalid("rank_tol must be nonnegative"));
        }
        let abs_tol = rank_tol * largest_singular_value(&entries);
        let rank = numerical_rank(&entries, abs_tol);
        Ok(Self {
            entries,
            rank_tol,
            abs_tol,
            rank,
            m_a: OnceLock::new(),
            general_position: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::dims("structure rows have unequal lengths"));
        }
        Self::new(DMatrix::from_fn(n, r, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is a valid structure")
    }

    /// Ambient dimension (row count).
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Latent dimension (column count).
    pub fn r(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Absolute singular-value threshold, `rank_tol · σ_max(A)`.
    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn has_full_column_rank(&self) -> bool {
        self.rank == self.r()
    }

    /// Rank of the submatrix formed by `rows`, judged on the scale of the whole matrix.
    pub fn rank_of_rows(&self, rows: &[usize]) -> usize {
        numerical_rank(&select_rows(&self.entries, rows), self.abs_tol)
    }

    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        select_rows(&self.entries, rows)
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.entries * z
    }

    /// Cached `m_A`. General-position matrices give `n − r + 1` directly;
    /// anything else is enumerated exactly up to [`DEFAULT_MA_CAP`] rows.
    pub fn m_a(&self) -> Result<usize> {
        if let Some(v) = self.m_a.get() {
            return Ok(*v);
        }
        let gp = matches!(self.is_general_position(), Ok(true));
        let value = if gp {
            self.n() - self.r() + 1
        } else if self.n() <= DEFAULT_MA_CAP {
            compute_m_a_exact(self, DEFAULT_MA_CAP)?
        } else {
            return Err(Error::SizeCap {
                what: "row count for exact m_A",
                size: self.n(),
                cap: DEFAULT_MA_CAP,
            });
        };
        Ok(*self.m_a.get_or_init(|| value))
    }

    /// Cached [`check_general_position`].
    pub fn is_general_position(&self) -> Result<bool> {
        if let Some(v) = self.general_position.get() {
            return Ok(*v);
        }
        let value = check_general_position(self)?;
        Ok(*self.general_position.get_or_init(|| value))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_rows(&io::read_dense_rows(file)?)
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let rows = self
            .entries
            .row_iter()
            .map(|row| row.iter().map(|&v| Some(v)).collect::<Vec<_>>());
        io::write_numeric_rows(file, rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub vectors: Vec<DVector<f64>>,
    pub orthonormal: bool,
}

impl SubspaceBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Basis vectors as the columns of an `ambient × len` matrix.
    pub fn to_matrix(&self, ambient: usize) -> DMatrix<f64> {
        DMatrix::from_fn(ambient, self.vectors.len(), |i, j| self.vectors[j][i])
    }
}

/// Number of singular values above `rank_tol · σ_max`.
pub fn rank(a: &StructureMatrix) -> usize {
    a.rank()
}

/// Smallest `k` such that deleting some `k` rows strictly reduces the row-space
/// dimension. Searches `k = 1, 2, …` over all row subsets.
pub fn compute_m_a_exact(a: &StructureMatrix, max_n: usize) -> Result<usize> {
    let n = a.n();
    if n > max_n {
        return Err(Error::SizeCap {
            what: "row count for exact m_A",
            size: n,
            cap: max_n,
        });
    }
    let full = a.rank();
    if full == 0 {
        return Err(Error::invalid("m_A is undefined for the zero matrix"));
    }
    for k in 1..=n {
        // rows left after deletion must hold the full rank, so k > n - full always reduces
        if n - k < full {
            return Ok(k);
        }
        let reduces = Combinations::new(n, k).any(|removed| {
            let kept = complement(n, &removed);
            a.rank_of_rows(&kept) < full
        });
        if reduces {
            return Ok(k);
        }
    }
    Ok(n)
}

/// True iff every `r`-subset of rows is linearly independent.
pub fn check_general_position(a: &StructureMatrix) -> Result<bool> {
    let (n, r) = (a.n(), a.r());
    if n < r || !a.has_full_column_rank() {
        return Ok(false);
    }
    let work = binomial(n, r);
    if work > DEFAULT_GP_CAP {
        return Err(Error::SizeCap {
            what: "row subsets for general-position check",
            size: work,
            cap: DEFAULT_GP_CAP,
        });
    }
    Ok(Combinations::new(n, r).all(|rows| a.rank_of_rows(&rows) == r))
}

/// Orthonormal basis of `ker(m)` with the default relative rank tolerance.
pub fn null_space_basis(m: &DMatrix<f64>) -> SubspaceBasis {
    null_space_basis_with_tol(m, DEFAULT_RANK_TOL)
}

pub fn null_space_basis_with_tol(m: &DMatrix<f64>, rank_tol: f64) -> SubspaceBasis {
    let cols = m.ncols();
    if cols == 0 {
        return SubspaceBasis {
            vectors: Vec::new(),
            orthonormal: true,
        };
    }
    // pad with zero rows so the SVD yields a complete right basis
    let rows = m.nrows().max(cols);
    let padded = DMatrix::from_fn(rows, cols, |i, j| if i < m.nrows() { m[(i, j)] } else { 0.0 });
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let threshold = rank_tol * smax;
    let vectors = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= threshold)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    SubspaceBasis {
        vectors,
        orthonormal: true,
    }
}

/// Draws `count` distinct rows uniformly among independent subsets by rejection.
pub fn sample_independent_rows<R: Rng + ?Sized>(
    a: &StructureMatrix,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    sample_independent_rows_with_budget(a, count, rng, DEFAULT_ROW_RETRIES)
}

pub fn sample_independent_rows_with_budget<R: Rng + ?Sized>(
    a: &StructureMatrix,
    count: usize,
    rng: &mut R,
    retries: usize,
) -> Result<Vec<usize>> {
    if count > a.rank() {
        return Err(Error::invalid(format!(
            "cannot pick {count} independent rows from a rank-{} matrix",
            a.rank()
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    for _ in 0..retries {
        let mut rows = rand::seq::index::sample(rng, a.n(), count).into_vec();
        rows.sort_unstable();
        if a.rank_of_rows(&rows) == count {
            return Ok(rows);
        }
    }
    Err(Error::Degenerate(retries))
}

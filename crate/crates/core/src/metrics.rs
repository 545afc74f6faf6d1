//! Estimation errors and distances between finite discrete distributions.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::min_cost_transport;
use crate::lp::LinearProgram;

pub const PROB_SUM_TOL: f64 = 1e-9;
pub const MARGINAL_TOL: f64 = 1e-8;
/// Cap on `|P|·|Q|` for `d_entry_1`.
pub const DEFAULT_ENTRY1_CELLS: usize = 10_000;
/// Cap on atoms per side for `d_entry_inf`.
pub const DEFAULT_ENTRY_INF_ATOMS: usize = 100;
pub const DEFAULT_DISC_CAP: usize = 20;
pub const RANGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<DVector<f64>>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<DVector<f64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("distribution needs at least one atom"));
        }
        if support.len() != probs.len() {
            return Err(Error::dims(format!(
                "{} atoms but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        let n = support[0].len();
        if n == 0 || support.iter().any(|x| x.len() != n) {
            return Err(Error::dims("atoms must share one positive dimension"));
        }
        if support.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("atoms must be finite"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        for i in 0..support.len() {
            for j in 0..i {
                if support[i] == support[j] {
                    return Err(Error::invalid(format!("atoms {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { support, probs })
    }

    /// Builds from row slices.
    pub fn from_rows(rows: &[Vec<f64>], probs: &[f64]) -> Result<Self> {
        Self::new(
            rows.iter().map(|r| DVector::from_column_slice(r)).collect(),
            probs.to_vec(),
        )
    }

    /// Uniform distribution over distinct atoms.
    pub fn uniform(rows: &[Vec<f64>]) -> Result<Self> {
        let p = 1.0 / rows.len().max(1) as f64;
        Self::from_rows(rows, &vec![p; rows.len()])
    }

    /// Point mass.
    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::from_rows(&[x.to_vec()], &[1.0])
    }

    pub fn support(&self) -> &[DVector<f64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    /// Probability of an atom, zero when absent.
    pub fn mass_at(&self, x: &DVector<f64>) -> f64 {
        self.support
            .iter()
            .position(|s| s == x)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Reads `x_1, …, x_n, prob` rows. A non-numeric first line is skipped as
    /// a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if r == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse {
                        row: r + 1,
                        col: 0,
                        msg: e.to_string(),
                    })
                }
            }
        }
        if rows.iter().any(|r| r.len() < 2) {
            return Err(Error::invalid("each row needs coordinates and a probability"));
        }
        let probs: Vec<f64> = rows.iter().map(|r| *r.last().unwrap()).collect();
        let atoms: Vec<Vec<f64>> = rows.iter().map(|r| r[..r.len() - 1].to_vec()).collect();
        Self::from_rows(&atoms, &probs)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Joint distribution with rows indexed by `P`'s atoms and columns by `Q`'s.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub matrix: DMatrix<f64>,
}

impl Coupling {
    /// Largest deviation of the marginals from `P` and `Q`.
    pub fn marginal_error(&self, p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
        let m = &self.matrix;
        if m.shape() != (p.len(), q.len()) {
            return f64::INFINITY;
        }
        let rows = (0..p.len()).map(|i| (m.row(i).sum() - p.probs[i]).abs());
        let cols = (0..q.len()).map(|j| (m.column(j).sum() - q.probs[j]).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    pub fn is_valid_for(&self, p: &DiscreteDistribution, q: &DiscreteDistribution) -> bool {
        self.matrix.iter().all(|&v| v >= -MARGINAL_TOL)
            && self.marginal_error(p, q) <= MARGINAL_TOL
    }
}

/// Optimal value of a coupling problem with its witness.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryDistance {
    pub value: f64,
    pub coupling: Coupling,
}

fn same_dim(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<usize> {
    if p.dim() != q.dim() {
        return Err(Error::dims(format!("dimensions {} and {}", p.dim(), q.dim())));
    }
    Ok(p.dim())
}

pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    same_dim(p, q)?;
    let mut total = 0.0;
    for (x, &px) in p.support.iter().zip(&p.probs) {
        total += (px - q.mass_at(x)).abs();
    }
    for (y, &qy) in q.support.iter().zip(&q.probs) {
        if p.mass_at(y) == 0.0 && !p.support.contains(y) {
            total += qy;
        }
    }
    Ok(0.5 * total)
}

fn disagreements(x: &DVector<f64>, y: &DVector<f64>) -> usize {
    x.iter().zip(y.iter()).filter(|(a, b)| a != b).count()
}

pub fn d_entry_1(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<EntryDistance> {
    d_entry_1_with_cap(p, q, DEFAULT_ENTRY1_CELLS)
}

/// Min-cost coupling under the averaged Hamming cost.
pub fn d_entry_1_with_cap(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    max_cells: usize,
) -> Result<EntryDistance> {
    let n = same_dim(p, q)?;
    let cells = p.len().saturating_mul(q.len());
    if cells > max_cells {
        return Err(Error::SizeCap {
            what: "coupling cells",
            size: cells,
            cap: max_cells,
        });
    }
    let cost: Vec<Vec<i64>> = p
        .support
        .iter()
        .map(|x| q.support.iter().map(|y| disagreements(x, y) as i64).collect())
        .collect();
    let (flow, total) = min_cost_transport(&p.probs, &q.probs, &cost);
    Ok(EntryDistance {
        value: (total / n as f64).max(0.0),
        coupling: Coupling { matrix: flow },
    })
}

pub fn d_entry_inf(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<EntryDistance> {
    d_entry_inf_with_cap(p, q, DEFAULT_ENTRY_INF_ATOMS)
}

/// Coupling minimising the worst per-coordinate disagreement probability.
pub fn d_entry_inf_with_cap(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    max_atoms: usize,
) -> Result<EntryDistance> {
    let n = same_dim(p, q)?;
    let (a, b) = (p.len(), q.len());
    if a.max(b) > max_atoms {
        return Err(Error::SizeCap {
            what: "atoms per side",
            size: a.max(b),
            cap: max_atoms,
        });
    }
    // variables: γ (row-major a×b), then t
    let nv = a * b + 1;
    let t = a * b;
    let mut cost = DVector::zeros(nv);
    cost[t] = 1.0;
    let mut a_eq = DMatrix::zeros(a + b, nv);
    let mut b_eq = DVector::zeros(a + b);
    let sp: f64 = p.probs.iter().sum();
    let sq: f64 = q.probs.iter().sum();
    for i in 0..a {
        for j in 0..b {
            a_eq[(i, i * b + j)] = 1.0;
            a_eq[(a + j, i * b + j)] = 1.0;
        }
        b_eq[i] = p.probs[i] / sp;
    }
    for j in 0..b {
        b_eq[a + j] = q.probs[j] / sq;
    }
    let mut a_ub = DMatrix::zeros(n, nv);
    for k in 0..n {
        for i in 0..a {
            for j in 0..b {
                if p.support[i][k] != q.support[j][k] {
                    a_ub[(k, i * b + j)] = 1.0;
                }
            }
        }
        a_ub[(k, t)] = -1.0;
    }
    let lp = LinearProgram {
        cost,
        a_eq,
        b_eq,
        a_ub,
        b_ub: DVector::zeros(n),
    };
    let sol = lp
        .solve()
        .map_err(|e| Error::Lp(format!("coupling program failed: {e}")))?;
    let matrix = DMatrix::from_fn(a, b, |i, j| sol.x[i * b + j]);
    // report the worst coordinate of the returned coupling itself
    let value = (0..n)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..a {
                for j in 0..b {
                    if p.support[i][k] != q.support[j][k] {
                        s += matrix[(i, j)];
                    }
                }
            }
            s
        })
        .fold(0.0, f64::max);
    Ok(EntryDistance {
        value,
        coupling: Coupling { matrix },
    })
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::dims(format!("matrix is {}×{}", m.nrows(), m.ncols())));
    }
    Ok(m.nrows())
}

/// Rescales to unit diagonal: `M_ij / √(M_ii M_jj)`.
pub fn scale_matrix(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(m)?;
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::invalid(format!("diagonal entry {i} is not positive")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            m[(i, j)] / (d[i] * d[j]).sqrt()
        }
    }))
}

/// `max √(xᵀ s(M) x)` over `x ∈ {−1, 1}ⁿ`, walked in Gray-code order.
pub fn disc(m: &DMatrix<f64>, n_cap: usize) -> Result<f64> {
    let n = check_square(m)?;
    if n > n_cap {
        return Err(Error::SizeCap {
            what: "disc dimension",
            size: n,
            cap: n_cap,
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let s = scale_matrix(m)?;
    // x and −x give the same value, so keep x_0 = 1
    let mut x = vec![1.0; n];
    let mut sx: Vec<f64> = (0..n).map(|i| s.row(i).sum()).collect();
    let mut q: f64 = sx.iter().sum();
    let mut best = q;
    let mut worst = q;
    let free = n - 1;
    for step in 1u64..(1u64 << free) {
        let k = 1 + step.trailing_zeros() as usize;
        let xk = x[k];
        q += -4.0 * xk * sx[k] + 4.0 * s[(k, k)];
        for i in 0..n {
            sx[i] -= 2.0 * xk * s[(i, k)];
        }
        x[k] = -xk;
        best = best.max(q);
        worst = worst.min(q);
    }
    if worst < -1e-9 * n as f64 {
        return Err(Error::NotPsd);
    }
    Ok(best.max(0.0).sqrt())
}

pub fn l2_error(mu_hat: &DVector<f64>, mu: &DVector<f64>) -> Result<f64> {
    if mu_hat.len() != mu.len() {
        return Err(Error::dims("vectors differ in length"));
    }
    Ok((mu_hat - mu).norm())
}

/// `√(dᵀ Σ⁺ d)` for `d = μ̂ − μ`, requiring `d ∈ range(Σ)` when Σ is singular.
pub fn mahalanobis_error(mu_hat: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let n = check_square(sigma)?;
    if mu_hat.len() != n || mu.len() != n {
        return Err(Error::dims("vectors differ from covariance size"));
    }
    let d = mu_hat - mu;
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&v| v < -1e-9 * lmax.max(1e-300)) {
        return Err(Error::NotPsd);
    }
    let cutoff = 1e-10 * lmax;
    let mut proj = DVector::zeros(n);
    let mut total = 0.0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            let u = eig.eigenvectors.column(k);
            let c = u.dot(&d);
            proj += u * c;
            total += c * c / lambda;
        }
    }
    let off = (&d - proj).norm();
    if off > RANGE_TOL * d.norm().max(1.0) {
        return Err(Error::OutsideRange(off));
    }
    Ok(total.sqrt())
}

//! Repairing corrupted samples with linear structure.
//!
//! Missing entries are handled by solving the visible-row system (known `A`)
//! or by iterative hard-thresholded SVD completion (unknown `A`). Replaced
//! entries are handled by minimising the Hamming residual `‖x̃ − A z‖₀`,
//! either exhaustively, by randomized row sampling, or through a parity-check
//! matrix and orthogonal matching pursuit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, Combinations};
use crate::corruption::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{entry_tol, lstsq, max_abs, numerical_rank, select_cols, select_rows, solve_square};
use crate::structure::{null_space_basis, sample_independent_rows, StructureMatrix};

/// Relative residual allowed on visible entries in [`impute_known_structure`].
pub const VISIBLE_RESIDUAL_TOL: f64 = 1e-6;
/// Per-entry tolerance (relative to `max(1, ‖x‖∞)`) for Hamming comparisons.
pub const HAMMING_TOL: f64 = 1e-8;
pub const DEFAULT_ITHSVD_MAX_ITER: usize = 500;
pub const DEFAULT_ITHSVD_TOL: f64 = 1e-9;
/// Relative singular-value floor for a sample to count as pinned down by the
/// learned subspace after completion.
pub const DEFAULT_LEARNED_RANK_TOL: f64 = 1e-6;
pub const DEFAULT_RANDOMIZED_C: f64 = 2.0;
pub const DEFAULT_BRUTEFORCE_WORK: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStatus {
    Recovered,
    Unchanged,
    Unrecoverable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutcome {
    pub status: RecoveryStatus,
    pub sample: Option<DVector<f64>>,
    /// `‖x̃ − A ẑ‖₀` for replacement recovery.
    pub residual_hamming: Option<usize>,
}

impl RecoveryOutcome {
    pub fn recovered(sample: DVector<f64>, residual_hamming: Option<usize>) -> Self {
        Self {
            status: RecoveryStatus::Recovered,
            sample: Some(sample),
            residual_hamming,
        }
    }

    pub fn unchanged(sample: DVector<f64>, residual_hamming: Option<usize>) -> Self {
        Self {
            status: RecoveryStatus::Unchanged,
            sample: Some(sample),
            residual_hamming,
        }
    }

    pub fn unrecoverable() -> Self {
        Self {
            status: RecoveryStatus::Unrecoverable,
            sample: None,
            residual_hamming: None,
        }
    }

    pub fn is_usable(&self) -> bool {
        self.status != RecoveryStatus::Unrecoverable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionReport {
    pub completed: Dataset,
    pub iterations: usize,
    pub converged: bool,
    pub recovered_indices: Vec<usize>,
    pub discarded_indices: Vec<usize>,
}

/// JSON view of a [`CompletionReport`] without the data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub recovered_indices: Vec<usize>,
    pub discarded_indices: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl CompletionReport {
    pub fn summary(&self) -> CompletionSummary {
        CompletionSummary {
            recovered_indices: self.recovered_indices.clone(),
            discarded_indices: self.discarded_indices.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }

    /// Completed samples with every discarded row removed.
    pub fn retained(&self) -> Dataset {
        let keep: Vec<usize> = (0..self.completed.n_samples())
            .filter(|i| self.discarded_indices.binary_search(i).is_err())
            .collect();
        self.completed.select_rows(&keep)
    }
}

fn hamming(x: &DVector<f64>, candidate: &DVector<f64>, tol: f64) -> usize {
    x.iter()
        .zip(candidate.iter())
        .filter(|(a, b)| (*a - *b).abs() > tol)
        .count()
}

fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Least-squares fit of `x` onto `range(A)`; returns the fit when every entry
/// is within `tol`.
fn in_range(a: &StructureMatrix, x: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let z = lstsq(a.entries(), x);
    let fit = a.apply(&z);
    (max_abs(&(x - &fit)) <= tol).then_some(fit)
}

/// Fills missing entries by solving the system formed by the visible rows.
pub fn impute_known_structure(x: &[Option<f64>], a: &StructureMatrix) -> Result<RecoveryOutcome> {
    if x.len() != a.n() {
        return Err(Error::dims(format!(
            "sample has length {}, structure has {} rows",
            x.len(),
            a.n()
        )));
    }
    let visible: Vec<usize> = (0..x.len()).filter(|&j| x[j].is_some()).collect();
    if visible.len() == x.len() {
        let full = DVector::from_iterator(x.len(), x.iter().map(|v| v.unwrap()));
        return Ok(RecoveryOutcome::unchanged(full, None));
    }
    if a.rank_of_rows(&visible) < a.rank() {
        return Ok(RecoveryOutcome::unrecoverable());
    }
    let sub = a.select_rows(&visible);
    let rhs = DVector::from_iterator(visible.len(), visible.iter().map(|&j| x[j].unwrap()));
    let z = lstsq(&sub, &rhs);
    let residual = (&sub * &z - &rhs).norm();
    let scale = rhs.norm();
    if residual > VISIBLE_RESIDUAL_TOL * scale && residual > 1e-12 {
        return Err(Error::Inconsistent { residual });
    }
    Ok(RecoveryOutcome::recovered(a.apply(&z), None))
}

/// Parameters of [`ithsvd_complete`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IthsvdOptions {
    pub target_rank: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Relative floor on the smallest singular value of the learned basis
    /// restricted to a sample's visible coordinates.
    pub learned_rank_tol: f64,
}

impl IthsvdOptions {
    pub fn new(target_rank: usize) -> Self {
        Self {
            target_rank,
            max_iter: DEFAULT_ITHSVD_MAX_ITER,
            tol: DEFAULT_ITHSVD_TOL,
            learned_rank_tol: DEFAULT_LEARNED_RANK_TOL,
        }
    }
}

/// Iterative hard-thresholded SVD completion with default post-completion checks.
pub fn ithsvd_complete(
    ds: &Dataset,
    target_rank: usize,
    max_iter: usize,
    tol: f64,
) -> Result<CompletionReport> {
    ithsvd_complete_with(
        ds,
        &IthsvdOptions {
            target_rank,
            max_iter,
            tol,
            learned_rank_tol: DEFAULT_LEARNED_RANK_TOL,
        },
    )
}

/// Matrix completion by alternating a rank-`k` SVD projection with
/// reinsertion of the observed entries.
///
/// Masked cells start at the coordinate medians of the visible entries.
/// Samples with fewer than `k` visible entries are discarded up front. After
/// the iteration, a sample whose visible coordinates do not determine its
/// position in the learned subspace is discarded as well. The others get
/// their masked cells from the least-squares fit of their visible entries in
/// that subspace, which is where the reinsertion step is heading anyway.
pub fn ithsvd_complete_with(ds: &Dataset, opts: &IthsvdOptions) -> Result<CompletionReport> {
    let k = opts.target_rank;
    if k == 0 {
        return Err(Error::invalid("target rank must be at least 1"));
    }
    let (big_n, n) = (ds.n_samples(), ds.dim());
    let incomplete: Vec<usize> = (0..big_n).filter(|&i| !ds.is_row_complete(i)).collect();
    if incomplete.is_empty() {
        return Ok(CompletionReport {
            completed: ds.clone(),
            iterations: 0,
            converged: true,
            recovered_indices: Vec::new(),
            discarded_indices: Vec::new(),
        });
    }

    let mut discarded: Vec<usize> = incomplete
        .iter()
        .copied()
        .filter(|&i| n - ds.missing_in_row(i) < k)
        .collect();
    let retained: Vec<usize> = (0..big_n)
        .filter(|i| discarded.binary_search(i).is_err())
        .collect();
    if retained.is_empty() {
        return Err(Error::AllDiscarded);
    }

    let sub = ds.select_rows(&retained);
    let mut x = sub.values().clone();
    for j in 0..n {
        let mut col = sub.visible_column(j);
        if col.is_empty() {
            return Err(Error::HiddenCoordinate(j));
        }
        let med = median_in_place(&mut col);
        for i in 0..sub.n_samples() {
            if sub.is_missing(i, j) {
                x[(i, j)] = med;
            }
        }
    }
    let masked: Vec<(usize, usize)> = (0..sub.n_samples())
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| sub.is_missing(i, j))
        .collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let basis = top_right_singular_vectors(&x, k);
        let projected = (&x * &basis) * basis.transpose();
        let mut change: f64 = 0.0;
        for &(i, j) in &masked {
            change = change.max((projected[(i, j)] - x[(i, j)]).abs());
            x[(i, j)] = projected[(i, j)];
        }
        if change <= opts.tol {
            converged = true;
            break;
        }
    }

    // samples not pinned down by the learned subspace are unrecoverable
    let basis = top_right_singular_vectors(&x, k);
    let mut completed = ds.clone();
    let mut recovered = Vec::new();
    for (local, &global) in retained.iter().enumerate() {
        if ds.is_row_complete(global) {
            continue;
        }
        let vis = sub.visible_coords(local);
        let restricted = select_rows(&basis, &vis);
        let sv = restricted.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if basis.ncols() > vis.len() || smin <= opts.learned_rank_tol * smax {
            discarded.push(global);
            continue;
        }
        // the fixed point of the masked-cell update for this basis
        let seen = DVector::from_iterator(vis.len(), vis.iter().map(|&j| x[(local, j)]));
        let coef = lstsq(&restricted, &seen);
        for j in 0..n {
            if ds.is_missing(global, j) {
                completed.set_value(global, j, basis.row(j).dot(&coef.transpose()));
            }
        }
        recovered.push(global);
    }
    discarded.sort_unstable();

    Ok(CompletionReport {
        completed,
        iterations,
        converged,
        recovered_indices: recovered,
        discarded_indices: discarded,
    })
}

/// `n × min(k, n)` matrix of leading right singular vectors of `x`.
fn top_right_singular_vectors(x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = x.ncols();
    if k >= n {
        return DMatrix::identity(n, n);
    }
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let keep = k.min(v_t.nrows());
    v_t.rows(0, keep).transpose()
}

pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Greedy certificate for the disjoint-group condition under which low-rank
/// completion is unique.
///
/// Builds `r + 1` disjoint groups of `n − r` samples. Each group starts from a
/// sample with at least `r + 1` visible coordinates and grows one sample at a
/// time, each new sample contributing a visible coordinate outside the
/// group's visible set. A `true` answer is a valid certificate; `false` may be
/// a false negative of the greedy search.
pub fn check_nowak_conditions(mask: &DMatrix<bool>, r: usize) -> bool {
    let (big_n, n) = mask.shape();
    if r >= n {
        return true;
    }
    let group_size = n - r;

    // identical hidden patterns are interchangeable; pool them
    let mut patterns: std::collections::BTreeMap<Vec<bool>, usize> = Default::default();
    for i in 0..big_n {
        *patterns.entry(mask.row(i).iter().copied().collect()).or_default() += 1;
    }
    let mut pools: Vec<(Vec<usize>, usize)> = patterns
        .into_iter()
        .map(|(pattern, count)| {
            let visible = (0..n).filter(|&j| !pattern[j]).collect::<Vec<_>>();
            (visible, count)
        })
        .collect();
    pools.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));

    for _ in 0..=r {
        let Some(start) = pools
            .iter()
            .position(|(vis, count)| *count > 0 && vis.len() > r)
        else {
            return false;
        };
        pools[start].1 -= 1;
        let mut covered = vec![false; n];
        for &j in pools[start].0.iter().take(r + 1) {
            covered[j] = true;
        }
        let mut size = 1;
        while size < group_size {
            let next = pools.iter().enumerate().find_map(|(p, (vis, count))| {
                if *count == 0 {
                    return None;
                }
                vis.iter().find(|&&j| !covered[j]).map(|&j| (p, j))
            });
            let Some((p, j)) = next else {
                return false;
            };
            pools[p].1 -= 1;
            covered[j] = true;
            size += 1;
        }
    }
    true
}

/// Best candidate found by the replacement searches, in coordinates of the
/// rows that were searched.
struct HammingSearch {
    z: DVector<f64>,
    candidate: DVector<f64>,
    hamming: usize,
}

impl HammingSearch {
    fn offer(best: &mut Option<HammingSearch>, z: DVector<f64>, candidate: DVector<f64>, h: usize) {
        let better = match best {
            None => true,
            Some(b) => h < b.hamming || (h == b.hamming && lex_less(&candidate, &b.candidate)),
        };
        if better {
            *best = Some(HammingSearch {
                z,
                candidate,
                hamming: h,
            });
        }
    }
}

/// Randomized minimisation of `‖x̃ − A z‖₀` by solving `⌈r^c⌉` square systems
/// on uniformly drawn independent row sets.
pub fn recover_replacement_randomized<R: Rng + ?Sized>(
    a: &StructureMatrix,
    x_tilde: &DVector<f64>,
    c: f64,
    rng: &mut R,
) -> Result<RecoveryOutcome> {
    if x_tilde.len() != a.n() {
        return Err(Error::dims("sample length differs from structure rows"));
    }
    if !(c > 0.0) {
        return Err(Error::invalid("c must be positive"));
    }
    let tol = entry_tol(x_tilde, HAMMING_TOL);
    if let Some(fit) = in_range(a, x_tilde, tol) {
        return Ok(RecoveryOutcome::unchanged(fit, Some(0)));
    }
    let r = a.rank();
    let iterations = (r as f64).powf(c).ceil().max(1.0) as usize;
    let mut best: Option<HammingSearch> = None;
    for _ in 0..iterations {
        let rows = sample_independent_rows(a, r, rng)?;
        let system = a.select_rows(&rows);
        let rhs = DVector::from_iterator(r, rows.iter().map(|&j| x_tilde[j]));
        let z = if r == a.r() {
            match solve_square(&system, &rhs) {
                Some(z) => z,
                None => continue,
            }
        } else {
            lstsq(&system, &rhs)
        };
        let candidate = a.apply(&z);
        let h = hamming(x_tilde, &candidate, tol);
        HammingSearch::offer(&mut best, z, candidate, h);
    }
    let best = best.ok_or(Error::Degenerate(iterations))?;
    Ok(RecoveryOutcome::recovered(best.candidate, Some(best.hamming)))
}

/// Result of the exhaustive replacement search.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveRecovery {
    pub outcome: RecoveryOutcome,
    /// Number of distinct reconstructions attaining the minimal Hamming residual.
    pub minimizers: usize,
}

impl ExhaustiveRecovery {
    pub fn is_unique(&self) -> bool {
        self.minimizers == 1
    }
}

/// Exhaustive minimisation of `‖x̃ − A z‖₀` over every independent `r`-subset
/// of rows. Exact whenever fewer than `m_A / 2` entries were replaced.
pub fn recover_replacement_bruteforce(
    a: &StructureMatrix,
    x_tilde: &DVector<f64>,
    max_work: usize,
) -> Result<ExhaustiveRecovery> {
    if x_tilde.len() != a.n() {
        return Err(Error::dims("sample length differs from structure rows"));
    }
    let (n, r) = (a.n(), a.rank());
    let work = binomial(n, r);
    if work > max_work {
        return Err(Error::SizeCap {
            what: "row subsets for exhaustive recovery",
            size: work,
            cap: max_work,
        });
    }
    let tol = entry_tol(x_tilde, HAMMING_TOL);
    let mut best: Option<HammingSearch> = None;
    let mut minimizers: Vec<DVector<f64>> = Vec::new();
    for rows in Combinations::new(n, r) {
        if a.rank_of_rows(&rows) < r {
            continue;
        }
        let system = a.select_rows(&rows);
        let rhs = DVector::from_iterator(r, rows.iter().map(|&j| x_tilde[j]));
        let z = lstsq(&system, &rhs);
        let candidate = a.apply(&z);
        let h = hamming(x_tilde, &candidate, tol);
        match best.as_ref().map(|b| b.hamming) {
            Some(bh) if h > bh => continue,
            Some(bh) if h == bh => {
                if !minimizers.iter().any(|m| max_abs(&(m - &candidate)) <= tol) {
                    minimizers.push(candidate.clone());
                }
            }
            _ => minimizers = vec![candidate.clone()],
        }
        HammingSearch::offer(&mut best, z, candidate, h);
    }
    let best = best.ok_or(Error::Degenerate(work))?;
    let outcome = if best.hamming == 0 {
        RecoveryOutcome::unchanged(best.candidate, Some(0))
    } else {
        RecoveryOutcome::recovered(best.candidate, Some(best.hamming))
    };
    let _ = best.z;
    Ok(ExhaustiveRecovery {
        outcome,
        minimizers: minimizers.len(),
    })
}

/// Random parity-check matrix `F` (p × n) with `F A = 0`.
///
/// Row `i` is `√(u_i / p) · v_iᵀ` with `v_i` uniform on the unit sphere of
/// `null(Aᵀ)` and `u_i ~ χ²_n`.
pub fn build_parity_check_gaussian<R: Rng + ?Sized>(
    a: &StructureMatrix,
    p: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = a.n();
    let kernel = null_space_basis(&a.entries().transpose());
    if p > kernel.len() {
        return Err(Error::invalid(format!(
            "p = {p} exceeds the kernel dimension {} of Aᵀ",
            kernel.len()
        )));
    }
    if p == 0 {
        return Ok(DMatrix::zeros(0, n));
    }
    let basis = kernel.to_matrix(n);
    let chi = ChiSquared::new(n as f64).map_err(|e| Error::invalid(e.to_string()))?;
    let mut f = DMatrix::zeros(p, n);
    for i in 0..p {
        let v = loop {
            let g = DVector::from_fn(kernel.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = g.norm();
            if norm > 1e-12 {
                break &basis * (g / norm);
            }
        };
        let u: f64 = chi.sample(rng);
        let scale = (u / p as f64).sqrt();
        f.set_row(i, &(v * scale).transpose());
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub estimate: DVector<f64>,
    pub support: Vec<usize>,
    /// `‖y − F e‖₂` before the first and after every iteration.
    pub residual_norms: Vec<f64>,
}

/// How OMP scores a column against the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmpSelection {
    /// `|F_iᵀ r| / ‖F_i‖`. Parity-check columns have unequal norms, and the
    /// raw score favours long columns over the true support.
    #[default]
    Normalized,
    /// `|F_iᵀ r|`.
    Raw,
}

/// Orthogonal matching pursuit with at most `k` greedy selections, scoring
/// columns by normalized correlation.
pub fn omp_sparse_recover(f: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<OmpResult> {
    omp_sparse_recover_with(f, y, k, OmpSelection::Normalized)
}

pub fn omp_sparse_recover_with(
    f: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    selection: OmpSelection,
) -> Result<OmpResult> {
    let (p, n) = f.shape();
    if y.len() != p {
        return Err(Error::dims("measurement length differs from F rows"));
    }
    if k > p {
        return Err(Error::invalid(format!("sparsity {k} exceeds measurement count {p}")));
    }
    let y_norm = y.norm();
    let mut estimate = DVector::zeros(n);
    let mut support: Vec<usize> = Vec::new();
    let mut residual = y.clone();
    let mut norms = vec![y_norm];
    let stop = 1e-12 * y_norm.max(f64::MIN_POSITIVE);
    for _ in 0..k {
        if residual.norm() <= stop {
            break;
        }
        let correlations = f.transpose() * &residual;
        let score = |j: usize| match selection {
            OmpSelection::Raw => correlations[j].abs(),
            OmpSelection::Normalized => {
                let norm = f.column(j).norm();
                if norm > 0.0 {
                    correlations[j].abs() / norm
                } else {
                    0.0
                }
            }
        };
        let pick = (0..n)
            .filter(|j| !support.contains(j))
            .max_by(|&a, &b| score(a).total_cmp(&score(b)).then(b.cmp(&a)));
        let Some(pick) = pick else { break };
        support.push(pick);
        let cols = select_cols(f, &support);
        let cols_scale = cols.singular_values().max();
        if numerical_rank(&cols, 1e-10 * cols_scale) < support.len() {
            return Err(Error::RankDeficientSupport);
        }
        let coef = lstsq(&cols, y);
        residual = y - &cols * &coef;
        estimate.fill(0.0);
        for (c, &j) in coef.iter().zip(&support) {
            estimate[j] = *c;
        }
        norms.push(residual.norm());
    }
    Ok(OmpResult {
        estimate,
        support,
        residual_norms: norms,
    })
}

/// Replacement recovery through sparse decoding of the error `e = x̃ − A z*`
/// from `y = F x̃ = F e`.
pub fn recover_via_sparse<R: Rng + ?Sized>(
    a: &StructureMatrix,
    x_tilde: &DVector<f64>,
    k: usize,
    p: usize,
    rng: &mut R,
) -> Result<RecoveryOutcome> {
    if x_tilde.len() != a.n() {
        return Err(Error::dims("sample length differs from structure rows"));
    }
    let f = build_parity_check_gaussian(a, p, rng)?;
    let y = &f * x_tilde;
    let omp = omp_sparse_recover(&f, &y, k)?;
    let tol = entry_tol(x_tilde, HAMMING_TOL);
    let nonzeros = omp.estimate.iter().filter(|v| v.abs() > tol).count();
    let candidate = x_tilde - &omp.estimate;
    let Some(fit) = in_range(a, &candidate, entry_tol(x_tilde, VISIBLE_RESIDUAL_TOL)) else {
        return Ok(RecoveryOutcome::unrecoverable());
    };
    // an error support of m_A/2 or more cannot be told apart from another point
    if let Ok(m_a) = a.m_a() {
        if 2 * nonzeros >= m_a {
            return Ok(RecoveryOutcome::unrecoverable());
        }
    }
    if nonzeros == 0 {
        Ok(RecoveryOutcome::unchanged(fit, Some(0)))
    } else {
        Ok(RecoveryOutcome::recovered(fit, Some(nonzeros)))
    }
}

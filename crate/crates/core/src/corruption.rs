//! Datasets with missing-entry masks and the three adversary families.
//!
//! Adversaries never mutate a dataset directly. Each planner returns a
//! [`CorruptionPlan`], an explicit list of cells, and [`apply_plan`] produces
//! the corrupted copy.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::Combinations;
use crate::error::{Error, Result};
use crate::io;
use crate::structure::StructureMatrix;

/// N samples × n coordinates with a missing mask (`true` = hidden).
///
/// Hidden cells hold `NaN`; every consumer reads them through [`Dataset::get`].
#[derive(Debug, Clone)]
pub struct Dataset {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self.values.shape() == other.values.shape()
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &m)| m || a.to_bits() == b.to_bits())
    }
}

impl Dataset {
    /// Fully visible dataset.
    pub fn new(values: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Self { values, mask }
    }

    pub fn with_mask(mut values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::dims(format!(
                "values {:?} vs mask {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        for (v, &m) in values.iter_mut().zip(mask.iter()) {
            if m {
                *v = f64::NAN;
            }
        }
        Ok(Self { values, mask })
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_samples = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != dim) {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: dim,
                found: row.len(),
            });
        }
        let values = DMatrix::from_fn(n_samples, dim, |i, j| rows[i][j].unwrap_or(f64::NAN));
        let mask = DMatrix::from_fn(n_samples, dim, |i, j| rows[i][j].is_none());
        Ok(Self { values, mask })
    }

    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let wrapped: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|r| r.iter().copied().map(Some).collect())
            .collect();
        Self::from_rows(&wrapped)
    }

    /// Sample count `N`.
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    /// Coordinate count `n`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn get(&self, sample: usize, coord: usize) -> Option<f64> {
        (!self.mask[(sample, coord)]).then(|| self.values[(sample, coord)])
    }

    pub fn is_missing(&self, sample: usize, coord: usize) -> bool {
        self.mask[(sample, coord)]
    }

    pub fn row(&self, sample: usize) -> Vec<Option<f64>> {
        (0..self.dim()).map(|j| self.get(sample, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<Option<f64>>> + '_ {
        (0..self.n_samples()).map(|i| self.row(i))
    }

    /// Row as a dense vector; only meaningful when the row is complete.
    pub fn dense_row(&self, sample: usize) -> DVector<f64> {
        self.values.row(sample).transpose()
    }

    pub fn missing_in_row(&self, sample: usize) -> usize {
        self.mask.row(sample).iter().filter(|&&m| m).count()
    }

    pub fn visible_coords(&self, sample: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&j| !self.mask[(sample, j)]).collect()
    }

    pub fn is_row_complete(&self, sample: usize) -> bool {
        self.missing_in_row(sample) == 0
    }

    pub fn is_complete(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Visible values of one coordinate, in sample order.
    pub fn visible_column(&self, coord: usize) -> Vec<f64> {
        (0..self.n_samples())
            .filter_map(|i| self.get(i, coord))
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let values = DMatrix::from_fn(rows.len(), self.dim(), |i, j| self.values[(rows[i], j)]);
        let mask = DMatrix::from_fn(rows.len(), self.dim(), |i, j| self.mask[(rows[i], j)]);
        Dataset { values, mask }
    }

    pub(crate) fn set_value(&mut self, sample: usize, coord: usize, value: f64) {
        self.values[(sample, coord)] = value;
        self.mask[(sample, coord)] = false;
    }

    pub(crate) fn hide(&mut self, sample: usize, coord: usize) {
        self.values[(sample, coord)] = f64::NAN;
        self.mask[(sample, coord)] = true;
    }

    /// Adds `shift[j]` to every visible entry of coordinate `j`.
    pub fn translated(&self, shift: &[f64]) -> Result<Dataset> {
        if shift.len() != self.dim() {
            return Err(Error::dims("shift length differs from dataset dimension"));
        }
        let mut out = self.clone();
        for i in 0..self.n_samples() {
            for (j, s) in shift.iter().enumerate() {
                if !self.mask[(i, j)] {
                    out.values[(i, j)] += s;
                }
            }
        }
        Ok(out)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_rows(&io::read_numeric_rows(file)?)
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        io::write_numeric_rows(file, self.rows())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// A1: whole samples, budget ε.
    SampleLevel,
    /// A2: per-coordinate value fraction, budget ρ.
    ValueFraction,
    /// A3: fraction of all cells, budget α.
    CoordinateFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub kind: AdversaryKind,
    pub value: f64,
}

impl Budget {
    pub fn new(kind: AdversaryKind, value: f64) -> Result<Self> {
        check_fraction("budget", value)?;
        Ok(Self { kind, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Hide,
    Replace(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub sample: usize,
    pub coord: usize,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionPlan {
    cells: Vec<Cell>,
    source: AdversaryKind,
}

impl CorruptionPlan {
    /// Rejects plans that touch the same cell twice.
    pub fn new(source: AdversaryKind, cells: Vec<Cell>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(cells.len());
        for c in &cells {
            if !seen.insert((c.sample, c.coord)) {
                return Err(Error::DuplicateCell {
                    sample: c.sample,
                    coord: c.coord,
                });
            }
        }
        Ok(Self { cells, source })
    }

    pub fn empty(source: AdversaryKind) -> Self {
        Self {
            cells: Vec::new(),
            source,
        }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn source(&self) -> AdversaryKind {
        self.source
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Distinct samples with at least one touched cell.
    pub fn touched_samples(&self) -> usize {
        self.cells
            .iter()
            .map(|c| c.sample)
            .collect::<HashSet<_>>()
            .len()
    }

    /// Touched cell count for sample `i` (the per-sample δ).
    pub fn cells_per_sample(&self, sample: usize) -> usize {
        self.cells.iter().filter(|c| c.sample == sample).count()
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["sample", "coord", "action", "value"])?;
        for c in &self.cells {
            let (action, value) = match c.action {
                Action::Hide => ("hide", String::new()),
                Action::Replace(v) => ("replace", v.to_string()),
            };
            wtr.write_record([&c.sample.to_string(), &c.coord.to_string(), action, &value])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv_path(path: impl AsRef<Path>, source: AdversaryKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut cells = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = r + 2;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let parse_idx = |c: usize| {
                field(c).parse::<usize>().map_err(|e| Error::Parse {
                    row,
                    col: c + 1,
                    msg: e.to_string(),
                })
            };
            let action = match field(2) {
                "hide" => Action::Hide,
                "replace" => Action::Replace(field(3).parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    col: 4,
                    msg: e.to_string(),
                })?),
                other => {
                    return Err(Error::Parse {
                        row,
                        col: 3,
                        msg: format!("unknown action {other:?}"),
                    })
                }
            };
            cells.push(Cell {
                sample: parse_idx(0)?,
                coord: parse_idx(1)?,
                action,
            });
        }
        Self::new(source, cells)
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// `⌊frac · total⌋`, absorbing representation error such as `0.3 · 10 = 3.0000000000000004`.
pub(crate) fn floor_count(frac: f64, total: usize) -> usize {
    let raw = frac * total as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() <= 1e-9 * raw.abs().max(1.0) {
        rounded
    } else {
        raw.floor()
    };
    (k.max(0.0) as usize).min(total)
}

/// Samples ordered by decreasing first coordinate (hidden counts as −∞), ties to lower index.
fn adaptive_order(ds: &Dataset) -> Vec<usize> {
    let key = |i: usize| {
        if ds.dim() == 0 {
            f64::NEG_INFINITY
        } else {
            ds.get(i, 0).unwrap_or(f64::NEG_INFINITY)
        }
    };
    let mut order: Vec<usize> = (0..ds.n_samples()).collect();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order
}

/// Visible samples of `coord` ordered by increasing value, ties to lower index.
fn ascending_in_coord(ds: &Dataset, coord: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| !ds.is_missing(i, coord))
        .collect();
    idx.sort_by(|&a, &b| {
        ds.values[(a, coord)]
            .total_cmp(&ds.values[(b, coord)])
            .then(a.cmp(&b))
    });
    idx
}

/// A1: replaces every coordinate of the `⌊ε·N⌋` samples with the largest first
/// coordinate by `value + shift`.
pub fn plan_a1(ds: &Dataset, epsilon: f64, shift: &[f64]) -> Result<CorruptionPlan> {
    check_fraction("epsilon", epsilon)?;
    if shift.len() != ds.dim() {
        return Err(Error::dims(format!(
            "shift has length {}, dataset dimension is {}",
            shift.len(),
            ds.dim()
        )));
    }
    let victims = floor_count(epsilon, ds.n_samples());
    let mut victims: Vec<usize> = adaptive_order(ds).into_iter().take(victims).collect();
    victims.sort_unstable();
    let cells = victims
        .into_iter()
        .flat_map(|i| {
            shift.iter().enumerate().map(move |(j, s)| Cell {
                sample: i,
                coord: j,
                action: Action::Replace(ds.get(i, j).unwrap_or(0.0) + s),
            })
        })
        .collect();
    CorruptionPlan::new(AdversaryKind::SampleLevel, cells)
}

/// A2 tail hiding: in every coordinate, hides the `⌊ρ·N⌋` smallest values.
pub fn plan_a2_tail_hiding(ds: &Dataset, rho: f64) -> Result<CorruptionPlan> {
    check_fraction("rho", rho)?;
    let k = floor_count(rho, ds.n_samples());
    let mut cells = Vec::new();
    for j in 0..ds.dim() {
        cells.extend(ascending_in_coord(ds, j).into_iter().take(k).map(|i| Cell {
            sample: i,
            coord: j,
            action: Action::Hide,
        }));
    }
    CorruptionPlan::new(AdversaryKind::ValueFraction, cells)
}

/// Coordinate with the largest empirical variance over visible entries.
pub fn highest_variance_coord(ds: &Dataset) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..ds.dim() {
        let col = ds.visible_column(j);
        if col.is_empty() {
            continue;
        }
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        if best.map_or(true, |(_, b)| var > b) {
            best = Some((j, var));
        }
    }
    best.map(|(j, _)| j)
}

/// A3 concentrated tail hiding: spends the whole `α·n·N` cell budget on the
/// smallest entries of the highest-variance coordinate.
pub fn plan_a3_concentrate(ds: &Dataset, alpha: f64) -> Result<CorruptionPlan> {
    check_fraction("alpha", alpha)?;
    let (big_n, n) = (ds.n_samples(), ds.dim());
    let k = floor_count(alpha, big_n * n).min(big_n);
    if k == 0 {
        return Ok(CorruptionPlan::empty(AdversaryKind::CoordinateFraction));
    }
    let Some(target) = highest_variance_coord(ds) else {
        return Ok(CorruptionPlan::empty(AdversaryKind::CoordinateFraction));
    };
    let cells = ascending_in_coord(ds, target)
        .into_iter()
        .take(k)
        .map(|i| Cell {
            sample: i,
            coord: target,
            action: Action::Hide,
        })
        .collect();
    CorruptionPlan::new(AdversaryKind::CoordinateFraction, cells)
}

/// A3 against structure: hides a random `m_A`-subset of coordinates in as many
/// samples as the budget allows, so none of them can be recovered.
pub fn plan_a3_unrecoverable<R: Rng + ?Sized>(
    ds: &Dataset,
    alpha: f64,
    m_a: usize,
    rng: &mut R,
) -> Result<CorruptionPlan> {
    check_fraction("alpha", alpha)?;
    let (big_n, n) = (ds.n_samples(), ds.dim());
    if m_a == 0 || m_a > n {
        return Err(Error::invalid(format!("m_A must lie in 1..={n}, got {m_a}")));
    }
    let victims = (floor_count(alpha, big_n * n) / m_a).min(big_n);
    let mut chosen: Vec<usize> = adaptive_order(ds).into_iter().take(victims).collect();
    chosen.sort_unstable();
    let mut cells = Vec::with_capacity(victims * m_a);
    for i in chosen {
        let mut coords = rand::seq::index::sample(rng, n, m_a).into_vec();
        coords.sort_unstable();
        cells.extend(coords.into_iter().map(|j| Cell {
            sample: i,
            coord: j,
            action: Action::Hide,
        }));
    }
    CorruptionPlan::new(AdversaryKind::CoordinateFraction, cells)
}

/// Like [`plan_a3_unrecoverable`], but redraws each victim's subset until the
/// visible rows of `a` lose rank. For general-position `a` the first draw always
/// qualifies, so the plan is identical to the unstructured one.
pub fn plan_a3_unrecoverable_for<R: Rng + ?Sized>(
    ds: &Dataset,
    alpha: f64,
    a: &StructureMatrix,
    rng: &mut R,
) -> Result<CorruptionPlan> {
    check_fraction("alpha", alpha)?;
    let (big_n, n) = (ds.n_samples(), ds.dim());
    if a.n() != n {
        return Err(Error::invalid(format!("structure has {} rows, data has {n} columns", a.n())));
    }
    let m_a = a.m_a()?;
    let full = a.rank();
    let breaks = |coords: &[usize]| {
        let vis: Vec<usize> = (0..n).filter(|j| !coords.contains(j)).collect();
        a.rank_of_rows(&vis) < full
    };
    let victims = (floor_count(alpha, big_n * n) / m_a).min(big_n);
    let mut chosen: Vec<usize> = adaptive_order(ds).into_iter().take(victims).collect();
    chosen.sort_unstable();
    let mut cells = Vec::with_capacity(victims * m_a);
    for i in chosen {
        let mut coords = rand::seq::index::sample(rng, n, m_a).into_vec();
        let mut tries = 1;
        while !breaks(&coords) {
            if tries == MAX_REDRAWS {
                // rare subsets: fall back to a uniform pick among all that work
                let all: Vec<Vec<usize>> = Combinations::new(n, m_a).filter(|c| breaks(c)).collect();
                coords = all[rng.random_range(0..all.len())].clone();
                break;
            }
            coords = rand::seq::index::sample(rng, n, m_a).into_vec();
            tries += 1;
        }
        coords.sort_unstable();
        cells.extend(coords.into_iter().map(|j| Cell {
            sample: i,
            coord: j,
            action: Action::Hide,
        }));
    }
    CorruptionPlan::new(AdversaryKind::CoordinateFraction, cells)
}

const MAX_REDRAWS: usize = 10_000;

pub fn apply_plan(ds: &Dataset, plan: &CorruptionPlan) -> Result<Dataset> {
    let mut out = ds.clone();
    for c in plan.cells() {
        if c.sample >= ds.n_samples() || c.coord >= ds.dim() {
            return Err(Error::OutOfBounds {
                sample: c.sample,
                coord: c.coord,
            });
        }
        match c.action {
            Action::Hide => out.hide(c.sample, c.coord),
            Action::Replace(v) => out.set_value(c.sample, c.coord, v),
        }
    }
    Ok(out)
}

/// Budget a plan consumes when charged to adversary `kind` on an `N × n` dataset.
pub fn budget_of_plan(plan: &CorruptionPlan, kind: AdversaryKind, n_samples: usize, dim: usize) -> f64 {
    if n_samples == 0 || dim == 0 {
        return 0.0;
    }
    match kind {
        AdversaryKind::SampleLevel => plan.touched_samples() as f64 / n_samples as f64,
        AdversaryKind::ValueFraction => {
            let mut per_coord = vec![0usize; dim];
            for c in plan.cells() {
                if c.coord < dim {
                    per_coord[c.coord] += 1;
                }
            }
            per_coord.into_iter().max().unwrap_or(0) as f64 / n_samples as f64
        }
        AdversaryKind::CoordinateFraction => plan.len() as f64 / (n_samples * dim) as f64,
    }
}

/// True when adversary `a` is known to be able to perform every corruption of `b`.
pub fn can_simulate(a: Budget, b: Budget, dim: usize) -> bool {
    use AdversaryKind::*;
    let n = dim as f64;
    // budgets are decimal fractions, so compare with a relative slack
    let leq = |x: f64, y: f64| x <= y + 1e-12 * x.abs().max(y.abs()).max(1.0);
    match (a.kind, b.kind) {
        (x, y) if x == y => leq(b.value, a.value),
        (SampleLevel, ValueFraction | CoordinateFraction) => leq(b.value * n, a.value),
        (ValueFraction, CoordinateFraction) => leq(b.value * n, a.value),
        (ValueFraction | CoordinateFraction, SampleLevel) => leq(b.value, a.value),
        (CoordinateFraction, ValueFraction) => leq(b.value, a.value),
        _ => false,
    }
}

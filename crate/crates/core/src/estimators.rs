//! Mean estimators for datasets with missing entries.
//!
//! The baselines work coordinate by coordinate on visible entries. The
//! two-step estimator first repairs samples with a recovery method, drops the
//! ones it cannot repair, and hands the rest to an inner estimator.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corruption::Dataset;
use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::recovery::{
    impute_known_structure, ithsvd_complete_with, recover_replacement_bruteforce,
    recover_replacement_randomized, recover_via_sparse, IthsvdOptions, RecoveryOutcome,
    RecoveryStatus, DEFAULT_BRUTEFORCE_WORK, DEFAULT_ITHSVD_MAX_ITER, DEFAULT_ITHSVD_TOL,
    DEFAULT_LEARNED_RANK_TOL, DEFAULT_RANDOMIZED_C,
};
use crate::structure::StructureMatrix;

pub const DEFAULT_TUKEY_DIM_CAP: usize = 2;
/// Sample cap for the 2-D Tukey median; the candidate set grows like `N⁴`.
pub const DEFAULT_TUKEY_MAX_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    EmpiricalMean,
    CoordinateMedian,
    SanitizedMean,
    TukeyMedianSmall,
    TwoStep,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EmpiricalMean => "empirical_mean",
            Self::CoordinateMedian => "coordinate_median",
            Self::SanitizedMean => "sanitized_mean",
            Self::TukeyMedianSmall => "tukey_median_small",
            Self::TwoStep => "two_step",
        }
    }
}

fn default_c() -> f64 {
    DEFAULT_RANDOMIZED_C
}

fn default_work() -> usize {
    DEFAULT_BRUTEFORCE_WORK
}

/// Recovery stage of a two-step estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RecoverySpec {
    /// Per-sample least squares on the visible rows of a known `A`.
    KnownStructure,
    /// Matrix completion; `rank` falls back to the caller's default.
    Ithsvd {
        #[serde(default)]
        rank: Option<usize>,
        #[serde(default)]
        max_iter: Option<usize>,
        #[serde(default)]
        tol: Option<f64>,
    },
    ReplacementRandomized {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default)]
        seed: u64,
    },
    ReplacementBruteforce {
        #[serde(default = "default_work")]
        max_work: usize,
    },
    Sparse {
        k: usize,
        p: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl RecoverySpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::KnownStructure => "known_structure",
            Self::Ithsvd { .. } => "ithsvd",
            Self::ReplacementRandomized { .. } => "replacement_randomized",
            Self::ReplacementBruteforce { .. } => "replacement_bruteforce",
            Self::Sparse { .. } => "sparse",
        }
    }

    pub fn needs_structure(&self) -> bool {
        !matches!(self, Self::Ithsvd { .. })
    }

    fn seed(&self) -> u64 {
        match self {
            Self::ReplacementRandomized { seed, .. } | Self::Sparse { seed, .. } => *seed,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoverySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<EstimatorKind>,
    /// Label used in result files; derived from the other fields when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl EstimatorSpec {
    pub fn baseline(kind: EstimatorKind) -> Self {
        Self {
            kind,
            recovery: None,
            inner: None,
            name: None,
        }
    }

    pub fn two_step(recovery: RecoverySpec, inner: EstimatorKind) -> Self {
        Self {
            kind: EstimatorKind::TwoStep,
            recovery: Some(recovery),
            inner: Some(inner),
            name: None,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.recovery, self.inner) {
            (EstimatorKind::TwoStep, Some(_), Some(inner)) => {
                if inner == EstimatorKind::TwoStep {
                    return Err(Error::Config("two-step estimators cannot nest".into()));
                }
                Ok(())
            }
            (EstimatorKind::TwoStep, _, _) => Err(Error::Config(
                "two_step needs both `recovery` and `inner`".into(),
            )),
            (_, None, None) => Ok(()),
            (kind, _, _) => Err(Error::Config(format!(
                "{} takes neither `recovery` nor `inner`",
                kind.as_str()
            ))),
        }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match (&self.recovery, self.inner) {
            (Some(rec), Some(inner)) => format!("two_step[{}]/{}", rec.label(), inner.as_str()),
            _ => self.kind.as_str().to_string(),
        }
    }
}

/// Mean of visible entries, per coordinate.
pub fn empirical_mean(ds: &Dataset) -> Result<DVector<f64>> {
    let n = ds.dim();
    let mut out = DVector::zeros(n);
    for j in 0..n {
        let col = ds.visible_column(j);
        if col.is_empty() {
            return Err(Error::HiddenCoordinate(j));
        }
        out[j] = col.iter().sum::<f64>() / col.len() as f64;
    }
    Ok(out)
}

/// Median of visible entries, per coordinate; even counts average the middle pair.
pub fn coordinate_median(ds: &Dataset) -> Result<DVector<f64>> {
    let n = ds.dim();
    let mut out = DVector::zeros(n);
    for j in 0..n {
        let mut col = ds.visible_column(j);
        if col.is_empty() {
            return Err(Error::HiddenCoordinate(j));
        }
        out[j] = crate::recovery::median_in_place(&mut col);
    }
    Ok(out)
}

/// Mean over the samples with no masked entries.
pub fn sanitized_mean(ds: &Dataset) -> Result<DVector<f64>> {
    let clean: Vec<usize> = (0..ds.n_samples()).filter(|&i| ds.is_row_complete(i)).collect();
    if clean.is_empty() {
        return Err(Error::NoCleanSamples);
    }
    empirical_mean(&ds.select_rows(&clean))
}

pub fn tukey_median_small(ds: &Dataset, dim_cap: usize) -> Result<DVector<f64>> {
    tukey_median_small_with(ds, dim_cap, DEFAULT_TUKEY_MAX_SAMPLES)
}

/// Depth-maximising point for `n ≤ 2`. In one dimension this is the median;
/// in two, depth is evaluated at every sample and every intersection of lines
/// through sample pairs, with ties broken towards the lexicographically
/// smallest point.
pub fn tukey_median_small_with(ds: &Dataset, dim_cap: usize, max_samples: usize) -> Result<DVector<f64>> {
    let n = ds.dim();
    if n > dim_cap || n > 2 {
        return Err(Error::SizeCap {
            what: "dimension for Tukey median",
            size: n,
            cap: dim_cap.min(2),
        });
    }
    if !ds.is_complete() {
        return Err(Error::MaskedEntries);
    }
    if ds.n_samples() == 0 {
        return Err(Error::HiddenCoordinate(0));
    }
    if n == 1 {
        return coordinate_median(ds);
    }
    if ds.n_samples() > max_samples {
        return Err(Error::SizeCap {
            what: "samples for 2-D Tukey median",
            size: ds.n_samples(),
            cap: max_samples,
        });
    }
    let points: Vec<[f64; 2]> = (0..ds.n_samples())
        .map(|i| [ds.values()[(i, 0)], ds.values()[(i, 1)]])
        .collect();
    let mut best: Option<([f64; 2], usize)> = None;
    for c in tukey_candidates(&points) {
        let d = tukey_depth(&points, c);
        let better = match best {
            None => true,
            Some((b, bd)) => d > bd || (d == bd && (c[0], c[1]) < (b[0], b[1])),
        };
        if better {
            best = Some((c, d));
        }
    }
    let (p, _) = best.expect("at least one sample");
    Ok(DVector::from_vec(p.to_vec()))
}

fn tukey_candidates(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = points.to_vec();
    let mut lines = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[i] != points[j] {
                lines.push((points[i], points[j]));
            }
        }
    }
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            if let Some(p) = intersect(lines[a], lines[b]) {
                out.push(p);
            }
        }
    }
    out
}

fn intersect((p1, p2): ([f64; 2], [f64; 2]), (q1, q2): ([f64; 2], [f64; 2])) -> Option<[f64; 2]> {
    let d1 = [p2[0] - p1[0], p2[1] - p1[1]];
    let d2 = [q2[0] - q1[0], q2[1] - q1[1]];
    let cross = d1[0] * d2[1] - d1[1] * d2[0];
    let scale = (d1[0].hypot(d1[1])) * (d2[0].hypot(d2[1]));
    if cross.abs() <= 1e-12 * scale {
        return None;
    }
    let w = [q1[0] - p1[0], q1[1] - p1[1]];
    let t = (w[0] * d2[1] - w[1] * d2[0]) / cross;
    Some([p1[0] + t * d1[0], p1[1] + t * d1[1]])
}

/// Halfspace depth of `theta` as a count: the fewest samples in any closed
/// halfplane whose boundary passes through `theta`.
pub fn tukey_depth(points: &[[f64; 2]], theta: [f64; 2]) -> usize {
    use std::f64::consts::{FRAC_PI_2, PI, TAU};
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(theta[0].abs().max(theta[1].abs()), |a, &v| a.max(v.abs()))
        .max(1.0);
    let mut coincident = 0;
    let mut angles = Vec::with_capacity(points.len());
    for p in points {
        let (dx, dy) = (p[0] - theta[0], p[1] - theta[1]);
        if dx.hypot(dy) <= 1e-12 * scale {
            coincident += 1;
        } else {
            angles.push(dy.atan2(dx));
        }
    }
    if angles.is_empty() {
        return coincident;
    }
    // the count only changes at φ ± π/2, so test the middle of each gap
    let mut critical: Vec<f64> = angles
        .iter()
        .flat_map(|&a| [a + FRAC_PI_2, a - FRAC_PI_2])
        .map(|a| a.rem_euclid(TAU))
        .collect();
    critical.sort_by(f64::total_cmp);
    critical.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let mut best = usize::MAX;
    for k in 0..critical.len() {
        let next = if k + 1 < critical.len() {
            critical[k + 1]
        } else {
            critical[0] + TAU
        };
        let psi = 0.5 * (critical[k] + next);
        let inside = angles
            .iter()
            .filter(|&&a| {
                let diff = (a - psi + PI).rem_euclid(TAU) - PI;
                diff.abs() < FRAC_PI_2
            })
            .count();
        best = best.min(inside);
    }
    coincident + best
}

/// Recovered samples and the indices of those that were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredData {
    pub dataset: Dataset,
    pub kept_indices: Vec<usize>,
    pub discarded_indices: Vec<usize>,
}

/// Options that the caller supplies to a recovery stage.
#[derive(Debug, Clone, Copy)]
pub struct RecoveryContext<'a> {
    pub structure: Option<&'a StructureMatrix>,
    /// Rank used by matrix completion when the method leaves it unset.
    pub default_rank: Option<usize>,
    /// Overrides the seed stored in randomized specs.
    pub seed: Option<u64>,
}

impl<'a> RecoveryContext<'a> {
    pub fn known(a: &'a StructureMatrix) -> Self {
        Self {
            structure: Some(a),
            default_rank: Some(a.r()),
            seed: None,
        }
    }

    pub fn unknown(rank: usize) -> Self {
        Self {
            structure: None,
            default_rank: Some(rank),
            seed: None,
        }
    }
}

/// Runs the recovery stage of a two-step estimator and drops unrecoverable samples.
pub fn recover_dataset(ds: &Dataset, spec: &RecoverySpec, ctx: RecoveryContext<'_>) -> Result<RecoveredData> {
    if let RecoverySpec::Ithsvd { rank, max_iter, tol } = spec {
        let target_rank = rank
            .or(ctx.default_rank)
            .or(ctx.structure.map(StructureMatrix::r))
            .ok_or_else(|| Error::Config("ithsvd needs a rank".into()))?;
        let opts = IthsvdOptions {
            target_rank,
            max_iter: max_iter.unwrap_or(DEFAULT_ITHSVD_MAX_ITER),
            tol: tol.unwrap_or(DEFAULT_ITHSVD_TOL),
            learned_rank_tol: DEFAULT_LEARNED_RANK_TOL,
        };
        let report = ithsvd_complete_with(ds, &opts)?;
        let kept: Vec<usize> = (0..ds.n_samples())
            .filter(|i| report.discarded_indices.binary_search(i).is_err())
            .collect();
        if kept.is_empty() {
            return Err(Error::AllDiscarded);
        }
        return Ok(RecoveredData {
            dataset: report.completed.select_rows(&kept),
            kept_indices: kept,
            discarded_indices: report.discarded_indices,
        });
    }

    let a = ctx
        .structure
        .ok_or_else(|| Error::Config(format!("{} recovery needs a structure matrix", spec.label())))?;
    if a.n() != ds.dim() {
        return Err(Error::dims(format!(
            "structure has {} rows, samples have {} coordinates",
            a.n(),
            ds.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.unwrap_or_else(|| spec.seed()));
    // keep recovery draws apart from data drawn with the same seed
    rng.set_stream(2);
    let mut sub_cache: HashMap<Vec<usize>, Option<StructureMatrix>> = HashMap::new();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for i in 0..ds.n_samples() {
        let outcome = match spec {
            RecoverySpec::KnownStructure => match impute_known_structure(&ds.row(i), a) {
                Ok(o) => o,
                // visible entries that no latent explains: treat as corrupted beyond repair
                Err(Error::Inconsistent { .. }) => RecoveryOutcome::unrecoverable(),
                Err(e) => return Err(e),
            },
            _ => replacement_on_visible(ds, i, a, spec, &mut sub_cache, &mut rng)?,
        };
        match (outcome.status, outcome.sample) {
            (RecoveryStatus::Unrecoverable, _) | (_, None) => discarded.push(i),
            (_, Some(x)) => {
                rows.push(x);
                kept.push(i);
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::AllDiscarded);
    }
    let values = DMatrix::from_fn(rows.len(), ds.dim(), |i, j| rows[i][j]);
    Ok(RecoveredData {
        dataset: Dataset::new(values),
        kept_indices: kept,
        discarded_indices: discarded,
    })
}

/// Replacement recovery restricted to the visible coordinates of sample `i`.
/// Reconstructions that explain fewer than half of the sub-structure's
/// redundancy are kept; the rest are marked unrecoverable.
fn replacement_on_visible(
    ds: &Dataset,
    i: usize,
    a: &StructureMatrix,
    spec: &RecoverySpec,
    cache: &mut HashMap<Vec<usize>, Option<StructureMatrix>>,
    rng: &mut ChaCha8Rng,
) -> Result<RecoveryOutcome> {
    let visible = ds.visible_coords(i);
    let full = visible.len() == a.n();
    let sub = if full {
        None
    } else {
        if !cache.contains_key(&visible) {
            let s = if a.rank_of_rows(&visible) < a.rank() {
                None
            } else {
                Some(StructureMatrix::new(a.select_rows(&visible))?)
            };
            cache.insert(visible.clone(), s);
        }
        match &cache[&visible] {
            None => return Ok(RecoveryOutcome::unrecoverable()),
            some => some.as_ref(),
        }
    };
    let target = sub.unwrap_or(a);
    let x = DVector::from_iterator(visible.len(), visible.iter().map(|&j| ds.values()[(i, j)]));
    let outcome = match spec {
        RecoverySpec::ReplacementRandomized { c, .. } => recover_replacement_randomized(target, &x, *c, rng)?,
        RecoverySpec::ReplacementBruteforce { max_work } => {
            recover_replacement_bruteforce(target, &x, *max_work)?.outcome
        }
        RecoverySpec::Sparse { k, p, .. } => {
            let p = (*p).min(target.n().saturating_sub(target.rank()));
            let k = (*k).min(p);
            recover_via_sparse(target, &x, k, p, rng)?
        }
        _ => unreachable!("handled by the caller"),
    };
    let Some(candidate) = outcome.sample.clone() else {
        return Ok(outcome);
    };
    if let Some(h) = outcome.residual_hamming {
        let m = target.m_a()?;
        if 2 * h >= m {
            return Ok(RecoveryOutcome::unrecoverable());
        }
    }
    if full {
        return Ok(outcome);
    }
    let z = lstsq(target.entries(), &candidate);
    Ok(RecoveryOutcome {
        status: RecoveryStatus::Recovered,
        sample: Some(a.apply(&z)),
        residual_hamming: outcome.residual_hamming,
    })
}

fn baseline(ds: &Dataset, kind: EstimatorKind) -> Result<DVector<f64>> {
    match kind {
        EstimatorKind::EmpiricalMean => empirical_mean(ds),
        EstimatorKind::CoordinateMedian => coordinate_median(ds),
        EstimatorKind::SanitizedMean => sanitized_mean(ds),
        EstimatorKind::TukeyMedianSmall => tukey_median_small(ds, DEFAULT_TUKEY_DIM_CAP),
        EstimatorKind::TwoStep => Err(Error::Config("two_step is not a baseline".into())),
    }
}

/// Recover, discard, then estimate with the inner estimator.
pub fn two_step_estimate(ds: &Dataset, a: Option<&StructureMatrix>, spec: &EstimatorSpec) -> Result<DVector<f64>> {
    let ctx = RecoveryContext {
        structure: a,
        default_rank: a.map(StructureMatrix::r),
        seed: None,
    };
    two_step_estimate_with(ds, spec, ctx)
}

pub fn two_step_estimate_with(ds: &Dataset, spec: &EstimatorSpec, ctx: RecoveryContext<'_>) -> Result<DVector<f64>> {
    spec.validate()?;
    let (Some(recovery), Some(inner)) = (&spec.recovery, spec.inner) else {
        return Err(Error::Config("two_step_estimate needs a two_step spec".into()));
    };
    let recovered = recover_dataset(ds, recovery, ctx)?;
    baseline(&recovered.dataset, inner)
}

/// Dispatches on `spec.kind`.
pub fn estimate(ds: &Dataset, spec: &EstimatorSpec, ctx: RecoveryContext<'_>) -> Result<DVector<f64>> {
    spec.validate()?;
    match spec.kind {
        EstimatorKind::TwoStep => two_step_estimate_with(ds, spec, ctx),
        kind => baseline(ds, kind),
    }
}

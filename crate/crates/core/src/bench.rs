//! Corruption sweeps: generate or load data, corrupt it at each budget, run
//! every estimator and score it against the reference mean.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruption::{
    apply_plan, plan_a1, plan_a2_tail_hiding, plan_a3_concentrate, plan_a3_unrecoverable_for,
    AdversaryKind, CorruptionPlan, Dataset,
};
use crate::datagen::{gen_dataset, gen_latents, gen_structure, population_covariance, true_mean, LatentSpec, StructureSpec};
use crate::error::{Error, Result};
use crate::estimators::{empirical_mean, estimate, EstimatorSpec, RecoveryContext, RecoverySpec};
use crate::metrics::{l2_error, mahalanobis_error};
use crate::structure::StructureMatrix;

/// Marker written for failed estimates.
pub const MISSING: &str = "NA";
/// A1 replacement offset per coordinate when the config gives none.
pub const DEFAULT_SHIFT: f64 = 10.0;
pub const RESULTS_HEADER: [&str; 5] = ["method", "budget", "trial", "metric", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        structure: StructureSpec,
        latent: LatentSpec,
        n_samples: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        standardize: bool,
        /// Structure matrix CSV for methods that need a known `A`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        structure: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// A1: shift the samples with the largest first coordinate.
    Shift,
    /// A2: hide the smallest values of every coordinate.
    TailHiding,
    /// A3: hide the smallest values of the highest-variance coordinate.
    Concentrate,
    /// A3: hide `m_A` random coordinates of as many samples as possible.
    Unrecoverable,
}

impl Strategy {
    pub fn default_for(kind: AdversaryKind) -> Self {
        match kind {
            AdversaryKind::SampleLevel => Self::Shift,
            AdversaryKind::ValueFraction => Self::TailHiding,
            AdversaryKind::CoordinateFraction => Self::Concentrate,
        }
    }

    /// Adversary whose budget the strategy spends.
    pub fn kind(self) -> AdversaryKind {
        match self {
            Self::Shift => AdversaryKind::SampleLevel,
            Self::TailHiding => AdversaryKind::ValueFraction,
            Self::Concentrate | Self::Unrecoverable => AdversaryKind::CoordinateFraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub budgets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    /// Per-coordinate shift for A1; a single value is broadcast.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<f64>>,
}

impl AdversaryConfig {
    pub fn strategy(&self) -> Strategy {
        self.strategy.unwrap_or_else(|| Strategy::default_for(self.kind))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    Mahalanobis,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::L2 => "l2",
            Self::Mahalanobis => "mahalanobis",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Self::L2),
            "mahalanobis" => Ok(Self::Mahalanobis),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub adversary: AdversaryConfig,
    pub methods: Vec<EstimatorSpec>,
    pub metrics: Vec<Metric>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Completion rank for matrix-completion methods that do not set one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ithsvd_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Synthetic sweep on a 16×8 two-block structure with `N = 1000` Gaussian
    /// latents and tail hiding at 5–20 %, averaged over five trials.
    pub fn synthetic_default(seed: u64) -> Self {
        Self {
            seed,
            data: DataSource::Synthetic {
                structure: StructureSpec::two_blocks(seed),
                latent: LatentSpec::standard(crate::datagen::LatentKind::Gaussian, 8),
                n_samples: 1000,
            },
            adversary: AdversaryConfig {
                kind: AdversaryKind::ValueFraction,
                budgets: vec![0.05, 0.10, 0.15, 0.20],
                strategy: Some(Strategy::TailHiding),
                shift: None,
            },
            methods: vec![
                EstimatorSpec::baseline(crate::estimators::EstimatorKind::EmpiricalMean),
                EstimatorSpec::two_step(
                    RecoverySpec::KnownStructure,
                    crate::estimators::EstimatorKind::EmpiricalMean,
                ),
            ],
            metrics: vec![Metric::L2],
            trials: 5,
            ithsvd_rank: Some(8),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let b = &self.adversary.budgets;
        if b.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("budgets must lie in [0, 1]".into()));
        }
        if b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("budgets must be strictly increasing".into()));
        }
        if self.adversary.strategy().kind() != self.adversary.kind {
            return Err(Error::Config(format!(
                "strategy {:?} does not belong to adversary {:?}",
                self.adversary.strategy(),
                self.adversary.kind
            )));
        }
        let mut labels = std::collections::HashSet::new();
        for m in &self.methods {
            m.validate()?;
            if !labels.insert(m.label()) {
                return Err(Error::Config(format!("duplicate method label {:?}", m.label())));
            }
            if let Some(RecoverySpec::Ithsvd { rank: None, .. }) = &m.recovery {
                if self.ithsvd_rank.is_none() {
                    return Err(Error::Config(format!("{} needs `ithsvd_rank`", m.label())));
                }
            }
            if let Some(rec) = &m.recovery {
                if rec.needs_structure() && !self.has_structure() {
                    return Err(Error::Config(format!("{} needs a structure matrix", m.label())));
                }
            }
        }
        if self.ithsvd_rank == Some(0) {
            return Err(Error::Config("ithsvd_rank must be positive".into()));
        }
        if self.adversary.strategy() == Strategy::Unrecoverable && !self.has_structure() {
            return Err(Error::Config("unrecoverable strategy needs a structure matrix".into()));
        }
        if let DataSource::Synthetic {
            structure,
            latent,
            n_samples,
        } = &self.data
        {
            latent.validate()?;
            if *n_samples == 0 {
                return Err(Error::Config("n_samples must be positive".into()));
            }
            if latent.r != structure.r {
                return Err(Error::Config("latent r differs from structure r".into()));
            }
        }
        Ok(())
    }

    fn has_structure(&self) -> bool {
        match &self.data {
            DataSource::Synthetic { .. } => true,
            DataSource::Csv { structure, .. } => structure.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub budget: f64,
    pub trial: usize,
    pub metric: Metric,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub method: String,
    pub budget: f64,
    pub metric: Metric,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub count: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryEntry>,
    pub config: ExperimentConfig,
}

impl ExperimentResult {
    pub fn mean_of(&self, method: &str, budget: f64, metric: Metric) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.budget == budget && s.metric == metric)
            .and_then(|s| s.mean)
    }
}

/// Reads a numeric CSV (empty cells are masked), optionally standardising
/// each coordinate to visible mean 0 and population standard deviation 1.
/// Constant coordinates are only centred.
pub fn ingest_csv(path: impl AsRef<Path>, standardize: bool) -> Result<Dataset> {
    let ds = Dataset::from_csv_path(path)?;
    Ok(if standardize { standardized(&ds) } else { ds })
}

pub fn standardized(ds: &Dataset) -> Dataset {
    let mut values = ds.values().clone();
    for j in 0..ds.dim() {
        let col = ds.visible_column(j);
        if col.is_empty() {
            continue;
        }
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
        let sd = var.sqrt();
        for i in 0..ds.n_samples() {
            let v = (values[(i, j)] - m) / if sd > 0.0 { sd } else { 1.0 };
            values[(i, j)] = v;
        }
    }
    Dataset::with_mask(values, ds.mask().clone()).expect("shape is unchanged")
}

/// Empirical mean of the uncorrupted data.
pub fn reference_mean(ds: &Dataset) -> Result<DVector<f64>> {
    empirical_mean(ds)
}

fn empirical_covariance(ds: &Dataset) -> DMatrix<f64> {
    let x = ds.values();
    let n = x.nrows().max(1) as f64;
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j]);
    centered.transpose() * centered / n
}

/// Data shared by every trial.
struct Prepared {
    structure: Option<StructureMatrix>,
    /// Fixed dataset for CSV sources.
    fixed: Option<Dataset>,
    /// Error baseline and covariance fixed ahead of the trials.
    reference: Option<(DVector<f64>, DMatrix<f64>)>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    match &cfg.data {
        DataSource::Synthetic {
            structure, latent, ..
        } => {
            let a = gen_structure(structure)?;
            let mu = true_mean(&a, latent)?;
            let sigma = population_covariance(&a, latent)?;
            Ok(Prepared {
                structure: Some(a),
                fixed: None,
                reference: Some((mu, sigma)),
            })
        }
        DataSource::Csv {
            path,
            standardize,
            structure,
        } => {
            let ds = ingest_csv(path, *standardize)?;
            let a = structure.as_ref().map(StructureMatrix::from_csv_path).transpose()?;
            if let Some(a) = &a {
                if a.n() != ds.dim() {
                    return Err(Error::Config(format!(
                        "structure has {} rows but the data has {} columns",
                        a.n(),
                        ds.dim()
                    )));
                }
            }
            // the baseline comes from the data before any corruption
            let reference = if ds.is_complete() {
                Some((reference_mean(&ds)?, empirical_covariance(&ds)))
            } else {
                None
            };
            Ok(Prepared {
                structure: a,
                fixed: Some(ds),
                reference,
            })
        }
    }
}

fn trial_data(cfg: &ExperimentConfig, prep: &Prepared, trial_seed: u64) -> Result<Dataset> {
    match (&cfg.data, &prep.fixed) {
        (_, Some(ds)) => Ok(ds.clone()),
        (DataSource::Synthetic { latent, n_samples, .. }, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let z = gen_latents(latent, *n_samples, &mut rng)?;
            gen_dataset(prep.structure.as_ref().expect("synthetic has A"), &z)
        }
        _ => unreachable!("csv sources are loaded up front"),
    }
}

fn make_plan(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    budget: f64,
    a: Option<&StructureMatrix>,
    trial_seed: u64,
) -> Result<CorruptionPlan> {
    match cfg.adversary.strategy() {
        Strategy::Shift => {
            let shift = match cfg.adversary.shift.as_deref() {
                None => vec![DEFAULT_SHIFT; ds.dim()],
                Some([s]) => vec![*s; ds.dim()],
                Some(v) => v.to_vec(),
            };
            plan_a1(ds, budget, &shift)
        }
        Strategy::TailHiding => plan_a2_tail_hiding(ds, budget),
        Strategy::Concentrate => plan_a3_concentrate(ds, budget),
        Strategy::Unrecoverable => {
            let a = a.ok_or_else(|| Error::Config("unrecoverable strategy needs A".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            rng.set_stream(1);
            plan_a3_unrecoverable_for(ds, budget, a, &mut rng)
        }
    }
}

fn score(metric: Metric, est: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Option<f64> {
    match metric {
        Metric::L2 => l2_error(est, mu).ok(),
        Metric::Mahalanobis => mahalanobis_error(est, mu, sigma).ok(),
    }
}

fn method_seed(spec: &EstimatorSpec, trial_seed: u64) -> u64 {
    let base = match &spec.recovery {
        Some(RecoverySpec::ReplacementRandomized { seed, .. } | RecoverySpec::Sparse { seed, .. }) => *seed,
        _ => 0,
    };
    base.wrapping_add(trial_seed)
}

fn run_trial(cfg: &ExperimentConfig, prep: &Prepared, trial: usize) -> Result<Vec<ResultRow>> {
    let trial_seed = cfg.seed.wrapping_add(trial as u64);
    let clean = trial_data(cfg, prep, trial_seed)?;
    let (mu, sigma) = match &prep.reference {
        Some(r) => r.clone(),
        None => (reference_mean(&clean)?, empirical_covariance(&clean)),
    };
    let a = prep.structure.as_ref();
    let mut rows = Vec::new();
    for &budget in &cfg.adversary.budgets {
        let plan = make_plan(cfg, &clean, budget, a, trial_seed)?;
        let corrupted = apply_plan(&clean, &plan)?;
        for spec in &cfg.methods {
            let ctx = RecoveryContext {
                structure: a,
                default_rank: cfg.ithsvd_rank.or(a.map(StructureMatrix::r)),
                seed: Some(method_seed(spec, trial_seed)),
            };
            // a failing estimator is recorded, not fatal
            let est = estimate(&corrupted, spec, ctx).ok();
            for &metric in &cfg.metrics {
                let value = est.as_ref().and_then(|e| score(metric, e, &mu, &sigma));
                rows.push(ResultRow {
                    method: spec.label(),
                    budget,
                    trial,
                    metric,
                    value,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs every trial in the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let per_trial: Vec<Vec<ResultRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &prep, t))
        .collect::<Result<_>>()?;

    // order: method (config order), budget, trial, metric (config order)
    let method_pos: BTreeMap<String, usize> =
        cfg.methods.iter().enumerate().map(|(i, m)| (m.label(), i)).collect();
    let budget_pos = |b: f64| cfg.adversary.budgets.iter().position(|&x| x == b).unwrap_or(0);
    let metric_pos = |m: Metric| cfg.metrics.iter().position(|&x| x == m).unwrap_or(0);
    let mut rows: Vec<ResultRow> = per_trial.into_iter().flatten().collect();
    rows.sort_by_key(|r| (method_pos[&r.method], budget_pos(r.budget), r.trial, metric_pos(r.metric)));

    let summary = summarize(&rows);
    Ok(ExperimentResult {
        rows,
        summary,
        config: cfg.clone(),
    })
}

/// Runs on a dedicated pool with `threads` workers (0 lets rayon decide).
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

/// Mean and sample standard deviation per (method, budget, metric), in row order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryEntry> {
    let mut out: Vec<SummaryEntry> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let idx = match out
            .iter()
            .position(|s| s.method == r.method && s.budget == r.budget && s.metric == r.metric)
        {
            Some(i) => i,
            None => {
                out.push(SummaryEntry {
                    method: r.method.clone(),
                    budget: r.budget,
                    metric: r.metric,
                    mean: None,
                    sd: None,
                    count: 0,
                    missing: 0,
                });
                values.push(Vec::new());
                out.len() - 1
            }
        };
        match r.value {
            Some(v) => values[idx].push(v),
            None => out[idx].missing += 1,
        }
    }
    for (s, v) in out.iter_mut().zip(values) {
        s.count = v.len();
        if v.is_empty() {
            continue;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        s.mean = Some(m);
        s.sd = Some(if v.len() > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        } else {
            0.0
        });
    }
    out
}

pub fn write_results_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RESULTS_HEADER)?;
    for r in rows {
        let value = r.value.map_or_else(|| MISSING.to_string(), |v| format!("{v:.16e}"));
        wtr.write_record([
            r.method.as_str(),
            &r.budget.to_string(),
            &r.trial.to_string(),
            r.metric.as_str(),
            &value,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |k: usize| record.get(k).unwrap_or("");
        let bad = |col: usize, msg: String| Error::Parse { row: line, col: col + 1, msg };
        let budget = field(1).parse::<f64>().map_err(|e| bad(1, e.to_string()))?;
        let trial = field(2).parse::<usize>().map_err(|e| bad(2, e.to_string()))?;
        let metric = Metric::parse(field(3)).map_err(|e| bad(3, e.to_string()))?;
        let value = match field(4) {
            MISSING => None,
            v => Some(v.parse::<f64>().map_err(|e| bad(4, e.to_string()))?),
        };
        rows.push(ResultRow {
            method: field(0).to_string(),
            budget,
            trial,
            metric,
            value,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    summary: &'a [SummaryEntry],
    config: &'a ExperimentConfig,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<prefix>.csv` and `<prefix>.summary.json`; returns both paths.
pub fn emit_results(res: &ExperimentResult, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let prefix = prefix.as_ref();
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let csv_path = with_suffix(prefix, ".csv");
    let json_path = with_suffix(prefix, ".summary.json");
    write_results_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?), &res.rows)?;
    let file = SummaryFile {
        summary: &res.summary,
        config: &res.config,
    };
    let mut out = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut out, &file)?;
    out.write_all(b"\n")?;
    Ok((csv_path, json_path))
}

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use structrobust::bench::{emit_results, run_experiment_with_threads, DataSource, ExperimentConfig, Strategy, DEFAULT_SHIFT};
use structrobust::corruption::{
    apply_plan, plan_a1, plan_a2_tail_hiding, plan_a3_concentrate, plan_a3_unrecoverable_for,
};
use structrobust::datagen::{gen_dataset, gen_latents, gen_structure, true_mean, LatentSpec, StructureSpec};
use structrobust::estimators::{estimate as run_estimator, recover_dataset, EstimatorSpec, RecoveryContext, RecoverySpec};
use structrobust::metrics::{
    d_entry_1, d_entry_inf, disc, l2_error, mahalanobis_error, tv_distance, DiscreteDistribution,
    EntryDistance,
};
use structrobust::{AdversaryKind, Dataset, Error, Result, StructureMatrix};

use crate::Common;

const DEFAULT_DISC_CAP: usize = 20;

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf)> {
    let text = std::fs::read_to_string(path)?;
    let cfg = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn output_prefix(c: &Common, configured: Option<&PathBuf>, base: &Path) -> Result<PathBuf> {
    match (&c.out, configured) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) => Ok(resolve(base, p)),
        (None, None) => Err(Error::Config("no output prefix: pass --out or set `output`".into())),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load_structure(base: &Path, p: Option<&PathBuf>) -> Result<Option<StructureMatrix>> {
    p.map(|p| StructureMatrix::from_csv_path(resolve(base, p))).transpose()
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = structrobust::io::read_dense_rows(File::open(path)?)?;
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    structure: StructureSpec,
    latent: LatentSpec,
    n_samples: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct GenSummary {
    n: usize,
    r: usize,
    n_samples: usize,
    seed: u64,
    m_a: Option<usize>,
    true_mean: Vec<f64>,
}

/// Writes `<prefix>.csv`, `<prefix>.structure.csv` and `<prefix>.json`.
pub fn gen(c: &Common) -> Result<Vec<PathBuf>> {
    let (mut cfg, base): (GenConfig, _) = read_config(&c.config)?;
    if let Some(path) = cfg.structure.path.take() {
        cfg.structure.path = Some(resolve(&base, &path));
    }
    let seed = c.seed.unwrap_or(cfg.seed);
    let a = gen_structure(&cfg.structure)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = gen_latents(&cfg.latent, cfg.n_samples, &mut rng)?;
    let ds = gen_dataset(&a, &z)?;
    let summary = GenSummary {
        n: a.n(),
        r: a.r(),
        n_samples: cfg.n_samples,
        seed,
        m_a: a.m_a().ok(),
        true_mean: true_mean(&a, &cfg.latent)?.iter().copied().collect(),
    };

    let prefix = output_prefix(c, cfg.output.as_ref(), &base)?;
    ensure_parent(&prefix)?;
    let paths = [
        with_suffix(&prefix, ".csv"),
        with_suffix(&prefix, ".structure.csv"),
        with_suffix(&prefix, ".json"),
    ];
    ds.to_csv_path(&paths[0])?;
    a.to_csv_path(&paths[1])?;
    write_json(&paths[2], &summary)?;
    Ok(paths.to_vec())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorruptConfig {
    input: PathBuf,
    adversary: AdversaryKind,
    #[serde(default)]
    strategy: Option<Strategy>,
    budget: f64,
    /// A1 shift; one value is broadcast to every coordinate.
    #[serde(default)]
    shift: Option<Vec<f64>>,
    /// Needed by the `unrecoverable` strategy.
    #[serde(default)]
    structure: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: Option<PathBuf>,
}

/// Writes the corrupted data to `<prefix>.csv` and the plan to `<prefix>.plan.csv`.
pub fn corrupt(c: &Common) -> Result<Vec<PathBuf>> {
    let (cfg, base): (CorruptConfig, _) = read_config(&c.config)?;
    let strategy = cfg.strategy.unwrap_or_else(|| Strategy::default_for(cfg.adversary));
    if strategy.kind() != cfg.adversary {
        return Err(Error::Config(format!(
            "strategy {strategy:?} does not belong to adversary {:?}",
            cfg.adversary
        )));
    }
    let ds = Dataset::from_csv_path(resolve(&base, &cfg.input))?;
    let plan = match strategy {
        Strategy::Shift => {
            let shift = match cfg.shift.as_deref() {
                None => vec![DEFAULT_SHIFT; ds.dim()],
                Some([s]) => vec![*s; ds.dim()],
                Some(v) => v.to_vec(),
            };
            plan_a1(&ds, cfg.budget, &shift)?
        }
        Strategy::TailHiding => plan_a2_tail_hiding(&ds, cfg.budget)?,
        Strategy::Concentrate => plan_a3_concentrate(&ds, cfg.budget)?,
        Strategy::Unrecoverable => {
            let a = load_structure(&base, cfg.structure.as_ref())?
                .ok_or_else(|| Error::Config("the unrecoverable strategy needs `structure`".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed.unwrap_or(cfg.seed));
            plan_a3_unrecoverable_for(&ds, cfg.budget, &a, &mut rng)?
        }
    };
    let out = apply_plan(&ds, &plan)?;

    let prefix = output_prefix(c, cfg.output.as_ref(), &base)?;
    ensure_parent(&prefix)?;
    let paths = [with_suffix(&prefix, ".csv"), with_suffix(&prefix, ".plan.csv")];
    out.to_csv_path(&paths[0])?;
    plan.to_csv_path(&paths[1])?;
    Ok(paths.to_vec())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecoverConfig {
    input: PathBuf,
    recovery: RecoverySpec,
    #[serde(default)]
    structure: Option<PathBuf>,
    /// Completion rank when `recovery` does not set one.
    #[serde(default)]
    rank: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct RecoverReport<'a> {
    method: &'a str,
    kept_indices: &'a [usize],
    discarded_indices: &'a [usize],
}

/// Writes the kept, recovered samples to `<prefix>.csv` and the kept and
/// discarded indices to `<prefix>.report.json`.
pub fn recover(c: &Common) -> Result<Vec<PathBuf>> {
    let (cfg, base): (RecoverConfig, _) = read_config(&c.config)?;
    let ds = Dataset::from_csv_path(resolve(&base, &cfg.input))?;
    let a = load_structure(&base, cfg.structure.as_ref())?;
    if cfg.recovery.needs_structure() && a.is_none() {
        return Err(Error::Config(format!("{} needs `structure`", cfg.recovery.label())));
    }
    let ctx = RecoveryContext {
        structure: a.as_ref(),
        default_rank: cfg.rank.or(a.as_ref().map(StructureMatrix::r)),
        seed: c.seed.or(cfg.seed),
    };
    let rec = recover_dataset(&ds, &cfg.recovery, ctx)?;

    let prefix = output_prefix(c, cfg.output.as_ref(), &base)?;
    ensure_parent(&prefix)?;
    let paths = [with_suffix(&prefix, ".csv"), with_suffix(&prefix, ".report.json")];
    rec.dataset.to_csv_path(&paths[0])?;
    write_json(
        &paths[1],
        &RecoverReport {
            method: cfg.recovery.label(),
            kept_indices: &rec.kept_indices,
            discarded_indices: &rec.discarded_indices,
        },
    )?;
    Ok(paths.to_vec())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateConfig {
    input: PathBuf,
    methods: Vec<EstimatorSpec>,
    #[serde(default)]
    structure: Option<PathBuf>,
    #[serde(default)]
    ithsvd_rank: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct EstimateRow {
    method: String,
    estimate: Option<Vec<f64>>,
    error: Option<String>,
}

/// Writes one entry per method to `<prefix>.json`; a failed method records
/// its error instead of an estimate.
pub fn estimate(c: &Common) -> Result<Vec<PathBuf>> {
    let (cfg, base): (EstimateConfig, _) = read_config(&c.config)?;
    if cfg.methods.is_empty() {
        return Err(Error::Config("`methods` is empty".into()));
    }
    for m in &cfg.methods {
        m.validate()?;
    }
    let ds = Dataset::from_csv_path(resolve(&base, &cfg.input))?;
    let a = load_structure(&base, cfg.structure.as_ref())?;
    let ctx = RecoveryContext {
        structure: a.as_ref(),
        default_rank: cfg.ithsvd_rank.or(a.as_ref().map(StructureMatrix::r)),
        seed: c.seed.or(cfg.seed),
    };
    let rows: Vec<EstimateRow> = cfg
        .methods
        .iter()
        .map(|m| {
            let (estimate, error) = match run_estimator(&ds, m, ctx) {
                Ok(v) => (Some(v.iter().copied().collect()), None),
                Err(e) => (None, Some(e.to_string())),
            };
            EstimateRow {
                method: m.label(),
                estimate,
                error,
            }
        })
        .collect();

    let prefix = output_prefix(c, cfg.output.as_ref(), &base)?;
    ensure_parent(&prefix)?;
    let path = with_suffix(&prefix, ".json");
    write_json(&path, &serde_json::json!({ "estimates": rows }))?;
    Ok(vec![path])
}

#[derive(Debug, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
enum MetricKind {
    Tv { p: PathBuf, q: PathBuf },
    #[serde(rename = "d_entry_1")]
    DEntry1 { p: PathBuf, q: PathBuf },
    DEntryInf { p: PathBuf, q: PathBuf },
    Disc {
        matrix: PathBuf,
        #[serde(default)]
        n_cap: Option<usize>,
    },
    L2 { estimate: Vec<f64>, reference: Vec<f64> },
    Mahalanobis {
        estimate: Vec<f64>,
        reference: Vec<f64>,
        covariance: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
struct MetricConfig {
    #[serde(flatten)]
    kind: MetricKind,
    #[serde(default)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct MetricOutput {
    metric: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling: Option<Vec<Vec<f64>>>,
}

fn with_coupling(metric: &'static str, d: EntryDistance) -> MetricOutput {
    let m = &d.coupling.matrix;
    MetricOutput {
        metric,
        value: d.value,
        coupling: Some(m.row_iter().map(|r| r.iter().copied().collect()).collect()),
    }
}

/// Writes `<prefix>.json` with the value and, for entry distances, the optimal coupling.
pub fn metric(c: &Common) -> Result<Vec<PathBuf>> {
    let (cfg, base): (MetricConfig, _) = read_config(&c.config)?;
    let dist = |p: &PathBuf| DiscreteDistribution::from_csv_path(resolve(&base, p));
    let out = match &cfg.kind {
        MetricKind::Tv { p, q } => MetricOutput {
            metric: "tv",
            value: tv_distance(&dist(p)?, &dist(q)?)?,
            coupling: None,
        },
        MetricKind::DEntry1 { p, q } => with_coupling("d_entry_1", d_entry_1(&dist(p)?, &dist(q)?)?),
        MetricKind::DEntryInf { p, q } => with_coupling("d_entry_inf", d_entry_inf(&dist(p)?, &dist(q)?)?),
        MetricKind::Disc { matrix, n_cap } => MetricOutput {
            metric: "disc",
            value: disc(&read_matrix(&resolve(&base, matrix))?, n_cap.unwrap_or(DEFAULT_DISC_CAP))?,
            coupling: None,
        },
        MetricKind::L2 { estimate, reference } => MetricOutput {
            metric: "l2",
            value: l2_error(&DVector::from_column_slice(estimate), &DVector::from_column_slice(reference))?,
            coupling: None,
        },
        MetricKind::Mahalanobis {
            estimate,
            reference,
            covariance,
        } => MetricOutput {
            metric: "mahalanobis",
            value: mahalanobis_error(
                &DVector::from_column_slice(estimate),
                &DVector::from_column_slice(reference),
                &read_matrix(&resolve(&base, covariance))?,
            )?,
            coupling: None,
        },
    };

    let prefix = output_prefix(c, cfg.output.as_ref(), &base)?;
    ensure_parent(&prefix)?;
    let path = with_suffix(&prefix, ".json");
    write_json(&path, &out)?;
    Ok(vec![path])
}

/// Runs the sweep and writes `<prefix>.csv` and `<prefix>.summary.json`.
pub fn experiment(c: &Common) -> Result<Vec<PathBuf>> {
    let (mut cfg, base): (ExperimentConfig, _) = read_config(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let prefix = output_prefix(c, cfg.output.as_ref(), &base)?;

    // run on resolved paths but report the config as written
    let mut resolved = cfg.clone();
    match &mut resolved.data {
        DataSource::Csv { path, structure, .. } => {
            *path = resolve(&base, path);
            if let Some(s) = structure {
                *s = resolve(&base, s);
            }
        }
        DataSource::Synthetic { structure, .. } => {
            if let Some(p) = &structure.path {
                structure.path = Some(resolve(&base, p));
            }
        }
    }
    let mut res = run_experiment_with_threads(&resolved, c.threads)?;
    res.config = cfg;
    let (csv, json) = emit_results(&res, &prefix)?;
    Ok(vec![csv, json])
}

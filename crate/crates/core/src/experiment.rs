//! Experiment runner: repeated trials over a grid of privacy budgets and
//! FairPick thresholds, aggregated into a report.
//!
//! A job is one (threshold, trial) pair. It splits the data, optionally runs
//! FairPick on the training split, trains the non-private target and every
//! DP target, attacks each of them and measures VD. All randomness comes
//! from seeds hashed out of the master seed and a stable key, so adding or
//! removing grid values leaves other cells untouched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{self, AttackData, Dataset, DatasetError, GroupAssignment, Schema, SplitSpec};
use crate::fairpick::{fairpick, ClassPlan, FairPickConfig, FairPickError};
use crate::id3::{self, DecisionTree, DpConfig, Id3Error};
use crate::metrics::{self, bin_bounds, vd_change, Change, MetricsError, VdInput, VdReport, BIN_COUNT};
use crate::mia::{self, BucketBy, MiaError, MiaResult};
use crate::mlp::MlpHyper;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Id3(#[from] Id3Error),
    #[error(transparent)]
    Mia(#[from] MiaError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    FairPick(#[from] FairPickError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_) | ExperimentError::Toml(_))
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

pub const DEFAULT_EPSILONS: [f64; 9] = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0];
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.4, 0.6, 0.8];

fn default_trials() -> usize {
    25
}
fn default_min_per_cluster() -> usize {
    10
}
fn default_refine_passes() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_deletion_penalty() -> f64 {
    crate::fairpick::DEFAULT_DELETION_PENALTY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub protected: String,
    pub depth: usize,
    /// Privacy budgets; empty means non-private only.
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_true")]
    pub fairpick: bool,
    /// FairPick thresholds; ignored unless `fairpick` is set.
    #[serde(default)]
    pub fairpick_t: Vec<f64>,
    #[serde(default = "default_min_per_cluster")]
    pub min_per_cluster: usize,
    #[serde(default)]
    pub max_k: Option<usize>,
    #[serde(default = "default_refine_passes")]
    pub refine_passes: usize,
    #[serde(default = "default_deletion_penalty")]
    pub deletion_penalty: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub mlp: MlpHyper,
    #[serde(default)]
    pub attack_bucket: BucketBy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitFractions {
    pub train_fraction: f64,
    pub attack_fraction: f64,
    pub eval_fraction: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        let d = SplitSpec::default();
        SplitFractions { train_fraction: d.train_fraction, attack_fraction: d.attack_fraction, eval_fraction: d.eval_fraction }
    }
}

impl SplitFractions {
    pub fn with_seed(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            attack_fraction: self.attack_fraction,
            eval_fraction: self.eval_fraction,
            seed,
        }
    }
}

impl ExperimentConfig {
    /// Minimal configuration with every optional key at its default.
    pub fn new(dataset: impl Into<PathBuf>, schema: impl Into<PathBuf>, protected: &str, depth: usize) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            schema: schema.into(),
            protected: protected.to_string(),
            depth,
            epsilon: vec![],
            fairpick: true,
            fairpick_t: vec![],
            min_per_cluster: default_min_per_cluster(),
            max_k: None,
            refine_passes: default_refine_passes(),
            deletion_penalty: default_deletion_penalty(),
            trials: default_trials(),
            split: SplitFractions::default(),
            seed: 0,
            jobs: None,
            out: None,
            mlp: MlpHyper::default(),
            attack_bucket: BucketBy::default(),
        }
    }

    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        for p in [&mut cfg.dataset, &mut cfg.schema] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = cfg.out.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(e) = self.epsilon.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return bad(format!("epsilon {e} must be positive and finite"));
        }
        if let Some(t) = self.fairpick_t.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return bad(format!("fairpick threshold {t} is outside [0, 1]"));
        }
        if !(self.deletion_penalty.is_finite() && self.deletion_penalty >= 0.0) {
            return bad(format!("deletion_penalty {} must be finite and non-negative", self.deletion_penalty));
        }
        if self.min_per_cluster == 0 {
            return bad("min_per_cluster must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if self.mlp.hidden == 0 || self.mlp.batch_size == 0 || !(self.mlp.learning_rate > 0.0) {
            return bad("mlp hidden, batch_size and learning_rate must be positive".into());
        }
        self.split.with_seed(0).validate().map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn thresholds(&self) -> Vec<Option<f64>> {
        let mut out = vec![None];
        if self.fairpick {
            out.extend(self.fairpick_t.iter().map(|&t| Some(t)));
        }
        out
    }

    pub fn epsilons(&self) -> Vec<Option<f64>> {
        std::iter::once(None).chain(self.epsilon.iter().map(|&e| Some(e))).collect()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| format!("{v}"))
}

pub fn cell_key(threshold: Option<f64>, epsilon: Option<f64>) -> String {
    format!("t-{}_eps-{}", fmt_opt(threshold), fmt_opt(epsilon))
}

/// Seed for `(master, key, trial)`.
pub fn derive_seed(master: u64, key: &str, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub split: u64,
    pub fairpick: Option<u64>,
    pub model: u64,
    pub attack: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub train_records: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub precision: Option<f64>,
    pub recall: f64,
    pub false_positive_rate: f64,
    /// VD of the non-private target under the same threshold and trial.
    pub vd: Option<f64>,
    /// VD of this cell's DP target.
    pub vd_dp: Option<f64>,
    pub change_c: Option<Change<f64>>,
    /// Bin recalls of this cell's own target.
    pub bins: Option<VdReport<f64>>,
    pub plans: Vec<ClassPlan>,
}

impl RunMetrics {
    /// VD of the model this cell trained.
    pub fn own_vd(&self) -> Option<f64> {
        self.vd_dp.or(self.vd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trial: usize,
    pub seeds: RunSeeds,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Stat::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { n: v.len(), mean: Some(mean), std: Some(std) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub failed: usize,
    pub valid: bool,
    pub train_accuracy: Stat,
    pub test_accuracy: Stat,
    pub precision: Stat,
    pub recall: Stat,
    pub vd: Stat,
    pub abs_vd: Stat,
    pub vd_dp: Stat,
    pub abs_vd_dp: Stat,
    pub change_c: Stat,
    /// Percentage drop of mean |VD| against the same budget without FairPick.
    pub vd_reduction_pct: Option<f64>,
    pub deleted_fraction: Stat,
    pub ignored_negative_fraction: Stat,
    /// Mean bin recall, `[group][bin]`, protected first.
    pub bin_recalls: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub key: String,
    pub epsilon: Option<f64>,
    pub threshold: Option<f64>,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: Option<ExperimentConfig>,
    pub cells: BTreeMap<String, Cell>,
}

/// Outcome of attacking one trained target.
#[derive(Clone, Debug)]
pub struct Audit {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub mia: MiaResult<f64>,
    pub vd: Option<f64>,
    pub bins: Option<VdReport<f64>>,
}

/// Attacks `tree` with the given attack data and measures VD on the
/// evaluation members.
pub fn audit_target(
    tree: &DecisionTree<f64>,
    train: &Dataset,
    test: &Dataset,
    attack: &AttackData,
    protected: &str,
    hyper: &MlpHyper,
    bucket_by: BucketBy,
    seed: u64,
) -> Result<Audit> {
    let ats = mia::build_attack_training_set(tree, &attack.attack_members, &attack.attack_nonmembers, bucket_by)?;
    let model = mia::train_attack_model(&ats, hyper, seed);
    let result = mia::evaluate_mia(&model, tree, &attack.eval_members, &attack.eval_nonmembers);
    let groups = dataset::binarize_group(&attack.eval_members, protected)?;
    let input = VdInput::from_inferences(&result.members, &groups.labels)?;
    let bins = match metrics::recall_by_bin::<f64>(&input) {
        Ok(b) => Some(b),
        Err(MetricsError::EmptyGroup(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Audit {
        train_accuracy: id3::accuracy(tree, train)?,
        test_accuracy: id3::accuracy(tree, test)?,
        vd: bins.as_ref().map(|b| b.vd),
        bins,
        mia: result,
    })
}

struct Job {
    threshold: Option<f64>,
    trial: usize,
}

/// Data for one trial: the (possibly FairPick-reduced) training split, the
/// test split and the attack subsets drawn from them.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub attack: AttackData,
    pub plans: Vec<ClassPlan>,
    pub split_seed: u64,
    pub fairpick_seed: Option<u64>,
}

/// Model and attack seeds for a budget and trial. They are shared by every
/// FairPick threshold, so cells that differ only in `T` see the same DP noise
/// stream and attack initialization and their VD difference is not swamped
/// by attack-training variance.
pub fn cell_seeds(master: u64, epsilon: Option<f64>, trial: usize) -> (u64, u64) {
    let key = format!("eps-{}", fmt_opt(epsilon));
    (derive_seed(master, &format!("{key}/model"), trial), derive_seed(master, &format!("{key}/attack"), trial))
}

/// Splits `ds` for `trial`, runs FairPick on the training split when a
/// threshold is given, then samples the attack data.
pub fn prepare_trial(ds: &Dataset, cfg: &ExperimentConfig, threshold: Option<f64>, trial: usize) -> Result<Prepared> {
    let split_seed = derive_seed(cfg.seed, "split", trial);
    let spec = cfg.split.with_seed(split_seed);
    let (train, test) = dataset::split(ds, &spec)?;
    let (train, plans, fairpick_seed) = match threshold {
        None => (train, vec![], None),
        Some(t) => {
            let seed = derive_seed(cfg.seed, &format!("fairpick t-{t}"), trial);
            let groups: GroupAssignment = dataset::binarize_group(&train, &cfg.protected)?;
            let fp = FairPickConfig {
                threshold: t,
                min_per_cluster: cfg.min_per_cluster,
                max_k: cfg.max_k,
                refine_passes: cfg.refine_passes,
                deletion_penalty: cfg.deletion_penalty,
            };
            let out = fairpick::<f64>(&train, &groups, &fp, seed)?;
            (out.dataset, out.plans, Some(seed))
        }
    };
    let attack = dataset::sample_attack_data(&train, &test, &spec)?;
    Ok(Prepared { train, test, attack, plans, split_seed, fairpick_seed })
}

fn run_job(ds: &Dataset, cfg: &ExperimentConfig, job: &Job) -> Vec<(String, RunRecord)> {
    let keys: Vec<(Option<f64>, String)> =
        cfg.epsilons().into_iter().map(|e| (e, cell_key(job.threshold, e))).collect();
    let seeds_for = |eps: Option<f64>, split: u64, fairpick: Option<u64>| {
        let (model, attack) = cell_seeds(cfg.seed, eps, job.trial);
        RunSeeds { split, fairpick, model, attack }
    };
    let prepared = match prepare_trial(ds, cfg, job.threshold, job.trial) {
        Ok(p) => p,
        Err(e) => {
            let split = derive_seed(cfg.seed, "split", job.trial);
            return keys
                .iter()
                .map(|(eps, key)| {
                    let rec = RunRecord {
                        trial: job.trial,
                        seeds: seeds_for(*eps, split, None),
                        metrics: None,
                        error: Some(e.to_string()),
                    };
                    (key.clone(), rec)
                })
                .collect();
        }
    };
    let p = &prepared;
    let mut baseline_vd: Option<f64> = None;
    let mut out = Vec::with_capacity(keys.len());
    for (eps, key) in &keys {
        let seeds = seeds_for(*eps, p.split_seed, p.fairpick_seed);
        let attempt = || -> Result<RunMetrics> {
            let tree = match eps {
                None => id3::train_id3::<f64>(&p.train, cfg.depth)?,
                Some(e) => id3::train_dp_id3::<f64>(&p.train, cfg.depth, &DpConfig::new(*e)?, seeds.model)?,
            };
            let audit = audit_target(&tree, &p.train, &p.test, &p.attack, &cfg.protected, &cfg.mlp, cfg.attack_bucket, seeds.attack)?;
            let (vd, vd_dp, change_c) = match eps {
                None => (audit.vd, None, None),
                Some(_) => {
                    let change = match (baseline_vd, audit.vd) {
                        (Some(b), Some(d)) => Some(vd_change(&b, &d)),
                        _ => None,
                    };
                    (baseline_vd, audit.vd, change)
                }
            };
            Ok(RunMetrics {
                train_records: p.train.len(),
                train_accuracy: audit.train_accuracy,
                test_accuracy: audit.test_accuracy,
                precision: audit.mia.precision,
                recall: audit.mia.recall,
                false_positive_rate: audit.mia.false_positive_rate(),
                vd,
                vd_dp,
                change_c,
                bins: audit.bins,
                plans: p.plans.clone(),
            })
        };
        let rec = match attempt() {
            Ok(m) => {
                if eps.is_none() {
                    baseline_vd = m.vd;
                }
                RunRecord { trial: job.trial, seeds, metrics: Some(m), error: None }
            }
            Err(e) => RunRecord { trial: job.trial, seeds, metrics: None, error: Some(e.to_string()) },
        };
        out.push((key.clone(), rec));
    }
    out
}

/// Cells with more than this fraction of failed trials are marked invalid.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

fn summarize(runs: &[RunRecord]) -> Summary {
    let ok: Vec<&RunMetrics> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let failed = runs.len() - ok.len();
    let stat = |f: &dyn Fn(&RunMetrics) -> Option<f64>| Stat::of(ok.iter().filter_map(|m| f(m)));
    let mut bin_recalls = vec![vec![0.0; BIN_COUNT]; 2];
    let with_bins: Vec<&VdReport<f64>> = ok.iter().filter_map(|m| m.bins.as_ref()).collect();
    if !with_bins.is_empty() {
        for b in &with_bins {
            for g in 0..2 {
                for r in 0..BIN_COUNT {
                    bin_recalls[g][r] += b.groups[g].recalls[r] / with_bins.len() as f64;
                }
            }
        }
    }
    Summary {
        runs: runs.len(),
        failed,
        valid: (failed as f64) <= MAX_FAILED_FRACTION * runs.len() as f64,
        train_accuracy: stat(&|m| Some(m.train_accuracy)),
        test_accuracy: stat(&|m| Some(m.test_accuracy)),
        precision: stat(&|m| m.precision),
        recall: stat(&|m| Some(m.recall)),
        vd: stat(&|m| m.vd),
        abs_vd: stat(&|m| m.vd.map(f64::abs)),
        vd_dp: stat(&|m| m.vd_dp),
        abs_vd_dp: stat(&|m| m.vd_dp.map(f64::abs)),
        change_c: stat(&|m| m.change_c.as_ref().and_then(|c| c.value().copied())),
        vd_reduction_pct: None,
        deleted_fraction: stat(&|m| {
            (!m.plans.is_empty()).then(|| {
                let before: usize = m.plans.iter().map(|p| p.records).sum();
                let deleted: usize = m.plans.iter().map(|p| p.plan.total()).sum();
                deleted as f64 / before.max(1) as f64
            })
        }),
        ignored_negative_fraction: stat(&|m| {
            let cells: usize = m.plans.iter().map(|p| p.plan.cells()).sum();
            (cells > 0).then(|| {
                m.plans.iter().map(|p| p.plan.ignored_negative_requests).sum::<usize>() as f64 / cells as f64
            })
        }),
        bin_recalls,
    }
}

fn mean_abs_own_vd(cell: &Cell) -> Option<f64> {
    Stat::of(cell.runs.iter().filter_map(|r| r.metrics.as_ref()?.own_vd().map(f64::abs))).mean
}

/// Loads the dataset named by `cfg` and runs every cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let schema = Schema::from_json_file(&cfg.schema)?;
    let ds = dataset::load_csv(&cfg.dataset, &schema)?;
    run_on(&ds, cfg)
}

/// Runs every cell on an already-loaded dataset.
pub fn run_on(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    dataset::binarize_group(ds, &cfg.protected)?;
    let jobs: Vec<Job> = cfg
        .thresholds()
        .into_iter()
        .flat_map(|threshold| (0..cfg.trials).map(move |trial| Job { threshold, trial }))
        .collect();
    let work = || jobs.par_iter().map(|job| run_job(ds, cfg, job)).collect::<Vec<_>>();
    let results = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut cells: BTreeMap<String, Cell> = BTreeMap::new();
    for t in cfg.thresholds() {
        for e in cfg.epsilons() {
            let key = cell_key(t, e);
            let cell = Cell { key: key.clone(), epsilon: e, threshold: t, runs: vec![], summary: Summary::default() };
            cells.insert(key, cell);
        }
    }
    for (key, rec) in results.into_iter().flatten() {
        cells.get_mut(&key).expect("cell created above").runs.push(rec);
    }
    for cell in cells.values_mut() {
        cell.runs.sort_by_key(|r| r.trial);
        cell.summary = summarize(&cell.runs);
    }
    let baselines: BTreeMap<String, Option<f64>> =
        cfg.epsilons().into_iter().map(|e| (cell_key(None, e), cells.get(&cell_key(None, e)).and_then(mean_abs_own_vd))).collect();
    for cell in cells.values_mut() {
        if cell.threshold.is_some() {
            let base = baselines.get(&cell_key(None, cell.epsilon)).copied().flatten();
            cell.summary.vd_reduction_pct = match (base, mean_abs_own_vd(cell)) {
                (Some(b), Some(a)) if b > 0.0 => Some(100.0 * (b - a) / b),
                _ => None,
            };
        }
    }
    Ok(Report { config: Some(cfg.clone()), cells })
}

const SUMMARY_HEADER: &str = "cell,threshold,epsilon,runs,failed,valid,train_accuracy_mean,train_accuracy_std,\
test_accuracy_mean,test_accuracy_std,precision_mean,precision_std,recall_mean,recall_std,vd_mean,vd_std,\
abs_vd_mean,vd_dp_mean,vd_dp_std,abs_vd_dp_mean,change_c_mean,change_c_std,vd_reduction_pct,\
deleted_fraction_mean,ignored_negative_fraction_mean";

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

pub fn summary_csv(report: &Report) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for cell in report.cells.values() {
        let s = &cell.summary;
        let row = [
            cell.key.clone(),
            fmt_opt(cell.threshold),
            fmt_opt(cell.epsilon),
            s.runs.to_string(),
            s.failed.to_string(),
            s.valid.to_string(),
            num(s.train_accuracy.mean),
            num(s.train_accuracy.std),
            num(s.test_accuracy.mean),
            num(s.test_accuracy.std),
            num(s.precision.mean),
            num(s.precision.std),
            num(s.recall.mean),
            num(s.recall.std),
            num(s.vd.mean),
            num(s.vd.std),
            num(s.abs_vd.mean),
            num(s.vd_dp.mean),
            num(s.vd_dp.std),
            num(s.abs_vd_dp.mean),
            num(s.change_c.mean),
            num(s.change_c.std),
            num(s.vd_reduction_pct),
            num(s.deleted_fraction.mean),
            num(s.ignored_negative_fraction.mean),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn bins_csv(cell: &Cell) -> String {
    let mut out = String::from("bin_lo,bin_hi,group,recall\n");
    for (g, name) in ["protected", "unprotected"].iter().enumerate() {
        for r in 0..BIN_COUNT {
            let (lo, hi) = bin_bounds(r);
            let v = cell.summary.bin_recalls.get(g).and_then(|row| row.get(r)).copied().unwrap_or(0.0);
            out.push_str(&format!("{lo:.1},{hi:.1},{name},{v}\n"));
        }
    }
    out
}

/// Writes `report.json`, `summary.csv`, `bins_<cell>.csv` and, for FairPick
/// cells, `plans_<cell>.json`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut write = |name: String, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    write("report.json".into(), serde_json::to_string_pretty(report)?)?;
    write("summary.csv".into(), summary_csv(report))?;
    for cell in report.cells.values() {
        write(format!("bins_{}.csv", cell.key), bins_csv(cell))?;
        if cell.threshold.is_some() {
            let plans: Vec<(usize, &Vec<ClassPlan>)> = cell
                .runs
                .iter()
                .filter_map(|r| r.metrics.as_ref().map(|m| (r.trial, &m.plans)))
                .collect();
            write(format!("plans_{}.json", cell.key), serde_json::to_string_pretty(&plans)?)?;
        }
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_part_of_the_key() {
        let s = derive_seed(1, "a", 0);
        assert_eq!(s, derive_seed(1, "a", 0));
        assert_ne!(s, derive_seed(2, "a", 0));
        assert_ne!(s, derive_seed(1, "b", 0));
        assert_ne!(s, derive_seed(1, "a", 1));
    }

    #[test]
    fn cell_keys() {
        assert_eq!(cell_key(None, None), "t-none_eps-none");
        assert_eq!(cell_key(Some(0.8), Some(0.01)), "t-0.8_eps-0.01");
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_toml(
            "dataset = \"d.csv\"\nschema = \"s.json\"\nprotected = \"sex\"\ndepth = 3\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.dataset, PathBuf::from("/base/d.csv"));
        assert_eq!(cfg.trials, 25);
        assert_eq!(cfg.mlp, MlpHyper::default());
        assert_eq!(cfg.epsilons(), vec![None]);
        let bad = "dataset = \"d\"\nschema = \"s\"\nprotected = \"sex\"\ndepth = 3\nepsilon = [0.0]\n";
        assert!(ExperimentConfig::from_toml(bad, Path::new(".")).unwrap_err().is_config());
        let unknown = "dataset = \"d\"\nschema = \"s\"\nprotected = \"sex\"\ndepth = 3\ncolour = 1\n";
        assert!(ExperimentConfig::from_toml(unknown, Path::new(".")).unwrap_err().is_config());
    }

    #[test]
    fn stats() {
        let s = Stat::of([1.0, 2.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(1.0));
        assert_eq!(Stat::of([]).mean, None);
    }

    #[test]
    fn empty_report_emits_valid_json() {
        let dir = tempfile::tempdir().unwrap();
        let report = Report { config: None, cells: BTreeMap::new() };
        emit_report(&report, dir.path()).unwrap();
        assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), report);
        let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn failed_trials_invalidate_cells() {
        let seeds = RunSeeds { split: 0, fairpick: None, model: 0, attack: 0 };
        let failed = RunRecord { trial: 0, seeds, metrics: None, error: Some("boom".into()) };
        let s = summarize(&[failed.clone(), failed]);
        assert_eq!(s.failed, 2);
        assert!(!s.valid);
    }
}

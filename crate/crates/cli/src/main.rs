//! `vdaudit` command-line front end.
//!
//! `train`, `attack` and `audit` run the stages of a single trial (trial 0 of
//! the non-FairPick cell, or of the FairPick cell when one threshold is
//! given) and hand artifacts to each other through JSON files. `mitigate`
//! applies FairPick to a whole CSV. `experiment` runs the full grid.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use vdaudit::dataset::{self, Dataset, Schema};
use vdaudit::experiment::{self, cell_key, cell_seeds, derive_seed, ExperimentConfig, ExperimentError};
use vdaudit::fairpick::{fairpick, ClassPlan, FairPickConfig};
use vdaudit::id3::{self, DpConfig};
use vdaudit::metrics::{self, VdInput, VdReport};
use vdaudit::mia;
use vdaudit::serial;
use vdaudit::{AttackModel64, DecisionTree64};

const TREE_KIND: &str = "target_tree";
const ATTACK_KIND: &str = "attack_model";

#[derive(Parser)]
#[command(name = "vdaudit", version, about = "Audit membership-inference vulnerability disparity of ID3 trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target tree on the training split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Where to write the tree (default: <out>/tree.json).
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Train the attack model against a saved tree.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Tree written by `train` (default: <out>/tree.json).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Where to write the attack model (default: <out>/attack.json).
        #[arg(long)]
        attack_out: Option<PathBuf>,
    },
    /// Evaluate a saved attack on the evaluation split and measure VD.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        attack_model: Option<PathBuf>,
    },
    /// Run FairPick on a dataset and write the reduced CSV and the plans.
    Mitigate {
        #[command(flatten)]
        common: Common,
    },
    /// Run every (threshold, epsilon) cell over all trials.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Default)]
struct Common {
    /// TOML configuration; the flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    protected: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    /// Comma-separated budgets, or `none` for non-private only.
    #[arg(long, value_parser = parse_list)]
    epsilon: Option<List>,
    /// Comma-separated thresholds, or `none` to disable FairPick.
    #[arg(long = "fairpick-t", value_parser = parse_list)]
    fairpick_t: Option<List>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parsed `<list|none>` flag value.
#[derive(Clone, Debug)]
struct List(Vec<f64>);

fn parse_list(s: &str) -> Result<List, String> {
    if s.trim().eq_ignore_ascii_case("none") {
        return Ok(List(vec![]));
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()
        .map(List)
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<ExperimentError>() {
            Some(x) if x.is_config() => Failure::Config(format!("{e:#}")),
            _ => Failure::Runtime(e),
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Config(msg.into()))
}

impl Common {
    /// Builds the configuration. `need_depth` is false for commands that
    /// never train a tree.
    fn resolve(&self, need_depth: bool) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path).map_err(|e| Failure::Config(e.to_string()))?,
            None => {
                let (Some(dataset), Some(schema), Some(protected)) = (&self.dataset, &self.schema, &self.protected)
                else {
                    return config_err("without --config, --dataset, --schema and --protected are required");
                };
                let depth = match (self.depth, need_depth) {
                    (Some(d), _) => d,
                    (None, false) => 0,
                    (None, true) => return config_err("--depth is required without --config"),
                };
                ExperimentConfig::new(dataset, schema, protected, depth)
            }
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = &self.schema {
            cfg.schema = v.clone();
        }
        if let Some(v) = &self.protected {
            cfg.protected = v.clone();
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(List(v)) = &self.epsilon {
            cfg.epsilon = v.clone();
        }
        if let Some(List(v)) = &self.fairpick_t {
            cfg.fairpick = !v.is_empty();
            cfg.fairpick_t = v.clone();
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load(cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    let schema = Schema::from_json_file(&cfg.schema).map_err(|e| Failure::Config(e.to_string()))?;
    let ds = dataset::load_csv(&cfg.dataset, &schema).context("loading dataset")?;
    dataset::binarize_group(&ds, &cfg.protected).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(ds)
}

/// At most one value may be given for single-trial commands.
fn single(values: &[f64], what: &str) -> Result<Option<f64>, Failure> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => config_err(format!("this command takes at most one {what} value, got {}", values.len())),
    }
}

fn single_threshold(cfg: &ExperimentConfig) -> Result<Option<f64>, Failure> {
    if cfg.fairpick {
        single(&cfg.fairpick_t, "fairpick-t")
    } else {
        Ok(None)
    }
}

#[derive(Serialize, Deserialize)]
struct TreeArtifact {
    epsilon: Option<f64>,
    threshold: Option<f64>,
    seed: u64,
    depth: usize,
    tree: DecisionTree64,
}

#[derive(Serialize, Deserialize)]
struct AttackArtifact {
    epsilon: Option<f64>,
    threshold: Option<f64>,
    seed: u64,
    model: AttackModel64,
}

#[derive(Serialize)]
struct AuditSummary {
    cell: String,
    train_accuracy: f64,
    test_accuracy: f64,
    precision: Option<f64>,
    recall: f64,
    false_positive_rate: f64,
    vd: Option<f64>,
    bins: Option<VdReport<f64>>,
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_artifact<P: serde::de::DeserializeOwned>(path: &Path, kind: &str) -> Result<P, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serial::from_json(kind, &text).with_context(|| format!("parsing {}", path.display()))?)
}

fn train(common: &Common, model_out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = common.resolve(true)?;
    let epsilon = single(&cfg.epsilon, "epsilon")?;
    let threshold = single_threshold(&cfg)?;
    let ds = load(&cfg)?;
    let p = experiment::prepare_trial(&ds, &cfg, threshold, 0).context("preparing data")?;
    let (model_seed, _) = cell_seeds(cfg.seed, epsilon, 0);
    let tree = match epsilon {
        None => id3::train_id3::<f64>(&p.train, cfg.depth),
        Some(e) => DpConfig::new(e).and_then(|dp| id3::train_dp_id3::<f64>(&p.train, cfg.depth, &dp, model_seed)),
    }
    .context("training target")?;
    let train_acc = id3::accuracy(&tree, &p.train).context("scoring")?;
    let test_acc = id3::accuracy(&tree, &p.test).context("scoring")?;
    let path = model_out.unwrap_or_else(|| out_dir(&cfg).join("tree.json"));
    let artifact = TreeArtifact { epsilon, threshold, seed: cfg.seed, depth: cfg.depth, tree };
    write(&path, &serial::to_json(TREE_KIND, &artifact).context("serializing tree")?)?;
    println!("train_records={} train_accuracy={train_acc:.4} test_accuracy={test_acc:.4}", p.train.len());
    println!("wrote {}", path.display());
    Ok(())
}

fn attack(common: &Common, model: Option<PathBuf>, attack_out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = common.resolve(false)?;
    let dir = out_dir(&cfg);
    let tree: TreeArtifact = read_artifact(&model.unwrap_or_else(|| dir.join("tree.json")), TREE_KIND)?;
    let ds = load(&cfg)?;
    let p = experiment::prepare_trial(&ds, &cfg, tree.threshold, 0).context("preparing data")?;
    let (_, attack_seed) = cell_seeds(cfg.seed, tree.epsilon, 0);
    let ats = mia::build_attack_training_set(
        &tree.tree,
        &p.attack.attack_members,
        &p.attack.attack_nonmembers,
        cfg.attack_bucket,
    )
    .context("building attack training set")?;
    let am = mia::train_attack_model(&ats, &cfg.mlp, attack_seed);
    let path = attack_out.unwrap_or_else(|| dir.join("attack.json"));
    let artifact = AttackArtifact { epsilon: tree.epsilon, threshold: tree.threshold, seed: cfg.seed, model: am };
    write(&path, &serial::to_json(ATTACK_KIND, &artifact).context("serializing attack model")?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn audit(common: &Common, model: Option<PathBuf>, attack_model: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = common.resolve(false)?;
    let dir = out_dir(&cfg);
    let tree: TreeArtifact = read_artifact(&model.unwrap_or_else(|| dir.join("tree.json")), TREE_KIND)?;
    let am: AttackArtifact = read_artifact(&attack_model.unwrap_or_else(|| dir.join("attack.json")), ATTACK_KIND)?;
    if (am.epsilon, am.threshold) != (tree.epsilon, tree.threshold) {
        return config_err("attack model was trained against a different target");
    }
    let ds = load(&cfg)?;
    let p = experiment::prepare_trial(&ds, &cfg, tree.threshold, 0).context("preparing data")?;
    let result = mia::evaluate_mia(&am.model, &tree.tree, &p.attack.eval_members, &p.attack.eval_nonmembers);
    let groups = dataset::binarize_group(&p.attack.eval_members, &cfg.protected).context("grouping")?;
    let input = VdInput::from_inferences(&result.members, &groups.labels).context("collecting outcomes")?;
    let bins = match metrics::recall_by_bin::<f64>(&input) {
        Ok(b) => Some(b),
        Err(metrics::MetricsError::EmptyGroup(g)) => {
            eprintln!("warning: no evaluation members in the {g:?} group; VD is undefined");
            None
        }
        Err(e) => return Err(anyhow::Error::from(e).into()),
    };
    let summary = AuditSummary {
        cell: cell_key(tree.threshold, tree.epsilon),
        train_accuracy: id3::accuracy(&tree.tree, &p.train).context("scoring")?,
        test_accuracy: id3::accuracy(&tree.tree, &p.test).context("scoring")?,
        precision: result.precision,
        recall: result.recall,
        false_positive_rate: result.false_positive_rate(),
        vd: bins.as_ref().map(|b| b.vd),
        bins,
    };
    write(&dir.join("audit.json"), &serde_json::to_string_pretty(&summary).context("serializing audit")?)?;
    if let Some(b) = &summary.bins {
        write(&dir.join("bins.csv"), &b.to_csv())?;
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "precision={} recall={:.4} fpr={:.4} vd={}",
        fmt(summary.precision),
        summary.recall,
        summary.false_positive_rate,
        fmt(summary.vd)
    );
    Ok(())
}

fn mitigate(common: &Common) -> Result<(), Failure> {
    let cfg = common.resolve(false)?;
    let Some(t) = single_threshold(&cfg)? else {
        return config_err("mitigate needs exactly one --fairpick-t value");
    };
    let ds = load(&cfg)?;
    let groups = dataset::binarize_group(&ds, &cfg.protected).context("grouping")?;
    let fp = FairPickConfig {
        threshold: t,
        min_per_cluster: cfg.min_per_cluster,
        max_k: cfg.max_k,
        refine_passes: cfg.refine_passes,
        deletion_penalty: cfg.deletion_penalty,
    };
    let out = fairpick::<f64>(&ds, &groups, &fp, derive_seed(cfg.seed, &format!("fairpick t-{t}"), 0)).context("running FairPick")?;
    let dir = out_dir(&cfg);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join("mitigated.csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    out.dataset.write_csv(std::io::BufWriter::new(file)).context("writing CSV")?;
    let plans: &Vec<ClassPlan> = &out.plans;
    write(&dir.join("plan.json"), &serde_json::to_string_pretty(plans).context("serializing plans")?)?;
    println!("kept {} of {} records; wrote {} and plan.json", out.dataset.len(), ds.len(), csv_path.display());
    Ok(())
}

fn run_grid(common: &Common) -> Result<(), Failure> {
    let cfg = common.resolve(true)?;
    let ds = load(&cfg)?;
    let report = experiment::run_on(&ds, &cfg).context("running experiment")?;
    let dir = out_dir(&cfg);
    let files = experiment::emit_report(&report, &dir).context("writing report")?;
    for cell in report.cells.values() {
        let s = &cell.summary;
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "{:<24} runs={} failed={} precision={} recall={} vd={} vd_dp={}",
            cell.key,
            s.runs,
            s.failed,
            fmt(s.precision.mean),
            fmt(s.recall.mean),
            fmt(s.vd.mean),
            fmt(s.vd_dp.mean)
        );
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train { common, model_out } => train(common, model_out.clone()),
        Command::Attack { common, model, attack_out } => attack(common, model.clone(), attack_out.clone()),
        Command::Audit { common, model, attack_model } => audit(common, model.clone(), attack_model.clone()),
        Command::Mitigate { common } => mitigate(common),
        Command::Experiment { common } => run_grid(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Sweeps over (profile × seed × λ), their artifacts, and the reports built
//! from them.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json
//! runs/<run_id>/checkpoint.bin
//! runs/<run_id>/trace.csv
//! reports/seed<s>_lam<i>.json
//! metrics.csv  sensitivity.csv  aggregate_metrics.csv  aggregate_sensitivity.csv
//! mitigation.csv  mitigation.json     (mitigation study only)
//! ```
//!
//! Diagnostics (losses, gradients, curvature, Δ) use the training split;
//! accuracies use the test split.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::data::{GroupedDataset, Split};
use crate::error::{Error, Result};
use crate::fairlab::{self, EigenOptions, ModelSet, SensitivityReport, TaylorReport};
use crate::models::{self, init_model, read_checkpoint, write_checkpoint, Model};
use crate::train::{sgd_train, Provenance, TrainConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Departures from the reference training recipe, recorded in every manifest.
pub const DEVIATIONS: &[&str] = &[
    "momentum defaults to 0.9 rather than 0.99; 0.99 destabilizes small logistic probes",
    "linear warmup-decay stands in for a one-cycle schedule",
    "the penalty is computed per minibatch; groups absent from a batch are skipped",
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub force: bool,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Completed,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub profile_id: String,
    pub seed: u64,
    pub lambda: f64,
    pub status: RunStatus,
    pub checkpoint: String,
    pub trace: String,
    pub param_hash: Option<String>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub reference_id: String,
    pub profile_ids: Vec<String>,
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub deviations: Vec<String>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub runs: Vec<RunRecord>,
    /// Files written by the aggregation pass, relative to the run directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(tmp, dir.join("manifest.json"))?;
        Ok(())
    }

    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(|r| r.status == RunStatus::Completed)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub completed: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.failed == 0
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn run_id(profile_id: &str, seed: u64, lambda_index: usize) -> String {
    format!("{profile_id}-s{seed}-lam{lambda_index}")
}

/// Seventeen significant digits, enough to round-trip binary64.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    opts.output
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("no output directory: set `output` in the config or pass --output".into()))
}

/// Trains every (profile, seed, λ) combination, then writes reports and
/// aggregate CSVs. Diverged runs are marked failed and the sweep continues.
pub fn run_experiment(config_path: impl AsRef<Path>, opts: &RunOptions) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(config_path)?;
    run_config(&cfg, opts)
}

pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = output_dir(cfg, opts)?;
    let registry = cfg.registry()?;
    let split = cfg.load_split()?;
    let config_hash = cfg.hash();

    let previous = RunManifest::read(&dir).ok();
    if let Some(prev) = &previous {
        if prev.config_hash != config_hash && !opts.force {
            return Err(Error::Config(format!(
                "{} holds results for a different config; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    if previous.is_some() && opts.force {
        clear_outputs(&dir)?;
    }
    fs::create_dir_all(dir.join("runs"))?;

    let mut runs = Vec::new();
    for &seed in &cfg.sweep.seeds {
        for (li, &lambda) in cfg.mitigation.lambdas.iter().enumerate() {
            for p in &registry.profiles {
                let id = run_id(&p.id, seed, li);
                let prior = previous
                    .as_ref()
                    .filter(|m| m.config_hash == config_hash && !opts.force)
                    .and_then(|m| m.runs.iter().find(|r| r.run_id == id && r.status == RunStatus::Completed))
                    .filter(|r| dir.join(&r.checkpoint).exists());
                runs.push(prior.cloned().unwrap_or_else(|| RunRecord {
                    checkpoint: format!("runs/{id}/checkpoint.bin"),
                    trace: format!("runs/{id}/trace.csv"),
                    run_id: id,
                    profile_id: p.id.clone(),
                    seed,
                    lambda,
                    status: RunStatus::Pending,
                    param_hash: None,
                    provenance: None,
                }));
            }
        }
    }
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config_hash.clone(),
        config: cfg.clone(),
        reference_id: registry.reference_id.clone(),
        profile_ids: registry.ids(),
        seeds: cfg.sweep.seeds.clone(),
        lambdas: cfg.mitigation.lambdas.clone(),
        deviations: DEVIATIONS.iter().map(|s| s.to_string()).collect(),
        started_at: now(),
        finished_at: None,
        runs,
        artifacts: Vec::new(),
    };
    manifest.write(&dir)?;

    let pending: Vec<usize> = (0..manifest.runs.len())
        .filter(|&i| manifest.runs[i].status != RunStatus::Completed)
        .collect();
    let skipped = manifest.runs.len() - pending.len();
    let workers = opts.workers.unwrap_or(cfg.sweep.workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<(usize, RunRecord)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| (i, execute_run(cfg, &registry, &split.train, &dir, &manifest.runs[i])))
            .collect()
    });
    for (i, record) in outcomes {
        manifest.runs[i] = record;
    }
    manifest.write(&dir)?;

    let failed = manifest
        .runs
        .iter()
        .filter(|r| matches!(r.status, RunStatus::Failed { .. }))
        .count();
    manifest.artifacts = aggregate(&manifest, &split, &dir)?;
    // A mitigation study over the same completed runs stays valid.
    if let Some(prev) = previous.filter(|p| p.config_hash == config_hash && !opts.force) {
        manifest.artifacts.extend(
            prev.artifacts
                .into_iter()
                .filter(|a| a.starts_with("mitigation.") && dir.join(a).exists()),
        );
    }
    manifest.finished_at = Some(now());
    manifest.write(&dir)?;
    info!("{}: {} runs, {} skipped, {} failed", dir.display(), manifest.runs.len(), skipped, failed);
    Ok(RunSummary {
        dir,
        completed: manifest.runs.len() - failed - skipped,
        skipped,
        failed,
    })
}

/// Removes everything a previous sweep wrote into `dir`.
fn clear_outputs(dir: &Path) -> Result<()> {
    for sub in ["runs", "reports"] {
        if dir.join(sub).exists() {
            fs::remove_dir_all(dir.join(sub))?;
        }
    }
    for file in OUTPUT_FILES {
        if dir.join(file).exists() {
            fs::remove_file(dir.join(file))?;
        }
    }
    Ok(())
}

const OUTPUT_FILES: &[&str] = &[
    "metrics.csv",
    "sensitivity.csv",
    "aggregate_metrics.csv",
    "aggregate_sensitivity.csv",
    "mitigation.csv",
    "mitigation.json",
];

fn execute_run(
    cfg: &ExperimentConfig,
    registry: &crate::vhw::ProfileRegistry,
    train: &GroupedDataset,
    dir: &Path,
    record: &RunRecord,
) -> RunRecord {
    let mut out = record.clone();
    let result = (|| -> Result<(String, Provenance)> {
        let profile = registry
            .get(&record.profile_id)
            .ok_or_else(|| Error::Config(format!("profile {} vanished", record.profile_id)))?;
        let m0 = init_model(&cfg.model, record.seed)?;
        let tcfg = TrainConfig {
            shuffle_seed: record.seed,
            mitigation_lambda: record.lambda,
            ..cfg.train.clone()
        };
        let trained = sgd_train(&m0, train, &tcfg, profile)?;
        fs::create_dir_all(dir.join("runs").join(&record.run_id))?;
        write_checkpoint(dir.join(&record.checkpoint), &trained.model, &profile.id, &trained.config_hash)?;
        trained.write_trace_csv(dir.join(&record.trace), train.group_names())?;
        Ok((trained.param_hash(), trained.provenance))
    })();
    match result {
        Ok((hash, prov)) => {
            out.status = RunStatus::Completed;
            out.param_hash = Some(hash);
            out.provenance = Some(prov);
        }
        Err(e) => {
            warn!("run {} failed: {e}", record.run_id);
            out.status = RunStatus::Failed { message: e.to_string() };
            out.param_hash = None;
            out.provenance = None;
        }
    }
    out
}

/// One row of metrics.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub profile_id: String,
    pub seed: u64,
    pub lambda: f64,
    pub group: String,
    pub loss: f64,
    pub accuracy: f64,
    pub grad_norm: f64,
    pub lambda_max: f64,
    pub dtb_mean: f64,
}

/// One row of sensitivity.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub seed: u64,
    pub lambda: f64,
    pub group: String,
    pub delta: f64,
    pub term1: f64,
    pub term2: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SeedReport<'a> {
    seed: u64,
    lambda: f64,
    profiles: Vec<String>,
    sensitivity: &'a SensitivityReport,
    taylor: &'a TaylorReport,
}

fn load_models(manifest: &RunManifest, dir: &Path, seed: u64, lambda_index: usize) -> Result<Vec<(String, Model)>> {
    let mut out = Vec::new();
    for r in manifest.runs.iter().filter(|r| r.seed == seed && r.status == RunStatus::Completed) {
        if run_id(&r.profile_id, seed, lambda_index) != r.run_id {
            continue;
        }
        let (m, header) = read_checkpoint(dir.join(&r.checkpoint))?;
        if Some(&header.param_hash) != r.param_hash.as_ref() {
            return Err(Error::Checkpoint {
                path: dir.join(&r.checkpoint),
                message: "parameter hash differs from the manifest".into(),
            });
        }
        out.push((r.profile_id.clone(), m));
    }
    Ok(out)
}

fn metrics_for(run: &RunRecord, model: &Model, split: &Split, opts: EigenOptions) -> Result<Vec<MetricsRow>> {
    let train = &split.train;
    let grads = fairlab::group_gradient_norms(model, train)?;
    let dtb = if model.spec.head == crate::models::Head::Linear {
        vec![f64::NAN; train.num_groups()]
    } else {
        fairlab::group_dtb_means(model, train)?
    };
    (0..train.num_groups())
        .map(|a| {
            let accuracy = match split.test.group_view(a) {
                Ok(v) if model.spec.head != crate::models::Head::Linear => models::accuracy(model, &v)?,
                _ => f64::NAN,
            };
            Ok(MetricsRow {
                run_id: run.run_id.clone(),
                profile_id: run.profile_id.clone(),
                seed: run.seed,
                lambda: run.lambda,
                group: train.group_names()[a].clone(),
                loss: fairlab::group_loss(model, train, a)?,
                accuracy,
                grad_norm: grads[a].norm,
                lambda_max: fairlab::group_hessian_lmax(model, train, a, opts)?.lambda_max,
                dtb_mean: dtb[a],
            })
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>, fields: impl Fn(&T) -> Vec<String>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(fields(&r))?;
    }
    w.flush()?;
    Ok(())
}

const METRICS_HEADER: &[&str] = &[
    "run_id", "profile_id", "seed", "lambda", "group", "loss", "accuracy", "grad_norm", "lambda_max", "dtb_mean",
];
const SENSITIVITY_HEADER: &[&str] = &["seed", "lambda", "group", "delta", "term1", "term2", "rhs", "slack"];

fn aggregate(manifest: &RunManifest, split: &Split, dir: &Path) -> Result<Vec<String>> {
    let mut metrics = Vec::new();
    let mut sensitivity = Vec::new();
    fs::create_dir_all(dir.join("reports"))?;
    let mut artifacts = Vec::new();
    for &seed in &manifest.seeds {
        for (li, &lambda) in manifest.lambdas.iter().enumerate() {
            let entries = load_models(manifest, dir, seed, li)?;
            if entries.is_empty() {
                continue;
            }
            let opts = EigenOptions {
                seed,
                ..EigenOptions::default()
            };
            for (pid, m) in &entries {
                let run = manifest
                    .runs
                    .iter()
                    .find(|r| r.run_id == run_id(pid, seed, li))
                    .expect("run exists");
                metrics.extend(metrics_for(run, m, split, opts)?);
            }
            let set = ModelSet::new(entries)?;
            let reference = if set.get(&manifest.reference_id).is_ok() {
                manifest.reference_id.clone()
            } else {
                set.ids().next().unwrap_or_default().to_string()
            };
            let sens = fairlab::sensitivity_report(&set, &reference, &split.train)?;
            let taylor = fairlab::taylor_bound_report(&set, &reference, &split.train, opts)?;
            for g in &taylor.groups {
                sensitivity.push(SensitivityRow {
                    seed,
                    lambda,
                    group: split.train.group_names()[g.group].clone(),
                    delta: g.delta,
                    term1: g.term1,
                    term2: g.term2,
                    rhs: g.rhs,
                    slack: g.slack,
                });
            }
            let name = format!("reports/seed{seed}_lam{li}.json");
            let report = SeedReport {
                seed,
                lambda,
                profiles: set.ids().map(str::to_string).collect(),
                sensitivity: &sens,
                taylor: &taylor,
            };
            fs::write(dir.join(&name), serde_json::to_vec_pretty(&report)?)?;
            artifacts.push(name);
        }
    }

    write_rows(&dir.join("metrics.csv"), METRICS_HEADER, &metrics, |r| {
        vec![
            r.run_id.clone(),
            r.profile_id.clone(),
            r.seed.to_string(),
            fmt17(r.lambda),
            r.group.clone(),
            fmt17(r.loss),
            fmt17(r.accuracy),
            fmt17(r.grad_norm),
            fmt17(r.lambda_max),
            fmt17(r.dtb_mean),
        ]
    })?;
    write_rows(&dir.join("sensitivity.csv"), SENSITIVITY_HEADER, &sensitivity, |r| {
        vec![
            r.seed.to_string(),
            fmt17(r.lambda),
            r.group.clone(),
            fmt17(r.delta),
            fmt17(r.term1),
            fmt17(r.term2),
            fmt17(r.rhs),
            fmt17(r.slack),
        ]
    })?;

    // Mean and sample standard deviation across seeds.
    let mut by_key: BTreeMap<(String, u64, String), Vec<&MetricsRow>> = BTreeMap::new();
    for r in &metrics {
        by_key
            .entry((r.profile_id.clone(), r.lambda.to_bits(), r.group.clone()))
            .or_default()
            .push(r);
    }
    let agg_metrics: Vec<Vec<String>> = by_key
        .iter()
        .map(|((pid, lam, group), rows)| {
            let mut rec = vec![pid.clone(), fmt17(f64::from_bits(*lam)), group.clone(), rows.len().to_string()];
            let fields: [fn(&MetricsRow) -> f64; 5] = [|r| r.loss, |r| r.accuracy, |r| r.grad_norm, |r| r.lambda_max, |r| r.dtb_mean];
            for f in fields {
                let (m, s) = mean_std(rows.iter().map(|r| f(r)));
                rec.push(fmt17(m));
                rec.push(fmt17(s));
            }
            rec
        })
        .collect();
    write_rows(
        &dir.join("aggregate_metrics.csv"),
        &[
            "profile_id", "lambda", "group", "n", "loss_mean", "loss_std", "accuracy_mean", "accuracy_std", "grad_norm_mean",
            "grad_norm_std", "lambda_max_mean", "lambda_max_std", "dtb_mean_mean", "dtb_mean_std",
        ],
        agg_metrics,
        |r| r.clone(),
    )?;

    let mut by_group: BTreeMap<(u64, String), Vec<&SensitivityRow>> = BTreeMap::new();
    for r in &sensitivity {
        by_group.entry((r.lambda.to_bits(), r.group.clone())).or_default().push(r);
    }
    let agg_sens: Vec<Vec<String>> = by_group
        .iter()
        .map(|((lam, group), rows)| {
            let mut rec = vec![fmt17(f64::from_bits(*lam)), group.clone(), rows.len().to_string()];
            let fields: [fn(&SensitivityRow) -> f64; 5] = [|r| r.delta, |r| r.term1, |r| r.term2, |r| r.rhs, |r| r.slack];
            for f in fields {
                let (m, s) = mean_std(rows.iter().map(|r| f(r)));
                rec.push(fmt17(m));
                rec.push(fmt17(s));
            }
            rec
        })
        .collect();
    write_rows(
        &dir.join("aggregate_sensitivity.csv"),
        &[
            "lambda", "group", "n", "delta_mean", "delta_std", "term1_mean", "term1_std", "term2_mean", "term2_std", "rhs_mean",
            "rhs_std", "slack_mean", "slack_std",
        ],
        agg_sens,
        |r| r.clone(),
    )?;
    artifacts.extend(
        ["metrics.csv", "sensitivity.csv", "aggregate_metrics.csv", "aggregate_sensitivity.csv"]
            .iter()
            .map(|s| s.to_string()),
    );
    Ok(artifacts)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn read_metrics(dir: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(dir.join("metrics.csv"))?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?)
}

pub fn read_sensitivity(dir: &Path) -> Result<Vec<SensitivityRow>> {
    let mut r = csv::Reader::from_path(dir.join("sensitivity.csv"))?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<SensitivityRow>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaOutcome {
    pub lambda: f64,
    /// Max minus min group accuracy, averaged over profiles and seeds.
    pub spread_mean: f64,
    pub spread_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_drop: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSelection {
    pub seed: u64,
    pub selected_lambda: f64,
    pub baseline_spread: f64,
    pub selected_spread: f64,
    pub accuracy_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub accuracy_budget: f64,
    pub outcomes: Vec<LambdaOutcome>,
    pub selected_lambda: f64,
    /// `1 − spread(λ*) / spread(0)`.
    pub reduction: f64,
    pub per_seed: Vec<SeedSelection>,
}

/// Spread and overall accuracy for each completed (seed, λ, profile) run.
fn run_accuracies(dir: &Path, manifest: &RunManifest, test: &GroupedDataset) -> Result<Vec<(u64, f64, f64, f64)>> {
    let mut out = Vec::new();
    for r in manifest.runs.iter().filter(|r| r.status == RunStatus::Completed) {
        let (m, _) = read_checkpoint(dir.join(&r.checkpoint))?;
        let spread = super::acceptance::accuracy_spread(&m, test)?;
        let acc = models::accuracy(&m, &test.view())?;
        out.push((r.seed, r.lambda, spread, acc));
    }
    Ok(out)
}

fn summarize(rows: &[(u64, f64, f64, f64)], lambdas: &[f64]) -> Vec<LambdaOutcome> {
    let base_acc = mean_std(rows.iter().filter(|r| r.1 == 0.0).map(|r| r.3)).0;
    lambdas
        .iter()
        .filter_map(|&l| {
            let sel: Vec<_> = rows.iter().filter(|r| r.1 == l).collect();
            if sel.is_empty() {
                return None;
            }
            let (spread_mean, spread_std) = mean_std(sel.iter().map(|r| r.2));
            let accuracy_mean = mean_std(sel.iter().map(|r| r.3)).0;
            Some(LambdaOutcome {
                lambda: l,
                spread_mean,
                spread_std,
                accuracy_mean,
                accuracy_drop: base_acc - accuracy_mean,
                runs: sel.len(),
            })
        })
        .collect()
}

fn choose(outcomes: &[LambdaOutcome], budget: f64) -> Option<&LambdaOutcome> {
    let grid: Vec<(f64, f64, f64)> = outcomes.iter().map(|o| (o.lambda, o.spread_mean, o.accuracy_mean)).collect();
    if grid.first().map(|g| g.0) != Some(0.0) {
        return None;
    }
    super::acceptance::select_lambda(&grid, budget).map(|i| &outcomes[i])
}

/// Runs the sweep, then picks the penalty weight with the smallest mean
/// accuracy spread whose overall accuracy stays within the budget.
pub fn mitigation_study(config_path: impl AsRef<Path>, opts: &RunOptions) -> Result<MitigationReport> {
    let cfg = ExperimentConfig::load(config_path)?;
    mitigation_config(&cfg, opts)
}

pub fn mitigation_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<MitigationReport> {
    let mut lambdas = cfg.mitigation.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let summary = run_config(cfg, opts)?;
    let dir = summary.dir;
    let manifest = RunManifest::read(&dir)?;
    let split = cfg.load_split()?;
    let rows = run_accuracies(&dir, &manifest, &split.test)?;
    let outcomes = summarize(&rows, &lambdas);
    if outcomes.is_empty() || outcomes[0].lambda != 0.0 {
        return Err(Error::StudyFailed("no completed baseline (λ = 0) runs".into()));
    }
    let budget = cfg.mitigation.accuracy_budget;
    let best = choose(&outcomes, budget).ok_or_else(|| Error::StudyFailed("no λ satisfies the budget".into()))?;
    let reduction = if outcomes[0].spread_mean > 0.0 {
        1.0 - best.spread_mean / outcomes[0].spread_mean
    } else {
        0.0
    };

    let per_seed = manifest
        .seeds
        .iter()
        .filter_map(|&seed| {
            let seed_rows: Vec<_> = rows.iter().copied().filter(|r| r.0 == seed).collect();
            let o = summarize(&seed_rows, &lambdas);
            let pick = choose(&o, budget)?;
            Some(SeedSelection {
                seed,
                selected_lambda: pick.lambda,
                baseline_spread: o[0].spread_mean,
                selected_spread: pick.spread_mean,
                accuracy_drop: pick.accuracy_drop,
            })
        })
        .collect();
    let report = MitigationReport {
        accuracy_budget: budget,
        selected_lambda: best.lambda,
        reduction,
        outcomes,
        per_seed,
    };

    write_rows(
        &dir.join("mitigation.csv"),
        &["lambda", "spread_mean", "spread_std", "accuracy_mean", "accuracy_drop", "runs", "selected"],
        &report.outcomes,
        |o| {
            vec![
                fmt17(o.lambda),
                fmt17(o.spread_mean),
                fmt17(o.spread_std),
                fmt17(o.accuracy_mean),
                fmt17(o.accuracy_drop),
                o.runs.to_string(),
                (o.lambda == report.selected_lambda).to_string(),
            ]
        },
    )?;
    fs::write(dir.join("mitigation.json"), serde_json::to_vec_pretty(&report)?)?;
    let mut manifest = manifest;
    for name in ["mitigation.csv", "mitigation.json"] {
        if !manifest.artifacts.iter().any(|a| a == name) {
            manifest.artifacts.push(name.into());
        }
    }
    manifest.write(&dir)?;
    Ok(report)
}

impl MitigationReport {
    /// Before/after table in plain text.
    pub fn table(&self) -> String {
        let mut s = format!("{:>10} {:>12} {:>12} {:>10}\n", "lambda", "spread", "accuracy", "drop");
        for o in &self.outcomes {
            s.push_str(&format!(
                "{:>10} {:>12.4} {:>12.4} {:>10.4}{}\n",
                o.lambda,
                o.spread_mean,
                o.accuracy_mean,
                o.accuracy_drop,
                if o.lambda == self.selected_lambda { "  <- selected" } else { "" }
            ));
        }
        s.push_str(&format!("spread reduction at λ* = {}: {:.1}%\n", self.selected_lambda, 100.0 * self.reduction));
        s
    }
}

/// Text summary of a finished run directory.
pub fn report(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let manifest = RunManifest::read(dir)?;
    let metrics = read_metrics(dir)?;
    let sens = read_sensitivity(dir)?;
    let failed: Vec<&RunRecord> = manifest
        .runs
        .iter()
        .filter(|r| matches!(r.status, RunStatus::Failed { .. }))
        .collect();
    let mut out = format!(
        "{}\nconfig {}  profiles {}  seeds {:?}  lambdas {:?}\nruns {} ({} failed)\n\n",
        dir.display(),
        &manifest.config_hash[..12],
        manifest.profile_ids.join(","),
        manifest.seeds,
        manifest.lambdas,
        manifest.runs.len(),
        failed.len()
    );
    for r in &failed {
        if let RunStatus::Failed { message } = &r.status {
            out.push_str(&format!("  failed {}: {message}\n", r.run_id));
        }
    }
    out.push_str(&format!(
        "{:>10} {:>8} {:>12} {:>12} {:>12} {:>12} {:>10}\n",
        "lambda", "group", "delta", "grad_norm", "lambda_max", "slack", "accuracy"
    ));
    let mut groups: Vec<String> = Vec::new();
    for r in &metrics {
        if !groups.contains(&r.group) {
            groups.push(r.group.clone());
        }
    }
    for &lambda in &manifest.lambdas {
        for g in &groups {
            let m: Vec<&MetricsRow> = metrics.iter().filter(|r| r.lambda == lambda && &r.group == g).collect();
            let s: Vec<&SensitivityRow> = sens.iter().filter(|r| r.lambda == lambda && &r.group == g).collect();
            if m.is_empty() {
                continue;
            }
            out.push_str(&format!(
                "{:>10} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.4}\n",
                lambda,
                g,
                mean_std(s.iter().map(|r| r.delta)).0,
                mean_std(m.iter().map(|r| r.grad_norm)).0,
                mean_std(m.iter().map(|r| r.lambda_max)).0,
                mean_std(s.iter().map(|r| r.slack)).0,
                mean_std(m.iter().map(|r| r.accuracy)).0,
            ));
        }
    }
    if let Ok(text) = fs::read_to_string(dir.join("mitigation.json")) {
        let m: MitigationReport = serde_json::from_str(&text)?;
        out.push('\n');
        out.push_str(&m.table());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std([1.0, 2.0, 3.0, 4.0].into_iter());
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(std::iter::once(7.0)), (7.0, 0.0));
    }

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn selection_respects_budget() {
        let o = |lambda, spread_mean, accuracy_mean| LambdaOutcome {
            lambda,
            spread_mean,
            spread_std: 0.0,
            accuracy_mean,
            accuracy_drop: 0.0,
            runs: 1,
        };
        let outcomes = vec![o(0.0, 0.3, 0.9), o(0.01, 0.2, 0.89), o(0.1, 0.1, 0.85)];
        assert_eq!(choose(&outcomes, 0.02).unwrap().lambda, 0.01);
        assert_eq!(choose(&outcomes, 0.1).unwrap().lambda, 0.1);
        assert_eq!(choose(&outcomes[..1], 0.02).unwrap().lambda, 0.0);
    }
}

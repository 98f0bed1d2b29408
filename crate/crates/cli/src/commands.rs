use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context};
use satlab_core::gnn::{
    curves_csv, evaluate_accuracy, examples_from_dataset, resume_with, Checkpoint, GnnModel, Metrics, TrainState,
    TrainingExample,
};
use satlab_core::graph::EncodeOptions;
use satlab_core::rng::derive_seed;
use satlab_core::sweep::{anneal_csv, anneal_sweep, phase_csv, phase_sweep, AnnealPoint, PhasePoint};
use satlab_core::{build_balanced_dataset, Dataset, GnnError};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const CONFIG_FILE: &str = "config.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RUN_RECORD_FILE: &str = "run_record.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PHASE_FILE: &str = "phase.csv";
pub const ANNEAL_FILE: &str = "anneal.csv";

// Salts separating the seed streams of different consumers of the run seed.
const SPLIT_SALT: u64 = 0x5350_4c49;
const MODEL_SALT: u64 = 0x4d4f_4445;
const SOLVER_SALT: u64 = 0x534f_4c56;

/// Seed of dataset split `index` (0 train, 1 val, 2 test).
pub fn split_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[SPLIT_SALT, index as u64])
}

pub fn model_seed(seed: u64) -> u64 {
    derive_seed(seed, &[MODEL_SALT])
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: String,
    pub count: usize,
    pub num_clauses: usize,
    pub attempts: u64,
}

/// Builds balanced train/val/test datasets under `out/{train,val,test}`.
pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<SplitSummary>> {
    let d = &cfg.data;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let counts = [d.train, d.val, d.test];
    let mut seen = HashSet::new();
    let mut summary = Vec::new();
    for (i, (&name, &count)) in SPLITS.iter().zip(&counts).enumerate() {
        let ds = build_balanced_dataset(d.num_vars, d.ratio, count, split_seed(cfg.seed, i))
            .with_context(|| format!("building {name} split"))?;
        for r in &ds.manifest.records {
            ensure!(seen.insert(r.seed), "instance seed {} appears in more than one split", r.seed);
        }
        let dir = out.join(name);
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        ds.write(&dir)?;
        summary.push(SplitSummary {
            split: name.to_string(),
            count,
            num_clauses: ds.manifest.spec.num_clauses,
            attempts: ds.manifest.total_attempts,
        });
    }
    write_json(&out.join(CONFIG_FILE), cfg)?;
    Ok(summary)
}

fn load_split(
    data: &Path,
    name: &str,
    cfg: &ExperimentConfig,
    m_max: Option<usize>,
) -> anyhow::Result<(Vec<TrainingExample>, usize)> {
    let dir = data.join(name);
    let ds = Dataset::load(&dir).with_context(|| format!("loading {}", dir.display()))?;
    let m = m_max.unwrap_or(ds.manifest.spec.num_clauses);
    let mut options = EncodeOptions::new(m);
    options.compress_edge_labels = cfg.model.compress_edge_labels;
    let examples = examples_from_dataset(&ds, options).with_context(|| format!("encoding {name} split"))?;
    Ok((examples, m))
}

/// Train, validation and test examples sharing the train split's edge-label width.
pub fn load_examples(cfg: &ExperimentConfig, data: &Path) -> anyhow::Result<[Vec<TrainingExample>; 3]> {
    let (train, m) = load_split(data, SPLITS[0], cfg, None)?;
    let (val, _) = load_split(data, SPLITS[1], cfg, Some(m))?;
    let (test, _) = load_split(data, SPLITS[2], cfg, Some(m))?;
    Ok([train, val, test])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    /// Metrics of the parameters with the best validation accuracy.
    pub metrics: SplitMetrics,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub adjoint_failures: usize,
    pub curves: PathBuf,
    pub checkpoint: PathBuf,
    pub wall_clock_seconds: f64,
}

/// Trains on `data` and writes curves, checkpoint and run record to `out`.
/// With `resume`, continues from `out/checkpoint.json`.
pub fn cmd_train(cfg: &ExperimentConfig, data: &Path, out: &Path, resume: bool) -> anyhow::Result<RunRecord> {
    let start = Instant::now();
    let [train, val, test] = load_examples(cfg, data)?;
    ensure!(!train.is_empty(), "training split is empty");
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let curves_path = out.join(CURVES_FILE);
    let state = if resume {
        let ck = Checkpoint::load(&ckpt_path)?;
        let g = &train[0].graph;
        let m = &ck.state.model;
        if m.node_label_dim != g.node_label_dim || m.edge_label_dim != g.edge_label_dim {
            bail!("checkpoint model does not match the dataset's label dimensions");
        }
        ck.state
    } else {
        let mc = &cfg.model;
        let model =
            GnnModel::for_graph(mc.variant, mc.state_dim, mc.hidden_dim, mc.mu, &train[0].graph, model_seed(cfg.seed));
        TrainState::new(model, &cfg.training.rprop)
    };
    let tc = cfg.training;
    let outcome = resume_with(state, &train, &val, &tc, |st| {
        let ck = Checkpoint { config: tc, state: st.clone() };
        let save = || -> anyhow::Result<()> {
            write_atomic(&ckpt_path, ck.to_json()?.as_bytes())?;
            write_atomic(&curves_path, curves_csv(&st.curve).as_bytes())
        };
        save().map_err(|e| GnnError::Checkpoint(format!("{e:#}")))
    })?;
    // Also covers the case where no epoch ran.
    write_atomic(&ckpt_path, Checkpoint { config: tc, state: outcome.state.clone() }.to_json()?.as_bytes())?;
    write_atomic(&curves_path, curves_csv(&outcome.curve).as_bytes())?;

    let fp = &tc.fixed_point;
    let best = &outcome.best_model;
    let metrics = SplitMetrics {
        train: evaluate_accuracy(best, &train, fp)?,
        val: evaluate_accuracy(best, &val, fp)?,
        test: evaluate_accuracy(best, &test, fp)?,
    };
    let record = RunRecord {
        config: cfg.clone(),
        metrics,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.state.epochs_done,
        adjoint_failures: outcome.state.adjoint_failures,
        curves: PathBuf::from(CURVES_FILE),
        checkpoint: PathBuf::from(CHECKPOINT_FILE),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join(RUN_RECORD_FILE), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub split: String,
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub metrics: Metrics,
}

/// Evaluates the best parameters of a checkpoint on one split.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    data: &Path,
    checkpoint: &Path,
    split: &str,
    out: &Path,
) -> anyhow::Result<EvalRecord> {
    let index = SPLITS.iter().position(|s| *s == split).with_context(|| format!("unknown split {split:?}"))?;
    let examples = load_examples(cfg, data)?;
    let ck = Checkpoint::load(checkpoint)?;
    let metrics = evaluate_accuracy(&ck.state.best_model, &examples[index], &ck.config.fixed_point)?;
    let record = EvalRecord {
        split: split.to_string(),
        checkpoint: checkpoint.to_path_buf(),
        best_epoch: ck.state.best_epoch,
        metrics,
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join(METRICS_FILE), &record)?;
    Ok(record)
}

pub fn cmd_phase_sweep(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<PhasePoint>> {
    let p = &cfg.phase;
    if let Some(r) = p.ratios.iter().find(|r| !(1.0..=12.0).contains(*r)) {
        bail!("ratio {r} outside [1, 12]");
    }
    let points = phase_sweep(p.num_vars, &p.ratios, p.samples, cfg.seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join(PHASE_FILE), phase_csv(&points).as_bytes())?;
    Ok(points)
}

pub fn cmd_anneal_sweep(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<AnnealPoint>> {
    let a = &cfg.anneal;
    let solver = satlab_core::AnnealConfig { seed: derive_seed(cfg.seed, &[SOLVER_SALT]), ..a.solver };
    let points = anneal_sweep(&a.sizes, a.ratio, a.instances, &solver, cfg.seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join(ANNEAL_FILE), anneal_csv(&points).as_bytes())?;
    Ok(points)
}

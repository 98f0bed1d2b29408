//! Balanced, oracle-labeled random 3-SAT datasets.
//!
//! A dataset directory holds `manifest.json` plus one DIMACS file per record.
//! Records name their file by a path relative to the manifest and store the
//! generator seed, so every instance can be regenerated and re-checked.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{generate_random_3sat, parse_dimacs, write_dimacs, CnfError, CnfFormula};
use crate::oracle::{dpll_sat, Label, OracleError};
use crate::rng::derive_seed;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Rejection sampling gives up after this many candidates per requested record.
pub const ATTEMPTS_PER_RECORD: u64 = 1000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset count must be even and positive, got {0}")]
    OddCount(usize),
    #[error("clause-to-variable ratio must be positive and finite, got {0}")]
    InvalidRatio(f64),
    #[error("attempt budget of {attempts} exhausted: found {sat} SAT and {unsat} UNSAT, need {needed} of each")]
    BudgetExhausted { attempts: u64, sat: usize, unsat: usize, needed: usize },
    #[error("record {path}: {reason}")]
    Inconsistent { path: String, reason: String },
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_vars: usize,
    pub ratio: f64,
    pub count: usize,
    pub seed: u64,
    /// `round(ratio * num_vars)`; also the edge-label width used for graphs.
    pub num_clauses: usize,
}

impl DatasetSpec {
    pub fn new(num_vars: usize, ratio: f64, count: usize, seed: u64) -> Self {
        Self { num_vars, ratio, count, seed, num_clauses: clause_count(num_vars, ratio) }
    }
}

pub fn clause_count(num_vars: usize, ratio: f64) -> usize {
    (ratio * num_vars as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub path: String,
    pub label: Label,
    pub seed: u64,
    /// Candidates drawn when this record was accepted (1-based).
    pub attempts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub records: Vec<DatasetRecord>,
    pub total_attempts: u64,
}

impl DatasetManifest {
    pub fn count_label(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// A manifest together with its formulas, in record order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub formulas: Vec<CnfFormula>,
}

impl Dataset {
    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.manifest.records.iter().map(|r| r.label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CnfFormula, Label)> {
        self.formulas.iter().zip(self.labels())
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    /// Writes `manifest.json` and the DIMACS files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (record, formula) in self.manifest.records.iter().zip(&self.formulas) {
            let path = dir.join(&record.path);
            fs::write(&path, write_dimacs(formula)).map_err(|e| io_err(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.manifest.to_json()).map_err(|e| io_err(&path, e))
    }

    /// Reads a dataset directory written by [`Dataset::write`].
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let formulas = manifest
            .records
            .iter()
            .map(|r| {
                let p = dir.join(&r.path);
                let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
                Ok(parse_dimacs(&text)?)
            })
            .collect::<Result<Vec<_>, DatasetError>>()?;
        Ok(Self { manifest, formulas })
    }

    /// Regenerates each record from its seed and re-labels it with the oracle.
    pub fn verify(&self) -> Result<(), DatasetError> {
        let spec = &self.manifest.spec;
        for (record, formula) in self.manifest.records.iter().zip(&self.formulas) {
            let regenerated = generate_random_3sat(spec.num_vars, spec.num_clauses, record.seed)?;
            if &regenerated != formula {
                return Err(inconsistent(record, "formula does not match its seed"));
            }
            if dpll_sat(formula)?.status != record.label {
                return Err(inconsistent(record, "label disagrees with the oracle"));
            }
        }
        if self.manifest.count_label(Label::Sat) != self.manifest.count_label(Label::Unsat) {
            return Err(DatasetError::Inconsistent { path: MANIFEST_FILE.into(), reason: "unbalanced labels".into() });
        }
        Ok(())
    }
}

fn inconsistent(record: &DatasetRecord, reason: &str) -> DatasetError {
    DatasetError::Inconsistent { path: record.path.clone(), reason: reason.to_string() }
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), source }
}

/// Seed of the `attempt`-th candidate (0-based) of a dataset.
pub fn candidate_seed(dataset_seed: u64, attempt: u64) -> u64 {
    derive_seed(dataset_seed, &[attempt])
}

pub fn build_balanced_dataset(num_vars: usize, ratio: f64, count: usize, seed: u64) -> Result<Dataset, DatasetError> {
    build_balanced_dataset_with_budget(num_vars, ratio, count, seed, ATTEMPTS_PER_RECORD * count as u64)
}

/// Rejection-samples random 3-SAT instances, labels each with DPLL, and keeps
/// them in generation order until `count / 2` of each label are collected.
pub fn build_balanced_dataset_with_budget(
    num_vars: usize,
    ratio: f64,
    count: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<Dataset, DatasetError> {
    if count == 0 || !count.is_multiple_of(2) {
        return Err(DatasetError::OddCount(count));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let spec = DatasetSpec::new(num_vars, ratio, count, seed);
    let needed = count / 2;
    let (mut sat, mut unsat) = (0usize, 0usize);
    let mut records = Vec::with_capacity(count);
    let mut formulas = Vec::with_capacity(count);
    let mut attempt = 0u64;

    while sat < needed || unsat < needed {
        if attempt >= max_attempts {
            return Err(DatasetError::BudgetExhausted { attempts: attempt, sat, unsat, needed });
        }
        let instance_seed = candidate_seed(seed, attempt);
        attempt += 1;
        let formula = generate_random_3sat(num_vars, spec.num_clauses, instance_seed)?;
        let label = dpll_sat(&formula)?.status;
        let slot = match label {
            Label::Sat => &mut sat,
            Label::Unsat => &mut unsat,
        };
        if *slot == needed {
            continue;
        }
        *slot += 1;
        records.push(DatasetRecord {
            path: format!("{:05}.cnf", records.len()),
            label,
            seed: instance_seed,
            attempts: attempt,
        });
        formulas.push(formula);
    }

    Ok(Dataset { manifest: DatasetManifest { spec, records, total_attempts: attempt }, formulas })
}

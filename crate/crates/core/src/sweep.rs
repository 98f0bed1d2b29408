//! Empirical sweeps: satisfiable fraction against clause-to-variable ratio,
//! and miss rate of the circuit solver against problem size.

use serde::{Deserialize, Serialize};

use crate::circuit::{anneal_solve, encode_w, AnnealConfig, SolveStatus};
use crate::cnf::generate_random_3sat;
use crate::dataset::clause_count;
use crate::oracle::{dpll_sat, OracleError};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub ratio: f64,
    pub samples: usize,
    pub satisfiable: usize,
    pub sat_fraction: f64,
}

impl PhasePoint {
    /// Binomial standard error of `sat_fraction`.
    pub fn std_error(&self) -> f64 {
        let p = self.sat_fraction;
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }
}

pub const PHASE_CSV_HEADER: &str = "ratio,samples,satisfiable,sat_fraction";

/// Labels `samples` random 3-SAT instances at each ratio.
pub fn phase_sweep(num_vars: usize, ratios: &[f64], samples: usize, seed: u64) -> Result<Vec<PhasePoint>, SweepError> {
    ratios
        .iter()
        .enumerate()
        .map(|(ri, &ratio)| {
            let m = clause_count(num_vars, ratio);
            let mut satisfiable = 0;
            for k in 0..samples {
                let f = generate_random_3sat(num_vars, m, derive_seed(seed, &[ri as u64, k as u64]))?;
                satisfiable += dpll_sat(&f)?.is_sat() as usize;
            }
            Ok(PhasePoint { ratio, samples, satisfiable, sat_fraction: satisfiable as f64 / samples.max(1) as f64 })
        })
        .collect()
}

pub fn phase_csv(points: &[PhasePoint]) -> String {
    let mut out = format!("{PHASE_CSV_HEADER}\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.ratio, p.samples, p.satisfiable, p.sat_fraction));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Cnf(#[from] crate::cnf::CnfError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("only {found} satisfiable instances among {generated} generated at n = {num_vars}, wanted {wanted}")]
    NotEnoughSatisfiable { num_vars: usize, generated: usize, found: usize, wanted: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealPoint {
    pub n: usize,
    /// Instances generated to collect the satisfiable ones.
    pub instances: usize,
    pub satisfiable: usize,
    pub solved: usize,
    pub miss_rate: f64,
}

pub const ANNEAL_CSV_HEADER: &str = "n,instances,satisfiable,solved,miss_rate";

/// Gives up on a grid point after this many generated instances per wanted one.
pub const MAX_GENERATED_PER_SATISFIABLE: usize = 100;

/// For each size, draws random 3-SAT instances until `satisfiable_per_point`
/// of them are satisfiable (by DPLL), runs the annealing solver on those and
/// reports the fraction it fails to solve.
pub fn anneal_sweep(
    sizes: &[usize],
    ratio: f64,
    satisfiable_per_point: usize,
    solver: &AnnealConfig,
    seed: u64,
) -> Result<Vec<AnnealPoint>, SweepError> {
    sizes
        .iter()
        .map(|&n| {
            let m = clause_count(n, ratio);
            let cap = satisfiable_per_point * MAX_GENERATED_PER_SATISFIABLE;
            let (mut instances, mut satisfiable, mut solved) = (0, 0, 0);
            while satisfiable < satisfiable_per_point {
                if instances == cap {
                    return Err(SweepError::NotEnoughSatisfiable {
                        num_vars: n,
                        generated: instances,
                        found: satisfiable,
                        wanted: satisfiable_per_point,
                    });
                }
                let k = instances as u64;
                instances += 1;
                let f = generate_random_3sat(n, m, derive_seed(seed, &[n as u64, k]))?;
                if !dpll_sat(&f)?.is_sat() {
                    continue;
                }
                satisfiable += 1;
                let w = encode_w(&f).expect("generated clauses have distinct variables");
                let cfg = AnnealConfig { seed: derive_seed(solver.seed, &[n as u64, k]), ..*solver };
                if anneal_solve(&w, &cfg).status == SolveStatus::Solved {
                    solved += 1;
                }
            }
            let miss_rate = if satisfiable == 0 { 0.0 } else { (satisfiable - solved) as f64 / satisfiable as f64 };
            Ok(AnnealPoint { n, instances, satisfiable, solved, miss_rate })
        })
        .collect()
}

pub fn anneal_csv(points: &[AnnealPoint]) -> String {
    let mut out = format!("{ANNEAL_CSV_HEADER}\n");
    for p in points {
        out.push_str(&format!("{},{},{},{},{}\n", p.n, p.instances, p.satisfiable, p.solved, p.miss_rate));
    }
    out
}

//! Satisfiability laboratory: random 3-SAT instances, exact oracles, a
//! variable-variable graph encoding of CNF formulas, fixed-point graph neural
//! network classifiers, and a differentiable circuit relaxation of SAT.
//!
//! All randomness flows through [`rng`], which fixes ChaCha8 as the generator
//! so datasets and training runs are bit-reproducible across platforms.

pub mod cnf;
pub mod oracle;
pub mod rng;

pub use cnf::{
    evaluate, generate_random_3sat, parse_dimacs, write_dimacs, Assignment, Clause, CnfError, CnfFormula, Literal,
};
pub use oracle::{brute_force_sat, dpll_sat, Label, OracleError, SatResult, SatStatus};
pub mod dataset;
pub use dataset::{build_balanced_dataset, Dataset, DatasetError, DatasetManifest, DatasetRecord, DatasetSpec};
pub mod graph;
pub mod sweep;
pub use graph::{encode_var_var, graph_stats, EncodeOptions, GraphError, VarVarGraph};
pub mod circuit;
pub use circuit::{
    anneal_solve, approx_sat, approx_sat_grad, encode_w, round_assignment, sat_step, AnnealConfig, ApproxSat,
    CircuitError, RelaxedPoint, SignVector, SolveOutcome, SolveStatus, WMatrix,
};
pub mod gnn;
pub use gnn::{GnnError, GnnGraph, GnnModel, TrainConfig, TrainingExample, Variant};

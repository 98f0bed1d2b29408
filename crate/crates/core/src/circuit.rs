//! Circuit-style encoding of SAT and its smooth relaxation.
//!
//! A formula becomes a clause-by-variable sign matrix `W`. With `x` in
//! `{-1, 1}^N` the term `W_i·x + W_i²·x² - 0.5` is positive exactly when
//! clause `i` has a true literal, and a step function over the sum of clause
//! steps recovers satisfaction. The relaxation swaps the steps for sigmoids
//! of steepness `β` and `x` for `tanh(x̂)`, giving a smooth objective whose
//! outer pre-activation can only be positive at points that round to a
//! satisfying assignment.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Assignment, CnfFormula};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("clause {clause} contains variable {var} with both signs")]
    TautologicalClause { clause: usize, var: u32 },
    #[error("vector has {got} entries, W has {expected} columns")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Clause-by-variable matrix over {-1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WMatrix {
    num_clauses: usize,
    num_vars: usize,
    rows: Vec<Vec<(usize, i8)>>,
}

impl WMatrix {
    pub fn num_clauses(&self) -> usize {
        self.num_clauses
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Nonzero entries of row `i` as `(column, sign)`, by increasing column.
    pub fn row(&self, i: usize) -> &[(usize, i8)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.rows[i].iter().find(|&&(c, _)| c == j).map_or(0, |&(_, s)| s)
    }

    pub fn to_dense(&self) -> Vec<Vec<i8>> {
        (0..self.num_clauses).map(|i| (0..self.num_vars).map(|j| self.get(i, j)).collect()).collect()
    }

    fn check_len(&self, got: usize) -> Result<(), CircuitError> {
        if got == self.num_vars {
            Ok(())
        } else {
            Err(CircuitError::DimensionMismatch { expected: self.num_vars, got })
        }
    }
}

pub fn encode_w(formula: &CnfFormula) -> Result<WMatrix, CircuitError> {
    let mut rows = Vec::with_capacity(formula.clauses.len());
    for (ci, clause) in formula.clauses.iter().enumerate() {
        let mut row: Vec<(usize, i8)> = Vec::with_capacity(clause.len());
        for lit in &clause.literals {
            let sign = if lit.negated { -1 } else { 1 };
            match row.iter().find(|&&(j, _)| j == lit.index()) {
                Some(&(_, s)) if s != sign => {
                    return Err(CircuitError::TautologicalClause { clause: ci, var: lit.var });
                }
                Some(_) => {}
                None => row.push((lit.index(), sign)),
            }
        }
        row.sort_unstable();
        rows.push(row);
    }
    Ok(WMatrix { num_clauses: formula.clauses.len(), num_vars: formula.num_vars, rows })
}

/// An assignment in the ±1 encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignVector(pub Vec<i8>);

impl SignVector {
    pub fn from_assignment(a: &Assignment) -> Self {
        Self(a.values.iter().map(|&v| if v { 1 } else { -1 }).collect())
    }

    pub fn to_assignment(&self) -> Assignment {
        Assignment::new(self.0.iter().map(|&s| s > 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// θ(Σ_i θ(W_i·x + W_i²·x² − 0.5) − M + 0.5): 1 iff `x` satisfies every clause.
pub fn sat_step(w: &WMatrix, x: &SignVector) -> Result<u8, CircuitError> {
    w.check_len(x.len())?;
    let satisfied: f64 = w
        .rows
        .iter()
        .map(|row| {
            let linear: f64 = row.iter().map(|&(j, s)| f64::from(s) * f64::from(x.0[j])).sum();
            let square: f64 = row.iter().map(|&(j, s)| f64::from(s * s) * f64::from(x.0[j] * x.0[j])).sum();
            step(linear + square - 0.5)
        })
        .sum();
    Ok(step(satisfied - w.num_clauses as f64 + 0.5) as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedPoint {
    pub xhat: Vec<f64>,
    /// Steepness of both sigmoids; 1 gives the unscaled objective.
    pub beta: f64,
}

impl RelaxedPoint {
    pub fn new(xhat: Vec<f64>, beta: f64) -> Self {
        Self { xhat, beta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxSat {
    pub value: f64,
    /// `β (Σ_i σ(β c_i) − M + 0.5)`; positive only at satisfying roundings.
    pub outer_preactivation: f64,
}

struct Relaxation {
    t: Vec<f64>,
    clause_sig: Vec<f64>,
    outer: f64,
}

fn relax(w: &WMatrix, point: &RelaxedPoint) -> Relaxation {
    assert_eq!(point.xhat.len(), w.num_vars, "relaxed point has the wrong dimension");
    let beta = point.beta;
    let t: Vec<f64> = point.xhat.iter().map(|x| x.tanh()).collect();
    let clause_sig: Vec<f64> = w
        .rows
        .iter()
        .map(|row| {
            let c: f64 = row.iter().map(|&(j, s)| f64::from(s) * t[j] + t[j] * t[j]).sum::<f64>() - 0.5;
            sigmoid(beta * c)
        })
        .collect();
    let outer = beta * (clause_sig.iter().sum::<f64>() - w.num_clauses as f64 + 0.5);
    Relaxation { t, clause_sig, outer }
}

/// σ(β(Σ_i σ(β(W_i·t + W_i²·t² − 0.5)) − M + 0.5)) with `t = tanh(x̂)`.
pub fn approx_sat(w: &WMatrix, point: &RelaxedPoint) -> ApproxSat {
    let r = relax(w, point);
    ApproxSat { value: sigmoid(r.outer), outer_preactivation: r.outer }
}

/// Gradient of the outer pre-activation with respect to `x̂`.
fn outer_grad(w: &WMatrix, point: &RelaxedPoint, r: &Relaxation) -> Vec<f64> {
    let beta = point.beta;
    let mut g = vec![0.0; w.num_vars];
    for (row, &s) in w.rows.iter().zip(&r.clause_sig) {
        let coeff = beta * beta * s * (1.0 - s);
        for &(j, sign) in row {
            g[j] += coeff * (f64::from(sign) + 2.0 * r.t[j]);
        }
    }
    for (gj, tj) in g.iter_mut().zip(&r.t) {
        *gj *= 1.0 - tj * tj;
    }
    g
}

/// Exact gradient of [`approx_sat`] with respect to `x̂`.
pub fn approx_sat_grad(w: &WMatrix, point: &RelaxedPoint) -> Vec<f64> {
    let r = relax(w, point);
    let scale = sigmoid(r.outer) * sigmoid(-r.outer);
    outer_grad(w, point, &r).into_iter().map(|g| g * scale).collect()
}

/// Gradient of `ln approx_sat`. Same ascent directions as [`approx_sat_grad`]
/// without the vanishing outer-sigmoid factor far from a solution.
pub fn log_approx_sat_grad(w: &WMatrix, point: &RelaxedPoint) -> Vec<f64> {
    let r = relax(w, point);
    let scale = sigmoid(-r.outer);
    outer_grad(w, point, &r).into_iter().map(|g| g * scale).collect()
}

/// Componentwise sign, with 0 mapped to +1.
pub fn round_assignment(xhat: &[f64]) -> SignVector {
    SignVector(xhat.iter().map(|&x| if x >= 0.0 { 1 } else { -1 }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub restarts: usize,
    pub steps: usize,
    pub eta: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Langevin temperature at the first step; decays linearly to 0.
    pub temperature_start: f64,
    /// Iterates are projected onto `[-bound, bound]^N`.
    pub bound: f64,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            steps: 500,
            eta: 0.1,
            beta_start: 0.5,
            beta_end: 5.0,
            temperature_start: 2.0,
            bound: 1.0,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn beta_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.beta_start;
        }
        self.beta_start + (self.beta_end - self.beta_start) * step as f64 / (self.steps - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Solved,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<SignVector>,
    pub restarts_used: usize,
    pub steps_used: usize,
    /// Best relaxed objective reached in each restart.
    #[serde(skip)]
    pub best_objective: Vec<f64>,
}

/// Annealed gradient ascent with random restarts.
///
/// Each restart draws `x̂` uniformly from `[-1, 1]^N` and takes `steps`
/// Langevin ascent steps on `ln approx_sat`, projected onto the box
/// `[-bound, bound]^N`. Over the run `β` rises linearly from `beta_start`
/// to `beta_end` and the temperature falls linearly from
/// `temperature_start` to 0. After every step the point is rounded and
/// checked with [`sat_step`]; the first verified assignment is returned.
///
/// Without noise and the box, the `W²·t²` term drives every coordinate to
/// saturation within a few dozen steps and the iterate freezes at whatever
/// corner its initial signs pointed to.
pub fn anneal_solve(w: &WMatrix, config: &AnnealConfig) -> SolveOutcome {
    let mut steps_used = 0;
    let mut best_objective = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let mut rng = rng_from_seed(derive_seed(config.seed, &[restart as u64]));
        let mut xhat: Vec<f64> = (0..w.num_vars).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let mut best = f64::NEG_INFINITY;
        for step in 0..config.steps {
            let point = RelaxedPoint::new(xhat, config.beta_at(step));
            let grad = log_approx_sat_grad(w, &point);
            xhat = point.xhat;
            let temp = config.temperature_start * (1.0 - step as f64 / config.steps as f64);
            for (x, g) in xhat.iter_mut().zip(&grad) {
                let noise: f64 = rng.sample(StandardNormal);
                *x =
                    (*x + config.eta * g + (2.0 * config.eta * temp).sqrt() * noise).clamp(-config.bound, config.bound);
            }
            steps_used += 1;
            best = best.max(approx_sat(w, &RelaxedPoint::new(xhat.clone(), point.beta)).value);
            let rounded = round_assignment(&xhat);
            if sat_step(w, &rounded).expect("dimensions agree") == 1 {
                best_objective.push(best);
                return SolveOutcome {
                    status: SolveStatus::Solved,
                    model: Some(rounded),
                    restarts_used: restart + 1,
                    steps_used,
                    best_objective,
                };
            }
        }
        best_objective.push(best);
    }
    SolveOutcome {
        status: SolveStatus::Unknown,
        model: None,
        restarts_used: config.restarts,
        steps_used,
        best_objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::fixtures::sample_formula;
    use crate::cnf::{evaluate, generate_random_3sat};
    use crate::oracle::brute_force_sat;
    use proptest::prelude::*;

    fn sample_w() -> WMatrix {
        encode_w(&sample_formula()).unwrap()
    }

    /// Central differences of `f` at `x`.
    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[j] += h;
                m[j] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if scale < 1e-13 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    }

    #[test]
    fn encodes_sample_formula() {
        assert_eq!(sample_w().to_dense(), vec![vec![1, -1, 0, 1], vec![0, 1, 1, 0], vec![0, 0, -1, 1]]);
    }

    #[test]
    fn encodes_degenerate_formulas() {
        let w = encode_w(&CnfFormula::new(3, vec![])).unwrap();
        assert_eq!((w.num_clauses(), w.num_vars()), (0, 3));
        let w = encode_w(&CnfFormula::from_dimacs_clauses(2, &[&[-2]])).unwrap();
        assert_eq!(w.to_dense(), vec![vec![0, -1]]);
        let w = encode_w(&CnfFormula::from_dimacs_clauses(2, &[&[2, 2, 1]])).unwrap();
        assert_eq!(w.to_dense(), vec![vec![1, 1]]);
    }

    #[test]
    fn rejects_tautological_clause() {
        let f = CnfFormula::from_dimacs_clauses(2, &[&[1, 2], &[2, -2]]);
        assert_eq!(encode_w(&f), Err(CircuitError::TautologicalClause { clause: 1, var: 2 }));
    }

    #[test]
    fn sat_step_examples() {
        let w = sample_w();
        assert_eq!(sat_step(&w, &SignVector(vec![1, 1, 1, 1])).unwrap(), 1);
        assert_eq!(sat_step(&w, &SignVector(vec![-1, 1, 1, -1])).unwrap(), 0);
        let empty = encode_w(&CnfFormula::new(2, vec![])).unwrap();
        assert_eq!(sat_step(&empty, &SignVector(vec![-1, -1])).unwrap(), 1);
        assert_eq!(sat_step(&w, &SignVector(vec![1, 1])), Err(CircuitError::DimensionMismatch { expected: 4, got: 2 }));
    }

    #[test]
    fn sat_step_matches_evaluate_exhaustively() {
        for seed in 0..30u64 {
            let n = 3 + seed as usize % 8;
            let f = generate_random_3sat(n, (4.3 * n as f64) as usize, seed).unwrap();
            let w = encode_w(&f).unwrap();
            for bits in 0..1u64 << n {
                let a = Assignment::from_bits(n, bits);
                let expected = evaluate(&f, &a).unwrap();
                assert_eq!(sat_step(&w, &SignVector::from_assignment(&a)).unwrap() == 1, expected);
            }
        }
    }

    #[test]
    fn approx_sat_without_clauses() {
        let w = encode_w(&CnfFormula::new(3, vec![])).unwrap();
        let r = approx_sat(&w, &RelaxedPoint::new(vec![0.3, -2.0, 5.0], 1.0));
        assert!((r.value - 0.622_459_331_201_854_6).abs() < 1e-15);
        assert_eq!(r.outer_preactivation, 0.5);
        assert!(approx_sat_grad(&w, &RelaxedPoint::new(vec![0.3, -2.0, 5.0], 1.0)).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unused_variable_has_zero_gradient() {
        let f = CnfFormula::from_dimacs_clauses(4, &[&[1, -2], &[2, 4]]);
        let w = encode_w(&f).unwrap();
        let g = approx_sat_grad(&w, &RelaxedPoint::new(vec![0.1, -0.4, 0.7, 0.2], 2.0));
        assert_eq!(g[2], 0.0);
        assert!(g[0] != 0.0 && g[1] != 0.0 && g[3] != 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..40u64 {
            let n = 3 + seed as usize % 8;
            let m = 1 + seed as usize % (2 * n);
            let w = encode_w(&generate_random_3sat(n, m, seed).unwrap()).unwrap();
            let mut rng = rng_from_seed(seed);
            let beta = rng.gen_range(0.5..3.0);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let point = RelaxedPoint::new(x.clone(), beta);
            let fd = fd_grad(|y| approx_sat(&w, &RelaxedPoint::new(y.to_vec(), beta)).value, &x, 1e-5);
            for (a, b) in approx_sat_grad(&w, &point).iter().zip(&fd) {
                assert!(rel_err(*a, *b) < 1e-6, "seed {seed}: {a} vs {b}");
            }
            let fd_log = fd_grad(|y| approx_sat(&w, &RelaxedPoint::new(y.to_vec(), beta)).value.ln(), &x, 1e-5);
            for (a, b) in log_approx_sat_grad(&w, &point).iter().zip(&fd_log) {
                assert!(rel_err(*a, *b) < 1e-6, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rounding() {
        assert_eq!(round_assignment(&[0.3, -2.0, 0.0]), SignVector(vec![1, -1, 1]));
        let v = [1.0, -1.0, 1.0];
        assert_eq!(round_assignment(&v), SignVector(vec![1, -1, 1]));
    }

    proptest! {
        #[test]
        fn rounding_is_odd_and_idempotent(x in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            prop_assume!(x.iter().all(|v| *v != 0.0));
            let r = round_assignment(&x);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let rn = round_assignment(&neg);
            prop_assert!(r.0.iter().zip(&rn.0).all(|(a, b)| *a == -*b));
            let as_f: Vec<f64> = r.0.iter().map(|&s| f64::from(s)).collect();
            prop_assert_eq!(round_assignment(&as_f), r);
        }

        #[test]
        fn approx_sat_in_open_unit_interval(seed in any::<u64>(), beta in 0.1f64..5.0) {
            let w = encode_w(&generate_random_3sat(6, 20, seed).unwrap()).unwrap();
            let mut rng = rng_from_seed(seed);
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let v = approx_sat(&w, &RelaxedPoint::new(x, beta)).value;
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn relaxation_is_sound() {
        let mut positives = 0;
        for seed in 0..2000u64 {
            let n = 3 + seed as usize % 6;
            let m = 1 + seed as usize % 8;
            let w = encode_w(&generate_random_3sat(n, m, seed).unwrap()).unwrap();
            let mut rng = rng_from_seed(seed);
            let beta = rng.gen_range(0.5..20.0);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let r = approx_sat(&w, &RelaxedPoint::new(x.clone(), beta));
            if r.value > 0.5 || r.outer_preactivation > 0.0 {
                positives += 1;
                assert_eq!(sat_step(&w, &round_assignment(&x)).unwrap(), 1, "seed {seed}");
            }
        }
        assert!(positives > 100, "soundness check exercised only {positives} positive cases");
    }

    #[test]
    fn anneal_solves_sample_formula() {
        let w = sample_w();
        let out = anneal_solve(&w, &AnnealConfig::default());
        assert_eq!(out.status, SolveStatus::Solved);
        let model = out.model.unwrap();
        assert_eq!(sat_step(&w, &model).unwrap(), 1);
        assert!(evaluate(&sample_formula(), &model.to_assignment()).unwrap());
        assert!(brute_force_sat(&sample_formula()).unwrap().is_sat());
    }

    #[test]
    fn anneal_never_claims_contradiction() {
        let w = encode_w(&CnfFormula::from_dimacs_clauses(1, &[&[1], &[-1]])).unwrap();
        let cfg = AnnealConfig { restarts: 5, steps: 100, ..AnnealConfig::default() };
        let out = anneal_solve(&w, &cfg);
        assert_eq!(out.status, SolveStatus::Unknown);
        assert!(out.model.is_none());
        assert_eq!(out.restarts_used, 5);
        assert_eq!(out.steps_used, 500);
        assert_eq!(out.best_objective.len(), 5);
    }

    #[test]
    fn anneal_is_deterministic() {
        let w = encode_w(&generate_random_3sat(20, 86, 11).unwrap()).unwrap();
        let cfg = AnnealConfig { seed: 3, ..AnnealConfig::default() };
        assert_eq!(anneal_solve(&w, &cfg), anneal_solve(&w, &cfg));
    }
}

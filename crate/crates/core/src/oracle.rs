//! Exact satisfiability oracles.
//!
//! [`brute_force_sat`] enumerates assignments and is the ground truth for
//! small formulas; [`dpll_sat`] is a backtracking solver with unit
//! propagation and pure-literal elimination used to label datasets.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Assignment, CnfFormula};

pub const DEFAULT_BRUTE_FORCE_LIMIT: usize = 24;
pub const DEFAULT_DPLL_NODE_LIMIT: u64 = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("brute force limited to {limit} variables, formula has {num_vars}")]
    TooManyVariables { num_vars: usize, limit: usize },
    #[error("DPLL gave up after {nodes} search nodes")]
    ResourceExhausted { nodes: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "UNSAT")]
    Unsat,
}

pub type SatStatus = Label;

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Sat => "SAT",
            Label::Unsat => "UNSAT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatResult {
    pub status: SatStatus,
    /// Present iff `status` is SAT.
    pub model: Option<Assignment>,
}

impl SatResult {
    pub fn sat(model: Assignment) -> Self {
        Self { status: Label::Sat, model: Some(model) }
    }

    pub fn unsat() -> Self {
        Self { status: Label::Unsat, model: None }
    }

    pub fn is_sat(&self) -> bool {
        self.status == Label::Sat
    }
}

pub fn brute_force_sat(formula: &CnfFormula) -> Result<SatResult, OracleError> {
    brute_force_sat_with_limit(formula, DEFAULT_BRUTE_FORCE_LIMIT)
}

/// Exhaustive search. Assignments are visited in lexicographic order of
/// `(x1, ..., xn)` with false < true, so the returned model is the
/// lexicographically first one.
pub fn brute_force_sat_with_limit(formula: &CnfFormula, limit: usize) -> Result<SatResult, OracleError> {
    let n = formula.num_vars;
    if n > limit || n > 63 {
        return Err(OracleError::TooManyVariables { num_vars: n, limit: limit.min(63) });
    }
    // x1 is the most significant bit of the counter.
    let bit = |var: u32| 1u64 << (n - var as usize);
    let masks: Vec<(u64, u64)> =
        formula
            .clauses
            .iter()
            .map(|c| {
                c.literals.iter().fold((0, 0), |(pos, neg), l| {
                    if l.negated {
                        (pos, neg | bit(l.var))
                    } else {
                        (pos | bit(l.var), neg)
                    }
                })
            })
            .collect();
    for k in 0..(1u64 << n) {
        if masks.iter().all(|&(pos, neg)| k & pos != 0 || !k & neg != 0) {
            let values = (1..=n).map(|var| k & bit(var as u32) != 0).collect();
            return Ok(SatResult::sat(Assignment::new(values)));
        }
    }
    Ok(SatResult::unsat())
}

/// DPLL with the default search-node budget.
pub fn dpll_sat(formula: &CnfFormula) -> Result<SatResult, OracleError> {
    dpll_sat_with_limit(formula, DEFAULT_DPLL_NODE_LIMIT)
}

/// DPLL with unit propagation, pure-literal elimination, and branching on
/// the variable with most occurrences in unsatisfied clauses (lowest index
/// on ties, true branch first).
pub fn dpll_sat_with_limit(formula: &CnfFormula, node_limit: u64) -> Result<SatResult, OracleError> {
    let mut solver = Dpll::new(formula);
    if solver.trivially_unsat {
        return Ok(SatResult::unsat());
    }
    if solver.search(node_limit)? {
        let values = solver.assign.iter().map(|&v| v == Value::True).collect();
        Ok(SatResult::sat(Assignment::new(values)))
    } else {
        Ok(SatResult::unsat())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    Unassigned,
    True,
    False,
}

/// Literal code: `2 * var_index + negated`.
type Lit = usize;

fn lit_var(l: Lit) -> usize {
    l >> 1
}

struct Dpll {
    clauses: Vec<Vec<Lit>>,
    occurs: Vec<Vec<usize>>,
    assign: Vec<Value>,
    num_true: Vec<u32>,
    num_false: Vec<u32>,
    trail: Vec<Lit>,
    nodes: u64,
    trivially_unsat: bool,
}

struct Frame {
    mark: usize,
    var: usize,
    tried_false: bool,
}

impl Dpll {
    fn new(formula: &CnfFormula) -> Self {
        let n = formula.num_vars;
        let mut clauses = Vec::with_capacity(formula.clauses.len());
        let mut trivially_unsat = false;
        for c in &formula.clauses {
            let mut lits: Vec<Lit> = c.literals.iter().map(|l| 2 * l.index() + l.negated as usize).collect();
            lits.sort_unstable();
            lits.dedup();
            if lits.windows(2).any(|w| lit_var(w[0]) == lit_var(w[1])) {
                continue; // tautology
            }
            trivially_unsat |= lits.is_empty();
            clauses.push(lits);
        }
        let mut occurs = vec![Vec::new(); 2 * n];
        for (ci, c) in clauses.iter().enumerate() {
            for &l in c {
                occurs[l].push(ci);
            }
        }
        let m = clauses.len();
        Self {
            clauses,
            occurs,
            assign: vec![Value::Unassigned; n],
            num_true: vec![0; m],
            num_false: vec![0; m],
            trail: Vec::with_capacity(n),
            nodes: 0,
            trivially_unsat,
        }
    }

    fn lit_value(&self, l: Lit) -> Value {
        match (self.assign[lit_var(l)], l & 1 == 1) {
            (Value::Unassigned, _) => Value::Unassigned,
            (Value::True, false) | (Value::False, true) => Value::True,
            _ => Value::False,
        }
    }

    /// Makes `l` true. Returns false on conflict; pushes newly unit clauses.
    fn set(&mut self, l: Lit, units: &mut Vec<usize>) -> bool {
        self.assign[lit_var(l)] = if l & 1 == 0 { Value::True } else { Value::False };
        self.trail.push(l);
        for &ci in &self.occurs[l] {
            self.num_true[ci] += 1;
        }
        let mut ok = true;
        for &ci in &self.occurs[l ^ 1] {
            self.num_false[ci] += 1;
            if self.num_true[ci] == 0 {
                let free = self.clauses[ci].len() as u32 - self.num_false[ci];
                if free == 0 {
                    ok = false;
                } else if free == 1 {
                    units.push(ci);
                }
            }
        }
        ok
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let l = self.trail.pop().expect("trail underflow");
            self.assign[lit_var(l)] = Value::Unassigned;
            for &ci in &self.occurs[l] {
                self.num_true[ci] -= 1;
            }
            for &ci in &self.occurs[l ^ 1] {
                self.num_false[ci] -= 1;
            }
        }
    }

    fn propagate(&mut self, mut units: Vec<usize>) -> bool {
        while let Some(ci) = units.pop() {
            if self.num_true[ci] > 0 {
                continue;
            }
            let free = self.clauses[ci].iter().copied().find(|&l| self.lit_value(l) == Value::Unassigned);
            match free {
                Some(l) => {
                    if !self.set(l, &mut units) {
                        return false;
                    }
                }
                None => return false,
            }
        }
        true
    }

    /// Unit propagation and pure literals to a fixpoint. False on conflict.
    fn simplify(&mut self, units: Vec<usize>) -> bool {
        if !self.propagate(units) {
            return false;
        }
        loop {
            let mut seen = vec![false; self.occurs.len()];
            for (ci, c) in self.clauses.iter().enumerate() {
                if self.num_true[ci] == 0 {
                    for &l in c {
                        if self.lit_value(l) == Value::Unassigned {
                            seen[l] = true;
                        }
                    }
                }
            }
            let pure: Vec<Lit> = (0..seen.len()).filter(|&l| seen[l] && !seen[l ^ 1]).collect();
            if pure.is_empty() {
                return true;
            }
            let mut units = Vec::new();
            for l in pure {
                // Pure literals cannot cause conflicts; they only satisfy clauses.
                self.set(l, &mut units);
            }
            if !self.propagate(units) {
                return false;
            }
        }
    }

    fn all_satisfied(&self) -> bool {
        self.num_true.iter().all(|&t| t > 0)
    }

    fn pick_branch_var(&self) -> Option<usize> {
        let mut counts = vec![0u32; self.assign.len()];
        for (ci, c) in self.clauses.iter().enumerate() {
            if self.num_true[ci] == 0 {
                for &l in c {
                    if self.assign[lit_var(l)] == Value::Unassigned {
                        counts[lit_var(l)] += 1;
                    }
                }
            }
        }
        let mut best: Option<(usize, u32)> = None;
        for (v, &k) in counts.iter().enumerate() {
            if k > 0 && best.is_none_or(|(_, bk)| k > bk) {
                best = Some((v, k));
            }
        }
        best.map(|(v, _)| v)
    }

    fn tick(&mut self, limit: u64) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > limit {
            Err(OracleError::ResourceExhausted { nodes: self.nodes - 1 })
        } else {
            Ok(())
        }
    }

    /// Iterative DPLL. Each decision frame remembers the trail mark so the
    /// false branch can be tried after the true branch fails.
    fn search(&mut self, limit: u64) -> Result<bool, OracleError> {
        self.tick(limit)?;
        let initial_units: Vec<usize> = (0..self.clauses.len()).filter(|&ci| self.clauses[ci].len() == 1).collect();
        if !self.simplify(initial_units) {
            return Ok(false);
        }
        let mut stack: Vec<Frame> = Vec::new();
        loop {
            if self.all_satisfied() {
                return Ok(true);
            }
            let var = self.pick_branch_var().expect("unsatisfied clause with no free literal");
            stack.push(Frame { mark: self.trail.len(), var, tried_false: false });
            self.tick(limit)?;
            let mut units = Vec::new();
            let mut ok = self.set(2 * var, &mut units) && self.simplify(units);
            while !ok {
                while stack.last().is_some_and(|f| f.tried_false) {
                    stack.pop();
                }
                let Some(frame) = stack.last_mut() else {
                    return Ok(false);
                };
                frame.tried_false = true;
                let (mark, var) = (frame.mark, frame.var);
                self.undo_to(mark);
                self.tick(limit)?;
                let mut units = Vec::new();
                ok = self.set(2 * var + 1, &mut units) && self.simplify(units);
            }
        }
    }
}

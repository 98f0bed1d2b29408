//! CNF formulas, assignments, DIMACS I/O and uniform random 3-SAT.

mod dimacs;
mod random;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dimacs::{parse_dimacs, parse_dimacs_with_warnings, write_dimacs, DimacsWarning};
pub use random::generate_random_3sat;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CnfError {
    #[error("empty DIMACS input")]
    EmptyInput,
    #[error("line {line}: malformed problem header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: clause data before the problem header")]
    MissingHeader { line: usize },
    #[error("line {line}: invalid literal token {token:?}")]
    InvalidToken { line: usize, token: String },
    #[error("line {line}: literal {literal} exceeds declared variable count {num_vars}")]
    LiteralOutOfRange { line: usize, literal: i64, num_vars: usize },
    #[error("last clause is missing its terminating 0")]
    MissingTerminator,
    #[error("header declares {declared} clauses but {found} were read")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("assignment has {got} values but the formula has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },
    #[error("random 3-SAT needs at least 3 variables, got {0}")]
    TooFewVariables(usize),
}

/// A literal over a 1-indexed variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub var: u32,
    pub negated: bool,
}

impl Literal {
    pub fn positive(var: u32) -> Self {
        Self { var, negated: false }
    }

    pub fn negative(var: u32) -> Self {
        Self { var, negated: true }
    }

    /// Builds a literal from its signed DIMACS form. Panics on 0.
    pub fn from_dimacs(value: i64) -> Self {
        assert!(value != 0, "0 is not a literal");
        Self { var: value.unsigned_abs() as u32, negated: value < 0 }
    }

    pub fn to_dimacs(self) -> i64 {
        if self.negated {
            -(self.var as i64)
        } else {
            self.var as i64
        }
    }

    /// 0-based variable index.
    pub fn index(self) -> usize {
        self.var as usize - 1
    }

    pub fn is_true_under(self, values: &[bool]) -> bool {
        values[self.index()] != self.negated
    }
}

impl std::ops::Not for Literal {
    type Output = Literal;

    fn not(self) -> Literal {
        Literal { var: self.var, negated: !self.negated }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// A disjunction of literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Clause {
    pub literals: Vec<Literal>,
}

impl Clause {
    pub fn new(literals: Vec<Literal>) -> Self {
        Self { literals }
    }

    pub fn from_dimacs(lits: &[i64]) -> Self {
        Self::new(lits.iter().map(|&l| Literal::from_dimacs(l)).collect())
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn is_satisfied_by(&self, values: &[bool]) -> bool {
        self.literals.iter().any(|l| l.is_true_under(values))
    }

    /// True if some variable occurs more than once in the clause.
    pub fn has_repeated_variable(&self) -> bool {
        self.literals.iter().enumerate().any(|(i, a)| self.literals[..i].iter().any(|b| b.var == a.var))
    }
}

/// A CNF formula over variables `1..=num_vars`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CnfFormula {
    pub num_vars: usize,
    pub clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Self {
        Self { num_vars, clauses }
    }

    /// Builds a formula from signed DIMACS literals, one slice per clause.
    pub fn from_dimacs_clauses(num_vars: usize, clauses: &[&[i64]]) -> Self {
        Self::new(num_vars, clauses.iter().map(|c| Clause::from_dimacs(c)).collect())
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// Clause-to-variable ratio.
    pub fn ratio(&self) -> f64 {
        self.clauses.len() as f64 / self.num_vars as f64
    }
}

/// A total truth assignment; `values[j]` is the value of variable `j + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<bool>,
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Self { values }
    }

    pub fn all(num_vars: usize, value: bool) -> Self {
        Self { values: vec![value; num_vars] }
    }

    /// Decodes bit `j` of `bits` as the value of variable `j + 1`.
    pub fn from_bits(num_vars: usize, bits: u64) -> Self {
        Self { values: (0..num_vars).map(|j| bits >> j & 1 == 1).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// True iff every clause has a literal made true by `assignment`.
pub fn evaluate(formula: &CnfFormula, assignment: &Assignment) -> Result<bool, CnfError> {
    if assignment.len() != formula.num_vars {
        return Err(CnfError::AssignmentLength { expected: formula.num_vars, got: assignment.len() });
    }
    Ok(formula.clauses.iter().all(|c| c.is_satisfied_by(&assignment.values)))
}


#[cfg(test)]
mod tests {
    use super::fixtures::sample_formula;
    use super::*;

    fn naive_eval(f: &CnfFormula, bits: u64) -> bool {
        for clause in &f.clauses {
            let mut sat = false;
            for lit in &clause.literals {
                let v = (bits >> (lit.var - 1)) & 1 == 1;
                if (lit.negated && !v) || (!lit.negated && v) {
                    sat = true;
                }
            }
            if !sat {
                return false;
            }
        }
        true
    }

    #[test]
    fn sample_formula_all_true_is_satisfying() {
        assert!(evaluate(&sample_formula(), &Assignment::all(4, true)).unwrap());
    }

    #[test]
    fn sample_formula_counterexample() {
        // x1=F, x2=T, x4=F falsifies the first clause.
        let a = Assignment::new(vec![false, true, true, false]);
        assert!(!evaluate(&sample_formula(), &a).unwrap());
    }

    #[test]
    fn contradiction_is_never_satisfied() {
        let f = CnfFormula::from_dimacs_clauses(1, &[&[1], &[-1]]);
        for v in [false, true] {
            assert!(!evaluate(&f, &Assignment::new(vec![v])).unwrap());
        }
    }

    #[test]
    fn empty_formula_is_vacuously_true() {
        let f = CnfFormula::new(3, vec![]);
        assert!(evaluate(&f, &Assignment::all(3, false)).unwrap());
    }

    #[test]
    fn empty_clause_is_false_everywhere() {
        let f = CnfFormula::new(2, vec![Clause::default()]);
        for bits in 0..4 {
            assert!(!evaluate(&f, &Assignment::from_bits(2, bits)).unwrap());
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let err = evaluate(&sample_formula(), &Assignment::all(3, true)).unwrap_err();
        assert_eq!(err, CnfError::AssignmentLength { expected: 4, got: 3 });
    }

    #[test]
    fn evaluate_matches_naive_on_every_assignment() {
        for seed in 0..20u64 {
            let n = 3 + (seed as usize % 8);
            let f = generate_random_3sat(n, 2 * n + seed as usize % 5, seed).unwrap();
            for bits in 0..(1u64 << n) {
                let a = Assignment::from_bits(n, bits);
                assert_eq!(evaluate(&f, &a).unwrap(), naive_eval(&f, bits), "seed {seed} bits {bits:b}");
            }
        }
    }

    #[test]
    fn repeated_variable_detection() {
        assert!(Clause::from_dimacs(&[1, -1]).has_repeated_variable());
        assert!(Clause::from_dimacs(&[2, 3, 2]).has_repeated_variable());
        assert!(!Clause::from_dimacs(&[1, 2, 3]).has_repeated_variable());
    }
}

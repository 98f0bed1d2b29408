use rand::seq::index;
use rand::Rng as _;

use super::{Clause, CnfError, CnfFormula, Literal};
use crate::rng::rng_from_seed;

/// Uniform random 3-SAT: each clause picks 3 distinct variables uniformly
/// without replacement and negates each with probability 1/2.
///
/// Deterministic in `(num_vars, num_clauses, seed)`.
pub fn generate_random_3sat(num_vars: usize, num_clauses: usize, seed: u64) -> Result<CnfFormula, CnfError> {
    if num_vars < 3 {
        return Err(CnfError::TooFewVariables(num_vars));
    }
    let mut rng = rng_from_seed(seed);
    let clauses = (0..num_clauses)
        .map(|_| {
            let vars = index::sample(&mut rng, num_vars, 3);
            Clause::new(vars.iter().map(|v| Literal { var: v as u32 + 1, negated: rng.gen_bool(0.5) }).collect())
        })
        .collect();
    Ok(CnfFormula::new(num_vars, clauses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_postcondition() {
        let f = generate_random_3sat(5, 22, 7).unwrap();
        assert_eq!(f.num_vars, 5);
        assert_eq!(f.clauses.len(), 22);
        for c in &f.clauses {
            assert_eq!(c.len(), 3);
            assert!(!c.has_repeated_variable());
            assert!(c.literals.iter().all(|l| (1..=5).contains(&l.var)));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate_random_3sat(5, 22, 7).unwrap(), generate_random_3sat(5, 22, 7).unwrap());
        assert_ne!(generate_random_3sat(5, 22, 7).unwrap(), generate_random_3sat(5, 22, 8).unwrap());
    }

    #[test]
    fn rejects_fewer_than_three_variables() {
        assert_eq!(generate_random_3sat(2, 1, 0), Err(CnfError::TooFewVariables(2)));
    }

    #[test]
    fn zero_clauses() {
        assert!(generate_random_3sat(3, 0, 1).unwrap().clauses.is_empty());
    }

    #[test]
    fn variable_and_sign_frequencies_are_uniform() {
        // Each clause occupies 3 of 10 variables, so a variable appears in a
        // clause with probability 3/10: Binomial(10_000, 0.3) per variable,
        // sd = sqrt(10_000 * 0.3 * 0.7) ≈ 45.8.
        let f = generate_random_3sat(10, 10_000, 2024).unwrap();
        let mut counts = [0usize; 10];
        let mut negated = 0usize;
        for c in &f.clauses {
            for l in &c.literals {
                counts[l.index()] += 1;
                negated += l.negated as usize;
            }
        }
        let mean = 10_000.0 * 0.3;
        let sd = (10_000.0f64 * 0.3 * 0.7).sqrt();
        for (v, &k) in counts.iter().enumerate() {
            assert!((k as f64 - mean).abs() < 5.0 * sd, "variable {} appeared {k} times", v + 1);
        }
        // Negations: Binomial(30_000, 0.5), sd ≈ 86.6.
        let sd_neg = (30_000.0f64 * 0.25).sqrt();
        assert!((negated as f64 - 15_000.0).abs() < 5.0 * sd_neg, "{negated} negations");
    }
}

use std::fmt::Write as _;

use super::{Clause, CnfError, CnfFormula, Literal};

/// Non-fatal observations made while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DimacsWarning {
    /// A clause mentions the same variable more than once.
    RepeatedVariable { clause: usize, var: u32 },
}

/// Parses DIMACS CNF text.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, CnfError> {
    parse_dimacs_with_warnings(text).map(|(f, _)| f)
}

/// Parses DIMACS CNF text, returning the formula and any clause-level warnings.
///
/// Comment lines start with `c`. A line starting with `%` ends the clause
/// section (SATLIB convention). Clauses may span lines; each ends with `0`.
pub fn parse_dimacs_with_warnings(text: &str) -> Result<(CnfFormula, Vec<DimacsWarning>), CnfError> {
    if text.trim().is_empty() {
        return Err(CnfError::EmptyInput);
    }

    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut open = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(malformed(line_no, "duplicate header"));
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let (num_vars, _) = header.ok_or(CnfError::MissingHeader { line: line_no })?;
        for token in line.split_whitespace() {
            let value: i64 =
                token.parse().map_err(|_| CnfError::InvalidToken { line: line_no, token: token.to_string() })?;
            if value == 0 {
                clauses.push(Clause::new(std::mem::take(&mut current)));
                open = false;
                continue;
            }
            if value.unsigned_abs() as usize > num_vars {
                return Err(CnfError::LiteralOutOfRange { line: line_no, literal: value, num_vars });
            }
            current.push(Literal::from_dimacs(value));
            open = true;
        }
    }

    let (num_vars, declared) = header.ok_or_else(|| malformed(0, "no `p cnf` header found"))?;
    if open {
        return Err(CnfError::MissingTerminator);
    }
    if clauses.len() != declared {
        return Err(CnfError::ClauseCountMismatch { declared, found: clauses.len() });
    }

    let mut warnings = Vec::new();
    for (ci, clause) in clauses.iter().enumerate() {
        for (i, lit) in clause.literals.iter().enumerate() {
            if clause.literals[..i].iter().any(|l| l.var == lit.var)
                && !warnings.contains(&DimacsWarning::RepeatedVariable { clause: ci, var: lit.var })
            {
                warnings.push(DimacsWarning::RepeatedVariable { clause: ci, var: lit.var });
            }
        }
    }

    Ok((CnfFormula::new(num_vars, clauses), warnings))
}

fn malformed(line: usize, reason: &str) -> CnfError {
    CnfError::MalformedHeader { line, reason: reason.to_string() }
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize), CnfError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    match fields.as_slice() {
        ["p", "cnf", vars, clauses] => {
            let vars = vars.parse().map_err(|_| malformed(line_no, "variable count is not a number"))?;
            let clauses = clauses.parse().map_err(|_| malformed(line_no, "clause count is not a number"))?;
            Ok((vars, clauses))
        }
        ["p", other, ..] if *other != "cnf" => Err(malformed(line_no, "format is not `cnf`")),
        _ => Err(malformed(line_no, "expected `p cnf <vars> <clauses>`")),
    }
}

/// Writes canonical DIMACS: header, then one clause per line, LF endings.
pub fn write_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", formula.num_vars, formula.clauses.len());
    for clause in &formula.clauses {
        for lit in &clause.literals {
            let _ = write!(out, "{} ", lit.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::sample_formula;
    use super::super::generate_random_3sat;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_small_example() {
        let f = parse_dimacs("p cnf 2 2\n1 -2 0\n2 0\n").unwrap();
        assert_eq!(f, CnfFormula::from_dimacs_clauses(2, &[&[1, -2], &[2]]));
    }

    #[test]
    fn writes_sample_formula() {
        assert_eq!(write_dimacs(&sample_formula()), "p cnf 4 3\n1 -2 4 0\n2 3 0\n-3 4 0\n");
    }

    #[test]
    fn writes_empty_formula() {
        assert_eq!(write_dimacs(&CnfFormula::new(3, vec![])), "p cnf 3 0\n");
    }

    #[test]
    fn rejects_out_of_range_literal() {
        assert!(matches!(
            parse_dimacs("p cnf 1 1\n2 0\n"),
            Err(CnfError::LiteralOutOfRange { literal: 2, num_vars: 1, .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(parse_dimacs(""), Err(CnfError::EmptyInput));
        assert_eq!(parse_dimacs("  \n\n"), Err(CnfError::EmptyInput));
        assert!(matches!(parse_dimacs("p cnf x 1\n1 0\n"), Err(CnfError::MalformedHeader { .. })));
        assert!(matches!(parse_dimacs("p sat 2 1\n1 0\n"), Err(CnfError::MalformedHeader { .. })));
        assert!(matches!(parse_dimacs("p cnf 2\n"), Err(CnfError::MalformedHeader { .. })));
        assert!(matches!(parse_dimacs("1 2 0\n"), Err(CnfError::MissingHeader { line: 1 })));
        assert_eq!(parse_dimacs("p cnf 2 1\n1 2\n"), Err(CnfError::MissingTerminator));
        assert_eq!(parse_dimacs("p cnf 2 2\n1 2 0\n"), Err(CnfError::ClauseCountMismatch { declared: 2, found: 1 }));
        assert!(matches!(parse_dimacs("p cnf 2 1\n1 a 0\n"), Err(CnfError::InvalidToken { .. })));
    }

    #[test]
    fn accepts_comments_multiline_clauses_and_percent_trailer() {
        let text = "c hello\nc world\np cnf 3 2\n1 -2\n 3 0 -1\n0\n%\n0\n";
        let f = parse_dimacs(text).unwrap();
        assert_eq!(f, CnfFormula::from_dimacs_clauses(3, &[&[1, -2, 3], &[-1]]));
    }

    #[test]
    fn empty_clause_is_kept() {
        let f = parse_dimacs("p cnf 1 1\n0\n").unwrap();
        assert_eq!(f.clauses.len(), 1);
        assert!(f.clauses[0].is_empty());
    }

    #[test]
    fn repeated_variables_are_warned_not_rejected() {
        let (f, w) = parse_dimacs_with_warnings("p cnf 2 2\n1 1 2 0\n-2 2 0\n").unwrap();
        assert_eq!(f.clauses[0].len(), 3);
        assert_eq!(
            w,
            vec![
                DimacsWarning::RepeatedVariable { clause: 0, var: 1 },
                DimacsWarning::RepeatedVariable { clause: 1, var: 2 }
            ]
        );
    }

    fn arb_formula() -> impl Strategy<Value = CnfFormula> {
        (1usize..12).prop_flat_map(|n| {
            let lit = (1..=n as i64, any::<bool>()).prop_map(|(v, neg)| if neg { -v } else { v });
            prop::collection::vec(prop::collection::vec(lit, 0..6), 0..20)
                .prop_map(move |cls| CnfFormula::new(n, cls.iter().map(|c| Clause::from_dimacs(c)).collect()))
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(f in arb_formula()) {
            prop_assert_eq!(parse_dimacs(&write_dimacs(&f)).unwrap(), f);
        }

        #[test]
        fn generated_formulas_round_trip(n in 3usize..30, m in 0usize..100, seed in any::<u64>()) {
            let f = generate_random_3sat(n, m, seed).unwrap();
            prop_assert_eq!(parse_dimacs(&write_dimacs(&f)).unwrap(), f);
        }
    }
}

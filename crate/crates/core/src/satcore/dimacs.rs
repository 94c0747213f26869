//! DIMACS cnf reading and writing.

use super::Lit;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DimacsError {
    #[error("dimacs parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimacs {
    pub num_vars: u32,
    pub clauses: Vec<Vec<Lit>>,
}

/// Parses DIMACS cnf: `c` comment lines, one `p cnf V C` header, clauses as
/// 0-terminated literal runs (line breaks inside a clause are fine).
pub fn parse(text: &str) -> Result<Dimacs, DimacsError> {
    let mut num_vars: Option<u32> = None;
    let mut declared_clauses = 0usize;
    let mut clauses = Vec::new();
    let mut current: Vec<Lit> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            if num_vars.is_some() {
                return Err(DimacsError::Parse {
                    line: lineno + 1,
                    msg: "duplicate problem line".into(),
                });
            }
            let mut it = rest.split_whitespace();
            if it.next() != Some("cnf") {
                return Err(DimacsError::Parse {
                    line: lineno + 1,
                    msg: "expected 'p cnf V C'".into(),
                });
            }
            let v: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or(DimacsError::Parse { line: lineno + 1, msg: "bad variable count".into() })?;
            declared_clauses = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or(DimacsError::Parse { line: lineno + 1, msg: "bad clause count".into() })?;
            num_vars = Some(v);
            continue;
        }
        let nv = num_vars.ok_or(DimacsError::Parse {
            line: lineno + 1,
            msg: "clause before problem line".into(),
        })?;
        for tok in line.split_whitespace() {
            let v: i64 = tok.parse().map_err(|_| DimacsError::Parse {
                line: lineno + 1,
                msg: format!("bad literal '{tok}'"),
            })?;
            if v == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                if v.unsigned_abs() > nv as u64 {
                    return Err(DimacsError::Parse {
                        line: lineno + 1,
                        msg: format!("literal {v} exceeds declared variable count"),
                    });
                }
                current.push(Lit::from_dimacs(v as i32));
            }
        }
    }
    if !current.is_empty() {
        return Err(DimacsError::Parse { line: 0, msg: "unterminated final clause".into() });
    }
    let num_vars = num_vars.ok_or(DimacsError::Parse { line: 0, msg: "missing problem line".into() })?;
    if clauses.len() != declared_clauses {
        // tolerated: many generators get the count wrong
    }
    Ok(Dimacs { num_vars, clauses })
}

/// Renders DIMACS cnf text with the standard `p cnf V C` header.
pub fn render(num_vars: u32, clauses: &[Vec<Lit>]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", num_vars, clauses.len());
    for c in clauses {
        for l in c {
            let _ = write!(out, "{} ", l.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_multiline_clauses() {
        let d = parse("c hi\np cnf 3 2\n1 -2 0 2\n3 0\n").unwrap();
        assert_eq!(d.num_vars, 3);
        assert_eq!(d.clauses.len(), 2);
        assert_eq!(d.clauses[1], vec![Lit::from_dimacs(2), Lit::from_dimacs(3)]);
    }

    #[test]
    fn round_trips() {
        let text = "p cnf 2 2\n1 -2 0\n-1 2 0\n";
        let d = parse(text).unwrap();
        assert_eq!(render(d.num_vars, &d.clauses), text);
    }

    #[test]
    fn rejects_overflowing_literals() {
        assert!(parse("p cnf 1 1\n2 0\n").is_err());
    }
}

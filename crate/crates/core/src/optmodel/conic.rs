//! Line-oriented text exchange format for [`OptModel`].
//!
//! The grammar is described in `docs/conic_format.md`. Numbers use Rust's
//! shortest round-trip float formatting, so a parse reproduces every
//! coefficient bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{AffineExpr, LinearRow, OptModel, RowSense, SocRow, VarId, VarKind, Variable};

pub const HEADER: &str = "DRFCUC-CONIC 1";

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn token(s: &str) -> String {
    if s.is_empty() {
        "_".to_string()
    } else {
        s.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
    }
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)]) {
    let _ = write!(out, " {}", terms.len());
    for &(v, c) in terms {
        let _ = write!(out, " {}:{:?}", v.0, c);
    }
}

/// Renders `model` in the exchange format.
pub fn to_string(model: &OptModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "VARS {}", model.vars.len());
    for (i, v) in model.vars.iter().enumerate() {
        let kind = match v.kind {
            VarKind::Continuous => 'C',
            VarKind::Binary => 'B',
        };
        let _ = writeln!(out, "{i} {kind} {:?} {:?} {}", v.lower, v.upper, token(&v.name));
    }
    let _ = writeln!(out, "OBJ {} {:?}", model.objective.terms.len(), model.objective.constant);
    for &(v, c) in &model.objective.terms {
        let _ = writeln!(out, "{} {:?}", v.0, c);
    }
    let _ = writeln!(out, "LIN {}", model.rows.len());
    for r in &model.rows {
        let sense = match r.sense {
            RowSense::Le => 'L',
            RowSense::Ge => 'G',
            RowSense::Eq => 'E',
        };
        let _ = write!(out, "{} {sense} {:?}", token(&r.family), r.rhs);
        write_terms(&mut out, &r.terms);
        out.push('\n');
    }
    let _ = writeln!(out, "SOC {}", model.socs.len());
    for s in &model.socs {
        let _ = writeln!(out, "{} {}", token(&s.family), s.vector.len());
        let _ = write!(out, "BOUND {:?}", s.bound.constant);
        write_terms(&mut out, &s.bound.terms);
        out.push('\n');
        for e in &s.vector {
            let _ = write!(out, "VEC {:?}", e.constant);
            write_terms(&mut out, &e.terms);
            out.push('\n');
        }
    }
    out.push_str("END\n");
    out
}

pub fn export_conic(model: &OptModel, path: &Path) -> Result<(), ConicError> {
    fs::write(path, to_string(model))?;
    Ok(())
}

pub fn import_conic(path: &Path) -> Result<OptModel, ConicError> {
    parse(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>, ConicError> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            return Ok(l.split_whitespace().collect());
        }
        Err(self.err("unexpected end of file"))
    }

    fn err(&self, message: impl Into<String>) -> ConicError {
        ConicError::Parse { line: self.line, message: message.into() }
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T, ConicError> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn section(&mut self, name: &str) -> Result<(Vec<&'a str>, usize), ConicError> {
        let t = self.next()?;
        if t.first() != Some(&name) || t.len() < 2 {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        let n = self.num(t[1])?;
        Ok((t, n))
    }

    /// Parses `<k> id:coeff ...` starting at `tokens[at]`.
    fn terms(&self, tokens: &[&str], at: usize, nvars: usize) -> Result<Vec<(VarId, f64)>, ConicError> {
        let k: usize = self.num(tokens.get(at).ok_or_else(|| self.err("missing term count"))?)?;
        if tokens.len() != at + 1 + k {
            return Err(self.err(format!("expected {k} terms")));
        }
        tokens[at + 1..]
            .iter()
            .map(|t| {
                let (id, c) = t.split_once(':').ok_or_else(|| self.err(format!("bad term `{t}`")))?;
                let id: usize = self.num(id)?;
                if id >= nvars {
                    return Err(self.err(format!("unknown variable {id}")));
                }
                Ok((VarId(id), self.num(c)?))
            })
            .collect()
    }
}

pub fn parse(text: &str) -> Result<OptModel, ConicError> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let head = lines.next()?;
    if head.join(" ") != HEADER {
        return Err(lines.err(format!("expected header `{HEADER}`")));
    }
    let mut model = OptModel::new();
    let (_, nvars) = lines.section("VARS")?;
    for i in 0..nvars {
        let t = lines.next()?;
        if t.len() != 5 || lines.num::<usize>(t[0])? != i {
            return Err(lines.err("expected `<id> <C|B> <lb> <ub> <name>`"));
        }
        let kind = match t[1] {
            "C" => VarKind::Continuous,
            "B" => VarKind::Binary,
            k => return Err(lines.err(format!("unknown kind `{k}`"))),
        };
        model.vars.push(Variable { name: t[4].to_string(), kind, lower: lines.num(t[2])?, upper: lines.num(t[3])? });
    }
    let (t, nobj) = lines.section("OBJ")?;
    model.objective.constant = lines.num(t.get(2).ok_or_else(|| lines.err("missing constant"))?)?;
    for _ in 0..nobj {
        let t = lines.next()?;
        if t.len() != 2 {
            return Err(lines.err("expected `<id> <coeff>`"));
        }
        let id: usize = lines.num(t[0])?;
        if id >= nvars {
            return Err(lines.err(format!("unknown variable {id}")));
        }
        model.objective.terms.push((VarId(id), lines.num(t[1])?));
    }
    let (_, nrows) = lines.section("LIN")?;
    for _ in 0..nrows {
        let t = lines.next()?;
        if t.len() < 4 {
            return Err(lines.err("expected `<family> <L|G|E> <rhs> <k> terms`"));
        }
        let sense = match t[1] {
            "L" => RowSense::Le,
            "G" => RowSense::Ge,
            "E" => RowSense::Eq,
            s => return Err(lines.err(format!("unknown sense `{s}`"))),
        };
        let terms = lines.terms(&t, 3, nvars)?;
        model.rows.push(LinearRow { family: t[0].to_string(), terms, sense, rhs: lines.num(t[2])? });
    }
    let (_, nsoc) = lines.section("SOC")?;
    for _ in 0..nsoc {
        let t = lines.next()?;
        if t.len() != 2 {
            return Err(lines.err("expected `<family> <dim>`"));
        }
        let family = t[0].to_string();
        let dim: usize = lines.num(t[1])?;
        let mut expr = |tag: &str| -> Result<AffineExpr, ConicError> {
            let t = lines.next()?;
            if t.first() != Some(&tag) || t.len() < 3 {
                return Err(lines.err(format!("expected `{tag} <constant> <k> terms`")));
            }
            Ok(AffineExpr { constant: lines.num(t[1])?, terms: lines.terms(&t, 2, nvars)? })
        };
        let bound = expr("BOUND")?;
        let vector = (0..dim).map(|_| expr("VEC")).collect::<Result<Vec<_>, _>>()?;
        model.socs.push(SocRow { family, vector, bound });
    }
    let t = lines.next()?;
    if t != ["END"] {
        return Err(lines.err("expected `END`"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_round_trips() {
        let m = OptModel::new();
        let text = to_string(&m);
        assert!(text.contains("LIN 0"));
        assert_eq!(parse(&text).unwrap(), m);
    }

    #[test]
    fn rejects_unknown_variable() {
        let text = format!("{HEADER}\nVARS 0\nOBJ 1 0.0\n3 1.0\nLIN 0\nSOC 0\nEND\n");
        assert!(parse(&text).is_err());
    }
}

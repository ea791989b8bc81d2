//! UAI `MARKOV` model files.
//!
//! ```text
//! MARKOV
//! N
//! c_1 … c_N
//! M
//! k i_1 … i_k        (M scope lines)
//! T v_1 … v_T        (M tables, linear space, row-major over the scope)
//! ```
//!
//! Tokens are whitespace-delimited, so line breaks inside a record are not
//! significant when reading.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FgError, Result};
use crate::graph::{FactorGraph, ZeroClamp};

struct Tokens<'a> {
    inner: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| FgError::Parse(format!("unexpected end of input reading {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.next(what)?;
        tok.parse()
            .map_err(|_| FgError::Parse(format!("expected integer {what}, found {tok:?}")))
    }

    fn real(&mut self, what: &str) -> Result<f64> {
        let tok = self.next(what)?;
        tok.parse()
            .map_err(|_| FgError::Parse(format!("expected real {what}, found {tok:?}")))
    }
}

pub fn read_uai(text: &[u8], clamp: ZeroClamp) -> Result<FactorGraph> {
    let text = std::str::from_utf8(text).map_err(|e| FgError::Parse(e.to_string()))?;
    let mut toks = Tokens {
        inner: text.split_ascii_whitespace(),
    };
    let kind = toks.next("header")?;
    if kind != "MARKOV" {
        return Err(FgError::Parse(format!("expected MARKOV header, found {kind:?}")));
    }
    let n = toks.usize("variable count")?;
    let cards = (0..n)
        .map(|i| toks.usize(&format!("cardinality of variable {i}")))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = cards.iter().position(|&c| c == 0) {
        return Err(FgError::Parse(format!("variable {i} has cardinality 0")));
    }
    let m = toks.usize("factor count")?;
    let mut scopes = Vec::with_capacity(m);
    for a in 0..m {
        let k = toks.usize(&format!("scope size of factor {a}"))?;
        let scope = (0..k)
            .map(|_| toks.usize(&format!("scope entry of factor {a}")))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&v) = scope.iter().find(|&&v| v >= n) {
            return Err(FgError::Parse(format!(
                "factor {a} references variable {v} but only {n} exist"
            )));
        }
        scopes.push(scope);
    }
    let mut tables = Vec::with_capacity(m);
    for (a, scope) in scopes.into_iter().enumerate() {
        let t = toks.usize(&format!("table size of factor {a}"))?;
        let expected: usize = scope.iter().map(|&v| cards[v]).product();
        if t != expected {
            return Err(FgError::Parse(format!(
                "factor {a} declares {t} entries but its scope has {expected} joint states"
            )));
        }
        let values = (0..t)
            .map(|_| toks.real(&format!("table entry of factor {a}")))
            .collect::<Result<Vec<_>>>()?;
        tables.push((scope, values));
    }
    if let Some(extra) = toks.inner.next() {
        return Err(FgError::Parse(format!("trailing token {extra:?} after last table")));
    }
    FactorGraph::from_linear(cards, tables, clamp).map_err(|e| match e {
        FgError::InvalidGraph(msg) => FgError::Parse(msg),
        other => other,
    })
}

pub fn write_uai(g: &FactorGraph) -> String {
    let mut out = String::new();
    out.push_str("MARKOV\n");
    let _ = writeln!(out, "{}", g.num_vars());
    out.push_str(&join(g.cardinalities().iter().map(|c| c.to_string())));
    out.push('\n');
    let _ = writeln!(out, "{}", g.num_factors());
    for f in g.factors() {
        let mut line = vec![f.scope.len().to_string()];
        line.extend(f.scope.iter().map(|v| v.to_string()));
        out.push_str(&join(line.into_iter()));
        out.push('\n');
    }
    for f in g.factors() {
        let data = f.log_potential.data();
        let mut line = vec![data.len().to_string()];
        line.extend(data.iter().map(|x| format_g17(x.exp())));
        out.push_str(&join(line.into_iter()));
        out.push('\n');
    }
    out
}

pub fn read_uai_file(path: &Path, clamp: ZeroClamp) -> Result<FactorGraph> {
    let bytes = std::fs::read(path)
        .map_err(|e| FgError::Parse(format!("{}: {e}", path.display())))?;
    read_uai(&bytes, clamp)
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(" ")
}

/// C `%.17g`: 17 significant digits, trailing zeros trimmed, exponent form
/// outside `1e-5 ..= 1e17`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-5..17).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let g = read_uai(b"MARKOV\n1\n2\n1\n1 0\n2\n1.0 3.0\n", ZeroClamp::default()).unwrap();
        assert_eq!(g.cardinalities(), &[2]);
        assert_eq!(g.factor(0).scope, vec![0]);
        assert_eq!(g.factor(0).log_potential.data(), &[0.0, 3f64.ln()]);
    }

    #[test]
    fn table_length_checked() {
        let err = read_uai(b"MARKOV 1 2 1 1 0 3 1 2 3", ZeroClamp::default()).unwrap_err();
        assert!(matches!(err, FgError::Parse(_)), "{err}");
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            &b"BAYES 1 2 1 1 0 2 1 3"[..],
            b"MARKOV 1",
            b"MARKOV 1 2 1 1 5 2 1 3",
            b"MARKOV 1 2 1 1 0 2 1 x",
            b"MARKOV 1 2 1 1 0 2 1 3 9",
            b"MARKOV 2 2 2 1 2 0 0 4 1 1 1 1",
        ] {
            assert!(read_uai(bad, ZeroClamp::default()).is_err());
        }
    }

    #[test]
    fn zero_entries_follow_clamp() {
        let text = b"MARKOV 1 2 1 1 0 2 0 1";
        assert!(read_uai(text, ZeroClamp::reject()).is_err());
        let g = read_uai(text, ZeroClamp::default()).unwrap();
        assert_eq!(g.factor(0).log_potential.data()[0], 1e-30f64.ln());
    }

    #[test]
    fn writer_layout() {
        let g = read_uai(b"MARKOV 2 2 3 2 1 0 2 0 1 2 1 3 6 1 2 3 4 5 6", ZeroClamp::default())
            .unwrap();
        let text = write_uai(&g);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "MARKOV");
        assert_eq!(lines[1], "2");
        assert_eq!(lines[2], "2 3");
        assert_eq!(lines[3], "2");
        assert_eq!(lines[4], "1 0");
        assert_eq!(lines[5], "2 0 1");
        assert!(lines[6].starts_with("2 1 "));
        assert!(lines[7].starts_with("6 1 "));
        let back = read_uai(text.as_bytes(), ZeroClamp::default()).unwrap();
        assert!(crate::witness::graphs_match(&g, &back, 1e-12));
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(3.0), "3");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1e-30), "1.0000000000000001e-30");
        assert_eq!(format_g17(123456.5), "123456.5");
        assert_eq!(format_g17(2.5e20), "2.5e+20");
        for x in [std::f64::consts::E, 1e-7, 7.38905609893065, 0.1353352832366127] {
            assert_eq!(format_g17(x).parse::<f64>().unwrap(), x);
        }
    }
}

//! Parity-check matrix and ensemble file formats.
//!
//! * alist: MacKay's sparse exchange format (1-based indices, zero padded).
//! * simple text: a `n m` header followed by one check per line listing its
//!   0-based variable indices.
//! * ensemble spec: lines `var d:p d:p ...` and `check d:p ...`, or the
//!   shorthand `poisson <mean>` (checks default to degree `2 * mean`).

use std::fmt::Write as _;
use std::path::Path;

use crate::ensemble::{CodeEnsembleSpec, DegreeDistribution};
use crate::error::{Error, Result};
use crate::graph::TannerGraph;

fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().flat_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        line.split_whitespace().map(move |t| (i + 1, t))
    })
}

fn parse_usize(line: usize, tok: &str) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a non-negative integer, found `{tok}`"),
    })
}

pub fn parse_alist(text: &str) -> Result<TannerGraph> {
    let mut it = tokens(text);
    let mut next = |what: &str| -> Result<usize> {
        match it.next() {
            Some((line, tok)) => parse_usize(line, tok),
            None => Err(Error::Parse {
                line: text.lines().count(),
                msg: format!("unexpected end of input while reading {what}"),
            }),
        }
    };
    let n = next("n")?;
    let m = next("m")?;
    let _max_col = next("max column weight")?;
    let _max_row = next("max row weight")?;
    let col_w: Vec<usize> = (0..n).map(|_| next("column weight")).collect::<Result<_>>()?;
    let row_w: Vec<usize> = (0..m).map(|_| next("row weight")).collect::<Result<_>>()?;
    let max_col = col_w.iter().copied().max().unwrap_or(0);
    let max_row = row_w.iter().copied().max().unwrap_or(0);
    let mut col_entries = Vec::with_capacity(n);
    for &w in &col_w {
        let mut entries = Vec::new();
        // Entries are zero padded up to the max weight; accept unpadded files
        // too by reading exactly `w` nonzero entries and skipping zeros.
        while entries.len() < w {
            let e = next("column entry")?;
            if e != 0 {
                entries.push(e - 1);
            }
        }
        col_entries.push(entries);
        let _ = max_col;
    }
    let mut checks: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (v, rows) in col_entries.iter().enumerate() {
        for &c in rows {
            if c >= m {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("column {} references row {} > m", v + 1, c + 1),
                });
            }
            checks[c].push(v);
        }
    }
    // The row section is redundant; read it when present and cross-check.
    let mut row_entries: Vec<Vec<usize>> = Vec::with_capacity(m);
    for &w in &row_w {
        let mut entries = Vec::new();
        while entries.len() < w {
            match next("row entry") {
                Ok(0) => {}
                Ok(e) => entries.push(e - 1),
                Err(_) if row_entries.is_empty() && entries.is_empty() => break,
                Err(e) => return Err(e),
            }
        }
        if entries.is_empty() && w > 0 {
            row_entries.clear();
            break;
        }
        row_entries.push(entries);
    }
    let _ = max_row;
    if row_entries.len() == m {
        for (c, vars) in row_entries.iter_mut().enumerate() {
            vars.sort_unstable();
            let mut from_cols = checks[c].clone();
            from_cols.sort_unstable();
            if *vars != from_cols {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("row {} disagrees with the column section", c + 1),
                });
            }
        }
    }
    TannerGraph::from_checks(n, checks)
}

pub fn write_alist(g: &TannerGraph) -> String {
    let n = g.n();
    let m = g.m();
    let mut s = String::new();
    let _ = writeln!(s, "{n} {m}");
    let _ = writeln!(s, "{} {}", g.dl_max(), g.dr_max());
    let col_w: Vec<String> = (0..n).map(|v| g.var_checks(v).len().to_string()).collect();
    let _ = writeln!(s, "{}", col_w.join(" "));
    let row_w: Vec<String> = (0..m).map(|c| g.check_vars(c).len().to_string()).collect();
    let _ = writeln!(s, "{}", row_w.join(" "));
    for v in 0..n {
        let mut line: Vec<String> = g.var_checks(v).iter().map(|c| (c + 1).to_string()).collect();
        line.resize(g.dl_max(), "0".into());
        let _ = writeln!(s, "{}", line.join(" "));
    }
    for c in 0..m {
        let mut line: Vec<String> = g.check_vars(c).iter().map(|v| (v + 1).to_string()).collect();
        line.resize(g.dr_max(), "0".into());
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn parse_simple(text: &str) -> Result<TannerGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing `n m` header".into(),
    })?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(Error::Parse {
            line: hline,
            msg: "header must be `n m`".into(),
        });
    }
    let n = parse_usize(hline, head[0])?;
    let m = parse_usize(hline, head[1])?;
    let mut checks = Vec::with_capacity(m);
    for (line, l) in lines {
        let vars = l
            .split_whitespace()
            .map(|t| {
                let v = parse_usize(line, t)?;
                if v >= n {
                    return Err(Error::Parse {
                        line,
                        msg: format!("variable {v} out of range for n = {n}"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        checks.push(vars);
    }
    if checks.len() != m {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("header announces {m} checks, found {}", checks.len()),
        });
    }
    TannerGraph::from_checks(n, checks)
}

pub fn write_simple(g: &TannerGraph) -> String {
    let mut s = format!("{} {}\n", g.n(), g.m());
    for c in 0..g.m() {
        let vars: Vec<String> = g.check_vars(c).iter().map(|v| v.to_string()).collect();
        s.push_str(&vars.join(" "));
        s.push('\n');
    }
    s
}

/// Reads a code file, choosing the format by extension (`.alist` or text).
pub fn read_code(path: &Path) -> Result<TannerGraph> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "alist") {
        parse_alist(&text)
    } else {
        parse_simple(&text)
    }
}

fn parse_degree_list(line: usize, toks: &[&str]) -> Result<DegreeDistribution> {
    let mut entries = Vec::new();
    for t in toks {
        let (d, p) = t.split_once(':').ok_or(Error::Parse {
            line,
            msg: format!("expected `degree:probability`, found `{t}`"),
        })?;
        let d = parse_usize(line, d)?;
        let p: f64 = p.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad probability `{p}`"),
        })?;
        entries.push((d, p));
    }
    DegreeDistribution::new(entries).map_err(|e| Error::Parse {
        line,
        msg: e.to_string(),
    })
}

pub fn parse_ensemble(text: &str) -> Result<CodeEnsembleSpec> {
    let mut var = None;
    let mut check = None;
    let mut poisson = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "var" => var = Some(parse_degree_list(line, &toks[1..])?),
            "check" => check = Some(parse_degree_list(line, &toks[1..])?),
            "poisson" => {
                let mean: f64 = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or(Error::Parse {
                        line,
                        msg: "expected `poisson <mean>`".into(),
                    })?;
                poisson = Some(mean);
            }
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key `{other}` (expected var, check or poisson)"),
                })
            }
        }
    }
    match (poisson, var) {
        (Some(_), Some(_)) => Err(Error::Parse {
            line: 0,
            msg: "give either `poisson` or `var`, not both".into(),
        }),
        (Some(mean), None) => {
            let dc = check.map_or_else(|| Ok(default_poisson_check_degree(mean)), |c| {
                match c.entries() {
                    [(d, _)] => Ok(*d),
                    _ => Err(Error::Parse {
                        line: 0,
                        msg: "Poisson ensembles need a regular check degree".into(),
                    }),
                }
            })?;
            CodeEnsembleSpec::poisson(mean, dc)
        }
        (None, Some(var)) => {
            let check = check.ok_or(Error::Parse {
                line: 0,
                msg: "missing `check` line".into(),
            })?;
            Ok(CodeEnsembleSpec::new(var, check))
        }
        (None, None) => Err(Error::Parse {
            line: 0,
            msg: "missing `var` or `poisson` line".into(),
        }),
    }
}

/// Check degree giving design rate 1/2 for a Poisson(mean) variable side.
pub fn default_poisson_check_degree(mean: f64) -> usize {
    ((2.0 * mean).round() as usize).max(2)
}

/// Inline shorthands: `poisson:<mean>[,<dc>]`, `regular:<dv>,<dc>`.
pub fn parse_ensemble_shorthand(s: &str) -> Result<CodeEnsembleSpec> {
    let bad = || Error::invalid(format!("cannot parse ensemble `{s}`"));
    if let Some(rest) = s.strip_prefix("poisson:") {
        let mut parts = rest.split(',');
        let mean: f64 = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let dc = match parts.next() {
            Some(t) => t.parse().map_err(|_| bad())?,
            None => default_poisson_check_degree(mean),
        };
        CodeEnsembleSpec::poisson(mean, dc)
    } else if let Some(rest) = s.strip_prefix("regular:") {
        let (a, b) = rest.split_once(',').ok_or_else(bad)?;
        Ok(CodeEnsembleSpec::regular(
            a.parse().map_err(|_| bad())?,
            b.parse().map_err(|_| bad())?,
        ))
    } else {
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn alist_round_trip() {
        for g in [builtin::spc3(), builtin::ring30(), builtin::regular36_30(), builtin::poisson2_24()] {
            assert_eq!(parse_alist(&write_alist(&g)).unwrap(), g);
        }
    }

    #[test]
    fn alist_known_text() {
        let text = "3 2\n2 2\n1 2 1\n2 2\n1 0\n1 2\n2 0\n1 2\n2 3\n";
        let g = parse_alist(text).unwrap();
        assert_eq!(g, builtin::rep3());
    }

    #[test]
    fn simple_round_trip_and_errors() {
        let g = builtin::ring30();
        assert_eq!(parse_simple(&write_simple(&g)).unwrap(), g);
        let err = parse_simple("3 1\n0 1 7\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_simple("3 2\n0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn ensemble_text() {
        let spec = parse_ensemble("# regular\nvar 3:1\ncheck 6:1\n").unwrap();
        assert_eq!(spec, CodeEnsembleSpec::regular(3, 6));
        let spec = parse_ensemble("poisson 2\n").unwrap();
        assert_eq!(spec.poisson_mean, Some(2.0));
        assert_eq!(spec.check_degrees, DegreeDistribution::regular(4));
        let err = parse_ensemble("var 2:0.5 3:0.4\ncheck 6:1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_ensemble("bogus 1\n").is_err());
    }

    #[test]
    fn ensemble_shorthand() {
        assert_eq!(
            parse_ensemble_shorthand("regular:3,6").unwrap(),
            CodeEnsembleSpec::regular(3, 6)
        );
        let p = parse_ensemble_shorthand("poisson:2").unwrap();
        assert_eq!(p.check_degrees, DegreeDistribution::regular(4));
        let p = parse_ensemble_shorthand("poisson:2,6").unwrap();
        assert_eq!(p.check_degrees, DegreeDistribution::regular(6));
        assert!(parse_ensemble_shorthand("gaussian:1").is_err());
    }
}

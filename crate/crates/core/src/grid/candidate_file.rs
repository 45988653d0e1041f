//! Candidate-branch files.
//!
//! One record per line, tab- or comma-separated:
//! `id from_bus to_bus r x b s_max tap [parallel]`. Lines starting with `#`
//! are comments. `s_max = 0` means unlimited; the optional ninth column is
//! `1` for a declared parallel circuit.

use std::fmt::Write as _;
use std::path::Path;

use super::{CandidateBranch, CandidateSet, Provenance};
use crate::error::{Error, Result};

const FIELDS: usize = 8;

pub fn parse_candidates(text: &str, source: Option<&Path>) -> Result<CandidateSet> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line
            .split(|c: char| c == '\t' || c == ',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        if toks.len() < FIELDS || toks.len() > FIELDS + 1 {
            return Err(Error::MalformedRow {
                block: "candidate",
                row: entries.len() + 1,
                expected: FIELDS,
                found: toks.len(),
            });
        }
        let num = |i: usize| -> Result<f64> {
            toks[i].parse::<f64>().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("invalid number `{}`", toks[i]),
            })
        };
        let int = |i: usize| -> Result<usize> {
            toks[i].parse::<usize>().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("invalid integer `{}`", toks[i]),
            })
        };
        let s_max = num(6)?;
        entries.push(CandidateBranch {
            id: int(0)?,
            from_bus: int(1)?,
            to_bus: int(2)?,
            r: num(3)?,
            x: num(4)?,
            b_charging: num(5)?,
            s_max: (s_max > 0.0).then_some(s_max),
            tap_ratio: num(7)?,
            parallel: toks.len() > FIELDS && num(8)? != 0.0,
            decision: false,
        });
    }
    let provenance = match source {
        Some(p) => Provenance::Loaded { path: p.to_path_buf() },
        None => Provenance::Manual,
    };
    Ok(CandidateSet { entries, provenance })
}

/// Tab-separated output; `header` lines become `#` comments.
pub fn write_candidates(set: &CandidateSet, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("# id\tfrom\tto\tr\tx\tb\ts_max\ttap\tparallel\n");
    for c in &set.entries {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.id,
            c.from_bus,
            c.to_bus,
            c.r,
            c.x,
            c.b_charging,
            c.s_max.unwrap_or(0.0),
            c.tap_ratio,
            u8::from(c.parallel)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_tab_and_comma_with_header() {
        let text = "# seed 7\n1\t1\t2\t0.01\t0.1\t0.02\t100\t1\n2,2,3,0.02,0.2,0,0,0,1\n";
        let set = parse_candidates(text, None).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.entries[0].s_max, Some(100.0));
        assert_eq!(set.entries[1].s_max, None);
        assert!(set.entries[1].parallel);
        assert!(set.entries.iter().all(|c| !c.decision));
    }

    #[test]
    fn round_trip() {
        let text = "1\t4\t9\t0.0123\t0.1\t0.2\t175.5\t1\n";
        let set = parse_candidates(text, None).unwrap();
        let again = parse_candidates(&write_candidates(&set, &["x".into()]), None).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn short_row_is_an_error() {
        let err = parse_candidates("1\t2\t3\n", None).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { found: 3, .. }));
    }
}

//! MATPOWER-style `.m` case files.
//!
//! Only `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` are read; the
//! function wrapper, comments and every other block are ignored.

use std::fmt::Write as _;

use super::{Branch, Bus, BusKind, Generator, Network};
use crate::error::{Error, Result};

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;
const BRANCH_FULL_COLS: usize = 13;

struct Block {
    rows: Vec<(usize, Vec<f64>)>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Matches `mpc.<name> = ...` and returns what follows the `=`.
fn assignment<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let rest = line.trim_start().strip_prefix("mpc.")?.strip_prefix(name)?;
    let rest = rest.trim_start();
    rest.strip_prefix('=').map(str::trim_start)
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid number `{tok}`"),
        }),
    }
}

fn read_block(text: &str, name: &str) -> Result<Block> {
    let mut lines = text.lines().enumerate();
    let mut rows = Vec::new();
    let mut open = None;
    for (n, raw) in lines.by_ref() {
        let line = strip_comment(raw);
        if let Some(rest) = assignment(line, name) {
            let rest = rest.strip_prefix('[').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: format!("mpc.{name} is not a matrix"),
            })?;
            open = Some((n, rest.to_string()));
            break;
        }
    }
    let (start, first) = open.ok_or_else(|| Error::Parse {
        line: 0,
        msg: format!("missing mpc.{name} block"),
    })?;

    let mut pending: Vec<(usize, String)> = vec![(start + 1, first)];
    let mut closed = pending[0].1.contains(']');
    if !closed {
        for (n, raw) in lines {
            let line = strip_comment(raw).to_string();
            let done = line.contains(']');
            pending.push((n + 1, line));
            if done {
                closed = true;
                break;
            }
        }
    }
    if !closed {
        return Err(Error::Parse {
            line: start + 1,
            msg: format!("unterminated mpc.{name} block"),
        });
    }

    for (line_no, content) in pending {
        let content = match content.find(']') {
            Some(i) => content[..i].to_string(),
            None => content,
        };
        for segment in content.split(';') {
            let toks: Vec<&str> = segment
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if toks.is_empty() {
                continue;
            }
            let vals = toks
                .iter()
                .map(|t| parse_number(t, line_no))
                .collect::<Result<Vec<_>>>()?;
            rows.push((line_no, vals));
        }
    }
    Ok(Block { rows })
}

fn check_width(block: &'static str, row: usize, vals: &[f64], expected: usize) -> Result<()> {
    if vals.len() < expected {
        return Err(Error::MalformedRow {
            block,
            row,
            expected,
            found: vals.len(),
        });
    }
    Ok(())
}

fn bus_id(v: f64, line: usize) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Parse {
            line,
            msg: format!("invalid bus number {v}"),
        });
    }
    Ok(v as usize)
}

fn case_name(text: &str) -> String {
    text.lines()
        .find_map(|l| {
            let l = strip_comment(l).trim();
            let rest = l.strip_prefix("function")?;
            let (_, name) = rest.split_once('=')?;
            Some(name.trim().to_string())
        })
        .unwrap_or_else(|| "case".to_string())
}

/// Parses MATPOWER case text into a validated [`Network`].
pub fn parse_case(text: &str) -> Result<Network> {
    let base_mva = text
        .lines()
        .enumerate()
        .find_map(|(n, l)| assignment(strip_comment(l), "baseMVA").map(|r| (n, r)))
        .ok_or(Error::Parse {
            line: 0,
            msg: "missing mpc.baseMVA".into(),
        })
        .and_then(|(n, rest)| parse_number(rest.trim_end().trim_end_matches(';').trim(), n + 1))?;

    let mut buses = Vec::new();
    for (row, (line, v)) in read_block(text, "bus")?.rows.into_iter().enumerate() {
        check_width("bus", row + 1, &v, BUS_COLS)?;
        let kind = BusKind::from_code(v[1]).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown bus type {}", v[1]),
        })?;
        buses.push(Bus {
            id: bus_id(v[0], line)?,
            kind,
            p_load: v[2],
            q_load: v[3],
            g_shunt: v[4],
            b_shunt: v[5],
            area: v[6],
            vm: v[7],
            va: v[8].to_radians(),
            voltage_kv: v[9],
            zone: v[10],
            v_max: v[11],
            v_min: v[12],
            extra: v[BUS_COLS..].to_vec(),
        });
    }

    let mut generators = Vec::new();
    for (row, (line, v)) in read_block(text, "gen")?.rows.into_iter().enumerate() {
        check_width("gen", row + 1, &v, GEN_COLS)?;
        generators.push(Generator {
            bus: bus_id(v[0], line)?,
            p_set: v[1],
            q_set: v[2],
            q_max: v[3],
            q_min: v[4],
            v_set: v[5],
            m_base: v[6],
            in_service: v[7] > 0.0,
            p_max: v[8],
            p_min: v[9],
            extra: v[GEN_COLS..].to_vec(),
        });
    }

    let mut branches = Vec::new();
    for (row, (line, v)) in read_block(text, "branch")?.rows.into_iter().enumerate() {
        check_width("branch", row + 1, &v, BRANCH_COLS)?;
        let (ang_min, ang_max) = if v.len() >= BRANCH_FULL_COLS {
            (v[11], v[12])
        } else {
            (-360.0, 360.0)
        };
        branches.push(Branch {
            from_bus: bus_id(v[0], line)?,
            to_bus: bus_id(v[1], line)?,
            r: v[2],
            x: v[3],
            b_charging: v[4],
            s_max: if v[5] > 0.0 { Some(v[5]) } else { None },
            rate_b: v[6],
            rate_c: v[7],
            tap_ratio: v[8],
            shift: v[9].to_radians(),
            in_service: v[10] > 0.0,
            ang_min: ang_min.to_radians(),
            ang_max: ang_max.to_radians(),
            extra: v.get(BRANCH_FULL_COLS..).map(<[f64]>::to_vec).unwrap_or_default(),
        });
    }

    Network::new(case_name(text), base_mva, buses, branches, generators)
}

fn num(out: &mut String, v: f64) {
    if v.is_infinite() {
        out.push_str(if v > 0.0 { "Inf" } else { "-Inf" });
    } else {
        let _ = write!(out, "{v}");
    }
}

/// Degrees with ulp noise from the radian round trip removed.
fn deg(out: &mut String, rad: f64) {
    let d = rad.to_degrees();
    let s = format!("{d:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    out.push_str(if s == "-0" { "0" } else { s });
}

fn row(out: &mut String, cells: impl IntoIterator<Item = Cell>) {
    out.push('\t');
    let mut first = true;
    for c in cells {
        if !first {
            out.push('\t');
        }
        first = false;
        match c {
            Cell::Num(v) => num(out, v),
            Cell::Deg(v) => deg(out, v),
        }
    }
    out.push_str(";\n");
}

enum Cell {
    Num(f64),
    Deg(f64),
}

/// Serializes a network back to MATPOWER text with the same block layout.
/// `header` lines are emitted as `%` comments after the function line.
pub fn write_case(net: &Network, header: &[String]) -> String {
    use Cell::{Deg, Num};
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", net.name);
    for h in header {
        let _ = writeln!(out, "% {h}");
    }
    out.push_str("\nmpc.version = '2';\n\n%% system MVA base\nmpc.baseMVA = ");
    num(&mut out, net.base_mva);
    out.push_str(";\n\n%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &net.buses {
        let mut cells = vec![
            Num(b.id as f64),
            Num(b.kind.code() as f64),
            Num(b.p_load),
            Num(b.q_load),
            Num(b.g_shunt),
            Num(b.b_shunt),
            Num(b.area),
            Num(b.vm),
            Deg(b.va),
            Num(b.voltage_kv),
            Num(b.zone),
            Num(b.v_max),
            Num(b.v_min),
        ];
        cells.extend(b.extra.iter().copied().map(Num));
        row(&mut out, cells);
    }
    out.push_str("];\n\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &net.generators {
        let mut cells = vec![
            Num(g.bus as f64),
            Num(g.p_set),
            Num(g.q_set),
            Num(g.q_max),
            Num(g.q_min),
            Num(g.v_set),
            Num(g.m_base),
            Num(if g.in_service { 1.0 } else { 0.0 }),
            Num(g.p_max),
            Num(g.p_min),
        ];
        cells.extend(g.extra.iter().copied().map(Num));
        row(&mut out, cells);
    }
    out.push_str("];\n\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n");
    for br in &net.branches {
        let mut cells = vec![
            Num(br.from_bus as f64),
            Num(br.to_bus as f64),
            Num(br.r),
            Num(br.x),
            Num(br.b_charging),
            Num(br.s_max.unwrap_or(0.0)),
            Num(br.rate_b),
            Num(br.rate_c),
            Num(br.tap_ratio),
            Deg(br.shift),
            Num(if br.in_service { 1.0 } else { 0.0 }),
            Deg(br.ang_min),
            Deg(br.ang_max),
        ];
        cells.extend(br.extra.iter().copied().map(Num));
        row(&mut out, cells);
    }
    out.push_str("];\n");
    out
}

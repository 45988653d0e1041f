use std::fs::{self, OpenOptions};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::ValueEnum;
use ecogrid::assessment::contingency::{case_count, parse_outage_list, CSV_HEADER};
use ecogrid::assessment::{run_contingencies_streaming, CaseResult, ContingencyReport, ContingencySpec, ElementKind};
use serde::Serialize;

use super::{case_label, load_case, InputError};
use crate::output::Output;
use crate::table::{f4, render};
use crate::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Branch,
    Substation,
    List,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: PathBuf,

    /// Simultaneous outages per case.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub depth: u8,

    #[arg(long, value_enum, default_value_t = KindArg::Branch)]
    pub kind: KindArg,

    /// Outage sets for `--kind list`, one per line (`branch:N`, `bus:ID`).
    #[arg(long, required_if_eq("kind", "list"))]
    pub list: Option<PathBuf>,

    /// Relative allowance above the branch rating.
    #[arg(long, default_value_t = 0.0)]
    pub flow_tol: f64,

    /// Allowance (pu) outside each bus voltage band.
    #[arg(long, default_value_t = 0.0)]
    pub voltage_tol: f64,
}

#[derive(Serialize)]
struct Inputs {
    case: String,
    depth: u8,
    kind: KindArg,
    list: Option<String>,
    flow_tol: f64,
    voltage_tol: f64,
}

#[derive(Serialize)]
struct Summary {
    total_cases: usize,
    violations: usize,
    unsolved: usize,
    normalized_violations: f64,
}

/// Rows of a previous run with the same preamble, up to the first damaged or
/// out-of-order row.
fn previous_cases(text: &str, preamble: &str) -> Vec<CaseResult> {
    let Some(body) = text.strip_prefix(preamble) else {
        return Vec::new();
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(body.as_bytes());
    let mut cases = Vec::new();
    for rec in rdr.records() {
        let Ok(rec) = rec else { break };
        match CaseResult::from_record(&rec) {
            Ok(c) if c.index == cases.len() => cases.push(c),
            _ => break,
        }
    }
    cases
}

fn header_line() -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn record_line(c: &CaseResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(c.to_record())?;
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn run(args: &Args, out: &mut Output) -> Result<()> {
    out.set_command("contingency");
    let net = load_case(&args.case)?;
    let mut spec = match args.kind {
        KindArg::Branch => ContingencySpec::new(args.depth.into(), ElementKind::Branch),
        KindArg::Substation => ContingencySpec::new(args.depth.into(), ElementKind::Substation),
        KindArg::List => {
            let path = args.list.as_ref().expect("clap requires --list");
            let text = fs::read_to_string(path).map_err(|e| InputError {
                path: path.clone(),
                source: e.into(),
            })?;
            let sets = parse_outage_list(&text).map_err(|source| InputError {
                path: path.clone(),
                source,
            })?;
            ContingencySpec::from_list(sets)
        }
    };
    spec.flow_tol = args.flow_tol;
    spec.voltage_tol = args.voltage_tol;

    let list_label = args.list.as_ref().map(|p| p.display().to_string());
    let extra = vec![format!(
        "case {} depth {} kind {:?} list {} flow_tol {} voltage_tol {}",
        case_label(&args.case),
        args.depth,
        args.kind,
        list_label.as_deref().unwrap_or("-"),
        args.flow_tol,
        args.voltage_tol
    )
    .to_lowercase()];
    let preamble = out.csv_preamble(&extra) + &header_line()?;
    let path = out.path("contingency.csv");
    let prev = match fs::read_to_string(&path) {
        Ok(text) => {
            let prev = previous_cases(&text, &preamble);
            if prev.is_empty() && !text.starts_with(&preamble) {
                log::warn!("{} was written with other settings; starting over", path.display());
            } else {
                log::info!("resuming after {} finished cases", prev.len());
            }
            prev
        }
        Err(_) => Vec::new(),
    };
    let mut text = preamble;
    for c in &prev {
        text.push_str(&record_line(c)?);
    }
    out.write("contingency.csv", &text)?;

    let mut file = OpenOptions::new()
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    let skip = prev.len();
    let report = out.time("contingencies", || {
        run_contingencies_streaming(&net, &spec, skip, |c| {
            use std::io::Write;
            let line = record_line(c).map_err(|e| ecogrid::Error::Invalid(e.to_string()))?;
            file.write_all(line.as_bytes())?;
            Ok(())
        })
    })?;
    let mut all = prev;
    all.extend(report.cases);
    let report = ContingencyReport::from_cases(all);
    debug_assert_eq!(report.total_cases, case_count(&net, &spec));

    let summary = Summary {
        total_cases: report.total_cases,
        violations: report.violations,
        unsolved: report.unsolved,
        normalized_violations: report.normalized_violations,
    };
    let inputs = Inputs {
        case: args.case.display().to_string(),
        depth: args.depth,
        kind: args.kind,
        list: list_label,
        flow_tol: args.flow_tol,
        voltage_tol: args.voltage_tol,
    };
    match out.format {
        Format::Json => {
            out.write_json("contingency.json", &inputs, &summary)?;
        }
        Format::Csv => {
            out.write_csv(
                "contingency_summary.csv",
                &extra,
                &["total_cases", "violations", "unsolved", "normalized_violations"],
                &[vec![
                    summary.total_cases.to_string(),
                    summary.violations.to_string(),
                    summary.unsolved.to_string(),
                    summary.normalized_violations.to_string(),
                ]],
            )?;
        }
    }
    let label = match args.kind {
        KindArg::List => format!("{} list", case_label(&args.case)),
        _ => format!("{} N-{} {:?}", case_label(&args.case), args.depth, args.kind).to_lowercase(),
    };
    print!(
        "{}",
        render(
            &["Contingency", "Total Cases", "Violations", "Unsolved", "Normalized Violations"],
            &[vec![
                label,
                summary.total_cases.to_string(),
                summary.violations.to_string(),
                summary.unsolved.to_string(),
                f4(summary.normalized_violations),
            ]],
        )
    );
    Ok(())
}

use std::path::PathBuf;

use anyhow::Result;
use ecogrid::assessment::{analyze, NetworkAnalysis};
use serde::Serialize;

use super::{case_label, load_case};
use crate::output::Output;
use crate::table::{f4, render};
use crate::Format;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// MATPOWER case file; repeat for several rows.
    #[arg(long, required = true)]
    pub case: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Inputs {
    cases: Vec<String>,
}

#[derive(Serialize)]
struct Rows<'a> {
    rows: &'a [NetworkAnalysis],
}

const HEADERS: [&str; 11] = [
    "Use Case", "Achieved R_ECO", "R_CF", "d", "c", "b", "l", "Mean(pf)", "STD(pf)", "Mean(p%)", "STD(p%)",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn run(args: &Args, out: &mut Output) -> Result<()> {
    out.set_command("analyze");
    let mut rows = Vec::new();
    for path in &args.case {
        let net = load_case(path)?;
        let mut row = out.time("analyze", || analyze(&net))?;
        row.case = case_label(path);
        rows.push(row);
    }
    let inputs = Inputs {
        cases: args.case.iter().map(|p| p.display().to_string()).collect(),
    };
    match out.format {
        Format::Json => {
            out.write_json("analyze.json", &inputs, &Rows { rows: &rows })?;
        }
        Format::Csv => {
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let p = &r.properties;
                    vec![
                        r.case.clone(),
                        r.r_eco.to_string(),
                        opt(r.r_eco_ac),
                        opt(p.r_cf),
                        p.avg_degree.to_string(),
                        p.clustering.to_string(),
                        p.betweenness.to_string(),
                        p.shortest_path.to_string(),
                        p.flows.mean_pf.to_string(),
                        p.flows.std_pf.to_string(),
                        p.flows.mean_pct.to_string(),
                        p.flows.std_pct.to_string(),
                        format!("{:?}", r.flow_model).to_lowercase(),
                    ]
                })
                .collect();
            out.write_csv(
                "analyze.csv",
                &[],
                &[
                    "case", "r_eco", "r_eco_ac", "r_cf", "avg_degree", "clustering", "betweenness", "shortest_path", "mean_pf",
                    "std_pf", "mean_pct", "std_pct", "flow_model",
                ],
                &csv_rows,
            )?;
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let p = &r.properties;
            vec![
                r.case.clone(),
                f4(r.r_eco),
                p.r_cf.map_or("-".into(), f4),
                format!("{:.3}", p.avg_degree),
                format!("{:.5}", p.clustering),
                format!("{:.5}", p.betweenness),
                f4(p.shortest_path),
                format!("{:.2}", p.flows.mean_pf),
                format!("{:.2}", p.flows.std_pf),
                format!("{:.2}", p.flows.mean_pct),
                format!("{:.2}", p.flows.std_pct),
            ]
        })
        .collect();
    print!("{}", render(&HEADERS, &table));
    Ok(())
}

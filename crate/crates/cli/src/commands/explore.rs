use std::path::PathBuf;

use anyhow::Result;
use ecogrid::assessment::{explore_topologies, ExplorePoint};
use serde::Serialize;

use super::{case_label, load_case};
use crate::output::Output;
use crate::table::{f4, render};
use crate::Format;

fn join_pairs(pairs: &[(usize, usize)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: PathBuf,

    /// Largest number of added links.
    #[arg(long)]
    pub max_links: usize,

    /// Structures per link count before switching from enumeration to sampling.
    #[arg(long, default_value_t = 150)]
    pub budget: usize,
}

#[derive(Serialize)]
struct Inputs {
    case: String,
    max_links: usize,
    budget: usize,
}

#[derive(Serialize)]
struct Points<'a> {
    points: &'a [ExplorePoint],
}

pub fn run(args: &Args, out: &mut Output) -> Result<()> {
    out.set_command("explore");
    let net = load_case(&args.case)?;
    let seed = out.seed;
    let points = out.time("explore", || explore_topologies(&net, args.max_links, args.budget, seed))?;
    let extra = vec![format!("case {} max_links {} budget {}", case_label(&args.case), args.max_links, args.budget)];
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.links.to_string(),
                p.added.to_string(),
                p.structure_id.to_string(),
                p.r_eco.to_string(),
                join_pairs(&p.pairs),
            ]
        })
        .collect();
    out.write_csv("explore.csv", &extra, &["links", "added", "structure_id", "r_eco", "pairs"], &rows)?;
    if out.format == Format::Json {
        let inputs = Inputs {
            case: args.case.display().to_string(),
            max_links: args.max_links,
            budget: args.budget,
        };
        out.write_json("explore.json", &inputs, &Points { points: &points })?;
    }

    let mut summary = Vec::new();
    let max_added = points.iter().map(|p| p.added).max().unwrap_or(0);
    for d in 0..=max_added {
        let r: Vec<f64> = points.iter().filter(|p| p.added == d).map(|p| p.r_eco).collect();
        if r.is_empty() {
            continue;
        }
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.push(vec![d.to_string(), r.len().to_string(), f4(lo), f4(hi)]);
    }
    print!("{}", render(&["Added Links", "Structures", "Min R_ECO", "Max R_ECO"], &summary));
    Ok(())
}

use std::path::PathBuf;
use std::time::Duration;

use anyhow::Result;
use clap::ValueEnum;
use ecogrid::candidates::generate_candidates;
use ecogrid::expansion::{solve_expansion, ExpansionProblem, Mode, Rebalance, Status};
use ecogrid::grid::{apply_decisions, write_case, CandidateSet};
use serde::Serialize;

use super::{case_label, load_candidates, load_case, GenerationArgs};
use crate::output::Output;
use crate::table::{f4, render};
use crate::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Structure,
    Opf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RebalanceArg {
    Proportional,
    SlackOnly,
}

#[derive(Debug, clap::Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["candidates", "generate"]))]
pub struct Args {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: PathBuf,

    /// Candidate branch file.
    #[arg(long)]
    pub candidates: Option<PathBuf>,

    /// Generate this many candidates from the case instead.
    #[arg(long, value_name = "M")]
    pub generate: Option<usize>,

    #[command(flatten)]
    pub gen: GenerationArgs,

    /// Dispatch reported for the chosen topology.
    #[arg(long, value_enum, default_value_t = ModeArg::Structure)]
    pub mode: ModeArg,

    /// Order of the series logarithm in the relaxed objective.
    #[arg(long, default_value_t = 1)]
    pub order: usize,

    /// Maximum branch-and-bound nodes.
    #[arg(long, default_value_t = 500)]
    pub node_budget: usize,

    /// Wall-clock cap in seconds; results then depend on machine speed.
    #[arg(long, value_name = "SECS")]
    pub time_budget: Option<f64>,

    /// How case setpoints are rebalanced when evaluating a topology.
    #[arg(long, value_enum, default_value_t = RebalanceArg::Proportional)]
    pub rebalance: RebalanceArg,
}

#[derive(Serialize)]
struct Inputs {
    case: String,
    candidates: Option<String>,
    generate: Option<usize>,
    mode: ModeArg,
    order: usize,
    node_budget: usize,
    time_budget: Option<f64>,
    rebalance: RebalanceArg,
}

pub fn run(args: &Args, out: &mut Output) -> Result<()> {
    out.set_command("optimize");
    let net = load_case(&args.case)?;
    let cands: CandidateSet = match (&args.candidates, args.generate) {
        (Some(path), _) => load_candidates(path, &net)?,
        (None, Some(m)) => {
            let spec = args.gen.spec(m, out.seed);
            out.time("candidates", || generate_candidates(&net, &spec))?
        }
        (None, None) => unreachable!("clap requires a candidate source"),
    };
    let mut prob = ExpansionProblem::new(
        net.clone(),
        cands,
        match args.mode {
            ModeArg::Structure => Mode::Structure,
            ModeArg::Opf => Mode::Opf,
        },
    );
    prob.order = args.order;
    prob.limits.node_budget = args.node_budget;
    prob.limits.time_budget = match args.time_budget {
        Some(s) if s > 0.0 && s.is_finite() => Some(Duration::from_secs_f64(s)),
        Some(s) => anyhow::bail!("--time-budget must be positive, got {s}"),
        None => None,
    };
    prob.rebalance = match args.rebalance {
        RebalanceArg::Proportional => Rebalance::Proportional,
        RebalanceArg::SlackOnly => Rebalance::SlackOnly,
    };
    let res = out.time("solve", || solve_expansion(&prob))?;

    let inputs = Inputs {
        case: args.case.display().to_string(),
        candidates: args.candidates.as_ref().map(|p| p.display().to_string()),
        generate: args.generate,
        mode: args.mode,
        order: args.order,
        node_budget: args.node_budget,
        time_budget: args.time_budget,
        rebalance: args.rebalance,
    };
    let label = format!(
        "{}-{}-{}",
        case_label(&args.case),
        prob.cands.len(),
        match args.mode {
            ModeArg::Structure => "Structure",
            ModeArg::Opf => "OPF",
        }
    );
    let achieved = match args.mode {
        ModeArg::Structure => res.achieved_r_eco_structure,
        ModeArg::Opf => res.achieved_r_eco_opf,
    };
    let status = match res.status {
        Status::OptimalWithinBudget => "optimal-within-budget",
        Status::IncumbentOnly => "incumbent-only",
        Status::Infeasible => "infeasible",
    };

    match out.format {
        Format::Json => {
            out.write_json("result.json", &inputs, &res)?;
        }
        Format::Csv => {
            out.write_csv(
                "result.csv",
                &[],
                &["use_case", "solved_r_eco", "base_r_eco", "achieved_r_eco_structure", "achieved_r_eco_opf", "built", "status", "nodes_explored"],
                &[vec![
                    label.clone(),
                    res.solved_r_eco.to_string(),
                    res.base_r_eco.to_string(),
                    res.achieved_r_eco_structure.to_string(),
                    res.achieved_r_eco_opf.to_string(),
                    res.built.to_string(),
                    status.into(),
                    res.nodes_explored.to_string(),
                ]],
            )?;
            let rows: Vec<Vec<String>> = prob
                .cands
                .entries
                .iter()
                .zip(&res.decisions)
                .map(|(c, d)| vec![c.id.to_string(), c.from_bus.to_string(), c.to_bus.to_string(), u8::from(*d).to_string()])
                .collect();
            out.write_csv("decisions.csv", &[], &["id", "from", "to", "built"], &rows)?;
        }
    }

    let chosen = prob.cands.with_decisions(&res.decisions);
    let mut expanded = apply_decisions(&net, &chosen)?;
    let mut gens = expanded.generators.clone();
    for (g, p) in gens.iter_mut().zip(&res.dispatch.p_gen) {
        if g.in_service {
            g.p_set = *p;
        }
    }
    expanded = expanded.with_generators(gens)?;
    let header = vec![
        format!("seed {}", out.seed),
        format!("{label}: {} of {} candidates built, DC dispatch of the chosen mode", res.built, prob.cands.len()),
    ];
    out.write("expanded_case.m", &write_case(&expanded, &header))?;
    out.write("search_log.ndjson", &res.search_log_ndjson()?)?;

    let base_label = case_label(&args.case);
    print!(
        "{}",
        render(
            &["Use Case", "Solved Optimal R_ECO", "Achieved R_ECO", "Added Branches", "Status", "Nodes"],
            &[
                vec![base_label, "-".into(), f4(res.base_r_eco), "0".into(), "-".into(), "-".into()],
                vec![
                    label,
                    f4(res.solved_r_eco),
                    f4(achieved),
                    res.built.to_string(),
                    status.into(),
                    res.nodes_explored.to_string(),
                ],
            ],
        )
    );
    Ok(())
}

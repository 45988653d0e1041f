use std::path::PathBuf;

use anyhow::Result;
use ecogrid::candidates::generate_candidates;
use ecogrid::grid::write_candidates;

use super::{case_label, load_case, GenerationArgs};
use crate::output::Output;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// MATPOWER case file.
    #[arg(long)]
    pub case: PathBuf,

    /// Number of candidates to draw.
    #[arg(long = "generate", visible_alias = "m", value_name = "M")]
    pub m: usize,

    #[command(flatten)]
    pub gen: GenerationArgs,
}

pub fn run(args: &Args, out: &mut Output) -> Result<()> {
    out.set_command("candidates");
    let net = load_case(&args.case)?;
    let spec = args.gen.spec(args.m, out.seed);
    let set = out.time("generate", || generate_candidates(&net, &spec))?;
    let mut header = spec.header();
    header.push(format!("case {}", case_label(&args.case)));
    let path = out.write("candidates.tsv", &write_candidates(&set, &header))?;
    println!("{} candidates for {} written to {}", set.len(), case_label(&args.case), path.display());
    Ok(())
}

pub mod analyze;
pub mod candidates;
pub mod contingency;
pub mod explore;
pub mod optimize;

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ecogrid::candidates::{GenerationSpec, LevelScope};
use ecogrid::grid::{parse_candidates, parse_case, CandidateSet, Network};
use ecogrid::Error;

/// A problem with an input file; always exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{}: {source}", path.display())]
pub struct InputError {
    pub path: PathBuf,
    #[source]
    pub source: Error,
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InputError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Parse { .. } | Error::MalformedRow { .. }) => 2,
        Some(Error::Infeasible(_)) => 3,
        Some(Error::BudgetExhausted) => 4,
        _ => 1,
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

pub fn load_case(path: &Path) -> Result<Network, InputError> {
    parse_case(&read(path)?).map_err(|source| InputError {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_candidates(path: &Path, net: &Network) -> Result<CandidateSet, InputError> {
    let wrap = |source| InputError {
        path: path.to_path_buf(),
        source,
    };
    let set = parse_candidates(&read(path)?, Some(path)).map_err(wrap)?;
    set.validate(net).map_err(wrap)?;
    Ok(set)
}

/// File stem used as the "Use Case" label.
pub fn case_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    /// Only the highest voltage level.
    Highest,
    /// Every level, round-robin.
    All,
}

#[derive(Debug, Clone, clap::Args)]
pub struct GenerationArgs {
    /// Voltage levels candidates are drawn at.
    #[arg(long, value_enum, default_value_t = Scope::Highest)]
    pub scope: Scope,

    /// Allow candidates parallel to existing circuits.
    #[arg(long)]
    pub allow_parallel: bool,
}

impl GenerationArgs {
    pub fn spec(&self, m: usize, seed: u64) -> GenerationSpec {
        let mut spec = GenerationSpec::new(m, seed);
        spec.voltage_levels = match self.scope {
            Scope::Highest => LevelScope::HighestOnly,
            Scope::All => LevelScope::All,
        };
        spec.allow_parallel = self.allow_parallel;
        spec
    }
}

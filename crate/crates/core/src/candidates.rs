//! Candidate-branch synthesis at matching voltage levels.
//!
//! Bus pairs and electrical parameters come from two ChaCha8 streams of the
//! same seed: stream 0 picks pairs, stream 1 draws parameters. Both streams
//! are consumed in a fixed order so a seed reproduces the same file on every
//! platform.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BusKind, CandidateBranch, CandidateSet, Network, Provenance};

const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelScope {
    HighestOnly,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationSpec {
    pub m: usize,
    pub seed: u64,
    pub voltage_levels: LevelScope,
    pub allow_parallel: bool,
}

impl GenerationSpec {
    pub fn new(m: usize, seed: u64) -> Self {
        GenerationSpec {
            m,
            seed,
            voltage_levels: LevelScope::HighestOnly,
            allow_parallel: false,
        }
    }

    /// Comment lines describing the spec, for candidate file headers.
    pub fn header(&self) -> Vec<String> {
        vec![
            format!("seed {}", self.seed),
            format!(
                "m {} levels {} allow_parallel {}",
                self.m,
                match self.voltage_levels {
                    LevelScope::HighestOnly => "highest-only",
                    LevelScope::All => "all",
                },
                self.allow_parallel
            ),
        ]
    }
}

/// Mean and standard deviation of one parameter at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamFit {
    pub mean: f64,
    pub std: f64,
}

impl ParamFit {
    fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(ParamFit { mean, std })
    }

    /// Draws until `ok` accepts, falling back to the mean.
    fn draw(&self, rng: &mut ChaCha8Rng, ok: impl Fn(f64) -> bool) -> f64 {
        let normal = Normal::new(self.mean, self.std).expect("finite nonnegative std");
        for _ in 0..MAX_REDRAWS {
            let v = normal.sample(rng);
            if ok(v) {
                return v;
            }
        }
        self.mean
    }
}

/// Per-level normal fits over same-level in-service branches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelFit {
    /// Level in units of 0.1 kV.
    pub level: i64,
    pub buses: Vec<usize>,
    pub branch_count: usize,
    pub r: ParamFit,
    pub x: ParamFit,
    pub b: ParamFit,
    /// `None` when no same-level branch has a rating.
    pub s_max: Option<ParamFit>,
}

impl LevelFit {
    pub fn kv(&self) -> f64 {
        self.level as f64 / 10.0
    }

    /// Draws (r, x, b, s_max), rejecting nonphysical values.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64, f64, Option<f64>) {
        let r = self.r.draw(rng, |v| v >= 0.0);
        let x = self.x.draw(rng, |v| v > 0.0);
        let b = self.b.draw(rng, |v| v >= 0.0);
        let s = self.s_max.map(|f| f.draw(rng, |v| v > 0.0));
        (r, x, b, s)
    }
}

fn level_of(kv: f64) -> i64 {
    (kv * 10.0).round() as i64
}

/// Fits every level with at least two buses and one same-level branch,
/// highest level first.
pub fn fit_levels(net: &Network) -> Vec<LevelFit> {
    let mut buses: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for b in net.buses.iter().filter(|b| b.kind != BusKind::Isolated) {
        buses.entry(level_of(b.voltage_kv)).or_default().push(b.id);
    }
    let mut params: BTreeMap<i64, [Vec<f64>; 4]> = BTreeMap::new();
    for (_, br) in net.in_service_branches() {
        let lf = level_of(net.buses[net.idx(br.from_bus)].voltage_kv);
        let lt = level_of(net.buses[net.idx(br.to_bus)].voltage_kv);
        if lf != lt {
            continue;
        }
        let p = params.entry(lf).or_default();
        p[0].push(br.r);
        p[1].push(br.x);
        p[2].push(br.b_charging);
        if let Some(s) = br.s_max {
            p[3].push(s);
        }
    }
    buses
        .into_iter()
        .rev()
        .filter(|(_, ids)| ids.len() >= 2)
        .filter_map(|(level, ids)| {
            let p = params.get(&level)?;
            Some(LevelFit {
                level,
                buses: ids,
                branch_count: p[1].len(),
                r: ParamFit::from_samples(&p[0])?,
                x: ParamFit::from_samples(&p[1])?,
                b: ParamFit::from_samples(&p[2])?,
                s_max: ParamFit::from_samples(&p[3]),
            })
        })
        .collect()
}

/// Unused bus pairs at a level, ordered by (from, to) position.
fn free_pairs(net: &Network, fit: &LevelFit, allow_parallel: bool) -> Vec<(usize, usize)> {
    let mut ids = fit.buses.clone();
    ids.sort_by_key(|&id| net.idx(id));
    let mut out = Vec::new();
    for (a, &i) in ids.iter().enumerate() {
        for &j in &ids[a + 1..] {
            if allow_parallel || !net.has_circuit(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Generates `spec.m` candidates, round-robin over the in-scope levels
/// from the highest down.
pub fn generate_candidates(net: &Network, spec: &GenerationSpec) -> Result<CandidateSet> {
    if spec.m == 0 {
        return Err(Error::Invalid("candidate count must be at least 1".into()));
    }
    let mut fits = fit_levels(net);
    if fits.is_empty() {
        return Err(Error::NoFittableLevel);
    }
    if spec.voltage_levels == LevelScope::HighestOnly {
        fits.truncate(1);
    }
    let mut pools: Vec<Vec<(usize, usize)>> =
        fits.iter().map(|f| free_pairs(net, f, spec.allow_parallel)).collect();
    let available: usize = pools.iter().map(Vec::len).sum();
    if spec.m > available {
        return Err(Error::NotEnoughPairs {
            requested: spec.m,
            available,
        });
    }

    let mut pair_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pair_rng.set_stream(0);
    let mut param_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    param_rng.set_stream(1);

    let mut entries = Vec::with_capacity(spec.m);
    let mut level = 0;
    while entries.len() < spec.m {
        let pool = &mut pools[level];
        if !pool.is_empty() {
            let k = pair_rng.random_range(0..pool.len());
            let (from_bus, to_bus) = pool.swap_remove(k);
            let (r, x, b, s_max) = fits[level].sample(&mut param_rng);
            entries.push(CandidateBranch {
                id: entries.len() + 1,
                from_bus,
                to_bus,
                r,
                x,
                b_charging: b,
                s_max,
                tap_ratio: 1.0,
                parallel: net.has_circuit(from_bus, to_bus),
                decision: false,
            });
        }
        level = (level + 1) % pools.len();
    }
    log::info!(
        "generated {} candidates over {} level(s), seed {}",
        entries.len(),
        fits.len(),
        spec.seed
    );
    Ok(CandidateSet {
        entries,
        provenance: Provenance::Generated { seed: spec.seed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testnets::*;

    #[test]
    fn two_bus_gets_only_pair_with_mean_parameters() {
        let net = two_bus(0.1, 50.0);
        let mut spec = GenerationSpec::new(1, 3);
        spec.allow_parallel = true;
        let set = generate_candidates(&net, &spec).unwrap();
        let c = &set.entries[0];
        assert_eq!((c.from_bus, c.to_bus), (1, 2));
        assert_eq!(c.x, 0.1);
        assert_eq!(c.s_max, Some(250.0));
        assert!(c.parallel);
    }

    #[test]
    fn too_many_requested_is_an_error() {
        let net = triangle(0.1, 10.0);
        let err = generate_candidates(&net, &GenerationSpec::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::NotEnoughPairs { available: 0, .. }));
    }

    #[test]
    fn sampled_mean_matches_fit() {
        let fit = LevelFit {
            level: 2300,
            buses: vec![],
            branch_count: 5,
            r: ParamFit { mean: 0.01, std: 0.002 },
            x: ParamFit { mean: 0.08, std: 0.01 },
            b: ParamFit { mean: 0.1, std: 0.02 },
            s_max: Some(ParamFit { mean: 500.0, std: 50.0 }),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mean = (0..n).map(|_| fit.sample(&mut rng).1).sum::<f64>() / n as f64;
        assert!((mean - 0.08).abs() < 3.0 * 0.01 / (n as f64).sqrt());
    }
}

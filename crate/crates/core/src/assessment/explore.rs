//! Robustness of the network as links are added between unconnected buses.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::graph::BusGraph;
use crate::eco::{build_efm, eco_metrics_exact};
use crate::error::{Error, Result};
use crate::grid::{Branch, Network};
use crate::powerflow::solve_dc;

const EXPLORE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorePoint {
    /// Distinct bus pairs joined after the addition.
    pub links: usize,
    pub added: usize,
    /// Lexicographic rank of the added pair set among all sets of its size.
    pub structure_id: u128,
    pub r_eco: f64,
    /// Added pairs as bus ids.
    pub pairs: Vec<(usize, usize)>,
}

/// A line with the mean electrical parameters of the in-service branches.
pub fn mean_link(net: &Network, from_bus: usize, to_bus: usize) -> Result<Branch> {
    let brs: Vec<&Branch> = net.in_service_branches().map(|(_, b)| b).collect();
    if brs.is_empty() {
        return Err(Error::Invalid("network has no in-service branch to average".into()));
    }
    let mean = |f: &dyn Fn(&Branch) -> f64| brs.iter().map(|b| f(b)).sum::<f64>() / brs.len() as f64;
    let rated: Vec<f64> = brs.iter().filter_map(|b| b.s_max).collect();
    let s_max = (!rated.is_empty()).then(|| rated.iter().sum::<f64>() / rated.len() as f64);
    Ok(Branch::line(
        from_bus,
        to_bus,
        mean(&|b| b.r),
        mean(&|b| b.x),
        mean(&|b| b.b_charging),
        s_max,
    ))
}

/// Bus-index pairs (i < j) with no branch between them.
pub fn free_pairs(net: &Network) -> Vec<(usize, usize)> {
    let g = BusGraph::from_network(net);
    let n = g.len();
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| g.adj[i].binary_search(&j).is_err())
        .collect()
}

pub fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i + 1) as u128)
}

/// Lexicographic rank of a sorted k-subset of 0..n.
pub fn combination_rank(n: usize, comb: &[usize]) -> u128 {
    let k = comb.len();
    let mut rank = 0u128;
    let mut next = 0;
    for (i, &c) in comb.iter().enumerate() {
        for j in next..c {
            rank += binomial_u128(n - 1 - j, k - 1 - i);
        }
        next = c + 1;
    }
    rank
}

/// Exact R_ECO of the DC solution with the case setpoints, the slack
/// absorbing any imbalance.
pub fn dc_r_eco(net: &Network) -> Result<f64> {
    let sol = solve_dc(net)?;
    Ok(eco_metrics_exact(&build_efm(net, &sol, None)?)?.r_eco)
}

/// For every added-link count 0..=k_links: all placements when there are at
/// most `sample_budget` of them, otherwise `sample_budget` distinct placements
/// drawn uniformly. Points are ordered by link count, then structure id.
pub fn explore_topologies(net: &Network, k_links: usize, sample_budget: usize, seed: u64) -> Result<Vec<ExplorePoint>> {
    if sample_budget == 0 {
        return Err(Error::Invalid("sample budget must be positive".into()));
    }
    let base_links = BusGraph::from_network(net).edge_count();
    let free = free_pairs(net);
    let f = free.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EXPLORE_STREAM);

    let mut out = Vec::new();
    for d in 0..=k_links.min(f) {
        let total = binomial_u128(f, d);
        let combos: Vec<Vec<usize>> = if total <= sample_budget as u128 {
            (0..f).combinations(d).collect()
        } else {
            let mut seen = BTreeSet::new();
            while seen.len() < sample_budget {
                let mut c = rand::seq::index::sample(&mut rng, f, d).into_vec();
                c.sort_unstable();
                seen.insert(c);
            }
            seen.into_iter().collect()
        };
        log::debug!("explore: {} of {} structures with {d} added links", combos.len(), total);
        let mut points = combos
            .into_par_iter()
            .map(|c| {
                let pairs: Vec<(usize, usize)> = c
                    .iter()
                    .map(|&p| (net.buses[free[p].0].id, net.buses[free[p].1].id))
                    .collect();
                let mut branches = net.branches.clone();
                for &(a, b) in &pairs {
                    branches.push(mean_link(net, a, b)?);
                }
                let r_eco = dc_r_eco(&net.with_branches(branches)?)?;
                Ok(ExplorePoint {
                    links: base_links + d,
                    added: d,
                    structure_id: combination_rank(f, &c),
                    r_eco,
                    pairs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        points.sort_by_key(|p| p.structure_id);
        out.extend(points);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testnets::*;

    #[test]
    fn ranks_follow_enumeration_order() {
        for (i, c) in (0..6).combinations(3).enumerate() {
            assert_eq!(combination_rank(6, &c), i as u128);
        }
        assert_eq!(binomial_u128(6, 3), 20);
    }

    #[test]
    fn zero_links_is_the_base_case() {
        let net = triangle(0.1, 80.0);
        let pts = explore_topologies(&net, 0, 10, 1).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].r_eco, dc_r_eco(&net).unwrap());
        assert_eq!(pts[0].links, 3);
    }

    #[test]
    fn sampling_draws_distinct_structures() {
        let (net, _) = four_bus();
        // Path 1-2-3-4 leaves three free pairs; budget 2 forces sampling at d = 1, 2.
        let pts = explore_topologies(&net, 3, 2, 9).unwrap();
        let counts = pts.iter().counts_by(|p| p.added);
        assert_eq!(counts[&0], 1);
        assert_eq!(counts[&1], 2);
        assert_eq!(counts[&2], 2);
        assert_eq!(counts[&3], 1);
        let again = explore_topologies(&net, 3, 2, 9).unwrap();
        assert_eq!(pts, again);
    }

    #[test]
    fn mean_link_averages_parameters() {
        let (net, _) = four_bus();
        let l = mean_link(&net, 1, 3).unwrap();
        assert!((l.x - 0.15).abs() < 1e-15);
        assert_eq!(l.s_max, Some(200.0));
    }
}

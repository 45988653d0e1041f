//! DC and AC power flow.
//!
//! Both solvers return a [`FlowSolution`] in MW/MVAr with angles in radians.
//! Branch arrays are indexed like `net.branches` (out-of-service entries are
//! zero); bus arrays like `net.buses`; generator arrays like `net.generators`.

mod ac;
pub(crate) mod dc;
pub(crate) mod sparse;

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BusKind, Network};

pub use ac::{solve_ac, solve_ac_with, AcOptions};
pub use dc::{dc_flows_for_injections, solve_dc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Dc,
    Ac,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSolution {
    pub model: Model,
    /// Bus ids, aligning every per-bus array.
    pub bus_ids: Vec<usize>,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    /// Sending-end (from-bus) flows, MW and MVAr.
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    /// Receiving-end (to-bus) injections into the branch.
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    /// Branch losses attributed half to each endpoint, MW.
    pub p_loss_bus: Vec<f64>,
    /// Real power consumed by bus shunt conductance, MW.
    pub p_shunt_bus: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest real/reactive mismatch at the final iterate, pu.
    pub max_mismatch: f64,
}

impl FlowSolution {
    pub fn total_generation(&self) -> f64 {
        self.p_gen.iter().sum()
    }

    pub fn total_branch_loss(&self) -> f64 {
        self.p_flow.iter().zip(&self.p_to).map(|(f, t)| f + t).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Splits each branch's real loss (P_from + P_to) half to each endpoint.
pub fn aggregate_bus_losses(net: &Network, sol: &FlowSolution) -> Vec<f64> {
    let mut out = vec![0.0; net.buses.len()];
    for (k, br) in net.in_service_branches() {
        let loss = sol.p_flow[k] + sol.p_to[k];
        out[net.idx(br.from_bus)] += 0.5 * loss;
        out[net.idx(br.to_bus)] += 0.5 * loss;
    }
    out
}

/// Per-bus loss from the literal susceptance-denominator expression
/// `½ Σ_j (P_ij² + Q_ij²) / (b_ij V_i²)` with `b_ij = x/(r² + x²)`, in MW.
/// Diagnostic only; the solvers use [`aggregate_bus_losses`].
pub fn literal_bus_losses(net: &Network, sol: &FlowSolution) -> Vec<f64> {
    let mut out = vec![0.0; net.buses.len()];
    for (k, br) in net.in_service_branches() {
        let b = br.x / (br.r * br.r + br.x * br.x);
        let ends = [
            (net.idx(br.from_bus), sol.p_flow[k], sol.q_flow[k]),
            (net.idx(br.to_bus), sol.p_to[k], sol.q_to[k]),
        ];
        for (i, p, q) in ends {
            let (p, q) = (net.mw_to_pu(p), net.mw_to_pu(q));
            let v = sol.v[i];
            out[i] += net.pu_to_mw(0.5 * (p * p + q * q) / (b * v * v));
        }
    }
    out
}

/// Bus indices not reachable from the slack over in-service branches,
/// ignoring isolated (type 4) buses.
pub fn unreachable_buses(net: &Network) -> Vec<usize> {
    let reach = reachable_from(net, net.slack_idx());
    (0..net.buses.len())
        .filter(|&i| !reach[i] && net.buses[i].kind != BusKind::Isolated)
        .collect()
}

pub(crate) fn reachable_from(net: &Network, start: usize) -> Vec<bool> {
    let n = net.buses.len();
    let mut adj = vec![Vec::new(); n];
    for (_, br) in net.in_service_branches() {
        let (f, t) = (net.idx(br.from_bus), net.idx(br.to_bus));
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

pub(crate) fn check_connected(net: &Network) -> Result<()> {
    let lost = unreachable_buses(net);
    if lost.is_empty() {
        Ok(())
    } else {
        Err(Error::Islanded {
            buses: lost.iter().map(|&i| net.buses[i].id).collect(),
        })
    }
}

/// Shares `total` among `weights` proportionally, equally if they sum to 0.
pub(crate) fn share(total: f64, weights: &[f64]) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        weights.iter().map(|w| total * w / sum).collect()
    } else {
        vec![total / weights.len() as f64; weights.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testnets::*;
    use crate::grid::{Branch, Network};

    #[test]
    fn dc_losses_are_zero() {
        let net = triangle(0.1, 100.0);
        let sol = solve_dc(&net).unwrap();
        assert!(aggregate_bus_losses(&net, &sol).iter().all(|&l| l == 0.0));
    }

    #[test]
    fn single_lossy_branch_splits_half_each() {
        let mut net = two_bus(0.1, 100.0);
        net.branches[0].r = 0.02;
        let net = net.with_branches(net.branches.clone()).unwrap();
        let sol = solve_ac(&net).unwrap();
        let loss = sol.total_branch_loss();
        assert!(loss > 0.0);
        let per_bus = aggregate_bus_losses(&net, &sol);
        assert!((per_bus[0] - loss / 2.0).abs() < 1e-12);
        assert!((per_bus[1] - loss / 2.0).abs() < 1e-12);
    }

    #[test]
    fn islanded_bus_is_named() {
        let mut net = triangle(0.1, 100.0);
        net.buses.push(bus(9, BusKind::Pq, 0.0));
        net.branches.push(Branch::line(9, 3, 0.0, 0.1, 0.0, None));
        net.branches.last_mut().unwrap().in_service = false;
        let net = Network::new("t", 100.0, net.buses.clone(), net.branches.clone(), net.generators.clone()).unwrap();
        match solve_dc(&net) {
            Err(Error::Islanded { buses }) => assert_eq!(buses, vec![9]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn share_is_proportional_or_equal() {
        assert_eq!(share(6.0, &[1.0, 2.0]), vec![2.0, 4.0]);
        assert_eq!(share(6.0, &[0.0, 0.0]), vec![3.0, 3.0]);
    }
}

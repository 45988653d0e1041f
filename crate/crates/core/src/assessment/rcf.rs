//! Entropy-based nodal robustness against cascading failures.

use crate::error::{Error, Result};
use crate::grid::Network;
use crate::powerflow::FlowSolution;

/// Per-bus terms of the index.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTerm {
    pub bus: usize,
    /// Total real power sent out over the bus's out-going lines, MW.
    pub outflow: f64,
    pub entropy: f64,
}

/// Out-going real flows at each bus: (branch index, MW) for every in-service
/// branch whose terminal power at that bus leaves the bus.
fn outgoing(net: &Network, sol: &FlowSolution) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![Vec::new(); net.buses.len()];
    for (k, br) in net.in_service_branches() {
        let ends = [(br.from_bus, sol.p_flow[k]), (br.to_bus, sol.p_to[k])];
        for (bus, p) in ends {
            if p > 0.0 {
                out[net.bus_idx(bus).expect("validated bus")].push((k, p));
            }
        }
    }
    out
}

/// Node terms in bus order. A line that carries out-going flow must have a
/// positive rating.
pub fn r_cf_terms(net: &Network, sol: &FlowSolution) -> Result<Vec<NodeTerm>> {
    if sol.p_flow.len() != net.branches.len() {
        return Err(Error::Invalid("flow solution does not match the network".into()));
    }
    let mut terms = Vec::with_capacity(net.buses.len());
    for (i, lines) in outgoing(net, sol).into_iter().enumerate() {
        let outflow: f64 = lines.iter().map(|(_, p)| p).sum();
        let mut entropy = 0.0;
        for &(k, p) in &lines {
            let cap = match net.branches[k].s_max {
                Some(c) if c > 0.0 => c,
                _ => return Err(Error::ZeroCapacity(k + 1)),
            };
            let share = p / outflow;
            let weight = cap / p;
            entropy -= weight * share * share.log10();
        }
        terms.push(NodeTerm {
            bus: net.buses[i].id,
            outflow,
            entropy,
        });
    }
    Ok(terms)
}

/// Σ_i R_n,i · δ_i with δ_i the bus's share of all distributed power.
pub fn r_cf(net: &Network, sol: &FlowSolution) -> Result<f64> {
    let terms = r_cf_terms(net, sol)?;
    let total: f64 = terms.iter().map(|t| t.outflow).sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    Ok(terms.iter().map(|t| t.entropy * t.outflow / total).sum())
}

use super::sparse::SparseLu;
use super::{check_connected, share, FlowSolution, Model};
use crate::error::{Error, Result};
use crate::grid::{BusKind, Network};

/// Row of each bus in the reduced (slack and isolated buses removed) system.
pub(crate) struct ReducedIndex {
    pub row: Vec<Option<usize>>,
    pub n: usize,
}

impl ReducedIndex {
    pub fn new(net: &Network) -> Self {
        let slack = net.slack_idx();
        let mut n = 0;
        let row = net
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if i == slack || b.kind == BusKind::Isolated {
                    None
                } else {
                    n += 1;
                    Some(n - 1)
                }
            })
            .collect();
        ReducedIndex { row, n }
    }
}

/// Triplets of the reduced susceptance matrix for `(from_idx, to_idx, b)` edges.
pub(crate) fn reduced_b(idx: &ReducedIndex, edges: impl Iterator<Item = (usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (f, t, b) in edges {
        match (idx.row[f], idx.row[t]) {
            (Some(rf), Some(rt)) => {
                out.extend([(rf, rf, b), (rt, rt, b), (rf, rt, -b), (rt, rf, -b)]);
            }
            (Some(rf), None) => out.push((rf, rf, b)),
            (None, Some(rt)) => out.push((rt, rt, b)),
            (None, None) => {}
        }
    }
    out
}

/// Full-length angle vector from a net-injection vector (pu). The slack
/// entry of `inj` is ignored.
pub(crate) fn angles(net: &Network, idx: &ReducedIndex, lu: &SparseLu, inj: &[f64]) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; idx.n];
    for (i, r) in idx.row.iter().enumerate() {
        if let Some(r) = r {
            rhs[*r] = inj[i];
        }
    }
    let x = if idx.n > 0 { lu.solve(&rhs)? } else { Vec::new() };
    Ok((0..net.buses.len()).map(|i| idx.row[i].map_or(0.0, |r| x[r])).collect())
}

fn edges(net: &Network) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    net.in_service_branches()
        .map(|(_, br)| (net.idx(br.from_bus), net.idx(br.to_bus), br.dc_susceptance()))
}

fn factor(net: &Network, idx: &ReducedIndex) -> Result<SparseLu> {
    SparseLu::factor(idx.n, &reduced_b(idx, edges(net)), "DC susceptance matrix")
}

/// Branch flows (pu) for an arbitrary per-bus injection vector (pu), with
/// the slack balancing. Phase shifters are ignored.
pub fn dc_flows_for_injections(net: &Network, inj: &[f64]) -> Result<Vec<f64>> {
    check_connected(net)?;
    let idx = ReducedIndex::new(net);
    let lu = factor(net, &idx)?;
    let theta = angles(net, &idx, &lu, inj)?;
    Ok(net
        .branches
        .iter()
        .map(|br| {
            if br.in_service {
                br.dc_susceptance() * (theta[net.idx(br.from_bus)] - theta[net.idx(br.to_bus)])
            } else {
                0.0
            }
        })
        .collect())
}

/// DC power flow with the generator setpoints in `net`; the slack bus
/// generators absorb the imbalance in proportion to their `p_max`.
pub fn solve_dc(net: &Network) -> Result<FlowSolution> {
    check_connected(net)?;
    let n = net.buses.len();
    let slack = net.slack_idx();
    let idx = ReducedIndex::new(net);
    let lu = factor(net, &idx)?;

    let mut inj = vec![0.0; n];
    for (i, b) in net.buses.iter().enumerate() {
        inj[i] -= net.mw_to_pu(b.p_load + b.g_shunt);
    }
    for (_, g) in net.in_service_generators() {
        let i = net.idx(g.bus);
        if i != slack {
            inj[i] += net.mw_to_pu(g.p_set);
        }
    }
    // Phase shifters act as fixed injections b·φ at each end.
    for (_, br) in net.in_service_branches() {
        if br.shift != 0.0 {
            let s = br.dc_susceptance() * br.shift;
            inj[net.idx(br.from_bus)] += s;
            inj[net.idx(br.to_bus)] -= s;
        }
    }
    let theta = angles(net, &idx, &lu, &inj)?;

    let mut p_flow = vec![0.0; net.branches.len()];
    for (k, br) in net.in_service_branches() {
        let (f, t) = (net.idx(br.from_bus), net.idx(br.to_bus));
        p_flow[k] = net.pu_to_mw(br.dc_susceptance() * (theta[f] - theta[t] - br.shift));
    }
    let p_to: Vec<f64> = p_flow.iter().map(|p| -p).collect();

    let mut slack_out = 0.0;
    for (k, br) in net.in_service_branches() {
        if net.idx(br.from_bus) == slack {
            slack_out += p_flow[k];
        } else if net.idx(br.to_bus) == slack {
            slack_out += p_to[k];
        }
    }
    let sb = &net.buses[slack];
    let slack_total = slack_out + sb.p_load + sb.g_shunt;

    let mut p_gen = vec![0.0; net.generators.len()];
    let mut slack_gens = Vec::new();
    for (k, g) in net.in_service_generators() {
        let i = net.idx(g.bus);
        if net.buses[i].kind == BusKind::Isolated {
            continue;
        }
        if i == slack {
            slack_gens.push(k);
        } else {
            p_gen[k] = g.p_set;
        }
    }
    if slack_gens.is_empty() {
        if slack_total.abs() > 1e-9 {
            return Err(Error::Invalid("slack bus has no in-service generator".into()));
        }
    } else {
        let weights: Vec<f64> = slack_gens.iter().map(|&k| net.generators[k].p_max.max(0.0)).collect();
        for (&k, p) in slack_gens.iter().zip(share(slack_total, &weights)) {
            p_gen[k] = p;
        }
    }

    Ok(FlowSolution {
        model: Model::Dc,
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        theta,
        v: vec![1.0; n],
        q_flow: vec![0.0; net.branches.len()],
        q_to: vec![0.0; net.branches.len()],
        p_flow,
        p_to,
        p_gen,
        q_gen: vec![0.0; net.generators.len()],
        p_loss_bus: vec![0.0; n],
        p_shunt_bus: net.buses.iter().map(|b| b.g_shunt).collect(),
        converged: true,
        iterations: 0,
        max_mismatch: 0.0,
    })
}

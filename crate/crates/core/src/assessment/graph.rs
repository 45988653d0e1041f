//! Structural metrics of the undirected bus graph and branch flow statistics.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use super::rcf::r_cf;
use crate::error::Result;
use crate::grid::Network;
use crate::powerflow::FlowSolution;

/// Undirected simple graph: parallel circuits collapse into one edge.
#[derive(Debug, Clone)]
pub struct BusGraph {
    pub adj: Vec<Vec<usize>>,
}

impl BusGraph {
    pub fn from_network(net: &Network) -> Self {
        let n = net.buses.len();
        let mut sets = vec![BTreeSet::new(); n];
        for (_, br) in net.in_service_branches() {
            let (f, t) = (net.bus_idx(br.from_bus).unwrap(), net.bus_idx(br.to_bus).unwrap());
            sets[f].insert(t);
            sets[t].insert(f);
        }
        BusGraph {
            adj: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        BusGraph {
            adj: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn average_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.len() as f64
    }

    /// Mean local clustering coefficient; nodes of degree < 2 count as 0.
    pub fn average_clustering(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for nbrs in &self.adj {
            let d = nbrs.len();
            if d < 2 {
                continue;
            }
            let mut links = 0;
            for (a, &u) in nbrs.iter().enumerate() {
                for &v in &nbrs[a + 1..] {
                    if self.adj[u].binary_search(&v).is_ok() {
                        links += 1;
                    }
                }
            }
            total += 2.0 * links as f64 / (d * (d - 1)) as f64;
        }
        total / self.len() as f64
    }

    fn bfs(&self, s: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[s] = Some(0);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components, largest first (ties by lowest member).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut comps = Vec::new();
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            let comp: Vec<usize> = self
                .bfs(s)
                .iter()
                .enumerate()
                .filter_map(|(i, d)| d.map(|_| i))
                .collect();
            for &i in &comp {
                seen[i] = true;
            }
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    /// Mean hop distance over unordered pairs of `nodes` (all assumed mutually
    /// reachable).
    pub fn average_shortest_path(&self, nodes: &[usize]) -> f64 {
        if nodes.len() < 2 {
            return 0.0;
        }
        let mut sum = 0usize;
        for (a, &s) in nodes.iter().enumerate() {
            let dist = self.bfs(s);
            for &t in &nodes[a + 1..] {
                sum += dist[t].unwrap_or(0);
            }
        }
        let pairs = nodes.len() * (nodes.len() - 1) / 2;
        sum as f64 / pairs as f64
    }

    /// Node betweenness (Brandes), normalized by (V−1)(V−2)/2.
    pub fn betweenness(&self) -> Vec<f64> {
        let n = self.len();
        let mut cb = vec![0.0; n];
        for s in 0..n {
            let mut stack = Vec::with_capacity(n);
            let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut sigma = vec![0.0f64; n];
            let mut dist = vec![-1i64; n];
            sigma[s] = 1.0;
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                stack.push(v);
                for &w in &self.adj[v] {
                    if dist[w] < 0 {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        preds[w].push(v);
                    }
                }
            }
            let mut delta = vec![0.0; n];
            while let Some(w) = stack.pop() {
                for &v in &preds[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    cb[w] += delta[w];
                }
            }
        }
        // Every unordered pair was counted from both ends.
        let scale = if n > 2 { 1.0 / ((n - 1) * (n - 2)) as f64 } else { 0.0 };
        cb.iter().map(|c| c * scale).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowStats {
    /// Mean and population std of |P_from| over in-service branches, MW.
    pub mean_pf: f64,
    pub std_pf: f64,
    /// Mean and population std of max(|S_from|, |S_to|) / s_max in percent,
    /// over rated in-service branches.
    pub mean_pct: f64,
    pub std_pct: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn flow_stats(net: &Network, sol: &FlowSolution) -> FlowStats {
    let mut pf = Vec::new();
    let mut pct = Vec::new();
    for (k, br) in net.in_service_branches() {
        pf.push(sol.p_flow[k].abs());
        if let Some(cap) = br.s_max.filter(|c| *c > 0.0) {
            let s_from = sol.p_flow[k].hypot(sol.q_flow[k]);
            let s_to = sol.p_to[k].hypot(sol.q_to[k]);
            pct.push(100.0 * s_from.max(s_to) / cap);
        }
    }
    let (mean_pf, std_pf) = mean_std(&pf);
    let (mean_pct, std_pct) = mean_std(&pct);
    FlowStats {
        mean_pf,
        std_pf,
        mean_pct,
        std_pct,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkProperties {
    /// `None` when a line carrying flow has no rating.
    pub r_cf: Option<f64>,
    pub avg_degree: f64,
    pub clustering: f64,
    pub betweenness: f64,
    pub shortest_path: f64,
    /// Set when the graph is disconnected; the shortest path then covers
    /// the largest component only.
    pub disconnected: bool,
    #[serde(flatten)]
    pub flows: FlowStats,
}

pub fn graph_properties(net: &Network, sol: &FlowSolution) -> Result<NetworkProperties> {
    let g = BusGraph::from_network(net);
    let comps = g.components();
    let disconnected = comps.len() > 1;
    if disconnected {
        log::warn!(
            "{}: graph has {} components; shortest paths use the largest ({} buses)",
            net.name,
            comps.len(),
            comps[0].len()
        );
    }
    let bc = g.betweenness();
    let r = match r_cf(net, sol) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("{}: R_CF unavailable: {e}", net.name);
            None
        }
    };
    Ok(NetworkProperties {
        r_cf: r,
        avg_degree: g.average_degree(),
        clustering: g.average_clustering(),
        betweenness: if bc.is_empty() { 0.0 } else { bc.iter().sum::<f64>() / bc.len() as f64 },
        shortest_path: comps.first().map_or(0.0, |c| g.average_shortest_path(c)),
        disconnected,
        flows: flow_stats(net, sol),
    })
}

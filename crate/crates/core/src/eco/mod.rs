//! Ecological flow matrix and the robustness metrics computed from it.
//!
//! Actor layout: `[import, generators…, buses…, export, dissipation]`, where
//! only in-service generators are actors. Entries are nonnegative MW.

mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{apply_decisions, CandidateSet, Network};
use crate::powerflow::FlowSolution;

pub use metrics::{
    eco_gradient, eco_metrics_exact, eco_metrics_relaxed, exact_outer, relaxed_outer, series_ln, EcoMetrics,
};
pub(crate) use metrics::{evaluate_flat, LogKind};

#[derive(Debug, Clone, PartialEq)]
pub struct EcoFlowMatrix {
    labels: Vec<String>,
    n_generators: usize,
    n_buses: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl EcoFlowMatrix {
    /// Empty matrix for `n_generators` generator actors and `n_buses` bus actors.
    pub fn new(n_generators: usize, n_buses: usize) -> Self {
        let mut labels = vec!["import".to_string()];
        labels.extend((0..n_generators).map(|k| format!("G{}", k + 1)));
        labels.extend((0..n_buses).map(|i| format!("B{}", i + 1)));
        labels.push("export".into());
        labels.push("dissipation".into());
        EcoFlowMatrix {
            labels,
            n_generators,
            n_buses,
            entries: BTreeMap::new(),
        }
    }

    /// Square matrix with generic labels, mostly for tests and audits.
    /// Every entry must be finite and nonnegative.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = EcoFlowMatrix {
            labels: (0..n).map(|i| format!("A{}", i + 1)).collect(),
            n_generators: 0,
            n_buses: n.saturating_sub(3),
            entries: BTreeMap::new(),
        };
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Invalid("flow matrix is not square".into()));
            }
            for (j, &v) in r.iter().enumerate() {
                m.add(i, j, v)?;
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn import(&self) -> usize {
        0
    }

    pub fn generator(&self, k: usize) -> usize {
        1 + k
    }

    pub fn bus(&self, i: usize) -> usize {
        1 + self.n_generators + i
    }

    pub fn export(&self) -> usize {
        1 + self.n_generators + self.n_buses
    }

    pub fn dissipation(&self) -> usize {
        2 + self.n_generators + self.n_buses
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Adds `v` to entry (i, j). Zero additions are ignored.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Invalid(format!("flow matrix entry ({i}, {j}) = {v}")));
        }
        if i >= self.size() || j >= self.size() {
            return Err(Error::Invalid(format!("flow matrix index ({i}, {j}) out of range")));
        }
        if v > 0.0 {
            *self.entries.entry((i, j)).or_insert(0.0) += v;
        }
        Ok(())
    }

    /// Positive entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        for (i, _, v) in self.entries() {
            out[i] += v;
        }
        out
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        for (_, j, v) in self.entries() {
            out[j] += v;
        }
        out
    }

    /// Scaled copy; used by the scale-invariance checks.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in out.entries.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        let mut out = vec![vec![0.0; n]; n];
        for (i, j, v) in self.entries() {
            out[i][j] = v;
        }
        out
    }

    /// Dense CSV with a header row and a leading label column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actor");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (i, row) in self.to_dense().iter().enumerate() {
            out.push_str(&self.labels[i]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    fn relabel(&mut self, net: &Network, gen_ids: &[usize]) {
        for (k, &g) in gen_ids.iter().enumerate() {
            self.labels[1 + k] = format!("G{}@{}", g + 1, net.generators[g].bus);
        }
        for (i, b) in net.buses.iter().enumerate() {
            self.labels[1 + self.n_generators + i] = format!("B{}", b.id);
        }
    }
}

/// Builds the flow matrix from a solved network.
///
/// When `cands` is given, `sol` must have been solved on
/// `apply_decisions(net, cands)`; the built candidates then appear as the
/// trailing branches. Bus-to-bus entries use the midpoint flow
/// `(P_from − P_to)/2` oriented by its sign, and each branch's loss is
/// attributed half to each endpoint's dissipation, which keeps every bus
/// actor balanced.
pub fn build_efm(net: &Network, sol: &FlowSolution, cands: Option<&CandidateSet>) -> Result<EcoFlowMatrix> {
    let owned;
    let net = match cands {
        Some(c) => {
            owned = apply_decisions(net, c)?;
            &owned
        }
        None => net,
    };
    if !sol.converged {
        return Err(Error::Unsolved);
    }
    if sol.p_flow.len() != net.branches.len() || sol.p_gen.len() != net.generators.len() {
        return Err(Error::Invalid("flow solution does not match the network".into()));
    }
    if let Some(b) = net.buses.iter().find(|b| b.p_load < 0.0) {
        return Err(Error::NegativeLoad(b.p_load, b.id));
    }

    let gen_ids: Vec<usize> = net.in_service_generators().map(|(k, _)| k).collect();
    let mut efm = EcoFlowMatrix::new(gen_ids.len(), net.buses.len());
    efm.relabel(net, &gen_ids);

    for (a, &k) in gen_ids.iter().enumerate() {
        let p = sol.p_gen[k];
        let (g, b) = (efm.generator(a), efm.bus(net.idx(net.generators[k].bus)));
        if p >= 0.0 {
            efm.add(efm.import(), g, p)?;
            efm.add(g, b, p)?;
        } else {
            efm.add(b, g, -p)?;
            efm.add(g, efm.export(), -p)?;
        }
    }
    for (k, br) in net.in_service_branches() {
        let mid = 0.5 * (sol.p_flow[k] - sol.p_to[k]);
        let (f, t) = (efm.bus(net.idx(br.from_bus)), efm.bus(net.idx(br.to_bus)));
        if mid >= 0.0 {
            efm.add(f, t, mid)?;
        } else {
            efm.add(t, f, -mid)?;
        }
    }
    for (i, b) in net.buses.iter().enumerate() {
        let a = efm.bus(i);
        efm.add(a, efm.export(), b.p_load)?;
        let d = sol.p_loss_bus[i] + sol.p_shunt_bus[i];
        if d >= 0.0 {
            efm.add(a, efm.dissipation(), d)?;
        } else {
            efm.add(efm.import(), a, -d)?;
        }
    }
    Ok(efm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testnets::*;
    use crate::grid::{BusKind, Generator};
    use crate::powerflow::{solve_ac, solve_dc};

    #[test]
    fn single_chain_has_three_entries() {
        let net = Network::new(
            "chain",
            100.0,
            vec![bus(1, BusKind::Slack, 100.0)],
            vec![],
            vec![Generator::new(1, 100.0, 0.0, 200.0)],
        )
        .unwrap();
        let efm = build_efm(&net, &solve_dc(&net).unwrap(), None).unwrap();
        // one generator actor and one bus actor plus the three environment slots
        assert_eq!(efm.size(), 5);
        assert_eq!(efm.nnz(), 3);
        assert!(efm.entries().all(|(_, _, v)| (v - 100.0).abs() < 1e-12));
    }

    #[test]
    fn two_bus_orientation_follows_flow() {
        let net = two_bus(0.1, 100.0);
        let efm = build_efm(&net, &solve_dc(&net).unwrap(), None).unwrap();
        assert!((efm.get(efm.bus(0), efm.bus(1)) - 100.0).abs() < 1e-10);
        assert_eq!(efm.get(efm.bus(1), efm.bus(0)), 0.0);
    }

    #[test]
    fn ac_actors_balance() {
        let mut net = triangle(0.1, 150.0);
        for br in &mut net.branches {
            br.r = 0.02;
        }
        let net = net.with_branches(net.branches.clone()).unwrap();
        let efm = build_efm(&net, &solve_ac(&net).unwrap(), None).unwrap();
        let (r, c) = (efm.row_sums(), efm.col_sums());
        for a in 1..efm.export() {
            assert!((r[a] - c[a]).abs() < 1e-6, "actor {a}: {} vs {}", r[a], c[a]);
        }
        assert!(efm.get(efm.bus(0), efm.dissipation()) > 0.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let net = two_bus(0.1, 100.0);
        let efm = build_efm(&net, &solve_dc(&net).unwrap(), None).unwrap();
        let csv = efm.to_csv();
        assert_eq!(csv.lines().count(), efm.size() + 1);
        assert!(csv.starts_with("actor,import,G1@1,B1,B2,export,dissipation"));
    }
}

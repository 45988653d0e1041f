//! Grid data model: buses, branches, generators and candidate branches.
//!
//! Powers are stored in MW/MVAr, impedances in per unit on the system base,
//! and angles in radians. Case files use degrees; conversion happens only in
//! [`matpower`].

mod candidate_file;
mod matpower;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};

pub use candidate_file::{parse_candidates, write_candidates};
pub use matpower::{parse_case, write_case};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
    /// MATPOWER type 4; excluded from every solve.
    Isolated,
}

impl BusKind {
    pub(crate) fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            1 => Some(BusKind::Pq),
            2 => Some(BusKind::Pv),
            3 => Some(BusKind::Slack),
            4 => Some(BusKind::Isolated),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
            BusKind::Isolated => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// MW
    pub p_load: f64,
    /// MVAr
    pub q_load: f64,
    /// Shunt conductance, MW consumed at 1.0 pu voltage.
    pub g_shunt: f64,
    /// Shunt susceptance, MVAr injected at 1.0 pu voltage.
    pub b_shunt: f64,
    pub area: f64,
    /// Voltage magnitude stored in the case (pu).
    pub vm: f64,
    /// Voltage angle stored in the case (rad).
    pub va: f64,
    pub voltage_kv: f64,
    pub zone: f64,
    pub v_max: f64,
    pub v_min: f64,
    /// Trailing columns (OPF results and the like), preserved verbatim.
    pub extra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    /// Long-term rating in MVA; `None` when the source has 0 (unlimited).
    pub s_max: Option<f64>,
    pub rate_b: f64,
    pub rate_c: f64,
    /// Raw ratio column; 0 means a line (effective ratio 1).
    pub tap_ratio: f64,
    /// Phase shift (rad).
    pub shift: f64,
    pub in_service: bool,
    /// Angle difference limits (rad).
    pub ang_min: f64,
    pub ang_max: f64,
    pub extra: Vec<f64>,
}

impl Branch {
    /// A plain in-service line with no tap, shift or rate B/C.
    pub fn line(from_bus: usize, to_bus: usize, r: f64, x: f64, b: f64, s_max: Option<f64>) -> Self {
        Branch {
            from_bus,
            to_bus,
            r,
            x,
            b_charging: b,
            s_max,
            rate_b: 0.0,
            rate_c: 0.0,
            tap_ratio: 0.0,
            shift: 0.0,
            in_service: true,
            ang_min: -std::f64::consts::TAU,
            ang_max: std::f64::consts::TAU,
            extra: Vec::new(),
        }
    }

    pub fn tap(&self) -> f64 {
        if self.tap_ratio == 0.0 {
            1.0
        } else {
            self.tap_ratio
        }
    }

    /// DC series susceptance 1/(x·tap), per unit.
    pub fn dc_susceptance(&self) -> f64 {
        1.0 / (self.x * self.tap())
    }

    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    /// Real power setpoint (MW).
    pub p_set: f64,
    /// Reactive setpoint (MVAr).
    pub q_set: f64,
    pub q_max: f64,
    pub q_min: f64,
    /// Voltage setpoint (pu).
    pub v_set: f64,
    pub m_base: f64,
    pub in_service: bool,
    pub p_max: f64,
    pub p_min: f64,
    pub extra: Vec<f64>,
}

impl Generator {
    pub fn new(bus: usize, p_set: f64, p_min: f64, p_max: f64) -> Self {
        Generator {
            bus,
            p_set,
            q_set: 0.0,
            q_max: 9999.0,
            q_min: -9999.0,
            v_set: 1.0,
            m_base: 100.0,
            in_service: true,
            p_max,
            p_min,
            extra: Vec::new(),
        }
    }
}

/// A transmission network on a common MVA base.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    bus_index: HashMap<usize, usize>,
}

impl Network {
    /// Builds a network and checks its invariants: unique bus ids, exactly one
    /// slack bus, no dangling references, positive base, sane bounds.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::Invalid(format!("base_mva must be positive, got {base_mva}")));
        }
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if bus_index.insert(b.id, i).is_some() {
                return Err(Error::Invalid(format!("duplicate bus id {}", b.id)));
            }
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(Error::Invalid(format!(
                    "bus {} voltage band [{}, {}] is invalid",
                    b.id, b.v_min, b.v_max
                )));
            }
        }
        let slacks = buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        match slacks {
            0 => return Err(Error::MissingSlack),
            1 => {}
            n => return Err(Error::MultipleSlack(n)),
        }
        for (k, br) in branches.iter().enumerate() {
            for bus in [br.from_bus, br.to_bus] {
                if !bus_index.contains_key(&bus) {
                    return Err(Error::DanglingBus {
                        element: format!("branch {}", k + 1),
                        bus,
                    });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Invalid(format!("branch {} is a self loop", k + 1)));
            }
            if br.x == 0.0 {
                return Err(Error::Invalid(format!("branch {} has zero reactance", k + 1)));
            }
        }
        for (k, g) in generators.iter().enumerate() {
            if !bus_index.contains_key(&g.bus) {
                return Err(Error::DanglingBus {
                    element: format!("generator {}", k + 1),
                    bus: g.bus,
                });
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(Error::Invalid(format!("generator {} has inverted limits", k + 1)));
            }
        }
        Ok(Network {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
            bus_index,
        })
    }

    pub fn bus_idx(&self, id: usize) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    /// Index of `id`; panics on an unknown id, which `new` rules out for every
    /// stored reference.
    pub(crate) fn idx(&self, id: usize) -> usize {
        self.bus_index[&id]
    }

    pub fn slack_idx(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    pub fn mw_to_pu(&self, mw: f64) -> f64 {
        mw / self.base_mva
    }

    pub fn pu_to_mw(&self, pu: f64) -> f64 {
        pu * self.base_mva
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches.iter().enumerate().filter(|(_, b)| b.in_service)
    }

    pub fn in_service_generators(&self) -> impl Iterator<Item = (usize, &Generator)> {
        self.generators.iter().enumerate().filter(|(_, g)| g.in_service)
    }

    /// True when an in-service branch already joins `a` and `b`.
    pub fn has_circuit(&self, a: usize, b: usize) -> bool {
        self.in_service_branches().any(|(_, br)| br.connects(a, b))
    }

    /// Rebuilds with modified parts, re-running validation.
    pub fn with_parts(
        &self,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        Network::new(self.name.clone(), self.base_mva, buses, branches, generators)
    }

    pub fn with_branches(&self, branches: Vec<Branch>) -> Result<Self> {
        self.with_parts(self.buses.clone(), branches, self.generators.clone())
    }

    pub fn with_generators(&self, generators: Vec<Generator>) -> Result<Self> {
        self.with_parts(self.buses.clone(), self.branches.clone(), generators)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Generated { seed: u64 },
    Loaded { path: PathBuf },
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateBranch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub s_max: Option<f64>,
    pub tap_ratio: f64,
    /// Allowed to duplicate an existing circuit.
    pub parallel: bool,
    /// Build decision; false until an optimizer sets it.
    pub decision: bool,
}

impl CandidateBranch {
    pub fn to_branch(&self) -> Branch {
        let mut br = Branch::line(self.from_bus, self.to_bus, self.r, self.x, self.b_charging, self.s_max);
        br.tap_ratio = self.tap_ratio;
        br
    }

    pub fn dc_susceptance(&self) -> f64 {
        self.to_branch().dc_susceptance()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    pub entries: Vec<CandidateBranch>,
    pub provenance: Provenance,
}

impl CandidateSet {
    pub fn empty() -> Self {
        CandidateSet {
            entries: Vec::new(),
            provenance: Provenance::Manual,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy with decisions replaced.
    pub fn with_decisions(&self, decisions: &[bool]) -> Self {
        assert_eq!(decisions.len(), self.entries.len(), "decision vector length");
        let mut out = self.clone();
        for (c, &d) in out.entries.iter_mut().zip(decisions) {
            c.decision = d;
        }
        out
    }

    pub fn decisions(&self) -> Vec<bool> {
        self.entries.iter().map(|c| c.decision).collect()
    }

    /// Checks every candidate against `net`: known endpoints, nonzero
    /// reactance, and no undeclared duplicate of an in-service circuit.
    pub fn validate(&self, net: &Network) -> Result<()> {
        for c in &self.entries {
            for bus in [c.from_bus, c.to_bus] {
                if net.bus_idx(bus).is_none() {
                    return Err(Error::DanglingBus {
                        element: format!("candidate {}", c.id),
                        bus,
                    });
                }
            }
            if c.from_bus == c.to_bus || c.x == 0.0 {
                return Err(Error::Invalid(format!("candidate {} is degenerate", c.id)));
            }
            if !c.parallel && net.has_circuit(c.from_bus, c.to_bus) {
                return Err(Error::DuplicateCircuit {
                    id: c.id,
                    from: c.from_bus,
                    to: c.to_bus,
                });
            }
        }
        Ok(())
    }
}

/// Returns a new network with one in-service branch appended per candidate
/// whose decision is set. Inputs are not modified.
pub fn apply_decisions(net: &Network, cands: &CandidateSet) -> Result<Network> {
    let mut branches = net.branches.clone();
    for c in cands.entries.iter().filter(|c| c.decision) {
        if !c.parallel && net.has_circuit(c.from_bus, c.to_bus) {
            return Err(Error::DuplicateCircuit {
                id: c.id,
                from: c.from_bus,
                to: c.to_bus,
            });
        }
        branches.push(c.to_branch());
    }
    net.with_branches(branches)
}

//! N-x contingency screening with AC power flow and no remedial action.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use super::graph::BusGraph;
use crate::error::{Error, Result};
use crate::grid::{BusKind, Network};
use crate::powerflow::{solve_ac, solve_ac_with, AcOptions, FlowSolution};

const CHUNK: usize = 256;

/// One outaged element. Branches are 0-based positions in the branch table
/// (displayed 1-based); buses are bus ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "String")]
pub enum Element {
    Branch(usize),
    Bus(usize),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Branch(k) => write!(f, "branch:{}", k + 1),
            Element::Bus(id) => write!(f, "bus:{id}"),
        }
    }
}

impl From<Element> for String {
    fn from(e: Element) -> String {
        e.to_string()
    }
}

impl FromStr for Element {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("bad outage element '{s}', expected branch:N or bus:ID"));
        let (kind, num) = s.trim().split_once(':').ok_or_else(bad)?;
        let num: usize = num.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "branch" if num > 0 => Ok(Element::Branch(num - 1)),
            "bus" => Ok(Element::Bus(num)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Branch,
    /// Approximated as a bus outage with everything attached to the bus.
    Substation,
    List,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencySpec {
    pub depth: usize,
    pub kind: ElementKind,
    /// Outage sets for [`ElementKind::List`].
    pub sets: Vec<Vec<Element>>,
    /// Relative allowance above s_max before a branch counts as overloaded.
    pub flow_tol: f64,
    /// Absolute allowance (pu) outside [v_min, v_max].
    pub voltage_tol: f64,
}

impl ContingencySpec {
    pub fn new(depth: usize, kind: ElementKind) -> Self {
        ContingencySpec {
            depth,
            kind,
            sets: Vec::new(),
            flow_tol: 0.0,
            voltage_tol: 0.0,
        }
    }

    pub fn from_list(sets: Vec<Vec<Element>>) -> Self {
        ContingencySpec {
            sets,
            ..ContingencySpec::new(1, ElementKind::List)
        }
    }
}

/// Parses an outage list: one set per line, elements separated by commas or
/// whitespace, `#` starts a comment.
pub fn parse_outage_list(text: &str) -> Result<Vec<Vec<Element>>> {
    let mut sets = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let set = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(Element::from_str)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
        sets.push(set);
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    FlowOverLimit,
    VoltageOutOfBand,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub element: Element,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub index: usize,
    pub outage: Vec<Element>,
    pub unsolved: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyReport {
    pub total_cases: usize,
    pub violations: usize,
    pub unsolved: usize,
    pub normalized_violations: f64,
    pub cases: Vec<CaseResult>,
}

impl ContingencyReport {
    pub fn from_cases(cases: Vec<CaseResult>) -> Self {
        let total_cases = cases.len();
        let violations = cases.iter().map(|c| c.violations.len()).sum();
        let unsolved = cases.iter().filter(|c| c.unsolved).count();
        ContingencyReport {
            total_cases,
            violations,
            unsolved,
            normalized_violations: if total_cases > 0 {
                violations as f64 / total_cases as f64
            } else {
                0.0
            },
            cases,
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["case", "outage", "unsolved", "violations", "detail"];

impl CaseResult {
    pub fn to_record(&self) -> [String; 5] {
        let kind = |k: ViolationKind| match k {
            ViolationKind::FlowOverLimit => "flow",
            ViolationKind::VoltageOutOfBand => "voltage",
        };
        [
            self.index.to_string(),
            self.outage.iter().join(" "),
            self.unsolved.to_string(),
            self.violations.len().to_string(),
            self.violations
                .iter()
                .map(|v| format!("{}@{}", kind(v.kind), v.element))
                .join(" "),
        ]
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| Error::Invalid(format!("bad contingency row {rec:?}: {what}"));
        if rec.len() != CSV_HEADER.len() {
            return Err(bad("wrong column count"));
        }
        let index = rec[0].parse().map_err(|_| bad("case"))?;
        let outage = rec[1].split_whitespace().map(Element::from_str).collect::<Result<_>>()?;
        let unsolved = rec[2].parse().map_err(|_| bad("unsolved"))?;
        let violations: Vec<Violation> = rec[4]
            .split_whitespace()
            .map(|t| {
                let (k, e) = t.split_once('@').ok_or_else(|| bad("detail"))?;
                let kind = match k {
                    "flow" => ViolationKind::FlowOverLimit,
                    "voltage" => ViolationKind::VoltageOutOfBand,
                    _ => return Err(bad("violation kind")),
                };
                Ok(Violation {
                    element: e.parse()?,
                    kind,
                })
            })
            .collect::<Result<_>>()?;
        if rec[3].parse::<usize>().ok() != Some(violations.len()) {
            return Err(bad("violation count"));
        }
        Ok(CaseResult {
            index,
            outage,
            unsolved,
            violations,
        })
    }
}

/// Elements an outage set is drawn from, for enumerated kinds.
pub fn contingency_elements(net: &Network, kind: ElementKind) -> Vec<Element> {
    match kind {
        ElementKind::Branch => net.in_service_branches().map(|(k, _)| Element::Branch(k)).collect(),
        ElementKind::Substation => net.buses.iter().map(|b| Element::Bus(b.id)).collect(),
        ElementKind::List => Vec::new(),
    }
}

/// Number of cases the spec produces.
pub fn case_count(net: &Network, spec: &ContingencySpec) -> usize {
    match spec.kind {
        ElementKind::List => spec.sets.len(),
        kind => binomial(contingency_elements(net, kind).len(), spec.depth),
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn validate(net: &Network, spec: &ContingencySpec) -> Result<()> {
    match spec.kind {
        ElementKind::List => {
            for set in &spec.sets {
                for e in set {
                    let ok = match *e {
                        Element::Branch(k) => net.branches.get(k).is_some_and(|b| b.in_service),
                        Element::Bus(id) => net.bus_idx(id).is_some(),
                    };
                    if !ok {
                        return Err(Error::Invalid(format!("outage list names unknown element {e}")));
                    }
                }
            }
        }
        _ => {
            if !(1..=3).contains(&spec.depth) {
                return Err(Error::Invalid(format!("contingency depth must be 1, 2 or 3, got {}", spec.depth)));
            }
        }
    }
    if !(spec.flow_tol >= 0.0 && spec.voltage_tol >= 0.0) {
        return Err(Error::Invalid("limit tolerances must be nonnegative".into()));
    }
    Ok(())
}

/// Post-outage network plus the original index of every surviving branch.
struct Outaged {
    net: Network,
    branch_origin: Vec<usize>,
}

fn apply_outage(net: &Network, outage: &[Element]) -> Option<Outaged> {
    let mut dead_bus: BTreeSet<usize> = BTreeSet::new();
    let mut dead_branch: BTreeSet<usize> = BTreeSet::new();
    for e in outage {
        match *e {
            Element::Branch(k) => {
                dead_branch.insert(k);
            }
            Element::Bus(id) => {
                dead_bus.insert(id);
            }
        }
    }
    let keep_branch = |k: usize, net: &Network, dead: &BTreeSet<usize>| {
        let br = &net.branches[k];
        br.in_service && !dead_branch.contains(&k) && !dead.contains(&br.from_bus) && !dead.contains(&br.to_bus)
    };

    // Islands without the slack: drop them when they carry no load.
    let mut buses: Vec<_> = net.buses.iter().filter(|b| !dead_bus.contains(&b.id)).cloned().collect();
    if buses.is_empty() {
        return None;
    }
    let slack_id = net.buses[net.slack_idx()].id;
    let slack_id = if dead_bus.contains(&slack_id) {
        let pmax = |id: usize| -> f64 {
            net.in_service_generators().filter(|(_, g)| g.bus == id).map(|(_, g)| g.p_max).sum()
        };
        let best = buses
            .iter()
            .filter(|b| b.kind == BusKind::Pv)
            .map(|b| (b.id, pmax(b.id)))
            .filter(|(_, p)| *p > 0.0)
            .fold(None::<(usize, f64)>, |acc, (id, p)| match acc {
                Some((_, bp)) if bp >= p => acc,
                _ => Some((id, p)),
            })?;
        for b in buses.iter_mut() {
            if b.id == best.0 {
                b.kind = BusKind::Slack;
            }
        }
        best.0
    } else {
        slack_id
    };

    let pos: std::collections::HashMap<usize, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let live: Vec<usize> = (0..net.branches.len()).filter(|&k| keep_branch(k, net, &dead_bus)).collect();
    let edges: Vec<(usize, usize)> = live
        .iter()
        .map(|&k| (pos[&net.branches[k].from_bus], pos[&net.branches[k].to_bus]))
        .collect();
    let graph = BusGraph::from_edges(buses.len(), &edges);
    let main = graph
        .components()
        .into_iter()
        .find(|c| c.contains(&pos[&slack_id]))
        .expect("slack is in some component");
    let main: BTreeSet<usize> = main.into_iter().collect();
    for (i, b) in buses.iter().enumerate() {
        if !main.contains(&i) && b.kind != BusKind::Isolated && (b.p_load != 0.0 || b.q_load != 0.0) {
            return None;
        }
    }
    let dropped: Vec<usize> = buses
        .iter()
        .enumerate()
        .filter(|(i, _)| !main.contains(i))
        .map(|(_, b)| b.id)
        .collect();
    dead_bus.extend(dropped);
    buses.retain(|b| !dead_bus.contains(&b.id));

    let branch_origin: Vec<usize> = live
        .into_iter()
        .filter(|&k| keep_branch(k, net, &dead_bus))
        .collect();
    let branches = branch_origin.iter().map(|&k| net.branches[k].clone()).collect();
    let generators = net
        .generators
        .iter()
        .filter(|g| !dead_bus.contains(&g.bus))
        .cloned()
        .collect();
    let net = net.with_parts(buses, branches, generators).ok()?;
    Some(Outaged { net, branch_origin })
}

fn violations(o: &Outaged, sol: &FlowSolution, spec: &ContingencySpec) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, br) in o.net.in_service_branches() {
        let Some(cap) = br.s_max.filter(|c| *c > 0.0) else { continue };
        let s = sol.p_flow[k].hypot(sol.q_flow[k]).max(sol.p_to[k].hypot(sol.q_to[k]));
        if s > cap * (1.0 + spec.flow_tol) {
            out.push(Violation {
                element: Element::Branch(o.branch_origin[k]),
                kind: ViolationKind::FlowOverLimit,
            });
        }
    }
    for (i, b) in o.net.buses.iter().enumerate() {
        if b.kind == BusKind::Isolated {
            continue;
        }
        let v = sol.v[i];
        if v < b.v_min - spec.voltage_tol || v > b.v_max + spec.voltage_tol {
            out.push(Violation {
                element: Element::Bus(b.id),
                kind: ViolationKind::VoltageOutOfBand,
            });
        }
    }
    out
}

fn evaluate_case(net: &Network, base: &FlowSolution, spec: &ContingencySpec, index: usize, outage: Vec<Element>) -> CaseResult {
    let unsolved = |outage| CaseResult {
        index,
        outage,
        unsolved: true,
        violations: Vec::new(),
    };
    let Some(o) = apply_outage(net, &outage) else {
        return unsolved(outage);
    };
    match solve_ac_with(&o.net, &AcOptions::default(), Some(base)) {
        Ok(sol) if sol.converged => CaseResult {
            index,
            violations: violations(&o, &sol, spec),
            outage,
            unsolved: false,
        },
        _ => unsolved(outage),
    }
}

fn outage_sets<'a>(net: &Network, spec: &'a ContingencySpec) -> Box<dyn Iterator<Item = Vec<Element>> + 'a> {
    match spec.kind {
        ElementKind::List => Box::new(spec.sets.iter().cloned()),
        kind => Box::new(contingency_elements(net, kind).into_iter().combinations(spec.depth)),
    }
}

/// Violations of the intact network under `spec`'s limits.
pub fn base_violations(net: &Network, spec: &ContingencySpec) -> Result<Vec<Violation>> {
    let base = solve_ac(net)?;
    if !base.converged {
        return Err(Error::Unsolved);
    }
    let o = Outaged {
        net: net.clone(),
        branch_origin: (0..net.branches.len()).collect(),
    };
    Ok(violations(&o, &base, spec))
}

/// Runs every case from position `skip` on, handing each result to `sink` in
/// case order. Cases are evaluated in parallel chunks on the current rayon
/// pool. Fails only on an invalid spec, an unsolvable base case, or a sink
/// error.
pub fn run_contingencies_streaming(
    net: &Network,
    spec: &ContingencySpec,
    skip: usize,
    mut sink: impl FnMut(&CaseResult) -> Result<()>,
) -> Result<ContingencyReport> {
    validate(net, spec)?;
    let base = solve_ac(net)?;
    if !base.converged {
        return Err(Error::Unsolved);
    }
    let base_v = base_violations(net, spec)?;
    if !base_v.is_empty() {
        log::warn!("{}: base case already has {} violations", net.name, base_v.len());
    }
    let mut cases = Vec::new();
    let sets = outage_sets(net, spec).enumerate().skip(skip);
    for chunk in &sets.chunks(CHUNK) {
        let chunk: Vec<(usize, Vec<Element>)> = chunk.collect();
        let results: Vec<CaseResult> = chunk
            .into_par_iter()
            .map(|(i, set)| evaluate_case(net, &base, spec, i, set))
            .collect();
        for r in results {
            sink(&r)?;
            cases.push(r);
        }
    }
    Ok(ContingencyReport::from_cases(cases))
}

pub fn run_contingencies(net: &Network, spec: &ContingencySpec) -> Result<ContingencyReport> {
    run_contingencies_streaming(net, spec, 0, |_| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testnets::*;

    #[test]
    fn element_labels_round_trip() {
        for e in [Element::Branch(0), Element::Branch(41), Element::Bus(7)] {
            assert_eq!(e.to_string().parse::<Element>().unwrap(), e);
        }
        assert!("branch:0".parse::<Element>().is_err());
        assert!("gen:3".parse::<Element>().is_err());
    }

    #[test]
    fn radial_line_outage_islands_the_load() {
        let net = two_bus(0.1, 50.0);
        let rep = run_contingencies(&net, &ContingencySpec::new(1, ElementKind::Branch)).unwrap();
        assert_eq!(rep.total_cases, 1);
        assert_eq!(rep.unsolved, 1);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn binomial_counts() {
        assert_eq!(binomial(38, 1), 38);
        assert_eq!(binomial(38, 2), 703);
        assert_eq!(binomial(38, 3), 8436);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn outage_list_parses() {
        let sets = parse_outage_list("# critical\nbranch:1, branch:3\nbus:2\n\n").unwrap();
        assert_eq!(sets, vec![vec![Element::Branch(0), Element::Branch(2)], vec![Element::Bus(2)]]);
        assert!(matches!(parse_outage_list("branch:x"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_rows_round_trip() {
        let case = CaseResult {
            index: 4,
            outage: vec![Element::Branch(2), Element::Bus(9)],
            unsolved: false,
            violations: vec![
                Violation {
                    element: Element::Branch(5),
                    kind: ViolationKind::FlowOverLimit,
                },
                Violation {
                    element: Element::Bus(3),
                    kind: ViolationKind::VoltageOutOfBand,
                },
            ],
        };
        let rec = csv::StringRecord::from(case.to_record().to_vec());
        assert_eq!(CaseResult::from_record(&rec).unwrap(), case);
    }

    #[test]
    fn unknown_list_element_is_rejected() {
        let net = triangle(0.1, 100.0);
        let spec = ContingencySpec::from_list(vec![vec![Element::Branch(7)]]);
        assert!(run_contingencies(&net, &spec).is_err());
    }

    #[test]
    fn slack_substation_outage_promotes_largest_pv() {
        let mut net = triangle(0.1, 60.0);
        net.buses[1].kind = BusKind::Pv;
        net.generators.push(crate::grid::Generator::new(2, 30.0, 0.0, 300.0));
        let net = net.with_generators(net.generators.clone()).unwrap();
        let o = apply_outage(&net, &[Element::Bus(1)]).unwrap();
        assert_eq!(o.net.buses[o.net.slack_idx()].id, 2);
        assert_eq!(o.net.branches.len(), 1);
        assert_eq!(o.branch_origin, vec![1]);
    }
}

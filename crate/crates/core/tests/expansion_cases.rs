mod common;

use common::{bus, line};
use ecogrid::candidates::{generate_candidates, GenerationSpec};
use ecogrid::eco::{build_efm, eco_metrics_relaxed};
use ecogrid::expansion::*;
use ecogrid::grid::{apply_decisions, BusKind, CandidateBranch, CandidateSet, Generator, Network, Provenance};
use ecogrid::powerflow::solve_dc;

fn all_decisions(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u32 << n).map(move |m| (0..n).map(|c| m >> c & 1 == 1).collect())
}

fn candidate(id: usize, f: usize, t: usize, x: f64) -> CandidateBranch {
    CandidateBranch {
        id,
        from_bus: f,
        to_bus: t,
        r: 0.0,
        x,
        b_charging: 0.0,
        s_max: Some(300.0),
        tap_ratio: 1.0,
        parallel: false,
        decision: false,
    }
}

fn manual(entries: Vec<CandidateBranch>) -> CandidateSet {
    CandidateSet {
        entries,
        provenance: Provenance::Manual,
    }
}

/// Relaxed R_ECO of `net` with its generator setpoints, the slack absorbing
/// any mismatch, computed through the public flow and metric functions.
fn scripted_relaxed(net: &Network, order: usize) -> f64 {
    let sol = solve_dc(net).unwrap();
    eco_metrics_relaxed(&build_efm(net, &sol, None).unwrap(), order).unwrap().r_eco
}

fn assert_dispatch_feasible(prob: &ExpansionProblem, res: &ExpansionResult) {
    let total: f64 = res.dispatch.p_gen.iter().sum();
    let demand = prob.net.total_load();
    assert!((total - demand).abs() <= 1e-9 * prob.net.base_mva, "{total} vs {demand}");
    for (k, g) in prob.net.in_service_generators() {
        let p = res.dispatch.p_gen[k];
        assert!(p >= g.p_min.max(0.0) - 1e-9 && p <= g.p_max + 1e-9, "gen {k}: {p}");
    }
}

#[test]
fn case9_branch_and_bound_matches_enumeration() {
    let net = common::load("case9.m");
    for seed in [1, 2, 3] {
        let cands = generate_candidates(&net, &GenerationSpec::new(4, seed)).unwrap();
        let prob = ExpansionProblem::new(net.clone(), cands, Mode::Structure);
        let best = all_decisions(prob.cands.len())
            .map(|d| leaf_objective(&prob, &d).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let res = solve_expansion(&prob).unwrap();
        assert_eq!(res.status, Status::OptimalWithinBudget);
        assert!((res.solved_r_eco - best).abs() <= 1e-6, "seed {seed}: {} vs {best}", res.solved_r_eco);
        assert!(res.solved_r_eco >= leaf_objective(&prob, &vec![false; prob.cands.len()]).unwrap() - 1e-12);
        assert_dispatch_feasible(&prob, &res);
    }
}

#[test]
fn reported_metrics_match_a_scripted_pipeline() {
    let net = common::load("case9.m");
    let cands = generate_candidates(&net, &GenerationSpec::new(3, 7)).unwrap();
    let prob = ExpansionProblem::new(net.clone(), cands, Mode::Structure);
    let res = solve_expansion(&prob).unwrap();

    // Structure mode: case setpoints scaled to the demand on the grown grid.
    let chosen = prob.cands.with_decisions(&res.decisions);
    let grown = apply_decisions(&net, &chosen).unwrap();
    let scale = net.total_load() / net.generators.iter().map(|g| g.p_set).sum::<f64>();
    let gens = grown
        .generators
        .iter()
        .map(|g| Generator { p_set: g.p_set * scale, ..g.clone() })
        .collect();
    let grown = grown.with_generators(gens).unwrap();
    let sol = solve_dc(&grown).unwrap();
    let exact = ecogrid::eco::eco_metrics_exact(&build_efm(&net, &sol, Some(&chosen)).unwrap()).unwrap().r_eco;
    assert!((res.achieved_r_eco_structure - exact).abs() < 1e-12);
    let (_, via_api) = evaluate_decisions(&prob, &res.decisions, Mode::Structure).unwrap();
    assert_eq!(via_api, res.achieved_r_eco_structure);
    assert_eq!(res.built, res.decisions.iter().filter(|d| **d).count());
}

/// Slack bus 1 and a PV bus 2, both generating; loads at 3 and 4.
fn two_unit_grid() -> Network {
    let buses = vec![
        bus(1, BusKind::Slack, 0.0),
        bus(2, BusKind::Pv, 40.0),
        bus(3, BusKind::Pq, 90.0),
        bus(4, BusKind::Pq, 60.0),
    ];
    let branches = vec![line(1, 2, 0.1, 300.0), line(2, 3, 0.15, 300.0), line(3, 4, 0.1, 300.0), line(1, 4, 0.2, 300.0)];
    let gens = vec![Generator::new(1, 120.0, 0.0, 180.0), Generator::new(2, 70.0, 20.0, 150.0)];
    Network::new("two-unit", 100.0, buses, branches, gens).unwrap()
}

fn with_second_unit(net: &Network, p2: f64) -> Network {
    let mut gens = net.generators.clone();
    gens[1].p_set = p2;
    gens[0].p_set = net.total_load() - p2;
    net.with_generators(gens).unwrap()
}

/// Golden-section maximization of a scalar function on [lo, hi], seeded by
/// a coarse scan to pick the bracket.
fn scan_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 400;
    let h = (hi - lo) / n as f64;
    let best = (0..=n).map(|i| lo + h * i as f64).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b)).max(f(lo)).max(f(hi))
}

#[test]
fn leaf_matches_a_dispatch_grid_search() {
    let net = two_unit_grid();
    let cands = manual(vec![candidate(1, 1, 3, 0.12), candidate(2, 2, 4, 0.2)]);
    for order in [1, 3] {
        let mut prob = ExpansionProblem::new(net.clone(), cands.clone(), Mode::Opf);
        prob.order = order;
        for d in all_decisions(2) {
            let grown = apply_decisions(&net, &cands.with_decisions(&d)).unwrap();
            // The slack unit's box bounds P2 as well: P1 = D - P2 in [0, 180].
            let lo = 20f64.max(net.total_load() - 180.0);
            let oracle = scan_max(lo, 150.0, |p2| scripted_relaxed(&with_second_unit(&grown, p2), order));
            let leaf = leaf_objective(&prob, &d).unwrap();
            assert!((leaf - oracle).abs() < 1e-6, "order {order} {d:?}: {leaf} vs {oracle}");
        }
    }
}

#[test]
fn root_relaxation_matches_a_susceptance_scan() {
    // One unit, so the dispatch is forced and α is the only free variable.
    // A candidate at α behaves like a line with reactance x/α.
    let net = common::radial_supply(&[50.0, 80.0], vec![line(1, 2, 0.1, 300.0), line(2, 3, 0.1, 300.0)]);
    let cands = manual(vec![candidate(1, 1, 3, 0.3)]);
    let prob = ExpansionProblem::new(net.clone(), cands, Mode::Structure);
    let oracle = scan_max(0.0, 1.0, |a| {
        if a <= 0.0 {
            return scripted_relaxed(&net, 1);
        }
        let mut brs = net.branches.clone();
        brs.push(line(1, 3, 0.3 / a, 300.0));
        scripted_relaxed(&net.with_branches(brs).unwrap(), 1)
    });
    let root = relaxed_subproblem(&prob, &[None], None).unwrap();
    assert!((root.value - oracle).abs() < 1e-7, "{} vs {oracle}", root.value);
    assert!((0.0..=1.0).contains(&root.alpha[0]));
}

#[test]
fn opf_dispatch_is_balanced_and_within_limits() {
    let net = two_unit_grid();
    let cands = manual(vec![candidate(1, 1, 3, 0.12), candidate(2, 2, 4, 0.2)]);
    let prob = ExpansionProblem::new(net, cands, Mode::Opf);
    let res = solve_expansion(&prob).unwrap();
    assert_dispatch_feasible(&prob, &res);
    let (_, opf) = evaluate_decisions(&prob, &res.decisions, Mode::Opf).unwrap();
    assert!((opf - res.achieved_r_eco_opf).abs() < 1e-9);
}

#[test]
fn rerun_is_bit_identical() {
    let net = common::load("case14.m");
    let cands = generate_candidates(&net, &GenerationSpec::new(5, 11)).unwrap();
    let mut prob = ExpansionProblem::new(net, cands, Mode::Structure);
    prob.limits.node_budget = 40;
    let a = solve_expansion(&prob).unwrap();
    let b = solve_expansion(&prob).unwrap();
    assert_eq!(a.decisions, b.decisions);
    assert_eq!(a.solved_r_eco.to_bits(), b.solved_r_eco.to_bits());
    assert_eq!(a.search_log, b.search_log);
}

#[test]
fn node_budget_is_respected() {
    let net = common::load("case14.m");
    let cands = generate_candidates(&net, &GenerationSpec::new(8, 5)).unwrap();
    let mut prob = ExpansionProblem::new(net, cands, Mode::Structure);
    prob.limits.node_budget = 3;
    let res = solve_expansion(&prob).unwrap();
    assert!(res.nodes_explored <= 3);
    if res.status == Status::IncumbentOnly {
        assert!(res.solved_r_eco.is_finite());
    }
}



//! Network expansion that maximizes relaxed ecological robustness under the
//! DC model: branch and bound over candidate decisions with a projected
//! gradient solve of the continuous relaxation at every node.

mod bnb;
mod model;
mod spg;

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::eco::{build_efm, eco_metrics_exact};
use crate::error::{Error, Result};
use crate::grid::{apply_decisions, CandidateSet, Network};
use crate::powerflow::{solve_dc, FlowSolution};

pub use bnb::SearchRecord;
use model::DcModel;
use spg::Feasible;

const DISPATCH_CORNERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Keep the case's setpoints (rescaled to balance) on the new topology.
    Structure,
    /// Adopt the relaxed-optimal dispatch for the chosen topology.
    Opf,
}

/// How setpoints are rebalanced in structure-mode evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rebalance {
    /// Scale every in-service setpoint by demand / Σ setpoints.
    Proportional,
    /// Leave setpoints alone; the slack bus absorbs the difference.
    SlackOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverLimits {
    pub node_budget: usize,
    /// Wall-clock cap. Hitting it makes the result depend on machine speed.
    pub time_budget: Option<Duration>,
    /// KKT residual tolerance of the continuous solve.
    pub nlp_tol: f64,
    pub nlp_max_iter: usize,
    /// Objective tolerance for pruning and fathoming.
    pub gap_tol: f64,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            node_budget: 500,
            time_budget: None,
            nlp_tol: 1e-9,
            nlp_max_iter: 3000,
            gap_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpansionProblem {
    pub net: Network,
    pub cands: CandidateSet,
    pub mode: Mode,
    pub order: usize,
    pub limits: SolverLimits,
    pub rebalance: Rebalance,
}

impl ExpansionProblem {
    pub fn new(net: Network, cands: CandidateSet, mode: Mode) -> Self {
        ExpansionProblem {
            net,
            cands,
            mode,
            order: 1,
            limits: SolverLimits::default(),
            rebalance: Rebalance::Proportional,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    /// The tree closed within the budget.
    OptimalWithinBudget,
    /// Budget ran out with open nodes; the incumbent is the best leaf seen.
    IncumbentOnly,
    Infeasible,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionResult {
    pub decisions: Vec<bool>,
    pub built: usize,
    /// DC dispatch of the chosen topology under the problem's mode.
    pub dispatch: FlowSolution,
    /// Relaxed objective of the incumbent leaf.
    pub solved_r_eco: f64,
    /// Exact R_ECO of the original network with all decisions 0, evaluated
    /// like `achieved_r_eco_structure`.
    pub base_r_eco: f64,
    pub achieved_r_eco_structure: f64,
    pub achieved_r_eco_opf: f64,
    pub status: Status,
    pub nodes_explored: usize,
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    pub search_log: Vec<SearchRecord>,
}

impl ExpansionResult {
    /// Search log as newline-delimited JSON.
    pub fn search_log_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.search_log {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Result of a continuous relaxation solve.
#[derive(Debug, Clone, Serialize)]
pub struct Subproblem {
    pub value: f64,
    /// Generator outputs (MW) for in-service generators at active buses.
    pub p_gen: Vec<f64>,
    pub alpha: Vec<f64>,
    pub kkt: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Evaluation context shared by the tree search, the leaf evaluator and
/// the public entry points.
pub(crate) struct Context<'a> {
    pub model: DcModel<'a>,
    pub limits: &'a SolverLimits,
    leaf_cache: Mutex<HashMap<Vec<bool>, Option<(f64, Vec<f64>)>>>,
}

impl<'a> Context<'a> {
    pub fn new(net: &'a Network, cands: &'a CandidateSet, order: usize, limits: &'a SolverLimits) -> Result<Self> {
        Ok(Context {
            model: DcModel::new(net, cands, order)?,
            limits,
            leaf_cache: Mutex::new(HashMap::new()),
        })
    }

    fn bounds(&self, fixed: &[Option<bool>]) -> (Vec<f64>, Vec<f64>) {
        let lo = fixed.iter().map(|f| if *f == Some(true) { 1.0 } else { 0.0 }).collect();
        let hi = fixed.iter().map(|f| if *f == Some(false) { 0.0 } else { 1.0 }).collect();
        (lo, hi)
    }

    /// One continuous solve from `x0` with α restricted by `fixed`.
    pub fn solve_from(&self, fixed: &[Option<bool>], x0: &[f64]) -> Result<(f64, Vec<f64>, spg::SpgOutcome)> {
        let (lo, hi) = self.bounds(fixed);
        let set = Feasible::new(&self.model, lo, hi);
        let out = spg::maximize(&self.model, &set, x0, self.limits.nlp_tol, self.limits.nlp_max_iter)?;
        let x = set.project(&out.x);
        let value = self.model.value(&x)?;
        Ok((value, x, out))
    }

    pub fn start_point(&self, alpha: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut x = self.model.scaled_setpoints();
        x.extend((0..self.model.n_cands()).map(alpha));
        x
    }

    /// Generator starting points in pu: the rebalanced case setpoints, the
    /// box midpoint and ends, then one corner per large unit with that unit
    /// at its maximum and the rest at their minimum.
    pub fn dispatch_starts(&self) -> Vec<Vec<f64>> {
        let (lo, hi) = self.model.gen_bounds();
        let mut out = vec![self.model.scaled_setpoints()];
        for w in [0.5, 0.0, 1.0] {
            out.push(lo.iter().zip(&hi).map(|(l, h)| l + w * (h - l)).collect());
        }
        let mut big: Vec<usize> = (0..lo.len()).collect();
        big.sort_by(|&a, &b| hi[b].total_cmp(&hi[a]).then(a.cmp(&b)));
        for &k in big.iter().take(DISPATCH_CORNERS) {
            let mut p = lo.clone();
            p[k] = hi[k];
            out.push(p);
        }
        out
    }

    /// Canonical leaf value: the best dispatch over [`Self::dispatch_starts`]
    /// with every α fixed. `None` when every solve fails.
    pub fn leaf(&self, decisions: &[bool]) -> Option<(f64, Vec<f64>)> {
        if let Some(hit) = self.leaf_cache.lock().expect("leaf cache").get(decisions) {
            return hit.clone();
        }
        let fixed: Vec<Option<bool>> = decisions.iter().map(|&d| Some(d)).collect();
        let alpha: Vec<f64> = decisions.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
        let starts: Vec<Vec<f64>> = self
            .dispatch_starts()
            .into_iter()
            .map(|p| p.into_iter().chain(alpha.iter().copied()).collect())
            .collect();
        let solved: Vec<Option<(f64, Vec<f64>)>> = starts
            .par_iter()
            .map(|x0| match self.solve_from(&fixed, x0) {
                Ok((v, x, _)) if v.is_finite() => Some((v, x)),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("leaf start failed: {e}");
                    None
                }
            })
            .collect();
        let out = solved.into_iter().flatten().fold(None::<(f64, Vec<f64>)>, |acc, (v, x)| match acc {
            Some((bv, _)) if bv >= v => acc,
            _ => Some((v, x)),
        });
        if out.is_none() {
            log::warn!("leaf solve failed for every start");
        }
        self.leaf_cache
            .lock()
            .expect("leaf cache")
            .insert(decisions.to_vec(), out.clone());
        out
    }
}

/// Continuous relaxation at a node: `fixed[c]` pins α_c, `None` leaves it
/// free in [0, 1]. Starts from `start` (MW generator outputs then α) or
/// from the rebalanced case setpoints with free α at 0.5.
pub fn relaxed_subproblem(
    prob: &ExpansionProblem,
    fixed: &[Option<bool>],
    start: Option<(&[f64], &[f64])>,
) -> Result<Subproblem> {
    if fixed.len() != prob.cands.len() {
        return Err(Error::Invalid("fixed vector length differs from candidate count".into()));
    }
    let ctx = Context::new(&prob.net, &prob.cands, prob.order, &prob.limits)?;
    let base = prob.net.base_mva;
    let x0 = match start {
        Some((p, a)) => p.iter().map(|v| v / base).chain(a.iter().copied()).collect(),
        None => ctx.start_point(|c| match fixed[c] {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => 0.5,
        }),
    };
    let (value, x, out) = ctx.solve_from(fixed, &x0)?;
    let ng = ctx.model.n_gens();
    Ok(Subproblem {
        value,
        p_gen: x[..ng].iter().map(|v| v * base).collect(),
        alpha: x[ng..].to_vec(),
        kkt: out.kkt,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Canonical leaf value of the relaxed objective for a full decision vector.
pub fn leaf_objective(prob: &ExpansionProblem, decisions: &[bool]) -> Result<f64> {
    let ctx = Context::new(&prob.net, &prob.cands, prob.order, &prob.limits)?;
    ctx.leaf(decisions)
        .map(|(v, _)| v)
        .ok_or_else(|| Error::Infeasible("leaf solve failed".into()))
}

fn structure_solution(net: &Network, cands: &CandidateSet, decisions: &[bool], rebalance: Rebalance) -> Result<FlowSolution> {
    let chosen = cands.with_decisions(decisions);
    let mut built = apply_decisions(net, &chosen)?;
    if rebalance == Rebalance::Proportional {
        let demand: f64 = built.buses.iter().map(|b| b.p_load + b.g_shunt).sum();
        let total: f64 = built.in_service_generators().map(|(_, g)| g.p_set).sum();
        if total > 0.0 {
            let scale = demand / total;
            let gens = built
                .generators
                .iter()
                .map(|g| {
                    let mut g = g.clone();
                    if g.in_service {
                        g.p_set *= scale;
                    }
                    g
                })
                .collect();
            built = built.with_generators(gens)?;
        }
    }
    solve_dc(&built).map_err(|e| match e {
        Error::Islanded { .. } => unreachable!("adding branches cannot island a connected network"),
        e => e,
    })
}

/// DC solution and exact R_ECO for a decision vector under `mode`.
pub fn evaluate_decisions(prob: &ExpansionProblem, decisions: &[bool], mode: Mode) -> Result<(FlowSolution, f64)> {
    if decisions.len() != prob.cands.len() {
        return Err(Error::Invalid("decision vector length differs from candidate count".into()));
    }
    let chosen = prob.cands.with_decisions(decisions);
    let sol = match mode {
        Mode::Structure => structure_solution(&prob.net, &prob.cands, decisions, prob.rebalance)?,
        Mode::Opf => {
            let ctx = Context::new(&prob.net, &prob.cands, prob.order, &prob.limits)?;
            let (_, x) = ctx
                .leaf(decisions)
                .ok_or_else(|| Error::Infeasible("dispatch solve failed".into()))?;
            ctx.model.flow_solution(&x)?
        }
    };
    let r = eco_metrics_exact(&build_efm(&prob.net, &sol, Some(&chosen))?)?.r_eco;
    Ok((sol, r))
}

/// Branch and bound over candidate decisions.
pub fn solve_expansion(prob: &ExpansionProblem) -> Result<ExpansionResult> {
    let started = std::time::Instant::now();
    if prob.limits.node_budget == 0 {
        return Err(Error::Invalid("node budget must be positive".into()));
    }
    let ctx = Context::new(&prob.net, &prob.cands, prob.order, &prob.limits)?;
    let search = bnb::search(&ctx, started)?;
    let decisions = search.decisions;
    let (sol_structure, achieved_structure) = evaluate_decisions(prob, &decisions, Mode::Structure)?;
    let sol_opf = ctx.model.flow_solution(&search.point)?;
    let chosen = prob.cands.with_decisions(&decisions);
    let achieved_opf = eco_metrics_exact(&build_efm(&prob.net, &sol_opf, Some(&chosen))?)?.r_eco;
    let zeros = vec![false; prob.cands.len()];
    let (_, base_r_eco) = evaluate_decisions(prob, &zeros, Mode::Structure)?;
    log::info!(
        "expansion: {} of {} built, relaxed {:.6}, exact structure {:.6}, opf {:.6}, base {:.6}",
        decisions.iter().filter(|d| **d).count(),
        decisions.len(),
        search.value,
        achieved_structure,
        achieved_opf,
        base_r_eco
    );
    Ok(ExpansionResult {
        built: decisions.iter().filter(|d| **d).count(),
        dispatch: match prob.mode {
            Mode::Structure => sol_structure,
            Mode::Opf => sol_opf,
        },
        decisions,
        solved_r_eco: search.value,
        base_r_eco,
        achieved_r_eco_structure: achieved_structure,
        achieved_r_eco_opf: achieved_opf,
        status: search.status,
        nodes_explored: search.nodes,
        wall_time: started.elapsed(),
        search_log: search.log,
    })
}

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{Context, Status};
use crate::error::{Error, Result};

const INTEGRAL_TOL: f64 = 1e-6;
const REORDER_EVERY: usize = 64;

/// One solved node, for bound-monotonicity audits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchRecord {
    pub node_id: usize,
    pub parent: Option<usize>,
    pub fixed: usize,
    pub free: usize,
    /// Node bound after clipping to the parent bound.
    pub bound: f64,
    /// Best local relaxation value found at the node (NaN if every start failed).
    pub raw_bound: f64,
    /// Incumbent after processing the node.
    pub incumbent: f64,
    pub action: &'static str,
}

pub(crate) struct SearchOutcome {
    pub decisions: Vec<bool>,
    pub point: Vec<f64>,
    pub value: f64,
    pub status: Status,
    pub nodes: usize,
    pub log: Vec<SearchRecord>,
}

struct Node {
    id: usize,
    parent: Option<usize>,
    fixed: Vec<Option<bool>>,
    bound: f64,
    start: Vec<f64>,
}

struct Incumbent {
    value: f64,
    decisions: Vec<bool>,
    point: Vec<f64>,
}

impl Incumbent {
    fn offer(&mut self, value: f64, decisions: &[bool], point: &[f64]) {
        if value > self.value {
            self.value = value;
            self.decisions = decisions.to_vec();
            self.point = point.to_vec();
        }
    }
}

pub(crate) fn search(ctx: &Context, started: Instant) -> Result<SearchOutcome> {
    let nc = ctx.model.n_cands();
    let ng = ctx.model.n_gens();
    let limits = ctx.limits;
    let zeros = vec![false; nc];
    let (v0, x0) = ctx
        .leaf(&zeros)
        .ok_or_else(|| Error::Infeasible("the base topology has no feasible dispatch".into()))?;
    let mut inc = Incumbent {
        value: v0,
        decisions: zeros,
        point: x0,
    };
    let mut log = Vec::new();
    let dispatch = ctx.dispatch_starts();
    if nc == 0 {
        return Ok(SearchOutcome {
            decisions: inc.decisions,
            point: inc.point,
            value: inc.value,
            status: Status::OptimalWithinBudget,
            nodes: 0,
            log,
        });
    }

    let mut stack = vec![Node {
        id: 0,
        parent: None,
        fixed: vec![None; nc],
        bound: f64::INFINITY,
        start: ctx.start_point(|_| 0.5),
    }];
    let mut next_id = 1;
    let mut processed = 0;
    let mut exhausted = false;
    while let Some(node) = stack.pop() {
        let out_of_time = limits.time_budget.is_some_and(|t| started.elapsed() >= t);
        if processed >= limits.node_budget || out_of_time {
            stack.push(node);
            exhausted = true;
            break;
        }
        if node.bound <= inc.value + limits.gap_tol {
            continue;
        }
        processed += 1;

        let free: Vec<usize> = (0..nc).filter(|&c| node.fixed[c].is_none()).collect();
        // The relaxation is not concave, so one local solve can sit well
        // below the node's true maximum. Solve from the inherited point, from
        // the incumbent when it lies in this subtree, and from every dispatch
        // start with the free α kept, all 1 and all 0.
        let mut starts = vec![node.start.clone()];
        let inside = |d: &[bool]| node.fixed.iter().zip(d).all(|(f, &v)| f.is_none_or(|f| f == v));
        if inside(&inc.decisions) {
            starts.push(inc.point.clone());
        }

        for p in &dispatch {
            for v in [None, Some(1.0), Some(0.0)] {
                if v.is_some() && free.is_empty() {
                    continue;
                }
                let mut s = node.start.clone();
                s[..ng].copy_from_slice(p);
                if let Some(v) = v {
                    for &c in &free {
                        s[ng + c] = v;
                    }
                }
                starts.push(s);
            }
        }
        let solved: Vec<Option<(f64, Vec<f64>)>> = starts
            .par_iter()
            .map(|s| ctx.solve_from(&node.fixed, s).ok().map(|(v, x, _)| (v, x)))
            .collect();
        let mut best = solved
            .into_iter()
            .flatten()
            .fold(None::<(f64, Vec<f64>)>, |acc, (v, x)| match acc {
                Some((bv, _)) if bv >= v => acc,
                _ => Some((v, x)),
            });
        // Dive: the leaf nearest the relaxed point is in this subtree, so the
        // node value cannot be below it. Restart from that leaf when it is.
        if let Some((v, x)) = best.as_ref().filter(|_| !free.is_empty()) {
            let rounded: Vec<bool> = (0..nc).map(|c| node.fixed[c].unwrap_or(x[ng + c] >= 0.5)).collect();
            if let Some((lv, lx)) = ctx.leaf(&rounded) {
                inc.offer(lv, &rounded, &lx);
                if lv > *v {
                    if let Ok((rv, rx, _)) = ctx.solve_from(&node.fixed, &lx) {
                        best = Some(if rv >= lv { (rv, rx) } else { (lv, lx) });
                    }
                }
            }
        }
        let (raw, point) = match best {
            Some((v, x)) => (v, x),
            None => (f64::NAN, node.start.clone()),
        };
        let bound = if raw.is_nan() { node.bound } else { raw.min(node.bound) };
        let mut record = SearchRecord {
            node_id: node.id,
            parent: node.parent,
            fixed: nc - free.len(),
            free: free.len(),
            bound,
            raw_bound: raw,
            incumbent: inc.value,
            action: "branch",
        };

        if bound <= inc.value + limits.gap_tol {
            record.action = "pruned";
            log.push(record);
            continue;
        }

        let alpha = |c: usize| point[ng + c];
        let branch_on = if free.is_empty() {
            None
        } else if raw.is_nan() {
            Some(free[0])
        } else if free.iter().all(|&c| alpha(c) <= INTEGRAL_TOL || alpha(c) >= 1.0 - INTEGRAL_TOL) {
            let decisions: Vec<bool> = (0..nc)
                .map(|c| node.fixed[c].unwrap_or(alpha(c) >= 0.5))
                .collect();
            match ctx.leaf(&decisions) {
                Some((v, x)) => {
                    inc.offer(v, &decisions, &x);
                    if v >= raw - limits.gap_tol {
                        None
                    } else {
                        Some(free[0])
                    }
                }
                None => Some(free[0]),
            }
        } else {
            let frac = |c: usize| alpha(c).min(1.0 - alpha(c));
            free.iter().copied().fold(None::<usize>, |acc, c| match acc {
                Some(b) if frac(b) >= frac(c) => Some(b),
                _ => Some(c),
            })
        };

        if free.is_empty() {
            let decisions: Vec<bool> = node.fixed.iter().map(|f| f.unwrap_or(false)).collect();
            if let Some((v, x)) = ctx.leaf(&decisions) {
                inc.offer(v, &decisions, &x);
            }
            record.action = "leaf";
            record.incumbent = inc.value;
            log.push(record);
            continue;
        }
        let Some(var) = branch_on else {
            record.action = "fathomed";
            record.incumbent = inc.value;
            log.push(record);
            continue;
        };
        record.incumbent = inc.value;
        log.push(record);

        let preferred = alpha(var) >= 0.5;
        for val in [!preferred, preferred] {
            let mut fixed = node.fixed.clone();
            fixed[var] = Some(val);
            let mut start = point.clone();
            start[ng + var] = if val { 1.0 } else { 0.0 };
            stack.push(Node {
                id: next_id,
                parent: Some(node.id),
                fixed,
                bound,
                start,
            });
            next_id += 1;
        }
        if processed % REORDER_EVERY == 0 {
            stack.sort_by(|a, b| a.bound.total_cmp(&b.bound));
        }
    }

    let status = if exhausted && !stack.is_empty() {
        Status::IncumbentOnly
    } else {
        Status::OptimalWithinBudget
    };
    log::info!("branch and bound: {processed} nodes, status {status:?}, incumbent {:.8}", inc.value);
    Ok(SearchOutcome {
        decisions: inc.decisions,
        point: inc.point,
        value: inc.value,
        status,
        nodes: processed,
        log,
    })
}

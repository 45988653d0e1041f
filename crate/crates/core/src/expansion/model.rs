//! Relaxed R_ECO as a smooth-ish function of (generator outputs, α) under
//! the DC model, with adjoint gradients.

use std::collections::BTreeMap;

use crate::eco::{evaluate_flat, LogKind};
use crate::error::{Error, Result};
use crate::grid::{BusKind, CandidateSet, Network};
use crate::powerflow::dc::{reduced_b, ReducedIndex};
use crate::powerflow::sparse::SparseLu;
use crate::powerflow::{solve_dc, FlowSolution, Model};

struct GenVar {
    gen: usize,
    bus: usize,
    lo: f64,
    hi: f64,
}

struct Edge {
    f: usize,
    t: usize,
    b: f64,
    shift: f64,
    cand: Option<usize>,
    /// Orientation of the base-case DC flow, used when the flow is exactly 0.
    base_sign: f64,
    /// Triplet slots for f→t and t→f.
    fwd: usize,
    bwd: usize,
}

/// Decision variables are `[P_gen (pu) …, α …]`.
pub(crate) struct DcModel<'a> {
    pub net: &'a Network,
    pub cands: &'a CandidateSet,
    gens: Vec<GenVar>,
    edges: Vec<Edge>,
    idx: ReducedIndex,
    fixed_inj: Vec<f64>,
    /// Σ load + shunt, pu; the equality every dispatch must meet.
    pub demand: f64,
    size: usize,
    template: Vec<(usize, usize, f64)>,
    log: LogKind,
}

pub(crate) struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl<'a> DcModel<'a> {
    pub fn new(net: &'a Network, cands: &'a CandidateSet, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Invalid("relaxation order must be at least 1".into()));
        }
        cands.validate(net)?;
        let base_sol = solve_dc(net)?;
        let base = net.base_mva;
        let nb = net.buses.len();

        let mut gens = Vec::new();
        for (k, g) in net.in_service_generators() {
            let bus = net.idx(g.bus);
            if net.buses[bus].kind == BusKind::Isolated {
                continue;
            }
            let lo = g.p_min.max(0.0) / base;
            let hi = g.p_max.max(0.0) / base;
            gens.push(GenVar {
                gen: k,
                bus,
                lo: lo.min(hi),
                hi,
            });
        }
        let n_gen_actors = net.in_service_generators().count();
        let size = 1 + n_gen_actors + nb + 2;
        let gen_actor: BTreeMap<usize, usize> = net
            .in_service_generators()
            .enumerate()
            .map(|(a, (k, _))| (k, 1 + a))
            .collect();
        let bus_actor = |i: usize| 1 + n_gen_actors + i;

        let mut template = Vec::new();
        for g in &gens {
            let a = gen_actor[&g.gen];
            template.push((0, a, 0.0));
            template.push((a, bus_actor(g.bus), 0.0));
        }
        let mut slots: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut slot = |template: &mut Vec<(usize, usize, f64)>, i: usize, j: usize| -> usize {
            *slots.entry((i, j)).or_insert_with(|| {
                template.push((bus_actor(i), bus_actor(j), 0.0));
                template.len() - 1
            })
        };

        let mut edges = Vec::new();
        for (k, br) in net.in_service_branches() {
            let (f, t) = (net.idx(br.from_bus), net.idx(br.to_bus));
            edges.push(Edge {
                f,
                t,
                b: br.dc_susceptance(),
                shift: br.shift,
                cand: None,
                base_sign: if base_sol.p_flow[k] < 0.0 { -1.0 } else { 1.0 },
                fwd: slot(&mut template, f, t),
                bwd: slot(&mut template, t, f),
            });
        }
        for (c, cand) in cands.entries.iter().enumerate() {
            let (f, t) = (net.idx(cand.from_bus), net.idx(cand.to_bus));
            edges.push(Edge {
                f,
                t,
                b: cand.dc_susceptance(),
                shift: 0.0,
                cand: Some(c),
                base_sign: if base_sol.theta[f] < base_sol.theta[t] { -1.0 } else { 1.0 },
                fwd: slot(&mut template, f, t),
                bwd: slot(&mut template, t, f),
            });
        }
        let export = 1 + n_gen_actors + nb;
        let mut fixed_inj = vec![0.0; nb];
        let mut demand = 0.0;
        for (i, b) in net.buses.iter().enumerate() {
            if b.kind == BusKind::Isolated {
                continue;
            }
            if b.p_load < 0.0 {
                return Err(Error::NegativeLoad(b.p_load, b.id));
            }
            if b.p_load > 0.0 {
                template.push((bus_actor(i), export, b.p_load));
            }
            if b.g_shunt > 0.0 {
                template.push((bus_actor(i), export + 1, b.g_shunt));
            } else if b.g_shunt < 0.0 {
                template.push((0, bus_actor(i), -b.g_shunt));
            }
            fixed_inj[i] -= (b.p_load + b.g_shunt) / base;
            demand += (b.p_load + b.g_shunt) / base;
        }
        for e in edges.iter().filter(|e| e.shift != 0.0) {
            fixed_inj[e.f] += e.b * e.shift;
            fixed_inj[e.t] -= e.b * e.shift;
        }
        let lo: f64 = gens.iter().map(|g| g.lo).sum();
        let hi: f64 = gens.iter().map(|g| g.hi).sum();
        if hi < demand - 1e-12 || lo > demand + 1e-12 {
            return Err(Error::Infeasible(format!(
                "generation range [{:.3}, {:.3}] MW cannot meet demand {:.3} MW",
                lo * base,
                hi * base,
                demand * base
            )));
        }
        Ok(DcModel {
            net,
            cands,
            gens,
            edges,
            idx: ReducedIndex::new(net),
            fixed_inj,
            demand,
            size,
            template,
            log: LogKind::Series(order),
        })
    }

    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn n_cands(&self) -> usize {
        self.cands.len()
    }

    pub fn dim(&self) -> usize {
        self.gens.len() + self.cands.len()
    }

    pub fn gen_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.gens.iter().map(|g| g.lo).collect(), self.gens.iter().map(|g| g.hi).collect())
    }

    /// Setpoints from the case scaled to meet demand, clamped to limits.
    pub fn scaled_setpoints(&self) -> Vec<f64> {
        let base = self.net.base_mva;
        let set: Vec<f64> = self.gens.iter().map(|g| self.net.generators[g.gen].p_set.max(0.0) / base).collect();
        let total: f64 = set.iter().sum();
        if total > 0.0 {
            set.iter().map(|p| p * self.demand / total).collect()
        } else {
            self.gens.iter().map(|g| 0.5 * (g.lo + g.hi)).collect()
        }
    }

    fn alpha(&self, e: &Edge, x: &[f64]) -> f64 {
        e.cand.map_or(1.0, |c| x[self.gens.len() + c])
    }

    fn factor(&self, x: &[f64]) -> Result<SparseLu> {
        let entries = reduced_b(
            &self.idx,
            self.edges.iter().map(|e| (e.f, e.t, self.alpha(e, x) * e.b)),
        );
        SparseLu::factor(self.idx.n, &entries, "expansion susceptance matrix")
    }

    fn angles(&self, lu: &SparseLu, x: &[f64]) -> Result<Vec<f64>> {
        let mut inj = self.fixed_inj.clone();
        for (g, &p) in self.gens.iter().zip(x) {
            inj[g.bus] += p;
        }
        crate::powerflow::dc::angles(self.net, &self.idx, lu, &inj)
    }

    fn flow(&self, e: &Edge, x: &[f64], theta: &[f64]) -> f64 {
        self.net.base_mva * self.alpha(e, x) * e.b * (theta[e.f] - theta[e.t] - e.shift)
    }

    fn sign(e: &Edge, flow: f64) -> f64 {
        if flow > 0.0 {
            1.0
        } else if flow < 0.0 {
            -1.0
        } else {
            e.base_sign
        }
    }

    fn triplets(&self, x: &[f64], theta: &[f64]) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        let base = self.net.base_mva;
        let mut t = self.template.clone();
        for (k, &p) in x[..self.gens.len()].iter().enumerate() {
            t[2 * k].2 = p * base;
            t[2 * k + 1].2 = p * base;
        }
        let flows: Vec<f64> = self.edges.iter().map(|e| self.flow(e, x, theta)).collect();
        for (e, &fl) in self.edges.iter().zip(&flows) {
            let s = if Self::sign(e, fl) > 0.0 { e.fwd } else { e.bwd };
            t[s].2 += fl.abs();
        }
        (t, flows)
    }

    /// Relaxed objective only.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let lu = self.factor(x)?;
        let theta = self.angles(&lu, x)?;
        let (t, _) = self.triplets(x, &theta);
        Ok(evaluate_flat(self.size, &t, self.log, false)?.0.r_eco)
    }

    /// Relaxed objective and its gradient in the decision variables.
    pub fn eval(&self, x: &[f64]) -> Result<Eval> {
        let base = self.net.base_mva;
        let lu = self.factor(x)?;
        let theta = self.angles(&lu, x)?;
        let (t, flows) = self.triplets(x, &theta);
        let (m, g) = evaluate_flat(self.size, &t, self.log, true)?;
        let g = g.expect("gradient requested");

        let nb = self.net.buses.len();
        let mut d_theta = vec![0.0; nb];
        for (e, &fl) in self.edges.iter().zip(&flows) {
            let s = Self::sign(e, fl);
            let gs = if s > 0.0 { g[e.fwd] } else { g[e.bwd] };
            let c = gs * s * base * self.alpha(e, x) * e.b;
            d_theta[e.f] += c;
            d_theta[e.t] -= c;
        }
        let lambda = crate::powerflow::dc::angles(self.net, &self.idx, &lu, &d_theta)?;

        let mut grad = vec![0.0; self.dim()];
        for (k, gv) in self.gens.iter().enumerate() {
            grad[k] = base * (g[2 * k] + g[2 * k + 1]) + lambda[gv.bus];
        }
        for (e, &fl) in self.edges.iter().zip(&flows) {
            if let Some(c) = e.cand {
                let s = Self::sign(e, fl);
                let gs = if s > 0.0 { g[e.fwd] } else { g[e.bwd] };
                let dth = theta[e.f] - theta[e.t];
                grad[self.gens.len() + c] = e.b * dth * (s * base * gs - (lambda[e.f] - lambda[e.t]));
            }
        }
        Ok(Eval { value: m.r_eco, grad })
    }

    /// DC flow solution on `apply_decisions(net, cands)` for a point whose
    /// α are all 0 or 1.
    pub fn flow_solution(&self, x: &[f64]) -> Result<FlowSolution> {
        let base = self.net.base_mva;
        let lu = self.factor(x)?;
        let theta = self.angles(&lu, x)?;
        let n_br = self.net.branches.len();
        let built: Vec<usize> = (0..self.n_cands()).filter(|&c| x[self.gens.len() + c] > 0.5).collect();
        let mut p_flow = vec![0.0; n_br + built.len()];
        let mut ei = 0;
        for (k, br) in self.net.branches.iter().enumerate() {
            if br.in_service {
                p_flow[k] = self.flow(&self.edges[ei], x, &theta);
                ei += 1;
            }
        }
        for (slot, &c) in built.iter().enumerate() {
            p_flow[n_br + slot] = self.flow(&self.edges[ei + c], x, &theta);
        }
        let mut p_gen = vec![0.0; self.net.generators.len()];
        for (g, &p) in self.gens.iter().zip(x) {
            p_gen[g.gen] = p * base;
        }
        let nb = self.net.buses.len();
        Ok(FlowSolution {
            model: Model::Dc,
            bus_ids: self.net.buses.iter().map(|b| b.id).collect(),
            theta,
            v: vec![1.0; nb],
            q_flow: vec![0.0; p_flow.len()],
            q_to: vec![0.0; p_flow.len()],
            p_to: p_flow.iter().map(|p| -p).collect(),
            p_flow,
            p_gen,
            q_gen: vec![0.0; self.net.generators.len()],
            p_loss_bus: vec![0.0; nb],
            p_shunt_bus: self.net.buses.iter().map(|b| b.g_shunt).collect(),
            converged: true,
            iterations: 0,
            max_mismatch: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testnets::*;

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let (net, cands) = four_bus();
        for order in [1, 3] {
            let m = DcModel::new(&net, &cands, order).unwrap();
            let x = vec![1.1, 0.9, 0.3, 0.6, 0.8];
            let g = m.eval(&x).unwrap().grad;
            for k in 0..x.len() {
                let h = 1e-6;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[k] += h;
                xm[k] -= h;
                let fd = (m.value(&xp).unwrap() - m.value(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-7 * (1.0 + fd.abs()), "order {order} var {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn one_sided_alpha_gradient_at_zero() {
        let (net, cands) = four_bus();
        let m = DcModel::new(&net, &cands, 1).unwrap();
        let x = vec![1.1, 0.9, 0.0, 0.0, 0.0];
        let g = m.eval(&x).unwrap().grad;
        for c in 0..3 {
            let h = 1e-7;
            let mut xp = x.clone();
            xp[2 + c] += h;
            let fd = (m.value(&xp).unwrap() - m.value(&x).unwrap()) / h;
            assert!((fd - g[2 + c]).abs() < 1e-5 * (1.0 + fd.abs()), "cand {c}: {fd} vs {}", g[2 + c]);
        }
    }
}

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;

use super::sparse::SparseLu;
use super::{check_connected, share, FlowSolution, Model};
use crate::error::Result;
use crate::grid::{Branch, BusKind, Network};

#[derive(Debug, Clone)]
pub struct AcOptions {
    /// Max absolute mismatch (pu) for convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// Switch PV buses to PQ when generator Q leaves its limits.
    pub enforce_q_limits: bool,
    /// Consecutive mismatch increases that declare divergence.
    pub divergence_window: usize,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions {
            tol: 1e-8,
            max_iter: 30,
            enforce_q_limits: true,
            divergence_window: 3,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Slack,
    Pv,
    Pq,
    Off,
}

/// Series and shunt admittances of one branch in the standard π model:
/// (y_ff, y_ft, y_tf, y_tt).
fn branch_admittance(br: &Branch) -> (Complex64, Complex64, Complex64, Complex64) {
    let ys = Complex64::new(br.r, br.x).inv();
    let bc = Complex64::new(0.0, br.b_charging / 2.0);
    let tap = Complex64::from_polar(br.tap(), br.shift);
    let ytt = ys + bc;
    let yff = ytt / (tap * tap.conj());
    let yft = -ys / tap.conj();
    let ytf = -ys / tap;
    (yff, yft, ytf, ytt)
}

struct Ybus {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl Ybus {
    fn new(net: &Network) -> Self {
        let n = net.buses.len();
        let mut acc: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); n];
        for (_, br) in net.in_service_branches() {
            let (f, t) = (net.idx(br.from_bus), net.idx(br.to_bus));
            let (yff, yft, ytf, ytt) = branch_admittance(br);
            *acc[f].entry(f).or_default() += yff;
            *acc[f].entry(t).or_default() += yft;
            *acc[t].entry(f).or_default() += ytf;
            *acc[t].entry(t).or_default() += ytt;
        }
        for (i, b) in net.buses.iter().enumerate() {
            *acc[i].entry(i).or_default() += Complex64::new(b.g_shunt, b.b_shunt) / net.base_mva;
        }
        Ybus {
            rows: acc.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }

    fn injections(&self, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = v.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for &(j, y) in &self.rows[i] {
                let (s, c) = (th[i] - th[j]).sin_cos();
                let vv = v[i] * v[j];
                p[i] += vv * (y.re * c + y.im * s);
                q[i] += vv * (y.re * s - y.im * c);
            }
        }
        (p, q)
    }
}

/// AC power flow from a flat start with default options.
pub fn solve_ac(net: &Network) -> Result<FlowSolution> {
    solve_ac_with(net, &AcOptions::default(), None)
}

/// Newton-Raphson AC power flow in polar form. A non-converged or
/// divergent run returns `converged = false` rather than an error; only an
/// islanded network is an error. `warm` supplies starting angles and
/// magnitudes keyed by bus id.
pub fn solve_ac_with(net: &Network, opts: &AcOptions, warm: Option<&FlowSolution>) -> Result<FlowSolution> {
    check_connected(net)?;
    let n = net.buses.len();
    let base = net.base_mva;
    let slack = net.slack_idx();
    let ybus = Ybus::new(net);

    let mut gens_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, g) in net.in_service_generators() {
        gens_at[net.idx(g.bus)].push(k);
    }
    let mut role: Vec<Role> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| match b.kind {
            BusKind::Isolated => Role::Off,
            _ if i == slack => Role::Slack,
            BusKind::Pv if !gens_at[i].is_empty() => Role::Pv,
            _ => Role::Pq,
        })
        .collect();

    // Scheduled injections (pu) excluding the P/Q that the solve determines.
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for (i, b) in net.buses.iter().enumerate() {
        p_spec[i] -= b.p_load / base;
        q_spec[i] -= b.q_load / base;
        for &k in &gens_at[i] {
            p_spec[i] += net.generators[k].p_set / base;
            q_spec[i] += net.generators[k].q_set / base;
        }
    }
    // PV and slack buses: gen Q is free, so drop the setpoint part.
    let q_load_only: Vec<f64> = net.buses.iter().map(|b| -b.q_load / base).collect();

    let mut v = vec![1.0; n];
    let mut th = vec![0.0; n];
    if let Some(w) = warm {
        let by_id: HashMap<usize, usize> = w.bus_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        for (i, b) in net.buses.iter().enumerate() {
            if let Some(&j) = by_id.get(&b.id) {
                if w.v[j].is_finite() && w.theta[j].is_finite() && w.v[j] > 0.0 {
                    v[i] = w.v[j];
                    th[i] = w.theta[j];
                }
            }
        }
    }
    for i in 0..n {
        if matches!(role[i], Role::Slack | Role::Pv) {
            if let Some(&k) = gens_at[i].first() {
                v[i] = net.generators[k].v_set;
            }
        }
        if role[i] == Role::Slack {
            th[i] = 0.0;
        }
    }

    let mut q_fixed: Vec<Option<f64>> = vec![None; n];
    let mut switched = vec![false; n];
    let mut total_iters = 0;
    let (mut converged, mut mismatch);
    loop {
        let q_target: Vec<f64> = (0..n)
            .map(|i| match q_fixed[i] {
                Some(qg) => q_load_only[i] + qg / base,
                None => q_spec[i],
            })
            .collect();
        let out = newton(&ybus, &role, &p_spec, &q_target, &mut v, &mut th, opts);
        total_iters += out.iterations;
        converged = out.converged;
        mismatch = out.mismatch;
        if !converged || !opts.enforce_q_limits {
            break;
        }
        let (_, q) = ybus.injections(&v, &th);
        let mut any = false;
        for i in 0..n {
            if role[i] != Role::Pv || switched[i] {
                continue;
            }
            let qg = q[i] * base + net.buses[i].q_load;
            let qmax: f64 = gens_at[i].iter().map(|&k| net.generators[k].q_max).sum();
            let qmin: f64 = gens_at[i].iter().map(|&k| net.generators[k].q_min).sum();
            let limit = if qg > qmax + 1e-9 {
                Some(qmax)
            } else if qg < qmin - 1e-9 {
                Some(qmin)
            } else {
                None
            };
            if let Some(lim) = limit {
                log::debug!("bus {} switches to PQ at Q = {lim} MVAr", net.buses[i].id);
                role[i] = Role::Pq;
                switched[i] = true;
                q_fixed[i] = Some(lim);
                any = true;
            }
        }
        if !any {
            break;
        }
    }

    let (p, q) = ybus.injections(&v, &th);
    let mut p_gen = vec![0.0; net.generators.len()];
    let mut q_gen = vec![0.0; net.generators.len()];
    for i in 0..n {
        let gens = &gens_at[i];
        if gens.is_empty() || role[i] == Role::Off {
            continue;
        }
        let b = &net.buses[i];
        if role[i] == Role::Slack {
            let w: Vec<f64> = gens.iter().map(|&k| net.generators[k].p_max.max(0.0)).collect();
            for (&k, pg) in gens.iter().zip(share(p[i] * base + b.p_load, &w)) {
                p_gen[k] = pg;
            }
        } else {
            for &k in gens {
                p_gen[k] = net.generators[k].p_set;
            }
        }
        if let Some(qg) = q_fixed[i] {
            let w: Vec<f64> = gens
                .iter()
                .map(|&k| {
                    let g = &net.generators[k];
                    if qg >= 0.0 { g.q_max } else { g.q_min }.abs()
                })
                .collect();
            for (&k, x) in gens.iter().zip(share(qg, &w)) {
                q_gen[k] = x;
            }
        } else if matches!(role[i], Role::Slack | Role::Pv) {
            let w: Vec<f64> = gens
                .iter()
                .map(|&k| (net.generators[k].q_max - net.generators[k].q_min).max(0.0))
                .collect();
            for (&k, x) in gens.iter().zip(share(q[i] * base + b.q_load, &w)) {
                q_gen[k] = x;
            }
        } else {
            for &k in gens {
                q_gen[k] = net.generators[k].q_set;
            }
        }
    }

    let nb = net.branches.len();
    let (mut p_flow, mut q_flow, mut p_to, mut q_to) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
    for (k, br) in net.in_service_branches() {
        let (f, t) = (net.idx(br.from_bus), net.idx(br.to_bus));
        let vf = Complex64::from_polar(v[f], th[f]);
        let vt = Complex64::from_polar(v[t], th[t]);
        let (yff, yft, ytf, ytt) = branch_admittance(br);
        let sf = vf * (yff * vf + yft * vt).conj() * base;
        let st = vt * (ytf * vf + ytt * vt).conj() * base;
        p_flow[k] = sf.re;
        q_flow[k] = sf.im;
        p_to[k] = st.re;
        q_to[k] = st.im;
    }
    let mut sol = FlowSolution {
        model: Model::Ac,
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        theta: th,
        p_shunt_bus: net.buses.iter().zip(&v).map(|(b, vi)| b.g_shunt * vi * vi).collect(),
        v,
        p_flow,
        q_flow,
        p_to,
        q_to,
        p_gen,
        q_gen,
        p_loss_bus: vec![0.0; n],
        converged,
        iterations: total_iters,
        max_mismatch: mismatch,
    };
    sol.p_loss_bus = super::aggregate_bus_losses(net, &sol);
    Ok(sol)
}

struct NewtonOutcome {
    converged: bool,
    iterations: usize,
    mismatch: f64,
}

fn newton(
    ybus: &Ybus,
    role: &[Role],
    p_spec: &[f64],
    q_spec: &[f64],
    v: &mut [f64],
    th: &mut [f64],
    opts: &AcOptions,
) -> NewtonOutcome {
    let n = v.len();
    let mut col_th = vec![None; n];
    let mut col_v = vec![None; n];
    let mut m = 0;
    for i in 0..n {
        if matches!(role[i], Role::Pv | Role::Pq) {
            col_th[i] = Some(m);
            m += 1;
        }
    }
    for i in 0..n {
        if role[i] == Role::Pq {
            col_v[i] = Some(m);
            m += 1;
        }
    }

    let residual = |v: &[f64], th: &[f64]| -> (Vec<f64>, f64, Vec<f64>, Vec<f64>) {
        let (p, q) = ybus.injections(v, th);
        let mut f = vec![0.0; m];
        for i in 0..n {
            if let Some(r) = col_th[i] {
                f[r] = p_spec[i] - p[i];
            }
            if let Some(r) = col_v[i] {
                f[r] = q_spec[i] - q[i];
            }
        }
        let norm = f.iter().fold(0.0_f64, |a, x| if x.is_nan() { f64::NAN } else { a.max(x.abs()) });
        (f, norm, p, q)
    };

    let (mut f, mut norm, mut p, mut q) = residual(v, th);
    let mut iterations = 0;
    let mut increases = 0;
    let mut prev = norm;
    let mut polished = false;
    loop {
        if !norm.is_finite() {
            return NewtonOutcome {
                converged: false,
                iterations,
                mismatch: norm,
            };
        }
        if norm <= opts.tol {
            // One extra step tightens the balance well below the tolerance.
            if iterations > 0 && !polished {
                polished = true;
            } else {
                return NewtonOutcome {
                    converged: true,
                    iterations,
                    mismatch: norm,
                };
            }
        } else if iterations >= opts.max_iter {
            return NewtonOutcome {
                converged: false,
                iterations,
                mismatch: norm,
            };
        }
        if norm > prev {
            increases += 1;
            if increases >= opts.divergence_window {
                return NewtonOutcome {
                    converged: false,
                    iterations,
                    mismatch: norm,
                };
            }
        } else {
            increases = 0;
        }
        prev = norm;

        let jac = jacobian(ybus, v, th, &p, &q, &col_th, &col_v);
        let dx = match SparseLu::factor(m, &jac, "Newton-Raphson Jacobian").and_then(|lu| lu.solve(&f)) {
            Ok(dx) => dx,
            Err(_) => {
                return NewtonOutcome {
                    converged: false,
                    iterations,
                    mismatch: norm,
                }
            }
        };
        for i in 0..n {
            if let Some(c) = col_th[i] {
                th[i] += dx[c];
            }
            if let Some(c) = col_v[i] {
                v[i] += dx[c];
            }
        }
        iterations += 1;
        let (nf, nn, np, nq) = residual(v, th);
        if polished {
            return NewtonOutcome {
                converged: nn <= opts.tol,
                iterations,
                mismatch: nn,
            };
        }
        f = nf;
        norm = nn;
        p = np;
        q = nq;
    }
}

fn jacobian(
    ybus: &Ybus,
    v: &[f64],
    th: &[f64],
    p: &[f64],
    q: &[f64],
    col_th: &[Option<usize>],
    col_v: &[Option<usize>],
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..v.len() {
        let (rp, rq) = (col_th[i], col_v[i]);
        if rp.is_none() && rq.is_none() {
            continue;
        }
        for &(j, y) in &ybus.rows[i] {
            let (g, b) = (y.re, y.im);
            let (dp_dth, dp_dv, dq_dth, dq_dv) = if i == j {
                (
                    -q[i] - b * v[i] * v[i],
                    p[i] / v[i] + g * v[i],
                    p[i] - g * v[i] * v[i],
                    q[i] / v[i] - b * v[i],
                )
            } else {
                let (s, c) = (th[i] - th[j]).sin_cos();
                (
                    v[i] * v[j] * (g * s - b * c),
                    v[i] * (g * c + b * s),
                    -v[i] * v[j] * (g * c + b * s),
                    v[i] * (g * s - b * c),
                )
            };
            if let Some(r) = rp {
                if let Some(c) = col_th[j] {
                    out.push((r, c, dp_dth));
                }
                if let Some(c) = col_v[j] {
                    out.push((r, c, dp_dv));
                }
            }
            if let Some(r) = rq {
                if let Some(c) = col_th[j] {
                    out.push((r, c, dq_dth));
                }
                if let Some(c) = col_v[j] {
                    out.push((r, c, dq_dv));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::testnets::*;

    #[test]
    fn two_bus_matches_closed_form() {
        let net = two_bus(0.1, 100.0);
        let sol = solve_ac(&net).unwrap();
        assert!(sol.converged);
        // P = V2 sin(-θ2)/x with Q2 = 0 gives θ2 = -asin(2x)/2, V2 = cos θ2.
        let th2 = -(0.2_f64).asin() / 2.0;
        assert!((sol.theta[1] - th2).abs() < 1e-8, "{} vs {th2}", sol.theta[1]);
        assert!((sol.v[1] - th2.cos()).abs() < 1e-8);
    }

    #[test]
    fn zero_load_is_flat() {
        let net = two_bus(0.1, 0.0);
        let sol = solve_ac(&net).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 0);
        assert!(sol.v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn heavy_load_does_not_converge() {
        let net = two_bus(0.1, 800.0);
        let sol = solve_ac(&net).unwrap();
        assert!(!sol.converged);
    }
}

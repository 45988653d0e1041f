//! Nonmonotone spectral projected gradient ascent on
//! {lo ≤ P ≤ hi, Σ P = D} × {α_lo ≤ α ≤ α_hi}.

use super::model::DcModel;
use crate::error::Result;

const MEMORY: usize = 10;
const SUFFICIENT: f64 = 1e-4;
const STEP_MIN: f64 = 1e-10;
const STEP_MAX: f64 = 1e10;

pub(crate) struct Feasible {
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
    pub demand: f64,
    pub a_lo: Vec<f64>,
    pub a_hi: Vec<f64>,
}

impl Feasible {
    pub fn new(model: &DcModel, a_lo: Vec<f64>, a_hi: Vec<f64>) -> Self {
        let (p_lo, p_hi) = model.gen_bounds();
        Feasible {
            p_lo,
            p_hi,
            demand: model.demand,
            a_lo,
            a_hi,
        }
    }

    /// Euclidean projection. The generator block is solved by bisection on
    /// the multiplier of the balance constraint.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let ng = self.p_lo.len();
        let mut out = y.to_vec();
        let clamp = |mu: f64, k: usize| (y[k] - mu).clamp(self.p_lo[k], self.p_hi[k]);
        let total = |mu: f64| (0..ng).map(|k| clamp(mu, k)).sum::<f64>();
        if ng > 0 {
            let mut lo = (0..ng).map(|k| y[k] - self.p_hi[k]).fold(f64::INFINITY, f64::min);
            let mut hi = (0..ng).map(|k| y[k] - self.p_lo[k]).fold(f64::NEG_INFINITY, f64::max);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if total(mid) > self.demand {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mu = 0.5 * (lo + hi);
            for (k, o) in out.iter_mut().enumerate().take(ng) {
                *o = clamp(mu, k);
            }
            // Put the last rounding residual on a unit with room to absorb it.
            let resid = self.demand - out[..ng].iter().sum::<f64>();
            if resid != 0.0 {
                if let Some(k) = (0..ng).find(|&k| {
                    let v = out[k] + resid;
                    v >= self.p_lo[k] && v <= self.p_hi[k]
                }) {
                    out[k] += resid;
                }
            }
        }
        for (c, o) in out[ng..].iter_mut().enumerate() {
            *o = o.clamp(self.a_lo[c], self.a_hi[c]);
        }
        out
    }
}

pub(crate) struct SpgOutcome {
    pub x: Vec<f64>,
    /// ‖P(x + ∇F) − x‖∞ at the returned point.
    pub kkt: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn kkt(set: &Feasible, x: &[f64], g: &[f64]) -> f64 {
    let y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + b).collect();
    inf_norm(&sub(&set.project(&y), x))
}

/// Maximizes the model's relaxed objective from `x0`. Errors only when the
/// objective cannot be evaluated at the projected start point.
pub(crate) fn maximize(model: &DcModel, set: &Feasible, x0: &[f64], tol: f64, max_iter: usize) -> Result<SpgOutcome> {
    let mut x = set.project(x0);
    let first = model.eval(&x)?;
    let (mut f, mut g) = (first.value, first.grad);
    let mut history = vec![f];
    let mut res = kkt(set, &x, &g);
    let mut step = if res > 0.0 { (1.0 / res).clamp(STEP_MIN, STEP_MAX) } else { 1.0 };
    let mut best = (x.clone(), f, res);
    let mut it = 0;
    while it < max_iter && res > tol {
        it += 1;
        let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
        let d = sub(&set.project(&trial), &x);
        let gd = dot(&g, &d);
        if gd <= 0.0 {
            break;
        }
        let f_ref = history.iter().rev().take(MEMORY).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut lambda = 1.0;
        let accepted = loop {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + lambda * b).collect();
            if let Ok(e) = model.eval(&xn) {
                if e.value.is_finite() && e.value >= f_ref + SUFFICIENT * lambda * gd {
                    break Some((xn, e));
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                break None;
            }
        };
        let Some((xn, e)) = accepted else { break };
        let s = sub(&xn, &x);
        let y = sub(&g, &e.grad);
        let sy = dot(&s, &y);
        step = if sy > 0.0 {
            (dot(&s, &s) / sy).clamp(STEP_MIN, STEP_MAX)
        } else {
            STEP_MAX
        };
        x = xn;
        f = e.value;
        g = e.grad;
        history.push(f);
        res = kkt(set, &x, &g);
        if f > best.1 || res <= tol {
            best = (x.clone(), f, res);
        }
    }
    let (x, _, res) = best;
    Ok(SpgOutcome {
        converged: res <= tol,
        x,
        kkt: res,
        iterations: it,
    })
}

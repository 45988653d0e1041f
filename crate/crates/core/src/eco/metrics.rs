use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::Serialize;

use super::EcoFlowMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EcoMetrics {
    /// Total system throughput, MW.
    pub tstp: f64,
    /// Ascendency, MW·bits.
    pub asc: f64,
    /// Development capacity, MW·bits.
    pub dc: f64,
    /// ASC/DC.
    pub a: f64,
    pub r_eco: f64,
}

/// Natural logarithm, or its odd series `2 Σ z^(2n−1)/(2n−1)` with
/// `z = (x−1)/(x+1)` truncated after `order` terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LogKind {
    Exact,
    Series(usize),
}

impl LogKind {
    fn ln(self, x: f64) -> f64 {
        match self {
            LogKind::Exact => x.ln(),
            LogKind::Series(k) => series_ln(x, k),
        }
    }

    fn dln(self, x: f64) -> f64 {
        match self {
            LogKind::Exact => 1.0 / x,
            LogKind::Series(k) => {
                if x.is_infinite() {
                    return 0.0;
                }
                let z = (x - 1.0) / (x + 1.0);
                let z2 = z * z;
                let mut sum = 0.0;
                let mut p = 1.0;
                for _ in 0..k {
                    sum += p;
                    p *= z2;
                }
                2.0 * sum * 2.0 / ((x + 1.0) * (x + 1.0))
            }
        }
    }

    fn log2(self, x: f64) -> f64 {
        self.ln(x) / LN_2
    }

    fn dlog2(self, x: f64) -> f64 {
        self.dln(x) / LN_2
    }
}

/// Truncated series for ln(x); finite on [0, ∞].
pub fn series_ln(x: f64, order: usize) -> f64 {
    let z = if x.is_infinite() { 1.0 } else { (x - 1.0) / (x + 1.0) };
    let z2 = z * z;
    let mut term = z;
    let mut sum = 0.0;
    for n in 1..=order {
        sum += term / (2 * n - 1) as f64;
        term *= z2;
    }
    2.0 * sum
}

/// Robustness as a function of a = ASC/DC: −a ln a.
pub fn exact_outer(a: f64) -> f64 {
    -a * a.ln()
}

/// Relaxed robustness −a·L(a) with the truncated series L.
pub fn relaxed_outer(a: f64, order: usize) -> f64 {
    -a * series_ln(a, order)
}

/// Metrics and optionally the gradient for a triplet list with unique
/// positions. Zero triplets are allowed: they do not contribute to the
/// metrics, and under the series logarithm they receive the one-sided
/// derivative as the entry grows from zero (the exact derivative there is
/// unbounded, so they get 0).
pub(crate) fn evaluate_flat(
    size: usize,
    t: &[(usize, usize, f64)],
    log: LogKind,
    want_grad: bool,
) -> Result<(EcoMetrics, Option<Vec<f64>>)> {
    let mut row = vec![0.0; size];
    let mut col = vec![0.0; size];
    let mut s = 0.0;
    for &(i, j, v) in t {
        row[i] += v;
        col[j] += v;
        s += v;
    }
    if !(s > 0.0) {
        return Err(Error::EmptyFlowMatrix);
    }
    let check = |x: f64| -> Result<f64> {
        if log != LogKind::Exact && !(x > 0.0) {
            Err(Error::NonPositiveLogArgument(x))
        } else {
            Ok(x)
        }
    };

    let (mut dc, mut asc) = (0.0, 0.0);
    for &(i, j, v) in t {
        if v > 0.0 {
            let u = check(v / s)?;
            let w = check(v * s / (row[i] * col[j]))?;
            dc -= v * log.log2(u);
            asc += v * log.log2(w);
        }
    }
    let a = if dc == 0.0 && asc == 0.0 { 1.0 } else { asc / dc };
    if !(a > 0.0) {
        return Err(Error::NonPositiveLogArgument(a));
    }
    let r_eco = -a * log.ln(a);
    let m = EcoMetrics {
        tstp: s,
        asc,
        dc,
        a,
        r_eco,
    };
    if !want_grad {
        return Ok((m, None));
    }
    if dc == 0.0 {
        return Ok((m, Some(vec![0.0; t.len()])));
    }

    let mut sum_u2 = 0.0;
    let mut h_row = vec![0.0; size];
    let mut h_col = vec![0.0; size];
    let mut h_tot = 0.0;
    for &(i, j, v) in t {
        if v > 0.0 {
            let u = v / s;
            sum_u2 += u * u * log.dlog2(u);
            let w = v * s / (row[i] * col[j]);
            let h = v * w * log.dlog2(w);
            h_row[i] += h;
            h_col[j] += h;
            h_tot += h;
        }
    }
    let dr_da = -log.ln(a) - a * log.dln(a);
    let grad = t
        .iter()
        .map(|&(k, l, v)| {
            let (d_dc, d_asc) = if v > 0.0 {
                let u = v / s;
                let w = v * s / (row[k] * col[l]);
                (
                    -log.log2(u) - u * log.dlog2(u) + sum_u2,
                    log.log2(w) + w * log.dlog2(w) + h_tot / s - h_row[k] / row[k] - h_col[l] / col[l],
                )
            } else if log == LogKind::Exact {
                return 0.0;
            } else {
                let w0 = match (row[k] > 0.0, col[l] > 0.0) {
                    (true, true) => 0.0,
                    (false, true) => s / col[l],
                    (true, false) => s / row[k],
                    (false, false) => f64::INFINITY,
                };
                let mut d_asc = log.log2(w0) + h_tot / s;
                if row[k] > 0.0 {
                    d_asc -= h_row[k] / row[k];
                }
                if col[l] > 0.0 {
                    d_asc -= h_col[l] / col[l];
                }
                (-log.log2(0.0) + sum_u2, d_asc)
            };
            dr_da * (d_asc - a * d_dc) / dc
        })
        .collect();
    Ok((m, Some(grad)))
}

fn triplets(efm: &EcoFlowMatrix) -> Vec<(usize, usize, f64)> {
    efm.entries().collect()
}

/// Exact metrics with base-2 logarithms for ASC/DC and the natural
/// logarithm in R_ECO = −a ln a.
pub fn eco_metrics_exact(efm: &EcoFlowMatrix) -> Result<EcoMetrics> {
    evaluate_flat(efm.size(), &triplets(efm), LogKind::Exact, false).map(|(m, _)| m)
}

/// Metrics with every logarithm replaced by its truncated series of the
/// given order (order 1 is `2(x−1)/(x+1)`).
pub fn eco_metrics_relaxed(efm: &EcoFlowMatrix, order: usize) -> Result<EcoMetrics> {
    if order == 0 {
        return Err(Error::Invalid("relaxation order must be at least 1".into()));
    }
    evaluate_flat(efm.size(), &triplets(efm), LogKind::Series(order), false).map(|(m, _)| m)
}

/// ∂R_ECO/∂T_ij for every positive entry.
pub fn eco_gradient(efm: &EcoFlowMatrix, relaxed: bool, order: usize) -> Result<BTreeMap<(usize, usize), f64>> {
    let log = if relaxed {
        if order == 0 {
            return Err(Error::Invalid("relaxation order must be at least 1".into()));
        }
        LogKind::Series(order)
    } else {
        LogKind::Exact
    };
    let t = triplets(efm);
    let (_, g) = evaluate_flat(efm.size(), &t, log, true)?;
    Ok(t.iter().zip(g.unwrap_or_default()).map(|(&(i, j, _), d)| ((i, j), d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> EcoFlowMatrix {
        EcoFlowMatrix::from_dense(&[
            vec![0.0, 100.0, 0.0, 0.0],
            vec![0.0, 0.0, 100.0, 0.0],
            vec![0.0, 0.0, 0.0, 100.0],
            vec![0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn single_chain_has_zero_robustness() {
        let m = eco_metrics_exact(&chain()).unwrap();
        assert!((m.a - 1.0).abs() < 1e-15);
        assert!(m.r_eco.abs() < 1e-15);
        for k in [1, 2, 5] {
            let r = eco_metrics_relaxed(&chain(), k).unwrap();
            assert!(r.r_eco.abs() < 1e-15);
        }
    }

    #[test]
    fn parallel_pathway_raises_robustness() {
        let mut efm = chain();
        let base = eco_metrics_exact(&efm).unwrap().r_eco;
        efm.add(1, 3, 1e-3).unwrap();
        assert!(eco_metrics_exact(&efm).unwrap().r_eco > base);
        let g = eco_gradient(&efm, false, 1).unwrap();
        assert!(g[&(1, 3)] > 0.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let efm = EcoFlowMatrix::from_dense(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert!(matches!(eco_metrics_exact(&efm), Err(Error::EmptyFlowMatrix)));
    }

    #[test]
    fn series_ln_is_odd_in_log_space() {
        for k in [1, 3, 8] {
            assert!((series_ln(3.0, k) + series_ln(1.0 / 3.0, k)).abs() < 1e-15);
        }
        assert!((series_ln(2.0, 60) - 2f64.ln()).abs() < 1e-14);
    }
}

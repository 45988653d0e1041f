mod common;

use ecogrid::eco::{
    build_efm, eco_gradient, eco_metrics_exact, eco_metrics_relaxed, series_ln, EcoFlowMatrix,
};
use ecogrid::powerflow::{solve_ac, solve_dc};
use proptest::prelude::*;

#[test]
fn rts24_efm_shape_and_sums() {
    let net = common::load("case24_ieee_rts.m");
    let sol = solve_dc(&net).unwrap();
    let efm = build_efm(&net, &sol, None).unwrap();
    assert_eq!(efm.size(), 24 + 33 + 3);
    let rows = efm.row_sums();
    let cols = efm.col_sums();
    assert!((rows[efm.import()] - sol.total_generation()).abs() < 1e-9);
    assert!((cols[efm.export()] - net.total_load()).abs() < 1e-9);
    for i in 0..24 {
        let a = efm.bus(i);
        assert!((rows[a] - cols[a]).abs() < 1e-9);
    }
}

#[test]
fn ac_matrices_balance_every_bus_and_carry_losses() {
    for name in ["case9.m", "case14.m", "case24_ieee_rts.m"] {
        let net = common::load(name);
        let sol = solve_ac(&net).unwrap();
        let efm = build_efm(&net, &sol, None).unwrap();
        let (rows, cols) = (efm.row_sums(), efm.col_sums());
        for i in 0..net.buses.len() {
            let a = efm.bus(i);
            assert!((rows[a] - cols[a]).abs() < 1e-7, "{name} bus {i}");
        }
        let loss = sol.total_branch_loss();
        assert!((cols[efm.dissipation()] - loss).abs() < 1e-7, "{name}");
        let m = eco_metrics_exact(&efm).unwrap();
        assert!(m.r_eco > 0.0 && m.asc <= m.dc);
    }
}

#[test]
fn bundled_base_cases_are_within_the_metric_bounds() {
    for name in common::CASES {
        let net = common::load(name);
        let m = eco_metrics_exact(&build_efm(&net, &solve_dc(&net).unwrap(), None).unwrap()).unwrap();
        assert!(m.a > 0.0 && m.a <= 1.0, "{name}");
        assert!(m.r_eco <= (-1.0f64).exp() + 1e-12, "{name}");
    }
}

fn efm_strategy() -> impl Strategy<Value = EcoFlowMatrix> {
    (3usize..8).prop_flat_map(|n| {
        proptest::collection::vec(proptest::option::weighted(0.5, 0.05..20.0f64), n * n).prop_map(move |cells| {
            let mut rows: Vec<Vec<f64>> = cells.chunks(n).map(|r| r.iter().map(|c| c.unwrap_or(0.0)).collect()).collect();
            // Keep at least two positive entries so the metrics are defined.
            rows[0][1] += 1.0;
            rows[1][2] += 2.0;
            EcoFlowMatrix::from_dense(&rows).unwrap()
        })
    })
}

/// Central differences of `f` over each positive entry, step relative to the entry.
fn finite_difference(efm: &EcoFlowMatrix, f: impl Fn(&EcoFlowMatrix) -> f64) -> Vec<((usize, usize), f64)> {
    let dense = efm.to_dense();
    efm.entries()
        .map(|(i, j, v)| {
            let h = 1e-5 * v;
            let mut up = dense.clone();
            let mut dn = dense.clone();
            up[i][j] += h;
            dn[i][j] -= h;
            let fu = f(&EcoFlowMatrix::from_dense(&up).unwrap());
            let fd = f(&EcoFlowMatrix::from_dense(&dn).unwrap());
            ((i, j), (fu - fd) / (2.0 * h))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ascendency_never_exceeds_capacity(efm in efm_strategy()) {
        let m = eco_metrics_exact(&efm).unwrap();
        prop_assert!(m.asc <= m.dc * (1.0 + 1e-12));
        prop_assert!(m.asc >= -1e-12);
        prop_assert!(m.r_eco <= (-1.0f64).exp() + 1e-12);
    }

    #[test]
    fn metrics_are_scale_invariant(efm in efm_strategy(), c in 1e-3..1e3f64) {
        let a = eco_metrics_exact(&efm).unwrap();
        let b = eco_metrics_exact(&efm.scaled(c)).unwrap();
        prop_assert!((a.r_eco - b.r_eco).abs() < 1e-10);
        prop_assert!((a.a - b.a).abs() < 1e-10);
        let ar = eco_metrics_relaxed(&efm, 2).unwrap();
        let br = eco_metrics_relaxed(&efm.scaled(c), 2).unwrap();
        prop_assert!((ar.r_eco - br.r_eco).abs() < 1e-10);
    }

    #[test]
    fn exact_gradient_matches_finite_differences(efm in efm_strategy()) {
        let g = eco_gradient(&efm, false, 0).unwrap();
        let fd = finite_difference(&efm, |m| eco_metrics_exact(m).unwrap().r_eco);
        let scale = fd.iter().fold(0.0f64, |s, (_, v)| s.max(v.abs()));
        for (k, v) in fd {
            prop_assert!((g[&k] - v).abs() <= 1e-6 * scale + 1e-9, "{k:?}: {} vs {v}", g[&k]);
        }
    }

    #[test]
    fn relaxed_gradient_matches_finite_differences(efm in efm_strategy(), order in 1usize..4) {
        let g = eco_gradient(&efm, true, order).unwrap();
        let fd = finite_difference(&efm, |m| eco_metrics_relaxed(m, order).unwrap().r_eco);
        let scale = fd.iter().fold(0.0f64, |s, (_, v)| s.max(v.abs()));
        for (k, v) in fd {
            prop_assert!((g[&k] - v).abs() <= 1e-6 * scale + 1e-9, "{k:?}: {} vs {v}", g[&k]);
        }
    }

    #[test]
    fn series_log_error_shrinks_with_order(x in 1e-3..1e3f64, k in 1usize..30) {
        let e1 = (series_ln(x, k) - x.ln()).abs();
        let e2 = (series_ln(x, k + 1) - x.ln()).abs();
        prop_assert!(e2 <= e1 + 1e-15);
    }
}

#![allow(dead_code)]

use std::path::PathBuf;

use ecogrid::grid::{parse_case, Network};

pub const CASES: &[&str] = &[
    "case5.m",
    "case9.m",
    "case14.m",
    "case24_ieee_rts.m",
    "case_ACTIVSg200.m",
    "case_ACTIVSg500.m",
    "case_ACTIVSg2000.m",
];

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn load(name: &str) -> Network {
    let text = std::fs::read_to_string(data_path(name)).expect("bundled case");
    parse_case(&text).expect("bundled case parses")
}

use ecogrid::grid::{Branch, Bus, BusKind, Generator};

pub fn bus(id: usize, kind: BusKind, p_load: f64) -> Bus {
    Bus {
        id,
        kind,
        p_load,
        q_load: 0.0,
        g_shunt: 0.0,
        b_shunt: 0.0,
        area: 1.0,
        vm: 1.0,
        va: 0.0,
        voltage_kv: 230.0,
        zone: 1.0,
        v_max: 1.1,
        v_min: 0.9,
        extra: Vec::new(),
    }
}

/// Lossless line without charging.
pub fn line(f: usize, t: usize, x: f64, s_max: f64) -> Branch {
    Branch::line(f, t, 0.0, x, 0.0, Some(s_max))
}

/// Slack bus 1 with one generator; other buses are PQ with the given loads.
pub fn radial_supply(loads: &[f64], branches: Vec<Branch>) -> Network {
    let mut buses = vec![bus(1, BusKind::Slack, 0.0)];
    for (i, &l) in loads.iter().enumerate() {
        buses.push(bus(i + 2, BusKind::Pq, l));
    }
    let total: f64 = loads.iter().sum();
    let g = Generator::new(1, total, 0.0, 10.0 * total + 100.0);
    Network::new("test", 100.0, buses, branches, vec![g]).unwrap()
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecogrid::assessment::{analyze, explore_topologies, run_contingencies, ContingencySpec, ElementKind};
use ecogrid::grid::{parse_case, write_case};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn ecogrid(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecogrid"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn malformed_case_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.m");
    fs::write(&bad, "function mpc = bad\nmpc.bus = [\n1 3 0 0;\n];\n").unwrap();
    let out = ecogrid(dir.path(), &["analyze", "--case", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = ecogrid(dir.path(), &["analyze", "--case", "/nonexistent/case.m"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn demand_above_capacity_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = parse_case(&fs::read_to_string(data("case9.m")).unwrap()).unwrap();
    for b in &mut net.buses {
        b.p_load *= 10.0;
    }
    let net = net.with_parts(net.buses.clone(), net.branches.clone(), net.generators.clone()).unwrap();
    let case = dir.path().join("heavy.m");
    fs::write(&case, write_case(&net, &[])).unwrap();
    let out = ecogrid(dir.path(), &["optimize", "--case", path_str(&case), "--generate", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn empty_candidate_file_returns_the_base_case() {
    let dir = tempfile::tempdir().unwrap();
    let cands = dir.path().join("none.tsv");
    fs::write(&cands, "# id\tfrom\tto\tr\tx\tb\ts_max\ttap\n").unwrap();
    let case = data("case9.m");
    let out = ecogrid(dir.path(), &["optimize", "--case", path_str(&case), "--candidates", path_str(&cands)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = json(&dir.path().join("result.json"));
    assert_eq!(res["built"], 0);
    assert_eq!(res["achieved_r_eco_structure"], res["base_r_eco"]);
    assert_eq!(res["status"], "optimal-within-budget");
    // The expanded case is the original network.
    let expanded = parse_case(&fs::read_to_string(dir.path().join("expanded_case.m")).unwrap()).unwrap();
    let original = parse_case(&fs::read_to_string(&case).unwrap()).unwrap();
    assert_eq!(expanded.branches, original.branches);
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().ends_with("_timings.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn optimize_is_deterministic() {
    let case = data("case14.m");
    let run = |dir: &Path| {
        let out = ecogrid(dir, &["--seed", "9", "optimize", "--case", path_str(&case), "--generate", "5", "--node-budget", "30"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(a.path()), run(b.path()));
    assert_eq!(outputs(a.path()), outputs(b.path()));
    assert!(a.path().join("optimize_timings.json").exists());
}

#[test]
fn analyze_rows_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("case24_ieee_rts.m");
    let out = ecogrid(dir.path(), &["analyze", "--case", path_str(&case)]);
    assert!(out.status.success());
    let row = &json(&dir.path().join("analyze.json"))["rows"][0];
    let net = parse_case(&fs::read_to_string(&case).unwrap()).unwrap();
    let mut lib = analyze(&net).unwrap();
    lib.case = "case24_ieee_rts".into();
    let lib = serde_json::to_value(&lib).unwrap();
    let (row, lib) = (row.as_object().unwrap(), lib.as_object().unwrap());
    assert_eq!(row.keys().collect::<Vec<_>>(), lib.keys().collect::<Vec<_>>());
    for (k, v) in lib {
        match (v.as_f64(), row[k].as_f64()) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{k}: {a} vs {b}"),
            _ => assert_eq!(&row[k], v, "{k}"),
        }
    }
    assert_eq!(json(&dir.path().join("analyze.json"))["seed"], 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("case24_ieee_rts"));
}

#[test]
fn explore_csv_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("case5.m");
    let out = ecogrid(dir.path(), &["--seed", "4", "--format", "csv", "explore", "--case", path_str(&case), "--max-links", "3"]);
    assert!(out.status.success());
    let net = parse_case(&fs::read_to_string(&case).unwrap()).unwrap();
    let lib = explore_topologies(&net, 3, 150, 4).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.path().join("explore.csv"))
        .unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), lib.len());
    for (row, p) in rows.iter().zip(&lib) {
        assert_eq!(row[1].parse::<usize>().unwrap(), p.added);
        assert_eq!(row[2].parse::<u128>().unwrap(), p.structure_id);
        assert_eq!(row[3].parse::<f64>().unwrap(), p.r_eco);
    }
    assert!(!dir.path().join("explore.json").exists());
}

#[test]
fn contingency_counts_and_resume() {
    let case = data("case14.m");
    let args = ["contingency", "--case", path_str(&case), "--depth", "1"];
    let full = tempfile::tempdir().unwrap();
    assert!(ecogrid(full.path(), &args).status.success());
    let summary = json(&full.path().join("contingency.json"));
    let net = parse_case(&fs::read_to_string(&case).unwrap()).unwrap();
    let lib = run_contingencies(&net, &ContingencySpec::new(1, ElementKind::Branch)).unwrap();
    assert_eq!(summary["total_cases"], net.in_service_branches().count());
    assert_eq!(summary["violations"], lib.violations);
    assert_eq!(summary["unsolved"], lib.unsolved);

    // Cut the per-case file after a few rows, plus half a line, and rerun.
    let text = fs::read_to_string(full.path().join("contingency.csv")).unwrap();
    let partial = tempfile::tempdir().unwrap();
    let keep: Vec<&str> = text.lines().take(12).collect();
    fs::write(partial.path().join("contingency.csv"), keep.join("\n") + "\n12,branch:1").unwrap();
    assert!(ecogrid(partial.path(), &args).status.success());
    assert_eq!(fs::read_to_string(partial.path().join("contingency.csv")).unwrap(), text);
}

#[test]
fn candidates_command_writes_a_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("case24_ieee_rts.m");
    let out = ecogrid(dir.path(), &["--seed", "3", "candidates", "--case", path_str(&case), "--generate", "7"]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("candidates.tsv")).unwrap();
    assert!(text.starts_with("# seed 3\n"));
    let set = ecogrid::grid::parse_candidates(&text, None).unwrap();
    assert_eq!(set.len(), 7);
    let net = parse_case(&fs::read_to_string(&case).unwrap()).unwrap();
    set.validate(&net).unwrap();
}

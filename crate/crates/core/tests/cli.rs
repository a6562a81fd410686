use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codemin::MulticastInstance;
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn codemin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codemin"))
        .args(args)
        .env_remove("CODEMIN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = codemin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_GA: [&str; 8] = ["--pop", "20", "--gens", "30", "--tournament", "5", "--mutation", "0.3"];

#[test]
fn fixtures_have_expected_shape() {
    let b = MulticastInstance::load(fixture("butterfly_B.json")).unwrap();
    assert_eq!((b.node_count(), b.link_count(), b.rate()), (7, 9, 2));
    assert_eq!(b.sink_flows(), vec![2, 2]);
    let bp = MulticastInstance::load(fixture("butterfly_Bprime.json")).unwrap();
    assert_eq!(bp.link_count(), 10);
    let zw = bp
        .links()
        .iter()
        .filter(|l| bp.node_name(l.tail) == "z" && bp.node_name(l.head) == "w")
        .count();
    assert_eq!(zw, 2);
}

#[test]
fn gen_writes_feasible_reproducible_instances() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let gen = |p: &Path| {
        ok(&["gen", "--nodes", "50", "--links", "87", "--sinks", "10", "--rate", "5", "--seed", "7", "-o", path_str(p)])
    };
    let line = gen(&a);
    gen(&b);
    assert!(line.contains("min_sink_flow="), "{line}");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let g = MulticastInstance::load(&a).unwrap();
    assert_eq!((g.node_count(), g.link_count(), g.sinks().len()), (50, 87, 10));
    assert!(g.sink_flows().iter().all(|&f| f >= 5));
    assert!(g.is_acyclic());
}

#[test]
fn gen_to_stdout_parses() {
    let text = ok(&["gen", "--nodes", "12", "--links", "24", "--sinks", "2", "--rate", "2", "--seed", "1"]);
    let g = MulticastInstance::from_json(&text).unwrap();
    assert_eq!(g.link_count(), 24);
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["gen", "--nodes", "5", "--links", "8", "--sinks", "1", "--rate", "0"],
        vec!["opt"],
        vec!["frobnicate"],
        vec!["opt", "/definitely/missing.json"],
    ] {
        assert_eq!(codemin(&args).status.code(), Some(2), "{args:?}");
    }
    let bad_pop = codemin(&["opt", path_str(&fixture("butterfly_B.json")), "--pop", "1"]);
    assert_eq!(bad_pop.status.code(), Some(2));
    let bad_hex = codemin(&["eval", path_str(&fixture("butterfly_B.json")), "--chromosome", "00000000:c0"]);
    assert_eq!(bad_hex.status.code(), Some(2));
}

#[test]
fn malformed_topology_exits_2() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"nodes":["s"],"links":[{"id":0,"from":"s","to":"x"}],"source":"s","sinks":["s"],"rate":1}"#)
        .unwrap();
    let out = codemin(&["opt", path_str(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("links[0]"));
}

#[test]
fn unachievable_rate_exits_3() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("r3.json");
    let mut doc = json(&std::fs::read_to_string(fixture("butterfly_B.json")).unwrap());
    doc["rate"] = 3.into();
    std::fs::write(&p, doc.to_string()).unwrap();
    for cmd in ["opt", "baseline", "compare"] {
        assert_eq!(codemin(&[cmd, path_str(&p)]).status.code(), Some(3), "{cmd}");
    }
}

fn cyclic_topology(dir: &Path) -> PathBuf {
    // butterfly plus a w -> z back link
    let mut doc = json(&std::fs::read_to_string(fixture("butterfly_B.json")).unwrap());
    doc["links"].as_array_mut().unwrap().push(serde_json::json!({"id": 9, "from": "w", "to": "z"}));
    let p = dir.join("cyclic.json");
    std::fs::write(&p, doc.to_string()).unwrap();
    p
}

#[test]
fn cyclic_instance_needs_prune_for_dist_and_algebraic() {
    let dir = TempDir::new().unwrap();
    let p = cyclic_topology(dir.path());
    for mode in [["--mode", "dist"], ["--method", "algebraic"]] {
        let mut args = vec!["opt", path_str(&p)];
        args.extend(mode);
        args.extend(SMALL_GA);
        let out = codemin(&args);
        assert_eq!(out.status.code(), Some(3), "{mode:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--acyclic-prune"));
        args.push("--acyclic-prune");
        let summary = json(&ok(&args));
        assert_eq!(summary["best"], 1);
        assert_eq!(summary["pruned_links"], 1);
    }
    // decomposition handles cycles directly
    let mut args = vec!["opt", path_str(&p)];
    args.extend(SMALL_GA);
    assert_eq!(json(&ok(&args))["best"], 1);
}

#[test]
fn opt_on_butterflies() {
    for (name, expected) in [("butterfly_B.json", 1), ("butterfly_Bprime.json", 0)] {
        let f = fixture(name);
        let mut args = vec!["opt", path_str(&f), "--mode", "central", "--repr", "block", "--seed", "11"];
        args.extend(SMALL_GA);
        let s = json(&ok(&args));
        assert_eq!(s["best"], expected, "{name}");
        assert_eq!(s["generations"], 30);
        assert_eq!(s["params"]["population_size"], 20);
        assert_eq!(s["seed"], 11);
        assert!(s["best"].as_u64() <= s["best_before_sweep"].as_u64());
    }
}

#[test]
fn opt_writes_csv_json_and_trace() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("run.csv");
    let js = dir.path().join("run.json");
    let trace = dir.path().join("run.jsonl");
    let f = fixture("butterfly_B.json");
    let mut args = vec![
        "opt",
        path_str(&f),
        "--csv",
        path_str(&csv),
        "--json",
        path_str(&js),
        "--trace",
        path_str(&trace),
    ];
    args.extend(SMALL_GA);
    let stdout = ok(&args);
    assert_eq!(std::fs::read_to_string(&js).unwrap(), stdout);
    let csv = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "generation,best,best_so_far,mean,feasible");
    assert_eq!(lines.len(), 31);
    let records: Vec<Value> = std::fs::read_to_string(&trace).unwrap().lines().map(json).collect();
    assert_eq!(records.len(), 30);
    assert_eq!(records[0]["generation"], 1);
}

#[test]
fn dist_trace_lines_are_json() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("dist.jsonl");
    let f = fixture("butterfly_B.json");
    let mut args = vec!["opt", path_str(&f), "--mode", "dist", "--trace", path_str(&trace)];
    args.extend(["--pop", "4", "--gens", "2", "--tournament", "2"]);
    ok(&args);
    let events: Vec<Value> = std::fs::read_to_string(&trace).unwrap().lines().map(json).collect();
    assert!(!events.is_empty());
    for key in ["time", "node", "kind", "bits"] {
        assert!(events.iter().all(|e| e.get(key).is_some()), "{key}");
    }
}

#[test]
fn dist_runs_are_byte_identical_across_schedulers() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("t.json");
    ok(&["gen", "--nodes", "20", "--links", "40", "--sinks", "3", "--rate", "2", "--seed", "4", "-o", path_str(&g)]);
    let run = |extra: &[&str], tag: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let mut args = vec!["opt", path_str(&g), "--mode", "dist", "--seed", "3", "--csv", path_str(&csv)];
        args.extend(["--pop", "10", "--gens", "5", "--tournament", "3"]);
        args.extend(extra);
        (ok(&args), std::fs::read(&csv).unwrap())
    };
    let a = run(&[], "a");
    let b = run(&[], "b");
    let c = run(&["--threads", "4"], "c");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn seed_env_var_is_default() {
    let f = fixture("butterfly_B.json");
    let out = Command::new(env!("CARGO_BIN_EXE_codemin"))
        .args(["opt", path_str(&f), "--pop", "4", "--gens", "2", "--tournament", "2"])
        .env("CODEMIN_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    let s = json(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(s["seed"], 77);
    assert_eq!(s["params"]["seed"], 77);
    let flagged = json(&ok(&["opt", path_str(&f), "--pop", "4", "--gens", "2", "--tournament", "2", "--seed", "5"]));
    assert_eq!(flagged["seed"], 5);
}

#[test]
fn config_file_overrides_defaults_and_flags_override_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("ga.json");
    std::fs::write(&cfg, r#"{"population_size": 12, "generations": 3, "tournament_size": 4, "mutation_rate": 0.05}"#)
        .unwrap();
    let f = fixture("butterfly_B.json");
    let s = json(&ok(&["opt", path_str(&f), "--config", path_str(&cfg), "--gens", "5"]));
    assert_eq!(s["params"]["population_size"], 12);
    assert_eq!(s["params"]["generations"], 5);
    assert_eq!(s["params"]["tournament_size"], 4);
    assert_eq!(s["params"]["mutation_rate"], 0.05);
    assert_eq!(s["params"]["crossover_probability"], 0.8);

    std::fs::write(&cfg, r#"{"population_size": 12, "colour": "blue"}"#).unwrap();
    assert_eq!(codemin(&["opt", path_str(&f), "--config", path_str(&cfg)]).status.code(), Some(2));
}

type Rows = Vec<(u64, String, u32)>;
type Table = Vec<(String, u32, f64, f64)>;

fn parse_baseline(text: &str) -> (Rows, Table) {
    let (rows, table) = text.split_once("\n\n").expect("two sections");
    let mut r = rows.lines();
    assert_eq!(r.next(), Some("seed,method,coding_links"));
    let rows = r
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    let mut t = table.lines();
    assert_eq!(t.next(), Some("method,best,avg,std"));
    let table = t
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    (rows, table)
}

#[test]
fn baseline_batch_layout_and_statistics() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("t.json");
    ok(&["gen", "--nodes", "30", "--links", "60", "--sinks", "4", "--rate", "3", "--seed", "2", "-o", path_str(&g)]);
    let text = ok(&["baseline", path_str(&g), "--method", "minimal1", "--trials", "30", "--seed", "100"]);
    let (rows, table) = parse_baseline(&text);
    assert_eq!(rows.len(), 30);
    assert_eq!(table.len(), 1);
    assert_eq!(rows[0].0, 100);
    assert_eq!(rows[29].0, 129);
    let values: Vec<f64> = rows.iter().map(|r| r.2 as f64).collect();
    let mean = values.iter().sum::<f64>() / 30.0;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 30.0).sqrt();
    let (_, best, avg, sd) = &table[0];
    assert_eq!(*best as f64, values.iter().cloned().fold(f64::INFINITY, f64::min));
    assert!((avg - mean).abs() < 1e-4);
    assert!((sd - std).abs() < 1e-4);
}

#[test]
fn baseline_on_butterfly_is_exactly_one() {
    let text = ok(&["baseline", path_str(&fixture("butterfly_B.json")), "--trials", "10"]);
    let (rows, table) = parse_baseline(&text);
    assert_eq!(rows.len(), 20);
    for (m, best, avg, std) in table {
        assert_eq!((best, avg, std), (1, 1.0, 0.0), "{m}");
    }
}

#[test]
fn compare_single_trial_and_rerun() {
    let f = fixture("butterfly_B.json");
    let args = ["compare", path_str(&f), "--trials", "1", "--pop", "20", "--gens", "10", "--seed", "9"];
    let a = ok(&args);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "method,best,avg,std,base_seed,trials");
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["block", "bit", "minimal1", "minimal2"]);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[3], "0.0000");
        assert_eq!(f[1].parse::<f64>().unwrap(), f[2].parse::<f64>().unwrap());
        assert_eq!((f[4], f[5]), ("9", "1"));
    }
    assert_eq!(a, ok(&args));
    let parallel: Vec<&str> = args.iter().copied().chain(["--jobs", "2"]).collect();
    assert_eq!(a, ok(&parallel));
}

#[test]
fn eval_reports_chromosome_fitness() {
    let f = fixture("butterfly_Bprime.json");
    let all = json(&ok(&["eval", path_str(&f), "--all-ones"]));
    assert_eq!(all["fitness"], 4);
    let hex = all["chromosome"].as_str().unwrap();
    let fp = hex.split(':').next().unwrap();
    // blocks z->w, z->w, w->t1, w->t2: a rides the first parallel link, b the second
    let s = json(&ok(&["eval", path_str(&f), "--chromosome", &format!("{fp}:96")]));
    assert_eq!(s["fitness"], 0);
    assert_eq!(s["feasible"], true);
    let z = json(&ok(&["eval", path_str(&f), "--chromosome", &format!("{fp}:00")]));
    assert_eq!(z["fitness"], "inf");
    assert_eq!(z["feasible"], false);
    let alg = json(&ok(&["eval", path_str(&f), "--chromosome", &format!("{fp}:96"), "--method", "algebraic"]));
    assert_eq!(alg["fitness"], 0);
}

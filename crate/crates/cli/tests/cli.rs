use serde_json::Value;
use std::collections::BTreeSet;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oversquash"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn of_type<'a>(lines: &'a [Value], t: &str) -> Vec<&'a Value> {
    lines.iter().filter(|v| v["type"] == t).collect()
}

#[test]
fn bounds_table_and_max_radius() {
    let o = run(&["bounds", "--table", "2..12"]);
    assert!(o.status.success());
    let expected = "r,min_d\n2,1\n3,1\n4,1\n5,3\n6,8\n7,19\n8,45\n9,106\n10,243\n11,548\n12,1224\n";
    assert_eq!(stdout(&o), expected);
    assert_eq!(stdout(&run(&["bounds"])), expected);
    assert_eq!(stdout(&run(&["bounds", "--max-r", "--d", "32"])), "d,max_r\n32,7\n");
    assert_eq!(stdout(&run(&["bounds", "--min-d", "--r", "5,8"])), "r,min_d\n5,3\n8,45\n");
    assert_eq!(stdout(&run(&["bounds", "--min-d", "--r", "2", "--variant", "appendix"])), "r,min_d\n2,1\n");
    assert_eq!(stdout(&run(&["bounds", "--max-r", "--d", "1,3"])), "d,max_r\n1,4\n3,5\n");
    let m3 = stdout(&run(&["bounds", "--min-d", "--r", "2", "--m", "3"]));
    assert_eq!(m3, "r,min_d\n2,1\n");
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        vec!["bounds", "--nope"],
        vec!["bounds", "--table", "2..4", "--max-r", "--d", "3"],
        vec!["bounds", "--max-r"],
        vec!["bounds", "--min-d"],
        vec!["bounds", "--min-d", "--r", "3", "--max-r", "--d", "3"],
        vec!["bounds", "--variant", "other"],
        vec!["bounds", "--m", "1"],
        vec!["train", "--trials", "0"],
        vec!["train", "--gnn", "gcn,gat"],
        vec!["train", "--gnn", "mlp"],
        vec!["train", "--fa-fraction", "2"],
        vec!["sweep-radius", "--depth", "4..2"],
        vec!["min-dim", "--d", "4,2"],
        vec!["frobnicate"],
        vec![],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--help"]).status.code(), Some(0));
}

#[test]
fn depth_two_dataset_is_exhaustive() {
    let dir = tempfile::tempdir().unwrap();
    let graphs = dir.path().join("graphs");
    let o = run(&["gen-data", "--depth", "2", "--graphs", graphs.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: BTreeSet<&str> = text.lines().collect();
    assert_eq!((text.lines().count(), lines.len()), (96, 96));

    let o = run(&["graph-stats", graphs.to_str().unwrap()]);
    assert!(o.status.success());
    let out = json_lines(&stdout(&o));
    let per_graph = of_type(&out, "graph");
    assert_eq!(per_graph.len(), 96);
    assert!(per_graph.iter().all(|g| g["diameter"] == 4 && g["nodes"] == 7));
    let agg = of_type(&out, "aggregate")[0];
    assert_eq!((agg["graphs"].clone(), agg["diameter_p90"].clone()), (96.into(), 4.into()));
    assert_eq!(agg["diameter_std"], 0.0);

    let o = run(&["gen-data", "--depth", "2", "--samples", "97"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn depth_three_tree_files_have_diameter_six() {
    let dir = tempfile::tempdir().unwrap();
    let graphs = dir.path().join("g");
    let g = graphs.to_str().unwrap();
    assert!(run(&["gen-data", "--depth", "3", "--samples", "12", "--graphs", g]).status.success());
    std::fs::write(graphs.join("notes.txt"), "not a graph").unwrap();
    let o = run(&["graph-stats", g, "--rf", "0:2", "--rf", "0:3", "--csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("file,nodes,edges,diameter,rf_0_2,rf_0_3"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.ends_with(",15,14,6,6,14")), "{rows:?}");

    let o = run(&["graph-stats", g, "--directed"]);
    let out = json_lines(&stdout(&o));
    assert!(of_type(&out, "graph").iter().all(|g| g["diameter"].is_null()));
    assert_eq!(of_type(&out, "aggregate")[0]["unreachable"], 12);
}

#[test]
fn graph_stats_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.graph");
    std::fs::write(&path, "n 4\ne 0 1\ne 1 2\ne 2 3\n").unwrap();
    let out = json_lines(&stdout(&run(&["graph-stats", path.to_str().unwrap()])));
    assert_eq!(out[0]["diameter"], 3);
    assert_eq!(out[0]["file"], path.to_str().unwrap());

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = run(&["graph-stats", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = json_lines(&stdout(&o));
    assert_eq!(out.len(), 1);
    assert_eq!(out[0]["graphs"], 0);
    assert!(out[0]["diameter_mean"].is_null());

    let bad = dir.path().join("bad.graph");
    std::fs::write(&bad, "n 3\ne 0 1\ne 0 x\n").unwrap();
    let o = run(&["graph-stats", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    assert_eq!(run(&["graph-stats", "/nonexistent/graphs"]).status.code(), Some(2));
    let o = run(&["graph-stats", path.to_str().unwrap(), "--rf", "9:1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_streams_epochs_and_summary() {
    let o = run(&["train", "--depth", "2", "--gnn", "gin", "--max-epochs", "4"]);
    assert!(o.status.success());
    let out = json_lines(&stdout(&o));
    assert_eq!(out.len(), 6);
    assert_eq!(out[0]["type"], "config");
    assert_eq!(out[0]["model"]["gnn_type"], "gin");
    assert_eq!(of_type(&out, "epoch").len(), 4);
    let summary = out.last().unwrap();
    assert_eq!((summary["type"].clone(), summary["stop_reason"].clone()), ("summary".into(), "max_epochs".into()));

    let o = run(&["train", "--max-epochs", "2", "--csv"]);
    assert_eq!(stdout(&o).lines().next(), Some("epoch,loss,train_acc,lr"));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"gnn": "ggnn", "depth": 2, "max_epochs": 5, "d": 8}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let out = json_lines(&stdout(&run(&["train", "--config", c])));
    assert_eq!(of_type(&out, "epoch").len(), 5);
    assert_eq!((out[0]["model"]["gnn_type"].clone(), out[0]["model"]["dim"].clone()), ("ggnn".into(), 8.into()));
    let out = json_lines(&stdout(&run(&["train", "--config", c, "--max-epochs", "2", "--gnn", "gat"])));
    assert_eq!(of_type(&out, "epoch").len(), 2);
    assert_eq!(out[0]["model"]["gnn_type"], "gat");

    std::fs::write(&cfg, r#"{"max_epoch": 5}"#).unwrap();
    assert_eq!(run(&["train", "--config", c]).status.code(), Some(1));
    assert_eq!(run(&["train", "--config", "/nonexistent.json"]).status.code(), Some(1));
}

#[test]
fn train_reads_dataset_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    let o = run(&["gen-data", "--chain", "3", "--samples", "10", "--out", data.to_str().unwrap()]);
    assert!(o.status.success());
    let out = json_lines(&stdout(&run(&["train", "--data", data.to_str().unwrap(), "--max-epochs", "1"])));
    assert_eq!(out[0]["samples"], 10);
    assert_eq!(out[0]["chain_len"], 3);
    assert_eq!(out[0]["model"]["num_layers"], 6);

    std::fs::write(&data, "2 1 perm:0,1,2,3\n2 9 perm:0,1,2,3\n").unwrap();
    let o = run(&["train", "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn divergence_exits_3() {
    let o = run(&["train", "--lr", "1e30", "--max-epochs", "20"]);
    assert_eq!(o.status.code(), Some(3));
    let out = json_lines(&stdout(&o));
    let summary = out.last().unwrap();
    assert_eq!(summary["failed"], true);
    assert_eq!(summary["stop_reason"], "diverged");

    let o = run(&["sweep-radius", "--depth", "2", "--gnn", "gcn", "--lr", "1e30", "--max-epochs", "20"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(of_type(&json_lines(&stdout(&o)), "run").len(), 1);
}

fn strip_wall_time(text: &str) -> String {
    text.lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            if let Some(obj) = v.as_object_mut() {
                obj.remove("wall_time_s");
            }
            v.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sweep_rows_are_canonical_and_worker_independent() {
    let args = [
        "sweep-radius", "--gnn", "gcn,gat", "--depth", "1..2", "--trials", "2", "--max-epochs", "6",
    ];
    let one = stdout(&run(&[&args[..], &["--workers", "1"]].concat()));
    let three = stdout(&run(&[&args[..], &["--workers", "3"]].concat()));
    assert_eq!(strip_wall_time(&one), strip_wall_time(&three));
    let out = json_lines(&one);
    let runs = of_type(&out, "run");
    let keys: Vec<(String, u64, u64)> = runs
        .iter()
        .map(|r| (r["gnn"].as_str().unwrap().to_string(), r["r"].as_u64().unwrap(), r["seed"].as_u64().unwrap()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by_key(|(g, r, s)| (["gcn", "gin", "gat", "ggnn"].iter().position(|x| x == g), *r, *s));
    assert_eq!(keys, sorted);
    assert_eq!(runs.len(), 8);
    let cells = of_type(&out, "cell");
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|c| c["trials"] == 2));
    assert!(runs.iter().all(|r| (0.0..=1.0).contains(&r["accuracy"].as_f64().unwrap())));
}

#[test]
fn sweep_csv_has_one_row_per_run() {
    let o = run(&["sweep-radius", "--gnn", "all", "--depth", "2", "--max-epochs", "2", "--csv"]);
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("gnn,r,chain_len,distance,d,fa,seed"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn min_dim_reports_not_reached_and_bound() {
    let o = run(&["min-dim", "--depth", "2", "--d", "1,2", "--max-epochs", "3", "--gnn", "gcn"]);
    assert!(o.status.success());
    let out = json_lines(&stdout(&o));
    assert_eq!(of_type(&out, "run").len(), 2);
    let summary = of_type(&out, "min_dim");
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0]["status"], "not_reached");
    assert!(summary[0]["empirical_min_d"].is_null());
    assert_eq!(summary[0]["combinatorial_min_d"], 1);
}

#[test]
fn chain_control_rows() {
    let o = run(&["chain-control", "--chain", "2,4", "--gnn", "ggnn", "--max-epochs", "2"]);
    assert!(o.status.success());
    let out = json_lines(&stdout(&o));
    let runs = of_type(&out, "run");
    let dist: Vec<u64> = runs.iter().map(|r| r["distance"].as_u64().unwrap()).collect();
    assert_eq!(dist, vec![4, 6]);
    assert!(runs.iter().all(|r| r["r"] == 2 && r["samples"] == 96));
}

#[test]
fn results_go_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.jsonl");
    let o = run(&["chain-control", "--chain", "2", "--gnn", "gcn", "--max-epochs", "1", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(json_lines(&std::fs::read_to_string(&out).unwrap()).len(), 2);
}

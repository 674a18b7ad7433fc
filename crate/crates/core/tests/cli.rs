use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcgraph::eval::predict_batch;
use pcgraph::io::{read_dataset, read_graph, read_split, read_table, write_split, write_table};
use pcgraph::{spice_learn_graph, validate_graph, NodeSplit, SolverConfig};

fn pcgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcgraph"))
        .args(args)
        .env_remove("PCGRAPH_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a synthetic dataset with `n` rows and returns its path.
fn synth(dir: &Path, n: usize) -> PathBuf {
    let data = dir.join("d.csv");
    let out = pcgraph(&["synth", "--out", s(&data), "--samples", &n.to_string(), "--seed", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    data
}

#[test]
fn learn_writes_a_valid_graph() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 300);
    for method in ["spice", "ls"] {
        let g = dir.path().join(format!("{method}.csv"));
        let out = pcgraph(&["learn", "--method", method, "--data", s(&data), "--out", s(&g)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let graph = read_graph(&g).unwrap();
        validate_graph(graph.weights()).unwrap();
        assert_eq!(graph.num_nodes(), 10);
        // the edge-list companion describes the same graph
        let edges = read_graph(pcgraph::io::edge_list_path(&g)).unwrap();
        assert_eq!(edges.weights(), graph.weights());
    }
}

#[test]
fn diagnostics_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 200);
    let g = dir.path().join("g.csv");
    let diag = dir.path().join("diag.jsonl");
    let out = pcgraph(&["learn", "--data", s(&data), "--out", s(&g), "--diagnostics", s(&diag)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&diag).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 10);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row["node"], k + 1);
        assert_eq!(row["certificate_holds"], true);
        assert!(row["sweeps"].as_u64().unwrap() >= 1);
    }
}

#[test]
fn learn_then_predict_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 400);
    let g = dir.path().join("g.csv");
    assert!(pcgraph(&["learn", "--data", s(&data), "--out", s(&g)]).status.success());

    let split = NodeSplit::new(vec![1, 3, 5, 7, 9], vec![0, 2, 4, 6, 8], 10).unwrap();
    let split_path = dir.path().join("split.json");
    write_split(&split_path, &split).unwrap();
    let full = read_dataset(&data).unwrap();
    let x0 = full.samples().select_columns(split.observed());
    let obs = dir.path().join("obs.csv");
    write_table(&obs, None, &x0).unwrap();
    let pred_path = dir.path().join("pred.csv");
    let out = pcgraph(&["predict", "--graph", s(&g), "--data", s(&obs), "--split", s(&split_path), "--out", s(&pred_path)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let graph = spice_learn_graph(&full, &SolverConfig::default()).unwrap();
    let expect = predict_batch(&graph, &x0, &split).unwrap();
    let got = read_table(&pred_path).unwrap().values;
    assert_eq!(got.shape(), expect.shape());
    assert!(got.iter().zip(expect.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));

    // standard output carries the same table
    let out = pcgraph(&["predict", "--graph", s(&g), "--data", s(&obs), "--split", s(&split_path)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), std::fs::read_to_string(&pred_path).unwrap());
}

#[test]
fn predict_rejects_mismatched_observations() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 100);
    let g = dir.path().join("g.csv");
    assert!(pcgraph(&["learn", "--method", "ls", "--data", s(&data), "--out", s(&g)]).status.success());
    let split_path = dir.path().join("split.json");
    std::fs::write(&split_path, r#"{"observed": [2, 4, 6], "targets": [1]}"#).unwrap();
    assert_eq!(read_split(&split_path, 10).unwrap().observed().len(), 3);
    // full dataset: ten columns where three are expected
    let out = pcgraph(&["predict", "--graph", s(&g), "--data", s(&data), "--split", s(&split_path)]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("10 columns") && msg.contains("3 observed"), "{msg}");
    assert!(msg.contains("--split"), "{msg}");
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = pcgraph(&["learn", "--data", s(&missing), "--out", "g.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.csv"));

    let out = pcgraph(&["learn", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = pcgraph(&["learn", "--method", "magic", "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
    let out = pcgraph(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(pcgraph(&["--help"]).status.code(), Some(0));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3\n").unwrap();
    let out = pcgraph(&["learn", "--data", s(&bad), "--out", s(&dir.path().join("g.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.csv"));

    let data = synth(dir.path(), 50);
    let out = pcgraph(&["learn", "--data", s(&data), "--out", "g.csv", "--tol=0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--tol"));
}

#[test]
fn synth_is_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let w = dir.path().join(format!("w-{name}"));
        let out = pcgraph(&["synth", "--out", s(&p), "--samples", "50", "--seed", seed, "--graph-out", s(&w)]);
        assert!(out.status.success(), "{}", stderr(&out));
        (std::fs::read(&p).unwrap(), std::fs::read(&w).unwrap())
    };
    assert_eq!(run("a.csv", "9"), run("b.csv", "9"));
    assert_ne!(run("c.csv", "10").0, run("a.csv", "9").0);
}

#[test]
fn stream_matches_batch_learn() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1500);
    let streamed = dir.path().join("stream.csv");
    let out = pcgraph(&["stream", "--data", s(&data), "--out", s(&streamed), "--checkpoints", "100,1000"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let batch = dir.path().join("batch.csv");
    assert!(pcgraph(&["learn", "--data", s(&data), "--out", s(&batch)]).status.success());
    let a = read_graph(&streamed).unwrap();
    let b = read_graph(&batch).unwrap();
    assert!((a.weights() - b.weights()).amax() < 1e-4);

    let full = read_dataset(&data).unwrap();
    for n in [100, 1000] {
        let cp = read_graph(dir.path().join(format!("stream.n{n}.csv"))).unwrap();
        let g = spice_learn_graph(&full.head(n), &SolverConfig::default()).unwrap();
        assert!((cp.weights() - g.weights()).amax() < 1e-4);
    }

    let out = pcgraph(&["stream", "--data", s(&data), "--out", s(&streamed), "--checkpoints", "2000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--checkpoints"));
}

#[test]
fn refgraph_from_coordinates_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let coords = dir.path().join("coords.csv");
    std::fs::write(&coords, "name,lat,lon\nA,0,0\nB,0,180\n").unwrap();
    let g = dir.path().join("geo.csv");
    let out = pcgraph(&["refgraph", "coords", "--data", s(&coords), "--out", s(&g)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let w = read_graph(&g).unwrap();
    assert!((w.get(0, 1) - (-0.5f64).exp()).abs() < 1e-15);

    let feats = dir.path().join("feats.csv");
    std::fs::write(&feats, "0,0\n1,0\n").unwrap();
    let g = dir.path().join("diff.csv");
    assert!(pcgraph(&["refgraph", "features", "--data", s(&feats), "--out", s(&g)]).status.success());
    assert!((read_graph(&g).unwrap().get(1, 0) - (-0.5f64).exp()).abs() < 1e-15);

    std::fs::write(&feats, "1,1\n1,1\n").unwrap();
    let out = pcgraph(&["refgraph", "features", "--data", s(&feats), "--out", s(&g)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
  "methods": ["spice", "ls", "true"],
  "n_grid": [50, 200],
  "repetitions": 4,
  "split": { "observed": [2, 4, 6, 8, 10], "targets": [1, 3, 5, 7, 9] },
  "seed": 2,
  "data": { "synthetic": { "graph": { "blocks": [5, 5], "inter_edges": 2, "seed": 1 }, "total_samples": 500 } }
}"#,
    )
    .unwrap();
    let report = dir.path().join("report.csv");
    let json = dir.path().join("report.json");
    let out = Command::new(env!("CARGO_BIN_EXE_pcgraph"))
        .args(["eval", "--config", s(&cfg), "--out", s(&report), "--json", s(&json)])
        .env("PCGRAPH_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("method,N,npe,npe_db,npe_se,nmse,nmse_raw,nnz,wall_ms"));
    let full: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(full["repetitions"].as_array().unwrap().len(), 4 * 3 * 2);

    // the same seed gives the same numbers regardless of thread count
    let again = pcgraph(&["eval", "--config", s(&cfg), "--threads", "1"]);
    assert!(again.status.success());
    let strip = |t: &str| -> Vec<String> {
        t.lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect()
    };
    assert_eq!(strip(&text), strip(&String::from_utf8(again.stdout).unwrap()));

    let out = pcgraph(&["eval", "--config", s(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["synth_fig2.json", "temperature.json", "eeg.json"] {
        let cfg: pcgraph::eval::ExperimentConfig = pcgraph::io::read_json(dir.join(name)).unwrap();
        assert!(!cfg.methods.is_empty(), "{name}");
    }
    let fig2: pcgraph::eval::ExperimentConfig = pcgraph::io::read_json(dir.join("synth_fig2.json")).unwrap();
    assert_eq!(fig2.n_grid, vec![100, 1000, 10000]);
    assert_eq!(fig2.repetitions, 100);
    fig2.resolve(&dir).unwrap();
}

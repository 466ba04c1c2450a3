use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_sewer-anomaly");
const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_gen.json");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn generated(&self) -> PathBuf {
        let data = self.path("data.csv");
        let out = run(&["gen", DEMO, p(&data)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        data
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

#[test]
fn gen_is_deterministic_and_writes_manifest() {
    let ws = Workspace::new();
    let a = ws.generated();
    let b = ws.path("again.csv");
    assert_eq!(code(&run(&["generate", DEMO, p(&b)])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("day,hour,instantaneous_flow,liquid_level,flow_rate,label\n"));
    assert!(text.contains(",abnormal\n"));

    let m = ws.json("data.csv.manifest.json");
    assert_eq!(m["format_version"], 1);
    assert_eq!(m["command"], "gen");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["length"], 4000);
    assert_eq!(m["outputs"][0], p(&a));
}

#[test]
fn train_eval_score_pipeline() {
    let ws = Workspace::new();
    let data = ws.generated();
    let model = ws.path("model.json");
    let out = run(&[
        "train", p(&data), p(&model), "--n-history", "5", "--p-future", "5", "--detector", "ensemble",
        "--seed", "3", "--split", "train",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = ws.json("model.json");
    assert_eq!(doc["format_version"], 1);
    assert_eq!(doc["window"]["n_history"], 5);
    assert_eq!(doc["detector"]["kind"], "ensemble");

    let report = ws.path("report.json");
    let out = run(&["eval", p(&model), p(&data), p(&report), "--split", "eval"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = ws.json("report.json");
    let ev = &r["evaluation"];
    for member in ["ocsvm", "iforest", "lof", "ensemble"] {
        assert!(ev["reports"][member]["f1"].is_number(), "{member}");
    }
    assert_eq!(ev["ensemble_is_intersection"], true);
    assert!(ev["reports"]["ensemble"]["precision"].as_f64().unwrap() >= 0.8);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ensemble  precision"));

    let scores = ws.path("scores.csv");
    let out = run(&["score", p(&model), p(&data), p(&scores)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&scores).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "source_id,day,hour,label,score,verdict,ocsvm,iforest,lof");
    let rows: Vec<&str> = lines.collect();
    let n_windows = r["composition"]["n_abnormal"].as_u64().unwrap() + r["composition"]["n_normal"].as_u64().unwrap();
    assert!(rows.len() as u64 > n_windows, "score covers every window, eval only the held-out ones");
    for row in &rows {
        let cells: Vec<&str> = row.split(',').collect();
        let members = &cells[6..];
        let all = members.iter().all(|&m| m == "abnormal");
        assert_eq!(cells[5] == "abnormal", all, "{row}");
    }
}

#[test]
fn single_detector_scores_are_written() {
    let ws = Workspace::new();
    let data = ws.generated();
    let model = ws.path("if.json");
    assert_eq!(code(&run(&["train", p(&data), p(&model), "--detector", "iforest", "--seed", "1"])), 0);
    let scores = ws.path("if.csv");
    assert_eq!(code(&run(&["score", p(&model), p(&data), p(&scores)])), 0);
    let text = fs::read_to_string(&scores).unwrap();
    let first = text.lines().nth(1).unwrap();
    let score: f64 = first.split(',').nth(4).unwrap().parse().unwrap();
    assert!(score > 0.0 && score <= 1.0);
}

#[test]
fn detector_config_overrides_defaults() {
    let ws = Workspace::new();
    let data = ws.generated();
    let cfg = ws.path("det.json");
    fs::write(&cfg, r#"{"lof": {"k": 7, "factor_threshold": 2.0}}"#).unwrap();
    let model = ws.path("lof.json");
    let out = run(&["train", p(&data), p(&model), "--detector", "lof", "--detector-config", p(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = ws.json("lof.json");
    assert_eq!(doc["detector"]["model"]["k"], 7);
    assert_eq!(doc["detector"]["threshold"], 2.0);

    fs::write(&cfg, r#"{"ocsvm": {"nu": 1.5}}"#).unwrap();
    let out = run(&["train", p(&data), p(&model), "--detector-config", p(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nu"), "{}", stderr(&out));
}

#[test]
fn sweep_writes_json_and_table() {
    let ws = Workspace::new();
    let data = ws.generated();
    let output = ws.path("sweep.json");
    let out = run(&["sweep", p(&data), p(&output), "--n-grid", "10,5", "--p-grid", "7", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = ws.json("sweep.json")["rows"].as_array().unwrap().clone();
    let ns: Vec<u64> = rows.iter().map(|r| r["n_history"].as_u64().unwrap()).collect();
    assert_eq!(ns, vec![5, 10]);
    let table = fs::read_to_string(ws.path("sweep.txt")).unwrap();
    assert!(table.starts_with("start"));
    assert_eq!(table.lines().count(), 3);
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
}

#[test]
fn replay_reproduces_outputs() {
    let ws = Workspace::new();
    let data = ws.generated();
    let model = ws.path("model.json");
    assert_eq!(code(&run(&["train", p(&data), p(&model), "--detector", "ensemble", "--seed", "4"])), 0);
    let first = fs::read(&model).unwrap();
    fs::remove_file(&model).unwrap();
    let out = run(&["replay", p(&ws.path("model.json.manifest.json"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&model).unwrap(), first);
}

#[test]
fn window_command_emits_feature_rows() {
    let ws = Workspace::new();
    let data = ws.generated();
    let output = ws.path("w.csv");
    assert_eq!(code(&run(&["window", p(&data), p(&output), "--n-history", "2", "--p-future", "3"])), 0);
    let text = fs::read_to_string(&output).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "flow_1,level_1,rate_1,flow_2,level_2,rate_2,label");
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 7));
}

#[test]
fn usage_and_data_errors_exit_2() {
    let ws = Workspace::new();
    let data = ws.generated();

    let out = run(&["sweep", p(&data), p(&ws.path("s.json")), "--n-grid", "", "--p-grid", "5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("at least one value"));

    let text = fs::read_to_string(&data).unwrap();
    let tiny = ws.path("tiny.csv");
    fs::write(&tiny, text.lines().take(4).collect::<Vec<_>>().join("\n")).unwrap();
    let out = run(&["train", p(&tiny), p(&ws.path("m.json")), "--n-history", "5", "--p-future", "5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no windows"), "{}", stderr(&out));

    let bad = ws.path("bad.csv");
    fs::write(&bad, "day,hour,instantaneous_flow,liquid_level,flow_rate,label\n1/1,0:00,-3,0.2,0.4,/\n").unwrap();
    let out = run(&["train", p(&bad), p(&ws.path("m.json"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));

    assert_eq!(code(&run(&["train", p(&data), p(&ws.path("m.json")), "--n-history", "0"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["eval", p(&ws.path("missing.json")), p(&data), p(&ws.path("r.json"))])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unwritable_output_is_internal_error() {
    let ws = Workspace::new();
    let out = run(&["gen", DEMO, p(&ws.path("no/such/dir/out.csv"))]);
    assert_eq!(code(&out), 1);
}

use std::path::Path;
use std::process::Command;

fn chainloc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chainloc"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_writes_estimates_tables_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(
        tmp.path(),
        "scn.json",
        r#"{"n_panels": 3, "n_steps": 6, "model": {"filter": {"n_particles": 256}}}"#,
    );
    let out = tmp.path().join("out");
    let st = chainloc()
        .args(["simulate", "--runs", "2", "--seed", "4", "--scenario"])
        .arg(&scn)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for f in ["estimates_run000.jsonl", "estimates_run001.jsonl", "rmse_over_time.csv", "runs.csv", "rmse_vs_time.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let lines = std::fs::read_to_string(out.join("estimates_run001.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 6);
    let first = lines.lines().next().unwrap();
    let at = |k: &str| first.find(&format!("\"{k}\":")).unwrap();
    let order = ["time", "x", "y", "vx", "vy", "detected"].map(at);
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{first}");
    let v: serde_json::Value = serde_json::from_str(first).unwrap();
    assert_eq!(v.as_object().unwrap().len(), 6);
}

#[test]
fn latency_table_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let params = write(tmp.path(), "p.json", "{}");
    let grid = write(tmp.path(), "g.json", r#"{"n_panels": [2, 4], "n_particles": [1024, 2048]}"#);
    let csv = tmp.path().join("lat.csv");
    let st = chainloc()
        .arg("latency")
        .arg("--params")
        .arg(&params)
        .arg("--grid")
        .arg(&grid)
        .arg("--out")
        .arg(&csv)
        .status()
        .unwrap();
    assert!(st.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "J,N_p,total_s");
    assert_eq!(text.lines().count(), 5);

    let st = chainloc()
        .arg("plot")
        .arg("--csv")
        .arg(&csv)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(st.status.success());
    assert!(tmp.path().join("latency_vs_np.svg").exists());
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "bad.json", r#"{"n_panels": 3, "colour": "red"}"#);
    let st = chainloc()
        .args(["simulate", "--scenario"])
        .arg(&scn)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).starts_with("error: "));

    let st = chainloc()
        .args(["simulate", "--runs", "0", "--scenario"])
        .arg(write(tmp.path(), "ok.json", "{}"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
}

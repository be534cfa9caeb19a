use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"preset = "fpsb_2_uniform"
runs = 1
[prior]
samples = 65536
[grids]
obs_points = 16
action_points = 16
[learner]
max_iterations = 200
[evaluation]
samples = 16384
plot_points = 20
"#;

fn soda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soda")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_config_is_reported() {
    let o = soda(&["solve", "--config", "missing.cfg"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("config not found: missing.cfg"), "{}", stderr(&o));
}

#[test]
fn unknown_preset_is_reported() {
    let o = soda(&["preset", "show", "no_such_preset"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown preset"));
}

#[test]
fn presets_are_listed_and_shown() {
    let o = soda(&["preset", "list"]);
    assert!(o.status.success());
    let list = stdout(&o);
    assert!(list.lines().any(|l| l.starts_with("fpsb_2_uniform ")));
    assert!(list.lines().any(|l| l.starts_with("llg_nb_g05_sofw ")));

    let o = soda(&["preset", "show", "fpsb_2_uniform"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("id = \"fpsb_2_uniform\""));
    assert!(text.contains("rule = \"soda1\""));
}

#[test]
fn solve_writes_artifacts_and_guards_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    let out_s = out.to_str().unwrap();

    let o = soda(&["solve", "--config", &cfg, "--out", out_s, "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 of 1 runs succeeded"));
    assert!(out.join("summary.csv").is_file());
    let run_dir = std::fs::read_dir(&out).unwrap().filter_map(|e| e.ok()).map(|e| e.path()).find(|p| p.is_dir()).expect("a run directory");
    for f in ["strategy_agent0.csv", "strategy_agent0.json", "strategy_agent1.csv", "metrics.csv", "plotdata.csv", "progress.jsonl", "meta.json"] {
        assert!(run_dir.join(f).is_file(), "missing {f}");
    }

    let again = soda(&["solve", "--config", &cfg, "--out", out_s]);
    assert!(!again.status.success());
    let forced = soda(&["solve", "--config", &cfg, "--out", out_s, "--force"]);
    assert!(forced.status.success(), "{}", stderr(&forced));

    let run_s = run_dir.to_str().unwrap();
    let ev = soda(&["evaluate", "--config", &cfg, "--strategies", run_s]);
    assert!(ev.status.success(), "{}", stderr(&ev));
    assert!(stdout(&ev).contains("agent 0: L = "));

    let other = soda(&["evaluate", "--preset", "risk_allpay_rho05_soda1", "--strategies", run_s]);
    assert!(!other.status.success());

    let vs = soda(&["probe-vs", "--config", &cfg, "--strategies", run_s]);
    assert!(vs.status.success(), "{}", stderr(&vs));
    let line = stdout(&vs).lines().find(|l| l.starts_with("vs_probe = ")).unwrap().to_owned();
    let value: f64 = line.trim_start_matches("vs_probe = ").parse().unwrap();
    assert!(value.is_finite());
}

#[test]
fn grid_sweep_reports_each_size() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("sweep");
    let o = soda(&["sweep", "--config", &cfg, "--grid", "8,16", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("8 ")));
    assert!(text.lines().any(|l| l.starts_with("16 ")));
    assert!(out.join("sweep.csv").is_file());
}

#[test]
fn sweep_needs_a_parameter() {
    let o = soda(&["sweep", "--preset", "fpsb_2_uniform"]);
    assert!(!o.status.success());
}

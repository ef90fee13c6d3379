//! Exit codes and outputs of the `basedb` binary.

use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"name = "minimal"
replications = 5

[instance]
name = "experiment"
signs = [1, 1, 1, 1]

[plan]
T = 1000
alpha = 0.2

[policy]
name = "oracle"
"#;

fn basedb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_basedb"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_run_writes_zero_regret_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "min.toml", MINIMAL);
    let o = basedb(&["run", "--config", &cfg, "--out", "out.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let hash_line = csv.lines().nth(1).unwrap();
    let hash = hash_line.strip_prefix("# config_hash=").unwrap();
    assert!(stdout(&o).contains(&format!("config_hash={hash}")));
    let rows: Vec<&str> = csv
        .lines()
        .filter(|l| l.starts_with("oracle-T1000,") && !l.contains(",-1,"))
        .collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.split(',').nth(8) == Some("0")));
}

#[test]
fn margin_product_above_one_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &MINIMAL.replace("alpha = 0.2", "alpha = 1.5"));
    let o = basedb(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha * beta <= 1"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &MINIMAL.replace("[policy]", "[policy]\ncolour = 3"),
    );
    let o = basedb(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn infeasible_plan_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("T = 1000", "T = 10\nM = 3")
        .replace("name = \"oracle\"", "name = \"basedb\"");
    let cfg = write(dir.path(), "inf.toml", &text);
    let o = basedb(&["run", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = basedb(&["plan", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = "name = \"v\"\n[instance]\nname = \"experiment\"\nsigns = [1, 1, 1, 1]\n[plan]\nT = 1000\nalpha = 0.2\nL = 2.0\n";
    let cfg = write(dir.path(), "ok.toml", ok);
    let o = basedb(&["verify", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let bad = ok.replace("signs = [1, 1, 1, 1]", "signs = [1, 1, 1, 1]\nL = 1.0");
    let cfg = write(dir.path(), "bad.toml", &bad);
    let o = basedb(&["verify", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    let constant = "name = \"c\"\n[instance]\nname = \"constant\"\nplus = 0.3\nminus = 0.6\n[plan]\nT = 1000\nalpha = 0.7\nbeta = 0.5\nL = 0.1\n";
    let cfg = write(dir.path(), "c.toml", constant);
    let o = basedb(&["verify", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn plan_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("T = 1000", "T = 50000\nM = 3\nL = 2.0")
        .replace("name = \"oracle\"", "name = \"basedb\"");
    let cfg = write(dir.path(), "p.toml", &text);
    let o = basedb(&["plan", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("basedb-T50000-M3"));
    assert!(out.contains("t_i"));
}

#[test]
fn reproduce_output_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let o = basedb(
        &["reproduce", "--figure", "fig3", "--reps", "3", "--out", "fig3.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
    let agg: Vec<&str> = csv.lines().filter(|l| l.split(',').nth(6) == Some("-1")).collect();
    assert_eq!(agg.len(), 6);
    assert_eq!(agg.iter().filter(|l| l.starts_with("online_bse")).count(), 1);

    let o = basedb(
        &["reproduce", "--figure", "thm4", "--reps", "2", "--out", "thm4.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("thm4.csv")).unwrap();
    let ratios = csv.lines().filter(|l| l.contains(",static_se/basedb,")).count();
    assert_eq!(ratios, 9);

    let o = basedb(
        &["reproduce", "--figure", "rates", "--reps", "2", "--out", "rates.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert!(csv
        .lines()
        .any(|l| l.starts_with("basedb-M3,") && l.contains("slope_fit")));

    let o = basedb(&["reproduce", "--figure", "fig9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    for (threads, out) in [("1", "a.csv"), ("3", "b.csv")] {
        let o = basedb(
            &[
                "reproduce",
                "--figure",
                "rates",
                "--reps",
                "4",
                "--threads",
                threads,
                "--out",
                out,
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tree_dump_lists_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let o = basedb(
        &[
            "reproduce",
            "--figure",
            "rates",
            "--reps",
            "2",
            "--out",
            "r.csv",
            "--tree-dump",
            "tree.csv",
            "--curves",
            "c.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tree = std::fs::read_to_string(dir.path().join("tree.csv")).unwrap();
    assert!(tree.starts_with("cell_id,batch,layer,index,width,arms_before,arms_after"));
    assert!(tree.lines().count() > 6);
    let curves = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(curves.lines().any(|l| l.starts_with("basedb-T131072-M3,131072,")));
}

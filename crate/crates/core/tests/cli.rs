use std::path::Path;
use std::process::{Command, Output};

use closest_balanced::game::{example_companies, random_game};
use serde_json::Value;

fn cbg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbg")).args(args).output().expect("run cbg")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write_game(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn project_companies() {
    let dir = tempfile::tempdir().unwrap();
    let game = write_game(dir.path(), "g.json", &example_companies().to_json());
    let vstar = dir.path().join("vstar.json");
    let out = dir.path().join("result.json");
    let o = cbg(&[
        "project",
        "--game",
        &game,
        "--oracle",
        "--vstar-out",
        vstar.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["status"], "converged");
    assert_eq!(v["x_star_2dp"][0], 22.26);
    assert!(v["oracle"]["max_discrepancy"].as_f64().unwrap() < 1e-6);

    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["tool"], "cbg");
    assert_eq!(meta["subcommand"], "project");
    assert!(meta["started_unix"].as_u64().unwrap() > 0);

    // v* is balanced and classifies without error
    let vs = vstar.to_str().unwrap();
    let c = cbg(&["check", "--game", vs]);
    assert!(c.status.success());
    assert_eq!(json(&c)["balanced"], true);
    let c = cbg(&["check", "--game", &game]);
    assert_eq!(json(&c)["balanced"], false);
    let k = cbg(&["classify", "--game", vs]);
    assert!(k.status.success());
    assert_eq!(json(&k)["singleton"], true);
}

#[test]
fn cycle_without_restarts_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let game = write_game(
        dir.path(),
        "cycle.json",
        r#"{"n":4,"values":{"1":-48,"2":-32,"3":25,"4":-74,"12":12,"13":100,"14":-60,"23":62,
            "24":-35,"34":32,"123":54,"124":29,"134":21,"234":-75,"1234":57}}"#,
    );
    let o = cbg(&["project", "--game", &game, "--max-restarts", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["status"], "cycle_unresolved");
    let o = cbg(&["project", "--game", &game]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_game(dir.path(), "bad.json", r#"{"n":3,"values":{"14":1}}"#);
    assert_eq!(cbg(&["project", "--game", &bad]).status.code(), Some(1));
    assert_eq!(cbg(&["project", "--game", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(cbg(&["simulate", "faces", "--n", "6"]).status.code(), Some(1));
    assert_eq!(cbg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cbg(&["--version"]).status.code(), Some(0));
}

#[test]
fn check_large_game_uses_projection() {
    let dir = tempfile::tempdir().unwrap();
    let g = random_game(7, 10.0, 3, Some(0.0)).unwrap();
    let game = write_game(dir.path(), "g7.json", &g.to_json());
    let o = cbg(&["check", "--game", &game]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["method"], "projection");
    assert_eq!(v["balanced"], false);
}

#[test]
fn mbc_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("mbc4.txt");
    let o = cbg(&["mbc", "--n", "4", "--out", cache.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(json(&o)["collections"], 41);
    let g = write_game(dir.path(), "g.json", &example_companies().to_json());
    let o = cbg(&["check", "--game", &g, "--mbc", cache.to_str().unwrap()]);
    assert_eq!(json(&o)["method"], "catalog");
    assert_eq!(cbg(&["mbc", "--n", "6"]).status.code(), Some(1));
}

#[test]
fn simulations_are_reproducible() {
    let args = ["simulate", "singleton", "--n", "3", "--L", "10", "--trials", "300", "--seed", "4"];
    let a = cbg(&args);
    let b = cbg(&[&args[..], &["--threads", "1"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("n,half_width,trials,seed,singleton"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn faces_csv_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("faces.csv");
    let o = cbg(&["simulate", "faces", "--n", "3", "--trials", "500", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let summary = json(&o);
    assert_eq!(summary["failures"], 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("signature,count,proportion,se,singleton,tight_union_rank"));
    assert!(dir.path().join("faces.csv.meta.json").exists());
}

#[test]
fn analytic_rows_and_matrix_counts() {
    let o = cbg(&["analytic3", "--row", "B1", "--trials", "20"]);
    assert!(o.status.success());
    assert_eq!(json(&o)["passed"], true);
    assert_eq!(cbg(&["analytic3", "--row", "B9"]).status.code(), Some(1));

    let o = cbg(&["simulate", "mn", "--n", "4"]);
    let v = json(&o);
    assert_eq!(v["m_n"], 528);
    assert_eq!(v["b_nn"], 22);

    let o = cbg(&["simulate", "matrices", "--n-min", "3", "--n-max", "4", "--trials", "2000"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);

    let o = cbg(&["bench", "--n", "3:4", "--trials", "5"]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("n,trials,mean_iterations"));
}

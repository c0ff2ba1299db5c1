//! End-to-end checks of the binary: exit codes, output shapes, and the
//! documented CSV headers.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_horoprod"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(args: &[&str]) -> Output {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preset_path(name: &str) -> String {
    format!("{}/presets/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn refuses_without_config_or_preset() {
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn unknown_preset_is_usage_error() {
    let o = run(&["verify-distance", "--preset", "dl99"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dl99"));
}

#[test]
fn verify_distance_passes_on_presets() {
    for preset in ["dl22", "dl23", "gw-uniform123"] {
        let o = run(&["verify-distance", "--preset", preset, "--radius", "3"]);
        assert_eq!(o.status.code(), Some(0), "{preset}: {}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("mismatches: 0"), "{preset}: {out}");
    }
}

#[test]
fn config_file_and_unknown_field_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(
        &good,
        "[left]\nkind = \"homogeneous\"\nchildren = 2\n\
         [right]\nkind = \"homogeneous\"\nchildren = 2\n\
         [params]\nradius = 2\n",
    )
    .unwrap();
    let o = run_in(dir.path(), &["verify-distance", "--config", "good.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("radius: 2"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[left]\nkind = \"homogeneous\"\nchildren = 2\n\
         [right]\nkind = \"homogeneous\"\nchildren = 2\n\
         [params]\nwa1ks = 5\n",
    )
    .unwrap();
    let o = run_in(dir.path(), &["verify-distance", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wa1ks"), "{}", stderr(&o));
}

#[test]
fn geodesics_trivial_adjacent_and_parse_errors() {
    let o = run(&["geodesics", "--preset", "dl22", "(0:[]|0:[])", "(0:[]|0:[])"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("distance: 0"));
    assert!(out.contains("geodesics: 1"));
    assert!(out.contains("case: (iii)"));

    let o = run(&["geodesics", "--preset", "dl22", "(0:[]|0:[])", "(1:[]|0:[0])"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("case: (i)"));
    assert!(out.contains("distance: 1"));
    assert!(out.contains("geodesics: 1"));
    assert!(out.contains("(0:[]|0:[]) (1:[]|0:[0])"));

    let o = run(&["geodesics", "--preset", "dl22", "nonsense", "(0:[]|0:[])"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nonsense"));

    // height-balanced but aliasing a spine vertex: rejected on validation
    let o = run(&["geodesics", "--preset", "dl22", "(1:[0]|0:[])", "(0:[]|0:[])"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not canonical"));
}

#[test]
fn geodesic_count_matches_brute_force_on_equal_height_pair() {
    use horoprod::oracle::ProductBall;
    use horoprod::{HoroProduct, PointedTreeEnv, ProductVertex};

    let x = "(0:[0,0]|2:[])";
    let y = "(0:[1,1]|2:[])";
    let o = run(&["geodesics", "--preset", "dl22", x, y]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("case: (iii)"));
    assert!(out.contains("distance: 4"));
    let reported: usize = out
        .lines()
        .find_map(|l| l.strip_prefix("geodesics: "))
        .expect("count line")
        .parse()
        .unwrap();

    let g = HoroProduct::new(
        PointedTreeEnv::homogeneous(2, "l").unwrap(),
        PointedTreeEnv::homogeneous(2, "r").unwrap(),
    );
    let ball = ProductBall::materialize(&g, &g.origin(), 8);
    let xv: ProductVertex = x.parse().unwrap();
    let yv: ProductVertex = y.parse().unwrap();
    let (paths, truncated) = ball.all_shortest_paths(
        ball.index_of(&xv).unwrap(),
        ball.index_of(&yv).unwrap(),
        10_000,
    );
    assert!(!truncated);
    assert_eq!(reported, paths.len());
}

#[test]
fn simulate_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--preset",
        "dl23",
        "--n",
        "300",
        "--walks",
        "8",
        "--seed",
        "5",
    ];
    let o = run_in(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("cross-check: drift sign predicts Upper"));
    let csv1 = std::fs::read(dir.path().join("paths.csv")).unwrap();
    let json1 = std::fs::read(dir.path().join("paths.json")).unwrap();
    let header = String::from_utf8_lossy(&csv1);
    assert!(header.starts_with("walk,step,height,distance_from_start,vertex\n"));

    let dir2 = tempfile::tempdir().unwrap();
    let o = run_in(dir2.path(), &args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv1, std::fs::read(dir2.path().join("paths.csv")).unwrap());
    assert_eq!(json1, std::fs::read(dir2.path().join("paths.json")).unwrap());
}

#[test]
fn eqrel_sample_relation_and_random_batteries_pass() {
    let dir = tempfile::tempdir().unwrap();
    let rel = preset_path("sample-relation.toml");
    let o = run_in(dir.path(), &["eqrel", "--relation", &rel]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("passed: 1, failed: 0"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eqrel.json")).unwrap()).unwrap();
    let r = &report["relations"][0];
    assert_eq!(r["ok"], serde_json::Value::Bool(true));
    assert_eq!(r["reversible"], serde_json::Value::Bool(true));
    assert_eq!(r["stationary_measure"], "mu");
    assert!(r["entropy_checks"].as_array().unwrap().len() == 10);

    let o = run_in(dir.path(), &["eqrel", "--count", "4", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("failed: 0"));
}

#[test]
fn eqrel_file_errors_carry_line_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "classes = [0, 0]\nmu = [1.0, oops]\n").unwrap();
    let o = run_in(
        dir.path(),
        &["eqrel", "--relation", path.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    // well-formed TOML, bad semantics: kernel row crosses classes
    let path = dir.path().join("cross.toml");
    std::fs::write(
        &path,
        "classes = [0, 1]\nmu = [1.0, 1.0]\nkernel = [[0.0, 1.0], [1.0, 0.0]]\n",
    )
    .unwrap();
    let o = run_in(
        dir.path(),
        &["eqrel", "--relation", path.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("crosses classes"), "{}", stderr(&o));
}

#[test]
fn entropy_csv_head_and_budget_exit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["entropy", "--preset", "dl22", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("increments nonincreasing: true"));
    let csv = std::fs::read_to_string(dir.path().join("entropy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,entropy,increment"));
    assert_eq!(lines.next(), Some("0,0,"));
    assert_eq!(
        lines.next(),
        Some("1,1.3862943611198906,1.3862943611198906")
    );

    let o = run_in(
        dir.path(),
        &["entropy", "--preset", "dl23", "--n", "15", "--budget", "10000"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("budget"));
}

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmcert"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mmcert-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn reproduce_example1() {
    let o = run(&["reproduce", "example1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("# mmcert "));
    assert!(s.contains("phi(3,1,2) = 1"));
    assert!(s.contains("verdict = gas-certified"));
    assert_eq!(s.matches("= empty").count(), 3);
}

#[test]
fn reproduce_examples_2_and_3() {
    let o = run(&["reproduce", "example2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("diverging sliding"));
    let o = run(&["reproduce", "example3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict = gas-certified"));
}

#[test]
fn malformed_config_is_usage_error() {
    let d = scratch("bad");
    let p = d.join("bad.cfg");
    std::fs::write(
        &p,
        "[system]\ndim = 2\nmode 1 { A = [[1, 0], [0 1]]; region = all }\n",
    )
    .unwrap();
    let o = run(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("3:26"));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    let o = run(&[
        "grad",
        config("example1.cfg").to_str().unwrap(),
        "--at",
        "1,2,3",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_mode_not_certified() {
    let d = scratch("unstable");
    let p = d.join("unstable.cfg");
    std::fs::write(
        &p,
        "[system]\ndim = 2\nmode 1 { A = [[1, 0], [0, 0.5]]; region = all }\n",
    )
    .unwrap();
    let o = run(&["certify", p.to_str().unwrap(), "--budget", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("search = not found"));
    assert!(s.contains("verdict = not-certified"));
}

#[test]
fn certify_given_basis() {
    let o = run(&["certify", config("example1.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("[margins]") && s.contains("holds = true"));
    // the report re-parses as a config
    let body: String = s.lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert!(mmcert::sysdsl::parse_config(&body).is_ok());
}

#[test]
fn clarke_flags_line_lie_does_not() {
    let v = mmcert::problem::example1_lines()[0];
    let dir = format!("{},{}", v[0], v[1]);
    let cfg = config("example1.cfg");
    let c = run(&[
        "decrease",
        cfg.to_str().unwrap(),
        "--samples",
        "10",
        "--clarke",
        "--along",
        &dir,
    ]);
    assert_eq!(c.status.code(), Some(1));
    assert!(stdout(&c).contains("status = violated"));
    let l = run(&[
        "decrease",
        cfg.to_str().unwrap(),
        "--samples",
        "10",
        "--along",
        &dir,
    ]);
    assert_eq!(l.status.code(), Some(0));
    assert!(stdout(&l).contains("violations = 0"));
}

#[test]
fn outputs_are_reproducible_with_headers() {
    let d = scratch("out");
    let cfg = config("example1.cfg");
    let args = [
        "simulate",
        cfg.to_str().unwrap(),
        "--from",
        "-1,1",
        "--horizon",
        "5",
        "--seed",
        "4",
        "--out-dir",
        d.to_str().unwrap(),
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    assert!(s.lines().next().unwrap().ends_with("seed=4"));
    assert_eq!(s.lines().nth(1), Some("t,x1,x2,regime,lambda,V"));
    let csv = std::fs::read_to_string(d.join("trajectory.csv")).unwrap();
    assert_eq!(csv, s);
    let svg = std::fs::read_to_string(d.join("portrait.svg")).unwrap();
    assert!(svg.starts_with("<!-- mmcert ") && svg.contains("<svg"));
}

#[test]
fn query_commands() {
    let cfg = config("example1.cfg");
    let o = run(&["phi", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.starts_with("phi(")).count(),
        6
    );
    let o = run(&[
        "lie",
        config("example2.cfg").to_str().unwrap(),
        "--at",
        "1,1",
    ]);
    assert!(stdout(&o).contains("lambda = point"));
    let o = run(&["decompose", cfg.to_str().unwrap()]);
    assert!(stdout(&o).contains("reduced blocks = 4"));
    let o = run(&[
        "validate",
        config("example3.cfg").to_str().unwrap(),
        "--samples",
        "2000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("valid = true"));
}

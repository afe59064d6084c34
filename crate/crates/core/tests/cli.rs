use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_survey-design");

const CORAL: [&str; 13] = [
    "--sigma-p", "0.16", "--sigma-b", "0.047", "--d", "0.058", "--cost-collect", "1",
    "--cost-primary", "10", "--cost-aux", "0", "--outdir",
];

fn run(args: &[&str], outdir: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SURVEY_DESIGN_OUTDIR").env_remove("RUST_LOG");
    if let Some(dir) = outdir {
        cmd.arg(dir);
    }
    cmd.output().unwrap()
}

fn plan(extra: &[&str], outdir: &Path) -> Output {
    let mut args = vec!["plan"];
    args.extend(extra);
    args.extend(CORAL);
    run(&args, Some(outdir))
}

#[test]
fn plan_writes_the_coral_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = plan(&["--budget", "440"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(json["chosen"]["design"], "hybrid-offset");
    assert_eq!(json["chosen"]["n_b"], 54);
    assert_eq!(json["chosen"]["n_a"], 5);
    assert_eq!(json["budgets"][0]["hybrid_offset"]["n_b"], 220);

    let tradeoff = std::fs::read_to_string(dir.path().join("tradeoff.csv")).unwrap();
    let mut lines = tradeoff.lines();
    assert_eq!(lines.next(), Some("n_b,n_a"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], first[1]);

    let diff = std::fs::read_to_string(dir.path().join("tsc_diff.csv")).unwrap();
    assert_eq!(diff.lines().count(), 201);
    assert!(String::from_utf8_lossy(&out.stdout).contains("hybrid-offset"));
}

#[test]
fn nearest_rounding_reproduces_the_unrepaired_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = plan(&["--rounding", "nearest", "--design", "hybrid-offset"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!((json["chosen"]["n_b"].as_u64(), json["chosen"]["n_a"].as_u64()), (Some(53), Some(5)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["plan", "--no-such-flag"], None).status.code(), Some(1));
    assert_eq!(run(&["plan", "--sigma-p", "0.16"], Some(dir.path())).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(1));
    assert_eq!(run(&["--help"], None).status.code(), Some(0));
    // a budget too small for any design
    assert_eq!(plan(&["--budget", "5"], dir.path()).status.code(), Some(2));
    assert_eq!(plan(&["--sigma-p", "-1"], dir.path()).status.code(), Some(1));
}

#[test]
fn estimate_reads_a_paired_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("samples.csv");
    std::fs::write(&input, "sample_id,aux_value,primary_value\na,0.5,0.4\nb,0.7,\nc,0.3,0.2\nd,0.9,\n").unwrap();
    let out = run(
        &["estimate", "--input", input.to_str().unwrap(), "--outdir"],
        Some(&dir.path().join("out")),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // aux mean 0.6, offset 0.1
    let line = stdout.lines().find(|l| l.starts_with("hybrid-offset")).unwrap();
    let value: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
    assert!((value - 0.5).abs() < 1e-12);
    assert!(dir.path().join("out/estimate.json").exists());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "sample_id,aux_value,primary_value\na,1.5,0.4\n").unwrap();
    let out = run(&["estimate", "--input", bad.to_str().unwrap(), "--outdir"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--mu-p", "0.3", "--sigma-p", "0.16", "--sigma-b", "0.047", "--cost-collect", "1",
        "--cost-primary", "10", "--cost-aux", "0", "--budget", "120,600", "--replicates", "200",
        "--seed", "4", "--outdir",
    ];
    let a = run(&args, Some(&dir.path().join("a")));
    let b = run(&args, Some(&dir.path().join("b")));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let read = |d: &str| std::fs::read(dir.path().join(d).join("simulation.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert!(b.status.success());
}

#[test]
fn flags_override_the_config_file_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        "# coral\nsigma_p = 0.16\nsigma-b = 0.047\nd = 0.058\ncost-collect = 1\ncost-primary = 10\ncost-aux = 0\n",
    )
    .unwrap();
    let out = run(
        &["plan", "--config", config.to_str().unwrap(), "--d", "0.03", "--outdir"],
        Some(dir.path()),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overrides"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert!(json["chosen"]["n_b"].as_u64().unwrap() > 100);

    std::fs::write(&config, "sigma-p = 0.16\nbogus = 1\n").unwrap();
    let out = run(&["plan", "--config", config.to_str().unwrap(), "--outdir"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn outdir_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["plan"];
    args.extend(&CORAL[..CORAL.len() - 1]);
    let out = Command::new(BIN)
        .args(&args)
        .env("SURVEY_DESIGN_OUTDIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("plan.json").exists());
}

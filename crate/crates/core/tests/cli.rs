use std::fs;
use std::path::Path;

use specvm::cli::cli_main;
use specvm::harness::{read_csv, Strategy, Trace, CSV_HEADER};
use specvm::ir::print_program;
use specvm::suites::{hashcode::hashcode_program, suite_by_name};

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("specvm").chain(args.iter().copied());
    let code = cli_main(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "# quick run\nforks = 2\nwarmup_iterations = 1\nmeasure_iterations = 2\nops_per_iteration = 5\nparameter_values = 1, 2, 3\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_one() {
    let (code, _, err) = run(&["bench", "--suite", "nosuch", "--strategy", "do-nothing"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown suite `nosuch`"), "{err}");
    let (code, _, err) = run(&["bench", "--suite", "hashcode", "--strategy", "sometimes"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown strategy"), "{err}");
    assert_eq!(run(&["bench", "--suite", "hashcode"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["bench", "--suite", "hashcode", "--strategy", "trace"]).0, 1);
    assert_eq!(run(&["bench", "--suite", "collections", "--strategy", "manual-pollute"]).0, 1);
    assert_eq!(run(&["bench", "--suite", "hashcode", "--strategy", "do-nothing", "--log", "jit"]).0, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("bench") && out.contains("report"));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(dir.path(), "missing.trace");
    let (code, _, err) = run(&["replay", "--suite", "hashcode", "--trace", &missing]);
    assert_eq!(code, 2);
    assert!(err.contains("missing.trace"), "{err}");

    let bad_cfg = p(dir.path(), "bad.cfg");
    fs::write(&bad_cfg, "forks = 1\nturbo = yes\n").unwrap();
    let (code, _, err) = run(&["bench", "--suite", "hashcode", "--strategy", "do-nothing", "--config", &bad_cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown key `turbo`"), "{err}");

    let bad_csv = p(dir.path(), "bad.csv");
    fs::write(&bad_csv, "a,b\n1,2\n").unwrap();
    assert_eq!(run(&["report", "--a", &bad_csv]).0, 2);

    let bad_prog = p(dir.path(), "bad.sx");
    fs::write(&bad_prog, "(fn \"f\" 0 0 (const 1)").unwrap();
    assert_eq!(run(&["validate", "--program", &bad_prog]).0, 2);
}

#[test]
fn bench_writes_one_row_per_parameter_fork_and_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = p(dir.path(), "do.csv");
    let (code, stdout, err) = run(&["bench", "--suite", "hashcode", "--strategy", "do-nothing", "--config", &cfg, "--out", &out]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("hashcode_ft_32 vs baseline"), "{stdout}");
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    // two benchmarks x 3 parameters x 2 forks x (1 + 2) iterations
    assert_eq!(text.lines().count() - 1, 2 * 3 * 2 * 3);

    let (code, stdout, _) = run(&["bench", "--suite", "hashcode", "--strategy", "do-nothing", "--config", &cfg, "--seed", "9"]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with(CSV_HEADER));
}

#[test]
fn default_configuration_arithmetic() {
    let s = suite_by_name("hashcode").unwrap();
    let spec = s.spec("baseline", Strategy::DoNothing, &s.defaults).unwrap();
    let rows = spec.parameter_values.len() as u32 * spec.forks * (spec.warmup_iterations + spec.measure_iterations);
    assert_eq!(rows, 64 * 5 * 10);
}

#[test]
fn record_replay_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let trace = p(dir.path(), "geo.trace");
    let (code, stdout, err) = run(&[
        "record", "--suite", "hashcode", "--workload", "trace_geometric", "--target", "baseline", "--out", &trace,
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("recorded 1000 calls"), "{stdout}");
    assert_eq!(Trace::read(Path::new(&trace)).unwrap().len(), 1000);
    assert_eq!(run(&["record", "--suite", "hashcode", "--workload", "nope", "--target", "baseline", "--out", &trace]).0, 1);

    let replayed = p(dir.path(), "trace.csv");
    let (code, _, err) = run(&["replay", "--suite", "hashcode", "--trace", &trace, "--config", &cfg, "--out", &replayed]);
    assert_eq!(code, 0, "{err}");
    let results = read_csv(fs::File::open(&replayed).unwrap()).unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r.strategy == "trace" && r.params() == vec![0]));

    let polluted = p(dir.path(), "po.csv");
    let direct = p(dir.path(), "do.csv");
    for (strategy, out) in [("manual-pollute", &polluted), ("do-nothing", &direct)] {
        let (code, _, err) = run(&["bench", "--suite", "hashcode", "--strategy", strategy, "--config", &cfg, "--out", out]);
        assert_eq!(code, 0, "{err}");
    }
    let (code, table, err) = run(&["report", "--a", &direct, "--b", &polluted]);
    assert_eq!(code, 0, "{err}");
    let header = table.lines().next().unwrap();
    for col in ["workload", "min", "max", "geomean"] {
        assert!(header.contains(col), "{header}");
    }
    assert!(table.contains("hashcode/hashcode_ft_32") && table.contains("do-nothing / manual-pollute"), "{table}");
}

#[test]
fn validate_accepts_printed_programs() {
    let dir = tempfile::tempdir().unwrap();
    let path = p(dir.path(), "hash.sx");
    fs::write(&path, print_program(&hashcode_program())).unwrap();
    let (code, out, err) = run(&["validate", "--program", &path]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("ok:"), "{out}");

    fs::write(&path, "(fn \"a\" 0 0 (get 3))").unwrap();
    let (code, _, err) = run(&["validate", "--program", &path]);
    assert_eq!(code, 2);
    assert!(err.contains("invalid program"), "{err}");
}

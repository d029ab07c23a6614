//! Acceptance run: one PASS/FAIL line per criterion, with its wall time
//! against the allowed budget. Exits nonzero when any criterion fails.
//!
//! Benchmark criteria use one fork and shortened iteration counts. Forks
//! with one seed are identical and per-op costs are exact after warmup, so
//! this changes no ratio; it only keeps the run inside the budgets.

mod common;

use std::cmp::Ordering;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{counts_from_store, deopts_by_key, random_program, random_script, Reference};
use specvm::cli::cli_main;
use specvm::config::RunConfig;
use specvm::harness::{
    geomean, record_trace, run_benchmark, speedup_table, summarize, Phase, RunResult, RunRow, Strategy,
};
use specvm::interp::{call_site_morphism, poly_hash_oracle, CostModel, Morphism};
use specvm::ir::{FuncId, SiteId, Value};
use specvm::jit::{CNode, CompiledMethod, KindTag};
use specvm::runtime::{Tier, VmInstance};
use specvm::suites::hashcode::{hashcode_program, BASELINE, FT32};
use specvm::suites::stream::{is_operator, QUERIES};
use specvm::suites::{suite_by_name, SuiteDefinition};

type Verdict = Result<String, String>;
/// Number, name, time budget in seconds, check.
type Criterion = (u32, &'static str, u64, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn short(reps: u32, ops: u64) -> RunConfig {
    RunConfig {
        forks: 1,
        warmup_iterations: reps,
        measure_iterations: 2,
        ops_per_iteration: ops,
        ..RunConfig::default()
    }
}

fn run(suite: &SuiteDefinition, bench: &str, strategy: Strategy, cfg: &RunConfig) -> Result<RunResult, String> {
    let spec = suite.spec(bench, strategy, cfg).map_err(|e| e.to_string())?;
    run_benchmark(&spec).map_err(|e| e.to_string())
}

// 1 ------------------------------------------------------------------------

fn hash_equivalence() -> Verdict {
    let p = Arc::new(hashcode_program());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<Vec<i8>> = (0..10_000)
        .map(|_| {
            let n = rng.gen_range(0..1000);
            (0..n).map(|_| rng.gen()).collect()
        })
        .collect();

    let mut interp = VmInstance::interpreter_only(Arc::clone(&p), CostModel::default());
    // Warmed on every length class: generic code, no deopts expected.
    let mut steady = VmInstance::new(Arc::clone(&p), CostModel::default());
    for len in (0..=40).chain([0, 7, 33]) {
        let b = vec![1i8; len];
        steady.invoke(BASELINE, vec![Value::bytes(&b)]).unwrap();
        steady.invoke(FT32, vec![Value::bytes(&b)]).unwrap();
    }
    steady.compiled(BASELINE).ok_or("baseline not compiled after warmup")?;
    let generic = steady.compiled(FT32).ok_or("ft32 not compiled after warmup")?;
    ensure(generic.speculations.is_empty(), || format!("broad warmup still speculated: {}", generic.log_line(&p)))?;

    let mut forced = 0;
    for (i, b) in inputs.iter().enumerate() {
        let expect = Value::Int(poly_hash_oracle(b));
        let arg = || vec![Value::bytes(b)];
        for (what, got) in [
            ("interpreted baseline", interp.invoke(BASELINE, arg())),
            ("interpreted ft32", interp.invoke(FT32, arg())),
            ("compiled baseline", steady.invoke(BASELINE, arg())),
            ("compiled ft32", steady.invoke(FT32, arg())),
        ] {
            ensure(got.as_ref() == Ok(&expect), || format!("{what} differs on input {i}: {got:?}"))?;
        }
        if i % 10 == 0 {
            // Specialize ft32 to a length this input does not have, then run it.
            let other = (b.len() % 32 + 1) % 33;
            let mut vm = VmInstance::new(Arc::clone(&p), CostModel::default());
            let warm = vec![3i8; other.max(1)];
            while vm.compiled(FT32).is_none() {
                vm.invoke(FT32, vec![Value::bytes(&warm)]).unwrap();
            }
            let got = vm.invoke(FT32, arg());
            ensure(got.as_ref() == Ok(&expect), || format!("deopting ft32 differs on input {i}"))?;
            forced += vm.cost().deopt_events;
        }
    }
    ensure(steady.cost().deopt_events == 0, || "unexpected deopt in steady VM".into())?;
    ensure(forced == 1000, || format!("expected 1000 forced deopts, saw {forced}"))?;
    Ok(format!("10000 arrays agree in 4 modes; {forced} forced deopts agree"))
}

// 2, 3 -----------------------------------------------------------------------

fn hash_table(strategy: &str) -> Result<(Vec<(i64, f64)>, f64), String> {
    let s = suite_by_name("hashcode").map_err(|e| e.to_string())?;
    let strategy = s.strategy(strategy, None).map_err(|e| e.to_string())?;
    let cfg = short(3, 1000);
    let ft = run(&s, "hashcode_ft_32", strategy.clone(), &cfg)?;
    let base = run(&s, "baseline", strategy, &cfg)?;
    let t = speedup_table(&ft, &base).map_err(|e| e.to_string())?;
    Ok((t.ratios, t.geomean))
}

fn sterile_speedup() -> Verdict {
    let (ratios, g) = hash_table("do-nothing")?;
    ensure(ratios.len() == 64, || format!("{} lengths", ratios.len()))?;
    let low: Vec<_> = ratios.iter().filter(|(l, r)| *l <= 32 && *r < 1.0).collect();
    ensure(low.is_empty(), || format!("ft32 slower at {low:?}"))?;
    ensure(g > 1.0, || format!("geomean {g:.4}"))?;
    let min = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let max = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(format!("min {min:.4}x max {max:.4}x geomean {g:.4}x; >= 1 on lengths 1..32"))
}

fn pollution_reversal() -> Verdict {
    let (ratios, g) = hash_table("manual-pollute")?;
    let slower = ratios.iter().filter(|(l, r)| *l <= 32 && *r < 1.0).count();
    ensure(g < 1.0, || format!("geomean {g:.4}"))?;
    ensure(slower > 16, || format!("ft32 slower on only {slower} of 32 lengths"))?;
    Ok(format!("geomean {g:.4}x; ft32 slower on {slower}/32 short lengths"))
}

// 4 ------------------------------------------------------------------------

fn trace_agreement() -> Verdict {
    let s = suite_by_name("hashcode").map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for w in &s.trace_workloads {
        let trace = Arc::new(record_trace(&s.program, w.workload, w.target).map_err(|e| e.to_string())?);
        let modal = trace.modal_value().ok_or("empty trace")?;
        let cost = |bench: &str, strategy: Strategy, cfg: &RunConfig, param: i64| -> Result<f64, String> {
            run(&s, bench, strategy, cfg)?.mean_cost_per_op(param).map_err(|e| e.to_string())
        };
        let replay = short(3, trace.len() as u64);
        let t = Strategy::TraceReplay(Arc::clone(&trace));
        let replay_diff = cost("hashcode_ft_32", t.clone(), &replay, 0)? - cost("baseline", t, &replay, 0)?;
        let at_mode = RunConfig {
            parameter_values: Some(vec![modal]),
            ..short(3, 1000)
        };
        let pollute = s.strategy("manual-pollute", None).map_err(|e| e.to_string())?;
        let pollute_diff = cost("hashcode_ft_32", pollute.clone(), &at_mode, modal)? - cost("baseline", pollute, &at_mode, modal)?;
        let sign = |d: f64| d.partial_cmp(&0.0).unwrap_or(Ordering::Equal);
        ensure(sign(replay_diff) == sign(pollute_diff), || {
            format!("{}: replay {replay_diff:+.1} vs pollute {pollute_diff:+.1} at {modal}", w.name)
        })?;
        notes.push(format!("{} mode {modal} {replay_diff:+.1}/{pollute_diff:+.1}", w.name));
    }
    Ok(notes.join("; "))
}

// 5 ------------------------------------------------------------------------

/// `(owner, site, callee)` for every inlined call in `m`, where `owner` is
/// the function the call site belongs to.
fn inlined_calls(m: &CompiledMethod) -> Vec<(FuncId, SiteId, FuncId)> {
    fn go(n: &CNode, owner: FuncId, out: &mut Vec<(FuncId, SiteId, FuncId)>) {
        match n {
            CNode::Inline { site, args, target } => {
                out.push((owner, *site, target.callee));
                args.iter().for_each(|a| go(a, owner, out));
                go(&target.body, target.callee, out);
            }
            CNode::Dispatch {
                site,
                callee,
                args,
                targets,
                ..
            } => {
                go(callee, owner, out);
                args.iter().for_each(|a| go(a, owner, out));
                for t in targets {
                    out.push((owner, *site, t.callee));
                    go(&t.body, t.callee, out);
                }
            }
            _ => n.for_each_child(&mut |c| go(c, owner, out)),
        }
    }
    let mut out = Vec::new();
    go(&m.body, m.function, &mut out);
    out
}

fn stream_advantage() -> Verdict {
    let s = suite_by_name("stream").map_err(|e| e.to_string())?;
    let cfg = short(3, 20);
    let model = CostModel::default();
    let pollute = s.strategy("manual-pollute", None).map_err(|e| e.to_string())?;
    let mut all = Vec::new();
    let mut megamorphic_sites = 0;
    for q in QUERIES {
        let sterile = run(&s, q, Strategy::DoNothing, &cfg)?;
        let polluted = run(&s, q, pollute.clone(), &cfg)?;
        let t = speedup_table(&sterile, &polluted).map_err(|e| e.to_string())?;
        ensure(t.min >= 1.0, || format!("{q}: polluted faster, min {:.4}", t.min))?;
        all.extend(t.ratios.iter().map(|r| r.1));

        let name = |f: FuncId| s.program.name_of(f);
        let inlined_ops = sterile
            .forks
            .iter()
            .flat_map(|f| f.compiled.iter())
            .flat_map(|m| inlined_calls(m))
            .filter(|(_, _, c)| is_operator(name(*c)))
            .count();
        ensure(inlined_ops >= 1, || format!("{q}: no operator inlined without pollution"))?;
        for fork in &polluted.forks {
            let megamorphic = |owner: FuncId, site: SiteId| {
                call_site_morphism(&fork.profiles, owner, site, model.max_inline_targets) == Ok(Morphism::Megamorphic)
            };
            for f in &s.program.functions {
                let sites = fork.profiles.function(f.id).sites().map(|(site, _)| site);
                megamorphic_sites += sites.filter(|site| megamorphic(f.id, *site)).count();
            }
            for m in &fork.compiled {
                for (owner, site, callee) in inlined_calls(m) {
                    ensure(!(megamorphic(owner, site) && is_operator(name(callee))), || {
                        format!("{q}: {} inlined at megamorphic site {site} of {}", name(callee), name(owner))
                    })?;
                }
            }
        }
    }
    let g = geomean(&all).map_err(|e| e.to_string())?;
    ensure(g > 1.0, || format!("geomean {g:.4}"))?;
    ensure(megamorphic_sites > 0, || "pollution left no megamorphic site".into())?;
    let max = all.iter().copied().fold(0.0, f64::max);
    Ok(format!("geomean {g:.4}x max {max:.4}x; no operator inlined at {megamorphic_sites} megamorphic sites"))
}

// 6 ------------------------------------------------------------------------

fn init_bias() -> Verdict {
    let s = suite_by_name("collections").map_err(|e| e.to_string())?;
    let cfg = short(3, 100);
    let mut notes = Vec::new();
    for (w, lo, hi) in [("populate", 1.0, f64::INFINITY), ("copy", 1.0, f64::INFINITY), ("iterate", 0.95, 1.10)] {
        let clone = run(&s, &format!("{w}_clone"), Strategy::DoNothing, &cfg)?;
        let stdlib = run(&s, &format!("{w}_stdlib"), Strategy::DoNothing, &cfg)?;
        let t = speedup_table(&clone, &stdlib).map_err(|e| e.to_string())?;
        ensure(t.min >= lo && t.max <= hi, || format!("{w}: {:?}", t.ratios))?;
        notes.push(format!("{} {:.4}..{:.4}x", w.to_uppercase(), t.min, t.max));
    }
    Ok(notes.join("; "))
}

// 7 ------------------------------------------------------------------------

fn deopt_contract() -> Verdict {
    let p = Arc::new(hashcode_program());
    let mut vm = VmInstance::new(Arc::clone(&p), CostModel::default());
    let bytes = |n: usize, salt: usize| -> Vec<i8> { (0..n).map(|j| ((j * 13 + salt) % 200) as i8).collect() };
    let check = |vm: &mut VmInstance, b: &[i8]| -> Result<(), String> {
        let got = vm.invoke(FT32, vec![Value::bytes(b)]).map_err(|e| e.to_string())?;
        ensure(got == Value::Int(poly_hash_oracle(b)), || format!("wrong hash for length {}", b.len()))
    };
    for i in 0..100 {
        check(&mut vm, &bytes(16, i))?;
    }
    let v1 = vm.compiled(FT32).ok_or("not compiled after 100 calls")?.clone();
    let site = v1
        .speculations
        .iter()
        .find(|s| s.kind.tag() == KindTag::SwitchSingleCase)
        .ok_or("no single-case speculation")?
        .site;
    check(&mut vm, &bytes(17, 0))?;
    ensure(vm.cost().deopt_events == 1, || format!("{} deopts", vm.cost().deopt_events))?;
    for i in 0..300 {
        check(&mut vm, &bytes(if i % 2 == 0 { 16 } else { 17 }, i))?;
    }
    ensure(vm.cost().deopt_events == 1, || format!("{} deopts after recompile", vm.cost().deopt_events))?;
    let v2 = vm.compiled(FT32).ok_or("not recompiled")?;
    ensure(vm.state(FT32).tier == Tier::Compiled(2), || format!("{:?}", vm.state(FT32).tier))?;
    ensure(!v2.has_speculation(FT32, site, KindTag::SwitchSingleCase), || v2.log_line(&p))?;

    let mut scripts = 0;
    let mut deopts = 0;
    for seed in 0..1000u64 {
        let prog = Arc::new(random_program(seed));
        let model = CostModel {
            compile_threshold: 12,
            min_profile_samples: 4,
            ..CostModel::default()
        };
        let mut vm = VmInstance::new(Arc::clone(&prog), model);
        let mut reference = Reference::new(&prog);
        for (f, args) in random_script(seed, &prog, 200) {
            let want = Value::Int(reference.run(f, &args));
            let got = vm.invoke(f, args).map_err(|e| format!("seed {seed}: {e}"))?;
            ensure(got == want, || format!("seed {seed}: tiered result differs"))?;
        }
        for (key, n) in deopts_by_key(vm.events()) {
            ensure(n <= 1, || format!("seed {seed}: {key:?} deopted {n} times"))?;
        }
        deopts += vm.cost().deopt_events;
        scripts += 1;
    }
    Ok(format!("scripted scenario: 1 deopt, v2 generic; {scripts} random scripts, {deopts} deopts, none repeated"))
}

// 8 ------------------------------------------------------------------------

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "forks = 2\nwarmup_iterations = 2\nmeasure_iterations = 2\nops_per_iteration = 40\nparameter_values = 8, 33\n",
    )
    .map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for (suite, strategy) in [("hashcode", "manual-pollute"), ("stream", "do-nothing"), ("collections", "do-nothing")] {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("{suite}-{k}.csv"));
            let args = [
                "specvm", "bench", "--suite", suite, "--strategy", strategy, "--seed", "7",
                "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
            ];
            let (mut so, mut se) = (Vec::new(), Vec::new());
            let code = cli_main(args, &mut so, &mut se);
            ensure(code == 0, || format!("{suite}: exit {code}: {}", String::from_utf8_lossy(&se)))?;
            outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1], || format!("{suite}: CSVs differ"))?;
        checked.push(format!("{suite} {} bytes", outputs[0].len()));
    }
    Ok(format!("byte-identical: {}", checked.join(", ")))
}

// 9 ------------------------------------------------------------------------

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn statistics_oracle() -> Verdict {
    let g = geomean(&[0.97, 1.43]).map_err(|e| e.to_string())?;
    ensure((g - 1.1777).abs() < 1e-4, || format!("geomean(0.97, 1.43) = {g}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let n = rng.gen_range(2..40);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..500.0)).collect();
        let s = summarize(&xs).map_err(|e| e.to_string())?;
        // Brute force: reverse-order sum, and the variance as a mean of
        // squared pairwise differences.
        let mean = xs.iter().rev().sum::<f64>() / n as f64;
        let mut pair = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                pair += (xs[i] - xs[j]).powi(2);
            }
        }
        let stdev = (pair / (n * (n - 1)) as f64).sqrt();
        let ci95 = 1.96 * stdev / (n as f64).sqrt();
        let min = xs.iter().copied().reduce(|a, b| if b < a { b } else { a }).unwrap();
        let max = xs.iter().copied().reduce(|a, b| if b > a { b } else { a }).unwrap();
        ensure(s.n == n && close(s.mean, mean) && close(s.min, min) && close(s.max, max), || {
            format!("case {case}: summary {s:?} vs mean {mean} min {min} max {max}")
        })?;
        ensure(close(s.stdev, stdev) || (s.stdev - stdev).abs() < 1e-12 * mean, || {
            format!("case {case}: stdev {} vs {stdev}", s.stdev)
        })?;
        ensure(close(s.ci95, ci95) || (s.ci95 - ci95).abs() < 1e-12 * mean, || {
            format!("case {case}: ci95 {} vs {ci95}", s.ci95)
        })?;

        // Speedup table over synthetic results with several rows per parameter.
        let params = rng.gen_range(1..12);
        let reps = rng.gen_range(1..5);
        let mut a_rows = Vec::new();
        let mut b_rows = Vec::new();
        let mut ratios = Vec::new();
        for p in 0..params {
            let ta: Vec<f64> = (0..reps).map(|_| rng.gen_range(0.1..10.0)).collect();
            let tb: Vec<f64> = (0..reps).map(|_| rng.gen_range(0.1..10.0)).collect();
            ratios.push((ta.iter().sum::<f64>() / reps as f64) / (tb.iter().sum::<f64>() / reps as f64));
            for (rows, ts) in [(&mut a_rows, &ta), (&mut b_rows, &tb)] {
                rows.push(row(p, Phase::Warmup, 1e6));
                rows.extend(ts.iter().map(|&t| row(p, Phase::Measure, t)));
            }
        }
        let t = speedup_table(&result("a", a_rows), &result("b", b_rows)).map_err(|e| e.to_string())?;
        let product: f64 = ratios.iter().product();
        let g = product.powf(1.0 / ratios.len() as f64);
        let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
        let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
        ensure(t.ratios.iter().zip(&ratios).all(|((_, x), y)| close(*x, *y)), || format!("case {case}: ratios"))?;
        ensure(close(t.min, lo) && close(t.max, hi), || format!("case {case}: min/max"))?;
        ensure((t.geomean - g).abs() <= 1e-12 * g.max(1.0) * 4.0, || format!("case {case}: geomean {} vs {g}", t.geomean))?;
    }
    Ok(format!("100 vectors match brute force; geomean(0.97, 1.43) = {g:.4}"))
}

fn row(param: i64, phase: Phase, throughput: f64) -> RunRow {
    RunRow {
        param,
        fork: 0,
        iteration: 0,
        phase,
        virtual_cycles: 1,
        ops: 1,
        throughput,
        deopts: 0,
        compiles: 0,
    }
}

fn result(strategy: &str, rows: Vec<RunRow>) -> RunResult {
    RunResult {
        suite: "synthetic".into(),
        benchmark: "b".into(),
        strategy: strategy.into(),
        rows,
        forks: Vec::new(),
    }
}

// 10 -----------------------------------------------------------------------

fn profile_oracle() -> Verdict {
    let mut sites = 0;
    for seed in 0..200u64 {
        let p = Arc::new(random_program(1_000_000 + seed));
        let mut vm = VmInstance::interpreter_only(Arc::clone(&p), CostModel::default());
        let mut reference = Reference::new(&p);
        for (f, args) in random_script(seed, &p, 60) {
            let want = reference.run(f, &args);
            let got = vm.invoke(f, args).map_err(|e| e.to_string())?;
            ensure(got == Value::Int(want), || format!("seed {seed}: result differs"))?;
        }
        let got = counts_from_store(&p, vm.profile_store());
        ensure(got == reference.counts, || format!("seed {seed}: {got:?} vs {:?}", reference.counts))?;
        sites += got.branches.len() + got.switches.len() + got.calls.len();
    }
    Ok(format!("200 programs, {sites} live sites, exact"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "hash equivalence", 10, hash_equivalence),
        (2, "sterile speedup direction", 60, sterile_speedup),
        (3, "pollution reversal", 60, pollution_reversal),
        (4, "trace agreement", 60, trace_agreement),
        (5, "stream sterile advantage", 60, stream_advantage),
        (6, "init bias direction", 60, init_bias),
        (7, "deopt contract", 30, deopt_contract),
        (8, "determinism", 120, determinism),
        (9, "statistics oracle", 5, statistics_oracle),
        (10, "profile-count oracle", 30, profile_oracle),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let verdict = check();
        let took = start.elapsed();
        let verdict = verdict.and_then(|msg| {
            if took < Duration::from_secs(budget) {
                Ok(msg)
            } else {
                Err(format!("over budget: {msg}"))
            }
        });
        let (tag, msg) = match &verdict {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!("criterion {id:>2} {tag} {name} [{:.1}s/{budget}s]: {msg}", took.as_secs_f64());
        failed += verdict.is_err() as u32;
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

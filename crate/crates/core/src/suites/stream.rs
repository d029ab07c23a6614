//! Pipelines over byte arrays built from three higher-order library
//! functions. Each library loop calls its operator through a function
//! reference, so the operator mix seen at that call site decides whether
//! the operator can be inlined.

use std::sync::Arc;

use crate::config::RunConfig;
use crate::ir::{Expr, FuncId, Program, ProgramBuilder, E};

use super::hashcode::ByteArrayInputs;
use super::{BenchmarkDef, SuiteDefinition};

pub const QUERIES: [&str; 6] = ["q1", "q2", "q3", "q4", "q5", "q6"];
pub const LIBS: [&str; 3] = ["lib_map", "lib_filter", "lib_reduce"];

const MAPS: [&str; 5] = ["op_double", "op_inc", "op_square", "op_neg", "op_mask"];
const PREDS: [&str; 4] = ["pred_pos", "pred_even", "pred_small", "pred_nonzero"];
const REDUCERS: [&str; 4] = ["red_sum", "red_sum_sq", "red_count", "red_max"];
const SETUP_LEN: i64 = 16;

/// True for the operator functions passed to the library.
pub fn is_operator(name: &str) -> bool {
    MAPS.contains(&name) || PREDS.contains(&name) || REDUCERS.contains(&name)
}

fn define_operators(b: &mut ProgramBuilder) {
    let x = || E::get(0);
    b.define("op_double", 1, 1, E::mul(x(), E::c(2)));
    b.define("op_inc", 1, 1, E::add(x(), E::c(1)));
    b.define("op_square", 1, 1, E::mul(x(), x()));
    b.define("op_neg", 1, 1, E::sub(E::c(0), x()));
    b.define("op_mask", 1, 1, E::and(x(), E::c(15)));
    b.define("pred_pos", 1, 1, E::lt(E::c(0), x()));
    b.define("pred_even", 1, 1, E::eq(E::and(x(), E::c(1)), E::c(0)));
    b.define("pred_small", 1, 1, E::lt(x(), E::c(50)));
    b.define("pred_nonzero", 1, 1, E::eq(E::eq(x(), E::c(0)), E::c(0)));
    let (a, v) = (|| E::get(0), || E::get(1));
    b.define("red_sum", 2, 2, E::add(a(), v()));
    b.define("red_sum_sq", 2, 2, E::add(a(), E::mul(v(), v())));
    b.define("red_count", 2, 2, E::add(a(), E::c(1)));
    b.define("red_max", 2, 2, E::if_(E::lt(a(), v()), v(), a()));
}

fn define_library(b: &mut ProgramBuilder) {
    let (arr, f) = (0, 1);
    // lib_map(arr, f): out[i] = f(arr[i])
    let out = 2;
    let i = 3;
    b.define(
        "lib_map",
        2,
        4,
        E::seq(vec![
            E::set(out, E::newarr(E::len(E::get(arr)))),
            E::for_range(
                i,
                E::c(0),
                E::len(E::get(arr)),
                E::aset(E::get(out), E::get(i), E::calli(E::get(f), vec![E::aget(E::get(arr), E::get(i))])),
            ),
            E::ret(E::get(out)),
        ]),
    );

    // lib_filter(arr, p): mark survivors, then copy them into an exact-size array.
    let (flags, count, i, res, j) = (2, 3, 4, 5, 6);
    b.define(
        "lib_filter",
        2,
        7,
        E::seq(vec![
            E::set(flags, E::newarr(E::len(E::get(arr)))),
            E::set(count, E::c(0)),
            E::for_range(
                i,
                E::c(0),
                E::len(E::get(arr)),
                E::if_(
                    E::calli(E::get(f), vec![E::aget(E::get(arr), E::get(i))]),
                    E::seq(vec![E::aset(E::get(flags), E::get(i), E::c(1)), E::inc(count, 1)]),
                    E::c(0),
                ),
            ),
            E::set(res, E::newarr(E::get(count))),
            E::set(j, E::c(0)),
            E::for_range(
                i,
                E::c(0),
                E::len(E::get(arr)),
                E::if_(
                    E::aget(E::get(flags), E::get(i)),
                    E::seq(vec![
                        E::aset(E::get(res), E::get(j), E::aget(E::get(arr), E::get(i))),
                        E::inc(j, 1),
                    ]),
                    E::c(0),
                ),
            ),
            E::ret(E::get(res)),
        ]),
    );

    // lib_reduce(arr, f, init): acc = f(acc, arr[i])
    let (init, acc, i) = (2, 3, 4);
    b.define(
        "lib_reduce",
        3,
        5,
        E::seq(vec![
            E::set(acc, E::get(init)),
            E::for_range(
                i,
                E::c(0),
                E::len(E::get(arr)),
                E::set(acc, E::calli(E::get(f), vec![E::get(acc), E::aget(E::get(arr), E::get(i))])),
            ),
            E::ret(E::get(acc)),
        ]),
    );
}

fn map(b: &mut ProgramBuilder, src: Expr, op: &str) -> Expr {
    E::call(b.declare("lib_map"), vec![src, E::fref(b.declare(op))])
}

fn filter(b: &mut ProgramBuilder, src: Expr, pred: &str) -> Expr {
    E::call(b.declare("lib_filter"), vec![src, E::fref(b.declare(pred))])
}

fn reduce(b: &mut ProgramBuilder, src: Expr, op: &str, init: i64) -> Expr {
    E::call(b.declare("lib_reduce"), vec![src, E::fref(b.declare(op)), E::c(init)])
}

fn define_queries(b: &mut ProgramBuilder) {
    let arr = || E::get(0);
    let q1 = {
        let s = filter(b, arr(), "pred_pos");
        reduce(b, s, "red_sum", 0)
    };
    let q2 = {
        let s = map(b, arr(), "op_double");
        reduce(b, s, "red_sum", 0)
    };
    let q3 = {
        let s = map(b, arr(), "op_inc");
        let s = filter(b, s, "pred_even");
        reduce(b, s, "red_count", 0)
    };
    let q4 = {
        let s = filter(b, arr(), "pred_small");
        let s = map(b, s, "op_square");
        reduce(b, s, "red_max", -1_000_000)
    };
    // The last two reuse one library function with two operators.
    let q5 = {
        let s = map(b, arr(), "op_neg");
        let s = map(b, s, "op_mask");
        reduce(b, s, "red_sum", 0)
    };
    let q6 = {
        let s = filter(b, arr(), "pred_pos");
        let s = filter(b, s, "pred_even");
        reduce(b, s, "red_sum_sq", 0)
    };
    for (name, body) in QUERIES.iter().zip([q1, q2, q3, q4, q5, q6]) {
        b.define(name, 1, 1, body);
    }
}

/// Calls every library function with each of its operators, twice over,
/// on a small array of mixed signs and parities.
fn define_pollute(b: &mut ProgramBuilder) -> FuncId {
    let (arr, i) = (0, 1);
    let mut calls = vec![
        E::set(arr, E::newarr(E::c(SETUP_LEN))),
        E::for_range(
            i,
            E::c(0),
            E::len(E::get(arr)),
            E::aset(
                E::get(arr),
                E::get(i),
                E::sub(E::and(E::mul(E::get(i), E::c(37)), E::c(127)), E::c(64)),
            ),
        ),
    ];
    for _ in 0..2 {
        for op in MAPS {
            calls.push(map(b, E::get(arr), op));
        }
        for p in PREDS {
            calls.push(filter(b, E::get(arr), p));
        }
        for r in REDUCERS {
            calls.push(reduce(b, E::get(arr), r, 0));
        }
    }
    calls.push(E::c(0));
    b.define("pollute_setup", 0, 2, E::seq(calls))
}

pub fn stream_program() -> (Program, FuncId) {
    let mut b = ProgramBuilder::new();
    define_library(&mut b);
    define_operators(&mut b);
    define_queries(&mut b);
    let setup = define_pollute(&mut b);
    (b.finish(), setup)
}

/// Host reference for each query.
pub fn query_oracle(query: &str, input: &[i8]) -> i64 {
    let v = input.iter().map(|&x| x as i64);
    match query {
        "q1" => v.filter(|&x| x > 0).sum(),
        "q2" => v.map(|x| x * 2).sum(),
        "q3" => v.map(|x| x + 1).filter(|x| x & 1 == 0).count() as i64,
        "q4" => v.filter(|&x| x < 50).map(|x| x * x).fold(-1_000_000, i64::max),
        "q5" => v.map(|x| (-x) & 15).sum(),
        "q6" => v.filter(|&x| x > 0 && x & 1 == 0).map(|x| x * x).sum(),
        _ => panic!("unknown query {query}"),
    }
}

pub fn suite_stream() -> SuiteDefinition {
    let (program, setup) = stream_program();
    let program = Arc::new(program);
    let benchmarks = QUERIES
        .iter()
        .map(|q| BenchmarkDef {
            name: q.to_string(),
            target: program.id_of(q).expect("query defined"),
            generator: Arc::new(ByteArrayInputs),
            parameter_values: vec![256, 1024, 4096],
            strategies: vec!["do-nothing", "manual-pollute"],
            with_init: false,
        })
        .collect();
    SuiteDefinition {
        name: "stream",
        program,
        benchmarks,
        comparisons: Vec::new(),
        pollute_setup: Some(setup),
        trace_workloads: Vec::new(),
        defaults: RunConfig {
            ops_per_iteration: 200,
            ..RunConfig::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::CostModel;
    use crate::ir::{validate, Value};
    use crate::runtime::VmInstance;
    use crate::suites::hashcode::input_bytes;

    #[test]
    fn program_validates() {
        let (p, setup) = stream_program();
        let report = validate(&p);
        assert!(report.is_ok(), "{report:?}");
        assert_eq!(p.name_of(setup), "pollute_setup");
        assert_eq!(p.functions.len(), 3 + 13 + 6 + 1);
    }

    #[test]
    fn interpreted_queries_match_the_host_reference() {
        let (p, _) = stream_program();
        let p = Arc::new(p);
        for q in QUERIES {
            let mut vm = VmInstance::interpreter_only(Arc::clone(&p), CostModel::default());
            for (len, op) in [(0, 0), (1, 1), (37, 2), (300, 3)] {
                let input = input_bytes(len, op, 11);
                let got = vm.invoke(p.id_of(q).unwrap(), vec![Value::bytes(&input)]).unwrap();
                assert_eq!(got, Value::Int(query_oracle(q, &input)), "{q} len {len}");
            }
        }
    }

    #[test]
    fn setup_reaches_every_operator() {
        let (p, setup) = stream_program();
        let p = Arc::new(p);
        let mut vm = VmInstance::interpreter_only(Arc::clone(&p), CostModel::default());
        vm.invoke(setup, Vec::new()).unwrap();
        for f in &p.functions {
            if is_operator(&f.name) {
                assert_eq!(vm.profile_store().invocations(f.id), 2 * SETUP_LEN as u64, "{}", f.name);
            }
        }
    }
}

//! Rolling hash over byte arrays: loop baseline against the fall-through
//! switch variant.

use std::sync::Arc;

use crate::config::RunConfig;
use crate::harness::InputGenerator;
use crate::ir::{build_hash_baseline, build_hash_ft32, Expr, FuncId, Function, Program, Value, E};

use super::{BenchmarkDef, Comparison, SuiteDefinition, TraceWorkload};

pub const BASELINE: FuncId = FuncId(0);
pub const FT32: FuncId = FuncId(1);
pub const POLLUTE: FuncId = FuncId(2);
pub const TRACE_GEOMETRIC: FuncId = FuncId(3);
pub const TRACE_UNIFORM: FuncId = FuncId(4);
pub const TRACE_BIMODAL: FuncId = FuncId(5);

/// Longest array any synthetic trace asks for.
pub const TRACE_MAX_LEN: i64 = 64;
const TRACE_CALLS: usize = 1000;
const MAX_LEN: i64 = 1 << 20;

/// Element `j` of the array built for op `op`.
pub fn input_byte(seed: u64, op: u64, j: u64) -> i8 {
    let v = seed
        .wrapping_add(op.wrapping_mul(17))
        .wrapping_add(j)
        % 251;
    (v as i64 - 125) as i8
}

pub fn input_bytes(len: usize, op: u64, seed: u64) -> Vec<i8> {
    (0..len as u64).map(|j| input_byte(seed, op, j)).collect()
}

/// One byte array of the descriptor's length per op.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteArrayInputs;

impl InputGenerator for ByteArrayInputs {
    fn descriptor_for_param(&self, param: i64) -> Vec<i64> {
        vec![param]
    }

    fn args_for(&self, descriptor: &[i64], op: u64, seed: u64) -> Vec<Value> {
        vec![Value::bytes(&input_bytes(descriptor[0] as usize, op, seed))]
    }

    fn validate_descriptor(&self, d: &[i64]) -> Result<(), String> {
        match d {
            [n] if (0..=MAX_LEN).contains(n) => Ok(()),
            [n] => Err(format!("array length {n} is outside 0..={MAX_LEN}")),
            _ => Err(format!("expected one array length, got {} values", d.len())),
        }
    }
}

/// The classic C library LCG, used by the synthetic trace workloads.
#[derive(Debug, Clone)]
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_raw(&mut self) -> u64 {
        self.0 = (self.0.wrapping_mul(1_103_515_245).wrapping_add(12_345)) & 0x7fff_ffff;
        self.0
    }

    /// Uniform draw in `0..n`, from the high bits.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_raw() >> 16) * n) >> 15
    }
}

/// Short arrays dominate: each extra element survives with probability 0.7.
pub fn geometric_lengths(n: usize) -> Vec<i64> {
    let mut g = Lcg(1);
    (0..n)
        .map(|_| {
            let mut len = 1;
            while len < TRACE_MAX_LEN && g.below(10) < 7 {
                len += 1;
            }
            len
        })
        .collect()
}

pub fn uniform_lengths(n: usize) -> Vec<i64> {
    let mut g = Lcg(2);
    (0..n).map(|_| 1 + g.below(TRACE_MAX_LEN as u64) as i64).collect()
}

/// Two clusters, around 8 (60%) and around 48, each spread by up to 6.
pub fn bimodal_lengths(n: usize) -> Vec<i64> {
    let mut g = Lcg(3);
    (0..n)
        .map(|_| {
            let centre = if g.below(10) < 6 { 8 } else { 48 };
            centre + g.below(13) as i64 - 6
        })
        .collect()
}

fn hash_calls(target: FuncId, lengths: &[i64]) -> Expr {
    let mut calls: Vec<Expr> = lengths
        .iter()
        .map(|&n| E::call(target, vec![E::newarr(E::c(n))]))
        .collect();
    calls.push(E::c(0));
    E::seq(calls)
}

pub fn hashcode_program() -> Program {
    let mut ft32 = build_hash_ft32();
    ft32.id = FT32;
    // Every length from 0 through 33 reaches each ft32 arm and the loop.
    let pollute = Function::new(
        POLLUTE,
        "pollute_setup",
        0,
        1,
        E::seq(vec![
            E::for_range(
                0,
                E::c(0),
                E::c(34),
                E::seq(vec![
                    E::call(BASELINE, vec![E::newarr(E::get(0))]),
                    E::call(FT32, vec![E::newarr(E::get(0))]),
                ]),
            ),
            E::c(0),
        ]),
    );
    let trace = |id, name: &str, lengths: Vec<i64>| Function::new(id, name, 0, 0, hash_calls(BASELINE, &lengths));
    Program::new(
        vec![
            build_hash_baseline(),
            ft32,
            pollute,
            trace(TRACE_GEOMETRIC, "trace_geometric", geometric_lengths(TRACE_CALLS)),
            trace(TRACE_UNIFORM, "trace_uniform", uniform_lengths(TRACE_CALLS)),
            trace(TRACE_BIMODAL, "trace_bimodal", bimodal_lengths(TRACE_CALLS)),
        ],
        None,
    )
}

pub fn suite_hashcode() -> SuiteDefinition {
    let program = Arc::new(hashcode_program());
    let bench = |name: &str, target| BenchmarkDef {
        name: name.to_string(),
        target,
        generator: Arc::new(ByteArrayInputs),
        parameter_values: (1..=64).collect(),
        strategies: vec!["do-nothing", "manual-pollute", "trace"],
        with_init: false,
    };
    let workload = |name: &str, id| TraceWorkload {
        name: name.to_string(),
        workload: id,
        target: BASELINE,
    };
    SuiteDefinition {
        name: "hashcode",
        program,
        benchmarks: vec![bench("baseline", BASELINE), bench("hashcode_ft_32", FT32)],
        comparisons: vec![Comparison {
            label: "hashcode_ft_32 vs baseline".into(),
            a: "hashcode_ft_32".into(),
            b: "baseline".into(),
        }],
        pollute_setup: Some(POLLUTE),
        trace_workloads: vec![
            workload("trace_geometric", TRACE_GEOMETRIC),
            workload("trace_uniform", TRACE_UNIFORM),
            workload("trace_bimodal", TRACE_BIMODAL),
        ],
        defaults: RunConfig::default(),
    }
}

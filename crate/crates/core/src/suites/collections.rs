//! Linear-probe hash tables over integer arrays, in a "standard library"
//! copy that the init phase exercises and a clone that only benchmarks see.
//!
//! Table layout: `[0]` capacity (a power of two), `[1]` size, then
//! `capacity` key slots holding `key + 1` (0 marks an empty slot), then,
//! for maps only, `capacity` value slots. Keys must be non-negative.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::config::RunConfig;
use crate::harness::InputGenerator;
use crate::ir::{ArrayRef, Expr, FuncId, Program, ProgramBuilder, Slot, Value, E};

use super::{BenchmarkDef, Comparison, SuiteDefinition};

pub const HASH_MULTIPLIER: i64 = 40503;
pub const WORKLOADS: [&str; 4] = ["populate", "contains", "copy", "iterate"];
/// Library functions with a clone, without suffix.
pub const LIBRARY: [&str; 10] = [
    "map_new",
    "map_put",
    "map_get",
    "map_put_all",
    "map_iterate",
    "set_new",
    "set_add",
    "set_contains",
    "set_add_all",
    "set_iterate",
];
pub const CLONE_SUFFIX: &str = "_clone";
const INIT_SIZES: [i64; 3] = [16, 128, 512];
const MAX_ELEMENTS: i64 = 1 << 20;

/// Smallest power of two holding four slots per element.
pub fn capacity_for(n: usize) -> usize {
    (4 * n).max(4).next_power_of_two()
}

pub fn home_slot(key: i64, cap: usize) -> usize {
    (key.wrapping_mul(HASH_MULTIPLIER) & (cap as i64 - 1)) as usize
}

/// Host-side table with the guest layout, used to build inputs and as a
/// reference for guest results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostTable {
    pub cap: usize,
    pub size: usize,
    keys: Vec<i64>,
    values: Option<Vec<i64>>,
}

impl HostTable {
    pub fn map(cap: usize) -> HostTable {
        assert!(cap.is_power_of_two());
        HostTable {
            cap,
            size: 0,
            keys: vec![0; cap],
            values: Some(vec![0; cap]),
        }
    }

    pub fn set(cap: usize) -> HostTable {
        HostTable {
            values: None,
            ..HostTable::map(cap)
        }
    }

    fn probe(&self, key: i64) -> usize {
        let mut i = home_slot(key, self.cap);
        while self.keys[i] != 0 && self.keys[i] != key + 1 {
            i = (i + 1) & (self.cap - 1);
        }
        i
    }

    /// Inserts or updates; returns the size afterwards.
    pub fn put(&mut self, key: i64, value: i64) -> usize {
        let i = self.probe(key);
        if self.keys[i] == 0 {
            self.keys[i] = key + 1;
            self.size += 1;
        }
        if let Some(v) = &mut self.values {
            v[i] = value;
        }
        self.size
    }

    pub fn get(&self, key: i64) -> Option<i64> {
        let i = self.probe(key);
        (self.keys[i] != 0).then(|| self.values.as_ref().map_or(1, |v| v[i]))
    }

    pub fn contains(&self, key: i64) -> bool {
        self.get(key).is_some()
    }

    /// Sum over occupied slots of `(key + 1) * 31 + value`, in slot order.
    pub fn iterate_checksum(&self) -> i64 {
        (0..self.cap)
            .filter(|&i| self.keys[i] != 0)
            .map(|i| self.keys[i] * 31 + self.values.as_ref().map_or(0, |v| v[i]))
            .sum()
    }

    pub fn to_array(&self) -> Vec<i64> {
        let mut out = vec![self.cap as i64, self.size as i64];
        out.extend(&self.keys);
        if let Some(v) = &self.values {
            out.extend(v);
        }
        out
    }

    pub fn to_value(&self) -> Value {
        Value::Array(ArrayRef::ints(self.to_array()))
    }
}

/// `n` distinct non-negative keys for one op.
pub fn keys_for(n: usize, op: u64, seed: u64) -> Vec<i64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ op.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        // splitmix64
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        let k = ((z ^ (z >> 31)) & 0x3FFF_FFFF) as i64;
        if seen.insert(k) {
            out.push(k);
        }
    }
    out
}

fn ints(v: Vec<i64>) -> Value {
    Value::Array(ArrayRef::ints(v))
}

pub fn filled_map(keys: &[i64]) -> HostTable {
    let mut t = HostTable::map(capacity_for(keys.len()));
    for (i, &k) in keys.iter().enumerate() {
        t.put(k, i as i64);
    }
    t
}

pub fn filled_set(keys: &[i64]) -> HostTable {
    let mut t = HostTable::set(capacity_for(keys.len()));
    for &k in keys {
        t.put(k, 0);
    }
    t
}

/// Arguments for one of the four workloads; the descriptor is `[n]`.
#[derive(Debug, Clone, Copy)]
pub struct TableInputs {
    pub workload: &'static str,
}

impl InputGenerator for TableInputs {
    fn descriptor_for_param(&self, param: i64) -> Vec<i64> {
        vec![param]
    }

    fn args_for(&self, descriptor: &[i64], op: u64, seed: u64) -> Vec<Value> {
        let n = descriptor[0] as usize;
        let keys = keys_for(n, op, seed);
        match self.workload {
            "populate" => vec![HostTable::map(capacity_for(n)).to_value(), ints(keys)],
            "contains" => vec![filled_set(&keys).to_value(), ints(keys)],
            "copy" => vec![HostTable::map(capacity_for(n)).to_value(), filled_map(&keys).to_value()],
            "iterate" => vec![filled_map(&keys).to_value()],
            w => panic!("unknown workload {w}"),
        }
    }

    fn validate_descriptor(&self, d: &[i64]) -> Result<(), String> {
        match d {
            [n] if (1..=MAX_ELEMENTS).contains(n) => Ok(()),
            [n] => Err(format!("element count {n} is outside 1..={MAX_ELEMENTS}")),
            _ => Err(format!("expected one element count, got {} values", d.len())),
        }
    }
}

/// Hash functions standing in for the key types' own hash methods. The
/// benchmarks hash with the first one only; the init phase uses all three.
pub const HASHES: [&str; 3] = ["hash_mul", "hash_shift", "hash_fold"];

fn define_hashes(b: &mut ProgramBuilder) {
    let k = || E::get(0);
    b.define("hash_mul", 1, 1, E::mul(k(), E::c(HASH_MULTIPLIER)));
    b.define("hash_shift", 1, 1, E::add(k(), E::add(E::shl(k(), E::c(5)), E::shl(k(), E::c(11)))));
    b.define("hash_fold", 1, 1, E::add(E::mul(k(), E::c(31)), E::and(E::shl(k(), E::c(7)), E::c(0xFFFF))));
}

/// `base + index` into table `t`.
fn slot_at(t: Slot, offset: Expr, index: Expr) -> Expr {
    E::aget(E::get(t), E::add(offset, index))
}

/// Defines the ten library functions under `suffix`. Every keyed
/// operation takes the hash function as its last argument.
fn define_library(b: &mut ProgramBuilder, suffix: &str) {
    let name = |n: &str| format!("{n}{suffix}");
    let masked = |e: Expr, cap: Slot| E::and(e, E::sub(E::get(cap), E::c(1)));
    let home = |k: Slot, h: Slot, cap: Slot| masked(E::calli(E::get(h), vec![E::get(k)]), cap);
    let two = || E::c(2);
    let val_base = |cap: Slot| E::add(E::c(2), E::get(cap));

    for (lib, per_slot) in [("map_new", 2), ("set_new", 1)] {
        // new(cap): zeroed table with the capacity header set.
        b.define(
            &name(lib),
            1,
            2,
            E::seq(vec![
                E::set(1, E::newarr(E::add(E::c(2), E::mul(E::c(per_slot), E::get(0))))),
                E::aset(E::get(1), E::c(0), E::get(0)),
                E::ret(E::get(1)),
            ]),
        );
    }

    // map_put(t, k, v, h) -> size
    let (t, k, v, h, cap, i, cur, done) = (0, 1, 2, 3, 4, 5, 6, 7);
    b.define(
        &name("map_put"),
        4,
        8,
        E::seq(vec![
            E::set(cap, E::aget(E::get(t), E::c(0))),
            E::set(i, home(k, h, cap)),
            E::set(done, E::c(0)),
            E::loop_(
                E::eq(E::get(done), E::c(0)),
                E::seq(vec![
                    E::set(cur, slot_at(t, two(), E::get(i))),
                    E::if_(
                        E::eq(E::get(cur), E::c(0)),
                        E::seq(vec![
                            E::aset(E::get(t), E::add(two(), E::get(i)), E::add(E::get(k), E::c(1))),
                            E::aset(E::get(t), E::add(val_base(cap), E::get(i)), E::get(v)),
                            E::aset(E::get(t), E::c(1), E::add(E::aget(E::get(t), E::c(1)), E::c(1))),
                            E::set(done, E::c(1)),
                        ]),
                        E::if_(
                            E::eq(E::get(cur), E::add(E::get(k), E::c(1))),
                            E::seq(vec![
                                E::aset(E::get(t), E::add(val_base(cap), E::get(i)), E::get(v)),
                                E::set(done, E::c(1)),
                            ]),
                            E::set(i, masked(E::add(E::get(i), E::c(1)), cap)),
                        ),
                    ),
                ]),
            ),
            E::ret(E::aget(E::get(t), E::c(1))),
        ]),
    );

    // map_get(t, k, h) -> value, or -1 when absent
    let (t, k, h, cap, i, cur) = (0, 1, 2, 3, 4, 5);
    b.define(
        &name("map_get"),
        3,
        6,
        E::seq(vec![
            E::set(cap, E::aget(E::get(t), E::c(0))),
            E::set(i, home(k, h, cap)),
            E::loop_(
                E::c(1),
                E::seq(vec![
                    E::set(cur, slot_at(t, two(), E::get(i))),
                    E::if_(E::eq(E::get(cur), E::c(0)), E::ret(E::c(-1)), E::c(0)),
                    E::if_(
                        E::eq(E::get(cur), E::add(E::get(k), E::c(1))),
                        E::ret(slot_at(t, val_base(cap), E::get(i))),
                        E::c(0),
                    ),
                    E::set(i, masked(E::add(E::get(i), E::c(1)), cap)),
                ]),
            ),
            E::c(-1),
        ]),
    );

    // set_add(t, k, h) -> size
    let (t, k, h, cap, i, cur, done) = (0, 1, 2, 3, 4, 5, 6);
    b.define(
        &name("set_add"),
        3,
        7,
        E::seq(vec![
            E::set(cap, E::aget(E::get(t), E::c(0))),
            E::set(i, home(k, h, cap)),
            E::set(done, E::c(0)),
            E::loop_(
                E::eq(E::get(done), E::c(0)),
                E::seq(vec![
                    E::set(cur, slot_at(t, two(), E::get(i))),
                    E::if_(
                        E::eq(E::get(cur), E::c(0)),
                        E::seq(vec![
                            E::aset(E::get(t), E::add(two(), E::get(i)), E::add(E::get(k), E::c(1))),
                            E::aset(E::get(t), E::c(1), E::add(E::aget(E::get(t), E::c(1)), E::c(1))),
                            E::set(done, E::c(1)),
                        ]),
                        E::if_(
                            E::eq(E::get(cur), E::add(E::get(k), E::c(1))),
                            E::set(done, E::c(1)),
                            E::set(i, masked(E::add(E::get(i), E::c(1)), cap)),
                        ),
                    ),
                ]),
            ),
            E::ret(E::aget(E::get(t), E::c(1))),
        ]),
    );

    // set_contains(t, k, h) -> 1 or 0
    let (t, k, h, cap, i, cur) = (0, 1, 2, 3, 4, 5);
    b.define(
        &name("set_contains"),
        3,
        6,
        E::seq(vec![
            E::set(cap, E::aget(E::get(t), E::c(0))),
            E::set(i, home(k, h, cap)),
            E::loop_(
                E::c(1),
                E::seq(vec![
                    E::set(cur, slot_at(t, two(), E::get(i))),
                    E::if_(E::eq(E::get(cur), E::c(0)), E::ret(E::c(0)), E::c(0)),
                    E::if_(E::eq(E::get(cur), E::add(E::get(k), E::c(1))), E::ret(E::c(1)), E::c(0)),
                    E::set(i, masked(E::add(E::get(i), E::c(1)), cap)),
                ]),
            ),
            E::c(0),
        ]),
    );

    // map_put_all(dst, src, h) / set_add_all(dst, src, h) -> dst size
    let (dst, src, h, cap, i, key) = (0, 1, 2, 3, 4, 5);
    for (lib, insert, with_values) in [("map_put_all", "map_put", true), ("set_add_all", "set_add", false)] {
        let insert = b.declare(&name(insert));
        let mut args = vec![E::get(dst), E::sub(E::get(key), E::c(1))];
        if with_values {
            args.push(slot_at(src, val_base(cap), E::get(i)));
        }
        args.push(E::get(h));
        b.define(
            &name(lib),
            3,
            6,
            E::seq(vec![
                E::set(cap, E::aget(E::get(src), E::c(0))),
                E::for_range(
                    i,
                    E::c(0),
                    E::get(cap),
                    E::seq(vec![
                        E::set(key, slot_at(src, two(), E::get(i))),
                        E::if_(E::eq(E::get(key), E::c(0)), E::c(0), E::call(insert, args)),
                    ]),
                ),
                E::ret(E::aget(E::get(dst), E::c(1))),
            ]),
        );
    }

    // map_iterate(t) / set_iterate(t): checksum over occupied slots
    let (t, cap, i, key, acc) = (0, 1, 2, 3, 4);
    for (lib, with_values) in [("map_iterate", true), ("set_iterate", false)] {
        let value = if with_values {
            slot_at(t, val_base(cap), E::get(i))
        } else {
            E::c(0)
        };
        b.define(
            &name(lib),
            1,
            5,
            E::seq(vec![
                E::set(cap, E::aget(E::get(t), E::c(0))),
                E::set(acc, E::c(0)),
                E::for_range(
                    i,
                    E::c(0),
                    E::get(cap),
                    E::seq(vec![
                        E::set(key, slot_at(t, two(), E::get(i))),
                        E::if_(
                            E::eq(E::get(key), E::c(0)),
                            E::c(0),
                            E::set(acc, E::add(E::get(acc), E::add(E::mul(E::get(key), E::c(31)), value))),
                        ),
                    ]),
                ),
                E::ret(E::get(acc)),
            ]),
        );
    }
}

/// Benchmark entry points for one library copy.
fn define_workloads(b: &mut ProgramBuilder, suffix: &str) {
    let lib = |b: &mut ProgramBuilder, n: &str| b.declare(&format!("{n}{suffix}"));
    let hash = || E::fref(FuncId(0));
    let (t, keys, i, acc) = (0, 1, 2, 3);
    let put = lib(b, "map_put");
    b.define(
        &format!("wl_populate{suffix}"),
        2,
        3,
        E::seq(vec![
            E::for_range(
                i,
                E::c(0),
                E::len(E::get(keys)),
                E::call(put, vec![E::get(t), E::aget(E::get(keys), E::get(i)), E::get(i), hash()]),
            ),
            E::ret(E::aget(E::get(t), E::c(1))),
        ]),
    );
    let contains = lib(b, "set_contains");
    b.define(
        &format!("wl_contains{suffix}"),
        2,
        4,
        E::seq(vec![
            E::set(acc, E::c(0)),
            E::for_range(
                i,
                E::c(0),
                E::len(E::get(keys)),
                E::set(
                    acc,
                    E::add(
                        E::get(acc),
                        E::call(contains, vec![E::get(t), E::aget(E::get(keys), E::get(i)), hash()]),
                    ),
                ),
            ),
            E::ret(E::get(acc)),
        ]),
    );
    let put_all = lib(b, "map_put_all");
    b.define(&format!("wl_copy{suffix}"), 2, 2, E::call(put_all, vec![E::get(0), E::get(1), hash()]));
    let iterate = lib(b, "map_iterate");
    b.define(&format!("wl_iterate{suffix}"), 1, 1, E::call(iterate, vec![E::get(0)]));
}

/// `3i^2 + i + s`: distinct for a fixed `s`, and never equal to another
/// such key plus one.
fn init_key(i: Slot, s: Slot) -> Expr {
    E::add(E::add(E::mul(E::c(3), E::mul(E::get(i), E::get(i))), E::get(i)), E::get(s))
}

/// Init-phase code: exercises the standard copy only, with inserts,
/// duplicate inserts, hits and misses, copies and iteration, under every
/// hash function.
fn define_init(b: &mut ProgramBuilder) -> FuncId {
    let f = |b: &mut ProgramBuilder, n: &str| b.declare(n);
    let (map_new, map_put, map_get, map_put_all, map_iterate) = (
        f(b, "map_new"),
        f(b, "map_put"),
        f(b, "map_get"),
        f(b, "map_put_all"),
        f(b, "map_iterate"),
    );
    let (set_new, set_add, set_contains, set_add_all, set_iterate) = (
        f(b, "set_new"),
        f(b, "set_add"),
        f(b, "set_contains"),
        f(b, "set_add_all"),
        f(b, "set_iterate"),
    );
    // init_round(s, h)
    let (s, h, m, m2, st, st2, i, acc) = (0, 1, 2, 3, 4, 5, 6, 7);
    let cap = || E::mul(E::c(4), E::get(s));
    let probe = || E::add(init_key(i, s), E::and(E::get(i), E::c(1)));
    let body = E::seq(vec![
        E::set(acc, E::c(0)),
        E::set(m, E::call(map_new, vec![cap()])),
        E::for_range(
            i,
            E::c(0),
            E::get(s),
            E::call(map_put, vec![E::get(m), init_key(i, s), E::get(i), E::get(h)]),
        ),
        E::for_range(
            i,
            E::c(0),
            E::get(s),
            E::if_(
                E::and(E::get(i), E::c(1)),
                E::call(map_put, vec![E::get(m), init_key(i, s), E::add(E::get(i), E::c(1)), E::get(h)]),
                E::c(0),
            ),
        ),
        E::for_range(
            i,
            E::c(0),
            E::get(s),
            E::set(acc, E::add(E::get(acc), E::call(map_get, vec![E::get(m), probe(), E::get(h)]))),
        ),
        E::set(m2, E::call(map_new, vec![cap()])),
        E::call(map_put_all, vec![E::get(m2), E::get(m), E::get(h)]),
        E::set(acc, E::add(E::get(acc), E::call(map_iterate, vec![E::get(m2)]))),
        E::set(st, E::call(set_new, vec![cap()])),
        E::for_range(i, E::c(0), E::get(s), E::call(set_add, vec![E::get(st), init_key(i, s), E::get(h)])),
        E::for_range(
            i,
            E::c(0),
            E::get(s),
            E::if_(
                E::and(E::get(i), E::c(2)),
                E::call(set_add, vec![E::get(st), init_key(i, s), E::get(h)]),
                E::c(0),
            ),
        ),
        E::for_range(
            i,
            E::c(0),
            E::get(s),
            E::set(acc, E::add(E::get(acc), E::call(set_contains, vec![E::get(st), probe(), E::get(h)]))),
        ),
        E::set(st2, E::call(set_new, vec![cap()])),
        E::call(set_add_all, vec![E::get(st2), E::get(st), E::get(h)]),
        E::set(acc, E::add(E::get(acc), E::call(set_iterate, vec![E::get(st2)]))),
        E::ret(E::get(acc)),
    ]);
    let round = b.define("init_round", 2, 8, body);
    let mut calls = Vec::new();
    for size in INIT_SIZES {
        for hash in HASHES {
            let hash = b.declare(hash);
            calls.push(E::call(round, vec![E::c(size), E::fref(hash)]));
        }
    }
    calls.push(E::c(0));
    let init = b.define("init", 0, 0, E::seq(calls));
    b.set_init(init);
    init
}

pub fn collections_program() -> Program {
    let mut b = ProgramBuilder::new();
    define_hashes(&mut b);
    define_library(&mut b, "");
    define_library(&mut b, CLONE_SUFFIX);
    define_workloads(&mut b, "");
    define_workloads(&mut b, CLONE_SUFFIX);
    define_init(&mut b);
    b.finish()
}

pub fn suite_collections() -> SuiteDefinition {
    let program = Arc::new(collections_program());
    let mut benchmarks = Vec::new();
    let mut comparisons = Vec::new();
    for w in WORKLOADS {
        for (variant, suffix) in [("stdlib", ""), ("clone", CLONE_SUFFIX)] {
            benchmarks.push(BenchmarkDef {
                name: format!("{w}_{variant}"),
                target: program.id_of(&format!("wl_{w}{suffix}")).expect("workload defined"),
                generator: Arc::new(TableInputs { workload: w }),
                parameter_values: vec![64, 256, 1024],
                strategies: vec!["do-nothing"],
                with_init: true,
            });
        }
        comparisons.push(Comparison {
            label: w.to_uppercase(),
            a: format!("{w}_clone"),
            b: format!("{w}_stdlib"),
        });
    }
    SuiteDefinition {
        name: "collections",
        program,
        benchmarks,
        comparisons,
        pollute_setup: None,
        trace_workloads: Vec::new(),
        defaults: RunConfig {
            ops_per_iteration: 100,
            ..RunConfig::default()
        },
    }
}

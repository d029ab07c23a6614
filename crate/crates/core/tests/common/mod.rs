//! Shared fixtures for the integration tests: a seeded random program
//! generator, a seeded call-script generator and a reference evaluator that
//! recounts profile histograms without touching the VM.

#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specvm::interp::SiteProfile;
use specvm::ir::{BinOp, Expr, FuncId, Program, SiteId, Slot, Value, E};
use specvm::jit::KindTag;
use specvm::runtime::VmEvent;

// Frame layout of generated functions.
const PARAMS: u32 = 2;
const SCRATCH: [Slot; 3] = [2, 3, 4];
const COUNTER: Slot = 5;
const ARR: Slot = 6;
const LOCALS: u32 = 7;
const ARR_LEN: i64 = 8;

struct Gen {
    rng: ChaCha8Rng,
    me: u32,
    n: u32,
    calls_left: u32,
    in_loop: bool,
}

impl Gen {
    fn scratch(&mut self) -> Slot {
        SCRATCH[self.rng.gen_range(0..SCRATCH.len())]
    }

    fn any_int_slot(&mut self) -> Slot {
        self.rng.gen_range(0..=SCRATCH[2])
    }

    fn leaf(&mut self) -> Expr {
        match self.rng.gen_range(0..5) {
            0 | 1 => E::c(self.rng.gen_range(-5..20)),
            2 | 3 => E::get(self.any_int_slot()),
            _ => {
                let s = self.any_int_slot();
                E::aget(E::get(ARR), E::and(E::get(s), E::c(ARR_LEN - 1)))
            }
        }
    }

    fn callee_after_me(&mut self) -> Option<FuncId> {
        (self.me + 1 < self.n && self.calls_left > 0).then(|| {
            self.calls_left -= 1;
            FuncId(self.rng.gen_range(self.me + 1..self.n))
        })
    }

    fn expr(&mut self, depth: u32) -> Expr {
        if depth == 0 {
            return self.leaf();
        }
        let d = depth - 1;
        match self.rng.gen_range(0..12) {
            0 | 1 => {
                let op = BinOp::ALL[self.rng.gen_range(0..BinOp::ALL.len())];
                E::bin(op, self.expr(d), self.expr(d))
            }
            2 | 3 => {
                let cond = if self.rng.gen_bool(0.7) {
                    E::lt(self.expr(d), self.expr(d))
                } else {
                    self.expr(d)
                };
                E::if_(cond, self.expr(d), self.expr(d))
            }
            4 => {
                let scrutinee = E::and(self.expr(d), E::c(7));
                let n = self.rng.gen_range(1..=4);
                let mut values: Vec<i64> = (0..8).collect();
                for i in 0..n {
                    let j = self.rng.gen_range(i..values.len());
                    values.swap(i, j);
                }
                let arms = values[..n].iter().map(|&v| (v, self.expr(d))).collect();
                E::switch(scrutinee, arms, self.rng.gen_bool(0.3), self.expr(d))
            }
            5 => {
                let s = self.scratch();
                E::seq(vec![E::set(s, self.expr(d)), self.expr(d)])
            }
            6 => {
                let i = E::and(self.expr(d), E::c(ARR_LEN - 1));
                E::aset(E::get(ARR), i, self.expr(d))
            }
            7 if !self.in_loop => {
                self.in_loop = true;
                let bound = E::and(self.expr(d), E::c(3));
                let body = self.expr(d);
                self.in_loop = false;
                let s = self.scratch();
                E::seq(vec![E::for_range(COUNTER, E::c(0), bound, body), E::get(s)])
            }
            8 => match self.callee_after_me() {
                Some(f) => E::call(f, vec![self.expr(d), self.expr(d)]),
                None => self.leaf(),
            },
            9 => match self.callee_after_me() {
                Some(first) => {
                    let k = self.rng.gen_range(1..=3);
                    let others: Vec<FuncId> =
                        (0..k).map(|_| FuncId(self.rng.gen_range(self.me + 1..self.n))).collect();
                    let sel = E::and(E::get(self.rng.gen_range(0..PARAMS)), E::c(3));
                    let arms = others.iter().enumerate().map(|(i, f)| (i as i64, E::fref(*f))).collect();
                    let callee = E::switch(sel, arms, false, E::fref(first));
                    E::calli(callee, vec![self.expr(d), self.expr(d)])
                }
                None => self.leaf(),
            },
            10 if self.rng.gen_bool(0.2) => E::ret(self.expr(d)),
            _ => self.leaf(),
        }
    }
}

/// A small random program. Every function takes two ints and returns an
/// int; calls only go to higher ids, so recursion is impossible, loops run
/// at most three times and every array index is masked into range.
pub fn random_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let mut fns = Vec::new();
    for me in 0..n {
        let mut g = Gen {
            rng: ChaCha8Rng::seed_from_u64(rng.gen()),
            me,
            n,
            calls_left: 3,
            in_loop: false,
        };
        let stmts = g.rng.gen_range(1..=3);
        let mut body = vec![E::set(ARR, E::newarr(E::c(ARR_LEN)))];
        for _ in 0..stmts {
            let depth = g.rng.gen_range(2..=4);
            body.push(g.expr(depth));
        }
        fns.push(specvm::ir::Function::new(FuncId(me), format!("f{me}"), PARAMS, LOCALS, E::seq(body)));
    }
    Program::new(fns, None)
}

/// A call script in three phases: narrow arguments, then wider ones, then
/// arbitrary values. The phase changes are what break speculations.
pub fn random_script(seed: u64, program: &Program, calls: usize) -> Vec<(FuncId, Vec<Value>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = program.functions.len() as u32;
    (0..calls)
        .map(|i| {
            let phase = i * 3 / calls.max(1);
            let mut arg = || match phase {
                0 => rng.gen_range(0..2),
                1 => rng.gen_range(-8..8),
                _ => rng.gen_range(-1000..1000),
            };
            let (a, b) = (arg(), arg());
            let f = if rng.gen_bool(0.85) { FuncId(0) } else { FuncId(rng.gen_range(0..n)) };
            (f, vec![Value::Int(a), Value::Int(b)])
        })
        .collect()
}

#[derive(Clone, Debug)]
enum RV {
    Int(i64),
    Arr(Rc<RefCell<Vec<i64>>>),
    Func(FuncId),
}

impl RV {
    fn int(&self) -> i64 {
        match self {
            RV::Int(v) => *v,
            other => panic!("reference evaluator expected an int, found {other:?}"),
        }
    }
}

/// Histograms recounted by [`Reference`].
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub invocations: BTreeMap<FuncId, u64>,
    pub back_edges: BTreeMap<FuncId, u64>,
    /// (taken, not taken) for `If` and loop sites.
    pub branches: BTreeMap<(FuncId, SiteId), (u64, u64)>,
    /// Entry count per arm index, then the default count.
    pub switches: BTreeMap<(FuncId, SiteId), (Vec<u64>, u64)>,
    pub calls: BTreeMap<(FuncId, SiteId), BTreeMap<FuncId, u64>>,
}

/// Straightforward tree evaluator used only as a test oracle.
pub struct Reference<'p> {
    program: &'p Program,
    pub counts: Counts,
}

enum Flow {
    Ret(RV),
}

impl<'p> Reference<'p> {
    pub fn new(program: &'p Program) -> Self {
        Reference {
            program,
            counts: Counts::default(),
        }
    }

    pub fn run(&mut self, f: FuncId, args: &[Value]) -> i64 {
        let args = args
            .iter()
            .map(|v| match v {
                Value::Int(x) => RV::Int(*x),
                Value::FuncRef(g) => RV::Func(*g),
                Value::Array(a) => RV::Arr(Rc::new(RefCell::new(a.to_vec()))),
            })
            .collect();
        self.invoke(f, args).int()
    }

    fn invoke(&mut self, f: FuncId, args: Vec<RV>) -> RV {
        *self.counts.invocations.entry(f).or_default() += 1;
        let func = &self.program.functions[f.index()];
        let mut frame = args;
        frame.resize(func.local_count.max(func.param_count) as usize, RV::Int(0));
        match self.eval(f, &func.body, &mut frame) {
            Ok(v) | Err(Flow::Ret(v)) => v,
        }
    }

    fn eval(&mut self, f: FuncId, e: &Expr, fr: &mut Vec<RV>) -> Result<RV, Flow> {
        Ok(match e {
            Expr::ConstInt(v) => RV::Int(*v),
            Expr::LocalGet(s) => fr[*s as usize].clone(),
            Expr::LocalSet(s, v) => {
                let v = self.eval(f, v, fr)?;
                fr[*s as usize] = v.clone();
                v
            }
            Expr::ArrayLen(a) => match self.eval(f, a, fr)? {
                RV::Arr(a) => RV::Int(a.borrow().len() as i64),
                other => panic!("len of {other:?}"),
            },
            Expr::ArrayGet(a, i) => {
                let RV::Arr(a) = self.eval(f, a, fr)? else { panic!("aget on non-array") };
                let i = self.eval(f, i, fr)?.int();
                let v = a.borrow()[i as usize];
                RV::Int(v)
            }
            Expr::ArraySet(a, i, v) => {
                let RV::Arr(a) = self.eval(f, a, fr)? else { panic!("aset on non-array") };
                let i = self.eval(f, i, fr)?.int();
                let v = self.eval(f, v, fr)?.int();
                a.borrow_mut()[i as usize] = v;
                RV::Int(v)
            }
            Expr::ArrayNew(n) => {
                let n = self.eval(f, n, fr)?.int();
                RV::Arr(Rc::new(RefCell::new(vec![0; n as usize])))
            }
            Expr::FuncRef(g) => RV::Func(*g),
            Expr::BinOp(op, a, b) => {
                let x = self.eval(f, a, fr)?;
                let y = self.eval(f, b, fr)?;
                match (op, x, y) {
                    (BinOp::Eq, RV::Func(p), RV::Func(q)) => RV::Int((p == q) as i64),
                    (op, x, y) => RV::Int(reference_binop(*op, x.int(), y.int())),
                }
            }
            Expr::Seq(es) => {
                let mut last = RV::Int(0);
                for e in es {
                    last = self.eval(f, e, fr)?;
                }
                last
            }
            Expr::If {
                site,
                cond,
                then_branch,
                else_branch,
            } => {
                let c = self.eval(f, cond, fr)?.int() != 0;
                let b = self.counts.branches.entry((f, *site)).or_default();
                if c {
                    b.0 += 1;
                    self.eval(f, then_branch, fr)?
                } else {
                    b.1 += 1;
                    self.eval(f, else_branch, fr)?
                }
            }
            Expr::Switch {
                site,
                scrutinee,
                arms,
                fallthrough,
                default,
            } => {
                let v = self.eval(f, scrutinee, fr)?.int();
                let entry = self
                    .counts
                    .switches
                    .entry((f, *site))
                    .or_insert_with(|| (vec![0; arms.len()], 0));
                match arms.iter().position(|a| a.value == v) {
                    None => {
                        entry.1 += 1;
                        self.eval(f, default, fr)?
                    }
                    Some(k) => {
                        entry.0[k] += 1;
                        let end = if *fallthrough { arms.len() } else { k + 1 };
                        let mut last = RV::Int(0);
                        for a in &arms[k..end] {
                            last = self.eval(f, &a.body, fr)?;
                        }
                        last
                    }
                }
            }
            Expr::Loop { site, cond, body } => {
                loop {
                    let go = self.eval(f, cond, fr)?.int() != 0;
                    let b = self.counts.branches.entry((f, *site)).or_default();
                    if go {
                        b.0 += 1;
                    } else {
                        b.1 += 1;
                        break;
                    }
                    self.eval(f, body, fr)?;
                    *self.counts.back_edges.entry(f).or_default() += 1;
                }
                RV::Int(0)
            }
            Expr::CallDirect { site, callee, args } => {
                let vals = args.iter().map(|a| self.eval(f, a, fr)).collect::<Result<Vec<_>, _>>()?;
                *self.counts.calls.entry((f, *site)).or_default().entry(*callee).or_default() += 1;
                self.invoke(*callee, vals)
            }
            Expr::CallIndirect { site, callee, args } => {
                let RV::Func(g) = self.eval(f, callee, fr)? else { panic!("call of non-function") };
                let vals = args.iter().map(|a| self.eval(f, a, fr)).collect::<Result<Vec<_>, _>>()?;
                *self.counts.calls.entry((f, *site)).or_default().entry(g).or_default() += 1;
                self.invoke(g, vals)
            }
            Expr::Return(v) => return Err(Flow::Ret(self.eval(f, v, fr)?)),
        })
    }
}

fn reference_binop(op: BinOp, a: i64, b: i64) -> i64 {
    match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Shl => ((a as u64) << (b as u64 % 64)) as i64,
        BinOp::And => a & b,
        BinOp::Lt => i64::from(a < b),
        BinOp::Eq => i64::from(a == b),
    }
}

/// The same histograms read back out of a VM profile store, with zero
/// entries dropped so they compare against [`Counts`].
pub fn counts_from_store(program: &Program, store: &specvm::interp::ProfileStore) -> Counts {
    let mut c = Counts::default();
    for f in &program.functions {
        let p = store.function(f.id);
        if p.invocations > 0 {
            c.invocations.insert(f.id, p.invocations);
        }
        if p.back_edges > 0 {
            c.back_edges.insert(f.id, p.back_edges);
        }
        for (site, sp) in p.sites() {
            if sp.total() == 0 {
                continue;
            }
            match sp {
                SiteProfile::Branch(_, b) => {
                    c.branches.insert((f.id, site), (b.taken, b.not_taken));
                }
                SiteProfile::Switch(s) => {
                    let arms = s.entries().map(|(_, n)| n).collect();
                    c.switches.insert((f.id, site), (arms, s.default_count));
                }
                SiteProfile::Call(t) => {
                    c.calls.insert((f.id, site), t.by_frequency().into_iter().collect());
                }
            }
        }
    }
    c
}

/// Deopt count per speculation key, resolved through the compile events
/// that precede each deopt.
pub fn deopts_by_key(events: &[VmEvent]) -> HashMap<(FuncId, SiteId, KindTag), u32> {
    let mut methods = HashMap::new();
    let mut out = HashMap::new();
    for e in events {
        match e {
            VmEvent::Compile(m) => {
                methods.insert((m.function, m.version), m.clone());
            }
            VmEvent::Deopt {
                function,
                version,
                request,
            } => {
                let m = &methods[&(*function, *version)];
                let key = m.speculation(request.guard).expect("deopt guard is known").key();
                *out.entry(key).or_default() += 1;
            }
            VmEvent::Init(_) => {}
        }
    }
    out
}

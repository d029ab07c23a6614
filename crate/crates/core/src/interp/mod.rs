//! Profiling interpreter.
//!
//! The interpreter walks the guest tree, bumps the profile counters of every
//! site it executes and charges `interp_node_cost` per evaluated node. Calls
//! leave the interpreter through [`Machine::call`], which is where the
//! tiered runtime decides whether the callee runs interpreted or compiled.

mod cost;
mod profile;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use cost::{CostLedger, CostModel};
pub use profile::{
    branch_probability, call_site_morphism, BranchProfile, CallTargetProfile, FunctionProfile,
    Morphism, ProfileError, ProfileStore, SiteProfile, SwitchProfile,
};
pub(crate) use profile::classify;

use crate::ir::{ArrayRef, ElemKind, Expr, FuncId, Function, Program, SiteId, Value};

/// Maximum guest call depth before a run is aborted.
pub const MAX_CALL_DEPTH: usize = 256;

/// Longest array `newarr` may allocate.
pub const MAX_ARRAY_LEN: i64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuntimeErrorKind {
    IndexOutOfBounds { index: i64, len: usize },
    NotCallable { found: &'static str },
    Arity { callee: String, expected: u32, found: usize },
    TypeMismatch { expected: &'static str, found: &'static str },
    ByteOutOfRange { value: i64 },
    BadArrayLength { len: i64 },
    UnknownFunction { id: FuncId },
    StackOverflow,
}

impl fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeErrorKind::IndexOutOfBounds { index, len } => {
                write!(f, "array index {index} out of bounds for length {len}")
            }
            RuntimeErrorKind::NotCallable { found } => write!(f, "cannot call a {found}"),
            RuntimeErrorKind::Arity {
                callee,
                expected,
                found,
            } => write!(f, "`{callee}` takes {expected} argument(s), got {found}"),
            RuntimeErrorKind::TypeMismatch { expected, found } => {
                write!(f, "expected {expected}, found {found}")
            }
            RuntimeErrorKind::ByteOutOfRange { value } => {
                write!(f, "value {value} does not fit a byte array element")
            }
            RuntimeErrorKind::BadArrayLength { len } => write!(f, "invalid array length {len}"),
            RuntimeErrorKind::UnknownFunction { id } => write!(f, "unknown function {id}"),
            RuntimeErrorKind::StackOverflow => write!(f, "call depth exceeds {MAX_CALL_DEPTH}"),
        }
    }
}

/// Guest runtime failure, naming the function and the nearest site.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("runtime error in `{function}`{}: {kind}", site.map(|s| format!(" near site {s}")).unwrap_or_default())]
pub struct RuntimeError {
    pub function: String,
    pub site: Option<SiteId>,
    pub kind: RuntimeErrorKind,
}

/// Execution environment seen by the interpreter and by compiled code.
pub trait Machine {
    fn program(&self) -> &Arc<Program>;
    fn model(&self) -> &CostModel;
    fn profiles(&mut self) -> &mut ProfileStore;
    fn ledger(&mut self) -> &mut CostLedger;
    /// Performs a guest call. The call-site overhead has already been charged.
    fn call(&mut self, callee: FuncId, args: Vec<Value>) -> Result<Value, RuntimeError>;
    /// Array store hook; the runtime journals stores made under compiled frames.
    fn store(&mut self, arr: &ArrayRef, index: usize, value: i64) {
        arr.store(index, value);
    }
    /// Accounts for a new guest frame, real or inlined.
    fn enter_frame(&mut self, callee: FuncId) -> Result<(), RuntimeError>;
    fn leave_frame(&mut self);
}

/// Depth bookkeeping shared by the machines.
pub(crate) fn push_depth(depth: &mut usize, program: &Program, callee: FuncId) -> Result<(), RuntimeError> {
    if *depth >= MAX_CALL_DEPTH {
        return Err(RuntimeError {
            function: program.name_of(callee).to_string(),
            site: None,
            kind: RuntimeErrorKind::StackOverflow,
        });
    }
    *depth += 1;
    Ok(())
}

/// Non-local exit from expression evaluation.
pub(crate) enum Exit {
    Return(Value),
    Error(RuntimeError),
}

impl From<RuntimeError> for Exit {
    fn from(e: RuntimeError) -> Exit {
        Exit::Error(e)
    }
}

pub(crate) fn error_in(f: &Function, site: Option<SiteId>, kind: RuntimeErrorKind) -> RuntimeError {
    RuntimeError {
        function: f.name.clone(),
        site,
        kind,
    }
}

/// Checks argument count against the callee's parameters and lays out its frame.
pub(crate) fn make_frame(f: &Function, args: Vec<Value>, site: Option<SiteId>, caller: &Function) -> Result<Vec<Value>, RuntimeError> {
    if args.len() != f.param_count as usize {
        return Err(error_in(
            caller,
            site,
            RuntimeErrorKind::Arity {
                callee: f.name.clone(),
                expected: f.param_count,
                found: args.len(),
            },
        ));
    }
    let mut frame = args;
    frame.resize(f.local_count.max(f.param_count) as usize, Value::Int(0));
    Ok(frame)
}

pub(crate) fn type_error(expected: &'static str, found: &Value) -> RuntimeErrorKind {
    RuntimeErrorKind::TypeMismatch {
        expected,
        found: found.kind_name(),
    }
}

pub(crate) fn check_index(arr: &ArrayRef, index: i64) -> Result<usize, RuntimeErrorKind> {
    let len = arr.len();
    if index < 0 || index as usize >= len {
        Err(RuntimeErrorKind::IndexOutOfBounds { index, len })
    } else {
        Ok(index as usize)
    }
}

pub(crate) fn check_store(arr: &ArrayRef, value: i64) -> Result<(), RuntimeErrorKind> {
    if arr.kind() == ElemKind::Byte && !(-128..=127).contains(&value) {
        Err(RuntimeErrorKind::ByteOutOfRange { value })
    } else {
        Ok(())
    }
}

pub(crate) fn new_array(len: i64) -> Result<ArrayRef, RuntimeErrorKind> {
    if !(0..=MAX_ARRAY_LEN).contains(&len) {
        return Err(RuntimeErrorKind::BadArrayLength { len });
    }
    Ok(ArrayRef::ints(vec![0; len as usize]))
}

pub(crate) fn binop_values(op: crate::ir::BinOp, a: Value, b: Value) -> Result<i64, RuntimeErrorKind> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok(op.apply(x, y)),
        (Value::FuncRef(x), Value::FuncRef(y)) if op == crate::ir::BinOp::Eq => Ok((x == y) as i64),
        (Value::Int(_), other) | (other, _) => Err(type_error("int", &other)),
    }
}

struct Frame<'p, 'm, M: Machine> {
    m: &'m mut M,
    program: &'p Program,
    func: &'p Function,
    id: FuncId,
    locals: Vec<Value>,
    /// Cycles not yet flushed to the ledger.
    pending: u64,
    node_cost: u64,
    last_site: Option<SiteId>,
}

impl<'p, 'm, M: Machine> Frame<'p, 'm, M> {
    fn fail(&self, kind: RuntimeErrorKind) -> Exit {
        Exit::Error(error_in(self.func, self.last_site, kind))
    }

    fn flush(&mut self) {
        if self.pending > 0 {
            self.m.ledger().charge(self.pending);
            self.pending = 0;
        }
    }

    fn int(&mut self, e: &'p Expr) -> Result<i64, Exit> {
        match self.eval(e)? {
            Value::Int(v) => Ok(v),
            other => Err(self.fail(type_error("int", &other))),
        }
    }

    fn array(&mut self, e: &'p Expr) -> Result<ArrayRef, Exit> {
        match self.eval(e)? {
            Value::Array(a) => Ok(a),
            other => Err(self.fail(type_error("array", &other))),
        }
    }

    fn call(&mut self, site: SiteId, callee: FuncId, args: Vec<Value>) -> Result<Value, Exit> {
        self.m.profiles().record_call(self.id, site, callee);
        self.pending += self.m.model().call_overhead_interp;
        self.flush();
        Ok(self.m.call(callee, args)?)
    }

    fn eval(&mut self, e: &'p Expr) -> Result<Value, Exit> {
        self.pending += self.node_cost;
        match e {
            Expr::ConstInt(v) => Ok(Value::Int(*v)),
            Expr::LocalGet(s) => Ok(self.locals[*s as usize].clone()),
            Expr::LocalSet(s, v) => {
                let v = self.eval(v)?;
                self.locals[*s as usize] = v.clone();
                Ok(v)
            }
            Expr::ArrayLen(a) => Ok(Value::Int(self.array(a)?.len() as i64)),
            Expr::ArrayGet(a, i) => {
                let arr = self.array(a)?;
                let idx = self.int(i)?;
                let idx = check_index(&arr, idx).map_err(|k| self.fail(k))?;
                Ok(Value::Int(arr.get(idx).unwrap()))
            }
            Expr::ArraySet(a, i, v) => {
                let arr = self.array(a)?;
                let idx = self.int(i)?;
                let v = self.int(v)?;
                let idx = check_index(&arr, idx).map_err(|k| self.fail(k))?;
                check_store(&arr, v).map_err(|k| self.fail(k))?;
                self.m.store(&arr, idx, v);
                Ok(Value::Int(v))
            }
            Expr::ArrayNew(n) => {
                let n = self.int(n)?;
                Ok(Value::Array(new_array(n).map_err(|k| self.fail(k))?))
            }
            Expr::FuncRef(f) => Ok(Value::FuncRef(*f)),
            Expr::BinOp(op, a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                Ok(Value::Int(binop_values(*op, a, b).map_err(|k| self.fail(k))?))
            }
            Expr::Seq(es) => {
                let mut last = Value::Int(0);
                for e in es {
                    last = self.eval(e)?;
                }
                Ok(last)
            }
            Expr::If {
                site,
                cond,
                then_branch,
                else_branch,
            } => {
                self.last_site = Some(*site);
                let taken = self.int(cond)? != 0;
                self.m.profiles().record_branch(self.id, *site, taken);
                if taken {
                    self.eval(then_branch)
                } else {
                    self.eval(else_branch)
                }
            }
            Expr::Switch {
                site,
                scrutinee,
                arms,
                fallthrough,
                default,
            } => {
                self.last_site = Some(*site);
                let v = self.int(scrutinee)?;
                let matched = arms.iter().position(|a| a.value == v);
                self.m.profiles().record_switch(self.id, *site, matched);
                match matched {
                    None => self.eval(default),
                    Some(k) if !*fallthrough => self.eval(&arms[k].body),
                    Some(k) => {
                        let mut last = Value::Int(0);
                        for a in &arms[k..] {
                            last = self.eval(&a.body)?;
                        }
                        Ok(last)
                    }
                }
            }
            Expr::Loop { site, cond, body } => {
                loop {
                    self.last_site = Some(*site);
                    let go = self.int(cond)? != 0;
                    self.m.profiles().record_branch(self.id, *site, go);
                    if !go {
                        break;
                    }
                    self.eval(body)?;
                    self.m.profiles().record_back_edge(self.id);
                }
                Ok(Value::Int(0))
            }
            Expr::CallDirect { site, callee, args } => {
                self.last_site = Some(*site);
                let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                let Some(target) = self.program.function(*callee) else {
                    return Err(self.fail(RuntimeErrorKind::UnknownFunction { id: *callee }));
                };
                if vals.len() != target.param_count as usize {
                    return Err(self.fail(RuntimeErrorKind::Arity {
                        callee: target.name.clone(),
                        expected: target.param_count,
                        found: vals.len(),
                    }));
                }
                self.call(*site, *callee, vals)
            }
            Expr::CallIndirect { site, callee, args } => {
                self.last_site = Some(*site);
                let target = match self.eval(callee)? {
                    Value::FuncRef(f) => f,
                    other => {
                        return Err(self.fail(RuntimeErrorKind::NotCallable {
                            found: other.kind_name(),
                        }))
                    }
                };
                let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                let Some(tf) = self.program.function(target) else {
                    return Err(self.fail(RuntimeErrorKind::UnknownFunction { id: target }));
                };
                if vals.len() != tf.param_count as usize {
                    return Err(self.fail(RuntimeErrorKind::Arity {
                        callee: tf.name.clone(),
                        expected: tf.param_count,
                        found: vals.len(),
                    }));
                }
                self.call(*site, target, vals)
            }
            Expr::Return(v) => {
                let v = self.eval(v)?;
                Err(Exit::Return(v))
            }
        }
    }
}

/// Interprets one invocation of `f` on `m`, profiling as it goes.
///
/// Counts the invocation, records every executed site and charges
/// `interp_node_cost` per evaluated node plus `call_overhead_interp` per
/// call made. Nested calls are dispatched through [`Machine::call`].
pub fn interpret<M: Machine>(m: &mut M, f: FuncId, args: Vec<Value>) -> Result<Value, RuntimeError> {
    let program = Arc::clone(m.program());
    let Some(func) = program.function(f) else {
        return Err(RuntimeError {
            function: format!("{f}"),
            site: None,
            kind: RuntimeErrorKind::UnknownFunction { id: f },
        });
    };
    let locals = make_frame(func, args, None, func)?;
    m.profiles().record_invocation(f);
    let node_cost = m.model().interp_node_cost;
    let mut frame = Frame {
        m,
        program: &program,
        func,
        id: f,
        locals,
        pending: 0,
        node_cost,
        last_site: None,
    };
    let r = frame.eval(&func.body);
    frame.flush();
    match r {
        Ok(v) | Err(Exit::Return(v)) => Ok(v),
        Err(Exit::Error(e)) => Err(e),
    }
}

/// A machine that interprets everything, including callees.
pub struct Interpreter<'a> {
    program: Arc<Program>,
    model: &'a CostModel,
    profiles: &'a mut ProfileStore,
    ledger: &'a mut CostLedger,
    depth: usize,
}

impl<'a> Interpreter<'a> {
    pub fn new(
        program: Arc<Program>,
        model: &'a CostModel,
        profiles: &'a mut ProfileStore,
        ledger: &'a mut CostLedger,
    ) -> Self {
        Interpreter {
            program,
            model,
            profiles,
            ledger,
            depth: 0,
        }
    }

    pub fn run(&mut self, f: FuncId, args: Vec<Value>) -> Result<Value, RuntimeError> {
        interpret(self, f, args)
    }
}

impl Machine for Interpreter<'_> {
    fn program(&self) -> &Arc<Program> {
        &self.program
    }

    fn model(&self) -> &CostModel {
        self.model
    }

    fn profiles(&mut self) -> &mut ProfileStore {
        self.profiles
    }

    fn ledger(&mut self) -> &mut CostLedger {
        self.ledger
    }

    fn call(&mut self, callee: FuncId, args: Vec<Value>) -> Result<Value, RuntimeError> {
        self.enter_frame(callee)?;
        let r = interpret(self, callee, args);
        self.leave_frame();
        r
    }

    fn enter_frame(&mut self, callee: FuncId) -> Result<(), RuntimeError> {
        push_depth(&mut self.depth, &self.program, callee)
    }

    fn leave_frame(&mut self) {
        self.depth -= 1;
    }
}

/// Polynomial rolling hash with multiplier 31 modulo 2^32, as a signed
/// 32-bit value. Computed directly on the host, independent of guest code.
pub fn poly_hash_oracle(bytes: &[i8]) -> i64 {
    let mut h: i32 = 0;
    for &b in bytes {
        h = h.wrapping_mul(31).wrapping_add(b as i32);
    }
    h as i64
}

//! Execution of compiled code.

use std::sync::Arc;

use super::{CNode, CompiledMethod, GuardId, GuardTest, InlineBody};
use crate::interp::{
    binop_values, check_index, check_store, error_in, new_array, type_error, Machine, RuntimeError, RuntimeErrorKind,
};
use crate::ir::{ArrayRef, FuncId, Program, SiteId, Value};

/// Failed speculation, identified by its guard and the site it protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeoptRequest {
    pub guard: GuardId,
    pub function: FuncId,
    pub site: SiteId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Completed(Value),
    Deopt(DeoptRequest),
}

enum Exit {
    Return(Value),
    Error(Box<RuntimeError>),
    Deopt(GuardId),
}

impl From<RuntimeError> for Exit {
    fn from(e: RuntimeError) -> Exit {
        Exit::Error(Box::new(e))
    }
}

struct Costs {
    node: u64,
    guard: u64,
    bounds_check: u64,
    call: u64,
}

struct Scope {
    function: FuncId,
    site: Option<SiteId>,
}

struct Exec<'a, M: Machine> {
    m: &'a mut M,
    program: &'a Program,
    locals: Vec<Value>,
    pending: u64,
    costs: Costs,
    scopes: Vec<Scope>,
}

/// Runs `method` on `args`. Returns the value on the speculation-consistent
/// path, or the failing guard without completing the function.
pub fn execute_compiled<M: Machine>(
    m: &mut M,
    method: &CompiledMethod,
    args: Vec<Value>,
) -> Result<Completion, RuntimeError> {
    let program = Arc::clone(m.program());
    let func = program
        .function(method.function)
        .expect("compiled method of a function outside the program");
    let mut locals = crate::interp::make_frame(func, args, None, func)?;
    locals.resize(method.frame_size.max(locals.len() as u32) as usize, Value::Int(0));
    let model = m.model();
    let costs = Costs {
        node: model.compiled_node_cost,
        guard: model.guard_cost,
        bounds_check: model.bounds_check_cost,
        call: model.call_overhead_compiled,
    };
    let mut x = Exec {
        m,
        program: &program,
        locals,
        pending: 0,
        costs,
        scopes: vec![Scope {
            function: method.function,
            site: None,
        }],
    };
    let r = x.eval(&method.body);
    x.flush();
    match r {
        Ok(v) | Err(Exit::Return(v)) => Ok(Completion::Completed(v)),
        Err(Exit::Error(e)) => Err(*e),
        Err(Exit::Deopt(guard)) => {
            let spec = method.speculation(guard).expect("guard without speculation");
            Ok(Completion::Deopt(DeoptRequest {
                guard,
                function: spec.function,
                site: spec.site,
            }))
        }
    }
}

impl<M: Machine> Exec<'_, M> {
    fn flush(&mut self) {
        if self.pending > 0 {
            self.m.ledger().charge(self.pending);
            self.pending = 0;
        }
    }

    fn at(&mut self, site: SiteId) {
        self.scopes.last_mut().unwrap().site = Some(site);
    }

    fn fail(&self, kind: RuntimeErrorKind) -> Exit {
        let scope = self.scopes.last().unwrap();
        let f = self.program.function(scope.function).unwrap();
        Exit::Error(Box::new(error_in(f, scope.site, kind)))
    }

    fn int(&mut self, n: &CNode) -> Result<i64, Exit> {
        match self.eval(n)? {
            Value::Int(v) => Ok(v),
            other => Err(self.fail(type_error("int", &other))),
        }
    }

    fn array(&mut self, n: &CNode) -> Result<ArrayRef, Exit> {
        match self.eval(n)? {
            Value::Array(a) => Ok(a),
            other => Err(self.fail(type_error("array", &other))),
        }
    }

    fn eval_all(&mut self, ns: &[CNode]) -> Result<Vec<Value>, Exit> {
        ns.iter().map(|n| self.eval(n)).collect()
    }

    fn call(&mut self, callee: FuncId, args: Vec<Value>) -> Result<Value, Exit> {
        let Some(target) = self.program.function(callee) else {
            return Err(self.fail(RuntimeErrorKind::UnknownFunction { id: callee }));
        };
        if args.len() != target.param_count as usize {
            return Err(self.fail(RuntimeErrorKind::Arity {
                callee: target.name.clone(),
                expected: target.param_count,
                found: args.len(),
            }));
        }
        self.pending += self.costs.call;
        self.flush();
        Ok(self.m.call(callee, args)?)
    }

    fn inline(&mut self, t: &InlineBody, args: Vec<Value>) -> Result<Value, Exit> {
        self.flush();
        self.m.enter_frame(t.callee)?;
        let base = t.base as usize;
        let n = args.len();
        for (k, v) in args.into_iter().enumerate() {
            self.locals[base + k] = v;
        }
        for slot in &mut self.locals[base + n..base + t.locals as usize] {
            *slot = Value::Int(0);
        }
        self.scopes.push(Scope {
            function: t.callee,
            site: None,
        });
        let r = match self.eval(&t.body) {
            Ok(v) | Err(Exit::Return(v)) => Ok(v),
            Err(e) => Err(e),
        };
        self.scopes.pop();
        self.m.leave_frame();
        r
    }

    fn eval(&mut self, n: &CNode) -> Result<Value, Exit> {
        match n {
            CNode::Guard { .. } => self.pending += self.costs.guard,
            CNode::ArrayGet { checked: true, .. } | CNode::ArraySet { checked: true, .. } => {
                self.pending += self.costs.node + self.costs.bounds_check
            }
            _ => self.pending += self.costs.node,
        }
        match n {
            CNode::Const(v) => Ok(Value::Int(*v)),
            CNode::Get(s) => Ok(self.locals[*s as usize].clone()),
            CNode::Set(s, v) => {
                let v = self.eval(v)?;
                self.locals[*s as usize] = v.clone();
                Ok(v)
            }
            CNode::Len(a) => Ok(Value::Int(self.array(a)?.len() as i64)),
            CNode::ArrayGet { arr, index, .. } => {
                let arr = self.array(arr)?;
                let i = self.int(index)?;
                let i = check_index(&arr, i).map_err(|k| self.fail(k))?;
                Ok(Value::Int(arr.get(i).unwrap()))
            }
            CNode::ArraySet { arr, index, value, .. } => {
                let arr = self.array(arr)?;
                let i = self.int(index)?;
                let v = self.int(value)?;
                let i = check_index(&arr, i).map_err(|k| self.fail(k))?;
                check_store(&arr, v).map_err(|k| self.fail(k))?;
                self.m.store(&arr, i, v);
                Ok(Value::Int(v))
            }
            CNode::NewArr(len) => {
                let len = self.int(len)?;
                Ok(Value::Array(new_array(len).map_err(|k| self.fail(k))?))
            }
            CNode::FuncRef(f) => Ok(Value::FuncRef(*f)),
            CNode::Bin(op, a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                Ok(Value::Int(binop_values(*op, a, b).map_err(|k| self.fail(k))?))
            }
            CNode::Seq(ns) => {
                let mut last = Value::Int(0);
                for n in ns {
                    last = self.eval(n)?;
                }
                Ok(last)
            }
            CNode::If {
                site,
                cond,
                then_branch,
                else_branch,
            } => {
                self.at(*site);
                if self.int(cond)? != 0 {
                    self.eval(then_branch)
                } else {
                    self.eval(else_branch)
                }
            }
            CNode::Guard {
                guard,
                site,
                test,
                expect,
                body,
            } => {
                self.at(*site);
                let v = self.int(test)?;
                let pass = match expect {
                    GuardTest::Truthy(t) => (v != 0) == *t,
                    GuardTest::Equals(c) => v == *c,
                };
                if !pass {
                    return Err(Exit::Deopt(*guard));
                }
                self.eval(body)
            }
            CNode::Switch {
                site,
                guard,
                scrutinee,
                labels,
                entry,
                bodies,
                fallthrough,
                default,
                compares,
            } => {
                self.at(*site);
                self.pending += compares * self.costs.guard;
                let v = self.int(scrutinee)?;
                let deopt = || Exit::Deopt(guard.expect("pruned switch without guard"));
                match labels.iter().position(|&l| l == v) {
                    None => match default {
                        Some(d) => self.eval(d),
                        None => Err(deopt()),
                    },
                    Some(k) if !entry[k] => Err(deopt()),
                    Some(k) => {
                        let end = if *fallthrough { bodies.len() } else { k + 1 };
                        let mut last = Value::Int(0);
                        for body in &bodies[k..end] {
                            match body {
                                Some(b) => last = self.eval(b)?,
                                None => return Err(deopt()),
                            }
                        }
                        Ok(last)
                    }
                }
            }
            CNode::Loop { site, cond, body } => {
                loop {
                    self.at(*site);
                    if self.int(cond)? == 0 {
                        break;
                    }
                    self.eval(body)?;
                }
                Ok(Value::Int(0))
            }
            CNode::Call { site, callee, args } => {
                self.at(*site);
                let args = self.eval_all(args)?;
                self.call(*callee, args)
            }
            CNode::CallIndirect { site, callee, args } => {
                self.at(*site);
                let target = self.callee(callee)?;
                let args = self.eval_all(args)?;
                self.call(target, args)
            }
            CNode::Inline { site, args, target } => {
                self.at(*site);
                let args = self.eval_all(args)?;
                self.inline(target, args)
            }
            CNode::Dispatch {
                site,
                guard,
                callee,
                args,
                targets,
            } => {
                self.at(*site);
                let f = self.callee(callee)?;
                let args = self.eval_all(args)?;
                for t in targets {
                    self.pending += self.costs.guard;
                    if t.callee == f {
                        return self.inline(t, args);
                    }
                }
                Err(Exit::Deopt(*guard))
            }
            CNode::Return(v) => {
                let v = self.eval(v)?;
                Err(Exit::Return(v))
            }
        }
    }

    fn callee(&mut self, n: &CNode) -> Result<FuncId, Exit> {
        match self.eval(n)? {
            Value::FuncRef(f) => Ok(f),
            other => Err(self.fail(RuntimeErrorKind::NotCallable {
                found: other.kind_name(),
            })),
        }
    }
}

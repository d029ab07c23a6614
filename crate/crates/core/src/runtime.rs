//! Tiered VM orchestration.
//!
//! A [`VmInstance`] interprets every function until its hotness reaches the
//! compile threshold, then runs the compiled version. A failing guard rolls
//! back the array writes of the compiled invocation, blacklists the
//! speculation, demotes the method and re-runs the invocation in the
//! interpreter.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::interp::{interpret, push_depth, CostLedger, CostModel, Machine, ProfileStore, RuntimeError};
use crate::ir::{ArrayRef, FuncId, Program, Value};
use crate::jit::{compile, execute_compiled, AssumptionBlacklist, CompileError, CompiledMethod, Completion, DeoptRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Interpreted,
    Compiled(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodState {
    pub tier: Tier,
    pub hotness_at_last_compile: u64,
    /// Hotness the method must reach before it may be compiled again.
    pub pending_recompile_at: Option<u64>,
    /// Set when the function exceeds the compiled size budget.
    pub not_compilable: bool,
}

impl Default for MethodState {
    fn default() -> Self {
        MethodState {
            tier: Tier::Interpreted,
            hotness_at_last_compile: 0,
            pending_recompile_at: None,
            not_compilable: false,
        }
    }
}

/// Which event streams are echoed to standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogConfig {
    pub compile: bool,
    pub deopt: bool,
    pub init: bool,
}

impl LogConfig {
    /// Parses a comma-separated stream list such as `compile,deopt`.
    pub fn parse(s: &str) -> Result<LogConfig, String> {
        let mut c = LogConfig::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "compile" => c.compile = true,
                "deopt" => c.deopt = true,
                "init" => c.init = true,
                other => return Err(format!("unknown log stream `{other}`")),
            }
        }
        Ok(c)
    }

    /// Reads `SPECVM_LOG`; unknown streams are ignored.
    pub fn from_env() -> LogConfig {
        let raw = std::env::var("SPECVM_LOG").unwrap_or_default();
        let mut c = LogConfig::default();
        for part in raw.split(',') {
            if let Ok(p) = LogConfig::parse(part) {
                c.compile |= p.compile;
                c.deopt |= p.deopt;
                c.init |= p.init;
            }
        }
        c
    }

    pub fn merge(self, other: LogConfig) -> LogConfig {
        LogConfig {
            compile: self.compile || other.compile,
            deopt: self.deopt || other.deopt,
            init: self.init || other.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VmEvent {
    Compile(Arc<CompiledMethod>),
    Deopt { function: FuncId, version: u32, request: DeoptRequest },
    Init(InitReport),
}

impl VmEvent {
    pub fn log_line(&self, program: &Program) -> String {
        match self {
            VmEvent::Compile(m) => m.log_line(program),
            VmEvent::Deopt {
                function,
                version,
                request,
            } => format!(
                "deopt {} v{version} guard={} site={}",
                program.name_of(*function),
                request.guard,
                request.site
            ),
            VmEvent::Init(r) => {
                let names: Vec<&str> = r.touched.iter().map(|(f, _)| program.name_of(*f)).collect();
                format!("init touched={} [{}]", names.len(), names.join(", "))
            }
        }
    }
}

/// Functions invoked during the init phase and the hotness each reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitReport {
    pub touched: Vec<(FuncId, u64)>,
    pub cost: CostLedger,
}

impl InitReport {
    pub fn touched(&self, f: FuncId) -> bool {
        self.touched.iter().any(|(g, _)| *g == f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("program has no init function")]
    NoInitFunction,
    #[error("init phase already ran")]
    InitAlreadyRan,
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

pub struct VmInstance {
    program: Arc<Program>,
    model: CostModel,
    profiles: ProfileStore,
    ledger: CostLedger,
    states: Vec<MethodState>,
    methods: BTreeMap<(FuncId, u32), Arc<CompiledMethod>>,
    blacklist: AssumptionBlacklist,
    init_ran: bool,
    init_cost: CostLedger,
    jit_enabled: bool,
    depth: usize,
    compiled_depth: usize,
    /// Array writes made under compiled frames: array, index, previous value.
    journal: Vec<(ArrayRef, usize, i64)>,
    recorder: Option<(FuncId, Vec<Vec<i64>>)>,
    events: Vec<VmEvent>,
    log: LogConfig,
}

/// A fresh VM, after running the init phase when requested and available.
pub fn fork(program: Arc<Program>, model: CostModel, with_init: bool) -> Result<VmInstance, VmError> {
    let mut vm = VmInstance::new(program, model);
    if with_init && vm.program.init_function.is_some() {
        vm.run_init_phase()?;
    }
    Ok(vm)
}

impl VmInstance {
    pub fn new(program: Arc<Program>, model: CostModel) -> VmInstance {
        let n = program.functions.len();
        VmInstance {
            profiles: ProfileStore::new(&program),
            program,
            model,
            ledger: CostLedger::default(),
            states: vec![MethodState::default(); n],
            methods: BTreeMap::new(),
            blacklist: AssumptionBlacklist::default(),
            init_ran: false,
            init_cost: CostLedger::default(),
            jit_enabled: true,
            depth: 0,
            compiled_depth: 0,
            journal: Vec::new(),
            recorder: None,
            events: Vec::new(),
            log: LogConfig::from_env(),
        }
    }

    /// A VM that never compiles.
    pub fn interpreter_only(program: Arc<Program>, model: CostModel) -> VmInstance {
        let mut vm = VmInstance::new(program, model);
        vm.jit_enabled = false;
        vm
    }

    pub fn set_log(&mut self, log: LogConfig) {
        self.log = self.log.merge(log);
    }

    pub fn program_ref(&self) -> &Program {
        &self.program
    }

    pub fn profile_store(&self) -> &ProfileStore {
        &self.profiles
    }

    pub fn cost(&self) -> CostLedger {
        self.ledger
    }

    /// Ledger snapshot taken right after the init phase.
    pub fn init_cost(&self) -> CostLedger {
        self.init_cost
    }

    pub fn state(&self, f: FuncId) -> &MethodState {
        &self.states[f.index()]
    }

    pub fn blacklist(&self) -> &AssumptionBlacklist {
        &self.blacklist
    }

    pub fn init_ran(&self) -> bool {
        self.init_ran
    }

    pub fn compiled(&self, f: FuncId) -> Option<&Arc<CompiledMethod>> {
        match self.states[f.index()].tier {
            Tier::Compiled(v) => self.methods.get(&(f, v)),
            Tier::Interpreted => None,
        }
    }

    /// Every method ever compiled, in (function, version) order.
    pub fn compiled_methods(&self) -> impl Iterator<Item = &Arc<CompiledMethod>> {
        self.methods.values()
    }

    pub fn events(&self) -> &[VmEvent] {
        &self.events
    }

    pub fn event_log(&self) -> Vec<String> {
        self.events.iter().map(|e| e.log_line(&self.program)).collect()
    }

    /// Records the argument descriptors of every invocation of `target`.
    pub fn start_recording(&mut self, target: FuncId) {
        self.recorder = Some((target, Vec::new()));
    }

    pub fn take_recording(&mut self) -> Vec<Vec<i64>> {
        self.recorder.take().map(|(_, r)| r).unwrap_or_default()
    }

    /// Invokes `f` as a top-level call.
    pub fn invoke(&mut self, f: FuncId, args: Vec<Value>) -> Result<Value, RuntimeError> {
        if self.program.function(f).is_none() {
            return Err(RuntimeError {
                function: f.to_string(),
                site: None,
                kind: crate::interp::RuntimeErrorKind::UnknownFunction { id: f },
            });
        }
        self.dispatch(f, args)
    }

    /// Runs the program's init function once through the tiered machinery.
    pub fn run_init_phase(&mut self) -> Result<InitReport, VmError> {
        if self.init_ran {
            return Err(VmError::InitAlreadyRan);
        }
        let init = self.program.init_function.ok_or(VmError::NoInitFunction)?;
        let before = self.ledger;
        self.init_ran = true;
        self.invoke(init, Vec::new())?;
        self.init_cost = self.ledger;
        let touched = (0..self.program.functions.len() as u32)
            .map(FuncId)
            .filter(|&f| self.profiles.invocations(f) > 0)
            .map(|f| (f, self.profiles.hotness(f)))
            .collect();
        let report = InitReport {
            touched,
            cost: self.ledger.since(&before),
        };
        self.emit(VmEvent::Init(report.clone()));
        Ok(report)
    }

    fn emit(&mut self, e: VmEvent) {
        let on = match e {
            VmEvent::Compile(_) => self.log.compile,
            VmEvent::Deopt { .. } => self.log.deopt,
            VmEvent::Init(_) => self.log.init,
        };
        if on {
            eprintln!("{}", e.log_line(&self.program));
        }
        self.events.push(e);
    }

    fn dispatch(&mut self, f: FuncId, args: Vec<Value>) -> Result<Value, RuntimeError> {
        if let Some((target, records)) = &mut self.recorder {
            if *target == f {
                records.push(args.iter().map(Value::descriptor).collect());
            }
        }
        if let Some(method) = self.compiled(f).cloned() {
            let mark = self.journal.len();
            self.compiled_depth += 1;
            let r = execute_compiled(self, &method, args.clone());
            self.compiled_depth -= 1;
            match r {
                Ok(Completion::Deopt(request)) => {
                    self.rollback(mark);
                    self.deoptimize(&method, request);
                }
                other => {
                    if self.compiled_depth == 0 {
                        self.journal.clear();
                    }
                    return other.map(|c| match c {
                        Completion::Completed(v) => v,
                        Completion::Deopt(_) => unreachable!(),
                    });
                }
            }
        }
        let r = interpret(self, f, args);
        if self.jit_enabled {
            self.maybe_compile(f);
        }
        r
    }

    fn rollback(&mut self, mark: usize) {
        while self.journal.len() > mark {
            let (arr, i, old) = self.journal.pop().unwrap();
            arr.store(i, old);
        }
    }

    fn deoptimize(&mut self, method: &CompiledMethod, request: DeoptRequest) {
        let f = method.function;
        self.ledger.charge(self.model.deopt_penalty);
        self.ledger.deopt_events += 1;
        let spec = method.speculation(request.guard).expect("deopt names a known guard");
        let key = spec.key();
        self.blacklist.insert(key.0, key.1, key.2);
        self.emit(VmEvent::Deopt {
            function: f,
            version: method.version,
            request,
        });
        for g in 0..self.states.len() {
            let gid = FuncId(g as u32);
            if let Some(m) = self.compiled(gid) {
                if m.has_speculation(key.0, key.1, key.2) {
                    self.states[g].tier = Tier::Interpreted;
                }
            }
        }
        let st = &mut self.states[f.index()];
        st.tier = Tier::Interpreted;
        st.pending_recompile_at = Some(self.profiles.hotness(f) + self.model.compile_threshold);
    }

    fn maybe_compile(&mut self, f: FuncId) {
        let st = &self.states[f.index()];
        if st.tier != Tier::Interpreted || st.not_compilable {
            return;
        }
        let hotness = self.profiles.hotness(f);
        if hotness < self.model.compile_threshold || st.pending_recompile_at.is_some_and(|p| hotness < p) {
            return;
        }
        match compile(&self.program, f, &self.profiles, &self.blacklist, &self.model) {
            Ok(mut m) => {
                let version = self.methods.range((f, 0)..=(f, u32::MAX)).next_back().map_or(0, |(k, _)| k.1) + 1;
                m.version = version;
                let m = Arc::new(m);
                self.methods.insert((f, version), Arc::clone(&m));
                let st = &mut self.states[f.index()];
                st.tier = Tier::Compiled(version);
                st.hotness_at_last_compile = hotness;
                st.pending_recompile_at = None;
                self.ledger.compile_events += 1;
                self.emit(VmEvent::Compile(m));
            }
            Err(CompileError::TooLarge { .. }) => self.states[f.index()].not_compilable = true,
            Err(e) => panic!("compile refused a hot method: {e}"),
        }
    }
}

impl Machine for VmInstance {
    fn program(&self) -> &Arc<Program> {
        &self.program
    }

    fn model(&self) -> &CostModel {
        &self.model
    }

    fn profiles(&mut self) -> &mut ProfileStore {
        &mut self.profiles
    }

    fn ledger(&mut self) -> &mut CostLedger {
        &mut self.ledger
    }

    fn call(&mut self, callee: FuncId, args: Vec<Value>) -> Result<Value, RuntimeError> {
        self.enter_frame(callee)?;
        let r = self.dispatch(callee, args);
        self.leave_frame();
        r
    }

    fn store(&mut self, arr: &ArrayRef, index: usize, value: i64) {
        let old = arr.store(index, value);
        if self.compiled_depth > 0 {
            self.journal.push((arr.clone(), index, old));
        }
    }

    fn enter_frame(&mut self, callee: FuncId) -> Result<(), RuntimeError> {
        push_depth(&mut self.depth, &self.program, callee)
    }

    fn leave_frame(&mut self) {
        self.depth -= 1;
    }
}

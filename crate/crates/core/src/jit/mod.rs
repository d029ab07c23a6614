//! Speculative optimizing compiler.
//!
//! [`compile`] turns a hot function and its profile into a [`CompiledMethod`]:
//! one-sided branches become guards, switches with narrow profiles are
//! specialized, call sites with few observed targets are inlined behind a
//! guard chain, and small direct callees are inlined outright. A forward
//! facts pass tracks constant locals and known array lengths so that array
//! accesses proven in bounds skip the bounds check.

mod exec;
mod facts;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use exec::{execute_compiled, Completion, DeoptRequest};

use crate::interp::{classify, CostModel, Morphism, ProfileStore};
use crate::ir::{BinOp, Expr, FuncId, Function, Program, SiteId, Slot};
use facts::{abstract_value, Facts};

/// Deepest inlining level below the compiled root.
pub const MAX_INLINE_DEPTH: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GuardId(pub u32);

impl fmt::Display for GuardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SpeculationKind {
    BranchAlwaysTaken,
    BranchNeverTaken,
    SwitchSingleCase(i64),
    /// Retained entry labels, and whether the default arm is retained.
    SwitchPrunedCases { cases: Vec<i64>, default: bool },
    CalleeIs(Vec<FuncId>),
}

/// Discriminant of a [`SpeculationKind`], the granularity of blacklisting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KindTag {
    BranchAlwaysTaken,
    BranchNeverTaken,
    SwitchSingleCase,
    SwitchPrunedCases,
    CalleeIs,
}

impl SpeculationKind {
    pub fn tag(&self) -> KindTag {
        match self {
            SpeculationKind::BranchAlwaysTaken => KindTag::BranchAlwaysTaken,
            SpeculationKind::BranchNeverTaken => KindTag::BranchNeverTaken,
            SpeculationKind::SwitchSingleCase(_) => KindTag::SwitchSingleCase,
            SpeculationKind::SwitchPrunedCases { .. } => KindTag::SwitchPrunedCases,
            SpeculationKind::CalleeIs(_) => KindTag::CalleeIs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Speculation {
    pub guard: GuardId,
    /// Function owning the site; differs from the method's source when inlined.
    pub function: FuncId,
    pub site: SiteId,
    pub kind: SpeculationKind,
}

impl Speculation {
    pub fn key(&self) -> (FuncId, SiteId, KindTag) {
        (self.function, self.site, self.kind.tag())
    }

    pub fn describe(&self, program: &Program) -> String {
        let kind = match &self.kind {
            SpeculationKind::BranchAlwaysTaken => "BranchAlwaysTaken".to_string(),
            SpeculationKind::BranchNeverTaken => "BranchNeverTaken".to_string(),
            SpeculationKind::SwitchSingleCase(c) => format!("SwitchSingleCase({c})"),
            SpeculationKind::SwitchPrunedCases { cases, default } => {
                let mut parts: Vec<String> = cases.iter().map(|c| c.to_string()).collect();
                if *default {
                    parts.push("default".into());
                }
                format!("SwitchPrunedCases({})", parts.join(" "))
            }
            SpeculationKind::CalleeIs(fs) => {
                let names: Vec<&str> = fs.iter().map(|f| program.name_of(*f)).collect();
                format!("CalleeIs({})", names.join(" "))
            }
        };
        format!("{}:{kind}@{}.{}", self.guard, program.name_of(self.function), self.site)
    }
}

/// Speculations disabled for future compilations. Entries are never removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssumptionBlacklist {
    entries: BTreeSet<(FuncId, SiteId, KindTag)>,
}

impl AssumptionBlacklist {
    pub fn insert(&mut self, function: FuncId, site: SiteId, tag: KindTag) -> bool {
        self.entries.insert((function, site, tag))
    }

    pub fn contains(&self, function: FuncId, site: SiteId, tag: KindTag) -> bool {
        self.entries.contains(&(function, site, tag))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(FuncId, SiteId, KindTag)> {
        self.entries.iter()
    }
}

/// Check performed by a [`CNode::Guard`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardTest {
    /// Truthiness of an int equals the given flag.
    Truthy(bool),
    Equals(i64),
}

/// Body of a callee inlined into a compiled frame at slot offset `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct InlineBody {
    pub callee: FuncId,
    pub base: u32,
    pub params: u32,
    pub locals: u32,
    pub body: Box<CNode>,
}

/// Compiled code tree.
#[derive(Debug, Clone, PartialEq)]
pub enum CNode {
    Const(i64),
    Get(u32),
    Set(u32, Box<CNode>),
    Len(Box<CNode>),
    ArrayGet { arr: Box<CNode>, index: Box<CNode>, checked: bool },
    ArraySet { arr: Box<CNode>, index: Box<CNode>, value: Box<CNode>, checked: bool },
    NewArr(Box<CNode>),
    FuncRef(FuncId),
    Bin(BinOp, Box<CNode>, Box<CNode>),
    Seq(Vec<CNode>),
    If { site: SiteId, cond: Box<CNode>, then_branch: Box<CNode>, else_branch: Box<CNode> },
    /// Evaluates `test`, deoptimizes unless it passes, then evaluates `body`.
    Guard { guard: GuardId, site: SiteId, test: Box<CNode>, expect: GuardTest, body: Box<CNode> },
    /// Switch with possibly pruned entries. `bodies[k]` is `None` when arm
    /// `k` is unreachable; a missing default or a disabled entry deoptimizes.
    Switch {
        site: SiteId,
        guard: Option<GuardId>,
        scrutinee: Box<CNode>,
        labels: Vec<i64>,
        entry: Vec<bool>,
        bodies: Vec<Option<CNode>>,
        fallthrough: bool,
        default: Option<Box<CNode>>,
        compares: u64,
    },
    Loop { site: SiteId, cond: Box<CNode>, body: Box<CNode> },
    Call { site: SiteId, callee: FuncId, args: Vec<CNode> },
    CallIndirect { site: SiteId, callee: Box<CNode>, args: Vec<CNode> },
    Inline { site: SiteId, args: Vec<CNode>, target: InlineBody },
    /// Guard chain over inlined targets with a deoptimizing tail.
    Dispatch { site: SiteId, guard: GuardId, callee: Box<CNode>, args: Vec<CNode>, targets: Vec<InlineBody> },
    Return(Box<CNode>),
}

impl CNode {
    /// Node count. Each dispatch target adds one comparison node.
    pub fn size(&self) -> usize {
        let mut n = 1;
        self.for_each_child(&mut |c| n += c.size());
        if let CNode::Dispatch { targets, .. } = self {
            n += targets.len();
        }
        n
    }

    pub fn for_each_child<'a>(&'a self, f: &mut dyn FnMut(&'a CNode)) {
        match self {
            CNode::Const(_) | CNode::Get(_) | CNode::FuncRef(_) => {}
            CNode::Set(_, a) | CNode::Len(a) | CNode::NewArr(a) | CNode::Return(a) => f(a),
            CNode::ArrayGet { arr, index, .. } => {
                f(arr);
                f(index);
            }
            CNode::ArraySet { arr, index, value, .. } => {
                f(arr);
                f(index);
                f(value);
            }
            CNode::Bin(_, a, b) => {
                f(a);
                f(b);
            }
            CNode::Seq(es) => es.iter().for_each(f),
            CNode::If { cond, then_branch, else_branch, .. } => {
                f(cond);
                f(then_branch);
                f(else_branch);
            }
            CNode::Guard { test, body, .. } => {
                f(test);
                f(body);
            }
            CNode::Switch { scrutinee, bodies, default, .. } => {
                f(scrutinee);
                bodies.iter().flatten().for_each(&mut *f);
                if let Some(d) = default {
                    f(d);
                }
            }
            CNode::Loop { cond, body, .. } => {
                f(cond);
                f(body);
            }
            CNode::Call { args, .. } => args.iter().for_each(f),
            CNode::CallIndirect { callee, args, .. } => {
                f(callee);
                args.iter().for_each(f);
            }
            CNode::Inline { args, target, .. } => {
                args.iter().for_each(&mut *f);
                f(&target.body);
            }
            CNode::Dispatch { callee, args, targets, .. } => {
                f(callee);
                args.iter().for_each(&mut *f);
                targets.iter().for_each(|t| f(&t.body));
            }
        }
    }

    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a CNode)) {
        f(self);
        self.for_each_child(&mut |c| c.walk(f));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledMethod {
    pub function: FuncId,
    pub version: u32,
    pub body: CNode,
    /// Slots of the compiled frame, including those of inlined callees.
    pub frame_size: u32,
    pub speculations: Vec<Speculation>,
    pub code_size: usize,
    pub inlined: BTreeSet<FuncId>,
}

impl CompiledMethod {
    pub fn speculation(&self, guard: GuardId) -> Option<&Speculation> {
        self.speculations.iter().find(|s| s.guard == guard)
    }

    pub fn has_speculation(&self, function: FuncId, site: SiteId, tag: KindTag) -> bool {
        self.speculations.iter().any(|s| s.key() == (function, site, tag))
    }

    /// Number of checked array accesses left in the code.
    pub fn bounds_checks(&self) -> usize {
        let mut n = 0;
        self.body.walk(&mut |c| {
            if matches!(c, CNode::ArrayGet { checked: true, .. } | CNode::ArraySet { checked: true, .. }) {
                n += 1;
            }
        });
        n
    }

    /// One line in the compile log format.
    pub fn log_line(&self, program: &Program) -> String {
        let specs: Vec<String> = self.speculations.iter().map(|s| s.describe(program)).collect();
        let inlined: Vec<&str> = self.inlined.iter().map(|f| program.name_of(*f)).collect();
        format!(
            "compile {} v{} size={} speculations=[{}] inlined=[{}]",
            program.name_of(self.function),
            self.version,
            self.code_size,
            specs.join(", "),
            inlined.join(", ")
        )
    }
}

pub fn code_size(method: &CompiledMethod) -> usize {
    method.body.size()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("hotness {hotness} is below the compile threshold {threshold}")]
    BelowThreshold { hotness: u64, threshold: u64 },
    #[error("unknown function {0}")]
    UnknownFunction(FuncId),
    #[error("function size {size} exceeds the compiled size budget {max}")]
    TooLarge { size: usize, max: usize },
}

impl CompileError {
    /// Refusals are expected outcomes rather than failures.
    pub fn is_refusal(&self) -> bool {
        !matches!(self, CompileError::UnknownFunction(_))
    }
}

/// Compiles `f` against its profile. The result has version 1; the runtime
/// renumbers recompilations.
pub fn compile(
    program: &Program,
    f: FuncId,
    profiles: &ProfileStore,
    blacklist: &AssumptionBlacklist,
    model: &CostModel,
) -> Result<CompiledMethod, CompileError> {
    let func = program.function(f).ok_or(CompileError::UnknownFunction(f))?;
    let hotness = profiles.hotness(f);
    if hotness < model.compile_threshold {
        return Err(CompileError::BelowThreshold {
            hotness,
            threshold: model.compile_threshold,
        });
    }
    if func.size > model.max_compiled_size {
        return Err(CompileError::TooLarge {
            size: func.size,
            max: model.max_compiled_size,
        });
    }
    let mut c = Compiler {
        program,
        profiles,
        blacklist,
        model,
        speculations: Vec::new(),
        inlined: BTreeSet::new(),
        frame_size: frame_slots(func),
        size_bound: func.size,
    };
    let ctx = Ctx {
        id: f,
        base: 0,
        depth: 0,
        stack: vec![f],
    };
    let mut facts = Facts::entry(0, func, &[]);
    let body = c.expr(&ctx, &func.body, &mut facts);
    let code_size = body.size();
    debug_assert!(code_size <= c.size_bound);
    Ok(CompiledMethod {
        function: f,
        version: 1,
        body,
        frame_size: c.frame_size,
        speculations: c.speculations,
        code_size,
        inlined: c.inlined,
    })
}

fn frame_slots(f: &Function) -> u32 {
    f.local_count.max(f.param_count)
}

fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

struct Ctx {
    id: FuncId,
    base: u32,
    depth: u32,
    stack: Vec<FuncId>,
}

struct Checkpoint {
    speculations: usize,
    inlined: BTreeSet<FuncId>,
    frame_size: u32,
    size_bound: usize,
}

struct Compiler<'p> {
    program: &'p Program,
    profiles: &'p ProfileStore,
    blacklist: &'p AssumptionBlacklist,
    model: &'p CostModel,
    speculations: Vec<Speculation>,
    inlined: BTreeSet<FuncId>,
    frame_size: u32,
    /// Upper bound on the final code size: the root's source size plus the
    /// growth of every accepted inline.
    size_bound: usize,
}

impl<'p> Compiler<'p> {
    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            speculations: self.speculations.len(),
            inlined: self.inlined.clone(),
            frame_size: self.frame_size,
            size_bound: self.size_bound,
        }
    }

    fn restore(&mut self, cp: Checkpoint) {
        self.speculations.truncate(cp.speculations);
        self.inlined = cp.inlined;
        self.frame_size = cp.frame_size;
        self.size_bound = cp.size_bound;
    }

    fn allowed(&self, ctx: &Ctx, site: SiteId, tag: KindTag) -> bool {
        !self.blacklist.contains(ctx.id, site, tag)
    }

    fn speculate(&mut self, ctx: &Ctx, site: SiteId, kind: SpeculationKind) -> GuardId {
        let guard = GuardId(self.speculations.len() as u32);
        self.speculations.push(Speculation {
            guard,
            function: ctx.id,
            site,
            kind,
        });
        guard
    }

    fn boxed(&mut self, ctx: &Ctx, e: &'p Expr, facts: &mut Facts) -> Box<CNode> {
        Box::new(self.expr(ctx, e, facts))
    }

    fn expr(&mut self, ctx: &Ctx, e: &'p Expr, facts: &mut Facts) -> CNode {
        let slot = |s: Slot| ctx.base + s;
        match e {
            Expr::ConstInt(v) => CNode::Const(*v),
            Expr::LocalGet(s) => CNode::Get(slot(*s)),
            Expr::LocalSet(s, v) => {
                let abs = abstract_value(v, ctx.base, facts);
                let v = self.boxed(ctx, v, facts);
                facts.assign(slot(*s), abs);
                CNode::Set(slot(*s), v)
            }
            Expr::ArrayLen(a) => CNode::Len(self.boxed(ctx, a, facts)),
            Expr::ArrayGet(a, i) => {
                let checked = !facts.proves_in_bounds(a, i, ctx.base);
                CNode::ArrayGet {
                    arr: self.boxed(ctx, a, facts),
                    index: self.boxed(ctx, i, facts),
                    checked,
                }
            }
            Expr::ArraySet(a, i, v) => {
                let checked = !facts.proves_in_bounds(a, i, ctx.base);
                CNode::ArraySet {
                    arr: self.boxed(ctx, a, facts),
                    index: self.boxed(ctx, i, facts),
                    value: self.boxed(ctx, v, facts),
                    checked,
                }
            }
            Expr::ArrayNew(n) => CNode::NewArr(self.boxed(ctx, n, facts)),
            Expr::FuncRef(f) => CNode::FuncRef(*f),
            Expr::BinOp(op, a, b) => {
                let a = self.boxed(ctx, a, facts);
                CNode::Bin(*op, a, self.boxed(ctx, b, facts))
            }
            Expr::Seq(es) => {
                let mut out = Vec::with_capacity(es.len());
                for e in es {
                    out.push(self.expr(ctx, e, facts));
                    if !facts.reachable {
                        break;
                    }
                }
                CNode::Seq(out)
            }
            Expr::If {
                site,
                cond,
                then_branch,
                else_branch,
            } => self.branch(ctx, *site, cond, then_branch, else_branch, facts),
            Expr::Switch {
                site,
                scrutinee,
                arms,
                fallthrough,
                default,
            } => self.switch(ctx, *site, scrutinee, arms, *fallthrough, default, facts),
            Expr::Loop { site, cond, body } => {
                let pair = facts::loop_bounds_pair(cond, body)
                    .filter(|(i, _)| facts.const_of(slot(*i)).is_some_and(|v| v >= 0));
                let mut assigned = Vec::new();
                cond.assigned_slots(&mut assigned);
                body.assigned_slots(&mut assigned);
                for s in assigned {
                    facts.kill(slot(s));
                }
                let head = facts.clone();
                let cond = self.boxed(ctx, cond, facts);
                let mut inner = facts.clone();
                if let Some((i, a)) = pair {
                    inner.bounds.insert((slot(i), slot(a)));
                }
                let body = self.boxed(ctx, body, &mut inner);
                *facts = head;
                CNode::Loop {
                    site: *site,
                    cond,
                    body,
                }
            }
            Expr::CallDirect { site, callee, args } => {
                let mut abs = Vec::with_capacity(args.len());
                let mut cargs = Vec::with_capacity(args.len());
                for a in args {
                    abs.push(abstract_value(a, ctx.base, facts));
                    cargs.push(self.expr(ctx, a, facts));
                }
                let cp = self.checkpoint();
                match self.inline_body(ctx, *callee, args.len(), &abs) {
                    Some(target) if self.fits(&cp, target.body.size()) => {
                        self.size_bound = cp.size_bound + target.body.size();
                        CNode::Inline {
                            site: *site,
                            args: cargs,
                            target,
                        }
                    }
                    _ => {
                        self.restore(cp);
                        CNode::Call {
                            site: *site,
                            callee: *callee,
                            args: cargs,
                        }
                    }
                }
            }
            Expr::CallIndirect { site, callee, args } => {
                let ccallee = self.boxed(ctx, callee, facts);
                let mut abs = Vec::with_capacity(args.len());
                let mut cargs = Vec::with_capacity(args.len());
                for a in args {
                    abs.push(abstract_value(a, ctx.base, facts));
                    cargs.push(self.expr(ctx, a, facts));
                }
                let targets = self.dispatch_targets(ctx, *site);
                if !targets.is_empty() {
                    let cp = self.checkpoint();
                    let mut bodies = Vec::new();
                    for t in &targets {
                        match self.inline_body(ctx, *t, args.len(), &abs) {
                            Some(b) => bodies.push(b),
                            None => break,
                        }
                    }
                    let growth: usize = bodies.iter().map(|b| 1 + b.body.size()).sum();
                    if bodies.len() == targets.len() && self.fits(&cp, growth) {
                        self.size_bound = cp.size_bound + growth;
                        let guard = self.speculate(ctx, *site, SpeculationKind::CalleeIs(targets));
                        return CNode::Dispatch {
                            site: *site,
                            guard,
                            callee: ccallee,
                            args: cargs,
                            targets: bodies,
                        };
                    }
                    self.restore(cp);
                }
                CNode::CallIndirect {
                    site: *site,
                    callee: ccallee,
                    args: cargs,
                }
            }
            Expr::Return(v) => {
                let v = self.boxed(ctx, v, facts);
                facts.reachable = false;
                CNode::Return(v)
            }
        }
    }

    fn fits(&self, cp: &Checkpoint, growth: usize) -> bool {
        cp.size_bound + growth <= self.model.max_compiled_size
    }

    fn samples_ok(&self, total: u64) -> bool {
        total > 0 && total >= self.model.min_profile_samples
    }

    fn branch(
        &mut self,
        ctx: &Ctx,
        site: SiteId,
        cond: &'p Expr,
        then_branch: &'p Expr,
        else_branch: &'p Expr,
        facts: &mut Facts,
    ) -> CNode {
        if let Ok(bp) = self.profiles.branch(ctx.id, site) {
            if self.samples_ok(bp.total()) {
                let one_sided = if bp.not_taken == 0 {
                    Some((SpeculationKind::BranchAlwaysTaken, true, then_branch))
                } else if bp.taken == 0 {
                    Some((SpeculationKind::BranchNeverTaken, false, else_branch))
                } else {
                    None
                };
                if let Some((kind, expect, live)) = one_sided {
                    if self.allowed(ctx, site, kind.tag()) {
                        let test = self.boxed(ctx, cond, facts);
                        let guard = self.speculate(ctx, site, kind);
                        let body = self.boxed(ctx, live, facts);
                        return CNode::Guard {
                            guard,
                            site,
                            test,
                            expect: GuardTest::Truthy(expect),
                            body,
                        };
                    }
                }
            }
        }
        let cond = self.boxed(ctx, cond, facts);
        let mut other = facts.clone();
        let then_branch = self.boxed(ctx, then_branch, facts);
        let else_branch = self.boxed(ctx, else_branch, &mut other);
        facts.join(&other);
        CNode::If {
            site,
            cond,
            then_branch,
            else_branch,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn switch(
        &mut self,
        ctx: &Ctx,
        site: SiteId,
        scrutinee: &'p Expr,
        arms: &'p [crate::ir::SwitchArm],
        fallthrough: bool,
        default: &'p Expr,
        facts: &mut Facts,
    ) -> CNode {
        let mut entry = vec![true; arms.len()];
        let mut keep_default = true;
        let mut guard_kind = None;
        if let Ok(sp) = self.profiles.switch(ctx.id, site) {
            if self.samples_ok(sp.total()) {
                let observed: Vec<usize> = (0..arms.len()).filter(|&k| sp.arm_count(k) > 0).collect();
                let pruned = observed.len() < arms.len() || sp.default_count == 0;
                if observed.len() == 1
                    && sp.default_count == 0
                    && self.allowed(ctx, site, KindTag::SwitchSingleCase)
                {
                    return self.single_case(ctx, site, scrutinee, arms, fallthrough, observed[0], facts);
                }
                if pruned && self.allowed(ctx, site, KindTag::SwitchPrunedCases) {
                    for (k, e) in entry.iter_mut().enumerate() {
                        *e = observed.contains(&k);
                    }
                    keep_default = sp.default_count > 0;
                    guard_kind = Some(SpeculationKind::SwitchPrunedCases {
                        cases: observed.iter().map(|&k| arms[k].value).collect(),
                        default: keep_default,
                    });
                }
            }
        }
        let cscrut = self.boxed(ctx, scrutinee, facts);
        let guard = guard_kind.map(|k| self.speculate(ctx, site, k));
        let before = facts.clone();
        let mut exit = Facts::unreachable();
        let mut prev = Facts::unreachable();
        let mut bodies = Vec::with_capacity(arms.len());
        for (k, arm) in arms.iter().enumerate() {
            let mut f = if entry[k] {
                let mut f = before.clone();
                f.learn_equals(scrutinee, arm.value, ctx.base);
                f
            } else {
                Facts::unreachable()
            };
            if fallthrough {
                f.join(&prev);
            }
            if !f.reachable {
                bodies.push(None);
                prev = f;
                continue;
            }
            bodies.push(Some(self.expr(ctx, &arm.body, &mut f)));
            if fallthrough {
                prev = f;
            } else {
                exit.join(&f);
            }
        }
        if fallthrough {
            exit.join(&prev);
        }
        let cdefault = if keep_default {
            let mut f = before.clone();
            let d = self.boxed(ctx, default, &mut f);
            exit.join(&f);
            Some(d)
        } else {
            None
        };
        *facts = exit;
        let entries = entry.iter().filter(|&&e| e).count();
        let compares = ceil_log2(entries + 1).max(guard.is_some() as u64);
        CNode::Switch {
            site,
            guard,
            scrutinee: cscrut,
            labels: arms.iter().map(|a| a.value).collect(),
            entry,
            bodies,
            fallthrough,
            default: cdefault,
            compares,
        }
    }

    /// Guard on the single observed case followed by the straight-line
    /// expansion of the arms it reaches.
    #[allow(clippy::too_many_arguments)]
    fn single_case(
        &mut self,
        ctx: &Ctx,
        site: SiteId,
        scrutinee: &'p Expr,
        arms: &'p [crate::ir::SwitchArm],
        fallthrough: bool,
        k: usize,
        facts: &mut Facts,
    ) -> CNode {
        let value = arms[k].value;
        let test = self.boxed(ctx, scrutinee, facts);
        let guard = self.speculate(ctx, site, SpeculationKind::SwitchSingleCase(value));
        facts.learn_equals(scrutinee, value, ctx.base);
        let last = if fallthrough { arms.len() } else { k + 1 };
        let mut parts = Vec::new();
        for arm in &arms[k..last] {
            parts.push(self.expr(ctx, &arm.body, facts));
            if !facts.reachable {
                break;
            }
        }
        let body = if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            CNode::Seq(parts)
        };
        CNode::Guard {
            guard,
            site,
            test,
            expect: GuardTest::Equals(value),
            body: Box::new(body),
        }
    }

    /// Targets for guarded dispatch at an indirect call site, or none.
    fn dispatch_targets(&self, ctx: &Ctx, site: SiteId) -> Vec<FuncId> {
        let Ok(cp) = self.profiles.calls(ctx.id, site) else {
            return Vec::new();
        };
        if !self.samples_ok(cp.total()) || !self.allowed(ctx, site, KindTag::CalleeIs) {
            return Vec::new();
        }
        match classify(cp, self.model.max_inline_targets) {
            Morphism::Monomorphic(f) => vec![f],
            Morphism::Polymorphic(fs) => fs,
            Morphism::NoData | Morphism::Megamorphic => Vec::new(),
        }
    }

    /// Compiles `callee` for inlining at the current position, or `None`
    /// when depth, recursion, arity or the inlinee size limit forbids it.
    fn inline_body(&mut self, ctx: &Ctx, callee: FuncId, argc: usize, abs: &[facts::Abs]) -> Option<InlineBody> {
        let func = self.program.function(callee)?;
        if ctx.depth >= MAX_INLINE_DEPTH || ctx.stack.contains(&callee) || func.param_count as usize != argc {
            return None;
        }
        if func.size > self.model.max_inlinee_size.max(1) * 4 {
            // Pruning cannot plausibly bring it under the limit.
            return None;
        }
        let base = self.frame_size;
        let locals = frame_slots(func);
        self.frame_size += locals;
        let mut stack = ctx.stack.clone();
        stack.push(callee);
        let inner = Ctx {
            id: callee,
            base,
            depth: ctx.depth + 1,
            stack,
        };
        let saved_bound = self.size_bound;
        let mut facts = Facts::entry(base, func, abs);
        let body = self.expr(&inner, &func.body, &mut facts);
        self.size_bound = saved_bound;
        if body.size() > self.model.max_inlinee_size {
            return None;
        }
        self.inlined.insert(callee);
        Some(InlineBody {
            callee,
            base,
            params: func.param_count,
            locals,
            body: Box::new(body),
        })
    }
}

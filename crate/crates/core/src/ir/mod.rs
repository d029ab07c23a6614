//! Guest intermediate representation.
//!
//! Programs are trees of [`Expr`] nodes grouped into [`Function`]s. Every
//! branching or calling node carries a [`SiteId`] that the profiling
//! interpreter uses as the key for its counters. Site ids are assigned in
//! preorder by [`Function::new`], so building the same tree twice always
//! yields the same numbering.

mod builders;
mod text;
mod validate;

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

pub use builders::{build_hash_baseline, build_hash_ft32, hash_body, wrap32, E};
pub use text::{parse_program, print_expr, print_function, print_program, ParseError};
pub use validate::{validate, ValidationReport, Violation};

/// Dense function identifier; equal to the function's index in its [`Program`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FuncId(pub u32);

impl FuncId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FuncId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "id{}", self.0)
    }
}

/// Profiling site identifier, unique within one function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(pub u32);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Local variable slot. Parameters occupy the first `param_count` slots.
pub type Slot = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Shl,
    And,
    Lt,
    Eq,
}

impl BinOp {
    pub const ALL: [BinOp; 7] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Shl,
        BinOp::And,
        BinOp::Lt,
        BinOp::Eq,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Shl => "shl",
            BinOp::And => "and",
            BinOp::Lt => "lt",
            BinOp::Eq => "eq",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<BinOp> {
        BinOp::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    /// Integer semantics shared by the interpreter and compiled code.
    /// Arithmetic wraps at 64 bits; comparisons yield 1 or 0.
    #[inline]
    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Shl => a.wrapping_shl((b & 63) as u32),
            BinOp::And => a & b,
            BinOp::Lt => (a < b) as i64,
            BinOp::Eq => (a == b) as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchArm {
    pub value: i64,
    pub body: Expr,
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    ConstInt(i64),
    LocalGet(Slot),
    LocalSet(Slot, Box<Expr>),
    ArrayLen(Box<Expr>),
    ArrayGet(Box<Expr>, Box<Expr>),
    /// `arr[index] = value`; evaluates to the stored value.
    ArraySet(Box<Expr>, Box<Expr>, Box<Expr>),
    /// Fresh zero-filled integer array of the given length.
    ArrayNew(Box<Expr>),
    FuncRef(FuncId),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    Seq(Vec<Expr>),
    If {
        site: SiteId,
        cond: Box<Expr>,
        then_branch: Box<Expr>,
        else_branch: Box<Expr>,
    },
    /// Multi-way dispatch. With `fallthrough`, the matched arm continues
    /// into the following arms (in sequence order) until a `Return`.
    Switch {
        site: SiteId,
        scrutinee: Box<Expr>,
        arms: Vec<SwitchArm>,
        fallthrough: bool,
        default: Box<Expr>,
    },
    Loop {
        site: SiteId,
        cond: Box<Expr>,
        body: Box<Expr>,
    },
    CallDirect {
        site: SiteId,
        callee: FuncId,
        args: Vec<Expr>,
    },
    CallIndirect {
        site: SiteId,
        callee: Box<Expr>,
        args: Vec<Expr>,
    },
    Return(Box<Expr>),
}

impl Expr {
    pub fn site(&self) -> Option<SiteId> {
        match self {
            Expr::If { site, .. }
            | Expr::Switch { site, .. }
            | Expr::Loop { site, .. }
            | Expr::CallDirect { site, .. }
            | Expr::CallIndirect { site, .. } => Some(*site),
            _ => None,
        }
    }

    /// Children in preorder visiting order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::ConstInt(_) | Expr::LocalGet(_) | Expr::FuncRef(_) => Vec::new(),
            Expr::LocalSet(_, e) | Expr::ArrayLen(e) | Expr::ArrayNew(e) | Expr::Return(e) => {
                vec![e]
            }
            Expr::ArrayGet(a, b) | Expr::BinOp(_, a, b) => vec![a, b],
            Expr::ArraySet(a, b, c) => vec![a, b, c],
            Expr::Seq(es) => es.iter().collect(),
            Expr::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => vec![cond, then_branch, else_branch],
            Expr::Switch {
                scrutinee,
                arms,
                default,
                ..
            } => {
                let mut v: Vec<&Expr> = vec![scrutinee];
                v.extend(arms.iter().map(|a| &a.body));
                v.push(default);
                v
            }
            Expr::Loop { cond, body, .. } => vec![cond, body],
            Expr::CallDirect { args, .. } => args.iter().collect(),
            Expr::CallIndirect { callee, args, .. } => {
                let mut v: Vec<&Expr> = vec![callee];
                v.extend(args.iter());
                v
            }
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::ConstInt(_) | Expr::LocalGet(_) | Expr::FuncRef(_) => Vec::new(),
            Expr::LocalSet(_, e) | Expr::ArrayLen(e) | Expr::ArrayNew(e) | Expr::Return(e) => {
                vec![e]
            }
            Expr::ArrayGet(a, b) | Expr::BinOp(_, a, b) => vec![a, b],
            Expr::ArraySet(a, b, c) => vec![a, b, c],
            Expr::Seq(es) => es.iter_mut().collect(),
            Expr::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => vec![cond, then_branch, else_branch],
            Expr::Switch {
                scrutinee,
                arms,
                default,
                ..
            } => {
                let mut v: Vec<&mut Expr> = vec![scrutinee];
                v.extend(arms.iter_mut().map(|a| &mut a.body));
                v.push(default);
                v
            }
            Expr::Loop { cond, body, .. } => vec![cond, body],
            Expr::CallDirect { args, .. } => args.iter_mut().collect(),
            Expr::CallIndirect { callee, args, .. } => {
                let mut v: Vec<&mut Expr> = vec![callee];
                v.extend(args.iter_mut());
                v
            }
        }
    }

    fn set_site(&mut self, id: SiteId) {
        match self {
            Expr::If { site, .. }
            | Expr::Switch { site, .. }
            | Expr::Loop { site, .. }
            | Expr::CallDirect { site, .. }
            | Expr::CallIndirect { site, .. } => *site = id,
            _ => {}
        }
    }

    /// Number of nodes in this tree, the node itself included.
    pub fn node_count(&self) -> usize {
        1 + self.children().into_iter().map(Expr::node_count).sum::<usize>()
    }

    /// Preorder traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Reassigns site ids in preorder starting at 0. Returns the number of sites.
    pub fn number_sites(&mut self) -> u32 {
        fn go(e: &mut Expr, next: &mut u32) {
            if e.site().is_some() {
                e.set_site(SiteId(*next));
                *next += 1;
            }
            for c in e.children_mut() {
                go(c, next);
            }
        }
        let mut next = 0;
        go(self, &mut next);
        next
    }

    /// Slots written anywhere inside this tree.
    pub fn assigned_slots(&self, out: &mut Vec<Slot>) {
        self.walk(&mut |e| {
            if let Expr::LocalSet(s, _) = e {
                if !out.contains(s) {
                    out.push(*s);
                }
            }
        });
    }
}

/// Kind of profiling site, derived from the node carrying the id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Branch,
    Loop,
    Switch,
    Call,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub id: FuncId,
    pub name: String,
    pub param_count: u32,
    pub local_count: u32,
    pub body: Expr,
    /// Node count of `body`.
    pub size: usize,
}

impl Function {
    /// Builds a function, numbering its sites in preorder and computing its size.
    pub fn new(
        id: FuncId,
        name: impl Into<String>,
        param_count: u32,
        local_count: u32,
        mut body: Expr,
    ) -> Function {
        body.number_sites();
        let size = body.node_count();
        Function {
            id,
            name: name.into(),
            param_count,
            local_count,
            body,
            size,
        }
    }

    /// Site kinds indexed by site id. Sites that are missing from the tree
    /// (possible only in unvalidated functions) are absent.
    pub fn site_kinds(&self) -> Vec<(SiteId, SiteKind)> {
        let mut out = Vec::new();
        self.body.walk(&mut |e| {
            let kind = match e {
                Expr::If { .. } => SiteKind::Branch,
                Expr::Loop { .. } => SiteKind::Loop,
                Expr::Switch { .. } => SiteKind::Switch,
                Expr::CallDirect { .. } | Expr::CallIndirect { .. } => SiteKind::Call,
                _ => return,
            };
            out.push((e.site().unwrap(), kind));
        });
        out
    }
}

/// Node count of a function body.
pub fn function_size(f: &Function) -> usize {
    f.body.node_count()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub functions: Vec<Function>,
    pub init_function: Option<FuncId>,
}

impl Program {
    pub fn new(functions: Vec<Function>, init_function: Option<FuncId>) -> Program {
        Program {
            functions,
            init_function,
        }
    }

    pub fn function(&self, id: FuncId) -> Option<&Function> {
        self.functions.get(id.index()).filter(|f| f.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn id_of(&self, name: &str) -> Option<FuncId> {
        self.by_name(name).map(|f| f.id)
    }

    pub fn name_of(&self, id: FuncId) -> &str {
        self.function(id).map(|f| f.name.as_str()).unwrap_or("?")
    }
}

/// Incremental program construction with name-based forward references.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    names: Vec<String>,
    defs: Vec<Option<Function>>,
    init: Option<FuncId>,
}

impl ProgramBuilder {
    pub fn new() -> ProgramBuilder {
        ProgramBuilder::default()
    }

    /// Reserves (or looks up) the id for `name`.
    pub fn declare(&mut self, name: &str) -> FuncId {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return FuncId(i as u32);
        }
        self.names.push(name.to_string());
        self.defs.push(None);
        FuncId(self.names.len() as u32 - 1)
    }

    pub fn define(&mut self, name: &str, params: u32, locals: u32, body: Expr) -> FuncId {
        let id = self.declare(name);
        self.defs[id.index()] = Some(Function::new(id, name, params, locals, body));
        id
    }

    pub fn set_init(&mut self, id: FuncId) {
        self.init = Some(id);
    }

    /// Finishes the program. Panics if a declared function was never defined;
    /// builders are internal and a missing definition is a programming error.
    pub fn finish(self) -> Program {
        let functions = self
            .defs
            .into_iter()
            .zip(self.names)
            .map(|(d, n)| d.unwrap_or_else(|| panic!("function `{n}` declared but not defined")))
            .collect();
        Program::new(functions, self.init)
    }
}

/// Element kind of an array value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemKind {
    /// Signed bytes in [-128, 127].
    Byte,
    Int,
}

#[derive(Debug, PartialEq)]
pub struct ArrayData {
    pub kind: ElemKind,
    pub elems: RefCell<Vec<i64>>,
}

/// Shared, mutable array handle.
#[derive(Debug, Clone)]
pub struct ArrayRef(pub Rc<ArrayData>);

impl ArrayRef {
    pub fn bytes(bytes: &[i8]) -> ArrayRef {
        ArrayRef(Rc::new(ArrayData {
            kind: ElemKind::Byte,
            elems: RefCell::new(bytes.iter().map(|&b| b as i64).collect()),
        }))
    }

    pub fn ints(values: Vec<i64>) -> ArrayRef {
        ArrayRef(Rc::new(ArrayData {
            kind: ElemKind::Int,
            elems: RefCell::new(values),
        }))
    }

    pub fn kind(&self) -> ElemKind {
        self.0.kind
    }

    pub fn len(&self) -> usize {
        self.0.elems.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<i64> {
        self.0.elems.borrow().get(i).copied()
    }

    /// Raw store; returns the previous value. Bounds and kind checks are the caller's.
    pub fn store(&self, i: usize, v: i64) -> i64 {
        std::mem::replace(&mut self.0.elems.borrow_mut()[i], v)
    }

    pub fn to_vec(&self) -> Vec<i64> {
        self.0.elems.borrow().clone()
    }

    pub fn same(&self, other: &ArrayRef) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

impl PartialEq for ArrayRef {
    fn eq(&self, other: &ArrayRef) -> bool {
        self.same(other) || *self.0 == *other.0
    }
}

/// Runtime value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Array(ArrayRef),
    FuncRef(FuncId),
}

impl Value {
    pub fn bytes(bytes: &[i8]) -> Value {
        Value::Array(ArrayRef::bytes(bytes))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Array(a) if a.kind() == ElemKind::Byte => "byte array",
            Value::Array(_) => "int array",
            Value::FuncRef(_) => "function reference",
        }
    }

    /// Integer descriptor used by trace recording: ints as themselves,
    /// arrays by length, function references by id.
    pub fn descriptor(&self) -> i64 {
        match self {
            Value::Int(v) => *v,
            Value::Array(a) => a.len() as i64,
            Value::FuncRef(f) => f.0 as i64,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Array(a) => write!(f, "{:?}", a.to_vec()),
            Value::FuncRef(id) => write!(f, "&{id}"),
        }
    }
}

//! Forward facts used to prove array accesses in bounds.
//!
//! Facts are keyed by compiled-frame slot. They record locals holding a
//! known int, locals holding an array of known length, and `(index, array)`
//! pairs for which `0 <= index < len(array)` holds throughout a loop body.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{BinOp, Expr, Function, Slot};

/// Abstract value of a pure expression.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct Abs {
    pub int: Option<i64>,
    pub len: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Facts {
    /// False once every path has left through a return.
    pub reachable: bool,
    pub consts: BTreeMap<u32, i64>,
    pub lens: BTreeMap<u32, i64>,
    pub bounds: BTreeSet<(u32, u32)>,
}

impl Facts {
    pub fn unreachable() -> Facts {
        Facts {
            reachable: false,
            consts: BTreeMap::new(),
            lens: BTreeMap::new(),
            bounds: BTreeSet::new(),
        }
    }

    /// Facts at function entry: parameters from `args`, other locals zero.
    pub fn entry(base: u32, f: &Function, args: &[Abs]) -> Facts {
        let mut facts = Facts {
            reachable: true,
            ..Facts::unreachable()
        };
        for slot in 0..f.local_count.max(f.param_count) {
            let abs = if slot < f.param_count {
                args.get(slot as usize).copied().unwrap_or_default()
            } else {
                Abs {
                    int: Some(0),
                    len: None,
                }
            };
            facts.assign(base + slot, abs);
        }
        facts
    }

    pub fn const_of(&self, slot: u32) -> Option<i64> {
        self.consts.get(&slot).copied()
    }

    pub fn kill(&mut self, slot: u32) {
        self.consts.remove(&slot);
        self.lens.remove(&slot);
        self.bounds.retain(|&(i, a)| i != slot && a != slot);
    }

    pub fn assign(&mut self, slot: u32, abs: Abs) {
        if !self.reachable {
            return;
        }
        self.kill(slot);
        if let Some(v) = abs.int {
            self.consts.insert(slot, v);
        }
        if let Some(n) = abs.len {
            self.lens.insert(slot, n);
        }
    }

    /// Merge of two control-flow paths.
    pub fn join(&mut self, other: &Facts) {
        if !other.reachable {
            return;
        }
        if !self.reachable {
            *self = other.clone();
            return;
        }
        self.consts.retain(|k, v| other.consts.get(k) == Some(v));
        self.lens.retain(|k, v| other.lens.get(k) == Some(v));
        self.bounds.retain(|p| other.bounds.contains(p));
    }

    /// Records that `scrutinee` evaluated to `value`.
    pub fn learn_equals(&mut self, scrutinee: &Expr, value: i64, base: u32) {
        if !self.reachable {
            return;
        }
        match scrutinee {
            Expr::LocalGet(s) => {
                self.consts.insert(base + s, value);
            }
            Expr::ArrayLen(a) => {
                if let Expr::LocalGet(s) = **a {
                    self.lens.insert(base + s, value);
                }
            }
            _ => {}
        }
    }

    /// Whether `aget arr index` is provably in bounds before either operand
    /// is evaluated.
    pub fn proves_in_bounds(&self, arr: &Expr, index: &Expr, base: u32) -> bool {
        let Expr::LocalGet(a) = *arr else {
            return false;
        };
        let a = base + a;
        if let Expr::LocalGet(i) = *index {
            if self.bounds.contains(&(base + i, a)) {
                return true;
            }
        }
        match (abstract_value(index, base, self).int, self.lens.get(&a)) {
            (Some(i), Some(&n)) => 0 <= i && i < n,
            _ => false,
        }
    }
}

/// Abstract value of `e` under `facts`, for side-effect-free shapes only.
pub(crate) fn abstract_value(e: &Expr, base: u32, facts: &Facts) -> Abs {
    match e {
        Expr::ConstInt(v) => Abs {
            int: Some(*v),
            len: None,
        },
        Expr::LocalGet(s) => Abs {
            int: facts.consts.get(&(base + s)).copied(),
            len: facts.lens.get(&(base + s)).copied(),
        },
        Expr::ArrayLen(a) => Abs {
            int: abstract_value(a, base, facts).len,
            len: None,
        },
        Expr::BinOp(op, a, b) => {
            let a = abstract_value(a, base, facts).int;
            let b = abstract_value(b, base, facts).int;
            Abs {
                int: a.zip(b).map(|(a, b)| op.apply(a, b)),
                len: None,
            }
        }
        Expr::ArrayNew(n) => match **n {
            Expr::ConstInt(n) if n >= 0 => Abs { int: None, len: Some(n) },
            _ => Abs::default(),
        },
        _ => Abs::default(),
    }
}

/// Matches the canonical counted loop
/// `loop (lt (get i) (len (get a))) (seq ... (set i (add (get i) (const c))))`
/// with `c > 0`, where `a` is never assigned and `i` only by that final
/// statement. Returns `(i, a)`.
pub(crate) fn loop_bounds_pair(cond: &Expr, body: &Expr) -> Option<(Slot, Slot)> {
    let Expr::BinOp(BinOp::Lt, lhs, rhs) = cond else {
        return None;
    };
    let (Expr::LocalGet(i), Expr::ArrayLen(arr)) = (&**lhs, &**rhs) else {
        return None;
    };
    let Expr::LocalGet(a) = **arr else {
        return None;
    };
    let (i, a) = (*i, a);
    if i == a {
        return None;
    }
    let Expr::Seq(stmts) = body else {
        return None;
    };
    let Some(Expr::LocalSet(s, step)) = stmts.last() else {
        return None;
    };
    let step_ok = matches!(&**step, Expr::BinOp(BinOp::Add, x, c)
        if **x == Expr::LocalGet(i) && matches!(**c, Expr::ConstInt(c) if c > 0 && c <= 1 << 31));
    if *s != i || !step_ok {
        return None;
    }
    let mut writes_i = 0;
    let mut writes_a = 0;
    for e in [cond, body] {
        e.walk(&mut |n| {
            if let Expr::LocalSet(s, _) = n {
                writes_i += (*s == i) as u32;
                writes_a += (*s == a) as u32;
            }
        });
    }
    (writes_i == 1 && writes_a == 0).then_some((i, a))
}

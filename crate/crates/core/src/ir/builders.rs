//! Expression construction helpers and the two hash-code guest functions.

use super::{BinOp, Expr, FuncId, Function, SiteId, Slot, SwitchArm};

/// Terse constructors for [`Expr`] trees. Site ids are placeholders until
/// the tree is wrapped by [`Function::new`].
pub struct E;

impl E {
    pub fn c(v: i64) -> Expr {
        Expr::ConstInt(v)
    }

    pub fn get(slot: Slot) -> Expr {
        Expr::LocalGet(slot)
    }

    pub fn set(slot: Slot, value: Expr) -> Expr {
        Expr::LocalSet(slot, Box::new(value))
    }

    pub fn len(arr: Expr) -> Expr {
        Expr::ArrayLen(Box::new(arr))
    }

    pub fn aget(arr: Expr, index: Expr) -> Expr {
        Expr::ArrayGet(Box::new(arr), Box::new(index))
    }

    pub fn aset(arr: Expr, index: Expr, value: Expr) -> Expr {
        Expr::ArraySet(Box::new(arr), Box::new(index), Box::new(value))
    }

    pub fn newarr(len: Expr) -> Expr {
        Expr::ArrayNew(Box::new(len))
    }

    pub fn fref(id: FuncId) -> Expr {
        Expr::FuncRef(id)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::BinOp(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        E::bin(BinOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        E::bin(BinOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        E::bin(BinOp::Mul, a, b)
    }

    pub fn shl(a: Expr, b: Expr) -> Expr {
        E::bin(BinOp::Shl, a, b)
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        E::bin(BinOp::And, a, b)
    }

    pub fn lt(a: Expr, b: Expr) -> Expr {
        E::bin(BinOp::Lt, a, b)
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        E::bin(BinOp::Eq, a, b)
    }

    /// `slot = slot + k`
    pub fn inc(slot: Slot, k: i64) -> Expr {
        E::set(slot, E::add(E::get(slot), E::c(k)))
    }

    pub fn seq(es: Vec<Expr>) -> Expr {
        Expr::Seq(es)
    }

    pub fn if_(cond: Expr, then_branch: Expr, else_branch: Expr) -> Expr {
        Expr::If {
            site: SiteId(0),
            cond: Box::new(cond),
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        }
    }

    pub fn switch(scrutinee: Expr, arms: Vec<(i64, Expr)>, fallthrough: bool, default: Expr) -> Expr {
        Expr::Switch {
            site: SiteId(0),
            scrutinee: Box::new(scrutinee),
            arms: arms
                .into_iter()
                .map(|(value, body)| SwitchArm { value, body })
                .collect(),
            fallthrough,
            default: Box::new(default),
        }
    }

    pub fn loop_(cond: Expr, body: Expr) -> Expr {
        Expr::Loop {
            site: SiteId(0),
            cond: Box::new(cond),
            body: Box::new(body),
        }
    }

    /// `for slot in from..bound { body }` as a counted loop whose increment
    /// is the last statement of the body.
    pub fn for_range(slot: Slot, from: Expr, bound: Expr, body: Expr) -> Expr {
        E::seq(vec![
            E::set(slot, from),
            E::loop_(E::lt(E::get(slot), bound), E::seq(vec![body, E::inc(slot, 1)])),
        ])
    }

    pub fn call(callee: FuncId, args: Vec<Expr>) -> Expr {
        Expr::CallDirect {
            site: SiteId(0),
            callee,
            args,
        }
    }

    pub fn calli(callee: Expr, args: Vec<Expr>) -> Expr {
        Expr::CallIndirect {
            site: SiteId(0),
            callee: Box::new(callee),
            args,
        }
    }

    pub fn ret(e: Expr) -> Expr {
        Expr::Return(Box::new(e))
    }
}

/// Reduces a 64-bit value modulo 2^32 and sign-extends the result:
/// `((x + 2^31) & (2^32 - 1)) - 2^31`.
pub fn wrap32(e: Expr) -> Expr {
    E::sub(
        E::and(E::add(e, E::c(1 << 31)), E::c(0xFFFF_FFFF)),
        E::c(1 << 31),
    )
}

const ARR: Slot = 0;
const ACC: Slot = 1;
const IDX: Slot = 2;

/// `acc = 31 * acc + arr[idx]`
fn mul_add_step() -> Expr {
    E::set(
        ACC,
        E::add(E::mul(E::c(31), E::get(ACC)), E::aget(E::get(ARR), E::get(IDX))),
    )
}

/// The rolling-hash loop over slot 0, using slots 1 (accumulator) and 2 (index).
pub fn hash_body() -> Expr {
    E::seq(vec![
        E::set(ACC, E::c(0)),
        E::set(IDX, E::c(0)),
        E::loop_(
            E::lt(E::get(IDX), E::len(E::get(ARR))),
            E::seq(vec![mul_add_step(), E::inc(IDX, 1)]),
        ),
        E::ret(wrap32(E::get(ACC))),
    ])
}

/// Loop-based polynomial rolling hash with multiplier 31 and 32-bit wraparound.
pub fn build_hash_baseline() -> Function {
    Function::new(FuncId(0), "baseline", 1, 3, hash_body())
}

/// Fall-through switch variant: arrays of length at most 32 are hashed by a
/// straight-line chain of arms, longer ones by the baseline loop.
pub fn build_hash_ft32() -> Function {
    let mut arms = Vec::with_capacity(33);
    arms.push((
        32,
        E::seq(vec![
            E::set(ACC, E::aget(E::get(ARR), E::get(IDX))),
            E::inc(IDX, 1),
        ]),
    ));
    for k in (2..=31).rev() {
        arms.push((k, E::seq(vec![mul_add_step(), E::inc(IDX, 1)])));
    }
    arms.push((
        1,
        E::ret(wrap32(E::add(
            E::mul(E::c(31), E::get(ACC)),
            E::aget(E::get(ARR), E::get(IDX)),
        ))),
    ));
    arms.push((0, E::ret(E::c(0))));
    let body = E::seq(vec![
        E::set(ACC, E::c(0)),
        E::set(IDX, E::c(0)),
        E::switch(E::len(E::get(ARR)), arms, true, hash_body()),
    ]);
    Function::new(FuncId(0), "hashcode_ft_32", 1, 3, body)
}

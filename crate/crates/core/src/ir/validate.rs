use std::collections::HashSet;
use std::fmt;

use super::{Expr, Function, Program};

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub function: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.function {
            Some(name) => write!(f, "fn `{name}`: {}", self.message),
            None => write!(f, "program: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a program. Violations are returned
/// as data; this never fails.
pub fn validate(program: &Program) -> ValidationReport {
    let mut out = Vec::new();
    let mut names = HashSet::new();
    for (i, f) in program.functions.iter().enumerate() {
        if f.id.index() != i {
            out.push(Violation {
                function: Some(f.name.clone()),
                message: format!("id {} does not match position {i}", f.id),
            });
        }
        if !names.insert(f.name.as_str()) {
            out.push(Violation {
                function: Some(f.name.clone()),
                message: "duplicate function name".into(),
            });
        }
        check_function(program, f, &mut out);
    }
    if let Some(init) = program.init_function {
        match program.function(init) {
            None => out.push(Violation {
                function: None,
                message: format!("init function {init} does not exist"),
            }),
            Some(f) if f.param_count != 0 => out.push(Violation {
                function: Some(f.name.clone()),
                message: "init function must take zero parameters".into(),
            }),
            Some(_) => {}
        }
    }
    ValidationReport { violations: out }
}

fn check_function(program: &Program, f: &Function, out: &mut Vec<Violation>) {
    let mut push = |message: String| {
        out.push(Violation {
            function: Some(f.name.clone()),
            message,
        })
    };
    if f.param_count > f.local_count {
        push(format!(
            "parameter count {} exceeds local count {}",
            f.param_count, f.local_count
        ));
    }
    let counted = f.body.node_count();
    if counted != f.size {
        push(format!("recorded size {} but body has {counted} nodes", f.size));
    }
    let mut sites = HashSet::new();
    let mut problems = Vec::new();
    f.body.walk(&mut |e| {
        if let Some(s) = e.site() {
            if !sites.insert(s) {
                problems.push(format!("duplicate site {s}"));
            }
        }
        match e {
            Expr::LocalGet(slot) | Expr::LocalSet(slot, _) if *slot >= f.local_count => {
                problems.push(format!(
                    "slot {slot} out of range (local count {})",
                    f.local_count
                ));
            }
            Expr::Switch { site, arms, .. } => {
                let mut seen = HashSet::new();
                for a in arms {
                    if !seen.insert(a.value) {
                        problems.push(format!("duplicate case {} at site {site}", a.value));
                    }
                }
            }
            Expr::FuncRef(id) if program.function(*id).is_none() => {
                problems.push(format!("reference to unknown function {id}"));
            }
            Expr::CallDirect { site, callee, args } => match program.function(*callee) {
                None => problems.push(format!("call at site {site} to unknown function {callee}")),
                Some(g) if g.param_count as usize != args.len() => problems.push(format!(
                    "arity mismatch at site {site}: `{}` takes {} argument(s), got {}",
                    g.name,
                    g.param_count,
                    args.len()
                )),
                Some(_) => {}
            },
            _ => {}
        }
    });
    for p in problems {
        push(p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_hash_ft32, FuncId, SiteId, E};

    #[test]
    fn empty_program_is_ok() {
        assert!(validate(&Program::default()).is_ok());
    }

    #[test]
    fn duplicate_site_is_reported() {
        let mut f = Function::new(
            FuncId(0),
            "f",
            1,
            1,
            E::seq(vec![
                E::if_(E::get(0), E::c(1), E::c(2)),
                E::if_(E::get(0), E::c(1), E::c(2)),
            ]),
        );
        if let Expr::Seq(es) = &mut f.body {
            for e in es {
                if let Expr::If { site, .. } = e {
                    *site = SiteId(3);
                }
            }
        }
        let report = validate(&Program::new(vec![f], None));
        assert!(report.mentions("duplicate site 3"), "{report}");
    }

    #[test]
    fn duplicate_case_is_reported() {
        let f = Function::new(
            FuncId(0),
            "f",
            1,
            1,
            E::switch(E::get(0), vec![(5, E::c(1)), (5, E::c(2))], false, E::c(0)),
        );
        let report = validate(&Program::new(vec![f], None));
        assert!(report.mentions("duplicate case 5"), "{report}");
    }

    #[test]
    fn slot_and_arity_and_init_rules() {
        let g = Function::new(FuncId(1), "g", 2, 2, E::get(0));
        let f = Function::new(
            FuncId(0),
            "f",
            1,
            1,
            E::seq(vec![E::get(4), E::call(FuncId(1), vec![E::c(1)])]),
        );
        let report = validate(&Program::new(vec![f, g], Some(FuncId(1))));
        assert!(report.mentions("slot 4 out of range"), "{report}");
        assert!(report.mentions("arity mismatch"), "{report}");
        assert!(report.mentions("zero parameters"), "{report}");
    }

    #[test]
    fn builders_validate() {
        assert!(validate(&Program::new(vec![build_hash_ft32()], None)).is_ok());
    }
}

//! Profile counters collected by the interpreter.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ir::{Expr, FuncId, Program, SiteId, SiteKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchProfile {
    pub taken: u64,
    pub not_taken: u64,
}

impl BranchProfile {
    pub fn total(&self) -> u64 {
        self.taken + self.not_taken
    }
}

/// Entry histogram of a switch. Only the arm selected at dispatch is
/// counted; arms reached by fall-through are not.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwitchProfile {
    case_values: Vec<i64>,
    counts: Vec<u64>,
    pub default_count: u64,
}

impl SwitchProfile {
    fn new(case_values: Vec<i64>) -> SwitchProfile {
        let counts = vec![0; case_values.len()];
        SwitchProfile {
            case_values,
            counts,
            default_count: 0,
        }
    }

    pub fn count(&self, case_value: i64) -> u64 {
        self.case_values
            .iter()
            .position(|&v| v == case_value)
            .map_or(0, |i| self.counts[i])
    }

    /// Count for the arm at `index` in declaration order.
    pub fn arm_count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    /// `(case value, count)` in arm order.
    pub fn entries(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.case_values.iter().copied().zip(self.counts.iter().copied())
    }

    /// Case values with a nonzero count, in arm order.
    pub fn observed_cases(&self) -> Vec<i64> {
        self.entries().filter(|(_, c)| *c > 0).map(|(v, _)| v).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.default_count
    }
}

/// Inline-cache state of a call site: observed callees and their counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallTargetProfile {
    counts: Vec<(FuncId, u64)>,
}

impl CallTargetProfile {
    pub fn count(&self, callee: FuncId) -> u64 {
        self.counts
            .iter()
            .find(|(f, _)| *f == callee)
            .map_or(0, |(_, c)| *c)
    }

    /// Observed callees by descending count, ties by ascending id.
    pub fn by_frequency(&self) -> Vec<(FuncId, u64)> {
        let mut v = self.counts.clone();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|(_, c)| c).sum()
    }

    fn record(&mut self, callee: FuncId) {
        match self.counts.iter_mut().find(|(f, _)| *f == callee) {
            Some((_, c)) => *c += 1,
            None => self.counts.push((callee, 1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SiteProfile {
    /// `If` sites and `Loop` conditions (taken = condition true).
    Branch(SiteKind, BranchProfile),
    Switch(SwitchProfile),
    Call(CallTargetProfile),
}

impl SiteProfile {
    pub fn total(&self) -> u64 {
        match self {
            SiteProfile::Branch(_, b) => b.total(),
            SiteProfile::Switch(s) => s.total(),
            SiteProfile::Call(c) => c.total(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FunctionProfile {
    pub invocations: u64,
    pub back_edges: u64,
    sites: Vec<Option<SiteProfile>>,
}

impl FunctionProfile {
    pub fn hotness(&self) -> u64 {
        self.invocations + self.back_edges
    }

    pub fn site(&self, site: SiteId) -> Option<&SiteProfile> {
        self.sites.get(site.0 as usize).and_then(Option::as_ref)
    }

    pub fn sites(&self) -> impl Iterator<Item = (SiteId, &SiteProfile)> {
        self.sites
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (SiteId(i as u32), s)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("unknown site {site} in function {function}")]
    UnknownSite { function: FuncId, site: SiteId },
    #[error("site {site} in function {function} is a {found} site, expected {expected}")]
    WrongKind {
        function: FuncId,
        site: SiteId,
        expected: &'static str,
        found: &'static str,
    },
}

/// Per-function and per-site counters. All counts only ever increase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileStore {
    functions: Vec<FunctionProfile>,
}

impl ProfileStore {
    /// Zeroed counters shaped after `program`'s sites.
    pub fn new(program: &Program) -> ProfileStore {
        let functions = program
            .functions
            .iter()
            .map(|f| {
                let mut sites: Vec<Option<SiteProfile>> = Vec::new();
                f.body.walk(&mut |e| {
                    let Some(site) = e.site() else { return };
                    let idx = site.0 as usize;
                    if sites.len() <= idx {
                        sites.resize(idx + 1, None);
                    }
                    sites[idx] = Some(match e {
                        Expr::If { .. } => SiteProfile::Branch(SiteKind::Branch, BranchProfile::default()),
                        Expr::Loop { .. } => SiteProfile::Branch(SiteKind::Loop, BranchProfile::default()),
                        Expr::Switch { arms, .. } => {
                            SiteProfile::Switch(SwitchProfile::new(arms.iter().map(|a| a.value).collect()))
                        }
                        _ => SiteProfile::Call(CallTargetProfile::default()),
                    });
                });
                FunctionProfile {
                    invocations: 0,
                    back_edges: 0,
                    sites,
                }
            })
            .collect();
        ProfileStore { functions }
    }

    pub fn function(&self, f: FuncId) -> &FunctionProfile {
        &self.functions[f.index()]
    }

    pub fn hotness(&self, f: FuncId) -> u64 {
        self.function(f).hotness()
    }

    pub fn invocations(&self, f: FuncId) -> u64 {
        self.function(f).invocations
    }

    pub fn site(&self, f: FuncId, site: SiteId) -> Option<&SiteProfile> {
        self.functions.get(f.index()).and_then(|p| p.site(site))
    }

    pub fn branch(&self, f: FuncId, site: SiteId) -> Result<&BranchProfile, ProfileError> {
        match self.site(f, site) {
            Some(SiteProfile::Branch(_, b)) => Ok(b),
            Some(other) => Err(wrong_kind(f, site, "branch", other)),
            None => Err(ProfileError::UnknownSite { function: f, site }),
        }
    }

    pub fn switch(&self, f: FuncId, site: SiteId) -> Result<&SwitchProfile, ProfileError> {
        match self.site(f, site) {
            Some(SiteProfile::Switch(s)) => Ok(s),
            Some(other) => Err(wrong_kind(f, site, "switch", other)),
            None => Err(ProfileError::UnknownSite { function: f, site }),
        }
    }

    pub fn calls(&self, f: FuncId, site: SiteId) -> Result<&CallTargetProfile, ProfileError> {
        match self.site(f, site) {
            Some(SiteProfile::Call(c)) => Ok(c),
            Some(other) => Err(wrong_kind(f, site, "call", other)),
            None => Err(ProfileError::UnknownSite { function: f, site }),
        }
    }

    fn site_mut(&mut self, f: FuncId, site: SiteId) -> &mut SiteProfile {
        self.functions[f.index()].sites[site.0 as usize]
            .as_mut()
            .expect("profile site exists for every IR site")
    }

    #[inline]
    pub fn record_invocation(&mut self, f: FuncId) {
        self.functions[f.index()].invocations += 1;
    }

    #[inline]
    pub fn record_back_edge(&mut self, f: FuncId) {
        self.functions[f.index()].back_edges += 1;
    }

    #[inline]
    pub fn record_branch(&mut self, f: FuncId, site: SiteId, taken: bool) {
        if let SiteProfile::Branch(_, b) = self.site_mut(f, site) {
            if taken {
                b.taken += 1;
            } else {
                b.not_taken += 1;
            }
        }
    }

    /// Records a switch dispatch; `arm` is the matched arm index or `None` for default.
    #[inline]
    pub fn record_switch(&mut self, f: FuncId, site: SiteId, arm: Option<usize>) {
        if let SiteProfile::Switch(s) = self.site_mut(f, site) {
            match arm {
                Some(i) => s.counts[i] += 1,
                None => s.default_count += 1,
            }
        }
    }

    #[inline]
    pub fn record_call(&mut self, f: FuncId, site: SiteId, callee: FuncId) {
        if let SiteProfile::Call(c) = self.site_mut(f, site) {
            c.record(callee);
        }
    }

    /// Test and tooling hook: overwrite a branch site's counters.
    pub fn set_branch(&mut self, f: FuncId, site: SiteId, taken: u64, not_taken: u64) {
        if let SiteProfile::Branch(_, b) = self.site_mut(f, site) {
            b.taken = taken;
            b.not_taken = not_taken;
        }
    }

    /// Test and tooling hook: overwrite a switch site's counters.
    pub fn set_switch(&mut self, f: FuncId, site: SiteId, cases: &[(i64, u64)], default_count: u64) {
        if let SiteProfile::Switch(s) = self.site_mut(f, site) {
            for c in s.counts.iter_mut() {
                *c = 0;
            }
            for &(v, n) in cases {
                if let Some(i) = s.case_values.iter().position(|&x| x == v) {
                    s.counts[i] = n;
                }
            }
            s.default_count = default_count;
        }
    }

    /// Test and tooling hook: overwrite a call site's histogram.
    pub fn set_calls(&mut self, f: FuncId, site: SiteId, targets: &[(FuncId, u64)]) {
        if let SiteProfile::Call(c) = self.site_mut(f, site) {
            c.counts = targets.iter().copied().filter(|(_, n)| *n > 0).collect();
        }
    }

    pub fn set_hotness(&mut self, f: FuncId, invocations: u64, back_edges: u64) {
        let p = &mut self.functions[f.index()];
        p.invocations = invocations;
        p.back_edges = back_edges;
    }

    /// Debug dump, one line per site ordered by (function id, site id):
    /// `<fn>.<site> kind=<branch|switch|call> <histogram>`.
    pub fn dump(&self, program: &Program) -> String {
        let mut out = String::new();
        for (i, fp) in self.functions.iter().enumerate() {
            let fname = program.name_of(FuncId(i as u32));
            for (site, sp) in fp.sites() {
                let _ = write!(out, "{fname}.{site} ");
                match sp {
                    SiteProfile::Branch(_, b) => {
                        let _ = write!(out, "kind=branch taken={} not_taken={}", b.taken, b.not_taken);
                    }
                    SiteProfile::Switch(s) => {
                        out.push_str("kind=switch");
                        for (v, c) in s.entries().filter(|(_, c)| *c > 0) {
                            let _ = write!(out, " {v}={c}");
                        }
                        let _ = write!(out, " default={}", s.default_count);
                    }
                    SiteProfile::Call(c) => {
                        out.push_str("kind=call");
                        let mut v = c.counts.clone();
                        v.sort();
                        for (f, n) in v {
                            let _ = write!(out, " {}={n}", program.name_of(f));
                        }
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn wrong_kind(f: FuncId, site: SiteId, expected: &'static str, found: &SiteProfile) -> ProfileError {
    ProfileError::WrongKind {
        function: f,
        site,
        expected,
        found: match found {
            SiteProfile::Branch(..) => "branch",
            SiteProfile::Switch(_) => "switch",
            SiteProfile::Call(_) => "call",
        },
    }
}

/// Fraction of condition evaluations that were true, or `None` without data.
pub fn branch_probability(
    profiles: &ProfileStore,
    f: FuncId,
    site: SiteId,
) -> Result<Option<f64>, ProfileError> {
    let b = profiles.branch(f, site)?;
    Ok(match b.total() {
        0 => None,
        n => Some(b.taken as f64 / n as f64),
    })
}

/// Classification of an indirect call site's observed callees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Morphism {
    NoData,
    Monomorphic(FuncId),
    /// Callees by descending frequency.
    Polymorphic(Vec<FuncId>),
    Megamorphic,
}

pub fn call_site_morphism(
    profiles: &ProfileStore,
    f: FuncId,
    site: SiteId,
    max_inline_targets: usize,
) -> Result<Morphism, ProfileError> {
    let c = profiles.calls(f, site)?;
    Ok(classify(c, max_inline_targets))
}

pub(crate) fn classify(c: &CallTargetProfile, max_inline_targets: usize) -> Morphism {
    match c.distinct() {
        0 => Morphism::NoData,
        1 => Morphism::Monomorphic(c.counts[0].0),
        n if n <= max_inline_targets => {
            Morphism::Polymorphic(c.by_frequency().into_iter().map(|(f, _)| f).collect())
        }
        _ => Morphism::Megamorphic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Function, E};

    fn program() -> Program {
        let body = E::seq(vec![
            E::if_(E::get(0), E::c(1), E::c(2)),
            E::calli(E::get(0), vec![]),
            E::switch(E::get(0), vec![(1, E::c(1))], false, E::c(0)),
        ]);
        Program::new(vec![Function::new(FuncId(0), "f", 1, 1, body)], None)
    }

    #[test]
    fn branch_probability_examples() {
        let p = program();
        let mut s = ProfileStore::new(&p);
        let (f, site) = (FuncId(0), SiteId(0));
        assert_eq!(branch_probability(&s, f, site).unwrap(), None);
        s.set_branch(f, site, 10, 0);
        assert_eq!(branch_probability(&s, f, site).unwrap(), Some(1.0));
        s.set_branch(f, site, 3, 1);
        assert_eq!(branch_probability(&s, f, site).unwrap(), Some(0.75));
        assert!(matches!(
            branch_probability(&s, f, SiteId(9)),
            Err(ProfileError::UnknownSite { .. })
        ));
        assert!(matches!(
            branch_probability(&s, f, SiteId(1)),
            Err(ProfileError::WrongKind { .. })
        ));
    }

    #[test]
    fn morphism_examples() {
        let p = program();
        let mut s = ProfileStore::new(&p);
        let (f, site) = (FuncId(0), SiteId(1));
        let (a, b, c) = (FuncId(10), FuncId(11), FuncId(12));
        assert_eq!(call_site_morphism(&s, f, site, 2).unwrap(), Morphism::NoData);
        s.set_calls(f, site, &[(a, 100)]);
        assert_eq!(call_site_morphism(&s, f, site, 2).unwrap(), Morphism::Monomorphic(a));
        s.set_calls(f, site, &[(b, 40), (a, 60)]);
        assert_eq!(
            call_site_morphism(&s, f, site, 2).unwrap(),
            Morphism::Polymorphic(vec![a, b])
        );
        s.set_calls(f, site, &[(a, 1), (b, 1), (c, 1)]);
        assert_eq!(call_site_morphism(&s, f, site, 2).unwrap(), Morphism::Megamorphic);
        assert!(call_site_morphism(&s, f, SiteId(0), 2).is_err());
    }

    #[test]
    fn dump_format() {
        let p = program();
        let mut s = ProfileStore::new(&p);
        s.set_branch(FuncId(0), SiteId(0), 3, 1);
        s.set_calls(FuncId(0), SiteId(1), &[(FuncId(0), 2)]);
        s.set_switch(FuncId(0), SiteId(2), &[(1, 5)], 2);
        assert_eq!(
            s.dump(&p),
            "f.0 kind=branch taken=3 not_taken=1\nf.1 kind=call f=2\nf.2 kind=switch 1=5 default=2\n"
        );
    }
}

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use super::build::{is_why_not, new_items, side_condition};
use super::{Derivation, Kernel, Rule};
use crate::logic::{multiset_eq, Formula, IFormula, Sequent};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckReason {
    ForbiddenRule,
    ForbiddenConstructor(Formula),
    OutOfUniverse(IFormula),
    NotIntuitionistic,
    PremiseCount { expected: usize, got: usize },
    BadPrincipal,
    BadSplit,
    Shape(String),
    SideCondition(&'static str),
    EmptyAxiom,
    AtomsDiffer,
    NotPartition,
    ContextMismatch { premise: usize, expected: Sequent, found: Sequent },
    NotWhyNotContext(IFormula),
    EigenvariableCapture(String),
}

impl fmt::Display for CheckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckReason::ForbiddenRule => f.write_str("rule not available in this calculus"),
            CheckReason::ForbiddenConstructor(a) => write!(f, "formula {a} uses a connective outside this calculus"),
            CheckReason::OutOfUniverse(i) => write!(f, "{i} refers to roles outside the universe"),
            CheckReason::NotIntuitionistic => f.write_str("sequent has more than one i-formula in J"),
            CheckReason::PremiseCount { expected, got } => write!(f, "expected {expected} premises, got {got}"),
            CheckReason::BadPrincipal => f.write_str("major i-formula index missing or out of range"),
            CheckReason::BadSplit => f.write_str("context split indices invalid"),
            CheckReason::Shape(m) => f.write_str(m),
            CheckReason::SideCondition(c) => write!(f, "side condition {c} violated"),
            CheckReason::EmptyAxiom => f.write_str("id needs at least one i-formula"),
            CheckReason::AtomsDiffer => f.write_str("id needs one and the same primitive formula throughout"),
            CheckReason::NotPartition => f.write_str("id role sets overlap or do not cover the universe"),
            CheckReason::ContextMismatch { premise, expected, found } => {
                write!(f, "premise {premise} should be {expected} but is {found}")
            }
            CheckReason::NotWhyNotContext(i) => write!(f, "bang-pos context item {i} is not a ?-formula"),
            CheckReason::EigenvariableCapture(y) => write!(f, "eigenvariable {y} occurs free in the conclusion"),
        }
    }
}

/// A failed node, addressed by the premise indices leading to it from the root.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at node {path:?} ({rule}): {reason}")]
pub struct CheckError {
    pub path: Vec<usize>,
    pub rule: Rule,
    pub reason: CheckReason,
}

impl Kernel {
    pub fn check(&self, d: &Derivation) -> Result<(), CheckError> {
        self.check_at(d, &mut Vec::new())
    }

    fn in_universe(&self, i: &IFormula) -> bool {
        let n = self.universe.size();
        let mut roles = BTreeSet::new();
        let mut sizes = BTreeSet::new();
        i.formula.universe_refs(&mut roles, &mut sizes);
        self.universe.contains(i.roles) && roles.iter().all(|&r| r < n) && sizes.iter().all(|&s| s == n)
    }

    fn check_at(&self, d: &Derivation, path: &mut Vec<usize>) -> Result<(), CheckError> {
        let fail = |reason| Err(CheckError { path: path.clone(), rule: d.rule, reason });
        if !self.calc.allows_rule(d.rule) {
            return fail(CheckReason::ForbiddenRule);
        }
        for i in &d.conclusion {
            if !self.calc.allows_formula(&i.formula) {
                return fail(CheckReason::ForbiddenConstructor(i.formula.clone()));
            }
            if !self.in_universe(i) {
                return fail(CheckReason::OutOfUniverse(i.clone()));
            }
        }
        if !self.intuitionistic_ok(&d.conclusion) {
            return fail(CheckReason::NotIntuitionistic);
        }
        if d.premises.len() != d.rule.premise_count() {
            return fail(CheckReason::PremiseCount { expected: d.rule.premise_count(), got: d.premises.len() });
        }
        if d.rule == Rule::Id {
            let Some(first) = d.conclusion.first() else {
                return fail(CheckReason::EmptyAxiom);
            };
            if !first.formula.is_atom() || d.conclusion.iter().any(|i| i.formula != first.formula) {
                return fail(CheckReason::AtomsDiffer);
            }
            let roles: Vec<_> = d.conclusion.iter().map(|i| i.roles).collect();
            if !self.universe.partition_check(&roles) {
                return fail(CheckReason::NotPartition);
            }
            return Ok(());
        }
        let Some(p) = d.principal() else {
            return fail(CheckReason::BadPrincipal);
        };
        side_condition(d.rule, p).or_else(|c| fail(CheckReason::SideCondition(c)))?;
        let news = match new_items(d.rule, p, &d.inst) {
            Ok(n) => n,
            Err(m) => return fail(CheckReason::Shape(m)),
        };
        if d.rule.splits_context() {
            let ctx_len = d.conclusion.len() - 1;
            let left = d.inst.left.clone().unwrap_or_default();
            let unique: BTreeSet<_> = left.iter().collect();
            if unique.len() != left.len() || left.iter().any(|&k| k >= ctx_len) {
                return fail(CheckReason::BadSplit);
            }
        }
        let ctxs = d.premise_contexts();
        if d.rule == Rule::BangPos {
            if let Some(bad) = ctxs[0].iter().find(|i| !is_why_not(i)) {
                return fail(CheckReason::NotWhyNotContext(bad.clone()));
            }
        }
        if d.rule == Rule::ForallPos {
            let y = d.inst.eigen.as_deref().unwrap_or_default();
            if p.formula.has_free(y) || ctxs[0].iter().any(|i| i.formula.has_free(y)) {
                return fail(CheckReason::EigenvariableCapture(y.to_string()));
            }
        }
        for (k, ((prem, ctx), new)) in d.premises.iter().zip(&ctxs).zip(&news).enumerate() {
            let mut expected = ctx.clone();
            expected.extend(new.iter().cloned());
            if !multiset_eq(&prem.conclusion, &expected) {
                return fail(CheckReason::ContextMismatch {
                    premise: k,
                    expected: Sequent::new(expected),
                    found: prem.sequent(),
                });
            }
        }
        for (k, prem) in d.premises.iter().enumerate() {
            path.push(k);
            self.check_at(prem, path)?;
            path.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Calculus;
    use crate::roles::{RoleSet, Universe};

    fn kernel(n: usize, calc: Calculus) -> Kernel {
        Kernel::new(Universe::new(n).unwrap(), calc)
    }

    fn item(roles: &str, f: &str) -> IFormula {
        IFormula::new(roles.parse::<RoleSet>().unwrap(), f.parse().unwrap())
    }

    #[test]
    fn id_partition() {
        let k = kernel(3, Calculus::Lmrl);
        assert!(k.check(&Derivation::id(vec![item("{0}", "a"), item("{1,2}", "a")])).is_ok());
        let e = k.check(&Derivation::id(vec![item("{0}", "a"), item("{0,1,2}", "a")])).unwrap_err();
        assert_eq!(e.reason, CheckReason::NotPartition);
        let e = k.check(&Derivation::id(vec![item("{0}", "a"), item("{1,2}", "b")])).unwrap_err();
        assert_eq!(e.reason, CheckReason::AtomsDiffer);
    }

    #[test]
    fn positive_rule_needs_membership() {
        let k = kernel(2, Calculus::Mrl);
        let full = item("{0,1}", "a");
        let prem = Derivation::id(vec![full.clone()]);
        // <{1}>(and @0 a a) is not in U@0, so and-pos must be rejected
        let mut d = Derivation::binary(Rule::ConjPos, item("{0,1}", "(and @0 a a)"), prem.clone(), prem).unwrap();
        assert!(k.check(&d).is_ok());
        d.conclusion[0] = item("{1}", "(and @0 a a)");
        let e = k.check(&d).unwrap_err();
        assert_eq!(e.reason, CheckReason::SideCondition("R in U"));
    }

    #[test]
    fn rules_are_per_calculus() {
        let k = kernel(2, Calculus::Lmrl);
        let d = Derivation::unary(Rule::Weaken, item("{0}", "b"), Derivation::id(vec![item("{0,1}", "a")])).unwrap();
        assert_eq!(k.check(&d).unwrap_err().reason, CheckReason::ForbiddenRule);
        assert!(kernel(2, Calculus::Mrl).check(&d).is_ok());
    }

    #[test]
    fn eigenvariable_freshness() {
        let k = kernel(2, Calculus::Mrl);
        let prem = Derivation::id(vec![item("{0,1}", "(p x)")]);
        let ok = Derivation::forall_pos(item("{0,1}", "(forall @0 x (p x))"), "x", prem.clone()).unwrap();
        assert!(k.check(&ok).is_ok());
        let w = Derivation::unary(Rule::Weaken, item("{0}", "(q x)"), prem).unwrap();
        let bad = Derivation::forall_pos(item("{0,1}", "(forall @0 x (p x))"), "x", w).unwrap();
        assert!(matches!(k.check(&bad).unwrap_err().reason, CheckReason::EigenvariableCapture(_)));
    }

    #[test]
    fn mrlj_rejects_two_j_items() {
        let k = kernel(2, Calculus::Mrlj(crate::roles::Ultrafilter(1)));
        let d = Derivation::id(vec![item("{0,1}", "a")]);
        assert!(k.check(&d).is_ok());
        let w = Derivation::unary(Rule::Weaken, item("{1}", "b"), d).unwrap();
        assert_eq!(k.check(&w).unwrap_err().reason, CheckReason::NotIntuitionistic);
    }
}

//! Full-set axioms, role splitting and 1-cut.

use std::collections::BTreeSet;

use super::build::{distribute, new_items, remove_n};
use super::{Derivation, Inst, Kernel, KernelError, Rule};
use crate::logic::{Formula, IFormula, Term};
use crate::roles::RoleSet;

/// Supplies eigenvariable names `_e<N>` that do not occur in the inputs.
#[derive(Debug, Clone)]
pub(crate) struct Fresh {
    next: usize,
}

impl Fresh {
    pub(crate) fn avoiding(ds: &[&Derivation]) -> Fresh {
        let mut names = BTreeSet::new();
        for d in ds {
            d.visit(&mut |n| {
                for i in &n.conclusion {
                    i.formula.all_vars(&mut names);
                }
                if let Some(e) = &n.inst.eigen {
                    names.insert(e.clone());
                }
                if let Some(Term::Var(v)) = &n.inst.witness {
                    names.insert(v.clone());
                }
            });
        }
        let next = names
            .iter()
            .filter_map(|n| n.strip_prefix("_e").and_then(|k| k.parse::<usize>().ok()))
            .map(|k| k + 1)
            .max()
            .unwrap_or(0);
        Fresh { next }
    }

    pub(crate) fn name(&mut self) -> String {
        let n = format!("_e{}", self.next);
        self.next += 1;
        n
    }
}

fn extras(d: &Derivation) -> Inst {
    Inst { principal: None, left: None, witness: d.inst.witness.clone(), eigen: d.inst.eigen.clone() }
}

/// `D[t/x]`: substitutes into every sequent where `x` is free, renaming
/// eigenvariables that would capture a variable of `t`.
pub(crate) fn subst_derivation(d: &Derivation, x: &str, t: &Term, fresh: &mut Fresh) -> Derivation {
    if !d.conclusion.iter().any(|i| i.formula.has_free(x)) {
        return d.clone();
    }
    let mut premises = d.premises.clone();
    let mut inst = d.inst.clone();
    if d.rule == Rule::ForallPos {
        if let (Some(e), Term::Var(v)) = (&d.inst.eigen, t) {
            if e == v {
                let z = fresh.name();
                premises = premises.iter().map(|p| subst_derivation(p, e, &Term::Var(z.clone()), fresh)).collect();
                inst.eigen = Some(z);
            }
        }
    }
    if let Some(Term::Var(w)) = &inst.witness {
        if w == x {
            inst.witness = Some(t.clone());
        }
    }
    Derivation {
        rule: d.rule,
        conclusion: d.conclusion.iter().map(|i| i.substitute(x, t)).collect(),
        inst,
        premises: premises.iter().map(|p| subst_derivation(p, x, t, fresh)).collect(),
    }
}

impl Kernel {
    pub(crate) fn weaken_with(&self, mut d: Derivation, items: &[IFormula]) -> Result<Derivation, KernelError> {
        let rule = if self.calc.has_weakening() { Rule::Weaken } else { Rule::BangWeaken };
        for i in items {
            d = Derivation::unary(rule, i.clone(), d)?;
        }
        Ok(d)
    }

    /// Contracts one duplicate of each listed i-formula.
    pub(crate) fn contract_with(&self, mut d: Derivation, items: &[IFormula]) -> Result<Derivation, KernelError> {
        let rule = if self.calc.has_weakening() { Rule::Contract } else { Rule::BangContract };
        for i in items {
            d = Derivation::unary(rule, i.clone(), d)?;
        }
        Ok(d)
    }

    /// A derivation of `|- <full>A`.
    pub fn axiom_fullset(&self, a: &Formula) -> Result<Derivation, KernelError> {
        if !self.calc.allows_formula(a) {
            return Err(KernelError::WrongCalculus(a.clone(), self.calc.name()));
        }
        let d = self.fullset(a)?;
        self.check(&d)?;
        Ok(d)
    }

    fn fullset(&self, a: &Formula) -> Result<Derivation, KernelError> {
        let full = self.universe.full();
        let me = IFormula::new(full, a.clone());
        match a {
            Formula::Atom(..) => Ok(Derivation::id(vec![me])),
            Formula::Neg(_, b) => Derivation::unary(Rule::Neg, me, self.fullset(b)?),
            Formula::Conj(_, b, c) => Derivation::binary(Rule::ConjPos, me, self.fullset(b)?, self.fullset(c)?),
            Formula::AConj(_, b, c) => Derivation::binary(Rule::WithPos, me, self.fullset(b)?, self.fullset(c)?),
            Formula::MConj(_, b, c) => Derivation::binary(Rule::TensorPos, me, self.fullset(b)?, self.fullset(c)?),
            Formula::Impl(_, _, b, c) => Derivation::binary(Rule::ImplPos, me, self.fullset(b)?, self.fullset(c)?),
            Formula::Bang(_, b) => Derivation::unary(Rule::BangPos, me, self.fullset(b)?),
            Formula::Forall(_, x, b) => Derivation::forall_pos(me, x, self.fullset(b)?),
        }
    }

    /// From `D :: G, <R1 + R2>A` (the i-formula at `index`) derives `G, <R1>A, <R2>A`.
    pub fn split_roles(&self, d: &Derivation, index: usize, r1: RoleSet, r2: RoleSet) -> Result<Derivation, KernelError> {
        let f = self.index(d, index)?.clone();
        if !r1.is_disjoint(r2) {
            return Err(KernelError::NotDisjoint(r1, r2));
        }
        if r1.union(r2) != f.roles {
            return Err(KernelError::SplitMismatch { whole: f.roles, left: r1, right: r2 });
        }
        let mut fresh = Fresh::avoiding(&[d]);
        let out = self.split_k(d.clone(), &f, 1, r1, r2, &mut fresh)?;
        self.check_transformed(&out)?;
        Ok(out)
    }

    /// In MRLJ a transformation can pass through a sequent with two items in
    /// `J`; that is reported as such rather than as a malformed node.
    fn check_transformed(&self, d: &Derivation) -> Result<(), KernelError> {
        self.check(d).map_err(|e| match e.reason {
            super::CheckReason::NotIntuitionistic => KernelError::NotIntuitionistic(d.sequent()),
            _ => KernelError::Check(e),
        })
    }

    /// `|- <R1>A, ..., <Rn>A` for a partition `rs` of the universe.
    pub fn axiom_multi(&self, a: &Formula, rs: &[RoleSet]) -> Result<Derivation, KernelError> {
        if !self.universe.partition_check(rs) {
            return Err(KernelError::NotPartition);
        }
        if !self.calc.allows_formula(a) {
            return Err(KernelError::WrongCalculus(a.clone(), self.calc.name()));
        }
        let mut d = self.fullset(a)?;
        let mut rest = self.universe.full();
        let mut fresh = Fresh::avoiding(&[&d]);
        for r in &rs[..rs.len() - 1] {
            let whole = IFormula::new(rest, a.clone());
            rest = rest.minus(*r);
            d = self.split_k(d, &whole, 1, *r, rest, &mut fresh)?;
        }
        self.check_transformed(&d)?;
        Ok(d)
    }

    /// Removes `k` tracked copies of `f` and adds `<r1>A, <r2>A`.
    pub(crate) fn split_k(
        &self,
        d: Derivation,
        f: &IFormula,
        k: usize,
        r1: RoleSet,
        r2: RoleSet,
        fresh: &mut Fresh,
    ) -> Result<Derivation, KernelError> {
        let g1 = IFormula::new(r1, f.formula.clone());
        let g2 = IFormula::new(r2, f.formula.clone());
        if k == 0 {
            return self.weaken_with(d, &[g1, g2]);
        }
        if d.rule == Rule::Id {
            let mut items = remove_n(&d.conclusion, f, k).ok_or_else(|| missing(Rule::Id, f))?;
            items.push(g1);
            items.push(g2);
            return Ok(Derivation::id(items));
        }
        let major = d.principal().is_some_and(|p| p.alpha_eq(f));
        if major {
            let mut d = d;
            match d.rule {
                Rule::Weaken | Rule::BangWeaken => return self.split_k(d.premises.remove(0), f, k - 1, r1, r2, fresh),
                Rule::Contract | Rule::BangContract => {
                    return self.split_k(d.premises.remove(0), f, k + 1, r1, r2, fresh)
                }
                _ => {}
            }
            if k == 1 {
                return self.split_major(d, r1, r2, fresh);
            }
            let counts = distribute(&d, f, k - 1);
            let pushed = self.push_split(d, f, &counts, r1, r2, fresh)?;
            let out = self.split_major(pushed, r1, r2, fresh)?;
            return self.contract_with(out, &[g1, g2]);
        }
        let counts = distribute(&d, f, k);
        self.push_split(d, f, &counts, r1, r2, fresh)
    }

    /// Splits the tracked copies inside the premises and reapplies the last rule.
    fn push_split(
        &self,
        d: Derivation,
        f: &IFormula,
        counts: &[usize],
        r1: RoleSet,
        r2: RoleSet,
        fresh: &mut Fresh,
    ) -> Result<Derivation, KernelError> {
        let p = d.principal().cloned().ok_or_else(|| missing(d.rule, f))?;
        let ex = extras(&d);
        let mut prems = Vec::new();
        for (prem, &c) in d.premises.into_iter().zip(counts) {
            prems.push(if c > 0 { self.split_k(prem, f, c, r1, r2, fresh)? } else { prem });
        }
        let both = d.rule.splits_context() && counts.iter().filter(|&&c| c > 0).count() > 1;
        let out = Derivation::assemble(d.rule, p, ex, prems)?;
        if both {
            self.contract_with(out, &[IFormula::new(r1, f.formula.clone()), IFormula::new(r2, f.formula.clone())])
        } else {
            Ok(out)
        }
    }

    /// Splits the major i-formula of `d`, which is its only tracked copy.
    fn split_major(&self, mut d: Derivation, r1: RoleSet, r2: RoleSet, fresh: &mut Fresh) -> Result<Derivation, KernelError> {
        let p = d.principal().cloned().ok_or_else(|| KernelError::Assemble { rule: d.rule, msg: "no major".into() })?;
        let rule = d.rule;
        let news = new_items(rule, &p, &d.inst).map_err(|msg| KernelError::Assemble { rule, msg })?;
        let g1 = IFormula::new(r1, p.formula.clone());
        let g2 = IFormula::new(r2, p.formula.clone());
        // the part in U (if any) takes the positive rule, the other the negative one
        let (gp, gn, rp, rn) = match uf(&p.formula) {
            Some(u) if u.contains(r2) => (g2.clone(), g1.clone(), r2, r1),
            _ => (g1.clone(), g2.clone(), r1, r2),
        };
        let mut split_item = |prem: Derivation, item: &IFormula, a: RoleSet, b: RoleSet| -> Result<Derivation, KernelError> {
            self.split_k(prem, item, 1, a, b, fresh)
        };
        let pre = |f: &crate::roles::Endo, r: RoleSet| f.preimage(r);
        match (&p.formula, rule) {
            (Formula::Neg(f, _), Rule::Neg) => {
                let s = split_item(d.premises.remove(0), &news[0][0], pre(f, r1), pre(f, r2))?;
                self.both(Rule::Neg, Inst::default(), s, g1, g2)
            }
            (_, Rule::ConjPos | Rule::WithPos) => {
                let (nl, nr) = if rule == Rule::ConjPos {
                    (Rule::ConjNegL, Rule::ConjNegR)
                } else {
                    (Rule::WithNegL, Rule::WithNegR)
                };
                let right = d.premises.remove(1);
                let left = d.premises.remove(0);
                let s0 = split_item(left, &news[0][0], rp, rn)?;
                let s1 = split_item(right, &news[1][0], rp, rn)?;
                let n0 = Derivation::unary(nl, gn.clone(), s0)?;
                let n1 = Derivation::unary(nr, gn, s1)?;
                Derivation::binary(rule, gp, n0, n1)
            }
            (_, Rule::ConjNegL | Rule::ConjNegR | Rule::WithNegL | Rule::WithNegR | Rule::BangDerelict) => {
                let s = split_item(d.premises.remove(0), &news[0][0], r1, r2)?;
                self.both(rule, Inst::default(), s, g1, g2)
            }
            (_, Rule::TensorPos) => {
                let right = d.premises.remove(1);
                let left = d.premises.remove(0);
                let s0 = split_item(left, &news[0][0], rp, rn)?;
                let s1 = split_item(right, &news[1][0], rp, rn)?;
                let t = Derivation::binary(Rule::TensorPos, gp, s0, s1)?;
                Derivation::unary(Rule::TensorNeg, gn, t)
            }
            (_, Rule::TensorNeg) => {
                let s = split_item(d.premises.remove(0), &news[0][0], r1, r2)?;
                let s = split_item(s, &news[0][1], r1, r2)?;
                self.both(Rule::TensorNeg, Inst::default(), s, g1, g2)
            }
            (Formula::Impl(f, ..), Rule::ImplPos) => {
                let right = d.premises.remove(1);
                let left = d.premises.remove(0);
                let s0 = split_item(left, &news[0][0], pre(f, rp), pre(f, rn))?;
                let s1 = split_item(right, &news[1][0], rp, rn)?;
                let t = Derivation::binary(Rule::ImplPos, gp, s0, s1)?;
                Derivation::unary(Rule::ImplNeg, gn, t)
            }
            (Formula::Impl(f, ..), Rule::ImplNeg) => {
                let s = split_item(d.premises.remove(0), &news[0][0], pre(f, r1), pre(f, r2))?;
                let s = split_item(s, &news[0][1], r1, r2)?;
                self.both(Rule::ImplNeg, Inst::default(), s, g1, g2)
            }
            (_, Rule::BangPos) => {
                let s = split_item(d.premises.remove(0), &news[0][0], rp, rn)?;
                let s = Derivation::unary(Rule::BangDerelict, gn, s)?;
                Derivation::unary(Rule::BangPos, gp, s)
            }
            (_, Rule::ForallPos) => {
                let y = d.inst.eigen.clone().unwrap_or_default();
                let s = split_item(d.premises.remove(0), &news[0][0], rp, rn)?;
                let s = Derivation::forall_neg(gn, Term::Var(y.clone()), s)?;
                Derivation::forall_pos(gp, &y, s)
            }
            (_, Rule::ForallNeg) => {
                let t = d.inst.witness.clone().unwrap_or_else(|| Term::var("x"));
                let s = split_item(d.premises.remove(0), &news[0][0], r1, r2)?;
                self.both(Rule::ForallNeg, Inst { witness: Some(t), ..Inst::default() }, s, g1, g2)
            }
            _ => Err(KernelError::Assemble { rule, msg: format!("cannot split major i-formula {p}") }),
        }
    }

    /// Applies `rule` twice, to `g1` and `g2`, in whichever order keeps the
    /// intermediate sequent intuitionistic.
    fn both(&self, rule: Rule, ex: Inst, s: Derivation, g1: IFormula, g2: IFormula) -> Result<Derivation, KernelError> {
        let first = Derivation::assemble(rule, g1.clone(), ex.clone(), vec![s.clone()])?;
        if self.intuitionistic_ok(&first.conclusion) {
            return Derivation::assemble(rule, g2, ex, vec![first]);
        }
        let first = Derivation::assemble(rule, g2, ex.clone(), vec![s])?;
        Derivation::assemble(rule, g1, ex, vec![first])
    }

        /// From `D :: G, <{}>A` (the i-formula at `index`) derives `G`.
    pub fn cut1(&self, d: &Derivation, index: usize) -> Result<Derivation, KernelError> {
        let f = self.index(d, index)?.clone();
        if !f.roles.is_empty() {
            return Err(KernelError::NonEmptyRoles(f.roles));
        }
        let out = self.cut1_k(d.clone(), &f, 1)?;
        self.check(&out)?;
        Ok(out)
    }

    pub(crate) fn cut1_k(&self, mut d: Derivation, f: &IFormula, k: usize) -> Result<Derivation, KernelError> {
        if k == 0 {
            return Ok(d);
        }
        if d.rule == Rule::Id {
            let items = remove_n(&d.conclusion, f, k).ok_or_else(|| missing(Rule::Id, f))?;
            return Ok(Derivation::id(items));
        }
        let p = d.principal().cloned().ok_or_else(|| missing(d.rule, f))?;
        if p.alpha_eq(f) {
            match d.rule {
                Rule::Weaken | Rule::BangWeaken => return self.cut1_k(d.premises.remove(0), f, k - 1),
                Rule::Contract | Rule::BangContract => return self.cut1_k(d.premises.remove(0), f, k + 1),
                _ => {}
            }
            // the empty role set is never in an ultrafilter, so only single-premise
            // negative rules can introduce <{}>A
            let news = new_items(d.rule, &p, &d.inst).map_err(|msg| KernelError::Assemble { rule: d.rule, msg })?;
            let mut cur = self.cut1_k(d.premises.remove(0), f, k - 1)?;
            for n in &news[0] {
                cur = self.cut1_k(cur, n, 1)?;
            }
            return Ok(cur);
        }
        let counts = distribute(&d, f, k);
        let ex = extras(&d);
        let rule = d.rule;
        let mut prems = Vec::new();
        for (prem, &c) in d.premises.into_iter().zip(&counts) {
            prems.push(self.cut1_k(prem, f, c)?);
        }
        Derivation::assemble(rule, p, ex, prems)
    }
}

pub(crate) fn uf(a: &Formula) -> Option<crate::roles::Ultrafilter> {
    match a {
        Formula::Conj(u, ..)
        | Formula::Impl(_, u, ..)
        | Formula::AConj(u, ..)
        | Formula::MConj(u, ..)
        | Formula::Bang(u, _)
        | Formula::Forall(u, ..) => Some(*u),
        _ => None,
    }
}

fn missing(rule: Rule, f: &IFormula) -> KernelError {
    KernelError::Assemble { rule, msg: format!("tracked i-formula {f} not found") }
}

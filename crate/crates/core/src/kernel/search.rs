//! Bounded proof search by iterative deepening.

use std::collections::{BTreeSet, HashMap};

use super::build::is_why_not;
use super::{Derivation, Kernel, Rule};
use crate::logic::{fresh_name, multiset_key, Formula, IFormula, Term};
use crate::roles::RoleSet;

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found(Derivation),
    NotFound,
}

impl SearchOutcome {
    pub fn found(self) -> Option<Derivation> {
        match self {
            SearchOutcome::Found(d) => Some(d),
            SearchOutcome::NotFound => None,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, SearchOutcome::Found(_))
    }
}

struct Searcher<'a> {
    kernel: &'a Kernel,
    /// Largest depth at which a sequent is known to fail.
    failed: HashMap<Vec<IFormula>, usize>,
}

fn without(items: &[IFormula], i: usize) -> Vec<IFormula> {
    let mut out = items.to_vec();
    out.remove(i);
    out
}

fn with(mut ctx: Vec<IFormula>, extra: &[IFormula]) -> Vec<IFormula> {
    ctx.extend(extra.iter().cloned());
    ctx
}

/// Every way to divide `ctx` between two premises.
fn splits(ctx: &[IFormula]) -> impl Iterator<Item = (Vec<IFormula>, Vec<IFormula>)> + '_ {
    (0u64..1 << ctx.len()).map(move |mask| {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for (k, i) in ctx.iter().enumerate() {
            if mask >> k & 1 == 1 {
                l.push(i.clone());
            } else {
                r.push(i.clone());
            }
        }
        (l, r)
    })
}

impl Searcher<'_> {
    fn ok_sequent(&self, items: &[IFormula]) -> bool {
        self.kernel.intuitionistic_ok(items)
    }

    fn prove(&mut self, items: &[IFormula], depth: usize) -> Option<Derivation> {
        if depth == 0 || !self.ok_sequent(items) {
            return None;
        }
        let key = multiset_key(items);
        if self.failed.get(&key).is_some_and(|&d| d >= depth) {
            return None;
        }
        let found = self.axiom(items).or_else(|| self.rules(items, depth));
        if found.is_none() {
            self.failed.insert(key, depth);
        }
        found
    }

    fn axiom(&self, items: &[IFormula]) -> Option<Derivation> {
        let u = &self.kernel.universe;
        let roles: Vec<RoleSet> = items.iter().map(|i| i.roles).collect();
        let first = items.first()?;
        if first.formula.is_atom() && items.iter().all(|i| i.formula == first.formula) && u.partition_check(&roles) {
            return Some(Derivation::id(items.to_vec()));
        }
        if !self.kernel.calc.has_weakening() || items.len() > 16 {
            return None;
        }
        for mask in 1u32..1 << items.len() {
            let (mut chosen, mut rest) = (Vec::new(), Vec::new());
            for (k, i) in items.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    chosen.push(i.clone());
                } else {
                    rest.push(i.clone());
                }
            }
            let a = &chosen[0].formula;
            let rs: Vec<RoleSet> = chosen.iter().map(|i| i.roles).collect();
            if a.is_atom() && chosen.iter().all(|i| &i.formula == a) && u.partition_check(&rs) {
                let d = Derivation::id(chosen);
                return self.kernel.weaken_with(d, &rest).ok();
            }
        }
        None
    }

    fn rules(&mut self, items: &[IFormula], depth: usize) -> Option<Derivation> {
        let calc = self.kernel.calc;
        let below = depth - 1;
        for (i, p) in items.iter().enumerate() {
            let ctx = without(items, i);
            let r = p.roles;
            let at = |roles, f: &Formula| IFormula::new(roles, f.clone());
            let found = match &p.formula {
                Formula::Atom(..) => None,
                Formula::Neg(f, a) => self
                    .prove(&with(ctx.clone(), &[at(f.preimage(r), a)]), below)
                    .and_then(|d| Derivation::unary(Rule::Neg, p.clone(), d).ok()),
                Formula::Conj(u, a, b) | Formula::AConj(u, a, b) => {
                    let conj = matches!(p.formula, Formula::Conj(..));
                    if u.contains(r) {
                        let rule = if conj { Rule::ConjPos } else { Rule::WithPos };
                        self.prove(&with(ctx.clone(), &[at(r, a)]), below).and_then(|d0| {
                            let d1 = self.prove(&with(ctx.clone(), &[at(r, b)]), below)?;
                            Derivation::binary(rule, p.clone(), d0, d1).ok()
                        })
                    } else {
                        let (l, rr) = if conj { (Rule::ConjNegL, Rule::ConjNegR) } else { (Rule::WithNegL, Rule::WithNegR) };
                        self.prove(&with(ctx.clone(), &[at(r, a)]), below)
                            .and_then(|d| Derivation::unary(l, p.clone(), d).ok())
                            .or_else(|| {
                                self.prove(&with(ctx.clone(), &[at(r, b)]), below)
                                    .and_then(|d| Derivation::unary(rr, p.clone(), d).ok())
                            })
                    }
                }
                Formula::MConj(u, a, b) => {
                    if u.contains(r) {
                        self.split_rule(Rule::TensorPos, p, &ctx, at(r, a), at(r, b), below)
                    } else {
                        self.prove(&with(ctx.clone(), &[at(r, a), at(r, b)]), below)
                            .and_then(|d| Derivation::unary(Rule::TensorNeg, p.clone(), d).ok())
                    }
                }
                Formula::Impl(f, u, a, b) => {
                    if u.contains(r) {
                        self.split_rule(Rule::ImplPos, p, &ctx, at(f.preimage(r), a), at(r, b), below)
                    } else {
                        self.prove(&with(ctx.clone(), &[at(f.preimage(r), a), at(r, b)]), below)
                            .and_then(|d| Derivation::unary(Rule::ImplNeg, p.clone(), d).ok())
                    }
                }
                Formula::Bang(u, a) => {
                    if u.contains(r) {
                        if ctx.iter().all(is_why_not) {
                            self.prove(&with(ctx.clone(), &[at(r, a)]), below)
                                .and_then(|d| Derivation::unary(Rule::BangPos, p.clone(), d).ok())
                        } else {
                            None
                        }
                    } else {
                        self.prove(&ctx, below)
                            .and_then(|d| Derivation::unary(Rule::BangWeaken, p.clone(), d).ok())
                            .or_else(|| {
                                self.prove(&with(ctx.clone(), &[at(r, a)]), below)
                                    .and_then(|d| Derivation::unary(Rule::BangDerelict, p.clone(), d).ok())
                            })
                            .or_else(|| {
                                self.prove(&with(ctx.clone(), &[p.clone(), p.clone()]), below)
                                    .and_then(|d| Derivation::unary(Rule::BangContract, p.clone(), d).ok())
                            })
                    }
                }
                Formula::Forall(u, x, a) => {
                    if u.contains(r) {
                        let mut avoid = BTreeSet::new();
                        for c in items {
                            avoid.extend(c.formula.free_vars());
                        }
                        let y = if avoid.contains(x) { fresh_name(x, &avoid) } else { x.clone() };
                        let prem = IFormula::new(r, a.substitute(x, &Term::Var(y.clone())));
                        self.prove(&with(ctx.clone(), &[prem]), below)
                            .and_then(|d| Derivation::forall_pos(p.clone(), &y, d).ok())
                    } else {
                        let mut terms = BTreeSet::new();
                        for c in items {
                            c.formula.free_terms(&mut terms);
                        }
                        if terms.is_empty() {
                            terms.insert(Term::Var(x.clone()));
                        }
                        terms.into_iter().find_map(|t| {
                            let prem = IFormula::new(r, a.substitute(x, &t));
                            self.prove(&with(ctx.clone(), &[prem]), below)
                                .and_then(|d| Derivation::forall_neg(p.clone(), t, d).ok())
                        })
                    }
                }
            };
            if found.is_some() {
                return found;
            }
        }
        if calc.has_weakening() {
            for (i, p) in items.iter().enumerate() {
                if p.formula.is_atom() {
                    continue;
                }
                let prem = with(without(items, i), &[p.clone(), p.clone()]);
                if let Some(d) = self.prove(&prem, below) {
                    return Derivation::unary(Rule::Contract, p.clone(), d).ok();
                }
            }
        }
        None
    }

    fn split_rule(
        &mut self,
        rule: Rule,
        p: &IFormula,
        ctx: &[IFormula],
        left_new: IFormula,
        right_new: IFormula,
        below: usize,
    ) -> Option<Derivation> {
        if ctx.len() > 12 {
            return None;
        }
        for (l, r) in splits(ctx) {
            if let Some(d0) = self.prove(&with(l, std::slice::from_ref(&left_new)), below) {
                if let Some(d1) = self.prove(&with(r, std::slice::from_ref(&right_new)), below) {
                    return Derivation::binary(rule, p.clone(), d0, d1).ok();
                }
            }
        }
        None
    }
}

impl Kernel {
    /// Looks for a derivation of height at most `depth`, not counting the
    /// weakenings that sit directly on axioms.
    pub fn search(&self, items: &[IFormula], depth: usize) -> SearchOutcome {
        let admissible = items.iter().all(|i| self.calc.allows_formula(&i.formula) && self.universe.contains(i.roles));
        if !admissible || !self.intuitionistic_ok(items) {
            return SearchOutcome::NotFound;
        }
        let mut s = Searcher { kernel: self, failed: HashMap::new() };
        for d in 1..=depth {
            if let Some(found) = s.prove(items, d) {
                if self.check(&found).is_ok() {
                    return SearchOutcome::Found(found);
                }
            }
        }
        SearchOutcome::NotFound
    }

    /// A derivation of `|- <~R>A, <R>B`, witnessing that `A` entails `B` at `R`.
    pub fn entailment(&self, a: &Formula, b: &Formula, r: RoleSet, depth: usize) -> SearchOutcome {
        let co = self.universe.complement(r);
        if a.alpha_eq(b) {
            if let Ok(d) = self.axiom_multi(a, &[co, r]) {
                return SearchOutcome::Found(d);
            }
        }
        self.search(&[IFormula::new(co, a.clone()), IFormula::new(r, b.clone())], depth)
    }
}

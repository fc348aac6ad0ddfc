//! Rule schemas shared by the checker and the derivation builders.

use super::{Derivation, Inst, KernelError, Rule};
use crate::logic::{multiset_eq, Formula, IFormula};
use crate::roles::Ultrafilter;

/// The i-formulas each premise adds to the context, given the major i-formula.
pub(crate) fn new_items(rule: Rule, p: &IFormula, inst: &Inst) -> Result<Vec<Vec<IFormula>>, String> {
    let r = p.roles;
    let at = |roles, f: &Formula| IFormula::new(roles, f.clone());
    let bad = || Err(format!("major i-formula {p} does not fit {rule}"));
    Ok(match (rule, &p.formula) {
        (Rule::Id, _) => return Err("id has no major i-formula".into()),
        (Rule::Weaken, _) => vec![vec![]],
        (Rule::Contract, _) => vec![vec![p.clone(), p.clone()]],
        (Rule::BangWeaken, Formula::Bang(..)) => vec![vec![]],
        (Rule::BangContract, Formula::Bang(..)) => vec![vec![p.clone(), p.clone()]],
        (Rule::Neg, Formula::Neg(f, a)) => vec![vec![at(f.preimage(r), a)]],
        (Rule::ConjPos, Formula::Conj(_, a, b)) | (Rule::WithPos, Formula::AConj(_, a, b)) => {
            vec![vec![at(r, a)], vec![at(r, b)]]
        }
        (Rule::ConjNegL, Formula::Conj(_, a, _)) | (Rule::WithNegL, Formula::AConj(_, a, _)) => vec![vec![at(r, a)]],
        (Rule::ConjNegR, Formula::Conj(_, _, b)) | (Rule::WithNegR, Formula::AConj(_, _, b)) => vec![vec![at(r, b)]],
        (Rule::ImplPos, Formula::Impl(f, _, a, b)) => vec![vec![at(f.preimage(r), a)], vec![at(r, b)]],
        (Rule::ImplNeg, Formula::Impl(f, _, a, b)) => vec![vec![at(f.preimage(r), a), at(r, b)]],
        (Rule::TensorPos, Formula::MConj(_, a, b)) => vec![vec![at(r, a)], vec![at(r, b)]],
        (Rule::TensorNeg, Formula::MConj(_, a, b)) => vec![vec![at(r, a), at(r, b)]],
        (Rule::BangPos | Rule::BangDerelict, Formula::Bang(_, a)) => vec![vec![at(r, a)]],
        (Rule::ForallNeg, Formula::Forall(_, x, a)) => match &inst.witness {
            Some(t) => vec![vec![IFormula::new(r, a.substitute(x, t))]],
            None => return Err("forall-neg needs a witness term".into()),
        },
        (Rule::ForallPos, Formula::Forall(_, x, a)) => match &inst.eigen {
            Some(y) => vec![vec![IFormula::new(r, a.substitute(x, &crate::logic::Term::Var(y.clone())))]],
            None => return Err("forall-pos needs an eigenvariable".into()),
        },
        _ => return bad(),
    })
}

fn ultrafilter_of(a: &Formula) -> Option<Ultrafilter> {
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

/// Membership side condition of the rule on its major i-formula.
pub(crate) fn side_condition(rule: Rule, p: &IFormula) -> Result<(), &'static str> {
    let positive = matches!(
        rule,
        Rule::ConjPos | Rule::WithPos | Rule::TensorPos | Rule::ImplPos | Rule::BangPos | Rule::ForallPos
    );
    let negative = matches!(
        rule,
        Rule::ConjNegL
            | Rule::ConjNegR
            | Rule::WithNegL
            | Rule::WithNegR
            | Rule::TensorNeg
            | Rule::ImplNeg
            | Rule::BangWeaken
            | Rule::BangDerelict
            | Rule::BangContract
            | Rule::ForallNeg
    );
    match ultrafilter_of(&p.formula) {
        Some(u) if positive && !u.contains(p.roles) => Err("R in U"),
        Some(u) if negative && u.contains(p.roles) => Err("R not in U"),
        _ => Ok(()),
    }
}

/// `<R>!_U A` with `R` outside `U`.
pub fn is_why_not(i: &IFormula) -> bool {
    matches!(&i.formula, Formula::Bang(u, _) if !u.contains(i.roles))
}

pub(crate) fn count_in(items: &[IFormula], f: &IFormula) -> usize {
    items.iter().filter(|i| i.alpha_eq(f)).count()
}

/// Removes one copy of each of `gone`, keeping the order of what remains.
pub(crate) fn remove_items(from: &[IFormula], gone: &[IFormula]) -> Option<Vec<IFormula>> {
    let mut out = from.to_vec();
    for g in gone {
        let pos = out.iter().rposition(|i| i.alpha_eq(g))?;
        out.remove(pos);
    }
    Some(out)
}

/// Tracked copies per premise when `k` of them sit in the context of `d`.
/// Identical copies are interchangeable, so a split rule fills its first
/// premise first.
pub(crate) fn distribute(d: &Derivation, f: &IFormula, k: usize) -> Vec<usize> {
    let ctxs = d.premise_contexts();
    if d.rule.splits_context() {
        let left = count_in(&ctxs[0], f).min(k);
        vec![left, k - left]
    } else {
        vec![k; ctxs.len()]
    }
}

pub(crate) fn remove_n(from: &[IFormula], f: &IFormula, n: usize) -> Option<Vec<IFormula>> {
    remove_items(from, &vec![f.clone(); n])
}

impl Derivation {
    pub fn id(items: Vec<IFormula>) -> Derivation {
        Derivation { rule: Rule::Id, conclusion: items, inst: Inst::default(), premises: Vec::new() }
    }

    /// Applies `rule` with major i-formula `p` to `premises`, computing the
    /// conclusion. Witness and eigenvariable come from `extra`.
    pub fn assemble(rule: Rule, p: IFormula, extra: Inst, premises: Vec<Derivation>) -> Result<Derivation, KernelError> {
        let fail = |msg: String| KernelError::Assemble { rule, msg };
        if premises.len() != rule.premise_count() {
            return Err(fail(format!("expected {} premises, got {}", rule.premise_count(), premises.len())));
        }
        let news = new_items(rule, &p, &extra).map_err(fail)?;
        let mut ctxs = Vec::new();
        for (prem, new) in premises.iter().zip(&news) {
            let ctx = remove_items(&prem.conclusion, new)
                .ok_or_else(|| fail(format!("premise {} lacks {:?}", crate::logic::Sequent::new(prem.conclusion.clone()), new)))?;
            ctxs.push(ctx);
        }
        let mut inst = Inst { principal: None, left: None, witness: extra.witness, eigen: extra.eigen };
        let mut conclusion;
        if rule.splits_context() {
            inst.left = Some((0..ctxs[0].len()).collect());
            conclusion = ctxs.concat();
        } else {
            conclusion = ctxs[0].clone();
            for c in &ctxs[1..] {
                if !multiset_eq(c, &conclusion) {
                    return Err(fail("premise contexts differ".into()));
                }
            }
        }
        conclusion.push(p);
        inst.principal = Some(conclusion.len() - 1);
        Ok(Derivation { rule, conclusion, inst, premises })
    }

    pub fn unary(rule: Rule, p: IFormula, prem: Derivation) -> Result<Derivation, KernelError> {
        Self::assemble(rule, p, Inst::default(), vec![prem])
    }

    pub fn binary(rule: Rule, p: IFormula, left: Derivation, right: Derivation) -> Result<Derivation, KernelError> {
        Self::assemble(rule, p, Inst::default(), vec![left, right])
    }

    pub fn forall_neg(p: IFormula, witness: crate::logic::Term, prem: Derivation) -> Result<Derivation, KernelError> {
        Self::assemble(Rule::ForallNeg, p, Inst { witness: Some(witness), ..Inst::default() }, vec![prem])
    }

    pub fn forall_pos(p: IFormula, eigen: &str, prem: Derivation) -> Result<Derivation, KernelError> {
        Self::assemble(Rule::ForallPos, p, Inst { eigen: Some(eigen.to_string()), ..Inst::default() }, vec![prem])
    }

    /// The conclusion with the major i-formula removed.
    pub fn context(&self) -> Vec<IFormula> {
        match self.inst.principal {
            Some(i) if i < self.conclusion.len() => {
                let mut c = self.conclusion.clone();
                c.remove(i);
                c
            }
            _ => self.conclusion.clone(),
        }
    }

    /// The part of the context inherited by each premise.
    pub fn premise_contexts(&self) -> Vec<Vec<IFormula>> {
        let ctx = self.context();
        if self.rule.splits_context() {
            let left = self.inst.left.clone().unwrap_or_default();
            let (mut l, mut r) = (Vec::new(), Vec::new());
            for (k, i) in ctx.into_iter().enumerate() {
                if left.contains(&k) {
                    l.push(i);
                } else {
                    r.push(i);
                }
            }
            vec![l, r]
        } else {
            vec![ctx; self.rule.premise_count()]
        }
    }
}

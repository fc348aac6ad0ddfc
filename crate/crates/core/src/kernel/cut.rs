//! 2-cut with residual and multiparty cut.
//!
//! The procedure works on two sides, each a derivation together with a
//! tracked i-formula and the number of its occurrences being cut. Counts
//! above one arise from contraction, counts of zero from weakening.

use std::collections::BTreeMap;

use serde::Serialize;

use super::build::{count_in, distribute, new_items, remove_n};
use super::transform::{subst_derivation, uf, Fresh};
use super::{Calculus, Derivation, Inst, Kernel, KernelError, Rule};
use crate::logic::{Formula, IFormula, Term};
use crate::roles::RoleSet;

/// How often each reduction case fired.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CutStats {
    pub hits: BTreeMap<String, usize>,
}

impl CutStats {
    fn hit(&mut self, case: &str) {
        *self.hits.entry(case.to_string()).or_default() += 1;
    }

    pub fn get(&self, case: &str) -> usize {
        self.hits.get(case).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &CutStats) {
        for (k, v) in &other.hits {
            *self.hits.entry(k.clone()).or_default() += v;
        }
    }
}

#[derive(Clone)]
struct Side {
    d: Derivation,
    f: IFormula,
    k: usize,
}

impl Side {
    fn new(d: Derivation, f: IFormula, k: usize) -> Side {
        Side { d, f, k }
    }

    fn is_major(&self) -> bool {
        if self.d.rule == Rule::Id {
            return self.k > 0 && count_in(&self.d.conclusion, &self.f) > 0;
        }
        self.d.principal().is_some_and(|p| p.alpha_eq(&self.f))
    }

    /// Everything except the tracked copies.
    fn rest(&self) -> Result<Vec<IFormula>, KernelError> {
        remove_n(&self.d.conclusion, &self.f, self.k).ok_or_else(|| KernelError::Assemble {
            rule: self.d.rule,
            msg: format!("{} copies of {} not present", self.k, self.f),
        })
    }

    fn premise(&self, i: usize, f: IFormula) -> Side {
        Side::new(self.d.premises[i].clone(), f, 1)
    }
}

struct Engine<'a> {
    kernel: &'a Kernel,
    stats: &'a mut CutStats,
    fresh: Fresh,
}

impl Engine<'_> {
    fn lmrl(&self) -> bool {
        self.kernel.calc == Calculus::Lmrl
    }

    /// Derivation of `rest(a), rest(b), <Ra & Rb>A`.
    fn cut(&mut self, a: Side, b: Side) -> Result<Derivation, KernelError> {
        let res = IFormula::new(a.f.roles.intersect(b.f.roles), a.f.formula.clone());
        if let Some(a2) = self.structural(&a) {
            return self.cut(a2, b);
        }
        if let Some(b2) = self.structural(&b) {
            return self.cut(a, b2);
        }
        if a.k == 0 {
            return self.zero(a, b, res, true);
        }
        if b.k == 0 {
            return self.zero(b, a, res, false);
        }
        if let (Formula::Bang(u, _), true) = (&a.f.formula, self.lmrl()) {
            // the side in U must be major before the ?-side is touched,
            // so that everything duplicated alongside it is a ?-formula
            if u.contains(a.f.roles) && !a.is_major() {
                return self.commute(a, b, res, true);
            }
            if u.contains(b.f.roles) && !b.is_major() {
                return self.commute(a, b, res, false);
            }
        }
        if !a.is_major() {
            return self.commute(a, b, res, true);
        }
        if !b.is_major() {
            return self.commute(a, b, res, false);
        }
        if a.k >= 2 {
            return self.step_a(a, b, res, true);
        }
        if b.k >= 2 {
            return self.step_a(a, b, res, false);
        }
        self.key(a, b, res)
    }

    /// Weakening or contraction of a tracked copy changes only the count.
    fn structural(&mut self, s: &Side) -> Option<Side> {
        if s.k == 0 || !s.d.rule.is_structural() || !s.is_major() {
            return None;
        }
        let (case, k) = match s.d.rule {
            Rule::Weaken => ("weaken", s.k - 1),
            Rule::BangWeaken => ("bang_weaken", s.k - 1),
            Rule::Contract => ("contract", s.k + 1),
            _ => ("bang_contract", s.k + 1),
        };
        self.stats.hit(case);
        Some(Side::new(s.d.premises[0].clone(), s.f.clone(), k))
    }

    /// One side has no tracked copies left.
    fn zero(&mut self, z: Side, o: Side, res: IFormula, z_left: bool) -> Result<Derivation, KernelError> {
        if !self.lmrl() || (o.d.rule == Rule::BangPos && o.is_major()) || o.k == 0 {
            let mut extra = o.rest()?;
            extra.push(res);
            return self.kernel.weaken_with(z.d, &extra);
        }
        let (a, b) = if z_left { (z, o) } else { (o, z) };
        self.commute(a, b, res, !z_left)
    }

    fn orient(&mut self, x: Side, y: &Side, x_left: bool) -> Result<Derivation, KernelError> {
        if x_left {
            self.cut(x, y.clone())
        } else {
            self.cut(y.clone(), x)
        }
    }

    /// Cuts the tracked copies inside the premises of `x`, reapplies its last
    /// rule and contracts what a context split duplicated.
    fn push(&mut self, x: Side, y: &Side, res: &IFormula, counts: &[usize], x_left: bool) -> Result<Derivation, KernelError> {
        let p = x.d.principal().cloned().ok_or_else(|| KernelError::Assemble {
            rule: x.d.rule,
            msg: "rule without major i-formula cannot be permuted".into(),
        })?;
        let y_rest = y.rest()?;
        let mut ex = Inst { witness: x.d.inst.witness.clone(), eigen: x.d.inst.eigen.clone(), ..Inst::default() };
        let mut premises = x.d.premises.clone();
        if let (Rule::ForallPos, Some(e)) = (x.d.rule, &x.d.inst.eigen) {
            if y_rest.iter().any(|i| i.formula.has_free(e)) {
                let z = self.fresh.name();
                premises = premises.iter().map(|q| subst_derivation(q, e, &Term::Var(z.clone()), &mut self.fresh)).collect();
                ex.eigen = Some(z);
            }
        }
        let mut out = Vec::new();
        for (prem, &c) in premises.into_iter().zip(counts) {
            out.push(if c > 0 { self.orient(Side::new(prem, x.f.clone(), c), y, x_left)? } else { prem });
        }
        let dup = x.d.rule.splits_context() && counts.iter().filter(|&&c| c > 0).count() > 1;
        let d = Derivation::assemble(x.d.rule, p, ex, out)?;
        if dup {
            let mut extra = y_rest;
            extra.push(res.clone());
            self.kernel.contract_with(d, &extra)
        } else {
            Ok(d)
        }
    }

    fn commute(&mut self, a: Side, b: Side, res: IFormula, into_left: bool) -> Result<Derivation, KernelError> {
        self.stats.hit("commutative");
        let (x, y) = if into_left { (a, b) } else { (b, a) };
        let counts = distribute(&x.d, &x.f, x.k);
        self.push(x, &y, &res, &counts, into_left)
    }

    /// A major side with further tracked copies: cut those first, then the
    /// major copy, then contract the duplicated remainder of the other side.
    fn step_a(&mut self, a: Side, b: Side, res: IFormula, on_left: bool) -> Result<Derivation, KernelError> {
        let (x, y) = if on_left { (a, b) } else { (b, a) };
        let counts = distribute(&x.d, &x.f, x.k - 1);
        let f = x.f.clone();
        let pushed = self.push(x, &y, &res, &counts, on_left)?;
        let single = Side::new(pushed, f, 1);
        let d = self.orient(single, &y, on_left)?;
        let mut extra = y.rest()?;
        extra.push(res);
        self.kernel.contract_with(d, &extra)
    }

    fn news(s: &Side) -> Result<Vec<Vec<IFormula>>, KernelError> {
        let p = s.d.principal().cloned().unwrap_or_else(|| s.f.clone());
        new_items(s.d.rule, &p, &s.d.inst).map_err(|msg| KernelError::Assemble { rule: s.d.rule, msg })
    }

    /// Both tracked copies are single and major.
    fn key(&mut self, a: Side, b: Side, res: IFormula) -> Result<Derivation, KernelError> {
        let (r1, r2) = (a.f.roles, b.f.roles);
        if a.d.rule == Rule::Id && b.d.rule == Rule::Id {
            self.stats.hit("primitive");
            let mut items = a.rest()?;
            items.extend(b.rest()?);
            items.push(res);
            return Ok(Derivation::id(items));
        }
        let na = Self::news(&a)?;
        let nb = Self::news(&b)?;
        let membership = uf(&a.f.formula).map(|u| (u.contains(r1), u.contains(r2)));
        let tag = |base: &str, m: Option<(bool, bool)>| match m {
            Some((true, false)) => format!("{base}_pos_neg"),
            Some((false, true)) => format!("{base}_neg_pos"),
            _ => format!("{base}_pos_pos"),
        };
        match &a.f.formula {
            Formula::Neg(..) => {
                self.stats.hit("neg");
                let d = self.cut(a.premise(0, na[0][0].clone()), b.premise(0, nb[0][0].clone()))?;
                Derivation::unary(Rule::Neg, res, d)
            }
            Formula::Conj(..) | Formula::AConj(..) => {
                let base = if matches!(a.f.formula, Formula::Conj(..)) { "and" } else { "with" };
                self.stats.hit(&tag(base, membership));
                match membership {
                    Some((true, false)) => {
                        let i = side_index(b.d.rule);
                        let d = self.cut(a.premise(i, na[i][0].clone()), b.premise(0, nb[0][0].clone()))?;
                        Derivation::unary(b.d.rule, res, d)
                    }
                    Some((false, true)) => {
                        let i = side_index(a.d.rule);
                        let d = self.cut(a.premise(0, na[0][0].clone()), b.premise(i, nb[i][0].clone()))?;
                        Derivation::unary(a.d.rule, res, d)
                    }
                    _ => {
                        let d0 = self.cut(a.premise(0, na[0][0].clone()), b.premise(0, nb[0][0].clone()))?;
                        let d1 = self.cut(a.premise(1, na[1][0].clone()), b.premise(1, nb[1][0].clone()))?;
                        Derivation::binary(a.d.rule, res, d0, d1)
                    }
                }
            }
            Formula::MConj(..) | Formula::Impl(..) => {
                let base = if matches!(a.f.formula, Formula::MConj(..)) { "tensor" } else { "imp" };
                let neg_rule = if base == "tensor" { Rule::TensorNeg } else { Rule::ImplNeg };
                self.stats.hit(&tag(base, membership));
                match membership {
                    Some((true, false)) => {
                        let x = self.cut(a.premise(0, na[0][0].clone()), b.premise(0, nb[0][0].clone()))?;
                        let y = self.cut(a.premise(1, na[1][0].clone()), Side::new(x, nb[0][1].clone(), 1))?;
                        Derivation::unary(neg_rule, res, y)
                    }
                    Some((false, true)) => {
                        let x = self.cut(a.premise(0, na[0][0].clone()), b.premise(0, nb[0][0].clone()))?;
                        let y = self.cut(Side::new(x, na[0][1].clone(), 1), b.premise(1, nb[1][0].clone()))?;
                        Derivation::unary(neg_rule, res, y)
                    }
                    _ => {
                        let d0 = self.cut(a.premise(0, na[0][0].clone()), b.premise(0, nb[0][0].clone()))?;
                        let d1 = self.cut(a.premise(1, na[1][0].clone()), b.premise(1, nb[1][0].clone()))?;
                        Derivation::binary(a.d.rule, res, d0, d1)
                    }
                }
            }
            Formula::Bang(..) => {
                match membership {
                    Some((true, true)) => self.stats.hit("bang_pos_pos"),
                    _ => self.stats.hit("bang_derelict"),
                }
                let d = self.cut(a.premise(0, na[0][0].clone()), b.premise(0, nb[0][0].clone()))?;
                let rule = match membership {
                    Some((true, true)) => Rule::BangPos,
                    _ => Rule::BangDerelict,
                };
                Derivation::unary(rule, res, d)
            }
            Formula::Forall(..) => {
                self.stats.hit(&tag("forall", membership));
                match membership {
                    Some((true, false)) => self.forall_mixed(a, b, res, true),
                    Some((false, true)) => self.forall_mixed(a, b, res, false),
                    _ => {
                        let z = self.fresh.name();
                        let zt = Term::Var(z.clone());
                        let pa = self.instantiate(&a, &zt);
                        let pb = self.instantiate(&b, &zt);
                        let d = self.cut(pa, pb)?;
                        Derivation::forall_pos(res, &z, d)
                    }
                }
            }
            Formula::Atom(..) => Err(KernelError::Assemble { rule: a.d.rule, msg: "atom major outside id".into() }),
        }
    }

    /// The premise of a `forall-pos` side with its eigenvariable replaced by `t`.
    fn instantiate(&mut self, s: &Side, t: &Term) -> Side {
        let y = s.d.inst.eigen.clone().unwrap_or_default();
        let prem = subst_derivation(&s.d.premises[0], &y, t, &mut self.fresh);
        let Formula::Forall(_, x, body) = &s.f.formula else { unreachable!("forall side") };
        Side::new(prem, IFormula::new(s.f.roles, body.substitute(x, t)), 1)
    }

    fn forall_mixed(&mut self, a: Side, b: Side, res: IFormula, pos_left: bool) -> Result<Derivation, KernelError> {
        let (pos, neg) = if pos_left { (&a, &b) } else { (&b, &a) };
        let t = neg.d.inst.witness.clone().ok_or_else(|| KernelError::Assemble {
            rule: Rule::ForallNeg,
            msg: "missing witness".into(),
        })?;
        let p = self.instantiate(pos, &t);
        let nn = Self::news(neg)?;
        let n = neg.premise(0, nn[0][0].clone());
        let d = if pos_left { self.cut(p, n)? } else { self.cut(n, p)? };
        Derivation::forall_neg(res, t, d)
    }
}

fn side_index(rule: Rule) -> usize {
    match rule {
        Rule::ConjNegR | Rule::WithNegR => 1,
        _ => 0,
    }
}

impl Kernel {
    fn cut_inputs(&self, d1: &Derivation, i1: usize, d2: &Derivation, i2: usize) -> Result<(IFormula, IFormula), KernelError> {
        let f1 = self.index(d1, i1)?.clone();
        let f2 = self.index(d2, i2)?.clone();
        if !f1.formula.alpha_eq(&f2.formula) {
            return Err(KernelError::FormulaMismatch(f1.formula, f2.formula));
        }
        if !self.calc.allows_formula(&f1.formula) {
            return Err(KernelError::WrongCalculus(f1.formula, self.calc.name()));
        }
        self.require_intuitionistic(&d1.conclusion)?;
        self.require_intuitionistic(&d2.conclusion)?;
        Ok((f1, f2))
    }

    /// From `D1 :: G1, <R1>A` and `D2 :: G2, <R2>A` with disjoint complements,
    /// derives `G1, G2, <R1 & R2>A`. The residual is the last item.
    pub fn cut2_residual(&self, d1: &Derivation, i1: usize, d2: &Derivation, i2: usize) -> Result<Derivation, KernelError> {
        self.cut2_residual_stats(d1, i1, d2, i2, &mut CutStats::default())
    }

    pub fn cut2_residual_stats(
        &self,
        d1: &Derivation,
        i1: usize,
        d2: &Derivation,
        i2: usize,
        stats: &mut CutStats,
    ) -> Result<Derivation, KernelError> {
        let (f1, f2) = self.cut_inputs(d1, i1, d2, i2)?;
        let u = &self.universe;
        if !u.complement(f1.roles).is_disjoint(u.complement(f2.roles)) {
            return Err(KernelError::ComplementsOverlap(f1.roles, f2.roles));
        }
        let mut engine = Engine { kernel: self, stats, fresh: Fresh::avoiding(&[d1, d2]) };
        let out = engine.cut(Side::new(d1.clone(), f1, 1), Side::new(d2.clone(), f2, 1))?;
        self.check(&out)?;
        Ok(out)
    }

    /// Multiparty cut on the designated occurrences; the complements of their
    /// role sets must partition the universe.
    pub fn mp_cut(&self, premises: &[(Derivation, usize)]) -> Result<Derivation, KernelError> {
        self.mp_cut_stats(premises, &mut CutStats::default())
    }

    pub fn mp_cut_stats(&self, premises: &[(Derivation, usize)], stats: &mut CutStats) -> Result<Derivation, KernelError> {
        let mut items = Vec::new();
        for (d, i) in premises {
            items.push(self.index(d, *i)?.clone());
            self.require_intuitionistic(&d.conclusion)?;
        }
        let complements: Vec<RoleSet> = items.iter().map(|f| self.universe.complement(f.roles)).collect();
        if items.is_empty() || !self.universe.partition_check(&complements) {
            return Err(KernelError::NotComplementPartition);
        }
        for f in &items[1..] {
            if !f.formula.alpha_eq(&items[0].formula) {
                return Err(KernelError::FormulaMismatch(items[0].formula.clone(), f.formula.clone()));
            }
        }
        if !self.calc.allows_formula(&items[0].formula) {
            return Err(KernelError::WrongCalculus(items[0].formula.clone(), self.calc.name()));
        }
        let refs: Vec<&Derivation> = premises.iter().map(|(d, _)| d).collect();
        let mut engine = Engine { kernel: self, stats, fresh: Fresh::avoiding(&refs) };
        let mut acc = premises[0].0.clone();
        let mut acc_f = items[0].clone();
        for ((d, _), f) in premises.iter().zip(&items).skip(1) {
            let res = IFormula::new(acc_f.roles.intersect(f.roles), acc_f.formula.clone());
            acc = engine.cut(Side::new(acc, acc_f, 1), Side::new(d.clone(), f.clone(), 1))?;
            acc_f = res;
        }
        let out = self.cut1_k(acc, &acc_f, 1)?;
        self.check(&out)?;
        Ok(out)
    }
}

//! Seeded generators of formulas and derivations shared by the test targets.
#![allow(dead_code)]

pub mod mtlc;
pub mod protocols;

use multirole::kernel::{Calculus, Derivation, Kernel, KernelError, Rule};
use multirole::logic::{Formula, IFormula, Term};
use multirole::roles::{Endo, RoleSet, Ultrafilter, Universe};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Top connective requested from [`Gen::formula_top`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Top {
    Atom,
    Neg,
    Conj,
    Impl,
    With,
    Tensor,
    Bang,
    Forall,
}

pub const LMRL_TOPS: [Top; 6] = [Top::Atom, Top::Neg, Top::With, Top::Tensor, Top::Bang, Top::Forall];
pub const MRL_TOPS: [Top; 4] = [Top::Atom, Top::Neg, Top::Conj, Top::Forall];

pub struct Gen {
    pub rng: ChaCha8Rng,
    pub kernel: Kernel,
}

impl Gen {
    pub fn new(n: usize, calc: Calculus, seed: u64) -> Gen {
        Gen { rng: ChaCha8Rng::seed_from_u64(seed), kernel: Kernel::new(Universe::new(n).unwrap(), calc) }
    }

    pub fn n(&self) -> usize {
        self.kernel.universe.size()
    }

    pub fn full(&self) -> RoleSet {
        self.kernel.universe.full()
    }

    pub fn co(&self, r: RoleSet) -> RoleSet {
        self.kernel.universe.complement(r)
    }

    pub fn uf(&mut self) -> Ultrafilter {
        Ultrafilter(self.rng.gen_range(0..self.n()))
    }

    pub fn endo(&mut self) -> Endo {
        let n = self.n();
        Endo::new((0..n).map(|_| self.rng.gen_range(0..n)).collect()).unwrap()
    }

    pub fn perm(&mut self) -> Endo {
        let mut map: Vec<usize> = (0..self.n()).collect();
        map.shuffle(&mut self.rng);
        Endo::new(map).unwrap()
    }

    pub fn roleset(&mut self) -> RoleSet {
        RoleSet(self.rng.gen_range(0..=self.full().0))
    }

    pub fn subset_of(&mut self, r: RoleSet) -> RoleSet {
        RoleSet(self.rng.gen_range(0..=self.full().0) & r.0)
    }

    /// Splits `r` into `k` disjoint, possibly empty parts.
    pub fn parts(&mut self, r: RoleSet, k: usize) -> Vec<RoleSet> {
        let mut out = vec![RoleSet::default(); k];
        for role in r.iter() {
            let j = self.rng.gen_range(0..k);
            out[j] = out[j].union(RoleSet::singleton(role));
        }
        out
    }

    fn tops(&self) -> Vec<Top> {
        match self.kernel.calc {
            Calculus::Mrl => MRL_TOPS.to_vec(),
            Calculus::Mrlj(_) => vec![Top::Atom, Top::Neg, Top::Conj, Top::Impl, Top::Forall],
            Calculus::Lmrl => LMRL_TOPS.to_vec(),
        }
    }

    fn leaf(&mut self, bound: &[String]) -> Formula {
        match self.rng.gen_range(0..4) {
            0 => Formula::atom("a"),
            1 => Formula::atom("b"),
            2 if !bound.is_empty() => {
                let x = bound.choose(&mut self.rng).unwrap().clone();
                Formula::pred("p", vec![Term::Var(x)])
            }
            _ => Formula::pred("p", vec![Term::constant("C")]),
        }
    }

    /// A formula with at most `size` connectives.
    pub fn formula(&mut self, size: usize) -> Formula {
        let size = self.rng.gen_range(0..=size);
        self.build(size, &mut Vec::new())
    }

    /// A formula with the given top connective and at most `size` connectives in total.
    pub fn formula_top(&mut self, top: Top, size: usize) -> Formula {
        let size = size.max(1);
        self.node(top, size, &mut Vec::new())
    }

    fn build(&mut self, size: usize, bound: &mut Vec<String>) -> Formula {
        if size == 0 {
            return self.leaf(bound);
        }
        let tops = self.tops();
        let top = *tops[1..].choose(&mut self.rng).unwrap();
        self.node(top, size, bound)
    }

    fn node(&mut self, top: Top, size: usize, bound: &mut Vec<String>) -> Formula {
        let rest = size - 1;
        let split = self.rng.gen_range(0..=rest);
        match top {
            Top::Atom => self.leaf(bound),
            Top::Neg => {
                let f = self.endo();
                Formula::neg(f, self.build(rest, bound))
            }
            Top::Bang => {
                let u = self.uf();
                Formula::bang(u, self.build(rest, bound))
            }
            Top::Forall => {
                let u = self.uf();
                let x = if bound.iter().any(|b| b == "x") { "y" } else { "x" };
                bound.push(x.to_string());
                let body = self.build(rest, bound);
                bound.pop();
                Formula::forall(u, x, body)
            }
            Top::Conj | Top::Impl | Top::With | Top::Tensor => {
                let u = self.uf();
                let a = self.build(split, bound);
                let b = self.build(rest - split, bound);
                match top {
                    Top::Conj => Formula::conj(u, a, b),
                    Top::With => Formula::with(u, a, b),
                    Top::Tensor => Formula::tensor(u, a, b),
                    _ => {
                        let f = self.endo();
                        Formula::imp(f, u, a, b)
                    }
                }
            }
        }
    }

    /// A checked derivation whose conclusion contains `<r>a`, with its index.
    /// `None` only in MRLJ, where the axiom for `a` may be out of reach.
    pub fn derivation(&mut self, a: &Formula, r: RoleSet) -> Option<(Derivation, usize)> {
        let k = self.rng.gen_range(1..=2);
        let mut parts = vec![r];
        let co = self.co(r);
        parts.extend(self.parts(co, k));
        let mut d = match self.kernel.axiom_multi(a, &parts) {
            Ok(d) => d,
            Err(KernelError::NotIntuitionistic(_)) if matches!(self.kernel.calc, Calculus::Mrlj(_)) => return None,
            Err(e) => panic!("axiom_multi on a partition: {e}"),
        };
        let target = IFormula::new(r, a.clone());
        for _ in 0..self.rng.gen_range(0..=3) {
            if let Some(next) = self.decorate(&d, &target) {
                if self.kernel.check(&next).is_ok() {
                    d = next;
                }
            }
        }
        let idx = d.conclusion.iter().position(|i| i.alpha_eq(&target)).unwrap();
        Some((d, idx))
    }

    /// Adds one rule below `d`, either on the tracked i-formula or on another one.
    fn decorate(&mut self, d: &Derivation, target: &IFormula) -> Option<Derivation> {
        let lmrl = self.kernel.calc == Calculus::Lmrl;
        if self.rng.gen_bool(0.3) {
            // weaken in a copy of the tracked i-formula and contract it away again
            let (w, c) = if lmrl { (Rule::BangWeaken, Rule::BangContract) } else { (Rule::Weaken, Rule::Contract) };
            let w = Derivation::unary(w, target.clone(), d.clone()).ok()?;
            return Derivation::unary(c, target.clone(), w).ok();
        }
        let others: Vec<IFormula> = d.conclusion.iter().filter(|i| !i.alpha_eq(target)).cloned().collect();
        let other = others.choose(&mut self.rng)?.clone();
        let s = other.roles;
        let x = other.formula.clone();
        let u = self.uf();
        let c = self.formula(1);
        let choice = self.rng.gen_range(0..5);
        match (choice, lmrl) {
            (0, _) => Derivation::unary(Rule::Neg, IFormula::new(s, Formula::neg(Endo::new((0..self.n()).collect()).ok()?, x)), d.clone()).ok(),
            (1, _) if u.contains(s) => {
                let p = IFormula::new(s, Formula::forall(u, "v", x));
                Derivation::forall_pos(p, "v", d.clone()).ok()
            }
            (1, _) => {
                let p = IFormula::new(s, Formula::forall(u, "v", x));
                Derivation::forall_neg(p, Term::constant("C"), d.clone()).ok()
            }
            (2, true) if u.contains(s) => {
                let e = self.kernel.axiom_multi(&c, &[s, self.co(s)]).ok()?;
                Derivation::binary(Rule::TensorPos, IFormula::new(s, Formula::tensor(u, x, c)), d.clone(), e).ok()
            }
            (2, true) => Derivation::unary(Rule::WithNegL, IFormula::new(s, Formula::with(u, x, c)), d.clone()).ok(),
            (3, true) if !u.contains(s) => {
                Derivation::unary(Rule::BangDerelict, IFormula::new(s, Formula::bang(u, x)), d.clone()).ok()
            }
            (2, false) if !u.contains(s) => {
                Derivation::unary(Rule::ConjNegR, IFormula::new(s, Formula::conj(u, c, x)), d.clone()).ok()
            }
            (3, false) => {
                let t = IFormula::new(self.roleset(), c);
                Derivation::unary(Rule::Weaken, t, d.clone()).ok()
            }
            _ => None,
        }
    }

    /// Role sets `(r1, r2)` whose complements are disjoint. `mode` picks which
    /// of them lie in `u`: 0 first only, 1 second only, 2 both, anything else random.
    pub fn cut_roles(&mut self, u: Option<Ultrafilter>, mode: u8) -> (RoleSet, RoleSet) {
        for _ in 0..1000 {
            let r1 = self.roleset();
            let r2 = self.co(r1).union(self.subset_of(r1));
            let Some(u) = u else { return (r1, r2) };
            let ok = match mode {
                0 => u.contains(r1) && !u.contains(r2),
                1 => !u.contains(r1) && u.contains(r2),
                2 => u.contains(r1) && u.contains(r2),
                _ => true,
            };
            if ok {
                return (r1, r2);
            }
        }
        panic!("no role sets for mode {mode}")
    }
}

/// Ultrafilter of the top connective, if it has one.
pub fn top_uf(a: &Formula) -> Option<Ultrafilter> {
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

/// The conclusion of `d` without the item at `index`.
pub fn context(d: &Derivation, index: usize) -> Vec<IFormula> {
    let mut c = d.conclusion.clone();
    c.remove(index);
    c
}

/// No node of `d` uses a rule outside the calculus, so in particular there is no cut.
pub fn cut_free(d: &Derivation, calc: Calculus) -> bool {
    d.rules().iter().all(|r| calc.allows_rule(*r))
}

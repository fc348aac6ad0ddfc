//! Derivations for MRL, MRLJ and LMRL, a checker, and the admissibility
//! procedures: full-set axioms, role splitting, 1-cut, 2-cut with residual
//! and multiparty cut. Every procedure returns a cut-free derivation.

mod build;
mod check;
mod cut;
mod search;
mod transform;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::logic::{Formula, IFormula, Sequent, Term};
use crate::roles::{RoleError, Ultrafilter, Universe};

pub use check::{CheckError, CheckReason};
pub use cut::CutStats;
pub use search::SearchOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Calculus {
    Mrl,
    /// Intuitionistic variant over the fixed ultrafilter `J`.
    Mrlj(Ultrafilter),
    Lmrl,
}

impl Calculus {
    pub fn allows_rule(&self, rule: Rule) -> bool {
        use Rule::*;
        match self {
            Calculus::Mrl => matches!(
                rule,
                Id | Weaken | Contract | Neg | ConjPos | ConjNegL | ConjNegR | ForallPos | ForallNeg
            ),
            Calculus::Mrlj(_) => matches!(
                rule,
                Id | Weaken
                    | Contract
                    | Neg
                    | ConjPos
                    | ConjNegL
                    | ConjNegR
                    | ImplPos
                    | ImplNeg
                    | ForallPos
                    | ForallNeg
            ),
            Calculus::Lmrl => matches!(
                rule,
                Id | Neg
                    | WithPos
                    | WithNegL
                    | WithNegR
                    | TensorPos
                    | TensorNeg
                    | BangPos
                    | BangWeaken
                    | BangDerelict
                    | BangContract
                    | ForallPos
                    | ForallNeg
            ),
        }
    }

    /// Whether every constructor of `a` belongs to this calculus.
    pub fn allows_formula(&self, a: &Formula) -> bool {
        let here = matches!(
            (self, a),
            (_, Formula::Atom(..) | Formula::Neg(..) | Formula::Forall(..))
                | (Calculus::Mrl | Calculus::Mrlj(_), Formula::Conj(..))
                | (Calculus::Mrlj(_), Formula::Impl(..))
                | (Calculus::Lmrl, Formula::AConj(..) | Formula::MConj(..) | Formula::Bang(..))
        );
        here && match a {
            Formula::Atom(..) => true,
            Formula::Neg(_, b) | Formula::Bang(_, b) | Formula::Forall(_, _, b) => self.allows_formula(b),
            Formula::Conj(_, b, c) | Formula::Impl(_, _, b, c) | Formula::AConj(_, b, c) | Formula::MConj(_, b, c) => {
                self.allows_formula(b) && self.allows_formula(c)
            }
        }
    }

    pub fn has_weakening(&self) -> bool {
        !matches!(self, Calculus::Lmrl)
    }

    pub fn name(&self) -> String {
        match self {
            Calculus::Mrl => "MRL".into(),
            Calculus::Mrlj(j) => format!("MRLJ{j}"),
            Calculus::Lmrl => "LMRL".into(),
        }
    }
}

impl std::str::FromStr for Calculus {
    type Err = String;

    /// `mrl`, `lmrl`, or `mrlj@r`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let l = s.trim().to_ascii_lowercase();
        match l.as_str() {
            "mrl" => Ok(Calculus::Mrl),
            "lmrl" => Ok(Calculus::Lmrl),
            _ => match l.strip_prefix("mrlj") {
                Some(rest) => rest.parse::<Ultrafilter>().map(Calculus::Mrlj).map_err(|e| e.to_string()),
                None => Err(format!("unknown calculus {s:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "id")]
    Id,
    #[serde(rename = "weaken")]
    Weaken,
    #[serde(rename = "contract")]
    Contract,
    #[serde(rename = "neg")]
    Neg,
    #[serde(rename = "and-pos")]
    ConjPos,
    #[serde(rename = "and-neg-l")]
    ConjNegL,
    #[serde(rename = "and-neg-r")]
    ConjNegR,
    #[serde(rename = "imp-pos")]
    ImplPos,
    #[serde(rename = "imp-neg")]
    ImplNeg,
    #[serde(rename = "with-pos")]
    WithPos,
    #[serde(rename = "with-neg-l")]
    WithNegL,
    #[serde(rename = "with-neg-r")]
    WithNegR,
    #[serde(rename = "tensor-pos")]
    TensorPos,
    #[serde(rename = "tensor-neg")]
    TensorNeg,
    #[serde(rename = "bang-pos")]
    BangPos,
    #[serde(rename = "bang-weaken")]
    BangWeaken,
    #[serde(rename = "bang-derelict")]
    BangDerelict,
    #[serde(rename = "bang-contract")]
    BangContract,
    #[serde(rename = "forall-pos")]
    ForallPos,
    #[serde(rename = "forall-neg")]
    ForallNeg,
}

impl Rule {
    pub fn premise_count(&self) -> usize {
        match self {
            Rule::Id => 0,
            Rule::ConjPos | Rule::WithPos | Rule::TensorPos | Rule::ImplPos => 2,
            _ => 1,
        }
    }

    /// Rules whose two premises divide the context between them.
    pub fn splits_context(&self) -> bool {
        matches!(self, Rule::TensorPos | Rule::ImplPos)
    }

    pub fn is_structural(&self) -> bool {
        matches!(self, Rule::Weaken | Rule::Contract | Rule::BangWeaken | Rule::BangContract)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        f.write_str(&s)
    }
}

fn term_ser<S: Serializer>(t: &Option<Term>, s: S) -> Result<S::Ok, S::Error> {
    match t {
        Some(t) => s.serialize_str(t.name()),
        None => s.serialize_none(),
    }
}

fn term_de<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Term>, D::Error> {
    Ok(Option::<String>::deserialize(d)?.map(|s| Term::from_token(&s)))
}

/// Instantiation data that makes checking deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inst {
    /// Index of the major i-formula in the conclusion. Absent for `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal: Option<usize>,
    /// For context-splitting rules: positions, within the conclusion minus
    /// the major i-formula, that go to the first premise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "term_ser", deserialize_with = "term_de")]
    pub witness: Option<Term>,
    /// Eigenvariable `y` of `forall-pos`; the premise instantiates the bound variable with it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derivation {
    pub rule: Rule,
    pub conclusion: Vec<IFormula>,
    #[serde(default)]
    pub inst: Inst,
    #[serde(default)]
    pub premises: Vec<Derivation>,
}

impl Derivation {
    pub fn sequent(&self) -> Sequent {
        Sequent::new(self.conclusion.clone())
    }

    pub fn height(&self) -> usize {
        1 + self.premises.iter().map(Derivation::height).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.premises.iter().map(Derivation::node_count).sum::<usize>()
    }

    pub fn principal(&self) -> Option<&IFormula> {
        self.inst.principal.and_then(|i| self.conclusion.get(i))
    }

    /// Every rule tag used in the tree.
    pub fn rules(&self) -> std::collections::BTreeSet<Rule> {
        let mut out = std::collections::BTreeSet::new();
        self.visit(&mut |d| {
            out.insert(d.rule);
        });
        out
    }

    pub fn visit(&self, f: &mut dyn FnMut(&Derivation)) {
        f(self);
        for p in &self.premises {
            p.visit(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error("role sets {0} and {1} are not disjoint")]
    NotDisjoint(crate::roles::RoleSet, crate::roles::RoleSet),
    #[error("role sets do not partition the universe")]
    NotPartition,
    #[error("complements of {0} and {1} overlap")]
    ComplementsOverlap(crate::roles::RoleSet, crate::roles::RoleSet),
    #[error("complements of the cut role sets do not partition the universe")]
    NotComplementPartition,
    #[error("sequent is not intuitionistic: {0}")]
    NotIntuitionistic(Sequent),
    #[error("1-cut needs an empty role set, got {0}")]
    NonEmptyRoles(crate::roles::RoleSet),
    #[error("index {index} out of range for a sequent of {len} items")]
    BadIndex { index: usize, len: usize },
    #[error("cut formulas differ: {0} vs {1}")]
    FormulaMismatch(Formula, Formula),
    #[error("formula {0} is not in {1}")]
    WrongCalculus(Formula, String),
    #[error("{left} and {right} do not make up {whole}")]
    SplitMismatch { whole: crate::roles::RoleSet, left: crate::roles::RoleSet, right: crate::roles::RoleSet },
    #[error("cannot assemble {rule}: {msg}")]
    Assemble { rule: Rule, msg: String },
}

/// At most one item has its role set in `j`.
pub fn is_intuitionistic(items: &[IFormula], j: Ultrafilter) -> bool {
    items.iter().filter(|i| j.contains(i.roles)).count() <= 1
}

/// A calculus over a fixed universe of roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Kernel {
    pub universe: Universe,
    pub calc: Calculus,
}

impl Kernel {
    pub fn new(universe: Universe, calc: Calculus) -> Self {
        Kernel { universe, calc }
    }

    fn intuitionistic_ok(&self, items: &[IFormula]) -> bool {
        match self.calc {
            Calculus::Mrlj(j) => is_intuitionistic(items, j),
            _ => true,
        }
    }

    fn require_intuitionistic(&self, items: &[IFormula]) -> Result<(), KernelError> {
        if self.intuitionistic_ok(items) {
            Ok(())
        } else {
            Err(KernelError::NotIntuitionistic(Sequent::new(items.to_vec())))
        }
    }

    fn index<'a>(&self, d: &'a Derivation, index: usize) -> Result<&'a IFormula, KernelError> {
        d.conclusion.get(index).ok_or(KernelError::BadIndex { index, len: d.conclusion.len() })
    }
}

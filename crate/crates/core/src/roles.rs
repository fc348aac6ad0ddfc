//! Finite role universes, role sets, endomorphisms and principal ultrafilters.
//!
//! Roles are the integers `0..n` with `n <= 64`, so a role set is a `u64`
//! bit mask. Every ultrafilter on a finite universe is principal, hence an
//! [`Ultrafilter`] is stored as the single role it is generated by.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MAX_ROLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoleError {
    #[error("role sets at positions {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("endomorphism is not a bijection")]
    NotBijective,
    #[error("role {role} is outside the universe of {size} roles")]
    OutOfRange { role: usize, size: usize },
    #[error("universe size must be between 1 and {MAX_ROLES}, got {0}")]
    BadUniverse(usize),
    #[error("endomorphism has {got} entries, universe has {expected} roles")]
    ArityMismatch { expected: usize, got: usize },
    #[error("cannot parse {what} from {text:?}")]
    Parse { what: &'static str, text: String },
}

/// The set of roles `{0, .., size-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Universe {
    size: usize,
}

impl Universe {
    pub fn new(size: usize) -> Result<Self, RoleError> {
        if size == 0 || size > MAX_ROLES {
            return Err(RoleError::BadUniverse(size));
        }
        Ok(Universe { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// The full role set.
    pub fn full(&self) -> RoleSet {
        if self.size == 64 {
            RoleSet(u64::MAX)
        } else {
            RoleSet((1u64 << self.size) - 1)
        }
    }

    pub fn contains(&self, r: RoleSet) -> bool {
        r.0 & !self.full().0 == 0
    }

    pub fn complement(&self, r: RoleSet) -> RoleSet {
        RoleSet(!r.0 & self.full().0)
    }

    /// True iff the sets are pairwise disjoint and cover the universe.
    pub fn partition_check(&self, sets: &[RoleSet]) -> bool {
        match disjoint_union(sets) {
            Ok(u) => u == self.full(),
            Err(_) => false,
        }
    }

    /// Every subset of the universe, in bit-mask order. Only sensible for small universes.
    pub fn subsets(&self) -> impl Iterator<Item = RoleSet> {
        let full = self.full().0;
        (0..=full).map(RoleSet)
    }

    pub fn roles(&self) -> impl Iterator<Item = usize> {
        0..self.size
    }

    pub fn identity(&self) -> Endo {
        Endo { map: (0..self.size).collect() }
    }

    /// All endomorphisms of the universe. There are `n^n` of them.
    pub fn endos(&self) -> Vec<Endo> {
        let n = self.size;
        let total = n.pow(n as u32);
        (0..total)
            .map(|mut k| {
                let map = (0..n)
                    .map(|_| {
                        let v = k % n;
                        k /= n;
                        v
                    })
                    .collect();
                Endo { map }
            })
            .collect()
    }

    /// All permutations of the universe.
    pub fn permutations(&self) -> Vec<Endo> {
        self.endos().into_iter().filter(Endo::is_bijective).collect()
    }

    pub fn check_role(&self, role: usize) -> Result<(), RoleError> {
        if role < self.size {
            Ok(())
        } else {
            Err(RoleError::OutOfRange { role, size: self.size })
        }
    }

    pub fn check_set(&self, r: RoleSet) -> Result<(), RoleError> {
        match r.iter().find(|&i| i >= self.size) {
            Some(role) => Err(RoleError::OutOfRange { role, size: self.size }),
            None => Ok(()),
        }
    }

    pub fn check_endo(&self, f: &Endo) -> Result<(), RoleError> {
        if f.map.len() != self.size {
            return Err(RoleError::ArityMismatch { expected: self.size, got: f.map.len() });
        }
        for &v in &f.map {
            self.check_role(v)?;
        }
        Ok(())
    }
}

/// A subset of the role universe as a bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RoleSet(pub u64);

impl RoleSet {
    pub const EMPTY: RoleSet = RoleSet(0);

    pub fn singleton(r: usize) -> Self {
        RoleSet(1u64 << r)
    }

    pub fn from_roles<I: IntoIterator<Item = usize>>(roles: I) -> Self {
        RoleSet(roles.into_iter().fold(0, |m, r| m | (1u64 << r)))
    }

    pub fn contains(&self, r: usize) -> bool {
        r < 64 && self.0 & (1u64 << r) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: RoleSet) -> RoleSet {
        RoleSet(self.0 | other.0)
    }

    pub fn intersect(self, other: RoleSet) -> RoleSet {
        RoleSet(self.0 & other.0)
    }

    pub fn minus(self, other: RoleSet) -> RoleSet {
        RoleSet(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: RoleSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset(self, other: RoleSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |i| bits & (1u64 << i) != 0)
    }

    /// Image under `f`.
    pub fn image(self, f: &Endo) -> RoleSet {
        RoleSet::from_roles(self.iter().map(|r| f.apply(r)))
    }
}

/// Union of pairwise disjoint role sets.
pub fn disjoint_union(sets: &[RoleSet]) -> Result<RoleSet, RoleError> {
    let mut acc = RoleSet::EMPTY;
    for (j, s) in sets.iter().enumerate() {
        if !acc.is_disjoint(*s) {
            let i = sets[..j].iter().position(|p| !p.is_disjoint(*s)).unwrap_or(0);
            return Err(RoleError::Overlap(i, j));
        }
        acc = acc.union(*s);
    }
    Ok(acc)
}

impl fmt::Debug for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, r) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("}")
    }
}

fn parse_list(text: &str, open: char, close: char, what: &'static str) -> Result<Vec<usize>, RoleError> {
    let err = || RoleError::Parse { what, text: text.to_string() };
    let t = text.trim();
    let inner = t.strip_prefix(open).and_then(|s| s.strip_suffix(close)).ok_or_else(err)?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|p| p.trim().parse::<usize>().map_err(|_| err())).collect()
}

impl FromStr for RoleSet {
    type Err = RoleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let roles = parse_list(s, '{', '}', "role set")?;
        if let Some(&role) = roles.iter().find(|&&r| r >= MAX_ROLES) {
            return Err(RoleError::OutOfRange { role, size: MAX_ROLES });
        }
        Ok(RoleSet::from_roles(roles))
    }
}

impl Serialize for RoleSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for RoleSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let roles = Vec::<usize>::deserialize(d)?;
        if let Some(r) = roles.iter().find(|&&r| r >= MAX_ROLES) {
            return Err(serde::de::Error::custom(format!("role {r} out of range")));
        }
        Ok(RoleSet::from_roles(roles))
    }
}

/// A total map from roles to roles, stored as its image list.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endo {
    map: Vec<usize>,
}

impl Endo {
    pub fn new(map: Vec<usize>) -> Result<Self, RoleError> {
        let n = map.len();
        if n == 0 || n > MAX_ROLES {
            return Err(RoleError::BadUniverse(n));
        }
        if let Some(&role) = map.iter().find(|&&v| v >= n) {
            return Err(RoleError::OutOfRange { role, size: n });
        }
        Ok(Endo { map })
    }

    /// The transposition of `a` and `b` in a universe of `n` roles.
    pub fn swap(n: usize, a: usize, b: usize) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(a, b);
        Endo { map }
    }

    /// `i -> (i + k) mod n`.
    pub fn rotation(n: usize, k: usize) -> Self {
        Endo { map: (0..n).map(|i| (i + k) % n).collect() }
    }

    pub fn constant(n: usize, r: usize) -> Self {
        Endo { map: vec![r; n] }
    }

    pub fn size(&self) -> usize {
        self.map.len()
    }

    pub fn table(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, r: usize) -> usize {
        self.map[r]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn is_bijective(&self) -> bool {
        let mut seen = 0u64;
        for &v in &self.map {
            seen |= 1u64 << v;
        }
        seen.count_ones() as usize == self.map.len()
    }

    /// `{r | f(r) in R}`.
    pub fn preimage(&self, r: RoleSet) -> RoleSet {
        RoleSet::from_roles((0..self.map.len()).filter(|&i| r.contains(self.map[i])))
    }

    /// `U@r` pushed forward along `f` is `U@f(r)`.
    pub fn push_ultrafilter(&self, u: Ultrafilter) -> Ultrafilter {
        Ultrafilter(self.apply(u.0))
    }

    /// Diagrammatic composition: `(self.compose(g))(r) = g(self(r))`.
    pub fn compose(&self, g: &Endo) -> Endo {
        debug_assert_eq!(self.size(), g.size());
        Endo { map: self.map.iter().map(|&v| g.apply(v)).collect() }
    }

    pub fn inverse(&self) -> Result<Endo, RoleError> {
        if !self.is_bijective() {
            return Err(RoleError::NotBijective);
        }
        let mut inv = vec![0; self.map.len()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Ok(Endo { map: inv })
    }

    /// `f^k` with `f^0 = id`.
    pub fn power(&self, k: usize) -> Endo {
        let mut acc = Endo { map: (0..self.size()).collect() };
        for _ in 0..k {
            acc = self.compose(&acc);
        }
        acc
    }

    /// Least `k >= 1` with `f^k = id`.
    pub fn order(&self) -> Result<usize, RoleError> {
        if !self.is_bijective() {
            return Err(RoleError::NotBijective);
        }
        let mut acc = self.clone();
        let mut k = 1;
        while !acc.is_identity() {
            acc = self.compose(&acc);
            k += 1;
        }
        Ok(k)
    }

    /// `f(g) = f . g . f^-1` for a permutation `f`.
    pub fn conjugate(&self, g: &Endo) -> Result<Endo, RoleError> {
        let inv = self.inverse()?;
        Ok(self.compose(g).compose(&inv))
    }
}

impl fmt::Debug for Endo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Endo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, v) in self.map.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Endo {
    type Err = RoleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Endo::new(parse_list(s, '[', ']', "endomorphism")?)
    }
}

impl Serialize for Endo {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Endo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Endo::new(Vec::<usize>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// The principal ultrafilter generated by a role: `R` is a member iff the role is in `R`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ultrafilter(pub usize);

impl Ultrafilter {
    pub fn at(role: usize) -> Self {
        Ultrafilter(role)
    }

    pub fn role(&self) -> usize {
        self.0
    }

    pub fn contains(&self, r: RoleSet) -> bool {
        r.contains(self.0)
    }
}

impl fmt::Debug for Ultrafilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

impl fmt::Display for Ultrafilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

impl FromStr for Ultrafilter {
    type Err = RoleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RoleError::Parse { what: "ultrafilter", text: s.to_string() };
        let r = s.trim().strip_prefix('@').ok_or_else(err)?.parse::<usize>().map_err(|_| err())?;
        if r >= MAX_ROLES {
            return Err(RoleError::OutOfRange { role: r, size: MAX_ROLES });
        }
        Ok(Ultrafilter(r))
    }
}

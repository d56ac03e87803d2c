//! Syntactic presentations of Landweber-type `BP_*`-algebras.
//!
//! An algebra is described by which `v_i` are inverted and which are set to
//! zero (index 0 stands for `v_0 = p`).  The catalog names are `BP`,
//! `E(n)` (invert `v_n`, omit everything above), `vn^-1BP` (invert `v_n`,
//! omit nothing) and `rational` (= `E(0)` with all generators kept:
//! invert `p`).  Heights above the generator cutoff are certified only up to
//! `N` and stamped as such.

use crate::context::TruncationContext;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Algebra {
    #[serde(default)]
    pub invert: BTreeSet<usize>,
    #[serde(default)]
    pub omit: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Height of an algebra within the `N`-generator model.  `InfiniteUpTo(N)`
/// records that `B/I_k` was nonzero for every checkable `k <= N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Height {
    Finite(usize),
    InfiniteUpTo(usize),
}

impl Height {
    pub fn as_finite(&self) -> Option<usize> {
        match self {
            Height::Finite(n) => Some(*n),
            Height::InfiniteUpTo(_) => None,
        }
    }
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Height::Finite(n) => write!(f, "{n}"),
            Height::InfiniteUpTo(n) => write!(f, "infinity (certified up to {n})"),
        }
    }
}

impl Algebra {
    pub fn bp() -> Self {
        Algebra {
            invert: BTreeSet::new(),
            omit: BTreeSet::new(),
            name: Some("BP".into()),
        }
    }

    /// Johnson-Wilson `E(n)_*`: invert `v_n`, omit `v_j` for `j > n`.
    /// `E(0)` is the rational presentation restricted to degree zero.
    pub fn en(n: usize, ctx: &TruncationContext) -> Self {
        let invert = BTreeSet::from([n]);
        let omit = (n + 1..=ctx.vars).collect();
        Algebra {
            invert,
            omit,
            name: Some(format!("E({n})")),
        }
    }

    /// `v_n^{-1}BP_*`: invert `v_n`, keep everything.
    pub fn vn_inv_bp(n: usize) -> Self {
        Algebra {
            invert: BTreeSet::from([n]),
            omit: BTreeSet::new(),
            name: Some(format!("v{n}^-1BP")),
        }
    }

    /// `Q[v_1..v_N]`: invert `p`.
    pub fn rational() -> Self {
        Algebra {
            invert: BTreeSet::from([0]),
            omit: BTreeSet::new(),
            name: Some("rational".into()),
        }
    }

    /// Resolve a catalog name.
    pub fn from_name(name: &str, ctx: &TruncationContext) -> Result<Self> {
        let trimmed = name.trim();
        if trimmed == "BP" {
            return Ok(Algebra::bp());
        }
        if trimmed == "rational" || trimmed == "Q" {
            return Ok(Algebra::rational());
        }
        if let Some(inner) = trimmed.strip_prefix("E(").and_then(|s| s.strip_suffix(')')) {
            let n: usize = inner
                .parse()
                .map_err(|_| Error::InvalidAlgebra(format!("bad catalog name {name}")))?;
            if n > ctx.vars {
                return Err(Error::InvalidAlgebra(format!(
                    "E({n}) needs v_{n}; context has {} generators",
                    ctx.vars
                )));
            }
            return Ok(Algebra::en(n, ctx));
        }
        if let Some(rest) = trimmed.strip_prefix('v') {
            if let Some(n) = rest.strip_suffix("^-1BP") {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::InvalidAlgebra(format!("bad catalog name {name}")))?;
                return Ok(Algebra::vn_inv_bp(n));
            }
        }
        Err(Error::InvalidAlgebra(format!("unknown catalog name {name}")))
    }

    pub fn validate(&self, ctx: &TruncationContext) -> Result<()> {
        for &i in &self.invert {
            if i > ctx.vars {
                return Err(Error::InvalidAlgebra(format!(
                    "inverted index {i} exceeds generator cutoff {}",
                    ctx.vars
                )));
            }
        }
        for &j in &self.omit {
            if j == 0 || j > ctx.vars {
                return Err(Error::InvalidAlgebra(format!(
                    "omitted index {j} out of range 1..={}",
                    ctx.vars
                )));
            }
        }
        if let (Some(&jmin), Some(&imax)) = (self.omit.iter().next(), self.invert.iter().last()) {
            if jmin <= imax {
                return Err(Error::InvalidAlgebra(format!(
                    "omitted index {jmin} does not exceed inverted index {imax}"
                )));
            }
        }
        if self.invert.iter().any(|i| self.omit.contains(i)) {
            return Err(Error::InvalidAlgebra(
                "a generator cannot be both inverted and omitted".into(),
            ));
        }
        Ok(())
    }

    /// `v_i` survives in this algebra (`i >= 1`).
    pub fn alive(&self, i: usize) -> bool {
        !self.omit.contains(&i)
    }

    pub fn inverted(&self, i: usize) -> bool {
        self.invert.contains(&i)
    }

    /// `p` inverted: graded pieces are `Q`-vector spaces.
    pub fn is_rational(&self) -> bool {
        self.invert.contains(&0)
    }

    /// Derived height: `min(invert)` when something is inverted, otherwise
    /// infinity certified up to `N`.
    pub fn height(&self, ctx: &TruncationContext) -> Height {
        match self.invert.iter().next() {
            Some(&i) => Height::Finite(i),
            None => Height::InfiniteUpTo(ctx.vars),
        }
    }

    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        format!("invert {:?} omit {:?}", self.invert, self.omit)
    }

    /// Whether a monomial exponent profile is representable: negative
    /// exponents only on inverted generators, nothing on omitted ones.
    pub fn allows_exponent(&self, i: usize, e: i32) -> bool {
        if e == 0 {
            return true;
        }
        if self.omit.contains(&i) {
            return false;
        }
        e > 0 || self.invert.contains(&i)
    }

    /// Union of inverted sets; used for slot flags of sandwich rings.
    pub fn with_inverts_from(&self, other: &Algebra) -> Algebra {
        let mut a = self.clone();
        for &i in &other.invert {
            if !a.omit.contains(&i) {
                a.invert.insert(i);
            }
        }
        a.name = None;
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_heights() {
        let ctx = TruncationContext::desk(2);
        assert_eq!(Algebra::en(1, &ctx).height(&ctx), Height::Finite(1));
        assert_eq!(Algebra::vn_inv_bp(2).height(&ctx), Height::Finite(2));
        assert_eq!(Algebra::bp().height(&ctx), Height::InfiniteUpTo(3));
        assert_eq!(Algebra::rational().height(&ctx), Height::Finite(0));
    }

    #[test]
    fn names_resolve() {
        let ctx = TruncationContext::desk(2);
        assert_eq!(Algebra::from_name("E(1)", &ctx).unwrap(), Algebra::en(1, &ctx));
        assert_eq!(
            Algebra::from_name("v2^-1BP", &ctx).unwrap(),
            Algebra::vn_inv_bp(2)
        );
        assert!(Algebra::from_name("E(9)", &ctx).is_err());
    }

    #[test]
    fn omit_above_invert() {
        let ctx = TruncationContext::desk(2);
        let bad = Algebra {
            invert: BTreeSet::from([2]),
            omit: BTreeSet::from([1]),
            name: None,
        };
        assert!(bad.validate(&ctx).is_err());
        let ok = Algebra {
            invert: BTreeSet::from([1]),
            omit: BTreeSet::from([3]),
            name: None,
        };
        assert!(ok.validate(&ctx).is_ok());
    }
}

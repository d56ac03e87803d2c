//! Ring shapes and monomials.
//!
//! A shape describes the generator slots of one of the ambient graded rings:
//! the `v_i` scalars (with invertibility flags from an [`Algebra`]), the
//! rational logarithm generators `l_i`, optional formal orientation
//! variables (used for the formal sum), and `t_i` generators repeated once
//! per tensor block.  `Gamma^{(x)s}`-style rings keep scalars on the far
//! left: right-leg scalars are always expanded through the right unit, so a
//! monomial is just one exponent vector over these slots.
//!
//! Truncation: a monomial is representable when the total degree of its
//! positively-powered slots stays below `ctx.mono_pos` and the (negative)
//! total of its negatively-powered slots stays above `ctx.mono_neg`.
//! Products silently drop monomials that leave these bounds; every consumer
//! stamps its answers with the window they are valid in.

use crate::algebra::Algebra;
use crate::context::TruncationContext;
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SlotKind {
    /// `v_index`, flags from the shape's algebra.
    V,
    /// `l_index`, rational logarithm coefficients.
    L,
    /// Formal orientation variable (`x`, `y`) of degree 2.
    X,
    /// `t_index` in tensor block `block` (1-based).
    T { block: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingShape {
    pub ctx: Arc<TruncationContext>,
    /// Flags for the `v` slots.
    pub flags: Algebra,
    pub has_l: bool,
    /// Number of formal degree-2 variables.
    pub formal: usize,
    pub t_blocks: usize,
}

impl RingShape {
    pub fn scalars(ctx: Arc<TruncationContext>, flags: Algebra) -> Arc<Self> {
        Arc::new(RingShape {
            ctx,
            flags,
            has_l: false,
            formal: 0,
            t_blocks: 0,
        })
    }

    /// `A = Z_(p)[v_1..v_N]`.
    pub fn bp(ctx: Arc<TruncationContext>) -> Arc<Self> {
        Self::scalars(ctx, Algebra::bp())
    }

    /// `Gamma^{(x) s}` over the given scalar flags.
    pub fn gamma(ctx: Arc<TruncationContext>, flags: Algebra, t_blocks: usize) -> Arc<Self> {
        Arc::new(RingShape {
            ctx,
            flags,
            has_l: false,
            formal: 0,
            t_blocks,
        })
    }

    /// Rational ring on the logarithm generators with `t_blocks` blocks.
    /// All `v` slots are dead; only `l` and `t` monomials are admissible.
    pub fn log_ring(ctx: Arc<TruncationContext>, t_blocks: usize) -> Arc<Self> {
        let omit = (1..=ctx.vars).collect();
        Arc::new(RingShape {
            ctx,
            flags: Algebra {
                invert: Default::default(),
                omit,
                name: None,
            },
            has_l: true,
            formal: 0,
            t_blocks,
        })
    }

    /// Add formal orientation variables to a scalar ring.
    pub fn with_formal(ctx: Arc<TruncationContext>, flags: Algebra, formal: usize, has_l: bool) -> Arc<Self> {
        Arc::new(RingShape {
            ctx,
            flags,
            has_l,
            formal,
            t_blocks: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.ctx.vars
    }

    pub fn num_slots(&self) -> usize {
        let n = self.n();
        n + if self.has_l { n } else { 0 } + self.formal + n * self.t_blocks
    }

    pub fn slot_kind(&self, s: usize) -> (SlotKind, usize) {
        let n = self.n();
        let mut s = s;
        if s < n {
            return (SlotKind::V, s + 1);
        }
        s -= n;
        if self.has_l {
            if s < n {
                return (SlotKind::L, s + 1);
            }
            s -= n;
        }
        if s < self.formal {
            return (SlotKind::X, s + 1);
        }
        s -= self.formal;
        let block = s / n + 1;
        let idx = s % n + 1;
        assert!(block <= self.t_blocks, "slot out of range");
        (SlotKind::T { block }, idx)
    }

    /// Inverse of [`slot_kind`]; `None` when the shape lacks that slot.
    pub fn slot_of(&self, kind: SlotKind, index: usize) -> Option<usize> {
        let n = self.n();
        if index == 0 || index > n && !matches!(kind, SlotKind::X) {
            return None;
        }
        match kind {
            SlotKind::V => Some(index - 1),
            SlotKind::L => self.has_l.then(|| n + index - 1),
            SlotKind::X => (index <= self.formal)
                .then(|| n + if self.has_l { n } else { 0 } + index - 1),
            SlotKind::T { block } => (block >= 1 && block <= self.t_blocks).then(|| {
                n + if self.has_l { n } else { 0 } + self.formal + (block - 1) * n + index - 1
            }),
        }
    }

    pub fn slot_degree(&self, s: usize) -> i64 {
        let (kind, idx) = self.slot_kind(s);
        match kind {
            SlotKind::X => 2,
            _ => self.ctx.gen_degree(idx),
        }
    }

    /// Exponent admissibility at one slot.
    pub fn slot_allows(&self, s: usize, e: i32) -> bool {
        if e == 0 {
            return true;
        }
        match self.slot_kind(s) {
            (SlotKind::V, idx) => self.flags.allows_exponent(idx, e),
            _ => e > 0,
        }
    }

    pub fn slot_name(&self, s: usize) -> String {
        let (kind, idx) = self.slot_kind(s);
        match kind {
            SlotKind::V => format!("v{idx}"),
            SlotKind::L => format!("l{idx}"),
            SlotKind::X => ["x", "y", "z"]
                .get(idx - 1)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("x{idx}")),
            SlotKind::T { block } => format!("t{idx}{}", "'".repeat(block - 1)),
        }
    }

    /// Same slots, different `v` flags.
    pub fn reflag(self: &Arc<Self>, flags: Algebra) -> Arc<Self> {
        Arc::new(RingShape {
            ctx: self.ctx.clone(),
            flags,
            has_l: self.has_l,
            formal: self.formal,
            t_blocks: self.t_blocks,
        })
    }
}

/// Exponent vector over a shape's slots.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mono(pub Box<[i32]>);

impl Mono {
    pub fn unit(shape: &RingShape) -> Self {
        Mono(vec![0; shape.num_slots()].into())
    }

    pub fn gen(shape: &RingShape, kind: SlotKind, index: usize) -> Option<Self> {
        let mut m = Self::unit(shape);
        let s = shape.slot_of(kind, index)?;
        m.0[s] = 1;
        Some(m)
    }

    pub fn is_unit(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn degree(&self, shape: &RingShape) -> i64 {
        self.0
            .iter()
            .enumerate()
            .map(|(s, &e)| e as i64 * shape.slot_degree(s))
            .sum()
    }

    /// Total degree of the positive part.
    pub fn pos(&self, shape: &RingShape) -> i64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(s, &e)| e as i64 * shape.slot_degree(s))
            .sum()
    }

    /// Total degree of the negative part (non-positive).
    pub fn neg(&self, shape: &RingShape) -> i64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e < 0)
            .map(|(s, &e)| e as i64 * shape.slot_degree(s))
            .sum()
    }

    pub fn admissible(&self, shape: &RingShape) -> bool {
        self.0.iter().enumerate().all(|(s, &e)| shape.slot_allows(s, e))
            && self.pos(shape) <= shape.ctx.mono_pos
            && self.neg(shape) >= shape.ctx.mono_neg
    }

    /// Product; `None` when the result is dropped by flags or truncation.
    pub fn try_mul(&self, rhs: &Mono, shape: &RingShape) -> Option<Mono> {
        debug_assert_eq!(self.0.len(), rhs.0.len());
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(rhs.0.iter()) {
            out.push(a.checked_add(*b)?);
        }
        let m = Mono(out.into());
        m.admissible(shape).then_some(m)
    }

    pub fn try_pow(&self, e: i32, shape: &RingShape) -> Option<Mono> {
        let mut out = Vec::with_capacity(self.0.len());
        for a in self.0.iter() {
            out.push(a.checked_mul(e)?);
        }
        let m = Mono(out.into());
        m.admissible(shape).then_some(m)
    }

    pub fn exponent(&self, shape: &RingShape, kind: SlotKind, index: usize) -> i32 {
        shape.slot_of(kind, index).map_or(0, |s| self.0[s])
    }

    /// All `t` exponents over every block are zero.
    pub fn t_free(&self, shape: &RingShape) -> bool {
        let n = shape.n();
        let t0 = shape.num_slots() - n * shape.t_blocks;
        self.0[t0..].iter().all(|&e| e == 0)
    }

    pub fn display(&self, shape: &RingShape) -> String {
        if self.is_unit() {
            return "1".into();
        }
        let mut parts = Vec::new();
        for (s, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if e == 1 {
                parts.push(shape.slot_name(s));
            } else {
                parts.push(format!("{}^{}", shape.slot_name(s), e));
            }
        }
        parts.join("*")
    }
}

impl fmt::Debug for Mono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mono{:?}", &self.0)
    }
}

/// Canonical term order: ascending total degree, then descending
/// lexicographic on the exponent vector (`v_1 < v_2 < ... < t_1 < ...`),
/// so `v1^2` prints before `t1^2`.
pub fn canonical_cmp(shape: &RingShape, a: &Mono, b: &Mono) -> std::cmp::Ordering {
    let da = a.degree(shape);
    let db = b.degree(shape);
    da.cmp(&db).then_with(|| b.0.cmp(&a.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape2() -> Arc<RingShape> {
        let ctx = Arc::new(TruncationContext::desk(2));
        RingShape::gamma(ctx, Algebra::bp(), 1)
    }

    #[test]
    fn slot_layout_round_trips() {
        let sh = shape2();
        assert_eq!(sh.num_slots(), 6);
        for s in 0..sh.num_slots() {
            let (k, i) = sh.slot_kind(s);
            assert_eq!(sh.slot_of(k, i), Some(s));
        }
        assert_eq!(sh.slot_name(0), "v1");
        assert_eq!(sh.slot_name(3), "t1");
    }

    #[test]
    fn degree_and_truncation() {
        let sh = shape2();
        let v1 = Mono::gen(&sh, SlotKind::V, 1).unwrap();
        assert_eq!(v1.degree(&sh), 2);
        // v1^15 has positive part 30 > mono_pos? mono_pos = 28+14 = 42, fine;
        // v1^22 exceeds it.
        let big = v1.try_pow(22, &sh);
        assert!(big.is_none());
        // negative exponent rejected on non-inverted generator
        assert!(v1.try_pow(-1, &sh).is_none());
    }

    #[test]
    fn inverted_flags() {
        let ctx = Arc::new(TruncationContext::desk(2));
        let e1 = Algebra::en(1, &ctx);
        let sh = RingShape::gamma(ctx, e1, 1);
        let v1 = Mono::gen(&sh, SlotKind::V, 1).unwrap();
        assert!(v1.try_pow(-3, &sh).is_some());
        // v2 omitted in E(1): the monomial is not representable
        let v2 = Mono::gen(&sh, SlotKind::V, 2).unwrap();
        assert!(!v2.admissible(&sh));
    }
}

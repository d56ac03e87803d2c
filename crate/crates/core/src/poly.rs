//! Sparse graded polynomials over a [`RingShape`].
//!
//! All coefficients are nonzero; arithmetic truncates monomials that leave
//! the representable range of the owning shape.

use crate::ring::{canonical_cmp, Mono, RingShape, SlotKind};
use crate::scalar::Scalar;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Clone, PartialEq, Eq)]
pub struct Poly {
    pub shape: Arc<RingShape>,
    pub terms: BTreeMap<Mono, Scalar>,
}

impl Poly {
    pub fn zero(shape: &Arc<RingShape>) -> Self {
        Poly {
            shape: shape.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn one(shape: &Arc<RingShape>) -> Self {
        Self::constant(shape, Scalar::one())
    }

    pub fn constant(shape: &Arc<RingShape>, c: Scalar) -> Self {
        let mut p = Self::zero(shape);
        if !c.is_zero() {
            p.terms.insert(Mono::unit(shape), c);
        }
        p
    }

    pub fn gen(shape: &Arc<RingShape>, kind: SlotKind, index: usize) -> Option<Self> {
        let m = Mono::gen(shape, kind, index)?;
        if !m.admissible(shape) {
            // omitted generator: its image is zero
            return Some(Self::zero(shape));
        }
        let mut p = Self::zero(shape);
        p.terms.insert(m, Scalar::one());
        Some(p)
    }

    pub fn monomial(shape: &Arc<RingShape>, m: Mono, c: Scalar) -> Self {
        let mut p = Self::zero(shape);
        if !c.is_zero() && m.admissible(shape) {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, m: Mono, c: Scalar) {
        if c.is_zero() || !m.admissible(&self.shape) {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = e.get() + &c;
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, rhs: &Poly) -> Poly {
        assert_eq!(self.shape, rhs.shape, "shape mismatch");
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &Poly) -> Poly {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> Poly {
        Poly {
            shape: self.shape.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, c: &Scalar) -> Poly {
        if c.is_zero() {
            return Poly::zero(&self.shape);
        }
        Poly {
            shape: self.shape.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, k)| (m.clone(), k * c))
                .collect(),
        }
    }

    pub fn mul(&self, rhs: &Poly) -> Poly {
        assert_eq!(self.shape, rhs.shape, "shape mismatch");
        let mut out = Poly::zero(&self.shape);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                if let Some(m) = ma.try_mul(mb, &self.shape) {
                    out.add_term(m, ca * cb);
                }
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::one(&self.shape);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Inverse of a polynomial of the form `unit * m + (higher t-degree)`.
    /// Exists in the truncated ring whenever every non-leading term carries
    /// at least one `t` (or formal) factor, so the geometric series
    /// terminates inside the monomial bounds.
    pub fn invert_leading(&self, lead: &Mono) -> Result<Poly> {
        let c = self
            .terms
            .get(lead)
            .ok_or_else(|| Error::Parse("leading monomial absent".into()))?
            .clone();
        let cinv = c.inv().unwrap();
        let lead_inv = lead
            .try_pow(-1, &self.shape)
            .ok_or_else(|| Error::NegativeExponent(lead.display(&self.shape)))?;
        let lead_inv = Poly::monomial(&self.shape, lead_inv, cinv);
        // x = c*m (1 + r), r = (x - c*m) * (c*m)^{-1}, x^{-1} = m^{-1}c^{-1} sum (-r)^k
        let mut r = self.mul(&lead_inv);
        let one = Poly::one(&self.shape);
        r = r.sub(&one);
        let mut acc = one.clone();
        let mut pw = one;
        loop {
            pw = pw.mul(&r).neg();
            if pw.is_zero() {
                break;
            }
            acc = acc.add(&pw);
        }
        Ok(acc.mul(&lead_inv))
    }

    pub fn homogeneous_components(&self) -> BTreeMap<i64, Poly> {
        let mut out: BTreeMap<i64, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let d = m.degree(&self.shape);
            out.entry(d)
                .or_insert_with(|| Poly::zero(&self.shape))
                .add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn is_homogeneous_of(&self, d: i64) -> bool {
        self.terms.keys().all(|m| m.degree(&self.shape) == d)
    }

    pub fn degree_of_homogeneous(&self) -> Option<i64> {
        let mut it = self.terms.keys().map(|m| m.degree(&self.shape));
        let d = it.next()?;
        it.all(|e| e == d).then_some(d)
    }

    /// Every coefficient lies in `Z_(p)`.
    pub fn is_p_local(&self) -> bool {
        let p = self.shape.ctx.p;
        self.terms.values().all(|c| c.is_p_local(p))
    }

    /// Reinterpret over a shape with the same kinds of slots (possibly more
    /// blocks or different flags).  Slots are matched by `(kind, index)`;
    /// monomials that do not survive the target flags are dropped.
    pub fn into_shape(&self, target: &Arc<RingShape>) -> Poly {
        self.map_blocks(target, &|b| b)
    }

    /// Reinterpret with a tensor-block renumbering (e.g. `1 (x) -` sends
    /// block `b` to `b + 1`).
    pub fn map_blocks(&self, target: &Arc<RingShape>, block_map: &dyn Fn(usize) -> usize) -> Poly {
        let mut out = Poly::zero(target);
        'term: for (m, c) in &self.terms {
            let mut exps = vec![0i32; target.num_slots()];
            for (s, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let (kind, idx) = self.shape.slot_kind(s);
                let tkind = match kind {
                    SlotKind::T { block } => SlotKind::T {
                        block: block_map(block),
                    },
                    k => k,
                };
                match target.slot_of(tkind, idx) {
                    Some(ts) => exps[ts] += e,
                    None => continue 'term, // slot absent: generator is zero there
                }
            }
            out.add_term(Mono(exps.into()), c.clone());
        }
        out
    }

    /// Ring-homomorphic substitution.  `images(kind, index)` returns the
    /// image of that generator in the target shape, or `None` to keep the
    /// generator (same kind and index in the target).  Images must be
    /// homogeneous of the generator's degree; negative powers require the
    /// image to be a single invertible term.
    pub fn substitute(
        &self,
        target: &Arc<RingShape>,
        images: &dyn Fn(SlotKind, usize) -> Option<Poly>,
    ) -> Result<Poly> {
        self.substitute_inner(target, images, true)
    }

    /// Substitution without the homogeneity precondition (series images).
    pub fn substitute_unchecked(
        &self,
        target: &Arc<RingShape>,
        images: &dyn Fn(SlotKind, usize) -> Option<Poly>,
    ) -> Result<Poly> {
        self.substitute_inner(target, images, false)
    }

    fn substitute_inner(
        &self,
        target: &Arc<RingShape>,
        images: &dyn Fn(SlotKind, usize) -> Option<Poly>,
        check: bool,
    ) -> Result<Poly> {
        let mut out = Poly::zero(target);
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(target, c.clone());
            for (s, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let (kind, idx) = self.shape.slot_kind(s);
                let img = match images(kind, idx) {
                    Some(p) => {
                        let expected = self.shape.slot_degree(s);
                        if check && !p.is_homogeneous_of(expected) {
                            return Err(Error::NonHomogeneousImage {
                                gen: self.shape.slot_name(s),
                                expected,
                            });
                        }
                        p
                    }
                    None => Poly::gen(target, kind, idx)
                        .ok_or_else(|| Error::MissingImage(self.shape.slot_name(s)))?,
                };
                let powed = if e > 0 {
                    img.pow(e as u32)
                } else {
                    // need a single-term invertible image
                    if img.terms.len() != 1 {
                        return Err(Error::NegativeExponent(self.shape.slot_name(s)));
                    }
                    let (im, ic) = img.terms.iter().next().unwrap();
                    let inv = im
                        .try_pow(-1, target)
                        .ok_or_else(|| Error::NegativeExponent(self.shape.slot_name(s)))?;
                    Poly::monomial(target, inv, ic.inv().unwrap()).pow((-e) as u32)
                };
                acc = acc.mul(&powed);
                if acc.is_zero() {
                    break;
                }
            }
            out = out.add(&acc);
        }
        Ok(out)
    }

    /// Coefficient of a monomial (zero if absent).
    pub fn coeff(&self, m: &Mono) -> Scalar {
        self.terms.get(m).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn terms_canonical(&self) -> Vec<(&Mono, &Scalar)> {
        let mut v: Vec<_> = self.terms.iter().collect();
        v.sort_by(|a, b| canonical_cmp(&self.shape, a.0, b.0));
        v
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms_canonical().into_iter().enumerate() {
            let neg = c < &Scalar::zero();
            let mag = if neg { -c } else { c.clone() };
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_unit() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", m.display(&self.shape))?;
            } else {
                write!(f, "{}*{}", mag, m.display(&self.shape))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Parse the canonical text rendering (`"v1^2 - 4*t1^2"`, `"p"`, `"3/7*v1*t2'"`).
pub fn parse_poly(shape: &Arc<RingShape>, input: &str) -> Result<Poly> {
    let mut out = Poly::zero(shape);
    let s = input.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty polynomial".into()));
    }
    let mut term_start = 0usize;
    let mut depth = 0i32;
    let mut boundaries = Vec::new();
    // split on top-level +/- not inside exponents
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' | '-' if depth == 0 && i > 0 => {
                // not a leading sign of an exponent like ^-1
                let prev = s[..i].trim_end().chars().last().unwrap_or(' ');
                if prev != '^' && prev != '*' && prev != '/' && prev != '+' && prev != '-' {
                    boundaries.push(i);
                }
            }
            _ => {}
        }
    }
    boundaries.push(s.len());
    for &end in &boundaries {
        let raw = s[term_start..end].trim();
        term_start = end;
        if raw.is_empty() {
            continue;
        }
        let (sign, body) = match raw.strip_prefix('-') {
            Some(b) => (-1i64, b.trim()),
            None => (1, raw.strip_prefix('+').unwrap_or(raw).trim()),
        };
        let (m, c) = parse_term(shape, body)?;
        let c = if sign < 0 { -&c } else { c };
        out.add_term(m, c);
    }
    Ok(out)
}

fn parse_term(shape: &Arc<RingShape>, body: &str) -> Result<(Mono, Scalar)> {
    let mut coeff = Scalar::one();
    let mut exps = vec![0i32; shape.num_slots()];
    if body.is_empty() {
        return Err(Error::Parse("empty term".into()));
    }
    for factor in body.split('*') {
        let factor = factor.trim();
        if factor.is_empty() {
            return Err(Error::Parse(format!("empty factor in `{body}`")));
        }
        let (base, exp) = match factor.split_once('^') {
            Some((b, e)) => {
                let e: i32 = e
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad exponent in `{factor}`")))?;
                (b.trim(), e)
            }
            None => (factor, 1),
        };
        if base
            .chars()
            .next()
            .map(|c| c.is_ascii_digit() || c == '-' || c == '/')
            .unwrap_or(false)
        {
            let c: Scalar = base
                .parse()
                .map_err(|e| Error::Parse(format!("bad coefficient `{base}`: {e}")))?;
            let c = if exp >= 0 {
                c.pow(exp as u32)
            } else {
                c.inv()
                    .ok_or_else(|| Error::Parse("inverse of zero".into()))?
                    .pow((-exp) as u32)
            };
            coeff = &coeff * &c;
            continue;
        }
        if base == "p" {
            let c = Scalar::from_int(shape.ctx.p as i64);
            let c = if exp >= 0 {
                c.pow(exp as u32)
            } else {
                c.inv().unwrap().pow((-exp) as u32)
            };
            coeff = &coeff * &c;
            continue;
        }
        let (kind, index) = parse_gen(base)?;
        let slot = shape
            .slot_of(kind, index)
            .ok_or_else(|| Error::Parse(format!("generator `{base}` not in this ring")))?;
        exps[slot] += exp;
    }
    let m = Mono(exps.into());
    for (s, &e) in m.0.iter().enumerate() {
        if !shape.slot_allows(s, e) {
            return Err(Error::NegativeExponent(shape.slot_name(s)));
        }
    }
    Ok((m, coeff))
}

fn parse_gen(base: &str) -> Result<(SlotKind, usize)> {
    let primes = base.chars().rev().take_while(|&c| c == '\'').count();
    let core = &base[..base.len() - primes];
    let bad = || Error::Parse(format!("bad generator `{base}`"));
    if core.len() < 2 {
        return Err(bad());
    }
    let (head, idx) = core.split_at(1);
    let index: usize = idx.parse().map_err(|_| bad())?;
    match head {
        "v" if primes == 0 => Ok((SlotKind::V, index)),
        "l" if primes == 0 => Ok((SlotKind::L, index)),
        "t" => Ok((
            SlotKind::T {
                block: primes + 1,
            },
            index,
        )),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Algebra;
    use crate::context::TruncationContext;

    fn gamma2() -> Arc<RingShape> {
        let ctx = Arc::new(TruncationContext::desk(2));
        RingShape::gamma(ctx, Algebra::bp(), 1)
    }

    fn pp(sh: &Arc<RingShape>, s: &str) -> Poly {
        parse_poly(sh, s).unwrap()
    }

    #[test]
    fn product_of_monomials() {
        let sh = gamma2();
        let v1 = pp(&sh, "v1");
        assert_eq!(v1.mul(&v1).to_string(), "v1^2");
        let a = pp(&sh, "v1^2 - 4*t1^2 + 3");
        assert_eq!(a.mul(&Poly::one(&sh)), a);
    }

    #[test]
    fn difference_of_squares() {
        // (v1 + 2 t1)(v1 - 2 t1) = v1^2 - 4 t1^2, expanded by hand
        let sh = gamma2();
        let a = pp(&sh, "v1 + 2*t1");
        let b = pp(&sh, "v1 - 2*t1");
        assert_eq!(a.mul(&b).to_string(), "v1^2 - 4*t1^2");
    }

    #[test]
    fn substitution_examples() {
        let sh = gamma2();
        let img = pp(&sh, "v1 - 2*t1");
        let subst = |k: SlotKind, i: usize| -> Option<Poly> {
            (k == SlotKind::V && i == 1).then(|| img.clone())
        };
        // single generator
        let v1 = pp(&sh, "v1");
        assert_eq!(v1.substitute(&sh, &subst).unwrap().to_string(), "v1 - 2*t1");
        // square, expanded by hand: v1^2 - 4 v1 t1 + 4 t1^2
        let v1sq = pp(&sh, "v1^2");
        assert_eq!(
            v1sq.substitute(&sh, &subst).unwrap().to_string(),
            "v1^2 - 4*v1*t1 + 4*t1^2"
        );
        // constants are fixed
        let c = pp(&sh, "7");
        assert_eq!(c.substitute(&sh, &subst).unwrap().to_string(), "7");
    }

    #[test]
    fn substitution_rejects_inhomogeneous_image() {
        let sh = gamma2();
        let v1 = pp(&sh, "v1");
        let img = pp(&sh, "v1 + 1");
        let r = v1.substitute(&sh, &|k, i| (k == SlotKind::V && i == 1).then(|| img.clone()));
        assert!(matches!(r, Err(Error::NonHomogeneousImage { .. })));
    }

    #[test]
    fn parse_print_round_trip() {
        let sh = gamma2();
        for s in [
            "v1^2 - 4*t1^2",
            "1",
            "0",
            "-v2 + 2*t2 - 1/3*v1*t1^2",
            "v3",
        ] {
            let p = pp(&sh, s);
            assert_eq!(pp(&sh, &p.to_string()), p, "round trip {s}");
        }
        // p parses as the prime
        assert_eq!(pp(&sh, "p").to_string(), "2");
    }

    #[test]
    fn invert_leading_series() {
        let ctx = Arc::new(TruncationContext::desk(2));
        let sh = RingShape::gamma(ctx, Algebra::en(1, &sh_ctx()), 1);
        let eta = pp(&sh, "v1 - 2*t1");
        let lead = Mono::gen(&sh, SlotKind::V, 1).unwrap();
        let inv = eta.invert_leading(&lead).unwrap();
        // the product is 1 up to monomials at the truncation boundary,
        // which sit far outside the reporting window
        let prod = eta.mul(&inv);
        let residual = prod.sub(&Poly::one(&sh));
        for (m, _) in &residual.terms {
            assert!(
                m.pos(&sh) > sh.ctx.d_max || m.neg(&sh) < sh.ctx.d_min,
                "residual term {} inside the window",
                m.display(&sh)
            );
        }
    }

    fn sh_ctx() -> TruncationContext {
        TruncationContext::desk(2)
    }

    #[test]
    fn truncation_drops_terms() {
        let sh = gamma2();
        // the context gives mono_pos = 42, so v1^22 (degree 44) vanishes
        let v1 = pp(&sh, "v1");
        assert!(v1.pow(22).is_zero());
    }
}

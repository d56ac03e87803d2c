//! Degreewise materialization.
//!
//! A [`Slice`] presents one graded piece of a ring or tensor object as a
//! finitely generated `Z_(p)`-module: an explicit monomial basis together
//! with relation columns.  Sandwich rings `B (x)_A Gamma^{(x)s} (x)_A B`
//! keep all scalars on the left leg; what remains of the right legs is
//!
//!   * for every omitted generator of the algebra sitting right of tensor
//!     block `r`, the relation columns `m * eta_R^{(r)}(v_j) = 0`, and
//!   * for a trailing module leg, the sliding relations
//!     `m * eta_R^{(s)}(v_j) (x) g = m (x) v_j g` plus the module's own
//!     relation rows.
//!
//! Inverted generators contribute no relation columns: their right-unit
//! images are invertible in the truncated ring, and the relation span is
//! taken over the localized monomial basis, which absorbs the localization
//! collapse.

use crate::algebra::Algebra;
use crate::fgl::StructureMaps;
use crate::poly::Poly;
use crate::report::GradedGroup;
use crate::ring::{Mono, RingShape, SlotKind};
use crate::scalar::Scalar;
use crate::smith::{kernel_combos_tracked, snf_divisors, SparseCol, Staircase};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use std::sync::Arc;

/// A finitely presented graded module over an [`Algebra`]: generator
/// degrees and homogeneous relation rows with polynomial coefficients.
#[derive(Clone, Debug)]
pub struct ModuleData {
    pub base: Algebra,
    pub shape: Arc<RingShape>,
    pub gen_degrees: Vec<i64>,
    /// Each row: one polynomial per generator, `sum_k row[k] g_k = 0`.
    pub rels: Vec<Vec<Poly>>,
}

impl ModuleData {
    pub fn new(
        ctx: &Arc<crate::context::TruncationContext>,
        base: Algebra,
        gen_degrees: Vec<i64>,
        rels: Vec<Vec<Poly>>,
    ) -> Self {
        let shape = RingShape::scalars(ctx.clone(), base.clone());
        ModuleData {
            base,
            shape,
            gen_degrees,
            rels,
        }
    }

    /// Total degree of a relation row, or `None` for an all-zero row.
    pub fn rel_degree(&self, row: &[Poly]) -> Option<i64> {
        for (k, p) in row.iter().enumerate() {
            if !p.is_zero() {
                return p.degree_of_homogeneous().map(|d| d + self.gen_degrees[k]);
            }
        }
        None
    }
}

/// Basis element of a tensor slice: ring monomial plus optional module
/// part `(scalar monomial, generator index)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BasisElem {
    pub ring: Mono,
    pub module: Option<(Mono, usize)>,
}

#[derive(Clone)]
pub struct Slice {
    pub degree: i64,
    pub prime: u32,
    pub rational: bool,
    pub basis: Vec<BasisElem>,
    pub index: BTreeMap<BasisElem, usize>,
    pub rels: Vec<SparseCol>,
}

impl Slice {
    pub fn index_of(&self, b: &BasisElem) -> Option<usize> {
        self.index.get(b).copied()
    }

    pub fn group(&self) -> GradedGroup {
        if self.basis.is_empty() {
            return GradedGroup::trivial();
        }
        let (exps, free) = snf_divisors(&self.rels, self.basis.len(), self.prime, self.rational);
        GradedGroup::from_divisors(&exps, free)
    }

    pub fn staircase(&self) -> Staircase {
        Staircase::new(self.rels.clone(), self.prime, self.rational, false)
    }

    pub fn is_zero_module(&self) -> bool {
        self.basis.is_empty() || self.group().is_trivial()
    }

    /// Clear denominators of a scalar vector into a sparse integer column.
    /// Denominators are units in the relevant local ring, so this is a
    /// unit rescaling.
    pub fn clear(&self, v: &[(usize, Scalar)]) -> SparseCol {
        clear_col(v)
    }
}

pub fn clear_col(v: &[(usize, Scalar)]) -> SparseCol {
    let mut lcm = BigInt::one();
    for (_, c) in v {
        if !c.is_zero() {
            lcm = lcm.lcm(c.denom());
        }
    }
    let mut out: BTreeMap<u32, BigInt> = BTreeMap::new();
    for (i, c) in v {
        if c.is_zero() {
            continue;
        }
        let x = c.numer() * (&lcm / c.denom());
        let e = out.entry(*i as u32).or_insert_with(BigInt::zero);
        *e += x;
    }
    out.into_iter().filter(|(_, x)| !x.is_zero()).collect()
}

/// Generators-plus-divisors presentation of a subquotient.
#[derive(Clone, Debug)]
pub struct SubQuot {
    /// Generating vectors, as sparse columns over the source basis.
    pub gens: Vec<SparseCol>,
    pub group: GradedGroup,
}

/// `{ x in coker(source.rels) : map(x) in span(target.rels) }`,
/// presented by generators and elementary divisors.
pub fn kernel_subquotient(
    source: &Slice,
    map: &[Vec<(usize, Scalar)>],
    target: &Slice,
) -> SubQuot {
    assert_eq!(map.len(), source.basis.len());
    let p = source.prime;
    let rational = source.rational || target.rational;
    let n = map.len();
    let mut combined: Vec<SparseCol> = map.iter().map(|c| clear_col(c)).collect();
    combined.extend(target.rels.iter().cloned());
    let combos = kernel_combos_tracked(combined, n, p, rational);
    let mut gens: Vec<SparseCol> = Vec::new();
    for x in combos {
        debug_assert!(x.iter().all(|(i, _)| (*i as usize) < n));
        if !x.is_empty() {
            gens.push(x);
        }
    }
    let group = subquotient_group(&gens, &source.rels, p, rational);
    SubQuot { gens, group }
}

/// Group structure of `(span(gens) + span(rels)) / span(rels)`.
pub fn subquotient_group(
    gens: &[SparseCol],
    rels: &[SparseCol],
    p: u32,
    rational: bool,
) -> GradedGroup {
    if gens.is_empty() {
        return GradedGroup::trivial();
    }
    let k = gens.len();
    let mut combined: Vec<SparseCol> = gens.to_vec();
    combined.extend(rels.iter().cloned());
    let relcols: Vec<SparseCol> = kernel_combos_tracked(combined, k, p, rational)
        .into_iter()
        .filter(|c| !c.is_empty())
        .collect();
    let (exps, free) = snf_divisors(&relcols, k, p, rational);
    GradedGroup::from_divisors(&exps, free)
}

/// Tensor object `flags [ Gamma-block | interface ]^s (x) module?`.
pub struct TensorCtx<'a> {
    pub maps: &'a StructureMaps,
    pub shape: Arc<RingShape>,
    pub interfaces: Vec<Algebra>,
    pub module: Option<&'a ModuleData>,
}

impl TensorCtx<'_> {
    /// Module scalars can be normalized into the ring leg exactly when the
    /// ring leg already inverts everything the module base inverts (then
    /// the right-unit images of module scalars are invertible there).
    /// Otherwise the module keeps its own scalar slots and the interface
    /// is encoded by sliding relations.
    fn module_normalized(&self) -> bool {
        match self.module {
            Some(md) => {
                self.shape.t_blocks >= 1
                    && md.base.invert.is_subset(&self.shape.flags.invert)
            }
            None => false,
        }
    }
}

impl<'a> TensorCtx<'a> {
    pub fn new(
        maps: &'a StructureMaps,
        flags: Algebra,
        interfaces: Vec<Algebra>,
        module: Option<&'a ModuleData>,
    ) -> Self {
        let shape = RingShape::gamma(maps.ctx.clone(), flags, interfaces.len());
        TensorCtx {
            maps,
            shape,
            interfaces,
            module,
        }
    }

    /// The module itself, with no tensor blocks.  The ring leg is dead:
    /// all scalars live on the module part.
    pub fn module_only(maps: &'a StructureMaps, module: &'a ModuleData) -> Self {
        let dead = Algebra {
            invert: Default::default(),
            omit: (1..=maps.ctx.vars).collect(),
            name: None,
        };
        Self::new(maps, dead, Vec::new(), Some(module))
    }

    pub fn ctx(&self) -> &Arc<crate::context::TruncationContext> {
        &self.maps.ctx
    }

    fn rational(&self) -> bool {
        self.shape.flags.is_rational()
            || self.interfaces.iter().any(|a| a.is_rational())
            || self.module.map_or(false, |m| m.base.is_rational())
    }

    /// Enumerate `(ring monomial, module monomial)` pairs of the given
    /// total degree, within the joint monomial bounds.  For tensor objects
    /// (`t_blocks >= 1`) the module part is always the unit: module
    /// scalars are normalized into the ring leg through the right unit.
    fn pairs(&self, degree: i64) -> Vec<(Mono, Option<Mono>)> {
        let ctx = self.ctx();
        let rn = self.shape.num_slots();
        let module_slots = self.module.is_some() && !self.module_normalized();
        let mut slot_deg = Vec::with_capacity(rn + 4);
        let mut slot_inv = Vec::with_capacity(rn + 4);
        let mut slot_dead = Vec::with_capacity(rn + 4);
        for s in 0..rn {
            slot_deg.push(self.shape.slot_degree(s));
            let (kind, idx) = self.shape.slot_kind(s);
            match kind {
                SlotKind::V => {
                    slot_inv.push(self.shape.flags.inverted(idx));
                    slot_dead.push(!self.shape.flags.alive(idx));
                }
                _ => {
                    slot_inv.push(false);
                    slot_dead.push(false);
                }
            }
        }
        let mut mod_count = 0;
        if module_slots {
            let md = self.module.unwrap();
            mod_count = md.shape.num_slots();
            for s in 0..mod_count {
                slot_deg.push(md.shape.slot_degree(s));
                let (kind, idx) = md.shape.slot_kind(s);
                match kind {
                    SlotKind::V => {
                        slot_inv.push(md.base.inverted(idx));
                        slot_dead.push(!md.base.alive(idx));
                    }
                    _ => unreachable!("module shape has only scalar slots"),
                }
            }
        }
        let mut out = Vec::new();
        let mut cur = vec![0i32; slot_deg.len()];
        enum_rec(
            &slot_deg,
            &slot_inv,
            &slot_dead,
            0,
            degree,
            ctx.mono_pos,
            -ctx.mono_neg,
            &mut cur,
            &mut |exps| {
                let ring = Mono(exps[..rn].to_vec().into());
                let module = self.module.map(|md| {
                    if module_slots {
                        Mono(exps[rn..rn + mod_count].to_vec().into())
                    } else {
                        Mono::unit(&md.shape)
                    }
                });
                out.push((ring, module));
            },
        );
        out
    }

    pub fn basis(&self, degree: i64) -> Vec<BasisElem> {
        let mut out = Vec::new();
        match self.module {
            None => {
                for (ring, _) in self.pairs(degree) {
                    out.push(BasisElem { ring, module: None });
                }
            }
            Some(md) => {
                for (g, gd) in md.gen_degrees.iter().enumerate() {
                    for (ring, m) in self.pairs(degree - gd) {
                        out.push(BasisElem {
                            ring,
                            module: Some((m.unwrap(), g)),
                        });
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Right-unit image of a module scalar monomial in the ring leg,
    /// through the last tensor block.  Inverted generators use the
    /// truncated inverse series of their right-unit images.
    pub fn eta_image_of_module_mono(&self, mu: &Mono) -> Poly {
        let md = self.module.expect("module leg");
        let s = self.shape.t_blocks;
        debug_assert!(s >= 1);
        let mut acc = Poly::one(&self.shape);
        for (slot, &e) in mu.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let (kind, idx) = md.shape.slot_kind(slot);
            debug_assert_eq!(kind, SlotKind::V);
            let eta = self.maps.eta_r_through[s - 1][idx - 1].into_shape(&self.shape);
            let factor = if e > 0 {
                eta.pow(e as u32)
            } else {
                let lead = Mono::gen(&self.shape, SlotKind::V, idx)
                    .expect("inverted generator slot");
                eta.invert_leading(&lead)
                    .expect("right unit invertible in the truncated ring")
                    .pow((-e) as u32)
            };
            acc = acc.mul(&factor);
        }
        acc
    }

    /// Coordinates of `ring_poly (x) (module monomial, gen)` in a slice,
    /// normalizing module scalars into the ring leg when the model does so.
    pub fn expand(
        &self,
        slice: &Slice,
        ring_poly: &Poly,
        module_part: Option<&(Mono, usize)>,
    ) -> Vec<(usize, Scalar)> {
        let mut poly = ring_poly.clone();
        let mut part = module_part.cloned();
        if let (Some(md), Some((mu, g))) = (self.module, &part) {
            if self.module_normalized() && !mu.is_unit() {
                poly = poly.mul(&self.eta_image_of_module_mono(mu));
                part = Some((Mono::unit(&md.shape), *g));
            }
        }
        let mut out: BTreeMap<usize, Scalar> = BTreeMap::new();
        for (m, c) in &poly.terms {
            let be = BasisElem {
                ring: m.clone(),
                module: part.clone(),
            };
            if let Some(i) = slice.index_of(&be) {
                let e = out.entry(i).or_insert_with(Scalar::zero);
                *e = &*e + c;
            }
        }
        out.into_iter().filter(|(_, c)| !c.is_zero()).collect()
    }

    /// Materialize the graded piece in the given degree.
    pub fn slice(&self, degree: i64) -> Slice {
        let basis = self.basis(degree);
        let index: BTreeMap<BasisElem, usize> = basis
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, b)| (b, i))
            .collect();
        let mut out = Slice {
            degree,
            prime: self.ctx().p,
            rational: self.rational(),
            basis,
            index,
            rels: Vec::new(),
        };
        if out.basis.is_empty() {
            return out;
        }
        let s = self.shape.t_blocks;
        let n = self.ctx().vars;
        let mut mult_cache: BTreeMap<i64, Vec<BasisElem>> = BTreeMap::new();
        let mut mults = |d: i64, me: &Self| -> Vec<BasisElem> {
            mult_cache.entry(d).or_insert_with(|| me.basis(d)).clone()
        };

        // omit relations at every interface; at the module interface the
        // sliding relations below subsume them unless the module leg is
        // normalized away
        let normalized = self.module_normalized();
        for r in 1..=s {
            let mut omit = self.interfaces[r - 1].omit.clone();
            if r == s {
                match self.module {
                    Some(md) if normalized => omit.extend(md.base.omit.iter().copied()),
                    Some(_) => continue,
                    None => {}
                }
            }
            for &j in &omit {
                let rel_poly = self.maps.eta_r_through[r - 1][j - 1].into_shape(&self.shape);
                let dj = self.ctx().gen_degree(j);
                for b in mults(degree - dj, self) {
                    let prod = mul_into(&rel_poly, &b.ring, &self.shape);
                    let col = self.expand(&out, &prod, b.module.as_ref());
                    if !col.is_empty() {
                        out.rels.push(clear_col(&col));
                    }
                }
            }
        }

        if let Some(md) = self.module {
            if normalized {
                // module relation rows land via the right unit
                let unit = Mono::unit(&md.shape);
                for row in &md.rels {
                    let Some(rd) = md.rel_degree(row) else {
                        continue;
                    };
                    let translated: Vec<(usize, Poly)> = row
                        .iter()
                        .enumerate()
                        .filter(|(_, pk)| !pk.is_zero())
                        .map(|(k, pk)| {
                            let mut acc = Poly::zero(&self.shape);
                            for (nu, c) in &pk.terms {
                                let img = self.eta_image_of_module_mono(nu).scale(c);
                                acc = acc.add(&img);
                            }
                            (k, acc)
                        })
                        .collect();
                    for (mring, _) in self.pairs(degree - rd) {
                        let mut col: Vec<(usize, Scalar)> = Vec::new();
                        for (k, tp) in &translated {
                            let prod = mul_into(tp, &mring, &self.shape);
                            for (i, c) in
                                self.expand(&out, &prod, Some(&(unit.clone(), *k)))
                            {
                                push_coord(&mut col, i, c);
                            }
                        }
                        col.retain(|(_, c)| !c.is_zero());
                        if !col.is_empty() {
                            out.rels.push(clear_col(&col));
                        }
                    }
                }
            } else {
                if s >= 1 {
                    // sliding relations across the module interface
                    for j in 1..=n {
                        let rel_poly =
                            self.maps.eta_r_through[s - 1][j - 1].into_shape(&self.shape);
                        let dj = self.ctx().gen_degree(j);
                        let vj = Mono::gen(&md.shape, SlotKind::V, j).unwrap();
                        for b in mults(degree - dj, self) {
                            let (mm, g) = b.module.clone().unwrap();
                            let prod = mul_into(&rel_poly, &b.ring, &self.shape);
                            let mut col = self.expand(&out, &prod, Some(&(mm.clone(), g)));
                            if let Some(shifted) = mm.try_mul(&vj, &md.shape) {
                                let be = BasisElem {
                                    ring: b.ring.clone(),
                                    module: Some((shifted, g)),
                                };
                                if let Some(i) = out.index_of(&be) {
                                    push_coord(&mut col, i, -Scalar::one());
                                }
                            }
                            if !col.is_empty() {
                                out.rels.push(clear_col(&col));
                            }
                        }
                    }
                }
                // module relation rows translated by ring and module
                // monomials
                for row in &md.rels {
                    let Some(rd) = md.rel_degree(row) else {
                        continue;
                    };
                    for (mring, mmod) in self.pairs(degree - rd) {
                        let mmod = mmod.unwrap();
                        let mut col: Vec<(usize, Scalar)> = Vec::new();
                        for (k, pk) in row.iter().enumerate() {
                            for (nu, c) in &pk.terms {
                                if let Some(shifted) = mmod.try_mul(nu, &md.shape) {
                                    let be = BasisElem {
                                        ring: mring.clone(),
                                        module: Some((shifted, k)),
                                    };
                                    if let Some(i) = out.index_of(&be) {
                                        push_coord(&mut col, i, c.clone());
                                    }
                                }
                            }
                        }
                        col.retain(|(_, c)| !c.is_zero());
                        if !col.is_empty() {
                            out.rels.push(clear_col(&col));
                        }
                    }
                }
            }
        }
        out
    }
}

fn push_coord(col: &mut Vec<(usize, Scalar)>, i: usize, c: Scalar) {
    for (j, x) in col.iter_mut() {
        if *j == i {
            *x = &*x + &c;
            return;
        }
    }
    col.push((i, c));
}

fn mul_into(poly: &Poly, m: &Mono, shape: &Arc<RingShape>) -> Poly {
    let mut out = Poly::zero(shape);
    for (w, c) in &poly.terms {
        if let Some(prod) = w.try_mul(m, shape) {
            out.add_term(prod, c.clone());
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn enum_rec(
    degs: &[i64],
    inv: &[bool],
    dead: &[bool],
    slot: usize,
    target: i64,
    pos_budget: i64,
    neg_budget: i64,
    cur: &mut Vec<i32>,
    emit: &mut dyn FnMut(&[i32]),
) {
    if slot == degs.len() {
        if target == 0 {
            emit(cur);
        }
        return;
    }
    if target > pos_budget || target < -neg_budget {
        return;
    }
    let d = degs[slot];
    debug_assert!(d > 0);
    let (emin, emax) = if dead[slot] {
        (0i64, 0i64)
    } else {
        let emax = pos_budget / d;
        let emin = if inv[slot] { -(neg_budget / d) } else { 0 };
        (emin, emax)
    };
    for e in emin..=emax {
        let (np, nn) = if e >= 0 {
            (pos_budget - e * d, neg_budget)
        } else {
            (pos_budget, neg_budget + e * d)
        };
        cur[slot] = e as i32;
        enum_rec(degs, inv, dead, slot + 1, target - e * d, np, nn, cur, emit);
    }
    cur[slot] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::TruncationContext;
    use crate::fgl::StructureMaps;
    use crate::poly::parse_poly;

    fn maps2() -> Arc<StructureMaps> {
        StructureMaps::new(Arc::new(TruncationContext::desk(2))).unwrap()
    }

    #[test]
    fn bp_ring_slices_are_free() {
        let maps = maps2();
        // Gamma = A[t] slices: degree 2 at p=2 has v1, t1
        let t = TensorCtx::new(&maps, Algebra::bp(), vec![Algebra::bp()], None);
        let s2 = t.slice(2);
        assert_eq!(s2.basis.len(), 2);
        assert!(s2.rels.is_empty());
        assert_eq!(s2.group(), GradedGroup::free(2));
        // degree 4: v1^2, v1 t1, t1^2
        assert_eq!(t.slice(4).basis.len(), 3);
        // odd degrees vanish
        assert!(t.slice(3).basis.is_empty());
    }

    #[test]
    fn gamma_e1_kills_eta_r_v2() {
        let maps = maps2();
        let ctx = maps.ctx.clone();
        let e1 = Algebra::en(1, &ctx);
        let t = TensorCtx::new(&maps, e1.clone(), vec![e1.clone()], None);
        let s6 = t.slice(6);
        // eta_R(v_2) pushed to E(1) flags must be zero in the quotient
        let sh = t.shape.clone();
        let eta2 = maps.eta_r[1].into_shape(&sh);
        assert!(!eta2.is_zero());
        let vec = t.expand(&s6, &eta2, None);
        let st = s6.staircase();
        assert!(st.contains(&clear_col(&vec)));
        // but t_2 itself is nonzero in Gamma_E(1)
        let t2 = parse_poly(&sh, "t2").unwrap();
        let vec2 = t.expand(&s6, &t2, None);
        assert!(!st.contains(&clear_col(&vec2)));
    }

    #[test]
    fn module_slices_of_bp_mod_i2() {
        let maps = maps2();
        let ctx = maps.ctx.clone();
        // BP/(2, v1): one generator, relations 2*g and v1*g
        let shape_a = RingShape::bp(ctx.clone());
        let md = ModuleData::new(
            &ctx,
            Algebra::bp(),
            vec![0],
            vec![
                vec![parse_poly(&shape_a, "2").unwrap()],
                vec![parse_poly(&shape_a, "v1").unwrap()],
            ],
        );
        let t = TensorCtx::module_only(&maps, &md);
        // degree 0: Z/2; degree 2: v1 g is killed: 0; degree 6: v2 g: Z/2
        assert_eq!(t.slice(0).group(), GradedGroup::from_divisors(&[1], 0));
        assert!(t.slice(2).is_zero_module());
        assert_eq!(t.slice(6).group(), GradedGroup::from_divisors(&[1], 0));
    }

    #[test]
    fn periodic_module_slices() {
        let maps = maps2();
        let ctx = maps.ctx.clone();
        let e1 = Algebra::en(1, &ctx);
        // E(1)_* as a module over itself: rank 1 in every even degree
        let md = ModuleData::new(&ctx, e1, vec![0], vec![]);
        let t = TensorCtx::module_only(&maps, &md);
        assert_eq!(t.slice(0).group(), GradedGroup::free(1));
        assert_eq!(t.slice(-2).group(), GradedGroup::free(1));
        assert_eq!(t.slice(2).group(), GradedGroup::free(1));
        assert!(t.slice(1).is_zero_module());
    }

    #[test]
    fn rational_slice_drops_torsion() {
        let maps = maps2();
        let ctx = maps.ctx.clone();
        let q = Algebra::rational();
        let shape_q = RingShape::scalars(ctx.clone(), q.clone());
        // Q[v]/(2): the relation 2*g is a unit: module vanishes
        let md = ModuleData::new(
            &ctx,
            q,
            vec![0],
            vec![vec![parse_poly(&shape_q, "2").unwrap()]],
        );
        let t = TensorCtx::module_only(&maps, &md);
        assert!(t.slice(0).is_zero_module());
    }
}

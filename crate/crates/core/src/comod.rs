//! Finitely presented graded comodules: validation, primitives, torsion
//! subcomodules, the adjunction between base change and its right adjoint,
//! and the Landweber filtration.

use crate::algebra::{Algebra, Height};
use crate::context::WindowStamp;
use crate::fgl::StructureMaps;
use crate::hopf::{base_change, bp_algebroid, HopfAlgebroid};
use crate::poly::Poly;
use crate::report::GradedTable;
use crate::ring::{Mono, RingShape, SlotKind};
use crate::scalar::Scalar;
use crate::slice::{clear_col, kernel_subquotient, BasisElem, ModuleData, Slice, SubQuot, TensorCtx};
use crate::smith::{kernel_combos_tracked, SparseCol, Staircase};
use crate::{Error, Result};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use std::sync::Arc;

/// A finitely presented graded comodule over `(B, Gamma_B)`.
#[derive(Clone, Debug)]
pub struct ComodulePresentation {
    pub maps: Arc<StructureMaps>,
    pub base: Algebra,
    pub gen_names: Vec<String>,
    pub module: ModuleData,
    /// Coaction matrix: `psi(g_i) = sum_j gamma[i][j] (x) g_j`, entries in
    /// `Gamma_B`, homogeneous of degree `|g_i| - |g_j|`.
    pub coaction: Vec<Vec<Poly>>,
}

impl ComodulePresentation {
    /// `B/J` for an ideal with scalar generators, coaction `psi(1) = 1(x)1`.
    pub fn quotient(
        maps: &Arc<StructureMaps>,
        base: Algebra,
        ideal: Vec<Poly>,
    ) -> Result<Self> {
        base.validate(&maps.ctx)?;
        let module = ModuleData::new(
            &maps.ctx,
            base.clone(),
            vec![0],
            ideal.into_iter().map(|p| vec![p]).collect(),
        );
        let gshape = RingShape::gamma(maps.ctx.clone(), base.clone(), 1);
        Ok(ComodulePresentation {
            maps: maps.clone(),
            base,
            gen_names: vec!["1".into()],
            module,
            coaction: vec![vec![Poly::one(&gshape)]],
        })
    }

    /// `B` itself (or a shift of it).
    pub fn free(maps: &Arc<StructureMaps>, base: Algebra, shift: i64) -> Result<Self> {
        let mut m = Self::quotient(maps, base, Vec::new())?;
        m.module.gen_degrees[0] = shift;
        Ok(m)
    }

    /// Quotient `B/I_k` by the invariant prime ideal.
    pub fn mod_ik(maps: &Arc<StructureMaps>, base: Algebra, k: usize) -> Result<Self> {
        let shape = RingShape::scalars(maps.ctx.clone(), base.clone());
        let mut ideal = Vec::new();
        for i in 0..k {
            if i == 0 {
                ideal.push(Poly::constant(&shape, Scalar::from_int(maps.ctx.p as i64)));
            } else if base.alive(i) {
                ideal.push(Poly::gen(&shape, SlotKind::V, i).unwrap());
            }
        }
        Self::quotient(maps, base, ideal)
    }

    pub fn direct_sum(&self, other: &ComodulePresentation) -> ComodulePresentation {
        assert_eq!(self.base, other.base, "direct sum over one base");
        let gshape = RingShape::gamma(self.maps.ctx.clone(), self.base.clone(), 1);
        let n1 = self.module.gen_degrees.len();
        let n2 = other.module.gen_degrees.len();
        let mut gen_degrees = self.module.gen_degrees.clone();
        gen_degrees.extend(other.module.gen_degrees.iter().copied());
        let zero_row1 = vec![Poly::zero(&self.module.shape); n1];
        let zero_row2 = vec![Poly::zero(&self.module.shape); n2];
        let mut rels = Vec::new();
        for r in &self.module.rels {
            let mut row = r.clone();
            row.extend(zero_row2.iter().cloned());
            rels.push(row);
        }
        for r in &other.module.rels {
            let mut row = zero_row1.clone();
            row.extend(r.iter().cloned());
            rels.push(row);
        }
        let mut coaction = Vec::new();
        for (i, row) in self.coaction.iter().enumerate() {
            let mut r = row.clone();
            r.extend(vec![Poly::zero(&gshape); n2]);
            coaction.push(r);
            let _ = i;
        }
        for row in &other.coaction {
            let mut r = vec![Poly::zero(&gshape); n1];
            r.extend(row.iter().cloned());
            coaction.push(r);
        }
        let mut names = self.gen_names.clone();
        names.extend(other.gen_names.iter().map(|n| format!("{n}'")));
        ComodulePresentation {
            maps: self.maps.clone(),
            base: self.base.clone(),
            gen_names: names,
            module: ModuleData::new(&self.maps.ctx, self.base.clone(), gen_degrees, rels),
            coaction,
        }
    }

    /// Shift all generator degrees by `t` (the suspension `s^t`).
    pub fn shift(&self, t: i64) -> ComodulePresentation {
        let mut out = self.clone();
        for d in out.module.gen_degrees.iter_mut() {
            *d += t;
        }
        out
    }

    pub fn gens(&self) -> usize {
        self.module.gen_degrees.len()
    }

    pub fn algebroid(&self) -> HopfAlgebroid {
        let h = bp_algebroid(&self.maps);
        if self.base == Algebra::bp() {
            h
        } else {
            base_change(&h, &self.base).expect("validated base").0
        }
    }

    pub fn m_ctx(&self) -> TensorCtx<'_> {
        TensorCtx::module_only(&self.maps, &self.module)
    }

    /// `Gamma_B (x)_B M`.
    pub fn gm_ctx(&self) -> TensorCtx<'_> {
        TensorCtx::new(
            &self.maps,
            self.base.clone(),
            vec![self.base.clone()],
            Some(&self.module),
        )
    }

    /// `Gamma_B (x)_B Gamma_B (x)_B M`.
    pub fn ggm_ctx(&self) -> TensorCtx<'_> {
        TensorCtx::new(
            &self.maps,
            self.base.clone(),
            vec![self.base.clone(), self.base.clone()],
            Some(&self.module),
        )
    }

    /// Module monomial as a leg-0 scalar monomial of a tensor shape.
    fn ring_mono(&self, shape: &Arc<RingShape>, mu: &Mono) -> Option<Mono> {
        let mut e = vec![0i32; shape.num_slots()];
        for (s, &x) in mu.0.iter().enumerate() {
            if x == 0 {
                continue;
            }
            let (kind, idx) = self.module.shape.slot_kind(s);
            debug_assert_eq!(kind, SlotKind::V);
            e[shape.slot_of(SlotKind::V, idx)?] = x;
        }
        let m = Mono(e.into());
        m.admissible(shape).then_some(m)
    }

    /// Coaction coordinates of the basis element `(mu, g)` of `M_d` inside
    /// the slice of `Gamma_B (x) M`: `eta_L(mu) sum_j gamma[g][j] (x) g_j`.
    pub fn psi_coords(
        &self,
        gm: &TensorCtx,
        slice: &Slice,
        mu: &Mono,
        g: usize,
    ) -> Vec<(usize, Scalar)> {
        let unit = Mono::unit(&self.module.shape);
        let mut out: BTreeMap<usize, Scalar> = BTreeMap::new();
        let Some(scalar) = self.ring_mono(&gm.shape, mu) else {
            return Vec::new();
        };
        for (j, gamma) in self.coaction[g].iter().enumerate() {
            if gamma.is_zero() {
                continue;
            }
            let mut shifted = Poly::zero(&gm.shape);
            for (w, c) in &gamma.into_shape(&gm.shape).terms {
                if let Some(m) = w.try_mul(&scalar, &gm.shape) {
                    shifted.add_term(m, c.clone());
                }
            }
            for (i, c) in gm.expand(slice, &shifted, Some(&(unit.clone(), j))) {
                let e = out.entry(i).or_insert_with(Scalar::zero);
                *e = &*e + &c;
            }
        }
        out.into_iter().filter(|(_, c)| !c.is_zero()).collect()
    }

    /// `1 (x) -` coordinates: the right-unit image of the module monomial.
    pub fn iota_coords(
        &self,
        gm: &TensorCtx,
        slice: &Slice,
        mu: &Mono,
        g: usize,
    ) -> Vec<(usize, Scalar)> {
        let unit = Mono::unit(&self.module.shape);
        let eta = gm.eta_image_of_module_mono(mu);
        gm.expand(slice, &eta, Some(&(unit, g)))
    }

    /// Whether every slice in the window vanishes.
    pub fn is_zero_windowwise(&self) -> bool {
        let ctx = &self.maps.ctx;
        let mc = self.m_ctx();
        let mut d = ctx.d_min;
        while d <= ctx.d_max {
            if !mc.slice(d).is_zero_module() {
                return false;
            }
            d += 1;
        }
        true
    }

    /// Graded groups of the underlying module over the window.
    pub fn graded_table(&self) -> GradedTable {
        let ctx = &self.maps.ctx;
        let mc = self.m_ctx();
        let mut t = GradedTable::new(ctx.stamp());
        for d in ctx.window() {
            t.set(d, mc.slice(d).group());
        }
        t
    }
}

/// Outcome of comodule validation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ComoduleReport {
    pub counit_ok: bool,
    pub coassociative_ok: bool,
    pub well_defined_ok: bool,
    pub passed: bool,
    pub first_failure: Option<String>,
    pub stamp: WindowStamp,
}

/// Check the comodule axioms degreewise in the window.
pub fn validate_comodule(m: &ComodulePresentation, lo: i64, hi: i64) -> ComoduleReport {
    let ctx = &m.maps.ctx;
    let hopf = m.algebroid();
    let mut first_failure = None;
    let gshape = RingShape::gamma(ctx.clone(), m.base.clone(), 1);

    // counit: eps(gamma_ij) = delta_ij
    let mut counit_ok = true;
    for i in 0..m.gens() {
        for j in 0..m.gens() {
            let e = hopf.counit(&m.coaction[i][j].into_shape(&gshape));
            let expect = if i == j {
                Poly::one(&e.shape)
            } else {
                Poly::zero(&e.shape)
            };
            // equality of scalars modulo nothing: the counit lands in B
            if e != expect {
                counit_ok = false;
                first_failure
                    .get_or_insert_with(|| format!("counit fails at gamma[{i}][{j}] = {e}"));
            }
        }
    }

    // coassociativity: Delta(gamma_ik) = sum_j gamma_ij (x) gamma_jk in
    // Gamma (x) Gamma (x) M, degreewise
    let mut coassociative_ok = true;
    let ggm = m.ggm_ctx();
    let unit = Mono::unit(&m.module.shape);
    'outer: for i in 0..m.gens() {
        // residual element of Gamma (x) Gamma (x) M for generator i
        let mut parts: Vec<(usize, Poly)> = Vec::new(); // per target gen k
        for k in 0..m.gens() {
            let lhs = hopf.apply_delta(&m.coaction[i][k].into_shape(&gshape));
            let mut rhs = Poly::zero(&lhs.shape);
            for j in 0..m.gens() {
                if m.coaction[i][j].is_zero() || m.coaction[j][k].is_zero() {
                    continue;
                }
                let left = m.coaction[i][j].into_shape(&lhs.shape);
                let right = place_second(&hopf, &m.coaction[j][k], &lhs.shape);
                rhs = rhs.add(&left.mul(&right));
            }
            let diff = lhs.sub(&rhs);
            if !diff.is_zero() {
                parts.push((k, diff));
            }
        }
        if parts.is_empty() {
            continue;
        }
        // group by degree and test membership in the relation lattice
        let mut degrees: std::collections::BTreeSet<i64> = Default::default();
        for (k, p) in &parts {
            for d in p.homogeneous_components().keys() {
                degrees.insert(d + m.module.gen_degrees[*k]);
            }
        }
        for d in degrees {
            if d < lo || d > hi {
                continue;
            }
            let slice = ggm.slice(d);
            let mut vec: BTreeMap<usize, Scalar> = BTreeMap::new();
            for (k, p) in &parts {
                let comp = p
                    .homogeneous_components()
                    .remove(&(d - m.module.gen_degrees[*k]));
                if let Some(comp) = comp {
                    for (ix, c) in ggm.expand(&slice, &comp, Some(&(unit.clone(), *k))) {
                        let e = vec.entry(ix).or_insert_with(Scalar::zero);
                        *e = &*e + &c;
                    }
                }
            }
            let v: Vec<(usize, Scalar)> =
                vec.into_iter().filter(|(_, c)| !c.is_zero()).collect();
            if !v.is_empty() && !slice.staircase().contains(&clear_col(&v)) {
                coassociative_ok = false;
                first_failure.get_or_insert_with(|| {
                    format!("coassociativity fails for {} in degree {d}", m.gen_names[i])
                });
                break 'outer;
            }
        }
    }

    // well-definedness: psi of every relation row lies in
    // Gamma (x) (relation submodule); since the Gamma (x) M slices already
    // quotient by the relation lattice, the image must vanish there
    let mut well_defined_ok = true;
    let gm = m.gm_ctx();
    'rows: for row in &m.module.rels {
        let Some(rd) = m.module.rel_degree(row) else {
            continue;
        };
        if rd < lo || rd > hi {
            continue;
        }
        let slice = gm.slice(rd);
        let mut vec: BTreeMap<usize, Scalar> = BTreeMap::new();
        for (j, pj) in row.iter().enumerate() {
            for (mu, c) in &pj.terms {
                for (ix, cc) in m.psi_coords(&gm, &slice, mu, j) {
                    let e = vec.entry(ix).or_insert_with(Scalar::zero);
                    *e = &*e + &(&cc * c);
                }
            }
        }
        let v: Vec<(usize, Scalar)> = vec.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        if !v.is_empty() && !slice.staircase().contains(&clear_col(&v)) {
            well_defined_ok = false;
            first_failure
                .get_or_insert_with(|| format!("coaction not defined on relation of degree {rd}"));
            break 'rows;
        }
    }

    let passed = counit_ok && coassociative_ok && well_defined_ok;
    let mut stamp = ctx.stamp();
    stamp.d_min = lo;
    stamp.d_max = hi;
    ComoduleReport {
        counit_ok,
        coassociative_ok,
        well_defined_ok,
        passed,
        first_failure,
        stamp,
    }
}

/// Place a `Gamma_B` element as the second tensor factor: scalars slide
/// through the right unit of block 1.
fn place_second(hopf: &HopfAlgebroid, x: &Poly, shape2: &Arc<RingShape>) -> Poly {
    x.substitute(shape2, &|kind, idx| match kind {
        SlotKind::V => Some(hopf.maps.eta_r_through[0][idx - 1].into_shape(shape2)),
        SlotKind::T { block: 1 } => Poly::gen(shape2, SlotKind::T { block: 2 }, idx),
        _ => None,
    })
    .expect("tensor placement")
}

/// Primitive subspace `{x in M_d : psi(x) = 1 (x) x}` as a subquotient.
pub fn primitives(m: &ComodulePresentation, d: i64) -> Result<SubQuot> {
    m.maps.ctx.require_in_window(d)?;
    let mc = m.m_ctx();
    let gm = m.gm_ctx();
    let src = mc.slice(d);
    let tgt = gm.slice(d);
    let cols: Vec<Vec<(usize, Scalar)>> = src
        .basis
        .iter()
        .map(|b| {
            let (mu, g) = b.module.as_ref().unwrap();
            let psi = m.psi_coords(&gm, &tgt, mu, *g);
            let iota = m.iota_coords(&gm, &tgt, mu, *g);
            sub_coords(psi, iota)
        })
        .collect();
    Ok(kernel_subquotient(&src, &cols, &tgt))
}

/// Graded primitives table over the window.
pub fn primitives_table(m: &ComodulePresentation) -> Result<GradedTable> {
    let ctx = &m.maps.ctx;
    let mut t = GradedTable::new(ctx.stamp());
    for d in ctx.window() {
        t.set(d, primitives(m, d)?.group);
    }
    Ok(t)
}

fn sub_coords(
    a: Vec<(usize, Scalar)>,
    b: Vec<(usize, Scalar)>,
) -> Vec<(usize, Scalar)> {
    let mut out: BTreeMap<usize, Scalar> = a.into_iter().collect();
    for (i, c) in b {
        let e = out.entry(i).or_insert_with(Scalar::zero);
        *e = &*e - &c;
    }
    out.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

/// The `v_n`-torsion subcomodule, degreewise, with the two windowed
/// characterizations compared.
#[derive(Clone, Debug)]
pub struct TorsionReport {
    /// Generating vectors of the torsion submodule per degree.
    pub gens_by_degree: BTreeMap<i64, Vec<SparseCol>>,
    pub groups: GradedTable,
    /// Whole module is `v_n`-torsion in the window.
    pub is_vn_torsion: bool,
    /// The `v_n`-power and `I_{n+1}`-power characterizations agree.
    pub characterizations_agree: bool,
}

/// Elements of `M_d` killed by a window-testable power of `v_n`.
fn power_torsion_gens(m: &ComodulePresentation, n: usize, d: i64) -> Vec<SparseCol> {
    let ctx = &m.maps.ctx;
    let mc = m.m_ctx();
    let src = mc.slice(d);
    if src.basis.is_empty() {
        return Vec::new();
    }
    let dv = ctx.gen_degree(n);
    // largest testable power within the monomial bounds
    let kmax = if n == 0 {
        // p-power torsion stays in one degree: the torsion subgroup
        32
    } else {
        (((ctx.mono_pos - d.max(0)) / dv).max(0) as u32).min(24)
    };
    let mut best: Vec<SparseCol> = Vec::new();
    let vn = if n == 0 {
        None
    } else {
        Some(Mono::gen(&m.module.shape, SlotKind::V, n).unwrap())
    };
    let mut k = 1u32;
    while k <= kmax {
        let td = d + dv * k as i64;
        let tgt = mc.slice(td);
        let cols: Vec<Vec<(usize, Scalar)>> = src
            .basis
            .iter()
            .map(|b| {
                let (mu, g) = b.module.as_ref().unwrap();
                let image = match &vn {
                    None => Some(mu.clone()),
                    Some(v) => {
                        let mut cur = Some(mu.clone());
                        for _ in 0..k {
                            cur = cur.and_then(|m0| m0.try_mul(v, &m.module.shape));
                        }
                        cur
                    }
                };
                let coeff = if n == 0 {
                    Scalar::from_int((ctx.p as i64).pow(k))
                } else {
                    Scalar::one()
                };
                image
                    .and_then(|mm| {
                        tgt.index_of(&BasisElem {
                            ring: Mono::unit(&mc.shape),
                            module: Some((mm, *g)),
                        })
                    })
                    .map(|i| vec![(i, coeff)])
                    .unwrap_or_default()
            })
            .collect();
        let sq = kernel_subquotient(&src, &cols, &tgt);
        if sq.gens.len() == best.len() && k > 1 {
            // stabilized
            return sq.gens;
        }
        best = sq.gens;
        k += 1;
        if n == 0 {
            // one pass at a high power suffices for p-torsion
            if k > 24 {
                break;
            }
        }
    }
    best
}

pub fn torsion_submodule(m: &ComodulePresentation, n: usize) -> Result<TorsionReport> {
    let ctx = &m.maps.ctx;
    let mc = m.m_ctx();
    let mut gens_by_degree = BTreeMap::new();
    let mut groups = GradedTable::new(ctx.stamp());
    let mut is_all = true;
    let mut agree = true;
    for d in ctx.window() {
        let src = mc.slice(d);
        if src.basis.is_empty() {
            continue;
        }
        let vn_gens = power_torsion_gens(m, n, d);
        // I_{n+1}-power torsion: intersection of the v_i-power torsions
        let mut inter: Option<Vec<SparseCol>> = None;
        for i in 0..=n {
            let gi = power_torsion_gens(m, i, d);
            inter = Some(match inter {
                None => gi,
                Some(prev) => intersect_submodules(&prev, &gi, &src),
            });
        }
        let i_gens = inter.unwrap_or_default();
        let g_v = crate::slice::subquotient_group(&vn_gens, &src.rels, src.prime, src.rational);
        let g_i = crate::slice::subquotient_group(&i_gens, &src.rels, src.prime, src.rational);
        if g_v != g_i {
            agree = false;
        }
        let full = src.group();
        if g_v != full {
            is_all = false;
        }
        groups.set(d, g_v);
        gens_by_degree.insert(d, vn_gens);
    }
    Ok(TorsionReport {
        gens_by_degree,
        groups,
        is_vn_torsion: is_all,
        characterizations_agree: agree,
    })
}

/// Intersection of two submodules given by generators, inside a slice.
fn intersect_submodules(a: &[SparseCol], b: &[SparseCol], slice: &Slice) -> Vec<SparseCol> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    // x in span(a) and x in span(b) mod rels: solve a*s = b*t + rels
    let mut cols: Vec<SparseCol> = a.to_vec();
    cols.extend(b.iter().cloned());
    cols.extend(slice.rels.iter().cloned());
    let combos = kernel_combos_tracked(cols, a.len() + b.len(), slice.prime, slice.rational);
    let mut out = Vec::new();
    for combo in combos {
        // reconstruct the a-part of the combination
        let mut x: BTreeMap<u32, BigInt> = BTreeMap::new();
        for (i, c) in &combo {
            if (*i as usize) < a.len() {
                for (r, v) in &a[*i as usize] {
                    let e = x.entry(*r).or_default();
                    *e += c * v;
                }
            }
        }
        let col: SparseCol = x.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        if !col.is_empty() {
            out.push(col);
        }
    }
    out
}

/// `Phi_* M = B' (x)_B M` along a catalog map: push the presentation.
pub fn phi_lower(m: &ComodulePresentation, target: &Algebra) -> Result<ComodulePresentation> {
    target.validate(&m.maps.ctx)?;
    if !crate::hopf::catalog_map_exists(&m.base, target) {
        return Err(Error::NoCatalogMap(
            m.base.display_name(),
            target.display_name(),
        ));
    }
    let shape = RingShape::scalars(m.maps.ctx.clone(), target.clone());
    let gshape = RingShape::gamma(m.maps.ctx.clone(), target.clone(), 1);
    let rels = m
        .module
        .rels
        .iter()
        .map(|row| row.iter().map(|p| p.into_shape(&shape)).collect())
        .collect();
    Ok(ComodulePresentation {
        maps: m.maps.clone(),
        base: target.clone(),
        gen_names: m.gen_names.clone(),
        module: ModuleData::new(
            &m.maps.ctx,
            target.clone(),
            m.module.gen_degrees.clone(),
            rels,
        ),
        coaction: m
            .coaction
            .iter()
            .map(|row| row.iter().map(|p| p.into_shape(&gshape)).collect())
            .collect(),
    })
}

/// One stage of a Landweber filtration: the subcomodule generated by the
/// recorded primitive is `s^shift B/I_ideal`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct FiltrationStage {
    pub shift: i64,
    pub ideal: usize,
    pub witness: String,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct FiltrationRecord {
    pub stages: Vec<FiltrationStage>,
    pub complete: bool,
    pub stamp: WindowStamp,
}

/// The Landweber filtration algorithm: find the lowest-degree primitive,
/// minimize its annihilator by multiplying with `p` and the `v_i`, split
/// off the cyclic subcomodule, recurse on the quotient.
pub fn landweber_filtration(
    m: &ComodulePresentation,
    stage_bound: usize,
) -> Result<FiltrationRecord> {
    let ctx = &m.maps.ctx;
    let height = m.base.height(ctx);
    let hmax = match height {
        Height::Finite(n) => n,
        Height::InfiniteUpTo(n) => n,
    };
    let mut work = m.clone();
    let mut stages = Vec::new();
    let trace = std::env::var("CHROMATIC_TRACE").is_ok();
    for _stage in 0..stage_bound {
        if trace {
            eprintln!("[filtration] stage {} start", stages.len());
        }
        if work.is_zero_windowwise() {
            let mut stamp = ctx.stamp();
            stamp.overridden |= ctx.overridden;
            return Ok(FiltrationRecord {
                stages,
                complete: true,
                stamp,
            });
        }
        // lowest-degree nonzero primitive, lexicographically least
        let mut found: Option<(i64, SparseCol)> = None;
        for d in ctx.window() {
            let prim = primitives(&work, d)?;
            if prim.gens.is_empty() || prim.group.is_trivial() {
                continue;
            }
            // prefer a generator that is not p-divisible in M_d
            let mc = work.m_ctx();
            let slice = mc.slice(d);
            let pick = prim
                .gens
                .iter()
                .find(|g| !p_divisible(g, &slice))
                .unwrap_or(&prim.gens[0])
                .clone();
            found = Some((d, pick));
            break;
        }
        if trace {
            eprintln!("[filtration] primitive search done: {:?}", found.as_ref().map(|f| f.0));
        }
        let Some((d, mut y)) = found else {
            // nonzero module without primitives inside the window
            return Err(Error::WindowInsufficient(
                "no primitive found for a nonzero comodule".into(),
                ctx.d_min,
                ctx.d_max,
            ));
        };
        let mut deg = d;
        // minimize the annihilator
        let mut ideal = 0usize;
        for k in 0..=hmax {
            if trace {
                eprintln!("[filtration] minimizing with k = {k}, deg = {deg}");
            }
            let (killed, min_power, moved) = minimal_killing_power(&work, &y, deg, k)?;
            if !killed {
                break;
            }
            ideal = k + 1;
            if min_power > 1 {
                y = moved;
                deg += ctx.gen_degree(k) * (min_power as i64 - 1);
            }
        }
        let witness = describe_vector(&work, &y, deg);
        // a periodicity of the base makes the shift well-defined only
        // modulo the degree of the smallest inverted generator acting
        // invertibly on B/I_ideal
        let mut shift = deg;
        if let Some(&n) = work.base.invert.iter().find(|&&n| n >= ideal && n > 0) {
            let period = ctx.gen_degree(n);
            shift = shift.rem_euclid(period);
        }
        stages.push(FiltrationStage {
            shift,
            ideal,
            witness,
        });
        // quotient by the subcomodule B*y: one relation row per
        // window-representable translate along inverted generators
        for (ty, tdeg) in inverted_translates(&work, &y, deg) {
            let row = vector_as_row(&work, &ty, tdeg);
            work.module.rels.push(row);
        }
    }
    Err(Error::StageBound(stage_bound))
}

/// All translates `v_n^j y` along inverted generators that stay
/// window-representable (including `j = 0`); a single relation row cannot
/// reach the far end of the window, so the quotient presentation lists
/// them all.
fn inverted_translates(
    m: &ComodulePresentation,
    y: &SparseCol,
    deg: i64,
) -> Vec<(SparseCol, i64)> {
    let ctx = &m.maps.ctx;
    let mut out = vec![(y.clone(), deg)];
    for &n in &m.base.invert {
        if n == 0 {
            continue;
        }
        let dv = ctx.gen_degree(n);
        let mut layer = out.clone();
        let mut extended = Vec::new();
        // upward translates
        for dir in [1i64, -1] {
            for (ty, tdeg) in &layer {
                let mut cur = ty.clone();
                let mut cur_deg = *tdeg;
                loop {
                    let next_deg = cur_deg + dir * dv;
                    if next_deg > ctx.d_max + dv || next_deg < ctx.d_min - dv {
                        break;
                    }
                    let Ok(next) = translate_vector(m, &cur, cur_deg, n, dir) else {
                        break;
                    };
                    if next.is_empty() {
                        break;
                    }
                    extended.push((next.clone(), next_deg));
                    cur = next;
                    cur_deg = next_deg;
                }
            }
        }
        out.append(&mut extended);
        let _ = &mut layer;
    }
    out
}

/// `v_n^{dir} x` on module vectors (`dir` is 1 or -1).
fn translate_vector(
    m: &ComodulePresentation,
    v: &SparseCol,
    deg: i64,
    n: usize,
    dir: i64,
) -> Result<SparseCol> {
    let ctx = &m.maps.ctx;
    let mc = m.m_ctx();
    let src = mc.slice(deg);
    let tgt = mc.slice(deg + dir * ctx.gen_degree(n));
    let vn = Mono::gen(&m.module.shape, SlotKind::V, n)
        .unwrap()
        .try_pow(dir as i32, &m.module.shape)
        .ok_or_else(|| Error::NegativeExponent(format!("v{n}")))?;
    let mut out: BTreeMap<u32, BigInt> = BTreeMap::new();
    for (i, c) in v {
        let b = &src.basis[*i as usize];
        let (mu, g) = b.module.as_ref().unwrap();
        if let Some(mm) = mu.try_mul(&vn, &m.module.shape) {
            if let Some(ix) = tgt.index_of(&BasisElem {
                ring: Mono::unit(&mc.shape),
                module: Some((mm, *g)),
            }) {
                let e = out.entry(ix as u32).or_default();
                *e += c;
            }
        }
    }
    Ok(out.into_iter().filter(|(_, x)| !x.is_zero()).collect())
}

/// Whether `v_k` kills the element after some minimal power; returns the
/// power and the moved element `v_k^{power-1} y`.
fn minimal_killing_power(
    m: &ComodulePresentation,
    y: &SparseCol,
    deg: i64,
    k: usize,
) -> Result<(bool, u32, SparseCol)> {
    let ctx = &m.maps.ctx;
    let mc = m.m_ctx();
    let dv = ctx.gen_degree(k);
    let mut cur = y.clone();
    let mut cur_deg = deg;
    let mut power = 0u32;
    loop {
        // is cur zero?
        let slice = mc.slice(cur_deg);
        if slice.staircase().contains(&cur) {
            return Ok((true, power, prev_nonzero(m, y, deg, k, power)?));
        }
        if power > 40 || (k > 0 && cur_deg + dv > ctx.d_max) {
            return Ok((false, 0, cur));
        }
        cur = multiply_vector(m, &cur, cur_deg, k)?;
        cur_deg += dv;
        power += 1;
        if k == 0 && power > 40 {
            return Ok((false, 0, cur));
        }
    }
}

fn prev_nonzero(
    m: &ComodulePresentation,
    y: &SparseCol,
    deg: i64,
    k: usize,
    power: u32,
) -> Result<SparseCol> {
    let mut cur = y.clone();
    let mut cur_deg = deg;
    for _ in 1..power {
        cur = multiply_vector(m, &cur, cur_deg, k)?;
        cur_deg += m.maps.ctx.gen_degree(k);
    }
    Ok(cur)
}

/// Multiply an `M_d` vector by `v_k` (or `p` for `k = 0`).
fn multiply_vector(
    m: &ComodulePresentation,
    v: &SparseCol,
    deg: i64,
    k: usize,
) -> Result<SparseCol> {
    let ctx = &m.maps.ctx;
    let mc = m.m_ctx();
    let src = mc.slice(deg);
    let tgt = mc.slice(deg + ctx.gen_degree(k));
    let vk = if k == 0 {
        None
    } else {
        Some(Mono::gen(&m.module.shape, SlotKind::V, k).unwrap())
    };
    let mut out: BTreeMap<u32, BigInt> = BTreeMap::new();
    for (i, c) in v {
        let b = &src.basis[*i as usize];
        let (mu, g) = b.module.as_ref().unwrap();
        let image = match &vk {
            None => Some(mu.clone()),
            Some(w) => mu.try_mul(w, &m.module.shape),
        };
        if let Some(mm) = image {
            if let Some(ix) = tgt.index_of(&BasisElem {
                ring: Mono::unit(&mc.shape),
                module: Some((mm, *g)),
            }) {
                let e = out.entry(ix as u32).or_default();
                *e += if k == 0 { c * ctx.p } else { c.clone() };
            }
        }
    }
    Ok(out.into_iter().filter(|(_, x)| !x.is_zero()).collect())
}

fn p_divisible(v: &SparseCol, slice: &Slice) -> bool {
    // x = p*z mod rels solvable?
    let mut cols: Vec<SparseCol> = slice
        .basis
        .iter()
        .enumerate()
        .map(|(i, _)| vec![(i as u32, BigInt::from(slice.prime))])
        .collect();
    cols.extend(slice.rels.iter().cloned());
    let st = Staircase::new(cols, slice.prime, slice.rational, false);
    st.contains(v)
}

fn vector_as_row(m: &ComodulePresentation, v: &SparseCol, deg: i64) -> Vec<Poly> {
    let mc = m.m_ctx();
    let slice = mc.slice(deg);
    let mut row = vec![Poly::zero(&m.module.shape); m.gens()];
    for (i, c) in v {
        let b = &slice.basis[*i as usize];
        let (mu, g) = b.module.as_ref().unwrap();
        row[*g].add_term(mu.clone(), Scalar::from_bigint(c.clone()));
    }
    row
}

fn describe_vector(m: &ComodulePresentation, v: &SparseCol, deg: i64) -> String {
    let row = vector_as_row(m, v, deg);
    let parts: Vec<String> = row
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(g, p)| format!("({})*{}", p, m.gen_names[g]))
        .collect();
    parts.join(" + ")
}

/// `F_p`-dimension of `M_d (x) F_p`.
pub fn fp_dim(m: &ComodulePresentation, d: i64) -> usize {
    let mc = m.m_ctx();
    let slice = mc.slice(d);
    slice.group().fp_dim()
}

impl FiltrationRecord {
    /// Minimal ideal index occurring, for torsion-theory classification.
    pub fn min_ideal(&self) -> Option<usize> {
        self.stages.iter().map(|s| s.ideal).min()
    }
}

/// Classify the hereditary torsion theory generated by a nonzero finitely
/// presented comodule: `n = (minimal filtration ideal) - 1`.
pub fn classify_torsion_theory(m: &ComodulePresentation, stage_bound: usize) -> Result<i64> {
    if m.is_zero_windowwise() {
        return Err(Error::ZeroComodule);
    }
    let filt = landweber_filtration(m, stage_bound)?;
    let j = filt.min_ideal().expect("nonzero comodule has stages");
    Ok(j as i64 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::TruncationContext;
    use crate::poly::parse_poly;

    fn maps2() -> Arc<StructureMaps> {
        StructureMaps::new(Arc::new(TruncationContext::desk(2))).unwrap()
    }

    fn bp_mod(maps: &Arc<StructureMaps>, gens: &[&str]) -> ComodulePresentation {
        let shape = RingShape::bp(maps.ctx.clone());
        let ideal = gens
            .iter()
            .map(|g| parse_poly(&shape, g).unwrap())
            .collect();
        ComodulePresentation::quotient(maps, Algebra::bp(), ideal).unwrap()
    }

    #[test]
    fn validation_examples() {
        let maps = maps2();
        // BP/I_2 is a comodule
        let m = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 2).unwrap();
        let r = validate_comodule(&m, 0, 20);
        assert!(r.passed, "{:?}", r.first_failure);
        // BP/(v_2) is not: eta_R(v_2) has t-terms mod (v_2)
        let bad = bp_mod(&maps, &["v2"]);
        let r = validate_comodule(&bad, 0, 20);
        assert!(!r.passed && !r.well_defined_ok);
        // BP/(p, v_1^2) is: eta_R(v_1^2) = v_1^2 mod (p)
        let good = bp_mod(&maps, &["p", "v1^2"]);
        let r = validate_comodule(&good, 0, 20);
        assert!(r.passed, "{:?}", r.first_failure);
    }

    #[test]
    fn primitive_examples() {
        let maps = maps2();
        // BP_*: Z_(p) in degree 0, nothing in degree 2
        let bp = ComodulePresentation::free(&maps, Algebra::bp(), 0).unwrap();
        let p0 = primitives(&bp, 0).unwrap();
        assert_eq!(p0.group, crate::report::GradedGroup::free(1));
        let p2 = primitives(&bp, 2).unwrap();
        assert!(p2.group.is_trivial());
        // BP/I_1 at p=2: primitives in degree 2k are spanned by v_1^k
        let m = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 1).unwrap();
        for k in 0..=6i64 {
            let p = primitives(&m, 2 * k).unwrap();
            assert_eq!(p.group.fp_dim(), 1, "degree {}", 2 * k);
            assert_eq!(p.group.torsion, vec![1]);
        }
        // odd/mixed degrees vanish... degree 6 contains v_2 and t-free v_1^3
        // only the power of v_1 is primitive (checked by dimension above)
    }

    #[test]
    fn torsion_examples() {
        let maps = maps2();
        // T_1(BP/I_2) is everything
        let m = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 2).unwrap();
        let t = torsion_submodule(&m, 1).unwrap();
        assert!(t.is_vn_torsion);
        assert!(t.characterizations_agree);
        // T_1(BP) = 0
        let bp = ComodulePresentation::free(&maps, Algebra::bp(), 0).unwrap();
        let t = torsion_submodule(&bp, 1).unwrap();
        assert!(t.groups.is_zero());
        assert!(!t.is_vn_torsion);
        // componentwise on a direct sum: the second summand
        let sum = bp.direct_sum(&m);
        let t = torsion_submodule(&sum, 1).unwrap();
        assert!(!t.is_vn_torsion);
        let expect = m.graded_table();
        assert!(t.groups.same_groups(&expect));
    }

    #[test]
    fn phi_lower_examples() {
        let maps = maps2();
        let ctx = maps.ctx.clone();
        let e1 = Algebra::en(1, &ctx);
        // Phi_*(BP) over E(1) is E(1)
        let bp = ComodulePresentation::free(&maps, Algebra::bp(), 0).unwrap();
        let lowered = phi_lower(&bp, &e1).unwrap();
        let free_e1 = ComodulePresentation::free(&maps, e1.clone(), 0).unwrap();
        assert!(lowered.graded_table().same_groups(&free_e1.graded_table()));
        // Phi_*(BP/I_2) over E(1) is 0 (v_1 invertible and zero)
        let mi2 = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 2).unwrap();
        let z = phi_lower(&mi2, &e1).unwrap();
        assert!(z.is_zero_windowwise());
        // Phi_*(BP/I_1) over E(1) is E(1)/p
        let mi1 = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 1).unwrap();
        let l = phi_lower(&mi1, &e1).unwrap();
        let e1p = ComodulePresentation::mod_ik(&maps, e1.clone(), 1).unwrap();
        assert!(l.graded_table().same_groups(&e1p.graded_table()));
    }

    #[test]
    fn filtration_examples() {
        let maps = maps2();
        // BP/I_2: already cyclic with invariant prime annihilator
        let m = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 2).unwrap();
        let f = landweber_filtration(&m, 16).unwrap();
        assert!(f.complete);
        assert_eq!(f.stages.len(), 1);
        assert_eq!((f.stages[0].shift, f.stages[0].ideal), (0, 2));
        // BP/(p, v_1^2): two stages (2, I_2), (0, I_2)
        let m = bp_mod(&maps, &["p", "v1^2"]);
        let f = landweber_filtration(&m, 16).unwrap();
        assert!(f.complete);
        let profile: Vec<(i64, usize)> =
            f.stages.iter().map(|s| (s.shift, s.ideal)).collect();
        assert_eq!(profile, vec![(2, 2), (0, 2)]);
        // E(1)/p over E(1): single stage (0, I_1)
        let ctx = maps.ctx.clone();
        let e1 = Algebra::en(1, &ctx);
        let m = ComodulePresentation::mod_ik(&maps, e1, 1).unwrap();
        let f = landweber_filtration(&m, 16).unwrap();
        assert!(f.complete);
        assert_eq!(f.stages.len(), 1);
        assert_eq!((f.stages[0].shift, f.stages[0].ideal), (0, 1));
    }

    #[test]
    fn classification_examples() {
        let maps = maps2();
        let m = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 2).unwrap();
        assert_eq!(classify_torsion_theory(&m, 16).unwrap(), 1);
        let bp = ComodulePresentation::free(&maps, Algebra::bp(), 0).unwrap();
        assert_eq!(classify_torsion_theory(&bp, 16).unwrap(), -1);
        let m = bp_mod(&maps, &["p", "v1^2"]);
        assert_eq!(classify_torsion_theory(&m, 16).unwrap(), 1);
        // the zero comodule generates nothing
        let z = bp_mod(&maps, &["1"]);
        assert!(matches!(
            classify_torsion_theory(&z, 16),
            Err(Error::ZeroComodule)
        ));
        // shift invariance
        let m = ComodulePresentation::mod_ik(&maps, Algebra::bp(), 2)
            .unwrap()
            .shift(4);
        assert_eq!(classify_torsion_theory(&m, 16).unwrap(), 1);
    }
}

// ---------------------------------------------------------------------
// The right adjoint Phi^* and localization support.
//
// Gamma is free as a right A-module on the t-monomials, so
// `Gamma (x)_A X` is presented with no scalar slots: coordinates are
// pairs (t-monomial, X-coordinate), and left scalars rewrite rightward
// through `v = eta_R(v) - (eta_R(v) - v)`, whose correction terms all
// carry a t-factor.  Every graded level of `X` is first compressed to
// its quotient coordinates (free plus p-power torsion), which keeps all
// matrices in the adjoint computation small.

use crate::smith::{quotient_form, FColPub, QuotientForm};

/// Compressed graded levels of some `X`: quotient forms of the slices and
/// the generator actions conjugated into quotient coordinates.
pub(crate) struct CLevels {
    pub forms: BTreeMap<i64, QuotientForm>,
    /// `(i, d)`: columns over quotient coords of `X_d` into `X_{d+|v_i|}`.
    pub actions: BTreeMap<(usize, i64), Vec<FColPub>>,
    pub rational: bool,
}

impl CLevels {
    pub fn dim(&self, d: i64) -> usize {
        self.forms.get(&d).map_or(0, |f| f.dim())
    }

    pub fn torsion_rels(&self, d: i64) -> Vec<SparseCol> {
        self.forms.get(&d).map_or_else(Vec::new, |f| f.torsion_rels())
    }
}

fn fcol_to_sparse(f: &FColPub) -> SparseCol {
    f.iter().map(|(i, x)| (*i, BigInt::from(*x))).collect()
}

fn scalar_coords_to_fcol(form: &QuotientForm, v: &[(usize, Scalar)]) -> FColPub {
    let col = clear_col(v);
    form.project(&col)
}

/// Compress the module levels of a presentation, with the `v_i` actions.
fn compress_module_levels(m: &ComodulePresentation, lo: i64, hi: i64) -> CLevels {
    let ctx = &m.maps.ctx;
    let mc = m.m_ctx();
    let mut slices = BTreeMap::new();
    let mut forms = BTreeMap::new();
    let rational = m.base.is_rational();
    let mut d = lo;
    while d <= hi {
        let s = mc.slice(d);
        let form = if rational || s.rational {
            QuotientForm::identity_form(s.basis.len(), ctx.p)
        } else {
            quotient_form(&s.rels, s.basis.len(), ctx.p)
        };
        forms.insert(d, form);
        slices.insert(d, s);
        d += 1;
    }
    let mut actions = BTreeMap::new();
    for i in 1..=ctx.vars {
        if !m.base.alive(i) {
            continue;
        }
        let dv = ctx.gen_degree(i);
        let vi = Mono::gen(&m.module.shape, SlotKind::V, i).unwrap();
        let mut d = lo;
        while d + dv <= hi {
            let (src_form, tgt_form) = (&forms[&d], &forms[&(d + dv)]);
            let (src, tgt) = (&slices[&d], &slices[&(d + dv)]);
            let cols: Vec<FColPub> = (0..src_form.dim())
                .map(|j| {
                    // act on the section representative
                    let mut image: BTreeMap<u32, i128> = BTreeMap::new();
                    for (orig, c) in &src_form.section[j] {
                        let b = &src.basis[*orig as usize];
                        let (mu, g) = b.module.as_ref().unwrap();
                        if let Some(mm) = mu.try_mul(&vi, &m.module.shape) {
                            if let Some(ix) = tgt.index_of(&BasisElem {
                                ring: Mono::unit(&mc.shape),
                                module: Some((mm, *g)),
                            }) {
                                *image.entry(ix as u32).or_insert(0) += c;
                            }
                        }
                    }
                    let vec: FColPub =
                        image.into_iter().filter(|(_, x)| *x != 0).collect();
                    tgt_form.project_f(&vec)
                })
                .collect();
            actions.insert((i, d), cols);
            d += 1;
        }
    }
    CLevels {
        forms,
        actions,
        rational,
    }
}

/// Compress the `Sigma (x)_B N` levels of a presentation.
fn compress_sigma_levels(
    n: &ComodulePresentation,
    lo: i64,
    hi: i64,
) -> (CLevels, BTreeMap<i64, Slice>) {
    let ctx = &n.maps.ctx;
    let gm = n.gm_ctx();
    let mut slices = BTreeMap::new();
    let mut forms = BTreeMap::new();
    let rational = n.base.is_rational();
    let mut d = lo;
    while d <= hi {
        let s = gm.slice(d);
        let form = if rational || s.rational {
            QuotientForm::identity_form(s.basis.len(), ctx.p)
        } else {
            quotient_form(&s.rels, s.basis.len(), ctx.p)
        };
        forms.insert(d, form);
        slices.insert(d, s);
        d += 1;
    }
    let mut actions = BTreeMap::new();
    for i in 1..=ctx.vars {
        let dv = ctx.gen_degree(i);
        let vi = Mono::gen(&gm.shape, SlotKind::V, i).unwrap();
        let mut d = lo;
        while d + dv <= hi {
            let (src_form, tgt_form) = (&forms[&d], &forms[&(d + dv)]);
            let (src, tgt) = (&slices[&d], &slices[&(d + dv)]);
            let cols: Vec<FColPub> = (0..src_form.dim())
                .map(|j| {
                    let mut image: BTreeMap<u32, i128> = BTreeMap::new();
                    for (orig, c) in &src_form.section[j] {
                        let b = &src.basis[*orig as usize];
                        if let Some(mm) = b.ring.try_mul(&vi, &gm.shape) {
                            if let Some(ix) = tgt.index_of(&BasisElem {
                                ring: mm,
                                module: b.module.clone(),
                            }) {
                                *image.entry(ix as u32).or_insert(0) += c;
                            }
                        }
                    }
                    let vec: FColPub =
                        image.into_iter().filter(|(_, x)| *x != 0).collect();
                    tgt_form.project_f(&vec)
                })
                .collect();
            actions.insert((i, d), cols);
            d += 1;
        }
    }
    (
        CLevels {
            forms,
            actions,
            rational,
        },
        slices,
    )
}

/// Connective t-monomials of the given degree over `Gamma`.
fn t_monomials(maps: &StructureMaps, degree: i64) -> Vec<Mono> {
    let gshape = maps.gamma(1);
    let ctx = &maps.ctx;
    let n = ctx.vars;
    let degs: Vec<i64> = (1..=n).map(|i| ctx.gen_degree(i)).collect();
    fn rec(degs: &[i64], slot: usize, target: i64, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if slot == degs.len() {
            if target == 0 {
                out.push(cur.clone());
            }
            return;
        }
        if target < 0 {
            return;
        }
        let mut e = 0;
        while e as i64 * degs[slot] <= target {
            cur[slot] = e;
            rec(degs, slot + 1, target - e as i64 * degs[slot], cur, out);
            e += 1;
        }
        cur[slot] = 0;
    }
    let mut raw = Vec::new();
    let mut cur = vec![0i32; n];
    rec(&degs, 0, degree, &mut cur, &mut raw);
    let mut out = Vec::new();
    for exps in raw {
        let mut full = vec![0i32; gshape.num_slots()];
        for (i, e) in exps.into_iter().enumerate() {
            full[gshape.slot_of(SlotKind::T { block: 1 }, i + 1).unwrap()] = e;
        }
        let m = Mono(full.into());
        if m.admissible(&gshape) {
            out.push(m);
        }
    }
    out
}

/// Basis and relation lattice of `Gamma (x)_A X` in one degree, over
/// compressed level coordinates.
pub(crate) struct RightBasis {
    pub degree: i64,
    pub basis: Vec<(Mono, u32)>,
    pub index: BTreeMap<(Mono, u32), usize>,
    pub rels: Vec<SparseCol>,
    pub rational: bool,
    pub prime: u32,
}

fn right_basis(maps: &StructureMaps, levels: &CLevels, degree: i64) -> RightBasis {
    let ctx = &maps.ctx;
    let mut basis = Vec::new();
    let mut rels = Vec::new();
    let mut dt = 0i64;
    while dt <= ctx.mono_pos {
        let lvl = degree - dt;
        if levels.forms.contains_key(&lvl) && levels.dim(lvl) > 0 {
            for tm in t_monomials(maps, dt) {
                let offset = basis.len();
                for j in 0..levels.dim(lvl) {
                    basis.push((tm.clone(), j as u32));
                }
                for rel in levels.torsion_rels(lvl) {
                    rels.push(
                        rel.into_iter()
                            .map(|(i, c)| (i + offset as u32, c))
                            .collect(),
                    );
                }
            }
        }
        dt += 2;
    }
    let index = basis
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, b)| (b, i))
        .collect();
    RightBasis {
        degree,
        basis,
        index,
        rels,
        rational: levels.rational,
        prime: ctx.p,
    }
}

impl RightBasis {
    fn as_slice(&self) -> Slice {
        Slice {
            degree: self.degree,
            prime: self.prime,
            rational: self.rational,
            basis: self
                .basis
                .iter()
                .map(|(m, _)| BasisElem {
                    ring: m.clone(),
                    module: None,
                })
                .enumerate()
                .map(|(k, mut b)| {
                    // tag coordinates to keep basis elements distinct
                    let mut e = b.ring.0.to_vec();
                    let _ = k;
                    b.ring = Mono(e.drain(..).collect::<Vec<_>>().into());
                    b
                })
                .collect(),
            index: BTreeMap::new(),
            rels: self.rels.clone(),
        }
    }
}

/// Rewrite `(scalar-and-t monomial) (x) (level coordinate)` sums into
/// right coordinates through the memoized right-basis expansion of scalar
/// monomials, `v^a = sum t^gamma eta_R(c_gamma)`.
pub(crate) struct Rewriter<'a> {
    maps: &'a StructureMaps,
    levels: &'a CLevels,
    gshape: Arc<RingShape>,
    corrections: Vec<Poly>,
    scalar_memo: std::cell::RefCell<BTreeMap<Mono, Vec<(Mono, Poly)>>>,
}

impl<'a> Rewriter<'a> {
    pub fn new(maps: &'a StructureMaps, levels: &'a CLevels) -> Self {
        let gshape = maps.gamma(1);
        let corrections = (1..=maps.ctx.vars)
            .map(|i| {
                let vi = Poly::gen(&gshape, SlotKind::V, i).unwrap();
                maps.eta_r[i - 1].into_shape(&gshape).sub(&vi)
            })
            .collect();
        Rewriter {
            maps,
            levels,
            gshape,
            corrections,
            scalar_memo: Default::default(),
        }
    }

    fn expand_scalar(&self, vmono: &Mono) -> Vec<(Mono, Poly)> {
        if let Some(hit) = self.scalar_memo.borrow().get(vmono) {
            return hit.clone();
        }
        let ashape = RingShape::bp(self.maps.ctx.clone());
        let mut vslot = None;
        for (s, &e) in vmono.0.iter().enumerate() {
            if e != 0 {
                if let (SlotKind::V, idx) = self.gshape.slot_kind(s) {
                    debug_assert!(e > 0);
                    vslot = Some(idx);
                    break;
                }
            }
        }
        let result: Vec<(Mono, Poly)> = match vslot {
            None => vec![(vmono.clone(), Poly::one(&ashape))],
            Some(i) => {
                let slot = self.gshape.slot_of(SlotKind::V, i).unwrap();
                let mut exps = vmono.0.to_vec();
                exps[slot] -= 1;
                let rest = Mono(exps.into());
                let vi_a = Poly::gen(&ashape, SlotKind::V, i).unwrap();
                let mut acc: BTreeMap<Mono, Poly> = BTreeMap::new();
                for (g, c) in self.expand_scalar(&rest) {
                    let e = acc.entry(g).or_insert_with(|| Poly::zero(&ashape));
                    *e = e.add(&c.mul(&vi_a));
                }
                for (w, cw) in &self.corrections[i - 1].terms {
                    if let Some(m2) = rest.try_mul(w, &self.gshape) {
                        for (g, c) in self.expand_scalar(&m2) {
                            let e = acc.entry(g).or_insert_with(|| Poly::zero(&ashape));
                            *e = e.sub(&c.scale(cw));
                        }
                    }
                }
                acc.into_iter().filter(|(_, c)| !c.is_zero()).collect()
            }
        };
        self.scalar_memo
            .borrow_mut()
            .insert(vmono.clone(), result.clone());
        result
    }

    /// Apply a scalar polynomial through the compressed level actions.
    fn act(&self, c: &Poly, level: i64, coord: u32, coeff: &Scalar) -> Vec<(u32, Scalar)> {
        let mut out: BTreeMap<u32, Scalar> = BTreeMap::new();
        for (nu, cc) in &c.terms {
            let mut cur: Vec<(i64, u32, Scalar)> = vec![(level, coord, coeff * cc)];
            for (s, &e) in nu.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let (_, idx) = c.shape.slot_kind(s);
                for _ in 0..e {
                    let mut next = Vec::new();
                    for (lvl, co, cf) in cur {
                        if let Some(action) = self.levels.actions.get(&(idx, lvl)) {
                            if let Some(col) = action.get(co as usize) {
                                for (ix, x) in col {
                                    next.push((
                                        lvl + self.maps.ctx.gen_degree(idx),
                                        *ix,
                                        &cf * &Scalar::from_int(*x as i64),
                                    ));
                                }
                            }
                        }
                    }
                    cur = next;
                }
            }
            for (_, co, cf) in cur {
                let e = out.entry(co).or_insert_with(Scalar::zero);
                *e = &*e + &cf;
            }
        }
        out.into_iter().filter(|(_, c)| !c.is_zero()).collect()
    }

    /// `terms`: `(monomial over (v, t), level coordinate, coefficient)`;
    /// `total` is the degree of the element.
    pub fn rewrite(
        &self,
        terms: Vec<(Mono, u32, Scalar)>,
        total: i64,
    ) -> BTreeMap<(Mono, u32), Scalar> {
        let mut out: BTreeMap<(Mono, u32), Scalar> = BTreeMap::new();
        for (mono, coord, coeff) in terms {
            if coeff.is_zero() {
                continue;
            }
            let mut vexps = vec![0i32; self.gshape.num_slots()];
            let mut texps = vec![0i32; self.gshape.num_slots()];
            for (s, &e) in mono.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                match self.gshape.slot_kind(s) {
                    (SlotKind::V, _) => vexps[s] = e,
                    _ => texps[s] = e,
                }
            }
            let vpart = Mono(vexps.into());
            let tpart = Mono(texps.into());
            let level0 = total - mono.degree(&self.gshape) + vpart.degree(&self.gshape);
            for (g, c) in self.expand_scalar(&vpart) {
                let Some(tm) = tpart.try_mul(&g, &self.gshape) else {
                    continue;
                };
                for (co, cf) in self.act(&c, level0, coord, &coeff) {
                    let e = out.entry((tm.clone(), co)).or_insert_with(Scalar::zero);
                    *e = &*e + &cf;
                }
            }
        }
        out.retain(|_, c| !c.is_zero());
        out
    }
}

/// `Phi^* N` degreewise, with everything needed to present it and to
/// analyze the localization unit.
pub struct UpperComodule {
    pub n: ComodulePresentation,
    pub groups: GradedTable,
    /// Kernel generators per degree in compressed ambient coordinates.
    pub gens: BTreeMap<i64, Vec<SparseCol>>,
    /// Ambient `Gamma (x)_A N` bases per degree.
    pub amb_basis: BTreeMap<i64, Vec<(Mono, u32)>>,
    pub amb_rels: BTreeMap<i64, Vec<SparseCol>>,
    /// `v_i` action on ambient coordinates.
    pub amb_actions: BTreeMap<(usize, i64), Vec<Vec<(usize, Scalar)>>>,
    /// Coaction `(Delta (x) 1)` matrices into `(outer t-mono, ambient)`
    /// coordinates of the same degree.
    pub n_forms: BTreeMap<i64, QuotientForm>,
    pub rational: bool,
}

/// Compute `Phi^* N` as the equalizer of `(1 (x) can)(Delta (x) 1)` and
/// `1 (x) psi_N` inside `Gamma (x)_A N`, everything in compressed right
/// coordinates.
pub fn phi_upper(n: &ComodulePresentation) -> Result<UpperComodule> {
    let maps = n.maps.clone();
    let ctx = &maps.ctx;
    let lo = ctx.d_min;
    let hi = ctx.d_max;
    let n_levels = compress_module_levels(n, lo, hi);
    let (s_levels, s_slices) = compress_sigma_levels(n, lo, hi);
    let rw = Rewriter::new(&maps, &s_levels);
    let gm = n.gm_ctx();
    let mc = n.m_ctx();
    let gshape = maps.gamma(1);

    // N-slices and the projected coaction of original basis elements
    let mut n_slices: BTreeMap<i64, Slice> = BTreeMap::new();
    let mut psi_proj: BTreeMap<i64, Vec<FColPub>> = BTreeMap::new();
    for d in lo..=hi {
        let nslice = mc.slice(d);
        if nslice.basis.is_empty() {
            continue;
        }
        let sform = &s_levels.forms[&d];
        let sslice = &s_slices[&d];
        let cols: Vec<FColPub> = nslice
            .basis
            .iter()
            .map(|b| {
                let (mu, g) = b.module.as_ref().unwrap();
                scalar_coords_to_fcol(sform, &n.psi_coords(&gm, sslice, mu, *g))
            })
            .collect();
        psi_proj.insert(d, cols);
        n_slices.insert(d, nslice);
    }

    let mut delta_memo: BTreeMap<Mono, Poly> = BTreeMap::new();
    let mut gens = BTreeMap::new();
    let mut groups = GradedTable::new(ctx.stamp());
    let mut amb_basis = BTreeMap::new();
    let mut amb_rels = BTreeMap::new();
    for d in ctx.window() {
        let ambient = right_basis(&maps, &n_levels, d);
        if ambient.basis.is_empty() {
            continue;
        }
        let target = right_basis(&maps, &s_levels, d);
        let tslice = target.as_slice();
        let cols: Vec<Vec<(usize, Scalar)>> = ambient
            .basis
            .iter()
            .map(|(tm, j)| {
                let lvl = d - tm.degree(&gshape);
                let nform = &n_levels.forms[&lvl];
                // section of the compressed coordinate: original N elems
                let section = &nform.section[*j as usize];
                let nslice = &n_slices[&lvl];
                // alpha: for each Delta(t^dm) term, can the inner part into
                // Sigma (x) N and rewrite
                let delta = delta_memo
                    .entry(tm.clone())
                    .or_insert_with(|| delta_of_tmono(&maps, tm))
                    .clone();
                let mut alpha_terms: Vec<(Mono, u32, Scalar)> = Vec::new();
                for (w, c) in &delta.terms {
                    let (outer, inner) = split_blocks(&maps, w);
                    let ilvl = lvl + inner.degree(&gshape);
                    let Some(sform) = s_levels.forms.get(&ilvl) else {
                        continue;
                    };
                    let Some(sslice) = s_slices.get(&ilvl) else {
                        continue;
                    };
                    let inner_poly = Poly::monomial(&gm.shape, inner.clone(), Scalar::one());
                    // inner (x) (section elements)
                    let mut orig: BTreeMap<usize, Scalar> = BTreeMap::new();
                    for (oi, oc) in section {
                        let b = &nslice.basis[*oi as usize];
                        let (mu, g) = b.module.as_ref().unwrap();
                        for (ix, cc) in
                            gm.expand(sslice, &inner_poly, Some(&(mu.clone(), *g)))
                        {
                            let e = orig.entry(ix).or_insert_with(Scalar::zero);
                            *e = &*e + &(&cc * &Scalar::from_int(*oc as i64));
                        }
                    }
                    let vec: Vec<(usize, Scalar)> =
                        orig.into_iter().filter(|(_, c)| !c.is_zero()).collect();
                    for (qi, qc) in sform.project(&clear_col(&vec)) {
                        alpha_terms.push((
                            outer.clone(),
                            qi,
                            c * &Scalar::from_int(qc as i64),
                        ));
                    }
                }
                let alpha = rw.rewrite(alpha_terms, d);
                // beta: t^dm (x) psi(section)
                let mut diff = alpha;
                if let Some(pp) = psi_proj.get(&lvl) {
                    for (oi, oc) in section {
                        for (qi, qc) in &pp[*oi as usize] {
                            let key = (tm.clone(), *qi);
                            let e = diff.entry(key).or_insert_with(Scalar::zero);
                            *e = &*e
                                - &(&Scalar::from_int(*oc as i64)
                                    * &Scalar::from_int(*qc as i64));
                        }
                    }
                }
                diff.retain(|_, c| !c.is_zero());
                let mut out = Vec::new();
                for ((m, i), c) in diff {
                    if let Some(ix) = target.index.get(&(m, i)) {
                        out.push((*ix, c));
                    }
                }
                out
            })
            .collect();
        let aslice = ambient.as_slice();
        let sq = kernel_subquotient(&aslice, &cols, &tslice);
        groups.set(d, sq.group.clone());
        gens.insert(d, sq.gens);
        amb_basis.insert(d, ambient.basis);
        amb_rels.insert(d, ambient.rels);
    }

    // ambient v_i-actions in compressed coordinates, for presentation work
    let mut amb_actions: BTreeMap<(usize, i64), Vec<Vec<(usize, Scalar)>>> = BTreeMap::new();
    let rwn = Rewriter::new(&maps, &n_levels);
    for i in 1..=ctx.vars {
        let dv = ctx.gen_degree(i);
        for d in ctx.window() {
            if d + dv > hi {
                continue;
            }
            let (Some(src), Some(tgt)) = (amb_basis.get(&d), amb_basis.get(&(d + dv))) else {
                continue;
            };
            let tgt_index: BTreeMap<&(Mono, u32), usize> =
                tgt.iter().enumerate().map(|(k, b)| (b, k)).collect();
            let vi = Mono::gen(&gshape, SlotKind::V, i).unwrap();
            let cols: Vec<Vec<(usize, Scalar)>> = src
                .iter()
                .map(|(tm, j)| {
                    let m = match tm.try_mul(&vi, &gshape) {
                        Some(m) => m,
                        None => return Vec::new(),
                    };
                    rwn.rewrite(vec![(m, *j, Scalar::one())], d + dv)
                        .into_iter()
                        .filter_map(|((mm, jj), c)| {
                            tgt_index.get(&(mm, jj)).map(|ix| (*ix, c))
                        })
                        .collect()
                })
                .collect();
            amb_actions.insert((i, d), cols);
        }
    }

    Ok(UpperComodule {
        n: n.clone(),
        groups,
        gens,
        amb_basis,
        amb_rels,
        amb_actions,
        n_forms: n_levels.forms,
        rational: n_levels.rational,
    })
}

fn delta_of_tmono(maps: &StructureMaps, tm: &Mono) -> Poly {
    let g2 = maps.gamma(2);
    let mut acc = Poly::one(&g2);
    for (s, &e) in tm.0.iter().enumerate() {
        if e == 0 {
            continue;
        }
        let (kind, idx) = maps.gamma(1).slot_kind(s);
        if let SlotKind::T { block: 1 } = kind {
            acc = acc.mul(&maps.delta_t[idx - 1].pow(e as u32));
        }
    }
    acc
}

/// Split a `Gamma (x) Gamma` monomial into its `(v, t-block-1)` part and
/// its `t-block-2` part, both as one-block monomials.
fn split_blocks(maps: &StructureMaps, w: &Mono) -> (Mono, Mono) {
    let g2 = maps.gamma(2);
    let g1 = maps.gamma(1);
    let mut outer = vec![0i32; g1.num_slots()];
    let mut inner = vec![0i32; g1.num_slots()];
    for (s, &e) in w.0.iter().enumerate() {
        if e == 0 {
            continue;
        }
        match g2.slot_kind(s) {
            (SlotKind::V, idx) => outer[g1.slot_of(SlotKind::V, idx).unwrap()] = e,
            (SlotKind::T { block: 1 }, idx) => {
                outer[g1.slot_of(SlotKind::T { block: 1 }, idx).unwrap()] = e
            }
            (SlotKind::T { block: 2 }, idx) => {
                inner[g1.slot_of(SlotKind::T { block: 1 }, idx).unwrap()] = e
            }
            _ => unreachable!(),
        }
    }
    (Mono(outer.into()), Mono(inner.into()))
}

#[cfg(test)]
mod upper_tests {
    use super::*;
    use crate::context::TruncationContext;

    fn maps2() -> Arc<StructureMaps> {
        StructureMaps::new(Arc::new(TruncationContext::desk(2))).unwrap()
    }

    #[test]
    fn phi_upper_of_e1_is_bp() {
        let maps = maps2();
        let ctx = maps.ctx.clone();
        let e1 = Algebra::en(1, &ctx);
        let n = ComodulePresentation::free(&maps, e1, 0).unwrap();
        let up = phi_upper(&n).unwrap();
        let bp = ComodulePresentation::free(&maps, Algebra::bp(), 0).unwrap();
        let expect = bp.graded_table();
        assert!(
            up.groups.same_groups(&expect),
            "got {:?}\nexpected {:?}",
            up.groups.entries,
            expect.entries
        );
    }

    #[test]
    fn phi_upper_of_e1_mod_p() {
        // Phi^* Phi_* (BP/I_1) = L_1(BP/I_1) = v_1^{-1} BP/I_1
        let maps = maps2();
        let ctx = maps.ctx.clone();
        let e1 = Algebra::en(1, &ctx);
        let n = ComodulePresentation::mod_ik(&maps, e1, 1).unwrap();
        let up = phi_upper(&n).unwrap();
        let target = ComodulePresentation::mod_ik(&maps, Algebra::vn_inv_bp(1), 1).unwrap();
        let expect = target.graded_table();
        assert!(
            up.groups.same_groups(&expect),
            "got {:?}\nexpected {:?}",
            up.groups.entries,
            expect.entries
        );
    }

    #[test]
    fn phi_upper_of_zero() {
        let maps = maps2();
        let ctx = maps.ctx.clone();
        let e1 = Algebra::en(1, &ctx);
        let shape = RingShape::scalars(ctx.clone(), e1.clone());
        let z = ComodulePresentation::quotient(&maps, e1, vec![Poly::one(&shape)]).unwrap();
        let up = phi_upper(&z).unwrap();
        assert!(up.groups.is_zero());
    }
}

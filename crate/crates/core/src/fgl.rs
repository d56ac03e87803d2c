//! The p-typical formal group law and the structure maps of `BP_*BP`.
//!
//! Everything is computed rationally through the logarithm and then cleared
//! to integral form.  The generators `v_i` are the Araki generators, defined
//! by `p l_n = sum_{0<=i<=n} l_i v_{n-i}^{p^i}` with `v_0 = p`; the right
//! unit comes from `eta_R(l_n) = sum l_i t_{n-i}^{p^i}`, the coproduct is
//! solved from `sum l_i Delta(t_j)^{p^i} = sum l_i t_j^{p^i} (x) t_k^{p^{i+j}}`,
//! and the antipode is solved degreewise from the antipode composition law.
//! Integrality of every structure-map image is asserted after clearing;
//! a failure indicates a bug in the recursions and aborts construction.

use crate::algebra::Algebra;
use crate::context::TruncationContext;
use crate::poly::Poly;
use crate::ring::{Mono, RingShape, SlotKind};
use crate::scalar::Scalar;
use crate::{Error, Result};
use num_bigint::BigInt;
use std::sync::Arc;

/// Rational logarithm data: `l_n` as polynomials in the `v_i` and the
/// inverse change of variables.
#[derive(Clone, Debug)]
pub struct LogSeries {
    /// `l_n` in terms of `v`, index `n-1`; `l_0 = 1` is implicit.
    pub l_in_v: Vec<Poly>,
    /// `v_n` in terms of `l`, index `n-1`.
    pub v_in_l: Vec<Poly>,
}

/// Structure maps of the truncated Hopf algebroid `(BP_*, BP_*BP)` on
/// generators, in integral form, plus the iterated right units used to
/// assemble degreewise relation lattices of base-changed objects.
#[derive(Debug)]
pub struct StructureMaps {
    pub ctx: Arc<TruncationContext>,
    pub log: LogSeries,
    /// `eta_R(v_n)` in `Gamma`, index `n-1`.
    pub eta_r: Vec<Poly>,
    /// `Delta(t_n)` in `Gamma (x) Gamma`, index `n-1`.
    pub delta_t: Vec<Poly>,
    /// `c(t_n)` in `Gamma`, index `n-1`.
    pub c_t: Vec<Poly>,
    /// `eta_r_through[r-1][n-1]`: the image of `v_n` under the right unit
    /// into the `r`-th tensor factor of `Gamma^{(x)r}`, `r = 1..=3`.
    pub eta_r_through: Vec<Vec<Poly>>,
}

/// `p - p^{p^n}`, the Araki denominator.
fn araki_denominator(p: u32, n: usize) -> Scalar {
    let pb = BigInt::from(p);
    let e = pb.pow(n as u32);
    let e: u32 = u32::try_from(&e).expect("p^n exponent fits u32");
    let val = BigInt::from(p) - BigInt::from(p).pow(e);
    Scalar::from_bigint(val)
}

/// Compute the logarithm coefficients for the Araki generators:
/// `(p - p^{p^n}) l_n = v_n + sum_{0<i<n} l_i v_{n-i}^{p^i}`.
pub fn log_coefficients(ctx: &Arc<TruncationContext>) -> LogSeries {
    let shape_v = RingShape::bp(ctx.clone());
    let shape_l = RingShape::log_ring(ctx.clone(), 0);
    let p = ctx.p;
    let n_vars = ctx.vars;

    let mut l_in_v: Vec<Poly> = Vec::with_capacity(n_vars);
    for n in 1..=n_vars {
        let mut rhs = Poly::gen(&shape_v, SlotKind::V, n).unwrap();
        for i in 1..n {
            let pi = (p as u32).pow(i as u32);
            let term = l_in_v[i - 1].mul(
                &Poly::gen(&shape_v, SlotKind::V, n - i)
                    .unwrap()
                    .pow(pi),
            );
            rhs = rhs.add(&term);
        }
        let denom = araki_denominator(p, n);
        l_in_v.push(rhs.scale(&denom.inv().unwrap()));
    }

    // v_n = p l_n - l_n p^{p^n} - sum_{0<i<n} l_i V_{n-i}^{p^i}
    let mut v_in_l: Vec<Poly> = Vec::with_capacity(n_vars);
    for n in 1..=n_vars {
        let ln = Poly::gen(&shape_l, SlotKind::L, n).unwrap();
        let mut acc = ln.scale(&araki_denominator(p, n));
        for i in 1..n {
            let pi = (p as u32).pow(i as u32);
            let li = Poly::gen(&shape_l, SlotKind::L, i).unwrap();
            acc = acc.sub(&li.mul(&v_in_l[n - i - 1].pow(pi)));
        }
        v_in_l.push(acc);
    }

    LogSeries { l_in_v, v_in_l }
}

impl LogSeries {
    /// Verify `p l_n = sum_{0<=i<=n} l_i v_{n-i}^{p^i}` identically.
    pub fn araki_residual(&self, ctx: &Arc<TruncationContext>, n: usize) -> Poly {
        let shape_v = RingShape::bp(ctx.clone());
        let p = ctx.p;
        let ln = &self.l_in_v[n - 1];
        let mut rhs = Poly::zero(&shape_v);
        for i in 0..=n {
            let li = if i == 0 {
                Poly::one(&shape_v)
            } else {
                self.l_in_v[i - 1].clone()
            };
            let pi = (p as u32).pow(i as u32);
            let vni = if n == i {
                // v_0 = p
                Poly::constant(&shape_v, Scalar::from_int(p as i64))
            } else {
                Poly::gen(&shape_v, SlotKind::V, n - i).unwrap()
            };
            rhs = rhs.add(&li.mul(&vni.pow(pi)));
        }
        ln.scale(&Scalar::from_int(p as i64)).sub(&rhs)
    }
}

impl StructureMaps {
    pub fn new(ctx: Arc<TruncationContext>) -> Result<Arc<Self>> {
        let log = log_coefficients(&ctx);
        let p = ctx.p;
        let n_vars = ctx.vars;
        let gamma1 = RingShape::gamma(ctx.clone(), Algebra::bp(), 1);
        let gamma2 = RingShape::gamma(ctx.clone(), Algebra::bp(), 2);
        let lring1 = RingShape::log_ring(ctx.clone(), 1);
        let lring2 = RingShape::log_ring(ctx.clone(), 2);

        // eta_R(l_k) = l_k + t_k + sum_{0<i<k} l_i t_{k-i}^{p^i}
        let mut eta_r_l: Vec<Poly> = Vec::with_capacity(n_vars);
        for k in 1..=n_vars {
            let mut acc = Poly::gen(&lring1, SlotKind::L, k).unwrap();
            acc = acc.add(&Poly::gen(&lring1, SlotKind::T { block: 1 }, k).unwrap());
            for i in 1..k {
                let pi = (p as u32).pow(i as u32);
                let term = Poly::gen(&lring1, SlotKind::L, i).unwrap().mul(
                    &Poly::gen(&lring1, SlotKind::T { block: 1 }, k - i)
                        .unwrap()
                        .pow(pi),
                );
                acc = acc.add(&term);
            }
            eta_r_l.push(acc);
        }

        // eta_R(v_n) = V_n(eta_R(l)), then convert l -> v and clear
        let l_to_v = |poly: &Poly, target: &Arc<RingShape>| -> Result<Poly> {
            poly.substitute(target, &|kind, idx| match kind {
                SlotKind::L => Some(log.l_in_v[idx - 1].into_shape(target)),
                _ => None,
            })
        };
        let mut eta_r = Vec::with_capacity(n_vars);
        for n in 1..=n_vars {
            let in_l = log.v_in_l[n - 1].substitute(&lring1, &|kind, idx| match kind {
                SlotKind::L => Some(eta_r_l[idx - 1].clone()),
                _ => None,
            })?;
            let out = l_to_v(&in_l, &gamma1)?;
            check_integral(&out, &format!("eta_R(v_{n})"))?;
            debug_assert!(out.is_homogeneous_of(ctx.gen_degree(n)));
            eta_r.push(out);
        }

        // Delta(t_n) solved from the coproduct identity on the log
        let mut delta_l: Vec<Poly> = Vec::with_capacity(n_vars); // over lring2
        for n in 1..=n_vars {
            let mut rhs = Poly::zero(&lring2);
            for i in 0..=n {
                let pi = (p as u32).pow(i as u32);
                let li = if i == 0 {
                    Poly::one(&lring2)
                } else {
                    Poly::gen(&lring2, SlotKind::L, i).unwrap()
                };
                for j in 0..=(n - i) {
                    let k = n - i - j;
                    let tj = if j == 0 {
                        Poly::one(&lring2)
                    } else {
                        Poly::gen(&lring2, SlotKind::T { block: 1 }, j)
                            .unwrap()
                            .pow(pi)
                    };
                    let pij = (p as u32).pow((i + j) as u32);
                    let tk = if k == 0 {
                        Poly::one(&lring2)
                    } else {
                        Poly::gen(&lring2, SlotKind::T { block: 2 }, k)
                            .unwrap()
                            .pow(pij)
                    };
                    rhs = rhs.add(&li.mul(&tj).mul(&tk));
                }
            }
            // subtract sum_{i>=1} l_i Delta(t_{n-i})^{p^i}; Delta(t_0) = 1
            for i in 1..=n {
                let pi = (p as u32).pow(i as u32);
                let li = Poly::gen(&lring2, SlotKind::L, i).unwrap();
                let dt = if n - i == 0 {
                    Poly::one(&lring2)
                } else {
                    delta_l[n - i - 1].clone()
                };
                rhs = rhs.sub(&li.mul(&dt.pow(pi)));
            }
            delta_l.push(rhs);
        }
        let mut delta_t = Vec::with_capacity(n_vars);
        for n in 1..=n_vars {
            let out = l_to_v(&delta_l[n - 1], &gamma2)?;
            check_integral(&out, &format!("Delta(t_{n})"))?;
            delta_t.push(out);
        }

        // antipode, solved degreewise from mu (1 (x) c) Delta(t_n) = 0
        let mut c_t: Vec<Poly> = Vec::with_capacity(n_vars);
        for n in 1..=n_vars {
            let pure_right = Mono::gen(&gamma2, SlotKind::T { block: 2 }, n).unwrap();
            let coeff = delta_t[n - 1].coeff(&pure_right);
            if !coeff.is_one() {
                return Err(Error::AntipodeSolve(
                    n,
                    format!("coefficient of 1(x)t_{n} in the coproduct is {coeff}, not 1"),
                ));
            }
            let mut acc = Poly::zero(&gamma1);
            for (m, c) in &delta_t[n - 1].terms {
                if *m == pure_right {
                    continue;
                }
                // v^a t'^b t''^g  |->  v^a t^b c(t)^g
                let mut part = Poly::constant(&gamma1, c.clone());
                for (s, &e) in m.0.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    let (kind, idx) = gamma2.slot_kind(s);
                    let factor = match kind {
                        SlotKind::V => Poly::gen(&gamma1, SlotKind::V, idx).unwrap(),
                        SlotKind::T { block: 1 } => {
                            Poly::gen(&gamma1, SlotKind::T { block: 1 }, idx).unwrap()
                        }
                        SlotKind::T { block: 2 } => c_t[idx - 1].clone(),
                        _ => unreachable!(),
                    };
                    debug_assert!(e > 0);
                    part = part.mul(&factor.pow(e as u32));
                }
                acc = acc.add(&part);
            }
            let cn = acc.neg();
            check_integral(&cn, &format!("c(t_{n})"))?;
            c_t.push(cn);
        }

        // iterated right units eta_R into the r-th factor of Gamma^{(x)r}
        let mut eta_r_through: Vec<Vec<Poly>> = Vec::new();
        for r in 1..=3usize {
            let shape_r = RingShape::gamma(ctx.clone(), Algebra::bp(), r);
            let level: Vec<Poly> = if r == 1 {
                eta_r.iter().map(|p| p.into_shape(&shape_r)).collect()
            } else {
                let prev = &eta_r_through[r - 2];
                eta_r
                    .iter()
                    .map(|pol| {
                        pol.substitute(&shape_r, &|kind, idx| match kind {
                            SlotKind::V => Some(prev[idx - 1].into_shape(&shape_r)),
                            SlotKind::T { block: 1 } => {
                                Poly::gen(&shape_r, SlotKind::T { block: r }, idx)
                            }
                            _ => None,
                        })
                        .expect("iterated right unit")
                    })
                    .collect()
            };
            eta_r_through.push(level);
        }

        let maps = StructureMaps {
            ctx,
            log,
            eta_r,
            delta_t,
            c_t,
            eta_r_through,
        };
        maps.verify_antipode()?;
        Ok(Arc::new(maps))
    }

    /// Both antipode composition laws and the involution on generators.
    fn verify_antipode(&self) -> Result<()> {
        for n in 1..=self.ctx.vars {
            let left = self.mu_c_left(&self.delta_t[n - 1]);
            if !left.is_zero() {
                return Err(Error::AntipodeSolve(
                    n,
                    format!("mu(c (x) 1)Delta(t_{n}) = {left} != 0"),
                ));
            }
            let cc = self.apply_c(&self.c_t[n - 1]);
            let tn = Poly::gen(&self.gamma(1), SlotKind::T { block: 1 }, n).unwrap();
            if cc != tn {
                return Err(Error::AntipodeSolve(n, format!("c(c(t_{n})) = {cc}")));
            }
            // c eta_R = eta_L on generators
            let ceta = self.apply_c(&self.eta_r[n - 1]);
            let vn = Poly::gen(&self.gamma(1), SlotKind::V, n).unwrap();
            if ceta != vn {
                return Err(Error::AntipodeSolve(n, format!("c(eta_R(v_{n})) = {ceta}")));
            }
        }
        Ok(())
    }

    pub fn gamma(&self, blocks: usize) -> Arc<RingShape> {
        RingShape::gamma(self.ctx.clone(), Algebra::bp(), blocks)
    }

    /// The antipode as a ring map on `Gamma`: `v |-> eta_R(v)`, `t |-> c(t)`.
    pub fn apply_c(&self, x: &Poly) -> Poly {
        let shape = self.gamma(1);
        x.substitute(&shape, &|kind, idx| match kind {
            SlotKind::V => Some(self.eta_r[idx - 1].into_shape(&shape)),
            SlotKind::T { block: 1 } => Some(self.c_t[idx - 1].clone()),
            _ => None,
        })
        .expect("antipode substitution")
    }

    /// `mu (c (x) 1)`: `x' (x) x'' |-> c(x') x''` on `Gamma (x) Gamma`.
    pub fn mu_c_left(&self, x: &Poly) -> Poly {
        let shape = self.gamma(1);
        let mut out = Poly::zero(&shape);
        for (m, coeff) in &x.terms {
            let mut part = Poly::constant(&shape, coeff.clone());
            for (s, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let (kind, idx) = x.shape.slot_kind(s);
                let factor = match kind {
                    // scalars belong to the left factor via eta_L
                    SlotKind::V => self.eta_r[idx - 1].clone(),
                    SlotKind::T { block: 1 } => self.c_t[idx - 1].clone(),
                    SlotKind::T { block: 2 } => {
                        Poly::gen(&shape, SlotKind::T { block: 1 }, idx).unwrap()
                    }
                    _ => unreachable!(),
                };
                part = part.mul(&factor.pow(e as u32));
            }
            out = out.add(&part);
        }
        out
    }

    /// `mu (1 (x) c)`: `x' (x) x'' |-> x' c(x'')`.
    pub fn mu_c_right(&self, x: &Poly) -> Poly {
        let shape = self.gamma(1);
        let mut out = Poly::zero(&shape);
        for (m, coeff) in &x.terms {
            let mut part = Poly::constant(&shape, coeff.clone());
            for (s, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let (kind, idx) = x.shape.slot_kind(s);
                let factor = match kind {
                    SlotKind::V => Poly::gen(&shape, SlotKind::V, idx).unwrap(),
                    SlotKind::T { block: 1 } => {
                        Poly::gen(&shape, SlotKind::T { block: 1 }, idx).unwrap()
                    }
                    SlotKind::T { block: 2 } => self.c_t[idx - 1].clone(),
                    _ => unreachable!(),
                };
                part = part.mul(&factor.pow(e as u32));
            }
            out = out.add(&part);
        }
        out
    }

    /// Image of a scalar polynomial (in `v`) under the right unit into the
    /// `r`-th tensor factor, with monomials pushed to the given flags.
    pub fn eta_r_through_poly(&self, r: usize, x: &Poly, shape: &Arc<RingShape>) -> Poly {
        x.substitute(shape, &|kind, idx| match kind {
            SlotKind::V => Some(self.eta_r_through[r - 1][idx - 1].into_shape(shape)),
            _ => None,
        })
        .expect("right unit image")
    }
}

fn check_integral(p: &Poly, what: &str) -> Result<()> {
    let prime = p.shape.ctx.p;
    for (m, c) in &p.terms {
        if !c.is_p_local(prime) {
            return Err(Error::Integrality {
                what: what.into(),
                coeff: c.to_string(),
                monomial: m.display(&p.shape),
            });
        }
    }
    Ok(())
}

/// Spec-level entry points.
pub fn eta_r_image(maps: &StructureMaps, n: usize) -> &Poly {
    &maps.eta_r[n - 1]
}

pub fn coproduct_t(maps: &StructureMaps, n: usize) -> &Poly {
    &maps.delta_t[n - 1]
}

pub fn antipode_t(maps: &StructureMaps, n: usize) -> &Poly {
    &maps.c_t[n - 1]
}

/// The formal sum `F(x, y)` truncated to the window, built from the log:
/// `F = exp(log x + log y)` with `exp` the reversion of the logarithm.
pub fn formal_sum(ctx: &Arc<TruncationContext>) -> Poly {
    let log = log_coefficients(ctx);
    let one_var = RingShape::with_formal(ctx.clone(), Algebra::bp(), 1, false);
    let two_var = RingShape::with_formal(ctx.clone(), Algebra::bp(), 2, false);
    let p = ctx.p;

    let log_of = |arg: &Poly| -> Poly {
        // log(s) = s + sum l_i s^{p^i}
        let shape = arg.shape.clone();
        let mut acc = arg.clone();
        for i in 1..=ctx.vars {
            let li = log.l_in_v[i - 1].into_shape(&shape);
            acc = acc.add(&li.mul(&arg.pow((p as u32).pow(i as u32))));
        }
        acc
    };

    // reversion: e(s) with log(e(s)) = s, solved by iteration
    let s = Poly::gen(&one_var, SlotKind::X, 1).unwrap();
    let mut e = s.clone();
    loop {
        let mut next = s.clone();
        for i in 1..=ctx.vars {
            let li = log.l_in_v[i - 1].into_shape(&one_var);
            next = next.sub(&li.mul(&e.pow((p as u32).pow(i as u32))));
        }
        if next == e {
            break;
        }
        e = next;
    }

    let x = Poly::gen(&two_var, SlotKind::X, 1).unwrap();
    let y = Poly::gen(&two_var, SlotKind::X, 2).unwrap();
    let s2 = log_of(&x).add(&log_of(&y));
    e.substitute_unchecked(&two_var, &|kind, idx| match kind {
        SlotKind::X if idx == 1 => Some(s2.clone()),
        _ => None,
    })
    .expect("formal sum substitution")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_poly;

    fn ctx2() -> Arc<TruncationContext> {
        Arc::new(TruncationContext::desk(2))
    }

    fn ctx3() -> Arc<TruncationContext> {
        Arc::new(TruncationContext::desk(3))
    }

    #[test]
    fn log_normalization_and_l1() {
        // p = 2: (2 - 4) l_1 = v_1, so l_1 = -v_1/2
        let log = log_coefficients(&ctx2());
        assert_eq!(log.l_in_v[0].to_string(), "-1/2*v1");
        // p = 3: l_1 = v_1/(3 - 27) = -v_1/24
        let log3 = log_coefficients(&ctx3());
        assert_eq!(log3.l_in_v[0].to_string(), "-1/24*v1");
    }

    #[test]
    fn araki_relation_holds() {
        for ctx in [ctx2(), ctx3()] {
            let log = log_coefficients(&ctx);
            for n in 1..=ctx.vars {
                assert!(log.araki_residual(&ctx, n).is_zero(), "n = {n}");
            }
        }
    }

    #[test]
    fn log_round_trip() {
        // substituting l(v) into v(l) returns v_n
        let ctx = ctx2();
        let log = log_coefficients(&ctx);
        let shape_v = RingShape::bp(ctx.clone());
        for n in 1..=ctx.vars {
            let back = log.v_in_l[n - 1]
                .substitute(&shape_v, &|kind, idx| match kind {
                    SlotKind::L => Some(log.l_in_v[idx - 1].clone()),
                    _ => None,
                })
                .unwrap();
            assert_eq!(back, Poly::gen(&shape_v, SlotKind::V, n).unwrap());
        }
    }

    #[test]
    fn eta_r_v1_exact() {
        // eta_R(v_1) = v_1 + (p - p^p) t_1, from the rational recursion
        let maps = StructureMaps::new(ctx2()).unwrap();
        assert_eq!(maps.eta_r[0].to_string(), "v1 - 2*t1");
        let maps3 = StructureMaps::new(ctx3()).unwrap();
        assert_eq!(maps3.eta_r[0].to_string(), "v1 - 24*t1");
    }

    #[test]
    fn eta_r_congruences() {
        let maps = StructureMaps::new(ctx2()).unwrap();
        let shape = maps.gamma(1);
        for n in 1..=3usize {
            let eta = &maps.eta_r[n - 1];
            // eta_R(v_n) = v_n modulo (t_1, ..., t_N)
            let vn = Poly::gen(&shape, SlotKind::V, n).unwrap();
            let tfree: Vec<_> = eta
                .terms
                .iter()
                .filter(|(m, _)| m.t_free(&shape))
                .collect();
            assert_eq!(tfree.len(), 1);
            assert_eq!(tfree[0].0, vn.terms.keys().next().unwrap());
            assert!(tfree[0].1.is_one());
            // v_n primitive mod I_n: eta_R(v_n) - v_n - (unit) p t_n ... the
            // t_n coefficient reduces to a nonzero multiple of p... check
            // eta_R(v_n) = v_n mod (p, v_1, .., v_{n-1}, decomposables+)
            let tn = Mono::gen(&shape, SlotKind::T { block: 1 }, n).unwrap();
            let coeff = eta.coeff(&tn);
            assert!(!coeff.is_zero());
            assert_eq!(coeff.p_valuation(2), Some(1), "t_n coefficient is p*unit");
            for (m, c) in &eta.terms {
                if *m == tn || m.t_free(&shape) {
                    continue;
                }
                // every other term lies in I_n * Gamma + decomposables over t
                let in_i_n = c.p_valuation(2).unwrap() >= 1
                    || (1..n).any(|i| m.exponent(&shape, SlotKind::V, i) > 0);
                let t_total: i32 = (1..=3)
                    .map(|i| m.exponent(&shape, SlotKind::T { block: 1 }, i))
                    .sum();
                assert!(in_i_n || t_total >= 2, "term {} of eta_R(v_{n})", m.display(&shape));
            }
        }
    }

    #[test]
    fn coproduct_examples() {
        let maps = StructureMaps::new(ctx2()).unwrap();
        let g2 = maps.gamma(2);
        assert_eq!(parse_poly(&g2, "t1 + t1'").unwrap(), maps.delta_t[0]);
        // counit axiom instance: (eps (x) 1) Delta(t_2) = t_2
        for n in 1..=3usize {
            let d = &maps.delta_t[n - 1];
            let g1 = maps.gamma(1);
            // (eps (x) 1): kill terms with block-1 t's, rename block 2 -> 1
            let mut left = Poly::zero(&g1);
            let mut right = Poly::zero(&g1);
            for (m, c) in &d.terms {
                let b1: i32 = (1..=3).map(|i| m.exponent(&g2, SlotKind::T { block: 1 }, i)).sum();
                let b2: i32 = (1..=3).map(|i| m.exponent(&g2, SlotKind::T { block: 2 }, i)).sum();
                if b1 == 0 {
                    left.add_term(
                        Mono(
                            {
                                let mut e = vec![0; g1.num_slots()];
                                for (s, &x) in m.0.iter().enumerate() {
                                    if x != 0 {
                                        let (k, i) = g2.slot_kind(s);
                                        let kk = match k {
                                            SlotKind::T { .. } => SlotKind::T { block: 1 },
                                            other => other,
                                        };
                                        e[g1.slot_of(kk, i).unwrap()] = x;
                                    }
                                }
                                e.into()
                            },
                        ),
                        c.clone(),
                    );
                }
                if b2 == 0 {
                    right.add_term(
                        Mono({
                            let mut e = vec![0; g1.num_slots()];
                            for (s, &x) in m.0.iter().enumerate() {
                                if x != 0 {
                                    let (k, i) = g2.slot_kind(s);
                                    e[g1.slot_of(k, i).unwrap()] = x;
                                }
                            }
                            e.into()
                        }),
                        c.clone(),
                    );
                }
            }
            let tn = Poly::gen(&g1, SlotKind::T { block: 1 }, n).unwrap();
            assert_eq!(left, tn, "counit law left, n = {n}");
            assert_eq!(right, tn, "counit law right, n = {n}");
        }
    }

    #[test]
    fn antipode_examples() {
        let maps = StructureMaps::new(ctx2()).unwrap();
        assert_eq!(maps.c_t[0].to_string(), "-t1");
        // c(eta_L(v_1)) = eta_R(v_1): apply_c to v_1 is exactly eta_r[0]
        let shape = maps.gamma(1);
        let v1 = Poly::gen(&shape, SlotKind::V, 1).unwrap();
        assert_eq!(maps.apply_c(&v1), maps.eta_r[0]);
        // involution checked in construction; re-check t_2 here
        assert_eq!(maps.apply_c(&maps.c_t[1]), Poly::gen(&shape, SlotKind::T { block: 1 }, 2).unwrap());
    }

    #[test]
    fn structure_maps_integral_at_p3() {
        let maps = StructureMaps::new(ctx3()).unwrap();
        for p in maps.eta_r.iter().chain(&maps.delta_t).chain(&maps.c_t) {
            assert!(p.is_p_local());
        }
    }

    #[test]
    fn formal_sum_properties() {
        let ctx = Arc::new(TruncationContext::new(2, 2, -12, 12).unwrap());
        let f = formal_sum(&ctx);
        let two_var = f.shape.clone();
        // F(x, 0) = x
        let at_zero = f
            .substitute_unchecked(&two_var, &|kind, idx| match kind {
                SlotKind::X if idx == 2 => Some(Poly::zero(&two_var)),
                _ => None,
            })
            .unwrap();
        assert_eq!(at_zero, Poly::gen(&two_var, SlotKind::X, 1).unwrap());
        // F(x, y) = F(y, x)
        let swapped = f
            .substitute_unchecked(&two_var, &|kind, idx| match kind {
                SlotKind::X if idx == 1 => Poly::gen(&two_var, SlotKind::X, 2),
                SlotKind::X if idx == 2 => Poly::gen(&two_var, SlotKind::X, 1),
                _ => None,
            })
            .unwrap();
        assert_eq!(f, swapped);
        // the formal group law is integral
        assert!(f.is_p_local());
    }
}

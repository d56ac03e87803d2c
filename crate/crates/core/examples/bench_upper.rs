use chromatic_comod::comod::*;
use chromatic_comod::*;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let maps = StructureMaps::new(Arc::new(TruncationContext::desk(2))).unwrap();
    let ctx = maps.ctx.clone();
    let e1 = Algebra::en(1, &ctx);
    let shape = ring::RingShape::scalars(ctx.clone(), e1.clone());
    let z = ComodulePresentation::quotient(&maps, e1.clone(), vec![poly::Poly::one(&shape)]).unwrap();
    eprintln!("start");
    let t0 = Instant::now();
    let up = phi_upper(&z).unwrap();
    eprintln!("phi_upper(0): {:?} zero={}", t0.elapsed(), up.groups.is_zero());
}

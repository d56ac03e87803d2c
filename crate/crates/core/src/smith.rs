//! Smith normal form and linear algebra over `Z_(p)`.
//!
//! Over the local ring `Z_(p)` every nonzero scalar is a unit times a power
//! of `p`, so elimination always pivots on an entry of minimal
//! `p`-valuation and clears with the unit-scaling operation
//! `col_j <- u_i * col_j - u_j p^(e_j - e_i) * col_i`, which keeps entries
//! integral.  Elementary divisors are powers of `p`; every `p`-coprime
//! factor is a unit and is recorded as exponent 0.
//!
//! All non-rational elimination is carried out in `Z/p^K` with `K` chosen
//! as large as fits in a machine word: verdicts are faithful whenever the
//! true valuations stay below `K`, which desk-scale data does by a wide
//! margin.  The `rational` flag treats `p` itself as a unit (base algebras
//! with `p` inverted); that path works over exact big integers with full
//! content stripping.

use crate::scalar::Scalar;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

pub type SparseCol = Vec<(u32, BigInt)>;
type FCol = Vec<(u32, i128)>;

/// Largest `K` with `p^K <= 2^62`.
pub fn mod_exponent(p: u32) -> u32 {
    let mut k = 0u32;
    let mut acc: i128 = 1;
    let bound: i128 = 1 << 62;
    loop {
        acc *= p as i128;
        if acc > bound {
            return k;
        }
        k += 1;
    }
}

pub fn val(x: &BigInt, p: u32) -> u32 {
    debug_assert!(!x.is_zero());
    let p = BigInt::from(p);
    let mut n = x.abs();
    let mut v = 0;
    while (&n % &p).is_zero() {
        n /= &p;
        v += 1;
    }
    v
}

fn fval(x: i128, p: u32) -> u32 {
    debug_assert!(x != 0);
    let mut n = x.abs();
    let p = p as i128;
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

fn funit(x: i128, p: u32, v: u32) -> i128 {
    let mut n = x;
    let p = p as i128;
    for _ in 0..v {
        n /= p;
    }
    n
}

/// Balanced representative of `x` mod `m`.
fn balance(x: i128, m: i128) -> i128 {
    let mut r = x % m;
    if r > m / 2 {
        r -= m;
    } else if r < -(m / 2) {
        r += m;
    }
    r
}

fn fcol_axpy(b: &FCol, s: i128, a: &FCol, t: i128, m: i128) -> FCol {
    let mut out = Vec::with_capacity(b.len() + a.len());
    let mut i = 0;
    let mut j = 0;
    while i < b.len() || j < a.len() {
        let (row, vb, va) = if j >= a.len() || (i < b.len() && b[i].0 < a[j].0) {
            let r = (b[i].0, b[i].1, 0i128);
            i += 1;
            r
        } else if i >= b.len() || a[j].0 < b[i].0 {
            let r = (a[j].0, 0i128, a[j].1);
            j += 1;
            r
        } else {
            let r = (b[i].0, b[i].1, a[j].1);
            i += 1;
            j += 1;
            r
        };
        let x = balance(s * vb + t * va, m);
        if x != 0 {
            out.push((row, x));
        }
    }
    out
}

fn to_fcol(c: &SparseCol, m: i128) -> FCol {
    let mb = BigInt::from(m);
    c.iter()
        .filter_map(|(r, x)| {
            let red = ((x % &mb) + &mb) % &mb;
            let red = red.to_i128().expect("reduced entry fits i128");
            let red = balance(red, m);
            (red != 0).then_some((*r, red))
        })
        .collect()
}

fn from_fcol(c: &FCol) -> SparseCol {
    c.iter().map(|(r, x)| (*r, BigInt::from(*x))).collect()
}

/// `(s, t)` with `s*b + t*a = 0` at the leading entry, `val(a) <= val(b)`;
/// `s` is a unit.
fn fclear(p: u32, a: i128, va: u32, b: i128, vb: u32) -> (i128, i128) {
    let ua = funit(a, p, va);
    let ub = funit(b, p, vb);
    let shift = (p as i128).pow(vb - va);
    (ua, -(ub * shift))
}

/// Machine-word staircase over `Z/p^K`, with optional tracking.
pub struct FastStaircase {
    pub p: u32,
    pub modulus: i128,
    /// lead row -> (valuation, column, combination over tracked columns)
    pub cols: BTreeMap<u32, (u32, FCol, Option<FCol>)>,
    tracking: bool,
    pub kernel: Vec<FCol>,
}

impl FastStaircase {
    pub fn empty(p: u32, tracking: bool) -> Self {
        FastStaircase {
            p,
            modulus: (p as i128).pow(mod_exponent(p)),
            cols: BTreeMap::new(),
            tracking,
            kernel: Vec::new(),
        }
    }

    pub fn insert_raw(&mut self, col: &SparseCol, combo: Option<FCol>) {
        let f = to_fcol(col, self.modulus);
        self.insert(f, combo);
    }

    pub fn insert(&mut self, mut col: FCol, mut combo: Option<FCol>) {
        let m = self.modulus;
        loop {
            if col.is_empty() {
                if let Some(c) = combo {
                    if !c.is_empty() {
                        self.kernel.push(c);
                    }
                }
                return;
            }
            let lead_row = col[0].0;
            let lead_val = fval(col[0].1, self.p);
            match self.cols.get_mut(&lead_row) {
                None => {
                    self.cols.insert(lead_row, (lead_val, col, combo));
                    return;
                }
                Some(entry) => {
                    if lead_val >= entry.0 {
                        let (s, t) = fclear(self.p, entry.1[0].1, entry.0, col[0].1, lead_val);
                        let newcol = fcol_axpy(&col, s, &entry.1, t, m);
                        if self.tracking {
                            let c = combo.take().unwrap_or_default();
                            let pt = entry.2.clone().unwrap_or_default();
                            combo = Some(fcol_axpy(&c, s, &pt, t, m));
                        }
                        col = newcol;
                    } else {
                        let (pval, pcol, ptrack) =
                            std::mem::replace(entry, (lead_val, col.clone(), combo.clone()));
                        let (s, t) = fclear(self.p, col[0].1, lead_val, pcol[0].1, pval);
                        let newcol = fcol_axpy(&pcol, s, &col, t, m);
                        if self.tracking {
                            let c = combo.take().unwrap_or_default();
                            let pt = ptrack.unwrap_or_default();
                            combo = Some(fcol_axpy(&pt, s, &c, t, m));
                        }
                        col = newcol;
                    }
                }
            }
        }
    }

    pub fn reduce(&self, x: &FCol) -> FCol {
        let m = self.modulus;
        let mut x = x.clone();
        loop {
            if x.is_empty() {
                return x;
            }
            let row = x[0].0;
            let xval = fval(x[0].1, self.p);
            match self.cols.get(&row) {
                None => return x,
                Some((pval, pcol, _)) => {
                    if xval < *pval {
                        return x;
                    }
                    let (s, t) = fclear(self.p, pcol[0].1, *pval, x[0].1, xval);
                    x = fcol_axpy(&x, s, pcol, t, m);
                }
            }
        }
    }

    pub fn contains(&self, x: &SparseCol) -> bool {
        self.reduce(&to_fcol(x, self.modulus)).is_empty()
    }

    pub fn rank(&self) -> usize {
        self.cols.len()
    }

    /// Solve `x = sum c_i col_i` over the tracked columns, modulo the
    /// untracked ones; `None` if unsolvable over `Z_(p)`.
    pub fn solve(&self, x: &SparseCol) -> Option<Vec<(u32, Scalar)>> {
        assert!(self.tracking);
        let m = self.modulus;
        let mut x = to_fcol(x, m);
        let mut scale: i128 = 1;
        let mut combo: FCol = Vec::new();
        loop {
            if x.is_empty() {
                break;
            }
            let row = x[0].0;
            let xval = fval(x[0].1, self.p);
            match self.cols.get(&row) {
                None => return None,
                Some((pval, pcol, ptrack)) => {
                    if xval < *pval {
                        return None;
                    }
                    let (s, t) = fclear(self.p, pcol[0].1, *pval, x[0].1, xval);
                    x = fcol_axpy(&x, s, pcol, t, m);
                    scale = balance(scale * s, m);
                    let pt = ptrack.clone().unwrap_or_default();
                    combo = fcol_axpy(&combo, s, &pt, -t, m);
                }
            }
        }
        let sc = Scalar::from_bigint(BigInt::from(scale));
        let sc_inv = sc.inv()?;
        if !sc_inv.is_p_local(self.p) {
            return None;
        }
        Some(
            combo
                .into_iter()
                .map(|(i, c)| (i, &Scalar::from_bigint(BigInt::from(c)) * &sc_inv))
                .collect(),
        )
    }
}

/// Exact big-integer staircase for the rationalized case, where `p` is a
/// unit and entries are tamed by full content stripping.
pub struct BigStaircase {
    pub cols: BTreeMap<u32, (SparseCol, Option<SparseCol>)>,
    tracking: bool,
    pub kernel: Vec<SparseCol>,
}

fn col_axpy(b: &SparseCol, s: &BigInt, a: &SparseCol, t: &BigInt) -> SparseCol {
    let mut out = Vec::with_capacity(b.len() + a.len());
    let mut i = 0;
    let mut j = 0;
    while i < b.len() || j < a.len() {
        let (row, vb, va) = if j >= a.len() || (i < b.len() && b[i].0 < a[j].0) {
            let r = (b[i].0, b[i].1.clone(), BigInt::zero());
            i += 1;
            r
        } else if i >= b.len() || a[j].0 < b[i].0 {
            let r = (a[j].0, BigInt::zero(), a[j].1.clone());
            j += 1;
            r
        } else {
            let r = (b[i].0, b[i].1.clone(), a[j].1.clone());
            i += 1;
            j += 1;
            r
        };
        let x = s * vb + t * va;
        if !x.is_zero() {
            out.push((row, x));
        }
    }
    out
}

fn strip_full(col: &mut SparseCol) {
    use num_integer::Integer;
    let mut g = BigInt::zero();
    for (_, x) in col.iter() {
        g = g.gcd(x);
        if g.is_one() {
            return;
        }
    }
    if g.is_zero() || g.is_one() {
        return;
    }
    for (_, x) in col.iter_mut() {
        *x /= &g;
    }
}

impl BigStaircase {
    pub fn empty(tracking: bool) -> Self {
        BigStaircase {
            cols: BTreeMap::new(),
            tracking,
            kernel: Vec::new(),
        }
    }

    pub fn insert(&mut self, mut col: SparseCol, mut combo: Option<SparseCol>) {
        loop {
            if col.is_empty() {
                if let Some(c) = combo {
                    if !c.is_empty() {
                        self.kernel.push(c);
                    }
                }
                return;
            }
            let lead_row = col[0].0;
            match self.cols.get_mut(&lead_row) {
                None => {
                    self.cols.insert(lead_row, (col, combo));
                    return;
                }
                Some(entry) => {
                    let s = entry.0[0].1.clone();
                    let t = -&col[0].1;
                    let mut newcol = col_axpy(&col, &s, &entry.0, &t);
                    if self.tracking {
                        let c = combo.take().unwrap_or_default();
                        let pt = entry.1.clone().unwrap_or_default();
                        let mut newcombo = col_axpy(&c, &s, &pt, &t);
                        strip_pair(&mut newcol, &mut newcombo);
                        combo = Some(newcombo);
                    } else {
                        strip_full(&mut newcol);
                    }
                    col = newcol;
                }
            }
        }
    }

    pub fn reduce(&self, x: &SparseCol) -> SparseCol {
        let mut x = x.clone();
        loop {
            if x.is_empty() {
                return x;
            }
            match self.cols.get(&x[0].0) {
                None => return x,
                Some((pcol, _)) => {
                    let s = pcol[0].1.clone();
                    let t = -&x[0].1;
                    x = col_axpy(&x, &s, pcol, &t);
                    strip_full(&mut x);
                }
            }
        }
    }

    pub fn solve(&self, x: &SparseCol) -> Option<Vec<(u32, Scalar)>> {
        assert!(self.tracking);
        let mut x = x.clone();
        let mut scale = BigInt::one();
        let mut combo: SparseCol = Vec::new();
        loop {
            if x.is_empty() {
                break;
            }
            match self.cols.get(&x[0].0) {
                None => return None,
                Some((pcol, ptrack)) => {
                    let s = pcol[0].1.clone();
                    let t = -&x[0].1;
                    x = col_axpy(&x, &s, pcol, &t);
                    scale *= &s;
                    let pt = ptrack.clone().unwrap_or_default();
                    combo = col_axpy(&combo, &s, &pt, &(-t));
                }
            }
        }
        let sc_inv = Scalar::from_bigint(scale).inv()?;
        Some(
            combo
                .into_iter()
                .map(|(i, c)| (i, &Scalar::from_bigint(c) * &sc_inv))
                .collect(),
        )
    }
}

fn strip_pair(col: &mut SparseCol, combo: &mut SparseCol) {
    use num_integer::Integer;
    let mut g = BigInt::zero();
    for (_, x) in col.iter().chain(combo.iter()) {
        g = g.gcd(x);
        if g.is_one() {
            return;
        }
    }
    if g.is_zero() || g.is_one() {
        return;
    }
    for (_, x) in col.iter_mut().chain(combo.iter_mut()) {
        *x /= &g;
    }
}

/// Unified staircase facade over the two engines.
pub enum Staircase {
    Fast(FastStaircase),
    Big(BigStaircase),
}

impl Staircase {
    pub fn new(columns: Vec<SparseCol>, p: u32, rational: bool, track: bool) -> Self {
        if rational {
            let mut st = BigStaircase::empty(track);
            for (idx, col) in columns.into_iter().enumerate() {
                let combo = track.then(|| vec![(idx as u32, BigInt::one())]);
                st.insert(col, combo);
            }
            Staircase::Big(st)
        } else {
            let mut st = FastStaircase::empty(p, track);
            for (idx, col) in columns.into_iter().enumerate() {
                let combo = track.then(|| vec![(idx as u32, 1i128)]);
                st.insert_raw(&col, combo);
            }
            Staircase::Fast(st)
        }
    }

    pub fn contains(&self, x: &SparseCol) -> bool {
        match self {
            Staircase::Fast(st) => st.contains(x),
            Staircase::Big(st) => st.reduce(x).is_empty(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Staircase::Fast(st) => st.cols.len(),
            Staircase::Big(st) => st.cols.len(),
        }
    }

    pub fn solve(&self, x: &SparseCol) -> Option<Vec<(u32, Scalar)>> {
        match self {
            Staircase::Fast(st) => st.solve(x),
            Staircase::Big(st) => st.solve(x),
        }
    }

    /// The echelonized columns (same span as the input).
    pub fn echelon(&self) -> Vec<SparseCol> {
        match self {
            Staircase::Fast(st) => st.cols.values().map(|(_, c, _)| from_fcol(c)).collect(),
            Staircase::Big(st) => st.cols.values().map(|(c, _)| c.clone()).collect(),
        }
    }
}

/// Generators of `{ x : sum x_i col_i = 0 }` over `Z_(p)`.
pub fn kernel_combos(columns: Vec<SparseCol>, p: u32, rational: bool) -> Vec<SparseCol> {
    let n = columns.len();
    kernel_combos_tracked(columns, n, p, rational)
}

/// Kernel combinations projected to the first `tracked` columns.  Columns
/// past `tracked` participate in the elimination but their coefficients
/// are not recorded; combinations supported entirely on them are dropped.
/// Untracked columns are inserted first: they are typically pre-echelonized
/// relation lattices.
pub fn kernel_combos_tracked(
    columns: Vec<SparseCol>,
    tracked: usize,
    p: u32,
    rational: bool,
) -> Vec<SparseCol> {
    let mut order: Vec<(usize, SparseCol)> = columns.into_iter().enumerate().collect();
    order.sort_by_key(|(idx, _)| *idx < tracked);
    if rational {
        let mut st = BigStaircase::empty(true);
        for (idx, col) in order {
            let combo = if idx < tracked {
                vec![(idx as u32, BigInt::one())]
            } else {
                Vec::new()
            };
            st.insert(col, Some(combo));
        }
        st.kernel
    } else {
        let mut st = FastStaircase::empty(p, true);
        for (idx, col) in order {
            let combo = if idx < tracked {
                vec![(idx as u32, 1i128)]
            } else {
                Vec::new()
            };
            st.insert_raw(&col, Some(combo));
        }
        st.kernel.iter().map(|c| from_fcol(c)).collect()
    }
}

/// Elementary divisor exponents (ascending) and cokernel free rank of the
/// map spanned by `columns` into `Z^nrows`.
pub fn snf_divisors(
    columns: &[SparseCol],
    nrows: usize,
    p: u32,
    rational: bool,
) -> (Vec<u32>, usize) {
    if rational {
        // all divisors are units: only the rank matters
        let mut st = BigStaircase::empty(false);
        for col in columns {
            st.insert(col.clone(), None);
        }
        let rank = st.cols.len();
        return (vec![0; rank], nrows - rank);
    }
    let modulus = (p as i128).pow(mod_exponent(p));
    let mut cols: Vec<FCol> = columns
        .iter()
        .map(|c| to_fcol(c, modulus))
        .filter(|c| !c.is_empty())
        .collect();
    let mut exps = Vec::new();
    while !cols.is_empty() {
        // global minimum valuation entry
        let mut best: Option<(usize, u32, u32)> = None;
        'scan: for (ci, c) in cols.iter().enumerate() {
            for (r, x) in c.iter() {
                let v = fval(*x, p);
                if best.map_or(true, |b| v < b.2) {
                    best = Some((ci, *r, v));
                    if v == 0 {
                        break 'scan;
                    }
                }
            }
        }
        let (pc, pr, pv) = best.unwrap();
        exps.push(pv);
        let pivot = cols.swap_remove(pc);
        let pentry = pivot
            .iter()
            .find(|(r, _)| *r == pr)
            .map(|(_, x)| *x)
            .unwrap();
        let mut next = Vec::with_capacity(cols.len());
        for c in cols.into_iter() {
            let entry = c.iter().find(|(r, _)| *r == pr).map(|(_, x)| *x);
            let reduced = match entry {
                None => c,
                Some(x) => {
                    let xv = fval(x, p);
                    debug_assert!(xv >= pv);
                    let (s, t) = fclear(p, pentry, pv, x, xv);
                    fcol_axpy(&c, s, &pivot, t, modulus)
                }
            };
            // the pivot row is now zero in every other column
            let reduced: FCol = reduced.into_iter().filter(|(r, _)| *r != pr).collect();
            if !reduced.is_empty() {
                next.push(reduced);
            }
        }
        cols = next;
    }
    exps.sort_unstable();
    let rank = exps.len();
    (exps, nrows - rank)
}

/// Public Smith decomposition with transforms: `A = left * D * right` where
/// `D` is diagonal with the recorded `p`-power divisors.
#[derive(Clone, Debug)]
pub struct SmithDecomposition {
    pub p: u32,
    pub rows: usize,
    pub cols: usize,
    /// Exponents of the nonzero elementary divisors, ascending; units have
    /// exponent 0.
    pub exponents: Vec<u32>,
    pub left: Vec<Vec<Scalar>>,
    pub right: Vec<Vec<Scalar>>,
    /// Columns spanning `ker A` over `Z_(p)`.
    pub kernel: Vec<Vec<Scalar>>,
}

impl SmithDecomposition {
    pub fn rank(&self) -> usize {
        self.exponents.len()
    }

    /// Cokernel `Z_(p)^rows / im A`: torsion exponents (nonzero only) and
    /// free rank.
    pub fn cokernel(&self) -> (Vec<u32>, usize) {
        let tors: Vec<u32> = self.exponents.iter().copied().filter(|&e| e > 0).collect();
        (tors, self.rows - self.rank())
    }

    pub fn diagonal(&self) -> Vec<Vec<Scalar>> {
        let mut d = vec![vec![Scalar::zero(); self.cols]; self.rows];
        for (i, e) in self.exponents.iter().enumerate() {
            d[i][i] = Scalar::from_int((self.p as i64).pow(*e));
        }
        d
    }

    /// `left * D * right` reassembles the input.
    pub fn reassemble(&self) -> Vec<Vec<Scalar>> {
        let d = self.diagonal();
        let ld = mat_mul(&self.left, &d);
        mat_mul(&ld, &self.right)
    }
}

fn mat_mul(a: &[Vec<Scalar>], b: &[Vec<Scalar>]) -> Vec<Vec<Scalar>> {
    let n = a.len();
    let k = if n > 0 { a[0].len() } else { 0 };
    let m = if b.is_empty() { 0 } else { b[0].len() };
    let mut out = vec![vec![Scalar::zero(); m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = Scalar::zero();
            for t in 0..k {
                s = &s + &(&a[i][t] * &b[t][j]);
            }
            out[i][j] = s;
        }
    }
    out
}

/// Dense Smith decomposition over `Z_(p)` with transforms.  Intended for
/// matrices of moderate size; the degreewise engine uses the sparse
/// staircase routines instead.
pub fn smith_decompose(a: &[Vec<Scalar>], p: u32) -> SmithDecomposition {
    let rows = a.len();
    let cols = if rows > 0 { a[0].len() } else { 0 };
    let mut m: Vec<Vec<Scalar>> = a.to_vec();
    let mut uinv = identity(rows);
    let mut v = identity(cols);
    let mut vinv = identity(cols);

    let mut k = 0usize;
    let mut exponents = Vec::new();
    while k < rows && k < cols {
        let mut best: Option<(usize, usize, i64)> = None;
        for i in k..rows {
            for j in k..cols {
                if let Some(vv) = m[i][j].p_valuation(p) {
                    if best.map_or(true, |b| vv < b.2) {
                        best = Some((i, j, vv));
                    }
                }
            }
        }
        let Some((pi, pj, pv)) = best else { break };
        if pi != k {
            m.swap(pi, k);
            for r in uinv.iter_mut() {
                r.swap(pi, k);
            }
        }
        if pj != k {
            for row in m.iter_mut() {
                row.swap(pj, k);
            }
            for r in v.iter_mut() {
                r.swap(pj, k);
            }
            vinv.swap(pj, k);
        }
        let unit = &m[k][k] * &Scalar::from_int((p as i64).pow(pv as u32)).inv().unwrap();
        let unit_inv = unit.inv().unwrap();
        for j in 0..cols {
            m[k][j] = &m[k][j] * &unit_inv;
        }
        for r in uinv.iter_mut() {
            r[k] = &r[k] * &unit;
        }
        for i in 0..rows {
            if i == k || m[i][k].is_zero() {
                continue;
            }
            let q = &m[i][k] * &m[k][k].inv().unwrap();
            for j in 0..cols {
                let sub = &q * &m[k][j];
                m[i][j] = &m[i][j] - &sub;
            }
            for r in uinv.iter_mut() {
                let add = &q * &r[i];
                r[k] = &r[k] + &add;
            }
        }
        for j in 0..cols {
            if j == k || m[k][j].is_zero() {
                continue;
            }
            let q = &m[k][j] * &m[k][k].inv().unwrap();
            for i in 0..rows {
                let sub = &q * &m[i][k];
                m[i][j] = &m[i][j] - &sub;
            }
            for r in v.iter_mut() {
                let sub = &q * &r[k];
                r[j] = &r[j] - &sub;
            }
            for t in 0..cols {
                let add = &q * &vinv[j][t];
                vinv[k][t] = &vinv[k][t] + &add;
            }
        }
        exponents.push(pv as u32);
        k += 1;
    }
    debug_assert!(exponents.windows(2).all(|w| w[0] <= w[1]));
    let rank = exponents.len();
    let kernel: Vec<Vec<Scalar>> = (rank..cols)
        .map(|j| (0..cols).map(|i| v[i][j].clone()).collect())
        .collect();
    SmithDecomposition {
        p,
        rows,
        cols,
        exponents,
        left: uinv,
        right: vinv,
        kernel,
    }
}

fn identity(n: usize) -> Vec<Vec<Scalar>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Scalar::one() } else { Scalar::zero() })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[i64]]) -> Vec<Vec<Scalar>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| Scalar::from_int(x)).collect())
            .collect()
    }

    #[test]
    fn diag_2_6_at_p2() {
        // 6 = 2 * unit at p = 2, so divisors are (2, 2): exponents (1, 1)
        let d = smith_decompose(&mat(&[&[2, 0], &[0, 6]]), 2);
        assert_eq!(d.exponents, vec![1, 1]);
        assert_eq!(d.reassemble(), mat(&[&[2, 0], &[0, 6]]));
    }

    #[test]
    fn identity_is_units() {
        let d = smith_decompose(&mat(&[&[1, 0], &[0, 1]]), 2);
        assert_eq!(d.exponents, vec![0, 0]);
        assert_eq!(d.cokernel(), (vec![], 0));
    }

    #[test]
    fn single_row_p() {
        // [p 0]: Z^2 -> Z, image pZ, cokernel Z/p
        let d = smith_decompose(&mat(&[&[2, 0]]), 2);
        assert_eq!(d.exponents, vec![1]);
        assert_eq!(d.cokernel(), (vec![1], 0));
        assert_eq!(d.kernel.len(), 1);
        assert_eq!(d.reassemble(), mat(&[&[2, 0]]));
    }

    #[test]
    fn empty_matrix() {
        let d = smith_decompose(&[], 2);
        assert_eq!(d.exponents, Vec::<u32>::new());
    }

    #[test]
    fn staircase_membership() {
        // span{(2,1)} in Z^2 at p=2: (4,2) in span, (0,1) not
        let cols = vec![vec![(0u32, BigInt::from(2)), (1, BigInt::from(1))]];
        let st = Staircase::new(cols, 2, false, false);
        assert!(st.contains(&vec![(0, BigInt::from(4)), (1, BigInt::from(2))]));
        assert!(!st.contains(&vec![(1, BigInt::from(1))]));
    }

    #[test]
    fn kernel_combos_simple() {
        // cols (2,0), (1,0): kernel generated by combinations with
        // 2*x0 + 1*x1 = 0
        let cols = vec![
            vec![(0u32, BigInt::from(2))],
            vec![(0u32, BigInt::from(1))],
        ];
        let ker = kernel_combos(cols, 2, false);
        assert!(!ker.is_empty());
        for k in &ker {
            let mut s = BigInt::zero();
            for (i, c) in k {
                s += c * if *i == 0 { 2 } else { 1 };
            }
            assert!(s.is_zero());
        }
    }

    #[test]
    fn snf_divisors_vs_dense() {
        let a = mat(&[&[2, 4, 0], &[0, 8, 2], &[6, 2, 2]]);
        let dense = smith_decompose(&a, 2);
        let cols: Vec<SparseCol> = (0..3)
            .map(|j| {
                (0..3)
                    .filter_map(|i| {
                        let x = a[i][j].numer().clone();
                        (!x.is_zero()).then_some((i as u32, x))
                    })
                    .collect()
            })
            .collect();
        let (exps, free) = snf_divisors(&cols, 3, 2, false);
        assert_eq!(exps, dense.exponents);
        assert_eq!(free, 3 - dense.rank());
    }

    #[test]
    fn solve_tracked() {
        // (6) = 2*(3): solving 6 = c*4 fails over Z_(2) (c = 3/2),
        // solving 6 = c*3 gives c = 2
        let cols = vec![vec![(0u32, BigInt::from(4))]];
        let st = Staircase::new(cols, 2, false, true);
        assert!(st.solve(&vec![(0u32, BigInt::from(6))]).is_none());
        let cols = vec![vec![(0u32, BigInt::from(3))]];
        let st = Staircase::new(cols, 2, false, true);
        let sol = st.solve(&vec![(0u32, BigInt::from(6))]).unwrap();
        assert_eq!(sol, vec![(0u32, Scalar::from_int(2))]);
    }
}

/// Quotient coordinates of `Z^n / span(columns)`: an explicit projection
/// onto `coords` coordinates (free ones plus `p`-power torsion ones, unit
/// divisors dropped) together with a section.  Faithful modulo `p^K`
/// saturation.  In the rational case the identity form is returned (every
/// divisor is a unit there only when `p` itself is inverted; callers keep
/// the raw relations instead).
pub struct QuotientForm {
    pub n: usize,
    /// Torsion exponents per coordinate; `None` means free.
    pub coords: Vec<Option<u32>>,
    /// `coords x n` projection rows.
    pub proj: Vec<FColPub>,
    /// `n`-vectors representing each coordinate.
    pub section: Vec<FColPub>,
    pub p: u32,
    pub modulus: i128,
    pub identity: bool,
}

pub type FColPub = Vec<(u32, i128)>;

impl QuotientForm {
    pub fn identity_form(n: usize, p: u32) -> Self {
        let modulus = (p as i128).pow(mod_exponent(p));
        QuotientForm {
            n,
            coords: vec![None; n],
            proj: (0..n).map(|i| vec![(i as u32, 1i128)]).collect(),
            section: (0..n).map(|i| vec![(i as u32, 1i128)]).collect(),
            p,
            modulus,
            identity: true,
        }
    }

    /// Project a big-integer vector into quotient coordinates.
    pub fn project(&self, x: &SparseCol) -> FColPub {
        let f = to_fcol(x, self.modulus);
        self.project_f(&f)
    }

    pub fn project_f(&self, x: &FColPub) -> FColPub {
        let mut out = Vec::new();
        for (j, row) in self.proj.iter().enumerate() {
            let mut acc: i128 = 0;
            let mut i = 0;
            let mut k = 0;
            while i < row.len() && k < x.len() {
                match row[i].0.cmp(&x[k].0) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => k += 1,
                    std::cmp::Ordering::Equal => {
                        acc = balance(acc + balance(row[i].1 * x[k].1, self.modulus), self.modulus);
                        i += 1;
                        k += 1;
                    }
                }
            }
            // torsion coordinates live mod p^e
            let acc = match self.coords[j] {
                Some(e) => balance(acc, (self.p as i128).pow(e)),
                None => acc,
            };
            if acc != 0 {
                out.push((j as u32, acc));
            }
        }
        out
    }

    /// Torsion relation columns in quotient coordinates.
    pub fn torsion_rels(&self) -> Vec<SparseCol> {
        self.coords
            .iter()
            .enumerate()
            .filter_map(|(j, e)| {
                e.map(|e| vec![(j as u32, BigInt::from(self.p).pow(e))])
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Compute quotient coordinates for `Z^n / span(columns)` over `Z_(p)`.
pub fn quotient_form(columns: &[SparseCol], n: usize, p: u32) -> QuotientForm {
    let modulus = (p as i128).pow(mod_exponent(p));
    let mut cols: Vec<FCol> = columns
        .iter()
        .map(|c| to_fcol(c, modulus))
        .filter(|c| !c.is_empty())
        .collect();
    // dense row transform and its inverse
    let mut u: Vec<Vec<i128>> = (0..n)
        .map(|i| {
            let mut r = vec![0i128; n];
            r[i] = 1;
            r
        })
        .collect();
    let mut uinv = u.clone();
    let mut pivoted: Vec<Option<u32>> = vec![None; n]; // row -> divisor exp
    let mut alive_rows: Vec<bool> = vec![true; n];
    loop {
        // global min valuation entry among alive rows
        let mut best: Option<(usize, u32, u32)> = None;
        'scan: for (ci, c) in cols.iter().enumerate() {
            for (r, x) in c.iter() {
                if !alive_rows[*r as usize] {
                    continue;
                }
                let v = fval(*x, p);
                if best.map_or(true, |b| v < b.2) {
                    best = Some((ci, *r, v));
                    if v == 0 {
                        break 'scan;
                    }
                }
            }
        }
        let Some((pc, pr, pv)) = best else { break };
        let pivot = cols.swap_remove(pc);
        let pentry = *pivot
            .iter()
            .find(|(r, _)| *r == pr)
            .map(|(_, x)| x)
            .unwrap();
        let pu = funit(pentry, p, pv);
        let pu_inv = mod_inverse(pu, modulus);
        // row ops clearing the pivot column at every other alive row:
        // row_s <- row_s - (x_s / p^pv * pu_inv) * row_pr  (valuations allow)
        for (r, x) in &pivot {
            if *r == pr || !alive_rows[*r as usize] {
                continue;
            }
            let q = balance(funit(*x, p, fval(*x, p)) * (p as i128).pow(fval(*x, p) - pv), modulus);
            let q = balance(q * pu_inv, modulus);
            // A: row_r -= q row_pr  ==> every column with an entry at pr
            for c in cols.iter_mut() {
                row_op(c, *r as u32, pr, q, modulus);
            }
            // U: row_r -= q row_pr ; Uinv: col_pr += q col_r
            for j in 0..n {
                u[*r as usize][j] = balance(u[*r as usize][j] - q * u[pr as usize][j], modulus);
            }
            for i in 0..n {
                uinv[i][pr as usize] =
                    balance(uinv[i][pr as usize] + q * uinv[i][*r as usize], modulus);
            }
        }
        // column ops clearing the pivot row elsewhere (untracked): the
        // pivot column is now concentrated at row pr
        for c in cols.iter_mut() {
            if let Some(pos) = c.iter().position(|(r, _)| *r == pr) {
                let x = c[pos].1;
                let xv = fval(x, p);
                debug_assert!(xv >= pv);
                let q = balance(funit(x, p, xv) * (p as i128).pow(xv - pv) * pu_inv, modulus);
                // c -= q * pivot, which only touches row pr now
                let _ = q;
                c.remove(pos);
            }
            // note: the pivot column has no other alive entries, so no
            // other rows change
        }
        cols.retain(|c| !c.is_empty());
        pivoted[pr as usize] = Some(pv);
        alive_rows[pr as usize] = false;
    }
    // coordinates: free rows and torsion rows with positive exponent
    let mut coords = Vec::new();
    let mut proj = Vec::new();
    let mut section = Vec::new();
    for r in 0..n {
        let keep = match pivoted[r] {
            None => Some(None),
            Some(0) => None,
            Some(e) => Some(Some(e)),
        };
        if let Some(exp) = keep {
            coords.push(exp);
            proj.push(
                (0..n)
                    .filter_map(|j| {
                        let x = u[r][j];
                        (x != 0).then_some((j as u32, x))
                    })
                    .collect(),
            );
            section.push(
                (0..n)
                    .filter_map(|i| {
                        let x = uinv[i][r];
                        (x != 0).then_some((i as u32, x))
                    })
                    .collect(),
            );
        }
    }
    QuotientForm {
        n,
        coords,
        proj,
        section,
        p,
        modulus,
        identity: false,
    }
}

fn mod_inverse(a: i128, m: i128) -> i128 {
    // extended euclid; a is a unit mod m
    let (mut old_r, mut r) = (a.rem_euclid(m), m);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    debug_assert!(old_r == 1 || old_r == -1);
    let inv = if old_r == 1 { old_s } else { -old_s };
    balance(inv.rem_euclid(m), m)
}

fn row_op(c: &mut FCol, target: u32, source: u32, q: i128, m: i128) {
    // c[target] -= q * c[source]
    let src = c.iter().find(|(r, _)| *r == source).map(|(_, x)| *x);
    let Some(x) = src else { return };
    let delta = balance(q * x, m);
    if delta == 0 {
        return;
    }
    match c.binary_search_by_key(&target, |e| e.0) {
        Ok(pos) => {
            c[pos].1 = balance(c[pos].1 - delta, m);
            if c[pos].1 == 0 {
                c.remove(pos);
            }
        }
        Err(pos) => c.insert(pos, (target, balance(-delta, m))),
    }
}

#[cfg(test)]
mod qf_tests {
    use super::*;

    #[test]
    fn quotient_form_matches_divisors() {
        // Z^3 / span{(2,0,0), (0,4,2), (2,4,2)} at p = 2
        let cols: Vec<SparseCol> = vec![
            vec![(0, BigInt::from(2))],
            vec![(1, BigInt::from(4)), (2, BigInt::from(2))],
            vec![(0, BigInt::from(2)), (1, BigInt::from(4)), (2, BigInt::from(2))],
        ];
        let qf = quotient_form(&cols, 3, 2);
        let (exps, free) = snf_divisors(&cols, 3, 2, false);
        let mut qf_tors: Vec<u32> = qf.coords.iter().filter_map(|e| *e).collect();
        qf_tors.sort_unstable();
        let expect: Vec<u32> = exps.into_iter().filter(|&e| e > 0).collect();
        assert_eq!(qf_tors, expect);
        let qf_free = qf.coords.iter().filter(|e| e.is_none()).count();
        assert_eq!(qf_free, free);
        // every relation projects to zero (mod the torsion)
        for c in &cols {
            assert!(qf.project(c).is_empty(), "relation must project to 0");
        }
        // a non-member projects to nonzero
        let x: SparseCol = vec![(2, BigInt::from(1))];
        assert!(!qf.project(&x).is_empty());
    }
}

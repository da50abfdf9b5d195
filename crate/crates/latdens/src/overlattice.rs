//! Enumeration of integral overlattices L ⊆ L′ ⊆ L′^∨ inside L ⊗ Q, the
//! index data ℓ(L′/L), and sublattice restriction.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Mutex;

use num_traits::{One, Zero};
use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::finiteq::{reduce_mod_p, FiniteQuadSpace};
use crate::padic::{hermite_form, lattice_key, PrimeCtx, QuadLattice};
use crate::qmat::{self, q_int, q_pow, Q, QMat};

/// One integral overlattice L′ ⊇ L: canonical basis (columns, L-coordinates),
/// co-length ℓ(L′/L), and the invariant data the Siegel-series sums need.
#[derive(Clone, Debug)]
pub struct OverlatticeEntry {
    pub basis: QMat,
    pub ell: i64,
    pub t: usize,
    pub val: i64,
    pub space: FiniteQuadSpace,
    pub lattice: QuadLattice,
}

impl OverlatticeEntry {
    /// sgn_k(L′) for the requested parity k.
    pub fn sgn_for(&self, k: i64) -> i32 {
        self.space.sgn_for(k)
    }
}

/// Index-p integral overlattices of L: exactly the L + Z_p·(v/p) with
/// v ∈ L, v/p ∈ L^∨ and integral extended Gram, deduplicated by HNF key.
pub fn minimal_overlattices(l: &QuadLattice) -> Result<Vec<QMat>> {
    l.check_integral()?;
    let ctx = l.ctx;
    let p = ctx.p;
    let n = l.rank();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    // one representative per line of (F_p)^n: first nonzero coordinate 1
    for pivot in 0..n {
        let free = n - pivot - 1;
        let total = (p as u128).pow(free as u32);
        for mut k in 0..total {
            let mut v = vec![Q::zero(); n];
            v[pivot] = Q::one();
            for slot in pivot + 1..n {
                v[slot] = q_int((k % p as u128) as i64);
                k /= p as u128;
            }
            // v/p ∈ L^∨: G·v ≡ 0 mod p, and norm condition vᵀGv ≡ 0 mod p²
            let gv = qmat::mul_vec(&l.gram, &v);
            if !gv
                .iter()
                .all(|x| x.is_zero() || ctx.val_q(x).unwrap() >= 1)
            {
                continue;
            }
            let norm: Q = v
                .iter()
                .zip(&gv)
                .map(|(a, b)| a * b)
                .fold(Q::zero(), |s, t| s + t);
            if !(norm.is_zero() || ctx.val_q(&norm).unwrap() >= 2) {
                continue;
            }
            // basis: e_j for j ≠ pivot, plus v/p
            let mut basis = qmat::zeros(n, n);
            let mut col = 0;
            for j in 0..n {
                if j == pivot {
                    continue;
                }
                basis[j][col] = Q::one();
                col += 1;
            }
            let scale = q_pow(p, -1);
            for i in 0..n {
                basis[i][n - 1] = &v[i] * &scale;
            }
            let h = hermite_form(ctx, &basis);
            let key = lattice_key(ctx, &h);
            if seen.insert(key) {
                out.push(h);
            }
        }
    }
    Ok(out)
}

const GUARD_VAL: i64 = 12;
const GUARD_RANK: usize = 6;

static CACHE: Lazy<Mutex<LruCache>> = Lazy::new(|| Mutex::new(LruCache::new(4096)));

struct LruCache {
    capacity: usize,
    stamp: u64,
    map: HashMap<String, (Vec<OverlatticeEntry>, u64)>,
}

impl LruCache {
    fn new(capacity: usize) -> Self {
        LruCache {
            capacity,
            stamp: 0,
            map: HashMap::new(),
        }
    }

    fn get(&mut self, key: &str) -> Option<Vec<OverlatticeEntry>> {
        self.stamp += 1;
        let stamp = self.stamp;
        self.map.get_mut(key).map(|(v, s)| {
            *s = stamp;
            v.clone()
        })
    }

    fn insert(&mut self, key: String, value: Vec<OverlatticeEntry>) {
        self.stamp += 1;
        if self.map.len() >= self.capacity && !self.map.contains_key(&key) {
            if let Some(oldest) = self
                .map
                .iter()
                .min_by_key(|(_, (_, s))| *s)
                .map(|(k, _)| k.clone())
            {
                self.map.remove(&oldest);
            }
        }
        self.map.insert(key, (value, self.stamp));
    }
}

/// Adjust the bound on the in-memory overlattice cache.
pub fn set_cache_capacity(capacity: usize) {
    let mut c = CACHE.lock().unwrap();
    c.capacity = capacity.max(1);
}

fn gram_key(l: &QuadLattice) -> String {
    let mut s = format!("p{};", l.ctx.p);
    for row in &l.gram {
        for x in row {
            s.push_str(&x.to_string());
            s.push(',');
        }
        s.push('|');
    }
    s
}

/// The complete finite set {L′ : L ⊆ L′ ⊆ L′^∨}, including L itself
/// (ell = 0), sorted by canonical lattice key. Guarded against exponential
/// blowup unless `force` is set.
pub fn enumerate_integral_overlattices(
    l: &QuadLattice,
    force: bool,
) -> Result<Vec<OverlatticeEntry>> {
    l.check_integral()?;
    let val = l.val();
    if !force && (val > GUARD_VAL || l.rank() > GUARD_RANK) {
        return Err(Error::GuardTripped(format!(
            "overlattice enumeration with val {} and rank {}",
            val,
            l.rank()
        )));
    }
    let cache_key = gram_key(l);
    if let Some(hit) = CACHE.lock().unwrap().get(&cache_key) {
        return Ok(hit);
    }

    let ctx = l.ctx;
    let n = l.rank();
    let mut entries: Vec<OverlatticeEntry> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut frontier: VecDeque<QMat> = VecDeque::new();
    let id = hermite_form(ctx, &qmat::identity(n));
    seen.insert(lattice_key(ctx, &id));
    frontier.push_back(id);

    while let Some(basis) = frontier.pop_front() {
        let lp = l.with_basis(&basis);
        let inv_val = lp.val();
        let space = reduce_mod_p(&lp)?;
        entries.push(OverlatticeEntry {
            basis: basis.clone(),
            ell: (val - inv_val) / 2,
            t: space.t,
            val: inv_val,
            space,
            lattice: lp.clone(),
        });
        for step in minimal_overlattices(&lp)? {
            // step is in lp-coordinates; convert to L-coordinates
            let in_l = qmat::mul(&basis, &step);
            let h = hermite_form(ctx, &in_l);
            let key = lattice_key(ctx, &h);
            if seen.insert(key) {
                frontier.push_back(h);
            }
        }
    }
    entries.sort_by_key(|e| lattice_key(ctx, &e.basis));
    CACHE.lock().unwrap().insert(cache_key, entries.clone());
    Ok(entries)
}

/// Saturated basis of ker(A) ∩ Z_p^n for a rational constraint matrix A
/// (rows are constraints on vectors of length n). Row reduction with
/// minimal-valuation pivoting keeps every coefficient p-integral, so the
/// standard kernel basis spans the full saturated Z_p-lattice.
pub fn integral_kernel(ctx: PrimeCtx, a: &QMat) -> Vec<Vec<Q>> {
    let rows = a.len();
    let n = if rows == 0 { 0 } else { a[0].len() };
    let mut m = a.to_vec();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut next_row = 0;
    for _ in 0..rows {
        if next_row >= rows {
            break;
        }
        // choose the entry of minimal valuation among unprocessed rows/cols
        let mut best: Option<(i64, usize, usize)> = None;
        for i in next_row..rows {
            for (j, x) in m[i].iter().enumerate() {
                if pivots.iter().any(|&(_, pc)| pc == j) {
                    continue;
                }
                if let Some(v) = ctx.val_q(x) {
                    if best.map_or(true, |(bv, bi, bj)| (v, i, j) < (bv, bi, bj)) {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        let Some((_, pi, pc)) = best else { break };
        m.swap(next_row, pi);
        let f = m[next_row][pc].clone().recip();
        for x in m[next_row].iter_mut() {
            *x *= &f;
        }
        for i in 0..rows {
            if i == next_row || m[i][pc].is_zero() {
                continue;
            }
            let f = m[i][pc].clone();
            for j in 0..n {
                let sub = &f * &m[next_row][j];
                m[i][j] -= sub;
            }
        }
        pivots.push((next_row, pc));
        next_row += 1;
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let mut basis = Vec::new();
    for free in 0..n {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![Q::zero(); n];
        v[free] = Q::one();
        for &(pr, pc) in &pivots {
            v[pc] = -m[pr][free].clone();
            debug_assert!(v[pc].is_zero() || ctx.val_q(&v[pc]).unwrap() >= 0);
        }
        basis.push(v);
    }
    basis
}

/// Basis (columns, ambient coordinates) of L′ ∩ span(subspace), where L′ is
/// spanned by the columns of `basis_lp`.
pub fn restrict_to_sublattice(
    ctx: PrimeCtx,
    basis_lp: &QMat,
    subspace: &QMat,
) -> Result<QMat> {
    if subspace.is_empty() || subspace[0].is_empty() {
        return Err(Error::DegenerateSubspace);
    }
    // rows annihilating span(subspace)
    let ann = qmat::kernel(&qmat::transpose(subspace));
    if ann.len() + subspace[0].len() != subspace.len() {
        return Err(Error::DegenerateSubspace);
    }
    let ann_mat: QMat = ann;
    // x = B·λ lies in the span iff (ann·B)·λ = 0
    let constraint = qmat::mul(&ann_mat, basis_lp);
    let lam = integral_kernel(ctx, &constraint);
    if lam.len() != subspace[0].len() {
        return Err(Error::DegenerateSubspace);
    }
    let mut lam_cols = qmat::zeros(basis_lp[0].len(), lam.len());
    for (j, v) in lam.iter().enumerate() {
        for (i, x) in v.iter().enumerate() {
            lam_cols[i][j] = x.clone();
        }
    }
    Ok(qmat::mul(basis_lp, &lam_cols))
}

/// Canonical square basis of the Z_p-span of the columns of `gens`
/// (n × k with k ≥ n, full row rank): p-adic column echelon followed by
/// Hermite normalization.
pub fn span_basis(ctx: PrimeCtx, gens: &QMat) -> Result<QMat> {
    let n = gens.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let k = gens[0].len();
    let mut cols: Vec<Vec<Q>> = (0..k)
        .map(|j| (0..n).map(|i| gens[i][j].clone()).collect())
        .collect();
    let mut picked: Vec<Vec<Q>> = Vec::new();
    for row in (0..n).rev() {
        let mut best: Option<(i64, usize)> = None;
        for (j, c) in cols.iter().enumerate() {
            if let Some(v) = ctx.val_q(&c[row]) {
                if best.map_or(true, |(bv, _)| v < bv) {
                    best = Some((v, j));
                }
            }
        }
        let Some((v, j)) = best else {
            return Err(Error::DegenerateSubspace);
        };
        let pivot = cols.swap_remove(j);
        // normalize the pivot entry to p^v
        let u = &pivot[row] / q_pow(ctx.p, v);
        let pivot: Vec<Q> = pivot.iter().map(|x| x / &u).collect();
        // clear this row from the remaining columns (multipliers are p-integral)
        for c in cols.iter_mut() {
            if c[row].is_zero() {
                continue;
            }
            let f = &c[row] / &pivot[row];
            for i in 0..n {
                let sub = &f * &pivot[i];
                c[i] -= sub;
            }
        }
        picked.push(pivot);
    }
    picked.reverse();
    let mut out = qmat::zeros(n, n);
    for (j, col) in picked.iter().enumerate() {
        for i in 0..n {
            out[i][j] = col[i].clone();
        }
    }
    Ok(hermite_form(ctx, &out))
}

// ---------------------------------------------------------------------------
// Independent subgroup-theoretic cross-check
// ---------------------------------------------------------------------------

/// Count integral overlattices by enumerating subgroups of the discriminant
/// group L^∨/L whose elements all have integral norm. Exponential; intended
/// as a test oracle for rank ≤ 3, val ≤ 5.
pub fn count_overlattices_by_subgroups(l: &QuadLattice) -> Result<usize> {
    l.check_integral()?;
    let ctx = l.ctx;
    let d = l.diagonalize();
    let a: Vec<i64> = d.entries.iter().map(|&(ai, _)| ai).collect();
    let units: Vec<Q> = d
        .diag
        .iter()
        .zip(&a)
        .map(|(x, &ai)| x / q_pow(ctx.p, ai))
        .collect();
    let orders: Vec<u64> = a.iter().map(|&ai| ctx.p.pow(ai as u32)).collect();
    let size: u64 = orders.iter().product();
    if size > 4000 {
        return Err(Error::GuardTripped(format!(
            "discriminant group of size {size}"
        )));
    }
    // elements are tuples c mod p^{a_i}; norm(c) = Σ c_i² u_i p^{−a_i}
    let integral_norm = |c: &[u64]| -> bool {
        let mut norm = Q::zero();
        for i in 0..c.len() {
            norm += q_int(c[i] as i64) * q_int(c[i] as i64) * &units[i] * q_pow(ctx.p, -a[i]);
        }
        norm.is_zero() || ctx.val_q(&norm).unwrap() >= 0
    };
    let add = |x: &[u64], y: &[u64]| -> Vec<u64> {
        x.iter()
            .zip(y)
            .zip(&orders)
            .map(|((&xi, &yi), &o)| (xi + yi) % o)
            .collect()
    };
    let all_elements: Vec<Vec<u64>> = {
        let mut out = vec![vec![]];
        for &o in &orders {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..o).map(move |d| {
                        let mut v = prefix.clone();
                        v.push(d);
                        v
                    })
                })
                .collect();
        }
        out
    };
    let closure = |gens: &HashSet<Vec<u64>>| -> Option<Vec<Vec<u64>>> {
        let mut set: HashSet<Vec<u64>> = HashSet::new();
        let zero = vec![0u64; orders.len()];
        set.insert(zero);
        let mut queue: Vec<Vec<u64>> = gens.iter().cloned().collect();
        while let Some(g) = queue.pop() {
            if set.contains(&g) {
                continue;
            }
            if !integral_norm(&g) {
                return None;
            }
            let current: Vec<Vec<u64>> = set.iter().cloned().collect();
            set.insert(g.clone());
            for h in current {
                let s = add(&g, &h);
                if !set.contains(&s) {
                    queue.push(s);
                }
            }
        }
        let mut v: Vec<Vec<u64>> = set.into_iter().collect();
        v.sort();
        Some(v)
    };

    let mut found: HashSet<Vec<Vec<u64>>> = HashSet::new();
    let zero_group = closure(&HashSet::new()).expect("trivial subgroup");
    let mut queue = vec![zero_group.clone()];
    found.insert(zero_group);
    while let Some(group) = queue.pop() {
        for g in &all_elements {
            if group.contains(g) {
                continue;
            }
            let mut gens: HashSet<Vec<u64>> = group.iter().cloned().collect();
            gens.insert(g.clone());
            if let Some(bigger) = closure(&gens) {
                if found.insert(bigger.clone()) {
                    queue.push(bigger);
                }
            }
        }
    }
    Ok(found.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::PrimeCtx;

    fn lat(p: u64, diag: &[i64]) -> QuadLattice {
        let ctx = PrimeCtx::new(p).unwrap();
        let entries: Vec<Q> = diag.iter().map(|&d| q_int(d)).collect();
        QuadLattice::from_diag_entries(ctx, &entries).unwrap()
    }

    #[test]
    fn unimodular_has_no_proper_overlattices() {
        let l = lat(3, &[1, 1, -1]);
        assert!(minimal_overlattices(&l).unwrap().is_empty());
        let all = enumerate_integral_overlattices(&l, false).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].ell, 0);
    }

    #[test]
    fn split_plane_has_two_overlattices() {
        let l = lat(3, &[3, -3]);
        assert_eq!(minimal_overlattices(&l).unwrap().len(), 2);
        assert_eq!(enumerate_integral_overlattices(&l, false).unwrap().len(), 3);
    }

    #[test]
    fn rank_one_step() {
        let l = lat(3, &[1, 9]);
        let min = minimal_overlattices(&l).unwrap();
        assert_eq!(min.len(), 1);
        assert_eq!(enumerate_integral_overlattices(&l, false).unwrap().len(), 2);
    }
}

//! Quadratic spaces over F_q (q an odd prime): sgn invariants, orthogonal
//! group orders, isometry counts and totally-isotropic subspace counts, with
//! a brute-force oracle for tiny q.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::padic::{PrimeCtx, QuadLattice};
use crate::qmat::{is_rational_integer, Q};

/// A possibly degenerate quadratic space U = U₀ ⊥ U₁ over F_q, where U₁ is
/// the radical: total dimension m, radical dimension t, and the discriminant
/// class chi0 of the non-degenerate part U₀ (chi0 = +1 when U₀ = 0).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct FiniteQuadSpace {
    pub q: u64,
    pub m: usize,
    pub t: usize,
    pub chi0: i32,
}

impl FiniteQuadSpace {
    pub fn new(q: u64, m: usize, t: usize, chi0: i32) -> Result<Self> {
        if t > m {
            return Err(Error::Invalid(format!("radical dim {t} exceeds dim {m}")));
        }
        if chi0 != 1 && chi0 != -1 {
            return Err(Error::Invalid("chi0 must be ±1".into()));
        }
        Ok(FiniteQuadSpace { q, m, t, chi0 })
    }

    pub fn nondegenerate(q: u64, m: usize, chi0: i32) -> Result<Self> {
        Self::new(q, m, 0, chi0)
    }

    pub fn dim_nondeg(&self) -> usize {
        self.m - self.t
    }

    /// sgn_m(U): chi0 when dim U₀ ≡ m (mod 2), else 0.
    pub fn sgn_for(&self, m: i64) -> i32 {
        if (self.dim_nondeg() as i64 - m).rem_euclid(2) == 0 {
            self.chi0
        } else {
            0
        }
    }

    /// sgn = sgn_even.
    pub fn sgn(&self) -> i32 {
        self.sgn_for(0)
    }

    /// sgn′ = sgn_odd.
    pub fn sgn_prime(&self) -> i32 {
        self.sgn_for(1)
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.t == 0
    }
}

/// L ⊗ F_p with the reduced form: radical dimension = type(L), chi0 from the
/// scale-0 Jordan block.
pub fn reduce_mod_p(l: &QuadLattice) -> Result<FiniteQuadSpace> {
    l.check_integral()?;
    let d = l.diagonalize();
    let ctx = l.ctx;
    let zero_units: Vec<i32> = d
        .entries
        .iter()
        .filter(|&&(a, _)| a == 0)
        .map(|&(_, u)| u)
        .collect();
    let m0 = zero_units.len();
    let mut chi0: i32 = zero_units.iter().product();
    if (m0 * m0.saturating_sub(1) / 2) % 2 == 1 {
        chi0 *= ctx.legendre_u64(ctx.p - 1);
    }
    FiniteQuadSpace::new(ctx.p, l.rank(), l.rank() - m0, chi0)
}

fn qr(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn q_pow_signed(q: u64, e: i64) -> Q {
    Q::from_integer(BigInt::from(q)).pow(e as i32)
}

fn assert_integer(x: Q, what: &str) -> BigInt {
    assert!(
        is_rational_integer(&x) && !x.is_negative(),
        "{what} evaluated to non-integer or negative value {x}"
    );
    x.to_integer()
}

/// #O(V) for non-degenerate V:
/// 2 q^{m(m−1)/2} (1 − sgn(V) q^{−m/2}) ∏_{1 ≤ i < m/2} (1 − q^{−2i}),
/// with the m = 0 case equal to 1.
pub fn order_orthogonal(v: &FiniteQuadSpace) -> Result<BigInt> {
    if !v.is_nondegenerate() {
        return Err(Error::DegenerateSubspace);
    }
    let (q, m) = (v.q, v.m as i64);
    if m == 0 {
        return Ok(BigInt::one());
    }
    let mut x = qr(2) * q_pow_signed(q, m * (m - 1) / 2);
    if m % 2 == 0 {
        x *= qr(1) - qr(v.chi0 as i64) * q_pow_signed(q, -m / 2);
    }
    let mut i = 1;
    while 2 * i < m {
        x *= qr(1) - q_pow_signed(q, -2 * i);
        i += 1;
    }
    Ok(assert_integer(x, "order_orthogonal"))
}

/// #O(U, V): the number of isometric embeddings of U (dim n, radical dim t)
/// into non-degenerate V (dim m ≥ n):
/// q^{n(2m−n−1)/2} (1 − sgn(V) q^{−m/2}) · P, where P is
/// (1 + χ(V) sgn_m(U) q^{−(m−n−t)/2}) ∏_{(m−n−t)/2 < i < m/2} (1 − q^{−2i})
/// when sgn_m(U) ≠ 0, and ∏_{(m−n−t)/2 ≤ i < m/2} (1 − q^{−2i}) otherwise.
pub fn count_isometries(u: &FiniteQuadSpace, v: &FiniteQuadSpace) -> Result<BigInt> {
    if !v.is_nondegenerate() {
        return Err(Error::DegenerateSubspace);
    }
    if u.q != v.q {
        return Err(Error::CtxMismatch(u.q, v.q));
    }
    let q = v.q;
    let (n, t, m) = (u.m as i64, u.t as i64, v.m as i64);
    if n > m {
        return Err(Error::Invalid("dim U exceeds dim V".into()));
    }
    let lo2 = m - n - t; // = 2·(m−n−t)/2
    if lo2 < 0 {
        // no room for the radical's hyperbolic partners (Witt bound)
        return Ok(BigInt::zero());
    }
    let mut x = q_pow_signed(q, n * (2 * m - n - 1) / 2);
    if m % 2 == 0 {
        x *= qr(1) - qr(v.chi0 as i64) * q_pow_signed(q, -m / 2);
    }
    let s = u.sgn_for(m);
    // 2i ranges over even integers in the window ((m−n−t), m), closed on the
    // left exactly when sgn_m(U) = 0
    let mut twice = if s != 0 { lo2 + 2 } else {
        // smallest even integer ≥ lo2, counting i ≥ (m−n−t)/2
        if lo2 % 2 == 0 { lo2 } else { lo2 + 1 }
    };
    if s != 0 {
        debug_assert_eq!(lo2 % 2, 0, "sgn_m(U) ≠ 0 forces m ≡ n − t (mod 2)");
        x *= qr(1) + qr((v.chi0 * s) as i64) * q_pow_signed(q, -lo2 / 2);
    }
    while twice < m {
        x *= qr(1) - q_pow_signed(q, -twice);
        twice += 2;
    }
    Ok(assert_integer(x, "count_isometries"))
}

/// S_b(V): number of b-dimensional totally isotropic subspaces of a
/// non-degenerate V.
pub fn count_isotropic_subspaces(v: &FiniteQuadSpace, b: usize) -> Result<BigInt> {
    if !v.is_nondegenerate() {
        return Err(Error::DegenerateSubspace);
    }
    let (q, m, b) = (v.q, v.m as i64, b as i64);
    if 2 * b > m {
        return Err(Error::Invalid(format!(
            "isotropic dimension {b} exceeds Witt bound for dim {m}"
        )));
    }
    if b == 0 {
        return Ok(BigInt::one());
    }
    let chi = qr(v.chi0 as i64);
    let mut num = Q::one();
    let mut den = Q::one();
    if m % 2 == 0 {
        num *= (q_pow_signed(q, m / 2) - &chi) * (q_pow_signed(q, m / 2 - b) + &chi);
        for i in 1..b {
            num *= q_pow_signed(q, m - 2 * i) - qr(1);
        }
    } else {
        for i in 0..b {
            num *= q_pow_signed(q, m - 1 - 2 * i) - qr(1);
        }
    }
    for i in 1..=b {
        den *= q_pow_signed(q, i) - qr(1);
    }
    Ok(assert_integer(num / den, "count_isotropic_subspaces"))
}

/// Number of isotropic vectors (including 0) of a non-degenerate V.
pub fn count_isotropic_vectors(v: &FiniteQuadSpace) -> Result<BigInt> {
    Ok((BigInt::from(v.q) - 1) * count_isotropic_subspaces(v, 1)? + 1)
}

// ---------------------------------------------------------------------------
// Brute-force oracle (tiny q)
// ---------------------------------------------------------------------------

const BRUTE_LIMIT: u64 = 200_000_000;

fn smallest_nonresidue(q: u64) -> u64 {
    PrimeCtx::new(q).expect("odd prime").r
}

/// Diagonal Gram of U over F_q: (1,...,1,δ) for U₀ followed by zeros for the
/// radical, with δ adjusted so disc(U₀) = (−1)^{C(m₀,2)} det has class chi0.
pub fn diag_gram(u: &FiniteQuadSpace) -> Vec<u64> {
    let m0 = u.dim_nondeg();
    let mut g = vec![1u64; m0];
    if m0 > 0 {
        let ctx = PrimeCtx::new(u.q).expect("odd prime");
        let sign_fix = if (m0 * (m0 - 1) / 2) % 2 == 1 {
            ctx.legendre_u64(u.q - 1)
        } else {
            1
        };
        if u.chi0 * sign_fix != 1 {
            g[m0 - 1] = smallest_nonresidue(u.q);
        }
    }
    g.extend(std::iter::repeat(0).take(u.t));
    g
}

fn guard_brute(q: u64, m: usize, cost: u64) -> Result<()> {
    if q > 5 || m > 4 || cost > BRUTE_LIMIT {
        return Err(Error::GuardTripped(format!(
            "brute-force finite-field oracle limited to q ≤ 5, m ≤ 4 (cost {cost})"
        )));
    }
    Ok(())
}

fn all_vectors(q: u64, m: usize) -> impl Iterator<Item = Vec<u64>> {
    let total = (q as u128).pow(m as u32) as u64;
    (0..total).map(move |mut k| {
        (0..m)
            .map(|_| {
                let d = k % q;
                k /= q;
                d
            })
            .collect()
    })
}

fn pairing(g: &[u64], q: u64, x: &[u64], y: &[u64]) -> u64 {
    g.iter()
        .zip(x.iter().zip(y))
        .map(|(&gi, (&xi, &yi))| gi * xi % q * yi % q)
        .sum::<u64>()
        % q
}

fn rank_mod_q(q: u64, cols: &[Vec<u64>]) -> usize {
    let mut rows: Vec<Vec<u64>> = cols.to_vec();
    let mut rank = 0;
    let width = rows.first().map_or(0, |r| r.len());
    for col in 0..width {
        let Some(pi) = (rank..rows.len()).find(|&i| rows[i][col] != 0) else {
            continue;
        };
        rows.swap(rank, pi);
        let inv = mod_inv(rows[rank][col], q);
        for j in 0..width {
            rows[rank][j] = rows[rank][j] * inv % q;
        }
        for i in 0..rows.len() {
            if i != rank && rows[i][col] != 0 {
                let f = rows[i][col];
                for j in 0..width {
                    rows[i][j] = (rows[i][j] + (q - f) * rows[rank][j]) % q;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn mod_inv(a: u64, q: u64) -> u64 {
    let mut x = 1u64;
    let mut b = a % q;
    let mut e = q - 2;
    while e > 0 {
        if e & 1 == 1 {
            x = x * b % q;
        }
        b = b * b % q;
        e >>= 1;
    }
    x
}

/// Exhaustive count of isometric embeddings U → V.
pub fn brute_count_isometries(u: &FiniteQuadSpace, v: &FiniteQuadSpace) -> Result<BigInt> {
    let q = v.q;
    let (n, m) = (u.m, v.m);
    guard_brute(q, m, (q as f64).powi((m * n) as i32).min(1e18) as u64)?;
    let gu = diag_gram(u);
    let gv = diag_gram(v);
    let vecs: Vec<Vec<u64>> = all_vectors(q, m).collect();
    let mut count = BigInt::zero();
    let total = (q as u128).pow((m * n) as u32);
    'outer: for mut k in 0..total {
        let mut cols: Vec<&Vec<u64>> = Vec::with_capacity(n);
        for _ in 0..n {
            cols.push(&vecs[(k % vecs.len() as u128) as usize]);
            k /= vecs.len() as u128;
        }
        for i in 0..n {
            for j in i..n {
                let want = if i == j { gu[i] } else { 0 };
                if pairing(&gv, q, cols[i], cols[j]) != want {
                    continue 'outer;
                }
            }
        }
        let owned: Vec<Vec<u64>> = cols.iter().map(|c| (*c).clone()).collect();
        if rank_mod_q(q, &owned) == n {
            count += 1;
        }
    }
    Ok(count)
}

pub fn brute_order_orthogonal(v: &FiniteQuadSpace) -> Result<BigInt> {
    brute_count_isometries(v, v)
}

/// Exhaustive count of b-dimensional totally isotropic subspaces.
pub fn brute_count_isotropic_subspaces(v: &FiniteQuadSpace, b: usize) -> Result<BigInt> {
    let (q, m) = (v.q, v.m);
    guard_brute(q, m, (q as f64).powi((m * b) as i32).min(1e18) as u64)?;
    if b == 0 {
        return Ok(BigInt::one());
    }
    let g = diag_gram(v);
    let vecs: Vec<Vec<u64>> = all_vectors(q, m).collect();
    let mut seen = std::collections::HashSet::new();
    let total = (vecs.len() as u128).pow(b as u32);
    'outer: for mut k in 0..total {
        let mut cols: Vec<Vec<u64>> = Vec::with_capacity(b);
        for _ in 0..b {
            cols.push(vecs[(k % vecs.len() as u128) as usize].clone());
            k /= vecs.len() as u128;
        }
        if rank_mod_q(q, &cols) != b {
            continue;
        }
        for i in 0..b {
            for j in i..b {
                if pairing(&g, q, &cols[i], &cols[j]) != 0 {
                    continue 'outer;
                }
            }
        }
        // canonical form: reduced row echelon of the spanning set
        let mut rows = cols.clone();
        rref(q, &mut rows);
        seen.insert(rows);
    }
    Ok(BigInt::from(seen.len() as u64))
}

fn rref(q: u64, rows: &mut Vec<Vec<u64>>) {
    let width = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..width {
        let Some(pi) = (rank..rows.len()).find(|&i| rows[i][col] != 0) else {
            continue;
        };
        rows.swap(rank, pi);
        let inv = mod_inv(rows[rank][col], q);
        for j in 0..width {
            rows[rank][j] = rows[rank][j] * inv % q;
        }
        for i in 0..rows.len() {
            if i != rank && rows[i][col] != 0 {
                let f = rows[i][col];
                for j in 0..width {
                    rows[i][j] = (rows[i][j] + (q - f) * rows[rank][j]) % q;
                }
            }
        }
        rank += 1;
    }
    rows.truncate(rank);
    rows.sort();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_orders_small() {
        // m=0 → 1; m=1 → 2; m=2 split q=3 → 4
        assert_eq!(
            order_orthogonal(&FiniteQuadSpace::nondegenerate(3, 0, 1).unwrap()).unwrap(),
            BigInt::from(1)
        );
        assert_eq!(
            order_orthogonal(&FiniteQuadSpace::nondegenerate(3, 1, 1).unwrap()).unwrap(),
            BigInt::from(2)
        );
        assert_eq!(
            order_orthogonal(&FiniteQuadSpace::nondegenerate(3, 2, 1).unwrap()).unwrap(),
            BigInt::from(4)
        );
    }

    #[test]
    fn isotropic_line_table() {
        // S₁: m=2 χ=+ → 2; m=2 χ=− → 0; m=3 → q+1; m=4 χ=+ → (q+1)²; m=4 χ=− → q²+1
        for q in [3u64, 5, 7] {
            let s1 = |m, chi| {
                count_isotropic_subspaces(&FiniteQuadSpace::nondegenerate(q, m, chi).unwrap(), 1)
                    .unwrap()
            };
            assert_eq!(s1(2, 1), BigInt::from(2));
            assert_eq!(s1(2, -1), BigInt::from(0));
            assert_eq!(s1(3, 1), BigInt::from(q + 1));
            assert_eq!(s1(3, -1), BigInt::from(q + 1));
            assert_eq!(s1(4, 1), BigInt::from((q + 1) * (q + 1)));
            assert_eq!(s1(4, -1), BigInt::from(q * q + 1));
        }
    }
}

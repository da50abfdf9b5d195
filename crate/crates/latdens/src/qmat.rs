//! Small dense matrices over the exact rationals.
//!
//! Ranks here are tiny (≤ 8), so plain Gaussian elimination over `BigRational`
//! is both exact and fast enough.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;
pub type QMat = Vec<Vec<Q>>;

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_big(n: BigInt) -> Q {
    Q::from_integer(n)
}

/// p^k for possibly negative k.
pub fn q_pow(p: u64, k: i64) -> Q {
    let base = Q::from_integer(BigInt::from(p));
    if k >= 0 {
        base.pow(k as i32)
    } else {
        base.pow(k as i32)
    }
}

pub fn zeros(rows: usize, cols: usize) -> QMat {
    vec![vec![Q::zero(); cols]; rows]
}

pub fn identity(n: usize) -> QMat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Q::one();
    }
    m
}

pub fn from_diag(d: &[Q]) -> QMat {
    let mut m = zeros(d.len(), d.len());
    for (i, v) in d.iter().enumerate() {
        m[i][i] = v.clone();
    }
    m
}

pub fn transpose(a: &QMat) -> QMat {
    if a.is_empty() {
        return vec![];
    }
    let (r, c) = (a.len(), a[0].len());
    let mut t = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            t[j][i] = a[i][j].clone();
        }
    }
    t
}

pub fn mul(a: &QMat, b: &QMat) -> QMat {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), k, "dimension mismatch in matrix product");
    let mut out = zeros(r, c);
    for i in 0..r {
        for l in 0..k {
            if a[i][l].is_zero() {
                continue;
            }
            for j in 0..c {
                if !b[l][j].is_zero() {
                    out[i][j] += &a[i][l] * &b[l][j];
                }
            }
        }
    }
    out
}

pub fn mul_vec(a: &QMat, v: &[Q]) -> Vec<Q> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .map(|(x, y)| x * y)
                .fold(Q::zero(), |s, t| s + t)
        })
        .collect()
}

pub fn is_symmetric(a: &QMat) -> bool {
    let n = a.len();
    a.iter().all(|r| r.len() == n)
        && (0..n).all(|i| (0..i).all(|j| a[i][j] == a[j][i]))
}

pub fn det(a: &QMat) -> Q {
    let n = a.len();
    if n == 0 {
        return Q::one();
    }
    let mut m = a.to_vec();
    let mut d = Q::one();
    for col in 0..n {
        let pivot = (col..n).find(|&i| !m[i][col].is_zero());
        let Some(pr) = pivot else { return Q::zero() };
        if pr != col {
            m.swap(pr, col);
            d = -d;
        }
        d *= m[col][col].clone();
        let inv = m[col][col].clone().recip();
        for i in col + 1..n {
            if m[i][col].is_zero() {
                continue;
            }
            let f = &m[i][col] * &inv;
            for j in col..n {
                let sub = &f * &m[col][j];
                m[i][j] -= sub;
            }
        }
    }
    d
}

pub fn inverse(a: &QMat) -> Option<QMat> {
    let n = a.len();
    let mut m = a.to_vec();
    let mut inv = identity(n);
    for col in 0..n {
        let pivot = (col..n).find(|&i| !m[i][col].is_zero())?;
        m.swap(pivot, col);
        inv.swap(pivot, col);
        let f = m[col][col].clone().recip();
        for j in 0..n {
            m[col][j] *= &f;
            inv[col][j] *= &f;
        }
        for i in 0..n {
            if i == col || m[i][col].is_zero() {
                continue;
            }
            let f = m[i][col].clone();
            for j in 0..n {
                let (s, t) = (&f * &m[col][j], &f * &inv[col][j]);
                m[i][j] -= s;
                inv[i][j] -= t;
            }
        }
    }
    Some(inv)
}

/// Basis of the right kernel of `a` (columns as vectors of length = #cols of a).
pub fn kernel(a: &QMat) -> Vec<Vec<Q>> {
    if a.is_empty() {
        return vec![];
    }
    let (r, c) = (a.len(), a[0].len());
    let mut m = a.to_vec();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut row = 0;
    for col in 0..c {
        if row >= r {
            break;
        }
        let Some(pr) = (row..r).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(pr, row);
        let f = m[row][col].clone().recip();
        for j in 0..c {
            m[row][j] *= &f;
        }
        for i in 0..r {
            if i == row || m[i][col].is_zero() {
                continue;
            }
            let f = m[i][col].clone();
            for j in 0..c {
                let s = &f * &m[row][j];
                m[i][j] -= s;
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let mut basis = Vec::new();
    for free in 0..c {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![Q::zero(); c];
        v[free] = Q::one();
        for &(pr, pc) in &pivots {
            v[pc] = -m[pr][free].clone();
        }
        basis.push(v);
    }
    basis
}

/// Solve a·x = b exactly; returns None if inconsistent or a is singular-wide.
pub fn solve(a: &QMat, b: &[Q]) -> Option<Vec<Q>> {
    let (r, c) = (a.len(), if a.is_empty() { 0 } else { a[0].len() });
    let mut m: QMat = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut v = row.clone();
            v.push(rhs.clone());
            v
        })
        .collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut row = 0;
    for col in 0..c {
        if row >= r {
            break;
        }
        let Some(pr) = (row..r).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(pr, row);
        let f = m[row][col].clone().recip();
        for j in 0..=c {
            m[row][j] *= &f;
        }
        for i in 0..r {
            if i == row || m[i][col].is_zero() {
                continue;
            }
            let f = m[i][col].clone();
            for j in 0..=c {
                let s = &f * &m[row][j];
                m[i][j] -= s;
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    for i in row..r {
        if !m[i][c].is_zero() {
            return None;
        }
    }
    let mut x = vec![Q::zero(); c];
    for &(pr, pc) in &pivots {
        x[pc] = m[pr][c].clone();
    }
    Some(x)
}

pub fn rank(a: &QMat) -> usize {
    kernel(a).len().checked_sub(0).map(|k| {
        let c = if a.is_empty() { 0 } else { a[0].len() };
        c - k
    }).unwrap_or(0)
}

/// Columns of `a` restricted to the given column indices.
pub fn take_columns(a: &QMat, cols: &[usize]) -> QMat {
    a.iter()
        .map(|row| cols.iter().map(|&j| row[j].clone()).collect())
        .collect()
}

/// Horizontal concatenation of column blocks.
pub fn hconcat(a: &QMat, b: &QMat) -> QMat {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().chain(rb).cloned().collect())
        .collect()
}

/// Gram matrix BᵀGB of the columns of B with respect to symmetric G.
pub fn gram_of(g: &QMat, basis: &QMat) -> QMat {
    mul(&transpose(basis), &mul(g, basis))
}

pub fn is_rational_integer(x: &Q) -> bool {
    x.denom().abs() == BigInt::one()
}

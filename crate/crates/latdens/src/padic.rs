//! Quadratic lattices over Z_p (p odd): exact invariants, Jordan data,
//! Hilbert/Hasse symbols, duals, and ambient-space constructors.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{self, q_int, q_pow, Q, QMat};

/// Context for a fixed odd prime p, with the smallest positive quadratic
/// non-residue r mod p fixed for reproducible outputs.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct PrimeCtx {
    pub p: u64,
    pub r: u64,
}

fn is_odd_prime(p: u64) -> bool {
    if p < 3 || p % 2 == 0 {
        return false;
    }
    let mut d = 3;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn modpow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc: u128 = 1;
    let mm = m as u128;
    let mut b = (base % m) as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % mm;
        }
        b = b * b % mm;
        exp >>= 1;
    }
    base = acc as u64;
    base
}

impl PrimeCtx {
    pub fn new(p: u64) -> Result<Self> {
        if !is_odd_prime(p) {
            return Err(Error::BadPrime(p));
        }
        let r = (2..p)
            .find(|&a| modpow(a, (p - 1) / 2, p) == p - 1)
            .expect("every odd prime has a non-residue");
        Ok(PrimeCtx { p, r })
    }

    /// Legendre symbol (a|p) for a not divisible by p; 0 if p | a.
    pub fn legendre_u64(&self, a: u64) -> i32 {
        let a = a % self.p;
        if a == 0 {
            return 0;
        }
        if modpow(a, (self.p - 1) / 2, self.p) == 1 {
            1
        } else {
            -1
        }
    }

    pub fn legendre_big(&self, a: &BigInt) -> i32 {
        let m = BigInt::from(self.p);
        let mut red = a % &m;
        if red.is_negative() {
            red += &m;
        }
        self.legendre_u64(red.to_u64().expect("reduced below p"))
    }

    pub fn val_big(&self, x: &BigInt) -> Option<i64> {
        if x.is_zero() {
            return None;
        }
        let p = BigInt::from(self.p);
        let mut v = 0i64;
        let mut y = x.clone();
        while (&y % &p).is_zero() {
            y /= &p;
            v += 1;
        }
        Some(v)
    }

    /// p-adic valuation of a nonzero rational.
    pub fn val_q(&self, x: &Q) -> Option<i64> {
        Some(self.val_big(x.numer())? - self.val_big(x.denom()).expect("denominator nonzero"))
    }

    /// x / p^{val(x)} as an exact rational (a p-adic unit).
    pub fn unit_part(&self, x: &Q) -> Q {
        let v = self.val_q(x).expect("unit part of zero");
        x / q_pow(self.p, v)
    }

    /// Legendre class of the unit part of a nonzero rational.
    pub fn unit_class_q(&self, x: &Q) -> i32 {
        let u = self.unit_part(x);
        // u = a/b with a,b prime to p; class = (a|p)(b|p)
        self.legendre_big(u.numer()) * self.legendre_big(u.denom())
    }

    pub fn square_class(&self, x: &Q) -> SquareClass {
        SquareClass {
            odd_val: self.val_q(x).expect("square class of zero") % 2 != 0,
            unit: self.unit_class_q(x),
        }
    }

    /// χ(x): 0 when val(x) is odd, otherwise the Legendre class of the unit part.
    pub fn chi_q(&self, x: &Q) -> i32 {
        let c = self.square_class(x);
        if c.odd_val {
            0
        } else {
            c.unit
        }
    }

    /// Tame Hilbert symbol (a,b)_p for nonzero rationals, p odd:
    /// (p^α u, p^β v) = (-1|p)^{αβ} (u|p)^β (v|p)^α.
    pub fn hilbert(&self, a: &Q, b: &Q) -> Result<i32> {
        if a.is_zero() || b.is_zero() {
            return Err(Error::ZeroArgument);
        }
        let (alpha, beta) = (self.val_q(a).unwrap(), self.val_q(b).unwrap());
        let (ua, ub) = (self.unit_class_q(a), self.unit_class_q(b));
        let leg_m1 = self.legendre_u64(self.p - 1);
        let mut s = 1i32;
        if alpha % 2 != 0 && beta % 2 != 0 {
            s *= leg_m1;
        }
        if beta % 2 != 0 {
            s *= ua;
        }
        if alpha % 2 != 0 {
            s *= ub;
        }
        Ok(s)
    }

    /// Residue of a rational with val ≥ 0 modulo p^k, as an integer in [0, p^k).
    pub fn residue_mod(&self, x: &Q, k: u32) -> BigInt {
        let m = BigInt::from(self.p).pow(k);
        let mut num = x.numer() % &m;
        if num.is_negative() {
            num += &m;
        }
        let mut den = x.denom() % &m;
        if den.is_negative() {
            den += &m;
        }
        assert!(
            self.val_big(x.denom()).expect("nonzero") == 0,
            "residue of non-integral rational"
        );
        let dinv = big_inv_mod(&den, &m);
        num * dinv % m
    }
}

fn big_inv_mod(a: &BigInt, m: &BigInt) -> BigInt {
    let (mut r0, mut r1) = (m.clone(), a % m);
    let (mut s0, mut s1) = (BigInt::zero(), BigInt::one());
    while !r1.is_zero() {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        r0 = std::mem::replace(&mut r1, r2);
        let s2 = &s0 - &q * &s1;
        s0 = std::mem::replace(&mut s1, s2);
    }
    assert!(r0.is_one(), "not invertible");
    let mut out = s0 % m;
    if out.is_negative() {
        out += m;
    }
    out
}

/// A square class in Q_p^×/(Q_p^×)², p odd: valuation parity + unit class.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SquareClass {
    pub odd_val: bool,
    pub unit: i32,
}

impl SquareClass {
    pub fn chi(&self) -> i32 {
        if self.odd_val {
            0
        } else {
            self.unit
        }
    }
}

/// A non-degenerate quadratic lattice over Z_p given by an exact rational
/// Gram matrix in some basis.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct QuadLattice {
    pub ctx: PrimeCtx,
    pub gram: QMat,
}

/// Result of exact symmetric diagonalization: sorted scale/unit-class pairs,
/// the matching diagonal Gram values, and a basis matrix S (columns = new
/// basis in old coordinates, entries in Z_(p)) with SᵀGS diagonal.
#[derive(Clone, Debug)]
pub struct Diagonalization {
    pub entries: Vec<(i64, i32)>,
    pub diag: Vec<Q>,
    pub basis: QMat,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub struct LatticeInvariants {
    pub rank: usize,
    pub val: i64,
    pub typ: usize,
    pub det_class: SquareClass,
    pub disc_class: SquareClass,
    pub chi: i32,
    pub hasse: i32,
}

/// Per-scale Jordan data; classifies isometry classes completely for p odd.
/// With `hasse_bit` present it names a quadratic space instead.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct JordanProfile {
    pub ctx: PrimeCtx,
    pub blocks: Vec<(i64, usize, i32)>,
    pub hasse_bit: Option<i32>,
}

impl QuadLattice {
    pub fn new(ctx: PrimeCtx, gram: QMat) -> Result<Self> {
        if !qmat::is_symmetric(&gram) {
            return Err(Error::Invalid("gram matrix must be symmetric".into()));
        }
        if qmat::det(&gram).is_zero() {
            return Err(Error::SingularGram);
        }
        Ok(QuadLattice { ctx, gram })
    }

    pub fn from_diag_entries(ctx: PrimeCtx, entries: &[Q]) -> Result<Self> {
        Self::new(ctx, qmat::from_diag(entries))
    }

    /// diag(u_1 p^{a_1}, ..., u_n p^{a_n}) with u in {1, r}.
    pub fn from_profile(ctx: PrimeCtx, profile: &[(i64, i32)]) -> Result<Self> {
        let entries: Vec<Q> = profile
            .iter()
            .map(|&(a, cls)| {
                let u = if cls == 1 { 1 } else { ctx.r };
                q_int(u as i64) * q_pow(ctx.p, a)
            })
            .collect();
        Self::from_diag_entries(ctx, &entries)
    }

    pub fn rank(&self) -> usize {
        self.gram.len()
    }

    pub fn is_integral(&self) -> bool {
        self.check_integral().is_ok()
    }

    pub fn check_integral(&self) -> Result<()> {
        for (i, row) in self.gram.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if !x.is_zero() && self.ctx.val_q(x).unwrap() < 0 {
                    return Err(Error::NotIntegral { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    /// Exact symmetric diagonalization with minimal-valuation pivoting
    /// (ties broken by smallest row index), entries sorted by scale.
    pub fn diagonalize(&self) -> Diagonalization {
        let n = self.rank();
        let ctx = self.ctx;
        let mut g = self.gram.clone();
        let mut s = qmat::identity(n);

        let val_of = |x: &Q| ctx.val_q(x);
        for k in 0..n {
            // locate the entry of minimal valuation in the trailing block,
            // preferring diagonal entries, then smallest indices
            let mut best: Option<(i64, bool, usize, usize)> = None;
            for i in k..n {
                for j in k..n {
                    if let Some(v) = val_of(&g[i][j]) {
                        let diag = i == j;
                        let cand = (v, diag, i, j);
                        best = Some(match best {
                            None => cand,
                            Some(b) => {
                                if (v, !diag, i.min(j), i.max(j))
                                    < (b.0, !b.1, b.2.min(b.3), b.2.max(b.3))
                                {
                                    cand
                                } else {
                                    b
                                }
                            }
                        });
                    }
                }
            }
            let (_, on_diag, bi, bj) = best.expect("non-degenerate gram has nonzero trailing block");
            let (mut pi, pj) = (bi.min(bj), bi.max(bj));
            if !on_diag {
                // move the minimal valuation onto the diagonal: col_i += col_j
                for t in 0..n {
                    let add = g[t][pj].clone();
                    g[t][pi] += add;
                }
                for t in 0..n {
                    let add = g[pj][t].clone();
                    g[pi][t] += add;
                }
                for t in 0..n {
                    let add = s[t][pj].clone();
                    s[t][pi] += add;
                }
            } else {
                pi = bi;
            }
            let _ = pj;
            // swap pivot into position k
            if pi != k {
                g.swap(pi, k);
                for row in g.iter_mut() {
                    row.swap(pi, k);
                }
                for row in s.iter_mut() {
                    row.swap(pi, k);
                }
            }
            // clear row/column k
            let piv = g[k][k].clone();
            for l in k + 1..n {
                if g[k][l].is_zero() {
                    continue;
                }
                let f = &g[k][l] / &piv;
                for t in 0..n {
                    let sub = &f * &g[t][k];
                    g[t][l] -= sub;
                }
                for t in 0..n {
                    let sub = &f * &g[k][t];
                    g[l][t] -= sub;
                }
                for t in 0..n {
                    let sub = &f * &s[t][k];
                    s[t][l] -= sub;
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| ctx.val_q(&g[i][i]).unwrap());
        let diag: Vec<Q> = order.iter().map(|&i| g[i][i].clone()).collect();
        let entries: Vec<(i64, i32)> = diag
            .iter()
            .map(|d| (ctx.val_q(d).unwrap(), ctx.unit_class_q(d)))
            .collect();
        let basis = qmat::take_columns(&s, &order);
        Diagonalization {
            entries,
            diag,
            basis,
        }
    }

    pub fn fundamental_invariants(&self) -> Result<Vec<i64>> {
        self.check_integral()?;
        Ok(self.diagonalize().entries.iter().map(|&(a, _)| a).collect())
    }

    pub fn det(&self) -> Q {
        qmat::det(&self.gram)
    }

    pub fn disc(&self) -> Q {
        let n = self.rank();
        let sign = if (n * (n.saturating_sub(1)) / 2) % 2 == 0 {
            Q::one()
        } else {
            -Q::one()
        };
        sign * self.det()
    }

    pub fn chi(&self) -> i32 {
        self.ctx.chi_q(&self.disc())
    }

    pub fn invariants(&self) -> LatticeInvariants {
        let d = self.diagonalize();
        let ctx = self.ctx;
        let val: i64 = d.entries.iter().map(|&(a, _)| a).sum();
        let typ = d.entries.iter().filter(|&&(a, _)| a > 0).count();
        let det = self.det();
        let disc = self.disc();
        let mut hasse = 1i32;
        for i in 0..d.diag.len() {
            for j in i + 1..d.diag.len() {
                hasse *= ctx.hilbert(&d.diag[i], &d.diag[j]).unwrap();
            }
        }
        LatticeInvariants {
            rank: self.rank(),
            val,
            typ,
            det_class: ctx.square_class(&det),
            disc_class: ctx.square_class(&disc),
            chi: ctx.chi_q(&disc),
            hasse,
        }
    }

    pub fn val(&self) -> i64 {
        let d = self.diagonalize();
        d.entries.iter().map(|&(a, _)| a).sum()
    }

    pub fn jordan_profile(&self) -> JordanProfile {
        let d = self.diagonalize();
        let mut blocks: Vec<(i64, usize, i32)> = Vec::new();
        for (a, cls) in d.entries {
            match blocks.last_mut() {
                Some(b) if b.0 == a => {
                    b.1 += 1;
                    b.2 *= cls;
                }
                _ => blocks.push((a, 1, cls)),
            }
        }
        JordanProfile {
            ctx: self.ctx,
            blocks,
            hasse_bit: None,
        }
    }

    pub fn is_vertex(&self) -> Result<(bool, usize)> {
        let inv = self.fundamental_invariants()?;
        let ok = inv.iter().all(|&a| a == 0 || a == 1);
        let t = inv.iter().filter(|&&a| a == 1).count();
        Ok((ok, t))
    }

    pub fn dual(&self) -> QuadLattice {
        QuadLattice {
            ctx: self.ctx,
            gram: qmat::inverse(&self.gram).expect("non-degenerate"),
        }
    }

    pub fn direct_sum(&self, other: &QuadLattice) -> Result<QuadLattice> {
        if self.ctx != other.ctx {
            return Err(Error::CtxMismatch(self.ctx.p, other.ctx.p));
        }
        let (n, m) = (self.rank(), other.rank());
        let mut g = qmat::zeros(n + m, n + m);
        for i in 0..n {
            for j in 0..n {
                g[i][j] = self.gram[i][j].clone();
            }
        }
        for i in 0..m {
            for j in 0..m {
                g[n + i][n + j] = other.gram[i][j].clone();
            }
        }
        Ok(QuadLattice {
            ctx: self.ctx,
            gram: g,
        })
    }

    /// Scale the form by p^k.
    pub fn rescale(&self, k: i64) -> QuadLattice {
        let f = q_pow(self.ctx.p, k);
        QuadLattice {
            ctx: self.ctx,
            gram: self
                .gram
                .iter()
                .map(|row| row.iter().map(|x| x * &f).collect())
                .collect(),
        }
    }

    /// The sublattice/overlattice with basis given by the columns of `basis`
    /// (coordinates in the current basis); Gram = BᵀGB.
    pub fn with_basis(&self, basis: &QMat) -> QuadLattice {
        QuadLattice {
            ctx: self.ctx,
            gram: qmat::gram_of(&self.gram, basis),
        }
    }

    /// Canonical cache/dedup key: p plus the p-adic Hermite form of the Gram
    /// matrix's diagonalization data is NOT enough (sublattice identity
    /// matters), so keys are built from a basis matrix via `lattice_key`.
    pub fn isometry_key(&self) -> String {
        let d = self.diagonalize();
        let mut s = format!("p{}:", self.ctx.p);
        for (a, cls) in d.entries {
            let _ = write!(s, "({a},{cls})");
        }
        s
    }
}

/// Self-dual lattice H_m^ε of rank m with χ = ε (for m = 0 only ε = +1).
pub fn h_lattice(ctx: PrimeCtx, m: usize, eps: i32) -> Result<QuadLattice> {
    if m == 0 {
        if eps == 1 {
            return Ok(QuadLattice {
                ctx,
                gram: vec![],
            });
        }
        return Err(Error::Inadmissible("rank 0 requires chi = +1".into()));
    }
    // diag(1,...,1,delta): chi = legendre((-1)^{m(m-1)/2} * delta) = eps
    let sign_cls = ctx.legendre_u64(ctx.p - 1);
    let needed = if (m * (m - 1) / 2) % 2 == 1 {
        eps * sign_cls
    } else {
        eps
    };
    let mut profile = vec![(0i64, 1i32); m - 1];
    profile.push((0, needed));
    QuadLattice::from_profile(ctx, &profile)
}

/// Search for a diagonal lattice spanning a quadratic space with the given
/// dimension, χ ∈ {+1,−1,0} and Hasse invariant.
pub fn ambient_space(ctx: PrimeCtx, m: usize, chi: i32, hasse: i32) -> Result<QuadLattice> {
    if m == 0 {
        return Err(Error::Inadmissible("dimension must be positive".into()));
    }
    // enumerate diag(u_i p^{b_i}) with b_i in {0,1}, u_i in {1, r}
    for mask in 0..(1u32 << (2 * m)) {
        let profile: Vec<(i64, i32)> = (0..m)
            .map(|i| {
                let b = ((mask >> (2 * i)) & 1) as i64;
                let u = if (mask >> (2 * i + 1)) & 1 == 0 { 1 } else { -1 };
                (b, u)
            })
            .collect();
        let lat = QuadLattice::from_profile(ctx, &profile)?;
        let inv = lat.invariants();
        if inv.chi == chi && inv.hasse == hasse {
            return Ok(lat);
        }
    }
    Err(Error::Inadmissible(format!(
        "no space of dimension {m} with chi {chi}, hasse {hasse} over Q_{}",
        ctx.p
    )))
}

/// V_m^ε: χ = ε, Hasse invariant −1.
pub fn v_space(ctx: PrimeCtx, m: usize, eps: i32) -> Result<QuadLattice> {
    ambient_space(ctx, m, eps, -1)
}

/// Basis (columns) of the orthogonal complement of the span of `sub_basis`
/// columns inside the space with Gram matrix `v_gram`.
pub fn orthogonal_complement(v_gram: &QMat, sub_basis: &QMat) -> Result<QMat> {
    let sub_gram = qmat::gram_of(v_gram, sub_basis);
    if qmat::det(&sub_gram).is_zero() {
        return Err(Error::DegenerateSubspace);
    }
    // x is perpendicular iff (sub_basis)ᵀ G x = 0
    let constraint = qmat::mul(&qmat::transpose(sub_basis), v_gram);
    let ker = qmat::kernel(&constraint);
    // kernel returns row-vectors of length m; assemble as columns
    let m = v_gram.len();
    let mut out = qmat::zeros(m, ker.len());
    for (j, v) in ker.iter().enumerate() {
        for i in 0..m {
            out[i][j] = v[i].clone();
        }
    }
    Ok(out)
}

/// Canonical p-adic column Hermite form of a full-rank square basis matrix:
/// upper triangular, diagonal p^{e_i}, entry (i,j) for j > i reduced to the
/// canonical representative of its coset mod p^{e_i}·Z_p.
pub fn hermite_form(ctx: PrimeCtx, basis: &QMat) -> QMat {
    let n = basis.len();
    let mut b = basis.to_vec();
    // triangularize from the bottom row up
    for row in (0..n).rev() {
        let cols = row + 1;
        let mut best: Option<(i64, usize)> = None;
        for j in 0..cols {
            if let Some(v) = ctx.val_q(&b[row][j]) {
                if best.map_or(true, |(bv, bj)| (v, j) < (bv, bj)) {
                    best = Some((v, j));
                }
            }
        }
        let (v, pj) = best.expect("full-rank basis");
        for r in b.iter_mut() {
            r.swap(pj, row);
        }
        // normalize pivot to p^v
        let f = &b[row][row] / q_pow(ctx.p, v);
        for r in b.iter_mut() {
            r[row] = &r[row] / &f;
        }
        // clear the rest of this row
        for j in 0..row {
            if b[row][j].is_zero() {
                continue;
            }
            let f = &b[row][j] / &b[row][row];
            for r in b.iter_mut() {
                let sub = &f * &r[row];
                r[j] -= sub;
            }
        }
    }
    // reduce above-diagonal entries mod p^{e_i}
    for j in 0..n {
        for i in (0..j).rev() {
            let e = ctx.val_q(&b[i][i]).unwrap();
            let rep = canonical_residue(ctx, &b[i][j], e);
            let t = (&b[i][j] - &rep) / q_pow(ctx.p, e);
            debug_assert!(t.is_zero() || ctx.val_q(&t).unwrap() >= 0);
            for r in b.iter_mut() {
                let sub = &t * &r[i];
                r[j] -= sub;
            }
            debug_assert_eq!(b[i][j], rep);
        }
    }
    b
}

/// Canonical representative of x + p^e·Z_p: 0 if val(x) ≥ e, otherwise
/// c/p^d with d = max(0, −val(x)) and c ∈ [0, p^{e+d}) ≡ x·p^d mod p^{e+d}.
pub fn canonical_residue(ctx: PrimeCtx, x: &Q, e: i64) -> Q {
    let Some(v) = ctx.val_q(x) else {
        return Q::zero();
    };
    if v >= e {
        return Q::zero();
    }
    let d = (-v).max(0);
    let scaled = x * q_pow(ctx.p, d);
    let k = (e + d) as u32;
    let c = ctx.residue_mod(&scaled, k);
    Q::from_integer(c) / q_pow(ctx.p, d)
}

/// String form of `hermite_form`, usable as a hash key identifying the
/// Z_p-span of the basis columns exactly.
pub fn lattice_key(ctx: PrimeCtx, basis: &QMat) -> String {
    let h = hermite_form(ctx, basis);
    let mut s = format!("p{};", ctx.p);
    for row in &h {
        for x in row {
            let _ = write!(s, "{x},");
        }
        s.push('|');
    }
    s
}

// ---------------------------------------------------------------------------
// JSON descriptor
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct LatticeDescriptor {
    pub p: u64,
    pub gram: Vec<Vec<String>>,
}

pub fn to_descriptor(l: &QuadLattice) -> LatticeDescriptor {
    LatticeDescriptor {
        p: l.ctx.p,
        gram: l
            .gram
            .iter()
            .map(|row| row.iter().map(|x| x.to_string()).collect())
            .collect(),
    }
}

pub fn from_descriptor(d: &LatticeDescriptor) -> Result<QuadLattice> {
    let ctx = PrimeCtx::new(d.p)?;
    let gram: QMat = d
        .gram
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| {
                    s.parse::<Q>().map_err(|e| Error::Parse {
                        offset: 0,
                        message: format!("bad rational {s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<Q>>>()
        })
        .collect::<Result<QMat>>()?;
    QuadLattice::new(ctx, gram)
}

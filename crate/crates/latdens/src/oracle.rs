//! Independent brute-force computation of representation densities
//! Den(M, L) = lim_N #{X : XᵀG_M X ≡ G_L mod p^N} / p^{N·dim} by direct
//! solution counting.
//!
//! Two counters are provided:
//!
//! * `count_naive`: literal column-by-column enumeration with early pruning,
//!   guarded by the p^{N·m·n} cost bound. Works for any integral ambient M.
//!
//! * the fast path (unimodular M): solutions Z are stratified by the
//!   overlattice M_Z = {λ : Zλ ≡ 0} ⊇ p^N·Z_p^n of Z_p^n, enumerated through
//!   canonical upper-triangular Hermite bases. Writing Z = Y·diag(p^{a_j})·U⁻¹
//!   with Y primitive turns the Gram conditions into window constraints
//!   Γ(Y)_{jk} ≡ (WᵀBW)_{jk} mod p^{N−a_j−a_k}, which lift uniformly from
//!   their mod-p count (the differential of Y ↦ YᵀGY is onto at primitive Y
//!   when G is unimodular). The mod-p count is an exact finite-field
//!   computation. Both counters are cross-checked against each other in tests.

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::padic::QuadLattice;
use crate::qmat::Q;

pub const DEFAULT_BUDGET: u64 = 200_000_000;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub density: Q,
    pub n_used: u32,
    pub stabilized: bool,
    pub raw_counts: Vec<(u32, BigInt)>,
}

/// dim Rep for ambient rank m and represented rank n: n(2m−n−1)/2.
pub fn rep_dim(m: usize, n: usize) -> i64 {
    let (m, n) = (m as i64, n as i64);
    n * (2 * m - n - 1) / 2
}

// ---------------------------------------------------------------------------
// F_p engine: counts of matrices over F_p with prescribed partial Gram
// ---------------------------------------------------------------------------

/// Partial Gram constraints for n columns: entry at pair-index (i ≤ j) is
/// Some(value mod p) or None (unconstrained).
type Cons = Vec<Option<u64>>;

fn pair_idx(i: usize, j: usize) -> usize {
    // i ≤ j
    j * (j + 1) / 2 + i
}

fn cons_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn legendre(p: u64, a: u64) -> i64 {
    let a = a % p;
    if a == 0 {
        return 0;
    }
    let mut r: u64 = 1;
    let mut b = a;
    let mut e = (p - 1) / 2;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    if r == 1 {
        1
    } else {
        -1
    }
}

fn nonresidue(p: u64) -> u64 {
    (2..p).find(|&a| legendre(p, a) == -1).expect("odd prime")
}

/// Canonical diagonal Gram (1,...,1,δ) of dimension m with Legendre class of
/// the determinant equal to `det` (+1 or −1); m = 0 keeps det = +1.
fn canonical_gram(p: u64, m: usize, det: i64) -> Vec<u64> {
    let mut g = vec![1u64; m];
    if m > 0 && det == -1 {
        g[m - 1] = nonresidue(p);
    }
    g
}

/// #{y ∈ F_p^m : Σ g_i y_i² = c} by convolution.
fn value_count(p: u64, gram: &[u64], c: u64) -> u64 {
    let mut counts = vec![0u64; p as usize];
    counts[0] = 1;
    for &g in gram {
        let mut next = vec![0u64; p as usize];
        for x in 0..p {
            let v = (g * x % p) * (x % p) % p;
            for w in 0..p {
                next[((w + v) % p) as usize] += counts[w as usize];
            }
        }
        counts = next;
    }
    counts[(c % p) as usize]
}

type FpKey = (u64, usize, i64, usize, Vec<i64>);

static T_MEMO: Lazy<Mutex<HashMap<FpKey, BigInt>>> = Lazy::new(|| Mutex::new(HashMap::new()));
static P_MEMO: Lazy<Mutex<HashMap<FpKey, BigInt>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn cons_key(cons: &Cons) -> Vec<i64> {
    cons.iter()
        .map(|c| c.map(|v| v as i64).unwrap_or(-1))
        .collect()
}

/// #{(y_1..y_n) ∈ (F_p^m)^n : ⟨y_i, y_j⟩ = γ_ij for every present pair},
/// with ambient the non-degenerate space of dimension m and det class `det`.
fn fp_tuple_count(p: u64, m: usize, det: i64, n: usize, cons: &Cons) -> BigInt {
    if n == 0 {
        return BigInt::one();
    }
    let key: FpKey = (p, m, det, n, cons_key(cons));
    if let Some(hit) = T_MEMO.lock().unwrap().get(&key) {
        return hit.clone();
    }
    let gram = canonical_gram(p, m, det);
    let mut total = BigInt::zero();

    // stratum y_1 = 0: every present pair (0,j) must have value 0
    if (0..n).all(|j| cons[pair_idx(0, j)].map_or(true, |v| v == 0)) {
        let shifted = shift_cons(cons, n);
        total += fp_tuple_count(p, m, det, n - 1, &shifted);
    }

    // strata y_1 ≠ 0 with Q(y_1) = c; one O(V)-orbit per norm value (Witt)
    let c_list: Vec<u64> = match cons[pair_idx(0, 0)] {
        Some(v) => vec![v],
        None => (0..p).collect(),
    };
    for c in c_list {
        let mut sz = value_count(p, &gram, c);
        if c == 0 {
            sz -= 1;
        }
        if sz == 0 {
            continue;
        }
        let inner = if c != 0 {
            // split off ⟨y*⟩ with Q(y*) = c; complement has det class det·(c|p)
            let det_k = det * legendre(p, c);
            let cinv = mod_inv_u64(c, p);
            // α_j fixed when pair (0,j) present, otherwise free
            let alpha_lists: Vec<Vec<u64>> = (1..n)
                .map(|j| match cons[pair_idx(0, j)] {
                    Some(v) => vec![v * cinv % p],
                    None => (0..p).collect(),
                })
                .collect();
            let mut sub = BigInt::zero();
            for_each_combo(&alpha_lists, &mut |alpha| {
                let mut adj = vec![None; cons_len(n - 1)];
                for j in 1..n {
                    for i in 1..=j {
                        if let Some(v) = cons[pair_idx(i, j)] {
                            let corr = alpha[i - 1] * alpha[j - 1] % p * (c % p) % p;
                            adj[pair_idx(i - 1, j - 1)] = Some((v + p - corr % p) % p);
                        }
                    }
                }
                sub += fp_tuple_count(p, m - 1, det_k, n - 1, &adj);
            });
            sub
        } else {
            // isotropic y* with hyperbolic partner u, Q(u) = 0;
            // complement has det class det·(−1|p)
            let det_k = det * legendre(p, p - 1);
            let beta_lists: Vec<Vec<u64>> = (1..n)
                .map(|j| match cons[pair_idx(0, j)] {
                    Some(v) => vec![v],
                    None => (0..p).collect(),
                })
                .collect();
            let alpha_lists: Vec<Vec<u64>> = (1..n).map(|_| (0..p).collect()).collect();
            let mut sub = BigInt::zero();
            for_each_combo(&beta_lists, &mut |beta| {
                for_each_combo(&alpha_lists, &mut |alpha| {
                    let mut adj = vec![None; cons_len(n - 1)];
                    for j in 1..n {
                        for i in 1..=j {
                            if let Some(v) = cons[pair_idx(i, j)] {
                                let corr = (alpha[i - 1] * beta[j - 1]
                                    + alpha[j - 1] * beta[i - 1])
                                    % p;
                                adj[pair_idx(i - 1, j - 1)] = Some((v + p - corr) % p);
                            }
                        }
                    }
                    sub += fp_tuple_count(p, m - 2, det_k, n - 1, &adj);
                });
            });
            sub
        };
        total += BigInt::from(sz) * inner;
    }

    T_MEMO.lock().unwrap().insert(key, total.clone());
    total
}

fn shift_cons(cons: &Cons, n: usize) -> Cons {
    let mut out = vec![None; cons_len(n - 1)];
    for j in 1..n {
        for i in 1..=j {
            out[pair_idx(i - 1, j - 1)] = cons[pair_idx(i, j)];
        }
    }
    out
}

fn for_each_combo(lists: &[Vec<u64>], f: &mut dyn FnMut(&[u64])) {
    let mut current = vec![0u64; lists.len()];
    fn rec(lists: &[Vec<u64>], k: usize, current: &mut Vec<u64>, f: &mut dyn FnMut(&[u64])) {
        if k == lists.len() {
            f(current);
            return;
        }
        for &v in &lists[k] {
            current[k] = v;
            rec(lists, k + 1, current, f);
        }
    }
    rec(lists, 0, &mut current, f);
}

fn mod_inv_u64(a: u64, p: u64) -> u64 {
    let mut r = 1u64;
    let mut b = a % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

fn gl_order(p: u64, r: usize) -> BigInt {
    let pr = BigInt::from(p).pow(r as u32);
    let mut o = BigInt::one();
    for i in 0..r {
        o *= &pr - BigInt::from(p).pow(i as u32);
    }
    o
}

/// Like `fp_tuple_count` but restricted to tuples of full rank n, via
/// inclusion–exclusion over the exact rank r < n (Y = Y₀·C factorizations,
/// each counted |GL_r(F_p)| times).
fn fp_rank_count(p: u64, m: usize, det: i64, n: usize, cons: &Cons) -> BigInt {
    if n == 0 {
        return BigInt::one();
    }
    if n > m {
        return BigInt::zero();
    }
    let key: FpKey = (p, m, det, n, cons_key(cons));
    if let Some(hit) = P_MEMO.lock().unwrap().get(&key) {
        return hit.clone();
    }
    let total = fp_tuple_count(p, m, det, n, cons);
    let mut deficient = BigInt::zero();
    for r in 0..n {
        let mut acc = BigInt::zero();
        // enumerate C ∈ F_p^{r×n} of rank r
        let cells = r * n;
        let count_c = (p as u128).pow(cells as u32);
        for mut code in 0..count_c {
            let mut cmat = vec![vec![0u64; n]; r];
            for row in cmat.iter_mut() {
                for x in row.iter_mut() {
                    *x = (code % p as u128) as u64;
                    code /= p as u128;
                }
            }
            if rank_mod_p(p, &cmat) != r {
                continue;
            }
            // enumerate full Gram targets Γ₀ of the rank-r generator tuple
            let gcells = cons_len(r);
            let count_g = (p as u128).pow(gcells as u32);
            for mut gcode in 0..count_g {
                let mut g0 = vec![0u64; gcells];
                for x in g0.iter_mut() {
                    *x = (gcode % p as u128) as u64;
                    gcode /= p as u128;
                }
                // compatibility: (CᵀΓ₀C)_{ij} must match every present pair
                let mut ok = true;
                'chk: for j in 0..n {
                    for i in 0..=j {
                        if let Some(v) = cons[pair_idx(i, j)] {
                            let mut s = 0u64;
                            for a in 0..r {
                                for b in 0..r {
                                    let gv = g0[pair_idx(a.min(b), a.max(b))];
                                    s = (s + cmat[a][i] * gv % p * cmat[b][j]) % p;
                                }
                            }
                            if s != v {
                                ok = false;
                                break 'chk;
                            }
                        }
                    }
                }
                if ok {
                    let full: Cons = g0.iter().map(|&v| Some(v)).collect();
                    acc += fp_rank_count(p, m, det, r, &full);
                }
            }
        }
        let glr = gl_order(p, r);
        debug_assert!((&acc % &glr).is_zero(), "torsor count not divisible");
        deficient += acc / glr;
    }
    let out = total - deficient;
    assert!(!out.is_negative(), "rank count underflow");
    P_MEMO.lock().unwrap().insert(key, out.clone());
    out
}

fn rank_mod_p(p: u64, rows: &[Vec<u64>]) -> usize {
    let mut m: Vec<Vec<u64>> = rows.to_vec();
    let width = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..width {
        let Some(pi) = (rank..m.len()).find(|&i| m[i][col] % p != 0) else {
            continue;
        };
        m.swap(rank, pi);
        let inv = mod_inv_u64(m[rank][col], p);
        for j in 0..width {
            m[rank][j] = m[rank][j] * inv % p;
        }
        for i in 0..m.len() {
            if i != rank && m[i][col] % p != 0 {
                let f = m[i][col] % p;
                for j in 0..width {
                    m[i][j] = (m[i][j] + (p - f) * m[rank][j]) % p;
                }
            }
        }
        rank += 1;
    }
    rank
}

// ---------------------------------------------------------------------------
// Fast counter for unimodular ambient
// ---------------------------------------------------------------------------

struct FastCtx {
    p: u64,
    n_prec: u32,
    modulus: BigInt, // p^N
    m: usize,
    n: usize,
    det_mod_p: i64, // Legendre class of det(G_M)
    b: Vec<BigInt>, // diagonal of B = diagonalized G_L, residues mod p^N
    budget: u64,
    steps: u64,
    total: BigInt,
}

fn val_residue(p: u64, x: &BigInt, cap: u32) -> u32 {
    // valuation of a residue in [0, p^cap); 0 counts as ≥ cap
    if x.is_zero() {
        return cap;
    }
    let pb = BigInt::from(p);
    let mut v = 0;
    let mut y = x.clone();
    while v < cap && (&y % &pb).is_zero() {
        y /= &pb;
        v += 1;
    }
    v
}

impl FastCtx {
    fn step(&mut self) -> Result<()> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(Error::BudgetExceeded(format!(
                "fast counter exceeded {} steps",
                self.budget
            )));
        }
        Ok(())
    }

    /// E = C_kᵀ B C_j as a residue mod p^N (B diagonal).
    fn pairing(&self, ck: &[BigInt], cj: &[BigInt]) -> BigInt {
        let mut e = BigInt::zero();
        for i in 0..self.n {
            e += &self.b[i] * &ck[i] * &cj[i];
        }
        e.mod_floor_big(&self.modulus)
    }

    /// Enumerate column j of the scaled Hermite basis: entries c_ij for
    /// i < j with range p^{max(a_j − a_i, 0)}, digit by digit with partial
    /// divisibility pruning on the constraints val(C_kᵀBC_j) ≥ min(a_k+a_j, N).
    fn fill_column(&mut self, j: usize, a: &mut Vec<u32>, cols: &mut Vec<Vec<BigInt>>) -> Result<()> {
        if j == self.n {
            return self.finalize(a, cols);
        }
        for aj in 0..=self.n_prec {
            a.push(aj);
            let mut col = vec![BigInt::zero(); self.n];
            col[j] = BigInt::one();
            let widths: Vec<u32> = (0..j).map(|i| aj.saturating_sub(a[i])).collect();
            let lmax = widths.iter().copied().max().unwrap_or(0);
            self.fill_digits(j, 0, lmax, &widths, &mut col, a, cols)?;
            a.pop();
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn fill_digits(
        &mut self,
        j: usize,
        level: u32,
        lmax: u32,
        widths: &[u32],
        col: &mut Vec<BigInt>,
        a: &mut Vec<u32>,
        cols: &mut Vec<Vec<BigInt>>,
    ) -> Result<()> {
        self.step()?;
        let complete = level >= lmax;
        // check all pair constraints (k, j), k ≤ j, to current digit depth;
        // once the column is complete the full threshold min(a_k+a_j, N) applies
        for k in 0..=j {
            let mut need = (a[k] + a[j]).min(self.n_prec);
            if !complete {
                need = need.min(level);
            }
            if need == 0 {
                continue;
            }
            let ck = if k == j { col.clone() } else { cols[k].clone() };
            let e = self.pairing(&ck, col);
            if val_residue(self.p, &e, self.n_prec) < need {
                return Ok(());
            }
        }
        if complete {
            cols.push(col.clone());
            self.fill_column(j + 1, a, cols)?;
            cols.pop();
            return Ok(());
        }
        // assign digit `level` of every entry still open at this level
        let open: Vec<usize> = (0..j).filter(|&i| widths[i] > level).collect();
        if open.is_empty() {
            return self.fill_digits(j, lmax, lmax, widths, col, a, cols);
        }
        let place = BigInt::from(self.p).pow(level);
        let combos = (self.p as u128).pow(open.len() as u32);
        for mut code in 0..combos {
            let mut digits = Vec::with_capacity(open.len());
            for _ in &open {
                digits.push((code % self.p as u128) as u64);
                code /= self.p as u128;
            }
            for (slot, &i) in open.iter().enumerate() {
                col[i] += &place * BigInt::from(digits[slot]);
            }
            self.fill_digits(j, level + 1, lmax, widths, col, a, cols)?;
            for (slot, &i) in open.iter().enumerate() {
                col[i] -= &place * BigInt::from(digits[slot]);
            }
        }
        Ok(())
    }

    fn finalize(&mut self, a: &[u32], cols: &[Vec<BigInt>]) -> Result<()> {
        let nn = self.n_prec;
        let live: Vec<usize> = (0..self.n).filter(|&j| a[j] < nn).collect();
        let n_live = live.len();
        // full validity (already enforced digit-wise, but re-assert) and
        // pattern of mod-p constraints among live columns
        let mut cons: Cons = vec![None; cons_len(n_live)];
        for (jj, &j) in live.iter().enumerate() {
            for (kk, &k) in live.iter().enumerate().take(jj + 1) {
                let w = nn as i64 - a[j] as i64 - a[k] as i64;
                if w >= 1 {
                    let e = self.pairing(&cols[k], &cols[j]);
                    let shift = BigInt::from(self.p).pow(a[j] + a[k]);
                    debug_assert!((&e % &shift).is_zero());
                    let v = ((e / shift) % BigInt::from(self.p))
                        .to_u64()
                        .expect("digit");
                    cons[pair_idx(kk, jj)] = Some(v);
                }
            }
        }
        let fp = fp_rank_count(self.p, self.m, self.det_mod_p, n_live, &cons);
        if fp.is_zero() {
            return Ok(());
        }
        // uniform Hensel lifting exponent and the Y ↔ Z fiber division
        let mut lift: i64 = 0;
        for k in 1..nn as i64 {
            let mut active = 0i64;
            for (jj, &j) in live.iter().enumerate() {
                for &kq in live.iter().take(jj + 1) {
                    if nn as i64 - a[j] as i64 - a[kq] as i64 > k {
                        active += 1;
                    }
                }
            }
            lift += self.m as i64 * n_live as i64 - active;
        }
        let fiber: i64 = self.m as i64 * live.iter().map(|&j| a[j] as i64).sum::<i64>();
        let num = fp * BigInt::from(self.p).pow(lift as u32);
        let den = BigInt::from(self.p).pow(fiber as u32);
        debug_assert!((&num % &den).is_zero(), "stratum count not integral");
        self.total += num / den;
        Ok(())
    }
}

trait ModFloor {
    fn mod_floor_big(self, m: &BigInt) -> BigInt;
}

impl ModFloor for BigInt {
    fn mod_floor_big(self, m: &BigInt) -> BigInt {
        let r = self % m;
        if r.is_negative() {
            r + m
        } else {
            r
        }
    }
}

fn count_fast(
    p: u64,
    m: usize,
    det_mod_p: i64,
    b_diag: &[Q],
    ctx: crate::padic::PrimeCtx,
    n_prec: u32,
    budget: u64,
) -> Result<BigInt> {
    let n = b_diag.len();
    let modulus = BigInt::from(p).pow(n_prec);
    let b: Vec<BigInt> = b_diag
        .iter()
        .map(|x| {
            if ctx.val_q(x).map_or(true, |v| v >= n_prec as i64) {
                BigInt::zero()
            } else {
                ctx.residue_mod(x, n_prec)
            }
        })
        .collect();
    let mut fc = FastCtx {
        p,
        n_prec,
        modulus,
        m,
        n,
        det_mod_p,
        b,
        budget,
        steps: 0,
        total: BigInt::zero(),
    };
    let mut a = Vec::new();
    let mut cols = Vec::new();
    fc.fill_column(0, &mut a, &mut cols)?;
    Ok(fc.total)
}

// ---------------------------------------------------------------------------
// Naive counter
// ---------------------------------------------------------------------------

/// Literal enumeration of X ∈ Mat_{m×n}(Z/p^N) with XᵀG_M X ≡ G_L, column by
/// column with early pruning; cost-guarded by p^{N·m·n} ≤ budget.
pub fn count_naive(m_lat: &QuadLattice, l_lat: &QuadLattice, n_prec: u32, budget: u64) -> Result<BigInt> {
    m_lat.check_integral()?;
    l_lat.check_integral()?;
    if m_lat.ctx != l_lat.ctx {
        return Err(Error::CtxMismatch(m_lat.ctx.p, l_lat.ctx.p));
    }
    let p = m_lat.ctx.p;
    let (m, n) = (m_lat.rank(), l_lat.rank());
    let cost = (p as f64).powi((n_prec as usize * m * n) as i32);
    if cost > budget as f64 {
        return Err(Error::BudgetExceeded(format!(
            "naive count needs p^{{N·m·n}} = {cost:.3e} > budget {budget}"
        )));
    }
    let modulus = BigInt::from(p).pow(n_prec);
    let to_res = |x: &Q| -> u64 {
        let r = m_lat.ctx.residue_mod(x, n_prec);
        (&r % &modulus).to_u64().expect("naive guard keeps p^N small")
    };
    let pn =
        (p as u128).pow(n_prec) as u64;
    let gm: Vec<Vec<u64>> = m_lat.gram.iter().map(|r| r.iter().map(to_res).collect()).collect();
    let gl: Vec<Vec<u64>> = l_lat.gram.iter().map(|r| r.iter().map(to_res).collect()).collect();

    let mut cols: Vec<Vec<u64>> = Vec::new();
    let mut count = BigInt::zero();
    fn pair(gm: &[Vec<u64>], pn: u64, x: &[u64], y: &[u64]) -> u64 {
        let mut s: u128 = 0;
        for i in 0..x.len() {
            for j in 0..y.len() {
                if gm[i][j] != 0 {
                    s += gm[i][j] as u128 * x[i] as u128 % pn as u128 * y[j] as u128 % pn as u128;
                    s %= pn as u128;
                }
            }
        }
        s as u64
    }
    fn rec(
        gm: &[Vec<u64>],
        gl: &[Vec<u64>],
        pn: u64,
        p: u64,
        m: usize,
        n: usize,
        cols: &mut Vec<Vec<u64>>,
        count: &mut BigInt,
    ) {
        let j = cols.len();
        if j == n {
            *count += 1;
            return;
        }
        let total = (pn as u128).pow(m as u32);
        let mut code = 0u128;
        while code < total {
            let mut c = code;
            let col: Vec<u64> = (0..m)
                .map(|_| {
                    let d = (c % pn as u128) as u64;
                    c /= pn as u128;
                    d
                })
                .collect();
            code += 1;
            let mut ok = true;
            for (i, prev) in cols.iter().enumerate() {
                if pair(gm, pn, prev, &col) != gl[i][j] {
                    ok = false;
                    break;
                }
            }
            if ok && pair(gm, pn, &col, &col) == gl[j][j] {
                cols.push(col);
                rec(gm, gl, pn, p, m, n, cols, count);
                cols.pop();
            }
        }
    }
    rec(&gm, &gl, pn, p, m, n, &mut cols, &mut count);
    Ok(count)
}

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

/// #{X ∈ Mat_{m×n}(Z/p^N) : XᵀG_M X ≡ G_L mod p^N}. Uses the stratified
/// fast counter when M is unimodular, the guarded naive scan otherwise.
pub fn count_representations(
    m_lat: &QuadLattice,
    l_lat: &QuadLattice,
    n_prec: u32,
    budget: u64,
) -> Result<BigInt> {
    m_lat.check_integral()?;
    l_lat.check_integral()?;
    if m_lat.ctx != l_lat.ctx {
        return Err(Error::CtxMismatch(m_lat.ctx.p, l_lat.ctx.p));
    }
    if n_prec == 0 {
        return Err(Error::Invalid("precision N must be ≥ 1".into()));
    }
    let dm = m_lat.diagonalize();
    let unimodular = dm.entries.iter().all(|&(a, _)| a == 0);
    if unimodular {
        let det_mod_p: i64 = dm.entries.iter().map(|&(_, u)| u as i64).product();
        let dl = l_lat.diagonalize();
        count_fast(
            m_lat.ctx.p,
            m_lat.rank(),
            det_mod_p,
            &dl.diag,
            m_lat.ctx,
            n_prec,
            budget,
        )
    } else {
        count_naive(m_lat, l_lat, n_prec, budget)
    }
}

/// Increase N until two consecutive normalized counts coincide, then one
/// confirming step; cap N at 2·val(L)+3.
pub fn density_oracle(m_lat: &QuadLattice, l_lat: &QuadLattice, budget: u64) -> Result<OracleResult> {
    let dim = rep_dim(m_lat.rank(), l_lat.rank());
    let n_max = (2 * l_lat.val() + 3).max(3) as u32;
    let p = m_lat.ctx.p;
    let mut raw: Vec<(u32, BigInt)> = Vec::new();
    let mut values: Vec<Q> = Vec::new();
    for n_prec in 1..=n_max {
        let c = count_representations(m_lat, l_lat, n_prec, budget)?;
        raw.push((n_prec, c.clone()));
        let denom = BigInt::from(p).pow((n_prec as i64 * dim) as u32);
        values.push(BigRational::new(c, denom));
        let k = values.len();
        if k >= 3 && values[k - 1] == values[k - 2] && values[k - 2] == values[k - 3] {
            return Ok(OracleResult {
                density: values[k - 1].clone(),
                n_used: n_prec,
                stabilized: true,
                raw_counts: raw,
            });
        }
    }
    Err(Error::NotStabilized {
        raw_counts: raw.iter().map(|(n, c)| format!("N={n}: {c}")).collect(),
    })
}

//! Normalized local Siegel series Den^ε(X, L) (odd corank) and Den^♭ε(X, L)
//! (even corank), their central derivatives, functional equations and the
//! induction formula, all in exact rational polynomial arithmetic.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::finiteq::{count_isometries, reduce_mod_p};
use crate::overlattice::enumerate_integral_overlattices;
use crate::padic::{h_lattice, PrimeCtx, QuadLattice};
use crate::qmat::{q_int, q_pow, Q};

// ---------------------------------------------------------------------------
// Exact polynomials over Q
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    /// coefficients, index = degree; normalized (no trailing zeros)
    pub coeffs: Vec<Q>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<Q>) -> Self {
        while coeffs.last().map_or(false, |c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn one() -> Self {
        Poly::new(vec![q_int(1)])
    }

    pub fn constant(c: Q) -> Self {
        Poly::new(vec![c])
    }

    /// c₀ + c₁·X
    pub fn linear(c0: Q, c1: Q) -> Self {
        Poly::new(vec![c0, c1])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.is_zero() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeff(&self, i: usize) -> Q {
        self.coeffs.get(i).cloned().unwrap_or_else(|| q_int(0))
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) + other.coeff(i)).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) - other.coeff(i)).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![q_int(0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn scale(&self, c: &Q) -> Poly {
        Poly::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    /// multiply by X^k
    pub fn shift(&self, k: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![q_int(0); k];
        out.extend(self.coeffs.iter().cloned());
        Poly::new(out)
    }

    pub fn eval(&self, x: &Q) -> Q {
        let mut acc = q_int(0);
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| c * q_int(i as i64 + 1))
                .collect(),
        )
    }

    /// −d/dX at X = 1
    pub fn neg_derivative_at_one(&self) -> Q {
        -self.derivative().eval(&q_int(1))
    }

    /// X^d · P(1/X) for d ≥ deg P (reversal padded to degree d)
    pub fn reversed(&self, d: usize) -> Poly {
        let mut out = vec![q_int(0); d + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            assert!(i <= d, "reversal degree too small");
            out[d - i] = c.clone();
        }
        Poly::new(out)
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.coeffs.iter().map(|c| c.to_string()).collect()
    }
}

// ---------------------------------------------------------------------------
// Weight polynomials and factors
// ---------------------------------------------------------------------------

/// 𝔪(t, s; X) = (1 + s·q^{(t−1)/2} X) ∏_{0 ≤ i < (t−1)/2} (1 − q^{2i} X²),
/// with 𝔪(0, s; X) = 1; requires s = 0 when t − 1 is odd.
pub fn m_poly(ctx: PrimeCtx, t: i64, s: i32) -> Poly {
    if t == 0 {
        return Poly::one();
    }
    assert!(t >= 1);
    assert!((t - 1) % 2 == 0 || s == 0, "s must vanish when t−1 is odd");
    let q = ctx.p;
    let mut out = if s == 0 {
        Poly::one()
    } else {
        Poly::linear(q_int(1), q_int(s as i64) * q_pow(q, (t - 1) / 2))
    };
    let mut i = 0;
    while 2 * i < t - 1 {
        let quad = Poly::new(vec![q_int(1), q_int(0), -q_pow(q, 2 * i)]);
        out = out.mul(&quad);
        i += 1;
    }
    out
}

/// wt^ε(t, s; X) = 𝔪(t, s; εX)
pub fn weight_poly(ctx: PrimeCtx, t: i64, s: i32, eps: i32) -> Poly {
    substitute_eps(&m_poly(ctx, t, s), eps)
}

/// weight factor −d/dX|₁ wt^ε(t, s; X)
pub fn weight_factor(ctx: PrimeCtx, t: i64, s: i32, eps: i32) -> Q {
    weight_poly(ctx, t, s, eps).neg_derivative_at_one()
}

/// wt^♭(t, s, χ; X) = (1 + s·q^{t/2} X)(1 − χX) ∏_{0 < i < t/2} (1 − q^{2i}X²),
/// with wt^♭(0, s, χ; X) = 1; requires s = 0 when t is odd.
pub fn flat_weight_base(ctx: PrimeCtx, t: i64, s: i32, chi: i32) -> Poly {
    if t == 0 {
        return Poly::one();
    }
    assert!(t % 2 == 0 || s == 0, "s must vanish when t is odd");
    let q = ctx.p;
    let mut out = if s == 0 {
        Poly::one()
    } else {
        Poly::linear(q_int(1), q_int(s as i64) * q_pow(q, t / 2))
    };
    out = out.mul(&Poly::linear(q_int(1), q_int(-chi as i64)));
    let mut i = 1;
    while 2 * i < t {
        let quad = Poly::new(vec![q_int(1), q_int(0), -q_pow(q, 2 * i)]);
        out = out.mul(&quad);
        i += 1;
    }
    out
}

/// wt^♭ε(t, s, χ; X) = wt^♭(t, s, χ; εX)
pub fn flat_weight_poly(ctx: PrimeCtx, t: i64, s: i32, chi: i32, eps: i32) -> Poly {
    substitute_eps(&flat_weight_base(ctx, t, s, chi), eps)
}

fn substitute_eps(p: &Poly, eps: i32) -> Poly {
    assert!(eps == 1 || eps == -1);
    if eps == 1 {
        return p.clone();
    }
    Poly::new(
        p.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| if i % 2 == 1 { -c } else { c.clone() })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Normalizing polynomials
// ---------------------------------------------------------------------------

/// sgn of the reduction of H_m^ε: ε for even m, 0 for odd m.
pub fn sgn_h(ctx: PrimeCtx, m: usize, eps: i32) -> Result<i32> {
    let h = h_lattice(ctx, m, eps)?;
    let sp = reduce_mod_p(&h)?;
    Ok(if m % 2 == 0 { sp.chi0 } else { 0 })
}

/// Nor^ε(X, L) for rank-n L (odd corank):
/// (1 − sgn(H_{n+1}^ε) q^{−(n+1)/2} X) ∏_{1 ≤ i < (n+1)/2} (1 − q^{−2i} X²).
pub fn nor_poly(ctx: PrimeCtx, n: usize, eps: i32) -> Result<Poly> {
    let q = ctx.p;
    let m = (n + 1) as i64;
    let mut out = Poly::one();
    if m % 2 == 0 {
        let s = sgn_h(ctx, n + 1, eps)?;
        out = out.mul(&Poly::linear(q_int(1), q_int(-s as i64) * q_pow(q, -m / 2)));
    }
    let mut i = 1;
    while 2 * i < m {
        out = out.mul(&Poly::new(vec![q_int(1), q_int(0), -q_pow(q, -2 * i)]));
        i += 1;
    }
    Ok(out)
}

/// Numerator of Nor^♭ε(X, L) for rank-n L (even corank); the full normalizer
/// is this divided by (1 − εχ(L)X):
/// (1 − sgn(H_n^ε) q^{−n/2} X) ∏_{0 ≤ i < n/2} (1 − q^{−2i} X²).
pub fn nor_flat_numerator(ctx: PrimeCtx, n: usize, eps: i32) -> Result<Poly> {
    let q = ctx.p;
    let m = n as i64;
    let mut out = Poly::one();
    if m % 2 == 0 && m > 0 {
        let s = sgn_h(ctx, n, eps)?;
        out = out.mul(&Poly::linear(q_int(1), q_int(-s as i64) * q_pow(q, -m / 2)));
    }
    let mut i = 0;
    while 2 * i < m {
        out = out.mul(&Poly::new(vec![q_int(1), q_int(0), -q_pow(q, -2 * i)]));
        i += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Unnormalized local density (closed formula)
// ---------------------------------------------------------------------------

/// Den(H_m^ε, L) = q^{−n(2m−n−1)/2} Σ_{L ⊆ L′ ⊆ L′^∨} q^{(n+1−m)ℓ(L′/L)}
/// #O(L′_κ, (H_m^ε)_κ); returns 0 for non-integral L.
pub fn local_density_closed(ctx: PrimeCtx, m: usize, eps: i32, l: &QuadLattice) -> Result<Q> {
    if l.check_integral().is_err() {
        return Ok(q_int(0));
    }
    let n = l.rank() as i64;
    let h = reduce_mod_p(&h_lattice(ctx, m, eps)?)?;
    let mut sum = q_int(0);
    for entry in enumerate_integral_overlattices(l, false)? {
        let iso = count_isometries(&entry.space, &h)?;
        sum += q_pow(ctx.p, (n + 1 - m as i64) * entry.ell) * Q::from_integer(iso);
    }
    Ok(sum * q_pow(ctx.p, -(n * (2 * m as i64 - n - 1) / 2)))
}

// ---------------------------------------------------------------------------
// Normalized Siegel series
// ---------------------------------------------------------------------------

/// Den^ε(X, L) = Σ_{L ⊆ L′ ⊆ L′^∨} X^{2ℓ(L′/L)} wt^ε(t(L′), sgn_{n+1}(L′); X);
/// zero polynomial when L is not integral.
pub fn den_poly(l: &QuadLattice, eps: i32) -> Result<Poly> {
    if l.check_integral().is_err() {
        return Ok(Poly::zero());
    }
    let n = l.rank() as i64;
    let ctx = l.ctx;
    let mut out = Poly::zero();
    for entry in enumerate_integral_overlattices(l, false)? {
        let w = weight_poly(ctx, entry.t as i64, entry.sgn_for(n + 1), eps);
        out = out.add(&w.shift(2 * entry.ell as usize));
    }
    Ok(out)
}

/// Den^♭ε(X, L) = Σ (q^{1/2}X)^{2ℓ} wt^♭ε(t(L′), sgn_n(L′), χ(L); X);
/// zero polynomial when L is not integral.
pub fn den_flat_poly(l: &QuadLattice, eps: i32) -> Result<Poly> {
    if l.check_integral().is_err() {
        return Ok(Poly::zero());
    }
    let n = l.rank() as i64;
    let ctx = l.ctx;
    let chi = l.chi();
    let mut out = Poly::zero();
    for entry in enumerate_integral_overlattices(l, false)? {
        let w = flat_weight_poly(ctx, entry.t as i64, entry.sgn_for(n), chi, eps);
        let scaled = w.scale(&q_pow(ctx.p, entry.ell));
        out = out.add(&scaled.shift(2 * entry.ell as usize));
    }
    Ok(out)
}

/// Den^♭ε(1, L), via the truncated sum over overlattices of type ≤ 2.
pub fn den_flat_at_1_closed(l: &QuadLattice, eps: i32) -> Result<Q> {
    if l.check_integral().is_err() {
        return Ok(q_int(0));
    }
    let n = l.rank() as i64;
    let ctx = l.ctx;
    let q = ctx.p;
    let chi = l.chi();
    let e = q_int(eps as i64);
    let mut sum = q_int(0);
    for entry in enumerate_integral_overlattices(l, false)? {
        if entry.t > 2 {
            continue;
        }
        let base = q_pow(q, entry.val.div_euclid(2));
        let factor = match entry.t {
            0 => q_int(1),
            1 => q_int(1) - &e * q_int(chi as i64) * q_pow(q, -1),
            2 => {
                (q_int(1) + &e * q_int(entry.sgn_for(n) as i64))
                    * (q_int(1) - &e * q_int(chi as i64) * q_pow(q, -1))
            }
            _ => unreachable!(),
        };
        sum += base * factor;
    }
    Ok(sum)
}

/// Den^♭ε(1, L), evaluated from the full polynomial.
pub fn den_flat_at_1(l: &QuadLattice, eps: i32) -> Result<Q> {
    Ok(den_flat_poly(l, eps)?.eval(&q_int(1)))
}

/// Central derivative ∂Den^ε(L) = −d/dX|₁ Den^ε(X, L).
pub fn pden(l: &QuadLattice, eps: i32) -> Result<Q> {
    Ok(den_poly(l, eps)?.neg_derivative_at_one())
}

/// ∂Den^ε(L) as the sum of weight factors over all integral overlattices
/// (valid exactly when the functional-equation sign is −1).
pub fn pden_via_weight_factors(l: &QuadLattice, eps: i32) -> Result<Q> {
    if l.check_integral().is_err() {
        return Ok(q_int(0));
    }
    let n = l.rank() as i64;
    let ctx = l.ctx;
    let mut sum = q_int(0);
    for entry in enumerate_integral_overlattices(l, false)? {
        sum += weight_factor(ctx, entry.t as i64, entry.sgn_for(n + 1), eps);
    }
    Ok(sum)
}

// ---------------------------------------------------------------------------
// Functional equations
// ---------------------------------------------------------------------------

/// Sign of the functional equation,
/// w^ε(L) = (det L, −(−1)^{C(n+1,2)} u)_F · hasse(L_F) with χ(u) = ε.
pub fn fe_sign(l: &QuadLattice, eps: i32) -> Result<i32> {
    let ctx = l.ctx;
    let inv = l.invariants();
    let n1 = l.rank() as i64 + 1;
    let mut arg = q_int(if eps == 1 { 1 } else { ctx.r as i64 });
    if (n1 * (n1 - 1) / 2) % 2 == 0 {
        // −(−1)^{C(n+1,2)} = −1
        arg = -arg;
    }
    let h = ctx.hilbert(&l.det(), &arg)?;
    Ok(h * inv.hasse)
}

/// Check Den^ε(X, L) = w^ε(L)·X^{val(L)}·Den^ε(1/X, L) exactly, and that the
/// sign read off the polynomial matches `fe_sign`.
pub fn check_functional_equation(l: &QuadLattice, eps: i32) -> Result<()> {
    l.check_integral()?;
    let den = den_poly(l, eps)?;
    let val = l.val();
    assert!(val >= 0);
    let w = fe_sign(l, eps)?;
    let rhs = den.reversed(val as usize).scale(&q_int(w as i64));
    if den != rhs {
        return Err(Error::IdentityViolated {
            witness: format!(
                "{{\"identity\":\"odd-corank functional equation\",\"p\":{},\"eps\":{},\"gram\":{:?},\"den\":{:?},\"w\":{},\"rhs\":{:?}}}",
                l.ctx.p,
                eps,
                l.gram.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                den.to_strings(),
                w,
                rhs.to_strings()
            ),
        });
    }
    Ok(())
}

/// Check Den^♭ε(X, L) = (q^{1/2}X)^{2⌊val/2⌋}·Den^♭ε(1/(qX), L) exactly:
/// with v = ⌊val/2⌋ this says coeff_{2v−i} = q^{v−i}·coeff_i for all i.
pub fn check_functional_equation_flat(l: &QuadLattice, eps: i32) -> Result<()> {
    l.check_integral()?;
    let den = den_flat_poly(l, eps)?;
    let v = l.val().div_euclid(2);
    let q = l.ctx.p;
    let deg = den.degree().unwrap_or(0);
    let width = deg.max(2 * v as usize);
    for i in 0..=width {
        // indices above 2v pair with negative exponents, so must vanish
        let ok = if i > 2 * v as usize {
            den.coeff(i).is_zero()
        } else {
            den.coeff(2 * v as usize - i) == den.coeff(i) * q_pow(q, v - i as i64)
        };
        if !ok {
            return Err(Error::IdentityViolated {
                witness: format!(
                    "{{\"identity\":\"even-corank functional equation\",\"p\":{},\"eps\":{},\"gram\":{:?},\"den\":{:?},\"i\":{}}}",
                    q,
                    eps,
                    l.gram.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                    den.to_strings(),
                    i
                ),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Induction formula and cancellation
// ---------------------------------------------------------------------------

/// L = L♭ ⊥ ⟨x⟩ and L̃ = L♭ ⊥ ⟨ϖ^{−1}x⟩ for a norm-c vector x with
/// val(c) > 2·a_{max}(L♭) + 1 (so that val(ϖ^{−1}x) > a_max still holds).
pub fn adjoin(l_flat: &QuadLattice, c: &Q) -> Result<(QuadLattice, QuadLattice)> {
    let ctx = l_flat.ctx;
    let one = QuadLattice::from_diag_entries(ctx, &[c.clone()])?;
    let shrunk = QuadLattice::from_diag_entries(ctx, &[c * q_pow(ctx.p, -2)])?;
    Ok((l_flat.direct_sum(&one)?, l_flat.direct_sum(&shrunk)?))
}

/// Verify the induction formula
/// Den^ε(X, L) = X²·Den^ε(X, L̃) + (1−εχ(L♭)X)^{−1}(1−X²)·Den^♭ε(X, L♭),
/// cross-multiplied by (1−εχ(L♭)X), plus the unnormalized induction identity
/// Den(H_m, L) = q^{n+1−m}·Den(H_m, L̃) + c_m·Den(H_{m−2}, L♭) at
/// m = n+1+2k for k ∈ {0,1,2}.
pub fn induction_check(l_flat: &QuadLattice, c: &Q, eps: i32) -> Result<()> {
    let ctx = l_flat.ctx;
    let q = ctx.p;
    let a_max = l_flat
        .diagonalize()
        .entries
        .iter()
        .map(|&(a, _)| a)
        .max()
        .unwrap_or(0);
    if ctx.val_q(c).map_or(true, |v| v <= a_max + 1) {
        return Err(Error::Inadmissible(format!(
            "adjoined norm must have valuation > a_max + 1 = {}",
            a_max + 1
        )));
    }
    let (l, l_tilde) = adjoin(l_flat, c)?;
    let chi_flat = l_flat.chi();
    let eps_chi = Poly::linear(q_int(1), q_int(-(eps * chi_flat) as i64));
    let one_minus_x2 = Poly::new(vec![q_int(1), q_int(0), q_int(-1)]);

    let lhs = den_poly(&l, eps)?.mul(&eps_chi);
    let rhs = den_poly(&l_tilde, eps)?
        .shift(2)
        .mul(&eps_chi)
        .add(&one_minus_x2.mul(&den_flat_poly(l_flat, eps)?));
    if lhs != rhs {
        return Err(Error::IdentityViolated {
            witness: format!(
                "{{\"identity\":\"induction formula\",\"p\":{q},\"eps\":{eps},\"lflat\":{:?},\"c\":\"{c}\",\"lhs\":{:?},\"rhs\":{:?}}}",
                l_flat.gram.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                lhs.to_strings(),
                rhs.to_strings()
            ),
        });
    }

    // unnormalized induction at X = q^{-k}
    let n = l.rank();
    for k in 0..=2usize {
        let m = n + 1 + 2 * k;
        let lhs = local_density_closed(ctx, m, eps, &l)?;
        let factor = if m % 2 == 0 {
            (q_int(1) - q_int(eps as i64) * q_pow(q, -(m as i64) / 2))
                * (q_int(1) + q_int(eps as i64) * q_pow(q, -(m as i64 - 2) / 2))
        } else {
            q_int(1) - q_pow(q, -(m as i64 - 1))
        };
        let rhs = q_pow(q, n as i64 + 1 - m as i64) * local_density_closed(ctx, m, eps, &l_tilde)?
            + factor * local_density_closed(ctx, m - 2, eps, l_flat)?;
        if lhs != rhs {
            return Err(Error::IdentityViolated {
                witness: format!(
                    "{{\"identity\":\"unnormalized induction\",\"p\":{q},\"eps\":{eps},\"m\":{m},\"lhs\":\"{lhs}\",\"rhs\":\"{rhs}\"}}"
                ),
            });
        }
    }
    Ok(())
}

/// Difference formula for central derivatives under one induction step
/// (valid when w^ε(L) = −1): ∂Den^ε(L) − ∂Den^ε(L̃) equals
/// −εχ(L♭)·Den^♭ε(1, L♭) when χ(L♭) ≠ 0 and 2·Den^♭ε(1, L♭) when χ(L♭) = 0.
pub fn pden_difference(l_flat: &QuadLattice, eps: i32) -> Result<Q> {
    let chi = l_flat.chi();
    let d1 = den_flat_at_1(l_flat, eps)?;
    Ok(if chi != 0 {
        q_int(-(eps * chi) as i64) * d1
    } else {
        q_int(2) * d1
    })
}

/// Cancellation of a self-dual orthogonal summand:
/// Den^ε(X, L♭ ⊥ M) = Den^{ε′}(X, L♭) with ε′ determined by
/// H_{n−r+1}^{ε′} ⊥ M ≅ H_{n+1}^ε, i.e. ε′ = ε·χ(M)·((−1)^{(n+1−r)r} | p).
pub fn cancellation_check(l_flat: &QuadLattice, m_selfdual: &QuadLattice, eps: i32) -> Result<()> {
    let ctx = l_flat.ctx;
    let mv = m_selfdual.val();
    if mv != 0 {
        return Err(Error::Inadmissible("summand must be self-dual".into()));
    }
    let chi_m = m_selfdual.chi();
    let r = m_selfdual.rank() as i64;
    let n1 = l_flat.rank() as i64 + r + 1; // rank of L + 1
    let sign_pow = ((n1 - r) * r) % 2;
    let leg_m1 = ctx.legendre_u64(ctx.p - 1);
    let eps_p = eps * chi_m * if sign_pow == 0 { 1 } else { leg_m1 };
    let lhs = den_poly(&l_flat.direct_sum(m_selfdual)?, eps)?;
    let rhs = den_poly(l_flat, eps_p)?;
    if lhs != rhs {
        return Err(Error::IdentityViolated {
            witness: format!(
                "{{\"identity\":\"self-dual cancellation\",\"p\":{},\"eps\":{eps},\"eps_prime\":{eps_p},\"lhs\":{:?},\"rhs\":{:?}}}",
                ctx.p,
                lhs.to_strings(),
                rhs.to_strings()
            ),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Whittaker values
// ---------------------------------------------------------------------------

/// W_T(1, k) = Den^ε(q^{−k}, L)·Nor^ε(q^{−k}, L).
pub fn whittaker_value(l: &QuadLattice, eps: i32, k: u32) -> Result<Q> {
    let ctx = l.ctx;
    let x = q_pow(ctx.p, -(k as i64));
    Ok(den_poly(l, eps)?.eval(&x) * nor_poly(ctx, l.rank(), eps)?.eval(&x))
}

/// Coefficient of log q in W′_T(1, 0) = ∂Den^ε(L)·Nor^ε(1, L)·log q;
/// requires w^ε(L) = −1 (otherwise the central value need not vanish).
pub fn whittaker_derivative(l: &QuadLattice, eps: i32) -> Result<Q> {
    if fe_sign(l, eps)? != -1 {
        return Err(Error::WrongSign);
    }
    let ctx = l.ctx;
    Ok(pden(l, eps)? * nor_poly(ctx, l.rank(), eps)?.eval(&q_int(1)))
}

// ---------------------------------------------------------------------------
// Random test lattices
// ---------------------------------------------------------------------------

/// Seed-derived random integral lattice: random fundamental invariants with
/// values ≤ max_val and random unit classes, conjugated by a random
/// unimodular change of basis (so the Gram matrix is not diagonal).
pub fn random_lattice(
    ctx: PrimeCtx,
    rng: &mut impl rand::Rng,
    rank: usize,
    max_val: i64,
) -> QuadLattice {
    use crate::qmat;
    let profile: Vec<(i64, i32)> = (0..rank)
        .map(|_| {
            (
                rng.gen_range(0..=max_val),
                if rng.gen_bool(0.5) { 1 } else { -1 },
            )
        })
        .collect();
    let base = QuadLattice::from_profile(ctx, &profile).expect("profile lattice");
    // unimodular S = unit lower · unit upper with small integer entries
    let mut lower = qmat::identity(rank);
    let mut upper = qmat::identity(rank);
    let span = (ctx.p * ctx.p) as i64;
    for i in 0..rank {
        for j in 0..i {
            lower[i][j] = q_int(rng.gen_range(0..span));
            upper[j][i] = q_int(rng.gen_range(0..span));
        }
    }
    let s = qmat::mul(&lower, &upper);
    base.with_basis(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::q_int;

    fn lat(p: u64, diag: &[i64]) -> QuadLattice {
        let ctx = PrimeCtx::new(p).unwrap();
        QuadLattice::from_diag_entries(ctx, &diag.iter().map(|&d| q_int(d)).collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn nor_value_example() {
        // rank 3, ε = +1, q = 3, X = 1 evaluates to 64/81
        let ctx = PrimeCtx::new(3).unwrap();
        let nor = nor_poly(ctx, 3, 1).unwrap();
        assert_eq!(nor.eval(&q_int(1)), q_pow(3, -4) * q_int(64));
    }

    #[test]
    fn den_poly_unimodular_is_one() {
        for p in [3u64, 5] {
            for eps in [1, -1] {
                let l = lat(p, &[1, 1]);
                assert_eq!(den_poly(&l, eps).unwrap(), Poly::one());
            }
        }
    }

    #[test]
    fn den_poly_triple_units() {
        // L with fundamental invariants (1,1,1): Den^ε(X) = 1 + εqX + qX² + εX³,
        // ∂Den^− = 3 − q
        for p in [3u64, 5, 7] {
            let pp = p as i64;
            for eps in [1i32, -1] {
                let l = lat(p, &[pp, pp, pp]);
                let den = den_poly(&l, eps).unwrap();
                let e = q_int(eps as i64);
                let expect = Poly::new(vec![
                    q_int(1),
                    &e * q_int(p as i64),
                    q_int(p as i64),
                    e.clone(),
                ]);
                assert_eq!(den, expect, "p={p} eps={eps}");
            }
            let l = lat(p, &[p as i64, p as i64, p as i64]);
            assert_eq!(pden(&l, -1).unwrap(), q_int(3 - p as i64));
        }
    }

    #[test]
    fn den_poly_rank_one_scaled() {
        // L = ⟨u p²⟩: Den^ε(X) = 1 + εX + X²  (overlattices: L, p^{-1}L)
        let p = 3u64;
        for eps in [1, -1] {
            let l = lat(p, &[9]);
            let den = den_poly(&l, eps).unwrap();
            assert_eq!(
                den,
                Poly::new(vec![q_int(1), q_int(eps as i64), q_int(1)]),
                "eps={eps}"
            );
        }
    }

    #[test]
    fn functional_equations_small() {
        for p in [3u64, 5] {
            let ctx = PrimeCtx::new(p).unwrap();
            let r = ctx.r as i64;
            let pp = p as i64;
            for diag in [
                vec![1],
                vec![pp],
                vec![r * pp * pp],
                vec![1, pp],
                vec![r, pp * pp],
                vec![1, 1, pp],
                vec![pp, pp, pp],
            ] {
                for eps in [1, -1] {
                    let l = lat(p, &diag);
                    check_functional_equation(&l, eps).unwrap();
                    check_functional_equation_flat(&l, eps).unwrap();
                }
            }
        }
    }

    #[test]
    fn flat_at_one_closed_matches_poly() {
        for p in [3u64, 5] {
            let pp = p as i64;
            for diag in [vec![1, pp], vec![pp, pp], vec![1, pp * pp * pp], vec![1, 1, pp * pp]] {
                for eps in [1, -1] {
                    let l = lat(p, &diag);
                    assert_eq!(
                        den_flat_at_1(&l, eps).unwrap(),
                        den_flat_at_1_closed(&l, eps).unwrap(),
                        "p={p} diag={diag:?} eps={eps}"
                    );
                }
            }
        }
    }

    #[test]
    fn den_matches_oracle_spot() {
        // Den^ε(q^{−k})·Nor^ε(q^{−k}) = Den(H_{n+1+2k}^ε, L) for a spot cell
        use crate::oracle::{density_oracle, DEFAULT_BUDGET};
        let p = 3u64;
        let ctx = PrimeCtx::new(p).unwrap();
        let l = lat(p, &[1, 3]);
        for eps in [1, -1] {
            for k in 0..=1i64 {
                let m = l.rank() + 1 + 2 * k as usize;
                let h = h_lattice(ctx, m, eps).unwrap();
                let oracle = density_oracle(&h, &l, DEFAULT_BUDGET).unwrap();
                let x = q_pow(p, -k);
                let closed = den_poly(&l, eps).unwrap().eval(&x)
                    * nor_poly(ctx, l.rank(), eps).unwrap().eval(&x);
                assert_eq!(closed, oracle.density, "eps={eps} k={k}");
                // and the closed-formula unnormalized density agrees too
                assert_eq!(
                    local_density_closed(ctx, m, eps, &l).unwrap(),
                    oracle.density
                );
            }
        }
    }
}

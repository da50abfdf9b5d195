//! Weighted coset-counting invariants of type-t lattices (μ-profiles), the
//! two counting identities they satisfy, and the perpendicular jump sum of
//! the central derivative.

use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::finiteq::reduce_mod_p;
use crate::geometry::{is_horizontal, SqrtQ};
use crate::overlattice::enumerate_integral_overlattices;
use crate::padic::{PrimeCtx, QuadLattice};
use crate::qmat::{self, q_int, q_pow, Q};
use crate::siegel::weight_factor;

/// Coset counts of a rank-t, type-t lattice L:
/// μ⁺ = #{x ∈ ϖL^∨/L : val((x,x)) ≥ 1},
/// μ⁰ = #{x ∈ ϖL^∨/L : val((x,x)) = 0} (split by sign as μ^{0,±}),
/// μ⁻ = #{x ∈ L^∨/L : val((x,x)) ≥ 0} − (μ⁺ + μ⁰).
/// All conditions are invariant under translation by L because the pairing
/// of ϖL^∨ (resp. L^∨) with L lands in ϖZ_p (resp. Z_p) and norms of L are
/// in ϖZ_p for a type-t lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MuProfile {
    pub mu_plus: u64,
    pub mu_zero: u64,
    pub mu_minus: u64,
    pub mu_zero_plus: u64,
    pub mu_zero_minus: u64,
}

fn check_rank_type(l: &QuadLattice) -> Result<(Vec<i64>, Vec<i64>)> {
    l.check_integral()?;
    let d = l.diagonalize();
    let a: Vec<i64> = d.entries.iter().map(|&(ai, _)| ai).collect();
    if a.iter().any(|&ai| ai < 1) || a.len() < 2 {
        return Err(Error::Inadmissible(
            "profile requires rank = type = t > 1 (all scales ≥ 1)".into(),
        ));
    }
    let ctx = l.ctx;
    // unit residues mod p^{max a + 1}, as plain integers
    let units: Vec<i64> = d
        .diag
        .iter()
        .zip(&a)
        .map(|(x, &ai)| {
            let u = x / q_pow(ctx.p, ai);
            let level = (a.iter().max().unwrap() + 1) as u32;
            ctx.residue_mod(&u, level).to_i64().unwrap()
        })
        .collect();
    Ok((a, units))
}

/// The sign refinement μ^{0,s}: by χ(⟨x⟩) when χ(L) = 0, and by the
/// character of the orthogonal complement of x in L ⊗ Q when χ(L) ≠ 0.
fn zero_class_sign(ctx: PrimeCtx, l: &QuadLattice, chi_l: i32, norm_unit: u64) -> i32 {
    let chi_x = ctx.legendre_u64(norm_unit % ctx.p);
    if chi_l == 0 {
        chi_x
    } else {
        // disc(L) = disc(⟨x⟩)·disc(⟨x⟩^⊥)·(−1)^{t−1}
        let t = l.rank() as i64;
        let disc_l = l.disc();
        let sign = if (t - 1) % 2 == 1 { -1i64 } else { 1 };
        let target = &disc_l * q_int(sign) / q_int(norm_unit as i64);
        ctx.chi_q(&target)
    }
}

/// Exact μ-profile via digit enumeration of the discriminant group in a
/// diagonal basis (u128 arithmetic throughout).
pub fn mu_profile(l: &QuadLattice) -> Result<MuProfile> {
    let ctx = l.ctx;
    let (a, units) = check_rank_type(l)?;
    let t = a.len();
    let p = ctx.p;
    let a_max = *a.iter().max().unwrap();
    let chi_l = l.chi();
    // scaled norm N(λ) = Σ λ_i² u_i p^{a_max − a_i}; val((x,x)) = v_p(N) − a_max
    let scale: Vec<u128> = a
        .iter()
        .map(|&ai| (p as u128).pow((a_max - ai) as u32))
        .collect();
    let val_and_unit = |lambda: &[u64]| -> Option<(i64, u64)> {
        let mut n: u128 = 0;
        for i in 0..t {
            n += (lambda[i] as u128) * (lambda[i] as u128) * (units[i] as u128) * scale[i];
        }
        if n == 0 {
            return None; // infinite valuation
        }
        let mut v = 0i64;
        while n % p as u128 == 0 {
            n /= p as u128;
            v += 1;
        }
        Some((v - a_max, (n % p as u128) as u64))
    };

    // pass 1: ϖL^∨/L, coordinates λ_i = p·κ_i with κ_i mod p^{a_i − 1}
    let mut mu_plus = 0u64;
    let mut mu_zero = 0u64;
    let mut mu_zero_plus = 0u64;
    let mut mu_zero_minus = 0u64;
    let orders: Vec<u64> = a.iter().map(|&ai| p.pow((ai - 1) as u32)).collect();
    let mut kappa = vec![0u64; t];
    loop {
        let lambda: Vec<u64> = kappa.iter().map(|&k| k * p).collect();
        match val_and_unit(&lambda) {
            None => mu_plus += 1,
            Some((v, u)) => {
                if v >= 1 {
                    mu_plus += 1;
                } else if v == 0 {
                    mu_zero += 1;
                    if zero_class_sign(ctx, l, chi_l, u) == 1 {
                        mu_zero_plus += 1;
                    } else {
                        mu_zero_minus += 1;
                    }
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == t {
                break;
            }
            kappa[pos] += 1;
            if kappa[pos] < orders[pos] {
                break;
            }
            kappa[pos] = 0;
            pos += 1;
        }
        if pos == t {
            break;
        }
    }

    // pass 2: all of L^∨/L, counting val ≥ 0
    let orders_full: Vec<u64> = a.iter().map(|&ai| p.pow(ai as u32)).collect();
    let mut nonneg = 0u64;
    let mut lambda = vec![0u64; t];
    loop {
        match val_and_unit(&lambda) {
            None => nonneg += 1,
            Some((v, _)) => {
                if v >= 0 {
                    nonneg += 1;
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == t {
                break;
            }
            lambda[pos] += 1;
            if lambda[pos] < orders_full[pos] {
                break;
            }
            lambda[pos] = 0;
            pos += 1;
        }
        if pos == t {
            break;
        }
    }
    let mu_minus = nonneg - mu_plus - mu_zero;
    Ok(MuProfile {
        mu_plus,
        mu_zero,
        mu_minus,
        mu_zero_plus,
        mu_zero_minus,
    })
}

/// Independent unoptimized scan: enumerate representatives of p^{−A}L/L in
/// the ORIGINAL basis (A = max fundamental invariant), test membership in
/// L^∨ and ϖL^∨ by pairing conditions, and divide the uniform multiplicity
/// out. Exact rational arithmetic; exponential, for cross-checks only.
pub fn mu_profile_naive(l: &QuadLattice) -> Result<MuProfile> {
    let ctx = l.ctx;
    let (a, _) = check_rank_type(l)?;
    let t = a.len();
    let p = ctx.p;
    let a_max = *a.iter().max().unwrap();
    let chi_l = l.chi();
    let total: u128 = (p as u128).pow((t as i64 * a_max) as u32);
    if total > 1_000_000 {
        return Err(Error::GuardTripped(format!(
            "naive scan over {total} cosets"
        )));
    }
    let modulus = p.pow(a_max as u32);
    let mut counts = [0u64; 5]; // plus, zero, nonneg, zero_plus, zero_minus
    let mut digits = vec![0u64; t];
    loop {
        // x = Σ digits_i p^{−A} e_i in the original basis
        let x: Vec<Q> = digits
            .iter()
            .map(|&d| q_int(d as i64) * q_pow(p, -a_max))
            .collect();
        let gx = qmat::mul_vec(&l.gram, &x);
        let in_dual = gx
            .iter()
            .all(|c| c.is_zero() || ctx.val_q(c).unwrap() >= 0);
        if in_dual {
            let in_pi_dual = gx
                .iter()
                .all(|c| c.is_zero() || ctx.val_q(c).unwrap() >= 1);
            let norm: Q = x
                .iter()
                .zip(&gx)
                .map(|(u, v)| u * v)
                .fold(Q::zero(), |s, v| s + v);
            let val = if norm.is_zero() {
                None
            } else {
                Some(ctx.val_q(&norm).unwrap())
            };
            if in_pi_dual {
                match val {
                    None => counts[0] += 1,
                    Some(v) if v >= 1 => counts[0] += 1,
                    Some(0) => {
                        counts[1] += 1;
                        let unit = ctx.residue_mod(&norm, 1).to_u64().unwrap();
                        if zero_class_sign(ctx, l, chi_l, unit) == 1 {
                            counts[3] += 1;
                        } else {
                            counts[4] += 1;
                        }
                    }
                    _ => {}
                }
            }
            if val.map_or(true, |v| v >= 0) {
                counts[2] += 1;
            }
        }
        let mut pos = 0;
        loop {
            if pos == t {
                break;
            }
            digits[pos] += 1;
            if digits[pos] < modulus {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        if pos == t {
            break;
        }
    }
    // the digit grid enumerates each coset of p^{−A}L/L exactly once, and
    // L^∨ ⊆ p^{−A}L, so the counts are exact
    Ok(MuProfile {
        mu_plus: counts[0],
        mu_zero: counts[1],
        mu_minus: counts[2] - counts[0] - counts[1],
        mu_zero_plus: counts[3],
        mu_zero_minus: counts[4],
    })
}

/// Odd-type counting identity:
/// (1−q^{t−1})μ⁺ + (1−sq^{(t−1)/2})μ^{0,+} + (1+sq^{(t−1)/2})μ^{0,−} + μ⁻ = 0,
/// admissible when χ(L) = 0 with s ∈ {±1}, or χ(L) ≠ 0 with s = +1.
pub fn check_counting_odd(l: &QuadLattice, s: i32) -> Result<()> {
    let (a, _) = check_rank_type(l)?;
    let t = a.len() as i64;
    if t % 2 == 0 {
        return Err(Error::Inadmissible("odd identity requires odd type".into()));
    }
    let chi = l.chi();
    let admissible = (chi == 0 && (s == 1 || s == -1)) || (chi != 0 && s == 1);
    if !admissible {
        return Err(Error::Inadmissible(format!(
            "pair (χ(L) = {chi}, s = {s}) is not admissible for the odd identity"
        )));
    }
    let p = l.ctx.p;
    let mu = mu_profile(l)?;
    let half = q_int(s as i64) * q_pow(p, (t - 1) / 2);
    let total = (Q::one() - q_pow(p, t - 1)) * q_int(mu.mu_plus as i64)
        + (Q::one() - &half) * q_int(mu.mu_zero_plus as i64)
        + (Q::one() + &half) * q_int(mu.mu_zero_minus as i64)
        + q_int(mu.mu_minus as i64);
    if !total.is_zero() {
        return Err(Error::IdentityViolated {
            witness: format!(
                "odd counting identity = {total} ≠ 0 for gram {:?}, s = {s}, profile {mu:?}",
                l.gram
            ),
        });
    }
    Ok(())
}

/// Even-type counting identity:
/// (1−sq^{t/2})(1+sq^{t/2−1})μ⁺ + (1+sq^{t/2−1})μ⁰ + μ⁻ = 0,
/// admissible when χ(L) = 0 with s ∈ {±1}, or χ(L) = s.
pub fn check_counting_even(l: &QuadLattice, s: i32) -> Result<()> {
    let (a, _) = check_rank_type(l)?;
    let t = a.len() as i64;
    if t % 2 != 0 {
        return Err(Error::Inadmissible(
            "even identity requires even type".into(),
        ));
    }
    let chi = l.chi();
    let admissible = (chi == 0 && (s == 1 || s == -1)) || chi == s;
    if !admissible {
        return Err(Error::Inadmissible(format!(
            "pair (χ(L) = {chi}, s = {s}) is not admissible for the even identity"
        )));
    }
    let p = l.ctx.p;
    let mu = mu_profile(l)?;
    let s_q = q_int(s as i64);
    let f1 = Q::one() - &s_q * q_pow(p, t / 2);
    let f2 = Q::one() + &s_q * q_pow(p, t / 2 - 1);
    let total = &f1 * &f2 * q_int(mu.mu_plus as i64)
        + &f2 * q_int(mu.mu_zero as i64)
        + q_int(mu.mu_minus as i64);
    if !total.is_zero() {
        return Err(Error::IdentityViolated {
            witness: format!(
                "even counting identity = {total} ≠ 0 for gram {:?}, s = {s}, profile {mu:?}",
                l.gram
            ),
        });
    }
    Ok(())
}

/// Jump of the perpendicular central derivative between x and x/ϖ for a
/// perpendicular anisotropic vector x with val((x,x)) ≥ 1:
/// Σ over non-horizontal integral overlattices L′♭ ⊇ L♭ of
///   vol(L′♭)·Σ_{u ∈ (L′♭)^∨/L′♭, val((u,u)) ≥ 0} m(t(L′), sgn_{n+1}(L′)),
/// where L′ = L′♭ + ⟨u + x⟩ and vol(L′♭) = q^{−val(L′♭)/2}.
/// Vanishes when L♭ is co-anisotropic and is independent of x when
/// co-isotropic.
pub fn pden_perp_jump(l_flat: &QuadLattice, norm_x: &Q, eps: i32) -> Result<SqrtQ> {
    let ctx = l_flat.ctx;
    l_flat.check_integral()?;
    match ctx.val_q(norm_x) {
        Some(v) if v >= 1 => {}
        _ => {
            return Err(Error::Inadmissible(
                "perpendicular vector must satisfy val((x,x)) ≥ 1".into(),
            ))
        }
    }
    let n_plus_1 = (l_flat.rank() + 2) as i64;
    let mut total = SqrtQ::zero();
    for entry in enumerate_integral_overlattices(l_flat, false)? {
        if is_horizontal(&entry.lattice, eps)? {
            continue;
        }
        let inner = jump_inner_sum(&entry.lattice, norm_x, eps, n_plus_1)?;
        if inner.is_zero() {
            continue;
        }
        let vol = SqrtQ::from_q(inner).mul_root_power(ctx.p, -entry.val);
        total = total.add(&vol);
    }
    Ok(total)
}

/// Inner sum over the discriminant group of one overlattice L′♭.
fn jump_inner_sum(lp_flat: &QuadLattice, norm_x: &Q, eps: i32, n_plus_1: i64) -> Result<Q> {
    let ctx = lp_flat.ctx;
    let d = lp_flat.diagonalize();
    let a: Vec<i64> = d.entries.iter().map(|&(ai, _)| ai).collect();
    let r = a.len();
    let p = ctx.p;
    let orders: Vec<u64> = a.iter().map(|&ai| p.pow(ai as u32)).collect();
    let mut acc = Q::zero();
    let mut lambda = vec![0u64; r];
    loop {
        // u = Σ λ_i p^{−a_i} f_i; admissible when val((u,u)) ≥ 0
        let norm_u: Q = (0..r)
            .map(|i| {
                q_int((lambda[i] * lambda[i]) as i64) * &d.diag[i]
                    * q_pow(p, -2 * a[i])
            })
            .fold(Q::zero(), |s, v| s + v);
        if norm_u.is_zero() || ctx.val_q(&norm_u).unwrap() >= 0 {
            // Gram of L′ = L′♭ + ⟨u + x⟩ in the basis (f_1..f_r, u+x)
            let mut gram = qmat::zeros(r + 1, r + 1);
            for i in 0..r {
                gram[i][i] = d.diag[i].clone();
                let cross = q_int(lambda[i] as i64) * &d.diag[i] * q_pow(p, -a[i]);
                gram[i][r] = cross.clone();
                gram[r][i] = cross;
            }
            gram[r][r] = &norm_u + norm_x;
            let lp = QuadLattice::new(ctx, gram)?;
            let space = reduce_mod_p(&lp)?;
            acc += weight_factor(ctx, space.t as i64, space.sgn_for(n_plus_1), eps);
        }
        let mut pos = 0;
        loop {
            if pos == r {
                break;
            }
            lambda[pos] += 1;
            if lambda[pos] < orders[pos] {
                break;
            }
            lambda[pos] = 0;
            pos += 1;
        }
        if pos == r {
            break;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::is_coisotropic;
    use crate::qmat::q_int;

    fn ctx(p: u64) -> PrimeCtx {
        PrimeCtx::new(p).unwrap()
    }

    fn lat(p: u64, profile: &[(i64, i32)]) -> QuadLattice {
        QuadLattice::from_profile(ctx(p), profile).unwrap()
    }

    #[test]
    fn vertex_base_case_odd() {
        // val = t, t odd: (μ⁺, μ⁰, μ⁻) = (1, 0, q^{t−1} − 1)
        for p in [3u64, 5] {
            for t in [3usize, 5] {
                let profile: Vec<(i64, i32)> = vec![(1, 1); t];
                let mu = mu_profile(&lat(p, &profile)).unwrap();
                assert_eq!(mu.mu_plus, 1);
                assert_eq!(mu.mu_zero, 0);
                assert_eq!(mu.mu_minus, p.pow((t - 1) as u32) - 1);
            }
        }
    }

    #[test]
    fn vertex_base_case_even() {
        // val = t, t even, s = χ(L): (1, 0, (q^{t/2}−s)(q^{t/2−1}+s))
        for p in [3u64, 5] {
            for t in [2usize, 4] {
                for mask in 0..2 {
                    let mut profile: Vec<(i64, i32)> = vec![(1, 1); t];
                    if mask == 1 {
                        profile[t - 1] = (1, -1);
                    }
                    let l = lat(p, &profile);
                    let s = l.chi();
                    assert_ne!(s, 0);
                    let mu = mu_profile(&l).unwrap();
                    assert_eq!(mu.mu_plus, 1);
                    assert_eq!(mu.mu_zero, 0);
                    let q = p as i64;
                    let expect =
                        (q.pow((t / 2) as u32) - s as i64) * (q.pow((t / 2 - 1) as u32) + s as i64);
                    assert_eq!(mu.mu_minus as i64, expect);
                }
            }
        }
    }

    #[test]
    fn near_vertex_base_cases() {
        // val = t + 1, invariants (1,...,1,2)
        for p in [3u64, 5] {
            let q = p as i64;
            // odd t: μ⁺ = 1, μ⁰ = q−1 concentrated at s = χ(⟨e₁..e_{t−1}⟩),
            // μ⁻ = (q^{(t−1)/2}−s)(q^{(t−3)/2}+s)q
            for t in [3usize, 5] {
                for u_last in [1, -1] {
                    let mut profile: Vec<(i64, i32)> = vec![(1, 1); t - 1];
                    profile.push((2, u_last));
                    let l = lat(p, &profile);
                    assert_ne!(l.chi(), 0);
                    let mu = mu_profile(&l).unwrap();
                    assert_eq!(mu.mu_plus, 1);
                    assert_eq!(mu.mu_zero, (p - 1) as u64);
                    // the zero classes concentrate in a single sign s
                    assert!(mu.mu_zero_plus == 0 || mu.mu_zero_minus == 0);
                    let s_eff = if mu.mu_zero_plus > 0 { 1i64 } else { -1 };
                    let h = (t as i64 - 1) / 2;
                    let expect = (q.pow(h as u32) - s_eff) * (q.pow((h - 1) as u32) + s_eff) * q;
                    assert_eq!(mu.mu_minus as i64, expect);
                }
            }
            // even t: (1, q−1, q^{t−1} − q)
            for t in [2usize, 4] {
                let mut profile: Vec<(i64, i32)> = vec![(1, 1); t - 1];
                profile.push((2, 1));
                let l = lat(p, &profile);
                assert_eq!(l.chi(), 0);
                let mu = mu_profile(&l).unwrap();
                assert_eq!(mu.mu_plus, 1);
                assert_eq!(mu.mu_zero, (p - 1) as u64);
                assert_eq!(mu.mu_minus as i64, q.pow((t - 1) as u32) - q);
            }
        }
    }

    #[test]
    fn fast_profile_matches_naive_scan() {
        for p in [3u64, 5] {
            let vmax = if p == 3 { 5 } else { 4 };
            for t in [2usize, 3] {
                for val in (t as i64)..=vmax {
                    // all sorted scale profiles with given val, both units on
                    // the last entry
                    for_each_profile(t, val, &mut |scales| {
                        if t as i64 * scales.iter().max().unwrap() > if p == 3 { 11 } else { 8 } {
                            return;
                        }
                        for u in [1, -1] {
                            let mut profile: Vec<(i64, i32)> =
                                scales.iter().map(|&a| (a, 1)).collect();
                            profile.last_mut().unwrap().1 = u;
                            let l = lat(p, &profile);
                            let fast = mu_profile(&l).unwrap();
                            let naive = mu_profile_naive(&l).unwrap();
                            assert_eq!(fast, naive, "p={p} profile={profile:?}");
                        }
                    });
                }
            }
        }
    }

    fn for_each_profile(t: usize, val: i64, f: &mut impl FnMut(&[i64])) {
        fn rec(t: usize, val: i64, min: i64, acc: &mut Vec<i64>, f: &mut impl FnMut(&[i64])) {
            if t == 0 {
                if val == 0 {
                    f(acc);
                }
                return;
            }
            let mut a = min;
            while a * t as i64 <= val {
                acc.push(a);
                rec(t - 1, val - a, a, acc, f);
                acc.pop();
                a += 1;
            }
        }
        rec(t, val, 1, &mut Vec::new(), f);
    }

    #[test]
    fn counting_identities_small_grid() {
        for p in [3u64, 5] {
            for t in [2usize, 3, 4] {
                for val in (t as i64)..=(t as i64 + 2) {
                    for_each_profile(t, val, &mut |scales| {
                        for umask in 0..(1u32 << t) {
                            let profile: Vec<(i64, i32)> = scales
                                .iter()
                                .enumerate()
                                .map(|(i, &a)| (a, if (umask >> i) & 1 == 0 { 1 } else { -1 }))
                                .collect();
                            let l = lat(p, &profile);
                            let chi = l.chi();
                            if t % 2 == 1 {
                                let ss: &[i32] = if chi == 0 { &[1, -1] } else { &[1] };
                                for &s in ss {
                                    check_counting_odd(&l, s).unwrap();
                                }
                            } else {
                                let ss: &[i32] = if chi == 0 { &[1, -1] } else { &[chi] };
                                for &s in ss {
                                    check_counting_even(&l, s).unwrap();
                                }
                            }
                        }
                    });
                }
            }
        }
    }

    #[test]
    fn inadmissible_pairs_are_rejected() {
        let l = lat(3, &[(1, 1), (1, 1)]); // χ ≠ 0 even type
        let chi = l.chi();
        assert!(matches!(
            check_counting_even(&l, -chi),
            Err(Error::Inadmissible(_))
        ));
        let l3 = lat(3, &[(1, 1), (1, 1), (2, 1)]); // χ ≠ 0 odd type
        assert_ne!(l3.chi(), 0);
        assert!(matches!(
            check_counting_odd(&l3, -1),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn jump_vanishes_co_anisotropic() {
        for p in [3u64, 5] {
            for eps in [1i32, -1] {
                for profile in [vec![(0i64, 1i32), (1, 1)], vec![(1, 1), (1, -1)], vec![(0, 1), (2, -1)]] {
                    let l = lat(p, &profile);
                    if is_coisotropic(&l, eps) {
                        continue;
                    }
                    for j in 1..=3i64 {
                        for u in [1, -1] {
                            let c = q_int(if u == 1 { 1 } else { ctx(p).r as i64 }) * q_pow(p, j);
                            let jump = pden_perp_jump(&l, &c, eps).unwrap();
                            assert!(
                                jump.is_zero(),
                                "p={p} eps={eps} profile={profile:?} c={c}: jump = {jump}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn jump_constant_co_isotropic() {
        for p in [3u64, 5] {
            for eps in [1i32, -1] {
                for profile in [
                    vec![(0i64, 1i32), (1, 1)],
                    vec![(0, 1), (1, -1)],
                    vec![(1, 1), (1, 1)],
                    vec![(0, -1), (2, 1)],
                    vec![(0, 1), (2, -1)],
                ] {
                    let l = lat(p, &profile);
                    if !is_coisotropic(&l, eps) {
                        continue;
                    }
                    let mut seen: Option<SqrtQ> = None;
                    for j in 1..=3i64 {
                        for u in [1i64, -1] {
                            let c = q_int(if u == 1 { 1 } else { ctx(p).r as i64 }) * q_pow(p, j);
                            let jump = pden_perp_jump(&l, &c, eps).unwrap();
                            match &seen {
                                None => seen = Some(jump),
                                Some(prev) => assert_eq!(
                                    prev, &jump,
                                    "p={p} eps={eps} profile={profile:?} c={c}"
                                ),
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn profile_and_jump_are_presentation_independent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for p in [3u64, 5] {
            for profile in [vec![(1i64, 1i32), (2, -1)], vec![(1, 1), (1, 1), (3, 1)]] {
                let l = lat(p, &profile);
                let n = l.rank();
                for _ in 0..10 {
                    // random unimodular change of basis: unit-diagonal
                    // triangular times a permutation-free shear
                    let mut u = qmat::identity(n);
                    for i in 0..n {
                        for j in 0..n {
                            if i != j {
                                u[i][j] = q_int(rng.gen_range(-3..=3));
                            }
                        }
                    }
                    let det_u = qmat::det(&u);
                    if det_u.is_zero() || l.ctx.val_q(&det_u).unwrap() != 0 {
                        continue; // not unimodular over Z_p
                    }
                    let ut = qmat::transpose(&u);
                    let gram2 = qmat::mul(&ut, &qmat::mul(&l.gram, &u));
                    let l2 = QuadLattice::new(l.ctx, gram2).unwrap();
                    assert_eq!(mu_profile(&l).unwrap(), mu_profile(&l2).unwrap());
                    let c = q_pow(p, 2);
                    for eps in [1, -1] {
                        assert_eq!(
                            pden_perp_jump(&l, &c, eps).unwrap(),
                            pden_perp_jump(&l2, &c, eps).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn self_dual_core_gives_zero_jump() {
        // every integral overlattice of a self-dual lattice is itself,
        // which is horizontal, so the sum is empty
        let l = lat(3, &[(0, 1), (0, 1)]);
        let c = q_pow(3, 2);
        for eps in [1, -1] {
            assert!(pden_perp_jump(&l, &c, eps).unwrap().is_zero());
        }
    }
}

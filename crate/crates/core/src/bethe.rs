//! Bethe roots and hole-type solutions of 1 + 𝔞(z) = 0 for the lowest
//! zero-magnetization state, and the transfer-matrix eigenvalue Λ(z).
//!
//! Roots are carried internally as c_l = ch 2λ_l: the Bethe equations are
//! even in λ, so c is the natural chart through λ = 0 where a root leaves
//! the real axis for the imaginary one.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{poly_mul, poly_roots, solve, CMat};
use crate::model::{
    c64, ch, classify_region, coth, phi_shorthand, q_function, sh, ModelParams, Region, C64,
    POLE_TOL,
};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest homotopy step in the boundary parameters.
pub const HOMOTOPY_STEP: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct BetheSolution {
    /// M = L/2 Bethe roots, representatives with Re ≥ 0 (Im > 0 on the imaginary axis).
    pub roots: Vec<C64>,
    /// L+1 hole-type solutions, same representative convention.
    pub holes: Vec<C64>,
    pub region: Option<Region>,
    pub max_residual: f64,
    pub trivial_zeros_verified: bool,
    /// Boundary parameters visited by the homotopy, in order.
    pub homotopy_path: Vec<(C64, C64)>,
}

/// Canonical representative of ±z.
pub fn fold(z: C64) -> C64 {
    if z.re < -1e-12 || (z.re.abs() <= 1e-12 && z.im < 0.0) {
        -z
    } else {
        z
    }
}


/// 𝔞(z) from the product formula, accumulated as a product of ratios so that
/// large |Re z| does not overflow.
pub fn aux_eval(z: C64, roots: &[C64], p: &ModelParams) -> Result<C64> {
    let eta = p.eta();
    let h = eta / 2.0;
    let mut pairs = vec![
        (sh(z - p.xi_plus + h), sh(z + p.xi_plus - h)),
        (sh(z - p.xi_minus + h), sh(z + p.xi_minus - h)),
        (sh(2.0 * z - eta), sh(2.0 * z + eta)),
    ];
    for s in &p.inhom {
        pairs.push((sh(z - h + s), sh(z + h + s)));
        pairs.push((sh(z - h - s), sh(z + h - s)));
    }
    for l in roots {
        pairs.push((sh(z + eta - l), sh(z - eta - l)));
        pairs.push((sh(z + eta + l), sh(z - eta + l)));
    }
    let mut v = C64::new(1.0, 0.0);
    for (n, d) in pairs {
        if d.norm() < 1e-300 {
            return Err(Error::Singular(format!("𝔞 has a pole at z = {z}")));
        }
        v *= n / d;
    }
    if !v.re.is_finite() || !v.im.is_finite() {
        return Err(Error::Singular(format!("𝔞 not finite at z = {z}")));
    }
    Ok(v)
}

/// ∂_z ln 𝔞(z).
pub fn dlog_aux(z: C64, roots: &[C64], p: &ModelParams) -> C64 {
    let eta = p.eta();
    let h = eta / 2.0;
    let (xp, xm) = (p.xi_plus, p.xi_minus);
    let mut r = coth(z - xp + h) - coth(z + xp - h) + coth(z - xm + h) - coth(z + xm - h)
        + 2.0 * coth(2.0 * z - eta)
        - 2.0 * coth(2.0 * z + eta);
    for s in &p.inhom {
        r += coth(z - h + s) + coth(z - h - s) - coth(z + h + s) - coth(z + h - s);
    }
    for l in roots {
        r += coth(z + eta - l) + coth(z + eta + l) - coth(z - eta - l) - coth(z - eta + l);
    }
    r
}

/// 𝔞'(z) = 𝔞(z) ∂_z ln 𝔞(z).
pub fn aux_prime(z: C64, roots: &[C64], p: &ModelParams) -> Result<C64> {
    Ok(aux_eval(z, roots, p)? * dlog_aux(z, roots, p))
}

/// Numerator and denominator of 𝔞 = N/D as entire functions.
pub fn aux_num_den(z: C64, roots: &[C64], p: &ModelParams) -> (C64, C64) {
    let eta = p.eta();
    let h = eta / 2.0;
    let mut num = sh(z - p.xi_plus + h) * sh(z - p.xi_minus + h) * sh(2.0 * z - eta);
    let mut den = sh(z + p.xi_plus - h) * sh(z + p.xi_minus - h) * sh(2.0 * z + eta);
    for s in &p.inhom {
        num *= sh(z - h + s) * sh(z - h - s);
        den *= sh(z + h + s) * sh(z + h - s);
    }
    num *= q_function(z + eta, roots);
    den *= q_function(z - eta, roots);
    (num, den)
}

/// Relative residual |N + D| / (|N| + |D|) of 1 + 𝔞 = 0 in product form; stays
/// meaningful for roots exponentially close to a pole of 𝔞.
pub fn solution_residual(z: C64, roots: &[C64], p: &ModelParams) -> f64 {
    let (n, d) = aux_num_den(z, roots, p);
    let scale = n.norm() + d.norm();
    if scale == 0.0 || !scale.is_finite() {
        return f64::INFINITY;
    }
    (n + d).norm() / scale
}

/// Value and derivative of D(z) = sh(z+ξ⁺-η/2) sh(z+ξ⁻-η/2) sh(2z+η)
/// ∏ sh(z+η/2±s) ∏_l (ch(2z-2η) - c_l)/2, with an optional skipped c-factor.
fn d_func(z: C64, c: &[C64], p: &ModelParams, skip: Option<usize>) -> (C64, C64) {
    let eta = p.eta();
    let h = eta / 2.0;
    let mut v = ONE;
    let mut d = ZERO;
    let mut push = |f: C64, fp: C64| {
        d = d * f + v * fp;
        v *= f;
    };
    push(sh(z + p.xi_plus - h), ch(z + p.xi_plus - h));
    push(sh(z + p.xi_minus - h), ch(z + p.xi_minus - h));
    push(sh(2.0 * z + eta), 2.0 * ch(2.0 * z + eta));
    for s in &p.inhom {
        push(sh(z + h + s), ch(z + h + s));
        push(sh(z + h - s), ch(z + h - s));
    }
    let u = 2.0 * z - 2.0 * eta;
    for (l, cl) in c.iter().enumerate() {
        if Some(l) == skip {
            continue;
        }
        push((ch(u) - cl) / 2.0, sh(u));
    }
    (v, d)
}

fn lambda_of(w: C64) -> C64 {
    w.acosh() / 2.0
}

/// E(w; c) = (D(λ) - D(-λ)) / sh 2λ with λ = arccosh(w)/2, and ∂E/∂w.
fn e_func(w: C64, c: &[C64], p: &ModelParams) -> (C64, C64) {
    let lam = lambda_of(w);
    let s2 = sh(2.0 * lam);
    if s2.norm() < 1e-5 {
        // even-in-λ removable point: differentiate numerically in w on a small circle
        let r = 1e-3;
        let n = 8;
        let mut val = ZERO;
        let mut der = ZERO;
        for k in 0..n {
            let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            let e = C64::from_polar(1.0, t);
            let (fv, _) = e_func_regular(w + e * r, c, p);
            val += fv;
            der += fv / e;
        }
        return (val / n as f64, der / (n as f64 * r));
    }
    e_func_regular(w, c, p)
}

fn e_func_regular(w: C64, c: &[C64], p: &ModelParams) -> (C64, C64) {
    let lam = lambda_of(w);
    let s2 = sh(2.0 * lam);
    let c2 = ch(2.0 * lam);
    let (dp, dpp) = d_func(lam, c, p, None);
    let (dm, dmp) = d_func(-lam, c, p, None);
    let n = dp - dm;
    let np = dpp + dmp;
    let val = n / s2;
    let der = (np * s2 - 2.0 * n * c2) / (2.0 * s2 * s2 * s2);
    (val, der)
}

/// ∂E(w; c)/∂c_l at fixed evaluation point w.
fn e_dc(w: C64, c: &[C64], l: usize, p: &ModelParams) -> C64 {
    let lam = lambda_of(w);
    let s2 = sh(2.0 * lam);
    let (dp, _) = d_func(lam, c, p, Some(l));
    let (dm, _) = d_func(-lam, c, p, Some(l));
    // ∂/∂c_l of (ch u - c_l)/2 is -1/2
    let num = -(dp - dm) / 2.0;
    if s2.norm() < 1e-5 {
        let r = 1e-3;
        let n = 8;
        let mut acc = ZERO;
        for k in 0..n {
            let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            acc += e_dc(w + C64::from_polar(r, t), c, l, p);
        }
        return acc / n as f64;
    }
    num / s2
}

fn bae_system(c: &[C64], p: &ModelParams) -> (Vec<C64>, CMat) {
    let m = c.len();
    let mut f = vec![ZERO; m];
    let mut jac = CMat::zeros(m, m);
    for j in 0..m {
        let (v, dw) = e_func(c[j], c, p);
        f[j] = v;
        for l in 0..m {
            jac[(j, l)] = e_dc(c[j], c, l, p);
        }
        jac[(j, j)] += dw;
    }
    (f, jac)
}

/// Newton on the Bethe equations in the c = ch 2λ chart with ½^k line search.
pub fn newton_bae(c0: &[C64], p: &ModelParams, tol: f64, max_iter: usize) -> Result<Vec<C64>> {
    let m = c0.len();
    let mut c = c0.to_vec();
    let norm = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let (mut f, mut jac) = bae_system(&c, p);
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let rhs = CMat::from_iterator(m, 1, f.iter().map(|v| -v));
        let delta = solve(&jac, &rhs)?;
        let f0 = norm(&f);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<C64> = c.iter().zip(delta.iter()).map(|(a, d)| a + d * t).collect();
            let (ft, jt) = bae_system(&trial, p);
            let nt = norm(&ft);
            if nt.is_finite() && (nt < f0 || f0 < 1e-13) {
                accepted = Some((trial, ft, jt));
                break;
            }
            t *= 0.5;
        }
        let (trial, ft, jt) = match accepted {
            Some(x) => x,
            None => {
                let trial: Vec<C64> = c.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
                let (ft, jt) = bae_system(&trial, p);
                (trial, ft, jt)
            }
        };
        let step = c
            .iter()
            .zip(&trial)
            .map(|(a, b)| (a - b).norm() / (1.0 + a.norm()))
            .fold(0.0, f64::max);
        c = trial;
        f = ft;
        jac = jt;
        last = step;
        if step < tol {
            return Ok(c);
        }
    }
    Err(Error::NoConvergence {
        what: "Bethe-equation Newton",
        iters: max_iter,
        last,
    })
}

fn theta(x: f64, a: f64) -> f64 {
    2.0 * (x.tanh() / (a / 2.0).tan()).atan()
}

fn theta_d(x: f64, a: f64) -> f64 {
    let t = (a / 2.0).tan();
    let th = x.tanh();
    2.0 * t * (1.0 - th * th) / (t * t + th * th)
}

/// Real roots at ξ± = ±iπ/2 from the logarithmic Bethe equations with
/// consecutive quantum numbers.
pub fn free_start(l: usize, gamma: f64) -> Result<Vec<f64>> {
    let m = l / 2;
    let ap = PI - gamma;
    let lf = l as f64;
    let mut lam: Vec<f64> = (0..m)
        .map(|j| {
            let v = (PI * (j as f64 + 0.5) / (2.0 * lf)).tan() * (gamma / 2.0).tan();
            if v < 1.0 {
                v.atanh()
            } else {
                3.0
            }
        })
        .collect();
    let z = |x: f64, lam: &[f64]| {
        2.0 * theta(x, ap) + theta(2.0 * x, 2.0 * gamma) + 2.0 * lf * theta(x, gamma)
            - lam
                .iter()
                .map(|l| theta(x - l, 2.0 * gamma) + theta(x + l, 2.0 * gamma))
                .sum::<f64>()
    };
    for _ in 0..100 {
        let f: Vec<f64> = (0..m)
            .map(|j| z(lam[j], &lam) - 2.0 * PI * (j as f64 + 1.0))
            .collect();
        let mut jac = nalgebra::DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let x = lam[j];
            let mut dj = 2.0 * theta_d(x, ap)
                + 2.0 * theta_d(2.0 * x, 2.0 * gamma)
                + 2.0 * lf * theta_d(x, gamma);
            for (k, lk) in lam.iter().enumerate() {
                dj -= theta_d(x - lk, 2.0 * gamma) + theta_d(x + lk, 2.0 * gamma);
                let off = theta_d(x - lk, 2.0 * gamma) - theta_d(x + lk, 2.0 * gamma);
                if k == j {
                    jac[(j, k)] += off;
                } else {
                    jac[(j, k)] = off;
                }
            }
            jac[(j, j)] += dj;
        }
        let rhs = nalgebra::DVector::from_vec(f.iter().map(|v| -v).collect());
        let d = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("free-point Jacobian".into()))?;
        let mut step = 0.0f64;
        for j in 0..m {
            let dj = d[j].clamp(-0.5, 0.5);
            lam[j] += dj;
            step = step.max(dj.abs());
        }
        if step < 1e-15 {
            break;
        }
    }
    Ok(lam)
}

/// Homotopy from ξ± = ±iπ/2 (sign following Im ξ±) to the target boundary
/// parameters in steps of at most [`HOMOTOPY_STEP`]. Returns c_l = ch 2λ_l and
/// the visited path.
pub fn homotopy(p: &ModelParams) -> Result<(Vec<C64>, Vec<(C64, C64)>)> {
    let lam = free_start(p.l, p.gamma)?;
    let mut c: Vec<C64> = lam.iter().map(|l| c64((2.0 * l).cosh(), 0.0)).collect();
    let start = |x: C64| {
        if x.im >= 0.0 {
            c64(0.0, FRAC_PI_2)
        } else {
            c64(0.0, -FRAC_PI_2)
        }
    };
    let (sp, sm) = (start(p.xi_plus), start(p.xi_minus));
    let dist = (p.xi_plus - sp).norm().max((p.xi_minus - sm).norm());
    let max_dt = if dist > 0.0 { HOMOTOPY_STEP / dist } else { 1.0 };
    let half_eta = p.eta() / 2.0;
    let mut path = Vec::new();
    let mut q = p.clone();
    let mut t = 0.0;
    let mut dt = max_dt;
    while t < 1.0 {
        let tn = (t + dt).min(1.0);
        q.xi_plus = sp + (p.xi_plus - sp) * tn;
        q.xi_minus = sm + (p.xi_minus - sm) * tn;
        let tol = if tn >= 1.0 { 1e-15 } else { 1e-11 };
        let ok = newton_bae(&c, &q, tol, 60).ok().filter(|cn| {
            let (r0, r1) = (roots_from_c(&c), roots_from_c(cn));
            let jump = r0.iter().zip(&r1).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let bad = r1.iter().enumerate().any(|(k, z)| {
                (z - half_eta).norm() < 1e-6
                    || z.norm() < 1e-9
                    || !z.re.is_finite()
                    || r1[..k].iter().any(|w| (z - w).norm() < 1e-6)
            });
            jump < 0.25 && !bad
        });
        match ok {
            Some(cn) => {
                c = cn;
                t = tn;
                path.push((q.xi_plus, q.xi_minus));
                dt = (dt * 1.5).min(max_dt);
            }
            None => {
                dt /= 2.0;
                if dt < 1e-5 * max_dt {
                    return Err(Error::NoConvergence {
                        what: "Bethe homotopy",
                        iters: path.len(),
                        last: t,
                    });
                }
            }
        }
    }
    Ok((c, path))
}

pub fn roots_from_c(c: &[C64]) -> Vec<C64> {
    c.iter().map(|w| fold(lambda_of(*w))).collect()
}

/// Coefficients (highest power first) of the numerator of 1 + 𝔞 in w = e^{2z}.
pub fn aux_polynomial(roots: &[C64], p: &ModelParams) -> Vec<C64> {
    let eta = p.eta();
    let h = eta / 2.0;
    // sh(k z + c) ∝ w^k e^c - e^{-c}
    let factor = |cc: C64, k: usize| -> Vec<C64> {
        let mut f = vec![ZERO; k + 1];
        f[0] = cc.exp();
        f[k] = -(-cc).exp();
        f
    };
    let mut den = vec![ONE];
    let mut num = vec![ONE];
    let mul = |poly: &mut Vec<C64>, cc: C64, k: usize| {
        *poly = poly_mul(poly, &factor(cc, k));
    };
    mul(&mut den, p.xi_plus - h, 1);
    mul(&mut den, p.xi_minus - h, 1);
    mul(&mut den, eta, 2);
    mul(&mut num, -p.xi_plus + h, 1);
    mul(&mut num, -p.xi_minus + h, 1);
    mul(&mut num, -eta, 2);
    for s in &p.inhom {
        mul(&mut den, h + s, 1);
        mul(&mut den, h - s, 1);
        mul(&mut num, -h + s, 1);
        mul(&mut num, -h - s, 1);
    }
    for l in roots {
        mul(&mut den, -eta - l, 1);
        mul(&mut den, -eta + l, 1);
        mul(&mut num, eta - l, 1);
        mul(&mut num, eta + l, 1);
    }
    den.iter().zip(&num).map(|(a, b)| a + b).collect()
}

/// All zeros z of 1 + 𝔞 (both mirror partners, trivial zeros included) from
/// the companion matrix, mapped back with Im z ∈ (-π/2, π/2].
pub fn polynomial_zeros(roots: &[C64], p: &ModelParams) -> Result<Vec<C64>> {
    let poly = aux_polynomial(roots, p);
    let expected = 3 * p.l + 4;
    if poly.len() != expected + 1 {
        return Err(Error::Consistency(format!(
            "polynomial degree {} != 3L+4 = {expected}",
            poly.len() - 1
        )));
    }
    let ws = poly_roots(&poly)?;
    if ws.len() != expected || ws.iter().any(|w| w.norm() == 0.0 || !w.re.is_finite()) {
        return Err(Error::Consistency(format!(
            "expected {expected} finite nonzero polynomial roots"
        )));
    }
    Ok(ws
        .iter()
        .map(|w| {
            let z = w.ln() / 2.0;
            // principal branch: Im z ∈ (-π/2, π/2]
            if z.im <= -FRAC_PI_2 + 1e-15 {
                z + c64(0.0, PI)
            } else {
                z
            }
        })
        .collect())
}

/// Newton polish of a single zero of 1 + 𝔞 with fixed roots.
fn polish_hole(z0: C64, roots: &[C64], p: &ModelParams) -> C64 {
    let mut z = z0;
    for _ in 0..8 {
        let a = match aux_eval(z, roots, p) {
            Ok(a) => a,
            Err(_) => return z,
        };
        // work with g = ln(-𝔞) for robustness near poles of 𝔞
        let g = (-a).ln();
        let dg = dlog_aux(z, roots, p);
        if dg.norm() == 0.0 || !dg.re.is_finite() {
            return z;
        }
        let step = g / dg;
        if step.norm() > 1e-2 {
            return z;
        }
        z -= step;
        if step.norm() < 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Final Newton steps on ln(-𝔞(λ_j)) = 0 directly in the λ chart.
fn polish_roots(roots: &[C64], p: &ModelParams) -> Vec<C64> {
    let eta = p.eta();
    let m = roots.len();
    let mut lam = roots.to_vec();
    let resid = |lam: &[C64]| {
        lam.iter()
            .map(|z| solution_residual(*z, lam, p))
            .fold(0.0, f64::max)
    };
    for _ in 0..3 {
        let r0 = resid(&lam);
        let mut f = CMat::zeros(m, 1);
        let mut jac = CMat::zeros(m, m);
        for j in 0..m {
            let z = lam[j];
            let a = match aux_eval(z, &lam, p) {
                Ok(a) => a,
                Err(_) => return lam,
            };
            f[(j, 0)] = -(-a).ln();
            jac[(j, j)] = dlog_aux(z, &lam, p);
            for l in 0..m {
                let x = lam[l];
                jac[(j, l)] += -coth(z + eta - x) + coth(z + eta + x) + coth(z - eta - x)
                    - coth(z - eta + x);
            }
        }
        let Ok(d) = solve(&jac, &f) else { return lam };
        let trial: Vec<C64> = lam.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        if resid(&trial) < r0 {
            lam = trial.into_iter().map(fold).collect();
        } else {
            break;
        }
    }
    lam
}

/// Roots by homotopy (or Newton from a guess) and holes from the degree-(3L+4)
/// polynomial after dividing out the trivial zeros w = ±1 and the root pairs.
pub fn find_all_solutions(p: &ModelParams, roots_guess: Option<&[C64]>) -> Result<BetheSolution> {
    let region = classify_region(p).ok();
    let (c, path) = match roots_guess {
        Some(g) => {
            let c0: Vec<C64> = g.iter().map(|l| ch(2.0 * l)).collect();
            (newton_bae(&c0, p, 1e-15, 80)?, vec![(p.xi_plus, p.xi_minus)])
        }
        None => homotopy(p)?,
    };
    let roots = polish_roots(&roots_from_c(&c), p);
    for (k, a) in roots.iter().enumerate() {
        for b in &roots[..k] {
            if (a - b).norm() < 1e-8 {
                return Err(Error::Consistency(format!("coincident Bethe roots at {a}")));
            }
        }
    }
    let poly = aux_polynomial(&roots, p);
    if poly.len() != 3 * p.l + 5 {
        return Err(Error::Consistency("polynomial degree differs from 3L+4".into()));
    }
    let mut known = vec![ONE, -ONE];
    for l in &roots {
        known.push((2.0 * l).exp());
        known.push((-2.0 * l).exp());
    }
    let abs_sum: f64 = poly.iter().map(|c| c.norm()).sum();
    let trivial_rem = [ONE, -ONE]
        .iter()
        .map(|w| crate::linalg::poly_eval(&poly, *w).norm() / abs_sum)
        .fold(0.0, f64::max);
    let mut rest = poly;
    for w in &known {
        rest = crate::linalg::poly_deflate(&rest, *w).0;
    }
    let ws = poly_roots(&rest)?;
    let mut zs: Vec<C64> = ws.iter().map(|w| w.ln() / 2.0).collect();
    // one representative per w ↔ 1/w pair seeds the refinement in c = ch 2z
    let cz: Vec<C64> = zs.iter().map(|z| ch(2.0 * z)).collect();
    let mut used = vec![false; cz.len()];
    let mut seeds: Vec<C64> = Vec::new();
    for i in 0..cz.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let k = (0..cz.len())
            .filter(|k| !used[*k])
            .min_by(|a, b| (cz[*a] - cz[i]).norm().total_cmp(&(cz[*b] - cz[i]).norm()));
        match k {
            Some(k) => {
                used[k] = true;
                seeds.push((cz[i] + cz[k]) / 2.0);
            }
            None => seeds.push(cz[i]),
        }
    }
    // distinct starting points are all Aberth needs
    for k in 0..seeds.len() {
        for j in 0..k {
            if (seeds[k] - seeds[j]).norm() < 1e-8 {
                seeds[k] += C64::from_polar(1e-3, 1.0 + k as f64);
            }
        }
    }
    if seeds.len() == p.l + 1 {
        let cs = aberth_holes(seeds, &c, p)?;
        zs = cs.iter().flat_map(|x| {
            let z = lambda_of(*x);
            [z, -z]
        }).collect();
    }
    // pair w with 1/w, keep one representative per pair
    let mut taken = vec![false; zs.len()];
    let mut holes = Vec::new();
    for i in 0..zs.len() {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        let target = -zs[i];
        if let Some(k) = (0..zs.len())
            .filter(|k| !taken[*k])
            .min_by(|a, b| mirror_dist(zs[*a], target).total_cmp(&mirror_dist(zs[*b], target)))
        {
            taken[k] = true;
        }
        holes.push(polish_hole(fold(zs[i]), &roots, p));
    }
    zs.clear();
    for z in &holes {
        let r = solution_residual(*z, &roots, p);
        if r > 1e-8 {
            return Err(Error::Consistency(format!("hole {z} has residual {r:.1e}")));
        }
    }
    if holes.len() != p.l + 1 {
        return Err(Error::Consistency(format!(
            "found {} hole-type solutions, expected L+1 = {}",
            holes.len(),
            p.l + 1
        )));
    }
    holes.sort_by(|a, b| a.im.abs().total_cmp(&b.im.abs()).then(a.re.total_cmp(&b.re)));
    let max_res = roots
        .iter()
        .map(|z| solution_residual(*z, &roots, p))
        .fold(0.0, f64::max);
    Ok(BetheSolution {
        roots,
        holes,
        region,
        max_residual: max_res,
        trivial_zeros_verified: trivial_rem < 1e-10,
        homotopy_path: path,
    })
}

/// Aberth–Ehrlich iteration on H(x) = E(x; c)/∏(x - c_l), whose L+1 zeros are
/// ch 2χ for the hole-type solutions. Only H'/H is needed.
fn aberth_holes(mut xs: Vec<C64>, c: &[C64], p: &ModelParams) -> Result<Vec<C64>> {
    let n = xs.len();
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let mut worst = 0.0f64;
        for k in 0..n {
            let x = xs[k];
            let (e, de) = e_func(x, c, p);
            if e.norm() == 0.0 {
                continue;
            }
            let mut ld = de / e;
            for cl in c {
                ld -= (x - cl).inv();
            }
            let ratio = ld.inv();
            let mut s = ZERO;
            for (j, xj) in xs.iter().enumerate() {
                if j != k {
                    s += (x - xj).inv();
                }
            }
            let w = ratio / (ONE - ratio * s);
            if !w.re.is_finite() || !w.im.is_finite() {
                continue;
            }
            xs[k] = x - w;
            worst = worst.max(w.norm() / (1.0 + x.norm()));
        }
        last = worst;
        if worst < 1e-13 {
            return Ok(xs);
        }
    }
    if last < 1e-8 {
        return Ok(xs);
    }
    Err(Error::NoConvergence {
        what: "hole Aberth iteration",
        iters: 200,
        last,
    })
}

/// |a - b| modulo iπ.
fn mirror_dist(a: C64, b: C64) -> f64 {
    let d = a - b;
    let k = (d.im / PI).round();
    (d - c64(0.0, k * PI)).norm()
}

/// Maximum residual over the hole-type solutions.
pub fn hole_residual(sol: &BetheSolution, p: &ModelParams) -> f64 {
    sol.holes
        .iter()
        .map(|z| solution_residual(*z, &sol.roots, p))
        .fold(0.0, f64::max)
}

/// Holes inside |Im z| < y (the ones the integral contour C encloses).
pub fn holes_in_strip(sol: &BetheSolution, y: f64) -> Vec<C64> {
    sol.holes.iter().copied().filter(|z| z.im.abs() < y).collect()
}

fn lambda_direct(z: C64, roots: &[C64], p: &ModelParams) -> C64 {
    let eta = p.eta();
    let h = eta / 2.0;
    let sign = if p.l % 2 == 0 { 1.0 } else { -1.0 };
    let pre = sign / (2.0 * ch(z + h) * ch(z - h));
    let (xp, xm) = (p.xi_plus, p.xi_minus);
    let qz = q_function(z, roots);
    let t1 = phi_shorthand(z + h, p) * sh(2.0 * z + eta) * sh(z + xp - h) / sh(xp) * sh(z + xm - h)
        / sh(xm)
        * q_function(z - eta, roots);
    let t2 = phi_shorthand(z - h, p) * sh(2.0 * z - eta) * sh(z - xp + h) / sh(xp) * sh(z - xm + h)
        / sh(xm)
        * q_function(z + eta, roots);
    pre * (t1 + t2) / (sh(2.0 * z) * qz)
}

/// Eigenvalue Λ(z) of τ(z) on the Bethe state. Both terms are combined over
/// the common denominator sh(2z) q(z); near its zeros the value is the mean
/// over a small circle, exact for the analytic continuation.
pub fn eigenvalue_lambda(z: C64, sol: &BetheSolution, p: &ModelParams) -> Result<C64> {
    let roots = &sol.roots;
    let near = roots
        .iter()
        .flat_map(|l| [z - l, z + l])
        .chain([z, z - c64(0.0, FRAC_PI_2), z + c64(0.0, FRAC_PI_2)])
        .map(|d| d.norm())
        .fold(f64::INFINITY, f64::min);
    let h = p.eta() / 2.0;
    if (ch(z + h) * ch(z - h)).norm() < POLE_TOL {
        return Err(Error::Singular(format!("Λ has a pole at z = {z}")));
    }
    if near > 1e-4 {
        return Ok(lambda_direct(z, roots, p));
    }
    let r = 2e-3;
    let n = 32;
    let mut acc = ZERO;
    for k in 0..n {
        let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
        acc += lambda_direct(z + C64::from_polar(r, t), roots, p);
    }
    Ok(acc / n as f64)
}

/// Energy of the Bethe state in the normalization of the Hamiltonian
/// (homogeneous chain): sh η ∂_λ ln Λ at the regular point, written out.
pub fn ground_energy_from_roots(sol: &BetheSolution, p: &ModelParams) -> Result<f64> {
    if !p.is_homogeneous() {
        return Err(Error::invalid(
            "inhomogeneities",
            "energy formula needs the homogeneous chain",
        ));
    }
    let eta = p.eta();
    let h = eta / 2.0;
    let lf = p.l as f64;
    let mut e = 2.0 * lf * coth(eta) - eta.tanh() + 2.0 * coth(2.0 * eta) - 2.0 * coth(eta)
        + coth(p.xi_plus)
        + coth(p.xi_minus);
    for l in &sol.roots {
        e += coth(-h - l) + coth(-h + l) - coth(h - l) - coth(h + l);
    }
    Ok((sh(eta) * e).re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_zeros_of_aux() {
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, -0.2));
        let roots = [c64(0.2, 0.0), c64(0.5, 0.0)];
        let a0 = aux_eval(c64(1e-9, 0.0), &roots, &p).unwrap();
        assert!((a0 + 1.0).norm() < 1e-6);
        let z = c64(0.37, 0.11);
        let a = aux_eval(z, &roots, &p).unwrap() * aux_eval(-z, &roots, &p).unwrap();
        assert!((a - 1.0).norm() < 1e-13);
    }

    #[test]
    fn l2_region_vii_solution() {
        let p = ModelParams::homogeneous(2, 0.6, c64(0.0, 1.0), c64(0.0, -0.2));
        let sol = find_all_solutions(&p, None).unwrap();
        assert_eq!(sol.roots.len(), 1);
        assert_eq!(sol.holes.len(), 3);
        assert!(sol.max_residual < 1e-12);
        assert!(sol.trivial_zeros_verified);
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, 0.9));
        let c = vec![c64(1.3, 0.01), c64(1.9, -0.02)];
        let (_, jac) = bae_system(&c, &p);
        let hh = 1e-6;
        for l in 0..2 {
            let mut cp = c.clone();
            cp[l] += hh;
            let mut cm = c.clone();
            cm[l] -= hh;
            let (fp, _) = bae_system(&cp, &p);
            let (fm, _) = bae_system(&cm, &p);
            for j in 0..2 {
                let fd = (fp[j] - fm[j]) / (2.0 * hh);
                assert!((fd - jac[(j, l)]).norm() < 1e-6 * (1.0 + fd.norm()));
            }
        }
    }
}

//! The density function G(λ, ν) on C′ and the real-line density ρ of the
//! thermodynamic limit.
//!
//! G solves
//!   G(λ,ν) = d(λ,ν) + ∮_C (dω/2πi) K(λ-ω) G(ω,ν)/(1+𝔞(ω)) - Σ_{p=±χ} K(λ-p) G(p,ν)/𝔞′(p)
//! with K(u) = sh 2η/(sh(u+η) sh(u-η)). The residue sum removes the in-strip
//! holes, which is the same as integrating over C′. The arms are the NLIE
//! arms, so the trapezoid nodes, 𝔞 and the FFT machinery are shared.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::bethe;
use crate::error::{Error, Result};
use crate::linalg::{det, gmres, solve, CMat, Toeplitz};
use crate::model::{c64, kernel_raw, sh, ModelParams, C64, I};
use crate::nlie::{
    build_contour, eval_aux_from_nlie, eval_dlog_aux, ContourKind, ContourQuadrature,
    NlieSolution,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

const GMRES_TOL: f64 = 1e-14;
const GMRES_RESTART: usize = 60;
const GMRES_MAX: usize = 3000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DensityKind {
    /// Two-term driving: G.
    Full,
    /// One-term driving: G⁺, with G(λ,ν) = G⁺(λ,ν) - G⁺(λ,η-ν).
    Plus,
}

pub fn driving(kind: DensityKind, lambda: C64, nu: C64, eta: C64) -> C64 {
    let minus = sh(eta) / (sh(lambda - nu) * sh(lambda - nu + eta));
    match kind {
        DensityKind::Full => sh(eta) / (sh(lambda + nu) * sh(lambda + nu - eta)) - minus,
        DensityKind::Plus => -minus,
    }
}

/// 𝔞′(z) = 𝔞(z) ∂ ln 𝔞(z) from the NLIE representation.
pub fn aux_prime(z: C64, sol: &NlieSolution) -> Result<C64> {
    Ok(eval_dlog_aux(z, sol)? * eval_aux_from_nlie(z, sol)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityTable {
    pub kind: DensityKind,
    pub contour: ContourQuadrature,
    pub nu_list: Vec<C64>,
    pub eta: C64,
    pub arm_x: Vec<f64>,
    pub spacing: f64,
    pub half_width: f64,
    /// G at the upper / lower arm nodes (left to right), one row per ν.
    pub upper: Vec<Vec<C64>>,
    pub lower: Vec<Vec<C64>>,
    /// The excluded points ±χ, 𝔞′ there, and G at them per ν.
    pub excluded: Vec<C64>,
    pub excluded_aprime: Vec<C64>,
    pub at_excluded: Vec<Vec<C64>>,
    /// Node weights including 1/(2πi(1+𝔞)) and the orientation sign.
    pub w_upper: Vec<C64>,
    pub w_lower: Vec<C64>,
    /// max over ν and unknowns of |(Id - K)g - d|.
    pub residual: f64,
}

/// The discretized operator on [upper arm, lower arm, excluded points].
struct Nystrom {
    n: usize,
    x: Vec<f64>,
    y: f64,
    eta: C64,
    uu: Toeplitz,
    ul: Toeplitz,
    lu: Toeplitz,
    wu: Vec<C64>,
    wl: Vec<C64>,
    exc: Vec<C64>,
    exc_ap: Vec<C64>,
    /// K(target - p) for every arm target, per excluded point.
    col_u: Vec<Vec<C64>>,
    col_l: Vec<Vec<C64>>,
}

fn line_toeplitz(n: usize, h: f64, shift: f64, delta: f64, eta: C64) -> Toeplitz {
    let t: Vec<C64> = (0..2 * n - 1)
        .map(|j| kernel_raw(c64(h * (j as f64 - (n - 1) as f64) + shift, delta), eta))
        .collect();
    Toeplitz::new(&t)
}

impl Nystrom {
    fn new(sol: &NlieSolution, exc: Vec<C64>, exc_ap: Vec<C64>) -> Self {
        let n = sol.arm_x.len();
        let h = sol.spacing();
        let y = sol.half_width();
        let eta = sol.params.eta();
        let tpi = 2.0 * PI * I;
        let wu = sol.f_upper.iter().map(|f| -h * (-f).exp() / tpi).collect();
        let wl = sol.f_lower.iter().map(|f| h * (-f).exp() / tpi).collect();
        let col_u = exc
            .iter()
            .map(|p| sol.arm_x.iter().map(|x| kernel_raw(c64(*x, y) - p, eta)).collect())
            .collect();
        let col_l = exc
            .iter()
            .map(|p| sol.arm_x.iter().map(|x| kernel_raw(c64(*x, -y) - p, eta)).collect())
            .collect();
        Nystrom {
            n,
            x: sol.arm_x.clone(),
            y,
            eta,
            uu: line_toeplitz(n, h, 0.0, 0.0, eta),
            ul: line_toeplitz(n, h, 0.0, 2.0 * y, eta),
            lu: line_toeplitz(n, h, 0.0, -2.0 * y, eta),
            wu,
            wl,
            exc,
            exc_ap,
            col_u,
            col_l,
        }
    }

    fn dim(&self) -> usize {
        2 * self.n + self.exc.len()
    }

    /// K applied to g.
    fn kernel_apply(&self, g: &[C64]) -> Vec<C64> {
        let n = self.n;
        let su: Vec<C64> = (0..n).map(|i| self.wu[i] * g[i]).collect();
        let sl: Vec<C64> = (0..n).map(|i| self.wl[i] * g[n + i]).collect();
        let ge: Vec<C64> = (0..self.exc.len())
            .map(|k| g[2 * n + k] / self.exc_ap[k])
            .collect();
        let a = self.uu.apply(&su);
        let b = self.ul.apply(&sl);
        let c = self.lu.apply(&su);
        let d = self.uu.apply(&sl);
        let mut out = vec![ZERO; self.dim()];
        for i in 0..n {
            let mut vu = a[i] + b[i];
            let mut vl = c[i] + d[i];
            for k in 0..ge.len() {
                vu -= self.col_u[k][i] * ge[k];
                vl -= self.col_l[k][i] * ge[k];
            }
            out[i] = vu;
            out[n + i] = vl;
        }
        for (q, pq) in self.exc.iter().enumerate() {
            let mut v = ZERO;
            for i in 0..n {
                v += self.col_u[q][i] * su[i] + self.col_l[q][i] * sl[i];
            }
            // col_*[q][i] = K(node_i - p_q); K is even
            for (k, pk) in self.exc.iter().enumerate() {
                v -= kernel_raw(pq - pk, self.eta) * ge[k];
            }
            out[2 * n + q] = v;
        }
        out
    }

    fn apply(&self, g: &[C64]) -> Vec<C64> {
        let k = self.kernel_apply(g);
        g.iter().zip(&k).map(|(a, b)| a - b).collect()
    }

    fn points(&self) -> Vec<C64> {
        let mut pts: Vec<C64> = self.x.iter().map(|x| c64(*x, self.y)).collect();
        pts.extend(self.x.iter().map(|x| c64(*x, -self.y)));
        pts.extend(self.exc.iter().copied());
        pts
    }
}

fn check_nu(nu: C64, p: &ModelParams) -> Result<()> {
    let d = (nu - p.eta() / 2.0).im.abs();
    if d >= p.epsilon || !nu.is_finite() {
        return Err(Error::invalid(
            "nu",
            format!("{nu} violates |Im(ν - η/2)| < ε = {}", p.epsilon),
        ));
    }
    Ok(())
}

/// Solves for G (or G⁺) at every ν of `nu_list` on the C′ of `sol`.
pub fn solve_density(
    kind: DensityKind,
    nu_list: &[C64],
    sol: &NlieSolution,
) -> Result<DensityTable> {
    let p = &sol.params;
    for nu in nu_list {
        check_nu(*nu, p)?;
    }
    let contour = build_contour(
        ContourKind::CPrime,
        p,
        sol.spacing(),
        sol.contour.cutoff,
        &sol.hole_positions,
    )?;
    let exc = contour.excluded.clone();
    let exc_ap = exc
        .iter()
        .map(|z| aux_prime(*z, sol))
        .collect::<Result<Vec<_>>>()?;
    for (z, ap) in exc.iter().zip(&exc_ap) {
        if ap.norm() < 1e-14 || !ap.is_finite() {
            return Err(Error::Singular(format!("𝔞′ vanishes at the hole {z}")));
        }
    }
    let op = Nystrom::new(sol, exc.clone(), exc_ap.clone());
    let pts = op.points();
    let eta = op.eta;
    let solved: Vec<(Vec<C64>, f64)> = nu_list
        .par_iter()
        .map(|nu| {
            let rhs: Vec<C64> = pts.iter().map(|z| driving(kind, *z, *nu, eta)).collect();
            let g = gmres(|v| op.apply(v), &rhs, GMRES_TOL, GMRES_RESTART, GMRES_MAX)?;
            let r = op
                .apply(&g)
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            Ok((g, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = op.n;
    let mut table = DensityTable {
        kind,
        contour,
        nu_list: nu_list.to_vec(),
        eta,
        arm_x: sol.arm_x.clone(),
        spacing: sol.spacing(),
        half_width: sol.half_width(),
        upper: vec![],
        lower: vec![],
        excluded: exc,
        excluded_aprime: exc_ap,
        at_excluded: vec![],
        w_upper: op.wu.clone(),
        w_lower: op.wl.clone(),
        residual: 0.0,
    };
    for (g, r) in solved {
        table.upper.push(g[..n].to_vec());
        table.lower.push(g[n..2 * n].to_vec());
        table.at_excluded.push(g[2 * n..].to_vec());
        table.residual = table.residual.max(r);
    }
    Ok(table)
}

/// G(λ,ν) for ν ∈ `nu_list`.
pub fn solve_g(nu_list: &[C64], sol: &NlieSolution) -> Result<DensityTable> {
    solve_density(DensityKind::Full, nu_list, sol)
}

pub fn solve_g_plus(nu_list: &[C64], sol: &NlieSolution) -> Result<DensityTable> {
    solve_density(DensityKind::Plus, nu_list, sol)
}

impl DensityTable {
    pub fn nu_index(&self, nu: C64) -> Option<usize> {
        self.nu_list.iter().position(|v| (v - nu).norm() < 1e-13)
    }

    /// Nyström interpolation at an arbitrary λ inside the strip.
    pub fn eval(&self, lambda: C64, k: usize) -> C64 {
        let eta = self.eta;
        let y = self.half_width;
        let mut v = driving(self.kind, lambda, self.nu_list[k], eta);
        for (i, x) in self.arm_x.iter().enumerate() {
            v += kernel_raw(lambda - c64(*x, y), eta) * self.w_upper[i] * self.upper[k][i]
                + kernel_raw(lambda - c64(*x, -y), eta) * self.w_lower[i] * self.lower[k][i];
        }
        for (j, p) in self.excluded.iter().enumerate() {
            v -= kernel_raw(lambda - p, eta) * self.at_excluded[k][j] / self.excluded_aprime[j];
        }
        v
    }

    pub fn eval_nu(&self, lambda: C64, nu: C64) -> Result<C64> {
        let k = self
            .nu_index(nu)
            .ok_or_else(|| Error::invalid("nu", format!("{nu} is not in the table")))?;
        Ok(self.eval(lambda, k))
    }

    /// Contour values in the order upper arm, lower arm.
    pub fn values(&self, k: usize) -> Vec<C64> {
        let mut v = self.upper[k].clone();
        v.extend_from_slice(&self.lower[k]);
        v
    }

    /// Nodes matching `values`.
    pub fn nodes(&self) -> Vec<C64> {
        let y = self.half_width;
        let mut v: Vec<C64> = self.arm_x.iter().map(|x| c64(*x, y)).collect();
        v.extend(self.arm_x.iter().map(|x| c64(*x, -y)));
        v
    }

    /// Residual of the continuous equation at `points`, with the integral
    /// evaluated on the grid refined to h/2 (midpoint values of 𝔞 from the
    /// NLIE, midpoint values of G by interpolation).
    pub fn offnode_residual(&self, sol: &NlieSolution, points: &[C64]) -> f64 {
        let h = self.spacing;
        let y = self.half_width;
        let eta = self.eta;
        let n = self.arm_x.len();
        let (mu, ml) = sol.log_a_shifted(h / 2.0);
        let tpi = 2.0 * PI * I;
        // the ln(1+𝔞) branch does not matter here
        let wmu: Vec<C64> = mu.iter().map(|u| -h / 2.0 / (tpi * (ONE + u.exp()))).collect();
        let wml: Vec<C64> = ml
            .iter()
            .map(|u| h / 2.0 * (-u).exp() / (tpi * ((-u).exp() + ONE)))
            .collect();
        let uu = line_toeplitz(n, h, h / 2.0, 0.0, eta);
        let ul = line_toeplitz(n, h, h / 2.0, 2.0 * y, eta);
        let lu = line_toeplitz(n, h, h / 2.0, -2.0 * y, eta);
        let xm: Vec<f64> = self.arm_x.iter().map(|x| x + h / 2.0).collect();
        let mut worst = 0.0f64;
        for k in 0..self.nu_list.len() {
            let nu = self.nu_list[k];
            let su: Vec<C64> = (0..n).map(|i| self.w_upper[i] * self.upper[k][i]).collect();
            let sl: Vec<C64> = (0..n).map(|i| self.w_lower[i] * self.lower[k][i]).collect();
            let (a, b, c, d) = (uu.apply(&su), ul.apply(&sl), lu.apply(&su), uu.apply(&sl));
            let exc_term = |z: C64| -> C64 {
                self.excluded
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        kernel_raw(z - p, eta) * self.at_excluded[k][j] / self.excluded_aprime[j]
                    })
                    .sum()
            };
            let gmu: Vec<C64> = (0..n)
                .map(|i| {
                    let z = c64(xm[i], y);
                    driving(self.kind, z, nu, eta) + a[i] + b[i] - exc_term(z)
                })
                .collect();
            let gml: Vec<C64> = (0..n)
                .map(|i| {
                    let z = c64(xm[i], -y);
                    driving(self.kind, z, nu, eta) + c[i] + d[i] - exc_term(z)
                })
                .collect();
            for z in points {
                let mut integral = ZERO;
                for i in 0..n {
                    integral += kernel_raw(z - c64(self.arm_x[i], y), eta) * su[i] / 2.0
                        + kernel_raw(z - c64(self.arm_x[i], -y), eta) * sl[i] / 2.0
                        + kernel_raw(z - c64(xm[i], y), eta) * wmu[i] * gmu[i]
                        + kernel_raw(z - c64(xm[i], -y), eta) * wml[i] * gml[i];
                }
                let rhs = driving(self.kind, *z, nu, eta) + integral - exc_term(*z);
                worst = worst.max((self.eval(*z, k) - rhs).norm());
            }
        }
        worst
    }
}

/// det[G(λ_j⁺, ν_l)/𝔞′(λ_j⁺)]; 1 for n = 0.
pub fn detformula_via_g(
    roots_plus: &[C64],
    nu_plus: &[C64],
    table: &DensityTable,
    sol: &NlieSolution,
) -> Result<C64> {
    let n = roots_plus.len();
    if nu_plus.len() != n {
        return Err(Error::invalid("nu_plus", "length differs from roots_plus"));
    }
    if table.kind != DensityKind::Full {
        return Err(Error::invalid("table", "needs the two-term density G"));
    }
    if n == 0 {
        return Ok(ONE);
    }
    let idx = nu_plus
        .iter()
        .map(|nu| {
            table
                .nu_index(*nu)
                .ok_or_else(|| Error::invalid("nu_plus", format!("{nu} is not in the table")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = CMat::zeros(n, n);
    for (j, l) in roots_plus.iter().enumerate() {
        let ap = aux_prime(*l, sol)?;
        for (c, k) in idx.iter().enumerate() {
            m[(j, c)] = table.eval(*l, *k) / ap;
        }
    }
    Ok(det(&m))
}

/// φ(λ_j, λ_k) of the M×M determinant ratio, built from the Bethe roots.
pub fn phi_matrix(roots: &[C64], p: &ModelParams) -> CMat {
    let eta = p.eta();
    let m = roots.len();
    DMatrix::from_fn(m, m, |j, k| {
        let (a, b) = (roots[j], roots[k]);
        let mut v = kernel_raw(a + b, eta) - kernel_raw(a - b, eta);
        if j == k {
            v -= bethe::dlog_aux(a, roots, p);
        }
        v / sh(2.0 * a)
    })
}

/// ψ(λ_j, μ), the column that replaces λ_k by μ.
pub fn psi_entry(lj: C64, mu: C64, roots: &[C64], p: &ModelParams) -> Result<C64> {
    let eta = p.eta();
    let a = bethe::aux_eval(mu, roots, p)?;
    let d = sh(lj - mu) * sh(lj + mu);
    Ok(sh(eta) * sh(2.0 * mu - eta) / (d * sh(mu - lj - eta) * sh(mu + lj - eta))
        - a * sh(eta) * sh(2.0 * mu + eta) / (d * sh(mu - lj + eta) * sh(mu + lj + eta)))
}

/// J = φ⁻¹ψ: row j, column l holds the value G(λ_j, ν_l)/𝔞′(λ_j) takes at
/// the Bethe roots.
pub fn j_matrix(roots: &[C64], nus: &[C64], p: &ModelParams) -> Result<CMat> {
    let m = roots.len();
    let mut ps = CMat::zeros(m, nus.len());
    for j in 0..m {
        for (l, nu) in nus.iter().enumerate() {
            ps[(j, l)] = psi_entry(roots[j], *nu, roots, p)?;
        }
    }
    solve(&phi_matrix(roots, p), &ps)
}

/// det ψ/det φ with the columns of `replaced` swapped for `nus`.
pub fn det_ratio(roots: &[C64], replaced: &[usize], nus: &[C64], p: &ModelParams) -> Result<C64> {
    let phi = phi_matrix(roots, p);
    let mut psi = phi.clone();
    for (k, nu) in replaced.iter().zip(nus) {
        for j in 0..roots.len() {
            psi[(j, *k)] = psi_entry(roots[j], *nu, roots, p)?;
        }
    }
    Ok(det(&psi) / det(&phi))
}

/// i sh 2η/(2π sh(u+η) sh(u-η)), the kernel of the real-line density.
pub fn rho_kernel(u: C64, eta: C64) -> C64 {
    I * kernel_raw(u, eta) / (2.0 * PI)
}

/// (i/π) sh η/(sh(λ-ν′) sh(λ-ν′+η)).
pub fn rho_driving(lambda: C64, nu: C64, eta: C64) -> C64 {
    I / PI * sh(eta) / (sh(lambda - nu) * sh(lambda - nu + eta))
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoTable {
    pub nu_list: Vec<C64>,
    pub eta: C64,
    pub x: Vec<f64>,
    pub spacing: f64,
    pub cutoff: f64,
    /// ρ at the line nodes, one row per ν′.
    pub values: Vec<Vec<C64>>,
    /// max |ρ| at the two ends of the line.
    pub boundary: f64,
}

/// ρ(λ,ν′) - ∫ dω k(λ-ω) ρ(ω,ν′) = r(λ,ν′) on [-cutoff, cutoff].
pub fn solve_rho(nu_list: &[C64], p: &ModelParams, cutoff: f64, spacing: f64) -> Result<RhoTable> {
    if cutoff < 20.0 {
        return Err(Error::invalid("line_cutoff", "must be at least 20"));
    }
    if spacing <= 0.0 || spacing > 0.5 {
        return Err(Error::invalid("spacing", "must lie in (0, 0.5]"));
    }
    let eta = p.eta();
    for nu in nu_list {
        if !(nu.im > 0.0 && nu.im < p.gamma) {
            return Err(Error::invalid("nu", format!("{nu} needs 0 < Im ν′ < γ")));
        }
    }
    let n = (cutoff / spacing).round() as i64;
    let x: Vec<f64> = (-n..=n).map(|k| k as f64 * spacing).collect();
    let np = x.len();
    let a = DMatrix::from_fn(np, np, |i, j| {
        let v = -spacing * rho_kernel(c64(x[i] - x[j], 0.0), eta);
        if i == j {
            v + ONE
        } else {
            v
        }
    });
    let b = DMatrix::from_fn(np, nu_list.len(), |i, k| {
        rho_driving(c64(x[i], 0.0), nu_list[k], eta)
    });
    let sol = solve(&a, &b)?;
    let values: Vec<Vec<C64>> = (0..nu_list.len())
        .map(|k| sol.column(k).iter().copied().collect())
        .collect();
    let boundary = values
        .iter()
        .map(|v| v[0].norm().max(v[np - 1].norm()))
        .fold(0.0, f64::max);
    if boundary > 1e-12 {
        return Err(Error::Consistency(format!(
            "ρ at the line ends is {boundary:.2e}; increase the cutoff"
        )));
    }
    Ok(RhoTable {
        nu_list: nu_list.to_vec(),
        eta,
        x,
        spacing,
        cutoff,
        values,
        boundary,
    })
}

impl RhoTable {
    /// ρ(λ, ν′_k) by the interpolation formula, λ within |Im λ| < γ of the line.
    pub fn eval(&self, lambda: C64, k: usize) -> C64 {
        let mut v = rho_driving(lambda, self.nu_list[k], self.eta);
        for (x, r) in self.x.iter().zip(&self.values[k]) {
            v += self.spacing * rho_kernel(lambda - x, self.eta) * r;
        }
        v
    }
}

/// ρ(λ, η/2 + s) by numerical inversion of ρ̂ = r̂/(1 - k̂), where
/// r̂(k) = -2 sh((π-γ)k/2)/sh(πk/2) e^{iks} and k̂(k) = -sh((π/2-γ)k)/sh(πk/2).
/// Needs real λ and |Im s| < γ/2.
pub fn fourier_oracle(lambda: f64, nu_prime: C64, gamma: f64) -> C64 {
    let s = nu_prime - c64(0.0, gamma / 2.0);
    let dk = 0.01;
    let kmax = 60.0 / (gamma / 2.0 - s.im.abs()).max(0.05);
    let nk = (kmax / dk) as i64;
    let mut acc = ZERO;
    for j in -nk..nk {
        let k = (j as f64 + 0.5) * dk;
        let den = (PI * k / 2.0).sinh();
        let rhat = -2.0 * ((PI - gamma) * k / 2.0).sinh() / den;
        let khat = -((PI / 2.0 - gamma) * k).sinh() / den;
        acc += (I * k * (s - lambda)).exp() * rhat / (1.0 - khat);
    }
    acc * dk / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plus_driving_splits_full() {
        let eta = c64(0.0, 0.6);
        let (l, nu) = (c64(0.2, 0.1), c64(0.01, 0.31));
        let full = driving(DensityKind::Full, l, nu, eta);
        let split =
            driving(DensityKind::Plus, l, nu, eta) - driving(DensityKind::Plus, l, eta - nu, eta);
        assert!((full - split).norm() < 1e-13);
    }

    #[test]
    fn oracle_matches_sech() {
        // the transform divides out to ρ = -1/(γ ch(π(λ-s)/γ))
        let g = 0.6;
        for l in [-0.7, 0.0, 0.4] {
            let v = fourier_oracle(l, c64(0.02, g / 2.0), g);
            let exact = -1.0 / (g * (PI * (l - 0.02) / g).cosh());
            assert!((v - exact).norm() < 1e-12, "{v} {exact}");
        }
    }
}

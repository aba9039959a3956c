//! Explicit matrices on the 2^L spin space: R, K, the monodromy, the
//! reflection-algebra generators, τ and t, the Hamiltonian, and brute-force
//! expectation values used as ground truth by every other layer.
//!
//! Site 1 is the most significant bit of a basis index; bit value 0 is spin
//! up, so the vacuum |0⟩ = (1,0)^⊗L is index 0.

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::model::{ch, quantum_det, sh, ModelParams, C64, POLE_TOL};

/// Largest L for full 2^L × 2^L operators.
pub const MAX_DENSE_L: usize = 8;
/// Largest L for the S^z = 0 sector diagonalization.
pub const MAX_SECTOR_L: usize = 12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub label: String,
    pub mat: CMat,
}

impl OperatorMatrix {
    pub fn new(label: impl Into<String>, mat: CMat) -> Self {
        OperatorMatrix {
            label: label.into(),
            mat,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct StateVector {
    pub amplitudes: CVec,
    /// Total S^z eigenvalue times 2 (number of up minus down spins), if known.
    pub sz_sector: Option<i32>,
}

/// The four 2^L blocks of a 2×2 operator-valued matrix, indexed [row][col].
pub type Block2 = [[CMat; 2]; 2];

fn check_dense(l: usize) -> Result<()> {
    if l > MAX_DENSE_L {
        return Err(Error::invalid(
            "L",
            format!("dense operators are limited to L <= {MAX_DENSE_L}"),
        ));
    }
    Ok(())
}

/// 4×4 R-matrix in the basis |a b⟩ with index 2a + b.
pub fn build_r(z: C64, eta: C64) -> CMat {
    let mut r = CMat::zeros(4, 4);
    let a = sh(z + eta);
    let b = sh(z);
    let c = sh(eta);
    r[(0, 0)] = a;
    r[(3, 3)] = a;
    r[(1, 1)] = b;
    r[(2, 2)] = b;
    r[(1, 2)] = c;
    r[(2, 1)] = c;
    r
}

/// Diagonal of K(z, ξ) = I + σ^z tanh z coth ξ.
pub fn build_k(z: C64, xi: C64) -> Result<[C64; 2]> {
    let sx = sh(xi);
    if sx.norm() < POLE_TOL {
        return Err(Error::Singular("K(z, ξ) with ξ ≡ 0 mod iπ".into()));
    }
    let cz = ch(z);
    if cz.norm() < POLE_TOL {
        return Err(Error::Singular("K(z, ξ) with z ≡ iπ/2 mod iπ".into()));
    }
    let den = sx * cz;
    Ok([sh(z + xi) / den, -sh(z - xi) / den])
}

/// K^{(+)}(z) = ½ K(z + η, ξ⁺).
pub fn build_k_plus(z: C64, p: &ModelParams) -> Result<[C64; 2]> {
    let k = build_k(z + p.eta(), p.xi_plus)?;
    Ok([k[0] * 0.5, k[1] * 0.5])
}

/// K^{(-)}(z) = K(z, ξ⁻).
pub fn build_k_minus(z: C64, p: &ModelParams) -> Result<[C64; 2]> {
    build_k(z, p.xi_minus)
}

/// new = (m ⊗ site) · mat, where m is a 2×2 acting on `site` (0-based).
fn apply_site_left(m: &[[C64; 2]; 2], site: usize, l: usize, mat: &CMat) -> CMat {
    let n = mat.nrows();
    let bit = 1usize << (l - 1 - site);
    let mut out = CMat::zeros(n, mat.ncols());
    for row in 0..n {
        let b = usize::from(row & bit != 0);
        let r0 = row & !bit;
        let r1 = row | bit;
        let (c0, c1) = (m[b][0], m[b][1]);
        for col in 0..mat.ncols() {
            let mut v = ZERO;
            if c0 != ZERO {
                v += c0 * mat[(r0, col)];
            }
            if c1 != ZERO {
                v += c1 * mat[(r1, col)];
            }
            out[(row, col)] = v;
        }
    }
    out
}

/// T(z) = R_{0L}(z - s_L) ⋯ R_{01}(z - s_1) as its four quantum-space blocks.
pub fn build_monodromy(z: C64, p: &ModelParams) -> Result<Block2> {
    check_dense(p.l)?;
    let l = p.l;
    let n = 1usize << l;
    let eta = p.eta();
    let mut t: Block2 = [
        [CMat::identity(n, n), CMat::zeros(n, n)],
        [CMat::zeros(n, n), CMat::identity(n, n)],
    ];
    for j in 0..l {
        let r = build_r(z - p.inhom[j], eta);
        // local[a][a'] is the site operator m[b][b'] = R[2a+b, 2a'+b']
        let local = |a: usize, ap: usize| -> [[C64; 2]; 2] {
            [
                [r[(2 * a, 2 * ap)], r[(2 * a, 2 * ap + 1)]],
                [r[(2 * a + 1, 2 * ap)], r[(2 * a + 1, 2 * ap + 1)]],
            ]
        };
        let mut next: Block2 = [
            [CMat::zeros(n, n), CMat::zeros(n, n)],
            [CMat::zeros(n, n), CMat::zeros(n, n)],
        ];
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..2 {
                    let m = local(a, k);
                    if m.iter().flatten().all(|v| *v == ZERO) {
                        continue;
                    }
                    next[a][b] += apply_site_left(&m, j, l, &t[k][b]);
                }
            }
        }
        t = next;
    }
    Ok(t)
}

/// U^{(+)}(z) with U^t(z) = T^t(z-η/2) K^{(+)t}(z-η/2) σ^y T(-z-η/2) σ^y.
pub fn build_u_plus(z: C64, p: &ModelParams) -> Result<Block2> {
    let h = p.eta() / 2.0;
    let t1 = build_monodromy(z - h, p)?;
    let t2 = build_monodromy(-z - h, p)?;
    let k = build_k_plus(z - h, p)?;
    // σ^y T σ^y read as the cofactor matrix [[D, -C], [-B, A]] (indexed [k][i])
    let tt = |kk: usize, i: usize| -> CMat {
        match (kk, i) {
            (0, 0) => t2[1][1].clone(),
            (0, 1) => -t2[1][0].clone(),
            (1, 0) => -t2[0][1].clone(),
            _ => t2[0][0].clone(),
        }
    };
    let n = t1[0][0].nrows();
    let mut u: Block2 = [
        [CMat::zeros(n, n), CMat::zeros(n, n)],
        [CMat::zeros(n, n), CMat::zeros(n, n)],
    ];
    for i in 0..2 {
        for j in 0..2 {
            for kk in 0..2 {
                u[i][j] += (&t1[kk][j] * k[kk]) * tt(kk, i);
            }
        }
    }
    Ok(u)
}

/// ℬ(z) = U^{(+)}_{12}(z).
pub fn build_reflection_b(z: C64, p: &ModelParams) -> Result<OperatorMatrix> {
    let [[_, b], _] = build_u_plus(z, p)?;
    Ok(OperatorMatrix::new(format!("B({z})"), b))
}

/// 𝒞(z) = U^{(+)}_{21}(z).
pub fn build_reflection_c(z: C64, p: &ModelParams) -> Result<OperatorMatrix> {
    let [_, [c, _]] = build_u_plus(z, p)?;
    Ok(OperatorMatrix::new(format!("C({z})"), c))
}

/// Prefactor turning ℬ into the operator normalization used by the
/// determinant formulas: 2 ch(z+η/2) sh ξ⁺ (-1)^L.
pub fn kitanine_factor(z: C64, p: &ModelParams) -> C64 {
    let sign = if p.l % 2 == 0 { 1.0 } else { -1.0 };
    2.0 * ch(z + p.eta() / 2.0) * sh(p.xi_plus) * sign
}

/// τ(z) = tr U^{(+)}(z) K^{(-)}(z - η/2).
pub fn build_tau(z: C64, p: &ModelParams) -> Result<OperatorMatrix> {
    let u = build_u_plus(z, p)?;
    let k = build_k_minus(z - p.eta() / 2.0, p)?;
    let m = &u[0][0] * k[0] + &u[1][1] * k[1];
    Ok(OperatorMatrix::new(format!("tau({z})"), m))
}

/// Normalized transfer matrix t(z) = τ(z + η/2) / (d_q T)(-z - η/2); t(0) = Id.
pub fn build_transfer(z: C64, p: &ModelParams) -> Result<OperatorMatrix> {
    let h = p.eta() / 2.0;
    let dq = quantum_det(-z - h, p);
    if dq.norm() < POLE_TOL {
        return Err(Error::Singular("quantum determinant vanishes".into()));
    }
    let tau = build_tau(z + h, p)?;
    Ok(OperatorMatrix::new(format!("t({z})"), tau.mat / dq))
}

/// 𝒯^{(+)}(z) from a direct numerical inverse of T(-z) (validation route, L ≤ 6).
pub fn build_t_plus_direct(z: C64, p: &ModelParams) -> Result<Block2> {
    if p.l > 6 {
        return Err(Error::invalid("L", "direct inversion route limited to L <= 6"));
    }
    let t = build_monodromy(z, p)?;
    let tm = build_monodromy(-z, p)?;
    let n = t[0][0].nrows();
    let mut big = CMat::zeros(2 * n, 2 * n);
    for a in 0..2 {
        for b in 0..2 {
            big.view_mut((a * n, b * n), (n, n)).copy_from(&tm[a][b]);
        }
    }
    let inv = big
        .try_inverse()
        .ok_or_else(|| Error::Singular("T(-z) not invertible".into()))?;
    let tinv = |i: usize, k: usize| inv.view((i * n, k * n), (n, n)).into_owned();
    let k = build_k_plus(z, p)?;
    let mut out: Block2 = [
        [CMat::zeros(n, n), CMat::zeros(n, n)],
        [CMat::zeros(n, n), CMat::zeros(n, n)],
    ];
    for i in 0..2 {
        for j in 0..2 {
            for kk in 0..2 {
                out[i][j] += (&t[kk][j] * k[kk]) * tinv(i, kk);
            }
        }
    }
    Ok(out)
}

fn sigma_z_diag(idx: usize, site: usize, l: usize) -> f64 {
    if idx & (1usize << (l - 1 - site)) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Diagonal and hopping pieces of the Hamiltonian on one basis state.
fn ham_action(idx: usize, p: &ModelParams) -> (C64, Vec<(usize, C64)>) {
    let l = p.l;
    let eta = p.eta();
    let cheta = ch(eta);
    let sheta = sh(eta);
    let mut diag = cheta;
    let mut hops = Vec::new();
    for j in 0..l - 1 {
        let zz = sigma_z_diag(idx, j, l) * sigma_z_diag(idx, j + 1, l);
        diag += cheta * (zz + 1.0);
        if zz < 0.0 {
            let flip = idx ^ (1usize << (l - 1 - j)) ^ (1usize << (l - 2 - j));
            hops.push((flip, C64::new(2.0, 0.0)));
        }
    }
    diag += sheta
        * (sigma_z_diag(idx, 0, l) * crate::model::coth(p.xi_minus)
            + sigma_z_diag(idx, l - 1, l) * crate::model::coth(p.xi_plus));
    (diag, hops)
}

/// The Hamiltonian
/// Σ_j [σˣσˣ + σʸσʸ + (σᶻσᶻ + 1) ch η] + ch η + [σᶻ_1 coth ξ⁻ + σᶻ_L coth ξ⁺] sh η.
pub fn build_hamiltonian(p: &ModelParams) -> Result<OperatorMatrix> {
    check_dense(p.l)?;
    let n = 1usize << p.l;
    let mut h = CMat::zeros(n, n);
    for idx in 0..n {
        let (d, hops) = ham_action(idx, p);
        h[(idx, idx)] += d;
        for (j, v) in hops {
            h[(j, idx)] += v;
        }
    }
    Ok(OperatorMatrix::new("H", h))
}

/// Basis indices with exactly `n_down` down spins, ascending.
pub fn sector_basis(l: usize, n_down: usize) -> Vec<usize> {
    (0..1usize << l)
        .filter(|i| i.count_ones() as usize == n_down)
        .collect()
}

/// H restricted to the sector with `n_down` down spins.
pub fn hamiltonian_sector(p: &ModelParams, n_down: usize) -> Result<(Vec<usize>, CMat)> {
    if p.l > MAX_SECTOR_L {
        return Err(Error::invalid(
            "L",
            format!("sector diagonalization limited to L <= {MAX_SECTOR_L}"),
        ));
    }
    let basis = sector_basis(p.l, n_down);
    let pos: std::collections::HashMap<usize, usize> =
        basis.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let d = basis.len();
    let mut h = CMat::zeros(d, d);
    for (k, &idx) in basis.iter().enumerate() {
        let (diag, hops) = ham_action(idx, p);
        h[(k, k)] += diag;
        for (j, v) in hops {
            h[(pos[&j], k)] += v;
        }
    }
    Ok((basis, h))
}

#[derive(Clone, Debug, Serialize)]
pub struct EdGround {
    pub energy: f64,
    /// Imaginary part of the selected eigenvalue (zero for hermitian H).
    pub energy_im: f64,
    pub gap: f64,
    /// Lowest two sector eigenvalues agree within 1e-10.
    pub degenerate: bool,
    /// H was not hermitian and a general eigen-solve was used.
    pub non_hermitian: bool,
    pub sector_spectrum: Vec<f64>,
    #[serde(skip)]
    pub state: Option<StateVector>,
}

/// Lowest eigenpair of H in the S^z = 0 sector.
pub fn lowest_zero_mag_state(p: &ModelParams) -> Result<EdGround> {
    let m = p.m();
    let (basis, h) = hamiltonian_sector(p, m)?;
    let herm_err = (&h - h.adjoint()).camax();
    let n = 1usize << p.l;
    if herm_err < 1e-12 {
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        let e0 = eig.eigenvalues[order[0]];
        let gap = if order.len() > 1 {
            eig.eigenvalues[order[1]] - e0
        } else {
            f64::INFINITY
        };
        let v = eig.eigenvectors.column(order[0]);
        let mut full = CVec::zeros(n);
        // fix the global phase so the largest component is real positive
        let (kmax, _) = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        let phase = v[kmax].conj() / v[kmax].norm();
        for (k, &idx) in basis.iter().enumerate() {
            full[idx] = v[k] * phase;
        }
        Ok(EdGround {
            energy: e0,
            energy_im: 0.0,
            gap,
            degenerate: gap < 1e-10,
            non_hermitian: false,
            sector_spectrum: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
            state: Some(StateVector {
                amplitudes: full,
                sz_sector: Some(0),
            }),
        })
    } else {
        let ev = h
            .clone()
            .eigenvalues()
            .ok_or_else(|| Error::Consistency("Schur form failed".into()))?;
        let mut vals: Vec<C64> = ev.iter().copied().collect();
        vals.sort_by(|a, b| a.re.total_cmp(&b.re));
        let e0 = vals[0];
        // inverse iteration for the eigenvector
        let d = h.nrows();
        let shift = e0 + C64::new(1e-10, 0.0);
        let a = &h - CMat::identity(d, d) * shift;
        let lu = a.lu();
        let mut v = CVec::from_element(d, ONE);
        for _ in 0..4 {
            v = lu
                .solve(&v)
                .ok_or_else(|| Error::Singular("inverse iteration".into()))?;
            let nv = v.norm();
            v /= C64::new(nv, 0.0);
        }
        let mut full = CVec::zeros(n);
        for (k, &idx) in basis.iter().enumerate() {
            full[idx] = v[k];
        }
        let gap = if vals.len() > 1 {
            vals[1].re - e0.re
        } else {
            f64::INFINITY
        };
        Ok(EdGround {
            energy: e0.re,
            energy_im: e0.im,
            gap,
            degenerate: gap < 1e-10,
            non_hermitian: true,
            sector_spectrum: vals.iter().map(|v| v.re).collect(),
            state: Some(StateVector {
                amplitudes: full,
                sz_sector: Some(0),
            }),
        })
    }
}

/// ⟨state|op|state⟩ / ⟨state|state⟩.
pub fn brute_expectation(op: &OperatorMatrix, state: &StateVector) -> Result<C64> {
    let v = &state.amplitudes;
    if op.dim() != v.len() {
        return Err(Error::invalid("op", "dimension mismatch"));
    }
    let nrm = v.dotc(v);
    if nrm.norm() == 0.0 {
        return Err(Error::Singular("zero-norm state".into()));
    }
    Ok(v.dotc(&(&op.mat * v)) / nrm)
}

/// σ^z at site m (1-based) as a dense diagonal operator.
pub fn sigma_z_op(m: usize, l: usize) -> OperatorMatrix {
    let n = 1usize << l;
    let mut d = CMat::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = C64::new(sigma_z_diag(i, m - 1, l), 0.0);
    }
    OperatorMatrix::new(format!("sz_{m}"), d)
}

/// ⟨σ^z_m⟩ for m = 1..L directly from the amplitudes.
pub fn sigma_z_profile(state: &StateVector, l: usize) -> Vec<f64> {
    let v = &state.amplitudes;
    let nrm: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    (0..l)
        .map(|site| {
            v.iter()
                .enumerate()
                .map(|(i, c)| c.norm_sqr() * sigma_z_diag(i, site, l))
                .sum::<f64>()
                / nrm
        })
        .collect()
}

/// Q_m(φ) = ∏_{j≤m}(A(s_j) + e^φ D(s_j)) [∏_{j≤m}(A(s_j) + D(s_j))]^{-1}.
pub fn build_q_operator(m: usize, phi: f64, p: &ModelParams) -> Result<OperatorMatrix> {
    if m > p.l {
        return Err(Error::invalid("m", "m must not exceed L"));
    }
    check_dense(p.l)?;
    let n = 1usize << p.l;
    let e = C64::new(phi.exp(), 0.0);
    let mut q = CMat::identity(n, n);
    let mut inv = CMat::identity(n, n);
    for j in 0..m {
        let t = build_monodromy(p.inhom[j], p)?;
        q = q * (&t[0][0] + &t[1][1] * e);
        let s = &t[0][0] + &t[1][1];
        let si = s
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("(A+D)(s_{}) not invertible", j + 1)))?;
        inv *= si;
    }
    Ok(OperatorMatrix::new(format!("Q_{m}({phi})"), q * inv))
}

/// ⟨Q_m(φ)⟩ in `state`.
pub fn brute_q(m: usize, phi: f64, p: &ModelParams, state: &StateVector) -> Result<C64> {
    if m == 0 || phi == 0.0 {
        return Ok(ONE);
    }
    let q = build_q_operator(m, phi, p)?;
    brute_expectation(&q, state)
}

/// Bilinear ⟨left|op|right⟩ / ⟨left|right⟩ with `left` a row vector (no conjugation).
pub fn bilinear_ratio(left: &CVec, op: &CMat, right: &CVec) -> Result<C64> {
    let den = left.dot(right);
    if den.norm() == 0.0 {
        return Err(Error::Singular("vanishing bilinear norm".into()));
    }
    Ok(left.dot(&(op * right)) / den)
}

pub fn vacuum(l: usize) -> CVec {
    let mut v = CVec::zeros(1usize << l);
    v[0] = ONE;
    v
}

/// ∏ ℬ(λ_j)|0⟩ with ℬ in the determinant-formula normalization.
pub fn bethe_vector(roots: &[C64], p: &ModelParams) -> Result<CVec> {
    let mut v = vacuum(p.l);
    for &l in roots {
        let b = build_reflection_b(l, p)?;
        v = (&b.mat * v) * kitanine_factor(l, p);
    }
    Ok(v)
}

/// ⟨0| ∏ 𝒞(λ_j) as a row vector (transposed into a column).
pub fn dual_bethe_vector(roots: &[C64], p: &ModelParams) -> Result<CVec> {
    let mut v = vacuum(p.l);
    for &l in roots {
        let c = build_reflection_c(l, p)?;
        v = c.mat.transpose() * v;
    }
    Ok(v)
}

/// Residual ‖τ(z)v - Λ v‖ / ‖v‖.
pub fn eigen_residual(op: &CMat, v: &CVec, lambda: C64) -> f64 {
    (op * v - v * lambda).norm() / v.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::c64;

    #[test]
    fn r_at_zero_is_scaled_permutation() {
        let eta = c64(0.0, 0.6);
        let r = build_r(c64(0.0, 0.0), eta);
        let mut p = CMat::zeros(4, 4);
        p[(0, 0)] = ONE;
        p[(3, 3)] = ONE;
        p[(1, 2)] = ONE;
        p[(2, 1)] = ONE;
        assert!((r - p * sh(eta)).camax() < 1e-15);
    }

    #[test]
    fn k_properties() {
        let p = ModelParams::homogeneous(2, 0.6, c64(0.0, 1.0), c64(0.0, 0.9));
        let k = build_k_minus(c64(0.0, 0.0), &p).unwrap();
        assert!((k[0] - ONE).norm() < 1e-15 && (k[1] - ONE).norm() < 1e-15);
        let z = c64(0.3, -0.2);
        let k = build_k(z, p.xi_plus).unwrap();
        assert!((k[0] + k[1] - 2.0).norm() < 1e-14);
        let kp = build_k_plus(c64(0.0, 0.0), &p).unwrap();
        assert!((kp[0] + kp[1] - 1.0).norm() < 1e-14);
        assert!(build_k(z, c64(0.0, 0.0)).is_err());
    }

    #[test]
    fn vacuum_actions() {
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, 0.9))
            .with_inhom(vec![c64(0.01, 0.0), c64(-0.02, 0.0), c64(0.015, 0.0), c64(0.005, 0.0)]);
        let z = c64(0.31, 0.12);
        let t = build_monodromy(z, &p).unwrap();
        let v = vacuum(4);
        let a = crate::model::vacuum_a(z, &p);
        let d = crate::model::vacuum_d(z, &p);
        assert!((&t[0][0] * &v - &v * a).norm() < 1e-12);
        assert!((&t[1][1] * &v - &v * d).norm() < 1e-12);
        assert!((&t[1][0] * &v).norm() < 1e-12);
    }

    #[test]
    fn l2_sector_closed_form() {
        let p = ModelParams::homogeneous(2, 0.6, c64(0.0, 1.0), c64(0.0, 0.9));
        let (_, h) = hamiltonian_sector(&p, 1).unwrap();
        assert_eq!(h.nrows(), 2);
        // basis |ud>, |du>: diagonal ch η(-1+1) + ch η ± sh η(coth ξ⁻ - coth ξ⁺), hop 2
        let c = ch(p.eta()).re;
        let d1 = (sh(p.eta()) * (crate::model::coth(p.xi_minus) - crate::model::coth(p.xi_plus))).re;
        let e0 = c - (d1 * d1 + 4.0).sqrt();
        let g = lowest_zero_mag_state(&p).unwrap();
        assert!((g.energy - e0).abs() < 1e-12, "{} {}", g.energy, e0);
    }
}

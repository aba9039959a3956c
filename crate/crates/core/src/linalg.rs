//! Small dense linear-algebra helpers on top of nalgebra, polynomial roots,
//! Toeplitz products via FFT and a restarted GMRES.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Determinant by partial-pivot LU; the empty determinant is 1.
pub fn det(m: &CMat) -> C64 {
    match m.nrows() {
        0 => ONE,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

/// Determinant of a small row-major square array without allocation for n ≤ 3.
pub fn det_small(a: &[C64], n: usize) -> C64 {
    match n {
        0 => ONE,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => det(&CMat::from_row_slice(n, n, a)),
    }
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("singular linear system".into()))
}

/// Polynomial multiplication, coefficients ordered from the highest power.
/// Least-squares solution of a x ≈ b, singular values below rcond·σ_max dropped.
pub fn lstsq(a: &CMat, b: &[C64], rcond: f64) -> Vec<C64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rhs = DVector::from_column_slice(b);
    match svd.solve(&rhs, rcond * smax) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![C64::new(0.0, 0.0); a.ncols()],
    }
}

pub fn poly_mul(p: &[C64], q: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

pub fn poly_eval(p: &[C64], x: C64) -> C64 {
    p.iter().fold(ZERO, |acc, c| acc * x + c)
}

fn poly_eval_d(p: &[C64], x: C64) -> (C64, C64) {
    let mut v = ZERO;
    let mut d = ZERO;
    for c in p {
        d = d * x + v;
        v = v * x + c;
    }
    (v, d)
}

/// Divides out a known root r, forward for |r| ≤ 1 and backward otherwise so
/// the recurrence stays stable. Returns the quotient and the relative remainder.
pub fn poly_deflate(p: &[C64], r: C64) -> (Vec<C64>, f64) {
    let n = p.len() - 1;
    let scale = p.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    let mut q = vec![ZERO; n];
    if r.norm() <= 1.0 {
        let mut acc = ZERO;
        for k in 0..n {
            acc = p[k] + r * acc;
            q[k] = acc;
        }
        let rem = p[n] + r * q[n - 1];
        (q, rem.norm() / scale)
    } else {
        q[n - 1] = -p[n] / r;
        for k in (1..n).rev() {
            q[k - 1] = (q[k] - p[k]) / r;
        }
        let rem = p[0] - q[0];
        (q, rem.norm() / scale)
    }
}

/// All roots of a polynomial (coefficients from the highest power) via the
/// eigenvalues of the companion matrix, each polished by a few Newton steps.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let first = coeffs
        .iter()
        .position(|c| c.norm() > 0.0)
        .ok_or_else(|| Error::Singular("zero polynomial".into()))?;
    let p: Vec<C64> = coeffs[first..].iter().map(|c| c / coeffs[first]).collect();
    let n = p.len() - 1;
    if n == 0 {
        return Ok(vec![]);
    }
    let mut comp = CMat::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -p[j + 1];
    }
    for i in 1..n {
        comp[(i, i - 1)] = ONE;
    }
    let ev = comp
        .eigenvalues()
        .ok_or_else(|| Error::Consistency("companion Schur form did not triangularize".into()))?;
    let mut roots: Vec<C64> = ev.iter().copied().collect();
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let (v, d) = poly_eval_d(&p, *r);
            if d.norm() == 0.0 {
                break;
            }
            let step = v / d;
            if !step.re.is_finite() || step.norm() > 1e-3 * (1.0 + r.norm()) {
                break;
            }
            *r -= step;
        }
    }
    Ok(roots)
}

/// Products with a Toeplitz matrix T[i,k] = t[i - k + n - 1] (t has length 2n-1),
/// evaluated by zero-padded FFT. The kernel transform is cached.
pub struct Toeplitz {
    n: usize,
    size: usize,
    kernel_hat: Vec<C64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Toeplitz {
    pub fn new(t: &[C64]) -> Self {
        let n = t.len().div_ceil(2);
        assert_eq!(t.len(), 2 * n - 1);
        let size = (3 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut kernel_hat = vec![ZERO; size];
        kernel_hat[..t.len()].copy_from_slice(t);
        fwd.process(&mut kernel_hat);
        Toeplitz {
            n,
            size,
            kernel_hat,
            fwd,
            inv,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// y_i = Σ_k T[i,k] f_k.
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        assert_eq!(f.len(), self.n);
        let mut buf = vec![ZERO; self.size];
        buf[..self.n].copy_from_slice(f);
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf[self.n - 1..2 * self.n - 1]
            .iter()
            .map(|v| v * scale)
            .collect()
    }
}

/// Restarted GMRES for A x = b with a matrix-free operator.
pub fn gmres<F>(apply: F, b: &[C64], tol: f64, restart: usize, max_iter: usize) -> Result<Vec<C64>>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let bnorm = norm(b).max(1e-300);
    let mut x = vec![ZERO; n];
    let mut total = 0;
    let mut last = f64::INFINITY;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        last = beta / bnorm;
        if last < tol {
            return Ok(x);
        }
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|c| c / beta).collect()];
        let mut h = vec![vec![ZERO; restart]; restart + 1];
        let mut cs = vec![ZERO; restart];
        let mut sn = vec![ZERO; restart];
        let mut g = vec![ZERO; restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            let mut w = apply(&v[k]);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (j, vj) in v.iter().enumerate() {
                    let hij: C64 = vj.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    h[j][k] += hij;
                    for (wi, vi) in w.iter_mut().zip(vj) {
                        *wi -= hij * vi;
                    }
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = C64::new(wn, 0.0);
            for j in 0..k {
                let t = cs[j].conj() * h[j][k] + sn[j].conj() * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let a = h[k][k];
            let bb = h[k + 1][k];
            let r = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if r == 0.0 {
                cs[k] = ONE;
                sn[k] = ZERO;
            } else {
                cs[k] = a / r;
                sn[k] = bb / r;
            }
            h[k][k] = cs[k].conj() * a + sn[k].conj() * bb;
            h[k + 1][k] = ZERO;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            last = g[k + 1].norm() / bnorm;
            if last < tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|c| c / wn).collect());
        }
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
        if last < tol {
            let ax = apply(&x);
            let res = norm(
                &b.iter()
                    .zip(&ax)
                    .map(|(bi, ai)| bi - ai)
                    .collect::<Vec<_>>(),
            ) / bnorm;
            if res < 10.0 * tol {
                return Ok(x);
            }
            last = res;
        }
    }
    Err(Error::NoConvergence {
        what: "gmres",
        iters: total,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_known_cubic() {
        // (x-1)(x+2)(x-i)
        let p = poly_mul(
            &poly_mul(&[ONE, -ONE], &[ONE, C64::new(2.0, 0.0)]),
            &[ONE, C64::new(0.0, -1.0)],
        );
        let mut r = poly_roots(&p).unwrap();
        r.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((r[0] - C64::new(-2.0, 0.0)).norm() < 1e-12);
        assert!((r[1] - C64::new(0.0, 1.0)).norm() < 1e-12);
        assert!((r[2] - ONE).norm() < 1e-12);
    }

    #[test]
    fn deflation_both_directions() {
        let p = poly_mul(
            &poly_mul(&[ONE, C64::new(-0.5, 0.1)], &[ONE, C64::new(-3.0, 1.0)]),
            &[ONE, C64::new(2.0, 0.0)],
        );
        for r in [C64::new(0.5, -0.1), C64::new(3.0, -1.0)] {
            let (q, rem) = poly_deflate(&p, r);
            assert!(rem < 1e-14);
            assert_eq!(q.len(), 3);
            assert!(poly_eval(&q, r).norm() > 0.1);
        }
    }

    #[test]
    fn toeplitz_matches_direct() {
        let n = 7;
        let t: Vec<C64> = (0..2 * n - 1)
            .map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let f: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let y = Toeplitz::new(&t).apply(&f);
        for i in 0..n {
            let d: C64 = (0..n).map(|k| t[i + n - 1 - k] * f[k]).sum();
            assert!((d - y[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn gmres_solves_dense() {
        let n = 12;
        let a = CMat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(3.0, 0.5)
            } else {
                C64::new(0.1 / (1.0 + (i + 2 * j) as f64), 0.05)
            }
        });
        let b: Vec<C64> = (0..n).map(|i| C64::new(1.0, i as f64)).collect();
        let x = gmres(
            |v| (&a * CVec::from_column_slice(v)).iter().copied().collect(),
            &b,
            1e-13,
            20,
            200,
        )
        .unwrap();
        let r = &a * CVec::from_vec(x) - CVec::from_vec(b);
        assert!(r.norm() < 1e-11);
    }
}

//! Model parameters, the boundary-field region table and the scalar
//! building blocks (sh/ch products) shared by every other module.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Distance below which an argument counts as sitting on a pole or threshold.
pub const POLE_TOL: f64 = 1e-13;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn sh(z: C64) -> C64 {
    z.sinh()
}

#[inline]
pub fn ch(z: C64) -> C64 {
    z.cosh()
}

#[inline]
pub fn coth(z: C64) -> C64 {
    z.cosh() / z.sinh()
}

/// Maps a phase into (-π, π].
#[inline]
pub fn wrap_phase(v: f64) -> f64 {
    let r = v - 2.0 * PI * (v / (2.0 * PI)).round();
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// ln sh(w) on the branch whose imaginary part follows Im w continuously:
/// Log(sh w) + i(Im w - wrap(Im w)).
pub fn lsh(w: C64) -> C64 {
    let base = if w.re.abs() > 30.0 {
        // sh w = ±e^{±w}/2 (1 - e^{∓2w}); avoids overflow far out on the arms
        let s = w.re.signum();
        let e = (-2.0 * s * w).exp();
        let lead = s * w - std::f64::consts::LN_2 + (C64::new(1.0, 0.0) - e).ln();
        let lead = if s < 0.0 { lead + I * PI } else { lead };
        // put onto the principal branch of Log
        C64::new(lead.re, wrap_phase(lead.im))
    } else {
        w.sinh().ln()
    };
    base + I * (w.im - wrap_phase(w.im))
}

/// ln[sh(z+a)/sh(z+b)] on the continuous branch of [`lsh`].
#[inline]
pub fn lratio(z: C64, a: C64, b: C64) -> C64 {
    lsh(z + a) - lsh(z + b)
}

pub fn is_finite(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Parameters of the open chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of sites L.
    pub l: usize,
    /// Anisotropy, η = iγ.
    pub gamma: f64,
    pub xi_plus: C64,
    pub xi_minus: C64,
    /// Lattice inhomogeneities s_1..s_L.
    pub inhom: Vec<C64>,
    /// Strip half-width control ε.
    pub epsilon: f64,
}

impl ModelParams {
    /// Homogeneous chain with the default ε = min(0.05, γ/10).
    pub fn homogeneous(l: usize, gamma: f64, xi_plus: C64, xi_minus: C64) -> Self {
        ModelParams {
            l,
            gamma,
            xi_plus,
            xi_minus,
            inhom: vec![C64::new(0.0, 0.0); l],
            epsilon: default_epsilon(gamma),
        }
    }

    pub fn with_inhom(mut self, s: Vec<C64>) -> Self {
        self.inhom = s;
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }

    /// Regularized chain s_j = j·δ, j = 1..L.
    pub fn regularized(&self, delta: f64) -> Self {
        let s = (1..=self.l).map(|j| C64::new(j as f64 * delta, 0.0)).collect();
        self.clone().with_inhom(s)
    }

    #[inline]
    pub fn eta(&self) -> C64 {
        C64::new(0.0, self.gamma)
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.l / 2
    }

    pub fn is_homogeneous(&self) -> bool {
        self.inhom.iter().all(|s| s.norm() == 0.0)
    }

    /// ξ± → -ξ±.
    pub fn negated_boundaries(&self) -> Self {
        let mut p = self.clone();
        p.xi_plus = -p.xi_plus;
        p.xi_minus = -p.xi_minus;
        p
    }

    /// Shifted inhomogeneities ξ̄_k = η/2 + s_k for k = 1..m.
    pub fn xi_bar(&self, m: usize) -> Vec<C64> {
        let h = self.eta() / 2.0;
        self.inhom[..m].iter().map(|s| h + s).collect()
    }

    /// Returns the parameters unchanged if every invariant holds.
    pub fn validate(self) -> Result<Self> {
        if self.l < 2 || self.l % 2 != 0 {
            return Err(Error::invalid("L", "L must be even and >= 2"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.gamma < FRAC_PI_2) {
            return Err(Error::invalid("gamma", "gamma out of (0, π/2)"));
        }
        for (name, xi) in [("xi_plus", self.xi_plus), ("xi_minus", self.xi_minus)] {
            if !is_finite(xi) {
                return Err(Error::invalid(name, "non-finite boundary parameter"));
            }
            if !(xi.im > -FRAC_PI_2 && xi.im <= FRAC_PI_2) {
                return Err(Error::invalid(name, "Im ξ out of (-π/2, π/2]"));
            }
            if sh(xi).norm() < POLE_TOL {
                return Err(Error::invalid(name, "ξ ≡ 0 mod iπ makes the boundary field singular"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < self.gamma / 2.0) {
            return Err(Error::invalid("epsilon", "epsilon must lie in (0, γ/2)"));
        }
        if self.inhom.len() != self.l {
            return Err(Error::invalid("inhomogeneities", "need exactly L inhomogeneities"));
        }
        for s in &self.inhom {
            if !is_finite(*s) {
                return Err(Error::invalid("inhomogeneities", "non-finite inhomogeneity"));
            }
            if s.im.abs() >= self.epsilon {
                return Err(Error::invalid("inhomogeneities", "|Im s_j| must be below epsilon"));
            }
        }
        if !self.is_homogeneous() {
            for a in 0..self.l {
                for b in a + 1..self.l {
                    if (self.inhom[a] - self.inhom[b]).norm() < POLE_TOL {
                        return Err(Error::invalid(
                            "inhomogeneities",
                            "coincident inhomogeneities",
                        ));
                    }
                }
            }
        }
        Ok(self)
    }
}

pub fn default_epsilon(gamma: f64) -> f64 {
    0.05f64.min(gamma / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegionLabel::I => "I",
            RegionLabel::II => "II",
            RegionLabel::III => "III",
            RegionLabel::IV => "IV",
            RegionLabel::V => "V",
            RegionLabel::VI => "VI",
            RegionLabel::VII => "VII",
            RegionLabel::VIII => "VIII",
            RegionLabel::IX => "IX",
            RegionLabel::X => "X",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub label: RegionLabel,
    /// True when region X was mapped into I..VI by ξ± → -ξ±.
    pub remapped: bool,
}

/// Band index of Im ξ: 0 for (γ, π/2], 1 for (γ/2, γ], 2 for (0, γ/2], 3 for (-π/2, 0).
fn band(x: f64, gamma: f64) -> Result<usize> {
    for t in [gamma, gamma / 2.0, 0.0] {
        if (x - t).abs() < 1e-12 {
            return Err(Error::DegenerateRegion(format!(
                "Im ξ = {x} sits on the threshold {t}"
            )));
        }
    }
    Ok(if x > gamma {
        0
    } else if x > gamma / 2.0 {
        1
    } else if x > 0.0 {
        2
    } else {
        3
    })
}

fn label_of(big: usize, small: usize) -> RegionLabel {
    use RegionLabel::*;
    match (big, small) {
        (0, 0) => I,
        (0, 1) => II,
        (1, 1) => III,
        (0, 2) => IV,
        (1, 2) => V,
        (2, 2) => VI,
        (0, 3) => VII,
        (1, 3) => VIII,
        (2, 3) => IX,
        _ => X,
    }
}

/// Region table lookup after sorting so that the larger Im ξ picks the column.
pub fn classify_region(params: &ModelParams) -> Result<Region> {
    for xi in [params.xi_plus, params.xi_minus] {
        if xi.re.abs() > 1e-14 {
            return Err(Error::invalid(
                "xi",
                "region classification needs purely imaginary ξ±",
            ));
        }
    }
    let g = params.gamma;
    let (a, b) = (params.xi_plus.im, params.xi_minus.im);
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let label = label_of(band(hi, g)?, band(lo, g)?);
    if label == RegionLabel::X {
        let (hi, lo) = (-lo, -hi);
        let inner = label_of(band(hi, g)?, band(lo, g)?);
        return Ok(Region {
            label: inner,
            remapped: true,
        });
    }
    Ok(Region {
        label,
        remapped: false,
    })
}

/// a(z) = ∏ sh(z - s_l + η).
pub fn vacuum_a(z: C64, p: &ModelParams) -> C64 {
    let eta = p.eta();
    p.inhom.iter().map(|s| sh(z - s + eta)).product()
}

/// d(z) = ∏ sh(z - s_l).
pub fn vacuum_d(z: C64, p: &ModelParams) -> C64 {
    p.inhom.iter().map(|s| sh(z - s)).product()
}

/// Quantum determinant (d_q T)(z) = a(z + η/2) d(z - η/2).
pub fn quantum_det(z: C64, p: &ModelParams) -> C64 {
    let h = p.eta() / 2.0;
    vacuum_a(z + h, p) * vacuum_d(z - h, p)
}

/// φ(z) = ∏ sh(z - s_l) sh(z + s_l).
pub fn phi_shorthand(z: C64, p: &ModelParams) -> C64 {
    p.inhom.iter().map(|s| sh(z - s) * sh(z + s)).product()
}

/// q(z) = ∏ sh(z - λ_l) sh(z + λ_l).
pub fn q_function(z: C64, roots: &[C64]) -> C64 {
    roots.iter().map(|l| sh(z - l) * sh(z + l)).product()
}

/// K_η(z) = (1/i) sh(2η) / (sh(z+η) sh(z-η)).
pub fn kernel_k(z: C64, p: &ModelParams) -> Result<C64> {
    let eta = p.eta();
    let den = sh(z + eta) * sh(z - eta);
    if den.norm() < POLE_TOL {
        return Err(Error::Singular(format!("K_η at z = {z} (pole at ±η)")));
    }
    Ok(-I * sh(2.0 * eta) / den)
}

/// The kernel without the 1/i, sh(2η)/(sh(u+η) sh(u-η)); used by the NLIE and
/// density solvers where the 1/(2πi) measure is carried separately.
#[inline]
pub fn kernel_raw(u: C64, eta: C64) -> C64 {
    sh(2.0 * eta) / (sh(u + eta) * sh(u - eta))
}

/// 𝔟(z) = ∏ sh(z - ξ̄_l) / sh(z - ξ̄_l + η).
pub fn frak_b(z: C64, xi_bar: &[C64], eta: C64) -> C64 {
    xi_bar
        .iter()
        .map(|x| sh(z - x) / sh(z - x + eta))
        .product()
}

/// 1/𝔟'(ξ̄_j) = ∏_l sh(ξ̄_j - ξ̄_l + η) / ∏_{l≠j} sh(ξ̄_j - ξ̄_l).
pub fn inv_frak_b_prime(j: usize, xi_bar: &[C64], eta: C64) -> Result<C64> {
    let xj = xi_bar[j];
    let mut num = C64::new(1.0, 0.0);
    let mut den = C64::new(1.0, 0.0);
    for (l, x) in xi_bar.iter().enumerate() {
        num *= sh(xj - x + eta);
        if l != j {
            let d = sh(xj - x);
            if d.norm() < POLE_TOL {
                return Err(Error::Singular("coincident ξ̄ in 1/𝔟'".into()));
            }
            den *= d;
        }
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelParams {
        ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, 0.9))
    }

    #[test]
    fn validate_accepts_and_rejects() {
        assert!(base().validate().is_ok());
        let mut p = base();
        p.l = 3;
        p.inhom.pop();
        let e = p.validate().unwrap_err().to_string();
        assert!(e.contains("L must be even"), "{e}");
        let mut p = base();
        p.gamma = 1.6;
        let e = p.validate().unwrap_err().to_string();
        assert!(e.contains("gamma out of (0, π/2)"), "{e}");
        let p = base().with_inhom(vec![c64(0.01, 0.0), c64(0.01, 0.0), c64(0.0, 0.0), c64(0.02, 0.0)]);
        assert!(p.validate().is_err());
        let mut p = base();
        p.xi_plus = c64(0.0, 1.7);
        assert!(p.validate().is_err());
    }

    #[test]
    fn regions_from_table() {
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, 1.0));
        assert_eq!(classify_region(&p).unwrap().label, RegionLabel::I);
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, -0.2));
        assert_eq!(classify_region(&p).unwrap().label, RegionLabel::VII);
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, -0.1), c64(0.0, -0.2));
        let r = classify_region(&p).unwrap();
        assert!(r.remapped);
        assert_eq!(r.label, RegionLabel::VI);
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 0.6), c64(0.0, 1.0));
        assert!(matches!(classify_region(&p), Err(Error::DegenerateRegion(_))));
    }

    #[test]
    fn vacuum_zeros() {
        let p = base();
        assert!(vacuum_d(c64(0.0, 0.0), &p).norm() < 1e-15);
        assert!(vacuum_a(-p.eta(), &p).norm() < 1e-15);
    }

    #[test]
    fn lsh_matches_log_on_principal_strip() {
        for w in [c64(0.3, 0.2), c64(-1.2, 0.7), c64(40.0, 0.1), c64(-45.0, -0.4)] {
            let a = lsh(w);
            let b = w.sinh();
            if w.re.abs() < 30.0 {
                assert!((a - b.ln()).norm() < 1e-13);
            }
            assert!((a.exp() / b - 1.0).norm() < 1e-12);
        }
        // continuity across Im w = π
        let a = lsh(c64(0.5, PI - 1e-9));
        let b = lsh(c64(0.5, PI + 1e-9));
        assert!((a - b).norm() < 1e-6);
    }
}

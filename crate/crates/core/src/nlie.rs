//! Contours and the non-linear integral equation for ln 𝔞 on the strip
//! |Im z| < γ/2 - ε.
//!
//! The two arms of C are treated as infinite lines. ln(1+𝔞) tends to
//! constants at both ends of each arm, so a smooth step is subtracted before
//! the trapezoid sum and its convolution with the kernel is added back in
//! closed form. Arm-to-arm convolutions are Toeplitz and go through FFTs.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::bethe::BetheSolution;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, CMat, Toeplitz};
use crate::model::{
    c64, classify_region, coth, kernel_raw, lratio, lsh, sh, wrap_phase, ModelParams, Region,
    RegionLabel, C64, I,
};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Half-width of the extension used for the step-function convolutions.
const STEP_EXT: f64 = 30.0;
/// Offset of the end points used for the closed-form line integrals.
const LINE_EXT: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ContourKind {
    C,
    CPrime,
    Gamma,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Segment {
    pub start: C64,
    pub end: C64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContourQuadrature {
    pub kind: ContourKind,
    pub segments: Vec<Segment>,
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub half_width: f64,
    pub cutoff: f64,
    pub counterclockwise: bool,
    pub spacing: f64,
    /// Points removed from C' by residues (hole-type solutions inside the strip).
    pub excluded: Vec<C64>,
}

impl ContourQuadrature {
    pub fn integrate(&self, f: impl Fn(C64) -> C64) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(*z))
            .sum()
    }

    /// |Σ w_k|, zero for a closed path.
    pub fn closure_error(&self) -> f64 {
        self.weights.iter().sum::<C64>().norm()
    }

    pub fn path_closure(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.end - s.start)
            .sum::<C64>()
            .norm()
    }
}

fn push_segment(q: &mut ContourQuadrature, a: C64, b: C64, h: f64) {
    let len = (b - a).norm();
    let n = ((len / h).ceil() as usize).max(1);
    let step = (b - a) / n as f64;
    for k in 0..=n {
        let w = if k == 0 || k == n { step / 2.0 } else { step };
        q.nodes.push(a + step * k as f64);
        q.weights.push(w);
    }
    q.segments.push(Segment { start: a, end: b });
}

/// Strip rectangle |Im z| = y, |Re z| ≤ cutoff, counterclockwise, trapezoid
/// nodes of spacing h on every side.
fn rectangle(kind: ContourKind, y: f64, cutoff: f64, h: f64) -> ContourQuadrature {
    let mut q = ContourQuadrature {
        kind,
        segments: vec![],
        nodes: vec![],
        weights: vec![],
        half_width: y,
        cutoff,
        counterclockwise: true,
        spacing: h,
        excluded: vec![],
    };
    let (a, b, c, d) = (
        c64(-cutoff, -y),
        c64(cutoff, -y),
        c64(cutoff, y),
        c64(-cutoff, y),
    );
    push_segment(&mut q, a, b, h);
    push_segment(&mut q, b, c, h);
    push_segment(&mut q, c, d, h);
    push_segment(&mut q, d, a, h);
    q
}

/// Boundary poles ±(η/2 - ξ) of 𝔞.
fn boundary_poles(p: &ModelParams) -> Vec<C64> {
    let h = p.eta() / 2.0;
    [p.xi_plus, p.xi_minus]
        .iter()
        .flat_map(|x| [h - x, x - h])
        .collect()
}

/// Builds C, C' (C with in-strip holes excluded) or Γ (circle around η/2).
pub fn build_contour(
    kind: ContourKind,
    p: &ModelParams,
    spacing: f64,
    cutoff: f64,
    holes: &[C64],
) -> Result<ContourQuadrature> {
    let eps = p.epsilon;
    let y = p.gamma / 2.0 - eps;
    match kind {
        ContourKind::C | ContourKind::CPrime => {
            for pole in boundary_poles(p) {
                if (pole.im.abs() - y).abs() < eps / 2.0 && pole.re.abs() <= cutoff {
                    return Err(Error::invalid(
                        "epsilon",
                        format!("boundary pole {pole} lies on the contour arm"),
                    ));
                }
            }
            let mut q = rectangle(kind, y, cutoff, spacing);
            if kind == ContourKind::CPrime {
                for h in holes {
                    if (h.im.abs() - y).abs() < eps / 4.0 {
                        return Err(Error::invalid(
                            "epsilon",
                            format!("hole {h} lies on the contour arm"),
                        ));
                    }
                    if h.im.abs() < y {
                        q.excluded.push(*h);
                        q.excluded.push(-*h);
                    }
                }
            }
            Ok(q)
        }
        ContourKind::Gamma => {
            let center = p.eta() / 2.0;
            let smax = p.inhom.iter().map(|s| s.norm()).fold(0.0, f64::max);
            let r = eps / 2.0;
            if smax >= r {
                return Err(Error::invalid(
                    "inhomogeneities",
                    "Γ cannot enclose all ξ̄ while staying disjoint from C'",
                ));
            }
            let n = 64;
            let mut q = ContourQuadrature {
                kind,
                segments: vec![],
                nodes: vec![],
                weights: vec![],
                half_width: y,
                cutoff: r,
                counterclockwise: true,
                spacing: 2.0 * PI * r / n as f64,
                excluded: vec![],
            };
            for k in 0..n {
                let t = 2.0 * PI * k as f64 / n as f64;
                let e = C64::from_polar(1.0, t);
                q.nodes.push(center + e * r);
                q.weights.push(I * e * r * (2.0 * PI / n as f64));
                let t2 = 2.0 * PI * (k + 1) as f64 / n as f64;
                q.segments.push(Segment {
                    start: center + e * r,
                    end: center + C64::from_polar(r, t2),
                });
            }
            Ok(q)
        }
    }
}

/// Which extra driving terms enter: hole positions and the boundary
/// parameters whose pole η/2 - ξ sits inside the strip.
#[derive(Clone, Debug, Serialize)]
pub struct DrivingSpec {
    pub holes: Vec<C64>,
    pub pole_xi: Vec<C64>,
}

/// Row of the driving-term table: (hole, pole term for the smaller boundary
/// parameter, pole term for the larger one).
pub fn table_row(label: RegionLabel) -> (bool, bool, bool) {
    use RegionLabel::*;
    match label {
        I => (true, false, false),
        II => (true, true, false),
        III => (true, true, true),
        IV => (true, true, false),
        V => (true, true, true),
        VI => (true, true, true),
        VII => (false, false, false),
        VIII | IX => (false, false, true),
        X => (false, false, false),
    }
}

/// A real hole exists inside the strip only if Im ξ⁺ + Im ξ⁻ < π/2 (both positive).
pub fn real_hole_expected(p: &ModelParams) -> bool {
    let (a, b) = (p.xi_plus.im, p.xi_minus.im);
    a > 0.0 && b > 0.0 && a + b < FRAC_PI_2
}

impl DrivingSpec {
    pub fn for_region(region: &Region, p: &ModelParams, holes: &[C64]) -> Result<Self> {
        if region.remapped || region.label == RegionLabel::X {
            return Err(Error::invalid(
                "xi",
                "region X: solve the problem with negated boundary parameters",
            ));
        }
        let (hole, small, large) = table_row(region.label);
        let (lo, hi) = if p.xi_plus.im >= p.xi_minus.im {
            (p.xi_minus, p.xi_plus)
        } else {
            (p.xi_plus, p.xi_minus)
        };
        let mut pole_xi = vec![];
        if small {
            pole_xi.push(lo);
        }
        if large {
            pole_xi.push(hi);
        }
        let needs_hole = hole && real_hole_expected(p);
        if needs_hole && holes.is_empty() {
            return Err(Error::invalid(
                "hole_positions",
                format!("region {} needs a hole position", region.label),
            ));
        }
        Ok(DrivingSpec {
            holes: if hole { holes.to_vec() } else { vec![] },
            pole_xi,
        })
    }
}

/// Driving term of the equation for ln 𝔞, including the region-dependent extras.
pub fn driving_value(z: C64, spec: &DrivingSpec, p: &ModelParams) -> C64 {
    let eta = p.eta();
    let h = eta / 2.0;
    let lf = p.l as f64;
    let mut d = 4.0 * eta + lsh(2.0 * z - eta) + lratio(z, -eta, ZERO)
        - lsh(2.0 * z + eta)
        - lratio(z, eta, ZERO);
    d += -2.0 * eta
        + lratio(z, -(p.xi_plus - h), p.xi_plus - h)
        + lratio(z, -(p.xi_minus - h), p.xi_minus - h);
    d += 2.0 * eta * lf;
    for s in &p.inhom {
        d += lratio(z, -h + s, h + s) + lratio(z, -h - s, h - s);
    }
    for chi in &spec.holes {
        d += 4.0 * eta + lratio(z, chi - eta, chi + eta) + lratio(z, -chi - eta, -chi + eta);
    }
    for xi in &spec.pole_xi {
        d += -2.0 * eta + lratio(z, h + xi, -3.0 * h + xi);
    }
    d
}

/// Spec-facing form: extras chosen from the region's table row.
pub fn driving_terms(region: &Region, z: C64, holes: &[C64], p: &ModelParams) -> Result<C64> {
    let spec = DrivingSpec::for_region(region, p, holes)?;
    Ok(driving_value(z, &spec, p))
}

pub fn driving_derivative(z: C64, spec: &DrivingSpec, p: &ModelParams) -> C64 {
    let eta = p.eta();
    let h = eta / 2.0;
    let dr = |a: C64, b: C64| coth(z + a) - coth(z + b);
    let mut d = 2.0 * coth(2.0 * z - eta) + dr(-eta, ZERO) - 2.0 * coth(2.0 * z + eta) - dr(eta, ZERO);
    d += dr(-(p.xi_plus - h), p.xi_plus - h) + dr(-(p.xi_minus - h), p.xi_minus - h);
    for s in &p.inhom {
        d += dr(-h + s, h + s) + dr(-h - s, h - s);
    }
    for chi in &spec.holes {
        d += dr(chi - eta, chi + eta) + dr(-chi - eta, -chi + eta);
    }
    for xi in &spec.pole_xi {
        d += dr(h + xi, -3.0 * h + xi);
    }
    d
}

fn kernel_d(u: C64, eta: C64) -> C64 {
    -kernel_raw(u, eta) * (coth(u + eta) + coth(u - eta))
}

fn sigma(x: f64) -> f64 {
    0.5 * (1.0 + x.tanh())
}


/// ln(1 + e^u), principal branch, safe for large |Re u|.
pub fn log1p_exp(u: C64) -> C64 {
    if u.re > 30.0 {
        let v = u + (ONE + (-u).exp()).ln();
        c64(v.re, wrap_phase(v.im))
    } else {
        (ONE + u.exp()).ln()
    }
}

/// Convolution data for one (target line, source line) pair; the targets sit
/// i·delta above the sources.
struct LineOp {
    toep: Toeplitz,
    /// h Σ K(z_i - ω) σ(Re ω) over the extended source grid.
    step: Vec<C64>,
    /// ∫ K(z_i - ω) dω over the whole source line.
    full: Vec<C64>,
}

struct ArmGrid {
    h: f64,
    y: f64,
    x: Vec<f64>,
}

impl ArmGrid {
    fn n(&self) -> usize {
        self.x.len()
    }

    fn ext(&self) -> (Vec<f64>, usize) {
        let m = (STEP_EXT / self.h).ceil() as usize;
        let n = self.n() as i64;
        let half = (n - 1) / 2;
        let xe = (-(half + m as i64)..=(half + m as i64))
            .map(|k| k as f64 * self.h)
            .collect();
        (xe, m)
    }

    fn line_op(&self, delta: f64, eta: C64, deriv: bool) -> LineOp {
        self.line_op_shifted(delta, 0.0, eta, deriv)
    }

    /// Targets at x_i + shift + i·delta relative to the source line.
    fn line_op_shifted(&self, delta: f64, shift: f64, eta: C64, deriv: bool) -> LineOp {
        let n = self.n();
        let h = self.h;
        let kern = |u: C64| if deriv { kernel_d(u, eta) } else { kernel_raw(u, eta) };
        let t: Vec<C64> = (0..2 * n - 1)
            .map(|j| kern(c64(h * (j as f64 - (n - 1) as f64) + shift, delta)))
            .collect();
        let toep = Toeplitz::new(&t);
        let (xe, m) = self.ext();
        let ne = xe.len();
        let te: Vec<C64> = (0..2 * ne - 1)
            .map(|j| kern(c64(h * (j as f64 - (ne - 1) as f64) + shift, delta)))
            .collect();
        let sig: Vec<C64> = xe.iter().map(|x| c64(sigma(*x), 0.0)).collect();
        let conv = Toeplitz::new(&te).apply(&sig);
        let step = conv[m..m + n].iter().map(|v| v * h).collect();
        let full = if deriv {
            vec![ZERO; n]
        } else {
            let (x0, x1) = (self.x[0], self.x[n - 1]);
            self.x
                .iter()
                .map(|xi| {
                    let va = c64(xi + shift - (x0 - LINE_EXT), delta);
                    let vb = c64(xi + shift - (x1 + LINE_EXT), delta);
                    line_antiderivative(va, eta) - line_antiderivative(vb, eta)
                })
                .collect()
        };
        LineOp { toep, step, full }
    }
}

/// P(v) with P' = K: ∫_a^b K(z - ω) dω = P(z - a) - P(z - b).
fn line_antiderivative(v: C64, eta: C64) -> C64 {
    lsh(v - eta) - lsh(v + eta)
}

/// ln(1+𝔞) on both arms from ln 𝔞 on the upper arm, with continuous branches.
fn arm_logs(u: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let n = u.len();
    let mut fu: Vec<C64> = u.iter().map(|v| log1p_exp(*v)).collect();
    // unwrap from the right end, where the principal value is kept
    for k in (0..n - 1).rev() {
        let d = fu[k].im - fu[k + 1].im;
        let shift = 2.0 * PI * (d / (2.0 * PI)).round();
        fu[k].im -= shift;
    }
    let mut fl: Vec<C64> = (0..n).map(|j| fu[n - 1 - j] - u[n - 1 - j]).collect();
    let shift = 2.0 * PI * ((fu[n - 1].im - fl[n - 1].im) / (2.0 * PI)).round();
    for v in fl.iter_mut() {
        v.im += shift;
    }
    (fu, fl)
}

#[derive(Clone, Debug, Serialize)]
pub struct NlieOptions {
    /// Node spacing; default min(ε, nearest singularity distance)/5.
    pub spacing: Option<f64>,
    /// Real-axis truncation; default chosen from the decay of the driving term.
    pub cutoff: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for NlieOptions {
    fn default() -> Self {
        NlieOptions {
            spacing: None,
            cutoff: None,
            tol: 1e-13,
            max_iter: 500,
            damping: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NlieSolution {
    pub contour: ContourQuadrature,
    /// ln 𝔞 at the contour nodes.
    pub log_a: Vec<C64>,
    pub hole_positions: Vec<C64>,
    pub region: Region,
    pub iterations: usize,
    pub final_update_norm: f64,
    pub driving: DrivingSpec,
    pub params: ModelParams,
    /// Abscissae shared by both arms (left to right).
    pub arm_x: Vec<f64>,
    /// ln 𝔞 on the upper and lower arm, left to right.
    pub upper: Vec<C64>,
    pub lower: Vec<C64>,
    /// ln(1+𝔞) on the arms with continuous branches.
    pub f_upper: Vec<C64>,
    pub f_lower: Vec<C64>,
}

struct Engine {
    grid: ArmGrid,
    eta: C64,
    uu: LineOp,
    ul: LineOp,
}

impl Engine {
    fn new(grid: ArmGrid, eta: C64) -> Self {
        let y = grid.y;
        let uu = grid.line_op(0.0, eta, false);
        let ul = grid.line_op(2.0 * y, eta, false);
        Engine { grid, eta, uu, ul }
    }

    fn sx(&self) -> Vec<f64> {
        self.grid.x.iter().map(|x| sigma(*x)).collect()
    }

    /// The integral term at the upper-arm nodes.
    fn integral_upper(&self, fu: &[C64], fl: &[C64]) -> Vec<C64> {
        integral_with(&self.ul, &self.uu, self.grid.h, &self.sx(), fu, fl)
    }
}

fn integral_with(
    op_lower: &LineOp,
    op_upper: &LineOp,
    h: f64,
    sx: &[f64],
    fu: &[C64],
    fl: &[C64],
) -> Vec<C64> {
    let n = fu.len();
    let (fl0, fl1, fu0, fu1) = (fl[0], fl[n - 1], fu[0], fu[n - 1]);
    let rl: Vec<C64> = (0..n).map(|k| fl[k] - fl0 - (fl1 - fl0) * sx[k]).collect();
    let ru: Vec<C64> = (0..n).map(|k| fu[k] - fu0 - (fu1 - fu0) * sx[k]).collect();
    let a = op_lower.toep.apply(&rl);
    let b = op_upper.toep.apply(&ru);
    let tpi = 2.0 * PI * I;
    (0..n)
        .map(|i| {
            (h * (a[i] - b[i]) + fl0 * op_lower.full[i] + (fl1 - fl0) * op_lower.step[i]
                - fu0 * op_upper.full[i]
                - (fu1 - fu0) * op_upper.step[i])
                / tpi
        })
        .collect()
}

struct FixedState {
    u: Vec<C64>,
    iters: usize,
    upd: f64,
}

/// Anderson-accelerated fixed-point iteration u = D - I[u].
fn solve_fixed(
    eng: &Engine,
    drive: &[C64],
    u0: Option<&[C64]>,
    opts: &NlieOptions,
) -> Result<FixedState> {
    const DEPTH: usize = 6;
    let n = eng.grid.n();
    let mut u: Vec<C64> = match u0 {
        Some(v) => v.to_vec(),
        None => drive.to_vec(),
    };
    let beta = opts.damping;
    let mut hist_u: Vec<Vec<C64>> = vec![];
    let mut hist_r: Vec<Vec<C64>> = vec![];
    let mut best = f64::INFINITY;
    let mut best_u: Option<Vec<C64>> = None;
    let mut stalled = 0;
    let mut last = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (fu, fl) = arm_logs(&u);
        let integ = eng.integral_upper(&fu, &fl);
        let r: Vec<C64> = (0..n).map(|i| drive[i] - integ[i] - u[i]).collect();
        let upd = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        last = upd;
        if !upd.is_finite() {
            return Err(Error::NoConvergence {
                what: "NLIE fixed point (non-finite update)",
                iters: it,
                last: upd,
            });
        }
        if upd < opts.tol {
            let u: Vec<C64> = (0..n).map(|i| u[i] + r[i]).collect();
            return Ok(FixedState {
                u,
                iters: it + 1,
                upd,
            });
        }
        if upd < best {
            best = upd;
            best_u = Some((0..n).map(|i| u[i] + r[i]).collect());
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled > 60 && best < 100.0 * opts.tol {
            // round-off floor: return the best iterate
            let u = best_u.take().unwrap_or(u);
            return Ok(FixedState {
                u,
                iters: it + 1,
                upd: best,
            });
        }
        if upd > 1e4 * best.max(opts.tol) || stalled > 60 {
            return Err(Error::NoConvergence {
                what: "NLIE fixed point (diverging)",
                iters: it,
                last: upd,
            });
        }
        if upd > 10.0 * best {
            // the extrapolation went astray; restart the history
            hist_u.clear();
            hist_r.clear();
        }
        hist_u.push(u.clone());
        hist_r.push(r.clone());
        if hist_u.len() > DEPTH + 1 {
            hist_u.remove(0);
            hist_r.remove(0);
        }
        let m = hist_u.len() - 1;
        let mut next: Vec<C64> = (0..n).map(|i| u[i] + r[i] * beta).collect();
        if m > 0 {
            let dr = CMat::from_fn(n, m, |i, j| hist_r[j + 1][i] - hist_r[j][i]);
            let g = lstsq(&dr, &r, 1e-12);
            for j in 0..m {
                for i in 0..n {
                    let du = hist_u[j + 1][i] - hist_u[j][i];
                    let d = hist_r[j + 1][i] - hist_r[j][i];
                    next[i] -= (du + d * beta) * g[j];
                }
            }
        }
        u = next;
    }
    Err(Error::NoConvergence {
        what: "NLIE fixed point",
        iters: opts.max_iter,
        last,
    })
}

/// The integral part u - D is smooth; a jump of more than π/2 between
/// neighbours means ln(1+𝔞) picked the wrong branch somewhere.
fn branch_jump(u: &[C64], drive: &[C64]) -> bool {
    (1..u.len()).any(|k| ((u[k] - drive[k]) - (u[k - 1] - drive[k - 1])).norm() > FRAC_PI_2)
}

/// Evaluation of the integral term (or its z-derivative) at an arbitrary point
/// of the strip by direct sums.
fn integral_at(
    z: C64,
    x: &[f64],
    h: f64,
    y: f64,
    eta: C64,
    fu: &[C64],
    fl: &[C64],
    deriv: bool,
) -> C64 {
    let n = x.len();
    let kern = |u: C64| if deriv { kernel_d(u, eta) } else { kernel_raw(u, eta) };
    let (fl0, fl1, fu0, fu1) = (fl[0], fl[n - 1], fu[0], fu[n - 1]);
    let mut a = ZERO;
    let mut b = ZERO;
    for k in 0..n {
        let s = sigma(x[k]);
        a += kern(z - c64(x[k], -y)) * (fl[k] - fl0 - (fl1 - fl0) * s);
        b += kern(z - c64(x[k], y)) * (fu[k] - fu0 - (fu1 - fu0) * s);
    }
    let m = (STEP_EXT / h).ceil() as i64;
    let half = (n as i64 - 1) / 2;
    let mut pl = ZERO;
    let mut pu = ZERO;
    for k in -(half + m)..=(half + m) {
        let xe = k as f64 * h;
        let s = sigma(xe);
        pl += kern(z - c64(xe, -y)) * s;
        pu += kern(z - c64(xe, y)) * s;
    }
    pl *= h;
    pu *= h;
    let (il, iu) = if deriv {
        (ZERO, ZERO)
    } else {
        let (x0, x1) = (x[0], x[n - 1]);
        (
            line_antiderivative(z - c64(x0 - LINE_EXT, -y), eta)
                - line_antiderivative(z - c64(x1 + LINE_EXT, -y), eta),
            line_antiderivative(z - c64(x0 - LINE_EXT, y), eta)
                - line_antiderivative(z - c64(x1 + LINE_EXT, y), eta),
        )
    };
    (h * (a - b) + fl0 * il + (fl1 - fl0) * pl - fu0 * iu - (fu1 - fu0) * pu) / (2.0 * PI * I)
}

/// Cutoff such that the driving term has flattened to machine precision at both ends.
fn choose_cutoff(spec: &DrivingSpec, p: &ModelParams, y: f64) -> f64 {
    let mut x = 16.0;
    while x < 40.0 {
        let d1 = driving_derivative(c64(x, y), spec, p).norm();
        let d2 = driving_derivative(c64(-x, y), spec, p).norm();
        if d1.max(d2) < 1e-15 {
            break;
        }
        x += 2.0;
    }
    x
}

/// Nearest distance from a singularity of ln(1+𝔞) to the arms.
fn singular_distance(p: &ModelParams, y: f64, hint: Option<&BetheSolution>) -> f64 {
    let mut pts = boundary_poles(p);
    if let Some(s) = hint {
        for z in s.roots.iter().chain(&s.holes) {
            pts.push(*z);
            pts.push(-*z);
        }
    }
    pts.iter()
        .map(|z| (z.im.abs() - y).abs())
        .fold(p.epsilon, f64::min)
}

fn make_engine(p: &ModelParams, h: f64, cutoff: f64) -> Engine {
    let y = p.gamma / 2.0 - p.epsilon;
    let n = (cutoff / h).ceil() as i64;
    let x = (-n..=n).map(|k| k as f64 * h).collect();
    Engine::new(ArmGrid { h, y, x }, p.eta())
}

fn drive_on_upper(eng: &Engine, spec: &DrivingSpec, p: &ModelParams) -> Vec<C64> {
    eng.grid
        .x
        .iter()
        .map(|x| driving_value(c64(*x, eng.grid.y), spec, p))
        .collect()
}

/// Im ln 𝔞 at real z from a converged fixed-χ solution.
fn log_a_at(eng: &Engine, spec: &DrivingSpec, p: &ModelParams, u: &[C64], z: C64) -> C64 {
    let (fu, fl) = arm_logs(u);
    driving_value(z, spec, p)
        - integral_at(z, &eng.grid.x, eng.grid.h, eng.grid.y, eng.eta, &fu, &fl, false)
}

/// Solves the NLIE for the lowest zero-magnetization state. A Bethe solution,
/// when given, supplies the hole estimate and the spacing estimate; otherwise
/// the real hole is bracketed along the real axis from below.
pub fn solve_nlie(
    p: &ModelParams,
    opts: &NlieOptions,
    hint: Option<&BetheSolution>,
) -> Result<NlieSolution> {
    let region = classify_region(p)?;
    let y = p.gamma / 2.0 - p.epsilon;
    if p.inhom.iter().any(|s| s.im.abs() >= p.epsilon) {
        return Err(Error::invalid(
            "inhomogeneities",
            "|Im s_j| must stay below ε",
        ));
    }
    if let Some(s) = hint {
        if let Some(r) = s.roots.iter().find(|r| r.im.abs() >= y) {
            return Err(Error::invalid(
                "epsilon",
                format!("Bethe root {r} is not enclosed by the contour"),
            ));
        }
    }
    let (row_hole, _, _) = table_row(region.label);
    let want_hole = row_hole && real_hole_expected(p);
    let mut holes: Vec<C64> = match hint {
        Some(s) => s
            .holes
            .iter()
            .copied()
            .filter(|z| z.im.abs() < y)
            .collect(),
        None => vec![],
    };
    if hint.is_some() && want_hole != holes.iter().any(|z| z.im.abs() < 1e-8) {
        return Err(Error::Consistency(format!(
            "in-strip holes {holes:?} disagree with the region-{} expectation",
            region.label
        )));
    }
    let real_idx = holes.iter().position(|z| z.im.abs() < 1e-8);
    let mut h = opts
        .spacing
        .unwrap_or_else(|| singular_distance(p, y, hint) / 5.0);
    let mut restarts = 0;
    loop {
        // placeholder hole for the cutoff choice when none is known yet
        let mut probe = DrivingSpec::for_region(&region, p, &holes).or_else(|_| {
            DrivingSpec::for_region(&region, p, &[c64(3.0, 0.0)])
        })?;
        if want_hole && holes.is_empty() {
            probe.holes = vec![c64(3.0, 0.0)];
        }
        let cutoff = opts.cutoff.unwrap_or_else(|| choose_cutoff(&probe, p, y));
        let eng = make_engine(p, h, cutoff);
        let result = if want_hole {
            solve_with_hole(&eng, &region, p, opts, &mut holes, real_idx)
        } else {
            let spec = DrivingSpec::for_region(&region, p, &holes)?;
            let d = drive_on_upper(&eng, &spec, p);
            solve_fixed(&eng, &d, None, opts).map(|st| (spec, st))
        };
        let (spec, st) = result?;
        let jump = branch_jump(&st.u, &drive_on_upper(&eng, &spec, p));
        if jump && restarts < 2 {
            h /= 2.0;
            restarts += 1;
            continue;
        }
        if jump {
            return Err(Error::Consistency(
                "log-branch jump between adjacent nodes persists after mesh refinement".into(),
            ));
        }
        return finish(eng, spec, st, p, region, cutoff);
    }
}

fn solve_with_hole(
    eng: &Engine,
    region: &Region,
    p: &ModelParams,
    opts: &NlieOptions,
    holes: &mut Vec<C64>,
    real_idx: Option<usize>,
) -> Result<(DrivingSpec, FixedState)> {
    let idx = match real_idx {
        Some(i) => i,
        None => {
            holes.push(c64(0.0, 0.0));
            holes.len() - 1
        }
    };
    let mut warm: Option<Vec<C64>> = None;
    // g(χ) = Im ln 𝔞(χ) - target; None when the fixed-χ solve fails
    let eval = |chi: f64, holes: &mut Vec<C64>, warm: &mut Option<Vec<C64>>| {
        holes[idx] = c64(chi, 0.0);
        let spec = DrivingSpec::for_region(region, p, holes).ok()?;
        let d = drive_on_upper(eng, &spec, p);
        let st = solve_fixed(eng, &d, warm.as_deref(), opts).ok()?;
        let la = log_a_at(eng, &spec, p, &st.u, c64(chi, 0.0));
        *warm = Some(st.u.clone());
        Some((la, spec, st))
    };
    let odd = |v: f64| PI * (2.0 * ((v / PI - 1.0) / 2.0).round() + 1.0);
    const GTOL: f64 = 1e-12;
    let fail = |last: f64, what: &'static str| Error::NoConvergence {
        what,
        iters: 0,
        last,
    };
    let (target, start) = if real_idx.is_some() {
        let chi0 = holes[idx].re;
        let (la, _, _) = eval(chi0, holes, &mut warm).ok_or(fail(chi0, "NLIE at the hole estimate"))?;
        (odd(la.im), chi0)
    } else {
        // largest odd multiple of π below the asymptote -2(Im ξ⁺ + Im ξ⁻)
        let asym = -2.0 * (p.xi_plus.im + p.xi_minus.im);
        let mut k = ((asym / PI - 1.0) / 2.0).floor();
        if PI * (2.0 * k + 1.0) >= asym {
            k -= 1.0;
        }
        (PI * (2.0 * k + 1.0), 0.5)
    };
    let (la, spec, st) = eval(start, holes, &mut warm).ok_or(fail(start, "NLIE at the initial hole bracket"))?;
    let mut lo = start;
    let mut g_lo = la.im - target;
    let mut best = (spec, st, g_lo.abs());
    let s0 = g_lo.signum();
    // (x, Some(g)) past the root, or (x, None) where the fixed-χ solve failed
    let mut hi: Option<(f64, Option<f64>)> = None;
    if real_idx.is_some() && best.2 >= GTOL {
        // secant from the estimate
        let (mut xa, mut ga) = (lo, g_lo);
        let mut xb = lo * (1.0 + 1e-7) + 1e-12;
        for _ in 0..30 {
            let Some((la, spec, st)) = eval(xb, holes, &mut warm) else {
                break;
            };
            let gb = la.im - target;
            if gb.abs() < best.2 {
                best = (spec, st, gb.abs());
            }
            if best.2 < GTOL {
                break;
            }
            if gb.signum() != ga.signum() {
                let (l, gl, h, gh) = if gb.signum() == s0 {
                    (xb, gb, xa, ga)
                } else {
                    (xa, ga, xb, gb)
                };
                lo = l;
                g_lo = gl;
                hi = Some((h, Some(gh)));
                break;
            }
            let mut t = xb - gb * (xb - xa) / (gb - ga);
            t = t.clamp(xb - 0.25, xb + 0.25).max(1e-6);
            xa = xb;
            ga = gb;
            xb = t;
            if gb.signum() == s0 && xa > lo {
                lo = xa;
                g_lo = ga;
            }
        }
    }
    if best.2 < GTOL {
        holes.clone_from(&best.0.holes);
        return Ok((best.0, best.1));
    }
    if hi.is_none() {
        // march upward until the sign changes or the fixed-χ solve fails
        let mut t = lo;
        for _ in 0..200 {
            t += 0.25;
            match eval(t, holes, &mut warm) {
                Some((la, spec, st)) => {
                    let g = la.im - target;
                    if g.abs() < best.2 {
                        best = (spec, st, g.abs());
                    }
                    if g.signum() != s0 {
                        hi = Some((t, Some(g)));
                        break;
                    }
                    lo = t;
                    g_lo = g;
                }
                None => {
                    hi = Some((t, None));
                    break;
                }
            }
        }
    }
    let Some((mut hi_x, mut hi_g)) = hi else {
        return Err(fail(lo, "hole bracket"));
    };
    // Illinois regula falsi; bisection while the upper end has no value
    let mut retained: i32 = 0;
    for _ in 0..200 {
        if (hi_x - lo).abs() < 1e-14 * (1.0 + lo.abs()) || best.2 < GTOL {
            break;
        }
        let t = match hi_g {
            Some(gh) => {
                let t = (lo * gh - hi_x * g_lo) / (gh - g_lo);
                if t > lo && t < hi_x {
                    t
                } else {
                    0.5 * (lo + hi_x)
                }
            }
            None => 0.5 * (lo + hi_x),
        };
        match eval(t, holes, &mut warm) {
            Some((la, spec, st)) => {
                let g = la.im - target;
                if g.abs() < best.2 {
                    best = (spec, st, g.abs());
                }
                if g.signum() == s0 {
                    lo = t;
                    g_lo = g;
                    if retained == 1 {
                        hi_g = hi_g.map(|v| v / 2.0);
                    }
                    retained = 1;
                } else {
                    hi_x = t;
                    hi_g = Some(g);
                    if retained == -1 {
                        g_lo /= 2.0;
                    }
                    retained = -1;
                }
            }
            None => {
                hi_x = t;
                hi_g = None;
            }
        }
    }
    if best.2 > 1e-9 {
        return Err(Error::NoConvergence {
            what: "hole position",
            iters: 200,
            last: best.2,
        });
    }
    holes.clone_from(&best.0.holes);
    Ok((best.0, best.1))
}

fn finish(
    eng: Engine,
    spec: DrivingSpec,
    st: FixedState,
    p: &ModelParams,
    region: Region,
    cutoff: f64,
) -> Result<NlieSolution> {
    let (fu, fl) = arm_logs(&st.u);
    let n = eng.grid.n();
    for v in &st.u {
        if (ONE + v.exp()).norm() < 1e-12 {
            return Err(Error::Singular("1 + 𝔞 vanishes at a contour node".into()));
        }
    }
    // lower arm from the same representation
    let y = eng.grid.y;
    let lu = eng.grid.line_op(-2.0 * y, eng.eta, false);
    let sx = eng.sx();
    let integ_l = integral_with(&eng.uu, &lu, eng.grid.h, &sx, &fu, &fl);
    let lower: Vec<C64> = (0..n)
        .map(|i| driving_value(c64(eng.grid.x[i], -y), &spec, p) - integ_l[i])
        .collect();
    let contour = build_contour(ContourKind::C, p, eng.grid.h, cutoff, &spec.holes)?;
    let mut sol = NlieSolution {
        contour,
        log_a: vec![],
        hole_positions: spec.holes.clone(),
        region,
        iterations: st.iters,
        final_update_norm: st.upd,
        driving: spec,
        params: p.clone(),
        arm_x: eng.grid.x.clone(),
        upper: st.u,
        lower,
        f_upper: fu,
        f_lower: fl,
    };
    sol.log_a = sol
        .contour
        .nodes
        .iter()
        .map(|z| node_value(&sol, *z))
        .collect();
    Ok(sol)
}

fn node_value(sol: &NlieSolution, z: C64) -> C64 {
    let h = sol.spacing();
    let y = sol.half_width();
    let k = ((z.re - sol.arm_x[0]) / h).round();
    if (z.re - (sol.arm_x[0] + k * h)).abs() < 1e-12 && k >= 0.0 && (k as usize) < sol.arm_x.len()
    {
        if (z.im - y).abs() < 1e-14 {
            return sol.upper[k as usize];
        }
        if (z.im + y).abs() < 1e-14 {
            return sol.lower[k as usize];
        }
    }
    eval_log_aux(z, sol).unwrap_or(c64(f64::NAN, f64::NAN))
}

impl NlieSolution {
    pub fn spacing(&self) -> f64 {
        self.contour.spacing
    }

    pub fn half_width(&self) -> f64 {
        self.contour.half_width
    }

    /// Nodes of the upper and lower arms, left to right.
    pub fn upper_nodes(&self) -> Vec<C64> {
        let y = self.half_width();
        self.arm_x.iter().map(|x| c64(*x, y)).collect()
    }

    pub fn lower_nodes(&self) -> Vec<C64> {
        let y = self.half_width();
        self.arm_x.iter().map(|x| c64(*x, -y)).collect()
    }

    /// max |𝔞(z) 𝔞(-z) - 1| over mirror node pairs of the two arms.
    pub fn mirror_defect(&self) -> f64 {
        let n = self.arm_x.len();
        (0..n)
            .map(|k| ((self.upper[k] + self.lower[n - 1 - k]).exp() - ONE).norm())
            .fold(0.0, f64::max)
    }

    /// ln 𝔞 at x_k + shift on the upper and lower arm, all k at once.
    pub fn log_a_shifted(&self, shift: f64) -> (Vec<C64>, Vec<C64>) {
        let p = &self.params;
        let eta = p.eta();
        let y = self.half_width();
        let grid = ArmGrid {
            h: self.spacing(),
            y,
            x: self.arm_x.clone(),
        };
        let sx: Vec<f64> = grid.x.iter().map(|x| sigma(*x)).collect();
        let uu = grid.line_op_shifted(0.0, shift, eta, false);
        let ul = grid.line_op_shifted(2.0 * y, shift, eta, false);
        let lu = grid.line_op_shifted(-2.0 * y, shift, eta, false);
        let iu = integral_with(&ul, &uu, grid.h, &sx, &self.f_upper, &self.f_lower);
        let il = integral_with(&uu, &lu, grid.h, &sx, &self.f_upper, &self.f_lower);
        let n = grid.n();
        let up = (0..n)
            .map(|i| driving_value(c64(grid.x[i] + shift, y), &self.driving, p) - iu[i])
            .collect();
        let lo = (0..n)
            .map(|i| driving_value(c64(grid.x[i] + shift, -y), &self.driving, p) - il[i])
            .collect();
        (up, lo)
    }

    /// d ln 𝔞/dz at the upper and lower arm nodes (left to right), by
    /// differentiating the integral representation.
    pub fn dlog_on_arms(&self) -> (Vec<C64>, Vec<C64>) {
        let p = &self.params;
        let eta = p.eta();
        let y = self.half_width();
        let grid = ArmGrid {
            h: self.spacing(),
            y,
            x: self.arm_x.clone(),
        };
        let sx: Vec<f64> = grid.x.iter().map(|x| sigma(*x)).collect();
        let d_uu = grid.line_op(0.0, eta, true);
        let d_ul = grid.line_op(2.0 * y, eta, true);
        let d_lu = grid.line_op(-2.0 * y, eta, true);
        let iu = integral_with_deriv(&d_ul, &d_uu, grid.h, &sx, &self.f_upper, &self.f_lower);
        let il = integral_with_deriv(&d_uu, &d_lu, grid.h, &sx, &self.f_upper, &self.f_lower);
        let up = (0..grid.n())
            .map(|i| driving_derivative(c64(grid.x[i], y), &self.driving, p) - iu[i])
            .collect();
        let lo = (0..grid.n())
            .map(|i| driving_derivative(c64(grid.x[i], -y), &self.driving, p) - il[i])
            .collect();
        (up, lo)
    }
}

fn integral_with_deriv(
    op_lower: &LineOp,
    op_upper: &LineOp,
    h: f64,
    sx: &[f64],
    fu: &[C64],
    fl: &[C64],
) -> Vec<C64> {
    // the full-line integral of K' vanishes, so the generic routine applies with full = 0
    integral_with(op_lower, op_upper, h, sx, fu, fl)
}

fn check_strip(z: C64, sol: &NlieSolution) -> Result<()> {
    if z.im.abs() > sol.half_width() + 1e-12 {
        return Err(Error::invalid(
            "z",
            format!("{z} lies outside the strip |Im z| ≤ γ/2 - ε"),
        ));
    }
    Ok(())
}

/// ln 𝔞(z) from the integral representation, valid for |Im z| ≤ γ/2 - ε.
pub fn eval_log_aux(z: C64, sol: &NlieSolution) -> Result<C64> {
    check_strip(z, sol)?;
    let p = &sol.params;
    Ok(driving_value(z, &sol.driving, p)
        - integral_at(
            z,
            &sol.arm_x,
            sol.spacing(),
            sol.half_width(),
            p.eta(),
            &sol.f_upper,
            &sol.f_lower,
            false,
        ))
}

pub fn eval_aux_from_nlie(z: C64, sol: &NlieSolution) -> Result<C64> {
    Ok(eval_log_aux(z, sol)?.exp())
}

/// d ln 𝔞/dz at a strip point.
pub fn eval_dlog_aux(z: C64, sol: &NlieSolution) -> Result<C64> {
    check_strip(z, sol)?;
    let p = &sol.params;
    Ok(driving_derivative(z, &sol.driving, p)
        - integral_at(
            z,
            &sol.arm_x,
            sol.spacing(),
            sol.half_width(),
            p.eta(),
            &sol.f_upper,
            &sol.f_lower,
            true,
        ))
}

/// Large-L leading behaviour 2L sh(λ - iγ/2)/sh(λ + iγ/2) on the upper arm.
pub fn asymptotic_reference(z: C64, p: &ModelParams) -> C64 {
    let h = c64(0.0, p.gamma / 2.0);
    2.0 * p.l as f64 * sh(z - h) / sh(z + h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_is_closed() {
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, 0.9));
        let q = build_contour(ContourKind::C, &p, 0.01, 12.0, &[]).unwrap();
        assert!(q.closure_error() < 1e-14);
        assert!(q.path_closure() < 1e-14);
    }

    #[test]
    fn table_rows() {
        assert_eq!(table_row(RegionLabel::VII), (false, false, false));
        assert_eq!(table_row(RegionLabel::I), (true, false, false));
        assert_eq!(table_row(RegionLabel::V), (true, true, true));
    }

    #[test]
    fn log1p_exp_far_out() {
        let u = c64(80.0, 0.3);
        let v = log1p_exp(u);
        assert!((v - u).norm() < 1e-14);
        let u = c64(-80.0, 0.3);
        assert!(log1p_exp(u).norm() < 1e-30);
    }

    #[test]
    fn kernel_derivative() {
        let eta = c64(0.0, 0.6);
        let u = c64(0.3, 0.1);
        let hh = 1e-6;
        let fd = (kernel_raw(u + hh, eta) - kernel_raw(u - hh, eta)) / (2.0 * hh);
        assert!((fd - kernel_d(u, eta)).norm() < 1e-8);
    }
}

use openxxz::bethe::find_all_solutions;
use openxxz::correlators::*;
use openxxz::density::{j_matrix, solve_g};
use openxxz::ed_oracle;
use openxxz::linalg::{det, CMat};
use openxxz::model::{c64, sh, ModelParams};
use openxxz::nlie::{solve_nlie, NlieOptions};
use openxxz::C64;

fn inhom() -> Vec<C64> {
    [0.01, -0.013, 0.007, 0.004]
        .iter()
        .map(|a| c64(*a, 0.0))
        .collect()
}

fn params(a: f64, b: f64) -> ModelParams {
    ModelParams::homogeneous(4, 0.6, c64(0.0, a), c64(0.0, b)).with_inhom(inhom())
}

fn poly(c: &[C64], phi: f64) -> C64 {
    c.iter()
        .enumerate()
        .map(|(k, x)| x * (k as f64 * phi).exp())
        .sum()
}

/// ⟨Q_m⟩ in the Bethe state by explicit operator contraction.
fn ed_q(m: usize, phi: f64, roots: &[C64], p: &ModelParams) -> C64 {
    let l = ed_oracle::dual_bethe_vector(roots, p).unwrap();
    let r = ed_oracle::bethe_vector(roots, p).unwrap();
    let q = ed_oracle::build_q_operator(m, phi, p).unwrap();
    ed_oracle::bilinear_ratio(&l, &q.mat, &r).unwrap()
}

const PHIS: [f64; 3] = [0.0, 0.3, 1.0];

#[test]
fn finite_sum_matches_contraction() {
    for (a, b) in [(0.7, 0.65), (1.0, -0.2)] {
        let p = params(a, b);
        let bs = find_all_solutions(&p, None).unwrap();
        for m in 0..=3 {
            let c = q_sum_coefficients(m, &bs.roots, &p).unwrap();
            assert!((poly(&c, 0.0) - 1.0).norm() < 1e-9);
            for phi in PHIS {
                let v = poly(&c, phi);
                let e = ed_q(m, phi, &bs.roots, &p);
                assert!((v - e).norm() < 1e-9, "({a},{b}) m={m} φ={phi}: {v} vs {e}");
            }
        }
        // relabeling the roots leaves the sum unchanged
        let mut rev = bs.roots.clone();
        rev.reverse();
        let c1 = q_sum_coefficients(2, &bs.roots, &p).unwrap();
        let c2 = q_sum_coefficients(2, &rev, &p).unwrap();
        assert!((poly(&c1, 0.3) - poly(&c2, 0.3)).norm() < 1e-12);
    }
}

#[test]
fn homogeneous_finite_sum_against_ed() {
    let o = CorrelatorOptions::default();
    for (a, b) in [(0.7, 0.65), (1.0, -0.2), (1.0, 0.9)] {
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, a), c64(0.0, b));
        for m in 1..=2 {
            let ed = generating_poly(Method::EdBrute, m, &p, &o).unwrap();
            let fs = generating_poly(Method::FiniteSum, m, &p, &o).unwrap();
            assert_eq!(fs.meta.deltas, vec![1e-3, 5e-4]);
            for phi in PHIS {
                let d = (fs.value(phi) - ed.value(phi)).norm();
                assert!(d < 1e-7, "({a},{b}) m={m} φ={phi}: {d:.2e}");
            }
        }
    }
}

#[test]
fn ed_route_is_exact_polynomial() {
    let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 0.7), c64(0.0, 0.65));
    let st = ed_oracle::lowest_zero_mag_state(&p).unwrap().state.unwrap();
    let ed = generating_poly(Method::EdBrute, 2, &p, &CorrelatorOptions::default()).unwrap();
    for phi in [-0.7, 0.45, 2.0] {
        let direct = ed_oracle::brute_q(2, phi, &p, &st).unwrap();
        assert!((ed.value(phi) - direct).norm() < 1e-11);
    }
}

#[test]
fn integral_matches_finite_sum() {
    for (a, b) in [(0.7, 0.65), (1.0, -0.2)] {
        let p = params(a, b);
        let bs = find_all_solutions(&p, None).unwrap();
        let sol = solve_nlie(&p, &NlieOptions::default(), Some(&bs)).unwrap();
        let t = solve_g(&p.xi_bar(2), &sol).unwrap();
        for m in 1..=2 {
            let r0 = q_generating_integral(m, 0.0, &sol, &t).unwrap();
            assert!((r0.value - 1.0).norm() < 1e-9);
            for phi in [0.3, 1.0] {
                let int = q_generating_integral(m, phi, &sol, &t).unwrap();
                let sum = q_generating_sum(m, phi, &bs, &p).unwrap();
                let d = (int.value - sum.value).norm();
                assert!(d < 1e-6, "({a},{b}) m={m} φ={phi}: {d:.2e}");
            }
        }
    }
}

#[test]
fn profile_against_ed() {
    let o = CorrelatorOptions::default();
    for (a, b) in [(0.7, 0.65), (1.0, -0.2), (0.8, 0.8)] {
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, a), c64(0.0, b));
        let st = ed_oracle::lowest_zero_mag_state(&p).unwrap().state.unwrap();
        let direct = ed_oracle::sigma_z_profile(&st, 4);
        let pe = magnetization_profile(&p, Method::EdBrute, None, &o).unwrap();
        let pf = magnetization_profile(&p, Method::FiniteSum, None, &o).unwrap();
        assert_eq!(pf.sigma_z.len(), 4);
        for k in 0..4 {
            assert!((pe.sigma_z[k] - direct[k]).abs() < 1e-8);
            assert!((pf.sigma_z[k] - direct[k]).abs() < 1e-6, "({a},{b}) site {k}");
        }
        assert!(pe.sigma_z.iter().sum::<f64>().abs() < 1e-10);
        assert!(pf.sigma_z.iter().sum::<f64>().abs() < 1e-10);
        if a == b {
            for k in 0..2 {
                assert!((pf.sigma_z[k] - pf.sigma_z[3 - k]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn scalar_product_against_contraction() {
    for (a, b) in [(0.7, 0.65), (1.0, -0.2), (1.0, 0.9)] {
        let p = params(a, b);
        let lam = find_all_solutions(&p, None).unwrap().roots;
        let xb = p.xi_bar(2);
        let same = ScalarProductSpec {
            lambda_set: lam.clone(),
            mu_set: lam.clone(),
        };
        assert!((normalized_scalar_product(&same, &p).unwrap() - 1.0).norm() < 1e-12);
        for mu in [
            vec![xb[0], lam[1]],
            vec![lam[0], xb[1]],
            vec![xb[0], xb[1]],
            vec![c64(0.3, 0.1), lam[0]],
        ] {
            let spec = ScalarProductSpec {
                lambda_set: lam.clone(),
                mu_set: mu.clone(),
            };
            let f = normalized_scalar_product(&spec, &p).unwrap();
            let e = ed_scalar_product(&lam, &mu, &p).unwrap();
            assert!((f - e).norm() < 1e-9 * e.norm().max(1.0), "({a},{b}) {mu:?}: {f} vs {e}");
        }
    }
}

#[test]
fn reduced_scalar_product() {
    let p = params(1.0, -0.2);
    let lam = find_all_solutions(&p, None).unwrap().roots;
    let xb = p.xi_bar(3);
    let j = j_matrix(&lam, &xb, &p).unwrap();
    assert_eq!(s_sigma(&[], &[], &lam, &[], &p).unwrap(), c64(1.0, 0.0));
    // on-shell BAE in the y_j form
    let eta = p.eta();
    let yhat = |z: C64, jj: usize| y_hat(z, &lam, &p) / (sh(z - lam[jj] - eta) * sh(z + lam[jj] - eta));
    for jj in 0..2 {
        let (u, v) = (yhat(lam[jj], jj), yhat(-lam[jj], jj));
        assert!((u - v).norm() < 1e-9 * u.norm());
    }
    let cases: Vec<(Vec<usize>, Vec<usize>)> = vec![
        (vec![0], vec![0]),
        (vec![1], vec![2]),
        (vec![0, 1], vec![0, 1]),
        (vec![1, 0], vec![2, 0]),
    ];
    for (rep, cols) in cases {
        let n = rep.len();
        let lp: Vec<C64> = rep.iter().map(|i| lam[*i]).collect();
        let mp: Vec<C64> = cols.iter().map(|k| xb[*k]).collect();
        let lm: Vec<C64> = (0..2).filter(|i| !rep.contains(i)).map(|i| lam[i]).collect();
        let mut mu = lam.clone();
        for (i, r) in rep.iter().enumerate() {
            mu[*r] = mp[i];
        }
        let full = normalized_scalar_product(
            &ScalarProductSpec {
                lambda_set: lam.clone(),
                mu_set: mu,
            },
            &p,
        )
        .unwrap();
        for signs in 0..(1u32 << n) {
            let sigma: Vec<i8> = (0..n).map(|i| if signs >> i & 1 == 1 { -1 } else { 1 }).collect();
            let s = s_sigma(&lp, &mp, &lm, &sigma, &p).unwrap();
            let d = CMat::from_fn(n, n, |a, b| j[(rep[a], cols[b])]);
            let v = s * det(&d);
            assert!(
                (v - full).norm() < 1e-8 * full.norm().max(1.0),
                "{rep:?} σ={sigma:?}: {v} vs {full}"
            );
        }
    }
}

#[test]
fn building_blocks() {
    let p = params(0.7, 0.65);
    let eta = p.eta();
    let om = [c64(0.31, 0.05), c64(-0.4, 0.12)];
    let z = [c64(0.02, 0.3), c64(-0.05, 0.28)];
    // affine in e^φ
    let e = |phi: f64| m_entry(0, 1, &om, &z, phi, &p);
    let (x0, x1, x2) = (0.0f64.exp(), 0.5f64.exp(), 1.3f64.exp());
    let slope = (e(0.5) - e(0.0)) / (x1 - x0);
    assert!((e(1.3) - e(0.0) - slope * (x2 - x0)).norm() < 1e-12 * e(1.3).norm());
    // φ = 0 with z = ω: the product telescopes to 1
    let u = om[0] - om[1];
    let hand = sh(eta) * (1.0 / (sh(u) * sh(u - eta)) + 1.0 / (sh(u) * sh(u + eta)));
    let got = m_entry(0, 1, &om, &om, 0.0, &p);
    assert!((got - hand).norm() < 1e-12 * hand.norm());
    // n = 1 W₋ by hand
    let (w, zz1) = (om[0], z[0]);
    let h = eta / 2.0;
    let hand = sh(zz1 - w - eta) * sh(zz1 - w + eta) / (sh(-eta) * sh(eta)) * sh(zz1 + p.xi_minus - h)
        / sh(w + p.xi_minus - h)
        * sh(zz1 + w - eta);
    assert!((w_minus(&[w], &[zz1], &p).unwrap() - hand).norm() < 1e-12 * hand.norm());
    assert_eq!(w_minus(&[], &[], &p).unwrap(), c64(1.0, 0.0));
    let mut q = p.clone();
    q.xi_plus = c64(0.1, 0.33);
    assert_eq!(w_minus(&om, &z, &p).unwrap(), w_minus(&om, &z, &q).unwrap());
    // ω exchange: W₋ symmetric, det M antisymmetric
    let sw = [om[1], om[0]];
    let a = w_minus(&om, &z, &p).unwrap();
    let b = w_minus(&sw, &z, &p).unwrap();
    assert!((a - b).norm() < 1e-12 * a.norm());
    let da = det(&m_matrix(&om, &z, 0.4, &p));
    let db = det(&m_matrix(&sw, &z, 0.4, &p));
    assert!((da + db).norm() < 1e-12 * da.norm());
}

#[test]
fn thermodynamic_limit_against_finite_chains() {
    let o = CorrelatorOptions::default();
    let mut jumps = vec![];
    // Im ξ⁻ on both sides of 0 and inside (0, γ/2), where the extra residue is taken
    for (b, pole) in [(0.2, true), (0.01, true), (-0.01, false), (-0.2, false), (0.65, false)] {
        let p8 = ModelParams::homogeneous(8, 0.6, c64(0.0, 1.0), c64(0.0, b));
        assert_eq!(thermo_pole_active(&p8), pole);
        let th = generating_poly(Method::ThermoLimit, 1, &p8, &o).unwrap();
        assert!((th.value(0.0) - 1.0).norm() < 1e-10);
        let ed = generating_poly(Method::EdBrute, 1, &p8, &o).unwrap();
        let d = (th.value(0.3) - ed.value(0.3)).norm();
        assert!(d < 0.03, "Im ξ⁻={b}: {d:.2e}");
        jumps.push(ed.value(0.3));
    }
    // the boundary field changes sign at Im ξ⁻ = 0 and ⟨Q_1⟩ jumps with it
    assert!((jumps[1] - jumps[2]).norm() > 0.1);
    // L = 12 finite sum within 5%
    let p = ModelParams::homogeneous(12, 0.6, c64(0.0, 0.7), c64(0.0, 0.65));
    let th = generating_function(Method::ThermoLimit, 1, 0.3, &p, &o).unwrap();
    let fs = generating_function(Method::FiniteSum, 1, 0.3, &p, &o).unwrap();
    assert!((th.value - fs.value).norm() < 0.05 * fs.value.norm());
}

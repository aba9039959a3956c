use openxxz::bethe::find_all_solutions;
use openxxz::density::{
    det_ratio, detformula_via_g, fourier_oracle, j_matrix, solve_g, solve_g_plus, solve_rho,
    DensityTable,
};
use openxxz::model::{c64, ModelParams};
use openxxz::nlie::{solve_nlie, NlieOptions, NlieSolution};
use openxxz::C64;

fn inhom() -> Vec<C64> {
    [0.01, -0.013, 0.007, 0.004]
        .iter()
        .map(|a| c64(*a, 0.0))
        .collect()
}

fn setup(a: f64, b: f64) -> (ModelParams, Vec<C64>, NlieSolution) {
    let p = ModelParams::homogeneous(4, 0.6, c64(0.0, a), c64(0.0, b)).with_inhom(inhom());
    let bs = find_all_solutions(&p, None).unwrap();
    let sol = solve_nlie(&p, &NlieOptions::default(), Some(&bs)).unwrap();
    (p, bs.roots, sol)
}

fn probe_points() -> Vec<C64> {
    (0..20)
        .map(|k| {
            let t = k as f64 / 19.0;
            c64(-1.5 + 3.0 * t, 0.2 * (7.0 * t).sin())
        })
        .collect()
}

fn check_table(t: &DensityTable, sol: &NlieSolution, eta: C64) {
    assert!(t.residual < 1e-10, "node residual {:.2e}", t.residual);
    let off = t.offnode_residual(sol, &probe_points());
    assert!(off < 1e-10, "off-node residual {off:.2e}");
    for k in 0..t.nu_list.len() {
        assert!(t.eval(c64(0.0, 0.0), k).norm() < 1e-10);
        for z in probe_points() {
            assert!((t.eval(z, k) + t.eval(-z, k)).norm() < 1e-10);
        }
        if (t.nu_list[k] - eta / 2.0).norm() < 1e-15 {
            for z in probe_points() {
                assert!(t.eval(z, k).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn matches_determinant_ratio() {
    for (a, b) in [(0.7, 0.65), (1.0, -0.2), (1.0, 0.9), (1.0, 0.45)] {
        let (p, roots, sol) = setup(a, b);
        let eta = p.eta();
        let xb = p.xi_bar(4);
        let nus = vec![xb[0], xb[1], xb[2], eta / 2.0];
        let t = solve_g(&nus, &sol).unwrap();
        check_table(&t, &sol, eta);
        let j = j_matrix(&roots, &nus[..3], &p).unwrap();
        for (r, l) in roots.iter().enumerate() {
            let ap = openxxz::density::aux_prime(*l, &sol).unwrap();
            for c in 0..3 {
                let g = t.eval(*l, c) / ap;
                assert!(
                    (g - j[(r, c)]).norm() < 1e-8 * j[(r, c)].norm().max(1.0),
                    "({a},{b}) root {r} col {c}: {g} vs {}",
                    j[(r, c)]
                );
            }
        }
        // n = 1, 2 against the full M×M ratio
        for (rep, nu) in [
            (vec![0], vec![xb[0]]),
            (vec![1], vec![xb[2]]),
            (vec![0, 1], vec![xb[0], xb[1]]),
            (vec![1, 0], vec![xb[2], xb[1]]),
        ] {
            let lp: Vec<C64> = rep.iter().map(|i| roots[*i]).collect();
            let via_g = detformula_via_g(&lp, &nu, &t, &sol).unwrap();
            let full = det_ratio(&roots, &rep, &nu, &p).unwrap();
            assert!(
                (via_g - full).norm() < 1e-8 * full.norm().max(1.0),
                "({a},{b}) {rep:?}: {via_g} vs {full}"
            );
        }
        assert_eq!(detformula_via_g(&[], &[], &t, &sol).unwrap(), c64(1.0, 0.0));
        // negating a root flips the sign
        let d1 = detformula_via_g(&[roots[0], roots[1]], &[xb[0], xb[1]], &t, &sol).unwrap();
        let d2 = detformula_via_g(&[-roots[0], roots[1]], &[xb[0], xb[1]], &t, &sol).unwrap();
        assert!((d1 + d2).norm() < 1e-9 * d1.norm().max(1.0));
    }
}

#[test]
fn plus_decomposition() {
    for (a, b) in [(0.7, 0.65), (1.0, -0.2)] {
        let (p, _, sol) = setup(a, b);
        let eta = p.eta();
        let xb = p.xi_bar(2);
        let full = solve_g(&xb, &sol).unwrap();
        let mut nus = xb.clone();
        nus.extend(xb.iter().map(|v| eta - v));
        let plus = solve_g_plus(&nus, &sol).unwrap();
        assert!(plus.residual < 1e-10);
        for z in probe_points() {
            for k in 0..2 {
                let d = full.eval(z, k) - (plus.eval(z, k) - plus.eval(z, k + 2));
                assert!(d.norm() < 1e-9, "{z}: {d}");
            }
        }
    }
}

#[test]
fn mesh_halving() {
    for (a, b) in [(0.7, 0.65), (1.0, -0.2)] {
        let (p, roots, coarse) = setup(a, b);
        let bs = find_all_solutions(&p, None).unwrap();
        let h = coarse.spacing();
        let opts = NlieOptions {
            spacing: Some(h / 2.0),
            cutoff: Some(coarse.contour.cutoff),
            ..NlieOptions::default()
        };
        let fine = solve_nlie(&p, &opts, Some(&bs)).unwrap();
        let nus = p.xi_bar(2);
        let gc = solve_g(&nus, &coarse).unwrap();
        let gf = solve_g(&nus, &fine).unwrap();
        let mut worst = 0.0f64;
        for z in probe_points().into_iter().chain(roots.iter().copied()) {
            for k in 0..2 {
                worst = worst.max((gc.eval(z, k) - gf.eval(z, k)).norm());
            }
        }
        assert!(worst < 1e-9, "({a},{b}) mesh change {worst:.2e}");
    }
}

#[test]
fn outside_strip_nu_rejected() {
    let (p, _, sol) = setup(0.7, 0.65);
    let bad = p.eta() / 2.0 + c64(0.0, 2.0 * p.epsilon);
    assert!(solve_g(&[bad], &sol).is_err());
}

#[test]
fn rho_against_fourier() {
    let p = ModelParams::homogeneous(4, 0.6, c64(0.0, 1.0), c64(0.0, -0.2));
    let eta = p.eta();
    let nus = [eta / 2.0, eta / 2.0 + 0.3, eta / 2.0 + c64(0.01, 0.02)];
    let t = solve_rho(&nus, &p, 25.0, 0.05).unwrap();
    assert!(t.boundary < 1e-12);
    for (k, nu) in nus.iter().enumerate() {
        for l in [-2.0, -0.3, 0.0, 0.45, 1.7] {
            let a = t.eval(c64(l, 0.0), k);
            let b = fourier_oracle(l, *nu, p.gamma);
            assert!((a - b).norm() < 1e-8, "ν′={nu} λ={l}: {a} vs {b}");
        }
    }
    // ρ(λ+c, ν′+c) = ρ(λ, ν′)
    for l in [-0.4, 0.2, 1.1] {
        let d = t.eval(c64(l + 0.3, 0.0), 1) - t.eval(c64(l, 0.0), 0);
        assert!(d.norm() < 1e-10);
    }
    assert!(solve_rho(&nus, &p, 10.0, 0.05).is_err());
}

#[test]
fn j_reproduces_single_column_ratio() {
    let (p, roots, _) = setup(1.0, 0.9);
    let nu = p.xi_bar(1);
    let j = j_matrix(&roots, &nu, &p).unwrap();
    let r = det_ratio(&roots, &[0], &nu, &p).unwrap();
    assert!((j[(0, 0)] - r).norm() < 1e-10 * r.norm().max(1.0));
}

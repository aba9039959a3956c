use openxxz::bethe::{eigenvalue_lambda, find_all_solutions, ground_energy_from_roots, hole_residual};
use openxxz::ed_oracle::{bethe_vector, build_tau, eigen_residual, lowest_zero_mag_state};
use openxxz::{c64, ModelParams};

fn sets() -> Vec<(f64, f64, f64)> {
    // (γ, Im ξ⁺, Im ξ⁻)
    vec![
        (0.6, 1.0, 0.9),   // I
        (0.6, 1.0, 0.45),  // II
        (0.6, 1.0, 0.2),   // IV
        (0.6, 1.0, -0.2),  // VII
        (0.6, 0.7, 0.65),  // I, real hole
        (0.9, 1.3, -0.35), // VII
        (0.3, 0.33, 0.27), // II near the lower edge
    ]
}

#[test]
fn energy_matches_ed() {
    for l in [2usize, 4, 6] {
        for (g, a, b) in sets() {
            let p = ModelParams::homogeneous(l, g, c64(0.0, a), c64(0.0, b));
            let sol = find_all_solutions(&p, None).unwrap();
            let e = ground_energy_from_roots(&sol, &p).unwrap();
            let ed = lowest_zero_mag_state(&p).unwrap();
            let hr = hole_residual(&sol, &p);
            println!(
                "L={l} γ={g} ξ=({a},{b}) E_bethe={e:.12} E_ed={:.12} res={:.1e} holes_res={hr:.1e} region={:?}",
                ed.energy, sol.max_residual, sol.region
            );
            assert!((e - ed.energy).abs() < 1e-9 * (1.0 + ed.energy.abs()));
            assert!(sol.max_residual < 1e-12);
        }
    }
}

#[test]
fn tau_eigenvector_l4() {
    for (g, a, b) in sets() {
        let p = ModelParams::homogeneous(4, g, c64(0.0, a), c64(0.0, b));
        let sol = find_all_solutions(&p, None).unwrap();
        let v = bethe_vector(&sol.roots, &p).unwrap();
        for z in [c64(0.13, 0.07), c64(-0.4, 0.2)] {
            let tau = build_tau(z, &p).unwrap();
            let lam = eigenvalue_lambda(z, &sol, &p).unwrap();
            let r = eigen_residual(&tau.mat, &v, lam);
            println!("γ={g} ({a},{b}) z={z} res={r:.2e}");
            assert!(r < 1e-8);
        }
    }
}

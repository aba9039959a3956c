use proptest::prelude::*;

use openxxz::bethe::{aux_eval, find_all_solutions};
use openxxz::config::{Cx, RunConfig};
use openxxz::correlators::q_sum_coefficients;
use openxxz::ed_oracle::{build_hamiltonian, build_r, build_transfer};
use openxxz::linalg::CMat;
use openxxz::model::{c64, sh, ModelParams};
use openxxz::verify::ybe_residual;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), Just(1e-300), Just(-2.5e-17)]
}

proptest! {
    #[test]
    fn complex_text_round_trip(re in finite(), im in finite()) {
        let c = Cx(c64(re, im));
        let back: Cx = c.to_string().parse().unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn config_round_trip(
        l in (1usize..8).prop_map(|k| 2 * k),
        gamma in 0.05..1.5f64,
        a in -1.5..1.5f64,
        b in -1.5..1.5f64,
        tol in 1e-15..1e-8f64,
        delta in proptest::option::of(1e-4..0.1f64),
        m in 0usize..5,
        phi in -2.0..2.0f64,
        inhom in proptest::collection::vec((-0.1..0.1f64, -0.01..0.01f64), 0..3),
    ) {
        let mut c = RunConfig::default();
        c.model.l = l;
        c.model.gamma = gamma;
        c.model.xi_plus = Cx(c64(0.0, a));
        c.model.xi_minus = Cx(c64(0.0, b));
        c.model.inhom = inhom.iter().map(|(x, y)| Cx(c64(*x, *y))).collect();
        c.solver.tol = tol;
        c.solver.delta = delta;
        c.qgen.m = m;
        c.qgen.phi = phi;
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn r_matrix_identities(
        g in 0.1..1.5f64,
        l in (-1.0..1.0f64, -1.0..1.0f64),
        m in (-1.0..1.0f64, -1.0..1.0f64),
        n in (-1.0..1.0f64, -1.0..1.0f64),
    ) {
        let eta = c64(0.0, g);
        let (l, m, n) = (c64(l.0, l.1), c64(m.0, m.1), c64(n.0, n.1));
        prop_assert!(ybe_residual(l, m, n, eta) < 1e-12);
        let uni = build_r(l, eta) * build_r(-l, eta) - CMat::identity(4, 4) * (sh(l + eta) * sh(eta - l));
        prop_assert!(uni.norm() < 1e-12 * (1.0 + (sh(l + eta) * sh(eta - l)).norm()));
        // R(0) = sh η · P
        let r0 = build_r(c64(0.0, 0.0), eta);
        prop_assert!((r0[(1, 2)] - sh(eta)).norm() < 1e-15 && r0[(1, 1)].norm() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn transfer_matrix_normalization(g in 0.2..1.2f64, a in 0.05..1.5f64, b in -1.5..1.5f64) {
        prop_assume!((b.abs() - g).abs() > 0.02 && (b.abs() - g / 2.0).abs() > 0.02 && b.abs() > 0.02);
        let p = ModelParams::homogeneous(4, g, c64(0.0, a), c64(0.0, b));
        let t0 = build_transfer(c64(0.0, 0.0), &p).unwrap().mat;
        prop_assert!((t0 - CMat::identity(16, 16)).norm() < 1e-10);
        // imaginary boundary parameters give a hermitian H
        let h = build_hamiltonian(&p).unwrap().mat;
        prop_assert!((&h - h.adjoint()).norm() < 1e-10 * h.norm());
    }

    #[test]
    fn auxiliary_mirror_and_trivial_generating_value(
        a in 0.65..1.4f64,
        b in prop_oneof![0.62..0.9f64, -0.5..-0.05f64],
        z in (-1.0..1.0f64, -0.25..0.25f64),
    ) {
        let s: Vec<_> = [0.01, -0.013, 0.007, 0.004].iter().map(|x| c64(*x, 0.0)).collect();
        let p = ModelParams::homogeneous(4, 0.6, c64(0.0, a), c64(0.0, b)).with_inhom(s);
        let sol = find_all_solutions(&p, None).unwrap();
        let z = c64(z.0, z.1);
        let prod = aux_eval(z, &sol.roots, &p).unwrap() * aux_eval(-z, &sol.roots, &p).unwrap();
        prop_assert!((prod - 1.0).norm() < 1e-10);
        // m = L needs the wider inhomogeneity spread of the δ schedule
        for m in 0..=3 {
            let c = q_sum_coefficients(m, &sol.roots, &p).unwrap();
            let at_zero: openxxz::C64 = c.iter().sum();
            prop_assert!((at_zero - 1.0).norm() < 1e-9, "m={} Q(0)={}", m, at_zero);
        }
    }
}

use openxxz::bethe::{aux_eval, find_all_solutions};
use openxxz::model::{c64, ModelParams};
use openxxz::nlie::{solve_nlie, NlieOptions, NlieSolution};
use openxxz::C64;

fn sup_diff(sol: &NlieSolution, roots: &[C64], p: &ModelParams) -> f64 {
    let mut worst = 0.0f64;
    for (z, la) in sol
        .upper_nodes()
        .iter()
        .zip(&sol.upper)
        .chain(sol.lower_nodes().iter().zip(&sol.lower))
    {
        let a = aux_eval(*z, roots, p).unwrap();
        worst = worst.max((la.exp() - a).norm() / a.norm().max(1.0));
    }
    worst
}

fn case(l: usize, g: f64, a: f64, b: f64) -> (NlieSolution, f64) {
    let p = ModelParams::homogeneous(l, g, c64(0.0, a), c64(0.0, b));
    let bs = find_all_solutions(&p, None).unwrap();
    let t = std::time::Instant::now();
    let sol = solve_nlie(&p, &NlieOptions::default(), Some(&bs)).unwrap();
    let d = sup_diff(&sol, &bs.roots, &p);
    eprintln!(
        "L={l} ({a},{b}) region {} holes {:?} bethe holes {:?} iters {} n {} sup {d:.2e} mirror {:.2e} t {:?}",
        sol.region.label,
        sol.hole_positions,
        bs.holes,
        sol.iterations,
        sol.arm_x.len(),
        sol.mirror_defect(),
        t.elapsed()
    );
    (sol, d)
}

#[test]
fn regions_i_and_vii() {
    for l in [4, 8, 12] {
        for (a, b) in [(1.0, 0.9), (0.7, 0.65), (1.0, -0.2)] {
            let (_, d) = case(l, 0.6, a, b);
            assert!(d < 1e-8);
        }
    }
}

#[test]
fn pole_regions() {
    for l in [4, 8] {
        for (a, b) in [(1.0, 0.45), (1.0, 0.2), (0.33 / 0.6 * 0.6, 0.27)] {
            let (_, d) = case(l, 0.6, a, b);
            assert!(d < 1e-8);
        }
    }
}

#[test]
fn hole_without_bethe_input() {
    for (a, b) in [(0.7, 0.65), (1.0, 0.45), (1.0, 0.2)] {
        let p = ModelParams::homogeneous(12, 0.6, c64(0.0, a), c64(0.0, b));
        let bs = find_all_solutions(&p, None).unwrap();
        let sol = solve_nlie(&p, &NlieOptions::default(), None).unwrap();
        let chi_b = bs.holes.iter().find(|h| h.im.abs() < 1e-8).unwrap().re;
        let chi_n = sol.hole_positions[0].re;
        eprintln!("({a},{b}) bethe {chi_b} nlie {chi_n}");
        assert!((chi_b - chi_n).abs() < 1e-9);
        assert!(sup_diff(&sol, &bs.roots, &p) < 1e-8);
    }
}

#[test]
fn mesh_halving() {
    for (a, b) in [(0.7, 0.65), (1.0, -0.2), (1.0, 0.45)] {
        let p = ModelParams::homogeneous(8, 0.6, c64(0.0, a), c64(0.0, b));
        let bs = find_all_solutions(&p, None).unwrap();
        let coarse = solve_nlie(&p, &NlieOptions::default(), Some(&bs)).unwrap();
        let fine = solve_nlie(
            &p,
            &NlieOptions {
                spacing: Some(coarse.spacing() / 2.0),
                cutoff: Some(coarse.contour.cutoff),
                ..Default::default()
            },
            Some(&bs),
        )
        .unwrap();
        let mut worst = 0.0f64;
        for (k, u) in coarse.upper.iter().enumerate() {
            let v = fine.upper[2 * k];
            worst = worst.max(((u - v).exp() - 1.0).norm());
        }
        eprintln!("({a},{b}) mesh halving {worst:.2e}");
        assert!(worst < 1e-10);
        assert!(coarse.mirror_defect() < 1e-10);
    }
}

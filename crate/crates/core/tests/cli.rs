use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_openxxz"))
}

fn run(args: &[&str], out: &Path) -> (i32, Value) {
    let o = bin().args(args).arg("--out").arg(out).output().unwrap();
    let code = o.status.code().unwrap();
    let v = if code == 0 {
        serde_json::from_slice(&o.stdout).unwrap()
    } else {
        serde_json::from_slice(&o.stderr).unwrap()
    };
    (code, v)
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# openxxz-csv/1 columns=re(z),im(z),re(f),im(f)"));
    assert_eq!(lines.next().unwrap(), "re(z),im(z),re(f),im(f)");
    lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn bethe_root_and_hole_rows() {
    let dir = tempfile::tempdir().unwrap();
    // default set and the literal one
    for extra in [vec![], vec!["--xi-plus", "0+1.1i", "--xi-minus", "0+0.9i"]] {
        let (code, v) = run(&[&["bethe"], &extra[..]].concat(), dir.path());
        assert_eq!(code, 0);
        let roots = data_rows(&dir.path().join("bethe_roots.csv"));
        let holes = data_rows(&dir.path().join("bethe_holes.csv"));
        assert_eq!(roots.len(), 2);
        assert_eq!(holes.len(), 5);
        assert!(v["result"]["max_residual"].as_f64().unwrap() < 1e-12);
        for r in roots.iter().chain(&holes) {
            assert!(r[2].hypot(r[3]) < 1e-10, "1 + a at a solution: {r:?}");
        }
        if extra.is_empty() {
            // roots near the real axis, one real hole beyond the outermost root
            let outer = roots.iter().map(|r| r[0].abs()).fold(0.0, f64::max);
            assert!(roots.iter().all(|r| r[1].abs() < 1e-10));
            let real: Vec<_> = holes.iter().filter(|h| h[1].abs() < 1e-10).collect();
            assert_eq!(real.len(), 1);
            assert!(real[0][0].abs() > outer);
        }
    }
}

#[test]
fn qgen_trivial_point() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = run(&["qgen", "--method", "finite_sum", "--m", "2", "--phi", "0"], dir.path());
    assert_eq!(code, 0);
    let val = &v["result"]["value"];
    assert!((val[0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(val[1].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["result"]["method"], "finite_sum");
}

#[test]
fn verify_quick_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = run(&["verify", "--level", "quick"], dir.path());
    assert_eq!(code, 0);
    assert_eq!(v["result"]["ok"], true);
}

#[test]
fn identical_config_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["qgen", "--L", "4", "--gamma", "0.6", "--xi-plus", "0+1i", "--xi-minus", "-0.2i", "--m", "1", "--phi", "0.3", "--profile"];
    let (c1, _) = run(&args, dir.path());
    let a = std::fs::read(dir.path().join("qgen.json")).unwrap();
    let b1 = std::fs::read(dir.path().join("qgen_sigma_z.csv")).unwrap();
    let (c2, v) = run(&args, dir.path());
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, std::fs::read(dir.path().join("qgen.json")).unwrap());
    assert_eq!(b1, std::fs::read(dir.path().join("qgen_sigma_z.csv")).unwrap());
    let hash = v["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let csv = String::from_utf8(b1).unwrap();
    assert!(csv.lines().next().unwrap().contains(hash));
    assert!(csv.lines().next().unwrap().contains("\"tol\":1e-13"));
    assert!(v["tolerances"]["solver"]["tol"].as_f64().is_some());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[model]\nL = 4\ngamma = 0.6\nxi_plus = \"0+1i\"\nxi_minus = \"0-0.2i\"\n\n[qgen]\nmethod = \"ed_brute\"\nm = 2\nphi = 0.3\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let (code, v) = run(&["qgen", "--config", c], dir.path());
    assert_eq!(code, 0);
    assert_eq!(v["result"]["method"], "ed_brute");
    assert_eq!(v["config"]["model"]["xi_minus"], "0-0.2i");
    let ed = v["result"]["value"][0].as_f64().unwrap();
    let (code, v) = run(&["qgen", "--config", c, "--method", "finite_sum"], dir.path());
    assert_eq!(code, 0);
    assert!((v["result"]["value"][0].as_f64().unwrap() - ed).abs() < 1e-7);
}

#[test]
fn errors_leave_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = run(&["bethe", "--L", "5"], dir.path());
    assert_eq!(code, 2);
    assert_eq!(v["error"], "invalid_param");
    let rec: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("error.json")).unwrap()).unwrap();
    assert_eq!(rec, v);
    let (code, v) = run(&["qgen", "--method", "nope"], dir.path());
    assert_eq!(code, 2);
    assert!(v["message"].as_str().unwrap().contains("nope"));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nL = 4\n").unwrap();
    let (code, v) = run(&["bethe", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(code, 7);
    assert_eq!(v["error"], "config");
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["ed", "--out"])
        .arg(dir.path())
        .env("OPENXXZ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(7));
    let o = bin()
        .args(["ed", "--out"])
        .arg(dir.path())
        .env("OPENXXZ_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn other_subcommands_emit_files() {
    let dir = tempfile::tempdir().unwrap();
    let set = ["--gamma", "0.6", "--xi-plus", "0+1i", "--xi-minus", "0+0.65i"];
    for (sub, files) in [
        ("ed", vec!["ed.json", "ed_sigma_z.csv"]),
        ("nlie", vec!["nlie.json", "nlie_log_a.csv"]),
        ("density", vec!["density.json", "density_G_1.csv"]),
        ("scalar-product", vec!["scalar_product.json"]),
        ("rootscan", vec!["rootscan.json", "rootscan_roots.csv", "rootscan_holes.csv"]),
    ] {
        let (code, v) = run(&[&[sub][..], &set[..]].concat(), dir.path());
        assert_eq!(code, 0, "{sub}: {v}");
        for f in files {
            assert!(dir.path().join(f).exists(), "{sub}: {f}");
        }
        if sub == "scalar-product" {
            assert!(v["result"]["max_relative_error"].as_f64().unwrap() < 1e-9);
        }
        if sub == "nlie" {
            assert!(v["result"]["mirror_defect"].as_f64().unwrap() < 1e-10);
        }
    }
}

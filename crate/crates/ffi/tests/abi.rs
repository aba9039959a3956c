use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use openxxz_ffi::*;

fn c(re: f64, im: f64) -> OxxzComplex {
    OxxzComplex { re, im }
}

fn params(l: usize) -> *mut OxxzParams {
    let mut p = ptr::null_mut();
    let s = unsafe { oxxz_params_new(l, 0.1, c(0.0, 0.11), c(0.0, 0.09), &mut p) };
    assert_eq!(s, OxxzStatus::Ok);
    p
}

#[test]
fn bethe_energy_matches_ed() {
    let p = params(4);
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(oxxz_bethe_solve(p, &mut b), OxxzStatus::Ok);
        let mut n = 0usize;
        let mut roots = [OxxzComplex::default(); 2];
        assert_eq!(oxxz_bethe_roots(b, roots.as_mut_ptr(), 2, &mut n), OxxzStatus::Ok);
        assert_eq!(n, 2);
        let mut holes = [OxxzComplex::default(); 5];
        assert_eq!(oxxz_bethe_holes(b, holes.as_mut_ptr(), 5, &mut n), OxxzStatus::Ok);
        assert_eq!(n, 5);
        let (mut eb, mut ed, mut res) = (0.0, 0.0, 1.0);
        assert_eq!(oxxz_bethe_residual(b, &mut res), OxxzStatus::Ok);
        assert!(res < 1e-9, "{res}");
        assert_eq!(oxxz_bethe_energy(b, p, &mut eb), OxxzStatus::Ok);
        assert_eq!(oxxz_ed_ground_energy(p, &mut ed), OxxzStatus::Ok);
        assert!((eb - ed).abs() < 1e-8, "{eb} vs {ed}");
        oxxz_bethe_free(b);
        oxxz_params_free(p);
    }
}

#[test]
fn short_buffer_reports_length() {
    let p = params(4);
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(oxxz_bethe_solve(p, &mut b), OxxzStatus::Ok);
        let mut n = 0usize;
        let mut one = [OxxzComplex::default(); 1];
        assert_eq!(oxxz_bethe_holes(b, one.as_mut_ptr(), 1, &mut n), OxxzStatus::BufferTooSmall);
        assert_eq!(n, 5);
        assert!(!oxxz_last_error().is_null());
        oxxz_bethe_free(b);
        oxxz_params_free(p);
    }
}

#[test]
fn qgen_methods_agree() {
    let p = params(4);
    let mut a = OxxzComplex::default();
    let mut e = OxxzComplex::default();
    unsafe {
        assert_eq!(oxxz_qgen(p, OxxzMethod::FiniteSum, 2, 0.3, &mut a), OxxzStatus::Ok);
        assert_eq!(oxxz_qgen(p, OxxzMethod::EdBrute, 2, 0.3, &mut e), OxxzStatus::Ok);
        oxxz_params_free(p);
    }
    assert!((a.re - e.re).hypot(a.im - e.im) < 1e-7, "{a:?} vs {e:?}");
}

#[test]
fn errors_map_to_codes() {
    let mut p = ptr::null_mut();
    unsafe {
        // odd length
        let s = oxxz_params_new(3, 0.1, c(0.0, 0.11), c(0.0, 0.09), &mut p);
        assert_eq!(s, OxxzStatus::InvalidParam);
        assert!(p.is_null());
        let msg = CStr::from_ptr(oxxz_last_error()).to_str().unwrap();
        assert!(!msg.is_empty());

        assert_eq!(
            oxxz_params_new(4, 0.1, c(0.0, 0.11), c(0.0, 0.09), ptr::null_mut()),
            OxxzStatus::NullPointer
        );
        let mut x = 0.0;
        assert_eq!(oxxz_ed_ground_energy(ptr::null(), &mut x), OxxzStatus::NullPointer);

        let p = params(4);
        let s3 = [c(0.0, 0.0); 3];
        assert_eq!(oxxz_params_set_inhom(p, s3.as_ptr(), 3), OxxzStatus::InvalidParam);
        oxxz_params_free(p);
        oxxz_params_free(ptr::null_mut());
        oxxz_bethe_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(oxxz_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/openxxz.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "oxxz_version",
        "oxxz_last_error",
        "oxxz_params_new",
        "oxxz_params_set_inhom",
        "oxxz_params_free",
        "oxxz_bethe_solve",
        "oxxz_bethe_roots",
        "oxxz_bethe_holes",
        "oxxz_bethe_residual",
        "oxxz_bethe_energy",
        "oxxz_bethe_free",
        "oxxz_ed_ground_energy",
        "oxxz_qgen",
        "typedef struct OxxzParams OxxzParams",
        "OXXZ_STATUS_BUFFER_TOO_SMALL = 9",
    ] {
        assert!(h.contains(sym), "{sym} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::env::var("CC").or_else(|_| {
        ["cc", "gcc", "clang"]
            .into_iter()
            .find(|c| Command::new(c).arg("--version").output().is_ok())
            .map(str::to_owned)
            .ok_or(())
    }) else {
        eprintln!("no C compiler, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"openxxz.h\"\n\
         int main(void) {\n\
           OxxzParams *p = 0;\n\
           OxxzComplex a = {0.0, 0.11}, b = {0.0, 0.09}, q;\n\
           if (oxxz_params_new(4, 0.1, a, b, &p) != OXXZ_STATUS_OK) return 1;\n\
           OxxzStatus s = oxxz_qgen(p, OXXZ_METHOD_FINITE_SUM, 1, 0.0, &q);\n\
           oxxz_params_free(p);\n\
           return s;\n\
         }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

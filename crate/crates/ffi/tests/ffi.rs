use hommax_ffi::*;
use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

fn ball(n: usize, r: f64) -> (HxStatus, *mut HxCell) {
    let c = [0.5; 3];
    let mut cell = ptr::null_mut();
    let s = unsafe { hx_cell_ball(n, c.as_ptr(), r, 1.0, 1.0, &mut cell) };
    (s, cell)
}

fn last_error() -> String {
    let p = hx_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn tensor_round_trip() {
    let (s, cell) = ball(8, 0.25);
    assert_eq!(s, HxStatus::Ok);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { hx_effective_tensor(cell, 1e-10, &mut t) }, HxStatus::Ok);
    let mut a = [0.0; 9];
    assert_eq!(unsafe { hx_tensor_get(t, a.as_mut_ptr()) }, HxStatus::Ok);
    let direct = hommax::cell_problem::assemble_a_hom(
        &hommax::geometry::MaterialCell::new(
            8,
            hommax::geometry::Shape::Ball { center: [0.5; 3], radius: 0.25 },
            hommax::geometry::Permittivity::Constant(1.0),
            hommax::geometry::Permittivity::Constant(1.0),
        ),
        &Default::default(),
    )
    .unwrap();
    assert_eq!(a.to_vec(), direct.a.iter().flatten().copied().collect::<Vec<_>>());
    assert!(unsafe { hx_tensor_product_residual(t) } > 0.0);
    unsafe {
        hx_tensor_free(t);
        hx_cell_free(cell);
    }
}

#[test]
fn spectrum_and_gamma() {
    let (_, cell) = ball(8, 0.25);
    let mut sp = ptr::null_mut();
    assert_eq!(unsafe { hx_spectrum_solve(cell, 6, 0, &mut sp) }, HxStatus::Ok);
    let k = unsafe { hx_spectrum_len(sp) };
    assert!(k >= 6);
    let mut alphas = vec![0.0; k];
    assert_eq!(unsafe { hx_spectrum_alphas(sp, alphas.as_mut_ptr(), k) }, HxStatus::Ok);
    assert!(alphas.windows(2).all(|w| w[0] <= w[1]) && alphas[0] > 0.0);
    assert_eq!(unsafe { hx_spectrum_alphas(sp, alphas.as_mut_ptr(), k - 1) }, HxStatus::BufferTooSmall);
    let mut moments = vec![0.0; 3 * k];
    assert_eq!(unsafe { hx_spectrum_moments(sp, moments.as_mut_ptr(), 3 * k) }, HxStatus::Ok);
    let mut g = [0.0; 9];
    assert_eq!(unsafe { hx_spectrum_gamma(sp, 1.0, g.as_mut_ptr()) }, HxStatus::Ok);
    assert!(g[0] > 1.0 && (g[0] - g[4]).abs() < 1e-10 * g[0]);
    assert_eq!(unsafe { hx_spectrum_gamma(sp, alphas[0].sqrt(), g.as_mut_ptr()) }, HxStatus::PoleGuard);
    assert!(last_error().contains("pole guard"));
    unsafe {
        hx_spectrum_free(sp);
        hx_cell_free(cell);
    }
}

#[test]
fn errors_and_nulls() {
    let (s, cell) = ball(8, -0.1);
    assert_eq!(s, HxStatus::InvalidArgument);
    assert!(cell.is_null());
    assert!(last_error().contains("radius"));
    let (s, _) = ball(4, 0.1);
    assert_eq!(s, HxStatus::InvalidArgument);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { hx_effective_tensor(ptr::null(), 1e-10, &mut t) }, HxStatus::NullPointer);
    assert_eq!(unsafe { hx_spectrum_len(ptr::null()) }, 0);
    assert!(unsafe { hx_tensor_product_residual(ptr::null()) }.is_nan());
    unsafe {
        hx_cell_free(ptr::null_mut());
        hx_tensor_free(ptr::null_mut());
        hx_spectrum_free(ptr::null_mut());
    }
}

#[test]
fn cell_from_toml() {
    let text = CString::new("[geometry]\nshape = \"box\"\n[geometry.params]\nhalf = [0.25, 0.25, 0.25]\n[grid]\nn = 8\n").unwrap();
    let mut cell = ptr::null_mut();
    assert_eq!(unsafe { hx_cell_from_toml(text.as_ptr(), &mut cell) }, HxStatus::Ok);
    unsafe { hx_cell_free(cell) };
    let bad = CString::new("[grid]\nn = 8\n").unwrap();
    assert_eq!(unsafe { hx_cell_from_toml(bad.as_ptr(), &mut cell) }, HxStatus::InvalidArgument);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(hx_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/hommax.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Compile a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if std::process::Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libhommax_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let st = std::process::Command::new(&cc)
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success());
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("a11 = 0."));
}

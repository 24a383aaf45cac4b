use std::ffi::{c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use thetalab_ffi::*;

fn parse(text: &str) -> *mut TlExpr {
    let c = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tl_expr_parse(c.as_ptr(), &mut h) }, TlStatus::Ok);
    h
}

fn last_error() -> String {
    let p = tl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn parse_eval_derivative_roundtrip() {
    let h = parse("t^2 + sin(t)");
    let mut v = 0.0;
    assert_eq!(unsafe { tl_expr_eval(h, 2.0, &mut v) }, TlStatus::Ok);
    assert!((v - (4.0 + 2f64.sin())).abs() < 1e-15);

    let mut d = ptr::null_mut();
    assert_eq!(unsafe { tl_expr_derivative(h, &mut d) }, TlStatus::Ok);
    assert_eq!(unsafe { tl_expr_eval(d, 2.0, &mut v) }, TlStatus::Ok);
    assert!((v - (4.0 + 2f64.cos())).abs() < 1e-14);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tl_expr_to_string(h, &mut s) }, TlStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { tl_string_free(s) };
    let again = parse(&text);
    let mut w = 0.0;
    unsafe {
        tl_expr_eval(h, 0.7, &mut v);
        tl_expr_eval(again, 0.7, &mut w);
    }
    assert_eq!(v, w);
    unsafe {
        tl_expr_free(h);
        tl_expr_free(d);
        tl_expr_free(again);
    }
}

#[test]
fn errors_set_status_and_message() {
    let c = CString::new("sin(").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tl_expr_parse(c.as_ptr(), &mut h) }, TlStatus::ParseError);
    assert!(h.is_null());
    assert!(last_error().contains("byte 4"));

    let lg = parse("log(t-5)");
    let mut v = 0.0;
    assert_eq!(unsafe { tl_expr_eval(lg, 1.0, &mut v) }, TlStatus::DomainError);
    assert!(last_error().contains("log"));
    unsafe { tl_expr_free(lg) };

    assert_eq!(unsafe { tl_expr_eval(ptr::null(), 0.0, &mut v) }, TlStatus::NullPointer);
    assert_eq!(unsafe { tl_expr_parse(ptr::null(), &mut h) }, TlStatus::NullPointer);
    unsafe {
        tl_expr_free(ptr::null_mut());
        tl_string_free(ptr::null_mut());
    }
}

#[test]
fn moving_average_and_solver() {
    let one = parse("1");
    let mut v = 0.0;
    assert_eq!(unsafe { tl_moving_average(one, 0.5, 3.0, 1e-10, &mut v) }, TlStatus::Ok);
    assert!((v - 0.5).abs() < 1e-12);
    assert_eq!(unsafe { tl_moving_average(one, 2.0, 1.0, 1e-10, &mut v) }, TlStatus::Ok);
    assert!((v - 1.0).abs() < 1e-12);

    let mut n = 0usize;
    let st = unsafe { tl_solve_scalar(one, 1.0, 0.0, 5.0, 0.5, 1e-10, ptr::null_mut(), 0, &mut n) };
    assert_eq!(st, TlStatus::BufferTooSmall);
    assert_eq!(n, 11);
    let mut buf = vec![0.0; n];
    let st = unsafe { tl_solve_scalar(one, 1.0, 0.0, 5.0, 0.5, 1e-10, buf.as_mut_ptr(), n, &mut n) };
    assert_eq!(st, TlStatus::Ok);
    for (k, y) in buf.iter().enumerate() {
        let t = 0.5 * k as f64;
        assert!((y - (1.0 - (-t).exp())).abs() < 1e-12);
    }
    unsafe { tl_expr_free(one) };
}

#[test]
fn run_config_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"scenarios":[{"id":"s","theorem":"bounded","forcing":"1","weight":"1",
            "system":{"alpha":1},"grid":{"t_end":20,"h":0.05},"outputs":["report"]}]}"#,
    )
    .unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let mut code: c_int = -1;
    assert_eq!(unsafe { tl_run_config(c.as_ptr(), out.as_ptr(), &mut code) }, TlStatus::Ok);
    assert_eq!(code, 0);
    assert!(dir.path().join("out/s/report.json").exists());

    std::fs::write(&cfg, r#"{"scenarios":[{"id":"s"}]}"#).unwrap();
    assert_eq!(unsafe { tl_run_config(c.as_ptr(), out.as_ptr(), &mut code) }, TlStatus::ConfigError);
    assert_eq!(code, 2);
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/thetalab.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "tl_expr_parse",
        "tl_expr_eval",
        "tl_expr_derivative",
        "tl_expr_to_string",
        "tl_string_free",
        "tl_expr_free",
        "tl_moving_average",
        "tl_solve_scalar",
        "tl_run_config",
        "tl_last_error_message",
        "TL_STATUS_BUFFER_TOO_SMALL",
        "typedef struct TlExpr TlExpr",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "thetalab.h"
int main(void) {
    TlExpr *f = NULL;
    if (tl_expr_parse("exp(-t)", &f) != TL_STATUS_OK) return 1;
    double v = 0.0;
    if (tl_moving_average(f, 1.0, 2.0, 1e-12, &v) != TL_STATUS_OK) return 2;
    double want = exp(-1.0) - exp(-2.0);
    if (fabs(v - want) > 1e-12) return 3;
    if (tl_expr_parse("(", &f) != TL_STATUS_PARSE_ERROR) return 4;
    if (tl_last_error_message() == NULL) return 5;
    tl_expr_free(f);
    printf("ok\n");
    return 0;
}
"#;

/// Compiles a C client against the header and the static library when a C
/// compiler and the archive are available.
#[test]
fn c_client_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libthetalab_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("client");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to build");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

//! The checked-in header must declare every exported symbol, and a C program
//! built against it must link and run.

use std::path::{Path, PathBuf};
use std::process::Command;

const SYMBOLS: &[&str] = &[
    "pa_version",
    "pa_last_error_message",
    "pa_matrix_create",
    "pa_matrix_read",
    "pa_matrix_write",
    "pa_matrix_rows",
    "pa_matrix_cols",
    "pa_matrix_copy_data",
    "pa_matrix_free",
    "pa_distance",
    "pa_score",
    "pa_builtin_dim",
    "pa_embed_builtin",
    "pa_projection_fit",
    "pa_projection_apply",
    "pa_projection_explained_variance",
    "pa_projection_free",
    "pa_derangement",
    "pa_sign_test",
    "pa_cles",
];

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/prompt_adherence.h");
    std::fs::read_to_string(path).expect("header generated by the build script")
}

#[test]
fn declares_every_symbol() {
    let h = header();
    for s in SYMBOLS {
        assert!(h.contains(&format!("{s}(")), "{s} missing from header");
    }
    for s in ["PA_STATUS_OK = 0", "PA_STATUS_ERR_CONFIG = 2", "PA_STATUS_ERR_DATA = 3", "PA_STATUS_ERR_MATH = 4"] {
        assert!(h.contains(s), "{s} missing from header");
    }
    assert!(h.contains("typedef struct PaMatrix PaMatrix;"));
    assert!(h.contains("typedef struct PaProjection PaProjection;"));
}

/// Directory holding the build's static library, derived from the test
/// executable location (`target/<profile>/deps/<test>`).
fn lib_dir() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?.to_path_buf();
    dir.join("libprompt_adherence_ffi.a").is_file().then_some(dir)
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "prompt_adherence.h"

int main(void) {
    float a[6] = {0, 1, 1, 0, 0.5f, 0.5f};
    float b[6] = {3, 1, 2, 0, 2.5f, 0.7f};
    PaMatrix *x = NULL, *nm = NULL;
    if (pa_matrix_create(3, 2, a, "c", &x) != PA_STATUS_OK) return 10;
    if (pa_matrix_create(3, 2, b, "c", &nm) != PA_STATUS_OK) return 11;
    PaScore s;
    if (pa_score(PA_METRIC_MMD, x, nm, x, &s) != PA_STATUS_OK || s.value != 1.0) return 12;
    if (pa_score(PA_METRIC_FAD, x, x, x, &s) != PA_STATUS_ERR_MATH) return 13;
    if (strstr(pa_last_error_message(), "undefined") == NULL) return 14;
    double d[5] = {1, 1, 1, 1, 1};
    PaSignTest t;
    if (pa_sign_test(d, 5, PA_ALTERNATIVE_GREATER, &t) != PA_STATUS_OK || t.p_value != 0.03125) return 15;
    pa_matrix_free(x);
    pa_matrix_free(nm);
    printf("ok %s\n", pa_version());
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = lib_dir() else {
        eprintln!("static library not found next to the test binary; skipping C link check");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping C link check");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = tmp.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(lib.join("libprompt_adherence_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile/link failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

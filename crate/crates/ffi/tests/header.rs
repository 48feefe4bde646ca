//! The generated header must declare the whole surface and compile as C.

use std::path::PathBuf;
use std::process::Command;

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("gesturekit.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "gk_version",
        "gk_last_error_message",
        "gk_string_free",
        "gk_model_load",
        "gk_model_free",
        "gk_model_class_count",
        "gk_session_new",
        "gk_session_step",
        "gk_session_step_json",
        "gk_session_reset",
        "gk_session_free",
        "gk_generate_dataset",
        "typedef struct GkModel GkModel",
        "typedef struct GkSession GkSession",
        "GK_STATUS_OK = 0",
        "GK_STATUS_WEIGHT_FILE",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c99() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "gesturekit.h"
int main(void) {
    GkModel *m = NULL;
    GkStatus st = gk_model_load("missing.gkw", &m);
    (void)st;
    return gk_version() == NULL;
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

/// Links a C program against the static library built alongside this test.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().parent().unwrap().join("libgesturekit_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.jsonl");
    let src = dir.path().join("run.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "gesturekit.h"
int main(int argc, char **argv) {
    GkModel *m = NULL;
    if (gk_model_load("/nonexistent/m.gkw", &m) != GK_STATUS_IO || m != NULL) return 1;
    if (gk_last_error_message() == NULL) return 2;
    if (gk_generate_dataset(1, 4, 0.0, 3, argv[1]) != GK_STATUS_OK) return 3;
    double joints[63] = {0};
    if (gk_session_step(NULL, 0, joints, NULL, joints, 63, NULL) != GK_STATUS_NULL_POINTER) return 4;
    printf("%s\n", gk_version());
    return argc == 2 ? 0 : 5;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("run");
    let status = Command::new(cc)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "link failed");
    let run = Command::new(&bin).arg(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 8);
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}

//! The generated header compiles and links against the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "qbsde.h"

int main(void) {
    QbsdeTransform *t = NULL;
    if (qbsde_transform_new("kind = \"zero\"", &t) != QbsdeStatus_Ok) return 1;
    double u = 0.0, du = 0.0;
    if (qbsde_transform_eval(t, 1.5, &u, &du) != QbsdeStatus_Ok) return 2;
    qbsde_transform_free(t);
    if (u != 1.5 || du != 1.0) return 3;
    QbsdeScenario *s = NULL;
    if (qbsde_scenario_parse("nonsense", &s) != QbsdeStatus_Config) return 4;
    if (qbsde_last_error() == NULL || s != NULL) return 5;
    printf("%s\n", qbsde_version());
    return 0;
}
"#;

fn target_dir() -> Option<PathBuf> {
    // tests/<name>-<hash> lives in target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    Some(exe.parent()?.parent()?.to_path_buf())
}

#[test]
fn c_program_links() {
    let Some(profile_dir) = target_dir() else { return };
    let lib = profile_dir.join("libqbsde_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}

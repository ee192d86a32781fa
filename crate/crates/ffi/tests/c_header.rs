//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on the path.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "otflow.h"

int main(void) {
    OtflowConfig cfg;
    if (otflow_config_default(&cfg) != OTFLOW_STATUS_OK) return 1;
    cfg.refine_steps = 1;
    double a[16 * 16], b[16 * 16];
    for (int y = 0; y < 16; y++)
        for (int x = 0; x < 16; x++) {
            a[y * 16 + x] = 0.5 + 0.4 * sin(0.9 * x) * cos(0.7 * y);
            b[y * 16 + x] = a[y * 16 + x];
        }
    OtflowFlow *flow = NULL;
    if (otflow_estimate(a, b, 16, 16, 1, &cfg, &flow) != OTFLOW_STATUS_OK) return 2;
    size_t w = 0, h = 0;
    otflow_flow_size(flow, &w, &h);
    if (w != 16 || h != 16) return 3;
    OtflowFlow *bad = NULL;
    if (otflow_estimate(a, b, 15, 16, 1, NULL, &bad) != OTFLOW_STATUS_DIMENSION_MISMATCH) return 4;
    if (otflow_last_error() == NULL) return 5;
    otflow_flow_free(flow);
    printf("ok %s\n", otflow_version());
    return 0;
}
"#;

fn static_lib() -> Option<PathBuf> {
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    let profile = deps.parent()?;
    let direct = profile.join("libotflow_ffi.a");
    if direct.exists() {
        return Some(direct);
    }
    std::fs::read_dir(&deps)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("libotflow_ffi") && name.ends_with(".a")
        })
        .max_by_key(|p| p.metadata().and_then(|m| m.modified()).ok())
}

fn have(cmd: &str) -> bool {
    Command::new(cmd).arg("--version").output().is_ok()
}

#[test]
fn c_program_links_and_runs() {
    if !have("cc") {
        eprintln!("skipping: no C compiler");
        return;
    }
    let Some(lib) = static_lib() else {
        eprintln!("skipping: static library not built");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

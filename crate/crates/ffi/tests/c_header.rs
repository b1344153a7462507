//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on the PATH.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "hsisel.h"

int main(void) {
    double grid[3] = {450.0, 550.0, 650.0};
    float data[4 * 3];
    unsigned char labels[4] = {0, 0, 1, 1};
    for (int i = 0; i < 12; i++) data[i] = (float)(i % 3) * 0.1f + (i >= 6 ? 0.5f : 0.0f);

    HsiCube *cube = NULL;
    if (hsi_cube_from_data(4, 1, 3, grid, data, &cube) != HSI_STATUS_OK) return 10;
    size_t w = 0, h = 0, b = 0;
    hsi_cube_dims(cube, &w, &h, &b);

    HsiMask *gt = NULL, *pred = NULL;
    unsigned char guess[4] = {0, 1, 1, 1};
    if (hsi_mask_from_labels(4, 1, labels, &gt) != HSI_STATUS_OK) return 11;
    if (hsi_mask_from_labels(4, 1, guess, &pred) != HSI_STATUS_OK) return 12;
    HsiConfusion *cm = NULL;
    hsi_confusion_new(19, &cm);
    if (hsi_confusion_accumulate(cm, pred, gt) != HSI_STATUS_OK) return 13;
    HsiClassMetrics m;
    hsi_confusion_class_metrics(cm, 1, &m);

    HsiCube *missing = NULL;
    HsiStatus st = hsi_cube_load("/nonexistent.hdr", &missing);
    printf("%zu %zu %zu %.1f %d %d\n", w, h, b, m.iou, (int)st, hsi_last_error_message() != NULL);

    hsi_confusion_free(cm);
    hsi_mask_free(gt);
    hsi_mask_free(pred);
    hsi_cube_free(cube);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc)
        .arg("--version")
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|_| cc)
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("hsisel.h").exists(), "header not generated");
    let lib = target_dir().join("libhsisel_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    let exe = tmp.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4 1 3 66.7 3 1");
}

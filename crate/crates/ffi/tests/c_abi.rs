use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use sceneparse::bundle::ModelBundle;
use sceneparse::config::{RunConfig, Segmenter};
use sceneparse::imagedata::{generate_synthetic, SceneSpec};
use sceneparse::pipeline::{predict_image, train};
use sceneparse_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { sp_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn trained_bundle(dir: &Path) -> (PathBuf, sceneparse::imagedata::Dataset) {
    let ds = generate_synthetic(&SceneSpec { side: 32, n_scenes: 6, lattice: 4, ..Default::default() }, 3).unwrap();
    let mut cfg = RunConfig {
        image_side: 32,
        segmenter: Segmenter::Grid,
        superpixels: 16,
        blocks: 2,
        ..Default::default()
    };
    cfg.ga.generations = 2;
    cfg.mlp.epochs = 2;
    cfg.ova.max_iters = 20;
    let (bundle, _, _) = train(&ds, &cfg).unwrap();
    let path = dir.join("model.bundle");
    bundle.save(&path).unwrap();
    (path, ds)
}

#[test]
fn fitness_through_the_abi() {
    let mut out = 0.0;
    assert_eq!(unsafe { sp_fitness(0.2, 50, 100, 0.99, 0.01, &mut out) }, SpStatus::Ok);
    assert_eq!(out, 0.203);
    assert_eq!(unsafe { sp_fitness(0.2, 101, 100, 0.99, 0.01, &mut out) }, SpStatus::ConfigError);
    assert!(last_error().contains("selected"));
    assert_eq!(unsafe { sp_fitness(0.2, 1, 2, 0.99, 0.01, ptr::null_mut()) }, SpStatus::NullArgument);
}

#[test]
fn evaluate_four_pixels() {
    let pred = [0, 1, 1, 1];
    let gt = [0, 0, 1, 1];
    let mut s = SpEvalSummary::default();
    assert_eq!(unsafe { sp_evaluate(pred.as_ptr(), gt.as_ptr(), 4, 2, &mut s) }, SpStatus::Ok);
    assert_eq!((s.global_acc, s.evaluated_pixels), (0.75, 4));
    assert!((s.mean_iou - 0.5833).abs() < 1e-4);
    let gt = [-1; 4];
    assert_eq!(unsafe { sp_evaluate(pred.as_ptr(), gt.as_ptr(), 4, 2, &mut s) }, SpStatus::DataError);
    assert!(last_error().contains("no evaluable pixels"));
}

#[test]
fn model_lifecycle_matches_rust_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ds) = trained_bundle(dir.path());
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut model: *mut SpModel = ptr::null_mut();
    assert_eq!(unsafe { sp_model_load(cpath.as_ptr(), &mut model) }, SpStatus::Ok);
    assert!(!model.is_null());

    let mut c = 0usize;
    assert_eq!(unsafe { sp_model_num_classes(model, &mut c) }, SpStatus::Ok);
    assert_eq!(c, ds.classes.n_classes());

    let mut needed = 0usize;
    let mut small = [0 as c_char; 3];
    assert_eq!(unsafe { sp_model_class_name(model, 0, small.as_mut_ptr(), 3, &mut needed) }, SpStatus::Ok);
    assert_eq!(needed, "sky".len() + 1);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_str().unwrap(), "sk");
    assert_eq!(unsafe { sp_model_class_name(model, c, ptr::null_mut(), 0, ptr::null_mut()) }, SpStatus::ConfigError);

    let img = &ds.images[0];
    let mut labels = vec![-7i32; img.width * img.height];
    let status = unsafe { sp_predict_rgb(model, img.pixels.as_ptr(), img.width, img.height, labels.as_mut_ptr()) };
    assert_eq!(status, SpStatus::Ok);
    let bundle = ModelBundle::load(&path).unwrap();
    assert_eq!(labels, predict_image(&bundle, img).unwrap().full());

    assert_eq!(unsafe { sp_predict_rgb(model, img.pixels.as_ptr(), 0, 4, labels.as_mut_ptr()) }, SpStatus::DataError);
    unsafe { sp_model_free(model) };
    unsafe { sp_model_free(ptr::null_mut()) };
}

#[test]
fn load_errors_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let mut model: *mut SpModel = ptr::null_mut();
    let missing = CString::new(dir.path().join("none.bundle").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sp_model_load(missing.as_ptr(), &mut model) }, SpStatus::DataError);
    assert!(model.is_null());

    let (path, _) = trained_bundle(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = dir.path().join("cut.bundle");
    std::fs::write(&cut, &text[..text.find("section visual").unwrap() + 40]).unwrap();
    let cut = CString::new(cut.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sp_model_load(cut.as_ptr(), &mut model) }, SpStatus::ModelError);
    assert!(last_error().contains("`visual`"), "{}", last_error());

    assert_eq!(unsafe { sp_model_load(ptr::null(), &mut model) }, SpStatus::NullArgument);
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(sp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sceneparse.h")
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert_eq!(exports.len(), 9);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for item in ["typedef struct SpModel SpModel;", "SP_STATUS_OK = 0", "SP_STATUS_MODEL_ERROR = 4", "SP_STATUS_PANIC = 5"] {
        assert!(header.contains(item), "{item}");
    }
}

/// Compile and run a C program against the header and the static library
/// when a C compiler and the archive are available.
#[test]
fn c_program_links_against_staticlib() {
    let dir = tempfile::tempdir().unwrap();
    let main_c = dir.path().join("main.c");
    std::fs::write(
        &main_c,
        r#"#include "sceneparse.h"
#include <stdio.h>
int main(void) {
    double f = 0.0;
    if (sp_fitness(0.2, 50, 100, 0.99, 0.01, &f) != SP_STATUS_OK || f != 0.203) return 1;
    int32_t pred[4] = {0, 1, 1, 1}, gt[4] = {0, 0, 1, 1};
    SpEvalSummary s;
    if (sp_evaluate(pred, gt, 4, 2, &s) != SP_STATUS_OK || s.global_acc != 0.75) return 2;
    SpModel *m = NULL;
    if (sp_model_load("/nonexistent/model.bundle", &m) != SP_STATUS_DATA_ERROR || m != NULL) return 3;
    char msg[256];
    if (sp_last_error(msg, sizeof msg) <= 1) return 4;
    printf("ok %s\n", sp_version());
    return 0;
}
"#,
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let syntax = Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(&include).arg(&main_c).status();
    let Ok(status) = syntax else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(status.success(), "header does not compile as C");

    // the archive sits next to the test binary's deps directory
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libsceneparse_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; link step skipped", lib.display());
        return;
    }
    let bin = dir.path().join("demo");
    let status = Command::new("cc")
        .arg("-I")
        .arg(&include)
        .arg(&main_c)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "link failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C demo exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

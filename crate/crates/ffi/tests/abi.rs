use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use acnn::data::{SentenceBatch, Vocabulary};
use acnn::model::{ModelConfig, Network, Variant};
use acnn::train::Checkpoint;
use acnn_ffi::*;

fn save_model(dir: &Path, variant: Variant) -> (PathBuf, Checkpoint) {
    let cfg = ModelConfig::tiny(variant.task());
    let tokens: Vec<String> = (0..cfg.vocab_size - 2).map(|i| format!("w{i}")).collect();
    let ck = Checkpoint {
        network: Network::new(cfg, variant, 5).unwrap(),
        vocab: Vocabulary::from_tokens(tokens),
        max_len: 20,
    };
    let path = dir.join(format!("{variant}.ckpt"));
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    (path, back)
}

fn load(path: &Path) -> *mut AcnnModel {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { acnn_model_load(c.as_ptr(), &mut handle) }, AcnnStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(acnn_last_error()) }.to_str().unwrap().to_string()
}

#[test]
fn classifier_round_trip_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ck) = save_model(dir.path(), Variant::Acnn);
    let m = load(&path);
    let mut task = AcnnTask::Match;
    let mut classes = 0;
    unsafe {
        assert_eq!(acnn_model_task(m, &mut task), AcnnStatus::Ok);
        assert_eq!(acnn_model_num_classes(m, &mut classes), AcnnStatus::Ok);
    }
    assert_eq!(task, AcnnTask::Classify);
    assert_eq!(classes, 2);

    let text = CString::new("w3 w7 w1 unknown w9").unwrap();
    let mut label = usize::MAX;
    let mut logits = [0.0f64; 2];
    let status = unsafe { acnn_classify(m, text.as_ptr(), &mut label, logits.as_mut_ptr(), 2) };
    assert_eq!(status, AcnnStatus::Ok);

    let Network::Classifier(c) = &ck.network else { unreachable!() };
    let ids = ck.vocab.encode(&acnn::data::tokenize("w3 w7 w1 unknown w9"));
    let batch = SentenceBatch::from_rows(&[ids], c.config().h);
    assert_eq!(c.eval_logits(&batch).unwrap().data(), &logits);
    assert_eq!(c.predict(&batch).unwrap()[0], label);

    let status = unsafe { acnn_classify(m, text.as_ptr(), &mut label, logits.as_mut_ptr(), 1) };
    assert_eq!(status, AcnnStatus::BufferTooSmall);
    assert!(last_error().contains("need 2"));

    let mut score = 0.0;
    let status = unsafe { acnn_match_score(m, text.as_ptr(), text.as_ptr(), &mut score) };
    assert_eq!(status, AcnnStatus::WrongTask);
    unsafe { acnn_model_free(m) };
}

#[test]
fn matcher_scores_are_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ck) = save_model(dir.path(), Variant::TwoWay);
    let m = load(&path);
    let q = CString::new("w1 w2 w3 w4").unwrap();
    let a = CString::new("w5 w6").unwrap();
    let mut score = -1.0;
    assert_eq!(unsafe { acnn_match_score(m, q.as_ptr(), a.as_ptr(), &mut score) }, AcnnStatus::Ok);
    assert!(score > 0.0 && score < 1.0);

    let Network::Matcher(mm) = &ck.network else { unreachable!() };
    let enc = |s: &str| SentenceBatch::from_rows(&[ck.vocab.encode(&acnn::data::tokenize(s))], 3);
    assert_eq!(mm.score(&enc("w1 w2 w3 w4"), &enc("w5 w6")).unwrap()[0], score);

    let mut label = 0;
    let status = unsafe { acnn_classify(m, q.as_ptr(), &mut label, ptr::null_mut(), 0) };
    assert_eq!(status, AcnnStatus::WrongTask);
    unsafe { acnn_model_free(m) };
}

#[test]
fn ranking_metrics_over_flat_groups() {
    let scores = [0.9, 0.2, 0.1, 0.9, 0.5, 0.4, 0.3];
    let labels = [1u8, 0, 0, 0, 1, 0, 0];
    let sizes = [3usize, 2, 2];
    let (mut map, mut mrr) = (0.0, 0.0);
    let status = unsafe {
        acnn_ranking_metrics(scores.as_ptr(), labels.as_ptr(), sizes.as_ptr(), sizes.len(), &mut map, &mut mrr)
    };
    assert_eq!(status, AcnnStatus::Ok);
    assert_eq!(map, 0.75);
    assert_eq!(mrr, 0.75);

    let bad = [2u8, 0, 0, 0, 1, 0, 0];
    let status = unsafe {
        acnn_ranking_metrics(scores.as_ptr(), bad.as_ptr(), sizes.as_ptr(), sizes.len(), &mut map, &mut mrr)
    };
    assert_eq!(status, AcnnStatus::InvalidArgument);
}

#[test]
fn failures_set_codes_and_messages() {
    let mut handle = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    assert_eq!(unsafe { acnn_model_load(missing.as_ptr(), &mut handle) }, AcnnStatus::Io);
    assert!(handle.is_null());
    assert!(last_error().contains("nonexistent"));

    assert_eq!(unsafe { acnn_model_load(ptr::null(), &mut handle) }, AcnnStatus::NullPointer);
    assert_eq!(unsafe { acnn_model_load(missing.as_ptr(), ptr::null_mut()) }, AcnnStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { acnn_model_load(junk.as_ptr(), &mut handle) }, AcnnStatus::BadCheckpoint);

    let mut task = AcnnTask::Classify;
    assert_eq!(unsafe { acnn_model_task(ptr::null(), &mut task) }, AcnnStatus::NullPointer);
    unsafe { acnn_model_free(ptr::null_mut()) };

    let version = unsafe { CStr::from_ptr(acnn_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/acnn.h")).unwrap();
    for name in [
        "acnn_model_load",
        "acnn_model_free",
        "acnn_model_task",
        "acnn_model_num_classes",
        "acnn_classify",
        "acnn_match_score",
        "acnn_ranking_metrics",
        "acnn_last_error",
        "acnn_version",
        "typedef struct AcnnModel AcnnModel",
        "ACNN_STATUS_BUFFER_TOO_SMALL = 7",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Builds and runs a small C program against the header and static library.
#[test]
fn c_program_links_against_the_static_library() {
    // test builds only produce the rlib; build the archive in its own target dir
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = manifest.join("../../target/c-smoke");
    let built = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "-p", "acnn-ffi", "--lib", "--target-dir"])
        .arg(&target)
        .current_dir(manifest)
        .status()
        .unwrap();
    assert!(built.success());
    let lib = target.join("debug/libacnn_ffi.a");
    let dir = tempfile::tempdir().unwrap();
    let (model, _) = save_model(dir.path(), Variant::Cnn);
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "acnn.h"
int main(int argc, char **argv) {
    AcnnModel *m = NULL;
    if (acnn_model_load(argv[1], &m) != ACNN_STATUS_OK) { fprintf(stderr, "%s\n", acnn_last_error()); return 1; }
    size_t label = 99;
    double logits[2];
    AcnnStatus s = acnn_classify(m, "w1 w2 w3", &label, logits, 2);
    acnn_model_free(m);
    if (s != ACNN_STATUS_OK || label > 1) return 2;
    printf("%zu\n", label);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let include = manifest.join("include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&exe).arg(&model).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let label: usize = String::from_utf8(run.stdout).unwrap().trim().parse().unwrap();
    assert!(label <= 1);
}

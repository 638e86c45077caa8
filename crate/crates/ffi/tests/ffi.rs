// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ffi::{CStr, CString};
use std::ptr;

use aglb::evaluation::evaluate;
use aglb::lstm::io::{save_checkpoint, to_bytes};
use aglb::lstm::{init_model, next_word_distribution, AblationMask, AblationMode, Checkpoint, ModelConfig, UnitId};
use aglb::stimuli::{build_lexicon, corpus_vocabulary, generate_task, trials_to_jsonl, CorpusTemplate, ExpandOptions, Task};
use aglb_ffi::*;

fn model() -> Checkpoint {
    let vocab = corpus_vocabulary(&build_lexicon(), &CorpusTemplate::all());
    init_model(ModelConfig::new(vocab.len(), 6, 6, 5), vocab, 5).unwrap()
}

fn handle(ckpt: &Checkpoint) -> *mut AglbModel {
    let bytes = to_bytes(ckpt);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { aglb_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut m) }, AglbStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(aglb_last_error()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(aglb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn distribution_matches_core() {
    let ckpt = model();
    let m = handle(&ckpt);
    let v = ckpt.vocab.len();
    let prefix = "il ragazzo accanto ai bambini";
    let ids = ckpt.vocab.encode(&prefix.split(' ').collect::<Vec<_>>()).unwrap();
    let mut probs = vec![0.0; v];
    let st = unsafe { aglb_next_word_distribution(m, c(prefix).as_ptr(), ptr::null(), 0, false, probs.as_mut_ptr(), v) };
    assert_eq!(st, AglbStatus::Ok, "{}", last_error());
    assert_eq!(probs, next_word_distribution(&ckpt, &ids, &AblationMask::empty()).unwrap());
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let units = [1u32, 2, 0, 4];
    let st = unsafe { aglb_next_word_distribution(m, c(prefix).as_ptr(), units.as_ptr(), 2, true, probs.as_mut_ptr(), v) };
    assert_eq!(st, AglbStatus::Ok);
    let mask = AblationMask::from_units([UnitId::new(1, 2), UnitId::new(0, 4)]).with_mode(AblationMode::HiddenOnly);
    assert_eq!(probs, next_word_distribution(&ckpt, &ids, &mask).unwrap());
    unsafe { aglb_model_free(m) };
}

#[test]
fn error_statuses() {
    let ckpt = model();
    let m = handle(&ckpt);
    let v = ckpt.vocab.len();
    let mut probs = vec![0.0; v];
    let prefix = c("il ragazzo");

    let st = unsafe { aglb_next_word_distribution(ptr::null(), prefix.as_ptr(), ptr::null(), 0, false, probs.as_mut_ptr(), v) };
    assert_eq!(st, AglbStatus::NullArgument);
    assert!(last_error().contains("model"));

    let st = unsafe { aglb_next_word_distribution(m, prefix.as_ptr(), ptr::null(), 0, false, probs.as_mut_ptr(), v - 1) };
    assert_eq!(st, AglbStatus::BufferTooSmall);

    let st = unsafe { aglb_next_word_distribution(m, c("il zyzzyva").as_ptr(), ptr::null(), 0, false, probs.as_mut_ptr(), v) };
    assert_eq!(st, AglbStatus::Vocabulary);

    let st = unsafe { aglb_next_word_distribution(m, c("").as_ptr(), ptr::null(), 0, false, probs.as_mut_ptr(), v) };
    assert_ne!(st, AglbStatus::Ok);

    let units = [9u32, 0];
    let st = unsafe { aglb_next_word_distribution(m, prefix.as_ptr(), units.as_ptr(), 1, false, probs.as_mut_ptr(), v) };
    assert_ne!(st, AglbStatus::Ok);

    let mut out = ptr::null_mut();
    let junk = [1u8, 2, 3];
    assert_eq!(unsafe { aglb_model_from_bytes(junk.as_ptr(), 3, &mut out) }, AglbStatus::Checkpoint);
    assert!(out.is_null());
    assert_eq!(
        unsafe { aglb_model_load(c("/nonexistent/model.bin").as_ptr(), &mut out) },
        AglbStatus::Checkpoint
    );

    // success clears the message
    let mut idx = 0usize;
    assert_eq!(unsafe { aglb_model_token_index(m, c("ragazzo").as_ptr(), &mut idx) }, AglbStatus::Ok);
    assert_eq!(ckpt.vocab.token(idx), "ragazzo");
    assert_eq!(last_error(), "");
    unsafe { aglb_model_free(m) };
}

#[test]
fn byte_and_file_round_trip() {
    let ckpt = model();
    let m = handle(&ckpt);
    let mut needed = 0usize;
    assert_eq!(unsafe { aglb_model_to_bytes(m, ptr::null_mut(), 0, &mut needed) }, AglbStatus::BufferTooSmall);
    let mut buf = vec![0u8; needed];
    assert_eq!(unsafe { aglb_model_to_bytes(m, buf.as_mut_ptr(), buf.len(), &mut needed) }, AglbStatus::Ok);
    assert_eq!(buf, to_bytes(&ckpt));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_checkpoint(&ckpt, &path).unwrap();
    let mut m2 = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { aglb_model_load(p.as_ptr(), &mut m2) }, AglbStatus::Ok);
    let (mut v, mut h, mut l) = (0, 0, 0);
    assert_eq!(unsafe { aglb_model_dims(m2, &mut v, &mut h, &mut l) }, AglbStatus::Ok);
    assert_eq!((v, h, l), (ckpt.vocab.len(), 6, 2));
    unsafe {
        aglb_model_free(m);
        aglb_model_free(m2);
    }
}

#[test]
fn score_pair_reads_distribution() {
    let ckpt = model();
    let m = handle(&ckpt);
    let (mut pc, mut pw) = (0.0, 0.0);
    let st = unsafe {
        aglb_score_pair(m, c("il ragazzo").as_ptr(), c("conosce").as_ptr(), c("conoscono").as_ptr(), ptr::null(), 0, &mut pc, &mut pw)
    };
    assert_eq!(st, AglbStatus::Ok, "{}", last_error());
    let dist = next_word_distribution(&ckpt, &ckpt.vocab.encode(&["il", "ragazzo"]).unwrap(), &AblationMask::empty()).unwrap();
    assert_eq!(pc, dist[ckpt.vocab.index_of("conosce").unwrap()]);
    assert_eq!(pw, dist[ckpt.vocab.index_of("conoscono").unwrap()]);
    unsafe { aglb_model_free(m) };
}

#[test]
fn trials_generate_serialize_evaluate() {
    let ckpt = model();
    let m = handle(&ckpt);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { aglb_trials_generate(c("nounpp_number").as_ptr(), 24, 3, &mut t) }, AglbStatus::Ok);
    assert_eq!(unsafe { aglb_trials_len(t) }, 24);
    let expected = generate_task(Task::NounppNumber, &build_lexicon(), 24, 3, ExpandOptions::default()).unwrap();

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { aglb_trials_to_jsonl(t, &mut s) }, AglbStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(s) }.to_str().unwrap(), trials_to_jsonl(&expected));
    unsafe { aglb_string_free(s) };

    let (mut acc, mut sp) = (0.0, 0.0);
    assert_eq!(unsafe { aglb_trials_evaluate(m, t, ptr::null(), 0, &mut acc, &mut sp) }, AglbStatus::Ok);
    let recs = evaluate(&ckpt, &expected, None, &AblationMask::empty()).unwrap();
    let want = recs.iter().map(|r| f64::from(r.score)).sum::<f64>() / recs.len() as f64;
    assert_eq!(acc, want);
    assert!(sp > 0.0 && sp < 1.0);

    assert_eq!(unsafe { aglb_trials_generate(c("no_such_task").as_ptr(), 4, 3, &mut ptr::null_mut()) }, AglbStatus::InvalidArgument);
    unsafe {
        aglb_trials_free(t);
        aglb_model_free(m);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/aglb.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let mut n = 0;
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
            n += 1;
        }
    }
    assert!(n >= 15);
    assert!(header.contains("AGLB_STATUS_BUFFER_TOO_SMALL = 7"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let main = dir.path().join("main.c");
    std::fs::write(&main, "#include \"aglb.h\"\nint main(void) { AglbModel *m = 0; return aglb_model_free(m), AGLB_STATUS_OK; }\n").unwrap();
    let out = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&main)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}

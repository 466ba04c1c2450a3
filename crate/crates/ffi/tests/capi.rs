use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use sewer_anomaly_ffi::*;

const GEN: &str = r#"{
  "length": 1500,
  "seed": 11,
  "start_day": "4/2",
  "anomalies": [
    { "kind": "sudden_zero", "start_step": 400, "duration": 40 },
    { "kind": "sudden_increase", "start_step": 1000, "duration": 40, "magnitude": 5.0 }
  ]
}"#;

fn generated_csv() -> CString {
    let cfg = CString::new(GEN).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { sa_generate_csv(cfg.as_ptr(), &mut out) };
    assert_eq!(status, SaStatus::Ok);
    let csv = unsafe { CStr::from_ptr(out) }.to_owned();
    unsafe { sa_string_free(out) };
    csv
}

fn last_error() -> String {
    let p = sa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn train(csv: &CString, kind: SaDetectorKind) -> *mut SaModel {
    let mut model = ptr::null_mut();
    let status = unsafe { sa_model_train_csv(csv.as_ptr(), 4, 3, kind, 5, ptr::null(), &mut model) };
    assert_eq!(status, SaStatus::Ok, "{}", last_error());
    assert!(!model.is_null());
    model
}

#[test]
fn train_decide_evaluate_round_trip() {
    let csv = generated_csv();
    assert!(csv.to_str().unwrap().starts_with("day,hour,"));
    let model = train(&csv, SaDetectorKind::Ensemble);
    assert_eq!(unsafe { sa_model_dim(model) }, 12);
    assert!(sa_last_error_message().is_null());

    let mut report = SaReport::default();
    let status = unsafe { sa_model_evaluate_csv(model, csv.as_ptr(), &mut report) };
    assert_eq!(status, SaStatus::Ok);
    assert!(report.true_pos > 0);
    assert!(report.recall > 0.5, "{report:?}");

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { sa_model_to_json(model, &mut json) }, SaStatus::Ok);
    let mut reloaded = ptr::null_mut();
    assert_eq!(unsafe { sa_model_from_json(json, &mut reloaded) }, SaStatus::Ok);
    unsafe { sa_string_free(json) };

    let x = [150.0, 0.25, 0.45].repeat(4);
    let (mut va, mut vb) = (SaVerdict::Abnormal, SaVerdict::Abnormal);
    let mut score = 0.0;
    unsafe {
        assert_eq!(sa_model_decide(model, x.as_ptr(), x.len(), &mut va, &mut score), SaStatus::Ok);
        assert_eq!(sa_model_decide(reloaded, x.as_ptr(), x.len(), &mut vb, ptr::null_mut()), SaStatus::Ok);
    }
    assert_eq!(va, vb);
    assert!(score.is_nan());

    let zeros = [0.0; 12];
    unsafe { sa_model_decide(model, zeros.as_ptr(), zeros.len(), &mut va, ptr::null_mut()) };
    assert_eq!(va, SaVerdict::Abnormal);

    unsafe {
        sa_model_free(model);
        sa_model_free(reloaded);
    }
}

#[test]
fn single_detector_reports_a_score() {
    let csv = generated_csv();
    let model = train(&csv, SaDetectorKind::Iforest);
    let x = [150.0, 0.25, 0.45].repeat(4);
    let mut v = SaVerdict::Normal;
    let mut score = f64::NAN;
    assert_eq!(unsafe { sa_model_decide(model, x.as_ptr(), 12, &mut v, &mut score) }, SaStatus::Ok);
    assert!(score > 0.0 && score <= 1.0);
    unsafe { sa_model_free(model) };
}

#[test]
fn errors_map_to_status_codes() {
    let csv = generated_csv();
    let model = train(&csv, SaDetectorKind::Lof);
    let mut v = SaVerdict::Normal;
    let short = [1.0, 2.0];
    let status = unsafe { sa_model_decide(model, short.as_ptr(), 2, &mut v, ptr::null_mut()) };
    assert_eq!(status, SaStatus::Dimension);
    assert!(last_error().contains("expected 12"));

    let status = unsafe { sa_model_decide(model, ptr::null(), 0, &mut v, ptr::null_mut()) };
    assert_eq!(status, SaStatus::NullPointer);
    unsafe { sa_model_free(model) };

    let mut out = ptr::null_mut();
    let bad = CString::new("{\"format_version\": 99}").unwrap();
    assert_eq!(unsafe { sa_model_from_json(bad.as_ptr(), &mut out) }, SaStatus::FormatVersion);
    assert!(out.is_null());
    let bad = CString::new("not json").unwrap();
    assert_eq!(unsafe { sa_model_from_json(bad.as_ptr(), &mut out) }, SaStatus::Parse);

    let tiny = CString::new("day,hour,instantaneous_flow,liquid_level,flow_rate,label\n1/1,0:00,1,1,1,/\n").unwrap();
    let status = unsafe {
        sa_model_train_csv(tiny.as_ptr(), 5, 5, SaDetectorKind::Ocsvm, 0, ptr::null(), &mut out)
    };
    assert_eq!(status, SaStatus::Data);
    assert!(last_error().contains("no windows"));

    let status = unsafe {
        sa_model_train_csv(csv.as_ptr(), 0, 5, SaDetectorKind::Ocsvm, 0, ptr::null(), &mut out)
    };
    assert_eq!(status, SaStatus::Config);

    let cfg = CString::new("{\"lof\": {\"k\": 0}}").unwrap();
    let status = unsafe {
        sa_model_train_csv(csv.as_ptr(), 4, 3, SaDetectorKind::Lof, 0, cfg.as_ptr(), &mut out)
    };
    assert_ne!(status, SaStatus::Ok);

    let garbage = CString::new("day,hour\nx,y\n").unwrap();
    let mut report = SaReport::default();
    let status = unsafe { sa_model_evaluate_csv(ptr::null(), garbage.as_ptr(), &mut report) };
    assert_eq!(status, SaStatus::NullPointer);

    unsafe {
        sa_model_free(ptr::null_mut());
        sa_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { sa_model_dim(ptr::null()) }, 0);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/sewer_anomaly.h");
    for name in [
        "sa_last_error_message",
        "sa_string_free",
        "sa_model_from_json",
        "sa_model_to_json",
        "sa_model_train_csv",
        "sa_model_dim",
        "sa_model_decide",
        "sa_model_evaluate_csv",
        "sa_model_free",
        "sa_generate_csv",
        "typedef struct SaModel SaModel;",
        "SA_STATUS_DIMENSION = 5",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = std::env::temp_dir().join(format!("sa-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        "#include \"sewer_anomaly.h\"\nint main(void) { SaReport r; (void)r; return (int)SA_STATUS_OK; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&src)
        .status()
    {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; skipping"),
    }
}

use std::ffi::{c_char, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use survmoe::data::{parse_csv, prepare_splits, PrepSettings, PreparedSplits, Schema};
use survmoe::metrics;
use survmoe::model::DualMoeConfig;
use survmoe::trainer::{train_one, Checkpoint, TrainConfig};
use survmoe_ffi::*;

fn dataset() -> PreparedSplits {
    let mut text = String::from("id,a,b,duration,event\n");
    for i in 0..90u32 {
        let a = f64::from(i % 9) / 9.0;
        let b = f64::from((i * 7) % 11) / 11.0;
        let d = 1.0 + f64::from((i * 37) % 97) * (1.5 - a);
        text.push_str(&format!("p{i},{a},{b},{d},{}\n", u8::from(i % 4 != 0)));
    }
    let schema = Schema::from_toml_str(
        "duration = \"duration\"\nevent = \"event\"\nid = \"id\"\n",
        Path::new("s.toml"),
    )
    .unwrap();
    let settings = PrepSettings {
        t_max: 4,
        ..Default::default()
    };
    prepare_splits(&parse_csv(&text, &schema).unwrap(), &settings, 0).unwrap()
}

fn checkpoint(dir: &Path) -> (PathBuf, Checkpoint, PreparedSplits) {
    let data = dataset();
    let cfg = DualMoeConfig {
        encoder_depth: 1,
        encoder_width: 6,
        expert_width: 6,
        num_feature_experts: 2,
        num_hazard_experts: 3,
        d_time: 3,
        ..DualMoeConfig::metabric(2)
    };
    let train = TrainConfig {
        epochs: 2,
        patience: 2,
        batch_size: 16,
        ..Default::default()
    };
    let run = train_one(&cfg, &train, &data, 0).unwrap();
    let ck = Checkpoint {
        model: run.model,
        preprocessor: data.preprocessor.clone(),
        train_config: train,
        seed: 0,
        best_epoch: run.best_epoch,
    };
    let path = dir.join("model.bin");
    ck.write(&path).unwrap();
    (path, ck, data)
}

fn load(path: &Path) -> *mut SurvmoeModel {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { survmoe_model_load(c.as_ptr(), &mut m) }, SurvmoeStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { survmoe_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn predictions_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ck, data) = checkpoint(dir.path());
    let m = load(&path);
    let (mut p, mut t1, mut k, mut l) = (0, 0, 0, 0);
    assert_eq!(
        unsafe { survmoe_model_dims(m, &mut p, &mut t1, &mut k, &mut l) },
        SurvmoeStatus::Ok
    );
    assert_eq!((p, t1, k, l), (2, 5, 2, 3));

    let x: Vec<f64> = data.test.iter().flat_map(|r| r.x.clone()).collect();
    let n = data.test.len();
    let mut hazard = vec![0.0; n * t1];
    let mut surv = vec![0.0; n * t1];
    let st = unsafe { survmoe_model_predict(m, x.as_ptr(), n, p, hazard.as_mut_ptr(), surv.as_mut_ptr()) };
    assert_eq!(st, SurvmoeStatus::Ok);
    let mut pf = vec![0.0; n * k];
    let mut ph = vec![0.0; n * t1 * l];
    assert_eq!(
        unsafe { survmoe_model_routing(m, x.as_ptr(), n, p, pf.as_mut_ptr(), ph.as_mut_ptr()) },
        SurvmoeStatus::Ok
    );
    for (i, r) in data.test.iter().enumerate() {
        let (c, trace) = ck.model.predict_with_trace(&r.x).unwrap();
        assert_eq!(&hazard[i * t1..(i + 1) * t1], c.lambda.as_slice());
        assert_eq!(&surv[i * t1..(i + 1) * t1], c.survival.as_slice());
        assert_eq!(&pf[i * k..(i + 1) * k], trace.pi_feat.as_slice());
        assert_eq!(&ph[i * t1 * l..(i + 1) * t1 * l], trace.pi_haz.data());
    }
    unsafe { survmoe_model_free(m) };
}

#[test]
fn preprocessing_imputes_missing_values() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ck, _) = checkpoint(dir.path());
    let m = load(&path);
    let raw = [0.5, f64::NAN, 0.1, 0.9];
    let mut out = [0.0; 4];
    assert_eq!(
        unsafe { survmoe_model_preprocess(m, raw.as_ptr(), 2, 2, out.as_mut_ptr()) },
        SurvmoeStatus::Ok
    );
    assert_eq!(out[..2], ck.preprocessor.transform(&[0.5, f64::NAN]).unwrap()[..]);
    assert!(out.iter().all(|v| v.is_finite()));
    let st = unsafe { survmoe_model_preprocess(m, raw.as_ptr(), 1, 3, out.as_mut_ptr()) };
    assert_eq!(st, SurvmoeStatus::InvalidArgument);
    assert!(last_error().contains("expected 2 columns"));
    unsafe { survmoe_model_free(m) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { survmoe_model_load(ptr::null(), &mut m) },
        SurvmoeStatus::NullPointer
    );
    let missing = CString::new("/nonexistent/model.bin").unwrap();
    assert_eq!(
        unsafe { survmoe_model_load(missing.as_ptr(), &mut m) },
        SurvmoeStatus::IoError
    );
    assert!(m.is_null());
    assert!(last_error().contains("/nonexistent/model.bin"));

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a container").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { survmoe_model_load(junk.as_ptr(), &mut m) },
        SurvmoeStatus::FormatError
    );

    let mut out = 0.0;
    let st = unsafe {
        survmoe_cindex(
            [0.1, 0.2].as_ptr(),
            [1usize, 1].as_ptr(),
            [1u8, 1].as_ptr(),
            2,
            &mut out,
        )
    };
    assert_eq!(st, SurvmoeStatus::UndefinedMetric);
    assert_eq!(
        unsafe {
            survmoe_model_dims(
                ptr::null(),
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
            )
        },
        SurvmoeStatus::NullPointer
    );
    unsafe { survmoe_model_free(ptr::null_mut()) };
}

#[test]
fn metrics_match_the_library() {
    let risk = [0.9, 0.1, 0.5, 0.5, 0.3];
    let tau = [1usize, 4, 2, 3, 2];
    let event = [1u8, 0, 1, 1, 0];
    let ev: Vec<bool> = event.iter().map(|&e| e == 1).collect();
    let mut out = 0.0;
    assert_eq!(
        unsafe { survmoe_cindex(risk.as_ptr(), tau.as_ptr(), event.as_ptr(), 5, &mut out) },
        SurvmoeStatus::Ok
    );
    assert_eq!(out, metrics::harrell_cindex(&risk, &tau, &ev).unwrap().value);

    let surv: Vec<f64> = risk
        .iter()
        .flat_map(|r| (1..=5).map(move |t| (-r * t as f64).exp()))
        .collect();
    let curves: Vec<_> = surv
        .chunks(5)
        .map(|c| survmoe::model::HazardCurve::from_survival(c.to_vec()))
        .collect();
    let st = unsafe { survmoe_td_cindex(surv.as_ptr(), 5, 5, tau.as_ptr(), event.as_ptr(), 2, &mut out) };
    assert_eq!(st, SurvmoeStatus::Ok);
    assert_eq!(out, metrics::td_cindex(&curves, &tau, &ev, 2).unwrap().value);
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/survmoe.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "survmoe_model_load",
        "survmoe_model_free",
        "survmoe_last_error",
        "survmoe_td_cindex",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    assert!(text.contains("typedef struct SurvmoeModel SurvmoeModel;"));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(&src, "#include \"survmoe.h\"\nint main(void) { SurvmoeModel *m = 0; survmoe_model_free(m); return SURVMOE_STATUS_OK; }\n").unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(e) => eprintln!("no C compiler available, skipping compile check: {e}"),
    }
}

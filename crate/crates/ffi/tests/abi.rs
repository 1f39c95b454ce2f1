use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use groundkit_ffi::*;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    gk_string_free(s);
    out
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(gk_last_error_message())
            .to_str()
            .unwrap()
            .to_string()
    }
}

#[test]
fn action_round_trip_across_dialects() {
    unsafe {
        let mut a = ptr::null_mut();
        let text = cs("SCROLL <|box_start|>(10,20),(300,400)<|box_end|>");
        assert_eq!(
            gk_action_parse(text.as_ptr(), GkDialect::Pair, &mut a),
            GkStatus::Parse
        );
        assert!(a.is_null());

        let text = cs("TYPE [hello \\] world]");
        assert_eq!(
            gk_action_parse(text.as_ptr(), GkDialect::Tagged, &mut a),
            GkStatus::Ok
        );
        let mut s = ptr::null_mut();
        assert_eq!(gk_action_name(a, &mut s), GkStatus::Ok);
        assert_eq!(take(s), "TYPE");
        let mut p = GkPoint { x: 0, y: 0 };
        assert_eq!(gk_action_point(a, &mut p), GkStatus::NotPresent);
        assert_eq!(gk_action_serialize(a, GkDialect::Tagged, &mut s), GkStatus::Ok);
        assert_eq!(take(s), "TYPE [hello \\] world]");
        gk_action_free(a);
    }
}

#[test]
fn registry_canonicalizes_and_parses_aliases() {
    unsafe {
        let mut r = ptr::null_mut();
        let toml = cs("[mobile]\ntap = \"CLICK\"\nnavigate_home = \"PRESS_HOME\"\n");
        assert_eq!(gk_registry_from_toml(toml.as_ptr(), &mut r), GkStatus::Ok);
        let mut s = ptr::null_mut();
        let (raw, ds) = (cs("navigate_home"), cs("mobile"));
        assert_eq!(
            gk_registry_canonicalize(r, raw.as_ptr(), ds.as_ptr(), &mut s),
            GkStatus::Ok
        );
        assert_eq!(take(s), "PRESS_HOME");
        let raw = cs("wave");
        assert_eq!(
            gk_registry_canonicalize(r, raw.as_ptr(), ds.as_ptr(), &mut s),
            GkStatus::Registry
        );
        assert!(last_error().contains("wave"), "{}", last_error());

        let mut a = ptr::null_mut();
        let text = cs("tap <point>[[1, 2]]</point>");
        assert_eq!(
            gk_registry_parse(r, text.as_ptr(), GkDialect::Tagged, ds.as_ptr(), &mut a),
            GkStatus::Ok
        );
        assert_eq!(gk_action_name(a, &mut s), GkStatus::Ok);
        assert_eq!(take(s), "CLICK");
        gk_action_free(a);
        gk_registry_free(r);
    }
}

#[test]
fn elements_from_snapshot() {
    let doc = r#"{"id":"p","platform":"web","page_size":[1920,1080],"viewport":[1920,1080],"root":0,
        "nodes":[{"id":0,"role":"document","bbox":[0,0,1920,1080],"children":[1,2]},
                 {"id":1,"role":"button","name":"Save","bbox":[10,20,110,60]},
                 {"id":2,"role":"paragraph","text":"hello","bbox":[0,100,500,140]}]}"#;
    unsafe {
        let mut els = ptr::null_mut();
        let json = cs(doc);
        assert_eq!(gk_elements_from_snapshot(json.as_ptr(), &mut els), GkStatus::Ok);
        assert_eq!(gk_elements_len(els), 1);
        let mut b = GkPixelBox {
            x1: 0,
            y1: 0,
            x2: 0,
            y2: 0,
        };
        assert_eq!(gk_element_box(els, 0, &mut b), GkStatus::Ok);
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (10, 20, 110, 60));
        let mut s = ptr::null_mut();
        assert_eq!(gk_element_expression(els, 0, &mut s), GkStatus::Ok);
        assert_eq!(take(s), "Save");
        assert_eq!(gk_element_role(els, 0, &mut s), GkStatus::Ok);
        assert_eq!(take(s), "button");
        assert_eq!(gk_element_box(els, 1, &mut b), GkStatus::OutOfBounds);
        gk_elements_free(els);

        let bad = cs("{\"id\":1}");
        assert_eq!(
            gk_elements_from_snapshot(bad.as_ptr(), &mut els),
            GkStatus::Snapshot
        );
        assert_eq!(gk_elements_len(ptr::null()), 0);
    }
}

#[test]
fn metrics_and_argument_checks() {
    unsafe {
        let mut v = 0.0;
        let a = GkBox {
            x1: 0,
            y1: 0,
            x2: 100,
            y2: 100,
        };
        assert_eq!(gk_iou(a, a, &mut v), GkStatus::Ok);
        assert_eq!(v, 1.0);
        let inverted = GkBox {
            x1: 10,
            y1: 0,
            x2: 5,
            y2: 10,
        };
        assert_eq!(gk_iou(a, inverted, &mut v), GkStatus::Geometry);
        assert_eq!(gk_iou(a, a, ptr::null_mut()), GkStatus::NullArgument);

        let mut hit = false;
        assert_eq!(
            gk_point_in_box(GkPoint { x: 100, y: 100 }, a, &mut hit),
            GkStatus::Ok
        );
        assert!(hit);

        let screen = GkDims {
            width: 1920,
            height: 1080,
        };
        let (o, near, far) = (
            GkPoint { x: 500, y: 500 },
            GkPoint { x: 640, y: 500 },
            GkPoint { x: 641, y: 500 },
        );
        assert_eq!(gk_click_correct(near, o, screen, &mut hit), GkStatus::Ok);
        assert!(hit);
        assert_eq!(gk_click_correct(far, o, screen, &mut hit), GkStatus::Ok);
        assert!(!hit);
        let empty = GkDims { width: 0, height: 10 };
        assert_eq!(gk_click_correct(near, o, empty, &mut hit), GkStatus::Geometry);

        let (p, g) = (cs("open settings"), cs("open the settings"));
        assert_eq!(gk_token_f1(p.as_ptr(), g.as_ptr(), &mut v), GkStatus::Ok);
        assert!((v - 0.8).abs() < 1e-12);
        assert_eq!(
            gk_token_f1(ptr::null(), g.as_ptr(), &mut v),
            GkStatus::NullArgument
        );
        let bad = [0xffu8, 0];
        assert_eq!(
            gk_text_correct(bad.as_ptr().cast(), g.as_ptr(), &mut hit),
            GkStatus::InvalidUtf8
        );
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let text = cs("NOPE");
        let mut a = ptr::null_mut();
        assert_ne!(
            gk_action_parse(text.as_ptr(), GkDialect::Tagged, &mut a),
            GkStatus::Ok
        );
    }
    let msg = last_error();
    assert!(!msg.is_empty());
    std::thread::spawn(|| assert_eq!(last_error(), ""))
        .join()
        .unwrap();
}

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/groundkit.h");
    assert!(header.exists(), "build script writes the header");
    let lib = target_dir().join("libgroundkit_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C smoke test: no C compiler or static library");
        return;
    }
    let out = tempfile_path("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok 0.1.0");
    let _ = std::fs::remove_file(out);
}

fn tempfile_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!("groundkit-{stem}-{}", std::process::id()))
}

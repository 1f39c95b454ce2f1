//! C ABI over the action language, alias registry, element extraction and
//! evaluation metrics.
//!
//! Every fallible call returns a [`GkStatus`] and writes its result through
//! an out-pointer. On failure a message is kept per thread and can be read
//! with [`gk_last_error_message`]. Handles are opaque and owned by the
//! caller until passed to their `_free` function. Strings returned through
//! out-pointers are freed with [`gk_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use groundkit::action::{parse_action, serialize_action, AliasRegistry, Dialect, UnifiedAction};
use groundkit::eval;
use groundkit::geom::{Box, Dims, Point};
use groundkit::snapshot::{extract_elements, load_snapshot, Element, ExtractConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Registry = 4,
    Snapshot = 5,
    Geometry = 6,
    OutOfBounds = 7,
    NotPresent = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkDialect {
    Tagged = 0,
    Pair = 1,
}

impl From<GkDialect> for Dialect {
    fn from(d: GkDialect) -> Self {
        match d {
            GkDialect::Tagged => Dialect::Tagged,
            GkDialect::Pair => Dialect::Pair,
        }
    }
}

/// Per-mille point, both coordinates in `[0, 1000]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GkPoint {
    pub x: u16,
    pub y: u16,
}

/// Per-mille box with `x1 <= x2` and `y1 <= y2`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GkBox {
    pub x1: u16,
    pub y1: u16,
    pub x2: u16,
    pub y2: u16,
}

/// Page-pixel box.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GkPixelBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GkDims {
    pub width: u32,
    pub height: u32,
}

/// A parsed unified action.
pub struct GkAction(UnifiedAction);

/// Raw-name to canonical-action registry.
pub struct GkRegistry(AliasRegistry);

/// Interactable elements extracted from one snapshot.
pub struct GkElements(Vec<Element>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Failure = (GkStatus, String);

/// Run `f`, recording its failure message and turning panics into
/// [`GkStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GkStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GkStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (GkStatus::NullArgument, format!("`{what}` is null"))
}

/// # Safety
/// `p` is null or a valid nul-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (GkStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

/// # Safety
/// `p` is null or points to a live value of `T`.
unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `out` is null or writable.
unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

fn c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

fn point(p: GkPoint) -> Result<Point, Failure> {
    Point::new(p.x as i64, p.y as i64).map_err(|e| (GkStatus::Geometry, e.to_string()))
}

fn bbox(b: GkBox) -> Result<Box, Failure> {
    Box::new(b.x1 as i64, b.y1 as i64, b.x2 as i64, b.y2 as i64)
        .map_err(|e| (GkStatus::Geometry, e.to_string()))
}

fn element<'a>(els: *const GkElements, index: usize) -> Result<&'a Element, Failure> {
    let els = unsafe { ref_arg(els, "elements")? };
    els.0.get(index).ok_or_else(|| {
        (
            GkStatus::OutOfBounds,
            format!("element {index} of {}", els.0.len()),
        )
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse action text in the given dialect.
///
/// # Safety
/// `text` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_action_parse(
    text: *const c_char,
    dialect: GkDialect,
    out: *mut *mut GkAction,
) -> GkStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let a = parse_action(text, dialect.into()).map_err(|e| (GkStatus::Parse, e.to_string()))?;
        write_out(out, std::boxed::Box::into_raw(std::boxed::Box::new(GkAction(a))))
    })
}

/// # Safety
/// `action` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_action_serialize(
    action: *const GkAction,
    dialect: GkDialect,
    out: *mut *mut c_char,
) -> GkStatus {
    guard(|| {
        let a = ref_arg(action, "action")?;
        write_out(out, c_string(&serialize_action(&a.0, dialect.into())))
    })
}

/// Canonical action name, e.g. `CLICK`.
///
/// # Safety
/// `action` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_action_name(action: *const GkAction, out: *mut *mut c_char) -> GkStatus {
    guard(|| {
        let a = ref_arg(action, "action")?;
        write_out(out, c_string(a.0.name()))
    })
}

/// Point argument; `GK_STATUS_NOT_PRESENT` when the action has none.
///
/// # Safety
/// `action` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_action_point(action: *const GkAction, out: *mut GkPoint) -> GkStatus {
    guard(|| {
        let a = ref_arg(action, "action")?;
        let p =
            a.0.point()
                .ok_or((GkStatus::NotPresent, "action has no point".to_string()))?;
        write_out(out, GkPoint { x: p.x(), y: p.y() })
    })
}

/// Box argument; `GK_STATUS_NOT_PRESENT` when the action has none.
///
/// # Safety
/// `action` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_action_box(action: *const GkAction, out: *mut GkBox) -> GkStatus {
    guard(|| {
        let a = ref_arg(action, "action")?;
        let b =
            a.0.bbox()
                .ok_or((GkStatus::NotPresent, "action has no box".to_string()))?;
        let [x1, y1, x2, y2] = b.coords();
        write_out(out, GkBox { x1, y1, x2, y2 })
    })
}

/// # Safety
/// `action` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gk_action_free(action: *mut GkAction) {
    if !action.is_null() {
        drop(std::boxed::Box::from_raw(action));
    }
}

/// Build a registry from alias TOML (`[dataset] raw = "CANONICAL"`).
///
/// # Safety
/// `toml` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_registry_from_toml(toml: *const c_char, out: *mut *mut GkRegistry) -> GkStatus {
    guard(|| {
        let src = str_arg(toml, "toml")?;
        let r = AliasRegistry::from_toml_str(src).map_err(|e| (GkStatus::Registry, e.to_string()))?;
        write_out(
            out,
            std::boxed::Box::into_raw(std::boxed::Box::new(GkRegistry(r))),
        )
    })
}

/// Canonical name for a dataset's raw action name.
///
/// # Safety
/// `registry` is a live handle; strings are nul-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_registry_canonicalize(
    registry: *const GkRegistry,
    raw: *const c_char,
    dataset: *const c_char,
    out: *mut *mut c_char,
) -> GkStatus {
    guard(|| {
        let r = ref_arg(registry, "registry")?;
        let raw = str_arg(raw, "raw")?;
        let dataset = str_arg(dataset, "dataset")?;
        let name =
            r.0.canonicalize(raw, dataset)
                .map_err(|e| (GkStatus::Registry, e.to_string()))?;
        write_out(out, c_string(name.as_str()))
    })
}

/// Parse action text whose name may be a raw alias of `dataset`.
///
/// # Safety
/// `registry` is a live handle; strings are nul-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_registry_parse(
    registry: *const GkRegistry,
    text: *const c_char,
    dialect: GkDialect,
    dataset: *const c_char,
    out: *mut *mut GkAction,
) -> GkStatus {
    guard(|| {
        let r = ref_arg(registry, "registry")?;
        let text = str_arg(text, "text")?;
        let dataset = str_arg(dataset, "dataset")?;
        let a =
            r.0.parse(text, dialect.into(), dataset)
                .map_err(|e| (GkStatus::Parse, e.to_string()))?;
        write_out(out, std::boxed::Box::into_raw(std::boxed::Box::new(GkAction(a))))
    })
}

/// # Safety
/// `registry` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gk_registry_free(registry: *mut GkRegistry) {
    if !registry.is_null() {
        drop(std::boxed::Box::from_raw(registry));
    }
}

/// Load a snapshot document and extract its interactable elements with the
/// default role set.
///
/// # Safety
/// `json` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_elements_from_snapshot(
    json: *const c_char,
    out: *mut *mut GkElements,
) -> GkStatus {
    guard(|| {
        let src = str_arg(json, "json")?;
        let snap = load_snapshot(src.as_bytes()).map_err(|e| (GkStatus::Snapshot, e.to_string()))?;
        let els = extract_elements(&snap, &ExtractConfig::default());
        write_out(
            out,
            std::boxed::Box::into_raw(std::boxed::Box::new(GkElements(els))),
        )
    })
}

/// Number of elements; 0 for a null handle.
///
/// # Safety
/// `elements` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gk_elements_len(elements: *const GkElements) -> usize {
    elements.as_ref().map_or(0, |e| e.0.len())
}

/// # Safety
/// `elements` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_element_box(
    elements: *const GkElements,
    index: usize,
    out: *mut GkPixelBox,
) -> GkStatus {
    guard(|| {
        let b = element(elements, index)?.bbox;
        write_out(
            out,
            GkPixelBox {
                x1: b.x1,
                y1: b.y1,
                x2: b.x2,
                y2: b.y2,
            },
        )
    })
}

/// # Safety
/// `elements` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_element_expression(
    elements: *const GkElements,
    index: usize,
    out: *mut *mut c_char,
) -> GkStatus {
    guard(|| {
        let e = element(elements, index)?;
        write_out(out, c_string(&e.referring_expression))
    })
}

/// # Safety
/// `elements` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_element_role(
    elements: *const GkElements,
    index: usize,
    out: *mut *mut c_char,
) -> GkStatus {
    guard(|| {
        let e = element(elements, index)?;
        write_out(out, c_string(&e.role))
    })
}

/// # Safety
/// `elements` is null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gk_elements_free(elements: *mut GkElements) {
    if !elements.is_null() {
        drop(std::boxed::Box::from_raw(elements));
    }
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_iou(a: GkBox, b: GkBox, out: *mut f64) -> GkStatus {
    guard(|| write_out(out, eval::iou(bbox(a)?, bbox(b)?)))
}

/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_point_in_box(p: GkPoint, b: GkBox, out: *mut bool) -> GkStatus {
    guard(|| write_out(out, eval::point_in_box(point(p)?, bbox(b)?)))
}

/// Whether `pred` lies within 14% of the screen width of `gt`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_click_correct(
    pred: GkPoint,
    gt: GkPoint,
    screen: GkDims,
    out: *mut bool,
) -> GkStatus {
    guard(|| {
        let dims = Dims::new(screen.width, screen.height);
        dims.check().map_err(|e| (GkStatus::Geometry, e.to_string()))?;
        write_out(out, eval::click_correct(point(pred)?, point(gt)?, dims))
    })
}

/// # Safety
/// Strings are nul-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_token_f1(pred: *const c_char, gt: *const c_char, out: *mut f64) -> GkStatus {
    guard(|| write_out(out, eval::token_f1(str_arg(pred, "pred")?, str_arg(gt, "gt")?)))
}

/// # Safety
/// Strings are nul-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn gk_text_correct(pred: *const c_char, gt: *const c_char, out: *mut bool) -> GkStatus {
    guard(|| {
        write_out(
            out,
            eval::text_correct(str_arg(pred, "pred")?, str_arg(gt, "gt")?),
        )
    })
}

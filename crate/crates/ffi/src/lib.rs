//! C ABI over `codedvtr`.
//!
//! Every fallible call returns a [`CvtrStatus`]; on failure a message is kept
//! per thread and read with [`cvtr_last_error_message`]. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.
//! Panics never cross the boundary; they surface as `CVTR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use codedvtr::model::{scene_grid, Model};
use codedvtr::numerics::checkpoint::Checkpoint;
use codedvtr::patterns::{kmodes, KModesConfig};
use codedvtr::voxel::io::ScenePoint;
use codedvtr::voxel::{build_neighbor_index, occupancy_masks, OccupancyMask, SparseVoxelGrid, VoxelCoord};
use codedvtr::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvtrStatus {
    Ok = 0,
    /// Bad argument, shape or configuration.
    Invalid = 1,
    /// Non-finite values or a failed numerical check.
    Numerical = 2,
    /// File missing, unreadable or malformed.
    Io = 3,
    NullPointer = 4,
    /// Output buffer smaller than required.
    BufferTooSmall = 5,
    Panic = 6,
}

/// Voxelized point cloud.
pub struct CvtrGrid {
    grid: SparseVoxelGrid,
}

/// Trained network loaded from a checkpoint.
pub struct CvtrModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(CvtrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => CvtrStatus::Numerical,
            3 => CvtrStatus::Io,
            _ => CvtrStatus::Invalid,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: CvtrStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CvtrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CvtrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CvtrStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return fail(CvtrStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_out<'a, T>(ptr: *mut T, cap: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if cap < need {
        return fail(CvtrStatus::BufferTooSmall, format!("{what} holds {cap} values, {need} needed"));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return fail(CvtrStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, need))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().map_or_else(|| fail(CvtrStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn points(xyz: *const f64, labels: *const u32, n: usize) -> Result<Vec<ScenePoint>, Failure> {
    let xyz = slice_in(xyz, 3 * n, "xyz")?;
    let labels = if labels.is_null() { None } else { Some(slice_in(labels, n, "labels")?) };
    Ok(xyz
        .chunks_exact(3)
        .enumerate()
        .map(|(i, p)| ScenePoint { position: [p[0], p[1], p[2]], label: labels.map(|l| l[i]) })
        .collect())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn cvtr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cvtr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Voxelizes `n` points (`xyz` holds `3 n` doubles). `labels` may be null;
/// otherwise it holds `n` class ids.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvtr_grid_from_points(
    xyz: *const f64,
    labels: *const u32,
    n: usize,
    voxel_size: f64,
    out: *mut *mut CvtrGrid,
) -> CvtrStatus {
    guard(|| {
        if out.is_null() {
            return fail(CvtrStatus::NullPointer, "out is null");
        }
        let pts = points(xyz, labels, n)?;
        let grid = scene_grid(&pts, voxel_size, 1.0)?;
        *out = Box::into_raw(Box::new(CvtrGrid { grid }));
        Ok(())
    })
}

/// Number of occupied voxels; 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cvtr_grid_len(grid: *const CvtrGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.len())
}

/// Writes `3 len` voxel coordinates in the grid's canonical order.
///
/// # Safety
/// `grid` must be a live handle and `out` valid for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn cvtr_grid_coords(grid: *const CvtrGrid, out: *mut i32, cap: usize) -> CvtrStatus {
    guard(|| {
        let g = &handle(grid, "grid")?.grid;
        let dst = slice_out(out, cap, 3 * g.len(), "out")?;
        for (d, c) in dst.chunks_exact_mut(3).zip(g.coords()) {
            d.copy_from_slice(&[c.i, c.j, c.k]);
        }
        Ok(())
    })
}

/// Writes one 27-bit occupancy mask per voxel at `dilation`.
///
/// # Safety
/// `grid` must be a live handle and `out` valid for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn cvtr_grid_occupancy(grid: *const CvtrGrid, dilation: u32, out: *mut u32, cap: usize) -> CvtrStatus {
    guard(|| {
        let g = &handle(grid, "grid")?.grid;
        let dst = slice_out(out, cap, g.len(), "out")?;
        let masks = occupancy_masks(&build_neighbor_index(g, dilation)?);
        for (d, m) in dst.iter_mut().zip(masks) {
            *d = m.bits();
        }
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cvtr_grid_free(grid: *mut CvtrGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// K-modes over `n` 27-bit masks with `m` clusters. Writes `m` centroids,
/// and when non-null, `n` cluster indices and the total Hamming cost.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn cvtr_kmodes(
    masks: *const u32,
    n: usize,
    m: usize,
    seed: u64,
    restarts: usize,
    centroids: *mut u32,
    assignment: *mut u32,
    cost: *mut f64,
) -> CvtrStatus {
    guard(|| {
        let input: Vec<OccupancyMask> = slice_in(masks, n, "masks")?.iter().map(|&b| OccupancyMask(b & OccupancyMask::FULL.0)).collect();
        let out_c = slice_out(centroids, m, m, "centroids")?;
        let r = kmodes(&input, &KModesConfig { restarts, ..KModesConfig::new(m, seed) })?;
        for (d, c) in out_c.iter_mut().zip(&r.centroids) {
            *d = c.bits();
        }
        if !assignment.is_null() {
            for (d, &a) in std::slice::from_raw_parts_mut(assignment, n).iter_mut().zip(&r.assignment) {
                *d = a as u32;
            }
        }
        if let Some(c) = cost.as_mut() {
            *c = r.cost;
        }
        Ok(())
    })
}

/// Loads a checkpoint written by `codedvtr train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvtr_model_load(path: *const c_char, out: *mut *mut CvtrModel) -> CvtrStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(CvtrStatus::NullPointer, "path or out is null");
        }
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(CvtrStatus::Invalid, "path is not UTF-8");
        };
        let model = Model::from_checkpoint(&Checkpoint::load(Path::new(p))?)?;
        *out = Box::into_raw(Box::new(CvtrModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cvtr_model_param_count(model: *const CvtrModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.param_count())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cvtr_model_classes(model: *const CvtrModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.classes)
}

/// Predicts a class for each of `n` points; points in the same voxel share
/// the voxel's prediction.
///
/// # Safety
/// `model` must be a live handle, `xyz` valid for `3 n` doubles and `out`
/// for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn cvtr_model_predict(
    model: *const CvtrModel,
    xyz: *const f64,
    n: usize,
    out: *mut u32,
    cap: usize,
) -> CvtrStatus {
    guard(|| {
        let m = &handle(model, "model")?.model;
        let dst = slice_out(out, cap, n, "out")?;
        let pts = points(xyz, std::ptr::null(), n)?;
        let data = m.prepare(&pts)?;
        let pred = m.predict(&data)?;
        let vs = m.config.voxel_size;
        for (d, p) in dst.iter_mut().zip(&pts) {
            let [i, j, k] = p.position.map(|v| (v / vs).floor() as i32);
            let Some(row) = data.grid.row_of(VoxelCoord::new(i, j, k)) else {
                return fail(CvtrStatus::Invalid, "point outside the voxelized scene");
            };
            *d = pred[row];
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cvtr_model_free(model: *mut CvtrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

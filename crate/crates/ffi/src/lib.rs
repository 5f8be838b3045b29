//! C ABI for the prompt-adherence library.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! a [`PaStatus`]; on failure, `pa_last_error_message` describes the error on
//! the calling thread until the next failing call.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use prompt_adherence::adherence::{adherence_score, derangement};
use prompt_adherence::audio::AudioWindow;
use prompt_adherence::embedding::{embed_window, read_embeddings, write_embeddings, BuiltinEmbedder, EmbeddingMatrix};
use prompt_adherence::metrics::{distance, Metric};
use prompt_adherence::projection::{Projection, ProjectionKind};
use prompt_adherence::rng::rng_from_seed;
use prompt_adherence::stats::{cles, sign_test, Alternative};
use prompt_adherence::{Error, ErrorKind};

/// Result of every fallible call. Values 1 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaStatus {
    Ok = 0,
    ErrOther = 1,
    ErrConfig = 2,
    ErrData = 3,
    ErrMath = 4,
    /// A required pointer argument was null.
    ErrNull = 5,
    /// The library panicked; the handle arguments should be considered lost.
    ErrPanic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaMetric {
    Fad = 0,
    Mmd = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaAlternative {
    Greater = 0,
    Less = 1,
    TwoSided = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PaScore {
    pub value: f64,
    pub d_matching: f64,
    pub d_nonmatching: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PaSignTest {
    pub p_value: f64,
    pub n_effective: usize,
    pub n_positive: usize,
}

/// Opaque embedding matrix.
pub struct PaMatrix(EmbeddingMatrix);

/// Opaque fitted projection.
pub struct PaProjection(Projection);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PaStatus {
    match err.kind() {
        ErrorKind::Config => PaStatus::ErrConfig,
        ErrorKind::Data => PaStatus::ErrData,
        ErrorKind::Math => PaStatus::ErrMath,
        ErrorKind::Other => PaStatus::ErrOther,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> PaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PaStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PaStatus::ErrNull
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PaStatus::ErrPanic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string(p: *const c_char, what: &'static str) -> FfiResult<String> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

fn metric(m: PaMetric) -> Metric {
    match m {
        PaMetric::Fad => Metric::Fad,
        PaMetric::Mmd => Metric::Mmd,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Copies a row-major `rows x cols` buffer into a new matrix.
#[no_mangle]
pub unsafe extern "C" fn pa_matrix_create(
    rows: usize,
    cols: usize,
    data: *const f32,
    backend_id: *const c_char,
    out_matrix: *mut *mut PaMatrix,
) -> PaStatus {
    guard(|| {
        let dst = out(out_matrix, "out_matrix")?;
        let len = rows
            .checked_mul(cols)
            .ok_or(Failure::Lib(Error::DimensionOverflow {
                rows: rows as u64,
                cols: cols as u64,
            }))?;
        let values = slice(data, len, "data")?.to_vec();
        let id = string(backend_id, "backend_id")?;
        let m = EmbeddingMatrix::new(rows, cols, values, id)?;
        *dst = Box::into_raw(Box::new(PaMatrix(m)));
        Ok(())
    })
}

/// Reads an AEMB v1 file.
#[no_mangle]
pub unsafe extern "C" fn pa_matrix_read(path: *const c_char, out_matrix: *mut *mut PaMatrix) -> PaStatus {
    guard(|| {
        let dst = out(out_matrix, "out_matrix")?;
        let m = read_embeddings(&PathBuf::from(string(path, "path")?))?;
        *dst = Box::into_raw(Box::new(PaMatrix(m)));
        Ok(())
    })
}

/// Writes an AEMB v1 file.
#[no_mangle]
pub unsafe extern "C" fn pa_matrix_write(matrix: *const PaMatrix, path: *const c_char) -> PaStatus {
    guard(|| {
        let m = deref(matrix, "matrix")?;
        write_embeddings(&m.0, &PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// Row count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pa_matrix_rows(matrix: *const PaMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.rows())
}

/// Column count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pa_matrix_cols(matrix: *const PaMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the row-major values into `buffer`, which must hold `len` floats
/// with `len >= rows * cols`.
#[no_mangle]
pub unsafe extern "C" fn pa_matrix_copy_data(matrix: *const PaMatrix, buffer: *mut f32, len: usize) -> PaStatus {
    guard(|| {
        let m = deref(matrix, "matrix")?;
        let data = m.0.data();
        if len < data.len() {
            return Err(Error::InvalidArgument(format!("buffer holds {len} values, need {}", data.len())).into());
        }
        if data.is_empty() {
            return Ok(());
        }
        if buffer.is_null() {
            return Err(Failure::Null("buffer"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buffer, data.len());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pa_matrix_free(matrix: *mut PaMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Distance of `candidate` to `reference` under `metric`.
#[no_mangle]
pub unsafe extern "C" fn pa_distance(
    metric_id: PaMetric,
    reference: *const PaMatrix,
    candidate: *const PaMatrix,
    out_distance: *mut f64,
) -> PaStatus {
    guard(|| {
        let dst = out(out_distance, "out_distance")?;
        let r = deref(reference, "reference")?;
        let c = deref(candidate, "candidate")?;
        *dst = distance(metric(metric_id), &r.0, &c.0)?;
        Ok(())
    })
}

/// Adherence score of `candidate` given matching and non-matching references.
/// Both distances zero yields `PA_STATUS_ERR_MATH`.
#[no_mangle]
pub unsafe extern "C" fn pa_score(
    metric_id: PaMetric,
    matching: *const PaMatrix,
    nonmatching: *const PaMatrix,
    candidate: *const PaMatrix,
    out_score: *mut PaScore,
) -> PaStatus {
    guard(|| {
        let dst = out(out_score, "out_score")?;
        let m = deref(matching, "matching")?;
        let n = deref(nonmatching, "nonmatching")?;
        let c = deref(candidate, "candidate")?;
        let s = adherence_score(metric(metric_id), &m.0, &n.0, &c.0)?;
        *dst = PaScore {
            value: s.value,
            d_matching: s.d_matching,
            d_nonmatching: s.d_nonmatching,
        };
        Ok(())
    })
}

/// Dimensionality of the builtin embedder.
#[no_mangle]
pub extern "C" fn pa_builtin_dim() -> usize {
    prompt_adherence::embedding::EMBEDDING_DIM
}

/// Embeds one mono window with the builtin embedder into a 1-row matrix.
#[no_mangle]
pub unsafe extern "C" fn pa_embed_builtin(
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    out_matrix: *mut *mut PaMatrix,
) -> PaStatus {
    guard(|| {
        let dst = out(out_matrix, "out_matrix")?;
        let window = AudioWindow::new(slice(samples, len, "samples")?.to_vec(), sample_rate);
        let embedder = BuiltinEmbedder::new();
        let v = embed_window(&embedder, &window)?;
        let m = EmbeddingMatrix::new(1, v.len(), v, prompt_adherence::embedding::BUILTIN_BACKEND)?;
        *dst = Box::into_raw(Box::new(PaMatrix(m)));
        Ok(())
    })
}

/// Fits a whitening PCA with `k` components on the rows of `matrix`;
/// `k = 0` gives the identity projection.
#[no_mangle]
pub unsafe extern "C" fn pa_projection_fit(
    matrix: *const PaMatrix,
    k: usize,
    out_projection: *mut *mut PaProjection,
) -> PaStatus {
    guard(|| {
        let dst = out(out_projection, "out_projection")?;
        let m = deref(matrix, "matrix")?;
        let kind = if k == 0 {
            ProjectionKind::Identity
        } else {
            ProjectionKind::Pca(k)
        };
        *dst = Box::into_raw(Box::new(PaProjection(Projection::fit(&m.0, kind)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pa_projection_apply(
    projection: *const PaProjection,
    matrix: *const PaMatrix,
    out_matrix: *mut *mut PaMatrix,
) -> PaStatus {
    guard(|| {
        let dst = out(out_matrix, "out_matrix")?;
        let p = deref(projection, "projection")?;
        let m = deref(matrix, "matrix")?;
        *dst = Box::into_raw(Box::new(PaMatrix(p.0.apply(&m.0)?)));
        Ok(())
    })
}

/// Fraction of the fit data's variance kept by the projection, or NaN for a
/// null handle.
#[no_mangle]
pub unsafe extern "C" fn pa_projection_explained_variance(projection: *const PaProjection) -> f64 {
    projection
        .as_ref()
        .map_or(f64::NAN, |p| p.0.explained_variance_ratio())
}

#[no_mangle]
pub unsafe extern "C" fn pa_projection_free(projection: *mut PaProjection) {
    if !projection.is_null() {
        drop(Box::from_raw(projection));
    }
}

/// Writes a uniform random derangement of `0..n` into `out_perm` (length n).
#[no_mangle]
pub unsafe extern "C" fn pa_derangement(n: usize, seed: u64, out_perm: *mut usize) -> PaStatus {
    guard(|| {
        let perm = derangement(n, &mut rng_from_seed(seed))?;
        if out_perm.is_null() {
            return Err(Failure::Null("out_perm"));
        }
        ptr::copy_nonoverlapping(perm.as_ptr(), out_perm, n);
        Ok(())
    })
}

/// Exact sign test on `n` paired differences; zeros are dropped.
#[no_mangle]
pub unsafe extern "C" fn pa_sign_test(
    diffs: *const f64,
    n: usize,
    alternative: PaAlternative,
    out_result: *mut PaSignTest,
) -> PaStatus {
    guard(|| {
        let dst = out(out_result, "out_result")?;
        let alt = match alternative {
            PaAlternative::Greater => Alternative::Greater,
            PaAlternative::Less => Alternative::Less,
            PaAlternative::TwoSided => Alternative::TwoSided,
        };
        let t = sign_test(slice(diffs, n, "diffs")?, alt)?;
        *dst = PaSignTest {
            p_value: t.p_value,
            n_effective: t.n_effective,
            n_positive: t.n_positive,
        };
        Ok(())
    })
}

/// Probability that a perturbed score is below a matching score, ties 1/2.
#[no_mangle]
pub unsafe extern "C" fn pa_cles(
    perturbed: *const f64,
    n_perturbed: usize,
    matching: *const f64,
    n_matching: usize,
    out_cles: *mut f64,
) -> PaStatus {
    guard(|| {
        let dst = out(out_cles, "out_cles")?;
        *dst = cles(
            slice(perturbed, n_perturbed, "perturbed")?,
            slice(matching, n_matching, "matching")?,
        )?;
        Ok(())
    })
}

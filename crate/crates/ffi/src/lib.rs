//! C interface to the `nexus` sampler.
//!
//! Every fallible function returns a [`NexusStatus`]. On failure a message is
//! kept for the calling thread and can be copied out with
//! [`nexus_last_error_message`]. Datasets and traces are opaque handles owned
//! by the caller and released with the matching `_free` function. Matrices are
//! passed row-major; per-edge arrays list the pairs `(0,1), (0,2), …, (p−2,p−1)`
//! group after group.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::DMatrix;
use nexus::eval::roc_auc;
use nexus::model::effective_sample_sizes;
use nexus::{
    network_similarity, run_chain, select_edges, ChainTrace, Error, Hyperparameters, PairIndex,
    PanDataset, RngHandle,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NexusStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Unsupported = 5,
    Panic = 6,
}

/// Sampler settings. Fill with [`nexus_hyper_defaults`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NexusHyper {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub alpha_gamma: f64,
    pub beta_gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub seed: u64,
    pub independent_mode: bool,
}

impl From<&Hyperparameters> for NexusHyper {
    fn from(h: &Hyperparameters) -> Self {
        Self {
            alpha1: h.alpha1,
            beta1: h.beta1,
            alpha2: h.alpha2,
            beta2: h.beta2,
            alpha_gamma: h.alpha_gamma,
            beta_gamma: h.beta_gamma,
            delta: h.delta,
            kappa: h.kappa,
            n_iterations: h.n_iterations,
            n_burnin: h.n_burnin,
            seed: h.seed,
            independent_mode: h.independent_mode,
        }
    }
}

impl From<&NexusHyper> for Hyperparameters {
    fn from(h: &NexusHyper) -> Self {
        Self {
            alpha1: h.alpha1,
            beta1: h.beta1,
            alpha2: h.alpha2,
            beta2: h.beta2,
            alpha_gamma: h.alpha_gamma,
            beta_gamma: h.beta_gamma,
            delta: h.delta,
            kappa: h.kappa,
            n_iterations: h.n_iterations,
            n_burnin: h.n_burnin,
            seed: h.seed,
            independent_mode: h.independent_mode,
        }
    }
}

/// Grouped data set.
pub struct NexusDataset(PanDataset);

/// Summaries of a finished chain.
pub struct NexusTrace(ChainTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Null(&'static str),
    Argument(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn status(&self) -> NexusStatus {
        match self {
            Failure::Null(_) => NexusStatus::NullPointer,
            Failure::Argument(_) => NexusStatus::InvalidArgument,
            Failure::Core(e) => match e {
                Error::ParameterDomain { .. } | Error::InvalidInput(_) => {
                    NexusStatus::InvalidArgument
                }
                Error::NotPositiveDefinite { .. }
                | Error::SamplerFailure { .. }
                | Error::RepairFailure { .. } => NexusStatus::Numerical,
                Error::Unsupported(_) => NexusStatus::Unsupported,
                Error::Ingestion { .. } | Error::Io { .. } | Error::Format { .. } => {
                    NexusStatus::Io
                }
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Null(name) => format!("`{name}` is a null pointer"),
            Failure::Argument(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> NexusStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            NexusStatus::Ok
        }
        Ok(Err(f)) => {
            set_last_error(f.message());
            f.status()
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {what}"));
            NexusStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(
    ptr: *mut T,
    len: usize,
    name: &'static str,
) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn reference<'a, T>(ptr: *const T, name: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(name))
}

fn check_len(name: &str, got: usize, expected: usize) -> Result<(), Failure> {
    if got == expected {
        Ok(())
    } else {
        Err(Failure::Argument(format!(
            "`{name}` has length {got}, expected {expected}"
        )))
    }
}

/// Copies the calling thread's last error message into `buffer` (truncated
/// and NUL-terminated when `buffer_len > 0`) and returns the full message
/// length in bytes, excluding the NUL. Returns 0 when the last call succeeded.
///
/// # Safety
/// `buffer` must be null or valid for `buffer_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn nexus_last_error_message(buffer: *mut c_char, buffer_len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            if !buffer.is_null() && buffer_len > 0 {
                *buffer = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buffer.is_null() && buffer_len > 0 {
            let n = bytes.len().min(buffer_len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a data set from `n_groups` row-major blocks stored back to back in
/// `values`; block `c` has `sizes[c]` rows and `p` columns. Columns are
/// centered per group, and also scaled to unit variance when `scale` is set.
///
/// # Safety
/// `sizes` must hold `n_groups` entries, `values` `p · Σ sizes` entries, and
/// `out` must be a valid place to store the handle.
#[no_mangle]
pub unsafe extern "C" fn nexus_dataset_new(
    n_groups: usize,
    sizes: *const usize,
    p: usize,
    values: *const f64,
    scale: bool,
    out: *mut *mut NexusDataset,
) -> NexusStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let sizes = input(sizes, n_groups, "sizes")?;
        let total: usize = sizes.iter().sum();
        let values = input(values, total * p, "values")?;
        let mut offset = 0;
        let mut groups = Vec::with_capacity(n_groups);
        for (c, &n) in sizes.iter().enumerate() {
            let block = &values[offset..offset + n * p];
            groups.push((format!("G{}", c + 1), DMatrix::from_row_slice(n, p, block)));
            offset += n * p;
        }
        let names = (1..=p).map(|j| format!("V{j}")).collect();
        let data = PanDataset::new(groups, names, scale)?;
        *out = Box::into_raw(Box::new(NexusDataset(data)));
        Ok(())
    })
}

/// Loads a `label,path` group manifest.
///
/// # Safety
/// `manifest` must be a NUL-terminated path and `out` a valid place to store
/// the handle.
#[no_mangle]
pub unsafe extern "C" fn nexus_dataset_load(
    manifest: *const c_char,
    scale: bool,
    out: *mut *mut NexusDataset,
) -> NexusStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        if manifest.is_null() {
            return Err(Failure::Null("manifest"));
        }
        let path = CStr::from_ptr(manifest)
            .to_str()
            .map_err(|_| Failure::Argument("manifest path is not UTF-8".into()))?;
        let data = nexus::io::load_dataset(Path::new(path), scale)?;
        *out = Box::into_raw(Box::new(NexusDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nexus_dataset_free(dataset: *mut NexusDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; the outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn nexus_dataset_dims(
    dataset: *const NexusDataset,
    n_groups: *mut usize,
    p: *mut usize,
) -> NexusStatus {
    guard(|| {
        let d = &reference(dataset, "dataset")?.0;
        *n_groups.as_mut().ok_or(Failure::Null("n_groups"))? = d.n_groups();
        *p.as_mut().ok_or(Failure::Null("p"))? = d.p();
        Ok(())
    })
}

/// Default settings for groups of the given sizes.
///
/// # Safety
/// `sizes` must hold `n_groups` entries and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nexus_hyper_defaults(
    sizes: *const usize,
    n_groups: usize,
    out: *mut NexusHyper,
) -> NexusStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let sizes = input(sizes, n_groups, "sizes")?;
        if sizes.is_empty() {
            return Err(Failure::Argument("need at least one group size".into()));
        }
        *out = NexusHyper::from(&Hyperparameters::for_sample_sizes(sizes));
        Ok(())
    })
}

/// Runs the sampler with the stream seeded by `hyper->seed`.
///
/// # Safety
/// `dataset` and `hyper` must be valid and `out` a valid place to store the
/// handle.
#[no_mangle]
pub unsafe extern "C" fn nexus_fit(
    dataset: *const NexusDataset,
    hyper: *const NexusHyper,
    out: *mut *mut NexusTrace,
) -> NexusStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let data = &reference(dataset, "dataset")?.0;
        let hyper = Hyperparameters::from(reference(hyper, "hyper")?);
        let trace = run_chain(data, &hyper, &mut RngHandle::new(hyper.seed))?;
        *out = Box::into_raw(Box::new(NexusTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nexus_trace_free(trace: *mut NexusTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` must be a live handle; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn nexus_trace_dims(
    trace: *const NexusTrace,
    n_groups: *mut usize,
    p: *mut usize,
    n_edges: *mut usize,
) -> NexusStatus {
    guard(|| {
        let t = &reference(trace, "trace")?.0;
        *n_groups.as_mut().ok_or(Failure::Null("n_groups"))? = t.n_groups;
        *p.as_mut().ok_or(Failure::Null("p"))? = t.p;
        *n_edges.as_mut().ok_or(Failure::Null("n_edges"))? = t.n_edges();
        Ok(())
    })
}

/// Posterior probability that `|ρ_ij| > kappa`, `n_groups · n_edges` values.
///
/// # Safety
/// `trace` must be live and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nexus_edge_inclusion(
    trace: *const NexusTrace,
    kappa: f64,
    out: *mut f64,
    len: usize,
) -> NexusStatus {
    guard(|| {
        let t = &reference(trace, "trace")?.0;
        check_len("out", len, t.n_groups * t.n_edges())?;
        let report = select_edges(t, kappa)?;
        let out = output(out, len, "out")?;
        for (dst, src) in out.iter_mut().zip(report.inclusion_prob.iter().flatten()) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Posterior mean of `|ρ_ij|`, `n_groups · n_edges` values.
///
/// # Safety
/// `trace` must be live and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nexus_posterior_mean_abs_partial_corr(
    trace: *const NexusTrace,
    out: *mut f64,
    len: usize,
) -> NexusStatus {
    guard(|| {
        let t = &reference(trace, "trace")?.0;
        check_len("out", len, t.n_groups * t.n_edges())?;
        let means = t.posterior_mean_abs_partial_correlations();
        let out = output(out, len, "out")?;
        for (dst, src) in out.iter_mut().zip(means.iter().flatten()) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Similarity index and its min-max normalization for each group pair
/// `(0,1), (0,2), …`. Fails with `Unsupported` for independent-mode traces.
///
/// # Safety
/// `trace` must be live and both outputs valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nexus_similarity(
    trace: *const NexusTrace,
    nsi: *mut f64,
    nnsi: *mut f64,
    len: usize,
) -> NexusStatus {
    guard(|| {
        let t = &reference(trace, "trace")?.0;
        check_len("nsi", len, PairIndex::new(t.n_groups).len())?;
        let report = network_similarity(t, &t.posterior_mean_thetas())?;
        output(nsi, len, "nsi")?.copy_from_slice(&report.nsi);
        output(nnsi, len, "nnsi")?.copy_from_slice(&report.nnsi);
        Ok(())
    })
}

/// `n̄^δ · n_c^(1−δ)` for each of the `len` sizes.
///
/// # Safety
/// `sizes` and `out` must be valid for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn nexus_effective_sample_sizes(
    sizes: *const usize,
    len: usize,
    delta: f64,
    out: *mut f64,
) -> NexusStatus {
    guard(|| {
        let values = effective_sample_sizes(input(sizes, len, "sizes")?, delta)?;
        output(out, len, "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Area under the ROC curve with ties counted as one half. A nonzero label is
/// a positive.
///
/// # Safety
/// `scores` and `labels` must be valid for `len` entries and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nexus_roc_auc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> NexusStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let scores = input(scores, len, "scores")?;
        let labels: Vec<bool> = input(labels, len, "labels")?
            .iter()
            .map(|&l| l != 0)
            .collect();
        *out = roc_auc(scores, &labels)?;
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nexus_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

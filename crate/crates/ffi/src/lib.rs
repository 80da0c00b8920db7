//! C interface to the spatial-lgm engine.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `slgm_*_free`. Every fallible call returns an
//! `SlgmStatus`; on failure the message is kept per thread and can be read
//! with `slgm_last_error_message`. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use spatial_lgm::cli::{artifacts, config::RunConfig, io};
use spatial_lgm::criteria;
use spatial_lgm::domain::validate_dataset;
use spatial_lgm::graph::parse_adjacency;
use spatial_lgm::laplace::{self, FitResult, LatentModel};
use spatial_lgm::likelihood::{self, LikTerms};
use spatial_lgm::{Error, RegionGraph, Summary};

/// Status code returned by every fallible function.
pub type SlgmStatus = i32;

pub const SLGM_OK: SlgmStatus = 0;
/// A required pointer argument was NULL.
pub const SLGM_ERR_NULL_POINTER: SlgmStatus = 1;
/// A string argument was not valid UTF-8.
pub const SLGM_ERR_INVALID_UTF8: SlgmStatus = 2;
/// Malformed adjacency or CSV text.
pub const SLGM_ERR_PARSE: SlgmStatus = 3;
/// Input that parsed but does not describe a valid model or dataset.
pub const SLGM_ERR_VALIDATION: SlgmStatus = 4;
/// The approximation or a quadrature failed numerically.
pub const SLGM_ERR_NUMERICAL: SlgmStatus = 5;
pub const SLGM_ERR_IO: SlgmStatus = 6;
/// Bad configuration text.
pub const SLGM_ERR_CONFIG: SlgmStatus = 7;
/// An index or name did not refer to an existing parameter.
pub const SLGM_ERR_OUT_OF_RANGE: SlgmStatus = 8;
/// The output buffer cannot hold the string; the needed size was reported.
pub const SLGM_ERR_BUFFER_TOO_SMALL: SlgmStatus = 9;
/// The engine panicked. Handles passed to the call should be freed and not reused.
pub const SLGM_ERR_PANIC: SlgmStatus = 99;

/// A region adjacency graph.
pub struct SlgmGraph {
    graph: RegionGraph,
}

/// A model specification bound to validated data and a graph.
pub struct SlgmModel {
    model: LatentModel,
}

/// Posterior output of one fit.
pub struct SlgmFit {
    fit: FitResult,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlgmSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlgmScores {
    pub dic: f64,
    pub p_d: f64,
    pub dic_mc_se: f64,
    pub waic: f64,
    pub p_waic: f64,
    pub waic_mc_se: f64,
    pub draws: u64,
    pub seed: u64,
}

/// Log-likelihood of one observation and its first two derivatives in eta.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlgmLikTerms {
    pub ll: f64,
    pub d1: f64,
    pub d2: f64,
}

impl From<Summary> for SlgmSummary {
    fn from(s: Summary) -> Self {
        SlgmSummary {
            mean: s.mean,
            sd: s.sd,
            q025: s.q025,
            q50: s.q50,
            q975: s.q975,
        }
    }
}

impl From<LikTerms> for SlgmLikTerms {
    fn from(t: LikTerms) -> Self {
        SlgmLikTerms { ll: t.ll, d1: t.d1, d2: t.d2 }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(SlgmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> SlgmStatus {
    match e {
        Error::InFile { source, .. } => status_of(source),
        Error::Parse { .. } | Error::BadIndex { .. } | Error::AsymmetricEdge(..) | Error::DuplicateRegion(_) => {
            SLGM_ERR_PARSE
        }
        Error::MissingValue { .. }
        | Error::MissingColumn(_)
        | Error::UnknownRegion { .. }
        | Error::NonPositiveTime { .. }
        | Error::NonPositiveShape(_)
        | Error::NoEvents
        | Error::EmptyDataset
        | Error::PhiOutOfRange(_)
        | Error::InvalidSpec(_)
        | Error::UnknownCovariate(_)
        | Error::InsufficientDraws { .. } => SLGM_ERR_VALIDATION,
        Error::QuadratureFailure(_)
        | Error::NonConvergence { .. }
        | Error::SingularPrecision { .. }
        | Error::ModeSearchFailure(_)
        | Error::GridExplosion { .. }
        | Error::EmptyGrid
        | Error::GuardRailExceeded(_)
        | Error::DegenerateProposal(_) => SLGM_ERR_NUMERICAL,
        Error::BadConfig(_) => SLGM_ERR_CONFIG,
        Error::Io { .. } | Error::MissingFitArtifact(_) => SLGM_ERR_IO,
    }
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, records any failure and converts it to a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SlgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SLGM_OK
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal panic: {msg}"));
            SLGM_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SLGM_ERR_NULL_POINTER, format!("`{what}` is NULL"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(SLGM_ERR_INVALID_UTF8, format!("`{what}` is not UTF-8: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies `s` NUL-terminated into `buf`. `needed` receives the size including the NUL.
unsafe fn copy_string(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    let size = s.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = size;
    }
    if buf.is_null() || len < size {
        return Err(Failure(
            SLGM_ERR_BUFFER_TOO_SMALL,
            format!("buffer of {len} bytes cannot hold {size}"),
        ));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slgm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread (empty after a success).
///
/// Writes at most `len` bytes into `buf`. `needed`, if not NULL, receives
/// the size required including the terminating NUL. This call does not
/// overwrite the stored message.
///
/// # Safety
/// `buf` must be NULL or valid for `len` bytes; `needed` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn slgm_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> SlgmStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_string(&msg, buf, len, needed) {
        Ok(()) => SLGM_OK,
        Err(Failure(code, _)) => code,
    }
}

/// Parses adjacency text, one `id: neighbour neighbour ...` line per region.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_graph` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_graph_parse(text: *const c_char, out_graph: *mut *mut SlgmGraph) -> SlgmStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        *slot = std::ptr::null_mut();
        let graph = parse_adjacency(self::text(text, "text")?)?;
        *slot = Box::into_raw(Box::new(SlgmGraph { graph }));
        Ok(())
    })
}

/// Number of regions in `graph`, 0 if NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slgm_graph_region_count(graph: *const SlgmGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.len())
}

/// # Safety
/// `graph` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slgm_graph_free(graph: *mut SlgmGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Builds a model from configuration text, CSV data text and a graph.
///
/// Only the model, prior, fixed-value and grid sections of the
/// configuration are used. The graph is copied, so it may be freed afterwards.
///
/// # Safety
/// String arguments must be NUL-terminated; `graph` must be a live handle;
/// `out_model` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_model_new(
    config_toml: *const c_char,
    data_csv: *const c_char,
    graph: *const SlgmGraph,
    out_model: *mut *mut SlgmModel,
) -> SlgmStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = std::ptr::null_mut();
        let cfg = RunConfig::parse(text(config_toml, "config_toml")?)?;
        let data = text(data_csv, "data_csv")?;
        let graph = &handle(graph, "graph")?.graph;
        let spec = cfg.model_spec()?;
        let origin = Path::new("<data>");
        let raw = io::parse_table(data, origin)?;
        let dataset = validate_dataset(&raw, &spec, graph)?;
        let model = LatentModel::new(&spec, &dataset, graph)?;
        *slot = Box::into_raw(Box::new(SlgmModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slgm_model_free(model: *mut SlgmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs the nested Laplace approximation.
///
/// # Safety
/// `model` must be a live handle; `out_fit` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit(model: *const SlgmModel, out_fit: *mut *mut SlgmFit) -> SlgmStatus {
    guard(|| {
        let slot = out(out_fit, "out_fit")?;
        *slot = std::ptr::null_mut();
        let fit = laplace::fit(&handle(model, "model")?.model)?;
        *slot = Box::into_raw(Box::new(SlgmFit { fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit_free(fit: *mut SlgmFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of summarised parameters, in the order of the summaries file; 0 if NULL.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit_parameter_count(fit: *const SlgmFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.summary_rows().len())
}

/// Name of parameter `index`, copied as for `slgm_last_error_message`.
///
/// # Safety
/// `fit` must be a live handle; `buf` must be NULL or valid for `len` bytes;
/// `needed` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit_parameter_name(
    fit: *const SlgmFit,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SlgmStatus {
    guard(|| {
        let rows = handle(fit, "fit")?.fit.summary_rows();
        let (name, _) = rows.get(index).ok_or_else(|| out_of_range(index, rows.len()))?;
        copy_string(name, buf, len, needed)
    })
}

fn out_of_range(index: usize, count: usize) -> Failure {
    Failure(
        SLGM_ERR_OUT_OF_RANGE,
        format!("parameter index {index} out of range ({count} parameters)"),
    )
}

/// Posterior summary of parameter `index`.
///
/// # Safety
/// `fit` must be a live handle; `out_summary` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit_summary(
    fit: *const SlgmFit,
    index: usize,
    out_summary: *mut SlgmSummary,
) -> SlgmStatus {
    guard(|| {
        let slot = out(out_summary, "out_summary")?;
        let rows = handle(fit, "fit")?.fit.summary_rows();
        let (_, s) = rows.get(index).ok_or_else(|| out_of_range(index, rows.len()))?;
        *slot = (*s).into();
        Ok(())
    })
}

/// Posterior summary of the parameter called `name` (for example `intercept`,
/// `gamma_<region>`, `tau`).
///
/// # Safety
/// `fit` must be a live handle; `name` NUL-terminated; `out_summary` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit_summary_by_name(
    fit: *const SlgmFit,
    name: *const c_char,
    out_summary: *mut SlgmSummary,
) -> SlgmStatus {
    guard(|| {
        let slot = out(out_summary, "out_summary")?;
        let name = text(name, "name")?;
        let rows = handle(fit, "fit")?.fit.summary_rows();
        let (_, s) = rows
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Failure(SLGM_ERR_OUT_OF_RANGE, format!("no parameter named `{name}`")))?;
        *slot = (*s).into();
        Ok(())
    })
}

/// DIC and WAIC from `draws` mixture draws. Results depend only on `seed`.
///
/// # Safety
/// `fit` and `model` must be live handles, `fit` produced from `model`;
/// `out_scores` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit_scores(
    fit: *const SlgmFit,
    model: *const SlgmModel,
    draws: usize,
    seed: u64,
    out_scores: *mut SlgmScores,
) -> SlgmStatus {
    guard(|| {
        let slot = out(out_scores, "out_scores")?;
        let fit = &handle(fit, "fit")?.fit;
        let model = &handle(model, "model")?.model;
        if fit.approximations.first().map(|a| a.dim()) != Some(model.dim()) {
            return Err(Failure(SLGM_ERR_VALIDATION, "fit does not belong to this model".to_string()));
        }
        let s = criteria::compute_scores(fit, model, draws, seed)?;
        *slot = SlgmScores {
            dic: s.dic.score,
            p_d: s.dic.effective_params,
            dic_mc_se: s.dic.mc_se,
            waic: s.waic.score,
            p_waic: s.waic.effective_params,
            waic_mc_se: s.waic.mc_se,
            draws: s.dic.mc_draws as u64,
            seed,
        };
        Ok(())
    })
}

/// Writes the summaries, marginals, hyperparameter grid and latent files
/// into the existing directory `dir`.
///
/// # Safety
/// `fit` must be a live handle; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slgm_fit_write(fit: *const SlgmFit, dir: *const c_char) -> SlgmStatus {
    guard(|| {
        let fit = &handle(fit, "fit")?.fit;
        let dir = Path::new(text(dir, "dir")?);
        io::write_text(&dir.join(artifacts::SUMMARIES), &artifacts::summaries_csv(fit))?;
        io::write_text(&dir.join(artifacts::MARGINALS), &artifacts::marginals_csv(fit))?;
        io::write_text(&dir.join(artifacts::HYPERGRID), &artifacts::hypergrid_csv(fit))?;
        io::write_text(&dir.join(artifacts::LATENT), &artifacts::latent_csv(fit))?;
        Ok(())
    })
}

/// Bernoulli-logit log-likelihood terms for outcome `y` (0 or 1).
///
/// # Safety
/// `out_terms` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_bernoulli_logit_terms(eta: f64, y: u8, out_terms: *mut SlgmLikTerms) -> SlgmStatus {
    guard(|| {
        let slot = out(out_terms, "out_terms")?;
        if y > 1 {
            return Err(Failure(SLGM_ERR_VALIDATION, format!("binary outcome must be 0 or 1, got {y}")));
        }
        *slot = likelihood::bernoulli_logit_terms(eta, y).into();
        Ok(())
    })
}

/// Weibull AFT log-likelihood terms for time `t` with `event` 1 (observed) or 0 (censored).
///
/// # Safety
/// `out_terms` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn slgm_weibull_terms(
    eta: f64,
    alpha: f64,
    t: f64,
    event: u8,
    out_terms: *mut SlgmLikTerms,
) -> SlgmStatus {
    guard(|| {
        let slot = out(out_terms, "out_terms")?;
        if event > 1 {
            return Err(Failure(SLGM_ERR_VALIDATION, format!("event must be 0 or 1, got {event}")));
        }
        *slot = likelihood::weibull_terms(eta, alpha, t, event)?.into();
        Ok(())
    })
}

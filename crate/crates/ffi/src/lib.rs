//! C ABI over `gadsel`.
//!
//! Graphs cross the boundary as opaque [`GadselGraph`] handles. Every call
//! returns a [`GadselStatus`]; on failure the message is kept per thread and
//! can be copied out with [`gadsel_last_error_message`]. Output parameters
//! are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gadsel::csm::{csm, CsmVariant};
use gadsel::detectors::{train, DetectorKind, DetectorSpec, TrainingParams};
use gadsel::graph::{generate_synthetic, load_graph, AttributedGraph, SyntheticSpec};
use gadsel::harness::{run_experiment, write_outputs, ExperimentConfig};
use gadsel::hpo::{expected_improvement, Configuration};
use gadsel::inject::{inject, InjectionPlan};
use gadsel::metrics::roc_auc;
use gadsel::tensor::Matrix;
use gadsel::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadselStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument, shape mismatch or violated precondition.
    InvalidArgument = 2,
    Parse = 3,
    /// Input too large for the detector (dense structure reconstruction).
    Capacity = 4,
    NonFinite = 5,
    Numerical = 6,
    /// Every trial of a search failed.
    Search = 7,
    Config = 8,
    Io = 9,
    /// Caller-provided buffer is too small.
    BufferTooSmall = 10,
    Panic = 11,
}

/// Detector family selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadselDetector {
    GenerativeAe = 0,
    ContrastiveEgonet = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadselCsmVariant {
    Original = 0,
    Improved = 1,
}

/// Training settings; obtain defaults from [`gadsel_training_defaults`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GadselTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Contrastive scoring rounds.
    pub rounds: usize,
    /// Node ceiling of the generative detector.
    pub max_nodes: usize,
    /// Contrastive mini-batch size; 0 trains full batch.
    pub batch_size: usize,
}

impl From<TrainingParams> for GadselTraining {
    fn from(p: TrainingParams) -> Self {
        GadselTraining {
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            hidden_dim: p.hidden_dim,
            embed_dim: p.embed_dim,
            rounds: p.rounds,
            max_nodes: p.max_nodes,
            batch_size: p.batch_size,
        }
    }
}

impl From<GadselTraining> for TrainingParams {
    fn from(p: GadselTraining) -> Self {
        TrainingParams {
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            hidden_dim: p.hidden_dim,
            embed_dim: p.embed_dim,
            rounds: p.rounds,
            max_nodes: p.max_nodes,
            batch_size: p.batch_size,
        }
    }
}

/// Opaque attributed graph. Never carries labels.
pub struct GadselGraph(AttributedGraph);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GadselStatus {
    match e {
        Error::Parse { .. } => GadselStatus::Parse,
        Error::Shape(_) | Error::Validation(_) | Error::Contract(_) => GadselStatus::InvalidArgument,
        Error::Capacity(_) => GadselStatus::Capacity,
        Error::NonFinite(_) => GadselStatus::NonFinite,
        Error::Numerical(_) => GadselStatus::Numerical,
        Error::Search(_) => GadselStatus::Search,
        Error::Config(_) => GadselStatus::Config,
        Error::Io { .. } => GadselStatus::Io,
    }
}

struct Fail(GadselStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GadselStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GadselStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GadselStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GadselStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn graph<'a>(g: *const GadselGraph) -> Result<&'a AttributedGraph, Fail> {
    g.as_ref().map(|g| &g.0).ok_or_else(|| null("graph"))
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GadselStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn emit_graph(out: *mut *mut GadselGraph, g: AttributedGraph) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let (g, _) = g.split_labels();
    *out = Box::into_raw(Box::new(GadselGraph(g)));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gadsel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to fit). Returns the full message length without
/// the terminator; 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gadsel_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Default training settings.
#[no_mangle]
pub extern "C" fn gadsel_training_defaults() -> GadselTraining {
    TrainingParams::default().into()
}

/// Builds a graph from `edge_count` pairs in `edges` (flattened, length
/// `2 * edge_count`) and a row-major `n x d` attribute matrix.
///
/// # Safety
/// `edges` and `attributes` must be valid for the stated lengths; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_new(
    n: usize,
    edges: *const u64,
    edge_count: usize,
    attributes: *const f64,
    d: usize,
    out: *mut *mut GadselGraph,
) -> GadselStatus {
    guard(|| {
        let len = edge_count
            .checked_mul(2)
            .ok_or_else(|| Fail(GadselStatus::InvalidArgument, "edge count overflows".into()))?;
        let flat = slice(edges, len, "edges")?;
        let cells = n
            .checked_mul(d)
            .ok_or_else(|| Fail(GadselStatus::InvalidArgument, "n * d overflows".into()))?;
        let attrs = slice(attributes, cells, "attributes")?;
        let pairs = flat.chunks_exact(2).map(|p| (p[0] as usize, p[1] as usize));
        let g = AttributedGraph::new(n, pairs, Matrix::from_vec(n, d, attrs.to_vec())?, None)?;
        emit_graph(out, g)
    })
}

/// Samples a community-structured graph with Gaussian attributes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_synthetic(
    n: usize,
    d: usize,
    communities: usize,
    intra_p: f64,
    inter_p: f64,
    seed: u64,
    out: *mut *mut GadselGraph,
) -> GadselStatus {
    guard(|| {
        let g = generate_synthetic(&SyntheticSpec::new(n, d, communities, intra_p, inter_p, seed))?;
        emit_graph(out, g)
    })
}

/// Reads an edge list and an attribute CSV.
///
/// # Safety
/// Paths must be NUL-terminated UTF-8; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_load(
    edges_path: *const c_char,
    attributes_path: *const c_char,
    out: *mut *mut GadselGraph,
) -> GadselStatus {
    guard(|| {
        let g = load_graph(&path(edges_path, "edges_path")?, &path(attributes_path, "attributes_path")?, None)?;
        emit_graph(out, g)
    })
}

/// Releases a graph. Null is ignored.
///
/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_free(g: *mut GadselGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_node_count(g: *const GadselGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// Attribute dimension, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_attribute_dim(g: *const GadselGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.attribute_dim())
}

/// Undirected edge count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_edge_count(g: *const GadselGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// Plants `anomalies` nodes (cliques plus attribute swaps) into a copy of
/// `g`. The new graph goes to `out`; its 0/1 ground truth is written to
/// `labels`, which must hold `labels_len >= node count` bytes.
///
/// # Safety
/// `g` must be live; `labels` valid for `labels_len` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gadsel_graph_inject(
    g: *const GadselGraph,
    anomalies: usize,
    clique_size: usize,
    candidate_pool: usize,
    seed: u64,
    labels: *mut u8,
    labels_len: usize,
    out: *mut *mut GadselGraph,
) -> GadselStatus {
    guard(|| {
        let g = graph(g)?;
        if labels_len < g.node_count() {
            return Err(Fail(
                GadselStatus::BufferTooSmall,
                format!("labels buffer holds {labels_len}, need {}", g.node_count()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let buf = slice_mut(labels, g.node_count(), "labels")?;
        let plan = InjectionPlan::balanced(anomalies, clique_size, candidate_pool, seed)?;
        let (injected, truth) = inject(g, &plan)?.split_labels();
        let truth = truth.ok_or_else(|| Fail(GadselStatus::InvalidArgument, "injection produced no labels".into()))?;
        buf.copy_from_slice(truth.read());
        emit_graph(out, injected)
    })
}

/// Trains one detector and writes its per-node scores. `egonet_size` is
/// ignored by the generative detector.
///
/// # Safety
/// `g` must be live; `training` readable; `scores` valid for `scores_len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn gadsel_train(
    g: *const GadselGraph,
    detector: GadselDetector,
    alpha: f64,
    egonet_size: usize,
    training: *const GadselTraining,
    seed: u64,
    scores: *mut f64,
    scores_len: usize,
) -> GadselStatus {
    guard(|| {
        let g = graph(g)?;
        let training = training.as_ref().ok_or_else(|| null("training"))?;
        if scores_len < g.node_count() {
            return Err(Fail(
                GadselStatus::BufferTooSmall,
                format!("scores buffer holds {scores_len}, need {}", g.node_count()),
            ));
        }
        let out = slice_mut(scores, g.node_count(), "scores")?;
        let (kind, entries) = match detector {
            GadselDetector::GenerativeAe => (DetectorKind::GenerativeAe, vec![("alpha".to_string(), alpha)]),
            GadselDetector::ContrastiveEgonet => (
                DetectorKind::ContrastiveEgonet,
                vec![("alpha".to_string(), alpha), ("K".to_string(), egonet_size as f64)],
            ),
        };
        let spec = DetectorSpec::new(kind, Configuration::new(entries), (*training).into(), seed)?;
        let result = train(g, &spec)?;
        out.copy_from_slice(result.scores.as_slice());
        Ok(())
    })
}

/// Contrast score margin of `scores` with `k` predicted anomalies. Infinite
/// margins are reported as `+INFINITY` / `-INFINITY`.
///
/// # Safety
/// `scores` valid for `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gadsel_csm(
    scores: *const f64,
    n: usize,
    k: usize,
    variant: GadselCsmVariant,
    out: *mut f64,
) -> GadselStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let variant = match variant {
            GadselCsmVariant::Original => CsmVariant::Original,
            GadselCsmVariant::Improved => CsmVariant::Improved,
        };
        *out = csm(s, k, variant)?.value.to_f64();
        Ok(())
    })
}

/// Area under the ROC curve; `labels` holds 0 or 1 per node.
///
/// # Safety
/// `scores` and `labels` valid for `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gadsel_roc_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> GadselStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l = slice(labels, n, "labels")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = roc_auc(s, l)?;
        Ok(())
    })
}

/// Expected improvement of a Gaussian prediction over `incumbent`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gadsel_expected_improvement(
    mean: f64,
    std_dev: f64,
    incumbent: f64,
    out: *mut f64,
) -> GadselStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = expected_improvement(mean, std_dev, incumbent)?;
        Ok(())
    })
}

/// Runs the experiment described by a TOML config and writes
/// `trials.csv`, `summary.csv` and `manifest.json` into `out_dir`.
///
/// # Safety
/// Paths must be NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn gadsel_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
) -> GadselStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(&path(config_path, "config_path")?)?;
        let result = run_experiment(&cfg)?;
        write_outputs(&result, &path(out_dir, "out_dir")?)?;
        Ok(())
    })
}

//! Attributed graphs: data model, text loaders/writers, stochastic block
//! model generation and the symmetric GCN propagation operator.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, SparseMatrix};

/// Ground-truth anomaly labels (1 = anomaly).
///
/// Every call to [`Labels::read`] is counted so tests can prove that no
/// label was consulted before the report phase.
#[derive(Clone)]
pub struct Labels {
    inner: Arc<LabelStore>,
}

struct LabelStore {
    values: Vec<u8>,
    reads: AtomicUsize,
}

impl std::fmt::Debug for Labels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Labels")
            .field("len", &self.inner.values.len())
            .field("reads", &self.read_count())
            .finish()
    }
}

impl PartialEq for Labels {
    fn eq(&self, other: &Self) -> bool {
        self.inner.values == other.inner.values
    }
}

impl Labels {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!(
                "label {} at node {pos} is not 0 or 1",
                values[pos]
            )));
        }
        Ok(Labels {
            inner: Arc::new(LabelStore {
                values,
                reads: AtomicUsize::new(0),
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.values.is_empty()
    }

    /// Label values. Counted as one read.
    pub fn read(&self) -> &[u8] {
        self.inner.reads.fetch_add(1, Ordering::SeqCst);
        &self.inner.values
    }

    /// Number of [`Labels::read`] calls across all clones of this handle.
    pub fn read_count(&self) -> usize {
        self.inner.reads.load(Ordering::SeqCst)
    }
}

/// Undirected, self-loop-free graph with a dense attribute matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    n: usize,
    /// Sorted, deduplicated `(i, j)` with `i < j`.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    attributes: Matrix,
    labels: Option<Labels>,
}

impl AttributedGraph {
    /// Validates and canonicalizes the inputs. Reversed and repeated edges
    /// collapse into one undirected edge; self-loops are rejected.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        attributes: Matrix,
        labels: Option<Labels>,
    ) -> Result<Self> {
        if attributes.rows() != n {
            return Err(Error::Shape(format!(
                "attribute matrix has {} rows for {n} nodes",
                attributes.rows()
            )));
        }
        if attributes.cols() == 0 {
            return Err(Error::Shape("attribute dimension must be at least 1".into()));
        }
        if !attributes.is_finite() {
            return Err(Error::Validation("attributes contain NaN or infinity".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} nodes", l.len())));
            }
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Validation(format!(
                    "edge ({i}, {j}) has an endpoint outside [0, {n})"
                )));
            }
            if i == j {
                return Err(Error::Validation(format!("self-loop on node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        neighbors.iter_mut().for_each(|v| v.sort_unstable());
        Ok(AttributedGraph {
            n,
            edges,
            neighbors,
            attributes,
            labels,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn attributes(&self) -> &Matrix {
        &self.attributes
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Separates the label handle from the graph. The returned graph is what
    /// detectors, internal evaluation and search get to see.
    pub fn split_labels(&self) -> (AttributedGraph, Option<Labels>) {
        let mut unlabeled = self.clone();
        let labels = unlabeled.labels.take();
        (unlabeled, labels)
    }

    /// Dense 0/1 adjacency without self-loops.
    pub fn dense_adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }

    /// Hex SHA-256 over node count, edges and attribute bits (labels excluded).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.attributes.cols() as u64).to_le_bytes());
        for &(i, j) in &self.edges {
            h.update((i as u64).to_le_bytes());
            h.update((j as u64).to_le_bytes());
        }
        for v in self.attributes.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Edges on or inside `nodes` (induced subgraph), relabelled to the
    /// positions of `nodes`.
    pub fn induced_edges(&self, nodes: &[usize]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, &u) in nodes.iter().enumerate() {
            for (b, &v) in nodes.iter().enumerate().skip(a + 1) {
                if self.has_edge(u, v) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(SparseMatrix);

impl NormalizedAdjacency {
    pub fn new(g: &AttributedGraph) -> Self {
        Self::from_edges(g.node_count(), g.edges())
    }

    /// Builds the operator for `n` nodes from undirected `(i, j)` pairs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![1.0f64; n];
        for &(i, j) in edges {
            degree[i] += 1.0;
            degree[j] += 1.0;
        }
        let mut triplets = Vec::with_capacity(n + 2 * edges.len());
        for (i, d) in degree.iter().enumerate() {
            triplets.push((i, i, 1.0 / d));
        }
        for &(i, j) in edges {
            let w = 1.0 / (degree[i] * degree[j]).sqrt();
            triplets.push((i, j, w));
            triplets.push((j, i, w));
        }
        NormalizedAdjacency(
            SparseMatrix::from_triplets(n, n, triplets).expect("edge endpoints within n"),
        )
    }

    pub fn node_count(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.0
    }

    pub fn to_dense(&self) -> Matrix {
        self.0.to_dense()
    }
}

/// Shorthand for [`NormalizedAdjacency::new`].
pub fn normalized_adjacency(g: &AttributedGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::new(g)
}

/// Mapping from external node identifiers to dense internal ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    forward: HashMap<String, usize>,
    order: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Internal id for `external`, assigning the next free one when unseen.
    pub fn intern(&mut self, external: &str) -> usize {
        if let Some(&id) = self.forward.get(external) {
            return id;
        }
        let id = self.order.len();
        self.forward.insert(external.to_owned(), id);
        self.order.push(external.to_owned());
        id
    }

    pub fn get(&self, external: &str) -> Option<usize> {
        self.forward.get(external).copied()
    }

    pub fn external(&self, internal: usize) -> Option<&str> {
        self.order.get(internal).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Reads `external_id,internal_id` rows. Internal ids must be dense.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut pairs = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = idx + 1;
            if record.len() != 2 {
                return Err(parse_err(path, line, "expected external_id,internal_id"));
            }
            let internal: usize = record[1]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, "internal id is not an integer"))?;
            pairs.push((record[0].trim().to_owned(), internal, line));
        }
        pairs.sort_by_key(|p| p.1);
        let mut map = IdMap::new();
        for (external, internal, line) in pairs {
            if internal != map.len() || map.forward.contains_key(&external) {
                return Err(parse_err(path, line, "id map is not a dense bijection"));
            }
            map.intern(&external);
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        for (i, ext) in self.order.iter().enumerate() {
            writeln!(w, "{ext},{i}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a graph whose edge file uses integer ids in `[0, n)`, where `n` is
/// the attribute row count.
pub fn load_graph(
    edge_path: &Path,
    attribute_path: &Path,
    label_path: Option<&Path>,
) -> Result<AttributedGraph> {
    let attributes = read_attributes(attribute_path)?;
    let n = attributes.rows();
    let edges = read_edges(edge_path, n, |tok| tok.parse::<usize>().ok())?;
    finish_load(n, edges, attributes, label_path)
}

/// Loads a graph whose edge file uses external ids resolved through `ids`.
pub fn load_graph_mapped(
    edge_path: &Path,
    attribute_path: &Path,
    label_path: Option<&Path>,
    ids: &IdMap,
) -> Result<AttributedGraph> {
    let attributes = read_attributes(attribute_path)?;
    let n = attributes.rows();
    if ids.len() != n {
        return Err(Error::Shape(format!(
            "id map has {} entries for {n} attribute rows",
            ids.len()
        )));
    }
    let edges = read_edges(edge_path, n, |tok| ids.get(tok))?;
    finish_load(n, edges, attributes, label_path)
}

fn finish_load(
    n: usize,
    edges: Vec<(usize, usize)>,
    attributes: Matrix,
    label_path: Option<&Path>,
) -> Result<AttributedGraph> {
    let labels = label_path.map(|p| read_labels(p, n)).transpose()?;
    AttributedGraph::new(n, edges, attributes, labels)
}

fn read_edges(
    path: &Path,
    n: usize,
    resolve: impl Fn(&str) -> Option<usize>,
) -> Result<Vec<(usize, usize)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split(['\t', ' ']).filter(|t| !t.is_empty()).collect();
        if tokens.len() != 2 {
            return Err(parse_err(path, lineno, "expected two node ids"));
        }
        let mut ends = [0usize; 2];
        for (slot, tok) in ends.iter_mut().zip(&tokens) {
            *slot = resolve(tok)
                .ok_or_else(|| parse_err(path, lineno, &format!("unknown node id {tok:?}")))?;
            if *slot >= n {
                return Err(parse_err(
                    path,
                    lineno,
                    &format!("node id {slot} outside [0, {n})"),
                ));
            }
        }
        if ends[0] == ends[1] {
            return Err(parse_err(path, lineno, "self-loop"));
        }
        edges.push((ends[0], ends[1]));
    }
    Ok(edges)
}

fn read_attributes(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| parse_err(path, idx + 1, "attribute is not a number"))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Shape(format!("{}: no attribute rows", path.display())));
    }
    Matrix::from_rows(&rows)
}

fn read_labels(path: &Path, n: usize) -> Result<Labels> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::with_capacity(n);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t {
            "0" => values.push(0),
            "1" => values.push(1),
            other => {
                return Err(Error::Validation(format!(
                    "{}:{}: label {other:?} is not 0 or 1",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    if values.len() != n {
        return Err(Error::Shape(format!(
            "{}: {} labels for {n} nodes",
            path.display(),
            values.len()
        )));
    }
    Labels::new(values)
}

/// Writes the edge (`i<TAB>j`), attribute CSV and, when present, label files.
pub fn write_graph(
    g: &AttributedGraph,
    edge_path: &Path,
    attribute_path: &Path,
    label_path: Option<&Path>,
) -> Result<()> {
    let mut w = create(edge_path)?;
    for &(i, j) in g.edges() {
        writeln!(w, "{i}\t{j}").map_err(|e| Error::io(edge_path, e))?;
    }
    w.flush().map_err(|e| Error::io(edge_path, e))?;

    let mut w = create(attribute_path)?;
    for r in 0..g.node_count() {
        let line = g
            .attributes()
            .row(r)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}").map_err(|e| Error::io(attribute_path, e))?;
    }
    w.flush().map_err(|e| Error::io(attribute_path, e))?;

    if let (Some(path), Some(labels)) = (label_path, g.labels()) {
        let mut w = create(path)?;
        for v in labels.read() {
            writeln!(w, "{v}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_owned(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, line, &format!("{other:?}")),
    }
}

/// Stochastic block model with community-specific Gaussian attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub communities: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub seed: u64,
    /// Standard deviation of community means around the origin.
    #[serde(default = "default_mean_spread")]
    pub mean_spread: f64,
}

fn default_mean_spread() -> f64 {
    2.0
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, communities: usize, intra_p: f64, inter_p: f64, seed: u64) -> Self {
        SyntheticSpec {
            n,
            d,
            communities,
            intra_p,
            inter_p,
            seed,
            mean_spread: default_mean_spread(),
        }
    }

    /// Community of node `v`: contiguous, near-equal blocks.
    pub fn community_of(&self, v: usize) -> usize {
        v * self.communities / self.n
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("intra_p", self.intra_p), ("inter_p", self.inter_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name}={p} is not a probability")));
            }
        }
        if self.inter_p > self.intra_p {
            return Err(Error::Validation(format!(
                "inter_p={} exceeds intra_p={}",
                self.inter_p, self.intra_p
            )));
        }
        if self.communities == 0 || self.n < self.communities {
            return Err(Error::Validation(format!(
                "need n >= communities >= 1, got n={} communities={}",
                self.n, self.communities
            )));
        }
        if self.d == 0 {
            return Err(Error::Validation("attribute dimension must be at least 1".into()));
        }
        if !(self.mean_spread.is_finite() && self.mean_spread >= 0.0) {
            return Err(Error::Validation("mean_spread must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Unlabeled SBM graph; a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<AttributedGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut edges = Vec::new();
    for i in 0..spec.n {
        let ci = spec.community_of(i);
        for j in (i + 1)..spec.n {
            let p = if spec.community_of(j) == ci {
                spec.intra_p
            } else {
                spec.inter_p
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let means: Vec<Vec<f64>> = (0..spec.communities)
        .map(|_| {
            (0..spec.d)
                .map(|_| spec.mean_spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut attributes = Matrix::zeros(spec.n, spec.d);
    for v in 0..spec.n {
        let mean = &means[spec.community_of(v)];
        for (slot, &mu) in attributes.row_mut(v).iter_mut().zip(mean) {
            *slot = mu + rng.sample::<f64, _>(StandardNormal);
        }
    }
    AttributedGraph::new(spec.n, edges, attributes, None)
}

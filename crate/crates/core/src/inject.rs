//! Planting structural (clique) and contextual (attribute swap) anomalies.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Labels};

/// How many anomalies of each kind to plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPlan {
    /// Members per clique (`q`).
    pub clique_size: usize,
    /// Number of cliques (`p`).
    pub clique_count: usize,
    pub contextual_count: usize,
    /// Candidates compared per contextual anomaly (`c`).
    pub candidate_pool: usize,
    pub seed: u64,
}

impl InjectionPlan {
    pub const DEFAULT_CLIQUE_SIZE: usize = 15;
    pub const DEFAULT_CANDIDATE_POOL: usize = 50;

    /// Splits `total` anomalies as evenly as clique granularity allows:
    /// `round(total / 2 / q)` cliques (at least one), the rest contextual.
    pub fn balanced(total: usize, clique_size: usize, candidate_pool: usize, seed: u64) -> Result<Self> {
        if clique_size < 2 {
            return Err(Error::Validation("clique_size must be at least 2".into()));
        }
        let cliques = ((total as f64 / 2.0 / clique_size as f64).round() as usize).max(1);
        if cliques * clique_size > total {
            return Err(Error::Capacity(format!(
                "{total} anomalies cannot hold a clique of {clique_size}"
            )));
        }
        Ok(InjectionPlan {
            clique_size,
            clique_count: cliques,
            contextual_count: total - cliques * clique_size,
            candidate_pool,
            seed,
        })
    }

    pub fn structural_count(&self) -> usize {
        self.clique_size * self.clique_count
    }

    pub fn total(&self) -> usize {
        self.structural_count() + self.contextual_count
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        if self.clique_size < 2 {
            return Err(Error::Validation("clique_size must be at least 2".into()));
        }
        if self.candidate_pool < 1 {
            return Err(Error::Validation("candidate_pool must be at least 1".into()));
        }
        if self.total() > n {
            return Err(Error::Capacity(format!(
                "{} anomalies requested on {n} nodes",
                self.total()
            )));
        }
        if self.contextual_count > 0 && self.candidate_pool > n - 1 {
            return Err(Error::Capacity(format!(
                "candidate pool {} exceeds the {} other nodes",
                self.candidate_pool,
                n - 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualSwap {
    pub node: usize,
    /// Node whose original attributes were copied.
    pub source: usize,
    pub distance: f64,
}

/// Audit record of one injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub plan: InjectionPlan,
    pub node_count: usize,
    pub cliques: Vec<Vec<usize>>,
    pub contextual: Vec<ContextualSwap>,
    pub anomaly_count: usize,
    pub anomaly_ratio: f64,
    pub added_edges: usize,
}

impl InjectionManifest {
    pub fn anomalous_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .cliques
            .iter()
            .flatten()
            .copied()
            .chain(self.contextual.iter().map(|c| c.node))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("manifest serialization: {e}")))?;
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Plants the anomalies of `plan` into an unlabeled graph.
pub fn inject(g: &AttributedGraph, plan: &InjectionPlan) -> Result<AttributedGraph> {
    inject_with_manifest(g, plan).map(|(graph, _)| graph)
}

pub fn inject_with_manifest(
    g: &AttributedGraph,
    plan: &InjectionPlan,
) -> Result<(AttributedGraph, InjectionManifest)> {
    if g.has_labels() {
        return Err(Error::Validation("graph is already labeled".into()));
    }
    let n = g.node_count();
    plan.validate_for(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (structural, rest) = order.split_at(plan.structural_count());
    let contextual_nodes = &rest[..plan.contextual_count];

    let mut edges: Vec<(usize, usize)> = g.edges().to_vec();
    let mut cliques = Vec::with_capacity(plan.clique_count);
    let mut added = 0;
    for members in structural.chunks(plan.clique_size) {
        let mut members = members.to_vec();
        members.sort_unstable();
        for (a, &u) in members.iter().enumerate() {
            for &v in &members[a + 1..] {
                if !g.has_edge(u, v) {
                    added += 1;
                }
                edges.push((u, v));
            }
        }
        cliques.push(members);
    }

    let original = g.attributes();
    let mut attributes = original.clone();
    let mut contextual = Vec::with_capacity(plan.contextual_count);
    for &v in contextual_nodes {
        let mut best: Option<(usize, f64)> = None;
        for raw in index::sample(&mut rng, n - 1, plan.candidate_pool) {
            let cand = if raw >= v { raw + 1 } else { raw };
            let dist = euclidean(original.row(v), original.row(cand));
            if best.is_none_or(|(_, d)| dist > d) {
                best = Some((cand, dist));
            }
        }
        let (source, distance) = best.expect("candidate pool is non-empty");
        attributes.row_mut(v).copy_from_slice(original.row(source));
        contextual.push(ContextualSwap {
            node: v,
            source,
            distance,
        });
    }

    let mut labels = vec![0u8; n];
    for &v in structural.iter().chain(contextual_nodes) {
        labels[v] = 1;
    }
    let graph = AttributedGraph::new(n, edges, attributes, Some(Labels::new(labels)?))?;
    let manifest = InjectionManifest {
        plan: *plan,
        node_count: n,
        cliques,
        contextual,
        anomaly_count: plan.total(),
        anomaly_ratio: plan.total() as f64 / n as f64,
        added_edges: added,
    };
    Ok((graph, manifest))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

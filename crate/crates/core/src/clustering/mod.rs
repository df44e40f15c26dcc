//! Expertise clusters over facts.
//!
//! Nodes are clustered spectrally on the symmetrized adjacency; each fact then
//! inherits the cluster of its head entity.

pub mod eigen;
pub mod kmeans;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, FactId, KnowledgeGraph, TwoHopFact};
use eigen::{dense_smallest, lanczos_smallest, LanczosOptions, SparseSymmetric};

/// Largest node count handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgePartition {
    k: usize,
    assignment: Vec<usize>,
    sizes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionDoc {
    k: usize,
    assignment: Vec<usize>,
}

impl EdgePartition {
    pub fn new(k: usize, assignment: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::validation("partition needs k >= 1"));
        }
        let mut sizes = vec![0; k];
        for (i, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::validation(format!("fact {i} assigned to cluster {c} but k = {k}")));
            }
            sizes[c] += 1;
        }
        Ok(EdgePartition { k, assignment, sizes })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, fact: FactId) -> usize {
        self.assignment[fact.index()]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_facts(&self) -> usize {
        self.assignment.len()
    }

    pub fn non_empty(&self) -> usize {
        self.sizes.iter().filter(|&&s| s > 0).count()
    }

    /// Fact ids of each cluster, in canonical order.
    pub fn members(&self) -> Vec<Vec<FactId>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(FactId(i as u32));
        }
        out
    }

    pub fn check_graph(&self, graph: &KnowledgeGraph) -> Result<()> {
        if self.assignment.len() != graph.num_facts() {
            return Err(Error::validation(format!(
                "partition covers {} facts but the graph has {}",
                self.assignment.len(),
                graph.num_facts()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let doc = PartitionDoc { k: self.k, assignment: self.assignment.clone() };
        let mut bytes = serde_json::to_vec(&doc).expect("partition serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let doc: PartitionDoc = serde_json::from_slice(bytes).map_err(Error::from_json)?;
        EdgePartition::new(doc.k, doc.assignment)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `D - W`
    Unnormalized,
    /// `I - D^-1/2 W D^-1/2` with row-normalized embeddings
    Normalized,
}

#[derive(Clone, Debug)]
pub struct ClusterOptions {
    pub laplacian: LaplacianKind,
    pub restarts: usize,
    pub dense_limit: usize,
    pub lanczos: LanczosOptions,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            laplacian: LaplacianKind::Normalized,
            restarts: 10,
            dense_limit: DENSE_LIMIT,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// Non-isolated entities and the weighted symmetrized adjacency among them.
pub struct ActiveAdjacency {
    pub nodes: Vec<EntityId>,
    /// (row, col, weight) with row != col, both directions present.
    pub weights: Vec<(usize, usize, f64)>,
}

pub fn active_adjacency(graph: &KnowledgeGraph) -> ActiveAdjacency {
    let mut local = vec![usize::MAX; graph.num_entities()];
    let mut nodes = Vec::new();
    for e in graph.entities() {
        if !graph.out_facts(e.id).is_empty() || !graph.in_facts(e.id).is_empty() {
            local[e.id.index()] = nodes.len();
            nodes.push(e.id);
        }
    }
    let mut weights = Vec::with_capacity(2 * graph.num_facts());
    for f in graph.facts() {
        let (a, b) = (local[f.head.index()], local[f.tail.index()]);
        weights.push((a, b, 1.0));
        weights.push((b, a, 1.0));
    }
    ActiveAdjacency { nodes, weights }
}

pub fn laplacian(adj: &ActiveAdjacency, kind: LaplacianKind) -> SparseSymmetric {
    let n = adj.nodes.len();
    let mut degree = vec![0.0; n];
    for &(a, _, w) in &adj.weights {
        degree[a] += w;
    }
    let mut triplets = Vec::with_capacity(adj.weights.len() + n);
    match kind {
        LaplacianKind::Unnormalized => {
            triplets.extend(adj.weights.iter().map(|&(a, b, w)| (a, b, -w)));
            triplets.extend(degree.iter().enumerate().map(|(i, &d)| (i, i, d)));
        }
        LaplacianKind::Normalized => {
            triplets.extend(adj.weights.iter().map(|&(a, b, w)| (a, b, -w / (degree[a] * degree[b]).sqrt())));
            triplets.extend((0..n).map(|i| (i, i, 1.0)));
        }
    }
    SparseSymmetric::from_triplets(n, triplets)
}

/// Cluster labels for the active nodes: k smallest Laplacian eigenvectors, then k-means on the rows.
pub fn spectral_node_labels(adj: &ActiveAdjacency, k: usize, seed: u64, options: &ClusterOptions) -> Result<Vec<usize>> {
    let n = adj.nodes.len();
    if k >= n {
        return Ok((0..n).collect());
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let lap = laplacian(adj, options.laplacian);
    let pairs = if n <= options.dense_limit {
        dense_smallest(&lap.to_dense(), k)
    } else {
        lanczos_smallest(&lap, k, &LanczosOptions { seed, ..options.lanczos })?
    };
    let embedding: DMatrix<f64> = pairs.vectors;
    let dim = embedding.ncols();
    let mut points = Vec::with_capacity(n * dim);
    for r in 0..n {
        let row = embedding.row(r);
        let scale = match options.laplacian {
            LaplacianKind::Normalized if row.norm() > 0.0 => 1.0 / row.norm(),
            _ => 1.0,
        };
        points.extend(row.iter().map(|x| x * scale));
    }
    Ok(kmeans::kmeans(&points, dim, k, options.restarts, seed).labels)
}

pub fn cluster_edges(graph: &KnowledgeGraph, k: usize, seed: u64) -> Result<EdgePartition> {
    cluster_edges_with(graph, k, seed, &ClusterOptions::default())
}

pub fn cluster_edges_with(graph: &KnowledgeGraph, k: usize, seed: u64, options: &ClusterOptions) -> Result<EdgePartition> {
    if k == 0 || k > graph.num_facts() {
        return Err(Error::validation(format!("cluster count {k} must be in 1..={}", graph.num_facts())));
    }
    let adj = active_adjacency(graph);
    let labels = spectral_node_labels(&adj, k, seed, options)?;
    let mut node_label = vec![usize::MAX; graph.num_entities()];
    for (i, e) in adj.nodes.iter().enumerate() {
        node_label[e.index()] = labels[i];
    }
    // relabel by first appearance in canonical fact order
    let mut relabel = vec![usize::MAX; k.max(adj.nodes.len())];
    let mut next = 0;
    let assignment = graph
        .facts()
        .iter()
        .map(|f| {
            let raw = node_label[f.head.index()];
            if relabel[raw] == usize::MAX {
                relabel[raw] = next;
                next += 1;
            }
            relabel[raw]
        })
        .collect();
    EdgePartition::new(k, assignment)
}

#[derive(Clone, Debug, Default)]
pub struct TwoHopSplit {
    pub within: Vec<TwoHopFact>,
    pub across: Vec<TwoHopFact>,
}

pub fn within_cluster_two_hops(graph: &KnowledgeGraph, partition: &EdgePartition) -> Result<TwoHopSplit> {
    partition.check_graph(graph)?;
    let mut split = TwoHopSplit::default();
    for th in graph.enumerate_two_hop() {
        let a = graph.fact_id(&th.first_hop()).expect("two-hop edges are graph facts");
        let b = graph.fact_id(&th.second_hop()).expect("two-hop edges are graph facts");
        if partition.cluster_of(a) == partition.cluster_of(b) {
            split.within.push(th);
        } else {
            split.across.push(th);
        }
    }
    Ok(split)
}

/// Newman modularity of the fact partition on the line graph (facts adjacent when they share an entity).
pub fn line_graph_modularity(graph: &KnowledgeGraph, assignment: &[usize], k: usize) -> f64 {
    let mut total_pairs = 0.0;
    let mut intra = vec![0.0; k];
    let mut degree_sum = vec![0.0; k];
    for e in graph.entities() {
        let incident: Vec<FactId> = graph.out_facts(e.id).iter().chain(graph.in_facts(e.id)).copied().collect();
        let d = incident.len() as f64;
        if d < 2.0 {
            continue;
        }
        total_pairs += d * (d - 1.0) / 2.0;
        let mut counts = vec![0.0; k];
        for f in &incident {
            counts[assignment[f.index()]] += 1.0;
        }
        for c in 0..k {
            intra[c] += counts[c] * (counts[c] - 1.0) / 2.0;
            degree_sum[c] += counts[c] * (d - 1.0);
        }
    }
    if total_pairs == 0.0 {
        return 0.0;
    }
    (0..k).map(|c| intra[c] / total_pairs - (degree_sum[c] / (2.0 * total_pairs)).powi(2)).sum()
}

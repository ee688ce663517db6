//! Dense subgraph discovery over per-frame proposal overlap graphs.
//!
//! Within a positive frame, candidate proposals that overlap each other
//! heavily form a dense core around the object. Greedy peeling keeps that
//! core as distilled positives; the frame's other candidates become hard
//! negatives.

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::model::{Dataset, FrameId, RegionId};
use crate::scoring::Scorecard;
use crate::wdec::ClusterState;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// A proposal as seen by the graph builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    pub region_id: RegionId,
    pub frame_id: FrameId,
    pub bbox: BBox,
}

/// Simple undirected graph; an edge joins two proposals whose IoU reaches the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGraph {
    nodes: Vec<RegionId>,
    adjacency: Vec<Vec<usize>>,
    edges: usize,
}

impl OverlapGraph {
    /// Builds a graph from explicit edges between node positions.
    pub fn from_edges(nodes: Vec<RegionId>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut count = 0;
        for &(a, b) in edges {
            if a == b || a >= nodes.len() || b >= nodes.len() {
                return Err(Error::invalid(format!("bad edge ({}, {})", a, b)));
            }
            if !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
                count += 1;
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(OverlapGraph { nodes, adjacency, edges: count })
    }

    pub fn nodes(&self) -> &[RegionId] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Average degree `2|E| / |V|` of the subgraph induced by `members`.
    pub fn density_of(&self, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        let mut inside = vec![false; self.nodes.len()];
        for &m in members {
            inside[m] = true;
        }
        let twice: usize = members.iter().map(|&m| self.adjacency[m].iter().filter(|&&n| inside[n]).count()).sum();
        twice as f64 / members.len() as f64
    }
}

pub fn build_overlap_graph(regions: &[GraphNode], iou_threshold: f64) -> Result<OverlapGraph> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::invalid(format!("edge threshold {} outside (0, 1)", iou_threshold)));
    }
    if let Some(first) = regions.first() {
        if let Some(other) = regions.iter().find(|r| r.frame_id != first.frame_id) {
            return Err(Error::invalid(format!(
                "overlap graph mixes frames {} and {}",
                first.frame_id, other.frame_id
            )));
        }
    }
    let mut edges = Vec::new();
    for a in 0..regions.len() {
        for b in a + 1..regions.len() {
            if regions[a].bbox.iou(&regions[b].bbox) >= iou_threshold {
                edges.push((a, b));
            }
        }
    }
    OverlapGraph::from_edges(regions.iter().map(|r| r.region_id).collect(), &edges)
}

/// Node positions of the densest subgraph found by greedy peeling.
///
/// Repeatedly removes a minimum-degree node (smallest region id on ties) and
/// keeps the remaining set with the highest average degree. Among equally dense
/// sets the smaller, later one wins. Returned positions are sorted.
pub fn densest_subgraph_positions(graph: &OverlapGraph) -> Vec<usize> {
    let n = graph.node_count();
    if n == 0 {
        return Vec::new();
    }
    let mut degree: Vec<usize> = (0..n).map(|v| graph.neighbors(v).len()).collect();
    let mut alive = vec![true; n];
    let mut removal_order = Vec::with_capacity(n);
    let mut edges = graph.edge_count();
    // (edges, nodes) of the best remaining set and how many removals produced it.
    let mut best = (edges, n, 0usize);

    for step in 1..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by(|&a, &b| degree[a].cmp(&degree[b]).then(graph.nodes[a].cmp(&graph.nodes[b])))
            .expect("alive node");
        alive[v] = false;
        removal_order.push(v);
        edges -= degree[v];
        for &u in graph.neighbors(v) {
            if alive[u] {
                degree[u] -= 1;
            }
        }
        let remaining = n - step;
        // edges / remaining >= best.0 / best.1, compared exactly in integers.
        if edges * best.1 >= best.0 * remaining {
            best = (edges, remaining, step);
        }
    }

    let mut removed = vec![false; n];
    for &v in &removal_order[..best.2] {
        removed[v] = true;
    }
    (0..n).filter(|&v| !removed[v]).collect()
}

/// Region ids of the densest subgraph, in ascending order.
pub fn densest_subgraph(graph: &OverlapGraph) -> Vec<RegionId> {
    let mut ids: Vec<RegionId> = densest_subgraph_positions(graph).into_iter().map(|v| graph.nodes[v]).collect();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningParams {
    pub edge_iou: f64,
    /// Number of top-scoring clusters whose members become candidates.
    pub top_m: usize,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams { edge_iou: 0.4, top_m: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MinedPositive {
    pub region_id: RegionId,
    pub cluster: usize,
}

/// Distilled positives and recycled hard negatives, listed in frame order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinedSet {
    pub positives: Vec<MinedPositive>,
    pub hard_negatives: Vec<RegionId>,
}

pub fn mine_regions(
    dataset: &Dataset,
    state: &ClusterState,
    scorecard: &Scorecard,
    params: MiningParams,
) -> Result<MinedSet> {
    state.validate(dataset.n_regions())?;
    if scorecard.k() != state.k {
        return Err(Error::invalid(format!(
            "scorecard has {} clusters but state has {}",
            scorecard.k(),
            state.k
        )));
    }
    if params.top_m == 0 {
        return Err(Error::invalid("top_m must be at least 1"));
    }
    let mut selected = vec![false; state.k];
    for &j in scorecard.ranking().iter().take(params.top_m) {
        selected[j] = true;
    }

    let mut mined = MinedSet::default();
    let mut candidates = 0usize;
    for (fi, frame) in dataset.frames().iter().enumerate() {
        if !frame.positive {
            continue;
        }
        let members: Vec<usize> = dataset
            .frame_regions(fi)
            .iter()
            .copied()
            .filter(|&r| selected[state.assignments[r]])
            .collect();
        candidates += members.len();
        let keep: Vec<bool> = if members.len() < 2 {
            vec![true; members.len()]
        } else {
            let nodes: Vec<GraphNode> = members
                .iter()
                .map(|&r| {
                    let rec = &dataset.regions()[r];
                    GraphNode { region_id: rec.region_id, frame_id: rec.frame_id, bbox: rec.bbox }
                })
                .collect();
            let graph = build_overlap_graph(&nodes, params.edge_iou)?;
            let mut keep = vec![false; members.len()];
            for v in densest_subgraph_positions(&graph) {
                keep[v] = true;
            }
            keep
        };
        for (&r, kept) in members.iter().zip(keep) {
            let region_id = dataset.regions()[r].region_id;
            if kept {
                mined.positives.push(MinedPositive { region_id, cluster: state.assignments[r] });
            } else {
                mined.hard_negatives.push(region_id);
            }
        }
    }
    if candidates == 0 {
        return Err(Error::Mining(format!(
            "no positive-frame regions fall in the top {} clusters",
            params.top_m
        )));
    }
    Ok(mined)
}

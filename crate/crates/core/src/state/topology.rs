//! Named lab locations joined by bidirectional edges with tick costs.

use std::collections::BTreeMap;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where a misplaced vial ends up; not connected to anything.
pub const LIMBO: &str = "limbo";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopoNode {
    /// Work cell the node belongs to; moves within a cell are manipulations.
    pub cell: String,
    /// Hand-over point where mobile robots pick up and drop off vials.
    #[serde(default)]
    pub dock: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopoEdge {
    pub a: String,
    pub b: String,
    pub cost: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: BTreeMap<String, TopoNode>,
    #[serde(default)]
    pub edges: Vec<TopoEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("edge references unknown node '{0}'")]
    UnknownNode(String),
    #[error("'{LIMBO}' is reserved and cannot be declared")]
    ReservedNode,
}

/// Validated topology with all-pairs shortest paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologySpec", into = "TopologySpec")]
pub struct Topology {
    spec: TopologySpec,
    distances: BTreeMap<(String, String), u64>,
}

impl TryFrom<TopologySpec> for Topology {
    type Error = TopologyError;

    fn try_from(spec: TopologySpec) -> Result<Self, Self::Error> {
        if spec.nodes.contains_key(LIMBO) {
            return Err(TopologyError::ReservedNode);
        }
        let mut graph = UnGraph::<&str, u64>::new_undirected();
        let index: BTreeMap<&str, NodeIndex> = spec
            .nodes
            .keys()
            .map(|n| (n.as_str(), graph.add_node(n.as_str())))
            .collect();
        for e in &spec.edges {
            let a = *index.get(e.a.as_str()).ok_or_else(|| TopologyError::UnknownNode(e.a.clone()))?;
            let b = *index.get(e.b.as_str()).ok_or_else(|| TopologyError::UnknownNode(e.b.clone()))?;
            graph.add_edge(a, b, e.cost);
        }
        let mut distances = BTreeMap::new();
        for (&from, &ix) in &index {
            for (to, cost) in dijkstra(&graph, ix, None, |e| *e.weight()) {
                distances.insert((from.to_string(), graph[to].to_string()), cost);
            }
        }
        Ok(Topology { spec, distances })
    }
}

impl From<Topology> for TopologySpec {
    fn from(t: Topology) -> Self {
        t.spec
    }
}

impl Topology {
    pub fn contains(&self, node: &str) -> bool {
        node == LIMBO || self.spec.nodes.contains_key(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &TopoNode)> {
        self.spec.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Shortest-path cost in ticks; `None` when unreachable.
    pub fn distance(&self, from: &str, to: &str) -> Option<u64> {
        self.distances.get(&(from.to_string(), to.to_string())).copied()
    }

    pub fn cell(&self, node: &str) -> Option<&str> {
        self.spec.nodes.get(node).map(|n| n.cell.as_str())
    }

    pub fn is_dock(&self, node: &str) -> bool {
        self.spec.nodes.get(node).is_some_and(|n| n.dock)
    }

    /// Lexicographically first dock of `cell`.
    pub fn dock_of(&self, cell: &str) -> Option<&str> {
        self.spec
            .nodes
            .iter()
            .find(|(_, n)| n.dock && n.cell == cell)
            .map(|(k, _)| k.as_str())
    }

    pub fn same_cell(&self, a: &str, b: &str) -> bool {
        matches!((self.cell(a), self.cell(b)), (Some(x), Some(y)) if x == y)
    }
}

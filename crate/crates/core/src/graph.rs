//! Weighted user-location bipartite graph.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::dataset::CheckInDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Location,
}

/// A graph node. Users and locations live in disjoint namespaces, rendered
/// as `u:<id>` and `l:<id>` tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub id: String,
}

impl NodeId {
    pub fn user(id: impl Into<String>) -> Self {
        NodeId {
            kind: NodeKind::User,
            id: id.into(),
        }
    }

    pub fn location(id: impl Into<String>) -> Self {
        NodeId {
            kind: NodeKind::Location,
            id: id.into(),
        }
    }

    pub fn is_user(&self) -> bool {
        self.kind == NodeKind::User
    }

    pub fn token(&self) -> String {
        self.to_string()
    }

    pub fn parse_token(token: &str) -> Option<Self> {
        if let Some(id) = token.strip_prefix("u:") {
            (!id.is_empty()).then(|| NodeId::user(id))
        } else if let Some(id) = token.strip_prefix("l:") {
            (!id.is_empty()).then(|| NodeId::location(id))
        } else {
            None
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::User => write!(f, "u:{}", self.id),
            NodeKind::Location => write!(f, "l:{}", self.id),
        }
    }
}

/// Bipartite graph with edge weight `w(u, l) = |tau(u, l)|`.
///
/// Nodes are numbered users first, then locations, each group in identifier
/// order, so adjacency lists sorted by index are also sorted by identifier.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    nodes: Vec<NodeId>,
    n_users: usize,
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<(u32, u64)>>,
    alias: Vec<AliasTable>,
}

impl BipartiteGraph {
    /// Builds the graph from a dataset. Users without check-ins have no edges
    /// and are left out.
    pub fn build(ds: &CheckInDataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset has no check-ins"));
        }
        let users: Vec<&String> = ds
            .users()
            .iter()
            .filter(|u| ds.user_total(u).unwrap_or(0) > 0)
            .collect();
        let n_users = users.len();
        let mut nodes: Vec<NodeId> = users.iter().map(|u| NodeId::user(u.as_str())).collect();
        nodes.extend(ds.locations().iter().map(|l| NodeId::location(l.as_str())));
        let index: HashMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();

        let mut adjacency: Vec<Vec<(u32, u64)>> = vec![Vec::new(); nodes.len()];
        for (ui, u) in users.iter().enumerate() {
            for (l, &w) in ds.user_locations(u).into_iter().flatten() {
                let li = index[&NodeId::location(l.as_str())];
                adjacency[ui].push((li as u32, w));
                adjacency[li].push((ui as u32, w));
            }
        }
        // User lists come out of a BTreeMap walk and location lists are
        // appended in user order, so both are already sorted; keep it explicit.
        for list in &mut adjacency {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        let alias = adjacency
            .iter()
            .map(|list| {
                let w: Vec<u64> = list.iter().map(|&(_, w)| w).collect();
                AliasTable::from_counts(&w)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(BipartiteGraph {
            nodes,
            n_users,
            index,
            adjacency,
            alias,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn user_count(&self) -> usize {
        self.n_users
    }

    pub fn location_count(&self) -> usize {
        self.nodes.len() - self.n_users
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeId {
        &self.nodes[i]
    }

    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn is_user_index(&self, i: usize) -> bool {
        i < self.n_users
    }

    /// Neighbors of node `i` as `(index, weight)` sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(u32, u64)] {
        &self.adjacency[i]
    }

    /// Normalizing constant Z: the sum of edge weights at `i`.
    pub fn weight_sum(&self, i: usize) -> u64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn alias_table(&self, i: usize) -> &AliasTable {
        &self.alias[i]
    }

    /// Draws a neighbor of `i` with probability `w(i, y) / Z`.
    #[inline]
    pub fn sample_neighbor_index<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        let list = &self.adjacency[i];
        if list.is_empty() {
            return Err(Error::IsolatedNode(self.nodes[i].token()));
        }
        Ok(list[self.alias[i].sample(rng)].0 as usize)
    }

    pub fn sample_neighbor<R: Rng + ?Sized>(&self, x: &NodeId, rng: &mut R) -> Result<&NodeId> {
        let i = self
            .index_of(x)
            .ok_or_else(|| Error::UnknownNode(x.token()))?;
        Ok(&self.nodes[self.sample_neighbor_index(i, rng)?])
    }

    /// Random walk of `steps` moves from `start`; returns the terminal node index.
    pub fn walk_from<R: Rng + ?Sized>(&self, start: usize, steps: usize, rng: &mut R) -> Result<usize> {
        let mut cur = start;
        for _ in 0..steps {
            cur = self.sample_neighbor_index(cur, rng)?;
        }
        Ok(cur)
    }
}

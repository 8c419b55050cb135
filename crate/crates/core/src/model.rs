//! Entities, directed policy graphs and the graph utilities shared by the
//! rest of the crate.
//!
//! A [`PolicyGraph`] is the global access-control matrix: a set of named
//! entities and an irreflexive set of directed edges. All collections are
//! ordered sets, so iteration (and every serialized form) follows the
//! canonical order: sender name first, then receiver name.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A named policy entity (a host or host group).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Entity(String);

impl Entity {
    pub fn new(name: impl Into<String>) -> Self {
        Entity(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Entity {
    fn from(s: &str) -> Self {
        Entity(s.to_owned())
    }
}

impl From<String> for Entity {
    fn from(s: String) -> Self {
        Entity(s)
    }
}

impl std::borrow::Borrow<str> for Entity {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A directed flow `sender -> receiver`.
///
/// Ordering is lexicographic on (sender, receiver), which is the canonical
/// edge order used by every serializer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "from")]
    pub sender: Entity,
    #[serde(rename = "to")]
    pub receiver: Entity,
}

impl Edge {
    pub fn new(sender: impl Into<Entity>, receiver: impl Into<Entity>) -> Self {
        Edge {
            sender: sender.into(),
            receiver: receiver.into(),
        }
    }

    pub fn reversed(&self) -> Edge {
        Edge {
            sender: self.receiver.clone(),
            receiver: self.sender.clone(),
        }
    }

    pub fn is_self_loop(&self) -> bool {
        self.sender == self.receiver
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.sender, self.receiver)
    }
}

pub type EdgeSet = BTreeSet<Edge>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("entity list is empty")]
    NoEntities,
    #[error("duplicate entity name `{0}`")]
    DuplicateEntity(Entity),
    #[error("entity name must not be empty")]
    EmptyName,
    #[error("unknown entity `{0}`")]
    UnknownEntity(Entity),
    #[error("self-loop on `{0}` is not allowed in a policy graph")]
    SelfLoop(Entity),
    #[error("stateful edge {0} is not a policy edge")]
    StatefulNotInPolicy(Edge),
}

/// Checks that `entities` is non-empty, that every name is non-empty and
/// that no name repeats. Returns the entities as a set.
pub fn entity_set<'a, I>(entities: I) -> Result<BTreeSet<Entity>, ModelError>
where
    I: IntoIterator<Item = &'a Entity>,
{
    let mut set = BTreeSet::new();
    for e in entities {
        if e.name().is_empty() {
            return Err(ModelError::EmptyName);
        }
        if !set.insert(e.clone()) {
            return Err(ModelError::DuplicateEntity(e.clone()));
        }
    }
    if set.is_empty() {
        return Err(ModelError::NoEntities);
    }
    Ok(set)
}

/// A directed, irreflexive policy graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyGraph {
    nodes: BTreeSet<Entity>,
    edges: EdgeSet,
}

impl PolicyGraph {
    pub fn new(nodes: BTreeSet<Entity>, edges: EdgeSet) -> Result<Self, ModelError> {
        for e in &edges {
            if e.is_self_loop() {
                return Err(ModelError::SelfLoop(e.sender.clone()));
            }
            for end in [&e.sender, &e.receiver] {
                if !nodes.contains(end) {
                    return Err(ModelError::UnknownEntity(end.clone()));
                }
            }
        }
        Ok(PolicyGraph { nodes, edges })
    }

    /// The deny-all policy over `nodes`.
    pub fn empty(nodes: BTreeSet<Entity>) -> Self {
        PolicyGraph {
            nodes,
            edges: EdgeSet::new(),
        }
    }

    /// The allow-all policy: every ordered pair of distinct entities.
    pub fn complete<'a, I>(entities: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a Entity>,
    {
        let nodes = entity_set(entities)?;
        let edges = nodes
            .iter()
            .flat_map(|s| {
                nodes
                    .iter()
                    .filter(move |r| *r != s)
                    .map(move |r| Edge::new(s.clone(), r.clone()))
            })
            .collect();
        Ok(PolicyGraph { nodes, edges })
    }

    pub fn nodes(&self) -> &BTreeSet<Entity> {
        &self.nodes
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn contains_node(&self, e: &Entity) -> bool {
        self.nodes.contains(e)
    }

    pub fn contains_edge(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    /// Direct successors of `v`, in canonical order.
    pub fn successors<'a>(&'a self, v: &'a Entity) -> impl Iterator<Item = &'a Entity> + 'a {
        let lo = Edge::new(v.clone(), Entity::new(""));
        self.edges
            .range(lo..)
            .take_while(move |e| &e.sender == v)
            .map(|e| &e.receiver)
    }

    /// Entities reachable from `start` via one or more edges. `start` itself
    /// is only included when it lies on a cycle.
    pub fn reachable(&self, start: &Entity) -> Result<BTreeSet<Entity>, ModelError> {
        if !self.nodes.contains(start) {
            return Err(ModelError::UnknownEntity(start.clone()));
        }
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&Entity> = self.successors(start).collect();
        while let Some(v) = queue.pop_front() {
            if seen.insert(v.clone()) {
                queue.extend(self.successors(v).filter(|w| !seen.contains(*w)));
            }
        }
        Ok(seen)
    }

    /// A copy of this graph with `edges` replaced. Fails on self-loops or
    /// unknown endpoints.
    pub fn with_edges(&self, edges: EdgeSet) -> Result<Self, ModelError> {
        PolicyGraph::new(self.nodes.clone(), edges)
    }

    /// A copy of this graph with `extra` edges added.
    pub fn union_edges<'a, I>(&self, extra: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a Edge>,
    {
        let mut edges = self.edges.clone();
        edges.extend(extra.into_iter().cloned());
        self.with_edges(edges)
    }

    /// A copy of this graph without `removed` edges.
    pub fn without_edges(&self, removed: &EdgeSet) -> Self {
        PolicyGraph {
            nodes: self.nodes.clone(),
            edges: self.edges.difference(removed).cloned().collect(),
        }
    }
}

/// `{(r, s) : (s, r) ∈ edges}`.
pub fn reverse_edges<'a, I>(edges: I) -> EdgeSet
where
    I: IntoIterator<Item = &'a Edge>,
{
    edges.into_iter().map(Edge::reversed).collect()
}

/// A policy graph plus the subset of its edges whose answers are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatefulPolicy {
    graph: PolicyGraph,
    stateful: EdgeSet,
}

impl StatefulPolicy {
    pub fn new(graph: PolicyGraph, stateful: EdgeSet) -> Result<Self, ModelError> {
        if let Some(e) = stateful.iter().find(|e| !graph.contains_edge(e)) {
            return Err(ModelError::StatefulNotInPolicy(e.clone()));
        }
        Ok(StatefulPolicy { graph, stateful })
    }

    /// A stateful policy with no stateful edges.
    pub fn stateless(graph: PolicyGraph) -> Self {
        StatefulPolicy {
            graph,
            stateful: EdgeSet::new(),
        }
    }

    pub fn graph(&self) -> &PolicyGraph {
        &self.graph
    }

    pub fn stateful(&self) -> &EdgeSet {
        &self.stateful
    }

    /// Answer flows that are not already policy edges.
    pub fn backflows(&self) -> EdgeSet {
        reverse_edges(&self.stateful)
            .into_iter()
            .filter(|e| !self.graph.contains_edge(e))
            .collect()
    }
}

//! Security invariant templates and their scenario-specific instances.
//!
//! A template is generic knowledge ("information must not leave a sink");
//! an [`InvariantInstance`] binds it to a scenario by assigning every entity
//! a host attribute. Users only declare attributes for the hosts they care
//! about; [`auto_complete`] fills the rest with the template's secure default.
//!
//! Templates whose semantics is a per-edge predicate over sender and
//! receiver attributes are *Φ-structured*; the synthesis and stateful
//! engines take fast paths for them.

mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Edge, EdgeSet, Entity, PolicyGraph};

pub use templates::{BellLaPadula, CommPartners, NotCommWith, Sink, Subnets};

/// Whether an invariant restricts information flow or access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityKind {
    /// Information-flow security: answer flows leak information too.
    Ifs,
    /// Access-control strategy: only who may initiate a flow matters.
    Acs,
}

impl fmt::Display for SecurityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SecurityKind::Ifs => "IFS",
            SecurityKind::Acs => "ACS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SubnetsAttr {
    /// Member of the protected (internal) host group.
    Member,
    /// Reachable from anywhere, may reach members (a DMZ host).
    InboundGateway,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SinkAttr {
    Sink,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BlpAttr {
    /// 0 is unclassified; higher is more confidential.
    pub level: u32,
    /// Trusted hosts receive at any level and re-emit at level 0.
    pub trusted: bool,
}

impl BlpAttr {
    pub fn new(level: u32, trusted: bool) -> Self {
        BlpAttr { level, trusted }
    }

    pub fn effective_send_level(&self) -> u32 {
        if self.trusted {
            0
        } else {
            self.level
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum CommPartnersAttr {
    /// Only the listed senders may reach this host.
    Master(BTreeSet<Entity>),
    #[default]
    DontCare,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NotCommWithAttr {
    /// Hosts this host must not reach, directly or transitively.
    pub forbidden: BTreeSet<Entity>,
}

/// A host attribute for one of the shipped templates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AttrValue {
    Subnets(SubnetsAttr),
    Sink(SinkAttr),
    Blp(BlpAttr),
    CommPartners(CommPartnersAttr),
    NotCommWith(NotCommWithAttr),
}

impl AttrValue {
    /// Entities named inside the attribute (ACL and blacklist members).
    pub fn referenced_entities(&self) -> Vec<&Entity> {
        match self {
            AttrValue::CommPartners(CommPartnersAttr::Master(l)) => l.iter().collect(),
            AttrValue::NotCommWith(a) => a.forbidden.iter().collect(),
            _ => Vec::new(),
        }
    }
}

pub type AttrMap = BTreeMap<Entity, AttrValue>;

/// An entity together with its attribute, as seen by a per-edge predicate.
#[derive(Debug, Clone, Copy)]
pub struct Host<'a> {
    pub entity: &'a Entity,
    pub attr: &'a AttrValue,
}

impl<'a> Host<'a> {
    pub fn new(entity: &'a Entity, attr: &'a AttrValue) -> Self {
        Host { entity, attr }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantError {
    #[error("attribute for `{entity}` does not belong to template `{template}`")]
    AttrMismatch { template: &'static str, entity: Entity },
    #[error("attribute declared for unknown entity `{0}`")]
    UnknownAttrEntity(Entity),
    #[error("attribute of `{host}` references unknown entity `{referenced}`")]
    UnknownReference { host: Entity, referenced: Entity },
    #[error("invariant `{instance}` has no attribute for entity `{entity}`")]
    MissingAttr { instance: String, entity: Entity },
    #[error("template `{0}` is not Φ-structured")]
    NotPhiStructured(&'static str),
}

/// The generic semantics of a security invariant.
///
/// Implementations must be pure. A template is Φ-structured iff
/// [`Template::phi`] returns `Some`; the default [`Template::offending_edges`]
/// derives the offending set from it.
pub trait Template: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn kind(&self) -> SecurityKind;

    fn phi_structured(&self) -> bool;

    /// The secure default assigned to hosts without a declared attribute.
    fn default_attr(&self) -> AttrValue;

    fn accepts(&self, attr: &AttrValue) -> bool;

    /// Per-edge predicate over sender and receiver (and nothing else).
    /// `None` for templates that are not Φ-structured.
    fn phi(&self, sender: Host<'_>, receiver: Host<'_>) -> Option<bool>;

    /// Edges whose removal restores the invariant on `graph`; empty iff the
    /// invariant holds. `attrs` is total over the graph's nodes.
    fn offending_edges(&self, graph: &PolicyGraph, attrs: &AttrMap) -> EdgeSet {
        graph
            .edges()
            .iter()
            .filter(|e| {
                let s = Host::new(&e.sender, &attrs[&e.sender]);
                let r = Host::new(&e.receiver, &attrs[&e.receiver]);
                self.phi(s, r) == Some(false)
            })
            .cloned()
            .collect()
    }

    fn holds(&self, graph: &PolicyGraph, attrs: &AttrMap) -> bool {
        self.offending_edges(graph, attrs).is_empty()
    }
}

/// Identifiers of the shipped templates, as used in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Subnets,
    Sink,
    Blp,
    CommPartners,
    NotCommWith,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Subnets,
        TemplateId::Sink,
        TemplateId::Blp,
        TemplateId::CommPartners,
        TemplateId::NotCommWith,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Subnets => "subnets",
            TemplateId::Sink => "sink",
            TemplateId::Blp => "blp",
            TemplateId::CommPartners => "comm_partners",
            TemplateId::NotCommWith => "not_comm_with",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateId> {
        TemplateId::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn template(self) -> Arc<dyn Template> {
        match self {
            TemplateId::Subnets => Arc::new(Subnets),
            TemplateId::Sink => Arc::new(Sink),
            TemplateId::Blp => Arc::new(BellLaPadula),
            TemplateId::CommPartners => Arc::new(CommPartners),
            TemplateId::NotCommWith => Arc::new(NotCommWith),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Completes `declared` to a total map over `entities`, assigning the
/// template's default to every unlabeled entity.
pub fn auto_complete(
    template: &dyn Template,
    declared: &AttrMap,
    entities: &BTreeSet<Entity>,
) -> Result<AttrMap, InvariantError> {
    for (host, attr) in declared {
        if !entities.contains(host) {
            return Err(InvariantError::UnknownAttrEntity(host.clone()));
        }
        if !template.accepts(attr) {
            return Err(InvariantError::AttrMismatch {
                template: template.name(),
                entity: host.clone(),
            });
        }
        if let Some(r) = attr.referenced_entities().into_iter().find(|r| !entities.contains(*r)) {
            return Err(InvariantError::UnknownReference {
                host: host.clone(),
                referenced: r.clone(),
            });
        }
    }
    Ok(entities
        .iter()
        .map(|e| {
            let a = declared.get(e).cloned().unwrap_or_else(|| template.default_attr());
            (e.clone(), a)
        })
        .collect())
}

/// A template bound to a scenario's host attributes.
#[derive(Debug, Clone)]
pub struct InvariantInstance {
    id: String,
    template: Arc<dyn Template>,
    declared: AttrMap,
    attrs: AttrMap,
}

impl InvariantInstance {
    pub fn new(
        id: impl Into<String>,
        template: Arc<dyn Template>,
        declared: AttrMap,
        entities: &BTreeSet<Entity>,
    ) -> Result<Self, InvariantError> {
        let attrs = auto_complete(template.as_ref(), &declared, entities)?;
        Ok(InvariantInstance {
            id: id.into(),
            template,
            declared,
            attrs,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn template(&self) -> &dyn Template {
        self.template.as_ref()
    }

    pub fn template_name(&self) -> &'static str {
        self.template.name()
    }

    pub fn kind(&self) -> SecurityKind {
        self.template.kind()
    }

    pub fn phi_structured(&self) -> bool {
        self.template.phi_structured()
    }

    pub fn declared_attrs(&self) -> &AttrMap {
        &self.declared
    }

    pub fn attrs(&self) -> &AttrMap {
        &self.attrs
    }

    pub fn attr(&self, e: &Entity) -> Option<&AttrValue> {
        self.attrs.get(e)
    }

    pub fn is_declared(&self, e: &Entity) -> bool {
        self.declared.contains_key(e)
    }

    pub fn phi(&self, sender: Host<'_>, receiver: Host<'_>) -> Result<bool, InvariantError> {
        self.template
            .phi(sender, receiver)
            .ok_or(InvariantError::NotPhiStructured(self.template.name()))
    }

    /// `phi` applied to an edge, with the attributes of this instance.
    pub fn phi_edge(&self, e: &Edge) -> Result<bool, InvariantError> {
        let s = Host::new(&e.sender, self.lookup(&e.sender)?);
        let r = Host::new(&e.receiver, self.lookup(&e.receiver)?);
        self.phi(s, r)
    }

    fn lookup(&self, e: &Entity) -> Result<&AttrValue, InvariantError> {
        self.attrs.get(e).ok_or_else(|| InvariantError::MissingAttr {
            instance: self.id.clone(),
            entity: e.clone(),
        })
    }

    fn check_total(&self, graph: &PolicyGraph) -> Result<(), InvariantError> {
        graph.nodes().iter().try_for_each(|n| self.lookup(n).map(|_| ()))
    }

    /// The edges to remove so the invariant holds again; empty iff it holds.
    pub fn offending_edges(&self, graph: &PolicyGraph) -> Result<EdgeSet, InvariantError> {
        self.check_total(graph)?;
        Ok(self.template.offending_edges(graph, &self.attrs))
    }

    pub fn holds(&self, graph: &PolicyGraph) -> Result<bool, InvariantError> {
        self.check_total(graph)?;
        Ok(self.template.holds(graph, &self.attrs))
    }

    /// The family of offending edge sets: empty if the invariant holds,
    /// otherwise a single candidate set.
    pub fn offending_flows(&self, graph: &PolicyGraph) -> Result<Vec<EdgeSet>, InvariantError> {
        let off = self.offending_edges(graph)?;
        Ok(if off.is_empty() { Vec::new() } else { vec![off] })
    }

    /// Whether the invariant holds for the deny-all policy over the
    /// instance's entities.
    pub fn check_deny_all(&self) -> bool {
        let nodes = self.attrs.keys().cloned().collect();
        self.template.holds(&PolicyGraph::empty(nodes), &self.attrs)
    }
}

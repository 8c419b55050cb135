use std::collections::BTreeSet;

use super::{
    AttrMap, AttrValue, BlpAttr, CommPartnersAttr, Host, NotCommWithAttr, SecurityKind, SinkAttr,
    SubnetsAttr, Template,
};
use crate::model::{EdgeSet, Entity, PolicyGraph};

fn mismatch(template: &str) -> ! {
    panic!("attribute of the wrong template passed to `{template}`")
}

/// Collaborating, protected host groups.
///
/// Unassigned hosts may not reach members. Inbound gateways (DMZ hosts)
/// are reachable by everyone and may reach anyone.
#[derive(Debug, Clone, Copy, Default)]
pub struct Subnets;

impl Template for Subnets {
    fn name(&self) -> &'static str {
        "subnets"
    }

    fn kind(&self) -> SecurityKind {
        SecurityKind::Acs
    }

    fn phi_structured(&self) -> bool {
        true
    }

    fn default_attr(&self) -> AttrValue {
        AttrValue::Subnets(SubnetsAttr::default())
    }

    fn accepts(&self, attr: &AttrValue) -> bool {
        matches!(attr, AttrValue::Subnets(_))
    }

    fn phi(&self, sender: Host<'_>, receiver: Host<'_>) -> Option<bool> {
        match (sender.attr, receiver.attr) {
            (AttrValue::Subnets(s), AttrValue::Subnets(r)) => {
                Some(!(*s == SubnetsAttr::Unassigned && *r == SubnetsAttr::Member))
            }
            _ => mismatch(self.name()),
        }
    }
}

/// Information sink: a sink host must not send to anyone.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sink;

impl Template for Sink {
    fn name(&self) -> &'static str {
        "sink"
    }

    fn kind(&self) -> SecurityKind {
        SecurityKind::Ifs
    }

    fn phi_structured(&self) -> bool {
        true
    }

    fn default_attr(&self) -> AttrValue {
        AttrValue::Sink(SinkAttr::default())
    }

    fn accepts(&self, attr: &AttrValue) -> bool {
        matches!(attr, AttrValue::Sink(_))
    }

    fn phi(&self, sender: Host<'_>, receiver: Host<'_>) -> Option<bool> {
        match (sender.attr, receiver.attr) {
            (AttrValue::Sink(s), AttrValue::Sink(_)) => Some(*s != SinkAttr::Sink),
            _ => mismatch(self.name()),
        }
    }
}

/// Label-based information flow (no write-down), over a linear order of
/// security levels with trusted declassifiers.
#[derive(Debug, Clone, Copy, Default)]
pub struct BellLaPadula;

impl BellLaPadula {
    pub fn allows(sender: &BlpAttr, receiver: &BlpAttr) -> bool {
        receiver.trusted || sender.effective_send_level() <= receiver.level
    }
}

impl Template for BellLaPadula {
    fn name(&self) -> &'static str {
        "blp"
    }

    fn kind(&self) -> SecurityKind {
        SecurityKind::Ifs
    }

    fn phi_structured(&self) -> bool {
        true
    }

    fn default_attr(&self) -> AttrValue {
        AttrValue::Blp(BlpAttr::default())
    }

    fn accepts(&self, attr: &AttrValue) -> bool {
        matches!(attr, AttrValue::Blp(_))
    }

    fn phi(&self, sender: Host<'_>, receiver: Host<'_>) -> Option<bool> {
        match (sender.attr, receiver.attr) {
            (AttrValue::Blp(s), AttrValue::Blp(r)) => Some(BellLaPadula::allows(s, r)),
            _ => mismatch(self.name()),
        }
    }
}

/// Simple inbound ACLs: a master host accepts only its listed senders.
#[derive(Debug, Clone, Copy, Default)]
pub struct CommPartners;

impl Template for CommPartners {
    fn name(&self) -> &'static str {
        "comm_partners"
    }

    fn kind(&self) -> SecurityKind {
        SecurityKind::Acs
    }

    fn phi_structured(&self) -> bool {
        true
    }

    fn default_attr(&self) -> AttrValue {
        AttrValue::CommPartners(CommPartnersAttr::default())
    }

    fn accepts(&self, attr: &AttrValue) -> bool {
        matches!(attr, AttrValue::CommPartners(_))
    }

    fn phi(&self, sender: Host<'_>, receiver: Host<'_>) -> Option<bool> {
        Some(CommPartners::allows(sender.entity, receiver.attr))
    }
}

impl CommPartners {
    pub fn allows(sender: &Entity, receiver: &AttrValue) -> bool {
        match receiver {
            AttrValue::CommPartners(CommPartnersAttr::Master(allowed)) => allowed.contains(sender),
            AttrValue::CommPartners(CommPartnersAttr::DontCare) => true,
            _ => mismatch("comm_partners"),
        }
    }
}

/// Black-listing transitive ACLs: a host must not reach any of its
/// forbidden hosts over any path. Not Φ-structured.
#[derive(Debug, Clone, Copy, Default)]
pub struct NotCommWith;

impl NotCommWith {
    fn forbidden(attr: &AttrValue) -> &BTreeSet<Entity> {
        match attr {
            AttrValue::NotCommWith(NotCommWithAttr { forbidden }) => forbidden,
            _ => mismatch("not_comm_with"),
        }
    }
}

impl Template for NotCommWith {
    fn name(&self) -> &'static str {
        "not_comm_with"
    }

    fn kind(&self) -> SecurityKind {
        SecurityKind::Acs
    }

    fn phi_structured(&self) -> bool {
        false
    }

    fn default_attr(&self) -> AttrValue {
        AttrValue::NotCommWith(NotCommWithAttr::default())
    }

    fn accepts(&self, attr: &AttrValue) -> bool {
        matches!(attr, AttrValue::NotCommWith(_))
    }

    fn phi(&self, _sender: Host<'_>, _receiver: Host<'_>) -> Option<bool> {
        None
    }

    /// Every edge `(u, w)` on some walk from a restricted host `v` to one
    /// of its forbidden targets `t`, i.e. `v ⇝* u` and `w ⇝* t`.
    fn offending_edges(&self, graph: &PolicyGraph, attrs: &AttrMap) -> EdgeSet {
        let reverse = graph
            .with_edges(crate::model::reverse_edges(graph.edges()))
            .expect("reversal keeps the graph well-formed");
        let mut out = EdgeSet::new();
        for v in graph.nodes() {
            let forbidden = NotCommWith::forbidden(&attrs[v]);
            if forbidden.is_empty() {
                continue;
            }
            let mut from_v = graph.reachable(v).expect("v is a node");
            let hit: Vec<&Entity> = forbidden.iter().filter(|t| from_v.contains(*t)).collect();
            if hit.is_empty() {
                continue;
            }
            from_v.insert(v.clone());
            for t in hit {
                let mut to_t = reverse.reachable(t).expect("t is a node");
                to_t.insert(t.clone());
                out.extend(
                    graph
                        .edges()
                        .iter()
                        .filter(|e| from_v.contains(&e.sender) && to_t.contains(&e.receiver))
                        .cloned(),
                );
            }
        }
        out
    }

    fn holds(&self, graph: &PolicyGraph, attrs: &AttrMap) -> bool {
        graph.nodes().iter().all(|v| {
            let forbidden = NotCommWith::forbidden(&attrs[v]);
            forbidden.is_empty()
                || graph
                    .reachable(v)
                    .expect("v is a node")
                    .is_disjoint(forbidden)
        })
    }
}


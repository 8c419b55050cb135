//! Fixtures and proptest strategies shared by the unit tests.

use std::collections::BTreeSet;

use proptest::prelude::*;

use crate::invariants::{
    AttrMap, AttrValue, BlpAttr, CommPartnersAttr, InvariantInstance, NotCommWithAttr, SinkAttr,
    SubnetsAttr, TemplateId,
};
use crate::model::{Edge, EdgeSet, Entity, PolicyGraph};

pub const CASE_STUDY: [&str; 5] = ["INET", "WebApp", "WebFrnt", "DB", "Log"];

pub fn entities(names: &[&str]) -> BTreeSet<Entity> {
    names.iter().map(|n| Entity::from(*n)).collect()
}

pub fn edges(pairs: &[(&str, &str)]) -> EdgeSet {
    pairs.iter().map(|(s, r)| Edge::new(*s, *r)).collect()
}

pub fn attrs(pairs: Vec<(&str, AttrValue)>) -> AttrMap {
    pairs.into_iter().map(|(e, a)| (Entity::from(e), a)).collect()
}

pub fn instance(t: TemplateId, declared: AttrMap, ents: &BTreeSet<Entity>) -> InvariantInstance {
    InvariantInstance::new(t.as_str(), t.template(), declared, ents).unwrap()
}

/// The four case-study invariants: subnets, sink, BLP, ACL on the database.
pub fn case_study_instances() -> Vec<InvariantInstance> {
    let ents = entities(&CASE_STUDY);
    let member = AttrValue::Subnets(SubnetsAttr::Member);
    vec![
        instance(
            TemplateId::Subnets,
            attrs(vec![
                ("DB", member.clone()),
                ("Log", member.clone()),
                ("WebApp", member),
                ("WebFrnt", AttrValue::Subnets(SubnetsAttr::InboundGateway)),
            ]),
            &ents,
        ),
        instance(
            TemplateId::Sink,
            attrs(vec![("Log", AttrValue::Sink(SinkAttr::Sink))]),
            &ents,
        ),
        instance(
            TemplateId::Blp,
            attrs(vec![
                ("DB", AttrValue::Blp(BlpAttr::new(1, false))),
                ("Log", AttrValue::Blp(BlpAttr::new(1, false))),
                ("WebApp", AttrValue::Blp(BlpAttr::new(0, true))),
            ]),
            &ents,
        ),
        instance(
            TemplateId::CommPartners,
            attrs(vec![(
                "DB",
                AttrValue::CommPartners(CommPartnersAttr::Master(entities(&["WebApp"]))),
            )]),
            &ents,
        ),
    ]
}

pub const CASE_STUDY_POLICY: [(&str, &str); 10] = [
    ("WebFrnt", "Log"),
    ("WebFrnt", "WebApp"),
    ("WebFrnt", "INET"),
    ("DB", "Log"),
    ("DB", "WebApp"),
    ("WebApp", "WebFrnt"),
    ("WebApp", "DB"),
    ("WebApp", "Log"),
    ("WebApp", "INET"),
    ("INET", "WebFrnt"),
];

/// The case-study policy after the administrator dropped WebFrnt -> INET.
pub fn case_study_refined() -> PolicyGraph {
    let mut es = edges(&CASE_STUDY_POLICY);
    es.remove(&Edge::new("WebFrnt", "INET"));
    PolicyGraph::new(entities(&CASE_STUDY), es).unwrap()
}

pub fn names(n: usize) -> Vec<Entity> {
    (0..n).map(|i| Entity::new(format!("h{i}"))).collect()
}

fn arb_subset(names: Vec<Entity>) -> impl Strategy<Value = BTreeSet<Entity>> {
    let n = names.len();
    proptest::collection::vec(any::<bool>(), n).prop_map(move |bits| {
        names
            .iter()
            .zip(bits)
            .filter(|(_, b)| *b)
            .map(|(e, _)| e.clone())
            .collect()
    })
}

pub fn arb_attr(t: TemplateId, names: Vec<Entity>) -> BoxedStrategy<AttrValue> {
    match t {
        TemplateId::Subnets => prop_oneof![
            Just(SubnetsAttr::Member),
            Just(SubnetsAttr::InboundGateway),
            Just(SubnetsAttr::Unassigned)
        ]
        .prop_map(AttrValue::Subnets)
        .boxed(),
        TemplateId::Sink => prop_oneof![Just(SinkAttr::Sink), Just(SinkAttr::Unassigned)]
            .prop_map(AttrValue::Sink)
            .boxed(),
        TemplateId::Blp => (0u32..3, any::<bool>())
            .prop_map(|(l, t)| AttrValue::Blp(BlpAttr::new(l, t)))
            .boxed(),
        TemplateId::CommPartners => prop_oneof![
            Just(AttrValue::CommPartners(CommPartnersAttr::DontCare)),
            arb_subset(names).prop_map(|l| AttrValue::CommPartners(CommPartnersAttr::Master(l)))
        ]
        .boxed(),
        TemplateId::NotCommWith => arb_subset(names)
            .prop_map(|forbidden| AttrValue::NotCommWith(NotCommWithAttr { forbidden }))
            .boxed(),
    }
}

/// A partial attribute map: each entity is declared with probability 1/2.
pub fn arb_declared(t: TemplateId, names: Vec<Entity>) -> impl Strategy<Value = AttrMap> {
    let per_host: Vec<_> = names
        .iter()
        .map(|e| {
            (any::<bool>(), arb_attr(t, names.clone()))
                .prop_map({
                    let e = e.clone();
                    move |(declare, a)| declare.then(|| (e.clone(), a))
                })
                .boxed()
        })
        .collect();
    per_host.prop_map(|v| v.into_iter().flatten().collect())
}

pub fn arb_instance(t: TemplateId, names: Vec<Entity>) -> impl Strategy<Value = InvariantInstance> {
    let ents: BTreeSet<Entity> = names.iter().cloned().collect();
    arb_declared(t, names).prop_map(move |d| {
        InvariantInstance::new(t.as_str(), t.template(), d, &ents).unwrap()
    })
}

pub fn arb_edges(names: Vec<Entity>) -> impl Strategy<Value = EdgeSet> {
    let n = names.len();
    proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
        let mut es = EdgeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && bits[i * n + j] {
                    es.insert(Edge::new(names[i].clone(), names[j].clone()));
                }
            }
        }
        es
    })
}

pub fn arb_graph(names: Vec<Entity>) -> impl Strategy<Value = PolicyGraph> {
    let nodes: BTreeSet<Entity> = names.iter().cloned().collect();
    arb_edges(names).prop_map(move |es| PolicyGraph::new(nodes.clone(), es).unwrap())
}

pub const PHI_TEMPLATES: [TemplateId; 4] = [
    TemplateId::Subnets,
    TemplateId::Sink,
    TemplateId::Blp,
    TemplateId::CommPartners,
];

/// Between zero and four instances of Φ-structured templates.
pub fn arb_phi_instances(names: Vec<Entity>) -> impl Strategy<Value = Vec<InvariantInstance>> {
    proptest::collection::vec(proptest::sample::select(PHI_TEMPLATES.to_vec()), 0..=4)
        .prop_flat_map(move |ts| {
            ts.into_iter()
                .map(|t| arb_instance(t, names.clone()).boxed())
                .collect::<Vec<_>>()
        })
}

pub fn arb_template() -> impl Strategy<Value = TemplateId> {
    proptest::sample::select(TemplateId::ALL.to_vec())
}

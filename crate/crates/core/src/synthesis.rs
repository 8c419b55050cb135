//! Construction of the maximum-permissive policy, verification, and the
//! manual refinement loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invariants::{InvariantError, InvariantInstance, SecurityKind};
use crate::model::{Edge, EdgeSet, Entity, ModelError, PolicyGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthesisError {
    #[error("invariant `{0}` does not hold for the deny-all policy; no policy can satisfy it")]
    DenyAllViolated(String),
    #[error("invariant `{0}` is violated but offers no edges to remove")]
    NoProgress(String),
    #[error("refinement edit would add the self-loop {0}->{0}")]
    SelfLoopEdit(Entity),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

/// Which stateful consistency criterion a report line belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Answer flows must not violate an information-flow invariant.
    NoInformationFlowViolation,
    /// Answer flows must not cause violations on existing policy edges.
    NoAccessControlSideEffect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub instance: String,
    pub template: String,
    pub kind: SecurityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<Criterion>,
    pub holds: bool,
    pub offending: EdgeSet,
}

/// Per-invariant outcome of checking a (stateful) policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub overall: bool,
    pub per_invariant: Vec<InvariantResult>,
}

impl VerificationReport {
    pub fn from_results(per_invariant: Vec<InvariantResult>) -> Self {
        VerificationReport {
            overall: per_invariant.iter().all(|r| r.holds),
            per_invariant,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantResult> {
        self.per_invariant.iter().filter(|r| !r.holds)
    }

    pub fn result(&self, instance: &str) -> Option<&InvariantResult> {
        self.per_invariant.iter().find(|r| r.instance == instance)
    }
}

/// A manual change to a policy graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum RefinementEdit {
    Add { from: Entity, to: Entity },
    Remove { from: Entity, to: Entity },
}

impl RefinementEdit {
    pub fn add(from: impl Into<Entity>, to: impl Into<Entity>) -> Self {
        RefinementEdit::Add {
            from: from.into(),
            to: to.into(),
        }
    }

    pub fn remove(from: impl Into<Entity>, to: impl Into<Entity>) -> Self {
        RefinementEdit::Remove {
            from: from.into(),
            to: to.into(),
        }
    }

    pub fn edge(&self) -> Edge {
        match self {
            RefinementEdit::Add { from, to } | RefinementEdit::Remove { from, to } => {
                Edge::new(from.clone(), to.clone())
            }
        }
    }
}

/// Fails with the first instance that does not hold on the deny-all policy.
pub fn check_deny_all(instances: &[InvariantInstance]) -> Result<(), SynthesisError> {
    match instances.iter().find(|i| !i.check_deny_all()) {
        Some(i) => Err(SynthesisError::DenyAllViolated(i.id().to_owned())),
        None => Ok(()),
    }
}

/// Builds the policy by starting from allow-all and removing undesired
/// edges.
///
/// Φ-structured instances are applied in one pass over all ordered pairs;
/// their joint result is the unique maximum-permissive policy. Remaining
/// instances are then repaired in scenario order by removing their
/// offending edges until all hold; that result can depend on the order.
pub fn construct_policy<'a, I>(
    entities: I,
    instances: &[InvariantInstance],
) -> Result<PolicyGraph, SynthesisError>
where
    I: IntoIterator<Item = &'a Entity>,
{
    check_deny_all(instances)?;
    let all = PolicyGraph::complete(entities)?;

    let phi: Vec<&InvariantInstance> = instances.iter().filter(|i| i.phi_structured()).collect();
    let mut kept = EdgeSet::new();
    for e in all.edges() {
        let mut ok = true;
        for inst in &phi {
            if !inst.phi_edge(e)? {
                ok = false;
                break;
            }
        }
        if ok {
            kept.insert(e.clone());
        }
    }
    let mut graph = all.with_edges(kept)?;

    let generic: Vec<&InvariantInstance> =
        instances.iter().filter(|i| !i.phi_structured()).collect();
    loop {
        let mut violated = None;
        for inst in &generic {
            if !inst.holds(&graph)? {
                violated = Some(*inst);
                break;
            }
        }
        let Some(inst) = violated else { break };
        let flows = inst.offending_flows(&graph)?;
        match flows.first() {
            Some(first) if !first.is_empty() => graph = graph.without_edges(first),
            _ => return Err(SynthesisError::NoProgress(inst.id().to_owned())),
        }
    }
    Ok(graph)
}

/// Checks every instance against `graph`.
pub fn verify(
    graph: &PolicyGraph,
    instances: &[InvariantInstance],
) -> Result<VerificationReport, InvariantError> {
    let results = instances
        .iter()
        .map(|inst| {
            let offending = inst.offending_edges(graph)?;
            let holds = inst.holds(graph)?;
            Ok(InvariantResult {
                instance: inst.id().to_owned(),
                template: inst.template_name().to_owned(),
                kind: inst.kind(),
                criterion: None,
                holds,
                offending,
            })
        })
        .collect::<Result<Vec<_>, InvariantError>>()?;
    Ok(VerificationReport::from_results(results))
}

/// Applies `edits` to `graph` in order. Adding a present edge or removing
/// an absent one is a no-op.
pub fn apply_edits(
    graph: &PolicyGraph,
    edits: &[RefinementEdit],
) -> Result<PolicyGraph, SynthesisError> {
    let mut edges = graph.edges().clone();
    for edit in edits {
        let e = edit.edge();
        for end in [&e.sender, &e.receiver] {
            if !graph.contains_node(end) {
                return Err(ModelError::UnknownEntity(end.clone()).into());
            }
        }
        if e.is_self_loop() {
            return Err(SynthesisError::SelfLoopEdit(e.sender));
        }
        match edit {
            RefinementEdit::Add { .. } => edges.insert(e),
            RefinementEdit::Remove { .. } => edges.remove(&e),
        };
    }
    Ok(graph.with_edges(edges)?)
}

/// Applies `edits` and re-verifies. A failing result is returned, not
/// rejected; the caller decides what to do with it.
pub fn refine(
    graph: &PolicyGraph,
    edits: &[RefinementEdit],
    instances: &[InvariantInstance],
) -> Result<(PolicyGraph, VerificationReport), SynthesisError> {
    let refined = apply_edits(graph, edits)?;
    let report = verify(&refined, instances)?;
    Ok((refined, report))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::invariants::{AttrMap, AttrValue, Host, NotCommWithAttr, Template, TemplateId};
    use crate::test_support::*;

    fn case_study_graph() -> PolicyGraph {
        construct_policy(&entities(&CASE_STUDY), &case_study_instances()).unwrap()
    }

    #[test]
    fn no_instances_gives_complete_graph() {
        let ents = entities(&CASE_STUDY);
        let g = construct_policy(&ents, &[]).unwrap();
        assert_eq!(g, PolicyGraph::complete(&ents).unwrap());
    }

    #[test]
    fn case_study_policy_has_ten_edges() {
        assert_eq!(case_study_graph().edges(), &edges(&CASE_STUDY_POLICY));
    }

    #[test]
    fn not_comm_with_construction_breaks_paths() {
        let abc = entities(&["A", "B", "C"]);
        let ncw = instance(
            TemplateId::NotCommWith,
            attrs(vec![(
                "A",
                AttrValue::NotCommWith(NotCommWithAttr {
                    forbidden: entities(&["C"]),
                }),
            )]),
            &abc,
        );
        let g = construct_policy(&abc, &[ncw]).unwrap();
        assert!(!g.reachable(&"A".into()).unwrap().contains(&Entity::from("C")));
        assert!(g.edges().is_subset(PolicyGraph::complete(&abc).unwrap().edges()));
    }

    #[derive(Debug)]
    struct NeedsAnEdge;

    impl Template for NeedsAnEdge {
        fn name(&self) -> &'static str {
            "needs_an_edge"
        }
        fn kind(&self) -> SecurityKind {
            SecurityKind::Acs
        }
        fn phi_structured(&self) -> bool {
            false
        }
        fn default_attr(&self) -> AttrValue {
            AttrValue::Sink(Default::default())
        }
        fn accepts(&self, _: &AttrValue) -> bool {
            true
        }
        fn phi(&self, _: Host<'_>, _: Host<'_>) -> Option<bool> {
            None
        }
        fn holds(&self, graph: &PolicyGraph, _: &AttrMap) -> bool {
            !graph.edges().is_empty()
        }
    }

    #[test]
    fn deny_all_violation_is_rejected_with_instance_name() {
        let ents = entities(&["A", "B"]);
        let bad = InvariantInstance::new("bad", Arc::new(NeedsAnEdge), AttrMap::new(), &ents)
            .unwrap();
        assert_eq!(
            construct_policy(&ents, &[bad]),
            Err(SynthesisError::DenyAllViolated("bad".into()))
        );
    }

    #[test]
    fn verify_examples() {
        let inst = case_study_instances();
        let g = case_study_graph();
        assert!(verify(&g, &inst).unwrap().overall);

        let with_leak = g.union_edges(&edges(&[("Log", "INET")])).unwrap();
        let report = verify(&with_leak, &inst).unwrap();
        assert!(!report.overall);
        let sink = report.result("sink").unwrap();
        assert!(!sink.holds);
        assert_eq!(sink.offending, edges(&[("Log", "INET")]));
        // Log is confidential, so BLP flags the same flow
        let failing: BTreeSet<&str> = report.failures().map(|r| r.instance.as_str()).collect();
        assert_eq!(failing, ["blp", "sink"].into_iter().collect());

        let empty = PolicyGraph::empty(entities(&CASE_STUDY));
        assert!(verify(&empty, &inst).unwrap().overall);
    }

    #[test]
    fn refine_examples() {
        let inst = case_study_instances();
        let g = case_study_graph();
        let (refined, report) =
            refine(&g, &[RefinementEdit::remove("WebFrnt", "INET")], &inst).unwrap();
        assert_eq!(refined, case_study_refined());
        assert_eq!(refined.edges().len(), 9);
        assert!(report.overall);

        let (same, report) = refine(&g, &[], &inst).unwrap();
        assert_eq!(same, g);
        assert_eq!(report, verify(&g, &inst).unwrap());

        let (bad, report) =
            refine(&refined, &[RefinementEdit::add("INET", "DB")], &inst).unwrap();
        assert_eq!(bad.edges().len(), 10);
        assert!(!report.overall);
        let failing: BTreeSet<&str> = report.failures().map(|r| r.instance.as_str()).collect();
        assert_eq!(failing, ["comm_partners", "subnets"].into_iter().collect());
        for r in report.failures() {
            assert_eq!(r.offending, edges(&[("INET", "DB")]));
        }
    }

    #[test]
    fn refine_rejects_self_loops_and_unknown_entities() {
        let g = case_study_graph();
        assert_eq!(
            refine(&g, &[RefinementEdit::add("DB", "DB")], &[]),
            Err(SynthesisError::SelfLoopEdit("DB".into()))
        );
        assert_eq!(
            refine(&g, &[RefinementEdit::add("DB", "Nope")], &[]),
            Err(SynthesisError::Model(ModelError::UnknownEntity("Nope".into())))
        );
    }

    #[test]
    fn edits_are_idempotent() {
        let g = case_study_graph();
        let e = RefinementEdit::add("WebApp", "DB");
        assert_eq!(apply_edits(&g, &[e.clone(), e]).unwrap(), g);
        let r = RefinementEdit::remove("INET", "DB");
        assert_eq!(apply_edits(&g, &[r]).unwrap(), g);
    }

    #[test]
    fn edit_json_shape() {
        let e: RefinementEdit =
            serde_json::from_str(r#"{"op":"remove","from":"WebFrnt","to":"INET"}"#).unwrap();
        assert_eq!(e, RefinementEdit::remove("WebFrnt", "INET"));
        assert_eq!(
            serde_json::to_string(&RefinementEdit::add("A", "B")).unwrap(),
            r#"{"op":"add","from":"A","to":"B"}"#
        );
    }

    fn arb_phi_scenario(max: usize) -> impl Strategy<Value = (Vec<Entity>, Vec<InvariantInstance>)> {
        (1..=max).prop_flat_map(|n| {
            let ns = names(n);
            (Just(ns.clone()), arb_phi_instances(ns))
        })
    }

    fn arb_mixed_scenario(
        max: usize,
    ) -> impl Strategy<Value = (Vec<Entity>, Vec<InvariantInstance>)> {
        (1..=max).prop_flat_map(|n| {
            let ns = names(n);
            let insts = proptest::collection::vec(arb_template(), 0..=4).prop_flat_map({
                let ns = ns.clone();
                move |ts| {
                    ts.into_iter()
                        .map(|t| arb_instance(t, ns.clone()).boxed())
                        .collect::<Vec<_>>()
                }
            });
            (Just(ns), insts)
        })
    }

    proptest! {
        #[test]
        fn construction_is_sound((ns, insts) in arb_mixed_scenario(6)) {
            let g = construct_policy(&ns, &insts).unwrap();
            prop_assert!(verify(&g, &insts).unwrap().overall);
            // determinism
            prop_assert_eq!(construct_policy(&ns, &insts).unwrap(), g);
        }

        #[test]
        fn phi_construction_is_maximal((ns, insts) in arb_phi_scenario(6)) {
            let g = construct_policy(&ns, &insts).unwrap();
            let all = PolicyGraph::complete(&ns).unwrap();
            for e in all.edges().difference(g.edges()) {
                let more = g.union_edges([e]).unwrap();
                prop_assert!(!verify(&more, &insts).unwrap().overall, "{} could be added", e);
            }
        }

        #[test]
        fn remove_then_add_round_trips(
            (ns, insts) in arb_mixed_scenario(5),
            pick in any::<proptest::sample::Index>(),
        ) {
            let g = construct_policy(&ns, &insts).unwrap();
            if !g.edges().is_empty() {
                let e = g.edges().iter().nth(pick.index(g.edges().len())).unwrap().clone();
                let edits = [
                    RefinementEdit::remove(e.sender.clone(), e.receiver.clone()),
                    RefinementEdit::add(e.sender, e.receiver),
                ];
                let (back, report) = refine(&g, &edits, &insts).unwrap();
                prop_assert_eq!(back, g);
                prop_assert!(report.overall);
            }
        }
    }
}

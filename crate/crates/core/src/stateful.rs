//! Upgrading a policy to a stateful policy.
//!
//! Marking an edge `s -> r` stateful also admits answer packets `r -> s`.
//! A stateful set is acceptable when the answer flows that are not already
//! policy edges (the *backflows*)
//!
//! 1. violate no information-flow (IFS) invariant, and
//! 2. cause no access-control (ACS) violation outside the backflows
//!    themselves.
//!
//! For Φ-structured invariants both criteria decompose per edge, so the
//! maximal stateful set is found in one pass over the policy edges.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::invariants::{AttrValue, Host, InvariantError, InvariantInstance, SecurityKind};
use crate::model::{Edge, EdgeSet, Entity, ModelError, PolicyGraph, StatefulPolicy};
use crate::synthesis::{verify, Criterion, InvariantResult, VerificationReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatefulError {
    #[error("the policy violates its invariants ({0}); fix it before computing stateful edges")]
    PolicyViolated(String),
    #[error("{count} candidate edges exceed the enumeration limit of {max}")]
    TooManyCandidates { count: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

/// Upper bound accepted by [`brute_force_stateful_oracle`].
pub const ORACLE_HARD_LIMIT: usize = 20;

/// Checks the two stateful consistency criteria.
///
/// IFS instances must hold on the policy extended with all backflows. For
/// ACS instances every offending edge of the extended policy must itself be
/// a backflow; the report lists the offending edges outside the backflows.
pub fn verify_stateful(
    sp: &StatefulPolicy,
    instances: &[InvariantInstance],
) -> Result<VerificationReport, InvariantError> {
    let backflows = sp.backflows();
    let extended = sp
        .graph()
        .union_edges(&backflows)
        .expect("backflows reverse policy edges");
    let results = instances
        .iter()
        .map(|inst| {
            let offending = inst.offending_edges(&extended)?;
            let (criterion, holds, offending) = match inst.kind() {
                SecurityKind::Ifs => {
                    let holds = inst.holds(&extended)?;
                    (Criterion::NoInformationFlowViolation, holds, offending)
                }
                SecurityKind::Acs => {
                    let side_effects: EdgeSet =
                        offending.difference(&backflows).cloned().collect();
                    (
                        Criterion::NoAccessControlSideEffect,
                        side_effects.is_empty(),
                        side_effects,
                    )
                }
            };
            Ok(InvariantResult {
                instance: inst.id().to_owned(),
                template: inst.template_name().to_owned(),
                kind: inst.kind(),
                criterion: Some(criterion),
                holds,
                offending,
            })
        })
        .collect::<Result<Vec<_>, InvariantError>>()?;
    Ok(VerificationReport::from_results(results))
}

/// Policy edges whose reverse is not itself a policy edge. Only these can
/// usefully be marked stateful.
pub fn candidate_edges(graph: &PolicyGraph) -> Vec<Edge> {
    graph
        .edges()
        .iter()
        .filter(|e| !graph.contains_edge(&e.reversed()))
        .cloned()
        .collect()
}

/// Computes a stateful policy for a verified `graph`.
///
/// With only Φ-structured instances, an edge is marked iff its backflow
/// passes every IFS predicate; the result is the unique maximum. Otherwise
/// candidates are tried greedily, `preferences` first and then in canonical
/// order, and kept iff the criteria still pass.
pub fn compute_stateful(
    graph: &PolicyGraph,
    instances: &[InvariantInstance],
    preferences: &[Edge],
) -> Result<StatefulPolicy, StatefulError> {
    let report = verify(graph, instances)?;
    if !report.overall {
        let failing: Vec<&str> = report.failures().map(|r| r.instance.as_str()).collect();
        return Err(StatefulError::PolicyViolated(failing.join(", ")));
    }
    let candidates = candidate_edges(graph);

    if instances.iter().all(|i| i.phi_structured()) {
        let ifs: Vec<&InvariantInstance> =
            instances.iter().filter(|i| i.kind() == SecurityKind::Ifs).collect();
        let mut stateful = EdgeSet::new();
        for e in candidates {
            let mut ok = true;
            for inst in &ifs {
                let (s, r) = (&e.sender, &e.receiver);
                let back_ok = inst.phi(
                    Host::new(r, lookup(inst, r)?),
                    Host::new(s, lookup(inst, s)?),
                )?;
                if !back_ok {
                    ok = false;
                    break;
                }
            }
            if ok {
                stateful.insert(e);
            }
        }
        return Ok(StatefulPolicy::new(graph.clone(), stateful)?);
    }

    let mut order: Vec<Edge> = Vec::with_capacity(candidates.len());
    let mut seen = BTreeSet::new();
    let candidate_set: BTreeSet<&Edge> = candidates.iter().collect();
    for e in preferences.iter().chain(candidates.iter()) {
        if candidate_set.contains(e) && seen.insert(e.clone()) {
            order.push(e.clone());
        }
    }
    let mut stateful = EdgeSet::new();
    for e in order {
        stateful.insert(e.clone());
        let trial = StatefulPolicy::new(graph.clone(), stateful.clone())?;
        if !verify_stateful(&trial, instances)?.overall {
            stateful.remove(&e);
        }
    }
    Ok(StatefulPolicy::new(graph.clone(), stateful)?)
}

fn lookup<'a>(inst: &'a InvariantInstance, e: &Entity) -> Result<&'a AttrValue, InvariantError> {
    inst.attr(e).ok_or_else(|| InvariantError::MissingAttr {
        instance: inst.id().to_owned(),
        entity: e.clone(),
    })
}

/// Enumerates every subset of the candidate edges and returns the maximal
/// subsets (no valid strict superset) that pass [`verify_stateful`], in a
/// deterministic order. Exponential; meant as a test oracle.
pub fn brute_force_stateful_oracle(
    graph: &PolicyGraph,
    instances: &[InvariantInstance],
    max_edges: usize,
) -> Result<Vec<EdgeSet>, StatefulError> {
    let candidates = candidate_edges(graph);
    let limit = max_edges.min(ORACLE_HARD_LIMIT);
    if candidates.len() > limit {
        return Err(StatefulError::TooManyCandidates {
            count: candidates.len(),
            max: limit,
        });
    }
    let k = candidates.len();
    let subset = |mask: u32| -> EdgeSet {
        (0..k)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| candidates[i].clone())
            .collect()
    };
    let mut valid = Vec::new();
    for mask in 0..(1u32 << k) {
        let sp = StatefulPolicy::new(graph.clone(), subset(mask))?;
        if verify_stateful(&sp, instances)?.overall {
            valid.push(mask);
        }
    }
    let mut maximal: Vec<EdgeSet> = valid
        .iter()
        .filter(|&&m| !valid.iter().any(|&o| o != m && o & m == m))
        .map(|&m| subset(m))
        .collect();
    maximal.sort();
    Ok(maximal)
}

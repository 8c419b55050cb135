//! End-to-end driver: scenario in, verified policies and configurations out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::backends::{self, Format, SerializeError};
use crate::invariants::InvariantInstance;
use crate::model::{PolicyGraph, StatefulPolicy};
use crate::scenario::{attr_to_json, Scenario, ScenarioError};
use crate::stateful::{compute_stateful, verify_stateful, StatefulError};
use crate::synthesis::{check_deny_all, construct_policy, refine, SynthesisError, VerificationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Parse,
    Instantiate,
    DenyAll,
    Construct,
    Refine,
    Stateful,
    Serialize,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Parse => "parse",
            Stage::Instantiate => "instantiate",
            Stage::DenyAll => "deny_all",
            Stage::Construct => "construct",
            Stage::Refine => "refine",
            Stage::Stateful => "stateful",
            Stage::Serialize => "serialize",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid scenario at {0}")]
    Parse(ScenarioError),
    #[error("cannot instantiate invariants at {0}")]
    Instantiate(ScenarioError),
    #[error("deny-all precondition: {0}")]
    DenyAll(SynthesisError),
    #[error("policy construction: {0}")]
    Construct(SynthesisError),
    #[error("refinement: {0}")]
    Refine(SynthesisError),
    #[error("stateful policy: {0}")]
    Stateful(StatefulError),
    #[error("{format} serialization: {source}")]
    Serialize {
        format: Format,
        #[source]
        source: SerializeError,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Parse(_) => Stage::Parse,
            PipelineError::Instantiate(_) => Stage::Instantiate,
            PipelineError::DenyAll(_) => Stage::DenyAll,
            PipelineError::Construct(_) => Stage::Construct,
            PipelineError::Refine(_) => Stage::Refine,
            PipelineError::Stateful(_) => Stage::Stateful,
            PipelineError::Serialize { .. } => Stage::Serialize,
        }
    }

    /// Location in the scenario document, when the error has one.
    pub fn path(&self) -> Option<&str> {
        match self {
            PipelineError::Parse(e) | PipelineError::Instantiate(e) => Some(&e.path),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Serialize even when verification fails (outputs carry a warning).
    pub force: bool,
    /// Formats to render; `None` means DOT plus, with a deployment map,
    /// iptables and OpenFlow.
    pub formats: Option<BTreeSet<Format>>,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub instances: Vec<InvariantInstance>,
    /// Output of construction, before any refinement.
    pub constructed: PolicyGraph,
    /// The policy after refinements.
    pub policy: PolicyGraph,
    pub report_policy: VerificationReport,
    /// `None` when the refined policy fails verification.
    pub stateful: Option<StatefulPolicy>,
    pub report_stateful: Option<VerificationReport>,
    pub configs: BTreeMap<Format, String>,
    /// True when serialization was skipped because verification failed.
    pub withheld: bool,
}

impl PipelineResult {
    pub fn verified(&self) -> bool {
        self.report_policy.overall && self.report_stateful.as_ref().is_none_or(|r| r.overall)
    }

    /// Names of every failing invariant, across both reports.
    pub fn failing_invariants(&self) -> Vec<String> {
        let mut ids: BTreeSet<String> = self
            .report_policy
            .failures()
            .map(|r| r.instance.clone())
            .collect();
        if let Some(r) = &self.report_stateful {
            ids.extend(r.failures().map(|r| r.instance.clone()));
        }
        ids.into_iter().collect()
    }

    /// The machine-readable report printed by `report --json`.
    pub fn to_json(&self) -> Value {
        let invariants: Vec<Value> = self
            .instances
            .iter()
            .map(|inst| {
                let attrs: serde_json::Map<String, Value> = inst
                    .attrs()
                    .iter()
                    .map(|(e, a)| {
                        (
                            e.name().to_owned(),
                            json!({"value": attr_to_json(a), "declared": inst.is_declared(e)}),
                        )
                    })
                    .collect();
                json!({
                    "id": inst.id(),
                    "template": inst.template_name(),
                    "kind": inst.kind(),
                    "phi_structured": inst.phi_structured(),
                    "attrs": attrs,
                })
            })
            .collect();
        json!({
            "entities": self.policy.nodes(),
            "invariants": invariants,
            "constructed_edges": self.constructed.edges(),
            "policy_edges": self.policy.edges(),
            "report_policy": self.report_policy,
            "stateful_edges": self.stateful.as_ref().map(|s| s.stateful()),
            "report_stateful": self.report_stateful,
            "verified": self.verified(),
            "withheld": self.withheld,
            "formats": self.configs.keys().collect::<Vec<_>>(),
        })
    }
}

/// Default output formats for `scenario`.
pub fn default_formats(scenario: &Scenario) -> BTreeSet<Format> {
    Format::ALL
        .into_iter()
        .filter(|f| !f.needs_deployment() || scenario.deployment.is_some())
        .collect()
}

/// Runs every stage on a parsed scenario.
pub fn run_pipeline(scenario: &Scenario, opts: &PipelineOptions) -> Result<PipelineResult, PipelineError> {
    let instances = scenario.instantiate().map_err(PipelineError::Instantiate)?;
    check_deny_all(&instances).map_err(PipelineError::DenyAll)?;
    let constructed =
        construct_policy(&scenario.entities, &instances).map_err(PipelineError::Construct)?;
    let (policy, report_policy) =
        refine(&constructed, &scenario.refinements, &instances).map_err(PipelineError::Refine)?;

    let (stateful, report_stateful) = if report_policy.overall {
        let sp = compute_stateful(&policy, &instances, &scenario.stateful_preferences)
            .map_err(PipelineError::Stateful)?;
        let report = verify_stateful(&sp, &instances)
            .map_err(|e| PipelineError::Stateful(e.into()))?;
        (Some(sp), Some(report))
    } else {
        (None, None)
    };

    let mut result = PipelineResult {
        instances,
        constructed,
        policy,
        report_policy,
        stateful,
        report_stateful,
        configs: BTreeMap::new(),
        withheld: false,
    };

    let verified = result.verified();
    if !verified && !opts.force {
        result.withheld = true;
        return Ok(result);
    }
    let sp = match &result.stateful {
        Some(sp) if verified => sp.clone(),
        _ => StatefulPolicy::stateless(result.policy.clone()),
    };
    let failing = result.failing_invariants();
    let formats = opts.formats.clone().unwrap_or_else(|| default_formats(scenario));
    for format in formats {
        let text = backends::render(format, &sp, scenario.deployment.as_ref())
            .map_err(|source| PipelineError::Serialize { format, source })?;
        let text = if verified {
            text
        } else {
            backends::with_unverified_warning(format, &text, &failing)
        };
        result.configs.insert(format, text);
    }
    Ok(result)
}

/// Parses `text` and runs the pipeline on it.
pub fn run_text(text: &str, opts: &PipelineOptions) -> Result<(Scenario, PipelineResult), PipelineError> {
    let scenario = crate::scenario::parse_scenario(text).map_err(PipelineError::Parse)?;
    let result = run_pipeline(&scenario, opts)?;
    Ok((scenario, result))
}

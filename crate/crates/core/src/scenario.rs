//! The JSON scenario format.
//!
//! ```json
//! {
//!   "entities": ["INET", "WebApp", "DB"],
//!   "invariants": [
//!     {"template": "sink", "label": "logs", "attrs": {"Log": "sink"}},
//!     {"template": "blp", "attrs": {"DB": {"level": 1, "trusted": false}}},
//!     {"template": "comm_partners", "attrs": {"DB": {"allowed_senders": ["WebApp"]}}}
//!   ],
//!   "deployment": {"DB": {"ipv4": "10.0.0.3", "mac": "02:00:00:00:00:03", "port": 3, "iface": "tun0"},
//!                  "INET": {"iface": "eth0", "external": true}},
//!   "refinements": [{"op": "remove", "from": "WebFrnt", "to": "INET"}],
//!   "stateful_preferences": [{"from": "WebApp", "to": "INET"}]
//! }
//! ```
//!
//! Parsing validates the document but does not auto-complete attributes;
//! that happens in [`Scenario::instantiate`], so callers can still tell
//! declared attributes from defaulted ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::backends::{DeploymentError, DeploymentMap, Endpoint, MacAddr};
use crate::invariants::{
    AttrMap, AttrValue, BlpAttr, CommPartnersAttr, InvariantInstance, NotCommWithAttr, SinkAttr,
    SubnetsAttr, TemplateId,
};
use crate::model::{Edge, Entity};
use crate::synthesis::RefinementEdit;

/// A scenario validation failure, located by a path into the document
/// (e.g. `invariants[3].attrs.DB.allowed_senders[0]`).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        let path = path.into();
        ScenarioError {
            path: if path.is_empty() { "$".into() } else { path },
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantSpec {
    pub template: TemplateId,
    pub label: Option<String>,
    /// Declared attributes only; unlabeled hosts are completed later.
    pub attrs: AttrMap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub entities: Vec<Entity>,
    pub invariants: Vec<InvariantSpec>,
    pub deployment: Option<DeploymentMap>,
    pub refinements: Vec<RefinementEdit>,
    pub stateful_preferences: Vec<Edge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    entities: Vec<String>,
    #[serde(default)]
    invariants: Vec<RawInvariant>,
    #[serde(default)]
    deployment: Option<BTreeMap<String, RawEndpoint>>,
    #[serde(default)]
    refinements: Vec<RawEdit>,
    #[serde(default)]
    stateful_preferences: Vec<RawEdge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInvariant {
    template: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    attrs: BTreeMap<String, Value>,
}

#[derive(Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ipv4: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mac: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    port: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    iface: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    external: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdit {
    op: String,
    from: String,
    to: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: String,
    to: String,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(de)
        .map_err(|e| ScenarioError::new(e.path().to_string(), e.inner()))?;
    from_raw(raw)
}

fn from_raw(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    if raw.entities.is_empty() {
        return Err(ScenarioError::new("entities", "at least one entity is required"));
    }
    let mut known = BTreeSet::new();
    for (i, name) in raw.entities.iter().enumerate() {
        if name.is_empty() {
            return Err(ScenarioError::new(format!("entities[{i}]"), "empty entity name"));
        }
        if !known.insert(Entity::from(name.as_str())) {
            return Err(ScenarioError::new(
                format!("entities[{i}]"),
                format!("duplicate entity `{name}`"),
            ));
        }
    }
    let entity = |path: String, name: &str| -> Result<Entity, ScenarioError> {
        let e = Entity::from(name);
        if known.contains(&e) {
            Ok(e)
        } else {
            Err(ScenarioError::new(path, format!("unknown entity `{name}`")))
        }
    };

    let mut invariants = Vec::with_capacity(raw.invariants.len());
    let mut labels = BTreeSet::new();
    for (i, inv) in raw.invariants.iter().enumerate() {
        let base = format!("invariants[{i}]");
        let template = TemplateId::parse(&inv.template).ok_or_else(|| {
            ScenarioError::new(
                format!("{base}.template"),
                format!("unknown template `{}`", inv.template),
            )
        })?;
        if let Some(l) = &inv.label {
            if !labels.insert(l.clone()) {
                return Err(ScenarioError::new(
                    format!("{base}.label"),
                    format!("duplicate label `{l}`"),
                ));
            }
        }
        let mut attrs = AttrMap::new();
        for (host, value) in &inv.attrs {
            let path = format!("{base}.attrs.{host}");
            let e = entity(path.clone(), host)?;
            attrs.insert(e, parse_attr(template, value, &path, &entity)?);
        }
        invariants.push(InvariantSpec {
            template,
            label: inv.label.clone(),
            attrs,
        });
    }

    let deployment = match raw.deployment {
        None => None,
        Some(recs) => {
            let mut records = BTreeMap::new();
            for (host, rec) in recs {
                let path = format!("deployment.{host}");
                let e = entity(path.clone(), &host)?;
                records.insert(e, parse_endpoint(rec, &path)?);
            }
            Some(DeploymentMap::new(records, &known).map_err(|err| {
                let path = match &err {
                    DeploymentError::MissingRecord(_) => "deployment".to_owned(),
                    DeploymentError::UnknownEntity(e) | DeploymentError::ConcreteExternal(e, _) => {
                        format!("deployment.{e}")
                    }
                    DeploymentError::Duplicate { second, .. } => format!("deployment.{second}"),
                };
                ScenarioError::new(path, err)
            })?)
        }
    };

    let mut refinements = Vec::with_capacity(raw.refinements.len());
    for (i, r) in raw.refinements.iter().enumerate() {
        let base = format!("refinements[{i}]");
        let from = entity(format!("{base}.from"), &r.from)?;
        let to = entity(format!("{base}.to"), &r.to)?;
        if from == to {
            return Err(ScenarioError::new(base, "self-loop edits are not allowed"));
        }
        refinements.push(match r.op.as_str() {
            "add" => RefinementEdit::Add { from, to },
            "remove" => RefinementEdit::Remove { from, to },
            other => {
                return Err(ScenarioError::new(
                    format!("{base}.op"),
                    format!("unknown op `{other}` (expected add or remove)"),
                ))
            }
        });
    }

    let mut stateful_preferences = Vec::with_capacity(raw.stateful_preferences.len());
    for (i, p) in raw.stateful_preferences.iter().enumerate() {
        let base = format!("stateful_preferences[{i}]");
        let from = entity(format!("{base}.from"), &p.from)?;
        let to = entity(format!("{base}.to"), &p.to)?;
        stateful_preferences.push(Edge::new(from, to));
    }

    Ok(Scenario {
        entities: raw.entities.into_iter().map(Entity::from).collect(),
        invariants,
        deployment,
        refinements,
        stateful_preferences,
    })
}

fn entity_list<F>(value: &Value, path: &str, entity: &F) -> Result<BTreeSet<Entity>, ScenarioError>
where
    F: Fn(String, &str) -> Result<Entity, ScenarioError>,
{
    let items = value
        .as_array()
        .ok_or_else(|| ScenarioError::new(path, "expected a list of entity names"))?;
    items
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let p = format!("{path}[{j}]");
            let name = v.as_str().ok_or_else(|| ScenarioError::new(&p, "expected a string"))?;
            entity(p, name)
        })
        .collect()
}

fn single_key<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, ScenarioError> {
    if let Some(extra) = obj.keys().find(|k| *k != key) {
        return Err(ScenarioError::new(format!("{path}.{extra}"), "unknown field"));
    }
    obj.get(key)
        .ok_or_else(|| ScenarioError::new(path, format!("missing field `{key}`")))
}

fn parse_attr<F>(
    template: TemplateId,
    value: &Value,
    path: &str,
    entity: &F,
) -> Result<AttrValue, ScenarioError>
where
    F: Fn(String, &str) -> Result<Entity, ScenarioError>,
{
    let bad = |expected: &str| ScenarioError::new(path, format!("expected {expected}"));
    match template {
        TemplateId::Subnets => match value.as_str() {
            Some("member") => Ok(AttrValue::Subnets(SubnetsAttr::Member)),
            Some("inbound_gateway") => Ok(AttrValue::Subnets(SubnetsAttr::InboundGateway)),
            Some("unassigned") => Ok(AttrValue::Subnets(SubnetsAttr::Unassigned)),
            _ => Err(bad("\"member\" or \"inbound_gateway\"")),
        },
        TemplateId::Sink => match value.as_str() {
            Some("sink") => Ok(AttrValue::Sink(SinkAttr::Sink)),
            Some("unassigned") => Ok(AttrValue::Sink(SinkAttr::Unassigned)),
            _ => Err(bad("\"sink\"")),
        },
        TemplateId::Blp => {
            let obj = value.as_object().ok_or_else(|| bad("{level, trusted}"))?;
            if let Some(extra) = obj.keys().find(|k| *k != "level" && *k != "trusted") {
                return Err(ScenarioError::new(format!("{path}.{extra}"), "unknown field"));
            }
            let level = match obj.get("level") {
                None => 0,
                Some(v) => v
                    .as_u64()
                    .and_then(|l| u32::try_from(l).ok())
                    .ok_or_else(|| {
                        ScenarioError::new(format!("{path}.level"), "expected a non-negative integer")
                    })?,
            };
            let trusted = match obj.get("trusted") {
                None => false,
                Some(v) => v.as_bool().ok_or_else(|| {
                    ScenarioError::new(format!("{path}.trusted"), "expected a boolean")
                })?,
            };
            Ok(AttrValue::Blp(BlpAttr { level, trusted }))
        }
        TemplateId::CommPartners => {
            if value.as_str() == Some("dont_care") {
                return Ok(AttrValue::CommPartners(CommPartnersAttr::DontCare));
            }
            let obj = value.as_object().ok_or_else(|| bad("{allowed_senders: [...]}"))?;
            let list = single_key(obj, "allowed_senders", path)?;
            let allowed = entity_list(list, &format!("{path}.allowed_senders"), entity)?;
            Ok(AttrValue::CommPartners(CommPartnersAttr::Master(allowed)))
        }
        TemplateId::NotCommWith => {
            let obj = value.as_object().ok_or_else(|| bad("{forbidden: [...]}"))?;
            let list = single_key(obj, "forbidden", path)?;
            let forbidden = entity_list(list, &format!("{path}.forbidden"), entity)?;
            Ok(AttrValue::NotCommWith(NotCommWithAttr { forbidden }))
        }
    }
}

fn parse_endpoint(raw: RawEndpoint, path: &str) -> Result<Endpoint, ScenarioError> {
    let ipv4 = match raw.ipv4.as_deref() {
        None | Some("*") => None,
        Some(s) => Some(s.parse::<Ipv4Addr>().map_err(|_| {
            ScenarioError::new(format!("{path}.ipv4"), format!("`{s}` is not a dotted-quad address"))
        })?),
    };
    let mac = match raw.mac.as_deref() {
        None | Some("*") => None,
        Some(s) => Some(
            s.parse::<MacAddr>()
                .map_err(|e| ScenarioError::new(format!("{path}.mac"), e))?,
        ),
    };
    Ok(Endpoint {
        ipv4,
        mac,
        port: raw.port,
        iface: raw.iface,
        external: raw.external,
    })
}

/// JSON form of a declared attribute, as written in scenario files.
pub fn attr_to_json(attr: &AttrValue) -> Value {
    fn names(s: &BTreeSet<Entity>) -> Vec<&str> {
        s.iter().map(Entity::name).collect()
    }
    match attr {
        AttrValue::Subnets(SubnetsAttr::Member) => json!("member"),
        AttrValue::Subnets(SubnetsAttr::InboundGateway) => json!("inbound_gateway"),
        AttrValue::Subnets(SubnetsAttr::Unassigned) => json!("unassigned"),
        AttrValue::Sink(SinkAttr::Sink) => json!("sink"),
        AttrValue::Sink(SinkAttr::Unassigned) => json!("unassigned"),
        AttrValue::Blp(b) => json!({"level": b.level, "trusted": b.trusted}),
        AttrValue::CommPartners(CommPartnersAttr::Master(l)) => {
            json!({"allowed_senders": names(l)})
        }
        AttrValue::CommPartners(CommPartnersAttr::DontCare) => json!("dont_care"),
        AttrValue::NotCommWith(a) => json!({"forbidden": names(&a.forbidden)}),
    }
}

impl Scenario {
    /// Writes the scenario back to its JSON form.
    pub fn to_json(&self) -> Value {
        let mut doc = Map::new();
        doc.insert(
            "entities".into(),
            json!(self.entities.iter().map(Entity::name).collect::<Vec<_>>()),
        );
        let invs: Vec<Value> = self
            .invariants
            .iter()
            .map(|inv| {
                let mut o = Map::new();
                o.insert("template".into(), json!(inv.template.as_str()));
                if let Some(l) = &inv.label {
                    o.insert("label".into(), json!(l));
                }
                let attrs: Map<String, Value> = inv
                    .attrs
                    .iter()
                    .map(|(e, a)| (e.name().to_owned(), attr_to_json(a)))
                    .collect();
                o.insert("attrs".into(), Value::Object(attrs));
                Value::Object(o)
            })
            .collect();
        doc.insert("invariants".into(), Value::Array(invs));
        if let Some(dep) = &self.deployment {
            let recs: Map<String, Value> = dep
                .records()
                .iter()
                .map(|(e, r)| {
                    let raw = RawEndpoint {
                        ipv4: r.ipv4.map(|ip| ip.to_string()),
                        mac: r.mac.map(|m| m.to_string()),
                        port: r.port,
                        iface: r.iface.clone(),
                        external: r.external,
                    };
                    (e.name().to_owned(), serde_json::to_value(raw).expect("plain struct"))
                })
                .collect();
            doc.insert("deployment".into(), Value::Object(recs));
        }
        if !self.refinements.is_empty() {
            doc.insert("refinements".into(), json!(self.refinements));
        }
        if !self.stateful_preferences.is_empty() {
            doc.insert("stateful_preferences".into(), json!(self.stateful_preferences));
        }
        Value::Object(doc)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("JSON values always serialize")
    }

    pub fn entity_set(&self) -> BTreeSet<Entity> {
        self.entities.iter().cloned().collect()
    }

    /// Identifier of each invariant: its label, else its template name,
    /// suffixed with the position when that name is taken.
    pub fn instance_ids(&self) -> Vec<String> {
        let mut used: BTreeSet<String> = self
            .invariants
            .iter()
            .filter_map(|i| i.label.clone())
            .collect();
        self.invariants
            .iter()
            .enumerate()
            .map(|(i, inv)| match &inv.label {
                Some(l) => l.clone(),
                None => {
                    let base = inv.template.as_str().to_owned();
                    let mut id = base.clone();
                    let mut k = i;
                    while used.contains(&id) {
                        id = format!("{base}#{k}");
                        k += 1;
                    }
                    used.insert(id.clone());
                    id
                }
            })
            .collect()
    }

    /// Binds every invariant to the scenario, auto-completing attributes.
    pub fn instantiate(&self) -> Result<Vec<InvariantInstance>, ScenarioError> {
        let ents = self.entity_set();
        self.invariants
            .iter()
            .zip(self.instance_ids())
            .enumerate()
            .map(|(i, (inv, id))| {
                InvariantInstance::new(id, inv.template.template(), inv.attrs.clone(), &ents)
                    .map_err(|e| ScenarioError::new(format!("invariants[{i}].attrs"), e))
            })
            .collect()
    }
}

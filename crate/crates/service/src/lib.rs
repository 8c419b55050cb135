//! HTTP facade over the synthesis pipeline, for the interactive refinement
//! loop.
//!
//! | method | path                        | effect                                   |
//! |--------|-----------------------------|------------------------------------------|
//! | POST   | `/sessions`                 | create from a scenario document          |
//! | GET    | `/sessions/{id}/policy`     | graph, reports, declared vs defaulted    |
//! | POST   | `/sessions/{id}/edits`      | apply refinement edits, re-verify        |
//! | POST   | `/sessions/{id}/stateful`   | compute and store the stateful policy    |
//! | GET    | `/sessions/{id}/configs`    | `?format=iptables\|openflow\|dot&force=` |
//! | POST   | `/sessions/{id}/whatif`     | verify edits without committing them     |
//!
//! Every mutating request bumps the session revision; every response names
//! the revision it was computed from.

mod error;
pub mod store;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use polsynth_core::backends::{self, Format};
use polsynth_core::pipeline::Stage;
use polsynth_core::scenario::{attr_to_json, parse_scenario};
use polsynth_core::stateful::{compute_stateful, verify_stateful};
use polsynth_core::synthesis::{check_deny_all, construct_policy, refine, RefinementEdit};
use polsynth_core::{Edge, PolicyGraph, StatefulPolicy};

pub use error::{ApiError, ErrorBody};
pub use store::{Snapshot, Store};

pub type AppState = Arc<Store>;

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/policy", get(get_policy))
        .route("/sessions/{id}/edits", post(post_edits))
        .route("/sessions/{id}/stateful", post(post_stateful))
        .route("/sessions/{id}/configs", get(get_configs))
        .route("/sessions/{id}/whatif", post(post_whatif))
        .with_state(store)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, snapshot_dir: Option<PathBuf>) -> std::io::Result<()> {
    let store = match snapshot_dir {
        Some(dir) => Store::persistent(dir)?,
        None => Store::in_memory(),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(store))).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(ApiError::body)
}

fn session(store: &Store, id: &str) -> Result<Arc<store::Session>, ApiError> {
    store.get(id).ok_or_else(|| ApiError::not_found(id))
}

fn graph_json(g: &PolicyGraph) -> Value {
    json!({"nodes": g.nodes(), "edges": g.edges()})
}

fn policy_view(snap: &Snapshot) -> Value {
    let invariants: Vec<Value> = snap
        .instances
        .iter()
        .map(|inst| {
            let mut declared = serde_json::Map::new();
            let mut defaulted = serde_json::Map::new();
            for (e, a) in inst.attrs() {
                let target = if inst.is_declared(e) { &mut declared } else { &mut defaulted };
                target.insert(e.name().to_owned(), attr_to_json(a));
            }
            json!({
                "id": inst.id(),
                "template": inst.template_name(),
                "kind": inst.kind(),
                "declared": declared,
                "defaulted": defaulted,
            })
        })
        .collect();
    json!({
        "id": snap.id,
        "revision": snap.revision,
        "policy": graph_json(&snap.policy),
        "report": snap.report,
        "stateful": snap.stateful.as_ref().map(|s| s.stateful()),
        "report_stateful": snap.report_stateful,
        "invariants": invariants,
    })
}

async fn create_session(State(store): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, Stage::Parse, e))?;
    let scenario = parse_scenario(text).map_err(|e| ApiError::scenario(Stage::Parse, e))?;
    let instances = scenario
        .instantiate()
        .map_err(|e| ApiError::scenario(Stage::Instantiate, e))?;
    check_deny_all(&instances).map_err(|e| ApiError::invalid(Stage::DenyAll, e))?;
    let constructed =
        construct_policy(&scenario.entities, &instances).map_err(|e| ApiError::invalid(Stage::Construct, e))?;
    let (policy, report) =
        refine(&constructed, &[], &instances).map_err(|e| ApiError::invalid(Stage::Construct, e))?;
    let snap = Snapshot {
        id: uuid::Uuid::new_v4().simple().to_string(),
        revision: 1,
        scenario: Arc::new(scenario),
        instances: Arc::new(instances),
        policy,
        report,
        stateful: None,
        report_stateful: None,
    };
    let snap = store.insert(snap).map_err(ApiError::internal)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"id": snap.id, "revision": snap.revision})),
    )
        .into_response())
}

async fn get_policy(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let snap = session(&store, &id)?.current();
    Ok(Json(policy_view(&snap)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditsBody {
    edits: Vec<RefinementEdit>,
}

/// Rejects edits naming unknown entities or self-loops, with a path.
fn check_edits(g: &PolicyGraph, edits: &[RefinementEdit]) -> Result<(), ApiError> {
    for (i, edit) in edits.iter().enumerate() {
        let e = edit.edge();
        for (field, end) in [("from", &e.sender), ("to", &e.receiver)] {
            if !g.contains_node(end) {
                return Err(ApiError::invalid(Stage::Refine, format!("unknown entity `{end}`"))
                    .at(format!("edits[{i}].{field}")));
            }
        }
        if e.is_self_loop() {
            return Err(ApiError::invalid(Stage::Refine, "self-loop edits are not allowed")
                .at(format!("edits[{i}]")));
        }
    }
    Ok(())
}

fn apply(snap: &Snapshot, edits: &[RefinementEdit]) -> Result<Snapshot, ApiError> {
    check_edits(&snap.policy, edits)?;
    let (policy, report) =
        refine(&snap.policy, edits, &snap.instances).map_err(|e| ApiError::invalid(Stage::Refine, e))?;
    Ok(snap.with_policy(policy, report))
}

async fn post_edits(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: EditsBody = parse_body(&body)?;
    let session = session(&store, &id)?;
    let _writer = session.writer.lock().await;
    let next = apply(&session.current(), &req.edits)?;
    let snap = store.commit(&session, next).map_err(ApiError::internal)?;
    Ok(Json(json!({
        "revision": snap.revision,
        "policy": graph_json(&snap.policy),
        "report": snap.report,
    })))
}

async fn post_whatif(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: EditsBody = parse_body(&body)?;
    let base = session(&store, &id)?.current();
    let hypothetical = apply(&base, &req.edits)?;
    Ok(Json(json!({
        "revision": base.revision,
        "policy": graph_json(&hypothetical.policy),
        "report": hypothetical.report,
    })))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StatefulBody {
    #[serde(default)]
    preferences: Vec<Edge>,
}

async fn post_stateful(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: StatefulBody = if body.iter().all(u8::is_ascii_whitespace) {
        StatefulBody::default()
    } else {
        parse_body(&body)?
    };
    let session = session(&store, &id)?;
    let _writer = session.writer.lock().await;
    let base = session.current();
    if !base.report.overall {
        return Err(ApiError::conflict(
            Stage::Stateful,
            "the current policy fails verification; fix it before computing a stateful policy",
        ));
    }
    for (i, p) in req.preferences.iter().enumerate() {
        if !base.policy.contains_edge(p) {
            return Err(ApiError::invalid(Stage::Stateful, format!("{p} is not a policy edge"))
                .at(format!("preferences[{i}]")));
        }
    }
    let sp = compute_stateful(&base.policy, &base.instances, &req.preferences)
        .map_err(|e| ApiError::invalid(Stage::Stateful, e))?;
    let report = verify_stateful(&sp, &base.instances).map_err(|e| ApiError::invalid(Stage::Stateful, e))?;
    let mut next = (*base).clone();
    next.revision += 1;
    next.stateful = Some(sp);
    next.report_stateful = Some(report);
    let snap = store.commit(&session, next).map_err(ApiError::internal)?;
    Ok(Json(json!({
        "revision": snap.revision,
        "stateful": snap.stateful.as_ref().map(|s| s.stateful()),
        "report": snap.report_stateful,
    })))
}

#[derive(Deserialize)]
struct ConfigQuery {
    format: Option<String>,
    #[serde(default)]
    force: bool,
}

async fn get_configs(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ConfigQuery>,
) -> Result<Response, ApiError> {
    let format: Format = q
        .format
        .as_deref()
        .unwrap_or("")
        .parse()
        .map_err(|e: String| ApiError::invalid(Stage::Serialize, e).at("format"))?;
    let snap = session(&store, &id)?.current();
    let stateful_ok = snap.report_stateful.as_ref().is_none_or(|r| r.overall);
    let verified = snap.report.overall && stateful_ok;
    if !verified && !q.force {
        return Err(ApiError::conflict(
            Stage::Serialize,
            "the current policy fails verification; pass force=true to serialize anyway",
        ));
    }
    let sp = match &snap.stateful {
        Some(sp) if verified => sp.clone(),
        // a stateful policy is only computed for verified graphs
        None if verified => compute_stateful(&snap.policy, &snap.instances, &snap.scenario.stateful_preferences)
            .map_err(|e| ApiError::invalid(Stage::Stateful, e))?,
        _ => StatefulPolicy::stateless(snap.policy.clone()),
    };
    let text = backends::render(format, &sp, snap.scenario.deployment.as_ref())
        .map_err(|e| ApiError::invalid(Stage::Serialize, e))?;
    let text = if verified {
        text
    } else {
        let failing: BTreeSet<String> = snap
            .report
            .failures()
            .chain(snap.report_stateful.iter().flat_map(|r| r.failures()))
            .map(|r| r.instance.clone())
            .collect();
        backends::with_unverified_warning(format, &text, &failing.into_iter().collect::<Vec<_>>())
    };
    let mut resp = text.into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/plain; charset=utf-8"));
    headers.insert("x-revision", HeaderValue::from(snap.revision));
    Ok(resp)
}

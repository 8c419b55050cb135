//! iptables FORWARD-chain rules for a central firewall (e.g. a VPN server
//! routing between its tunnel and uplink interfaces).
//!
//! ```text
//! FORWARD DROP
//! -A FORWARD -i <if(s)> -s <ip(s)> -o <if(r)> -d <ip(r)> -j ACCEPT
//! -I FORWARD -m state --state ESTABLISHED -i <if(r)> -s <ip(r)> -o <if(s)> -d <ip(s)> -j ACCEPT
//! ```
//!
//! One `-A` line per policy edge and one `-I ... ESTABLISHED` line per
//! stateful edge, both in canonical edge order.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{DeploymentMap, SerializeError};
use crate::model::{Edge, EdgeSet, Entity, StatefulPolicy};

pub const DEFAULT_POLICY: &str = "FORWARD DROP";

pub fn emit(sp: &StatefulPolicy, dep: &DeploymentMap) -> Result<String, SerializeError> {
    let mut out = String::from(DEFAULT_POLICY);
    out.push('\n');
    for e in sp.graph().edges() {
        out.push_str(&format!(
            "-A FORWARD -i {} -s {} -o {} -d {} -j ACCEPT\n",
            dep.iface(&e.sender)?,
            dep.ipv4_token(&e.sender)?,
            dep.iface(&e.receiver)?,
            dep.ipv4_token(&e.receiver)?,
        ));
    }
    for e in sp.stateful() {
        out.push_str(&format!(
            "-I FORWARD -m state --state ESTABLISHED -i {} -s {} -o {} -d {} -j ACCEPT\n",
            dep.iface(&e.receiver)?,
            dep.ipv4_token(&e.receiver)?,
            dep.iface(&e.sender)?,
            dep.ipv4_token(&e.sender)?,
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {0}: expected `{DEFAULT_POLICY}` as the first rule")]
    MissingDefaultPolicy(usize),
    #[error("line {line}: unrecognized rule `{text}`")]
    Unrecognized { line: usize, text: String },
    #[error("line {line}: address `{addr}` belongs to no entity")]
    UnknownAddress { line: usize, addr: String },
    #[error("line {line}: interface `{iface}` does not match the deployment of `{entity}`")]
    InterfaceMismatch {
        line: usize,
        iface: String,
        entity: Entity,
    },
}

/// Recovers `(policy edges, stateful edges)` from [`emit`] output. Blank
/// lines and `#` comments are skipped.
pub fn parse(text: &str, dep: &DeploymentMap) -> Result<(EdgeSet, EdgeSet), ParseError> {
    let by_addr: BTreeMap<String, &Entity> = dep
        .records()
        .keys()
        .filter_map(|e| dep.ipv4_token(e).ok().map(|t| (t, e)))
        .collect();
    let resolve = |line: usize, iface: &str, addr: &str| -> Result<Entity, ParseError> {
        let e = by_addr.get(addr).ok_or_else(|| ParseError::UnknownAddress {
            line,
            addr: addr.to_owned(),
        })?;
        if dep.iface(e).ok() != Some(iface) {
            return Err(ParseError::InterfaceMismatch {
                line,
                iface: iface.to_owned(),
                entity: (*e).clone(),
            });
        }
        Ok((*e).clone())
    };

    let mut edges = EdgeSet::new();
    let mut stateful = EdgeSet::new();
    let mut seen_policy = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() || tokens[0].starts_with('#') {
            continue;
        }
        if !seen_policy {
            if tokens != ["FORWARD", "DROP"] {
                return Err(ParseError::MissingDefaultPolicy(line));
            }
            seen_policy = true;
            continue;
        }
        let unrecognized = || ParseError::Unrecognized {
            line,
            text: raw.to_owned(),
        };
        match tokens.as_slice() {
            ["-A", "FORWARD", "-i", i_in, "-s", src, "-o", i_out, "-d", dst, "-j", "ACCEPT"] => {
                let s = resolve(line, i_in, src)?;
                let r = resolve(line, i_out, dst)?;
                edges.insert(Edge::new(s, r));
            }
            ["-I", "FORWARD", "-m", "state", "--state", "ESTABLISHED", "-i", i_in, "-s", src, "-o", i_out, "-d", dst, "-j", "ACCEPT"] =>
            {
                // the answer direction: reverse it to get the stateful edge
                let answer_from = resolve(line, i_in, src)?;
                let answer_to = resolve(line, i_out, dst)?;
                stateful.insert(Edge::new(answer_to, answer_from));
            }
            _ => return Err(unrecognized()),
        }
    }
    if !seen_policy {
        return Err(ParseError::MissingDefaultPolicy(text.lines().count() + 1));
    }
    Ok((edges, stateful))
}

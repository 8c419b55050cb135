use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

use super::SerializeError;
use crate::model::Entity;

/// A 6-octet Ethernet address, written as lowercase colon-hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("`{s}` is not a colon-separated MAC address"));
        }
        let mut octets = [0u8; 6];
        for (o, p) in octets.iter_mut().zip(parts) {
            if p.len() != 2 {
                return Err(format!("`{s}` is not a colon-separated MAC address"));
            }
            *o = u8::from_str_radix(p, 16).map_err(|_| format!("bad MAC octet `{p}` in `{s}`"))?;
        }
        Ok(MacAddr(octets))
    }
}

/// Network identity of one policy entity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Endpoint {
    /// `None` renders as a `$<Name>_ipv4` placeholder (or `*` when external).
    pub ipv4: Option<Ipv4Addr>,
    pub mac: Option<MacAddr>,
    pub port: Option<u32>,
    pub iface: Option<String>,
    /// Marks the outside world (an INET-style entity).
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeploymentError {
    #[error("no deployment record for entity `{0}`")]
    MissingRecord(Entity),
    #[error("deployment record for unknown entity `{0}`")]
    UnknownEntity(Entity),
    #[error("external entity `{0}` must not have a concrete {1}")]
    ConcreteExternal(Entity, &'static str),
    #[error("{kind} {value} is assigned to both `{first}` and `{second}`")]
    Duplicate {
        kind: &'static str,
        value: String,
        first: Entity,
        second: Entity,
    },
}

/// One-to-one binding of policy entities to network identities.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeploymentMap {
    records: BTreeMap<Entity, Endpoint>,
}

impl DeploymentMap {
    /// Validates that every entity has exactly one record, that external
    /// entities use wildcard addresses and that concrete addresses are not
    /// shared.
    pub fn new(
        records: BTreeMap<Entity, Endpoint>,
        entities: &BTreeSet<Entity>,
    ) -> Result<Self, DeploymentError> {
        if let Some(e) = records.keys().find(|e| !entities.contains(*e)) {
            return Err(DeploymentError::UnknownEntity(e.clone()));
        }
        if let Some(e) = entities.iter().find(|e| !records.contains_key(*e)) {
            return Err(DeploymentError::MissingRecord(e.clone()));
        }
        let mut ips: BTreeMap<Ipv4Addr, &Entity> = BTreeMap::new();
        let mut macs: BTreeMap<MacAddr, &Entity> = BTreeMap::new();
        for (e, rec) in &records {
            if rec.external && rec.ipv4.is_some() {
                return Err(DeploymentError::ConcreteExternal(e.clone(), "ipv4 address"));
            }
            if rec.external && rec.mac.is_some() {
                return Err(DeploymentError::ConcreteExternal(e.clone(), "MAC address"));
            }
            if let Some(ip) = rec.ipv4 {
                if let Some(first) = ips.insert(ip, e) {
                    return Err(DeploymentError::Duplicate {
                        kind: "ipv4 address",
                        value: ip.to_string(),
                        first: first.clone(),
                        second: e.clone(),
                    });
                }
            }
            if let Some(mac) = rec.mac {
                if let Some(first) = macs.insert(mac, e) {
                    return Err(DeploymentError::Duplicate {
                        kind: "MAC address",
                        value: mac.to_string(),
                        first: first.clone(),
                        second: e.clone(),
                    });
                }
            }
        }
        Ok(DeploymentMap { records })
    }

    pub fn records(&self) -> &BTreeMap<Entity, Endpoint> {
        &self.records
    }

    pub fn get(&self, e: &Entity) -> Result<&Endpoint, SerializeError> {
        self.records
            .get(e)
            .ok_or_else(|| SerializeError::MissingRecord(e.clone()))
    }

    /// The literal used for `e`'s address in firewall rules.
    pub fn ipv4_token(&self, e: &Entity) -> Result<String, SerializeError> {
        Ok(match self.get(e)?.ipv4 {
            Some(ip) => ip.to_string(),
            None => format!("${}_ipv4", e.name()),
        })
    }

    pub fn iface(&self, e: &Entity) -> Result<&str, SerializeError> {
        self.get(e)?
            .iface
            .as_deref()
            .ok_or_else(|| SerializeError::MissingIface(e.clone()))
    }
}

//! Serialization of stateful policies to device configurations.

mod deployment;
pub mod dot;
pub mod iptables;
pub mod openflow;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Entity, StatefulPolicy};

pub use deployment::{DeploymentError, DeploymentMap, Endpoint, MacAddr};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("no deployment record for `{0}`")]
    MissingRecord(Entity),
    #[error("`{0}` has no router interface")]
    MissingIface(Entity),
    #[error("`{0}` has no MAC address")]
    MissingMac(Entity),
    #[error("`{0}` has no switch port")]
    MissingPort(Entity),
    #[error("the {0} backend needs a deployment map")]
    NoDeployment(Format),
    #[error("flow entries `{first}` and `{second}` match the same packets with different actions")]
    AmbiguousMatch { first: String, second: String },
}

/// Output formats understood by [`render`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Iptables,
    Openflow,
    Dot,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Iptables, Format::Openflow, Format::Dot];

    pub fn as_str(self) -> &'static str {
        match self {
            Format::Iptables => "iptables",
            Format::Openflow => "openflow",
            Format::Dot => "dot",
        }
    }

    /// Conventional file name for the rendered output.
    pub fn file_name(self) -> &'static str {
        match self {
            Format::Iptables => "firewall.iptables",
            Format::Openflow => "flows.openflow",
            Format::Dot => "policy.dot",
        }
    }

    pub fn needs_deployment(self) -> bool {
        !matches!(self, Format::Dot)
    }

    fn comment_prefix(self) -> &'static str {
        match self {
            Format::Dot => "//",
            _ => "#",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Format::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown format `{s}` (expected iptables, openflow or dot)"))
    }
}

/// Renders `sp` in `format`. Only DOT works without a deployment map.
pub fn render(
    format: Format,
    sp: &StatefulPolicy,
    dep: Option<&DeploymentMap>,
) -> Result<String, SerializeError> {
    match (format, dep) {
        (Format::Dot, _) => Ok(dot::emit(sp)),
        (Format::Iptables, Some(d)) => iptables::emit(sp, d),
        (Format::Openflow, Some(d)) => openflow::emit(sp, d),
        (f, None) => Err(SerializeError::NoDeployment(f)),
    }
}

/// Prepends a comment block to `text`, marking it as generated from a
/// policy that failed verification.
pub fn with_unverified_warning(format: Format, text: &str, failing: &[String]) -> String {
    let c = format.comment_prefix();
    let mut out = String::new();
    out.push_str(&format!(
        "{c} WARNING: generated with --force from a policy that FAILS verification.\n"
    ));
    out.push_str(&format!("{c} WARNING: violated invariants: {}\n", failing.join(", ")));
    out.push_str(text);
    out
}

//! Synthesis of network security configurations from high-level security
//! invariants.
//!
//! The pipeline runs in four stages:
//!
//! 1. host attributes are declared per invariant and auto-completed with
//!    secure defaults ([`invariants`]);
//! 2. the maximum-permissive policy graph satisfying every invariant is
//!    constructed, optionally refined by hand and re-verified
//!    ([`synthesis`]);
//! 3. policy edges are upgraded to stateful edges where answer packets
//!    introduce neither information-flow violations nor access-control
//!    side effects ([`stateful`]);
//! 4. the stateful policy is serialized to iptables, OpenFlow and DOT
//!    ([`backends`]).
//!
//! [`scenario`] reads the JSON scenario format and [`pipeline`] strings the
//! stages together.

pub mod backends;
pub mod invariants;
pub mod model;
pub mod pipeline;
pub mod scenario;
pub mod stateful;
pub mod synthesis;

pub use model::{Edge, EdgeSet, Entity, ModelError, PolicyGraph, StatefulPolicy};

#[cfg(test)]
mod test_support;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Node identifier. Nonzero, so it doubles as a Shamir evaluation point, and
/// totally ordered, which fixes the mask sign convention between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct NodeId(u64);

impl NodeId {
    pub fn new(id: u64) -> Option<Self> {
        (id != 0).then_some(Self(id))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    /// Ids `1..=n`.
    pub fn range(n: usize) -> Vec<NodeId> {
        (1..=n as u64).map(NodeId).collect()
    }
}

impl TryFrom<u64> for NodeId {
    type Error = String;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        NodeId::new(value).ok_or_else(|| "node id must be nonzero".to_string())
    }
}

impl From<NodeId> for u64 {
    fn from(id: NodeId) -> u64 {
        id.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node-{}", self.0)
    }
}

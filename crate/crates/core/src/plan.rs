use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::field::{NodeId, Region};

/// Where a cluster head sends its aggregated packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NextHop {
    Sink,
    Relay(NodeId),
}

/// Cluster heads, membership and inter-cluster routes for one round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    /// Sorted by id.
    pub cluster_heads: Vec<NodeId>,
    /// member -> cluster head
    pub membership: BTreeMap<NodeId, NodeId>,
    /// cluster head -> next hop
    pub relay_next_hop: BTreeMap<NodeId, NextHop>,
    /// Region the heads were drawn from; `None` for protocols without regions.
    pub active_region: Option<Region>,
    /// Nodes reporting straight to the sink because the round has no heads.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub direct: Vec<NodeId>,
}

impl RoundPlan {
    pub fn is_cluster_head(&self, id: NodeId) -> bool {
        self.cluster_heads.binary_search(&id).is_ok()
    }

    /// Members attached to `head`, in id order.
    pub fn members_of(&self, head: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.membership
            .iter()
            .filter(move |(_, h)| **h == head)
            .map(|(m, _)| *m)
    }

    /// Hops from `head` to the sink, or `None` if the route is broken or cyclic.
    pub fn hops_to_sink(&self, head: NodeId) -> Option<usize> {
        let mut current = head;
        for hops in 1..=self.cluster_heads.len() {
            match self.relay_next_hop.get(&current)? {
                NextHop::Sink => return Some(hops),
                NextHop::Relay(next) => current = *next,
            }
        }
        None
    }

    /// Every node this plan puts to work: heads, members and relays.
    pub fn participants(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.cluster_heads
            .iter()
            .copied()
            .chain(self.membership.keys().copied())
            .chain(self.direct.iter().copied())
            .chain(self.relay_next_hop.values().filter_map(|h| match h {
                NextHop::Relay(id) => Some(*id),
                NextHop::Sink => None,
            }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hops_follow_chain_and_detect_cycles() {
        let mut plan = RoundPlan {
            cluster_heads: vec![NodeId(1), NodeId(2), NodeId(3)],
            ..Default::default()
        };
        plan.relay_next_hop.insert(NodeId(1), NextHop::Sink);
        plan.relay_next_hop.insert(NodeId(2), NextHop::Relay(NodeId(1)));
        plan.relay_next_hop.insert(NodeId(3), NextHop::Relay(NodeId(2)));
        assert_eq!(plan.hops_to_sink(NodeId(3)), Some(3));
        assert_eq!(plan.hops_to_sink(NodeId(1)), Some(1));

        plan.relay_next_hop.insert(NodeId(1), NextHop::Relay(NodeId(3)));
        assert_eq!(plan.hops_to_sink(NodeId(3)), None);
    }

    #[test]
    fn json_shape() {
        let mut plan = RoundPlan {
            cluster_heads: vec![NodeId(4)],
            active_region: Some(Region::Inner),
            ..Default::default()
        };
        plan.membership.insert(NodeId(0), NodeId(4));
        plan.relay_next_hop.insert(NodeId(4), NextHop::Sink);
        let json = serde_json::to_string(&plan).unwrap();
        assert_eq!(
            json,
            r#"{"cluster_heads":[4],"membership":{"0":4},"relay_next_hop":{"4":"sink"},"active_region":"inner"}"#
        );
        let back: RoundPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
    }
}

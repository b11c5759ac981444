//! Region-balanced cluster-head election and inter-cluster relay routing.
//!
//! Each round, cluster heads are drawn from whichever region (inner or
//! outer) holds more residual energy, picking the highest-energy nodes.
//! A head farther from the sink may hand its aggregated packet to a head
//! strictly closer to the sink when the two-hop cost
//! `tx(d_ij) + rx + tx(d_j,sink)` beats transmitting directly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{distance, NodeId, NodeState, Point, Region};
use crate::plan::NextHop;
use crate::radio::{rx_energy, tx_energy, RadioParams};

/// Relative tolerance under which two relay costs count as equal.
pub const COST_TIE_TOLERANCE: f64 = 1e-9;

/// How a cluster head picks its next hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelayRule {
    /// Minimum two-hop energy cost, ties broken by residual energy.
    #[default]
    Cost,
    /// Geometrically nearest of the sink and the heads closer to the sink.
    Nearest,
}

impl std::str::FromStr for RelayRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cost" => Ok(RelayRule::Cost),
            "nearest" => Ok(RelayRule::Nearest),
            other => Err(Error::invalid(format!("unknown relay rule `{other}`"))),
        }
    }
}

impl RelayRule {
    pub fn as_str(self) -> &'static str {
        match self {
            RelayRule::Cost => "cost",
            RelayRule::Nearest => "nearest",
        }
    }
}

/// Inner unless the alive outer nodes hold strictly more energy.
pub fn select_active_region(nodes: &[NodeState]) -> Result<Region> {
    let mut inner = 0.0;
    let mut outer = 0.0;
    let mut any_alive = false;
    for node in nodes.iter().filter(|n| n.alive) {
        any_alive = true;
        match node.region {
            Region::Inner => inner += node.energy,
            Region::Outer => outer += node.energy,
        }
    }
    if !any_alive {
        return Err(Error::NetworkExhausted);
    }
    Ok(if inner < outer { Region::Outer } else { Region::Inner })
}

/// The `ch_count` alive nodes of `region` with the most residual energy,
/// lower id first on ties. Returned sorted by id.
///
/// If `region` has no alive node the other region is used instead.
pub fn elect_cluster_heads(nodes: &[NodeState], region: Region, ch_count: usize) -> Result<Vec<NodeId>> {
    if ch_count == 0 {
        return Err(Error::invalid("ch_count must be at least 1"));
    }
    let pick = |region: Region| -> Vec<&NodeState> { nodes.iter().filter(|n| n.alive && n.region == region).collect() };
    let mut candidates = pick(region);
    if candidates.is_empty() {
        candidates = pick(region.other());
        if candidates.is_empty() {
            return Err(Error::NetworkExhausted);
        }
        log::info!("no alive nodes in {region} region, electing from {}", region.other());
    }
    candidates.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.id.cmp(&b.id)));
    let mut heads: Vec<NodeId> = candidates.into_iter().take(ch_count).map(|n| n.id).collect();
    heads.sort();
    Ok(heads)
}

/// Assigns every alive non-head node to its nearest head (lower id on ties).
pub fn form_clusters(nodes: &[NodeState], cluster_heads: &[NodeId]) -> Result<BTreeMap<NodeId, NodeId>> {
    if cluster_heads.is_empty() {
        return Err(Error::invalid("cannot form clusters without cluster heads"));
    }
    let mut heads: Vec<(NodeId, Point)> = cluster_heads
        .iter()
        .map(|id| {
            nodes
                .iter()
                .find(|n| n.id == *id)
                .map(|n| (n.id, n.pos))
                .ok_or_else(|| Error::invalid(format!("cluster head {id} is not a known node")))
        })
        .collect::<Result<_>>()?;
    heads.sort_by_key(|(id, _)| *id);

    let mut membership = BTreeMap::new();
    for node in nodes.iter().filter(|n| n.alive) {
        if heads.binary_search_by_key(&node.id, |(id, _)| *id).is_ok() {
            continue;
        }
        let mut best: Option<(NodeId, f64)> = None;
        for &(id, pos) in &heads {
            let d = distance(node.pos, pos);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((id, d));
            }
        }
        if let Some((head, _)) = best {
            membership.insert(node.id, head);
        }
    }
    Ok(membership)
}

/// Cost of sending one packet from head `from` through relay `via` to the sink:
/// `tx(k, d(from, via)) + rx(k) + tx(k, d(via, sink))` with `k = packet_bits`.
pub fn relay_cost(from: Point, via: Point, sink: Point, radio: &RadioParams) -> Result<f64> {
    if from == via {
        return Err(Error::invalid("relay cost needs distinct endpoints"));
    }
    let k = radio.packet_bits();
    Ok(tx_energy(radio, k, distance(from, via))? + rx_energy(radio, k)? + tx_energy(radio, k, distance(via, sink))?)
}

/// A cluster head as seen by the routing step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadInfo {
    pub id: NodeId,
    pub pos: Point,
    pub energy: f64,
}

impl From<&NodeState> for HeadInfo {
    fn from(n: &NodeState) -> Self {
        HeadInfo {
            id: n.id,
            pos: n.pos,
            energy: n.energy,
        }
    }
}

/// Chooses a next hop for every head. Candidates are the sink and every
/// head strictly closer to the sink, so routes are acyclic.
///
/// Under [`RelayRule::Cost`] the cheapest candidate wins. Candidates within
/// [`COST_TIE_TOLERANCE`] of the minimum are tied: the sink wins a tie,
/// otherwise the relay with more residual energy, then the lower id.
pub fn build_relay_routes(
    heads: &[HeadInfo],
    sink: Point,
    radio: &RadioParams,
    rule: RelayRule,
) -> Result<BTreeMap<NodeId, NextHop>> {
    let k = radio.packet_bits();
    let mut routes = BTreeMap::new();
    for head in heads {
        let own = distance(head.pos, sink);
        let closer = heads.iter().filter(|h| distance(h.pos, sink) < own);

        let hop = match rule {
            RelayRule::Cost => {
                let direct = tx_energy(radio, k, own)?;
                let options: Vec<(&HeadInfo, f64)> = closer
                    .map(|h| Ok((h, relay_cost(head.pos, h.pos, sink, radio)?)))
                    .collect::<Result<_>>()?;
                let min = options.iter().map(|(_, c)| *c).fold(direct, f64::min);
                let limit = min * (1.0 + COST_TIE_TOLERANCE);
                if direct <= limit {
                    NextHop::Sink
                } else {
                    options
                        .iter()
                        .filter(|(_, c)| *c <= limit)
                        .map(|(h, _)| *h)
                        .max_by(|a, b| a.energy.total_cmp(&b.energy).then(b.id.cmp(&a.id)))
                        .map(|h| NextHop::Relay(h.id))
                        .unwrap_or(NextHop::Sink)
                }
            }
            RelayRule::Nearest => {
                let mut best = (NextHop::Sink, own);
                for h in closer {
                    let d = distance(head.pos, h.pos);
                    let better = match best.0 {
                        NextHop::Relay(id) => d < best.1 || (d == best.1 && h.id < id),
                        NextHop::Sink => d < best.1,
                    };
                    if better {
                        best = (NextHop::Relay(h.id), d);
                    }
                }
                best.0
            }
        };
        routes.insert(head.id, hop);
    }
    Ok(routes)
}

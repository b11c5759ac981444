//! LEACH baseline election: each node self-elects with the rotating
//! threshold `p / (1 - p * (r mod L))`, `L = ceil(1/p)`, and is barred from
//! re-election until the epoch of `L` rounds ends.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NodeId, NodeState};

pub const DEFAULT_P: f64 = 0.05;

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("LEACH p must lie in (0, 1), got {p}")))
    }
}

/// Rounds per epoch, `ceil(1/p)`.
pub fn epoch_length(p: f64) -> Result<u64> {
    check_p(p)?;
    // 1/0.05 is not exactly 20 in binary; shave rounding noise before ceil.
    Ok(((1.0 / p) * (1.0 - 1e-12)).ceil() as u64)
}

/// Election threshold `T(n)` for round `round_index`; 0 for nodes that
/// already served in this epoch. The last round of an epoch yields 1.
pub fn leach_threshold(p: f64, round_index: u64, is_eligible: bool) -> Result<f64> {
    let epoch = epoch_length(p)?;
    if !is_eligible {
        return Ok(0.0);
    }
    let r = round_index % epoch;
    if r + 1 == epoch {
        return Ok(1.0);
    }
    let t = p / (1.0 - p * r as f64);
    Ok(t.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeachState {
    pub p: f64,
    /// Nodes that have not yet been cluster head in the current epoch.
    pub eligible: BTreeSet<NodeId>,
    pub round_index: u64,
}

impl LeachState {
    pub fn new(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(LeachState {
            p,
            eligible: BTreeSet::new(),
            round_index: 0,
        })
    }
}

/// Runs one round of self-election and advances `state.round_index`.
///
/// Every alive node draws `u ~ U(0,1)` and becomes head iff `u < T(n)`. When
/// nobody self-elects, the eligible node with the largest `T(n) - u` is
/// promoted. If no eligible node is left the result is empty and every node
/// reports straight to the sink for that round.
pub fn elect_cluster_heads_leach<R: Rng + ?Sized>(
    nodes: &[NodeState],
    state: &mut LeachState,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let epoch = epoch_length(state.p)?;
    if state.round_index.is_multiple_of(epoch) {
        state.eligible = nodes.iter().filter(|n| n.alive).map(|n| n.id).collect();
    }

    let mut heads = Vec::new();
    let mut fallback: Option<(f64, NodeId)> = None;
    for node in nodes.iter().filter(|n| n.alive) {
        let eligible = state.eligible.contains(&node.id);
        let threshold = leach_threshold(state.p, state.round_index, eligible)?;
        let draw: f64 = rng.gen();
        if draw < threshold {
            heads.push(node.id);
        }
        let margin = threshold - draw;
        if eligible && fallback.is_none_or(|(best, _)| margin > best) {
            fallback = Some((margin, node.id));
        }
    }

    if heads.is_empty() {
        match fallback {
            Some((_, id)) => {
                log::debug!(
                    "round {}: no LEACH self-election, promoting node {id}",
                    state.round_index
                );
                heads.push(id);
            }
            None => log::debug!("round {}: eligible set exhausted, no heads", state.round_index),
        }
    }
    for id in &heads {
        state.eligible.remove(id);
    }
    heads.sort();
    state.round_index += 1;
    Ok(heads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{deploy, FieldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    #[test]
    fn threshold_examples() {
        assert!((leach_threshold(0.05, 0, true).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(leach_threshold(0.05, 19, true).unwrap(), 1.0);
        assert_eq!(leach_threshold(0.05, 39, true).unwrap(), 1.0);
        assert_eq!(leach_threshold(0.05, 7, false).unwrap(), 0.0);
        // r = 10: 0.05 / (1 - 0.5)
        assert!((leach_threshold(0.05, 10, true).unwrap() - 0.1).abs() < 1e-15);
        assert!(leach_threshold(0.0, 0, true).is_err());
        assert!(leach_threshold(1.0, 0, true).is_err());
    }

    #[test]
    fn epoch_lengths() {
        assert_eq!(epoch_length(0.05).unwrap(), 20);
        assert_eq!(epoch_length(0.1).unwrap(), 10);
        assert_eq!(epoch_length(0.3).unwrap(), 4);
    }

    #[test]
    fn exhausted_eligible_set_elects_nobody() {
        let nodes = deploy(5, &FieldConfig::table1(), 2.0, 3).unwrap();
        let mut state = LeachState::new(0.05).unwrap();
        state.round_index = 5;
        state.eligible.clear();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let heads = elect_cluster_heads_leach(&nodes, &mut state, &mut rng).unwrap();
        assert!(heads.is_empty());
        assert_eq!(state.round_index, 6);
    }

    #[test]
    fn quiet_round_promotes_an_eligible_node() {
        let nodes = deploy(5, &FieldConfig::table1(), 2.0, 3).unwrap();
        let mut state = LeachState::new(0.01).unwrap();
        state.round_index = 5;
        state.eligible = [NodeId(2)].into_iter().collect();
        // With T = 0.01 / 0.95 a self-election is rare; try seeds until one is quiet.
        for seed in 0..50 {
            let mut s = state.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let heads = elect_cluster_heads_leach(&nodes, &mut s, &mut rng).unwrap();
            assert_eq!(heads, vec![NodeId(2)]);
            assert!(s.eligible.is_empty());
        }
    }

    #[test]
    fn last_round_elects_all_remaining() {
        let nodes = deploy(30, &FieldConfig::table1(), 2.0, 3).unwrap();
        let mut state = LeachState::new(0.05).unwrap();
        state.round_index = 19;
        state.eligible = [1, 4, 9, 22].into_iter().map(NodeId).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let heads = elect_cluster_heads_leach(&nodes, &mut state, &mut rng).unwrap();
        for id in [1, 4, 9, 22] {
            assert!(heads.contains(&NodeId(id)));
        }
        assert!(state.eligible.is_empty());
    }

    #[test]
    fn epoch_completeness() {
        let nodes = deploy(100, &FieldConfig::table1(), 2.0, 5).unwrap();
        for seed in 0..10 {
            let mut state = LeachState::new(0.05).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut count: BTreeMap<NodeId, u32> = BTreeMap::new();
            for _ in 0..40 {
                for id in elect_cluster_heads_leach(&nodes, &mut state, &mut rng).unwrap() {
                    *count.entry(id).or_default() += 1;
                }
                if state.round_index.is_multiple_of(20) {
                    assert_eq!(count.len(), 100);
                    assert!(count.values().all(|c| *c == 1), "seed {seed}");
                    count.clear();
                }
            }
        }
    }

    #[test]
    fn expected_head_count() {
        // 10 seeds x 200 rounds at N = 100: mean heads per round ~ p * N = 5.
        let nodes = deploy(100, &FieldConfig::table1(), 2.0, 8).unwrap();
        let mut total = 0usize;
        for seed in 0..10 {
            let mut state = LeachState::new(0.05).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                total += elect_cluster_heads_leach(&nodes, &mut state, &mut rng).unwrap().len();
            }
        }
        let mean = total as f64 / 2000.0;
        assert!((mean - 5.0).abs() <= 1.0, "mean heads per round {mean}");
    }
}

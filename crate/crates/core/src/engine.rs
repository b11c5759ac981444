//! Round loop shared by both protocols.
//!
//! A round runs election and cluster formation, charges the control phase
//! (head advertisement, member join), then the steady phase: every member
//! sends one data packet to its head, each head aggregates and pushes one
//! packet along its route to the sink. Nodes die as soon as their energy
//! falls to the death threshold and take no further part in the round.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{deploy, distance, FieldConfig, NodeId, NodeState, Region, Role};
use crate::leach::{self, LeachState};
use crate::metrics::{summarize, LifetimeSummary};
use crate::plan::{NextHop, RoundPlan};
use crate::radio::{aggregation_energy, rx_energy, tx_energy, RadioParams};
use crate::rbebp::{self, HeadInfo, RelayRule};

pub const DEFAULT_INITIAL_ENERGY: f64 = 2.0;
pub const DEFAULT_CONTROL_BITS: u64 = 100;
pub const DEFAULT_MAX_ROUNDS: u64 = 100_000;

/// Stream used by the LEACH election RNG; deployment uses the default stream.
const ELECTION_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Rbebp,
    Leach,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Rbebp => "rbebp",
            Protocol::Leach => "leach",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbebp" => Ok(Protocol::Rbebp),
            "leach" => Ok(Protocol::Leach),
            other => Err(Error::invalid(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Number of cluster heads elected per round by the region-balanced protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChCount {
    /// `max(min, floor(fraction * alive))`
    Auto {
        fraction: f64,
        min: usize,
    },
    Fixed(usize),
}

impl Default for ChCount {
    fn default() -> Self {
        ChCount::Auto { fraction: 0.05, min: 3 }
    }
}

impl ChCount {
    pub fn for_alive(self, alive: usize) -> usize {
        match self {
            ChCount::Auto { fraction, min } => ((fraction * alive as f64).floor() as usize).max(min),
            ChCount::Fixed(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub node_count: usize,
    pub field: FieldConfig,
    pub radio: RadioParams,
    pub initial_energy: f64,
    pub protocol: Protocol,
    pub ch_count: ChCount,
    pub leach_p: f64,
    pub relay_rule: RelayRule,
    /// Size of advertisement and join packets.
    pub control_bits: u64,
    /// Charge the advertisement/join exchange.
    pub control_enabled: bool,
    /// Energy at or below which a node is dead. `None` means one packet
    /// reception, `e_elec * packet_bits`.
    pub death_threshold: Option<f64>,
    pub max_rounds: u64,
    pub seed: u64,
    /// Wall time represented by one round, for reporting.
    pub round_seconds: f64,
}

impl SimConfig {
    /// The reference field, radio and energy settings, with documented
    /// defaults for the values the reference scenario leaves open.
    pub fn table1(node_count: usize, protocol: Protocol, seed: u64) -> Self {
        SimConfig {
            node_count,
            field: FieldConfig::table1(),
            radio: RadioParams::default(),
            initial_energy: DEFAULT_INITIAL_ENERGY,
            protocol,
            ch_count: ChCount::default(),
            leach_p: leach::DEFAULT_P,
            relay_rule: RelayRule::Cost,
            control_bits: DEFAULT_CONTROL_BITS,
            control_enabled: true,
            death_threshold: None,
            max_rounds: DEFAULT_MAX_ROUNDS,
            seed,
            round_seconds: 1.0,
        }
    }

    pub fn death_threshold(&self) -> f64 {
        self.death_threshold
            .unwrap_or_else(|| self.radio.e_elec() * self.radio.packet_bits() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::invalid("node_count must be at least 1"));
        }
        if self.node_count > u32::MAX as usize {
            return Err(Error::invalid("node_count too large"));
        }
        self.field.validate()?;
        if !(self.initial_energy > 0.0 && self.initial_energy.is_finite()) {
            return Err(Error::invalid(format!(
                "initial_energy must be positive, got {}",
                self.initial_energy
            )));
        }
        match self.ch_count {
            ChCount::Fixed(0) => return Err(Error::invalid("ch_count must be at least 1")),
            ChCount::Auto { fraction, min } => {
                if !(0.0..=1.0).contains(&fraction) || min == 0 {
                    return Err(Error::invalid(format!(
                        "auto ch_count needs fraction in [0, 1] and min >= 1, got {fraction}, {min}"
                    )));
                }
            }
            ChCount::Fixed(_) => {}
        }
        leach::epoch_length(self.leach_p)?;
        if self.control_bits == 0 {
            return Err(Error::invalid("control_bits must be at least 1"));
        }
        if let Some(t) = self.death_threshold {
            if !(t >= 0.0 && t < self.initial_energy) {
                return Err(Error::invalid(format!(
                    "death_threshold must lie in [0, initial_energy), got {t}"
                )));
            }
        }
        if !(self.round_seconds > 0.0 && self.round_seconds.is_finite()) {
            return Err(Error::invalid(format!(
                "round_seconds must be positive, got {}",
                self.round_seconds
            )));
        }
        Ok(())
    }
}

/// Per-round observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    /// Alive nodes at the end of the round.
    pub alive: usize,
    pub remaining_j: f64,
    pub consumed_j: f64,
    /// Data units (member readings plus the head's own) that reached the sink.
    pub delivered: u64,
    pub ch_count: usize,
    pub active_region: Option<Region>,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub record: RoundRecord,
    pub plan: RoundPlan,
}

pub struct Simulation {
    config: SimConfig,
    nodes: Vec<NodeState>,
    leach: LeachState,
    rng: ChaCha8Rng,
    round: u64,
    threshold: f64,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let nodes = deploy(config.node_count, &config.field, config.initial_energy, config.seed)?;
        Simulation::with_nodes(config, nodes)
    }

    /// Starts from an explicit node list. Ids must be `0..n` in order and
    /// `node_count` must match.
    pub fn with_nodes(config: SimConfig, nodes: Vec<NodeState>) -> Result<Self> {
        config.validate()?;
        if nodes.len() != config.node_count {
            return Err(Error::invalid(format!(
                "node_count is {} but {} nodes were supplied",
                config.node_count,
                nodes.len()
            )));
        }
        if let Some(n) = nodes.iter().enumerate().find(|(i, n)| n.id != NodeId(*i as u32)) {
            return Err(Error::invalid(format!("node at index {} has id {}", n.0, n.1.id)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(ELECTION_STREAM);
        Ok(Simulation {
            leach: LeachState::new(config.leach_p)?,
            threshold: config.death_threshold(),
            config,
            nodes,
            rng,
            round: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn remaining_energy(&self) -> f64 {
        self.nodes.iter().map(|n| n.energy).sum()
    }

    fn plan_round(&mut self) -> Result<RoundPlan> {
        match self.config.protocol {
            Protocol::Rbebp => {
                let region = rbebp::select_active_region(&self.nodes)?;
                let count = self.config.ch_count.for_alive(self.alive_count());
                let heads = rbebp::elect_cluster_heads(&self.nodes, region, count)?;
                let membership = rbebp::form_clusters(&self.nodes, &heads)?;
                let infos: Vec<HeadInfo> = heads.iter().map(|id| HeadInfo::from(&self.nodes[idx(*id)])).collect();
                let relay_next_hop = rbebp::build_relay_routes(
                    &infos,
                    self.config.field.sink,
                    &self.config.radio,
                    self.config.relay_rule,
                )?;
                Ok(RoundPlan {
                    cluster_heads: heads,
                    membership,
                    relay_next_hop,
                    active_region: Some(region),
                    direct: Vec::new(),
                })
            }
            Protocol::Leach => {
                let heads = leach::elect_cluster_heads_leach(&self.nodes, &mut self.leach, &mut self.rng)?;
                if heads.is_empty() {
                    return Ok(RoundPlan {
                        direct: self.nodes.iter().filter(|n| n.alive).map(|n| n.id).collect(),
                        ..RoundPlan::default()
                    });
                }
                let membership = rbebp::form_clusters(&self.nodes, &heads)?;
                let relay_next_hop = heads.iter().map(|h| (*h, NextHop::Sink)).collect();
                Ok(RoundPlan {
                    cluster_heads: heads,
                    membership,
                    relay_next_hop,
                    active_region: None,
                    direct: Vec::new(),
                })
            }
        }
    }

    /// Executes one round. Fails with [`Error::NetworkExhausted`] when no
    /// node is alive.
    pub fn run_round(&mut self) -> Result<RoundOutcome> {
        if self.alive_count() == 0 {
            return Err(Error::NetworkExhausted);
        }
        let plan = self.plan_round()?;
        for node in &mut self.nodes {
            node.role = Role::Member;
        }
        for id in &plan.cluster_heads {
            self.nodes[idx(*id)].role = Role::ClusterHead;
        }

        let radio = self.config.radio;
        let k = radio.packet_bits();
        let sink = self.config.field.sink;
        let mut ledger = Ledger {
            nodes: &mut self.nodes,
            threshold: self.threshold,
            spent: 0.0,
        };

        if self.config.control_enabled {
            let bits = self.config.control_bits;
            for head in &plan.cluster_heads {
                let head_pos = ledger.nodes[idx(*head)].pos;
                let reach = plan
                    .members_of(*head)
                    .map(|m| distance(ledger.nodes[idx(m)].pos, head_pos))
                    .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
                    .unwrap_or(radio.d0());
                ledger.charge(*head, tx_energy(&radio, bits, reach)?);
            }
            for (member, head) in &plan.membership {
                let d = ledger.distance(*member, *head);
                ledger.charge(*member, tx_energy(&radio, bits, d)?);
            }
        }

        let mut received: BTreeMap<NodeId, u64> = BTreeMap::new();
        for (member, head) in &plan.membership {
            let d = ledger.distance(*member, *head);
            if ledger.charge(*member, tx_energy(&radio, k, d)?)
                && ledger.alive(*head)
                && ledger.charge(*head, rx_energy(&radio, k)?)
            {
                *received.entry(*head).or_default() += 1;
            }
        }

        // Farthest heads first, so forwarded traffic reaches a relay before
        // the relay sends its own packet.
        let mut order = plan.cluster_heads.clone();
        order.sort_by(|a, b| {
            let da = distance(ledger.nodes[idx(*a)].pos, sink);
            let db = distance(ledger.nodes[idx(*b)].pos, sink);
            db.total_cmp(&da).then(a.cmp(b))
        });

        let mut delivered = 0u64;
        for id in &plan.direct {
            let d = distance(ledger.nodes[idx(*id)].pos, sink);
            if ledger.charge(*id, tx_energy(&radio, k, d)?) {
                delivered += 1;
            }
        }
        for head in order {
            if !ledger.alive(head) {
                continue;
            }
            let units = received.get(&head).copied().unwrap_or(0) + 1;
            if !ledger.charge(head, aggregation_energy(&radio, k, units)?) {
                continue;
            }
            let mut holder = head;
            loop {
                if !ledger.alive(holder) {
                    break;
                }
                let next = plan.relay_next_hop.get(&holder).copied().unwrap_or(NextHop::Sink);
                let d = match next {
                    NextHop::Sink => distance(ledger.nodes[idx(holder)].pos, sink),
                    NextHop::Relay(r) => ledger.distance(holder, r),
                };
                if !ledger.charge(holder, tx_energy(&radio, k, d)?) {
                    break;
                }
                match next {
                    NextHop::Sink => {
                        delivered += units;
                        break;
                    }
                    NextHop::Relay(r) => {
                        if !ledger.alive(r) || !ledger.charge(r, rx_energy(&radio, k)?) {
                            break;
                        }
                        holder = r;
                    }
                }
            }
        }

        let consumed = ledger.spent;
        let record = RoundRecord {
            round: self.round,
            alive: self.alive_count(),
            remaining_j: self.remaining_energy(),
            consumed_j: consumed,
            delivered,
            ch_count: plan.cluster_heads.len(),
            active_region: plan.active_region,
        };
        self.round += 1;
        Ok(RoundOutcome { record, plan })
    }

    /// Runs until every node is dead or `max_rounds` is reached, handing each
    /// round's outcome to `observe`.
    pub fn run_observed(&mut self, mut observe: impl FnMut(&RoundOutcome)) -> Result<Vec<RoundRecord>> {
        let mut series = Vec::new();
        while self.round < self.config.max_rounds && self.alive_count() > 0 {
            let outcome = self.run_round()?;
            observe(&outcome);
            series.push(outcome.record);
        }
        Ok(series)
    }
}

fn idx(id: NodeId) -> usize {
    id.0 as usize
}

/// Debits energy and tracks what was spent this round.
struct Ledger<'a> {
    nodes: &'a mut [NodeState],
    threshold: f64,
    spent: f64,
}

impl Ledger<'_> {
    fn alive(&self, id: NodeId) -> bool {
        self.nodes[idx(id)].alive
    }

    fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        distance(self.nodes[idx(a)].pos, self.nodes[idx(b)].pos)
    }

    /// Debits `cost` from a live node and reports whether it was alive to
    /// act. A node that cannot cover the cost still completes the operation
    /// and is clamped to zero. Once energy is at or below the threshold the
    /// node is dead and takes no further action.
    fn charge(&mut self, id: NodeId, cost: f64) -> bool {
        let threshold = self.threshold;
        let node = &mut self.nodes[idx(id)];
        if !node.alive {
            return false;
        }
        let debit = cost.min(node.energy);
        node.energy -= debit;
        if debit < cost {
            node.energy = 0.0;
        }
        self.spent += debit;
        if node.energy <= threshold {
            node.alive = false;
        }
        true
    }
}

/// Runs a full simulation and summarizes it.
pub fn run_simulation(config: &SimConfig) -> Result<(Vec<RoundRecord>, LifetimeSummary)> {
    let mut sim = Simulation::new(config.clone())?;
    let series = sim.run_observed(|_| {})?;
    let summary = summarize(&series, config.node_count, config.round_seconds);
    Ok((series, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Point;

    fn single_node(pos: Point) -> (SimConfig, Vec<NodeState>) {
        let config = SimConfig::table1(1, Protocol::Rbebp, 0);
        let nodes = vec![NodeState::new(NodeId(0), pos, config.initial_energy, &config.field)];
        (config, nodes)
    }

    #[test]
    fn protocol_parse() {
        assert_eq!("RBEBP".parse::<Protocol>().unwrap(), Protocol::Rbebp);
        assert_eq!("leach".parse::<Protocol>().unwrap(), Protocol::Leach);
        assert!("pegasis".parse::<Protocol>().is_err());
    }

    #[test]
    fn ch_count_defaults() {
        let c = ChCount::default();
        assert_eq!(c.for_alive(100), 5);
        assert_eq!(c.for_alive(50), 3);
        assert_eq!(c.for_alive(35), 3);
        assert_eq!(c.for_alive(1), 3);
        assert_eq!(ChCount::Fixed(8).for_alive(100), 8);
    }

    #[test]
    fn config_validation() {
        let good = SimConfig::table1(10, Protocol::Rbebp, 1);
        good.validate().unwrap();
        let mut bad = good.clone();
        bad.node_count = 0;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.leach_p = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.ch_count = ChCount::Fixed(0);
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.round_seconds = 0.0;
        assert!(Simulation::new(bad).is_err());
    }

    #[test]
    fn default_death_threshold_is_one_reception() {
        let c = SimConfig::table1(10, Protocol::Rbebp, 1);
        assert!((c.death_threshold() - 100e-6).abs() < 1e-18);
    }

    #[test]
    fn single_node_round_cost() {
        let (config, nodes) = single_node(Point::new(75.0, 275.0));
        let mut sim = Simulation::with_nodes(config, nodes).unwrap();
        let out = sim.run_round().unwrap();
        // control 100 bits at d0: 5 uJ + 7.6923 uJ; aggregation 10 uJ;
        // data 2000 bits at 100 m: 360 uJ.
        let d0_sq = 10.0 / 0.0013;
        let expected = 100.0 * 50e-9 + 100.0 * 10e-12 * d0_sq + 10e-6 + 360e-6;
        assert!(
            (out.record.consumed_j - expected).abs() < 1e-15,
            "{}",
            out.record.consumed_j
        );
        assert_eq!(out.record.delivered, 1);
        assert_eq!(out.plan.cluster_heads, vec![NodeId(0)]);
    }

    #[test]
    fn exact_energy_pays_then_dies() {
        let mut config = SimConfig::table1(2, Protocol::Rbebp, 0);
        config.control_enabled = false;
        let mut nodes = vec![
            NodeState::new(NodeId(0), Point::new(75.0, 200.0), 2.0, &config.field),
            NodeState::new(NodeId(1), Point::new(75.0, 250.0), 0.0, &config.field),
        ];
        config.ch_count = ChCount::Fixed(1);
        // Member 1 sits 50 m from head 0: its data packet costs exactly 150 uJ.
        nodes[1].energy = tx_energy(&config.radio, 2000, 50.0).unwrap();
        let mut sim = Simulation::with_nodes(config, nodes).unwrap();
        let out = sim.run_round().unwrap();
        assert_eq!(out.plan.membership[&NodeId(1)], NodeId(0));
        assert!(!sim.nodes()[1].alive);
        assert_eq!(sim.nodes()[1].energy, 0.0);
        assert_eq!(out.record.alive, 1);
        assert_eq!(out.record.delivered, 2);
    }

    #[test]
    fn short_member_completes_send_then_dies() {
        let mut config = SimConfig::table1(2, Protocol::Rbebp, 0);
        config.control_enabled = false;
        config.ch_count = ChCount::Fixed(1);
        let mut nodes = vec![
            NodeState::new(NodeId(0), Point::new(75.0, 200.0), 2.0, &config.field),
            NodeState::new(NodeId(1), Point::new(75.0, 250.0), 0.0, &config.field),
        ];
        nodes[1].energy = 120e-6;
        let mut sim = Simulation::with_nodes(config, nodes).unwrap();
        let before = sim.remaining_energy();
        let out = sim.run_round().unwrap();
        assert_eq!(out.record.delivered, 2);
        assert_eq!(sim.nodes()[1].energy, 0.0);
        assert!(!sim.nodes()[1].alive);
        assert!((before - out.record.consumed_j - sim.remaining_energy()).abs() < 1e-12);
    }

    #[test]
    fn dead_node_takes_no_action() {
        let mut config = SimConfig::table1(2, Protocol::Rbebp, 0);
        config.ch_count = ChCount::Fixed(1);
        let mut nodes = vec![
            NodeState::new(NodeId(0), Point::new(75.0, 200.0), 2.0, &config.field),
            NodeState::new(NodeId(1), Point::new(75.0, 250.0), 1.0, &config.field),
        ];
        nodes[1].alive = false;
        let mut sim = Simulation::with_nodes(config, nodes).unwrap();
        let out = sim.run_round().unwrap();
        assert!(out.plan.membership.is_empty());
        assert_eq!(sim.nodes()[1].energy, 1.0);
        assert_eq!(out.record.delivered, 1);
    }

    #[test]
    fn exhausted_network_signals() {
        let (config, mut nodes) = single_node(Point::new(10.0, 10.0));
        nodes[0].alive = false;
        let mut sim = Simulation::with_nodes(config, nodes).unwrap();
        assert!(matches!(sim.run_round(), Err(Error::NetworkExhausted)));
    }

    #[test]
    fn zero_rounds_is_empty() {
        let mut config = SimConfig::table1(20, Protocol::Leach, 3);
        config.max_rounds = 0;
        let (series, summary) = run_simulation(&config).unwrap();
        assert!(series.is_empty());
        assert!(!summary.fnd.is_reached());
        assert!(!summary.and.is_reached());
    }

    #[test]
    fn with_nodes_checks_ids() {
        let config = SimConfig::table1(1, Protocol::Rbebp, 0);
        let nodes = vec![NodeState::new(NodeId(5), Point::new(1.0, 1.0), 2.0, &config.field)];
        assert!(Simulation::with_nodes(config, nodes).is_err());
    }

    #[test]
    fn leach_routes_direct() {
        let config = SimConfig::table1(50, Protocol::Leach, 4);
        let mut sim = Simulation::new(config).unwrap();
        sim.run_observed(|o| {
            assert!(o.plan.relay_next_hop.values().all(|h| *h == NextHop::Sink));
            assert_eq!(o.plan.relay_next_hop.len(), o.plan.cluster_heads.len());
        })
        .unwrap();
    }

    #[test]
    fn headless_leach_round_reports_directly() {
        let mut config = SimConfig::table1(3, Protocol::Leach, 2);
        config.control_enabled = true;
        let field = config.field;
        let nodes = vec![
            NodeState::new(NodeId(0), Point::new(75.0, 225.0), 2.0, &field),
            NodeState::new(NodeId(1), Point::new(175.0, 175.0), 2.0, &field),
            NodeState::new(NodeId(2), Point::new(75.0, 75.0), 2.0, &field),
        ];
        let mut sim = Simulation::with_nodes(config, nodes).unwrap();
        // Mark the epoch as already spent so nobody is eligible.
        sim.leach.round_index = 1;
        sim.leach.eligible.clear();
        let out = sim.run_round().unwrap();
        assert!(out.plan.cluster_heads.is_empty());
        assert_eq!(out.plan.direct, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(out.record.delivered, 3);
        // 50 m, 100 m, 100 m: 150 uJ + 360 uJ + 360 uJ, no control traffic.
        assert!(
            (out.record.consumed_j - 870e-6).abs() < 1e-15,
            "{}",
            out.record.consumed_j
        );
    }
}

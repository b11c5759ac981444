//! Round-based simulator for energy-constrained wireless sensor networks.
//!
//! Two clustering protocols share one engine:
//!
//! * [`rbebp`]: region-balanced cluster-head election with multi-hop relaying
//!   between cluster heads toward the sink.
//! * [`leach`]: the classic probabilistic rotating election with direct
//!   cluster-head-to-sink transmission.
//!
//! Energy accounting follows the first-order radio model in [`radio`]. Lifetime
//! metrics (first/half/all nodes dead), CSV and SVG output live in [`metrics`].

pub mod engine;
mod error;
pub mod field;
pub mod leach;
pub mod metrics;
pub mod plan;
pub mod radio;
pub mod rbebp;

pub use engine::{ChCount, Protocol, RoundOutcome, RoundRecord, SimConfig, Simulation};
pub use error::{Error, Result};
pub use field::{FieldConfig, NodeId, NodeState, Point, Region, Role};
pub use metrics::{LifetimeSummary, Milestone};
pub use plan::{NextHop, RoundPlan};
pub use radio::RadioParams;
pub use rbebp::RelayRule;

//! Field geometry, node deployment and inner/outer region classification.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of the sink-to-farthest-corner distance used as the default inner radius.
pub const DEFAULT_INNER_RADIUS_FRACTION: f64 = 0.62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Euclidean distance.
pub fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Inner,
    Outer,
}

impl Region {
    pub fn other(self) -> Region {
        match self {
            Region::Inner => Region::Outer,
            Region::Outer => Region::Inner,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Inner => "inner",
            Region::Outer => "outer",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Member,
    ClusterHead,
}

/// Rectangular field `[0, width] x [0, height]` with a sink and two
/// concentric regions. The inner region is the disk of `inner_radius`
/// around `region_center`; everything else in the field is outer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub width: f64,
    pub height: f64,
    pub sink: Point,
    pub region_center: Point,
    pub inner_radius: f64,
}

impl FieldConfig {
    /// Field with regions centered on the sink and the default inner radius.
    pub fn new(width: f64, height: f64, sink: Point) -> Self {
        let mut field = FieldConfig {
            width,
            height,
            sink,
            region_center: sink,
            inner_radius: 0.0,
        };
        field.inner_radius = DEFAULT_INNER_RADIUS_FRACTION * field.farthest_corner_distance(sink);
        field
    }

    /// 1000 m x 1000 m field with the sink at (75, 175).
    pub fn table1() -> Self {
        FieldConfig::new(1000.0, 1000.0, Point::new(75.0, 175.0))
    }

    pub fn farthest_corner_distance(&self, from: Point) -> f64 {
        [
            Point::new(0.0, 0.0),
            Point::new(self.width, 0.0),
            Point::new(0.0, self.height),
            Point::new(self.width, self.height),
        ]
        .into_iter()
        .map(|c| distance(from, c))
        .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite() && self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::invalid(format!(
                "field dimensions must be positive, got {} x {}",
                self.width, self.height
            )));
        }
        if !(self.sink.x.is_finite() && self.sink.y.is_finite()) {
            return Err(Error::invalid("sink position must be finite"));
        }
        if !(self.inner_radius > 0.0 && self.inner_radius.is_finite()) {
            return Err(Error::invalid(format!(
                "inner_radius must be positive, got {}",
                self.inner_radius
            )));
        }
        if !self.contains(self.region_center) {
            return Err(Error::invalid(format!(
                "region center ({}, {}) lies outside the field",
                self.region_center.x, self.region_center.y
            )));
        }
        Ok(())
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig::table1()
    }
}

/// Inner iff within `inner_radius` of the region center; the boundary is inner.
pub fn classify_region(pos: Point, field: &FieldConfig) -> Region {
    if distance(pos, field.region_center) <= field.inner_radius {
        Region::Inner
    } else {
        Region::Outer
    }
}

/// Area between concentric circles of radii `outer >= inner >= 0`.
pub fn annulus_area(outer: f64, inner: f64) -> Result<f64> {
    if !(inner >= 0.0 && outer >= inner) {
        return Err(Error::invalid(format!(
            "annulus needs R >= r >= 0, got R={outer}, r={inner}"
        )));
    }
    Ok(std::f64::consts::PI * (outer * outer - inner * inner))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub pos: Point,
    pub energy: f64,
    pub alive: bool,
    pub region: Region,
    pub role: Role,
}

impl NodeState {
    pub fn new(id: NodeId, pos: Point, energy: f64, field: &FieldConfig) -> Self {
        NodeState {
            id,
            pos,
            energy,
            alive: true,
            region: classify_region(pos, field),
            role: Role::Member,
        }
    }
}

/// Places `n` nodes uniformly over the field. Identical arguments give
/// bit-identical placements.
pub fn deploy(n: usize, field: &FieldConfig, initial_energy: f64, seed: u64) -> Result<Vec<NodeState>> {
    if n == 0 {
        return Err(Error::invalid("node count must be at least 1"));
    }
    if n > u32::MAX as usize {
        return Err(Error::invalid(format!("node count {n} too large")));
    }
    if !(initial_energy > 0.0 && initial_energy.is_finite()) {
        return Err(Error::invalid(format!(
            "initial energy must be positive, got {initial_energy}"
        )));
    }
    field.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|i| {
            let x = rng.gen::<f64>() * field.width;
            let y = rng.gen::<f64>() * field.height;
            NodeState::new(NodeId(i as u32), Point::new(x, y), initial_energy, field)
        })
        .collect();
    Ok(nodes)
}

/// Writes `id,x,y,region` rows for plotting placements.
pub fn write_nodes_csv(nodes: &[NodeState], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "id,x,y,region")?;
        for node in nodes {
            writeln!(out, "{},{},{},{}", node.id, node.pos.x, node.pos.y, node.region)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

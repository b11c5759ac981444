//! Flat `key = value` configuration layered over the default preset.
//!
//! Later sources override earlier ones: preset, config file, `--set`
//! pairs, then dedicated flags.

use std::collections::BTreeMap;
use std::path::Path;

use wsn_core::{ChCount, Point, Protocol, RadioParams, RelayRule, SimConfig};

use crate::CliError;

/// Every key a config file or `--set` may use.
pub const KEYS: &[&str] = &[
    "nodes",
    "seed",
    "rounds",
    "protocol",
    "width",
    "height",
    "sink_x",
    "sink_y",
    "center_x",
    "center_y",
    "inner_radius",
    "initial_energy",
    "e_elec",
    "eps_fs",
    "eps_mp",
    "e_da",
    "packet_bits",
    "control_bits",
    "control",
    "ch_count",
    "ch_fraction",
    "ch_min",
    "leach_p",
    "relay_rule",
    "death_threshold",
    "round_seconds",
];

/// Ordered key/value overrides. Re-setting a key replaces its value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(BTreeMap<String, String>);

impl Overrides {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Usage(format!("unknown setting `{key}`")));
        }
        self.0.insert(key.to_string(), value.into().trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key=value", lineno + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.parse_text(&text, &path.display().to_string())
    }

    pub fn parse_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("`{pair}` is not key=value")))?;
        self.set(key, value)
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("bad value `{v}` for {key}: {e}")))
            })
            .transpose()
    }

    /// Builds a validated configuration from the default preset plus these overrides.
    pub fn resolve(&self) -> Result<SimConfig, CliError> {
        let nodes = self.num::<usize>("nodes")?.unwrap_or(100);
        let protocol = match self.get("protocol") {
            Some(p) => p.parse::<Protocol>().map_err(|e| CliError::Usage(e.to_string()))?,
            None => Protocol::Rbebp,
        };
        let seed = self.num::<u64>("seed")?.unwrap_or(1);
        let mut config = SimConfig::table1(nodes, protocol, seed);

        let width = self.num("width")?.unwrap_or(config.field.width);
        let height = self.num("height")?.unwrap_or(config.field.height);
        let sink = Point::new(
            self.num("sink_x")?.unwrap_or(config.field.sink.x),
            self.num("sink_y")?.unwrap_or(config.field.sink.y),
        );
        let mut field = wsn_core::FieldConfig::new(width, height, sink);
        field.region_center = Point::new(
            self.num("center_x")?.unwrap_or(field.region_center.x),
            self.num("center_y")?.unwrap_or(field.region_center.y),
        );
        if let Some(r) = self.num("inner_radius")? {
            field.inner_radius = r;
        }
        config.field = field;

        let r = config.radio;
        config.radio = RadioParams::new(
            self.num("e_elec")?.unwrap_or(r.e_elec()),
            self.num("eps_fs")?.unwrap_or(r.eps_fs()),
            self.num("eps_mp")?.unwrap_or(r.eps_mp()),
            self.num("e_da")?.unwrap_or(r.e_da()),
            self.num("packet_bits")?.unwrap_or(r.packet_bits()),
        )
        .map_err(|e| CliError::Usage(e.to_string()))?;

        if let Some(v) = self.num("initial_energy")? {
            config.initial_energy = v;
        }
        if let Some(v) = self.num("rounds")? {
            config.max_rounds = v;
        }
        if let Some(v) = self.num("control_bits")? {
            config.control_bits = v;
        }
        if let Some(v) = self.get("control") {
            config.control_enabled = parse_switch(v)?;
        }
        if let Some(v) = self.num("leach_p")? {
            config.leach_p = v;
        }
        if let Some(v) = self.get("relay_rule") {
            config.relay_rule = v.parse::<RelayRule>().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(v) = self.num("death_threshold")? {
            config.death_threshold = Some(v);
        }
        if let Some(v) = self.num("round_seconds")? {
            config.round_seconds = v;
        }

        let ChCount::Auto { fraction, min } = ChCount::default() else {
            unreachable!("default head count is automatic")
        };
        config.ch_count = match self.get("ch_count") {
            Some("auto") | None => ChCount::Auto {
                fraction: self.num("ch_fraction")?.unwrap_or(fraction),
                min: self.num("ch_min")?.unwrap_or(min),
            },
            Some(_) => ChCount::Fixed(self.num::<usize>("ch_count")?.unwrap_or_default()),
        };

        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

fn parse_switch(v: &str) -> Result<bool, CliError> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(CliError::Usage(format!("expected on/off, got `{other}`"))),
    }
}

/// Parses seed lists such as `1..10` (inclusive), `4` or `1..3,7`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = |e: std::num::ParseIntError| CliError::Usage(format!("bad seed `{part}`: {e}"));
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(bad)?;
            let b: u64 = b.trim().parse().map_err(bad)?;
            if b < a {
                return Err(CliError::Usage(format!("empty seed range `{part}`")));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().map_err(bad)?);
        }
    }
    if seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    Ok(seeds)
}

pub fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| CliError::Usage(format!("bad {what} `{s}`: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("no {what} given")));
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_overrides_give_table1() {
        let c = Overrides::default().resolve().unwrap();
        assert_eq!(c, SimConfig::table1(100, Protocol::Rbebp, 1));
    }

    #[test]
    fn file_then_pairs() {
        let mut o = Overrides::default();
        o.parse_text(
            "# comment\nnodes = 35\nprotocol=leach # trailing\n\nleach_p=0.1\n",
            "cfg",
        )
        .unwrap();
        o.parse_pair("nodes=50").unwrap();
        let c = o.resolve().unwrap();
        assert_eq!(c.node_count, 50);
        assert_eq!(c.protocol, Protocol::Leach);
        assert_eq!(c.leach_p, 0.1);
    }

    #[test]
    fn geometry_defaults_follow_sink() {
        let mut o = Overrides::default();
        o.parse_pair("sink_x=500").unwrap();
        o.parse_pair("sink_y=500").unwrap();
        let c = o.resolve().unwrap();
        assert_eq!(c.field.region_center, Point::new(500.0, 500.0));
        let far = (500.0f64 * 500.0 * 2.0).sqrt();
        assert!((c.field.inner_radius - 0.62 * far).abs() < 1e-9);
    }

    #[test]
    fn head_count_forms() {
        let mut o = Overrides::default();
        o.parse_pair("ch_count=8").unwrap();
        assert_eq!(o.resolve().unwrap().ch_count, ChCount::Fixed(8));
        o.parse_pair("ch_count=auto").unwrap();
        o.parse_pair("ch_fraction=0.1").unwrap();
        assert_eq!(o.resolve().unwrap().ch_count, ChCount::Auto { fraction: 0.1, min: 3 });
    }

    #[test]
    fn rejects_bad_input() {
        let mut o = Overrides::default();
        assert!(o.parse_pair("colour=blue").is_err());
        assert!(o.parse_pair("novalue").is_err());
        assert!(o.parse_text("nodes 5", "cfg").is_err());
        o.parse_pair("nodes=0").unwrap();
        assert!(o.resolve().is_err());
        let mut o = Overrides::default();
        o.parse_pair("control=maybe").unwrap();
        assert!(o.resolve().is_err());
    }

    #[test]
    fn seeds() {
        assert_eq!(parse_seeds("1..10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_seeds("4").unwrap(), vec![4]);
        assert_eq!(parse_seeds("1..3,7").unwrap(), vec![1, 2, 3, 7]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("").is_err());
    }
}

//! Lifetime metrics and report output (CSV, JSON, JSON lines, SVG).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::engine::{Protocol, RoundRecord};
use crate::error::{Error, Result};
use crate::field::Region;

/// A lifetime event: the round it happened in, or not reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Milestone {
    NotReached,
    Reached { round: u64, seconds: f64 },
}

impl Milestone {
    fn at(round: Option<u64>, round_seconds: f64) -> Self {
        match round {
            Some(round) => Milestone::Reached {
                round,
                seconds: round as f64 * round_seconds,
            },
            None => Milestone::NotReached,
        }
    }

    pub fn is_reached(&self) -> bool {
        matches!(self, Milestone::Reached { .. })
    }

    pub fn round(&self) -> Option<u64> {
        match self {
            Milestone::Reached { round, .. } => Some(*round),
            Milestone::NotReached => None,
        }
    }

    pub fn seconds(&self) -> Option<f64> {
        match self {
            Milestone::Reached { seconds, .. } => Some(*seconds),
            Milestone::NotReached => None,
        }
    }
}

impl std::fmt::Display for Milestone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Milestone::Reached { seconds, .. } => write!(f, "{seconds}"),
            Milestone::NotReached => f.write_str("not reached"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeSummary {
    pub n: usize,
    pub round_seconds: f64,
    /// First node dead.
    pub fnd: Milestone,
    /// At least half the nodes dead.
    pub hnd: Milestone,
    /// All nodes dead.
    pub and: Milestone,
    pub total_throughput: u64,
    pub total_energy_consumed: f64,
    pub rounds: u64,
}

/// Number of deaths that counts as "half the network": `ceil(n / 2)`.
pub fn half_deaths(n: usize) -> usize {
    n.div_ceil(2)
}

/// Derives FND/HND/AND and totals from a round series ordered by round.
pub fn summarize(series: &[RoundRecord], n: usize, round_seconds: f64) -> LifetimeSummary {
    let first = |pred: &dyn Fn(&RoundRecord) -> bool| series.iter().find(|r| pred(r)).map(|r| r.round);
    let half_alive = n - half_deaths(n);
    LifetimeSummary {
        n,
        round_seconds,
        fnd: Milestone::at(first(&|r| r.alive < n), round_seconds),
        hnd: Milestone::at(first(&|r| r.alive <= half_alive), round_seconds),
        and: Milestone::at(first(&|r| r.alive == 0), round_seconds),
        total_throughput: series.iter().map(|r| r.delivered).sum(),
        total_energy_consumed: series.iter().map(|r| r.consumed_j).sum(),
        rounds: series.len() as u64,
    }
}

const CSV_HEADER: [&str; 8] = [
    "round",
    "seconds",
    "alive",
    "remaining_j",
    "consumed_j",
    "delivered",
    "ch_count",
    "region",
];

fn region_cell(region: Option<Region>) -> &'static str {
    region.map_or("-", Region::as_str)
}

/// Writes one row per round followed by a `#`-commented summary footer.
pub fn emit_csv(series: &[RoundRecord], summary: &LifetimeSummary, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in series {
        writer
            .write_record([
                r.round.to_string(),
                (r.round as f64 * summary.round_seconds).to_string(),
                r.alive.to_string(),
                r.remaining_j.to_string(),
                r.consumed_j.to_string(),
                r.delivered.to_string(),
                r.ch_count.to_string(),
                region_cell(r.active_region).to_string(),
            ])
            .map_err(csv_err)?;
    }
    let mut out = writer.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    let mut footer = || -> std::io::Result<()> {
        writeln!(out, "# n={}", summary.n)?;
        writeln!(out, "# round_seconds={}", summary.round_seconds)?;
        writeln!(out, "# fnd={}", summary.fnd)?;
        writeln!(out, "# hnd={}", summary.hnd)?;
        writeln!(out, "# and={}", summary.and)?;
        writeln!(out, "# throughput={}", summary.total_throughput)?;
        writeln!(out, "# energy_consumed_j={}", summary.total_energy_consumed)?;
        out.flush()
    };
    footer().map_err(|e| Error::io(path, e))
}

/// Series and footer parameters read back from [`emit_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvReport {
    pub series: Vec<RoundRecord>,
    pub n: usize,
    pub round_seconds: f64,
}

impl CsvReport {
    pub fn summarize(&self) -> LifetimeSummary {
        summarize(&self.series, self.n, self.round_seconds)
    }
}

pub fn read_csv(path: &Path) -> Result<CsvReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };

    let mut n = None;
    let mut round_seconds = None;
    for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
        if let Some((key, value)) = line.split_once('=') {
            match key {
                "n" => n = Some(value.parse::<usize>().map_err(|e| malformed(format!("n: {e}")))?),
                "round_seconds" => {
                    round_seconds = Some(
                        value
                            .parse::<f64>()
                            .map_err(|e| malformed(format!("round_seconds: {e}")))?,
                    )
                }
                _ => {}
            }
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut series = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let field = |i: usize| {
            row.get(i)
                .ok_or_else(|| malformed(format!("row has {} columns", row.len())))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .parse::<f64>()
                .map_err(|e| malformed(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let int = |i: usize| -> Result<u64> {
            field(i)?
                .parse::<u64>()
                .map_err(|e| malformed(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let active_region = match field(7)? {
            "-" => None,
            "inner" => Some(Region::Inner),
            "outer" => Some(Region::Outer),
            other => return Err(malformed(format!("unknown region `{other}`"))),
        };
        series.push(RoundRecord {
            round: int(0)?,
            alive: int(2)? as usize,
            remaining_j: num(3)?,
            consumed_j: num(4)?,
            delivered: int(5)?,
            ch_count: int(6)? as usize,
            active_region,
        });
    }
    Ok(CsvReport {
        series,
        n: n.ok_or_else(|| malformed("missing `# n=` footer".into()))?,
        round_seconds: round_seconds.ok_or_else(|| malformed("missing `# round_seconds=` footer".into()))?,
    })
}

/// Seconds when reached, otherwise the string `"not reached"`.
fn milestone_seconds<S: Serializer>(m: &Milestone, s: S) -> std::result::Result<S::Ok, S::Error> {
    match m.seconds() {
        Some(secs) => s.serialize_f64(secs),
        None => s.serialize_str("not reached"),
    }
}

/// The per-run JSON summary document.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryDocument {
    pub protocol: Protocol,
    pub n: usize,
    pub seed: u64,
    #[serde(serialize_with = "milestone_seconds")]
    pub fnd: Milestone,
    #[serde(serialize_with = "milestone_seconds")]
    pub hnd: Milestone,
    #[serde(rename = "and", serialize_with = "milestone_seconds")]
    pub and: Milestone,
    pub throughput: u64,
    pub energy: f64,
}

impl SummaryDocument {
    pub fn new(protocol: Protocol, seed: u64, summary: &LifetimeSummary) -> Self {
        SummaryDocument {
            protocol,
            n: summary.n,
            seed,
            fnd: summary.fnd,
            hnd: summary.hnd,
            and: summary.and,
            throughput: summary.total_throughput,
            energy: summary.total_energy_consumed,
        }
    }
}

pub fn emit_summary_json(doc: &SummaryDocument, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One JSON object per round.
pub fn emit_jsonl(series: &[RoundRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        for r in series {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartMetric {
    Alive,
    Energy,
    Throughput,
}

impl ChartMetric {
    pub const ALL: [ChartMetric; 3] = [ChartMetric::Alive, ChartMetric::Energy, ChartMetric::Throughput];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartMetric::Alive => "alive",
            ChartMetric::Energy => "energy",
            ChartMetric::Throughput => "throughput",
        }
    }

    fn title(self) -> &'static str {
        match self {
            ChartMetric::Alive => "Number of nodes alive",
            ChartMetric::Energy => "Energy consumption of network",
            ChartMetric::Throughput => "Throughput of network",
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            ChartMetric::Alive => "alive nodes",
            ChartMetric::Energy => "cumulative energy consumed (J)",
            ChartMetric::Throughput => "cumulative data units at sink",
        }
    }

    /// Per-round values: alive count, or running totals for energy and throughput.
    pub fn values(self, series: &[RoundRecord]) -> Vec<f64> {
        let mut acc = 0.0;
        series
            .iter()
            .map(|r| match self {
                ChartMetric::Alive => r.alive as f64,
                ChartMetric::Energy => {
                    acc += r.consumed_j;
                    acc
                }
                ChartMetric::Throughput => {
                    acc += r.delivered as f64;
                    acc
                }
            })
            .collect()
    }
}

/// A labelled polyline in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl ChartSeries {
    pub fn from_records(
        label: impl Into<String>,
        series: &[RoundRecord],
        metric: ChartMetric,
        round_seconds: f64,
    ) -> Self {
        let points = series
            .iter()
            .zip(metric.values(series))
            .map(|(r, v)| (r.round as f64 * round_seconds, v))
            .collect();
        ChartSeries {
            label: label.into(),
            points,
        }
    }

    /// Round-by-round mean over several runs. Runs that ended early hold
    /// their final value.
    pub fn averaged(
        label: impl Into<String>,
        runs: &[&[RoundRecord]],
        metric: ChartMetric,
        round_seconds: f64,
    ) -> Self {
        let values: Vec<Vec<f64>> = runs.iter().map(|r| metric.values(r)).collect();
        let len = values.iter().map(Vec::len).max().unwrap_or(0);
        let points = (0..len)
            .map(|i| {
                let sum: f64 = values
                    .iter()
                    .map(|v| v.get(i).or(v.last()).copied().unwrap_or(0.0))
                    .sum();
                (i as f64 * round_seconds, sum / values.len() as f64)
            })
            .collect();
        ChartSeries {
            label: label.into(),
            points,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Renders a static SVG 1.1 line chart with one polyline per series.
pub fn render_chart(series_set: &[ChartSeries], metric: ChartMetric) -> Result<String> {
    if series_set.is_empty() {
        return Err(Error::invalid("chart needs at least one series"));
    }
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const LEFT: f64 = 80.0;
    const RIGHT: f64 = 180.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 60.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;

    let all = || series_set.iter().flat_map(|s| s.points.iter());
    let x_max = all().map(|p| p.0).fold(0.0, f64::max).max(1.0);
    let y_max = all().map(|p| p.1).fold(0.0, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let sx = |x: f64| LEFT + x / x_max * plot_w;
    let sy = |y: f64| TOP + plot_h - y / y_max * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        metric.title()
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=5 {
        let fx = x_max * i as f64 / 5.0;
        let fy = y_max * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            sx(fx),
            TOP + plot_h + 18.0,
            tick(fx),
            LEFT - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time (s)</text>
<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        LEFT + plot_w / 2.0,
        H - 16.0,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        metric.y_label()
    );

    for (i, s) in series_set.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>
<text x="{:.1}" y="{:.1}">{}</text>"#,
            LEFT + plot_w + 12.0,
            LEFT + plot_w + 36.0,
            LEFT + plot_w + 42.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_chart(series_set: &[ChartSeries], metric: ChartMetric, path: &Path) -> Result<()> {
    let svg = render_chart(series_set, metric)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn tick(v: f64) -> String {
    if v >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(alive: &[usize]) -> Vec<RoundRecord> {
        alive
            .iter()
            .enumerate()
            .map(|(i, a)| RoundRecord {
                round: i as u64,
                alive: *a,
                remaining_j: *a as f64 * 0.5,
                consumed_j: 0.125 * (i + 1) as f64,
                delivered: *a as u64,
                ch_count: 1,
                active_region: if i % 2 == 0 { Some(Region::Inner) } else { None },
            })
            .collect()
    }

    #[test]
    fn summarize_hand_walk() {
        let s = summarize(&records(&[3, 3, 2, 1, 0]), 3, 1.0);
        assert_eq!(s.fnd.seconds(), Some(2.0));
        // ceil(3/2) = 2 deaths are needed, reached at round 3.
        assert_eq!(s.hnd.seconds(), Some(3.0));
        assert_eq!(s.and.seconds(), Some(4.0));
        assert_eq!(s.total_throughput, 9);
    }

    #[test]
    fn summarize_not_reached() {
        let s = summarize(&records(&[4, 4, 4]), 4, 1.0);
        assert_eq!(s.fnd, Milestone::NotReached);
        let empty = summarize(&[], 4, 1.0);
        assert!(!empty.fnd.is_reached() && !empty.hnd.is_reached() && !empty.and.is_reached());
        assert_eq!(empty.rounds, 0);
    }

    #[test]
    fn hnd_boundary() {
        // n = 5: three deaths trigger HND.
        assert_eq!(half_deaths(5), 3);
        let s = summarize(&records(&[5, 4, 3, 2, 2, 0]), 5, 2.0);
        assert_eq!(s.hnd, Milestone::Reached { round: 3, seconds: 6.0 });
        // n = 4: two deaths.
        let s = summarize(&records(&[4, 3, 2, 1]), 4, 1.0);
        assert_eq!(s.hnd.round(), Some(2));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let series = records(&[6, 5, 5, 3, 1, 0]);
        let summary = summarize(&series, 6, 0.5);
        emit_csv(&series, &summary, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("round,seconds,alive,remaining_j,consumed_j,delivered,ch_count,region\n"));
        assert!(!text.contains('\r'));
        let back = read_csv(&path).unwrap();
        assert_eq!(back.series, series);
        assert_eq!(back.summarize(), summary);
    }

    #[test]
    fn empty_csv_has_header_and_footer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let summary = summarize(&[], 10, 1.0);
        emit_csv(&[], &summary, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("# fnd=not reached"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
        assert!(read_csv(&path).unwrap().series.is_empty());
    }

    #[test]
    fn csv_io_error_names_path() {
        let err = emit_csv(&[], &summarize(&[], 1, 1.0), Path::new("/nonexistent/dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.csv"));
    }

    #[test]
    fn summary_json_shape() {
        let s = summarize(&records(&[2, 2]), 2, 1.0);
        let doc = SummaryDocument::new(Protocol::Rbebp, 9, &s);
        let v = serde_json::to_value(&doc).unwrap();
        assert_eq!(v["protocol"], "rbebp");
        assert_eq!(v["fnd"], "not reached");
        assert_eq!(v["and"], "not reached");
        assert_eq!(v["throughput"], 4);
    }

    #[test]
    fn chart_constant_series_is_horizontal() {
        let s = ChartSeries {
            label: "flat".into(),
            points: vec![(0.0, 3.0), (1.0, 3.0), (2.0, 3.0)],
        };
        let svg = render_chart(&[s], ChartMetric::Alive).unwrap();
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = poly.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        assert!(svg.contains("flat"));
    }

    #[test]
    fn chart_requires_series() {
        assert!(render_chart(&[], ChartMetric::Energy).is_err());
    }

    #[test]
    fn averaged_holds_final_value() {
        let a = records(&[2, 1, 0]);
        let b = records(&[2]);
        let avg = ChartSeries::averaged("avg", &[&a, &b], ChartMetric::Alive, 1.0);
        assert_eq!(avg.points, vec![(0.0, 2.0), (1.0, 1.5), (2.0, 1.0)]);
    }

    #[test]
    fn cumulative_values() {
        let series = records(&[3, 2, 1]);
        assert_eq!(ChartMetric::Throughput.values(&series), vec![3.0, 5.0, 6.0]);
        assert_eq!(ChartMetric::Energy.values(&series), vec![0.125, 0.375, 0.75]);
    }
}

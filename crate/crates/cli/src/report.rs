//! Machine-readable command output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use uncertain_eval::leaderboard::AuditMatrix;
use uncertain_eval::ranking::OrderDistribution;
use uncertain_eval::{LeaderboardEntry, Metric, MetricDistribution};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub body: Body,
    /// Non-fatal findings, e.g. single-trial ratings or out-of-order ranks.
    pub warnings: Vec<String>,
    /// Set when a result collapsed to a point mass; `--strict` turns this into exit 3.
    pub degenerate: bool,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum Body {
    MetricDistribution(EvalPayload),
    ErrorMatrix(MatrixPayload),
    Sweep(SweepPayload),
    Histogram(HistogramPayload),
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::MetricDistribution(_) => "metric-distribution",
            Body::ErrorMatrix(_) => "error-matrix",
            Body::Sweep(_) => "sweep",
            Body::Histogram(_) => "histogram",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPayload {
    pub metric: Metric,
    pub systems: Vec<SystemEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEval {
    pub system: String,
    pub analytic: Option<MetricDistribution>,
    pub monte_carlo: Option<MetricDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPayload {
    /// Leaderboard entries with their attached variances (audit only).
    pub entries: Option<Vec<LeaderboardEntry>>,
    pub matrices: Vec<AuditMatrix>,
    pub orders: Option<OrderDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPayload {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: u64,
    /// Homogeneous σ_ν, or `None` when σ was drawn from a population model.
    pub sigma: Option<f64>,
    pub delta: f64,
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPayload {
    pub metric: Metric,
    /// Shared by every system so the histograms can be overlaid.
    pub bin_edges: Vec<f64>,
    pub systems: Vec<SystemHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemHistogram {
    pub system: String,
    pub trials: Vec<u32>,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputFile>,
    pub flags: BTreeMap<String, serde_json::Value>,
    /// Unix seconds; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        Metadata {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: None,
            inputs: Vec::new(),
            flags: BTreeMap::new(),
            timestamp: timestamp(),
        }
    }
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Report {
    pub fn new(body: Body, metadata: Metadata) -> Self {
        Report {
            body,
            warnings: Vec::new(),
            degenerate: false,
            metadata,
        }
    }

    pub fn write<W: Write>(&self, out: W, format: Format) -> CliResult<()> {
        match format {
            Format::Json => self.write_json(out),
            Format::Csv => self.write_csv(out),
        }
    }

    /// Pretty JSON. Floats use the shortest representation that parses back to
    /// the same value, so nothing is lost.
    pub fn write_json<W: Write>(&self, mut out: W) -> CliResult<()> {
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::from)?;
        writeln!(out)?;
        Ok(())
    }

    /// The payload as one flat table. Metadata and order frequencies are JSON only.
    pub fn write_csv<W: Write>(&self, mut out: W) -> CliResult<()> {
        let mut s = String::new();
        match &self.body {
            Body::MetricDistribution(p) => {
                s.push_str("system,metric,method,mean,variance,std,n,mc_samples,degenerate\n");
                for sys in &p.systems {
                    for d in sys.analytic.iter().chain(sys.monte_carlo.iter()) {
                        let method = match d.method {
                            uncertain_eval::Method::Analytic => "analytic",
                            uncertain_eval::Method::MonteCarlo => "monte-carlo",
                        };
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{},{}",
                            field(&sys.system),
                            d.metric,
                            method,
                            d.gaussian.mean(),
                            d.gaussian.variance(),
                            d.gaussian.std_dev(),
                            d.n,
                            d.mc_samples,
                            d.degenerate
                        );
                    }
                }
            }
            Body::ErrorMatrix(p) => {
                s.push_str("variant,better,worse,p\n");
                for m in &p.matrices {
                    let labels = &m.matrix.labels;
                    for i in 0..labels.len() {
                        for j in i + 1..labels.len() {
                            let _ = writeln!(
                                s,
                                "{},{},{},{}",
                                m.variant,
                                field(&labels[i]),
                                field(&labels[j]),
                                m.matrix.get(i, j).expect("upper triangle")
                            );
                        }
                    }
                }
            }
            Body::Sweep(p) => {
                s.push_str("n,sigma,delta,mean,variance,std\n");
                for r in &p.rows {
                    let sigma = r.sigma.map(|v| v.to_string()).unwrap_or_default();
                    let _ = writeln!(s, "{},{},{},{},{},{}", r.n, sigma, r.delta, r.mean, r.variance, r.std);
                }
            }
            Body::Histogram(p) => {
                s.push_str("system,bin,low,high,count\n");
                for sys in &p.systems {
                    for (b, c) in sys.counts.iter().enumerate() {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{}",
                            field(&sys.system),
                            b,
                            p.bin_edges[b],
                            p.bin_edges[b + 1],
                            c
                        );
                    }
                }
            }
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub cycle: usize,
    pub k: usize,
    pub blocks: usize,
    /// `b`, the number of dualized equations.
    pub constraints: usize,
    pub cycle_bound: f64,
    /// Best bound so far.
    pub bound: f64,
    /// Tightest bound among the dual points evaluated this cycle, before
    /// certification.
    pub tightest_evaluated: f64,
    /// Largest distance among the constraints added this cycle.
    pub distance_start: f64,
    /// Largest distance over all constraints after the bundle run.
    pub distance_end: f64,
    pub serious_steps: usize,
    pub null_steps: usize,
    pub evaluations: usize,
    pub max_qp_kkt: f64,
    pub seconds: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBound {
    pub k: usize,
    pub bound: f64,
    pub blocks: usize,
    pub constraints: usize,
}

/// Bounds are in the problem's own units: `max c^T L c` for Max-Cut (four
/// times the cut weight), the stable set size, the number of colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub problem: Problem,
    pub n: usize,
    pub m: usize,
    pub basic_bound: f64,
    pub final_bound: f64,
    /// Max-Cut only: `final_bound / 4`, a bound on the cut weight.
    pub cut_weight_bound: Option<f64>,
    pub esb: Vec<LevelBound>,
    pub rows: Vec<CycleRow>,
    pub known_optimum: Option<f64>,
    pub complete: bool,
    pub error: Option<String>,
    pub seconds: f64,
}

impl BoundReport {
    pub fn new(
        name: &str,
        problem: Problem,
        g: &WeightedGraph,
        basic_value: f64,
        known_optimum: Option<f64>,
    ) -> Self {
        let basic = problem.user_bound(basic_value);
        Self {
            name: name.to_string(),
            problem,
            n: g.order(),
            m: g.edge_count(),
            basic_bound: basic,
            final_bound: basic,
            cut_weight_bound: None,
            esb: Vec::new(),
            rows: Vec::new(),
            known_optimum,
            complete: false,
            error: None,
            seconds: 0.0,
        }
    }

    pub(crate) fn finish(&mut self, start: Instant) {
        self.complete = self.error.is_none();
        self.seconds = start.elapsed().as_secs_f64();
        if self.problem == Problem::MaxCut {
            self.cut_weight_bound = Some(self.final_bound / 4.0);
        }
    }

    pub(crate) fn fail(&mut self, e: Error) {
        self.error = Some(e.to_string());
        self.complete = false;
        if self.problem == Problem::MaxCut {
            self.cut_weight_bound = Some(self.final_bound / 4.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" | "txt" => Ok(Self::Table),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(|e| e.parse().ok())
            .unwrap_or(Self::Json)
    }
}

const CSV_HEADER: [&str; 16] = [
    "cycle",
    "k",
    "blocks",
    "constraints",
    "cycle_bound",
    "bound",
    "tightest_evaluated",
    "distance_start",
    "distance_end",
    "serious_steps",
    "null_steps",
    "evaluations",
    "max_qp_kkt",
    "seconds",
    "elapsed",
    "name",
];

/// Serializes `report` to `out`. JSON holds the whole report; CSV has one
/// line per cycle; the table lists the bound per subgraph order.
pub fn emit_report<W: Write>(report: &BoundReport, format: ReportFormat, out: W) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in &report.rows {
                w.write_record([
                    r.cycle.to_string(),
                    r.k.to_string(),
                    r.blocks.to_string(),
                    r.constraints.to_string(),
                    r.cycle_bound.to_string(),
                    r.bound.to_string(),
                    r.tightest_evaluated.to_string(),
                    r.distance_start.to_string(),
                    r.distance_end.to_string(),
                    r.serious_steps.to_string(),
                    r.null_steps.to_string(),
                    r.evaluations.to_string(),
                    r.max_qp_kkt.to_string(),
                    r.seconds.to_string(),
                    r.elapsed.to_string(),
                    report.name.clone(),
                ])?;
            }
            w.flush()?;
        }
        ReportFormat::Table => {
            let mut out = out;
            out.write_all(table(report).as_bytes())?;
        }
    }
    Ok(())
}

fn table(report: &BoundReport) -> String {
    let mut head = format!("{:<16} {:>5} {:>6} {:>10}", "name", "n", "m", "basic");
    let mut row = format!(
        "{:<16} {:>5} {:>6} {:>10.4}",
        report.name, report.n, report.m, report.basic_bound
    );
    for level in &report.esb {
        let _ = write!(head, " {:>10}", format!("esb{}", level.k));
        let _ = write!(row, " {:>10.4}", level.bound);
    }
    let _ = write!(head, " {:>10}", "final");
    let _ = write!(row, " {:>10.4}", report.final_bound);
    if let Some(c) = report.cut_weight_bound {
        let _ = write!(head, " {:>10}", "cut");
        let _ = write!(row, " {:>10.4}", c);
    }
    if let Some(opt) = report.known_optimum {
        let _ = write!(head, " {:>10}", "optimum");
        let _ = write!(row, " {:>10.4}", opt);
    }
    format!("{head}\n{row}\n")
}

pub fn write_report(report: &BoundReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    emit_report(report, format, std::io::BufWriter::new(file))
}

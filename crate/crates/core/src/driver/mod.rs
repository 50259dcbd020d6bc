//! Outer loop: bundle runs alternating with separation over increasing
//! subgraph orders.

pub mod report;
pub mod verify;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::atlas::{AtomCache, MAX_ATOM_ORDER};
use crate::bundle::{self, run_bundle, BundleSettings};
use crate::error::{Error, Result};
use crate::esc::{DualPoint, EscBlock, EscSet};
use crate::graph::{parse_dimacs, parse_rudy, VertexSubset, WeightedGraph};
use crate::problem::Problem;
use crate::sdp::{self, CERTIFY_TOL};
use crate::separation::{self, SeparationSettings};
pub use report::{emit_report, write_report, BoundReport, CycleRow, LevelBound, ReportFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceFormat {
    Dimacs,
    Rudy,
}

impl FromStr for InstanceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dimacs" | "col" => Ok(Self::Dimacs),
            "rudy" => Ok(Self::Rudy),
            other => Err(Error::Config(format!("unknown instance format `{other}`"))),
        }
    }
}

pub fn load_instance(path: &Path, format: InstanceFormat) -> Result<WeightedGraph> {
    let text = std::fs::read_to_string(path)?;
    match format {
        InstanceFormat::Dimacs => parse_dimacs(&text),
        InstanceFormat::Rudy => parse_rudy(&text),
    }
}

/// Default subgraph orders; order 4 is skipped for Max-Cut.
pub fn default_schedule(problem: Problem) -> Vec<usize> {
    match problem {
        Problem::MaxCut => vec![3, 5, 7],
        Problem::StableSet | Problem::Coloring => vec![2, 3, 4, 5, 6],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: Problem,
    pub instance: Option<PathBuf>,
    pub format: InstanceFormat,
    pub k_schedule: Vec<usize>,
    pub cycles: usize,
    pub escs_per_cycle: usize,
    pub bundle: BundleSettings,
    pub separation: SeparationSettings,
    /// Oracle tolerance used to certify each cycle's bound.
    pub certify_tol: f64,
    pub seed: u64,
    /// Start with the block on the whole vertex set (small graphs only).
    pub include_full_block: bool,
    pub known_optimum: Option<f64>,
}

impl RunConfig {
    pub fn new(problem: Problem) -> Self {
        Self {
            problem,
            instance: None,
            format: InstanceFormat::Dimacs,
            k_schedule: default_schedule(problem),
            cycles: 10,
            escs_per_cycle: 200,
            bundle: BundleSettings::default(),
            separation: SeparationSettings::default(),
            certify_tol: CERTIFY_TOL,
            seed: 42,
            include_full_block: false,
            known_optimum: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&k) = self
            .k_schedule
            .iter()
            .find(|&&k| !(2..=MAX_ATOM_ORDER).contains(&k))
        {
            return Err(Error::OrderOutOfRange {
                got: k,
                min: 2,
                max: MAX_ATOM_ORDER,
            });
        }
        if self.k_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("k schedule must be strictly ascending".into()));
        }
        if self.bundle.max_iters == 0 {
            return Err(Error::Config("bundle iterations must be positive".into()));
        }
        if !(self.bundle.mu_min > 0.0
            && self.bundle.mu_min <= self.bundle.mu0
            && self.bundle.mu0 <= self.bundle.mu_max)
        {
            return Err(Error::Config("need 0 < mu_min <= mu0 <= mu_max".into()));
        }
        Ok(())
    }
}

/// Loads `config.instance` and runs the cycles on it.
pub fn run_cycles(config: &RunConfig) -> Result<BoundReport> {
    let path = config
        .instance
        .as_ref()
        .ok_or_else(|| Error::Config("no instance path given".into()))?;
    let g = load_instance(path, config.format)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    run_cycles_on(&g, &name, config)
}

/// Runs the cutting-plane loop on `g`. Failures after the basic relaxation
/// yield a partial report with `complete = false`.
pub fn run_cycles_on(g: &WeightedGraph, name: &str, config: &RunConfig) -> Result<BoundReport> {
    config.validate()?;
    let start = Instant::now();
    let problem = config.problem;
    let base = sdp::build_basic(problem, g);
    let basic = sdp::solve(&base, config.certify_tol);
    if !basic.within(1e-5) {
        return Err(Error::Solver(format!(
            "basic relaxation did not converge (gap {:e})",
            basic.relative_gap
        )));
    }
    let mut report = BoundReport::new(name, problem, g, basic.value, config.known_optimum);

    let cache = AtomCache::new();
    let mut blocks = EscSet::new(problem);
    if config.include_full_block {
        blocks.push(EscBlock::new(problem, g, VertexSubset::full(g.order()), &cache)?)?;
    }
    let mut state = LoopState {
        y: DualPoint::zeros(&blocks),
        x: basic.x,
        best: basic.value,
        cycle: 0,
    };
    if !blocks.is_empty() {
        if let Err(e) = state.bundle_cycle(&mut report, &blocks, &base, config, 0, 0.0, start) {
            report.fail(e);
            return Ok(report);
        }
    }
    if config.cycles == 0 {
        report.finish(start);
        return Ok(report);
    }

    for (level, &k) in config.k_schedule.iter().enumerate() {
        for c in 0..config.cycles {
            let seed = config
                .seed
                .wrapping_add((level as u64) << 32)
                .wrapping_add(c as u64);
            let found = match separation::select_escs(
                &state.x,
                g,
                k,
                config.escs_per_cycle,
                &blocks,
                seed,
                &cache,
                &config.separation,
            ) {
                Ok(found) => found,
                Err(e) => {
                    report.fail(e);
                    return Ok(report);
                }
            };
            if found.is_empty() {
                break;
            }
            let start_distance = found[0].distance;
            for v in found {
                blocks.push(v.block)?;
            }
            if let Err(e) =
                state.bundle_cycle(&mut report, &blocks, &base, config, k, start_distance, start)
            {
                report.fail(e);
                return Ok(report);
            }
        }
        report.esb.push(LevelBound {
            k,
            bound: problem.user_bound(state.best),
            blocks: blocks.len(),
            constraints: blocks.total_constraints(),
        });
    }
    report.finish(start);
    Ok(report)
}

struct LoopState {
    y: DualPoint,
    /// Matrix handed to separation.
    x: nalgebra::DMatrix<f64>,
    /// Best certified value (maximize convention).
    best: f64,
    cycle: usize,
}

impl LoopState {
    #[allow(clippy::too_many_arguments)]
    fn bundle_cycle(
        &mut self,
        report: &mut BoundReport,
        blocks: &EscSet,
        base: &sdp::SdpProblem,
        config: &RunConfig,
        k: usize,
        start_distance: f64,
        clock: Instant,
    ) -> Result<()> {
        let cycle_start = Instant::now();
        let start_y = self.y.extended_to(blocks)?;
        let run = run_bundle(blocks, base, &start_y, &config.bundle)?;
        let certified = bundle::evaluate_dual(&run.best_y, blocks, base, config.certify_tol)?;
        // The certified re-evaluation and every bundle value are valid bounds.
        let cycle_value = certified.value.min(run.best_value);
        self.best = self.best.min(cycle_value);
        self.y = run.best_y.clone();
        self.x = run.aggregate_x.clone();
        self.cycle += 1;
        let problem = config.problem;
        let lowest = run
            .evaluated
            .iter()
            .chain(std::iter::once(&certified.value))
            .copied()
            .fold(f64::INFINITY, f64::min);
        report.rows.push(CycleRow {
            cycle: self.cycle,
            k,
            blocks: blocks.len(),
            constraints: blocks.total_constraints(),
            cycle_bound: problem.user_bound(cycle_value),
            bound: problem.user_bound(self.best),
            tightest_evaluated: problem.user_bound(lowest),
            distance_start: start_distance,
            distance_end: separation::max_distance(&self.x, blocks, config.separation.projection_tol),
            serious_steps: run.serious_steps,
            null_steps: run.null_steps,
            evaluations: run.evaluated.len(),
            max_qp_kkt: run.max_qp_kkt,
            seconds: cycle_start.elapsed().as_secs_f64(),
            elapsed: clock.elapsed().as_secs_f64(),
        });
        log::info!(
            "cycle {} k={} |J|={} bound={:.6}",
            self.cycle,
            k,
            blocks.len(),
            problem.user_bound(self.best)
        );
        report.final_bound = problem.user_bound(self.best);
        if let Some(msg) = run.aborted {
            return Err(Error::Solver(msg));
        }
        Ok(())
    }
}

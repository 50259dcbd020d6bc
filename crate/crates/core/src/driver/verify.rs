//! Brute-force checks on small graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{run_cycles_on, RunConfig};
use crate::bundle::BundleSettings;
use crate::error::{Error, Result};
use crate::graph::{Duplicates, WeightedGraph};
use crate::problem::Problem;
use crate::sdp::{self, CERTIFY_TOL};

/// Largest order accepted by [`verify_small`].
pub const MAX_VERIFY_ORDER: usize = 10;

/// Erdős–Rényi graph `G(n, p)`, deterministic in `seed`.
pub fn gnp(n: usize, p: f64, seed: u64) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v, 1.0));
            }
        }
    }
    WeightedGraph::new(n, edges, Duplicates::Collapse).expect("generated edges are valid")
}

/// `z_mc = max c^T L c` over `c` in `{-1, 1}^n`, four times the largest cut.
pub fn brute_force_maxcut(g: &WeightedGraph) -> f64 {
    let n = g.order();
    if n < 2 {
        return 0.0;
    }
    (0u64..1 << (n - 1))
        .map(|mask| {
            let signs: Vec<i8> = (0..n)
                .map(|i| if i > 0 && mask >> (i - 1) & 1 == 1 { -1 } else { 1 })
                .collect();
            4.0 * g.cut_weight(&signs)
        })
        .fold(0.0, f64::max)
}

fn neighbour_masks(g: &WeightedGraph) -> Vec<u64> {
    let mut masks = vec![0u64; g.order()];
    for e in g.edges() {
        masks[e.u] |= 1 << e.v;
        masks[e.v] |= 1 << e.u;
    }
    masks
}

/// Stability number by enumeration of all vertex subsets.
pub fn brute_force_alpha(g: &WeightedGraph) -> usize {
    let n = g.order();
    assert!(n < 32, "enumeration limited to fewer than 32 vertices");
    let nb = neighbour_masks(g);
    (0u64..1 << n)
        .filter(|&s| (0..n).all(|v| s >> v & 1 == 0 || nb[v] & s == 0))
        .map(|s| s.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

/// Chromatic number by backtracking over proper colorings.
pub fn brute_force_chi(g: &WeightedGraph) -> usize {
    let n = g.order();
    if n == 0 {
        return 0;
    }
    fn extend(v: usize, k: usize, colors: &mut [usize], g: &WeightedGraph) -> bool {
        if v == colors.len() {
            return true;
        }
        // Colors above the largest one used so far are interchangeable.
        let used = colors[..v].iter().copied().max().map_or(0, |c| c + 1);
        for c in 0..k.min(used + 1) {
            if (0..v).all(|u| colors[u] != c || !g.has_edge(u, v)) {
                colors[v] = c;
                if extend(v + 1, k, colors, g) {
                    return true;
                }
            }
        }
        false
    }
    let mut colors = vec![0; n];
    (1..=n)
        .find(|&k| extend(0, k, &mut colors, g))
        .expect("n colors always suffice")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCase {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub problem: Problem,
    pub exact: f64,
    pub basic: f64,
    pub bound: f64,
    /// Tightest bound among all evaluated dual points.
    pub tightest: f64,
    /// Coloring only: `theta` of the complement.
    pub theta_complement: Option<f64>,
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub cases: Vec<VerifyCase>,
    pub passed: bool,
}

/// Settings used by [`verify_small`]: the whole vertex set as a single block
/// and a long, tight bundle run. With every atom present the block terms make
/// `F` polyhedral near the optimum, where a small fixed prox weight converges
/// far faster than the adaptive rule.
pub fn verify_config(problem: Problem) -> RunConfig {
    RunConfig {
        k_schedule: Vec::new(),
        cycles: 0,
        include_full_block: true,
        bundle: BundleSettings {
            mu0: 0.1,
            mu_min: 0.1,
            mu_max: 0.1,
            max_iters: 300,
            tol: 1e-8,
            r_max: 50,
            oracle_tol: CERTIFY_TOL,
            ..BundleSettings::default()
        },
        ..RunConfig::new(problem)
    }
}

/// Runs the pipeline with the block `I = N` on `g` and checks it against the
/// enumerated optimum: equality within `1e-4` for Max-Cut and stable set,
/// `theta(complement) <= bound <= chi` for coloring.
pub fn verify_graph(g: &WeightedGraph, problem: Problem, seed: u64) -> Result<VerifyCase> {
    if g.order() > MAX_VERIFY_ORDER {
        return Err(Error::UnsupportedSize {
            got: g.order(),
            max: MAX_VERIFY_ORDER,
        });
    }
    let report = run_cycles_on(g, "verify", &verify_config(problem))?;
    let bound = report.final_bound;
    let tightest = report
        .rows
        .iter()
        .map(|r| r.tightest_evaluated)
        .fold(report.basic_bound, |a, b| match problem {
            Problem::Coloring => a.max(b),
            _ => a.min(b),
        });
    let (exact, theta_complement, passed, message) = match problem {
        Problem::MaxCut | Problem::StableSet => {
            let exact = if problem == Problem::MaxCut {
                brute_force_maxcut(g)
            } else {
                brute_force_alpha(g) as f64
            };
            let safe = tightest >= exact - 1e-6;
            let tight = (bound - exact).abs() <= 1e-4;
            let message = match (safe, tight) {
                (true, true) => "ok".to_string(),
                (false, _) => format!("bound {tightest} below optimum {exact}"),
                (true, false) => format!("bound {bound} differs from optimum {exact}"),
            };
            (exact, None, safe && tight, message)
        }
        Problem::Coloring => {
            let chi = brute_force_chi(g) as f64;
            let theta = sdp::solve(
                &sdp::build_basic(Problem::StableSet, &g.complement()),
                CERTIFY_TOL,
            )
            .value;
            let ok = theta <= bound + 1e-6 && bound <= chi + 1e-6;
            let message = if ok {
                "ok".to_string()
            } else {
                format!("expected {theta} <= {bound} <= {chi}")
            };
            (chi, Some(theta), ok, message)
        }
    };
    Ok(VerifyCase {
        seed,
        n: g.order(),
        m: g.edge_count(),
        problem,
        exact,
        basic: report.basic_bound,
        bound,
        tightest,
        theta_complement,
        passed,
        message,
    })
}

/// `trials` random `G(n, 1/2)` graphs, each checked for every problem in
/// `problems`.
pub fn verify_small(n: usize, trials: usize, seed: u64, problems: &[Problem]) -> Result<VerifyReport> {
    if n > MAX_VERIFY_ORDER {
        return Err(Error::UnsupportedSize {
            got: n,
            max: MAX_VERIFY_ORDER,
        });
    }
    let mut cases = Vec::new();
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let g = gnp(n, 0.5, s);
        for &problem in problems {
            cases.push(verify_graph(&g, problem, s)?);
        }
    }
    let passed = cases.iter().all(|c| c.passed);
    Ok(VerifyReport { cases, passed })
}

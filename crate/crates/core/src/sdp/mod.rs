//! Basic SDP relaxations and the dual-function oracle.
//!
//! All three relaxations are posed as maximization problems over a
//! spectrahedron: `<L, X>` over the elliptope for Max-Cut, the trace over the
//! theta body for stable set, and `-t` over the bordered coloring
//! spectrahedron. The stable set and coloring matrices carry the vertex block
//! at offset 1.

pub mod ipm;

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::esc::{shifted_cost, DualPoint, EscSet};
use crate::graph::WeightedGraph;
use crate::problem::Problem;
pub use ipm::{IpmSettings, SparseSym};

/// Oracle tolerance used inside bundle iterations.
pub const BUNDLE_TOL: f64 = 1e-6;
/// Tolerance used when certifying a final bound.
pub const CERTIFY_TOL: f64 = 1e-8;

/// `<A, X> = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub matrix: SparseSym,
    pub rhs: f64,
}

/// Parametrization `Y = base + sum_k v_k generators[k]` of the same affine
/// set the equality constraints describe. Used when it has fewer free
/// parameters than there are constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeForm {
    pub base: SparseSym,
    pub generators: Vec<SparseSym>,
}

/// Standard-form SDP `max <C, X> s.t. <A_i, X> = b_i, X psd`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    problem: Problem,
    dim: usize,
    cost: DMatrix<f64>,
    constraints: Arc<Vec<LinearConstraint>>,
    free_form: Option<Arc<FreeForm>>,
}

impl SdpProblem {
    pub fn new(problem: Problem, cost: DMatrix<f64>, constraints: Vec<LinearConstraint>) -> Self {
        Self {
            problem,
            dim: cost.nrows(),
            cost,
            constraints: Arc::new(constraints),
            free_form: None,
        }
    }

    pub fn with_free_form(mut self, free_form: FreeForm) -> Self {
        self.free_form = Some(Arc::new(free_form));
        self
    }

    /// Same feasible set, different objective.
    pub fn with_cost(&self, cost: DMatrix<f64>) -> Self {
        assert_eq!(cost.nrows(), self.dim, "cost dimension");
        Self {
            cost,
            ..self.clone()
        }
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertex_offset(&self) -> usize {
        self.problem.vertex_offset()
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn free_form(&self) -> Option<&FreeForm> {
        self.free_form.as_deref()
    }

    /// Size of the Schur complement the solver will factor.
    pub fn schur_size(&self) -> usize {
        match self.preferred_free_form() {
            Some(f) => f.generators.len(),
            None => self.constraints.len(),
        }
    }

    fn preferred_free_form(&self) -> Option<&FreeForm> {
        self.free_form
            .as_deref()
            .filter(|f| f.generators.len() < self.constraints.len())
    }

    /// Largest violation of the equality constraints at `x`.
    pub fn max_constraint_violation(&self, x: &DMatrix<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| (c.matrix.inner(x) - c.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// SDPA sparse format of the dual pair: `min b^T u s.t. sum u_i A_i - C psd`.
    pub fn to_sdpa(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\"{} relaxation\"", self.problem);
        let _ = writeln!(out, "{}", self.constraints.len());
        let _ = writeln!(out, "1");
        let _ = writeln!(out, "{}", self.dim);
        let rhs: Vec<String> = self.constraints.iter().map(|c| c.rhs.to_string()).collect();
        let _ = writeln!(out, "{}", rhs.join(" "));
        for i in 0..self.dim {
            for j in i..self.dim {
                if self.cost[(i, j)] != 0.0 {
                    let _ = writeln!(out, "0 1 {} {} {}", i + 1, j + 1, self.cost[(i, j)]);
                }
            }
        }
        for (k, c) in self.constraints.iter().enumerate() {
            for &(i, j, v) in c.matrix.entries() {
                let _ = writeln!(out, "{} 1 {} {} {}", k + 1, i + 1, j + 1, v);
            }
        }
        out
    }
}

/// Builds the basic relaxation of `problem` on `g`.
pub fn build_basic(problem: Problem, g: &WeightedGraph) -> SdpProblem {
    let n = g.order();
    match problem {
        Problem::MaxCut => {
            let constraints = (0..n)
                .map(|i| LinearConstraint {
                    matrix: SparseSym::new(vec![(i, i, 1.0)]),
                    rhs: 1.0,
                })
                .collect();
            SdpProblem::new(problem, g.laplacian(), constraints)
        }
        Problem::StableSet => {
            let mut cost = DMatrix::identity(n + 1, n + 1);
            cost[(0, 0)] = 0.0;
            let mut constraints = vec![LinearConstraint {
                matrix: SparseSym::new(vec![(0, 0, 1.0)]),
                rhs: 1.0,
            }];
            constraints.extend((1..=n).map(|i| LinearConstraint {
                matrix: SparseSym::new(vec![(0, i, 0.5), (i, i, -1.0)]),
                rhs: 0.0,
            }));
            constraints.extend(edge_zeros(g));
            let free = FreeForm {
                base: SparseSym::new(vec![(0, 0, 1.0)]),
                generators: (1..=n)
                    .map(|i| SparseSym::new(vec![(i, i, 1.0), (0, i, 1.0)]))
                    .chain(non_edge_generators(g))
                    .collect(),
            };
            SdpProblem::new(problem, cost, constraints).with_free_form(free)
        }
        Problem::Coloring => {
            let mut cost = DMatrix::zeros(n + 1, n + 1);
            cost[(0, 0)] = -1.0;
            let mut constraints: Vec<LinearConstraint> = (1..=n)
                .map(|i| LinearConstraint {
                    matrix: SparseSym::new(vec![(0, i, 0.5)]),
                    rhs: 1.0,
                })
                .collect();
            constraints.extend((1..=n).map(|i| LinearConstraint {
                matrix: SparseSym::new(vec![(i, i, 1.0)]),
                rhs: 1.0,
            }));
            constraints.extend(edge_zeros(g));
            let free = FreeForm {
                base: SparseSym::new(
                    (1..=n)
                        .flat_map(|i| [(0, i, 1.0), (i, i, 1.0)])
                        .collect(),
                ),
                generators: std::iter::once(SparseSym::new(vec![(0, 0, 1.0)]))
                    .chain(non_edge_generators(g))
                    .collect(),
            };
            SdpProblem::new(problem, cost, constraints).with_free_form(free)
        }
    }
}

fn edge_zeros(g: &WeightedGraph) -> impl Iterator<Item = LinearConstraint> + '_ {
    g.edges().iter().map(|e| LinearConstraint {
        matrix: SparseSym::new(vec![(e.u + 1, e.v + 1, 0.5)]),
        rhs: 0.0,
    })
}

fn non_edge_generators(g: &WeightedGraph) -> impl Iterator<Item = SparseSym> + '_ {
    let n = g.order();
    (0..n)
        .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !g.has_edge(i, j))
        .map(|(i, j)| SparseSym::new(vec![(i + 1, j + 1, 1.0)]))
}

/// Solution of one SDP solve.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Objective bound from the certifying side of the primal-dual pair;
    /// at least the true optimum up to the reported residuals.
    pub value: f64,
    /// `<C, X*>` at the returned maximizer.
    pub primal_value: f64,
    /// Maximizer `X*` (full SDP matrix, including the border row if any).
    pub x: DMatrix<f64>,
    /// Stacked subgradient `g = (-extract(X*_I))_I`; empty from [`solve`].
    pub subgradient: DVector<f64>,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl OracleResult {
    /// Primal-dual residuals within `tol`.
    pub fn within(&self, tol: f64) -> bool {
        self.primal_infeasibility <= tol && self.dual_infeasibility <= tol && self.relative_gap <= tol
    }
}

fn ipm_settings(tol: f64) -> IpmSettings {
    IpmSettings {
        tol,
        ..IpmSettings::default()
    }
}

/// Solves the SDP with the interior-point method, through whichever of the
/// constraint form and the free-parameter form has the smaller Schur system.
pub fn solve(p: &SdpProblem, tol: f64) -> OracleResult {
    match p.preferred_free_form() {
        Some(free) => solve_free(p, free, tol),
        None => solve_constrained(p, tol),
    }
}

fn solve_constrained(p: &SdpProblem, tol: f64) -> OracleResult {
    let matrices: Vec<SparseSym> = p.constraints.iter().map(|c| c.matrix.clone()).collect();
    let rhs: Vec<f64> = p.constraints.iter().map(|c| c.rhs).collect();
    let sol = ipm::solve(
        &ipm::StandardSdp {
            cost: &p.cost,
            constraints: &matrices,
            rhs: &rhs,
        },
        &ipm_settings(tol),
    );
    OracleResult {
        value: sol.dual_objective,
        primal_value: sol.primal_objective,
        x: sol.x,
        subgradient: DVector::zeros(0),
        primal_infeasibility: sol.primal_infeasibility,
        dual_infeasibility: sol.dual_infeasibility,
        relative_gap: sol.relative_gap,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

// max <C, Y> over Y = F0 + sum v_k F_k psd is the dual side of
// max <-F0, W> s.t. <F_k, W> = -<C, F_k>, with Y the dual slack.
fn solve_free(p: &SdpProblem, free: &FreeForm, tol: f64) -> OracleResult {
    let cost = -free.base.to_dense(p.dim);
    let rhs: Vec<f64> = free.generators.iter().map(|f| -f.inner(&p.cost)).collect();
    let sol = ipm::solve(
        &ipm::StandardSdp {
            cost: &cost,
            constraints: &free.generators,
            rhs: &rhs,
        },
        &ipm_settings(tol),
    );
    let mut y = free.base.to_dense(p.dim);
    for (f, &v) in free.generators.iter().zip(sol.u.iter()) {
        f.add_to(&mut y, v);
    }
    let offset = free.base.inner(&p.cost);
    OracleResult {
        value: offset - sol.primal_objective,
        primal_value: p.cost.dot(&y),
        x: y,
        subgradient: DVector::zeros(0),
        primal_infeasibility: sol.dual_infeasibility,
        dual_infeasibility: sol.primal_infeasibility,
        relative_gap: sol.relative_gap,
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

/// Evaluates `h(y) = max_X <C - sum_I P_I^T M_I(y_I), X>` and the subgradient
/// `g_I = -M_I^T P_I(X*)`.
pub fn evaluate_h(y: &DualPoint, blocks: &EscSet, base: &SdpProblem, tol: f64) -> Result<OracleResult> {
    if y.len() != blocks.total_constraints() {
        return Err(crate::Error::Dimension(format!(
            "dual point of length {} for {} constraints",
            y.len(),
            blocks.total_constraints()
        )));
    }
    let offset = base.vertex_offset();
    let shifted = shifted_cost(base.cost(), y, blocks, offset);
    let mut result = solve(&base.with_cost(shifted), tol);
    let mut g = DVector::zeros(blocks.total_constraints());
    for (i, block) in blocks.blocks().iter().enumerate() {
        let range = blocks.range(i);
        g.rows_mut(range.start, range.len())
            .copy_from(&(-block.extract_from_full(&result.x, offset)));
    }
    result.subgradient = g;
    Ok(result)
}

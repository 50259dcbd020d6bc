//! Proximal bundle method for `F(y) = h(y) + sum_I max_i [D_I(y_I)]_i`.
//!
//! Only `h` is approximated by cutting planes; the piecewise-linear block
//! terms enter the trial subproblem exactly.

pub mod qp;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::esc::{DualPoint, EscSet};
use crate::sdp::{self, OracleResult, SdpProblem};
pub use qp::{solve_trial_qp, Plane, QpSettings, QpSolution, TrialQp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleSettings {
    pub mu0: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub r_max: usize,
    pub m_ss: f64,
    /// Oracle evaluations per run, including the starting point.
    pub max_iters: usize,
    /// Relative stopping tolerance on the predicted decrease.
    pub tol: f64,
    pub oracle_tol: f64,
    /// Fraction of the predicted decrease that counts as a strong serious step.
    pub strong_decrease: f64,
    /// Consecutive null steps after which `mu` doubles.
    pub null_limit: usize,
}

impl Default for BundleSettings {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            mu_min: 1e-4,
            mu_max: 1e4,
            r_max: 25,
            m_ss: 0.1,
            max_iters: 30,
            tol: 1e-6,
            oracle_tol: sdp::BUNDLE_TOL,
            strong_decrease: 0.7,
            null_limit: 3,
        }
    }
}

/// One stored oracle answer.
#[derive(Debug, Clone)]
pub struct BundleElement {
    pub y: DVector<f64>,
    /// Value of the plane at `y`: `<C - M(y), X>` for the returned maximizer,
    /// which never exceeds `h(y)`.
    pub h: f64,
    pub g: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl BundleElement {
    pub fn from_oracle(y: &DVector<f64>, oracle: &OracleResult) -> Self {
        Self {
            y: y.clone(),
            h: oracle.primal_value,
            g: oracle.subgradient.clone(),
            x: oracle.x.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Serious,
    Null,
}

/// Serious iff the achieved decrease is at least `m_ss` times the decrease
/// predicted by the model.
pub fn step_decision(f_center: f64, f_trial: f64, model_trial: f64, m_ss: f64) -> Step {
    if f_center - f_trial >= m_ss * (f_center - model_trial) && f_trial < f_center {
        Step::Serious
    } else {
        Step::Null
    }
}

/// Data of an evaluated trial point.
#[derive(Debug, Clone)]
pub struct Trial {
    pub element: BundleElement,
    /// Oracle bound `h(y)`.
    pub h: f64,
    /// `F(y)`.
    pub f: f64,
    /// Model value at `y` used to predict the decrease.
    pub model: f64,
}

#[derive(Debug, Clone)]
pub struct BundleState {
    pub center: DVector<f64>,
    /// `h` at the center (oracle bound side).
    pub center_h: f64,
    pub center_f: f64,
    pub elements: Vec<BundleElement>,
    /// Index of the element evaluated at the center.
    pub center_index: usize,
    pub mu: f64,
    pub consecutive_nulls: usize,
}

impl BundleState {
    pub fn new(first: BundleElement, h: f64, f: f64, mu: f64) -> Self {
        Self {
            center: first.y.clone(),
            center_h: h,
            center_f: f,
            elements: vec![first],
            center_index: 0,
            mu,
            consecutive_nulls: 0,
        }
    }

    /// `e_j = h(center) - h_j - <g_j, center - y_j>`.
    pub fn linearization_errors(&self) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| self.center_h - e.h - e.g.dot(&(&self.center - &e.y)))
            .collect()
    }

    /// Cutting planes expressed around the current center.
    pub fn planes(&self) -> Vec<Plane<'_>> {
        self.elements
            .iter()
            .zip(self.linearization_errors())
            .map(|(e, err)| Plane {
                offset: self.center_h - err,
                gradient: &e.g,
            })
            .collect()
    }

    /// Cutting-plane model of `h` at `y`.
    pub fn model_h(&self, y: &DVector<f64>) -> f64 {
        self.elements
            .iter()
            .map(|e| e.h + e.g.dot(&(y - &e.y)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Convex combination of the elements with weights `alpha`, stored as an
    /// element at the center. Its plane is the same combination of planes.
    pub fn aggregate(&self, alpha: &[f64]) -> BundleElement {
        let total: f64 = alpha.iter().map(|a| a.max(0.0)).sum();
        let errors = self.linearization_errors();
        let first = &self.elements[0];
        let mut g = DVector::zeros(first.g.len());
        let mut x = DMatrix::zeros(first.x.nrows(), first.x.ncols());
        let mut err = 0.0;
        for ((e, &a), &ej) in self.elements.iter().zip(alpha).zip(&errors) {
            let a = a.max(0.0) / total;
            g.axpy(a, &e.g, 1.0);
            x += &e.x * a;
            err += a * ej;
        }
        BundleElement {
            y: self.center.clone(),
            h: self.center_h - err,
            g,
            x,
        }
    }

    /// Appends the trial, moves the center on a serious step, adapts `mu`
    /// and shrinks the bundle to `settings.r_max` elements. `alpha` holds
    /// the trial subproblem's plane multipliers for the elements present
    /// before the call.
    pub fn update(&mut self, step: Step, trial: Trial, alpha: &[f64], settings: &BundleSettings) {
        let predicted = self.center_f - trial.model;
        let actual = self.center_f - trial.f;
        let cap = settings.r_max.max(3);
        let aggregate = (self.elements.len() + 1 > cap && alpha.len() == self.elements.len())
            .then(|| self.aggregate(alpha));
        let mut weights: Vec<f64> = alpha.to_vec();
        weights.resize(self.elements.len(), 0.0);
        self.elements.push(trial.element);
        weights.push(f64::INFINITY);
        let newest = self.elements.len() - 1;
        match step {
            Step::Serious => {
                self.center = self.elements[newest].y.clone();
                self.center_h = trial.h;
                self.center_f = trial.f;
                self.center_index = newest;
                self.consecutive_nulls = 0;
                if actual >= settings.strong_decrease * predicted {
                    self.mu = (self.mu / 2.0).max(settings.mu_min);
                }
            }
            Step::Null => {
                self.consecutive_nulls += 1;
                if self.consecutive_nulls >= settings.null_limit {
                    self.mu = (self.mu * 2.0).min(settings.mu_max);
                    self.consecutive_nulls = 0;
                }
            }
        }
        if self.elements.len() <= cap {
            return;
        }
        // Inactive planes go first, largest linearization error first. If
        // active planes must go too, they are replaced by their aggregate.
        let errors = self.linearization_errors();
        let protected = |j: usize| j == newest || j == self.center_index;
        let mut order: Vec<usize> = (0..self.elements.len()).filter(|&j| !protected(j)).collect();
        order.sort_by(|&a, &b| {
            let inactive = |j: usize| weights[j] <= 1e-12;
            inactive(b)
                .cmp(&inactive(a))
                .then(weights[a].total_cmp(&weights[b]))
                .then(errors[b].total_cmp(&errors[a]))
        });
        let excess = self.elements.len() - cap;
        let mut drop: Vec<usize> = order[..excess].to_vec();
        let mut replacement = None;
        if drop.iter().any(|&j| weights[j] > 1e-12) {
            if let Some(agg) = aggregate {
                if excess < order.len() {
                    drop.push(order[excess]);
                }
                replacement = Some(agg);
            }
        }
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for j in drop {
            self.elements.remove(j);
            if j < self.center_index {
                self.center_index -= 1;
            }
        }
        self.elements.extend(replacement);
    }
}

/// `F(y)` together with the oracle answer at `y`.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub value: f64,
    pub oracle: OracleResult,
}

pub fn evaluate_dual(
    y: &DualPoint,
    blocks: &EscSet,
    base: &SdpProblem,
    tol: f64,
) -> Result<DualEvaluation> {
    let oracle = sdp::evaluate_h(y, blocks, base, tol)?;
    Ok(DualEvaluation {
        value: oracle.value + blocks.max_terms(y),
        oracle,
    })
}

/// `h(y) + sum_I max_i [D_I(y_I)]_i`, a valid bound for every `y`.
pub fn dual_value(y: &DualPoint, blocks: &EscSet, base: &SdpProblem, tol: f64) -> Result<f64> {
    Ok(evaluate_dual(y, blocks, base, tol)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub f_center: f64,
    pub f_trial: f64,
    pub model: f64,
    pub step: Step,
    pub mu: f64,
    pub subgradient_norm: f64,
    pub oracle_seconds: f64,
    pub qp_kkt: f64,
    pub qp_iterations: usize,
    pub bundle_size: usize,
}

#[derive(Debug, Clone)]
pub struct BundleRun {
    pub best_y: DualPoint,
    /// Smallest `F` over all evaluated points.
    pub best_value: f64,
    /// Every value of `F` evaluated, in order.
    pub evaluated: Vec<f64>,
    pub center: DualPoint,
    /// Maximizer returned at the last evaluated point.
    pub last_x: DMatrix<f64>,
    /// Convex combination of the bundle maximizers weighted by the last
    /// trial subproblem's plane multipliers.
    pub aggregate_x: DMatrix<f64>,
    pub trace: Vec<TraceRecord>,
    pub serious_steps: usize,
    pub null_steps: usize,
    pub max_qp_kkt: f64,
    /// Set when a failure cut the run short.
    pub aborted: Option<String>,
}

/// Minimizes `F` from `start`, evaluating the oracle at most
/// `settings.max_iters` times.
pub fn run_bundle(
    blocks: &EscSet,
    base: &SdpProblem,
    start: &DualPoint,
    settings: &BundleSettings,
) -> Result<BundleRun> {
    let clock = Instant::now();
    let first = evaluate_dual(start, blocks, base, settings.oracle_tol)?;
    let oracle_seconds = clock.elapsed().as_secs_f64();
    let element = BundleElement::from_oracle(start.values(), &first.oracle);
    let mut run = BundleRun {
        best_y: start.clone(),
        best_value: first.value,
        evaluated: vec![first.value],
        center: start.clone(),
        last_x: first.oracle.x.clone(),
        aggregate_x: first.oracle.x.clone(),
        trace: vec![TraceRecord {
            iter: 0,
            f_center: first.value,
            f_trial: first.value,
            model: first.value,
            step: Step::Serious,
            mu: settings.mu0,
            subgradient_norm: element.g.norm(),
            oracle_seconds,
            qp_kkt: 0.0,
            qp_iterations: 0,
            bundle_size: 1,
        }],
        serious_steps: 0,
        null_steps: 0,
        max_qp_kkt: 0.0,
        aborted: None,
    };
    if blocks.is_empty() {
        return Ok(run);
    }
    let mut state = BundleState::new(element, first.oracle.value, first.value, settings.mu0);

    for iter in 1..settings.max_iters {
        let planes = state.planes();
        let sol = match solve_trial_qp(
            &TrialQp {
                mu: state.mu,
                center: &state.center,
                planes: &planes,
                blocks,
            },
            &QpSettings::default(),
        ) {
            Ok(sol) => sol,
            Err(e) => {
                run.aborted = Some(e.to_string());
                break;
            }
        };
        drop(planes);
        run.max_qp_kkt = run.max_qp_kkt.max(sol.kkt_residual);
        let mut aggregate = DMatrix::zeros(run.last_x.nrows(), run.last_x.ncols());
        for (e, &a) in state.elements.iter().zip(sol.plane_weights.iter()) {
            aggregate += &e.x * a.max(0.0);
        }
        run.aggregate_x = aggregate / sol.plane_weights.map(|a| a.max(0.0)).sum();

        let predicted = state.center_f - sol.model;
        if predicted <= settings.tol * (1.0 + state.center_f.abs()) {
            break;
        }
        let trial_y = DualPoint::from_values(blocks, sol.y.clone())?;
        let clock = Instant::now();
        let eval = match evaluate_dual(&trial_y, blocks, base, settings.oracle_tol) {
            Ok(eval) => eval,
            Err(e) => {
                run.aborted = Some(e.to_string());
                break;
            }
        };
        let oracle_seconds = clock.elapsed().as_secs_f64();
        run.evaluated.push(eval.value);
        if eval.value < run.best_value {
            run.best_value = eval.value;
            run.best_y = trial_y.clone();
        }
        run.last_x = eval.oracle.x.clone();

        let step = step_decision(state.center_f, eval.value, sol.model, settings.m_ss);
        match step {
            Step::Serious => run.serious_steps += 1,
            Step::Null => run.null_steps += 1,
        }
        let element = BundleElement::from_oracle(&sol.y, &eval.oracle);
        let alpha: Vec<f64> = sol.plane_weights.iter().copied().collect();
        let subgradient_norm = element.g.norm();
        let f_center = state.center_f;
        state.update(
            step,
            Trial {
                element,
                h: eval.oracle.value,
                f: eval.value,
                model: sol.model,
            },
            &alpha,
            settings,
        );
        run.trace.push(TraceRecord {
            iter,
            f_center,
            f_trial: eval.value,
            model: sol.model,
            step,
            mu: state.mu,
            subgradient_norm,
            oracle_seconds,
            qp_kkt: sol.kkt_residual,
            qp_iterations: sol.iterations,
            bundle_size: state.elements.len(),
        });
    }
    run.center = DualPoint::from_values(blocks, state.center.clone())?;
    Ok(run)
}

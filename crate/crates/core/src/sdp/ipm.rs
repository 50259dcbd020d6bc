//! Dense primal-dual interior-point method for
//!
//! ```text
//!   max <C, X>  s.t.  <A_k, X> = b_k,  X psd
//!   min b^T u   s.t.  Z = sum_k u_k A_k - C psd
//! ```
//!
//! Infeasible start, HKM search direction, Mehrotra predictor-corrector.
//! The constraint matrices are sparse; the Schur complement is dense.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Sparse symmetric matrix stored by its upper-triangle entries `(i, j, v)`,
/// `i <= j`; an off-diagonal entry stands for both `(i, j)` and `(j, i)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new(entries: Vec<(usize, usize, f64)>) -> Self {
        let entries = entries
            .into_iter()
            .map(|(i, j, v)| (i.min(j), i.max(j), v))
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `<A, X>` for symmetric `X`.
    pub fn inner(&self, x: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { 2.0 * v * x[(i, j)] })
            .sum()
    }

    /// `<A, G>` for a possibly unsymmetric `G`.
    fn inner_general(&self, g: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * g[(i, i)]
                } else {
                    v * (g[(i, j)] + g[(j, i)])
                }
            })
            .sum()
    }

    /// `M += scale * A`.
    pub fn add_to(&self, m: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += scale * v;
            if i != j {
                m[(j, i)] += scale * v;
            }
        }
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        self.add_to(&mut m, 1.0);
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 100,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmSolution {
    pub x: DMatrix<f64>,
    pub u: DVector<f64>,
    pub z: DMatrix<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Residuals {
    dual: DMatrix<f64>,
    primal_objective: f64,
    dual_objective: f64,
    primal_infeasibility: f64,
    dual_infeasibility: f64,
    relative_gap: f64,
}

impl Residuals {
    fn merit(&self) -> f64 {
        self.relative_gap
            .max(self.primal_infeasibility)
            .max(self.dual_infeasibility)
    }
}

pub struct StandardSdp<'a> {
    pub cost: &'a DMatrix<f64>,
    pub constraints: &'a [SparseSym],
    pub rhs: &'a [f64],
}

impl StandardSdp<'_> {
    fn dim(&self) -> usize {
        self.cost.nrows()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|a| a.inner(x)))
    }

    fn adjoint(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (a, &uk) in self.constraints.iter().zip(u.iter()) {
            if uk != 0.0 {
                a.add_to(&mut m, uk);
            }
        }
        m
    }

    fn residuals(&self, x: &DMatrix<f64>, u: &DVector<f64>, z: &DMatrix<f64>) -> Residuals {
        let b = DVector::from_column_slice(self.rhs);
        let primal = &b - self.apply(x);
        let dual = self.adjoint(u) - self.cost - z;
        let primal_objective = self.cost.dot(x);
        let dual_objective = b.dot(u);
        Residuals {
            primal_infeasibility: primal.norm() / (1.0 + b.norm()),
            dual_infeasibility: dual.norm() / (1.0 + self.cost.norm()),
            relative_gap: (primal_objective - dual_objective).abs()
                / (1.0 + primal_objective.abs() + dual_objective.abs()),
            dual,
            primal_objective,
            dual_objective,
        }
    }
}

/// Largest step `alpha` keeping `x + alpha * dx` positive semidefinite.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(chol) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let mut w = dx.clone();
    l.solve_lower_triangular_mut(&mut w);
    let mut wt = w.transpose();
    l.solve_lower_triangular_mut(&mut wt);
    let wt = (&wt + wt.transpose()) * 0.5;
    let min_eig = wt.symmetric_eigenvalues().min();
    if min_eig >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min_eig
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn factor_schur(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().amax().max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(chol) = Cholesky::new(m.clone()) {
            return Some(chol);
        }
        let next = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        for i in 0..m.nrows() {
            m[(i, i)] += next - shift;
        }
        shift = next;
    }
    None
}

/// Builds the HKM Schur complement `M_kl = <A_k, X A_l Z^-1>`.
fn schur_complement(
    full: &[Vec<(usize, usize, f64)>],
    x: &DMatrix<f64>,
    zinv: &DMatrix<f64>,
) -> DMatrix<f64> {
    let m = full.len();
    let mut schur = DMatrix::zeros(m, m);
    for k in 0..m {
        for l in k..m {
            let mut acc = 0.0;
            for &(a, b, v) in &full[k] {
                for &(c, e, w) in &full[l] {
                    acc += v * w * x[(a, c)] * zinv[(e, b)];
                }
            }
            schur[(k, l)] = acc;
            schur[(l, k)] = acc;
        }
    }
    schur
}

pub fn solve(sdp: &StandardSdp<'_>, settings: &IpmSettings) -> IpmSolution {
    let d = sdp.dim();
    let m = sdp.constraints.len();
    let df = d as f64;
    let full: Vec<_> = sdp.constraints.iter().map(SparseSym::full_entries).collect();

    let max_a = sdp
        .constraints
        .iter()
        .map(SparseSym::frobenius_norm)
        .fold(0.0, f64::max);
    let xi = sdp
        .constraints
        .iter()
        .zip(sdp.rhs)
        .map(|(a, &b)| df * (1.0 + b.abs()) / (1.0 + a.frobenius_norm()))
        .fold(10f64.max(df.sqrt()), f64::max);
    let eta = 10f64.max(df.sqrt()).max(max_a).max(sdp.cost.norm());

    let mut x = DMatrix::identity(d, d) * xi;
    let mut z = DMatrix::identity(d, d) * eta;
    let mut u = DVector::zeros(m);

    let mut best: Option<(f64, IpmSolution)> = None;
    let mut iterations = 0;
    loop {
        let res = sdp.residuals(&x, &u, &z);
        let merit = res.merit();
        let converged = merit <= settings.tol;
        if best.as_ref().is_none_or(|(b, _)| merit < *b) || converged {
            best = Some((
                merit,
                IpmSolution {
                    x: x.clone(),
                    u: u.clone(),
                    z: z.clone(),
                    primal_objective: res.primal_objective,
                    dual_objective: res.dual_objective,
                    primal_infeasibility: res.primal_infeasibility,
                    dual_infeasibility: res.dual_infeasibility,
                    relative_gap: res.relative_gap,
                    iterations,
                    converged,
                },
            ));
        }
        if converged || iterations >= settings.max_iterations {
            break;
        }
        iterations += 1;

        let mu = x.dot(&z) / df;
        let Some(zinv) = Cholesky::new(z.clone()).map(|c| c.inverse()) else {
            break;
        };
        let Some(schur) = factor_schur(schur_complement(&full, &x, &zinv)) else {
            break;
        };
        // Terms shared by predictor and corrector.
        let x_rd_zinv = &x * &res.dual * &zinv;
        let b = DVector::from_column_slice(sdp.rhs);

        let direction = |sigma_mu: f64, corrector: Option<&DMatrix<f64>>| {
            let mut target = &zinv * sigma_mu - &x_rd_zinv;
            if let Some(c) = corrector {
                target -= c;
            }
            let rhs = DVector::from_iterator(
                m,
                sdp.constraints.iter().map(|a| a.inner_general(&target)),
            ) - &b;
            let du = schur.solve(&rhs);
            let dz = sdp.adjoint(&du) + &res.dual;
            // dX = sigma mu Z^-1 - X - X dZ Z^-1 - corrector
            let mut dx = &target + &x_rd_zinv - &x - &x * &dz * &zinv;
            symmetrize(&mut dx);
            (dx, du, dz)
        };

        let (dx_aff, _, dz_aff) = direction(0.0, None);
        let ap = (settings.step_fraction * max_step(&x, &dx_aff)).min(1.0);
        let ad = (settings.step_fraction * max_step(&z, &dz_aff)).min(1.0);
        let mu_aff = (&x + &dx_aff * ap).dot(&(&z + &dz_aff * ad)) / df;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let corrector = &dx_aff * &dz_aff * &zinv;

        let (dx, du, dz) = direction(sigma * mu, Some(&corrector));
        let ap = (settings.step_fraction * max_step(&x, &dx)).min(1.0);
        let ad = (settings.step_fraction * max_step(&z, &dz)).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        x += &dx * ap;
        z += &dz * ad;
        u += &du * ad;
        symmetrize(&mut x);
        symmetrize(&mut z);
    }
    let (_, mut solution) = best.expect("at least one iterate is recorded");
    solution.iterations = iterations;
    solution
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_constraints(n: usize) -> Vec<SparseSym> {
        (0..n).map(|i| SparseSym::new(vec![(i, i, 1.0)])).collect()
    }

    #[test]
    fn maxcut_k2() {
        let cost = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let cons = diag_constraints(2);
        let sol = solve(
            &StandardSdp {
                cost: &cost,
                constraints: &cons,
                rhs: &[1.0, 1.0],
            },
            &IpmSettings::default(),
        );
        assert!(sol.converged);
        assert!((sol.primal_objective - 4.0).abs() < 1e-7);
        assert!((sol.dual_objective - 4.0).abs() < 1e-7);
        assert!((sol.x[(0, 1)] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn maxcut_triangle() {
        let cost = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { -1.0 });
        let cons = diag_constraints(3);
        let sol = solve(
            &StandardSdp {
                cost: &cost,
                constraints: &cons,
                rhs: &[1.0; 3],
            },
            &IpmSettings::default(),
        );
        assert!(sol.converged);
        assert!((sol.dual_objective - 9.0).abs() < 1e-7);
    }

    #[test]
    fn sparse_inner_products() {
        let a = SparseSym::new(vec![(1, 0, 0.5), (2, 2, -1.0)]);
        let x = DMatrix::from_fn(3, 3, |i, j| (i + j + 1) as f64);
        assert_eq!(a.inner(&x), 2.0 - 5.0);
        assert_eq!(a.inner(&x), a.to_dense(3).dot(&x));
        assert!((a.frobenius_norm() - a.to_dense(3).norm()).abs() < 1e-15);
    }
}

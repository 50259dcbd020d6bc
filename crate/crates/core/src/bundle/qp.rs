//! Trial-point subproblem
//!
//! ```text
//! min  w + sum_I v_I + mu/2 |y - c|^2
//! s.t. w   >= h_j + <g_j, y - y_j>      for every plane j
//!      v_I >= [D_I(y_I)]_i              for every block I and atom i
//! ```
//!
//! solved by a primal-dual interior-point method in `d = y - c`. The normal
//! matrix is block diagonal over `(d_I, v_I)` plus one rank-one term per
//! plane, so each Newton step factors the small per-block matrices and a
//! bordered system whose size is the number of planes.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::esc::EscSet;

/// Cutting plane `y -> offset + <gradient, y - center>`.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub offset: f64,
    pub gradient: &'a DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrialQp<'a> {
    pub mu: f64,
    pub center: &'a DVector<f64>,
    pub planes: &'a [Plane<'a>],
    pub blocks: &'a EscSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Target for scaled residuals and mean complementarity.
    pub tol: f64,
    /// Largest KKT residual still accepted when the iteration limit is hit.
    pub accept: f64,
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            accept: 1e-7,
            max_iterations: 150,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub y: DVector<f64>,
    /// Value of the plane model at `y`.
    pub w: f64,
    /// `max_i [D_I(y_I)]_i` per block.
    pub v: DVector<f64>,
    /// `w + sum v`: the cutting-plane model of the dual function at `y`.
    pub model: f64,
    /// `model + mu/2 |y - center|^2`.
    pub objective: f64,
    /// Multipliers of the planes; a point of the unit simplex.
    pub plane_weights: DVector<f64>,
    /// Multipliers of the atom constraints, one simplex point per block.
    pub atom_weights: Vec<DVector<f64>>,
    /// Largest of stationarity, simplex and complementarity residuals.
    pub kkt_residual: f64,
    pub iterations: usize,
}

struct Layout<'a> {
    ranges: Vec<Range<usize>>,
    rows: Vec<&'a DMatrix<f64>>,
}

impl Layout<'_> {
    fn len(&self) -> usize {
        self.ranges.len()
    }
}

/// Vector over the primal variables `(d, w, v)`.
#[derive(Clone)]
struct Prim {
    d: DVector<f64>,
    w: f64,
    v: DVector<f64>,
}

impl Prim {
    fn amax(&self) -> f64 {
        self.d.amax().max(self.w.abs()).max(self.v.amax())
    }

    fn axpy(&mut self, a: f64, o: &Prim) {
        self.d.axpy(a, &o.d, 1.0);
        self.w += a * o.w;
        self.v.axpy(a, &o.v, 1.0);
    }
}

/// Vector over the constraints: planes first, then atoms block by block.
#[derive(Clone)]
struct Cons {
    p: DVector<f64>,
    a: Vec<DVector<f64>>,
}

impl Cons {
    fn zip(&self, o: &Cons, f: impl Fn(f64, f64) -> f64 + Copy) -> Cons {
        Cons {
            p: self.p.zip_map(&o.p, f),
            a: self.a.iter().zip(&o.a).map(|(x, y)| x.zip_map(y, f)).collect(),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Cons {
        Cons {
            p: self.p.map(f),
            a: self.a.iter().map(|x| x.map(f)).collect(),
        }
    }

    fn dot(&self, o: &Cons) -> f64 {
        self.p.dot(&o.p) + self.a.iter().zip(&o.a).map(|(x, y)| x.dot(y)).sum::<f64>()
    }

    fn amax(&self) -> f64 {
        self.a.iter().map(|x| x.amax()).fold(self.p.amax(), f64::max)
    }

    fn len(&self) -> usize {
        self.p.len() + self.a.iter().map(|x| x.len()).sum::<usize>()
    }

    fn axpy(&mut self, a: f64, o: &Cons) {
        self.p.axpy(a, &o.p, 1.0);
        for (x, y) in self.a.iter_mut().zip(&o.a) {
            x.axpy(a, y, 1.0);
        }
    }

    /// Largest `t <= inf` with `self + t dir >= 0`.
    fn max_step(&self, dir: &Cons) -> f64 {
        let step = |x: &DVector<f64>, dx: &DVector<f64>| {
            x.iter()
                .zip(dx.iter())
                .filter(|(_, &d)| d < 0.0)
                .map(|(&x, &d)| -x / d)
                .fold(f64::INFINITY, f64::min)
        };
        self.a
            .iter()
            .zip(&dir.a)
            .map(|(x, d)| step(x, d))
            .fold(step(&self.p, &dir.p), f64::min)
    }
}

#[derive(Clone)]
struct Point {
    x: Prim,
    s: Cons,
    z: Cons,
}

#[derive(Clone)]
struct Step {
    x: Prim,
    s: Cons,
    z: Cons,
}

struct Problem<'a> {
    mu: f64,
    planes: &'a [Plane<'a>],
    layout: Layout<'a>,
    /// Right-hand sides: plane offsets and `D_I(center_I)`.
    c: Cons,
}

impl Problem<'_> {
    /// Rows `w - <g_j, d>` and `v_I - <a_{I,i}, d_I>`.
    fn apply_a(&self, x: &Prim) -> Cons {
        Cons {
            p: DVector::from_iterator(
                self.planes.len(),
                self.planes.iter().map(|p| x.w - p.gradient.dot(&x.d)),
            ),
            a: (0..self.layout.len())
                .map(|i| {
                    let r = &self.layout.ranges[i];
                    let rows = self.layout.rows[i];
                    DVector::from_element(rows.nrows(), x.v[i]) - rows * x.d.rows(r.start, r.len())
                })
                .collect(),
        }
    }

    fn apply_at(&self, z: &Cons) -> Prim {
        let mut d = DVector::zeros(self.layout.ranges.last().map_or(0, |r| r.end));
        for (pl, &a) in self.planes.iter().zip(z.p.iter()) {
            d.axpy(-a, pl.gradient, 1.0);
        }
        for (i, za) in z.a.iter().enumerate() {
            let r = &self.layout.ranges[i];
            let mut seg = d.rows_mut(r.start, r.len());
            seg -= self.layout.rows[i].tr_mul(za);
        }
        Prim {
            d,
            w: z.p.sum(),
            v: DVector::from_iterator(z.a.len(), z.a.iter().map(|x| x.sum())),
        }
    }

    /// `Q x + q - A^T z`.
    fn dual_residual(&self, x: &Prim, z: &Cons) -> Prim {
        let at = self.apply_at(z);
        Prim {
            d: &x.d * self.mu - at.d,
            w: 1.0 - at.w,
            v: at.v.map(|s| 1.0 - s),
        }
    }

    fn primal_residual(&self, p: &Point) -> Cons {
        let ax = self.apply_a(&p.x);
        ax.zip(&p.s, |a, s| a - s).zip(&self.c, |a, c| a - c)
    }
}

/// Factored normal matrix `Q + A^T (Z/S) A` for one iterate.
struct Normal {
    blocks: Vec<Cholesky<f64, Dyn>>,
    /// `B^-1 (-g_j, 0)` per plane.
    w_cols: Vec<(DVector<f64>, DVector<f64>)>,
    /// `S + Theta^-1`.
    h: Cholesky<f64, Dyn>,
    h_inv_ones: DVector<f64>,
    ones_h_inv_ones: f64,
}

impl Normal {
    fn new(pr: &Problem<'_>, p: &Point) -> Option<Self> {
        let layout = &pr.layout;
        let mut blocks = Vec::with_capacity(layout.len());
        for i in 0..layout.len() {
            let rows = layout.rows[i];
            let dim = rows.ncols();
            let dvec = p.z.a[i].component_div(&p.s.a[i]);
            let mut scaled = rows.clone();
            for (mut row, &s) in scaled.row_iter_mut().zip(dvec.iter()) {
                row *= s;
            }
            let mut b = DMatrix::zeros(dim + 1, dim + 1);
            let mut dd = b.view_mut((0, 0), (dim, dim));
            dd.gemm_tr(1.0, rows, &scaled, 0.0);
            for k in 0..dim {
                dd[(k, k)] += pr.mu;
            }
            let col: DVector<f64> = -scaled.row_sum().transpose();
            b.view_mut((0, dim), (dim, 1)).copy_from(&col);
            b.view_mut((dim, 0), (1, dim)).copy_from(&col.transpose());
            b[(dim, dim)] = dvec.sum();
            blocks.push(Cholesky::new(b)?);
        }
        let mut normal = Self {
            blocks,
            w_cols: Vec::new(),
            h: Cholesky::new(DMatrix::identity(1, 1))?,
            h_inv_ones: DVector::zeros(0),
            ones_h_inv_ones: 0.0,
        };
        let nv = layout.len();
        normal.w_cols = pr
            .planes
            .iter()
            .map(|pl| normal.block_solve(layout, &(-pl.gradient), &DVector::zeros(nv)))
            .collect();
        let r = pr.planes.len();
        let mut h = DMatrix::from_fn(r, r, |j, k| -pr.planes[j].gradient.dot(&normal.w_cols[k].0));
        for j in 0..r {
            h[(j, j)] += p.s.p[j] / p.z.p[j];
        }
        h = (&h + h.transpose()) * 0.5;
        normal.h = Cholesky::new(h)?;
        normal.h_inv_ones = normal.h.solve(&DVector::from_element(r, 1.0));
        normal.ones_h_inv_ones = normal.h_inv_ones.sum();
        Some(normal)
    }

    fn block_solve(
        &self,
        layout: &Layout<'_>,
        rd: &DVector<f64>,
        rv: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut d = DVector::zeros(rd.len());
        let mut v = DVector::zeros(rv.len());
        for (i, chol) in self.blocks.iter().enumerate() {
            let r = &layout.ranges[i];
            let mut rhs = DVector::zeros(r.len() + 1);
            rhs.rows_mut(0, r.len()).copy_from(&rd.rows(r.start, r.len()));
            rhs[r.len()] = rv[i];
            chol.solve_mut(&mut rhs);
            d.rows_mut(r.start, r.len()).copy_from(&rhs.rows(0, r.len()));
            v[i] = rhs[r.len()];
        }
        (d, v)
    }

    // The block part B is singular in w, which only the planes touch; with
    // p_j = theta_j <u_j, x> the system becomes block solves plus the bordered
    // system [[S + Theta^-1, -1], [1^T, 0]].
    fn solve(&self, pr: &Problem<'_>, rhs: &Prim) -> Prim {
        let (mut d, mut v) = self.block_solve(&pr.layout, &rhs.d, &rhs.v);
        let t = DVector::from_iterator(
            pr.planes.len(),
            pr.planes.iter().map(|pl| -pl.gradient.dot(&d)),
        );
        let h_inv_t = self.h.solve(&t);
        let w = (rhs.w - h_inv_t.sum()) / self.ones_h_inv_ones;
        let p = h_inv_t + &self.h_inv_ones * w;
        for ((wd, wv), &pj) in self.w_cols.iter().zip(p.iter()) {
            d.axpy(-pj, wd, 1.0);
            v.axpy(-pj, wv, 1.0);
        }
        Prim { d, w, v }
    }
}

/// Solves `Q dx - A^T dz = -rd`, `A dx - ds = -rp`, `Z ds + S dz = rc`.
fn newton(pr: &Problem<'_>, normal: &Normal, p: &Point, rd: &Prim, rp: &Cons, rc: &Cons) -> Step {
    let rho = rc.zip(&p.z.zip(rp, |z, r| z * r), |a, b| a - b).zip(&p.s, |a, s| a / s);
    let mut rhs = pr.apply_at(&rho);
    rhs.axpy(-1.0, rd);
    let x = normal.solve(pr, &rhs);
    let s = pr.apply_a(&x).zip(rp, |a, r| a + r);
    let z = rc.zip(&p.z.zip(&s, |z, ds| z * ds), |a, b| a - b).zip(&p.s, |a, s| a / s);
    Step { x, s, z }
}

/// Newton step followed by refinement on the unreduced system, which
/// recovers the accuracy the normal equations lose near the solution.
fn refined_newton(
    pr: &Problem<'_>,
    normal: &Normal,
    p: &Point,
    rd: &Prim,
    rp: &Cons,
    rc: &Cons,
) -> Step {
    let mut step = newton(pr, normal, p, rd, rp, rc);
    for _ in 0..2 {
        let mut ed = pr.apply_at(&step.z);
        ed.d = &step.x.d * pr.mu - ed.d;
        ed.w = -ed.w;
        ed.v = -ed.v;
        ed.axpy(1.0, rd);
        let ep = pr
            .apply_a(&step.x)
            .zip(&step.s, |a, s| a - s)
            .zip(rp, |a, r| a + r);
        let ec = p
            .z
            .zip(&step.s, |z, ds| z * ds)
            .zip(&p.s.zip(&step.z, |s, dz| s * dz), |a, b| a + b)
            .zip(rc, |a, r| r - a);
        if ed.amax().max(ep.amax()).max(ec.amax()) == 0.0 {
            break;
        }
        let fix = newton(pr, normal, p, &ed, &ep, &ec);
        step.x.axpy(1.0, &fix.x);
        step.s.axpy(1.0, &fix.s);
        step.z.axpy(1.0, &fix.z);
    }
    step
}

fn normalize(z: &mut DVector<f64>) {
    z.apply(|a| *a = a.max(0.0));
    let total = z.sum();
    if total > 0.0 {
        *z /= total;
    }
}

/// Solves the trial-point problem. Fails only when the interior-point
/// iteration stalls with KKT residual above `settings.accept`.
pub fn solve_trial_qp(qp: &TrialQp<'_>, settings: &QpSettings) -> Result<QpSolution> {
    let blocks = qp.blocks;
    let b = qp.center.len();
    if b != blocks.total_constraints() {
        return Err(Error::Dimension(format!(
            "center of length {b} for {} constraints",
            blocks.total_constraints()
        )));
    }
    if qp.planes.is_empty() || qp.planes.iter().any(|p| p.gradient.len() != b) {
        return Err(Error::Dimension("trial QP needs planes of matching length".into()));
    }
    let layout = Layout {
        ranges: (0..blocks.len()).map(|i| blocks.range(i)).collect(),
        rows: blocks.blocks().iter().map(|bl| bl.atom_rows()).collect(),
    };
    let c = Cons {
        p: DVector::from_iterator(qp.planes.len(), qp.planes.iter().map(|p| p.offset)),
        a: (0..layout.len())
            .map(|i| {
                let r = &layout.ranges[i];
                layout.rows[i] * qp.center.rows(r.start, r.len())
            })
            .collect(),
    };
    let pr = Problem {
        mu: qp.mu,
        planes: qp.planes,
        layout,
        c,
    };
    let n_con = pr.c.len() as f64;
    let scale = 1.0 + pr.c.amax();

    let mut p = {
        let x = Prim {
            d: DVector::zeros(b),
            w: pr.c.p.max(),
            v: DVector::from_iterator(pr.c.a.len(), pr.c.a.iter().map(|c| c.max())),
        };
        let s = pr.apply_a(&x).zip(&pr.c, |a, c| (a - c).max(1.0));
        let z = Cons {
            p: DVector::from_element(pr.c.p.len(), 1.0 / pr.c.p.len() as f64),
            a: pr
                .c
                .a
                .iter()
                .map(|c| DVector::from_element(c.len(), 1.0 / c.len() as f64))
                .collect(),
        };
        Point { x, s, z }
    };

    let mut iterations = 0;
    let mut best = (f64::INFINITY, p.clone());
    loop {
        let rd = pr.dual_residual(&p.x, &p.z);
        let rp = pr.primal_residual(&p);
        let gap = p.s.dot(&p.z) / n_con;
        let merit = (rp.amax() / scale).max(rd.amax()).max(gap);
        if merit < best.0 {
            best = (merit, p.clone());
        }
        if merit <= settings.tol || iterations >= settings.max_iterations || merit > 1e3 * best.0 {
            break;
        }
        iterations += 1;

        let Some(normal) = Normal::new(&pr, &p) else {
            break;
        };
        let sz = p.s.zip(&p.z, |s, z| s * z);
        let aff = refined_newton(&pr, &normal, &p, &rd, &rp, &sz.map(|v| -v));
        let a_aff = p.s.max_step(&aff.s).min(p.z.max_step(&aff.z)).min(1.0);
        let mut s_aff = p.s.clone();
        s_aff.axpy(a_aff, &aff.s);
        let mut z_aff = p.z.clone();
        z_aff.axpy(a_aff, &aff.z);
        let sigma = (s_aff.dot(&z_aff) / n_con / gap).clamp(0.0, 1.0).powi(3);
        // r_c = sigma gap - s z - ds_aff dz_aff
        let rc = sz
            .zip(&aff.s.zip(&aff.z, |a, b| a * b), |a, b| a + b)
            .map(|v| sigma * gap - v);
        let dir = refined_newton(&pr, &normal, &p, &rd, &rp, &rc);
        let a = (0.99 * p.s.max_step(&dir.s).min(p.z.max_step(&dir.z))).min(1.0);
        if a < 1e-14 {
            break;
        }
        p.x.axpy(a, &dir.x);
        p.s.axpy(a, &dir.s);
        p.z.axpy(a, &dir.z);
    }

    let solution = finish(&pr, qp, best.1, iterations);
    if solution.kkt_residual > settings.accept {
        return Err(Error::QpNotConverged {
            iterations,
            residual: solution.kkt_residual,
        });
    }
    Ok(solution)
}

// Projects the multipliers onto their simplices, recovers d from
// stationarity, replaces w and v by the exact maxima at that d and measures
// the remaining KKT residuals.
fn finish(pr: &Problem<'_>, qp: &TrialQp<'_>, p: Point, iterations: usize) -> QpSolution {
    let mut z = p.z;
    normalize(&mut z.p);
    z.a.iter_mut().for_each(normalize);
    let x = Prim {
        d: pr.apply_at(&z).d / pr.mu,
        w: 0.0,
        v: DVector::zeros(z.a.len()),
    };
    // Rows at (d, 0, 0) are -<g, d>; the constraint values are c minus them.
    let values = pr.c.zip(&pr.apply_a(&x), |c, a| c - a);
    let w = values.p.max();
    let v = DVector::from_iterator(values.a.len(), values.a.iter().map(|a| a.max()));
    let x = Prim { w, v, ..x };

    // Complementarity is measured relative to the size of the constraint values.
    let scale = 1.0 + values.amax();
    let mut comp = 0.0f64;
    for (&a, &val) in z.p.iter().zip(values.p.iter()) {
        comp = comp.max(a * (w - val));
    }
    for (i, zi) in z.a.iter().enumerate() {
        for (&l, &val) in zi.iter().zip(values.a[i].iter()) {
            comp = comp.max(l * (x.v[i] - val));
        }
    }
    let kkt = pr.dual_residual(&x, &z).amax().max(comp / scale);

    let model = w + x.v.sum();
    QpSolution {
        y: qp.center + &x.d,
        w,
        objective: model + 0.5 * pr.mu * x.d.norm_squared(),
        v: x.v,
        model,
        plane_weights: z.p,
        atom_weights: z.a,
        kkt_residual: kkt,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::AtomCache;
    use crate::esc::EscBlock;
    use crate::graph::{VertexSubset, WeightedGraph};
    use crate::problem::Problem as Kind;

    fn k2_block() -> EscSet {
        let g = WeightedGraph::complete(2);
        let mut set = EscSet::new(Kind::MaxCut);
        set.push(EscBlock::new(Kind::MaxCut, &g, VertexSubset::full(2), &AtomCache::new()).unwrap())
            .unwrap();
        set
    }

    #[test]
    fn single_plane_without_blocks_is_a_proximal_step() {
        let blocks = EscSet::new(Kind::MaxCut);
        let center = DVector::zeros(0);
        let g = DVector::zeros(0);
        let planes = [Plane {
            offset: 3.0,
            gradient: &g,
        }];
        let sol = solve_trial_qp(
            &TrialQp {
                mu: 1.0,
                center: &center,
                planes: &planes,
                blocks: &blocks,
            },
            &QpSettings::default(),
        )
        .unwrap();
        assert!((sol.model - 3.0).abs() < 1e-9);
    }

    #[test]
    fn one_plane_one_cut_block_matches_hand_solution() {
        // min 2d + |d| + d^2/2 has its minimizer at d = -1 with value -0.5.
        let blocks = k2_block();
        let center = DVector::zeros(1);
        let g = DVector::from_element(1, 2.0);
        let planes = [Plane {
            offset: 0.0,
            gradient: &g,
        }];
        let sol = solve_trial_qp(
            &TrialQp {
                mu: 1.0,
                center: &center,
                planes: &planes,
                blocks: &blocks,
            },
            &QpSettings::default(),
        )
        .unwrap();
        assert!((sol.y[0] + 1.0).abs() < 1e-8, "{}", sol.y[0]);
        assert!((sol.objective + 0.5).abs() < 1e-8);
        assert!((sol.v[0] - 1.0).abs() < 1e-8);
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn kink_keeps_the_center() {
        // 0.5 d + |d| + d^2/2 is minimized at d = 0.
        let blocks = k2_block();
        let center = DVector::zeros(1);
        let g = DVector::from_element(1, 0.5);
        let planes = [Plane {
            offset: 1.0,
            gradient: &g,
        }];
        let sol = solve_trial_qp(
            &TrialQp {
                mu: 1.0,
                center: &center,
                planes: &planes,
                blocks: &blocks,
            },
            &QpSettings::default(),
        )
        .unwrap();
        assert!(sol.y[0].abs() < 1e-8);
        assert!((sol.model - 1.0).abs() < 1e-8);
    }

    #[test]
    fn larger_mu_shortens_the_step() {
        let blocks = k2_block();
        let center = DVector::from_element(1, 0.3);
        let g1 = DVector::from_element(1, 3.0);
        let g2 = DVector::from_element(1, -0.5);
        let planes = [
            Plane {
                offset: 0.0,
                gradient: &g1,
            },
            Plane {
                offset: -0.4,
                gradient: &g2,
            },
        ];
        let mut last = f64::INFINITY;
        for mu in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let sol = solve_trial_qp(
                &TrialQp {
                    mu,
                    center: &center,
                    planes: &planes,
                    blocks: &blocks,
                },
                &QpSettings::default(),
            )
            .unwrap();
            let step = (&sol.y - &center).norm();
            assert!(step <= last + 1e-9);
            last = step;
        }
    }
}
